//! Flat TOML run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use inertial_core::models::{
    build_linear_wave, build_linear_wave_gradient, build_p1, build_p2, build_p3, p3_stick_state, P1Params, P2Params,
    P3Params,
};
use inertial_core::problem::ForceFn;
use inertial_core::{BoundaryCondition, ProblemSpec, SpatialGrid};
use toml::{Spanned, Value};

pub const DEFAULTS_HELP: &str = "\
Configuration keys (flat TOML):
  model        p1 | p2 | p3 | linear_wave          (required)
  tau          time step                            [0.01]
  halvings     extra runs at tau/2^k for a study    [0]
  out_dir      output directory                     [\"out\"]
  seed         seed of the sampled assumption check [1]
  samples      number of validation samples          [64]
  horizon      final time T                         [1.0]
  grid         number of grid nodes                 [65]
  emit         subset of [\"trajectory\", \"edi\", \"convergence\", \"snapshots\"]
                                                    [all but edi]
p1:          rho [1.0]  nu [0.05]  mu [0.1]  alpha [0.5]  amp [0.3]
p2:          q [2.0]  p [1.5]  b_scale [1.0]  amp [0.5]  force_amp [0.0]  force_freq [1.0]
p3:          q [2.0]  e_min [1.0]  e_var [0.5]  kappa [1.0]  force_amp [2.0]  force_freq [1.0]
             init = zero | stick [zero]  stick_level [0.5]  kick [0.0]
linear_wave: nu [1.0]  damping = l2 | gradient [l2]";

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Parse { line: Option<usize>, key: Option<String>, message: String },
    Validation(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            ConfigError::Parse { line, key, message } => {
                if let Some(l) = line {
                    write!(f, "line {l}: ")?;
                }
                if let Some(k) = key {
                    write!(f, "key `{k}`: ")?;
                }
                f.write_str(message)
            }
            ConfigError::Validation(items) => {
                writeln!(f, "invalid configuration:")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "  - {item}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmitFlags {
    pub trajectory: bool,
    pub edi: bool,
    pub convergence: bool,
    pub snapshots: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self { trajectory: true, edi: false, convergence: true, snapshots: true }
    }
}

const EMIT_NAMES: [&str; 4] = ["trajectory", "edi", "convergence", "snapshots"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum P3Init {
    Zero,
    Stick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Damping {
    L2,
    Gradient,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    P1 { rho: f64, nu: f64, mu: f64, alpha: f64, amp: f64 },
    P2 { q: f64, p: f64, b_scale: f64, amp: f64, force_amp: f64, force_freq: f64 },
    P3 { q: f64, e_min: f64, e_var: f64, kappa: f64, force_amp: f64, force_freq: f64, init: P3Init, stick_level: f64, kick: f64 },
    LinearWave { nu: f64, damping: Damping },
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::P1 { .. } => "p1",
            ModelConfig::P2 { .. } => "p2",
            ModelConfig::P3 { .. } => "p3",
            ModelConfig::LinearWave { .. } => "linear_wave",
        }
    }

    fn keys(model: &str) -> Option<&'static [&'static str]> {
        Some(match model {
            "p1" => &["rho", "nu", "mu", "alpha", "amp"],
            "p2" => &["q", "p", "b_scale", "amp", "force_amp", "force_freq"],
            "p3" => &["q", "e_min", "e_var", "kappa", "force_amp", "force_freq", "init", "stick_level", "kick"],
            "linear_wave" => &["nu", "damping"],
            _ => return None,
        })
    }
}

const COMMON_KEYS: [&str; 10] =
    ["model", "tau", "halvings", "out_dir", "seed", "samples", "horizon", "grid", "emit", "emit_edi"];
const MODELS: [&str; 4] = ["p1", "p2", "p3", "linear_wave"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub tau: f64,
    pub halvings: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub samples: usize,
    pub horizon: f64,
    pub grid: usize,
    pub emit: EmitFlags,
}

struct Entries<'a> {
    src: &'a str,
    map: BTreeMap<String, (Value, usize)>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl Entries<'_> {
    fn err(&self, key: &str, line: usize, message: impl Into<String>) -> ConfigError {
        ConfigError::Parse { line: Some(line), key: Some(key.to_string()), message: message.into() }
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((Value::Float(x), _)) => Ok(x),
            Some((Value::Integer(i), _)) => Ok(i as f64),
            Some((_, line)) => Err(self.err(key, line, "expected a number")),
        }
    }

    fn take_uint(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((Value::Integer(i), line)) => {
                u64::try_from(i).map_err(|_| self.err(key, line, "expected a nonnegative integer"))
            }
            Some((_, line)) => Err(self.err(key, line, "expected a nonnegative integer")),
        }
    }

    fn take_usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        let line = self.map.get(key).map(|e| e.1);
        let v = self.take_uint(key, default as u64)?;
        usize::try_from(v).map_err(|_| self.err(key, line.unwrap_or(0), "integer out of range"))
    }

    fn take_str(&mut self, key: &str) -> Result<Option<(String, usize)>, ConfigError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((Value::String(s), line)) => Ok(Some((s, line))),
            Some((_, line)) => Err(self.err(key, line, "expected a string")),
        }
    }

    fn take_choice<T: Copy>(&mut self, key: &str, default: T, options: &[(&str, T)]) -> Result<T, ConfigError> {
        match self.take_str(key)? {
            None => Ok(default),
            Some((s, line)) => options.iter().find(|(name, _)| *name == s).map(|(_, v)| *v).ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(key, line, format!("unknown value \"{s}\", expected one of {}", names.join(", ")))
            }),
        }
    }
}

fn suggest<'a>(key: &str, candidates: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .map(|c| (strsim::damerau_levenshtein(key, c), c))
        .filter(|(d, c)| *d <= 2 && *d < c.len())
        .min()
        .map(|(_, c)| c)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_config_str(&text)
}

pub fn parse_config_str(src: &str) -> Result<RunConfig, ConfigError> {
    let raw: BTreeMap<Spanned<String>, Spanned<Value>> = toml::from_str(src).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(src, s.start)),
        key: None,
        message: e.message().trim().to_string(),
    })?;
    let map = raw
        .into_iter()
        .map(|(k, v)| {
            let line = line_of(src, k.span().start);
            (k.into_inner(), (v.into_inner(), line))
        })
        .collect();
    let mut e = Entries { src, map };

    let model_name = match e.take_str("model")? {
        Some((m, line)) => {
            if !MODELS.contains(&m.as_str()) {
                let hint = suggest(&m, MODELS.iter().copied()).map(|s| format!(" (did you mean \"{s}\"?)")).unwrap_or_default();
                return Err(e.err("model", line, format!("unknown model \"{m}\"{hint}")));
            }
            m
        }
        None => {
            return Err(ConfigError::Parse {
                line: None,
                key: Some("model".into()),
                message: "missing required key".into(),
            })
        }
    };
    let model_keys = ModelConfig::keys(&model_name).expect("model checked above");

    // unknown keys first so typos are reported before type errors
    let mut unknown: Vec<(usize, String)> = e
        .map
        .iter()
        .filter(|(k, _)| !COMMON_KEYS.contains(&k.as_str()) && !model_keys.contains(&k.as_str()))
        .map(|(k, (_, line))| (*line, k.clone()))
        .collect();
    unknown.sort();
    if let Some((line, key)) = unknown.into_iter().next() {
        let all = COMMON_KEYS.iter().chain(model_keys.iter()).copied();
        let hint = match suggest(&key, all) {
            Some(s) => format!("unknown key (did you mean `{s}`?)"),
            None => format!("unknown key for model {model_name}"),
        };
        return Err(e.err(&key, line, hint));
    }

    let tau = e.take_f64("tau", 0.01)?;
    let halvings = e.take_usize("halvings", 0)?;
    let out_dir = PathBuf::from(e.take_str("out_dir")?.map(|s| s.0).unwrap_or_else(|| "out".into()));
    let seed = e.take_uint("seed", 1)?;
    let samples = e.take_usize("samples", 64)?;
    let horizon = e.take_f64("horizon", 1.0)?;
    let grid = e.take_usize("grid", 65)?;
    let mut emit = EmitFlags::default();
    if let Some((value, line)) = e.map.remove("emit") {
        let items = match value {
            Value::Array(items) => items,
            _ => return Err(e.err("emit", line, "expected an array of strings")),
        };
        emit = EmitFlags { trajectory: false, edi: false, convergence: false, snapshots: false };
        for item in items {
            match item.as_str() {
                Some("trajectory") => emit.trajectory = true,
                Some("edi") => emit.edi = true,
                Some("convergence") => emit.convergence = true,
                Some("snapshots") => emit.snapshots = true,
                Some(other) => {
                    let hint = suggest(other, EMIT_NAMES.iter().copied())
                        .map(|s| format!(" (did you mean \"{s}\"?)"))
                        .unwrap_or_default();
                    return Err(e.err("emit", line, format!("unknown output \"{other}\"{hint}")));
                }
                None => return Err(e.err("emit", line, "expected an array of strings")),
            }
        }
    }
    if let Some((value, line)) = e.map.remove("emit_edi") {
        match value {
            Value::Boolean(b) => emit.edi = b,
            _ => return Err(e.err("emit_edi", line, "expected a boolean")),
        }
    }

    let model = match model_name.as_str() {
        "p1" => {
            let d = P1Params::default();
            ModelConfig::P1 {
                rho: e.take_f64("rho", d.rho)?,
                nu: e.take_f64("nu", d.nu)?,
                mu: e.take_f64("mu", d.mu)?,
                alpha: e.take_f64("alpha", d.alpha)?,
                amp: e.take_f64("amp", d.amp)?,
            }
        }
        "p2" => {
            let d = P2Params::default();
            ModelConfig::P2 {
                q: e.take_f64("q", d.q)?,
                p: e.take_f64("p", d.p)?,
                b_scale: e.take_f64("b_scale", d.b_scale)?,
                amp: e.take_f64("amp", d.amp)?,
                force_amp: e.take_f64("force_amp", 0.0)?,
                force_freq: e.take_f64("force_freq", 1.0)?,
            }
        }
        "p3" => {
            let d = P3Params::default();
            ModelConfig::P3 {
                q: e.take_f64("q", d.q)?,
                e_min: e.take_f64("e_min", d.e_min)?,
                e_var: e.take_f64("e_var", d.e_var)?,
                kappa: e.take_f64("kappa", d.kappa)?,
                force_amp: e.take_f64("force_amp", 2.0)?,
                force_freq: e.take_f64("force_freq", 1.0)?,
                init: e.take_choice("init", P3Init::Zero, &[("zero", P3Init::Zero), ("stick", P3Init::Stick)])?,
                stick_level: e.take_f64("stick_level", 0.5)?,
                kick: e.take_f64("kick", 0.0)?,
            }
        }
        _ => ModelConfig::LinearWave {
            nu: e.take_f64("nu", 1.0)?,
            damping: e.take_choice("damping", Damping::L2, &[("l2", Damping::L2), ("gradient", Damping::Gradient)])?,
        },
    };
    debug_assert!(e.map.is_empty(), "unconsumed keys in {}", e.src.len());
    Ok(RunConfig { model, tau, halvings, out_dir, seed, samples, horizon, grid, emit })
}

fn float(x: f64) -> Value {
    Value::Float(x)
}

/// Canonical TOML text; parsing it back yields the same configuration.
pub fn emit_config(cfg: &RunConfig) -> String {
    toml::to_string(&config_table(cfg)).expect("flat tables always serialize")
}

/// Every key with its effective value.
pub fn config_table(cfg: &RunConfig) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert("model".into(), Value::String(cfg.model.name().into()));
    t.insert("tau".into(), float(cfg.tau));
    t.insert("halvings".into(), Value::Integer(cfg.halvings as i64));
    t.insert("out_dir".into(), Value::String(cfg.out_dir.to_string_lossy().into_owned()));
    t.insert("seed".into(), Value::Integer(cfg.seed as i64));
    t.insert("samples".into(), Value::Integer(cfg.samples as i64));
    t.insert("horizon".into(), float(cfg.horizon));
    t.insert("grid".into(), Value::Integer(cfg.grid as i64));
    let flags = [cfg.emit.trajectory, cfg.emit.edi, cfg.emit.convergence, cfg.emit.snapshots];
    let emit = EMIT_NAMES.iter().zip(flags).filter(|(_, on)| *on).map(|(n, _)| Value::String((*n).into())).collect();
    t.insert("emit".into(), Value::Array(emit));
    let mut put = |k: &str, v: Value| {
        t.insert(k.into(), v);
    };
    match &cfg.model {
        ModelConfig::P1 { rho, nu, mu, alpha, amp } => {
            put("rho", float(*rho));
            put("nu", float(*nu));
            put("mu", float(*mu));
            put("alpha", float(*alpha));
            put("amp", float(*amp));
        }
        ModelConfig::P2 { q, p, b_scale, amp, force_amp, force_freq } => {
            put("q", float(*q));
            put("p", float(*p));
            put("b_scale", float(*b_scale));
            put("amp", float(*amp));
            put("force_amp", float(*force_amp));
            put("force_freq", float(*force_freq));
        }
        ModelConfig::P3 { q, e_min, e_var, kappa, force_amp, force_freq, init, stick_level, kick } => {
            put("q", float(*q));
            put("e_min", float(*e_min));
            put("e_var", float(*e_var));
            put("kappa", float(*kappa));
            put("force_amp", float(*force_amp));
            put("force_freq", float(*force_freq));
            let init = match init {
                P3Init::Zero => "zero",
                P3Init::Stick => "stick",
            };
            put("init", Value::String(init.into()));
            put("stick_level", float(*stick_level));
            put("kick", float(*kick));
        }
        ModelConfig::LinearWave { nu, damping } => {
            put("nu", float(*nu));
            let d = match damping {
                Damping::L2 => "l2",
                Damping::Gradient => "gradient",
            };
            put("damping", Value::String(d.into()));
        }
    }
    t
}

fn sine_load(grid: &SpatialGrid, amp: f64, freq: f64) -> (ForceFn, ForceFn) {
    use std::f64::consts::PI;
    let shape = grid.from_fn(|x| (PI * x).sin()).into_vec();
    let s2 = shape.clone();
    let w = 2.0 * PI * freq;
    (
        Arc::new(move |t| shape.iter().map(|s| amp * s * (w * t).sin()).collect()),
        Arc::new(move |t| s2.iter().map(|s| amp * w * s * (w * t).cos()).collect()),
    )
}

impl RunConfig {
    /// Builds the problem described by the configuration.
    pub fn build_spec(&self) -> inertial_core::Result<ProblemSpec> {
        let unit = |bc| SpatialGrid::uniform(self.grid, 1.0, bc);
        match &self.model {
            ModelConfig::P1 { rho, nu, mu, alpha, amp } => build_p1(&P1Params {
                rho: *rho,
                nu: *nu,
                mu: *mu,
                alpha: *alpha,
                amp: *amp,
                n_nodes: self.grid,
                horizon: self.horizon,
            }),
            ModelConfig::P2 { q, p, b_scale, amp, force_amp, force_freq } => {
                let grid = unit(BoundaryCondition::Dirichlet0)?;
                let force = (*force_amp != 0.0).then(|| sine_load(&grid, *force_amp, *force_freq).0);
                build_p2(&P2Params {
                    q: *q,
                    p: *p,
                    b_scale: *b_scale,
                    amp: *amp,
                    force,
                    n_nodes: self.grid,
                    horizon: self.horizon,
                    ..P2Params::default()
                })
            }
            ModelConfig::P3 { q, e_min, e_var, kappa, force_amp, force_freq, init, stick_level, kick } => {
                let grid = unit(BoundaryCondition::Dirichlet0)?;
                let force = (*force_amp != 0.0).then(|| sine_load(&grid, *force_amp, *force_freq));
                let v0 = (*kick != 0.0).then(|| grid.from_fn(|x| kick * (std::f64::consts::PI * x).sin()));
                let params = P3Params {
                    q: *q,
                    e_min: *e_min,
                    e_var: *e_var,
                    kappa: *kappa,
                    force,
                    u0: None,
                    v0,
                    n_nodes: self.grid,
                    horizon: self.horizon,
                };
                let mut spec = build_p3(&params)?;
                if *init == P3Init::Stick {
                    spec.u0 = p3_stick_state(&spec, *stick_level)?;
                }
                Ok(spec)
            }
            ModelConfig::LinearWave { nu, damping } => {
                let grid = unit(BoundaryCondition::Dirichlet0)?;
                let built = match damping {
                    Damping::L2 => build_linear_wave(*nu, &grid, self.horizon)?,
                    Damping::Gradient => build_linear_wave_gradient(*nu, &grid, self.horizon)?,
                };
                Ok(built.0)
            }
        }
    }

    /// Every violated constraint, including the step-size bound of the built model.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.tau.is_finite() && self.tau > 0.0) {
            v.push(format!("tau = {} must be positive", self.tau));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            v.push(format!("horizon = {} must be positive", self.horizon));
        }
        if self.grid < 3 {
            v.push(format!("grid = {} needs at least 3 nodes", self.grid));
        }
        if self.grid > 100_000 {
            v.push(format!("grid = {} exceeds 100000 nodes", self.grid));
        }
        if self.halvings > 12 {
            v.push(format!("halvings = {} exceeds 12", self.halvings));
        }
        if self.samples == 0 {
            v.push("samples must be at least 1".into());
        }
        if self.out_dir.as_os_str().is_empty() {
            v.push("out_dir must not be empty".into());
        }
        if let ModelConfig::P3 { init: P3Init::Stick, force_amp, stick_level, .. } = &self.model {
            if *force_amp != 0.0 {
                v.push("init = \"stick\" needs force_amp = 0".into());
            }
            if !(*stick_level > 0.0 && *stick_level <= 1.0) {
                v.push(format!("stick_level = {stick_level} must lie in (0, 1]"));
            }
        }
        if !v.is_empty() {
            return v;
        }
        match self.build_spec() {
            Err(e) => v.push(format!("model {}: {e}", self.model.name())),
            Ok(spec) => {
                let tau_max = spec.tau_max();
                if self.tau > tau_max * (1.0 + 1e-12) {
                    let l = spec.energy.lambda_conv;
                    if l > 0.0 {
                        v.push(format!(
                            "tau = {} exceeds the unique-minimizer bound tau_max = {tau_max} \
                             (min(1/(2*lambda), 1/(2*sqrt(lambda))) with lambda = {l})",
                            self.tau
                        ));
                    } else {
                        v.push(format!("tau = {} exceeds the horizon {}", self.tau, self.horizon));
                    }
                }
                if inertial_core::stepper::step_count(self.horizon, self.tau).is_err() {
                    v.push(format!("tau = {} does not divide the horizon {}", self.tau, self.horizon));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str("model = \"p3\"\ntau = 0.01\n").unwrap();
        assert_eq!(cfg.grid, 65);
        assert_eq!(cfg.horizon, 1.0);
        match cfg.model {
            ModelConfig::P3 { q, .. } => assert_eq!(q, 2.0),
            _ => panic!("wrong model"),
        }
        cfg.validate().unwrap();
    }

    #[test]
    fn oversized_step_names_the_bound() {
        let cfg = parse_config_str("model = \"p3\"\ntau = 0.5\n").unwrap();
        let err = cfg.validate().unwrap_err();
        let text = err.to_string();
        assert!(text.contains("tau_max = 0.125"), "{text}");
    }

    #[test]
    fn typo_gets_a_suggestion() {
        let err = parse_config_str("model = \"p3\"\n\ntaus = 0.01\n").unwrap_err();
        match err {
            ConfigError::Parse { line, key, message } => {
                assert_eq!(line, Some(3));
                assert_eq!(key.as_deref(), Some("taus"));
                assert!(message.contains("`tau`"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keys_of_other_models_are_rejected() {
        assert!(parse_config_str("model = \"linear_wave\"\nkappa = 1.0\n").is_err());
        assert!(parse_config_str("model = \"p4\"\n").is_err());
        assert!(parse_config_str("tau = 0.1\n").is_err());
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_config_str("model = \"p1\"\ntau = = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: Some(2), .. }), "{err:?}");
    }

    #[test]
    fn wrong_types_are_parse_errors() {
        let err = parse_config_str("model = \"p1\"\ntau = \"big\"\n").unwrap_err();
        assert!(err.to_string().contains("expected a number"));
        assert!(parse_config_str("model = \"p1\"\nhalvings = -1\n").is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let cfg = parse_config_str("model = \"p1\"\ntau = -1\nhorizon = 0\ngrid = 2\n").unwrap();
        match cfg.validate().unwrap_err() {
            ConfigError::Validation(items) => assert_eq!(items.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn emit_then_parse_is_identity() {
        for src in [
            "model = \"p1\"\nalpha = 0.25\n",
            "model = \"p2\"\nq = 3\nemit = [\"edi\"]\n",
            "model = \"p3\"\ninit = \"stick\"\nforce_amp = 0\nseed = 7\n",
            "model = \"linear_wave\"\ndamping = \"gradient\"\ntau = 1e-3\nhalvings = 3\n",
        ] {
            let cfg = parse_config_str(src).unwrap();
            let text = emit_config(&cfg);
            assert_eq!(parse_config_str(&text).unwrap(), cfg, "{text}");
            assert_eq!(emit_config(&parse_config_str(&text).unwrap()), text);
        }
    }
}
