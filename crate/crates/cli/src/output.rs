//! Runs a configuration and writes plot-ready files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use inertial_core::diagnostics::{apriori_monitor, convergence_study_with, edi_scan, BoundsReport, EDIRecord};
use inertial_core::stepper::step_count;
use inertial_core::validate::validate_assumptions_seeded;
use inertial_core::{run_with, ProblemSpec, SolverOptions, Trajectory};
use serde_json::{json, Map, Value};

use crate::config::{config_table, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Per-step Fenchel-Young gaps above this count as a failed minimization.
pub const FY_GAP_LIMIT: f64 = 1e-8;
pub const MAX_FRAMES: usize = 200;

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn csv_num(out: &mut String, x: f64) {
    if x.is_finite() {
        let _ = write!(out, "{x:.16e}");
    } else {
        let _ = write!(out, "{x}");
    }
}

fn csv_row(out: &mut String, head: &str, values: &[f64]) {
    out.push_str(head);
    for (i, x) in values.iter().enumerate() {
        if i > 0 || !head.is_empty() {
            out.push(',');
        }
        csv_num(out, *x);
    }
    out.push('\n');
}

pub fn trajectory_csv(traj: &Trajectory, records: &[EDIRecord]) -> String {
    let mut out = String::from("n,t,kinetic,energy,psi_accum,psi_star_accum,fy_gap,edi_residual\n");
    for r in records {
        let gap = if r.n == 0 { 0.0 } else { traj.reports[r.n - 1].fy_gap };
        csv_row(&mut out, &r.n.to_string(), &[r.t, r.kinetic, r.energy, r.psi_accum, r.psi_star_accum, gap, r.residual]);
    }
    out
}

pub fn edi_csv(records: &[EDIRecord]) -> String {
    let mut out = String::from("n,t,lhs,rhs,residual,tol,el_defect,slack,holds\n");
    for r in records {
        let mut line = String::new();
        csv_row(&mut line, &r.n.to_string(), &[r.t, r.lhs, r.rhs, r.residual, r.tol, r.el_defect, r.slack]);
        line.pop();
        let _ = writeln!(line, ",{}", u8::from(r.holds()));
        out.push_str(&line);
    }
    out
}

/// Frame indices: every `stride`-th node plus the last one.
pub fn frame_indices(steps: usize) -> Vec<usize> {
    let stride = steps.div_ceil(MAX_FRAMES - 1).max(1);
    let mut idx: Vec<usize> = (0..=steps).step_by(stride).collect();
    if *idx.last().expect("node 0 is always present") != steps {
        idx.push(steps);
    }
    idx
}

/// Nodal values including the two boundary zeros.
pub fn snapshots_csv(traj: &Trajectory) -> String {
    let nodes = traj.grid.n_nodes();
    let mut out = String::from("t");
    for i in 0..nodes {
        let _ = write!(out, ",u{i}");
    }
    out.push('\n');
    for n in frame_indices(traj.steps()) {
        let mut row = Vec::with_capacity(nodes + 1);
        row.push(traj.times[n]);
        row.push(0.0);
        row.extend_from_slice(&traj.u[n]);
        row.push(0.0);
        csv_row(&mut out, "", &row);
    }
    out
}

fn bounds_json(b: &BoundsReport) -> Value {
    json!({
        "sup_velocity": num(b.sup_velocity),
        "sup_kinetic": num(b.sup_kinetic),
        "sup_energy": num(b.sup_energy),
        "psi_total": num(b.psi_total),
        "psi_star_total": num(b.psi_star_total),
        "finite": b.finite,
    })
}

struct RunCheck {
    max_fy_gap: f64,
    max_edi_excess: f64,
    max_residual: f64,
    max_el_defect: f64,
    edi_violations: usize,
    first_violation: Option<usize>,
}

fn check_run(traj: &Trajectory, records: &[EDIRecord]) -> RunCheck {
    let violations: Vec<usize> = records.iter().filter(|r| !r.holds()).map(|r| r.n).collect();
    RunCheck {
        max_fy_gap: traj.reports.iter().map(|r| r.fy_gap).fold(0.0, f64::max),
        max_edi_excess: records.iter().map(|r| r.residual - r.tol).fold(f64::NEG_INFINITY, f64::max),
        max_residual: records.iter().map(|r| r.residual).fold(f64::NEG_INFINITY, f64::max),
        max_el_defect: records.iter().map(|r| r.el_defect).fold(0.0, f64::max),
        edi_violations: violations.len(),
        first_violation: violations.first().copied(),
    }
}

impl RunCheck {
    fn passed(&self) -> bool {
        self.edi_violations == 0 && self.max_fy_gap <= FY_GAP_LIMIT
    }

    fn json(&self) -> Value {
        json!({
            "max_fy_gap": num(self.max_fy_gap),
            "max_edi_residual": num(self.max_residual),
            "max_edi_excess": num(self.max_edi_excess),
            "max_el_defect": num(self.max_el_defect),
            "edi_violations": self.edi_violations,
            "first_edi_violation": self.first_violation,
        })
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    fs::write(dir.join(name), contents)
}

fn write_summary(dir: &Path, summary: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(summary).expect("json values serialize");
    text.push('\n');
    write_file(dir, "summary.json", &text)
}

struct Study {
    summary: Map<String, Value>,
    passed: bool,
}

fn simulate(cfg: &RunConfig, spec: &ProblemSpec, dir: &Path) -> Result<Study, String> {
    let opts = SolverOptions::default();
    let mut s = Map::new();
    let mut passed = true;

    let report = validate_assumptions_seeded(spec, cfg.samples, cfg.seed).map_err(|e| e.to_string())?;
    let failures: Vec<&str> = report.failures().iter().map(|c| c.name).collect();
    passed &= failures.is_empty();
    s.insert(
        "validation".into(),
        json!({
            "passed": report.passed(),
            "failures": failures,
            "mu": num(report.mu),
            "tau_max": num(spec.tau_max()),
        }),
    );

    let (runs, table) = if cfg.halvings > 0 {
        let (table, runs) = convergence_study_with(spec, cfg.tau, cfg.halvings, &opts).map_err(|e| e.to_string())?;
        (runs, Some(table))
    } else {
        (vec![run_with(spec, cfg.tau, &opts).map_err(|e| e.to_string())?], None)
    };
    let base = &runs[0];
    let records = edi_scan(spec, base).map_err(|e| e.to_string())?;
    let check = check_run(base, &records);
    let bounds = apriori_monitor(spec, base);
    passed &= check.passed() && bounds.finite;
    s.insert("steps".into(), json!(base.steps()));
    s.insert("apriori".into(), bounds_json(&bounds));
    s.insert("residuals".into(), check.json());

    if cfg.emit.trajectory {
        write_file(dir, "trajectory.csv", &trajectory_csv(base, &records)).map_err(|e| e.to_string())?;
    }
    if cfg.emit.edi {
        write_file(dir, "edi.csv", &edi_csv(&records)).map_err(|e| e.to_string())?;
    }
    if cfg.emit.snapshots {
        write_file(dir, "snapshots.csv", &snapshots_csv(base)).map_err(|e| e.to_string())?;
    }

    if let Some(table) = table {
        let mut levels = Vec::new();
        for (k, traj) in runs.iter().enumerate() {
            let recs = edi_scan(spec, traj).map_err(|e| e.to_string())?;
            let c = check_run(traj, &recs);
            let b = apriori_monitor(spec, traj);
            passed &= c.passed() && b.finite;
            levels.push(json!({ "tau": num(table.taus[k]), "apriori": bounds_json(&b), "residuals": c.json() }));
        }
        let rates: Vec<Value> = table.rates.iter().map(|r| num(*r)).collect();
        s.insert("convergence".into(), json!({ "levels": levels, "observed_rates": rates }));
        if cfg.emit.convergence {
            let mut out = String::from("tau,sup_U_dev,sup_V_dev,cauchy_diff,observed_rate\n");
            for k in 0..table.taus.len() {
                let cauchy = table.cauchy.get(k).copied().unwrap_or(f64::NAN);
                let rate = if k == 0 { f64::NAN } else { table.rates.get(k - 1).copied().unwrap_or(f64::NAN) };
                csv_row(&mut out, "", &[table.taus[k], table.sup_u_dev[k], table.sup_v_dev[k], cauchy, rate]);
            }
            write_file(dir, "convergence.csv", &out).map_err(|e| e.to_string())?;
        }
    }
    Ok(Study { summary: s, passed })
}

/// Runs `cfg` and writes its outputs; the returned value is the process exit status.
pub fn run_and_emit(cfg: &RunConfig) -> i32 {
    if let Err(e) = cfg.validate() {
        eprintln!("{e}");
        return EXIT_CONFIG;
    }
    match cfg.build_spec() {
        Ok(spec) => emit_for_spec(cfg, &spec),
        Err(e) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
    }
}

/// Like [`run_and_emit`] but with a prebuilt problem; `cfg` supplies the
/// step, study and output settings.
pub fn emit_for_spec(cfg: &RunConfig, spec: &ProblemSpec) -> i32 {
    let dir = cfg.out_dir.as_path();
    if let Err(e) = fs::create_dir_all(dir) {
        eprintln!("cannot create output directory {}: {e}", dir.display());
        return EXIT_CONFIG;
    }
    let steps = step_count(spec.horizon, cfg.tau).unwrap_or(0);
    let start = Instant::now();
    let outcome = simulate(cfg, spec, dir);
    let wall = start.elapsed().as_secs_f64();

    let config = serde_json::to_value(config_table(cfg)).expect("toml tables map to json");
    let mut summary = Map::new();
    summary.insert("model".into(), json!(spec.name));
    summary.insert("tau".into(), num(cfg.tau));
    summary.insert("config".into(), config);
    summary.insert("steps".into(), json!(steps));
    let passed = match outcome {
        Ok(study) => {
            summary.extend(study.summary);
            summary.insert("error".into(), Value::Null);
            study.passed
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            summary.insert("error".into(), json!(e));
            false
        }
    };
    summary.insert("passed".into(), json!(passed));
    if let Err(e) = write_summary(dir, &Value::Object(summary)) {
        eprintln!("cannot write summary.json: {e}");
        return EXIT_INVARIANT;
    }
    let timing = format!("{{\n  \"wall_time_s\": {}\n}}\n", num(wall));
    if let Err(e) = write_file(dir, "timing.json", &timing) {
        eprintln!("cannot write timing.json: {e}");
    }
    if passed {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_capped_and_keep_the_end() {
        for steps in [1, 10, 199, 200, 1000, 1023, 5000] {
            let idx = frame_indices(steps);
            assert!(idx.len() <= MAX_FRAMES, "{steps}: {}", idx.len());
            assert_eq!(idx[0], 0);
            assert_eq!(*idx.last().unwrap(), steps);
        }
        assert_eq!(frame_indices(10).len(), 11);
    }

    #[test]
    fn csv_numbers_have_seventeen_digits() {
        let mut s = String::new();
        csv_num(&mut s, 0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn non_finite_json_numbers_become_strings() {
        assert_eq!(num(f64::INFINITY), json!("inf"));
        assert_eq!(num(f64::NAN), json!("nan"));
        assert_eq!(num(1.5), json!(1.5));
    }
}
