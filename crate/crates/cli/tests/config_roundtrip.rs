use std::fs;
use std::path::Path;

use inertial_cli::{emit_config, parse_config_str};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(data: &[u8]) -> bool {
    let Ok(src) = std::str::from_utf8(data) else {
        return false;
    };
    match parse_config_str(src) {
        Ok(cfg) => {
            let emitted = emit_config(&cfg);
            let again = parse_config_str(&emitted).unwrap_or_else(|e| panic!("{emitted}\n{e}"));
            assert_eq!(emit_config(&again), emitted);
            let _ = cfg.violations();
            true
        }
        Err(e) => {
            assert!(!e.to_string().is_empty());
            false
        }
    }
}

fn corpus() -> Vec<Vec<u8>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/parse_config");
    let mut seeds: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    seeds.sort();
    seeds.iter().map(|p| fs::read(p).unwrap()).collect()
}

#[test]
fn corpus_seeds_round_trip() {
    let seeds = corpus();
    assert!(seeds.len() >= 5);
    let parsed = seeds.iter().filter(|s| check(s)).count();
    assert!(parsed >= 5 && parsed < seeds.len());
}

#[test]
fn mutated_seeds_never_panic() {
    let seeds = corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphabet = b"=\"[],.#\n 0123456789eE-+_abcdefghijklmnopqrstuvwxyz";
    for _ in 0..4000 {
        let mut data = seeds[rng.random_range(0..seeds.len())].clone();
        for _ in 0..rng.random_range(1..4) {
            let at = rng.random_range(0..=data.len());
            match rng.random_range(0..3) {
                0 if at < data.len() => {
                    data.remove(at);
                }
                1 if at < data.len() => data[at] = alphabet[rng.random_range(0..alphabet.len())],
                _ => data.insert(at, alphabet[rng.random_range(0..alphabet.len())]),
            }
        }
        check(&data);
    }
}
