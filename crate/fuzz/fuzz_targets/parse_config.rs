#![no_main]

use inertial_cli::{emit_config, parse_config_str};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config_str(src) {
        let again = parse_config_str(&emit_config(&cfg)).expect("emitted configs parse");
        assert_eq!(emit_config(&again), emit_config(&cfg));
        let _ = cfg.violations();
    }
});
