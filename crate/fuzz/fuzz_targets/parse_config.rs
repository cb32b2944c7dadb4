#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = wellbem::config::parse_config(text) {
        // a config that parses must satisfy its own invariants
        assert!(cfg.theta > 0.0 && cfg.theta <= 1.0);
        assert!(cfg.h0 > 0.0);
        cfg.wells().expect("accepted config has distinct wells");
        let data = cfg.problem_data();
        let _ = (data.f)(0.5, 0.5);
    }
});
