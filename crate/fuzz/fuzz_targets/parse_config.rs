#![no_main]

use libfuzzer_sys::fuzz_target;
use varexp_core::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_json(text) {
        // Keep builds cheap; the cell cap itself is exercised by unit tests.
        if cfg.domain.resolution.iter().product::<usize>() <= 1 << 12 {
            let _ = cfg.build();
        }
        let again = RunConfig::from_json(&cfg.to_json()).expect("serialised config reparses");
        assert_eq!(again, cfg);
    }
});
