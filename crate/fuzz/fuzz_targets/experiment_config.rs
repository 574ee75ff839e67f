#![no_main]

use fmhash::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).expect("written config parses"), cfg);
    }
});
