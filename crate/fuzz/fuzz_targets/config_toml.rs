#![no_main]

use libfuzzer_sys::fuzz_target;
use rcrl_harness::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        let _ = cfg.to_toml().map(|t| ExperimentConfig::from_toml_str(&t).unwrap());
    }
});
