#![no_main]

use libfuzzer_sys::fuzz_target;
use rcrl_harness::agent::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Checkpoint::from_json(text);
    }
});
