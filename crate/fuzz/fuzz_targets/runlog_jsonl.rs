#![no_main]

use libfuzzer_sys::fuzz_target;
use rcrl_harness::runlog::RunLog;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(log) = RunLog::parse_jsonl(text, "fuzz") {
        let again = RunLog::parse_jsonl(&log.to_jsonl().unwrap(), "fuzz").unwrap();
        assert_eq!(again.len(), log.len());
    }
});
