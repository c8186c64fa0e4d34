#![no_main]

use libfuzzer_sys::fuzz_target;
use rcrl_core::reward::ParamPool;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(pool) = ParamPool::from_json(text) {
        let again = ParamPool::from_json(&pool.to_json().unwrap()).unwrap();
        assert_eq!(again.len(), pool.len());
    }
});
