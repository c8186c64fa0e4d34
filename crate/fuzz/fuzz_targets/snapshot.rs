#![no_main]

use libfuzzer_sys::fuzz_target;
use rcrl_core::replay::ReplayBuffer;

fuzz_target!(|data: &[u8]| {
    if let Ok(buf) = ReplayBuffer::from_snapshot_bytes(data) {
        // Anything accepted must re-encode to a snapshot that decodes the same way.
        let mut bytes = Vec::new();
        buf.write_snapshot(&mut bytes).unwrap();
        let back = ReplayBuffer::from_snapshot_bytes(&bytes).unwrap();
        assert_eq!(back.len(), buf.len());
    }
});
