#![no_main]

use libfuzzer_sys::fuzz_target;
use sentinel_core::oracle::adjudication::parse_line;
use sentinel_core::runner::parse_triple;

fuzz_target!(|data: &[u8]| {
    let line = String::from_utf8_lossy(data);
    let _ = parse_line(&line);
    if let Ok((case, backend, attempt)) = parse_triple(&line) {
        assert!(attempt >= 1);
        assert!(!case.is_empty() && !backend.is_empty());
    }
});
