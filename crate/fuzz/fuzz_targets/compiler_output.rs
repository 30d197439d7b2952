#![no_main]

use libfuzzer_sys::fuzz_target;
use sentinel_core::oracle::compile::parse_diagnostics;

fuzz_target!(|data: &[u8]| {
    let _ = parse_diagnostics(&String::from_utf8_lossy(data));
});
