#![no_main]

use libfuzzer_sys::fuzz_target;
use sentinel_core::gateway::{decode_chat_completions, decode_local_daemon};

fuzz_target!(|data: &[u8]| {
    let body = String::from_utf8_lossy(data);
    let _ = decode_chat_completions(&body);
    let _ = decode_local_daemon(&body);
});
