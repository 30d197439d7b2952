#![no_main]

use libfuzzer_sys::fuzz_target;
use sentinel_core::oracle::parse_params;

const KINDS: &[&str] = &[
    "Pull Up Method",
    "Push Down Method",
    "Pull Up Field",
    "Push Down Field",
    "Rename Method",
    "Rename Variable",
    "Rename Field",
    "Rename Class",
];

fuzz_target!(|data: &[u8]| {
    let Some((&selector, rest)) = data.split_first() else { return };
    let params = String::from_utf8_lossy(rest);
    let _ = parse_params(KINDS[selector as usize % KINDS.len()], &params);
});
