#![no_main]

use libfuzzer_sys::fuzz_target;
use sentinel_core::corpus::{self, BugCase};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let registry = corpus::parse_registry("Push Down Method\nPull Up Method\nRename Method\nExtract Function\n");
    if let Ok((case, _)) = corpus::parse_case_document("fuzz", text, &registry, &Default::default()) {
        // Whatever loads must survive a serialization round trip.
        let again = BugCase::from_json(&case.to_json()).expect("reserialized case parses");
        assert_eq!(again, case);
    }
});
