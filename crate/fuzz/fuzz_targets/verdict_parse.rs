#![no_main]

use libfuzzer_sys::fuzz_target;
use sentinel_core::prompt::PromptKind;
use sentinel_core::verdict::{parse, DecisionSource, VerdictDecision};

fuzz_target!(|data: &[u8]| {
    let raw = String::from_utf8_lossy(data);
    for kind in [PromptKind::Type1Check, PromptKind::Type2Apply] {
        let v = parse(&raw, kind);
        if v.decision == VerdictDecision::Unparseable {
            assert_eq!(v.decision_source, DecisionSource::None);
        }
        if kind == PromptKind::Type1Check || v.decision != VerdictDecision::Yes {
            assert!(v.extracted_units.is_empty());
        }
        assert_eq!(parse(&v.canonical_text(), kind).decision, v.decision);
    }
});
