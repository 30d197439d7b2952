use std::fs;
use std::path::Path;

use sentinel_core::prompt::PromptKind;
use sentinel_core::verdict::{parse, Verdict};

/// `(name, kind, raw, expected)` for every `<name>.<type1|type2>.txt` under tests/golden.
pub fn transcripts() -> Vec<(String, PromptKind, String, Verdict)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let file = path.file_name().unwrap().to_string_lossy().into_owned();
        let Some(stem) = file.strip_suffix(".txt") else { continue };
        let (name, kind) = stem.rsplit_once('.').unwrap();
        let kind = match kind {
            "type1" => PromptKind::Type1Check,
            "type2" => PromptKind::Type2Apply,
            other => panic!("{file}: unknown kind {other}"),
        };
        let raw = fs::read_to_string(&path).unwrap();
        let expected: Verdict = serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.json"))).unwrap()).unwrap();
        out.push((name.to_string(), kind, raw, expected));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn golden_transcripts_parse_to_expected_verdicts() {
    let all = transcripts();
    assert!(all.len() >= 12, "only {} transcripts", all.len());
    let mut failures = Vec::new();
    for (name, kind, raw, expected) in &all {
        let got = parse(raw, *kind);
        if &got != expected {
            failures.push(format!("{name}: got {}", serde_json::to_string_pretty(&got).unwrap()));
        }
        assert_eq!(parse(raw, *kind), got, "{name}: parse is not deterministic");
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
