#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use sentinel_core::corpus::{self, BugCase};
use sentinel_core::gateway::ScriptedTransport;
use sentinel_core::runner::RunConfig;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn corpus_root() -> PathBuf {
    workspace_root().join("corpus")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn load_cases() -> Vec<BugCase> {
    let report = corpus::load_corpus(&corpus_root()).expect("corpus loads");
    assert!(report.problems.is_empty(), "{:?}", report.problems);
    report.index.cases().to_vec()
}

pub fn case(id: &str) -> BugCase {
    load_cases().into_iter().find(|c| c.id == id).unwrap_or_else(|| panic!("no case {id}"))
}

pub fn reply(case_id: &str, which: &str) -> String {
    fs::read_to_string(fixtures().join("replies").join(format!("{case_id}.{which}.txt"))).unwrap()
}

/// Backend `good` answers every case correctly, `bad` answers every case wrongly.
pub fn good_bad_transport(cases: &[BugCase]) -> ScriptedTransport {
    let mut t = ScriptedTransport::new();
    for c in cases {
        t = t
            .reply_from("good", &c.id, 1, &reply(&c.id, "good"))
            .reply_from("bad", &c.id, 1, &reply(&c.id, "bad"));
    }
    t
}

pub fn config(out: &Path, k: u32, temperatures: &str) -> RunConfig {
    let text = format!(
        r#"
[corpus]
root = "{corpus}"

[[backends]]
name = "good"
endpoint_url = "http://127.0.0.1:9"
api_flavor = "CHAT_COMPLETIONS"
model_id = "good"
rate_card = {{ input_cost_per_1k_tokens = 0.10, output_cost_per_1k_tokens = 0.20 }}
max_retries = 0

[[backends]]
name = "bad"
endpoint_url = "http://127.0.0.1:9"
api_flavor = "CHAT_COMPLETIONS"
model_id = "bad"
max_retries = 0

[run]
k = {k}
{temperatures}
concurrency = 3
output_dir = "{out}"
"#,
        corpus = corpus_root().display(),
        out = out.display(),
    );
    let cfg = RunConfig::from_toml(&text).unwrap();
    cfg.validate().unwrap();
    cfg
}
