#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use sentinel_core::corpus::{self, BugCase};
use sentinel_core::prompt::PromptForge;
use sentinel_mock::{MockServer, Reply, Request};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn corpus_root() -> PathBuf {
    repo_root().join("corpus")
}

pub fn core_tests() -> PathBuf {
    repo_root().join("crates/core/tests")
}

pub fn cases() -> Vec<BugCase> {
    corpus::load_corpus(&corpus_root()).unwrap().index.cases().to_vec()
}

pub fn reply_text(case_id: &str, which: &str) -> String {
    fs::read_to_string(core_tests().join("fixtures/replies").join(format!("{case_id}.{which}.txt"))).unwrap()
}

/// Rendered prompt text -> case id, for every corpus case.
pub fn prompt_index() -> HashMap<String, String> {
    let forge = PromptForge::default();
    cases().iter().map(|c| (forge.render(c).unwrap().text, c.id.clone())).collect()
}

/// Which reply file a request gets: the model id names it (`good` or `bad`).
pub fn fixture_reply(index: &HashMap<String, String>, req: &Request) -> Reply {
    match index.get(req.prompt()) {
        Some(id) if matches!(req.model(), "good" | "bad") => Reply::text(&reply_text(id, req.model())),
        _ => Reply::Status(404, format!("no fixture for model {}", req.model())),
    }
}

pub fn good_bad_server() -> MockServer {
    let index = Arc::new(prompt_index());
    MockServer::start(move |req| fixture_reply(&index, req))
}

/// Writes `dir/run.toml` with backends `good` and `bad` pointing at `url`.
pub fn write_config(dir: &Path, url: &str, run_extra: &str) -> PathBuf {
    let text = format!(
        r#"[corpus]
root = "{corpus}"

[[backends]]
name = "good"
endpoint_url = "{url}"
api_flavor = "CHAT_COMPLETIONS"
model_id = "good"
rate_card = {{ input_cost_per_1k_tokens = 0.10, output_cost_per_1k_tokens = 0.20 }}
max_retries = 1
backoff_base_ms = 1

[[backends]]
name = "bad"
endpoint_url = "{url}"
api_flavor = "CHAT_COMPLETIONS"
model_id = "bad"
rate_card = {{ input_cost_per_1k_tokens = "0.05", output_cost_per_1k_tokens = "0.05" }}
max_retries = 1
backoff_base_ms = 1

[run]
k = 1
concurrency = 2
{run_extra}
"#,
        corpus = corpus_root().display(),
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

pub fn sentinel_cmd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sentinel"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

pub fn sentinel(args: &[&str]) -> Output {
    sentinel_cmd().args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Adjudicates every pending item with `verdict(triple)`; returns how many.
pub fn adjudicate_all(run: &Path, verdict: impl Fn(&str) -> bool) -> usize {
    let list = sentinel(&["review", "list", run.to_str().unwrap(), "--json"]);
    assert_eq!(list.status.code(), Some(0), "{}", stderr(&list));
    let mut n = 0;
    for line in stdout(&list).lines() {
        let item: serde_json::Value = serde_json::from_str(line).unwrap();
        let triple = item["triple"].as_str().unwrap();
        let flag = if verdict(triple) { "--correct" } else { "--incorrect" };
        let o = sentinel(&["review", "set", run.to_str().unwrap(), triple, flag, "--notes", "scripted", "--reviewer", "ci"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        n += 1;
    }
    n
}

/// Relative path and contents of every file under `root`, sorted.
pub fn tree(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read_to_string(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Blanks wall-clock measurements, which differ between any two runs.
pub fn normalize_timing(text: &str) -> String {
    let re = regex::Regex::new(r#""(latency_ms|duration_ms)":\s*\d+"#).unwrap();
    re.replace_all(text, "\"$1\":0").into_owned()
}
