mod common;

use std::fs;

use common::{sentinel, stderr, stdout};

#[test]
fn corpus_validate_reports_counts() {
    let o = sentinel(&["corpus", "validate", common::corpus_root().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("10 cases, 0 problems"), "{}", stdout(&o));
}

#[test]
fn corpus_validate_rejects_broken_documents() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir_all(tmp.path().join("java")).unwrap();
    fs::write(tmp.path().join("java/broken.case.json"), "{ not json").unwrap();
    let o = sentinel(&["corpus", "validate", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("1 problems"), "{}", stdout(&o));
}

#[test]
fn bad_config_is_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::write_config(tmp.path(), "http://127.0.0.1:9", "");
    fs::write(&cfg, fs::read_to_string(&cfg).unwrap().replace("k = 1", "k = 0")).unwrap();
    let o = sentinel(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid config"), "{}", stderr(&o));

    let o = sentinel(&["run"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_review_report_flow() {
    let server = common::good_bad_server();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::write_config(tmp.path(), &server.url(), "");
    let run = tmp.path().join("run");
    let run_s = run.to_str().unwrap();
    let o = sentinel(&["run", "--config", cfg.to_str().unwrap(), "--out", run_s]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("20 items"), "{}", stdout(&o));

    // A second run into the same directory is refused; resuming is not.
    let o = sentinel(&["run", "--config", cfg.to_str().unwrap(), "--out", run_s]);
    assert_eq!(o.status.code(), Some(1));
    let o = sentinel(&["run", "--resume", run_s]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("(20 already done)"), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 backend calls"), "{}", stdout(&o));
    assert_eq!(server.request_count(), 20);

    // Pending items only, and the text listing carries the ground truth.
    let list = sentinel(&["review", "list", run_s]);
    assert!(stdout(&list).contains("ground truth:"));
    assert!(!stdout(&list).contains("/bad/"));

    let o = sentinel(&["review", "set", run_s, "no_such_case/good/1", "--correct"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("UNKNOWN_TRIPLE"), "{}", stderr(&o));

    let triple = "rope_rename_getattr/good/1";
    let o = sentinel(&["review", "set", run_s, triple, "--incorrect", "--notes", "misses getattr"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("BadExplanation"), "{}", stdout(&o));
    let o = sentinel(&["review", "set", run_s, triple, "--correct"]);
    assert!(stderr(&o).contains("ALREADY_ADJUDICATED"), "{}", stderr(&o));
    let o = sentinel(&["review", "set", run_s, triple, "--correct", "--force"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Decided correct=true"), "{}", stdout(&o));
    let ledger = fs::read_to_string(run.join("adjudications.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 2);

    // Partial report first.
    let o = sentinel(&["report", run_s, "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let partial = fs::read_to_string(run.join("reports/detection_rates.csv")).unwrap();
    assert!(partial.contains("partial: "), "{partial}");

    common::adjudicate_all(&run, |_| true);
    assert_eq!(stdout(&sentinel(&["review", "list", run_s])), "");

    let o = sentinel(&["report", run_s, "--format", "csv,json,md"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "detection_rates.csv",
        "incorrect_explanation.csv",
        "pass_at_k.csv",
        "consistency_at_k.csv",
        "temperature.csv",
        "cost.csv",
        "metrics.json",
        "summary.md",
    ] {
        assert!(run.join("reports").join(f).is_file(), "missing {f}");
    }
    let o = sentinel(&["report", run_s, "--format", "pdf"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn item_failures_exit_with_two() {
    let server = sentinel_mock::MockServer::start(|req| match req.model() {
        "good" => sentinel_mock::Reply::text("NO\nIt changes behavior."),
        _ => sentinel_mock::Reply::Status(401, "denied".into()),
    });
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::write_config(tmp.path(), &server.url(), "");
    let run = tmp.path().join("run");
    let o = sentinel(&["run", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let failures = fs::read_to_string(run.join("failures.jsonl")).unwrap();
    assert_eq!(failures.lines().count(), 10);
    assert!(failures.contains("AUTH_FAILED"));
}

#[test]
fn variants_generate_writes_verified_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("corpus");
    let o = sentinel(&[
        "variants",
        "generate",
        "--corpus",
        common::corpus_root().to_str().unwrap(),
        "--seed",
        "1",
        "--seed",
        "2",
        "--scope",
        "classes,numbers",
        "--ids",
        "rope_rename_to_keyword,cdt_extract_function_return",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("verified")).count(), 4, "{text}");
    let plan = fs::read_to_string(out.join("variants/rope_rename_to_keyword/plan.json")).unwrap();
    assert!(plan.contains("rope_rename_to_keyword~v1-cn"), "{plan}");

    let o = sentinel(&["variants", "generate", "--corpus", "x", "--seed", "1", "--scope", "colours"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn example_config_loads() {
    let cfg = sentinel_core::runner::RunConfig::load(&common::repo_root().join("run.example.toml")).unwrap();
    assert_eq!(cfg.backends.len(), 2);
    assert!(cfg.corpus.root.ends_with("corpus"));
    assert_eq!(cfg.temperatures_for(&cfg.backends[0]), vec![0.8]);
}
