//! Running the (case, backend, temperature, attempt) grid.

use std::collections::{BTreeSet, VecDeque};
use std::sync::{mpsc, Arc, Mutex};

use thiserror::Error;

use crate::corpus::{filter_cases, load_corpus, BugCase};
use crate::gateway::{BackendProfile, Gateway, Transport};
use crate::metamorph;
use crate::oracle::{judge_type1, judge_type2, latest_for, Adjudication, AttemptKey, CheckerConfig, OutcomeStatus};
use crate::prompt::{PromptForge, PromptKind};
use crate::verdict;

use super::config::RunConfig;
use super::rundir::{FailureRecord, OutcomeFile, RunDir, RunDirError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    RunDir(#[from] RunDirError),
    #[error("adjudications: {0}")]
    Ledger(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    /// Work items in the grid.
    pub items: usize,
    /// Items already complete before this invocation.
    pub skipped: usize,
    pub decided: usize,
    pub pending: usize,
    pub failed: usize,
    /// Requests that reached a backend (cache misses).
    pub network_calls: usize,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failed > 0 {
            2
        } else {
            0
        }
    }
}

/// Loads the configured corpus, applies the selector and, when asked,
/// adds verified variants of the selected cases.
pub fn select_cases(config: &RunConfig) -> Result<Vec<BugCase>, RunError> {
    let report = load_corpus(&config.corpus.root).map_err(|e| RunError::Corpus(e.to_string()))?;
    if let Some(p) = report.problems.first() {
        let more = report.problems.len() - 1;
        return Err(RunError::Corpus(if more > 0 { format!("{p} (and {more} more)") } else { p.to_string() }));
    }
    let index = filter_cases(&report.index, &config.corpus.selector()).map_err(|e| RunError::Corpus(e.to_string()))?;
    let mut cases: Vec<BugCase> = index.cases().to_vec();
    if config.corpus.include_variants {
        let parents: BTreeSet<&str> = cases.iter().map(|c| c.id.as_str()).collect();
        let variants = metamorph::load_variants(&config.corpus.root).map_err(|e| RunError::Corpus(e.to_string()))?;
        let chosen: Vec<BugCase> = variants
            .into_iter()
            .filter(|v| parents.contains(v.parent_id.as_str()))
            .filter(|v| {
                if !v.verified {
                    log::info!("skipping unverified variant {}", v.variant_id);
                }
                v.verified
            })
            .map(|v| v.case)
            .collect();
        cases.extend(chosen);
    }
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(cases)
}

#[derive(Debug, Clone)]
struct Item {
    case: Arc<BugCase>,
    backend: Arc<BackendProfile>,
    temperature: f64,
    attempt_index: u32,
}

enum Done {
    Outcome { file: Box<OutcomeFile>, network: bool },
    Failed(FailureRecord),
}

fn process(item: &Item, gateway: &Gateway, forge: &PromptForge, checkers: &CheckerConfig, adjudications: &[Adjudication]) -> Done {
    let fail = |code: &str, message: String| {
        Done::Failed(FailureRecord {
            case_id: item.case.id.clone(),
            backend_name: item.backend.name.clone(),
            temperature: item.temperature,
            attempt_index: item.attempt_index,
            code: code.to_string(),
            message,
        })
    };
    let case = &*item.case;
    let prompt = match forge.render(case) {
        Ok(p) => p,
        Err(e) => return fail("PROMPT", e.to_string()),
    };
    let record = match gateway.complete(&item.backend, &prompt, item.temperature, item.attempt_index) {
        Ok(r) => r,
        Err(e) => return fail(e.code(), e.to_string()),
    };
    let kind = PromptKind::for_case(case);
    let verdict = verdict::parse(&record.raw_response, kind);
    let adj = latest_for(adjudications, &case.id, &item.backend.name, item.attempt_index, item.temperature);
    let key = AttemptKey {
        backend_name: item.backend.name.clone(),
        attempt_index: item.attempt_index,
        temperature: item.temperature,
    };
    let judged = if case.bug_kind.is_type1() {
        judge_type1(case, &verdict, &key, adj)
    } else {
        let workspace = match tempfile::tempdir() {
            Ok(w) => w,
            Err(e) => return fail("WORKSPACE_IO", e.to_string()),
        };
        judge_type2(case, &verdict, &key, workspace.path(), checkers, adj)
    };
    match judged {
        Ok(outcome) => Done::Outcome {
            file: Box::new(OutcomeFile {
                request_digest: record.request_digest,
                verdict,
                outcome,
            }),
            network: !record.from_cache,
        },
        Err(e) => fail("JUDGE", e.to_string()),
    }
}

/// Runs every work item that has no persisted outcome yet. Attempt records
/// are cached under `attempts/` by the gateway, so a resumed run never asks
/// a backend the same request twice.
pub fn run(dir: &RunDir, config: &RunConfig, transport: Arc<dyn Transport>) -> Result<RunSummary, RunError> {
    let cases = select_cases(config)?;
    for case in &cases {
        dir.store_case(case)?;
    }
    let stored: Vec<BugCase> = dir.cases()?;
    let selected: BTreeSet<&str> = cases.iter().map(|c| c.id.as_str()).collect();
    let cases: Vec<Arc<BugCase>> = stored.into_iter().filter(|c| selected.contains(c.id.as_str())).map(Arc::new).collect();
    let adjudications = dir.ledger().load().map_err(|e| RunError::Ledger(e.to_string()))?;

    let mut summary = RunSummary::default();
    let mut queue = VecDeque::new();
    for backend in &config.backends {
        let backend = Arc::new(backend.clone());
        for temperature in config.temperatures_for(&backend) {
            for case in &cases {
                for attempt_index in 1..=config.run.k {
                    summary.items += 1;
                    if dir.has_outcome(&case.id, &backend.name, temperature, attempt_index) {
                        summary.skipped += 1;
                        continue;
                    }
                    queue.push_back(Item {
                        case: case.clone(),
                        backend: backend.clone(),
                        temperature,
                        attempt_index,
                    });
                }
            }
        }
    }
    log::info!("{} work items, {} already complete", summary.items, summary.skipped);

    let gateway = Gateway::new(transport, dir.attempt_cache()?);
    let forge = PromptForge::default();
    let queue = Mutex::new(queue);
    let workers = config.run.concurrency.max(1);
    let mut first_error = None;
    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<Done>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (queue, gateway, forge, adjudications) = (&queue, &gateway, &forge, &adjudications);
            s.spawn(move || loop {
                let Some(item) = queue.lock().expect("queue lock").pop_front() else {
                    break;
                };
                if tx.send(process(&item, gateway, forge, &config.checkers, adjudications)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer: only this loop touches outcomes/ and failures.jsonl.
        for done in rx {
            let res = match done {
                Done::Outcome { file, network } => {
                    if network {
                        summary.network_calls += 1;
                    }
                    if file.outcome.status == OutcomeStatus::Decided {
                        summary.decided += 1;
                    } else {
                        summary.pending += 1;
                    }
                    dir.write_outcome(&file).map(|_| ())
                }
                Done::Failed(f) => {
                    log::warn!("{} {} t={:.2} a{}: {}", f.case_id, f.backend_name, f.temperature, f.attempt_index, f.message);
                    summary.failed += 1;
                    dir.append_failure(&f)
                }
            };
            if let Err(e) = res {
                if first_error.is_none() {
                    // Stop handing out work; in-flight items finish.
                    queue.lock().expect("queue lock").clear();
                    first_error = Some(e);
                }
            }
        }
    });
    if let Some(e) = first_error {
        return Err(e.into());
    }
    Ok(summary)
}
