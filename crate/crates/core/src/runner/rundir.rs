//! On-disk layout of a run. Every record is written once and never edited;
//! adjudications and failures are append-only JSON lines.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BugCase, CASE_SUFFIX};
use crate::gateway::{AttemptCache, AttemptRecord};
use crate::oracle::{AdjudicationLedger, CaseOutcome};
use crate::verdict::Verdict;

use super::config::RunConfig;

pub const CONFIG_FILE: &str = "config.toml";
pub const CASES_DIR: &str = "cases";
pub const ATTEMPTS_DIR: &str = "attempts";
pub const OUTCOMES_DIR: &str = "outcomes";
pub const REPORTS_DIR: &str = "reports";
pub const ADJUDICATIONS_FILE: &str = "adjudications.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";

#[derive(Debug, Error)]
pub enum RunDirError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{0} already holds a run; pass --resume to continue it")]
    Exists(String),
    #[error("{0} is not a run directory (no {CONFIG_FILE})")]
    NotARun(String),
    #[error("{path}: {reason}")]
    Corrupt { path: String, reason: String },
}

fn io(path: &Path, e: impl std::fmt::Display) -> RunDirError {
    RunDirError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// The persisted result of one work item: the parsed verdict and the
/// judgment made when it was first produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFile {
    pub request_digest: String,
    pub verdict: Verdict,
    pub outcome: CaseOutcome,
}

/// A work item that could not be completed; retried on resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub case_id: String,
    pub backend_name: String,
    pub temperature: f64,
    pub attempt_index: u32,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

pub fn outcome_file_name(case_id: &str, backend: &str, temperature: f64, attempt_index: u32) -> String {
    format!("{case_id}__{backend}__t{temperature:.2}__a{attempt_index}.json")
}

/// Writes `text` to `path` unless the file exists. Returns whether it wrote.
pub fn write_once(path: &Path, text: &str) -> Result<bool, RunDirError> {
    let dir = path.parent().expect("file has a parent");
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io(dir, e))?;
    tmp.write_all(text.as_bytes()).map_err(|e| io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| io(tmp.path(), e))?;
    match tmp.persist_noclobber(path) {
        Ok(_) => Ok(true),
        Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(io(path, e.error)),
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("record serializes");
    s.push('\n');
    s
}

impl RunDir {
    /// Creates a fresh run directory and stores the config snapshot.
    pub fn create(root: &Path, config: &RunConfig) -> Result<Self, RunDirError> {
        if root.join(CONFIG_FILE).exists() {
            return Err(RunDirError::Exists(root.display().to_string()));
        }
        let dir = Self::layout(root)?;
        write_once(&dir.config_path(), &config.snapshot())?;
        Ok(dir)
    }

    /// Opens an existing run directory.
    pub fn open(root: &Path) -> Result<Self, RunDirError> {
        if !root.join(CONFIG_FILE).is_file() {
            return Err(RunDirError::NotARun(root.display().to_string()));
        }
        Self::layout(root)
    }

    fn layout(root: &Path) -> Result<Self, RunDirError> {
        for sub in [CASES_DIR, ATTEMPTS_DIR, OUTCOMES_DIR] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(|e| io(&p, e))?;
            remove_stale_temps(&p);
        }
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn attempts_dir(&self) -> PathBuf {
        self.root.join(ATTEMPTS_DIR)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join(REPORTS_DIR)
    }

    pub fn ledger(&self) -> AdjudicationLedger {
        AdjudicationLedger::new(self.root.join(ADJUDICATIONS_FILE))
    }

    pub fn attempt_cache(&self) -> Result<AttemptCache, RunDirError> {
        AttemptCache::dir(self.attempts_dir()).map_err(|e| io(&self.attempts_dir(), e))
    }

    /// The stored config. Its output directory is this run directory.
    pub fn config(&self) -> Result<RunConfig, RunDirError> {
        let path = self.config_path();
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let mut cfg = RunConfig::from_toml(&text).map_err(|reason| RunDirError::Corrupt {
            path: path.display().to_string(),
            reason,
        })?;
        cfg.run.output_dir = Some(self.root.clone());
        Ok(cfg)
    }

    pub fn store_case(&self, case: &BugCase) -> Result<(), RunDirError> {
        let path = self.root.join(CASES_DIR).join(format!("{}{CASE_SUFFIX}", case.id));
        if !write_once(&path, &case.to_json())? {
            let existing = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
            if existing != case.to_json() {
                log::warn!("{}: stored case differs from the corpus; keeping the stored copy", path.display());
            }
        }
        Ok(())
    }

    /// Cases stored for this run, sorted by id.
    pub fn cases(&self) -> Result<Vec<BugCase>, RunDirError> {
        let mut out = Vec::new();
        for path in sorted_files(&self.root.join(CASES_DIR), CASE_SUFFIX)? {
            let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
            out.push(BugCase::from_json(&text).map_err(|e| RunDirError::Corrupt {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?);
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn outcome_path(&self, case_id: &str, backend: &str, temperature: f64, attempt_index: u32) -> PathBuf {
        self.root
            .join(OUTCOMES_DIR)
            .join(outcome_file_name(case_id, backend, temperature, attempt_index))
    }

    pub fn has_outcome(&self, case_id: &str, backend: &str, temperature: f64, attempt_index: u32) -> bool {
        self.outcome_path(case_id, backend, temperature, attempt_index).is_file()
    }

    pub fn write_outcome(&self, file: &OutcomeFile) -> Result<bool, RunDirError> {
        let o = &file.outcome;
        write_once(&self.outcome_path(&o.case_id, &o.backend_name, o.temperature, o.attempt_index), &pretty(file))
    }

    /// Every persisted outcome, in file-name order.
    pub fn outcomes(&self) -> Result<Vec<OutcomeFile>, RunDirError> {
        sorted_files(&self.root.join(OUTCOMES_DIR), ".json")?
            .into_iter()
            .map(|path| {
                let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
                serde_json::from_str(&text).map_err(|e| RunDirError::Corrupt {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    /// Every attempt record written by the gateway, in digest order.
    pub fn attempts(&self) -> Result<Vec<AttemptRecord>, RunDirError> {
        sorted_files(&self.attempts_dir(), ".json")?
            .into_iter()
            .map(|path| {
                let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
                serde_json::from_str(&text).map_err(|e| RunDirError::Corrupt {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    pub fn append_failure(&self, failure: &FailureRecord) -> Result<(), RunDirError> {
        let path = self.root.join(FAILURES_FILE);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| io(&path, e))?;
        let mut line = serde_json::to_string(failure).expect("failure serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| io(&path, e))?;
        f.sync_all().map_err(|e| io(&path, e))
    }

    pub fn failures(&self) -> Result<Vec<FailureRecord>, RunDirError> {
        let path = self.root.join(FAILURES_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io(&path, e)),
        };
        Ok(text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect())
    }
}

/// Temp files left by a killed writer; the record they held was never
/// published, so the work item is simply redone.
fn remove_stale_temps(dir: &Path) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    for e in entries.flatten() {
        if e.file_name().to_string_lossy().starts_with(".tmp") {
            let _ = fs::remove_file(e.path());
        }
    }
}

fn sorted_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, RunDirError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(dir, e)),
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix) && !n.starts_with('.')))
        .collect();
    files.sort();
    Ok(files)
}
