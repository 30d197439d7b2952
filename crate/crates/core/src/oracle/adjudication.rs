//! Human judgments on model explanations, kept in an append-only JSON-lines file.

use std::fs::{self, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adjudication {
    pub case_id: String,
    pub backend_name: String,
    pub attempt_index: u32,
    /// Temperature of the judged attempt; `None` applies to every temperature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub explanation_correct: bool,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

impl Adjudication {
    pub fn applies_to(&self, case_id: &str, backend: &str, attempt_index: u32, temperature: f64) -> bool {
        self.case_id == case_id
            && self.backend_name == backend
            && self.attempt_index == attempt_index
            && self.temperature.map_or(true, |t| same_temperature(t, temperature))
    }
}

pub fn same_temperature(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("{path}:{line}: {reason}")]
    BadLine { path: String, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses one ledger line.
pub fn parse_line(line: &str) -> Result<Adjudication, String> {
    let a: Adjudication = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if a.case_id.is_empty() || a.backend_name.is_empty() {
        return Err("case_id and backend_name must be non-empty".into());
    }
    if a.attempt_index == 0 {
        return Err("attempt_index starts at 1".into());
    }
    if let Some(t) = a.temperature {
        if !(0.0..=1.0).contains(&t) {
            return Err(format!("temperature {t} outside [0, 1]"));
        }
    }
    Ok(a)
}

#[derive(Debug, Clone)]
pub struct AdjudicationLedger {
    path: PathBuf,
}

impl AdjudicationLedger {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: std::io::Error) -> LedgerError {
        LedgerError::Io {
            path: self.path.display().to_string(),
            source,
        }
    }

    /// All entries in file order. A final line without its newline is an
    /// interrupted append and is ignored.
    pub fn load(&self) -> Result<Vec<Adjudication>, LedgerError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.io(e)),
        };
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        if complete.len() < text.len() {
            log::warn!("{}: ignoring incomplete final line", self.path.display());
        }
        let mut out = Vec::new();
        for (i, line) in complete.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(parse_line(line).map_err(|reason| LedgerError::BadLine {
                path: self.path.display().to_string(),
                line: i + 1,
                reason,
            })?);
        }
        Ok(out)
    }

    /// Appends one entry, first dropping any incomplete final line.
    pub fn append(&self, entry: &Adjudication) -> Result<(), LedgerError> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        let mut existing = Vec::new();
        file.read_to_end(&mut existing).map_err(|e| self.io(e))?;
        let keep = existing.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if keep < existing.len() {
            file.set_len(keep as u64).map_err(|e| self.io(e))?;
        }
        file.seek(SeekFrom::Start(keep as u64)).map_err(|e| self.io(e))?;
        let mut line = serde_json::to_string(entry).expect("adjudication serializes");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(|e| self.io(e))?;
        file.sync_all().map_err(|e| self.io(e))
    }
}

/// The last entry that applies to the attempt.
pub fn latest_for<'a>(
    entries: &'a [Adjudication],
    case_id: &str,
    backend: &str,
    attempt_index: u32,
    temperature: f64,
) -> Option<&'a Adjudication> {
    entries
        .iter()
        .rev()
        .find(|a| a.applies_to(case_id, backend, attempt_index, temperature))
}
