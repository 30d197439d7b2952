//! Human adjudication over a finished run: list what needs a verdict and
//! record verdicts.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::corpus::BugCase;
use crate::oracle::adjudication::same_temperature;
use crate::oracle::{latest_for, rejudge, Adjudication, CaseOutcome, OutcomeStatus};
use crate::verdict::VerdictDecision;

use super::rundir::{OutcomeFile, RunDir, RunDirError};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("BAD_TRIPLE: `{0}` is not <case>/<backend>/<attempt>")]
    BadTriple(String),
    #[error("UNKNOWN_TRIPLE: no outcome for {0}")]
    UnknownTriple(String),
    #[error("ALREADY_ADJUDICATED: {0} has an adjudication; pass --force to override")]
    AlreadyAdjudicated(String),
    #[error("case `{0}` is missing from the run directory")]
    MissingCase(String),
    #[error(transparent)]
    RunDir(#[from] RunDirError),
    #[error("{0}")]
    Ledger(String),
    #[error("{0}")]
    Judge(String),
}

impl ReviewError {
    pub fn code(&self) -> &'static str {
        match self {
            ReviewError::BadTriple(_) => "BAD_TRIPLE",
            ReviewError::UnknownTriple(_) => "UNKNOWN_TRIPLE",
            ReviewError::AlreadyAdjudicated(_) => "ALREADY_ADJUDICATED",
            ReviewError::MissingCase(_) => "MISSING_CASE",
            ReviewError::RunDir(_) => "RUN_DIR",
            ReviewError::Ledger(_) => "LEDGER",
            ReviewError::Judge(_) => "JUDGE",
        }
    }
}

/// A persisted outcome together with its judgment under the current ledger.
#[derive(Debug, Clone)]
pub struct Effective {
    pub file: OutcomeFile,
    pub outcome: CaseOutcome,
}

/// Re-judges every persisted outcome against the latest adjudications.
/// Nothing on disk changes.
pub fn effective_outcomes(dir: &RunDir) -> Result<Vec<Effective>, ReviewError> {
    let cases: BTreeMap<String, BugCase> = dir.cases()?.into_iter().map(|c| (c.id.clone(), c)).collect();
    let ledger = dir.ledger().load().map_err(|e| ReviewError::Ledger(e.to_string()))?;
    dir.outcomes()?
        .into_iter()
        .map(|file| {
            let o = &file.outcome;
            let case = cases.get(&o.case_id).ok_or_else(|| ReviewError::MissingCase(o.case_id.clone()))?;
            let adj = latest_for(&ledger, &o.case_id, &o.backend_name, o.attempt_index, o.temperature);
            let outcome = rejudge(case, &file.verdict, o, adj).map_err(|e| ReviewError::Judge(e.to_string()))?;
            Ok(Effective { file, outcome })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PendingItem {
    pub triple: String,
    pub temperature: f64,
    pub status: OutcomeStatus,
    pub decision: VerdictDecision,
    pub body: String,
    pub ground_truth: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_error: Option<String>,
}

pub fn triple(case_id: &str, backend: &str, attempt_index: u32) -> String {
    format!("{case_id}/{backend}/{attempt_index}")
}

pub fn parse_triple(s: &str) -> Result<(String, String, u32), ReviewError> {
    let bad = || ReviewError::BadTriple(s.to_string());
    let mut parts = s.rsplitn(3, '/');
    let attempt = parts.next().and_then(|a| a.parse::<u32>().ok()).filter(|&a| a > 0).ok_or_else(bad)?;
    let backend = parts.next().filter(|b| !b.is_empty()).ok_or_else(bad)?;
    let case = parts.next().filter(|c| !c.is_empty()).ok_or_else(bad)?;
    Ok((case.to_string(), backend.to_string(), attempt))
}

/// Outcomes still waiting for a human, in file order.
pub fn list_pending(dir: &RunDir) -> Result<Vec<PendingItem>, ReviewError> {
    let cases: BTreeMap<String, BugCase> = dir.cases()?.into_iter().map(|c| (c.id.clone(), c)).collect();
    Ok(effective_outcomes(dir)?
        .into_iter()
        .filter(|e| e.outcome.status.is_pending())
        .map(|e| {
            let o = &e.outcome;
            PendingItem {
                triple: triple(&o.case_id, &o.backend_name, o.attempt_index),
                temperature: o.temperature,
                status: o.status,
                decision: e.file.verdict.decision,
                body: e.file.verdict.body.clone(),
                ground_truth: cases.get(&o.case_id).map(|c| c.ground_truth_reason.text.clone()).unwrap_or_default(),
                oracle_error: o.evidence.oracle_error.clone(),
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SetRequest {
    pub triple: String,
    pub explanation_correct: bool,
    pub notes: String,
    pub temperature: Option<f64>,
    pub reviewer: String,
    pub force: bool,
}

/// Appends an adjudication and returns the re-judged outcomes it applies to.
pub fn set(dir: &RunDir, req: &SetRequest, now: DateTime<Utc>) -> Result<Vec<CaseOutcome>, ReviewError> {
    let (case_id, backend, attempt_index) = parse_triple(&req.triple)?;
    let matching: Vec<Effective> = effective_outcomes(dir)?
        .into_iter()
        .filter(|e| {
            let o = &e.outcome;
            o.case_id == case_id
                && o.backend_name == backend
                && o.attempt_index == attempt_index
                && req.temperature.map_or(true, |t| same_temperature(t, o.temperature))
        })
        .collect();
    if matching.is_empty() {
        return Err(ReviewError::UnknownTriple(req.triple.clone()));
    }
    if !req.force && matching.iter().any(|e| e.outcome.evidence.adjudication.is_some()) {
        return Err(ReviewError::AlreadyAdjudicated(req.triple.clone()));
    }
    let entry = Adjudication {
        case_id: case_id.clone(),
        backend_name: backend,
        attempt_index,
        temperature: req.temperature,
        explanation_correct: req.explanation_correct,
        notes: req.notes.clone(),
        reviewer: req.reviewer.clone(),
        timestamp: now,
    };
    dir.ledger().append(&entry).map_err(|e| ReviewError::Ledger(e.to_string()))?;
    let cases: BTreeMap<String, BugCase> = dir.cases()?.into_iter().map(|c| (c.id.clone(), c)).collect();
    let case = cases.get(&case_id).ok_or_else(|| ReviewError::MissingCase(case_id.clone()))?;
    matching
        .iter()
        .map(|e| rejudge(case, &e.file.verdict, &e.file.outcome, Some(&entry)).map_err(|err| ReviewError::Judge(err.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triples() {
        assert_eq!(parse_triple("super_call/mock/2").unwrap(), ("super_call".into(), "mock".into(), 2));
        assert_eq!(parse_triple("a/b/c/1").unwrap(), ("a/b".into(), "c".into(), 1));
        for bad in ["super_call/mock", "super_call/mock/0", "super_call/mock/x", "/mock/1", "super_call//1"] {
            assert_eq!(parse_triple(bad).unwrap_err().code(), "BAD_TRIPLE", "{bad}");
        }
    }
}
