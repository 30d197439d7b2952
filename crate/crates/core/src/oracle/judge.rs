//! Per-attempt correctness judgments.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adjudication::Adjudication;
use super::compile::{check_static, CheckerConfig, CompileResult};
use super::mechanics::{check_mechanics, MechanicsResult};
use crate::corpus::{BugCase, ReasonCategory};
use crate::verdict::{Verdict, VerdictDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeStatus {
    Decided,
    PendingAdjudication,
    /// A Type II oracle could not run; an adjudication can still decide it.
    PendingOracle,
}

impl OutcomeStatus {
    pub fn is_pending(self) -> bool {
        self != OutcomeStatus::Decided
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureReason {
    WrongDecision,
    BadExplanation,
    OutputNotCompiling,
    MechanicsViolated,
    UnparseableOutput,
    None,
}

/// Keyword guess at the failure mode an explanation names. Advisory only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreLabel {
    pub category: Option<ReasonCategory>,
    pub cues: Vec<String>,
    pub agrees_with_ground_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub verdict_decision: VerdictDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile: Option<CompileResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanics: Option<MechanicsResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjudication: Option<Adjudication>,
    pub failure_reason: FailureReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_label: Option<PreLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub backend_name: String,
    pub attempt_index: u32,
    pub temperature: f64,
    pub correct: bool,
    pub status: OutcomeStatus,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttemptKey {
    pub backend_name: String,
    pub attempt_index: u32,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("WRONG_KIND: case {case_id} is {actual}")]
    WrongKind { case_id: String, actual: String },
}

const COMPILE_CUES: &[&str] = &[
    "does not compile",
    "doesn't compile",
    "not compile",
    "fail to compile",
    "fails to compile",
    "compilation error",
    "compile error",
    "compile-time error",
    "syntax error",
    "cannot find symbol",
    "reserved keyword",
    "reserved word",
    "type error",
    "incompatible type",
];
const RUNTIME_CUES: &[&str] = &[
    "runtime error",
    "run-time error",
    "at runtime",
    "exception",
    "attributeerror",
    "nameerror",
    "typeerror",
    "crash",
];
const BEHAVIOR_CUES: &[&str] = &[
    "behavior",
    "behaviour",
    "output",
    "prints",
    "different result",
    "semantic",
    "returns a different",
];

/// Matches cue phrases in the explanation; the category with most cues wins,
/// ties going to the earlier of compile, runtime, behavior.
pub fn pre_label(case: &BugCase, verdict: &Verdict) -> PreLabel {
    let body = verdict.body.to_lowercase();
    let mut best: Option<(ReasonCategory, Vec<String>)> = None;
    for (category, cues) in [
        (ReasonCategory::CompileError, COMPILE_CUES),
        (ReasonCategory::RuntimeError, RUNTIME_CUES),
        (ReasonCategory::BehaviorChange, BEHAVIOR_CUES),
    ] {
        let hits: Vec<String> = cues.iter().filter(|c| body.contains(*c)).map(|c| c.to_string()).collect();
        if !hits.is_empty() && best.as_ref().map_or(true, |(_, b)| hits.len() > b.len()) {
            best = Some((category, hits));
        }
    }
    let (category, cues) = match best {
        Some((c, h)) => (Some(c), h),
        None => (None, Vec::new()),
    };
    PreLabel {
        agrees_with_ground_truth: category == Some(case.ground_truth_reason.category),
        category,
        cues,
    }
}

fn outcome(case: &BugCase, key: &AttemptKey, status: OutcomeStatus, reason: FailureReason, evidence: Evidence) -> CaseOutcome {
    CaseOutcome {
        case_id: case.id.clone(),
        backend_name: key.backend_name.clone(),
        attempt_index: key.attempt_index,
        temperature: key.temperature,
        correct: status == OutcomeStatus::Decided && reason == FailureReason::None,
        status,
        evidence: Evidence {
            failure_reason: reason,
            ..evidence
        },
    }
}

fn base_evidence(verdict: &Verdict, adjudication: Option<&Adjudication>) -> Evidence {
    Evidence {
        verdict_decision: verdict.decision,
        compile: None,
        mechanics: None,
        adjudication: adjudication.cloned(),
        failure_reason: FailureReason::None,
        oracle_error: None,
        pre_label: None,
    }
}

pub fn judge_type1(
    case: &BugCase,
    verdict: &Verdict,
    key: &AttemptKey,
    adjudication: Option<&Adjudication>,
) -> Result<CaseOutcome, JudgeError> {
    if !case.bug_kind.is_type1() {
        return Err(JudgeError::WrongKind {
            case_id: case.id.clone(),
            actual: case.bug_kind.to_string(),
        });
    }
    let mut ev = base_evidence(verdict, adjudication);
    use FailureReason as F;
    use OutcomeStatus as S;
    Ok(match verdict.decision {
        VerdictDecision::Unparseable => outcome(case, key, S::Decided, F::UnparseableOutput, ev),
        VerdictDecision::Yes => outcome(case, key, S::Decided, F::WrongDecision, ev),
        VerdictDecision::No => {
            ev.pre_label = Some(pre_label(case, verdict));
            match adjudication {
                None => outcome(case, key, S::PendingAdjudication, F::None, ev),
                Some(a) if a.explanation_correct => outcome(case, key, S::Decided, F::None, ev),
                Some(_) => outcome(case, key, S::Decided, F::BadExplanation, ev),
            }
        }
    })
}

/// Type II judgment from already computed oracle results. `compile` is
/// `None` when the checker was never run and `Err` when it could not run.
pub fn judge_type2_with(
    case: &BugCase,
    verdict: &Verdict,
    key: &AttemptKey,
    compile: Option<Result<CompileResult, String>>,
    mechanics: Option<MechanicsResult>,
    adjudication: Option<&Adjudication>,
) -> Result<CaseOutcome, JudgeError> {
    if case.bug_kind.is_type1() {
        return Err(JudgeError::WrongKind {
            case_id: case.id.clone(),
            actual: case.bug_kind.to_string(),
        });
    }
    let mut ev = base_evidence(verdict, adjudication);
    use FailureReason as F;
    use OutcomeStatus as S;
    match verdict.decision {
        VerdictDecision::Unparseable => return Ok(outcome(case, key, S::Decided, F::UnparseableOutput, ev)),
        VerdictDecision::No => return Ok(outcome(case, key, S::Decided, F::WrongDecision, ev)),
        VerdictDecision::Yes if verdict.extracted_units.is_empty() => {
            return Ok(outcome(case, key, S::Decided, F::UnparseableOutput, ev))
        }
        VerdictDecision::Yes => {}
    }
    ev.mechanics = mechanics;
    let compile = match compile {
        Some(Ok(c)) => c,
        other => {
            ev.oracle_error = Some(match other {
                Some(Err(e)) => e,
                _ => "static check not run".to_string(),
            });
            return Ok(match adjudication {
                None => outcome(case, key, S::PendingOracle, F::None, ev),
                Some(a) if a.explanation_correct => outcome(case, key, S::Decided, F::None, ev),
                Some(_) => outcome(case, key, S::Decided, F::OutputNotCompiling, ev),
            });
        }
    };
    let compiled = compile.ok;
    ev.compile = Some(compile);
    let reason = if !compiled {
        F::OutputNotCompiling
    } else if !ev.mechanics.as_ref().is_some_and(|m| m.ok) {
        F::MechanicsViolated
    } else {
        F::None
    };
    Ok(outcome(case, key, S::Decided, reason, ev))
}

/// Runs the static checker and mechanics rule on the extracted program when
/// the verdict is a YES with code, then judges.
pub fn judge_type2(
    case: &BugCase,
    verdict: &Verdict,
    key: &AttemptKey,
    workspace: &Path,
    checkers: &CheckerConfig,
    adjudication: Option<&Adjudication>,
) -> Result<CaseOutcome, JudgeError> {
    let runs = verdict.decision == VerdictDecision::Yes && !verdict.extracted_units.is_empty() && !case.bug_kind.is_type1();
    let (compile, mechanics) = if runs {
        (
            Some(check_static(case.language, &verdict.extracted_units, workspace, checkers).map_err(|e| e.to_string())),
            Some(check_mechanics(case, &verdict.extracted_units)),
        )
    } else {
        (None, None)
    };
    judge_type2_with(case, verdict, key, compile, mechanics, adjudication)
}

/// Recomputes an outcome from its persisted evidence and a (possibly new)
/// adjudication, without rerunning any oracle.
pub fn rejudge(
    case: &BugCase,
    verdict: &Verdict,
    prior: &CaseOutcome,
    adjudication: Option<&Adjudication>,
) -> Result<CaseOutcome, JudgeError> {
    let key = AttemptKey {
        backend_name: prior.backend_name.clone(),
        attempt_index: prior.attempt_index,
        temperature: prior.temperature,
    };
    if case.bug_kind.is_type1() {
        return judge_type1(case, verdict, &key, adjudication);
    }
    let compile = match (&prior.evidence.compile, &prior.evidence.oracle_error) {
        (Some(c), _) => Some(Ok(c.clone())),
        (None, Some(e)) => Some(Err(e.clone())),
        (None, None) => None,
    };
    judge_type2_with(case, verdict, &key, compile, prior.evidence.mechanics.clone(), adjudication)
}
