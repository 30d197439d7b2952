//! Independent checks of model output: static validity, refactoring
//! mechanics, human adjudication and the final per-attempt judgment.

pub mod adjudication;
pub mod compile;
pub mod judge;
pub mod mechanics;

pub use adjudication::{latest_for, Adjudication, AdjudicationLedger, LedgerError};
pub use compile::{check_static, CheckerConfig, CompileResult, Diagnostic, LanguageChecker, OracleError};
pub use judge::{
    judge_type1, judge_type2, judge_type2_with, pre_label, rejudge, AttemptKey, CaseOutcome, Evidence,
    FailureReason, JudgeError, OutcomeStatus, PreLabel,
};
pub use mechanics::{check_mechanics, parse_params, Finding, MechanicsResult, Rule, RuleParams};
