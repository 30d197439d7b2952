//! pass@k, consistency@k, detection and explanation rates over judged outcomes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{BugCase, BugKind, Language, ReasonCategory};
use crate::oracle::adjudication::same_temperature;
use crate::oracle::{CaseOutcome, FailureReason, OutcomeStatus};
use crate::verdict::VerdictDecision;

pub const UNION_BACKEND: &str = "UNION";

/// Exact percentage; rounded half-up to one decimal only when shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percentage(Ratio<u64>);

impl Percentage {
    /// `100 * num / den`. `den` must be positive.
    pub fn of(num: u64, den: u64) -> Self {
        Percentage(Ratio::new(100 * num, den))
    }

    pub fn exact(&self) -> Ratio<u64> {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// Value in tenths of a percent, rounded half-up.
    pub fn tenths(&self) -> u64 {
        let (p, q) = (*self.0.numer(), *self.0.denom());
        (20 * p + q) / (2 * q)
    }
}

impl fmt::Display for Percentage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.tenths();
        write!(f, "{}.{}", t / 10, t % 10)
    }
}

impl Serialize for Percentage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.tenths() as f64 / 10.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("K_OUT_OF_RANGE: k={k} not in 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("PENDING_OUTCOMES: {pending} outcome(s) not decided")]
    PendingOutcomes { pending: usize },
    #[error("DUPLICATE_TEMPERATURE: {0}")]
    DuplicateTemperature(f64),
    #[error("EMPTY_MATRIX: no cases to score")]
    EmptyMatrix,
    #[error("RAGGED_MATRIX: row `{label}` has {len} attempts, expected {k}")]
    Ragged { label: String, len: usize, k: usize },
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::KOutOfRange { .. } => "K_OUT_OF_RANGE",
            MetricsError::PendingOutcomes { .. } => "PENDING_OUTCOMES",
            MetricsError::DuplicateTemperature(_) => "DUPLICATE_TEMPERATURE",
            MetricsError::EmptyMatrix => "EMPTY_MATRIX",
            MetricsError::Ragged { .. } => "RAGGED_MATRIX",
        }
    }
}

/// Per-case correctness of attempts 1..=k in attempt order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessMatrix {
    pub k: usize,
    pub labels: Vec<String>,
    pub rows: Vec<Vec<bool>>,
    /// Attempts not yet decided, including attempts with no outcome at all.
    pub pending: usize,
}

impl CorrectnessMatrix {
    pub fn from_rows(labels: Vec<String>, rows: Vec<Vec<bool>>, k: usize) -> Result<Self, MetricsError> {
        for (label, row) in labels.iter().zip(&rows) {
            if row.len() != k {
                return Err(MetricsError::Ragged {
                    label: label.clone(),
                    len: row.len(),
                    k,
                });
            }
        }
        Ok(CorrectnessMatrix {
            k,
            labels,
            rows,
            pending: 0,
        })
    }

    /// Builds a matrix from outcomes of one (backend, temperature) cell.
    /// Undecided or missing attempts count as incorrect and as pending.
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a CaseOutcome>, case_ids: &[String], k: usize) -> Self {
        let mut by_case: BTreeMap<&str, BTreeMap<u32, &CaseOutcome>> = BTreeMap::new();
        for o in outcomes {
            by_case.entry(o.case_id.as_str()).or_default().insert(o.attempt_index, o);
        }
        let mut pending = 0;
        let rows = case_ids
            .iter()
            .map(|id| {
                (1..=k as u32)
                    .map(|a| match by_case.get(id.as_str()).and_then(|m| m.get(&a)) {
                        Some(o) if o.status == OutcomeStatus::Decided => o.correct,
                        _ => {
                            pending += 1;
                            false
                        }
                    })
                    .collect()
            })
            .collect();
        CorrectnessMatrix {
            k,
            labels: case_ids.to_vec(),
            rows,
            pending,
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// c_i over the first `k` attempts.
    pub fn counts(&self, k: usize) -> Vec<usize> {
        self.rows.iter().map(|r| r[..k].iter().filter(|&&b| b).count()).collect()
    }

    fn check(&self, k: usize) -> Result<(), MetricsError> {
        if k < 1 || k > self.k {
            return Err(MetricsError::KOutOfRange { k, max: self.k });
        }
        if self.pending > 0 {
            return Err(MetricsError::PendingOutcomes { pending: self.pending });
        }
        if self.rows.is_empty() {
            return Err(MetricsError::EmptyMatrix);
        }
        Ok(())
    }
}

pub fn pass_at_k(m: &CorrectnessMatrix, k: usize) -> Result<Percentage, MetricsError> {
    m.check(k)?;
    let hits = m.counts(k).iter().filter(|&&c| c >= 1).count();
    Ok(Percentage::of(hits as u64, m.n() as u64))
}

pub fn consistency_at_k(m: &CorrectnessMatrix, k: usize) -> Result<Percentage, MetricsError> {
    m.check(k)?;
    let total: usize = m.counts(k).iter().sum();
    Ok(Percentage::of(total as u64, (m.n() * k) as u64))
}

/// One point per temperature, ascending.
pub fn temperature_series(cells: &[(f64, CorrectnessMatrix)]) -> Result<Vec<(f64, Percentage)>, MetricsError> {
    let mut sorted: Vec<&(f64, CorrectnessMatrix)> = cells.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if same_temperature(w[0].0, w[1].0) {
            return Err(MetricsError::DuplicateTemperature(w[1].0));
        }
    }
    sorted.into_iter().map(|(t, m)| Ok((*t, pass_at_k(m, 1)?))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Backend,
    Temperature,
    BugKind,
    Language,
    ReasonCategory,
}

impl GroupKey {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::Backend => "backend",
            GroupKey::Temperature => "temperature",
            GroupKey::BugKind => "bug_kind",
            GroupKey::Language => "language",
            GroupKey::ReasonCategory => "reason_category",
        }
    }
}

/// Case attributes used for grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseInfo {
    pub bug_kind: BugKind,
    pub language: Language,
    pub reason: ReasonCategory,
}

impl CaseInfo {
    pub fn of(case: &BugCase) -> Self {
        CaseInfo {
            bug_kind: case.bug_kind,
            language: case.language,
            reason: case.ground_truth_reason.category,
        }
    }
}

pub type CaseTable = BTreeMap<String, CaseInfo>;

pub fn case_table<'a>(cases: impl IntoIterator<Item = &'a BugCase>) -> CaseTable {
    cases.into_iter().map(|c| (c.id.clone(), CaseInfo::of(c))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    /// Group key name to value, in `GroupKey` order.
    pub group: BTreeMap<GroupKey, String>,
    pub numerator: u64,
    pub denominator: u64,
    pub pending: u64,
    /// `None` while any outcome in the group is pending.
    pub rate: Option<Percentage>,
}

fn group_value(key: GroupKey, o: &CaseOutcome, info: &CaseInfo) -> String {
    match key {
        GroupKey::Backend => o.backend_name.clone(),
        GroupKey::Temperature => format!("{:.2}", o.temperature),
        GroupKey::BugKind => info.bug_kind.to_string(),
        GroupKey::Language => info.language.as_str().to_string(),
        GroupKey::ReasonCategory => info.reason.as_str().to_string(),
    }
}

fn grouped_rows(
    outcomes: &[CaseOutcome],
    cases: &CaseTable,
    group_by: &BTreeSet<GroupKey>,
    hit: impl Fn(&CaseOutcome, &CaseInfo) -> bool,
) -> Vec<RateRow> {
    let mut groups: BTreeMap<BTreeMap<GroupKey, String>, (u64, u64, u64)> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| o.attempt_index == 1) {
        let Some(info) = cases.get(&o.case_id) else {
            log::warn!("outcome for unknown case {}", o.case_id);
            continue;
        };
        let key = group_by.iter().map(|&g| (g, group_value(g, o, info))).collect();
        let cell = groups.entry(key).or_default();
        cell.1 += 1;
        if o.status.is_pending() {
            cell.2 += 1;
        } else if hit(o, info) {
            cell.0 += 1;
        }
    }
    groups
        .into_iter()
        .map(|(group, (num, den, pending))| RateRow {
            group,
            numerator: num,
            denominator: den,
            pending,
            rate: (pending == 0).then(|| Percentage::of(num, den)),
        })
        .collect()
}

fn strict(rows: Vec<RateRow>) -> Result<Vec<RateRow>, MetricsError> {
    let pending: u64 = rows.iter().map(|r| r.pending).sum();
    if pending > 0 {
        return Err(MetricsError::PendingOutcomes { pending: pending as usize });
    }
    Ok(rows)
}

/// Attempt-1 detection rates, keeping groups with pending outcomes marked.
pub fn detection_table(outcomes: &[CaseOutcome], cases: &CaseTable, group_by: &BTreeSet<GroupKey>) -> Vec<RateRow> {
    grouped_rows(outcomes, cases, group_by, |o, _| o.correct)
}

pub fn detection_rates(outcomes: &[CaseOutcome], cases: &CaseTable, group_by: &BTreeSet<GroupKey>) -> Result<Vec<RateRow>, MetricsError> {
    strict(detection_table(outcomes, cases, group_by))
}

fn bad_explanation(o: &CaseOutcome, info: &CaseInfo) -> bool {
    let ev = &o.evidence;
    if info.bug_kind.is_type1() {
        ev.verdict_decision == VerdictDecision::No && ev.failure_reason == FailureReason::BadExplanation
    } else {
        ev.verdict_decision == VerdictDecision::Yes
            && matches!(ev.failure_reason, FailureReason::OutputNotCompiling | FailureReason::MechanicsViolated)
    }
}

/// Type I: right NO with a wrong explanation. Type II: YES whose code fails
/// the static check or the mechanics rule.
pub fn incorrect_explanation_table(outcomes: &[CaseOutcome], cases: &CaseTable, group_by: &BTreeSet<GroupKey>) -> Vec<RateRow> {
    grouped_rows(outcomes, cases, group_by, bad_explanation)
}

pub fn incorrect_explanation_rate(
    outcomes: &[CaseOutcome],
    cases: &CaseTable,
    group_by: &BTreeSet<GroupKey>,
) -> Result<Vec<RateRow>, MetricsError> {
    strict(incorrect_explanation_table(outcomes, cases, group_by))
}

/// Synthetic outcomes for the union of backends: per case, temperature and
/// attempt, correct if any backend is. Undecided only if none is correct
/// and some backend is still pending.
pub fn union_outcomes(outcomes: &[CaseOutcome]) -> Vec<CaseOutcome> {
    let mut cells: BTreeMap<(String, u64, u32), Vec<&CaseOutcome>> = BTreeMap::new();
    for o in outcomes {
        let t = (o.temperature * 100.0).round() as u64;
        cells.entry((o.case_id.clone(), t, o.attempt_index)).or_default().push(o);
    }
    cells
        .into_values()
        .map(|group| {
            let winner = group.iter().find(|o| o.correct && o.status == OutcomeStatus::Decided);
            let pending = group.iter().find(|o| o.status.is_pending());
            let base = winner.or(pending).unwrap_or(&group[0]);
            let mut u = (*base).clone();
            u.backend_name = UNION_BACKEND.to_string();
            u
        })
        .collect()
}
