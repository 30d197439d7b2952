//! Report files for a run directory. Output depends only on the persisted
//! records, so repeated invocations are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{BugCase, BugKind};
use crate::gateway::{cost_summary, CostGrouping, RateCard};
use crate::metamorph::is_variant_id;
use crate::metrics::{
    case_table, consistency_at_k, detection_table, incorrect_explanation_table, pass_at_k, union_outcomes, CaseTable,
    CorrectnessMatrix, GroupKey, Percentage, RateRow, UNION_BACKEND,
};
use crate::oracle::CaseOutcome;

use super::review::{effective_outcomes, ReviewError};
use super::rundir::{RunDir, RunDirError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Md),
            other => Err(format!("unknown report format `{other}` (csv, json, md)")),
        }
    }
}

pub fn parse_formats(list: &str) -> Result<BTreeSet<ReportFormat>, String> {
    let set: BTreeSet<_> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_, _>>()?;
    if set.is_empty() {
        return Err("no report format given".into());
    }
    Ok(set)
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    RunDir(#[from] RunDirError),
    #[error("{0}")]
    Cost(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BugType {
    Type1,
    Type2,
    /// Case-weighted over both types.
    All,
}

impl BugType {
    fn as_str(self) -> &'static str {
        match self {
            BugType::Type1 => "type1",
            BugType::Type2 => "type2",
            BugType::All => "all",
        }
    }

    fn admits(self, kind: BugKind) -> bool {
        match self {
            BugType::Type1 => kind.is_type1(),
            BugType::Type2 => !kind.is_type1(),
            BugType::All => true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricCell {
    pub backend: String,
    pub temperature: String,
    pub bug_type: BugType,
    pub k: usize,
    pub n: usize,
    pub pending: usize,
    pub value: Option<Percentage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TemperaturePoint {
    pub backend: String,
    pub bug_type: BugType,
    pub temperature: String,
    pub n: usize,
    pub pending: usize,
    pub pass_at_1: Option<Percentage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortReport {
    pub cohort: String,
    pub cases: usize,
    pub outcomes: usize,
    pub pending: usize,
    pub detection_rates: Vec<RateRow>,
    pub incorrect_explanation: Vec<RateRow>,
    pub pass_at_k: Vec<MetricCell>,
    pub consistency_at_k: Vec<MetricCell>,
    pub temperature: Vec<TemperaturePoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    pub backend: String,
    pub group: String,
    pub cost: Decimal,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub k: u32,
    pub cohorts: Vec<CohortReport>,
    pub cost: Vec<CostRow>,
}

fn temp_key(t: f64) -> String {
    format!("{t:.2}")
}

fn cohort_report(name: &str, cases: &[&BugCase], outcomes: &[CaseOutcome], k: usize) -> CohortReport {
    let table: CaseTable = case_table(cases.iter().copied());
    let mut all: Vec<CaseOutcome> = outcomes.to_vec();
    if !outcomes.is_empty() {
        all.extend(union_outcomes(outcomes));
    }
    let group_by = BTreeSet::from([GroupKey::Backend, GroupKey::Temperature, GroupKey::BugKind]);

    let mut cells: BTreeMap<(String, String), Vec<&CaseOutcome>> = BTreeMap::new();
    for o in &all {
        cells.entry((o.backend_name.clone(), temp_key(o.temperature))).or_default().push(o);
    }
    let order = |b: &str| (b == UNION_BACKEND, b.to_string());
    let mut keys: Vec<&(String, String)> = cells.keys().collect();
    keys.sort_by_key(|(b, t)| (order(b), t.clone()));

    let mut pass = Vec::new();
    let mut cons = Vec::new();
    let mut temps = Vec::new();
    for (backend, temperature) in keys {
        let outs = &cells[&(backend.clone(), temperature.clone())];
        for bug_type in [BugType::Type1, BugType::Type2, BugType::All] {
            let ids: Vec<String> = cases.iter().filter(|c| bug_type.admits(c.bug_kind)).map(|c| c.id.clone()).collect();
            if ids.is_empty() {
                continue;
            }
            let m = CorrectnessMatrix::from_outcomes(outs.iter().copied(), &ids, k);
            for kk in 1..=k {
                let cell = |value| MetricCell {
                    backend: backend.clone(),
                    temperature: temperature.clone(),
                    bug_type,
                    k: kk,
                    n: ids.len(),
                    pending: m.pending,
                    value,
                };
                pass.push(cell(pass_at_k(&m, kk).ok()));
                cons.push(cell(consistency_at_k(&m, kk).ok()));
            }
            let m1 = CorrectnessMatrix::from_outcomes(outs.iter().copied(), &ids, 1);
            temps.push(TemperaturePoint {
                backend: backend.clone(),
                bug_type,
                temperature: temperature.clone(),
                n: ids.len(),
                pending: m1.pending,
                pass_at_1: pass_at_k(&m1, 1).ok(),
            });
        }
    }
    temps.sort_by(|a, b| (order(&a.backend), a.bug_type, &a.temperature).cmp(&(order(&b.backend), b.bug_type, &b.temperature)));
    let sort_rows = |mut rows: Vec<RateRow>| {
        rows.sort_by(|a, b| {
            let ka = (order(&a.group[&GroupKey::Backend]), &a.group[&GroupKey::Temperature], &a.group[&GroupKey::BugKind]);
            let kb = (order(&b.group[&GroupKey::Backend]), &b.group[&GroupKey::Temperature], &b.group[&GroupKey::BugKind]);
            ka.cmp(&kb)
        });
        rows
    };
    CohortReport {
        cohort: name.to_string(),
        cases: cases.len(),
        outcomes: outcomes.len(),
        pending: outcomes.iter().filter(|o| o.status.is_pending()).count(),
        detection_rates: sort_rows(detection_table(&all, &table, &group_by)),
        incorrect_explanation: sort_rows(incorrect_explanation_table(outcomes, &table, &group_by)),
        pass_at_k: pass,
        consistency_at_k: cons,
        temperature: temps,
    }
}

/// Computes every metric for the run.
pub fn compute(dir: &RunDir) -> Result<Metrics, ReportError> {
    let config = dir.config()?;
    let k = config.run.k as usize;
    let cases = dir.cases()?;
    let outcomes: Vec<CaseOutcome> = effective_outcomes(dir)?.into_iter().map(|e| e.outcome).collect();
    let mut cohorts = Vec::new();
    for (name, variant) in [("primary", false), ("variants", true)] {
        let members: Vec<&BugCase> = cases.iter().filter(|c| is_variant_id(&c.id) == variant).collect();
        if members.is_empty() {
            continue;
        }
        let ids: BTreeSet<&str> = members.iter().map(|c| c.id.as_str()).collect();
        let outs: Vec<CaseOutcome> = outcomes.iter().filter(|o| ids.contains(o.case_id.as_str())).cloned().collect();
        cohorts.push(cohort_report(name, &members, &outs, k));
    }

    let records = dir.attempts()?;
    let cards: BTreeMap<String, RateCard> = config.backends.iter().map(|b| (b.name.clone(), b.rate_card.clone())).collect();
    let kinds: BTreeMap<String, BugKind> = cases.iter().map(|c| (c.id.clone(), c.bug_kind)).collect();
    let mut cost = Vec::new();
    let mut scopes: Vec<(String, Vec<_>)> = config
        .backends
        .iter()
        .map(|b| (b.name.clone(), records.iter().filter(|r| r.backend_name == b.name).cloned().collect()))
        .collect();
    scopes.push(("ALL".to_string(), records.clone()));
    for (backend, recs) in scopes {
        for grouping in [CostGrouping::Total, CostGrouping::ByBugKind] {
            let sums = cost_summary(&recs, &cards, grouping, &kinds).map_err(|e| ReportError::Cost(e.to_string()))?;
            cost.extend(sums.into_iter().map(|(group, cost)| CostRow {
                backend: backend.clone(),
                group,
                cost,
            }));
        }
    }
    Ok(Metrics {
        k: config.run.k,
        cohorts,
        cost,
    })
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn shown(value: Option<Percentage>, pending: usize) -> String {
    match value {
        Some(v) => v.to_string(),
        None if pending > 0 => format!("partial: {pending} pending"),
        None => String::new(),
    }
}

fn rate_rows(cohort: &str, rows: &[RateRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                cohort.to_string(),
                r.group[&GroupKey::Backend].clone(),
                r.group[&GroupKey::Temperature].clone(),
                r.group[&GroupKey::BugKind].clone(),
                r.numerator.to_string(),
                r.denominator.to_string(),
                shown(r.rate, r.pending as usize),
            ]
        })
        .collect()
}

const RATE_HEADER: [&str; 7] = ["cohort", "backend", "temperature", "bug_kind", "correct", "cases", "rate"];
const K_HEADER: [&str; 7] = ["cohort", "backend", "temperature", "bug_type", "k", "cases", "value"];

fn k_rows(cohort: &str, cells: &[MetricCell]) -> Vec<Vec<String>> {
    cells
        .iter()
        .map(|c| {
            vec![
                cohort.to_string(),
                c.backend.clone(),
                c.temperature.clone(),
                c.bug_type.as_str().to_string(),
                c.k.to_string(),
                c.n.to_string(),
                shown(c.value, c.pending),
            ]
        })
        .collect()
}

pub fn render_csv(m: &Metrics) -> BTreeMap<&'static str, String> {
    let mut out = BTreeMap::new();
    let all = |f: &dyn Fn(&CohortReport) -> Vec<Vec<String>>| m.cohorts.iter().flat_map(f).collect::<Vec<_>>();
    out.insert("detection_rates.csv", csv_text(&RATE_HEADER, all(&|c| rate_rows(&c.cohort, &c.detection_rates))));
    out.insert(
        "incorrect_explanation.csv",
        csv_text(&RATE_HEADER, all(&|c| rate_rows(&c.cohort, &c.incorrect_explanation))),
    );
    out.insert("pass_at_k.csv", csv_text(&K_HEADER, all(&|c| k_rows(&c.cohort, &c.pass_at_k))));
    out.insert("consistency_at_k.csv", csv_text(&K_HEADER, all(&|c| k_rows(&c.cohort, &c.consistency_at_k))));
    out.insert(
        "temperature.csv",
        csv_text(
            &["cohort", "backend", "bug_type", "temperature", "cases", "pass_at_1"],
            all(&|c| {
                c.temperature
                    .iter()
                    .map(|p| {
                        vec![
                            c.cohort.clone(),
                            p.backend.clone(),
                            p.bug_type.as_str().to_string(),
                            p.temperature.clone(),
                            p.n.to_string(),
                            shown(p.pass_at_1, p.pending),
                        ]
                    })
                    .collect()
            }),
        ),
    );
    out.insert(
        "cost.csv",
        csv_text(
            &["backend", "group", "cost"],
            m.cost.iter().map(|c| vec![c.backend.clone(), c.group.clone(), c.cost.to_string()]),
        ),
    );
    out
}

pub fn render_json(m: &Metrics) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn render_md(m: &Metrics) -> String {
    let mut s = String::from("# Run summary\n");
    for c in &m.cohorts {
        let _ = write!(
            s,
            "\n## Cohort `{}`\n\n{} cases, {} outcomes, {} pending.\n\n### Detection rates (attempt 1)\n\n| backend | temperature | bug kind | correct / cases | rate |\n|---|---|---|---|---|\n",
            c.cohort, c.cases, c.outcomes, c.pending
        );
        for r in &c.detection_rates {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} / {} | {} |",
                r.group[&GroupKey::Backend],
                r.group[&GroupKey::Temperature],
                r.group[&GroupKey::BugKind],
                r.numerator,
                r.denominator,
                shown(r.rate, r.pending as usize)
            );
        }
        let _ = write!(s, "\n### pass@k / consistency@k\n\n`all` is the case-weighted mean over both bug types.\n\n| backend | temperature | bug type | k | pass@k | consistency@k |\n|---|---|---|---|---|---|\n");
        for (p, q) in c.pass_at_k.iter().zip(&c.consistency_at_k) {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                p.backend,
                p.temperature,
                p.bug_type.as_str(),
                p.k,
                shown(p.value, p.pending),
                shown(q.value, q.pending)
            );
        }
    }
    let _ = write!(s, "\n## Cost\n\n| backend | group | cost |\n|---|---|---|\n");
    for c in &m.cost {
        let _ = writeln!(s, "| {} | {} | {} |", c.backend, c.group, c.cost);
    }
    s
}

/// Writes the requested report files into `reports/` and returns their paths.
pub fn write_reports(dir: &RunDir, formats: &BTreeSet<ReportFormat>) -> Result<Vec<PathBuf>, ReportError> {
    let metrics = compute(dir)?;
    let out_dir = dir.reports_dir();
    fs::create_dir_all(&out_dir).map_err(|e| ReportError::Io {
        path: out_dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut files: Vec<(String, String)> = Vec::new();
    if formats.contains(&ReportFormat::Csv) {
        files.extend(render_csv(&metrics).into_iter().map(|(n, t)| (n.to_string(), t)));
    }
    if formats.contains(&ReportFormat::Json) {
        files.push(("metrics.json".into(), render_json(&metrics)));
    }
    if formats.contains(&ReportFormat::Md) {
        files.push(("summary.md".into(), render_md(&metrics)));
    }
    let mut paths = Vec::new();
    for (name, text) in files {
        let path = out_dir.join(name);
        let tmp = tempfile::NamedTempFile::new_in(&out_dir).map_err(|e| ReportError::Io {
            path: out_dir.display().to_string(),
            reason: e.to_string(),
        })?;
        fs::write(tmp.path(), text).and_then(|_| tmp.persist(&path).map(|_| ()).map_err(|e| e.error)).map_err(|e| ReportError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        paths.push(path);
    }
    Ok(paths)
}
