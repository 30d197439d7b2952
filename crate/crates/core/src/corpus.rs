//! Refactoring-bug corpus: case documents, the refactoring registry and
//! per-language / per-kind tallies.
//!
//! Each case lives in its own `<id>.case.json` document. Loading never stops
//! at the first bad document; every problem is collected and returned next to
//! the index of well-formed cases.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File suffix of a case document.
pub const CASE_SUFFIX: &str = ".case.json";
/// Registry of known refactoring kinds, one per line.
pub const REGISTRY_FILE: &str = "refactorings.txt";
/// Default cap on the total number of lines of a case's `before` program.
pub const DEFAULT_LOC_CAP: usize = 61;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Java,
    Python,
    C,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::Java, Language::Python, Language::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Java => "java",
            Language::Python => "python",
            Language::C => "c",
        }
    }

    /// Extension of a compilable source file, without the dot.
    pub fn source_extension(self) -> &'static str {
        match self {
            Language::Java => "java",
            Language::Python => "py",
            Language::C => "c",
        }
    }

    /// Line-comment prefix used for `file:` headers.
    pub fn line_comment(self) -> &'static str {
        match self {
            Language::Java | Language::C => "//",
            Language::Python => "#",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "java" => Ok(Language::Java),
            "python" | "py" => Ok(Language::Python),
            "c" => Ok(Language::C),
            other => Err(format!("unknown language `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugKind {
    #[serde(rename = "type1_compile_error")]
    Type1CompileError,
    #[serde(rename = "type1_runtime_error")]
    Type1RuntimeError,
    #[serde(rename = "type1_behavior_change")]
    Type1BehaviorChange,
    #[serde(rename = "type2_blocked_valid")]
    Type2BlockedValid,
}

impl BugKind {
    pub const ALL: [BugKind; 4] = [
        BugKind::Type1CompileError,
        BugKind::Type1RuntimeError,
        BugKind::Type1BehaviorChange,
        BugKind::Type2BlockedValid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BugKind::Type1CompileError => "type1_compile_error",
            BugKind::Type1RuntimeError => "type1_runtime_error",
            BugKind::Type1BehaviorChange => "type1_behavior_change",
            BugKind::Type2BlockedValid => "type2_blocked_valid",
        }
    }

    pub fn is_type1(self) -> bool {
        !matches!(self, BugKind::Type2BlockedValid)
    }

    /// The ground-truth reason category a case of this kind must carry.
    pub fn expected_reason(self) -> ReasonCategory {
        match self {
            BugKind::Type1CompileError => ReasonCategory::CompileError,
            BugKind::Type1RuntimeError => ReasonCategory::RuntimeError,
            BugKind::Type1BehaviorChange => ReasonCategory::BehaviorChange,
            BugKind::Type2BlockedValid => ReasonCategory::NotApplicable,
        }
    }
}

impl fmt::Display for BugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BugKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        BugKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown bug kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Yes,
    No,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Yes => "YES",
            Decision::No => "NO",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCategory {
    CompileError,
    RuntimeError,
    BehaviorChange,
    NotApplicable,
}

impl ReasonCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCategory::CompileError => "compile_error",
            ReasonCategory::RuntimeError => "runtime_error",
            ReasonCategory::BehaviorChange => "behavior_change",
            ReasonCategory::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
}

impl SourceUnit {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            text: text.into(),
        }
    }

    pub fn line_count(&self) -> usize {
        self.text.lines().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthReason {
    pub category: ReasonCategory,
    pub text: String,
}

/// One corpus entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BugCase {
    pub id: String,
    pub language: Language,
    pub refactoring_kind: String,
    pub bug_kind: BugKind,
    pub before: Vec<SourceUnit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<Vec<SourceUnit>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refactoring_params: Option<String>,
    pub expected_decision: Decision,
    pub ground_truth_reason: GroundTruthReason,
    pub provenance: String,
    /// Identifiers the metamorphic generator must never rename.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned_identifiers: Vec<String>,
}

impl BugCase {
    pub fn before_loc(&self) -> usize {
        self.before.iter().map(SourceUnit::line_count).sum()
    }

    /// Parses a case document. Unknown fields are rejected.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Canonical document bytes: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("case serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Error,
    Warning,
}

/// A named invariant a case fails to satisfy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Violation {
    EmptyId,
    EmptyBefore,
    EmptyPath { unit: usize },
    DuplicatePath { path: String },
    EmptyText { path: String },
    Type1MissingAfter,
    Type1HasParams,
    Type1ExpectsNo,
    Type2HasAfter,
    Type2MissingParams,
    Type2ExpectsYes,
    ReasonMismatch { expected: ReasonCategory, found: ReasonCategory },
    ExceedsLineCap { lines: usize, cap: usize },
}

impl Violation {
    pub fn severity(&self) -> Severity {
        match self {
            Violation::ExceedsLineCap { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }

    /// Name of the case field the violation is about.
    pub fn field(&self) -> &'static str {
        match self {
            Violation::EmptyId => "id",
            Violation::EmptyBefore | Violation::ExceedsLineCap { .. } => "before",
            Violation::EmptyPath { .. } | Violation::DuplicatePath { .. } | Violation::EmptyText { .. } => {
                "before/after"
            }
            Violation::Type1MissingAfter | Violation::Type2HasAfter => "after",
            Violation::Type1HasParams | Violation::Type2MissingParams => "refactoring_params",
            Violation::Type1ExpectsNo | Violation::Type2ExpectsYes => "expected_decision",
            Violation::ReasonMismatch { .. } => "ground_truth_reason",
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyId => "EMPTY_ID",
            Violation::EmptyBefore => "EMPTY_BEFORE",
            Violation::EmptyPath { .. } => "EMPTY_PATH",
            Violation::DuplicatePath { .. } => "DUPLICATE_PATH",
            Violation::EmptyText { .. } => "EMPTY_TEXT",
            Violation::Type1MissingAfter => "TYPE1_MISSING_AFTER",
            Violation::Type1HasParams => "TYPE1_HAS_PARAMS",
            Violation::Type1ExpectsNo => "TYPE1_EXPECTS_NO",
            Violation::Type2HasAfter => "TYPE2_HAS_AFTER",
            Violation::Type2MissingParams => "TYPE2_MISSING_PARAMS",
            Violation::Type2ExpectsYes => "TYPE2_EXPECTS_YES",
            Violation::ReasonMismatch { .. } => "REASON_MISMATCH",
            Violation::ExceedsLineCap { .. } => "EXCEEDS_LINE_CAP",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPath { unit } => write!(f, "{}: unit #{unit}", self.code()),
            Violation::DuplicatePath { path } | Violation::EmptyText { path } => {
                write!(f, "{}: {path}", self.code())
            }
            Violation::ReasonMismatch { expected, found } => write!(
                f,
                "{}: expected {}, found {}",
                self.code(),
                expected.as_str(),
                found.as_str()
            ),
            Violation::ExceedsLineCap { lines, cap } => {
                write!(f, "{}: {lines} lines > {cap}", self.code())
            }
            _ => f.write_str(self.code()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub loc_cap: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            loc_cap: DEFAULT_LOC_CAP,
        }
    }
}

/// Checks every case invariant with the default line cap.
pub fn validate_case(case: &BugCase) -> Vec<Violation> {
    validate_case_with(case, &ValidationOptions::default())
}

pub fn validate_case_with(case: &BugCase, opts: &ValidationOptions) -> Vec<Violation> {
    let mut out = Vec::new();
    if case.id.trim().is_empty() {
        out.push(Violation::EmptyId);
    }
    if case.before.is_empty() {
        out.push(Violation::EmptyBefore);
    }
    check_units(&case.before, &mut out);
    if let Some(after) = &case.after {
        check_units(after, &mut out);
    }

    if case.bug_kind.is_type1() {
        if case.after.as_ref().map_or(true, |a| a.is_empty()) {
            out.push(Violation::Type1MissingAfter);
        }
        if case.refactoring_params.is_some() {
            out.push(Violation::Type1HasParams);
        }
        if case.expected_decision != Decision::No {
            out.push(Violation::Type1ExpectsNo);
        }
    } else {
        if case.after.is_some() {
            out.push(Violation::Type2HasAfter);
        }
        if case
            .refactoring_params
            .as_deref()
            .map_or(true, |p| p.trim().is_empty())
        {
            out.push(Violation::Type2MissingParams);
        }
        if case.expected_decision != Decision::Yes {
            out.push(Violation::Type2ExpectsYes);
        }
    }

    let expected = case.bug_kind.expected_reason();
    if case.ground_truth_reason.category != expected {
        out.push(Violation::ReasonMismatch {
            expected,
            found: case.ground_truth_reason.category,
        });
    }

    let lines = case.before_loc();
    if lines > opts.loc_cap {
        out.push(Violation::ExceedsLineCap {
            lines,
            cap: opts.loc_cap,
        });
    }
    out
}

fn check_units(units: &[SourceUnit], out: &mut Vec<Violation>) {
    let mut seen = BTreeSet::new();
    for (i, unit) in units.iter().enumerate() {
        if unit.path.trim().is_empty() {
            out.push(Violation::EmptyPath { unit: i });
        } else if !seen.insert(unit.path.as_str()) {
            out.push(Violation::DuplicatePath {
                path: unit.path.clone(),
            });
        }
        if unit.text.is_empty() {
            out.push(Violation::EmptyText {
                path: unit.path.clone(),
            });
        }
    }
}

/// A problem found while loading one document.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaseProblem {
    #[error("MALFORMED_CASE {id}: {field}: {reason}")]
    Malformed {
        id: String,
        field: String,
        reason: String,
    },
    #[error("DUPLICATE_ID {id}: {first} and {second}")]
    DuplicateId {
        id: String,
        first: PathBuf,
        second: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("UNKNOWN_ID {0}")]
    UnknownId(String),
    #[error("selector field `{0}` is present but empty")]
    EmptySelectorField(&'static str),
}

pub type Counts = BTreeMap<Language, BTreeMap<BugKind, usize>>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusIndex {
    cases: Vec<BugCase>,
    registry: BTreeSet<String>,
    counts: Counts,
}

impl CorpusIndex {
    /// Builds an index, sorting cases by id.
    pub fn new(mut cases: Vec<BugCase>, registry: BTreeSet<String>) -> Self {
        cases.sort_by(|a, b| a.id.cmp(&b.id));
        let counts = tally(&cases);
        Self {
            cases,
            registry,
            counts,
        }
    }

    pub fn cases(&self) -> &[BugCase] {
        &self.cases
    }

    pub fn registry(&self) -> &BTreeSet<String> {
        &self.registry
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    pub fn count(&self, language: Language, kind: BugKind) -> usize {
        self.counts
            .get(&language)
            .and_then(|m| m.get(&kind))
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&BugCase> {
        self.cases
            .binary_search_by(|c| c.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.cases[i])
    }
}

fn tally(cases: &[BugCase]) -> Counts {
    let mut counts = Counts::new();
    for case in cases {
        *counts
            .entry(case.language)
            .or_default()
            .entry(case.bug_kind)
            .or_default() += 1;
    }
    counts
}

/// Result of scanning a corpus directory.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub index: CorpusIndex,
    pub problems: Vec<CaseProblem>,
    /// Warning-level violations of cases that were still loaded.
    pub warnings: Vec<(String, Violation)>,
}

/// Directory names skipped while scanning a corpus root.
const SKIPPED_DIRS: &[&str] = &["variants"];

/// Loads every `*.case.json` document under `root` (recursively, skipping
/// `variants/`), validates it and indexes the well-formed ones by id.
pub fn load_corpus(root: &Path) -> Result<LoadReport, CorpusError> {
    load_corpus_with(root, &ValidationOptions::default())
}

pub fn load_corpus_with(root: &Path, opts: &ValidationOptions) -> Result<LoadReport, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::MissingRoot(root.to_path_buf()));
    }
    let registry = load_registry(root)?;
    let mut files = Vec::new();
    collect_case_files(root, &mut files)?;
    files.sort();

    let mut report = LoadReport::default();
    let mut by_id: BTreeMap<String, (PathBuf, BugCase)> = BTreeMap::new();
    for path in files {
        let stem = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(CASE_SUFFIX))
            .unwrap_or_default()
            .to_string();
        let text = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
            path: path.clone(),
            source,
        })?;
        let case = match parse_case_document(&stem, &text, &registry, opts) {
            Ok((case, warnings)) => {
                report
                    .warnings
                    .extend(warnings.into_iter().map(|w| (case.id.clone(), w)));
                case
            }
            Err(problem) => {
                report.problems.push(problem);
                continue;
            }
        };
        if let Some((first, _)) = by_id.get(&case.id) {
            report.problems.push(CaseProblem::DuplicateId {
                id: case.id.clone(),
                first: first.clone(),
                second: path,
            });
            continue;
        }
        by_id.insert(case.id.clone(), (path, case));
    }
    report.index = CorpusIndex::new(by_id.into_values().map(|(_, c)| c).collect(), registry);
    Ok(report)
}

/// Parses and validates one case document whose file stem is `stem`.
/// Returns the case and its warning-level violations.
pub fn parse_case_document(
    stem: &str,
    text: &str,
    registry: &BTreeSet<String>,
    opts: &ValidationOptions,
) -> Result<(BugCase, Vec<Violation>), CaseProblem> {
    let case = BugCase::from_json(text).map_err(|e| CaseProblem::Malformed {
        id: stem.to_string(),
        field: field_of_serde_error(&e),
        reason: e.to_string(),
    })?;
    if case.id != stem {
        return Err(CaseProblem::Malformed {
            id: stem.to_string(),
            field: "id".into(),
            reason: format!("id `{}` does not match file name", case.id),
        });
    }
    if !registry.is_empty() && !registry.contains(&case.refactoring_kind) {
        return Err(CaseProblem::Malformed {
            id: case.id.clone(),
            field: "refactoring_kind".into(),
            reason: format!("`{}` is not in {REGISTRY_FILE}", case.refactoring_kind),
        });
    }
    let (errors, warnings): (Vec<_>, Vec<_>) = validate_case_with(&case, opts)
        .into_iter()
        .partition(|v| v.severity() == Severity::Error);
    if let Some(first) = errors.first() {
        let reason = errors
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CaseProblem::Malformed {
            id: case.id.clone(),
            field: first.field().to_string(),
            reason,
        });
    }
    Ok((case, warnings))
}

fn field_of_serde_error(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["missing field `", "unknown field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "document".to_string()
}

/// Reads `refactorings.txt`; a missing file yields an empty (unchecked) registry.
pub fn load_registry(root: &Path) -> Result<BTreeSet<String>, CorpusError> {
    let path = root.join(REGISTRY_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(parse_registry(&text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeSet::new()),
        Err(source) => Err(CorpusError::Io { path, source }),
    }
}

pub fn parse_registry(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn collect_case_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if path.is_dir() {
            if !SKIPPED_DIRS.contains(&name.as_ref()) {
                collect_case_files(&path, out)?;
            }
        } else if name.ends_with(CASE_SUFFIX) {
            out.push(path);
        }
    }
    Ok(())
}

/// Subset selection. `None` fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSelector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub languages: Option<Vec<Language>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_kinds: Option<Vec<BugKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refactoring_kinds: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
}

impl CaseSelector {
    pub fn matches(&self, case: &BugCase) -> bool {
        self.languages
            .as_ref()
            .map_or(true, |l| l.contains(&case.language))
            && self
                .bug_kinds
                .as_ref()
                .map_or(true, |k| k.contains(&case.bug_kind))
            && self
                .refactoring_kinds
                .as_ref()
                .map_or(true, |r| r.contains(&case.refactoring_kind))
            && self.ids.as_ref().map_or(true, |ids| ids.contains(&case.id))
    }
}

/// Returns the cases matching `selector`, order preserved and counts recomputed.
pub fn filter_cases(index: &CorpusIndex, selector: &CaseSelector) -> Result<CorpusIndex, CorpusError> {
    if selector.languages.as_ref().is_some_and(Vec::is_empty) {
        return Err(CorpusError::EmptySelectorField("languages"));
    }
    if selector.bug_kinds.as_ref().is_some_and(Vec::is_empty) {
        return Err(CorpusError::EmptySelectorField("bug_kinds"));
    }
    if selector.refactoring_kinds.as_ref().is_some_and(Vec::is_empty) {
        return Err(CorpusError::EmptySelectorField("refactoring_kinds"));
    }
    if let Some(ids) = &selector.ids {
        if ids.is_empty() {
            return Err(CorpusError::EmptySelectorField("ids"));
        }
        if let Some(missing) = ids.iter().find(|id| index.get(id).is_none()) {
            return Err(CorpusError::UnknownId(missing.clone()));
        }
    }
    let cases = index
        .cases
        .iter()
        .filter(|c| selector.matches(c))
        .cloned()
        .collect();
    Ok(CorpusIndex::new(cases, index.registry.clone()))
}
