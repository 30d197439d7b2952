//! Metamorphic variants of corpus cases: consistent identifier renaming and
//! numeric literal substitution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BugCase, Language, SourceUnit, CASE_SUFFIX};
use crate::lexer::{self, LexError, TokenKind};
use crate::oracle::{check_static, CheckerConfig, OracleError};
use crate::syntax::{self, DeclCategory};

pub const VARIANTS_DIR: &str = "variants";
pub const PLAN_FILE: &str = "plan.json";
const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RenameScope {
    Variables,
    Methods,
    Classes,
    Packages,
    Numbers,
}

impl RenameScope {
    pub const ALL: [RenameScope; 5] = [
        RenameScope::Variables,
        RenameScope::Methods,
        RenameScope::Classes,
        RenameScope::Packages,
        RenameScope::Numbers,
    ];

    fn letter(self) -> char {
        match self {
            RenameScope::Variables => 'v',
            RenameScope::Methods => 'm',
            RenameScope::Classes => 'c',
            RenameScope::Packages => 'p',
            RenameScope::Numbers => 'n',
        }
    }

    fn category(self) -> Option<DeclCategory> {
        match self {
            RenameScope::Variables => Some(DeclCategory::Variable),
            RenameScope::Methods => Some(DeclCategory::Method),
            RenameScope::Classes => Some(DeclCategory::Class),
            RenameScope::Packages => Some(DeclCategory::Package),
            RenameScope::Numbers => None,
        }
    }
}

impl FromStr for RenameScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().trim_end_matches('s') {
            "variable" => Ok(RenameScope::Variables),
            "method" => Ok(RenameScope::Methods),
            "classe" | "class" => Ok(RenameScope::Classes),
            "package" => Ok(RenameScope::Packages),
            "number" => Ok(RenameScope::Numbers),
            _ => Err(format!("unknown scope `{s}` (variables, methods, classes, packages, numbers)")),
        }
    }
}

impl fmt::Display for RenameScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RenameScope::Variables => "variables",
            RenameScope::Methods => "methods",
            RenameScope::Classes => "classes",
            RenameScope::Packages => "packages",
            RenameScope::Numbers => "numbers",
        })
    }
}

/// Parses a comma-separated scope list such as `classes,numbers`.
pub fn parse_scope(list: &str) -> Result<BTreeSet<RenameScope>, String> {
    let scope: BTreeSet<_> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(RenameScope::from_str)
        .collect::<Result<_, _>>()?;
    if scope.is_empty() {
        return Err("empty scope".into());
    }
    Ok(scope)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenamePlan {
    pub seed: u64,
    pub identifier_map: BTreeMap<String, String>,
    /// Decimal literal digits to replacement digits; suffixes are kept.
    pub literal_map: BTreeMap<String, String>,
    /// Class and package renames, which also apply to file and directory names.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub path_map: BTreeMap<String, String>,
    pub scope: BTreeSet<RenameScope>,
}

impl RenamePlan {
    pub fn inverse(&self) -> RenamePlan {
        RenamePlan {
            seed: self.seed,
            identifier_map: self.identifier_map.iter().map(|(a, b)| (b.clone(), a.clone())).collect(),
            literal_map: self.literal_map.iter().map(|(a, b)| (b.clone(), a.clone())).collect(),
            path_map: self.path_map.iter().map(|(a, b)| (b.clone(), a.clone())).collect(),
            scope: self.scope.clone(),
        }
    }
}

/// Oracle statuses of a program pair: `before` and, for Type I, `after`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticStatus {
    pub before_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetamorphicVariant {
    pub parent_id: String,
    pub variant_id: String,
    pub plan: RenamePlan,
    pub case: BugCase,
    pub verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_status: Option<StaticStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_status: Option<StaticStatus>,
}

#[derive(Debug, Error)]
pub enum MetamorphError {
    #[error("RENAME_COLLISION: no fresh name for `{name}` after {attempts} attempts")]
    RenameCollision { name: String, attempts: usize },
    #[error("{0}")]
    Unlexable(#[from] LexError),
    #[error("no fresh literal value available for `{0}`")]
    LiteralsExhausted(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

const CLASS_WORDS: &[&str] = &[
    "Widget", "Ledger", "Beacon", "Harbor", "Prism", "Falcon", "Quartz", "Meadow", "Lantern",
    "Compass", "Summit", "Orchard", "Cobalt", "Vertex", "Anchor", "Cipher", "Glacier", "Horizon",
    "Nimbus", "Pylon", "Relay", "Saddle", "Timber", "Vessel", "Willow", "Zephyr", "Canyon",
    "Dynamo", "Ember", "Fjord",
];
const METHOD_WORDS: &[&str] = &[
    "compute", "fetch", "render", "probe", "gather", "resolve", "settle", "emit", "refresh",
    "tally", "forge", "measure", "align", "dispatch", "convert", "inspect", "collect", "extract",
    "verify", "balance", "compose", "derive", "launch", "merge", "observe", "prepare", "rotate",
    "shape", "track", "weave",
];
const VARIABLE_WORDS: &[&str] = &[
    "amount", "buffer", "cursor", "delta", "entry", "factor", "gauge", "handle", "weight",
    "label", "marker", "offset", "payload", "quota", "ratio", "sample", "token", "unit",
    "width", "counter", "total", "limit", "origin", "level", "scale", "speed", "depth", "msg",
    "score", "tally",
];
const PACKAGE_WORDS: &[&str] = &[
    "alpha", "bravo", "orbit", "nova", "terra", "lumen", "vortex", "pixel", "atlas", "quill",
];

fn words_for(category: DeclCategory) -> &'static [&'static str] {
    match category {
        DeclCategory::Class => CLASS_WORDS,
        DeclCategory::Method => METHOD_WORDS,
        DeclCategory::Variable => VARIABLE_WORDS,
        DeclCategory::Package => PACKAGE_WORDS,
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
        .unwrap_or_default()
}

fn candidate(rng: &mut ChaCha8Rng, category: DeclCategory, attempt: usize) -> String {
    let words = words_for(category);
    let first = *words.choose(rng).expect("non-empty list");
    if attempt < words.len() {
        return first.to_string();
    }
    let second = *words.choose(rng).expect("non-empty list");
    match category {
        DeclCategory::Package => format!("{first}{second}"),
        _ => format!("{first}{}", capitalize(second)),
    }
}

fn word_set(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$'))
        .filter(|w| !w.is_empty())
}

fn units_of(case: &BugCase) -> Vec<&SourceUnit> {
    case.before.iter().chain(case.after.iter().flatten()).collect()
}

/// Builds a rename plan for `case` (deterministic in case, seed and scope).
pub fn plan_variant(case: &BugCase, seed: u64, scope: &BTreeSet<RenameScope>) -> Result<RenamePlan, MetamorphError> {
    let lang = case.language;
    let units = units_of(case);
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut numbers: BTreeSet<u64> = BTreeSet::new();
    let mut literals: BTreeSet<u64> = BTreeSet::new();
    for unit in &units {
        for tok in lexer::tokenize(lang, &unit.text)? {
            match tok.kind {
                TokenKind::Ident | TokenKind::Keyword => {
                    taken.insert(tok.text.to_string());
                }
                TokenKind::Number => {
                    if let Some((v, _)) = lexer::decimal_literal(tok.text) {
                        numbers.insert(v);
                        if v != 0 {
                            literals.insert(v);
                        }
                    } else {
                        // keep any digits of other forms out of the fresh pool
                        if let Ok(v) = tok.text.trim_end_matches(|c: char| !c.is_ascii_digit()).parse::<u64>() {
                            numbers.insert(v);
                        }
                    }
                }
                _ => {}
            }
        }
        for comp in unit.path.split(['/', '\\', '.']) {
            taken.insert(comp.to_string());
        }
    }
    for text in [case.refactoring_params.as_deref().unwrap_or(""), &case.ground_truth_reason.text] {
        for w in word_set(text) {
            taken.insert(w.to_string());
            if let Ok(v) = w.parse::<u64>() {
                numbers.insert(v);
            }
        }
    }

    let pinned: BTreeSet<&str> = case.pinned_identifiers.iter().map(String::as_str).collect();
    let categories: BTreeSet<DeclCategory> = scope.iter().filter_map(|s| s.category()).collect();
    let declared = syntax::declared_names(lang, &units)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut identifier_map = BTreeMap::new();
    let mut path_map = BTreeMap::new();
    for (name, category) in declared {
        if !categories.contains(&category) || pinned.contains(name.as_str()) || lexer::is_reserved(lang, &name) {
            continue;
        }
        let mut fresh = None;
        for attempt in 0..MAX_ATTEMPTS {
            let c = candidate(&mut rng, category, attempt);
            if lexer::is_valid_identifier(lang, &c) && !lexer::is_reserved(lang, &c) && !taken.contains(&c) {
                fresh = Some(c);
                break;
            }
        }
        let fresh = fresh.ok_or_else(|| MetamorphError::RenameCollision {
            name: name.clone(),
            attempts: MAX_ATTEMPTS,
        })?;
        taken.insert(fresh.clone());
        if matches!(category, DeclCategory::Class | DeclCategory::Package) {
            path_map.insert(name.clone(), fresh.clone());
        }
        identifier_map.insert(name, fresh);
    }

    let mut literal_map = BTreeMap::new();
    if scope.contains(&RenameScope::Numbers) {
        let mut used = numbers.clone();
        for v in literals {
            let free: Vec<u64> = (2..=999u64).filter(|x| !used.contains(x)).collect();
            if free.is_empty() {
                return Err(MetamorphError::LiteralsExhausted(v.to_string()));
            }
            let fresh = free[rng.gen_range(0..free.len())];
            used.insert(fresh);
            literal_map.insert(v.to_string(), fresh.to_string());
        }
    }

    Ok(RenamePlan {
        seed,
        identifier_map,
        literal_map,
        path_map,
        scope: scope.clone(),
    })
}

fn rewrite_source(lang: Language, src: &str, plan: &RenamePlan) -> Result<String, LexError> {
    let mut out = String::with_capacity(src.len());
    for tok in lexer::tokenize(lang, src)? {
        match tok.kind {
            TokenKind::Ident => match plan.identifier_map.get(tok.text) {
                Some(new) => out.push_str(new),
                None => out.push_str(tok.text),
            },
            TokenKind::Number => match lexer::decimal_literal(tok.text) {
                Some((v, suffix)) => match plan.literal_map.get(&v.to_string()) {
                    Some(new) => {
                        out.push_str(new);
                        out.push_str(suffix);
                    }
                    None => out.push_str(tok.text),
                },
                None => out.push_str(tok.text),
            },
            _ => out.push_str(tok.text),
        }
    }
    Ok(out)
}

/// Whole-word identifier and decimal-number substitution in free text.
fn rewrite_words(text: &str, plan: &RenamePlan) -> String {
    let mut out = String::with_capacity(text.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        match plan.identifier_map.get(word.as_str()).or_else(|| plan.literal_map.get(word.as_str())) {
            Some(new) => out.push_str(new),
            None => out.push_str(word),
        }
        word.clear();
    };
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' || c == '$' {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

/// Rewrites words only inside backtick code spans.
fn rewrite_code_spans(text: &str, plan: &RenamePlan) -> String {
    text.split('`')
        .enumerate()
        .map(|(i, part)| if i % 2 == 1 { rewrite_words(part, plan) } else { part.to_string() })
        .collect::<Vec<_>>()
        .join("`")
}

fn rewrite_path(path: &str, plan: &RenamePlan) -> String {
    let parts: Vec<&str> = path.split('/').collect();
    let last = parts.len() - 1;
    parts
        .iter()
        .enumerate()
        .map(|(i, comp)| {
            let (stem, ext) = if i == last {
                match comp.rfind('.') {
                    Some(dot) if dot > 0 => (&comp[..dot], &comp[dot..]),
                    _ => (*comp, ""),
                }
            } else {
                (*comp, "")
            };
            match plan.path_map.get(stem) {
                Some(new) => format!("{new}{ext}"),
                None => comp.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("/")
}

fn rewrite_units(lang: Language, units: &[SourceUnit], plan: &RenamePlan) -> Result<Vec<SourceUnit>, LexError> {
    units
        .iter()
        .map(|u| Ok(SourceUnit::new(rewrite_path(&u.path, plan), rewrite_source(lang, &u.text, plan)?)))
        .collect()
}

/// Applies `plan` to every program, the parameters and the code spans of
/// the ground-truth explanation. Identity, kinds and decisions are kept.
pub fn apply_plan(case: &BugCase, plan: &RenamePlan) -> Result<BugCase, MetamorphError> {
    let lang = case.language;
    let mut out = case.clone();
    out.before = rewrite_units(lang, &case.before, plan)?;
    out.after = case.after.as_ref().map(|a| rewrite_units(lang, a, plan)).transpose()?;
    out.refactoring_params = case.refactoring_params.as_ref().map(|p| rewrite_words(p, plan));
    out.ground_truth_reason.text = rewrite_code_spans(&case.ground_truth_reason.text, plan);
    Ok(out)
}

pub fn variant_id(parent_id: &str, seed: u64, scope: &BTreeSet<RenameScope>) -> String {
    let letters: String = scope.iter().map(|s| s.letter()).collect();
    format!("{parent_id}~v{seed}-{letters}")
}

/// Whether `id` names a generated variant.
pub fn is_variant_id(id: &str) -> bool {
    id.rsplit_once("~v").is_some_and(|(_, tail)| tail.starts_with(|c: char| c.is_ascii_digit()))
}

pub fn generate_variant(case: &BugCase, seed: u64, scope: &BTreeSet<RenameScope>) -> Result<MetamorphicVariant, MetamorphError> {
    let plan = plan_variant(case, seed, scope)?;
    let mut rewritten = apply_plan(case, &plan)?;
    let id = variant_id(&case.id, seed, scope);
    rewritten.id = id.clone();
    let scope_list: Vec<String> = scope.iter().map(ToString::to_string).collect();
    rewritten.provenance = format!("variant of {} (seed {seed}, scope {})", case.id, scope_list.join(","));
    Ok(MetamorphicVariant {
        parent_id: case.id.clone(),
        variant_id: id,
        plan,
        case: rewritten,
        verified: false,
        parent_status: None,
        variant_status: None,
    })
}

/// Static-check status of a case's programs.
pub fn static_status(case: &BugCase, workspace: &Path, checkers: &CheckerConfig) -> Result<StaticStatus, OracleError> {
    let before_ok = check_static(case.language, &case.before, &workspace.join("before"), checkers)?.ok;
    let after_ok = match &case.after {
        Some(after) if case.bug_kind.is_type1() => Some(check_static(case.language, after, &workspace.join("after"), checkers)?.ok),
        _ => None,
    };
    Ok(StaticStatus { before_ok, after_ok })
}

/// Marks the variant verified iff its oracle statuses equal the parent's.
pub fn verify_variant(
    mut variant: MetamorphicVariant,
    parent_status: StaticStatus,
    workspace: &Path,
    checkers: &CheckerConfig,
) -> Result<MetamorphicVariant, OracleError> {
    let status = static_status(&variant.case, workspace, checkers)?;
    variant.verified = status == parent_status;
    variant.parent_status = Some(parent_status);
    variant.variant_status = Some(status);
    Ok(variant)
}

/// Per-variant record kept in `variants/<parent>/plan.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub plan: RenamePlan,
    pub verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_status: Option<StaticStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_status: Option<StaticStatus>,
}

fn io_err(path: &Path, e: impl fmt::Display) -> MetamorphError {
    MetamorphError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<(), MetamorphError> {
    let dir = path.parent().expect("file has a parent");
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    fs::write(tmp.path(), text).map_err(|e| io_err(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// Writes the variant case document and records its plan. Returns the case path.
pub fn persist_variant(root: &Path, variant: &MetamorphicVariant) -> Result<PathBuf, MetamorphError> {
    let dir = root.join(VARIANTS_DIR).join(&variant.parent_id);
    let case_path = dir.join(format!("{}{CASE_SUFFIX}", variant.variant_id));
    write_atomic(&case_path, &variant.case.to_json())?;
    let plan_path = dir.join(PLAN_FILE);
    let mut plans = read_plans(&plan_path)?;
    plans.insert(
        variant.variant_id.clone(),
        PlanEntry {
            plan: variant.plan.clone(),
            verified: variant.verified,
            parent_status: variant.parent_status,
            variant_status: variant.variant_status,
        },
    );
    let mut text = serde_json::to_string_pretty(&plans).expect("plans serialize");
    text.push('\n');
    write_atomic(&plan_path, &text)?;
    Ok(case_path)
}

fn read_plans(path: &Path) -> Result<BTreeMap<String, PlanEntry>, MetamorphError> {
    match fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| io_err(path, e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
        Err(e) => Err(io_err(path, e)),
    }
}

/// Every persisted variant under `root/variants`, sorted by id.
pub fn load_variants(root: &Path) -> Result<Vec<MetamorphicVariant>, MetamorphError> {
    let base = root.join(VARIANTS_DIR);
    let mut out = Vec::new();
    let Ok(parents) = fs::read_dir(&base) else {
        return Ok(out);
    };
    let mut dirs: Vec<PathBuf> = parents.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    dirs.sort();
    for dir in dirs {
        let plans = read_plans(&dir.join(PLAN_FILE))?;
        let parent_id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        for (id, entry) in plans {
            let path = dir.join(format!("{id}{CASE_SUFFIX}"));
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let case = BugCase::from_json(&text).map_err(|e| io_err(&path, e))?;
            out.push(MetamorphicVariant {
                parent_id: parent_id.clone(),
                variant_id: id,
                plan: entry.plan,
                case,
                verified: entry.verified,
                parent_status: entry.parent_status,
                variant_status: entry.variant_status,
            });
        }
    }
    out.sort_by(|a, b| a.variant_id.cmp(&b.variant_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BugKind, Decision, GroundTruthReason, ReasonCategory};
    use proptest::prelude::*;

    const SUPER_CALL_BEFORE: &str = "public class A {\n  public int k() {\n    return 10;\n  }\n}\npublic class B extends A {\n  public int k() {\n    return 20;\n  }\n  public int m() {\n    return super.k();\n  }\n}\npublic class C extends B {\n  public static void main(String[] args) {\n    C c = new C();\n    System.out.println(c.m());\n  }\n}\n";
    const SUPER_CALL_AFTER: &str = "public class A {\n  public int k() {\n    return 10;\n  }\n}\npublic class B extends A {\n  public int k() {\n    return 20;\n  }\n}\npublic class C extends B {\n  public int m() {\n    return super.k();\n  }\n  public static void main(String[] args) {\n    C c = new C();\n    System.out.println(c.m());\n  }\n}\n";

    fn super_call() -> BugCase {
        BugCase {
            id: "super_call".into(),
            language: Language::Java,
            refactoring_kind: "Push Down Method".into(),
            bug_kind: BugKind::Type1BehaviorChange,
            before: vec![SourceUnit::new("Main.java", SUPER_CALL_BEFORE)],
            after: Some(vec![SourceUnit::new("Main.java", SUPER_CALL_AFTER)]),
            refactoring_params: None,
            expected_decision: Decision::No,
            ground_truth_reason: GroundTruthReason {
                category: ReasonCategory::BehaviorChange,
                text: "`super.k()` in `C.m` now binds to `B.k`, so the output changes from 10 to 20".into(),
            },
            provenance: String::new(),
            pinned_identifiers: vec![],
        }
    }

    fn keyword() -> BugCase {
        BugCase {
            id: "keyword".into(),
            language: Language::Python,
            refactoring_kind: "Rename Variable".into(),
            bug_kind: BugKind::Type1CompileError,
            before: vec![SourceUnit::new("b.py", "class B:\n  def a(self) -> None:\n    text = 'hello'\n")],
            after: Some(vec![SourceUnit::new("b.py", "class B:\n  def a(self) -> None:\n    continue = 'hello'\n")]),
            refactoring_params: None,
            expected_decision: Decision::No,
            ground_truth_reason: GroundTruthReason {
                category: ReasonCategory::CompileError,
                text: "`continue` is a reserved keyword".into(),
            },
            provenance: String::new(),
            pinned_identifiers: vec!["continue".into()],
        }
    }

    fn scope(s: &str) -> BTreeSet<RenameScope> {
        parse_scope(s).unwrap()
    }

    #[test]
    fn class_rename_is_consistent() {
        let v = generate_variant(&super_call(), 1, &scope("classes")).unwrap();
        let map = &v.plan.identifier_map;
        assert_eq!(map.keys().collect::<Vec<_>>(), ["A", "B", "C"]);
        let b = &map["B"];
        let after = &v.case.after.as_ref().unwrap()[0].text;
        assert!(after.contains(&format!("class {} extends {}", map["C"], b)));
        assert!(v.case.before[0].text.contains("super.k()"));
        assert!(v.case.ground_truth_reason.text.contains(&format!("`{}.m`", map["C"])));
        assert_eq!(v.case.bug_kind, BugKind::Type1BehaviorChange);
        assert_eq!(v.variant_id, "super_call~v1-c");
    }

    #[test]
    fn numbers_keep_distinctness() {
        let v = generate_variant(&super_call(), 7, &scope("numbers")).unwrap();
        let m = &v.plan.literal_map;
        assert_eq!(m.len(), 2);
        assert_ne!(m["10"], m["20"]);
        assert!(v.case.before[0].text.contains(&format!("return {};", m["10"])));
        assert!(v.plan.identifier_map.is_empty());
    }

    #[test]
    fn pinned_bug_token_survives() {
        let v = generate_variant(&keyword(), 3, &scope("variables")).unwrap();
        assert!(v.plan.identifier_map.contains_key("text"));
        assert!(v.case.after.as_ref().unwrap()[0].text.contains("continue = 'hello'"));
        assert!(!v.case.before[0].text.contains("text"));
    }

    #[test]
    fn params_track_renames() {
        let mut c = super_call();
        c.bug_kind = BugKind::Type2BlockedValid;
        c.after = None;
        c.refactoring_params = Some("push down B.m to class C".into());
        let v = generate_variant(&c, 2, &scope("classes,methods")).unwrap();
        let m = &v.plan.identifier_map;
        assert_eq!(
            v.case.refactoring_params.unwrap(),
            format!("push down {}.{} to class {}", m["B"], m["m"], m["C"])
        );
    }

    #[test]
    fn class_named_file_follows_rename() {
        let mut c = super_call();
        c.before = vec![SourceUnit::new("src/A.java", "public class A {}\n")];
        c.after = Some(vec![SourceUnit::new("src/A.java", "public class A { }\n")]);
        let v = generate_variant(&c, 4, &scope("classes")).unwrap();
        assert_eq!(v.case.before[0].path, format!("src/{}.java", v.plan.identifier_map["A"]));
    }

    #[test]
    fn only_type_names_rename_files() {
        let mut c = super_call();
        c.language = Language::C;
        c.before = vec![SourceUnit::new("clamp.c", "int clamp(int v) {\n  return v + 12;\n}\n")];
        c.after = Some(vec![SourceUnit::new("clamp.c", "int clamp(int v) {\n  return v;\n}\n")]);
        c.ground_truth_reason.text = "`clamp(3)` returns `15`, then `3`; prose 12 stays".into();
        let v = generate_variant(&c, 9, &scope("methods,classes,numbers")).unwrap();
        assert_eq!(v.case.before[0].path, "clamp.c");
        let fresh = &v.plan.identifier_map["clamp"];
        assert!(v.case.ground_truth_reason.text.starts_with(&format!("`{fresh}(3)`")));
        assert!(v.case.ground_truth_reason.text.ends_with("prose 12 stays"));
        let n = &v.plan.literal_map["12"];
        assert!(!["3", "15"].contains(&n.as_str()));
    }

    #[test]
    fn persisted_variants_reload() {
        let dir = tempfile::tempdir().unwrap();
        let a = generate_variant(&super_call(), 1, &scope("classes")).unwrap();
        let b = generate_variant(&super_call(), 2, &scope("classes")).unwrap();
        persist_variant(dir.path(), &a).unwrap();
        persist_variant(dir.path(), &b).unwrap();
        let back = load_variants(dir.path()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn scope_parsing() {
        assert_eq!(scope("classes, numbers").len(), 2);
        assert!(parse_scope("colors").is_err());
        assert!(parse_scope("").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn inverse_restores_parent(seed in any::<u64>(), bits in 1u8..32) {
            let sc: BTreeSet<_> = RenameScope::ALL.iter().enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0).map(|(_, s)| *s).collect();
            for parent in [super_call(), keyword()] {
                let v = generate_variant(&parent, seed, &sc).unwrap();
                let mut back = apply_plan(&v.case, &v.plan.inverse()).unwrap();
                back.id = parent.id.clone();
                back.provenance = parent.provenance.clone();
                prop_assert_eq!(&back, &parent);
                for fresh in v.plan.identifier_map.values() {
                    prop_assert!(!lexer::is_reserved(parent.language, fresh));
                    prop_assert!(lexer::is_valid_identifier(parent.language, fresh));
                }
                let again = generate_variant(&parent, seed, &sc).unwrap();
                prop_assert_eq!(again, v);
            }
        }
    }
}
