//! Declarative structure checks for transformed programs.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{BugCase, SourceUnit};
use crate::syntax::{self, ClassInfo, DeclCategory, MemberKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub check: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanicsResult {
    pub applicable_rule: String,
    pub ok: bool,
    pub findings: Vec<Finding>,
}

impl MechanicsResult {
    fn from_findings(rule: &str, findings: Vec<Finding>) -> Self {
        Self {
            applicable_rule: rule.to_string(),
            ok: findings.iter().all(|f| f.pass),
            findings,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    PullUpMethod,
    PushDownMethod,
    PullUpField,
    PushDownField,
    RenameMethod,
    RenameVariable,
    RenameField,
    RenameClass,
}

impl Rule {
    pub const ALL: [Rule; 8] = [
        Rule::PullUpMethod,
        Rule::PushDownMethod,
        Rule::PullUpField,
        Rule::PushDownField,
        Rule::RenameMethod,
        Rule::RenameVariable,
        Rule::RenameField,
        Rule::RenameClass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::PullUpMethod => "Pull Up Method",
            Rule::PushDownMethod => "Push Down Method",
            Rule::PullUpField => "Pull Up Field",
            Rule::PushDownField => "Push Down Field",
            Rule::RenameMethod => "Rename Method",
            Rule::RenameVariable => "Rename Variable",
            Rule::RenameField => "Rename Field",
            Rule::RenameClass => "Rename Class",
        }
    }

    pub fn for_kind(kind: &str) -> Option<Rule> {
        let norm = kind.split_whitespace().collect::<Vec<_>>().join(" ");
        Rule::ALL.into_iter().find(|r| r.name().eq_ignore_ascii_case(&norm))
    }

    fn member_kind(self) -> MemberKind {
        match self {
            Rule::PullUpMethod | Rule::PushDownMethod | Rule::RenameMethod => MemberKind::Method,
            _ => MemberKind::Field,
        }
    }
}

/// Parsed refactoring parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleParams {
    /// Move `member` (optionally qualified by its declaring class) to `targets`.
    Move {
        source: Option<String>,
        member: String,
        targets: Vec<String>,
    },
    Rename {
        owner: Option<String>,
        old: String,
        new: String,
    },
}

fn move_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*(?:pull\s+up|push\s+down)\s+(?:(?:method|field)\s+)?(?:(?P<src>\w+)\.)?(?P<member>\w+)(?:\s*\(\s*\))?(?:\s+from\s+(?:class\s+)?(?P<from>\w+))?\s+(?:to|into)\s+(?:(?:the\s+)?(?:class|classes|superclass|subclass|subclasses)\s+)?(?P<targets>\w+(?:\s*(?:,|and)\s*\w+)*)\s*$",
        )
        .expect("valid regex")
    })
}

fn rename_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*rename\s+(?:(?:method|variable|field|class|parameter|local)\s+)?(?:(?P<owner>\w+)\.)?(?P<old>\w+)(?:\s*\(\s*\))?\s+to\s+(?P<new>\w+)\s*$",
        )
        .expect("valid regex")
    })
}

/// Parses the parameters of a registered rule. `Ok(None)` when no rule is
/// registered for `kind`.
pub fn parse_params(kind: &str, params: &str) -> Result<Option<(Rule, RuleParams)>, String> {
    let Some(rule) = Rule::for_kind(kind) else {
        return Ok(None);
    };
    let text = params.trim().trim_end_matches(['.', '?', '!']);
    let parsed = match rule {
        Rule::PullUpMethod | Rule::PushDownMethod | Rule::PullUpField | Rule::PushDownField => {
            move_re().captures(text).map(|c| RuleParams::Move {
                source: c.name("src").or_else(|| c.name("from")).map(|m| m.as_str().to_string()),
                member: c["member"].to_string(),
                targets: Regex::new(r"\s*(?:,|\band\b)\s*")
                    .expect("valid regex")
                    .split(&c["targets"])
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
            })
        }
        _ => rename_re().captures(text).map(|c| RuleParams::Rename {
            owner: c.name("owner").map(|m| m.as_str().to_string()),
            old: c["old"].to_string(),
            new: c["new"].to_string(),
        }),
    };
    parsed
        .map(|p| Some((rule, p)))
        .ok_or_else(|| format!("cannot read `{params}` as {} parameters", rule.name()))
}

fn finding(check: impl Into<String>, pass: bool) -> Finding {
    Finding {
        check: check.into(),
        pass,
    }
}

fn noun(kind: MemberKind) -> &'static str {
    match kind {
        MemberKind::Method => "method",
        MemberKind::Field => "field",
    }
}

/// Evaluates the rule registered for `case.refactoring_kind` against
/// `transformed`. Unregistered kinds pass with a `NO_RULE` finding.
pub fn check_mechanics(case: &BugCase, transformed: &[SourceUnit]) -> MechanicsResult {
    let params = case.refactoring_params.as_deref().unwrap_or("");
    let (rule, spec) = match parse_params(&case.refactoring_kind, params) {
        Ok(Some(found)) => found,
        Ok(None) => {
            return MechanicsResult::from_findings(
                "none",
                vec![finding(
                    format!("NO_RULE: no mechanics rule for `{}`", case.refactoring_kind),
                    true,
                )],
            )
        }
        Err(e) => return MechanicsResult::from_findings(Rule::for_kind(&case.refactoring_kind).map_or("none", Rule::name), vec![finding(e, false)]),
    };
    let lang = case.language;
    let after = match syntax::classes(lang, transformed) {
        Ok(c) => c,
        Err(e) => return MechanicsResult::from_findings(rule.name(), vec![finding(format!("transformed program does not lex: {e}"), false)]),
    };
    let before = syntax::classes(lang, &case.before).unwrap_or_default();
    let findings = match (&spec, rule) {
        (RuleParams::Move { source, member, targets }, Rule::PullUpMethod | Rule::PullUpField) => {
            let kind = rule.member_kind();
            let sources: Vec<String> = match source {
                Some(s) => vec![s.clone()],
                None => before
                    .iter()
                    .filter(|c| c.declares(member, kind) && !targets.contains(&c.name))
                    .map(|c| c.name.clone())
                    .collect(),
            };
            let mut f = present_in(&after, targets, member, kind);
            f.extend(absent_from(&after, &sources, member, kind));
            f
        }
        (RuleParams::Move { source, member, targets }, _) => {
            let kind = rule.member_kind();
            let sources: Vec<String> = match source {
                Some(s) => vec![s.clone()],
                None => before
                    .iter()
                    .filter(|c| c.declares(member, kind) && !targets.contains(&c.name))
                    .map(|c| c.name.clone())
                    .take(1)
                    .collect(),
            };
            let mut f = absent_from(&after, &sources, member, kind);
            f.extend(present_in(&after, targets, member, kind));
            f
        }
        (RuleParams::Rename { owner, old, new }, _) => rename_findings(case, rule, transformed, &after, owner.as_deref(), old, new),
    };
    MechanicsResult::from_findings(rule.name(), findings)
}

fn find<'a>(classes: &'a [ClassInfo], name: &str) -> Option<&'a ClassInfo> {
    classes.iter().find(|c| c.name == name)
}

fn present_in(classes: &[ClassInfo], targets: &[String], member: &str, kind: MemberKind) -> Vec<Finding> {
    targets
        .iter()
        .map(|t| match find(classes, t) {
            Some(c) => finding(
                format!("{} {member} declared in {t}", noun(kind)),
                c.declares(member, kind),
            ),
            None => finding(format!("class {t} not found"), false),
        })
        .collect()
}

fn absent_from(classes: &[ClassInfo], sources: &[String], member: &str, kind: MemberKind) -> Vec<Finding> {
    if sources.is_empty() {
        return vec![finding(format!("{} {member} has a declaring class in the original program", noun(kind)), false)];
    }
    sources
        .iter()
        .map(|s| match find(classes, s) {
            Some(c) => finding(
                format!("{} {member} removed from {s}", noun(kind)),
                !c.declares(member, kind),
            ),
            None => finding(format!("class {s} not found"), false),
        })
        .collect()
}

fn rename_findings(
    case: &BugCase,
    rule: Rule,
    transformed: &[SourceUnit],
    after: &[ClassInfo],
    owner: Option<&str>,
    old: &str,
    new: &str,
) -> Vec<Finding> {
    let category = match rule {
        Rule::RenameMethod => DeclCategory::Method,
        Rule::RenameClass => DeclCategory::Class,
        _ => DeclCategory::Variable,
    };
    let mut declared = Vec::new();
    for unit in transformed {
        match syntax::declarations(case.language, &unit.text) {
            Ok(d) => declared.extend(d),
            Err(e) => return vec![finding(format!("transformed program does not lex: {e}"), false)],
        }
    }
    let has = |name: &str| declared.iter().any(|d| d.name == name && d.category == category);
    let what = match category {
        DeclCategory::Method => "method",
        DeclCategory::Class => "class",
        _ => "variable",
    };
    let mut findings = Vec::new();
    let owner_class = owner.filter(|_| rule != Rule::RenameClass).and_then(|o| find(after, o));
    match owner_class {
        Some(c) if matches!(rule, Rule::RenameMethod | Rule::RenameField) => {
            let kind = rule.member_kind();
            findings.push(finding(format!("{what} {old} no longer declared in {}", c.name), !c.declares(old, kind)));
            findings.push(finding(format!("{what} {new} declared in {}", c.name), c.declares(new, kind)));
        }
        _ => {
            findings.push(finding(format!("{what} {old} no longer declared"), !has(old)));
            findings.push(finding(format!("{what} {new} declared"), has(new)));
        }
    }
    findings
}
