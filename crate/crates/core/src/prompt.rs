//! Zero-shot prompt rendering from golden template assets.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BugCase, Language, SourceUnit};

pub const TYPE1_TEMPLATE: &str = include_str!("../templates/type1.prompt.txt");
pub const TYPE2_TEMPLATE: &str = include_str!("../templates/type2.prompt.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptKind {
    Type1Check,
    Type2Apply,
}

impl PromptKind {
    pub fn for_case(case: &BugCase) -> Self {
        if case.bug_kind.is_type1() {
            PromptKind::Type1Check
        } else {
            PromptKind::Type2Apply
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub case_id: String,
    pub kind: PromptKind,
    pub text: String,
    pub rendered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("WRONG_KIND: case {case_id} is {actual}, cannot render a {requested:?} prompt")]
    WrongKind {
        case_id: String,
        requested: PromptKind,
        actual: String,
    },
    #[error("case {case_id} has no `{field}`")]
    MissingField { case_id: String, field: &'static str },
    #[error("template error: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

/// A text template with `{name}` slots. Only the names passed to
/// [`Template::parse`] are slots; any other braces are literal text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    source: String,
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(source: &str, slots: &[&str]) -> Result<Self, PromptError> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = source;
        'outer: while !rest.is_empty() {
            if rest.starts_with('{') {
                for slot in slots {
                    let marker = format!("{{{slot}}}");
                    if rest.starts_with(&marker) {
                        if !literal.is_empty() {
                            segments.push(Segment::Literal(std::mem::take(&mut literal)));
                        }
                        segments.push(Segment::Slot((*slot).to_string()));
                        rest = &rest[marker.len()..];
                        continue 'outer;
                    }
                }
            }
            let ch = rest.chars().next().expect("non-empty");
            literal.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        for slot in slots {
            if !segments.iter().any(|s| matches!(s, Segment::Slot(n) if n == slot)) {
                return Err(PromptError::Template(format!("slot `{{{slot}}}` missing")));
            }
        }
        Ok(Self {
            source: source.to_string(),
            segments,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Fills every slot in a single pass, so injected values are never
    /// re-scanned for placeholders.
    pub fn render(&self, values: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(l) => out.push_str(l),
                Segment::Slot(name) => out.push_str(
                    values
                        .get(name.as_str())
                        .ok_or_else(|| PromptError::Template(format!("no value for `{name}`")))?,
                ),
            }
        }
        Ok(out)
    }

    /// Replaces the injected `values` in `rendered` by their slot markers.
    /// Returns `None` when `rendered` is not an instance of this template with
    /// those values.
    pub fn strip(&self, rendered: &str, values: &BTreeMap<&str, &str>) -> Option<String> {
        let mut rest = rendered;
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(l) => {
                    rest = rest.strip_prefix(l.as_str())?;
                    out.push_str(l);
                }
                Segment::Slot(name) => {
                    rest = rest.strip_prefix(*values.get(name.as_str())?)?;
                    out.push('{');
                    out.push_str(name);
                    out.push('}');
                }
            }
        }
        rest.is_empty().then_some(out)
    }
}

/// Flattens a program into one code block. A single unit is emitted as is;
/// several units each get a `file:` header comment in the case language.
/// Trailing newlines of the block are dropped.
pub fn serialize_units(language: Language, units: &[SourceUnit]) -> String {
    let block = if units.len() == 1 {
        units[0].text.clone()
    } else {
        units
            .iter()
            .map(|u| {
                format!(
                    "{} file: {}\n{}",
                    language.line_comment(),
                    u.path,
                    u.text.trim_end_matches('\n')
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    block.trim_end_matches('\n').to_string()
}

/// Renders the two prompt templates.
#[derive(Debug, Clone)]
pub struct PromptForge {
    type1: Template,
    type2: Template,
}

impl Default for PromptForge {
    fn default() -> Self {
        Self::new(TYPE1_TEMPLATE, TYPE2_TEMPLATE).expect("bundled templates are well-formed")
    }
}

impl PromptForge {
    pub const TYPE1_SLOTS: [&'static str; 2] = ["code1", "code2"];
    pub const TYPE2_SLOTS: [&'static str; 3] = ["name", "params", "code"];

    pub fn new(type1: &str, type2: &str) -> Result<Self, PromptError> {
        Ok(Self {
            type1: Template::parse(type1, &Self::TYPE1_SLOTS)?,
            type2: Template::parse(type2, &Self::TYPE2_SLOTS)?,
        })
    }

    pub fn type1_template(&self) -> &Template {
        &self.type1
    }

    pub fn type2_template(&self) -> &Template {
        &self.type2
    }

    pub fn render(&self, case: &BugCase) -> Result<PromptInstance, PromptError> {
        match PromptKind::for_case(case) {
            PromptKind::Type1Check => self.render_type1(case),
            PromptKind::Type2Apply => self.render_type2(case),
        }
    }

    /// Slot values for a case, as injected by the matching template.
    pub fn slot_values(case: &BugCase) -> Result<BTreeMap<&'static str, String>, PromptError> {
        let mut values = BTreeMap::new();
        if case.bug_kind.is_type1() {
            let after = case.after.as_deref().filter(|a| !a.is_empty()).ok_or_else(|| {
                PromptError::MissingField {
                    case_id: case.id.clone(),
                    field: "after",
                }
            })?;
            values.insert("code1", serialize_units(case.language, &case.before));
            values.insert("code2", serialize_units(case.language, after));
        } else {
            let params = case
                .refactoring_params
                .as_deref()
                .ok_or_else(|| PromptError::MissingField {
                    case_id: case.id.clone(),
                    field: "refactoring_params",
                })?;
            values.insert("name", case.refactoring_kind.clone());
            values.insert("params", params.to_string());
            values.insert("code", serialize_units(case.language, &case.before));
        }
        Ok(values)
    }

    pub fn render_type1(&self, case: &BugCase) -> Result<PromptInstance, PromptError> {
        if !case.bug_kind.is_type1() {
            return Err(wrong_kind(case, PromptKind::Type1Check));
        }
        let values = Self::slot_values(case)?;
        self.instance(case, PromptKind::Type1Check, &self.type1, &values)
    }

    pub fn render_type2(&self, case: &BugCase) -> Result<PromptInstance, PromptError> {
        if case.bug_kind.is_type1() {
            return Err(wrong_kind(case, PromptKind::Type2Apply));
        }
        let values = Self::slot_values(case)?;
        self.instance(case, PromptKind::Type2Apply, &self.type2, &values)
    }

    fn instance(
        &self,
        case: &BugCase,
        kind: PromptKind,
        template: &Template,
        values: &BTreeMap<&'static str, String>,
    ) -> Result<PromptInstance, PromptError> {
        let borrowed: BTreeMap<&str, &str> = values.iter().map(|(k, v)| (*k, v.as_str())).collect();
        Ok(PromptInstance {
            case_id: case.id.clone(),
            kind,
            text: template.render(&borrowed)?,
            rendered_at: Utc::now(),
        })
    }
}

fn wrong_kind(case: &BugCase, requested: PromptKind) -> PromptError {
    PromptError::WrongKind {
        case_id: case.id.clone(),
        requested,
        actual: case.bug_kind.to_string(),
    }
}
