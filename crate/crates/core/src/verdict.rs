//! Extraction of a decision, explanation and transformed program from raw
//! model output.

use serde::{Deserialize, Serialize};

use crate::corpus::SourceUnit;
use crate::prompt::PromptKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictDecision {
    Yes,
    No,
    Unparseable,
}

impl VerdictDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictDecision::Yes => "YES",
            VerdictDecision::No => "NO",
            VerdictDecision::Unparseable => "UNPARSEABLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionSource {
    ExactFirstLine,
    Recovered,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: VerdictDecision,
    pub decision_source: DecisionSource,
    pub body: String,
    pub extracted_units: Vec<SourceUnit>,
    pub reasoning_stripped: bool,
}

impl Verdict {
    /// Decision line followed by the body; reparsing it yields the same decision.
    pub fn canonical_text(&self) -> String {
        match self.decision {
            VerdictDecision::Unparseable => self.body.clone(),
            d => format!("{}\n{}", d.as_str(), self.body),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Non-blank lines scanned for a standalone decision token when the
    /// first line is not an exact answer.
    pub recovery_window: usize,
    /// Minimum length of an unfenced code run.
    pub min_code_run: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            recovery_window: 5,
            min_code_run: 3,
        }
    }
}

const REASONING_TAGS: &[&str] = &["think", "thinking", "reasoning", "thought"];

pub fn parse(raw: &str, expected_kind: PromptKind) -> Verdict {
    parse_with(raw, expected_kind, &ParseOptions::default())
}

pub fn parse_with(raw: &str, expected_kind: PromptKind, opts: &ParseOptions) -> Verdict {
    let (text, reasoning_stripped) = strip_reasoning(raw);
    let text = text.trim_matches(|c: char| c.is_whitespace());

    let (decision, decision_source, body) = match exact_first_line(text) {
        Some((d, rest)) => (d, DecisionSource::ExactFirstLine, rest.trim().to_string()),
        None => match recover(text, opts.recovery_window) {
            Some(d) => {
                log::debug!("decision {} recovered from preamble", d.as_str());
                (d, DecisionSource::Recovered, text.to_string())
            }
            None => (VerdictDecision::Unparseable, DecisionSource::None, text.to_string()),
        },
    };

    let extracted_units = match expected_kind {
        PromptKind::Type2Apply if decision == VerdictDecision::Yes => extract_units(&body, opts),
        _ => Vec::new(),
    };

    Verdict {
        decision,
        decision_source,
        body,
        extracted_units,
        reasoning_stripped,
    }
}

/// Removes every leading `<think>...</think>`-style block. An unclosed block
/// is left in place.
fn strip_reasoning(raw: &str) -> (&str, bool) {
    let mut rest = raw;
    let mut stripped = false;
    'blocks: loop {
        let trimmed = rest.trim_start();
        for tag in REASONING_TAGS {
            let open = format!("<{tag}>");
            let close = format!("</{tag}>");
            if trimmed.get(..open.len()).is_some_and(|p| p.eq_ignore_ascii_case(&open)) {
                let lower = trimmed.to_ascii_lowercase();
                if let Some(end) = lower.find(&close) {
                    rest = &trimmed[end + close.len()..];
                    stripped = true;
                    continue 'blocks;
                }
            }
        }
        return (rest, stripped);
    }
}

fn trim_decoration(line: &str) -> &str {
    line.trim_matches(|c: char| {
        c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '*' | '_' | '~' | '“' | '”' | '‘' | '’')
    })
}

fn decision_word(word: &str) -> Option<VerdictDecision> {
    if word.eq_ignore_ascii_case("yes") {
        Some(VerdictDecision::Yes)
    } else if word.eq_ignore_ascii_case("no") {
        Some(VerdictDecision::No)
    } else {
        None
    }
}

fn exact_first_line(text: &str) -> Option<(VerdictDecision, &str)> {
    let (first, rest) = match text.split_once('\n') {
        Some((f, r)) => (f, r),
        None => (text, ""),
    };
    decision_word(trim_decoration(first)).map(|d| (d, rest))
}

/// First standalone all-caps `YES` or `NO` within the window.
fn recover(text: &str, window: usize) -> Option<VerdictDecision> {
    for line in text.lines().filter(|l| !l.trim().is_empty()).take(window) {
        let bytes = line.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                match &line[start..i] {
                    "YES" => return Some(VerdictDecision::Yes),
                    "NO" => return Some(VerdictDecision::No),
                    _ => {}
                }
            } else {
                i += 1;
            }
        }
    }
    None
}

fn file_header(line: &str) -> Option<&str> {
    let t = line.trim();
    let rest = t.strip_prefix("//").or_else(|| t.strip_prefix('#'))?;
    let path = rest.trim_start().strip_prefix("file:")?.trim();
    (!path.is_empty()).then_some(path)
}

fn fence_marker(line: &str) -> Option<&'static str> {
    let t = line.trim_start();
    if t.starts_with("```") {
        Some("```")
    } else if t.starts_with("~~~") {
        Some("~~~")
    } else {
        None
    }
}

/// Fenced blocks in order. An unterminated final block runs to the end.
fn fenced_blocks(text: &str) -> Vec<Vec<&str>> {
    let mut blocks = Vec::new();
    let mut current: Option<(&str, Vec<&str>)> = None;
    for line in text.lines() {
        match &mut current {
            None => {
                if let Some(marker) = fence_marker(line) {
                    current = Some((marker, Vec::new()));
                }
            }
            Some((marker, lines)) => {
                if line.trim() == *marker {
                    blocks.push(std::mem::take(lines));
                    current = None;
                } else {
                    lines.push(line);
                }
            }
        }
    }
    if let Some((_, lines)) = current {
        blocks.push(lines);
    }
    blocks
}

fn looks_like_code(line: &str) -> bool {
    let t = line.trim_end();
    t.ends_with('{') || t.ends_with('}') || t.ends_with(';') || t.ends_with(':')
}

/// Longest run of code-looking lines; the earliest wins a tie.
fn unfenced_run<'a>(text: &'a str, min: usize) -> Option<Vec<&'a str>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < lines.len() {
        if !looks_like_code(lines[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < lines.len() && looks_like_code(lines[i]) {
            i += 1;
        }
        let len = i - start;
        if len >= min.max(1) && best.map_or(true, |(_, l)| len > l) {
            best = Some((start, len));
        }
    }
    best.map(|(s, l)| lines[s..s + l].to_vec())
}

fn extract_units(body: &str, opts: &ParseOptions) -> Vec<SourceUnit> {
    let mut blocks = fenced_blocks(body);
    if blocks.is_empty() {
        if let Some(run) = unfenced_run(body, opts.min_code_run) {
            log::debug!("no fenced code; took a {}-line unfenced run", run.len());
            blocks.push(run);
        }
    }
    let mut units: Vec<SourceUnit> = Vec::new();
    for block in blocks {
        let mut path: Option<String> = None;
        let mut lines: Vec<&str> = Vec::new();
        let flush = |path: &mut Option<String>, lines: &mut Vec<&str>, units: &mut Vec<SourceUnit>| {
            if path.is_none() && lines.iter().all(|l| l.trim().is_empty()) {
                lines.clear();
                return;
            }
            let fallback = format!("unit{}", units.len() + 1);
            let name = match path.take() {
                Some(p) if !units.iter().any(|u| u.path == p) => p,
                _ => fallback,
            };
            units.push(SourceUnit::new(name, lines.join("\n")));
            lines.clear();
        };
        for line in block {
            if let Some(p) = file_header(line) {
                flush(&mut path, &mut lines, &mut units);
                path = Some(p.to_string());
            } else {
                lines.push(line);
            }
        }
        flush(&mut path, &mut lines, &mut units);
    }
    units
}
