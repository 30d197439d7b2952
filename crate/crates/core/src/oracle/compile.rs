//! External static checkers (compilers, syntax checks, type checkers).

use std::collections::BTreeSet;
use std::fs;
use std::io::Read;
use std::path::{Component, Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::corpus::{Language, SourceUnit};
use crate::syntax;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileResult {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
    /// Each command run, shell-quoted, in order.
    pub tool_invocation: Vec<String>,
    pub duration_ms: u64,
    /// Combined stdout and stderr of every command, workspace paths made relative.
    pub raw_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("CHECKER_NOT_FOUND: `{program}` ({language} checker) could not be started")]
    CheckerNotFound { language: Language, program: String },
    #[error("WORKSPACE_IO_ERROR: {0}")]
    WorkspaceIo(String),
    #[error("CHECKER_TIMEOUT: `{command}` exceeded {secs} s")]
    CheckerTimeout { command: String, secs: u64 },
    #[error("no source units to check")]
    NoUnits,
    #[error("bad checker command `{0}`")]
    BadCommand(String),
}

impl OracleError {
    pub fn code(&self) -> &'static str {
        match self {
            OracleError::CheckerNotFound { .. } => "CHECKER_NOT_FOUND",
            OracleError::WorkspaceIo(_) => "WORKSPACE_IO_ERROR",
            OracleError::CheckerTimeout { .. } => "CHECKER_TIMEOUT",
            OracleError::NoUnits => "NO_UNITS",
            OracleError::BadCommand(_) => "BAD_CHECKER_COMMAND",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageChecker {
    /// Command template; `{files}` expands to the source files, `{dir}` to
    /// the workspace directory.
    pub cmd: String,
    /// Optional second checker run after `cmd` succeeds (e.g. a type checker).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_cmd: Option<String>,
}

impl LanguageChecker {
    fn new(cmd: &str) -> Self {
        Self {
            cmd: cmd.to_string(),
            type_cmd: None,
        }
    }
}

fn default_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckerConfig {
    #[serde(default = "CheckerConfig::default_java")]
    pub java: LanguageChecker,
    #[serde(default = "CheckerConfig::default_python")]
    pub python: LanguageChecker,
    #[serde(default = "CheckerConfig::default_c")]
    pub c: LanguageChecker,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        Self {
            java: Self::default_java(),
            python: Self::default_python(),
            c: Self::default_c(),
            timeout_secs: default_timeout(),
        }
    }
}

impl CheckerConfig {
    fn default_java() -> LanguageChecker {
        LanguageChecker::new("javac -d {dir} {files}")
    }
    fn default_python() -> LanguageChecker {
        LanguageChecker::new("python3 -m py_compile {files}")
    }
    fn default_c() -> LanguageChecker {
        LanguageChecker::new("cc -fsyntax-only -std=c11 -pedantic-errors {files}")
    }

    pub fn for_language(&self, lang: Language) -> &LanguageChecker {
        match lang {
            Language::Java => &self.java,
            Language::Python => &self.python,
            Language::C => &self.c,
        }
    }
}

/// Keeps only plain relative components so unit paths stay inside the workspace.
fn sanitize(path: &str) -> Option<PathBuf> {
    let mut out = PathBuf::new();
    for comp in Path::new(path).components() {
        if let Component::Normal(c) = comp {
            out.push(c);
        }
    }
    (!out.as_os_str().is_empty()).then_some(out)
}

fn with_extension(path: PathBuf, lang: Language) -> PathBuf {
    let ext = lang.source_extension();
    let has = |e: &str| path.extension().is_some_and(|x| x == e);
    if has(ext) || (lang == Language::C && has("h")) {
        path
    } else {
        let mut s = path.into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    }
}

/// File layout for `units`: relative path and content. Java units holding
/// several top-level types are split into one `<Type>.java` per type, each
/// carrying the unit's package and import lines.
pub fn layout(lang: Language, units: &[SourceUnit]) -> Vec<(PathBuf, String)> {
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let mut taken: BTreeSet<PathBuf> = BTreeSet::new();
    let mut place = |path: PathBuf, text: String, files: &mut Vec<(PathBuf, String)>| {
        let mut candidate = path.clone();
        let mut n = 1;
        while taken.contains(&candidate) {
            n += 1;
            candidate = Path::new(&format!("dup{n}")).join(&path);
        }
        taken.insert(candidate.clone());
        let text = if text.ends_with('\n') { text } else { text + "\n" };
        files.push((candidate, text));
    };
    for (i, unit) in units.iter().enumerate() {
        let rel = sanitize(&unit.path).unwrap_or_else(|| PathBuf::from(format!("unit{}", i + 1)));
        let rel = with_extension(rel, lang);
        if lang == Language::Java {
            if let Ok((header, types)) = syntax::java_top_level(&unit.text) {
                let stem_matches = types.len() == 1
                    && rel.file_stem().is_some_and(|s| s.to_string_lossy() == types[0].name);
                if !types.is_empty() && !stem_matches {
                    let head = unit.text[header].to_string();
                    let parent = rel.parent().map(Path::to_path_buf).unwrap_or_default();
                    for t in types {
                        let body = unit.text[t.range.clone()].trim_start_matches(['\n', '\r']);
                        let text = if head.is_empty() {
                            body.to_string()
                        } else {
                            format!("{head}\n\n{body}")
                        };
                        place(parent.join(format!("{}.java", t.name)), text, &mut files);
                    }
                    continue;
                }
            }
        }
        place(rel, unit.text.clone(), &mut files);
    }
    files
}

fn expand(template: &str, dir: &Path, files: &[PathBuf]) -> Result<Vec<String>, OracleError> {
    let words = shlex::split(template).ok_or_else(|| OracleError::BadCommand(template.to_string()))?;
    if words.is_empty() {
        return Err(OracleError::BadCommand(template.to_string()));
    }
    let dir_s = dir.display().to_string();
    let file_strs: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
    let mut out = Vec::new();
    for w in words {
        if w == "{files}" {
            out.extend(file_strs.iter().cloned());
        } else {
            out.push(w.replace("{dir}", &dir_s).replace("{files}", &file_strs.join(" ")));
        }
    }
    Ok(out)
}

struct Run {
    status_ok: bool,
    output: String,
}

fn run_command(argv: &[String], dir: &Path, lang: Language, timeout: Duration) -> Result<Run, OracleError> {
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => OracleError::CheckerNotFound {
                language: lang,
                program: argv[0].clone(),
            },
            _ => OracleError::WorkspaceIo(format!("spawning {}: {e}", argv[0])),
        })?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut s = Vec::new();
        let _ = stdout.read_to_end(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = Vec::new();
        let _ = stderr.read_to_end(&mut s);
        s
    });
    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(OracleError::CheckerTimeout {
                command: shlex::try_join(argv.iter().map(String::as_str)).unwrap_or_default(),
                secs: timeout.as_secs(),
            });
        }
        Err(e) => return Err(OracleError::WorkspaceIo(format!("waiting for {}: {e}", argv[0]))),
    };
    let mut output = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    output.push_str(&String::from_utf8_lossy(&err_reader.join().unwrap_or_default()));
    Ok(Run {
        status_ok: status.success(),
        output,
    })
}

fn gcc_style() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?m)^(?P<file>[^\s:][^:\n]*):(?P<line>\d+):(?:\d+:)?\s*(?:fatal )?error:\s*(?P<msg>.*)$")
            .expect("valid regex")
    })
}

fn python_style() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?m)^\s*File "(?P<file>[^"]+)", line (?P<line>\d+)(?:[^\n]*\n)(?:(?:[ \t][^\n]*)?\n)*?(?P<kind>\w*(?:Error|Exception|Warning)): (?P<msg>.*)$"#)
            .expect("valid regex")
    })
}

/// Best-effort file/line extraction from checker output.
pub fn parse_diagnostics(output: &str) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = gcc_style()
        .captures_iter(output)
        .map(|c| Diagnostic {
            file: c["file"].trim().to_string(),
            line: c["line"].parse().ok(),
            message: c["msg"].trim().to_string(),
        })
        .collect();
    out.extend(python_style().captures_iter(output).map(|c| Diagnostic {
        file: c["file"].to_string(),
        line: c["line"].parse().ok(),
        message: format!("{}: {}", &c["kind"], c["msg"].trim()),
    }));
    out
}

/// Writes `units` under `workspace` and runs the configured checker.
/// `ok` is the checker's exit status; a configured type checker runs only
/// after the first command succeeds.
pub fn check_static(
    lang: Language,
    units: &[SourceUnit],
    workspace: &Path,
    config: &CheckerConfig,
) -> Result<CompileResult, OracleError> {
    if units.is_empty() {
        return Err(OracleError::NoUnits);
    }
    let io = |e: std::io::Error| OracleError::WorkspaceIo(format!("{}: {e}", workspace.display()));
    fs::create_dir_all(workspace).map_err(io)?;
    let mut sources = Vec::new();
    for (rel, text) in layout(lang, units) {
        let full = workspace.join(&rel);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        fs::write(&full, text).map_err(io)?;
        if rel.extension().is_some_and(|e| e == lang.source_extension()) {
            sources.push(rel);
        }
    }
    let checker = config.for_language(lang);
    let timeout = Duration::from_secs(config.timeout_secs.max(1));
    let started = Instant::now();
    let mut result = CompileResult {
        ok: true,
        diagnostics: Vec::new(),
        tool_invocation: Vec::new(),
        duration_ms: 0,
        raw_output: String::new(),
    };
    let prefix = format!("{}/", workspace.display());
    for template in std::iter::once(&checker.cmd).chain(checker.type_cmd.as_ref()) {
        let argv = expand(template, workspace, &sources)?;
        result
            .tool_invocation
            .push(shlex::try_join(argv.iter().map(String::as_str)).unwrap_or_else(|_| argv.join(" ")));
        let run = run_command(&argv, workspace, lang, timeout)?;
        let output = run.output.replace(&prefix, "");
        result.diagnostics.extend(parse_diagnostics(&output));
        result.raw_output.push_str(&output);
        if !run.status_ok {
            result.ok = false;
            if result.diagnostics.is_empty() {
                let first = output.lines().find(|l| !l.trim().is_empty()).unwrap_or("checker failed");
                result.diagnostics.push(Diagnostic {
                    file: String::new(),
                    line: None,
                    message: first.trim().to_string(),
                });
            }
            break;
        }
    }
    result.duration_ms = started.elapsed().as_millis() as u64;
    Ok(result)
}
