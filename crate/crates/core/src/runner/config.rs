//! `run.toml`: corpus selection, backends, run grid and checker commands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BugKind, CaseSelector, Language};
use crate::gateway::BackendProfile;
use crate::oracle::adjudication::same_temperature;
use crate::oracle::CheckerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub root: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub languages: Option<Vec<Language>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_kinds: Option<Vec<BugKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refactoring_kinds: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
    /// Also run verified metamorphic variants, scored as their own cohort.
    #[serde(default)]
    pub include_variants: bool,
}

impl CorpusSection {
    pub fn selector(&self) -> CaseSelector {
        CaseSelector {
            languages: self.languages.clone(),
            bug_kinds: self.bug_kinds.clone(),
            refactoring_kinds: self.refactoring_kinds.clone(),
            ids: self.ids.clone(),
        }
    }
}

fn default_k() -> u32 {
    1
}
fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Attempts per (case, backend, temperature).
    #[serde(default = "default_k")]
    pub k: u32,
    /// Temperature grid; each backend's `default_temperature` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperatures: Option<Vec<f64>>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            k: default_k(),
            temperatures: None,
            concurrency: default_concurrency(),
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub backends: Vec<BackendProfile>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub checkers: CheckerConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads and validates a config file. A relative corpus root or output
    /// directory is taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|reason| ConfigError::Parse {
            path: path.display().to_string(),
            reason,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.corpus.root.is_relative() {
            cfg.corpus.root = base.join(&cfg.corpus.root);
        }
        if let Some(out) = cfg.run.output_dir.as_mut().filter(|o| o.is_relative()) {
            *out = base.join(&*out);
        }
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.run.k < 1 {
            return Err("run.k must be at least 1".into());
        }
        if self.run.concurrency < 1 {
            return Err("run.concurrency must be at least 1".into());
        }
        if let Some(ts) = &self.run.temperatures {
            if ts.is_empty() {
                return Err("run.temperatures is empty".into());
            }
            for (i, t) in ts.iter().enumerate() {
                if !(0.0..=1.0).contains(t) {
                    return Err(format!("temperature {t} outside [0, 1]"));
                }
                if ts[..i].iter().any(|u| same_temperature(*t, *u)) {
                    return Err(format!("DUPLICATE_TEMPERATURE: {t}"));
                }
            }
        }
        if self.backends.is_empty() {
            return Err("at least one [[backends]] entry is required".into());
        }
        for (i, b) in self.backends.iter().enumerate() {
            b.validate()?;
            if b.name.contains('/') || b.name.contains("__") {
                return Err(format!("backend name `{}` may not contain `/` or `__`", b.name));
            }
            if self.backends[..i].iter().any(|o| o.name == b.name) {
                return Err(format!("duplicate backend name `{}`", b.name));
            }
        }
        Ok(())
    }

    /// Temperatures run for `backend`.
    pub fn temperatures_for(&self, backend: &BackendProfile) -> Vec<f64> {
        self.run
            .temperatures
            .clone()
            .unwrap_or_else(|| vec![backend.default_temperature])
    }

    /// The snapshot stored in a run directory. The output directory is the
    /// run directory itself and is left out.
    pub fn snapshot(&self) -> String {
        let mut c = self.clone();
        c.run.output_dir = None;
        c.to_toml()
    }
}
