//! Orchestration: run the grid, adjudicate, report.

pub mod config;
pub mod exec;
pub mod report;
pub mod review;
pub mod rundir;

pub use config::{ConfigError, CorpusSection, RunConfig, RunSection};
pub use exec::{run, select_cases, RunError, RunSummary};
pub use report::{compute, parse_formats, write_reports, Metrics, ReportError, ReportFormat};
pub use review::{effective_outcomes, list_pending, parse_triple, set, Effective, PendingItem, ReviewError, SetRequest};
pub use rundir::{FailureRecord, OutcomeFile, RunDir, RunDirError};
