//! `sentinel`: run refactoring-bug detection experiments against LLM backends.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sentinel_core::corpus::{self, Severity};
use sentinel_core::gateway::HttpTransport;
use sentinel_core::metamorph::{self, parse_scope};
use sentinel_core::oracle::{CheckerConfig, OracleError};
use sentinel_core::runner::{self, parse_formats, RunConfig, RunDir, SetRequest};

const EXIT_FATAL: u8 = 1;
const EXIT_ITEM_FAILURES: u8 = 2;

#[derive(Parser)]
#[command(name = "sentinel", version, about = "LLM-based detection of refactoring-engine bugs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the case x backend x temperature x attempt grid.
    Run {
        /// Run configuration (TOML). Optional with --resume.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue an interrupted run in DIR using its stored config.
        #[arg(long, value_name = "DIR")]
        resume: Option<PathBuf>,
        /// Run directory; overrides `run.output_dir`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// List or record human adjudications.
    Review {
        #[command(subcommand)]
        action: ReviewAction,
    },
    /// Write metric reports into DIR/reports.
    Report {
        dir: PathBuf,
        #[arg(long, default_value = "csv,json,md")]
        format: String,
    },
    /// Metamorphic variants of corpus cases.
    Variants {
        #[command(subcommand)]
        action: VariantsAction,
    },
    /// Corpus maintenance.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
}

#[derive(Subcommand)]
enum ReviewAction {
    /// Print outcomes awaiting adjudication.
    List {
        dir: PathBuf,
        /// One JSON object per line instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Record whether an explanation is correct.
    Set(SetArgs),
}

#[derive(Args)]
struct SetArgs {
    dir: PathBuf,
    /// `<case>/<backend>/<attempt>`
    triple: String,
    #[arg(long, conflicts_with = "incorrect", required_unless_present = "incorrect")]
    correct: bool,
    #[arg(long)]
    incorrect: bool,
    #[arg(long, default_value = "")]
    notes: String,
    /// Restrict to the attempt run at this temperature.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, default_value = "")]
    reviewer: String,
    /// Override an existing adjudication (both are kept; the last wins).
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum VariantsAction {
    /// Generate, verify and store variants under ROOT/variants.
    Generate {
        #[arg(long)]
        corpus: PathBuf,
        /// Seed; repeat for several variants per case.
        #[arg(long, required = true)]
        seed: Vec<u64>,
        /// Comma-separated: variables, methods, classes, packages, numbers.
        #[arg(long)]
        scope: String,
        /// Corpus root to write into (defaults to --corpus).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only these case ids (comma-separated).
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        /// Take checker commands from this run config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Load every case document and report problems.
    Validate { root: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Run { config, resume, out } => cmd_run(config.as_deref(), resume.as_deref(), out.as_deref()),
        Command::Review { action } => match action {
            ReviewAction::List { dir, json } => cmd_review_list(&dir, json),
            ReviewAction::Set(args) => cmd_review_set(args),
        },
        Command::Report { dir, format } => {
            let formats = parse_formats(&format).map_err(|e| anyhow!(e))?;
            let run = RunDir::open(&dir)?;
            for path in runner::write_reports(&run, &formats)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
        Command::Variants {
            action: VariantsAction::Generate {
                corpus,
                seed,
                scope,
                out,
                ids,
                config,
            },
        } => cmd_variants(&corpus, &seed, &scope, out.as_deref(), &ids, config.as_deref()),
        Command::Corpus {
            action: CorpusAction::Validate { root },
        } => cmd_validate(&root),
    }
}

fn cmd_run(config: Option<&Path>, resume: Option<&Path>, out: Option<&Path>) -> Result<u8> {
    let (dir, cfg) = match (resume, config) {
        (Some(dir), _) => {
            let run = RunDir::open(dir)?;
            let cfg = run.config()?;
            if let Some(path) = config {
                let given = RunConfig::load(path)?;
                if given.snapshot() != cfg.snapshot() {
                    log::warn!("{} differs from the stored config; resuming with the stored one", path.display());
                }
            }
            (run, cfg)
        }
        (None, Some(path)) => {
            let mut cfg = RunConfig::load(path)?;
            if let Some(o) = out {
                cfg.run.output_dir = Some(o.to_path_buf());
            }
            let root = cfg
                .run
                .output_dir
                .clone()
                .context("no run directory: set run.output_dir or pass --out")?;
            (RunDir::create(&root, &cfg)?, cfg)
        }
        (None, None) => bail!("pass --config or --resume"),
    };
    let transport = HttpTransport::new().map_err(|e| anyhow!(e))?;
    let summary = runner::run(&dir, &cfg, Arc::new(transport))?;
    println!(
        "{}: {} items ({} already done): {} decided, {} pending, {} failed, {} backend calls",
        dir.root().display(),
        summary.items,
        summary.skipped,
        summary.decided,
        summary.pending,
        summary.failed,
        summary.network_calls
    );
    Ok(if summary.exit_code() == 0 { 0 } else { EXIT_ITEM_FAILURES })
}

fn cmd_review_list(dir: &Path, json: bool) -> Result<u8> {
    let run = RunDir::open(dir)?;
    for item in runner::list_pending(&run)? {
        if json {
            println!("{}", serde_json::to_string(&item)?);
            continue;
        }
        println!("== {} (t={:.2}) {:?} decision={}", item.triple, item.temperature, item.status, item.decision.as_str());
        if let Some(e) = &item.oracle_error {
            println!("oracle: {e}");
        }
        println!("ground truth: {}", item.ground_truth);
        println!("{}\n", item.body);
    }
    Ok(0)
}

fn cmd_review_set(a: SetArgs) -> Result<u8> {
    let run = RunDir::open(&a.dir)?;
    let req = SetRequest {
        triple: a.triple,
        explanation_correct: a.correct && !a.incorrect,
        notes: a.notes,
        temperature: a.temperature,
        reviewer: a.reviewer,
        force: a.force,
    };
    for o in runner::set(&run, &req, chrono::Utc::now())? {
        println!(
            "{}/{}/{} t={:.2}: {:?} correct={} ({:?})",
            o.case_id, o.backend_name, o.attempt_index, o.temperature, o.status, o.correct, o.evidence.failure_reason
        );
    }
    Ok(0)
}

fn cmd_variants(root: &Path, seeds: &[u64], scope: &str, out: Option<&Path>, ids: &[String], config: Option<&Path>) -> Result<u8> {
    let scope = parse_scope(scope).map_err(|e| anyhow!(e))?;
    let checkers = match config {
        Some(p) => RunConfig::load(p)?.checkers,
        None => CheckerConfig::default(),
    };
    let report = corpus::load_corpus(root)?;
    let out = out.unwrap_or(root);
    let mut unverified = 0;
    for case in report.index.cases() {
        if !ids.is_empty() && !ids.contains(&case.id) {
            continue;
        }
        let scratch = tempfile::tempdir()?;
        let parent_status = metamorph::static_status(case, &scratch.path().join("parent"), &checkers);
        for (i, &seed) in seeds.iter().enumerate() {
            let variant = metamorph::generate_variant(case, seed, &scope).with_context(|| format!("case {}", case.id))?;
            let ws = scratch.path().join(format!("v{i}"));
            let variant = match &parent_status {
                Ok(ps) => match metamorph::verify_variant(variant.clone(), *ps, &ws, &checkers) {
                    Ok(v) => v,
                    Err(e) => unverifiable(variant, &e),
                },
                Err(e) => unverifiable(variant, e),
            };
            let path = metamorph::persist_variant(out, &variant)?;
            if !variant.verified {
                unverified += 1;
            }
            println!("{} {} {}", if variant.verified { "verified  " } else { "UNVERIFIED" }, variant.variant_id, path.display());
        }
    }
    Ok(if unverified > 0 { EXIT_ITEM_FAILURES } else { 0 })
}

fn unverifiable(variant: metamorph::MetamorphicVariant, e: &OracleError) -> metamorph::MetamorphicVariant {
    log::warn!("{}: cannot verify: {e}", variant.variant_id);
    variant
}

fn cmd_validate(root: &Path) -> Result<u8> {
    let report = corpus::load_corpus(root)?;
    for p in &report.problems {
        println!("error   {p}");
    }
    for (id, w) in &report.warnings {
        let level = if w.severity() == Severity::Warning { "warning" } else { "error" };
        println!("{level} {id}: {w}");
    }
    for (lang, kinds) in report.index.counts() {
        for (kind, n) in kinds {
            println!("{:<7} {:<22} {n}", lang.as_str(), kind.to_string());
        }
    }
    println!("{} cases, {} problems", report.index.len(), report.problems.len());
    Ok(if report.problems.is_empty() { 0 } else { EXIT_FATAL })
}
