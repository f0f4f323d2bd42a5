use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use stepwise_core::distill::{export_run, DistillError};
use stepwise_core::evaluation::{report_csv, report_text};
use stepwise_core::rollout::{load_run, metrics_file, RunError, METRICS_FILE};
use stepwise_core::synth::{generate_synthetic_suite, suite_stats, write_suite, SynthConfig};
use stepwise_core::task::{LengthBounds, DEFAULT_BOUNDS};
use stepwise_core::{load_suite, run_suite, validate_trajectory, Backends, MatchMode, MetricsFile, RunConfig, RunMode};
use tracing::{info, warn};

/// Failures caused by the inputs rather than by how the tool was invoked.
#[derive(Debug)]
struct DataError(String);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

fn data_error(msg: impl Into<String>) -> anyhow::Error {
    DataError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "stepwise", version, about = "Replay, score and distill GUI-agent trajectories")]
struct Cli {
    /// Emit logs as JSON lines on stderr.
    #[arg(long, global = true)]
    log_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    TeacherForced,
    FreeRunning,
    ZeroShotBaseline,
}

impl From<Mode> for RunMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::TeacherForced => RunMode::TeacherForced,
            Mode::FreeRunning => RunMode::FreeRunning,
            Mode::ZeroShotBaseline => RunMode::ZeroShotBaseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Match {
    KindOnly,
    CanonicalFull,
}

impl From<Match> for MatchMode {
    fn from(m: Match) -> Self {
        match m {
            Match::KindOnly => MatchMode::KindOnly,
            Match::CanonicalFull => MatchMode::CanonicalFull,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check every task bundle of a suite.
    Validate {
        suite: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BOUNDS.min)]
        min_len: usize,
        #[arg(long, default_value_t = DEFAULT_BOUNDS.max)]
        max_len: usize,
        /// Print the reports as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic suite.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_BOUNDS.min)]
        min_len: usize,
        #[arg(long, default_value_t = DEFAULT_BOUNDS.max)]
        max_len: usize,
        /// Target mean length; lengths are uniform when unset.
        #[arg(long)]
        mean: Option<f64>,
    },
    /// Roll out a suite and write a run directory.
    Run {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute metrics from the records of a run directory.
    Score {
        run: PathBuf,
        #[arg(long, value_enum)]
        match_mode: Option<Match>,
    },
    /// Export critic-verified teacher-forced records as SFT samples.
    Export {
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the full structured actor reply as target instead of the
        /// action string.
        #[arg(long)]
        structured: bool,
    },
    /// Print the stored metrics of a run directory.
    Report {
        run: PathBuf,
        #[arg(long, value_enum)]
        match_mode: Option<Match>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print a config with every default filled in.
    Config {
        #[arg(long, value_enum, default_value = "teacher-forced")]
        mode: Mode,
    },
}

fn init_logging(json: bool) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    if json {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log_json);
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<DataError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate {
            suite,
            min_len,
            max_len,
            json,
        } => validate(&suite, LengthBounds::new(min_len, max_len), json),
        Command::Synth {
            out,
            seed,
            count,
            min_len,
            max_len,
            mean,
        } => {
            let mut cfg = SynthConfig::new(seed, count, min_len, max_len);
            cfg.target_mean = mean;
            let tasks = generate_synthetic_suite(&cfg)?;
            write_suite(&tasks, &out).with_context(|| format!("writing {}", out.display()))?;
            let stats = suite_stats(&tasks);
            println!(
                "wrote {} tasks to {} (lengths {}..{}, mean {:.2})",
                stats.tasks,
                out.display(),
                stats.min_len,
                stats.max_len,
                stats.mean_len
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            suite,
            config,
            out,
            mode,
            seed,
            workers,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(m) = mode {
                cfg.mode = m.into();
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.validate()?;
            let backends = Backends::from_config(&cfg)?;
            info!(mode = cfg.mode.as_str(), seed = cfg.seed, config_hash = %cfg.hash(), "starting run");
            let summary = run_suite(&suite, &cfg, &backends, &out).map_err(|e| match e {
                RunError::Suite(_) | RunError::EmptySuite(_) => data_error(e.to_string()),
                e => e.into(),
            })?;
            for f in &summary.failures {
                warn!(task = %f.task, reason = %f.reason, "task not run");
            }
            let c = &summary.manifest.counts;
            println!("{}", report_text(summary.metrics.get(cfg.match_mode)));
            println!(
                "records {} verified {} failed {} of {} tasks, written to {}",
                c.records,
                c.verified,
                c.failed,
                c.tasks_total,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Score { run, match_mode } => score(&run, match_mode.map(Into::into)),
        Command::Export { run, out, structured } => {
            let card = export_run(&run, &out, structured).map_err(|e| match e {
                DistillError::Io { .. } => e.into(),
                e => data_error(e.to_string()),
            })?;
            println!(
                "kept {} of {} records, wrote {} samples to {}",
                card.records_kept,
                card.records_in,
                card.samples,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { run, match_mode, format } => {
            let path = run.join(METRICS_FILE);
            let text = std::fs::read_to_string(&path).map_err(|e| data_error(format!("cannot read {}: {e}", path.display())))?;
            let metrics: MetricsFile =
                serde_json::from_str(&text).map_err(|e| data_error(format!("invalid {}: {e}", path.display())))?;
            let mode = match match_mode {
                Some(m) => m.into(),
                None => load_run(&run).map_err(|e| data_error(e.to_string()))?.manifest.config.match_mode,
            };
            let report = metrics.get(mode);
            match format {
                Format::Text => print!("{}", report_text(report)),
                Format::Csv => print!("{}", report_csv(report)),
                Format::Json => println!("{}", serde_json::to_string_pretty(report)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Config { mode } => {
            let cfg = RunConfig::scripted(mode.into(), stepwise_core::actor::ScriptedPolicy::Oracle);
            print!("{}", cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn validate(suite: &Path, bounds: LengthBounds, json: bool) -> Result<ExitCode> {
    if bounds.min > bounds.max {
        bail!("--min-len {} exceeds --max-len {}", bounds.min, bounds.max);
    }
    let entries = load_suite(suite).map_err(|e| data_error(e.to_string()))?;
    if entries.is_empty() {
        return Err(data_error(format!("{} contains no task bundles", suite.display())));
    }
    let mut failed = 0;
    let mut reports = Vec::new();
    for entry in &entries {
        match &entry.task {
            Ok(task) => {
                let report = validate_trajectory(task, bounds);
                if !report.passed {
                    failed += 1;
                }
                if !json {
                    if report.passed {
                        println!("ok   {} ({} steps)", report.task_id, task.len());
                    } else {
                        for v in &report.violations {
                            let at = v.step.map(|s| format!(" step {s}")).unwrap_or_default();
                            println!("FAIL {}{at}: {} ({})", report.task_id, v.message, v.code);
                        }
                    }
                }
                reports.push(serde_json::to_value(&report)?);
            }
            Err(e) => {
                failed += 1;
                if !json {
                    println!("FAIL {}: {e} (unloadable)", entry.name);
                }
                reports.push(serde_json::json!({
                    "task_id": entry.name,
                    "passed": false,
                    "violations": [{"code": "unloadable", "message": e.to_string()}],
                }));
            }
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        println!("{} of {} tasks passed", entries.len() - failed, entries.len());
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn score(run: &Path, mode: Option<MatchMode>) -> Result<ExitCode> {
    let loaded = load_run(run).map_err(|e| data_error(e.to_string()))?;
    if !loaded.missing.is_empty() {
        return Err(data_error(format!("missing records for {}", loaded.missing.join(", "))));
    }
    let mode = mode.unwrap_or(loaded.manifest.config.match_mode);
    let metrics = metrics_file(&loaded.records, &loaded.manifest.config_hash);
    let stored = std::fs::read_to_string(run.join(METRICS_FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<MetricsFile>(&t).ok());
    if stored.as_ref().is_some_and(|s| *s != metrics) {
        warn!("stored {METRICS_FILE} disagrees with the records; showing recomputed values");
    }
    let unverified: Vec<&str> = loaded
        .records
        .iter()
        .filter(|r| !r.verify(r.match_mode))
        .filter(|r| r.verified)
        .map(|r| r.task_id.as_str())
        .collect();
    if !unverified.is_empty() {
        return Err(data_error(format!("records claim V=1 but fail verification: {}", unverified.join(", "))));
    }
    print!("{}", report_text(metrics.get(mode)));
    Ok(ExitCode::SUCCESS)
}
