//! Command-line driver for `specsched` experiments.
//!
//! Subcommands map onto the experiment modes: `run` executes any config,
//! `sweep` and `verify-lossless` insist on the matching mode, and
//! `replay-trace` re-validates a trace file some earlier run wrote.
//!
//! Exit status: 0 when the experiment ran and every invariant monitor
//! passed, 1 when it ran but a monitor failed (e.g. a distribution gap
//! above tolerance), 2 on errors — bad configs, missing files, invalid
//! traces — with a machine-readable JSON record on stderr.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use specsched::experiment::{
    load_config, run_experiment, ExperimentConfig, ExperimentReport, ExperimentSpec,
    ReportFormat,
};
use specsched::metrics::alpha_from_trace;
use specsched::sched::{SchedMode, ScheduleTrace};

/// Environment variable consulted for the default output directory.
const OUT_ENV: &str = "SPECSCHED_OUT";

#[derive(Parser)]
#[command(
    name = "specsched",
    version,
    about = "Scheduled speculative decoding: lossless verification checks, \
             reasoning-tree runs, and strategy timing sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(ExperimentArgs),
    /// Run a timing-sweep config and write its strategy comparison CSV.
    Sweep(ExperimentArgs),
    /// Run a losslessness config and judge the measured distribution gap.
    VerifyLossless(ExperimentArgs),
    /// Re-validate a trace file written by a previous run and summarize it.
    ReplayTrace(ReplayArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Path to a JSON experiment config.
    config: PathBuf,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override how scheduled model calls execute.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory. Defaults to the config's `out_dir`, then
    /// $SPECSCHED_OUT, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format. Defaults to the config's `format`, then `table`.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Path to a trace (line-delimited records) from a previous run.
    trace: PathBuf,
    /// Summary format.
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    /// Deterministic discrete-event simulation of the round timing.
    Virtual,
    /// Real drafter threads and a verifier thread.
    Threaded,
}

impl From<ModeArg> for SchedMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Virtual => SchedMode::VirtualTime,
            ModeArg::Threaded => SchedMode::Threaded,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Jsonl,
}

impl From<FormatArg> for ReportFormat {
    fn from(format: FormatArg) -> Self {
        match format {
            FormatArg::Table => ReportFormat::Table,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Jsonl => ReportFormat::Jsonl,
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(error) => {
            eprintln!("{}", json!({ "error": format!("{error:#}") }));
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(args) => run_config(args, None),
        Command::Sweep(args) => run_config(args, Some("timing-sweep")),
        Command::VerifyLossless(args) => run_config(args, Some("losslessness")),
        Command::ReplayTrace(args) => replay(args),
    }
}

fn mode_name(spec: &ExperimentSpec) -> &'static str {
    match spec {
        ExperimentSpec::Losslessness(_) => "losslessness",
        ExperimentSpec::TotRun(_) => "tot-run",
        ExperimentSpec::TimingSweep(_) => "timing-sweep",
    }
}

fn run_config(args: ExperimentArgs, required_mode: Option<&str>) -> anyhow::Result<bool> {
    let mut config = load_config(&args.config)
        .with_context(|| format!("loading config {}", args.config.display()))?;
    if let Some(required) = required_mode {
        let actual = mode_name(&config.spec);
        anyhow::ensure!(
            actual == required,
            "config {} declares mode {actual}; this subcommand runs {required} configs",
            args.config.display()
        );
    }
    if let Some(seed) = args.seed {
        config.override_seed(seed);
    }
    if let Some(mode) = args.mode {
        config.override_exec_mode(mode.into())?;
    }
    let out_dir = resolve_out_dir(args.out, &config);
    let format = args
        .format
        .map(ReportFormat::from)
        .or(config.format)
        .unwrap_or(ReportFormat::Table);

    let report = run_experiment(&config, &out_dir, format)
        .with_context(|| format!("running experiment {}", config.name))?;
    print!("{}", report.render(format));
    eprintln!("wrote {}", out_dir.join(format.file_name()).display());
    Ok(report.passed())
}

fn resolve_out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn replay(args: ReplayArgs) -> anyhow::Result<bool> {
    let file = fs::File::open(&args.trace)
        .with_context(|| format!("opening trace {}", args.trace.display()))?;
    let trace = ScheduleTrace::read_jsonl(BufReader::new(file))
        .with_context(|| format!("parsing trace {}", args.trace.display()))?;
    let summary = trace
        .validate()
        .with_context(|| format!("trace {} failed validation", args.trace.display()))?;
    let alpha = alpha_from_trace(&trace)?;

    let name = args
        .trace
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    let mut report = ExperimentReport {
        name,
        mode: "replay-trace".into(),
        entries: Vec::new(),
    };
    let mut push = |metric: &str, value: serde_json::Value| {
        report.entries.push((metric.to_string(), value));
    };
    push("sequences", trace.meta.n.into());
    push("draft_budget", trace.meta.k.into());
    push("time_unit", serde_json::to_value(trace.meta.time_unit)?);
    push("events", trace.events.len().into());
    push("rounds", summary.total_rounds().into());
    push("emitted_tokens", summary.total_emitted().into());
    push("accepted_tokens", summary.total_accepted().into());
    push("acceptance_rate", alpha.into());
    push("dropped_requests", summary.dropped_requests.into());
    push("makespan", summary.makespan.into());
    push("verifier_busy", summary.verifier_busy.into());
    push("verifier_idle", summary.verifier_idle().into());
    push("warnings", trace.warnings.len().into());
    print!("{}", report.render(args.format.into()));
    Ok(true)
}
