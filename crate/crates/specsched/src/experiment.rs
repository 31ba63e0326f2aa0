//! Config-driven experiments: load a JSON description, run it, write
//! reports and artifacts to a directory.
//!
//! Three experiment modes cover the system end to end:
//!
//! * `losslessness` — Monte Carlo comparison of scheduled speculative
//!   decoding against the target model's exact next-token distribution;
//! * `tot-run` — one reasoning-tree build, dumping the explored tree and
//!   per-component accounting;
//! * `timing-sweep` — the strategy cost simulator over a parameter grid.
//!
//! With virtual-time execution every artifact an experiment writes is a
//! deterministic function of its config: running the same config twice
//! yields byte-identical files. Failures leave a machine-readable
//! `error.json` in the output directory instead of reports.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lm::{mix_seed, ModelPair, ModelSpec, Phase, RngStream, StreamId, TokenId};
use crate::metrics::{alpha_from_trace, component_split};
use crate::sampling::KConfig;
use crate::sched::{run, RunConfig, SchedMode, TickParams};
use crate::timing::{sweep, write_sweep_csv, Strategy, SweepConfig};
use crate::tot::{TreeBuilder, TreeConfig};

/// Config format version this build understands.
pub const CONFIG_VERSION: u32 = 1;

/// A fully described experiment, as loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Config format version; must equal [`CONFIG_VERSION`].
    pub version: u32,
    /// Experiment name, used in reports and error records.
    pub name: String,
    /// Output directory; the CLI lets flags and the environment override it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Report format; defaults to [`ReportFormat::Table`] when absent.
    #[serde(default)]
    pub format: Option<ReportFormat>,
    #[serde(flatten)]
    pub spec: ExperimentSpec,
}

impl ExperimentConfig {
    /// Replaces the experiment's base seed.
    pub fn override_seed(&mut self, seed: u64) {
        match &mut self.spec {
            ExperimentSpec::Losslessness(spec) => spec.seed = seed,
            ExperimentSpec::TotRun(spec) => spec.tree.seed = seed,
            ExperimentSpec::TimingSweep(spec) => spec.sweep.seed = seed,
        }
    }

    /// Replaces the execution mode of experiments that schedule real model
    /// calls. Timing sweeps price strategies in simulated ticks and have no
    /// execution mode to override.
    pub fn override_exec_mode(&mut self, mode: SchedMode) -> Result<()> {
        match &mut self.spec {
            ExperimentSpec::Losslessness(spec) => spec.sched_mode = mode,
            ExperimentSpec::TotRun(spec) => spec.tree.mode = mode,
            ExperimentSpec::TimingSweep(_) => {
                return Err(Error::InvalidConfig(
                    "timing-sweep experiments are pure simulations; \
                     an execution mode does not apply"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

/// The mode-specific payload of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    Losslessness(LosslessnessSpec),
    TotRun(TotRunSpec),
    TimingSweep(TimingSweepSpec),
}

/// Monte Carlo check of the scheduled pipeline's output distribution: the
/// first token every scheduled sequence emits must follow the target
/// model's next-token distribution at the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosslessnessSpec {
    pub target: ModelSpec,
    pub draft: ModelSpec,
    pub kconfig: KConfig,
    #[serde(default)]
    pub prefix: Vec<TokenId>,
    pub target_len: usize,
    /// Sequences per scheduled run.
    pub sequences: usize,
    /// Scheduled runs; each run uses `seed + trial` as its seed.
    pub trials: u64,
    pub seed: u64,
    /// Total-variation bound the report judges the empirical gap against.
    pub tolerance: f64,
    #[serde(default = "default_mode")]
    pub sched_mode: SchedMode,
    #[serde(default)]
    pub ticks: TickParams,
}

/// One reasoning-tree build over a spec-described model pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TotRunSpec {
    pub target: ModelSpec,
    pub draft: ModelSpec,
    #[serde(default)]
    pub prompt: Vec<TokenId>,
    pub tree: TreeConfig,
}

/// A strategy-comparison sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSweepSpec {
    pub sweep: SweepConfig,
}

fn default_mode() -> SchedMode {
    SchedMode::VirtualTime
}

/// How report files are rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    /// Aligned human-readable text.
    Table,
    /// `metric,value` lines.
    Csv,
    /// One JSON object per metric.
    Jsonl,
}

impl ReportFormat {
    /// File name the rendered report is written under.
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Table => "report.txt",
            ReportFormat::Csv => "report.csv",
            ReportFormat::Jsonl => "report.jsonl",
        }
    }
}

/// Ordered metric/value pairs an experiment reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub mode: String,
    pub entries: Vec<(String, Value)>,
}

impl ExperimentReport {
    fn push(&mut self, metric: &str, value: impl Into<Value>) {
        self.entries.push((metric.to_string(), value.into()));
    }

    /// Looks up a reported metric by name.
    pub fn get(&self, metric: &str) -> Option<&Value> {
        self.entries
            .iter()
            .find(|(m, _)| m == metric)
            .map(|(_, v)| v)
    }

    /// Whether every invariant monitor the experiment ran came back clean.
    /// Drives the CLI's exit status.
    pub fn passed(&self) -> bool {
        self.get("passed").and_then(Value::as_bool).unwrap_or(false)
    }

    /// Renders the report in the requested format.
    pub fn render(&self, format: ReportFormat) -> String {
        let mut out = String::new();
        match format {
            ReportFormat::Table => {
                out.push_str(&format!("experiment: {} ({})\n", self.name, self.mode));
                let width = self
                    .entries
                    .iter()
                    .map(|(m, _)| m.len())
                    .max()
                    .unwrap_or(0);
                for (metric, value) in &self.entries {
                    out.push_str(&format!("  {metric:<width$}  {value}\n"));
                }
            }
            ReportFormat::Csv => {
                out.push_str("metric,value\n");
                out.push_str(&format!("name,{}\n", self.name));
                out.push_str(&format!("mode,{}\n", self.mode));
                for (metric, value) in &self.entries {
                    out.push_str(&format!("{metric},{value}\n"));
                }
            }
            ReportFormat::Jsonl => {
                out.push_str(
                    &json!({"metric": "name", "value": self.name}).to_string(),
                );
                out.push('\n');
                out.push_str(
                    &json!({"metric": "mode", "value": self.mode}).to_string(),
                );
                out.push('\n');
                for (metric, value) in &self.entries {
                    out.push_str(&json!({"metric": metric, "value": value}).to_string());
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Loads an experiment config from a JSON file, checking its version.
///
/// Relative corpus paths inside model specs are resolved against the
/// config file's directory, so a config can sit next to its data.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let file = fs::File::open(path)?;
    let mut config: ExperimentConfig = serde_json::from_reader(BufReader::new(file))?;
    if config.version != CONFIG_VERSION {
        return Err(Error::InvalidConfig(format!(
            "config version {} not supported; this build reads version {CONFIG_VERSION}",
            config.version
        )));
    }
    if let Some(base) = path.parent() {
        match &mut config.spec {
            ExperimentSpec::Losslessness(spec) => {
                rebase_corpus_paths(&mut spec.target, base);
                rebase_corpus_paths(&mut spec.draft, base);
            }
            ExperimentSpec::TotRun(spec) => {
                rebase_corpus_paths(&mut spec.target, base);
                rebase_corpus_paths(&mut spec.draft, base);
            }
            ExperimentSpec::TimingSweep(_) => {}
        }
    }
    Ok(config)
}

fn rebase_corpus_paths(spec: &mut ModelSpec, base: &Path) {
    match spec {
        ModelSpec::Ngram {
            corpus: Some(corpus),
            ..
        } if corpus.is_relative() => *corpus = base.join(&corpus),
        ModelSpec::SmoothedUniform {
            base: Some(inner), ..
        } => rebase_corpus_paths(inner, base),
        _ => {}
    }
}

/// Runs an experiment, writing its report and artifacts into `out_dir`.
///
/// On failure a machine-readable `error.json` record is left in `out_dir`
/// and the error is returned.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    format: ReportFormat,
) -> Result<ExperimentReport> {
    fs::create_dir_all(out_dir)?;
    match execute(config, out_dir) {
        Ok(report) => {
            fs::write(out_dir.join(format.file_name()), report.render(format))?;
            Ok(report)
        }
        Err(error) => {
            let record = json!({
                "experiment": config.name,
                "error": error.to_string(),
                "causes": error_chain(&error),
            });
            // Best effort: the record must never mask the original error.
            let _ = fs::write(
                out_dir.join("error.json"),
                serde_json::to_string_pretty(&record).unwrap_or_default(),
            );
            Err(error)
        }
    }
}

fn error_chain(error: &Error) -> Vec<String> {
    let mut chain = Vec::new();
    let mut source: Option<&dyn std::error::Error> = std::error::Error::source(error);
    while let Some(cause) = source {
        chain.push(cause.to_string());
        source = cause.source();
    }
    chain
}

fn execute(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    let mut report = ExperimentReport {
        name: config.name.clone(),
        mode: match &config.spec {
            ExperimentSpec::Losslessness(_) => "losslessness",
            ExperimentSpec::TotRun(_) => "tot-run",
            ExperimentSpec::TimingSweep(_) => "timing-sweep",
        }
        .to_string(),
        entries: Vec::new(),
    };
    match &config.spec {
        ExperimentSpec::Losslessness(spec) => execute_losslessness(spec, out_dir, &mut report)?,
        ExperimentSpec::TotRun(spec) => execute_tot_run(spec, out_dir, &mut report)?,
        ExperimentSpec::TimingSweep(spec) => execute_timing_sweep(spec, out_dir, &mut report)?,
    }
    Ok(report)
}

fn execute_losslessness(
    spec: &LosslessnessSpec,
    out_dir: &Path,
    report: &mut ExperimentReport,
) -> Result<()> {
    if spec.trials == 0 {
        return Err(Error::InvalidConfig("trials must be positive".into()));
    }
    let models = ModelPair::from_specs(&spec.target, &spec.draft)?;
    let exact = models.target.next_distribution(&spec.prefix)?;
    let mut counts = vec![0u64; models.vocab_size()];
    let mut alpha_sum = 0.0;
    for trial in 0..spec.trials {
        let run_config = RunConfig {
            kconfig: spec.kconfig.clone(),
            prefixes: vec![spec.prefix.clone(); spec.sequences],
            target_len: spec.target_len,
            seed: spec.seed.wrapping_add(trial),
            mode: spec.sched_mode,
            ticks: spec.ticks.clone(),
        };
        let out = run(&models, &run_config)?;
        for response in &out.responses {
            counts[response[0].index()] += 1;
        }
        alpha_sum += alpha_from_trace(&out.trace)?;
        if trial == 0 {
            let file = fs::File::create(out_dir.join("trace.jsonl"))?;
            out.trace.write_jsonl(file)?;
        }
    }
    let samples: u64 = counts.iter().sum();
    let tv = empirical_tv(&counts, exact.probs());

    // Noise yardstick: draw the same number of samples directly from the
    // exact distribution and measure its own empirical gap. A scheduled
    // run whose gap sits at this floor is indistinguishable from direct
    // sampling at this sample size.
    let mut baseline = RngStream::new(
        mix_seed(spec.seed, BASELINE_SALT),
        StreamId::new(0, Phase::Setup),
    );
    let mut baseline_counts = vec![0u64; models.vocab_size()];
    for _ in 0..samples {
        baseline_counts[exact.sample(&mut baseline)?.index()] += 1;
    }
    let baseline_tv = empirical_tv(&baseline_counts, exact.probs());

    let passed = tv <= spec.tolerance;
    report.push("trials", spec.trials);
    report.push("samples", samples);
    report.push("first_token_tv", tv);
    report.push("direct_sampling_tv", baseline_tv);
    report.push("tolerance", spec.tolerance);
    report.push("mean_alpha", alpha_sum / spec.trials as f64);
    report.push("passed", passed);
    Ok(())
}

/// Salt separating the direct-sampling baseline stream from run streams.
const BASELINE_SALT: u64 = 0x6f72_6163_6c65;

fn empirical_tv(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 / total as f64 - p).abs())
        .sum::<f64>()
}

fn execute_tot_run(
    spec: &TotRunSpec,
    out_dir: &Path,
    report: &mut ExperimentReport,
) -> Result<()> {
    let models = ModelPair::from_specs(&spec.target, &spec.draft)?;
    let builder = TreeBuilder::new(&models, &spec.tree, spec.prompt.clone())?;
    let outcome = builder.build()?;

    let tree_file = fs::File::create(out_dir.join("tree.jsonl"))?;
    outcome.tree.write_jsonl(tree_file)?;
    let mut runs_file = fs::File::create(out_dir.join("runs.jsonl"))?;
    for component_run in &outcome.runs {
        serde_json::to_writer(&mut runs_file, component_run)?;
        runs_file.write_all(b"\n")?;
    }

    let split = component_split(&outcome.runs);
    // Invariant monitor: the component buckets must partition the runs.
    let total_runs: u64 = split.generation.runs + split.evaluation.runs;
    let total_response: u64 =
        split.generation.response_tokens + split.evaluation.response_tokens;
    let splits_consistent = total_runs == outcome.runs.len() as u64
        && total_response
            == outcome
                .runs
                .iter()
                .map(|r| r.metrics.response_tokens)
                .sum::<u64>();
    report.push("nodes", outcome.tree.nodes.len());
    report.push("levels", outcome.levels.len());
    report.push(
        "level_widths",
        Value::from(
            outcome
                .levels
                .iter()
                .map(|l| l.selected.len())
                .collect::<Vec<_>>(),
        ),
    );
    report.push("scheduled_runs", outcome.runs.len());
    report.push("generation_tokens", split.generation.response_tokens);
    report.push("evaluation_tokens", split.evaluation.response_tokens);
    report.push("generation_acceptance", split.generation.acceptance_rate());
    report.push("evaluation_acceptance", split.evaluation.acceptance_rate());
    report.push(
        "final_tokens",
        Value::from(
            outcome
                .tree
                .final_tokens
                .iter()
                .map(|t| t.0)
                .collect::<Vec<_>>(),
        ),
    );
    report.push("warnings", outcome.warnings.len());
    report.push("passed", splits_consistent);
    Ok(())
}

fn execute_timing_sweep(
    spec: &TimingSweepSpec,
    out_dir: &Path,
    report: &mut ExperimentReport,
) -> Result<()> {
    let rows = sweep(&spec.sweep)?;
    let file = fs::File::create(out_dir.join("sweep.csv"))?;
    write_sweep_csv(&rows, file)?;

    let scheduled_best = rows
        .iter()
        .filter(|r| r.strategy == Strategy::ScheduledSd)
        .map(|r| r.speedup_vs_serial)
        .fold(f64::NEG_INFINITY, f64::max);
    // Scheduled speculation shares acceptance draws with serial
    // speculation, so it should never be slower at the same grid point;
    // report any violation rather than hiding it.
    let mut dominance_violations = 0u64;
    for row in rows.iter().filter(|r| r.strategy == Strategy::ScheduledSd) {
        let serial_sd = rows
            .iter()
            .find(|r| {
                r.strategy == Strategy::SerialSd
                    && r.alpha == row.alpha
                    && r.sequences == row.sequences
                    && r.draft_depth == row.draft_depth
            })
            .expect("sweep prices every strategy at every point");
        if row.makespan > serial_sd.makespan {
            dominance_violations += 1;
        }
    }
    report.push("grid_points", rows.len() / Strategy::ALL.len());
    report.push("rows", rows.len());
    report.push("best_scheduled_speedup", scheduled_best);
    report.push("dominance_violations", dominance_violations);
    report.push("passed", dominance_violations == 0);
    Ok(())
}
