//! `dro` — one binary for the whole workflow: synthesize datasets from a
//! problem spec, train any of the algorithms, evaluate checkpoints against
//! the exact oracles, inspect closed-form solutions, run the gradient
//! suite, execute hyperparameter sweeps, and summarize results.
//!
//! Every subcommand is reproducible from its config file and seeds alone:
//! outputs contain no timestamps or machine state, so rerunning into a fresh
//! directory yields identical files. On success the process exits 0 and
//! prints a single JSON summary to stdout; failures print a machine-parsable
//! `{"error":{"kind":...,"message":...}}` envelope to stderr and exit 2 for
//! configuration problems or 1 for runtime failures. Flag values override
//! config-file values, which override built-in defaults.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dro_core::bandit::{BanditSpec, Policy};
use dro_core::data::{
    generate_with_options, load_dataset, normalize_rewards, save_dataset, GenOptions,
    TripletDataset,
};
use dro_core::eval::{
    emit_report, evaluate, partition_noncancellation_check, read_results_csv, run_sweep, summarize,
    SweepData, SweepGrid,
};
use dro_core::gradcheck;
use dro_core::oracle::{self, FixedPointOptions};
use dro_core::trainer::{train_auto, Checkpoint, TrainConfig};
use dro_core::Error as CoreError;

// ── Configuration file ──────────────────────────────────────────────────

/// A problem spec given either as a path or inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SpecSource {
    Path(PathBuf),
    Inline(BanditSpec),
}

impl SpecSource {
    fn load(&self) -> Result<BanditSpec, CoreError> {
        match self {
            SpecSource::Path(p) => BanditSpec::load(p),
            SpecSource::Inline(s) => {
                s.validate()?;
                Ok(s.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    #[serde(default)]
    n_records: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    normalize: Option<bool>,
    #[serde(default)]
    noise_sigma: Option<f64>,
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    /// Dataset file; when absent, data is generated from the `data` section.
    #[serde(default)]
    dataset: Option<PathBuf>,
    config: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    #[serde(default)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    grid: SweepGrid,
    /// Per-cell dataset size; mutually exclusive with `dataset`.
    #[serde(default)]
    n_records: Option<usize>,
    /// One shared dataset file for every cell.
    #[serde(default)]
    dataset: Option<PathBuf>,
    /// Concurrent cells; 0 means one per core.
    #[serde(default)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CliConfig {
    #[serde(default)]
    spec: Option<SpecSource>,
    #[serde(default)]
    data: Option<DataSection>,
    #[serde(default)]
    train: Option<TrainSection>,
    #[serde(default)]
    eval: Option<EvalSection>,
    #[serde(default)]
    sweep: Option<SweepSection>,
}

impl CliConfig {
    fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::Io {
            path: path.into(),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CoreError::Config(format!("bad config {}: {e}", path.display())))
    }

    fn defaults_document() -> Self {
        CliConfig {
            spec: Some(SpecSource::Path("specs/two_action.json".into())),
            data: Some(DataSection {
                n_records: Some(10_000),
                seed: Some(0),
                normalize: Some(false),
                noise_sigma: None,
                out: Some("dataset.jsonl".into()),
            }),
            train: Some(TrainSection {
                dataset: Some("dataset.jsonl".into()),
                config: TrainConfig::default(),
            }),
            eval: Some(EvalSection {
                checkpoint: Some("dro-out/checkpoint.json".into()),
            }),
            sweep: Some(SweepSection {
                grid: SweepGrid {
                    base: TrainConfig::default(),
                    axes: vec![dro_core::eval::SweepAxis {
                        name: "tau".into(),
                        values: vec![0.1.into(), 1.0.into(), 5.0.into()],
                    }],
                    seeds: vec![1, 2, 3],
                    cap: 4096,
                },
                n_records: Some(6_000),
                dataset: None,
                jobs: Some(0),
            }),
        }
    }
}

// ── Argument surface ────────────────────────────────────────────────────

#[derive(Parser, Debug)]
#[command(
    name = "dro",
    version,
    about = "Offline KL-regularized policy optimization on finite contextual bandits",
    subcommand_negates_reqs = true
)]
struct Cli {
    /// Print the fully-populated default configuration as JSON and exit.
    #[arg(long)]
    print_defaults: bool,

    /// Seed override (wins over the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON configuration file with `spec`, `data`, `train`, `eval`,
    /// `sweep` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path (file or directory depending on the subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic single-trajectory dataset from a problem spec.
    Gen {
        /// Problem spec JSON (overrides the config file's `spec`).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Number of records.
        #[arg(long)]
        n: Option<usize>,
        /// Normalize rewards to mean 0, variance 1.
        #[arg(long)]
        normalize: bool,
        /// Gaussian observation-noise standard deviation.
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Print the closed-form solution and bound report for a spec.
    Oracle {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train per the config file; writes history CSV and a final checkpoint.
    Train,
    /// Evaluate a checkpoint against the exact oracles.
    Eval {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the seeded analytic-vs-numeric gradient suite.
    Gradcheck {
        /// Number of random instances.
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Run a hyperparameter sweep; writes results.csv, summary.json, long.csv.
    Sweep {
        /// Concurrent cells; 0 means one per core.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Summarize an existing results CSV.
    Report {
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

// ── Error envelope and exit codes ────────────────────────────────────────

fn fail(err: &CoreError) -> ExitCode {
    let envelope = serde_json::json!({
        "error": { "kind": err.kind(), "message": err.to_string() }
    });
    eprintln!("{envelope}");
    match err {
        CoreError::Config(_) | CoreError::InvalidSpec(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn config_error(msg: impl Into<String>) -> CoreError {
    CoreError::Config(msg.into())
}

fn emit(summary: serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary")
    );
}

fn main() -> ExitCode {
    let mut cli = Cli::parse();

    if cli.print_defaults {
        emit(serde_json::to_value(CliConfig::defaults_document()).expect("defaults"));
        return ExitCode::SUCCESS;
    }

    let Some(command) = cli.command.take() else {
        // no subcommand: usage to stderr, exit 2
        let mut cmd = Cli::command();
        eprintln!("{}", cmd.render_help());
        return ExitCode::from(2);
    };

    let config = match &cli.config {
        Some(path) => match CliConfig::load(path) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        },
        None => CliConfig::default(),
    };

    let result = match command {
        Command::Gen {
            spec,
            n,
            normalize,
            noise_sigma,
        } => cmd_gen(&cli, &config, spec, n, normalize, noise_sigma),
        Command::Oracle { spec } => cmd_oracle(&cli, &config, spec),
        Command::Train => cmd_train(&cli, &config),
        Command::Eval { spec, checkpoint } => cmd_eval(&cli, &config, spec, checkpoint),
        Command::Gradcheck { n } => cmd_gradcheck(&cli, n),
        Command::Sweep { jobs } => cmd_sweep(&cli, &config, jobs),
        Command::Report { results } => cmd_report(&cli, results),
    };

    match result {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

// ── Shared helpers ──────────────────────────────────────────────────────

fn resolve_spec(cli_flag: Option<PathBuf>, config: &CliConfig) -> Result<BanditSpec, CoreError> {
    if let Some(path) = cli_flag {
        return BanditSpec::load(path);
    }
    config
        .spec
        .as_ref()
        .ok_or_else(|| config_error("no spec given: pass --spec or set `spec` in the config file"))?
        .load()
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("dro-out"))
}

// ── Subcommands ─────────────────────────────────────────────────────────

fn cmd_gen(
    cli: &Cli,
    config: &CliConfig,
    spec_flag: Option<PathBuf>,
    n_flag: Option<usize>,
    normalize_flag: bool,
    noise_flag: Option<f64>,
) -> Result<ExitCode, CoreError> {
    let spec = resolve_spec(spec_flag, config)?;
    let data = config.data.clone().unwrap_or(DataSection {
        n_records: None,
        seed: None,
        normalize: None,
        noise_sigma: None,
        out: None,
    });
    let n_records = n_flag
        .or(data.n_records)
        .ok_or_else(|| config_error("no record count: pass --n or set data.n_records"))?;
    let seed = cli.seed.or(data.seed).unwrap_or(0);
    let out = cli
        .out
        .clone()
        .or(data.out)
        .ok_or_else(|| config_error("no output path: pass --out or set data.out"))?;
    let noise_sigma = noise_flag.or(data.noise_sigma);
    let normalize = normalize_flag || data.normalize.unwrap_or(false);

    let mut dataset = generate_with_options(&spec, n_records, seed, &GenOptions { noise_sigma })?;
    let mut norm_params = None;
    if normalize {
        let (normalized, mean, std) = normalize_rewards(&dataset)?;
        dataset = normalized;
        norm_params = Some((mean, std));
    }
    save_dataset(&dataset, &out)?;

    emit(serde_json::json!({
        "command": "gen",
        "records": dataset.len(),
        "seed": seed,
        "normalized": normalize,
        "normalization": norm_params.map(|(mean, std)| serde_json::json!({"mean": mean, "std": std})),
        "noise_sigma": noise_sigma,
        "path": out,
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(
    cli: &Cli,
    config: &CliConfig,
    spec_flag: Option<PathBuf>,
) -> Result<ExitCode, CoreError> {
    let spec = resolve_spec(spec_flag, config)?;
    let v_star = oracle::v_star(&spec)?;
    let pi_star = oracle::pi_star(&spec)?;
    let objective = oracle::regularized_objective(&spec, &pi_star)?;

    // bound report for the value of the reference policy, the natural
    // nontrivial approximation to hand the solver
    let bound = oracle::v_pi(&spec, &spec.pi_ref)
        .and_then(|v| oracle::optimality_gap_bound(&spec, &v, &FixedPointOptions::default()));
    let (bound_report, bound_error) = match bound {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let partition =
        partition_noncancellation_check(&spec, dro_core::eval::DEFAULT_PARTITION_MARGIN)?;

    let doc = serde_json::json!({
        "command": "oracle",
        "full_support": spec.full_support(),
        "v_star": v_star.values(),
        "pi_star": pi_star,
        "objective_at_optimum": objective,
        "expected_optimal_value": oracle::expected_value(&spec, &v_star),
        "bound_report_at_reference_value": bound_report,
        "bound_error": bound_error,
        "partition_check": partition,
    });
    if let Some(out) = &cli.out {
        std::fs::write(out, serde_json::to_string_pretty(&doc).expect("doc")).map_err(|e| {
            CoreError::Io {
                path: out.clone(),
                source: e,
            }
        })?;
    }
    emit(doc);
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(cli: &Cli, config: &CliConfig) -> Result<ExitCode, CoreError> {
    let spec = resolve_spec(None, config)?;
    let section = config
        .train
        .as_ref()
        .ok_or_else(|| config_error("config file needs a `train` section"))?;
    let mut train_config = section.config.clone();
    if let Some(seed) = cli.seed {
        train_config.seed = seed;
    }
    train_config.validate()?;

    let dataset: TripletDataset = match &section.dataset {
        Some(path) => load_dataset(path)?,
        None => {
            let data = config.data.as_ref().ok_or_else(|| {
                config_error("train.dataset missing and no `data` section to generate from")
            })?;
            let n = data
                .n_records
                .ok_or_else(|| config_error("data.n_records required to generate"))?;
            generate_with_options(
                &spec,
                n,
                data.seed.unwrap_or(0),
                &GenOptions {
                    noise_sigma: data.noise_sigma,
                },
            )?
        }
    };

    let out_dir = out_dir(cli);
    std::fs::create_dir_all(&out_dir).map_err(|e| CoreError::Io {
        path: out_dir.clone(),
        source: e,
    })?;

    let output = train_auto(&dataset, &spec, &train_config)?;
    let history_path = out_dir.join("history.csv");
    output.history.write_csv(&history_path)?;
    let checkpoint_path = out_dir.join("checkpoint.json");
    output
        .checkpoints
        .last()
        .expect("training always records a final checkpoint")
        .save(&checkpoint_path)?;

    let last = output.history.final_record().expect("nonempty history");
    emit(serde_json::json!({
        "command": "train",
        "algorithm": train_config.algorithm,
        "steps": train_config.total_steps,
        "seed": train_config.seed,
        "final": {
            "train_loss": last.train_loss,
            "kl_to_optimal": last.kl_to_optimal,
            "value_sup_error": last.value_sup_error,
            "objective": last.objective,
        },
        "files": { "history": history_path, "checkpoint": checkpoint_path },
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(
    cli: &Cli,
    config: &CliConfig,
    spec_flag: Option<PathBuf>,
    checkpoint_flag: Option<PathBuf>,
) -> Result<ExitCode, CoreError> {
    let spec = resolve_spec(spec_flag, config)?;
    let checkpoint_path = checkpoint_flag
        .or_else(|| config.eval.as_ref().and_then(|e| e.checkpoint.clone()))
        .ok_or_else(|| config_error("no checkpoint: pass --checkpoint or set eval.checkpoint"))?;
    let checkpoint = Checkpoint::load(&checkpoint_path)?;
    let table = checkpoint.policy.prob_table();
    let report = evaluate(&table, checkpoint.value.as_ref(), &spec)?;

    let doc = serde_json::json!({
        "command": "eval",
        "checkpoint": checkpoint_path,
        "step": checkpoint.step,
        "report": report,
    });
    if let Some(out) = &cli.out {
        std::fs::write(out, serde_json::to_string_pretty(&doc).expect("doc")).map_err(|e| {
            CoreError::Io {
                path: out.clone(),
                source: e,
            }
        })?;
    }
    emit(doc);
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(cli: &Cli, n: usize) -> Result<ExitCode, CoreError> {
    let seed = cli.seed.unwrap_or(7);
    let report = gradcheck::run_suite(n, seed)?;
    let doc = serde_json::to_value(&report).expect("report");
    if let Some(out) = &cli.out {
        std::fs::write(out, serde_json::to_string_pretty(&doc).expect("doc")).map_err(|e| {
            CoreError::Io {
                path: out.clone(),
                source: e,
            }
        })?;
    }
    emit(doc);
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_sweep(
    cli: &Cli,
    config: &CliConfig,
    jobs_flag: Option<usize>,
) -> Result<ExitCode, CoreError> {
    let spec = resolve_spec(None, config)?;
    let section = config
        .sweep
        .as_ref()
        .ok_or_else(|| config_error("config file needs a `sweep` section"))?;
    let data = match (&section.dataset, section.n_records) {
        (Some(path), None) => SweepData::Shared(load_dataset(path)?),
        (None, Some(n)) => SweepData::Generate { n_records: n },
        (Some(_), Some(_)) => {
            return Err(config_error(
                "sweep.dataset and sweep.n_records are mutually exclusive",
            ))
        }
        (None, None) => return Err(config_error("sweep needs either `dataset` or `n_records`")),
    };
    let jobs = jobs_flag.or(section.jobs).unwrap_or(0);

    let results = run_sweep(&section.grid, &data, &spec, jobs)?;
    let out_dir = out_dir(cli);
    let files = emit_report(&results, &out_dir)?;
    let summary = summarize(&results);

    emit(serde_json::json!({
        "command": "sweep",
        "cells": results.rows.len(),
        "failed": summary.n_failed,
        "files": files,
    }));
    if results.any_failed() {
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_report(cli: &Cli, results_flag: Option<PathBuf>) -> Result<ExitCode, CoreError> {
    let results_path = results_flag.ok_or_else(|| config_error("pass --results <results.csv>"))?;
    let results = read_results_csv(&results_path)?;
    let out_dir = out_dir(cli);
    let files = emit_report(&results, &out_dir)?;
    emit(serde_json::json!({
        "command": "report",
        "rows": results.rows.len(),
        "files": files,
    }));
    Ok(ExitCode::SUCCESS)
}
