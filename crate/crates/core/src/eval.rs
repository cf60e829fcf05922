//! Exact evaluation, policy comparison, sweeps and report emission.
//!
//! Evaluation never samples: KL to the optimal policy, value errors, expected
//! reward and the regularized objective are all finite sums through the
//! oracle module. The comparison judge is the true reward table (sample
//! `x ~ rho`, one action from each policy, higher reward wins, ties split
//! 0.5), reported both as an exact enumeration and as a seeded Monte-Carlo
//! estimate. Sweeps run their cells independently — a failing cell records
//! an error string and never poisons its siblings — and results land in a
//! CSV whose reparse reproduces the in-memory table exactly.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::AssertUnwindSafe;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::{expected_kl_tables, BanditSpec, ProbTable, ValueFn};
use crate::data::{generate_synthetic, TripletDataset};
use crate::error::{Error, Result};
use crate::oracle;
use crate::rng::{mix_seed, DetRng};
use crate::trainer::{train_auto, TrainConfig};

/// Default margin used by the partition-function demonstration when judging
/// whether the soft value varies materially across contexts.
pub const DEFAULT_PARTITION_MARGIN: f64 = 0.5;

// ── Evaluation ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerContextDiag {
    pub context: usize,
    pub rho: f64,
    pub kl_to_optimal: f64,
    pub expected_reward: f64,
    pub v_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// E_rho[KL(pi || pi*)].
    pub kl_to_optimal: f64,
    /// max_x |V(x) - V*(x)|, when a value function is supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_sup_error: Option<f64>,
    /// E_rho E_pi[r].
    pub expected_reward: f64,
    /// Exact objective: expected reward minus tau-weighted KL to reference.
    pub regularized_objective: f64,
    pub per_context: Vec<PerContextDiag>,
}

/// Exact evaluation of a policy table (and optionally a value function)
/// against the problem's oracle quantities.
pub fn evaluate(
    policy: &ProbTable,
    value: Option<&ValueFn>,
    spec: &BanditSpec,
) -> Result<EvalReport> {
    spec.validate()?;
    if policy.len() != spec.n_contexts {
        return Err(Error::Argument(format!(
            "policy has {} rows, expected {}",
            policy.len(),
            spec.n_contexts
        )));
    }
    let pi_star = oracle::pi_star(spec)?;
    let v_star = oracle::v_star(spec)?;
    let kl_to_optimal = expected_kl_tables(&spec.rho, policy, &pi_star)?;
    let regularized_objective = oracle::regularized_objective(spec, policy)?;

    let mut expected_reward = 0.0;
    let mut per_context = Vec::with_capacity(spec.n_contexts);
    for x in 0..spec.n_contexts {
        let er: f64 = policy[x]
            .iter()
            .zip(&spec.reward[x])
            .map(|(&p, &r)| p * r)
            .sum();
        expected_reward += spec.rho[x] * er;
        per_context.push(PerContextDiag {
            context: x,
            rho: spec.rho[x],
            kl_to_optimal: crate::bandit::kl_rows(&policy[x], &pi_star[x])?,
            expected_reward: er,
            v_star: v_star.value(x),
            value: value.map(|v| v.value(x)),
        });
    }
    let value_sup_error = value.map(|v| v.sup_distance(&v_star, spec.n_contexts));

    Ok(EvalReport {
        kl_to_optimal,
        value_sup_error,
        expected_reward,
        regularized_objective,
        per_context,
    })
}

// ── Comparison ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CompareReport {
    /// Population winrate of A over B by full enumeration (ties split 0.5);
    /// the preferred quantity for assertions.
    pub exact_winrate: f64,
    /// Seeded Monte-Carlo estimate of the same quantity.
    pub sampled_winrate: f64,
    pub n_samples: usize,
}

/// Winrate of policy A over policy B under the true reward: sample a
/// context, one action from each policy, and compare rewards.
pub fn compare(
    a: &ProbTable,
    b: &ProbTable,
    spec: &BanditSpec,
    n_samples: usize,
    seed: u64,
) -> Result<CompareReport> {
    if n_samples == 0 {
        return Err(Error::Argument("n_samples must be positive".into()));
    }
    spec.validate()?;

    let mut exact = 0.0;
    for x in 0..spec.n_contexts {
        if spec.rho[x] == 0.0 {
            continue;
        }
        let mut ctx = 0.0;
        for ya in 0..spec.n_actions {
            if a[x][ya] == 0.0 {
                continue;
            }
            for yb in 0..spec.n_actions {
                if b[x][yb] == 0.0 {
                    continue;
                }
                let (ra, rb) = (spec.reward[x][ya], spec.reward[x][yb]);
                let score = if ra > rb {
                    1.0
                } else if ra == rb {
                    0.5
                } else {
                    0.0
                };
                ctx += a[x][ya] * b[x][yb] * score;
            }
        }
        exact += spec.rho[x] * ctx;
    }

    let mut rng = DetRng::new(seed);
    let mut wins = 0.0;
    for _ in 0..n_samples {
        let x = rng.categorical(&spec.rho);
        let ya = rng.categorical(&a[x]);
        let yb = rng.categorical(&b[x]);
        let (ra, rb) = (spec.reward[x][ya], spec.reward[x][yb]);
        wins += if ra > rb {
            1.0
        } else if ra == rb {
            0.5
        } else {
            0.0
        };
    }

    Ok(CompareReport {
        exact_winrate: exact,
        sampled_winrate: wins / n_samples as f64,
        n_samples,
    })
}

// ── Partition-function demonstration ────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionReport {
    /// max over contexts and action pairs of the pairwise residual
    /// difference |(r_w - tau lr_w) - (r_l - tau lr_l)| at the optimum;
    /// the context normalizer cancels, so this is numerically zero.
    pub max_pairwise_residual_diff: f64,
    /// Single-trajectory residual r - tau * log(pi*/pi_ref) per context;
    /// equals the soft value V*(x).
    pub residual_per_context: Vec<f64>,
    /// max - min of the residuals across contexts with positive rho mass.
    pub residual_spread: f64,
    pub margin: f64,
    /// The spread is below numerical resolution: the problem cannot
    /// distinguish the two settings (reported instead of failing).
    pub degenerate: bool,
    pub pairwise_cancels: bool,
    pub spread_exceeds_margin: bool,
}

/// Demonstrate that pairwise residual differences cancel the per-context
/// normalizer while single-trajectory residuals equal it and so must be
/// learned explicitly.
pub fn partition_noncancellation_check(spec: &BanditSpec, margin: f64) -> Result<PartitionReport> {
    spec.validate()?;
    let pi_star = oracle::pi_star(spec)?;
    let v_star = oracle::v_star(spec)?;

    let mut max_diff: f64 = 0.0;
    let mut residuals = Vec::with_capacity(spec.n_contexts);
    let mut spread_lo = f64::INFINITY;
    let mut spread_hi = f64::NEG_INFINITY;
    for x in 0..spec.n_contexts {
        let resid =
            |y: usize| spec.reward[x][y] - spec.tau * (pi_star[x][y] / spec.pi_ref[x][y]).ln();
        let support: Vec<usize> = (0..spec.n_actions)
            .filter(|&y| spec.pi_ref[x][y] > 0.0)
            .collect();
        for (i, &yw) in support.iter().enumerate() {
            for &yl in &support[i + 1..] {
                max_diff = max_diff.max((resid(yw) - resid(yl)).abs());
            }
        }
        let r0 = support.first().map(|&y| resid(y)).unwrap_or(f64::NAN);
        residuals.push(r0);
        if spec.rho[x] > 0.0 {
            spread_lo = spread_lo.min(r0);
            spread_hi = spread_hi.max(r0);
        }
        debug_assert!((r0 - v_star.value(x)).abs() < 1e-9);
    }
    let residual_spread = spread_hi - spread_lo;
    let degenerate = residual_spread < 1e-9;

    Ok(PartitionReport {
        max_pairwise_residual_diff: max_diff,
        residual_per_context: residuals,
        residual_spread,
        margin,
        degenerate,
        pairwise_cancels: max_diff < 1e-9,
        spread_exceeds_margin: !degenerate && residual_spread > margin,
    })
}

// ── Sweeps ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub base: TrainConfig,
    pub axes: Vec<SweepAxis>,
    pub seeds: Vec<u64>,
    /// Upper bound on cells (cartesian product times seeds).
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    4096
}

/// Where sweep cells get their training data.
#[derive(Debug, Clone)]
pub enum SweepData {
    /// One shared dataset for every cell.
    Shared(TripletDataset),
    /// Generate per cell from the spec; the dataset seed is derived from the
    /// cell seed so cells with the same seed share data.
    Generate { n_records: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    /// (axis name, rendered value) in grid order.
    pub axes: Vec<(String, String)>,
    pub seed: u64,
    pub kl_to_optimal: Option<f64>,
    pub objective: Option<f64>,
    pub winrate_vs_ref: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResults {
    pub axis_names: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepResults {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }
}

fn render_axis_value(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Apply one axis assignment onto a config. Axis names mirror the config
/// fields; unknown names are a config error.
fn apply_axis(cfg: &mut TrainConfig, name: &str, value: &serde_json::Value) -> Result<()> {
    let bad = || Error::Config(format!("axis {name:?} cannot take value {value}"));
    match name {
        "tau" => cfg.tau = value.as_f64().ok_or_else(bad)?,
        "lr_policy" => cfg.lr_policy = value.as_f64().ok_or_else(bad)?,
        "lr_value" => cfg.lr_value = value.as_f64().ok_or_else(bad)?,
        "batch_size" => cfg.batch_size = value.as_u64().ok_or_else(bad)? as usize,
        "total_steps" => cfg.total_steps = value.as_u64().ok_or_else(bad)? as usize,
        "warmup_steps" => cfg.warmup_steps = value.as_u64().ok_or_else(bad)? as usize,
        "parameter_tying" => cfg.parameter_tying = value.as_bool().ok_or_else(bad)?,
        "rescale" => cfg.rescale = value.as_bool().ok_or_else(bad)?,
        "algorithm" => {
            cfg.algorithm = serde_json::from_value(value.clone()).map_err(|_| bad())?;
        }
        "value_mode" => {
            cfg.value_mode = serde_json::from_value(value.clone()).map_err(|_| bad())?;
        }
        "optimizer" => {
            cfg.optimizer = serde_json::from_value(value.clone()).map_err(|_| bad())?;
        }
        _ => {
            return Err(Error::Config(format!("unknown sweep axis {name:?}")));
        }
    }
    Ok(())
}

struct Cell {
    id: usize,
    assignments: Vec<(String, serde_json::Value)>,
    seed: u64,
}

fn enumerate_cells(grid: &SweepGrid) -> Result<Vec<Cell>> {
    if grid.axes.is_empty() {
        return Err(Error::Config("sweep grid needs at least one axis".into()));
    }
    if grid.seeds.is_empty() {
        return Err(Error::Config("sweep grid needs at least one seed".into()));
    }
    for axis in &grid.axes {
        if axis.values.is_empty() {
            return Err(Error::Config(format!("axis {:?} has no values", axis.name)));
        }
    }
    let mut combos: Vec<Vec<(String, serde_json::Value)>> = vec![Vec::new()];
    for axis in &grid.axes {
        let mut next = Vec::with_capacity(combos.len() * axis.values.len());
        for combo in &combos {
            for v in &axis.values {
                let mut c = combo.clone();
                c.push((axis.name.clone(), v.clone()));
                next.push(c);
            }
        }
        combos = next;
    }
    let total = combos.len() * grid.seeds.len();
    if total > grid.cap {
        return Err(Error::Config(format!(
            "sweep has {total} cells, exceeding the cap of {}",
            grid.cap
        )));
    }
    let mut cells = Vec::with_capacity(total);
    let mut id = 0;
    for combo in &combos {
        for &seed in &grid.seeds {
            cells.push(Cell {
                id,
                assignments: combo.clone(),
                seed,
            });
            id += 1;
        }
    }
    Ok(cells)
}

fn run_cell(
    cell: &Cell,
    grid: &SweepGrid,
    data: &SweepData,
    spec: &BanditSpec,
) -> Result<SweepRow> {
    let mut cfg = grid.base.clone();
    for (name, value) in &cell.assignments {
        apply_axis(&mut cfg, name, value)?;
    }
    cfg.seed = cell.seed;
    cfg.validate()?;

    let generated;
    let dataset: &TripletDataset = match data {
        SweepData::Shared(ds) => ds,
        SweepData::Generate { n_records } => {
            generated = generate_synthetic(spec, *n_records, mix_seed(cell.seed, 0xDA7A))?;
            &generated
        }
    };

    let out = train_auto(dataset, spec, &cfg)?;
    let table = crate::bandit::Policy::prob_table(&out.policy);
    let report = evaluate(&table, out.value.as_ref(), spec)?;
    let vs_ref = compare(&table, &spec.pi_ref, spec, 1, mix_seed(cell.seed, 0xC0))?;

    Ok(SweepRow {
        cell: cell.id,
        axes: cell
            .assignments
            .iter()
            .map(|(n, v)| (n.clone(), render_axis_value(v)))
            .collect(),
        seed: cell.seed,
        kl_to_optimal: Some(report.kl_to_optimal),
        objective: Some(report.regularized_objective),
        winrate_vs_ref: Some(vs_ref.exact_winrate),
        error: None,
    })
}

/// Run every cell of the grid (concurrently when `jobs != 1`), isolating
/// failures: a cell that errors or panics contributes an error row and the
/// sweep continues. Rows come back sorted by cell id regardless of
/// completion order.
pub fn run_sweep(
    grid: &SweepGrid,
    data: &SweepData,
    spec: &BanditSpec,
    jobs: usize,
) -> Result<SweepResults> {
    spec.validate()?;
    let cells = enumerate_cells(grid)?;
    let axis_names: Vec<String> = grid.axes.iter().map(|a| a.name.clone()).collect();

    let execute = |cell: &Cell| -> SweepRow {
        let outcome =
            std::panic::catch_unwind(AssertUnwindSafe(|| run_cell(cell, grid, data, spec)));
        match outcome {
            Ok(Ok(row)) => row,
            Ok(Err(e)) => error_row(cell, e.to_string()),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "cell panicked".into());
                error_row(cell, format!("panic: {msg}"))
            }
        }
    };

    let mut rows: Vec<SweepRow> = if jobs == 1 {
        cells.iter().map(execute).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs) // 0 means rayon's default
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            cells.par_iter().map(execute).collect()
        })
    };
    rows.sort_by_key(|r| r.cell);

    Ok(SweepResults { axis_names, rows })
}

fn error_row(cell: &Cell, message: String) -> SweepRow {
    SweepRow {
        cell: cell.id,
        axes: cell
            .assignments
            .iter()
            .map(|(n, v)| (n.clone(), render_axis_value(v)))
            .collect(),
        seed: cell.seed,
        kl_to_optimal: None,
        objective: None,
        winrate_vs_ref: None,
        error: Some(message),
    }
}

// ── Report emission ─────────────────────────────────────────────────────

/// Per-(axis, value) summary statistics over successful rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSummary {
    pub axis: String,
    pub value: String,
    pub n: usize,
    pub mean_objective: f64,
    pub std_objective: f64,
    pub mean_kl: f64,
    pub std_kl: f64,
    pub mean_winrate_vs_ref: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub n_rows: usize,
    pub n_failed: usize,
    pub groups: Vec<GroupSummary>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, var.sqrt())
}

pub fn summarize(results: &SweepResults) -> SweepSummary {
    let mut groups: BTreeMap<(String, String), Vec<&SweepRow>> = BTreeMap::new();
    for row in &results.rows {
        if row.error.is_some() {
            continue;
        }
        for (axis, value) in &row.axes {
            groups
                .entry((axis.clone(), value.clone()))
                .or_default()
                .push(row);
        }
    }
    let groups = groups
        .into_iter()
        .map(|((axis, value), rows)| {
            let obj: Vec<f64> = rows.iter().filter_map(|r| r.objective).collect();
            let kl: Vec<f64> = rows.iter().filter_map(|r| r.kl_to_optimal).collect();
            let wr: Vec<f64> = rows.iter().filter_map(|r| r.winrate_vs_ref).collect();
            let (mo, so) = mean_std(&obj);
            let (mk, sk) = mean_std(&kl);
            let (mw, _) = mean_std(&wr);
            GroupSummary {
                axis,
                value,
                n: rows.len(),
                mean_objective: mo,
                std_objective: so,
                mean_kl: mk,
                std_kl: sk,
                mean_winrate_vs_ref: mw,
            }
        })
        .collect();
    SweepSummary {
        n_rows: results.rows.len(),
        n_failed: results.rows.iter().filter(|r| r.error.is_some()).count(),
        groups,
    }
}

fn opt_to_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Results CSV: `cell,<axes...>,seed,kl_to_optimal,objective,winrate_vs_ref,error`.
pub fn write_results_csv(results: &SweepResults, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["cell".to_string()];
    header.extend(results.axis_names.iter().cloned());
    header.extend(
        [
            "seed",
            "kl_to_optimal",
            "objective",
            "winrate_vs_ref",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header).expect("in-memory write");
    for row in &results.rows {
        let mut rec = vec![row.cell.to_string()];
        for name in &results.axis_names {
            let value = row
                .axes
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .unwrap_or_default();
            rec.push(value);
        }
        rec.push(row.seed.to_string());
        rec.push(opt_to_cell(row.kl_to_optimal));
        rec.push(opt_to_cell(row.objective));
        rec.push(opt_to_cell(row.winrate_vs_ref));
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(&rec).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reparse a results CSV written by [`write_results_csv`].
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<SweepResults> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 6 || cols[0] != "cell" {
        return Err(Error::Parse {
            line: 1,
            message: "not a sweep results CSV".into(),
        });
    }
    let n_axes = cols.len() - 6;
    let axis_names: Vec<String> = cols[1..1 + n_axes].iter().map(|s| s.to_string()).collect();

    let parse_opt = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(Some).map_err(|e| Error::Parse {
            line,
            message: format!("bad float {s:?}: {e}"),
        })
    };

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let get = |j: usize| record.get(j).unwrap_or("");
        let cell = get(0).parse::<usize>().map_err(|e| Error::Parse {
            line,
            message: format!("bad cell id: {e}"),
        })?;
        let axes: Vec<(String, String)> = axis_names
            .iter()
            .enumerate()
            .map(|(k, name)| (name.clone(), get(1 + k).to_string()))
            .collect();
        let seed = get(1 + n_axes).parse::<u64>().map_err(|e| Error::Parse {
            line,
            message: format!("bad seed: {e}"),
        })?;
        let error = get(5 + n_axes);
        rows.push(SweepRow {
            cell,
            axes,
            seed,
            kl_to_optimal: parse_opt(get(2 + n_axes), line)?,
            objective: parse_opt(get(3 + n_axes), line)?,
            winrate_vs_ref: parse_opt(get(4 + n_axes), line)?,
            error: if error.is_empty() {
                None
            } else {
                Some(error.to_string())
            },
        });
    }
    Ok(SweepResults { axis_names, rows })
}

/// Plot-ready long format: one row per (cell, metric).
pub fn write_long_csv(results: &SweepResults, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["cell".to_string()];
    header.extend(results.axis_names.iter().cloned());
    header.extend(["seed", "metric", "value"].map(String::from));
    w.write_record(&header).expect("in-memory write");
    for row in &results.rows {
        for (metric, value) in [
            ("kl_to_optimal", row.kl_to_optimal),
            ("objective", row.objective),
            ("winrate_vs_ref", row.winrate_vs_ref),
        ] {
            let Some(value) = value else { continue };
            let mut rec = vec![row.cell.to_string()];
            for name in &results.axis_names {
                rec.push(
                    row.axes
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, v)| v.clone())
                        .unwrap_or_default(),
                );
            }
            rec.push(row.seed.to_string());
            rec.push(metric.to_string());
            rec.push(value.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
    }
    let bytes = w.into_inner().expect("in-memory flush");
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Emit the full report set for a results table: `results.csv`,
/// `summary.json` and `long.csv` under the given directory.
pub fn emit_report(
    results: &SweepResults,
    dir: impl AsRef<Path>,
) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    let summary_path = dir.join("summary.json");
    let long_path = dir.join("long.csv");
    write_results_csv(results, &csv_path)?;
    let summary = summarize(results);
    let mut f = std::fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serialization");
    f.write_all(json.as_bytes())
        .map_err(|e| Error::io(&summary_path, e))?;
    write_long_csv(results, &long_path)?;
    Ok(vec![csv_path, summary_path, long_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::two_action_spec;
    use crate::trainer::Algorithm;

    #[test]
    fn evaluate_optimum_fingerprints() {
        let spec = two_action_spec();
        let pi_star = oracle::pi_star(&spec).unwrap();
        let v_star = oracle::v_star(&spec).unwrap();
        let report = evaluate(&pi_star, Some(&v_star), &spec).unwrap();
        assert!(report.kl_to_optimal.abs() <= 1e-12);
        assert!(report.value_sup_error.unwrap() <= 1e-9);
        let ev = oracle::expected_value(&spec, &v_star);
        assert!((report.regularized_objective - ev).abs() < 1e-9);
    }

    #[test]
    fn evaluate_reference_policy() {
        let spec = two_action_spec();
        let report = evaluate(&spec.pi_ref.clone(), None, &spec).unwrap();
        assert!((report.expected_reward - 0.5).abs() < 1e-15);
        assert!(report.kl_to_optimal > 0.0);
        assert!(report.value_sup_error.is_none());
    }

    #[test]
    fn constant_value_sup_error_is_max_deviation() {
        let spec = two_action_spec();
        let c = ValueFn::constant(0.0).unwrap();
        let report = evaluate(&spec.pi_ref.clone(), Some(&c), &spec).unwrap();
        let v_star = oracle::v_star(&spec).unwrap();
        assert!((report.value_sup_error.unwrap() - v_star.value(0).abs()).abs() < 1e-12);
    }

    #[test]
    fn compare_self_is_half_and_antisymmetric() {
        let mut rng = DetRng::new(3);
        let spec = BanditSpec::random(&mut rng, 4, 3, 1.0);
        let a = oracle::pi_star(&spec).unwrap();
        let self_report = compare(&a, &a, &spec, 10, 1).unwrap();
        assert!((self_report.exact_winrate - 0.5).abs() < 1e-12);

        let b = spec.pi_ref.clone();
        let ab = compare(&a, &b, &spec, 10, 1).unwrap();
        let ba = compare(&b, &a, &spec, 10, 1).unwrap();
        assert!((ab.exact_winrate + ba.exact_winrate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compare_sampled_tracks_exact_within_3_sigma() {
        let mut rng = DetRng::new(19);
        let spec = BanditSpec::random(&mut rng, 5, 4, 0.5);
        let a = oracle::pi_star(&spec).unwrap();
        let b = spec.pi_ref.clone();
        let n = 10_000;
        let rep = compare(&a, &b, &spec, n, 123).unwrap();
        let p = rep.exact_winrate;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (rep.sampled_winrate - p).abs() <= 3.0 * sigma + 1e-12,
            "sampled {} exact {} sigma {}",
            rep.sampled_winrate,
            p,
            sigma
        );
    }

    #[test]
    fn partition_check_on_shifted_and_constant_specs() {
        // two contexts, same rows, rewards shifted by exactly 1: V* spread = 1
        let row_ref = vec![0.5, 0.5];
        let spec = BanditSpec::new(
            vec![0.5, 0.5],
            vec![row_ref.clone(), row_ref.clone()],
            vec![row_ref.clone(), row_ref.clone()],
            vec![vec![1.0, 0.0], vec![2.0, 1.0]],
            1.0,
        )
        .unwrap();
        let report = partition_noncancellation_check(&spec, DEFAULT_PARTITION_MARGIN).unwrap();
        assert!(report.pairwise_cancels);
        assert!(!report.degenerate);
        assert!((report.residual_spread - 1.0).abs() < 1e-9);
        assert!(report.spread_exceeds_margin);

        // constant rewards: degenerate, not a failure
        let flat = BanditSpec::new(
            vec![0.5, 0.5],
            vec![row_ref.clone(), row_ref.clone()],
            vec![row_ref.clone(), row_ref.clone()],
            vec![vec![0.3, 0.3], vec![0.3, 0.3]],
            1.0,
        )
        .unwrap();
        let report = partition_noncancellation_check(&flat, DEFAULT_PARTITION_MARGIN).unwrap();
        assert!(report.pairwise_cancels);
        assert!(report.degenerate);
    }

    use crate::bandit::BanditSpec;
    use crate::rng::DetRng;

    fn tiny_grid() -> SweepGrid {
        SweepGrid {
            base: TrainConfig {
                total_steps: 60,
                warmup_steps: 5,
                checkpoint_every: 30,
                batch_size: 8,
                ..TrainConfig::default()
            },
            axes: vec![SweepAxis {
                name: "tau".into(),
                values: vec![0.5.into(), 1.0.into()],
            }],
            seeds: vec![1, 2],
            cap: 4096,
        }
    }

    #[test]
    fn sweep_cardinality_and_determinism() {
        let spec = two_action_spec();
        let grid = tiny_grid();
        let data = SweepData::Generate { n_records: 64 };
        let a = run_sweep(&grid, &data, &spec, 1).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert!(!a.any_failed());
        let b = run_sweep(&grid, &data, &spec, 2).unwrap();
        assert_eq!(a, b, "parallel and serial sweeps must agree");
    }

    #[test]
    fn sweep_isolates_failing_cells() {
        let spec = two_action_spec();
        let mut grid = tiny_grid();
        // lr values on the axis: one valid, one that fails validation
        grid.axes = vec![SweepAxis {
            name: "lr_policy".into(),
            values: vec![0.01.into(), f64::NAN.into()],
        }];
        // NaN does not survive the JSON round trip as a float; use a string
        // axis error instead: an unknown algorithm name
        grid.axes = vec![SweepAxis {
            name: "algorithm".into(),
            values: vec![
                serde_json::Value::String("dro_v".into()),
                serde_json::Value::String("not_an_algorithm".into()),
            ],
        }];
        let data = SweepData::Generate { n_records: 64 };
        let results = run_sweep(&grid, &data, &spec, 1).unwrap();
        assert_eq!(results.rows.len(), 4);
        assert!(results.any_failed());
        let ok_rows = results.rows.iter().filter(|r| r.error.is_none()).count();
        assert_eq!(ok_rows, 2, "valid cells must still complete");
    }

    #[test]
    fn sweep_cap_is_enforced() {
        let spec = two_action_spec();
        let mut grid = tiny_grid();
        grid.cap = 3; // 4 cells > 3
        let data = SweepData::Generate { n_records: 64 };
        assert!(matches!(
            run_sweep(&grid, &data, &spec, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn results_csv_round_trip_is_exact() {
        let spec = two_action_spec();
        let grid = tiny_grid();
        let data = SweepData::Generate { n_records: 64 };
        let results = run_sweep(&grid, &data, &spec, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results_csv(&results, &path).unwrap();
        let back = read_results_csv(&path).unwrap();
        assert_eq!(results, back);
    }

    #[test]
    fn empty_results_write_header_only() {
        let results = SweepResults {
            axis_names: vec!["tau".into()],
            rows: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_results_csv(&results, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back = read_results_csv(&path).unwrap();
        assert!(back.rows.is_empty());
    }

    #[test]
    fn summary_groups_by_axis_value() {
        let spec = two_action_spec();
        let grid = tiny_grid();
        let data = SweepData::Generate { n_records: 64 };
        let results = run_sweep(&grid, &data, &spec, 1).unwrap();
        let summary = summarize(&results);
        assert_eq!(summary.n_rows, 4);
        assert_eq!(summary.n_failed, 0);
        // two groups for the tau axis, each with two seeds
        assert_eq!(summary.groups.len(), 2);
        assert!(summary.groups.iter().all(|g| g.n == 2));
    }

    #[test]
    fn one_cell_grid_matches_direct_evaluation() {
        let spec = two_action_spec();
        let mut grid = tiny_grid();
        grid.axes = vec![SweepAxis {
            name: "algorithm".into(),
            values: vec![serde_json::Value::String("dro_v".into())],
        }];
        grid.seeds = vec![7];
        let data = SweepData::Generate { n_records: 64 };
        let results = run_sweep(&grid, &data, &spec, 1).unwrap();
        assert_eq!(results.rows.len(), 1);

        // rebuild the same cell by hand
        let ds = generate_synthetic(&spec, 64, mix_seed(7, 0xDA7A)).unwrap();
        let mut cfg = grid.base.clone();
        cfg.algorithm = Algorithm::DroV;
        cfg.seed = 7;
        let out = train_auto(&ds, &spec, &cfg).unwrap();
        let table = crate::bandit::Policy::prob_table(&out.policy);
        let report = evaluate(&table, out.value.as_ref(), &spec).unwrap();
        let row = &results.rows[0];
        assert_eq!(row.kl_to_optimal, Some(report.kl_to_optimal));
        assert_eq!(row.objective, Some(report.regularized_objective));
    }
}
