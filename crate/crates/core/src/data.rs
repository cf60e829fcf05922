//! Dataset synthesis and persistence.
//!
//! A [`TripletDataset`] is the single-trajectory log the trainers consume:
//! records (context, action, reward) drawn context-first from rho and then
//! from the behavior policy. Rewards are the table values, optionally with
//! seeded Gaussian observation noise (off by default; the theory treats the
//! reward as deterministic given the pair).
//!
//! On disk a dataset is UTF-8 line-delimited JSON: a header line carrying
//! the schema version and optional provenance, then one `{"x":..,"y":..,"r":..}`
//! object per record. The round trip is exact for f64-representable rewards;
//! non-finite rewards are rejected at both ends. Writes go through a
//! temp-file-then-rename so readers never observe a torn file.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::BanditSpec;
use crate::error::{Error, Result};
use crate::losses::Batch;
use crate::numerics::{mean, population_variance};
use crate::rng::DetRng;

/// Schema tag expected on the first line of a dataset file.
pub const DATASET_SCHEMA: &str = "dro.triplets.v1";

// ── Types ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub x: usize,
    pub y: usize,
    pub r: f64,
}

/// Affine normalization parameters (for inverting `r -> (r - mean)/std`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizeParams {
    pub mean: f64,
    pub std: f64,
}

/// Where a dataset came from; carried in the file header.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizeParams>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripletDataset {
    pub records: Vec<TripletRecord>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub context: usize,
    pub action_w: usize,
    pub action_l: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub records: Vec<PairRecord>,
    pub labeling_rule: String,
}

impl TripletDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|t| t.r).collect()
    }

    /// Check every record indexes into the spec.
    pub fn validate_against(&self, spec: &BanditSpec) -> Result<()> {
        for (i, t) in self.records.iter().enumerate() {
            spec.check_indices(t.x, t.y)
                .map_err(|_| Error::Argument(format!("record {i} indexes outside the spec")))?;
            if !t.r.is_finite() {
                return Err(Error::Argument(format!("record {i} has non-finite reward")));
            }
        }
        Ok(())
    }

    /// Materialize a minibatch from record indices.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut contexts = Vec::with_capacity(indices.len());
        let mut actions = Vec::with_capacity(indices.len());
        let mut rewards = Vec::with_capacity(indices.len());
        for &i in indices {
            let t = self.records[i];
            contexts.push(t.x);
            actions.push(t.y);
            rewards.push(t.r);
        }
        Batch::new(contexts, actions, rewards).expect("parallel vectors")
    }

    /// The whole dataset as one batch.
    pub fn full_batch(&self) -> Batch {
        Batch::new(
            self.records.iter().map(|t| t.x).collect(),
            self.records.iter().map(|t| t.y).collect(),
            self.records.iter().map(|t| t.r).collect(),
        )
        .expect("parallel vectors")
    }
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tuples(&self) -> Vec<(usize, usize, usize)> {
        self.records
            .iter()
            .map(|p| (p.context, p.action_w, p.action_l))
            .collect()
    }
}

// ── Generation ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default)]
pub struct GenOptions {
    /// Standard deviation of zero-mean Gaussian observation noise added to
    /// rewards. `None` keeps rewards exactly equal to the table values.
    pub noise_sigma: Option<f64>,
}

/// Sample `n_records` triplets: `x ~ rho`, `y ~ mu(.|x)`, `r = reward[x][y]`.
/// Deterministic under the seed.
pub fn generate_synthetic(
    spec: &BanditSpec,
    n_records: usize,
    seed: u64,
) -> Result<TripletDataset> {
    generate_with_options(spec, n_records, seed, &GenOptions::default())
}

pub fn generate_with_options(
    spec: &BanditSpec,
    n_records: usize,
    seed: u64,
    opts: &GenOptions,
) -> Result<TripletDataset> {
    if n_records == 0 {
        return Err(Error::Argument("n_records must be positive".into()));
    }
    if let Some(s) = opts.noise_sigma {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Argument(format!(
                "noise sigma = {s} must be nonnegative"
            )));
        }
    }
    spec.validate()?;
    let mut rng = DetRng::new(seed);
    let mut records = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        let x = rng.categorical(&spec.rho);
        let y = rng.categorical(&spec.mu[x]);
        let mut r = spec.reward[x][y];
        if let Some(sigma) = opts.noise_sigma {
            if sigma > 0.0 {
                r += sigma * rng.normal();
            }
        }
        records.push(TripletRecord { x, y, r });
    }
    Ok(TripletDataset {
        records,
        provenance: Some(Provenance {
            spec: None,
            seed: Some(seed),
            noise_sigma: opts.noise_sigma,
            normalization: None,
        }),
    })
}

// ── Normalization ───────────────────────────────────────────────────────

/// Shift and scale rewards to mean 0 and variance 1 across the dataset,
/// using the population standard deviation. Returns the normalized dataset
/// together with the affine parameters (mean, std) so the map can be
/// inverted. Constant rewards are a degenerate-data error.
pub fn normalize_rewards(dataset: &TripletDataset) -> Result<(TripletDataset, f64, f64)> {
    if dataset.len() < 2 {
        return Err(Error::DegenerateData(
            "normalization needs at least 2 records".into(),
        ));
    }
    let rewards = dataset.rewards();
    let m = mean(&rewards);
    let var = population_variance(&rewards);
    let std = var.sqrt();
    if !(std.is_finite() && std > 1e-12 * m.abs().max(1.0)) {
        return Err(Error::DegenerateData(format!(
            "reward variance {var} too small to normalize"
        )));
    }
    let records = dataset
        .records
        .iter()
        .map(|t| TripletRecord {
            x: t.x,
            y: t.y,
            r: (t.r - m) / std,
        })
        .collect();
    let mut provenance = dataset.provenance.clone().unwrap_or_default();
    provenance.normalization = Some(NormalizeParams { mean: m, std });
    Ok((
        TripletDataset {
            records,
            provenance: Some(provenance),
        },
        m,
        std,
    ))
}

// ── Pair derivation ─────────────────────────────────────────────────────

/// Derive a pairwise preference dataset: within each context holding at
/// least two records, shuffle and pair records without replacement, label
/// the higher-reward action the winner, and drop exact ties.
pub fn pairs_from_triplets(dataset: &TripletDataset, seed: u64) -> Result<PairDataset> {
    let mut by_context: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, t) in dataset.records.iter().enumerate() {
        by_context.entry(t.x).or_default().push(i);
    }
    if !by_context.values().any(|v| v.len() >= 2) {
        return Err(Error::DegenerateData(
            "no context holds two or more records".into(),
        ));
    }
    let mut rng = DetRng::new(seed);
    let mut records = Vec::new();
    for (&context, indices) in &by_context {
        if indices.len() < 2 {
            continue;
        }
        let mut shuffled = indices.clone();
        rng.shuffle(&mut shuffled);
        for pair in shuffled.chunks_exact(2) {
            let (a, b) = (dataset.records[pair[0]], dataset.records[pair[1]]);
            if a.r == b.r {
                continue; // tie
            }
            let (w, l) = if a.r > b.r { (a, b) } else { (b, a) };
            records.push(PairRecord {
                context,
                action_w: w.y,
                action_l: l.y,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::DegenerateData(
            "every candidate pair was a reward tie".into(),
        ));
    }
    Ok(PairDataset {
        records,
        labeling_rule: format!(
            "within-context random pairing without replacement (seed {seed}); \
             winner = strictly higher reward; ties dropped"
        ),
    })
}

// ── Persistence ─────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

/// Write a dataset as header-plus-JSONL. The write is atomic: content goes
/// to a sibling temp file which is renamed over the target.
pub fn save_dataset(dataset: &TripletDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for (i, t) in dataset.records.iter().enumerate() {
        if !t.r.is_finite() {
            return Err(Error::Argument(format!(
                "record {i} has non-finite reward; refusing to serialize"
            )));
        }
    }
    let tmp_path = path.with_extension("tmp-write");
    {
        let file = std::fs::File::create(&tmp_path).map_err(|e| Error::io(&tmp_path, e))?;
        let mut w = BufWriter::new(file);
        let header = DatasetHeader {
            schema: DATASET_SCHEMA.to_string(),
            provenance: dataset.provenance.clone(),
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| Error::Numeric(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(&tmp_path, e))?;
        for t in &dataset.records {
            serde_json::to_writer(&mut w, t).map_err(|e| Error::Numeric(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| Error::io(&tmp_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&tmp_path, e))?;
    }
    std::fs::rename(&tmp_path, path).map_err(|e| Error::io(path, e))
}

/// Load a dataset, enforcing the schema header and rejecting non-finite
/// rewards. Parse failures name the offending 1-based line.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<TripletDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file; expected a schema header".into(),
    })?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: DatasetHeader = serde_json::from_str(&first).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.schema != DATASET_SCHEMA {
        return Err(Error::SchemaVersion {
            expected: DATASET_SCHEMA.to_string(),
            found: header.schema,
        });
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TripletRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !record.r.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: "non-finite reward".into(),
            });
        }
        records.push(record);
    }
    Ok(TripletDataset {
        records,
        provenance: header.provenance,
    })
}
