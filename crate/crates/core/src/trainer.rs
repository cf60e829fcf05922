//! Minibatch training loops.
//!
//! One loop shape serves every algorithm: sample a batch uniformly with
//! replacement from the static dataset using the seeded generator, compute
//! the algorithm's loss and analytic gradients, apply optimizer updates with
//! linear learning-rate warmup, and periodically record exact metrics
//! (full-dataset loss, KL to the optimal policy, value sup-error, the
//! regularized objective) plus a resumable checkpoint.
//!
//! Two runs with the same config and dataset produce bit-identical traces.
//! The policy is always a free logits table initialized at `ln pi_ref` (the
//! supervised-finetuned starting point); the value starts at zero. With
//! `parameter_tying` the value is not a separate parameter vector but is
//! read off the policy logits (per-context mode: the mean of the context's
//! logits row; constant mode: the mean of all logits), so both gradients
//! land on the same table — the shared-parameters ablation.

use serde::{Deserialize, Serialize};

use crate::bandit::{
    expected_kl_tables, BanditSpec, Policy, ProbTable, TabularPolicy, ValueFn, ValueMode,
};
use crate::data::{pairs_from_triplets, PairDataset, TripletDataset};
use crate::error::{AbortSnapshot, Error, Result};
use crate::losses::{
    dro_loss, dro_policy_grad, dro_value_grad, drop_loss_batch, kto_loss, pairwise_loss, GradSpec,
    PairwiseKind,
};
use crate::numerics::l2_norm;
use crate::oracle;
use crate::rng::{mix_seed, DetRng, RngState};

/// Sub-seed stream used when a pairwise algorithm derives pairs internally.
const PAIR_SEED_STREAM: u64 = 0x70_61_69_72; // "pair"

// ── Configuration ───────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DroV,
    DroP,
    Kto,
    PairwiseDpo,
    PairwiseIpo,
    PairwiseSlic,
}

impl Algorithm {
    pub fn uses_value(self) -> bool {
        matches!(self, Algorithm::DroV)
    }

    pub fn needs_pairs(self) -> bool {
        matches!(
            self,
            Algorithm::PairwiseDpo | Algorithm::PairwiseIpo | Algorithm::PairwiseSlic
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    /// First/second-moment adaptive optimizer: moments 0.9 / 0.999,
    /// epsilon 1e-8, with bias correction.
    AdamLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Regularization strength used by the training loss. May differ from
    /// the evaluation problem's tau when swept as a hyperparameter.
    pub tau: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    /// Linear warmup: effective lr at step s < warmup_steps is
    /// base * (s + 1) / warmup_steps.
    pub warmup_steps: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub value_mode: ValueMode,
    /// Rescale the policy gradient by 1/tau (the update the joint algorithm
    /// prescribes). The unrescaled gradient is the plain loss derivative.
    pub rescale: bool,
    /// Cadence (in steps) of history records and checkpoints.
    pub checkpoint_every: usize,
    /// Derive the value from the policy logits instead of separate
    /// parameters (shared-parameters ablation; only meaningful for the
    /// joint policy+value algorithm).
    pub parameter_tying: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::DroV,
            tau: 1.0,
            // tabular-scale default; LLM-scale training would use ~1e-4
            lr_policy: 1e-2,
            lr_value: 1e-2,
            batch_size: 32,
            total_steps: 10_000,
            warmup_steps: 150,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            value_mode: ValueMode::PerContext,
            rescale: true,
            checkpoint_every: 1_000,
            parameter_tying: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!(
                "tau = {} must be positive",
                self.tau
            )));
        }
        for (name, lr) in [("lr_policy", self.lr_policy), ("lr_value", self.lr_value)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} = {lr} must be finite and >= 0"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.algorithm == Algorithm::DroP && self.batch_size < 2 {
            return Err(Error::Config("batch variance needs batch_size >= 2".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

// ── History and checkpoints ─────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    /// Loss of the current parameters over the full dataset (not the batch).
    pub train_loss: f64,
    /// E_rho[KL(pi_theta || pi*)] against the evaluation problem's optimum.
    pub kl_to_optimal: f64,
    /// Sup-norm error of the (materialized) value against V*; absent for
    /// policy-only algorithms.
    pub value_sup_error: Option<f64>,
    /// Exact regularized objective of the current policy.
    pub objective: f64,
    /// L2 norms of the recording step's batch gradients; absent on the final
    /// record, which is written after the last update.
    pub policy_grad_norm: Option<f64>,
    pub value_grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<HistoryRecord>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunHistory {
    pub fn final_record(&self) -> Option<&HistoryRecord> {
        self.records.last()
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "step",
            "train_loss",
            "kl_to_optimal",
            "value_sup_error",
            "objective",
            "policy_grad_norm",
            "value_grad_norm",
        ])
        .expect("in-memory write");
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.train_loss.to_string(),
                r.kl_to_optimal.to_string(),
                fmt_opt(r.value_sup_error),
                r.objective.to_string(),
                fmt_opt(r.policy_grad_norm),
                fmt_opt(r.value_grad_norm),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Resumable training state: step counter, parameters, generator position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub step: usize,
    pub policy: TabularPolicy,
    pub value: Option<ValueFn>,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("checkpoint serialization");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Parse {
            line: 0,
            message: format!("bad checkpoint: {e}"),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: TabularPolicy,
    /// Final value parameters; `None` for policy-only algorithms and for the
    /// tied ablation (where the value is derived from the policy).
    pub value: Option<ValueFn>,
    pub history: RunHistory,
    pub checkpoints: Vec<Checkpoint>,
}

// ── Optimizer ───────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct Optim {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optim {
    fn new(kind: OptimizerKind, len: usize) -> Self {
        Self {
            kind,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::AdamLike => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let bc1 = 1.0 - B1.powi(self.t as i32);
                let bc2 = 1.0 - B2.powi(self.t as i32);
                for i in 0..params.len() {
                    self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
                    self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
                    let mhat = self.m[i] / bc1;
                    let vhat = self.v[i] / bc2;
                    params[i] -= lr * mhat / (vhat.sqrt() + EPS);
                }
            }
        }
    }
}

/// Linear warmup schedule: `base * (s + 1) / warmup` for `s < warmup`, else
/// `base`.
pub fn effective_lr(base: f64, step: usize, warmup_steps: usize) -> f64 {
    if step < warmup_steps {
        base * (step + 1) as f64 / warmup_steps as f64
    } else {
        base
    }
}

// ── Public entry points ─────────────────────────────────────────────────

/// Joint policy + value training on the squared-residual loss.
pub fn train_dro_v(
    dataset: &TripletDataset,
    spec: &BanditSpec,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    let mut cfg = config.clone();
    cfg.algorithm = Algorithm::DroV;
    Engine::new(DataRef::Triplets(dataset), spec, &cfg)?.run()
}

/// Policy-only training on the batch-variance loss.
pub fn train_dro_p(
    dataset: &TripletDataset,
    spec: &BanditSpec,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    let mut cfg = config.clone();
    cfg.algorithm = Algorithm::DroP;
    Engine::new(DataRef::Triplets(dataset), spec, &cfg)?.run()
}

/// Baseline training: simplified KTO on triplets, or a pairwise f-loss on a
/// pair dataset.
pub fn train_baseline(
    data: BaselineData<'_>,
    spec: &BanditSpec,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    match (data, config.algorithm) {
        (BaselineData::Triplets(ds), Algorithm::Kto) => {
            Engine::new(DataRef::Triplets(ds), spec, config)?.run()
        }
        (BaselineData::Pairs(ps), alg) if alg.needs_pairs() => {
            Engine::new(DataRef::Pairs(ps), spec, config)?.run()
        }
        (BaselineData::Triplets(_), alg) if alg.needs_pairs() => Err(Error::Argument(format!(
            "{alg:?} needs a pair dataset; derive one first or use train_auto"
        ))),
        (_, alg) => Err(Error::Argument(format!(
            "train_baseline does not handle {alg:?}"
        ))),
    }
}

/// Dispatch on `config.algorithm`, deriving a pair dataset on the fly for
/// the pairwise baselines (pairing seed is derived from the config seed).
pub fn train_auto(
    dataset: &TripletDataset,
    spec: &BanditSpec,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    match config.algorithm {
        Algorithm::DroV => train_dro_v(dataset, spec, config),
        Algorithm::DroP => train_dro_p(dataset, spec, config),
        Algorithm::Kto => train_baseline(BaselineData::Triplets(dataset), spec, config),
        _ => {
            let pairs = pairs_from_triplets(dataset, mix_seed(config.seed, PAIR_SEED_STREAM))?;
            train_baseline(BaselineData::Pairs(&pairs), spec, config)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum BaselineData<'a> {
    Triplets(&'a TripletDataset),
    Pairs(&'a PairDataset),
}

// ── Engine ──────────────────────────────────────────────────────────────

enum DataRef<'a> {
    Triplets(&'a TripletDataset),
    Pairs(&'a PairDataset),
}

impl DataRef<'_> {
    fn len(&self) -> usize {
        match self {
            DataRef::Triplets(d) => d.len(),
            DataRef::Pairs(p) => p.len(),
        }
    }
}

struct Engine<'a> {
    data: DataRef<'a>,
    eval_spec: &'a BanditSpec,
    train_spec: BanditSpec,
    config: TrainConfig,
    policy: TabularPolicy,
    value: Option<ValueFn>,
    policy_opt: Optim,
    value_opt: Optim,
    rng: DetRng,
    pi_star: ProbTable,
    v_star: ValueFn,
    gradspec: GradSpec,
    // scratch for pairwise batches
    all_pairs: Vec<(usize, usize, usize)>,
}

impl<'a> Engine<'a> {
    fn new(data: DataRef<'a>, spec: &'a BanditSpec, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        if data.len() == 0 {
            return Err(Error::Argument("empty training data".into()));
        }
        if config.algorithm == Algorithm::DroP && data.len() < 2 {
            return Err(Error::Argument(
                "batch-variance training needs >= 2 records".into(),
            ));
        }

        // training data must sit inside the reference support
        match &data {
            DataRef::Triplets(ds) => {
                ds.validate_against(spec)?;
                for (i, t) in ds.records.iter().enumerate() {
                    if spec.pi_ref[t.x][t.y] <= 0.0 {
                        return Err(Error::Support(format!(
                            "dataset record {i} lies outside the reference support"
                        )));
                    }
                }
            }
            DataRef::Pairs(ps) => {
                for (i, p) in ps.records.iter().enumerate() {
                    spec.check_indices(p.context, p.action_w)?;
                    spec.check_indices(p.context, p.action_l)?;
                    if spec.pi_ref[p.context][p.action_w] <= 0.0
                        || spec.pi_ref[p.context][p.action_l] <= 0.0
                    {
                        return Err(Error::Support(format!(
                            "pair record {i} lies outside the reference support"
                        )));
                    }
                }
            }
        }

        let policy = TabularPolicy::from_reference(spec);
        let value = if config.algorithm.uses_value() && !config.parameter_tying {
            Some(ValueFn::zeros(config.value_mode, spec.n_contexts))
        } else {
            None
        };
        let policy_opt = Optim::new(config.optimizer, policy.param_len());
        let value_len = value.as_ref().map_or(0, ValueFn::param_len);
        let value_opt = Optim::new(config.optimizer, value_len);

        let all_pairs = match &data {
            DataRef::Pairs(ps) => ps.tuples(),
            DataRef::Triplets(_) => Vec::new(),
        };

        Ok(Self {
            data,
            eval_spec: spec,
            train_spec: spec.with_tau(config.tau),
            config: config.clone(),
            policy,
            value,
            policy_opt,
            value_opt,
            rng: DetRng::new(config.seed),
            pi_star: oracle::pi_star(spec)?,
            v_star: oracle::v_star(spec)?,
            gradspec: GradSpec {
                rescale_policy_by_inv_tau: config.rescale,
            },
            all_pairs,
        })
    }

    /// Value as seen by the loss: separate parameters, or derived from the
    /// policy logits under tying.
    fn materialize_value(&self) -> Option<ValueFn> {
        if let Some(v) = &self.value {
            return Some(v.clone());
        }
        if !self.config.algorithm.uses_value() {
            return None;
        }
        // tied mode
        let n_actions = self.policy.n_actions() as f64;
        let v = match self.config.value_mode {
            ValueMode::PerContext => {
                let vals: Vec<f64> = (0..self.policy.n_contexts())
                    .map(|x| self.policy.logits_row(x).iter().sum::<f64>() / n_actions)
                    .collect();
                ValueFn::per_context(vals)
            }
            ValueMode::Constant => {
                let all = self.policy.logits();
                ValueFn::constant(all.iter().sum::<f64>() / all.len() as f64)
            }
        };
        Some(v.expect("finite logits imply finite tied value"))
    }

    /// Fold a value-parameter gradient into the policy-logits gradient under
    /// tying (chain rule through the logit means).
    fn scatter_tied_value_grad(&self, value_grad: &[f64], out: &mut [f64]) {
        let n_ctx = self.policy.n_contexts();
        let n_act = self.policy.n_actions();
        match self.config.value_mode {
            ValueMode::PerContext => {
                for x in 0..n_ctx {
                    let g = value_grad[x] / n_act as f64;
                    for a in 0..n_act {
                        out[x * n_act + a] += g;
                    }
                }
            }
            ValueMode::Constant => {
                let g = value_grad[0] / (n_ctx * n_act) as f64;
                for slot in out.iter_mut() {
                    *slot += g;
                }
            }
        }
    }

    fn sample_indices(&mut self) -> Vec<usize> {
        let n = self.data.len();
        (0..self.config.batch_size)
            .map(|_| self.rng.below(n))
            .collect()
    }

    /// Loss and gradients for one sampled batch. Returns
    /// (loss, policy_grad, value_grad_for_untied).
    fn step_gradients(&mut self, indices: &[usize]) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
        match self.config.algorithm {
            Algorithm::DroV => {
                let DataRef::Triplets(ds) = self.data else {
                    unreachable!("joint training runs on triplets")
                };
                let batch = ds.batch(indices);
                let value = self
                    .materialize_value()
                    .expect("joint algorithm has a value");
                let loss = dro_loss(&batch, &self.policy, &value, &self.train_spec)?;
                let mut pg = dro_policy_grad(
                    &batch,
                    &self.policy,
                    &value,
                    &self.train_spec,
                    &self.gradspec,
                )?;
                let vg = dro_value_grad(&batch, &self.policy, &value, &self.train_spec)?;
                if self.config.parameter_tying {
                    self.scatter_tied_value_grad(&vg, &mut pg);
                    Ok((loss, pg, None))
                } else {
                    Ok((loss, pg, Some(vg)))
                }
            }
            Algorithm::DroP => {
                let DataRef::Triplets(ds) = self.data else {
                    unreachable!("variance training runs on triplets")
                };
                let batch = ds.batch(indices);
                let (loss, pg) =
                    drop_loss_batch(&batch, &self.policy, &self.train_spec, &self.gradspec)?;
                Ok((loss, pg, None))
            }
            Algorithm::Kto => {
                let DataRef::Triplets(ds) = self.data else {
                    unreachable!("KTO runs on triplets")
                };
                let batch = ds.batch(indices);
                let (loss, pg) = kto_loss(&batch, &self.policy, &self.train_spec, 1.0)?;
                Ok((loss, pg, None))
            }
            alg => {
                let kind = pairwise_kind(alg);
                let pairs: Vec<(usize, usize, usize)> =
                    indices.iter().map(|&i| self.all_pairs[i]).collect();
                let (loss, pg) = pairwise_loss(
                    &pairs,
                    &self.policy,
                    &self.train_spec,
                    kind,
                    self.train_spec.tau,
                )?;
                Ok((loss, pg, None))
            }
        }
    }

    /// Deterministic loss of the current parameters over the whole dataset.
    fn full_data_loss(&self) -> Result<f64> {
        match self.config.algorithm {
            Algorithm::DroV => {
                let DataRef::Triplets(ds) = self.data else {
                    unreachable!()
                };
                let value = self
                    .materialize_value()
                    .expect("joint algorithm has a value");
                dro_loss(&ds.full_batch(), &self.policy, &value, &self.train_spec)
            }
            Algorithm::DroP => {
                let DataRef::Triplets(ds) = self.data else {
                    unreachable!()
                };
                drop_loss_batch(
                    &ds.full_batch(),
                    &self.policy,
                    &self.train_spec,
                    &self.gradspec,
                )
                .map(|(l, _)| l)
            }
            Algorithm::Kto => {
                let DataRef::Triplets(ds) = self.data else {
                    unreachable!()
                };
                kto_loss(&ds.full_batch(), &self.policy, &self.train_spec, 1.0).map(|(l, _)| l)
            }
            alg => pairwise_loss(
                &self.all_pairs,
                &self.policy,
                &self.train_spec,
                pairwise_kind(alg),
                self.train_spec.tau,
            )
            .map(|(l, _)| l),
        }
    }

    fn metrics(
        &self,
        step: usize,
        grad_norms: Option<(f64, Option<f64>)>,
    ) -> Result<HistoryRecord> {
        let table = self.policy.prob_table();
        let kl_to_optimal = expected_kl_tables(&self.eval_spec.rho, &table, &self.pi_star)?;
        let objective = oracle::regularized_objective(self.eval_spec, &table)?;
        let value_sup_error = self
            .materialize_value()
            .map(|v| v.sup_distance(&self.v_star, self.eval_spec.n_contexts));
        Ok(HistoryRecord {
            step,
            train_loss: self.full_data_loss()?,
            kl_to_optimal,
            value_sup_error,
            objective,
            policy_grad_norm: grad_norms.map(|(p, _)| p),
            value_grad_norm: grad_norms.and_then(|(_, v)| v),
        })
    }

    fn checkpoint(&self, step: usize, rng_state: RngState) -> Checkpoint {
        Checkpoint {
            step,
            policy: self.policy.clone(),
            value: self.value.clone(),
            rng: rng_state,
        }
    }

    fn abort(&self, step: usize, what: &str) -> Error {
        Error::NonFinite {
            step,
            what: what.to_string(),
            snapshot: Box::new(AbortSnapshot {
                policy_params: self.policy.params().to_vec(),
                value_params: self.value.as_ref().map(|v| v.params().to_vec()),
            }),
        }
    }

    fn run(mut self) -> Result<TrainOutput> {
        let mut history = RunHistory::default();
        let mut checkpoints = Vec::new();

        for step in 0..self.config.total_steps {
            let record_now = step % self.config.checkpoint_every == 0;
            let rng_state = self.rng.state();
            let indices = self.sample_indices();
            let (loss, policy_grad, value_grad) = self.step_gradients(&indices)?;

            if !loss.is_finite() {
                return Err(self.abort(step, "loss"));
            }
            if policy_grad.iter().any(|g| !g.is_finite()) {
                return Err(self.abort(step, "policy gradient"));
            }
            if let Some(vg) = &value_grad {
                if vg.iter().any(|g| !g.is_finite()) {
                    return Err(self.abort(step, "value gradient"));
                }
            }

            if record_now {
                let norms = (
                    l2_norm(&policy_grad),
                    value_grad.as_ref().map(|vg| l2_norm(vg)),
                );
                history.records.push(self.metrics(step, Some(norms))?);
                checkpoints.push(self.checkpoint(step, rng_state));
            }

            let lr_p = effective_lr(self.config.lr_policy, step, self.config.warmup_steps);
            self.policy_opt
                .step(self.policy.params_mut(), &policy_grad, lr_p);
            if let (Some(value), Some(vg)) = (self.value.as_mut(), value_grad) {
                let lr_v = effective_lr(self.config.lr_value, step, self.config.warmup_steps);
                self.value_opt.step(value.params_mut(), &vg, lr_v);
            }
            if self.policy.params().iter().any(|p| !p.is_finite()) {
                return Err(self.abort(step, "policy parameters"));
            }
        }

        let final_step = self.config.total_steps;
        history.records.push(self.metrics(final_step, None)?);
        checkpoints.push(self.checkpoint(final_step, self.rng.state()));

        Ok(TrainOutput {
            policy: self.policy,
            value: self.value,
            history,
            checkpoints,
        })
    }
}

fn pairwise_kind(alg: Algorithm) -> PairwiseKind {
    match alg {
        Algorithm::PairwiseDpo => PairwiseKind::Dpo,
        Algorithm::PairwiseIpo => PairwiseKind::Ipo,
        Algorithm::PairwiseSlic => PairwiseKind::Slic,
        _ => unreachable!("not a pairwise algorithm"),
    }
}
