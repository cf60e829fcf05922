//! Finite contextual-bandit problem definition and the probabilistic
//! primitives built on top of it: softmax policies (free-table and
//! linear-in-features), per-context / constant value functions, stabilized
//! log-probabilities, log-ratios against the reference policy, and exact KL
//! divergences.
//!
//! Everything is immutable after construction except policy logits / weights
//! and value parameters, which are mutated only by a trainer (single-writer
//! contract); concurrent reads are safe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, log_softmax, softmax};
use crate::rng::DetRng;

/// Row-stochastic probability table, one row per context.
pub type ProbTable = Vec<Vec<f64>>;

/// Tolerance for "sums to 1" checks on probability vectors.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Logit floor used when converting probability tables (which may contain
/// exact zeros) into logits. exp(-750) underflows to exactly 0.0 in f64, so
/// the floored entries reproduce zero probability after softmax.
pub const LOG_FLOOR: f64 = -750.0;

// ── Problem specification ───────────────────────────────────────────────

/// The full finite problem: context distribution, behavior policy, reference
/// policy, reward table and regularization strength.
///
/// Serializes to a JSON document with fields
/// `n_contexts, n_actions, rho, mu, pi_ref, reward, tau` (row-major nested
/// arrays); the round trip is exact for any f64-representable values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSpec {
    pub n_contexts: usize,
    pub n_actions: usize,
    /// Probability vector over contexts.
    pub rho: Vec<f64>,
    /// Behavior policy, row-stochastic `[n_contexts x n_actions]`.
    pub mu: Vec<Vec<f64>>,
    /// Reference policy, row-stochastic `[n_contexts x n_actions]`.
    pub pi_ref: Vec<Vec<f64>>,
    /// Scalar reward per (context, action).
    pub reward: Vec<Vec<f64>>,
    /// KL regularization strength, > 0.
    pub tau: f64,
}

fn check_prob_vec(name: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::InvalidSpec(format!(
            "{name} has length {}, expected {len}",
            v.len()
        )));
    }
    for (i, &p) in v.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "{name}[{i}] = {p} is not a probability"
            )));
        }
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidSpec(format!(
            "{name} sums to {sum} (must be 1 within {PROB_SUM_TOL})"
        )));
    }
    Ok(())
}

impl BanditSpec {
    pub fn new(
        rho: Vec<f64>,
        mu: Vec<Vec<f64>>,
        pi_ref: Vec<Vec<f64>>,
        reward: Vec<Vec<f64>>,
        tau: f64,
    ) -> Result<Self> {
        let n_contexts = rho.len();
        let n_actions = mu.first().map_or(0, |r| r.len());
        let spec = Self {
            n_contexts,
            n_actions,
            rho,
            mu,
            pi_ref,
            reward,
            tau,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_contexts == 0 || self.n_actions == 0 {
            return Err(Error::InvalidSpec(
                "n_contexts and n_actions must be positive".into(),
            ));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "tau = {} must be positive",
                self.tau
            )));
        }
        check_prob_vec("rho", &self.rho, self.n_contexts)?;
        for (name, table) in [("mu", &self.mu), ("pi_ref", &self.pi_ref)] {
            if table.len() != self.n_contexts {
                return Err(Error::InvalidSpec(format!(
                    "{name} has {} rows, expected {}",
                    table.len(),
                    self.n_contexts
                )));
            }
            for (x, row) in table.iter().enumerate() {
                check_prob_vec(&format!("{name}[{x}]"), row, self.n_actions)?;
            }
        }
        if self.reward.len() != self.n_contexts {
            return Err(Error::InvalidSpec(format!(
                "reward has {} rows, expected {}",
                self.reward.len(),
                self.n_contexts
            )));
        }
        for (x, row) in self.reward.iter().enumerate() {
            if row.len() != self.n_actions {
                return Err(Error::InvalidSpec(format!(
                    "reward[{x}] has length {}, expected {}",
                    row.len(),
                    self.n_actions
                )));
            }
            if let Some(r) = row.iter().find(|r| !r.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "reward[{x}] contains non-finite value {r}"
                )));
            }
        }
        Ok(())
    }

    /// True iff for every context with positive mass under rho, the supports
    /// of the behavior and reference policies coincide. Computed on demand,
    /// never asserted: the uniqueness guarantee needs it and tests query it.
    pub fn full_support(&self) -> bool {
        (0..self.n_contexts).all(|x| {
            self.rho[x] == 0.0
                || self.mu[x]
                    .iter()
                    .zip(&self.pi_ref[x])
                    .all(|(&m, &p)| (m > 0.0) == (p > 0.0))
        })
    }

    pub fn mu_row(&self, x: usize) -> &[f64] {
        &self.mu[x]
    }

    pub fn pi_ref_row(&self, x: usize) -> &[f64] {
        &self.pi_ref[x]
    }

    pub fn reward_row(&self, x: usize) -> &[f64] {
        &self.reward[x]
    }

    /// Same problem with a different regularization strength (used when the
    /// training-time tau is swept independently of the evaluation problem).
    pub fn with_tau(&self, tau: f64) -> Self {
        let mut spec = self.clone();
        spec.tau = tau;
        spec
    }

    pub fn check_indices(&self, x: usize, y: usize) -> Result<()> {
        if x >= self.n_contexts || y >= self.n_actions {
            return Err(Error::Argument(format!(
                "index ({x}, {y}) out of range for {}x{} problem",
                self.n_contexts, self.n_actions
            )));
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: BanditSpec = serde_json::from_str(s)
            .map_err(|e| Error::InvalidSpec(format!("bad spec JSON: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_pretty()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Random full-support problem. Context and policy rows are softmax of
    /// scaled Gaussian logits mixed 50/50 with the uniform distribution, so
    /// every probability is at least `1 / (2 * n)`; rewards are standard
    /// normal clipped to [-2, 2]. Bounded ratios keep downstream solvers and
    /// log-ratio math well conditioned for tau as small as 0.1.
    pub fn random(rng: &mut DetRng, n_contexts: usize, n_actions: usize, tau: f64) -> Self {
        let mixed_row = |rng: &mut DetRng, n: usize| -> Vec<f64> {
            let logits: Vec<f64> = (0..n).map(|_| 0.5 * rng.normal()).collect();
            let sm = softmax(&logits);
            sm.iter().map(|p| 0.5 * p + 0.5 / n as f64).collect()
        };
        let rho = mixed_row(rng, n_contexts);
        let mu: Vec<Vec<f64>> = (0..n_contexts).map(|_| mixed_row(rng, n_actions)).collect();
        let pi_ref: Vec<Vec<f64>> = (0..n_contexts).map(|_| mixed_row(rng, n_actions)).collect();
        let reward: Vec<Vec<f64>> = (0..n_contexts)
            .map(|_| {
                (0..n_actions)
                    .map(|_| rng.normal().clamp(-2.0, 2.0))
                    .collect()
            })
            .collect();
        Self {
            n_contexts,
            n_actions,
            rho,
            mu,
            pi_ref,
            reward,
            tau,
        }
    }
}

/// The fixed 8-context, 5-action full-support problem used by the
/// integration and acceptance suites and shipped as `specs/reference_8x5.json`.
pub fn reference_spec() -> BanditSpec {
    let mut rng = DetRng::new(0x8C5A_2024);
    BanditSpec::random(&mut rng, 8, 5, 1.0)
}

// ── Policies ────────────────────────────────────────────────────────────

/// Common surface for softmax policies: logits per (context, action) plus a
/// flat parameter view and the gradient of log-probabilities with respect to
/// those parameters.
pub trait Policy {
    fn n_contexts(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn logits_row(&self, x: usize) -> Vec<f64>;

    fn param_len(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// `out += scale * d log pi(y|x) / d params`.
    fn accumulate_grad_log_prob(&self, x: usize, y: usize, scale: f64, out: &mut [f64]);

    fn log_probs_row(&self, x: usize) -> Vec<f64> {
        log_softmax(&self.logits_row(x))
    }

    fn probs_row(&self, x: usize) -> Vec<f64> {
        softmax(&self.logits_row(x))
    }

    fn prob_table(&self) -> ProbTable {
        (0..self.n_contexts()).map(|x| self.probs_row(x)).collect()
    }
}

/// Free-table softmax policy: one unconstrained logit per (context, action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_contexts: usize,
    n_actions: usize,
    /// Row-major `[n_contexts * n_actions]`.
    logits: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_contexts = rows.len();
        let n_actions = rows.first().map_or(0, |r| r.len());
        if n_contexts == 0 || n_actions == 0 {
            return Err(Error::Argument(
                "policy needs at least one context and action".into(),
            ));
        }
        let mut logits = Vec::with_capacity(n_contexts * n_actions);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Argument(format!(
                    "logits row {x} has inconsistent length"
                )));
            }
            for &z in row {
                if !z.is_finite() {
                    return Err(Error::Argument(format!("non-finite logit in row {x}")));
                }
                logits.push(z);
            }
        }
        Ok(Self {
            n_contexts,
            n_actions,
            logits,
        })
    }

    pub fn from_flat(n_contexts: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != n_contexts * n_actions {
            return Err(Error::Argument(format!(
                "expected {} logits, got {}",
                n_contexts * n_actions,
                logits.len()
            )));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Argument("non-finite logit".into()));
        }
        Ok(Self {
            n_contexts,
            n_actions,
            logits,
        })
    }

    pub fn uniform(n_contexts: usize, n_actions: usize) -> Self {
        Self {
            n_contexts,
            n_actions,
            logits: vec![0.0; n_contexts * n_actions],
        }
    }

    /// Logits set to `ln p` for a probability table; exact zeros map to
    /// [`LOG_FLOOR`] so softmax reproduces them as exact zeros.
    pub fn from_prob_table(table: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = table
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&p| if p > 0.0 { p.ln() } else { LOG_FLOOR })
                    .collect()
            })
            .collect();
        Self::new(rows)
    }

    /// Initialization at the reference policy (the supervised-finetuned
    /// starting point in the training loops).
    pub fn from_reference(spec: &BanditSpec) -> Self {
        Self::from_prob_table(&spec.pi_ref).expect("valid spec rows")
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

impl Policy for TabularPolicy {
    fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn logits_row(&self, x: usize) -> Vec<f64> {
        self.logits[x * self.n_actions..(x + 1) * self.n_actions].to_vec()
    }

    fn param_len(&self) -> usize {
        self.logits.len()
    }

    fn params(&self) -> &[f64] {
        &self.logits
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn accumulate_grad_log_prob(&self, x: usize, y: usize, scale: f64, out: &mut [f64]) {
        // d log pi(y|x) / d logits(x, a) = onehot(y)[a] - pi(a|x); other rows zero.
        let probs = self.probs_row(x);
        let base = x * self.n_actions;
        for (a, &p) in probs.iter().enumerate() {
            out[base + a] -= scale * p;
        }
        out[base + y] += scale;
    }
}

/// Softmax policy with logits linear in a fixed feature map:
/// `logit(x, y) = dot(weights, features[x, y])`. The feature tensor is
/// immutable after construction; only the weights are parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmaxPolicy {
    n_contexts: usize,
    n_actions: usize,
    dim: usize,
    /// Row-major `[n_contexts * n_actions * dim]`.
    features: Vec<f64>,
    weights: Vec<f64>,
}

impl LinearSoftmaxPolicy {
    pub fn new(features: Vec<Vec<Vec<f64>>>, weights: Vec<f64>) -> Result<Self> {
        let n_contexts = features.len();
        let n_actions = features.first().map_or(0, |r| r.len());
        let dim = weights.len();
        if n_contexts == 0 || n_actions == 0 || dim == 0 {
            return Err(Error::Argument("empty feature tensor or weights".into()));
        }
        let mut flat = Vec::with_capacity(n_contexts * n_actions * dim);
        for (x, ctx) in features.iter().enumerate() {
            if ctx.len() != n_actions {
                return Err(Error::Argument(format!(
                    "features[{x}] has inconsistent action count"
                )));
            }
            for (y, feat) in ctx.iter().enumerate() {
                if feat.len() != dim {
                    return Err(Error::Argument(format!(
                        "features[{x}][{y}] has dimension {}, expected {dim}",
                        feat.len()
                    )));
                }
                if feat.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Argument(format!("non-finite feature at ({x}, {y})")));
                }
                flat.extend_from_slice(feat);
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Argument("non-finite weight".into()));
        }
        Ok(Self {
            n_contexts,
            n_actions,
            dim,
            features: flat,
            weights,
        })
    }

    /// One-hot feature map over (context, action) pairs with
    /// `dim = n_contexts * n_actions`; equivalent to a tabular policy whose
    /// logits equal the weights.
    pub fn one_hot(n_contexts: usize, n_actions: usize, weights: Vec<f64>) -> Result<Self> {
        let dim = n_contexts * n_actions;
        if weights.len() != dim {
            return Err(Error::Argument(format!(
                "one-hot parameterization needs {dim} weights, got {}",
                weights.len()
            )));
        }
        let mut features = vec![0.0; dim * dim];
        for i in 0..dim {
            features[i * dim + i] = 1.0;
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Argument("non-finite weight".into()));
        }
        Ok(Self {
            n_contexts,
            n_actions,
            dim,
            features,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature(&self, x: usize, y: usize) -> &[f64] {
        let base = (x * self.n_actions + y) * self.dim;
        &self.features[base..base + self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Policy for LinearSoftmaxPolicy {
    fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn logits_row(&self, x: usize) -> Vec<f64> {
        (0..self.n_actions)
            .map(|y| dot(&self.weights, self.feature(x, y)))
            .collect()
    }

    fn param_len(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &[f64] {
        &self.weights
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn accumulate_grad_log_prob(&self, x: usize, y: usize, scale: f64, out: &mut [f64]) {
        // d log pi(y|x) / d w = phi(x, y) - E_{a ~ pi(.|x)}[phi(x, a)]
        let probs = self.probs_row(x);
        let fy = self.feature(x, y);
        for k in 0..self.dim {
            out[k] += scale * fy[k];
        }
        for (a, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let fa = self.feature(x, a);
            for k in 0..self.dim {
                out[k] -= scale * p * fa[k];
            }
        }
    }
}

// ── Value functions ─────────────────────────────────────────────────────

/// Value parameterization: one value per context, or a single scalar shared
/// by every context (the state-independent baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    PerContext,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFn {
    mode: ValueMode,
    /// `n_contexts` entries in per-context mode, exactly one in constant mode.
    values: Vec<f64>,
}

impl ValueFn {
    pub fn per_context(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument(
                "per-context value function needs at least one entry".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite value".into()));
        }
        Ok(Self {
            mode: ValueMode::PerContext,
            values,
        })
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::Argument("non-finite value".into()));
        }
        Ok(Self {
            mode: ValueMode::Constant,
            values: vec![c],
        })
    }

    pub fn zeros(mode: ValueMode, n_contexts: usize) -> Self {
        match mode {
            ValueMode::PerContext => Self {
                mode,
                values: vec![0.0; n_contexts],
            },
            ValueMode::Constant => Self {
                mode,
                values: vec![0.0],
            },
        }
    }

    pub fn mode(&self) -> ValueMode {
        self.mode
    }

    /// Evaluate at a context; independent of `x` in constant mode.
    pub fn value(&self, x: usize) -> f64 {
        match self.mode {
            ValueMode::PerContext => self.values[x],
            ValueMode::Constant => self.values[0],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn param_len(&self) -> usize {
        self.values.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.values
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `out += scale * d V(x) / d params`.
    pub fn accumulate_grad(&self, x: usize, scale: f64, out: &mut [f64]) {
        match self.mode {
            ValueMode::PerContext => out[x] += scale,
            ValueMode::Constant => out[0] += scale,
        }
    }

    /// Sup-norm distance to another value function over the given context
    /// count (constant mode broadcasts).
    pub fn sup_distance(&self, other: &ValueFn, n_contexts: usize) -> f64 {
        (0..n_contexts)
            .map(|x| (self.value(x) - other.value(x)).abs())
            .fold(0.0, f64::max)
    }
}

// ── Probabilistic primitives ────────────────────────────────────────────

/// log pi(y|x) under a softmax policy, computed via max-subtracted
/// log-softmax; always <= 0 up to rounding.
pub fn log_prob<P: Policy + ?Sized>(policy: &P, x: usize, y: usize) -> Result<f64> {
    if x >= policy.n_contexts() || y >= policy.n_actions() {
        return Err(Error::Argument(format!(
            "index ({x}, {y}) out of range for {}x{} policy",
            policy.n_contexts(),
            policy.n_actions()
        )));
    }
    Ok(policy.log_probs_row(x)[y])
}

/// log(pi(y|x) / pi_ref(y|x)). A data point outside the reference support is
/// a support error, not a numeric infinity.
pub fn log_ratio<P: Policy + ?Sized>(
    policy: &P,
    spec: &BanditSpec,
    x: usize,
    y: usize,
) -> Result<f64> {
    spec.check_indices(x, y)?;
    let lp = log_prob(policy, x, y)?;
    let pref = spec.pi_ref[x][y];
    if pref <= 0.0 {
        return Err(Error::Support(format!(
            "pi_ref({y}|{x}) = 0: point lies outside the reference support"
        )));
    }
    Ok(lp - pref.ln())
}

/// Exact KL(p || q) between two finite distributions given as rows.
/// Terms with p = 0 contribute exactly 0; p > 0 where q = 0 is a support
/// error. The result is clamped to be >= 0 only by the math, not by code.
pub fn kl_rows(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Argument(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::Support(format!(
                "supp(p) not contained in supp(q): p[{i}] = {pi} but q[{i}] = 0"
            )));
        }
        sum += pi * (pi / qi).ln();
    }
    Ok(sum)
}

/// KL(pi_p(.|x) || pi_q(.|x)) between two policies at one context.
pub fn kl<P: Policy + ?Sized, Q: Policy + ?Sized>(p: &P, q: &Q, x: usize) -> Result<f64> {
    if x >= p.n_contexts() || x >= q.n_contexts() {
        return Err(Error::Argument(format!("context {x} out of range")));
    }
    kl_rows(&p.probs_row(x), &q.probs_row(x))
}

/// KL(pi(.|x) || pi_ref(.|x)) against the spec's reference policy.
pub fn kl_vs_ref<P: Policy + ?Sized>(policy: &P, spec: &BanditSpec, x: usize) -> Result<f64> {
    if x >= spec.n_contexts {
        return Err(Error::Argument(format!("context {x} out of range")));
    }
    kl_rows(&policy.probs_row(x), &spec.pi_ref[x])
}

/// E_rho[KL(p(.|x) || q(.|x))] between two probability tables.
pub fn expected_kl_tables(rho: &[f64], p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &w) in rho.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        total += w * kl_rows(&p[x], &q[x])?;
    }
    Ok(total)
}

/// Minimal worked instance: one context, two actions, uniform behavior and
/// reference policies, rewards [1, 0], tau = 1. Its optimum is
/// `pi* = [e/(1+e), 1/(1+e)]` with soft value `ln((e+1)/2)`; shipped as
/// `specs/two_action.json`.
pub fn two_action_spec() -> BanditSpec {
    BanditSpec::new(
        vec![1.0],
        vec![vec![0.5, 0.5]],
        vec![vec![0.5, 0.5]],
        vec![vec![1.0, 0.0]],
        1.0,
    )
    .expect("valid")
}
