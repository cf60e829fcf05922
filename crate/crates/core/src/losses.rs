//! Training losses and their analytic gradients.
//!
//! The central object is the joint squared-residual loss over a policy and a
//! value function,
//!
//! ```text
//!   L(pi, V) = 1/(2B) * sum_i ( r_i - V(x_i) - tau * log(pi(y_i|x_i)/pi_ref(y_i|x_i)) )^2
//! ```
//!
//! together with its exact population form (expectation under rho and the
//! behavior policy), the policy-only variance losses (exact per-context and
//! batch-approximate), a simplified KTO baseline and the generic pairwise
//! f-losses (DPO / IPO / SLiC). A central finite-difference gradient oracle
//! lives here as well; every analytic gradient is tested against it.
//!
//! Batches are averaged (divide by B) rather than summed so learning rates
//! transfer across batch sizes.

use serde::{Deserialize, Serialize};

use crate::bandit::{BanditSpec, Policy, ValueFn};
use crate::error::{Error, Result};
use crate::numerics::mean;

// ── Batch ───────────────────────────────────────────────────────────────

/// A minibatch of single-trajectory records (context, action, reward).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub contexts: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Batch {
    pub fn new(contexts: Vec<usize>, actions: Vec<usize>, rewards: Vec<f64>) -> Result<Self> {
        if contexts.len() != actions.len() || contexts.len() != rewards.len() {
            return Err(Error::Argument(format!(
                "batch field lengths differ: {} contexts, {} actions, {} rewards",
                contexts.len(),
                actions.len(),
                rewards.len()
            )));
        }
        Ok(Self {
            contexts,
            actions,
            rewards,
        })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn validate_against(&self, spec: &BanditSpec) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        for i in 0..self.len() {
            spec.check_indices(self.contexts[i], self.actions[i])?;
            if !self.rewards[i].is_finite() {
                return Err(Error::Argument(format!(
                    "non-finite reward at batch index {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Options for the policy-gradient computation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GradSpec {
    /// Multiply the policy gradient by 1/tau. This reproduces the rescaled
    /// update used by the joint training loop; the unrescaled gradient is the
    /// true derivative of the loss and is what finite differences check.
    pub rescale_policy_by_inv_tau: bool,
}

impl Default for GradSpec {
    fn default() -> Self {
        Self {
            rescale_policy_by_inv_tau: true,
        }
    }
}

// ── Shared helpers ──────────────────────────────────────────────────────

/// log(pi/pi_ref) for every batch record, with support checking.
fn batch_log_ratios<P: Policy + ?Sized>(
    batch: &Batch,
    policy: &P,
    spec: &BanditSpec,
) -> Result<Vec<f64>> {
    batch.validate_against(spec)?;
    let mut out = Vec::with_capacity(batch.len());
    // Cache per-context log-prob rows; batches usually revisit contexts.
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; spec.n_contexts];
    for i in 0..batch.len() {
        let (x, y) = (batch.contexts[i], batch.actions[i]);
        let pref = spec.pi_ref[x][y];
        if pref <= 0.0 {
            return Err(Error::Support(format!(
                "batch record {i} has pi_ref({y}|{x}) = 0"
            )));
        }
        let row = rows[x].get_or_insert_with(|| policy.log_probs_row(x));
        out.push(row[y] - pref.ln());
    }
    Ok(out)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ── Joint squared-residual loss ─────────────────────────────────────────

/// Batch-mean squared residual `1/(2B) * sum_i t_i^2` with
/// `t_i = r_i - V(x_i) - tau * log_ratio_i`. Nonnegative; exactly zero at
/// the optimal (policy, value) pair on any batch inside the reference
/// support.
pub fn dro_loss<P: Policy + ?Sized>(
    batch: &Batch,
    policy: &P,
    value: &ValueFn,
    spec: &BanditSpec,
) -> Result<f64> {
    let ratios = batch_log_ratios(batch, policy, spec)?;
    let b = batch.len() as f64;
    let mut acc = 0.0;
    for i in 0..batch.len() {
        let t = batch.rewards[i] - value.value(batch.contexts[i]) - spec.tau * ratios[i];
        acc += t * t;
    }
    Ok(acc / (2.0 * b))
}

/// Gradient of [`dro_loss`] with respect to the value parameters:
/// per-context component `x` is `1/B * sum_{i: x_i = x} (V(x) - r_i + tau *
/// log_ratio_i)`; constant mode collapses to the single scalar mean.
pub fn dro_value_grad<P: Policy + ?Sized>(
    batch: &Batch,
    policy: &P,
    value: &ValueFn,
    spec: &BanditSpec,
) -> Result<Vec<f64>> {
    let ratios = batch_log_ratios(batch, policy, spec)?;
    let b = batch.len() as f64;
    let mut grad = vec![0.0; value.param_len()];
    for i in 0..batch.len() {
        let x = batch.contexts[i];
        let residual = value.value(x) - batch.rewards[i] + spec.tau * ratios[i];
        value.accumulate_grad(x, residual / b, &mut grad);
    }
    Ok(grad)
}

/// Gradient of [`dro_loss`] with respect to the policy parameters.
///
/// Unrescaled, this is the exact derivative: `-tau/B * sum_i t_i *
/// grad log pi(y_i|x_i)`. With `rescale_policy_by_inv_tau` it is divided by
/// tau, which equals the training-loop update
/// `-1/B * sum_i [grad log pi * (r_i - V(x_i)) - 1/2 grad (log_ratio_i)^2]`.
pub fn dro_policy_grad<P: Policy + ?Sized>(
    batch: &Batch,
    policy: &P,
    value: &ValueFn,
    spec: &BanditSpec,
    gradspec: &GradSpec,
) -> Result<Vec<f64>> {
    let ratios = batch_log_ratios(batch, policy, spec)?;
    let b = batch.len() as f64;
    let scale = if gradspec.rescale_policy_by_inv_tau {
        1.0
    } else {
        spec.tau
    };
    let mut grad = vec![0.0; policy.param_len()];
    for i in 0..batch.len() {
        let (x, y) = (batch.contexts[i], batch.actions[i]);
        let t = batch.rewards[i] - value.value(x) - spec.tau * ratios[i];
        policy.accumulate_grad_log_prob(x, y, -scale * t / b, &mut grad);
    }
    Ok(grad)
}

/// Exact population loss `1/2 E_{x~rho, y~mu}[t(x,y)^2]` (finite sums, no
/// sampling).
pub fn dro_population_loss<P: Policy + ?Sized>(
    spec: &BanditSpec,
    policy: &P,
    value: &ValueFn,
) -> Result<f64> {
    let mut acc = 0.0;
    for x in 0..spec.n_contexts {
        if spec.rho[x] == 0.0 {
            continue;
        }
        let log_probs = policy.log_probs_row(x);
        for y in 0..spec.n_actions {
            let m = spec.mu[x][y];
            if m == 0.0 {
                continue;
            }
            let pref = spec.pi_ref[x][y];
            if pref <= 0.0 {
                return Err(Error::Support(format!(
                    "mu({y}|{x}) > 0 but pi_ref({y}|{x}) = 0"
                )));
            }
            let t = spec.reward[x][y] - value.value(x) - spec.tau * (log_probs[y] - pref.ln());
            acc += spec.rho[x] * m * t * t;
        }
    }
    Ok(0.5 * acc)
}

/// Exact policy gradient of [`dro_population_loss`] (unrescaled).
pub fn dro_population_policy_grad<P: Policy + ?Sized>(
    spec: &BanditSpec,
    policy: &P,
    value: &ValueFn,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; policy.param_len()];
    for x in 0..spec.n_contexts {
        if spec.rho[x] == 0.0 {
            continue;
        }
        let log_probs = policy.log_probs_row(x);
        for y in 0..spec.n_actions {
            let m = spec.mu[x][y];
            if m == 0.0 {
                continue;
            }
            let pref = spec.pi_ref[x][y];
            if pref <= 0.0 {
                return Err(Error::Support(format!(
                    "mu({y}|{x}) > 0 but pi_ref({y}|{x}) = 0"
                )));
            }
            let t = spec.reward[x][y] - value.value(x) - spec.tau * (log_probs[y] - pref.ln());
            policy.accumulate_grad_log_prob(x, y, -spec.tau * spec.rho[x] * m * t, &mut grad);
        }
    }
    Ok(grad)
}

// ── Policy-only variance losses ─────────────────────────────────────────

/// Exact policy-only loss: `1/2 E_rho[ Var_{y~mu}( r - tau * log_ratio ) ]`
/// with population variances computed per context by full enumeration.
/// Equals the joint loss evaluated at the per-context minimizing value
/// function, and is exactly zero at the optimal policy.
pub fn drop_loss_exact<P: Policy + ?Sized>(spec: &BanditSpec, policy: &P) -> Result<f64> {
    per_context_residual_stats(spec, policy).map(|stats| {
        0.5 * stats
            .iter()
            .map(|s| s.as_ref().map_or(0.0, |s| s.rho * s.variance))
            .sum::<f64>()
    })
}

/// Exact policy gradient of [`drop_loss_exact`] (unrescaled):
/// `-tau * sum_x rho(x) sum_y mu(y|x) (z(x,y) - zbar(x)) grad log pi(y|x)`.
pub fn drop_loss_exact_policy_grad<P: Policy + ?Sized>(
    spec: &BanditSpec,
    policy: &P,
) -> Result<Vec<f64>> {
    let stats = per_context_residual_stats(spec, policy)?;
    let mut grad = vec![0.0; policy.param_len()];
    for (x, stat) in stats.iter().enumerate() {
        let Some(stat) = stat else { continue };
        for y in 0..spec.n_actions {
            let m = spec.mu[x][y];
            if m == 0.0 {
                continue;
            }
            let centered = stat.residuals[y] - stat.mean;
            policy.accumulate_grad_log_prob(x, y, -spec.tau * stat.rho * m * centered, &mut grad);
        }
    }
    Ok(grad)
}

struct ContextResidualStats {
    rho: f64,
    /// z(x, y) = r - tau * log_ratio, defined on supp(mu); 0 elsewhere.
    residuals: Vec<f64>,
    mean: f64,
    variance: f64,
}

fn per_context_residual_stats<P: Policy + ?Sized>(
    spec: &BanditSpec,
    policy: &P,
) -> Result<Vec<Option<ContextResidualStats>>> {
    let mut out = Vec::with_capacity(spec.n_contexts);
    for x in 0..spec.n_contexts {
        if spec.rho[x] == 0.0 {
            out.push(None);
            continue;
        }
        let log_probs = policy.log_probs_row(x);
        let probs = policy.probs_row(x);
        let mut residuals = vec![0.0; spec.n_actions];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for y in 0..spec.n_actions {
            let m = spec.mu[x][y];
            if m == 0.0 {
                continue;
            }
            let pref = spec.pi_ref[x][y];
            if pref <= 0.0 {
                return Err(Error::Support(format!(
                    "mu({y}|{x}) > 0 but pi_ref({y}|{x}) = 0"
                )));
            }
            if probs[y] <= 0.0 {
                return Err(Error::Support(format!(
                    "policy has zero mass on behavior-supported action ({x}, {y})"
                )));
            }
            let z = spec.reward[x][y] - spec.tau * (log_probs[y] - pref.ln());
            residuals[y] = z;
            m1 += m * z;
            m2 += m * z * z;
        }
        out.push(Some(ContextResidualStats {
            rho: spec.rho[x],
            residuals,
            mean: m1,
            variance: (m2 - m1 * m1).max(0.0),
        }));
    }
    Ok(out)
}

/// Batch-variance approximation of the policy-only loss: half the population
/// variance of the residuals `z_i = r_i - tau * log_ratio_i` across the whole
/// batch, where records generally come from different contexts. This is a
/// biased approximation of [`drop_loss_exact`] (exact only when every record
/// shares one context, or when the optimal soft value is context-independent).
///
/// Returns the loss together with its analytic policy gradient
/// `-tau/B * sum_i (z_i - zbar) grad log pi(y_i|x_i)` (divided by tau when
/// `rescale_policy_by_inv_tau` is set). Requires B >= 2.
pub fn drop_loss_batch<P: Policy + ?Sized>(
    batch: &Batch,
    policy: &P,
    spec: &BanditSpec,
    gradspec: &GradSpec,
) -> Result<(f64, Vec<f64>)> {
    if batch.len() < 2 {
        return Err(Error::Argument(
            "batch variance needs at least 2 records".into(),
        ));
    }
    let ratios = batch_log_ratios(batch, policy, spec)?;
    let b = batch.len() as f64;
    let z: Vec<f64> = (0..batch.len())
        .map(|i| batch.rewards[i] - spec.tau * ratios[i])
        .collect();
    let zbar = mean(&z);
    let var = z.iter().map(|zi| (zi - zbar) * (zi - zbar)).sum::<f64>() / b;
    let loss = 0.5 * var;

    let scale = if gradspec.rescale_policy_by_inv_tau {
        1.0
    } else {
        spec.tau
    };
    let mut grad = vec![0.0; policy.param_len()];
    for i in 0..batch.len() {
        let coef = -scale * (z[i] - zbar) / b;
        policy.accumulate_grad_log_prob(batch.contexts[i], batch.actions[i], coef, &mut grad);
    }
    Ok((loss, grad))
}

// ── Simplified KTO baseline ─────────────────────────────────────────────

/// Simplified KTO loss on a batch.
///
/// Record i is labeled desirable iff `r_i` strictly exceeds the batch mean
/// reward. The per-batch reference point is the batch mean of
/// `tau * log_ratio`, clamped at >= 0 (a stand-in for the nonnegative batch
/// KL estimate). Desirable records contribute
/// `1 - sigmoid(beta * (tau * log_ratio_i - ref))`, undesirable ones
/// `1 - sigmoid(beta * (ref - tau * log_ratio_i))`; the loss is their
/// unweighted mean. Requires B >= 2.
///
/// The returned gradient is the exact derivative of the loss as computed,
/// including the dependence of the reference point on the policy (zero when
/// the clamp is active; the clamp kink itself takes the clamped-side
/// subgradient).
pub fn kto_loss<P: Policy + ?Sized>(
    batch: &Batch,
    policy: &P,
    spec: &BanditSpec,
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch.len() < 2 {
        return Err(Error::Argument(
            "KTO labeling needs at least 2 records".into(),
        ));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Argument(format!("beta = {beta} must be positive")));
    }
    let ratios = batch_log_ratios(batch, policy, spec)?;
    let b = batch.len() as f64;
    let mean_reward = mean(&batch.rewards);
    let scaled: Vec<f64> = ratios.iter().map(|l| spec.tau * l).collect();
    let raw_ref = mean(&scaled);
    let ref_point = raw_ref.max(0.0);
    let unclamped = raw_ref > 0.0;

    let mut loss = 0.0;
    // d loss / d scaled_i, before chaining through scaled_i = tau * log pi + const
    let mut dl_dscaled: Vec<f64> = vec![0.0; batch.len()];
    let mut ref_coef = 0.0;
    for i in 0..batch.len() {
        let sign = if batch.rewards[i] > mean_reward {
            1.0
        } else {
            -1.0
        };
        let u = sign * beta * (scaled[i] - ref_point);
        let s = sigmoid(u);
        loss += 1.0 - s;
        let dterm_du = -s * (1.0 - s);
        // u depends on scaled_i directly and on every scaled_j through the
        // reference point when unclamped.
        dl_dscaled[i] += dterm_du * sign * beta / b;
        if unclamped {
            ref_coef += dterm_du * sign * beta / b; // times -1/B per scaled_j below
        }
    }
    loss /= b;

    let mut grad = vec![0.0; policy.param_len()];
    for i in 0..batch.len() {
        let mut coef = dl_dscaled[i];
        if unclamped {
            coef -= ref_coef / b;
        }
        policy.accumulate_grad_log_prob(
            batch.contexts[i],
            batch.actions[i],
            coef * spec.tau,
            &mut grad,
        );
    }
    Ok((loss, grad))
}

// ── Pairwise f-losses ───────────────────────────────────────────────────

/// The f-function family for pairwise preference losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseKind {
    /// f(z) = log(1 + exp(-z))
    Dpo,
    /// f(z) = (z - 1)^2
    Ipo,
    /// f(z) = max(0, 1 - z)
    Slic,
}

impl PairwiseKind {
    fn f(self, z: f64) -> f64 {
        match self {
            // log(1 + exp(-z)) = softplus(-z), computed stably
            PairwiseKind::Dpo => {
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
            PairwiseKind::Ipo => (z - 1.0) * (z - 1.0),
            PairwiseKind::Slic => (1.0 - z).max(0.0),
        }
    }

    fn df(self, z: f64) -> f64 {
        match self {
            PairwiseKind::Dpo => -sigmoid(-z),
            PairwiseKind::Ipo => 2.0 * (z - 1.0),
            // subgradient 0 exactly at the kink z = 1
            PairwiseKind::Slic => {
                if z < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Mean over pairs of `f(beta * (log_ratio_w - log_ratio_l))` with its
/// analytic policy gradient. Pairs are `(context, winner action, loser
/// action)` tuples inside the reference support.
pub fn pairwise_loss<P: Policy + ?Sized>(
    pairs: &[(usize, usize, usize)],
    policy: &P,
    spec: &BanditSpec,
    kind: PairwiseKind,
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::Argument("empty pair list".into()));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Argument(format!("beta = {beta} must be positive")));
    }
    let n = pairs.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; policy.param_len()];
    for &(x, yw, yl) in pairs {
        spec.check_indices(x, yw)?;
        spec.check_indices(x, yl)?;
        let (pw, pl) = (spec.pi_ref[x][yw], spec.pi_ref[x][yl]);
        if pw <= 0.0 || pl <= 0.0 {
            return Err(Error::Support(format!(
                "pair ({x}, {yw}, {yl}) lies outside the reference support"
            )));
        }
        let log_probs = policy.log_probs_row(x);
        let z = beta * ((log_probs[yw] - pw.ln()) - (log_probs[yl] - pl.ln()));
        loss += kind.f(z);
        let coef = kind.df(z) * beta / n;
        policy.accumulate_grad_log_prob(x, yw, coef, &mut grad);
        policy.accumulate_grad_log_prob(x, yl, -coef, &mut grad);
    }
    Ok((loss / n, grad))
}

// ── Finite-difference oracle ────────────────────────────────────────────

/// Central finite differences, `(f(p + eps e_k) - f(p - eps e_k)) / (2 eps)`
/// per coordinate. This is the reference oracle the analytic gradients are
/// checked against; it deliberately knows nothing about their structure.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], epsilon: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Argument(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    let mut grad = vec![0.0; params.len()];
    let mut probe = params.to_vec();
    for k in 0..params.len() {
        probe[k] = params[k] + epsilon;
        let up = f(&probe)?;
        probe[k] = params[k] - epsilon;
        let down = f(&probe)?;
        probe[k] = params[k];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss in finite-difference probe at coordinate {k}"
            )));
        }
        grad[k] = (up - down) / (2.0 * epsilon);
    }
    Ok(grad)
}
