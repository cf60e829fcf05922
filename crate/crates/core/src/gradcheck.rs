//! Seeded analytic-vs-numeric gradient suite.
//!
//! Each instance draws a random problem, random policies in both
//! parameterizations, random values in both modes and a random batch, then
//! compares every analytic gradient in [`crate::losses`] against central
//! finite differences. Relative error is
//! `max|a - b| / max(max|a|, max|b|, 1e-6)` per gradient vector; the suite
//! passes when the worst error in every family stays below the threshold.
//!
//! Instances cycle tau through {0.1, 1, 5}. The two nonsmooth baselines are
//! probed away from their kinks: hinge pairs are redrawn while any margin
//! sits within 1e-3 of the hinge, and KTO batches are redrawn while the
//! batch-mean scaled log-ratio sits within 1e-4 of the clamp.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bandit::{BanditSpec, LinearSoftmaxPolicy, Policy, TabularPolicy, ValueFn};
use crate::error::Result;
use crate::losses::{
    dro_loss, dro_policy_grad, dro_value_grad, drop_loss_batch, finite_diff_grad, kto_loss,
    pairwise_loss, Batch, GradSpec, PairwiseKind,
};
use crate::numerics::{mean, sup_norm};
use crate::rng::{mix_seed, DetRng};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = 1e-5;

const TAUS: [f64; 3] = [0.1, 1.0, 5.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub n_instances: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub threshold: f64,
    /// Worst relative error seen per gradient family.
    pub max_rel_err: BTreeMap<String, f64>,
    /// Human-readable descriptions of threshold violations.
    pub failures: Vec<String>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn worst(&self) -> f64 {
        self.max_rel_err.values().copied().fold(0.0, f64::max)
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    num / sup_norm(a).max(sup_norm(b)).max(1e-6)
}

struct Tracker {
    report: GradcheckReport,
}

impl Tracker {
    fn record(&mut self, family: &str, instance: usize, err: f64) {
        let slot = self
            .report
            .max_rel_err
            .entry(family.to_string())
            .or_insert(0.0);
        if err > *slot {
            *slot = err;
        }
        if err > self.report.threshold {
            self.report.failures.push(format!(
                "{family}: rel err {err:.3e} > {:.1e} on instance {instance}",
                self.report.threshold
            ));
        }
    }
}

fn random_batch(rng: &mut DetRng, spec: &BanditSpec, len: usize) -> Batch {
    let mut contexts = Vec::with_capacity(len);
    let mut actions = Vec::with_capacity(len);
    let mut rewards = Vec::with_capacity(len);
    for _ in 0..len {
        let x = rng.categorical(&spec.rho);
        let y = rng.categorical(&spec.mu[x]);
        contexts.push(x);
        actions.push(y);
        rewards.push(spec.reward[x][y] + 0.1 * rng.normal());
    }
    Batch::new(contexts, actions, rewards).expect("parallel vectors")
}

fn random_tabular(rng: &mut DetRng, n_contexts: usize, n_actions: usize) -> TabularPolicy {
    let logits: Vec<f64> = (0..n_contexts * n_actions)
        .map(|_| 0.8 * rng.normal())
        .collect();
    TabularPolicy::from_flat(n_contexts, n_actions, logits).expect("finite logits")
}

fn random_linear(rng: &mut DetRng, n_contexts: usize, n_actions: usize) -> LinearSoftmaxPolicy {
    let dim = 4 + rng.below(4);
    let features: Vec<Vec<Vec<f64>>> = (0..n_contexts)
        .map(|_| {
            (0..n_actions)
                .map(|_| (0..dim).map(|_| rng.normal()).collect())
                .collect()
        })
        .collect();
    let weights: Vec<f64> = (0..dim).map(|_| 0.5 * rng.normal()).collect();
    LinearSoftmaxPolicy::new(features, weights).expect("finite features")
}

/// Finite differences of a loss through a policy's parameter vector.
fn fd_policy<P, F>(policy: &P, mut loss: F, epsilon: f64) -> Result<Vec<f64>>
where
    P: Policy + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    let mut probe = policy.clone();
    let params = policy.params().to_vec();
    finite_diff_grad(
        move |p| {
            probe.params_mut().copy_from_slice(p);
            loss(&probe)
        },
        &params,
        epsilon,
    )
}

/// Run the full suite on `n_instances` seeded random instances.
pub fn run_suite(n_instances: usize, seed: u64) -> Result<GradcheckReport> {
    run_suite_with(n_instances, seed, DEFAULT_EPSILON, DEFAULT_THRESHOLD)
}

pub fn run_suite_with(
    n_instances: usize,
    seed: u64,
    epsilon: f64,
    threshold: f64,
) -> Result<GradcheckReport> {
    let mut tracker = Tracker {
        report: GradcheckReport {
            n_instances,
            seed,
            epsilon,
            threshold,
            max_rel_err: BTreeMap::new(),
            failures: Vec::new(),
        },
    };

    for instance in 0..n_instances {
        let mut rng = DetRng::new(mix_seed(seed, instance as u64));
        let tau = TAUS[instance % TAUS.len()];
        let n_contexts = 2 + rng.below(5);
        let n_actions = 2 + rng.below(4);
        let spec = BanditSpec::random(&mut rng, n_contexts, n_actions, tau);
        let tabular = random_tabular(&mut rng, n_contexts, n_actions);
        let linear = random_linear(&mut rng, n_contexts, n_actions);
        let batch_len = 6 + rng.below(11);
        let batch = random_batch(&mut rng, &spec, batch_len);
        let value_pc = ValueFn::per_context((0..n_contexts).map(|_| 0.5 * rng.normal()).collect())?;
        let value_const = ValueFn::constant(0.5 * rng.normal())?;
        let unrescaled = GradSpec {
            rescale_policy_by_inv_tau: false,
        };

        // value gradient, both modes, both policy parameterizations
        for (value, mode_name) in [(&value_pc, "per_context"), (&value_const, "constant")] {
            for (policy, pol_name) in [
                (&tabular as &dyn Policy, "tabular"),
                (&linear as &dyn Policy, "linear"),
            ] {
                let analytic = dro_value_grad(&batch, policy, value, &spec)?;
                let mut probe = (*value).clone();
                let fd = finite_diff_grad(
                    |p| {
                        probe.params_mut().copy_from_slice(p);
                        dro_loss(&batch, policy, &probe, &spec)
                    },
                    value.params(),
                    epsilon,
                )?;
                tracker.record(
                    &format!("dro_value_{mode_name}_{pol_name}"),
                    instance,
                    rel_err(&analytic, &fd),
                );
            }
        }

        // policy gradient, both parameterizations, both value modes
        for (value, mode_name) in [(&value_pc, "per_context"), (&value_const, "constant")] {
            let analytic = dro_policy_grad(&batch, &tabular, value, &spec, &unrescaled)?;
            let fd = fd_policy(&tabular, |p| dro_loss(&batch, p, value, &spec), epsilon)?;
            tracker.record(
                &format!("dro_policy_tabular_{mode_name}"),
                instance,
                rel_err(&analytic, &fd),
            );

            let analytic = dro_policy_grad(&batch, &linear, value, &spec, &unrescaled)?;
            let fd = fd_policy(&linear, |p| dro_loss(&batch, p, value, &spec), epsilon)?;
            tracker.record(
                &format!("dro_policy_linear_{mode_name}"),
                instance,
                rel_err(&analytic, &fd),
            );
        }

        // rescaled gradient is exactly the unrescaled one divided by tau
        {
            let raw = dro_policy_grad(&batch, &tabular, &value_pc, &spec, &unrescaled)?;
            let rescaled =
                dro_policy_grad(&batch, &tabular, &value_pc, &spec, &GradSpec::default())?;
            let scaled: Vec<f64> = raw.iter().map(|g| g / spec.tau).collect();
            tracker.record(
                "dro_policy_rescale_identity",
                instance,
                rel_err(&scaled, &rescaled),
            );
        }

        // batch-variance loss gradient
        {
            let (_, analytic) = drop_loss_batch(&batch, &tabular, &spec, &unrescaled)?;
            let fd = fd_policy(
                &tabular,
                |p| drop_loss_batch(&batch, p, &spec, &unrescaled).map(|(l, _)| l),
                epsilon,
            )?;
            tracker.record("drop_batch_policy", instance, rel_err(&analytic, &fd));
        }

        // simplified KTO, redrawing the batch away from the clamp kink
        {
            let mut kto_batch = batch.clone();
            let mut ok = false;
            for attempt in 0..10 {
                let ratios: Result<Vec<f64>> = (0..kto_batch.len())
                    .map(|i| {
                        crate::bandit::log_ratio(
                            &tabular,
                            &spec,
                            kto_batch.contexts[i],
                            kto_batch.actions[i],
                        )
                    })
                    .collect();
                let scaled: Vec<f64> = ratios?.iter().map(|l| spec.tau * l).collect();
                if mean(&scaled).abs() > 1e-4 {
                    ok = true;
                    break;
                }
                let mut sub = DetRng::new(mix_seed(seed, (instance as u64) << 8 | attempt));
                kto_batch = random_batch(&mut sub, &spec, kto_batch.len());
            }
            if ok {
                let (_, analytic) = kto_loss(&kto_batch, &tabular, &spec, 1.0)?;
                let fd = fd_policy(
                    &tabular,
                    |p| kto_loss(&kto_batch, p, &spec, 1.0).map(|(l, _)| l),
                    epsilon,
                )?;
                tracker.record("kto_policy", instance, rel_err(&analytic, &fd));
            }
        }

        // pairwise losses on random within-context pairs
        {
            let beta = 0.5 + rng.uniform_f64();
            let mut pairs = Vec::new();
            for _ in 0..6 {
                let x = rng.below(n_contexts);
                let yw = rng.below(n_actions);
                let mut yl = rng.below(n_actions);
                if yl == yw {
                    yl = (yl + 1) % n_actions;
                }
                pairs.push((x, yw, yl));
            }
            for (kind, name) in [
                (PairwiseKind::Dpo, "pairwise_dpo"),
                (PairwiseKind::Ipo, "pairwise_ipo"),
                (PairwiseKind::Slic, "pairwise_slic"),
            ] {
                if kind == PairwiseKind::Slic {
                    // keep every margin away from the hinge
                    let near_kink = pairs.iter().any(|&(x, yw, yl)| {
                        let lp = tabular.log_probs_row(x);
                        let z = beta
                            * ((lp[yw] - spec.pi_ref[x][yw].ln())
                                - (lp[yl] - spec.pi_ref[x][yl].ln()));
                        (z - 1.0).abs() < 1e-3
                    });
                    if near_kink {
                        continue;
                    }
                }
                let (_, analytic) = pairwise_loss(&pairs, &tabular, &spec, kind, beta)?;
                let fd = fd_policy(
                    &tabular,
                    |p| pairwise_loss(&pairs, p, &spec, kind, beta).map(|(l, _)| l),
                    epsilon,
                )?;
                tracker.record(name, instance, rel_err(&analytic, &fd));
            }
        }
    }

    Ok(tracker.report)
}
