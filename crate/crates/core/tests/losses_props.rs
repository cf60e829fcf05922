//! Property and identity checks for the loss family: exact expectations
//! computed straight-line in the test (independent of the library paths they
//! certify), plus randomized invariants.

use dro_core::bandit::{BanditSpec, LinearSoftmaxPolicy, Policy, TabularPolicy, ValueFn};
use dro_core::losses::{
    dro_loss, dro_population_loss, drop_loss_batch, drop_loss_exact, drop_loss_exact_policy_grad,
    finite_diff_grad, pairwise_loss, Batch, GradSpec, PairwiseKind,
};
use dro_core::numerics::{log_softmax, softmax, sup_norm};
use dro_core::oracle::{pi_star, v_pi, v_star};
use dro_core::rng::DetRng;
use proptest::prelude::*;

// ── Randomized invariants over the probabilistic primitives ─────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn softmax_rows_always_sum_to_one(
        logits in prop::collection::vec(-30.0f64..30.0, 2..12)
    ) {
        let p = softmax(&logits);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn log_prob_is_shift_invariant(
        logits in prop::collection::vec(-20.0f64..20.0, 2..8),
        shift in -50.0f64..50.0,
    ) {
        let base = log_softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
        let moved = log_softmax(&shifted);
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_self_is_zero_and_nonnegative(
        logits_p in prop::collection::vec(-10.0f64..10.0, 2..8),
        logits_q in prop::collection::vec(-10.0f64..10.0, 2..8),
    ) {
        let p = softmax(&logits_p);
        prop_assert!(dro_core::kl_rows(&p, &p).unwrap().abs() <= 1e-12);
        if logits_p.len() == logits_q.len() {
            let q = softmax(&logits_q);
            prop_assert!(dro_core::kl_rows(&p, &q).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn one_hot_linear_policy_equals_tabular(
        logits in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        // 2 contexts x 3 actions
        let tab = TabularPolicy::from_flat(2, 3, logits.clone()).unwrap();
        let lin = LinearSoftmaxPolicy::one_hot(2, 3, logits).unwrap();
        for x in 0..2 {
            let pt = tab.probs_row(x);
            let pl = lin.probs_row(x);
            for y in 0..3 {
                prop_assert!((pt[y] - pl[y]).abs() < 1e-12);
            }
        }
    }
}

// ── Exact off-policy algebra ────────────────────────────────────────────

/// E_{y~w}[grad log pi(y|x)] * V over the logits of one row, straight-line.
fn baseline_bias_term(weights: &[f64], pi: &[f64], value: f64) -> Vec<f64> {
    let n = pi.len();
    let mut g = vec![0.0; n];
    for y in 0..n {
        for a in 0..n {
            let indicator = if a == y { 1.0 } else { 0.0 };
            g[a] += weights[y] * (indicator - pi[a]) * value;
        }
    }
    g
}

#[test]
fn on_policy_baseline_term_vanishes_off_policy_does_not() {
    let logits = vec![0.9, -0.3, 0.4];
    let pi = softmax(&logits);
    let value = 1.0;

    let on_policy = baseline_bias_term(&pi, &pi, value);
    assert!(
        sup_norm(&on_policy) < 1e-12,
        "on-policy bias {}",
        sup_norm(&on_policy)
    );

    let mu = vec![0.6, 0.3, 0.1];
    let off_policy = baseline_bias_term(&mu, &pi, value);
    assert!(
        sup_norm(&off_policy) > 1e-3,
        "off-policy bias too small: {}",
        sup_norm(&off_policy)
    );
}

/// 1/2 E_{y~w}[grad (log pi/pi_ref)^2] over a row's logits, straight-line.
fn half_grad_sq_expectation(weights: &[f64], pi: &[f64], pi_ref: &[f64]) -> Vec<f64> {
    let n = pi.len();
    let mut g = vec![0.0; n];
    for y in 0..n {
        let lr = (pi[y] / pi_ref[y]).ln();
        for a in 0..n {
            let indicator = if a == y { 1.0 } else { 0.0 };
            g[a] += weights[y] * lr * (indicator - pi[a]);
        }
    }
    g
}

/// grad KL(pi || pi_ref) over the row's logits, straight-line.
fn kl_gradient(pi: &[f64], pi_ref: &[f64]) -> Vec<f64> {
    half_grad_sq_expectation(pi, pi, pi_ref)
}

#[test]
fn l2_regularizer_matches_kl_gradient_only_on_policy() {
    let logits = vec![0.4, -0.8, 0.1, 0.6];
    let pi = softmax(&logits);
    let pi_ref = vec![0.3, 0.3, 0.2, 0.2];

    let on_policy = half_grad_sq_expectation(&pi, &pi, &pi_ref);
    let kl_grad = kl_gradient(&pi, &pi_ref);
    for (a, b) in on_policy.iter().zip(&kl_grad) {
        assert!((a - b).abs() < 1e-9, "on-policy mismatch: {a} vs {b}");
    }

    let mu = vec![0.1, 0.2, 0.3, 0.4];
    let off_policy = half_grad_sq_expectation(&mu, &pi, &pi_ref);
    let diff: Vec<f64> = off_policy
        .iter()
        .zip(&kl_grad)
        .map(|(a, b)| a - b)
        .collect();
    assert!(
        sup_norm(&diff) > 1e-3,
        "off-policy difference too small: {}",
        sup_norm(&diff)
    );
}

// ── Variance-loss identities ────────────────────────────────────────────

fn random_instance(seed: u64, tau: f64) -> (BanditSpec, TabularPolicy) {
    let mut rng = DetRng::new(seed);
    let spec = BanditSpec::random(&mut rng, 4, 4, tau);
    let policy =
        TabularPolicy::from_flat(4, 4, (0..16).map(|_| 0.7 * rng.normal()).collect()).unwrap();
    (spec, policy)
}

#[test]
fn exact_variance_equals_joint_loss_at_minimizing_value() {
    for (seed, tau) in [(1, 0.5), (2, 1.0), (3, 5.0)] {
        let (spec, policy) = random_instance(seed, tau);
        let table = policy.prob_table();
        let v = v_pi(&spec, &table).unwrap();
        let joint = dro_population_loss(&spec, &policy, &v).unwrap();
        let varform = drop_loss_exact(&spec, &policy).unwrap();
        assert!(
            (joint - varform).abs() < 1e-12,
            "seed {seed}: {joint} vs {varform}"
        );
    }
}

#[test]
fn exact_variance_equals_two_sample_pairwise_form() {
    for (seed, tau) in [(11, 0.5), (12, 1.0), (13, 5.0)] {
        let (spec, policy) = random_instance(seed, tau);
        let exact = drop_loss_exact(&spec, &policy).unwrap();
        // 1/2 E_rho [ 1/2 E_{y1,y2~mu} (Z1 - Z2)^2 ], all sums explicit
        let mut two_sample = 0.0;
        for x in 0..spec.n_contexts {
            let probs = policy.probs_row(x);
            let z: Vec<f64> = (0..spec.n_actions)
                .map(|y| spec.reward[x][y] - spec.tau * (probs[y] / spec.pi_ref[x][y]).ln())
                .collect();
            let mut inner = 0.0;
            for y1 in 0..spec.n_actions {
                for y2 in 0..spec.n_actions {
                    let d = z[y1] - z[y2];
                    inner += spec.mu[x][y1] * spec.mu[x][y2] * 0.5 * d * d;
                }
            }
            two_sample += spec.rho[x] * 0.5 * inner;
        }
        assert!(
            (exact - two_sample).abs() < 1e-9,
            "seed {seed}: {exact} vs {two_sample}"
        );
    }
}

#[test]
fn indicator_two_sample_form_is_quarter_of_ipo() {
    // replacing the reward difference by a 0/1 preference indicator turns the
    // per-pair two-sample term 1/4 (1 - tau * (lr_w - lr_l))^2 into exactly
    // one quarter of the IPO loss at beta = tau
    let mut rng = DetRng::new(77);
    for tau in [0.5, 1.0, 2.0] {
        let spec = BanditSpec::random(&mut rng, 3, 4, tau);
        let policy =
            TabularPolicy::from_flat(3, 4, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let mut pairs = Vec::new();
        for _ in 0..20 {
            let x = rng.below(3);
            let yw = rng.below(4);
            let mut yl = rng.below(4);
            if yl == yw {
                yl = (yl + 1) % 4;
            }
            pairs.push((x, yw, yl));
        }
        let mut indicator_form = 0.0;
        for &(x, yw, yl) in &pairs {
            let lp = policy.log_probs_row(x);
            let lr_w = lp[yw] - spec.pi_ref[x][yw].ln();
            let lr_l = lp[yl] - spec.pi_ref[x][yl].ln();
            let d = 1.0 - tau * (lr_w - lr_l);
            indicator_form += 0.25 * d * d;
        }
        indicator_form /= pairs.len() as f64;
        let (ipo, _) = pairwise_loss(&pairs, &policy, &spec, PairwiseKind::Ipo, tau).unwrap();
        assert!(
            (indicator_form - 0.25 * ipo).abs() < 1e-9,
            "tau {tau}: {indicator_form} vs {}",
            0.25 * ipo
        );
    }
}

#[test]
fn losses_are_nonnegative_and_zero_at_optimum() {
    let mut rng = DetRng::new(303);
    for tau in [0.1, 1.0, 5.0] {
        let spec = BanditSpec::random(&mut rng, 4, 3, tau);
        let policy =
            TabularPolicy::from_flat(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let value = ValueFn::per_context((0..4).map(|_| rng.normal()).collect()).unwrap();
        let batch = Batch::new(
            (0..10).map(|_| rng.below(4)).collect(),
            (0..10).map(|_| rng.below(3)).collect(),
            (0..10).map(|_| rng.normal()).collect(),
        )
        .unwrap();
        assert!(dro_loss(&batch, &policy, &value, &spec).unwrap() >= 0.0);
        assert!(drop_loss_exact(&spec, &policy).unwrap() >= 0.0);
        let (batch_var, _) = drop_loss_batch(&batch, &policy, &spec, &GradSpec::default()).unwrap();
        assert!(batch_var >= 0.0);

        // optimum: zero joint loss on any supported batch, zero variance loss
        let opt = TabularPolicy::from_prob_table(&pi_star(&spec).unwrap()).unwrap();
        let vs = v_star(&spec).unwrap();
        let mut opt_batch_contexts = Vec::new();
        let mut opt_batch_actions = Vec::new();
        let mut opt_batch_rewards = Vec::new();
        for _ in 0..12 {
            let x = rng.categorical(&spec.rho);
            let y = rng.categorical(&spec.mu[x]);
            opt_batch_contexts.push(x);
            opt_batch_actions.push(y);
            opt_batch_rewards.push(spec.reward[x][y]);
        }
        let opt_batch =
            Batch::new(opt_batch_contexts, opt_batch_actions, opt_batch_rewards).unwrap();
        assert!(dro_loss(&opt_batch, &opt, &vs, &spec).unwrap() <= 1e-12);
        assert!(drop_loss_exact(&spec, &opt).unwrap() <= 1e-12);
    }
}

#[test]
fn exact_variance_gradient_matches_finite_differences() {
    let (spec, policy) = random_instance(21, 1.3);
    let analytic = drop_loss_exact_policy_grad(&spec, &policy).unwrap();
    let mut probe = policy.clone();
    let fd = finite_diff_grad(
        |p| {
            probe.params_mut().copy_from_slice(p);
            drop_loss_exact(&spec, &probe)
        },
        policy.params(),
        1e-6,
    )
    .unwrap();
    let err = analytic
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(err < 1e-7, "gradient mismatch {err}");
}

#[test]
fn batch_variance_approaches_exact_on_single_context() {
    // every record shares the single context, so the batch estimator targets
    // exactly the per-context population variance; judge the gap against the
    // spread of independent replicates (3-sigma of the mean)
    let mut rng = DetRng::new(55);
    let spec = BanditSpec::random(&mut rng, 1, 5, 1.0);
    let policy = TabularPolicy::from_flat(1, 5, (0..5).map(|_| rng.normal()).collect()).unwrap();
    let exact = drop_loss_exact(&spec, &policy).unwrap();

    let replicates = 30;
    let batch_size = 2000;
    let mut values = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let mut actions = Vec::with_capacity(batch_size);
        let mut rewards = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let y = rng.categorical(&spec.mu[0]);
            actions.push(y);
            rewards.push(spec.reward[0][y]);
        }
        let batch = Batch::new(vec![0; batch_size], actions, rewards).unwrap();
        let (loss, _) = drop_loss_batch(&batch, &policy, &spec, &GradSpec::default()).unwrap();
        values.push(loss);
    }
    let mean: f64 = values.iter().sum::<f64>() / replicates as f64;
    let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / replicates as f64;
    let sigma_mean = (var / replicates as f64).sqrt();
    assert!(
        (mean - exact).abs() <= 3.0 * sigma_mean + 1e-12,
        "batch estimator off: mean {mean}, exact {exact}, 3 sigma {}",
        3.0 * sigma_mean
    );
}
