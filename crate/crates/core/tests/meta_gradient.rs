//! The meta loss against an independent straight-line implementation, and the
//! analytic gradient against central finite differences.

use monsoon_core::control::{QWeights, GVF_FEATURES};
use monsoon_core::env::{Action, Observation};
use monsoon_core::features::Features;
use monsoon_core::gradcheck::{gradcheck, max_relative_error, RandomContext, MIN_Q_MARGIN, TOLERANCE};
use monsoon_core::gvf::GvfWeights;
use monsoon_core::meta::{meta_grad, meta_update, unrolled_loss, MetaParams, MetaStepContext, MetaWeights};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Dense, loop-free re-derivation of the unrolled loss for two GVFs with the
/// observation cells appended to the control state.
fn reference_loss(rc: &RandomContext, meta: &[MetaWeights<f64>]) -> f64 {
    let x = rc.x.to_dense();
    let o = rc.obs.values::<f64>();
    let a = rc.action.index();
    let p = rc.params;
    let mut v_plus = [0.0; 2];
    for g in 0..2 {
        let m = &meta[g];
        let c = 1.0 / (1.0 + (-(m.w_c[0] * o[0] + m.w_c[1] * o[1])).exp());
        let z = m.w_pi[0].exp() + m.w_pi[1].exp();
        let pi_a = m.w_pi[a].exp() / z;
        let rho = pi_a / rc.behavior_prob;
        let w = &rc.gvfs[g].w;
        let wx: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        let delta = c + p.gamma_gvf * wx - wx;
        let w_new: Vec<f64> = w.iter().zip(&x).map(|(wi, xi)| wi + p.alpha_gvf * rho * delta * xi).collect();
        v_plus[g] = w_new.iter().zip(&x).map(|(a, b)| a * b).sum();
    }
    let s_plus = [v_plus[0], v_plus[1], o[0], o[1]];
    let q = |act: usize, s: &[f64]| -> f64 { rc.control.w[act].iter().zip(s).map(|(a, b)| a * b).sum() };
    let q_max = q(0, &s_plus).max(q(1, &s_plus));
    let s_now = rc.control_state.to_dense();
    let delta_c = rc.reward + rc.control.gamma_c * q_max - q(a, &s_now);
    let l2: f64 = meta
        .iter()
        .map(|m| m.w_pi.iter().chain(&m.w_c).map(|x| x * x).sum::<f64>())
        .sum();
    delta_c * delta_c + p.lambda * l2
}

#[test]
fn loss_matches_straight_line_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let rc = RandomContext::draw(&mut rng, 0.001);
        let got = unrolled_loss(&rc.context(), &rc.meta).unwrap();
        let want = reference_loss(&rc, &rc.meta);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

/// A context whose control TD error is exactly zero at the origin of the
/// meta-weights: Q ignores the predictions and `Q(s_t, a_t) = r + 0.9 * 0`.
fn zero_error_context() -> (Features<f64>, QWeights<f64>, Features<f64>, Vec<GvfWeights<f64>>) {
    let x = Features::one_hot(7, GVF_FEATURES).unwrap();
    let control = QWeights {
        w: [vec![0.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
        gamma_c: 0.9,
    };
    // Control state with the growth cell active: Q(s, water) = 1 = r.
    let s = Features::dense(&[0.3, 0.4, 1.0, 0.0]);
    let gvfs = vec![GvfWeights::zeros(GVF_FEATURES); 2];
    (x, control, s, gvfs)
}

fn ctx<'a>(
    x: &'a Features<f64>,
    control: &'a QWeights<f64>,
    s: &'a Features<f64>,
    gvfs: &'a [GvfWeights<f64>],
    lambda: f64,
) -> MetaStepContext<'a, f64> {
    MetaStepContext {
        // No-growth observation makes the unrolled state's obs cells (0, 1),
        // where both actions have Q = 0.
        obs: Observation::NO_GROWTH,
        action: Action::Water,
        behavior_prob: 0.5,
        x_update: x,
        x_eval: x,
        reward: 1.0,
        control,
        control_state: s,
        gvfs,
        include_obs: true,
        params: MetaParams { alpha_gvf: 0.1, gamma_gvf: 0.9, lambda },
    }
}

#[test]
fn zero_control_error_gives_zero_loss_and_gradient() {
    let (x, control, s, gvfs) = zero_error_context();
    let c = ctx(&x, &control, &s, &gvfs, 0.0);
    let meta = vec![MetaWeights::zeros(); 2];
    assert_eq!(unrolled_loss(&c, &meta).unwrap(), 0.0);
    let g = meta_grad(&c, &meta).unwrap();
    assert_eq!(g.delta_control, 0.0);
    for m in &g.per_gvf {
        assert_eq!(m.w_pi, [0.0, 0.0]);
        assert_eq!(m.w_c, [0.0, 0.0]);
    }
}

#[test]
fn regularizer_vanishes_at_origin() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rc = RandomContext::draw(&mut rng, 0.001);
    let zeros = vec![MetaWeights::zeros(); 2];
    let with = unrolled_loss(&rc.context(), &zeros).unwrap();
    let mut no_l2 = rc.clone();
    no_l2.params.lambda = 0.0;
    let without = unrolled_loss(&no_l2.context(), &zeros).unwrap();
    assert_eq!(with, without);
}

#[test]
fn policy_gradient_at_uniform_policy_is_antisymmetric() {
    // With w_pi = 0 and a_t = water the softmax Jacobian row is (-1/4, 1/4) / b.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let mut rc = RandomContext::draw(&mut rng, 0.0);
        rc.action = Action::Water;
        for m in &mut rc.meta {
            m.w_pi = [0.0, 0.0];
        }
        let g = meta_grad(&rc.context(), &rc.meta).unwrap();
        for m in &g.per_gvf {
            assert!((m.w_pi[0] + m.w_pi[1]).abs() <= 1e-15, "{:?}", m.w_pi);
        }
    }
}

#[test]
fn pure_l2_flow_decays_geometrically() {
    let (x, control, s, gvfs) = zero_error_context();
    let c = ctx(&x, &control, &s, &gvfs, 0.001);
    // Q ignores the prediction cells, so delta_control = 0 for any meta-weights
    // and only the regularizer moves them.
    let mut meta = vec![MetaWeights { w_pi: [0.8, -0.3], w_c: [1.5, -2.0] }; 2];
    let mut prev = meta[0].squared_norm();
    for _ in 0..100 {
        let g = meta_grad(&c, &meta).unwrap();
        assert_eq!(g.delta_control, 0.0);
        for (m, gm) in meta.iter_mut().zip(&g.per_gvf) {
            meta_update(m, gm, 0.1, 0.1).unwrap();
        }
        let norm = meta[0].squared_norm();
        assert!(norm < prev);
        let ratio = norm / prev;
        assert!((ratio - (1.0 - 2.0 * 0.1 * 0.001f64).powi(2)).abs() < 1e-12);
        prev = norm;
    }
}

#[test]
fn gradient_matches_finite_differences_on_100_contexts() {
    let report = gradcheck(100, 0, 0.001).unwrap();
    assert_eq!(report.n_contexts, 100);
    assert!(report.passed(), "{report:?}");
}

#[test]
fn gradcheck_is_deterministic_and_seed_robust() {
    assert_eq!(gradcheck(20, 5, 0.001).unwrap(), gradcheck(20, 5, 0.001).unwrap());
    for seed in 1..6 {
        let r = gradcheck(100, seed, 0.001).unwrap();
        assert!(r.passed(), "seed {seed}: {r:?}");
    }
}

#[test]
fn engineered_zero_error_context_checks_exactly() {
    let (x, control, s, gvfs) = zero_error_context();
    let c = ctx(&x, &control, &s, &gvfs, 0.0);
    let err = max_relative_error(&c, &[MetaWeights::zeros(), MetaWeights::zeros()]).unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn true_next_unroll_has_no_gradient_across_distinct_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rc = RandomContext::draw(&mut rng, 0.0);
    let other = Features::one_hot((rc.x.one_hot_index().unwrap() + 1) % GVF_FEATURES, GVF_FEATURES).unwrap();
    let mut c = rc.context();
    c.x_update = &other;
    let g = meta_grad(&c, &rc.meta).unwrap();
    for m in &g.per_gvf {
        assert_eq!(m.w_pi, [0.0, 0.0]);
        assert_eq!(m.w_c, [0.0, 0.0]);
    }
    // With lambda > 0 only the regularizer remains, and it still checks.
    let mut rc2 = rc.clone();
    rc2.params.lambda = 0.01;
    let mut c2 = rc2.context();
    c2.x_update = &other;
    if meta_grad(&c2, &rc2.meta).unwrap().greedy_margin >= MIN_Q_MARGIN {
        assert!(max_relative_error(&c2, &rc2.meta).unwrap() <= TOLERANCE);
    }
}
