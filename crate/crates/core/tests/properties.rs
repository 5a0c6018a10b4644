//! Invariants that must hold for every input.

use monsoon_core::control::{behavior_distribution, greedy_set, select_action};
use monsoon_core::env::{self, Action, EnvState};
use monsoon_core::features::Features;
use monsoon_core::gvf::{log_transform, td_update, GvfWeights, T_MAX, V_FLOOR};
use monsoon_core::meta::{cumulant, policy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 16;

proptest! {
    #[test]
    fn td_update_is_linear_in_rho(
        w in prop::collection::vec(-2.0f64..2.0, N),
        i in 0..N, j in 0..N,
        c in 0.0f64..1.0, gamma in 0.0f64..0.99, alpha in 0.001f64..0.5, rho in 0.0f64..10.0,
    ) {
        let x = Features::one_hot(i, N).unwrap();
        let y = Features::one_hot(j, N).unwrap();
        let base = GvfWeights { w: w.clone() };
        let step = |r: f64| {
            let mut g = base.clone();
            let d = td_update(&mut g, &x, &y, c, gamma, r, alpha).unwrap();
            (g.w[i] - w[i], d)
        };
        let (one, d1) = step(rho);
        let (two, d2) = step(2.0 * rho);
        prop_assert_eq!(d1, d2);
        prop_assert!((two - 2.0 * one).abs() <= 1e-12 * (1.0 + two.abs()));
    }

    #[test]
    fn policy_is_a_shift_invariant_distribution(a in -50.0f64..50.0, b in -50.0f64..50.0, k in -100.0f64..100.0) {
        let p = policy(&[a, b]).probs();
        prop_assert!((p[0] + p[1] - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x > 0.0 && x < 1.0) || (a - b).abs() > 36.0);
        let q = policy(&[a + k, b + k]).probs();
        prop_assert!((p[0] - q[0]).abs() <= 1e-12 && (p[1] - q[1]).abs() <= 1e-12);
    }

    #[test]
    fn cumulant_lies_in_open_unit_interval(w0 in -30.0f64..30.0, w1 in -30.0f64..30.0, growth: bool) {
        let o = if growth { env::Observation::GROWTH } else { env::Observation::NO_GROWTH };
        let c = cumulant(&[w0, w1], o);
        prop_assert!(c > 0.0 && c < 1.0);
    }

    #[test]
    fn behavior_distribution_is_valid(q0 in -5.0f64..5.0, q1 in -5.0f64..5.0, tie: bool, eps in 0.0f64..=1.0) {
        let q = if tie { [q0, q0] } else { [q0, q1] };
        let b = behavior_distribution(&q, eps).probs();
        prop_assert!((b[0] + b[1] - 1.0).abs() <= 1e-12);
        prop_assert!(b.iter().all(|&p| p >= eps / 2.0 - 1e-15));
    }

    #[test]
    fn greedy_set_ignores_constant_shift(q0 in -5.0f64..5.0, q1 in -5.0f64..5.0, tie: bool, k in -8.0f64..8.0) {
        // Shifts by exactly representable constants keep equal values equal.
        let k = (k * 4.0).round() / 4.0;
        let q0 = (q0 * 1024.0).round() / 1024.0;
        let q1 = if tie { q0 } else { (q1 * 1024.0).round() / 1024.0 };
        prop_assert_eq!(greedy_set(&[q0, q1]), greedy_set(&[q0 + k, q1 + k]));
    }

    #[test]
    fn select_action_stays_in_support(q0 in -5.0f64..5.0, q1 in -5.0f64..5.0, eps in 0.0f64..=1.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = select_action(&[q0, q1], eps, &mut rng);
        prop_assert!(b.prob(a) > 0.0);
    }

    #[test]
    fn log_transform_decreases_on_unit_interval(u in V_FLOOR..1.0f64, v in V_FLOOR..1.0f64) {
        prop_assume!(u < v);
        let (tu, tv) = (u.ln() / 0.9f64.ln(), v.ln() / 0.9f64.ln());
        prop_assert!(tu > tv);
        prop_assert!(log_transform(u, T_MAX).unwrap() >= log_transform(v, T_MAX).unwrap());
    }

    #[test]
    fn phase_sequence_has_period_four(actions in prop::collection::vec(any::<bool>(), 1..64)) {
        let mut s = EnvState::new(0).unwrap();
        for (t, &water) in actions.iter().enumerate() {
            prop_assert_eq!(s.phase(), t % 4);
            let a = if water { Action::Water } else { Action::NotWater };
            let out = env::step(s, a);
            prop_assert_eq!(out.observation.growth(), out.reward == 1);
            s = out.next_state;
        }
    }
}
