//! Linear Q-learning control and the feature maps that feed it.

use rand::Rng;

use crate::env::{Action, Observation, N_ACTIONS, OBS_LEN};
use crate::features::Features;
use crate::scalar::{ensure_finite, lit, Scalar};
use crate::{Error, Result};

/// Number of prediction cells per GVF (transformed values are clipped below 10).
pub const CELLS_PER_GVF: usize = 10;
/// Cells of the two-prediction aggregation.
pub const PREDICTION_CELLS: usize = CELLS_PER_GVF * CELLS_PER_GVF;
/// Length of the GVF feature vector: growth bit x action x prediction cell.
pub const GVF_FEATURES: usize = OBS_LEN * N_ACTIONS * PREDICTION_CELLS;

/// Values within this many ulps below an integer are floored to that integer.
/// `log(0.81) / log(0.9)` evaluates to `1.9999999999999998`; without the snap
/// an exact two-step prediction would land in cell 1.
const CELL_SNAP_ULPS: f64 = 64.0;

/// Per-action linear Q weights with the control discount.
#[derive(Debug, Clone, PartialEq)]
pub struct QWeights<F> {
    pub w: [Vec<F>; N_ACTIONS],
    pub gamma_c: F,
}

impl<F: Scalar> QWeights<F> {
    pub fn zeros(n_features: usize, gamma_c: F) -> Result<Self> {
        if !(gamma_c >= F::zero() && gamma_c < F::one()) {
            return Err(Error::contract(format!("control discount {gamma_c} outside [0, 1)")));
        }
        Ok(QWeights {
            w: [vec![F::zero(); n_features], vec![F::zero(); n_features]],
            gamma_c,
        })
    }

    pub fn n_features(&self) -> usize {
        self.w[0].len()
    }

    pub fn all_finite(&self) -> bool {
        self.w.iter().flatten().all(|x| x.is_finite())
    }
}

/// Action probabilities implied by epsilon-greedy at the state where the
/// action was drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorDistribution<F> {
    probs: [F; N_ACTIONS],
}

impl<F: Scalar> BehaviorDistribution<F> {
    pub fn new(probs: [F; N_ACTIONS]) -> Result<Self> {
        let sum = probs[0] + probs[1];
        if probs.iter().any(|&p| !(p >= F::zero())) || (sum - F::one()).abs() > lit(1e-6) {
            return Err(Error::contract(format!(
                "behavior {probs:?} is not a probability distribution"
            )));
        }
        Ok(BehaviorDistribution { probs })
    }

    pub fn probs(&self) -> [F; N_ACTIONS] {
        self.probs
    }

    pub fn prob(&self, a: Action) -> F {
        self.probs[a.index()]
    }
}

/// Floors a transformed prediction to its cell, tolerating rounding just below
/// an integer. Values must lie in `[0, CELLS_PER_GVF)`.
pub fn prediction_cell<F: Scalar>(v: F) -> Result<usize> {
    if !(v >= F::zero() && v < lit(CELLS_PER_GVF as f64)) {
        return Err(Error::contract(format!(
            "transformed prediction {v} outside [0, {CELLS_PER_GVF})"
        )));
    }
    let snapped = (v + v.max(F::one()) * F::epsilon() * lit(CELL_SNAP_ULPS)).floor();
    Ok(snapped.to_usize().unwrap().min(CELLS_PER_GVF - 1))
}

/// Index of the joint cell of two transformed predictions:
/// `cell(v0) + 10 * cell(v1)`.
pub fn prediction_index<F: Scalar>(v: [F; 2]) -> Result<usize> {
    Ok(prediction_cell(v[0])? + CELLS_PER_GVF * prediction_cell(v[1])?)
}

/// State aggregation over two transformed predictions: one-hot of length `memsize`.
pub fn aggregate_predictions<F: Scalar>(v: [F; 2], memsize: usize) -> Result<Features<F>> {
    let i = prediction_index(v)?;
    if i >= memsize {
        return Err(Error::contract(format!(
            "aggregation index {i} does not fit memsize {memsize}"
        )));
    }
    Features::one_hot(i, memsize)
}

/// GVF state: one-hot over growth bit x action x prediction cell, with index
/// `growth + 2 * action + 4 * (cell(v0) + 10 * cell(v1))`.
pub fn gvf_feature<F: Scalar>(obs: Observation, a: Action, v: [F; 2]) -> Result<Features<F>> {
    let i = obs.growth() as usize + OBS_LEN * a.index() + OBS_LEN * N_ACTIONS * prediction_index(v)?;
    Features::one_hot(i, GVF_FEATURES)
}

/// Observation aggregation: `[1,0]` is cell 0, `[0,1]` is cell 1.
pub fn obs_feature<F: Scalar>(obs: Observation) -> Features<F> {
    Features::one_hot(obs.active_index(), OBS_LEN).expect("observation index in range")
}

/// Raw predictions as a dense control state, optionally followed by the two
/// observation cells.
pub fn raw_prediction_state<F: Scalar>(
    v: &[F],
    obs: Observation,
    include_obs: bool,
) -> Features<F> {
    let base = Features::dense(v);
    if include_obs {
        base.concat(&obs_feature(obs))
    } else {
        base
    }
}

/// `Q(s, a)` for both actions.
pub fn q_values<F: Scalar>(w: &QWeights<F>, s: &Features<F>) -> Result<[F; N_ACTIONS]> {
    Ok([s.dot(&w.w[0])?, s.dot(&w.w[1])?])
}

/// Actions attaining the maximum of `q`, in index order.
pub fn greedy_set<F: Scalar>(q: &[F; N_ACTIONS]) -> ([bool; N_ACTIONS], usize) {
    let max = q[0].max(q[1]);
    let mask = [q[0] == max, q[1] == max];
    (mask, mask.iter().filter(|&&m| m).count())
}

/// Exact epsilon-greedy distribution:
/// `b(a) = eps / |A| + (1 - eps) [a in argmax] / |argmax|`.
pub fn behavior_distribution<F: Scalar>(q: &[F; N_ACTIONS], epsilon: F) -> BehaviorDistribution<F> {
    let (mask, n_max) = greedy_set(q);
    let n_actions = lit::<F>(N_ACTIONS as f64);
    let share = (F::one() - epsilon) / F::from_usize(n_max).unwrap();
    let probs = [0, 1].map(|a| epsilon / n_actions + if mask[a] { share } else { F::zero() });
    BehaviorDistribution { probs }
}

/// Epsilon-greedy selection with uniform random tie-breaking among maximizers.
///
/// Draws one uniform number for the exploration test, then one index either
/// among all actions (explore) or among the maximizers when there is a tie.
pub fn select_action<F: Scalar, R: Rng + ?Sized>(
    q: &[F; N_ACTIONS],
    epsilon: F,
    rng: &mut R,
) -> (Action, BehaviorDistribution<F>) {
    let dist = behavior_distribution(q, epsilon);
    let (mask, n_max) = greedy_set(q);
    let explore = rng.gen::<f64>() < epsilon.to_f64().unwrap();
    let index = if explore {
        rng.gen_range(0..N_ACTIONS)
    } else if n_max > 1 {
        let k = rng.gen_range(0..n_max);
        (0..N_ACTIONS).filter(|&a| mask[a]).nth(k).unwrap()
    } else {
        mask.iter().position(|&m| m).unwrap()
    };
    (Action::from_index(index).unwrap(), dist)
}

/// One Q-learning update in place; returns
/// `delta = r + gamma_c max_a' Q(s', a') - Q(s, a)`.
pub fn q_learning_update<F: Scalar>(
    w: &mut QWeights<F>,
    s: &Features<F>,
    a: Action,
    r: F,
    s_next: &Features<F>,
    alpha: F,
) -> Result<F> {
    let delta = control_td_error(w, s, a, r, s_next)?;
    s.scaled_add_to(&mut w.w[a.index()], alpha * delta)?;
    Ok(delta)
}

/// The Q-learning TD error without updating anything.
pub fn control_td_error<F: Scalar>(
    w: &QWeights<F>,
    s: &Features<F>,
    a: Action,
    r: F,
    s_next: &Features<F>,
) -> Result<F> {
    let next = q_values(w, s_next)?;
    let delta = r + w.gamma_c * next[0].max(next[1]) - s.dot(&w.w[a.index()])?;
    ensure_finite(delta, "control TD error")
}
