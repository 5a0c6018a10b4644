//! Linear general value functions learned by off-policy TD(0).
//!
//! Each GVF predicts the discounted sum of a cumulant under a target policy.
//! The two "echo" GVFs of the expert agent accumulate an observation bit and
//! stop accumulating once that bit fires, so their value is `0.9^k` where `k`
//! is the number of steps until the event (minus one). Taking a base-0.9
//! logarithm turns that back into a step count.

use crate::control::BehaviorDistribution;
use crate::env::{self, Action, EnvState, Observation, N_ACTIONS, N_PHASES};
use crate::features::Features;
use crate::scalar::{ensure_finite, lit, Scalar};
use crate::{Error, Result};

/// Lower bound applied to predictions so the log transform is defined.
pub const V_FLOOR: f64 = 1e-6;
/// Continuation discount used by every GVF in this crate.
pub const GVF_GAMMA: f64 = 0.9;
/// Default upper clip of the log transform (prediction cells 0..=9).
pub const T_MAX: f64 = 9.0;

/// Linear value weights over the GVF feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct GvfWeights<F> {
    pub w: Vec<F>,
}

impl<F: Scalar> GvfWeights<F> {
    pub fn zeros(len: usize) -> Self {
        GvfWeights {
            w: vec![F::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite())
    }
}

/// How a GVF discounts future cumulants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscountSpec<F> {
    /// Constant discount.
    Fixed { gamma: F },
    /// Discount drops to 0 on the step the cumulant fires (c = 1).
    EventTerminated { gamma: F },
}

impl<F: Scalar> DiscountSpec<F> {
    pub fn new_fixed(gamma: F) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(DiscountSpec::Fixed { gamma })
    }

    pub fn new_event_terminated(gamma: F) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(DiscountSpec::EventTerminated { gamma })
    }

    /// Discount applied to the next prediction given the cumulant just received.
    pub fn discount(self, c: F) -> F {
        match self {
            DiscountSpec::Fixed { gamma } => gamma,
            DiscountSpec::EventTerminated { gamma } => echo_discount(c, gamma),
        }
    }
}

fn check_gamma<F: Scalar>(gamma: F) -> Result<()> {
    if gamma >= F::zero() && gamma < F::one() {
        Ok(())
    } else {
        Err(Error::contract(format!("discount {gamma} outside [0, 1)")))
    }
}

/// Where a GVF's cumulant comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CumulantSpec {
    /// The observation component `event_bit` (0 = growth, 1 = no growth).
    EchoBit { event_bit: usize },
    /// A learned sigmoid of the observation (see [`crate::meta::cumulant`]).
    Parameterized,
}

/// Action distribution a GVF's prediction is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPolicy<F> {
    probs: [F; N_ACTIONS],
}

impl<F: Scalar> TargetPolicy<F> {
    /// Validates non-negativity and normalization (to 1e-9, or a few ulps for `f32`).
    pub fn new(probs: [F; N_ACTIONS]) -> Result<Self> {
        let sum = probs.iter().fold(F::zero(), |a, &p| a + p);
        let tol = lit::<F>(1e-9).max(F::epsilon() * lit(8.0));
        if probs.iter().any(|&p| !(p >= F::zero())) || (sum - F::one()).abs() > tol {
            return Err(Error::contract(format!(
                "target policy {probs:?} is not a probability distribution"
            )));
        }
        Ok(TargetPolicy { probs })
    }

    /// Deterministic policy that always takes `action`.
    pub fn always(action: Action) -> Self {
        let mut probs = [F::zero(); N_ACTIONS];
        probs[action.index()] = F::one();
        TargetPolicy { probs }
    }

    pub fn probs(&self) -> [F; N_ACTIONS] {
        self.probs
    }

    pub fn prob(&self, action: Action) -> F {
        self.probs[action.index()]
    }

    /// The action with probability 1, if the policy is deterministic.
    pub fn deterministic_action(&self) -> Option<Action> {
        Action::ALL
            .into_iter()
            .find(|&a| self.probs[a.index()] == F::one())
    }
}

/// Echo cumulant: the observation component selected by `spec`.
pub fn echo_cumulant<F: Scalar>(obs: Observation, spec: CumulantSpec) -> Result<F> {
    match spec {
        CumulantSpec::EchoBit { event_bit } => Ok(F::from_u8(obs.bit(event_bit)?).unwrap()),
        CumulantSpec::Parameterized => Err(Error::contract(
            "echo_cumulant requires an echo-bit cumulant spec",
        )),
    }
}

/// Echo discount: 0 once the event fires, `gamma` otherwise.
pub fn echo_discount<F: Scalar>(c: F, gamma: F) -> F {
    if c == F::one() {
        F::zero()
    } else {
        gamma
    }
}

/// Linear prediction `w . x`, floored at [`V_FLOOR`].
pub fn predict<F: Scalar>(w: &GvfWeights<F>, x: &Features<F>) -> Result<F> {
    Ok(x.dot(&w.w)?.max(lit(V_FLOOR)))
}

/// Per-step importance ratio `target(a) / behavior(a)`.
pub fn importance_ratio<F: Scalar>(
    target: &TargetPolicy<F>,
    behavior: &BehaviorDistribution<F>,
    a: Action,
) -> Result<F> {
    let b = behavior.prob(a);
    if b <= F::zero() {
        return Err(Error::UnsupportedAction(a.index()));
    }
    Ok(target.prob(a) / b)
}

/// One off-policy TD(0) update, in place. Returns the TD error
/// `c + gamma_next * w.x_next - w.x_t`; the weights move by
/// `alpha * rho * delta * x_t`.
pub fn td_update<F: Scalar>(
    w: &mut GvfWeights<F>,
    x_t: &Features<F>,
    x_next: &Features<F>,
    c: F,
    gamma_next: F,
    rho: F,
    alpha: F,
) -> Result<F> {
    for (x, what) in [
        (c, "cumulant"),
        (gamma_next, "discount"),
        (rho, "importance ratio"),
        (alpha, "step size"),
    ] {
        ensure_finite(x, what)?;
    }
    if alpha < F::zero() || rho < F::zero() {
        return Err(Error::contract(format!(
            "td_update needs alpha >= 0 and rho >= 0 (got {alpha}, {rho})"
        )));
    }
    let delta = c + gamma_next * x_next.dot(&w.w)? - x_t.dot(&w.w)?;
    ensure_finite(delta, "GVF TD error")?;
    x_t.scaled_add_to(&mut w.w, alpha * rho * delta)?;
    Ok(delta)
}

/// `clip(log(v) / log(0.9), 0, t_max)`: the number of steps until the event
/// encoded by an echo prediction.
pub fn log_transform<F: Scalar>(v: F, t_max: F) -> Result<F> {
    if !(v > F::zero()) {
        return Err(Error::contract(format!(
            "log transform of non-positive prediction {v}"
        )));
    }
    Ok((v.ln() / lit::<F>(GVF_GAMMA).ln()).max(F::zero()).min(t_max))
}

/// Exact value of an echo GVF at each hidden phase under a deterministic target
/// policy, by fixed-point iteration of `v(s) = c + gamma(c) v(s')` around the cycle.
pub fn dp_oracle<F: Scalar>(
    target: &TargetPolicy<F>,
    spec: CumulantSpec,
    gamma: F,
) -> Result<[F; N_PHASES]> {
    const TOL: f64 = 1e-12;
    const MAX_SWEEPS: usize = 10_000;
    let action = target
        .deterministic_action()
        .ok_or_else(|| Error::contract("dp_oracle requires a deterministic target policy"))?;
    let discount = DiscountSpec::new_event_terminated(gamma)?;
    let transitions: Vec<(F, F, usize)> = (0..N_PHASES)
        .map(|p| {
            let out = env::step(EnvState::new(p)?, action);
            let c = echo_cumulant::<F>(out.observation, spec)?;
            Ok((c, discount.discount(c), out.next_state.phase()))
        })
        .collect::<Result<_>>()?;
    let mut v = [F::zero(); N_PHASES];
    for _ in 0..MAX_SWEEPS {
        let mut change = F::zero();
        for (p, &(c, g, next)) in transitions.iter().enumerate() {
            let new = c + g * v[next];
            change = change.max((new - v[p]).abs());
            v[p] = new;
        }
        if change <= lit(TOL) {
            break;
        }
    }
    Ok(v)
}

/// The two expert echo GVFs: time until growth and time until no growth,
/// both under the always-water target policy.
pub fn expert_cumulants() -> [CumulantSpec; 2] {
    [
        CumulantSpec::EchoBit { event_bit: 0 },
        CumulantSpec::EchoBit { event_bit: 1 },
    ]
}
