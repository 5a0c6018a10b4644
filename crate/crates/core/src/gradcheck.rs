//! Finite-difference verification of the analytic meta-gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{raw_prediction_state, QWeights, GVF_FEATURES};
use crate::env::{Action, Observation};
use crate::features::Features;
use crate::gvf::GvfWeights;
use crate::meta::{meta_grad, policy, unrolled_loss, MetaParams, MetaStepContext, MetaWeights};
use crate::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Contexts whose greedy action at the unrolled state is decided by less than
/// this Q-value margin are redrawn: the loss has a kink there and a central
/// difference straddling it measures neither side.
pub const MIN_Q_MARGIN: f64 = 1e-3;
/// Denominator floor of the relative error, so exactly-zero gradients compare
/// as absolute errors.
const REL_FLOOR: f64 = 1e-8;

/// One randomly drawn replay step with everything it borrows.
#[derive(Debug, Clone)]
pub struct RandomContext {
    pub obs: Observation,
    pub action: Action,
    pub behavior_prob: f64,
    pub x: Features<f64>,
    pub reward: f64,
    pub control: QWeights<f64>,
    pub control_state: Features<f64>,
    pub gvfs: Vec<GvfWeights<f64>>,
    pub meta: Vec<MetaWeights<f64>>,
    pub params: MetaParams<f64>,
}

impl RandomContext {
    /// Weights uniform in [-1, 1], one-hot GVF features, and a behavior
    /// probability chosen so the importance ratio lies in (0, 10).
    pub fn draw<R: Rng>(rng: &mut R, lambda: f64) -> Self {
        const N_GVFS: usize = 2;
        let mut unit = || rng.gen_range(-1.0..=1.0);
        let meta: Vec<MetaWeights<f64>> = (0..N_GVFS)
            .map(|_| MetaWeights {
                w_pi: [unit(), unit()],
                w_c: [unit(), unit()],
            })
            .collect();
        let n_control = N_GVFS + 2;
        let control = QWeights {
            w: [
                (0..n_control).map(|_| unit()).collect(),
                (0..n_control).map(|_| unit()).collect(),
            ],
            gamma_c: 0.9,
        };
        let gvfs = (0..N_GVFS)
            .map(|_| GvfWeights {
                w: (0..GVF_FEATURES).map(|_| unit()).collect(),
            })
            .collect();
        let obs = if rng.gen() { Observation::GROWTH } else { Observation::NO_GROWTH };
        let action = Action::from_index(rng.gen_range(0..2)).unwrap();
        let v_now: Vec<f64> = (0..N_GVFS).map(|_| rng.gen_range(0.0..10.0)).collect();
        let control_state = raw_prediction_state(&v_now, obs, true);
        let x = Features::one_hot(rng.gen_range(0..GVF_FEATURES), GVF_FEATURES).unwrap();
        // The ratio must be in (0, 10) for every GVF, so pick it against the
        // largest target probability and keep b <= 1.
        let pi_max = meta
            .iter()
            .map(|m| policy(&m.w_pi).prob(action))
            .fold(0.0, f64::max);
        let behavior_prob = rng.gen_range(pi_max / 10.0..=1.0f64).max(pi_max / 9.99);
        RandomContext {
            obs,
            action,
            behavior_prob,
            x,
            reward: rng.gen_range(0..2) as f64,
            control,
            control_state,
            gvfs,
            meta,
            params: MetaParams {
                alpha_gvf: 0.1,
                gamma_gvf: 0.9,
                lambda,
            },
        }
    }

    pub fn context(&self) -> MetaStepContext<'_, f64> {
        MetaStepContext {
            obs: self.obs,
            action: self.action,
            behavior_prob: self.behavior_prob,
            x_update: &self.x,
            x_eval: &self.x,
            reward: self.reward,
            control: &self.control,
            control_state: &self.control_state,
            gvfs: &self.gvfs,
            include_obs: true,
            params: self.params,
        }
    }
}

/// Largest relative error between the analytic gradient and central
/// differences over every meta-weight of one context.
pub fn max_relative_error(ctx: &MetaStepContext<'_, f64>, meta: &[MetaWeights<f64>]) -> Result<f64> {
    let analytic = meta_grad(ctx, meta)?;
    let mut worst = 0.0f64;
    for i in 0..meta.len() {
        for j in 0..4 {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut m = meta.to_vec();
                match j {
                    0 | 1 => m[i].w_pi[j] += delta,
                    _ => m[i].w_c[j - 2] += delta,
                }
                unrolled_loss(ctx, &m)
            };
            let numeric = (perturbed(FD_STEP)? - perturbed(-FD_STEP)?) / (2.0 * FD_STEP);
            let g = &analytic.per_gvf[i];
            let exact = if j < 2 { g.w_pi[j] } else { g.w_c[j - 2] };
            let denom = exact.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max((exact - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub n_contexts: usize,
    /// Draws rejected for sitting within [`MIN_Q_MARGIN`] of an argmax tie.
    pub n_redrawn: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }
}

/// Checks `n` random contexts drawn from a ChaCha8 stream seeded with `seed`.
pub fn gradcheck(n: usize, seed: u64, lambda: f64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut redrawn = 0;
    let mut checked = 0;
    while checked < n {
        let rc = RandomContext::draw(&mut rng, lambda);
        if meta_grad(&rc.context(), &rc.meta)?.greedy_margin < MIN_Q_MARGIN {
            redrawn += 1;
            continue;
        }
        worst = worst.max(max_relative_error(&rc.context(), &rc.meta)?);
        checked += 1;
    }
    Ok(GradcheckReport {
        n_contexts: n,
        n_redrawn: redrawn,
        max_relative_error: worst,
        tolerance: TOLERANCE,
    })
}
