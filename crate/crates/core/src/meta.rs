//! Meta-gradient learning of GVF cumulants and target policies.
//!
//! Each learned GVF has a cumulant `c = sigmoid(w_c . o)` and a target policy
//! `pi = softmax(w_pi)`. The meta-weights are trained to reduce the squared
//! control TD error, differentiated through one unrolled GVF update:
//!
//! ```text
//! rho      = pi(a_t) / b(a_t)
//! delta_g  = c + gamma * w.x_e - w.x_u
//! v+       = (w + alpha_gvf * rho * delta_g * x_u) . x_e
//! delta_c  = r + gamma_c * max_a Q(s(v+), a) - Q(s_t, a_t)
//! loss     = delta_c^2 + lambda * (|w_pi|^2 + |w_c|^2)
//! ```
//!
//! `x_u` is the feature vector the unrolled update moves along and `x_e` the
//! one the updated prediction is read at. By default both are the current GVF
//! state (see [`UnrollFeatures`]).

use crate::control::{raw_prediction_state, QWeights};
use crate::env::{Action, Observation, N_ACTIONS, OBS_LEN};
use crate::features::Features;
use crate::gvf::{GvfWeights, TargetPolicy};
use crate::scalar::{ensure_finite, Scalar};
use crate::{Error, Result};

/// Learnable parameters of one GVF's question.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetaWeights<F> {
    /// Policy logits.
    pub w_pi: [F; N_ACTIONS],
    /// Cumulant weights over the observation.
    pub w_c: [F; OBS_LEN],
}

impl<F: Scalar> MetaWeights<F> {
    /// All-zero weights: equiprobable policy and cumulant 0.5.
    pub fn zeros() -> Self {
        MetaWeights {
            w_pi: [F::zero(); N_ACTIONS],
            w_c: [F::zero(); OBS_LEN],
        }
    }

    pub fn squared_norm(&self) -> F {
        self.w_pi
            .iter()
            .chain(&self.w_c)
            .fold(F::zero(), |acc, &x| acc + x * x)
    }

    pub fn all_finite(&self) -> bool {
        self.w_pi.iter().chain(&self.w_c).all(|x| x.is_finite())
    }
}

/// Which features the unrolled GVF update uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnrollFeatures {
    /// Update along and evaluate at the current GVF state.
    #[default]
    Same,
    /// Update along the previous GVF state, evaluate at the current one.
    TrueNext,
}

impl UnrollFeatures {
    pub fn name(self) -> &'static str {
        match self {
            UnrollFeatures::Same => "same",
            UnrollFeatures::TrueNext => "true-next",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "same" => Some(UnrollFeatures::Same),
            "true-next" => Some(UnrollFeatures::TrueNext),
            _ => None,
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Learned cumulant `sigmoid(w_c . o)`.
pub fn cumulant<F: Scalar>(w_c: &[F; OBS_LEN], o: Observation) -> F {
    let o = o.values::<F>();
    sigmoid(w_c[0] * o[0] + w_c[1] * o[1])
}

/// Learned target policy `softmax(w_pi)`, with max-subtraction.
pub fn policy<F: Scalar>(w_pi: &[F; N_ACTIONS]) -> TargetPolicy<F> {
    let m = w_pi[0].max(w_pi[1]);
    let e = w_pi.map(|w| (w - m).exp());
    let z = e[0] + e[1];
    TargetPolicy::new([e[0] / z, e[1] / z]).expect("softmax is a distribution")
}

/// Step sizes and discounts the unroll replays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaParams<F> {
    pub alpha_gvf: F,
    /// Fixed discount of the learned GVFs.
    pub gamma_gvf: F,
    pub lambda: F,
}

/// Everything needed to replay one time step of the agent as a pure function
/// of the meta-weights.
#[derive(Debug, Clone, Copy)]
pub struct MetaStepContext<'a, F> {
    /// Observation the cumulant is computed from (the one the step produced).
    pub obs: Observation,
    pub action: Action,
    /// Behavior probability of `action`, recorded at selection time.
    pub behavior_prob: F,
    /// Features the unrolled GVF update moves along.
    pub x_update: &'a Features<F>,
    /// Features the updated predictions are evaluated (and bootstrapped) at.
    pub x_eval: &'a Features<F>,
    pub reward: F,
    pub control: &'a QWeights<F>,
    /// Control state the action was selected from.
    pub control_state: &'a Features<F>,
    pub gvfs: &'a [GvfWeights<F>],
    /// Whether the control state appends the observation cells to the predictions.
    pub include_obs: bool,
    pub params: MetaParams<F>,
}

/// Gradient of the unrolled loss, one entry per GVF.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaGradient<F> {
    pub per_gvf: Vec<MetaWeights<F>>,
    pub loss: F,
    pub delta_control: F,
    /// `|Q(s+, 0) - Q(s+, 1)|`: how far the unrolled state is from an argmax tie.
    pub greedy_margin: F,
}

struct GvfUnroll<F> {
    c: F,
    pi: [F; N_ACTIONS],
    rho: F,
    delta_g: F,
    overlap: F,
    v_plus: F,
}

struct Unroll<F> {
    gvfs: Vec<GvfUnroll<F>>,
    delta_control: F,
    a_star: usize,
    greedy_margin: F,
    loss: F,
}

fn unroll<F: Scalar>(ctx: &MetaStepContext<'_, F>, meta: &[MetaWeights<F>]) -> Result<Unroll<F>> {
    if meta.len() != ctx.gvfs.len() {
        return Err(Error::contract(format!(
            "{} meta-weight sets for {} GVFs",
            meta.len(),
            ctx.gvfs.len()
        )));
    }
    if !(ctx.behavior_prob > F::zero()) {
        return Err(Error::UnsupportedAction(ctx.action.index()));
    }
    let p = ctx.params;
    let overlap = ctx.x_update.dot_features(ctx.x_eval)?;
    let mut gvfs = Vec::with_capacity(meta.len());
    for (m, w) in meta.iter().zip(ctx.gvfs) {
        let c = cumulant(&m.w_c, ctx.obs);
        let pi = policy(&m.w_pi).probs();
        let rho = pi[ctx.action.index()] / ctx.behavior_prob;
        let pred_eval = ctx.x_eval.dot(&w.w)?;
        let pred_update = ctx.x_update.dot(&w.w)?;
        let delta_g = c + p.gamma_gvf * pred_eval - pred_update;
        let v_plus = pred_eval + p.alpha_gvf * rho * delta_g * overlap;
        gvfs.push(GvfUnroll {
            c,
            pi,
            rho,
            delta_g,
            overlap,
            v_plus: ensure_finite(v_plus, "unrolled prediction")?,
        });
    }
    let v_plus: Vec<F> = gvfs.iter().map(|g| g.v_plus).collect();
    let s_plus = raw_prediction_state(&v_plus, ctx.obs, ctx.include_obs);
    let q_plus = crate::control::q_values(ctx.control, &s_plus)?;
    let a_star = if q_plus[0] >= q_plus[1] { 0 } else { 1 };
    let q_now = ctx.control_state.dot(&ctx.control.w[ctx.action.index()])?;
    let delta_control = ensure_finite(
        ctx.reward + ctx.control.gamma_c * q_plus[a_star] - q_now,
        "unrolled control TD error",
    )?;
    let l2 = meta.iter().fold(F::zero(), |acc, m| acc + m.squared_norm());
    let loss = ensure_finite(delta_control * delta_control + p.lambda * l2, "meta loss")?;
    Ok(Unroll {
        gvfs,
        delta_control,
        a_star,
        greedy_margin: (q_plus[0] - q_plus[1]).abs(),
        loss,
    })
}

/// The unrolled meta loss as a pure function of the meta-weights.
pub fn unrolled_loss<F: Scalar>(ctx: &MetaStepContext<'_, F>, meta: &[MetaWeights<F>]) -> Result<F> {
    Ok(unroll(ctx, meta)?.loss)
}

/// Analytic semi-gradient of [`unrolled_loss`]: the greedy action at the
/// unrolled state and the control weights are held fixed.
pub fn meta_grad<F: Scalar>(
    ctx: &MetaStepContext<'_, F>,
    meta: &[MetaWeights<F>],
) -> Result<MetaGradient<F>> {
    let u = unroll(ctx, meta)?;
    let p = ctx.params;
    let two = F::one() + F::one();
    let a = ctx.action.index();
    let o = ctx.obs.values::<F>();
    let theta = &ctx.control.w[u.a_star];
    let per_gvf = meta
        .iter()
        .zip(&u.gvfs)
        .enumerate()
        .map(|(i, (m, g))| {
            // d delta_control / d v+_i.
            let g_v = ctx.control.gamma_c * theta[i];
            let k = two * u.delta_control * g_v;
            let dv_dc = p.alpha_gvf * g.rho * g.overlap;
            let dv_drho = p.alpha_gvf * g.delta_g * g.overlap;
            let dc_dz = g.c * (F::one() - g.c);
            let grad_c = [0, 1].map(|j| k * dv_dc * dc_dz * o[j] + two * p.lambda * m.w_c[j]);
            let grad_pi = [0, 1].map(|j| {
                let indicator = if j == a { F::one() } else { F::zero() };
                let drho = g.pi[a] * (indicator - g.pi[j]) / ctx.behavior_prob;
                k * dv_drho * drho + two * p.lambda * m.w_pi[j]
            });
            MetaWeights {
                w_pi: grad_pi,
                w_c: grad_c,
            }
        })
        .collect();
    Ok(MetaGradient {
        per_gvf,
        loss: u.loss,
        delta_control: u.delta_control,
        greedy_margin: u.greedy_margin,
    })
}

/// Plain gradient-descent step on one GVF's meta-weights.
pub fn meta_update<F: Scalar>(
    meta: &mut MetaWeights<F>,
    grad: &MetaWeights<F>,
    alpha_pi: F,
    alpha_c: F,
) -> Result<()> {
    for j in 0..N_ACTIONS {
        meta.w_pi[j] -= alpha_pi * grad.w_pi[j];
    }
    for j in 0..OBS_LEN {
        meta.w_c[j] -= alpha_c * grad.w_c[j];
    }
    if meta.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what: "meta-weights" })
    }
}
