//! The per-step agent cycle in three configurations.
//!
//! Time indexing: at step `t` the agent holds control state `s_t`, predictions
//! `v_t`, and the previous GVF state `x_{t-1}`. One step
//!
//! 1. selects `a_t` epsilon-greedily from `s_t`, recording `b_t`;
//! 2. steps the environment, receiving `r_{t+1}` and `o_{t+1}`;
//! 3. forms the GVF state `x_t = (o_{t+1}, a_t, cells(v_t))`;
//! 4. (meta only) takes a meta-gradient step on the unrolled loss;
//! 5. updates every GVF by TD(0) along `x_{t-1} -> x_t`, with the cumulant and
//!    discount read from `o_{t+1}` and `rho = pi(a_t) / b_t(a_t)`;
//! 6. predicts `v_{t+1} = w . x_t` and builds `s_{t+1}`;
//! 7. updates Q on `(s_t, a_t, r_{t+1}, s_{t+1})`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::control::{
    aggregate_predictions, control_td_error, gvf_feature, obs_feature, q_learning_update,
    q_values, raw_prediction_state, select_action, QWeights, GVF_FEATURES, PREDICTION_CELLS,
};
use crate::env::{self, Action, EnvState, Observation, N_ACTIONS, N_PHASES, OBS_LEN};
use crate::features::Features;
use crate::gvf::{
    dp_oracle, echo_cumulant, echo_discount, expert_cumulants, importance_ratio, log_transform,
    predict, td_update, CumulantSpec, GvfWeights, TargetPolicy, GVF_GAMMA, T_MAX, V_FLOOR,
};
use crate::meta::{cumulant, meta_grad, meta_update, policy, MetaParams, MetaStepContext, MetaWeights, UnrollFeatures};
use crate::scalar::{lit, Scalar};
use crate::{Error, Result};

/// Number of GVFs of the expert and meta agents.
pub const N_GVFS: usize = 2;

/// Which state the control agent learns from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    /// Aggregation of the last observation only.
    ObsOnly,
    /// Aggregation of two hand-designed echo GVFs (log-transformed).
    Expert,
    /// Linear control on two GVFs whose questions are meta-learned.
    Meta,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::ObsOnly, AgentKind::Expert, AgentKind::Meta];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::ObsOnly => "obs-only",
            AgentKind::Expert => "expert",
            AgentKind::Meta => "meta",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        AgentKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn n_gvfs(self) -> usize {
        match self {
            AgentKind::ObsOnly => 0,
            AgentKind::Expert | AgentKind::Meta => N_GVFS,
        }
    }
}

/// Hyperparameters of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig<F> {
    pub kind: AgentKind,
    pub epsilon: F,
    pub alpha_control: F,
    pub alpha_gvfs: F,
    pub alpha_pi: F,
    pub alpha_c: F,
    pub lambda: F,
    pub gamma_c: F,
    /// Upper clip of the log transform (expert) or raw value (meta) before
    /// the prediction is cut into cells.
    pub t_max: F,
    /// Length of the prediction aggregation (expert control state).
    pub memsize: usize,
    /// Append the two observation cells to prediction-based control states.
    pub obs_in_control: bool,
    pub unroll: UnrollFeatures,
}

impl<F: Scalar> AgentConfig<F> {
    /// The tuned parameters reported for each agent configuration.
    pub fn table1(kind: AgentKind) -> Self {
        let (epsilon, alpha_control) = match kind {
            AgentKind::ObsOnly | AgentKind::Expert => (0.1, 0.01),
            AgentKind::Meta => (0.5, 0.0001),
        };
        AgentConfig {
            kind,
            epsilon: lit(epsilon),
            alpha_control: lit(alpha_control),
            alpha_gvfs: lit(0.1),
            alpha_pi: lit(0.001),
            alpha_c: lit(0.1),
            lambda: lit(0.001),
            gamma_c: lit(0.9),
            t_max: lit(T_MAX),
            memsize: PREDICTION_CELLS,
            obs_in_control: true,
            unroll: UnrollFeatures::Same,
        }
    }

    /// Greedy, non-learning copy used for evaluation.
    pub fn frozen(&self) -> Self {
        AgentConfig {
            epsilon: F::zero(),
            alpha_control: F::zero(),
            alpha_gvfs: F::zero(),
            alpha_pi: F::zero(),
            alpha_c: F::zero(),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: F| x >= F::zero() && x <= F::one();
        if !in_unit(self.epsilon) {
            return Err(Error::config("epsilon", format!("{} outside [0, 1]", self.epsilon)));
        }
        for (key, x) in [
            ("alpha_control", self.alpha_control),
            ("alpha_gvfs", self.alpha_gvfs),
            ("alpha_pi", self.alpha_pi),
            ("alpha_c", self.alpha_c),
            ("lambda", self.lambda),
        ] {
            if !(x >= F::zero() && x.is_finite()) {
                return Err(Error::config(key, format!("{x} must be finite and non-negative")));
            }
        }
        if !(self.gamma_c >= F::zero() && self.gamma_c < F::one()) {
            return Err(Error::config("gamma_c", format!("{} outside [0, 1)", self.gamma_c)));
        }
        if !(self.t_max > F::zero() && self.t_max < lit(10.0)) {
            return Err(Error::config("t_max", format!("{} outside (0, 10)", self.t_max)));
        }
        if self.memsize < PREDICTION_CELLS {
            return Err(Error::config(
                "memsize",
                format!("{} is below the {PREDICTION_CELLS} prediction cells", self.memsize),
            ));
        }
        Ok(())
    }

    fn meta_params(&self) -> MetaParams<F> {
        MetaParams {
            alpha_gvf: self.alpha_gvfs,
            gamma_gvf: lit(GVF_GAMMA),
            lambda: self.lambda,
        }
    }
}

/// Everything a running agent owns.
#[derive(Debug, Clone)]
pub struct AgentState<F> {
    pub env: EnvState,
    /// Most recent observation.
    pub obs: Observation,
    pub last_action: Action,
    /// Most recent GVF state (`None` for the observation-only agent).
    pub gvf_state: Option<Features<F>>,
    /// Current predictions, one per GVF.
    pub predictions: Vec<F>,
    pub control_state: Features<F>,
    pub q: QWeights<F>,
    pub gvfs: Vec<GvfWeights<F>>,
    pub meta: Vec<MetaWeights<F>>,
    pub rng: ChaCha8Rng,
    /// Steps taken so far.
    pub t: u64,
}

impl<F: Scalar> AgentState<F> {
    /// True if every learned weight is finite.
    pub fn all_finite(&self) -> bool {
        self.q.all_finite()
            && self.gvfs.iter().all(GvfWeights::all_finite)
            && self.meta.iter().all(MetaWeights::all_finite)
    }
}

/// A stage of the step cycle, recorded in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Meta,
    Gvf,
    Control,
}

/// What one step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<F> {
    /// Hidden phase the action was taken in.
    pub phase: usize,
    pub action: Action,
    pub reward: F,
    pub delta_control: F,
    pub delta_gvf: SmallVec<[F; N_GVFS]>,
    pub cumulants: SmallVec<[F; N_GVFS]>,
    pub target_policies: SmallVec<[[F; N_ACTIONS]; N_GVFS]>,
    /// Learning stages that ran, in order.
    pub stages: SmallVec<[Stage; 3]>,
}

/// Length of the control feature vector for `config`.
pub fn n_control_features<F: Scalar>(config: &AgentConfig<F>) -> usize {
    let obs = if config.obs_in_control { OBS_LEN } else { 0 };
    match config.kind {
        AgentKind::ObsOnly => OBS_LEN,
        AgentKind::Expert => config.memsize + obs,
        AgentKind::Meta => N_GVFS + obs,
    }
}

/// Coordinates the GVF state is cut into cells from: log-transformed
/// predictions for the expert, raw predictions (clipped) for the meta agent.
pub fn prediction_coordinates<F: Scalar>(config: &AgentConfig<F>, v: &[F]) -> Result<[F; N_GVFS]> {
    let mut out = [F::zero(); N_GVFS];
    for (o, &x) in out.iter_mut().zip(v) {
        *o = match config.kind {
            AgentKind::Meta => x.max(F::zero()).min(config.t_max),
            _ => log_transform(x, config.t_max)?,
        };
    }
    Ok(out)
}

/// Control state built from the current predictions and observation.
pub fn control_state<F: Scalar>(config: &AgentConfig<F>, v: &[F], obs: Observation) -> Result<Features<F>> {
    Ok(match config.kind {
        AgentKind::ObsOnly => obs_feature(obs),
        AgentKind::Expert => {
            let cells = aggregate_predictions(prediction_coordinates(config, v)?, config.memsize)?;
            if config.obs_in_control {
                cells.concat(&obs_feature(obs))
            } else {
                cells
            }
        }
        AgentKind::Meta => raw_prediction_state(v, obs, config.obs_in_control),
    })
}

fn gvf_state<F: Scalar>(
    config: &AgentConfig<F>,
    obs: Observation,
    a: Action,
    v: &[F],
) -> Result<Option<Features<F>>> {
    if config.kind.n_gvfs() == 0 {
        return Ok(None);
    }
    Ok(Some(gvf_feature(obs, a, prediction_coordinates(config, v)?)?))
}

/// Cumulant, discount, and target policy of GVF `i` given the new observation.
fn question<F: Scalar>(
    config: &AgentConfig<F>,
    meta: &[MetaWeights<F>],
    i: usize,
    obs: Observation,
) -> Result<(F, F, TargetPolicy<F>)> {
    let gamma = lit(GVF_GAMMA);
    match config.kind {
        AgentKind::Expert => {
            let c = echo_cumulant(obs, expert_cumulants()[i])?;
            Ok((c, echo_discount(c, gamma), TargetPolicy::always(Action::Water)))
        }
        AgentKind::Meta => Ok((cumulant(&meta[i].w_c, obs), gamma, policy(&meta[i].w_pi))),
        AgentKind::ObsOnly => Err(Error::contract("observation-only agent has no GVFs")),
    }
}

/// Fresh agent: zero weights, environment reset, and an initial action drawn
/// epsilon-greedily from the all-zero Q (uniform). The initial action only
/// fills the action slot of the first GVF state; the environment is not
/// stepped until [`agent_step`].
pub fn init_agent<F: Scalar>(config: &AgentConfig<F>, seed: u64) -> Result<AgentState<F>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (env, obs) = env::reset(seed);
    let n = config.kind.n_gvfs();
    let predictions = vec![lit(V_FLOOR); n];
    let control_state = control_state(config, &predictions, obs)?;
    let q = QWeights::zeros(n_control_features(config), config.gamma_c)?;
    let (a0, _) = select_action(&q_values(&q, &control_state)?, config.epsilon, &mut rng);
    Ok(AgentState {
        env,
        obs,
        last_action: a0,
        gvf_state: gvf_state(config, obs, a0, &predictions)?,
        predictions,
        control_state,
        q,
        gvfs: vec![GvfWeights::zeros(GVF_FEATURES); n],
        meta: vec![MetaWeights::zeros(); if config.kind == AgentKind::Meta { n } else { 0 }],
        rng,
        t: 0,
    })
}

/// One full cycle of the agent (see the module docs for the order).
pub fn agent_step<F: Scalar>(state: &mut AgentState<F>, config: &AgentConfig<F>) -> Result<StepReport<F>> {
    let q_now = q_values(&state.q, &state.control_state)?;
    let (a, behavior) = select_action(&q_now, config.epsilon, &mut state.rng);
    let phase = state.env.phase();
    let out = env::step(state.env, a);
    let reward = F::from_u8(out.reward).unwrap();
    let obs = out.observation;
    let x_new = gvf_state(config, obs, a, &state.predictions)?;
    let mut stages = SmallVec::new();

    let learn_meta = config.alpha_pi > F::zero() || config.alpha_c > F::zero();
    if config.kind == AgentKind::Meta && learn_meta {
        let x_eval = x_new.as_ref().expect("meta agent has GVF state");
        let x_update = match config.unroll {
            UnrollFeatures::Same => x_eval,
            UnrollFeatures::TrueNext => state.gvf_state.as_ref().expect("meta agent has GVF state"),
        };
        let ctx = MetaStepContext {
            obs,
            action: a,
            behavior_prob: behavior.prob(a),
            x_update,
            x_eval,
            reward,
            control: &state.q,
            control_state: &state.control_state,
            gvfs: &state.gvfs,
            include_obs: config.obs_in_control,
            params: config.meta_params(),
        };
        let grad = meta_grad(&ctx, &state.meta)?;
        for (m, g) in state.meta.iter_mut().zip(&grad.per_gvf) {
            meta_update(m, g, config.alpha_pi, config.alpha_c)?;
        }
        stages.push(Stage::Meta);
    }

    let mut delta_gvf = SmallVec::new();
    let mut cumulants = SmallVec::new();
    let mut target_policies = SmallVec::new();
    if let (Some(x_prev), Some(x_next)) = (&state.gvf_state, &x_new) {
        for i in 0..state.gvfs.len() {
            let (c, gamma, target) = question(config, &state.meta, i, obs)?;
            let rho = importance_ratio(&target, &behavior, a)?;
            let delta = if config.alpha_gvfs > F::zero() {
                td_update(&mut state.gvfs[i], x_prev, x_next, c, gamma, rho, config.alpha_gvfs)?
            } else {
                c + gamma * x_next.dot(&state.gvfs[i].w)? - x_prev.dot(&state.gvfs[i].w)?
            };
            delta_gvf.push(delta);
            cumulants.push(c);
            target_policies.push(target.probs());
        }
        if config.alpha_gvfs > F::zero() {
            stages.push(Stage::Gvf);
        }
    }

    let predictions = match &x_new {
        Some(x) => state
            .gvfs
            .iter()
            .map(|w| predict(w, x))
            .collect::<Result<Vec<F>>>()?,
        None => Vec::new(),
    };
    let s_next = control_state(config, &predictions, obs)?;
    let delta_control = if config.alpha_control > F::zero() {
        stages.push(Stage::Control);
        q_learning_update(&mut state.q, &state.control_state, a, reward, &s_next, config.alpha_control)?
    } else {
        control_td_error(&state.q, &state.control_state, a, reward, &s_next)?
    };

    state.env = out.next_state;
    state.obs = obs;
    state.last_action = a;
    state.gvf_state = x_new;
    state.predictions = predictions;
    state.control_state = s_next;
    state.t += 1;
    Ok(StepReport {
        phase,
        action: a,
        reward,
        delta_control,
        delta_gvf,
        cumulants,
        target_policies,
        stages,
    })
}

/// Evaluation copy of a configuration: greedy and with every step size zero.
pub fn freeze_eval<F: Scalar>(config: &AgentConfig<F>) -> AgentConfig<F> {
    config.frozen()
}

/// Exact expert echo-GVF values per hidden phase, `[growth, no growth]`.
pub fn expert_oracle<F: Scalar>() -> Result<[[F; N_GVFS]; N_PHASES]> {
    let water = TargetPolicy::always(Action::Water);
    let specs: [CumulantSpec; N_GVFS] = expert_cumulants();
    let g = dp_oracle(&water, specs[0], lit(GVF_GAMMA))?;
    let ng = dp_oracle(&water, specs[1], lit(GVF_GAMMA))?;
    Ok([0, 1, 2, 3].map(|p| [g[p], ng[p]]))
}

/// An expert agent sitting at the oracle fixed point at the start of phase 0:
/// GVF weights hold the exact echo values on the four GVF states the optimal
/// policy cycles through, and Q prefers the rewarded action in each of the
/// four aggregated states.
pub fn expert_fixed_point<F: Scalar>(config: &AgentConfig<F>, seed: u64) -> Result<AgentState<F>> {
    if config.kind != AgentKind::Expert {
        return Err(Error::contract("expert_fixed_point needs an expert configuration"));
    }
    let oracle = expert_oracle::<F>()?;
    let mut state = init_agent(config, seed)?;
    for p in 0..N_PHASES {
        let phase = EnvState::new(p)?;
        let a = env::optimal_action(phase);
        let out = env::step(phase, a);
        let x = gvf_feature(out.observation, a, prediction_coordinates(config, &oracle[p])?)?;
        let i = x.one_hot_index().expect("GVF state is one-hot");
        let next = out.next_state.phase();
        for (g, w) in state.gvfs.iter_mut().enumerate() {
            w.w[i] = oracle[next][g];
        }
        let cells = aggregate_predictions(prediction_coordinates(config, &oracle[p])?, config.memsize)?;
        let j = cells.one_hot_index().expect("aggregation is one-hot");
        state.q.w[a.index()][j] = F::one();
        if p == N_PHASES - 1 {
            state.gvf_state = Some(x);
        }
    }
    let (env, _) = env::reset(seed);
    state.env = env;
    state.obs = Observation::GROWTH;
    state.last_action = env::optimal_action(EnvState::new(N_PHASES - 1)?);
    state.predictions = oracle[0].to_vec();
    state.control_state = control_state(config, &state.predictions, state.obs)?;
    Ok(state)
}
