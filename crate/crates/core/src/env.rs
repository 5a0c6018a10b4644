//! Monsoon World: a deterministic four-phase season cycle.
//!
//! Phases 0 and 1 are monsoon, phases 2 and 3 are drought. Watering during a
//! drought or holding off during a monsoon earns reward 1; anything else earns
//! 0. Time advances one phase per step regardless of the action. The agent
//! never sees the phase, only whether its last action produced growth.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Number of phases in one season cycle.
pub const N_PHASES: usize = 4;
/// Number of actions.
pub const N_ACTIONS: usize = 2;
/// Length of an observation vector.
pub const OBS_LEN: usize = 2;

/// Season of a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Season {
    Monsoon,
    Drought,
}

/// Returns the season of `phase`; phases outside `0..4` are rejected.
pub fn season_of(phase: usize) -> Result<Season> {
    match phase {
        0 | 1 => Ok(Season::Monsoon),
        2 | 3 => Ok(Season::Drought),
        _ => Err(Error::contract(format!("phase {phase} outside 0..4"))),
    }
}

/// Hidden Markov state: the position in the season cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnvState {
    phase: usize,
}

impl EnvState {
    pub fn new(phase: usize) -> Result<Self> {
        season_of(phase)?;
        Ok(EnvState { phase })
    }

    pub fn phase(self) -> usize {
        self.phase
    }

    pub fn season(self) -> Season {
        if self.phase < 2 {
            Season::Monsoon
        } else {
            Season::Drought
        }
    }
}

/// Binary action; `Water` has index 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    NotWater = 0,
    Water = 1,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::NotWater, Action::Water];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            0 => Ok(Action::NotWater),
            1 => Ok(Action::Water),
            _ => Err(Error::contract(format!("action index {index} outside 0..2"))),
        }
    }
}

/// One-hot observation `[g, 1 - g]` where `g` is the growth bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    growth: bool,
}

impl Observation {
    pub const GROWTH: Observation = Observation { growth: true };
    pub const NO_GROWTH: Observation = Observation { growth: false };

    pub fn growth(self) -> bool {
        self.growth
    }

    /// Component `bit` (0 = growth, 1 = no growth) as 0 or 1.
    pub fn bit(self, bit: usize) -> Result<u8> {
        match bit {
            0 => Ok(self.growth as u8),
            1 => Ok(!self.growth as u8),
            _ => Err(Error::contract(format!("observation bit {bit} outside 0..2"))),
        }
    }

    /// Index of the active component.
    pub fn active_index(self) -> usize {
        if self.growth {
            0
        } else {
            1
        }
    }

    pub fn values<F: Scalar>(self) -> [F; OBS_LEN] {
        if self.growth {
            [F::one(), F::zero()]
        } else {
            [F::zero(), F::one()]
        }
    }
}

/// Result of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// 0 or 1.
    pub reward: u8,
    pub observation: Observation,
    pub next_state: EnvState,
}

/// Initial state: phase 0 with a no-growth observation. The seed is accepted
/// for interface symmetry; the environment itself is deterministic.
pub fn reset(_seed: u64) -> (EnvState, Observation) {
    (EnvState { phase: 0 }, Observation::NO_GROWTH)
}

/// Reward for taking `action` in `state`.
pub fn reward(state: EnvState, action: Action) -> u8 {
    match (state.season(), action) {
        (Season::Drought, Action::Water) | (Season::Monsoon, Action::NotWater) => 1,
        _ => 0,
    }
}

/// Advances one phase; the observation reveals only the reward bit.
pub fn step(state: EnvState, action: Action) -> StepOutcome {
    let reward = reward(state, action);
    StepOutcome {
        reward,
        observation: Observation {
            growth: reward == 1,
        },
        next_state: EnvState {
            phase: (state.phase + 1) % N_PHASES,
        },
    }
}

/// The rewarded action in `state`.
pub fn optimal_action(state: EnvState) -> Action {
    match state.season() {
        Season::Monsoon => Action::NotWater,
        Season::Drought => Action::Water,
    }
}
