//! Discovering predictive features with meta-gradients on Monsoon World.
//!
//! A partially observable four-phase environment, linear general value
//! functions (GVFs) learned off-policy, a linear Q-learning controller that
//! uses the GVF predictions as its state, and meta-gradient updates that learn
//! each GVF's cumulant and target policy online. The [`experiment`] module
//! runs the three-agent comparison: observations only, hand-designed echo
//! GVFs, and meta-learned GVFs.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which the experiment harness
//! uses.
//!
//! Randomness comes from [`rand_chacha::ChaCha8Rng`] seeded with
//! `seed_from_u64(base_seed + trial_index)`, a fixed, platform-independent
//! stream, so every run is reproducible bit for bit.

pub mod agent;
pub mod config;
pub mod control;
pub mod env;
pub mod error;
pub mod experiment;
pub mod features;
pub mod gradcheck;
pub mod gvf;
pub mod meta;
pub mod plot;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{lit, Scalar};

pub type Features64 = features::Features<f64>;
pub type GvfWeights64 = gvf::GvfWeights<f64>;
pub type QWeights64 = control::QWeights<f64>;
pub type MetaWeights64 = meta::MetaWeights<f64>;
pub type AgentConfig64 = agent::AgentConfig<f64>;
pub type AgentState64 = agent::AgentState<f64>;

pub type Features32 = features::Features<f32>;
pub type AgentConfig32 = agent::AgentConfig<f32>;
pub type AgentState32 = agent::AgentState<f32>;
