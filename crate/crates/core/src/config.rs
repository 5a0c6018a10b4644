//! Flat `key = value` configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! agent = meta
//! n_trials = 30
//! alpha_pi = 0.001
//! ```
//!
//! Every key must be one of [`KEYS`]; missing keys take the reported defaults
//! of the chosen agent. `train_steps`, if absent, is `total_steps -
//! eval_steps`.

use std::path::PathBuf;

use crate::agent::AgentKind;
use crate::experiment::RunConfig;
use crate::meta::UnrollFeatures;
use crate::{Error, Result};

/// Every recognized key, in the order configs are written out.
pub const KEYS: [&str; 17] = [
    "agent",
    "total_steps",
    "train_steps",
    "eval_steps",
    "epsilon",
    "alpha_control",
    "alpha_gvfs",
    "alpha_pi",
    "alpha_c",
    "lambda",
    "gamma_c",
    "t_max",
    "memsize",
    "n_trials",
    "base_seed",
    "unroll_next_features",
    "out_dir",
];

/// Parses config text into `(key, value)` pairs, rejecting unknown keys,
/// repeated keys, and lines without `=`.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(line, format!("line {}: expected `key = value`", n + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::config(key, format!("line {}: unknown key", n + 1)));
        }
        if pairs.iter().any(|(k, _)| k == key) {
            return Err(Error::config(key, format!("line {}: key given twice", n + 1)));
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

/// Builds a validated run configuration from pairs; later pairs override
/// earlier ones, so file pairs followed by command-line overrides do the
/// right thing.
pub fn from_pairs(pairs: &[(String, String)], label: &str) -> Result<RunConfig> {
    for (key, _) in pairs {
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::config(key.clone(), "unknown key"));
        }
    }
    let agent = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "agent")
        .ok_or_else(|| Error::config("agent", "missing (set it in the config or with --agent)"))?;
    let kind = AgentKind::parse(&agent.1).ok_or_else(|| {
        Error::config("agent", format!("`{}` is not one of obs-only, expert, meta", agent.1))
    })?;
    let mut c = RunConfig::table1(kind);
    c.label = label.to_string();
    let mut explicit_train = false;
    for (key, value) in pairs {
        let v = value.as_str();
        match key.as_str() {
            "agent" => {}
            "total_steps" => c.total_steps = number(key, v)?,
            "train_steps" => {
                c.train_steps = number(key, v)?;
                explicit_train = true;
            }
            "eval_steps" => c.eval_steps = number(key, v)?,
            "epsilon" => c.agent.epsilon = real(key, v)?,
            "alpha_control" => c.agent.alpha_control = real(key, v)?,
            "alpha_gvfs" => c.agent.alpha_gvfs = real(key, v)?,
            "alpha_pi" => c.agent.alpha_pi = real(key, v)?,
            "alpha_c" => c.agent.alpha_c = real(key, v)?,
            "lambda" => c.agent.lambda = real(key, v)?,
            "gamma_c" => c.agent.gamma_c = real(key, v)?,
            "t_max" => c.agent.t_max = real(key, v)?,
            "memsize" => c.agent.memsize = number(key, v)?,
            "n_trials" => c.n_trials = number(key, v)?,
            "base_seed" => c.base_seed = number(key, v)?,
            "unroll_next_features" => {
                c.agent.unroll = UnrollFeatures::parse(v).ok_or_else(|| {
                    Error::config(key.clone(), format!("`{v}` is not `same` or `true-next`"))
                })?
            }
            "out_dir" => c.out_dir = PathBuf::from(v),
            other => unreachable!("key {other} checked above"),
        }
    }
    if !explicit_train {
        c.train_steps = c.total_steps.saturating_sub(c.eval_steps);
    }
    c.validate()?;
    Ok(c)
}

/// The effective configuration as pairs covering every key. `train_steps` is
/// omitted when it equals its derived default so that re-deriving from a
/// changed `total_steps` keeps working.
pub fn to_pairs(c: &RunConfig) -> Vec<(String, String)> {
    let a = &c.agent;
    let mut out = vec![
        ("agent", a.kind.name().to_string()),
        ("total_steps", c.total_steps.to_string()),
        ("train_steps", c.train_steps.to_string()),
        ("eval_steps", c.eval_steps.to_string()),
        ("epsilon", a.epsilon.to_string()),
        ("alpha_control", a.alpha_control.to_string()),
        ("alpha_gvfs", a.alpha_gvfs.to_string()),
        ("alpha_pi", a.alpha_pi.to_string()),
        ("alpha_c", a.alpha_c.to_string()),
        ("lambda", a.lambda.to_string()),
        ("gamma_c", a.gamma_c.to_string()),
        ("t_max", a.t_max.to_string()),
        ("memsize", a.memsize.to_string()),
        ("n_trials", c.n_trials.to_string()),
        ("base_seed", c.base_seed.to_string()),
        ("unroll_next_features", a.unroll.name().to_string()),
        ("out_dir", c.out_dir.display().to_string()),
    ];
    if c.train_steps + c.eval_steps == c.total_steps {
        out.retain(|(k, _)| *k != "train_steps");
    }
    out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Renders a configuration in the file format [`parse`] reads.
pub fn to_text(c: &RunConfig) -> String {
    to_pairs(c)
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("`{v}` is not a non-negative integer")))
}

fn real(key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(Error::config(key, format!("`{v}` is not a finite number"))),
    }
}
