//! Trials, batches, sweeps, and result files.
//!
//! A trial trains an agent for `train_steps` steps and then evaluates it
//! greedily, with all learning frozen, for `eval_steps` steps. The trial's
//! score is the mean reward over evaluation. Trial `i` of a batch is seeded
//! with `base_seed + i`, so results do not depend on how many trials run in
//! parallel or in which order they finish.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agent::{agent_step, freeze_eval, init_agent, AgentConfig, AgentKind};
use crate::config;
use crate::meta::MetaWeights;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Default number of steps between logged rows.
pub const DEFAULT_LOG_EVERY: u64 = 1000;

/// One experiment: an agent configuration plus the protocol around it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Name written to the `config` column of every output file.
    pub label: String,
    pub agent: AgentConfig<f64>,
    pub total_steps: u64,
    pub train_steps: u64,
    pub eval_steps: u64,
    pub n_trials: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    /// Steps between rows of the per-step log.
    pub log_every: u64,
}

impl RunConfig {
    /// Full-length protocol (999,000 training + 1,000 evaluation steps,
    /// 30 trials) with the reported parameters of `kind`.
    pub fn table1(kind: AgentKind) -> Self {
        RunConfig {
            label: kind.name().to_string(),
            agent: AgentConfig::table1(kind),
            total_steps: 1_000_000,
            train_steps: 999_000,
            eval_steps: 1_000,
            n_trials: 30,
            base_seed: 0,
            out_dir: PathBuf::from("results"),
            log_every: DEFAULT_LOG_EVERY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        let a = &self.agent;
        let applicable: &[(&str, f64)] = match a.kind {
            AgentKind::ObsOnly => &[("alpha_control", a.alpha_control)],
            AgentKind::Expert => &[("alpha_control", a.alpha_control), ("alpha_gvfs", a.alpha_gvfs)],
            AgentKind::Meta => &[
                ("alpha_control", a.alpha_control),
                ("alpha_gvfs", a.alpha_gvfs),
                ("alpha_pi", a.alpha_pi),
                ("alpha_c", a.alpha_c),
            ],
        };
        for &(key, x) in applicable {
            if !(x > 0.0) {
                return Err(Error::config(key, format!("{x} must be positive")));
            }
        }
        if self.eval_steps == 0 {
            return Err(Error::config("eval_steps", "must be at least 1"));
        }
        if self.eval_steps >= self.total_steps {
            return Err(Error::config(
                "eval_steps",
                format!("{} is not below total_steps {}", self.eval_steps, self.total_steps),
            ));
        }
        if self.train_steps + self.eval_steps > self.total_steps {
            return Err(Error::config(
                "train_steps",
                format!(
                    "{} + eval_steps {} exceeds total_steps {}",
                    self.train_steps, self.eval_steps, self.total_steps
                ),
            ));
        }
        if self.n_trials == 0 {
            return Err(Error::config("n_trials", "must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(Error::contract("log_every must be at least 1"));
        }
        Ok(())
    }

    /// Seed of trial `index`.
    pub fn trial_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Protocol phase of a logged step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

/// One sampled row of the per-step log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLogRow {
    pub phase: Phase,
    pub step: u64,
    pub reward: f64,
    pub delta_control: f64,
}

/// Why a trial stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub step: u64,
    pub message: String,
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    /// Mean reward over the evaluation steps (0 for failed trials).
    pub eval_mean_reward: f64,
    /// Mean training reward over consecutive windows of `log_every` steps.
    pub training_curve: Vec<f64>,
    pub step_log: Vec<StepLogRow>,
    /// Meta-weights at the end of the trial (empty for other agents).
    pub final_meta: Vec<MetaWeights<f64>>,
    pub failure: Option<TrialFailure>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Runs one trial in scalar type `F` (results are reported as `f64`).
pub fn run_trial<F: Scalar>(config: &RunConfig, trial: usize) -> TrialResult {
    let seed = config.trial_seed(trial);
    let mut result = TrialResult {
        trial,
        seed,
        eval_mean_reward: 0.0,
        training_curve: Vec::new(),
        step_log: Vec::new(),
        final_meta: Vec::new(),
        failure: None,
    };
    let train = cast_agent_config::<F>(&config.agent);
    let eval = freeze_eval(&train);
    let mut state = match init_agent(&train, seed) {
        Ok(s) => s,
        Err(e) => {
            result.failure = Some(TrialFailure { step: 0, message: e.to_string() });
            return result;
        }
    };
    let mut window = 0.0;
    let mut eval_total = 0.0;
    let total = config.train_steps + config.eval_steps;
    for step in 0..total {
        let (phase, agent) = if step < config.train_steps {
            (Phase::Train, &train)
        } else {
            (Phase::Eval, &eval)
        };
        let report = match agent_step(&mut state, agent) {
            Ok(r) => r,
            Err(e) => {
                result.failure = Some(TrialFailure { step, message: e.to_string() });
                result.eval_mean_reward = 0.0;
                return result;
            }
        };
        let reward = report.reward.to_f64().unwrap();
        match phase {
            Phase::Train => {
                window += reward;
                if (step + 1) % config.log_every == 0 {
                    result.training_curve.push(window / config.log_every as f64);
                    window = 0.0;
                }
            }
            Phase::Eval => eval_total += reward,
        }
        if step % config.log_every == 0 {
            result.step_log.push(StepLogRow {
                phase,
                step,
                reward,
                delta_control: report.delta_control.to_f64().unwrap(),
            });
        }
    }
    result.eval_mean_reward = eval_total / config.eval_steps as f64;
    result.final_meta = state
        .meta
        .iter()
        .map(|m| MetaWeights {
            w_pi: m.w_pi.map(|x| x.to_f64().unwrap()),
            w_c: m.w_c.map(|x| x.to_f64().unwrap()),
        })
        .collect();
    result
}

fn cast_agent_config<F: Scalar>(c: &AgentConfig<f64>) -> AgentConfig<F> {
    let f = |x: f64| F::from_f64(x).unwrap();
    AgentConfig {
        kind: c.kind,
        epsilon: f(c.epsilon),
        alpha_control: f(c.alpha_control),
        alpha_gvfs: f(c.alpha_gvfs),
        alpha_pi: f(c.alpha_pi),
        alpha_c: f(c.alpha_c),
        lambda: f(c.lambda),
        gamma_c: f(c.gamma_c),
        t_max: f(c.t_max),
        memsize: c.memsize,
        obs_in_control: c.obs_in_control,
        unroll: c.unroll,
    }
}

/// Runs every trial of `config` on `parallelism` worker threads (0 = one per
/// core). Results come back in trial order.
pub fn run_trials(config: &RunConfig, parallelism: usize) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::contract(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..config.n_trials)
            .into_par_iter()
            .map(|i| run_trial::<f64>(config, i))
            .collect()
    }))
}

/// Mean and standard error of evaluation reward over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub label: String,
    /// Trials run, including failed ones.
    pub n_trials: usize,
    pub n_failed: usize,
    /// Mean over successful trials.
    pub eval_mean: f64,
    /// Sample standard deviation over successful trials divided by the square
    /// root of their count; 0 when only one trial succeeded.
    pub eval_se: f64,
    /// True when the standard error is 0 only because a single trial succeeded.
    pub se_undefined: bool,
}

/// Aggregates trial results. The result does not depend on their order.
pub fn summarize(label: &str, trials: &[TrialResult]) -> Result<BatchSummary> {
    let mut scores: Vec<f64> = trials
        .iter()
        .filter(|t| !t.failed())
        .map(|t| t.eval_mean_reward)
        .collect();
    if scores.is_empty() {
        return Err(Error::AllTrialsFailed(trials.len()));
    }
    // Sorting fixes the summation order, making the sums permutation-invariant.
    scores.sort_by(f64::total_cmp);
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let se = if scores.len() > 1 {
        let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(BatchSummary {
        label: label.to_string(),
        n_trials: trials.len(),
        n_failed: trials.len() - scores.len(),
        eval_mean: mean,
        eval_se: se,
        se_undefined: scores.len() == 1,
    })
}

/// A batch's trials and their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub config: RunConfig,
    pub trials: Vec<TrialResult>,
    pub summary: BatchSummary,
}

/// Runs and summarizes one batch.
pub fn run_batch(config: &RunConfig, parallelism: usize) -> Result<BatchOutcome> {
    let trials = run_trials(config, parallelism)?;
    let summary = summarize(&config.label, &trials)?;
    Ok(BatchOutcome {
        config: config.clone(),
        trials,
        summary,
    })
}

/// One cell of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// The grid values of this cell, in grid order.
    pub settings: Vec<(String, String)>,
    pub summary: BatchSummary,
}

/// Runs one batch per point of the Cartesian product of `grid` (parameter
/// name to candidate values) and returns the rows sorted by mean evaluation
/// reward, best first. Every grid point is validated before any trial runs.
pub fn run_sweep(
    grid: &[(String, Vec<String>)],
    base: &RunConfig,
    parallelism: usize,
) -> Result<Vec<SweepRow>> {
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in grid {
        if !config::KEYS.contains(&key.as_str()) {
            return Err(Error::config(key.clone(), "unknown parameter"));
        }
        if values.is_empty() {
            return Err(Error::config(key.clone(), "empty value list"));
        }
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut p = p.clone();
                    p.push((key.clone(), v.clone()));
                    p
                })
            })
            .collect();
    }
    let configs = points
        .iter()
        .map(|settings| {
            let mut pairs = config::to_pairs(base);
            pairs.extend(settings.iter().cloned());
            let label = settings
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            let label = if label.is_empty() { base.label.clone() } else { label };
            config::from_pairs(&pairs, &label)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(configs.len());
    for (settings, cfg) in points.into_iter().zip(&configs) {
        rows.push(SweepRow {
            settings,
            summary: run_batch(cfg, parallelism)?.summary,
        });
    }
    rows.sort_by(|a, b| b.summary.eval_mean.total_cmp(&a.summary.eval_mean));
    Ok(rows)
}

/// Writes the sampled per-step log.
pub fn write_steps_csv<W: Write>(out: W, label: &str, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "trial", "seed", "phase", "step", "reward", "delta_control"])?;
    for t in trials {
        for row in &t.step_log {
            w.write_record([
                label,
                &t.trial.to_string(),
                &t.seed.to_string(),
                row.phase.name(),
                &row.step.to_string(),
                &row.reward.to_string(),
                &row.delta_control.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per trial.
pub fn write_trials_csv<W: Write>(out: W, label: &str, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "trial", "seed", "eval_mean_reward", "failed"])?;
    for t in trials {
        w.write_record([
            label,
            &t.trial.to_string(),
            &t.seed.to_string(),
            &t.eval_mean_reward.to_string(),
            &t.failed().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable batch summary.
pub fn format_summary(config: &RunConfig, trials: &[TrialResult], summary: Option<&BatchSummary>) -> String {
    let mut s = format!("Batch `{}` ({} agent)\n", config.label, config.agent.kind.name());
    s += &format!(
        "  protocol: {} training + {} greedy evaluation steps, {} trials from seed {}\n",
        config.train_steps, config.eval_steps, config.n_trials, config.base_seed
    );
    match summary {
        Some(b) => {
            s += &format!("  eval mean reward: {:.4} +/- {:.4} (standard error)\n", b.eval_mean, b.eval_se);
            if b.se_undefined {
                s += "  note: only one successful trial; standard error reported as 0\n";
            }
            s += &format!("  failed trials: {} of {}\n", b.n_failed, b.n_trials);
        }
        None => s += "  every trial failed; no summary\n",
    }
    for t in trials {
        if let Some(f) = &t.failure {
            s += &format!("  trial {} (seed {}) failed at step {}: {}\n", t.trial, t.seed, f.step, f.message);
        }
    }
    s += "  parameters:\n";
    for (k, v) in config::to_pairs(config) {
        s += &format!("    {k} = {v}\n");
    }
    s
}

/// Machine-readable `key=value` summary: label, trial count, mean, standard
/// error, then every effective parameter.
pub fn format_summary_kv(config: &RunConfig, summary: &BatchSummary) -> String {
    let mut s = format!(
        "config={}\nn_trials={}\neval_mean={}\neval_se={}\nn_failed={}\n",
        summary.label, summary.n_trials, summary.eval_mean, summary.eval_se, summary.n_failed
    );
    for (k, v) in config::to_pairs(config) {
        s += &format!("{k}={v}\n");
    }
    s
}

/// Paths of one batch's output files.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchFiles {
    pub steps_csv: PathBuf,
    pub trials_csv: PathBuf,
    pub summary_txt: PathBuf,
    pub summary_kv: PathBuf,
}

impl BatchFiles {
    pub fn new(dir: &Path, stem: &str) -> Self {
        BatchFiles {
            steps_csv: dir.join(format!("{stem}_steps.csv")),
            trials_csv: dir.join(format!("{stem}_trials.csv")),
            summary_txt: dir.join(format!("{stem}_summary.txt")),
            summary_kv: dir.join(format!("{stem}_summary.kv")),
        }
    }
}

/// Writes every output of a batch. The key-value summary is skipped when all
/// trials failed.
pub fn write_batch_outputs(
    files: &BatchFiles,
    config: &RunConfig,
    trials: &[TrialResult],
    summary: Option<&BatchSummary>,
) -> Result<()> {
    if let Some(dir) = files.steps_csv.parent() {
        fs::create_dir_all(dir)?;
    }
    write_steps_csv(fs::File::create(&files.steps_csv)?, &config.label, trials)?;
    write_trials_csv(fs::File::create(&files.trials_csv)?, &config.label, trials)?;
    fs::write(&files.summary_txt, format_summary(config, trials, summary))?;
    if let Some(b) = summary {
        fs::write(&files.summary_kv, format_summary_kv(config, b))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(trial: usize, score: f64) -> TrialResult {
        TrialResult {
            trial,
            seed: trial as u64,
            eval_mean_reward: score,
            training_curve: vec![],
            step_log: vec![],
            final_meta: vec![],
            failure: None,
        }
    }

    #[test]
    fn summary_of_two_trials() {
        let s = summarize("x", &[result(0, 0.4), result(1, 0.6)]).unwrap();
        assert!((s.eval_mean - 0.5).abs() < 1e-12);
        assert!((s.eval_se - 0.1).abs() < 1e-12);
        assert!(!s.se_undefined);
    }

    #[test]
    fn summary_of_one_trial_is_flagged() {
        let s = summarize("x", &[result(0, 0.7)]).unwrap();
        assert_eq!(s.eval_se, 0.0);
        assert!(s.se_undefined);
    }

    #[test]
    fn identical_trials_have_zero_se() {
        let s = summarize("x", &[result(0, 0.25), result(1, 0.25), result(2, 0.25)]).unwrap();
        assert_eq!(s.eval_se, 0.0);
        assert_eq!(s.eval_mean, 0.25);
    }

    #[test]
    fn failed_trials_are_excluded_and_counted() {
        let mut bad = result(1, 0.0);
        bad.failure = Some(TrialFailure { step: 3, message: "boom".into() });
        let s = summarize("x", &[result(0, 1.0), bad.clone()]).unwrap();
        assert_eq!((s.n_trials, s.n_failed, s.eval_mean), (2, 1, 1.0));
        assert!(matches!(summarize("x", &[bad]), Err(Error::AllTrialsFailed(1))));
    }

    #[test]
    fn summary_is_permutation_invariant() {
        let scores = [0.1, 0.7, 0.3333, 0.9, 0.123456789, 0.5];
        let trials: Vec<_> = scores.iter().enumerate().map(|(i, &s)| result(i, s)).collect();
        let mut reversed = trials.clone();
        reversed.reverse();
        let mut rotated = trials.clone();
        rotated.rotate_left(2);
        let a = summarize("x", &trials).unwrap();
        assert_eq!(a, summarize("x", &reversed).unwrap());
        assert_eq!(a, summarize("x", &rotated).unwrap());
    }

    #[test]
    fn trial_seeds_are_offsets() {
        let c = RunConfig { base_seed: 7, ..RunConfig::table1(AgentKind::Expert) };
        assert_eq!(c.trial_seed(0), 7);
        assert_eq!(c.trial_seed(29), 36);
    }

    #[test]
    fn validation_names_the_key() {
        let mut c = RunConfig::table1(AgentKind::Meta);
        c.eval_steps = c.total_steps;
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "eval_steps"));
        let mut c = RunConfig::table1(AgentKind::Meta);
        c.n_trials = 0;
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "n_trials"));
        let mut c = RunConfig::table1(AgentKind::Meta);
        c.agent.alpha_pi = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "alpha_pi"));
    }
}
