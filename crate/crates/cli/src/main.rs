//! `monsoon`: run Monsoon World experiments from the command line.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (including a failed
//! gradient check or a batch whose every trial failed), 2 on a configuration
//! error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use monsoon_core::agent::{expert_oracle, AgentKind};
use monsoon_core::config;
use monsoon_core::control::prediction_index;
use monsoon_core::experiment::{
    run_sweep, run_trials, summarize, write_batch_outputs, BatchFiles, BatchSummary, RunConfig,
};
use monsoon_core::gradcheck::gradcheck;
use monsoon_core::gvf::{log_transform, T_MAX};
use monsoon_core::plot::{comparison_csv, comparison_svg};
use monsoon_core::{Error, Result};

#[derive(Parser)]
#[command(name = "monsoon", version, about = "GVF-discovery experiments on Monsoon World")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one batch of trials and write its CSVs and summaries.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        exec: Exec,
    },
    /// Run several batches (the three reported agents by default) and plot them.
    Compare {
        /// Config files; with none, the three reported agent configurations.
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        exec: Exec,
    },
    /// Compare the analytic meta-gradient with central finite differences.
    Gradcheck {
        /// Number of random contexts.
        #[arg(default_value_t = 100)]
        n: usize,
        #[arg(long = "base_seed", default_value_t = 0)]
        base_seed: u64,
        #[arg(long, default_value_t = 0.001)]
        lambda: f64,
    },
    /// Print the exact echo-GVF values per hidden phase.
    Oracle,
    /// Run one batch per point of a parameter grid.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// `key=v1,v2,...`; repeat for a Cartesian product.
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        exec: Exec,
    },
}

#[derive(Args)]
struct Source {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Exec {
    /// Worker threads for trials (0 = one per core). Results do not depend on it.
    #[arg(long = "trials-parallel", default_value_t = 0)]
    trials_parallel: usize,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One flag per config key; values are validated by the config parser so
/// errors name the key.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    agent: Option<String>,
    #[arg(long = "total_steps")]
    total_steps: Option<String>,
    #[arg(long = "train_steps")]
    train_steps: Option<String>,
    #[arg(long = "eval_steps")]
    eval_steps: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long = "alpha_control", allow_hyphen_values = true)]
    alpha_control: Option<String>,
    #[arg(long = "alpha_gvfs", allow_hyphen_values = true)]
    alpha_gvfs: Option<String>,
    #[arg(long = "alpha_pi", allow_hyphen_values = true)]
    alpha_pi: Option<String>,
    #[arg(long = "alpha_c", allow_hyphen_values = true)]
    alpha_c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long = "gamma_c", allow_hyphen_values = true)]
    gamma_c: Option<String>,
    #[arg(long = "t_max", allow_hyphen_values = true)]
    t_max: Option<String>,
    #[arg(long)]
    memsize: Option<String>,
    #[arg(long = "n_trials")]
    n_trials: Option<String>,
    #[arg(long = "base_seed")]
    base_seed: Option<String>,
    #[arg(long = "unroll_next_features")]
    unroll_next_features: Option<String>,
    #[arg(long = "out_dir")]
    out_dir: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let fields = [
            ("agent", &self.agent),
            ("total_steps", &self.total_steps),
            ("train_steps", &self.train_steps),
            ("eval_steps", &self.eval_steps),
            ("epsilon", &self.epsilon),
            ("alpha_control", &self.alpha_control),
            ("alpha_gvfs", &self.alpha_gvfs),
            ("alpha_pi", &self.alpha_pi),
            ("alpha_c", &self.alpha_c),
            ("lambda", &self.lambda),
            ("gamma_c", &self.gamma_c),
            ("t_max", &self.t_max),
            ("memsize", &self.memsize),
            ("n_trials", &self.n_trials),
            ("base_seed", &self.base_seed),
            ("unroll_next_features", &self.unroll_next_features),
            ("out_dir", &self.out_dir),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { source, overrides, exec } => cmd_run(source.config.as_deref(), &overrides, &exec),
        Command::Compare { configs, overrides, exec } => cmd_compare(&configs, &overrides, &exec),
        Command::Gradcheck { n, base_seed, lambda } => cmd_gradcheck(n, base_seed, lambda),
        Command::Oracle => cmd_oracle(),
        Command::Sweep { source, grid, overrides, exec } => {
            cmd_sweep(source.config.as_deref(), &grid, &overrides, &exec)
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

/// Builds a run configuration from an optional file plus overrides. The
/// label is the file stem, or the agent name without a file.
fn load(path: Option<&Path>, overrides: &Overrides, exec: &Exec) -> Result<RunConfig> {
    let mut pairs = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config { key: "config".into(), message: format!("{}: {e}", p.display()) })?;
            config::parse(&text)?
        }
        None => Vec::new(),
    };
    pairs.extend(overrides.pairs());
    let label = match path.and_then(|p| p.file_stem()) {
        Some(stem) => stem.to_string_lossy().into_owned(),
        None => pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "agent")
            .map(|(_, v)| v.clone())
            .unwrap_or_default(),
    };
    let mut c = config::from_pairs(&pairs, &label)?;
    if let Some(out) = &exec.out {
        c.out_dir = out.clone();
    }
    Ok(c)
}

/// Runs a batch and writes its files. Returns the summary, or `None` when
/// every trial failed (the per-trial files are still written).
fn run_and_write(c: &RunConfig, dir: &Path, stem: &str, parallel: usize) -> Result<Option<BatchSummary>> {
    let trials = run_trials(c, parallel)?;
    let summary = match summarize(&c.label, &trials) {
        Ok(s) => Some(s),
        Err(Error::AllTrialsFailed(_)) => None,
        Err(e) => return Err(e),
    };
    write_batch_outputs(&BatchFiles::new(dir, stem), c, &trials, summary.as_ref())?;
    print!("{}", monsoon_core::experiment::format_summary(c, &trials, summary.as_ref()));
    Ok(summary)
}

fn cmd_run(path: Option<&Path>, overrides: &Overrides, exec: &Exec) -> Result<ExitCode> {
    let c = load(path, overrides, exec)?;
    let summary = run_and_write(&c, &c.out_dir, &c.label, exec.trials_parallel)?;
    println!("wrote results to {}", c.out_dir.display());
    Ok(if summary.is_some() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_compare(paths: &[PathBuf], overrides: &Overrides, exec: &Exec) -> Result<ExitCode> {
    let configs = if paths.is_empty() {
        AgentKind::ALL
            .iter()
            .map(|k| {
                let mut o = overrides.pairs();
                o.insert(0, ("agent".into(), k.name().into()));
                let mut c = config::from_pairs(&o, k.name())?;
                if let Some(out) = &exec.out {
                    c.out_dir = out.clone();
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        paths
            .iter()
            .map(|p| load(Some(p), overrides, exec))
            .collect::<Result<Vec<_>>>()?
    };
    let dir = configs[0].out_dir.clone();
    let mut stems: Vec<String> = Vec::new();
    let mut summaries = Vec::new();
    let mut all_ok = true;
    for c in &configs {
        let mut stem = c.label.clone();
        let mut k = 2;
        while stems.contains(&stem) {
            stem = format!("{}-{k}", c.label);
            k += 1;
        }
        stems.push(stem.clone());
        match run_and_write(c, &dir, &stem, exec.trials_parallel)? {
            Some(s) => summaries.push(BatchSummary { label: stem, ..s }),
            None => all_ok = false,
        }
    }
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("compare.csv"), comparison_csv(&summaries))?;
    fs::write(
        dir.join("compare.svg"),
        comparison_svg("Mean evaluation reward (error bars: 1 standard error)", &summaries),
    )?;
    println!("wrote comparison to {}", dir.display());
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_gradcheck(n: usize, seed: u64, lambda: f64) -> Result<ExitCode> {
    if n == 0 {
        return Err(Error::Config { key: "n".into(), message: "must be at least 1".into() });
    }
    let r = gradcheck(n, seed, lambda)?;
    println!("contexts checked:    {}", r.n_contexts);
    println!("redrawn near ties:   {}", r.n_redrawn);
    println!("max relative error:  {:e}", r.max_relative_error);
    println!("tolerance:           {:e}", r.tolerance);
    println!("{}", if r.passed() { "PASS" } else { "FAIL" });
    Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_oracle() -> Result<ExitCode> {
    let oracle = expert_oracle::<f64>()?;
    println!("phase  season   v_growth  v_no_growth  T(v_growth)  T(v_no_growth)  cell");
    for (p, v) in oracle.iter().enumerate() {
        let t = [log_transform(v[0], T_MAX)?, log_transform(v[1], T_MAX)?];
        let season = if p < 2 { "monsoon" } else { "drought" };
        println!(
            "{p:<6} {season:<8} {:<9.4} {:<12.4} {:<12.4} {:<15.4} {}",
            v[0],
            v[1],
            t[0],
            t[1],
            prediction_index(t)?
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(path: Option<&Path>, grid: &[String], overrides: &Overrides, exec: &Exec) -> Result<ExitCode> {
    let base = load(path, overrides, exec)?;
    let grid = grid
        .iter()
        .map(|g| {
            let (k, vs) = g.split_once('=').ok_or_else(|| Error::Config {
                key: g.clone(),
                message: "grid entries look like key=v1,v2".into(),
            })?;
            Ok((k.trim().to_string(), vs.split(',').map(|v| v.trim().to_string()).collect()))
        })
        .collect::<Result<Vec<(String, Vec<String>)>>>()?;
    let rows = run_sweep(&grid, &base, exec.trials_parallel)?;
    let mut csv = String::from("rank,settings,n_trials,n_failed,eval_mean,eval_se\n");
    for (i, r) in rows.iter().enumerate() {
        let b = &r.summary;
        csv += &format!("{},{},{},{},{},{}\n", i + 1, b.label, b.n_trials, b.n_failed, b.eval_mean, b.eval_se);
        println!("{:>3}. {:<40} {:.4} +/- {:.4}", i + 1, b.label, b.eval_mean, b.eval_se);
    }
    fs::create_dir_all(&base.out_dir)?;
    fs::write(base.out_dir.join("sweep.csv"), csv)?;
    println!("wrote sweep to {}", base.out_dir.join("sweep.csv").display());
    Ok(ExitCode::SUCCESS)
}
