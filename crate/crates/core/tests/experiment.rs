//! Batch orchestration, sweeps, and result files on short protocols.

use monsoon_core::agent::AgentKind;
use monsoon_core::config;
use monsoon_core::experiment::{
    run_batch, run_sweep, run_trial, run_trials, write_batch_outputs, write_steps_csv,
    write_trials_csv, BatchFiles, Phase, RunConfig,
};
use monsoon_core::Error;

fn short(kind: AgentKind, n_trials: usize) -> RunConfig {
    RunConfig {
        total_steps: 4_000,
        train_steps: 3_900,
        eval_steps: 100,
        n_trials,
        log_every: 500,
        base_seed: 21,
        ..RunConfig::table1(kind)
    }
}

#[test]
fn trials_report_eval_reward_over_exactly_eval_steps() {
    for kind in AgentKind::ALL {
        let c = short(kind, 1);
        let t = run_trial::<f64>(&c, 0);
        assert!(!t.failed());
        assert_eq!(t.seed, 21);
        assert!((0.0..=1.0).contains(&t.eval_mean_reward));
        // 100 eval steps of 0/1 reward: the mean is a multiple of 1/100.
        let scaled = t.eval_mean_reward * 100.0;
        assert!((scaled - scaled.round()).abs() < 1e-9);
        assert_eq!(t.training_curve.len(), 7);
        let phases: Vec<Phase> = t.step_log.iter().map(|r| r.phase).collect();
        assert_eq!(phases.iter().filter(|&&p| p == Phase::Eval).count(), 0);
        assert_eq!(t.step_log.len(), 8);
        assert_eq!(t.final_meta.len(), if kind == AgentKind::Meta { 2 } else { 0 });
    }
}

#[test]
fn single_precision_trial_runs() {
    let t = run_trial::<f32>(&short(AgentKind::Meta, 1), 0);
    assert!(!t.failed());
}

#[test]
fn batches_are_identical_across_worker_counts() {
    for kind in AgentKind::ALL {
        let c = short(kind, 4);
        let serial = run_batch(&c, 1).unwrap();
        let parallel = run_batch(&c, 3).unwrap();
        assert_eq!(serial, parallel);
        let seeds: Vec<u64> = serial.trials.iter().map(|t| t.seed).collect();
        assert_eq!(seeds, vec![21, 22, 23, 24]);
    }
}

#[test]
fn single_trial_batch_flags_standard_error() {
    let b = run_batch(&short(AgentKind::ObsOnly, 1), 1).unwrap();
    assert_eq!(b.summary.eval_se, 0.0);
    assert!(b.summary.se_undefined);
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut c = short(AgentKind::Meta, 2);
    c.agent.alpha_pi = -1.0;
    assert!(matches!(run_trials(&c, 1), Err(Error::Config { key, .. }) if key == "alpha_pi"));
}

#[test]
fn sweep_covers_the_grid_and_sorts_best_first() {
    let base = short(AgentKind::Expert, 2);
    let grid = vec![
        ("epsilon".to_string(), vec!["0.1".to_string(), "0.5".to_string()]),
        ("alpha_control".to_string(), vec!["0.01".to_string(), "0.0001".to_string()]),
    ];
    let rows = run_sweep(&grid, &base, 1).unwrap();
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        assert!(w[0].summary.eval_mean >= w[1].summary.eval_mean);
    }
    let mut settings: Vec<_> = rows.iter().map(|r| r.settings.clone()).collect();
    settings.sort();
    settings.dedup();
    assert_eq!(settings.len(), 4);

    let one = run_sweep(&[("epsilon".to_string(), vec!["0.1".to_string()])], &base, 1).unwrap();
    assert_eq!(one.len(), 1);
}

#[test]
fn sweep_rejects_unknown_or_invalid_parameters_up_front() {
    let base = short(AgentKind::Expert, 1);
    let bad = vec![("learning_rate".to_string(), vec!["0.1".to_string()])];
    assert!(matches!(run_sweep(&bad, &base, 1), Err(Error::Config { key, .. }) if key == "learning_rate"));
    let bad = vec![("epsilon".to_string(), vec!["0.1".to_string(), "2".to_string()])];
    assert!(matches!(run_sweep(&bad, &base, 1), Err(Error::Config { key, .. }) if key == "epsilon"));
}

#[test]
fn csv_outputs_have_the_documented_columns() {
    let c = short(AgentKind::Expert, 2);
    let b = run_batch(&c, 1).unwrap();
    let mut steps = Vec::new();
    write_steps_csv(&mut steps, &c.label, &b.trials).unwrap();
    let steps = String::from_utf8(steps).unwrap();
    let mut lines = steps.lines();
    assert_eq!(lines.next(), Some("config,trial,seed,phase,step,reward,delta_control"));
    assert!(lines.next().unwrap().starts_with("expert,0,21,train,0,"));
    assert_eq!(steps.lines().count(), 1 + 2 * 8);

    let mut trials = Vec::new();
    write_trials_csv(&mut trials, &c.label, &b.trials).unwrap();
    let trials = String::from_utf8(trials).unwrap();
    let lines: Vec<_> = trials.lines().collect();
    assert_eq!(lines[0], "config,trial,seed,eval_mean_reward,failed");
    assert!(lines[1].starts_with("expert,0,21,") && lines[1].ends_with(",false"));
    assert_eq!(lines.len(), 3);
}

#[test]
fn batch_outputs_are_written_and_summary_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let c = short(AgentKind::Meta, 2);
    let b = run_batch(&c, 1).unwrap();
    let files = BatchFiles::new(dir.path(), "meta");
    write_batch_outputs(&files, &c, &b.trials, Some(&b.summary)).unwrap();
    let kv = std::fs::read_to_string(&files.summary_kv).unwrap();
    let get = |k: &str| {
        kv.lines()
            .find_map(|l| l.strip_prefix(&format!("{k}=")))
            .unwrap_or_else(|| panic!("missing {k}"))
            .to_string()
    };
    assert_eq!(get("config"), "meta");
    assert_eq!(get("n_trials"), "2");
    assert_eq!(get("eval_mean").parse::<f64>().unwrap(), b.summary.eval_mean);
    assert_eq!(get("eval_se").parse::<f64>().unwrap(), b.summary.eval_se);
    assert_eq!(get("alpha_pi"), "0.001");
    let text = std::fs::read_to_string(&files.summary_txt).unwrap();
    assert!(text.contains("eval mean reward"));

    // The effective parameters re-parse to the same configuration.
    let pairs: Vec<(String, String)> = config::to_pairs(&c);
    assert_eq!(config::from_pairs(&pairs, "meta").unwrap(), RunConfig { log_every: 1000, ..c });
}
