//! Experiment configuration, seeding and output formats.

use oim_core::harness::{
    check_expectations, from_csv, from_json, run_experiment, run_seed, summarize_values, to_csv, to_json, Expectation,
    ExperimentConfig, Protocol,
};
use oim_core::Error;

fn chain_config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "env": {"name": "chain"},
            "agent": {"kind": "oim", "r_max": 5, "sweep": "prioritized", "max_backups_per_step": 20},
            "n_runs": 6,
            "master_seed": 17,
            "protocol": {"type": "phases", "n_phases": 3, "phase_len": 200}
        }"#,
    )
    .unwrap()
}

#[test]
fn summaries_round_trip_through_csv_and_json() {
    let r = run_experiment(&chain_config()).unwrap();
    assert_eq!(r.metric_names, ["phase_1", "phase_2", "phase_3"]);
    assert_eq!(from_csv(&to_csv(&r.summary).unwrap()).unwrap(), r.summary);
    assert_eq!(from_json(&to_json(&r.summary).unwrap()).unwrap(), r.summary);
}

#[test]
fn continuing_phases_sum_to_cumulative_total() {
    let phased = run_experiment(&chain_config()).unwrap();
    let mut cfg = chain_config();
    cfg.protocol = Protocol::Cumulative;
    cfg.total_steps = Some(600);
    let total = run_experiment(&cfg).unwrap();
    assert_eq!(total.metric_names, ["total_reward"]);
    for (p, t) in phased.records.iter().zip(&total.records) {
        let sum: f64 = p.values.iter().sum();
        assert!((sum - t.values[0]).abs() < 1e-9);
    }
}

#[test]
fn seeds_depend_on_master_and_run() {
    let a: Vec<u64> = (0..50).map(|i| run_seed(1, i)).collect();
    let b: Vec<u64> = (0..50).map(|i| run_seed(2, i)).collect();
    let mut dedup = a.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), a.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    let r = run_experiment(&chain_config()).unwrap();
    for rec in &r.records {
        assert_eq!(rec.seed, run_seed(17, rec.run));
    }
}

#[test]
fn adding_runs_keeps_earlier_runs() {
    let small = run_experiment(&chain_config()).unwrap();
    let mut cfg = chain_config();
    cfg.n_runs = 9;
    let big = run_experiment(&cfg).unwrap();
    assert_eq!(&big.records[..6], &small.records[..]);
}

#[test]
fn parallelism_does_not_change_results() {
    let mut cfg = chain_config();
    let mut outs = Vec::new();
    for p in [1, 2, 0] {
        cfg.parallelism = p;
        outs.push(to_csv(&run_experiment(&cfg).unwrap().summary).unwrap());
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn bad_configs_are_config_errors() {
    let cases = [
        r#"{"env":{"name":"chain"},"agent":{"kind":"oim","r_max":1},"n_runs":0,"protocol":{"type":"cumulative"},"total_steps":10}"#,
        r#"{"env":{"name":"chain"},"agent":{"kind":"oim","r_max":1},"n_runs":1,"protocol":{"type":"cumulative"}}"#,
        r#"{"env":{"name":"chain"},"agent":{"kind":"oim","r_max":1},"n_runs":1,"protocol":{"type":"phases","n_phases":2,"phase_len":5},"total_steps":11}"#,
        r#"{"env":{"name":"chain"},"agent":{"kind":"oim","r_max":1},"n_runs":1,"protocol":{"type":"cumulative"},"total_steps":10,"gamma":1.0}"#,
    ];
    for text in cases {
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))), "{text}");
    }
    assert!(ExperimentConfig::from_json(r#"{"env":{"name":"nowhere"}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"env":{"name":"chain"},"agent":{"kind":"oim","r_max":1},"n_runs":1,"protocol":{"type":"cumulative"},"bogus":1}"#).is_err());
}

#[test]
fn expectations_report_failures() {
    let r = run_experiment(&chain_config()).unwrap();
    let mean = r.summary.mean("phase_3").unwrap();
    let ok = [Expectation { metric: "phase_3".into(), min: Some(mean - 1.0), max: Some(mean + 1.0) }];
    assert!(check_expectations(&r.summary, &ok).is_empty());
    let bad = [
        Expectation { metric: "phase_3".into(), min: Some(mean + 1.0), max: None },
        Expectation { metric: "missing".into(), min: None, max: None },
    ];
    assert_eq!(check_expectations(&r.summary, &bad).len(), 2);
}

#[test]
fn summary_statistics() {
    let s = summarize_values("m", &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(s.mean, 2.5);
    let sd = (5.0f64 / 3.0).sqrt();
    assert!((s.std.unwrap() - sd).abs() < 1e-12);
    assert!((s.ci95.unwrap() - 1.96 * sd / 2.0).abs() < 1e-12);
    let one = summarize_values("m", &[7.0]);
    assert_eq!((one.mean, one.std, one.ci95), (7.0, None, None));
}

#[test]
fn maze_evaluation_reports_thresholds() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "env": {"name": "maze_with_subgoals", "size": 8, "seed": 4},
            "agent": {"kind": "oim", "r_max": 30, "sweep": "prioritized", "max_backups_per_step": 100},
            "n_runs": 2,
            "total_steps": 3000,
            "protocol": {"type": "maze_eval", "test_every": 500, "n_test_runs": 2, "test_len": 300, "thresholds": [0.5]}
        }"#,
    )
    .unwrap();
    let r = run_experiment(&cfg).unwrap();
    assert!(r.optimal_return.unwrap() > 0.0);
    assert_eq!(r.checkpoints, [500, 1000, 1500, 2000, 2500, 3000]);
    let th = &r.thresholds[0];
    assert_eq!(th.first_steps.len(), 2);
    assert!(th.censored_mean_steps <= 3000.0);
}

#[test]
fn empty_metrics_survive_both_formats() {
    let mut s = run_experiment(&chain_config()).unwrap().summary;
    s.metrics.push(summarize_values("steps_to_95pct", &[]));
    let csv = from_csv(&to_csv(&s).unwrap()).unwrap();
    let json = from_json(&to_json(&s).unwrap()).unwrap();
    for back in [csv, json] {
        let m = back.metric("steps_to_95pct").unwrap();
        assert_eq!(m.n, 0);
        assert!(m.mean.is_nan());
    }
}
