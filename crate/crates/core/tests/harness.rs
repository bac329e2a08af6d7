use std::sync::Arc;

use uavsim::agent::{AgentKind, TrainedAgent};
use uavsim::env::{classify_rsrp, ActionCommand, EnvConfig, RsrpBand, TerminalKind, UavEnv};
use uavsim::geometry::{distance_3d, generate_synthetic_scenario, save_scenario, SyntheticParams};
use uavsim::harness::{
    compare, evaluate_sweep, read_results_csv, run_episode_with, sweep, write_results_csv, ExperimentConfig,
    HarnessError,
};
use uavsim::radio::rsrp_by_id;
use uavsim::Scenario;

fn city() -> Arc<Scenario> {
    let params = SyntheticParams {
        area_size: [500.0, 500.0],
        n_buildings: 5,
        n_gbs: 4,
        min_separation: 200.0,
        time_limit_steps: 100,
        ..Default::default()
    };
    Arc::new(generate_synthetic_scenario(&params, 100).unwrap())
}

/// Heads straight for the destination at full speed and keeps the strongest cell.
fn straight_pilot(env: &UavEnv) -> Result<ActionCommand, HarnessError> {
    let to = env.destination() - env.state().position;
    let step = env.config().step_scale;
    let delta = to * (1.0 / step.max(to.norm()));
    let best = env
        .measurements()?
        .into_iter()
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    Ok(ActionCommand { delta, next_gbs: best.0 })
}

#[test]
fn trace_matches_recomputed_metrics() {
    let sc = city();
    let mut env = UavEnv::new(sc.clone(), EnvConfig::default()).unwrap();
    env.reset(0).unwrap();
    let res = run_episode_with(&mut env, straight_pilot).unwrap();
    let m = &res.metrics;
    let n = res.trace.len() as f64;
    assert_eq!(m.steps, res.trace.len());

    let cfg = EnvConfig::default().reward;
    let mut prev = res.source;
    let mut length = 0.0;
    for r in &res.trace {
        length += distance_3d(prev, r.position);
        prev = r.position;
        assert!((r.rsrp_dbm - rsrp_by_id(&sc, r.serving_gbs, r.position).unwrap()).abs() < 1e-9);
        assert_eq!(r.band, classify_rsrp(r.rsrp_dbm, &cfg));
    }
    assert!((m.path_length - length).abs() < 1e-9);
    let frac = |b| res.trace.iter().filter(|r| r.band == b).count() as f64 / n;
    let occ = m.band_occupancy;
    assert!((occ.excellent - frac(RsrpBand::Excellent)).abs() < 1e-12);
    assert!((occ.mediocre - frac(RsrpBand::Mediocre)).abs() < 1e-12);
    assert!((occ.poor - frac(RsrpBand::Poor)).abs() < 1e-12);
    assert!((occ.excellent + occ.mediocre + occ.poor - 1.0).abs() < 1e-12);
    let mean = res.trace.iter().map(|r| r.rsrp_dbm).sum::<f64>() / n;
    assert!((m.mean_rsrp - mean).abs() < 1e-9);
    assert_eq!(m.handovers, res.trace.iter().filter(|r| r.handover).count());
    let total: f64 = res.trace.iter().map(|r| r.reward).sum();
    assert!((m.total_reward - total).abs() < 1e-6);
}

#[test]
fn straight_flight_has_small_extra_distance() {
    let sc = city();
    let mut env = UavEnv::new(sc, EnvConfig::default()).unwrap();
    env.reset(0).unwrap();
    let res = run_episode_with(&mut env, straight_pilot).unwrap();
    if res.metrics.outcome == TerminalKind::Reached {
        let bound = EnvConfig::default().step_scale / res.metrics.straight_line;
        assert!(res.metrics.extra_distance_ratio >= -1e-12);
        assert!(res.metrics.extra_distance_ratio <= bound + 1e-9);
    }
}

#[test]
fn sweep_rows_summarise_their_episodes() {
    let sc = city();
    let agent = TrainedAgent::random(sc.gbs_list.len());
    let res = sweep(sc, &EnvConfig::default(), &agent, &[150.0], 6, 3, false).unwrap();
    assert_eq!(res.rows.len(), 1);
    assert_eq!(res.episodes.len(), 6);
    let row = &res.rows[0];
    assert_eq!(row.agent, "random");
    let eps: Vec<_> = res.episodes.iter().map(|(_, _, e)| &e.metrics).collect();
    let mean = |f: &dyn Fn(&uavsim::harness::EpisodeMetrics) -> f64| eps.iter().map(|m| f(m)).sum::<f64>() / 6.0;
    assert!((row.mean_rsrp_dbm - mean(&|m| m.mean_rsrp)).abs() < 1e-9);
    assert!((row.mean_handovers - mean(&|m| m.handovers as f64)).abs() < 1e-9);
    assert!((row.mean_excellent_frac - mean(&|m| m.band_occupancy.excellent)).abs() < 1e-9);
    for (_, _, e) in &res.episodes {
        assert!((e.metrics.straight_line - 150.0).abs() < 1e-6);
    }
}

#[test]
fn evaluate_writes_tables_and_compare_subtracts() {
    let sc = city();
    let dir = tempfile::tempdir().unwrap();
    let scenario_path = dir.path().join("scenario.json");
    save_scenario(&sc, &scenario_path).unwrap();
    let cfg = ExperimentConfig {
        scenario: scenario_path,
        agent: AgentKind::Random,
        checkpoint: None,
        distances: vec![100.0, 200.0],
        episodes: 4,
        seed: 11,
        output_dir: dir.path().join("eval"),
        deterministic: false,
        env: EnvConfig::default(),
        write_traces: true,
    };
    let (res, art) = evaluate_sweep(&cfg).unwrap();
    for p in art.paths() {
        assert!(p.exists(), "{}", p.display());
    }
    let rows = read_results_csv(&art.results_csv).unwrap();
    assert_eq!(rows.len(), 2);
    for (a, b) in rows.iter().zip(&res.rows) {
        assert_eq!(a.distance_m, b.distance_m);
        assert!((a.mean_rsrp_dbm - b.mean_rsrp_dbm).abs() < 1e-9);
    }

    let mut episodes = csv::Reader::from_path(&art.episodes_csv).unwrap();
    let rsrp_col = episodes.headers().unwrap().iter().position(|h| h == "mean_rsrp_dbm").unwrap();
    let values: Vec<f64> = episodes.records().map(|r| r.unwrap()[rsrp_col].parse().unwrap()).collect();
    assert_eq!(values.len(), 8);
    let first: f64 = values[..4].iter().sum::<f64>() / 4.0;
    assert!((first - rows[0].mean_rsrp_dbm).abs() < 1e-6);

    let traces = std::fs::read_to_string(art.traces_jsonl.as_ref().unwrap()).unwrap();
    let steps: usize = res.episodes.iter().map(|(_, _, e)| e.trace.len()).sum();
    assert_eq!(traces.lines().count(), steps);

    let deltas = compare(&rows, &rows).unwrap();
    assert!(deltas.iter().all(|d| d.delta_mean_rsrp_db == 0.0));
    let mut shifted = rows.clone();
    shifted[0].distance_m = 123.0;
    assert!(matches!(compare(&rows, &shifted), Err(HarnessError::GridMismatch(_))));

    let copy = dir.path().join("copy.csv");
    write_results_csv(&rows, &copy).unwrap();
    assert_eq!(read_results_csv(&copy).unwrap().len(), 2);
}

#[test]
fn learned_agents_need_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let scenario_path = dir.path().join("scenario.json");
    save_scenario(&city(), &scenario_path).unwrap();
    let cfg = ExperimentConfig {
        scenario: scenario_path,
        agent: AgentKind::Dupac,
        checkpoint: None,
        distances: vec![100.0],
        episodes: 1,
        seed: 0,
        output_dir: dir.path().join("out"),
        deterministic: true,
        env: EnvConfig::default(),
        write_traces: false,
    };
    assert!(evaluate_sweep(&cfg).is_err());
}
