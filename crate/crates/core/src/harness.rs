//! Evaluation: single episodes with full traces, distance sweeps and
//! table comparison.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::checkpoint::load_checkpoint;
use crate::agent::{AgentError, AgentKind, TrainedAgent};
use crate::env::{classify_rsrp, ActionCommand, EnvConfig, EnvError, RsrpBand, TerminalKind, UavEnv};
use crate::geometry::{distance_3d, has_clearance, load_scenario, GeometryError, Scenario, Vec3};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

const PLACEMENT_STREAM: u64 = 11;
const EPISODE_STREAM: u64 = 12;
const PLACEMENT_ATTEMPTS: usize = 2000;
const ENDPOINT_CLEARANCE: f64 = 5.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("checkpoint {0} does not exist")]
    MissingCheckpoint(PathBuf),
    #[error("sweep grids differ: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BandOccupancy {
    pub excellent: f64,
    pub mediocre: f64,
    pub poor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub path_length: f64,
    pub straight_line: f64,
    pub extra_distance_ratio: f64,
    pub band_occupancy: BandOccupancy,
    pub mean_rsrp: f64,
    pub handovers: usize,
    pub outcome: TerminalKind,
    pub steps: usize,
    pub total_reward: f64,
}

/// State after one step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub position: Vec3,
    pub serving_gbs: u32,
    pub rsrp_dbm: f64,
    pub reward: f64,
    pub band: RsrpBand,
    pub handover: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub source: Vec3,
    pub destination: Vec3,
    pub metrics: EpisodeMetrics,
    pub trace: Vec<StepRecord>,
}

/// Flies one episode from the environment's current state, asking `pilot`
/// for each command.
pub fn run_episode_with<F>(env: &mut UavEnv, mut pilot: F) -> Result<EpisodeResult, HarnessError>
where
    F: FnMut(&UavEnv) -> Result<ActionCommand, HarnessError>,
{
    if env.is_done() {
        return Err(EnvError::Terminated.into());
    }
    let source = env.state().position;
    let destination = env.destination();
    let band_cfg = env.config().reward.clone();
    let mut trace = Vec::new();
    let mut prev = source;
    let mut path_length = 0.0;
    let mut total_reward = 0.0;
    let mut outcome = TerminalKind::None;
    while !env.is_done() {
        let cmd = pilot(env)?;
        let out = env.step(cmd)?;
        let s = &out.next_state;
        path_length += distance_3d(prev, s.position);
        prev = s.position;
        total_reward += out.reward;
        outcome = out.terminal_kind;
        trace.push(StepRecord {
            step: s.step_index,
            position: s.position,
            serving_gbs: s.serving_gbs,
            rsrp_dbm: s.serving_rsrp,
            reward: out.reward,
            band: classify_rsrp(s.serving_rsrp, &band_cfg),
            handover: out.handover_occurred,
        });
    }
    let n = trace.len() as f64;
    let frac = |b: RsrpBand| trace.iter().filter(|r| r.band == b).count() as f64 / n;
    let straight_line = distance_3d(source, destination);
    let metrics = EpisodeMetrics {
        path_length,
        straight_line,
        extra_distance_ratio: if straight_line > 0.0 { path_length / straight_line - 1.0 } else { 0.0 },
        band_occupancy: BandOccupancy {
            excellent: frac(RsrpBand::Excellent),
            mediocre: frac(RsrpBand::Mediocre),
            poor: frac(RsrpBand::Poor),
        },
        mean_rsrp: trace.iter().map(|r| r.rsrp_dbm).sum::<f64>() / n,
        handovers: trace.iter().filter(|r| r.handover).count(),
        outcome,
        steps: trace.len(),
        total_reward,
    };
    Ok(EpisodeResult { source, destination, metrics, trace })
}

/// Flies `agent` from the environment's current state.
pub fn run_agent_episode(
    env: &mut UavEnv,
    agent: &TrainedAgent,
    rng: &mut SimRng,
    deterministic: bool,
) -> Result<EpisodeResult, HarnessError> {
    agent.check_compatible(env)?;
    let mut memory = agent.begin_episode(env);
    run_episode_with(env, |e| Ok(agent.act(e, &mut memory, rng, deterministic)?.command))
}

/// Resets a fresh environment with `seed` (endpoints follow `env_cfg`) and
/// flies one episode.
pub fn run_episode(
    scenario: Arc<Scenario>,
    env_cfg: &EnvConfig,
    agent: &TrainedAgent,
    seed: u64,
    deterministic: bool,
) -> Result<EpisodeResult, HarnessError> {
    let mut env = UavEnv::new(scenario, env_cfg.clone())?;
    env.reset(derive_seed(seed, EPISODE_STREAM, 0))?;
    let mut rng = rng_from_seed(derive_seed(seed, EPISODE_STREAM, 1));
    run_agent_episode(&mut env, agent, &mut rng, deterministic)
}

fn usable(sc: &Scenario, p: Vec3) -> bool {
    sc.in_area(p) && p.z >= sc.z_min && p.z <= sc.z_max && has_clearance(&sc.buildings, p, ENDPOINT_CLEARANCE)
}

/// Source and destination `range` meters apart at the source altitude.
/// Keeps the scenario source when some azimuth fits; otherwise the source is
/// re-drawn as well.
pub fn place_endpoints(sc: &Scenario, range: f64, rng: &mut SimRng) -> Result<(Vec3, Vec3), HarnessError> {
    let at = |s: Vec3, a: f64| s + Vec3::new(range * a.cos(), range * a.sin(), 0.0);
    for _ in 0..PLACEMENT_ATTEMPTS {
        let d = at(sc.source, rng.gen_range(0.0..std::f64::consts::TAU));
        if usable(sc, d) {
            return Ok((sc.source, d));
        }
    }
    for _ in 0..PLACEMENT_ATTEMPTS {
        let s = Vec3::new(rng.gen_range(0.0..=sc.area[0]), rng.gen_range(0.0..=sc.area[1]), sc.source.z);
        let d = at(s, rng.gen_range(0.0..std::f64::consts::TAU));
        if usable(sc, s) && usable(sc, d) {
            return Ok((s, d));
        }
    }
    Err(HarnessError::Config(format!("no free endpoint pair {range} m apart fits the scenario")))
}

fn default_true() -> bool {
    true
}

fn default_episodes() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: PathBuf,
    pub agent: AgentKind,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub distances: Vec<f64>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub deterministic: bool,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default = "default_true")]
    pub write_traces: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(HarnessError::Config("episodes must be at least 1".into()));
        }
        if self.distances.is_empty() || self.distances.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(HarnessError::Config("distances must be a non-empty list of positive ranges".into()));
        }
        if self.agent != AgentKind::Random && self.checkpoint.is_none() {
            return Err(HarnessError::Config(format!("agent {} needs a checkpoint", self.agent.as_str())));
        }
        Ok(())
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub distance_m: f64,
    pub agent: String,
    pub episodes: usize,
    pub reach_rate: f64,
    /// Averaged over episodes that reached the destination; NaN if none did.
    pub mean_extra_distance_ratio: f64,
    pub mean_excellent_frac: f64,
    pub mean_mediocre_frac: f64,
    pub mean_poor_frac: f64,
    pub mean_rsrp_dbm: f64,
    pub mean_handovers: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub distance_m: f64,
    pub episodes: usize,
    pub reach_rate: f64,
    pub path_length: MeanStd,
    pub straight_line: MeanStd,
    pub extra_distance_ratio: MeanStd,
    pub excellent_frac: MeanStd,
    pub mediocre_frac: MeanStd,
    pub poor_frac: MeanStd,
    pub mean_rsrp: MeanStd,
    pub handovers: MeanStd,
    pub steps: MeanStd,
    pub total_reward: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub distance_m: f64,
    pub episode: usize,
    pub outcome: TerminalKind,
    pub steps: usize,
    pub path_length: f64,
    pub straight_line: f64,
    pub extra_distance_ratio: f64,
    pub excellent_frac: f64,
    pub mediocre_frac: f64,
    pub poor_frac: f64,
    pub mean_rsrp_dbm: f64,
    pub handovers: usize,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub agent: AgentKind,
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<DistanceSummary>,
    pub episodes: Vec<(f64, usize, EpisodeResult)>,
}

fn summarise(agent: AgentKind, distance: f64, eps: &[&EpisodeResult]) -> (SweepRow, DistanceSummary) {
    let n = eps.len();
    let col = |f: &dyn Fn(&EpisodeMetrics) -> f64| eps.iter().map(|e| f(&e.metrics)).collect::<Vec<_>>();
    let reached: Vec<f64> = eps
        .iter()
        .filter(|e| e.metrics.outcome == TerminalKind::Reached)
        .map(|e| e.metrics.extra_distance_ratio)
        .collect();
    let reach_rate = reached.len() as f64 / n as f64;
    let s = DistanceSummary {
        distance_m: distance,
        episodes: n,
        reach_rate,
        path_length: MeanStd::of(&col(&|m| m.path_length)),
        straight_line: MeanStd::of(&col(&|m| m.straight_line)),
        extra_distance_ratio: MeanStd::of(&reached),
        excellent_frac: MeanStd::of(&col(&|m| m.band_occupancy.excellent)),
        mediocre_frac: MeanStd::of(&col(&|m| m.band_occupancy.mediocre)),
        poor_frac: MeanStd::of(&col(&|m| m.band_occupancy.poor)),
        mean_rsrp: MeanStd::of(&col(&|m| m.mean_rsrp)),
        handovers: MeanStd::of(&col(&|m| m.handovers as f64)),
        steps: MeanStd::of(&col(&|m| m.steps as f64)),
        total_reward: MeanStd::of(&col(&|m| m.total_reward)),
    };
    let row = SweepRow {
        distance_m: distance,
        agent: agent.as_str().to_string(),
        episodes: n,
        reach_rate,
        mean_extra_distance_ratio: s.extra_distance_ratio.mean,
        mean_excellent_frac: s.excellent_frac.mean,
        mean_mediocre_frac: s.mediocre_frac.mean,
        mean_poor_frac: s.poor_frac.mean,
        mean_rsrp_dbm: s.mean_rsrp.mean,
        mean_handovers: s.handovers.mean,
    };
    (row, s)
}

/// In-memory sweep: `episodes` flights per distance, run in parallel with
/// per-episode seeds and collected in (distance, episode) order.
pub fn sweep(
    scenario: Arc<Scenario>,
    env_cfg: &EnvConfig,
    agent: &TrainedAgent,
    distances: &[f64],
    episodes: usize,
    seed: u64,
    deterministic: bool,
) -> Result<SweepResult, HarnessError> {
    if episodes == 0 || distances.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one distance and one episode".into()));
    }
    let probe = UavEnv::new(scenario.clone(), env_cfg.clone())?;
    agent.check_compatible(&probe)?;
    let jobs: Vec<(usize, usize)> = (0..distances.len()).flat_map(|d| (0..episodes).map(move |e| (d, e))).collect();
    let results: Vec<EpisodeResult> = jobs
        .par_iter()
        .map(|&(di, ei)| {
            let key = (di * episodes + ei) as u64;
            let mut place_rng = rng_from_seed(derive_seed(seed, PLACEMENT_STREAM, key));
            let (s, d) = place_endpoints(&scenario, distances[di], &mut place_rng)?;
            let mut env = probe.clone();
            env.reset_with_endpoints(s, d)?;
            let mut rng = rng_from_seed(derive_seed(seed, EPISODE_STREAM, key));
            run_agent_episode(&mut env, agent, &mut rng, deterministic)
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (di, &dist) in distances.iter().enumerate() {
        let eps: Vec<&EpisodeResult> = results[di * episodes..(di + 1) * episodes].iter().collect();
        let (row, s) = summarise(agent.kind, dist, &eps);
        rows.push(row);
        summaries.push(s);
    }
    let episodes = jobs.iter().zip(results).map(|(&(di, ei), r)| (distances[di], ei, r)).collect();
    Ok(SweepResult { agent: agent.kind, rows, summaries, episodes })
}

/// Paths written by [`evaluate_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepArtifacts {
    pub results_csv: PathBuf,
    pub results_json: PathBuf,
    pub episodes_csv: PathBuf,
    pub traces_jsonl: Option<PathBuf>,
}

impl SweepArtifacts {
    pub fn paths(&self) -> Vec<&Path> {
        let mut v = vec![self.results_csv.as_path(), self.results_json.as_path(), self.episodes_csv.as_path()];
        if let Some(t) = &self.traces_jsonl {
            v.push(t.as_path());
        }
        v
    }
}

/// Loads scenario and checkpoint, runs the sweep and writes the tables.
pub fn evaluate_sweep(cfg: &ExperimentConfig) -> Result<(SweepResult, SweepArtifacts), HarnessError> {
    cfg.validate()?;
    let scenario = Arc::new(load_scenario(&cfg.scenario)?);
    let agent = match (&cfg.checkpoint, cfg.agent) {
        (_, AgentKind::Random) => TrainedAgent::random(scenario.gbs_list.len()),
        (Some(path), kind) => {
            if !path.exists() {
                return Err(HarnessError::MissingCheckpoint(path.clone()));
            }
            let a = load_checkpoint(path)?;
            if a.kind != kind {
                return Err(HarnessError::Config(format!(
                    "checkpoint holds a {} agent, expected {}",
                    a.kind.as_str(),
                    kind.as_str()
                )));
            }
            a
        }
        (None, _) => unreachable!("validated"),
    };
    let result = sweep(scenario, &cfg.env, &agent, &cfg.distances, cfg.episodes, cfg.seed, cfg.deterministic)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let artifacts = write_sweep(&result, &cfg.output_dir, cfg.write_traces)?;
    Ok((result, artifacts))
}

pub fn write_sweep(result: &SweepResult, dir: &Path, traces: bool) -> Result<SweepArtifacts, HarnessError> {
    let results_csv = dir.join("results.csv");
    write_results_csv(&result.rows, &results_csv)?;

    let results_json = dir.join("results.json");
    let json = serde_json::json!({ "agent": result.agent, "rows": result.rows, "summaries": result.summaries });
    std::fs::write(&results_json, serde_json::to_string_pretty(&json)? + "\n")?;

    let episodes_csv = dir.join("episodes.csv");
    let mut w = csv::Writer::from_path(&episodes_csv)?;
    for (dist, ei, r) in &result.episodes {
        let m = &r.metrics;
        w.serialize(EpisodeRow {
            distance_m: *dist,
            episode: *ei,
            outcome: m.outcome,
            steps: m.steps,
            path_length: m.path_length,
            straight_line: m.straight_line,
            extra_distance_ratio: m.extra_distance_ratio,
            excellent_frac: m.band_occupancy.excellent,
            mediocre_frac: m.band_occupancy.mediocre,
            poor_frac: m.band_occupancy.poor,
            mean_rsrp_dbm: m.mean_rsrp,
            handovers: m.handovers,
            total_reward: m.total_reward,
        })?;
    }
    w.flush()?;

    let traces_jsonl = if traces {
        let path = dir.join("traces.jsonl");
        let mut f = BufWriter::new(File::create(&path)?);
        for (dist, ei, r) in &result.episodes {
            for s in &r.trace {
                let line = serde_json::json!({ "distance_m": dist, "episode": ei, "step": s });
                serde_json::to_writer(&mut f, &line)?;
                f.write_all(b"\n")?;
            }
        }
        f.flush()?;
        Some(path)
    } else {
        None
    };
    Ok(SweepArtifacts { results_csv, results_json, episodes_csv, traces_jsonl })
}

pub fn write_results_csv(rows: &[SweepRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<SweepRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<SweepRow>, _>>()?)
}

/// Per-distance differences `a - b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub distance_m: f64,
    pub agent_a: String,
    pub agent_b: String,
    pub delta_reach_rate: f64,
    pub delta_extra_distance_ratio: f64,
    pub delta_excellent_frac: f64,
    pub delta_mediocre_frac: f64,
    pub delta_poor_frac: f64,
    pub delta_mean_rsrp_db: f64,
    pub delta_mean_handovers: f64,
}

pub fn compare(a: &[SweepRow], b: &[SweepRow]) -> Result<Vec<DeltaRow>, HarnessError> {
    let grid = |t: &[SweepRow]| t.iter().map(|r| r.distance_m).collect::<Vec<_>>();
    if grid(a) != grid(b) {
        return Err(HarnessError::GridMismatch(format!("{:?} vs {:?}", grid(a), grid(b))));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| DeltaRow {
            distance_m: x.distance_m,
            agent_a: x.agent.clone(),
            agent_b: y.agent.clone(),
            delta_reach_rate: x.reach_rate - y.reach_rate,
            delta_extra_distance_ratio: x.mean_extra_distance_ratio - y.mean_extra_distance_ratio,
            delta_excellent_frac: x.mean_excellent_frac - y.mean_excellent_frac,
            delta_mediocre_frac: x.mean_mediocre_frac - y.mean_mediocre_frac,
            delta_poor_frac: x.mean_poor_frac - y.mean_poor_frac,
            delta_mean_rsrp_db: x.mean_rsrp_dbm - y.mean_rsrp_dbm,
            delta_mean_handovers: x.mean_handovers - y.mean_handovers,
        })
        .collect())
}

pub fn write_deltas_csv(rows: &[DeltaRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(d: f64, ex: f64, rsrp: f64) -> SweepRow {
        SweepRow {
            distance_m: d,
            agent: "x".into(),
            episodes: 1,
            reach_rate: 1.0,
            mean_extra_distance_ratio: 0.1,
            mean_excellent_frac: ex,
            mean_mediocre_frac: 1.0 - ex,
            mean_poor_frac: 0.0,
            mean_rsrp_dbm: rsrp,
            mean_handovers: 0.0,
        }
    }

    #[test]
    fn self_comparison_is_zero() {
        let t = vec![row(200.0, 0.7, -80.0), row(400.0, 0.5, -85.0)];
        for d in compare(&t, &t).unwrap() {
            assert_eq!(d.delta_excellent_frac, 0.0);
            assert_eq!(d.delta_mean_rsrp_db, 0.0);
            assert_eq!(d.delta_extra_distance_ratio, 0.0);
        }
    }

    #[test]
    fn known_offsets() {
        let a = vec![row(200.0, 0.75, -80.0)];
        let b = vec![row(200.0, 0.5, -83.5)];
        let d = &compare(&a, &b).unwrap()[0];
        assert_eq!(d.delta_excellent_frac, 0.25);
        assert_eq!(d.delta_mean_rsrp_db, 3.5);
        assert!((d.delta_mediocre_frac - (0.25 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_errors() {
        let a = vec![row(200.0, 0.5, -80.0)];
        let b = vec![row(300.0, 0.5, -80.0)];
        assert!(matches!(compare(&a, &b), Err(HarnessError::GridMismatch(_))));
    }

    #[test]
    fn mean_std_population() {
        let m = MeanStd::of(&[1.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 1.0);
    }
}
