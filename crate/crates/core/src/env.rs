//! Flight MDP: state assembly, hybrid move/association actions, banded
//! distance/RSRP reward and episode termination.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    distance_3d, has_clearance, segment_intersects_building, GeometryError, ObstacleReading, Scenario, Vec3,
    DEFAULT_SENSOR_RANGE, DEFAULT_SENSOR_RAYS,
};
use crate::radio::{all_rsrp, best_gbs, rsrp_by_id, RadioError, MAX_ALTITUDE, MIN_ALTITUDE};
use crate::rng::rng_from_seed;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    Terminated,
    #[error("gbs id {0} is not part of the scenario")]
    UnknownGbs(u32),
    #[error("invalid environment setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

/// Weights and thresholds of the banded reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub excellent_threshold: f64,
    pub mediocre_threshold: f64,
    pub terminal_bonus: f64,
    pub collision_penalty: f64,
    /// Keep the distance term in the poor band as well. Off by default; with
    /// learned association the plain poor-band case rewards retreating under
    /// a deliberately bad cell and returning under a good one.
    pub poor_band_progress: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            mu1: 10.0,
            mu2: 0.01,
            mu3: 0.1,
            excellent_threshold: -80.0,
            mediocre_threshold: -100.0,
            terminal_bonus: 200.0,
            collision_penalty: -200.0,
            poor_band_progress: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RsrpBand {
    Excellent,
    Mediocre,
    Poor,
}

pub fn classify_rsrp(rsrp: f64, cfg: &RewardConfig) -> RsrpBand {
    if rsrp >= cfg.excellent_threshold {
        RsrpBand::Excellent
    } else if rsrp >= cfg.mediocre_threshold {
        RsrpBand::Mediocre
    } else {
        RsrpBand::Poor
    }
}

/// Per-step reward before terminal shaping.
pub fn reward(d_prev: f64, d_next: f64, rsrp_next: f64, cfg: &RewardConfig) -> f64 {
    let progress = cfg.mu1 * (d_prev - d_next);
    match classify_rsrp(rsrp_next, cfg) {
        RsrpBand::Excellent => progress,
        RsrpBand::Mediocre => progress + cfg.mu2 * rsrp_next,
        RsrpBand::Poor if cfg.poor_band_progress => progress + cfg.mu3 * rsrp_next,
        RsrpBand::Poor => cfg.mu3 * rsrp_next,
    }
}

/// How episode endpoints are chosen at reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EndpointMode {
    /// Scenario source and destination as stored.
    Fixed,
    /// Both endpoints displaced horizontally by up to `radius` meters.
    Jitter { radius: f64 },
    /// Scenario source; destination at a random azimuth and a range drawn
    /// uniformly from `[min_range, max_range]`, at the source altitude.
    RandomDestination { min_range: f64, max_range: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Meters moved per unit of action per step: 75 km/h at one step per second.
    pub step_scale: f64,
    pub arrival_radius: f64,
    pub sensor_range: f64,
    pub sensor_rays: usize,
    pub reward: RewardConfig,
    pub endpoints: EndpointMode,
}

pub const DEFAULT_STEP_SCALE: f64 = 75.0 / 3.6;

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            step_scale: DEFAULT_STEP_SCALE,
            arrival_radius: 10.0,
            sensor_range: DEFAULT_SENSOR_RANGE,
            sensor_rays: DEFAULT_SENSOR_RAYS,
            reward: RewardConfig::default(),
            endpoints: EndpointMode::Fixed,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let r = &self.reward;
        if !(self.step_scale > 0.0 && self.arrival_radius >= 0.0 && self.sensor_range > 0.0) {
            return Err(EnvError::Invalid("step_scale and sensor_range must be positive".into()));
        }
        if self.sensor_rays == 0 {
            return Err(EnvError::Invalid("sensor_rays must be positive".into()));
        }
        if !(r.mediocre_threshold < r.excellent_threshold) {
            return Err(EnvError::Invalid("mediocre_threshold must be below excellent_threshold".into()));
        }
        match self.endpoints {
            EndpointMode::Jitter { radius } if !(radius >= 0.0) => {
                Err(EnvError::Invalid("jitter radius must be non-negative".into()))
            }
            EndpointMode::RandomDestination { min_range, max_range }
                if !(min_range > 0.0 && min_range <= max_range) =>
            {
                Err(EnvError::Invalid("destination range must be positive and ordered".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub position: Vec3,
    /// Displacement over the last step, meters per step.
    pub velocity: Vec3,
    pub obstacle: ObstacleReading,
    pub serving_gbs: u32,
    pub step_index: usize,
    pub dist_to_dest: f64,
    pub serving_rsrp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionCommand {
    /// Per-axis move in units of `step_scale`; clamped to [-1, 1].
    pub delta: Vec3,
    pub next_gbs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Reached,
    Collided,
    OutOfBounds,
    Timeout,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub terminal_kind: TerminalKind,
    pub handover_occurred: bool,
}

/// Observation length for `m` GBSs.
pub fn observation_len(m: usize) -> usize {
    3 + 3 + 1 + 3 + m + 3
}

const ENDPOINT_CLEARANCE: f64 = 5.0;
const ENDPOINT_ATTEMPTS: usize = 1000;

/// One single-threaded flight environment over a shared scenario.
#[derive(Debug, Clone)]
pub struct UavEnv {
    scenario: Arc<Scenario>,
    cfg: EnvConfig,
    state: EnvState,
    source: Vec3,
    destination: Vec3,
    initial_distance: f64,
    done: bool,
}

impl UavEnv {
    /// Builds the environment and resets it onto the scenario endpoints.
    pub fn new(scenario: Arc<Scenario>, cfg: EnvConfig) -> Result<Self, EnvError> {
        scenario.validate()?;
        cfg.validate()?;
        if scenario.gbs_list.is_empty() {
            return Err(RadioError::NoGbs.into());
        }
        if scenario.z_min < MIN_ALTITUDE || scenario.z_max > MAX_ALTITUDE {
            return Err(EnvError::Invalid(format!(
                "flight band [{}, {}] must lie within the radio model's [{MIN_ALTITUDE}, {MAX_ALTITUDE}] m",
                scenario.z_min, scenario.z_max
            )));
        }
        let (source, destination) = (scenario.source, scenario.destination);
        let placeholder = EnvState {
            position: source,
            velocity: Vec3::ZERO,
            obstacle: ObstacleReading { distance: 0.0, direction: Vec3::DOWN },
            serving_gbs: scenario.gbs_list[0].id,
            step_index: 0,
            dist_to_dest: 0.0,
            serving_rsrp: 0.0,
        };
        let mut env = Self {
            scenario,
            cfg,
            state: placeholder,
            source,
            destination,
            initial_distance: 1.0,
            done: true,
        };
        env.reset_with_endpoints(source, destination)?;
        Ok(env)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn source(&self) -> Vec3 {
        self.source
    }

    pub fn destination(&self) -> Vec3 {
        self.destination
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn n_gbs(&self) -> usize {
        self.scenario.gbs_list.len()
    }

    /// Resets to the start of a new episode; endpoints follow the configured mode.
    pub fn reset(&mut self, seed: u64) -> Result<EnvState, EnvError> {
        let (s, d) = self.sample_endpoints(seed)?;
        self.reset_with_endpoints(s, d)
    }

    pub fn reset_with_endpoints(&mut self, source: Vec3, destination: Vec3) -> Result<EnvState, EnvError> {
        for p in [source, destination] {
            if self.scenario.inside_any_building(p) {
                return Err(GeometryError::InsideBuilding { x: p.x, y: p.y, z: p.z }.into());
            }
            if !self.scenario.in_area(p) || p.z < self.scenario.z_min || p.z > self.scenario.z_max {
                return Err(EnvError::Invalid(format!("endpoint {:?} outside the flight volume", p.to_array())));
            }
        }
        let (serving, serving_rsrp) = best_gbs(&self.scenario, source)?;
        let obstacle = self.sense(source)?;
        self.source = source;
        self.destination = destination;
        self.initial_distance = distance_3d(source, destination).max(1.0);
        self.state = EnvState {
            position: source,
            velocity: Vec3::ZERO,
            obstacle,
            serving_gbs: serving,
            step_index: 0,
            dist_to_dest: distance_3d(source, destination),
            serving_rsrp,
        };
        self.done = false;
        Ok(self.state.clone())
    }

    fn sample_endpoints(&self, seed: u64) -> Result<(Vec3, Vec3), EnvError> {
        let sc = &self.scenario;
        let mut rng = rng_from_seed(seed);
        let usable = |p: Vec3| {
            sc.in_area(p) && p.z >= sc.z_min && p.z <= sc.z_max && has_clearance(&sc.buildings, p, ENDPOINT_CLEARANCE)
        };
        match self.cfg.endpoints {
            EndpointMode::Fixed => Ok((sc.source, sc.destination)),
            EndpointMode::Jitter { radius } => {
                let mut jitter = |p: Vec3| {
                    for _ in 0..ENDPOINT_ATTEMPTS {
                        let r = radius * rng.gen::<f64>().sqrt();
                        let a = rng.gen_range(0.0..std::f64::consts::TAU);
                        let q = p + Vec3::new(r * a.cos(), r * a.sin(), 0.0);
                        if usable(q) {
                            return q;
                        }
                    }
                    p
                };
                let s = jitter(sc.source);
                let d = jitter(sc.destination);
                Ok((s, d))
            }
            EndpointMode::RandomDestination { min_range, max_range } => {
                for _ in 0..ENDPOINT_ATTEMPTS {
                    let r = rng.gen_range(min_range..=max_range);
                    let a = rng.gen_range(0.0..std::f64::consts::TAU);
                    let d = sc.source + Vec3::new(r * a.cos(), r * a.sin(), 0.0);
                    if usable(d) {
                        return Ok((sc.source, d));
                    }
                }
                Err(EnvError::Invalid("no free destination within the requested range".into()))
            }
        }
    }

    fn sense(&self, p: Vec3) -> Result<ObstacleReading, EnvError> {
        Ok(self
            .scenario
            .nearest_obstacle(p, self.cfg.sensor_range, self.cfg.sensor_rays)?)
    }

    /// RSRP from every GBS at the current position.
    pub fn measurements(&self) -> Result<Vec<(u32, f64)>, EnvError> {
        Ok(all_rsrp(&self.scenario, self.state.position)?)
    }

    pub fn gbs_index(&self, id: u32) -> Option<usize> {
        self.scenario.gbs_list.iter().position(|g| g.id == id)
    }

    pub fn step(&mut self, action: ActionCommand) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::Terminated);
        }
        if self.gbs_index(action.next_gbs).is_none() {
            return Err(EnvError::UnknownGbs(action.next_gbs));
        }
        let sc = self.scenario.clone();
        let scale = self.cfg.step_scale;
        let clamp_unit = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        let delta = Vec3::new(clamp_unit(action.delta.x), clamp_unit(action.delta.y), clamp_unit(action.delta.z));

        let pos = self.state.position;
        let raw = pos + delta * scale;
        let lo = [0.0, 0.0, sc.z_min];
        let hi = [sc.area[0], sc.area[1], sc.z_max];
        let raw_a = raw.to_array();
        let mut excursion = 0.0_f64;
        let mut clamped = [0.0; 3];
        for i in 0..3 {
            excursion = excursion.max(lo[i] - raw_a[i]).max(raw_a[i] - hi[i]);
            clamped[i] = raw_a[i].clamp(lo[i], hi[i]);
        }
        let target = Vec3::from(clamped);
        let out_of_bounds = excursion > scale;

        let collided = sc.inside_any_building(target)
            || sc.buildings.iter().any(|b| segment_intersects_building(pos, target, b));
        let mut next = if collided { pos } else { target };
        let mut d_next = distance_3d(next, self.destination);
        let reached = !collided
            && d_next <= self.cfg.arrival_radius
            && sc.is_los(next, self.destination);
        if reached {
            next = self.destination;
            d_next = 0.0;
        }

        let serving = action.next_gbs;
        let rsrp = rsrp_by_id(&sc, serving, next)?;
        let mut r = reward(self.state.dist_to_dest, d_next, rsrp, &self.cfg.reward);
        let step_index = self.state.step_index + 1;
        let kind = if collided {
            r += self.cfg.reward.collision_penalty;
            TerminalKind::Collided
        } else if reached {
            r += self.cfg.reward.terminal_bonus;
            TerminalKind::Reached
        } else if out_of_bounds {
            TerminalKind::OutOfBounds
        } else if step_index >= sc.time_limit_steps {
            TerminalKind::Timeout
        } else {
            TerminalKind::None
        };

        let handover = serving != self.state.serving_gbs;
        self.state = EnvState {
            position: next,
            velocity: next - pos,
            obstacle: self.sense(next)?,
            serving_gbs: serving,
            step_index,
            dist_to_dest: d_next,
            serving_rsrp: rsrp,
        };
        self.done = kind != TerminalKind::None;
        Ok(StepOutcome {
            next_state: self.state.clone(),
            reward: r,
            done: self.done,
            terminal_kind: kind,
            handover_occurred: handover,
        })
    }

    /// Normalized observation of the current state; every entry lies in [-1, 1].
    pub fn observe(&self) -> Vec<f64> {
        let sc = &self.scenario;
        let s = &self.state;
        let m = sc.gbs_list.len();
        let mut obs = Vec::with_capacity(observation_len(m));
        obs.push(s.position.x / sc.area[0]);
        obs.push(s.position.y / sc.area[1]);
        obs.push(s.position.z / sc.z_max);
        let scale = self.cfg.step_scale;
        for v in s.velocity.to_array() {
            obs.push((v / scale).clamp(-1.0, 1.0));
        }
        obs.push(s.obstacle.distance / self.cfg.sensor_range);
        obs.extend(s.obstacle.direction.to_array());
        let serving = self.gbs_index(s.serving_gbs).expect("serving gbs belongs to scenario");
        obs.extend((0..m).map(|i| if i == serving { 1.0 } else { 0.0 }));
        let to_dest = (self.destination - s.position) * (1.0 / self.initial_distance);
        obs.extend(to_dest.to_array().map(|v| v.clamp(-1.0, 1.0)));
        obs
    }
}
