//! Learning stack: MLPs with hand-written backprop, Adam, the hybrid
//! squashed-Gaussian/categorical policy, GAE, clipped PPO, and the
//! rule-based handover baseline.

pub mod adam;
pub mod baseline;
pub mod checkpoint;
pub mod gae;
pub mod mlp;
pub mod policy;
pub mod ppo;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{observation_len, ActionCommand, EnvError, UavEnv};
use crate::geometry::Vec3;

pub use baseline::{baseline_select_gbs, BaselineConfig, BaselineState};
pub use gae::{compute_gae, Trajectory, Transition};
pub use mlp::Mlp;
pub use policy::{policy_entropy, policy_logprob, policy_mode, policy_sample, HybridAction, PolicyNet, PolicyOutput};
pub use ppo::{ppo_update, LossReport, PpoConfig};
pub use train::{train, TrainLogRecord, TrainOutcome, TrainRequest};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("agent built for {agent} gbs cannot drive a scenario with {scenario}")]
    Incompatible { agent: usize, scenario: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    /// Learned movement and learned GBS association.
    Dupac,
    /// Learned movement, A3-rule GBS association.
    Baseline,
    /// Uniform random movement and association.
    Random,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Dupac => "dupac",
            AgentKind::Baseline => "baseline",
            AgentKind::Random => "random",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = AgentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dupac" => Ok(AgentKind::Dupac),
            "baseline" => Ok(AgentKind::Baseline),
            "random" => Ok(AgentKind::Random),
            other => Err(AgentError::Config(format!("unknown agent kind {other:?}"))),
        }
    }
}

/// A policy ready to fly: networks (if any) plus the association rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAgent {
    pub kind: AgentKind,
    pub n_gbs: usize,
    pub policy: Option<PolicyNet>,
    pub value: Option<Mlp>,
    pub baseline: BaselineConfig,
}

/// Per-episode agent-side memory.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMemory {
    pub handover: Option<BaselineState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub command: ActionCommand,
    pub action: HybridAction,
    pub log_prob: f64,
    pub value: f64,
    pub observation: Vec<f64>,
}

impl TrainedAgent {
    pub fn random(n_gbs: usize) -> Self {
        Self { kind: AgentKind::Random, n_gbs, policy: None, value: None, baseline: BaselineConfig::default() }
    }

    /// Freshly initialised networks for `kind`.
    pub fn initialise<R: Rng>(
        kind: AgentKind,
        n_gbs: usize,
        hidden: &[usize],
        baseline: BaselineConfig,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        if kind == AgentKind::Random {
            return Ok(Self::random(n_gbs));
        }
        let obs_dim = observation_len(n_gbs);
        let policy = PolicyNet::new(obs_dim, hidden, n_gbs, kind == AgentKind::Dupac, rng)?;
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let value = Mlp::orthogonal(&sizes, 2f64.sqrt(), 1.0, rng)?;
        Ok(Self { kind, n_gbs, policy: Some(policy), value: Some(value), baseline })
    }

    pub fn check_compatible(&self, env: &UavEnv) -> Result<(), AgentError> {
        if env.n_gbs() != self.n_gbs {
            return Err(AgentError::Incompatible { agent: self.n_gbs, scenario: env.n_gbs() });
        }
        Ok(())
    }

    pub fn begin_episode(&self, env: &UavEnv) -> EpisodeMemory {
        EpisodeMemory {
            handover: (self.kind == AgentKind::Baseline)
                .then(|| BaselineState::new(env.state().serving_gbs, &self.baseline)),
        }
    }

    /// Chooses the next command. `deterministic` uses the distribution modes.
    pub fn act<R: Rng>(
        &self,
        env: &UavEnv,
        memory: &mut EpisodeMemory,
        rng: &mut R,
        deterministic: bool,
    ) -> Result<Decision, AgentError> {
        let observation = env.observe();
        let gbs_ids: Vec<u32> = env.scenario().gbs_list.iter().map(|g| g.id).collect();
        let Some(policy) = &self.policy else {
            let delta = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            let g = rng.gen_range(0..gbs_ids.len());
            return Ok(Decision {
                command: ActionCommand { delta: Vec3::from(delta), next_gbs: gbs_ids[g] },
                action: HybridAction { delta, gbs: Some(g) },
                log_prob: 0.0,
                value: 0.0,
                observation,
            });
        };
        let out = policy.output(&observation)?;
        let (action, log_prob) = if deterministic {
            let a = policy_mode(&out);
            let lp = policy_logprob(&out, &a);
            (a, lp)
        } else {
            policy_sample(&out, rng)
        };
        let next_gbs = match (&action.gbs, memory.handover.as_mut()) {
            (Some(g), _) => gbs_ids[*g],
            (None, Some(state)) => baseline_select_gbs(state, &env.measurements()?),
            (None, None) => env.state().serving_gbs,
        };
        let value = match &self.value {
            Some(v) => v.forward(&observation)?[0],
            None => 0.0,
        };
        Ok(Decision {
            command: ActionCommand { delta: Vec3::from(action.delta), next_gbs },
            action,
            log_prob,
            value,
            observation,
        })
    }
}
