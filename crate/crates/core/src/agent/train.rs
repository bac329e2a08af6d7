//! Rollout collection across parallel environment workers and the PPO loop.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gae::{compute_gae, Trajectory, Transition};
use super::ppo::{ppo_update, Learner, PpoConfig, Sample};
use super::{AgentError, AgentKind, BaselineConfig, EpisodeMemory, TrainedAgent};
use crate::env::{EnvConfig, TerminalKind, UavEnv};
use crate::geometry::Scenario;
use crate::rng::{derive_seed, rng_from_seed, SimRng};

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const WORKER_RNG_STREAM: u64 = 3;
const RESET_STREAM: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub kind: AgentKind,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub baseline: BaselineConfig,
    pub total_steps: usize,
    pub seed: u64,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub iteration: usize,
    pub steps: usize,
    pub episodes: usize,
    /// Mean undiscounted return of episodes finished this iteration.
    pub mean_reward: Option<f64>,
    pub reach_rate: Option<f64>,
    pub collision_rate: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: TrainedAgent,
    pub log: Vec<TrainLogRecord>,
}

#[derive(Debug, Clone, Copy)]
struct EpisodeSummary {
    ret: f64,
    kind: TerminalKind,
}

struct Worker {
    index: u64,
    env: UavEnv,
    rng: SimRng,
    memory: EpisodeMemory,
    episodes: u64,
    ep_return: f64,
}

impl Worker {
    fn new(index: u64, scenario: Arc<Scenario>, env_cfg: &EnvConfig, agent: &TrainedAgent, seed: u64) -> Result<Self, AgentError> {
        let mut env = UavEnv::new(scenario, env_cfg.clone())?;
        env.reset(derive_seed(seed, RESET_STREAM + index, 0))?;
        let memory = agent.begin_episode(&env);
        Ok(Self {
            index,
            env,
            rng: rng_from_seed(derive_seed(seed, WORKER_RNG_STREAM, index)),
            memory,
            episodes: 0,
            ep_return: 0.0,
        })
    }

    fn collect(
        &mut self,
        agent: &TrainedAgent,
        n_steps: usize,
        reward_scale: f64,
        seed: u64,
    ) -> Result<(Trajectory, f64, Vec<EpisodeSummary>), AgentError> {
        let mut traj = Trajectory::default();
        let mut finished = Vec::new();
        for _ in 0..n_steps {
            let d = agent.act(&self.env, &mut self.memory, &mut self.rng, false)?;
            let out = self.env.step(d.command)?;
            self.ep_return += out.reward;
            traj.push(Transition {
                observation: d.observation,
                action: d.action,
                log_prob: d.log_prob,
                reward: out.reward * reward_scale,
                value: d.value,
                done: out.done,
            });
            if out.done {
                finished.push(EpisodeSummary { ret: self.ep_return, kind: out.terminal_kind });
                self.episodes += 1;
                self.ep_return = 0.0;
                self.env.reset(derive_seed(seed, RESET_STREAM + self.index, self.episodes))?;
                self.memory = agent.begin_episode(&self.env);
            }
        }
        let bootstrap = match &agent.value {
            Some(v) => v.forward(&self.env.observe())?[0],
            None => 0.0,
        };
        Ok((traj, bootstrap, finished))
    }
}

pub fn train(scenario: Arc<Scenario>, req: &TrainRequest) -> Result<TrainOutcome, AgentError> {
    train_with_progress(scenario, req, |_| {})
}

/// Alternates rollouts and PPO updates. Deterministic for a fixed request,
/// independent of the rayon thread count.
pub fn train_with_progress(
    scenario: Arc<Scenario>,
    req: &TrainRequest,
    mut on_iteration: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutcome, AgentError> {
    req.ppo.validate()?;
    let cfg = &req.ppo;
    let n_gbs = scenario.gbs_list.len();
    let mut init_rng = rng_from_seed(derive_seed(req.seed, INIT_STREAM, 0));
    let mut agent = TrainedAgent::initialise(req.kind, n_gbs, &cfg.hidden_sizes, req.baseline, &mut init_rng)?;
    let mut log = Vec::new();
    if req.total_steps == 0 || req.kind == AgentKind::Random {
        return Ok(TrainOutcome { agent, log });
    }
    let mut learner = Learner::new(agent.policy.clone().unwrap(), agent.value.clone().unwrap());
    let mut workers: Vec<Worker> = (0..cfg.n_envs as u64)
        .map(|i| Worker::new(i, scenario.clone(), &req.env, &agent, req.seed))
        .collect::<Result<_, _>>()?;

    let steps_per_env = cfg.rollout_length / cfg.n_envs;
    let iterations = req.total_steps.div_ceil(steps_per_env * cfg.n_envs);
    let mut steps = 0;
    for iteration in 1..=iterations {
        agent.policy = Some(learner.policy.clone());
        agent.value = Some(learner.value.clone());
        let snapshot = &agent;
        let rollouts: Vec<(Trajectory, f64, Vec<EpisodeSummary>)> = workers
            .par_iter_mut()
            .map(|w| w.collect(snapshot, steps_per_env, cfg.reward_scale, req.seed))
            .collect::<Result<_, _>>()?;

        let mut samples = Vec::with_capacity(steps_per_env * cfg.n_envs);
        let mut episodes = Vec::new();
        for (traj, bootstrap, finished) in rollouts {
            let (adv, ret) = compute_gae(&traj, cfg.gamma, cfg.gae_lambda, bootstrap)?;
            for ((t, a), r) in traj.transitions.into_iter().zip(adv).zip(ret) {
                samples.push(Sample {
                    observation: t.observation,
                    action: t.action,
                    old_log_prob: t.log_prob,
                    advantage: a,
                    value_target: r,
                });
            }
            episodes.extend(finished);
        }
        steps += samples.len();

        let mut shuffle_rng = rng_from_seed(derive_seed(req.seed, SHUFFLE_STREAM, iteration as u64));
        let report = ppo_update(&mut learner, &samples, cfg, &mut shuffle_rng)?;
        if let Some(msg) = &report.aborted {
            return Err(AgentError::Config(format!("update aborted at iteration {iteration}: {msg}")));
        }

        let n_ep = episodes.len();
        let rate = |k: TerminalKind| {
            (n_ep > 0).then(|| episodes.iter().filter(|e| e.kind == k).count() as f64 / n_ep as f64)
        };
        let record = TrainLogRecord {
            iteration,
            steps,
            episodes: n_ep,
            mean_reward: (n_ep > 0).then(|| episodes.iter().map(|e| e.ret).sum::<f64>() / n_ep as f64),
            reach_rate: rate(TerminalKind::Reached),
            collision_rate: rate(TerminalKind::Collided),
            policy_loss: report.policy_loss,
            value_loss: report.value_loss,
            entropy: report.entropy,
            approx_kl: report.approx_kl,
            clip_fraction: report.clip_fraction,
        };
        on_iteration(&record);
        log.push(record);
    }
    agent.policy = Some(learner.policy);
    agent.value = Some(learner.value);
    Ok(TrainOutcome { agent, log })
}

/// Training log as line-delimited JSON.
pub fn log_to_jsonl(log: &[TrainLogRecord]) -> String {
    let mut s = String::new();
    for r in log {
        s.push_str(&serde_json::to_string(r).expect("log record serializes"));
        s.push('\n');
    }
    s
}
