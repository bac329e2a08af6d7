//! Clipped-surrogate PPO update over separate policy and value networks.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_update, AdamConfig, AdamState};
use super::gae::normalize_advantages;
use super::mlp::Mlp;
use super::policy::{entropy_grad, logprob_grad, policy_entropy, policy_logprob, HybridAction, OutputGrad, PolicyNet, MOVE_DIMS};
use super::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub clip_epsilon: f64,
    pub gae_lambda: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Environment steps collected per update, summed over all workers.
    pub rollout_length: usize,
    /// Parallel environment instances.
    pub n_envs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm cap per network; 0 disables.
    pub max_grad_norm: f64,
    /// Multiplier applied to rewards before they enter the learner.
    pub reward_scale: f64,
    pub hidden_sizes: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            gamma: 0.95,
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            epochs_per_update: 4,
            minibatch_size: 256,
            entropy_coef: 0.01,
            value_coef: 0.5,
            rollout_length: 2048,
            n_envs: 8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            hidden_sizes: vec![128, 128],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if !(self.lr > 0.0) || self.epochs_per_update == 0 || self.minibatch_size == 0 {
            return bad("lr, epochs_per_update and minibatch_size must be positive");
        }
        if self.rollout_length == 0 || self.n_envs == 0 || self.rollout_length < self.n_envs {
            return bad("rollout_length must be at least n_envs");
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad("hidden_sizes must be non-empty and positive");
        }
        if !(self.reward_scale > 0.0) || self.max_grad_norm < 0.0 {
            return bad("reward_scale must be positive and max_grad_norm non-negative");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }
}

/// One training sample after advantage estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observation: Vec<f64>,
    pub action: HybridAction,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub value_target: f64,
}

pub fn clip_ratio(ratio: f64, eps: f64) -> f64 {
    ratio.clamp(1.0 - eps, 1.0 + eps)
}

/// `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(clip_ratio(ratio, eps) * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to the ratio; zero when
/// the clipped branch is the active minimum.
pub fn clipped_surrogate_ratio_grad(ratio: f64, advantage: f64, eps: f64) -> f64 {
    if ratio * advantage <= clip_ratio(ratio, eps) * advantage {
        advantage
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrads {
    pub mlp: Vec<f64>,
    pub log_std: [f64; MOVE_DIMS],
}

impl PolicyGrads {
    fn zeros(policy: &PolicyNet) -> Self {
        Self { mlp: vec![0.0; policy.mlp.n_params()], log_std: [0.0; MOVE_DIMS] }
    }

    fn add(&mut self, o: &PolicyGrads) {
        self.mlp.iter_mut().zip(&o.mlp).for_each(|(a, b)| *a += b);
        for i in 0..MOVE_DIMS {
            self.log_std[i] += o.log_std[i];
        }
    }

    fn norm(&self) -> f64 {
        (self.mlp.iter().map(|g| g * g).sum::<f64>() + self.log_std.iter().map(|g| g * g).sum::<f64>()).sqrt()
    }

    fn scale(&mut self, s: f64) {
        self.mlp.iter_mut().for_each(|g| *g *= s);
        self.log_std.iter_mut().for_each(|g| *g *= s);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicyBatchStats {
    /// Mean clipped surrogate.
    pub surrogate: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

const CHUNK: usize = 32;

/// Loss `-(mean surrogate) - entropy_coef * mean entropy` and its gradient.
/// `advantages` are used as given (normalise beforehand).
pub fn policy_loss_grad(
    policy: &PolicyNet,
    batch: &[&Sample],
    cfg: &PpoConfig,
) -> Result<(PolicyBatchStats, PolicyGrads), AgentError> {
    let n = batch.len() as f64;
    let eps = cfg.clip_epsilon;
    let parts: Vec<(PolicyBatchStats, PolicyGrads)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut stats = PolicyBatchStats::default();
            let mut grads = PolicyGrads::zeros(policy);
            for s in chunk {
                let (out, cache) = policy.output_cached(&s.observation)?;
                let lp = policy_logprob(&out, &s.action);
                let ratio = (lp - s.old_log_prob).exp();
                let ent = policy_entropy(&out);
                stats.surrogate += clipped_surrogate(ratio, s.advantage, eps) / n;
                stats.entropy += ent / n;
                stats.approx_kl += (s.old_log_prob - lp) / n;
                if (ratio - 1.0).abs() > eps {
                    stats.clip_fraction += 1.0 / n;
                }
                // d loss / d log_prob = -(1/n) * dS/dr * r
                let d_lp = -clipped_surrogate_ratio_grad(ratio, s.advantage, eps) * ratio / n;
                let mut g = OutputGrad::zeros(out.gbs_logits.len());
                if d_lp != 0.0 {
                    g.add_scaled(&logprob_grad(&out, &s.action), d_lp);
                }
                if cfg.entropy_coef != 0.0 {
                    g.add_scaled(&entropy_grad(&out), -cfg.entropy_coef / n);
                }
                policy.backprop(&cache, &g, &mut grads.mlp, &mut grads.log_std)?;
            }
            Ok((stats, grads))
        })
        .collect::<Result<_, AgentError>>()?;
    let mut stats = PolicyBatchStats::default();
    let mut grads = PolicyGrads::zeros(policy);
    for (s, g) in &parts {
        stats.surrogate += s.surrogate;
        stats.entropy += s.entropy;
        stats.approx_kl += s.approx_kl;
        stats.clip_fraction += s.clip_fraction;
        grads.add(g);
    }
    Ok((stats, grads))
}

/// `value_coef * mean (V(s) - target)^2` and its gradient.
pub fn value_loss_grad(value: &Mlp, batch: &[&Sample], cfg: &PpoConfig) -> Result<(f64, Vec<f64>), AgentError> {
    let n = batch.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grads = vec![0.0; value.n_params()];
            for s in chunk {
                let cache = value.forward_cached(&s.observation)?;
                let err = cache.output()[0] - s.value_target;
                loss += cfg.value_coef * err * err / n;
                value.backprop(&cache, &[2.0 * cfg.value_coef * err / n], &mut grads)?;
            }
            Ok((loss, grads))
        })
        .collect::<Result<_, AgentError>>()?;
    let mut loss = 0.0;
    let mut grads = vec![0.0; value.n_params()];
    for (l, g) in &parts {
        loss += l;
        grads.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grads))
}

/// Networks plus their optimiser state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub policy: PolicyNet,
    pub value: Mlp,
    policy_opt: AdamState,
    log_std_opt: AdamState,
    value_opt: AdamState,
}

impl Learner {
    pub fn new(policy: PolicyNet, value: Mlp) -> Self {
        Self {
            policy_opt: AdamState::new(policy.mlp.n_params()),
            log_std_opt: AdamState::new(MOVE_DIMS),
            value_opt: AdamState::new(value.n_params()),
            policy,
            value,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
    /// Set when a non-finite loss stopped the update early.
    pub aborted: Option<String>,
}

/// Runs `epochs_per_update` shuffled passes of minibatch Adam steps.
/// Advantages are normalised over the whole batch first.
pub fn ppo_update<R: Rng>(
    learner: &mut Learner,
    samples: &[Sample],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossReport, AgentError> {
    let mut report = LossReport::default();
    if samples.is_empty() {
        return Ok(report);
    }
    let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
    normalize_advantages(&mut adv);
    let normed: Vec<Sample> = samples
        .iter()
        .zip(adv)
        .map(|(s, a)| Sample { advantage: a, ..s.clone() })
        .collect();
    let adam = cfg.adam();
    let mut order: Vec<usize> = (0..normed.len()).collect();
    for _ in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for mb in order.chunks(cfg.minibatch_size) {
            let batch: Vec<&Sample> = mb.iter().map(|&i| &normed[i]).collect();
            let (stats, mut pg) = policy_loss_grad(&learner.policy, &batch, cfg)?;
            let (vloss, mut vg) = value_loss_grad(&learner.value, &batch, cfg)?;
            let ploss = -stats.surrogate - cfg.entropy_coef * stats.entropy;
            let pnorm = pg.norm();
            let vnorm = vg.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !(ploss.is_finite() && vloss.is_finite() && pnorm.is_finite() && vnorm.is_finite()) {
                report.aborted = Some(format!(
                    "non-finite update: policy_loss={ploss} value_loss={vloss} |grad_pi|={pnorm} |grad_v|={vnorm}"
                ));
                break;
            }
            if cfg.max_grad_norm > 0.0 {
                if pnorm > cfg.max_grad_norm {
                    pg.scale(cfg.max_grad_norm / pnorm);
                }
                if vnorm > cfg.max_grad_norm {
                    let s = cfg.max_grad_norm / vnorm;
                    vg.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam_update(learner.policy.mlp.params_mut(), &pg.mlp, &mut learner.policy_opt, &adam);
            adam_update(&mut learner.policy.log_std, &pg.log_std, &mut learner.log_std_opt, &adam);
            adam_update(learner.value.params_mut(), &vg, &mut learner.value_opt, &adam);

            report.policy_loss += ploss;
            report.value_loss += vloss;
            report.entropy += stats.entropy;
            report.approx_kl += stats.approx_kl;
            report.clip_fraction += stats.clip_fraction;
            report.minibatches += 1;
        }
        if report.aborted.is_some() {
            break;
        }
    }
    if report.minibatches > 0 {
        let k = report.minibatches as f64;
        report.policy_loss /= k;
        report.value_loss /= k;
        report.entropy /= k;
        report.approx_kl /= k;
        report.clip_fraction /= k;
    }
    Ok(report)
}
