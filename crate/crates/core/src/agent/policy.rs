//! Hybrid action distribution: a tanh-squashed diagonal Gaussian over the
//! 3D move and an independent categorical over the serving GBS.

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{ForwardCache, Mlp};
use super::AgentError;

pub const MOVE_DIMS: usize = 3;
/// Squashed actions are kept this far inside (-1, 1) before inverting tanh.
pub const SQUASH_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    /// Pre-squash Gaussian mean.
    pub mean: [f64; MOVE_DIMS],
    pub log_std: [f64; MOVE_DIMS],
    /// Empty for movement-only policies.
    pub gbs_logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridAction {
    /// Move in [-1, 1]^3.
    pub delta: [f64; MOVE_DIMS],
    /// Index into the scenario's GBS list.
    pub gbs: Option<usize>,
}

/// Gradient of a scalar with respect to every policy output.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrad {
    pub mean: [f64; MOVE_DIMS],
    pub log_std: [f64; MOVE_DIMS],
    pub logits: Vec<f64>,
}

impl OutputGrad {
    pub fn zeros(n_logits: usize) -> Self {
        Self { mean: [0.0; MOVE_DIMS], log_std: [0.0; MOVE_DIMS], logits: vec![0.0; n_logits] }
    }

    pub fn add_scaled(&mut self, other: &OutputGrad, s: f64) {
        for i in 0..MOVE_DIMS {
            self.mean[i] += s * other.mean[i];
            self.log_std[i] += s * other.log_std[i];
        }
        for (a, b) in self.logits.iter_mut().zip(&other.logits) {
            *a += s * b;
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn categorical_entropy(logits: &[f64]) -> f64 {
    softmax(logits)
        .iter()
        .zip(log_softmax(logits))
        .map(|(p, lp)| if *p > 0.0 { -p * lp } else { 0.0 })
        .sum()
}

fn clamp_squashed(a: f64) -> f64 {
    a.clamp(-1.0 + SQUASH_EPS, 1.0 - SQUASH_EPS)
}

/// Log-density of the squashed-Gaussian plus categorical product.
pub fn policy_logprob(out: &PolicyOutput, action: &HybridAction) -> f64 {
    let mut lp = 0.0;
    for i in 0..MOVE_DIMS {
        let a = clamp_squashed(action.delta[i]);
        let u = a.atanh();
        let z = (u - out.mean[i]) / out.log_std[i].exp();
        lp += -0.5 * z * z - out.log_std[i] - HALF_LN_2PI - (1.0 - a * a).ln();
    }
    if let (Some(g), false) = (action.gbs, out.gbs_logits.is_empty()) {
        lp += log_softmax(&out.gbs_logits)[g];
    }
    lp
}

/// Density of the unsquashed Gaussian sample `raw` and the categorical choice.
pub fn pre_squash_log_density(out: &PolicyOutput, raw: &[f64; MOVE_DIMS], gbs: Option<usize>) -> f64 {
    let mut lp = 0.0;
    for i in 0..MOVE_DIMS {
        let z = (raw[i] - out.mean[i]) / out.log_std[i].exp();
        lp += -0.5 * z * z - out.log_std[i] - HALF_LN_2PI;
    }
    if let (Some(g), false) = (gbs, out.gbs_logits.is_empty()) {
        lp += log_softmax(&out.gbs_logits)[g];
    }
    lp
}

/// Gaussian entropy (pre-squash) plus categorical entropy.
pub fn policy_entropy(out: &PolicyOutput) -> f64 {
    let gauss: f64 = out.log_std.iter().map(|ls| 0.5 + HALF_LN_2PI + ls).sum();
    let cat = if out.gbs_logits.is_empty() { 0.0 } else { categorical_entropy(&out.gbs_logits) };
    gauss + cat
}

/// Draws an action; returns it together with its log-probability and the
/// unsquashed Gaussian sample.
pub fn policy_sample_raw<R: Rng>(out: &PolicyOutput, rng: &mut R) -> (HybridAction, f64, [f64; MOVE_DIMS]) {
    let mut raw = [0.0; MOVE_DIMS];
    let mut delta = [0.0; MOVE_DIMS];
    for i in 0..MOVE_DIMS {
        let eps: f64 = rng.sample(StandardNormal);
        raw[i] = out.mean[i] + out.log_std[i].exp() * eps;
        delta[i] = raw[i].tanh();
    }
    let gbs = (!out.gbs_logits.is_empty()).then(|| {
        let probs = softmax(&out.gbs_logits);
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        probs
            .iter()
            .position(|p| {
                acc += p;
                r < acc
            })
            .unwrap_or(probs.len() - 1)
    });
    let action = HybridAction { delta, gbs };
    let lp = policy_logprob(out, &action);
    (action, lp, raw)
}

pub fn policy_sample<R: Rng>(out: &PolicyOutput, rng: &mut R) -> (HybridAction, f64) {
    let (a, lp, _) = policy_sample_raw(out, rng);
    (a, lp)
}

/// Distribution mode: `tanh(mean)` and the highest logit (lowest index on ties).
pub fn policy_mode(out: &PolicyOutput) -> HybridAction {
    let mut delta = [0.0; MOVE_DIMS];
    for i in 0..MOVE_DIMS {
        delta[i] = out.mean[i].tanh();
    }
    let gbs = (!out.gbs_logits.is_empty()).then(|| {
        let mut best = 0;
        for (i, &l) in out.gbs_logits.iter().enumerate() {
            if l > out.gbs_logits[best] {
                best = i;
            }
        }
        best
    });
    HybridAction { delta, gbs }
}

pub fn logprob_grad(out: &PolicyOutput, action: &HybridAction) -> OutputGrad {
    let mut g = OutputGrad::zeros(out.gbs_logits.len());
    for i in 0..MOVE_DIMS {
        let u = clamp_squashed(action.delta[i]).atanh();
        let sigma = out.log_std[i].exp();
        let z = (u - out.mean[i]) / sigma;
        g.mean[i] = z / sigma;
        g.log_std[i] = z * z - 1.0;
    }
    if let (Some(k), false) = (action.gbs, out.gbs_logits.is_empty()) {
        for (j, p) in softmax(&out.gbs_logits).into_iter().enumerate() {
            g.logits[j] = if j == k { 1.0 - p } else { -p };
        }
    }
    g
}

pub fn entropy_grad(out: &PolicyOutput) -> OutputGrad {
    let mut g = OutputGrad::zeros(out.gbs_logits.len());
    g.log_std = [1.0; MOVE_DIMS];
    if !out.gbs_logits.is_empty() {
        let p = softmax(&out.gbs_logits);
        let lp = log_softmax(&out.gbs_logits);
        let h = categorical_entropy(&out.gbs_logits);
        for j in 0..p.len() {
            g.logits[j] = -p[j] * (lp[j] + h);
        }
    }
    g
}

/// Policy network: MLP producing the Gaussian means and GBS logits, plus a
/// state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub mlp: Mlp,
    pub log_std: [f64; MOVE_DIMS],
    n_gbs: usize,
    hybrid: bool,
}

impl PolicyNet {
    pub fn new<R: Rng>(obs_dim: usize, hidden: &[usize], n_gbs: usize, hybrid: bool, rng: &mut R) -> Result<Self, AgentError> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(MOVE_DIMS + if hybrid { n_gbs } else { 0 });
        let mlp = Mlp::orthogonal(&sizes, 2f64.sqrt(), 0.01, rng)?;
        Ok(Self { mlp, log_std: [0.0; MOVE_DIMS], n_gbs, hybrid })
    }

    pub fn from_parts(mlp: Mlp, log_std: [f64; MOVE_DIMS], n_gbs: usize, hybrid: bool) -> Result<Self, AgentError> {
        let expected = MOVE_DIMS + if hybrid { n_gbs } else { 0 };
        if mlp.output_len() != expected {
            return Err(AgentError::Shape(format!(
                "policy head has {} outputs, expected {expected}",
                mlp.output_len()
            )));
        }
        Ok(Self { mlp, log_std, n_gbs, hybrid })
    }

    pub fn n_gbs(&self) -> usize {
        self.n_gbs
    }

    pub fn is_hybrid(&self) -> bool {
        self.hybrid
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.input_len()
    }

    fn split(&self, raw: &[f64]) -> PolicyOutput {
        let mut mean = [0.0; MOVE_DIMS];
        mean.copy_from_slice(&raw[..MOVE_DIMS]);
        PolicyOutput { mean, log_std: self.log_std, gbs_logits: raw[MOVE_DIMS..].to_vec() }
    }

    pub fn output(&self, obs: &[f64]) -> Result<PolicyOutput, AgentError> {
        Ok(self.split(&self.mlp.forward(obs)?))
    }

    pub fn output_cached(&self, obs: &[f64]) -> Result<(PolicyOutput, ForwardCache), AgentError> {
        let cache = self.mlp.forward_cached(obs)?;
        Ok((self.split(cache.output()), cache))
    }

    /// Accumulates parameter gradients for an output-space gradient.
    pub fn backprop(
        &self,
        cache: &ForwardCache,
        grad: &OutputGrad,
        mlp_grads: &mut [f64],
        log_std_grads: &mut [f64; MOVE_DIMS],
    ) -> Result<(), AgentError> {
        let mut head = grad.mean.to_vec();
        head.extend_from_slice(&grad.logits);
        self.mlp.backprop(cache, &head, mlp_grads)?;
        for i in 0..MOVE_DIMS {
            log_std_grads[i] += grad.log_std[i];
        }
        Ok(())
    }
}
