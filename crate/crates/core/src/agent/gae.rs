use super::policy::HybridAction;
use super::AgentError;

/// One stored interaction step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: HybridAction,
    pub log_prob: f64,
    pub reward: f64,
    /// Value estimate of `observation`, recorded at collection time.
    pub value: f64,
    /// True if the episode ended on this step.
    pub done: bool,
}

/// Contiguous run of transitions from one environment; episode boundaries
/// inside the run are marked by `done`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }
}

/// Generalized advantage estimates and value targets for a trajectory.
/// `bootstrap_value` is the value of the state following the last step.
pub fn compute_gae(
    traj: &Trajectory,
    gamma: f64,
    lambda: f64,
    bootstrap_value: f64,
) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
    if traj.is_empty() {
        return Err(AgentError::EmptyTrajectory);
    }
    let rewards: Vec<f64> = traj.transitions.iter().map(|t| t.reward).collect();
    let values: Vec<f64> = traj.transitions.iter().map(|t| t.value).collect();
    let dones: Vec<bool> = traj.transitions.iter().map(|t| t.done).collect();
    Ok(gae(&rewards, &values, &dones, gamma, lambda, bootstrap_value))
}

pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
    bootstrap_value: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Zero-mean, unit-variance advantages (population std, floored).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
