//! Fixed-size rollout storage laid out step-major: row `t * num_envs + e`.

use super::gae::compute_gae;
use crate::Result;

#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub steps: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Normalized observations as fed to the networks.
    pub obs: Vec<f32>,
    pub actions: Vec<f32>,
    pub log_probs: Vec<f32>,
    pub values: Vec<f32>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Critic value of the observation after the last step, per env.
    pub bootstrap: Vec<f32>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, steps: usize, obs_dim: usize, action_dim: usize) -> Self {
        let n = num_envs * steps;
        Self {
            num_envs,
            steps,
            obs_dim,
            action_dim,
            obs: vec![0.0; n * obs_dim],
            actions: vec![0.0; n * action_dim],
            log_probs: vec![0.0; n],
            values: vec![0.0; n],
            rewards: vec![0.0; n],
            dones: vec![false; n],
            bootstrap: vec![0.0; num_envs],
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.num_envs * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, step: usize, env: usize) -> usize {
        step * self.num_envs + env
    }

    /// GAE per environment column.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let (n, s) = (self.num_envs, self.steps);
        let mut rewards = vec![0.0; s];
        let mut values = vec![0.0; s];
        let mut dones = vec![false; s];
        for e in 0..n {
            for t in 0..s {
                let i = t * n + e;
                rewards[t] = self.rewards[i];
                values[t] = f64::from(self.values[i]);
                dones[t] = self.dones[i];
            }
            let (adv, ret) = compute_gae(&rewards, &values, &dones, f64::from(self.bootstrap[e]), gamma, lambda)?;
            for t in 0..s {
                self.advantages[t * n + e] = adv[t];
                self.returns[t * n + e] = ret[t];
            }
        }
        Ok(())
    }

    /// Shift and scale all advantages to zero mean and unit variance.
    pub fn normalize_advantages(&mut self) {
        normalize(&mut self.advantages);
    }
}

/// In-place standardization; leaves a constant vector centered at zero.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if std > 1e-12 {
            *v /= std;
        }
    }
}
