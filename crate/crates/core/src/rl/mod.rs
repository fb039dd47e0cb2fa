//! Actor-critic networks and PPO.

pub mod adam;
pub mod buffer;
pub mod gae;
pub mod gaussian;
pub mod mlp;
pub mod normalizer;
pub mod ppo;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use buffer::RolloutBuffer;
pub use gae::compute_gae;
pub use gaussian::sample_action;
pub use mlp::{Mlp, Real};
pub use normalizer::RunningNorm;
pub use ppo::{adapt_learning_rate, ppo_loss_and_grad, Ppo, PpoHyper, UpdateStats};

use crate::{Error, Result};

/// Which policy a parameter set drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Avoidance,
    Recovery,
    /// Planar point-mass evasion task.
    PointMass,
}

impl PolicyKind {
    pub fn code(self) -> u8 {
        match self {
            PolicyKind::Avoidance => 0,
            PolicyKind::Recovery => 1,
            PolicyKind::PointMass => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PolicyKind::Avoidance),
            1 => Some(PolicyKind::Recovery),
            2 => Some(PolicyKind::PointMass),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Avoidance => "avoidance",
            PolicyKind::Recovery => "recovery",
            PolicyKind::PointMass => "point-mass",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avoidance" => Ok(PolicyKind::Avoidance),
            "recovery" => Ok(PolicyKind::Recovery),
            "point-mass" => Ok(PolicyKind::PointMass),
            other => Err(Error::InvalidInput(format!("unknown policy kind `{other}`"))),
        }
    }
}

/// Everything needed to act and to resume training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub kind: PolicyKind,
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
    pub log_std: Vec<f32>,
    pub obs_norm: RunningNorm,
    pub update_count: u64,
    pub learning_rate: f64,
}

impl PolicyParams {
    /// Orthogonally initialized actor and critic with the given hidden widths.
    pub fn new<R: Rng + ?Sized>(
        kind: PolicyKind,
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        hyper: &PpoHyper,
        rng: &mut R,
    ) -> Self {
        let mut actor_dims = vec![obs_dim];
        actor_dims.extend_from_slice(hidden);
        let mut critic_dims = actor_dims.clone();
        actor_dims.push(action_dim);
        critic_dims.push(1);
        let gain = std::f64::consts::SQRT_2;
        Self {
            kind,
            actor: Mlp::orthogonal(&actor_dims, gain, 0.01, rng),
            critic: Mlp::orthogonal(&critic_dims, gain, 1.0, rng),
            log_std: vec![hyper.init_log_std as f32; action_dim],
            obs_norm: RunningNorm::new(obs_dim),
            update_count: 0,
            learning_rate: hyper.learning_rate,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Action mean for a raw observation, plus the log-std.
    pub fn actor_forward(&self, obs: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
        self.check_obs(obs)?;
        let x = self.obs_norm.normalize(obs);
        Ok((self.actor.forward(&x, 1)?, self.log_std.clone()))
    }

    pub fn critic_forward(&self, obs: &[f32]) -> Result<f32> {
        self.check_obs(obs)?;
        let x = self.obs_norm.normalize(obs);
        Ok(self.critic.forward(&x, 1)?[0])
    }

    fn check_obs(&self, obs: &[f32]) -> Result<()> {
        if obs.len() != self.obs_dim() {
            return Err(Error::DimensionMismatch(format!("expected {} observations, got {}", self.obs_dim(), obs.len())));
        }
        Ok(())
    }

    /// Mean per-dimension action variance of the policy.
    pub fn action_variance(&self) -> f64 {
        gaussian::mean_variance(&self.log_std)
    }

    pub fn is_finite(&self) -> bool {
        self.actor.params.iter().chain(&self.critic.params).chain(&self.log_std).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_actor_outputs_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = PolicyParams::new(PolicyKind::Recovery, 47, 12, &[32, 16], &PpoHyper::default(), &mut rng);
        p.actor.params.iter_mut().for_each(|v| *v = 0.0);
        let (mean, log_std) = p.actor_forward(&[0.3; 47]).unwrap();
        assert_eq!(mean, vec![0.0; 12]);
        assert_eq!(log_std, vec![0.0; 12]);
        assert!(p.actor_forward(&[0.0; 46]).is_err());
    }

    #[test]
    fn critic_is_reproducible() {
        let make = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            PolicyParams::new(PolicyKind::Avoidance, 58, 12, &[64, 32], &PpoHyper::default(), &mut rng)
        };
        let obs: Vec<f32> = (0..58).map(|i| (i as f32).cos()).collect();
        assert_eq!(make().critic_forward(&obs).unwrap().to_bits(), make().critic_forward(&obs).unwrap().to_bits());
    }

    #[test]
    fn kind_codes_round_trip() {
        for k in [PolicyKind::Avoidance, PolicyKind::Recovery, PolicyKind::PointMass] {
            assert_eq!(PolicyKind::from_code(k.code()), Some(k));
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
        assert_eq!(PolicyKind::from_code(9), None);
    }
}
