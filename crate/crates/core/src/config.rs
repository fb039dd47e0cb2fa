//! Sectioned TOML configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, PointMassConfig};
use crate::eval::EvalConfig;
use crate::fsm::FsmThresholds;
use crate::rewards::RewardConfig;
use crate::rl::{PolicyKind, PpoHyper};
use crate::sim::DynamicsConfig;
use crate::trainer::CurriculumConfig;
use crate::{Error, Result};

/// Reward weights of both policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardsSection {
    pub avoidance: RewardConfig,
    pub recovery: RewardConfig,
}

impl Default for RewardsSection {
    fn default() -> Self {
        Self { avoidance: RewardConfig::avoidance(), recovery: RewardConfig::recovery() }
    }
}

impl RewardsSection {
    pub fn for_kind(&self, kind: PolicyKind) -> &RewardConfig {
        match kind {
            PolicyKind::Recovery => &self.recovery,
            _ => &self.avoidance,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dynamics: DynamicsConfig,
    pub fsm: FsmThresholds,
    pub rewards: RewardsSection,
    pub ppo: PpoHyper,
    pub env: EnvConfig,
    pub curriculum: CurriculumConfig,
    pub eval: EvalConfig,
    pub point_mass: PointMassConfig,
}

impl Config {
    /// Parse a config file. Keys the file leaves out keep their default
    /// values at every nesting level, so a table listing a single reward
    /// weight leaves the other weights of that policy untouched.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(Config::default()).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Config = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        let d = &self.dynamics;
        if !(d.dt > 0.0) || d.decimation == 0 || d.substeps == 0 {
            return Err(Error::Config("dynamics.dt must be positive and decimation/substeps at least 1".into()));
        }
        if d.kp < 0.0 || d.kd < 0.0 {
            return Err(Error::Config("PD gains must be non-negative".into()));
        }
        let f = &self.fsm;
        for (name, v) in [
            ("orientation_limit", f.orientation_limit),
            ("joint_velocity_limit", f.joint_velocity_limit),
            ("height_floor", f.height_floor),
            ("recovery_hold_time", f.recovery_hold_time),
            ("clear_distance", f.clear_distance),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("fsm.{name} must be positive")));
            }
        }
        let p = &self.ppo;
        if !(p.gamma > 0.0 && p.gamma <= 1.0) || !(0.0..=1.0).contains(&p.gae_lambda) || !(p.clip > 0.0) {
            return Err(Error::Config("ppo needs 0 < gamma <= 1, 0 <= gae_lambda <= 1, clip > 0".into()));
        }
        if p.num_envs == 0 || p.steps_per_env == 0 || p.minibatches == 0 || p.minibatches > p.num_envs * p.steps_per_env {
            return Err(Error::Config("ppo batch sizes must be positive and fill every minibatch".into()));
        }
        for (name, r) in [("avoidance", &self.rewards.avoidance), ("recovery", &self.rewards.recovery)] {
            if r.weights.values().iter().any(|w| !w.is_finite()) || !(r.threat_decay > 0.0) {
                return Err(Error::Config(format!("rewards.{name}: weights must be finite and threat_decay positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.curriculum.stage1_fraction) {
            return Err(Error::Config("curriculum.stage1_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
