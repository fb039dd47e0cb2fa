//! Episode orchestration: randomization, curriculum scenarios, observations,
//! reward dispatch and termination.

pub mod config;
pub mod observation;
pub mod pointmass;
pub mod quadruped;
pub mod scenario;
pub mod vec_env;

pub use config::{CurriculumStage, EnvConfig, RandomizationRanges, RecoveryInit};
pub use observation::{observe, ObservationInput, ACTION_DIM, AVOIDANCE_OBS_DIM, RECOVERY_OBS_DIM};
pub use pointmass::{PointMassConfig, PointMassEnv};
pub use quadruped::{EpisodeState, QuadrupedEnv};
pub use scenario::{curriculum_scenario, sample_randomization, EpisodeParams, Plane};
pub use vec_env::VecEnv;

use crate::rewards::RewardBreakdown;
use crate::Result;

/// Diagnostics of one control step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    pub collided: bool,
    pub fell: bool,
    pub diverged: bool,
    pub episode_end: bool,
    /// Set on the last step of an episode that never collided.
    pub avoided: bool,
    pub obstacle_active: bool,
    pub obstacle_speed: f64,
    pub reaction_time: f64,
    /// Largest joint power during this step (W).
    pub max_joint_power: f64,
    pub curriculum_stage: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Observation after the step; on the last step of an episode this is the
    /// final observation, before any reset.
    pub obs: Vec<f32>,
    pub reward: RewardBreakdown,
    pub done: bool,
    /// The episode ended by timeout rather than by a terminal event.
    pub truncated: bool,
    pub info: StepInfo,
}

/// A single-agent episodic environment.
pub trait Env: Send {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Start a new episode and return its first observation.
    fn reset(&mut self) -> Vec<f32>;
    /// Advance one control step with a raw policy output.
    fn step(&mut self, action: &[f32]) -> Result<Transition>;
    /// Policy action variance reported by the diversity reward.
    fn set_action_variance(&mut self, variance: f64);
    fn set_curriculum_stage(&mut self, _stage: CurriculumStage) {}
}
