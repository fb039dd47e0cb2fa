use serde::{Deserialize, Serialize};

use crate::rl::PolicyKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurriculumStage {
    /// A static obstacle appears near the robot.
    Static,
    /// A moving obstacle is thrown at the robot.
    Dynamic,
}

impl CurriculumStage {
    pub fn number(self) -> u8 {
        match self {
            CurriculumStage::Static => 1,
            CurriculumStage::Dynamic => 2,
        }
    }
}

/// Closed interval `[lo, hi]` sampled uniformly.
pub type Range = [f64; 2];

/// Per-episode randomization and observation noise. Noise entries are
/// additive half-widths written as symmetric ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationRanges {
    pub joint_pos_noise: Range,
    pub joint_vel_noise: Range,
    pub ang_vel_noise: Range,
    pub gravity_noise: Range,
    pub height_noise: Range,
    pub friction: Range,
    pub added_mass: Range,
    pub obstacle_offset: Range,
    pub obstacle_radius: Range,
    pub obstacle_speed: Range,
    pub reaction_time: Range,
    pub episode_length: Range,
    pub command_yaw: Range,
    pub command_velocity: Range,
    pub command_heading: Range,
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            joint_pos_noise: [-0.01, 0.01],
            joint_vel_noise: [-1.5, 1.5],
            ang_vel_noise: [-0.2, 0.2],
            gravity_noise: [-0.05, 0.05],
            height_noise: [-0.1, 0.1],
            friction: [0.5, 1.25],
            added_mass: [-1.0, 1.0],
            obstacle_offset: [-0.4, 0.4],
            obstacle_radius: [0.05, 0.3],
            obstacle_speed: [1.0, 6.0],
            reaction_time: [0.1, 4.0],
            episode_length: [8.0, 10.0],
            command_yaw: [-1.0, 1.0],
            command_velocity: [-1.0, 1.0],
            command_heading: [-PI, PI],
        }
    }
}

impl RandomizationRanges {
    pub fn named(&self) -> [(&'static str, Range); 15] {
        [
            ("joint_pos_noise", self.joint_pos_noise),
            ("joint_vel_noise", self.joint_vel_noise),
            ("ang_vel_noise", self.ang_vel_noise),
            ("gravity_noise", self.gravity_noise),
            ("height_noise", self.height_noise),
            ("friction", self.friction),
            ("added_mass", self.added_mass),
            ("obstacle_offset", self.obstacle_offset),
            ("obstacle_radius", self.obstacle_radius),
            ("obstacle_speed", self.obstacle_speed),
            ("reaction_time", self.reaction_time),
            ("episode_length", self.episode_length),
            ("command_yaw", self.command_yaw),
            ("command_velocity", self.command_velocity),
            ("command_heading", self.command_heading),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in self.named() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("range `{name}` must satisfy lo <= hi, got [{lo}, {hi}]")));
            }
        }
        if self.obstacle_radius[0] <= 0.0 {
            return Err(Error::Config("obstacle radius must be positive".into()));
        }
        if self.reaction_time[0] < 0.0 {
            return Err(Error::Config("reaction time must be non-negative".into()));
        }
        Ok(())
    }
}

/// Initial-state spread for recovery-policy episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryInit {
    /// Roll and pitch are drawn from `[-max_tilt, max_tilt]` (rad).
    pub max_tilt: f64,
    /// Joint velocities are drawn from `[-v, v]` (rad/s).
    pub max_joint_velocity: f64,
    /// Base height range (m).
    pub height: Range,
}

impl Default for RecoveryInit {
    fn default() -> Self {
        Self { max_tilt: 1.2, max_joint_velocity: 15.0, height: [0.08, 0.35] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub curriculum_stage: CurriculumStage,
    pub policy_kind: PolicyKind,
    pub ranges: RandomizationRanges,
    pub observation_noise: bool,
    /// Sample locomotion commands instead of standing still.
    pub commanded_walking: bool,
    pub terminate_on_collision: bool,
    /// Base height under which the episode ends as a fall (m).
    pub fall_height: f64,
    /// Robot collision box half extents (m).
    pub half_extents: [f64; 3],
    /// Time left after the predicted contact of a moving obstacle (s).
    pub post_contact_time: f64,
    pub recovery_init: RecoveryInit,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            curriculum_stage: CurriculumStage::Static,
            policy_kind: PolicyKind::Avoidance,
            ranges: RandomizationRanges::default(),
            observation_noise: true,
            commanded_walking: false,
            terminate_on_collision: true,
            fall_height: 0.05,
            half_extents: crate::geometry::DEFAULT_HALF_EXTENTS,
            post_contact_time: 1.0,
            recovery_init: RecoveryInit::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if self.half_extents.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("half extents must be positive".into()));
        }
        if self.post_contact_time < 0.0 {
            return Err(Error::Config("post_contact_time must be non-negative".into()));
        }
        Ok(())
    }
}
