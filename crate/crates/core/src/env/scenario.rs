//! Episode randomization and obstacle placement for the two curriculum stages.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{CurriculumStage, EnvConfig, Range};
use crate::rewards::CommandState;
use crate::sim::ObstacleState;
use crate::{Error, Result};

/// Plane holding the 180° arc an obstacle approaches from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xz,
    Yz,
    Xy,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xz, Plane::Yz, Plane::Xy];

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Xz => "xz",
            Plane::Yz => "yz",
            Plane::Xy => "xy",
        }
    }

    /// Unit vector from the robot toward the spawn point; `angle ∈ [0, π]`
    /// sweeps from the first axis of the plane to its negative.
    pub fn direction(self, angle: f64) -> Vector3<f64> {
        let (c, s) = (angle.cos(), angle.sin());
        match self {
            Plane::Xz => Vector3::new(c, 0.0, s),
            Plane::Yz => Vector3::new(0.0, c, s),
            Plane::Xy => Vector3::new(c, s, 0.0),
        }
    }
}

impl std::str::FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xz" => Ok(Plane::Xz),
            "yz" => Ok(Plane::Yz),
            "xy" => Ok(Plane::Xy),
            other => Err(Error::InvalidInput(format!("unknown plane `{other}`, expected xz, yz or xy"))),
        }
    }
}

/// Everything drawn once per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeParams {
    pub friction: f64,
    pub added_mass: f64,
    pub obstacle_offset: Vector3<f64>,
    pub obstacle_radius: f64,
    pub obstacle_speed: f64,
    pub reaction_time: f64,
    pub episode_length: f64,
    pub command: CommandState,
    pub plane: Plane,
    pub angle: f64,
}

pub fn uniform<R: Rng + ?Sized>(range: Range, rng: &mut R) -> f64 {
    let [lo, hi] = range;
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draw every episode parameter independently and uniformly from its range.
pub fn sample_randomization<R: Rng + ?Sized>(config: &EnvConfig, rng: &mut R) -> EpisodeParams {
    let r = &config.ranges;
    let friction = uniform(r.friction, rng);
    let added_mass = uniform(r.added_mass, rng);
    let obstacle_offset = Vector3::new(uniform(r.obstacle_offset, rng), uniform(r.obstacle_offset, rng), uniform(r.obstacle_offset, rng));
    let obstacle_radius = uniform(r.obstacle_radius, rng);
    let obstacle_speed = uniform(r.obstacle_speed, rng);
    let reaction_time = uniform(r.reaction_time, rng);
    let episode_length = uniform(r.episode_length, rng);
    let vx = uniform(r.command_velocity, rng);
    let vy = uniform(r.command_velocity, rng);
    let yaw_rate = uniform(r.command_yaw, rng);
    let heading = uniform(r.command_heading, rng);
    let plane = Plane::ALL[rng.random_range(0..3)];
    let angle = uniform([0.0, std::f64::consts::PI], rng);
    let command = if config.commanded_walking {
        CommandState { velocity: Vector3::new(vx, vy, 0.0), yaw_rate, heading }
    } else {
        CommandState::default()
    };
    EpisodeParams {
        friction,
        added_mass,
        obstacle_offset,
        obstacle_radius,
        obstacle_speed,
        reaction_time,
        episode_length,
        command,
        plane,
        angle,
    }
}

/// Time at which the obstacle of this episode appears.
///
/// A static obstacle appears `reaction_time` before the end of the episode. A
/// moving one is launched so that, unopposed, it reaches the robot
/// `post_contact_time` before the end.
pub fn activation_time(stage: CurriculumStage, params: &EpisodeParams, post_contact_time: f64) -> f64 {
    let t = match stage {
        CurriculumStage::Static => params.episode_length - params.reaction_time,
        CurriculumStage::Dynamic => params.episode_length - params.reaction_time - post_contact_time,
    };
    t.max(0.0)
}

/// Obstacle of one episode, placed relative to `robot_position`.
///
/// Static stage: zero velocity at `robot_position + offset`. Dynamic stage:
/// spawned `speed · reaction_time` away along the sampled direction and aimed
/// at `robot_position`.
pub fn curriculum_scenario(
    stage: CurriculumStage,
    params: &EpisodeParams,
    robot_position: &Vector3<f64>,
    post_contact_time: f64,
) -> ObstacleState {
    let (position, velocity) = match stage {
        CurriculumStage::Static => (robot_position + params.obstacle_offset, Vector3::zeros()),
        CurriculumStage::Dynamic => {
            let dir = params.plane.direction(params.angle);
            let distance = params.obstacle_speed * params.reaction_time;
            (robot_position + dir * distance, -dir * params.obstacle_speed)
        }
    };
    ObstacleState {
        radius: params.obstacle_radius,
        position,
        velocity,
        active: false,
        activation_time: activation_time(stage, params, post_contact_time),
        reaction_time: params.reaction_time,
    }
}
