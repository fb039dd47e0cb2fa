//! Planar point-mass evasion task.
//!
//! The robot is a fixed-orientation box in the plane whose velocity follows
//! the commanded velocity with a first-order lag. A disc is launched at it
//! from a random heading; the avoidance and adaptive reward terms are the
//! same as for the quadruped.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::Range;
use super::scenario::uniform;
use super::{Env, StepInfo, Transition};
use crate::geometry::{sdf_point_obb, Obb};
use crate::rewards::{adaptive_reward, avoidance_reward, CommandState, RewardBreakdown, RewardConfig, RewardTerms};
use crate::{Error, Result};

pub const OBS_DIM: usize = 8;
pub const ACTION_DIM: usize = 2;

/// Height of the plane the task lives in (m).
const PLANE_HEIGHT: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassConfig {
    pub dt: f64,
    pub max_speed: f64,
    /// Time constant of the velocity response (s).
    pub velocity_lag: f64,
    pub half_extents: [f64; 3],
    pub obstacle_speed: Range,
    pub obstacle_radius: Range,
    pub reaction_time: Range,
    pub post_contact_time: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            max_speed: 2.0,
            velocity_lag: 0.1,
            half_extents: crate::geometry::DEFAULT_HALF_EXTENTS,
            obstacle_speed: [1.0, 3.0],
            obstacle_radius: [0.2, 0.4],
            reaction_time: [1.0, 2.0],
            post_contact_time: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointMassEnv {
    pub config: PointMassConfig,
    pub rewards: RewardConfig,
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
    pub obstacle_position: Vector2<f64>,
    pub obstacle_velocity: Vector2<f64>,
    pub radius: f64,
    pub reaction_time: f64,
    pub time: f64,
    pub tick: u64,
    pub horizon: u64,
    pub done: bool,
    rng: ChaCha8Rng,
    action_variance: f64,
}

impl PointMassEnv {
    pub fn new(config: PointMassConfig, rewards: RewardConfig, rng: ChaCha8Rng) -> Self {
        let mut env = Self {
            config,
            rewards,
            position: Vector2::zeros(),
            velocity: Vector2::zeros(),
            obstacle_position: Vector2::zeros(),
            obstacle_velocity: Vector2::zeros(),
            radius: 0.0,
            reaction_time: 0.0,
            time: 0.0,
            tick: 0,
            horizon: 1,
            done: true,
            rng,
            action_variance: 0.0,
        };
        env.reset();
        env
    }

    pub fn with_seed(config: PointMassConfig, rewards: RewardConfig, seed: u64) -> Self {
        Self::new(config, rewards, ChaCha8Rng::seed_from_u64(seed))
    }

    fn obb(&self) -> Obb {
        Obb {
            center: Vector3::new(self.position.x, self.position.y, PLANE_HEIGHT),
            rotation: Matrix3::identity(),
            half_extents: Vector3::from(self.config.half_extents),
        }
    }

    fn obstacle3(&self) -> Vector3<f64> {
        Vector3::new(self.obstacle_position.x, self.obstacle_position.y, PLANE_HEIGHT)
    }

    pub fn sdf(&self) -> f64 {
        sdf_point_obb(&self.obstacle3(), &self.obb())
    }

    pub fn observation(&self) -> Vec<f32> {
        let rel = self.obstacle_position - self.position;
        let left = (self.reaction_time - self.time).max(0.0);
        [rel.x, rel.y, self.obstacle_velocity.x, self.obstacle_velocity.y, self.radius, self.velocity.x, self.velocity.y, left]
            .iter()
            .map(|v| *v as f32)
            .collect()
    }
}

impl Env for PointMassEnv {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn reset(&mut self) -> Vec<f32> {
        let c = &self.config;
        let speed = uniform(c.obstacle_speed, &mut self.rng);
        self.radius = uniform(c.obstacle_radius, &mut self.rng);
        self.reaction_time = uniform(c.reaction_time, &mut self.rng);
        let heading = self.rng.random_range(0.0..std::f64::consts::TAU);
        let dir = Vector2::new(heading.cos(), heading.sin());
        self.position = Vector2::zeros();
        self.velocity = Vector2::zeros();
        self.obstacle_position = dir * speed * self.reaction_time;
        self.obstacle_velocity = -dir * speed;
        self.time = 0.0;
        self.tick = 0;
        self.horizon = ((self.reaction_time + c.post_contact_time) / c.dt).round().max(1.0) as u64;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &[f32]) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if action.len() != ACTION_DIM {
            return Err(Error::DimensionMismatch(format!("expected {ACTION_DIM} actions, got {}", action.len())));
        }
        let c = &self.config;
        let target = Vector2::new(f64::from(action[0]).clamp(-1.0, 1.0), f64::from(action[1]).clamp(-1.0, 1.0)) * c.max_speed;
        let alpha = (c.dt / c.velocity_lag).min(1.0);
        self.velocity += (target - self.velocity) * alpha;
        self.position += self.velocity * c.dt;
        self.obstacle_position += self.obstacle_velocity * c.dt;
        self.tick += 1;
        self.time = self.tick as f64 * c.dt;

        let sdf = self.sdf();
        let collided = sdf < self.radius;
        let (distance, collision) = avoidance_reward(sdf, self.radius, collided);
        let offset = self.obstacle3() - Vector3::new(self.position.x, self.position.y, PLANE_HEIGHT);
        let v = Vector3::new(self.velocity.x, self.velocity.y, 0.0);
        let (diversity, threat, direction) =
            adaptive_reward(self.action_variance, &v, &CommandState::default(), self.reaction_time, &offset, &self.rewards);
        let terms = RewardTerms { distance, collision, diversity, threat, direction, ..Default::default() };
        let reward = RewardBreakdown::new(terms, &self.rewards.weights);

        let timeout = !collided && self.tick >= self.horizon;
        self.done = collided || timeout;
        let info = StepInfo {
            collided,
            episode_end: self.done,
            avoided: timeout,
            obstacle_active: true,
            obstacle_speed: self.obstacle_velocity.norm(),
            reaction_time: self.reaction_time,
            ..Default::default()
        };
        Ok(Transition { obs: self.observation(), reward, done: self.done, truncated: timeout, info })
    }

    fn set_action_variance(&mut self, variance: f64) {
        self.action_variance = variance;
    }
}
