//! Observation layouts of the two policies.
//!
//! Obstacle position and velocity are expressed in the base frame. An
//! inactive obstacle is encoded by a sentinel 10 m above the robot with zero
//! velocity, radius and remaining time.

use nalgebra::Vector3;
use rand::Rng;

use super::config::RandomizationRanges;
use super::scenario::uniform;
use crate::rewards::CommandState;
use crate::rl::PolicyKind;
use crate::sim::{ContactState, ObstacleState, RobotState, NUM_JOINTS};

pub const AVOIDANCE_LAYOUT: [(&str, usize); 12] = [
    ("projected_gravity", 3),
    ("angular_velocity", 3),
    ("joint_positions", 12),
    ("joint_velocities", 12),
    ("previous_action", 12),
    ("obstacle_position", 3),
    ("obstacle_velocity", 3),
    ("obstacle_radius", 1),
    ("command", 3),
    ("reaction_time_left", 1),
    ("foot_contacts", 4),
    ("base_height", 1),
];

pub const RECOVERY_LAYOUT: [(&str, usize); 7] = [
    ("projected_gravity", 3),
    ("angular_velocity", 3),
    ("joint_positions", 12),
    ("joint_velocities", 12),
    ("previous_action", 12),
    ("foot_contacts", 4),
    ("base_height", 1),
];

pub const AVOIDANCE_OBS_DIM: usize = 58;
pub const RECOVERY_OBS_DIM: usize = 47;
pub const ACTION_DIM: usize = NUM_JOINTS;

/// Relative position reported for an inactive obstacle.
pub const INACTIVE_SENTINEL: [f64; 3] = [0.0, 0.0, 10.0];

pub fn obs_dim(kind: PolicyKind) -> usize {
    match kind {
        PolicyKind::Avoidance => AVOIDANCE_OBS_DIM,
        PolicyKind::Recovery => RECOVERY_OBS_DIM,
        PolicyKind::PointMass => super::pointmass::OBS_DIM,
    }
}

/// Offset of a named field in a layout.
pub fn field_offset(layout: &[(&str, usize)], name: &str) -> Option<std::ops::Range<usize>> {
    let mut start = 0;
    for (n, w) in layout {
        if *n == name {
            return Some(start..start + w);
        }
        start += w;
    }
    None
}

/// Quantities an observation is assembled from.
#[derive(Debug, Clone, Copy)]
pub struct ObservationInput<'a> {
    pub robot: &'a RobotState,
    pub obstacle: &'a ObstacleState,
    pub contacts: &'a ContactState,
    /// Previous joint targets minus the default stance.
    pub previous_action: &'a [f64; NUM_JOINTS],
    pub command: &'a CommandState,
    pub sim_time: f64,
}

/// Assemble the observation of `kind`. With `noise`, uniform noise from the
/// given ranges is added to the gravity, angular velocity, joint and height
/// entries.
pub fn observe<R: Rng + ?Sized>(
    input: &ObservationInput<'_>,
    kind: PolicyKind,
    noise: Option<&RandomizationRanges>,
    rng: &mut R,
) -> Vec<f32> {
    let robot = input.robot;
    let add = |range: fn(&RandomizationRanges) -> [f64; 2], v: f64, rng: &mut R| -> f32 {
        match noise {
            Some(n) => (v + uniform(range(n), rng)) as f32,
            None => v as f32,
        }
    };
    let mut obs = Vec::with_capacity(AVOIDANCE_OBS_DIM);
    let g = robot.projected_gravity();
    for i in 0..3 {
        obs.push(add(|n| n.gravity_noise, g[i], rng));
    }
    for i in 0..3 {
        obs.push(add(|n| n.ang_vel_noise, robot.base_angular_velocity[i], rng));
    }
    for q in robot.joint_positions {
        obs.push(add(|n| n.joint_pos_noise, q, rng));
    }
    for qd in robot.joint_velocities {
        obs.push(add(|n| n.joint_vel_noise, qd, rng));
    }
    obs.extend(input.previous_action.iter().map(|a| *a as f32));

    if kind == PolicyKind::Avoidance {
        let ob = input.obstacle;
        if ob.active {
            let rel = robot.base_orientation.inverse_transform_vector(&(ob.position - robot.base_position));
            let vel = robot.base_orientation.inverse_transform_vector(&ob.velocity);
            obs.extend(rel.iter().map(|v| *v as f32));
            obs.extend(vel.iter().map(|v| *v as f32));
            obs.push(ob.radius as f32);
        } else {
            obs.extend(INACTIVE_SENTINEL.iter().map(|v| *v as f32));
            obs.extend([0.0f32; 4]);
        }
        let cmd = input.command;
        obs.extend([cmd.velocity.x as f32, cmd.velocity.y as f32, cmd.yaw_rate as f32]);
        let left = if ob.active { (ob.activation_time + ob.reaction_time - input.sim_time).max(0.0) } else { 0.0 };
        obs.push(left as f32);
    }

    obs.extend(input.contacts.contact_flags_f64().iter().map(|c| *c as f32));
    obs.push(add(|n| n.height_noise, robot.base_height(), rng));
    obs
}

/// Obstacle offset as the robot sees it, for diagnostics.
pub fn relative_obstacle_position(robot: &RobotState, obstacle: &ObstacleState) -> Vector3<f64> {
    robot.base_orientation.inverse_transform_vector(&(obstacle.position - robot.base_position))
}
