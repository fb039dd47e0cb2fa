use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::kinematics::foot_position;
use super::{DynamicsConfig, NUM_FEET, NUM_JOINTS};

/// Full state of the reduced quadruped.
///
/// Linear velocity is in the world frame; angular velocity is in the base
/// frame. Foot forces are the world-frame ground reactions of the last step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub base_position: Vector3<f64>,
    pub base_linear_velocity: Vector3<f64>,
    pub base_angular_velocity: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
    pub joint_positions: [f64; NUM_JOINTS],
    pub joint_velocities: [f64; NUM_JOINTS],
    pub joint_torques: [f64; NUM_JOINTS],
    pub foot_forces: [Vector3<f64>; NUM_FEET],
    /// Physics steps taken since the state was created.
    pub tick: u64,
}

impl RobotState {
    /// Robot in its default stance with the lowest foot touching the ground.
    pub fn standing(cfg: &DynamicsConfig) -> Self {
        let mut state = Self {
            base_position: Vector3::zeros(),
            base_linear_velocity: Vector3::zeros(),
            base_angular_velocity: Vector3::zeros(),
            base_orientation: UnitQuaternion::identity(),
            joint_positions: cfg.default_joint_positions,
            joint_velocities: [0.0; NUM_JOINTS],
            joint_torques: [0.0; NUM_JOINTS],
            foot_forces: [Vector3::zeros(); NUM_FEET],
            tick: 0,
        };
        state.base_position.z = state.ground_clearance_height(cfg);
        state
    }

    /// Base height at which the lowest foot just touches the ground.
    pub fn ground_clearance_height(&self, cfg: &DynamicsConfig) -> f64 {
        let rot = self.rotation();
        (0..NUM_FEET)
            .map(|leg| {
                let p = rot * foot_position(leg, &self.joint_positions[3 * leg..3 * leg + 3], cfg);
                cfg.foot_radius - p.z
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        *self.base_orientation.to_rotation_matrix().matrix()
    }

    /// Roll, pitch, yaw (rad).
    pub fn orientation_rpy(&self) -> Vector3<f64> {
        let (r, p, y) = self.base_orientation.euler_angles();
        Vector3::new(r, p, y)
    }

    pub fn base_height(&self) -> f64 {
        self.base_position.z
    }

    /// Gravity direction expressed in the base frame.
    pub fn projected_gravity(&self) -> Vector3<f64> {
        self.base_orientation.inverse_transform_vector(&Vector3::new(0.0, 0.0, -1.0))
    }

    /// Linear velocity in the base frame.
    pub fn body_linear_velocity(&self) -> Vector3<f64> {
        self.base_orientation.inverse_transform_vector(&self.base_linear_velocity)
    }

    pub fn is_finite(&self) -> bool {
        self.base_position.iter().all(|v| v.is_finite())
            && self.base_linear_velocity.iter().all(|v| v.is_finite())
            && self.base_angular_velocity.iter().all(|v| v.is_finite())
            && self.base_orientation.coords.iter().all(|v| v.is_finite())
            && self.joint_positions.iter().all(|v| v.is_finite())
            && self.joint_velocities.iter().all(|v| v.is_finite())
            && self.joint_torques.iter().all(|v| v.is_finite())
            && self.foot_forces.iter().all(|f| f.iter().all(|v| v.is_finite()))
    }
}

/// Joint position targets sent to the PD servos.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub joint_targets: [f64; NUM_JOINTS],
}

impl Action {
    pub fn new(joint_targets: [f64; NUM_JOINTS]) -> Self {
        Self { joint_targets }
    }

    /// Hold the default stance.
    pub fn stance(cfg: &DynamicsConfig) -> Self {
        Self::new(cfg.default_joint_positions)
    }

    /// Map a raw policy output to joint targets around the default stance.
    pub fn from_policy_output(raw: &[f64], cfg: &DynamicsConfig) -> Self {
        let mut targets = cfg.default_joint_positions;
        for (t, r) in targets.iter_mut().zip(raw) {
            *t += cfg.action_scale * r;
        }
        Self::new(targets)
    }

    /// Targets clamped into the joint limits.
    pub fn clamped(&self, cfg: &DynamicsConfig) -> Self {
        let mut targets = self.joint_targets;
        for (i, t) in targets.iter_mut().enumerate() {
            *t = t.clamp(cfg.joint_lower[i], cfg.joint_upper[i]);
        }
        Self::new(targets)
    }
}

/// Per-foot contact flags, air time and stick-slip anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactState {
    /// FL, FR, RL, RR.
    pub in_contact: [bool; NUM_FEET],
    pub air_time: [f64; NUM_FEET],
    pub forces: [Vector3<f64>; NUM_FEET],
    /// Set on the step a foot lands.
    pub touchdown: [bool; NUM_FEET],
    /// Air time accumulated before the landing recorded in `touchdown`.
    pub touchdown_air_time: [f64; NUM_FEET],
    /// Ground anchor of the tangential friction spring (world xy).
    pub anchors: [Vector2<f64>; NUM_FEET],
}

impl Default for ContactState {
    fn default() -> Self {
        Self {
            in_contact: [false; NUM_FEET],
            air_time: [0.0; NUM_FEET],
            forces: [Vector3::zeros(); NUM_FEET],
            touchdown: [false; NUM_FEET],
            touchdown_air_time: [0.0; NUM_FEET],
            anchors: [Vector2::zeros(); NUM_FEET],
        }
    }
}

impl ContactState {
    pub fn contact_flags_f64(&self) -> [f64; NUM_FEET] {
        self.in_contact.map(|c| if c { 1.0 } else { 0.0 })
    }
}
