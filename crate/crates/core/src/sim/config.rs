use serde::{Deserialize, Serialize};

use super::NUM_JOINTS;

/// Physical constants of the reduced-order quadruped.
///
/// Geometry, limits and default stance follow the public Go2 description.
/// Legs are massless for the base dynamics; each joint carries a reflected
/// inertia so joint motion is integrated as a second-order system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Physics step (s).
    pub dt: f64,
    /// Physics steps per policy step.
    pub decimation: usize,
    /// Integration substeps inside one physics step.
    pub substeps: usize,
    pub gravity: f64,
    pub base_mass: f64,
    /// Principal inertia of the base, body frame (kg m^2).
    pub base_inertia: [f64; 3],
    pub joint_inertia: f64,
    /// Viscous joint friction (N m s / rad).
    pub joint_damping: f64,
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    /// Tangential spring of the stick-slip friction model (N/m).
    pub friction_stiffness: f64,
    pub friction_damping: f64,
    pub friction: f64,
    pub hip_offset: [f64; 2],
    pub thigh_offset: f64,
    pub thigh_length: f64,
    pub calf_length: f64,
    pub foot_radius: f64,
    /// Half extents of the trunk used for ground contact (not the collision box).
    pub trunk_half_extents: [f64; 3],
    pub joint_lower: [f64; NUM_JOINTS],
    pub joint_upper: [f64; NUM_JOINTS],
    pub default_joint_positions: [f64; NUM_JOINTS],
    /// Policy output to joint-target offset (rad per unit).
    pub action_scale: f64,
    pub obstacle_gravity: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let hip = 1.0472;
        let (front_thigh, rear_thigh) = ((-1.5708, 3.4907), (-0.5236, 4.5379));
        let calf = (-2.7227, -0.83776);
        let mut lower = [0.0; NUM_JOINTS];
        let mut upper = [0.0; NUM_JOINTS];
        for leg in 0..4 {
            let thigh = if leg < 2 { front_thigh } else { rear_thigh };
            lower[3 * leg] = -hip;
            upper[3 * leg] = hip;
            lower[3 * leg + 1] = thigh.0;
            upper[3 * leg + 1] = thigh.1;
            lower[3 * leg + 2] = calf.0;
            upper[3 * leg + 2] = calf.1;
        }
        Self {
            dt: 0.005,
            decimation: 4,
            substeps: 4,
            gravity: 9.81,
            base_mass: 15.0,
            base_inertia: [0.1, 0.25, 0.3],
            joint_inertia: 0.04,
            joint_damping: 0.01,
            kp: 20.0,
            kd: 0.5,
            torque_limit: 23.7,
            contact_stiffness: 2.0e4,
            contact_damping: 200.0,
            friction_stiffness: 1.0e4,
            friction_damping: 100.0,
            friction: 1.0,
            hip_offset: [0.1934, 0.0465],
            thigh_offset: 0.0955,
            thigh_length: 0.213,
            calf_length: 0.213,
            foot_radius: 0.022,
            trunk_half_extents: [0.19, 0.06, 0.05],
            joint_lower: lower,
            joint_upper: upper,
            default_joint_positions: [
                0.1, 0.8, -1.5, //
                -0.1, 0.8, -1.5, //
                0.1, 1.0, -1.5, //
                -0.1, 1.0, -1.5,
            ],
            action_scale: 0.25,
            obstacle_gravity: false,
        }
    }
}

impl DynamicsConfig {
    /// Policy-rate control period (s).
    pub fn control_dt(&self) -> f64 {
        self.dt * self.decimation as f64
    }
}
