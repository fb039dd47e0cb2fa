//! Reward terms for the avoidance and recovery policies.
//!
//! Every term is a pure function of the transition. [`RewardTerms`] carries
//! one slot per named term and doubles as the weight vector; the scalar reward
//! is the weighted sum taken in declaration order.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::sim::{Action, ContactState, RobotState, NUM_FEET};

macro_rules! reward_terms {
    ($($name:ident),* $(,)?) => {
        /// One value per reward term.
        #[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct RewardTerms {
            $(pub $name: f64,)*
        }

        impl RewardTerms {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn values(&self) -> Vec<f64> {
                vec![$(self.$name),*]
            }

            /// Weighted sum in declaration order.
            pub fn dot(&self, weights: &RewardTerms) -> f64 {
                let mut total = 0.0;
                $(total += self.$name * weights.$name;)*
                total
            }

            pub fn add_assign(&mut self, other: &RewardTerms) {
                $(self.$name += other.$name;)*
            }

            pub fn scale(&mut self, k: f64) {
                $(self.$name *= k;)*
            }

            /// Elementwise product, the per-term contributions to the total.
            pub fn weighted(&self, weights: &RewardTerms) -> RewardTerms {
                RewardTerms { $($name: self.$name * weights.$name,)* }
            }
        }
    };
}

reward_terms!(
    distance,
    collision,
    walk,
    energy,
    contact,
    diversity,
    threat,
    direction,
    orientation,
    stable,
    position,
    additional,
    vertical_velocity,
    horizontal_ang_vel,
    flat_orientation,
    action_rate,
    body_collision,
    lin_vel_tracking,
    ang_vel_tracking,
    feet_air_time,
    stumble,
    contact_force,
);

/// Per-term values of one transition and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub terms: RewardTerms,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(terms: RewardTerms, weights: &RewardTerms) -> Self {
        Self { terms, total: terms.dot(weights) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub weights: RewardTerms,
    /// Extra safe speed at zero reaction time (m/s).
    pub threat_gain: f64,
    /// Decay of the extra safe speed with reaction time (1/s).
    pub threat_decay: f64,
    /// Foot force above which the contact-force penalty applies (N).
    pub contact_force_threshold: f64,
    pub stumble_ratio_limit: f64,
    pub foot_airtime_target: f64,
    /// Torque weight inside the recovery `additional` term.
    pub torque_penalty: f64,
    /// Action-change weight inside the recovery `additional` term.
    pub action_smoothness_penalty: f64,
}

impl RewardConfig {
    /// Weights for the avoidance policy.
    pub fn avoidance() -> Self {
        let weights = RewardTerms {
            distance: 1.0,
            collision: 5.0,
            walk: 0.5,
            energy: 2.0e-4,
            contact: 1.0e-5,
            diversity: 0.1,
            threat: 0.5,
            direction: 0.5,
            vertical_velocity: -0.5,
            horizontal_ang_vel: -0.05,
            flat_orientation: -0.5,
            action_rate: -0.01,
            body_collision: -1.0,
            lin_vel_tracking: -0.1,
            ang_vel_tracking: -0.1,
            feet_air_time: 0.2,
            stumble: -0.5,
            contact_force: -1.0e-4,
            ..Default::default()
        };
        Self { weights, ..Self::base() }
    }

    /// Weights for the recovery policy.
    pub fn recovery() -> Self {
        let weights = RewardTerms {
            orientation: 1.0,
            stable: 1.0,
            position: 1.0,
            additional: 1.0,
            vertical_velocity: -0.5,
            horizontal_ang_vel: -0.05,
            flat_orientation: -0.5,
            action_rate: -0.01,
            body_collision: -1.0,
            lin_vel_tracking: -0.5,
            ang_vel_tracking: -0.2,
            feet_air_time: 0.0,
            stumble: -0.5,
            contact_force: -1.0e-4,
            ..Default::default()
        };
        Self { weights, ..Self::base() }
    }

    fn base() -> Self {
        Self {
            weights: RewardTerms::default(),
            threat_gain: 2.0,
            threat_decay: 2.0,
            contact_force_threshold: 100.0,
            stumble_ratio_limit: 5.0,
            foot_airtime_target: 0.5,
            torque_penalty: 1.0e-4,
            action_smoothness_penalty: 0.01,
        }
    }

    /// Zero the diversity, threat and direction weights.
    pub fn without_adaptive(mut self) -> Self {
        self.weights.diversity = 0.0;
        self.weights.threat = 0.0;
        self.weights.direction = 0.0;
        self
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::avoidance()
    }
}

/// Locomotion command given to the robot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandState {
    /// Commanded base velocity, base frame (m/s).
    pub velocity: Vector3<f64>,
    pub yaw_rate: f64,
    pub heading: f64,
}

/// Default pose the recovery policy returns to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReference {
    /// Roll, pitch, yaw (rad).
    pub default_orientation: Vector3<f64>,
    pub default_position: Vector3<f64>,
}

/// `(distance, collision)`: `-exp(-(d - r))` and `+1` / `-1`.
pub fn avoidance_reward(sdf_distance: f64, obstacle_radius: f64, collided: bool) -> (f64, f64) {
    let distance = -(-(sdf_distance - obstacle_radius)).exp();
    let collision = if collided { -1.0 } else { 1.0 };
    (distance, collision)
}

/// `(walk, energy, contact)`.
///
/// `walk` is half the number of diagonal pairs (FL/RR, FR/RL) whose contact
/// flags agree; `energy` is minus the summed absolute joint power; `contact`
/// is minus the squared change of vertical foot force.
pub fn regularization_reward(
    contacts: &ContactState,
    torques: &[f64],
    joint_vels: &[f64],
    foot_forces_z_now: &[f64; NUM_FEET],
    foot_forces_z_prev: &[f64; NUM_FEET],
) -> (f64, f64, f64) {
    let c = &contacts.in_contact;
    let pairs = u8::from(c[0] == c[3]) + u8::from(c[1] == c[2]);
    let walk = 0.5 * f64::from(pairs);
    let energy = -torques.iter().zip(joint_vels).map(|(t, v)| (t * v).abs()).sum::<f64>();
    let contact = -foot_forces_z_now
        .iter()
        .zip(foot_forces_z_prev)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    (walk, energy, contact)
}

/// `(diversity, threat, direction)`.
///
/// The threat term compares the robot speed with a safe speed that rises as
/// the reaction time shrinks: `-| ‖v‖ - (‖v_cmd‖ + λ exp(-η T)) |`. Pass
/// `f64::INFINITY` as the reaction time when there is no threat. The
/// direction term is `-<v, p_o - p_r>`.
pub fn adaptive_reward(
    policy_action_variance: f64,
    robot_velocity: &Vector3<f64>,
    command: &CommandState,
    reaction_time: f64,
    obstacle_offset: &Vector3<f64>,
    config: &RewardConfig,
) -> (f64, f64, f64) {
    let safe_speed = command.velocity.norm() + config.threat_gain * (-config.threat_decay * reaction_time).exp();
    let threat = -(robot_velocity.norm() - safe_speed).abs();
    let direction = -robot_velocity.dot(obstacle_offset);
    (policy_action_variance, threat, direction)
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = (a + std::f64::consts::PI) % two_pi;
    if r < 0.0 {
        r += two_pi;
    }
    r - std::f64::consts::PI
}

/// `(orientation, stable, position, additional)`.
pub fn recovery_reward(
    state: &RobotState,
    prev_action: &Action,
    action: &Action,
    reference: &RecoveryReference,
    config: &RewardConfig,
) -> (f64, f64, f64, f64) {
    let rpy = state.orientation_rpy();
    let orientation = -(0..3)
        .map(|i| {
            let d = wrap_angle(rpy[i] - reference.default_orientation[i]);
            d * d
        })
        .sum::<f64>();
    let stable = state.joint_velocities.iter().map(|v| (-v.abs()).exp()).sum::<f64>();
    let position = -(state.base_position - reference.default_position).norm_squared();
    let torque_sq = state.joint_torques.iter().map(|t| t * t).sum::<f64>();
    let additional =
        -config.torque_penalty * torque_sq - config.action_smoothness_penalty * action_change_sq(prev_action, action);
    (orientation, stable, position, additional)
}

fn action_change_sq(prev: &Action, now: &Action) -> f64 {
    now.joint_targets.iter().zip(&prev.joint_targets).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Stumble ratio `‖f_xy‖ / |f_z|` of one foot; a purely tangential force counts
/// as infinite, no force as zero.
pub fn stumble_ratio(force: &Vector3<f64>) -> f64 {
    let fxy = force.xy().norm();
    let fz = force.z.abs();
    if fz == 0.0 {
        if fxy > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        fxy / fz
    }
}

/// The ten auxiliary regularization quantities, written into the matching
/// slots of a [`RewardTerms`]. Values are magnitudes; the weights carry sign.
#[allow(clippy::too_many_arguments)]
pub fn auxiliary_reward(
    _prev_state: &RobotState,
    state: &RobotState,
    prev_action: &Action,
    action: &Action,
    contacts: &ContactState,
    command: &CommandState,
    body_contacts: u32,
    config: &RewardConfig,
) -> RewardTerms {
    let v_body = state.body_linear_velocity();
    let w = &state.base_angular_velocity;
    let rpy = state.orientation_rpy();

    let vertical_velocity = state.base_linear_velocity.z.powi(2);
    let horizontal_ang_vel = w.xy().norm();
    let flat_orientation = rpy.xy().norm();
    let action_rate = action_change_sq(prev_action, action);
    let body_collision = f64::from(body_contacts);
    let lin_vel_tracking = (v_body.xy() - command.velocity.xy()).norm();
    let ang_vel_tracking = (w.z - command.yaw_rate).abs();
    let feet_air_time = (0..NUM_FEET)
        .filter(|&i| contacts.touchdown[i])
        .map(|i| contacts.touchdown_air_time[i] - config.foot_airtime_target)
        .sum::<f64>();
    let max_ratio = contacts.forces.iter().map(stumble_ratio).fold(0.0, f64::max);
    let stumble = if max_ratio > config.stumble_ratio_limit { 1.0 } else { 0.0 };
    let contact_force = contacts
        .forces
        .iter()
        .map(|f| (f.norm() - config.contact_force_threshold).max(0.0).powi(2))
        .sum::<f64>();

    RewardTerms {
        vertical_velocity,
        horizontal_ang_vel,
        flat_orientation,
        action_rate,
        body_collision,
        lin_vel_tracking,
        ang_vel_tracking,
        feet_air_time,
        stumble,
        contact_force,
        ..Default::default()
    }
}
