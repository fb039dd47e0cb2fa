//! Reduced-order quadruped physics and obstacle propagation.

mod config;
mod dynamics;
pub mod kinematics;
mod obstacle;
mod state;

pub use config::DynamicsConfig;
pub use dynamics::{body_contact_count, max_joint_power, mechanical_energy, pd_torque, robot_step};
pub use obstacle::{obstacle_step, ObstacleState};
pub use state::{Action, ContactState, RobotState};

pub const NUM_JOINTS: usize = 12;
pub const NUM_FEET: usize = 4;
