//! Normal / avoidance / recovery state machine.
//!
//! ```text
//!            approaching                 threat cleared & unstable
//!   Normal ───────────────▶ Avoidance ─────────────────────────────▶ Recovery
//!     ▲  ▲                      │                                        │
//!     │  └──────────────────────┘ threat cleared & stable                │
//!     └──────────────────────────────────────────────────────────────────┘
//!                         stable for `recovery_hold_time`
//! ```
//!
//! Instability is only checked once the threat has cleared: while an obstacle
//! is still incoming the avoidance policy keeps control.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::sim::{ObstacleState, RobotState};

/// Slack on the hold timer so accumulated clock rounding does not add a tick.
const CLOCK_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Normal,
    Avoidance,
    Recovery,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Normal, Stage::Avoidance, Stage::Recovery];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Normal => "normal",
            Stage::Avoidance => "avoidance",
            Stage::Recovery => "recovery",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsmThresholds {
    /// Limit on the tilt norm `‖(roll, pitch)‖` (rad).
    pub orientation_limit: f64,
    /// Limit on the Euclidean norm of the joint velocities (rad/s).
    pub joint_velocity_limit: f64,
    /// Minimum base height (m).
    pub height_floor: f64,
    /// Stability must hold this long before leaving recovery (s).
    pub recovery_hold_time: f64,
    /// An obstacle whose path stays farther than this is no longer a threat (m).
    pub clear_distance: f64,
}

impl Default for FsmThresholds {
    fn default() -> Self {
        Self {
            orientation_limit: 0.8,
            joint_velocity_limit: 25.0,
            height_floor: 0.15,
            recovery_hold_time: 0.5,
            clear_distance: 1.5,
        }
    }
}

/// Inputs of the transition function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Predicates {
    pub approaching: bool,
    pub unstable: bool,
    pub threat_cleared: bool,
    pub hold_elapsed: bool,
}

/// True iff the obstacle velocity points toward the robot, `<v_o, p_r - p_o> > 0`.
pub fn approaching(obstacle: &ObstacleState, robot: &RobotState) -> bool {
    obstacle.active && obstacle.velocity.dot(&(robot.base_position - obstacle.position)) > 0.0
}

/// Tilt used by the orientation criterion. Heading is not a stability
/// quantity, so yaw is excluded.
pub fn tilt(robot: &RobotState) -> f64 {
    let rpy = robot.orientation_rpy();
    Vector3::new(rpy.x, rpy.y, 0.0).norm()
}

pub fn joint_speed_norm(robot: &RobotState) -> f64 {
    robot.joint_velocities.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Any of: tilt beyond the orientation limit, joint speed norm beyond its
/// limit, base height under the floor.
pub fn unstable(robot: &RobotState, thresholds: &FsmThresholds) -> bool {
    tilt(robot) > thresholds.orientation_limit
        || joint_speed_norm(robot) > thresholds.joint_velocity_limit
        || robot.base_height() < thresholds.height_floor
}

/// The threat has passed when the obstacle is inactive, no longer approaching,
/// or its remaining straight-line path stays beyond `clear_distance`.
pub fn threat_cleared(obstacle: &ObstacleState, robot: &RobotState, thresholds: &FsmThresholds) -> bool {
    !obstacle.active
        || !approaching(obstacle, robot)
        || obstacle.miss_distance(&robot.base_position) > thresholds.clear_distance
}

/// Pure transition function over the predicate values.
pub fn transition(stage: Stage, p: Predicates) -> Stage {
    match stage {
        Stage::Normal if p.approaching => Stage::Avoidance,
        Stage::Avoidance if p.threat_cleared && p.unstable => Stage::Recovery,
        Stage::Avoidance if p.threat_cleared => Stage::Normal,
        Stage::Recovery if p.hold_elapsed && !p.unstable => Stage::Normal,
        s => s,
    }
}

/// Stage plus the recovery hold timer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsmState {
    pub stage: Stage,
    /// Clock value at which the robot last became stable while recovering.
    pub stable_since: Option<f64>,
}

impl Default for FsmState {
    fn default() -> Self {
        Self { stage: Stage::Normal, stable_since: None }
    }
}

/// One tick of the state machine at time `clock`.
pub fn fsm_step(
    state: FsmState,
    robot: &RobotState,
    obstacle: &ObstacleState,
    thresholds: &FsmThresholds,
    clock: f64,
) -> FsmState {
    let is_unstable = unstable(robot, thresholds);
    let since = match state.stage {
        Stage::Recovery if !is_unstable => Some(state.stable_since.unwrap_or(clock)),
        _ => None,
    };
    let preds = Predicates {
        approaching: approaching(obstacle, robot),
        unstable: is_unstable,
        threat_cleared: threat_cleared(obstacle, robot, thresholds),
        hold_elapsed: since.is_some_and(|s| clock - s + CLOCK_EPS >= thresholds.recovery_hold_time),
    };
    let stage = transition(state.stage, preds);
    FsmState { stage, stable_since: if stage == Stage::Recovery { since } else { None } }
}
