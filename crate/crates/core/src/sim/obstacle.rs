use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Spherical obstacle with scenario timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleState {
    pub radius: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub active: bool,
    /// Sim time (s) at which the obstacle appears.
    pub activation_time: f64,
    /// Time budget (s) the robot has to react.
    pub reaction_time: f64,
}

impl ObstacleState {
    /// Obstacle that is active from t = 0 with no reaction budget.
    pub fn new(radius: f64, position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { radius, position, velocity, active: true, activation_time: 0.0, reaction_time: 0.0 }
    }

    /// Obstacle that never appears.
    pub fn dormant() -> Self {
        Self {
            radius: 0.1,
            position: Vector3::new(0.0, 0.0, 100.0),
            velocity: Vector3::zeros(),
            active: false,
            activation_time: f64::INFINITY,
            reaction_time: 0.0,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn is_static(&self) -> bool {
        self.velocity == Vector3::zeros()
    }

    /// Whether contact with this obstacle counts as a collision at `sim_time`.
    ///
    /// A moving obstacle is solid as soon as it is active. A static obstacle
    /// marks a forbidden region that the robot has `reaction_time` to leave,
    /// so it only becomes solid once that budget has elapsed.
    pub fn is_solid(&self, sim_time: f64) -> bool {
        self.active && (!self.is_static() || sim_time + 1e-9 >= self.activation_time + self.reaction_time)
    }

    /// Closest distance between `point` and the obstacle's straight-line path
    /// from its current position onward.
    pub fn miss_distance(&self, point: &Vector3<f64>) -> f64 {
        let offset = point - self.position;
        let v2 = self.velocity.norm_squared();
        if v2 == 0.0 {
            return offset.norm();
        }
        let t = (offset.dot(&self.velocity) / v2).max(0.0);
        (offset - self.velocity * t).norm()
    }
}

/// Advance the obstacle over one physics step starting at `sim_time`.
///
/// The obstacle is frozen until `activation_time`; afterwards it moves with
/// constant velocity, or ballistically when `gravity` is given.
pub fn obstacle_step(obstacle: &ObstacleState, dt: f64, sim_time: f64, gravity: Option<f64>) -> ObstacleState {
    let mut next = obstacle.clone();
    if sim_time >= obstacle.activation_time {
        next.active = true;
    }
    if next.active {
        if let Some(g) = gravity {
            next.velocity.z -= g * dt;
        }
        next.position += next.velocity * dt;
    }
    next
}
