//! Oriented bounding boxes and the point-to-box signed distance used as the
//! collision test between the robot trunk and a spherical obstacle.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ObstacleState;

/// Default trunk half extents (m), roughly the Go2 body.
pub const DEFAULT_HALF_EXTENTS: [f64; 3] = [0.35, 0.15, 0.15];

/// Tolerance on `det(R) - 1` when accepting a rotation.
const DET_TOLERANCE: f64 = 1e-6;

/// Box with arbitrary orientation. `rotation` maps body coordinates to world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub half_extents: Vector3<f64>,
}

impl Obb {
    pub fn new(center: Vector3<f64>, rotation: Matrix3<f64>, half_extents: Vector3<f64>) -> Result<Self> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("obb center is not finite".into()));
        }
        if !half_extents.iter().all(|&h| h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!(
                "half extents must be strictly positive, got {:?}",
                half_extents.as_slice()
            )));
        }
        let det = rotation.determinant();
        if !det.is_finite() || (det - 1.0).abs() > DET_TOLERANCE {
            return Err(Error::InvalidInput(format!("rotation determinant {det} is not 1")));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > DET_TOLERANCE) {
            return Err(Error::InvalidInput("rotation is not orthonormal".into()));
        }
        Ok(Self { center, rotation, half_extents })
    }

    /// World point expressed in the box frame.
    pub fn to_body(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (point - self.center)
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * local + self.center
    }

    /// The eight corners in world coordinates.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let h = self.half_extents;
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.to_world(&Vector3::new(sx * h.x, sy * h.y, sz * h.z));
        }
        out
    }
}

/// Box attached to the robot base. The box follows both base translation and
/// base rotation; legs are not part of the collision body.
pub fn obb_from_robot_state(
    base_position: Vector3<f64>,
    base_rotation: Matrix3<f64>,
    half_extents: Vector3<f64>,
) -> Result<Obb> {
    Obb::new(base_position, base_rotation, half_extents)
}

/// Signed distance from `point` to the box surface.
///
/// Outside the box this is the Euclidean distance to the surface. Inside it is
/// minus the distance to the nearest face, so the function is continuous
/// across the surface and 1-Lipschitz everywhere.
pub fn sdf_point_obb(point: &Vector3<f64>, obb: &Obb) -> f64 {
    let local = obb.to_body(point);
    let q = local.abs() - obb.half_extents;
    let outside = q.map(|v| v.max(0.0)).norm();
    let inside = q.max().min(0.0);
    outside + inside
}

/// Collision predicate: the sphere overlaps the box iff the signed distance of
/// its center is strictly smaller than its radius.
pub fn check_collision(obstacle: &ObstacleState, obb: &Obb) -> Result<bool> {
    if !(obstacle.radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "obstacle radius must be positive, got {}",
            obstacle.radius
        )));
    }
    Ok(sdf_point_obb(&obstacle.position, obb) < obstacle.radius)
}
