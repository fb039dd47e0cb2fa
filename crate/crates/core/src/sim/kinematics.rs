//! Leg forward kinematics in the base frame.
//!
//! Each leg is hip abduction (about body x), thigh pitch and calf pitch (about
//! the rotated y axis). Legs are indexed FL, FR, RL, RR.

use nalgebra::{Matrix3, Vector3};

use super::DynamicsConfig;

pub const LEG_NAMES: [&str; 4] = ["FL", "FR", "RL", "RR"];

/// +1 for left legs, -1 for right legs.
pub fn side_sign(leg: usize) -> f64 {
    if leg % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// +1 for front legs, -1 for rear legs.
pub fn front_sign(leg: usize) -> f64 {
    if leg < 2 {
        1.0
    } else {
        -1.0
    }
}

pub fn hip_position(leg: usize, cfg: &DynamicsConfig) -> Vector3<f64> {
    Vector3::new(front_sign(leg) * cfg.hip_offset[0], side_sign(leg) * cfg.hip_offset[1], 0.0)
}

fn rotate_about_x(abduction: f64, y: f64, z: f64) -> (f64, f64) {
    let (s, c) = abduction.sin_cos();
    (y * c - z * s, y * s + z * c)
}

/// Foot center in the base frame.
pub fn foot_position(leg: usize, q: &[f64], cfg: &DynamicsConfig) -> Vector3<f64> {
    let (a, b, c) = (q[0], q[1], q[2]);
    let (l1, l2) = (cfg.thigh_length, cfg.calf_length);
    let d = side_sign(leg) * cfg.thigh_offset;
    let xp = -l1 * b.sin() - l2 * (b + c).sin();
    let zp = -l1 * b.cos() - l2 * (b + c).cos();
    let (y, z) = rotate_about_x(a, d, zp);
    hip_position(leg, cfg) + Vector3::new(xp, y, z)
}

/// Knee (thigh end) in the base frame.
pub fn knee_position(leg: usize, q: &[f64], cfg: &DynamicsConfig) -> Vector3<f64> {
    let (a, b) = (q[0], q[1]);
    let l1 = cfg.thigh_length;
    let d = side_sign(leg) * cfg.thigh_offset;
    let (y, z) = rotate_about_x(a, d, -l1 * b.cos());
    hip_position(leg, cfg) + Vector3::new(-l1 * b.sin(), y, z)
}

/// d(foot_position)/dq for one leg; column j is the derivative w.r.t. joint j.
pub fn foot_jacobian(leg: usize, q: &[f64], cfg: &DynamicsConfig) -> Matrix3<f64> {
    let (a, b, c) = (q[0], q[1], q[2]);
    let (l1, l2) = (cfg.thigh_length, cfg.calf_length);
    let d = side_sign(leg) * cfg.thigh_offset;
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sbc, cbc) = (b + c).sin_cos();
    let zp = -l1 * cb - l2 * cbc;

    let dx_db = -l1 * cb - l2 * cbc;
    let dx_dc = -l2 * cbc;
    let dzp_db = l1 * sb + l2 * sbc;
    let dzp_dc = l2 * sbc;

    Matrix3::new(
        0.0,
        dx_db,
        dx_dc,
        -d * sa - zp * ca,
        -sa * dzp_db,
        -sa * dzp_dc,
        d * ca - zp * sa,
        ca * dzp_db,
        ca * dzp_dc,
    )
}
