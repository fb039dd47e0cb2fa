//! Semi-implicit Euler integration of the reduced-order quadruped.

use nalgebra::{UnitQuaternion, Vector2, Vector3};

use super::kinematics::{foot_jacobian, foot_position, knee_position};
use super::{Action, ContactState, DynamicsConfig, RobotState, NUM_FEET, NUM_JOINTS};
use crate::error::{Error, Result};

/// Speeds beyond these bounds are treated as a numerical blow-up.
const MAX_LINEAR_SPEED: f64 = 200.0;
const MAX_JOINT_SPEED: f64 = 1.0e3;

/// PD servo torque `kp (target - q) - kd qd`, clamped to `±torque_limit`.
pub fn pd_torque(
    targets: &[f64; NUM_JOINTS],
    q: &[f64; NUM_JOINTS],
    qd: &[f64; NUM_JOINTS],
    kp: f64,
    kd: f64,
    torque_limit: f64,
) -> [f64; NUM_JOINTS] {
    let mut tau = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        tau[i] = (kp * (targets[i] - q[i]) - kd * qd[i]).clamp(-torque_limit, torque_limit);
    }
    tau
}

/// Largest instantaneous mechanical power over the joints, `max_i |tau_i qd_i|`.
pub fn max_joint_power(state: &RobotState) -> f64 {
    state
        .joint_torques
        .iter()
        .zip(&state.joint_velocities)
        .map(|(t, v)| (t * v).abs())
        .fold(0.0, f64::max)
}

/// Number of non-foot bodies touching the ground: the trunk (counted once)
/// plus each knee.
pub fn body_contact_count(state: &RobotState, cfg: &DynamicsConfig) -> u32 {
    let rot = state.rotation();
    let h = cfg.trunk_half_extents;
    let trunk_low = state.base_position.z
        - (rot.row(2).iter().zip(h.iter()).map(|(r, e)| r.abs() * e).sum::<f64>());
    let mut count = u32::from(trunk_low < 0.0);
    for leg in 0..NUM_FEET {
        let knee = state.base_position + rot * knee_position(leg, &state.joint_positions[3 * leg..3 * leg + 3], cfg);
        if knee.z < 0.0 {
            count += 1;
        }
    }
    count
}

fn trunk_corners(cfg: &DynamicsConfig) -> [Vector3<f64>; 8] {
    let h = cfg.trunk_half_extents;
    let mut out = [Vector3::zeros(); 8];
    for (i, c) in out.iter_mut().enumerate() {
        let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
        let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
        *c = Vector3::new(sx * h[0], sy * h[1], sz * h[2]);
    }
    out
}

/// Normal spring-damper force (unilateral) for a point `depth` below ground
/// moving with vertical speed `vz`.
fn normal_force(depth: f64, vz: f64, cfg: &DynamicsConfig) -> f64 {
    if depth <= 0.0 {
        return 0.0;
    }
    (cfg.contact_stiffness * depth - cfg.contact_damping * vz).max(0.0)
}

/// Advance the robot by one physics step of length `dt`.
///
/// Gravity acts on the base; each foot is a spring-damper contact with a
/// stick-slip friction spring clamped by the Coulomb cone. Contact forces act
/// on the base at the foot location and load the joints through the leg
/// Jacobian. Joint motion is driven by [`pd_torque`].
pub fn robot_step(
    state: &RobotState,
    contacts: &ContactState,
    action: &Action,
    dt: f64,
    cfg: &DynamicsConfig,
) -> Result<(RobotState, ContactState)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let targets = action.clamped(cfg).joint_targets;
    let substeps = cfg.substeps.max(1);
    let h = dt / substeps as f64;
    let inertia = Vector3::from(cfg.base_inertia);
    let corners = trunk_corners(cfg);

    let mut s = state.clone();
    let mut in_contact = contacts.in_contact;
    let mut anchors = contacts.anchors;
    let mut forces = [Vector3::zeros(); NUM_FEET];

    for _ in 0..substeps {
        let rot = s.rotation();
        let rot_t = rot.transpose();
        let omega = s.base_angular_velocity;
        let tau = pd_torque(&targets, &s.joint_positions, &s.joint_velocities, cfg.kp, cfg.kd, cfg.torque_limit);

        let mut force = Vector3::new(0.0, 0.0, -cfg.base_mass * cfg.gravity);
        let mut torque_body = Vector3::zeros();
        let mut joint_load = [0.0; NUM_JOINTS];

        for leg in 0..NUM_FEET {
            let q = &s.joint_positions[3 * leg..3 * leg + 3];
            let qd = Vector3::new(s.joint_velocities[3 * leg], s.joint_velocities[3 * leg + 1], s.joint_velocities[3 * leg + 2]);
            let p_body = foot_position(leg, q, cfg);
            let jac = foot_jacobian(leg, q, cfg);
            let p_world = s.base_position + rot * p_body;
            let v_world = s.base_linear_velocity + rot * (omega.cross(&p_body) + jac * qd);
            let depth = cfg.foot_radius - p_world.z;

            let f = if depth > 0.0 {
                if !in_contact[leg] {
                    anchors[leg] = p_world.xy();
                    in_contact[leg] = true;
                }
                let fn_ = normal_force(depth, v_world.z, cfg);
                let slip = p_world.xy() - anchors[leg];
                let mut ft: Vector2<f64> = -cfg.friction_stiffness * slip - cfg.friction_damping * v_world.xy();
                let limit = cfg.friction * fn_;
                let norm = ft.norm();
                if norm > limit {
                    ft *= if norm > 0.0 { limit / norm } else { 0.0 };
                    // slide the anchor so the spring carries exactly the clamped force
                    anchors[leg] = p_world.xy() + (ft + cfg.friction_damping * v_world.xy()) / cfg.friction_stiffness;
                }
                Vector3::new(ft.x, ft.y, fn_)
            } else {
                in_contact[leg] = false;
                Vector3::zeros()
            };
            forces[leg] = f;
            force += f;
            let f_body = rot_t * f;
            torque_body += p_body.cross(&f_body);
            let load = jac.transpose() * f_body;
            for j in 0..3 {
                joint_load[3 * leg + j] = load[j];
            }
        }

        for c in &corners {
            let p_world = s.base_position + rot * c;
            let depth = -p_world.z;
            if depth > 0.0 {
                let v_world = s.base_linear_velocity + rot * omega.cross(c);
                let fn_ = normal_force(depth, v_world.z, cfg);
                let mut ft = -cfg.friction_damping * v_world.xy();
                let limit = cfg.friction * fn_;
                if ft.norm() > limit {
                    ft *= limit / ft.norm();
                }
                let f = Vector3::new(ft.x, ft.y, fn_);
                force += f;
                torque_body += c.cross(&(rot_t * f));
            }
        }

        // base: velocities first, then positions with the new velocities
        s.base_linear_velocity += force * (h / cfg.base_mass);
        s.base_position += s.base_linear_velocity * h;
        let gyro = omega.cross(&inertia.component_mul(&omega));
        let omega_dot = (torque_body - gyro).component_div(&inertia);
        s.base_angular_velocity += omega_dot * h;
        s.base_orientation =
            s.base_orientation * UnitQuaternion::from_scaled_axis(s.base_angular_velocity * h);

        for i in 0..NUM_JOINTS {
            let acc = (tau[i] + joint_load[i] - cfg.joint_damping * s.joint_velocities[i]) / cfg.joint_inertia;
            s.joint_velocities[i] += acc * h;
            s.joint_positions[i] += s.joint_velocities[i] * h;
            let (lo, hi) = (cfg.joint_lower[i], cfg.joint_upper[i]);
            if s.joint_positions[i] < lo {
                s.joint_positions[i] = lo;
                s.joint_velocities[i] = s.joint_velocities[i].max(0.0);
            } else if s.joint_positions[i] > hi {
                s.joint_positions[i] = hi;
                s.joint_velocities[i] = s.joint_velocities[i].min(0.0);
            }
        }
        s.joint_torques = tau;
    }

    s.foot_forces = forces;
    s.tick = state.tick + 1;

    let diverged = !s.is_finite()
        || s.base_linear_velocity.norm() > MAX_LINEAR_SPEED
        || s.joint_velocities.iter().any(|v| v.abs() > MAX_JOINT_SPEED);
    if diverged {
        return Err(Error::SimulationDiverged { step: s.tick });
    }

    let mut next = ContactState { in_contact, anchors, forces, ..ContactState::default() };
    for leg in 0..NUM_FEET {
        if in_contact[leg] {
            next.air_time[leg] = 0.0;
            if !contacts.in_contact[leg] {
                next.touchdown[leg] = true;
                next.touchdown_air_time[leg] = contacts.air_time[leg] + dt;
            }
        } else {
            next.air_time[leg] = contacts.air_time[leg] + dt;
        }
    }
    Ok((s, next))
}

/// Kinetic plus potential energy of base and joint rotors.
pub fn mechanical_energy(state: &RobotState, cfg: &DynamicsConfig) -> f64 {
    let v = &state.base_linear_velocity;
    let w = &state.base_angular_velocity;
    let inertia = Vector3::from(cfg.base_inertia);
    let base = 0.5 * cfg.base_mass * v.norm_squared()
        + 0.5 * w.component_mul(&inertia).dot(w)
        + cfg.base_mass * cfg.gravity * state.base_position.z;
    let joints: f64 = state.joint_velocities.iter().map(|qd| 0.5 * cfg.joint_inertia * qd * qd).sum();
    base + joints
}
