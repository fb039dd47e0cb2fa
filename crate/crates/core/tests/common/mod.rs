//! Independent oracles shared by the oracle tests and the acceptance run.
//!
//! Nothing here calls back into the code under test to compute an expected
//! value; each check rebuilds the quantity from its definition.

#![allow(dead_code)]

use std::time::{Duration, Instant};

use dodge_core::fsm::{transition, Predicates, Stage};
use dodge_core::geometry::{sdf_point_obb, Obb};
use dodge_core::rewards::{
    adaptive_reward, auxiliary_reward, avoidance_reward, recovery_reward, regularization_reward, CommandState,
    RecoveryReference, RewardConfig,
};
use dodge_core::rl::gaussian::log_prob;
use dodge_core::rl::ppo::{ppo_loss_and_grad, LossCoefs, Minibatch};
use dodge_core::rl::{compute_gae, Mlp};
use dodge_core::seeded_rng;
use dodge_core::sim::{Action, ContactState, DynamicsConfig, RobotState};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Result of one criterion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi))
}

fn rand_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = rand_vec(rng, -1.0, 1.0);
    let axis = if axis.norm() < 1e-3 { Vector3::x() } else { axis };
    *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.random_range(-3.1..3.1)).matrix()
}

// ---------------------------------------------------------------- SDF

/// Minimum distance from `p` to a grid of points covering every face of the
/// box with spacing at most `h`. Only world-space corners are used.
fn sampled_surface_distance(p: &Vector3<f64>, corners: &[Vector3<f64>; 8], h: f64) -> f64 {
    // corner i has sign bits (x: bit 0, y: bit 1, z: bit 2)
    let faces: [[usize; 3]; 6] = [[0, 2, 4], [1, 3, 5], [0, 1, 4], [2, 3, 6], [0, 1, 2], [4, 5, 6]];
    let mut best = f64::INFINITY;
    for [o, a, b] in faces {
        let origin = corners[o];
        let ea = corners[a] - origin;
        let eb = corners[b] - origin;
        let na = (ea.norm() / h).ceil().max(1.0) as usize;
        let nb = (eb.norm() / h).ceil().max(1.0) as usize;
        // Skip rows whose distance to p cannot beat the current best.
        for i in 0..=na {
            let row = origin + ea * (i as f64 / na as f64);
            let to_row = p - row;
            let along = eb.normalize().dot(&to_row);
            let perp2 = to_row.norm_squared() - along * along;
            if perp2 > best * best {
                continue;
            }
            for j in 0..=nb {
                let q = row + eb * (j as f64 / nb as f64);
                let d = (p - q).norm_squared();
                if d < best * best {
                    best = d.sqrt();
                }
            }
        }
    }
    best
}

/// Point-in-box from the six face planes built out of the corners.
fn inside_by_planes(p: &Vector3<f64>, corners: &[Vector3<f64>; 8]) -> bool {
    let centroid = corners.iter().fold(Vector3::zeros(), |a, c| a + c) / 8.0;
    let faces: [[usize; 3]; 6] = [[0, 2, 4], [1, 3, 5], [0, 1, 4], [2, 3, 6], [0, 1, 2], [4, 5, 6]];
    faces.iter().all(|&[o, a, b]| {
        let n = (corners[a] - corners[o]).cross(&(corners[b] - corners[o]));
        let side_c = n.dot(&(centroid - corners[o]));
        let side_p = n.dot(&(p - corners[o]));
        side_c * side_p > 0.0
    })
}

fn random_obb(rng: &mut ChaCha8Rng) -> Obb {
    let half = Vector3::new(rng.random_range(0.05..0.4), rng.random_range(0.05..0.3), rng.random_range(0.05..0.3));
    Obb::new(rand_vec(rng, -1.0, 1.0), rand_rotation(rng), half).unwrap()
}

/// `pairs` random (exterior point, box) pairs: |sdf − sampled distance| ≤
/// 1e-3. As many (interior point, box) pairs: sdf strictly negative. Points
/// drawn around the box must agree with the plane test on their sign.
pub fn sdf_dense_sampling(pairs: usize) -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(11, 0);
    let h = 1.0e-3;
    let mut max_err: f64 = 0.0;
    let mut exterior = 0usize;
    let mut sign_checks = 0usize;
    let mut sign_mismatch = 0usize;
    while exterior < pairs {
        let obb = random_obb(&mut rng);
        let corners = obb.corners();
        let p = obb.center + rand_vec(&mut rng, -1.0, 1.0);
        let d = sdf_point_obb(&p, &obb);
        let inside = inside_by_planes(&p, &corners);
        sign_checks += 1;
        if inside != (d < 0.0) {
            sign_mismatch += 1;
        }
        if !inside {
            exterior += 1;
            max_err = max_err.max((d - sampled_surface_distance(&p, &corners, h)).abs());
        }
    }
    for _ in 0..pairs {
        let obb = random_obb(&mut rng);
        let corners = obb.corners();
        let u: [f64; 3] = [rng.random_range(0.01..0.99), rng.random_range(0.01..0.99), rng.random_range(0.01..0.99)];
        let p = corners[0] + (corners[1] - corners[0]) * u[0] + (corners[2] - corners[0]) * u[1] + (corners[4] - corners[0]) * u[2];
        sign_checks += 1;
        if sdf_point_obb(&p, &obb) >= 0.0 {
            sign_mismatch += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = max_err <= 1e-3 && sign_mismatch == 0 && elapsed < Duration::from_secs(30);
    Outcome::new(
        pass,
        format!(
            "max exterior error {max_err:.2e} over {exterior} pairs, {sign_mismatch}/{sign_checks} sign mismatches, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- GAE

/// `A_t = Σ_k (γλ)^(k−t) Π_{j<k} (1 − done_j) δ_k`, summed directly.
fn gae_double_sum(r: &[f64], v: &[f64], done: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let value_at = |k: usize| if k == n { bootstrap } else { v[k] };
    let delta: Vec<f64> = (0..n)
        .map(|k| {
            let live = if done[k] { 0.0 } else { 1.0 };
            r[k] + gamma * live * value_at(k + 1) - v[k]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in t..n {
                if (t..k).any(|j| done[j]) {
                    break;
                }
                total += (gamma * lambda).powi((k - t) as i32) * delta[k];
            }
            total
        })
        .collect()
}

pub fn gae_brute_force(sequences: usize) -> Outcome {
    let mut rng = seeded_rng(12, 0);
    let mut max_err: f64 = 0.0;
    for _ in 0..sequences {
        let n = rng.random_range(1..=64);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let done: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let bootstrap = rng.random_range(-5.0..5.0);
        let gamma = rng.random_range(0.8..1.0);
        let lambda = rng.random_range(0.0..1.0);
        let (adv, ret) = compute_gae(&r, &v, &done, bootstrap, gamma, lambda).unwrap();
        let oracle = gae_double_sum(&r, &v, &done, bootstrap, gamma, lambda);
        for t in 0..n {
            max_err = max_err.max((adv[t] - oracle[t]).abs());
            max_err = max_err.max((ret[t] - (oracle[t] + v[t])).abs());
        }
    }
    Outcome::new(max_err <= 1e-10, format!("max deviation {max_err:.2e} over {sequences} sequences"))
}

// ---------------------------------------------------------------- PPO gradient

struct Toy {
    actor: Mlp<f64>,
    critic: Mlp<f64>,
    log_std: Vec<f64>,
    obs: Vec<f64>,
    actions: Vec<f64>,
    old_lp: Vec<f64>,
    adv: Vec<f64>,
    ret: Vec<f64>,
    batch: usize,
}

impl Toy {
    fn loss(&self, actor: &Mlp<f64>, critic: &Mlp<f64>, log_std: &[f64], coefs: &LossCoefs) -> f64 {
        let mb = Minibatch {
            obs: &self.obs,
            actions: &self.actions,
            old_log_probs: &self.old_lp,
            advantages: &self.adv,
            returns: &self.ret,
            batch: self.batch,
        };
        ppo_loss_and_grad(actor, critic, log_std, &mb, coefs).unwrap().0.loss
    }
}

/// Whether any ratio or variance sits within `margin` of a kink of the loss.
fn near_kink(toy: &Toy, coefs: &LossCoefs, margin: f64) -> bool {
    let means = toy.actor.forward(&toy.obs, toy.batch).unwrap();
    let ratio_kink = (0..toy.batch).any(|r| {
        let a = &toy.actions[r * 2..r * 2 + 2];
        let m = &means[r * 2..r * 2 + 2];
        let ratio = (log_prob(a, m, &toy.log_std) - toy.old_lp[r]).exp();
        (ratio - (1.0 - coefs.clip)).abs() < margin || (ratio - (1.0 + coefs.clip)).abs() < margin
    });
    let cap_kink = toy.log_std.iter().any(|s| ((2.0 * s).exp() - coefs.diversity_cap).abs() < margin);
    ratio_kink || cap_kink
}

fn make_toy(rng: &mut ChaCha8Rng) -> Toy {
    let batch = 16;
    let actor = Mlp::<f64>::orthogonal(&[4, 8, 2], std::f64::consts::SQRT_2, 1.0, rng);
    let critic = Mlp::<f64>::orthogonal(&[4, 8, 1], std::f64::consts::SQRT_2, 1.0, rng);
    let log_std: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..0.5)).collect();
    let obs: Vec<f64> = (0..batch * 4).map(|_| rng.random_range(-2.0..2.0)).collect();
    let means = actor.forward(&obs, batch).unwrap();
    let actions: Vec<f64> = means.iter().map(|m| m + rng.random_range(-1.0..1.0)).collect();
    // Old log-probs offset so ratios land both inside and outside the clip band.
    let old_lp = (0..batch)
        .map(|r| log_prob(&actions[r * 2..r * 2 + 2], &means[r * 2..r * 2 + 2], &log_std) + rng.random_range(-0.5..0.5))
        .collect();
    let adv = (0..batch).map(|_| rng.random_range(-2.0..2.0)).collect();
    let ret = (0..batch).map(|_| rng.random_range(-3.0..3.0)).collect();
    Toy { actor, critic, log_std, obs, actions, old_lp, adv, ret, batch }
}

/// Analytic gradient of the full loss against central differences with step
/// `1e-5`, for `points` random parameter points of a 4-8-2 network.
pub fn ppo_gradient_check(points: usize) -> Outcome {
    let mut rng = seeded_rng(13, 0);
    let coefs = LossCoefs { clip: 0.2, value: 0.7, entropy: 0.01, diversity: 0.3, diversity_cap: 1.0 };
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < points {
        let toy = make_toy(&mut rng);
        if near_kink(&toy, &coefs, 1e-3) {
            continue;
        }
        checked += 1;
        let mb = Minibatch {
            obs: &toy.obs,
            actions: &toy.actions,
            old_log_probs: &toy.old_lp,
            advantages: &toy.adv,
            returns: &toy.ret,
            batch: toy.batch,
        };
        let (_, g) = ppo_loss_and_grad(&toy.actor, &toy.critic, &toy.log_std, &mb, &coefs).unwrap();
        let analytic: Vec<f64> = g.actor.iter().chain(&g.critic).chain(&g.log_std).copied().collect();

        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..toy.actor.params.len() {
            let mut plus = toy.actor.clone();
            let mut minus = toy.actor.clone();
            plus.params[i] += eps;
            minus.params[i] -= eps;
            numeric.push(
                (toy.loss(&plus, &toy.critic, &toy.log_std, &coefs) - toy.loss(&minus, &toy.critic, &toy.log_std, &coefs))
                    / (2.0 * eps),
            );
        }
        for i in 0..toy.critic.params.len() {
            let mut plus = toy.critic.clone();
            let mut minus = toy.critic.clone();
            plus.params[i] += eps;
            minus.params[i] -= eps;
            numeric.push(
                (toy.loss(&toy.actor, &plus, &toy.log_std, &coefs) - toy.loss(&toy.actor, &minus, &toy.log_std, &coefs))
                    / (2.0 * eps),
            );
        }
        for i in 0..toy.log_std.len() {
            let mut plus = toy.log_std.clone();
            let mut minus = toy.log_std.clone();
            plus[i] += eps;
            minus[i] -= eps;
            numeric.push(
                (toy.loss(&toy.actor, &toy.critic, &plus, &coefs) - toy.loss(&toy.actor, &toy.critic, &minus, &coefs))
                    / (2.0 * eps),
            );
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
        worst = worst.max(diff / scale.max(1e-12));
    }
    Outcome::new(worst <= 1e-4, format!("worst relative error {worst:.2e} over {points} parameter points"))
}

// ---------------------------------------------------------------- rewards

fn rpy_from_quaternion(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    Vector3::new(roll, pitch, yaw)
}

fn wrap(a: f64) -> f64 {
    let mut a = a;
    while a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    while a < -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

fn random_robot(rng: &mut ChaCha8Rng, dynamics: &DynamicsConfig) -> RobotState {
    let mut s = RobotState::standing(dynamics);
    s.base_position = rand_vec(rng, -1.0, 1.0);
    s.base_linear_velocity = rand_vec(rng, -3.0, 3.0);
    s.base_angular_velocity = rand_vec(rng, -4.0, 4.0);
    s.base_orientation =
        UnitQuaternion::from_euler_angles(rng.random_range(-3.0..3.0), rng.random_range(-1.4..1.4), rng.random_range(-3.0..3.0));
    for j in 0..12 {
        s.joint_positions[j] = rng.random_range(-2.0..2.0);
        s.joint_velocities[j] = rng.random_range(-20.0..20.0);
        s.joint_torques[j] = rng.random_range(-23.7..23.7);
    }
    s
}

fn random_contacts(rng: &mut ChaCha8Rng) -> ContactState {
    let mut c = ContactState::default();
    for i in 0..4 {
        c.in_contact[i] = rng.random_bool(0.5);
        c.touchdown[i] = rng.random_bool(0.3);
        c.touchdown_air_time[i] = rng.random_range(0.0..1.0);
        c.forces[i] = rand_vec(rng, -150.0, 150.0);
        if rng.random_bool(0.1) {
            c.forces[i].z = 0.0;
        }
    }
    c
}

/// Every reward term against a formula rebuilt in this file, over `states`
/// random states; returns the worst absolute deviation and a spot-value check.
pub fn reward_oracle(states: usize) -> Outcome {
    let dynamics = DynamicsConfig::default();
    let mut rng = seeded_rng(14, 0);
    let mut worst: f64 = 0.0;
    let mut worst_term = "";
    let mut note = |name: &'static str, got: f64, want: f64| {
        let d = if got == want { 0.0 } else { (got - want).abs() };
        if d > worst || d.is_nan() {
            worst = if d.is_nan() { f64::INFINITY } else { d };
            worst_term = name;
        }
    };
    for _ in 0..states {
        let mut cfg = RewardConfig::avoidance();
        cfg.threat_gain = rng.random_range(0.0..4.0);
        cfg.threat_decay = rng.random_range(0.1..4.0);
        cfg.contact_force_threshold = rng.random_range(20.0..150.0);
        cfg.stumble_ratio_limit = rng.random_range(0.5..6.0);
        cfg.foot_airtime_target = rng.random_range(0.1..0.8);
        cfg.torque_penalty = rng.random_range(0.0..1e-3);
        cfg.action_smoothness_penalty = rng.random_range(0.0..0.1);

        // distance and collision
        let d = rng.random_range(-0.5..3.0);
        let radius = rng.random_range(0.05..0.5);
        let hit = rng.random_bool(0.5);
        let (rd, rc) = avoidance_reward(d, radius, hit);
        note("distance", rd, -(radius - d).exp());
        note("collision", rc, if hit { -1.0 } else { 1.0 });

        // walk, energy, contact
        let contacts = random_contacts(&mut rng);
        let torques: Vec<f64> = (0..12).map(|_| rng.random_range(-23.7..23.7)).collect();
        let vels: Vec<f64> = (0..12).map(|_| rng.random_range(-20.0..20.0)).collect();
        let fz_now: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..200.0));
        let fz_prev: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..200.0));
        let (walk, energy, contact) = regularization_reward(&contacts, &torques, &vels, &fz_now, &fz_prev);
        let ic = contacts.in_contact;
        let mut want_walk = 0.0;
        if ic[0] == ic[3] {
            want_walk += 0.5;
        }
        if ic[1] == ic[2] {
            want_walk += 0.5;
        }
        note("walk", walk, want_walk);
        let mut want_energy = 0.0;
        for j in 0..12 {
            want_energy -= (torques[j] * vels[j]).abs();
        }
        note("energy", energy, want_energy);
        let mut want_contact = 0.0;
        for i in 0..4 {
            want_contact -= (fz_now[i] - fz_prev[i]).powi(2);
        }
        note("contact", contact, want_contact);

        // diversity, threat, direction
        let var = rng.random_range(0.0..2.0);
        let v = rand_vec(&mut rng, -3.0, 3.0);
        let cmd = CommandState { velocity: rand_vec(&mut rng, -1.0, 1.0), yaw_rate: rng.random_range(-1.0..1.0), heading: 0.0 };
        let t_react = rng.random_range(0.0..5.0);
        let offset = rand_vec(&mut rng, -5.0, 5.0);
        let (div, threat, dir) = adaptive_reward(var, &v, &cmd, t_react, &offset, &cfg);
        let v_norm = (v.x * v.x + v.y * v.y + v.z * v.z).sqrt();
        let cmd_norm = (cmd.velocity.x.powi(2) + cmd.velocity.y.powi(2) + cmd.velocity.z.powi(2)).sqrt();
        note("diversity", div, var);
        note("threat", threat, -(v_norm - cmd_norm - cfg.threat_gain * (-cfg.threat_decay * t_react).exp()).abs());
        note("direction", dir, -(v.x * offset.x + v.y * offset.y + v.z * offset.z));

        // recovery terms
        let robot = random_robot(&mut rng, &dynamics);
        let prev = Action::new(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let action = Action::new(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let reference = RecoveryReference {
            default_orientation: Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-3.0..3.0)),
            default_position: rand_vec(&mut rng, -1.0, 1.0),
        };
        let (orient, stable, position, additional) = recovery_reward(&robot, &prev, &action, &reference, &cfg);
        let rpy = rpy_from_quaternion(&robot.base_orientation);
        let want_orient = -(0..3).map(|i| wrap(rpy[i] - reference.default_orientation[i]).powi(2)).sum::<f64>();
        note("orientation", orient, want_orient);
        note("stable", stable, robot.joint_velocities.iter().map(|q| (-q.abs()).exp()).sum());
        let dp = robot.base_position - reference.default_position;
        note("position", position, -(dp.x * dp.x + dp.y * dp.y + dp.z * dp.z));
        let torque_sq: f64 = robot.joint_torques.iter().map(|t| t * t).sum();
        let change_sq: f64 = (0..12).map(|j| (action.joint_targets[j] - prev.joint_targets[j]).powi(2)).sum();
        note("additional", additional, -cfg.torque_penalty * torque_sq - cfg.action_smoothness_penalty * change_sq);

        // auxiliary regularizers
        let cmd2 = CommandState { velocity: rand_vec(&mut rng, -1.0, 1.0), yaw_rate: rng.random_range(-1.0..1.0), heading: 0.0 };
        let body_contacts = rng.random_range(0..4u32);
        let aux = auxiliary_reward(&robot, &robot, &prev, &action, &contacts, &cmd2, body_contacts, &cfg);
        let rot = robot.base_orientation.to_rotation_matrix();
        let v_body = rot.matrix().transpose() * robot.base_linear_velocity;
        let w = robot.base_angular_velocity;
        note("vertical_velocity", aux.vertical_velocity, robot.base_linear_velocity.z * robot.base_linear_velocity.z);
        note("horizontal_ang_vel", aux.horizontal_ang_vel, (w.x * w.x + w.y * w.y).sqrt());
        note("flat_orientation", aux.flat_orientation, (rpy.x * rpy.x + rpy.y * rpy.y).sqrt());
        note("action_rate", aux.action_rate, change_sq);
        note("body_collision", aux.body_collision, f64::from(body_contacts));
        note(
            "lin_vel_tracking",
            aux.lin_vel_tracking,
            ((v_body.x - cmd2.velocity.x).powi(2) + (v_body.y - cmd2.velocity.y).powi(2)).sqrt(),
        );
        note("ang_vel_tracking", aux.ang_vel_tracking, (w.z - cmd2.yaw_rate).abs());
        let mut air = 0.0;
        for i in 0..4 {
            if contacts.touchdown[i] {
                air += contacts.touchdown_air_time[i] - cfg.foot_airtime_target;
            }
        }
        note("feet_air_time", aux.feet_air_time, air);
        let stumbling = contacts.forces.iter().any(|f| {
            let fxy = (f.x * f.x + f.y * f.y).sqrt();
            fxy > cfg.stumble_ratio_limit * f.z.abs()
        });
        note("stumble", aux.stumble, if stumbling { 1.0 } else { 0.0 });
        let mut excess = 0.0;
        for f in &contacts.forces {
            let n = (f.x * f.x + f.y * f.y + f.z * f.z).sqrt();
            if n > cfg.contact_force_threshold {
                excess += (n - cfg.contact_force_threshold).powi(2);
            }
        }
        note("contact_force", aux.contact_force, excess);
    }

    // Hand-computed spot values.
    let mut spots_ok = true;
    spots_ok &= avoidance_reward(0.2, 0.2, false).0 == -1.0;
    let rest = RobotState::standing(&dynamics);
    let stance = Action::stance(&dynamics);
    let reference = RecoveryReference { default_orientation: Vector3::zeros(), default_position: rest.base_position };
    spots_ok &= recovery_reward(&rest, &stance, &stance, &reference, &RewardConfig::recovery()).1 == 12.0;
    let stumble_at = |fxy: f64| {
        let mut c = ContactState::default();
        c.forces[2] = Vector3::new(fxy, 0.0, 10.0);
        let cfg = RewardConfig::avoidance();
        auxiliary_reward(&rest, &rest, &stance, &stance, &c, &CommandState::default(), 0, &cfg).stumble
    };
    spots_ok &= stumble_at(50.0) == 0.0 && stumble_at(50.0 + 1e-9) == 1.0;
    let (d, c) = avoidance_reward(0.5, 0.1, false);
    spots_ok &= (d + 0.670_320_046_035_639_3).abs() < 1e-12 && c == 1.0;
    let cfg = RewardConfig { threat_gain: 2.0, threat_decay: 2.0, ..RewardConfig::avoidance() };
    let (_, threat, dir) = adaptive_reward(
        0.0,
        &Vector3::new(1.0, 0.0, 0.0),
        &CommandState::default(),
        0.5,
        &Vector3::new(0.0, 2.0, 0.0),
        &cfg,
    );
    // safe speed 2·e^-1 = 0.735758882
    spots_ok &= (threat + 0.264_241_117_657_115_4).abs() < 1e-12 && dir == 0.0;

    let pass = worst <= 1e-9 && spots_ok;
    Outcome::new(
        pass,
        format!("worst deviation {worst:.2e} ({}) over {states} states, spot values {}", if worst_term.is_empty() { "-" } else { worst_term }, if spots_ok { "ok" } else { "wrong" }),
    )
}

// ---------------------------------------------------------------- FSM

/// The transition table written out row by row:
/// `(stage, approaching, unstable, threat_cleared, hold_elapsed) -> next`.
pub fn fsm_expected(stage: Stage, approaching: bool, unstable: bool, cleared: bool, hold: bool) -> Stage {
    use Stage::*;
    match (stage, approaching, unstable, cleared, hold) {
        (Normal, true, _, _, _) => Avoidance,
        (Normal, false, _, _, _) => Normal,
        (Avoidance, _, true, true, _) => Recovery,
        (Avoidance, _, false, true, _) => Normal,
        (Avoidance, _, _, false, _) => Avoidance,
        (Recovery, _, false, _, true) => Normal,
        (Recovery, _, _, _, _) => Recovery,
    }
}

pub fn fsm_truth_table() -> Outcome {
    let mut rows = 0;
    let mut wrong = Vec::new();
    for stage in Stage::ALL {
        for bits in 0..16u8 {
            let p = Predicates {
                approaching: bits & 1 != 0,
                unstable: bits & 2 != 0,
                threat_cleared: bits & 4 != 0,
                hold_elapsed: bits & 8 != 0,
            };
            rows += 1;
            let want = fsm_expected(stage, p.approaching, p.unstable, p.threat_cleared, p.hold_elapsed);
            let got = transition(stage, p);
            if got != want {
                wrong.push(format!("{}:{bits:04b} gave {} want {}", stage.as_str(), got.as_str(), want.as_str()));
            }
        }
    }
    Outcome::new(wrong.is_empty(), if wrong.is_empty() { format!("{rows}/{rows} rows") } else { wrong.join(", ") })
}
