//! Episode loop of the reduced-order quadruped.

use std::collections::VecDeque;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{CurriculumStage, EnvConfig};
use super::observation::{obs_dim, observe, ObservationInput, ACTION_DIM};
use super::scenario::{curriculum_scenario, sample_randomization, uniform, EpisodeParams};
use super::{Env, StepInfo, Transition};
use crate::fsm::{fsm_step, FsmState, FsmThresholds};
use crate::geometry::{obb_from_robot_state, sdf_point_obb};
use crate::rewards::{
    adaptive_reward, auxiliary_reward, avoidance_reward, recovery_reward, regularization_reward, RecoveryReference,
    RewardBreakdown, RewardConfig, RewardTerms,
};
use crate::rl::PolicyKind;
use crate::sim::{
    body_contact_count, max_joint_power, obstacle_step, robot_step, Action, ContactState, DynamicsConfig,
    ObstacleState, RobotState, NUM_FEET, NUM_JOINTS,
};
use crate::{Error, Result};

/// Entries kept in the per-episode step log.
const LOG_CAPACITY: usize = 64;

/// Stance time simulated to find the resting pose episodes start from (s).
const SETTLE_TIME: f64 = 3.0;

/// Crouched joint pose used to spread recovery start states.
const CROUCH_THIGH: f64 = 1.3;
const CROUCH_CALF: f64 = -2.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub time: f64,
    pub reward: f64,
    pub sdf: f64,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    /// Curriculum stage the episode was started in.
    pub stage: CurriculumStage,
    pub time: f64,
    /// Control steps taken.
    pub tick: u64,
    /// Control steps until timeout.
    pub horizon: u64,
    pub params: EpisodeParams,
    pub robot: RobotState,
    pub obstacle: ObstacleState,
    pub contacts: ContactState,
    pub fsm: FsmState,
    pub prev_action: Action,
    pub collided_ever: bool,
    pub done: bool,
    pub reference: RecoveryReference,
    pub start_position: Vector3<f64>,
    pub max_joint_power: f64,
    pub log: VecDeque<StepLog>,
}

/// One simulated quadruped with its obstacle scenario.
#[derive(Debug, Clone)]
pub struct QuadrupedEnv {
    pub config: EnvConfig,
    pub base_dynamics: DynamicsConfig,
    /// Dynamics of the current episode, after randomization.
    pub dynamics: DynamicsConfig,
    pub rewards: RewardConfig,
    pub thresholds: FsmThresholds,
    pub episode: EpisodeState,
    /// Resting stance under the nominal dynamics, centred at the origin.
    settled: (RobotState, ContactState),
    rng: ChaCha8Rng,
    action_variance: f64,
}

impl QuadrupedEnv {
    pub fn new(
        config: EnvConfig,
        dynamics: DynamicsConfig,
        rewards: RewardConfig,
        thresholds: FsmThresholds,
        rng: ChaCha8Rng,
    ) -> Self {
        let mut env = Self {
            episode: placeholder_episode(&config, &dynamics),
            settled: settle(&dynamics),
            dynamics: dynamics.clone(),
            base_dynamics: dynamics,
            config,
            rewards,
            thresholds,
            rng,
            action_variance: 0.0,
        };
        env.reset();
        env
    }

    pub fn with_seed(config: EnvConfig, dynamics: DynamicsConfig, rewards: RewardConfig, thresholds: FsmThresholds, seed: u64) -> Self {
        Self::new(config, dynamics, rewards, thresholds, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.policy_kind
    }

    /// Start an episode with explicitly chosen parameters.
    pub fn reset_with(&mut self, params: EpisodeParams) -> Vec<f32> {
        let cdt = self.base_dynamics.control_dt();
        let mut params = params;
        let horizon = (params.episode_length / cdt).round().max(1.0) as u64;
        params.episode_length = horizon as f64 * cdt;

        let mut dynamics = self.base_dynamics.clone();
        dynamics.friction = params.friction;
        dynamics.base_mass = (dynamics.base_mass + params.added_mass).max(1.0);
        self.dynamics = dynamics;

        let (standing, settled_contacts) = self.settled.clone();
        let robot = match self.config.policy_kind {
            PolicyKind::Recovery => self.perturbed_start(),
            _ => standing.clone(),
        };
        let yaw = robot.orientation_rpy().z;
        let obstacle = match self.config.policy_kind {
            PolicyKind::Avoidance => {
                curriculum_scenario(self.config.curriculum_stage, &params, &robot.base_position, self.config.post_contact_time)
            }
            _ => ObstacleState::dormant(),
        };
        let reference = RecoveryReference {
            default_orientation: Vector3::new(0.0, 0.0, yaw),
            default_position: Vector3::new(robot.base_position.x, robot.base_position.y, standing.base_position.z),
        };
        let contacts = if self.config.policy_kind == PolicyKind::Recovery {
            let mut c = ContactState::default();
            for leg in 0..NUM_FEET {
                c.anchors[leg] = foot_world_xy(&robot, leg, &self.dynamics);
            }
            c
        } else {
            settled_contacts
        };
        self.episode = EpisodeState {
            stage: self.config.curriculum_stage,
            time: 0.0,
            tick: 0,
            horizon,
            params,
            start_position: robot.base_position,
            robot,
            obstacle,
            contacts,
            fsm: FsmState::default(),
            prev_action: Action::stance(&self.dynamics),
            collided_ever: false,
            done: false,
            reference,
            max_joint_power: 0.0,
            log: VecDeque::with_capacity(LOG_CAPACITY),
        };
        self.observation()
    }

    /// Tilted, spinning, low start state for recovery training.
    fn perturbed_start(&mut self) -> RobotState {
        let init = self.config.recovery_init.clone();
        let cfg = &self.dynamics;
        let mut s = RobotState::standing(cfg);
        let roll = uniform([-init.max_tilt, init.max_tilt], &mut self.rng);
        let pitch = uniform([-init.max_tilt, init.max_tilt], &mut self.rng);
        s.base_orientation = UnitQuaternion::from_euler_angles(roll, pitch, 0.0);
        let crouch = self.rng.random_range(0.0..=1.0);
        for leg in 0..NUM_FEET {
            let d = &cfg.default_joint_positions[3 * leg..3 * leg + 3];
            s.joint_positions[3 * leg] = d[0];
            s.joint_positions[3 * leg + 1] = d[1] + crouch * (CROUCH_THIGH - d[1]);
            s.joint_positions[3 * leg + 2] = d[2] + crouch * (CROUCH_CALF - d[2]);
        }
        let v = init.max_joint_velocity;
        for qd in s.joint_velocities.iter_mut() {
            *qd = uniform([-v, v], &mut self.rng);
        }
        s.base_position.z = uniform(init.height, &mut self.rng);
        // lift the base until neither a foot nor a trunk corner is under ground
        let rot = s.rotation();
        let h = cfg.trunk_half_extents;
        let mut lowest = s.base_position.z - s.ground_clearance_height(cfg);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let c = rot * Vector3::new(sx * h[0], sy * h[1], sz * h[2]);
                    lowest = lowest.min(s.base_position.z + c.z);
                }
            }
        }
        if lowest < 0.0 {
            s.base_position.z -= lowest;
        }
        s
    }

    pub fn observation(&mut self) -> Vec<f32> {
        self.observation_for(self.config.policy_kind)
    }

    /// Observation in the layout of `kind`, whatever policy the env trains.
    pub fn observation_for(&mut self, kind: PolicyKind) -> Vec<f32> {
        let ep = &self.episode;
        let prev = prev_action_offset(&ep.prev_action, &self.dynamics);
        let input = ObservationInput {
            robot: &ep.robot,
            obstacle: &ep.obstacle,
            contacts: &ep.contacts,
            previous_action: &prev,
            command: &ep.params.command,
            sim_time: ep.time,
        };
        let noise = self.config.observation_noise.then_some(&self.config.ranges);
        observe(&input, kind, noise, &mut self.rng)
    }

    /// Advance one control step with joint targets `action`.
    pub fn step_action(&mut self, action: Action) -> Result<Transition> {
        if self.episode.done {
            return Err(Error::EpisodeDone);
        }
        let cfg = self.dynamics.clone();
        let dt = cfg.dt;
        let kind = self.config.policy_kind;
        let stage = self.episode.stage;
        let gravity = cfg.obstacle_gravity.then_some(cfg.gravity);
        let half = Vector3::from(self.config.half_extents);
        let ep = &mut self.episode;
        let prev_state = ep.robot.clone();
        let fz_prev = ep.contacts.forces.map(|f| f.z);
        let mut touchdown = [false; NUM_FEET];
        let mut touchdown_air = [0.0; NUM_FEET];
        let mut collided = false;
        let mut diverged = false;
        let mut step_mjp: f64 = 0.0;

        for k in 0..cfg.decimation {
            let phys_tick = ep.tick * cfg.decimation as u64 + k as u64;
            let t0 = phys_tick as f64 * dt;
            let t1 = (phys_tick + 1) as f64 * dt;
            if kind == PolicyKind::Avoidance && !ep.obstacle.active && t0 + 1e-9 >= ep.obstacle.activation_time {
                ep.obstacle = curriculum_scenario(stage, &ep.params, &ep.robot.base_position, self.config.post_contact_time);
                ep.obstacle.active = true;
            }
            match robot_step(&ep.robot, &ep.contacts, &action, dt, &cfg) {
                Ok((robot, contacts)) => {
                    for leg in 0..NUM_FEET {
                        if contacts.touchdown[leg] {
                            touchdown[leg] = true;
                            touchdown_air[leg] = contacts.touchdown_air_time[leg];
                        }
                    }
                    ep.robot = robot;
                    ep.contacts = contacts;
                }
                Err(Error::SimulationDiverged { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            ep.obstacle = obstacle_step(&ep.obstacle, dt, t0, gravity);
            step_mjp = step_mjp.max(max_joint_power(&ep.robot));
            if ep.obstacle.active && ep.obstacle.is_solid(t1) {
                let obb = obb_from_robot_state(ep.robot.base_position, ep.robot.rotation(), half)?;
                if sdf_point_obb(&ep.obstacle.position, &obb) < ep.obstacle.radius {
                    collided = true;
                    if self.config.terminate_on_collision {
                        break;
                    }
                }
            }
        }
        ep.contacts.touchdown = touchdown;
        ep.contacts.touchdown_air_time = touchdown_air;
        ep.tick += 1;
        ep.time = ep.tick as f64 * cfg.control_dt();
        ep.max_joint_power = ep.max_joint_power.max(step_mjp);
        ep.collided_ever |= collided;

        let robot = &ep.robot;
        let mut terms = RewardTerms::default();
        let mut sdf = f64::INFINITY;
        if !diverged {
            let obb = obb_from_robot_state(robot.base_position, robot.rotation(), half)?;
            let active = ep.obstacle.active;
            if active {
                sdf = sdf_point_obb(&ep.obstacle.position, &obb);
            }
            let aux = auxiliary_reward(
                &prev_state,
                robot,
                &ep.prev_action,
                &action,
                &ep.contacts,
                &ep.params.command,
                body_contact_count(robot, &cfg),
                &self.rewards,
            );
            terms = aux;
            match kind {
                PolicyKind::Recovery => {
                    let (o, s, p, a) = recovery_reward(robot, &ep.prev_action, &action, &ep.reference, &self.rewards);
                    terms.orientation = o;
                    terms.stable = s;
                    terms.position = p;
                    terms.additional = a;
                }
                _ => {
                    let (distance, collision) = avoidance_reward(sdf, ep.obstacle.radius, collided);
                    terms.distance = if active { distance } else { 0.0 };
                    terms.collision = collision;
                    let fz_now = ep.contacts.forces.map(|f| f.z);
                    let (walk, energy, contact) =
                        regularization_reward(&ep.contacts, &robot.joint_torques, &robot.joint_velocities, &fz_now, &fz_prev);
                    terms.walk = walk;
                    terms.energy = energy;
                    terms.contact = contact;
                    let (t_react, offset) = if active {
                        (ep.obstacle.reaction_time, ep.obstacle.position - robot.base_position)
                    } else {
                        (f64::INFINITY, Vector3::zeros())
                    };
                    let (div, threat, direction) = adaptive_reward(
                        self.action_variance,
                        &robot.base_linear_velocity,
                        &ep.params.command,
                        t_react,
                        &offset,
                        &self.rewards,
                    );
                    terms.diversity = div;
                    terms.threat = threat;
                    terms.direction = direction;
                }
            }
        } else {
            terms.collision = if collided { -1.0 } else { 1.0 };
        }
        let reward = RewardBreakdown::new(terms, &self.rewards.weights);

        ep.fsm = fsm_step(ep.fsm, &ep.robot, &ep.obstacle, &self.thresholds, ep.time);
        let fell = diverged || ep.robot.base_height() < self.config.fall_height;
        let collision_end = collided && self.config.terminate_on_collision && kind == PolicyKind::Avoidance;
        let terminal = fell || collision_end;
        let timeout = !terminal && ep.tick >= ep.horizon;
        ep.done = terminal || timeout;
        ep.prev_action = action;
        if ep.log.len() == LOG_CAPACITY {
            ep.log.pop_front();
        }
        ep.log.push_back(StepLog { time: ep.time, reward: reward.total, sdf, collided });

        let info = StepInfo {
            collided,
            fell,
            diverged,
            episode_end: ep.done,
            avoided: ep.done && !ep.collided_ever,
            obstacle_active: ep.obstacle.active,
            obstacle_speed: ep.obstacle.speed(),
            reaction_time: ep.params.reaction_time,
            max_joint_power: step_mjp,
            curriculum_stage: stage.number(),
        };
        let obs = self.observation();
        Ok(Transition { obs, reward, done: self.episode.done, truncated: timeout, info })
    }
}

impl Env for QuadrupedEnv {
    fn obs_dim(&self) -> usize {
        obs_dim(self.config.policy_kind)
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn reset(&mut self) -> Vec<f32> {
        let params = sample_randomization(&self.config, &mut self.rng);
        self.reset_with(params)
    }

    fn step(&mut self, action: &[f32]) -> Result<Transition> {
        if action.len() != ACTION_DIM {
            return Err(Error::DimensionMismatch(format!("expected {ACTION_DIM} actions, got {}", action.len())));
        }
        let raw: Vec<f64> = action.iter().map(|a| f64::from(*a)).collect();
        self.step_action(Action::from_policy_output(&raw, &self.dynamics))
    }

    fn set_action_variance(&mut self, variance: f64) {
        self.action_variance = variance;
    }

    fn set_curriculum_stage(&mut self, stage: CurriculumStage) {
        self.config.curriculum_stage = stage;
    }
}

/// Previous joint targets relative to the default stance.
fn prev_action_offset(action: &Action, cfg: &DynamicsConfig) -> [f64; NUM_JOINTS] {
    let mut out = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        out[i] = action.joint_targets[i] - cfg.default_joint_positions[i];
    }
    out
}

fn foot_world_xy(robot: &RobotState, leg: usize, cfg: &DynamicsConfig) -> nalgebra::Vector2<f64> {
    let p = crate::sim::kinematics::foot_position(leg, &robot.joint_positions[3 * leg..3 * leg + 3], cfg);
    (robot.base_position + robot.rotation() * p).xy()
}

/// Hold the stance from the nominal standing pose until it comes to rest,
/// then shift the result back over the origin.
fn settle(cfg: &DynamicsConfig) -> (RobotState, ContactState) {
    let mut robot = RobotState::standing(cfg);
    let mut contacts = ContactState::default();
    for leg in 0..NUM_FEET {
        contacts.anchors[leg] = foot_world_xy(&robot, leg, cfg);
    }
    let action = Action::stance(cfg);
    let steps = (SETTLE_TIME / cfg.dt).round() as usize;
    for _ in 0..steps {
        match robot_step(&robot, &contacts, &action, cfg.dt, cfg) {
            Ok((r, c)) => (robot, contacts) = (r, c),
            // an unstable configuration starts from the unsettled pose
            Err(_) => return settle_fallback(cfg),
        }
    }
    let shift = robot.base_position.xy();
    robot.base_position.x -= shift.x;
    robot.base_position.y -= shift.y;
    for a in contacts.anchors.iter_mut() {
        *a -= shift;
    }
    robot.tick = 0;
    contacts.touchdown = [false; NUM_FEET];
    contacts.touchdown_air_time = [0.0; NUM_FEET];
    (robot, contacts)
}

fn settle_fallback(cfg: &DynamicsConfig) -> (RobotState, ContactState) {
    let robot = RobotState::standing(cfg);
    let mut contacts = ContactState::default();
    for leg in 0..NUM_FEET {
        contacts.anchors[leg] = foot_world_xy(&robot, leg, cfg);
    }
    (robot, contacts)
}

fn placeholder_episode(config: &EnvConfig, dynamics: &DynamicsConfig) -> EpisodeState {
    let robot = RobotState::standing(dynamics);
    EpisodeState {
        stage: config.curriculum_stage,
        time: 0.0,
        tick: 0,
        horizon: 1,
        params: EpisodeParams {
            friction: dynamics.friction,
            added_mass: 0.0,
            obstacle_offset: Vector3::zeros(),
            obstacle_radius: config.ranges.obstacle_radius[0],
            obstacle_speed: 0.0,
            reaction_time: 0.0,
            episode_length: 0.0,
            command: Default::default(),
            plane: super::scenario::Plane::Xy,
            angle: 0.0,
        },
        start_position: robot.base_position,
        reference: RecoveryReference { default_orientation: Vector3::zeros(), default_position: robot.base_position },
        robot,
        obstacle: ObstacleState::dormant(),
        contacts: ContactState::default(),
        fsm: FsmState::default(),
        prev_action: Action::stance(dynamics),
        collided_ever: false,
        done: true,
        max_joint_power: 0.0,
        log: VecDeque::new(),
    }
}
