//! Evaluation episodes under the full state machine, the five metrics,
//! region classification and direction × reaction-time sweeps.

use std::io::Write;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::env::config::Range;
use crate::env::scenario::uniform;
use crate::env::{sample_randomization, CurriculumStage, EpisodeParams, Plane, QuadrupedEnv, ACTION_DIM};
use crate::fsm::{threat_cleared, unstable, Stage};
use crate::rl::{sample_action, PolicyKind, PolicyParams};
use crate::sim::Action;
use crate::{seeded_rng, Error, Result};

/// Region boundaries of the reaction-time / joint-power map.
pub const REGION_ASR_THRESHOLD: f64 = 0.30;
pub const REGION_MJP_THRESHOLD: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Episodes of the `eval` command.
    pub episodes: usize,
    pub t_react: Range,
    /// Stance time before the obstacle is launched (s).
    pub lead_time: f64,
    /// Time left after the nominal arrival for recovery (s).
    pub post_time: f64,
    /// Sample actions instead of using the policy mean.
    pub stochastic: bool,
    /// Hand the recovery stage to the recovery policy; the PD stance otherwise.
    pub recovery_policy: bool,
    pub angles: usize,
    pub t_react_steps: usize,
    pub episodes_per_cell: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            t_react: [0.1, 4.0],
            lead_time: 0.5,
            post_time: 2.0,
            stochastic: false,
            recovery_policy: true,
            angles: 7,
            t_react_steps: 8,
            episodes_per_cell: 10,
        }
    }
}

/// Source of joint targets for one FSM stage.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    Policy(&'a PolicyParams),
    /// Standard-normal raw outputs, as an untrained policy with unit σ.
    Random,
    /// PD stance hold.
    Stance,
}

impl Controller<'_> {
    fn variance(&self) -> f64 {
        match self {
            Controller::Policy(p) => p.action_variance(),
            Controller::Random => 1.0,
            Controller::Stance => 0.0,
        }
    }
}

/// Controllers of the avoidance and recovery stages.
#[derive(Debug, Clone, Copy)]
pub struct Controllers<'a> {
    pub avoidance: Controller<'a>,
    pub recovery: Controller<'a>,
}

impl<'a> Controllers<'a> {
    pub fn new(avoidance: &'a PolicyParams, recovery: Option<&'a PolicyParams>) -> Self {
        Self {
            avoidance: Controller::Policy(avoidance),
            recovery: recovery.map_or(Controller::Stance, Controller::Policy),
        }
    }

    fn check(&self) -> Result<()> {
        for (c, kind) in [(self.avoidance, PolicyKind::Avoidance), (self.recovery, PolicyKind::Recovery)] {
            if let Controller::Policy(p) = c {
                let want = crate::env::observation::obs_dim(kind);
                if p.obs_dim() != want || p.action_dim() != ACTION_DIM {
                    return Err(Error::DimensionMismatch(format!(
                        "{} policy maps {} -> {}, the env needs {want} -> {ACTION_DIM}",
                        kind.as_str(),
                        p.obs_dim(),
                        p.action_dim()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub avoided: bool,
    pub recovered: bool,
    pub collided: bool,
    pub fell: bool,
    /// Largest joint power over the episode (W).
    pub max_joint_power: f64,
    /// Base displacement in the ground plane (m).
    pub avoidance_distance: f64,
    pub mean_action_variance: f64,
    pub reaction_time: f64,
    pub plane: Plane,
    pub angle: f64,
    pub obstacle_speed: f64,
    pub obstacle_radius: f64,
    /// Diagnostic of an episode that could not be simulated to the end.
    pub failure: Option<String>,
}

/// Scenario of an evaluation episode with the obstacle launched from
/// `(plane, angle)` after `cfg.lead_time`.
pub fn eval_params<R: Rng + ?Sized>(config: &Config, plane: Plane, angle: f64, reaction_time: f64, rng: &mut R) -> EpisodeParams {
    let mut p = sample_randomization(&config.env, rng);
    p.plane = plane;
    p.angle = angle;
    p.reaction_time = reaction_time;
    p.episode_length = config.eval.lead_time + reaction_time + config.eval.post_time;
    p
}

/// Environment running scenarios for evaluation.
pub fn eval_env(config: &Config, seed: u64) -> QuadrupedEnv {
    let mut env_cfg = config.env.clone();
    env_cfg.policy_kind = PolicyKind::Avoidance;
    env_cfg.curriculum_stage = CurriculumStage::Dynamic;
    env_cfg.post_contact_time = config.eval.post_time;
    QuadrupedEnv::new(
        env_cfg,
        config.dynamics.clone(),
        config.rewards.avoidance.clone(),
        config.fsm.clone(),
        seeded_rng(seed, 0),
    )
}

fn act<R: Rng + ?Sized>(
    controller: Controller,
    env: &mut QuadrupedEnv,
    kind: PolicyKind,
    stochastic: bool,
    rng: &mut R,
) -> Result<Action> {
    let raw: Vec<f32> = match controller {
        Controller::Stance => return Ok(Action::stance(&env.dynamics)),
        Controller::Random => (0..ACTION_DIM).map(|_| rng.sample::<f32, _>(StandardNormal)).collect(),
        Controller::Policy(p) => {
            let obs = env.observation_for(kind);
            let (mean, log_std) = p.actor_forward(&obs)?;
            if stochastic {
                sample_action(&mean, &log_std, rng).0
            } else {
                mean
            }
        }
    };
    let raw: Vec<f64> = raw.iter().map(|v| f64::from(*v)).collect();
    Ok(Action::from_policy_output(&raw, &env.dynamics))
}

/// One episode under the state machine: stance in Normal, the avoidance
/// controller in Avoidance and the recovery controller in Recovery.
///
/// Avoided means no collision and no fall. Recovered means avoided and, once
/// the threat had cleared, stability was held for the FSM hold time.
pub fn run_episode<R: Rng + ?Sized>(
    controllers: &Controllers,
    env: &mut QuadrupedEnv,
    params: EpisodeParams,
    stochastic: bool,
    rng: &mut R,
) -> Result<EpisodeMetrics> {
    controllers.check()?;
    let (plane, angle, reaction_time) = (params.plane, params.angle, params.reaction_time);
    let (obstacle_speed, obstacle_radius) = (params.obstacle_speed, params.obstacle_radius);
    env.reset_with(params);
    let start: Vector2<f64> = env.episode.robot.base_position.xy();
    let hold = env.thresholds.recovery_hold_time;
    let mut mjp: f64 = 0.0;
    let mut stable_since: Option<f64> = None;
    let mut recovered = false;
    let mut failure = None;
    let mut fell = false;

    loop {
        let action = match env.episode.fsm.stage {
            Stage::Normal => Action::stance(&env.dynamics),
            Stage::Avoidance => act(controllers.avoidance, env, PolicyKind::Avoidance, stochastic, rng)?,
            Stage::Recovery => act(controllers.recovery, env, PolicyKind::Recovery, stochastic, rng)?,
        };
        let t = env.step_action(action)?;
        mjp = mjp.max(t.info.max_joint_power);
        let ep = &env.episode;
        if ep.obstacle.active && threat_cleared(&ep.obstacle, &ep.robot, &env.thresholds) {
            if unstable(&ep.robot, &env.thresholds) {
                stable_since = None;
            } else {
                let since = *stable_since.get_or_insert(ep.time);
                recovered |= ep.time - since + 1e-9 >= hold;
            }
        }
        if t.info.diverged {
            failure = Some(format!("simulation diverged at t = {:.3} s", ep.time));
        }
        fell |= t.info.fell;
        if t.done {
            break;
        }
    }
    let ep = &env.episode;
    let avoided = !ep.collided_ever && !fell && failure.is_none();
    Ok(EpisodeMetrics {
        avoided,
        recovered: avoided && recovered,
        collided: ep.collided_ever,
        fell,
        max_joint_power: mjp,
        avoidance_distance: (ep.robot.base_position.xy() - start).norm(),
        mean_action_variance: controllers.avoidance.variance(),
        reaction_time,
        plane,
        angle,
        obstacle_speed,
        obstacle_radius,
        failure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub episodes: usize,
    pub avoided: usize,
    pub recovered: usize,
    pub failures: usize,
    pub asr: f64,
    /// Recovered over avoided; 0 when nothing was avoided.
    pub rsr: f64,
    /// Mean over episodes of the episode maximum joint power (W).
    pub mjp: f64,
    pub amd: f64,
    /// Mean action variance of the avoidance controller.
    pub gdi: f64,
}

pub fn aggregate(episodes: &[EpisodeMetrics]) -> Result<AggregateMetrics> {
    if episodes.is_empty() {
        return Err(Error::InvalidInput("cannot aggregate zero episodes".into()));
    }
    let n = episodes.len();
    let avoided = episodes.iter().filter(|e| e.avoided).count();
    let recovered = episodes.iter().filter(|e| e.recovered).count();
    let mean = |f: fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).sum::<f64>() / n as f64;
    Ok(AggregateMetrics {
        episodes: n,
        avoided,
        recovered,
        failures: episodes.iter().filter(|e| e.failure.is_some()).count(),
        asr: avoided as f64 / n as f64,
        rsr: if avoided == 0 { 0.0 } else { recovered as f64 / avoided as f64 },
        mjp: mean(|e| e.max_joint_power),
        amd: mean(|e| e.avoidance_distance),
        gdi: mean(|e| e.mean_action_variance),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    I,
    II,
    III,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::I => "I",
            Region::II => "II",
            Region::III => "III",
        }
    }
}

pub fn classify_region(asr: f64, mean_mjp: f64) -> Region {
    if asr <= REGION_ASR_THRESHOLD {
        Region::I
    } else if mean_mjp < REGION_MJP_THRESHOLD {
        Region::III
    } else {
        Region::II
    }
}

fn episode_or_failure<R: Rng + ?Sized>(
    controllers: &Controllers,
    config: &Config,
    params: EpisodeParams,
    seed: u64,
    rng: &mut R,
) -> EpisodeMetrics {
    let fallback = EpisodeMetrics {
        avoided: false,
        recovered: false,
        collided: false,
        fell: false,
        max_joint_power: 0.0,
        avoidance_distance: 0.0,
        mean_action_variance: controllers.avoidance.variance(),
        reaction_time: params.reaction_time,
        plane: params.plane,
        angle: params.angle,
        obstacle_speed: params.obstacle_speed,
        obstacle_radius: params.obstacle_radius,
        failure: None,
    };
    let mut env = eval_env(config, seed);
    run_episode(controllers, &mut env, params, config.eval.stochastic, rng)
        .unwrap_or_else(|e| EpisodeMetrics { failure: Some(e.to_string()), ..fallback })
}

/// `episodes` episodes from uniformly random planes, angles and reaction
/// times in `t_react`. Episode `i` only depends on `(seed, i)`.
pub fn evaluate(
    controllers: &Controllers,
    config: &Config,
    t_react: Range,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeMetrics>> {
    controllers.check()?;
    Ok((0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(seed, 2 * i + 1);
            let plane = Plane::ALL[rng.random_range(0..3)];
            let angle = uniform([0.0, std::f64::consts::PI], &mut rng);
            let t = uniform(t_react, &mut rng);
            let params = eval_params(config, plane, angle, t, &mut rng);
            episode_or_failure(controllers, config, params, seed.wrapping_add(i), &mut rng)
        })
        .collect())
}

/// Collision-free share of `episodes` point-mass episodes under the policy
/// mean. Episode `i` only depends on `(seed, i)`.
pub fn point_mass_asr(policy: &PolicyParams, config: &Config, episodes: usize, seed: u64) -> Result<f64> {
    use crate::env::{pointmass, Env, PointMassEnv};
    if policy.obs_dim() != pointmass::OBS_DIM || policy.action_dim() != pointmass::ACTION_DIM {
        return Err(Error::DimensionMismatch("not a point-mass policy".into()));
    }
    if episodes == 0 {
        return Err(Error::InvalidInput("need at least one episode".into()));
    }
    let results: Result<Vec<bool>> = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let mut env = PointMassEnv::new(config.point_mass.clone(), config.rewards.avoidance.clone(), seeded_rng(seed, i));
            let mut obs = env.observation();
            loop {
                let (mean, _) = policy.actor_forward(&obs)?;
                let t = env.step(&mean)?;
                if t.done {
                    return Ok(t.info.avoided);
                }
                obs = t.obs;
            }
        })
        .collect();
    let avoided = results?.into_iter().filter(|a| *a).count();
    Ok(avoided as f64 / episodes as f64)
}

/// `n` points evenly spaced over the closed interval; the midpoint when `n == 1`.
pub fn grid(range: Range, n: usize) -> Vec<f64> {
    let [lo, hi] = range;
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub plane: Plane,
    pub angle: f64,
    pub t_react: f64,
    pub metrics: AggregateMetrics,
    pub region: Region,
}

/// Aggregate metrics over every `(angle, t_react)` cell of one plane.
/// Episode failures are counted per cell and never abort the sweep.
pub fn sweep(
    controllers: &Controllers,
    config: &Config,
    plane: Plane,
    angles: &[f64],
    t_reacts: &[f64],
    episodes_per_cell: usize,
    seed: u64,
) -> Result<Vec<SweepCell>> {
    controllers.check()?;
    if angles.is_empty() || t_reacts.is_empty() || episodes_per_cell == 0 {
        return Err(Error::InvalidInput("sweep needs non-empty grids and at least one episode per cell".into()));
    }
    let cells: Vec<(f64, f64)> = angles.iter().flat_map(|&a| t_reacts.iter().map(move |&t| (a, t))).collect();
    let m = episodes_per_cell as u64;
    let episodes: Vec<EpisodeMetrics> = (0..cells.len() as u64 * m)
        .into_par_iter()
        .map(|k| {
            let (angle, t) = cells[(k / m) as usize];
            let mut rng = seeded_rng(seed, 2 * k + 1);
            let params = eval_params(config, plane, angle, t, &mut rng);
            episode_or_failure(controllers, config, params, seed.wrapping_add(k), &mut rng)
        })
        .collect();
    cells
        .iter()
        .zip(episodes.chunks(episodes_per_cell))
        .map(|(&(angle, t_react), eps)| {
            let metrics = aggregate(eps)?;
            Ok(SweepCell { plane, angle, t_react, metrics, region: classify_region(metrics.asr, metrics.mjp) })
        })
        .collect()
}

fn min_max_normalizer(values: impl Iterator<Item = f64> + Clone) -> impl Fn(f64) -> f64 {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    move |v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }
}

pub const SWEEP_HEADER: [&str; 14] = [
    "plane", "angle_rad", "t_react_s", "episodes", "asr", "rsr", "mjp_w", "mjp_norm", "amd_m", "amd_norm", "gdi", "region",
    "failures", "ablations",
];

/// Grid CSV with MJP and AMD also min-max normalized over the grid.
pub fn write_sweep_csv<W: Write>(out: W, cells: &[SweepCell], ablations: &str) -> Result<()> {
    let mjp_norm = min_max_normalizer(cells.iter().map(|c| c.metrics.mjp));
    let amd_norm = min_max_normalizer(cells.iter().map(|c| c.metrics.amd));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for c in cells {
        let m = &c.metrics;
        w.write_record([
            c.plane.as_str().to_string(),
            c.angle.to_string(),
            c.t_react.to_string(),
            m.episodes.to_string(),
            m.asr.to_string(),
            m.rsr.to_string(),
            m.mjp.to_string(),
            mjp_norm(m.mjp).to_string(),
            m.amd.to_string(),
            amd_norm(m.amd).to_string(),
            m.gdi.to_string(),
            c.region.as_str().to_string(),
            m.failures.to_string(),
            ablations.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub const EPISODE_HEADER: [&str; 15] = [
    "episode", "plane", "angle_rad", "t_react_s", "obstacle_speed", "obstacle_radius", "avoided", "recovered", "collided", "fell", "mjp_w",
    "amd_m", "action_variance", "failure", "ablations",
];

pub fn write_episode_csv<W: Write>(out: W, episodes: &[EpisodeMetrics], ablations: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EPISODE_HEADER).map_err(csv_err)?;
    for (i, e) in episodes.iter().enumerate() {
        w.write_record([
            i.to_string(),
            e.plane.as_str().to_string(),
            e.angle.to_string(),
            e.reaction_time.to_string(),
            e.obstacle_speed.to_string(),
            e.obstacle_radius.to_string(),
            u8::from(e.avoided).to_string(),
            u8::from(e.recovered).to_string(),
            u8::from(e.collided).to_string(),
            u8::from(e.fell).to_string(),
            e.max_joint_power.to_string(),
            e.avoidance_distance.to_string(),
            e.mean_action_variance.to_string(),
            e.failure.clone().unwrap_or_default(),
            ablations.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::PpoHyper;

    fn metrics(avoided: bool, recovered: bool, mjp: f64) -> EpisodeMetrics {
        EpisodeMetrics {
            avoided,
            recovered,
            collided: !avoided,
            fell: false,
            max_joint_power: mjp,
            avoidance_distance: 0.1,
            mean_action_variance: 0.5,
            reaction_time: 1.0,
            plane: Plane::Xy,
            angle: 0.0,
            obstacle_speed: 2.0,
            obstacle_radius: 0.1,
            failure: None,
        }
    }

    fn zero_policy(kind: PolicyKind) -> PolicyParams {
        let mut rng = seeded_rng(0, 0);
        let dim = crate::env::observation::obs_dim(kind);
        let mut p = PolicyParams::new(kind, dim, ACTION_DIM, &[16], &PpoHyper::default(), &mut rng);
        p.actor.params.iter_mut().for_each(|v| *v = 0.0);
        p
    }

    #[test]
    fn aggregate_ratios() {
        let eps: Vec<_> = (0..20).map(|i| metrics(i < 13, i < 6, 100.0 + i as f64)).collect();
        let a = aggregate(&eps).unwrap();
        assert_eq!(a.asr, 0.65);
        assert!((a.rsr - 6.0 / 13.0).abs() < 1e-15);
        assert!((a.mjp - 109.5).abs() < 1e-12);
        assert_eq!(a.gdi, 0.5);
    }

    #[test]
    fn aggregate_degenerate_cases() {
        let a = aggregate(&[metrics(false, false, 1.0)]).unwrap();
        assert_eq!((a.asr, a.rsr), (0.0, 0.0));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn region_boundaries() {
        assert_eq!(classify_region(0.2, 100.0), Region::I);
        assert_eq!(classify_region(0.3, 100.0), Region::I);
        assert_eq!(classify_region(0.5, 350.0), Region::II);
        assert_eq!(classify_region(0.5, 200.0), Region::III);
        assert_eq!(classify_region(0.5, 300.0), Region::II);
    }

    #[test]
    fn grid_points() {
        assert_eq!(grid([0.0, 1.0], 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(grid([1.0, 3.0], 1), vec![2.0]);
        assert!(grid([0.0, 1.0], 0).is_empty());
    }

    #[test]
    fn no_threat_episode_holds_stance() {
        let config = Config::default();
        let avoid = zero_policy(PolicyKind::Avoidance);
        let controllers = Controllers::new(&avoid, None);
        let mut env = eval_env(&config, 3);
        let mut rng = seeded_rng(3, 1);
        let mut p = eval_params(&config, Plane::Xz, 1.0, 4.0, &mut rng);
        // launched after the episode has ended
        p.episode_length = 1.0;
        let m = run_episode(&controllers, &mut env, p, false, &mut rng).unwrap();
        assert!(m.avoided);
        assert!(!m.recovered);
        assert!(m.avoidance_distance < 0.05, "{}", m.avoidance_distance);
    }

    #[test]
    fn guaranteed_hit_is_not_avoided() {
        let config = Config::default();
        let avoid = zero_policy(PolicyKind::Avoidance);
        let controllers = Controllers::new(&avoid, None);
        let mut env = eval_env(&config, 4);
        let mut rng = seeded_rng(4, 1);
        let mut p = eval_params(&config, Plane::Xy, 0.0, 0.05, &mut rng);
        p.obstacle_radius = 0.3;
        p.obstacle_speed = 3.0;
        p.obstacle_offset = nalgebra::Vector3::zeros();
        let m = run_episode(&controllers, &mut env, p, false, &mut rng).unwrap();
        assert!(!m.avoided && !m.recovered);
    }

    #[test]
    fn policy_dims_are_checked() {
        let config = Config::default();
        let wrong = zero_policy(PolicyKind::Recovery);
        let controllers = Controllers::new(&wrong, None);
        assert!(matches!(evaluate(&controllers, &config, [1.0, 2.0], 2, 0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sweep_is_deterministic_and_composes() {
        let mut config = Config::default();
        config.eval.post_time = 0.5;
        let avoid = zero_policy(PolicyKind::Avoidance);
        let controllers = Controllers { avoidance: Controller::Policy(&avoid), recovery: Controller::Stance };
        let run = || sweep(&controllers, &config, Plane::Xy, &[0.5], &[0.3, 1.0], 3, 9).unwrap();
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|c| c.metrics.episodes == 3));
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &a, "none").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("plane,angle_rad,t_react_s,episodes,asr,rsr,mjp_w,mjp_norm,amd_m,amd_norm,gdi,region"));
        assert_eq!(text.lines().count(), 3);
    }
}
