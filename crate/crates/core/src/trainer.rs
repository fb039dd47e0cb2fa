//! Training orchestration: rollouts, the two-stage obstacle curriculum,
//! ablation switches, checkpoints and the per-iteration CSV.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::Config;
use crate::env::{CurriculumStage, Env, PointMassEnv, QuadrupedEnv, VecEnv};
use crate::eval::csv_err;
use crate::rewards::RewardTerms;
use crate::rl::{sample_action, PolicyKind, PolicyParams, Ppo, RolloutBuffer, UpdateStats};
use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Share of the iterations spent in the static-obstacle stage.
    pub stage1_fraction: f64,
    /// Iterations between periodic checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    /// Completed training episodes behind `asr_rolling`.
    pub asr_window: usize,
    /// Factor applied to rewards before they enter the rollout buffer.
    pub reward_scale: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self { stage1_fraction: 0.4, checkpoint_every: 100, asr_window: 200, reward_scale: 0.02 }
    }
}

impl CurriculumConfig {
    /// Last iteration of stage 1 out of `total`.
    pub fn stage1_iterations(&self, total: u64) -> u64 {
        (self.stage1_fraction * total as f64).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ablation {
    /// The FSM holds the PD stance where the recovery policy would act.
    NoRecovery,
    /// Training starts directly with moving obstacles.
    NoCurriculum,
    /// Diversity, threat and direction rewards are switched off.
    NoAdaptive,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::NoRecovery, Ablation::NoCurriculum, Ablation::NoAdaptive];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::NoRecovery => "no-recovery",
            Ablation::NoCurriculum => "no-curriculum",
            Ablation::NoAdaptive => "no-adaptive",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown ablation `{s}`, expected no-recovery, no-curriculum or no-adaptive")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Ablations {
    pub no_recovery: bool,
    pub no_curriculum: bool,
    pub no_adaptive: bool,
}

impl Ablations {
    pub fn from_list(list: &[Ablation]) -> Self {
        Self {
            no_recovery: list.contains(&Ablation::NoRecovery),
            no_curriculum: list.contains(&Ablation::NoCurriculum),
            no_adaptive: list.contains(&Ablation::NoAdaptive),
        }
    }

    /// `none`, or the active flags joined by `+`.
    pub fn label(&self) -> String {
        let on: Vec<&str> = [(self.no_recovery, "no-recovery"), (self.no_curriculum, "no-curriculum"), (self.no_adaptive, "no-adaptive")]
            .into_iter()
            .filter_map(|(f, s)| f.then_some(s))
            .collect();
        if on.is_empty() {
            "none".into()
        } else {
            on.join("+")
        }
    }

    /// The configuration with every active switch applied.
    pub fn apply(&self, config: &Config) -> Config {
        let mut c = config.clone();
        if self.no_recovery {
            c.eval.recovery_policy = false;
        }
        if self.no_curriculum {
            c.curriculum.stage1_fraction = 0.0;
        }
        if self.no_adaptive {
            c.rewards.avoidance = c.rewards.avoidance.without_adaptive();
            c.ppo.diversity_coef = 0.0;
        }
        c
    }
}

/// One row of the training CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    pub curriculum_stage: u8,
    /// Episodes that ended during this iteration's rollout.
    pub episodes: usize,
    /// Mean undiscounted return of the last `asr_window` episodes.
    pub mean_return: f64,
    /// Mean weighted contribution of each reward term per step.
    pub terms: RewardTerms,
    pub update: UpdateStats,
    pub action_variance: f64,
    /// Mean obstacle speed of the episodes that ended this iteration with an
    /// active obstacle; 0 when there were none.
    pub obstacle_speed: f64,
    /// Collision-free share of the last `asr_window` episodes.
    pub asr_rolling: f64,
}

pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["iteration", "curriculum_stage", "ablations", "episodes", "mean_return"].map(String::from).to_vec();
    h.extend(RewardTerms::NAMES.iter().map(|n| format!("r_{n}")));
    h.extend(
        [
            "policy_loss",
            "value_loss",
            "entropy",
            "approx_kl",
            "clip_fraction",
            "grad_norm",
            "lr",
            "action_variance",
            "obstacle_speed",
            "asr_rolling",
        ]
        .map(String::from),
    );
    h
}

impl IterationRecord {
    pub fn csv_row(&self, ablations: &str) -> Vec<String> {
        let mut r = vec![
            self.iteration.to_string(),
            self.curriculum_stage.to_string(),
            ablations.to_string(),
            self.episodes.to_string(),
            self.mean_return.to_string(),
        ];
        r.extend(self.terms.values().iter().map(|v| v.to_string()));
        let u = &self.update;
        r.extend(
            [
                u.policy_loss,
                u.value_loss,
                u.entropy,
                u.approx_kl,
                u.clip_fraction,
                u.grad_norm,
                u.lr,
                self.action_variance,
                self.obstacle_speed,
                self.asr_rolling,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        r
    }
}

/// PPO learner bound to a vector of environments.
pub struct Trainer<E: Env> {
    pub params: PolicyParams,
    pub envs: VecEnv<E>,
    ppo: Ppo,
    buffer: RolloutBuffer,
    rng: ChaCha8Rng,
    reward_scale: f64,
    weights: RewardTerms,
    window: usize,
    running_return: Vec<f64>,
    recent_returns: VecDeque<f64>,
    recent_avoided: VecDeque<bool>,
}

impl<E: Env> Trainer<E> {
    pub fn new(params: PolicyParams, envs: VecEnv<E>, config: &Config, weights: RewardTerms, rng: ChaCha8Rng) -> Result<Self> {
        if params.obs_dim() != envs.obs_dim() || params.action_dim() != envs.action_dim() {
            return Err(Error::DimensionMismatch(format!(
                "policy maps {} -> {}, env needs {} -> {}",
                params.obs_dim(),
                params.action_dim(),
                envs.obs_dim(),
                envs.action_dim()
            )));
        }
        let h = &config.ppo;
        let buffer = RolloutBuffer::new(envs.len(), h.steps_per_env, envs.obs_dim(), envs.action_dim());
        Ok(Self {
            ppo: Ppo::new(h.clone(), &params),
            running_return: vec![0.0; envs.len()],
            params,
            envs,
            buffer,
            rng,
            reward_scale: config.curriculum.reward_scale,
            weights,
            window: config.curriculum.asr_window.max(1),
            recent_returns: VecDeque::new(),
            recent_avoided: VecDeque::new(),
        })
    }

    fn normalized(&self, raw: &[f32], rows: usize) -> Vec<f32> {
        let od = self.params.obs_dim();
        let mut out = vec![0.0; rows * od];
        for r in 0..rows {
            self.params.obs_norm.normalize_into(&raw[r * od..(r + 1) * od], &mut out[r * od..(r + 1) * od]);
        }
        out
    }

    /// Collect one rollout, then run the PPO update. On failure the policy is
    /// left as it was before the update.
    pub fn iterate(&mut self, iteration: u64, curriculum_stage: u8) -> Result<IterationRecord> {
        let n = self.envs.len();
        let (od, ad) = (self.params.obs_dim(), self.params.action_dim());
        let gamma = self.ppo.hyper.gamma;
        let steps = self.buffer.steps;
        let variance = self.params.action_variance();
        let cap = self.ppo.hyper.diversity_cap;
        self.envs.set_action_variance(crate::rl::gaussian::capped_mean_variance(&self.params.log_std, cap));

        let mut raw_obs = Vec::with_capacity(steps * n * od);
        let mut term_sum = RewardTerms::default();
        let mut episodes = 0;
        let mut speed_sum = 0.0;
        let mut speed_n = 0usize;
        let mut actions = vec![0.0f32; n * ad];

        for t in 0..steps {
            raw_obs.extend_from_slice(&self.envs.obs);
            let obs = self.normalized(&self.envs.obs, n);
            let means = self.params.actor.forward(&obs, n)?;
            let values = self.params.critic.forward(&obs, n)?;
            let base = t * n;
            self.buffer.obs[base * od..(base + n) * od].copy_from_slice(&obs);
            for e in 0..n {
                let (a, lp) = sample_action(&means[e * ad..(e + 1) * ad], &self.params.log_std, &mut self.rng);
                actions[e * ad..(e + 1) * ad].copy_from_slice(&a);
                self.buffer.log_probs[base + e] = lp;
                self.buffer.values[base + e] = values[e];
            }
            self.buffer.actions[base * ad..(base + n) * ad].copy_from_slice(&actions);

            let transitions = self.envs.step(&actions)?;
            let truncated: Vec<usize> = (0..n).filter(|&e| transitions[e].truncated).collect();
            let mut final_values = vec![0.0f32; n];
            if !truncated.is_empty() {
                let finals: Vec<f32> = truncated.iter().flat_map(|&e| transitions[e].obs.iter().copied()).collect();
                let v = self.params.critic.forward(&self.normalized(&finals, truncated.len()), truncated.len())?;
                for (k, &e) in truncated.iter().enumerate() {
                    final_values[e] = v[k];
                }
            }
            for (e, tr) in transitions.iter().enumerate() {
                let mut r = tr.reward.total * self.reward_scale;
                if tr.truncated {
                    r += gamma * f64::from(final_values[e]);
                }
                self.buffer.rewards[base + e] = r;
                self.buffer.dones[base + e] = tr.done;
                term_sum.add_assign(&tr.reward.terms);
                self.running_return[e] += tr.reward.total;
                if tr.done {
                    episodes += 1;
                    push_window(&mut self.recent_returns, self.running_return[e], self.window);
                    push_window(&mut self.recent_avoided, tr.info.avoided, self.window);
                    self.running_return[e] = 0.0;
                    if tr.info.obstacle_active {
                        speed_sum += tr.info.obstacle_speed;
                        speed_n += 1;
                    }
                }
            }
        }
        let obs = self.normalized(&self.envs.obs, n);
        self.buffer.bootstrap = self.params.critic.forward(&obs, n)?;
        self.buffer.compute_advantages(gamma, self.ppo.hyper.gae_lambda)?;
        self.buffer.normalize_advantages();

        let before = self.params.clone();
        let update = match self.ppo.update(&mut self.params, &self.buffer, &mut self.rng, iteration) {
            Ok(u) if self.params.is_finite() => u,
            Ok(_) => {
                self.params = before;
                return Err(Error::TrainingDiverged { iteration, reason: "non-finite parameters".into() });
            }
            Err(e) => {
                self.params = before;
                return Err(e);
            }
        };
        self.params.obs_norm.update(&raw_obs, steps * n);

        let mut terms = term_sum.weighted(&self.weights);
        terms.scale(1.0 / (steps * n) as f64);
        Ok(IterationRecord {
            iteration,
            curriculum_stage,
            episodes,
            mean_return: mean(self.recent_returns.iter().copied()),
            terms,
            update,
            action_variance: variance,
            obstacle_speed: if speed_n == 0 { 0.0 } else { speed_sum / speed_n as f64 },
            asr_rolling: mean(self.recent_avoided.iter().map(|&a| f64::from(u8::from(a)))),
        })
    }
}

fn push_window<T>(q: &mut VecDeque<T>, v: T, cap: usize) {
    if q.len() == cap {
        q.pop_front();
    }
    q.push_back(v);
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub kind: PolicyKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
    pub ablations: Ablations,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub final_checkpoint: PathBuf,
    pub csv: PathBuf,
    pub last: Option<IterationRecord>,
}

pub fn csv_path(out_dir: &Path, kind: PolicyKind) -> PathBuf {
    out_dir.join(format!("train_{}.csv", kind.as_str()))
}

pub fn checkpoint_path(out_dir: &Path, kind: PolicyKind, tag: &str) -> PathBuf {
    out_dir.join(format!("{}_{tag}.rbot", kind.as_str()))
}

/// Environments of one training run; env `i` draws from its own stream.
fn quadruped_envs(config: &Config, kind: PolicyKind, seed: u64, stage: CurriculumStage) -> Result<VecEnv<QuadrupedEnv>> {
    let mut env_cfg = config.env.clone();
    env_cfg.policy_kind = kind;
    env_cfg.curriculum_stage = stage;
    let envs = (0..config.ppo.num_envs as u64)
        .map(|i| {
            QuadrupedEnv::new(
                env_cfg.clone(),
                config.dynamics.clone(),
                config.rewards.for_kind(kind).clone(),
                config.fsm.clone(),
                seeded_rng(seed, 1024 + i),
            )
        })
        .collect();
    VecEnv::new(envs)
}

fn point_mass_envs(config: &Config, seed: u64) -> Result<VecEnv<PointMassEnv>> {
    let envs = (0..config.ppo.num_envs as u64)
        .map(|i| PointMassEnv::new(config.point_mass.clone(), config.rewards.avoidance.clone(), seeded_rng(seed, 1024 + i)))
        .collect();
    VecEnv::new(envs)
}

/// Train one policy; `on_iteration` sees every CSV row as it is written.
///
/// Ablations are applied to `config` here. Resuming continues at the
/// iteration after the checkpoint's update count and appends to the CSV.
pub fn train(config: &Config, opts: &TrainOptions, on_iteration: impl FnMut(&IterationRecord)) -> Result<TrainOutcome> {
    let config = opts.ablations.apply(config);
    config.validate()?;
    let kind = opts.kind;
    let (obs_dim, action_dim) = match kind {
        PolicyKind::PointMass => (crate::env::pointmass::OBS_DIM, crate::env::pointmass::ACTION_DIM),
        k => (crate::env::observation::obs_dim(k), crate::env::ACTION_DIM),
    };
    let params = match &opts.resume {
        Some(path) => {
            let p = checkpoint::load(path)?;
            if p.kind != kind || p.obs_dim() != obs_dim || p.action_dim() != action_dim {
                return Err(Error::DimensionMismatch(format!(
                    "checkpoint holds a {} policy {} -> {}, training needs {} {obs_dim} -> {action_dim}",
                    p.kind.as_str(),
                    p.obs_dim(),
                    p.action_dim(),
                    kind.as_str()
                )));
            }
            p
        }
        None => PolicyParams::new(kind, obs_dim, action_dim, &config.ppo.hidden, &config.ppo, &mut seeded_rng(opts.seed, 0)),
    };
    let start = params.update_count;
    // a resumed run draws fresh streams keyed by where it resumes
    let run_seed = opts.seed.wrapping_add(start.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let total = config.ppo.max_iterations;
    let stage1 = if kind == PolicyKind::Avoidance { config.curriculum.stage1_iterations(total) } else { 0 };
    let stage_at = |it: u64| if it <= stage1 { CurriculumStage::Static } else { CurriculumStage::Dynamic };
    let rng = seeded_rng(run_seed, 1);
    std::fs::create_dir_all(&opts.out_dir)?;
    let label = opts.ablations.label();
    match kind {
        PolicyKind::PointMass => {
            let envs = point_mass_envs(&config, run_seed)?;
            let trainer = Trainer::new(params, envs, &config, config.rewards.avoidance.weights, rng)?;
            run_loop(trainer, &config, opts, &label, start, total, stage1, |_| CurriculumStage::Dynamic, on_iteration)
        }
        k => {
            let envs = quadruped_envs(&config, k, run_seed, stage_at(start + 1))?;
            let trainer = Trainer::new(params, envs, &config, config.rewards.for_kind(k).weights, rng)?;
            run_loop(trainer, &config, opts, &label, start, total, stage1, stage_at, on_iteration)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_loop<E: Env>(
    mut trainer: Trainer<E>,
    config: &Config,
    opts: &TrainOptions,
    label: &str,
    start: u64,
    total: u64,
    stage1: u64,
    stage_at: impl Fn(u64) -> CurriculumStage,
    mut on_iteration: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome> {
    let kind = opts.kind;
    let csv = csv_path(&opts.out_dir, kind);
    let append = opts.resume.is_some() && std::fs::metadata(&csv).map(|m| m.len() > 0).unwrap_or(false);
    let file = OpenOptions::new().create(true).write(true).append(append).truncate(!append).open(&csv)?;
    let mut writer = csv::Writer::from_writer(file);
    if !append {
        writer.write_record(csv_header()).map_err(csv_err)?;
        writer.flush()?;
    }
    let mut stage = stage_at(start + 1);
    let mut last = None;
    for it in start + 1..=total {
        let s = stage_at(it);
        if s != stage {
            trainer.envs.set_curriculum_stage(s);
            stage = s;
        }
        let record = match trainer.iterate(it, stage.number()) {
            Ok(r) => r,
            Err(e) => {
                checkpoint::save(&trainer.params, checkpoint_path(&opts.out_dir, kind, "last_good"))?;
                return Err(e);
            }
        };
        writer.write_record(record.csv_row(label)).map_err(csv_err)?;
        writer.flush()?;
        on_iteration(&record);
        let every = config.curriculum.checkpoint_every;
        if every > 0 && it % every == 0 {
            checkpoint::save(&trainer.params, checkpoint_path(&opts.out_dir, kind, &format!("iter{it:06}")))?;
        }
        if stage1 > 0 && it == stage1 {
            checkpoint::save(&trainer.params, checkpoint_path(&opts.out_dir, kind, "stage_switch"))?;
        }
        last = Some(record);
    }
    let final_checkpoint = checkpoint_path(&opts.out_dir, kind, "final");
    checkpoint::save(&trainer.params, &final_checkpoint)?;
    Ok(TrainOutcome { params: trainer.params, final_checkpoint, csv, last })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_flags() {
        let base = Config::default();
        assert_eq!(Ablations::default().apply(&base), base);
        assert_eq!(Ablations::default().label(), "none");
        let all = Ablations::from_list(&Ablation::ALL);
        assert_eq!(all.label(), "no-recovery+no-curriculum+no-adaptive");
        let c = all.apply(&base);
        let w = &c.rewards.avoidance.weights;
        assert_eq!((w.diversity, w.threat, w.direction), (0.0, 0.0, 0.0));
        assert_eq!(c.ppo.diversity_coef, 0.0);
        assert_eq!(c.curriculum.stage1_fraction, 0.0);
        assert!(!c.eval.recovery_policy);
        assert_eq!(c.rewards.recovery, base.rewards.recovery);
        assert_eq!("no-adaptive".parse::<Ablation>().unwrap(), Ablation::NoAdaptive);
        assert!("no-fun".parse::<Ablation>().is_err());
    }

    #[test]
    fn header_matches_row_width() {
        let r = IterationRecord {
            iteration: 1,
            curriculum_stage: 1,
            episodes: 0,
            mean_return: 0.0,
            terms: RewardTerms::default(),
            update: UpdateStats::default(),
            action_variance: 1.0,
            obstacle_speed: 0.0,
            asr_rolling: 0.0,
        };
        assert_eq!(r.csv_row("none").len(), csv_header().len());
    }

    #[test]
    fn stage_split() {
        let c = CurriculumConfig::default();
        assert_eq!(c.stage1_iterations(5000), 2000);
        assert_eq!(c.stage1_iterations(10), 4);
    }
}
