use rayon::prelude::*;

use super::{CurriculumStage, Env, Transition};
use crate::{Error, Result};

/// A batch of independent environments stepped in parallel.
///
/// Every environment owns its random stream, so results do not depend on
/// how rayon schedules the work.
pub struct VecEnv<E> {
    pub envs: Vec<E>,
    /// Current observation of each environment, row-major.
    pub obs: Vec<f32>,
    obs_dim: usize,
    action_dim: usize,
}

impl<E: Env> VecEnv<E> {
    pub fn new(mut envs: Vec<E>) -> Result<Self> {
        let first = envs.first().ok_or_else(|| Error::InvalidInput("a vector env needs at least one env".into()))?;
        let (obs_dim, action_dim) = (first.obs_dim(), first.action_dim());
        let obs = envs.par_iter_mut().flat_map_iter(|e| e.reset()).collect();
        Ok(Self { envs, obs, obs_dim, action_dim })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Step every env with its row of `actions`. Finished envs are reset and
    /// their new first observation replaces the row in `self.obs`; the
    /// returned transition still carries the final observation.
    pub fn step(&mut self, actions: &[f32]) -> Result<Vec<Transition>> {
        if actions.len() != self.len() * self.action_dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} actions, got {}",
                self.len() * self.action_dim,
                actions.len()
            )));
        }
        let od = self.obs_dim;
        let results: Vec<Result<Transition>> = self
            .envs
            .par_iter_mut()
            .zip(actions.par_chunks(self.action_dim))
            .zip(self.obs.par_chunks_mut(od))
            .map(|((env, action), row)| {
                let t = env.step(action)?;
                if t.done {
                    row.copy_from_slice(&env.reset());
                } else {
                    row.copy_from_slice(&t.obs);
                }
                Ok(t)
            })
            .collect();
        results.into_iter().collect()
    }

    pub fn set_action_variance(&mut self, variance: f64) {
        self.envs.iter_mut().for_each(|e| e.set_action_variance(variance));
    }

    /// Switch stage; running episodes finish under their current scenario.
    pub fn set_curriculum_stage(&mut self, stage: CurriculumStage) {
        self.envs.iter_mut().for_each(|e| e.set_curriculum_stage(stage));
    }
}
