//! Running observation normalization.

use serde::{Deserialize, Serialize};

/// Running mean and variance merged batch by batch (Chan et al.).
///
/// Statistics are stored as `f32` so a checkpoint reproduces them exactly;
/// merges are computed in `f64` and rounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub count: f64,
    pub clip: f32,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4, clip: 5.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merge a `rows × dim` row-major batch.
    pub fn update(&mut self, batch: &[f32], rows: usize) {
        let dim = self.dim();
        if rows == 0 {
            return;
        }
        debug_assert_eq!(batch.len(), rows * dim);
        let n = rows as f64;
        let total = self.count + n;
        for j in 0..dim {
            let mut mean = 0.0;
            for r in 0..rows {
                mean += f64::from(batch[r * dim + j]);
            }
            mean /= n;
            let mut m2 = 0.0;
            for r in 0..rows {
                m2 += (f64::from(batch[r * dim + j]) - mean).powi(2);
            }
            let old_mean = f64::from(self.mean[j]);
            let delta = mean - old_mean;
            let merged_mean = old_mean + delta * n / total;
            let merged_m2 = f64::from(self.var[j]) * self.count + m2 + delta * delta * self.count * n / total;
            self.mean[j] = merged_mean as f32;
            self.var[j] = (merged_m2 / total).max(1e-8) as f32;
        }
        self.count = total;
    }

    /// `(x - mean) / sqrt(var + 1e-8)`, clipped to `±clip`.
    pub fn normalize_into(&self, obs: &[f32], out: &mut [f32]) {
        for (j, (o, x)) in out.iter_mut().zip(obs).enumerate() {
            let z = (x - self.mean[j]) / (self.var[j] + 1e-8).sqrt();
            *o = z.clamp(-self.clip, self.clip);
        }
    }

    pub fn normalize(&self, obs: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; obs.len()];
        self.normalize_into(obs, &mut out);
        out
    }
}
