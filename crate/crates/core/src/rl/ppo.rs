//! Clipped-surrogate PPO loss, its analytic gradient and the update loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::buffer::RolloutBuffer;
use super::gaussian::{entropy, log_prob};
use super::mlp::{Mlp, Real};
use super::PolicyParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyper {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Weight of `mean(min(σ², diversity_cap))` subtracted from the loss, the
    /// pathwise side of the diversity reward.
    pub diversity_coef: f64,
    /// Per-dimension variance above which diversity earns nothing more.
    pub diversity_cap: f64,
    pub learning_rate: f64,
    pub adaptive_lr: bool,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub steps_per_env: usize,
    pub num_envs: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub max_grad_norm: f64,
    pub target_kl: f64,
    pub max_iterations: u64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            clip: 0.2,
            value_coef: 1.0,
            entropy_coef: 0.01,
            diversity_coef: 0.05,
            diversity_cap: 1.0,
            learning_rate: 1e-3,
            adaptive_lr: true,
            gamma: 0.99,
            gae_lambda: 0.95,
            steps_per_env: 24,
            num_envs: 256,
            epochs: 5,
            minibatches: 4,
            max_grad_norm: 1.0,
            target_kl: 0.01,
            max_iterations: 5000,
            hidden: vec![512, 256, 128],
            init_log_std: 0.0,
        }
    }
}

/// KL-band rule: shrink by 1.5 above `2·target`, grow by 1.5 below
/// `target / 2`, clamp to `[1e-5, 1e-2]`.
pub fn adapt_learning_rate(current_lr: f64, approx_kl: f64, target_kl: f64) -> f64 {
    let lr = if approx_kl > 2.0 * target_kl {
        current_lr / 1.5
    } else if approx_kl < 0.5 * target_kl {
        current_lr * 1.5
    } else {
        current_lr
    };
    lr.clamp(1e-5, 1e-2)
}

/// Coefficients of the scalar loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
    pub diversity: f64,
    pub diversity_cap: f64,
}

impl From<&PpoHyper> for LossCoefs {
    fn from(h: &PpoHyper) -> Self {
        Self {
            clip: h.clip,
            value: h.value_coef,
            entropy: h.entropy_coef,
            diversity: h.diversity_coef,
            diversity_cap: h.diversity_cap,
        }
    }
}

/// One minibatch, row-major.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a, T> {
    pub obs: &'a [T],
    pub actions: &'a [T],
    pub old_log_probs: &'a [T],
    pub advantages: &'a [T],
    pub returns: &'a [T],
    pub batch: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub actor: Vec<T>,
    pub critic: Vec<T>,
    pub log_std: Vec<T>,
}

impl<T: Real> Grads<T> {
    pub fn norm(&self) -> f64 {
        self.actor.iter().chain(&self.critic).chain(&self.log_std).map(|g| g.as_f64().powi(2)).sum::<f64>().sqrt()
    }

    /// Rescale so the global norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm {
            let k = T::cast_from(max_norm / (norm + 1e-12));
            for g in self.actor.iter_mut().chain(self.critic.iter_mut()).chain(self.log_std.iter_mut()) {
                *g = *g * k;
            }
        }
        norm
    }
}

/// Full loss over a minibatch, averaged over rows:
///
/// `-min(ρA, clip(ρ, 1-ε, 1+ε)A) + c₁(V - R)² - c₂H - c_d mean(σ²)`
///
/// with `ρ = exp(log π(a|s) - log π_old(a|s))`. Returns the loss parts and
/// the exact gradient with respect to every parameter.
pub fn ppo_loss_and_grad<T: Real>(
    actor: &Mlp<T>,
    critic: &Mlp<T>,
    log_std: &[T],
    mb: &Minibatch<'_, T>,
    coefs: &LossCoefs,
) -> Result<(LossOutput, Grads<T>)> {
    let b = mb.batch;
    let act_dim = actor.output_dim();
    if log_std.len() != act_dim || mb.actions.len() != b * act_dim {
        return Err(Error::DimensionMismatch(format!(
            "action width {act_dim}, log-std {}, actions {} for {b} rows",
            log_std.len(),
            mb.actions.len()
        )));
    }
    let actor_cache = actor.forward_cached(mb.obs, b)?;
    let critic_cache = critic.forward_cached(mb.obs, b)?;
    let means = actor_cache.acts.last().unwrap();
    let values = critic_cache.acts.last().unwrap();

    let inv_b = 1.0 / b as f64;
    let sigma: Vec<f64> = log_std.iter().map(|s| s.as_f64().exp()).collect();
    let mut d_mean = vec![T::zero(); b * act_dim];
    let mut d_value = vec![T::zero(); b];
    let mut d_log_std = vec![0.0f64; act_dim];
    let mut out = LossOutput::default();
    let mut clipped = 0usize;

    for r in 0..b {
        let a = &mb.actions[r * act_dim..(r + 1) * act_dim];
        let m = &means[r * act_dim..(r + 1) * act_dim];
        let new_lp = log_prob(a, m, log_std).as_f64();
        let old_lp = mb.old_log_probs[r].as_f64();
        let adv = mb.advantages[r].as_f64();
        let ratio = (new_lp - old_lp).exp();
        let clipped_ratio = ratio.clamp(1.0 - coefs.clip, 1.0 + coefs.clip);
        let surr1 = ratio * adv;
        let surr2 = clipped_ratio * adv;
        // d(-min(surr1, surr2)) / d(ratio)
        // The clipped branch only wins outside the band, where it is flat.
        let d_ratio = if surr1 <= surr2 {
            -adv
        } else {
            clipped += 1;
            0.0
        };
        out.policy_loss += -surr1.min(surr2) * inv_b;
        out.approx_kl += (old_lp - new_lp) * inv_b;
        let d_lp = d_ratio * ratio * inv_b;
        for j in 0..act_dim {
            let z = (a[j].as_f64() - m[j].as_f64()) / sigma[j];
            d_mean[r * act_dim + j] = T::cast_from(d_lp * z / sigma[j]);
            d_log_std[j] += d_lp * (z * z - 1.0);
        }

        let err = values[r].as_f64() - mb.returns[r].as_f64();
        out.value_loss += err * err * inv_b;
        d_value[r] = T::cast_from(2.0 * coefs.value * err * inv_b);
    }

    out.entropy = entropy(log_std).as_f64();
    let mut mean_var = 0.0;
    for (j, s) in sigma.iter().enumerate() {
        let var = s * s;
        mean_var += var.min(coefs.diversity_cap) / act_dim as f64;
        let d_var = if var < coefs.diversity_cap { 2.0 * var } else { 0.0 };
        d_log_std[j] += -coefs.entropy - coefs.diversity * d_var / act_dim as f64;
    }
    out.loss = out.policy_loss + coefs.value * out.value_loss - coefs.entropy * out.entropy - coefs.diversity * mean_var;
    out.clip_fraction = clipped as f64 * inv_b;

    let mut grads = Grads {
        actor: vec![T::zero(); actor.params.len()],
        critic: vec![T::zero(); critic.params.len()],
        log_std: d_log_std.into_iter().map(T::cast_from).collect(),
    };
    actor.backward(&actor_cache, &d_mean, &mut grads.actor);
    critic.backward(&critic_cache, &d_value, &mut grads.critic);
    Ok((out, grads))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub clip_fraction: f64,
}

/// Optimizer state for one policy.
#[derive(Debug, Clone)]
pub struct Ppo {
    pub hyper: PpoHyper,
    adam_actor: Adam<f32>,
    adam_critic: Adam<f32>,
    adam_log_std: Adam<f32>,
}

impl Ppo {
    pub fn new(hyper: PpoHyper, params: &PolicyParams) -> Self {
        Self {
            hyper,
            adam_actor: Adam::new(params.actor.params.len()),
            adam_critic: Adam::new(params.critic.params.len()),
            adam_log_std: Adam::new(params.log_std.len()),
        }
    }

    /// Run all epochs and minibatches over `buffer`, whose advantages must
    /// already be computed and normalized. `iteration` tags errors.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        params: &mut PolicyParams,
        buffer: &RolloutBuffer,
        rng: &mut R,
        iteration: u64,
    ) -> Result<UpdateStats> {
        let h = self.hyper.clone();
        let n = buffer.len();
        let mb_size = n / h.minibatches.max(1);
        if mb_size == 0 {
            return Err(Error::InvalidInput(format!("{n} samples cannot fill {} minibatches", h.minibatches)));
        }
        let (od, ad) = (buffer.obs_dim, buffer.action_dim);
        let coefs = LossCoefs::from(&h);
        let mut idx: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats::default();
        let mut count = 0.0;

        let mut obs = vec![0.0f32; mb_size * od];
        let mut actions = vec![0.0f32; mb_size * ad];
        let mut old_lp = vec![0.0f32; mb_size];
        let mut adv = vec![0.0f32; mb_size];
        let mut ret = vec![0.0f32; mb_size];

        for _ in 0..h.epochs {
            idx.shuffle(rng);
            for chunk in idx.chunks_exact(mb_size) {
                for (r, &i) in chunk.iter().enumerate() {
                    obs[r * od..(r + 1) * od].copy_from_slice(&buffer.obs[i * od..(i + 1) * od]);
                    actions[r * ad..(r + 1) * ad].copy_from_slice(&buffer.actions[i * ad..(i + 1) * ad]);
                    old_lp[r] = buffer.log_probs[i];
                    adv[r] = buffer.advantages[i] as f32;
                    ret[r] = buffer.returns[i] as f32;
                }
                let mb = Minibatch { obs: &obs, actions: &actions, old_log_probs: &old_lp, advantages: &adv, returns: &ret, batch: mb_size };
                let (out, mut grads) = ppo_loss_and_grad(&params.actor, &params.critic, &params.log_std, &mb, &coefs)?;
                if !out.loss.is_finite() {
                    return Err(Error::TrainingDiverged { iteration, reason: format!("loss is {}", out.loss) });
                }
                let grad_norm = grads.clip_norm(h.max_grad_norm);
                if !grad_norm.is_finite() {
                    return Err(Error::TrainingDiverged { iteration, reason: "non-finite gradient".into() });
                }
                if h.adaptive_lr {
                    params.learning_rate = adapt_learning_rate(params.learning_rate, out.approx_kl, h.target_kl);
                }
                let lr = params.learning_rate;
                self.adam_actor.step(&mut params.actor.params, &grads.actor, lr);
                self.adam_critic.step(&mut params.critic.params, &grads.critic, lr);
                self.adam_log_std.step(&mut params.log_std, &grads.log_std, lr);

                stats.policy_loss += out.policy_loss;
                stats.value_loss += out.value_loss;
                stats.entropy += out.entropy;
                stats.approx_kl += out.approx_kl;
                stats.clip_fraction += out.clip_fraction;
                stats.grad_norm += grad_norm;
                count += 1.0;
            }
        }
        stats.policy_loss /= count;
        stats.value_loss /= count;
        stats.entropy /= count;
        stats.approx_kl /= count;
        stats.clip_fraction /= count;
        stats.grad_norm /= count;
        stats.lr = params.learning_rate;
        params.update_count += 1;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_band() {
        assert!((adapt_learning_rate(1e-3, 0.03, 0.01) - 1e-3 / 1.5).abs() < 1e-15);
        assert_eq!(adapt_learning_rate(1e-3, 0.01, 0.01), 1e-3);
        assert!((adapt_learning_rate(1e-3, 0.001, 0.01) - 1.5e-3).abs() < 1e-15);
        let mut lr = 1e-3;
        for _ in 0..20 {
            lr = adapt_learning_rate(lr, 0.0, 0.01);
        }
        assert_eq!(lr, 1e-2);
        assert_eq!(adapt_learning_rate(1.1e-5, 1.0, 0.01), 1e-5);
    }

    fn toy_batch(ratio: f64) -> (Mlp<f64>, Mlp<f64>, Vec<f64>, [f64; 2], [f64; 1]) {
        let actor = Mlp::<f64>::zeros(&[1, 2]);
        let critic = Mlp::<f64>::zeros(&[1, 1]);
        let log_std = vec![0.0, 0.0];
        let actions = [0.0, 0.0];
        let new_lp = log_prob(&actions, &[0.0, 0.0], &log_std);
        (actor, critic, log_std, actions, [new_lp - ratio.ln()])
    }

    #[test]
    fn clipped_branch_is_selected_above_the_band() {
        let (actor, critic, log_std, actions, old) = toy_batch(1.5);
        let mb = Minibatch { obs: &[0.0], actions: &actions, old_log_probs: &old, advantages: &[2.0], returns: &[0.0], batch: 1 };
        let coefs = LossCoefs { clip: 0.2, value: 1.0, entropy: 0.0, diversity: 0.0, diversity_cap: 1.0 };
        let (out, g) = ppo_loss_and_grad(&actor, &critic, &log_std, &mb, &coefs).unwrap();
        assert!((out.policy_loss + 1.2 * 2.0).abs() < 1e-12);
        assert_eq!(out.clip_fraction, 1.0);
        assert!(g.actor.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_ratio_gives_vanilla_policy_gradient() {
        let (mut actor, critic, log_std, _, _) = toy_batch(1.0);
        actor.params[2] = 0.3; // bias of the first action mean
        let actions = [1.0, -0.5];
        let lp = log_prob(&actions, &[0.3, 0.0], &log_std);
        let mb = Minibatch { obs: &[0.0], actions: &actions, old_log_probs: &[lp], advantages: &[1.5], returns: &[0.0], batch: 1 };
        let coefs = LossCoefs { clip: 0.2, value: 1.0, entropy: 0.0, diversity: 0.0, diversity_cap: 1.0 };
        let (out, g) = ppo_loss_and_grad(&actor, &critic, &log_std, &mb, &coefs).unwrap();
        assert!((out.policy_loss + 1.5).abs() < 1e-12);
        // -A · d log π / d μ = -A (a - μ) / σ²
        assert!((g.actor[2] + 1.5 * 0.7).abs() < 1e-12);
        assert!((g.actor[3] - 1.5 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn clip_norm_bounds_global_norm() {
        let mut g = Grads { actor: vec![3.0f64, 4.0], critic: vec![12.0], log_std: vec![0.0] };
        let before = g.clip_norm(1.0);
        assert_eq!(before, 13.0);
        assert!(g.norm() <= 1.0 + 1e-9);
    }
}
