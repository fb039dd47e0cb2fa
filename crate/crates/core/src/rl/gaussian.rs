//! Diagonal Gaussian policy head with a state-independent log-std.

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::Real;

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log density of `action` under `N(mean, diag(exp(log_std))²)`.
pub fn log_prob<T: Real>(action: &[T], mean: &[T], log_std: &[T]) -> T {
    let half_ln_2pi = T::cast_from(0.5 * LN_2PI);
    let half = T::cast_from(0.5);
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&a, &m), &s)| {
            let z = (a - m) / s.exp();
            -half * z * z - s - half_ln_2pi
        })
        .sum()
}

/// Entropy `Σ (log σᵢ + ½ ln(2πe))`.
pub fn entropy<T: Real>(log_std: &[T]) -> T {
    let c = T::cast_from(0.5 * (LN_2PI + 1.0));
    log_std.iter().map(|&s| s + c).sum()
}

/// Mean per-dimension variance `mean(σᵢ²)`.
pub fn mean_variance<T: Real>(log_std: &[T]) -> f64 {
    log_std.iter().map(|s| (2.0 * s.as_f64()).exp()).sum::<f64>() / log_std.len() as f64
}

/// `mean(min(σᵢ², cap))`.
pub fn capped_mean_variance<T: Real>(log_std: &[T], cap: f64) -> f64 {
    log_std.iter().map(|s| (2.0 * s.as_f64()).exp().min(cap)).sum::<f64>() / log_std.len() as f64
}

/// Draw `mean + σ ⊙ z` and return it with its log density.
pub fn sample_action<R: Rng + ?Sized>(mean: &[f32], log_std: &[f32], rng: &mut R) -> (Vec<f32>, f32) {
    let action: Vec<f32> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &s)| {
            let z: f32 = rng.sample(StandardNormal);
            m + s.exp() * z
        })
        .collect();
    let lp = log_prob(&action, mean, log_std);
    (action, lp)
}
