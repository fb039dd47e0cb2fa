//! Generalized advantage estimation.

use crate::{Error, Result};

/// Backward recursion
/// `δ_t = r_t + γ V_{t+1} (1 - done_t) - V_t`, `A_t = δ_t + γ λ (1 - done_t) A_{t+1}`.
///
/// `V_T` is `bootstrap_value`. Returns `(advantages, returns = A + V)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "gae inputs differ in length: rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[true], 0.0, 0.99, 0.95).unwrap();
        assert_eq!((a[0], r[0]), (1.0, 1.0));
    }

    #[test]
    fn two_step_hand_recursion() {
        let (a, _) = compute_gae(&[0.0, 1.0], &[0.0, 0.0], &[false, false], 0.0, 0.99, 0.95).unwrap();
        assert!((a[1] - 1.0).abs() < 1e-15);
        assert!((a[0] - 0.99 * 0.95).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.4, -0.3];
        let (a, _) = compute_gae(&r, &v, &[false, true, false], 0.7, 0.9, 0.0).unwrap();
        assert!((a[0] - (0.5 + 0.9 * 0.4 - 0.1)).abs() < 1e-12);
        assert!((a[1] - (-1.0 - 0.4)).abs() < 1e-12);
        assert!((a[2] - (2.0 + 0.9 * 0.7 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.99, 0.95).is_err());
    }
}
