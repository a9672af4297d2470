//! Noise primitives and the noise calibration shared by both optimizers.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::PrivacyBudget;
use crate::error::{invalid, Result};

/// Noise scales of one private optimization run.
///
/// `sigma1` perturbs the `w`-gradient, `sigma2` the private block of the
/// `u`-gradient. The public block is never perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub sigma1: f64,
    pub sigma2: f64,
    /// ℓ₂-sensitivity of the private `w`-gradient, `2(1 − α)G/n`.
    pub s1: f64,
    /// ℓ₂-sensitivity of the private `u`-gradient, `(1 − α)²B/n²`.
    pub s2: f64,
    pub iterations: usize,
}

impl NoiseSchedule {
    pub fn is_noiseless(&self) -> bool {
        self.sigma1 == 0.0 && self.sigma2 == 0.0
    }
}

/// One draw from `Lap(0, scale)` by inverse-CDF sampling.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid("scale", format!("must be positive, got {scale}")));
    }
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// `dim` i.i.d. draws from `N(0, sigma²)`. `sigma = 0` consumes no randomness.
pub fn gaussian_vector<R: Rng + ?Sized>(dim: usize, sigma: f64, rng: &mut R) -> Result<Array1<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be a non-negative real, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(Array1::zeros(dim));
    }
    Ok(Array1::from_shape_fn(dim, |_| {
        sigma * rng.sample::<f64, _>(StandardNormal)
    }))
}

/// Adds `N(0, sigma²)` noise to every entry of `out`.
pub(crate) fn add_gaussian<R: Rng + ?Sized>(out: &mut Array1<f64>, sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for v in out.iter_mut() {
        *v += sigma * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Noise scales for `T` noisy gradient steps at privacy level
/// `(epsilon_opt, delta)`:
///
/// `σ₁ = 2 s₁ √(T ln(3/δ)) / ε`, `s₁ = 2(1 − α)G/n`,
/// `σ₂ = 2 s₂ √(T ln(3/δ)) / ε`, `s₂ = (1 − α)²B/n²`.
///
/// `epsilon_opt = ∞` gives zero noise.
#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    epsilon_opt: f64,
    delta: f64,
    alpha: f64,
    lipschitz: f64,
    bound: f64,
    n: usize,
    iterations: usize,
) -> Result<NoiseSchedule> {
    if iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !(epsilon_opt > 0.0) {
        return Err(invalid("epsilon_opt", format!("must be positive, got {epsilon_opt}")));
    }
    if !(delta > 0.0 && delta < 3.0) {
        return Err(invalid("delta", format!("ln(3/δ) must be positive, got δ = {delta}")));
    }
    let nf = n as f64;
    let s1 = 2.0 * (1.0 - alpha) * lipschitz / nf;
    let s2 = (1.0 - alpha).powi(2) * bound / (nf * nf);
    let (sigma1, sigma2) = if epsilon_opt.is_infinite() {
        (0.0, 0.0)
    } else {
        let k = 2.0 * (iterations as f64 * (3.0 / delta).ln()).sqrt() / epsilon_opt;
        (k * s1, k * s2)
    };
    Ok(NoiseSchedule {
        sigma1,
        sigma2,
        s1,
        s2,
        iterations,
    })
}

/// [`calibrate`] with the optimization share of a [`PrivacyBudget`].
pub fn calibrate_budget(
    budget: &PrivacyBudget,
    alpha: f64,
    lipschitz: f64,
    bound: f64,
    n: usize,
    iterations: usize,
) -> Result<NoiseSchedule> {
    calibrate(budget.epsilon_opt(), budget.delta, alpha, lipschitz, bound, n, iterations)
}

/// Laplace scale of the discrepancy release: sensitivity `B/n` over
/// `epsilon_disc`.
pub fn discrepancy_laplace_scale(bound: f64, epsilon_disc: f64, n: usize) -> f64 {
    bound / (epsilon_disc * n as f64)
}

/// `clamp(d̂ + Lap(B/(ε_disc·n)), 0, B)`; identity when `epsilon_disc = ∞`.
pub fn privatize_discrepancy<R: Rng + ?Sized>(
    d_hat: f64,
    bound: f64,
    epsilon_disc: f64,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    let slack = 1e-12 * bound.max(1.0);
    if !(d_hat >= -slack && d_hat <= bound + slack) {
        return Err(invalid("d_hat", format!("{d_hat} outside [0, {bound}]")));
    }
    if !(epsilon_disc > 0.0) {
        return Err(invalid("epsilon_disc", format!("must be positive, got {epsilon_disc}")));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if epsilon_disc.is_infinite() {
        return Ok(d_hat.clamp(0.0, bound));
    }
    let noise = laplace_sample(discrepancy_laplace_scale(bound, epsilon_disc, n), rng)?;
    Ok(clamp_release(d_hat + noise, bound))
}

/// Projection of a noisy release onto `[0, B]`.
pub fn clamp_release(value: f64, bound: f64) -> f64 {
    value.clamp(0.0, bound)
}
