use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Total `(ε, δ)` budget and its split between the discrepancy release and
/// the optimization. `epsilon_total = ∞` is the non-private mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon_total: f64,
    pub delta: f64,
    #[serde(default = "default_disc_fraction")]
    pub disc_fraction: f64,
}

fn default_disc_fraction() -> f64 {
    0.5
}

impl PrivacyBudget {
    pub fn new(epsilon_total: f64, delta: f64) -> Result<Self> {
        Self::with_split(epsilon_total, delta, default_disc_fraction())
    }

    pub fn with_split(epsilon_total: f64, delta: f64, disc_fraction: f64) -> Result<Self> {
        let b = Self {
            epsilon_total,
            delta,
            disc_fraction,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn non_private() -> Self {
        Self {
            epsilon_total: f64::INFINITY,
            delta: 0.01,
            disc_fraction: default_disc_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_total > 0.0) {
            return Err(invalid("epsilon_total", format!("must be positive, got {}", self.epsilon_total)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.disc_fraction > 0.0 && self.disc_fraction < 1.0) {
            return Err(invalid(
                "disc_fraction",
                format!("must lie in (0, 1), got {}", self.disc_fraction),
            ));
        }
        Ok(())
    }

    pub fn is_private(&self) -> bool {
        self.epsilon_total.is_finite()
    }

    /// Share spent on the Laplace release of the discrepancy.
    pub fn epsilon_disc(&self) -> f64 {
        self.disc_fraction * self.epsilon_total
    }

    /// Share spent on the noisy gradient iterations.
    pub fn epsilon_opt(&self) -> f64 {
        if self.epsilon_total.is_infinite() {
            return f64::INFINITY;
        }
        self.epsilon_total - self.epsilon_disc()
    }
}

/// Hyperparameters of both objectives.
///
/// `kappa*` weight the convex objective, `lambda*` the non-convex one. The
/// mixture weight `alpha` defines the reference weights `p⁰` (`α/m` per
/// public point, `(1 − α)/n` per private point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub alpha: f64,
    #[serde(default)]
    pub kappa1: f64,
    #[serde(default)]
    pub kappa2: f64,
    #[serde(default)]
    pub kappa_inf: f64,
    #[serde(default)]
    pub lambda1: f64,
    #[serde(default)]
    pub lambda2: f64,
    #[serde(default)]
    pub lambda_inf: f64,
    /// Softmax sharpness; `None` means `√(m + n)`.
    #[serde(default)]
    pub mu: Option<f64>,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            kappa1: 0.0,
            kappa2: 0.0,
            kappa_inf: 0.0,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda_inf: 0.0,
            mu: None,
        }
    }
}

impl RegularizerConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        let named = [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("kappa_inf", self.kappa_inf),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda_inf", self.lambda_inf),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be a non-negative real, got {v}")));
            }
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(invalid("mu", format!("must be positive, got {mu}")));
            }
        }
        Ok(())
    }

    /// `B̄ = B + κ₁ + κ₂ + κ_∞`.
    pub fn b_bar(&self, bound: f64) -> f64 {
        bound + self.kappa1 + self.kappa2 + self.kappa_inf
    }

    /// `B + λ₁ + λ₂ + λ_∞`, the analogue of `B̄` for the non-convex objective.
    pub fn b_bar_nonconvex(&self, bound: f64) -> f64 {
        bound + self.lambda1 + self.lambda2 + self.lambda_inf
    }

    pub fn mu_for(&self, m: usize, n: usize) -> f64 {
        self.mu.unwrap_or_else(|| ((m + n) as f64).sqrt())
    }

    /// Lower bounds of the reciprocal weights: `m/α` and `n/(1 − α)`.
    pub fn u_lower_bounds(&self, m: usize, n: usize) -> (f64, f64) {
        (m as f64 / self.alpha, n as f64 / (1.0 - self.alpha))
    }
}
