use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};

/// Predictor parameters `w` with the reciprocal sample weights
/// `u = 1/q`, split into the public and private blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePoint {
    pub w: Array1<f64>,
    pub u_pub: Array1<f64>,
    pub u_priv: Array1<f64>,
}

/// Box and ball that define the feasible set `𝒲 × 𝒰`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleSet {
    pub param_bound: f64,
    pub u_pub_min: f64,
    pub u_priv_min: f64,
    pub dim: usize,
    pub m: usize,
    pub n: usize,
}

impl FeasibleSet {
    pub fn new(param_bound: f64, alpha: f64, dim: usize, m: usize, n: usize) -> Self {
        Self {
            param_bound,
            u_pub_min: m as f64 / alpha,
            u_priv_min: n as f64 / (1.0 - alpha),
            dim,
            m,
            n,
        }
    }

    /// `w = 0` with `u` at its lower bounds, i.e. weights equal to `p⁰`.
    pub fn reference_point(&self) -> FeasiblePoint {
        FeasiblePoint {
            w: Array1::zeros(self.dim),
            u_pub: Array1::from_elem(self.m, self.u_pub_min),
            u_priv: Array1::from_elem(self.n, self.u_priv_min),
        }
    }

    pub fn check(&self, p: &FeasiblePoint) -> Result<()> {
        if p.w.len() != self.dim {
            return Err(AdaptError::DimensionMismatch {
                expected: self.dim,
                actual: p.w.len(),
            });
        }
        if p.u_pub.len() != self.m {
            return Err(AdaptError::DimensionMismatch {
                expected: self.m,
                actual: p.u_pub.len(),
            });
        }
        if p.u_priv.len() != self.n {
            return Err(AdaptError::DimensionMismatch {
                expected: self.n,
                actual: p.u_priv.len(),
            });
        }
        let norm = p.w.dot(&p.w).sqrt();
        if !(norm <= self.param_bound * (1.0 + 1e-12)) {
            return Err(AdaptError::Infeasible(format!(
                "‖w‖ = {norm} exceeds {}",
                self.param_bound
            )));
        }
        if let Some(u) = p.u_pub.iter().find(|&&u| !(u >= self.u_pub_min)) {
            return Err(AdaptError::Infeasible(format!(
                "public weight reciprocal {u} below {}",
                self.u_pub_min
            )));
        }
        if let Some(u) = p.u_priv.iter().find(|&&u| !(u >= self.u_priv_min)) {
            return Err(AdaptError::Infeasible(format!(
                "private weight reciprocal {u} below {}",
                self.u_priv_min
            )));
        }
        if p.u_pub.iter().chain(p.u_priv.iter()).any(|u| !u.is_finite()) {
            return Err(AdaptError::Infeasible("non-finite weight reciprocal".into()));
        }
        Ok(())
    }

    /// Euclidean projection onto the feasible set, in place.
    pub fn project_in_place(&self, p: &mut FeasiblePoint) {
        project_ball(&mut p.w, self.param_bound);
        p.u_pub.mapv_inplace(|u| u.max(self.u_pub_min));
        p.u_priv.mapv_inplace(|u| u.max(self.u_priv_min));
    }

    pub fn project(&self, mut p: FeasiblePoint) -> FeasiblePoint {
        self.project_in_place(&mut p);
        p
    }
}

/// Radial projection onto `‖w‖ ≤ radius`.
pub fn project_ball(w: &mut Array1<f64>, radius: f64) {
    let norm = w.dot(w).sqrt();
    if norm > radius {
        let s = radius / norm;
        w.mapv_inplace(|v| v * s);
    }
}

/// Projects an arbitrary point onto `{‖w‖ ≤ Λ} × [m/α, ∞)^m × [n/(1−α), ∞)^n`.
pub fn project(p_raw: FeasiblePoint, param_bound: f64, alpha: f64) -> FeasiblePoint {
    let set = FeasibleSet::new(param_bound, alpha, p_raw.w.len(), p_raw.u_pub.len(), p_raw.u_priv.len());
    set.project(p_raw)
}

/// Gradient blocks `(∇_w, ∇_{u^Pub}, ∇_{u^Priv})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGradient {
    pub w: Array1<f64>,
    pub u_pub: Array1<f64>,
    pub u_priv: Array1<f64>,
}

impl BlockGradient {
    pub fn zeros(dim: usize, m: usize, n: usize) -> Self {
        Self {
            w: Array1::zeros(dim),
            u_pub: Array1::zeros(m),
            u_priv: Array1::zeros(n),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w.dot(&self.w) + self.u_pub.dot(&self.u_pub) + self.u_priv.dot(&self.u_priv)).sqrt()
    }
}

impl FeasiblePoint {
    pub fn distance(&self, other: &FeasiblePoint) -> f64 {
        let dw = &self.w - &other.w;
        let dp = &self.u_pub - &other.u_pub;
        let dq = &self.u_priv - &other.u_priv;
        (dw.dot(&dw) + dp.dot(&dp) + dq.dot(&dq)).sqrt()
    }

    /// Implied sample weights `q = 1/u`, public block first.
    pub fn weights(&self) -> (Array1<f64>, Array1<f64>) {
        (self.u_pub.mapv(|u| 1.0 / u), self.u_priv.mapv(|u| 1.0 / u))
    }
}
