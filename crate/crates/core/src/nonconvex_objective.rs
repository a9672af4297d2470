//! The smoothed non-convex objective over `(w, u)`:
//!
//! ```text
//! J(w, u) = Σᵢ [ℓ(w; xᵢ, yᵢ) + d·1{i public}] / uᵢ
//!         + λ₁ [1 − Σᵢ 1/uᵢ]
//!         + λ₂ (Σᵢ 1/uᵢ²)^{1/2}
//!         + (λ_∞/μ) log Σᵢ exp(μ/uᵢ)
//! ```
//!
//! The last term is a softmax upper approximation of `λ_∞ maxᵢ 1/uᵢ`.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::config::RegularizerConfig;
use crate::dataset::AdaptDataset;
use crate::error::{invalid, AdaptError, Result};
use crate::loss::{axpy, Loss, LossModel};
use crate::point::{BlockGradient, FeasiblePoint, FeasibleSet};

#[derive(Debug, Clone)]
pub struct NonConvexObjective<'a, L: Loss = LossModel> {
    data: &'a AdaptDataset,
    d_dp: f64,
    reg: RegularizerConfig,
    loss: L,
    mu: f64,
    set: FeasibleSet,
    beta_bar: f64,
}

impl<'a, L: Loss> NonConvexObjective<'a, L> {
    pub fn new(data: &'a AdaptDataset, d_dp: f64, reg: RegularizerConfig, loss: L) -> Result<Self> {
        reg.validate()?;
        let c = loss.constants();
        let beta = c.smoothness.ok_or_else(|| {
            AdaptError::UnsupportedLoss("the non-convex objective needs a smooth loss".into())
        })?;
        if !(0.0..=c.bound).contains(&d_dp) {
            return Err(invalid("d_dp", format!("{d_dp} outside [0, {}]", c.bound)));
        }
        let (m, n) = (data.m(), data.n());
        let mu = reg.mu_for(m, n);
        let total = (m + n) as f64;
        if mu > total.powf(2.0 / 3.0) {
            log::warn!("softmax sharpness μ = {mu} exceeds (m + n)^(2/3); the smoothness constant may be loose");
        }
        let (mf, nf) = (m as f64, n as f64);
        if mf.cbrt() > nf || nf > mf.powi(3) {
            log::warn!("sample sizes m = {m}, n = {n} are far apart; the smoothness constant assumes m^(1/3) ≲ n ≲ m³");
        }
        let set = FeasibleSet::new(loss.param_bound(), reg.alpha, data.dim(), m, n);
        let beta_bar = beta_bar(&reg, beta, c.lipschitz, c.bound, mu, m, n);
        Ok(Self {
            data,
            d_dp,
            reg,
            loss,
            mu,
            set,
            beta_bar,
        })
    }

    pub fn data(&self) -> &AdaptDataset {
        self.data
    }

    pub fn d_dp(&self) -> f64 {
        self.d_dp
    }

    pub fn reg(&self) -> &RegularizerConfig {
        &self.reg
    }

    pub fn loss(&self) -> &L {
        &self.loss
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }

    /// Smoothness constant of `J` over the feasible set.
    pub fn beta_bar(&self) -> f64 {
        self.beta_bar
    }

    /// Uniform bound `M = 2B + λ₁ + λ₂(α/√m + (1−α)/√n) + λ_∞ max(α/m, (1−α)/n)`.
    pub fn objective_bound(&self) -> f64 {
        let b = self.loss.constants().bound;
        let a = self.reg.alpha;
        let m = self.set.m as f64;
        let n = self.set.n as f64;
        2.0 * b
            + self.reg.lambda1
            + self.reg.lambda2 * (a / m.sqrt() + (1.0 - a) / n.sqrt())
            + self.reg.lambda_inf * (a / m).max((1.0 - a) / n)
    }

    pub fn eval(&self, p: &FeasiblePoint) -> Result<f64> {
        self.set.check(p)?;
        Ok(self.eval_unchecked(p))
    }

    pub fn grad(&self, p: &FeasiblePoint) -> Result<BlockGradient> {
        self.set.check(p)?;
        let mut g = BlockGradient::zeros(self.set.dim, self.set.m, self.set.n);
        self.grad_into(p, &mut g);
        Ok(g)
    }

    pub(crate) fn eval_unchecked(&self, p: &FeasiblePoint) -> f64 {
        let w = p.w.view();
        let mut total = 0.0;
        for ((row, &y), &u) in self.data.public_x().rows().into_iter().zip(self.data.public_y()).zip(&p.u_pub) {
            total += (self.loss.eval(row.dot(&w), y).0 + self.d_dp) / u;
        }
        for ((row, &y), &u) in self.data.private_x().rows().into_iter().zip(self.data.private_y()).zip(&p.u_priv) {
            total += self.loss.eval(row.dot(&w), y).0 / u;
        }
        let reg = &self.reg;
        if reg.lambda1 != 0.0 {
            let inv_sum: f64 = p.u_pub.iter().chain(&p.u_priv).map(|u| 1.0 / u).sum();
            total += reg.lambda1 * (1.0 - inv_sum);
        }
        if reg.lambda2 != 0.0 {
            total += reg.lambda2 * crate::convex_objective::inv_sq_sum(p).sqrt();
        }
        if reg.lambda_inf != 0.0 {
            total += reg.lambda_inf * softmax_inverse(p, self.mu);
        }
        total
    }

    pub(crate) fn grad_into(&self, p: &FeasiblePoint, g: &mut BlockGradient) {
        g.w.fill(0.0);
        let w = p.w.view();
        self.loss_block(self.data.public_x(), self.data.public_y(), w, &p.u_pub, self.d_dp, &mut g.w, &mut g.u_pub);
        self.loss_block(self.data.private_x(), self.data.private_y(), w, &p.u_priv, 0.0, &mut g.w, &mut g.u_priv);
        let reg = &self.reg;
        let root = if reg.lambda2 != 0.0 {
            crate::convex_objective::inv_sq_sum(p).sqrt()
        } else {
            1.0
        };
        // Softmax weights of μ/uᵢ, shifted by the largest exponent.
        let (shift, norm) = if reg.lambda_inf != 0.0 {
            let top = self.mu / crate::convex_objective::min_entry(p).1;
            let z: f64 = p.u_pub.iter().chain(&p.u_priv).map(|u| (self.mu / u - top).exp()).sum();
            (top, z)
        } else {
            (0.0, 1.0)
        };
        let reg_term = |u: f64| {
            let u2 = u * u;
            let mut v = reg.lambda1 / u2;
            if reg.lambda2 != 0.0 {
                v -= reg.lambda2 / (u2 * u * root);
            }
            if reg.lambda_inf != 0.0 {
                v -= reg.lambda_inf * (self.mu / u - shift).exp() / (norm * u2);
            }
            v
        };
        for (gi, &u) in g.u_pub.iter_mut().zip(&p.u_pub) {
            *gi += reg_term(u);
        }
        for (gi, &u) in g.u_priv.iter_mut().zip(&p.u_priv) {
            *gi += reg_term(u);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn loss_block(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        w: ArrayView1<f64>,
        u: &Array1<f64>,
        offset: f64,
        gw: &mut Array1<f64>,
        gu: &mut Array1<f64>,
    ) {
        for (((row, &yi), &ui), gi) in x.rows().into_iter().zip(y).zip(u).zip(gu.iter_mut()) {
            let (value, slope) = self.loss.eval(row.dot(&w), yi);
            axpy(slope / ui, row, gw.view_mut());
            *gi = -(value + offset) / (ui * ui);
        }
    }

    /// `‖γ(p − Proj(p − ∇J(p)/γ))‖` with the exact gradient.
    pub fn gradient_mapping_norm(&self, p: &FeasiblePoint, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(invalid("gamma", "must be positive"));
        }
        let g = self.grad(p)?;
        let mut q = FeasiblePoint {
            w: &p.w - &(&g.w / gamma),
            u_pub: &p.u_pub - &(&g.u_pub / gamma),
            u_priv: &p.u_priv - &(&g.u_priv / gamma),
        };
        self.set.project_in_place(&mut q);
        Ok(gamma * p.distance(&q))
    }

    /// Gradients of the private loss part `Σ_priv ℓᵢ/uᵢ` alone.
    pub fn private_loss_gradients(&self, p: &FeasiblePoint) -> Result<(Array1<f64>, Array1<f64>)> {
        self.set.check(p)?;
        let mut gw = Array1::zeros(self.set.dim);
        let mut gu = Array1::zeros(self.set.n);
        self.loss_block(self.data.private_x(), self.data.private_y(), p.w.view(), &p.u_priv, 0.0, &mut gw, &mut gu);
        Ok((gw, gu))
    }
}

/// `(1/μ) log Σᵢ exp(μ/uᵢ)`, evaluated with the largest exponent factored out.
pub fn softmax_inverse(p: &FeasiblePoint, mu: f64) -> f64 {
    let top = 1.0 / crate::convex_objective::min_entry(p).1;
    let z: f64 = p.u_pub.iter().chain(&p.u_priv).map(|u| (mu * (1.0 / u - top)).exp()).sum();
    top + z.ln() / mu
}

/// `β̄ = β + β′ + G(α²/m^{3/2} + (1 − α)²/n^{3/2})`, where `β′` bounds the
/// Frobenius norm of the `u`-Hessian of the regularizers and weighted losses.
pub fn beta_bar(reg: &RegularizerConfig, beta: f64, lipschitz: f64, bound: f64, mu: f64, m: usize, n: usize) -> f64 {
    let a = reg.alpha;
    let b = 1.0 - a;
    let (l1, l2, li) = (reg.lambda1, reg.lambda2, reg.lambda_inf);
    let mf = m as f64;
    let nf = n as f64;
    let beta_prime = l2 * a.powi(3) / mf.powi(2)
        + 2.0 * a.powi(3) * ((2.0 * bound - l1).abs() + l2 * nf.sqrt() + li) / mf.powf(2.5)
        + li * mu * a.powi(4) * (1.0 / mf.powi(3) + 1.0 / mf.powf(3.5))
        + l2 * b.powi(3) / nf.powi(2)
        + 2.0 * b.powi(3) * ((bound - l1).abs() + l2 * mf.sqrt() + li) / nf.powf(2.5)
        + li * mu * b.powi(4) * (1.0 / nf.powi(3) + 1.0 / nf.powf(3.5))
        + 2.0 * li * mu * a * a * b * b / (mf.powf(1.5) * nf.powf(1.5));
    beta + beta_prime + lipschitz * (a * a / mf.powf(1.5) + b * b / nf.powf(1.5))
}

pub fn eval_j<L: Loss>(ctx: &NonConvexObjective<'_, L>, p: &FeasiblePoint) -> Result<f64> {
    ctx.eval(p)
}

pub fn grad_j<L: Loss>(ctx: &NonConvexObjective<'_, L>, p: &FeasiblePoint) -> Result<BlockGradient> {
    ctx.grad(p)
}

pub fn smoothness_beta_bar<L: Loss>(ctx: &NonConvexObjective<'_, L>) -> f64 {
    ctx.beta_bar()
}

pub fn gradient_mapping_norm<L: Loss>(ctx: &NonConvexObjective<'_, L>, p: &FeasiblePoint, gamma: f64) -> Result<f64> {
    ctx.gradient_mapping_norm(p, gamma)
}
