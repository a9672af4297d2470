//! The jointly convex reweighted objective over `(w, u)`, `u = 1/q`:
//!
//! ```text
//! F(w, u) = Σᵢ [(w·xᵢ − yᵢ)² + d·1{i public}] / uᵢ
//!         + κ₁ [(α/m)² Σ_pub uᵢ + ((1 − α)/n)² Σ_priv uᵢ − 1]
//!         + κ₂ (Σᵢ 1/uᵢ²)^{1/2}
//!         + κ_∞ / minᵢ uᵢ
//! ```
//!
//! Each loss term is quadratic-over-linear in `(w, uᵢ)`.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::config::RegularizerConfig;
use crate::dataset::AdaptDataset;
use crate::error::{invalid, AdaptError, Result};
use crate::loss::{axpy, LossKind, LossModel};
use crate::point::{BlockGradient, FeasiblePoint, FeasibleSet};

#[derive(Debug, Clone)]
pub struct ConvexObjective<'a> {
    data: &'a AdaptDataset,
    d_dp: f64,
    reg: RegularizerConfig,
    model: LossModel,
    set: FeasibleSet,
}

impl<'a> ConvexObjective<'a> {
    pub fn new(data: &'a AdaptDataset, d_dp: f64, reg: RegularizerConfig, model: LossModel) -> Result<Self> {
        if model.kind != LossKind::Squared {
            return Err(AdaptError::UnsupportedLoss(
                "the convex objective is defined for the squared loss".into(),
            ));
        }
        reg.validate()?;
        let bound = model.derive_constants()?.bound;
        if !(0.0..=bound).contains(&d_dp) {
            return Err(invalid("d_dp", format!("{d_dp} outside [0, {bound}]")));
        }
        let set = FeasibleSet::new(model.param_bound, reg.alpha, data.dim(), data.m(), data.n());
        Ok(Self {
            data,
            d_dp,
            reg,
            model,
            set,
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

    pub fn model(&self) -> &LossModel {
        &self.model
    }

    pub fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }

    /// `B̄ = B + κ₁ + κ₂ + κ_∞`.
    pub fn b_bar(&self) -> f64 {
        self.reg.b_bar(self.model.constants().bound)
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
            let res = row.dot(&w) - y;
            total += (res * res + self.d_dp) / u;
        }
        for ((row, &y), &u) in self.data.private_x().rows().into_iter().zip(self.data.private_y()).zip(&p.u_priv) {
            let res = row.dot(&w) - y;
            total += res * res / u;
        }
        total + self.regularizer_value(p)
    }

    fn regularizer_value(&self, p: &FeasiblePoint) -> f64 {
        let reg = &self.reg;
        let (cp, cq) = self.box_coefficients();
        let mut v = 0.0;
        if reg.kappa1 != 0.0 {
            v += reg.kappa1 * (cp * p.u_pub.sum() + cq * p.u_priv.sum() - 1.0);
        }
        if reg.kappa2 != 0.0 {
            v += reg.kappa2 * inv_sq_sum(p).sqrt();
        }
        if reg.kappa_inf != 0.0 {
            v += reg.kappa_inf / min_entry(p).1;
        }
        v
    }

    /// `(α/m)²` and `((1 − α)/n)²`.
    fn box_coefficients(&self) -> (f64, f64) {
        let a = self.reg.alpha;
        ((a / self.set.m as f64).powi(2), ((1.0 - a) / self.set.n as f64).powi(2))
    }

    pub(crate) fn grad_into(&self, p: &FeasiblePoint, g: &mut BlockGradient) {
        g.w.fill(0.0);
        let w = p.w.view();
        loss_block(
            self.data.public_x(),
            self.data.public_y(),
            w,
            &p.u_pub,
            self.d_dp,
            &mut g.w,
            &mut g.u_pub,
        );
        loss_block(
            self.data.private_x(),
            self.data.private_y(),
            w,
            &p.u_priv,
            0.0,
            &mut g.w,
            &mut g.u_priv,
        );
        let reg = &self.reg;
        let (cp, cq) = self.box_coefficients();
        if reg.kappa1 != 0.0 {
            g.u_pub.mapv_inplace(|v| v + reg.kappa1 * cp);
            g.u_priv.mapv_inplace(|v| v + reg.kappa1 * cq);
        }
        if reg.kappa2 != 0.0 {
            let root = inv_sq_sum(p).sqrt();
            for (gi, &u) in g.u_pub.iter_mut().zip(&p.u_pub) {
                *gi -= reg.kappa2 / (u * u * u * root);
            }
            for (gi, &u) in g.u_priv.iter_mut().zip(&p.u_priv) {
                *gi -= reg.kappa2 / (u * u * u * root);
            }
        }
        if reg.kappa_inf != 0.0 {
            let (idx, u) = min_entry(p);
            let m = self.set.m;
            let slot = if idx < m { &mut g.u_pub[idx] } else { &mut g.u_priv[idx - m] };
            *slot -= reg.kappa_inf / (u * u);
        }
    }

    /// Gradient bounds `(G, α²(B + B̄)/m^{3/2}, (1 − α)²B̄/n^{3/2})`.
    pub fn gradient_bounds(&self) -> (f64, f64, f64) {
        let c = self.model.constants();
        let b_bar = self.b_bar();
        let a = self.reg.alpha;
        let m = self.set.m as f64;
        let n = self.set.n as f64;
        (
            c.lipschitz,
            a * a * (c.bound + b_bar) / m.powf(1.5),
            (1.0 - a).powi(2) * b_bar / n.powf(1.5),
        )
    }

    /// Sensitivities `(2(1 − α)G/n, (1 − α)²B/n²)` of the private-sample
    /// gradient blocks under replacement of one private point.
    pub fn sensitivities(&self) -> (f64, f64) {
        let c = self.model.constants();
        let a = self.reg.alpha;
        let n = self.set.n as f64;
        (2.0 * (1.0 - a) * c.lipschitz / n, (1.0 - a).powi(2) * c.bound / (n * n))
    }

    /// Gradients of the private loss part `Σ_priv ℓᵢ/uᵢ` alone: the
    /// `w`-block contribution and the `u^Priv` block.
    pub fn private_loss_gradients(&self, p: &FeasiblePoint) -> Result<(Array1<f64>, Array1<f64>)> {
        self.set.check(p)?;
        let mut gw = Array1::zeros(self.set.dim);
        let mut gu = Array1::zeros(self.set.n);
        loss_block(
            self.data.private_x(),
            self.data.private_y(),
            p.w.view(),
            &p.u_priv,
            0.0,
            &mut gw,
            &mut gu,
        );
        Ok((gw, gu))
    }
}

/// Adds `Σ ∇ℓᵢ/uᵢ` to `gw` and writes `−(ℓᵢ + offset)/uᵢ²` into `gu`.
fn loss_block(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    u: &Array1<f64>,
    offset: f64,
    gw: &mut Array1<f64>,
    gu: &mut Array1<f64>,
) {
    for (((row, &yi), &ui), gi) in x.rows().into_iter().zip(y).zip(u).zip(gu.iter_mut()) {
        let res = row.dot(&w) - yi;
        axpy(2.0 * res / ui, row, gw.view_mut());
        *gi = -(res * res + offset) / (ui * ui);
    }
}

pub(crate) fn inv_sq_sum(p: &FeasiblePoint) -> f64 {
    p.u_pub.iter().chain(&p.u_priv).map(|u| 1.0 / (u * u)).sum()
}

/// Lowest index (public block first) attaining `min u`, and the minimum.
pub(crate) fn min_entry(p: &FeasiblePoint) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &u) in p.u_pub.iter().chain(&p.u_priv).enumerate() {
        if u < best.1 {
            best = (i, u);
        }
    }
    best
}

pub fn eval_f(ctx: &ConvexObjective<'_>, p: &FeasiblePoint) -> Result<f64> {
    ctx.eval(p)
}

pub fn grad_f(ctx: &ConvexObjective<'_>, p: &FeasiblePoint) -> Result<BlockGradient> {
    ctx.grad(p)
}

pub fn gradient_bounds(ctx: &ConvexObjective<'_>) -> (f64, f64, f64) {
    ctx.gradient_bounds()
}
