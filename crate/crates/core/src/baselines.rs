//! Reference learners: target-only ERM, its noisy private version, and ERM
//! under the fixed mixture weights `p⁰`.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::PrivacyBudget;
use crate::dataset::AdaptDataset;
use crate::error::{invalid, AdaptError, Result};
use crate::loss::{axpy, Loss, LossModel};
use crate::mechanisms::add_gaussian;
use crate::point::project_ball;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaselineKind {
    TargetOnly,
    TargetOnlyDp,
    /// Weight `α/m` on each public point and `(1 − α)/n` on each private one.
    MixtureAlpha { alpha: f64 },
}

/// Parameters fitted by a baseline. Baselines use fixed sample weights, so
/// there is no `u` block to report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub kind: BaselineKind,
    pub w: Array1<f64>,
    /// Weighted empirical loss at `w`.
    pub objective_value: f64,
    pub iterations: usize,
    pub sigma: f64,
    pub step: f64,
    pub privacy_spent: Option<(f64, f64)>,
}

/// Projected gradient descent with iterate averaging on the weighted mean
/// loss. `T` steps of size `Λ/√(T(G² + dσ²))`.
pub fn fit_baseline<R: Rng + ?Sized>(
    kind: BaselineKind,
    data: &AdaptDataset,
    model: &LossModel,
    budget: Option<&PrivacyBudget>,
    iterations: usize,
    rng: &mut R,
) -> Result<BaselineResult> {
    if iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }
    let c = model.derive_constants()?;
    let (m, n, d) = (data.m() as f64, data.n() as f64, data.dim());
    let (pub_weight, priv_weight) = match kind {
        BaselineKind::TargetOnly | BaselineKind::TargetOnlyDp => (0.0, 1.0 / n),
        BaselineKind::MixtureAlpha { alpha } => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
            }
            (alpha / m, (1.0 - alpha) / n)
        }
    };
    let (sigma, spent) = match kind {
        BaselineKind::TargetOnlyDp => {
            let budget = budget.ok_or(AdaptError::MissingBudget("target_only_dp"))?;
            budget.validate()?;
            let eps = budget.epsilon_opt();
            let sigma = if eps.is_infinite() {
                0.0
            } else {
                2.0 * (2.0 * c.lipschitz / n) * (iterations as f64 * (3.0 / budget.delta).ln()).sqrt() / eps
            };
            (sigma, Some((eps, budget.delta)))
        }
        _ => (0.0, None),
    };
    let step = model.param_bound / (iterations as f64 * (c.lipschitz.powi(2) + d as f64 * sigma * sigma)).sqrt();

    let mut w = Array1::zeros(d);
    let mut sum = Array1::zeros(d);
    let mut g = Array1::zeros(d);
    for _ in 0..iterations {
        g.fill(0.0);
        if pub_weight != 0.0 {
            add_weighted_grad(data.public_x(), data.public_y(), model, w.view(), pub_weight, &mut g);
        }
        if priv_weight != 0.0 {
            add_weighted_grad(data.private_x(), data.private_y(), model, w.view(), priv_weight, &mut g);
        }
        add_gaussian(&mut g, sigma, rng);
        w.scaled_add(-step, &g);
        project_ball(&mut w, model.param_bound);
        sum += &w;
    }
    let mut w = sum / iterations as f64;
    project_ball(&mut w, model.param_bound);
    let mut objective_value = 0.0;
    if pub_weight != 0.0 {
        objective_value += pub_weight * total_loss(data.public_x(), data.public_y(), model, w.view());
    }
    if priv_weight != 0.0 {
        objective_value += priv_weight * total_loss(data.private_x(), data.private_y(), model, w.view());
    }
    Ok(BaselineResult {
        kind,
        w,
        objective_value,
        iterations,
        sigma,
        step,
        privacy_spent: spent,
    })
}

fn add_weighted_grad(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    model: &LossModel,
    w: ArrayView1<f64>,
    weight: f64,
    g: &mut Array1<f64>,
) {
    let mut block = Array1::zeros(g.len());
    for (row, &yi) in x.rows().into_iter().zip(y) {
        let (_, slope) = model.eval(row.dot(&w), yi);
        axpy(slope, row, block.view_mut());
    }
    g.scaled_add(weight, &block);
}

fn total_loss(x: ArrayView2<f64>, y: ArrayView1<f64>, model: &LossModel, w: ArrayView1<f64>) -> f64 {
    x.rows().into_iter().zip(y).map(|(row, &yi)| model.eval(row.dot(&w), yi).0).sum()
}
