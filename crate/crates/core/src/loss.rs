//! Losses over linear predictors `x -> w·x` and their geometric constants.
//!
//! Every loss here depends on the parameters only through the prediction
//! `z = w·x`, so a loss is described by its value and its derivative in `z`.
//! The gradient in `w` is then `ℓ'(z, y)·x`.

use ndarray::{ArrayView1, ArrayViewMut1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, AdaptError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(w·x − y)²`, labels in `[−1, 1]`.
    Squared,
    /// `log(1 + exp(−y·w·x))`, labels in `{−1, +1}`.
    Logistic,
}

/// Bound `B`, Lipschitz constant `G` and smoothness `β` of a loss over the
/// feasible region `‖w‖ ≤ Λ`, `‖x‖ ≤ r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConstants {
    pub bound: f64,
    pub lipschitz: f64,
    pub smoothness: Option<f64>,
}

/// Seam for losses of a linear prediction used by the non-convex objective.
pub trait Loss: Sync {
    /// Loss value and its derivative with respect to the prediction `z`.
    fn eval(&self, prediction: f64, label: f64) -> (f64, f64);
    fn constants(&self) -> LossConstants;
    /// Feature norm bound `r`.
    fn feature_bound(&self) -> f64;
    /// Parameter norm bound `Λ`.
    fn param_bound(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    /// Feature norm bound `r`.
    pub feature_bound: f64,
    /// Parameter norm bound `Λ`.
    pub param_bound: f64,
}

impl LossModel {
    pub fn new(kind: LossKind, feature_bound: f64, param_bound: f64) -> Result<Self> {
        let model = Self {
            kind,
            feature_bound,
            param_bound,
        };
        model.derive_constants()?;
        Ok(model)
    }

    pub fn squared(feature_bound: f64, param_bound: f64) -> Result<Self> {
        Self::new(LossKind::Squared, feature_bound, param_bound)
    }

    pub fn logistic(feature_bound: f64, param_bound: f64) -> Result<Self> {
        Self::new(LossKind::Logistic, feature_bound, param_bound)
    }

    /// Closed-form constants.
    ///
    /// Squared: `B = (Λr + 1)²`, `G = 2r(Λr + 1)`.
    /// Logistic: `G = r`, `β = r²/4`, `B = GΛ`.
    pub fn derive_constants(&self) -> Result<LossConstants> {
        let r = self.feature_bound;
        let lam = self.param_bound;
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid("feature_bound", format!("must be positive, got {r}")));
        }
        if !(lam > 0.0 && lam.is_finite()) {
            return Err(invalid("param_bound", format!("must be positive, got {lam}")));
        }
        Ok(match self.kind {
            LossKind::Squared => {
                let a = lam * r + 1.0;
                LossConstants {
                    bound: a * a,
                    lipschitz: 2.0 * r * a,
                    smoothness: None,
                }
            }
            LossKind::Logistic => LossConstants {
                bound: r * lam,
                lipschitz: r,
                smoothness: Some(r * r / 4.0),
            },
        })
    }

    /// Constants of a validated model; construction guarantees they exist.
    pub fn constants(&self) -> LossConstants {
        self.derive_constants()
            .expect("LossModel constructed with non-positive bounds")
    }

    pub fn value(&self, w: ArrayView1<f64>, x: ArrayView1<f64>, y: f64) -> Result<f64> {
        check_dims(w, x)?;
        Ok(self.eval(w.dot(&x), y).0)
    }

    pub fn grad_w(
        &self,
        w: ArrayView1<f64>,
        x: ArrayView1<f64>,
        y: f64,
    ) -> Result<ndarray::Array1<f64>> {
        check_dims(w, x)?;
        let (_, slope) = self.eval(w.dot(&x), y);
        Ok(x.mapv(|xi| slope * xi))
    }
}

impl Loss for LossModel {
    #[inline]
    fn eval(&self, prediction: f64, label: f64) -> (f64, f64) {
        match self.kind {
            LossKind::Squared => {
                let res = prediction - label;
                (res * res, 2.0 * res)
            }
            LossKind::Logistic => {
                let t = -label * prediction;
                (softplus(t), -label * sigmoid(t))
            }
        }
    }

    fn constants(&self) -> LossConstants {
        LossModel::constants(self)
    }

    fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    fn param_bound(&self) -> f64 {
        self.param_bound
    }
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ℓ(w; x, y)`; free-function form of [`LossModel::value`].
pub fn loss_value(model: &LossModel, w: ArrayView1<f64>, x: ArrayView1<f64>, y: f64) -> Result<f64> {
    model.value(w, x, y)
}

/// `∇_w ℓ(w; x, y)`.
pub fn loss_grad_w(
    model: &LossModel,
    w: ArrayView1<f64>,
    x: ArrayView1<f64>,
    y: f64,
) -> Result<ndarray::Array1<f64>> {
    model.grad_w(w, x, y)
}

pub fn derive_constants(model: &LossModel) -> Result<LossConstants> {
    model.derive_constants()
}

/// `out += scale · x`
#[inline]
pub(crate) fn axpy(scale: f64, x: ArrayView1<f64>, mut out: ArrayViewMut1<f64>) {
    Zip::from(&mut out).and(&x).for_each(|o, &xi| *o += scale * xi);
}

fn check_dims(w: ArrayView1<f64>, x: ArrayView1<f64>) -> Result<()> {
    if w.len() != x.len() {
        return Err(AdaptError::DimensionMismatch {
            expected: w.len(),
            actual: x.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn squared_examples() {
        let m = LossModel::squared(1.0, 1.0).unwrap();
        let one = array![1.0];
        let zero = array![0.0];
        assert_eq!(m.value(one.view(), one.view(), 1.0).unwrap(), 0.0);
        assert_eq!(m.value(zero.view(), one.view(), 1.0).unwrap(), 1.0);
        assert_eq!(m.grad_w(zero.view(), one.view(), 1.0).unwrap(), array![-2.0]);
        assert_eq!(m.grad_w(one.view(), one.view(), 1.0).unwrap(), array![0.0]);
    }

    #[test]
    fn logistic_examples() {
        let m = LossModel::logistic(1.0, 1.0).unwrap();
        let one = array![1.0];
        let zero = array![0.0];
        assert_abs_diff_eq!(
            m.value(zero.view(), one.view(), 1.0).unwrap(),
            0.693147,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            m.grad_w(zero.view(), one.view(), 1.0).unwrap()[0],
            -0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn constants_examples() {
        let c = LossModel::squared(1.0, 1.0).unwrap().constants();
        assert_eq!((c.bound, c.lipschitz), (4.0, 4.0));
        let c = LossModel::logistic(1.0, 1.0).unwrap().constants();
        assert_eq!((c.lipschitz, c.smoothness, c.bound), (1.0, Some(0.25), 1.0));
        let c = LossModel::squared(0.5, 2.0).unwrap().constants();
        assert_eq!((c.bound, c.lipschitz), (4.0, 2.0));
    }

    #[test]
    fn rejects_bad_bounds_and_dims() {
        assert!(LossModel::squared(0.0, 1.0).is_err());
        assert!(LossModel::logistic(1.0, -1.0).is_err());
        let m = LossModel::squared(1.0, 1.0).unwrap();
        let w = array![0.0, 0.0];
        let x = array![1.0];
        assert!(matches!(
            m.value(w.view(), x.view(), 0.0),
            Err(AdaptError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert_abs_diff_eq!(sigmoid(-800.0), 0.0);
    }
}
