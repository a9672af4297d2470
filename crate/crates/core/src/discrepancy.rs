//! Empirical labeled discrepancy between the public and private samples:
//!
//! `d̂ = sup_{‖w‖ ≤ Λ} | mean_priv ℓ(w) − mean_pub ℓ(w) |`.
//!
//! Dropping the absolute value leaves two difference-of-convex maximizations,
//! one per sign. Each is solved by DCA: linearize the concave part at the
//! current iterate and minimize the convex surrogate over the ball.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::AdaptDataset;
use crate::error::{invalid, AdaptError, Result};
use crate::loss::{axpy, Loss, LossKind, LossModel};
use crate::mechanisms::privatize_discrepancy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancySolver {
    Dca,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyEstimate {
    pub d_hat: f64,
    /// Privatized release; equals `d_hat` until [`Self::privatize`] is called.
    pub d_dp: f64,
    pub solver: DiscrepancySolver,
    /// Maximizer found.
    pub witness_w: Array1<f64>,
}

impl DiscrepancyEstimate {
    /// Replaces `d_dp` with the Laplace release of `d_hat`.
    pub fn privatize<R: Rng + ?Sized>(
        mut self,
        bound: f64,
        epsilon_disc: f64,
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        self.d_dp = privatize_discrepancy(self.d_hat, bound, epsilon_disc, n, rng)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcaOptions {
    /// Stop once the branch objective changes by at most `tol`.
    pub tol: f64,
    /// Random starts on the `Λ`-sphere, in addition to `w = 0`.
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for DcaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            restarts: 8,
            max_iter: 10_000,
        }
    }
}

/// `mean_priv ℓ(w) − mean_pub ℓ(w)`.
pub fn loss_gap<L: Loss>(data: &AdaptDataset, loss: &L, w: ArrayView1<f64>) -> f64 {
    mean_loss(data.private_x(), data.private_y(), loss, w)
        - mean_loss(data.public_x(), data.public_y(), loss, w)
}

fn mean_loss<L: Loss>(x: ArrayView2<f64>, y: ArrayView1<f64>, loss: &L, w: ArrayView1<f64>) -> f64 {
    let total: f64 = x
        .rows()
        .into_iter()
        .zip(y.iter())
        .map(|(row, &yi)| loss.eval(row.dot(&w), yi).0)
        .sum();
    total / x.nrows() as f64
}

fn mean_loss_grad<L: Loss>(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    loss: &L,
    w: ArrayView1<f64>,
) -> Array1<f64> {
    let mut g = Array1::zeros(w.len());
    let inv = 1.0 / x.nrows() as f64;
    for (row, &yi) in x.rows().into_iter().zip(y.iter()) {
        let (_, slope) = loss.eval(row.dot(&w), yi);
        axpy(slope * inv, row, g.view_mut());
    }
    g
}

/// Brute-force estimate over a uniform grid of the `Λ`-ball (`d ≤ 2`).
///
/// In two dimensions the square grid is clipped to the disc and augmented
/// with `4(grid_points − 1)` equally spaced points on the boundary circle, so
/// the grid for `2g − 1` points contains the grid for `g` points.
pub fn discrepancy_grid<L: Loss>(data: &AdaptDataset, loss: &L, grid_points: usize) -> Result<DiscrepancyEstimate> {
    let d = data.dim();
    if d > 2 {
        return Err(invalid("dim", format!("grid oracle supports d ≤ 2, got {d}")));
    }
    if grid_points < 3 {
        return Err(invalid("grid_points", "must be at least 3"));
    }
    let lam = loss.param_bound();
    let step = 2.0 * lam / (grid_points - 1) as f64;
    let coord = |i: usize| -lam + step * i as f64;

    let mut best = (f64::NEG_INFINITY, Array1::zeros(d));
    let mut consider = |w: Array1<f64>| {
        let v = loss_gap(data, loss, w.view()).abs();
        if v > best.0 {
            best = (v, w);
        }
    };
    if d == 1 {
        for i in 0..grid_points {
            consider(Array1::from_elem(1, coord(i)));
        }
    } else {
        for i in 0..grid_points {
            for j in 0..grid_points {
                let (a, b) = (coord(i), coord(j));
                if a * a + b * b <= lam * lam {
                    consider(Array1::from_vec(vec![a, b]));
                }
            }
        }
        let k = 4 * (grid_points - 1);
        for t in 0..k {
            let theta = 2.0 * std::f64::consts::PI * t as f64 / k as f64;
            consider(Array1::from_vec(vec![lam * theta.cos(), lam * theta.sin()]));
        }
    }
    Ok(DiscrepancyEstimate {
        d_hat: best.0,
        d_dp: best.0,
        solver: DiscrepancySolver::Grid,
        witness_w: best.1,
    })
}

/// One DCA run on a single sign branch.
#[derive(Debug, Clone)]
pub struct DcaBranch {
    pub w: Array1<f64>,
    pub value: f64,
    /// Branch objective after each iterate, starting with the initial point.
    pub history: Vec<f64>,
}

/// DCA estimate for the squared loss, where it reaches the global optimum.
pub fn discrepancy_dca<R: Rng + ?Sized>(
    data: &AdaptDataset,
    model: &LossModel,
    opts: &DcaOptions,
    rng: &mut R,
) -> Result<DiscrepancyEstimate> {
    if model.kind != LossKind::Squared {
        return Err(AdaptError::UnsupportedLoss(
            "DCA discrepancy estimation requires the squared loss".into(),
        ));
    }
    run_dca(data, model, opts, rng)
}

/// DCA estimate for any convex smooth loss. Without the squared-loss
/// structure the result is a local maximum, i.e. a lower estimate of `d̂`.
pub fn discrepancy_dca_local<R: Rng + ?Sized>(
    data: &AdaptDataset,
    model: &LossModel,
    opts: &DcaOptions,
    rng: &mut R,
) -> Result<DiscrepancyEstimate> {
    run_dca(data, model, opts, rng)
}

fn run_dca<R: Rng + ?Sized>(
    data: &AdaptDataset,
    model: &LossModel,
    opts: &DcaOptions,
    rng: &mut R,
) -> Result<DiscrepancyEstimate> {
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let d = data.dim();
    let lam = model.param_bound;
    let mut starts = vec![Array1::zeros(d)];
    for _ in 0..opts.restarts {
        starts.push(random_sphere_point(d, lam, rng));
    }
    let solver = BranchSolver::new(data, model);
    let mut best: Option<DcaBranch> = None;
    for sign in [1.0, -1.0] {
        for w0 in &starts {
            let run = solver.run(sign, w0.clone(), opts);
            if best.as_ref().is_none_or(|b| run.value > b.value) {
                best = Some(run);
            }
        }
    }
    let best = best.expect("at least one start");
    let d_hat = best.value.clamp(0.0, model.constants().bound);
    Ok(DiscrepancyEstimate {
        d_hat,
        d_dp: d_hat,
        solver: DiscrepancySolver::Dca,
        witness_w: best.w,
    })
}

/// Runs DCA from `w0` on the branch `sign · (mean_priv ℓ − mean_pub ℓ)`.
pub fn dca_branch(
    data: &AdaptDataset,
    model: &LossModel,
    sign: f64,
    w0: Array1<f64>,
    opts: &DcaOptions,
) -> DcaBranch {
    BranchSolver::new(data, model).run(sign, w0, opts)
}

fn random_sphere_point<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v * (radius / norm);
        }
    }
}

/// Second-moment summary of one sample: `mean ℓ_sq(w) = wᵀAw − 2bᵀw + c`.
struct Moments {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl Moments {
    fn of(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Self {
        let d = x.ncols();
        let inv = 1.0 / x.nrows() as f64;
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        let mut c = 0.0;
        for (row, &yi) in x.rows().into_iter().zip(y.iter()) {
            for i in 0..d {
                b[i] += inv * yi * row[i];
                for j in 0..d {
                    a[(i, j)] += inv * row[i] * row[j];
                }
            }
            c += inv * yi * yi;
        }
        Self { a, b, c }
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        (w.transpose() * &self.a * w)[(0, 0)] - 2.0 * self.b.dot(w) + self.c
    }

    fn grad(&self, w: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.a * w - &self.b)
    }
}

/// `min wᵀAw − 2hᵀw` over `‖w‖ ≤ Λ` for PSD `A`, via the eigendecomposition
/// of `A` and bisection on the multiplier of the ball constraint.
struct BallQuadratic {
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    radius: f64,
}

impl BallQuadratic {
    fn new(a: &DMatrix<f64>, radius: f64) -> Self {
        let eig = SymmetricEigen::new(a.clone());
        Self {
            eigvecs: eig.eigenvectors,
            eigvals: eig.eigenvalues.map(|v| v.max(0.0)),
            radius,
        }
    }

    fn solve(&self, h: &DVector<f64>) -> DVector<f64> {
        let coef = self.eigvecs.transpose() * h;
        let scale = self.eigvals.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let norm_at = |nu: f64| -> f64 {
            coef.iter()
                .zip(self.eigvals.iter())
                .map(|(c, l)| {
                    let den = l + nu;
                    if den <= 1e-14 * scale {
                        if c.abs() <= 1e-14 * scale { 0.0 } else { f64::INFINITY }
                    } else {
                        (c / den).powi(2)
                    }
                })
                .sum::<f64>()
                .sqrt()
        };
        let point = |nu: f64| -> DVector<f64> {
            let z = DVector::from_iterator(
                coef.len(),
                coef.iter().zip(self.eigvals.iter()).map(|(c, l)| {
                    let den = l + nu;
                    if den <= 1e-14 * scale { 0.0 } else { c / den }
                }),
            );
            &self.eigvecs * z
        };
        if norm_at(0.0) <= self.radius {
            return point(0.0);
        }
        let mut lo = 0.0;
        let mut hi = h.norm() / self.radius;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > self.radius {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi.max(1e-300) {
                break;
            }
        }
        let mut w = point(hi);
        let norm = w.norm();
        if norm > self.radius {
            w *= self.radius / norm;
        }
        w
    }
}

enum BranchSolver<'a> {
    Squared {
        public: Moments,
        private: Moments,
        pub_solver: BallQuadratic,
        priv_solver: BallQuadratic,
    },
    General {
        data: &'a AdaptDataset,
        model: &'a LossModel,
    },
}

impl<'a> BranchSolver<'a> {
    fn new(data: &'a AdaptDataset, model: &'a LossModel) -> Self {
        match model.kind {
            LossKind::Squared => {
                let public = Moments::of(data.public_x(), data.public_y());
                let private = Moments::of(data.private_x(), data.private_y());
                let pub_solver = BallQuadratic::new(&public.a, model.param_bound);
                let priv_solver = BallQuadratic::new(&private.a, model.param_bound);
                Self::Squared {
                    public,
                    private,
                    pub_solver,
                    priv_solver,
                }
            }
            LossKind::Logistic => Self::General { data, model },
        }
    }

    fn objective(&self, sign: f64, w: &Array1<f64>) -> f64 {
        match self {
            Self::Squared { public, private, .. } => {
                let v = DVector::from_column_slice(w.as_slice().expect("contiguous"));
                sign * (private.value(&v) - public.value(&v))
            }
            Self::General { data, model } => sign * loss_gap(data, *model, w.view()),
        }
    }

    /// Minimizer of the convex surrogate at `w_k`.
    fn step(&self, sign: f64, w_k: &Array1<f64>, opts: &DcaOptions) -> Array1<f64> {
        match self {
            Self::Squared {
                public,
                private,
                pub_solver,
                priv_solver,
            } => {
                let v = DVector::from_column_slice(w_k.as_slice().expect("contiguous"));
                // Keep the sample whose loss enters with a minus sign; linearize the other.
                let (keep, keep_solver, lin) = if sign > 0.0 {
                    (public, pub_solver, private)
                } else {
                    (private, priv_solver, public)
                };
                // min wᵀAw − 2bᵀw − ⟨∇lin(w_k), w⟩  ⇔  h = b + ∇lin(w_k)/2
                let h = &keep.b + lin.grad(&v) * 0.5;
                Array1::from_vec(keep_solver.solve(&h).as_slice().to_vec())
            }
            Self::General { data, model } => {
                let (kx, ky, lx, ly) = if sign > 0.0 {
                    (data.public_x(), data.public_y(), data.private_x(), data.private_y())
                } else {
                    (data.private_x(), data.private_y(), data.public_x(), data.public_y())
                };
                let lin = mean_loss_grad(lx, ly, *model, w_k.view());
                let smooth = model
                    .constants()
                    .smoothness
                    .unwrap_or(2.0 * model.feature_bound.powi(2))
                    .max(1e-12);
                let step = 1.0 / smooth;
                let sub_tol = opts.tol / 10.0;
                let mut w = w_k.clone();
                for _ in 0..opts.max_iter {
                    let g = mean_loss_grad(kx, ky, *model, w.view()) - &lin;
                    let mut next = &w - &(g * step);
                    crate::point::project_ball(&mut next, model.param_bound);
                    let moved = (&next - &w).mapv(|v| v * v).sum().sqrt();
                    w = next;
                    if moved * smooth <= sub_tol {
                        break;
                    }
                }
                w
            }
        }
    }

    fn run(&self, sign: f64, w0: Array1<f64>, opts: &DcaOptions) -> DcaBranch {
        let mut w = w0;
        let mut value = self.objective(sign, &w);
        let mut history = vec![value];
        for _ in 0..opts.max_iter {
            let next = self.step(sign, &w, opts);
            let next_value = self.objective(sign, &next);
            history.push(next_value);
            let change = (next_value - value).abs();
            if next_value >= value {
                w = next;
                value = next_value;
            }
            if change <= opts.tol {
                break;
            }
        }
        DcaBranch { w, value, history }
    }
}
