#![allow(dead_code)]

use dpadapt::point::FeasibleSet;
use dpadapt::{AdaptDataset, FeasiblePoint, LossKind};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Uniform draw from the ball of the given radius.
pub fn ball_point<R: Rng>(d: usize, radius: f64, rng: &mut R) -> Array1<f64> {
    let v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
    let norm = v.dot(&v).sqrt();
    let scale = radius * rng.random::<f64>().powf(1.0 / d as f64) / norm;
    v * scale
}

pub fn label<R: Rng>(kind: LossKind, rng: &mut R) -> f64 {
    match kind {
        LossKind::Squared => rng.random_range(-1.0..=1.0),
        LossKind::Logistic => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    }
}

pub fn sample<R: Rng>(kind: LossKind, count: usize, d: usize, r: f64, rng: &mut R) -> (Array2<f64>, Array1<f64>) {
    let mut x = Array2::zeros((count, d));
    let mut y = Array1::zeros(count);
    for i in 0..count {
        x.row_mut(i).assign(&ball_point(d, r, rng));
        y[i] = label(kind, rng);
    }
    (x, y)
}

/// Two independent samples inside the `r`-ball with admissible labels.
pub fn random_dataset<R: Rng>(kind: LossKind, m: usize, n: usize, d: usize, r: f64, rng: &mut R) -> AdaptDataset {
    let (px, py) = sample(kind, m, d, r, rng);
    let (qx, qy) = sample(kind, n, d, r, rng);
    AdaptDataset::new(px, py, qx, qy).unwrap()
}

/// Feasible point with `‖w‖ ≤ w_radius` and each `u` entry at its lower
/// bound times `1 + spread·U`.
pub fn random_point<R: Rng>(set: &FeasibleSet, w_radius: f64, spread: f64, rng: &mut R) -> FeasiblePoint {
    FeasiblePoint {
        w: ball_point(set.dim, w_radius, rng),
        u_pub: Array1::from_shape_fn(set.m, |_| set.u_pub_min * (1.0 + spread * rng.random::<f64>())),
        u_priv: Array1::from_shape_fn(set.n, |_| set.u_priv_min * (1.0 + spread * rng.random::<f64>())),
    }
}

pub fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Convex combination `(1 − t)a + tb`.
pub fn lerp(a: &FeasiblePoint, b: &FeasiblePoint, t: f64) -> FeasiblePoint {
    FeasiblePoint {
        w: &a.w * (1.0 - t) + &b.w * t,
        u_pub: &a.u_pub * (1.0 - t) + &b.u_pub * t,
        u_priv: &a.u_priv * (1.0 - t) + &b.u_priv * t,
    }
}

/// Central-difference gradient of `f`, one coordinate at a time, with a step
/// relative to each coordinate's magnitude.
pub fn fd_gradient(p: &FeasiblePoint, rel_step: f64, f: impl Fn(&FeasiblePoint) -> f64) -> FeasiblePoint {
    let mut out = FeasiblePoint {
        w: Array1::zeros(p.w.len()),
        u_pub: Array1::zeros(p.u_pub.len()),
        u_priv: Array1::zeros(p.u_priv.len()),
    };
    let mut q = p.clone();
    for i in 0..p.w.len() {
        let h = rel_step * (1.0 + p.w[i].abs());
        q.w[i] = p.w[i] + h;
        let a = f(&q);
        q.w[i] = p.w[i] - h;
        let b = f(&q);
        q.w[i] = p.w[i];
        out.w[i] = (a - b) / (2.0 * h);
    }
    for i in 0..p.u_pub.len() {
        let h = rel_step * p.u_pub[i];
        q.u_pub[i] = p.u_pub[i] + h;
        let a = f(&q);
        q.u_pub[i] = p.u_pub[i] - h;
        let b = f(&q);
        q.u_pub[i] = p.u_pub[i];
        out.u_pub[i] = (a - b) / (2.0 * h);
    }
    for i in 0..p.u_priv.len() {
        let h = rel_step * p.u_priv[i];
        q.u_priv[i] = p.u_priv[i] + h;
        let a = f(&q);
        q.u_priv[i] = p.u_priv[i] - h;
        let b = f(&q);
        q.u_priv[i] = p.u_priv[i];
        out.u_priv[i] = (a - b) / (2.0 * h);
    }
    out
}

/// Largest per-block relative error between two gradients. Blocks are
/// compared separately because their scales differ by orders of magnitude.
pub fn blockwise_relative_error(analytic: &dpadapt::BlockGradient, numeric: &FeasiblePoint) -> f64 {
    let rel = |a: &Array1<f64>, b: &Array1<f64>| {
        let scale = norm(a).max(1e-300);
        norm(&(a - b)) / scale
    };
    rel(&analytic.w, &numeric.w)
        .max(rel(&analytic.u_pub, &numeric.u_pub))
        .max(rel(&analytic.u_priv, &numeric.u_priv))
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the KS statistic at significance 10⁻³.
pub fn ks_critical(n: usize) -> f64 {
    1.949 / (n as f64).sqrt()
}

/// Sample mean and unbiased variance.
pub fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
