use dpadapt::loss::softplus;
use dpadapt::nonconvex_objective::softmax_inverse;
use dpadapt::rng::{substream, StreamRng};
use dpadapt::{AdaptDataset, LossKind, LossModel, NonConvexObjective, RegularizerConfig};
use ndarray::Array1;
use rand::Rng;

mod common;
use common::{blockwise_relative_error, fd_gradient, norm, random_dataset, random_point, sample};

fn random_reg(bound: f64, rng: &mut StreamRng) -> RegularizerConfig {
    RegularizerConfig {
        lambda1: rng.random_range(0.0..2.0 * bound),
        lambda2: rng.random_range(0.0..2.0),
        lambda_inf: rng.random_range(0.0..2.0),
        ..RegularizerConfig::with_alpha(rng.random_range(0.1..0.9))
    }
}

fn instance(rng: &mut StreamRng, max_size: usize) -> (AdaptDataset, LossModel, RegularizerConfig, f64) {
    let model = LossModel::logistic(1.0, 1.0).unwrap();
    let b = model.constants().bound;
    let data = random_dataset(
        LossKind::Logistic,
        rng.random_range(1..max_size),
        rng.random_range(1..max_size),
        rng.random_range(1..4),
        1.0,
        rng,
    );
    let reg = random_reg(b, rng);
    let d_dp = rng.random_range(0.0..b);
    (data, model, reg, d_dp)
}

fn gradient_distance(a: &dpadapt::BlockGradient, b: &dpadapt::BlockGradient) -> f64 {
    let sq = |x: &Array1<f64>, y: &Array1<f64>| (x - y).mapv(|v| v * v).sum();
    (sq(&a.w, &b.w) + sq(&a.u_pub, &b.u_pub) + sq(&a.u_priv, &b.u_priv)).sqrt()
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = substream(31, "nonconvex-fd", &[]);
    for k in 0..200 {
        let (data, model, mut reg, d_dp) = instance(&mut rng, 8);
        if k % 2 == 0 {
            reg.mu = Some(rng.random_range(0.5..20.0));
        }
        let obj = NonConvexObjective::new(&data, d_dp, reg, model).unwrap();
        let p = random_point(obj.feasible_set(), 0.9, 2.0, &mut rng);
        let g = obj.grad(&p).unwrap();
        let fd = fd_gradient(&p, 1e-6, |q| obj.eval(q).unwrap());
        let err = blockwise_relative_error(&g, &fd);
        assert!(err <= 1e-5, "relative error {err}");
    }
}

#[test]
fn gradient_is_beta_bar_lipschitz() {
    let mut rng = substream(32, "nonconvex-smooth", &[]);
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let (data, model, reg, d_dp) = instance(&mut rng, 30);
        let obj = NonConvexObjective::new(&data, d_dp, reg, model).unwrap();
        // Points near the lower bounds carry the most curvature.
        let spread = [0.0, 0.01, 0.1, 1.0][k % 4];
        let a = random_point(obj.feasible_set(), 1.0, spread, &mut rng);
        let b = if k % 3 == 0 {
            let mut b = a.clone();
            b.w.mapv_inplace(|v| v + 1e-3 * rng.random_range(-1.0..1.0));
            b.u_pub.mapv_inplace(|u| u * (1.0 + 1e-3 * rng.random::<f64>()));
            b.u_priv.mapv_inplace(|u| u * (1.0 + 1e-3 * rng.random::<f64>()));
            obj.feasible_set().project(b)
        } else {
            random_point(obj.feasible_set(), 1.0, spread, &mut rng)
        };
        let dist = a.distance(&b);
        if dist == 0.0 {
            continue;
        }
        let lhs = gradient_distance(&obj.grad(&a).unwrap(), &obj.grad(&b).unwrap());
        let ratio = lhs / (obj.beta_bar() * dist);
        worst = worst.max(ratio);
        assert!(ratio <= 1.0, "smoothness violated: ratio {ratio}");
    }
    assert!(worst > 0.0);
}

#[test]
fn softmax_brackets_maximum() {
    let mut rng = substream(33, "softmax", &[]);
    for _ in 0..10_000 {
        let (m, n) = (rng.random_range(1..50), rng.random_range(1..50));
        let set = dpadapt::FeasibleSet::new(1.0, rng.random_range(0.05..0.95), 1, m, n);
        let p = random_point(&set, 1.0, rng.random_range(0.0..5.0), &mut rng);
        let mu = [1.0, ((m + n) as f64).sqrt(), 100.0, 1e6][rng.random_range(0..4)];
        let top = p.u_pub.iter().chain(&p.u_priv).map(|u| 1.0 / u).fold(0.0, f64::max);
        let gap = softmax_inverse(&p, mu) - top;
        assert!(gap >= -1e-15 && gap <= ((m + n) as f64).ln() / mu + 1e-15, "gap {gap} at μ={mu}");
    }
}

#[test]
fn gradient_norms_within_effective_bounds() {
    let mut rng = substream(34, "nonconvex-bounds", &[]);
    for _ in 0..200 {
        let (data, model, reg, d_dp) = instance(&mut rng, 12);
        let obj = NonConvexObjective::new(&data, d_dp, reg, model).unwrap();
        let c = model.constants();
        // The logistic loss reaches log(1 + e^{rΛ}) > B on the feasible set.
        let b_eff = softplus(model.feature_bound * model.param_bound);
        let b_bar = reg.b_bar_nonconvex(b_eff);
        let set = *obj.feasible_set();
        let (a, m, n) = (reg.alpha, set.m as f64, set.n as f64);
        for _ in 0..50 {
            let p = random_point(&set, 1.0, 1.0, &mut rng);
            let g = obj.grad(&p).unwrap();
            assert!(norm(&g.w) <= c.lipschitz * (1.0 + 1e-12));
            assert!(norm(&g.u_pub) <= a * a * (b_eff + b_bar) / m.powf(1.5) * (1.0 + 1e-12));
            assert!(norm(&g.u_priv) <= (1.0 - a).powi(2) * (b_eff + b_bar) / n.powf(1.5) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn private_gradient_sensitivity() {
    let mut rng = substream(35, "nonconvex-sens", &[]);
    for _ in 0..300 {
        let (data, model, reg, d_dp) = instance(&mut rng, 10);
        let (n, d) = (data.n(), data.dim());
        let mut qx = data.private_x().to_owned();
        let mut qy = data.private_y().to_owned();
        let i = rng.random_range(0..n);
        let (x, y) = sample(LossKind::Logistic, 1, d, 1.0, &mut rng);
        qx.row_mut(i).assign(&x.row(0));
        qy[i] = y[0];
        let neighbor = data.with_private(qx, qy).unwrap();
        let a = NonConvexObjective::new(&data, d_dp, reg, model).unwrap();
        let b = NonConvexObjective::new(&neighbor, d_dp, reg, model).unwrap();
        let c = model.constants();
        let nf = n as f64;
        let alpha_c = 1.0 - reg.alpha;
        for _ in 0..10 {
            let p = random_point(a.feasible_set(), 1.0, 1.0, &mut rng);
            let (gw_a, gu_a) = a.private_loss_gradients(&p).unwrap();
            let (gw_b, gu_b) = b.private_loss_gradients(&p).unwrap();
            assert!(norm(&(&gw_a - &gw_b)) <= 2.0 * alpha_c * c.lipschitz / nf * (1.0 + 1e-12));
            assert!(norm(&(&gu_a - &gu_b)) <= alpha_c * alpha_c * c.bound / (nf * nf) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn gradient_mapping_is_positive_off_stationarity() {
    let mut rng = substream(36, "mapping", &[]);
    let (data, model, reg, d_dp) = instance(&mut rng, 10);
    let obj = NonConvexObjective::new(&data, d_dp, reg, model).unwrap();
    let p = random_point(obj.feasible_set(), 0.5, 1.0, &mut rng);
    let gm = obj.gradient_mapping_norm(&p, obj.beta_bar()).unwrap();
    assert!(gm > 0.0);
    assert!(obj.gradient_mapping_norm(&p, 0.0).is_err());
}

#[test]
fn squared_loss_is_rejected() {
    let mut rng = substream(37, "reject", &[]);
    let data = random_dataset(LossKind::Squared, 3, 3, 2, 1.0, &mut rng);
    let model = LossModel::squared(1.0, 1.0).unwrap();
    assert!(NonConvexObjective::new(&data, 0.0, RegularizerConfig::default(), model).is_err());
}
