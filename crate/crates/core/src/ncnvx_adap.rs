//! Private adaptation on the non-convex objective: noisy projected gradient
//! descent with step `1/β̄` on every block, returning a uniformly drawn
//! iterate.

use rand::Rng;

use crate::cnvx_adap::{noisy_step, AdaptationResult, FitOutcome, IterationRule, StepSizes};
use crate::config::{PrivacyBudget, RegularizerConfig};
use crate::dataset::AdaptDataset;
use crate::discrepancy::{discrepancy_dca_local, DcaOptions};
use crate::error::{invalid, Result};
use crate::loss::{Loss, LossModel};
use crate::mechanisms::calibrate_budget;
use crate::nonconvex_objective::NonConvexObjective;
use crate::point::{BlockGradient, FeasiblePoint};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NonConvexRunConfig {
    pub iterations: usize,
    /// Starting point; `None` means `w = 0` with `u` at its lower bounds.
    pub init: Option<FeasiblePoint>,
    /// Record the objective every this many iterations (0 disables).
    pub trace_every: usize,
}

impl NonConvexRunConfig {
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations,
            ..Self::default()
        }
    }
}

/// Runs the descent. The output index `t*` is drawn from `rng` after the
/// trajectory; the trajectory is then replayed from a copy of the initial
/// stream state up to `t*`, so no iterates are stored.
pub fn run_ncnvx_adap<L: Loss, R: Rng + Clone>(
    ctx: &NonConvexObjective<'_, L>,
    budget: &PrivacyBudget,
    run: &NonConvexRunConfig,
    rng: &mut R,
) -> Result<AdaptationResult> {
    budget.validate()?;
    let set = *ctx.feasible_set();
    let c = ctx.loss().constants();
    let noise = calibrate_budget(budget, ctx.reg().alpha, c.lipschitz, c.bound, set.n, run.iterations)?;
    let eta = 1.0 / ctx.beta_bar();
    let steps = StepSizes {
        w: eta,
        u_pub: eta,
        u_priv: eta,
    };
    let init = match &run.init {
        Some(p) => {
            set.check(p)?;
            p.clone()
        }
        None => set.reference_point(),
    };

    let replay = rng.clone();
    let mut p = init.clone();
    let mut g = BlockGradient::zeros(set.dim, set.m, set.n);
    let mut trajectory = Vec::new();
    for t in 1..=run.iterations {
        ctx.grad_into(&p, &mut g);
        noisy_step(&mut p, &mut g, &steps, &noise, &set, rng);
        if run.trace_every > 0 && t % run.trace_every == 0 {
            trajectory.push((t, ctx.eval_unchecked(&p)));
        }
    }
    let t_star = rng.random_range(1..=run.iterations);
    if t_star < run.iterations {
        let mut replay = replay;
        p = init;
        for _ in 0..t_star {
            ctx.grad_into(&p, &mut g);
            noisy_step(&mut p, &mut g, &steps, &noise, &set, &mut replay);
        }
    }
    let gm = ctx.gradient_mapping_norm(&p, ctx.beta_bar())?;
    Ok(AdaptationResult {
        objective_value: ctx.eval_unchecked(&p),
        point: p,
        trajectory,
        privacy_spent: (budget.epsilon_opt(), budget.delta),
        iterations: run.iterations,
        noise,
        steps,
        output_index: Some(t_star),
        grad_mapping_norm: Some(gm),
    })
}

/// `√(β̄M)·ε·n^{3/2} / ((1−α)√(ln(2/δ))·√(40G²dn + (1−α)²B²))`, rounded to
/// the nearest integer, at least 1 and at most `ceiling`.
#[allow(clippy::too_many_arguments)]
pub fn default_t_nonconvex(
    n: usize,
    d: usize,
    alpha: f64,
    epsilon_opt: f64,
    delta: f64,
    lipschitz: f64,
    bound: f64,
    beta_bar: f64,
    objective_bound: f64,
    ceiling: usize,
) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if !(epsilon_opt > 0.0) {
        return Err(invalid("epsilon_opt", "must be positive"));
    }
    if n == 0 || d == 0 || ceiling == 0 {
        return Err(invalid("sizes", "n, d and the ceiling must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    let t = nonconvex_t_value(n, d, alpha, epsilon_opt, delta, lipschitz, bound, beta_bar, objective_bound);
    Ok(if t >= ceiling as f64 { ceiling } else { (t.round() as usize).max(1) })
}

/// The unrounded iteration count of [`default_t_nonconvex`].
#[allow(clippy::too_many_arguments)]
pub fn nonconvex_t_value(
    n: usize,
    d: usize,
    alpha: f64,
    epsilon_opt: f64,
    delta: f64,
    lipschitz: f64,
    bound: f64,
    beta_bar: f64,
    objective_bound: f64,
) -> f64 {
    let nf = n as f64;
    let b = 1.0 - alpha;
    (beta_bar * objective_bound).sqrt() * epsilon_opt * nf.powf(1.5)
        / (b * (2.0 / delta).ln().sqrt() * (40.0 * lipschitz * lipschitz * d as f64 * nf + b * b * bound * bound).sqrt())
}

/// Full non-convex pipeline: local DCA discrepancy estimate, Laplace release
/// with `ε_disc`, then the noisy descent with `ε_opt`.
pub fn fit_nonconvex(
    data: &AdaptDataset,
    model: &LossModel,
    budget: &PrivacyBudget,
    reg: &RegularizerConfig,
    rule: IterationRule,
    dca: &DcaOptions,
    seed: u64,
) -> Result<FitOutcome> {
    budget.validate()?;
    reg.validate()?;
    data.check_geometry(model)?;
    let c = model.derive_constants()?;
    let estimate = discrepancy_dca_local(data, model, dca, &mut substream(seed, "discrepancy", &[]))?;
    let estimate = estimate.privatize(c.bound, budget.epsilon_disc(), data.n(), &mut substream(seed, "discrepancy_release", &[]))?;
    let ctx = NonConvexObjective::new(data, estimate.d_dp, *reg, *model)?;
    let iterations = match rule {
        IterationRule::Fixed(t) => t,
        IterationRule::Auto(ceiling) => default_t_nonconvex(
            data.n(),
            data.dim(),
            reg.alpha,
            budget.epsilon_opt(),
            budget.delta,
            c.lipschitz,
            c.bound,
            ctx.beta_bar(),
            ctx.objective_bound(),
            ceiling,
        )?,
    };
    let mut result = run_ncnvx_adap(&ctx, budget, &NonConvexRunConfig::new(iterations), &mut substream(seed, "ncnvx_adap", &[]))?;
    result.privacy_spent = (budget.epsilon_total, budget.delta);
    Ok(FitOutcome {
        discrepancy: estimate,
        result,
    })
}
