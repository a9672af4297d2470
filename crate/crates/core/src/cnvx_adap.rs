//! Private adaptation on the convex objective: noisy projected gradient
//! descent with per-block step sizes and iterate averaging.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{PrivacyBudget, RegularizerConfig};
use crate::convex_objective::ConvexObjective;
use crate::dataset::AdaptDataset;
use crate::discrepancy::{discrepancy_dca, DcaOptions, DiscrepancyEstimate};
use crate::error::{invalid, Result};
use crate::loss::LossModel;
use crate::mechanisms::{add_gaussian, calibrate_budget, NoiseSchedule};
use crate::point::{BlockGradient, FeasiblePoint, FeasibleSet};
use crate::rng::substream;

/// Default cap on the iteration count chosen by the automatic rules.
pub const DEFAULT_T_CEILING: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub w: f64,
    pub u_pub: f64,
    pub u_priv: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexRunConfig {
    pub iterations: usize,
    /// Overrides of the default step sizes.
    pub steps: Option<StepSizes>,
    /// Starting point; `None` means `w = 0` with `u` at its lower bounds.
    pub init: Option<FeasiblePoint>,
    /// Record the objective every this many iterations (0 disables).
    pub trace_every: usize,
}

impl ConvexRunConfig {
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationResult {
    pub point: FeasiblePoint,
    pub objective_value: f64,
    /// `(iteration, objective)` samples when tracing is enabled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<(usize, f64)>,
    /// `(ε, δ)` consumed by the procedure that produced this result.
    pub privacy_spent: (f64, f64),
    pub iterations: usize,
    pub noise: NoiseSchedule,
    pub steps: StepSizes,
    /// Selected iterate (1-based) for methods that return a single iterate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_index: Option<usize>,
    /// Gradient-mapping norm at the returned point, when defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_mapping_norm: Option<f64>,
}

/// Step sizes `η_w = Λ/√(T(G² + dσ₁²))`,
/// `η_pub = m^{3/2}/(√T α²(B + B̄))`,
/// `η_priv = n^{3/2}/√(T((1 − α)⁴B̄² + n⁴σ₂²))`.
pub fn default_steps(ctx: &ConvexObjective<'_>, noise: &NoiseSchedule) -> StepSizes {
    let c = ctx.model().constants();
    let set = ctx.feasible_set();
    let t = noise.iterations as f64;
    let a = ctx.reg().alpha;
    let b_bar = ctx.b_bar();
    let (m, n, d) = (set.m as f64, set.n as f64, set.dim as f64);
    StepSizes {
        w: set.param_bound / (t * (c.lipschitz.powi(2) + d * noise.sigma1.powi(2))).sqrt(),
        u_pub: m.powf(1.5) / (t.sqrt() * a * a * (c.bound + b_bar)),
        u_priv: n.powf(1.5) / (t * ((1.0 - a).powi(4) * b_bar * b_bar + n.powi(4) * noise.sigma2.powi(2))).sqrt(),
    }
}

/// One noisy projected step from `p` along `g`: Gaussian noise `σ₁` on the
/// `w`-block, none on the public block, `σ₂` on the private block.
pub(crate) fn noisy_step<R: Rng + ?Sized>(
    p: &mut FeasiblePoint,
    g: &mut BlockGradient,
    steps: &StepSizes,
    noise: &NoiseSchedule,
    set: &FeasibleSet,
    rng: &mut R,
) {
    add_gaussian(&mut g.w, noise.sigma1, rng);
    add_gaussian(&mut g.u_priv, noise.sigma2, rng);
    p.w.scaled_add(-steps.w, &g.w);
    p.u_pub.scaled_add(-steps.u_pub, &g.u_pub);
    p.u_priv.scaled_add(-steps.u_priv, &g.u_priv);
    set.project_in_place(p);
}

fn checked_init(set: &FeasibleSet, init: &Option<FeasiblePoint>) -> Result<FeasiblePoint> {
    match init {
        Some(p) => {
            set.check(p)?;
            Ok(p.clone())
        }
        None => Ok(set.reference_point()),
    }
}

pub fn run_cnvx_adap<R: Rng + ?Sized>(
    ctx: &ConvexObjective<'_>,
    budget: &PrivacyBudget,
    run: &ConvexRunConfig,
    rng: &mut R,
) -> Result<AdaptationResult> {
    budget.validate()?;
    let set = *ctx.feasible_set();
    let c = ctx.model().constants();
    let noise = calibrate_budget(budget, ctx.reg().alpha, c.lipschitz, c.bound, set.n, run.iterations)?;
    let steps = run.steps.unwrap_or_else(|| default_steps(ctx, &noise));
    let mut p = checked_init(&set, &run.init)?;

    let mut sum = FeasiblePoint {
        w: Array1::zeros(set.dim),
        u_pub: Array1::zeros(set.m),
        u_priv: Array1::zeros(set.n),
    };
    let mut g = BlockGradient::zeros(set.dim, set.m, set.n);
    let mut trajectory = Vec::new();
    for t in 1..=run.iterations {
        ctx.grad_into(&p, &mut g);
        noisy_step(&mut p, &mut g, &steps, &noise, &set, rng);
        sum.w += &p.w;
        sum.u_pub += &p.u_pub;
        sum.u_priv += &p.u_priv;
        if run.trace_every > 0 && t % run.trace_every == 0 {
            trajectory.push((t, ctx.eval_unchecked(&p)));
        }
    }
    let inv = 1.0 / run.iterations as f64;
    let avg = set.project(FeasiblePoint {
        w: sum.w * inv,
        u_pub: sum.u_pub * inv,
        u_priv: sum.u_priv * inv,
    });
    Ok(AdaptationResult {
        objective_value: ctx.eval_unchecked(&avg),
        point: avg,
        trajectory,
        privacy_spent: (budget.epsilon_opt(), budget.delta),
        iterations: run.iterations,
        noise,
        steps,
        output_index: None,
        grad_mapping_norm: None,
    })
}

/// Smallest integer above
/// `max(1, n²ε²/(d(1−α)² ln(1/δ)), B̄²ε²/(B² ln(1/δ)), ε²B̄²n³/(ln(1/δ) B² m³))`,
/// capped at `ceiling`.
#[allow(clippy::too_many_arguments)]
pub fn default_t_convex(
    n: usize,
    m: usize,
    d: usize,
    alpha: f64,
    epsilon_opt: f64,
    delta: f64,
    bound: f64,
    b_bar: f64,
    ceiling: usize,
) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if !(epsilon_opt > 0.0) {
        return Err(invalid("epsilon_opt", "must be positive"));
    }
    if n == 0 || m == 0 || d == 0 || ceiling == 0 {
        return Err(invalid("sizes", "n, m, d and the ceiling must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(bound > 0.0) || !(b_bar >= bound) {
        return Err(invalid("constants", "need α in (0, 1) and B̄ ≥ B > 0"));
    }
    let log_term = (1.0 / delta).ln();
    let (nf, mf) = (n as f64, m as f64);
    let e2 = epsilon_opt * epsilon_opt;
    let ratio = (b_bar / bound).powi(2);
    let terms = [
        1.0,
        nf * nf * e2 / (d as f64 * (1.0 - alpha).powi(2) * log_term),
        ratio * e2 / log_term,
        e2 * ratio * nf.powi(3) / (log_term * mf.powi(3)),
    ];
    let t = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(if t >= ceiling as f64 { ceiling } else { t.ceil() as usize })
}

/// How the iteration count of a fit is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationRule {
    Fixed(usize),
    /// The automatic rule, capped at the given ceiling.
    Auto(usize),
}

impl Default for IterationRule {
    fn default() -> Self {
        Self::Auto(DEFAULT_T_CEILING)
    }
}

/// Discrepancy release followed by the private optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub discrepancy: DiscrepancyEstimate,
    pub result: AdaptationResult,
}

/// Full convex pipeline: DCA discrepancy estimate, Laplace release with
/// `ε_disc`, then the noisy descent with `ε_opt`. Randomness is drawn from
/// substreams of `seed`.
pub fn fit_convex(
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
    let estimate = discrepancy_dca(data, model, dca, &mut substream(seed, "discrepancy", &[]))?;
    let estimate = estimate.privatize(c.bound, budget.epsilon_disc(), data.n(), &mut substream(seed, "discrepancy_release", &[]))?;
    let ctx = ConvexObjective::new(data, estimate.d_dp, *reg, *model)?;
    let iterations = match rule {
        IterationRule::Fixed(t) => t,
        IterationRule::Auto(ceiling) => default_t_convex(
            data.n(),
            data.m(),
            data.dim(),
            reg.alpha,
            budget.epsilon_opt(),
            budget.delta,
            c.bound,
            ctx.b_bar(),
            ceiling,
        )?,
    };
    let mut result = run_cnvx_adap(&ctx, budget, &ConvexRunConfig::new(iterations), &mut substream(seed, "cnvx_adap", &[]))?;
    result.privacy_spent = (budget.epsilon_total, budget.delta);
    Ok(FitOutcome {
        discrepancy: estimate,
        result,
    })
}
