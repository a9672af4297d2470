use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dpadapt::data_io::{generate_synthetic, load_dataset, write_dataset_csv, DatasetManifest, SyntheticShiftSpec};
use dpadapt::harness::{emit_results, parse_epsilon, run_sweep, Algorithm, Epsilon, SweepSpec};
use dpadapt::rng::substream;
use dpadapt::{
    discrepancy_dca, discrepancy_grid, fit_convex, fit_nonconvex, AdaptDataset, AdaptError, DcaOptions,
    IterationRule, LossKind, LossModel, PrivacyBudget, RegularizerConfig,
};

#[derive(Parser)]
#[command(name = "dpadapt", version, about = "Differentially private domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the labeled discrepancy between the two domains of a CSV file.
    Discrepancy(DiscrepancyArgs),
    /// Private adaptation with the convex objective (squared loss).
    FitConvex(FitConvexArgs),
    /// Private adaptation with the non-convex objective (logistic loss, labels ±1).
    FitNonconvex(FitNonconvexArgs),
    /// Write a synthetic two-domain dataset as CSV.
    GenSynth(GenSynthArgs),
    /// Run a sweep described by a TOML file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV with header `f0,…,label,domain`.
    #[arg(long)]
    data: PathBuf,
    /// Feature-norm bound r; features are rescaled so the largest norm is r.
    #[arg(long, default_value_t = 1.0)]
    feature_bound: f64,
    /// Parameter-norm bound Λ.
    #[arg(long, default_value_t = 1.0)]
    param_bound: f64,
}

#[derive(Args)]
struct PrivacyArgs {
    /// Total privacy budget, a positive number or `inf`.
    #[arg(long, value_parser = parse_epsilon, default_value = "inf")]
    epsilon: Epsilon,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Share of ε spent on the discrepancy release.
    #[arg(long, default_value_t = 0.5)]
    disc_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DiscrepancyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    privacy: PrivacyArgs,
    /// Use the grid oracle with this many points per axis (d ≤ 2).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
}

#[derive(Args)]
struct FitConvexArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    privacy: PrivacyArgs,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa1: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa2: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa_inf: f64,
    /// Iteration count or `auto`.
    #[arg(long = "T", default_value = "auto")]
    iterations: String,
    #[arg(long, default_value_t = dpadapt::cnvx_adap::DEFAULT_T_CEILING)]
    t_ceiling: usize,
}

#[derive(Args)]
struct FitNonconvexArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    privacy: PrivacyArgs,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_inf: f64,
    /// Softmax sharpness; defaults to √(m + n).
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "T", default_value = "auto")]
    iterations: String,
    #[arg(long, default_value_t = dpadapt::cnvx_adap::DEFAULT_T_CEILING)]
    t_ceiling: usize,
}

#[derive(Args)]
struct GenSynthArgs {
    /// TOML file with the synthetic domain description.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    /// JSON-lines output; a CSV projection is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Run a reference learner instead of the spec's algorithm.
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    TargetOnly,
    TargetOnlyDp,
    MixtureAlpha,
}

impl From<BaselineArg> for Algorithm {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::TargetOnly => Algorithm::TargetOnly,
            BaselineArg::TargetOnlyDp => Algorithm::TargetOnlyDp,
            BaselineArg::MixtureAlpha => Algorithm::MixtureAlpha,
        }
    }
}

fn load(data: &DataArgs, kind: LossKind) -> Result<(AdaptDataset, LossModel)> {
    let model = LossModel::new(kind, data.feature_bound, data.param_bound)?;
    let manifest = DatasetManifest {
        task: kind,
        ..DatasetManifest::new(&data.data, data.feature_bound)
    };
    let loaded = load_dataset(&manifest).with_context(|| format!("loading {}", data.data.display()))?;
    loaded.data.check_geometry(&model)?;
    Ok((loaded.data, model))
}

fn budget(p: &PrivacyArgs) -> Result<PrivacyBudget> {
    Ok(PrivacyBudget::with_split(p.epsilon.0, p.delta, p.disc_fraction)?)
}

fn iteration_rule(raw: &str, ceiling: usize) -> Result<IterationRule> {
    if raw == "auto" {
        return Ok(IterationRule::Auto(ceiling));
    }
    match raw.parse::<usize>() {
        Ok(t) if t > 0 => Ok(IterationRule::Fixed(t)),
        _ => bail!("--T expects a positive integer or `auto`, got `{raw}`"),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn discrepancy(args: &DiscrepancyArgs) -> Result<()> {
    let (data, model) = load(&args.data, LossKind::Squared)?;
    let budget = budget(&args.privacy)?;
    let estimate = match args.grid {
        Some(points) => discrepancy_grid(&data, &model, points)?,
        None => {
            let opts = DcaOptions {
                tol: args.tol,
                restarts: args.restarts,
                ..DcaOptions::default()
            };
            discrepancy_dca(&data, &model, &opts, &mut substream(args.privacy.seed, "discrepancy", &[]))?
        }
    };
    let bound = model.constants().bound;
    let estimate = estimate.privatize(
        bound,
        budget.epsilon_disc(),
        data.n(),
        &mut substream(args.privacy.seed, "discrepancy_release", &[]),
    )?;
    print_json(&estimate)
}

fn fit_convex_cmd(args: &FitConvexArgs) -> Result<()> {
    let (data, model) = load(&args.data, LossKind::Squared)?;
    let reg = RegularizerConfig {
        kappa1: args.kappa1,
        kappa2: args.kappa2,
        kappa_inf: args.kappa_inf,
        ..RegularizerConfig::with_alpha(args.alpha)
    };
    let rule = iteration_rule(&args.iterations, args.t_ceiling)?;
    let out = fit_convex(&data, &model, &budget(&args.privacy)?, &reg, rule, &DcaOptions::default(), args.privacy.seed)?;
    print_json(&out)
}

fn fit_nonconvex_cmd(args: &FitNonconvexArgs) -> Result<()> {
    let (data, model) = load(&args.data, LossKind::Logistic)?;
    let reg = RegularizerConfig {
        lambda1: args.lambda1,
        lambda2: args.lambda2,
        lambda_inf: args.lambda_inf,
        mu: args.mu,
        ..RegularizerConfig::with_alpha(args.alpha)
    };
    let rule = iteration_rule(&args.iterations, args.t_ceiling)?;
    let out = fit_nonconvex(&data, &model, &budget(&args.privacy)?, &reg, rule, &DcaOptions::default(), args.privacy.seed)?;
    print_json(&out)
}

fn gen_synth(args: &GenSynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: SyntheticShiftSpec = toml::from_str(&text)?;
    let generated = generate_synthetic(&spec, args.m, args.n, &mut substream(args.seed, "gen_synth", &[]))?;
    write_dataset_csv(&generated.data, &args.out)?;
    print_json(&generated.hidden)
}

fn sweep(args: &SweepArgs) -> Result<ExitCode> {
    let mut spec = SweepSpec::from_file(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    if let Some(b) = args.baseline {
        spec.algorithm = b.into();
        spec.validate()?;
    }
    match run_sweep(&spec) {
        Ok(result) => {
            let csv = emit_results(&result, &args.out)?;
            eprintln!(
                "wrote {} records to {} and {}",
                result.records.len(),
                args.out.display(),
                csv.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(AdaptError::Sweep(failures)) => {
            for f in &failures {
                eprintln!("error: {f}");
            }
            Ok(ExitCode::FAILURE)
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Discrepancy(a) => discrepancy(a).map(|_| ExitCode::SUCCESS),
        Command::FitConvex(a) => fit_convex_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::FitNonconvex(a) => fit_nonconvex_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::GenSynth(a) => gen_synth(a).map(|_| ExitCode::SUCCESS),
        Command::Sweep(a) => sweep(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
