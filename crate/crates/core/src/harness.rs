//! Experiment sweeps over privacy levels and target sample sizes.
//!
//! Every `(ε, n, trial)` cell resamples the target sample to size `n`, fits
//! the configured method and scores it on a held-out target test set.
//! Randomness is keyed so that reruns are bitwise reproducible:
//!
//! * `("dataset", [trial])` draws the synthetic domains, `("split", [trial])`
//!   the train/test split of a CSV dataset;
//! * `("resample", [n_idx, trial])` resamples the target sample;
//! * `("fit", [n_idx, trial])` seeds the fit. The fit seed is shared by all
//!   privacy levels of the same `(n, trial)` so that the cells of one row
//!   differ only through the noise scale (common random numbers).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::RngCore;
use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_baseline, BaselineKind};
use crate::cnvx_adap::{fit_convex, IterationRule, DEFAULT_T_CEILING};
use crate::config::{PrivacyBudget, RegularizerConfig};
use crate::data_io::{generate_synthetic, load_dataset, resample_target, split_target, DatasetManifest, Domain, SyntheticShiftSpec};
use crate::dataset::AdaptDataset;
use crate::discrepancy::DcaOptions;
use crate::error::{invalid, AdaptError, Result};
use crate::loss::{LossKind, LossModel};
use crate::ncnvx_adap::fit_nonconvex;
use crate::rng::substream;

/// A privacy level; `∞` is the non-private mode. Serialized as a number,
/// or as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon(pub f64);

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Word(String),
        }
        let v = match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Int(v) => v as f64,
            Raw::Word(w) => parse_epsilon(&w).map_err(de::Error::custom)?.0,
        };
        if !(v > 0.0) {
            return Err(de::Error::custom(format!("epsilon must be positive, got {v}")));
        }
        Ok(Epsilon(v))
    }
}

/// Parses a positive real or `inf`.
pub fn parse_epsilon(s: &str) -> std::result::Result<Epsilon, String> {
    let t = s.trim();
    if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") {
        return Ok(Epsilon(f64::INFINITY));
    }
    match t.parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(Epsilon(v)),
        _ => Err(format!("expected a positive number or `inf`, got `{s}`")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cnvx,
    Ncnvx,
    TargetOnly,
    TargetOnlyDp,
    MixtureAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Test MSE divided by that of non-private target-only ERM.
    RelativeMse,
    /// Test accuracy of `sign(w·x)`.
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Fresh synthetic domains per trial: `m` public points, a target pool
    /// that is resampled to each target size, and a target test set.
    Synthetic {
        m: usize,
        target_pool: usize,
        test_size: usize,
        spec: SyntheticShiftSpec,
    },
    /// A CSV file; a fraction of the target rows is held out per trial.
    Csv {
        manifest: DatasetManifest,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default = "one")]
    pub feature_bound: f64,
    #[serde(default = "one")]
    pub param_bound: f64,
}

fn one() -> f64 {
    1.0
}

/// Iteration count: a fixed number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Iterations {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for Iterations {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::Fixed(t) => s.serialize_u64(*t as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Iterations {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(de::Error::custom("iterations must be at least 1")),
            Raw::Count(t) => Ok(Self::Fixed(t as usize)),
            Raw::Word(w) if w == "auto" => Ok(Self::Auto),
            Raw::Word(w) => Err(de::Error::custom(format!("expected an integer or `auto`, got `{w}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub dataset: DatasetSource,
    pub algorithm: Algorithm,
    pub epsilons: Vec<Epsilon>,
    pub target_sizes: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub reg: RegularizerConfig,
    pub metric: Metric,
    pub loss: LossSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_disc_fraction")]
    pub disc_fraction: f64,
    #[serde(default)]
    pub iterations: Iterations,
    #[serde(default = "default_ceiling")]
    pub t_ceiling: usize,
    #[serde(default)]
    pub dca: DcaOptions,
}

fn default_delta() -> f64 {
    0.01
}

fn default_disc_fraction() -> f64 {
    0.5
}

fn default_ceiling() -> usize {
    DEFAULT_T_CEILING
}

impl SweepSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| AdaptError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut spec = Self::from_toml_str(&text)?;
        // Relative CSV paths are resolved against the spec's directory.
        if let DatasetSource::Csv { manifest, .. } = &mut spec.dataset {
            if manifest.path.is_relative() {
                if let Some(dir) = path.parent() {
                    manifest.path = dir.join(&manifest.path);
                }
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.epsilons.is_empty() || self.target_sizes.is_empty() {
            return Err(invalid("grid", "epsilons and target_sizes must be non-empty"));
        }
        if self.target_sizes.contains(&0) {
            return Err(invalid("target_sizes", "sizes must be positive"));
        }
        if self.t_ceiling == 0 {
            return Err(invalid("t_ceiling", "must be positive"));
        }
        self.reg.validate()?;
        PrivacyBudget::with_split(1.0, self.delta, self.disc_fraction)?;
        LossModel::new(self.loss.kind, self.loss.feature_bound, self.loss.param_bound)?;
        if let DatasetSource::Synthetic { m, target_pool, test_size, spec } = &self.dataset {
            spec.validate()?;
            if *m == 0 || *target_pool == 0 || *test_size == 0 {
                return Err(invalid("dataset", "m, target_pool and test_size must be positive"));
            }
        }
        Ok(())
    }

    fn iteration_rule(&self) -> IterationRule {
        match self.iterations {
            Iterations::Auto => IterationRule::Auto(self.t_ceiling),
            Iterations::Fixed(t) => IterationRule::Fixed(t),
        }
    }

    /// Baselines have no automatic rule; `auto` runs them for `t_ceiling` steps.
    fn baseline_iterations(&self) -> usize {
        match self.iterations {
            Iterations::Auto => self.t_ceiling,
            Iterations::Fixed(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub epsilon: Epsilon,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub metric_value: f64,
    pub objective_value: f64,
    pub grad_mapping_norm: Option<f64>,
    pub t_used: usize,
    pub d_hat: Option<f64>,
    pub d_dp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub epsilon: Epsilon,
    pub n: usize,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`ddof = 1`); absent for a single trial.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub master_seed: u64,
    pub trials: usize,
    pub delta: f64,
    pub disc_fraction: f64,
    pub t_ceiling: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Ordered by `(ε, n, trial)` in spec order.
    pub records: Vec<SweepRecord>,
    pub aggregates: Vec<Aggregate>,
    pub metadata: SweepMetadata,
    /// Wall-clock seconds per record; kept out of the JSON records so those
    /// stay reproducible.
    pub wall_times: Vec<f64>,
}

/// Trailing line of the JSON-lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Trailer {
    aggregates: Vec<Aggregate>,
    metadata: SweepMetadata,
}

struct TrialData {
    /// Public sample plus the target pool that gets resampled.
    pool: AdaptDataset,
    test_x: Array2<f64>,
    test_y: Array1<f64>,
}

fn trial_data(spec: &SweepSpec, loaded: Option<&AdaptDataset>, trial: usize) -> Result<TrialData> {
    match &spec.dataset {
        DatasetSource::Synthetic { m, target_pool, test_size, spec: synth } => {
            let mut rng = substream(spec.master_seed, "dataset", &[trial as u64]);
            let generated = generate_synthetic(synth, *m, *target_pool, &mut rng)?;
            let (test_x, test_y, _) = synth.sample_domain(&generated.hidden, Domain::Target, *test_size, &mut rng);
            Ok(TrialData {
                pool: generated.data,
                test_x,
                test_y,
            })
        }
        DatasetSource::Csv { test_fraction, .. } => {
            let data = loaded.expect("csv dataset loaded up front");
            let split = split_target(data, *test_fraction, &mut substream(spec.master_seed, "split", &[trial as u64]))?;
            Ok(TrialData {
                pool: split.train,
                test_x: split.test_x,
                test_y: split.test_y,
            })
        }
    }
}

pub fn mean_squared_error(w: &Array1<f64>, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let r = x.dot(w) - y;
    r.dot(&r) / y.len() as f64
}

pub fn accuracy(w: &Array1<f64>, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let hits = x
        .dot(w)
        .iter()
        .zip(y)
        .filter(|(s, &yi)| (if **s >= 0.0 { 1.0 } else { -1.0 }) == yi)
        .count();
    hits as f64 / y.len() as f64
}

struct CellFit {
    w: Array1<f64>,
    objective_value: f64,
    grad_mapping_norm: Option<f64>,
    t_used: usize,
    d_hat: Option<f64>,
    d_dp: Option<f64>,
}

fn fit_cell(spec: &SweepSpec, model: &LossModel, data: &AdaptDataset, eps: Epsilon, seed: u64) -> Result<CellFit> {
    let budget = PrivacyBudget::with_split(eps.0, spec.delta, spec.disc_fraction)?;
    let outcome = match spec.algorithm {
        Algorithm::Cnvx => fit_convex(data, model, &budget, &spec.reg, spec.iteration_rule(), &spec.dca, seed)?,
        Algorithm::Ncnvx => fit_nonconvex(data, model, &budget, &spec.reg, spec.iteration_rule(), &spec.dca, seed)?,
        Algorithm::TargetOnly | Algorithm::TargetOnlyDp | Algorithm::MixtureAlpha => {
            let kind = match spec.algorithm {
                Algorithm::TargetOnly => BaselineKind::TargetOnly,
                Algorithm::TargetOnlyDp => BaselineKind::TargetOnlyDp,
                _ => BaselineKind::MixtureAlpha { alpha: spec.reg.alpha },
            };
            let fit = fit_baseline(kind, data, model, Some(&budget), spec.baseline_iterations(), &mut substream(seed, "baseline", &[]))?;
            return Ok(CellFit {
                w: fit.w,
                objective_value: fit.objective_value,
                grad_mapping_norm: None,
                t_used: fit.iterations,
                d_hat: None,
                d_dp: None,
            });
        }
    };
    Ok(CellFit {
        w: outcome.result.point.w,
        objective_value: outcome.result.objective_value,
        grad_mapping_norm: outcome.result.grad_mapping_norm,
        t_used: outcome.result.iterations,
        d_hat: Some(outcome.discrepancy.d_hat),
        d_dp: Some(outcome.discrepancy.d_dp),
    })
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let model = LossModel::new(spec.loss.kind, spec.loss.feature_bound, spec.loss.param_bound)?;
    let loaded = match &spec.dataset {
        DatasetSource::Csv { manifest, .. } => Some(load_dataset(manifest)?.data),
        DatasetSource::Synthetic { .. } => None,
    };
    let cell_error = |eps: Epsilon, n: usize, trial: usize| {
        move |e: AdaptError| AdaptError::Cell {
            epsilon: eps.to_string(),
            n,
            trial,
            source: Box::new(e),
        }
    };

    let trials: Vec<TrialData> = (0..spec.trials)
        .into_par_iter()
        .map(|t| trial_data(spec, loaded.as_ref(), t).map_err(cell_error(spec.epsilons[0], spec.target_sizes[0], t)))
        .collect::<Result<_>>()?;

    // Resampled training data and the reference fit for each (n, trial).
    let rows: Vec<(usize, usize)> = (0..spec.target_sizes.len())
        .flat_map(|ni| (0..spec.trials).map(move |t| (ni, t)))
        .collect();
    let prepared: Vec<Result<(AdaptDataset, Option<f64>, u64)>> = rows
        .par_iter()
        .map(|&(ni, t)| {
            let n = spec.target_sizes[ni];
            let td = &trials[t];
            let data = resample_target(&td.pool, n, &mut substream(spec.master_seed, "resample", &[ni as u64, t as u64]))?;
            let reference = match spec.metric {
                Metric::RelativeMse => {
                    let fit = fit_baseline(BaselineKind::TargetOnly, &data, &model, None, spec.baseline_iterations(), &mut substream(spec.master_seed, "reference", &[ni as u64, t as u64]))?;
                    let mse = mean_squared_error(&fit.w, &td.test_x, &td.test_y);
                    if !(mse > 0.0) {
                        return Err(AdaptError::InvalidDataset("target-only test MSE is zero; relative MSE undefined".into()));
                    }
                    Some(mse)
                }
                Metric::Accuracy => None,
            };
            let seed = substream(spec.master_seed, "fit", &[ni as u64, t as u64]).next_u64();
            Ok((data, reference, seed))
        })
        .collect();

    let cells: Vec<(usize, usize, usize)> = (0..spec.epsilons.len())
        .flat_map(|ei| rows.iter().map(move |&(ni, t)| (ei, ni, t)))
        .collect();
    let outputs: Vec<Result<(SweepRecord, f64)>> = cells
        .par_iter()
        .map(|&(ei, ni, t)| {
            let eps = spec.epsilons[ei];
            let n = spec.target_sizes[ni];
            let wrap = cell_error(eps, n, t);
            let (data, reference, seed) = match &prepared[ni * spec.trials + t] {
                Ok(v) => v,
                Err(e) => return Err(wrap(AdaptError::Config(e.to_string()))),
            };
            let td = &trials[t];
            let start = Instant::now();
            let fit = fit_cell(spec, &model, data, eps, *seed).map_err(&wrap)?;
            let metric_value = match (spec.metric, reference) {
                (Metric::RelativeMse, Some(r)) => mean_squared_error(&fit.w, &td.test_x, &td.test_y) / r,
                _ => accuracy(&fit.w, &td.test_x, &td.test_y),
            };
            let record = SweepRecord {
                epsilon: eps,
                n,
                trial: t,
                seed: *seed,
                metric_value,
                objective_value: fit.objective_value,
                grad_mapping_norm: fit.grad_mapping_norm,
                t_used: fit.t_used,
                d_hat: fit.d_hat,
                d_dp: fit.d_dp,
            };
            Ok((record, start.elapsed().as_secs_f64()))
        })
        .collect();

    let mut records = Vec::with_capacity(outputs.len());
    let mut wall_times = Vec::with_capacity(outputs.len());
    let mut failures = Vec::new();
    for out in outputs {
        match out {
            Ok((r, w)) => {
                records.push(r);
                wall_times.push(w);
            }
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(AdaptError::Sweep(failures));
    }
    Ok(SweepResult {
        aggregates: aggregate(&records),
        metadata: metadata(spec),
        records,
        wall_times,
    })
}

fn metadata(spec: &SweepSpec) -> SweepMetadata {
    let mut notes = vec![
        "hyperparameters are fixed configuration; no privacy-consuming tuning is performed".to_string(),
        "privacy levels of one (n, trial) share data and fit seed (common random numbers)".to_string(),
    ];
    if spec.metric == Metric::RelativeMse {
        notes.push(format!(
            "relative MSE is normalized by non-private target-only ERM run for {} iterations",
            spec.baseline_iterations()
        ));
    }
    SweepMetadata {
        algorithm: spec.algorithm,
        metric: spec.metric,
        master_seed: spec.master_seed,
        trials: spec.trials,
        delta: spec.delta,
        disc_fraction: spec.disc_fraction,
        t_ceiling: spec.t_ceiling,
        notes,
    }
}

/// Mean and sample standard deviation per `(ε, n)`, in first-seen order.
pub fn aggregate(records: &[SweepRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(Epsilon, usize)> = Vec::new();
    for r in records {
        if !keys.iter().any(|k| k.0 == r.epsilon && k.1 == r.n) {
            keys.push((r.epsilon, r.n));
        }
    }
    keys.into_iter()
        .map(|(epsilon, n)| {
            let values: Vec<f64> = records.iter().filter(|r| r.epsilon == epsilon && r.n == n).map(|r| r.metric_value).collect();
            let (mean, std) = mean_std(&values);
            Aggregate {
                epsilon,
                n,
                count: values.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Mean and `ddof = 1` standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, Some(var.sqrt()))
}

/// Writes the JSON-lines file and its CSV projection next to it
/// (same path with extension `csv`). Returns the CSV path.
pub fn emit_results(result: &SweepResult, path: &Path) -> Result<PathBuf> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in &result.records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    let trailer = Trailer {
        aggregates: result.aggregates.clone(),
        metadata: result.metadata.clone(),
    };
    serde_json::to_writer(&mut out, &trailer)?;
    out.write_all(b"\n")?;
    out.flush()?;

    let csv_path = path.with_extension("csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["epsilon", "n", "trial", "seed", "metric_value", "objective_value", "grad_mapping_norm", "t_used", "d_hat", "d_dp", "wall_time"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, r) in result.records.iter().enumerate() {
        let wall = result.wall_times.get(i).map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.epsilon.to_string(),
            r.n.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.metric_value.to_string(),
            r.objective_value.to_string(),
            opt(r.grad_mapping_norm),
            r.t_used.to_string(),
            opt(r.d_hat),
            opt(r.d_dp),
            wall,
        ])?;
    }
    w.flush()?;
    Ok(csv_path)
}

/// Parses a file written by [`emit_results`]. Wall times are not stored in
/// the JSON-lines file and come back empty.
pub fn read_results(path: &Path) -> Result<SweepResult> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut trailer: Option<Trailer> = None;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if trailer.is_some() {
            return Err(AdaptError::Config("content after the aggregate line".into()));
        }
        let value: serde_json::Value = serde_json::from_str(&line)?;
        if value.get("aggregates").is_some() {
            trailer = Some(serde_json::from_value(value)?);
        } else {
            records.push(serde_json::from_value(value)?);
        }
    }
    let trailer = trailer.ok_or_else(|| AdaptError::Config("missing aggregate line".into()))?;
    Ok(SweepResult {
        records,
        aggregates: trailer.aggregates,
        metadata: trailer.metadata,
        wall_times: Vec::new(),
    })
}
