//! Dataset ingestion, target resampling and synthetic domain-shift data.
//!
//! CSV files carry a header; every row is one example whose domain column
//! reads `source` (public sample) or `target` (private sample).

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::AdaptDataset;
use crate::error::{invalid, AdaptError, Result};
use crate::loss::LossKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub path: PathBuf,
    /// Feature columns in order; empty means every column other than the
    /// label and domain columns, in header order.
    #[serde(default)]
    pub feature_columns: Vec<String>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default = "default_domain_column")]
    pub domain_column: String,
    /// Feature-norm bound after rescaling.
    #[serde(default = "default_r_target")]
    pub r_target: f64,
    /// Regression labels are clipped to `[−1, 1]`; classification labels are
    /// left as read.
    #[serde(default = "default_task")]
    pub task: LossKind,
}

fn default_label_column() -> String {
    "label".into()
}

fn default_domain_column() -> String {
    "domain".into()
}

fn default_r_target() -> f64 {
    1.0
}

fn default_task() -> LossKind {
    LossKind::Squared
}

impl DatasetManifest {
    pub fn new(path: impl Into<PathBuf>, r_target: f64) -> Self {
        Self {
            path: path.into(),
            feature_columns: Vec::new(),
            label_column: default_label_column(),
            domain_column: default_domain_column(),
            r_target,
            task: default_task(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub data: AdaptDataset,
    /// Global factor applied to every feature vector.
    pub scale: f64,
    /// Number of regression labels clipped into `[−1, 1]`.
    pub clipped_labels: usize,
}

pub fn load_dataset(manifest: &DatasetManifest) -> Result<LoadedDataset> {
    if !(manifest.r_target > 0.0 && manifest.r_target.is_finite()) {
        return Err(invalid("r_target", "must be positive"));
    }
    let mut reader = csv::Reader::from_path(&manifest.path)?;
    let header = reader.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AdaptError::InvalidDataset(format!("missing column `{name}`")))
    };
    let label_idx = position(&manifest.label_column)?;
    let domain_idx = position(&manifest.domain_column)?;
    let feature_idx: Vec<usize> = if manifest.feature_columns.is_empty() {
        (0..header.len()).filter(|&i| i != label_idx && i != domain_idx).collect()
    } else {
        manifest.feature_columns.iter().map(|c| position(c)).collect::<Result<_>>()?
    };
    if feature_idx.is_empty() {
        return Err(AdaptError::InvalidDataset("no feature columns".into()));
    }

    let d = feature_idx.len();
    let (mut src_x, mut src_y, mut tgt_x, mut tgt_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| {
                AdaptError::InvalidDataset(format!("row {}: non-numeric value `{raw}` in column `{}`", line + 2, &header[i]))
            })
        };
        let features = feature_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?;
        let label = cell(label_idx)?;
        match record.get(domain_idx).map(str::trim) {
            Some("source") => {
                src_x.extend(features);
                src_y.push(label);
            }
            Some("target") => {
                tgt_x.extend(features);
                tgt_y.push(label);
            }
            other => {
                return Err(AdaptError::InvalidDataset(format!(
                    "row {}: domain `{}` is neither `source` nor `target`",
                    line + 2,
                    other.unwrap_or("")
                )))
            }
        }
    }
    if src_y.is_empty() || tgt_y.is_empty() {
        return Err(AdaptError::InvalidDataset("a domain has no rows".into()));
    }

    let mut clipped = 0;
    if manifest.task == LossKind::Squared {
        for y in src_y.iter_mut().chain(tgt_y.iter_mut()) {
            if y.abs() > 1.0 {
                *y = y.clamp(-1.0, 1.0);
                clipped += 1;
            }
        }
        if clipped > 0 {
            log::warn!("clipped {clipped} regression label(s) into [-1, 1]");
        }
    }
    let mut public_x = Array2::from_shape_vec((src_y.len(), d), src_x).expect("row-major features");
    let mut private_x = Array2::from_shape_vec((tgt_y.len(), d), tgt_x).expect("row-major features");
    let max_norm = public_x
        .rows()
        .into_iter()
        .chain(private_x.rows())
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max);
    let scale = if max_norm > 0.0 { manifest.r_target / max_norm } else { 1.0 };
    public_x.mapv_inplace(|v| v * scale);
    private_x.mapv_inplace(|v| v * scale);
    let data = AdaptDataset::new(public_x, Array1::from(src_y), private_x, Array1::from(tgt_y))?;
    Ok(LoadedDataset {
        data,
        scale,
        clipped_labels: clipped,
    })
}

/// Writes `f0,…,f{d−1},label,domain` with the public rows first.
pub fn write_dataset_csv(data: &AdaptDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.dim()).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    header.push("domain".into());
    writer.write_record(&header)?;
    let blocks = [
        (data.public_x(), data.public_y(), "source"),
        (data.private_x(), data.private_y(), "target"),
    ];
    for (x, y, domain) in blocks {
        for (row, label) in x.rows().into_iter().zip(y) {
            let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            fields.push(label.to_string());
            fields.push(domain.into());
            writer.write_record(&fields)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// New private sample of size `n_new`, drawn uniformly with replacement from
/// the current one; each draw counts as a distinct individual.
pub fn resample_target<R: Rng + ?Sized>(data: &AdaptDataset, n_new: usize, rng: &mut R) -> Result<AdaptDataset> {
    if n_new == 0 {
        return Err(invalid("n_new", "must be at least 1"));
    }
    let n = data.n();
    let idx: Vec<usize> = (0..n_new).map(|_| rng.random_range(0..n)).collect();
    let x = data.private_x().select(Axis(0), &idx);
    let y = data.private_y().select(Axis(0), &idx);
    data.with_private(x, y)
}

/// Held-out examples of the target domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSplit {
    pub train: AdaptDataset,
    pub test_x: Array2<f64>,
    pub test_y: Array1<f64>,
}

/// Moves a random `test_fraction` of the private rows into a test set.
pub fn split_target<R: Rng + ?Sized>(data: &AdaptDataset, test_fraction: f64, rng: &mut R) -> Result<TargetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid("test_fraction", "must lie in (0, 1)"));
    }
    let n = data.n();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(AdaptError::InvalidDataset(format!(
            "cannot split {n} target rows with test fraction {test_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (test, train) = idx.split_at(n_test);
    Ok(TargetSplit {
        train: data.with_private(data.private_x().select(Axis(0), train), data.private_y().select(Axis(0), train))?,
        test_x: data.private_x().select(Axis(0), test),
        test_y: data.private_y().select(Axis(0), test),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    LinearRegression,
    LinearClassification,
}

/// Two domains over the radius-`r` ball. Each point is drawn from a
/// Gaussian with the domain's Gaussian fraction as probability, otherwise
/// uniformly from the ball. Gaussian draws outside the ball are projected
/// onto its boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShiftSpec {
    pub d: usize,
    /// Gaussian mean; empty means the origin.
    #[serde(default)]
    pub base_mean: Vec<f64>,
    /// Diagonal of the Gaussian covariance; empty means `(r²/(4d))·I`.
    #[serde(default)]
    pub base_cov: Vec<f64>,
    pub source_gaussian_fraction: f64,
    pub target_gaussian_fraction: f64,
    pub label_rule: LabelRule,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_r_target")]
    pub feature_bound: f64,
    /// Norm of the hidden source predictor.
    #[serde(default = "default_w_star_norm")]
    pub w_star_norm: f64,
    /// Size of the perturbation of the target predictor, relative to
    /// `w_star_norm`; 0 keeps one labeling rule for both domains.
    #[serde(default)]
    pub target_label_shift: f64,
}

fn default_w_star_norm() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

/// Hidden labeling predictors of the two domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenModel {
    pub w_source: Array1<f64>,
    pub w_target: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub data: AdaptDataset,
    pub hidden: HiddenModel,
    pub source_gaussian_count: usize,
    pub target_gaussian_count: usize,
}

impl SyntheticShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d", "must be positive"));
        }
        for (name, f) in [
            ("source_gaussian_fraction", self.source_gaussian_fraction),
            ("target_gaussian_fraction", self.target_gaussian_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(invalid(name, format!("must lie in [0, 1], got {f}")));
            }
        }
        if !self.base_mean.is_empty() && self.base_mean.len() != self.d {
            return Err(AdaptError::DimensionMismatch {
                expected: self.d,
                actual: self.base_mean.len(),
            });
        }
        if !self.base_cov.is_empty() && self.base_cov.len() != self.d {
            return Err(AdaptError::DimensionMismatch {
                expected: self.d,
                actual: self.base_cov.len(),
            });
        }
        if self.base_cov.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("base_cov", "variances must be non-negative"));
        }
        if !(self.noise_std >= 0.0) || !(self.feature_bound > 0.0) || !(self.w_star_norm >= 0.0) || !(self.target_label_shift >= 0.0) {
            return Err(invalid("synthetic", "noise_std, w_star_norm, target_label_shift must be ≥ 0 and feature_bound > 0"));
        }
        Ok(())
    }

    pub fn draw_hidden<R: Rng + ?Sized>(&self, rng: &mut R) -> HiddenModel {
        let w_source = random_direction(self.d, rng) * self.w_star_norm;
        let w_target = &w_source + &(random_direction(self.d, rng) * (self.target_label_shift * self.w_star_norm));
        HiddenModel { w_source, w_target }
    }

    /// `count` labeled points of one domain and how many came from the Gaussian.
    pub fn sample_domain<R: Rng + ?Sized>(
        &self,
        hidden: &HiddenModel,
        domain: Domain,
        count: usize,
        rng: &mut R,
    ) -> (Array2<f64>, Array1<f64>, usize) {
        let (fraction, w) = match domain {
            Domain::Source => (self.source_gaussian_fraction, &hidden.w_source),
            Domain::Target => (self.target_gaussian_fraction, &hidden.w_target),
        };
        let r = self.feature_bound;
        let d = self.d;
        let default_var = r * r / (4.0 * d as f64);
        let mut x = Array2::zeros((count, d));
        let mut y = Array1::zeros(count);
        let mut gaussian = 0;
        for i in 0..count {
            let mut row = x.row_mut(i);
            if rng.random::<f64>() < fraction {
                gaussian += 1;
                for j in 0..d {
                    let mean = self.base_mean.get(j).copied().unwrap_or(0.0);
                    let var = self.base_cov.get(j).copied().unwrap_or(default_var);
                    row[j] = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
                let norm = row.dot(&row).sqrt();
                if norm > r {
                    row.mapv_inplace(|v| v * r / norm);
                }
            } else {
                let dir = random_direction(d, rng);
                let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
                row.assign(&(dir * radius));
            }
            let score = row.dot(w);
            let noise = if self.noise_std > 0.0 {
                self.noise_std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            y[i] = match self.label_rule {
                LabelRule::LinearRegression => (score + noise).clamp(-1.0, 1.0),
                LabelRule::LinearClassification => {
                    if score + noise >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
        }
        (x, y, gaussian)
    }
}

/// Source sample of size `m` and target sample of size `n`.
pub fn generate_synthetic<R: Rng + ?Sized>(
    spec: &SyntheticShiftSpec,
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<SyntheticDataset> {
    spec.validate()?;
    if m == 0 || n == 0 {
        return Err(invalid("sizes", "m and n must be at least 1"));
    }
    let hidden = spec.draw_hidden(rng);
    let (px, py, pg) = spec.sample_domain(&hidden, Domain::Source, m, rng);
    let (qx, qy, qg) = spec.sample_domain(&hidden, Domain::Target, n, rng);
    Ok(SyntheticDataset {
        data: AdaptDataset::new(px, py, qx, qy)?,
        hidden,
        source_gaussian_count: pg,
        target_gaussian_count: qg,
    })
}

fn random_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}
