use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};
use crate::loss::{LossKind, LossModel};

/// Labeled public sample (`m` points) and labeled private sample (`n` points)
/// over a shared feature dimension.
///
/// Sample indices follow the public-first convention: `0..m` are public,
/// `m..m + n` are private.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptDataset {
    public_x: Array2<f64>,
    public_y: Array1<f64>,
    private_x: Array2<f64>,
    private_y: Array1<f64>,
}

impl AdaptDataset {
    pub fn new(
        public_x: Array2<f64>,
        public_y: Array1<f64>,
        private_x: Array2<f64>,
        private_y: Array1<f64>,
    ) -> Result<Self> {
        if public_x.nrows() == 0 {
            return Err(AdaptError::InvalidDataset("public sample is empty".into()));
        }
        if private_x.nrows() == 0 {
            return Err(AdaptError::InvalidDataset("private sample is empty".into()));
        }
        if public_x.ncols() == 0 {
            return Err(AdaptError::InvalidDataset("feature dimension is zero".into()));
        }
        if public_x.ncols() != private_x.ncols() {
            return Err(AdaptError::DimensionMismatch {
                expected: public_x.ncols(),
                actual: private_x.ncols(),
            });
        }
        if public_y.len() != public_x.nrows() {
            return Err(AdaptError::DimensionMismatch {
                expected: public_x.nrows(),
                actual: public_y.len(),
            });
        }
        if private_y.len() != private_x.nrows() {
            return Err(AdaptError::DimensionMismatch {
                expected: private_x.nrows(),
                actual: private_y.len(),
            });
        }
        let all_finite = public_x.iter().chain(public_y.iter()).chain(private_x.iter()).chain(private_y.iter()).all(|v| v.is_finite());
        if !all_finite {
            return Err(AdaptError::InvalidDataset("non-finite value".into()));
        }
        Ok(Self {
            public_x,
            public_y,
            private_x,
            private_y,
        })
    }

    /// Builds a dataset from row slices; convenient for small fixtures.
    pub fn from_rows(
        public: &[(Vec<f64>, f64)],
        private: &[(Vec<f64>, f64)],
    ) -> Result<Self> {
        fn stack(rows: &[(Vec<f64>, f64)]) -> Result<(Array2<f64>, Array1<f64>)> {
            let d = rows.first().map(|r| r.0.len()).unwrap_or(0);
            let mut flat = Vec::with_capacity(rows.len() * d);
            for (x, _) in rows {
                if x.len() != d {
                    return Err(AdaptError::DimensionMismatch {
                        expected: d,
                        actual: x.len(),
                    });
                }
                flat.extend_from_slice(x);
            }
            let x = Array2::from_shape_vec((rows.len(), d), flat)
                .map_err(|e| AdaptError::InvalidDataset(e.to_string()))?;
            Ok((x, rows.iter().map(|r| r.1).collect()))
        }
        let (px, py) = stack(public)?;
        let (qx, qy) = stack(private)?;
        Self::new(px, py, qx, qy)
    }

    pub fn m(&self) -> usize {
        self.public_x.nrows()
    }

    pub fn n(&self) -> usize {
        self.private_x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.public_x.ncols()
    }

    pub fn public_x(&self) -> ArrayView2<'_, f64> {
        self.public_x.view()
    }

    pub fn public_y(&self) -> ArrayView1<'_, f64> {
        self.public_y.view()
    }

    pub fn private_x(&self) -> ArrayView2<'_, f64> {
        self.private_x.view()
    }

    pub fn private_y(&self) -> ArrayView1<'_, f64> {
        self.private_y.view()
    }

    /// Same public sample, different private sample.
    pub fn with_private(&self, private_x: Array2<f64>, private_y: Array1<f64>) -> Result<Self> {
        Self::new(self.public_x.clone(), self.public_y.clone(), private_x, private_y)
    }

    /// Swaps the roles of the two samples.
    pub fn swapped(&self) -> Self {
        Self {
            public_x: self.private_x.clone(),
            public_y: self.private_y.clone(),
            private_x: self.public_x.clone(),
            private_y: self.public_y.clone(),
        }
    }

    /// Largest feature norm over both samples.
    pub fn max_row_norm(&self) -> f64 {
        self.public_x
            .rows()
            .into_iter()
            .chain(self.private_x.rows())
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max)
    }

    /// Checks the geometry the loss constants rely on: `‖x‖ ≤ r` for every
    /// row, `|y| ≤ 1` for regression and `y ∈ {−1, +1}` for classification.
    pub fn check_geometry(&self, model: &LossModel) -> Result<()> {
        let r = model.feature_bound;
        let slack = 1e-9 * r.max(1.0);
        let worst = self.max_row_norm();
        if worst > r + slack {
            return Err(AdaptError::InvalidDataset(format!(
                "row norm {worst} exceeds feature bound {r}"
            )));
        }
        let labels = self.public_y.iter().chain(self.private_y.iter());
        match model.kind {
            LossKind::Squared => {
                if let Some(y) = labels.into_iter().find(|y| y.abs() > 1.0) {
                    return Err(AdaptError::InvalidDataset(format!(
                        "regression label {y} outside [-1, 1]"
                    )));
                }
            }
            LossKind::Logistic => {
                if let Some(y) = labels.into_iter().find(|&&y| y != 1.0 && y != -1.0) {
                    return Err(AdaptError::InvalidDataset(format!(
                        "classification label {y} not in {{-1, +1}}"
                    )));
                }
            }
        }
        Ok(())
    }
}
