//! Sample matrices, per-sample standardization and the sample correlation
//! matrix.
//!
//! Rows are samples and columns are features throughout. Standardization is
//! per *row*: each sample is centred on its own feature mean and scaled by its
//! own standard deviation, which is what makes the resulting N x N correlation
//! matrix a Q-type (sample-by-sample) correlation.

use nalgebra::{DMatrix, DVector};

use crate::error::{OscError, Result};

/// A validated dense data matrix with optional ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    labels: Option<Vec<usize>>,
    name: String,
}

impl DataMatrix {
    /// Checks shape, finiteness and label length.
    pub fn validate(values: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let (rows, cols) = values.shape();
        if rows < 2 || cols < 2 {
            return Err(OscError::TooSmall { rows, cols });
        }
        // Row-major scan so the reported position is the first in reading order.
        for row in 0..rows {
            for col in 0..cols {
                if !values[(row, col)].is_finite() {
                    return Err(OscError::NonFinite { row, col });
                }
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != rows {
                return Err(OscError::LabelLengthMismatch {
                    expected: rows,
                    found: labels.len(),
                });
            }
        }
        Ok(Self {
            values,
            labels,
            name: String::from("data"),
        })
    }

    /// Builds a matrix from row vectors. Panics on ragged rows.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == p), "ragged rows");
        Self::validate(DMatrix::from_fn(n, p, |i, j| rows[i][j]), labels)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of samples.
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    /// Number of features.
    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Sub-matrix of the given sample rows, labels carried along.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select_rows(rows);
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r]).collect());
        Ok(Self::validate(values, labels)?.with_name(self.name.clone()))
    }

    /// Same matrix, every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Ok(Self::validate(&self.values * factor, self.labels.clone())?.with_name(self.name.clone()))
    }
}

/// Per-sample centring and scaling of a [`DataMatrix`].
#[derive(Debug, Clone)]
pub struct StandardizedView {
    /// Per-sample feature means.
    pub mu: DVector<f64>,
    /// Per-sample standard deviations (p - 1 divisor).
    pub sigma: DVector<f64>,
    /// Reciprocals of `sigma`.
    pub d_inv: DVector<f64>,
    /// Standardized data, p x N: `y[(j, k)] = (x[k, j] - mu[k]) / sigma[k]`.
    pub y: DMatrix<f64>,
    /// N x N sample correlation matrix with unit diagonal.
    pub r_samples: DMatrix<f64>,
}

impl StandardizedView {
    pub fn n_samples(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.y.nrows()
    }
}

/// Centres and scales every sample row and forms the sample correlation
/// matrix `D^-1 X_c X_c^T D^-1 / (p - 1)`.
pub fn standardize(data: &DataMatrix) -> Result<StandardizedView> {
    let x = data.values();
    let (n, p) = x.shape();
    let denom = (p - 1) as f64;

    let mut mu = DVector::zeros(n);
    let mut sigma = DVector::zeros(n);
    let mut constant = Vec::new();
    for k in 0..n {
        let row = x.row(k);
        let mean = row.iter().sum::<f64>() / p as f64;
        let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / denom).sqrt();
        // A row whose deviations are all rounding noise is constant for our purposes.
        let scale = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if sd == 0.0 || sd <= scale * 1e-14 {
            constant.push(k);
        }
        mu[k] = mean;
        sigma[k] = sd;
    }
    if !constant.is_empty() {
        return Err(OscError::ConstantRow(constant));
    }

    let d_inv = sigma.map(|s| 1.0 / s);
    let y = DMatrix::from_fn(p, n, |j, k| (x[(k, j)] - mu[k]) * d_inv[k]);

    let mut r = y.tr_mul(&y);
    r /= denom;
    // Force exact symmetry and unit diagonal; both hold in exact arithmetic.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = avg;
            r[(j, i)] = avg;
        }
        r[(i, i)] = 1.0;
    }

    Ok(StandardizedView {
        mu,
        sigma,
        d_inv,
        y,
        r_samples: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_two_by_two_is_valid() {
        let data = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], None).unwrap();
        assert_eq!(data.n_samples(), 2);
        assert_eq!(data.n_features(), 2);
    }

    #[test]
    fn nan_is_reported_with_position() {
        let err = DataMatrix::from_rows(&[vec![1.0, f64::NAN], vec![3.0, 4.0]], None).unwrap_err();
        assert!(matches!(err, OscError::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn infinity_is_rejected() {
        let err =
            DataMatrix::from_rows(&[vec![1.0, 2.0], vec![f64::INFINITY, 4.0]], None).unwrap_err();
        assert!(matches!(err, OscError::NonFinite { row: 1, col: 0 }));
    }

    #[test]
    fn label_length_must_match() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 4];
        let err = DataMatrix::from_rows(&rows, Some(vec![0, 1, 2])).unwrap_err();
        assert!(matches!(
            err,
            OscError::LabelLengthMismatch {
                expected: 4,
                found: 3
            }
        ));
    }

    #[test]
    fn too_small_shapes() {
        let err = DataMatrix::from_rows(&[vec![1.0, 2.0, 3.0]], None).unwrap_err();
        assert!(matches!(err, OscError::TooSmall { rows: 1, cols: 3 }));
        let err = DataMatrix::from_rows(&[vec![1.0], vec![2.0]], None).unwrap_err();
        assert!(matches!(err, OscError::TooSmall { rows: 2, cols: 1 }));
    }

    #[test]
    fn standardize_hand_example() {
        let data =
            DataMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 7.0, 3.0]], None).unwrap();
        let view = standardize(&data).unwrap();
        assert_eq!(view.mu[0], 2.0);
        assert_eq!(view.sigma[0], 1.0);
        let col: Vec<f64> = view.y.column(0).iter().copied().collect();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn identical_rows_are_perfectly_correlated() {
        let data = DataMatrix::from_rows(
            &[vec![0.3, 1.7, -2.0, 5.5], vec![0.3, 1.7, -2.0, 5.5], vec![1.0, 0.0, 0.0, 2.0]],
            None,
        )
        .unwrap();
        let view = standardize(&data).unwrap();
        assert!((view.r_samples[(0, 1)] - 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((view.r_samples[(i, i)] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_rows_are_listed() {
        let data = DataMatrix::from_rows(
            &[vec![5.0, 5.0, 5.0], vec![1.0, 2.0, 3.0], vec![-1.0, -1.0, -1.0]],
            None,
        )
        .unwrap();
        let err = standardize(&data).unwrap_err();
        match err {
            OscError::ConstantRow(rows) => assert_eq!(rows, vec![0, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn select_rows_carries_labels() {
        let data = DataMatrix::from_rows(
            &[vec![1.0, 2.0], vec![3.0, 5.0], vec![0.0, 9.0]],
            Some(vec![0, 1, 2]),
        )
        .unwrap();
        let sub = data.select_rows(&[2, 0]).unwrap();
        assert_eq!(sub.labels().unwrap(), &[2, 0]);
        assert_eq!(sub.values()[(0, 1)], 9.0);
    }
}
