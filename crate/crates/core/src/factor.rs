//! Q-type principal-axis factoring of the sample correlation matrix.
//!
//! The spectrum of `R_samples` picks the number of factors `m` by cumulative
//! variance, the loadings are `A_m = U[:, :m] diag(lambda)^1/2` and the
//! clustering coordinates are `D A_m` with `D = diag(sigma)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{OscError, Result};
use crate::matrix::StandardizedView;
use crate::spectral::{eigendecompose_symmetric, SpectralDecomposition};

/// Eigenvalues below this fraction of the largest are treated as zero when
/// forming factor scores.
const NULL_EIGEN_RATIO: f64 = 1e-12;

/// Default cumulative-variance threshold.
pub const DEFAULT_THETA0: f64 = 0.85;

#[derive(Debug, Clone)]
pub struct FactorModel {
    /// Selected number of factors (1-based count).
    pub m: usize,
    pub theta0: f64,
    /// `theta_curve[i]` is the cumulative variance of the first `i + 1` factors.
    pub theta_curve: Vec<f64>,
    /// Eigenvalues of the sample correlation matrix, non-increasing.
    pub eigenvalues: DVector<f64>,
    /// N x m loading matrix.
    pub loadings: DMatrix<f64>,
    /// N x m clustering coordinates `D A_m`.
    pub embedding: DMatrix<f64>,
    /// p x r orthonormal factor scores, one column per retained factor with a
    /// non-null eigenvalue.
    pub f_basis: DMatrix<f64>,
    /// Factor indices (0-based, < m) left out of `f_basis` for having a null
    /// eigenvalue.
    pub omitted_factors: Vec<usize>,
}

impl FactorModel {
    /// Cumulative variance reached by the selected factors.
    pub fn theta_of_m(&self) -> f64 {
        self.theta_curve[self.m - 1]
    }
}

/// Cumulative variance contribution of a non-increasing, non-negative spectrum.
pub fn cumulative_variance(lambda: &[f64]) -> Result<Vec<f64>> {
    if lambda.is_empty() {
        return Err(OscError::Empty);
    }
    let total: f64 = lambda.iter().sum();
    if total <= 0.0 {
        return Err(OscError::AllZero);
    }
    let mut acc = 0.0;
    let mut curve: Vec<f64> = lambda
        .iter()
        .map(|&l| {
            acc += l;
            (acc / total).min(1.0)
        })
        .collect();
    *curve.last_mut().expect("non-empty") = 1.0;
    Ok(curve)
}

/// Smallest `m` (1-based) with `theta(m) >= theta0`.
pub fn select_dimension(theta_curve: &[f64], theta0: f64) -> usize {
    theta_curve
        .iter()
        .position(|&t| t >= theta0)
        .map_or(theta_curve.len(), |i| i + 1)
}

fn check_threshold(theta0: f64) -> Result<()> {
    if theta0 > 0.0 && theta0 <= 1.0 {
        Ok(())
    } else {
        Err(OscError::InvalidThreshold(theta0))
    }
}

/// Decomposes `R_samples` and fits the factor model at `theta0`.
pub fn fit(view: &StandardizedView, theta0: f64) -> Result<FactorModel> {
    check_threshold(theta0)?;
    let spectrum = eigendecompose_symmetric(&view.r_samples)?;
    fit_from_spectrum(view, &spectrum, theta0)
}

/// Fits the factor model from an already computed decomposition of
/// `view.r_samples`. Useful when sweeping several thresholds.
pub fn fit_from_spectrum(
    view: &StandardizedView,
    spectrum: &SpectralDecomposition,
    theta0: f64,
) -> Result<FactorModel> {
    check_threshold(theta0)?;
    let n = view.n_samples();
    let lambda = &spectrum.lambda;
    let theta_curve = cumulative_variance(lambda.as_slice())?;
    let m = select_dimension(&theta_curve, theta0);

    let loadings = DMatrix::from_fn(n, m, |i, j| spectrum.u[(i, j)] * lambda[j].sqrt());
    let embedding = DMatrix::from_fn(n, m, |i, j| view.sigma[i] * loadings[(i, j)]);

    // F = Y U_m diag(lambda)^-1/2 / sqrt(p - 1): R_samples carries the 1/(p-1)
    // factor, so this is the normalisation that makes F^T F = I.
    let cutoff = NULL_EIGEN_RATIO * lambda[0];
    let (kept, omitted_factors): (Vec<usize>, Vec<usize>) =
        (0..m).partition(|&j| lambda[j] > cutoff);
    let u_kept = spectrum.u.select_columns(&kept);
    let mut f_basis = &view.y * u_kept;
    let rescale = ((view.n_features() - 1) as f64).sqrt();
    for (c, &j) in kept.iter().enumerate() {
        let s = 1.0 / (lambda[j].sqrt() * rescale);
        f_basis.column_mut(c).scale_mut(s);
    }

    Ok(FactorModel {
        m,
        theta0,
        theta_curve,
        eigenvalues: lambda.clone(),
        loadings,
        embedding,
        f_basis,
        omitted_factors,
    })
}
