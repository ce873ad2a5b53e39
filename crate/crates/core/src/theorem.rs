//! Monte Carlo laboratory for the statistical orthogonality of residuals in a
//! union of subspaces.
//!
//! Data model: cluster `i` owns an `m_i`-dimensional subspace `S_i` of `R^p`
//! with orthonormal basis `B_i`. A sample of cluster `i` is
//! `y = B_i g + e` with `g ~ N(offset * sqrt(c_i) / sqrt(m_i) * 1, c_i I)` and
//! `e ~ N(0, sigma_i^2 I_p)`. Bases are fixed by the model seed; signals and
//! noise are redrawn for every trial.
//!
//! Per trial the top-`m` left singular basis `U_m` of `Y` is computed and the
//! residual `eps_hat = Y - U_m U_m^T Y` is formed. The exact identities
//! `U_m^T U_m = I` and `U_m^T eps_hat = 0` are checked per trial; the residual
//! Gram matrix `eps_hat^T eps_hat` is averaged over trials and compared with
//! the block-diagonal prediction.
//!
//! The deviation `Delta_N` from the block-diagonal expectation is estimated
//! with the ideal residual `eps = (I - P_union) Y` (computable because the
//! true bases are known) as a control variate: the trial average of
//! `eps_hat^T eps_hat - eps^T eps` has the same expectation as `Delta_N` but
//! without the Monte Carlo noise of the ideal part.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OscError, Result};
use crate::matrix::DataMatrix;
use crate::seed::{derive_seed, rng_from_seed, ChaCha8Rng};
use crate::spectral::eigendecompose_symmetric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    /// Ambient dimension.
    pub p: usize,
    /// `m_i` for every cluster.
    pub subspace_dims: Vec<usize>,
    /// `N_i` for every cluster.
    pub cluster_sizes: Vec<usize>,
    /// Per-coordinate noise standard deviation `sigma_i`.
    pub noise_sigmas: Vec<f64>,
    /// Signal variance `c_i` along every basis direction of `S_i`.
    pub signal_min_eig: Vec<f64>,
    /// Norm of the class mean inside `S_i`, in units of `sqrt(c_i)`.
    pub signal_offset: f64,
    /// In `[0, 1)`: rotates the leading directions of consecutive bases
    /// toward each other by `overlap * pi / 2`. Zero gives mutually
    /// orthogonal subspaces.
    pub overlap: f64,
    pub seed: u64,
}

impl SubspaceModel {
    /// Three 3-dimensional subspaces in `R^100`, 100 samples each, noise
    /// levels 0.05 / 0.10 / 0.15, unit signal variance, orthogonal bases.
    pub fn three_cluster_reference(seed: u64) -> Self {
        Self {
            p: 100,
            subspace_dims: vec![3, 3, 3],
            cluster_sizes: vec![100, 100, 100],
            noise_sigmas: vec![0.05, 0.10, 0.15],
            signal_min_eig: vec![1.0, 1.0, 1.0],
            signal_offset: 3.0,
            overlap: 0.0,
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.subspace_dims.len()
    }

    pub fn n(&self) -> usize {
        self.cluster_sizes.iter().sum()
    }

    /// Dimension of the span of all subspaces.
    pub fn m_union(&self) -> usize {
        self.subspace_dims.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let bad = |msg: String| Err(OscError::InvalidConfig(msg));
        if k == 0 {
            return bad("at least one cluster is required".into());
        }
        if self.cluster_sizes.len() != k
            || self.noise_sigmas.len() != k
            || self.signal_min_eig.len() != k
        {
            return bad(format!(
                "per-cluster lists must all have length {k} (sizes {}, sigmas {}, signal {})",
                self.cluster_sizes.len(),
                self.noise_sigmas.len(),
                self.signal_min_eig.len()
            ));
        }
        if self.subspace_dims.contains(&0) || self.cluster_sizes.contains(&0) {
            return bad("subspace dimensions and cluster sizes must be positive".into());
        }
        if self.noise_sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise sigmas must be finite and non-negative".into());
        }
        if self.signal_min_eig.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return bad("signal variances must be positive".into());
        }
        if !(self.signal_offset.is_finite() && self.signal_offset >= 0.0) {
            return bad("signal offset must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad(format!("overlap must lie in [0, 1), got {}", self.overlap));
        }
        let total = self.m_union();
        if total > self.p {
            return Err(OscError::InfeasibleDims { total, p: self.p });
        }
        Ok(())
    }

    /// Same model with cluster sizes rescaled to sum to `n`, proportionally
    /// to the current sizes (largest remainder rounding, every cluster keeps
    /// at least one sample).
    pub fn with_total_size(&self, n: usize) -> Result<Self> {
        let k = self.k();
        if n < k {
            return Err(OscError::InvalidConfig(format!(
                "cannot spread {n} samples over {k} clusters"
            )));
        }
        let base = self.n() as f64;
        let exact: Vec<f64> = self
            .cluster_sizes
            .iter()
            .map(|&s| s as f64 * n as f64 / base)
            .collect();
        let mut sizes: Vec<usize> = exact.iter().map(|x| (x.floor() as usize).max(1)).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut assigned: usize = sizes.iter().sum();
        let mut idx = 0;
        while assigned < n {
            sizes[order[idx % k]] += 1;
            assigned += 1;
            idx += 1;
        }
        while assigned > n {
            let largest = (0..k).max_by_key(|&i| (sizes[i], usize::MAX - i)).expect("k > 0");
            sizes[largest] -= 1;
            assigned -= 1;
        }
        let mut out = self.clone();
        out.cluster_sizes = sizes;
        Ok(out)
    }

    /// True orthonormal bases of every subspace, fixed by the seed.
    pub fn bases(&self) -> Result<Vec<DMatrix<f64>>> {
        self.validate()?;
        let mut rng = rng_from_seed(derive_seed(self.seed, 0));
        let total = self.m_union();
        let mut gauss = DMatrix::from_fn(self.p, total, |_, _| rng.sample::<f64, _>(StandardNormal));
        orthonormalize_columns(&mut gauss);

        let mut originals = Vec::with_capacity(self.k());
        let mut start = 0;
        for &m in &self.subspace_dims {
            originals.push(gauss.columns(start, m).into_owned());
            start += m;
        }
        let mut bases = originals.clone();
        if self.overlap > 0.0 {
            let phi = self.overlap * std::f64::consts::FRAC_PI_2;
            let (s, c) = phi.sin_cos();
            for i in 1..self.k() {
                let shared = self.subspace_dims[i].min(self.subspace_dims[i - 1]);
                for l in 0..shared {
                    let rotated = originals[i].column(l) * c + originals[i - 1].column(l) * s;
                    bases[i].set_column(l, &rotated);
                }
            }
        }
        Ok(bases)
    }
}

/// Modified Gram-Schmidt, two passes.
fn orthonormalize_columns(a: &mut DMatrix<f64>) {
    let cols = a.ncols();
    for _ in 0..2 {
        for j in 0..cols {
            for i in 0..j {
                let proj = a.column(i).dot(&a.column(j));
                let qi = a.column(i).into_owned();
                a.column_mut(j).axpy(-proj, &qi, 1.0);
            }
            let norm = a.column(j).norm();
            a.column_mut(j).unscale_mut(norm);
        }
    }
}

/// One draw from a [`SubspaceModel`].
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    /// p x N observations, one sample per column, clusters contiguous.
    pub y: DMatrix<f64>,
    /// p x N noiseless signal part of `y`.
    pub signal: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub bases: Vec<DMatrix<f64>>,
}

impl SyntheticSample {
    /// Samples as rows of a labelled data matrix.
    pub fn data_matrix(&self) -> Result<DataMatrix> {
        Ok(DataMatrix::validate(self.y.transpose(), Some(self.labels.clone()))?
            .with_name("synthetic-subspaces"))
    }

    /// Orthogonal projector onto subspace `i`.
    pub fn projector(&self, i: usize) -> DMatrix<f64> {
        &self.bases[i] * self.bases[i].transpose()
    }
}

fn draw(model: &SubspaceModel, bases: &[DMatrix<f64>], rng: &mut ChaCha8Rng) -> SyntheticSample {
    let p = model.p;
    let n = model.n();
    let mut y = DMatrix::zeros(p, n);
    let mut signal = DMatrix::zeros(p, n);
    let mut labels = Vec::with_capacity(n);
    let mut col = 0;
    for (i, basis) in bases.iter().enumerate() {
        let m = model.subspace_dims[i];
        let sd = model.signal_min_eig[i].sqrt();
        let mean = model.signal_offset * sd / (m as f64).sqrt();
        let sigma = model.noise_sigmas[i];
        for _ in 0..model.cluster_sizes[i] {
            let g = nalgebra::DVector::from_fn(m, |_, _| mean + sd * rng.sample::<f64, _>(StandardNormal));
            let z = basis * g;
            signal.set_column(col, &z);
            for r in 0..p {
                let e: f64 = rng.sample(StandardNormal);
                y[(r, col)] = z[r] + sigma * e;
            }
            labels.push(i);
            col += 1;
        }
    }
    SyntheticSample {
        y,
        signal,
        labels,
        bases: bases.to_vec(),
    }
}

/// Draws trial 0 of the model.
pub fn generate(model: &SubspaceModel) -> Result<SyntheticSample> {
    let bases = model.bases()?;
    Ok(draw(model, &bases, &mut trial_rng(model, 0)))
}

/// Draws trial `trial` of the model (same bases, fresh signal and noise).
pub fn generate_trial(model: &SubspaceModel, trial: u64) -> Result<SyntheticSample> {
    let bases = model.bases()?;
    Ok(draw(model, &bases, &mut trial_rng(model, trial)))
}

fn trial_rng(model: &SubspaceModel, trial: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(model.seed, trial + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub trials: usize,
    pub m: usize,
    pub m_union: usize,
    /// Max over trials of `max |U_m^T U_m - I|`.
    pub orthonormality_err: f64,
    /// Max over trials of `max |U_m^T eps_hat|`.
    pub residual_orth_err: f64,
    /// Max over trials of `max |P_hat^2 - P_hat|`.
    pub projector_idempotence_err: f64,
    /// Max over trials of `||eps_hat||_F`.
    pub residual_fro_max: f64,
    /// Per cluster: mean diagonal of the trial-averaged `eps_hat^T eps_hat`.
    pub within_diag_obs: Vec<f64>,
    /// Per cluster: `sigma_i^2 (p - m_i)`.
    pub within_diag_pred_mi: Vec<f64>,
    /// Per cluster: `sigma_i^2 (p - m_union)`, the expected ideal residual energy.
    pub within_diag_pred_union: Vec<f64>,
    /// Max over cluster pairs of `|mean entry of the cross block|`.
    pub cross_block_max: f64,
    /// Max `|entry|` over all cross-cluster entries.
    pub cross_entry_max: f64,
    /// RMS of the cross-cluster entries.
    pub cross_entry_rms: f64,
    /// Max `|Delta_N(a, b)|` over distinct same-cluster pairs.
    pub within_offdiag_max: f64,
    /// RMS of `Delta_N(a, b)` over distinct same-cluster pairs.
    pub within_offdiag_rms: f64,
    /// `||Delta_N||_F`.
    pub delta_fro: f64,
    /// Smallest `||P_i - P_j||_2` over cluster pairs (1 when k = 1).
    pub delta_hat: f64,
    /// Slowest single trial, milliseconds.
    pub max_trial_ms: f64,
}

impl TheoremVerdict {
    pub fn min_within_diag(&self) -> f64 {
        self.within_diag_obs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest relative deviation of the observed diagonal from
    /// `sigma_i^2 (p - m_union)`; clusters with zero prediction are skipped.
    pub fn max_diag_rel_err_union(&self) -> f64 {
        self.within_diag_obs
            .iter()
            .zip(&self.within_diag_pred_union)
            .filter(|(_, &pred)| pred > 0.0)
            .map(|(obs, pred)| (obs - pred).abs() / pred)
            .fold(0.0, f64::max)
    }
}

struct TrialOutcome {
    gram_hat: DMatrix<f64>,
    gram_delta: DMatrix<f64>,
    orthonormality: f64,
    residual_orth: f64,
    idempotence: f64,
    residual_fro: f64,
    millis: f64,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

fn symmetrize(mut g: DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = avg;
            g[(j, i)] = avg;
        }
    }
    g
}

/// Top-`m` left singular vectors of `y`.
fn leading_left_basis(y: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let (p, n) = y.shape();
    if p <= n {
        let gram = symmetrize(y * y.transpose());
        let dec = eigendecompose_symmetric(&gram)?;
        Ok(dec.u.columns(0, m).into_owned())
    } else {
        let gram = symmetrize(y.tr_mul(y));
        let dec = eigendecompose_symmetric(&gram)?;
        let floor = dec.lambda[0] * 1e-12;
        if dec.lambda[m - 1] <= floor {
            return Err(OscError::InvalidConfig(format!(
                "m = {m} exceeds the numerical rank of the data"
            )));
        }
        let mut u = y * dec.u.columns(0, m);
        for j in 0..m {
            u.column_mut(j).unscale_mut(dec.lambda[j].sqrt());
        }
        Ok(u)
    }
}

fn run_trial(
    model: &SubspaceModel,
    bases: &[DMatrix<f64>],
    union_basis: &DMatrix<f64>,
    m: usize,
    trial: u64,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    let sample = draw(model, bases, &mut trial_rng(model, trial));
    let y = &sample.y;

    let u = leading_left_basis(y, m)?;
    let coords = u.tr_mul(y);
    let eps_hat = y - &u * &coords;

    let gram_u = u.tr_mul(&u);
    let orthonormality = max_abs(&(&gram_u - DMatrix::identity(m, m)));
    let residual_orth = max_abs(&u.tr_mul(&eps_hat));
    let p_hat = &u * u.transpose();
    let p_hat_sq = (&u * &gram_u) * u.transpose();
    let idempotence = max_abs(&(p_hat_sq - &p_hat));

    let eps_ideal = y - union_basis * union_basis.tr_mul(y);
    let gram_hat = eps_hat.tr_mul(&eps_hat);
    let gram_delta = &gram_hat - eps_ideal.tr_mul(&eps_ideal);

    Ok(TrialOutcome {
        residual_fro: eps_hat.norm(),
        gram_hat,
        gram_delta,
        orthonormality,
        residual_orth,
        idempotence,
        millis: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn spectral_norm_of_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let diff = symmetrize(a - b);
    let dec = eigendecompose_symmetric(&diff)?;
    Ok(dec.raw_lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Runs `trials` Monte Carlo trials and summarizes them.
///
/// Trials execute in parallel batches but are accumulated in trial order, so
/// the verdict does not depend on the number of threads.
pub fn validate(model: &SubspaceModel, m: usize, trials: usize) -> Result<TheoremVerdict> {
    model.validate()?;
    let m_union = model.m_union();
    let n = model.n();
    if m < m_union {
        return Err(OscError::InvalidConfig(format!(
            "m = {m} is below the union dimension {m_union}"
        )));
    }
    if m > model.p.min(n) {
        return Err(OscError::InvalidConfig(format!(
            "m = {m} exceeds min(p, N) = {}",
            model.p.min(n)
        )));
    }
    if trials == 0 {
        return Err(OscError::InvalidConfig("trials must be positive".into()));
    }

    let bases = model.bases()?;
    let mut union_basis = DMatrix::zeros(model.p, m_union);
    let mut start = 0;
    for b in &bases {
        union_basis.columns_mut(start, b.ncols()).copy_from(b);
        start += b.ncols();
    }
    orthonormalize_columns(&mut union_basis);

    let projectors: Vec<DMatrix<f64>> = bases.iter().map(|b| b * b.transpose()).collect();
    let mut delta_hat = if model.k() > 1 { f64::INFINITY } else { 1.0 };
    for i in 0..projectors.len() {
        for j in (i + 1)..projectors.len() {
            delta_hat = delta_hat.min(spectral_norm_of_difference(&projectors[i], &projectors[j])?);
        }
    }

    let mut sum_hat = DMatrix::zeros(n, n);
    let mut sum_delta = DMatrix::zeros(n, n);
    let mut orthonormality_err = 0.0_f64;
    let mut residual_orth_err = 0.0_f64;
    let mut projector_idempotence_err = 0.0_f64;
    let mut residual_fro_max = 0.0_f64;
    let mut max_trial_ms = 0.0_f64;

    let batch = rayon::current_num_threads().max(1);
    let mut next = 0;
    while next < trials {
        let end = (next + batch).min(trials);
        let outcomes: Vec<Result<TrialOutcome>> = (next..end)
            .into_par_iter()
            .map(|t| run_trial(model, &bases, &union_basis, m, t as u64))
            .collect();
        for outcome in outcomes {
            let o = outcome?;
            sum_hat += &o.gram_hat;
            sum_delta += &o.gram_delta;
            orthonormality_err = orthonormality_err.max(o.orthonormality);
            residual_orth_err = residual_orth_err.max(o.residual_orth);
            projector_idempotence_err = projector_idempotence_err.max(o.idempotence);
            residual_fro_max = residual_fro_max.max(o.residual_fro);
            max_trial_ms = max_trial_ms.max(o.millis);
        }
        next = end;
    }
    let scale = 1.0 / trials as f64;
    let avg = sum_hat * scale;
    let delta = sum_delta * scale;

    let mut offsets = Vec::with_capacity(model.k() + 1);
    let mut acc = 0;
    for &s in &model.cluster_sizes {
        offsets.push(acc);
        acc += s;
    }
    offsets.push(acc);
    let range = |i: usize| offsets[i]..offsets[i + 1];

    let within_diag_obs: Vec<f64> = (0..model.k())
        .map(|i| range(i).map(|j| avg[(j, j)]).sum::<f64>() / model.cluster_sizes[i] as f64)
        .collect();
    let pred = |dim: usize| -> Vec<f64> {
        model
            .noise_sigmas
            .iter()
            .map(|s| s * s * (model.p - dim) as f64)
            .collect()
    };
    let within_diag_pred_mi = model
        .noise_sigmas
        .iter()
        .zip(&model.subspace_dims)
        .map(|(s, &mi)| s * s * (model.p - mi) as f64)
        .collect();

    let mut cross_block_max = 0.0_f64;
    let mut cross_entry_max = 0.0_f64;
    let mut cross_sq = 0.0;
    let mut cross_count = 0usize;
    for a in 0..model.k() {
        for b in 0..model.k() {
            if a == b {
                continue;
            }
            let mut sum = 0.0;
            for r in range(a) {
                for c in range(b) {
                    let v = avg[(r, c)];
                    sum += v;
                    cross_entry_max = cross_entry_max.max(v.abs());
                    cross_sq += v * v;
                }
            }
            let count = model.cluster_sizes[a] * model.cluster_sizes[b];
            cross_count += count;
            cross_block_max = cross_block_max.max((sum / count as f64).abs());
        }
    }

    let mut within_offdiag_max = 0.0_f64;
    let mut within_sq = 0.0;
    let mut within_count = 0usize;
    for a in 0..model.k() {
        for r in range(a) {
            for c in range(a) {
                if r != c {
                    let v = delta[(r, c)];
                    within_offdiag_max = within_offdiag_max.max(v.abs());
                    within_sq += v * v;
                    within_count += 1;
                }
            }
        }
    }
    let rms = |sq: f64, count: usize| if count == 0 { 0.0 } else { (sq / count as f64).sqrt() };

    Ok(TheoremVerdict {
        trials,
        m,
        m_union,
        orthonormality_err,
        residual_orth_err,
        projector_idempotence_err,
        residual_fro_max,
        within_diag_obs,
        within_diag_pred_mi,
        within_diag_pred_union: pred(m_union),
        cross_block_max,
        cross_entry_max,
        cross_entry_rms: rms(cross_sq, cross_count),
        within_offdiag_max,
        within_offdiag_rms: rms(within_sq, within_count),
        delta_fro: delta.norm(),
        delta_hat,
        max_trial_ms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub cluster_sizes: Vec<usize>,
    pub cross_block_max: f64,
    pub within_offdiag_max: f64,
    pub within_offdiag_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayStudy {
    pub trials: usize,
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `ln within_offdiag_max` against `ln N`.
    pub slope_max: f64,
    /// Same for `within_offdiag_rms`.
    pub slope_rms: f64,
}

impl DecayStudy {
    /// `N,cross_block_max,within_offdiag_max,within_offdiag_rms` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,cross_block_max,within_offdiag_max,within_offdiag_rms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                r.n, r.cross_block_max, r.within_offdiag_max, r.within_offdiag_rms
            ));
        }
        out
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Repeats [`validate`] at `m = m_union` for every total sample size in
/// `n_grid`, scaling cluster sizes proportionally. The subspaces stay fixed.
pub fn error_decay_study(base: &SubspaceModel, n_grid: &[usize], trials: usize) -> Result<DecayStudy> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(OscError::InvalidConfig(
            "n_grid needs at least two strictly increasing sizes".into(),
        ));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let model = base.with_total_size(n)?;
        let verdict = validate(&model, model.m_union(), trials)?;
        rows.push(DecayRow {
            n,
            cluster_sizes: model.cluster_sizes.clone(),
            cross_block_max: verdict.cross_block_max,
            within_offdiag_max: verdict.within_offdiag_max,
            within_offdiag_rms: verdict.within_offdiag_rms,
        });
    }
    let ln_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let slope_of = |f: fn(&DecayRow) -> f64| {
        let ln_v: Vec<f64> = rows.iter().map(|r| f(r).max(f64::MIN_POSITIVE).ln()).collect();
        fit_slope(&ln_n, &ln_v)
    };
    let slope_max = slope_of(|r| r.within_offdiag_max);
    let slope_rms = slope_of(|r| r.within_offdiag_rms);
    Ok(DecayStudy {
        trials,
        rows,
        slope_max,
        slope_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model(seed: u64) -> SubspaceModel {
        SubspaceModel {
            p: 20,
            subspace_dims: vec![2, 3],
            cluster_sizes: vec![15, 25],
            noise_sigmas: vec![0.1, 0.2],
            signal_min_eig: vec![1.0, 2.0],
            signal_offset: 1.0,
            overlap: 0.0,
            seed,
        }
    }

    #[test]
    fn infeasible_dimensions() {
        let mut model = small_model(1);
        model.p = 4;
        assert!(matches!(
            model.validate(),
            Err(OscError::InfeasibleDims { total: 5, p: 4 })
        ));
    }

    #[test]
    fn bases_are_orthonormal_and_mutually_orthogonal() {
        let bases = small_model(3).bases().unwrap();
        let mut all = DMatrix::zeros(20, 5);
        all.columns_mut(0, 2).copy_from(&bases[0]);
        all.columns_mut(2, 3).copy_from(&bases[1]);
        assert!(max_abs(&(all.tr_mul(&all) - DMatrix::identity(5, 5))) < 1e-12);
    }

    #[test]
    fn overlap_shrinks_separation() {
        let mut model = small_model(4);
        model.subspace_dims = vec![2, 2];
        let sep = |overlap: f64| {
            let mut m = model.clone();
            m.overlap = overlap;
            let b = m.bases().unwrap();
            spectral_norm_of_difference(&(&b[0] * b[0].transpose()), &(&b[1] * b[1].transpose()))
                .unwrap()
        };
        assert!((sep(0.0) - 1.0).abs() < 1e-10);
        let phi = 0.5 * std::f64::consts::FRAC_PI_2;
        assert!((sep(0.5) - phi.cos()).abs() < 1e-10);
    }

    #[test]
    fn noiseless_data_has_rank_at_most_union() {
        let mut model = small_model(5);
        model.noise_sigmas = vec![0.0, 0.0];
        let sample = generate(&model).unwrap();
        let gram = symmetrize(&sample.y * sample.y.transpose());
        let dec = eigendecompose_symmetric(&gram).unwrap();
        assert!(dec.lambda[5] <= 1e-10 * dec.lambda[0]);
        assert_eq!(sample.labels.len(), 40);
    }

    #[test]
    fn single_line_without_noise_is_collinear() {
        let model = SubspaceModel {
            p: 6,
            subspace_dims: vec![1],
            cluster_sizes: vec![8],
            noise_sigmas: vec![0.0],
            signal_min_eig: vec![1.0],
            signal_offset: 0.0,
            overlap: 0.0,
            seed: 9,
        };
        let sample = generate(&model).unwrap();
        let b = &sample.bases[0];
        let residual = &sample.y - b * b.tr_mul(&sample.y);
        assert!(max_abs(&residual) < 1e-12);
    }

    #[test]
    fn with_total_size_keeps_proportions() {
        let model = SubspaceModel::three_cluster_reference(0);
        assert_eq!(model.with_total_size(100).unwrap().cluster_sizes, vec![34, 33, 33]);
        assert_eq!(model.with_total_size(1600).unwrap().cluster_sizes, vec![534, 533, 533]);
        let uneven = small_model(0).with_total_size(80).unwrap();
        assert_eq!(uneven.cluster_sizes, vec![30, 50]);
    }

    #[test]
    fn verdict_exact_identities_on_small_model() {
        let model = small_model(6);
        let v = validate(&model, 5, 4).unwrap();
        assert!(v.orthonormality_err < 1e-8);
        assert!(v.residual_orth_err < 1e-8);
        assert!(v.projector_idempotence_err < 1e-8);
        assert!((v.delta_hat - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wide_data_uses_sample_gram_route() {
        let mut model = small_model(7);
        model.p = 60;
        model.cluster_sizes = vec![10, 12];
        let v = validate(&model, 5, 2).unwrap();
        assert!(v.orthonormality_err < 1e-8);
        assert!(v.residual_orth_err < 1e-8);
    }

    #[test]
    fn m_below_union_is_rejected() {
        assert!(matches!(
            validate(&small_model(1), 4, 1),
            Err(OscError::InvalidConfig(_))
        ));
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x: Vec<f64> = [100.0_f64, 400.0, 1600.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [100.0_f64, 400.0, 1600.0].iter().map(|v| (3.0 * v.powf(-0.5)).ln()).collect();
        assert!((fit_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
