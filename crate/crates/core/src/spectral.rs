//! Dense symmetric eigendecomposition.
//!
//! Householder reduction to tridiagonal form followed by the implicit QL
//! iteration (the classic `tred2`/`tql2` pair). Output is canonicalized so
//! that identical input bytes give identical output:
//!
//! * eigenvalues are sorted in non-increasing order;
//! * each eigenvector is negated if its largest-magnitude entry is negative;
//! * eigenvalues within `1e-12 * |lambda_1|` of each other are ordered by
//!   their eigenvectors, lexicographically descending;
//! * negative eigenvalues (roundoff on semi-definite input) are clamped to 0.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{OscError, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const TIE_TOL: f64 = 1e-12;
const MAX_QL_SWEEPS: usize = 60;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Orthonormal eigenvectors, one per column, in eigenvalue order.
    pub u: DMatrix<f64>,
    /// Non-increasing, non-negative eigenvalues.
    pub lambda: DVector<f64>,
    /// Eigenvalues before clamping, same order as `lambda`.
    pub raw_lambda: DVector<f64>,
    pub source_dim: usize,
}

impl SpectralDecomposition {
    /// `U diag(lambda) U^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.u.nrows(), self.u.ncols(), |i, j| {
            self.u[(i, j)] * self.lambda[j]
        });
        scaled * self.u.transpose()
    }
}

pub fn eigendecompose_symmetric(a: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(OscError::NotSquare { rows, cols });
    }
    let n = rows;
    if n == 0 {
        return Err(OscError::TooSmall { rows, cols });
    }
    for row in 0..n {
        for col in 0..n {
            if !a[(row, col)].is_finite() {
                return Err(OscError::NonFinite { row, col });
            }
        }
    }
    let mut asym = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL {
        return Err(OscError::NotSymmetric(asym));
    }

    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    {
        let buf = v.as_mut_slice();
        tridiagonalize(buf, n, &mut d, &mut e);
        ql_implicit(buf, n, &mut d, &mut e)?;
    }

    for mut col in v.column_iter_mut() {
        let lead = leading_entry(col.as_slice());
        if lead < 0.0 {
            col.neg_mut();
        }
    }

    let order = canonical_order(&d, &v);
    let u = v.select_columns(&order);
    let raw_lambda = DVector::from_iterator(n, order.iter().map(|&i| d[i]));
    let lambda = raw_lambda.map(|x| x.max(0.0));

    Ok(SpectralDecomposition {
        u,
        lambda,
        raw_lambda,
        source_dim: n,
    })
}

/// The first entry whose magnitude is (to rounding) the largest.
fn leading_entry(x: &[f64]) -> f64 {
    let max_abs = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cut = max_abs * (1.0 - 1e-12);
    x.iter().copied().find(|v| v.abs() >= cut).unwrap_or(0.0)
}

fn lexicographic_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

fn canonical_order(values: &[f64], vectors: &DMatrix<f64>) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));

    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = TIE_TOL * scale;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end - 1]] - values[order[end]] <= tol {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by(|&i, &j| {
                lexicographic_desc(vectors.column(i).as_slice(), vectors.column(j).as_slice())
            });
        }
        start = end;
    }
    order
}

/// Householder reduction of the symmetric matrix held column-major in `v`.
/// On return `d` holds the diagonal, `e[1..]` the sub-diagonal and `v` the
/// accumulated orthogonal transformation.
fn tridiagonalize(v: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    // v[(r, c)] lives at c * n + r.
    let at = |r: usize, c: usize| c * n + r;

    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                let col = j * n;
                for k in (j + 1)..i {
                    let vkj = v[col + k];
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = j * n;
                for k in j..i {
                    v[col + k] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            let next = (i + 1) * n;
            for k in 0..=i {
                d[k] = v[next + k] / h;
            }
            for j in 0..=i {
                let col = j * n;
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[next + k] * v[col + k];
                }
                for k in 0..=i {
                    v[col + k] -= g * d[k];
                }
            }
        }
        let next = (i + 1) * n;
        for k in 0..=i {
            v[next + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iteration on the tridiagonal (`d`, `e`), rotating the
/// columns of `v` along. Eigenvalues are left unsorted in `d`.
fn ql_implicit(v: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }

        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(OscError::NoConvergence(l));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    let (left, right) = v.split_at_mut((i + 1) * n);
                    let col_i = &mut left[i * n..];
                    let col_next = &mut right[..n];
                    for (vi, vn) in col_i.iter_mut().zip(col_next.iter_mut()) {
                        let h = *vn;
                        *vn = s * *vi + c * h;
                        *vi = c * *vi - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}
