//! Minimum-cost linear assignment (Hungarian method, O(n^3)).
//!
//! Rectangular inputs are padded to square with zero-cost dummy rows or
//! columns; pairs involving a dummy are dropped from the result.

use nalgebra::DMatrix;

use crate::error::{OscError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row; exactly `min(rows, cols)` of them.
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

impl Assignment {
    /// Column assigned to `row`, if any.
    pub fn col_for(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|(r, _)| *r == row).map(|&(_, c)| c)
    }
}

pub fn hungarian(cost: &DMatrix<f64>) -> Result<Assignment> {
    let (rows, cols) = cost.shape();
    for row in 0..rows {
        for col in 0..cols {
            if !cost[(row, col)].is_finite() {
                return Err(OscError::NonFinite { row, col });
            }
        }
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            cost: 0.0,
        });
    }

    let n = rows.max(cols);
    let c = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost[(i, j)]
        } else {
            0.0
        }
    };

    // Shortest augmenting paths with row/column potentials; index 0 is a
    // sentinel, real rows and columns are 1..=n.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let i = row_of_col[j];
            (i >= 1 && i - 1 < rows && j - 1 < cols).then_some((i - 1, j - 1))
        })
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(i, j)| cost[(i, j)]).sum();
    Ok(Assignment { pairs, cost: total })
}
