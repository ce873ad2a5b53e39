//! External clustering indices: accuracy under the best label matching,
//! normalized mutual information and the adjusted Rand index.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assignment::hungarian;
use crate::error::{OscError, Result};

/// Cross-tabulation of true versus predicted labels.
///
/// Rows follow the sorted distinct true labels, columns the sorted distinct
/// predicted labels.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    pub true_labels: Vec<usize>,
    pub pred_labels: Vec<usize>,
    /// Row-major `rows x cols` counts.
    pub counts: Vec<u64>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(OscError::LengthMismatch {
                left: truth.len(),
                right: pred.len(),
            });
        }
        if truth.is_empty() {
            return Err(OscError::Empty);
        }
        let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
            let mut map: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
            for (i, v) in map.values_mut().enumerate() {
                *v = i;
            }
            map
        };
        let rows_ix = index(truth);
        let cols_ix = index(pred);
        let (r, c) = (rows_ix.len(), cols_ix.len());
        let mut counts = vec![0u64; r * c];
        for (t, p) in truth.iter().zip(pred) {
            counts[rows_ix[t] * c + cols_ix[p]] += 1;
        }
        let row_sums = (0..r).map(|i| counts[i * c..(i + 1) * c].iter().sum()).collect();
        let col_sums = (0..c).map(|j| (0..r).map(|i| counts[i * c + j]).sum()).collect();
        Ok(Self {
            true_labels: rows_ix.into_keys().collect(),
            pred_labels: cols_ix.into_keys().collect(),
            counts,
            row_sums,
            col_sums,
            n: truth.len() as u64,
        })
    }

    pub fn rows(&self) -> usize {
        self.row_sums.len()
    }

    pub fn cols(&self) -> usize {
        self.col_sums.len()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols() + j]
    }

    /// True when both labelings induce the same partition.
    pub fn partitions_identical(&self) -> bool {
        if self.rows() != self.cols() {
            return false;
        }
        let nonzero_rows = (0..self.rows())
            .all(|i| (0..self.cols()).filter(|&j| self.get(i, j) > 0).count() == 1);
        let nonzero_cols = (0..self.cols())
            .all(|j| (0..self.rows()).filter(|&i| self.get(i, j) > 0).count() == 1);
        nonzero_rows && nonzero_cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    /// Predicted label -> true label chosen by the accuracy matching.
    pub mapping: BTreeMap<usize, usize>,
    pub n: usize,
    pub clusters_true: usize,
    pub clusters_pred: usize,
}

fn accuracy(table: &ContingencyTable) -> (f64, BTreeMap<usize, usize>) {
    let cost = DMatrix::from_fn(table.rows(), table.cols(), |i, j| -(table.get(i, j) as f64));
    let matching = hungarian(&cost).expect("finite contingency counts");
    let mut hits = 0u64;
    let mut mapping = BTreeMap::new();
    for &(i, j) in &matching.pairs {
        hits += table.get(i, j);
        mapping.insert(table.pred_labels[j], table.true_labels[i]);
    }
    (hits as f64 / table.n as f64, mapping)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let q = s as f64 / n;
            -q * q.ln()
        })
        .sum()
}

fn normalized_mutual_info(table: &ContingencyTable) -> f64 {
    let n = table.n as f64;
    let hx = entropy(&table.row_sums, n);
    let hy = entropy(&table.col_sums, n);
    if hx == 0.0 || hy == 0.0 {
        return if table.partitions_identical() { 1.0 } else { 0.0 };
    }
    let mut mi = 0.0;
    for i in 0..table.rows() {
        for j in 0..table.cols() {
            let nij = table.get(i, j);
            if nij == 0 {
                continue;
            }
            let pxy = nij as f64 / n;
            let ratio = (nij as f64 * n) / (table.row_sums[i] as f64 * table.col_sums[j] as f64);
            mi += pxy * ratio.ln();
        }
    }
    (mi / (hx * hy).sqrt()).clamp(0.0, 1.0)
}

fn pairs(x: u64) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

fn adjusted_rand(table: &ContingencyTable) -> f64 {
    let index: i128 = table.counts.iter().map(|&c| pairs(c)).sum();
    let a: i128 = table.row_sums.iter().map(|&s| pairs(s)).sum();
    let b: i128 = table.col_sums.iter().map(|&s| pairs(s)).sum();
    let total = pairs(table.n);
    // (index - a b / total) / ((a + b) / 2 - a b / total), cleared of fractions.
    let num = 2 * (index * total - a * b);
    let den = (a + b) * total - 2 * a * b;
    if den == 0 {
        return if table.partitions_identical() { 1.0 } else { 0.0 };
    }
    num as f64 / den as f64
}

pub fn acc(truth: &[usize], pred: &[usize]) -> Result<f64> {
    Ok(accuracy(&ContingencyTable::new(truth, pred)?).0)
}

pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    Ok(normalized_mutual_info(&ContingencyTable::new(truth, pred)?))
}

pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    if table.n < 2 {
        return Err(OscError::TooFew {
            needed: 2,
            found: table.n as usize,
        });
    }
    Ok(adjusted_rand(&table))
}

/// All three indices from one contingency table.
pub fn evaluate(truth: &[usize], pred: &[usize]) -> Result<MetricsReport> {
    let table = ContingencyTable::new(truth, pred)?;
    if table.n < 2 {
        return Err(OscError::TooFew {
            needed: 2,
            found: table.n as usize,
        });
    }
    let (acc, mapping) = accuracy(&table);
    Ok(MetricsReport {
        acc,
        nmi: normalized_mutual_info(&table),
        ari: adjusted_rand(&table),
        mapping,
        n: table.n as usize,
        clusters_true: table.rows(),
        clusters_pred: table.cols(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabeled_partition_is_perfect() {
        let r = evaluate(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(r.acc, 1.0);
        assert!((r.nmi - 1.0).abs() < 1e-12);
        assert_eq!(r.ari, 1.0);
        assert_eq!(r.mapping.get(&1), Some(&0));
    }

    #[test]
    fn crossed_partition() {
        let t = [0, 0, 1, 1];
        let p = [0, 1, 0, 1];
        assert_eq!(acc(&t, &p).unwrap(), 0.5);
        assert_eq!(nmi(&t, &p).unwrap(), 0.0);
        assert_eq!(ari(&t, &p).unwrap(), -0.5);
    }

    #[test]
    fn nmi_hand_value() {
        // p(x,y): (0,0)=1/2, (0,1)=1/4, (1,1)=1/4; p(x)=(3/4,1/4), p(y)=(1/2,1/2).
        let mi = 0.5 * (0.5_f64 / (0.75 * 0.5)).ln() + 0.25 * (0.25_f64 / (0.75 * 0.5)).ln()
            + 0.25 * (0.25_f64 / (0.25 * 0.5)).ln();
        let hx = -(0.75 * 0.75_f64.ln() + 0.25 * 0.25_f64.ln());
        let hy = 2.0_f64.ln();
        let expected = mi / (hx * hy).sqrt();
        let got = nmi(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn single_cluster_conventions() {
        assert_eq!(ari(&[3, 3, 3], &[7, 7, 7]).unwrap(), 1.0);
        assert_eq!(nmi(&[3, 3, 3], &[7, 7, 7]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(acc(&[0, 0, 0], &[5, 5, 5]).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            acc(&[0, 1], &[0]),
            Err(OscError::LengthMismatch { left: 2, right: 1 })
        ));
        assert!(matches!(nmi(&[], &[]), Err(OscError::Empty)));
        assert!(matches!(ari(&[0], &[0]), Err(OscError::TooFew { .. })));
    }

    #[test]
    fn more_predicted_clusters_than_true() {
        let r = evaluate(&[0, 0, 1, 1, 1], &[0, 1, 2, 2, 3]).unwrap();
        assert!((r.acc - 0.6).abs() < 1e-15);
        assert_eq!(r.clusters_pred, 4);
        assert_eq!(r.mapping.len(), 2);
    }
}
