//! End-to-end orthogonal subspace clustering: standardize, factor, K-Means.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{OscError, Result};
use crate::factor::{fit_from_spectrum, FactorModel, DEFAULT_THETA0};
use crate::kmeans::{kmeans, ClusterResult, KMeansConfig};
use crate::matrix::{standardize, DataMatrix};
use crate::metrics::evaluate;
use crate::seed::RNG_NAME;
use crate::spectral::eigendecompose_symmetric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscConfig {
    pub theta0: f64,
    pub kmeans: KMeansConfig,
}

impl OscConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            theta0: DEFAULT_THETA0,
            kmeans: KMeansConfig::new(k, seed),
        }
    }

    pub fn with_theta(mut self, theta0: f64) -> Self {
        self.theta0 = theta0;
        self
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub standardize: f64,
    /// Eigendecomposition plus loading and embedding construction.
    pub eigen: f64,
    pub kmeans: f64,
    /// End to end, standardize through K-Means.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansSummary {
    pub k: usize,
    pub restarts: usize,
    pub iters: usize,
    pub converged: bool,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub restart_index: usize,
    pub seed_used: u64,
    pub rng: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscReport {
    pub dataset: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: usize,
    pub theta0: f64,
    pub m: usize,
    pub theta_of_m: f64,
    pub timings_ms: StageTimings,
    pub kmeans: KMeansSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<MetricValues>,
    pub seed: u64,
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct OscRun {
    pub report: OscReport,
    pub factors: FactorModel,
    pub clusters: ClusterResult,
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn run_osc(data: &DataMatrix, cfg: &OscConfig) -> Result<OscRun> {
    let k = cfg.kmeans.k;
    if k < 2 || k > data.n_samples() {
        return Err(OscError::InvalidConfig(format!(
            "k = {k} must lie in [2, {}]",
            data.n_samples()
        )));
    }
    cfg.kmeans.validate()?;

    let t_total = Instant::now();
    let t = Instant::now();
    let view = standardize(data)?;
    let standardize_ms = millis(t);

    let t = Instant::now();
    let spectrum = eigendecompose_symmetric(&view.r_samples)?;
    let factors = fit_from_spectrum(&view, &spectrum, cfg.theta0)?;
    let eigen_ms = millis(t);

    let t = Instant::now();
    let clusters = kmeans(&factors.embedding, &cfg.kmeans)?;
    let kmeans_ms = millis(t);
    let total_ms = millis(t_total);

    let metrics = data
        .labels()
        .map(|truth| evaluate(truth, &clusters.assignments))
        .transpose()?
        .map(|r| MetricValues {
            acc: r.acc,
            nmi: r.nmi,
            ari: r.ari,
        });

    let report = OscReport {
        dataset: data.name().to_string(),
        n: data.n_samples(),
        p: data.n_features(),
        theta0: cfg.theta0,
        m: factors.m,
        theta_of_m: factors.theta_of_m(),
        timings_ms: StageTimings {
            standardize: standardize_ms,
            eigen: eigen_ms,
            kmeans: kmeans_ms,
            total: total_ms,
        },
        kmeans: KMeansSummary {
            k,
            restarts: cfg.kmeans.restarts,
            iters: clusters.iterations,
            converged: clusters.converged,
            objective: clusters.objective,
            objective_trace: clusters.objective_trace.clone(),
            restart_index: clusters.restart_index,
            seed_used: clusters.seed_used,
            rng: RNG_NAME.to_string(),
        },
        metrics,
        seed: cfg.kmeans.seed,
    };
    Ok(OscRun {
        report,
        factors,
        clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_groups_of_identical_rows() {
        let a = vec![1.0, 5.0, 2.0, 8.0, 3.0, 0.0];
        let b = vec![4.0, 0.0, 7.0, 1.0, 1.0, 9.0];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..5 {
            rows.push(a.clone());
            labels.push(0);
        }
        for _ in 0..5 {
            rows.push(b.clone());
            labels.push(1);
        }
        let data = DataMatrix::from_rows(&rows, Some(labels)).unwrap();
        let run = run_osc(&data, &OscConfig::new(2, 7)).unwrap();
        let metrics = run.report.metrics.unwrap();
        assert_eq!(metrics.acc, 1.0);
        assert_eq!(run.factors.embedding.shape(), (10, run.report.m));
    }

    #[test]
    fn k_out_of_range() {
        let data = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]], None).unwrap();
        assert!(matches!(
            run_osc(&data, &OscConfig::new(3, 0)),
            Err(OscError::InvalidConfig(_))
        ));
    }

    #[test]
    fn report_serializes_expected_keys() {
        let data = DataMatrix::from_rows(
            &[vec![1.0, 2.0, 0.0], vec![2.0, 1.0, 0.5], vec![0.0, 0.0, 3.0]],
            Some(vec![0, 0, 1]),
        )
        .unwrap();
        let run = run_osc(&data, &OscConfig::new(2, 1)).unwrap();
        let json = serde_json::to_value(&run.report).unwrap();
        for key in ["dataset", "N", "p", "theta0", "m", "theta_of_m", "timings_ms", "kmeans", "metrics", "seed"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert!(json["kmeans"]["objective_trace"].is_array());
    }
}
