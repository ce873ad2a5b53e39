//! Orthogonal subspace clustering.
//!
//! Samples are standardized row by row, the N x N sample correlation matrix is
//! factored, the number of factors is chosen by cumulative variance and the
//! samples are clustered with K-Means in the resulting orthogonal factor
//! coordinates. Alongside the pipeline the crate ships the clustering indices
//! used to score it, a synthetic union-of-subspaces generator with Monte Carlo
//! checks of the residual structure, and an experiment harness.

pub mod assignment;
pub mod error;
pub mod experiments;
pub mod factor;
pub mod io;
pub mod kmeans;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod spectral;
pub mod theorem;

pub use error::{OscError, Result};
pub use experiments::{bench_runtime, subset_robustness, sweep_theta, Baseline, ExperimentConfig, ExperimentReport};
pub use factor::{cumulative_variance, fit, select_dimension, FactorModel};
pub use kmeans::{kmeans, ClusterResult, KMeansConfig};
pub use matrix::{standardize, DataMatrix, StandardizedView};
pub use metrics::{acc, ari, evaluate, nmi, MetricsReport};
pub use pipeline::{run_osc, OscConfig, OscReport, OscRun};
pub use spectral::{eigendecompose_symmetric, SpectralDecomposition};
pub use theorem::{error_decay_study, generate, validate, DecayStudy, SubspaceModel, SyntheticSample, TheoremVerdict};
