//! Experiment harness: threshold sweeps, category-subset robustness and
//! runtime comparison against two internal baselines, with persisted
//! per-run records and aggregate tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{OscError, Result};
use crate::factor::{fit_from_spectrum, DEFAULT_THETA0};
use crate::io::{load_dataset, write_trace};
use crate::kmeans::{kmeans, ClusterResult, KMeansConfig};
use crate::matrix::{standardize, DataMatrix};
use crate::metrics::evaluate;
use crate::pipeline::{run_osc, MetricValues, OscConfig, StageTimings};
use crate::seed::{derive_seed, rng_from_seed, RNG_NAME};
use crate::spectral::eigendecompose_symmetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// K-Means directly on the raw rows.
    RawKmeans,
    /// K-Means on the top-m principal component scores, m taken from OSC.
    PcaKmeans,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::RawKmeans => "raw-kmeans",
            Baseline::PcaKmeans => "pca-kmeans",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = OscError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw-kmeans" => Ok(Baseline::RawKmeans),
            "pca-kmeans" => Ok(Baseline::PcaKmeans),
            other => Err(OscError::InvalidConfig(format!(
                "unknown baseline '{other}' (expected raw-kmeans or pca-kmeans)"
            ))),
        }
    }
}

pub const OSC_METHOD: &str = "osc";

/// A data matrix file with an optional label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub matrix: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    pub theta_grid: Vec<f64>,
    /// Threshold used by the subset and runtime studies.
    pub theta0: f64,
    /// Number of clusters; defaults to the number of label classes.
    pub k: Option<usize>,
    pub repeats: usize,
    pub subset_counts: Vec<usize>,
    pub seed: u64,
    pub baselines: Vec<Baseline>,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            theta_grid: vec![0.70, 0.75, 0.80, 0.85, 0.90],
            theta0: DEFAULT_THETA0,
            k: None,
            repeats: 20,
            subset_counts: vec![2, 4, 7, 15, 30],
            seed: 0,
            baselines: vec![Baseline::RawKmeans, Baseline::PcaKmeans],
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(OscError::InvalidConfig("repeats must be at least 1".into()));
        }
        for &t in self.theta_grid.iter().chain(std::iter::once(&self.theta0)) {
            if !(t > 0.0 && t <= 1.0) {
                return Err(OscError::InvalidThreshold(t));
            }
        }
        self.kmeans_config(2, 0).validate()
    }

    pub fn load_datasets(&self) -> Result<Vec<DataMatrix>> {
        if self.datasets.is_empty() {
            return Err(OscError::InvalidConfig("no dataset given".into()));
        }
        self.datasets
            .iter()
            .map(|d| load_dataset(&d.matrix, d.labels.as_deref()))
            .collect()
    }

    /// Seed of repeat `r`.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, r as u64)
    }

    fn kmeans_config(&self, k: usize, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k,
            max_iter: self.max_iter,
            tol: self.tol,
            restarts: self.restarts,
            seed,
        }
    }

    fn resolve_k(&self, data: &DataMatrix) -> Result<usize> {
        if let Some(k) = self.k {
            return Ok(k);
        }
        match data.labels() {
            Some(labels) => Ok(labels.iter().collect::<BTreeSet<_>>().len()),
            None => Err(OscError::InvalidConfig(format!(
                "k is required for unlabelled dataset '{}'",
                data.name()
            ))),
        }
    }
}

/// One clustering run of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub dataset: String,
    /// Grid point of the study, e.g. `theta0=0.85` or `categories=4`.
    pub setting: String,
    pub method: String,
    pub repeat: usize,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    pub theta0: Option<f64>,
    pub m: Option<usize>,
    pub metrics: Option<MetricValues>,
    pub timings_ms: StageTimings,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    /// Label classes used by a subset run.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub categories: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, sd }
    }
}

/// Aggregate over the repeats of one (dataset, setting, method) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: String,
    pub setting: String,
    pub method: String,
    pub runs: usize,
    pub acc: Option<Stat>,
    pub nmi: Option<Stat>,
    pub ari: Option<Stat>,
    pub m: Option<Stat>,
    pub total_ms: Stat,
    pub stage_ms: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub threads: usize,
    pub build_id: String,
    pub rng: String,
}

impl Environment {
    pub fn current() -> Self {
        let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
        Self {
            threads: rayon::current_num_threads(),
            build_id: format!(
                "osc-core {} {profile} {}-{}",
                env!("CARGO_PKG_VERSION"),
                std::env::consts::ARCH,
                std::env::consts::OS
            ),
            rng: RNG_NAME.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub study: String,
    pub config: ExperimentConfig,
    /// Cells keyed by free-form method names, so externally produced
    /// numbers for other methods can be merged as additional cells.
    pub cells: Vec<Cell>,
    pub environment: Environment,
    #[serde(skip)]
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    fn new(study: &str, config: &ExperimentConfig, mut runs: Vec<RunRecord>) -> Self {
        runs.sort_by_key(|r| r.run);
        Self {
            study: study.to_string(),
            config: config.clone(),
            cells: aggregate(&runs),
            environment: Environment::current(),
            runs,
        }
    }

    pub fn cell(&self, dataset: &str, setting: &str, method: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.setting == setting && c.method == method)
    }

    /// Writes `report.json`, `per-run.jsonl`, `trace-<run>.csv` and the
    /// aggregate tables `table-acc.csv`, `table-nmi.csv`, `table-ari.csv`
    /// and `table-time.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| OscError::io(dir, e))?;
        let report_path = dir.join("report.json");
        fs::write(&report_path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| OscError::io(&report_path, e))?;

        let mut lines = String::new();
        for r in &self.runs {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        let runs_path = dir.join("per-run.jsonl");
        fs::write(&runs_path, lines).map_err(|e| OscError::io(&runs_path, e))?;

        for r in &self.runs {
            write_trace(&dir.join(format!("trace-{}.csv", r.run)), &r.objective_trace)?;
        }
        for (name, pick) in [
            ("acc", (|c: &Cell| c.acc) as fn(&Cell) -> Option<Stat>),
            ("nmi", |c: &Cell| c.nmi),
            ("ari", |c: &Cell| c.ari),
            ("time", |c: &Cell| Some(c.total_ms)),
        ] {
            let path = dir.join(format!("table-{name}.csv"));
            fs::write(&path, self.table(pick)).map_err(|e| OscError::io(&path, e))?;
        }
        Ok(())
    }

    /// Rows are (dataset, setting); columns are `<method>_mean,<method>_sd`.
    pub fn table(&self, pick: fn(&Cell) -> Option<Stat>) -> String {
        let mut methods: Vec<&str> = Vec::new();
        let mut rows: Vec<(&str, &str)> = Vec::new();
        for c in &self.cells {
            if !methods.contains(&c.method.as_str()) {
                methods.push(&c.method);
            }
            if !rows.contains(&(c.dataset.as_str(), c.setting.as_str())) {
                rows.push((&c.dataset, &c.setting));
            }
        }
        let mut out = String::from("dataset,setting");
        for m in &methods {
            out.push_str(&format!(",{m}_mean,{m}_sd"));
        }
        out.push('\n');
        for (dataset, setting) in rows {
            out.push_str(&format!("{dataset},{setting}"));
            for m in &methods {
                match self.cell(dataset, setting, m).and_then(pick) {
                    Some(s) => out.push_str(&format!(",{:?},{:?}", s.mean, s.sd)),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Reads a `per-run.jsonl` file back.
pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).map_err(|e| OscError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(OscError::from))
        .collect()
}

/// Groups runs by (dataset, setting, method) in order of first appearance
/// and summarizes each group.
pub fn aggregate(runs: &[RunRecord]) -> Vec<Cell> {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        let key = (r.dataset.clone(), r.setting.clone(), r.method.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let mut members = groups.remove(&key).expect("grouped key");
            members.sort_by_key(|r| r.run);
            let metric = |f: fn(&MetricValues) -> f64| -> Option<Stat> {
                let vals: Option<Vec<f64>> =
                    members.iter().map(|r| r.metrics.as_ref().map(f)).collect();
                vals.map(|v| Stat::of(&v))
            };
            let ms: Option<Vec<f64>> = members.iter().map(|r| r.m.map(|m| m as f64)).collect();
            let mean_of = |f: fn(&StageTimings) -> f64| {
                Stat::of(&members.iter().map(|r| f(&r.timings_ms)).collect::<Vec<_>>()).mean
            };
            Cell {
                runs: members.len(),
                acc: metric(|v| v.acc),
                nmi: metric(|v| v.nmi),
                ari: metric(|v| v.ari),
                m: ms.map(|v| Stat::of(&v)),
                total_ms: Stat::of(&members.iter().map(|r| r.timings_ms.total).collect::<Vec<_>>()),
                stage_ms: StageTimings {
                    standardize: mean_of(|t| t.standardize),
                    eigen: mean_of(|t| t.eigen),
                    kmeans: mean_of(|t| t.kmeans),
                    total: mean_of(|t| t.total),
                },
                dataset: key.0,
                setting: key.1,
                method: key.2,
            }
        })
        .collect()
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn metric_values(data: &DataMatrix, assignments: &[usize]) -> Result<Option<MetricValues>> {
    data.labels()
        .map(|truth| evaluate(truth, assignments))
        .transpose()
        .map(|r| {
            r.map(|r| MetricValues {
                acc: r.acc,
                nmi: r.nmi,
                ari: r.ari,
            })
        })
}

struct RunContext<'a> {
    data: &'a DataMatrix,
    setting: String,
    repeat: usize,
    seed: u64,
    k: usize,
    categories: Option<Vec<usize>>,
}

impl RunContext<'_> {
    fn record(
        &self,
        run: usize,
        method: &str,
        theta0: Option<f64>,
        m: Option<usize>,
        clusters: &ClusterResult,
        timings_ms: StageTimings,
    ) -> Result<RunRecord> {
        Ok(RunRecord {
            run,
            dataset: self.data.name().to_string(),
            setting: self.setting.clone(),
            method: method.to_string(),
            repeat: self.repeat,
            seed: self.seed,
            n: self.data.n_samples(),
            k: self.k,
            theta0,
            m,
            metrics: metric_values(self.data, &clusters.assignments)?,
            timings_ms,
            objective: clusters.objective,
            iterations: clusters.iterations,
            converged: clusters.converged,
            objective_trace: clusters.objective_trace.clone(),
            categories: self.categories.clone(),
        })
    }
}

/// Principal component scores `X_c V_m` of the column-centred rows,
/// computed through the N x N Gram matrix as `U_m diag(sqrt(lambda))`.
pub fn pca_scores(data: &DataMatrix, m: usize) -> Result<DMatrix<f64>> {
    let x = data.values();
    let (n, p) = x.shape();
    let mut centred = x.clone();
    for j in 0..p {
        let mean = x.column(j).sum() / n as f64;
        centred.column_mut(j).add_scalar_mut(-mean);
    }
    let mut gram = &centred * centred.transpose();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (gram[(i, j)] + gram[(j, i)]);
            gram[(i, j)] = avg;
            gram[(j, i)] = avg;
        }
    }
    let dec = eigendecompose_symmetric(&gram)?;
    let m = m.min(n);
    let mut scores = dec.u.columns(0, m).into_owned();
    for j in 0..m {
        scores.column_mut(j).scale_mut(dec.lambda[j].sqrt());
    }
    Ok(scores)
}

fn run_baseline(
    ctx: &RunContext<'_>,
    cfg: &ExperimentConfig,
    baseline: Baseline,
    m: usize,
    run: usize,
) -> Result<RunRecord> {
    let km_cfg = cfg.kmeans_config(ctx.k, ctx.seed);
    let start = Instant::now();
    let (clusters, timings, m_used) = match baseline {
        Baseline::RawKmeans => {
            let t = Instant::now();
            let clusters = kmeans(ctx.data.values(), &km_cfg)?;
            let k_ms = millis(t);
            (
                clusters,
                StageTimings {
                    kmeans: k_ms,
                    ..StageTimings::default()
                },
                None,
            )
        }
        Baseline::PcaKmeans => {
            let t = Instant::now();
            let scores = pca_scores(ctx.data, m)?;
            let eigen_ms = millis(t);
            let t = Instant::now();
            let clusters = kmeans(&scores, &km_cfg)?;
            let k_ms = millis(t);
            (
                clusters,
                StageTimings {
                    eigen: eigen_ms,
                    kmeans: k_ms,
                    ..StageTimings::default()
                },
                Some(m),
            )
        }
    };
    let timings = StageTimings {
        total: millis(start),
        ..timings
    };
    ctx.record(run, baseline.name(), None, m_used, &clusters, timings)
}

/// Full OSC run plus every enabled baseline; returns the records in order.
fn run_methods(ctx: &RunContext<'_>, cfg: &ExperimentConfig, next_run: &mut usize) -> Result<Vec<RunRecord>> {
    let osc_cfg = OscConfig {
        theta0: cfg.theta0,
        kmeans: cfg.kmeans_config(ctx.k, ctx.seed),
    };
    let osc = run_osc(ctx.data, &osc_cfg)?;
    let mut out = vec![ctx.record(
        *next_run,
        OSC_METHOD,
        Some(cfg.theta0),
        Some(osc.factors.m),
        &osc.clusters,
        osc.report.timings_ms.clone(),
    )?];
    *next_run += 1;
    for &b in &cfg.baselines {
        out.push(run_baseline(ctx, cfg, b, osc.factors.m, *next_run)?);
        *next_run += 1;
    }
    Ok(out)
}

fn theta_label(theta: f64) -> String {
    format!("theta0={theta}")
}

/// OSC at every threshold of the grid, `repeats` seeded runs each.
///
/// Standardization and the eigendecomposition do not depend on the threshold
/// or the seed, so they are computed once per dataset; their cost is
/// recorded in the `standardize` and `eigen` stage times of every run.
pub fn sweep_theta(datasets: &[DataMatrix], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut runs = Vec::new();
    let mut next_run = 0;
    for data in datasets {
        let k = cfg.resolve_k(data)?;
        let t = Instant::now();
        let view = standardize(data)?;
        let standardize_ms = millis(t);
        let t = Instant::now();
        let spectrum = eigendecompose_symmetric(&view.r_samples)?;
        let spectrum_ms = millis(t);
        for &theta in &cfg.theta_grid {
            let t = Instant::now();
            let factors = fit_from_spectrum(&view, &spectrum, theta)?;
            let factor_ms = millis(t);
            for repeat in 0..cfg.repeats {
                let seed = cfg.repeat_seed(repeat);
                let ctx = RunContext {
                    data,
                    setting: theta_label(theta),
                    repeat,
                    seed,
                    k,
                    categories: None,
                };
                let t = Instant::now();
                let clusters = kmeans(&factors.embedding, &cfg.kmeans_config(k, seed))?;
                let kmeans_ms = millis(t);
                let eigen = spectrum_ms + factor_ms;
                let timings = StageTimings {
                    standardize: standardize_ms,
                    eigen,
                    kmeans: kmeans_ms,
                    total: standardize_ms + eigen + kmeans_ms,
                };
                runs.push(ctx.record(next_run, OSC_METHOD, Some(theta), Some(factors.m), &clusters, timings)?);
                next_run += 1;
            }
        }
    }
    Ok(ExperimentReport::new("sweep", cfg, runs))
}

/// Classes chosen for `count` categories in repeat `repeat`, sorted.
pub fn sample_categories(classes: &[usize], count: usize, seed: u64, repeat: usize) -> Result<Vec<usize>> {
    if count > classes.len() {
        return Err(OscError::NotEnoughCategories {
            available: classes.len(),
            requested: count,
        });
    }
    let mut rng = rng_from_seed(derive_seed(derive_seed(seed, count as u64), repeat as u64));
    let mut chosen: Vec<usize> = sample(&mut rng, classes.len(), count)
        .into_iter()
        .map(|i| classes[i])
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// For every category count, `repeats` runs on all samples of that many
/// uniformly chosen label classes, with `k` equal to the count.
pub fn subset_robustness(datasets: &[DataMatrix], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut runs = Vec::new();
    let mut next_run = 0;
    for data in datasets {
        let labels = data
            .labels()
            .ok_or_else(|| OscError::MissingLabels(data.name().to_string()))?;
        let classes: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if let Some(&max) = cfg.subset_counts.iter().max() {
            if max > classes.len() {
                return Err(OscError::NotEnoughCategories {
                    available: classes.len(),
                    requested: max,
                });
            }
        }
        for &count in &cfg.subset_counts {
            if count < 2 {
                return Err(OscError::InvalidConfig(format!(
                    "subset counts must be at least 2, got {count}"
                )));
            }
            for repeat in 0..cfg.repeats {
                let chosen = sample_categories(&classes, count, cfg.seed, repeat)?;
                let rows: Vec<usize> = (0..labels.len())
                    .filter(|&i| chosen.binary_search(&labels[i]).is_ok())
                    .collect();
                let subset = data.select_rows(&rows)?.with_name(data.name());
                let ctx = RunContext {
                    data: &subset,
                    setting: format!("categories={count}"),
                    repeat,
                    seed: cfg.repeat_seed(repeat),
                    k: count,
                    categories: Some(chosen),
                };
                runs.extend(run_methods(&ctx, cfg, &mut next_run)?);
            }
        }
    }
    Ok(ExperimentReport::new("subset", cfg, runs))
}

/// Times OSC (per stage) and every enabled baseline over `repeats` runs,
/// executed one after another.
pub fn bench_runtime(datasets: &[DataMatrix], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut runs = Vec::new();
    let mut next_run = 0;
    for data in datasets {
        let k = cfg.resolve_k(data)?;
        for repeat in 0..cfg.repeats {
            let ctx = RunContext {
                data,
                setting: format!("N={}", data.n_samples()),
                repeat,
                seed: cfg.repeat_seed(repeat),
                k,
                categories: None,
            };
            runs.extend(run_methods(&ctx, cfg, &mut next_run)?);
        }
    }
    Ok(ExperimentReport::new("bench", cfg, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(per_class: usize, classes: usize) -> DataMatrix {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                let mut row = vec![0.0; 2 * classes];
                row[2 * c] = 10.0 + i as f64 * 0.01;
                row[2 * c + 1] = 5.0 - i as f64 * 0.02;
                rows.push(row);
                labels.push(c);
            }
        }
        DataMatrix::from_rows(&rows, Some(labels)).unwrap().with_name("blobs")
    }

    fn quick(repeats: usize) -> ExperimentConfig {
        ExperimentConfig {
            repeats,
            restarts: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn stat_uses_sample_sd() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.sd, 1.0);
        assert_eq!(Stat::of(&[4.0]).sd, 0.0);
    }

    #[test]
    fn baseline_names_round_trip() {
        for b in [Baseline::RawKmeans, Baseline::PcaKmeans] {
            assert_eq!(b.name().parse::<Baseline>().unwrap(), b);
        }
        assert!("ssc".parse::<Baseline>().is_err());
    }

    #[test]
    fn invalid_config() {
        let mut cfg = quick(0);
        assert!(matches!(cfg.validate(), Err(OscError::InvalidConfig(_))));
        cfg.repeats = 1;
        cfg.theta_grid = vec![0.5, 1.2];
        assert!(matches!(cfg.validate(), Err(OscError::InvalidThreshold(_))));
    }

    #[test]
    fn separable_sweep_is_perfect_everywhere() {
        let report = sweep_theta(&[blobs(6, 3)], &quick(2)).unwrap();
        assert_eq!(report.cells.len(), 5);
        let mut last_m = 0.0;
        for cell in &report.cells {
            assert_eq!(cell.acc.unwrap().mean, 1.0);
            let m = cell.m.unwrap().mean;
            assert!(m >= last_m);
            last_m = m;
        }
    }

    #[test]
    fn two_category_subset_is_perfect_with_zero_sd() {
        let mut cfg = quick(3);
        cfg.subset_counts = vec![2];
        cfg.baselines.clear();
        let report = subset_robustness(&[blobs(5, 4)], &cfg).unwrap();
        let cell = report.cell("blobs", "categories=2", OSC_METHOD).unwrap();
        assert_eq!(cell.acc.unwrap().mean, 1.0);
        assert_eq!(cell.acc.unwrap().sd, 0.0);
        assert!(report.runs.iter().all(|r| r.categories.as_ref().unwrap().len() == 2));
    }

    #[test]
    fn too_many_categories() {
        let mut cfg = quick(1);
        cfg.subset_counts = vec![2, 5];
        assert!(matches!(
            subset_robustness(&[blobs(3, 4)], &cfg),
            Err(OscError::NotEnoughCategories { available: 4, requested: 5 })
        ));
    }

    #[test]
    fn bench_includes_baselines_and_stage_accounting() {
        let report = bench_runtime(&[blobs(5, 3)], &quick(2)).unwrap();
        let methods: BTreeSet<&str> = report.cells.iter().map(|c| c.method.as_str()).collect();
        assert_eq!(methods, BTreeSet::from(["osc", "raw-kmeans", "pca-kmeans"]));
        let pca = report.cell("blobs", "N=15", "pca-kmeans").unwrap();
        let osc = report.cell("blobs", "N=15", OSC_METHOD).unwrap();
        assert_eq!(pca.m, osc.m);
        for r in report.runs.iter().filter(|r| r.method == OSC_METHOD) {
            let t = &r.timings_ms;
            let stages = t.standardize + t.eigen + t.kmeans;
            assert!(stages <= t.total * 1.05 + 1e-3);
        }
    }

    #[test]
    fn pca_scores_match_feature_space_projection() {
        let data = DataMatrix::from_rows(
            &[
                vec![1.0, 2.0, 0.5],
                vec![3.0, 1.0, 2.0],
                vec![0.0, 4.0, 1.0],
                vec![2.0, 2.0, 3.0],
            ],
            None,
        )
        .unwrap();
        let scores = pca_scores(&data, 2).unwrap();
        // Scores are orthogonal with squared norms equal to the eigenvalues.
        let gram = scores.tr_mul(&scores);
        assert!(gram[(0, 1)].abs() < 1e-10);
        assert!(gram[(0, 0)] >= gram[(1, 1)]);
        for i in 0..2 {
            assert!(scores.column(i).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn persisted_runs_recompute_cells() {
        let dir = tempfile::tempdir().unwrap();
        let report = bench_runtime(&[blobs(4, 2)], &quick(3)).unwrap();
        report.write(dir.path()).unwrap();
        let runs = read_runs(&dir.path().join("per-run.jsonl")).unwrap();
        assert_eq!(runs, report.runs);
        assert_eq!(aggregate(&runs), report.cells);
        assert!(dir.path().join("trace-0.csv").exists());
        let table = fs::read_to_string(dir.path().join("table-acc.csv")).unwrap();
        assert!(table.starts_with("dataset,setting,osc_mean,osc_sd"));
    }
}
