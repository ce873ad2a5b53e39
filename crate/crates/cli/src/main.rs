use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use osc_core::error::{OscError, Result};
use osc_core::experiments::{
    bench_runtime, subset_robustness, sweep_theta, Baseline, DatasetSource, ExperimentConfig,
    ExperimentReport,
};
use osc_core::io::{load_dataset, read_labels, write_labels, write_trace};
use osc_core::kmeans::KMeansConfig;
use osc_core::metrics::{evaluate, MetricsReport};
use osc_core::pipeline::{run_osc, OscConfig, OscReport};
use osc_core::theorem::{error_decay_study, validate, DecayStudy, SubspaceModel, TheoremVerdict};

/// Orthogonal subspace clustering: Q-type factor embedding followed by K-Means.
#[derive(Debug, Parser)]
#[command(name = "osc", version, about)]
struct Cli {
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "osc-out")]
    out_dir: PathBuf,

    /// Worker thread cap (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON configuration; a previous report.json is accepted and its
    /// embedded "config" object is used. Command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    /// Suppress the summary printed to stdout.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cluster one data matrix.
    Cluster(ClusterArgs),
    /// Accuracy across a grid of variance thresholds.
    Sweep(ExperimentArgs),
    /// Accuracy on random subsets of label categories.
    Subset(ExperimentArgs),
    /// Wall-clock comparison with the internal baselines.
    Bench(ExperimentArgs),
    /// Monte Carlo check of the residual covariance structure.
    ValidateTheorem(TheoremArgs),
    /// ACC, NMI and ARI between two label files.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Data matrix, one sample per row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Ground-truth labels, one integer per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Number of clusters (required).
    #[arg(long)]
    k: Option<usize>,
    /// Cumulative variance threshold [default: 0.85].
    #[arg(long)]
    theta: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// K-Means restarts [default: 10].
    #[arg(long)]
    restarts: Option<usize>,
    /// [default: 300]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative objective tolerance [default: 1e-6].
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Data matrix; repeat for several datasets.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Label file for each --input, in the same order.
    #[arg(long)]
    labels: Vec<PathBuf>,
    /// Comma-separated thresholds for `sweep` [default: 0.7,0.75,0.8,0.85,0.9].
    #[arg(long, value_delimiter = ',')]
    theta_grid: Option<Vec<f64>>,
    /// Threshold for `subset` and `bench` [default: 0.85].
    #[arg(long)]
    theta: Option<f64>,
    /// Number of clusters [default: number of label classes].
    #[arg(long)]
    k: Option<usize>,
    /// [default: 20]
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated category counts for `subset` [default: 2,4,7,15,30].
    #[arg(long, value_delimiter = ',')]
    subset_counts: Option<Vec<usize>>,
    /// Comma-separated baselines (raw-kmeans, pca-kmeans) or `none`.
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct TheoremArgs {
    /// Ambient dimension [default: 100].
    #[arg(long)]
    p: Option<usize>,
    /// Number of clusters [default: 3].
    #[arg(long)]
    k: Option<usize>,
    /// Subspace dimensions; one value is used for every cluster [default: 3].
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Samples per cluster; one value is used for every cluster [default: 100].
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Noise standard deviations [default: 0.05, 0.10, ... per cluster].
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Signal variance per subspace direction [default: 1].
    #[arg(long, value_delimiter = ',')]
    signal: Option<Vec<f64>>,
    /// Class-mean norm inside each subspace in signal standard deviations [default: 3].
    #[arg(long)]
    offset: Option<f64>,
    /// Rotation of consecutive subspaces toward each other, in [0, 1) [default: 0].
    #[arg(long)]
    overlap: Option<f64>,
    /// Retained dimension [default: sum of subspace dimensions].
    #[arg(long)]
    m: Option<usize>,
    /// [default: 50]
    #[arg(long)]
    trials: Option<usize>,
    /// Total sample sizes for the error decay study, e.g. 100,400,1600.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Ground-truth labels.
    #[arg(long = "true")]
    truth: Option<PathBuf>,
    /// Predicted labels.
    #[arg(long)]
    pred: Option<PathBuf>,
}

/// Key/value settings from a `--config` file.
struct ConfigFile(Map<String, Value>);

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self(Map::new()));
        };
        let text = fs::read_to_string(path).map_err(|e| OscError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let value: Value = serde_json::from_str(&text)?;
        let object = match value {
            Value::Object(mut map) => match map.remove("config") {
                Some(Value::Object(inner)) => inner,
                Some(_) => {
                    return Err(OscError::InvalidConfig(
                        "\"config\" must be a JSON object".into(),
                    ))
                }
                None => map,
            },
            _ => {
                return Err(OscError::InvalidConfig(format!(
                    "{} does not contain a JSON object",
                    path.display()
                )))
            }
        };
        Ok(Self(object))
    }

    fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| OscError::InvalidConfig(format!("config key '{key}': {e}"))),
        }
    }

    fn value(&self) -> Value {
        Value::Object(self.0.clone())
    }
}

fn usage_error(subcommand: &str, message: &str) -> ! {
    let mut root = Cli::command();
    root.build();
    let mut cmd = root
        .find_subcommand(subcommand)
        .cloned()
        .unwrap_or(root)
        .bin_name(format!("osc {subcommand}"));
    cmd.error(ErrorKind::MissingRequiredArgument, message).exit()
}

/// Formats with six significant digits, trailing zeros removed.
fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        let s = format!("{x:.5e}");
        let (mantissa, exponent) = s.split_once('e').expect("exponent form");
        format!("{}e{exponent}", trim(mantissa.to_string()))
    }
}

struct Output<'a> {
    dir: &'a Path,
    verbose: u8,
    quiet: bool,
}

impl Output<'_> {
    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(self.dir).map_err(|e| OscError::Io {
            path: self.dir.to_path_buf(),
            source: e,
        })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
            .map_err(|e| OscError::Io { path: path.clone(), source: e })?;
        self.note(&format!("wrote {}", path.display()));
        Ok(())
    }

    fn note(&self, message: &str) {
        if self.verbose > 0 {
            eprintln!("{message}");
        }
    }

    fn say(&self, message: &str) {
        if !self.quiet {
            println!("{message}");
        }
    }
}

#[derive(Debug, Serialize)]
struct ClusterConfig {
    command: &'static str,
    input: PathBuf,
    labels: Option<PathBuf>,
    k: usize,
    theta0: f64,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    tol: f64,
}

#[derive(Debug, Serialize)]
struct ClusterOutput<'a> {
    config: &'a ClusterConfig,
    #[serde(flatten)]
    report: &'a OscReport,
}

fn cmd_cluster(args: ClusterArgs, file: &ConfigFile, out: &Output<'_>) -> Result<()> {
    let defaults = OscConfig::new(2, 0);
    let input = match args.input.or(file.get("input")?) {
        Some(p) => p,
        None => usage_error("cluster", "the following required argument was not provided: --input <INPUT>"),
    };
    let k = match args.k.or(file.get("k")?) {
        Some(k) => k,
        None => usage_error("cluster", "the following required argument was not provided: --k <K>"),
    };
    let cfg = ClusterConfig {
        command: "cluster",
        input,
        labels: args.labels.or(file.get("labels")?),
        k,
        theta0: args.theta.or(file.get("theta0")?).unwrap_or(defaults.theta0),
        seed: args.seed.or(file.get("seed")?).unwrap_or(defaults.kmeans.seed),
        restarts: args.restarts.or(file.get("restarts")?).unwrap_or(defaults.kmeans.restarts),
        max_iter: args.max_iter.or(file.get("max_iter")?).unwrap_or(defaults.kmeans.max_iter),
        tol: args.tol.or(file.get("tol")?).unwrap_or(defaults.kmeans.tol),
    };

    let data = load_dataset(&cfg.input, cfg.labels.as_deref())?;
    let osc_cfg = OscConfig {
        theta0: cfg.theta0,
        kmeans: KMeansConfig {
            k: cfg.k,
            max_iter: cfg.max_iter,
            tol: cfg.tol,
            restarts: cfg.restarts,
            seed: cfg.seed,
        },
    };
    let run = run_osc(&data, &osc_cfg)?;

    out.prepare()?;
    out.write_json("report.json", &ClusterOutput { config: &cfg, report: &run.report })?;
    write_labels(&out.dir.join("assignments.txt"), &run.clusters.assignments)?;
    write_trace(&out.dir.join("trace.csv"), &run.clusters.objective_trace)?;

    let r = &run.report;
    out.say(&format!(
        "dataset={} N={} p={} m={} theta(m)={} objective={} iterations={}",
        r.dataset,
        r.n,
        r.p,
        r.m,
        sig6(r.theta_of_m),
        sig6(r.kmeans.objective),
        r.kmeans.iters
    ));
    if let Some(m) = &r.metrics {
        out.say(&format!("acc={} nmi={} ari={}", sig6(m.acc), sig6(m.nmi), sig6(m.ari)));
    }
    out.say(&format!(
        "time_ms standardize={} eigen={} kmeans={} total={}",
        sig6(r.timings_ms.standardize),
        sig6(r.timings_ms.eigen),
        sig6(r.timings_ms.kmeans),
        sig6(r.timings_ms.total)
    ));
    Ok(())
}

fn experiment_config(name: &str, args: ExperimentArgs, file: &ConfigFile) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = serde_json::from_value(file.value())
        .map_err(|e| OscError::InvalidConfig(format!("config: {e}")))?;
    if !args.input.is_empty() {
        if !args.labels.is_empty() && args.labels.len() != args.input.len() {
            return Err(OscError::InvalidConfig(format!(
                "{} --labels given for {} --input",
                args.labels.len(),
                args.input.len()
            )));
        }
        cfg.datasets = args
            .input
            .iter()
            .enumerate()
            .map(|(i, m)| DatasetSource {
                matrix: m.clone(),
                labels: args.labels.get(i).cloned(),
            })
            .collect();
    } else if !args.labels.is_empty() {
        return Err(OscError::InvalidConfig("--labels requires --input".into()));
    }
    if cfg.datasets.is_empty() {
        usage_error(name, "the following required argument was not provided: --input <INPUT>");
    }
    if let Some(v) = args.theta_grid {
        cfg.theta_grid = v;
    }
    if let Some(v) = args.theta {
        cfg.theta0 = v;
    }
    if args.k.is_some() {
        cfg.k = args.k;
    }
    if let Some(v) = args.repeats {
        cfg.repeats = v;
    }
    if let Some(v) = args.subset_counts {
        cfg.subset_counts = v;
    }
    if let Some(v) = args.baselines {
        cfg.baselines = v
            .iter()
            .filter(|s| s.trim() != "none")
            .map(|s| s.parse::<Baseline>())
            .collect::<Result<_>>()?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.restarts {
        cfg.restarts = v;
    }
    if let Some(v) = args.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = args.tol {
        cfg.tol = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

type Study = fn(&[osc_core::DataMatrix], &ExperimentConfig) -> Result<ExperimentReport>;

fn cmd_experiment(name: &str, study: Study, args: ExperimentArgs, file: &ConfigFile, out: &Output<'_>) -> Result<()> {
    let cfg = experiment_config(name, args, file)?;
    let datasets = cfg.load_datasets()?;
    let report = study(&datasets, &cfg)?;
    report.write(out.dir)?;
    out.note(&format!("wrote {} runs to {}", report.runs.len(), out.dir.display()));

    let stat = |s: Option<osc_core::experiments::Stat>| {
        s.map_or_else(|| "-".to_string(), |s| format!("{}±{}", sig6(s.mean), sig6(s.sd)))
    };
    out.say("dataset\tsetting\tmethod\tacc\tnmi\tari\tm\ttotal_ms");
    for c in &report.cells {
        out.say(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.dataset,
            c.setting,
            c.method,
            stat(c.acc),
            stat(c.nmi),
            stat(c.ari),
            c.m.map_or_else(|| "-".to_string(), |m| sig6(m.mean)),
            sig6(c.total_ms.mean)
        ));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct TheoremConfig {
    command: &'static str,
    p: usize,
    k: usize,
    dims: Vec<usize>,
    sizes: Vec<usize>,
    sigmas: Vec<f64>,
    signal: Vec<f64>,
    offset: f64,
    overlap: f64,
    m: usize,
    trials: usize,
    n_grid: Option<Vec<usize>>,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct TheoremOutput<'a> {
    config: &'a TheoremConfig,
    model: &'a SubspaceModel,
    verdict: &'a TheoremVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay: Option<&'a DecayStudy>,
}

fn broadcast<T: Clone>(name: &str, values: Vec<T>, k: usize) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); k]),
        n if n == k => Ok(values),
        n => Err(OscError::InvalidConfig(format!(
            "--{name} has {n} values for {k} clusters"
        ))),
    }
}

fn cmd_validate_theorem(args: TheoremArgs, file: &ConfigFile, out: &Output<'_>) -> Result<()> {
    let k = args.k.or(file.get("k")?).unwrap_or(3);
    if k == 0 {
        return Err(OscError::InvalidConfig("k must be positive".into()));
    }
    let dims = broadcast("dims", args.dims.or(file.get("dims")?).unwrap_or(vec![3]), k)?;
    let sizes = broadcast("sizes", args.sizes.or(file.get("sizes")?).unwrap_or(vec![100]), k)?;
    let default_sigmas = (1..=k).map(|i| 0.05 * i as f64).collect();
    let sigmas = broadcast("sigmas", args.sigmas.or(file.get("sigmas")?).unwrap_or(default_sigmas), k)?;
    let signal = broadcast("signal", args.signal.or(file.get("signal")?).unwrap_or(vec![1.0]), k)?;
    let m_union: usize = dims.iter().sum();
    let cfg = TheoremConfig {
        command: "validate-theorem",
        p: args.p.or(file.get("p")?).unwrap_or(100),
        k,
        dims,
        sizes,
        sigmas,
        signal,
        offset: args.offset.or(file.get("offset")?).unwrap_or(3.0),
        overlap: args.overlap.or(file.get("overlap")?).unwrap_or(0.0),
        m: args.m.or(file.get("m")?).unwrap_or(m_union),
        trials: args.trials.or(file.get("trials")?).unwrap_or(50),
        n_grid: args.n_grid.or(file.get("n_grid")?),
        seed: args.seed.or(file.get("seed")?).unwrap_or(0),
    };
    let model = SubspaceModel {
        p: cfg.p,
        subspace_dims: cfg.dims.clone(),
        cluster_sizes: cfg.sizes.clone(),
        noise_sigmas: cfg.sigmas.clone(),
        signal_min_eig: cfg.signal.clone(),
        signal_offset: cfg.offset,
        overlap: cfg.overlap,
        seed: cfg.seed,
    };
    let verdict = validate(&model, cfg.m, cfg.trials)?;
    let decay = cfg
        .n_grid
        .as_deref()
        .map(|grid| error_decay_study(&model, grid, cfg.trials))
        .transpose()?;

    out.prepare()?;
    out.write_json(
        "report.json",
        &TheoremOutput {
            config: &cfg,
            model: &model,
            verdict: &verdict,
            decay: decay.as_ref(),
        },
    )?;
    if let Some(d) = &decay {
        let path = out.dir.join("decay.csv");
        fs::write(&path, d.to_csv()).map_err(|e| OscError::Io { path, source: e })?;
    }

    let list = |v: &[f64]| v.iter().map(|x| sig6(*x)).collect::<Vec<_>>().join(",");
    out.say(&format!(
        "trials={} m={} m_union={} delta_hat={}",
        verdict.trials,
        verdict.m,
        verdict.m_union,
        sig6(verdict.delta_hat)
    ));
    out.say(&format!(
        "orthonormality_err={} residual_orth_err={}",
        sig6(verdict.orthonormality_err),
        sig6(verdict.residual_orth_err)
    ));
    out.say(&format!(
        "within_diag obs={} pred_union={} pred_mi={}",
        list(&verdict.within_diag_obs),
        list(&verdict.within_diag_pred_union),
        list(&verdict.within_diag_pred_mi)
    ));
    out.say(&format!(
        "cross_block_max={} cross_entry_max={} within_offdiag_max={}",
        sig6(verdict.cross_block_max),
        sig6(verdict.cross_entry_max),
        sig6(verdict.within_offdiag_max)
    ));
    if let Some(d) = &decay {
        out.say("N\tcross_block_max\twithin_offdiag_max\twithin_offdiag_rms");
        for r in &d.rows {
            out.say(&format!(
                "{}\t{}\t{}\t{}",
                r.n,
                sig6(r.cross_block_max),
                sig6(r.within_offdiag_max),
                sig6(r.within_offdiag_rms)
            ));
        }
        out.say(&format!("slope_max={} slope_rms={}", sig6(d.slope_max), sig6(d.slope_rms)));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MetricsConfig {
    command: String,
    #[serde(rename = "true")]
    truth: PathBuf,
    pred: PathBuf,
}

#[derive(Debug, Serialize)]
struct MetricsOutput<'a> {
    config: &'a MetricsConfig,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
}

fn cmd_metrics(args: MetricsArgs, file: &ConfigFile, out: &Output<'_>) -> Result<()> {
    let truth = match args.truth.or(file.get("true")?) {
        Some(p) => p,
        None => usage_error("metrics", "the following required argument was not provided: --true <TRUE>"),
    };
    let pred = match args.pred.or(file.get("pred")?) {
        Some(p) => p,
        None => usage_error("metrics", "the following required argument was not provided: --pred <PRED>"),
    };
    let cfg = MetricsConfig {
        command: "metrics".into(),
        truth,
        pred,
    };
    let report = evaluate(&read_labels(&cfg.truth)?, &read_labels(&cfg.pred)?)?;
    out.prepare()?;
    out.write_json("report.json", &MetricsOutput { config: &cfg, metrics: &report })?;
    out.say(&format!(
        "acc={} nmi={} ari={}",
        sig6(report.acc),
        sig6(report.nmi),
        sig6(report.ari)
    ));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(OscError::InvalidConfig("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| OscError::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let file = ConfigFile::load(cli.config.as_deref())?;
    let out = Output {
        dir: &cli.out_dir,
        verbose: cli.verbose,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Cluster(a) => cmd_cluster(a, &file, &out),
        Command::Sweep(a) => cmd_experiment("sweep", sweep_theta, a, &file, &out),
        Command::Subset(a) => cmd_experiment("subset", subset_robustness, a, &file, &out),
        Command::Bench(a) => cmd_experiment("bench", bench_runtime, a, &file, &out),
        Command::ValidateTheorem(a) => cmd_validate_theorem(a, &file, &out),
        Command::Metrics(a) => cmd_metrics(a, &file, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.123456789), "0.123457");
        assert_eq!(sig6(123456.789), "123457");
        assert_eq!(sig6(-2.5), "-2.5");
        assert_eq!(sig6(1.23456789e-9), "1.23457e-9");
        assert_eq!(sig6(9.87654321e12), "9.87654e12");
    }
}
