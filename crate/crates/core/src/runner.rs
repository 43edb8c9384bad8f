//! Experiment configs and the `run`, `sweep` and `verify` commands.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 config error, 3 divergence.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithm::{AlgoConfig, AlgoError, Dmgda, RunOptions, RunSummary, ScheduleMode, SwarmState, Variant};
use crate::metrics::{self, CsvSink, RateFit};
use crate::problems::{ProblemInstance, ProblemSpec};
use crate::topology::{build_mixing, validate_mixing, GraphFamily, MixingMatrix, Weighting};
use crate::verify::{self, CheckResult, Perturbation, VerificationReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "DMGDA_THREADS";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run diverged: {0}")]
    Diverged(AlgoError),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::VerificationFailed(_) => 1,
            RunnerError::Config { .. } | RunnerError::Io { .. } => 2,
            RunnerError::Diverged(_) => 3,
        }
    }

    fn config(path: &str, msg: impl ToString) -> Self {
        RunnerError::Config {
            path: path.to_string(),
            msg: msg.to_string(),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> RunnerError {
    let context = context.into();
    move |source| RunnerError::Io { context, source }
}

fn from_algo(e: AlgoError) -> RunnerError {
    match e {
        AlgoError::Diverged { .. } => RunnerError::Diverged(e),
        AlgoError::Sink(source) => RunnerError::Io {
            context: "writing metrics".into(),
            source,
        },
        other => RunnerError::config("algorithm", other),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub graph: GraphFamily,
    /// Defaults to the problem's node count; must agree with it if given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default)]
    pub weighting: Weighting,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    /// Defaults to `lambda mu / (16 L)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Defaults to `min(1, 1 / (2 L_f eta_max))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "one")]
    pub eta_scale: f64,
    #[serde(default = "one")]
    pub alpha_scale: f64,
    #[serde(default = "one")]
    pub beta_scale: f64,
    #[serde(default)]
    pub schedule: ScheduleMode,
    pub seed: u64,
    #[serde(default)]
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// Common starting point; zeros if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    /// Standard deviation of per-node Gaussian offsets around the start.
    #[serde(default)]
    pub spread: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            x0: None,
            y0: None,
            spread: 0.0,
            seed: 0,
        }
    }
}

fn default_repeats() -> usize {
    5
}

fn default_certificate_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Horizon of `run` and `verify`.
    #[serde(default)]
    pub horizon: usize,
    /// Horizons of `sweep`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Defaults to 1 for `T <= 10^4`, else 10.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default = "default_certificate_samples")]
    pub certificate_samples: usize,
    /// Test hook: corrupt one tracker during `verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_tracking: Option<Perturbation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub topology: TopologySpec,
    pub algorithm: AlgorithmSpec,
    pub run: RunSpec,
}

/// Parses a config, reporting the JSON path of the first offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, RunnerError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        RunnerError::config(&path, e.into_inner())
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunnerError> {
    let text = fs::read_to_string(path).map_err(|e| RunnerError::config(&path.display().to_string(), e))?;
    parse_config(&text)
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliOptions {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub cadence: Option<usize>,
}

/// `--threads`, else `DMGDA_THREADS`, else 1.
pub fn resolve_threads(cli: Option<usize>) -> Result<usize, RunnerError> {
    let n = match cli {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| RunnerError::config(THREADS_ENV, format!("not a thread count: {v:?}")))?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(RunnerError::config("threads", "must be at least 1"));
    }
    Ok(n)
}

/// A config with problem, topology and defaults materialized.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub problem: ProblemInstance,
    pub mixing: MixingMatrix,
    pub pool: Option<Arc<ThreadPool>>,
    pub threads: usize,
    pub out_dir: PathBuf,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig, opts: &CliOptions) -> Result<Self, RunnerError> {
        let problem = config.problem.build().map_err(|e| RunnerError::config("problem", e))?;
        let m = problem.m();
        if let Some(tm) = config.topology.m {
            if tm != m {
                return Err(RunnerError::config(
                    "topology.m",
                    format!("topology has {tm} nodes but the problem has {m}"),
                ));
            }
        }
        let mixing = build_mixing(&config.topology.graph, m, config.topology.weighting)
            .map_err(|e| RunnerError::config("topology", e))?;
        let threads = resolve_threads(opts.threads)?;
        let pool = if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| RunnerError::config("threads", e))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        let mut config = config.clone();
        config.topology.m = Some(m);
        if let Some(c) = opts.cadence {
            if c == 0 {
                return Err(RunnerError::config("cadence", "must be at least 1"));
            }
            config.run.cadence = Some(c);
        }
        if config.run.cadence == Some(0) {
            return Err(RunnerError::config("run.cadence", "must be at least 1"));
        }
        let out_dir = opts
            .out
            .clone()
            .or_else(|| config.run.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        config.run.out_dir = Some(out_dir.clone());
        let x_len = config.run.init.x0.as_ref().map_or(problem.d(), Vec::len);
        let y_len = config.run.init.y0.as_ref().map_or(problem.p(), Vec::len);
        if x_len != problem.d() {
            return Err(RunnerError::config("run.init.x0", format!("expected {} entries, got {x_len}", problem.d())));
        }
        if y_len != problem.p() {
            return Err(RunnerError::config("run.init.y0", format!("expected {} entries, got {y_len}", problem.p())));
        }
        Ok(Self {
            config,
            problem,
            mixing,
            pool,
            threads,
            out_dir,
        })
    }

    /// Resolved algorithm config for one horizon and seed offset.
    pub fn algo_config(&self, horizon: usize, repeat: u64) -> Result<AlgoConfig, RunnerError> {
        let spec = &self.config.algorithm;
        let mut cfg = AlgoConfig {
            horizon,
            gamma: 1.0,
            lambda: 1.0,
            eta_scale: spec.eta_scale,
            alpha_scale: spec.alpha_scale,
            beta_scale: spec.beta_scale,
            schedule: spec.schedule.clone(),
            seed: spec.seed.wrapping_add(repeat),
            variant: spec.variant,
        };
        let c = self.problem.constants();
        let (_, lambda) = cfg.default_steps(c);
        cfg.lambda = spec.lambda.unwrap_or(lambda);
        cfg.gamma = spec.gamma.unwrap_or(cfg.lambda * c.mu / (16.0 * c.l));
        cfg.validate().map_err(|e| RunnerError::config("algorithm", e))?;
        Ok(cfg)
    }

    /// The config with `gamma`, `lambda` and `cadence` filled in.
    pub fn resolved_config(&self, horizon: usize) -> Result<ExperimentConfig, RunnerError> {
        let algo = self.algo_config(horizon, 0)?;
        let mut config = self.config.clone();
        config.algorithm.gamma = Some(algo.gamma);
        config.algorithm.lambda = Some(algo.lambda);
        if config.run.cadence.is_none() {
            config.run.cadence = Some(RunOptions::default_for(horizon).cadence);
        }
        Ok(config)
    }

    fn run_options(&self, horizon: usize) -> RunOptions {
        RunOptions {
            cadence: self.config.run.cadence.unwrap_or(RunOptions::default_for(horizon).cadence),
        }
    }

    fn engine<'a>(&'a self, cfg: &'a AlgoConfig) -> Result<Dmgda<'a>, RunnerError> {
        let engine = Dmgda::new(cfg, &self.problem, &self.mixing).map_err(from_algo)?;
        Ok(match &self.pool {
            Some(pool) => engine.with_pool(pool.clone()),
            None => engine,
        })
    }

    /// Initial swarm state per the `init` section.
    pub fn start(&self, engine: &Dmgda<'_>) -> Result<SwarmState, RunnerError> {
        let init = &self.config.run.init;
        let (d, p, m) = (self.problem.d(), self.problem.p(), self.problem.m());
        let x0 = init.x0.as_ref().map_or_else(|| DVector::zeros(d), |v| DVector::from_column_slice(v));
        let y0 = init.y0.as_ref().map_or_else(|| DVector::zeros(p), |v| DVector::from_column_slice(v));
        let state = if init.spread > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
            let mut offset = |n: usize| {
                DVector::from_fn(n, |_, _| {
                    init.spread * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
            };
            let xs: Vec<_> = (0..m).map(|_| &x0 + offset(d)).collect();
            let ys: Vec<_> = (0..m).map(|_| &y0 + offset(p)).collect();
            engine.init_per_node(xs, ys)
        } else {
            engine.init(&x0, &y0)
        };
        state.map_err(from_algo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunArtifact {
    pub version: &'static str,
    pub family: &'static str,
    pub nu: f64,
    pub threads: usize,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    pub grad_calls_expected: u64,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged: Option<Divergence>,
    pub config: ExperimentConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunnerError> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    fs::write(path, text + "\n").map_err(io_err(format!("writing {}", path.display())))
}

/// One run into `dir`: `metrics.csv` and `summary.json`. Divergence still
/// writes both, then surfaces as an error.
fn run_into(prep: &Prepared, horizon: usize, repeat: u64, dir: &Path, parallel_nodes: bool) -> Result<RunArtifact, RunnerError> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    let cfg = prep.algo_config(horizon, repeat)?;
    let engine = if parallel_nodes {
        prep.engine(&cfg)?
    } else {
        Dmgda::new(&cfg, &prep.problem, &prep.mixing).map_err(from_algo)?
    };
    let warnings = cfg.feasibility_warnings(prep.problem.constants());
    let csv_path = dir.join("metrics.csv");
    let file = File::create(&csv_path).map_err(io_err(format!("creating {}", csv_path.display())))?;
    let mut sink = CsvSink::new(BufWriter::new(file)).map_err(io_err("writing metrics"))?;
    let clock = Instant::now();
    let result = prep
        .start(&engine)
        .and_then(|s| engine.run_from(s, &mut sink, prep.run_options(horizon)).map_err(from_algo));
    let wall = clock.elapsed().as_secs_f64();
    sink.into_inner()
        .and_then(|mut w| w.flush())
        .map_err(io_err("flushing metrics"))?;

    let mut config = prep.resolved_config(horizon)?;
    config.run.horizon = horizon;
    config.algorithm.seed = cfg.seed;
    let m = prep.problem.m() as u64;
    let mut artifact = RunArtifact {
        version: VERSION,
        family: prep.problem.family_name(),
        nu: prep.mixing.nu(),
        threads: if parallel_nodes { prep.threads } else { 1 },
        wall_time_s: wall,
        summary: None,
        grad_calls_expected: 4 * m * horizon as u64 + m,
        warnings,
        diverged: None,
        config,
    };
    match result {
        Ok(summary) => {
            artifact.summary = Some(summary);
            write_json(&dir.join("summary.json"), &artifact)?;
            Ok(artifact)
        }
        Err(err) => {
            if let RunnerError::Diverged(e) = &err {
                artifact.diverged = Some(Divergence { message: e.to_string() });
                write_json(&dir.join("summary.json"), &artifact)?;
            }
            Err(err)
        }
    }
}

pub fn cmd_run(config: &ExperimentConfig, opts: &CliOptions) -> Result<RunArtifact, RunnerError> {
    let prep = Prepared::new(config, opts)?;
    let horizon = prep.config.run.horizon;
    let art = run_into(&prep, horizon, 0, &prep.out_dir, true)?;
    info!("wrote {}", prep.out_dir.display());
    Ok(art)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub horizons: Vec<usize>,
    /// `[horizon][repeat]` trajectory-mean stationarity.
    pub means: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fit: RateFit,
    /// Final-quarter mean stationarity, `[horizon][repeat]`.
    pub final_quarter: Vec<Vec<f64>>,
    pub stationarity_t1: Vec<Vec<f64>>,
    pub residual_t0: Vec<Vec<f64>>,
    pub final_residual: Vec<Vec<f64>>,
}

/// `R` repeats at each horizon, run in parallel when a pool is available.
/// Writes `T{T}/r{r}/` per run, `sweep.csv` and `rate.json`.
pub fn cmd_sweep(config: &ExperimentConfig, opts: &CliOptions) -> Result<SweepResult, RunnerError> {
    let prep = Prepared::new(config, opts)?;
    let horizons = prep.config.run.horizons.clone();
    if horizons.len() < 3 {
        return Err(RunnerError::config(
            "run.horizons",
            format!("a rate fit needs at least 3 horizons, got {}", horizons.len()),
        ));
    }
    let mut sorted = horizons.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != horizons.len() || sorted[0] == 0 {
        return Err(RunnerError::config("run.horizons", "horizons must be distinct and positive"));
    }
    let repeats = prep.config.run.repeats;
    if repeats == 0 {
        return Err(RunnerError::config("run.repeats", "must be at least 1"));
    }
    let jobs: Vec<(usize, usize)> = horizons
        .iter()
        .flat_map(|&t| (0..repeats).map(move |r| (t, r)))
        .collect();
    let run_job = |&(t, r): &(usize, usize)| {
        let dir = prep.out_dir.join(format!("T{t}")).join(format!("r{r}"));
        run_into(&prep, t, r as u64, &dir, false)
    };
    let results: Vec<Result<RunArtifact, RunnerError>> = match &prep.pool {
        Some(pool) => pool.install(|| jobs.par_iter().map(run_job).collect()),
        None => jobs.iter().map(run_job).collect(),
    };
    let mut summaries = Vec::with_capacity(results.len());
    for r in results {
        summaries.push(r?.summary.expect("successful run has a summary"));
    }

    let grid = |f: &dyn Fn(&RunSummary) -> f64| -> Vec<Vec<f64>> {
        summaries.chunks(repeats).map(|c| c.iter().map(f).collect()).collect()
    };
    let means = grid(&|s| s.mean_stationarity);
    let (mean, stderr): (Vec<f64>, Vec<f64>) = means.iter().map(|row| metrics::mean_stderr(row)).unzip();
    let samples: Vec<(f64, f64)> = horizons.iter().zip(&mean).map(|(&t, &m)| (t as f64, m)).collect();
    let fit = metrics::rate_fit(&samples).map_err(|e| RunnerError::config("run.horizons", e))?;

    let mut csv = String::from("T");
    for r in 0..repeats {
        csv.push_str(&format!(",repeat_{r}"));
    }
    csv.push_str(",mean,stderr\n");
    for (k, &t) in horizons.iter().enumerate() {
        csv.push_str(&t.to_string());
        for v in &means[k] {
            csv.push(',');
            csv.push_str(&metrics::format_f64(*v));
        }
        csv.push_str(&format!(",{},{}\n", metrics::format_f64(mean[k]), metrics::format_f64(stderr[k])));
    }
    fs::create_dir_all(&prep.out_dir).map_err(io_err(format!("creating {}", prep.out_dir.display())))?;
    let sweep_path = prep.out_dir.join("sweep.csv");
    fs::write(&sweep_path, csv).map_err(io_err(format!("writing {}", sweep_path.display())))?;

    #[derive(Serialize)]
    struct RateDoc<'a> {
        slope: f64,
        intercept: f64,
        r2: f64,
        horizons: &'a [usize],
        mean: &'a [f64],
        stderr: &'a [f64],
        repeats: usize,
        version: &'static str,
    }
    write_json(
        &prep.out_dir.join("rate.json"),
        &RateDoc {
            slope: fit.slope,
            intercept: fit.intercept,
            r2: fit.r2,
            horizons: &horizons,
            mean: &mean,
            stderr: &stderr,
            repeats,
            version: VERSION,
        },
    )?;
    Ok(SweepResult {
        horizons,
        means,
        mean,
        stderr,
        fit,
        final_quarter: grid(&|s| s.final_quarter_mean_stationarity),
        stationarity_t1: grid(&|s| s.stationarity_t1),
        residual_t0: grid(&|s| s.residual_t0),
        final_residual: grid(&|s| s.final_residual),
    })
}

/// One instrumented trajectory plus the problem certificates. Writes
/// `report.json` and `report.txt`; a failed check becomes
/// [`RunnerError::VerificationFailed`] after the report is written.
pub fn cmd_verify(config: &ExperimentConfig, opts: &CliOptions) -> Result<VerificationReport, RunnerError> {
    let prep = Prepared::new(config, opts)?;
    let horizon = prep.config.run.horizon;
    let cfg = prep.algo_config(horizon, 0)?;
    let engine = prep.engine(&cfg)?;
    let start = prep.start(&engine)?;
    let mut report = verify::verify_run(
        &engine,
        start,
        prep.config.run.perturb_tracking,
        prep.config.run.certificate_samples,
        cfg.seed,
    )
    .map_err(from_algo)?;
    let mixing = validate_mixing(prep.mixing.weights());
    report.checks.extend(mixing.checks.iter().map(|c| CheckResult {
        name: format!("mixing_{}", c.name),
        passed: c.passed,
        worst: c.worst,
        location: None,
        detail: format!("mixing matrix invariant, nu = {:.6}", mixing.nu),
    }));
    fs::create_dir_all(&prep.out_dir).map_err(io_err(format!("creating {}", prep.out_dir.display())))?;
    let json_path = prep.out_dir.join("report.json");
    fs::write(&json_path, report.to_json() + "\n").map_err(io_err(format!("writing {}", json_path.display())))?;
    let txt_path = prep.out_dir.join("report.txt");
    fs::write(&txt_path, report.to_text()).map_err(io_err(format!("writing {}", txt_path.display())))?;
    if report.passed() {
        Ok(report)
    } else {
        let names: Vec<_> = report.failures().iter().map(|c| c.name.clone()).collect();
        Err(RunnerError::VerificationFailed(names.join(", ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"family": "sin2pl", "m": 4, "d": 2, "p": 2, "noise_sigma": 1.0, "seed": 3},
        "topology": {"graph": {"family": "ring"}},
        "algorithm": {"seed": 7},
        "run": {"horizon": 10}
    }"#;

    #[test]
    fn minimal_config_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.run.repeats, 5);
        assert_eq!(c.algorithm.schedule, ScheduleMode::Theorem1);
        assert_eq!(c.topology.weighting, Weighting::Metropolis);
        assert_eq!(c.algorithm.gamma, None);
        let back = parse_config(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_field_names_its_path() {
        let bad = MINIMAL.replace(r#""seed": 7"#, r#""seed": 7, "gama": 0.1"#);
        match parse_config(&bad) {
            Err(RunnerError::Config { path, msg }) => {
                assert!(path.starts_with("algorithm"), "{path}");
                assert!(msg.contains("gama"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace(r#""noise_sigma": 1.0"#, r#""noise_sigma": "big""#);
        match parse_config(&bad) {
            Err(e @ RunnerError::Config { .. }) => {
                assert_eq!(e.exit_code(), 2);
                assert!(e.to_string().contains("problem"), "{e}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_resolve_from_constants() {
        let c = parse_config(MINIMAL).unwrap();
        let prep = Prepared::new(&c, &CliOptions::default()).unwrap();
        let algo = prep.algo_config(1000, 0).unwrap();
        let reference = AlgoConfig::theorem1_defaults(1000, prep.problem.constants(), 7);
        assert_eq!(algo, reference);
        let resolved = prep.resolved_config(1000).unwrap();
        assert_eq!(resolved.algorithm.gamma, Some(reference.gamma));
        assert_eq!(resolved.run.cadence, Some(1));
        assert_eq!(prep.resolved_config(100_000).unwrap().run.cadence, Some(10));
    }

    #[test]
    fn topology_size_mismatch_is_config_error() {
        let bad = MINIMAL.replace(r#"{"family": "ring"}"#, r#"{"family": "ring"}, "m": 5"#);
        let c = parse_config(&bad).unwrap();
        let err = Prepared::new(&c, &CliOptions::default()).err().unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn thread_resolution() {
        assert_eq!(resolve_threads(Some(3)).unwrap(), 3);
        assert!(resolve_threads(Some(0)).is_err());
    }
}
