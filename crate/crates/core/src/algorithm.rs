//! The DM-GDA iteration: gossip-averaged primal descent / dual ascent with
//! STORM momentum estimators and gradient tracking.
//!
//! Per node `i`, one step from `t` to `t + 1` is
//!
//! ```text
//! x~_i = sum_j W_ij x_j - gamma * wx_i        y~_i = sum_j W_ij y_j + lambda * wy_i
//! x_i' = x_i + eta_t (x~_i - x_i)             y_i' = y_i + eta_t (y~_i - y_i)
//! xi   ~ D_i                                  (one draw, shared by all four gradients)
//! ux_i' = gx(x_i', y_i'; xi) + (1 - alpha_{t+1}) (ux_i - gx(x_i, y_i; xi))
//! uy_i' = gy(x_i', y_i'; xi) + (1 - beta_{t+1})  (uy_i - gy(x_i, y_i; xi))
//! wx_i' = sum_j W_ij (wx_j + ux_j' - ux_j)    wy_i' = sum_j W_ij (wy_j + uy_j' - uy_j)
//! ```
//!
//! Everything up to the `u` update is node-local; the tracker mix needs all
//! nodes' new `u` first. Noise for node `i` at iteration `t` comes from its
//! own RNG stream, so the serial and the rayon path are bit-identical.

use std::sync::Arc;

use log::warn;
use nalgebra::DVector;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsRecord, MetricsSink};
use crate::problems::{GradMode, ProblemConstants, ProblemError, ProblemInstance};
use crate::topology::MixingMatrix;

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("iterate became non-finite at t = {t} on node {node}")]
    Diverged { t: usize, node: usize },
    #[error("state is already at the horizon t = {0}")]
    HorizonReached(usize),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("metrics sink: {0}")]
    Sink(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleMode {
    /// `eta = c_eta T^{-1/3}`, `alpha = c_alpha T^{-2/3}`, `beta = c_beta T^{-2/3}`,
    /// each clamped to `(0, 1]`, constant in `t`.
    #[default]
    Theorem1,
    Constant { eta: f64, alpha: f64, beta: f64 },
    /// Sequences indexed by `t = 0..=T`. The step from `t` uses `eta[t]`,
    /// `alpha[t + 1]` and `beta[t + 1]`; `alpha[0]`, `beta[0]` are unused.
    Custom {
        eta: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Dmgda,
    /// Gradient tracking with plain stochastic gradients (`alpha = beta = 1`).
    DsgdaGt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub horizon: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub eta_scale: f64,
    pub alpha_scale: f64,
    pub beta_scale: f64,
    pub schedule: ScheduleMode,
    pub seed: u64,
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
}

fn clamp_unit(v: f64) -> f64 {
    v.min(1.0)
}

impl AlgoConfig {
    /// Theorem-1 schedule with unit scales and the largest step sizes the
    /// residual-descent preconditions allow:
    /// `lambda = min(1, 1/(2 L_f eta))`, `gamma = lambda mu / (16 L)`.
    pub fn theorem1_defaults(horizon: usize, constants: &ProblemConstants, seed: u64) -> Self {
        let mut cfg = Self {
            horizon,
            gamma: 1.0,
            lambda: 1.0,
            eta_scale: 1.0,
            alpha_scale: 1.0,
            beta_scale: 1.0,
            schedule: ScheduleMode::Theorem1,
            seed,
            variant: Variant::Dmgda,
        };
        let (gamma, lambda) = cfg.default_steps(constants);
        cfg.gamma = gamma;
        cfg.lambda = lambda;
        cfg
    }

    /// `(gamma, lambda)` at the edge of the feasibility region for this
    /// schedule.
    pub fn default_steps(&self, c: &ProblemConstants) -> (f64, f64) {
        let lambda = (1.0 / (2.0 * c.l_f * self.eta_max())).min(1.0);
        (lambda * c.mu / (16.0 * c.l), lambda)
    }

    pub fn validate(&self) -> Result<(), AlgoError> {
        let positive = [
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("eta_scale", self.eta_scale),
            ("alpha_scale", self.alpha_scale),
            ("beta_scale", self.beta_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AlgoError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(AlgoError::Config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        match &self.schedule {
            ScheduleMode::Theorem1 => {}
            ScheduleMode::Constant { eta, alpha, beta } => {
                unit("eta", *eta)?;
                unit("alpha", *alpha)?;
                unit("beta", *beta)?;
            }
            ScheduleMode::Custom { eta, alpha, beta } => {
                let need = self.horizon + 1;
                for (name, seq) in [("eta", eta), ("alpha", alpha), ("beta", beta)] {
                    if seq.len() < need {
                        return Err(AlgoError::Config(format!(
                            "custom {name} needs {need} entries (t = 0..=T), got {}",
                            seq.len()
                        )));
                    }
                }
                for t in 0..self.horizon {
                    unit("eta", eta[t])?;
                    unit("alpha", alpha[t + 1])?;
                    unit("beta", beta[t + 1])?;
                }
            }
        }
        Ok(())
    }

    /// Schedule values at index `t`.
    pub fn schedule(&self, t: usize) -> Schedule {
        let mut s = match &self.schedule {
            ScheduleMode::Theorem1 => {
                let root = (self.horizon.max(1) as f64).cbrt();
                Schedule {
                    eta: clamp_unit(self.eta_scale / root),
                    alpha: clamp_unit(self.alpha_scale / (root * root)),
                    beta: clamp_unit(self.beta_scale / (root * root)),
                }
            }
            ScheduleMode::Constant { eta, alpha, beta } => Schedule {
                eta: *eta,
                alpha: *alpha,
                beta: *beta,
            },
            ScheduleMode::Custom { eta, alpha, beta } => Schedule {
                eta: eta[t],
                alpha: alpha[t],
                beta: beta[t],
            },
        };
        if self.variant == Variant::DsgdaGt {
            s.alpha = 1.0;
            s.beta = 1.0;
        }
        s
    }

    pub fn eta_max(&self) -> f64 {
        match &self.schedule {
            ScheduleMode::Custom { eta, .. } => eta
                .iter()
                .take(self.horizon.max(1))
                .fold(0.0_f64, |a, &v| a.max(v)),
            _ => self.schedule(0).eta,
        }
    }

    /// Human-readable notes for every violated step-size precondition
    /// (`gamma <= lambda mu / (16 L)`, `lambda <= 1 / (2 L_f eta_max)`).
    pub fn feasibility_warnings(&self, c: &ProblemConstants) -> Vec<String> {
        let mut out = Vec::new();
        let gamma_max = self.lambda * c.mu / (16.0 * c.l);
        if self.gamma > gamma_max * (1.0 + 1e-12) {
            out.push(format!(
                "gamma = {:.6e} exceeds lambda*mu/(16L) = {:.6e}",
                self.gamma, gamma_max
            ));
        }
        let lambda_max = 1.0 / (2.0 * c.l_f * self.eta_max());
        if self.lambda > lambda_max * (1.0 + 1e-12) {
            out.push(format!(
                "lambda = {:.6e} exceeds 1/(2 L_f eta_max) = {:.6e}",
                self.lambda, lambda_max
            ));
        }
        out
    }
}

/// The no-variance-reduction baseline: same config with `alpha = beta = 1`.
pub fn make_baseline_dsgda(config: &AlgoConfig) -> AlgoConfig {
    AlgoConfig {
        variant: Variant::DsgdaGt,
        ..config.clone()
    }
}

/// Full swarm iterate at time `t`, one entry per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub t: usize,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub ux: Vec<DVector<f64>>,
    pub uy: Vec<DVector<f64>>,
    pub wx: Vec<DVector<f64>>,
    pub wy: Vec<DVector<f64>>,
    pub grad_calls: Vec<u64>,
}

pub(crate) fn mean(vs: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(vs[0].len());
    for v in vs {
        acc += v;
    }
    acc / vs.len() as f64
}

impl SwarmState {
    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn mean_x(&self) -> DVector<f64> {
        mean(&self.x)
    }

    pub fn mean_y(&self) -> DVector<f64> {
        mean(&self.y)
    }

    pub fn total_grad_calls(&self) -> u64 {
        self.grad_calls.iter().sum()
    }

    /// First node holding a non-finite coordinate.
    pub fn first_non_finite(&self) -> Option<usize> {
        (0..self.m()).find(|&i| {
            [&self.x[i], &self.y[i], &self.ux[i], &self.uy[i], &self.wx[i], &self.wy[i]]
                .iter()
                .any(|v| v.iter().any(|c| !c.is_finite()))
        })
    }

    /// Adds `magnitude` to every coordinate of node `node`'s primal tracker.
    /// Only useful for exercising the verification harness.
    pub fn perturb_tracker(&mut self, node: usize, magnitude: f64) {
        self.wx[node].add_scalar_mut(magnitude);
    }
}

/// Tilde iterates and schedule values of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub x_tilde: Vec<DVector<f64>>,
    pub y_tilde: Vec<DVector<f64>>,
    pub schedule: Schedule,
}

struct NodeUpdate {
    x_tilde: DVector<f64>,
    y_tilde: DVector<f64>,
    x: DVector<f64>,
    y: DVector<f64>,
    ux: DVector<f64>,
    uy: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Emit a record every `cadence` iterations (plus `t = 0` and `t = T`).
    pub cadence: usize,
}

impl RunOptions {
    /// 1 for short runs, 10 once `T > 10^4`.
    pub fn default_for(horizon: usize) -> Self {
        Self {
            cadence: if horizon <= 10_000 { 1 } else { 10 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub horizon: usize,
    pub stationarity_t0: f64,
    pub stationarity_t1: f64,
    /// Mean of `|grad F(xbar_t)|` over `t = 1..=T` (over `t = 0` if `T = 0`).
    pub mean_stationarity: f64,
    pub min_stationarity: f64,
    /// Mean over the last quarter, `t > 3T/4`.
    pub final_quarter_mean_stationarity: f64,
    pub final_stationarity: f64,
    /// `max_i |grad F(x_i)|` at the final iterate.
    pub final_node_max_stationarity: f64,
    pub residual_t0: f64,
    pub final_residual: f64,
    pub grad_calls_total: u64,
    #[serde(skip)]
    pub final_state: Option<SwarmState>,
}

/// One DM-GDA run over a fixed problem and topology.
pub struct Dmgda<'a> {
    config: &'a AlgoConfig,
    problem: &'a ProblemInstance,
    mixing: &'a MixingMatrix,
    pool: Option<Arc<ThreadPool>>,
}

impl<'a> Dmgda<'a> {
    pub fn new(config: &'a AlgoConfig, problem: &'a ProblemInstance, mixing: &'a MixingMatrix) -> Result<Self, AlgoError> {
        config.validate()?;
        if mixing.m() != problem.m() {
            return Err(AlgoError::Dimension(format!(
                "mixing matrix has {} nodes, problem has {}",
                mixing.m(),
                problem.m()
            )));
        }
        for w in config.feasibility_warnings(problem.constants()) {
            warn!("{w}");
        }
        Ok(Self {
            config,
            problem,
            mixing,
            pool: None,
        })
    }

    /// Runs the per-node phases on `pool`. Results are bit-identical to the
    /// serial path.
    pub fn with_pool(mut self, pool: Arc<ThreadPool>) -> Self {
        self.pool = Some(pool);
        self
    }

    pub fn config(&self) -> &AlgoConfig {
        self.config
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.problem
    }

    pub fn mixing(&self) -> &MixingMatrix {
        self.mixing
    }

    fn per_node<T: Send>(&self, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        let m = self.problem.m();
        match &self.pool {
            Some(pool) => pool.install(|| (0..m).into_par_iter().map(&f).collect()),
            None => (0..m).map(f).collect(),
        }
    }

    /// All nodes start from the same `(x0, y0)`.
    pub fn init(&self, x0: &DVector<f64>, y0: &DVector<f64>) -> Result<SwarmState, AlgoError> {
        let m = self.problem.m();
        self.init_per_node(vec![x0.clone(); m], vec![y0.clone(); m])
    }

    /// Initialization with per-node starting points: one stochastic gradient
    /// per node, then one tracker mix.
    pub fn init_per_node(&self, x: Vec<DVector<f64>>, y: Vec<DVector<f64>>) -> Result<SwarmState, AlgoError> {
        let m = self.problem.m();
        if x.len() != m || y.len() != m {
            return Err(AlgoError::Dimension(format!("expected {m} starting points")));
        }
        if let Some(i) = (0..m).find(|&i| x[i].len() != self.problem.d() || y[i].len() != self.problem.p()) {
            return Err(AlgoError::Dimension(format!(
                "node {i}: start has dims ({}, {}), problem has ({}, {})",
                x[i].len(),
                y[i].len(),
                self.problem.d(),
                self.problem.p()
            )));
        }
        let grads = self.per_node(|i| {
            let noise = self.problem.sample_noise(self.config.seed, i, 0);
            self.problem.grad_unchecked(i, &x[i], &y[i], GradMode::Sample(&noise))
        });
        let (ux, uy): (Vec<_>, Vec<_>) = grads.into_iter().unzip();
        let wx = self.per_node(|i| self.mixing.mix_row(i, &ux));
        let wy = self.per_node(|i| self.mixing.mix_row(i, &uy));
        let state = SwarmState {
            t: 0,
            x,
            y,
            ux,
            uy,
            wx,
            wy,
            grad_calls: vec![1; m],
        };
        if let Some(node) = state.first_non_finite() {
            return Err(AlgoError::Diverged { t: 0, node });
        }
        Ok(state)
    }

    fn node_update(&self, s: &SwarmState, i: usize, eta: f64, alpha: f64, beta: f64) -> NodeUpdate {
        let cfg = self.config;
        let mut x_tilde = self.mixing.mix_row(i, &s.x);
        x_tilde.axpy(-cfg.gamma, &s.wx[i], 1.0);
        let mut y_tilde = self.mixing.mix_row(i, &s.y);
        y_tilde.axpy(cfg.lambda, &s.wy[i], 1.0);

        let x = &s.x[i] + (&x_tilde - &s.x[i]) * eta;
        let y = &s.y[i] + (&y_tilde - &s.y[i]) * eta;

        let noise = self.problem.sample_noise(cfg.seed, i, (s.t + 1) as u64);
        let (gx_new, gy_new) = self.problem.grad_unchecked(i, &x, &y, GradMode::Sample(&noise));
        let (gx_old, gy_old) = self.problem.grad_unchecked(i, &s.x[i], &s.y[i], GradMode::Sample(&noise));
        let ux = gx_new + (&s.ux[i] - gx_old) * (1.0 - alpha);
        let uy = gy_new + (&s.uy[i] - gy_old) * (1.0 - beta);
        NodeUpdate {
            x_tilde,
            y_tilde,
            x,
            y,
            ux,
            uy,
        }
    }

    pub fn step(&self, state: &SwarmState) -> Result<SwarmState, AlgoError> {
        self.step_traced(state).map(|(s, _)| s)
    }

    /// One iteration, also returning the tilde iterates.
    pub fn step_traced(&self, state: &SwarmState) -> Result<(SwarmState, StepTrace), AlgoError> {
        let t = state.t;
        if t >= self.config.horizon {
            return Err(AlgoError::HorizonReached(t));
        }
        let eta = self.config.schedule(t).eta;
        let next = self.config.schedule(t + 1);
        let updates = self.per_node(|i| self.node_update(state, i, eta, next.alpha, next.beta));

        let m = updates.len();
        let mut x_tilde = Vec::with_capacity(m);
        let mut y_tilde = Vec::with_capacity(m);
        let mut x = Vec::with_capacity(m);
        let mut y = Vec::with_capacity(m);
        let mut ux = Vec::with_capacity(m);
        let mut uy = Vec::with_capacity(m);
        for u in updates {
            x_tilde.push(u.x_tilde);
            y_tilde.push(u.y_tilde);
            x.push(u.x);
            y.push(u.y);
            ux.push(u.ux);
            uy.push(u.uy);
        }

        // u' + (w - u) is the tracker increment; with w == u it is exactly u'.
        let shifted_x: Vec<_> = (0..m).map(|j| &ux[j] + (&state.wx[j] - &state.ux[j])).collect();
        let shifted_y: Vec<_> = (0..m).map(|j| &uy[j] + (&state.wy[j] - &state.uy[j])).collect();
        let wx = self.per_node(|i| self.mixing.mix_row(i, &shifted_x));
        let wy = self.per_node(|i| self.mixing.mix_row(i, &shifted_y));

        let out = SwarmState {
            t: t + 1,
            x,
            y,
            ux,
            uy,
            wx,
            wy,
            grad_calls: state.grad_calls.iter().map(|c| c + 4).collect(),
        };
        if let Some(node) = out.first_non_finite() {
            return Err(AlgoError::Diverged { t: t + 1, node });
        }
        Ok((
            out,
            StepTrace {
                x_tilde,
                y_tilde,
                schedule: Schedule {
                    eta,
                    alpha: next.alpha,
                    beta: next.beta,
                },
            },
        ))
    }

    /// Runs `T` steps from identical starting points.
    pub fn run(
        &self,
        x0: &DVector<f64>,
        y0: &DVector<f64>,
        sink: &mut dyn MetricsSink,
        opts: RunOptions,
    ) -> Result<RunSummary, AlgoError> {
        let state = self.init(x0, y0)?;
        self.run_from(state, sink, opts)
    }

    /// Runs from an initialized state up to the horizon, emitting a record
    /// at `t = 0`, every `cadence` iterations and at `t = T`. The trajectory
    /// mean uses every iteration regardless of cadence.
    pub fn run_from(&self, mut state: SwarmState, sink: &mut dyn MetricsSink, opts: RunOptions) -> Result<RunSummary, AlgoError> {
        let horizon = self.config.horizon;
        let cadence = opts.cadence.max(1);
        let first = metrics::measure(&state, self.problem);
        sink.record(&first)?;

        let quarter_start = horizon - horizon / 4;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut quarter_sum = 0.0;
        let mut quarter_n = 0usize;
        let mut stationarity_t1 = first.stationarity;
        let mut last = first.clone();

        while state.t < horizon {
            state = self.step(&state)?;
            let t = state.t;
            let s = if t.is_multiple_of(cadence) || t == horizon {
                last = metrics::measure(&state, self.problem);
                sink.record(&last)?;
                last.stationarity
            } else {
                metrics::stationarity(&state, self.problem)?
            };
            if t == 1 {
                stationarity_t1 = s;
            }
            sum += s;
            min = min.min(s);
            if t > quarter_start || horizon < 4 {
                quarter_sum += s;
                quarter_n += 1;
            }
        }

        let (mean_stationarity, min_stationarity, final_quarter) = if horizon == 0 {
            (first.stationarity, first.stationarity, first.stationarity)
        } else {
            (sum / horizon as f64, min, quarter_sum / quarter_n as f64)
        };
        Ok(RunSummary {
            horizon,
            stationarity_t0: first.stationarity,
            stationarity_t1,
            mean_stationarity,
            min_stationarity,
            final_quarter_mean_stationarity: final_quarter,
            final_stationarity: last.stationarity,
            final_node_max_stationarity: last.node_max_stationarity,
            residual_t0: first.residual,
            final_residual: last.residual,
            grad_calls_total: state.total_grad_calls(),
            final_state: Some(state),
        })
    }
}

/// Initializes a run with every node at `(x0, y0)`.
pub fn init_run(
    config: &AlgoConfig,
    problem: &ProblemInstance,
    mixing: &MixingMatrix,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
) -> Result<SwarmState, AlgoError> {
    Dmgda::new(config, problem, mixing)?.init(x0, y0)
}

pub fn step(
    state: &SwarmState,
    config: &AlgoConfig,
    problem: &ProblemInstance,
    mixing: &MixingMatrix,
) -> Result<SwarmState, AlgoError> {
    Dmgda::new(config, problem, mixing)?.step(state)
}

pub fn run(
    config: &AlgoConfig,
    problem: &ProblemInstance,
    mixing: &MixingMatrix,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    sink: &mut dyn MetricsSink,
) -> Result<RunSummary, AlgoError> {
    Dmgda::new(config, problem, mixing)?.run(x0, y0, sink, RunOptions::default_for(config.horizon))
}

/// Convenience for tests and tools that want every record in memory.
pub fn run_collect(
    engine: &Dmgda<'_>,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    opts: RunOptions,
) -> Result<(RunSummary, Vec<MetricsRecord>), AlgoError> {
    let mut records = Vec::new();
    let summary = engine.run(x0, y0, &mut records, opts)?;
    Ok((summary, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_sin2pl, QuadraticNode, Sin2PlParams};
    use crate::topology::{build_mixing, GraphFamily, Weighting};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn constant(horizon: usize, gamma: f64, lambda: f64, eta: f64, alpha: f64) -> AlgoConfig {
        AlgoConfig {
            horizon,
            gamma,
            lambda,
            eta_scale: 1.0,
            alpha_scale: 1.0,
            beta_scale: 1.0,
            schedule: ScheduleMode::Constant { eta, alpha, beta: alpha },
            seed: 3,
            variant: Variant::Dmgda,
        }
    }

    #[test]
    fn theorem1_schedule_values() {
        let prob = Sin2PlParams::new(2, 1, 1, 0.0, 1).build().unwrap();
        let mut cfg = AlgoConfig::theorem1_defaults(1000, prob.constants(), 0);
        let s = cfg.schedule(1);
        assert_relative_eq!(s.eta, 0.1, max_relative = 1e-15);
        assert_relative_eq!(s.alpha, 0.01, max_relative = 1e-15);
        assert_relative_eq!(s.beta, 0.01, max_relative = 1e-15);
        assert_eq!(cfg.schedule(1), cfg.schedule(777));

        cfg.horizon = 1;
        cfg.eta_scale = 5.0;
        cfg.alpha_scale = 3.0;
        let s = cfg.schedule(1);
        assert_eq!((s.eta, s.alpha, s.beta), (1.0, 1.0, 1.0));

        let c = constant(10, 0.1, 0.1, 0.05, 0.1);
        for t in 0..=10 {
            assert_eq!(c.schedule(t), Schedule { eta: 0.05, alpha: 0.1, beta: 0.1 });
        }
    }

    #[test]
    fn default_steps_satisfy_preconditions() {
        let prob = Sin2PlParams::new(4, 3, 3, 1.0, 2).build().unwrap();
        let cfg = AlgoConfig::theorem1_defaults(1000, prob.constants(), 0);
        assert!(cfg.feasibility_warnings(prob.constants()).is_empty());
        let c = prob.constants();
        assert_relative_eq!(cfg.gamma, cfg.lambda * c.mu / (16.0 * c.l), max_relative = 1e-15);
        let mut loud = cfg.clone();
        loud.lambda = 10.0;
        loud.gamma = 1.0;
        assert_eq!(loud.feasibility_warnings(c).len(), 2);
    }

    #[test]
    fn baseline_only_changes_momentum() {
        let prob = Sin2PlParams::new(2, 1, 1, 0.0, 1).build().unwrap();
        let cfg = AlgoConfig::theorem1_defaults(100, prob.constants(), 0);
        let base = make_baseline_dsgda(&cfg);
        assert_eq!(base.variant, Variant::DsgdaGt);
        assert_eq!(AlgoConfig { variant: Variant::Dmgda, ..base.clone() }, cfg);
        let s = base.schedule(5);
        assert_eq!((s.alpha, s.beta), (1.0, 1.0));
        assert_eq!(s.eta, cfg.schedule(5).eta);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = constant(3, 0.1, 0.1, 0.5, 0.5);
        c.gamma = 0.0;
        assert!(c.validate().is_err());
        let c = constant(3, 0.1, 0.1, 1.5, 0.5);
        assert!(c.validate().is_err());
        let mut c = constant(3, 0.1, 0.1, 0.5, 0.5);
        c.schedule = ScheduleMode::Custom {
            eta: vec![0.5; 3],
            alpha: vec![0.5; 4],
            beta: vec![0.5; 4],
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn noiseless_init_uses_exact_gradients() {
        let prob = Sin2PlParams::new(4, 2, 2, 0.0, 8).build().unwrap();
        let w = build_mixing(&GraphFamily::Ring, 4, Weighting::Metropolis).unwrap();
        let cfg = AlgoConfig::theorem1_defaults(10, prob.constants(), 0);
        let x0 = dv(&[1.0, -1.0]);
        let y0 = dv(&[0.5, 0.0]);
        let s = init_run(&cfg, &prob, &w, &x0, &y0).unwrap();
        for i in 0..4 {
            let (gx, gy) = prob.grad(i, &x0, &y0, GradMode::Exact).unwrap();
            assert_eq!(s.ux[i], gx);
            assert_eq!(s.uy[i], gy);
        }
        let (mx, _) = prob.mean_grad(&x0, &y0).unwrap();
        assert!((mean(&s.wx) - mx).amax() < 1e-14);
        assert_eq!(s.grad_calls, vec![1; 4]);
    }

    #[test]
    fn single_node_tracker_equals_estimator() {
        let prob = Sin2PlParams::new(1, 2, 2, 1.0, 8).build().unwrap();
        let w = build_mixing(&GraphFamily::Complete, 1, Weighting::Metropolis).unwrap();
        let cfg = constant(50, 0.05, 0.1, 0.5, 0.3);
        let engine = Dmgda::new(&cfg, &prob, &w).unwrap();
        let mut s = engine.init(&dv(&[1.0, 2.0]), &dv(&[0.0, 0.0])).unwrap();
        assert_eq!(s.wx, s.ux);
        while s.t < 50 {
            s = engine.step(&s).unwrap();
            assert_eq!(s.wx, s.ux);
            assert_eq!(s.wy, s.uy);
        }
    }

    #[test]
    fn single_node_noiseless_is_momentum_gda() {
        let prob = Sin2PlParams::new(1, 2, 1, 0.0, 8).build().unwrap();
        let w = build_mixing(&GraphFamily::Ring, 1, Weighting::Metropolis).unwrap();
        let (eta, alpha, gamma, lambda) = (0.4, 0.3, 0.05, 0.2);
        let cfg = constant(20, gamma, lambda, eta, alpha);
        let engine = Dmgda::new(&cfg, &prob, &w).unwrap();
        let mut s = engine.init(&dv(&[1.0, 2.0]), &dv(&[0.5])).unwrap();

        // independent single-node recursion
        let (mut x, mut y) = (dv(&[1.0, 2.0]), dv(&[0.5]));
        let (mut ux, mut uy) = prob.grad(0, &x, &y, GradMode::Exact).unwrap();
        for _ in 0..20 {
            s = engine.step(&s).unwrap();
            let xn = &x - &ux * (eta * gamma);
            let yn = &y + &uy * (eta * lambda);
            let (gxn, gyn) = prob.grad(0, &xn, &yn, GradMode::Exact).unwrap();
            let (gxo, gyo) = prob.grad(0, &x, &y, GradMode::Exact).unwrap();
            ux = gxn + (ux - gxo) * (1.0 - alpha);
            uy = gyn + (uy - gyo) * (1.0 - alpha);
            x = xn;
            y = yn;
            assert!((&s.x[0] - &x).amax() < 1e-13);
            assert!((&s.y[0] - &y).amax() < 1e-13);
            assert!((&s.ux[0] - &ux).amax() < 1e-12);
        }
    }

    #[test]
    fn unit_momentum_gives_fresh_gradient() {
        let prob = Sin2PlParams::new(3, 2, 2, 1.0, 5).build().unwrap();
        let w = build_mixing(&GraphFamily::Path, 3, Weighting::Metropolis).unwrap();
        let cfg = constant(5, 0.05, 0.1, 0.5, 1.0);
        let engine = Dmgda::new(&cfg, &prob, &w).unwrap();
        let s0 = engine.init(&dv(&[1.0, 2.0]), &dv(&[0.0, 1.0])).unwrap();
        let s1 = engine.step(&s0).unwrap();
        for i in 0..3 {
            let noise = prob.sample_noise(cfg.seed, i, 1);
            let (gx, gy) = prob.grad(i, &s1.x[i], &s1.y[i], GradMode::Sample(&noise)).unwrap();
            assert_eq!(s1.ux[i], gx);
            assert_eq!(s1.uy[i], gy);
        }
    }

    /// Hand-unrolled scalar arithmetic for one step on a 2-node sin2pl
    /// instance with d = p = 1.
    #[test]
    fn two_node_scalar_step_matches_hand_computation() {
        let node = |d: f64, c: f64| QuadraticNode {
            curvature: DMatrix::from_element(1, 1, d),
            center: dv(&[c]),
        };
        let pc = 0.7;
        let prob = make_sin2pl(vec![node(2.0, 0.5), node(-1.0, -1.0)], DMatrix::from_element(1, 1, pc), 0.0, 0).unwrap();
        let w = build_mixing(&GraphFamily::Path, 2, Weighting::Metropolis).unwrap();
        let (gamma, lambda, eta, alpha) = (0.1, 0.3, 0.5, 0.25);
        let cfg = constant(1, gamma, lambda, eta, alpha);
        let engine = Dmgda::new(&cfg, &prob, &w).unwrap();
        let s0 = engine
            .init_per_node(vec![dv(&[1.0]), dv(&[-0.5])], vec![dv(&[0.2]), dv(&[1.1])])
            .unwrap();
        let s1 = engine.step(&s0).unwrap();

        let dphi = |z: f64| 2.0 * z + 3.0 * (2.0 * z).sin();
        let dd = [2.0, -1.0];
        let cc = [0.5, -1.0];
        let gx = |i: usize, x: f64, y: f64| dd[i] * (x - cc[i]) + pc * dphi(y - pc * x);
        let gy = |_: usize, x: f64, y: f64| -dphi(y - pc * x);
        let x = [1.0, -0.5];
        let y = [0.2, 1.1];
        let ux: Vec<f64> = (0..2).map(|i| gx(i, x[i], y[i])).collect();
        let uy: Vec<f64> = (0..2).map(|i| gy(i, x[i], y[i])).collect();
        let wx = [(ux[0] + ux[1]) / 2.0; 2];
        let wy = [(uy[0] + uy[1]) / 2.0; 2];
        let xbar = (x[0] + x[1]) / 2.0;
        let ybar = (y[0] + y[1]) / 2.0;
        for i in 0..2 {
            let xt = xbar - gamma * wx[i];
            let yt = ybar + lambda * wy[i];
            let xn = x[i] + eta * (xt - x[i]);
            let yn = y[i] + eta * (yt - y[i]);
            let uxn = gx(i, xn, yn) + (1.0 - alpha) * (ux[i] - gx(i, x[i], y[i]));
            let uyn = gy(i, xn, yn) + (1.0 - alpha) * (uy[i] - gy(i, x[i], y[i]));
            assert_relative_eq!(s1.x[i][0], xn, epsilon = 1e-12);
            assert_relative_eq!(s1.y[i][0], yn, epsilon = 1e-12);
            assert_relative_eq!(s1.ux[i][0], uxn, epsilon = 1e-12);
            assert_relative_eq!(s1.uy[i][0], uyn, epsilon = 1e-12);
        }
        // w' = W (w + u' - u), W = all halves
        let ux1: Vec<f64> = (0..2).map(|i| s1.ux[i][0]).collect();
        let uy1: Vec<f64> = (0..2).map(|i| s1.uy[i][0]).collect();
        let wxn = (wx[0] + ux1[0] - ux[0] + wx[1] + ux1[1] - ux[1]) / 2.0;
        let wyn = (wy[0] + uy1[0] - uy[0] + wy[1] + uy1[1] - uy[1]) / 2.0;
        for i in 0..2 {
            assert_relative_eq!(s1.wx[i][0], wxn, epsilon = 1e-12);
            assert_relative_eq!(s1.wy[i][0], wyn, epsilon = 1e-12);
        }
        assert_eq!(s1.grad_calls, vec![5, 5]);
    }

    #[test]
    fn horizon_is_enforced() {
        let prob = Sin2PlParams::new(2, 1, 1, 0.0, 1).build().unwrap();
        let w = build_mixing(&GraphFamily::Ring, 2, Weighting::Metropolis).unwrap();
        let cfg = constant(1, 0.1, 0.1, 0.5, 0.5);
        let engine = Dmgda::new(&cfg, &prob, &w).unwrap();
        let s = engine.step(&engine.init(&dv(&[0.0]), &dv(&[0.0])).unwrap()).unwrap();
        assert!(matches!(engine.step(&s), Err(AlgoError::HorizonReached(1))));
    }

    #[test]
    fn divergence_is_reported() {
        let prob = Sin2PlParams::new(2, 2, 2, 0.0, 1).build().unwrap();
        let w = build_mixing(&GraphFamily::Ring, 2, Weighting::Metropolis).unwrap();
        let cfg = constant(10_000, 1e3, 1e3, 1.0, 1.0);
        let engine = Dmgda::new(&cfg, &prob, &w).unwrap();
        let mut records = Vec::new();
        let err = engine
            .run(&dv(&[1.0, 1.0]), &dv(&[0.0, 0.0]), &mut records, RunOptions { cadence: 1 })
            .unwrap_err();
        match err {
            AlgoError::Diverged { t, .. } => {
                assert!(t > 0);
                assert_eq!(records.len(), t);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn mismatched_topology_rejected() {
        let prob = Sin2PlParams::new(3, 1, 1, 0.0, 1).build().unwrap();
        let w = build_mixing(&GraphFamily::Ring, 4, Weighting::Metropolis).unwrap();
        let cfg = constant(1, 0.1, 0.1, 0.5, 0.5);
        assert!(matches!(Dmgda::new(&cfg, &prob, &w), Err(AlgoError::Dimension(_))));
    }
}
