//! Per-iteration diagnostics and convergence-rate fits.

use std::io::{self, Write};

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::algorithm::{mean, SwarmState};
use crate::problems::{InnerMaxOptions, ProblemError, ProblemInstance};

pub const CSV_HEADER: &str = "t,stationarity,consensus_x,consensus_y,tracking_dev_x,tracking_dev_y,residual,dual_dist,grad_calls";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("rate fit needs at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("rate fit needs distinct horizons, {0} appears twice")]
    DuplicateHorizon(f64),
    #[error("rate fit needs positive values, got ({t}, {value})")]
    NonPositive { t: f64, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub t: usize,
    /// `|grad F(xbar_t)|`.
    pub stationarity: f64,
    /// `(1/m) sum_i |x_i - xbar|^2`.
    pub consensus_x: f64,
    pub consensus_y: f64,
    /// `|ubar - wbar|`, zero up to rounding.
    pub tracking_dev_x: f64,
    pub tracking_dev_y: f64,
    /// `F(xbar) - f(xbar, ybar)`.
    pub residual: f64,
    pub dual_dist: Option<f64>,
    pub grad_calls: u64,
    /// `max_i |grad F(x_i)|`.
    pub node_max_stationarity: f64,
    /// The value of `F` came from the numerical inner maximizer.
    pub approximate: bool,
    /// No oracle produced a value; `stationarity` and `residual` are NaN.
    pub oracle_failed: bool,
}

fn spread(vs: &[DVector<f64>]) -> f64 {
    let c = mean(vs);
    vs.iter().map(|v| (v - &c).norm_squared()).sum::<f64>() / vs.len() as f64
}

fn oracle_with_fallback(problem: &ProblemInstance, x: &DVector<f64>) -> Option<(f64, DVector<f64>, bool)> {
    match problem.oracle_f(x) {
        Ok(o) => Some((o.value, o.grad, o.approximate)),
        Err(_) => match problem.oracle_f_fallback(x, &InnerMaxOptions::default()) {
            Ok((o, _)) => Some((o.value, o.grad, true)),
            Err(ProblemError::InnerMaxNotConverged { .. }) | Err(_) => None,
        },
    }
}

/// `|grad F(xbar_t)|` alone.
pub fn stationarity(state: &SwarmState, problem: &ProblemInstance) -> Result<f64, ProblemError> {
    Ok(problem.oracle_f(&state.mean_x())?.grad.norm())
}

/// All diagnostics of a state. Reads only; oracle failures are flagged in
/// the record rather than returned.
pub fn measure(state: &SwarmState, problem: &ProblemInstance) -> MetricsRecord {
    let xbar = state.mean_x();
    let ybar = state.mean_y();
    let (stationarity, residual, approximate, failed) = match oracle_with_fallback(problem, &xbar) {
        Some((value, grad, approx)) => {
            let f = problem.mean_value(&xbar, &ybar).unwrap_or(f64::NAN);
            (grad.norm(), value - f, approx, false)
        }
        None => (f64::NAN, f64::NAN, false, true),
    };
    let node_max_stationarity = state
        .x
        .iter()
        .map(|x| oracle_with_fallback(problem, x).map_or(f64::NAN, |(_, g, _)| g.norm()))
        .fold(0.0_f64, |a, v| if v.is_nan() || a.is_nan() { f64::NAN } else { a.max(v) });
    MetricsRecord {
        t: state.t,
        stationarity,
        consensus_x: spread(&state.x),
        consensus_y: spread(&state.y),
        tracking_dev_x: (mean(&state.ux) - mean(&state.wx)).norm(),
        tracking_dev_y: (mean(&state.uy) - mean(&state.wy)).norm(),
        residual,
        dual_dist: problem.dist_to_argmax(&xbar, &ybar).ok(),
        grad_calls: state.total_grad_calls(),
        node_max_stationarity,
        approximate,
        oracle_failed: failed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ln value` on `ln T`.
pub fn rate_fit(samples: &[(f64, f64)]) -> Result<RateFit, MetricsError> {
    if samples.len() < 3 {
        return Err(MetricsError::TooFewSamples(samples.len()));
    }
    for (k, &(t, v)) in samples.iter().enumerate() {
        if !(t > 0.0 && v > 0.0) {
            return Err(MetricsError::NonPositive { t, value: v });
        }
        if samples[..k].iter().any(|&(s, _)| s == t) {
            return Err(MetricsError::DuplicateHorizon(t));
        }
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit { slope, intercept, r2 })
}

/// Mean and standard error of a sample (stderr 0 for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub trait MetricsSink {
    fn record(&mut self, rec: &MetricsRecord) -> io::Result<()>;
}

impl MetricsSink for Vec<MetricsRecord> {
    fn record(&mut self, rec: &MetricsRecord) -> io::Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// Drops every record.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _: &MetricsRecord) -> io::Result<()> {
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_row(r: &MetricsRecord) -> String {
    let dual = r.dual_dist.map(format_f64).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.t,
        format_f64(r.stationarity),
        format_f64(r.consensus_x),
        format_f64(r.consensus_y),
        format_f64(r.tracking_dev_x),
        format_f64(r.tracking_dev_y),
        format_f64(r.residual),
        dual,
        r.grad_calls
    )
}

/// Writes the header on construction, then one LF-terminated row per record.
pub struct CsvSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(Self { out })
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> MetricsSink for CsvSink<W> {
    fn record(&mut self, rec: &MetricsRecord) -> io::Result<()> {
        writeln!(self.out, "{}", csv_row(rec))
    }
}

/// Forwards to two sinks.
pub struct Tee<'a>(pub &'a mut dyn MetricsSink, pub &'a mut dyn MetricsSink);

impl MetricsSink for Tee<'_> {
    fn record(&mut self, rec: &MetricsRecord) -> io::Result<()> {
        self.0.record(rec)?;
        self.1.record(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{AlgoConfig, Dmgda, RunOptions};
    use crate::problems::{make_sin2pl, phi_prime, QuadraticNode, Sin2PlParams};
    use crate::topology::{build_mixing, GraphFamily, Weighting};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn state_at(m: usize, x: DVector<f64>, y: DVector<f64>) -> SwarmState {
        let zx = DVector::zeros(x.len());
        let zy = DVector::zeros(y.len());
        SwarmState {
            t: 0,
            x: vec![x; m],
            y: vec![y; m],
            ux: vec![zx.clone(); m],
            uy: vec![zy.clone(); m],
            wx: vec![zx; m],
            wy: vec![zy; m],
            grad_calls: vec![0; m],
        }
    }

    #[test]
    fn exact_power_slope() {
        let s: Vec<_> = [1e3, 1e4, 1e5, 1e6].iter().map(|&t: &f64| (t, t.powf(-1.0 / 3.0))).collect();
        let fit = rate_fit(&s).unwrap();
        assert!((fit.slope + 1.0 / 3.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data_has_zero_slope() {
        let fit = rate_fit(&[(10.0, 2.0), (100.0, 2.0), (1000.0, 2.0)]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r2, 1.0);
        assert_relative_eq!(fit.intercept, 2.0_f64.ln());
    }

    #[test]
    fn rate_fit_rejects_bad_input() {
        assert_eq!(rate_fit(&[(1.0, 1.0), (2.0, 1.0)]), Err(MetricsError::TooFewSamples(2)));
        assert!(matches!(
            rate_fit(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]),
            Err(MetricsError::NonPositive { .. })
        ));
        assert_eq!(
            rate_fit(&[(1.0, 1.0), (2.0, 1.0), (2.0, 3.0)]),
            Err(MetricsError::DuplicateHorizon(2.0))
        );
    }

    #[test]
    fn stationary_point_measures_zero() {
        // F(x) = x^2 / 4 has its minimum at 0, y*(0) = 0.
        let node = |d: f64| QuadraticNode {
            curvature: DMatrix::from_element(1, 1, d),
            center: dv(&[0.0]),
        };
        let prob = make_sin2pl(vec![node(2.0), node(-1.0)], DMatrix::from_element(1, 1, 1.0), 0.0, 0).unwrap();
        let r = measure(&state_at(2, dv(&[0.0]), dv(&[0.0])), &prob);
        assert_eq!(r.stationarity, 0.0);
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.consensus_x, 0.0);
        assert_eq!(r.consensus_y, 0.0);
        assert_eq!(r.dual_dist, Some(0.0));
    }

    #[test]
    fn scalar_stationarity_matches_finite_differences() {
        let node = |d: f64, c: f64| QuadraticNode {
            curvature: DMatrix::from_element(1, 1, d),
            center: dv(&[c]),
        };
        let prob = make_sin2pl(vec![node(2.0, 0.3), node(-1.0, 0.1)], DMatrix::from_element(1, 1, 0.8), 0.0, 0).unwrap();
        // F(x) = mean_i D_i (x - c_i)^2 / 2 since phi(0) = 0 at y = Px
        let big_f = |x: f64| (2.0 * (x - 0.3).powi(2) - (x - 0.1).powi(2)) / 4.0;
        let h = 1e-6;
        let fd = (big_f(1.0 + h) - big_f(1.0 - h)) / (2.0 * h);
        let r = measure(&state_at(2, dv(&[1.0]), dv(&[0.5])), &prob);
        assert_relative_eq!(r.stationarity, fd.abs(), max_relative = 1e-6);
        // residual = mean_i phi(0) - phi(0.5 - 0.8) with phi(z) = z^2 + 3 sin^2 z
        let z: f64 = 0.5 - 0.8;
        assert_relative_eq!(r.residual, z * z + 3.0 * z.sin().powi(2), max_relative = 1e-12);
        let _ = phi_prime(z);
    }

    #[test]
    fn consensus_and_tracking_values() {
        let prob = Sin2PlParams::new(2, 2, 1, 0.0, 0).build().unwrap();
        let mut s = state_at(2, dv(&[0.0, 0.0]), dv(&[0.0]));
        s.x[0] = dv(&[1.0, 0.0]);
        s.x[1] = dv(&[-1.0, 0.0]);
        s.wx[0] = dv(&[0.0, 2.0]);
        s.grad_calls = vec![3, 4];
        let r = measure(&s, &prob);
        assert_eq!(r.consensus_x, 1.0);
        assert_eq!(r.tracking_dev_x, 1.0);
        assert_eq!(r.tracking_dev_y, 0.0);
        assert_eq!(r.grad_calls, 7);
    }

    #[test]
    fn noiseless_identical_start_keeps_consensus() {
        let prob = Sin2PlParams::new(4, 2, 2, 0.0, 0).build().unwrap();
        // identical local functions would be needed for exact consensus, so
        // use a single shared node replicated four times
        let shared = match prob.family() {
            crate::problems::Family::Sin2Pl(f) => f.nodes()[0].clone(),
            _ => unreachable!(),
        };
        let coupling = match prob.family() {
            crate::problems::Family::Sin2Pl(f) => f.coupling().clone(),
            _ => unreachable!(),
        };
        let prob = make_sin2pl(vec![shared; 4], coupling, 0.0, 0).unwrap();
        let w = build_mixing(&GraphFamily::Ring, 4, Weighting::Metropolis).unwrap();
        let cfg = AlgoConfig::theorem1_defaults(50, prob.constants(), 1);
        let engine = Dmgda::new(&cfg, &prob, &w).unwrap();
        let mut recs = Vec::new();
        engine
            .run(&dv(&[1.0, -1.0]), &dv(&[0.2, 0.3]), &mut recs, RunOptions { cadence: 1 })
            .unwrap();
        assert_eq!(recs.len(), 51);
        // rows differ only in where the diagonal weight sits
        assert!(recs.iter().all(|r| r.consensus_x < 1e-28 && r.consensus_y < 1e-28));
    }

    #[test]
    fn measure_is_pure() {
        let prob = Sin2PlParams::new(3, 2, 2, 1.0, 0).build().unwrap();
        let w = build_mixing(&GraphFamily::Path, 3, Weighting::Metropolis).unwrap();
        let cfg = AlgoConfig::theorem1_defaults(5, prob.constants(), 1);
        let engine = Dmgda::new(&cfg, &prob, &w).unwrap();
        let s = engine.init(&dv(&[1.0, 1.0]), &dv(&[0.0, 0.0])).unwrap();
        let before = s.clone();
        let a = measure(&s, &prob);
        let b = measure(&s, &prob);
        assert_eq!(s, before);
        assert_eq!(a, b);
        assert_eq!(engine.step(&s).unwrap(), engine.step(&before).unwrap());
    }

    #[test]
    fn csv_layout() {
        let r = MetricsRecord {
            t: 3,
            stationarity: 0.1,
            consensus_x: 0.0,
            consensus_y: 1.0,
            tracking_dev_x: 0.0,
            tracking_dev_y: 0.0,
            residual: 2.5,
            dual_dist: None,
            grad_calls: 13,
            node_max_stationarity: 0.0,
            approximate: false,
            oracle_failed: false,
        };
        let mut sink = CsvSink::new(Vec::new()).unwrap();
        sink.record(&r).unwrap();
        let text = String::from_utf8(sink.into_inner().unwrap()).unwrap();
        let lines: Vec<_> = text.split('\n').collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "3,1.0000000000000001e-1,0.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,2.5000000000000000e0,,13"
        );
        assert_eq!(lines[2], "");
        assert!(!text.contains('\r'));
        assert_eq!(lines[1].split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn stderr_of_sample() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_relative_eq!(se, (1.0_f64 / 3.0).sqrt());
        assert_eq!(mean_stderr(&[4.0]), (4.0, 0.0));
    }
}
