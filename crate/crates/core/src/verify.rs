//! Pass/fail checks of the mechanically checkable claims: tracking mean
//! preservation, the deterministic consensus recursions, the problem
//! certificates (smoothness, unbiasedness, PL/EB/QG) and gradient-call
//! accounting.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::algorithm::{mean, AlgoError, Dmgda, StepTrace, SwarmState};
use crate::problems::{GradMode, ProblemInstance};

pub const SLACK_ABS: f64 = 1e-10;
pub const SLACK_REL: f64 = 1e-10;
pub const TRACKING_TOL: f64 = 1e-10;
/// Threshold in standard errors for the statistical checks. A standard
/// normal exceeds 7 with probability 2.6e-12, so even a few hundred tested
/// coordinates keep the false-alarm probability below 1e-9.
pub const Z_THRESHOLD: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Location {
    pub t: Option<usize>,
    pub node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest violation measure; its meaning is check-specific and spelled
    /// out in `detail`.
    pub worst: f64,
    pub location: Option<Location>,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, worst: f64, location: Option<Location>, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            worst,
            location,
            detail,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let _ = write!(out, "{status} {:<28} worst={:+.6e}", c.name, c.worst);
            if let Some(loc) = c.location {
                if let Some(t) = loc.t {
                    let _ = write!(out, " t={t}");
                }
                if let Some(n) = loc.node {
                    let _ = write!(out, " node={n}");
                }
            }
            let _ = writeln!(out, "  {}", c.detail);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "WARN {w}");
        }
        let failed = self.failures().len();
        let _ = writeln!(out, "{} checks, {} failed", self.checks.len(), failed);
        out
    }
}

/// States `0..=T` with the tilde iterates of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SwarmState>,
    pub traces: Vec<StepTrace>,
    pub gamma: f64,
    pub lambda: f64,
}

/// Adds `magnitude` to one node's primal tracker right after step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub t: usize,
    pub node: usize,
    pub magnitude: f64,
}

pub fn record_trajectory(engine: &Dmgda<'_>, start: SwarmState, perturb: Option<Perturbation>) -> Result<Trajectory, AlgoError> {
    let horizon = engine.config().horizon;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut traces = Vec::with_capacity(horizon);
    let mut state = start;
    loop {
        if let Some(p) = perturb {
            if p.t == state.t && p.node < state.m() {
                state.perturb_tracker(p.node, p.magnitude);
            }
        }
        if state.t >= horizon {
            states.push(state);
            break;
        }
        let (next, trace) = engine.step_traced(&state)?;
        states.push(state);
        traces.push(trace);
        state = next;
    }
    Ok(Trajectory {
        states,
        traces,
        gamma: engine.config().gamma,
        lambda: engine.config().lambda,
    })
}

/// `max_t |ubar - wbar| / (1 + |ubar|)` over both blocks.
pub fn check_tracking(traj: &Trajectory) -> CheckResult {
    let mut worst = 0.0_f64;
    let mut worst_t = None;
    let mut first_violation = None;
    for s in &traj.states {
        for (u, w) in [(&s.ux, &s.wx), (&s.uy, &s.wy)] {
            let ubar = mean(u);
            let dev = (&ubar - mean(w)).norm() / (1.0 + ubar.norm());
            if dev > worst || dev.is_nan() {
                worst = dev;
                worst_t = Some(s.t);
            }
            if first_violation.is_none() && (dev.is_nan() || dev > TRACKING_TOL) {
                first_violation = Some(s.t);
            }
        }
    }
    // a broken tracker stays broken, so the onset is the useful location
    let t = first_violation.or(worst_t);
    CheckResult::new(
        "tracking",
        first_violation.is_none(),
        worst,
        t.map(|t| Location { t: Some(t), node: None }),
        format!("max |ubar - wbar| / (1 + |ubar|), tolerance {TRACKING_TOL:e}; location is the first violation"),
    )
}

fn dispersion(vs: &[DVector<f64>]) -> f64 {
    let c = mean(vs);
    vs.iter().map(|v| (v - &c).norm_squared()).sum()
}

fn sq_sum(vs: &[DVector<f64>]) -> f64 {
    vs.iter().map(|v| v.norm_squared()).sum()
}

fn sq_dist(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).norm_squared()).sum()
}

/// Per-step terms of the two recursions for one block.
struct RecursionTerms {
    eta: f64,
    step: f64,
    lhs_consensus: f64,
    dispersion: f64,
    tracker_dispersion: f64,
    lhs_tilde: f64,
    tracker_sq: f64,
}

fn recursion_terms(traj: &Trajectory, primal: bool) -> Vec<RecursionTerms> {
    traj.traces
        .iter()
        .enumerate()
        .map(|(k, tr)| {
            let (s, next) = (&traj.states[k], &traj.states[k + 1]);
            let (z, zn, w, tilde, step) = if primal {
                (&s.x, &next.x, &s.wx, &tr.x_tilde, traj.gamma)
            } else {
                (&s.y, &next.y, &s.wy, &tr.y_tilde, traj.lambda)
            };
            RecursionTerms {
                eta: tr.schedule.eta,
                step,
                lhs_consensus: dispersion(zn),
                dispersion: dispersion(z),
                tracker_dispersion: dispersion(w),
                lhs_tilde: sq_dist(tilde, z),
                tracker_sq: sq_sum(w),
            }
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Inequality {
    Consensus,
    Tilde,
}

impl Inequality {
    fn lhs(self, r: &RecursionTerms) -> f64 {
        match self {
            Inequality::Consensus => r.lhs_consensus,
            Inequality::Tilde => r.lhs_tilde,
        }
    }

    fn rhs(self, r: &RecursionTerms, nu: f64) -> f64 {
        let nu2 = nu * nu;
        let gap = 1.0 - nu2;
        match self {
            Inequality::Consensus => {
                (1.0 - gap * r.eta / 2.0) * r.dispersion + 2.0 * r.eta * r.step * r.step / gap * r.tracker_dispersion
            }
            Inequality::Tilde => (3.0 + nu2) * r.dispersion + 2.0 * (1.0 + nu2) / gap * r.step * r.step * r.tracker_sq,
        }
    }
}

fn holds(lhs: f64, rhs: f64) -> bool {
    lhs - rhs <= SLACK_ABS + SLACK_REL * rhs.abs()
}

/// Smallest `nu` in `[0, 1)` for which every step satisfies the
/// inequality; `1.0` if none does. Both right-hand sides grow with `nu`.
fn implied_nu(terms: &[RecursionTerms], ineq: Inequality) -> f64 {
    let ok = |nu: f64| terms.iter().all(|r| holds(ineq.lhs(r), ineq.rhs(r, nu)));
    if ok(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-12);
    if !ok(hi) {
        return 1.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn recursion_check(name: &str, terms: &[RecursionTerms], nu: f64, ineq: Inequality) -> CheckResult {
    let mut worst = if terms.is_empty() { 0.0 } else { f64::NEG_INFINITY };
    let mut at = None;
    let mut passed = true;
    for (t, r) in terms.iter().enumerate() {
        let lhs = ineq.lhs(r);
        let bound = ineq.rhs(r, nu);
        if !holds(lhs, bound) || lhs.is_nan() || bound.is_nan() {
            passed = false;
        }
        let excess = lhs - bound;
        if excess > worst || excess.is_nan() {
            worst = excess;
            at = Some(Location { t: Some(t), node: None });
        }
    }
    let implied = implied_nu(terms, ineq);
    CheckResult::new(
        name,
        passed,
        worst,
        at,
        format!("max (lhs - rhs); nu = {nu:.6}, smallest nu satisfying every step = {implied:.6}"),
    )
}

/// Consensus contraction and tilde-displacement bounds for both blocks at
/// every step, plus the one-round gossip contraction they are built on.
/// A failing recursion with a passing gossip contraction points at the
/// inequality constants rather than at the mixing implementation.
pub fn check_consensus_recursions(traj: &Trajectory, nu: f64, mixing: &crate::topology::MixingMatrix) -> Vec<CheckResult> {
    let px = recursion_terms(traj, true);
    let py = recursion_terms(traj, false);
    let mut out = vec![
        recursion_check("consensus_contraction_x", &px, nu, Inequality::Consensus),
        recursion_check("consensus_contraction_y", &py, nu, Inequality::Consensus),
        recursion_check("tilde_displacement_x", &px, nu, Inequality::Tilde),
        recursion_check("tilde_displacement_y", &py, nu, Inequality::Tilde),
    ];
    let mut worst = f64::NEG_INFINITY;
    let mut at = None;
    for s in &traj.states {
        for z in [&s.x, &s.y] {
            let before = dispersion(z);
            let mixed = mixing.mix(z).expect("state matches mixing matrix");
            let after = dispersion(&mixed);
            let excess = after - nu * nu * before;
            let tol = SLACK_ABS + SLACK_REL * before;
            if excess - tol > worst {
                worst = excess - tol;
                at = Some(Location { t: Some(s.t), node: None });
            }
        }
    }
    out.push(CheckResult::new(
        "gossip_contraction",
        worst <= 0.0,
        worst.max(f64::MIN),
        at,
        "max (|W z - 1 zbar|^2 - nu^2 |z - 1 zbar|^2 - tol)".to_string(),
    ));
    out
}

/// `4 m T + m` gradient evaluations in total, 1 + 4 t per node.
pub fn check_cost_accounting(traj: &Trajectory) -> CheckResult {
    let mut worst = 0.0_f64;
    let mut at = None;
    for s in &traj.states {
        for (i, &c) in s.grad_calls.iter().enumerate() {
            let expected = 1 + 4 * s.t as u64;
            let off = (c as f64 - expected as f64).abs();
            if off > worst {
                worst = off;
                at = Some(Location {
                    t: Some(s.t),
                    node: Some(i),
                });
            }
        }
    }
    let last = traj.states.last().expect("non-empty trajectory");
    let m = last.m() as u64;
    let expected = 4 * m * last.t as u64 + m;
    let total = last.total_grad_calls();
    CheckResult::new(
        "cost_accounting",
        worst == 0.0 && total == expected,
        worst,
        at,
        format!("total {total}, expected 4mT + m = {expected}"),
    )
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    rng.random_range(lo..hi)
}

const SAMPLE_SCALE: f64 = 2.0;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;

struct Worst {
    value: f64,
    node: Option<usize>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            node: None,
        }
    }

    fn update(&mut self, v: f64, node: Option<usize>) {
        if v > self.value || v.is_nan() {
            self.value = v;
            self.node = node;
        }
    }

    fn loc(&self) -> Option<Location> {
        self.node.map(|n| Location { t: None, node: Some(n) })
    }
}

fn fd_check(problem: &ProblemInstance, n: usize, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let (m, d, p) = (problem.m(), problem.d(), problem.p());
    let mut node_worst = Worst::new();
    let mut f_worst = Worst::new();
    for k in 0..n {
        let i = k % m;
        let x = gaussian(rng, d, SAMPLE_SCALE);
        let y = gaussian(rng, p, SAMPLE_SCALE);
        let (gx, gy) = problem.grad_unchecked(i, &x, &y, GradMode::Exact);
        let f = |x: &DVector<f64>, y: &DVector<f64>| problem.value_unchecked(i, x, y);
        let mut fd = DVector::zeros(d + p);
        for c in 0..d {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[c] += FD_STEP;
            lo[c] -= FD_STEP;
            fd[c] = (f(&hi, &y) - f(&lo, &y)) / (2.0 * FD_STEP);
        }
        for c in 0..p {
            let mut hi = y.clone();
            let mut lo = y.clone();
            hi[c] += FD_STEP;
            lo[c] -= FD_STEP;
            fd[d + c] = (f(&x, &hi) - f(&x, &lo)) / (2.0 * FD_STEP);
        }
        let g = DVector::from_iterator(d + p, gx.iter().chain(gy.iter()).copied());
        node_worst.update((&g - &fd).norm() / g.norm().max(1.0), Some(i));

        if let Ok(o) = problem.oracle_f(&x) {
            let mut fd = DVector::zeros(d);
            for c in 0..d {
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[c] += FD_STEP;
                lo[c] -= FD_STEP;
                let fh = problem.oracle_f(&hi).map(|o| o.value).unwrap_or(f64::NAN);
                let fl = problem.oracle_f(&lo).map(|o| o.value).unwrap_or(f64::NAN);
                fd[c] = (fh - fl) / (2.0 * FD_STEP);
            }
            f_worst.update((&o.grad - fd).norm() / o.grad.norm().max(1.0), None);
        }
    }
    vec![
        CheckResult::new(
            "finite_difference_grad",
            node_worst.value <= FD_TOL,
            node_worst.value,
            node_worst.loc(),
            format!("max |g - g_fd| / max(1, |g|) over {n} points, h = {FD_STEP:e}"),
        ),
        CheckResult::new(
            "finite_difference_grad_f",
            f_worst.value <= FD_TOL,
            f_worst.value,
            None,
            format!("grad F against central differences of F over {n} points"),
        ),
    ]
}

/// Sampled Lipschitz ratios of all four block maps, relative to `L_f`.
fn smoothness_check(problem: &ProblemInstance, n: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let (m, d, p) = (problem.m(), problem.d(), problem.p());
    let l_f = problem.constants().l_f;
    let mut worst = Worst::new();
    for k in 0..n {
        let i = k % m;
        let x = gaussian(rng, d, SAMPLE_SCALE);
        let y = gaussian(rng, p, SAMPLE_SCALE);
        let radius = 10f64.powf(uniform(rng, -3.0, 0.5));
        let x2 = &x + gaussian(rng, d, radius);
        let y2 = &y + gaussian(rng, p, radius);
        let (gx, gy) = problem.grad_unchecked(i, &x, &y, GradMode::Exact);
        let (gx_x, gy_x) = problem.grad_unchecked(i, &x2, &y, GradMode::Exact);
        let (gx_y, gy_y) = problem.grad_unchecked(i, &x, &y2, GradMode::Exact);
        let dx = (&x2 - &x).norm();
        let dy = (&y2 - &y).norm();
        for ratio in [
            (&gx_x - &gx).norm() / dx,
            (&gx_y - &gx).norm() / dy,
            (&gy_x - &gy).norm() / dx,
            (&gy_y - &gy).norm() / dy,
        ] {
            worst.update(ratio / l_f, Some(i));
        }
    }
    CheckResult::new(
        "smoothness",
        worst.value <= 1.0 + 1e-8,
        worst.value,
        worst.loc(),
        format!("max sampled Lipschitz ratio / L_f over {n} pairs, four block forms"),
    )
}

/// Sample mean and spread of the stochastic gradients at fixed points.
fn noise_checks(problem: &ProblemInstance, seed: u64) -> Vec<CheckResult> {
    const POINTS: usize = 3;
    const DRAWS: usize = 2000;
    let (m, d, p) = (problem.m(), problem.d(), problem.p());
    let sd = problem.noise_sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b1a5);
    let mut mean_worst = Worst::new();
    let mut var_worst = Worst::new();
    for i in 0..m {
        for k in 0..POINTS {
            let x = gaussian(&mut rng, d, SAMPLE_SCALE);
            let y = gaussian(&mut rng, p, SAMPLE_SCALE);
            let (ex, ey) = problem.grad_unchecked(i, &x, &y, GradMode::Exact);
            let exact = DVector::from_iterator(d + p, ex.iter().chain(ey.iter()).copied());
            let mut sum = DVector::zeros(d + p);
            let mut sq = [0.0; 2];
            for r in 0..DRAWS {
                let noise = problem.sample_noise(seed, i, (k * DRAWS + r) as u64);
                let (gx, gy) = problem.grad_unchecked(i, &x, &y, GradMode::Sample(&noise));
                let g = DVector::from_iterator(d + p, gx.iter().chain(gy.iter()).copied());
                let dev = g - &exact;
                sq[0] += dev.rows(0, d).norm_squared();
                sq[1] += dev.rows(d, p).norm_squared();
                sum += dev;
            }
            // mean deviation in units of its standard error
            let z = if sd > 0.0 {
                (sum / DRAWS as f64).amax() / (sd / (DRAWS as f64).sqrt())
            } else {
                (sum / DRAWS as f64).amax()
            };
            mean_worst.update(z, Some(i));
            // block variance against sigma^2, allowing Z_THRESHOLD chi-square
            // standard deviations
            for (b, dim) in [(0, d), (1, p)] {
                let var = sq[b] / DRAWS as f64;
                let allowed = problem.constants().sigma.powi(2) * (1.0 + Z_THRESHOLD * (2.0 / (DRAWS * dim) as f64).sqrt());
                let ratio = if allowed > 0.0 { var / allowed } else if var == 0.0 { 0.0 } else { f64::INFINITY };
                var_worst.update(ratio, Some(i));
            }
        }
    }
    let mean_passed = if sd > 0.0 { mean_worst.value <= Z_THRESHOLD } else { mean_worst.value == 0.0 };
    vec![
        CheckResult::new(
            "unbiasedness",
            mean_passed,
            mean_worst.value,
            mean_worst.loc(),
            format!(
                "max |mean(g - grad f)| in standard errors over {DRAWS} draws (threshold {Z_THRESHOLD}; absolute when noise is off)"
            ),
        ),
        CheckResult::new(
            "bounded_variance",
            var_worst.value <= 1.0,
            var_worst.value,
            var_worst.loc(),
            "max sample block variance / (sigma^2 (1 + 7 sqrt(2 / (N dim))))".to_string(),
        ),
    ]
}

/// PL, error bound, quadratic growth, residual sign and the lower bound on
/// `F`, all on the mean objective.
fn dual_checks(problem: &ProblemInstance, n: usize, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let (d, p) = (problem.d(), problem.p());
    let mu = problem.constants().mu;
    let f_star = problem.constants().f_star_lower_bound;
    let mut pl = Worst::new();
    let mut eb = Worst::new();
    let mut qg = Worst::new();
    let mut residual = Worst::new();
    let mut lower = Worst::new();
    for _ in 0..n {
        let x = gaussian(rng, d, SAMPLE_SCALE);
        let y = gaussian(rng, p, SAMPLE_SCALE);
        let Ok(o) = problem.oracle_f(&x) else { continue };
        let f = problem.mean_value(&x, &y).expect("dimensions match");
        let (_, gy) = problem.mean_grad(&x, &y).expect("dimensions match");
        let gap = o.value - f;
        let g2 = gy.norm_squared();
        let dist = problem.dist_to_argmax(&x, &y).expect("dimensions match");
        let tol = |scale: f64| SLACK_ABS + SLACK_REL * scale.abs();
        pl.update(2.0 * mu * gap - g2 - tol(g2), None);
        eb.update(mu * dist - gy.norm() - tol(gy.norm()), None);
        qg.update(0.5 * mu * dist * dist - gap - tol(gap), None);
        residual.update(-gap, None);
        lower.update(f_star - o.value - tol(o.value), None);
    }
    vec![
        CheckResult::new(
            "pl_inequality",
            pl.value <= 1e-12,
            pl.value,
            None,
            format!("max 2 mu (F - f) - |grad_y f|^2 over {n} points, mu = {mu:.6e}"),
        ),
        CheckResult::new(
            "error_bound",
            eb.value <= 0.0,
            eb.value,
            None,
            "max mu dist(y, argmax) - |grad_y f|".to_string(),
        ),
        CheckResult::new(
            "quadratic_growth",
            qg.value <= 0.0,
            qg.value,
            None,
            "max (mu/2) dist(y, argmax)^2 - (F - f)".to_string(),
        ),
        CheckResult::new(
            "residual_nonnegative",
            residual.value <= 1e-10,
            residual.value,
            None,
            "max f(x, y) - F(x)".to_string(),
        ),
        CheckResult::new(
            "lower_bound",
            lower.value <= 0.0,
            lower.value,
            None,
            format!("max F* - F(x), F* = {f_star:e}"),
        ),
    ]
}

/// Finite differences, smoothness, noise, PL/EB/QG, residual sign and
/// lower bound on `n` sampled points each.
pub fn check_problem_certificates(problem: &ProblemInstance, n: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = fd_check(problem, n, &mut rng);
    out.push(smoothness_check(problem, n, &mut rng));
    out.extend(noise_checks(problem, seed));
    out.extend(dual_checks(problem, n, &mut rng));
    out
}

/// Sampled Lipschitz ratio of `grad F` against `l` (by default
/// `L_f (1 + kappa/2)`), relative to `l`.
pub fn check_lemma1_constant_with(problem: &ProblemInstance, l: f64, n: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.d();
    let mut worst = Worst::new();
    for _ in 0..n {
        let x1 = gaussian(&mut rng, d, SAMPLE_SCALE);
        let radius = 10f64.powf(uniform(&mut rng, -3.0, 0.5));
        let x2 = &x1 + gaussian(&mut rng, d, radius);
        let (Ok(a), Ok(b)) = (problem.oracle_f(&x1), problem.oracle_f(&x2)) else {
            continue;
        };
        worst.update((a.grad - b.grad).norm() / ((x1 - x2).norm() * l), None);
    }
    CheckResult::new(
        "lemma1_constant",
        worst.value <= 1.0 + 1e-8,
        worst.value,
        None,
        format!("max |grad F(x1) - grad F(x2)| / (L |x1 - x2|) over {n} pairs, L = {l:.6e}"),
    )
}

pub fn check_lemma1_constant(problem: &ProblemInstance, n: usize, seed: u64) -> CheckResult {
    check_lemma1_constant_with(problem, problem.constants().l, n, seed)
}

/// Records one trajectory from `start` and runs every check on it and on
/// the problem.
pub fn verify_run(
    engine: &Dmgda<'_>,
    start: SwarmState,
    perturb: Option<Perturbation>,
    certificate_samples: usize,
    seed: u64,
) -> Result<VerificationReport, AlgoError> {
    let traj = record_trajectory(engine, start, perturb)?;
    let mixing = engine.mixing();
    let problem = engine.problem();
    let mut checks = vec![check_tracking(&traj)];
    checks.extend(check_consensus_recursions(&traj, mixing.nu(), mixing));
    checks.push(check_cost_accounting(&traj));
    checks.extend(check_problem_certificates(problem, certificate_samples, seed));
    checks.push(check_lemma1_constant(problem, certificate_samples, seed));
    Ok(VerificationReport {
        checks,
        warnings: engine.config().feasibility_warnings(problem.constants()),
    })
}
