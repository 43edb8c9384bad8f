//! Per-node stochastic minimax objectives with certified constants.
//!
//! Two families are built in, both with closed-form `F(x) = max_y f(x, y)`:
//!
//! * `sin2pl`: `f^i(x,y) = g_i(x) - sum_j phi((y - P x)_j)` with
//!   `g_i(x) = 1/2 (x - c_i)^T D_i (x - c_i)` and `phi(z) = z^2 + 3 sin^2 z`.
//!   The dual is nonconcave but `phi` is 1/32-PL, so `f(x, .)` is PL in `y`.
//! * `plquadratic`: a quadratic game whose averaged dual curvature `C` is
//!   singular, so `f(x, .)` is PL (with `mu` the smallest nonzero eigenvalue
//!   of `C`) without being strongly concave.
//!
//! Gradient noise is additive Gaussian, realized as a linear term
//! `xi_x^T x + xi_y^T y` in the sampled function. Every sample path keeps the
//! deterministic Hessian, so `L_f` holds per sample.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// PL constant of `phi(z) = z^2 + 3 sin^2 z`.
pub const PHI_PL_CONSTANT: f64 = 1.0 / 32.0;
/// Bound on `|phi''(z)| = |2 + 6 cos 2z|`.
pub const PHI_CURVATURE_BOUND: f64 = 8.0;
/// Relative cutoff below which eigen/singular values count as zero.
pub const PINV_RTOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("node {node}: curvature matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NonSymmetric { node: usize, asymmetry: f64 },
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node index {node} out of range for {m} nodes")]
    NodeIndex { node: usize, m: usize },
    #[error("averaged dual curvature is not positive semidefinite (min eigenvalue {0:.3e})")]
    DualNotPsd(f64),
    #[error("averaged dual curvature is zero; no PL constant")]
    DualZero,
    #[error("node {node}: {what} has a component outside range(C) of size {residual:.3e}")]
    OutsideRange {
        node: usize,
        what: &'static str,
        residual: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inner maximizer did not converge: best |grad_y f| = {grad_norm:.3e}")]
    InnerMaxNotConverged { best_y: Vec<f64>, grad_norm: f64 },
}

/// Problem constants. `kappa` and `l` are always derived from `l_f` and `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub l_f: f64,
    pub mu: f64,
    pub kappa: f64,
    pub l: f64,
    /// Bound on `E |grad f^i(.; xi) - grad f^i|^2`, per block, square-rooted.
    pub sigma: f64,
    /// `inf F`; `-inf` when `F` is unbounded below.
    pub f_star_lower_bound: f64,
}

impl ProblemConstants {
    pub fn new(l_f: f64, mu: f64, sigma: f64, f_star_lower_bound: f64) -> Result<Self, ProblemError> {
        if !(l_f > 0.0 && l_f.is_finite()) {
            return Err(ProblemError::InvalidParameter(format!("L_f must be positive, got {l_f}")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(ProblemError::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(ProblemError::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if f_star_lower_bound.is_nan() || f_star_lower_bound == f64::INFINITY {
            return Err(ProblemError::InvalidParameter("F* lower bound must be finite or -inf".into()));
        }
        let kappa = l_f / mu;
        Ok(Self {
            l_f,
            mu,
            kappa,
            l: l_f * (1.0 + kappa / 2.0),
            sigma,
            f_star_lower_bound,
        })
    }
}

/// One draw of the additive gradient noise, already scaled by `noise_sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub enum GradMode<'a> {
    Exact,
    Sample(&'a NoiseDraw),
}

/// Independent RNG stream for `(seed, node, iteration)`.
///
/// The seed fixes the ChaCha key, the node selects the stream and the
/// iteration selects a 2^32-word block within it, so streams never overlap
/// and can be generated in any order.
pub fn sample_rng(seed: u64, node: usize, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng.set_word_pos((iteration as u128) << 32);
    rng
}

fn gaussian_vec<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

fn gaussian_mat<R: rand::Rng + ?Sized>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
fn random_orthogonal<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let qr = gaussian_mat(rng, n, n, 1.0).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0, |a, &s| a.max(s))
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub fn phi(z: f64) -> f64 {
    let s = z.sin();
    z * z + 3.0 * s * s
}

pub fn phi_prime(z: f64) -> f64 {
    2.0 * z + 3.0 * (2.0 * z).sin()
}

// ---------------------------------------------------------------------------
// sin2pl

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticNode {
    pub curvature: DMatrix<f64>,
    pub center: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sin2Pl {
    nodes: Vec<QuadraticNode>,
    coupling: DMatrix<f64>,
    mean_curvature: DMatrix<f64>,
    /// `(1/m) sum_i D_i c_i`
    mean_shift: DVector<f64>,
    /// `(1/m) sum_i 1/2 c_i^T D_i c_i`
    mean_offset: f64,
}

impl Sin2Pl {
    pub fn nodes(&self) -> &[QuadraticNode] {
        &self.nodes
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn mean_curvature(&self) -> &DMatrix<f64> {
        &self.mean_curvature
    }

    fn residual_z(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        y - &self.coupling * x
    }

    fn value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let n = &self.nodes[i];
        let dx = x - &n.center;
        0.5 * dx.dot(&(&n.curvature * &dx)) - self.residual_z(x, y).iter().map(|&z| phi(z)).sum::<f64>()
    }

    fn grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = &self.nodes[i];
        let dphi = self.residual_z(x, y).map(phi_prime);
        let mut gx = &n.curvature * (x - &n.center);
        gx.gemv_tr(1.0, &self.coupling, &dphi, 1.0);
        (gx, -dphi)
    }

    fn f_value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.mean_curvature * x)) - x.dot(&self.mean_shift) + self.mean_offset
    }

    fn f_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.mean_curvature * x - &self.mean_shift
    }
}

/// Builds a sin2pl instance from explicit node quadratics and coupling.
pub fn make_sin2pl(
    nodes: Vec<QuadraticNode>,
    coupling: DMatrix<f64>,
    noise_sigma: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    let m = nodes.len();
    if m == 0 {
        return Err(ProblemError::InvalidParameter("at least one node required".into()));
    }
    let d = coupling.ncols();
    let p = coupling.nrows();
    if d == 0 || p == 0 {
        return Err(ProblemError::InvalidParameter("d and p must be positive".into()));
    }
    let mut mean_curvature = DMatrix::zeros(d, d);
    let mut mean_shift = DVector::zeros(d);
    let mut mean_offset = 0.0;
    let mut max_curv: f64 = 0.0;
    for (node, n) in nodes.iter().enumerate() {
        if n.curvature.shape() != (d, d) {
            return Err(ProblemError::Dimension {
                what: "curvature",
                expected: d,
                got: n.curvature.nrows(),
            });
        }
        if n.center.len() != d {
            return Err(ProblemError::Dimension {
                what: "center",
                expected: d,
                got: n.center.len(),
            });
        }
        let asym = asymmetry(&n.curvature);
        if asym > 1e-12 * n.curvature.amax().max(1.0) {
            return Err(ProblemError::NonSymmetric { node, asymmetry: asym });
        }
        let shift = &n.curvature * &n.center;
        mean_offset += 0.5 * n.center.dot(&shift);
        mean_curvature += &n.curvature;
        mean_shift += shift;
        max_curv = max_curv.max(spectral_norm(&n.curvature));
    }
    let inv_m = 1.0 / m as f64;
    mean_curvature *= inv_m;
    mean_shift *= inv_m;
    mean_offset *= inv_m;

    let f_star = quadratic_infimum(&mean_curvature, &-&mean_shift, mean_offset);

    let p_norm2 = spectral_norm(&coupling).powi(2);
    let l_f = (PHI_CURVATURE_BOUND * (1.0 + p_norm2)).max(max_curv + PHI_CURVATURE_BOUND * p_norm2);
    let constants = ProblemConstants::new(l_f, PHI_PL_CONSTANT, block_sigma(noise_sigma, d, p), f_star)?;
    Ok(ProblemInstance {
        m,
        d,
        p,
        noise_sigma: validated_sigma(noise_sigma)?,
        seed,
        constants,
        family: Family::Sin2Pl(Sin2Pl {
            nodes,
            coupling,
            mean_curvature,
            mean_shift,
            mean_offset,
        }),
    })
}

/// `inf_x 1/2 x^T H x + g^T x + k`, or `-inf` when unbounded.
fn quadratic_infimum(hess: &DMatrix<f64>, lin: &DVector<f64>, k: f64) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(hess));
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let cutoff = PINV_RTOL * top.max(f64::MIN_POSITIVE);
    let mut value = k;
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let g = eig.eigenvectors.column(j).dot(lin);
        if lam > cutoff {
            value -= 0.5 * g * g / lam;
        } else if lam < -cutoff || g.abs() > PINV_RTOL * lin.amax().max(1.0) {
            return f64::NEG_INFINITY;
        }
    }
    value
}

fn validated_sigma(s: f64) -> Result<f64, ProblemError> {
    if s >= 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(ProblemError::InvalidParameter(format!("noise_sigma must be >= 0, got {s}")))
    }
}

/// Per-coordinate noise `s` gives `E|noise|^2 = s^2 * dim` in each block.
fn block_sigma(s: f64, d: usize, p: usize) -> f64 {
    s * (d.max(p) as f64).sqrt()
}

// ---------------------------------------------------------------------------
// plquadratic

#[derive(Debug, Clone, PartialEq)]
pub struct GameNode {
    /// d x d
    pub a: DMatrix<f64>,
    /// d x p, enters as `x^T B y`
    pub b: DMatrix<f64>,
    /// p x p
    pub c: DMatrix<f64>,
    pub a_lin: DVector<f64>,
    pub b_lin: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlQuadratic {
    nodes: Vec<GameNode>,
    a_bar: DMatrix<f64>,
    b_bar: DMatrix<f64>,
    c_bar: DMatrix<f64>,
    a_lin_bar: DVector<f64>,
    b_lin_bar: DVector<f64>,
    c_pinv: DMatrix<f64>,
    /// Orthogonal projector onto range(C).
    range_proj: DMatrix<f64>,
}

impl PlQuadratic {
    pub fn nodes(&self) -> &[GameNode] {
        &self.nodes
    }

    pub fn mean_dual_curvature(&self) -> &DMatrix<f64> {
        &self.c_bar
    }

    fn value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let n = &self.nodes[i];
        0.5 * x.dot(&(&n.a * x)) + x.dot(&(&n.b * y)) - 0.5 * y.dot(&(&n.c * y))
            + n.a_lin.dot(x)
            + n.b_lin.dot(y)
    }

    fn grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = &self.nodes[i];
        let gx = &n.a * x + &n.b * y + &n.a_lin;
        let mut gy = &n.b_lin - &n.c * y;
        gy.gemv_tr(1.0, &n.b, x, 1.0);
        (gx, gy)
    }

    fn dual_linear(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut q = self.b_lin_bar.clone();
        q.gemv_tr(1.0, &self.b_bar, x, 1.0);
        q
    }

    fn best_response(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c_pinv * self.dual_linear(x)
    }

    fn f_value(&self, x: &DVector<f64>) -> f64 {
        let q = self.dual_linear(x);
        let ystar = &self.c_pinv * &q;
        0.5 * x.dot(&(&self.a_bar * x)) + self.a_lin_bar.dot(x) + 0.5 * q.dot(&ystar)
    }

    fn f_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_bar * x + &self.a_lin_bar + &self.b_bar * self.best_response(x)
    }
}

/// Builds a plquadratic instance from explicit node data.
pub fn make_plquadratic_from_nodes(
    nodes: Vec<GameNode>,
    noise_sigma: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    let m = nodes.len();
    if m == 0 {
        return Err(ProblemError::InvalidParameter("at least one node required".into()));
    }
    let d = nodes[0].a.nrows();
    let p = nodes[0].c.nrows();
    if d == 0 || p == 0 {
        return Err(ProblemError::InvalidParameter("d and p must be positive".into()));
    }
    let mut a_bar = DMatrix::zeros(d, d);
    let mut b_bar = DMatrix::zeros(d, p);
    let mut c_bar = DMatrix::zeros(p, p);
    let mut a_lin_bar = DVector::zeros(d);
    let mut b_lin_bar = DVector::zeros(p);
    let mut l_f: f64 = 0.0;
    for (node, n) in nodes.iter().enumerate() {
        let dims = [
            ("A", n.a.shape(), (d, d)),
            ("B", n.b.shape(), (d, p)),
            ("C", n.c.shape(), (p, p)),
            ("a", (n.a_lin.len(), 1), (d, 1)),
            ("b", (n.b_lin.len(), 1), (p, 1)),
        ];
        for (what, got, want) in dims {
            if got != want {
                return Err(ProblemError::Dimension {
                    what,
                    expected: want.0 * want.1,
                    got: got.0 * got.1,
                });
            }
        }
        for m in [&n.a, &n.c] {
            let asym = asymmetry(m);
            if asym > 1e-12 * m.amax().max(1.0) {
                return Err(ProblemError::NonSymmetric { node, asymmetry: asym });
            }
        }
        a_bar += &n.a;
        b_bar += &n.b;
        c_bar += &n.c;
        a_lin_bar += &n.a_lin;
        b_lin_bar += &n.b_lin;
        l_f = l_f
            .max(spectral_norm(&n.a))
            .max(spectral_norm(&n.b))
            .max(spectral_norm(&n.c));
    }
    let inv_m = 1.0 / m as f64;
    a_bar *= inv_m;
    b_bar *= inv_m;
    c_bar = symmetrize(&(c_bar * inv_m));
    a_lin_bar *= inv_m;
    b_lin_bar *= inv_m;

    let eig = SymmetricEigen::new(c_bar.clone());
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if top == 0.0 {
        return Err(ProblemError::DualZero);
    }
    let cutoff = PINV_RTOL * top;
    let min_eig = eig.eigenvalues.min();
    if min_eig < -cutoff {
        return Err(ProblemError::DualNotPsd(min_eig));
    }
    let mut c_pinv = DMatrix::zeros(p, p);
    let mut range_proj = DMatrix::zeros(p, p);
    let mut mu = f64::INFINITY;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff {
            let v = eig.eigenvectors.column(k);
            let outer = v * v.transpose();
            c_pinv += &outer / lam;
            range_proj += outer;
            mu = mu.min(lam);
        }
    }
    let null_proj = DMatrix::identity(p, p) - &range_proj;
    for (node, n) in nodes.iter().enumerate() {
        let tol = PINV_RTOL * n.b.amax().max(n.b_lin.amax()).max(1.0);
        let rb = (&null_proj * n.b.transpose()).amax();
        if rb > tol {
            return Err(ProblemError::OutsideRange {
                node,
                what: "B",
                residual: rb,
            });
        }
        let rl = (&null_proj * &n.b_lin).amax();
        if rl > tol {
            return Err(ProblemError::OutsideRange {
                node,
                what: "b",
                residual: rl,
            });
        }
    }

    // F(x) = 1/2 x^T H x + g^T x + k with H = A + B C^+ B^T
    let bcp = &b_bar * &c_pinv;
    let hess = symmetrize(&(&a_bar + &bcp * b_bar.transpose()));
    let lin = &a_lin_bar + &bcp * &b_lin_bar;
    let k = 0.5 * b_lin_bar.dot(&(&c_pinv * &b_lin_bar));
    let f_star = quadratic_infimum(&hess, &lin, k);

    let constants = ProblemConstants::new(l_f, mu, block_sigma(noise_sigma, d, p), f_star)?;
    Ok(ProblemInstance {
        m,
        d,
        p,
        noise_sigma: validated_sigma(noise_sigma)?,
        seed,
        constants,
        family: Family::PlQuadratic(PlQuadratic {
            nodes,
            a_bar,
            b_bar,
            c_bar,
            a_lin_bar,
            b_lin_bar,
            c_pinv,
            range_proj,
        }),
    })
}

// ---------------------------------------------------------------------------
// generators

fn default_heterogeneity() -> f64 {
    1.0
}
fn default_half() -> f64 {
    0.5
}
fn default_two() -> f64 {
    2.0
}
fn default_one() -> f64 {
    1.0
}

/// Seeded random sin2pl instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sin2PlParams {
    pub m: usize,
    pub d: usize,
    pub p: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
    /// Eigenvalue range of the averaged curvature `(1/m) sum D_i`.
    #[serde(default = "default_half")]
    pub curvature_min: f64,
    #[serde(default = "default_two")]
    pub curvature_max: f64,
    /// Scale of the zero-mean symmetric per-node perturbation of `D_i`;
    /// large values make individual `g_i` nonconvex.
    #[serde(default = "default_heterogeneity")]
    pub heterogeneity: f64,
    #[serde(default = "default_one")]
    pub center_spread: f64,
    #[serde(default = "default_half")]
    pub coupling_scale: f64,
}

impl Sin2PlParams {
    pub fn new(m: usize, d: usize, p: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            m,
            d,
            p,
            noise_sigma,
            seed,
            curvature_min: 0.5,
            curvature_max: 2.0,
            heterogeneity: 1.0,
            center_spread: 1.0,
            coupling_scale: 0.5,
        }
    }

    pub fn build(&self) -> Result<ProblemInstance, ProblemError> {
        let Self { m, d, p, .. } = *self;
        if m == 0 || d == 0 || p == 0 {
            return Err(ProblemError::InvalidParameter("m, d, p must be positive".into()));
        }
        if !(self.curvature_min > 0.0 && self.curvature_max >= self.curvature_min) {
            return Err(ProblemError::InvalidParameter(
                "need 0 < curvature_min <= curvature_max".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let q = random_orthogonal(&mut rng, d);
        let lam = DMatrix::from_diagonal(&DVector::from_vec(linspace(self.curvature_min, self.curvature_max, d)));
        let mean = symmetrize(&(&q * lam * q.transpose()));
        let perturb: Vec<DMatrix<f64>> = (0..m)
            .map(|_| symmetrize(&gaussian_mat(&mut rng, d, d, self.heterogeneity)))
            .collect();
        let avg = perturb.iter().fold(DMatrix::zeros(d, d), |acc, e| acc + e) / m as f64;
        let nodes = perturb
            .into_iter()
            .map(|e| QuadraticNode {
                curvature: symmetrize(&(&mean + e - &avg)),
                center: gaussian_vec(&mut rng, d, self.center_spread),
            })
            .collect();
        let coupling = gaussian_mat(&mut rng, p, d, self.coupling_scale / (d as f64).sqrt());
        make_sin2pl(nodes, coupling, self.noise_sigma, self.seed)
    }
}

/// Seeded random plquadratic instance with a singular averaged dual curvature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlQuadraticParams {
    pub m: usize,
    pub d: usize,
    pub p: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
    /// Smallest nonzero eigenvalue of the averaged dual curvature.
    #[serde(default = "default_half")]
    pub mu: f64,
    #[serde(default = "default_two")]
    pub dual_max: f64,
    /// Dimension of the nullspace of `C`; defaults to 1 when `p >= 2`.
    #[serde(default)]
    pub null_dim: Option<usize>,
    #[serde(default = "default_half")]
    pub primal_min: f64,
    #[serde(default = "default_two")]
    pub primal_max: f64,
    #[serde(default = "default_half")]
    pub coupling_scale: f64,
    #[serde(default = "default_half")]
    pub heterogeneity: f64,
    #[serde(default = "default_one")]
    pub linear_scale: f64,
}

impl PlQuadraticParams {
    pub fn new(m: usize, d: usize, p: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            m,
            d,
            p,
            noise_sigma,
            seed,
            mu: 0.5,
            dual_max: 2.0,
            null_dim: None,
            primal_min: 0.5,
            primal_max: 2.0,
            coupling_scale: 0.5,
            heterogeneity: 0.5,
            linear_scale: 1.0,
        }
    }

    pub fn null_dim(&self) -> usize {
        self.null_dim.unwrap_or(usize::from(self.p >= 2))
    }

    pub fn build(&self) -> Result<ProblemInstance, ProblemError> {
        let Self { m, d, p, .. } = *self;
        if m == 0 || d == 0 || p == 0 {
            return Err(ProblemError::InvalidParameter("m, d, p must be positive".into()));
        }
        let null_dim = self.null_dim();
        if null_dim >= p {
            return Err(ProblemError::InvalidParameter(format!(
                "null_dim {null_dim} leaves no range in dimension {p}"
            )));
        }
        if !(self.mu > 0.0 && self.dual_max >= self.mu && self.primal_min > 0.0 && self.primal_max >= self.primal_min) {
            return Err(ProblemError::InvalidParameter("spectrum bounds must be positive and ordered".into()));
        }
        let rank = p - null_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        let qp = random_orthogonal(&mut rng, p);
        let basis = qp.columns(0, rank).into_owned();
        let proj = symmetrize(&(&basis * basis.transpose()));
        let mut dual_eigs = linspace(self.mu, self.dual_max, rank);
        dual_eigs.resize(p, 0.0);
        let c_mean = symmetrize(&(&qp * DMatrix::from_diagonal(&DVector::from_vec(dual_eigs)) * qp.transpose()));

        let qd = random_orthogonal(&mut rng, d);
        let a_mean = symmetrize(
            &(&qd
                * DMatrix::from_diagonal(&DVector::from_vec(linspace(self.primal_min, self.primal_max, d)))
                * qd.transpose()),
        );
        let b_mean = gaussian_mat(&mut rng, d, p, self.coupling_scale / (p as f64).sqrt()) * &proj;
        let a_lin_mean = gaussian_vec(&mut rng, d, self.linear_scale);
        let b_lin_mean = &proj * gaussian_vec(&mut rng, p, self.linear_scale);

        let h = self.heterogeneity;
        let raw: Vec<_> = (0..m)
            .map(|_| {
                (
                    symmetrize(&gaussian_mat(&mut rng, d, d, h)),
                    gaussian_mat(&mut rng, d, p, h) * &proj,
                    symmetrize(&(&proj * gaussian_mat(&mut rng, p, p, h) * &proj)),
                    gaussian_vec(&mut rng, d, h),
                    &proj * gaussian_vec(&mut rng, p, h),
                )
            })
            .collect();
        let inv_m = 1.0 / m as f64;
        let ea = raw.iter().fold(DMatrix::zeros(d, d), |acc, t| acc + &t.0) * inv_m;
        let eb = raw.iter().fold(DMatrix::zeros(d, p), |acc, t| acc + &t.1) * inv_m;
        let ec = raw.iter().fold(DMatrix::zeros(p, p), |acc, t| acc + &t.2) * inv_m;
        let ela = raw.iter().fold(DVector::zeros(d), |acc, t| acc + &t.3) * inv_m;
        let elb = raw.iter().fold(DVector::zeros(p), |acc, t| acc + &t.4) * inv_m;

        let nodes = raw
            .iter()
            .map(|(pa, pb, pc, pla, plb)| GameNode {
                a: symmetrize(&(&a_mean + pa - &ea)),
                b: &b_mean + pb - &eb,
                c: symmetrize(&(&c_mean + pc - &ec)),
                a_lin: &a_lin_mean + pla - &ela,
                b_lin: &b_lin_mean + plb - &elb,
            })
            .collect();
        make_plquadratic_from_nodes(nodes, self.noise_sigma, self.seed)
    }
}

/// Problem description accepted by experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemSpec {
    Sin2pl(Sin2PlParams),
    Plquadratic(PlQuadraticParams),
    /// A fully materialized instance, as written by [`ProblemInstance`]'s
    /// JSON form.
    Explicit { instance: Box<ProblemInstance> },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ProblemInstance, ProblemError> {
        match self {
            ProblemSpec::Sin2pl(p) => p.build(),
            ProblemSpec::Plquadratic(p) => p.build(),
            ProblemSpec::Explicit { instance } => Ok((**instance).clone()),
        }
    }
}

// ---------------------------------------------------------------------------
// instance

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Sin2Pl(Sin2Pl),
    PlQuadratic(PlQuadratic),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDoc", into = "InstanceDoc")]
pub struct ProblemInstance {
    m: usize,
    d: usize,
    p: usize,
    noise_sigma: f64,
    seed: u64,
    constants: ProblemConstants,
    family: Family,
}

/// Value and gradient of `F(x) = max_y f(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FOracle {
    pub value: f64,
    pub grad: DVector<f64>,
    /// Set when the value came from the numerical inner maximizer.
    pub approximate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerMaxOptions {
    pub starts: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub start_scale: f64,
    pub seed: u64,
}

impl Default for InnerMaxOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            tol: 1e-10,
            max_iters: 200_000,
            start_scale: 3.0,
            seed: 0x5eed,
        }
    }
}

impl ProblemInstance {
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn constants(&self) -> &ProblemConstants {
        &self.constants
    }
    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Sin2Pl(_) => "sin2pl",
            Family::PlQuadratic(_) => "plquadratic",
        }
    }

    /// Replaces the certified constants, e.g. to test that a certificate
    /// catches an understated `L_f`.
    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = constants;
        self
    }

    fn check_args(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> Result<(), ProblemError> {
        if i >= self.m {
            return Err(ProblemError::NodeIndex { node: i, m: self.m });
        }
        self.check_xy(x, y)
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<(), ProblemError> {
        if x.len() != self.d {
            return Err(ProblemError::Dimension {
                what: "x",
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_xy(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<(), ProblemError> {
        self.check_x(x)?;
        if y.len() != self.p {
            return Err(ProblemError::Dimension {
                what: "y",
                expected: self.p,
                got: y.len(),
            });
        }
        Ok(())
    }

    /// Deterministic node objective `f^i(x, y)`.
    pub fn value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64, ProblemError> {
        self.check_args(i, x, y)?;
        Ok(self.value_unchecked(i, x, y))
    }

    /// Sampled node objective `f^i(x, y; xi)`.
    pub fn sample_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>, noise: &NoiseDraw) -> Result<f64, ProblemError> {
        Ok(self.value(i, x, y)? + noise.x.dot(x) + noise.y.dot(y))
    }

    pub(crate) fn value_unchecked(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match &self.family {
            Family::Sin2Pl(f) => f.value(i, x, y),
            Family::PlQuadratic(f) => f.value(i, x, y),
        }
    }

    /// Network objective `f(x, y) = (1/m) sum_i f^i(x, y)`.
    pub fn mean_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64, ProblemError> {
        self.check_xy(x, y)?;
        Ok((0..self.m).map(|i| self.value_unchecked(i, x, y)).sum::<f64>() / self.m as f64)
    }

    /// Partial gradients of node `i`, exact or under a given noise draw.
    pub fn grad(
        &self,
        i: usize,
        x: &DVector<f64>,
        y: &DVector<f64>,
        mode: GradMode<'_>,
    ) -> Result<(DVector<f64>, DVector<f64>), ProblemError> {
        self.check_args(i, x, y)?;
        if let GradMode::Sample(n) = mode {
            if n.x.len() != self.d || n.y.len() != self.p {
                return Err(ProblemError::Dimension {
                    what: "noise",
                    expected: self.d + self.p,
                    got: n.x.len() + n.y.len(),
                });
            }
        }
        Ok(self.grad_unchecked(i, x, y, mode))
    }

    pub(crate) fn grad_unchecked(
        &self,
        i: usize,
        x: &DVector<f64>,
        y: &DVector<f64>,
        mode: GradMode<'_>,
    ) -> (DVector<f64>, DVector<f64>) {
        let (mut gx, mut gy) = match &self.family {
            Family::Sin2Pl(f) => f.grad(i, x, y),
            Family::PlQuadratic(f) => f.grad(i, x, y),
        };
        if let GradMode::Sample(n) = mode {
            if self.noise_sigma != 0.0 {
                gx += &n.x;
                gy += &n.y;
            }
        }
        (gx, gy)
    }

    /// `grad f(x, y)` averaged over nodes.
    pub fn mean_grad(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), ProblemError> {
        self.check_xy(x, y)?;
        let mut gx = DVector::zeros(self.d);
        let mut gy = DVector::zeros(self.p);
        for i in 0..self.m {
            let (a, b) = self.grad_unchecked(i, x, y, GradMode::Exact);
            gx += a;
            gy += b;
        }
        let s = 1.0 / self.m as f64;
        Ok((gx * s, gy * s))
    }

    /// Draws `xi ~ N(0, noise_sigma^2 I)` for both blocks, x first.
    pub fn draw_noise<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> NoiseDraw {
        NoiseDraw {
            x: gaussian_vec(rng, self.d, self.noise_sigma),
            y: gaussian_vec(rng, self.p, self.noise_sigma),
        }
    }

    /// The noise for node `i` at `iteration` of a run seeded with `seed`.
    pub fn sample_noise(&self, seed: u64, node: usize, iteration: u64) -> NoiseDraw {
        self.draw_noise(&mut sample_rng(seed, node, iteration))
    }

    /// Closed-form `F(x)` and `grad F(x)`.
    pub fn oracle_f(&self, x: &DVector<f64>) -> Result<FOracle, ProblemError> {
        self.check_x(x)?;
        let (value, grad) = match &self.family {
            Family::Sin2Pl(f) => (f.f_value(x), f.f_grad(x)),
            Family::PlQuadratic(f) => (f.f_value(x), f.f_grad(x)),
        };
        Ok(FOracle {
            value,
            grad,
            approximate: false,
        })
    }

    /// A maximizer of `f(x, .)`.
    pub fn best_response(&self, x: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        self.check_x(x)?;
        Ok(match &self.family {
            Family::Sin2Pl(f) => f.coupling() * x,
            Family::PlQuadratic(f) => f.best_response(x),
        })
    }

    /// Euclidean distance from `y` to the set `argmax_y f(x, y)`.
    pub fn dist_to_argmax(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64, ProblemError> {
        self.check_xy(x, y)?;
        let ystar = self.best_response(x)?;
        Ok(match &self.family {
            Family::Sin2Pl(_) => (y - ystar).norm(),
            Family::PlQuadratic(f) => (&f.range_proj * (y - ystar)).norm(),
        })
    }

    /// Numerical `F(x)` by multi-start gradient ascent on `f(x, .)` with step
    /// `1/L_f`. Used where no closed form exists, and as an independent check
    /// of the closed forms.
    pub fn oracle_f_fallback(&self, x: &DVector<f64>, opts: &InnerMaxOptions) -> Result<(FOracle, DVector<f64>), ProblemError> {
        self.check_x(x)?;
        let step = 1.0 / self.constants.l_f;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut closest: (f64, DVector<f64>) = (f64::INFINITY, DVector::zeros(self.p));
        for s in 0..opts.starts.max(1) {
            let mut y = if s == 0 {
                DVector::zeros(self.p)
            } else {
                gaussian_vec(&mut rng, self.p, opts.start_scale)
            };
            let mut converged = false;
            for _ in 0..opts.max_iters {
                let (_, gy) = self.mean_grad(x, &y)?;
                let g = gy.norm();
                if !g.is_finite() {
                    break;
                }
                if g < closest.0 {
                    closest = (g, y.clone());
                }
                if g <= opts.tol {
                    converged = true;
                    break;
                }
                y.axpy(step, &gy, 1.0);
            }
            if converged {
                let v = self.mean_value(x, &y)?;
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, y));
                }
            }
        }
        match best {
            Some((value, y)) => {
                let (grad, _) = self.mean_grad(x, &y)?;
                Ok((
                    FOracle {
                        value,
                        grad,
                        approximate: true,
                    },
                    y,
                ))
            }
            None => Err(ProblemError::InnerMaxNotConverged {
                best_y: closest.1.iter().copied().collect(),
                grad_norm: closest.0,
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// JSON form

fn mat_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_mat(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>, ProblemError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|row| row.len() != c) {
        return Err(ProblemError::Dimension {
            what,
            expected: c,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsDoc {
    l_f: f64,
    mu: f64,
    sigma: f64,
    f_star_lower_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sin2PlNodeDoc {
    curvature: Vec<Vec<f64>>,
    center: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameNodeDoc {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    a_lin: Vec<f64>,
    b_lin: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum InstanceDoc {
    Sin2pl {
        noise_sigma: f64,
        seed: u64,
        coupling: Vec<Vec<f64>>,
        nodes: Vec<Sin2PlNodeDoc>,
        #[serde(default)]
        constants: Option<ConstantsDoc>,
    },
    Plquadratic {
        noise_sigma: f64,
        seed: u64,
        nodes: Vec<GameNodeDoc>,
        #[serde(default)]
        constants: Option<ConstantsDoc>,
    },
}

impl From<ProblemInstance> for InstanceDoc {
    fn from(p: ProblemInstance) -> Self {
        let c = p.constants;
        let constants = Some(ConstantsDoc {
            l_f: c.l_f,
            mu: c.mu,
            sigma: c.sigma,
            f_star_lower_bound: c.f_star_lower_bound,
        });
        match p.family {
            Family::Sin2Pl(f) => InstanceDoc::Sin2pl {
                noise_sigma: p.noise_sigma,
                seed: p.seed,
                coupling: mat_rows(&f.coupling),
                nodes: f
                    .nodes
                    .iter()
                    .map(|n| Sin2PlNodeDoc {
                        curvature: mat_rows(&n.curvature),
                        center: n.center.iter().copied().collect(),
                    })
                    .collect(),
                constants,
            },
            Family::PlQuadratic(f) => InstanceDoc::Plquadratic {
                noise_sigma: p.noise_sigma,
                seed: p.seed,
                nodes: f
                    .nodes
                    .iter()
                    .map(|n| GameNodeDoc {
                        a: mat_rows(&n.a),
                        b: mat_rows(&n.b),
                        c: mat_rows(&n.c),
                        a_lin: n.a_lin.iter().copied().collect(),
                        b_lin: n.b_lin.iter().copied().collect(),
                    })
                    .collect(),
                constants,
            },
        }
    }
}

impl TryFrom<InstanceDoc> for ProblemInstance {
    type Error = ProblemError;

    fn try_from(doc: InstanceDoc) -> Result<Self, Self::Error> {
        let (built, constants) = match doc {
            InstanceDoc::Sin2pl {
                noise_sigma,
                seed,
                coupling,
                nodes,
                constants,
            } => {
                let nodes = nodes
                    .iter()
                    .map(|n| {
                        Ok(QuadraticNode {
                            curvature: rows_mat(&n.curvature, "curvature")?,
                            center: DVector::from_vec(n.center.clone()),
                        })
                    })
                    .collect::<Result<Vec<_>, ProblemError>>()?;
                (make_sin2pl(nodes, rows_mat(&coupling, "coupling")?, noise_sigma, seed)?, constants)
            }
            InstanceDoc::Plquadratic {
                noise_sigma,
                seed,
                nodes,
                constants,
            } => {
                let nodes = nodes
                    .iter()
                    .map(|n| {
                        Ok(GameNode {
                            a: rows_mat(&n.a, "a")?,
                            b: rows_mat(&n.b, "b")?,
                            c: rows_mat(&n.c, "c")?,
                            a_lin: DVector::from_vec(n.a_lin.clone()),
                            b_lin: DVector::from_vec(n.b_lin.clone()),
                        })
                    })
                    .collect::<Result<Vec<_>, ProblemError>>()?;
                (make_plquadratic_from_nodes(nodes, noise_sigma, seed)?, constants)
            }
        };
        match constants {
            Some(c) => Ok(built.with_constants(ProblemConstants::new(c.l_f, c.mu, c.sigma, c.f_star_lower_bound)?)),
            None => Ok(built),
        }
    }
}
