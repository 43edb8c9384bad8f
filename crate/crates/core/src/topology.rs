//! Gossip topologies and their doubly-stochastic mixing matrices.
//!
//! A [`MixingMatrix`] is immutable once built. Every constructor goes through
//! [`validate_mixing`], so a value of this type always satisfies symmetry,
//! unit row/column sums, nonnegativity and `nu < 1`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the stochasticity checks (row/column sums, symmetry).
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("node count must be at least 1")]
    EmptyGraph,
    #[error("grid {rows}x{cols} does not have {m} nodes")]
    GridShape { rows: usize, cols: usize, m: usize },
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("graph is disconnected; components: {0:?}")]
    Disconnected(Vec<Vec<usize>>),
    #[error("mixing matrix failed validation: {0}")]
    Invalid(String),
    #[error("expected {expected} node vectors, got {got}")]
    NodeCount { expected: usize, got: usize },
    #[error("node {node} has dimension {got}, expected {expected}")]
    Dimension { node: usize, expected: usize, got: usize },
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphFamily {
    Complete,
    Ring,
    Path,
    Grid2d { rows: usize, cols: usize },
    Custom { edges: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Metropolis,
    LazyUniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: DMatrix<f64>,
    nu: f64,
    /// Sorted neighbor lists, self excluded.
    edges: Vec<Vec<usize>>,
    /// Nonzero row entries `(j, W_ij)` in ascending `j`, self included.
    rows: Vec<Vec<(usize, f64)>>,
    eigenvalues: Vec<f64>,
}

impl MixingMatrix {
    /// Wraps an explicit weight matrix, rejecting anything that violates the
    /// mixing invariants.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self, TopologyError> {
        if weights.nrows() == 0 {
            return Err(TopologyError::EmptyGraph);
        }
        let report = validate_mixing(&weights);
        if !report.passed() {
            return Err(TopologyError::Invalid(report.failures().join("; ")));
        }
        let m = weights.nrows();
        let mut edges = vec![Vec::new(); m];
        let mut rows = vec![Vec::new(); m];
        for i in 0..m {
            for j in 0..m {
                let w = weights[(i, j)];
                if w != 0.0 {
                    rows[i].push((j, w));
                    if i != j {
                        edges[i].push(j);
                    }
                }
            }
        }
        Ok(Self {
            nu: report.nu,
            eigenvalues: report.eigenvalues,
            weights,
            edges,
            rows,
        })
    }

    pub fn m(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.edges[i]
    }

    /// Eigenvalues of `W` in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Gossip average for a single node: `sum_j W_ij * vectors[j]`, summed in
    /// ascending `j` over the node's neighborhood (self included).
    pub fn mix_row(&self, i: usize, vectors: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(vectors[0].len());
        for &(j, w) in &self.rows[i] {
            out.axpy(w, &vectors[j], 1.0);
        }
        out
    }

    /// Applies one round of gossip to every node.
    pub fn mix(&self, vectors: &[DVector<f64>]) -> Result<Vec<DVector<f64>>, TopologyError> {
        check_node_vectors(self.m(), vectors)?;
        Ok((0..self.m()).map(|i| self.mix_row(i, vectors)).collect())
    }
}

pub(crate) fn check_node_vectors(m: usize, vectors: &[DVector<f64>]) -> Result<(), TopologyError> {
    if vectors.len() != m {
        return Err(TopologyError::NodeCount {
            expected: m,
            got: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    for (node, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(TopologyError::Dimension {
                node,
                expected: dim,
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Undirected edge set of a graph family, deduplicated, without self loops.
pub fn family_edges(family: &GraphFamily, m: usize) -> Result<Vec<(usize, usize)>, TopologyError> {
    if m == 0 {
        return Err(TopologyError::EmptyGraph);
    }
    let mut edges = Vec::new();
    match family {
        GraphFamily::Complete => {
            for i in 0..m {
                for j in i + 1..m {
                    edges.push((i, j));
                }
            }
        }
        GraphFamily::Ring => {
            for i in 0..m {
                edges.push((i, (i + 1) % m));
            }
        }
        GraphFamily::Path => {
            for i in 1..m {
                edges.push((i - 1, i));
            }
        }
        GraphFamily::Grid2d { rows, cols } => {
            if rows * cols != m {
                return Err(TopologyError::GridShape {
                    rows: *rows,
                    cols: *cols,
                    m,
                });
            }
            for r in 0..*rows {
                for c in 0..*cols {
                    let i = r * cols + c;
                    if c + 1 < *cols {
                        edges.push((i, i + 1));
                    }
                    if r + 1 < *rows {
                        edges.push((i, i + cols));
                    }
                }
            }
        }
        GraphFamily::Custom { edges: list } => {
            for &(a, b) in list {
                if a >= m || b >= m {
                    return Err(TopologyError::EdgeOutOfRange(a, b, m));
                }
                edges.push((a, b));
            }
        }
    }
    let mut normalized: Vec<(usize, usize)> = edges
        .into_iter()
        .filter(|(a, b)| a != b)
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    normalized.sort_unstable();
    normalized.dedup();
    Ok(normalized)
}

fn components(m: usize, adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; m];
    let mut out = Vec::new();
    for start in 0..m {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut k = 0;
        while k < comp.len() {
            let v = comp[k];
            for &u in &adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                }
            }
            k += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Builds the mixing matrix of a standard graph family.
///
/// Metropolis: `W_ij = 1 / (1 + max(deg_i, deg_j))` on edges, diagonal takes
/// the remainder. Lazy-uniform: `W = I/2 + A_norm/2` with
/// `A_norm = (A + diag(d_max - deg)) / d_max`, which stays symmetric on
/// irregular graphs.
pub fn build_mixing(
    family: &GraphFamily,
    m: usize,
    weighting: Weighting,
) -> Result<MixingMatrix, TopologyError> {
    let edges = family_edges(family, m)?;
    let mut adjacency = vec![Vec::new(); m];
    for &(a, b) in &edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let comps = components(m, &adjacency);
    if comps.len() > 1 {
        return Err(TopologyError::Disconnected(comps));
    }
    let deg: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut w = DMatrix::<f64>::zeros(m, m);
    match weighting {
        Weighting::Metropolis => {
            for &(a, b) in &edges {
                let v = 1.0 / (1.0 + deg[a].max(deg[b]) as f64);
                w[(a, b)] = v;
                w[(b, a)] = v;
            }
        }
        Weighting::LazyUniform => {
            let d_max = deg.iter().copied().max().unwrap_or(0);
            if d_max > 0 {
                let v = 0.5 / d_max as f64;
                for &(a, b) in &edges {
                    w[(a, b)] = v;
                    w[(b, a)] = v;
                }
            }
        }
    }
    if weighting == Weighting::Metropolis && edges.len() == m * (m - 1) / 2 {
        // every weight is 1/m; the subtracted diagonal would round away from it
        return MixingMatrix::from_weights(DMatrix::from_element(m, m, 1.0 / m as f64));
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_weights(w)
}

/// `nu = max(|lambda_2|, |lambda_m|)` of a validated mixing matrix.
pub fn spectral_gap(weights: &DMatrix<f64>) -> Result<f64, TopologyError> {
    let report = validate_mixing(weights);
    if !report.passed() {
        return Err(TopologyError::Invalid(report.failures().join("; ")));
    }
    Ok(report.nu)
}

/// Second-largest eigenvalue magnitude, computed as the spectral norm of
/// `W - 11^T/m`. For a symmetric stochastic matrix this equals
/// `max(|lambda_2|, |lambda_m|)`, and it is exactly zero for the averaging
/// matrix since the deflation cancels entrywise.
fn deflated_norm(weights: &DMatrix<f64>) -> f64 {
    let m = weights.nrows();
    if m <= 1 {
        return 0.0;
    }
    let avg = 1.0 / m as f64;
    let deflated = DMatrix::from_fn(m, m, |i, j| {
        // symmetrize so the eigensolver sees an exactly symmetric input
        0.5 * (weights[(i, j)] + weights[(j, i)]) - avg
    });
    if deflated.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    SymmetricEigen::new(deflated)
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed violation magnitude (0 when clean).
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingReport {
    pub checks: Vec<InvariantCheck>,
    pub nu: f64,
    pub eigenvalues: Vec<f64>,
}

impl MixingReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} (worst {:.3e})", c.name, c.worst))
            .collect()
    }
}

/// Checks every mixing-matrix invariant and reports the worst violation of
/// each. Never fails; a non-square input fails the `square` check and skips
/// the rest.
pub fn validate_mixing(weights: &DMatrix<f64>) -> MixingReport {
    let (r, c) = weights.shape();
    if r != c || r == 0 {
        return MixingReport {
            checks: vec![InvariantCheck {
                name: "square",
                passed: false,
                worst: (r as f64 - c as f64).abs(),
            }],
            nu: f64::NAN,
            eigenvalues: Vec::new(),
        };
    }
    let m = r;
    let mut sym = 0.0_f64;
    let mut neg = 0.0_f64;
    let mut finite = true;
    for i in 0..m {
        for j in 0..m {
            let v = weights[(i, j)];
            finite &= v.is_finite();
            sym = sym.max((v - weights[(j, i)]).abs());
            neg = neg.max(-v);
        }
    }
    let row = (0..m)
        .map(|i| (weights.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let col = (0..m)
        .map(|j| (weights.column(j).sum() - 1.0).abs())
        .fold(0.0, f64::max);

    let (nu, eigenvalues) = if finite {
        let symmetric = (weights + weights.transpose()) * 0.5;
        let mut eig: Vec<f64> = SymmetricEigen::new(symmetric)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        (deflated_norm(weights), eig)
    } else {
        (f64::NAN, Vec::new())
    };

    let checks = vec![
        InvariantCheck {
            name: "symmetry",
            passed: sym <= STOCHASTIC_TOL,
            worst: sym,
        },
        InvariantCheck {
            name: "row_sums",
            passed: row <= STOCHASTIC_TOL,
            worst: row,
        },
        InvariantCheck {
            name: "column_sums",
            passed: col <= STOCHASTIC_TOL,
            worst: col,
        },
        InvariantCheck {
            name: "nonnegative",
            passed: neg <= 0.0,
            worst: neg.max(0.0),
        },
        InvariantCheck {
            name: "nu_below_one",
            passed: nu < 1.0 - STOCHASTIC_TOL,
            worst: if nu < 1.0 - STOCHASTIC_TOL { 0.0 } else if nu.is_nan() { f64::INFINITY } else { nu },
        },
    ];
    MixingReport {
        checks,
        nu,
        eigenvalues,
    }
}

/// Parses an edge list: one whitespace-separated `i j` pair per line,
/// 0-indexed, `#` starts a comment.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>, TopologyError> {
    let mut edges = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = |what: &str| -> Result<usize, TopologyError> {
            let tok = fields.next().ok_or_else(|| TopologyError::Parse {
                line: n + 1,
                msg: format!("missing {what} endpoint"),
            })?;
            tok.parse().map_err(|_| TopologyError::Parse {
                line: n + 1,
                msg: format!("invalid node index {tok:?}"),
            })
        };
        let a = next("first")?;
        let b = next("second")?;
        if fields.next().is_some() {
            return Err(TopologyError::Parse {
                line: n + 1,
                msg: "expected exactly two fields".into(),
            });
        }
        edges.push((a, b));
    }
    Ok(edges)
}
