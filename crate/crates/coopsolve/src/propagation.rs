//! Propagation matrices: column-stochastic nonnegative weights that control
//! how assignment constraints spread between sub-problems.
//!
//! Validity means: all entries >= 0, every column sums to 1 within 1e-10,
//! and the nonzero pattern is strongly connected (irreducible). The spectral
//! quantity alpha2 (second-largest eigenvalue modulus) is defined here only
//! for symmetric matrices, which are doubly stochastic and therefore have
//! the uniform vector as the dominant eigenvector.

use std::fmt::Write as _;
use std::sync::OnceLock;

use thiserror::Error;

use crate::model::Problem;

/// Convergence tolerance of the power iteration behind [`PropagationMatrix::alpha2`].
const EIGEN_TOL: f64 = 1e-10;
const EIGEN_MAX_ITERS: usize = 100_000;
/// Allowed deviation of each column sum from 1.
pub const COLUMN_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum PropagationError {
    #[error("matrix must have at least one row")]
    Empty,
    #[error("row {row} has {got} entries, expected {expected}")]
    NotSquare { row: usize, got: usize, expected: usize },
    #[error("entry ({row},{col}) is negative: {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("entry ({row},{col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("column {col} sums to {sum}, expected 1 within {tol}", tol = COLUMN_SUM_TOL)]
    ColumnSum { col: usize, sum: f64 },
    #[error("matrix is reducible: its nonzero pattern is not strongly connected")]
    Reducible,
    #[error(
        "constraint graph is disconnected, so neighbor weights would be reducible; \
         use the uniform matrix instead"
    )]
    DisconnectedGraph,
    #[error("second eigenvalue is only defined here for symmetric matrices")]
    NotSymmetric,
    #[error("cooperation strength {value} is outside [0,1)")]
    InvalidLambda { value: f64 },
    #[error("alpha2 value {value} is outside [0,1]")]
    InvalidAlpha2 { value: f64 },
}

#[derive(Clone, Debug)]
pub struct PropagationMatrix {
    n: usize,
    /// Row-major, so `entries[i*n + j]` is the weight of sub-problem j's
    /// assignment constraints in sub-problem i's update.
    entries: Vec<f64>,
    symmetric: bool,
    alpha2: OnceLock<f64>,
}

impl PartialEq for PropagationMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.entries == other.entries
    }
}

impl PropagationMatrix {
    /// All weights 1/n. Symmetric, rank one, alpha2 = 0.
    pub fn make_uniform(n: usize) -> Result<Self, PropagationError> {
        if n == 0 {
            return Err(PropagationError::Empty);
        }
        let w = 1.0 / n as f64;
        let m = PropagationMatrix {
            n,
            entries: vec![w; n * n],
            symmetric: true,
            alpha2: OnceLock::new(),
        };
        m.alpha2.set(0.0).expect("fresh cache");
        Ok(m)
    }

    /// Metropolis weights on the undirected support of the pairwise keys:
    /// w_ij = 1/(1+max(d_i,d_j)) for neighbors, remainder on the diagonal.
    /// Symmetric and column-stochastic by construction; requires a connected
    /// constraint graph, otherwise the result would be reducible.
    pub fn make_neighbor(problem: &Problem) -> Result<Self, PropagationError> {
        let n = problem.num_variables();
        if n == 0 {
            return Err(PropagationError::Empty);
        }
        let neighbors = problem.neighbors();
        if !connected(&neighbors) {
            return Err(PropagationError::DisconnectedGraph);
        }
        let deg: Vec<usize> = neighbors.iter().map(|v| v.len()).collect();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            let mut off = 0.0;
            for &j in &neighbors[i] {
                let w = 1.0 / (1 + deg[i].max(deg[j])) as f64;
                entries[i * n + j] = w;
                off += w;
            }
            entries[i * n + i] = 1.0 - off;
        }
        Ok(PropagationMatrix {
            n,
            entries,
            symmetric: true,
            alpha2: OnceLock::new(),
        })
    }

    /// Validates an arbitrary square matrix and wraps it. All failed checks
    /// are reported, not just the first.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, Vec<PropagationError>> {
        let symmetric = validate(rows)?;
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            entries.extend_from_slice(row);
        }
        Ok(PropagationMatrix {
            n,
            entries,
            symmetric,
            alpha2: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Weights w_ij for fixed i, indexed by j.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Second-largest eigenvalue modulus of a symmetric matrix, cached.
    ///
    /// The dominant pair (eigenvalue 1, uniform vector) is deflated by
    /// working with B = W - (1/n)J; power iteration then runs on B^2, whose
    /// spectrum is the squared moduli, so it converges even when the second
    /// and last eigenvalues are negatives of each other.
    pub fn alpha2(&self) -> Result<f64, PropagationError> {
        if !self.symmetric {
            return Err(PropagationError::NotSymmetric);
        }
        Ok(*self.alpha2.get_or_init(|| self.alpha2_power_iteration()))
    }

    fn alpha2_power_iteration(&self) -> f64 {
        let n = self.n;
        if n == 1 {
            return 0.0;
        }
        // Deterministic start with zero mean (already orthogonal to the
        // dominant eigenvector) and varied signs.
        let mut v: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).sin()).collect();
        center(&mut v);
        if normalize(&mut v) == 0.0 {
            return 0.0;
        }
        let mut estimate = 0.0;
        for _ in 0..EIGEN_MAX_ITERS {
            let bv = self.deflated_mul(&v);
            let mut bbv = self.deflated_mul(&bv);
            // Rayleigh quotient of B^2 at unit v equals ||Bv||^2 here, but
            // computing it from bbv keeps one convergence criterion.
            let next: f64 = v.iter().zip(&bbv).map(|(a, b)| a * b).sum();
            let norm = normalize(&mut bbv);
            if norm == 0.0 {
                return 0.0;
            }
            v = bbv;
            if (next - estimate).abs() <= EIGEN_TOL {
                return next.max(0.0).sqrt();
            }
            estimate = next;
        }
        estimate.max(0.0).sqrt()
    }

    /// (W - (1/n)J) v, without forming the deflated matrix.
    fn deflated_mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mean = v.iter().sum::<f64>() / n as f64;
        (0..n)
            .map(|i| {
                let row = self.row(i);
                let mut acc = 0.0;
                for j in 0..n {
                    acc += row[j] * v[j];
                }
                acc - mean
            })
            .collect()
    }

    /// Row-major text dump, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for (j, w) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{w}");
            }
            out.push('\n');
        }
        out
    }
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Checks nonnegativity, column stochasticity and irreducibility of a square
/// matrix. Returns the symmetry flag on success, all failures otherwise.
pub fn validate(rows: &[Vec<f64>]) -> Result<bool, Vec<PropagationError>> {
    let mut errors = Vec::new();
    let n = rows.len();
    if n == 0 {
        return Err(vec![PropagationError::Empty]);
    }
    for (row, r) in rows.iter().enumerate() {
        if r.len() != n {
            errors.push(PropagationError::NotSquare {
                row,
                got: r.len(),
                expected: n,
            });
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            if !v.is_finite() {
                errors.push(PropagationError::NonFiniteEntry { row: i, col: j });
            } else if v < 0.0 {
                errors.push(PropagationError::NegativeEntry { row: i, col: j, value: v });
            }
        }
    }
    for col in 0..n {
        let sum: f64 = rows.iter().map(|r| r[col]).sum();
        if (sum - 1.0).abs() > COLUMN_SUM_TOL {
            errors.push(PropagationError::ColumnSum { col, sum });
        }
    }
    if !strongly_connected(rows) {
        errors.push(PropagationError::Reducible);
    }
    let symmetric = (0..n).all(|i| (0..n).all(|j| rows[i][j] == rows[j][i]));
    if errors.is_empty() {
        Ok(symmetric)
    } else {
        Err(errors)
    }
}

/// Strong connectivity of the nonzero pattern ("zero" means exactly 0.0):
/// node 0 must reach every node along nonzero entries, in both the forward
/// and the transposed graph.
fn strongly_connected(rows: &[Vec<f64>]) -> bool {
    let n = rows.len();
    let forward = |from: usize, to: usize| rows[from][to] != 0.0;
    let backward = |from: usize, to: usize| rows[to][from] != 0.0;
    reaches_all(n, forward) && reaches_all(n, backward)
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for (v, s) in seen.iter_mut().enumerate() {
            if !*s && edge(u, v) {
                *s = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

fn connected(neighbors: &[Vec<usize>]) -> bool {
    let n = neighbors.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &neighbors[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// One step of the damped spectral recursion: given alpha2^(k-1) (1 at k=0),
/// returns alpha2^(k) = lambda_k * alpha2 * prev + (1 - lambda_k).
#[inline]
pub(crate) fn alpha2_step(alpha2: f64, lambda: f64, prev: f64) -> f64 {
    lambda * alpha2 * prev + (1.0 - lambda)
}

/// The damping sequence alpha2^(1..=K) driven by the cooperation strengths.
/// Every lambda must lie in [0,1); alpha2 is a modulus in [0,1].
pub fn alpha2_sequence(alpha2: f64, lambdas: &[f64]) -> Result<Vec<f64>, PropagationError> {
    if !(0.0..=1.0).contains(&alpha2) || !alpha2.is_finite() {
        return Err(PropagationError::InvalidAlpha2 { value: alpha2 });
    }
    let mut out = Vec::with_capacity(lambdas.len());
    let mut prev = 1.0;
    for &l in lambdas {
        if !(0.0..1.0).contains(&l) {
            return Err(PropagationError::InvalidLambda { value: l });
        }
        prev = alpha2_step(alpha2, l, prev);
        out.push(prev);
    }
    Ok(out)
}
