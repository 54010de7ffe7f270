//! Problem representation: variables over finite label domains, nonnegative
//! unary cost tables, and directed pairwise cost tables.
//!
//! The total energy of a full assignment is the sum of all unary values plus
//! the value of every stored directed constraint, each counted exactly once.
//! An undirected interaction is encoded either as one directed table carrying
//! the full cost or as both directions each carrying half.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the assignment-space size accepted by [`brute_force_solve`].
pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 10_000_000;

/// Cap on how many co-optimal assignments [`brute_force_solve`] collects
/// before truncating the set.
pub const MAX_ENUMERATED_OPTIMA: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("variable count mismatch: {field} has {got} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("variable {var}: domain is empty")]
    EmptyDomain { var: usize },
    #[error("variable {var}: unary table has {got} entries, domain has {expected}")]
    UnaryShape { var: usize, got: usize, expected: usize },
    #[error("{field}: cost {value} is negative")]
    NegativeCost { field: String, value: f64 },
    #[error("{field}: cost is not finite")]
    NonFiniteCost { field: String },
    #[error("pairwise constraint keyed ({i},{i}): self-constraints are not allowed")]
    SelfConstraint { i: usize },
    #[error("pairwise constraint ({i},{j}): variable index out of range (n={n})")]
    DanglingVariable { i: usize, j: usize, n: usize },
    #[error("pairwise constraint ({i},{j}): duplicate key")]
    DuplicateConstraint { i: usize, j: usize },
    #[error("pairwise constraint ({i},{j}): table has {got} entries, expected {expected}")]
    TableShape {
        i: usize,
        j: usize,
        got: usize,
        expected: usize,
    },
    #[error("assignment has {got} entries, problem has {expected} variables")]
    AssignmentLength { got: usize, expected: usize },
    #[error("assignment entry {index} for variable {var} is outside its domain of size {size}")]
    InvalidAssignment { var: usize, index: usize, size: usize },
    #[error("assignment space of size {size} exceeds the brute-force cap {cap}")]
    TooLarge { size: u128, cap: u128 },
    #[error("problem file is not valid JSON: {0}")]
    Syntax(String),
}

/// A full assignment, stored as one label index per variable.
///
/// Entry `i` indexes into variable `i`'s ordered domain; the label *value*
/// it denotes is `problem.label(i, x[i])`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (t, v) in self.0.iter().enumerate() {
            if t > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// One directed pairwise cost table `C_ij`, owned by variable `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseConstraint {
    pub i: usize,
    pub j: usize,
    /// Row-major `m_i x m_j` costs.
    table: Vec<f64>,
    cols: usize,
}

impl PairwiseConstraint {
    #[inline]
    pub fn cost(&self, xi: usize, xj: usize) -> f64 {
        self.table[xi * self.cols + xj]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

/// A pairwise constraint optimization problem over finite domains.
///
/// Immutable after construction; shareable across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    domains: Vec<Vec<i64>>,
    unary: Vec<Vec<f64>>,
    pairwise: Vec<PairwiseConstraint>,
    /// Constraint indices with `i == var` (the constraints `var` owns).
    out_constraints: Vec<Vec<usize>>,
    /// Constraint indices with `j == var`.
    in_constraints: Vec<Vec<usize>>,
}

impl Problem {
    /// Builds and validates a problem. `pairwise` entries are keyed by the
    /// ordered pair `(i, j)` with a row-major `m_i x m_j` table.
    pub fn new(
        domains: Vec<Vec<i64>>,
        unary: Vec<Vec<f64>>,
        pairwise: Vec<((usize, usize), Vec<f64>)>,
    ) -> Result<Self, ModelError> {
        let n = domains.len();
        if unary.len() != n {
            return Err(ModelError::LengthMismatch {
                field: "unary",
                got: unary.len(),
                expected: n,
            });
        }
        for (var, d) in domains.iter().enumerate() {
            if d.is_empty() {
                return Err(ModelError::EmptyDomain { var });
            }
            if unary[var].len() != d.len() {
                return Err(ModelError::UnaryShape {
                    var,
                    got: unary[var].len(),
                    expected: d.len(),
                });
            }
            for &v in &unary[var] {
                check_cost(v, || format!("unary[{var}]"))?;
            }
        }

        let mut seen = HashSet::new();
        let mut constraints = Vec::with_capacity(pairwise.len());
        for ((i, j), table) in pairwise {
            if i >= n || j >= n {
                return Err(ModelError::DanglingVariable { i, j, n });
            }
            if i == j {
                return Err(ModelError::SelfConstraint { i });
            }
            if !seen.insert((i, j)) {
                return Err(ModelError::DuplicateConstraint { i, j });
            }
            let expected = domains[i].len() * domains[j].len();
            if table.len() != expected {
                return Err(ModelError::TableShape {
                    i,
                    j,
                    got: table.len(),
                    expected,
                });
            }
            for &v in &table {
                check_cost(v, || format!("pairwise[({i},{j})]"))?;
            }
            constraints.push(PairwiseConstraint {
                i,
                j,
                table,
                cols: domains[j].len(),
            });
        }
        constraints.sort_by_key(|c| (c.i, c.j));

        let mut out_constraints = vec![Vec::new(); n];
        let mut in_constraints = vec![Vec::new(); n];
        for (idx, c) in constraints.iter().enumerate() {
            out_constraints[c.i].push(idx);
            in_constraints[c.j].push(idx);
        }

        Ok(Problem {
            domains,
            unary,
            pairwise: constraints,
            out_constraints,
            in_constraints,
        })
    }

    pub fn num_variables(&self) -> usize {
        self.domains.len()
    }

    /// Domain size `m_i`.
    pub fn domain_size(&self, var: usize) -> usize {
        self.domains[var].len()
    }

    pub fn domain(&self, var: usize) -> &[i64] {
        &self.domains[var]
    }

    /// Label value denoted by index `idx` of variable `var`'s domain.
    pub fn label(&self, var: usize, idx: usize) -> i64 {
        self.domains[var][idx]
    }

    #[inline]
    pub fn unary_cost(&self, var: usize, idx: usize) -> f64 {
        self.unary[var][idx]
    }

    pub fn constraints(&self) -> &[PairwiseConstraint] {
        &self.pairwise
    }

    pub fn constraint(&self, idx: usize) -> &PairwiseConstraint {
        &self.pairwise[idx]
    }

    /// Indices of constraints keyed `(var, .)`.
    pub fn constraints_of(&self, var: usize) -> &[usize] {
        &self.out_constraints[var]
    }

    /// Indices of constraints keyed `(., var)`.
    pub fn constraints_into(&self, var: usize) -> &[usize] {
        &self.in_constraints[var]
    }

    /// Assignment-space size `prod m_i`.
    pub fn search_space(&self) -> u128 {
        self.domains.iter().map(|d| d.len() as u128).product()
    }

    /// Adjacency of the undirected support of the pairwise keys.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let n = self.num_variables();
        let mut sets = vec![HashSet::new(); n];
        for c in &self.pairwise {
            sets[c.i].insert(c.j);
            sets[c.j].insert(c.i);
        }
        sets.into_iter()
            .map(|s| {
                let mut v: Vec<usize> = s.into_iter().collect();
                v.sort_unstable();
                v
            })
            .collect()
    }

    pub fn validate_assignment(&self, x: &Assignment) -> Result<(), ModelError> {
        if x.0.len() != self.num_variables() {
            return Err(ModelError::AssignmentLength {
                got: x.0.len(),
                expected: self.num_variables(),
            });
        }
        for (var, &idx) in x.0.iter().enumerate() {
            let size = self.domain_size(var);
            if idx >= size {
                return Err(ModelError::InvalidAssignment { var, index: idx, size });
            }
        }
        Ok(())
    }

    /// Total energy of a full assignment: all unary values plus every stored
    /// directed constraint, each counted once.
    pub fn energy(&self, x: &Assignment) -> Result<f64, ModelError> {
        self.validate_assignment(x)?;
        Ok(self.energy_unchecked(&x.0))
    }

    /// Energy without validity checks; indices must be in range.
    pub(crate) fn energy_unchecked(&self, x: &[usize]) -> f64 {
        let mut e = 0.0;
        for (var, &idx) in x.iter().enumerate() {
            e += self.unary[var][idx];
        }
        for c in &self.pairwise {
            e += c.cost(x[c.i], x[c.j]);
        }
        e
    }

    /// Energy change when variable `var` moves from label `from` to `to`,
    /// with every other variable fixed at `x`.
    pub(crate) fn energy_delta(&self, x: &[usize], var: usize, from: usize, to: usize) -> f64 {
        let mut d = self.unary[var][to] - self.unary[var][from];
        for &ci in &self.out_constraints[var] {
            let c = &self.pairwise[ci];
            d += c.cost(to, x[c.j]) - c.cost(from, x[c.j]);
        }
        for &ci in &self.in_constraints[var] {
            let c = &self.pairwise[ci];
            d += c.cost(x[c.i], to) - c.cost(x[c.i], from);
        }
        d
    }

    pub fn labels_of(&self, x: &Assignment) -> Vec<i64> {
        x.0.iter()
            .enumerate()
            .map(|(var, &idx)| self.domains[var][idx])
            .collect()
    }
}

fn check_cost(v: f64, field: impl Fn() -> String) -> Result<(), ModelError> {
    if !v.is_finite() {
        return Err(ModelError::NonFiniteCost { field: field() });
    }
    if v < 0.0 {
        return Err(ModelError::NegativeCost { field: field(), value: v });
    }
    Ok(())
}

/// Per-variable sub-objective views: `E_i` owns `C_i` plus exactly the
/// constraints keyed `(i, .)`, so the parts sum back to the total energy.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Scope `X_i = {i} union {j : (i,j) stored}` per variable, sorted.
    scopes: Vec<Vec<usize>>,
}

impl Decomposition {
    pub fn scope(&self, var: usize) -> &[usize] {
        &self.scopes[var]
    }

    /// Value of sub-objective `E_i` under a full assignment.
    pub fn sub_energy(&self, problem: &Problem, var: usize, x: &Assignment) -> Result<f64, ModelError> {
        problem.validate_assignment(x)?;
        let mut e = problem.unary[var][x.0[var]];
        for &ci in problem.constraints_of(var) {
            let c = problem.constraint(ci);
            e += c.cost(x.0[c.i], x.0[c.j]);
        }
        Ok(e)
    }
}

/// Splits a problem into per-variable sub-objectives.
pub fn decompose(problem: &Problem) -> Decomposition {
    let scopes = (0..problem.num_variables())
        .map(|i| {
            let mut s: Vec<usize> = std::iter::once(i)
                .chain(problem.constraints_of(i).iter().map(|&ci| problem.constraint(ci).j))
                .collect();
            s.sort_unstable();
            s
        })
        .collect();
    Decomposition { scopes }
}

/// Exhaustive enumeration result.
#[derive(Clone, Debug)]
pub struct BruteForceResult {
    pub optimum: Assignment,
    pub optimal_energy: f64,
    /// Every minimizing assignment, up to [`MAX_ENUMERATED_OPTIMA`].
    pub all_optima: Vec<Assignment>,
    /// True when the co-optimal set was cut off at the cap.
    pub truncated: bool,
}

/// Exhaustively enumerates the assignment space (default cap 10^7 states).
pub fn brute_force_solve(problem: &Problem) -> Result<BruteForceResult, ModelError> {
    brute_force_solve_capped(problem, DEFAULT_BRUTE_FORCE_CAP)
}

pub fn brute_force_solve_capped(problem: &Problem, cap: u128) -> Result<BruteForceResult, ModelError> {
    let size = problem.search_space();
    if size > cap {
        return Err(ModelError::TooLarge { size, cap });
    }
    let n = problem.num_variables();
    let mut x = vec![0usize; n];
    let mut best = f64::INFINITY;
    let mut optima: Vec<Assignment> = Vec::new();
    let mut truncated = false;
    loop {
        let e = problem.energy_unchecked(&x);
        if e < best {
            best = e;
            optima.clear();
            truncated = false;
            optima.push(Assignment(x.clone()));
        } else if e == best {
            if optima.len() < MAX_ENUMERATED_OPTIMA {
                optima.push(Assignment(x.clone()));
            } else {
                truncated = true;
            }
        }
        // odometer increment, last variable fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(BruteForceResult {
                    optimum: optima[0].clone(),
                    optimal_energy: best,
                    all_optima: optima,
                    truncated,
                });
            }
            pos -= 1;
            x[pos] += 1;
            if x[pos] < problem.domain_size(pos) {
                break;
            }
            x[pos] = 0;
        }
    }
}

/// On-disk problem document. JSON with exactly these fields; anything else
/// is rejected. All indices are 0-based; pairwise tables are row-major
/// `m_i x m_j` flat lists.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    n: usize,
    domains: Vec<Vec<i64>>,
    unary: Vec<Vec<f64>>,
    pairwise: Vec<PairwiseDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairwiseDoc {
    i: usize,
    j: usize,
    table: Vec<f64>,
}

/// Parses a problem document (see `README.md` for the grammar).
pub fn load_problem(text: &str) -> Result<Problem, ModelError> {
    let doc: ProblemDoc =
        serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
    if doc.domains.len() != doc.n {
        return Err(ModelError::LengthMismatch {
            field: "domains",
            got: doc.domains.len(),
            expected: doc.n,
        });
    }
    Problem::new(
        doc.domains,
        doc.unary,
        doc.pairwise.into_iter().map(|p| ((p.i, p.j), p.table)).collect(),
    )
}

/// Serializes a problem so that `load_problem(save_problem(p))` is
/// structurally identical to `p`.
pub fn save_problem(problem: &Problem) -> String {
    let doc = ProblemDoc {
        n: problem.num_variables(),
        domains: problem.domains.clone(),
        unary: problem.unary.clone(),
        pairwise: problem
            .pairwise
            .iter()
            .map(|c| PairwiseDoc {
                i: c.i,
                j: c.j,
                table: c.table.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("problem serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 2 vars over {0,1}; C_1=(1,0), C_2=(0,2); C_12(x1,x2)=2*[x1!=x2].
    pub(crate) fn p2() -> Problem {
        Problem::new(
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            vec![((0, 1), vec![0.0, 2.0, 2.0, 0.0])],
        )
        .unwrap()
    }

    #[test]
    fn p2_energies() {
        let p = p2();
        let cases = [
            (vec![0, 0], 1.0),
            (vec![0, 1], 5.0),
            (vec![1, 0], 2.0),
            (vec![1, 1], 2.0),
        ];
        for (x, want) in cases {
            assert_eq!(p.energy(&Assignment(x)).unwrap(), want);
        }
    }

    #[test]
    fn energy_no_pairwise_is_unary_sum() {
        let p = Problem::new(
            vec![vec![0, 1, 2], vec![0, 1]],
            vec![vec![3.0, 1.0, 4.0], vec![1.5, 0.5]],
            vec![],
        )
        .unwrap();
        assert_eq!(p.energy(&Assignment(vec![2, 0])).unwrap(), 4.0 + 1.5);
    }

    #[test]
    fn energy_all_zero_costs() {
        let p = Problem::new(
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![0.0; 2], vec![0.0; 2]],
            vec![((1, 0), vec![0.0; 4])],
        )
        .unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(p.energy(&Assignment(vec![a, b])).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn energy_rejects_out_of_domain_label() {
        let p = p2();
        let err = p.energy(&Assignment(vec![0, 2])).unwrap_err();
        assert_eq!(err, ModelError::InvalidAssignment { var: 1, index: 2, size: 2 });
        assert!(p.energy(&Assignment(vec![0])).is_err());
    }

    #[test]
    fn decompose_p2_ownership() {
        let p = p2();
        let d = decompose(&p);
        assert_eq!(d.scope(0), &[0, 1]);
        assert_eq!(d.scope(1), &[1]);
        // E_1 = C_1 + C_12, E_2 = C_2
        let x = Assignment(vec![1, 0]);
        assert_eq!(d.sub_energy(&p, 0, &x).unwrap(), 0.0 + 2.0);
        assert_eq!(d.sub_energy(&p, 1, &x).unwrap(), 0.0);
    }

    #[test]
    fn decompose_no_pairwise() {
        let p = Problem::new(
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![],
        )
        .unwrap();
        let d = decompose(&p);
        let x = Assignment(vec![1, 1]);
        assert_eq!(d.sub_energy(&p, 0, &x).unwrap(), 2.0);
        assert_eq!(d.sub_energy(&p, 1, &x).unwrap(), 4.0);
    }

    #[test]
    fn brute_force_p2() {
        let r = brute_force_solve(&p2()).unwrap();
        assert_eq!(r.optimum, Assignment(vec![0, 0]));
        assert_eq!(r.optimal_energy, 1.0);
        assert_eq!(r.all_optima, vec![Assignment(vec![0, 0])]);
        assert!(!r.truncated);
    }

    #[test]
    fn brute_force_single_variable() {
        let p = Problem::new(vec![vec![10, 20, 30]], vec![vec![5.0, 2.0, 7.0]], vec![]).unwrap();
        let r = brute_force_solve(&p).unwrap();
        assert_eq!(r.optimum, Assignment(vec![1]));
        assert_eq!(r.optimal_energy, 2.0);
    }

    #[test]
    fn brute_force_all_zero_enumerates_everything() {
        let p = Problem::new(
            vec![vec![0, 1], vec![0, 1, 2]],
            vec![vec![0.0; 2], vec![0.0; 3]],
            vec![],
        )
        .unwrap();
        let r = brute_force_solve(&p).unwrap();
        assert_eq!(r.all_optima.len(), 6);
        assert!(!r.truncated);
    }

    #[test]
    fn brute_force_cap() {
        let p = Problem::new(
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![0.0; 2], vec![0.0; 2]],
            vec![],
        )
        .unwrap();
        assert!(matches!(
            brute_force_solve_capped(&p, 3),
            Err(ModelError::TooLarge { size: 4, cap: 3 })
        ));
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        // negative cost
        assert!(matches!(
            Problem::new(vec![vec![0]], vec![vec![-1.0]], vec![]),
            Err(ModelError::NegativeCost { .. })
        ));
        // non-finite cost
        assert!(matches!(
            Problem::new(vec![vec![0]], vec![vec![f64::NAN]], vec![]),
            Err(ModelError::NonFiniteCost { .. })
        ));
        // self constraint
        assert!(matches!(
            Problem::new(
                vec![vec![0, 1], vec![0, 1]],
                vec![vec![0.0; 2], vec![0.0; 2]],
                vec![((1, 1), vec![0.0; 4])],
            ),
            Err(ModelError::SelfConstraint { i: 1 })
        ));
        // empty domain
        assert!(matches!(
            Problem::new(vec![vec![]], vec![vec![]], vec![]),
            Err(ModelError::EmptyDomain { var: 0 })
        ));
        // table shape
        assert!(matches!(
            Problem::new(
                vec![vec![0, 1], vec![0, 1]],
                vec![vec![0.0; 2], vec![0.0; 2]],
                vec![((0, 1), vec![0.0; 3])],
            ),
            Err(ModelError::TableShape { .. })
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let p = p2();
        let text = save_problem(&p);
        let q = load_problem(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn load_rejects_negative_cost() {
        let text = r#"{"n":1,"domains":[[0]],"unary":[[-1.0]],"pairwise":[]}"#;
        assert!(matches!(load_problem(text), Err(ModelError::NegativeCost { .. })));
    }

    #[test]
    fn load_rejects_self_keyed_constraint() {
        let text = r#"{"n":4,"domains":[[0],[0],[0],[0]],"unary":[[0.0],[0.0],[0.0],[0.0]],
                       "pairwise":[{"i":3,"j":3,"table":[0.0]}]}"#;
        assert!(matches!(load_problem(text), Err(ModelError::SelfConstraint { i: 3 })));
    }

    #[test]
    fn load_rejects_unknown_fields_and_bad_syntax() {
        let text = r#"{"n":1,"domains":[[0]],"unary":[[0.0]],"pairwise":[],"extra":1}"#;
        assert!(matches!(load_problem(text), Err(ModelError::Syntax(_))));
        assert!(matches!(load_problem("not json"), Err(ModelError::Syntax(_))));
    }

    #[test]
    fn load_rejects_dangling_variable() {
        let text = r#"{"n":2,"domains":[[0],[0]],"unary":[[0.0],[0.0]],
                       "pairwise":[{"i":0,"j":5,"table":[0.0]}]}"#;
        assert!(matches!(
            load_problem(text),
            Err(ModelError::DanglingVariable { i: 0, j: 5, n: 2 })
        ));
    }

    #[test]
    fn oracle_energy_consistency() {
        let p = p2();
        let r = brute_force_solve(&p).unwrap();
        assert_eq!(p.energy(&r.optimum).unwrap(), r.optimal_energy);
    }
}
