//! Solver state: assignment-constraint tables, label masks and run history.

use crate::model::{Assignment, Problem};
use crate::propagation::PropagationMatrix;

use super::{LambdaSchedule, RunConfig, SolverError};

/// Snapshot recorded by `update_step` and consumed by consensus checks and
/// residual tracking. `pair_min[ci][xi]` is the minimized coupling term of
/// stored constraint `ci` evaluated at label `xi` of its owning variable.
#[derive(Clone, Debug)]
pub(super) struct UpdateRecord {
    pub(super) lambda: f64,
    pub(super) prev_c: Vec<Vec<f64>>,
    pub(super) prev_active: Vec<Vec<bool>>,
    /// Per-variable minimum of `prev_c` over labels active at update time.
    pub(super) prev_min: Vec<f64>,
    pub(super) pair_min: Vec<Vec<f64>>,
}

/// Iteration state of the cooperative dynamics.
///
/// Invariants: every active label's value is finite and nonnegative;
/// deactivated labels hold the +inf sentinel and are skipped by every
/// minimization; each variable always keeps at least one active label.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub(super) k: usize,
    pub(super) c: Vec<Vec<f64>>,
    pub(super) active: Vec<Vec<bool>>,
    pub(super) lambda_history: Vec<f64>,
    pub(super) bound_history: Vec<f64>,
    pub(super) w: PropagationMatrix,
    pub(super) schedule: LambdaSchedule,
    /// True while the bound hypotheses hold: zero start (or first strength
    /// 0) and no heuristic masking since.
    pub(super) bound_certified: bool,
    pub(super) initial_bound: f64,
    pub(super) last_update: Option<UpdateRecord>,
}

impl SolverState {
    /// Fresh state with all-zero tables and every label active.
    pub fn new(
        problem: &Problem,
        w: PropagationMatrix,
        config: &RunConfig,
    ) -> Result<Self, SolverError> {
        let zeros = (0..problem.num_variables())
            .map(|i| vec![0.0; problem.domain_size(i)])
            .collect();
        Self::build(problem, w, config, zeros, true)
    }

    /// Start from caller-supplied tables. Nonzero tables void the bound
    /// guarantees, so they require either `config.allow_nonzero_init` or a
    /// first cooperation strength of 0 (which restores them).
    pub fn with_initial(
        problem: &Problem,
        w: PropagationMatrix,
        config: &RunConfig,
        c0: Vec<Vec<f64>>,
    ) -> Result<Self, SolverError> {
        let n = problem.num_variables();
        if c0.len() != n {
            return Err(SolverError::ShapeMismatch);
        }
        let mut all_zero = true;
        for (var, table) in c0.iter().enumerate() {
            if table.len() != problem.domain_size(var) {
                return Err(SolverError::InitialShape {
                    var,
                    got: table.len(),
                    expected: problem.domain_size(var),
                });
            }
            for (label, &v) in table.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(SolverError::InvalidInitialValue { var, label });
                }
                all_zero &= v == 0.0;
            }
        }
        config.schedule.validate()?;
        let lambda1_zero = config.schedule.at(1) == 0.0;
        if !all_zero && !lambda1_zero && !config.allow_nonzero_init {
            return Err(SolverError::NonzeroInitNotPermitted);
        }
        Self::build(problem, w, config, c0, all_zero || lambda1_zero)
    }

    fn build(
        problem: &Problem,
        w: PropagationMatrix,
        config: &RunConfig,
        c0: Vec<Vec<f64>>,
        certified: bool,
    ) -> Result<Self, SolverError> {
        config.schedule.validate()?;
        let n = problem.num_variables();
        if w.n() != n {
            return Err(SolverError::MatrixSize { got: w.n(), expected: n });
        }
        let active: Vec<Vec<bool>> =
            (0..n).map(|i| vec![true; problem.domain_size(i)]).collect();
        let initial_bound = c0
            .iter()
            .map(|t| t.iter().copied().fold(f64::INFINITY, f64::min))
            .sum();
        Ok(SolverState {
            k: 0,
            c: c0,
            active,
            lambda_history: Vec::new(),
            bound_history: Vec::new(),
            w,
            schedule: config.schedule.clone(),
            bound_certified: certified,
            initial_bound,
            last_update: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Constraint values of one variable; deactivated labels hold +inf.
    pub fn c_table(&self, var: usize) -> &[f64] {
        &self.c[var]
    }

    pub fn active_mask(&self, var: usize) -> &[bool] {
        &self.active[var]
    }

    pub fn active_counts(&self) -> Vec<usize> {
        self.active
            .iter()
            .map(|m| m.iter().filter(|&&a| a).count())
            .collect()
    }

    pub fn lambda_history(&self) -> &[f64] {
        &self.lambda_history
    }

    /// Lower bounds recorded after each iteration (empty before the first).
    pub fn bound_history(&self) -> &[f64] {
        &self.bound_history
    }

    pub fn propagation(&self) -> &PropagationMatrix {
        &self.w
    }

    /// Whether the recorded bounds carry the zero-start guarantee and no
    /// heuristic masking has happened.
    pub fn bound_certified(&self) -> bool {
        self.bound_certified
    }

    /// Sum of per-variable minima of the initial tables (0 for a zero start).
    pub fn initial_bound(&self) -> f64 {
        self.initial_bound
    }

    /// Sum of per-variable minima over active labels.
    pub fn lower_bound(&self) -> f64 {
        self.c
            .iter()
            .zip(&self.active)
            .map(|(t, m)| per_var_min(t, m))
            .sum()
    }

    /// Per-variable argmin over active labels, ties to the lowest index.
    pub fn candidate(&self) -> Assignment {
        Assignment(
            self.c
                .iter()
                .zip(&self.active)
                .map(|(t, m)| {
                    let mut best = usize::MAX;
                    let mut best_v = f64::INFINITY;
                    for (l, (&v, &a)) in t.iter().zip(m).enumerate() {
                        if a && (best == usize::MAX || v < best_v) {
                            best = l;
                            best_v = v;
                        }
                    }
                    debug_assert_ne!(best, usize::MAX, "no active label");
                    best
                })
                .collect(),
        )
    }

    /// Sup-norm change of the last step, over labels active both before and
    /// after. None before the first update.
    pub fn last_residual(&self) -> Option<f64> {
        let rec = self.last_update.as_ref()?;
        let mut worst: f64 = 0.0;
        for (var, table) in self.c.iter().enumerate() {
            for (l, &v) in table.iter().enumerate() {
                if self.active[var][l] && rec.prev_active[var][l] {
                    worst = worst.max((v - rec.prev_c[var][l]).abs());
                }
            }
        }
        Some(worst)
    }

    #[cfg(test)]
    pub(crate) fn deactivate_all_for_test(&mut self, var: usize) {
        for (l, a) in self.active[var].iter_mut().enumerate() {
            *a = false;
            self.c[var][l] = f64::INFINITY;
        }
    }
}

fn per_var_min(table: &[f64], mask: &[bool]) -> f64 {
    let mut best = f64::INFINITY;
    for (&v, &a) in table.iter().zip(mask) {
        if a && v < best {
            best = v;
        }
    }
    debug_assert!(best.is_finite(), "no active label");
    best
}

/// Sup-norm distance between two states of identical shape, taken over
/// labels active in both.
pub fn residual(a: &SolverState, b: &SolverState) -> Result<f64, SolverError> {
    if a.c.len() != b.c.len() {
        return Err(SolverError::ShapeMismatch);
    }
    let mut worst: f64 = 0.0;
    for (var, (ta, tb)) in a.c.iter().zip(&b.c).enumerate() {
        if ta.len() != tb.len() {
            return Err(SolverError::ShapeMismatch);
        }
        for (l, (&va, &vb)) in ta.iter().zip(tb).enumerate() {
            if a.active[var][l] && b.active[var][l] {
                worst = worst.max((va - vb).abs());
            }
        }
    }
    Ok(worst)
}
