//! The cooperative optimization engine.
//!
//! Each variable owns a sub-objective (its unary table plus the pairwise
//! tables keyed by it). One iteration re-minimizes every sub-objective with
//! the others' current assignment constraints mixed in through the
//! propagation matrix, all from the previous snapshot, so the step is
//! order-independent and parallelizable. The sum of per-variable minima is a
//! lower bound on the optimal energy whenever the run started from zero
//! tables (or the first cooperation strength was 0); persisting consensus
//! yields a computable optimality-gap certificate, and two sound pruning
//! rules discard labels that cannot appear in any optimum.

mod analysis;
mod prune;
mod run;
mod state;
mod update;

pub use analysis::gap_certificate;
pub use prune::PruneReport;
pub use run::{run, IterationReport, RunReport, StopReason, TraceRecord};
pub use state::{residual, SolverState};

use thiserror::Error;

use crate::model::ModelError;
use crate::propagation::PropagationError;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("cooperation strength {value} is outside [0,1)")]
    InvalidLambda { value: f64 },
    #[error("ramp step {step} must be a positive finite number")]
    InvalidRampStep { step: f64 },
    #[error("explicit cooperation-strength schedule is empty")]
    EmptySchedule,
    #[error("variable {var} has no active labels")]
    EmptyActiveDomain { var: usize },
    #[error("initial table for variable {var} has {got} entries, domain has {expected}")]
    InitialShape { var: usize, got: usize, expected: usize },
    #[error("initial value for variable {var}, label {label} must be finite and nonnegative")]
    InvalidInitialValue { var: usize, label: usize },
    #[error(
        "nonzero initial tables invalidate the lower-bound guarantees; \
         opt in explicitly or use a first cooperation strength of 0"
    )]
    NonzeroInitNotPermitted,
    #[error("states have different table shapes")]
    ShapeMismatch,
    #[error("no update has been recorded yet")]
    NoUpdateRecord,
    #[error("certificate window is empty")]
    EmptyCertificateWindow,
    #[error("spectral pruning requires a symmetric propagation matrix")]
    SpectralPruneNeedsSymmetric,
    #[error("propagation matrix is {got}x{got}, problem has {expected} variables")]
    MatrixSize { got: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
}

/// Cooperation strength per iteration; all values must lie in [0,1).
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaSchedule {
    Constant(f64),
    /// Starts at `start`, moves by `step` toward `end` each iteration, then
    /// holds at `end`.
    Ramp { start: f64, end: f64, step: f64 },
    /// One value per iteration; the last value repeats.
    Explicit(Vec<f64>),
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Constant(0.9)
    }
}

impl LambdaSchedule {
    /// The stock rising schedule: 0.5 to 0.99 in steps of 0.01.
    pub fn default_ramp() -> Self {
        LambdaSchedule::Ramp { start: 0.5, end: 0.99, step: 0.01 }
    }

    /// Strength used by iteration `k` (1-based).
    pub fn at(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match self {
            LambdaSchedule::Constant(l) => *l,
            LambdaSchedule::Ramp { start, end, step } => {
                let delta = (k - 1) as f64 * step;
                if end >= start {
                    (start + delta).min(*end)
                } else {
                    (start - delta).max(*end)
                }
            }
            LambdaSchedule::Explicit(v) => v[(k - 1).min(v.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let check = |value: f64| {
            if (0.0..1.0).contains(&value) {
                Ok(())
            } else {
                Err(SolverError::InvalidLambda { value })
            }
        };
        match self {
            LambdaSchedule::Constant(l) => check(*l),
            LambdaSchedule::Ramp { start, end, step } => {
                check(*start)?;
                check(*end)?;
                if *step > 0.0 && step.is_finite() {
                    Ok(())
                } else {
                    Err(SolverError::InvalidRampStep { step: *step })
                }
            }
            LambdaSchedule::Explicit(v) => {
                if v.is_empty() {
                    return Err(SolverError::EmptySchedule);
                }
                v.iter().try_for_each(|&l| check(l))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PruneMode {
    #[default]
    Off,
    /// Bound-margin rule: drop labels whose constraint value exceeds the
    /// per-variable minimum by more than (upper bound - lower bound).
    Margin,
    /// Spectral rule: drop labels above a global threshold driven by the
    /// propagation matrix's second eigenvalue. Symmetric matrices only.
    Spectral,
    Both,
}

/// Winner-take-all tightening: when no consensus has formed for `stall`
/// consecutive iterations, deactivate per variable every label whose value
/// exceeds the minimum by more than `rho * spread`, then shrink `rho`
/// geometrically. Once `rho` falls below `floor`, only the argmin label is
/// kept. This is a heuristic: it voids the lower-bound guarantees, so the
/// first `warmup` iterations are left untouched to let the certified bound
/// mature before any label is forced.
#[derive(Clone, Debug, PartialEq)]
pub struct WtaPlan {
    pub warmup: usize,
    pub stall: usize,
    pub rho0: f64,
    pub shrink: f64,
    pub floor: f64,
}

impl Default for WtaPlan {
    fn default() -> Self {
        WtaPlan { warmup: 0, stall: 10, rho0: 0.5, shrink: 0.5, floor: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRules {
    pub max_iters: usize,
    /// Sup-norm residual below which the run counts as converged (constant
    /// cooperation strength only). 0 disables the check.
    pub eps: f64,
    /// Stop once consensus has persisted this many consecutive iterations
    /// with an unchanged candidate. 0 disables the check.
    pub consensus_window: usize,
}

impl Default for StopRules {
    fn default() -> Self {
        StopRules { max_iters: 1000, eps: 1e-8, consensus_window: 30 }
    }
}

/// Ties in every argmin are broken the same way throughout the solver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub schedule: LambdaSchedule,
    pub prune: PruneMode,
    pub wta: Option<WtaPlan>,
    pub stop: StopRules,
    pub tie_break: TieBreak,
    /// Permit nonzero initial tables even when the first cooperation
    /// strength is positive. Bounds and certificates are then reported as
    /// uncertified.
    pub allow_nonzero_init: bool,
    /// External upper bound on the optimal energy (e.g. from an oracle or a
    /// previous run). The solver uses the tighter of this and the best
    /// candidate energy seen. Must be >= the true optimum to keep pruning
    /// sound.
    pub upper_bound_hint: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_schedule() {
        let s = LambdaSchedule::Constant(0.9);
        assert_eq!(s.at(1), 0.9);
        assert_eq!(s.at(1000), 0.9);
        assert!(s.validate().is_ok());
        assert!(LambdaSchedule::Constant(1.0).validate().is_err());
        assert!(LambdaSchedule::Constant(-0.1).validate().is_err());
    }

    #[test]
    fn ramp_schedule_clamps() {
        let s = LambdaSchedule::default_ramp();
        assert_eq!(s.at(1), 0.5);
        assert_eq!(s.at(2), 0.51);
        assert_eq!(s.at(50), 0.99);
        assert_eq!(s.at(5000), 0.99);
        assert!(s.validate().is_ok());
        let bad = LambdaSchedule::Ramp { start: 0.5, end: 0.9, step: 0.0 };
        assert!(matches!(bad.validate(), Err(SolverError::InvalidRampStep { .. })));
    }

    #[test]
    fn explicit_schedule_repeats_last() {
        let s = LambdaSchedule::Explicit(vec![0.0, 0.5, 0.8]);
        assert_eq!(s.at(1), 0.0);
        assert_eq!(s.at(3), 0.8);
        assert_eq!(s.at(10), 0.8);
        assert!(s.validate().is_ok());
        assert!(LambdaSchedule::Explicit(vec![]).validate().is_err());
        assert!(LambdaSchedule::Explicit(vec![0.5, 1.0]).validate().is_err());
    }
}
