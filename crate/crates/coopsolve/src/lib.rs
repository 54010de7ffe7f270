//! Cooperative minimization of pairwise constraint energies.
//!
//! A problem is a set of variables over finite label domains with
//! nonnegative unary and directed pairwise cost tables. The solver runs a
//! team of per-variable sub-objectives that repeatedly compromise through a
//! column-stochastic weight matrix, yielding monotone lower bounds on the
//! optimum, an optimality certificate when a stable consensus forms, and
//! sound label pruning. Simulated annealing and iterated conditional modes
//! are included as reference points, plus a small stereo-matching demo that
//! exercises the whole pipeline on grid problems.

pub mod baselines;
pub mod harness;
pub mod model;
pub mod propagation;
pub mod solver;

pub use model::{
    brute_force_solve, decompose, load_problem, save_problem, Assignment, BruteForceResult,
    Decomposition, ModelError, PairwiseConstraint, Problem,
};
pub use propagation::PropagationMatrix;
pub use solver::{run, RunConfig, RunReport, SolverState};
