//! Runs several methods on one problem under a common budget and collects
//! the results into a table.

use std::fmt;
use std::time::{Duration, Instant};

use crate::baselines::{
    icm_until, icm_with_sweep_budget, simulated_annealing, simulated_annealing_until,
    AnnealConfig,
};
use crate::model::{Assignment, Problem};
use crate::propagation::{PropagationError, PropagationMatrix};
use crate::solver::{run, RunConfig, RunReport, StopReason};

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropagationChoice {
    /// Every column spreads mass evenly over all variables.
    Uniform,
    /// Metropolis weights on the constraint graph; needs a connected graph.
    Neighbor,
}

impl PropagationChoice {
    pub fn build(self, problem: &Problem) -> Result<PropagationMatrix, PropagationError> {
        match self {
            PropagationChoice::Uniform => {
                PropagationMatrix::make_uniform(problem.num_variables())
            }
            PropagationChoice::Neighbor => PropagationMatrix::make_neighbor(problem),
        }
    }
}

#[derive(Clone, Debug)]
pub enum MethodSpec {
    /// Cooperative dynamics; a sweep budget caps the iteration count.
    Cooperative { config: RunConfig, propagation: PropagationChoice },
    /// Metropolis annealing; a sweep budget caps total sweeps.
    Annealing(AnnealConfig),
    /// Restarted coordinate descent; a sweep budget caps total sweeps
    /// across restarts.
    Icm { seed: u64 },
}

impl MethodSpec {
    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::Cooperative { .. } => "cooperative",
            MethodSpec::Annealing(_) => "annealing",
            MethodSpec::Icm { .. } => "icm",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum BudgetMode {
    /// Every method gets the same sweep / iteration count.
    EqualSweeps(usize),
    /// Every method gets the same wall-clock allowance.
    EqualWallClock(Duration),
}

#[derive(Clone, Debug)]
pub struct MethodOutcome {
    pub assignment: Assignment,
    /// Always re-evaluated through [`Problem::energy`] on `assignment`.
    pub energy: f64,
    /// Iterations for the cooperative method, sweeps for the others.
    pub iterations: usize,
    pub wall: Duration,
    /// Best certified lower bound; cooperative method only.
    pub lower_bound: Option<f64>,
    pub certificate: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MethodRow {
    pub method: String,
    /// A method failure is recorded here; it does not abort the run.
    pub outcome: Result<MethodOutcome, String>,
}

#[derive(Clone, Debug)]
pub struct ComparisonTable {
    pub rows: Vec<MethodRow>,
}

impl ComparisonTable {
    /// The best finished row, by energy.
    pub fn best(&self) -> Option<&MethodRow> {
        self.rows
            .iter()
            .filter(|r| r.outcome.is_ok())
            .min_by(|a, b| {
                let ea = a.outcome.as_ref().unwrap().energy;
                let eb = b.outcome.as_ref().unwrap().energy;
                ea.partial_cmp(&eb).unwrap()
            })
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>14} {:>8} {:>10} {:>14} {:>12}",
            "method", "energy", "iters", "wall_ms", "lower_bound", "certificate"
        )?;
        for row in &self.rows {
            match &row.outcome {
                Ok(o) => writeln!(
                    f,
                    "{:<12} {:>14.4} {:>8} {:>10.1} {:>14} {:>12}",
                    row.method,
                    o.energy,
                    o.iterations,
                    o.wall.as_secs_f64() * 1e3,
                    o.lower_bound.map_or_else(|| "-".into(), |b| format!("{b:.4}")),
                    o.certificate.map_or_else(|| "-".into(), |g| format!("{g:.3e}")),
                )?,
                Err(msg) => writeln!(f, "{:<12} error: {}", row.method, msg)?,
            }
        }
        Ok(())
    }
}

/// Runs every method on `problem` under `budget`. Per-method failures are
/// captured in their row; only an empty method list is an error.
pub fn compare_run(
    problem: &Problem,
    methods: &[MethodSpec],
    budget: BudgetMode,
) -> Result<ComparisonTable, HarnessError> {
    if methods.is_empty() {
        return Err(HarnessError::NoMethods);
    }
    let rows = methods
        .iter()
        .map(|m| MethodRow {
            method: m.label().to_string(),
            outcome: run_method(problem, m, budget),
        })
        .collect();
    Ok(ComparisonTable { rows })
}

fn run_method(
    problem: &Problem,
    method: &MethodSpec,
    budget: BudgetMode,
) -> Result<MethodOutcome, String> {
    let begin = Instant::now();
    let (assignment, iterations, lower_bound, certificate) = match method {
        MethodSpec::Cooperative { config, propagation } => {
            let report = match budget {
                BudgetMode::EqualSweeps(b) => {
                    let w = propagation.build(problem).map_err(|e| e.to_string())?;
                    let mut cfg = config.clone();
                    cfg.stop.max_iters = b;
                    run(problem, w, &cfg).map_err(|e| e.to_string())?
                }
                BudgetMode::EqualWallClock(allowance) => {
                    cooperative_within(problem, config, *propagation, allowance)?
                }
            };
            (
                report.assignment,
                report.iterations,
                report.best_certified_bound,
                report.certificate,
            )
        }
        MethodSpec::Annealing(config) => {
            let report = match budget {
                BudgetMode::EqualSweeps(b) => {
                    let cfg = AnnealConfig { budget_sweeps: b, ..config.clone() };
                    simulated_annealing(problem, &cfg).map_err(|e| e.to_string())?
                }
                BudgetMode::EqualWallClock(allowance) => {
                    let cfg = AnnealConfig { budget_sweeps: usize::MAX, ..config.clone() };
                    simulated_annealing_until(problem, &cfg, begin + allowance)
                        .map_err(|e| e.to_string())?
                }
            };
            (report.assignment, report.sweeps, None, None)
        }
        MethodSpec::Icm { seed } => {
            let report = match budget {
                BudgetMode::EqualSweeps(b) => {
                    icm_with_sweep_budget(problem, b, *seed).map_err(|e| e.to_string())?
                }
                BudgetMode::EqualWallClock(allowance) => {
                    icm_until(problem, begin + allowance, *seed).map_err(|e| e.to_string())?
                }
            };
            (report.assignment, report.sweeps, None, None)
        }
    };
    let wall = begin.elapsed();
    let energy = problem.energy(&assignment).map_err(|e| e.to_string())?;
    Ok(MethodOutcome { assignment, energy, iterations, wall, lower_bound, certificate })
}

/// Equal-wall-clock entry for the deterministic cooperative dynamics:
/// rerun from scratch with a doubling iteration cap until the allowance is
/// spent or the run stops on its own. The kept result is the longest run
/// that fit, which may overshoot the allowance by at most one doubling.
fn cooperative_within(
    problem: &Problem,
    config: &RunConfig,
    propagation: PropagationChoice,
    allowance: Duration,
) -> Result<RunReport, String> {
    let start = Instant::now();
    let mut iters = 16usize;
    let run_once = |iters: usize| -> Result<RunReport, String> {
        let w = propagation.build(problem).map_err(|e| e.to_string())?;
        let mut cfg = config.clone();
        cfg.stop.max_iters = iters;
        run(problem, w, &cfg).map_err(|e| e.to_string())
    };
    let mut report = run_once(iters)?;
    while start.elapsed() < allowance && report.stop_reason == StopReason::MaxIterations {
        iters = iters.saturating_mul(2);
        report = run_once(iters)?;
    }
    Ok(report)
}
