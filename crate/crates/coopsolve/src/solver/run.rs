//! The full solve loop: iterate, track bounds and candidates, detect
//! consensus, certify, prune, tighten, stop.

use std::fmt;

use serde::Serialize;

use crate::model::{Assignment, Problem};
use crate::propagation::{alpha2_step, PropagationMatrix};

use super::analysis::gap_certificate;
use super::prune::PruneReport;
use super::{PruneMode, RunConfig, SolverError, SolverState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Every variable is down to one active label.
    AllSingleton,
    /// No pairwise constraints: the first step already minimizes every
    /// sub-objective exactly.
    Decoupled,
    /// Consensus persisted with an unchanged candidate for the configured
    /// window.
    ConsensusPersisted,
    /// Sup-norm residual fell below the tolerance under a locally constant
    /// cooperation strength.
    Converged,
    MaxIterations,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::AllSingleton => "all domains reduced to a single label",
            StopReason::Decoupled => "no pairwise constraints, sub-problems separable",
            StopReason::ConsensusPersisted => "consensus persisted for the configured window",
            StopReason::Converged => "residual below tolerance at constant strength",
            StopReason::MaxIterations => "iteration limit reached",
        })
    }
}

/// Per-iteration diagnostics collected by [`run`].
#[derive(Clone, Debug)]
pub struct IterationReport {
    pub k: usize,
    pub lower_bound: f64,
    pub bound_certified: bool,
    pub candidate: Assignment,
    pub candidate_energy: f64,
    pub consensus: bool,
    /// Number of directed pairs whose sub-problem preference disagreed
    /// with the candidate.
    pub disagreements: usize,
    /// Gap certificate of the active consensus window, when one exists and
    /// the bound guarantees hold.
    pub certificate: Option<f64>,
    /// Sup-norm change against the previous snapshot.
    pub residual: f64,
    pub active_counts: Vec<usize>,
}

/// Stable line format for `--trace` output: one JSON object per iteration.
/// Field names are part of the tool's interface; see README.md.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    pub lower_bound: f64,
    pub bound_certified: bool,
    pub candidate_energy: f64,
    pub consensus: bool,
    pub residual: f64,
    pub certificate: Option<f64>,
    pub active_counts: Vec<usize>,
}

impl From<&IterationReport> for TraceRecord {
    fn from(r: &IterationReport) -> Self {
        TraceRecord {
            k: r.k,
            lower_bound: r.lower_bound,
            bound_certified: r.bound_certified,
            candidate_energy: r.candidate_energy,
            consensus: r.consensus,
            residual: r.residual,
            certificate: r.certificate,
            active_counts: r.active_counts.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    /// Best assignment seen over the whole run, by exact energy.
    pub assignment: Assignment,
    pub energy: f64,
    /// Candidate at the final iteration; the certificate, when present,
    /// bounds this candidate's gap (and therefore also the best one's).
    pub final_candidate: Assignment,
    pub final_energy: f64,
    /// Greatest lower bound recorded while the bound guarantees held.
    pub best_certified_bound: Option<f64>,
    /// Lower-bound value after the last iteration, certified or not.
    pub final_bound: f64,
    pub bound_certified: bool,
    pub certificate: Option<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub trace: Vec<IterationReport>,
    pub warnings: Vec<String>,
}

struct Window {
    start: usize,
    candidate: Assignment,
    prior_bound: f64,
}

/// Solves a problem with the cooperative dynamics under `config`.
///
/// Stops when (a) every domain is a singleton, (b) the residual falls below
/// `eps` at a locally constant strength with no recent mask change, (c)
/// consensus persisted for the configured window, or (d) the iteration
/// limit is hit. With `max_iters == 0` the initial candidate (all-tie,
/// lowest indexes) is returned untouched.
pub fn run(
    problem: &Problem,
    w: PropagationMatrix,
    config: &RunConfig,
) -> Result<RunReport, SolverError> {
    let mut warnings: Vec<String> = Vec::new();
    let symmetric = w.is_symmetric();
    if !symmetric && config.stop.eps > 0.0 {
        warn_once(
            &mut warnings,
            "convergence-based stopping assumes a symmetric propagation matrix; \
             the residual test may stop without a uniqueness guarantee"
                .into(),
        );
    }
    let spectral_wanted = matches!(config.prune, PruneMode::Spectral | PruneMode::Both);
    if spectral_wanted && !symmetric {
        warn_once(
            &mut warnings,
            "spectral pruning skipped: propagation matrix is not symmetric".into(),
        );
    }

    let mut state = SolverState::new(problem, w, config)?;
    let alpha2 = if spectral_wanted && symmetric {
        Some(state.propagation().alpha2()?)
    } else {
        None
    };

    let mut best = state.candidate();
    let mut best_energy = problem.energy(&best)?;
    let mut best_certified_bound =
        state.bound_certified().then(|| state.initial_bound());

    if config.stop.max_iters == 0 {
        return Ok(RunReport {
            assignment: best.clone(),
            energy: best_energy,
            final_candidate: best,
            final_energy: best_energy,
            best_certified_bound,
            final_bound: state.initial_bound(),
            bound_certified: state.bound_certified(),
            certificate: None,
            iterations: 0,
            stop_reason: StopReason::MaxIterations,
            trace: Vec::new(),
            warnings,
        });
    }

    let mut trace: Vec<IterationReport> = Vec::new();
    let mut window: Option<Window> = None;
    let mut stop = StopReason::MaxIterations;
    let mut alpha2_k = 1.0;
    let mut wta_rho = config.wta.as_ref().map_or(0.0, |p| p.rho0);
    let mut wta_stall = 0usize;
    let mut last_mask_change = 0usize;
    let mut prune_skip_warned = false;

    for k in 1..=config.stop.max_iters {
        state.update_step(problem)?;
        let lambda_k = state.lambda_history()[k - 1];
        if let Some(a2) = alpha2 {
            alpha2_k = alpha2_step(a2, lambda_k, alpha2_k);
        }

        let bound = state.lower_bound();
        let cand = state.candidate();
        let cand_energy = problem.energy(&cand)?;
        if cand_energy < best_energy {
            best_energy = cand_energy;
            best = cand.clone();
        }
        if state.bound_certified() {
            best_certified_bound =
                Some(best_certified_bound.map_or(bound, |b: f64| b.max(bound)));
        }
        let (consensus, disagreements) = state.consensus_check(problem)?;
        let residual = state.last_residual().expect("state was just updated");

        if consensus {
            let extends = window.as_ref().is_some_and(|wd| wd.candidate == cand);
            if !extends {
                let prior_bound = if k == 1 {
                    state.initial_bound()
                } else {
                    state.bound_history()[k - 2]
                };
                window = Some(Window { start: k, candidate: cand.clone(), prior_bound });
            }
        } else {
            window = None;
        }
        let certificate = match &window {
            Some(wd) if state.bound_certified() => Some(gap_certificate(
                cand_energy,
                wd.prior_bound,
                &state.lambda_history()[wd.start - 1..k],
            )?),
            _ => None,
        };

        let active_counts = state.active_counts();
        trace.push(IterationReport {
            k,
            lower_bound: bound,
            bound_certified: state.bound_certified(),
            candidate: cand,
            candidate_energy: cand_energy,
            consensus,
            disagreements: disagreements.len(),
            certificate,
            residual,
            active_counts: active_counts.clone(),
        });

        if problem.constraints().is_empty() {
            stop = StopReason::Decoupled;
            break;
        }
        if active_counts.iter().all(|&c| c == 1) {
            stop = StopReason::AllSingleton;
            break;
        }
        if config.stop.consensus_window > 0 {
            if let Some(wd) = &window {
                if k + 1 - wd.start >= config.stop.consensus_window {
                    stop = StopReason::ConsensusPersisted;
                    break;
                }
            }
        }
        if config.stop.eps > 0.0
            && residual < config.stop.eps
            && config.schedule.at(k) == config.schedule.at(k + 1)
            && k >= last_mask_change + 2
        {
            stop = StopReason::Converged;
            break;
        }
        if k == config.stop.max_iters {
            break;
        }

        if config.prune != PruneMode::Off {
            if !state.bound_certified() {
                if !prune_skip_warned {
                    warn_once(
                        &mut warnings,
                        "pruning skipped: lower bounds are not certified for this run".into(),
                    );
                    prune_skip_warned = true;
                }
            } else {
                let e_hat = config
                    .upper_bound_hint
                    .map_or(best_energy, |h| h.min(best_energy));
                let mut changed = false;
                if matches!(config.prune, PruneMode::Margin | PruneMode::Both) {
                    let r = state.prune_margin(e_hat)?;
                    note_aborts(&mut warnings, "margin", &r);
                    changed |= r.changed();
                }
                if alpha2.is_some() && matches!(config.prune, PruneMode::Spectral | PruneMode::Both)
                {
                    let r = state.prune_spectral(e_hat, alpha2_k)?;
                    note_aborts(&mut warnings, "spectral", &r);
                    changed |= r.changed();
                }
                if changed {
                    last_mask_change = k;
                }
            }
        }

        if let Some(plan) = &config.wta {
            if consensus || k <= plan.warmup {
                wta_stall = 0;
            } else {
                wta_stall += 1;
                if wta_stall >= plan.stall {
                    let dropped = state.winner_take_all_round(wta_rho, plan.floor);
                    wta_rho *= plan.shrink;
                    wta_stall = 0;
                    if !dropped.is_empty() {
                        last_mask_change = k;
                        window = None;
                    }
                }
            }
        }
    }

    let final_candidate = state.candidate();
    let final_energy = problem.energy(&final_candidate)?;
    if final_energy < best_energy {
        best_energy = final_energy;
        best = final_candidate.clone();
    }
    let final_bound = state
        .bound_history()
        .last()
        .copied()
        .unwrap_or(state.initial_bound());
    let certificate = trace.last().and_then(|r| r.certificate);

    Ok(RunReport {
        assignment: best,
        energy: best_energy,
        final_candidate,
        final_energy,
        best_certified_bound,
        final_bound,
        bound_certified: state.bound_certified(),
        certificate,
        iterations: state.k(),
        stop_reason: stop,
        trace,
        warnings,
    })
}

fn warn_once(warnings: &mut Vec<String>, msg: String) {
    const CAP: usize = 64;
    if warnings.len() >= CAP || warnings.contains(&msg) {
        return;
    }
    warnings.push(msg);
}

fn note_aborts(warnings: &mut Vec<String>, rule: &str, report: &PruneReport) {
    for &var in &report.aborted {
        warn_once(
            warnings,
            format!(
                "{rule} pruning would have emptied variable {var}; left untouched \
                 (the upper bound may undercut the optimum)"
            ),
        );
    }
}
