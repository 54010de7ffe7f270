//! Reference minimizers used for comparison: Metropolis annealing over
//! labels and iterated-conditional-modes descent with random restarts.
//!
//! Both report only energies realized by actual assignments; a reported
//! energy always re-evaluates exactly through [`Problem::energy`].

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Assignment, ModelError, Problem};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("initial temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("cooling ratio must lie strictly between 0 and 1, got {0}")]
    InvalidCooling(f64),
    #[error("sweeps per temperature must be at least 1")]
    EmptyStage,
    #[error("sweep budget must be at least 1")]
    EmptyBudget,
    #[error("restart count must be at least 1")]
    NoRestarts,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug)]
pub struct AnnealConfig {
    /// Starting temperature. `None` picks the largest pairwise cost in the
    /// problem, falling back to the largest unary cost, then 1.0.
    pub t0: Option<f64>,
    /// Geometric cooling ratio, strictly between 0 and 1.
    pub cooling: f64,
    pub sweeps_per_temperature: usize,
    /// Total sweeps over all temperature stages.
    pub budget_sweeps: usize,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            t0: None,
            cooling: 0.98,
            sweeps_per_temperature: 1,
            budget_sweeps: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AnnealReport {
    /// Best assignment seen anywhere in the run, not the final state.
    pub assignment: Assignment,
    pub energy: f64,
    pub final_state: Assignment,
    pub final_energy: f64,
    pub sweeps: usize,
    /// Best-seen energy after each completed sweep.
    pub trace: Vec<f64>,
}

pub fn simulated_annealing(
    problem: &Problem,
    config: &AnnealConfig,
) -> Result<AnnealReport, BaselineError> {
    anneal(problem, config, None)
}

/// Wall-clock variant: stops at the first sweep boundary past `deadline`.
pub fn simulated_annealing_until(
    problem: &Problem,
    config: &AnnealConfig,
    deadline: Instant,
) -> Result<AnnealReport, BaselineError> {
    anneal(problem, config, Some(deadline))
}

fn anneal(
    problem: &Problem,
    config: &AnnealConfig,
    deadline: Option<Instant>,
) -> Result<AnnealReport, BaselineError> {
    let t0 = match config.t0 {
        Some(t) if t.is_finite() && t > 0.0 => t,
        Some(t) => return Err(BaselineError::InvalidTemperature(t)),
        None => default_t0(problem),
    };
    if !(config.cooling > 0.0 && config.cooling < 1.0) {
        return Err(BaselineError::InvalidCooling(config.cooling));
    }
    if config.sweeps_per_temperature == 0 {
        return Err(BaselineError::EmptyStage);
    }
    if config.budget_sweeps == 0 {
        return Err(BaselineError::EmptyBudget);
    }

    let n = problem.num_variables();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x: Vec<usize> = (0..n)
        .map(|i| rng.gen_range(0..problem.domain_size(i)))
        .collect();
    let mut energy = problem.energy_unchecked(&x);
    let mut best = x.clone();
    let mut best_energy = energy;
    let mut t = t0;
    let mut trace = Vec::with_capacity(config.budget_sweeps.min(1 << 20));
    let mut sweeps = 0usize;

    'run: loop {
        for _ in 0..config.sweeps_per_temperature {
            if sweeps == config.budget_sweeps
                || deadline.is_some_and(|d| Instant::now() >= d)
            {
                break 'run;
            }
            // Proposals scan the label ring deterministically: variable i at
            // sweep s proposes (s + i) mod m_i, so every label of every
            // variable is offered once per m_i consecutive sweeps. Chance
            // stays in the start state and the uphill acceptances.
            for i in 0..n {
                let cur = x[i];
                let proposal = (sweeps + i) % problem.domain_size(i);
                if proposal == cur {
                    continue;
                }
                let delta = problem.energy_delta(&x, i, cur, proposal);
                if delta <= 0.0 || rng.gen::<f64>() < (-delta / t).exp() {
                    x[i] = proposal;
                    energy += delta;
                    if energy < best_energy {
                        let exact = problem.energy_unchecked(&x);
                        if exact < best_energy {
                            best_energy = exact;
                            best.copy_from_slice(&x);
                        }
                        energy = exact;
                    }
                }
            }
            // shed accumulated floating-point drift once per sweep
            energy = problem.energy_unchecked(&x);
            if energy < best_energy {
                best_energy = energy;
                best.copy_from_slice(&x);
            }
            sweeps += 1;
            trace.push(best_energy);
        }
        t *= config.cooling;
    }

    Ok(AnnealReport {
        assignment: Assignment(best),
        energy: best_energy,
        final_state: Assignment(x),
        final_energy: energy,
        sweeps,
        trace,
    })
}

fn default_t0(problem: &Problem) -> f64 {
    let mut t = 0.0f64;
    for c in problem.constraints() {
        for &v in c.table() {
            t = t.max(v);
        }
    }
    if t <= 0.0 {
        for i in 0..problem.num_variables() {
            for l in 0..problem.domain_size(i) {
                t = t.max(problem.unary_cost(i, l));
            }
        }
    }
    if t <= 0.0 {
        1.0
    } else {
        t
    }
}

#[derive(Clone, Debug)]
pub struct IcmReport {
    pub assignment: Assignment,
    pub energy: f64,
    pub restarts: usize,
    /// Total full sweeps spent across all restarts.
    pub sweeps: usize,
    /// Energy reached by each restart, in order.
    pub per_restart: Vec<f64>,
}

/// Coordinate descent from `start`: sweep variables in index order, moving
/// each to the lowest-index label minimizing the conditional energy, until
/// a full sweep changes nothing.
///
/// Plateau moves only ever go to a strictly lower label index, so every
/// sweep either lowers the energy or lowers the label-index sum at equal
/// energy; the descent terminates.
pub fn icm_descent(
    problem: &Problem,
    start: Assignment,
) -> Result<(Assignment, f64, usize), BaselineError> {
    problem.validate_assignment(&start)?;
    let mut x = start.0;
    let mut sweeps = 0usize;
    while icm_sweep(problem, &mut x) {
        sweeps += 1;
    }
    sweeps += 1;
    let e = problem.energy_unchecked(&x);
    Ok((Assignment(x), e, sweeps))
}

fn icm_sweep(problem: &Problem, x: &mut [usize]) -> bool {
    let mut changed = false;
    for i in 0..x.len() {
        let cur = x[i];
        let mut best_label = cur;
        let mut best_delta = 0.0;
        for l in 0..problem.domain_size(i) {
            if l == cur {
                continue;
            }
            let d = problem.energy_delta(x, i, cur, l);
            if d < best_delta || (d == best_delta && l < best_label) {
                best_delta = d;
                best_label = l;
            }
        }
        if best_label != cur {
            x[i] = best_label;
            changed = true;
        }
    }
    changed
}

/// Runs `restarts` independent descents from seeded random starts and keeps
/// the best result. The start stream depends only on `seed`, so a larger
/// restart count extends the same sequence and the best energy is
/// non-increasing in `restarts`.
pub fn icm_multi_restart(
    problem: &Problem,
    restarts: usize,
    seed: u64,
) -> Result<IcmReport, BaselineError> {
    if restarts == 0 {
        return Err(BaselineError::NoRestarts);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Assignment, f64)> = None;
    let mut per_restart = Vec::with_capacity(restarts);
    let mut sweeps = 0usize;
    for _ in 0..restarts {
        let start = random_assignment(problem, &mut rng);
        let (x, e, s) = icm_descent(problem, start)?;
        sweeps += s;
        per_restart.push(e);
        if best.as_ref().is_none_or(|(_, be)| e < *be) {
            best = Some((x, e));
        }
    }
    let (assignment, energy) = best.expect("restarts >= 1");
    Ok(IcmReport { assignment, energy, restarts, sweeps, per_restart })
}

/// Restart loop capped by a total sweep budget; a descent cut short by the
/// budget still contributes its current state.
pub fn icm_with_sweep_budget(
    problem: &Problem,
    budget_sweeps: usize,
    seed: u64,
) -> Result<IcmReport, BaselineError> {
    if budget_sweeps == 0 {
        return Err(BaselineError::EmptyBudget);
    }
    icm_budgeted(problem, seed, budget_sweeps, None)
}

/// Restart loop bounded by wall clock instead of sweeps; always completes
/// at least one restart.
pub fn icm_until(
    problem: &Problem,
    deadline: Instant,
    seed: u64,
) -> Result<IcmReport, BaselineError> {
    icm_budgeted(problem, seed, usize::MAX, Some(deadline))
}

fn icm_budgeted(
    problem: &Problem,
    seed: u64,
    budget_sweeps: usize,
    deadline: Option<Instant>,
) -> Result<IcmReport, BaselineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Assignment, f64)> = None;
    let mut per_restart = Vec::new();
    let mut sweeps = 0usize;
    let mut restarts = 0usize;
    loop {
        let start = random_assignment(problem, &mut rng);
        let mut x = start.0;
        while sweeps < budget_sweeps {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            let changed = icm_sweep(problem, &mut x);
            sweeps += 1;
            if !changed {
                break;
            }
        }
        let e = problem.energy_unchecked(&x);
        restarts += 1;
        per_restart.push(e);
        if best.as_ref().is_none_or(|(_, be)| e < *be) {
            best = Some((Assignment(x), e));
        }
        if sweeps >= budget_sweeps || deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
    }
    let (assignment, energy) = best.expect("at least one restart runs");
    Ok(IcmReport { assignment, energy, restarts, sweeps, per_restart })
}

fn random_assignment(problem: &Problem, rng: &mut ChaCha8Rng) -> Assignment {
    Assignment(
        (0..problem.num_variables())
            .map(|i| rng.gen_range(0..problem.domain_size(i)))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2() -> Problem {
        Problem::new(
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            vec![((0, 1), vec![0.0, 2.0, 2.0, 0.0])],
        )
        .unwrap()
    }

    #[test]
    fn tiny_temperature_behaves_as_greedy_descent() {
        let p = Problem::new(
            vec![vec![0, 1, 2], vec![0, 1, 2], vec![0, 1, 2]],
            vec![vec![4.0, 1.0, 6.0], vec![2.0, 5.0, 3.0], vec![9.0, 0.0, 7.0]],
            vec![
                ((0, 1), vec![0.0, 3.0, 1.0, 2.0, 0.0, 4.0, 5.0, 1.0, 0.0]),
                ((1, 2), vec![0.0, 2.0, 2.0, 2.0, 0.0, 2.0, 2.0, 2.0, 0.0]),
            ],
        )
        .unwrap();
        let cfg = AnnealConfig {
            t0: Some(1e-12),
            budget_sweeps: 60,
            ..AnnealConfig::default()
        };
        let report = simulated_annealing(&p, &cfg).unwrap();
        // no uphill move is ever accepted, so the final state is the best
        assert_eq!(report.final_energy, report.energy);
        for w in report.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn single_variable_reaches_the_unary_minimum_within_domain_size_sweeps() {
        let p = Problem::new(
            vec![vec![0, 1, 2, 3, 4]],
            vec![vec![7.0, 3.0, 9.0, 1.0, 4.0]],
            vec![],
        )
        .unwrap();
        for seed in 0..6 {
            let cfg = AnnealConfig { budget_sweeps: 5, seed, ..AnnealConfig::default() };
            let report = simulated_annealing(&p, &cfg).unwrap();
            assert_eq!(report.energy, 1.0, "seed {seed}");
            assert_eq!(report.assignment, Assignment(vec![3]));
        }
    }

    #[test]
    fn p2_reaches_the_optimum_for_every_seed() {
        let p = p2();
        for seed in 0..10 {
            let cfg = AnnealConfig { budget_sweeps: 100, seed, ..AnnealConfig::default() };
            let report = simulated_annealing(&p, &cfg).unwrap();
            assert_eq!(report.energy, 1.0, "seed {seed}");
            assert_eq!(p.energy(&report.assignment).unwrap(), report.energy);
        }
    }

    #[test]
    fn annealing_is_deterministic_given_the_seed() {
        let p = p2();
        let cfg = AnnealConfig { budget_sweeps: 40, seed: 17, ..AnnealConfig::default() };
        let a = simulated_annealing(&p, &cfg).unwrap();
        let b = simulated_annealing(&p, &cfg).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.energy, b.energy);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn default_temperature_prefers_the_largest_pairwise_cost() {
        assert_eq!(default_t0(&p2()), 2.0);
        let unary_only =
            Problem::new(vec![vec![0, 1]], vec![vec![3.0, 8.0]], vec![]).unwrap();
        assert_eq!(default_t0(&unary_only), 8.0);
        let all_zero = Problem::new(vec![vec![0]], vec![vec![0.0]], vec![]).unwrap();
        assert_eq!(default_t0(&all_zero), 1.0);
    }

    #[test]
    fn invalid_annealing_configs_are_rejected() {
        let p = p2();
        for cfg in [
            AnnealConfig { t0: Some(0.0), ..AnnealConfig::default() },
            AnnealConfig { t0: Some(-3.0), ..AnnealConfig::default() },
            AnnealConfig { t0: Some(f64::NAN), ..AnnealConfig::default() },
            AnnealConfig { cooling: 0.0, ..AnnealConfig::default() },
            AnnealConfig { cooling: 1.0, ..AnnealConfig::default() },
            AnnealConfig { sweeps_per_temperature: 0, ..AnnealConfig::default() },
            AnnealConfig { budget_sweeps: 0, ..AnnealConfig::default() },
        ] {
            assert!(simulated_annealing(&p, &cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn icm_keeps_p2_at_the_optimum() {
        let p = p2();
        let (x, e, sweeps) = icm_descent(&p, Assignment(vec![0, 0])).unwrap();
        assert_eq!(x, Assignment(vec![0, 0]));
        assert_eq!(e, 1.0);
        assert_eq!(sweeps, 1);
    }

    #[test]
    fn icm_descent_reaches_a_one_local_optimum() {
        let p = p2();
        for start in [vec![0, 1], vec![1, 0], vec![1, 1]] {
            let (x, e, _) = icm_descent(&p, Assignment(start)).unwrap();
            assert_eq!(p.energy(&x).unwrap(), e);
            for i in 0..2 {
                for l in 0..2 {
                    if l != x.0[i] {
                        assert!(p.energy_delta(&x.0, i, x.0[i], l) >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn icm_plateau_moves_drift_to_lowest_indexes_and_stop() {
        let p = Problem::new(
            vec![vec![0, 1, 2], vec![0, 1, 2]],
            vec![vec![0.0; 3], vec![0.0; 3]],
            vec![((0, 1), vec![0.0; 9])],
        )
        .unwrap();
        let (x, e, sweeps) = icm_descent(&p, Assignment(vec![2, 1])).unwrap();
        assert_eq!(x, Assignment(vec![0, 0]));
        assert_eq!(e, 0.0);
        assert_eq!(sweeps, 2);
    }

    #[test]
    fn icm_best_energy_is_non_increasing_in_restart_count() {
        let p = p2();
        let mut prev = f64::INFINITY;
        for restarts in 1..=6 {
            let report = icm_multi_restart(&p, restarts, 5).unwrap();
            assert!(report.energy <= prev);
            assert_eq!(report.per_restart.len(), restarts);
            prev = report.energy;
        }
    }

    #[test]
    fn icm_rejects_zero_restarts_and_zero_budgets() {
        let p = p2();
        assert!(matches!(
            icm_multi_restart(&p, 0, 0),
            Err(BaselineError::NoRestarts)
        ));
        assert!(matches!(
            icm_with_sweep_budget(&p, 0, 0),
            Err(BaselineError::EmptyBudget)
        ));
    }

    #[test]
    fn budgeted_icm_respects_the_sweep_cap() {
        let p = p2();
        let report = icm_with_sweep_budget(&p, 3, 2).unwrap();
        assert!(report.sweeps <= 3);
        assert!(report.restarts >= 1);
        assert_eq!(p.energy(&report.assignment).unwrap(), report.energy);
    }

    #[test]
    fn icm_is_deterministic_given_the_seed() {
        let p = p2();
        let a = icm_multi_restart(&p, 4, 9).unwrap();
        let b = icm_multi_restart(&p, 4, 9).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.per_restart, b.per_restart);
    }
}
