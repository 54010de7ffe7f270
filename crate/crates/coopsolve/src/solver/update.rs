//! The synchronous difference-equation step.

use rayon::prelude::*;

use crate::model::Problem;

use super::state::{SolverState, UpdateRecord};
use super::SolverError;

/// Below this many variables the parallel split costs more than it saves.
const PARALLEL_THRESHOLD: usize = 64;

/// One coupling term of a stored constraint. Consensus checking recomputes
/// this expression and compares it bit-for-bit against the recorded minimum,
/// so both call sites must go through this function with identically derived
/// arguments.
#[inline(always)]
pub(super) fn pair_term(one_minus_lambda: f64, pair_cost: f64, lambda_weight: f64, prev_cj: f64) -> f64 {
    one_minus_lambda * pair_cost + lambda_weight * prev_cj
}

impl SolverState {
    /// Advances every variable's table by one step, reading only the
    /// previous snapshot:
    ///
    /// c'_i(x_i) = (1-l) C_i(x_i) + l w_ii c_i(x_i) + absent + sum over
    /// stored (i,j) of min over active x_j of [(1-l) C_ij(x_i,x_j) +
    /// l w_ij c_j(x_j)], where `absent` collects l w_ij min_active(c_j) for
    /// every j that has no stored (i,j) but positive weight.
    ///
    /// Deactivated labels are skipped in every minimization and keep the
    /// +inf sentinel. The result is a pure function of the snapshot, so the
    /// per-variable evaluation order (including the parallel split) cannot
    /// change the output bits.
    pub fn update_step(&mut self, problem: &Problem) -> Result<(), SolverError> {
        let n = problem.num_variables();
        let lambda = self.schedule.at(self.k + 1);
        debug_assert!((0.0..1.0).contains(&lambda), "schedule validated at init");
        let oml = 1.0 - lambda;

        let mut prev_min = vec![0.0; n];
        for (var, slot) in prev_min.iter_mut().enumerate() {
            let mut best = f64::INFINITY;
            for (&v, &a) in self.c[var].iter().zip(&self.active[var]) {
                if a && v < best {
                    best = v;
                }
            }
            if !best.is_finite() {
                return Err(SolverError::EmptyActiveDomain { var });
            }
            *slot = best;
        }

        let prev = &self.c;
        let active = &self.active;
        let w = &self.w;
        let prev_min_ref = &prev_min;

        let step_one = |i: usize| -> (Vec<f64>, Vec<Vec<f64>>) {
            let row = w.row(i);
            let owned = problem.constraints_of(i);

            // Compromise terms from variables without a stored (i,.) table:
            // constant in x_i, so accumulated once. Fixed j order keeps the
            // sum bit-deterministic.
            let mut absent = 0.0;
            if lambda > 0.0 {
                let mut ptr = 0;
                for j in 0..n {
                    while ptr < owned.len() && problem.constraint(owned[ptr]).j < j {
                        ptr += 1;
                    }
                    if j == i || (ptr < owned.len() && problem.constraint(owned[ptr]).j == j) {
                        continue;
                    }
                    let wij = row[j];
                    if wij > 0.0 {
                        absent += lambda * wij * prev_min_ref[j];
                    }
                }
            }

            let mi = prev[i].len();
            let self_weight = lambda * row[i];
            let mut table = vec![f64::INFINITY; mi];
            let mut mins: Vec<Vec<f64>> =
                owned.iter().map(|_| vec![f64::INFINITY; mi]).collect();
            for xi in 0..mi {
                if !active[i][xi] {
                    continue;
                }
                let mut v = oml * problem.unary_cost(i, xi) + self_weight * prev[i][xi] + absent;
                for (slot, &cid) in owned.iter().enumerate() {
                    let con = problem.constraint(cid);
                    let j = con.j;
                    let lw = lambda * row[j];
                    let mut best = f64::INFINITY;
                    for (xj, (&pc, &a)) in prev[j].iter().zip(&active[j]).enumerate() {
                        if !a {
                            continue;
                        }
                        let t = pair_term(oml, con.cost(xi, xj), lw, pc);
                        if t < best {
                            best = t;
                        }
                    }
                    mins[slot][xi] = best;
                    v += best;
                }
                table[xi] = v;
            }
            (table, mins)
        };

        let results: Vec<(Vec<f64>, Vec<Vec<f64>>)> = if n >= PARALLEL_THRESHOLD {
            (0..n).into_par_iter().map(step_one).collect()
        } else {
            (0..n).map(step_one).collect()
        };

        let mut new_c = Vec::with_capacity(n);
        let mut pair_min = vec![Vec::new(); problem.constraints().len()];
        for (i, (table, mins)) in results.into_iter().enumerate() {
            new_c.push(table);
            for (&cid, m) in problem.constraints_of(i).iter().zip(mins) {
                pair_min[cid] = m;
            }
        }

        let prev_c = std::mem::replace(&mut self.c, new_c);
        let prev_active = self.active.clone();
        self.last_update = Some(UpdateRecord {
            lambda,
            prev_c,
            prev_active,
            prev_min,
            pair_min,
        });
        self.k += 1;
        self.lambda_history.push(lambda);
        let bound = self.lower_bound();
        self.bound_history.push(bound);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Assignment, Problem};
    use crate::propagation::PropagationMatrix;
    use crate::solver::{LambdaSchedule, RunConfig, SolverError};

    fn p2() -> Problem {
        Problem::new(
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            vec![((0, 1), vec![0.0, 2.0, 2.0, 0.0])],
        )
        .unwrap()
    }

    fn state(problem: &Problem, lambda: f64) -> SolverState {
        let w = PropagationMatrix::make_uniform(problem.num_variables()).unwrap();
        let cfg = RunConfig {
            schedule: LambdaSchedule::Constant(lambda),
            ..RunConfig::default()
        };
        SolverState::new(problem, w, &cfg).unwrap()
    }

    #[test]
    fn p2_two_steps_exact() {
        let p = p2();
        let mut s = state(&p, 0.5);

        s.update_step(&p).unwrap();
        assert_eq!(s.c_table(0), &[0.5, 0.0]);
        assert_eq!(s.c_table(1), &[0.0, 1.0]);
        assert_eq!(s.lower_bound(), 0.0);
        assert_eq!(s.bound_history(), &[0.0]);

        s.update_step(&p).unwrap();
        assert_eq!(s.c_table(0), &[0.625, 0.25]);
        assert_eq!(s.c_table(1), &[0.0, 1.25]);
        assert_eq!(s.lower_bound(), 0.25);
        assert_eq!(s.bound_history(), &[0.0, 0.25]);
        assert_eq!(s.candidate(), Assignment(vec![1, 0]));
        assert_eq!(p.energy(&s.candidate()).unwrap(), 2.0);
        assert_eq!(s.lambda_history(), &[0.5, 0.5]);
    }

    #[test]
    fn zero_strength_gives_plain_subproblem_minima() {
        let p = p2();
        let mut s = state(&p, 0.0);
        s.update_step(&p).unwrap();
        // sub-objective of var 0 owns the pairwise table, var 1 only C_2
        assert_eq!(s.c_table(0), &[1.0, 0.0]);
        assert_eq!(s.c_table(1), &[0.0, 2.0]);
    }

    #[test]
    fn single_variable_converges_to_unary() {
        let p = Problem::new(vec![vec![0, 1]], vec![vec![5.0, 2.0]], vec![]).unwrap();
        let mut s = state(&p, 0.5);
        // c^(k) = (1-l) C + l c^(k-1): a scalar recursion toward C
        s.update_step(&p).unwrap();
        assert_eq!(s.c_table(0), &[2.5, 1.0]);
        s.update_step(&p).unwrap();
        assert_eq!(s.c_table(0), &[3.75, 1.5]);
        let r2 = s.last_residual().unwrap();
        s.update_step(&p).unwrap();
        let r3 = s.last_residual().unwrap();
        // contraction factor is exactly the cooperation strength
        assert_eq!(r3 / r2, 0.5);
        for _ in 0..60 {
            s.update_step(&p).unwrap();
        }
        assert!((s.c_table(0)[0] - 5.0).abs() < 1e-12);
        assert!((s.c_table(0)[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn emptied_domain_is_an_error() {
        let p = p2();
        let mut s = state(&p, 0.5);
        s.deactivate_all_for_test(1);
        assert!(matches!(
            s.update_step(&p),
            Err(SolverError::EmptyActiveDomain { var: 1 })
        ));
    }

    #[test]
    fn steps_are_reproducible_bit_for_bit() {
        let p = Problem::new(
            vec![vec![0, 1, 2], vec![0, 1], vec![0, 1, 2, 3]],
            vec![vec![0.3, 1.7, 0.9], vec![2.1, 0.4], vec![0.0, 3.3, 1.1, 0.6]],
            vec![
                ((0, 1), vec![0.5, 1.5, 0.0, 2.5, 1.0, 0.25]),
                ((2, 0), vec![1.0; 12]),
                ((1, 2), vec![0.7, 0.0, 0.2, 0.9, 0.4, 1.3, 0.0, 0.8]),
            ],
        )
        .unwrap();
        let mut a = state(&p, 0.9);
        let mut b = a.clone();
        for _ in 0..25 {
            a.update_step(&p).unwrap();
            b.update_step(&p).unwrap();
        }
        for var in 0..3 {
            assert_eq!(a.c_table(var), b.c_table(var));
        }
        assert_eq!(a.bound_history(), b.bound_history());
    }
}
