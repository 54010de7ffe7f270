//! Label pruning: two sound value-discarding rules plus the winner-take-all
//! heuristic used to force the dynamics into a single assignment.

use super::{SolverError, SolverState};

/// What a pruning call changed. Variables whose domain would have been
/// emptied are left untouched and listed in `aborted`; that situation
/// signals an upper bound below the true optimum or a numerical problem.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PruneReport {
    pub deactivated: Vec<(usize, usize)>,
    pub aborted: Vec<usize>,
}

impl PruneReport {
    pub fn changed(&self) -> bool {
        !self.deactivated.is_empty()
    }
}

impl SolverState {
    /// Bound-margin rule: with `upper_bound` >= the true optimum, any label
    /// of variable i whose value exceeds (upper_bound - current lower
    /// bound) + min_i cannot occur in an optimal assignment. A looser
    /// upper bound only loosens the threshold, so pruning stays sound.
    pub fn prune_margin(&mut self, upper_bound: f64) -> Result<PruneReport, SolverError> {
        let margin = upper_bound - self.lower_bound();
        let thresholds: Vec<f64> = self
            .c
            .iter()
            .zip(&self.active)
            .map(|(t, m)| margin + active_min(t, m))
            .collect();
        Ok(self.deactivate_above(&thresholds))
    }

    /// Spectral rule for symmetric propagation matrices: every optimal
    /// label's value is at most upper_bound/n + sqrt((n-1)/n) * |alpha2_k| *
    /// upper_bound, where alpha2_k comes from the damping sequence of the
    /// matrix's second eigenvalue. Anything above that threshold is dropped.
    pub fn prune_spectral(
        &mut self,
        upper_bound: f64,
        alpha2_k: f64,
    ) -> Result<PruneReport, SolverError> {
        if !self.w.is_symmetric() {
            return Err(SolverError::SpectralPruneNeedsSymmetric);
        }
        let n = self.c.len() as f64;
        let threshold =
            upper_bound / n + ((n - 1.0) / n).sqrt() * alpha2_k.abs() * upper_bound;
        let thresholds = vec![threshold; self.c.len()];
        Ok(self.deactivate_above(&thresholds))
    }

    /// One winner-take-all round: keep labels within `rho * spread` of each
    /// variable's minimum; once `rho` drops below `floor`, keep only the
    /// argmin. Heuristic masking, so the bound certification flag is
    /// cleared whenever a label is dropped.
    pub fn winner_take_all_round(&mut self, rho: f64, floor: f64) -> Vec<(usize, usize)> {
        let mut dropped = Vec::new();
        for var in 0..self.c.len() {
            let min = active_min(&self.c[var], &self.active[var]);
            if rho < floor {
                let mut kept_one = false;
                for l in 0..self.c[var].len() {
                    if !self.active[var][l] {
                        continue;
                    }
                    if !kept_one && self.c[var][l] == min {
                        kept_one = true;
                        continue;
                    }
                    self.active[var][l] = false;
                    self.c[var][l] = f64::INFINITY;
                    dropped.push((var, l));
                }
            } else {
                let max = self.c[var]
                    .iter()
                    .zip(&self.active[var])
                    .filter(|(_, &a)| a)
                    .map(|(&v, _)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let threshold = min + rho * (max - min);
                for l in 0..self.c[var].len() {
                    if self.active[var][l] && self.c[var][l] > threshold {
                        self.active[var][l] = false;
                        self.c[var][l] = f64::INFINITY;
                        dropped.push((var, l));
                    }
                }
            }
        }
        if !dropped.is_empty() {
            self.bound_certified = false;
        }
        dropped
    }

    fn deactivate_above(&mut self, thresholds: &[f64]) -> PruneReport {
        let mut report = PruneReport::default();
        for (var, &threshold) in thresholds.iter().enumerate() {
            let survivors = self.c[var]
                .iter()
                .zip(&self.active[var])
                .filter(|(&v, &a)| a && v <= threshold)
                .count();
            if survivors == 0 {
                report.aborted.push(var);
                continue;
            }
            for l in 0..self.c[var].len() {
                if self.active[var][l] && self.c[var][l] > threshold {
                    self.active[var][l] = false;
                    self.c[var][l] = f64::INFINITY;
                    report.deactivated.push((var, l));
                }
            }
        }
        report
    }
}

fn active_min(table: &[f64], mask: &[bool]) -> f64 {
    let mut best = f64::INFINITY;
    for (&v, &a) in table.iter().zip(mask) {
        if a && v < best {
            best = v;
        }
    }
    best
}
