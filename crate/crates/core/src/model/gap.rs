//! Generalized assignment problem (minimization form).
//!
//! Jobs are assigned to exactly one machine; each machine has a capacity.
//! Machines become subproblems (0-1 knapsacks over all jobs) and the
//! one-machine-per-job rows are the coupling constraints.

use super::{CouplingRow, LocalSet, Sense, SeparableProblem, Subproblem};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// GAP data in job-major storage: `cost[i][j]` is job `i` on machine `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapInstance {
    cost: Vec<Vec<u64>>,
    resource: Vec<Vec<u64>>,
    capacity: Vec<u64>,
}

impl GapInstance {
    pub fn new(cost: Vec<Vec<u64>>, resource: Vec<Vec<u64>>, capacity: Vec<u64>) -> Result<Self> {
        let m = capacity.len();
        if m == 0 {
            return Err(Error::Validation("GAP needs at least one machine".into()));
        }
        if cost.len() != resource.len() {
            return Err(Error::Validation(format!(
                "{} cost rows but {} resource rows",
                cost.len(),
                resource.len()
            )));
        }
        for (i, (c, a)) in cost.iter().zip(&resource).enumerate() {
            if c.len() != m || a.len() != m {
                return Err(Error::Validation(format!(
                    "job {i}: expected {m} entries per row"
                )));
            }
            if !a.iter().zip(&capacity).any(|(a, b)| a <= b) {
                return Err(Error::Validation(format!("job {i} fits on no machine")));
            }
        }
        Ok(GapInstance {
            cost,
            resource,
            capacity,
        })
    }

    /// Builds an instance from signed data, rejecting negative entries.
    pub fn from_signed(
        cost: Vec<Vec<i64>>,
        resource: Vec<Vec<i64>>,
        capacity: Vec<i64>,
    ) -> Result<Self> {
        fn conv(v: i64, what: &str) -> Result<u64> {
            u64::try_from(v).map_err(|_| Error::Validation(format!("negative {what} entry {v}")))
        }
        let cost = cost
            .into_iter()
            .map(|r| r.into_iter().map(|v| conv(v, "cost")).collect())
            .collect::<Result<_>>()?;
        let resource = resource
            .into_iter()
            .map(|r| r.into_iter().map(|v| conv(v, "resource")).collect())
            .collect::<Result<_>>()?;
        let capacity = capacity
            .into_iter()
            .map(|v| conv(v, "capacity"))
            .collect::<Result<_>>()?;
        GapInstance::new(cost, resource, capacity)
    }

    /// Random instance following the classical type-D recipe:
    /// `a ~ U[1,100]`, `c = 111 - a + U[-10,10]`, `b_j = 0.8 sum_i a_ij / M`.
    ///
    /// Capacities are raised to the largest single resource on the machine so
    /// that tiny instances stay valid; for realistic sizes this never binds.
    pub fn type_d(machines: usize, jobs: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cost = Vec::with_capacity(jobs);
        let mut resource = Vec::with_capacity(jobs);
        for _ in 0..jobs {
            let a: Vec<u64> = (0..machines).map(|_| rng.gen_range(1..=100)).collect();
            let c = a
                .iter()
                .map(|&a| (111 - a as i64 + rng.gen_range(-10..=10)) as u64)
                .collect();
            resource.push(a);
            cost.push(c);
        }
        let capacity = (0..machines)
            .map(|j| {
                let total: u64 = resource.iter().map(|r: &Vec<u64>| r[j]).sum();
                let largest = resource.iter().map(|r: &Vec<u64>| r[j]).max().unwrap_or(0);
                ((0.8 * total as f64 / machines as f64).floor() as u64).max(largest)
            })
            .collect();
        GapInstance::new(cost, resource, capacity)
    }

    pub fn machines(&self) -> usize {
        self.capacity.len()
    }

    pub fn jobs(&self) -> usize {
        self.cost.len()
    }

    pub fn cost(&self, job: usize, machine: usize) -> u64 {
        self.cost[job][machine]
    }

    pub fn resource(&self, job: usize, machine: usize) -> u64 {
        self.resource[job][machine]
    }

    pub fn capacity(&self) -> &[u64] {
        &self.capacity
    }

    pub fn cost_rows(&self) -> &[Vec<u64>] {
        &self.cost
    }

    pub fn resource_rows(&self) -> &[Vec<u64>] {
        &self.resource
    }

    /// Total cost of a full assignment `machine_of[job]`.
    pub fn assignment_cost(&self, machine_of: &[usize]) -> u64 {
        machine_of
            .iter()
            .enumerate()
            .map(|(i, &j)| self.cost[i][j])
            .sum()
    }

    /// `true` if `machine_of` respects every capacity.
    pub fn is_feasible_assignment(&self, machine_of: &[usize]) -> bool {
        if machine_of.len() != self.jobs() {
            return false;
        }
        let mut load = vec![0u64; self.machines()];
        for (i, &j) in machine_of.iter().enumerate() {
            if j >= self.machines() {
                return false;
            }
            load[j] += self.resource[i][j];
        }
        load.iter().zip(&self.capacity).all(|(l, b)| l <= b)
    }

    /// Permutes jobs and machines: new job `i` is old job `jobs[i]`.
    pub fn permuted(&self, jobs: &[usize], machines: &[usize]) -> Result<Self> {
        let cost = jobs
            .iter()
            .map(|&i| machines.iter().map(|&j| self.cost[i][j]).collect())
            .collect();
        let resource = jobs
            .iter()
            .map(|&i| machines.iter().map(|&j| self.resource[i][j]).collect())
            .collect();
        let capacity = machines.iter().map(|&j| self.capacity[j]).collect();
        GapInstance::new(cost, resource, capacity)
    }
}

/// Machines become knapsack subproblems; the rows `1 - sum_j x_ij = 0`
/// couple them. Variable `(machine j, job i)` has global index `j * N + i`.
pub fn gap_to_separable(instance: &GapInstance) -> Result<SeparableProblem> {
    let (m, n) = (instance.machines(), instance.jobs());
    if m < 2 {
        return Err(Error::Validation(
            "a single-machine GAP has no coupling rows to relax".into(),
        ));
    }
    let subproblems = (0..m)
        .map(|j| Subproblem {
            cost: (0..n).map(|i| instance.cost[i][j] as f64).collect(),
            local: LocalSet::Knapsack {
                weights: (0..n).map(|i| instance.resource[i][j]).collect(),
                capacity: instance.capacity[j],
            },
        })
        .collect();
    let rows = (0..n)
        .map(|i| CouplingRow::equal((0..m).map(|j| (j * n + i, -1.0)).collect(), -1.0))
        .collect();
    SeparableProblem::new(subproblems, rows)
}

pub(super) fn separable_to_gap(problem: &SeparableProblem) -> Option<GapInstance> {
    let m = problem.subproblem_count();
    let n = problem.row_count();
    let mut cost = vec![vec![0u64; m]; n];
    let mut resource = vec![vec![0u64; m]; n];
    let mut capacity = Vec::with_capacity(m);
    for (j, sub) in problem.subproblems().iter().enumerate() {
        let LocalSet::Knapsack {
            weights,
            capacity: b,
        } = &sub.local
        else {
            return None;
        };
        if weights.len() != n {
            return None;
        }
        capacity.push(*b);
        for i in 0..n {
            let c = sub.cost[i];
            if c < 0.0 || c.fract() != 0.0 {
                return None;
            }
            cost[i][j] = c as u64;
            resource[i][j] = weights[i];
        }
    }
    for (i, row) in problem.rows().iter().enumerate() {
        if row.sense != Sense::Equal || row.rhs != -1.0 || row.terms.len() != m {
            return None;
        }
        for (j, &(v, a)) in row.terms.iter().enumerate() {
            if v != j * n + i || a != -1.0 {
                return None;
            }
        }
    }
    GapInstance::new(cost, resource, capacity).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CompositeSolution;

    fn tiny() -> GapInstance {
        GapInstance::new(
            vec![vec![3, 5], vec![4, 1], vec![2, 2]],
            vec![vec![1, 2], vec![2, 1], vec![1, 1]],
            vec![3, 3],
        )
        .unwrap()
    }

    #[test]
    fn dimensions_carry_over() {
        let p = gap_to_separable(&tiny()).unwrap();
        assert_eq!(p.subproblem_count(), 2);
        assert_eq!(p.row_count(), 3);
        for row in p.rows() {
            assert_eq!(row.sense, Sense::Equal);
            assert_eq!(row.terms.len(), 2);
        }
    }

    #[test]
    fn violation_signs() {
        let p = gap_to_separable(&tiny()).unwrap();
        // job 0 on machine 0 only, job 1 nowhere, job 2 on both
        let s = CompositeSolution::new(&p, vec![vec![1, 0, 1], vec![0, 0, 1]]).unwrap();
        let g = p.constraint_violation(&s).unwrap();
        assert_eq!(g, vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn knapsack_reduced_cost_is_cost_minus_multiplier() {
        let p = gap_to_separable(&tiny()).unwrap();
        let r = p.reduced_costs(1, &[1.0, 10.0, 0.5]);
        assert_eq!(r, vec![4.0, -9.0, 1.5]);
    }

    #[test]
    fn round_trip_through_separable() {
        let inst = tiny();
        let p = gap_to_separable(&inst).unwrap();
        assert_eq!(p.as_gap(), Some(inst));
    }

    #[test]
    fn negative_entries_and_unplaceable_jobs_are_rejected() {
        assert!(GapInstance::from_signed(vec![vec![-1, 2]], vec![vec![1, 1]], vec![1, 1]).is_err());
        assert!(GapInstance::new(vec![vec![1, 2]], vec![vec![5, 6]], vec![4, 4]).is_err());
    }

    #[test]
    fn single_machine_cannot_be_relaxed() {
        let inst = GapInstance::new(vec![vec![1]], vec![vec![1]], vec![1]).unwrap();
        assert!(gap_to_separable(&inst).is_err());
    }

    #[test]
    fn type_d_is_deterministic_and_in_range() {
        let a = GapInstance::type_d(5, 100, 7).unwrap();
        let b = GapInstance::type_d(5, 100, 7).unwrap();
        assert_eq!(a, b);
        for i in 0..a.jobs() {
            for j in 0..a.machines() {
                let (c, r) = (a.cost(i, j) as i64, a.resource(i, j) as i64);
                assert!((1..=100).contains(&r));
                assert!((111 - r - 10..=111 - r + 10).contains(&c));
            }
        }
    }
}
