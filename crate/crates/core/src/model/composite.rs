use super::SeparableProblem;
use crate::error::{Error, Result};

/// The most recent solution kept for each subproblem.
///
/// Concatenating the parts gives the (generally non-optimal) relaxed solution
/// whose violation vector is the surrogate subgradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSolution {
    parts: Vec<Vec<i64>>,
    staleness: Vec<usize>,
    objective: Vec<f64>,
}

impl CompositeSolution {
    /// Builds a composite, checking each part against its local set.
    pub fn new(problem: &SeparableProblem, parts: Vec<Vec<i64>>) -> Result<Self> {
        if parts.len() != problem.subproblem_count() {
            return Err(Error::Dimension {
                what: "subproblem solutions",
                expected: problem.subproblem_count(),
                got: parts.len(),
            });
        }
        for (i, x) in parts.iter().enumerate() {
            if !problem.subproblem(i).local.contains(x) {
                return Err(Error::Validation(format!(
                    "solution of subproblem {i} is outside its local feasible set"
                )));
            }
        }
        let objective = parts
            .iter()
            .enumerate()
            .map(|(i, x)| problem.subproblem_objective(i, x))
            .collect();
        Ok(CompositeSolution {
            staleness: vec![0; parts.len()],
            parts,
            objective,
        })
    }

    /// Every variable at its lower bound (the zero vector for knapsacks).
    pub fn lower_corner(problem: &SeparableProblem) -> Self {
        let parts = problem
            .subproblems()
            .iter()
            .map(|s| (0..s.len()).map(|v| s.local.var_range(v).0).collect())
            .collect();
        CompositeSolution::new(problem, parts).expect("lower corner is locally feasible")
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn part(&self, i: usize) -> &[i64] {
        &self.parts[i]
    }

    pub fn parts(&self) -> &[Vec<i64>] {
        &self.parts
    }

    /// Concatenation of all parts in global variable order.
    pub fn flatten(&self) -> Vec<i64> {
        self.parts.iter().flatten().copied().collect()
    }

    pub fn staleness(&self) -> &[usize] {
        &self.staleness
    }

    /// Cached `c_i . x_i` per subproblem.
    pub fn objective_parts(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective(&self) -> f64 {
        self.objective.iter().sum()
    }

    /// Replaces part `i`; the caller guarantees local feasibility.
    pub fn replace(&mut self, problem: &SeparableProblem, i: usize, x: Vec<i64>) {
        debug_assert!(problem.subproblem(i).local.contains(&x));
        self.objective[i] = problem.subproblem_objective(i, &x);
        self.parts[i] = x;
        self.staleness[i] = 0;
    }

    /// Marks one more iteration passed without refreshing any part.
    pub fn age(&mut self) {
        for s in &mut self.staleness {
            *s += 1;
        }
    }
}
