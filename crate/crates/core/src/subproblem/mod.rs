//! Exact solvers for relaxed subproblems, plus ground-truth oracles.

mod knapsack;
pub mod oracle;

pub use knapsack::{solve_knapsack_min, KnapsackSubproblem, DEFAULT_CELL_LIMIT, FIX_TOL};
pub use oracle::{
    dual_function_oracle, dual_grid_search, enumerate_primal, exact_primal_oracle, OracleLimits,
    OracleOutcome, OracleResult,
};

use crate::error::{Error, Result};
use crate::model::{CompositeSolution, LocalSet, SeparableProblem};
use crate::parallel::{self, Execution};

/// Per-variable separable minimization over integer ranges.
///
/// A variable goes to its lower bound when its coefficient is nonnegative
/// (ties included) and to its upper bound otherwise. `None` marks an open
/// side of the range.
pub fn solve_bounded_integer_linear(
    coefficients: &[f64],
    lower: &[Option<i64>],
    upper: &[Option<i64>],
) -> Result<(Vec<i64>, f64)> {
    if lower.len() != coefficients.len() || upper.len() != coefficients.len() {
        return Err(Error::Dimension {
            what: "variable bounds",
            expected: coefficients.len(),
            got: lower.len().min(upper.len()),
        });
    }
    let mut x = Vec::with_capacity(coefficients.len());
    let mut value = 0.0;
    for (v, &r) in coefficients.iter().enumerate() {
        let pick = if r >= 0.0 { lower[v] } else { upper[v] };
        let xv = pick.ok_or_else(|| {
            Error::Validation(format!(
                "variable {v} is unbounded in its improving direction"
            ))
        })?;
        value += r * xv as f64;
        x.push(xv);
    }
    Ok((x, value))
}

/// Solver limits shared by the subproblem solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverLimits {
    pub knapsack_cells: usize,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits {
            knapsack_cells: DEFAULT_CELL_LIMIT,
        }
    }
}

/// Exact minimizer of one subproblem at the given multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSolution {
    pub x: Vec<i64>,
    /// `c_i . x_i + lambda . A_i x_i` at the minimizer.
    pub value: f64,
}

pub fn solve_subproblem(
    problem: &SeparableProblem,
    i: usize,
    multipliers: &[f64],
    limits: &SolverLimits,
) -> Result<SubSolution> {
    if multipliers.len() != problem.row_count() {
        return Err(Error::Dimension {
            what: "multipliers",
            expected: problem.row_count(),
            got: multipliers.len(),
        });
    }
    let reduced = problem.reduced_costs(i, multipliers);
    let (x, value) = match &problem.subproblem(i).local {
        LocalSet::Box { lower, upper } => {
            let lo: Vec<Option<i64>> = lower.iter().copied().map(Some).collect();
            let hi: Vec<Option<i64>> = upper.iter().copied().map(Some).collect();
            solve_bounded_integer_linear(&reduced, &lo, &hi)?
        }
        LocalSet::Knapsack { weights, capacity } => solve_knapsack_min(
            &KnapsackSubproblem {
                reduced_costs: reduced,
                weights: weights.clone(),
                capacity: *capacity,
            },
            limits.knapsack_cells,
        )?,
    };
    Ok(SubSolution { x, value })
}

/// Solves every subproblem exactly; returns the minimizer and `q(lambda)`.
pub fn full_pass(
    problem: &SeparableProblem,
    multipliers: &[f64],
    limits: &SolverLimits,
    exec: Execution,
) -> Result<(CompositeSolution, f64)> {
    let solved = parallel::try_map_range(exec, problem.subproblem_count(), |i| {
        solve_subproblem(problem, i, multipliers, limits)
    })?;
    let lb: f64 = multipliers
        .iter()
        .zip(problem.rhs())
        .map(|(l, b)| l * b)
        .sum();
    let q = solved.iter().map(|s| s.value).sum::<f64>() - lb;
    let composite = CompositeSolution::new(problem, solved.into_iter().map(|s| s.x).collect())?;
    Ok((composite, q))
}
