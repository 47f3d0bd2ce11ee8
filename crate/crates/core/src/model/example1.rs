//! A six-variable integer program with two covering rows and a known dual
//! optimum `lambda* = (0.6, 0)`.
//!
//! ```text
//! min  x1 + 2x2 + 3x3 + x4 + 2x5 + 3x6
//! s.t. x1 + 3x2 + 5x3 + x4 + 3x5 + 5x6 >= 26
//!      2x1 + 1.5x2 + 5x3 + 2x4 + 0.5x5 + x6 >= 16
//!      0 <= x <= 26, integer
//! ```
//!
//! Every variable has positive cost, so any optimum costs at most 16 (e.g.
//! `x1 = 1, x3 = 5`) and no variable exceeds 16 there; the box `[0, 26]`
//! keeps the feasible set finite without cutting off an optimum.

use super::{CouplingRow, LocalSet, SeparableProblem, Subproblem};
use crate::error::{Error, Result};

/// Optimal multipliers of the example.
pub const OPTIMAL_MULTIPLIERS: [f64; 2] = [0.6, 0.0];

/// Small integer program with `>=` coupling rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMilpInstance {
    pub cost: Vec<f64>,
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
    /// `(coefficients, rhs)` of `coefficients . x >= rhs`.
    pub rows: Vec<(Vec<f64>, f64)>,
}

impl SmallMilpInstance {
    pub fn example1() -> Self {
        SmallMilpInstance {
            cost: vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0],
            lower: vec![0; 6],
            upper: vec![26; 6],
            rows: vec![
                (vec![1.0, 3.0, 5.0, 1.0, 3.0, 5.0], 26.0),
                (vec![2.0, 1.5, 5.0, 2.0, 0.5, 1.0], 16.0),
            ],
        }
    }

    pub fn var_count(&self) -> usize {
        self.cost.len()
    }

    /// One single-variable subproblem per variable; `>=` rows negated.
    pub fn to_separable(&self) -> Result<SeparableProblem> {
        let n = self.var_count();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Validation(
                "bounds do not match the variable count".into(),
            ));
        }
        if let Some((coef, _)) = self.rows.iter().find(|(c, _)| c.len() != n) {
            return Err(Error::Dimension {
                what: "row coefficients",
                expected: n,
                got: coef.len(),
            });
        }
        let subproblems = (0..n)
            .map(|v| Subproblem {
                cost: vec![self.cost[v]],
                local: LocalSet::Box {
                    lower: vec![self.lower[v]],
                    upper: vec![self.upper[v]],
                },
            })
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|(coef, rhs)| {
                CouplingRow::greater_equal(
                    coef.iter()
                        .enumerate()
                        .filter(|(_, &a)| a != 0.0)
                        .map(|(v, &a)| (v, a))
                        .collect(),
                    *rhs,
                )
            })
            .collect();
        SeparableProblem::new(subproblems, rows)
    }
}

/// Example 1 as a separable problem.
pub fn example1() -> SeparableProblem {
    SmallMilpInstance::example1()
        .to_separable()
        .expect("example 1 is well formed")
}
