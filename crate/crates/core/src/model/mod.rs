//! Separable integer programs, their Lagrangian, and concrete instances.
//!
//! A [`SeparableProblem`] is a set of subproblems, each owning a contiguous
//! block of integer variables with a local feasible set, tied together by
//! linear coupling rows `sum_i A_i x_i (sense) b`. Relaxing the coupling rows
//! with multipliers gives the Lagrangian
//!
//! ```text
//! L(x, lambda) = sum_i c_i . x_i + lambda . (sum_i A_i x_i - b)
//! ```
//!
//! Rows are stored either as equalities or as `<=` inequalities; `>=` rows are
//! negated on construction. Multipliers of inequality rows are kept
//! nonnegative by the engine.

pub mod catalog;
mod composite;
pub mod example1;
pub mod gap;
pub mod orlib;

pub use composite::CompositeSolution;
pub use example1::SmallMilpInstance;
pub use gap::GapInstance;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Sense of a normalized coupling row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Equal,
    LessEqual,
}

/// One coupling row over global variable indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
    pub sense: Sense,
}

impl CouplingRow {
    pub fn equal(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        CouplingRow {
            terms,
            rhs,
            sense: Sense::Equal,
        }
    }

    pub fn less_equal(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        CouplingRow {
            terms,
            rhs,
            sense: Sense::LessEqual,
        }
    }

    /// `terms . x >= rhs`, stored as `-terms . x <= -rhs`.
    pub fn greater_equal(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        CouplingRow {
            terms: terms.into_iter().map(|(v, a)| (v, -a)).collect(),
            rhs: -rhs,
            sense: Sense::LessEqual,
        }
    }
}

/// Local feasible set of a subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalSet {
    /// Independent integer ranges `lower[v] <= x_v <= upper[v]`.
    Box { lower: Vec<i64>, upper: Vec<i64> },
    /// Binary variables with one knapsack row `weights . x <= capacity`.
    Knapsack { weights: Vec<u64>, capacity: u64 },
}

impl LocalSet {
    pub fn len(&self) -> usize {
        match self {
            LocalSet::Box { lower, .. } => lower.len(),
            LocalSet::Knapsack { weights, .. } => weights.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        if x.len() != self.len() {
            return false;
        }
        match self {
            LocalSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&v, (&lo, &hi))| lo <= v && v <= hi),
            LocalSet::Knapsack { weights, capacity } => {
                if x.iter().any(|&v| v != 0 && v != 1) {
                    return false;
                }
                let load: u64 = x
                    .iter()
                    .zip(weights)
                    .filter(|(&v, _)| v == 1)
                    .map(|(_, &w)| w)
                    .sum();
                load <= *capacity
            }
        }
    }

    /// Number of integer points in the box hull of the set (saturating).
    pub(crate) fn hull_size(&self) -> u128 {
        match self {
            LocalSet::Box { lower, upper } => {
                lower.iter().zip(upper).fold(1u128, |acc, (&lo, &hi)| {
                    acc.saturating_mul((hi - lo + 1) as u128)
                })
            }
            LocalSet::Knapsack { weights, .. } => {
                if weights.len() >= 127 {
                    u128::MAX
                } else {
                    1u128 << weights.len()
                }
            }
        }
    }

    pub(crate) fn var_range(&self, v: usize) -> (i64, i64) {
        match self {
            LocalSet::Box { lower, upper } => (lower[v], upper[v]),
            LocalSet::Knapsack { .. } => (0, 1),
        }
    }
}

/// A subproblem: objective coefficients plus its local feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    pub cost: Vec<f64>,
    pub local: LocalSet,
}

impl Subproblem {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }
}

/// A separable integer program with linear coupling rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableProblem {
    subproblems: Vec<Subproblem>,
    offsets: Vec<usize>,
    rows: Vec<CouplingRow>,
    // per global variable: (row, coefficient)
    columns: Vec<Vec<(usize, f64)>>,
    owner: Vec<usize>,
}

impl SeparableProblem {
    pub fn new(subproblems: Vec<Subproblem>, rows: Vec<CouplingRow>) -> Result<Self> {
        if subproblems.is_empty() {
            return Err(Error::Validation(
                "at least one subproblem is required".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(subproblems.len() + 1);
        let mut owner = Vec::new();
        offsets.push(0);
        for (i, sub) in subproblems.iter().enumerate() {
            if sub.cost.len() != sub.local.len() {
                return Err(Error::Validation(format!(
                    "subproblem {i}: {} costs for {} variables",
                    sub.cost.len(),
                    sub.local.len()
                )));
            }
            if sub.cost.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("objective coefficients"));
            }
            if let LocalSet::Box { lower, upper } = &sub.local {
                if lower.len() != upper.len() {
                    return Err(Error::Validation(format!(
                        "subproblem {i}: bound vectors differ in length"
                    )));
                }
                if let Some(v) = lower.iter().zip(upper).position(|(lo, hi)| lo > hi) {
                    return Err(Error::Validation(format!(
                        "subproblem {i}: variable {v} has an empty range"
                    )));
                }
            }
            owner.extend(std::iter::repeat_n(i, sub.len()));
            offsets.push(offsets[i] + sub.len());
        }
        let n_vars = owner.len();
        let mut columns = vec![Vec::new(); n_vars];
        for (r, row) in rows.iter().enumerate() {
            if !row.rhs.is_finite() || row.terms.iter().any(|(_, a)| !a.is_finite()) {
                return Err(Error::NonFinite("coupling row"));
            }
            let mut touched: Vec<usize> = Vec::new();
            for &(v, a) in &row.terms {
                if v >= n_vars {
                    return Err(Error::Validation(format!(
                        "row {r} references unknown variable {v}"
                    )));
                }
                if a != 0.0 {
                    columns[v].push((r, a));
                    if !touched.contains(&owner[v]) {
                        touched.push(owner[v]);
                    }
                }
            }
            if touched.len() < 2 {
                return Err(Error::Validation(format!(
                    "coupling row {r} touches {} subproblem(s); it should be a local constraint",
                    touched.len()
                )));
            }
        }
        Ok(SeparableProblem {
            subproblems,
            offsets,
            rows,
            columns,
            owner,
        })
    }

    pub fn subproblem_count(&self) -> usize {
        self.subproblems.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn var_count(&self) -> usize {
        self.owner.len()
    }

    pub fn subproblems(&self) -> &[Subproblem] {
        &self.subproblems
    }

    pub fn subproblem(&self, i: usize) -> &Subproblem {
        &self.subproblems[i]
    }

    pub fn rows(&self) -> &[CouplingRow] {
        &self.rows
    }

    pub fn senses(&self) -> Vec<Sense> {
        self.rows.iter().map(|r| r.sense).collect()
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs).collect()
    }

    /// Global index of the first variable of subproblem `i`.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn owner(&self, var: usize) -> usize {
        self.owner[var]
    }

    /// Nonzeros `(row, coefficient)` of global variable `var`.
    pub fn column(&self, var: usize) -> &[(usize, f64)] {
        &self.columns[var]
    }

    /// `c_v + sum_r lambda_r a_rv` for every variable of subproblem `i`.
    pub fn reduced_costs(&self, i: usize, multipliers: &[f64]) -> Vec<f64> {
        let off = self.offsets[i];
        self.subproblems[i]
            .cost
            .iter()
            .enumerate()
            .map(|(v, &c)| {
                c + self.columns[off + v]
                    .iter()
                    .map(|&(r, a)| multipliers[r] * a)
                    .sum::<f64>()
            })
            .collect()
    }

    /// `c_i . x_i + lambda . A_i x_i`: the part of `L` owned by subproblem `i`.
    pub fn subproblem_lagrangian(&self, i: usize, x: &[i64], multipliers: &[f64]) -> f64 {
        self.reduced_costs(i, multipliers)
            .iter()
            .zip(x)
            .map(|(r, &v)| r * v as f64)
            .sum()
    }

    pub fn subproblem_objective(&self, i: usize, x: &[i64]) -> f64 {
        self.subproblems[i]
            .cost
            .iter()
            .zip(x)
            .map(|(c, &v)| c * v as f64)
            .sum()
    }

    fn check_solution(&self, solution: &CompositeSolution) -> Result<()> {
        if solution.part_count() != self.subproblem_count() {
            return Err(Error::Dimension {
                what: "subproblem solutions",
                expected: self.subproblem_count(),
                got: solution.part_count(),
            });
        }
        for (i, sub) in self.subproblems.iter().enumerate() {
            if solution.part(i).len() != sub.len() {
                return Err(Error::Dimension {
                    what: "subproblem solution length",
                    expected: sub.len(),
                    got: solution.part(i).len(),
                });
            }
        }
        Ok(())
    }

    fn check_multipliers(&self, multipliers: &[f64]) -> Result<()> {
        if multipliers.len() != self.row_count() {
            return Err(Error::Dimension {
                what: "multipliers",
                expected: self.row_count(),
                got: multipliers.len(),
            });
        }
        Ok(())
    }

    /// Row activities `sum_i A_i x_i`.
    pub fn activity(&self, solution: &CompositeSolution) -> Result<Vec<f64>> {
        self.check_solution(solution)?;
        let mut act = vec![0.0; self.row_count()];
        for i in 0..self.subproblem_count() {
            let off = self.offsets[i];
            for (v, &x) in solution.part(i).iter().enumerate() {
                if x != 0 {
                    for &(r, a) in &self.columns[off + v] {
                        act[r] += a * x as f64;
                    }
                }
            }
        }
        Ok(act)
    }

    /// Violation vector `g = sum_i A_i x_i - b` in normalized row form.
    pub fn constraint_violation(&self, solution: &CompositeSolution) -> Result<Vec<f64>> {
        let mut g = self.activity(solution)?;
        for (gr, row) in g.iter_mut().zip(&self.rows) {
            *gr -= row.rhs;
        }
        Ok(g)
    }

    pub fn objective(&self, solution: &CompositeSolution) -> Result<f64> {
        self.check_solution(solution)?;
        Ok((0..self.subproblem_count())
            .map(|i| self.subproblem_objective(i, solution.part(i)))
            .sum())
    }

    /// `L(x, lambda)` at a given (not necessarily minimizing) solution.
    pub fn evaluate_lagrangian(
        &self,
        solution: &CompositeSolution,
        multipliers: &[f64],
    ) -> Result<f64> {
        self.check_multipliers(multipliers)?;
        let g = self.constraint_violation(solution)?;
        let dual_term: f64 = multipliers.iter().zip(&g).map(|(l, g)| l * g).sum();
        Ok(self.objective(solution)? + dual_term)
    }

    /// `true` if every coupling row holds within `tol`.
    pub fn is_feasible(&self, solution: &CompositeSolution, tol: f64) -> Result<bool> {
        let g = self.constraint_violation(solution)?;
        Ok(g.iter().zip(&self.rows).all(|(&gr, row)| match row.sense {
            Sense::Equal => gr.abs() <= tol,
            Sense::LessEqual => gr <= tol,
        }))
    }

    /// Recovers the GAP instance if this problem has the exact structure
    /// produced by [`gap::gap_to_separable`].
    pub fn as_gap(&self) -> Option<GapInstance> {
        gap::separable_to_gap(self)
    }
}

/// Free-function form of [`SeparableProblem::evaluate_lagrangian`].
pub fn evaluate_lagrangian(
    problem: &SeparableProblem,
    solution: &CompositeSolution,
    multipliers: &[f64],
) -> Result<f64> {
    problem.evaluate_lagrangian(solution, multipliers)
}

/// Free-function form of [`SeparableProblem::constraint_violation`].
pub fn constraint_violation(
    problem: &SeparableProblem,
    solution: &CompositeSolution,
) -> Result<Vec<f64>> {
    problem.constraint_violation(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_box_problem() -> SeparableProblem {
        let subs = vec![
            Subproblem {
                cost: vec![1.0, 2.0],
                local: LocalSet::Box {
                    lower: vec![0, 0],
                    upper: vec![3, 3],
                },
            },
            Subproblem {
                cost: vec![-1.0],
                local: LocalSet::Box {
                    lower: vec![-2],
                    upper: vec![2],
                },
            },
        ];
        let rows = vec![
            CouplingRow::equal(vec![(0, 1.0), (2, 1.0)], 2.0),
            CouplingRow::greater_equal(vec![(1, 2.0), (2, -1.0)], 1.0),
        ];
        SeparableProblem::new(subs, rows).unwrap()
    }

    #[test]
    fn rows_touching_one_subproblem_are_rejected() {
        let subs = vec![
            Subproblem {
                cost: vec![1.0, 1.0],
                local: LocalSet::Box {
                    lower: vec![0, 0],
                    upper: vec![1, 1],
                },
            },
            Subproblem {
                cost: vec![1.0],
                local: LocalSet::Box {
                    lower: vec![0],
                    upper: vec![1],
                },
            },
        ];
        let rows = vec![CouplingRow::equal(vec![(0, 1.0), (1, 1.0)], 1.0)];
        assert!(matches!(
            SeparableProblem::new(subs, rows),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn greater_equal_rows_are_negated() {
        let p = two_box_problem();
        assert_eq!(p.rows()[1].sense, Sense::LessEqual);
        assert_eq!(p.rows()[1].rhs, -1.0);
        assert_eq!(p.column(1), &[(1, -2.0)]);
    }

    #[test]
    fn zero_multipliers_give_raw_objective() {
        let p = two_box_problem();
        let s = CompositeSolution::new(&p, vec![vec![1, 2], vec![-1]]).unwrap();
        assert_eq!(
            p.evaluate_lagrangian(&s, &[0.0, 0.0]).unwrap(),
            1.0 + 4.0 + 1.0
        );
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = two_box_problem();
        let s = CompositeSolution::new(&p, vec![vec![1, 2], vec![-1]]).unwrap();
        assert!(matches!(
            p.evaluate_lagrangian(&s, &[0.0]),
            Err(Error::Dimension {
                what: "multipliers",
                ..
            })
        ));
    }

    proptest! {
        #[test]
        fn dual_term_is_bilinear(
            x0 in 0i64..=3, x1 in 0i64..=3, x2 in -2i64..=2,
            l0 in -5.0f64..5.0, l1 in 0.0f64..5.0,
        ) {
            let p = two_box_problem();
            let s = CompositeSolution::new(&p, vec![vec![x0, x1], vec![x2]]).unwrap();
            let lam = [l0, l1];
            let g = p.constraint_violation(&s).unwrap();
            let lhs = p.evaluate_lagrangian(&s, &lam).unwrap() - p.evaluate_lagrangian(&s, &[0.0, 0.0]).unwrap();
            let rhs = lam[0] * g[0] + lam[1] * g[1];
            prop_assert!((lhs - rhs).abs() <= 1e-9);
        }

        #[test]
        fn lagrangian_splits_by_subproblem(
            x0 in 0i64..=3, x1 in 0i64..=3, x2 in -2i64..=2,
            l0 in -5.0f64..5.0, l1 in 0.0f64..5.0,
        ) {
            let p = two_box_problem();
            let s = CompositeSolution::new(&p, vec![vec![x0, x1], vec![x2]]).unwrap();
            let lam = [l0, l1];
            let parts: f64 = (0..2).map(|i| p.subproblem_lagrangian(i, s.part(i), &lam)).sum();
            let lb: f64 = lam.iter().zip(p.rhs()).map(|(l, b)| l * b).sum();
            prop_assert!((parts - lb - p.evaluate_lagrangian(&s, &lam).unwrap()).abs() <= 1e-9);
        }
    }
}
