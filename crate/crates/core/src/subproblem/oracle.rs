//! Ground truth for tests and acceptance runs: exact primal optima by
//! enumeration or branch-and-bound, and exact dual values.

use super::{full_pass, SolverLimits};
use crate::error::{Error, Result};
use crate::model::{CompositeSolution, GapInstance, SeparableProblem};
use crate::parallel::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLimits {
    /// Largest number of candidate vectors the plain enumerator will visit.
    pub enumeration_cap: u128,
    /// Node budget of the GAP branch-and-bound.
    pub node_cap: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            enumeration_cap: 10_000_000,
            node_cap: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    /// Optimizer in global variable order.
    pub solution: Vec<i64>,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal(OracleResult),
    Infeasible { nodes: u64 },
}

impl OracleOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal(r) => Some(r.value),
            OracleOutcome::Infeasible { .. } => None,
        }
    }
}

/// Exact optimum of the coupled problem.
///
/// GAP-shaped problems go through branch-and-bound; anything else is
/// enumerated, refusing when the search space exceeds the cap.
pub fn exact_primal_oracle(
    problem: &SeparableProblem,
    limits: &OracleLimits,
) -> Result<OracleOutcome> {
    match problem.as_gap() {
        Some(inst) => {
            let out = gap_exact(&inst, limits.node_cap)?;
            Ok(match out {
                GapExact::Optimal {
                    cost,
                    machine_of,
                    nodes,
                } => OracleOutcome::Optimal(OracleResult {
                    value: cost as f64,
                    solution: assignment_to_vector(&inst, &machine_of),
                    nodes,
                }),
                GapExact::Infeasible { nodes } => OracleOutcome::Infeasible { nodes },
            })
        }
        None => enumerate_primal(problem, limits.enumeration_cap),
    }
}

/// Plain enumeration over the product of variable ranges, in lexicographic
/// order; the first strictly best point wins.
pub fn enumerate_primal(problem: &SeparableProblem, cap: u128) -> Result<OracleOutcome> {
    let space = problem
        .subproblems()
        .iter()
        .fold(1u128, |acc, s| acc.saturating_mul(s.local.hull_size()));
    if space > cap {
        return Err(Error::OracleRefused(format!(
            "search space of {space} vectors exceeds the cap of {cap}"
        )));
    }
    let ranges: Vec<(i64, i64)> = problem
        .subproblems()
        .iter()
        .flat_map(|s| (0..s.len()).map(move |v| s.local.var_range(v)))
        .collect();
    let mut x: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut best: Option<(f64, Vec<i64>)> = None;
    let mut visited = 0u64;
    loop {
        visited += 1;
        let composite = split(problem, &x);
        let locally_ok = problem
            .subproblems()
            .iter()
            .enumerate()
            .all(|(i, s)| s.local.contains(&composite[i]));
        if locally_ok {
            let sol = CompositeSolution::new(problem, composite)?;
            if problem.is_feasible(&sol, 1e-9)? {
                let v = problem.objective(&sol)?;
                if best.as_ref().is_none_or(|(b, _)| v < *b - 1e-12) {
                    best = Some((v, x.clone()));
                }
            }
        }
        // odometer increment, last variable fastest
        let mut pos = x.len();
        loop {
            if pos == 0 {
                return Ok(match best {
                    Some((value, solution)) => OracleOutcome::Optimal(OracleResult {
                        value,
                        solution,
                        nodes: visited,
                    }),
                    None => OracleOutcome::Infeasible { nodes: visited },
                });
            }
            pos -= 1;
            if x[pos] < ranges[pos].1 {
                x[pos] += 1;
                break;
            }
            x[pos] = ranges[pos].0;
        }
    }
}

fn split(problem: &SeparableProblem, x: &[i64]) -> Vec<Vec<i64>> {
    (0..problem.subproblem_count())
        .map(|i| {
            let off = problem.offset(i);
            x[off..off + problem.subproblem(i).len()].to_vec()
        })
        .collect()
}

/// `x[j * N + i] = 1` iff job `i` sits on machine `j`.
pub fn assignment_to_vector(instance: &GapInstance, machine_of: &[usize]) -> Vec<i64> {
    let n = instance.jobs();
    let mut x = vec![0; instance.machines() * n];
    for (i, &j) in machine_of.iter().enumerate() {
        x[j * n + i] = 1;
    }
    x
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GapExact {
    Optimal {
        cost: u64,
        machine_of: Vec<usize>,
        nodes: u64,
    },
    Infeasible {
        nodes: u64,
    },
}

/// Exact GAP optimum by branch-and-bound; refuses past `node_cap` nodes.
pub fn gap_exact(instance: &GapInstance, node_cap: u64) -> Result<GapExact> {
    let jobs: Vec<usize> = (0..instance.jobs()).collect();
    let out = gap_branch_and_bound(instance, &jobs, instance.capacity(), node_cap, None);
    if !out.complete {
        return Err(Error::OracleRefused(format!(
            "branch-and-bound exceeded the node cap of {node_cap}"
        )));
    }
    Ok(match out.best {
        Some((cost, machine_of)) => GapExact::Optimal {
            cost,
            machine_of,
            nodes: out.nodes,
        },
        None => GapExact::Infeasible { nodes: out.nodes },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BnbOutcome {
    /// Best cost and machine per entry of the `jobs` argument.
    pub best: Option<(u64, Vec<usize>)>,
    pub nodes: u64,
    /// `false` if the node budget ran out before the tree was closed.
    pub complete: bool,
}

/// Depth-first branch-and-bound assigning `jobs` within `capacity`.
///
/// Jobs are branched in decreasing cost-regret order, machines in increasing
/// cost order; the bound adds each remaining job's cheapest machine that
/// fits the initial capacity. Only solutions strictly cheaper than
/// `incumbent` are reported.
pub(crate) fn gap_branch_and_bound(
    instance: &GapInstance,
    jobs: &[usize],
    capacity: &[u64],
    node_cap: u64,
    incumbent: Option<u64>,
) -> BnbOutcome {
    let m = instance.machines();
    let choices: Vec<Vec<usize>> = jobs
        .iter()
        .map(|&i| {
            let mut js: Vec<usize> = (0..m)
                .filter(|&j| instance.resource(i, j) <= capacity[j])
                .collect();
            js.sort_by_key(|&j| (instance.cost(i, j), j));
            js
        })
        .collect();
    if choices.iter().any(Vec::is_empty) {
        return BnbOutcome {
            best: None,
            nodes: 0,
            complete: true,
        };
    }
    let regret = |c: &[usize], i: usize| -> u64 {
        match c {
            [a, b, ..] => instance.cost(i, *b) - instance.cost(i, *a),
            _ => u64::MAX,
        }
    };
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&k| (std::cmp::Reverse(regret(&choices[k], jobs[k])), k));

    let mut suffix_min = vec![0u64; order.len() + 1];
    for (d, &k) in order.iter().enumerate().rev() {
        suffix_min[d] = suffix_min[d + 1] + instance.cost(jobs[k], choices[k][0]);
    }

    struct Search<'a> {
        instance: &'a GapInstance,
        jobs: &'a [usize],
        order: Vec<usize>,
        choices: Vec<Vec<usize>>,
        suffix_min: Vec<u64>,
        remaining: Vec<u64>,
        current: Vec<usize>,
        bound: Option<u64>,
        best: Option<Vec<usize>>,
        nodes: u64,
        node_cap: u64,
        exhausted: bool,
    }

    impl Search<'_> {
        fn dfs(&mut self, depth: usize, cost: u64) {
            if self.exhausted {
                return;
            }
            if let Some(b) = self.bound {
                if cost + self.suffix_min[depth] >= b {
                    return;
                }
            }
            if depth == self.order.len() {
                self.bound = Some(cost);
                self.best = Some(self.current.clone());
                return;
            }
            let k = self.order[depth];
            let i = self.jobs[k];
            for c in 0..self.choices[k].len() {
                let j = self.choices[k][c];
                let a = self.instance.resource(i, j);
                if a > self.remaining[j] {
                    continue;
                }
                self.nodes += 1;
                if self.nodes > self.node_cap {
                    self.exhausted = true;
                    return;
                }
                self.remaining[j] -= a;
                self.current[k] = j;
                self.dfs(depth + 1, cost + self.instance.cost(i, j));
                self.remaining[j] += a;
                if self.exhausted {
                    return;
                }
            }
        }
    }

    let mut s = Search {
        instance,
        jobs,
        order,
        choices,
        suffix_min,
        remaining: capacity.to_vec(),
        current: vec![usize::MAX; jobs.len()],
        bound: incumbent,
        best: None,
        nodes: 0,
        node_cap,
        exhausted: false,
    };
    s.dfs(0, 0);
    BnbOutcome {
        best: s.best.map(|a| (s.bound.expect("bound set with best"), a)),
        nodes: s.nodes,
        complete: !s.exhausted,
    }
}

/// Exhaustive enumeration of all `M^N` assignments; the cheapest feasible
/// one with the smallest index in base-`M` order.
pub fn gap_brute_force(instance: &GapInstance) -> Option<(u64, Vec<usize>)> {
    let (m, n) = (instance.machines(), instance.jobs());
    let mut a = vec![0usize; n];
    let mut best: Option<(u64, Vec<usize>)> = None;
    loop {
        if instance.is_feasible_assignment(&a) {
            let c = instance.assignment_cost(&a);
            if best.as_ref().is_none_or(|(b, _)| c < *b) {
                best = Some((c, a.clone()));
            }
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            if a[pos] + 1 < m {
                a[pos] += 1;
                break;
            }
            a[pos] = 0;
        }
    }
}

/// `q(lambda)`: every subproblem solved exactly and summed.
pub fn dual_function_oracle(problem: &SeparableProblem, multipliers: &[f64]) -> Result<f64> {
    full_pass(
        problem,
        multipliers,
        &SolverLimits::default(),
        Execution::Sequential,
    )
    .map(|(_, q)| q)
}

/// Maximizes `q` over the grid `lo + step * k` in every coordinate.
///
/// Returns the first maximizer in lexicographic grid order and its value.
pub fn dual_grid_search(
    problem: &SeparableProblem,
    lo: f64,
    hi: f64,
    step: f64,
    exec: Execution,
) -> Result<(Vec<f64>, f64)> {
    if !(step > 0.0) || hi < lo {
        return Err(Error::Validation("grid needs step > 0 and hi >= lo".into()));
    }
    let m = problem.row_count();
    let per_dim = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let total = per_dim
        .checked_pow(m as u32)
        .filter(|&t| t <= 50_000_000)
        .ok_or_else(|| Error::OracleRefused("grid too large".into()))?;
    let point = |mut idx: usize| -> Vec<f64> {
        let mut lam = vec![0.0; m];
        for r in (0..m).rev() {
            lam[r] = lo + (idx % per_dim) as f64 * step;
            idx /= per_dim;
        }
        lam
    };
    let values =
        parallel::try_map_range(exec, total, |k| dual_function_oracle(problem, &point(k)))?;
    let (best_k, best_q) =
        values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bk, bq), (k, &q)| {
                if q > bq {
                    (k, q)
                } else {
                    (bk, bq)
                }
            });
    Ok((point(best_k), best_q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example1::example1;
    use crate::model::gap::gap_to_separable;
    use proptest::prelude::*;

    #[test]
    fn uncapacitated_gap_picks_cheaper_machine() {
        let inst = GapInstance::new(
            vec![vec![3, 5], vec![4, 1], vec![2, 7]],
            vec![vec![1, 1]; 3],
            vec![3, 3],
        )
        .unwrap();
        let p = gap_to_separable(&inst).unwrap();
        let out = exact_primal_oracle(&p, &OracleLimits::default()).unwrap();
        assert_eq!(out.value(), Some(3.0 + 1.0 + 2.0));
    }

    #[test]
    fn infeasible_gap_is_reported() {
        // each job fits somewhere alone, but not all three together
        let inst = GapInstance::new(vec![vec![1, 1]; 3], vec![vec![2, 2]; 3], vec![2, 2]).unwrap();
        let p = gap_to_separable(&inst).unwrap();
        assert!(matches!(
            exact_primal_oracle(&p, &OracleLimits::default()).unwrap(),
            OracleOutcome::Infeasible { .. }
        ));
    }

    #[test]
    fn random_3x8_matches_exhaustive_enumeration() {
        for seed in 0..20 {
            let inst = GapInstance::type_d(3, 8, seed).unwrap();
            let p = gap_to_separable(&inst).unwrap();
            let bnb = exact_primal_oracle(&p, &OracleLimits::default())
                .unwrap()
                .value();
            let brute = gap_brute_force(&inst).map(|(c, _)| c as f64);
            assert_eq!(bnb, brute, "seed {seed}");
        }
    }

    #[test]
    fn example1_refuses_plain_enumeration() {
        assert!(matches!(
            exact_primal_oracle(&example1(), &OracleLimits::default()),
            Err(Error::OracleRefused(_))
        ));
    }

    #[test]
    fn example1_dual_grid_maximum() {
        let p = example1();
        let (lam, q) = dual_grid_search(&p, 0.0, 2.0, 0.01, Execution::Parallel).unwrap();
        assert!((lam[0] - 0.6).abs() < 1e-12 && lam[1] == 0.0, "{lam:?}");
        assert!((q - 15.6).abs() < 1e-9);
        assert!((dual_function_oracle(&p, &[0.6, 0.0]).unwrap() - q).abs() < 1e-12);
    }

    #[test]
    fn enumeration_refusal_and_small_box() {
        let inst = GapInstance::type_d(2, 5, 3).unwrap();
        let p = gap_to_separable(&inst).unwrap();
        assert!(matches!(
            enumerate_primal(&p, 100),
            Err(Error::OracleRefused(_))
        ));
        let e = enumerate_primal(&p, 1 << 12).unwrap().value();
        let b = gap_brute_force(&inst).map(|(c, _)| c as f64);
        assert_eq!(e, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn generic_and_gap_oracles_agree(seed in 0u64..10_000, m in 2usize..=3, n in 1usize..=4) {
            // small enough for plain enumeration over 2^(M*N) binary vectors
            let inst = GapInstance::type_d(m, n, seed).unwrap();
            let p = gap_to_separable(&inst).unwrap();
            let generic = enumerate_primal(&p, 1 << 12).unwrap().value();
            let bnb = exact_primal_oracle(&p, &OracleLimits::default()).unwrap().value();
            prop_assert_eq!(generic, bnb);
        }

        #[test]
        fn gap_optimum_invariant_under_permutation(seed in 0u64..10_000, n in 2usize..=12, rot in 0usize..12) {
            let inst = GapInstance::type_d(3, n, seed).unwrap();
            let jobs: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
            let machines = vec![2, 0, 1];
            let perm = inst.permuted(&jobs, &machines).unwrap();
            let a = gap_exact(&inst, 10_000_000).unwrap();
            let b = gap_exact(&perm, 10_000_000).unwrap();
            let cost = |g: &GapExact| match g { GapExact::Optimal { cost, .. } => Some(*cost), _ => None };
            prop_assert_eq!(cost(&a), cost(&b));
            prop_assert_eq!(cost(&a), gap_brute_force(&inst).map(|(c, _)| c));
        }

        #[test]
        fn dual_is_concave_along_segments(
            a in prop::collection::vec(0.0f64..2.0, 2),
            b in prop::collection::vec(0.0f64..2.0, 2),
        ) {
            let p = example1();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let qa = dual_function_oracle(&p, &a).unwrap();
            let qb = dual_function_oracle(&p, &b).unwrap();
            let qm = dual_function_oracle(&p, &mid).unwrap();
            prop_assert!(qm >= 0.5 * (qa + qb) - 1e-9);
            prop_assert!(qa <= 16.0 + 1e-9, "weak duality against the primal optimum 16");
        }
    }
}
