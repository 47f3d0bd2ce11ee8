//! Turning relaxed solutions into feasible ones, and gap reporting.

use crate::engine::RunTrace;
use crate::error::{Error, Result};
use crate::model::{CompositeSolution, GapInstance, SmallMilpInstance};
use crate::subproblem::oracle::gap_branch_and_bound;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepairOptions {
    /// Node budget of each residual branch-and-bound.
    pub node_cap: u64,
    /// Eviction rounds when the residual is infeasible; round `r` unfixes
    /// the `2^r` cheapest-to-move clean jobs.
    pub eviction_rounds: usize,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions {
            node_cap: 1_000_000,
            eviction_rounds: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairStatus {
    Repaired,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub status: RepairStatus,
    /// Machine of each job, when repaired.
    pub assignment: Option<Vec<usize>>,
    pub feasible_cost: Option<u64>,
    pub lower_bound: Option<f64>,
    /// `(UB - LB) / UB` in percent, rounded to four decimals.
    pub gap_percent: Option<f64>,
    /// Jobs assigned zero or several times in the relaxed solution.
    pub conflicted_jobs: usize,
    /// Jobs whose final machine is not exactly their relaxed assignment.
    pub adjusted_jobs: usize,
    pub evicted_jobs: usize,
    /// `false` when branch-and-bound hit its node cap and greedy completion was used.
    pub residual_exact: bool,
    pub wall_secs: f64,
}

/// Per job, the machines whose relaxed part selects it.
pub fn assignment_sets(
    instance: &GapInstance,
    composite: &CompositeSolution,
) -> Result<Vec<Vec<usize>>> {
    if composite.part_count() != instance.machines() {
        return Err(Error::Dimension {
            what: "composite parts",
            expected: instance.machines(),
            got: composite.part_count(),
        });
    }
    let mut sets = vec![Vec::new(); instance.jobs()];
    for j in 0..instance.machines() {
        let part = composite.part(j);
        if part.len() != instance.jobs() {
            return Err(Error::Dimension {
                what: "machine part",
                expected: instance.jobs(),
                got: part.len(),
            });
        }
        for (i, &x) in part.iter().enumerate() {
            if x == 1 {
                sets[i].push(j);
            }
        }
    }
    Ok(sets)
}

/// How attractive machine `j` is for job `i` during greedy completion (lower is better).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Desirability {
    Cost,
    Resource,
    /// Resource relative to the machine's full capacity.
    RelativeResource,
}

impl Desirability {
    const ALL: [Desirability; 3] = [
        Desirability::Cost,
        Desirability::Resource,
        Desirability::RelativeResource,
    ];

    fn score(self, instance: &GapInstance, i: usize, j: usize) -> f64 {
        match self {
            Desirability::Cost => instance.cost(i, j) as f64,
            Desirability::Resource => instance.resource(i, j) as f64,
            Desirability::RelativeResource => {
                instance.resource(i, j) as f64 / instance.capacity()[j].max(1) as f64
            }
        }
    }
}

/// Score and machine.
type Ranked = Option<(f64, usize)>;

/// Best and second-best fitting machines of job `i` under `measure`.
fn two_best(
    instance: &GapInstance,
    i: usize,
    remaining: &[u64],
    measure: Desirability,
) -> (Ranked, Ranked) {
    let mut best: Ranked = None;
    let mut second: Ranked = None;
    for (j, &room) in remaining.iter().enumerate() {
        if instance.resource(i, j) > room {
            continue;
        }
        // ties broken by cost, then machine index
        let key = (measure.score(instance, i, j), instance.cost(i, j), j);
        let better =
            |o: &Ranked| o.is_none_or(|(f, b)| (key.0, key.1, key.2) < (f, instance.cost(i, b), b));
        if better(&best) {
            second = best;
            best = Some((key.0, j));
        } else if better(&second) {
            second = Some((key.0, j));
        }
    }
    (best, second)
}

/// Regret greedy: repeatedly place the job whose best machine is most
/// preferable to its second best.
fn regret_greedy(
    instance: &GapInstance,
    jobs: &[usize],
    capacity: &[u64],
    measure: Desirability,
) -> Option<Vec<usize>> {
    let mut remaining = capacity.to_vec();
    let mut placed = vec![usize::MAX; jobs.len()];
    let mut cache: Vec<_> = jobs
        .iter()
        .map(|&i| two_best(instance, i, &remaining, measure))
        .collect();
    let mut open: Vec<usize> = (0..jobs.len()).collect();
    while !open.is_empty() {
        let mut pick: Option<(usize, f64)> = None;
        for (pos, &k) in open.iter().enumerate() {
            let regret = match cache[k] {
                (None, _) => return None,
                (Some(_), None) => f64::INFINITY,
                (Some((a, _)), Some((b, _))) => b - a,
            };
            if pick.is_none_or(|(_, r)| regret > r) {
                pick = Some((pos, regret));
            }
        }
        let (pos, _) = pick.expect("open is nonempty");
        let k = open.swap_remove(pos);
        let i = jobs[k];
        let j = cache[k].0.expect("checked above").1;
        remaining[j] -= instance.resource(i, j);
        placed[k] = j;
        for &o in &open {
            let uses = |x: Ranked| x.is_some_and(|(_, m)| m == j);
            if (uses(cache[o].0) || uses(cache[o].1))
                && instance.resource(jobs[o], j) > remaining[j]
            {
                cache[o] = two_best(instance, jobs[o], &remaining, measure);
            }
        }
    }
    Some(placed)
}

/// Moves single jobs to cheaper machines with room until none helps.
fn shift_improve(instance: &GapInstance, jobs: &[usize], capacity: &[u64], placed: &mut [usize]) {
    let mut remaining = capacity.to_vec();
    for (k, &i) in jobs.iter().enumerate() {
        remaining[placed[k]] -= instance.resource(i, placed[k]);
    }
    loop {
        let mut moved = false;
        for (k, &i) in jobs.iter().enumerate() {
            let cur = placed[k];
            let target = (0..instance.machines())
                .filter(|&j| {
                    instance.cost(i, j) < instance.cost(i, cur)
                        && instance.resource(i, j) <= remaining[j]
                })
                .min_by_key(|&j| (instance.cost(i, j), j));
            if let Some(j) = target {
                remaining[cur] += instance.resource(i, cur);
                remaining[j] -= instance.resource(i, j);
                placed[k] = j;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Greedy completion of `jobs` within `capacity`: the cheapest result of
/// regret greedy under several desirability measures, each followed by
/// single-job shifts.
fn greedy_complete(
    instance: &GapInstance,
    jobs: &[usize],
    capacity: &[u64],
) -> Option<(u64, Vec<usize>)> {
    Desirability::ALL
        .into_iter()
        .filter_map(|measure| {
            let mut placed = regret_greedy(instance, jobs, capacity, measure)?;
            shift_improve(instance, jobs, capacity, &mut placed);
            let cost = jobs
                .iter()
                .zip(&placed)
                .map(|(&i, &j)| instance.cost(i, j))
                .sum::<u64>();
            Some((cost, placed))
        })
        .min_by_key(|(cost, _)| *cost)
}

struct Residual {
    best: Option<(u64, Vec<usize>)>,
    exact: bool,
}

/// Best assignment of `jobs` within `capacity`: greedy as incumbent, then
/// branch-and-bound for anything strictly cheaper.
fn solve_residual(
    instance: &GapInstance,
    jobs: &[usize],
    capacity: &[u64],
    node_cap: u64,
) -> Residual {
    let greedy = greedy_complete(instance, jobs, capacity);
    let out = gap_branch_and_bound(
        instance,
        jobs,
        capacity,
        node_cap,
        greedy.as_ref().map(|g| g.0),
    );
    Residual {
        best: out.best.or(greedy),
        exact: out.complete,
    }
}

/// Repairs a relaxed GAP solution.
///
/// Jobs selected by exactly one machine stay there; the others are assigned
/// by an exact residual solve within the leftover capacities. If that
/// residual is infeasible, the clean jobs that are cheapest to move are
/// released in growing batches.
pub fn repair_gap(
    instance: &GapInstance,
    composite: &CompositeSolution,
    lower_bound: Option<f64>,
    options: &RepairOptions,
) -> Result<RepairReport> {
    let started = Instant::now();
    let sets = assignment_sets(instance, composite)?;
    let conflicted: Vec<usize> = (0..instance.jobs())
        .filter(|&i| sets[i].len() != 1)
        .collect();
    let mut clean: Vec<usize> = (0..instance.jobs())
        .filter(|&i| sets[i].len() == 1)
        .collect();
    // cheapest to move first: second-best fitting cost minus current cost
    let move_cost = |i: usize| -> i64 {
        let cur = sets[i][0];
        (0..instance.machines())
            .filter(|&j| j != cur && instance.resource(i, j) <= instance.capacity()[j])
            .map(|j| instance.cost(i, j) as i64 - instance.cost(i, cur) as i64)
            .min()
            .unwrap_or(i64::MAX)
    };
    clean.sort_by_key(|&i| (move_cost(i), i));

    let mut evicted = 0usize;
    let mut exact = true;
    let mut result: Option<Vec<usize>> = None;
    for round in 0..=options.eviction_rounds {
        evicted = if round == 0 {
            0
        } else {
            (1usize << (round - 1).min(40)).min(clean.len())
        };
        let (released, fixed) = clean.split_at(evicted);
        let mut capacity = instance.capacity().to_vec();
        let mut machine_of = vec![usize::MAX; instance.jobs()];
        for &i in fixed {
            let j = sets[i][0];
            capacity[j] = capacity[j]
                .checked_sub(instance.resource(i, j))
                .ok_or_else(|| {
                    Error::Validation(format!("machine {j} overloaded by its relaxed part"))
                })?;
            machine_of[i] = j;
        }
        let jobs: Vec<usize> = conflicted.iter().chain(released).copied().collect();
        let residual = solve_residual(instance, &jobs, &capacity, options.node_cap);
        exact &= residual.exact;
        if let Some((_, placed)) = residual.best {
            for (k, &i) in jobs.iter().enumerate() {
                machine_of[i] = placed[k];
            }
            result = Some(machine_of);
            break;
        }
        if evicted == clean.len() {
            break;
        }
    }

    let wall_secs = started.elapsed().as_secs_f64();
    let Some(machine_of) = result else {
        return Ok(RepairReport {
            status: RepairStatus::Failed,
            assignment: None,
            feasible_cost: None,
            lower_bound,
            gap_percent: None,
            conflicted_jobs: conflicted.len(),
            adjusted_jobs: 0,
            evicted_jobs: evicted,
            residual_exact: exact,
            wall_secs,
        });
    };
    debug_assert!(instance.is_feasible_assignment(&machine_of));
    let cost = instance.assignment_cost(&machine_of);
    let adjusted = (0..instance.jobs())
        .filter(|&i| sets[i].as_slice() != [machine_of[i]])
        .count();
    let gap_percent = match lower_bound {
        Some(lb) => Some(relative_gap_percent(cost as f64, lb)?),
        None => None,
    };
    Ok(RepairReport {
        status: RepairStatus::Repaired,
        assignment: Some(machine_of),
        feasible_cost: Some(cost),
        lower_bound,
        gap_percent,
        conflicted_jobs: conflicted.len(),
        adjusted_jobs: adjusted,
        evicted_jobs: evicted,
        residual_exact: exact,
        wall_secs,
    })
}

/// Repairs the relaxed solutions kept in a trace (final, best exact and the
/// least-violating pool) and returns the cheapest result, with the trace's
/// certified lower bound.
pub fn repair_from_trace(
    instance: &GapInstance,
    trace: &RunTrace,
    options: &RepairOptions,
) -> Result<RepairReport> {
    let started = Instant::now();
    let candidates = [
        Some(&trace.final_solution),
        trace.final_exact_solution.as_ref(),
        trace.best_exact_solution.as_ref(),
    ];
    let mut best: Option<RepairReport> = None;
    let mut seen: Vec<&CompositeSolution> = Vec::new();
    for c in candidates.into_iter().flatten().chain(&trace.candidates) {
        if seen.iter().any(|s| s.parts() == c.parts()) {
            continue;
        }
        seen.push(c);
        let report = repair_gap(instance, c, trace.certified_lb, options)?;
        let better = match (&best, report.feasible_cost) {
            (None, _) => true,
            (Some(b), Some(cost)) => b.feasible_cost.is_none_or(|bc| cost < bc),
            (Some(_), None) => false,
        };
        if better {
            best = Some(report);
        }
    }
    let mut report = best.expect("the final solution is always a candidate");
    report.wall_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Covering repair of every relaxed solution kept in a trace; the cheapest
/// result wins.
pub fn repair_covering_from_trace(
    instance: &SmallMilpInstance,
    trace: &RunTrace,
) -> Result<(Vec<i64>, f64)> {
    let candidates = [
        Some(&trace.final_solution),
        trace.final_exact_solution.as_ref(),
        trace.best_exact_solution.as_ref(),
    ];
    let mut best: Option<(Vec<i64>, f64)> = None;
    for c in candidates.into_iter().flatten().chain(&trace.candidates) {
        let (x, cost) = repair_covering(instance, &c.flatten())?;
        if best.as_ref().is_none_or(|(_, b)| cost < *b) {
            best = Some((x, cost));
        }
    }
    Ok(best.expect("the final solution is always a candidate"))
}

/// `(UB - LB) / UB * 100`, rounded to four decimals.
pub fn relative_gap_percent(upper: f64, lower: f64) -> Result<f64> {
    if !upper.is_finite() || !lower.is_finite() {
        return Err(Error::NonFinite("gap bounds"));
    }
    if upper < lower - 1e-9 {
        return Err(Error::BoundViolation { upper, lower });
    }
    if upper == 0.0 {
        return Ok(0.0);
    }
    let gap = ((upper - lower) / upper.abs() * 100.0).max(0.0);
    Ok((gap * 1e4).round() / 1e4)
}

/// Gap of `upper` against the trace's certified bound.
pub fn gap_metrics(upper: f64, trace: &RunTrace) -> Result<f64> {
    let lb = trace
        .certified_lb
        .ok_or_else(|| Error::MetricUnavailable("no exact dual value in the trace".into()))?;
    relative_gap_percent(upper, lb)
}

/// Covering repair for small programs with `>=` rows and nonnegative
/// coefficients: while a row is short, raise the variable with the lowest
/// cost per unit of total shortfall it covers.
pub fn repair_covering(instance: &SmallMilpInstance, x: &[i64]) -> Result<(Vec<i64>, f64)> {
    let n = instance.var_count();
    if x.len() != n {
        return Err(Error::Dimension {
            what: "solution",
            expected: n,
            got: x.len(),
        });
    }
    let mut x: Vec<i64> = x
        .iter()
        .zip(instance.lower.iter().zip(&instance.upper))
        .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
        .collect();
    loop {
        let short: Vec<usize> = (0..instance.rows.len())
            .filter(|&r| {
                let (a, b) = &instance.rows[r];
                a.iter().zip(&x).map(|(a, &v)| a * v as f64).sum::<f64>() < *b - 1e-9
            })
            .collect();
        if short.is_empty() {
            break;
        }
        let pick = (0..n)
            .filter(|&v| x[v] < instance.upper[v])
            .filter_map(|v| {
                let cover: f64 = short.iter().map(|&r| instance.rows[r].0[v].max(0.0)).sum();
                (cover > 0.0).then(|| (instance.cost[v] / cover, v))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, v)) = pick else {
            return Err(Error::Validation(
                "covering rows cannot be satisfied within bounds".into(),
            ));
        };
        x[v] += 1;
    }
    let cost = instance
        .cost
        .iter()
        .zip(&x)
        .map(|(c, &v)| c * v as f64)
        .sum();
    Ok((x, cost))
}
