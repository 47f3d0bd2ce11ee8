//! Property suites that check the solver against independent oracles.
//!
//! Each suite returns a list of named checks; the command-line `verify`
//! subcommand and the acceptance tests both consume them.

use crate::detector::{
    build_halfspaces, lp_feasible, DetectorVariant, Feasibility, Halfspace, WindowEntry,
};
use crate::engine::{run, EngineConfig, InitialMultipliers, RunTrace, UpdateMode};
use crate::error::{Error, Result};
use crate::model::example1::{example1, OPTIMAL_MULTIPLIERS};
use crate::model::gap::gap_to_separable;
use crate::model::GapInstance;
use crate::parallel::{try_map_range, Execution};
use crate::repair::{repair_from_trace, RepairOptions};
use crate::stepsize::PolicyConfig;
use crate::subproblem::oracle::{dual_function_oracle, dual_grid_search, gap_brute_force};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Theorem1,
    DetectorEquivalence,
    LevelOverestimate,
    OracleParity,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Theorem1,
        Suite::DetectorEquivalence,
        Suite::LevelOverestimate,
        Suite::OracleParity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Theorem1 => "theorem1",
            Suite::DetectorEquivalence => "detector-equivalence",
            Suite::LevelOverestimate => "level-overestimate",
            Suite::OracleParity => "oracle-parity",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
                Error::Validation(format!(
                    "unknown suite `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// One named property with its verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

pub fn run_suite(suite: Suite, exec: Execution) -> Result<Vec<Check>> {
    match suite {
        Suite::Theorem1 => theorem1(exec),
        Suite::DetectorEquivalence => Ok(detector_equivalence(1000, 10_000, 7, exec)?.checks()),
        Suite::LevelOverestimate => Ok(level_overestimate(exec)?.checks()),
        Suite::OracleParity => Ok(oracle_parity(100, 500, 11, exec)?.checks()),
    }
}

/// `q(lambda*)` for Example 1, cross-checked against a grid search.
pub fn example1_dual_optimum(exec: Execution) -> Result<(f64, Vec<f64>, f64)> {
    let p = example1();
    let at_star = dual_function_oracle(&p, &OPTIMAL_MULTIPLIERS)?;
    let (arg, grid_best) = dual_grid_search(&p, 0.0, 2.0, 0.01, exec)?;
    Ok((at_star, arg, grid_best))
}

/// Iterations `k` with nonzero subgradient where the distance to `target`
/// did not strictly decrease.
pub fn distance_violations(trace: &RunTrace, target: &[f64]) -> Vec<usize> {
    trace
        .records
        .windows(2)
        .filter(|w| w[0].grad_norm() > 0.0 && w[1].distance_to(target) >= w[0].distance_to(target))
        .map(|w| w[0].k)
        .collect()
}

/// Window entries rebuilt from consecutive records, with the effective
/// (post-projection) direction.
pub fn window_from_trace(trace: &RunTrace) -> Vec<WindowEntry> {
    trace
        .records
        .windows(2)
        .filter_map(|w| {
            let s = w[0].step?;
            let raw_norm_sq = w[0].subgradient.iter().map(|g| g * g).sum();
            Some(WindowEntry {
                direction: w[1]
                    .multipliers
                    .iter()
                    .zip(&w[0].multipliers)
                    .map(|(a, b)| (a - b) / s)
                    .collect(),
                multipliers: w[0].multipliers.clone(),
                step: s,
                value: w[0].value,
                raw_norm_sq,
            })
        })
        .collect()
}

/// Polyak steps against the grid-search dual optimum move strictly closer
/// to `lambda*`, and the detector system built from such steps admits it.
pub fn theorem1(exec: Execution) -> Result<Vec<Check>> {
    let p = example1();
    let (_, _, q_star) = example1_dual_optimum(exec)?;
    let mut checks = Vec::new();

    let mut cfg =
        EngineConfig::slblr(0.1, 300).with_policy(PolicyConfig::Polyak { q_star, gamma: 1.0 });
    cfg.mode = UpdateMode::FullPass;
    cfg.detector = None;
    let exact = run(&p, cfg)?;
    let bad = distance_violations(&exact, &OPTIMAL_MULTIPLIERS);
    checks.push(Check::new(
        "polyak-full-pass-distance-decreases",
        bad.is_empty(),
        format!(
            "{} iterations, {} violations {:?}",
            exact.iterations(),
            bad.len(),
            first(&bad)
        ),
    ));

    let window = window_from_trace(&exact);
    let rows = build_halfspaces(&window);
    let star_inside = rows.iter().all(|h| h.contains(&OPTIMAL_MULTIPLIERS, 1e-9));
    let lp = lp_feasible(&rows)?;
    checks.push(Check::new(
        "converging-window-admits-optimum",
        star_inside && matches!(lp, Feasibility::Feasible { .. }),
        format!(
            "{} rows, lambda* inside: {star_inside}, lp: {}",
            rows.len(),
            verdict(&lp)
        ),
    ));

    let mut cfg = EngineConfig::slblr(0.1, 300).with_policy(PolicyConfig::SurrogatePolyak {
        q_star,
        gamma: None,
    });
    cfg.detector = None;
    let surrogate = run(&p, cfg)?;
    let bad = distance_violations(&surrogate, &OPTIMAL_MULTIPLIERS);
    checks.push(Check::new(
        "surrogate-polyak-distance-decreases",
        bad.is_empty(),
        format!(
            "{} iterations, {} violations {:?}",
            surrogate.iterations(),
            bad.len(),
            first(&bad)
        ),
    ));
    Ok(checks)
}

fn first(v: &[usize]) -> &[usize] {
    &v[..v.len().min(5)]
}

fn verdict(f: &Feasibility) -> String {
    match f {
        Feasibility::Feasible { .. } => "feasible".into(),
        Feasibility::Infeasible { margin } => format!("infeasible (margin {margin:.3e})"),
    }
}

/// Exact feasibility of `a . x >= c` by Fourier-Motzkin elimination.
///
/// Rows are rescaled to unit infinity norm after every combination; the
/// final constant rows `0 >= c` are accepted when `c <= tol`.
pub fn fourier_motzkin_feasible(rows: &[Halfspace], tol: f64) -> bool {
    let dim = rows.first().map_or(0, |r| r.normal.len());
    let normalize = |mut a: Vec<f64>, c: f64| -> (Vec<f64>, f64) {
        let scale = a.iter().fold(c.abs(), |m, v| m.max(v.abs()));
        if scale > 0.0 {
            a.iter_mut().for_each(|v| *v /= scale);
            (a, c / scale)
        } else {
            (a, c)
        }
    };
    let mut sys: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .map(|r| normalize(r.normal.clone(), r.offset))
        .collect();
    for v in 0..dim {
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for row in sys {
            if row.0[v] > 1e-12 {
                pos.push(row);
            } else if row.0[v] < -1e-12 {
                neg.push(row);
            } else {
                rest.push(row);
            }
        }
        for (pa, pc) in &pos {
            for (na, nc) in &neg {
                let (wp, wn) = (-na[v], pa[v]);
                let mut a: Vec<f64> = pa.iter().zip(na).map(|(p, n)| wp * p + wn * n).collect();
                a[v] = 0.0;
                rest.push(normalize(a, wp * pc + wn * nc));
            }
        }
        sys = rest;
    }
    sys.iter().all(|(_, c)| *c <= tol)
}

/// Random windows `lambda^{k+1} = lambda^k + s_k g_k` whose directions
/// lean towards a hidden point by a random weight, so that both converging
/// and oscillating windows occur.
fn random_window(rng: &mut ChaCha8Rng, dim: usize, len: usize) -> Vec<WindowEntry> {
    let target: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pull: f64 = rng.gen_range(0.0..1.0);
    let mut lambda: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut window = Vec::with_capacity(len);
    for _ in 0..len {
        let direction: Vec<f64> = lambda
            .iter()
            .zip(&target)
            .map(|(l, t)| pull * (t - l) + (1.0 - pull) * rng.gen_range(-1.0..1.0))
            .collect();
        let step = rng.gen_range(0.05..1.5);
        let entry = WindowEntry {
            raw_norm_sq: direction.iter().map(|g| g * g).sum(),
            multipliers: lambda.clone(),
            direction,
            step,
            value: 0.0,
        };
        lambda = entry.next();
        window.push(entry);
    }
    window
}

/// Distance form of the convergence condition for one step.
fn moves_closer(e: &WindowEntry, x: &[f64], tol: f64) -> bool {
    let next = e.next();
    let d_next: f64 = x.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum();
    let d_prev: f64 = x
        .iter()
        .zip(&e.multipliers)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    d_next <= d_prev + tol
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorEquivalence {
    pub windows: usize,
    pub feasible: usize,
    pub agreements: usize,
    /// Windows whose simplex witness fails the distance form.
    pub bad_witnesses: usize,
    pub samples: usize,
    /// Samples where halfspace and distance membership disagree.
    pub sample_mismatches: usize,
}

impl DetectorEquivalence {
    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::new(
                "simplex-agrees-with-elimination",
                self.agreements == self.windows,
                format!(
                    "{}/{} windows agree ({} feasible, {} infeasible)",
                    self.agreements,
                    self.windows,
                    self.feasible,
                    self.windows - self.feasible
                ),
            ),
            Check::new(
                "both-outcomes-sampled",
                self.feasible > 0 && self.feasible < self.windows,
                format!("{} feasible of {}", self.feasible, self.windows),
            ),
            Check::new(
                "witness-moves-closer",
                self.bad_witnesses == 0,
                format!("{} witnesses fail the distance form", self.bad_witnesses),
            ),
            Check::new(
                "halfspace-equals-distance-form",
                self.sample_mismatches == 0,
                format!(
                    "{} of {} samples disagree",
                    self.sample_mismatches, self.samples
                ),
            ),
        ]
    }
}

/// Compares the simplex verdict on the halfspace form with Fourier-Motzkin
/// elimination over random windows (dimension 1-4, length 1-6), and the
/// halfspace form with the distance form on `samples` random points of a
/// 3-D window.
pub fn detector_equivalence(
    windows: usize,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<DetectorEquivalence> {
    let per_window = try_map_range(exec, windows, |w| -> Result<(bool, bool, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(w as u64 + 1);
        let dim = rng.gen_range(1..=4);
        let len = rng.gen_range(1..=6);
        let window = random_window(&mut rng, dim, len);
        let rows = build_halfspaces(&window);
        let lp = lp_feasible(&rows)?;
        let fm = fourier_motzkin_feasible(&rows, 1e-9);
        let (feasible, witness_ok) = match &lp {
            Feasibility::Feasible { witness } => {
                (true, window.iter().all(|e| moves_closer(e, witness, 1e-7)))
            }
            Feasibility::Infeasible { .. } => (false, true),
        };
        Ok((feasible, feasible == fm, witness_ok))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = random_window(&mut rng, 3, 6);
    let rows = build_halfspaces(&window);
    let mut mismatches = 0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
        for (e, h) in window.iter().zip(&rows) {
            if h.contains(&x, 0.0) != moves_closer(e, &x, 0.0) {
                // exact ties are measure zero; count only clear disagreements
                let slack = h.normal.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - h.offset;
                if slack.abs() > 1e-9 {
                    mismatches += 1;
                }
            }
        }
    }
    Ok(DetectorEquivalence {
        windows,
        feasible: per_window.iter().filter(|r| r.0).count(),
        agreements: per_window.iter().filter(|r| r.1).count(),
        bad_witnesses: per_window.iter().filter(|r| !r.2).count(),
        samples,
        sample_mismatches: mismatches,
    })
}

/// One Example-1 SLBLR run for a given `gamma`.
#[derive(Debug, Clone)]
pub struct Example1Run {
    pub gamma: f64,
    pub trace: RunTrace,
    /// First iteration with `|lambda - lambda*| < 1e-2`.
    pub reached: Option<usize>,
}

/// SLBLR from `lambda = 0` with `s0 = 0.1` and the linear detector.
pub fn example1_run(gamma: f64, max_iterations: usize) -> Result<Example1Run> {
    let p = example1();
    let cfg = EngineConfig::slblr(0.1, max_iterations).with_policy(PolicyConfig::Slblr {
        gamma: Some(gamma),
        zeta: 1.0 / 1.5,
        level_form: Default::default(),
    });
    let trace = run(&p, cfg)?;
    let reached = trace
        .records
        .iter()
        .find(|r| r.distance_to(&OPTIMAL_MULTIPLIERS) < 1e-2)
        .map(|r| r.k);
    Ok(Example1Run {
        gamma,
        trace,
        reached,
    })
}

pub const EXAMPLE1_GAMMAS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

#[derive(Debug, Clone)]
pub struct LevelOverestimate {
    pub q_star: f64,
    pub grid_argmax: Vec<f64>,
    pub grid_best: f64,
    pub runs: Vec<Example1Run>,
}

impl LevelOverestimate {
    /// Smallest `level - q*` over detector firings (non-degenerate events).
    pub fn firing_margin(&self) -> Option<f64> {
        self.runs
            .iter()
            .flat_map(|r| r.trace.level_events.iter().filter(|e| !e.degenerate))
            .map(|e| e.level - self.q_star)
            .reduce(f64::min)
    }

    pub fn firings(&self) -> usize {
        self.runs
            .iter()
            .map(|r| {
                r.trace
                    .level_events
                    .iter()
                    .filter(|e| !e.degenerate)
                    .count()
            })
            .sum()
    }

    pub fn checks(&self) -> Vec<Check> {
        let margin = self.firing_margin();
        vec![
            Check::new(
                "grid-oracle-confirms-optimum",
                (self.grid_best - self.q_star).abs() <= 1e-9,
                format!(
                    "q(lambda*) = {}, grid max {} at {:?}",
                    self.q_star, self.grid_best, self.grid_argmax
                ),
            ),
            Check::new(
                "levels-exceed-dual-optimum",
                margin.is_some_and(|m| m > 1e-9),
                format!(
                    "{} firings, smallest level - q* = {margin:?}",
                    self.firings()
                ),
            ),
        ]
    }
}

/// Runs the Example-1 gamma sweep and compares every inferred level with
/// the oracle dual optimum.
pub fn level_overestimate(exec: Execution) -> Result<LevelOverestimate> {
    let (q_star, grid_argmax, grid_best) = example1_dual_optimum(exec)?;
    let runs = try_map_range(exec, EXAMPLE1_GAMMAS.len(), |i| {
        example1_run(EXAMPLE1_GAMMAS[i], 1000)
    })?;
    Ok(LevelOverestimate {
        q_star,
        grid_argmax,
        grid_best,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityCase {
    pub machines: usize,
    pub jobs: usize,
    pub seed: u64,
    pub optimum: Option<u64>,
    pub upper: Option<u64>,
    pub lower: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleParity {
    pub cases: Vec<ParityCase>,
}

impl OracleParity {
    /// Feasible cases where the repaired cost is at least the optimum and
    /// the certified bound at most the optimum.
    pub fn consistent(&self) -> usize {
        self.cases
            .iter()
            .filter(|c| match (c.optimum, c.upper) {
                (Some(opt), Some(ub)) => {
                    ub >= opt && c.lower.is_some_and(|lb| lb <= opt as f64 + 1e-9)
                }
                (None, None) => true,
                _ => false,
            })
            .count()
    }

    pub fn matched(&self) -> usize {
        self.cases
            .iter()
            .filter(|c| c.optimum.is_some() && c.optimum == c.upper)
            .count()
    }

    pub fn match_rate(&self) -> f64 {
        self.matched() as f64 / self.cases.len().max(1) as f64
    }

    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::new(
                "bounds-bracket-optimum",
                self.consistent() == self.cases.len(),
                format!(
                    "{}/{} instances consistent",
                    self.consistent(),
                    self.cases.len()
                ),
            ),
            Check::new(
                "repair-finds-optimum-often",
                self.match_rate() >= 0.6,
                format!(
                    "{}/{} repaired costs optimal",
                    self.matched(),
                    self.cases.len()
                ),
            ),
        ]
    }
}

/// SLBLR on `count` random type-D instances with 2-3 machines and 4-10
/// jobs, repaired and compared with exhaustive enumeration.
pub fn oracle_parity(
    count: usize,
    iterations: usize,
    seed: u64,
    exec: Execution,
) -> Result<OracleParity> {
    let cases = try_map_range(exec, count, |i| -> Result<ParityCase> {
        let machines = 2 + i % 2;
        let jobs = 4 + (i / 2) % 7;
        let inst_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let inst = GapInstance::type_d(machines, jobs, inst_seed)?;
        let p = gap_to_separable(&inst)?;
        let mut cfg = EngineConfig::slblr(0.5, iterations);
        cfg.initial = InitialMultipliers::Constant { value: 101.0 };
        cfg.detector = Some(DetectorVariant::Linear);
        let trace = run(&p, cfg)?;
        let report = repair_from_trace(&inst, &trace, &RepairOptions::default())?;
        Ok(ParityCase {
            machines,
            jobs,
            seed: inst_seed,
            optimum: gap_brute_force(&inst).map(|(c, _)| c),
            upper: report.feasible_cost,
            lower: trace.certified_lb,
        })
    })?;
    Ok(OracleParity { cases })
}
