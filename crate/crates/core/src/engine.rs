//! The coordination loop.
//!
//! Each iteration takes a multiplier step along the surrogate subgradient of
//! the current composite solution, then refreshes part of that composite at
//! the new multipliers. In interleaved mode one subproblem is solved per
//! iteration (round-robin); if that does not lower the Lagrangian at the new
//! multipliers, the following subproblems are solved too, up to a full pass.

use crate::detector::{step_level, Detector, DetectorOutcome, DetectorVariant, WindowEntry};
use crate::error::{Error, Result};
use crate::model::{CompositeSolution, Sense, SeparableProblem};
use crate::parallel::Execution;
use crate::stepsize::{PolicyConfig, PolicyState, StepContext, StepDecision};
use crate::subproblem::{full_pass, solve_subproblem, SolverLimits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialMultipliers {
    Constant { value: f64 },
    Vector { values: Vec<f64> },
    Uniform { lo: f64, hi: f64, seed: u64 },
}

impl InitialMultipliers {
    /// Materializes `lambda^0`, projecting inequality components onto `>= 0`.
    pub fn materialize(&self, senses: &[Sense]) -> Result<Vec<f64>> {
        let m = senses.len();
        let raw = match self {
            InitialMultipliers::Constant { value } => vec![*value; m],
            InitialMultipliers::Vector { values } => {
                if values.len() != m {
                    return Err(Error::Dimension {
                        what: "initial multipliers",
                        expected: m,
                        got: values.len(),
                    });
                }
                values.clone()
            }
            InitialMultipliers::Uniform { lo, hi, seed } => {
                if !(lo <= hi) {
                    return Err(Error::Validation(format!(
                        "empty multiplier range [{lo}, {hi}]"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..m).map(|_| rng.gen_range(*lo..=*hi)).collect()
            }
        };
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial multipliers"));
        }
        Ok(project(raw, senses))
    }
}

/// What happens when a single solve does not satisfy the surrogate condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionFallback {
    /// Keep solving the following subproblems, up to a full pass.
    #[default]
    ContinuePass,
    /// Accept the candidate and halve the next stepsize.
    HalveStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    Interleaved,
    FullPass,
    /// Per-subproblem multiplier updates with targets `beta_i`, `sum beta_i = b`;
    /// `None` means `b / I` for every subproblem.
    Incremental {
        targets: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub initial: InitialMultipliers,
    pub initial_step: f64,
    pub max_iterations: usize,
    pub step_floor: f64,
    pub fallback: ConditionFallback,
    pub mode: UpdateMode,
    pub policy: PolicyConfig,
    pub detector: Option<DetectorVariant>,
    /// Exact dual evaluation every this many iterations; `None` means every
    /// `I` iterations outside full-pass mode.
    pub exact_every: Option<usize>,
    /// How many exact relaxed solutions with the smallest coupling
    /// violation the trace keeps for repair.
    #[serde(default = "default_candidate_pool")]
    pub candidate_pool: usize,
    #[serde(skip)]
    pub execution: Execution,
    #[serde(skip)]
    pub limits: SolverLimits,
}

fn default_candidate_pool() -> usize {
    16
}

impl EngineConfig {
    /// SLBLR with the linear detector, `lambda^0 = 0`.
    pub fn slblr(initial_step: f64, max_iterations: usize) -> Self {
        EngineConfig {
            initial: InitialMultipliers::Constant { value: 0.0 },
            initial_step,
            max_iterations,
            step_floor: 1e-10,
            fallback: ConditionFallback::ContinuePass,
            mode: UpdateMode::Interleaved,
            policy: PolicyConfig::slblr_default(),
            detector: Some(DetectorVariant::Linear),
            exact_every: None,
            candidate_pool: default_candidate_pool(),
            execution: Execution::Sequential,
            limits: SolverLimits::default(),
        }
    }

    pub fn with_policy(mut self, policy: PolicyConfig) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Validation(format!(
                "initial stepsize must be positive, got {}",
                self.initial_step
            )));
        }
        if !(self.step_floor >= 0.0) {
            return Err(Error::Validation(
                "stepsize floor must be nonnegative".into(),
            ));
        }
        if self.exact_every == Some(0) {
            return Err(Error::Validation(
                "exact evaluation cadence must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxIterations,
    StepFloor,
    ZeroSubgradient,
    /// The known optimal dual value was reached.
    LevelReached,
    /// A full pass could not improve and the multipliers did not move.
    SurrogateConditionUnattainable,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::MaxIterations => "max-iterations",
            Termination::StepFloor => "step-floor",
            Termination::ZeroSubgradient => "zero-subgradient",
            Termination::LevelReached => "level-reached",
            Termination::SurrogateConditionUnattainable => "surrogate-condition-unattainable",
        }
    }
}

/// State at iteration `k` and the step taken from it.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    pub multipliers: Vec<f64>,
    /// `s^k`; `None` for the final record.
    pub step: Option<f64>,
    pub subgradient: Vec<f64>,
    /// `L^k` at the composite solution.
    pub value: f64,
    /// `q(lambda^k)` when an exact pass was evaluated here.
    pub exact_dual: Option<f64>,
    /// Subproblems solved to produce the composite of this record.
    pub solved: Vec<usize>,
    /// Level used for `s^k`.
    pub level: Option<f64>,
    pub detector_fired: bool,
    pub elapsed_secs: f64,
}

impl IterateRecord {
    pub fn grad_norm(&self) -> f64 {
        self.subgradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn distance_to(&self, reference: &[f64]) -> f64 {
        self.multipliers
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEvent {
    pub j: usize,
    /// Iteration whose step completed the window.
    pub k: usize,
    pub level: f64,
    pub window_start: usize,
    pub window_len: usize,
    /// Set when the level was refreshed because `L` overtook it.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<IterateRecord>,
    pub level_events: Vec<LevelEvent>,
    pub best_value: f64,
    /// Largest exact dual value evaluated; a valid lower bound.
    pub certified_lb: Option<f64>,
    pub best_exact_multipliers: Option<Vec<f64>>,
    /// Exact relaxed solution at `best_exact_multipliers`.
    pub best_exact_solution: Option<CompositeSolution>,
    pub final_solution: CompositeSolution,
    pub final_exact_solution: Option<CompositeSolution>,
    /// Exact relaxed solutions with the smallest squared coupling
    /// violation, most feasible first.
    pub candidates: Vec<CompositeSolution>,
    pub termination: Termination,
    pub subproblem_solves: usize,
    pub wall_secs: f64,
}

impl RunTrace {
    pub fn final_record(&self) -> &IterateRecord {
        self.records
            .last()
            .expect("a trace always has its initial record")
    }

    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }
}

/// `lambda + s g`, with inequality components clipped at zero.
pub fn update_multipliers(
    multipliers: &[f64],
    step: f64,
    subgradient: &[f64],
    senses: &[Sense],
) -> Result<Vec<f64>> {
    if multipliers.len() != subgradient.len() || senses.len() != subgradient.len() {
        return Err(Error::Dimension {
            what: "multiplier update",
            expected: multipliers.len(),
            got: subgradient.len().min(senses.len()),
        });
    }
    if !step.is_finite()
        || subgradient
            .iter()
            .chain(multipliers)
            .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("multiplier update"));
    }
    if !(step > 0.0) {
        return Err(Error::Validation(format!(
            "stepsize must be positive, got {step}"
        )));
    }
    let raw = multipliers
        .iter()
        .zip(subgradient)
        .map(|(l, g)| l + step * g)
        .collect();
    Ok(project(raw, senses))
}

fn project(mut v: Vec<f64>, senses: &[Sense]) -> Vec<f64> {
    for (x, s) in v.iter_mut().zip(senses) {
        if *s == Sense::LessEqual && *x < 0.0 {
            *x = 0.0;
        }
    }
    v
}

/// `L(candidate, lambda) < L(previous, lambda)`.
pub fn surrogate_condition_holds(
    problem: &SeparableProblem,
    previous: &CompositeSolution,
    candidate: &CompositeSolution,
    multipliers: &[f64],
) -> Result<bool> {
    Ok(problem.evaluate_lagrangian(candidate, multipliers)?
        < problem.evaluate_lagrangian(previous, multipliers)?)
}

/// `psi_i = psi_{i-1} + s (A_i x_i - beta_i)`, projected.
pub fn incremental_update(
    psi: &[f64],
    contribution: &[f64],
    step: f64,
    target: &[f64],
    senses: &[Sense],
) -> Result<Vec<f64>> {
    if contribution.len() != target.len() {
        return Err(Error::Dimension {
            what: "incremental target",
            expected: contribution.len(),
            got: target.len(),
        });
    }
    let g: Vec<f64> = contribution
        .iter()
        .zip(target)
        .map(|(a, b)| a - b)
        .collect();
    update_multipliers(psi, step, &g, senses)
}

/// Checks `sum_i beta_i = b` within `1e-9`.
pub fn validate_targets(targets: &[Vec<f64>], rhs: &[f64]) -> Result<()> {
    for (r, &b) in rhs.iter().enumerate() {
        let sum: f64 = targets
            .iter()
            .map(|t| t.get(r).copied())
            .sum::<Option<f64>>()
            .ok_or(Error::Dimension {
                what: "incremental targets",
                expected: rhs.len(),
                got: targets.iter().map(Vec::len).min().unwrap_or(0),
            })?;
        if (sum - b).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "targets of row {r} sum to {sum}, expected {b}"
            )));
        }
    }
    Ok(())
}

/// Round-robin scheduling over `count` subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    count: usize,
    cursor: usize,
}

impl Schedule {
    pub fn new(count: usize) -> Self {
        Schedule { count, cursor: 0 }
    }

    pub fn next_subproblem(&mut self) -> usize {
        let i = self.cursor;
        self.cursor = (self.cursor + 1) % self.count;
        i
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Stepwise driver; [`run`] loops it to completion.
pub struct Engine<'p> {
    problem: &'p SeparableProblem,
    config: EngineConfig,
    senses: Vec<Sense>,
    policy: PolicyState,
    detector: Option<Detector>,
    gamma: Option<f64>,
    targets: Option<Vec<Vec<f64>>>,
    schedule: Schedule,
    multipliers: Vec<f64>,
    composite: CompositeSolution,
    value: f64,
    subgradient: Vec<f64>,
    previous: Option<(f64, f64)>,
    step_scale: f64,
    records: Vec<IterateRecord>,
    level_events: Vec<LevelEvent>,
    best_value: f64,
    certified_lb: Option<f64>,
    best_exact: Option<(Vec<f64>, CompositeSolution)>,
    last_exact: Option<(usize, CompositeSolution)>,
    candidates: Vec<(f64, CompositeSolution)>,
    solves: usize,
    started: Instant,
    termination: Option<Termination>,
}

impl<'p> Engine<'p> {
    pub fn new(problem: &'p SeparableProblem, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let senses = problem.senses();
        let multipliers = config.initial.materialize(&senses)?;
        let policy = config.policy.build(problem.subproblem_count())?;
        let gamma = match &policy {
            PolicyState::Slblr(s) => Some(s.gamma),
            _ => None,
        };
        let detector = match config.detector {
            Some(variant) => {
                let (g, form) = match &policy {
                    PolicyState::Slblr(s) => (s.gamma, s.level_form),
                    _ => (1.0 / problem.subproblem_count() as f64, Default::default()),
                };
                Some(Detector::new(variant, g, form)?)
            }
            None => None,
        };
        let targets = match &config.mode {
            UpdateMode::Incremental { targets } => {
                let rhs = problem.rhs();
                let t = targets.clone().unwrap_or_else(|| {
                    let share = 1.0 / problem.subproblem_count() as f64;
                    vec![rhs.iter().map(|b| b * share).collect(); problem.subproblem_count()]
                });
                if t.len() != problem.subproblem_count() {
                    return Err(Error::Dimension {
                        what: "incremental targets",
                        expected: problem.subproblem_count(),
                        got: t.len(),
                    });
                }
                validate_targets(&t, &rhs)?;
                Some(t)
            }
            _ => None,
        };
        let started = Instant::now();
        let (composite, q) = full_pass(problem, &multipliers, &config.limits, config.execution)
            .map_err(|e| e.at(0))?;
        let subgradient = problem.constraint_violation(&composite)?;
        let count = problem.subproblem_count();
        let mut engine = Engine {
            problem,
            senses,
            policy,
            detector,
            gamma,
            targets,
            schedule: Schedule::new(count),
            value: q,
            subgradient,
            previous: None,
            step_scale: 1.0,
            records: Vec::new(),
            level_events: Vec::new(),
            best_value: q,
            certified_lb: Some(q),
            best_exact: Some((multipliers.clone(), composite.clone())),
            last_exact: None,
            candidates: Vec::new(),
            solves: count,
            started,
            termination: None,
            multipliers,
            composite,
            config,
        };
        engine.push_record((0..count).collect(), Some(q));
        engine.note_exact(0, q, engine.composite.clone());
        Ok(engine)
    }

    pub fn iteration(&self) -> usize {
        self.records.len() - 1
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn composite(&self) -> &CompositeSolution {
        &self.composite
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn subgradient(&self) -> &[f64] {
        &self.subgradient
    }

    pub fn records(&self) -> &[IterateRecord] {
        &self.records
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    fn push_record(&mut self, solved: Vec<usize>, exact_dual: Option<f64>) {
        let k = self.records.len();
        self.records.push(IterateRecord {
            k,
            multipliers: self.multipliers.clone(),
            step: None,
            subgradient: self.subgradient.clone(),
            value: self.value,
            exact_dual,
            solved,
            level: None,
            detector_fired: false,
            elapsed_secs: self.started.elapsed().as_secs_f64(),
        });
    }

    fn finish(&mut self, reason: Termination) {
        self.termination = Some(reason);
    }

    /// Performs one iteration; returns `false` once the run has terminated.
    pub fn step(&mut self) -> Result<bool> {
        if self.termination.is_some() {
            return Ok(false);
        }
        let k = self.iteration();
        if k >= self.config.max_iterations {
            self.finish(Termination::MaxIterations);
            return Ok(false);
        }
        self.advance(k).map_err(|e| e.at(k))
    }

    fn advance(&mut self, k: usize) -> Result<bool> {
        let g_norm_sq = norm_sq(&self.subgradient);
        if g_norm_sq == 0.0 {
            self.finish(Termination::ZeroSubgradient);
            return Ok(false);
        }
        let ctx = StepContext {
            k,
            value: self.value,
            g_norm_sq,
            s0: self.config.initial_step,
            previous: self.previous,
        };
        let mut decision = self.policy.next(&ctx)?;
        if decision == StepDecision::LevelOvertaken {
            self.refresh_level(k, g_norm_sq)?;
            decision = self.policy.next(&ctx)?;
        }
        let step = match decision {
            StepDecision::Step(s) => s * std::mem::replace(&mut self.step_scale, 1.0),
            StepDecision::LevelReached => {
                self.finish(Termination::LevelReached);
                return Ok(false);
            }
            StepDecision::LevelOvertaken => {
                return Err(Error::Policy(
                    "level refresh did not lift the level above L".into(),
                ));
            }
        };
        if step < self.config.step_floor {
            self.finish(Termination::StepFloor);
            return Ok(false);
        }
        let level = self.policy.level();

        let next = match &self.config.mode {
            UpdateMode::Incremental { .. } => None,
            _ => Some(update_multipliers(
                &self.multipliers,
                step,
                &self.subgradient,
                &self.senses,
            )?),
        };
        let (next, candidate, solved, exact) = match (&self.config.mode, next) {
            (UpdateMode::Interleaved, Some(next)) => {
                let (cand, solved, full) = self.interleaved_refresh(&next)?;
                let exact = full
                    .then(|| self.problem.evaluate_lagrangian(&cand, &next))
                    .transpose()?;
                (next, cand, solved, exact)
            }
            (UpdateMode::FullPass, Some(next)) => {
                let (cand, q) = full_pass(
                    self.problem,
                    &next,
                    &self.config.limits,
                    self.config.execution,
                )?;
                self.solves += self.problem.subproblem_count();
                (
                    next,
                    cand,
                    (0..self.problem.subproblem_count()).collect(),
                    Some(q),
                )
            }
            _ => {
                let (next, cand) = self.incremental_sweep(step)?;
                (
                    next,
                    cand,
                    (0..self.problem.subproblem_count()).collect(),
                    None,
                )
            }
        };

        let direction: Vec<f64> = next
            .iter()
            .zip(&self.multipliers)
            .map(|(a, b)| (a - b) / step)
            .collect();
        let moved = next.iter().zip(&self.multipliers).any(|(a, b)| a != b);
        let mut fired = false;
        if let Some(det) = self.detector.as_mut() {
            let entry = WindowEntry {
                multipliers: self.multipliers.clone(),
                direction,
                step,
                value: self.value,
                raw_norm_sq: g_norm_sq,
            };
            if let DetectorOutcome::Fired {
                level,
                window_start,
                window_len,
                ..
            } = det.on_iteration(k, entry)?
            {
                fired = true;
                if let Some(s) = self.policy.as_slblr_mut() {
                    s.level = Some(level);
                }
                self.level_events.push(LevelEvent {
                    j: self.level_events.len(),
                    k,
                    level,
                    window_start,
                    window_len,
                    degenerate: false,
                });
            }
        }
        let distance = next
            .iter()
            .zip(&self.multipliers)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        self.policy.moved(distance);
        if let Some(rec) = self.records.last_mut() {
            rec.step = Some(step);
            rec.level = level;
            rec.detector_fired = fired;
        }
        self.previous = Some((step, g_norm_sq.sqrt()));

        let unchanged = !moved && candidate.parts() == self.composite.parts();
        let improved = surrogate_condition_holds(self.problem, &self.composite, &candidate, &next)?;
        self.multipliers = next;
        self.composite = candidate;
        self.value = self
            .problem
            .evaluate_lagrangian(&self.composite, &self.multipliers)?;
        self.subgradient = self.problem.constraint_violation(&self.composite)?;
        self.best_value = self.best_value.max(self.value);

        let k_next = k + 1;
        let mut exact = exact;
        let cadence = self
            .config
            .exact_every
            .unwrap_or(self.problem.subproblem_count());
        if exact.is_none() && k_next.is_multiple_of(cadence) {
            exact = Some(self.evaluate_exact(k_next)?);
        } else if let Some(q) = exact {
            self.note_exact(k_next, q, self.composite.clone());
        }
        self.push_record(solved, exact);

        if exact.is_some() && !improved && unchanged {
            self.finish(Termination::SurrogateConditionUnattainable);
            return Ok(false);
        }
        Ok(true)
    }

    /// Solves subproblems at `next` from the scheduler until the surrogate
    /// condition holds or every subproblem has been solved once.
    fn interleaved_refresh(
        &mut self,
        next: &[f64],
    ) -> Result<(CompositeSolution, Vec<usize>, bool)> {
        let count = self.problem.subproblem_count();
        let reference = self.problem.evaluate_lagrangian(&self.composite, next)?;
        let mut candidate = self.composite.clone();
        candidate.age();
        let mut solved = Vec::new();
        for _ in 0..count {
            let i = self.schedule.next_subproblem();
            let sol = solve_subproblem(self.problem, i, next, &self.config.limits)?;
            self.solves += 1;
            candidate.replace(self.problem, i, sol.x);
            solved.push(i);
            if self.problem.evaluate_lagrangian(&candidate, next)? < reference {
                break;
            }
            if self.config.fallback == ConditionFallback::HalveStep {
                self.step_scale = 0.5;
                break;
            }
        }
        let full = solved.len() == count;
        Ok((candidate, solved, full))
    }

    fn incremental_sweep(&mut self, step: f64) -> Result<(Vec<f64>, CompositeSolution)> {
        let targets = self.targets.as_ref().expect("incremental mode has targets");
        let mut psi = self.multipliers.clone();
        let mut candidate = self.composite.clone();
        candidate.age();
        for (i, target) in targets.iter().enumerate() {
            let sol = solve_subproblem(self.problem, i, &psi, &self.config.limits)?;
            self.solves += 1;
            let mut contribution = vec![0.0; self.problem.row_count()];
            let offset = self.problem.offset(i);
            for (v, &x) in sol.x.iter().enumerate() {
                for &(r, a) in self.problem.column(offset + v) {
                    contribution[r] += a * x as f64;
                }
            }
            psi = incremental_update(&psi, &contribution, step, target, &self.senses)?;
            candidate.replace(self.problem, i, sol.x);
        }
        Ok((psi, candidate))
    }

    /// Degenerate single-step window: the level that the previous step
    /// would have implied at the current value.
    fn refresh_level(&mut self, k: usize, g_norm_sq: f64) -> Result<()> {
        let gamma = self
            .gamma
            .ok_or_else(|| Error::Policy("level refresh outside slblr".into()))?;
        let s_prev = self.previous.map_or(self.config.initial_step, |(s, _)| s);
        let value = self.value;
        let state = self
            .policy
            .as_slblr_mut()
            .expect("gamma is set only for slblr");
        let level = step_level(s_prev, g_norm_sq, value, gamma, state.level_form);
        state.level = Some(level);
        if let Some(det) = self.detector.as_mut() {
            det.reset();
        }
        self.level_events.push(LevelEvent {
            j: self.level_events.len(),
            k,
            level,
            window_start: k,
            window_len: 1,
            degenerate: true,
        });
        Ok(())
    }

    fn evaluate_exact(&mut self, k: usize) -> Result<f64> {
        let (sol, q) = full_pass(
            self.problem,
            &self.multipliers,
            &self.config.limits,
            self.config.execution,
        )?;
        self.solves += self.problem.subproblem_count();
        self.note_exact(k, q, sol);
        Ok(q)
    }

    fn note_exact(&mut self, k: usize, q: f64, sol: CompositeSolution) {
        if self.certified_lb.is_none_or(|lb| q > lb) {
            self.certified_lb = Some(q);
            self.best_exact = Some((self.multipliers.clone(), sol.clone()));
        }
        self.keep_candidate(&sol);
        self.last_exact = Some((k, sol));
    }

    fn keep_candidate(&mut self, sol: &CompositeSolution) {
        let cap = self.config.candidate_pool;
        if cap == 0 {
            return;
        }
        let Ok(g) = self.problem.constraint_violation(sol) else {
            return;
        };
        let violation: f64 = g
            .iter()
            .zip(&self.senses)
            .map(|(&g, sense)| match sense {
                Sense::Equal => g * g,
                Sense::LessEqual => g.max(0.0).powi(2),
            })
            .sum();
        if self.candidates.len() == cap
            && self.candidates.last().is_some_and(|(v, _)| violation >= *v)
        {
            return;
        }
        if self
            .candidates
            .iter()
            .any(|(_, c)| c.parts() == sol.parts())
        {
            return;
        }
        let at = self.candidates.partition_point(|(v, _)| *v <= violation);
        self.candidates.insert(at, (violation, sol.clone()));
        self.candidates.truncate(cap);
    }

    /// Ensures an exact pass at the final multipliers and assembles the trace.
    pub fn into_trace(mut self) -> Result<RunTrace> {
        let k = self.iteration();
        let needs_exact = self.records.last().is_some_and(|r| r.exact_dual.is_none());
        if needs_exact {
            let q = self.evaluate_exact(k).map_err(|e| e.at(k))?;
            if let Some(rec) = self.records.last_mut() {
                rec.exact_dual = Some(q);
            }
        }
        let (best_m, best_s) = self.best_exact.unzip();
        Ok(RunTrace {
            records: self.records,
            level_events: self.level_events,
            best_value: self.best_value,
            certified_lb: self.certified_lb,
            best_exact_multipliers: best_m,
            best_exact_solution: best_s,
            final_solution: self.composite,
            final_exact_solution: self.last_exact.map(|(_, s)| s),
            candidates: self.candidates.into_iter().map(|(_, c)| c).collect(),
            termination: self.termination.unwrap_or(Termination::MaxIterations),
            subproblem_solves: self.solves,
            wall_secs: self.started.elapsed().as_secs_f64(),
        })
    }
}

/// Runs the engine to termination.
pub fn run(problem: &SeparableProblem, config: EngineConfig) -> Result<RunTrace> {
    let mut engine = Engine::new(problem, config)?;
    while engine.step()? {}
    engine.into_trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example1::{example1, OPTIMAL_MULTIPLIERS};
    use crate::model::gap::gap_to_separable;
    use crate::model::{CouplingRow, GapInstance, LocalSet, Subproblem};
    use proptest::prelude::*;

    #[test]
    fn projection_rules() {
        let s = [Sense::Equal];
        assert_eq!(
            update_multipliers(&[1.0], 0.5, &[-4.0], &s).unwrap(),
            vec![-1.0]
        );
        let s = [Sense::LessEqual];
        assert_eq!(
            update_multipliers(&[0.1], 1.0, &[-0.5], &s).unwrap(),
            vec![0.0]
        );
        assert_eq!(
            update_multipliers(&[0.3], 1.0, &[0.0], &s).unwrap(),
            vec![0.3]
        );
        assert!(update_multipliers(&[0.3], 0.0, &[1.0], &s).is_err());
        assert!(update_multipliers(&[f64::NAN], 1.0, &[1.0], &s).is_err());
    }

    #[test]
    fn round_robin() {
        let mut s = Schedule::new(3);
        let seq: Vec<usize> = (0..7).map(|_| s.next_subproblem()).collect();
        assert_eq!(seq, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    /// Two single-variable subproblems joined by `x0 + x1 = 1`.
    fn two_var() -> SeparableProblem {
        let sub = |c: f64| Subproblem {
            cost: vec![c],
            local: LocalSet::Box {
                lower: vec![0],
                upper: vec![1],
            },
        };
        SeparableProblem::new(
            vec![sub(1.0), sub(1.5)],
            vec![CouplingRow::equal(vec![(0, 1.0), (1, 1.0)], 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn surrogate_condition_cases() {
        let p = two_var();
        let prev = CompositeSolution::new(&p, vec![vec![1], vec![0]]).unwrap();
        assert!(!surrogate_condition_holds(&p, &prev, &prev, &[-1.0]).unwrap());
        // at lambda = -2 the reduced cost of x1 is -0.5
        let cand = CompositeSolution::new(&p, vec![vec![1], vec![1]]).unwrap();
        let lam = [-2.0];
        assert!(surrogate_condition_holds(&p, &prev, &cand, &lam).unwrap());
        let drop = p.evaluate_lagrangian(&prev, &lam).unwrap()
            - p.evaluate_lagrangian(&cand, &lam).unwrap();
        assert_eq!(drop, 0.5);
        let (exact, _) =
            full_pass(&p, &[-0.2], &SolverLimits::default(), Execution::Sequential).unwrap();
        let stale = CompositeSolution::new(&p, vec![vec![0], vec![1]]).unwrap();
        assert!(surrogate_condition_holds(&p, &stale, &exact, &[-0.2]).unwrap());
    }

    #[test]
    fn incremental_with_one_subproblem_is_a_plain_update() {
        let s = [Sense::Equal, Sense::LessEqual];
        let a = incremental_update(&[1.0, 2.0], &[3.0, -1.0], 0.5, &[1.0, 1.0], &s).unwrap();
        let b = update_multipliers(&[1.0, 2.0], 0.5, &[2.0, -2.0], &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn incremental_with_zero_contributions_telescopes() {
        let s = [Sense::Equal; 2];
        let b = [4.0, -2.0];
        let targets = vec![vec![2.0, -1.0], vec![2.0, -1.0]];
        validate_targets(&targets, &b).unwrap();
        let mut psi = vec![0.5, 0.5];
        for t in &targets {
            psi = incremental_update(&psi, &[0.0, 0.0], 0.25, t, &s).unwrap();
        }
        assert_eq!(psi, vec![0.5 - 0.25 * 4.0, 0.5 + 0.25 * 2.0]);
        assert!(validate_targets(&[vec![1.0, 0.0], vec![1.0, 0.0]], &b).is_err());
    }

    proptest! {
        #[test]
        fn incremental_equals_summed_update_for_equalities(
            lam in prop::collection::vec(-5.0f64..5.0, 3),
            c1 in prop::collection::vec(-5.0f64..5.0, 3),
            c2 in prop::collection::vec(-5.0f64..5.0, 3),
            b in prop::collection::vec(-5.0f64..5.0, 3),
            s in 0.01f64..2.0,
        ) {
            let senses = [Sense::Equal; 3];
            let t: Vec<f64> = b.iter().map(|v| v / 2.0).collect();
            let psi = incremental_update(&lam, &c1, s, &t, &senses).unwrap();
            let psi = incremental_update(&psi, &c2, s, &t, &senses).unwrap();
            let g: Vec<f64> = (0..3).map(|r| c1[r] + c2[r] - b[r]).collect();
            let full = update_multipliers(&lam, s, &g, &senses).unwrap();
            for (a, b) in psi.iter().zip(&full) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_iterations_leave_only_the_initial_record() {
        let p = example1();
        let trace = run(&p, EngineConfig::slblr(0.1, 0)).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.termination, Termination::MaxIterations);
        assert!(trace.records[0].exact_dual.is_some());
    }

    #[test]
    fn recomputed_lagrangian_matches_state() {
        let p = gap_to_separable(&GapInstance::type_d(3, 12, 5).unwrap()).unwrap();
        let mut e = Engine::new(&p, EngineConfig::slblr(0.5, 300)).unwrap();
        while e.step().unwrap() {
            let l = p
                .evaluate_lagrangian(e.composite(), e.multipliers())
                .unwrap();
            assert!((l - e.value()).abs() < 1e-9);
            let g = p.constraint_violation(e.composite()).unwrap();
            assert_eq!(g, e.subgradient());
            assert_eq!(e.records().last().unwrap().value, e.value());
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let p = gap_to_separable(&GapInstance::type_d(3, 15, 9).unwrap()).unwrap();
        let mut cfg = EngineConfig::slblr(0.5, 200);
        cfg.initial = InitialMultipliers::Uniform {
            lo: 50.0,
            hi: 120.0,
            seed: 3,
        };
        let a = run(&p, cfg.clone()).unwrap();
        let mut par = cfg;
        par.execution = Execution::Parallel;
        let b = run(&p, par).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.multipliers, y.multipliers);
            assert_eq!(x.step, y.step);
            assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
        assert_eq!(a.level_events, b.level_events);
    }

    #[test]
    fn polyak_with_known_optimum_moves_closer_every_iteration() {
        let p = example1();
        let q_star = crate::subproblem::dual_function_oracle(&p, &OPTIMAL_MULTIPLIERS).unwrap();
        let mut cfg =
            EngineConfig::slblr(0.1, 300).with_policy(PolicyConfig::Polyak { q_star, gamma: 1.0 });
        cfg.mode = UpdateMode::FullPass;
        cfg.detector = None;
        let trace = run(&p, cfg).unwrap();
        for w in trace.records.windows(2) {
            if w[0].grad_norm() > 0.0 {
                assert!(
                    w[1].distance_to(&OPTIMAL_MULTIPLIERS) < w[0].distance_to(&OPTIMAL_MULTIPLIERS)
                );
            }
        }
    }

    #[test]
    fn level_events_are_increasing_in_k() {
        let p = example1();
        let trace = run(&p, EngineConfig::slblr(0.1, 400)).unwrap();
        assert!(!trace.level_events.is_empty());
        for w in trace.level_events.windows(2) {
            assert!(w[0].k < w[1].k);
        }
    }

    #[test]
    fn certified_bound_is_the_best_exact_value() {
        let p = example1();
        let trace = run(&p, EngineConfig::slblr(0.1, 100)).unwrap();
        let best = trace
            .records
            .iter()
            .filter_map(|r| r.exact_dual)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(trace.certified_lb, Some(best));
        assert!(trace.final_record().exact_dual.is_some());
        assert!(best <= 16.0 + 1e-9);
    }

    #[test]
    fn halving_fallback_solves_one_subproblem_per_iteration() {
        let p = gap_to_separable(&GapInstance::type_d(4, 10, 2).unwrap()).unwrap();
        let mut cfg = EngineConfig::slblr(0.5, 50);
        cfg.fallback = ConditionFallback::HalveStep;
        let trace = run(&p, cfg).unwrap();
        for r in &trace.records[1..] {
            assert_eq!(r.solved.len(), 1);
        }
    }
}
