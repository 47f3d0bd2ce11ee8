//! Detection of lost multiplier convergence and level inference.
//!
//! Each iterate contributes the condition that some point is not pushed
//! further away by the step `lambda^k -> lambda^{k+1}`. Expanded, this is the
//! halfspace `2 (lambda - lambda^k) . g_hat >= s |g_hat|^2`. When the
//! accumulated window has no common point, the steps overshot the Polyak
//! bound somewhere, and inverting that bound yields an overestimate of the
//! optimal dual value.

mod ball;
mod simplex;

pub use ball::{
    apollonius_ball, ball_feasible, ball_feasible_from, ball_feasible_with, build_ball_system,
    Ball, BallOptions, BallSystem,
};
pub use simplex::{lp_feasible, lp_feasible_with, LpOptions};

use crate::error::{Error, Result};
use crate::stepsize::LevelForm;
use serde::{Deserialize, Serialize};

/// `normal . lambda >= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let lhs: f64 = self.normal.iter().zip(x).map(|(a, x)| a * x).sum();
        lhs >= self.offset - tol * (1.0 + self.offset.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible { witness: Vec<f64> },
    Infeasible { margin: f64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

/// One iterate as seen by the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEntry {
    /// `lambda^k`.
    pub multipliers: Vec<f64>,
    /// `(lambda^{k+1} - lambda^k) / s^k`, after projection.
    pub direction: Vec<f64>,
    pub step: f64,
    /// Surrogate value `L^k`.
    pub value: f64,
    /// `|g~^k|^2` of the unprojected surrogate subgradient.
    pub raw_norm_sq: f64,
}

impl WindowEntry {
    /// `lambda^{k+1}`.
    pub fn next(&self) -> Vec<f64> {
        self.multipliers
            .iter()
            .zip(&self.direction)
            .map(|(l, g)| l + self.step * g)
            .collect()
    }

    pub fn halfspace(&self) -> Option<Halfspace> {
        let gg: f64 = self.direction.iter().map(|g| g * g).sum();
        if gg == 0.0 {
            return None;
        }
        let lg: f64 = self
            .multipliers
            .iter()
            .zip(&self.direction)
            .map(|(l, g)| l * g)
            .sum();
        Some(Halfspace {
            normal: self.direction.iter().map(|g| 2.0 * g).collect(),
            offset: 2.0 * lg + self.step * gg,
        })
    }
}

/// Iterates since the last firing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectorWindow {
    /// Iteration index of the first entry.
    pub start: usize,
    pub entries: Vec<WindowEntry>,
    /// Number of completed windows (the level counter `j`).
    pub level_index: usize,
}

impl DetectorWindow {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One halfspace per step; steps with a zero direction are tautologies and dropped.
pub fn build_halfspaces(window: &[WindowEntry]) -> Vec<Halfspace> {
    window.iter().filter_map(WindowEntry::halfspace).collect()
}

/// Largest per-step level over the window.
pub fn compute_level(window: &[WindowEntry], gamma: f64, form: LevelForm) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Detector(
            "level requested for an empty window".into(),
        ));
    }
    Ok(window
        .iter()
        .map(|e| step_level(e.step, e.raw_norm_sq, e.value, gamma, form))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Level implied by a single step.
pub fn step_level(step: f64, norm_sq: f64, value: f64, gamma: f64, form: LevelForm) -> f64 {
    match form {
        LevelForm::Inversion => step * norm_sq / gamma + value,
        LevelForm::AsPrinted => gamma * step * norm_sq + value,
    }
}

/// Which feasibility problem the detector solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorVariant {
    Linear,
    /// Balls with contraction `sqrt(1 - 2 nu s)`; steps too large for a
    /// ball keep their halfspace.
    Ball {
        nu: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorOutcome {
    Quiet,
    Fired {
        level: f64,
        margin: f64,
        window_start: usize,
        window_len: usize,
    },
}

/// Per-run detector state.
#[derive(Debug, Clone)]
pub struct Detector {
    variant: DetectorVariant,
    gamma: f64,
    form: LevelForm,
    window: DetectorWindow,
    rows: Vec<Halfspace>,
    witness: Option<Vec<f64>>,
    excluded_steps: usize,
}

const WITNESS_TOL: f64 = 1e-9;

impl Detector {
    pub fn new(variant: DetectorVariant, gamma: f64, form: LevelForm) -> Result<Self> {
        if let DetectorVariant::Ball { nu } = variant {
            if !(nu > 0.0) {
                return Err(Error::Validation(format!("nu must be positive, got {nu}")));
            }
        }
        Ok(Detector {
            variant,
            gamma,
            form,
            window: DetectorWindow::default(),
            rows: Vec::new(),
            witness: None,
            excluded_steps: 0,
        })
    }

    pub fn window(&self) -> &DetectorWindow {
        &self.window
    }

    /// Steps that fell back from a ball to a halfspace so far.
    pub fn excluded_steps(&self) -> usize {
        self.excluded_steps
    }

    /// Discards the current window.
    pub fn reset(&mut self) {
        self.window.entries.clear();
        self.rows.clear();
        self.witness = None;
    }

    /// Appends iterate `k` and tests the window; on infeasibility the level is
    /// inferred and the window restarts at iterate `k + 1`.
    pub fn on_iteration(&mut self, k: usize, entry: WindowEntry) -> Result<DetectorOutcome> {
        if self.window.is_empty() {
            self.window.start = k;
        } else if self.window.start + self.window.len() != k {
            return Err(Error::Detector(format!(
                "iterate {k} does not continue the window starting at {} of length {}",
                self.window.start,
                self.window.len()
            )));
        }
        let next = entry.next();
        if let Some(h) = entry.halfspace() {
            self.rows.push(h);
        }
        self.window.entries.push(entry);

        let verdict = match self.variant {
            DetectorVariant::Linear => self.check_linear(next)?,
            DetectorVariant::Ball { nu } => self.check_ball(nu, &next),
        };
        match verdict {
            Feasibility::Feasible { witness } => {
                self.witness = Some(witness);
                Ok(DetectorOutcome::Quiet)
            }
            Feasibility::Infeasible { margin } => {
                let level = compute_level(&self.window.entries, self.gamma, self.form)?;
                let outcome = DetectorOutcome::Fired {
                    level,
                    margin,
                    window_start: self.window.start,
                    window_len: self.window.len(),
                };
                self.window.entries.clear();
                self.window.level_index += 1;
                self.rows.clear();
                self.witness = None;
                Ok(outcome)
            }
        }
    }

    fn satisfies_all(&self, x: &[f64]) -> bool {
        self.rows.iter().all(|h| h.contains(x, WITNESS_TOL))
    }

    fn check_linear(&self, next: Vec<f64>) -> Result<Feasibility> {
        if let Some(w) = &self.witness {
            // the cached witness already satisfies every earlier row
            if self.rows.last().is_none_or(|h| h.contains(w, WITNESS_TOL)) {
                return Ok(Feasibility::Feasible { witness: w.clone() });
            }
        }
        if self.satisfies_all(&next) {
            return Ok(Feasibility::Feasible { witness: next });
        }
        lp_feasible(&self.rows)
    }

    fn check_ball(&mut self, nu: f64, next: &[f64]) -> Feasibility {
        let mut system = BallSystem::default();
        for (pos, e) in self.window.entries.iter().enumerate() {
            let arg = 1.0 - 2.0 * nu * e.step;
            let ball = (arg > 0.0)
                .then(|| apollonius_ball(&e.multipliers, &e.next(), arg.sqrt()).ok())
                .flatten();
            match ball {
                Some(b) => system.balls.push(b),
                None => {
                    system.excluded.push(pos);
                    system.planes.extend(e.halfspace());
                }
            }
        }
        if system.excluded.last() == Some(&(self.window.entries.len() - 1)) {
            self.excluded_steps += 1;
        }
        if let Some(w) = &self.witness {
            if ball::worst_distance(&system, w) <= BallOptions::default().eps {
                return Feasibility::Feasible { witness: w.clone() };
            }
        }
        // the newest iterate lies in the newest ball and halfspace
        ball_feasible_from(&system, Some(next), &BallOptions::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(lambda: f64, dir: f64, step: f64) -> WindowEntry {
        WindowEntry {
            multipliers: vec![lambda],
            direction: vec![dir],
            step,
            value: 0.0,
            raw_norm_sq: dir * dir,
        }
    }

    #[test]
    fn one_dimensional_halfspace() {
        let h = entry(0.0, 1.0, 2.0).halfspace().unwrap();
        // 2 lambda >= 2, i.e. lambda >= 1
        assert_eq!(h.normal, vec![2.0]);
        assert_eq!(h.offset, 2.0);
    }

    #[test]
    fn zero_direction_is_dropped() {
        assert!(build_halfspaces(&[entry(3.0, 0.0, 1.0)]).is_empty());
    }

    #[test]
    fn level_arithmetic() {
        let e = WindowEntry {
            multipliers: vec![0.0, 0.0],
            direction: vec![2.0, 0.0],
            step: 0.25,
            value: 6.0,
            raw_norm_sq: 4.0,
        };
        assert_eq!(
            compute_level(std::slice::from_ref(&e), 0.5, LevelForm::Inversion).unwrap(),
            8.0
        );
        assert_eq!(compute_level(&[e], 0.5, LevelForm::AsPrinted).unwrap(), 6.5);
        assert!(compute_level(&[], 0.5, LevelForm::Inversion).is_err());
    }

    #[test]
    fn level_is_window_maximum() {
        let mut a = entry(0.0, 1.0, 1.0);
        a.value = 10.0;
        let b = entry(0.0, 1.0, 3.0);
        assert_eq!(
            compute_level(&[a, b], 1.0, LevelForm::Inversion).unwrap(),
            11.0
        );
    }

    /// Iterates 0 -> 2, 2 -> 0, 0 -> 3 give {l >= 1, l <= 1, l >= 1.5}.
    fn three_constraint_sequence() -> Vec<WindowEntry> {
        vec![
            entry(0.0, 1.0, 2.0),
            entry(2.0, -1.0, 2.0),
            entry(0.0, 1.0, 3.0),
        ]
    }

    #[test]
    fn fires_on_third_iterate() {
        let mut d = Detector::new(DetectorVariant::Linear, 0.5, LevelForm::Inversion).unwrap();
        let seq = three_constraint_sequence();
        let hs = build_halfspaces(&seq);
        assert_eq!(hs[1].normal, vec![-2.0]);
        assert_eq!(hs[1].offset, -2.0);
        assert_eq!(hs[2].offset, 3.0);
        assert_eq!(
            d.on_iteration(0, seq[0].clone()).unwrap(),
            DetectorOutcome::Quiet
        );
        assert_eq!(
            d.on_iteration(1, seq[1].clone()).unwrap(),
            DetectorOutcome::Quiet
        );
        match d.on_iteration(2, seq[2].clone()).unwrap() {
            DetectorOutcome::Fired {
                window_start,
                window_len,
                level,
                margin,
            } => {
                assert_eq!((window_start, window_len), (0, 3));
                assert_eq!(level, 3.0 / 0.5);
                assert!(margin > 0.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(d.window().is_empty());
        assert_eq!(d.window().level_index, 1);
        // the next window starts at the following iterate
        assert_eq!(
            d.on_iteration(3, entry(3.0, -1.0, 0.5)).unwrap(),
            DetectorOutcome::Quiet
        );
        assert_eq!(d.window().start, 3);
    }

    #[test]
    fn shrinking_iterates_never_fire() {
        let mut d = Detector::new(DetectorVariant::Linear, 0.5, LevelForm::Inversion).unwrap();
        let target = [1.0, -2.0];
        let mut lam = vec![5.0, 5.0];
        for k in 0..200 {
            let dir: Vec<f64> = lam.iter().zip(&target).map(|(l, t)| t - l).collect();
            let e = WindowEntry {
                multipliers: lam.clone(),
                direction: dir.clone(),
                step: 0.3,
                value: 0.0,
                raw_norm_sq: dir.iter().map(|g| g * g).sum(),
            };
            lam = e.next();
            assert_eq!(d.on_iteration(k, e).unwrap(), DetectorOutcome::Quiet);
        }
    }

    #[test]
    fn gaps_in_the_sequence_are_rejected() {
        let mut d = Detector::new(DetectorVariant::Linear, 0.5, LevelForm::Inversion).unwrap();
        d.on_iteration(4, entry(0.0, 1.0, 1.0)).unwrap();
        assert!(d.on_iteration(6, entry(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn ball_variant_fires_on_overshooting_oscillation() {
        let mut d =
            Detector::new(DetectorVariant::Ball { nu: 0.5 }, 0.5, LevelForm::Inversion).unwrap();
        // 0 -> 1 -> 0: contraction toward two different points cannot both hold
        assert_eq!(
            d.on_iteration(0, entry(0.0, 1.0, 0.5))
                .unwrap_or(DetectorOutcome::Quiet),
            DetectorOutcome::Quiet
        );
        let fired = (1..20).any(|k| {
            let lam = if k % 2 == 1 { 0.5 } else { 0.0 };
            let dir = if k % 2 == 1 { -1.0 } else { 1.0 };
            matches!(
                d.on_iteration(k, entry(lam, dir, 0.5)).unwrap(),
                DetectorOutcome::Fired { .. }
            )
        });
        assert!(fired);
    }

    #[test]
    fn nu_must_be_positive() {
        assert!(
            Detector::new(DetectorVariant::Ball { nu: 0.0 }, 0.5, LevelForm::Inversion).is_err()
        );
    }
}
