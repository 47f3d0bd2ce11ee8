//! Stepsize rules for the multiplier update `lambda' = lambda + s * g`.
//!
//! Pure formulas are exposed as free functions; [`PolicyState`] wraps them
//! with the per-run state the engine needs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// `s0 / k`, for `k >= 1`.
pub fn nonsummable_step(s0: f64, k: usize) -> f64 {
    debug_assert!(k >= 1);
    s0 / k as f64
}

/// `gamma * (level - value) / |g|^2`.
pub fn polyak_step(level: f64, value: f64, g_norm_sq: f64, gamma: f64) -> Result<f64> {
    if !(g_norm_sq > 0.0) {
        return Err(Error::Policy("zero subgradient".into()));
    }
    if !(level > value) {
        return Err(Error::Policy(format!(
            "level not above current value ({level} <= {value})"
        )));
    }
    Ok(gamma * (level - value) / g_norm_sq)
}

/// Contraction factor `1 - 1 / (M k^(1 - 1/k^r))`.
pub fn slr_alpha(m: f64, r: f64, k: usize) -> f64 {
    let k = k as f64;
    1.0 - 1.0 / (m * k.powf(1.0 - 1.0 / k.powf(r)))
}

/// `alpha_k * s_prev * |g_prev| / |g|`.
pub fn slr_contraction_step(
    s_prev: f64,
    g_prev_norm: f64,
    g_norm: f64,
    k: usize,
    m: f64,
    r: f64,
) -> Result<f64> {
    if !(g_norm > 0.0) {
        return Err(Error::Policy("zero subgradient".into()));
    }
    Ok(slr_alpha(m, r, k) * s_prev * g_prev_norm / g_norm)
}

/// Damped Polyak step against an inferred level: `zeta * gamma * (level - L) / |g|^2`.
pub fn slblr_step(level: f64, value: f64, g_norm_sq: f64, gamma: f64, zeta: f64) -> Result<f64> {
    polyak_step(level, value, g_norm_sq, gamma).map(|s| zeta * s)
}

/// Path-based target-level bookkeeping.
///
/// The level is the record at the start of the current group plus `delta`.
/// A group ends either on sufficient ascent (record up by `tau * delta`,
/// `delta` kept) or once the multipliers have travelled `path_limit`
/// without it (`delta` scaled by `beta`).
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientLevel {
    pub gamma: f64,
    pub delta: f64,
    pub beta: f64,
    pub tau: f64,
    pub path_limit: f64,
    record: f64,
    group_record: f64,
    path: f64,
    started: bool,
}

impl SubgradientLevel {
    pub fn new(gamma: f64, delta0: f64, path_limit: f64, beta: f64, tau: f64) -> Self {
        SubgradientLevel {
            gamma,
            delta: delta0,
            beta,
            tau,
            path_limit,
            record: f64::NEG_INFINITY,
            group_record: f64::NEG_INFINITY,
            path: 0.0,
            started: false,
        }
    }

    pub fn record(&self) -> f64 {
        self.record
    }

    pub fn path(&self) -> f64 {
        self.path
    }

    pub fn level(&self) -> f64 {
        self.group_record + self.delta
    }

    /// Registers a new value and returns the level-based step.
    pub fn step(&mut self, value: f64, g_norm_sq: f64) -> Result<f64> {
        self.observe(value);
        polyak_step(self.level(), value, g_norm_sq, self.gamma)
    }

    pub fn observe(&mut self, value: f64) {
        self.record = self.record.max(value);
        if !self.started {
            self.started = true;
            self.group_record = self.record;
            return;
        }
        if value >= self.group_record + self.tau * self.delta {
            self.group_record = self.record;
            self.path = 0.0;
        }
    }

    /// Accumulates `|lambda' - lambda|`; shrinks `delta` past the path limit.
    pub fn moved(&mut self, distance: f64) {
        self.path += distance;
        if self.path > self.path_limit {
            self.delta *= self.beta;
            self.group_record = self.record;
            self.path = 0.0;
        }
    }
}

/// How an inferred level is recovered from a window step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelForm {
    /// `s |g|^2 / gamma + L`, the exact inverse of the damped Polyak formula.
    #[default]
    Inversion,
    /// `gamma s |g|^2 + L`; kept for comparison runs only.
    AsPrinted,
}

/// Declarative stepsize selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyConfig {
    NonSummable,
    Polyak {
        q_star: f64,
        gamma: f64,
    },
    SurrogatePolyak {
        q_star: f64,
        gamma: Option<f64>,
    },
    SubgradientLevel {
        path_limit: f64,
        delta0: f64,
        beta: f64,
        tau: f64,
        gamma: Option<f64>,
    },
    Slr {
        m: f64,
        r: f64,
    },
    Slblr {
        gamma: Option<f64>,
        zeta: f64,
        level_form: LevelForm,
    },
}

impl PolicyConfig {
    pub fn subgradient_level_default() -> Self {
        PolicyConfig::SubgradientLevel {
            path_limit: 60.0,
            delta0: 100.0,
            beta: 0.5,
            tau: 0.5,
            gamma: None,
        }
    }

    pub fn slr_default() -> Self {
        PolicyConfig::Slr { m: 40.0, r: 0.05 }
    }

    pub fn slblr_default() -> Self {
        PolicyConfig::Slblr {
            gamma: None,
            zeta: 1.0 / 1.5,
            level_form: LevelForm::Inversion,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyConfig::NonSummable => "nonsummable",
            PolicyConfig::Polyak { .. } => "polyak",
            PolicyConfig::SurrogatePolyak { .. } => "surrogate-polyak",
            PolicyConfig::SubgradientLevel { .. } => "subgradient-level",
            PolicyConfig::Slr { .. } => "slr",
            PolicyConfig::Slblr { .. } => "slblr",
        }
    }

    /// Builds the runtime state; `gamma` defaults to `1 / subproblems`.
    pub fn build(&self, subproblems: usize) -> Result<PolicyState> {
        let default_gamma = 1.0 / subproblems.max(1) as f64;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Validation(msg.into()))
            }
        };
        Ok(match *self {
            PolicyConfig::NonSummable => PolicyState::NonSummable,
            PolicyConfig::Polyak { q_star, gamma } => {
                check(gamma > 0.0 && gamma < 2.0, "polyak needs 0 < gamma < 2")?;
                PolicyState::Polyak { q_star, gamma }
            }
            PolicyConfig::SurrogatePolyak { q_star, gamma } => {
                let gamma = gamma.unwrap_or(default_gamma);
                check(
                    gamma > 0.0 && gamma < 1.0,
                    "surrogate polyak needs 0 < gamma < 1",
                )?;
                PolicyState::Polyak { q_star, gamma }
            }
            PolicyConfig::SubgradientLevel {
                path_limit,
                delta0,
                beta,
                tau,
                gamma,
            } => {
                let gamma = gamma.unwrap_or(default_gamma);
                check(
                    path_limit > 0.0 && delta0 > 0.0,
                    "subgradient-level needs R > 0 and delta0 > 0",
                )?;
                check(
                    (0.0..=1.0).contains(&beta) && (0.0..=1.0).contains(&tau),
                    "beta and tau lie in [0, 1]",
                )?;
                check(
                    gamma > 0.0 && gamma < 2.0,
                    "subgradient-level needs 0 < gamma < 2",
                )?;
                PolicyState::SubgradientLevel(SubgradientLevel::new(
                    gamma, delta0, path_limit, beta, tau,
                ))
            }
            PolicyConfig::Slr { m, r } => {
                check(
                    m >= 1.0 && (0.0..=1.0).contains(&r),
                    "slr needs M >= 1 and r in [0, 1]",
                )?;
                PolicyState::Slr { m, r }
            }
            PolicyConfig::Slblr {
                gamma,
                zeta,
                level_form,
            } => {
                let gamma = gamma.unwrap_or(default_gamma);
                check(gamma > 0.0 && gamma < 1.0, "slblr needs 0 < gamma < 1")?;
                check(zeta > 0.0 && zeta <= 1.0, "slblr needs 0 < zeta <= 1")?;
                PolicyState::Slblr(Slblr {
                    gamma,
                    zeta,
                    level_form,
                    level: None,
                })
            }
        })
    }
}

/// State of the level-based policy; the level is set by the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Slblr {
    pub gamma: f64,
    pub zeta: f64,
    pub level_form: LevelForm,
    pub level: Option<f64>,
}

/// Inputs to one stepsize decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    /// Iteration index, starting at 0.
    pub k: usize,
    /// Surrogate value `L^k` (the exact dual value in full-pass mode).
    pub value: f64,
    pub g_norm_sq: f64,
    pub s0: f64,
    /// Previous step and previous subgradient norm, if any.
    pub previous: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepDecision {
    Step(f64),
    /// The known optimal value has been reached.
    LevelReached,
    /// The inferred level is no longer above `L`.
    LevelOvertaken,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyState {
    NonSummable,
    Polyak { q_star: f64, gamma: f64 },
    SubgradientLevel(SubgradientLevel),
    Slr { m: f64, r: f64 },
    Slblr(Slblr),
}

impl PolicyState {
    pub fn next(&mut self, ctx: &StepContext) -> Result<StepDecision> {
        let step = match self {
            PolicyState::NonSummable => nonsummable_step(ctx.s0, ctx.k + 1),
            PolicyState::Polyak { q_star, gamma } => {
                if !(*q_star > ctx.value) {
                    return Ok(StepDecision::LevelReached);
                }
                polyak_step(*q_star, ctx.value, ctx.g_norm_sq, *gamma)?
            }
            PolicyState::SubgradientLevel(state) => {
                if ctx.k == 0 {
                    state.observe(ctx.value);
                    ctx.s0
                } else {
                    state.step(ctx.value, ctx.g_norm_sq)?
                }
            }
            PolicyState::Slr { m, r } => match ctx.previous {
                Some((s_prev, g_prev_norm)) if ctx.k > 0 => {
                    slr_contraction_step(s_prev, g_prev_norm, ctx.g_norm_sq.sqrt(), ctx.k, *m, *r)?
                }
                _ => ctx.s0,
            },
            PolicyState::Slblr(state) => match state.level {
                None => ctx.s0,
                Some(level) => {
                    if !(level > ctx.value) {
                        return Ok(StepDecision::LevelOvertaken);
                    }
                    slblr_step(level, ctx.value, ctx.g_norm_sq, state.gamma, state.zeta)?
                }
            },
        };
        Ok(StepDecision::Step(step))
    }

    /// Informs path-tracking policies of `|lambda^{k+1} - lambda^k|`.
    pub fn moved(&mut self, distance: f64) {
        if let PolicyState::SubgradientLevel(state) = self {
            state.moved(distance);
        }
    }

    pub fn level(&self) -> Option<f64> {
        match self {
            PolicyState::Slblr(s) => s.level,
            PolicyState::SubgradientLevel(s) if s.started => Some(s.level()),
            PolicyState::Polyak { q_star, .. } => Some(*q_star),
            _ => None,
        }
    }

    pub fn as_slblr_mut(&mut self) -> Option<&mut Slblr> {
        match self {
            PolicyState::Slblr(s) => Some(s),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nonsummable_values() {
        assert_eq!(nonsummable_step(1.0, 1), 1.0);
        assert_eq!(nonsummable_step(1.0, 4), 0.25);
        let partial: f64 = (1..=1_000_000).map(|k| nonsummable_step(1.0, k)).sum();
        assert!(partial > 13.0);
    }

    #[test]
    fn polyak_arithmetic_and_errors() {
        assert_eq!(polyak_step(10.0, 6.0, 4.0, 0.5).unwrap(), 0.5);
        assert!(polyak_step(10.0, 10.0 - 1e-9, 4.0, 0.5).unwrap() < 1e-9);
        assert!(matches!(
            polyak_step(6.0, 6.0, 4.0, 0.5),
            Err(Error::Policy(_))
        ));
        assert!(matches!(
            polyak_step(7.0, 6.0, 0.0, 0.5),
            Err(Error::Policy(_))
        ));
    }

    #[test]
    fn slr_first_contraction() {
        assert!((slr_alpha(40.0, 0.05, 1) - 0.975).abs() < 1e-15);
        let s = slr_contraction_step(0.5, 3.0, 3.0, 1, 40.0, 0.05).unwrap();
        assert!((s - 0.975 * 0.5).abs() < 1e-15);
        for k in 1..1000 {
            let a = slr_alpha(40.0, 0.05, k);
            assert!((0.0..1.0).contains(&a));
        }
    }

    #[test]
    fn slblr_arithmetic() {
        assert_eq!(slblr_step(10.0, 6.0, 4.0, 0.5, 0.5).unwrap(), 0.25);
        assert_eq!(
            slblr_step(10.0, 6.0, 4.0, 0.5, 1.0).unwrap(),
            polyak_step(10.0, 6.0, 4.0, 0.5).unwrap()
        );
    }

    #[test]
    fn delta_shrinks_exactly_when_path_exceeds_limit() {
        let mut p = SubgradientLevel::new(0.5, 100.0, 60.0, 0.5, 0.5);
        p.observe(0.0);
        p.moved(30.0);
        p.moved(30.0);
        assert_eq!(p.delta, 100.0, "path equal to R does not trigger");
        p.moved(1e-9);
        assert_eq!(p.delta, 50.0);
        assert_eq!(p.path(), 0.0);
    }

    #[test]
    fn sufficient_ascent_resets_path_and_keeps_delta() {
        let mut p = SubgradientLevel::new(0.5, 100.0, 60.0, 0.5, 0.5);
        p.observe(0.0);
        p.moved(40.0);
        p.observe(49.0);
        assert_eq!(p.path(), 40.0);
        p.observe(50.0);
        assert_eq!(p.path(), 0.0);
        assert_eq!(p.delta, 100.0);
        assert_eq!(p.level(), 150.0);
    }

    #[test]
    fn record_is_running_maximum() {
        let mut p = SubgradientLevel::new(0.5, 10.0, 60.0, 0.5, 0.5);
        for v in [1.0, 3.0, 2.0, -5.0] {
            p.observe(v);
        }
        assert_eq!(p.record(), 3.0);
    }

    #[test]
    fn parameter_ranges_are_validated() {
        assert!(PolicyConfig::Polyak {
            q_star: 1.0,
            gamma: 2.0
        }
        .build(3)
        .is_err());
        assert!(PolicyConfig::SurrogatePolyak {
            q_star: 1.0,
            gamma: Some(1.0)
        }
        .build(3)
        .is_err());
        assert!(PolicyConfig::Slr { m: 0.5, r: 0.05 }.build(3).is_err());
        assert!(PolicyConfig::Slblr {
            gamma: None,
            zeta: 1.5,
            level_form: LevelForm::Inversion
        }
        .build(3)
        .is_err());
        match PolicyConfig::slblr_default().build(4).unwrap() {
            PolicyState::Slblr(s) => assert_eq!(s.gamma, 0.25),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn slblr_holds_initial_step_until_a_level_exists() {
        let mut p = PolicyConfig::slblr_default().build(2).unwrap();
        let ctx = StepContext {
            k: 5,
            value: 1.0,
            g_norm_sq: 4.0,
            s0: 0.1,
            previous: Some((0.1, 2.0)),
        };
        assert_eq!(p.next(&ctx).unwrap(), StepDecision::Step(0.1));
        p.as_slblr_mut().unwrap().level = Some(0.5);
        assert_eq!(p.next(&ctx).unwrap(), StepDecision::LevelOvertaken);
    }

    proptest! {
        #[test]
        fn shift_invariance(level in -100.0f64..100.0, gap in 1e-3f64..50.0, shift in -1e3f64..1e3, g in 0.1f64..10.0) {
            let value = level - gap;
            let a = polyak_step(level, value, g, 0.7).unwrap();
            let b = polyak_step(level + shift, value + shift, g, 0.7).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            let c = slblr_step(level, value, g, 0.3, 0.6).unwrap();
            let d = slblr_step(level + shift, value + shift, g, 0.3, 0.6).unwrap();
            prop_assert!((c - d).abs() <= 1e-9 * c.abs().max(1.0));
            prop_assert!(a > 0.0 && c > 0.0);
        }

        #[test]
        fn slr_steps_contract_consecutive_distances(
            gs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..12),
            s0 in 0.01f64..2.0,
        ) {
            // distances |lambda^{k+1} - lambda^k| = s^k |g^k| shrink by alpha_k exactly
            let norms: Vec<f64> = gs.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            prop_assume!(norms.iter().all(|&n| n > 1e-3));
            let mut lam = vec![0.0; 3];
            let mut dists = Vec::new();
            let mut s = s0;
            for (k, g) in gs.iter().enumerate() {
                if k > 0 {
                    s = slr_contraction_step(s, norms[k - 1], norms[k], k, 40.0, 0.05).unwrap();
                }
                let next: Vec<f64> = lam.iter().zip(g).map(|(l, g)| l + s * g).collect();
                dists.push(next.iter().zip(&lam).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
                lam = next;
            }
            for k in 1..dists.len() {
                let ratio = dists[k] / dists[k - 1];
                prop_assert!((ratio - slr_alpha(40.0, 0.05, k)).abs() < 1e-9);
            }
        }
    }
}
