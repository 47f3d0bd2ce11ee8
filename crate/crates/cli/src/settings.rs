//! Run settings shared by the command line and the TOML config file.
//!
//! Every field is optional; a flag given on the command line wins over the
//! same key in the config file, which wins over the per-instance defaults.

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;
use slblr::detector::DetectorVariant;
use slblr::engine::{EngineConfig, InitialMultipliers, UpdateMode};
use slblr::model::catalog::Instance;
use slblr::stepsize::{LevelForm, PolicyConfig};
use slblr::Execution;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Slblr,
    Slr,
    SubgradientLevel,
    Polyak,
    SurrogatePolyak,
    Nonsummable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorName {
    Linear,
    Ball,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Interleaved,
    FullPass,
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelFormName {
    Inversion,
    AsPrinted,
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Stepsize policy (solve).
    #[arg(long, value_enum)]
    pub policy: Option<PolicyName>,
    /// Comma-separated policies (compare).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub policies: Option<Vec<PolicyName>>,
    /// Step fraction gamma; defaults to 1/I for the level-based policies.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Fraction of the level gap used by SLBLR steps [default: 0.6667].
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Ball detector contraction parameter [default: 2].
    #[arg(long)]
    pub nu: Option<f64>,
    /// Level detector for SLBLR [default: ball on GAP, linear otherwise].
    #[arg(long, value_enum)]
    pub detector: Option<DetectorName>,
    /// How a level is recovered from a window step [default: inversion].
    #[arg(long, value_enum)]
    pub level_form: Option<LevelFormName>,
    /// Optimal dual value for the Polyak policies.
    #[arg(long)]
    pub q_star: Option<f64>,
    /// SLR parameter M [default: 40].
    #[arg(long)]
    pub slr_m: Option<f64>,
    /// SLR parameter r [default: 0.05].
    #[arg(long)]
    pub slr_r: Option<f64>,
    /// Subgradient-level path bound R [default: 60].
    #[arg(long)]
    pub level_r: Option<f64>,
    /// Subgradient-level initial delta [default: 100].
    #[arg(long)]
    pub level_delta: Option<f64>,
    /// Initial stepsize.
    #[arg(long)]
    pub step0: Option<f64>,
    /// Constant initial multipliers.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda0: Option<f64>,
    /// Uniform random initial multipliers, `LO:HI`.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda0_uniform: Option<String>,
    /// Seed for random initial multipliers [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Iteration budget.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Update mode [default: interleaved].
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    /// Exact dual evaluation cadence [default: one sweep, I iterations].
    #[arg(long)]
    pub exact_every: Option<usize>,
    /// Stepsize below which a run stops [default: 1e-10].
    #[arg(long)]
    pub step_floor: Option<f64>,
    /// Number of identical runs (timing only; the first run is written).
    #[arg(long)]
    pub repeat: Option<usize>,
    /// Worker threads for independent runs [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! prefer {
    ($a:expr, $b:expr; $($f:ident),* $(,)?) => {
        Settings { $($f: $a.$f.or($b.$f)),* }
    };
}

impl Settings {
    /// Reads a TOML config file with the same keys as the long flags.
    pub fn from_file(path: &Path) -> Result<Settings> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields of `self`, falling back to `other`.
    pub fn or(self, other: Settings) -> Settings {
        prefer!(self, other;
            policy, policies, gamma, zeta, nu, detector, level_form, q_star, slr_m, slr_r,
            level_r, level_delta, step0, lambda0, lambda0_uniform, seed, max_iters, mode,
            exact_every, step_floor, repeat, jobs, out,
        )
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn repeat(&self) -> Result<usize> {
        match self.repeat.unwrap_or(1) {
            0 => bail!("--repeat must be at least 1"),
            n => Ok(n),
        }
    }

    pub fn policy_config(&self, policy: PolicyName) -> Result<PolicyConfig> {
        let level_form = match self.level_form.unwrap_or(LevelFormName::Inversion) {
            LevelFormName::Inversion => LevelForm::Inversion,
            LevelFormName::AsPrinted => LevelForm::AsPrinted,
        };
        let q_star = || self.q_star.context("this policy needs --q-star");
        Ok(match policy {
            PolicyName::Slblr => PolicyConfig::Slblr {
                gamma: self.gamma,
                zeta: self.zeta.unwrap_or(1.0 / 1.5),
                level_form,
            },
            PolicyName::Slr => PolicyConfig::Slr {
                m: self.slr_m.unwrap_or(40.0),
                r: self.slr_r.unwrap_or(0.05),
            },
            PolicyName::SubgradientLevel => PolicyConfig::SubgradientLevel {
                path_limit: self.level_r.unwrap_or(60.0),
                delta0: self.level_delta.unwrap_or(100.0),
                beta: 0.5,
                tau: 0.5,
                gamma: self.gamma,
            },
            PolicyName::Polyak => PolicyConfig::Polyak {
                q_star: q_star()?,
                gamma: self.gamma.unwrap_or(1.0),
            },
            PolicyName::SurrogatePolyak => PolicyConfig::SurrogatePolyak {
                q_star: q_star()?,
                gamma: self.gamma,
            },
            PolicyName::Nonsummable => PolicyConfig::NonSummable,
        })
    }

    /// Engine configuration for one policy. `compare` fixes the initial
    /// stepsize and multipliers to 0.5 and 101 unless overridden.
    pub fn engine_config(
        &self,
        policy: PolicyName,
        instance: &Instance,
        compare: bool,
    ) -> Result<EngineConfig> {
        let gap = instance.gap().is_some();
        let (step0, lambda0, max_iters) = match (compare, gap) {
            (true, _) => (0.5, 101.0, 20_000),
            (false, true) => (0.5, 101.0, 20_000),
            (false, false) => (0.1, 0.0, 1_000),
        };
        let mut cfg = EngineConfig::slblr(
            self.step0.unwrap_or(step0),
            self.max_iters.unwrap_or(max_iters),
        );
        cfg.policy = self.policy_config(policy)?;
        cfg.initial = match (&self.lambda0_uniform, self.lambda0) {
            (Some(_), Some(_)) => bail!("--lambda0 and --lambda0-uniform are mutually exclusive"),
            (Some(range), None) => {
                let (lo, hi) = range
                    .split_once(':')
                    .and_then(|(lo, hi)| Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?)))
                    .with_context(|| {
                        format!("expected LO:HI for --lambda0-uniform, got `{range}`")
                    })?;
                InitialMultipliers::Uniform {
                    lo,
                    hi,
                    seed: self.seed.unwrap_or(0),
                }
            }
            (None, value) => InitialMultipliers::Constant {
                value: value.unwrap_or(lambda0),
            },
        };
        let default_detector = if gap {
            DetectorName::Ball
        } else {
            DetectorName::Linear
        };
        cfg.detector = match (policy, self.detector.unwrap_or(default_detector)) {
            (PolicyName::Slblr, DetectorName::Linear) => Some(DetectorVariant::Linear),
            (PolicyName::Slblr, DetectorName::Ball) => Some(DetectorVariant::Ball {
                nu: self.nu.unwrap_or(2.0),
            }),
            (PolicyName::Slblr, DetectorName::None) => bail!("slblr needs a level detector"),
            _ => None,
        };
        cfg.mode = match self.mode.unwrap_or(ModeName::Interleaved) {
            ModeName::Interleaved => UpdateMode::Interleaved,
            ModeName::FullPass => UpdateMode::FullPass,
            ModeName::Incremental => UpdateMode::Incremental { targets: None },
        };
        cfg.exact_every = self.exact_every;
        if let Some(floor) = self.step_floor {
            cfg.step_floor = floor;
        }
        // each run is single-threaded; --jobs spreads independent runs
        cfg.execution = Execution::Sequential;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_wins_over_file() {
        let file: Settings = toml::from_str("max-iters = 5\nzeta = 0.5\npolicy = \"slr\"").unwrap();
        let cli = Settings {
            max_iters: Some(3),
            ..Settings::default()
        };
        let merged = cli.or(file);
        assert_eq!(merged.max_iters, Some(3));
        assert_eq!(merged.zeta, Some(0.5));
        assert_eq!(merged.policy, Some(PolicyName::Slr));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("max_iterations = 5").is_err());
        assert!(toml::from_str::<Settings>("policy = \"nosuch\"").is_err());
    }

    #[test]
    fn polyak_needs_the_optimal_value() {
        let s = Settings::default();
        assert!(s.policy_config(PolicyName::Polyak).is_err());
        let s = Settings {
            q_star: Some(16.0),
            ..Settings::default()
        };
        assert!(s.policy_config(PolicyName::Polyak).is_ok());
    }

    #[test]
    fn instance_defaults() {
        let s = Settings::default();
        let e1 = s
            .engine_config(PolicyName::Slblr, &Instance::Example1, false)
            .unwrap();
        assert_eq!(e1.initial_step, 0.1);
        assert_eq!(e1.detector, Some(DetectorVariant::Linear));
        let cmp = s
            .engine_config(PolicyName::Slr, &Instance::Example1, true)
            .unwrap();
        assert_eq!(cmp.initial, InitialMultipliers::Constant { value: 101.0 });
        assert_eq!(cmp.detector, None);
        let bad = Settings {
            lambda0_uniform: Some("3".into()),
            ..Settings::default()
        };
        assert!(bad
            .engine_config(PolicyName::Slblr, &Instance::Example1, false)
            .is_err());
    }
}
