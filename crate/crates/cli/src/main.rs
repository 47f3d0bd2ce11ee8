//! `slblr`: solve, compare and verify from the command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 repair failure,
//! 3 a verification check failed.

mod output;
mod settings;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use output::{RepairSummary, Summary};
use settings::{PolicyName, Settings};
use slblr::compare::compare;
use slblr::engine::{run, RunTrace};
use slblr::model::catalog::{resolve, Instance, Resolved};
use slblr::model::SmallMilpInstance;
use slblr::parallel::try_map_range;
use slblr::repair::{
    relative_gap_percent, repair_covering_from_trace, repair_from_trace, RepairOptions,
    RepairStatus,
};
use slblr::stepsize::PolicyConfig;
use slblr::verify::{run_suite, Suite};
use slblr::Execution;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "slblr",
    version,
    about = "Lagrangian relaxation with level-based stepsizes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy, repair the relaxed solution, write trace.csv and summary.json.
    Solve {
        /// example1, gap:<file>:<index>, typed:<M>:<N>:<seed>, a dMMNNN name or a file.
        instance: String,
        /// TOML file with the same keys as the long flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run several policies from the same start and write aligned exact dual values.
    Compare {
        instance: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run a property suite (or `all`) and report each check.
    Verify {
        suite: String,
        /// Worker threads [default: all cores].
        #[arg(long)]
        jobs: Option<usize>,
    },
}

enum Outcome {
    Done,
    RepairFailed,
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::RepairFailed) => ExitCode::from(2),
        Ok(Outcome::ChecksFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Solve {
            instance,
            config,
            settings,
        } => solve(&instance, merged(settings, config.as_deref())?),
        Command::Compare {
            instance,
            config,
            settings,
        } => compare_policies(&instance, merged(settings, config.as_deref())?),
        Command::Verify { suite, jobs } => verify(&suite, jobs),
    }
}

fn merged(cli: Settings, config: Option<&Path>) -> Result<Settings> {
    Ok(match config {
        Some(path) => cli.or(Settings::from_file(path)?),
        None => cli,
    })
}

/// Runs `f` on a pool of `jobs` threads, or the global pool.
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(f)),
        None => Ok(f()),
    }
}

fn load(name: &str) -> Result<(Resolved, slblr::model::SeparableProblem)> {
    let resolved = resolve(name)?;
    let problem = resolved.instance.problem()?;
    Ok((resolved, problem))
}

fn create_out(settings: &Settings) -> Result<PathBuf> {
    let out = settings.out_dir();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn solve(name: &str, settings: Settings) -> Result<Outcome> {
    let started = Instant::now();
    let (resolved, problem) = load(name)?;
    let policy = settings.policy.unwrap_or(PolicyName::Slblr);
    let cfg = settings.engine_config(policy, &resolved.instance, false)?;
    let repeat = settings.repeat()?;
    let mut traces = with_jobs(settings.jobs, || {
        try_map_range(Execution::Parallel, repeat, |_| run(&problem, cfg.clone()))
    })??;
    let run_wall_secs = traces.iter().map(|t| t.wall_secs).collect();
    let trace = traces.swap_remove(0);

    let out = create_out(&settings)?;
    let reference = resolved.instance.reference_multipliers();
    output::write_trace(&out.join("trace.csv"), &trace, reference.as_deref())?;
    output::write_levels(&out.join("levels.csv"), &trace)?;

    let repair = repair(&resolved.instance, &trace)?;
    let last = trace.final_record();
    let summary = Summary {
        instance: &resolved.name,
        origin: resolved.origin.describe(),
        policy: cfg.policy.name(),
        config: &cfg,
        termination: trace.termination,
        iterations: trace.iterations(),
        subproblem_solves: trace.subproblem_solves,
        level_events: trace.level_events.len(),
        detector_firings: trace.records.iter().filter(|r| r.detector_fired).count(),
        best_value: trace.best_value,
        certified_lb: trace.certified_lb,
        final_multipliers: &last.multipliers,
        reference_distance: reference.as_deref().map(|l| last.distance_to(l)),
        repair,
        run_wall_secs,
        total_wall_secs: started.elapsed().as_secs_f64(),
    };
    output::write_json(&out.join("summary.json"), &summary)?;

    println!(
        "{} [{}]: {} after {} iterations, LB {}",
        summary.instance,
        summary.origin,
        summary.termination.as_str(),
        summary.iterations,
        summary
            .certified_lb
            .map_or("none".into(), |v| v.to_string())
    );
    match &summary.repair {
        RepairSummary::Assignment(r) => println!(
            "repair {:?}: UB {} gap {}%",
            r.status,
            r.feasible_cost.map_or("none".into(), |v| v.to_string()),
            r.gap_percent.map_or("n/a".into(), |v| v.to_string())
        ),
        RepairSummary::Covering {
            feasible_cost,
            gap_percent,
            ..
        } => println!(
            "repair: UB {feasible_cost} gap {}%",
            gap_percent.map_or("n/a".into(), |v| v.to_string())
        ),
    }
    println!("wrote {}", out.display());
    Ok(if summary.repair.failed() {
        Outcome::RepairFailed
    } else {
        Outcome::Done
    })
}

fn repair(instance: &Instance, trace: &RunTrace) -> Result<RepairSummary> {
    Ok(match instance {
        Instance::Gap(gap) => {
            RepairSummary::Assignment(repair_from_trace(gap, trace, &RepairOptions::default())?)
        }
        Instance::Example1 => {
            let (solution, cost) =
                repair_covering_from_trace(&SmallMilpInstance::example1(), trace)?;
            let gap_percent = match trace.certified_lb {
                Some(lb) => Some(relative_gap_percent(cost, lb)?),
                None => None,
            };
            RepairSummary::Covering {
                status: RepairStatus::Repaired,
                solution,
                feasible_cost: cost,
                lower_bound: trace.certified_lb,
                gap_percent,
            }
        }
    })
}

fn compare_policies(name: &str, settings: Settings) -> Result<Outcome> {
    let policies = settings.policies.clone().unwrap_or_else(|| {
        vec![
            PolicyName::Slblr,
            PolicyName::Slr,
            PolicyName::SubgradientLevel,
        ]
    });
    if policies.len() < 2 {
        bail!("compare needs at least two policies, e.g. --policies slblr,slr");
    }
    let (resolved, problem) = load(name)?;
    let mut runs = Vec::new();
    for (i, &p) in policies.iter().enumerate() {
        let cfg = settings.engine_config(p, &resolved.instance, true)?;
        let base = cfg.policy.name();
        // repeated policies get a positional suffix so columns stay unique
        let label = if policies[..i].contains(&p) || policies[i + 1..].contains(&p) {
            format!("{base}_{}", i + 1)
        } else {
            base.to_string()
        };
        runs.push((label, cfg));
    }
    let c = with_jobs(settings.jobs, || {
        compare(&problem, &runs, Execution::Parallel)
    })??;

    let out = create_out(&settings)?;
    let with_level: Vec<bool> = runs
        .iter()
        .map(|(_, cfg)| matches!(cfg.policy, PolicyConfig::Slblr { .. }))
        .collect();
    output::write_comparison(&out.join("compare.csv"), &c, &with_level)?;
    let reference = resolved.instance.reference_multipliers();
    for (label, trace) in c.labels.iter().zip(&c.traces) {
        output::write_trace(
            &out.join(format!("trace_{label}.csv")),
            trace,
            reference.as_deref(),
        )?;
    }
    match c.final_common_sweep() {
        Some(k) => {
            println!(
                "{} [{}]: final common sweep k = {k}",
                resolved.name,
                resolved.origin.describe()
            );
            for (i, label) in c.labels.iter().enumerate() {
                println!(
                    "  {label}: {}",
                    c.exact_at(i, k).map_or("none".into(), |v| v.to_string())
                );
            }
        }
        None => println!("no iteration where every run has an exact dual value"),
    }
    println!("wrote {}", out.display());
    Ok(Outcome::Done)
}

fn verify(name: &str, jobs: Option<usize>) -> Result<Outcome> {
    let suites: Vec<Suite> = if name == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![name.parse().context("unknown suite (or use `all`)")?]
    };
    let mut all = true;
    for suite in suites {
        let checks = with_jobs(jobs, || run_suite(suite, Execution::Parallel))??;
        for c in checks {
            all &= c.passed;
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            println!("{verdict} {suite}/{}: {}", c.name, c.detail);
        }
    }
    Ok(if all {
        Outcome::Done
    } else {
        Outcome::ChecksFailed
    })
}
