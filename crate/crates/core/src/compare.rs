//! Head-to-head runs of several stepsize policies on one problem.

use crate::engine::{run, EngineConfig, RunTrace};
use crate::error::Result;
use crate::model::SeparableProblem;
use crate::parallel::{try_map_range, Execution};

#[derive(Debug, Clone)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub traces: Vec<RunTrace>,
}

/// One aligned row: the exact dual value of every run at iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRow {
    pub k: usize,
    pub exact: Vec<Option<f64>>,
    /// Level in force per run, for policies that keep one.
    pub level: Vec<Option<f64>>,
}

/// Runs every configuration on `problem`; `exec` spreads whole runs.
pub fn compare(
    problem: &SeparableProblem,
    runs: &[(String, EngineConfig)],
    exec: Execution,
) -> Result<Comparison> {
    let traces = try_map_range(exec, runs.len(), |i| run(problem, runs[i].1.clone()))?;
    Ok(Comparison {
        labels: runs.iter().map(|(l, _)| l.clone()).collect(),
        traces,
    })
}

impl Comparison {
    /// Last iteration reached by every run.
    pub fn common_iteration(&self) -> usize {
        self.traces
            .iter()
            .map(|t| t.final_record().k)
            .min()
            .unwrap_or(0)
    }

    /// Latest iteration `<= common_iteration` where every run has an exact
    /// dual value.
    pub fn final_common_sweep(&self) -> Option<usize> {
        let common = self.common_iteration();
        (0..=common).rev().find(|&k| {
            self.traces
                .iter()
                .all(|t| t.records.get(k).is_some_and(|r| r.exact_dual.is_some()))
        })
    }

    /// Exact dual value of run `i` at iteration `k`.
    pub fn exact_at(&self, i: usize, k: usize) -> Option<f64> {
        self.traces[i].records.get(k).and_then(|r| r.exact_dual)
    }

    /// Rows for every iteration up to the longest run where at least one
    /// run has an exact value.
    pub fn aligned_rows(&self) -> Vec<AlignedRow> {
        let last = self
            .traces
            .iter()
            .map(|t| t.final_record().k)
            .max()
            .unwrap_or(0);
        (0..=last)
            .filter_map(|k| {
                let exact: Vec<Option<f64>> = self
                    .traces
                    .iter()
                    .map(|t| t.records.get(k).and_then(|r| r.exact_dual))
                    .collect();
                exact.iter().any(Option::is_some).then(|| AlignedRow {
                    k,
                    level: self
                        .traces
                        .iter()
                        .map(|t| t.records.get(k).and_then(|r| r.level))
                        .collect(),
                    exact,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::InitialMultipliers;
    use crate::model::gap::gap_to_separable;
    use crate::model::GapInstance;
    use crate::stepsize::PolicyConfig;

    #[test]
    fn identical_policies_give_identical_columns() {
        let p = gap_to_separable(&GapInstance::type_d(3, 12, 4).unwrap()).unwrap();
        let mut cfg = EngineConfig::slblr(0.5, 60);
        cfg.initial = InitialMultipliers::Constant { value: 101.0 };
        let runs = vec![("a".to_string(), cfg.clone()), ("b".to_string(), cfg)];
        let c = compare(&p, &runs, Execution::Parallel).unwrap();
        for row in c.aligned_rows() {
            assert_eq!(row.exact[0], row.exact[1]);
        }
        assert_eq!(c.final_common_sweep(), Some(c.common_iteration()));
    }

    #[test]
    fn common_sweep_stops_at_the_shortest_run() {
        let p = gap_to_separable(&GapInstance::type_d(3, 12, 4).unwrap()).unwrap();
        let long = EngineConfig::slblr(0.5, 40).with_policy(PolicyConfig::slr_default());
        let short = EngineConfig::slblr(0.5, 17).with_policy(PolicyConfig::slr_default());
        let c = compare(
            &p,
            &[("long".into(), long), ("short".into(), short)],
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(c.common_iteration(), 17);
        let k = c.final_common_sweep().unwrap();
        assert!((15..=17).contains(&k), "{k}");
        assert!(c.exact_at(0, k).is_some() && c.exact_at(1, k).is_some());
        assert!(c.exact_at(1, 17).is_some());
    }
}
