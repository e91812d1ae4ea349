//! Many seeds of one scenario, with the summary statistics of their
//! eclipse times.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::simnet::{run_scenario_with, Outcome, PoolCache, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBatch {
    /// Template; its `seed` is replaced per run.
    pub scenario: ScenarioConfig,
    pub seeds: Vec<u64>,
    /// Trace files and `summary.json` go here when set.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub outcome: Option<Outcome>,
    pub eclipse_time_ns: Option<u64>,
    /// Set when the run itself failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1_ns: u64,
    pub median_ns: u64,
    pub q3_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: usize,
    pub successes: usize,
    pub errors: usize,
    pub success_rate: f64,
    /// Over successful runs only.
    pub quartiles: Option<Quartiles>,
    /// Median over all completed runs, timeouts ranked after every eclipse.
    /// `None` when it falls on a timeout.
    pub censored_median_ns: Option<u64>,
    pub results: Vec<SeedResult>,
}

impl ExperimentBatch {
    pub fn new(scenario: ScenarioConfig, seeds: impl IntoIterator<Item = u64>) -> Self {
        ExperimentBatch {
            scenario,
            seeds: seeds.into_iter().collect(),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::InvalidScenario(
                "batch seeds must be distinct".into(),
            ));
        }
        self.scenario.validate()
    }
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace-{seed}.jsonl")
}

/// Linear interpolation between closest ranks on sorted data.
pub fn quantile(sorted: &[u64], q: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some((sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac).round() as u64)
}

fn censored_median(results: &[SeedResult]) -> Option<u64> {
    let mut times: Vec<Option<u64>> = results
        .iter()
        .filter(|r| r.outcome.is_some())
        .map(|r| r.eclipse_time_ns)
        .collect();
    if times.is_empty() {
        return None;
    }
    // `None` (timeout) sorts after every eclipse time.
    times.sort_by_key(|t| t.unwrap_or(u64::MAX));
    let n = times.len();
    if n % 2 == 1 {
        times[n / 2]
    } else {
        let (a, b) = (times[n / 2 - 1]?, times[n / 2]?);
        Some(((a as u128 + b as u128) / 2) as u64)
    }
}

pub fn summarize(mut results: Vec<SeedResult>) -> BatchSummary {
    results.sort_by_key(|r| r.seed);
    let mut times: Vec<u64> = results.iter().filter_map(|r| r.eclipse_time_ns).collect();
    times.sort_unstable();
    let runs = results.len();
    let successes = times.len();
    let quartiles = (!times.is_empty()).then(|| Quartiles {
        q1_ns: quantile(&times, 0.25).expect("non-empty"),
        median_ns: quantile(&times, 0.5).expect("non-empty"),
        q3_ns: quantile(&times, 0.75).expect("non-empty"),
    });
    BatchSummary {
        runs,
        successes,
        errors: results.iter().filter(|r| r.error.is_some()).count(),
        success_rate: if runs == 0 {
            0.0
        } else {
            successes as f64 / runs as f64
        },
        quartiles,
        censored_median_ns: censored_median(&results),
        results,
    }
}

fn run_one(
    template: &ScenarioConfig,
    seed: u64,
    pools: &PoolCache,
    dir: Option<&Path>,
) -> SeedResult {
    let cfg = ScenarioConfig {
        seed,
        ..template.clone()
    };
    let outcome = run_scenario_with(&cfg, pools).and_then(|trace| {
        if let Some(dir) = dir {
            let f = File::create(dir.join(trace_file_name(seed)))?;
            trace.write_jsonl(BufWriter::new(f))?;
        }
        Ok(trace.result)
    });
    match outcome {
        Ok(r) => SeedResult {
            seed,
            outcome: Some(r.outcome),
            eclipse_time_ns: r.eclipse_time_ns,
            error: None,
        },
        Err(e) => {
            log::warn!("seed {seed} failed: {e}");
            SeedResult {
                seed,
                outcome: None,
                eclipse_time_ns: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Run every seed; a failing seed is recorded and the batch goes on.
pub fn run_batch(batch: &ExperimentBatch, exec: Execution) -> Result<BatchSummary> {
    run_batch_with(batch, exec, &PoolCache::new())
}

pub fn run_batch_with(
    batch: &ExperimentBatch,
    exec: Execution,
    pools: &PoolCache,
) -> Result<BatchSummary> {
    batch.validate()?;
    let dir = batch.output_dir.as_deref();
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let results = exec.map(batch.seeds.clone(), |seed| {
        run_one(&batch.scenario, seed, pools, dir)
    });
    let summary = summarize(results);
    if let Some(d) = dir {
        let f = File::create(d.join("summary.json"))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &summary)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(seed: u64, t: Option<u64>) -> SeedResult {
        SeedResult {
            seed,
            outcome: Some(if t.is_some() {
                Outcome::Eclipsed
            } else {
                Outcome::Timeout
            }),
            eclipse_time_ns: t,
            error: None,
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [10, 20, 30, 40];
        assert_eq!(quantile(&v, 0.5), Some(25));
        assert_eq!(quantile(&v, 0.25), Some(18));
        assert_eq!(quantile(&v, 1.0), Some(40));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn summary_counts_and_censoring() {
        let s = summarize(vec![res(3, None), res(1, Some(100)), res(2, Some(300))]);
        assert_eq!(s.runs, 3);
        assert_eq!(s.successes, 2);
        assert_eq!(
            s.results.iter().map(|r| r.seed).collect::<Vec<_>>(),
            [1, 2, 3]
        );
        assert_eq!(s.quartiles.as_ref().unwrap().median_ns, 200);
        assert_eq!(s.censored_median_ns, Some(300));
        let s = summarize(vec![res(1, None), res(2, None), res(3, Some(5))]);
        assert_eq!(s.censored_median_ns, None);
        let s = summarize(vec![
            res(1, Some(3)),
            res(2, Some(6)),
            res(3, Some(9)),
            res(4, None),
        ]);
        assert_eq!(s.censored_median_ns, Some(7));
    }

    #[test]
    fn summary_is_order_independent() {
        let a = summarize(vec![res(1, Some(5)), res(2, None), res(3, Some(7))]);
        let b = summarize(vec![res(3, Some(7)), res(1, Some(5)), res(2, None)]);
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let b = ExperimentBatch::new(ScenarioConfig::default(), [1, 2, 1]);
        assert!(b.validate().is_err());
    }

    #[test]
    fn empty_summary() {
        let s = summarize(Vec::new());
        assert_eq!(s.success_rate, 0.0);
        assert!(s.quartiles.is_none());
        assert!(s.censored_median_ns.is_none());
    }
}
