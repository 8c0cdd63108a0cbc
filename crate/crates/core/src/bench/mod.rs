//! Evaluation harness: AUC, offline and online testbeds, trial pool,
//! latency measurement and result files.

pub mod auc;
pub mod latency;
pub mod testbed;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::onlad::DetectorConfig;

pub use auc::auc;
pub use latency::{latency_bench, LatencyReport, LatencyStats, DEFAULT_WARMUP};
pub use testbed::{
    offline_testbed, offline_testbed_with, online_stream, online_testbed, online_testbed_with, AnomalyModel,
    GroupResult, OfflineConfig, OnlineConfig, OnlineStream, StreamItem, TrialResult,
};

/// Seed of trial `index` given the run's base seed.
pub fn trial_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// Runs `trials` independent trials, in parallel when `jobs > 1`. Results
/// come back in trial order whatever the schedule.
pub fn run_trials<T, F>(trials: usize, base_seed: u64, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let run = |i: usize| f(i, trial_seed(base_seed, i));
    if jobs <= 1 {
        return (0..trials).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| (0..trials).into_par_iter().map(run).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean, sample standard deviation and range.
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Summary {
        trials: n,
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// One line of a results file.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord<'a> {
    pub dataset: &'a str,
    pub testbed: &'a str,
    pub detector: &'a str,
    pub hyperparams: &'a DetectorConfig,
    pub trial: usize,
    pub seed: u64,
    pub auc: f64,
    pub groups: &'a [GroupResult],
    pub latency: LatencyStats,
}

impl<'a> ResultRecord<'a> {
    pub fn new(
        dataset: &'a str,
        testbed: &'a str,
        detector: &'a str,
        hyperparams: &'a DetectorConfig,
        trial: usize,
        result: &'a TrialResult,
    ) -> Self {
        ResultRecord {
            dataset,
            testbed,
            detector,
            hyperparams,
            trial,
            seed: result.seed,
            auc: result.auc,
            groups: &result.groups,
            latency: result.step_latency,
        }
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(records: &[T], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
