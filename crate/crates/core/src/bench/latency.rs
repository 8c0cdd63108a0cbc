use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::onlad::{DetectorConfig, OnladDetector};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_us: f64,
    pub p99_us: f64,
}

impl LatencyStats {
    pub fn from_durations(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        let mut us: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        us.sort_by(f64::total_cmp);
        let rank = ((0.99 * us.len() as f64).ceil() as usize).clamp(1, us.len());
        LatencyStats {
            count: us.len(),
            mean_us: us.iter().sum::<f64>() / us.len() as f64,
            p99_us: us[rank - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyReport {
    pub n: usize,
    pub hidden: usize,
    pub train: LatencyStats,
    pub predict: LatencyStats,
}

pub const DEFAULT_WARMUP: usize = 100;

/// Times single-sample predict and train steps of a freshly initialised
/// detector on uniform random inputs. The first `warmup` iterations of each
/// kind are discarded.
pub fn latency_bench(n: usize, config: &DetectorConfig, iterations: usize, warmup: usize, seed: u64) -> Result<LatencyReport> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("latency bench needs at least one iteration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut det = OnladDetector::new(n, config, rng.gen())?;
    det.init(&Matrix::random_uniform(2 * config.hidden, n, 0.0, 1.0, &mut rng))?;

    let total = warmup + iterations;
    let inputs: Vec<Vec<f64>> = (0..64).map(|_| (0..n).map(|_| rng.gen()).collect()).collect();

    let mut predict = Vec::with_capacity(iterations);
    let mut sink = 0.0;
    for i in 0..total {
        let x = &inputs[i % inputs.len()];
        let t = Instant::now();
        sink += det.score(x)?;
        let d = t.elapsed();
        if i >= warmup {
            predict.push(d);
        }
    }

    let mut train = Vec::with_capacity(iterations);
    for i in 0..total {
        let x = &inputs[i % inputs.len()];
        let t = Instant::now();
        let r = det.train_step(x, None)?;
        let d = t.elapsed();
        sink += r.score.unwrap_or(0.0);
        if i >= warmup {
            train.push(d);
        }
    }
    std::hint::black_box(sink);

    Ok(LatencyReport {
        n,
        hidden: config.hidden,
        train: LatencyStats::from_durations(&train),
        predict: LatencyStats::from_durations(&predict),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_known_samples() {
        let d: Vec<Duration> = (1..=100).map(Duration::from_micros).collect();
        let s = LatencyStats::from_durations(&d);
        assert_eq!(s.count, 100);
        assert!((s.mean_us - 50.5).abs() < 1e-9);
        assert!((s.p99_us - 99.0).abs() < 1e-9);
        assert_eq!(LatencyStats::from_durations(&[]).count, 0);
    }

    #[test]
    fn bench_runs() {
        let cfg = DetectorConfig { hidden: 4, ..DetectorConfig::default() };
        let r = latency_bench(8, &cfg, 50, 10, 1).unwrap();
        assert_eq!(r.train.count, 50);
        assert_eq!(r.predict.count, 50);
        assert!(r.train.mean_us > 0.0);
        assert!(latency_bench(8, &cfg, 0, 10, 1).is_err());
    }
}
