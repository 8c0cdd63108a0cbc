use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::auc::auc;
use super::latency::LatencyStats;
use crate::data::{partition_by_class, sample_with, split_sizes, split_with, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::onlad::{DetectorConfig, OnladDetector};
use crate::oselm::UpdateStatus;

/// What a testbed needs from a detector.
pub trait AnomalyModel {
    fn init(&mut self, x0: &Matrix) -> Result<()>;
    fn score(&mut self, x: &[f64]) -> Result<f64>;
    fn train(&mut self, x: &[f64]) -> Result<UpdateStatus>;
}

impl AnomalyModel for OnladDetector {
    fn init(&mut self, x0: &Matrix) -> Result<()> {
        OnladDetector::init(self, x0)
    }

    fn score(&mut self, x: &[f64]) -> Result<f64> {
        OnladDetector::score(self, x)
    }

    fn train(&mut self, x: &[f64]) -> Result<UpdateStatus> {
        Ok(self.train_step(x, None)?.trained)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OfflineConfig {
    pub detector: DetectorConfig,
    pub train_fraction: f64,
    /// Anomalies per class, as a fraction of the normal test count.
    pub anomaly_ratio: f64,
    pub trials: usize,
    pub seed: u64,
}

impl OfflineConfig {
    pub fn new(detector: DetectorConfig) -> Self {
        OfflineConfig {
            detector,
            train_fraction: 0.8,
            anomaly_ratio: 0.1,
            trials: 5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        if self.detector.ff != 1.0 {
            return Err(Error::InvalidArgument("the offline testbed runs without forgetting (ff = 1)".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("train fraction {} outside (0, 1)", self.train_fraction)));
        }
        check_common(self.anomaly_ratio, self.trials)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnlineConfig {
    pub detector: DetectorConfig,
    /// init / test / valid fractions of every class.
    pub fractions: [f64; 3],
    /// Share of each class's test part held out as anomaly material.
    pub anomaly_split: f64,
    /// Anomalies per concept, as a fraction of the concept's normal count.
    pub anomaly_ratio: f64,
    /// Stream the validation part instead of the test part.
    pub use_valid: bool,
    pub trials: usize,
    pub seed: u64,
}

impl OnlineConfig {
    pub fn new(detector: DetectorConfig) -> Self {
        OnlineConfig {
            detector,
            fractions: [0.10, 0.45, 0.45],
            anomaly_split: 0.1,
            anomaly_ratio: 0.1,
            use_valid: false,
            trials: 5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.fractions.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "online split fractions {:?} must be positive and sum to 1",
                self.fractions
            )));
        }
        if !(self.anomaly_split > 0.0 && self.anomaly_split < 1.0) {
            return Err(Error::InvalidArgument(format!("anomaly split {} outside (0, 1)", self.anomaly_split)));
        }
        check_common(self.anomaly_ratio, self.trials)
    }
}

fn check_common(anomaly_ratio: f64, trials: usize) -> Result<()> {
    if !(anomaly_ratio > 0.0 && anomaly_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("anomaly ratio {anomaly_ratio} outside (0, 1]")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    Ok(())
}

/// AUC of one class (offline) or one concept (online).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupResult {
    pub class: String,
    pub normal: usize,
    pub anomalies: usize,
    /// `None` when the group was skipped or had a single label.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub auc: f64,
    pub groups: Vec<GroupResult>,
    /// Per-sample wall clock: prediction only offline, predict+train online.
    pub step_latency: LatencyStats,
}

fn anomaly_count(normal: usize, ratio: f64) -> usize {
    (normal as f64 * ratio + 1e-9).floor() as usize
}

/// One offline trial with the default detector.
pub fn offline_testbed(ds: &Dataset, cfg: &OfflineConfig) -> Result<TrialResult> {
    let detector = cfg.detector;
    offline_testbed_with(ds, cfg, |n, seed| OnladDetector::new(n, &detector, seed))
}

/// One offline trial: per class, fit on the class's training part, then
/// score its test part mixed with anomalies drawn from the other classes'
/// test parts. Returns the mean AUC over classes.
pub fn offline_testbed_with<M, F>(ds: &Dataset, cfg: &OfflineConfig, make: F) -> Result<TrialResult>
where
    M: AnomalyModel,
    F: Fn(usize, u64) -> Result<M>,
{
    cfg.validate()?;
    if ds.class_count() < 2 {
        return Err(Error::InvalidArgument("testbeds need at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fractions = [cfg.train_fraction, 1.0 - cfg.train_fraction];
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in partition_by_class(ds) {
        let mut parts = split_with(&class, &fractions, &mut rng)?.into_iter();
        train.push(parts.next().unwrap());
        test.push(parts.next().unwrap());
    }

    let mut groups = Vec::new();
    let mut timings = Vec::new();
    for c in 0..ds.class_count() {
        let pool: Vec<usize> = (0..ds.class_count()).filter(|&j| j != c).flat_map(|j| test[j].iter().copied()).collect();
        let n_anomalies = anomaly_count(test[c].len(), cfg.anomaly_ratio);
        let anomalies = sample_with(&pool, n_anomalies, &mut rng)?;
        let model_seed = rng.gen();
        let mut group = GroupResult {
            class: ds.class_names[c].clone(),
            normal: test[c].len(),
            anomalies: n_anomalies,
            auc: None,
        };

        let mut model = make(ds.n_features(), model_seed)?;
        match model.init(&ds.features.select_rows(&train[c])) {
            Ok(()) => {}
            Err(e @ Error::InitTooSmall { .. }) => {
                warn!("class {}: {e}; skipped", group.class);
                groups.push(group);
                continue;
            }
            Err(e) => return Err(e),
        }
        let mut scores = Vec::with_capacity(test[c].len() + anomalies.len());
        for &i in test[c].iter().chain(&anomalies) {
            let t = Instant::now();
            scores.push(model.score(ds.row(i))?);
            timings.push(t.elapsed());
        }
        let labels: Vec<bool> = (0..scores.len()).map(|k| k >= test[c].len()).collect();
        match auc(&scores, &labels) {
            Ok(a) => group.auc = Some(a),
            Err(Error::SingleClass) => warn!("class {}: no anomalies sampled; skipped", group.class),
            Err(e) => return Err(e),
        }
        groups.push(group);
    }

    let aucs: Vec<f64> = groups.iter().filter_map(|g| g.auc).collect();
    if aucs.is_empty() {
        return Err(Error::InvalidArgument("no class could be evaluated".into()));
    }
    Ok(TrialResult {
        seed: cfg.seed,
        auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
        groups,
        step_latency: LatencyStats::from_durations(&timings),
    })
}

pub fn online_testbed(ds: &Dataset, cfg: &OnlineConfig) -> Result<TrialResult> {
    let detector = cfg.detector;
    online_testbed_with(ds, cfg, |n, seed| OnladDetector::new(n, &detector, seed))
}

/// One sample of the online stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamItem {
    pub row: usize,
    pub anomaly: bool,
    pub concept: usize,
}

/// Concept stream of one online trial: the shuffled class order, the init
/// rows of the first concept, and the stream itself.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineStream {
    pub order: Vec<usize>,
    pub init: Vec<usize>,
    pub items: Vec<StreamItem>,
    pub model_seed: u64,
}

pub fn online_stream(ds: &Dataset, cfg: &OnlineConfig) -> Result<OnlineStream> {
    cfg.validate()?;
    let c = ds.class_count();
    if c < 2 {
        return Err(Error::InvalidArgument("testbeds need at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut init, mut normal, mut anomaly) = (Vec::new(), Vec::new(), Vec::new());
    for class in partition_by_class(ds) {
        let mut parts = split_with(&class, &cfg.fractions, &mut rng)?.into_iter();
        init.push(parts.next().unwrap());
        let test = parts.next().unwrap();
        let valid = parts.next().unwrap();
        let stream = if cfg.use_valid { valid } else { test };
        let sizes = split_sizes(stream.len(), &[1.0 - cfg.anomaly_split, cfg.anomaly_split])?;
        normal.push(stream[..sizes[0]].to_vec());
        anomaly.push(stream[sizes[0]..].to_vec());
    }

    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(&mut rng);
    let mut items = Vec::new();
    for (concept, &k) in order.iter().enumerate() {
        let pool: Vec<usize> = (0..c).filter(|&j| j != k).flat_map(|j| anomaly[j].iter().copied()).collect();
        let n_anomalies = anomaly_count(normal[k].len(), cfg.anomaly_ratio);
        let mut block: Vec<StreamItem> = normal[k]
            .iter()
            .map(|&row| StreamItem { row, anomaly: false, concept })
            .chain(sample_with(&pool, n_anomalies, &mut rng)?.into_iter().map(|row| StreamItem {
                row,
                anomaly: true,
                concept,
            }))
            .collect();
        block.shuffle(&mut rng);
        items.extend(block);
    }
    Ok(OnlineStream {
        init: init[order[0]].clone(),
        order,
        items,
        model_seed: rng.gen(),
    })
}

/// One online trial: initialise on the first concept's init rows, then for
/// every streamed sample score it, record the score, and train on it.
pub fn online_testbed_with<M, F>(ds: &Dataset, cfg: &OnlineConfig, make: F) -> Result<TrialResult>
where
    M: AnomalyModel,
    F: Fn(usize, u64) -> Result<M>,
{
    let stream = online_stream(ds, cfg)?;
    let mut model = make(ds.n_features(), stream.model_seed)?;
    model.init(&ds.features.select_rows(&stream.init))?;

    let mut scores = Vec::with_capacity(stream.items.len());
    let mut timings = Vec::with_capacity(stream.items.len());
    for item in &stream.items {
        let x = ds.row(item.row);
        let t = Instant::now();
        scores.push(model.score(x)?);
        model.train(x)?;
        timings.push(t.elapsed());
    }
    let labels: Vec<bool> = stream.items.iter().map(|i| i.anomaly).collect();

    let groups = stream
        .order
        .iter()
        .enumerate()
        .map(|(concept, &k)| {
            let idx: Vec<usize> = (0..stream.items.len()).filter(|&i| stream.items[i].concept == concept).collect();
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            let anomalies = l.iter().filter(|&&a| a).count();
            GroupResult {
                class: ds.class_names[k].clone(),
                normal: l.len() - anomalies,
                anomalies,
                auc: auc(&s, &l).ok(),
            }
        })
        .collect();

    Ok(TrialResult {
        seed: cfg.seed,
        auc: auc(&scores, &labels)?,
        groups,
        step_latency: LatencyStats::from_durations(&timings),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Activation;
    use crate::oselm::InitRange;
    use std::cell::RefCell;
    use std::rc::Rc;

    struct Constant;

    impl AnomalyModel for Constant {
        fn init(&mut self, _: &Matrix) -> Result<()> {
            Ok(())
        }
        fn score(&mut self, _: &[f64]) -> Result<f64> {
            Ok(1.0)
        }
        fn train(&mut self, _: &[f64]) -> Result<UpdateStatus> {
            Ok(UpdateStatus::Trained)
        }
    }

    #[derive(Debug, PartialEq)]
    enum Event {
        Score(Vec<f64>),
        Train(Vec<f64>),
    }

    struct Audit(Rc<RefCell<Vec<Event>>>);

    impl AnomalyModel for Audit {
        fn init(&mut self, _: &Matrix) -> Result<()> {
            Ok(())
        }
        fn score(&mut self, x: &[f64]) -> Result<f64> {
            self.0.borrow_mut().push(Event::Score(x.to_vec()));
            Ok(x[0])
        }
        fn train(&mut self, x: &[f64]) -> Result<UpdateStatus> {
            self.0.borrow_mut().push(Event::Train(x.to_vec()));
            Ok(UpdateStatus::Trained)
        }
    }

    /// `classes` Gaussian blobs in `dims` dimensions, centres spaced `gap`
    /// apart along every axis; features clamped into [0, 1].
    fn blobs(per_class: usize, classes: usize, dims: usize, gap: f64, spread: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for _ in 0..per_class {
                for d in 0..dims {
                    let centre = 0.2 + gap * ((c + d) % classes) as f64;
                    let u: f64 = rng.gen::<f64>() + rng.gen::<f64>() + rng.gen::<f64>() - 1.5;
                    data.push((centre + spread * u).clamp(0.0, 1.0));
                }
                labels.push(c);
            }
        }
        let names = (0..classes).map(|c| c.to_string()).collect();
        Dataset::new("blobs", Matrix::from_vec(labels.len(), dims, data).unwrap(), labels, names).unwrap()
    }

    fn detector(hidden: usize, activation: Activation, ff: f64) -> DetectorConfig {
        DetectorConfig {
            hidden,
            activation,
            init_range: InitRange::UNIT,
            ff,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn constant_detector_scores_half() {
        let ds = blobs(60, 3, 4, 0.3, 0.05, 1);
        let off = OfflineConfig::new(detector(4, Activation::Identity, 1.0));
        assert_eq!(offline_testbed_with(&ds, &off, |_, _| Ok(Constant)).unwrap().auc, 0.5);
        let on = OnlineConfig::new(detector(4, Activation::Identity, 1.0));
        assert_eq!(online_testbed_with(&ds, &on, |_, _| Ok(Constant)).unwrap().auc, 0.5);
    }

    #[test]
    fn separated_classes_are_detected_offline() {
        let ds = blobs(300, 2, 6, 0.6, 0.05, 2);
        let cfg = OfflineConfig::new(detector(3, Activation::Sigmoid, 1.0));
        let r = offline_testbed(&ds, &cfg).unwrap();
        assert!(r.auc > 0.99, "auc {}", r.auc);
        assert_eq!(r.groups.len(), 2);
    }

    #[test]
    fn forgetting_helps_under_drift() {
        // A low-rank structure per class, so a small autoencoder fits one
        // concept well but not the next one.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = 12;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2usize {
            let basis: Vec<f64> = (0..dims).map(|_| rng.gen()).collect();
            for _ in 0..1500 {
                let a: f64 = rng.gen();
                for (d, &v) in basis.iter().enumerate() {
                    let target = if c == 0 { v * a } else { 1.0 - v * a * ((d % 3) as f64 / 2.0) };
                    data.push((target + 0.01 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0));
                }
                labels.push(c);
            }
        }
        let ds = Dataset::new("drift", Matrix::from_vec(3000, dims, data).unwrap(), labels, vec!["a".into(), "b".into()])
            .unwrap();
        let mut gaps = Vec::new();
        for seed in 0..3 {
            let mut forget = OnlineConfig::new(detector(4, Activation::Identity, 0.95));
            forget.seed = seed;
            let mut keep = forget;
            keep.detector.ff = 1.0;
            assert_eq!(online_stream(&ds, &forget).unwrap(), online_stream(&ds, &keep).unwrap());
            let a = online_testbed(&ds, &forget).unwrap().auc;
            let b = online_testbed(&ds, &keep).unwrap().auc;
            gaps.push(a - b);
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!(mean > 0.1, "gaps {gaps:?}");
    }

    #[test]
    fn online_never_scores_after_training() {
        let ds = blobs(50, 3, 3, 0.3, 0.05, 4);
        let log = Rc::new(RefCell::new(Vec::new()));
        let cfg = OnlineConfig::new(detector(2, Activation::Identity, 1.0));
        online_testbed_with(&ds, &cfg, |_, _| Ok(Audit(log.clone()))).unwrap();
        let events = log.borrow();
        assert_eq!(events.len() % 2, 0);
        for pair in events.chunks(2) {
            match pair {
                [Event::Score(a), Event::Train(b)] => assert_eq!(a, b),
                other => panic!("out of order: {other:?}"),
            }
        }
    }

    #[test]
    fn anomaly_counts_are_capped() {
        let ds = blobs(97, 4, 3, 0.2, 0.05, 5);
        let cfg = OnlineConfig::new(detector(2, Activation::Identity, 1.0));
        let stream = online_stream(&ds, &cfg).unwrap();
        for concept in 0..4 {
            let items: Vec<_> = stream.items.iter().filter(|i| i.concept == concept).collect();
            let normal = items.iter().filter(|i| !i.anomaly).count();
            let anomalies = items.len() - normal;
            assert_eq!(anomalies, normal / 10);
            let class = stream.order[concept];
            assert!(items.iter().all(|i| i.anomaly != (ds.labels[i.row] == class)));
        }
        let r = offline_testbed(&ds, &OfflineConfig::new(detector(2, Activation::Identity, 1.0))).unwrap();
        for g in &r.groups {
            assert_eq!(g.anomalies, g.normal / 10);
        }
    }

    #[test]
    fn stream_uses_disjoint_rows() {
        let ds = blobs(80, 3, 3, 0.3, 0.05, 6);
        let cfg = OnlineConfig::new(detector(2, Activation::Identity, 1.0));
        let stream = online_stream(&ds, &cfg).unwrap();
        let normals: Vec<usize> = stream.items.iter().filter(|i| !i.anomaly).map(|i| i.row).collect();
        assert!(stream.init.iter().all(|r| !normals.contains(r)));
        assert!(stream.init.iter().all(|&r| ds.labels[r] == stream.order[0]));
        assert_eq!(stream.init.len(), 8);
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = blobs(80, 3, 5, 0.3, 0.1, 7);
        let mut cfg = OnlineConfig::new(detector(3, Activation::Sigmoid, 0.97));
        cfg.seed = 11;
        let a = online_testbed(&ds, &cfg).unwrap();
        let b = online_testbed(&ds, &cfg).unwrap();
        assert_eq!((a.auc, &a.groups), (b.auc, &b.groups));
        let off = OfflineConfig { seed: 11, ..OfflineConfig::new(detector(3, Activation::Sigmoid, 1.0)) };
        let a = offline_testbed(&ds, &off).unwrap();
        let b = offline_testbed(&ds, &off).unwrap();
        assert_eq!((a.auc, &a.groups), (b.auc, &b.groups));
    }

    #[test]
    fn small_classes_are_skipped_offline() {
        // Class 0 has 4 training rows, below the 6 hidden nodes.
        let mut ds = blobs(60, 3, 8, 0.3, 0.05, 8);
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] != 0 || i % 12 == 0).collect();
        ds = ds.subset(&keep);
        let r = offline_testbed(&ds, &OfflineConfig::new(detector(6, Activation::Sigmoid, 1.0))).unwrap();
        assert!(r.groups[0].auc.is_none());
        assert!(r.groups[1].auc.is_some());
    }

    #[test]
    fn config_validation() {
        let mut off = OfflineConfig::new(detector(4, Activation::Identity, 0.9));
        assert!(off.validate().is_err());
        off.detector.ff = 1.0;
        off.trials = 0;
        assert!(off.validate().is_err());
        let mut on = OnlineConfig::new(detector(4, Activation::Identity, 0.9));
        on.fractions = [0.2, 0.45, 0.45];
        assert!(on.validate().is_err());
    }
}
