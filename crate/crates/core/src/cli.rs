//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::bench::{
    self, latency_bench, offline_testbed, online_testbed, run_trials, summarize, write_jsonl, OfflineConfig,
    OnlineConfig, ResultRecord, TrialResult, DEFAULT_WARMUP,
};
use crate::coremodel::trace::{read_input_trace, read_output_trace, replay, write_input_trace, write_output_trace};
use crate::coremodel::{cost_report, ff_packet, input_packets, parameter_packets, CoreState, Mode, Packet};
use crate::data::{load_csv, minmax_normalize, Dataset, LabelColumn};
use crate::error::{Error, Result};
use crate::matrix::Activation;
use crate::model_io::{load_model, save_model};
use crate::onlad::{DetectorConfig, OnladDetector, DEFAULT_EPSILON};
use crate::oselm::InitRange;

#[derive(Debug, Parser)]
#[command(name = "onlad", version, about = "Sequential anomaly detection with OS-ELM autoencoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-class train/test evaluation without forgetting.
    Offline(TestbedArgs),
    /// Concept-drift stream evaluation.
    Online(OnlineArgs),
    /// Score and learn a CSV stream row by row.
    Stream(StreamArgs),
    /// Print storage and iteration counts.
    Cost(CostArgs),
    /// Feed a packet trace through the fixed-point core.
    Replay(ReplayArgs),
    /// Build a packet trace for a model and a stream.
    Record(RecordArgs),
    /// Measure train and predict step latency.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DetectorArgs {
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value = "sigmoid")]
    pub activation: Activation,
    #[arg(long, default_value_t = 1.0)]
    pub ff: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Anomaly threshold on the score.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Range of the random input weights and biases, as `low,high`.
    #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
    pub init_range: InitRange,
}

impl DetectorArgs {
    pub fn config(&self) -> DetectorConfig {
        DetectorConfig {
            hidden: self.hidden,
            activation: self.activation,
            init_range: self.init_range,
            ff: self.ff,
            epsilon: self.epsilon,
            theta: self.theta.unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TestbedArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Label column: index, header name, `last` or `none`.
    #[arg(long, default_value = "last")]
    pub label_col: LabelColumn,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, env = "ONLAD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Results file, one JSON record per trial.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep only the first N classes.
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OnlineArgs {
    #[command(flatten)]
    pub testbed: TestbedArgs,
    /// Also run the same streams with ff = 1.
    #[arg(long)]
    pub with_nf: bool,
    /// Stream the validation split instead of the test split.
    #[arg(long)]
    pub use_valid: bool,
}

#[derive(Debug, Clone, Args)]
pub struct StreamArgs {
    /// Initial normal chunk (at least `hidden` rows).
    #[arg(long, required_unless_present = "load_model")]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "none")]
    pub label_col: LabelColumn,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Set theta to this percentile of the init chunk's scores.
    #[arg(long, conflicts_with = "theta")]
    pub theta_percentile: Option<f64>,
    #[arg(long, env = "ONLAD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub load_model: Option<PathBuf>,
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    /// Per-row output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub hidden: usize,
    /// Output size (default: n).
    #[arg(long)]
    pub m: Option<usize>,
    /// Chunk size for the batch iteration count.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub hidden: usize,
    /// Output trace file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare the outputs against this trace; exits nonzero on mismatch.
    #[arg(long)]
    pub expect: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RecordArgs {
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "none")]
    pub label_col: LabelColumn,
    #[arg(long, default_value_t = 4)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ff: f64,
    #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
    pub init_range: InitRange,
    #[arg(long, env = "ONLAD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Input packet trace to write.
    #[arg(long)]
    pub trace: PathBuf,
    /// Output packet trace to write.
    #[arg(long)]
    pub outputs: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Grid points as `n x hidden`, comma separated.
    #[arg(long, default_value = "512x64", value_delimiter = ',')]
    pub grid: Vec<GridPoint>,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: usize,
    #[arg(long, default_value = "sigmoid")]
    pub activation: Activation,
    #[arg(long, default_value_t = 1.0)]
    pub ff: f64,
    /// Range of the random input weights and biases, as `low,high`.
    #[arg(long, default_value = "-1,1", allow_hyphen_values = true)]
    pub init_range: InitRange,
    #[arg(long, env = "ONLAD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub n: usize,
    pub hidden: usize,
}

impl std::str::FromStr for GridPoint {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (n, h) = s.split_once('x').ok_or_else(|| format!("expected `NxH`, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
        Ok(GridPoint {
            n: parse(n)?,
            hidden: parse(h)?,
        })
    }
}

/// Validated inputs of a testbed run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub dataset: PathBuf,
    pub label_col: LabelColumn,
    pub detector: DetectorConfig,
    pub trials: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub classes: Option<usize>,
}

impl RunConfig {
    pub fn from_args(command: &'static str, args: &TestbedArgs) -> Result<Self> {
        let detector = args.detector.config();
        detector.validate()?;
        if args.trials == 0 {
            return Err(Error::InvalidArgument("--trials must be at least 1".into()));
        }
        if args.classes.is_some_and(|c| c < 2) {
            return Err(Error::InvalidArgument("--classes must be at least 2".into()));
        }
        if !args.dataset.is_file() {
            return Err(Error::InvalidArgument(format!("dataset {} not found", args.dataset.display())));
        }
        Ok(RunConfig {
            command,
            dataset: args.dataset.clone(),
            label_col: args.label_col.clone(),
            detector,
            trials: args.trials,
            seed: args.seed,
            jobs: args.jobs.max(1),
            out: args.out.clone(),
            classes: args.classes,
        })
    }

    fn load(&self) -> Result<Dataset> {
        let ds = load_csv(&self.dataset, &self.label_col)?;
        let ds = match self.classes {
            Some(c) if c < ds.class_count() => ds.restrict_classes(&(0..c).collect::<Vec<_>>())?,
            _ => ds,
        };
        info!(
            "loaded {}: {} rows, {} features, {} classes",
            ds.name,
            ds.len(),
            ds.n_features(),
            ds.class_count()
        );
        Ok(minmax_normalize(&ds).0)
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Offline(a) => cmd_offline(&a),
        Command::Online(a) => cmd_online(&a),
        Command::Stream(a) => cmd_stream(&a),
        Command::Cost(a) => cmd_cost(&a),
        Command::Replay(a) => cmd_replay(&a),
        Command::Record(a) => cmd_record(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_trials(label: &str, results: &[TrialResult]) {
    for (i, r) in results.iter().enumerate() {
        println!("{label:<10} trial {i:<3} seed {:<20} auc {:.4}", r.seed, r.auc);
    }
    let s = summarize(&results.iter().map(|r| r.auc).collect::<Vec<_>>());
    println!(
        "{label:<10} mean auc {:.4} ± {:.4} (min {:.4}, max {:.4}, {} trials)",
        s.mean, s.std, s.min, s.max, s.trials
    );
}

pub fn cmd_offline(args: &TestbedArgs) -> Result<i32> {
    let rc = RunConfig::from_args("offline", args)?;
    let mut cfg = OfflineConfig::new(rc.detector);
    cfg.trials = rc.trials;
    cfg.validate()?;
    let ds = rc.load()?;
    let results = run_trials(rc.trials, rc.seed, rc.jobs, |_, seed| offline_testbed(&ds, &OfflineConfig { seed, ..cfg }))?;
    println!("offline testbed on {} ({} classes)", ds.name, ds.class_count());
    print_trials("onlad", &results);
    if let Some(out) = &rc.out {
        let records: Vec<_> = results
            .iter()
            .enumerate()
            .map(|(i, r)| ResultRecord::new(&ds.name, "offline", "onlad", &cfg.detector, i, r))
            .collect();
        write_jsonl(&records, create(out)?)?;
    }
    Ok(0)
}

pub fn cmd_online(args: &OnlineArgs) -> Result<i32> {
    let rc = RunConfig::from_args("online", &args.testbed)?;
    let mut cfg = OnlineConfig::new(rc.detector);
    cfg.trials = rc.trials;
    cfg.use_valid = args.use_valid;
    cfg.validate()?;
    let ds = rc.load()?;

    let mut runs = vec![("onlad", cfg)];
    if args.with_nf {
        let mut nf = cfg;
        nf.detector.ff = 1.0;
        runs.push(("onlad-nf", nf));
    }
    println!("online testbed on {} ({} classes)", ds.name, ds.class_count());
    let mut records_data = Vec::new();
    for (label, cfg) in &runs {
        let results = run_trials(rc.trials, rc.seed, rc.jobs, |_, seed| online_testbed(&ds, &OnlineConfig { seed, ..*cfg }))?;
        print_trials(label, &results);
        records_data.push((*label, cfg.detector, results));
    }
    if let Some(out) = &rc.out {
        let mut records = Vec::new();
        for (label, det, results) in &records_data {
            for (i, r) in results.iter().enumerate() {
                records.push(ResultRecord::new(&ds.name, "online", label, det, i, r));
            }
        }
        write_jsonl(&records, create(out)?)?;
    }
    Ok(0)
}

pub fn cmd_stream(args: &StreamArgs) -> Result<i32> {
    let config = args.detector.config();
    config.validate()?;
    let input = load_csv(&args.input, &args.label_col)?;

    let mut det = match &args.load_model {
        Some(path) => {
            let model = load_model(path)?;
            if !model.is_initialized() {
                return Err(Error::NotInitialized);
            }
            OnladDetector::from_model(model, config.epsilon, config.theta, config.ff)?
        }
        None => {
            let init_path = args.init.as_ref().expect("clap requires --init");
            let init = load_csv(init_path, &args.label_col)?;
            if init.len() < config.hidden {
                return Err(Error::InitTooSmall {
                    rows: init.len(),
                    hidden: config.hidden,
                });
            }
            let mut det = OnladDetector::new(init.n_features(), &config, args.seed)?;
            det.init(&init.features)?;
            if let Some(p) = args.theta_percentile {
                let theta = det.calibrate_theta(&init.features, p)?;
                info!("theta calibrated to {theta}");
            }
            det
        }
    };
    if input.n_features() != det.n() {
        return Err(Error::dims("stream input", det.n(), input.n_features()));
    }

    let mut out = output(args.out.as_deref())?;
    writeln!(out, "index,score,is_anomaly,trained")?;
    for i in 0..input.len() {
        let r = det.train_step(input.row(i), None)?;
        let score = r.score.map_or_else(|| "nan".to_string(), |s| format!("{s:.6e}"));
        writeln!(out, "{i},{score},{},{}", u8::from(r.is_anomaly), u8::from(r.trained.trained()))?;
    }
    out.flush()?;
    if let Some(path) = &args.save_model {
        save_model(det.model(), path)?;
    }
    Ok(0)
}

pub fn cmd_cost(args: &CostArgs) -> Result<i32> {
    let report = cost_report(args.n, args.hidden, args.m.unwrap_or(args.n), args.k)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{report}");
    }
    Ok(0)
}

fn read_trace(path: &Path) -> Result<Vec<Packet>> {
    read_input_trace(BufReader::new(File::open(path)?), path)
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<i32> {
    let packets = read_trace(&args.trace)?;
    let mut core = CoreState::new(args.n, args.hidden)?;
    let outputs = replay(&mut core, &packets)?;
    write_output_trace(&outputs, output(args.out.as_deref())?)?;
    if let Some(expect) = &args.expect {
        let reader: Box<dyn BufRead> = Box::new(BufReader::new(File::open(expect)?));
        let expected = read_output_trace(reader, expect)?;
        if expected != outputs {
            let first = expected.iter().zip(&outputs).position(|(a, b)| a != b).unwrap_or(expected.len().min(outputs.len()));
            eprintln!(
                "replay mismatch: {} outputs vs {} expected, first difference at output {first}",
                outputs.len(),
                expected.len()
            );
            return Ok(1);
        }
    }
    Ok(0)
}

pub fn cmd_record(args: &RecordArgs) -> Result<i32> {
    let init = load_csv(&args.init, &args.label_col)?;
    let input = load_csv(&args.input, &args.label_col)?;
    let config = DetectorConfig {
        hidden: args.hidden,
        activation: Activation::Identity,
        init_range: args.init_range,
        ff: args.ff,
        ..DetectorConfig::default()
    };
    config.validate()?;
    let mut det = OnladDetector::new(init.n_features(), &config, args.seed)?;
    det.init(&init.features)?;
    if input.n_features() != det.n() {
        return Err(Error::dims("record input", det.n(), input.n_features()));
    }

    let mut packets = parameter_packets(det.model())?;
    packets.push(ff_packet(args.ff));
    for i in 0..input.len() {
        packets.extend(input_packets(input.row(i))?);
        packets.push(Packet::trigger(Mode::DoPrediction));
        packets.push(Packet::trigger(Mode::DoTraining));
    }
    write_input_trace(&packets, create(&args.trace)?)?;
    if let Some(path) = &args.outputs {
        let mut core = CoreState::new(det.n(), args.hidden)?;
        write_output_trace(&replay(&mut core, &packets)?, create(path)?)?;
    }
    println!("wrote {} packets for {} rows to {}", packets.len(), input.len(), args.trace.display());
    Ok(0)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let mut reports = Vec::new();
    println!("{:>6} {:>6} {:>14} {:>14} {:>14} {:>14}", "n", "hidden", "train mean us", "train p99 us", "pred mean us", "pred p99 us");
    for p in &args.grid {
        let cfg = DetectorConfig {
            hidden: p.hidden,
            activation: args.activation,
            init_range: args.init_range,
            ff: args.ff,
            ..DetectorConfig::default()
        };
        cfg.validate()?;
        let r = latency_bench(p.n, &cfg, args.iterations, args.warmup, args.seed)?;
        println!(
            "{:>6} {:>6} {:>14.3} {:>14.3} {:>14.3} {:>14.3}",
            r.n, r.hidden, r.train.mean_us, r.train.p99_us, r.predict.mean_us, r.predict.p99_us
        );
        reports.push(r);
    }
    if let Some(out) = &args.out {
        bench::write_jsonl(&reports, create(out)?)?;
    }
    Ok(0)
}
