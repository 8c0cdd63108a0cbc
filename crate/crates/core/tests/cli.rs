use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn onlad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onlad"))
        .args(args)
        .env_remove("ONLAD_SEED")
        .output()
        .expect("run onlad")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_rows(path: &Path, header: Option<&str>, rows: &[Vec<f64>], labels: Option<&[usize]>) {
    let mut text = String::new();
    if let Some(h) = header {
        text.push_str(h);
        text.push('\n');
    }
    for (i, r) in rows.iter().enumerate() {
        let fields: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        text.push_str(&fields.join(","));
        if let Some(l) = labels {
            text.push_str(&format!(",c{}", l[i]));
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// Three well separated classes in 5 dimensions.
fn labelled_dataset(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..3usize {
        for _ in 0..120 {
            rows.push((0..5).map(|d| if d % 3 == c { 0.8 } else { 0.2 } + 0.05 * rng.gen::<f64>()).collect());
            labels.push(c);
        }
    }
    let path = dir.join("toy.csv");
    write_rows(&path, Some("a,b,c,d,e,label"), &rows, Some(&labels));
    path
}

/// Rows on a 2-D subspace of a 6-D space.
fn subspace_rows(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let u = [[0.3, 0.1, 0.5, 0.2, 0.4, 0.1], [0.1, 0.4, 0.2, 0.3, 0.1, 0.5]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
            (0..6).map(|d| a * u[0][d] + b * u[1][d]).collect()
        })
        .collect()
}

#[test]
fn offline_end_to_end() {
    let dir = TempDir::new().unwrap();
    let data = labelled_dataset(dir.path());
    let out = dir.path().join("results.jsonl");
    let o = onlad(&[
        "offline", "--dataset", data.to_str().unwrap(), "--hidden", "3", "--activation", "sigmoid", "--trials", "3",
        "--seed", "42", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("mean auc"), "{text}");
    let lines: Vec<serde_json::Value> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1]["seed"], 43);
    assert_eq!(lines[0]["dataset"], "toy");
    assert!(lines.iter().all(|l| l["auc"].as_f64().unwrap() > 0.9));
}

#[test]
fn online_with_nf_and_jobs() {
    let dir = TempDir::new().unwrap();
    let data = labelled_dataset(dir.path());
    let out = dir.path().join("online.jsonl");
    let args = [
        "online", "--dataset", data.to_str().unwrap(), "--hidden", "3", "--activation", "identity", "--ff", "0.95",
        "--with-nf", "--trials", "2", "--jobs", "2", "--out", out.to_str().unwrap(),
    ];
    let o = onlad(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("onlad-nf"), "{text}");
    let records = fs::read_to_string(&out).unwrap();
    assert_eq!(records.lines().count(), 4);
    let again = onlad(&args);
    assert_eq!(stdout(&again), text);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let data = labelled_dataset(dir.path());
    let out = dir.path().join("r.jsonl");
    let o = Command::new(env!("CARGO_BIN_EXE_onlad"))
        .args(["offline", "--dataset", data.to_str().unwrap(), "--hidden", "3", "--trials", "1"])
        .args(["--out", out.to_str().unwrap()])
        .env("ONLAD_SEED", "77")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let rec: serde_json::Value = serde_json::from_str(fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(rec["seed"], 77);
}

#[test]
fn usage_errors_exit_nonzero() {
    let o = onlad(&["offline", "--dataset", "/nonexistent/data.csv"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("not found"), "{}", stderr(&o));

    let dir = TempDir::new().unwrap();
    let data = labelled_dataset(dir.path());
    let o = onlad(&["offline", "--dataset", data.to_str().unwrap(), "--trials", "0"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("trials"));

    let o = onlad(&["offline", "--dataset", data.to_str().unwrap(), "--activation", "relu"]);
    assert_eq!(o.status.code(), Some(2));

    let o = onlad(&["offline", "--dataset", data.to_str().unwrap(), "--ff", "0.9"]);
    assert!(!o.status.success());
}

#[test]
fn stream_of_init_data_is_quiet() {
    let dir = TempDir::new().unwrap();
    let rows = subspace_rows(40, 3);
    let init = dir.path().join("init.csv");
    write_rows(&init, None, &rows, None);
    let o = onlad(&[
        "stream", "--init", init.to_str().unwrap(), "--input", init.to_str().unwrap(), "--hidden", "3",
        "--activation", "identity", "--theta", "1e-6",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,score,is_anomaly,trained"));
    let mut count = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert!(f[1].parse::<f64>().unwrap() < 1e-9, "{line}");
        assert_eq!(f[2], "0");
        count += 1;
    }
    assert_eq!(count, 40);
}

#[test]
fn stream_flags_injected_outlier() {
    let dir = TempDir::new().unwrap();
    let init = dir.path().join("init.csv");
    write_rows(&init, None, &subspace_rows(30, 4), None);
    let mut stream = subspace_rows(20, 5);
    stream.insert(10, vec![0.9, 0.0, 0.9, 0.0, 0.9, 0.0]);
    let input = dir.path().join("stream.csv");
    write_rows(&input, None, &stream, None);
    let args = [
        "stream", "--init", init.to_str().unwrap(), "--input", input.to_str().unwrap(), "--hidden", "3",
        "--activation", "identity", "--theta", "1e-2", "--seed", "9",
    ];
    let o = onlad(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let flagged: Vec<usize> = text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2) == Some("1"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(flagged, vec![10], "{text}");
    assert_eq!(stdout(&onlad(&args)), text);
}

#[test]
fn stream_rejects_small_init_before_streaming() {
    let dir = TempDir::new().unwrap();
    let init = dir.path().join("init.csv");
    write_rows(&init, None, &subspace_rows(3, 1), None);
    let o = onlad(&["stream", "--init", init.to_str().unwrap(), "--input", init.to_str().unwrap(), "--hidden", "5"]);
    assert!(!o.status.success());
    assert!(stdout(&o).is_empty());
    assert!(stderr(&o).contains("at least 5"), "{}", stderr(&o));
}

#[test]
fn stream_model_save_and_load() {
    let dir = TempDir::new().unwrap();
    let init = dir.path().join("init.csv");
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    let both = dir.path().join("both.csv");
    let a = subspace_rows(12, 6);
    let b = subspace_rows(12, 7);
    write_rows(&init, None, &subspace_rows(20, 8), None);
    write_rows(&first, None, &a, None);
    write_rows(&second, None, &b, None);
    write_rows(&both, None, &[a, b].concat(), None);
    let model = dir.path().join("model.txt");
    let common = ["--hidden", "4", "--ff", "0.97", "--activation", "sigmoid"];

    let whole = onlad(&[&["stream", "--init", init.to_str().unwrap(), "--input", both.to_str().unwrap()][..], &common].concat());
    assert!(whole.status.success(), "{}", stderr(&whole));
    let o = onlad(
        &[
            &["stream", "--init", init.to_str().unwrap(), "--input", first.to_str().unwrap()][..],
            &["--save-model", model.to_str().unwrap()],
            &common,
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let resumed = onlad(
        &[&["stream", "--load-model", model.to_str().unwrap(), "--input", second.to_str().unwrap()][..], &common].concat(),
    );
    assert!(resumed.status.success(), "{}", stderr(&resumed));

    let tail: Vec<String> = stdout(&whole).lines().skip(13).map(|l| l.split_once(',').unwrap().1.to_string()).collect();
    let got: Vec<String> = stdout(&resumed).lines().skip(1).map(|l| l.split_once(',').unwrap().1.to_string()).collect();
    assert_eq!(tail, got);
}

#[test]
fn cost_command() {
    let o = onlad(&["cost", "--n", "512", "--hidden", "64"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("185,601"), "{}", stdout(&o));
    let o = onlad(&["cost", "--n", "128", "--hidden", "16", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["s_parameter"], 4368);
    assert_eq!(v["i_train"], 7184);
    assert!(!onlad(&["cost", "--n", "0", "--hidden", "4"]).status.success());
}

#[test]
fn record_then_replay_is_identity() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..16).map(|_| rng.gen()).collect()).collect();
    let init = dir.path().join("init.csv");
    let input = dir.path().join("input.csv");
    write_rows(&init, None, &rows[..40], None);
    write_rows(&input, None, &rows[40..], None);
    let trace = dir.path().join("in.hex");
    let expected = dir.path().join("out.hex");
    let o = onlad(&[
        "record", "--init", init.to_str().unwrap(), "--input", input.to_str().unwrap(), "--hidden", "4", "--ff",
        "0.95", "--trace", trace.to_str().unwrap(), "--outputs", expected.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let outputs = fs::read_to_string(&expected).unwrap();
    assert_eq!(outputs.lines().count(), 40);
    assert!(outputs.lines().all(|l| l.len() == 8));
    assert!(fs::read_to_string(&trace).unwrap().lines().all(|l| l.len() == 16));

    let replayed = dir.path().join("replayed.hex");
    let o = onlad(&[
        "replay", "--trace", trace.to_str().unwrap(), "--n", "16", "--hidden", "4", "--out", replayed.to_str().unwrap(),
        "--expect", expected.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&replayed).unwrap(), outputs);

    let mut tampered: Vec<String> = outputs.lines().map(str::to_string).collect();
    tampered[0] = "7fffffff".into();
    fs::write(&expected, tampered.join("\n")).unwrap();
    let o = onlad(&["replay", "--trace", trace.to_str().unwrap(), "--n", "16", "--hidden", "4", "--expect", expected.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mismatch"));
}

#[test]
fn replay_reports_malformed_line() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("bad.hex");
    fs::write(&trace, "c000000000000000\nnot-a-packet\n").unwrap();
    let o = onlad(&["replay", "--trace", trace.to_str().unwrap(), "--n", "2", "--hidden", "2"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));
}

#[test]
fn bench_command() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench.jsonl");
    let o = onlad(&["bench", "--grid", "32x8,16x4", "--iterations", "200", "--warmup", "10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs: Vec<serde_json::Value> = fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0]["n"], 32);
    assert_eq!(recs[1]["train"]["count"], 200);
}
