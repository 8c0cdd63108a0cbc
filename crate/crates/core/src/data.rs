//! Dataset ingestion, min-max normalisation and seeded partitioning.
//!
//! Input is comma-separated text (optionally gzip-compressed when the path
//! ends in `.gz`) with an optional header row. Every column except the label
//! column must be numeric. Labels are encoded as indices into the sorted set
//! of distinct label strings (numerically sorted when every label parses as a
//! number), so the encoding is stable across runs.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Zero-based column index.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
    Last,
    /// No label column; every row gets label 0.
    None,
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "last" => LabelColumn::Last,
            "none" => LabelColumn::None,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<usize>,
    /// Original label strings, indexed by encoded label.
    pub class_names: Vec<String>,
}

/// Per-feature range observed over the whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn apply(&self, x: &mut [f64]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.min).zip(&self.max) {
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
        }
    }
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::dims("Dataset::new", format!("{} labels", features.rows()), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {})",
                class_names.len()
            )));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Keeps only the listed classes (re-encoded in the given order) and
    /// returns the reduced dataset.
    pub fn restrict_classes(&self, classes: &[usize]) -> Result<Dataset> {
        let mut remap = vec![usize::MAX; self.class_count()];
        for (new, &old) in classes.iter().enumerate() {
            if old >= self.class_count() {
                return Err(Error::InvalidArgument(format!("class {old} does not exist")));
            }
            remap[old] = new;
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&i| remap[self.labels[i]] != usize::MAX).collect();
        Dataset::new(
            self.name.clone(),
            self.features.select_rows(&keep),
            keep.iter().map(|&i| remap[self.labels[i]]).collect(),
            classes.iter().map(|&c| self.class_names[c].clone()).collect(),
        )
    }

    /// Row subset in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

pub fn load_csv(path: &Path, label_column: &LabelColumn) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    let name = path
        .file_name()
        .map(|f| f.to_string_lossy().trim_end_matches(".gz").trim_end_matches(".csv").to_string())
        .unwrap_or_default();
    parse_csv(reader, path, label_column, name)
}

pub fn parse_csv<R: Read>(reader: R, origin: &Path, label_column: &LabelColumn, name: String) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(i + 1, e.to_string()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push((line, rec));
    }
    let (first_line, first) = records
        .first()
        .cloned()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let width = first.len();

    let label_idx = match label_column {
        LabelColumn::Index(i) if *i < width => Some(*i),
        LabelColumn::Index(i) => {
            return Err(parse_err(first_line, format!("label column {i} missing ({width} columns)")));
        }
        LabelColumn::Last => Some(width - 1),
        LabelColumn::None => None,
        LabelColumn::Name(name) => Some(
            first
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| parse_err(first_line, format!("label column `{name}` not found in header")))?,
        ),
    };

    let has_header = matches!(label_column, LabelColumn::Name(_))
        || first
            .iter()
            .enumerate()
            .any(|(c, f)| Some(c) != label_idx && f.parse::<f64>().is_err());
    let body = if has_header { &records[1..] } else { &records[..] };

    let n_features = width - usize::from(label_idx.is_some());
    let mut features = Vec::with_capacity(body.len() * n_features);
    let mut raw_labels = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != width {
            return Err(parse_err(*line, format!("expected {width} fields, found {}", rec.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(field.to_string());
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(*line, format!("non-numeric feature `{field}` in column {c}")))?;
            if !v.is_finite() {
                return Err(parse_err(*line, format!("non-finite feature `{field}` in column {c}")));
            }
            features.push(v);
        }
    }
    if body.is_empty() {
        return Err(parse_err(first_line, "no data rows".into()));
    }

    let (labels, class_names) = if label_idx.is_some() {
        encode_labels(&raw_labels)
    } else {
        (vec![0; body.len()], vec!["0".to_string()])
    };
    Dataset::new(name, Matrix::from_vec(body.len(), n_features, features)?, labels, class_names)
}

fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut names: Vec<String> = raw.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse::<f64>().ok()).collect();
    if numeric.is_some() {
        names.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let labels = raw.iter().map(|r| index[r.as_str()]).collect();
    (labels, names)
}

/// Min-max scales every feature into `[0, 1]`; constant features become 0.
pub fn minmax_normalize(ds: &Dataset) -> (Dataset, NormStats) {
    let n = ds.n_features();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for r in 0..ds.len() {
        for (c, &v) in ds.row(r).iter().enumerate() {
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    let stats = NormStats { min, max };
    let mut features = ds.features.clone();
    for r in 0..features.rows() {
        stats.apply(features.row_mut(r));
    }
    let out = Dataset {
        features,
        ..ds.clone()
    };
    (out, stats)
}

/// Row indices of each class, in dataset order.
pub fn partition_by_class(ds: &Dataset) -> Vec<Vec<usize>> {
    let mut parts = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels.iter().enumerate() {
        parts[l].push(i);
    }
    parts
}

/// Part sizes for `total` items: `⌊f·total⌋` each, with the remainder folded
/// into the last part when the fractions sum to 1.
pub fn split_sizes(total: usize, fractions: &[f64]) -> Result<Vec<usize>> {
    let sum: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0)) || sum > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "fractions {fractions:?} must be positive and sum to at most 1"
        )));
    }
    let mut sizes: Vec<usize> = fractions.iter().map(|f| (f * total as f64 + 1e-9).floor() as usize).collect();
    if (sum - 1.0).abs() <= 1e-9 {
        let used: usize = sizes[..sizes.len() - 1].iter().sum();
        *sizes.last_mut().unwrap() = total - used;
    }
    Ok(sizes)
}

/// Shuffles `indices` with `seed` and cuts them into consecutive parts.
pub fn split(indices: &[usize], fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    split_with(indices, fractions, &mut rng)
}

pub fn split_with(indices: &[usize], fractions: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let sizes = split_sizes(indices.len(), fractions)?;
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(rng);
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        parts.push(shuffled[start..start + size].to_vec());
        start += size;
    }
    Ok(parts)
}

/// Splits each class independently, so every part keeps the class
/// proportions. Returns one index list per part, classes concatenated.
pub fn stratified_split(ds: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = vec![Vec::new(); fractions.len()];
    for class in partition_by_class(ds) {
        for (part, chunk) in parts.iter_mut().zip(split_with(&class, fractions, &mut rng)?) {
            part.extend(chunk);
        }
    }
    Ok(parts)
}

pub fn sample_without_replacement(indices: &[usize], count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(indices, count, &mut rng)
}

pub fn sample_with(indices: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if count > indices.len() {
        return Err(Error::InsufficientSamples {
            requested: count,
            available: indices.len(),
        });
    }
    Ok(indices.choose_multiple(rng, count).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, label: LabelColumn) -> Result<Dataset> {
        parse_csv(text.as_bytes(), Path::new("mem.csv"), &label, "mem".into())
    }

    #[test]
    fn loads_small_file_with_header() {
        let ds = parse("x,y,label\n1,2,a\n3,4,b\n5,6,a\n7,8,b\n", LabelColumn::Name("label".into())).unwrap();
        assert_eq!((ds.len(), ds.n_features(), ds.class_count()), (4, 2, 2));
        assert_eq!(ds.labels, vec![0, 1, 0, 1]);
        assert_eq!(ds.class_names, vec!["a", "b"]);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn header_is_optional() {
        let ds = parse("1,2,a\n3,4,b\n", LabelColumn::Last).unwrap();
        assert_eq!(ds.len(), 2);
        let ds = parse("f0,f1,label\n1,2,a\n", LabelColumn::Last).unwrap();
        assert_eq!(ds.len(), 1);
        let ds = parse("a,1,2\nb,3,4\n", LabelColumn::Index(0)).unwrap();
        assert_eq!(ds.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let ds = parse("0.1,10\n0.2,2\n0.3,1\n", LabelColumn::Last).unwrap();
        assert_eq!(ds.class_names, vec!["1", "2", "10"]);
        assert_eq!(ds.labels, vec![2, 1, 0]);
    }

    #[test]
    fn missing_label_column() {
        assert!(parse("x,y\n1,2\n", LabelColumn::Name("label".into())).is_err());
        assert!(parse("1,2\n", LabelColumn::Index(5)).is_err());
    }

    #[test]
    fn malformed_rows_report_line() {
        match parse("x,y,label\n1,2,a\n3,b\n", LabelColumn::Last) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("1,2,a\n3,zz,b\n", LabelColumn::Last) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("non-numeric"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unlabeled_stream() {
        let ds = parse("0.1,0.2\n0.3,0.4\n", LabelColumn::None).unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.labels, vec![0, 0]);
    }

    #[test]
    fn normalize_examples() {
        let ds = parse("0,7,a\n1,7,b\n2,7,a\n", LabelColumn::Last).unwrap();
        let (norm, stats) = minmax_normalize(&ds);
        let col0: Vec<f64> = (0..3).map(|r| norm.row(r)[0]).collect();
        let col1: Vec<f64> = (0..3).map(|r| norm.row(r)[1]).collect();
        assert_eq!(col0, vec![0.0, 0.5, 1.0]);
        assert_eq!(col1, vec![0.0, 0.0, 0.0]);
        assert_eq!(stats.min, vec![0.0, 7.0]);
        assert_eq!(stats.max, vec![2.0, 7.0]);
    }

    #[test]
    fn split_sizes_example() {
        assert_eq!(split_sizes(1000, &[0.10, 0.45, 0.45]).unwrap(), vec![100, 450, 450]);
        assert_eq!(split_sizes(10, &[0.8, 0.2]).unwrap(), vec![8, 2]);
        assert!(split_sizes(10, &[0.8, 0.3]).is_err());
        assert!(split_sizes(10, &[0.0, 0.5]).is_err());
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let idx: Vec<usize> = (0..1000).collect();
        let a = split(&idx, &[0.1, 0.45, 0.45], 42).unwrap();
        let b = split(&idx, &[0.1, 0.45, 0.45], 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(Vec::len).collect::<Vec<_>>(), vec![100, 450, 450]);
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, idx);
        assert_ne!(a, split(&idx, &[0.1, 0.45, 0.45], 43).unwrap());
    }

    #[test]
    fn stratified_split_preserves_proportions() {
        // 3 classes with 50, 123 and 77 rows.
        let counts = [50usize, 123, 77];
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat(c).take(k)).collect();
        let n = labels.len();
        let ds = Dataset::new(
            "s",
            Matrix::zeros(n, 1),
            labels,
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let parts = stratified_split(&ds, &[0.8, 0.2], 7).unwrap();
        for (c, &k) in counts.iter().enumerate() {
            let in_train = parts[0].iter().filter(|&&i| ds.labels[i] == c).count() as f64;
            assert!((in_train - 0.8 * k as f64).abs() <= 1.0, "class {c}");
        }
    }

    #[test]
    fn sampling() {
        let idx: Vec<usize> = (10..20).collect();
        let s = sample_without_replacement(&idx, 5, 1).unwrap();
        assert_eq!(s, sample_without_replacement(&idx, 5, 1).unwrap());
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
        assert!(s.iter().all(|i| idx.contains(i)));
        assert!(matches!(
            sample_without_replacement(&idx, 11, 1),
            Err(Error::InsufficientSamples { requested: 11, available: 10 })
        ));
    }

    #[test]
    fn restrict_classes_reencodes() {
        let ds = parse("1,a\n2,b\n3,c\n4,b\n", LabelColumn::Last).unwrap();
        let sub = ds.restrict_classes(&[2, 1]).unwrap();
        assert_eq!(sub.class_names, vec!["c", "b"]);
        assert_eq!(sub.labels, vec![1, 0, 1]);
        assert_eq!(sub.features.as_slice(), &[2.0, 3.0, 4.0]);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(values in proptest::collection::vec(-1e3f64..1e3, 3..60)) {
            let rows = values.len() / 3;
            let m = Matrix::from_vec(rows, 3, values[..rows * 3].to_vec()).unwrap();
            let ds = Dataset::new("p", m, vec![0; rows], vec!["0".into()]).unwrap();
            let (once, _) = minmax_normalize(&ds);
            let (twice, _) = minmax_normalize(&once);
            prop_assert!(once.features.max_abs_diff(&twice.features) <= 1e-12);
            prop_assert!(once.features.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
