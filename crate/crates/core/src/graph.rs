//! Datasets, train/val/test splits, file ingestion and kNN graph construction.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GslError, Result};
use crate::tensor::{Matrix, NORM_FLOOR};

/// Node features plus a dense weighted adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub features: Matrix,
    pub adjacency: Matrix,
}

impl Graph {
    /// A graph with no edges.
    pub fn featureless_edges(features: Matrix) -> Self {
        let n = features.rows();
        Self { features, adjacency: Matrix::zeros(n, n) }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Binary,
    Continuous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub feature_kind: FeatureKind,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.graph.feature_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.graph.adjacency.shape() != (n, n) {
            return Err(GslError::ingestion(format!(
                "adjacency is {:?}, expected {n}x{n}",
                self.graph.adjacency.shape()
            )));
        }
        if !self.graph.features.is_finite() {
            return Err(GslError::ingestion("features contain NaN or infinite values"));
        }
        if self.labels.len() != n {
            return Err(GslError::ingestion(format!(
                "features have {n} rows but labels have {} rows",
                self.labels.len()
            )));
        }
        if let Some((i, l)) = self.labels.iter().enumerate().find(|(_, l)| **l >= self.num_classes) {
            return Err(GslError::ingestion(format!(
                "label {l} at node {i} is not below num_classes = {}",
                self.num_classes
            )));
        }
        for (name, mask) in [("train", &self.train_mask), ("val", &self.val_mask), ("test", &self.test_mask)] {
            if mask.len() != n {
                return Err(GslError::ingestion(format!("{name} mask has {} entries, expected {n}", mask.len())));
            }
            if !mask.iter().any(|m| *m) {
                return Err(GslError::ingestion(format!("{name} split is empty")));
            }
        }
        for i in 0..n {
            let hits = [self.train_mask[i], self.val_mask[i], self.test_mask[i]].iter().filter(|m| **m).count();
            if hits > 1 {
                return Err(GslError::ingestion(format!("node {i} appears in more than one split")));
            }
        }
        Ok(())
    }

    /// Fraction of the most common class among `mask` nodes.
    pub fn majority_rate(&self, mask: &[bool]) -> f64 {
        let mut counts = vec![0usize; self.num_classes];
        let mut total = 0usize;
        for (l, m) in self.labels.iter().zip(mask) {
            if *m {
                counts[*l] += 1;
                total += 1;
            }
        }
        counts.into_iter().max().unwrap_or(0) as f64 / total.max(1) as f64
    }
}

/// How node indices are partitioned into train/val/test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    Fractions { seed: u64, train: f64, val: f64, test: f64 },
    Explicit { train: Vec<usize>, val: Vec<usize>, test: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

pub fn make_splits(n: usize, spec: &SplitSpec) -> Result<Splits> {
    let mut out = Splits { train: vec![false; n], val: vec![false; n], test: vec![false; n] };
    match spec {
        SplitSpec::Fractions { seed, train, val, test } => {
            for (name, f) in [("train", train), ("val", val), ("test", test)] {
                if !(0.0..=1.0).contains(f) {
                    return Err(GslError::config(format!("splits.{name}"), format!("fraction {f} outside [0, 1]")));
                }
            }
            let total = train + val + test;
            if total > 1.0 + 1e-9 {
                return Err(GslError::config("splits", format!("fractions sum to {total} > 1")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let n_train = ((train * n as f64).round() as usize).min(n);
            let n_val = ((val * n as f64).round() as usize).min(n - n_train);
            let n_test = ((test * n as f64).round() as usize).min(n - n_train - n_val);
            for &i in &order[..n_train] {
                out.train[i] = true;
            }
            for &i in &order[n_train..n_train + n_val] {
                out.val[i] = true;
            }
            for &i in &order[n_train + n_val..n_train + n_val + n_test] {
                out.test[i] = true;
            }
        }
        SplitSpec::Explicit { train, val, test } => {
            for (name, list, mask) in [
                ("train", train, &mut out.train),
                ("val", val, &mut out.val),
                ("test", test, &mut out.test),
            ] {
                for &i in list {
                    if i >= n {
                        return Err(GslError::config(format!("splits.{name}"), format!("index {i} >= {n} nodes")));
                    }
                    mask[i] = true;
                }
            }
            for i in 0..n {
                if [out.train[i], out.val[i], out.test[i]].iter().filter(|m| **m).count() > 1 {
                    return Err(GslError::config("splits", format!("node {i} listed in more than one split")));
                }
            }
        }
    }
    Ok(out)
}

/// Indices of every other node ordered by descending score; ties go to the
/// lower index and `self_index` is left out.
pub fn ranked_neighbors(scores: &[f64], self_index: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&j| j != self_index).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnMetric {
    #[default]
    Cosine,
    Euclidean,
}

/// Dense all-pairs similarity under `metric`. Euclidean similarity is
/// `1 / (1 + distance)` so larger still means closer.
pub fn similarity_matrix(features: &Matrix, metric: KnnMetric) -> Matrix {
    match metric {
        KnnMetric::Cosine => {
            let mut unit = features.clone();
            for r in 0..unit.rows() {
                let row = unit.row_mut(r);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
                row.iter_mut().for_each(|v| *v /= norm);
            }
            unit.matmul_t(&unit)
        }
        KnnMetric::Euclidean => {
            let sq = squared_distances(features);
            sq.map(|d| 1.0 / (1.0 + d.max(0.0).sqrt()))
        }
    }
}

/// `‖xᵢ − xⱼ‖²` for all pairs.
pub fn squared_distances(features: &Matrix) -> Matrix {
    let n = features.rows();
    Matrix::from_fn(n, n, |i, j| {
        features.row(i).iter().zip(features.row(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    })
}

/// Directed kNN graph: row `i` holds the similarity to its `k` most similar
/// other nodes (or 1 when `binarize`), zeros elsewhere.
pub fn knn_graph(features: &Matrix, k: usize, metric: KnnMetric, binarize: bool) -> Result<Matrix> {
    let n = features.rows();
    if k == 0 || k >= n {
        return Err(GslError::config("k", format!("kNN needs 1 <= k < n, got k = {k} with n = {n}")));
    }
    let sim = similarity_matrix(features, metric);
    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        for j in ranked_neighbors(sim.row(i), i).into_iter().take(k) {
            adj[(i, j)] = if binarize { 1.0 } else { sim[(i, j)] };
        }
    }
    Ok(adj)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFiles {
    pub train: String,
    pub val: String,
    pub test: String,
}

/// On-disk dataset description. Paths are relative to the manifest file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub features: String,
    pub labels: String,
    pub splits: SplitFiles,
    pub num_classes: usize,
    pub feature_kind: FeatureKind,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GslError::ingestion(format!("cannot read {}: {e}", path.display())))
}

fn is_binary_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

/// Reads features as CSV, or as raw little-endian `f64` with a `(n, d)` `u64` header
/// when the file extension is `.bin`.
pub fn read_features(path: &Path) -> Result<Matrix> {
    if is_binary_path(path) {
        let bytes = fs::read(path).map_err(|e| GslError::ingestion(format!("cannot read {}: {e}", path.display())))?;
        if bytes.len() < 16 {
            return Err(GslError::ingestion(format!("{}: missing (n, d) header", path.display())));
        }
        let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() != n * d * 8 {
            return Err(GslError::ingestion(format!(
                "{}: header says {n}x{d} but body holds {} values",
                path.display(),
                body.len() / 8
            )));
        }
        let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        return Matrix::from_vec(n, d, data);
    }
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| GslError::ingestion(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(GslError::ingestion(format!(
                    "{}:{}: {} columns, expected {}",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

pub fn write_features(path: &Path, features: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if is_binary_path(path) {
        w.write_all(&(features.rows() as u64).to_le_bytes())?;
        w.write_all(&(features.cols() as u64).to_le_bytes())?;
        for v in features.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    } else {
        for r in 0..features.rows() {
            let line: Vec<String> = features.row(r).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        for tok in line.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            out.push(tok.parse::<usize>().map_err(|e| {
                GslError::ingestion(format!("{}:{}: `{tok}`: {e}", path.display(), lineno + 1))
            })?);
        }
    }
    Ok(out)
}

fn write_indices(path: &Path, values: impl Iterator<Item = usize>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in values {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a dataset from a JSON manifest. The input adjacency starts empty.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = read_text(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| GslError::ingestion(format!("{}: invalid manifest: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let resolve = |p: &str| base.join(p);

    let features = read_features(&resolve(&manifest.features))?;
    let labels = read_indices(&resolve(&manifest.labels))?;
    let n = features.rows();
    if labels.len() != n {
        return Err(GslError::ingestion(format!(
            "features have {n} rows but labels have {} rows",
            labels.len()
        )));
    }
    let spec = SplitSpec::Explicit {
        train: read_indices(&resolve(&manifest.splits.train))?,
        val: read_indices(&resolve(&manifest.splits.val))?,
        test: read_indices(&resolve(&manifest.splits.test))?,
    };
    let splits = make_splits(n, &spec).map_err(|e| GslError::ingestion(e.to_string()))?;
    let name = manifest.name.clone().unwrap_or_else(|| {
        manifest_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let dataset = Dataset {
        name,
        graph: Graph::featureless_edges(features),
        labels,
        num_classes: manifest.num_classes,
        train_mask: splits.train,
        val_mask: splits.val,
        test_mask: splits.test,
        feature_kind: manifest.feature_kind,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes `dataset` under `dir` and returns the manifest path. Features go to
/// `features.bin` so values round-trip bit-exactly.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    write_features(&dir.join("features.bin"), &dataset.graph.features)?;
    write_indices(&dir.join("labels.csv"), dataset.labels.iter().copied())?;
    let idx = |mask: &[bool]| -> Vec<usize> { (0..mask.len()).filter(|&i| mask[i]).collect() };
    write_indices(&dir.join("train.csv"), idx(&dataset.train_mask).into_iter())?;
    write_indices(&dir.join("val.csv"), idx(&dataset.val_mask).into_iter())?;
    write_indices(&dir.join("test.csv"), idx(&dataset.test_mask).into_iter())?;
    let manifest = Manifest {
        name: Some(dataset.name.clone()),
        features: "features.bin".into(),
        labels: "labels.csv".into(),
        splits: SplitFiles { train: "train.csv".into(), val: "val.csv".into(), test: "test.csv".into() },
        num_classes: dataset.num_classes,
        feature_kind: dataset.feature_kind,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Writes the nonzero entries of `adjacency` as `src\tdst\tweight` lines,
/// ordered by `(src, dst)`, after a `src\tdst\tweight` header.
pub fn write_edge_list(path: &Path, adjacency: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "src\tdst\tweight")?;
    for r in 0..adjacency.rows() {
        for (c, &v) in adjacency.row(r).iter().enumerate() {
            if v != 0.0 {
                writeln!(w, "{r}\t{c}\t{v:?}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an `n`-node edge list written by [`write_edge_list`]. The header is
/// optional, a missing weight means 1, and blank or `#` lines are skipped.
pub fn read_edge_list(path: &Path, n: usize) -> Result<Matrix> {
    let text = read_text(path)?;
    let mut adj = Matrix::zeros(n, n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("src")) {
            continue;
        }
        let bad = |msg: String| GslError::ingestion(format!("{}: line {}: {msg}", path.display(), lineno + 1));
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(bad(format!("expected 2 or 3 tab-separated fields, got {}", fields.len())));
        }
        let node = |tok: &str| -> Result<usize> {
            let i: usize = tok.parse().map_err(|_| bad(format!("`{tok}` is not a node index")))?;
            if i >= n {
                return Err(bad(format!("node {i} is out of range for {n} nodes")));
            }
            Ok(i)
        };
        let (src, dst) = (node(fields[0])?, node(fields[1])?);
        let weight = match fields.get(2) {
            Some(tok) => tok.parse::<f64>().map_err(|_| bad(format!("`{tok}` is not a weight")))?,
            None => 1.0,
        };
        if !weight.is_finite() {
            return Err(bad("weight is not finite".into()));
        }
        adj[(src, dst)] = weight;
    }
    Ok(adj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn knn_identical_points_link_lowest_index() {
        let x = m(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let a = knn_graph(&x, 1, KnnMetric::Cosine, true).unwrap();
        assert_eq!(a.row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(a.row(1), &[1.0, 0.0, 0.0]);
        assert_eq!(a.row(2), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn knn_tie_between_orthogonal_axes_goes_low() {
        let x = m(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let a = knn_graph(&x, 1, KnnMetric::Cosine, false).unwrap();
        assert!((a[(2, 0)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(a[(2, 1)], 0.0);
    }

    #[test]
    fn knn_rows_have_k_entries_and_reject_large_k() {
        let ds = synthetic::blobs(&synthetic::BlobSpec { n: 40, ..Default::default() });
        let a = knn_graph(&ds.graph.features, 5, KnnMetric::Euclidean, true).unwrap();
        for i in 0..40 {
            assert_eq!(a.row(i).iter().filter(|v| **v != 0.0).count(), 5);
            assert_eq!(a[(i, i)], 0.0);
        }
        assert!(matches!(knn_graph(&ds.graph.features, 40, KnnMetric::Cosine, false), Err(GslError::Config { .. })));
    }

    #[test]
    fn fraction_splits() {
        let spec = SplitSpec::Fractions { seed: 7, train: 0.5, val: 0.2, test: 0.3 };
        let s = make_splits(10, &spec).unwrap();
        let count = |v: &[bool]| v.iter().filter(|b| **b).count();
        assert_eq!((count(&s.train), count(&s.val), count(&s.test)), (5, 2, 3));
        assert_eq!(s, make_splits(10, &spec).unwrap());
        for i in 0..10 {
            assert_eq!([s.train[i], s.val[i], s.test[i]].iter().filter(|b| **b).count(), 1);
        }
        let bad = SplitSpec::Fractions { seed: 0, train: 0.6, val: 0.3, test: 0.3 };
        assert!(matches!(make_splits(10, &bad), Err(GslError::Config { .. })));
    }

    #[test]
    fn explicit_splits_pass_through() {
        let spec = SplitSpec::Explicit { train: vec![0, 3], val: vec![1], test: vec![2] };
        let s = make_splits(4, &spec).unwrap();
        assert_eq!(s.train, vec![true, false, false, true]);
        assert_eq!(s.val, vec![false, true, false, false]);
        assert_eq!(s.test, vec![false, false, true, false]);
    }

    #[test]
    fn fixture_round_trips_bit_exactly() {
        let ds = synthetic::four_node_fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = save_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.num_nodes(), 4);
        assert_eq!(loaded.num_classes, 2);
        assert_eq!(loaded, ds);
    }

    #[test]
    fn csv_features_round_trip() {
        let x = Matrix::from_fn(3, 2, |r, c| (r as f64 + 0.1) / (c as f64 + 3.0));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_features(&p, &x).unwrap();
        assert_eq!(read_features(&p).unwrap(), x);
    }

    #[test]
    fn ingestion_errors() {
        let ds = synthetic::four_node_fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = save_dataset(&ds, dir.path()).unwrap();

        fs::write(dir.path().join("labels.csv"), "0\n1\n0\n").unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("4 rows") && err.contains("3 rows"), "{err}");

        fs::write(dir.path().join("labels.csv"), "0\n1\n0\n5\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(GslError::Ingestion(_))));

        fs::remove_file(dir.path().join("labels.csv")).unwrap();
        assert!(matches!(load_dataset(&path), Err(GslError::Ingestion(_))));
    }

    #[test]
    fn edge_list_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.tsv");
        let a = Matrix::from_rows(&[[0.0, 0.25, 0.0], [1.0 / 3.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        write_edge_list(&path, &a).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0\t1\t0.25");
        assert_eq!(read_edge_list(&path, 3).unwrap(), a);
        std::fs::write(&path, "0\t1\n1\tx\n").unwrap();
        let err = read_edge_list(&path, 3).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
