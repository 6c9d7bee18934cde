//! Small generated datasets for tests and smoke runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::{make_splits, Dataset, FeatureKind, Graph, SplitSpec};
use crate::tensor::Matrix;

/// Parameters of an isotropic Gaussian blob dataset.
#[derive(Clone, Debug)]
pub struct BlobSpec {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    /// Norm of each class center.
    pub center_norm: f64,
    /// Per-coordinate noise standard deviation.
    pub noise: f64,
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            n: 300,
            dim: 16,
            classes: 3,
            center_norm: 5.0,
            noise: 1.0,
            train: 0.2,
            val: 0.2,
            test: 0.6,
            seed: 0,
        }
    }
}

/// Gaussian blobs around random centers. Node `i` belongs to class `i % classes`.
pub fn blobs(spec: &BlobSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let v: Vec<f64> = (0..spec.dim).map(|_| unit.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm * spec.center_norm).collect()
        })
        .collect();
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    let features = Matrix::from_fn(spec.n, spec.dim, |r, c| centers[labels[r]][c] + spec.noise * unit.sample(&mut rng));
    let splits = make_splits(
        spec.n,
        &SplitSpec::Fractions { seed: spec.seed.wrapping_add(1), train: spec.train, val: spec.val, test: spec.test },
    )
    .expect("blob split fractions are valid");
    Dataset {
        name: "blobs".into(),
        graph: Graph::featureless_edges(features),
        labels,
        num_classes: spec.classes,
        train_mask: splits.train,
        val_mask: splits.val,
        test_mask: splits.test,
        feature_kind: FeatureKind::Continuous,
    }
}

/// Four nodes, three binary features, two classes.
pub fn four_node_fixture() -> Dataset {
    let features = Matrix::from_rows(&[
        [1.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 1.0],
    ])
    .unwrap();
    Dataset {
        name: "fixture4".into(),
        graph: Graph::featureless_edges(features),
        labels: vec![0, 1, 0, 1],
        num_classes: 2,
        train_mask: vec![true, true, false, false],
        val_mask: vec![false, false, true, false],
        test_mask: vec![false, false, false, true],
        feature_kind: FeatureKind::Binary,
    }
}
