//! Checks shared by the focused tests and the acceptance report.

use std::collections::BTreeSet;

use rand::Rng;
use ugsl::graph::{squared_distances, FeatureKind};
use ugsl::layer::{
    encode, init_scorer, process, score, score_att, score_fp, sparsify, Activation, EncoderKind, EncoderLayer, GslModel,
    LayerConfig, MlpInit, ProcessorConfig, ProcessorKind, ScorerConfig, ScorerKind, SparsifierConfig, SparsifierKind,
};
use ugsl::objectives::{
    nt_xent, reg_closeness, reg_log_barrier, reg_smoothness, reg_sparse_connect, ContrastiveConfig, ContrastiveNet,
    DaeConfig, DaeNet, Objective, ObjectiveConfig, ObjectiveInputs, RegularizerWeights, ViewNoise,
};
use ugsl::search::{random_search, sample_trials, top_fraction_analysis, SearchSpace};
use ugsl::synthetic::{blobs, BlobSpec};
use ugsl::tensor::{Matrix, ParamStore, Tape};
use ugsl::trainer::{run_base_model, GslConfig, TrialResult};

use super::{brute_rank_mask, grad_check, rng, stats_mismatch, uniform, weighted_sum};

pub const N: usize = 6;
pub const D: usize = 4;

type Case = (String, f64);

/// Biases start at zero; random ones keep instances away from zero-norm
/// embedding rows, where cosine similarity is not differentiable.
fn randomize_biases(store: &mut ParamStore, r: &mut impl Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        if store.get(id).name.contains(".b") {
            let (rr, cc) = store.value(id).shape();
            *store.value_mut(id) = uniform(rr, cc, -0.3, 0.3, r);
        }
    }
}

fn scorer_cases(out: &mut Vec<Case>) {
    let mut r = rng(1);
    let mut store = ParamStore::new();
    let s = store.add("s", uniform(N, N, -1.0, 1.0, &mut r));
    out.push(("scorer fp".into(), grad_check(&mut store, &|t, st| {
        let x = score_fp(t, st, s, N)?;
        weighted_sum(t, x, 1)
    })));

    let mut store = ParamStore::new();
    let x = store.add("x", uniform(N, D, -1.0, 1.0, &mut r));
    let h = store.add("heads", uniform(3, D, 0.2, 1.5, &mut r));
    out.push(("scorer att".into(), grad_check(&mut store, &|t, st| {
        let xt = t.param(st, x);
        let ht = t.param(st, h);
        let a = score_att(t, xt, ht)?;
        weighted_sum(t, a, 2)
    })));

    for (layers, act) in [(1, Activation::Tanh), (2, Activation::Tanh), (2, Activation::Relu)] {
        let mut store = ParamStore::new();
        let feats = uniform(N, D, -1.0, 1.0, &mut r);
        let x = store.add("x", feats.clone());
        let cfg = ScorerConfig { kind: ScorerKind::Mlp, mlp_layers: layers, mlp_width: Some(5), mlp_init: MlpInit::Glorot, ..Default::default() };
        let params = init_scorer(&mut store, &cfg, 0, &feats, D, &mut r).unwrap();
        randomize_biases(&mut store, &mut r);
        out.push((format!("scorer mlp {layers}-layer {act:?}"), grad_check(&mut store, &|t, st| {
            let xt = t.param(st, x);
            let a = score(t, st, &params, xt, act)?;
            weighted_sum(t, a, 3)
        })));
    }
}

fn sparsifier_cases(out: &mut Vec<Case>) {
    let mut r = rng(2);
    let configs = [
        SparsifierConfig { kind: SparsifierKind::Knn, k: 2, ..Default::default() },
        SparsifierConfig { kind: SparsifierKind::Dknn, k: 2, dilation: 2, ..Default::default() },
        SparsifierConfig { kind: SparsifierKind::RandomDknn, k: 2, dilation: 2, ..Default::default() },
        SparsifierConfig { kind: SparsifierKind::Epsnn, epsilon: 0.3, ..Default::default() },
        SparsifierConfig { kind: SparsifierKind::Bernoulli, epsilon: 0.5, temperature: 0.5, ..Default::default() },
    ];
    for cfg in configs {
        let mut store = ParamStore::new();
        let s = store.add("s", uniform(N, N, -1.0, 1.0, &mut r));
        out.push((format!("sparsifier {:?}", cfg.kind), grad_check(&mut store, &|t, st| {
            let st_ = t.param(st, s);
            let a = sparsify(t, st_, &cfg, true, &mut rng(77))?;
            weighted_sum(t, a, 4)
        })));
    }
}

fn processor_cases(out: &mut Vec<Case>) {
    let mut r = rng(3);
    for kind in [ProcessorKind::None, ProcessorKind::Symmetrize, ProcessorKind::Activation, ProcessorKind::ActivationSymmetrize] {
        for activation in [Activation::Relu, Activation::Tanh] {
            let mut store = ParamStore::new();
            let a = store.add("a", uniform(N, N, -1.0, 1.0, &mut r));
            let cfg = ProcessorConfig { kind, activation };
            out.push((format!("processor {kind:?} {activation:?}"), grad_check(&mut store, &|t, st| {
                let at = t.param(st, a);
                let p = process(t, at, &cfg)?;
                weighted_sum(t, p, 5)
            })));
        }
    }
}

fn encoder_cases(out: &mut Vec<Case>) {
    let mut r = rng(4);
    for kind in [EncoderKind::Gcn, EncoderKind::Gin, EncoderKind::Mlp] {
        for (fan_out, last) in [(3, false), (5, true)] {
            let mut store = ParamStore::new();
            let x = store.add("x", uniform(N, D, -1.0, 1.0, &mut r));
            let a = store.add("a", uniform(N, N, 0.05, 1.0, &mut r));
            let layer = EncoderLayer::init(&mut store, kind, "enc", D, fan_out, &mut r);
            randomize_biases(&mut store, &mut r);
            out.push((format!("encoder {kind:?} out={fan_out}"), grad_check(&mut store, &|t, st| {
                let xt = t.param(st, x);
                let at = t.param(st, a);
                let h = encode(t, st, &layer, xt, None, at, Activation::Tanh, last)?;
                weighted_sum(t, h, 6)
            })));
        }
    }
}

fn regularizer_cases(out: &mut Vec<Case>) {
    let mut r = rng(5);
    let a0 = uniform(N, N, 0.0, 1.0, &mut r);
    let sq = squared_distances(&uniform(N, D, -1.0, 1.0, &mut r));
    let mut store = ParamStore::new();
    let a = store.add("a", uniform(N, N, 0.05, 1.0, &mut r));
    out.push(("regularizer closeness".into(), grad_check(&mut store, &|t, st| {
        let at = t.param(st, a);
        reg_closeness(t, at, &a0)
    })));
    out.push(("regularizer smoothness".into(), grad_check(&mut store, &|t, st| {
        let at = t.param(st, a);
        reg_smoothness(t, at, &sq)
    })));
    out.push(("regularizer sparse_connect".into(), grad_check(&mut store, &|t, st| {
        let at = t.param(st, a);
        reg_sparse_connect(t, at)
    })));
    out.push(("regularizer log_barrier".into(), grad_check(&mut store, &|t, st| {
        let at = t.param(st, a);
        reg_log_barrier(t, at)
    })));
}

fn unsupervised_cases(out: &mut Vec<Case>) {
    let mut r = rng(6);
    for kind in [FeatureKind::Binary, FeatureKind::Continuous] {
        let feats = match kind {
            FeatureKind::Binary => Matrix::from_fn(N, D, |_, _| if r.gen_bool(0.5) { 1.0 } else { 0.0 }),
            FeatureKind::Continuous => uniform(N, D, -1.0, 1.0, &mut r),
        };
        let mut store = ParamStore::new();
        let a = store.add("a", uniform(N, N, 0.05, 1.0, &mut r));
        let net = DaeNet::new(&mut store, D, 5, &mut r);
        randomize_biases(&mut store, &mut r);
        let cfg = DaeConfig { mask_rate: 0.4, hidden: 5, noise_std: 0.1 };
        out.push((format!("dae {kind:?}"), grad_check(&mut store, &|t, st| {
            let at = t.param(st, a);
            net.loss(t, st, &feats, kind, at, &cfg, &mut rng(8))
        })));
    }

    let mut store = ParamStore::new();
    let x = store.add("x", uniform(N, D, -1.0, 1.0, &mut r));
    let learned = store.add("learned", uniform(N, N, 0.05, 1.0, &mut r));
    let anchor = uniform(N, N, 0.05, 1.0, &mut r);
    let net = ContrastiveNet::new(&mut store, D, 5, &mut r);
    randomize_biases(&mut store, &mut r);
    let v1 = ViewNoise::sample(N, D, 0.2, &mut r);
    let v2 = ViewNoise::sample(N, D, 0.2, &mut r);
    out.push(("contrastive".into(), grad_check(&mut store, &|t, st| {
        let xt = t.param(st, x);
        let lt = t.param(st, learned);
        let an = t.constant(anchor.clone());
        net.loss_with_noise(t, st, xt, lt, an, [&v1, &v2], 0.5)
    })));

    let mut store = ParamStore::new();
    let zx = store.add("zx", uniform(N, D, -1.0, 1.0, &mut r));
    let zy = store.add("zy", uniform(N, D, -1.0, 1.0, &mut r));
    out.push(("nt_xent".into(), grad_check(&mut store, &|t, st| {
        let a = t.param(st, zx);
        let b = t.param(st, zy);
        nt_xent(t, a, b, 0.7)
    })));
}

/// Complete objective through a two-layer model: MLP scorer, kNN, symmetrize, GCN.
fn full_model_case(out: &mut Vec<Case>) {
    let mut r = rng(7);
    let feats = uniform(N, D, -1.0, 1.0, &mut r);
    let labels = vec![0, 1, 2, 0, 1, 2];
    let train_mask = vec![true, true, true, false, true, false];
    let config = LayerConfig {
        sparsifier: SparsifierConfig { kind: SparsifierKind::Knn, k: 3, ..Default::default() },
        processor: ProcessorConfig { kind: ProcessorKind::Symmetrize, activation: Activation::Relu },
        scorer: ScorerConfig { mlp_init: MlpInit::Glorot, mlp_width: Some(5), ..Default::default() },
        activation: Activation::Tanh,
        ..Default::default()
    };
    let mut model = GslModel::new(&config, &feats, 3, &mut r).unwrap();
    let objective_cfg = ObjectiveConfig {
        regularizers: RegularizerWeights { closeness: 0.5, smoothness: 0.3, sparse_connect: 0.2, log_barrier: 0.1 },
        dae: Some(DaeConfig { mask_rate: 0.3, hidden: 4, noise_std: 0.1 }),
        contrastive: Some(ContrastiveConfig { hidden: 4, ..Default::default() }),
    };
    let a0 = uniform(N, N, 0.0, 1.0, &mut r);
    let sq = squared_distances(&feats);
    let objective = Objective::new(&objective_cfg, &mut model.store, D, D, Matrix::identity(N), &mut r).unwrap();
    let mut store = std::mem::take(&mut model.store);
    randomize_biases(&mut store, &mut r);
    let xid = store.add("x", feats.clone());
    out.push(("full objective".into(), grad_check(&mut store, &|t, st| {
        let mut m = model.clone();
        m.store = st.clone();
        let x = t.param(st, xid);
        let mut rr = rng(9);
        let fwd = m.forward(t, x, false, &mut rr)?;
        let inputs = ObjectiveInputs {
            labels: &labels,
            train_mask: &train_mask,
            raw_features: &feats,
            feature_kind: FeatureKind::Continuous,
            initial_adjacency: &a0,
            squared_distances: Some(&sq),
        };
        Ok(objective.total(t, st, &inputs, x, &fwd, &mut rr)?.0)
    })));
}

/// Worst relative finite-difference error for every differentiable component.
pub fn gradient_suite() -> Vec<Case> {
    let mut out = Vec::new();
    scorer_cases(&mut out);
    sparsifier_cases(&mut out);
    processor_cases(&mut out);
    encoder_cases(&mut out);
    regularizer_cases(&mut out);
    unsupervised_cases(&mut out);
    full_model_case(&mut out);
    out
}

/// Mismatching masks of kNN / d-kNN against the rank-count oracle on random
/// 20×20 score matrices quantized to create ties.
pub fn sparsifier_oracle(trials: usize) -> usize {
    let mut r = rng(10);
    let mut mismatches = 0;
    for trial in 0..trials {
        let scores = Matrix::from_fn(20, 20, |_, _| (r.gen_range(-1.0..1.0f64) * 8.0).round() / 8.0);
        let k = r.gen_range(1..=6);
        let (kind, stride) = if trial % 2 == 0 { (SparsifierKind::Knn, 1) } else { (SparsifierKind::Dknn, r.gen_range(1..=3)) };
        let cfg = SparsifierConfig { kind, k, dilation: stride, ..Default::default() };
        let mut tape = Tape::new();
        let s = tape.constant(scores.clone());
        let out = sparsify(&mut tape, s, &cfg, false, &mut rng(0)).unwrap();
        let kept = tape.value(out).map(|v| if v != 0.0 { 1.0 } else { 0.0 });
        let oracle = brute_rank_mask(&scores, k, stride);
        // a kept entry whose score is exactly zero reads as dropped
        let ok = (0..20).all(|i| (0..20).all(|j| kept[(i, j)] == oracle[(i, j)] || (scores[(i, j)] == 0.0 && oracle[(i, j)] == 1.0)));
        let values_ok = (0..20).all(|i| (0..20).all(|j| tape.value(out)[(i, j)] == scores[(i, j)] * oracle[(i, j)]));
        if !ok || !values_ok {
            mismatches += 1;
        }
    }
    mismatches
}

/// Worst field error of `compute_stats` against the dense oracle over random
/// 10-node graphs of varying density.
pub fn stats_oracle(trials: usize) -> f64 {
    let mut r = rng(11);
    (0..trials)
        .map(|t| {
            let p = [0.05, 0.15, 0.3, 0.5, 0.8][t % 5];
            let a = super::random_graph(10, p, &mut r);
            stats_mismatch(&a)
        })
        .fold(0.0, f64::max)
}

/// `(name, |computed − expected|)` for the closed-form identities.
pub fn closed_forms() -> Vec<Case> {
    let mut out = Vec::new();

    let a = Matrix::from_rows(&[[0.3, -1.0, 2.0], [3.0, 0.0, -0.5], [0.7, 4.0, 1.0]]).unwrap();
    for kind in [ProcessorKind::Symmetrize, ProcessorKind::ActivationSymmetrize] {
        for activation in [Activation::Relu, Activation::Tanh] {
            let mut t = Tape::new();
            let at = t.constant(a.clone());
            let p = process(&mut t, at, &ProcessorConfig { kind, activation }).unwrap();
            let v = t.value(p);
            out.push((format!("{kind:?} {activation:?} asymmetry"), v.max_abs_diff(&v.transpose())));
        }
    }

    let s = Matrix::from_rows(&[[-2.0, 0.3, 1.7], [0.0, 4.0, -0.8], [2.5, -3.0, 0.1]]).unwrap();
    let mut t = Tape::new();
    let st = t.constant(s.clone());
    let relaxed = ugsl::layer::relaxed_bernoulli(&mut t, st, 1.0, false, &mut rng(0)).unwrap();
    // sigmoid(logit(p) + logit(0.5)) with p = sigmoid(s)
    let expected = s.map(|v| {
        let p = 1.0 / (1.0 + (-v).exp());
        let z = (p / (1.0 - p)).ln() + (0.5f64 / 0.5).ln();
        1.0 / (1.0 + (-z).exp())
    });
    out.push(("bernoulli relaxation at t=1, u=0.5".into(), t.value(relaxed).max_abs_diff(&expected)));

    let mut t = Tape::new();
    let ones = t.constant(Matrix::ones(2, 2));
    let lb = reg_log_barrier(&mut t, ones).unwrap();
    out.push(("log-barrier of 2x2 ones".into(), (t.scalar_value(lb) + 2.0 * 2f64.ln()).abs()));

    for n in [2usize, 5, 9] {
        let mut t = Tape::new();
        let z = t.constant(Matrix::ones(n, 3));
        let l = nt_xent(&mut t, z, z, 0.5).unwrap();
        out.push((format!("contrastive identical embeddings n={n}"), (t.scalar_value(l) - (n as f64).ln()).abs()));
    }

    let k2 = ugsl::spectral::SimpleGraph::from_edges(2, [(0, 1)]);
    let pairs = ugsl::spectral::smallest_laplacian_eigenpairs(&k2, 2, 1e-12, 10_000).unwrap();
    out.push(("K2 eigenvalue 0".into(), pairs[0].value.abs()));
    out.push(("K2 eigenvalue 2".into(), (pairs[1].value - 2.0).abs()));
    out
}

pub struct EndToEnd {
    pub result: TrialResult,
    pub loss_drop: f64,
}

/// Base model on the default blobs with a 200-epoch budget.
pub fn end_to_end() -> EndToEnd {
    let ds = blobs(&BlobSpec::default());
    let mut cfg = GslConfig::base(ds.num_nodes());
    cfg.max_epochs = 200;
    let result = ugsl::trainer::train(&ds, &cfg, 0).unwrap().result;
    let first = result.train_loss[0];
    let at_best = result.train_loss[result.best_epoch];
    EndToEnd { loss_drop: 1.0 - at_best / first, result }
}

pub struct SearchHarness {
    pub best_val: f64,
    pub base_val: f64,
    pub top_selected: usize,
    pub trials: usize,
    pub failed: usize,
    pub multiset_equal: bool,
    pub rerun_equal: bool,
}

fn multiset(configs: impl Iterator<Item = GslConfig>) -> Vec<String> {
    let mut v: Vec<String> = configs.map(|c| serde_json::to_string(&c).unwrap()).collect();
    v.sort();
    v
}

/// 100-trial random search on blobs, checked against the base model and
/// against re-runs with the same master seed.
pub fn search_harness(trials: usize, rerun_trials: usize) -> SearchHarness {
    let ds = blobs(&BlobSpec::default());
    let space = SearchSpace::default();
    let seed = 2024;
    let results = random_search(&ds, &space, trials, 1, seed, &BTreeSet::new(), |_| Ok(())).unwrap();
    let base = run_base_model(&ds).unwrap().result;
    let best_val = results.iter().filter(|r| r.is_completed()).map(|r| r.best_val_accuracy).fold(0.0, f64::max);
    let top = top_fraction_analysis(&results, 0.05).unwrap();

    let first = multiset(results.iter().map(|r| r.config.clone()));
    let sampled = multiset(sample_trials(&space, ds.num_nodes(), ds.feature_dim(), trials, seed).into_iter());
    // a second run on 4 workers, over a prefix of the same trial sequence
    let skip: BTreeSet<usize> = (rerun_trials..trials).collect();
    let rerun = random_search(&ds, &space, trials, 4, seed, &skip, |_| Ok(())).unwrap();
    let rerun_equal = rerun[..] == results[..rerun_trials];
    SearchHarness {
        best_val,
        base_val: base.best_val_accuracy,
        top_selected: top.selected.len(),
        trials: results.len(),
        failed: results.iter().filter(|r| !r.is_completed()).count(),
        multiset_equal: first == sampled,
        rerun_equal,
    }
}

/// Base config on blobs twice with the same seed.
pub fn determinism() -> bool {
    let ds = blobs(&BlobSpec::default());
    let mut cfg = GslConfig::base(ds.num_nodes());
    cfg.max_epochs = 200;
    let a = ugsl::trainer::train(&ds, &cfg, 0).unwrap();
    let b = ugsl::trainer::train(&ds, &cfg, 0).unwrap();
    let bits = |r: &TrialResult| serde_json::to_string(r).unwrap();
    a.result == b.result && bits(&a.result) == bits(&b.result) && a.adjacency == b.adjacency
}
