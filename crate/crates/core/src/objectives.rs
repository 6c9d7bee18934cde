//! Training objective: supervised cross-entropy, adjacency regularizers and
//! the denoising and contrastive self-supervision terms.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GslError, Result};
use crate::graph::FeatureKind;
use crate::layer::{encode, Activation, EncoderKind, EncoderLayer, ForwardOutput};
use crate::tensor::{Matrix, ParamStore, Tape, Tensor};

pub const MAX_REG_WEIGHT: f64 = 20.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerWeights {
    pub closeness: f64,
    pub smoothness: f64,
    pub sparse_connect: f64,
    pub log_barrier: f64,
}

impl RegularizerWeights {
    pub fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("closeness", self.closeness),
            ("smoothness", self.smoothness),
            ("sparse_connect", self.sparse_connect),
            ("log_barrier", self.log_barrier),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaeConfig {
    pub mask_rate: f64,
    pub hidden: usize,
    /// Standard deviation of the noise added to masked continuous features.
    pub noise_std: f64,
}

impl Default for DaeConfig {
    fn default() -> Self {
        Self { mask_rate: 0.2, hidden: 512, noise_std: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub mask_rate: f64,
    pub temperature: f64,
    /// Weight kept by the anchor graph at each update.
    pub tau: f64,
    pub hidden: usize,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { mask_rate: 0.2, temperature: 0.5, tau: 0.1, hidden: 32 }
    }
}

/// Which extra terms enter the objective. An absent unsupervised block means
/// that loss is off.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub regularizers: RegularizerWeights,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dae: Option<DaeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrastive: Option<ContrastiveConfig>,
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in self.regularizers.named() {
            if !(0.0..=MAX_REG_WEIGHT).contains(&w) {
                return Err(GslError::config(format!("objective.regularizers.{name}"), format!("weight must lie in [0, {MAX_REG_WEIGHT}], got {w}")));
            }
        }
        if let Some(dae) = &self.dae {
            if !(dae.mask_rate > 0.0 && dae.mask_rate < 1.0) {
                return Err(GslError::config("objective.dae.mask_rate", format!("must lie in (0, 1), got {}", dae.mask_rate)));
            }
            if dae.hidden == 0 {
                return Err(GslError::config("objective.dae.hidden", "must be positive"));
            }
            if !(dae.noise_std >= 0.0 && dae.noise_std.is_finite()) {
                return Err(GslError::config("objective.dae.noise_std", "must be nonnegative"));
            }
        }
        if let Some(c) = &self.contrastive {
            if !(0.0..1.0).contains(&c.mask_rate) {
                return Err(GslError::config("objective.contrastive.mask_rate", format!("must lie in [0, 1), got {}", c.mask_rate)));
            }
            if !(c.temperature > 0.0 && c.temperature.is_finite()) {
                return Err(GslError::config("objective.contrastive.temperature", "must be positive"));
            }
            if !(0.0..1.0).contains(&c.tau) {
                return Err(GslError::config("objective.contrastive.tau", format!("must lie in [0, 1), got {}", c.tau)));
            }
            if c.hidden == 0 {
                return Err(GslError::config("objective.contrastive.hidden", "must be positive"));
            }
        }
        Ok(())
    }

    /// Names of the enabled unsupervised losses.
    pub fn unsupervised(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.dae.is_some() {
            out.push("dae");
        }
        if self.contrastive.is_some() {
            out.push("contrastive");
        }
        out
    }
}

/// `‖A0 − A‖²_F`.
pub fn reg_closeness(tape: &mut Tape, a: Tensor, a0: &Matrix) -> Result<Tensor> {
    let target = tape.constant(a0.clone());
    let diff = tape.sub(a, target)?;
    let sq = tape.square(diff)?;
    tape.sum(sq)
}

/// `(1/n²) Σᵢⱼ Aᵢⱼ ‖xᵢ − xⱼ‖²` given the squared distances.
pub fn reg_smoothness(tape: &mut Tape, a: Tensor, squared_distances: &Matrix) -> Result<Tensor> {
    let n = a.rows() as f64;
    let d = tape.constant(squared_distances.clone());
    let weighted = tape.hadamard(a, d)?;
    let total = tape.sum(weighted)?;
    tape.scale(total, 1.0 / (n * n))
}

/// `‖A‖²_F`.
pub fn reg_sparse_connect(tape: &mut Tape, a: Tensor) -> Result<Tensor> {
    let sq = tape.square(a)?;
    tape.sum(sq)
}

/// `−1ᵀ log(A·1)` with row sums clamped from below.
pub fn reg_log_barrier(tape: &mut Tape, a: Tensor) -> Result<Tensor> {
    let degrees = tape.row_sums(a)?;
    let logs = tape.log(degrees)?;
    let total = tape.sum(logs)?;
    tape.scale(total, -1.0)
}

/// Symmetric NT-Xent between paired rows of `x` and `y`, written as a loss:
/// `−(1/2n) Σᵢ [log softmaxⱼ(sim(xᵢ, yⱼ)/τ)ᵢ + log softmaxⱼ(sim(yᵢ, xⱼ)/τ)ᵢ]`
/// with cosine similarity.
pub fn nt_xent(tape: &mut Tape, x: Tensor, y: Tensor, temperature: f64) -> Result<Tensor> {
    let n = x.rows();
    let sim = tape.cross_cosine(x, y)?;
    let logits = tape.scale(sim, 1.0 / temperature)?;
    let logits_t = tape.transpose(logits)?;
    let eye = tape.constant(Matrix::identity(n));
    let mut total: Option<Tensor> = None;
    for l in [logits, logits_t] {
        let ls = tape.log_softmax_rows(l)?;
        let diag = tape.hadamard(ls, eye)?;
        let s = tape.sum(diag)?;
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    tape.scale(total.expect("two directions"), -1.0 / (2.0 * n as f64))
}

/// Denoising corruption: each entry is masked with probability `rate`.
/// Binary features are zeroed there, continuous ones get `N(0, noise_std²)`
/// added. Returns `(corrupted, mask)`; an empty draw is retried once.
pub fn dae_corrupt(x: &Matrix, kind: FeatureKind, rate: f64, noise_std: f64, rng: &mut impl Rng) -> Result<(Matrix, Matrix)> {
    let mut mask = Matrix::zeros(x.rows(), x.cols());
    for _ in 0..2 {
        mask = Matrix::from_fn(x.rows(), x.cols(), |_, _| if rng.gen::<f64>() < rate { 1.0 } else { 0.0 });
        if mask.count_nonzero() > 0 {
            break;
        }
    }
    if mask.count_nonzero() == 0 {
        return Err(GslError::Numeric(format!("denoising mask was empty twice at rate {rate}")));
    }
    let noise = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let corrupted = match kind {
        FeatureKind::Binary => x.zip_map(&mask, |v, m| if m != 0.0 { 0.0 } else { v }),
        FeatureKind::Continuous => {
            let mut out = x.clone();
            for (v, &m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                if m != 0.0 {
                    *v += noise.sample(rng);
                }
            }
            out
        }
    };
    Ok((corrupted, mask))
}

/// Reconstruction error on masked entries: Bernoulli cross-entropy with
/// logits for binary features, squared error for continuous ones.
pub fn dae_reconstruction_loss(tape: &mut Tape, prediction: Tensor, target: &Matrix, mask: &Matrix, kind: FeatureKind) -> Result<Tensor> {
    match kind {
        FeatureKind::Binary => tape.bce_with_logits(prediction, target, mask),
        FeatureKind::Continuous => {
            let count = mask.count_nonzero();
            if count == 0 {
                return Err(GslError::config("mask", "reconstruction mask selects no entries"));
            }
            let t = tape.constant(target.clone());
            let diff = tape.sub(prediction, t)?;
            let m = tape.constant(mask.clone());
            let masked = tape.hadamard(diff, m)?;
            let sq = tape.square(masked)?;
            let total = tape.sum(sq)?;
            tape.scale(total, 1.0 / count as f64)
        }
    }
}

/// Separate two-layer GCN mapping corrupted features back to features.
#[derive(Clone, Debug)]
pub struct DaeNet {
    layers: [EncoderLayer; 2],
}

impl DaeNet {
    pub fn new(store: &mut ParamStore, width: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let l0 = EncoderLayer::init(store, EncoderKind::Gcn, "dae0", width, hidden, rng);
        let l1 = EncoderLayer::init(store, EncoderKind::Gcn, "dae1", hidden, width, rng);
        Self { layers: [l0, l1] }
    }

    pub fn reconstruct(&self, tape: &mut Tape, store: &ParamStore, x: Tensor, adjacency: Tensor) -> Result<Tensor> {
        let h = encode(tape, store, &self.layers[0], x, None, adjacency, Activation::Relu, false)?;
        encode(tape, store, &self.layers[1], h, None, adjacency, Activation::Relu, true)
    }

    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        features: &Matrix,
        kind: FeatureKind,
        adjacency: Tensor,
        config: &DaeConfig,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        let (corrupted, mask) = dae_corrupt(features, kind, config.mask_rate, config.noise_std, rng)?;
        let x = tape.constant(corrupted);
        let pred = self.reconstruct(tape, store, x, adjacency)?;
        dae_reconstruction_loss(tape, pred, features, &mask, kind)
    }
}

/// Slowly updated second view for the contrastive loss.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorState {
    pub adjacency: Matrix,
}

impl AnchorState {
    pub fn new(initial: Matrix) -> Self {
        Self { adjacency: initial }
    }

    /// `anchor ← tau · anchor + (1 − tau) · learned`.
    pub fn update(&mut self, learned: &Matrix, tau: f64) {
        let keep = tau;
        let adj = &mut self.adjacency;
        for (a, &l) in adj.as_mut_slice().iter_mut().zip(learned.as_slice()) {
            *a = keep * *a + (1.0 - keep) * l;
        }
    }
}

/// Fixed corruption of one contrastive view: kept-edge mask (n×n) and
/// kept-feature-column mask (1×d).
#[derive(Clone, Debug, PartialEq)]
pub struct ViewNoise {
    pub edges: Matrix,
    pub columns: Matrix,
}

impl ViewNoise {
    pub fn sample(n: usize, d: usize, rate: f64, rng: &mut impl Rng) -> Self {
        let mut keep = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 });
        let edges = keep(n, n);
        let columns = keep(1, d);
        Self { edges, columns }
    }

    pub fn none(n: usize, d: usize) -> Self {
        Self { edges: Matrix::ones(n, n), columns: Matrix::ones(1, d) }
    }

    pub fn apply(&self, tape: &mut Tape, x: Tensor, adjacency: Tensor) -> Result<(Tensor, Tensor)> {
        let cols = tape.constant(self.columns.clone());
        let edges = tape.constant(self.edges.clone());
        Ok((tape.hadamard(x, cols)?, tape.hadamard(adjacency, edges)?))
    }
}

/// Shared GCN encoder plus projection MLP for both contrastive views.
#[derive(Clone, Debug)]
pub struct ContrastiveNet {
    gnn: [EncoderLayer; 2],
    projection: [EncoderLayer; 2],
}

impl ContrastiveNet {
    pub fn new(store: &mut ParamStore, width: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let gnn = [
            EncoderLayer::init(store, EncoderKind::Gcn, "cl.gnn0", width, hidden, rng),
            EncoderLayer::init(store, EncoderKind::Gcn, "cl.gnn1", hidden, hidden, rng),
        ];
        let projection = [
            EncoderLayer::init(store, EncoderKind::Mlp, "cl.proj0", hidden, hidden, rng),
            EncoderLayer::init(store, EncoderKind::Mlp, "cl.proj1", hidden, hidden, rng),
        ];
        Self { gnn, projection }
    }

    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, x: Tensor, adjacency: Tensor) -> Result<Tensor> {
        let h = encode(tape, store, &self.gnn[0], x, None, adjacency, Activation::Relu, false)?;
        let h = encode(tape, store, &self.gnn[1], h, None, adjacency, Activation::Relu, true)?;
        let z = encode(tape, store, &self.projection[0], h, None, adjacency, Activation::Relu, false)?;
        encode(tape, store, &self.projection[1], z, None, adjacency, Activation::Relu, true)
    }

    /// Contrastive loss between `(x, learned)` and `(x, anchor)` under fixed view noise.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_with_noise(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Tensor,
        learned: Tensor,
        anchor: Tensor,
        noise: [&ViewNoise; 2],
        temperature: f64,
    ) -> Result<Tensor> {
        let (x1, a1) = noise[0].apply(tape, x, learned)?;
        let (x2, a2) = noise[1].apply(tape, x, anchor)?;
        let z1 = self.embed(tape, store, x1, a1)?;
        let z2 = self.embed(tape, store, x2, a2)?;
        nt_xent(tape, z1, z2, temperature)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Tensor,
        learned: Tensor,
        anchor: &AnchorState,
        config: &ContrastiveConfig,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        let (n, d) = x.shape();
        let v1 = ViewNoise::sample(n, d, config.mask_rate, rng);
        let v2 = ViewNoise::sample(n, d, config.mask_rate, rng);
        let anchor = tape.constant(anchor.adjacency.clone());
        self.loss_with_noise(tape, store, x, learned, anchor, [&v1, &v2], config.temperature)
    }
}

/// Fixed per-trial inputs of the objective.
#[derive(Clone, Debug)]
pub struct ObjectiveInputs<'a> {
    pub labels: &'a [usize],
    pub train_mask: &'a [bool],
    /// Raw features, the denoising target.
    pub raw_features: &'a Matrix,
    pub feature_kind: FeatureKind,
    /// Closeness target.
    pub initial_adjacency: &'a Matrix,
    /// Pairwise squared distances of the raw features, needed for smoothness.
    pub squared_distances: Option<&'a Matrix>,
}

/// Value of each term of one objective evaluation, before weighting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub supervised: f64,
    pub closeness: Option<f64>,
    pub smoothness: Option<f64>,
    pub sparse_connect: Option<f64>,
    pub log_barrier: Option<f64>,
    pub dae: Option<f64>,
    pub contrastive: Option<f64>,
    pub total: f64,
}

/// Objective terms together with their auxiliary networks and anchor.
#[derive(Clone, Debug)]
pub struct Objective {
    config: ObjectiveConfig,
    dae: Option<DaeNet>,
    contrastive: Option<ContrastiveNet>,
    anchor: Option<AnchorState>,
}

impl Objective {
    /// Registers auxiliary networks in `store`. `anchor` starts the contrastive
    /// second view.
    pub fn new(
        config: &ObjectiveConfig,
        store: &mut ParamStore,
        raw_width: usize,
        input_width: usize,
        anchor: Matrix,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let dae = config.dae.as_ref().map(|c| DaeNet::new(store, raw_width, c.hidden, rng));
        let contrastive = config.contrastive.as_ref().map(|c| ContrastiveNet::new(store, input_width, c.hidden, rng));
        let anchor = config.contrastive.as_ref().map(|_| AnchorState::new(anchor));
        Ok(Self { config: config.clone(), dae, contrastive, anchor })
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn anchor(&self) -> Option<&AnchorState> {
        self.anchor.as_ref()
    }

    /// Supervised cross-entropy plus every enabled term. Regularizers average
    /// over the distinct adjacencies of `forward`.
    pub fn total(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: &ObjectiveInputs<'_>,
        x: Tensor,
        forward: &ForwardOutput,
        rng: &mut impl Rng,
    ) -> Result<(Tensor, ObjectiveBreakdown)> {
        let mut total = tape.softmax_cross_entropy(forward.logits, inputs.labels, inputs.train_mask)?;
        let mut parts = ObjectiveBreakdown { supervised: tape.scalar_value(total), ..Default::default() };
        let mut distinct: Vec<Tensor> = Vec::new();
        for a in &forward.adjacencies {
            if !distinct.contains(a) {
                distinct.push(*a);
            }
        }
        let w = &self.config.regularizers;
        let terms: [(f64, &mut Option<f64>, u8); 4] = [
            (w.closeness, &mut parts.closeness, 0),
            (w.smoothness, &mut parts.smoothness, 1),
            (w.sparse_connect, &mut parts.sparse_connect, 2),
            (w.log_barrier, &mut parts.log_barrier, 3),
        ];
        for (weight, slot, which) in terms {
            if weight == 0.0 {
                continue;
            }
            let mut sum: Option<Tensor> = None;
            for &a in &distinct {
                let r = match which {
                    0 => reg_closeness(tape, a, inputs.initial_adjacency)?,
                    1 => {
                        let d = inputs
                            .squared_distances
                            .ok_or_else(|| GslError::config("objective.regularizers.smoothness", "squared distances were not provided"))?;
                        reg_smoothness(tape, a, d)?
                    }
                    2 => reg_sparse_connect(tape, a)?,
                    _ => reg_log_barrier(tape, a)?,
                };
                sum = Some(match sum {
                    Some(s) => tape.add(s, r)?,
                    None => r,
                });
            }
            let mean = tape.scale(sum.expect("at least one adjacency"), 1.0 / distinct.len() as f64)?;
            *slot = Some(tape.scalar_value(mean));
            let weighted = tape.scale(mean, weight)?;
            total = tape.add(total, weighted)?;
        }
        let learned = forward.learned();
        if let (Some(net), Some(cfg)) = (&self.dae, &self.config.dae) {
            let l = net.loss(tape, store, inputs.raw_features, inputs.feature_kind, learned, cfg, rng)?;
            parts.dae = Some(tape.scalar_value(l));
            total = tape.add(total, l)?;
        }
        if let (Some(net), Some(cfg), Some(anchor)) = (&self.contrastive, &self.config.contrastive, &self.anchor) {
            let l = net.loss(tape, store, x, learned, anchor, cfg, rng)?;
            parts.contrastive = Some(tape.scalar_value(l));
            total = tape.add(total, l)?;
        }
        parts.total = tape.scalar_value(total);
        Ok((total, parts))
    }

    /// Moves the anchor toward the latest learned adjacency.
    pub fn end_epoch(&mut self, learned: &Matrix) {
        if let (Some(anchor), Some(cfg)) = (&mut self.anchor, &self.config.contrastive) {
            anchor.update(learned, cfg.tau);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn value(f: impl FnOnce(&mut Tape) -> Tensor) -> f64 {
        let mut tape = Tape::new();
        let t = f(&mut tape);
        tape.scalar_value(t)
    }

    #[test]
    fn regularizer_closed_forms() {
        let ones = Matrix::ones(2, 2);
        let close = value(|t| {
            let a = t.constant(ones.clone());
            reg_closeness(t, a, &Matrix::zeros(2, 2)).unwrap()
        });
        assert_eq!(close, 4.0);
        let same = value(|t| {
            let a = t.constant(ones.clone());
            reg_closeness(t, a, &ones).unwrap()
        });
        assert_eq!(same, 0.0);
        let sparse = value(|t| {
            let a = t.constant(Matrix::identity(3));
            reg_sparse_connect(t, a).unwrap()
        });
        assert_eq!(sparse, 3.0);
        let barrier = value(|t| {
            let a = t.constant(ones.clone());
            reg_log_barrier(t, a).unwrap()
        });
        assert!((barrier + 2.0 * 2f64.ln()).abs() < 1e-12);
        let zero_row = value(|t| {
            let a = t.constant(Matrix::from_rows(&[[0.0, 0.0], [0.5, 0.5]]).unwrap());
            reg_log_barrier(t, a).unwrap()
        });
        assert!((zero_row - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn smoothness_two_node_example() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let d = crate::graph::squared_distances(&x);
        let v = value(|t| {
            let a = t.constant(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
            reg_smoothness(t, a, &d).unwrap()
        });
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nt_xent_examples() {
        let same = value(|t| {
            let x = t.constant(Matrix::ones(5, 3));
            nt_xent(t, x, x, 0.7).unwrap()
        });
        assert!((same - 5f64.ln()).abs() < 1e-12);
        let aligned = value(|t| {
            let x = t.constant(Matrix::identity(2));
            nt_xent(t, x, x, 1.0).unwrap()
        });
        assert!((aligned - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn anchor_contracts() {
        let learned = Matrix::from_fn(3, 3, |r, c| (r + 2 * c) as f64);
        let mut anchor = AnchorState::new(Matrix::identity(3));
        let mut prev = anchor.adjacency.max_abs_diff(&learned);
        for _ in 0..5 {
            anchor.update(&learned, 0.15);
            let gap = anchor.adjacency.max_abs_diff(&learned);
            assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn dae_mask_rate_and_corruption() {
        let x = Matrix::ones(100, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (c, mask) = dae_corrupt(&x, FeatureKind::Binary, 0.3, 0.1, &mut rng).unwrap();
        let count = mask.count_nonzero() as f64;
        // 5000 Bernoulli(0.3) draws: sd ≈ 32
        assert!((count - 1500.0).abs() < 200.0, "{count}");
        assert_eq!(c.count_nonzero() as f64, 5000.0 - count);
    }

    #[test]
    fn perfect_binary_reconstruction_is_near_zero() {
        let target = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let v = value(|t| {
            let logits = t.constant(target.map(|v| if v > 0.5 { 40.0 } else { -40.0 }));
            dae_reconstruction_loss(t, logits, &target, &Matrix::ones(2, 2), FeatureKind::Binary).unwrap()
        });
        assert!(v < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_weights() {
        let cfg = ObjectiveConfig { regularizers: RegularizerWeights { sparse_connect: -1.0, ..Default::default() }, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(GslError::Config { .. })));
    }
}
