use rand::Rng;

use super::config::{Activation, AttInit, FpInit, MlpInit, ScorerConfig, ScorerKind};
use crate::error::{GslError, Result};
use crate::graph::{similarity_matrix, KnnMetric};
use crate::tensor::{glorot_uniform, Matrix, ParamId, ParamStore, Tape, Tensor};

/// Learnable state of one edge scorer.
#[derive(Clone, Debug, PartialEq)]
pub enum ScorerParams {
    Fp { scores: ParamId },
    Att { heads: ParamId },
    Mlp { layers: Vec<(ParamId, ParamId)> },
}

/// Creates scorer parameters for `layer`. `features` is the model input and
/// seeds the cosine init of FP scorers.
pub fn init_scorer(
    store: &mut ParamStore,
    config: &ScorerConfig,
    layer: usize,
    features: &Matrix,
    input_width: usize,
    rng: &mut impl Rng,
) -> Result<ScorerParams> {
    config.validate(input_width)?;
    let n = features.rows();
    Ok(match config.kind {
        ScorerKind::Fp => {
            let v = match config.fp_init {
                FpInit::Glorot => glorot_uniform(n, n, rng),
                FpInit::Cosine => similarity_matrix(features, KnnMetric::Cosine),
            };
            ScorerParams::Fp { scores: store.add(format!("scorer{layer}.fp"), v) }
        }
        ScorerKind::Att => {
            let v = match config.att_init {
                AttInit::Ones => Matrix::ones(config.att_heads, input_width),
                AttInit::Random => glorot_uniform(config.att_heads, input_width, rng),
            };
            ScorerParams::Att { heads: store.add(format!("scorer{layer}.att"), v) }
        }
        ScorerKind::Mlp => {
            let width = config.mlp_width.unwrap_or(input_width);
            let mut layers = Vec::with_capacity(config.mlp_layers);
            let mut fan_in = input_width;
            for i in 0..config.mlp_layers {
                let w = match config.mlp_init {
                    MlpInit::Identity => Matrix::identity(width),
                    MlpInit::Glorot => glorot_uniform(fan_in, width, rng),
                };
                let wid = store.add(format!("scorer{layer}.mlp{i}.w"), w);
                let bid = store.add(format!("scorer{layer}.mlp{i}.b"), Matrix::zeros(1, width));
                layers.push((wid, bid));
                fan_in = width;
            }
            ScorerParams::Mlp { layers }
        }
    })
}

/// The free score matrix itself.
pub fn score_fp(tape: &mut Tape, store: &ParamStore, id: ParamId, n: usize) -> Result<Tensor> {
    let v = tape.param(store, id);
    if v.shape() != (n, n) {
        return Err(GslError::config("scorer.fp", format!("score matrix is {:?} but the graph has {n} nodes", v.shape())));
    }
    Ok(v)
}

/// Mean over heads `p` of `cos(x_i ∘ v_p, x_j ∘ v_p)`.
pub fn score_att(tape: &mut Tape, x: Tensor, heads: Tensor) -> Result<Tensor> {
    if heads.cols() != x.cols() {
        return Err(GslError::config("scorer.att", format!("head width {} vs feature width {}", heads.cols(), x.cols())));
    }
    let m = heads.rows();
    let mut total: Option<Tensor> = None;
    for p in 0..m {
        let head = tape.row_slice(heads, p)?;
        let weighted = tape.hadamard(x, head)?;
        let cos = tape.pairwise_cosine(weighted)?;
        total = Some(match total {
            Some(t) => tape.add(t, cos)?,
            None => cos,
        });
    }
    let total = total.ok_or_else(|| GslError::config("scorer.att_heads", "need at least one head"))?;
    tape.scale(total, 1.0 / m as f64)
}

/// Pairwise cosine of MLP embeddings; `activation` sits between layers only.
pub fn score_mlp(tape: &mut Tape, store: &ParamStore, x: Tensor, layers: &[(ParamId, ParamId)], activation: Activation) -> Result<Tensor> {
    let mut h = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        if i > 0 {
            h = activation.apply(tape, h)?;
        }
        let wt = tape.param(store, w);
        let bt = tape.param(store, b);
        let z = tape.matmul(h, wt)?;
        h = tape.add(z, bt)?;
    }
    tape.pairwise_cosine(h)
}

pub fn score(
    tape: &mut Tape,
    store: &ParamStore,
    params: &ScorerParams,
    x: Tensor,
    activation: Activation,
) -> Result<Tensor> {
    match params {
        ScorerParams::Fp { scores } => score_fp(tape, store, *scores, x.rows()),
        ScorerParams::Att { heads } => {
            let h = tape.param(store, *heads);
            score_att(tape, x, h)
        }
        ScorerParams::Mlp { layers } => score_mlp(tape, store, x, layers, activation),
    }
}
