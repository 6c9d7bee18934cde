use rand::Rng;

use super::config::{AdjacencyMode, EncoderKind, LayerConfig, NUM_LAYERS};
use super::encoder::{dropout, encode, EncoderLayer, Propagator};
use super::process::process;
use super::scorer::{init_scorer, score, ScorerParams};
use super::sparsify::sparsify;
use crate::error::{GslError, Result};
use crate::tensor::{Matrix, ParamStore, Tape, Tensor};

/// A stack of [`NUM_LAYERS`] structure-learning layers with its parameters.
#[derive(Clone, Debug)]
pub struct GslModel {
    config: LayerConfig,
    pub store: ParamStore,
    scorers: Vec<ScorerParams>,
    encoders: Vec<EncoderLayer>,
    num_nodes: usize,
    input_width: usize,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Tensor,
    /// Processed adjacency used by each layer. In `one` mode every entry is
    /// the same tensor.
    pub adjacencies: Vec<Tensor>,
}

impl ForwardOutput {
    pub fn learned(&self) -> Tensor {
        *self.adjacencies.last().expect("at least one layer")
    }
}

impl GslModel {
    /// `features` is the layer-0 input; it fixes the node count and seeds FP
    /// cosine initialization.
    pub fn new(config: &LayerConfig, features: &Matrix, num_classes: usize, rng: &mut impl Rng) -> Result<Self> {
        let n = features.rows();
        let d = features.cols();
        config.validate(n, d)?;
        if num_classes == 0 {
            return Err(GslError::config("num_classes", "must be positive"));
        }
        let mut store = ParamStore::new();
        let scorer_count = match config.adjacency_mode {
            AdjacencyMode::One => 1,
            AdjacencyMode::PerLayer => NUM_LAYERS,
        };
        let mut scorers = Vec::with_capacity(scorer_count);
        for l in 0..scorer_count {
            scorers.push(init_scorer(&mut store, &config.scorer, l, features, config.layer_input_width(l, d), rng)?);
        }
        let mut encoders = Vec::with_capacity(NUM_LAYERS);
        for l in 0..NUM_LAYERS {
            let fan_in = config.layer_input_width(l, d);
            let fan_out = if l + 1 == NUM_LAYERS { num_classes } else { config.encoder.hidden };
            encoders.push(EncoderLayer::init(&mut store, config.encoder.kind, &format!("encoder{l}"), fan_in, fan_out, rng));
        }
        Ok(Self { config: config.clone(), store, scorers, encoders, num_nodes: n, input_width: d })
    }

    pub fn config(&self) -> &LayerConfig {
        &self.config
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    /// Scores, sparsifies and processes an adjacency from `x` with scorer `index`.
    pub fn adjacency(&self, tape: &mut Tape, index: usize, x: Tensor, training: bool, rng: &mut impl Rng) -> Result<Tensor> {
        let scores = score(tape, &self.store, &self.scorers[index], x, self.config.activation)?;
        let sparse = sparsify(tape, scores, &self.config.sparsifier, training, rng)?;
        process(tape, sparse, &self.config.processor)
    }

    pub fn forward(&self, tape: &mut Tape, x: Tensor, training: bool, rng: &mut impl Rng) -> Result<ForwardOutput> {
        if x.shape() != (self.num_nodes, self.input_width) {
            return Err(GslError::config(
                "features",
                format!("model expects {}x{} input, got {:?}", self.num_nodes, self.input_width, x.shape()),
            ));
        }
        let shared = match self.config.adjacency_mode {
            AdjacencyMode::One => {
                let a = self.adjacency(tape, 0, x, training, rng)?;
                let prop = if self.config.encoder.kind == EncoderKind::Gcn { Some(Propagator::gcn(tape, a)?) } else { None };
                Some((a, prop))
            }
            AdjacencyMode::PerLayer => None,
        };
        let mut h = x;
        let mut adjacencies = Vec::with_capacity(NUM_LAYERS);
        for (l, layer) in self.encoders.iter().enumerate() {
            let (a, prop) = match &shared {
                Some((a, prop)) => (*a, *prop),
                None => (self.adjacency(tape, l, h, training, rng)?, None),
            };
            adjacencies.push(a);
            let input = if training { dropout(tape, h, self.config.dropout, rng)? } else { h };
            h = encode(tape, &self.store, layer, input, prop.as_ref(), a, self.config.activation, l + 1 == NUM_LAYERS)?;
        }
        Ok(ForwardOutput { logits: h, adjacencies })
    }

    /// Evaluation-mode forward pass on a fresh tape: `(logits, learned adjacency)`.
    pub fn predict(&self, x: &Matrix, rng: &mut impl Rng) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let xt = tape.constant(x.clone());
        let out = self.forward(&mut tape, xt, false, rng)?;
        Ok((tape.value(out.logits).clone(), tape.value(out.learned()).clone()))
    }
}
