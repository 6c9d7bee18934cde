//! The structure-learning layer: edge scorer, sparsifier, processor and
//! encoder, and their two-layer composition.

mod config;
mod encoder;
mod model;
mod process;
mod scorer;
mod sparsify;

pub use config::{
    Activation, AdjacencyMode, AttInit, EncoderConfig, EncoderKind, FpInit, LayerConfig, MlpInit, ProcessorConfig,
    ProcessorKind, ScorerConfig, ScorerKind, SparsifierConfig, SparsifierKind, DEFAULT_MAX_EDGES, NUM_LAYERS,
};
pub use encoder::{dropout, encode, EncoderLayer, Propagator};
pub use model::{ForwardOutput, GslModel};
pub use process::process;
pub use scorer::{init_scorer, score, score_att, score_fp, score_mlp, ScorerParams};
pub use sparsify::{rank_mask, relaxed_bernoulli, sparsify, threshold_mask};
