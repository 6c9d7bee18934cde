use serde::{Deserialize, Serialize};

use crate::error::{GslError, Result};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Tensor) -> Result<Tensor> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => Ok(x),
        }
    }

    pub fn eval(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Fp,
    Att,
    #[default]
    Mlp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpInit {
    Glorot,
    #[default]
    Cosine,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttInit {
    Random,
    #[default]
    Ones,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpInit {
    Glorot,
    #[default]
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub fp_init: FpInit,
    pub att_heads: usize,
    pub att_init: AttInit,
    pub mlp_layers: usize,
    /// Hidden and output width of the MLP scorer; `None` keeps the input width.
    pub mlp_width: Option<usize>,
    pub mlp_init: MlpInit,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            kind: ScorerKind::Mlp,
            fp_init: FpInit::Cosine,
            att_heads: 1,
            att_init: AttInit::Ones,
            mlp_layers: 1,
            mlp_width: None,
            mlp_init: MlpInit::Identity,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self, input_width: usize) -> Result<()> {
        match self.kind {
            ScorerKind::Fp => Ok(()),
            ScorerKind::Att => {
                if self.att_heads == 0 {
                    return Err(GslError::config("scorer.att_heads", "need at least one head"));
                }
                Ok(())
            }
            ScorerKind::Mlp => {
                if !(1..=2).contains(&self.mlp_layers) {
                    return Err(GslError::config("scorer.mlp_layers", format!("must be 1 or 2, got {}", self.mlp_layers)));
                }
                let width = self.mlp_width.unwrap_or(input_width);
                if width == 0 {
                    return Err(GslError::config("scorer.mlp_width", "must be positive"));
                }
                if self.mlp_init == MlpInit::Identity && width != input_width {
                    return Err(GslError::config(
                        "scorer.mlp_width",
                        format!("identity init needs square layers: width {width} vs input {input_width}"),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsifierKind {
    #[default]
    Knn,
    Dknn,
    RandomDknn,
    Epsnn,
    Bernoulli,
}

pub const DEFAULT_MAX_EDGES: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsifierConfig {
    pub kind: SparsifierKind,
    pub k: usize,
    pub dilation: usize,
    pub epsilon: f64,
    pub temperature: f64,
    /// Upper bound on kept entries for threshold sparsifiers.
    pub max_edges: usize,
}

impl Default for SparsifierConfig {
    fn default() -> Self {
        Self { kind: SparsifierKind::Knn, k: 15, dilation: 2, epsilon: 0.5, temperature: 0.5, max_edges: DEFAULT_MAX_EDGES }
    }
}

impl SparsifierConfig {
    /// Stride between kept ranks.
    pub fn stride(&self) -> usize {
        match self.kind {
            SparsifierKind::Dknn | SparsifierKind::RandomDknn => self.dilation,
            _ => 1,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self.kind {
            SparsifierKind::Knn | SparsifierKind::Dknn | SparsifierKind::RandomDknn => {
                let d = self.stride();
                if d == 0 {
                    return Err(GslError::config("sparsifier.dilation", "must be >= 1"));
                }
                if self.k == 0 || self.k * d > n.saturating_sub(1) {
                    return Err(GslError::config(
                        "sparsifier.k",
                        format!("need 1 <= k*d <= n-1, got k = {}, d = {d}, n = {n}", self.k),
                    ));
                }
                Ok(())
            }
            SparsifierKind::Epsnn | SparsifierKind::Bernoulli => {
                if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
                    return Err(GslError::config("sparsifier.epsilon", format!("must lie in (0, 1), got {}", self.epsilon)));
                }
                if self.kind == SparsifierKind::Bernoulli && !(self.temperature > 0.0 && self.temperature.is_finite()) {
                    return Err(GslError::config("sparsifier.temperature", format!("must be positive, got {}", self.temperature)));
                }
                if self.max_edges == 0 {
                    return Err(GslError::config("sparsifier.max_edges", "must be positive"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessorKind {
    #[default]
    None,
    Symmetrize,
    Activation,
    ActivationSymmetrize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessorConfig {
    pub kind: ProcessorKind,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Gcn,
    Gin,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { kind: EncoderKind::Gcn, hidden: 32 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    #[default]
    One,
    PerLayer,
}

pub const NUM_LAYERS: usize = 2;

/// Everything that shapes a [`GslModel`](super::GslModel).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerConfig {
    pub scorer: ScorerConfig,
    pub sparsifier: SparsifierConfig,
    pub processor: ProcessorConfig,
    pub encoder: EncoderConfig,
    pub adjacency_mode: AdjacencyMode,
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            scorer: ScorerConfig::default(),
            sparsifier: SparsifierConfig::default(),
            processor: ProcessorConfig::default(),
            encoder: EncoderConfig::default(),
            adjacency_mode: AdjacencyMode::One,
            activation: Activation::Relu,
            dropout: 0.5,
        }
    }
}

impl LayerConfig {
    /// Feature width entering layer `l` (0-based).
    pub fn layer_input_width(&self, l: usize, input_width: usize) -> usize {
        if l == 0 {
            input_width
        } else {
            self.encoder.hidden
        }
    }

    pub fn validate(&self, n: usize, input_width: usize) -> Result<()> {
        self.scorer.validate(input_width)?;
        if self.adjacency_mode == AdjacencyMode::PerLayer {
            for l in 1..NUM_LAYERS {
                self.scorer.validate(self.layer_input_width(l, input_width))?;
            }
        }
        self.sparsifier.validate(n)?;
        if self.encoder.hidden == 0 {
            return Err(GslError::config("encoder.hidden", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GslError::config("dropout", format!("must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}
