//! Graph structure learning toolkit.
//!
//! A learned graph is produced by a stack of layers, each composed of an edge
//! scorer, a sparsifier, a processor and an encoder. Around that core sit the
//! adjacency regularizers and unsupervised objectives, a full-batch trainer
//! with early stopping, a random/line search harness, and statistics of the
//! learned graphs.

pub mod error;
pub mod tensor;

pub use error::{GslError, Result};
pub mod graph;
pub mod synthetic;
pub mod spectral;
pub mod positional;
pub mod layer;
pub mod objectives;
pub mod stats;
pub mod search;
pub mod trainer;
