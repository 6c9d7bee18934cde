//! Dense matrices, a single-use reverse-mode tape, and the Adam optimizer.

mod adam;
mod matrix;
mod params;
mod tape;

pub use adam::{AdamState, StepReport, BETA1, BETA2, EPS};
pub use matrix::Matrix;
pub use params::{glorot_uniform, Param, ParamId, ParamStore};
pub use tape::{sigmoid, BinaryKind, Gradients, Tape, Tensor, UnaryKind, LOG_CLAMP, NORM_FLOOR};
