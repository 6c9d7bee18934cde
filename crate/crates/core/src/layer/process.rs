use super::config::{ProcessorConfig, ProcessorKind};
use crate::error::Result;
use crate::tensor::{Tape, Tensor};

fn symmetrize(tape: &mut Tape, a: Tensor) -> Result<Tensor> {
    let at = tape.transpose(a)?;
    let sum = tape.add(a, at)?;
    tape.scale(sum, 0.5)
}

pub fn process(tape: &mut Tape, a: Tensor, config: &ProcessorConfig) -> Result<Tensor> {
    match config.kind {
        ProcessorKind::None => Ok(a),
        ProcessorKind::Symmetrize => symmetrize(tape, a),
        ProcessorKind::Activation => config.activation.apply(tape, a),
        ProcessorKind::ActivationSymmetrize => {
            let s = config.activation.apply(tape, a)?;
            symmetrize(tape, s)
        }
    }
}
