use rand::seq::index::sample;
use rand::Rng;

use super::config::{SparsifierConfig, SparsifierKind};
use crate::error::{GslError, Result};
use crate::graph::ranked_neighbors;
use crate::tensor::{Matrix, Tape, Tensor};

/// 0/1 mask of the entries a rank-based sparsifier keeps, computed from the
/// score values. The diagonal is never kept.
///
/// `random_dknn` samples when `training` and falls back to the strided
/// `dknn` pattern otherwise.
pub fn rank_mask(scores: &Matrix, config: &SparsifierConfig, training: bool, rng: &mut impl Rng) -> Result<Matrix> {
    let n = scores.rows();
    config.validate(n)?;
    let k = config.k;
    let d = config.stride();
    let mut mask = Matrix::zeros(n, n);
    for i in 0..n {
        let ranked = ranked_neighbors(scores.row(i), i);
        let row = mask.row_mut(i);
        if config.kind == SparsifierKind::RandomDknn && training {
            for r in sample(rng, k * d, k).into_iter() {
                row[ranked[r]] = 1.0;
            }
        } else {
            for r in 0..k {
                row[ranked[r * d]] = 1.0;
            }
        }
    }
    Ok(mask)
}

/// 0/1 mask of off-diagonal entries strictly above `epsilon`.
pub fn threshold_mask(values: &Matrix, epsilon: f64, max_edges: usize) -> Result<Matrix> {
    let n = values.rows();
    let mask = Matrix::from_fn(n, values.cols(), |r, c| if r != c && values[(r, c)] > epsilon { 1.0 } else { 0.0 });
    let kept = mask.count_nonzero();
    if kept > max_edges {
        return Err(GslError::Resource(format!(
            "threshold sparsifier kept {kept} edges, above the budget of {max_edges}"
        )));
    }
    Ok(mask)
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

/// Concrete relaxation `sigmoid((logit(sigmoid(s)) + logit(u)) / t)`, with
/// `logit(sigmoid(s))` folded to `s`. `u` is uniform per entry when training
/// and 0.5 otherwise.
pub fn relaxed_bernoulli(tape: &mut Tape, scores: Tensor, temperature: f64, training: bool, rng: &mut impl Rng) -> Result<Tensor> {
    let (n, m) = scores.shape();
    let z = if training {
        let noise = Matrix::from_fn(n, m, |_, _| logit(rng.gen::<f64>().clamp(1e-10, 1.0 - 1e-10)));
        let noise = tape.constant(noise);
        tape.add(scores, noise)?
    } else {
        scores
    };
    let z = tape.scale(z, 1.0 / temperature)?;
    tape.sigmoid(z)
}

/// Masks `scores` according to `config`. Kept entries carry their input
/// value (the relaxed value for `bernoulli`) and receive gradients; dropped
/// entries are constant zero.
pub fn sparsify(tape: &mut Tape, scores: Tensor, config: &SparsifierConfig, training: bool, rng: &mut impl Rng) -> Result<Tensor> {
    let values = tape.value(scores);
    if values.rows() != values.cols() {
        return Err(GslError::config("sparsifier", format!("scores must be square, got {:?}", values.shape())));
    }
    if !values.is_finite() {
        return Err(GslError::Numeric("edge scores contain non-finite values".into()));
    }
    config.validate(values.rows())?;
    let (source, mask) = match config.kind {
        SparsifierKind::Knn | SparsifierKind::Dknn | SparsifierKind::RandomDknn => {
            let mask = rank_mask(values, config, training, rng)?;
            (scores, mask)
        }
        SparsifierKind::Epsnn => {
            let mask = threshold_mask(values, config.epsilon, config.max_edges)?;
            (scores, mask)
        }
        SparsifierKind::Bernoulli => {
            let relaxed = relaxed_bernoulli(tape, scores, config.temperature, training, rng)?;
            let mask = threshold_mask(tape.value(relaxed), config.epsilon, config.max_edges)?;
            (relaxed, mask)
        }
    };
    let mask = tape.constant(mask);
    tape.hadamard(source, mask)
}
