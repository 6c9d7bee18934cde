use rand::Rng;

use super::config::{Activation, EncoderKind};
use crate::error::Result;
use crate::tensor::{glorot_uniform, Matrix, ParamId, ParamStore, Tape, Tensor};

/// Symmetric GCN normalization of `relu(A) + I`, kept factored so that
/// propagation never forms the normalized matrix.
#[derive(Clone, Copy, Debug)]
pub struct Propagator {
    clamped: Tensor,
    inv_sqrt_degree: Tensor,
}

impl Propagator {
    pub fn gcn(tape: &mut Tape, adjacency: Tensor) -> Result<Self> {
        let n = adjacency.rows();
        let clamped = tape.relu(adjacency)?;
        let eye = tape.constant(Matrix::identity(n));
        let with_loops = tape.add(clamped, eye)?;
        let degree = tape.row_sums(with_loops)?;
        let inv_sqrt_degree = tape.powf(degree, -0.5)?;
        Ok(Self { clamped: with_loops, inv_sqrt_degree })
    }

    /// `D^{-1/2} (relu(A) + I) D^{-1/2} h`.
    pub fn apply(&self, tape: &mut Tape, h: Tensor) -> Result<Tensor> {
        let scaled = tape.scale_rows(h, self.inv_sqrt_degree)?;
        let mixed = tape.matmul(self.clamped, scaled)?;
        tape.scale_rows(mixed, self.inv_sqrt_degree)
    }
}

/// Weights of one encoder layer: a single affine map for GCN and MLP, two for
/// the GIN update MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub kind: EncoderKind,
    pub affine: Vec<(ParamId, ParamId)>,
}

impl EncoderLayer {
    pub fn init(store: &mut ParamStore, kind: EncoderKind, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let count = if kind == EncoderKind::Gin { 2 } else { 1 };
        let mut affine = Vec::with_capacity(count);
        let mut width = fan_in;
        for i in 0..count {
            let w = store.add(format!("{name}.w{i}"), glorot_uniform(width, fan_out, rng));
            let b = store.add(format!("{name}.b{i}"), Matrix::zeros(1, fan_out));
            affine.push((w, b));
            width = fan_out;
        }
        Self { kind, affine }
    }

    pub fn output_width(&self, store: &ParamStore) -> usize {
        store.value(self.affine.last().expect("encoder layer has weights").0).cols()
    }
}

fn affine(tape: &mut Tape, store: &ParamStore, h: Tensor, (w, b): (ParamId, ParamId)) -> Result<Tensor> {
    let wt = tape.param(store, w);
    let bt = tape.param(store, b);
    let z = tape.matmul(h, wt)?;
    tape.add(z, bt)
}

/// Inverted dropout: zeroes each entry with probability `rate`, rescales the rest.
pub fn dropout(tape: &mut Tape, x: Tensor, rate: f64, rng: &mut impl Rng) -> Result<Tensor> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Matrix::from_fn(x.rows(), x.cols(), |_, _| if rng.gen::<f64>() < rate { 0.0 } else { keep });
    let mask = tape.constant(mask);
    tape.hadamard(x, mask)
}

/// One encoder layer. `adjacency` is ignored by the MLP encoder; the final
/// layer skips the output activation.
pub fn encode(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &EncoderLayer,
    x: Tensor,
    propagator: Option<&Propagator>,
    adjacency: Tensor,
    activation: Activation,
    last: bool,
) -> Result<Tensor> {
    let out = match layer.kind {
        EncoderKind::Gcn => {
            let owned;
            let prop = match propagator {
                Some(p) => p,
                None => {
                    owned = Propagator::gcn(tape, adjacency)?;
                    &owned
                }
            };
            let (w, b) = layer.affine[0];
            let wt = tape.param(store, w);
            let bt = tape.param(store, b);
            let z = if wt.cols() < wt.rows() {
                let xw = tape.matmul(x, wt)?;
                prop.apply(tape, xw)?
            } else {
                let ax = prop.apply(tape, x)?;
                tape.matmul(ax, wt)?
            };
            tape.add(z, bt)?
        }
        EncoderKind::Gin => {
            let clamped = tape.relu(adjacency)?;
            let ax = tape.matmul(clamped, x)?;
            let h = tape.add(x, ax)?;
            let z = affine(tape, store, h, layer.affine[0])?;
            let z = activation.apply(tape, z)?;
            affine(tape, store, z, layer.affine[1])?
        }
        EncoderKind::Mlp => affine(tape, store, x, layer.affine[0])?,
    };
    if last {
        Ok(out)
    } else {
        activation.apply(tape, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gcn_layer(store: &mut ParamStore, w: Matrix) -> EncoderLayer {
        let cols = w.cols();
        let wid = store.add("w", w);
        let bid = store.add("b", Matrix::zeros(1, cols));
        EncoderLayer { kind: EncoderKind::Gcn, affine: vec![(wid, bid)] }
    }

    #[test]
    fn gcn_without_edges_is_identity() {
        let mut store = ParamStore::new();
        let layer = gcn_layer(&mut store, Matrix::identity(2));
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, -6.0]]).unwrap();
        let mut tape = Tape::new();
        let xt = tape.constant(x.clone());
        let a = tape.constant(Matrix::zeros(3, 3));
        let out = encode(&mut tape, &store, &layer, xt, None, a, Activation::Identity, false).unwrap();
        assert!(tape.value(out).max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn gcn_two_node_example() {
        let mut store = ParamStore::new();
        let layer = gcn_layer(&mut store, Matrix::identity(1));
        let mut tape = Tape::new();
        let xt = tape.constant(Matrix::from_rows(&[[1.0], [0.0]]).unwrap());
        let a = tape.constant(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        let out = encode(&mut tape, &store, &layer, xt, None, a, Activation::Identity, true).unwrap();
        assert!(tape.value(out).max_abs_diff(&Matrix::from_rows(&[[0.5], [0.5]]).unwrap()) < 1e-15);
    }

    #[test]
    fn negative_weights_are_clamped() {
        let mut store = ParamStore::new();
        let layer = gcn_layer(&mut store, Matrix::identity(1));
        let mut tape = Tape::new();
        let xt = tape.constant(Matrix::from_rows(&[[1.0], [2.0]]).unwrap());
        let a = tape.constant(Matrix::from_rows(&[[0.0, -3.0], [-3.0, 0.0]]).unwrap());
        let out = encode(&mut tape, &store, &layer, xt, None, a, Activation::Identity, true).unwrap();
        assert_eq!(tape.value(out).as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn mlp_ignores_adjacency() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let layer = EncoderLayer::init(&mut store, EncoderKind::Mlp, "enc", 3, 2, &mut rng);
        let x = Matrix::from_fn(4, 3, |r, c| (r + c) as f64 * 0.3);
        let run = |a: Matrix| {
            let mut tape = Tape::new();
            let xt = tape.constant(x.clone());
            let at = tape.constant(a);
            let out = encode(&mut tape, &store, &layer, xt, None, at, Activation::Relu, true).unwrap();
            tape.value(out).clone()
        };
        assert_eq!(run(Matrix::zeros(4, 4)), run(Matrix::filled(4, 4, 0.7)));
    }

    #[test]
    fn gin_sums_neighbors() {
        let mut store = ParamStore::new();
        let w0 = store.add("w0", Matrix::identity(1));
        let b0 = store.add("b0", Matrix::zeros(1, 1));
        let w1 = store.add("w1", Matrix::identity(1));
        let b1 = store.add("b1", Matrix::zeros(1, 1));
        let layer = EncoderLayer { kind: EncoderKind::Gin, affine: vec![(w0, b0), (w1, b1)] };
        let mut tape = Tape::new();
        let xt = tape.constant(Matrix::from_rows(&[[1.0], [2.0], [4.0]]).unwrap());
        let a = tape.constant(Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.5], [0.0, 0.0, 0.0]]).unwrap());
        let out = encode(&mut tape, &store, &layer, xt, None, a, Activation::Identity, true).unwrap();
        assert_eq!(tape.value(out).as_slice(), &[3.0, 5.0, 4.0]);
    }
}
