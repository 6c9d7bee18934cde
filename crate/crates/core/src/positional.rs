//! Positional encodings appended to the input features: Weisfeiler-Lehman
//! roles (embedded sinusoidally) or bottom Laplacian eigenvectors, both
//! computed on a kNN bootstrap graph when no input graph is available.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{GslError, Result};
use crate::graph::{knn_graph, KnnMetric};
use crate::spectral::{smallest_laplacian_eigenpairs, SimpleGraph, EIGEN_MAX_ITER, EIGEN_TOL};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalKind {
    #[default]
    None,
    Wl,
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositionalConfig {
    pub kind: PositionalKind,
    pub wl_iterations: usize,
    pub pe_dim: usize,
    pub bootstrap_k: usize,
}

impl Default for PositionalConfig {
    fn default() -> Self {
        Self { kind: PositionalKind::None, wl_iterations: 3, pe_dim: 8, bootstrap_k: 15 }
    }
}

impl PositionalConfig {
    /// Width added to the raw features.
    pub fn extra_width(&self) -> usize {
        match self.kind {
            PositionalKind::None => 0,
            _ => self.pe_dim,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self.kind {
            PositionalKind::None => Ok(()),
            PositionalKind::Wl => {
                if self.wl_iterations == 0 {
                    return Err(GslError::config("positional.wl_iterations", "must be >= 1"));
                }
                if self.pe_dim == 0 || self.pe_dim % 2 != 0 {
                    return Err(GslError::config("positional.pe_dim", format!("WL embedding width must be even and positive, got {}", self.pe_dim)));
                }
                check_bootstrap(self.bootstrap_k, n)
            }
            PositionalKind::Spectral => {
                if self.pe_dim == 0 || self.pe_dim > n {
                    return Err(GslError::config("positional.pe_dim", format!("spectral width must be in [1, {n}], got {}", self.pe_dim)));
                }
                check_bootstrap(self.bootstrap_k, n)
            }
        }
    }
}

fn check_bootstrap(k: usize, n: usize) -> Result<()> {
    if k == 0 || n < 2 {
        return Err(GslError::config("positional.bootstrap_k", format!("need k >= 1 and at least 2 nodes, got k = {k}, n = {n}")));
    }
    Ok(())
}

/// Neighbor count of the bootstrap kNN graph on `n` nodes: `k` capped at `n − 1`.
pub fn bootstrap_k(k: usize, n: usize) -> usize {
    k.min(n.saturating_sub(1)).max(1)
}

/// Weisfeiler-Lehman color refinement on the symmetrized binarized graph.
///
/// All nodes start with color 0; each round a node's new color is the dense id
/// of `(old color, sorted neighbor colors)`, ids handed out in order of first
/// appearance by node index.
pub fn wl_roles(adjacency: &Matrix, iterations: usize) -> Vec<usize> {
    let graph = SimpleGraph::from_adjacency(adjacency);
    let n = graph.num_nodes();
    let mut colors = vec![0usize; n];
    for _ in 0..iterations {
        let mut ids: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut nb: Vec<usize> = graph.neighbors(i).iter().map(|&j| colors[j]).collect();
            nb.sort_unstable();
            let fresh = ids.len();
            next.push(*ids.entry((colors[i], nb)).or_insert(fresh));
        }
        let stable = ids.len() == distinct(&colors);
        colors = next;
        if stable {
            break;
        }
    }
    colors
}

fn distinct(colors: &[usize]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

/// Transformer-style sinusoidal embedding of integer role ids:
/// `(sin(c·ω₀), cos(c·ω₀), sin(c·ω₁), …)` with `ω_j = 10000^(−2j/pe_dim)`.
pub fn wl_embedding(colors: &[usize], pe_dim: usize) -> Result<Matrix> {
    if pe_dim == 0 || pe_dim % 2 != 0 {
        return Err(GslError::config("positional.pe_dim", format!("WL embedding width must be even and positive, got {pe_dim}")));
    }
    let half = pe_dim / 2;
    Ok(Matrix::from_fn(colors.len(), pe_dim, |r, c| {
        let j = c / 2;
        let freq = 10000f64.powf(-2.0 * j as f64 / pe_dim as f64);
        let angle = colors[r] as f64 * freq;
        debug_assert!(j < half);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    }))
}

/// Bottom-`k` eigenvectors (as columns) of the normalized Laplacian of the
/// symmetrized binarized `adjacency`.
pub fn spectral_embedding(adjacency: &Matrix, k: usize) -> Result<Matrix> {
    let graph = SimpleGraph::from_adjacency(adjacency);
    let pairs = smallest_laplacian_eigenpairs(&graph, k, EIGEN_TOL, EIGEN_MAX_ITER)?;
    Ok(Matrix::from_fn(graph.num_nodes(), k, |r, c| pairs[c].vector[r]))
}

/// Input features for the first layer: raw features, optionally with a
/// positional encoding concatenated column-wise. An all-zero `adjacency` is
/// replaced by a binarized cosine kNN graph of the raw features.
pub fn build_input_features(raw: &Matrix, adjacency: &Matrix, config: &PositionalConfig) -> Result<Matrix> {
    if config.kind == PositionalKind::None {
        return Ok(raw.clone());
    }
    config.validate(raw.rows())?;
    let bootstrap;
    let graph = if adjacency.count_nonzero() == 0 {
        bootstrap = knn_graph(raw, bootstrap_k(config.bootstrap_k, raw.rows()), KnnMetric::Cosine, true)?;
        &bootstrap
    } else {
        adjacency
    };
    let encoding = match config.kind {
        PositionalKind::Wl => wl_embedding(&wl_roles(graph, config.wl_iterations), config.pe_dim)?,
        PositionalKind::Spectral => spectral_embedding(graph, config.pe_dim)?,
        PositionalKind::None => unreachable!(),
    };
    raw.hconcat(&encoding)
}
