//! Power-iteration eigen-solvers for graph matrices.

use crate::error::{GslError, Result};
use crate::tensor::Matrix;

pub const EIGEN_TOL: f64 = 1e-8;
pub const EIGEN_MAX_ITER: usize = 10_000;

/// Undirected simple graph: `i ~ j` when either `A[i][j] > 0` or `A[j][i] > 0`.
/// Self-loops are dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimpleGraph {
    neighbors: Vec<Vec<usize>>,
}

impl SimpleGraph {
    pub fn from_adjacency(adj: &Matrix) -> Self {
        let n = adj.rows();
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && (adj[(i, j)] > 0.0 || adj[(j, i)] > 0.0)).collect())
            .collect();
        Self { neighbors }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Dense symmetric normalized Laplacian `I − D^{-1/2} A D^{-1/2}`; rows of
    /// isolated nodes are zero.
    pub fn normalized_laplacian(&self) -> Matrix {
        let n = self.num_nodes();
        let inv_sqrt: Vec<f64> = self.degrees().iter().map(|&d| if d > 0 { 1.0 / (d as f64).sqrt() } else { 0.0 }).collect();
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            if self.degree(i) > 0 {
                l[(i, i)] = 1.0;
            }
            for &j in &self.neighbors[i] {
                l[(i, j)] = -inv_sqrt[i] * inv_sqrt[j];
            }
        }
        l
    }

    /// `out = L v` for the normalized Laplacian without materializing it.
    fn laplacian_apply(&self, inv_sqrt: &[f64], v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            if self.neighbors[i].is_empty() {
                *o = 0.0;
                continue;
            }
            let s: f64 = self.neighbors[i].iter().map(|&j| inv_sqrt[j] * v[j]).sum();
            *o = v[i] - inv_sqrt[i] * s;
        }
    }
}

/// One eigenpair with a unit-norm vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Flips sign so the entry of largest magnitude is positive (first one on ties).
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn start_block(n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|b| (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * (b as f64 + 1.3)).sin()).collect())
        .collect()
}

/// Modified Gram-Schmidt in place; columns that collapse are replaced by
/// canonical basis vectors and re-orthogonalized.
fn orthonormalize(block: &mut [Vec<f64>]) {
    let n = block.first().map_or(0, Vec::len);
    let mut fallback = 0usize;
    for c in 0..block.len() {
        loop {
            for _ in 0..2 {
                for prev in 0..c {
                    let (head, tail) = block.split_at_mut(c);
                    let p = dot(&tail[0], &head[prev]);
                    for (x, y) in tail[0].iter_mut().zip(&head[prev]) {
                        *x -= p * y;
                    }
                }
            }
            let nv = norm(&block[c]);
            if nv > 1e-10 {
                block[c].iter_mut().for_each(|x| *x /= nv);
                break;
            }
            let mut e = vec![0.0; n];
            e[fallback % n] = 1.0;
            fallback += 1;
            block[c] = e;
        }
    }
}

/// Cyclic Jacobi eigen-decomposition of a small symmetric matrix. Returns
/// eigenvalues and the matching eigenvectors as columns of the second value.
pub(crate) fn jacobi_eigen(h: &Matrix) -> (Vec<f64>, Matrix) {
    let n = h.rows();
    let mut a = h.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// The `k` smallest eigenpairs of the normalized Laplacian of `graph`.
///
/// Block power iteration on the shifted operator `2I − L` (spectrum in
/// `[0, 2]`, so its dominant subspace is the bottom of the Laplacian
/// spectrum). Each sweep multiplies the block, re-orthonormalizes it and
/// rotates it onto Ritz vectors; a few guard vectors beyond `k` speed up
/// convergence on clustered spectra. Converged leading pairs are locked and
/// the rest of the block is kept orthogonal to them. A pair is accepted once
/// `‖Lv − λv‖ < tol`.
pub fn smallest_laplacian_eigenpairs(graph: &SimpleGraph, k: usize, tol: f64, max_iter: usize) -> Result<Vec<EigenPair>> {
    let n = graph.num_nodes();
    if k == 0 || k > n {
        return Err(GslError::config("k", format!("need 1 <= k <= n, got k = {k} with n = {n}")));
    }
    let inv_sqrt: Vec<f64> = graph.degrees().iter().map(|&d| if d > 0 { 1.0 / (d as f64).sqrt() } else { 0.0 }).collect();
    let p = n.min(k + k.max(8));
    let mut block = start_block(n, p);
    orthonormalize(&mut block);
    let mut locked = 0usize;
    let mut iterations = vec![0usize; k];
    let mut residuals = vec![f64::INFINITY; p];
    let mut lv = vec![0.0; n];
    let shifted = |v: &[f64], out: &mut Vec<f64>, lv: &mut [f64]| {
        graph.laplacian_apply(&inv_sqrt, v, lv);
        out.clear();
        out.extend(v.iter().zip(lv.iter()).map(|(a, b)| 2.0 * a - b));
    };

    for iter in 1..=max_iter {
        // power step on unlocked columns
        let mut w = Vec::new();
        for c in locked..p {
            shifted(&block[c], &mut w, &mut lv);
            block[c].clone_from(&w);
        }
        orthonormalize(&mut block);

        // Rayleigh-Ritz on the unlocked part
        let free = p - locked;
        let images: Vec<Vec<f64>> = (locked..p)
            .map(|c| {
                let mut out = Vec::new();
                shifted(&block[c], &mut out, &mut lv);
                out
            })
            .collect();
        let h = Matrix::from_fn(free, free, |a, b| dot(&block[locked + a], &images[b]));
        let h = Matrix::from_fn(free, free, |a, b| 0.5 * (h[(a, b)] + h[(b, a)]));
        let (vals, vecs) = jacobi_eigen(&h);
        let mut order: Vec<usize> = (0..free).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        let rotated: Vec<Vec<f64>> = order
            .iter()
            .map(|&col| {
                let mut out = vec![0.0; n];
                for r in 0..free {
                    let coef = vecs[(r, col)];
                    for (o, x) in out.iter_mut().zip(&block[locked + r]) {
                        *o += coef * x;
                    }
                }
                out
            })
            .collect();
        for (offset, v) in rotated.into_iter().enumerate() {
            block[locked + offset] = v;
        }

        // residuals, locking converged leading pairs in order
        for c in locked..p {
            graph.laplacian_apply(&inv_sqrt, &block[c], &mut lv);
            let lambda = dot(&block[c], &lv);
            residuals[c] = lv.iter().zip(&block[c]).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        }
        while locked < k && residuals[locked] < tol {
            iterations[locked] = iter;
            locked += 1;
        }
        if locked == k {
            break;
        }
    }
    if locked < k {
        return Err(GslError::NoConvergence { iterations: max_iter, residual: residuals[locked] });
    }
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let mut v = block[c].clone();
        graph.laplacian_apply(&inv_sqrt, &v, &mut lv);
        let value = dot(&v, &lv);
        fix_sign(&mut v);
        out.push(EigenPair { value, vector: v, residual: residuals[c], iterations: iterations[c] });
    }
    Ok(out)
}

/// Largest eigenvalue of the symmetric matrix `m` (nonnegative entries
/// expected), by power iteration on `m + cI` with `c` half the largest
/// absolute row sum. Stops once `‖m v − λ v‖ ≤ tol · max(1, |λ|)`.
pub fn largest_eigenvalue(m: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    let n = m.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let shift = 0.5 * (0..n).map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if shift == 0.0 {
        return Ok(0.0);
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    // a constant start can be orthogonal to the top eigenvector
    for (i, x) in v.iter_mut().enumerate() {
        *x *= 1.0 + 0.01 * ((i * 7919) % 101) as f64 / 101.0;
    }
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut mv = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        for (i, o) in mv.iter_mut().enumerate() {
            *o = dot(m.row(i), &v);
        }
        let lambda = dot(&v, &mv);
        residual = mv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        if residual <= tol * lambda.abs().max(1.0) {
            return Ok(lambda);
        }
        let mut w: Vec<f64> = mv.iter().zip(&v).map(|(a, b)| a + shift * b).collect();
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        w.iter_mut().for_each(|x| *x /= nw);
        v = w;
    }
    Err(GslError::NoConvergence { iterations: max_iter, residual })
}
