#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ugsl::tensor::{Matrix, ParamId, ParamStore, Tape, Tensor};
use ugsl::Result;

pub mod criteria;

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

/// `Σ R ∘ t` for a fixed random `R`, turning any output into a scalar loss.
pub fn weighted_sum(tape: &mut Tape, t: Tensor, seed: u64) -> Result<Tensor> {
    let (r, c) = t.shape();
    let w = tape.constant(uniform(r, c, -1.0, 1.0, &mut rng(seed ^ 0x5eed)));
    let prod = tape.hadamard(t, w)?;
    tape.sum(prod)
}

/// Worst norm-wise relative error `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖)` over the
/// parameters, with `g_fd` from central differences of step [`FD_STEP`].
pub fn grad_check(store: &mut ParamStore, f: &dyn Fn(&mut Tape, &ParamStore) -> Result<Tensor>) -> f64 {
    let mut tape = Tape::new();
    let loss = f(&mut tape, store).expect("forward");
    let grads = tape.backward(loss).expect("backward");
    let ids: Vec<ParamId> = store.ids().collect();
    let mut worst: f64 = 0.0;
    for id in ids {
        let (r, c) = store.value(id).shape();
        let analytic = grads.param(id).cloned().unwrap_or_else(|| Matrix::zeros(r, c));
        let mut numeric = Matrix::zeros(r, c);
        for e in 0..r * c {
            let orig = store.value(id).as_slice()[e];
            store.value_mut(id).as_mut_slice()[e] = orig + FD_STEP;
            let up = eval(store, f);
            store.value_mut(id).as_mut_slice()[e] = orig - FD_STEP;
            let down = eval(store, f);
            store.value_mut(id).as_mut_slice()[e] = orig;
            numeric.as_mut_slice()[e] = (up - down) / (2.0 * FD_STEP);
        }
        let diff = analytic.zip_map(&numeric, |a, b| a - b).frobenius();
        let scale = analytic.frobenius().max(numeric.frobenius());
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        worst = worst.max(rel);
    }
    worst
}

fn eval(store: &ParamStore, f: &dyn Fn(&mut Tape, &ParamStore) -> Result<Tensor>) -> f64 {
    let mut tape = Tape::new();
    let loss = f(&mut tape, store).expect("forward");
    tape.scalar_value(loss)
}

/// Rank of `j` in row `i` under descending score, lower index first on ties,
/// the diagonal excluded. Counted directly rather than by sorting.
pub fn rank_of(scores: &Matrix, i: usize, j: usize) -> usize {
    let row = scores.row(i);
    (0..row.len()).filter(|&l| l != i && l != j && (row[l] > row[j] || (row[l] == row[j] && l < j))).count()
}

/// Keep mask of strided top-k (`stride = 1` is plain kNN).
pub fn brute_rank_mask(scores: &Matrix, k: usize, stride: usize) -> Matrix {
    let n = scores.rows();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        let r = rank_of(scores, i, j);
        if r % stride == 0 && r / stride < k {
            1.0
        } else {
            0.0
        }
    })
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, sorted ascending.
pub fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Random directed weighted graph: each ordered pair present with
/// probability `p`, weight in `[0.5, 2)`.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i != j && rng.gen_bool(p) { rng.gen_range(0.5..2.0) } else { 0.0 })
}

/// Structural statistics recomputed densely, field for field.
#[derive(Debug)]
pub struct BruteStats {
    pub num_edges: usize,
    pub avg_degree: f64,
    pub power_law_alpha: f64,
    pub diameter: usize,
    pub local_clustering: f64,
    pub global_clustering: f64,
    pub spectral_radius: f64,
    pub algebraic_connectivity: f64,
    pub degree_one_count: usize,
}

pub fn brute_stats(a: &Matrix) -> BruteStats {
    let n = a.rows();
    let adj: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i != j && (a[(i, j)] > 0.0 || a[(j, i)] > 0.0)).collect()).collect();
    let deg: Vec<usize> = adj.iter().map(|r| r.iter().filter(|&&b| b).count()).collect();
    let num_edges = deg.iter().sum::<usize>() / 2;

    const INF: usize = usize::MAX / 4;
    let mut dist = vec![vec![INF; n]; n];
    for i in 0..n {
        dist[i][i] = 0;
        for j in 0..n {
            if adj[i][j] {
                dist[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if dist[i][k] + dist[k][j] < dist[i][j] {
                    dist[i][j] = dist[i][k] + dist[k][j];
                }
            }
        }
    }
    // largest component; the one holding the smallest node wins ties
    let mut best: Vec<usize> = Vec::new();
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&t| dist[s][t] < INF).collect();
        for &t in &comp {
            seen[t] = true;
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    let diameter = best.iter().flat_map(|&u| best.iter().map(move |&v| (u, v))).map(|(u, v)| dist[u][v]).max().unwrap_or(0);

    let mut tri = vec![0usize; n];
    let mut total_tri = 0;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if adj[i][j] && adj[j][k] && adj[i][k] {
                    tri[i] += 1;
                    tri[j] += 1;
                    tri[k] += 1;
                    total_tri += 1;
                }
            }
        }
    }
    let local = (0..n)
        .map(|i| if deg[i] < 2 { 0.0 } else { tri[i] as f64 / (deg[i] * (deg[i] - 1) / 2) as f64 })
        .sum::<f64>()
        / n as f64;
    let triads: usize = deg.iter().map(|&d| if d < 2 { 0 } else { d * (d - 1) / 2 }).sum();
    let global = if triads == 0 { 0.0 } else { 3.0 * total_tri as f64 / triads as f64 };

    let logs: Vec<f64> = deg.iter().filter(|&&d| d >= 1).map(|&d| (d as f64 / 0.5).ln()).collect();
    let alpha = if logs.is_empty() { 0.0 } else { 1.0 + logs.len() as f64 / logs.iter().sum::<f64>() };

    let sym = Matrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)]) / 2.0);
    let spectral_radius = *jacobi_eigenvalues(&sym).last().unwrap();
    let lap = Matrix::from_fn(n, n, |i, j| {
        if deg[i] == 0 || deg[j] == 0 {
            0.0
        } else if i == j {
            1.0
        } else if adj[i][j] {
            -1.0 / ((deg[i] * deg[j]) as f64).sqrt()
        } else {
            0.0
        }
    });
    let lambda2 = if n < 2 { 0.0 } else { jacobi_eigenvalues(&lap)[1].max(0.0) };

    BruteStats {
        num_edges,
        avg_degree: 2.0 * num_edges as f64 / n as f64,
        power_law_alpha: alpha,
        diameter,
        local_clustering: local,
        global_clustering: global,
        spectral_radius,
        algebraic_connectivity: lambda2,
        degree_one_count: deg.iter().filter(|&&d| d == 1).count(),
    }
}

/// Worst absolute difference between [`ugsl::stats::compute_stats`] and the
/// dense oracle, with integer fields counted as a mismatch of 1.
pub fn stats_mismatch(a: &Matrix) -> f64 {
    let s = ugsl::stats::compute_stats(a).expect("stats");
    let b = brute_stats(a);
    if s.degenerate {
        return if b.num_edges == 0 { 0.0 } else { 1.0 };
    }
    let ints = [
        (s.num_edges, b.num_edges),
        (s.diameter, b.diameter),
        (s.degree_one_count, b.degree_one_count),
    ];
    let int_err = ints.iter().filter(|(x, y)| x != y).count() as f64;
    let floats = [
        (s.avg_degree, b.avg_degree),
        (s.power_law_alpha, b.power_law_alpha),
        (s.local_clustering, b.local_clustering),
        (s.global_clustering, b.global_clustering),
        (s.spectral_radius, b.spectral_radius),
        (s.algebraic_connectivity, b.algebraic_connectivity),
    ];
    floats.iter().map(|(x, y)| (x - y).abs()).fold(int_err, f64::max)
}

/// Multinomial logistic regression by full-batch gradient descent on raw
/// features; returns test accuracy.
pub fn logistic_probe(ds: &ugsl::graph::Dataset, epochs: usize, lr: f64) -> f64 {
    let x = &ds.graph.features;
    let (n, d) = x.shape();
    let c = ds.num_classes;
    let mut w = vec![vec![0.0; c]; d + 1];
    let train: Vec<usize> = (0..n).filter(|&i| ds.train_mask[i]).collect();
    let logits = |w: &Vec<Vec<f64>>, i: usize| -> Vec<f64> {
        (0..c).map(|k| w[d][k] + (0..d).map(|f| x[(i, f)] * w[f][k]).sum::<f64>()).collect()
    };
    for _ in 0..epochs {
        let mut g = vec![vec![0.0; c]; d + 1];
        for &i in &train {
            let z = logits(&w, i);
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for k in 0..c {
                let p = e[k] / s - if ds.labels[i] == k { 1.0 } else { 0.0 };
                for f in 0..d {
                    g[f][k] += p * x[(i, f)];
                }
                g[d][k] += p;
            }
        }
        for (wr, gr) in w.iter_mut().zip(&g) {
            for (wv, gv) in wr.iter_mut().zip(gr) {
                *wv -= lr * gv / train.len() as f64;
            }
        }
    }
    let test: Vec<usize> = (0..n).filter(|&i| ds.test_mask[i]).collect();
    let correct = test
        .iter()
        .filter(|&&i| {
            let z = logits(&w, i);
            let arg = (0..c).fold(0, |b, k| if z[k] > z[b] { k } else { b });
            arg == ds.labels[i]
        })
        .count();
    correct as f64 / test.len() as f64
}
