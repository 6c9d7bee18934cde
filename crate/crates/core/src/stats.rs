//! Structural statistics of learned graphs and their rank correlation with accuracy.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GslError, Result};
use crate::spectral::{jacobi_eigen, largest_eigenvalue, smallest_laplacian_eigenpairs, SimpleGraph, EIGEN_MAX_ITER, EIGEN_TOL};
use crate::tensor::Matrix;

/// Statistics of one graph. Structural fields use the symmetrized
/// binarized graph; the spectral radius uses the weighted `(A + Aᵀ)/2`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub avg_degree: f64,
    pub power_law_alpha: f64,
    pub diameter: usize,
    pub local_clustering: f64,
    pub global_clustering: f64,
    pub spectral_radius: f64,
    pub algebraic_connectivity: f64,
    pub degree_one_count: usize,
    /// Set when the graph has no edges.
    pub degenerate: bool,
}

/// Names of the statistics correlated against accuracy, in CSV column order.
pub const STAT_FIELDS: [&str; 8] = [
    "avg_degree",
    "power_law_alpha",
    "diameter",
    "local_clustering",
    "global_clustering",
    "spectral_radius",
    "algebraic_connectivity",
    "degree_one_count",
];

impl GraphStats {
    pub fn values(&self) -> [f64; 8] {
        [
            self.avg_degree,
            self.power_law_alpha,
            self.diameter as f64,
            self.local_clustering,
            self.global_clustering,
            self.spectral_radius,
            self.algebraic_connectivity,
            self.degree_one_count as f64,
        ]
    }
}

/// `α = 1 + m / Σ ln(dᵢ / (d_min − ½))` over the `m` nodes with `dᵢ ≥ d_min = 1`.
pub fn power_law_alpha(degrees: &[usize]) -> f64 {
    let d_min = 1.0;
    let logs: Vec<f64> = degrees.iter().filter(|&&d| d as f64 >= d_min).map(|&d| (d as f64 / (d_min - 0.5)).ln()).collect();
    if logs.is_empty() {
        return 0.0;
    }
    1.0 + logs.len() as f64 / logs.iter().sum::<f64>()
}

fn bfs_eccentricity(graph: &SimpleGraph, source: usize, dist: &mut [usize]) -> usize {
    dist.iter_mut().for_each(|d| *d = usize::MAX);
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    let mut far = 0;
    while let Some(u) = queue.pop_front() {
        far = far.max(dist[u]);
        for &v in graph.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    far
}

/// Node sets of the connected components, each sorted, in order of their
/// smallest node.
pub fn connected_components(graph: &SimpleGraph) -> Vec<Vec<usize>> {
    let n = graph.num_nodes();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &v in graph.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Largest eccentricity within the largest connected component (the first
/// such component on ties).
pub fn largest_component_diameter(graph: &SimpleGraph) -> usize {
    let comps = connected_components(graph);
    let Some(largest) = comps.iter().fold(None::<&Vec<usize>>, |best, c| match best {
        Some(b) if b.len() >= c.len() => Some(b),
        _ => Some(c),
    }) else {
        return 0;
    };
    let mut dist = vec![0; graph.num_nodes()];
    largest.iter().map(|&s| bfs_eccentricity(graph, s, &mut dist)).max().unwrap_or(0)
}

/// Triangles through each node.
pub fn triangles_per_node(graph: &SimpleGraph) -> Vec<usize> {
    let n = graph.num_nodes();
    let mut marks = vec![false; n];
    (0..n)
        .map(|i| {
            for &j in graph.neighbors(i) {
                marks[j] = true;
            }
            let mut t = 0;
            for &j in graph.neighbors(i) {
                t += graph.neighbors(j).iter().filter(|&&k| k > j && marks[k]).count();
            }
            for &j in graph.neighbors(i) {
                marks[j] = false;
            }
            t
        })
        .collect()
}

fn dense_spectrum(m: &Matrix) -> Vec<f64> {
    let (mut values, _) = jacobi_eigen(m);
    values.sort_by(f64::total_cmp);
    values
}

pub fn compute_stats(adjacency: &Matrix) -> Result<GraphStats> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(GslError::config("adjacency", format!("must be square, got {:?}", adjacency.shape())));
    }
    if !adjacency.is_finite() {
        return Err(GslError::Numeric("adjacency contains non-finite weights".into()));
    }
    let graph = SimpleGraph::from_adjacency(adjacency);
    let edges = graph.num_edges();
    if edges == 0 {
        return Ok(GraphStats { num_nodes: n, degenerate: true, ..Default::default() });
    }
    let degrees = graph.degrees();
    let triangles = triangles_per_node(&graph);
    let local: f64 = degrees
        .iter()
        .zip(&triangles)
        .map(|(&d, &t)| if d < 2 { 0.0 } else { t as f64 / (d * (d - 1) / 2) as f64 })
        .sum::<f64>()
        / n as f64;
    let triads: usize = degrees.iter().map(|&d| d * d.saturating_sub(1) / 2).sum();
    let closed: usize = triangles.iter().sum();
    let global = if triads == 0 { 0.0 } else { closed as f64 / triads as f64 };

    let weighted = Matrix::from_fn(n, n, |r, c| 0.5 * (adjacency[(r, c)] + adjacency[(c, r)]));
    let spectral_radius = match largest_eigenvalue(&weighted, EIGEN_TOL, EIGEN_MAX_ITER) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("power iteration for the spectral radius failed ({e}); using a dense solver");
            *dense_spectrum(&weighted).last().expect("nonempty")
        }
    };
    let algebraic_connectivity = if n < 2 {
        0.0
    } else {
        match smallest_laplacian_eigenpairs(&graph, 2, EIGEN_TOL, EIGEN_MAX_ITER) {
            Ok(pairs) => pairs[1].value.max(0.0),
            Err(e) => {
                log::warn!("power iteration for algebraic connectivity failed ({e}); using a dense solver");
                dense_spectrum(&graph.normalized_laplacian())[1].max(0.0)
            }
        }
    };
    Ok(GraphStats {
        num_nodes: n,
        num_edges: edges,
        avg_degree: 2.0 * edges as f64 / n as f64,
        power_law_alpha: power_law_alpha(&degrees),
        diameter: largest_component_diameter(&graph),
        local_clustering: local,
        global_clustering: global,
        spectral_radius,
        algebraic_connectivity,
        degree_one_count: degrees.iter().filter(|&&d| d == 1).count(),
        degenerate: false,
    })
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ with average ranks. Returns `(ρ, degenerate)`; a constant
/// input gives `(0, true)`.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<(f64, bool)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(GslError::config("spearman", format!("need two equal-length inputs of length >= 2, got {} and {}", xs.len(), ys.len())));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0), false))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub stat: String,
    pub rho: f64,
    pub degenerate: bool,
    pub samples: usize,
}

/// One ρ per entry of [`STAT_FIELDS`] between the statistic and `accuracy`.
pub fn correlate(stats: &[GraphStats], accuracy: &[f64]) -> Result<Vec<Correlation>> {
    if stats.len() != accuracy.len() {
        return Err(GslError::config("correlate", "stats and accuracies differ in length"));
    }
    STAT_FIELDS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let column: Vec<f64> = stats.iter().map(|s| s.values()[i]).collect();
            let (rho, degenerate) = spearman(&column, accuracy)?;
            Ok(Correlation { stat: name.to_string(), rho, degenerate, samples: stats.len() })
        })
        .collect()
}

pub const STATS_CSV_HEADER: &str = "num_nodes,num_edges,avg_degree,power_law_alpha,diameter,local_clustering,global_clustering,spectral_radius,algebraic_connectivity,degree_one_count,degenerate";

pub fn stats_csv_row(s: &GraphStats) -> String {
    format!(
        "{},{},{:?},{:?},{},{:?},{:?},{:?},{:?},{},{}",
        s.num_nodes,
        s.num_edges,
        s.avg_degree,
        s.power_law_alpha,
        s.diameter,
        s.local_clustering,
        s.global_clustering,
        s.spectral_radius,
        s.algebraic_connectivity,
        s.degree_one_count,
        s.degenerate
    )
}

pub fn write_stats_csv(path: &Path, rows: &[GraphStats]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{STATS_CSV_HEADER}")?;
    for s in rows {
        writeln!(f, "{}", stats_csv_row(s))?;
    }
    f.flush()?;
    Ok(())
}
