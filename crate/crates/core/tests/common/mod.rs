//! Dense reference implementations and fixtures shared by the integration
//! tests. Everything here is written for clarity, materializing full
//! matrices where the library works matrix-free.

#![allow(dead_code)]

use ldga_core::graph::{LayerTopology, MultilayerGraph};
use ldga_core::linalg::Matrix;
use ldga_core::model::{forward, FeatureTensor, ModelParameters, SoftAssignments};
use ldga_core::objective::{backward, loss_soft, LossConfig};
use ldga_core::rng::SplitMix64;

pub fn uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub fn random_graph(rng: &mut SplitMix64, n: usize, layers: usize, p: f64) -> MultilayerGraph {
    let lists: Vec<Vec<(usize, usize)>> = (0..layers)
        .map(|_| {
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if uniform(rng) < p {
                        edges.push((u, v));
                    }
                }
            }
            edges
        })
        .collect();
    MultilayerGraph::from_edge_lists(n, &lists).unwrap()
}

/// Two triangles {0,1,2} and {3,4,5} joined by the edge (2,3).
pub fn two_triangles_edges() -> Vec<(usize, usize)> {
    vec![(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)]
}

pub fn two_triangles(layers: usize) -> MultilayerGraph {
    MultilayerGraph::from_edge_lists(6, &vec![two_triangles_edges(); layers]).unwrap()
}

pub fn random_labels(rng: &mut SplitMix64, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.below(k)).collect()
}

pub fn random_stochastic(rng: &mut SplitMix64, n: usize, k: usize) -> Matrix {
    let mut m = Matrix::from_fn(n, k, |_, _| uniform(rng) + 1e-3);
    for i in 0..n {
        let s: f64 = m.row(i).iter().sum();
        m.row_mut(i).iter_mut().for_each(|x| *x /= s);
    }
    m
}

pub fn one_hot(labels: &[usize], k: usize) -> Matrix {
    Matrix::from_fn(labels.len(), k, |i, p| if labels[i] == p { 1.0 } else { 0.0 })
}

pub fn dense_adjacency(layer: &LayerTopology) -> Vec<Vec<f64>> {
    let n = layer.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in layer.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    a
}

/// `B = A - gamma d d^T / 2m`, fully materialized.
pub fn dense_modularity_matrix(layer: &LayerTopology, gamma: f64) -> Vec<Vec<f64>> {
    let a = dense_adjacency(layer);
    let n = a.len();
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = d.iter().sum();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] - gamma * d[i] * d[j] / two_m).collect())
        .collect()
}

/// `-(1/theta) sum_s Tr(C_s^T B_s C_s)` by explicit triple sums.
pub fn dense_modularity_loss(graph: &MultilayerGraph, c: &[Matrix], gamma: f64) -> f64 {
    let theta = graph.total_edges() as f64;
    let mut total = 0.0;
    for (s, layer) in graph.layers().iter().enumerate() {
        if layer.edge_count() == 0 {
            continue;
        }
        let b = dense_modularity_matrix(layer, gamma);
        let cs = &c[s];
        for p in 0..cs.cols() {
            for i in 0..b.len() {
                for j in 0..b.len() {
                    total += cs.get(i, p) * b[i][j] * cs.get(j, p);
                }
            }
        }
    }
    -total / theta
}

/// Newman-Girvan modularity of a hard partition of one layer.
pub fn newman_girvan(layer: &LayerTopology, labels: &[usize]) -> f64 {
    let b = dense_modularity_matrix(layer, 1.0);
    let two_m = 2.0 * layer.edge_count() as f64;
    let mut q = 0.0;
    for i in 0..b.len() {
        for j in 0..b.len() {
            if labels[i] == labels[j] {
                q += b[i][j];
            }
        }
    }
    q / two_m
}

/// Multilayer modularity over the full `(i, s) x (j, r)` supra-index with a
/// consensus partition and all-to-all inter-layer coupling between copies of
/// the same node.
pub fn dense_multilayer_modularity(graph: &MultilayerGraph, labels: &[usize], resolution: f64, coupling: f64) -> f64 {
    let n = graph.num_nodes();
    let l = graph.num_layers();
    let adj: Vec<Vec<Vec<f64>>> = graph.layers().iter().map(dense_adjacency).collect();
    let mut two_omega = 0.0;
    for s in 0..l {
        for i in 0..n {
            for j in 0..n {
                two_omega += adj[s][i][j];
            }
        }
    }
    for _j in 0..n {
        for s in 0..l {
            for r in 0..l {
                if s != r {
                    two_omega += coupling;
                }
            }
        }
    }
    let mut q = 0.0;
    for s in 0..l {
        for r in 0..l {
            let k_s: Vec<f64> = adj[s].iter().map(|row| row.iter().sum()).collect();
            let two_m: f64 = k_s.iter().sum();
            for i in 0..n {
                for j in 0..n {
                    if labels[i] != labels[j] {
                        continue;
                    }
                    let mut term = 0.0;
                    if s == r && two_m > 0.0 {
                        term += adj[s][i][j] - resolution * k_s[i] * k_s[j] / two_m;
                    }
                    if i == j && s != r {
                        term += coupling;
                    }
                    q += term;
                }
            }
        }
    }
    q / two_omega
}

/// Attention over an explicit `N x N` score matrix with non-edges masked to
/// negative infinity; isolated nodes keep only their self score.
pub fn dense_masked_attention(z: &Matrix, layer: &LayerTopology, wq: &Matrix, wk: &Matrix, wv: &Matrix) -> Matrix {
    let n = z.rows();
    let d = wq.cols();
    let q = z.matmul(wq);
    let k = z.matmul(wk);
    let v = z.matmul(wv);
    let a = dense_adjacency(layer);
    let mut out = Matrix::zeros(n, v.cols());
    for i in 0..n {
        let isolated = a[i].iter().all(|&x| x == 0.0);
        let scores: Vec<f64> = (0..n)
            .map(|j| {
                let allowed = if isolated { i == j } else { a[i][j] != 0.0 };
                if allowed {
                    (0..d).map(|t| q.get(i, t) * k.get(j, t)).sum::<f64>() / (d as f64).sqrt()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|&e| (e - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        for j in 0..n {
            let w = weights[j] / total;
            for t in 0..v.cols() {
                out.set(i, t, out.get(i, t) + w * v.get(j, t));
            }
        }
    }
    out
}

pub fn random_features(rng: &mut SplitMix64, layers: usize, n: usize, d: usize) -> FeatureTensor {
    FeatureTensor::new(
        (0..layers)
            .map(|_| Matrix::from_fn(n, d, |_, _| 2.0 * uniform(rng) - 1.0))
            .collect(),
    )
    .unwrap()
}

pub fn random_assignments(rng: &mut SplitMix64, layers: usize, n: usize, k: usize) -> SoftAssignments {
    SoftAssignments::new((0..layers).map(|_| random_stochastic(rng, n, k)).collect()).unwrap()
}

pub fn total_loss(
    graph: &MultilayerGraph,
    features: &FeatureTensor,
    params: &ModelParameters,
    prev: Option<&SoftAssignments>,
    config: &LossConfig,
) -> f64 {
    let assignments = forward(graph, features, params, prev).unwrap();
    loss_soft(&assignments, graph, config).unwrap().total
}

/// Per-tensor worst relative error between analytic and central-difference
/// gradients over up to `per_tensor` sampled coordinates of each tensor.
pub struct GradientReport {
    pub tensors: Vec<(String, usize, f64)>,
}

impl GradientReport {
    pub fn worst(&self) -> f64 {
        self.tensors.iter().map(|t| t.2).fold(0.0, f64::max)
    }

    pub fn coordinates(&self) -> usize {
        self.tensors.iter().map(|t| t.1).sum()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs() / 1e-7
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub fn gradient_check(
    graph: &MultilayerGraph,
    features: &FeatureTensor,
    params: &ModelParameters,
    prev: Option<&SoftAssignments>,
    config: &LossConfig,
    step: f64,
    per_tensor: usize,
    seed: u64,
) -> GradientReport {
    let (_, grads, _) = backward(graph, features, params, prev, config).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().iter().map(|t| (t.name.clone(), t.data.to_vec())).collect();
    let mut rng = SplitMix64::new(seed);
    let mut report = GradientReport { tensors: Vec::new() };
    for (k, (name, g)) in analytic.iter().enumerate() {
        let mut indices: Vec<usize> = (0..g.len()).collect();
        for i in (1..indices.len()).rev() {
            indices.swap(i, rng.below(i + 1));
        }
        indices.truncate(per_tensor);
        let mut worst = 0.0f64;
        for &idx in &indices {
            let mut plus = params.clone();
            plus.tensors_mut()[k].data[idx] += step;
            let mut minus = params.clone();
            minus.tensors_mut()[k].data[idx] -= step;
            let numeric = (total_loss(graph, features, &plus, prev, config) - total_loss(graph, features, &minus, prev, config))
                / (2.0 * step);
            worst = worst.max(relative_error(g[idx], numeric));
        }
        report.tensors.push((name.clone(), indices.len(), worst));
    }
    report
}
