//! Differentiable multilayer modularity with a normalized balance penalty,
//! and reverse-mode gradients of that loss through the model.
//!
//! ```text
//! L_Q       = -(1/theta) * sum_s Tr(C^T B_s C),   theta = sum_s m_s
//! L_balance = alpha * kappa / (N^2 (kappa - 1)) * sum_p (sum_i C_ip - N/kappa)^2
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{modularity_product, MultilayerGraph};
use crate::linalg::Matrix;
use crate::model::{backprop, forward_cached, FeatureTensor, ModelParameters, SoftAssignments};
use crate::{Error, Result};

/// Which assignment matrix is paired with each layer's modularity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossMode {
    /// `C^(s)` with `B^(s)`.
    #[default]
    PerLayer,
    /// The layer mean of the `C^(s)` with every `B^(s)`.
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    /// Resolution per layer; a single value applies to all layers.
    pub gamma: Vec<f64>,
    pub mode: LossMode,
    pub kappa: usize,
}

impl LossConfig {
    pub fn new(kappa: usize) -> Self {
        LossConfig {
            alpha: 1.0,
            gamma: vec![1.0],
            mode: LossMode::PerLayer,
            kappa,
        }
    }

    pub fn gamma_for(&self, s: usize) -> f64 {
        if self.gamma.len() == 1 {
            self.gamma[0]
        } else {
            self.gamma[s]
        }
    }

    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.gamma.len() != 1 && self.gamma.len() != num_layers {
            return Err(Error::ShapeMismatch {
                what: "resolution per layer",
                expected: num_layers,
                found: self.gamma.len(),
            });
        }
        if self.gamma.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidConfig("resolution must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub modularity_term: f64,
    pub balance_term: f64,
    pub total: f64,
    pub theta: f64,
}

fn check_assignments(assignments: &SoftAssignments, graph: &MultilayerGraph, config: &LossConfig) -> Result<()> {
    if assignments.num_layers() != graph.num_layers() {
        return Err(Error::ShapeMismatch {
            what: "assignment layers",
            expected: graph.num_layers(),
            found: assignments.num_layers(),
        });
    }
    if assignments.num_nodes() != graph.num_nodes() {
        return Err(Error::ShapeMismatch {
            what: "assignment rows",
            expected: graph.num_nodes(),
            found: assignments.num_nodes(),
        });
    }
    if assignments.kappa() != config.kappa {
        return Err(Error::ShapeMismatch {
            what: "assignment communities",
            expected: config.kappa,
            found: assignments.kappa(),
        });
    }
    config.validate(graph.num_layers())
}

/// `(L_Q, dL_Q/dC^(s))`. Layers without edges contribute nothing.
fn modularity_with_grad(
    assignments: &SoftAssignments,
    graph: &MultilayerGraph,
    config: &LossConfig,
    want_grad: bool,
) -> Result<(f64, Vec<Matrix>)> {
    let theta = graph.total_edges() as f64;
    if theta == 0.0 {
        return Err(Error::EmptyGraph);
    }
    let (n, k) = (graph.num_nodes(), config.kappa);
    let pooled = match config.mode {
        LossMode::Pooled => Some(assignments.pooled()),
        LossMode::PerLayer => None,
    };
    let mut trace_sum = 0.0;
    let mut grads = if want_grad {
        vec![Matrix::zeros(n, k); graph.num_layers()]
    } else {
        Vec::new()
    };
    let mut pooled_grad = Matrix::zeros(n, k);
    for (s, layer) in graph.layers().iter().enumerate() {
        if layer.edge_count() == 0 {
            continue;
        }
        let c = pooled.as_ref().unwrap_or_else(|| assignments.layer(s));
        let bc = modularity_product(layer, config.gamma_for(s), c)?;
        trace_sum += crate::linalg::dot(c.as_slice(), bc.as_slice());
        if want_grad {
            // B is symmetric: d Tr(C^T B C) / dC = 2 B C
            let target = if pooled.is_some() { &mut pooled_grad } else { &mut grads[s] };
            target.add_scaled(-2.0 / theta, &bc);
        }
    }
    if want_grad && pooled.is_some() {
        let share = 1.0 / graph.num_layers() as f64;
        for g in &mut grads {
            g.add_scaled(share, &pooled_grad);
        }
    }
    Ok((-trace_sum / theta, grads))
}

/// `alpha * kappa / (N^2 (kappa-1)) * S(C)` and its gradient, for one matrix.
fn balance_single(c: &Matrix, alpha: f64, grad_scale: f64, grad: Option<&mut Matrix>) -> f64 {
    let n = c.rows() as f64;
    let k = c.cols() as f64;
    let norm = k / (n * n * (k - 1.0));
    let target = n / k;
    let dev: Vec<f64> = c.column_sums().into_iter().map(|s| s - target).collect();
    let spread: f64 = dev.iter().map(|x| x * x).sum();
    if let Some(g) = grad {
        for i in 0..c.rows() {
            for (gi, di) in g.row_mut(i).iter_mut().zip(&dev) {
                *gi += grad_scale * alpha * norm * 2.0 * di;
            }
        }
    }
    alpha * norm * spread
}

fn balance_with_grad(assignments: &SoftAssignments, config: &LossConfig, want_grad: bool) -> Result<(f64, Vec<Matrix>)> {
    if config.kappa < 2 {
        return Err(Error::BalanceUndefined);
    }
    let l = assignments.num_layers();
    let (n, k) = (assignments.num_nodes(), assignments.kappa());
    let mut grads = if want_grad { vec![Matrix::zeros(n, k); l] } else { Vec::new() };
    let value = match config.mode {
        LossMode::PerLayer => {
            let share = 1.0 / l as f64;
            let mut total = 0.0;
            for s in 0..l {
                let g = grads.get_mut(s);
                total += share * balance_single(assignments.layer(s), config.alpha, share, g);
            }
            total
        }
        LossMode::Pooled => {
            let pooled = assignments.pooled();
            let mut g = Matrix::zeros(n, k);
            let v = balance_single(&pooled, config.alpha, 1.0 / l as f64, want_grad.then_some(&mut g));
            for gs in &mut grads {
                gs.add_scaled(1.0, &g);
            }
            v
        }
    };
    Ok((value, grads))
}

/// `L_Q`, evaluated matrix-free.
pub fn modularity_term(assignments: &SoftAssignments, graph: &MultilayerGraph, config: &LossConfig) -> Result<f64> {
    check_assignments(assignments, graph, config)?;
    Ok(modularity_with_grad(assignments, graph, config, false)?.0)
}

/// The alpha-scaled balance penalty, in `[0, alpha]`.
pub fn balance_term(assignments: &SoftAssignments, config: &LossConfig) -> Result<f64> {
    if assignments.kappa() != config.kappa {
        return Err(Error::ShapeMismatch {
            what: "assignment communities",
            expected: config.kappa,
            found: assignments.kappa(),
        });
    }
    Ok(balance_with_grad(assignments, config, false)?.0)
}

pub fn loss_soft(assignments: &SoftAssignments, graph: &MultilayerGraph, config: &LossConfig) -> Result<LossBreakdown> {
    Ok(loss_with_grad(assignments, graph, config, false)?.0)
}

/// Loss and its gradient with respect to every `C^(s)`.
pub fn loss_with_grad(
    assignments: &SoftAssignments,
    graph: &MultilayerGraph,
    config: &LossConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Vec<Matrix>)> {
    check_assignments(assignments, graph, config)?;
    let (lq, mut grads) = modularity_with_grad(assignments, graph, config, want_grad)?;
    let (balance, bgrads) = balance_with_grad(assignments, config, want_grad)?;
    for (g, b) in grads.iter_mut().zip(&bgrads) {
        g.add_scaled(1.0, b);
    }
    let breakdown = LossBreakdown {
        modularity_term: lq,
        balance_term: balance,
        total: lq + balance,
        theta: graph.total_edges() as f64,
    };
    Ok((breakdown, grads))
}

/// Loss of `forward(...)` and its gradient with respect to every parameter.
/// `prev` is treated as a constant.
pub fn backward(
    graph: &MultilayerGraph,
    features: &FeatureTensor,
    params: &ModelParameters,
    prev: Option<&SoftAssignments>,
    config: &LossConfig,
) -> Result<(LossBreakdown, ModelParameters, SoftAssignments)> {
    let cache = forward_cached(graph, features, params, prev)?;
    let (breakdown, d_assign) = loss_with_grad(&cache.assignments, graph, config, true)?;
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let grads = backprop(graph, params, prev, &cache, &d_assign)?;
    Ok((breakdown, grads, cache.assignments))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[usize], kappa: usize) -> Matrix {
        Matrix::from_fn(labels.len(), kappa, |i, p| if labels[i] == p { 1.0 } else { 0.0 })
    }

    fn two_triangles(layers: usize) -> MultilayerGraph {
        let edges = vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)];
        MultilayerGraph::from_edge_lists(6, &vec![edges; layers]).unwrap()
    }

    #[test]
    fn single_cluster_has_zero_modularity() {
        let g = two_triangles(2);
        let c = SoftAssignments::new(vec![one_hot(&[0; 6], 2); 2]).unwrap();
        let cfg = LossConfig::new(2);
        assert_eq!(modularity_term(&c, &g, &cfg).unwrap(), 0.0);
        assert!(modularity_term(&c, &g, &LossConfig { mode: LossMode::Pooled, ..cfg }).unwrap() == 0.0);
    }

    #[test]
    fn gamma_zero_counts_intra_edges() {
        let g = two_triangles(2);
        let c = SoftAssignments::new(vec![one_hot(&[0, 0, 0, 1, 1, 1], 2); 2]).unwrap();
        let cfg = LossConfig { gamma: vec![0.0], ..LossConfig::new(2) };
        let lq = modularity_term(&c, &g, &cfg).unwrap();
        // 6 intra-community edges per layer, each counted twice in the trace
        assert!((lq - (-(2.0 * 6.0 * 2.0) / 14.0)).abs() < 1e-12);
        let negative = LossConfig { gamma: vec![-1.0], ..LossConfig::new(2) };
        assert!(modularity_term(&c, &g, &negative).is_err());
    }

    #[test]
    fn balance_extremes() {
        let cfg = LossConfig { alpha: 0.7, ..LossConfig::new(2) };
        let skewed = SoftAssignments::new(vec![one_hot(&[0; 4], 2)]).unwrap();
        assert_eq!(balance_term(&skewed, &cfg).unwrap(), 0.7);
        let balanced = SoftAssignments::new(vec![one_hot(&[0, 1, 0, 1], 2)]).unwrap();
        assert_eq!(balance_term(&balanced, &cfg).unwrap(), 0.0);
        let uniform = SoftAssignments::new(vec![Matrix::from_fn(5, 3, |_, _| 1.0 / 3.0)]).unwrap();
        assert!(balance_term(&uniform, &LossConfig::new(3)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn balance_undefined_for_one_community() {
        let c = SoftAssignments::new(vec![Matrix::from_fn(3, 1, |_, _| 1.0)]).unwrap();
        assert_eq!(balance_term(&c, &LossConfig::new(1)), Err(Error::BalanceUndefined));
    }

    #[test]
    fn alpha_zero_total_is_modularity() {
        let g = two_triangles(1);
        let c = SoftAssignments::new(vec![one_hot(&[0, 0, 0, 0, 1, 1], 2)]).unwrap();
        let cfg = LossConfig { alpha: 0.0, ..LossConfig::new(2) };
        let b = loss_soft(&c, &g, &cfg).unwrap();
        assert_eq!(b.total, b.modularity_term);
        assert_eq!(b.theta, 7.0);
    }

    #[test]
    fn empty_graph_errors() {
        let g = MultilayerGraph::from_edge_lists(3, &[vec![], vec![]]).unwrap();
        let c = SoftAssignments::new(vec![one_hot(&[0, 1, 0], 2); 2]).unwrap();
        assert_eq!(modularity_term(&c, &g, &LossConfig::new(2)), Err(Error::EmptyGraph));
    }

    #[test]
    fn assignment_gradient_matches_finite_differences() {
        let g = MultilayerGraph::from_edge_lists(4, &[vec![(0, 1), (1, 2), (2, 3)], vec![(0, 2), (1, 3), (0, 3)]])
            .unwrap();
        for mode in [LossMode::PerLayer, LossMode::Pooled] {
            let cfg = LossConfig { alpha: 0.8, gamma: vec![1.0, 0.7], mode, kappa: 3 };
            let base: Vec<Matrix> = (0..2)
                .map(|s| Matrix::from_fn(4, 3, |i, p| 0.1 + 0.05 * ((i * 3 + p + s) % 5) as f64))
                .collect();
            let c = SoftAssignments::new(base.clone()).unwrap();
            let (_, grads) = loss_with_grad(&c, &g, &cfg, true).unwrap();
            let h = 1e-6;
            for s in 0..2 {
                for i in 0..4 {
                    for p in 0..3 {
                        let eval = |delta: f64| {
                            let mut m = base.clone();
                            let old = m[s].get(i, p);
                            m[s].set(i, p, old + delta);
                            loss_soft(&SoftAssignments::new(m).unwrap(), &g, &cfg).unwrap().total
                        };
                        let fd = (eval(h) - eval(-h)) / (2.0 * h);
                        assert!((fd - grads[s].get(i, p)).abs() < 1e-7, "{mode:?} {s} {i} {p}");
                    }
                }
            }
        }
    }
}
