//! Multilayer graph storage, flattening and matrix-free modularity products.
//!
//! Every layer is an undirected, unweighted simple graph over the same node
//! set. There are no inter-layer edges.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::{Error, Result};

/// One layer's edges with CSR neighbor lists and cached degrees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerTopology {
    num_nodes: usize,
    /// Undirected edges `(u, v)` with `u < v`, sorted.
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

/// Counts of input rows discarded while building a layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl LayerTopology {
    /// Builds a layer, dropping self-loops and duplicate edges.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<(Self, BuildStats)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut stats = BuildStats::default();
        let mut list = Vec::new();
        for (u, v) in edges {
            for index in [u, v] {
                if index >= num_nodes {
                    return Err(Error::NodeOutOfRange { index, num_nodes });
                }
            }
            if u == v {
                stats.self_loops += 1;
                continue;
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        let before = list.len();
        list.dedup();
        stats.duplicates = before - list.len();
        Ok((Self::from_sorted_unique(num_nodes, list), stats))
    }

    fn from_sorted_unique(num_nodes: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut targets = vec![0usize; 2 * edges.len()];
        // edges are sorted by (u, v), so every neighbor list comes out sorted
        for &(u, v) in &edges {
            targets[fill[u]] = v;
            fill[u] += 1;
        }
        for &(u, v) in &edges {
            targets[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..num_nodes {
            targets[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        LayerTopology {
            num_nodes,
            edges,
            offsets,
            targets,
        }
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self::from_sorted_unique(num_nodes, Vec::new())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|i| self.degree(i)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// `A x`
    pub fn adjacency_matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.num_nodes) {
            *o = self.neighbors(i).iter().map(|&j| x[j]).sum();
        }
    }

    /// Dense adjacency, for tests and small oracles.
    pub fn dense_adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }
}

/// `B x = A x - gamma * d (d . x) / (2 m)` without forming `B`.
pub fn modularity_matvec(layer: &LayerTopology, gamma: f64, x: &[f64]) -> Result<Vec<f64>> {
    let n = layer.num_nodes();
    if x.len() != n {
        return Err(Error::ShapeMismatch {
            what: "modularity_matvec input",
            expected: n,
            found: x.len(),
        });
    }
    let m = layer.edge_count();
    if m == 0 {
        return Err(Error::EmptyLayer);
    }
    let mut out = vec![0.0; n];
    layer.adjacency_matvec(x, &mut out);
    let dx: f64 = (0..n).map(|i| layer.degree(i) as f64 * x[i]).sum();
    let scale = gamma * dx / (2.0 * m as f64);
    for (i, o) in out.iter_mut().enumerate() {
        *o -= scale * layer.degree(i) as f64;
    }
    Ok(out)
}

/// `B C` for an `N x k` matrix `C`, column by column in one pass over the edges.
pub fn modularity_product(layer: &LayerTopology, gamma: f64, c: &Matrix) -> Result<Matrix> {
    let n = layer.num_nodes();
    if c.rows() != n {
        return Err(Error::ShapeMismatch {
            what: "modularity_product input rows",
            expected: n,
            found: c.rows(),
        });
    }
    let m = layer.edge_count();
    if m == 0 {
        return Err(Error::EmptyLayer);
    }
    let k = c.cols();
    let mut out = Matrix::zeros(n, k);
    let mut dtc = vec![0.0; k];
    for i in 0..n {
        let row_out = out.row_mut(i);
        for &j in layer.neighbors(i) {
            for (o, v) in row_out.iter_mut().zip(c.row(j)) {
                *o += v;
            }
        }
        let d = layer.degree(i) as f64;
        for (acc, v) in dtc.iter_mut().zip(c.row(i)) {
            *acc += d * v;
        }
    }
    let two_m = 2.0 * m as f64;
    let scale: Vec<f64> = dtc.iter().map(|s| gamma * s / two_m).collect();
    for i in 0..n {
        let d = layer.degree(i) as f64;
        for (o, s) in out.row_mut(i).iter_mut().zip(&scale) {
            *o -= s * d;
        }
    }
    Ok(out)
}

/// `N` shared nodes and `L >= 1` layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultilayerGraph {
    num_nodes: usize,
    layers: Vec<LayerTopology>,
    node_names: Option<Vec<String>>,
}

impl MultilayerGraph {
    pub fn new(num_nodes: usize, layers: Vec<LayerTopology>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("a multilayer graph needs at least one layer".into()));
        }
        for layer in &layers {
            if layer.num_nodes() != num_nodes {
                return Err(Error::ShapeMismatch {
                    what: "layer node count",
                    expected: num_nodes,
                    found: layer.num_nodes(),
                });
            }
        }
        Ok(MultilayerGraph {
            num_nodes,
            layers,
            node_names: None,
        })
    }

    /// Convenience constructor from per-layer edge lists.
    pub fn from_edge_lists(num_nodes: usize, layers: &[Vec<(usize, usize)>]) -> Result<Self> {
        let built = layers
            .iter()
            .map(|edges| LayerTopology::from_edges(num_nodes, edges.iter().copied()).map(|(l, _)| l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(num_nodes, built)
    }

    pub fn with_node_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_nodes {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: self.num_nodes,
            });
        }
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerTopology] {
        &self.layers
    }

    pub fn layer(&self, s: usize) -> &LayerTopology {
        &self.layers[s]
    }

    /// External identifier of each node, if the graph was loaded from named rows.
    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    pub fn edge_counts(&self) -> Vec<usize> {
        self.layers.iter().map(LayerTopology::edge_count).collect()
    }

    pub fn total_edges(&self) -> usize {
        self.layers.iter().map(LayerTopology::edge_count).sum()
    }

    /// Same graph with layers reordered; `order[k]` is the source layer of layer `k`.
    pub fn permute_layers(&self, order: &[usize]) -> Result<Self> {
        let layers = order
            .iter()
            .map(|&s| {
                self.layers.get(s).cloned().ok_or(Error::ShapeMismatch {
                    what: "layer permutation index",
                    expected: self.layers.len(),
                    found: s,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.num_nodes, layers)
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::LengthMismatch {
                left: perm.len(),
                right: self.num_nodes,
            });
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                LayerTopology::from_edges(self.num_nodes, l.edges().iter().map(|&(u, v)| (perm[u], perm[v])))
                    .map(|(t, _)| t)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.num_nodes, layers)
    }

    /// Sums the layer adjacency matrices into one integer-weighted graph.
    pub fn flatten(&self) -> WeightedGraph {
        let mut weights: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for layer in &self.layers {
            for &e in layer.edges() {
                *weights.entry(e).or_insert(0) += 1;
            }
        }
        WeightedGraph::from_weighted_edges(self.num_nodes, weights.into_iter().map(|((u, v), w)| (u, v, w)).collect())
    }
}

/// Single-layer graph with positive integer edge weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize, u32)>,
    offsets: Vec<usize>,
    targets: Vec<(usize, u32)>,
}

impl WeightedGraph {
    fn from_weighted_edges(num_nodes: usize, edges: Vec<(usize, usize, u32)>) -> Self {
        let mut degree = vec![0usize; num_nodes];
        for &(u, v, _) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut targets = vec![(0usize, 0u32); offsets[num_nodes]];
        for &(u, v, w) in &edges {
            targets[fill[u]] = (v, w);
            fill[u] += 1;
            targets[fill[v]] = (u, w);
            fill[v] += 1;
        }
        WeightedGraph {
            num_nodes,
            edges,
            offsets,
            targets,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// `(u, v, weight)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, u32)] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn weight(&self, u: usize, v: usize) -> u32 {
        let key = (u.min(v), u.max(v));
        self.edges
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|idx| self.edges[idx].2)
            .unwrap_or(0)
    }
}
