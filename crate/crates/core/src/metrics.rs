//! Partition quality: NMI, ARI and purity against reference labels,
//! multilayer modularity, and a flatten + label propagation baseline.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::MultilayerGraph;
use crate::model::ConsensusPartition;
use crate::rng::rng_from;
use crate::{Error, Result};

pub const MAX_PROPAGATION_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NmiNormalization {
    #[default]
    Geometric,
    Arithmetic,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricConfig {
    pub resolution: f64,
    pub coupling: f64,
    pub nmi_normalization: NmiNormalization,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            resolution: 1.0,
            coupling: 1.0,
            nmi_normalization: NmiNormalization::Geometric,
        }
    }
}

struct Contingency {
    n: f64,
    table: BTreeMap<(usize, usize), usize>,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

fn contingency(pred: &[usize], truth: &[usize]) -> Result<Contingency> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidConfig("cannot score an empty labeling".into()));
    }
    let (p, kp) = compact(pred);
    let (t, kt) = compact(truth);
    let mut table = BTreeMap::new();
    let mut left = vec![0usize; kp];
    let mut right = vec![0usize; kt];
    for (&a, &b) in p.iter().zip(&t) {
        *table.entry((a, b)).or_insert(0) += 1;
        left[a] += 1;
        right[b] += 1;
    }
    Ok(Contingency {
        n: pred.len() as f64,
        table,
        left,
        right,
    })
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum()
}

/// Normalized mutual information (natural log).
///
/// Two single-cluster labelings score 1; if exactly one side has zero
/// entropy the score is 0.
pub fn nmi_with(pred: &[usize], truth: &[usize], normalization: NmiNormalization) -> Result<f64> {
    let c = contingency(pred, truth)?;
    let hp = entropy(&c.left, c.n);
    let ht = entropy(&c.right, c.n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = c
        .table
        .iter()
        .map(|(&(a, b), &count)| {
            let nij = count as f64;
            nij / c.n * libm::log(c.n * nij / (c.left[a] as f64 * c.right[b] as f64))
        })
        .sum();
    let norm = match normalization {
        NmiNormalization::Geometric => libm::sqrt(hp * ht),
        NmiNormalization::Arithmetic => 0.5 * (hp + ht),
        NmiNormalization::Max => hp.max(ht),
    };
    Ok((mi / norm).clamp(0.0, 1.0))
}

pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(pred, truth, NmiNormalization::Geometric)
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index (pair counting with expected-index correction).
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = contingency(pred, truth)?;
    let index: f64 = c.table.values().map(|&v| choose2(v)).sum();
    let sum_left: f64 = c.left.iter().map(|&v| choose2(v)).sum();
    let sum_right: f64 = c.right.iter().map(|&v| choose2(v)).sum();
    let total = choose2(pred.len());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_left * sum_right / total;
    let max_index = 0.5 * (sum_left + sum_right);
    let denom = max_index - expected;
    if denom == 0.0 {
        // both labelings trivial (all singletons or one cluster)
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Fraction of nodes that belong to the majority truth class of their cluster.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = contingency(pred, truth)?;
    let mut best = vec![0usize; c.left.len()];
    for (&(a, _), &count) in &c.table {
        best[a] = best[a].max(count);
    }
    Ok(best.iter().sum::<usize>() as f64 / c.n)
}

/// Multilayer modularity of a consensus labeling (every node keeps its label
/// in every layer), normalized as
///
/// ```text
/// 2 omega = sum_ijs A_ijs + coupling * N * L * (L - 1)
/// Q = [ sum_s sum_ij (A_ijs - gamma d_is d_js / (2 m_s)) delta(g_i, g_j)
///       + coupling * N * L * (L - 1) ] / (2 omega)
/// ```
///
/// The coupling sum runs over ordered layer pairs `r != s`.
pub fn multilayer_modularity(graph: &MultilayerGraph, labels: &[usize], config: &MetricConfig) -> Result<f64> {
    let n = graph.num_nodes();
    if labels.len() != n {
        return Err(Error::LengthMismatch { left: labels.len(), right: n });
    }
    if graph.total_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    let (compacted, k) = compact(labels);
    let l = graph.num_layers() as f64;
    let coupling = config.coupling * n as f64 * l * (l - 1.0);
    let mut total = coupling;
    for layer in graph.layers() {
        let m = layer.edge_count();
        if m == 0 {
            continue;
        }
        let intra = layer
            .edges()
            .iter()
            .filter(|&&(u, v)| compacted[u] == compacted[v])
            .count();
        let mut degree_mass = vec![0.0; k];
        for (i, &c) in compacted.iter().enumerate() {
            degree_mass[c] += layer.degree(i) as f64;
        }
        let null: f64 = degree_mass.iter().map(|x| x * x).sum::<f64>() * config.resolution / (2.0 * m as f64);
        total += 2.0 * intra as f64 - null;
    }
    let two_omega = 2.0 * graph.total_edges() as f64 + coupling;
    Ok(total / two_omega)
}

/// Asynchronous label propagation on the flattened graph with
/// multiplicity-weighted votes. Nodes are visited in a fresh random order
/// each sweep; a node keeps its label when it is among the heaviest,
/// otherwise a heaviest label is picked at random. Stops when a sweep
/// changes nothing or after [`MAX_PROPAGATION_SWEEPS`].
///
/// Labels are compacted to `0..k` in order of first appearance; confidence
/// is the weight share of neighbors agreeing with the final label.
pub fn label_propagation(graph: &MultilayerGraph, seed: u64) -> ConsensusPartition {
    let flat = graph.flatten();
    let n = flat.num_nodes();
    let mut rng = rng_from(seed);
    let mut labels: Vec<usize> = (0..n).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut votes: BTreeMap<usize, u64> = BTreeMap::new();
    let mut leaders = Vec::new();
    for _ in 0..MAX_PROPAGATION_SWEEPS {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &v in &order {
            let nbrs = flat.neighbors(v);
            if nbrs.is_empty() {
                continue;
            }
            votes.clear();
            for &(u, w) in nbrs {
                *votes.entry(labels[u]).or_insert(0) += u64::from(w);
            }
            let best = votes.values().copied().max().unwrap_or(0);
            if votes.get(&labels[v]).copied() == Some(best) {
                continue;
            }
            leaders.clear();
            leaders.extend(votes.iter().filter(|(_, &c)| c == best).map(|(&l, _)| l));
            labels[v] = leaders[rng.random_range(0..leaders.len())];
            changed = true;
        }
        if !changed {
            break;
        }
    }
    let (labels, _) = compact(&labels);
    let confidence = (0..n)
        .map(|v| {
            let nbrs = flat.neighbors(v);
            let total: u64 = nbrs.iter().map(|&(_, w)| u64::from(w)).sum();
            if total == 0 {
                return 1.0;
            }
            let agree: u64 = nbrs
                .iter()
                .filter(|&&(u, _)| labels[u] == labels[v])
                .map(|&(_, w)| u64::from(w))
                .sum();
            agree as f64 / total as f64
        })
        .collect();
    ConsensusPartition { labels, confidence }
}
