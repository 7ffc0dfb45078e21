//! Per-layer node features from truncated random walks and skip-gram with
//! negative sampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{LayerTopology, MultilayerGraph};
use crate::linalg::Matrix;
use crate::model::FeatureTensor;
use crate::rng::{derive_seed, rng_from, Fnv64, SplitMix64};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WalkConfig {
    pub window: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            window: 10,
            walks_per_node: 20,
            walk_length: 80,
            dim: 512,
            negatives: 5,
            epochs: 1,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        if self.window == 0 || self.walks_per_node == 0 || self.walk_length == 0 || self.negatives == 0 {
            return Err(Error::InvalidConfig(
                "window, walks_per_node, walk_length and negatives must be positive".into(),
            ));
        }
        if self.window >= self.walk_length {
            return Err(Error::InvalidConfig(format!(
                "window {} must be smaller than walk_length {}",
                self.window, self.walk_length
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform random walks, `walks_per_node` from every node.
///
/// Each walk draws from its own stream keyed by `(seed, start, walk index)`,
/// so the corpus does not depend on generation order. Passes are emitted in
/// a seeded shuffled node order. Isolated start nodes yield `[v]`.
pub fn random_walks(layer: &LayerTopology, config: &WalkConfig, seed: u64) -> Vec<Vec<u32>> {
    let n = layer.num_nodes();
    let mut order_rng = rng_from(derive_seed(seed, &[u64::MAX]));
    let mut walks = Vec::with_capacity(n * config.walks_per_node);
    let mut order: Vec<usize> = (0..n).collect();
    for w in 0..config.walks_per_node {
        order.shuffle(&mut order_rng);
        for &start in &order {
            let mut rng = rng_from(derive_seed(seed, &[start as u64, w as u64]));
            let mut walk = Vec::with_capacity(config.walk_length);
            walk.push(start as u32);
            let mut current = start;
            while walk.len() < config.walk_length {
                let nbrs = layer.neighbors(current);
                if nbrs.is_empty() {
                    break;
                }
                current = nbrs[rng.random_range(0..nbrs.len())];
                walk.push(current as u32);
            }
            walks.push(walk);
        }
    }
    walks
}

const UNIGRAM_POWER: f64 = 0.75;
const MAX_EXP: f32 = 6.0;
const MIN_LR_FRACTION: f64 = 1e-4;
const NEGATIVE_TABLE_MIN: usize = 1 << 20;

/// Unigram^0.75 lookup table, as in the original word2vec.
struct NegativeSampler {
    table: Vec<u32>,
}

impl NegativeSampler {
    fn new(counts: &[u64]) -> Self {
        let weights: Vec<f64> = counts.iter().map(|&c| libm::pow(c as f64, UNIGRAM_POWER)).collect();
        let total: f64 = weights.iter().sum();
        let size = NEGATIVE_TABLE_MIN.max(64 * counts.len());
        let mut table = Vec::with_capacity(size);
        let mut acc = 0.0;
        for (node, w) in weights.iter().enumerate() {
            acc += w;
            let upto = (libm::round(acc / total * size as f64) as usize).min(size);
            while table.len() < upto {
                table.push(node as u32);
            }
        }
        NegativeSampler { table }
    }

    #[inline]
    fn sample(&self, rng: &mut SplitMix64) -> usize {
        self.table[rng.below(self.table.len())] as usize
    }
}

const SIGMOID_TABLE_SIZE: usize = 1000;

/// Sigmoid sampled on `[-MAX_EXP, MAX_EXP)`.
struct SigmoidTable(Vec<f32>);

impl SigmoidTable {
    fn new() -> Self {
        SigmoidTable(
            (0..SIGMOID_TABLE_SIZE)
                .map(|i| {
                    let x = (i as f32 / SIGMOID_TABLE_SIZE as f32 * 2.0 - 1.0) * MAX_EXP;
                    1.0 / (1.0 + libm::expf(-x))
                })
                .collect(),
        )
    }

    #[inline]
    fn get(&self, x: f32) -> f32 {
        let idx = ((x + MAX_EXP) * (SIGMOID_TABLE_SIZE as f32 / MAX_EXP / 2.0)) as usize;
        self.0[idx.min(SIGMOID_TABLE_SIZE - 1)]
    }
}

#[inline]
fn axpy32(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dot product with independent lanes so the reduction vectorizes.
#[inline]
fn dot32(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (xa, xb) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] += xa[k] * xb[k];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

/// Skip-gram with negative sampling over a walk corpus; returns the input
/// (node) embedding matrix, `num_nodes x dim`.
///
/// Input vectors start uniform in `(-0.5/d, 0.5/d)` and output vectors at
/// zero. The learning rate decays linearly over all epochs.
pub fn train_skipgram(walks: &[Vec<u32>], num_nodes: usize, config: &WalkConfig, seed: u64) -> Result<Matrix> {
    config.validate()?;
    let d = config.dim;
    let mut rng = rng_from(seed);
    let mut syn0: Vec<f32> = (0..num_nodes * d)
        .map(|_| (rng.random::<f32>() - 0.5) / d as f32)
        .collect();

    let mut counts = vec![0u64; num_nodes];
    let mut corpus_len = 0usize;
    for walk in walks {
        for &v in walk {
            counts[v as usize] += 1;
        }
        corpus_len += walk.len();
    }

    if config.epochs > 0 && corpus_len > 0 {
        let mut syn1 = vec![0.0f32; num_nodes * d];
        let mut grad = vec![0.0f32; d];
        let sampler = NegativeSampler::new(&counts);
        let sigmoid = SigmoidTable::new();
        let mut fast = SplitMix64::new(rng.random());
        let total = (config.epochs * corpus_len) as f64;
        let mut processed = 0usize;
        for _ in 0..config.epochs {
            for walk in walks {
                let len = walk.len();
                for pos in 0..len {
                    let progress = processed as f64 / total;
                    let lr = (config.learning_rate * (1.0 - progress).max(MIN_LR_FRACTION)) as f32;
                    processed += 1;
                    let center = walk[pos] as usize;
                    let reduced = config.window - fast.below(config.window);
                    let lo = pos.saturating_sub(reduced);
                    let hi = (pos + reduced).min(len - 1);
                    for ctx_pos in lo..=hi {
                        if ctx_pos == pos {
                            continue;
                        }
                        let ctx = walk[ctx_pos] as usize;
                        grad.iter_mut().for_each(|g| *g = 0.0);
                        for k in 0..=config.negatives {
                            let (target, label) = if k == 0 {
                                (center, 1.0f32)
                            } else {
                                let t = sampler.sample(&mut fast);
                                if t == center {
                                    continue;
                                }
                                (t, 0.0f32)
                            };
                            let input = &syn0[ctx * d..(ctx + 1) * d];
                            let output = &mut syn1[target * d..(target + 1) * d];
                            let f = dot32(input, output);
                            let g = if f > MAX_EXP {
                                label - 1.0
                            } else if f < -MAX_EXP {
                                label
                            } else {
                                label - sigmoid.get(f)
                            } * lr;
                            axpy32(g, output, &mut grad);
                            axpy32(g, input, output);
                        }
                        axpy32(1.0, &grad, &mut syn0[ctx * d..(ctx + 1) * d]);
                    }
                }
            }
        }
    }

    if !syn0.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("skip-gram embeddings"));
    }
    Matrix::from_vec(num_nodes, d, syn0.into_iter().map(f64::from).collect())
}

/// Seed for one layer, derived from the master seed and the layer's edges,
/// so identical layers embed identically wherever they sit.
pub fn layer_seed(layer: &LayerTopology, seed: u64) -> u64 {
    let mut h = Fnv64::default();
    h.write_u64(layer.num_nodes() as u64);
    for &(u, v) in layer.edges() {
        h.write_u64(u as u64);
        h.write_u64(v as u64);
    }
    derive_seed(seed, &[h.finish()])
}

/// Walks plus skip-gram for a single layer.
pub fn embed_layer(layer: &LayerTopology, config: &WalkConfig) -> Result<Matrix> {
    config.validate()?;
    let seed = layer_seed(layer, config.seed);
    let walks = random_walks(layer, config, derive_seed(seed, &[1]));
    train_skipgram(&walks, layer.num_nodes(), config, derive_seed(seed, &[2]))
}

/// Embeds every layer independently and stacks the results.
pub fn init_features(graph: &MultilayerGraph, config: &WalkConfig) -> Result<FeatureTensor> {
    let slices = graph
        .layers()
        .iter()
        .map(|layer| embed_layer(layer, config))
        .collect::<Result<Vec<_>>>()?;
    FeatureTensor::new(slices)
}
