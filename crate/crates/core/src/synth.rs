//! Planted-partition multilayer benchmark generator with power-law degrees
//! and community sizes, in the spirit of multilayer LFR.
//!
//! Nodes keep one ground-truth community and one degree target across all
//! layers. Each layer is wired independently: every node splits its degree
//! into intra- and inter-community stubs according to the mixing parameter
//! and stubs are paired by configuration-model matching, rejecting
//! self-loops, duplicates and (for inter stubs) same-community pairs.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{LayerTopology, MultilayerGraph};
use crate::rng::{derive_seed, rng_from, stochastic_round, DetRng};
use crate::{Error, Result};

/// Mean community size targeted by [`CommunityCount::Auto`]: three
/// communities at 500 nodes.
pub const AUTO_MEAN_COMMUNITY_SIZE: f64 = 160.0;
/// Ratio between the largest and smallest admissible community size.
const COMMUNITY_SIZE_SPREAD: f64 = 2.0;
pub const MAX_REWIRING_ROUNDS: usize = 100;
/// Unmatched stubs tolerated after matching, as a fraction of all stubs.
const UNMATCHED_TOLERANCE: f64 = 0.01;
const REWIRING_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CommunityCount {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeneratorConfig {
    pub num_nodes: usize,
    pub num_layers: usize,
    pub mu: f64,
    pub avg_degree: usize,
    pub max_degree: usize,
    pub degree_exponent: f64,
    pub community_exponent: f64,
    pub num_communities: CommunityCount,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_nodes: 500,
            num_layers: 4,
            mu: 0.2,
            avg_degree: 16,
            max_degree: 32,
            degree_exponent: 2.0,
            community_exponent: 1.0,
            num_communities: CommunityCount::Auto,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.mu) {
            return fail(format!("mu must lie in [0, 1], got {}", self.mu));
        }
        if self.num_layers == 0 {
            return fail("num_layers must be positive".into());
        }
        if self.avg_degree == 0 || self.avg_degree > self.max_degree || self.max_degree >= self.num_nodes {
            return fail(format!(
                "need 0 < avg_degree <= max_degree < num_nodes, got {} / {} / {}",
                self.avg_degree, self.max_degree, self.num_nodes
            ));
        }
        if !(self.degree_exponent > 0.0 && self.community_exponent > 0.0) {
            return fail("power-law exponents must be positive".into());
        }
        if let CommunityCount::Fixed(k) = self.num_communities {
            if k == 0 || 2 * k > self.num_nodes {
                return fail(format!("num_communities {k} incompatible with {} nodes", self.num_nodes));
            }
        }
        Ok(())
    }

    pub fn resolved_communities(&self) -> usize {
        match self.num_communities {
            CommunityCount::Fixed(k) => k,
            CommunityCount::Auto => {
                let k = libm::round(self.num_nodes as f64 / AUTO_MEAN_COMMUNITY_SIZE) as usize;
                k.clamp(2, (self.num_nodes / 2).max(2))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
    pub num_communities: usize,
}

/// Sample from `p(x) ∝ x^(-exponent)` on `[lo, hi]` by inverse CDF.
fn truncated_power_law<R: Rng + ?Sized>(rng: &mut R, exponent: f64, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    if libm::fabs(exponent - 1.0) < 1e-12 {
        lo * libm::pow(hi / lo, u)
    } else {
        let a = 1.0 - exponent;
        let lo_a = libm::pow(lo, a);
        let hi_a = libm::pow(hi, a);
        libm::pow(lo_a + u * (hi_a - lo_a), 1.0 / a)
    }
}

fn power_law_mean(exponent: f64, lo: f64, hi: f64) -> f64 {
    // closed forms of E[x] for the continuous truncated power law
    let norm = |p: f64| -> f64 {
        if libm::fabs(p) < 1e-12 {
            libm::log(hi / lo)
        } else {
            (libm::pow(hi, p) - libm::pow(lo, p)) / p
        }
    };
    norm(2.0 - exponent) / norm(1.0 - exponent)
}

/// Lower cutoff such that the truncated power law on `[lo, hi]` has the given mean.
fn lower_cutoff_for_mean(exponent: f64, mean: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (1e-6_f64.max(hi * 1e-6), hi);
    if mean >= hi {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if power_law_mean(exponent, mid, hi) < mean {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Integer sizes summing to `total`, proportional to `weights` (largest remainder).
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| libm::floor(*x) as usize).collect();
    let mut rest = total - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - libm::floor(exact[a]);
        let fb = exact[b] - libm::floor(exact[b]);
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    sizes
}

fn draw_ground_truth(config: &GeneratorConfig, rng: &mut DetRng) -> GroundTruth {
    let k = config.resolved_communities();
    let weights: Vec<f64> = (0..k)
        .map(|_| truncated_power_law(rng, config.community_exponent, 1.0, COMMUNITY_SIZE_SPREAD))
        .collect();
    let sizes = apportion(&weights, config.num_nodes);
    let mut labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| core::iter::repeat_n(c, s))
        .collect();
    labels.shuffle(rng);
    GroundTruth {
        labels,
        num_communities: k,
    }
}

fn draw_degrees(config: &GeneratorConfig, rng: &mut DetRng) -> Vec<usize> {
    let hi = config.max_degree as f64;
    let lo = lower_cutoff_for_mean(config.degree_exponent, config.avg_degree as f64, hi);
    (0..config.num_nodes)
        .map(|_| {
            let x = truncated_power_law(rng, config.degree_exponent, lo, hi);
            stochastic_round(rng, x).clamp(1, config.max_degree)
        })
        .collect()
}

/// Pairs stubs at random. A rejected pair `(u, v)` is rewired through an
/// edge `(x, y)` already placed from this pool, replacing it with `(u, x)`
/// and `(v, y)`, which preserves every degree. Gives up after
/// [`MAX_REWIRING_ROUNDS`] passes and returns the number left unmatched.
fn match_stubs(
    mut pool: Vec<usize>,
    rng: &mut DetRng,
    edges: &mut BTreeSet<(usize, usize)>,
    admissible: impl Fn(usize, usize) -> bool,
) -> usize {
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut placed: Vec<(usize, usize)> = Vec::new();
    for _ in 0..MAX_REWIRING_ROUNDS {
        if pool.len() < 2 {
            break;
        }
        pool.shuffle(rng);
        let mut rejected = Vec::new();
        let mut it = pool.chunks_exact(2);
        for pair in &mut it {
            let (u, v) = (pair[0], pair[1]);
            let fits = |a: usize, b: usize, edges: &BTreeSet<(usize, usize)>| {
                a != b && admissible(a.min(b), a.max(b)) && !edges.contains(&key(a, b))
            };
            if fits(u, v, edges) {
                edges.insert(key(u, v));
                placed.push(key(u, v));
                continue;
            }
            let mut rewired = false;
            for _ in 0..REWIRING_ATTEMPTS.min(placed.len()) {
                let idx = rng.random_range(0..placed.len());
                let (x, y) = if rng.random_bool(0.5) {
                    placed[idx]
                } else {
                    (placed[idx].1, placed[idx].0)
                };
                if key(u, x) == key(v, y) || !fits(u, x, edges) || !fits(v, y, edges) {
                    continue;
                }
                edges.remove(&key(x, y));
                placed.swap_remove(idx);
                edges.insert(key(u, x));
                edges.insert(key(v, y));
                placed.push(key(u, x));
                placed.push(key(v, y));
                rewired = true;
                break;
            }
            if !rewired {
                rejected.extend_from_slice(pair);
            }
        }
        rejected.extend_from_slice(it.remainder());
        pool = rejected;
    }
    pool.len()
}

/// Inter-community stubs are matchable only when no community owns more
/// than half of them. Moves the excess of the dominant community to
/// intra-community stubs of randomly chosen members.
fn balance_external_stubs(
    truth: &GroundTruth,
    community_size: &[usize],
    intra: &mut [usize],
    inter: &mut [usize],
    rng: &mut DetRng,
) {
    let mut external = vec![0usize; truth.num_communities];
    for (v, &e) in inter.iter().enumerate() {
        external[truth.labels[v]] += e;
    }
    let total: usize = external.iter().sum();
    let (top, &top_stubs) = match external.iter().enumerate().max_by_key(|&(_, &e)| e) {
        Some(best) => best,
        None => return,
    };
    let mut excess = (2 * top_stubs).saturating_sub(total);
    let mut movable: Vec<usize> = (0..inter.len())
        .filter(|&v| truth.labels[v] == top && inter[v] > 0 && intra[v] + 1 < community_size[top])
        .collect();
    while excess > 0 && !movable.is_empty() {
        let i = rng.random_range(0..movable.len());
        let v = movable[i];
        inter[v] -= 1;
        intra[v] += 1;
        excess -= 1;
        if inter[v] == 0 || intra[v] + 1 >= community_size[top] {
            movable.swap_remove(i);
        }
    }
}

fn wire_layer(
    config: &GeneratorConfig,
    truth: &GroundTruth,
    degrees: &[usize],
    rng: &mut DetRng,
) -> Result<LayerTopology> {
    let n = config.num_nodes;
    let mut community_size = vec![0usize; truth.num_communities];
    for &c in &truth.labels {
        community_size[c] += 1;
    }
    let mut intra = vec![0usize; n];
    let mut inter = vec![0usize; n];
    for (v, &deg) in degrees.iter().enumerate() {
        let c = truth.labels[v];
        intra[v] = stochastic_round(rng, (1.0 - config.mu) * deg as f64)
            .min(deg)
            .min(community_size[c] - 1);
        inter[v] = (deg - intra[v]).min(n - community_size[c]);
    }
    balance_external_stubs(truth, &community_size, &mut intra, &mut inter, rng);

    let mut intra_pools: Vec<Vec<usize>> = vec![Vec::new(); truth.num_communities];
    let mut inter_pool = Vec::new();
    for v in 0..n {
        intra_pools[truth.labels[v]].extend(core::iter::repeat_n(v, intra[v]));
        inter_pool.extend(core::iter::repeat_n(v, inter[v]));
    }
    let total_stubs: usize = intra_pools.iter().map(Vec::len).sum::<usize>() + inter_pool.len();

    let mut edges = BTreeSet::new();
    let mut unmatched = 0;
    for pool in intra_pools {
        unmatched += match_stubs(pool, rng, &mut edges, |_, _| true);
    }
    let labels = &truth.labels;
    unmatched += match_stubs(inter_pool, rng, &mut edges, |u, v| labels[u] != labels[v]);

    // a single odd stub per pool is expected and dropped
    let allowed = (UNMATCHED_TOLERANCE * total_stubs as f64) as usize + truth.num_communities + 1;
    if unmatched > allowed {
        return Err(Error::InfeasibleDegrees {
            unmatched,
            rounds: MAX_REWIRING_ROUNDS,
        });
    }
    Ok(LayerTopology::from_edges(n, edges)?.0)
}

/// Generates a multilayer benchmark graph with its planted partition.
/// Identical configurations produce identical output.
pub fn generate(config: &GeneratorConfig) -> Result<(MultilayerGraph, GroundTruth)> {
    config.validate()?;
    let mut structure_rng = rng_from(derive_seed(config.seed, &[0]));
    let truth = draw_ground_truth(config, &mut structure_rng);
    let degrees = draw_degrees(config, &mut structure_rng);
    let layers = (0..config.num_layers)
        .map(|s| {
            let mut layer_rng = rng_from(derive_seed(config.seed, &[1, s as u64]));
            wire_layer(config, &truth, &degrees, &mut layer_rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((MultilayerGraph::new(config.num_nodes, layers)?, truth))
}

/// Per-layer fraction of edges whose endpoints carry different labels.
pub fn mixing_fraction(graph: &MultilayerGraph, labels: &[usize]) -> Result<Vec<f64>> {
    if labels.len() != graph.num_nodes() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: graph.num_nodes(),
        });
    }
    Ok(graph
        .layers()
        .iter()
        .map(|layer| {
            let m = layer.edge_count();
            if m == 0 {
                return 0.0;
            }
            let crossing = layer.edges().iter().filter(|&&(u, v)| labels[u] != labels[v]).count();
            crossing as f64 / m as f64
        })
        .collect())
}
