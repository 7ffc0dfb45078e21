//! Forward model: community-latent enrichment, one sparse attention head per
//! layer, head aggregation with a residual, a shared soft-assignment scorer,
//! and global allocation of a consensus partition.
//!
//! All matrices use the row-vector convention: node features are rows and
//! projections multiply on the right.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::graph::{LayerTopology, MultilayerGraph};
use crate::linalg::{axpy, dot, gemm, softmax_in_place, Matrix, Trans};
use crate::rng::{rng_from, standard_normal};
use crate::{Error, Result};

pub const PROTOTYPE_INIT_STD: f64 = 0.02;
pub const PRELU_INIT_SLOPE: f64 = 0.25;

/// `L` stacked `N x d` feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    slices: Vec<Matrix>,
}

impl FeatureTensor {
    pub fn new(slices: Vec<Matrix>) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(Error::InvalidConfig("feature tensor needs at least one layer".into()));
        };
        let shape = first.shape();
        for s in &slices {
            if s.shape() != shape {
                return Err(Error::ShapeMismatch {
                    what: "feature slice",
                    expected: shape.0 * shape.1,
                    found: s.rows() * s.cols(),
                });
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("feature tensor"));
            }
        }
        Ok(FeatureTensor { slices })
    }

    pub fn num_layers(&self) -> usize {
        self.slices.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.slices[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.slices[0].cols()
    }

    pub fn slice(&self, s: usize) -> &Matrix {
        &self.slices[s]
    }

    pub fn slices(&self) -> &[Matrix] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<Matrix> {
        self.slices
    }
}

/// Row-stochastic `N x kappa` assignment matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignments {
    layers: Vec<Matrix>,
}

impl SoftAssignments {
    pub fn new(layers: Vec<Matrix>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidConfig("assignments need at least one layer".into()));
        };
        let shape = first.shape();
        if let Some(bad) = layers.iter().find(|m| m.shape() != shape) {
            return Err(Error::ShapeMismatch {
                what: "assignment layer",
                expected: shape.0 * shape.1,
                found: bad.rows() * bad.cols(),
            });
        }
        Ok(SoftAssignments { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn kappa(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn layer(&self, s: usize) -> &Matrix {
        &self.layers[s]
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    /// Mean of the per-layer matrices.
    pub fn pooled(&self) -> Matrix {
        let mut acc = self.layers[0].clone();
        for m in &self.layers[1..] {
            acc.add_scaled(1.0, m);
        }
        let inv = 1.0 / self.layers.len() as f64;
        acc.as_mut_slice().iter_mut().for_each(|x| *x *= inv);
        acc
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|m| (0..m.rows()).map(move |i| libm::fabs(m.row(i).iter().sum::<f64>() - 1.0)))
            .fold(0.0, f64::max)
    }
}

/// One label per node plus the probability that won it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusPartition {
    pub labels: Vec<usize>,
    pub confidence: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub num_layers: usize,
    pub dim: usize,
    pub ffn_dim: usize,
    pub kappa: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.dim == 0 || self.ffn_dim == 0 || self.kappa == 0 {
            return Err(Error::InvalidConfig(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub attn_q: Matrix,
    pub attn_k: Matrix,
    pub attn_v: Matrix,
    /// `kappa x d` community prototypes.
    pub prototypes: Matrix,
    /// Fusion coefficient for the prototype term.
    pub fusion: f64,
}

/// Every learnable tensor of the model. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams>,
    /// `(L * d) x d`
    pub out_proj: Matrix,
    /// `d x d_ffn`
    pub scorer_w1: Matrix,
    pub scorer_b1: Vec<f64>,
    /// `d_ffn x kappa`
    pub scorer_w2: Matrix,
    pub scorer_b2: Vec<f64>,
    pub prelu_slope: f64,
}

/// Borrowed view of one named parameter tensor.
pub struct TensorView<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

pub struct TensorViewMut<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a mut [f64],
    /// Whether decoupled weight decay applies.
    pub decay: bool,
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

impl ModelParameters {
    /// Fan-in uniform weights, small normal prototypes, zero fusion.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let ModelConfig {
            num_layers,
            dim: d,
            ffn_dim: f,
            kappa,
        } = config;
        let mut rng = rng_from(seed);
        let layers = (0..num_layers)
            .map(|_| LayerParams {
                attn_q: uniform_matrix(&mut rng, d, d, d),
                attn_k: uniform_matrix(&mut rng, d, d, d),
                attn_v: uniform_matrix(&mut rng, d, d, d),
                prototypes: Matrix::from_fn(kappa, d, |_, _| PROTOTYPE_INIT_STD * standard_normal(&mut rng)),
                fusion: 0.0,
            })
            .collect();
        let out_proj = uniform_matrix(&mut rng, num_layers * d, d, num_layers * d);
        let scorer_w1 = uniform_matrix(&mut rng, d, f, d);
        let scorer_b1 = uniform_matrix(&mut rng, 1, f, d).into_vec();
        let scorer_w2 = uniform_matrix(&mut rng, f, kappa, f);
        let scorer_b2 = uniform_matrix(&mut rng, 1, kappa, f).into_vec();
        Ok(ModelParameters {
            config,
            layers,
            out_proj,
            scorer_w1,
            scorer_b1,
            scorer_w2,
            scorer_b2,
            prelu_slope: PRELU_INIT_SLOPE,
        })
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let ModelConfig {
            num_layers,
            dim: d,
            ffn_dim: f,
            kappa,
        } = config;
        ModelParameters {
            config,
            layers: (0..num_layers)
                .map(|_| LayerParams {
                    attn_q: Matrix::zeros(d, d),
                    attn_k: Matrix::zeros(d, d),
                    attn_v: Matrix::zeros(d, d),
                    prototypes: Matrix::zeros(kappa, d),
                    fusion: 0.0,
                })
                .collect(),
            out_proj: Matrix::zeros(num_layers * d, d),
            scorer_w1: Matrix::zeros(d, f),
            scorer_b1: vec![0.0; f],
            scorer_w2: Matrix::zeros(f, kappa),
            scorer_b2: vec![0.0; kappa],
            prelu_slope: 0.0,
        }
    }

    /// Named tensors in a fixed order (the checkpoint order).
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let ModelConfig { dim: d, ffn_dim: f, kappa, num_layers } = self.config;
        let mut out = Vec::new();
        for (s, lp) in self.layers.iter().enumerate() {
            out.push(TensorView { name: format!("layer{s}.attn_q"), shape: (d, d), data: lp.attn_q.as_slice() });
            out.push(TensorView { name: format!("layer{s}.attn_k"), shape: (d, d), data: lp.attn_k.as_slice() });
            out.push(TensorView { name: format!("layer{s}.attn_v"), shape: (d, d), data: lp.attn_v.as_slice() });
            out.push(TensorView {
                name: format!("layer{s}.prototypes"),
                shape: (kappa, d),
                data: lp.prototypes.as_slice(),
            });
            out.push(TensorView {
                name: format!("layer{s}.fusion"),
                shape: (1, 1),
                data: core::slice::from_ref(&lp.fusion),
            });
        }
        out.push(TensorView { name: "out_proj".into(), shape: (num_layers * d, d), data: self.out_proj.as_slice() });
        out.push(TensorView { name: "scorer_w1".into(), shape: (d, f), data: self.scorer_w1.as_slice() });
        out.push(TensorView { name: "scorer_b1".into(), shape: (1, f), data: &self.scorer_b1 });
        out.push(TensorView { name: "scorer_w2".into(), shape: (f, kappa), data: self.scorer_w2.as_slice() });
        out.push(TensorView { name: "scorer_b2".into(), shape: (1, kappa), data: &self.scorer_b2 });
        out.push(TensorView {
            name: "prelu_slope".into(),
            shape: (1, 1),
            data: core::slice::from_ref(&self.prelu_slope),
        });
        out
    }

    /// Mutable counterpart of [`Self::tensors`], same order. Fusion
    /// coefficients are exempt from weight decay.
    pub fn tensors_mut(&mut self) -> Vec<TensorViewMut<'_>> {
        let ModelConfig { dim: d, ffn_dim: f, kappa, num_layers } = self.config;
        let mut out = Vec::new();
        for (s, lp) in self.layers.iter_mut().enumerate() {
            let LayerParams { attn_q, attn_k, attn_v, prototypes, fusion } = lp;
            let mut push = |name: String, shape, data, decay| out.push(TensorViewMut { name, shape, data, decay });
            push(format!("layer{s}.attn_q"), (d, d), attn_q.as_mut_slice(), true);
            push(format!("layer{s}.attn_k"), (d, d), attn_k.as_mut_slice(), true);
            push(format!("layer{s}.attn_v"), (d, d), attn_v.as_mut_slice(), true);
            push(format!("layer{s}.prototypes"), (kappa, d), prototypes.as_mut_slice(), true);
            push(format!("layer{s}.fusion"), (1, 1), core::slice::from_mut(fusion), false);
        }
        let mut push = |name: &str, shape, data| {
            out.push(TensorViewMut { name: name.into(), shape, data, decay: true })
        };
        push("out_proj", (num_layers * d, d), self.out_proj.as_mut_slice());
        push("scorer_w1", (d, f), self.scorer_w1.as_mut_slice());
        push("scorer_b1", (1, f), &mut self.scorer_b1);
        push("scorer_w2", (f, kappa), self.scorer_w2.as_mut_slice());
        push("scorer_b2", (1, kappa), &mut self.scorer_b2);
        push("prelu_slope", (1, 1), core::slice::from_mut(&mut self.prelu_slope));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    fn validate(&self) -> Result<()> {
        let ModelConfig { num_layers, dim: d, ffn_dim: f, kappa } = self.config;
        let check = |what, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::ShapeMismatch { what, expected, found })
            }
        };
        check("parameter layers", num_layers, self.layers.len())?;
        for lp in &self.layers {
            for m in [&lp.attn_q, &lp.attn_k, &lp.attn_v] {
                check("attention projection", d * d, m.rows() * m.cols())?;
            }
            check("prototypes", kappa * d, lp.prototypes.rows() * lp.prototypes.cols())?;
        }
        check("out_proj rows", num_layers * d, self.out_proj.rows())?;
        check("scorer_w1 rows", d, self.scorer_w1.rows())?;
        check("scorer_w1 cols", f, self.scorer_w1.cols())?;
        check("scorer_b1", f, self.scorer_b1.len())?;
        check("scorer_w2 rows", f, self.scorer_w2.rows())?;
        check("scorer_w2 cols", kappa, self.scorer_w2.cols())?;
        check("scorer_b2", kappa, self.scorer_b2.len())
    }
}

fn check_inputs(
    graph: &MultilayerGraph,
    features: &FeatureTensor,
    params: &ModelParameters,
    prev: Option<&SoftAssignments>,
) -> Result<()> {
    params.validate()?;
    let cfg = params.config;
    let check = |what, expected: usize, found: usize| {
        if expected == found {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { what, expected, found })
        }
    };
    check("feature layers", graph.num_layers(), features.num_layers())?;
    check("feature nodes", graph.num_nodes(), features.num_nodes())?;
    check("model layers", graph.num_layers(), cfg.num_layers)?;
    check("feature dim", cfg.dim, features.dim())?;
    if let Some(prev) = prev {
        check("previous assignment layers", cfg.num_layers, prev.num_layers())?;
        check("previous assignment nodes", graph.num_nodes(), prev.num_nodes())?;
        check("previous assignment communities", cfg.kappa, prev.kappa())?;
    }
    Ok(())
}

/// `Z' = Z + eta * C_prev * E` per layer; without previous assignments the
/// features are returned unchanged.
pub fn cle_enrich(
    features: &FeatureTensor,
    prev: Option<&SoftAssignments>,
    params: &ModelParameters,
) -> Result<FeatureTensor> {
    let Some(prev) = prev else {
        return Ok(features.clone());
    };
    if prev.num_layers() != features.num_layers() || prev.num_nodes() != features.num_nodes() {
        return Err(Error::ShapeMismatch {
            what: "previous assignments",
            expected: features.num_layers() * features.num_nodes(),
            found: prev.num_layers() * prev.num_nodes(),
        });
    }
    let slices = enrich_slices(features, prev, params)?.0;
    Ok(FeatureTensor { slices })
}

/// Returns enriched slices and the prototype mixtures `C_prev * E`.
fn enrich_slices(
    features: &FeatureTensor,
    prev: &SoftAssignments,
    params: &ModelParameters,
) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let mut enriched = Vec::with_capacity(features.num_layers());
    let mut mixtures = Vec::with_capacity(features.num_layers());
    for (s, lp) in params.layers.iter().enumerate() {
        if prev.kappa() != lp.prototypes.rows() || lp.prototypes.cols() != features.dim() {
            return Err(Error::ShapeMismatch {
                what: "prototype bank",
                expected: prev.kappa() * features.dim(),
                found: lp.prototypes.rows() * lp.prototypes.cols(),
            });
        }
        let mixture = prev.layer(s).matmul(&lp.prototypes);
        let mut z = features.slice(s).clone();
        z.add_scaled(lp.fusion, &mixture);
        enriched.push(z);
        mixtures.push(mixture);
    }
    Ok((enriched, mixtures))
}

/// Intermediate values of one attention head.
#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Attention weights, flattened per node; node `i` owns
    /// `alpha[offsets[i]..offsets[i + 1]]`.
    pub alpha: Vec<f64>,
    pub offsets: Vec<usize>,
    pub output: Matrix,
}

/// Nodes that node `i` attends to: its neighbors, or itself when isolated.
#[inline]
pub(crate) fn attention_targets<'a>(layer: &'a LayerTopology, i: &'a usize) -> &'a [usize] {
    let nbrs = layer.neighbors(*i);
    if nbrs.is_empty() {
        core::slice::from_ref(i)
    } else {
        nbrs
    }
}

pub(crate) fn attention_head(enriched: &Matrix, layer: &LayerTopology, lp: &LayerParams) -> HeadCache {
    let q = enriched.matmul(&lp.attn_q);
    let k = enriched.matmul(&lp.attn_k);
    let v = enriched.matmul(&lp.attn_v);
    let n = enriched.rows();
    let d = enriched.cols();
    let inv_sqrt_d = 1.0 / libm::sqrt(d as f64);
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut alpha = Vec::with_capacity(2 * layer.edge_count() + n);
    let mut output = Matrix::zeros(n, d);
    for i in 0..n {
        let targets = attention_targets(layer, &i);
        let start = alpha.len();
        alpha.extend(targets.iter().map(|&j| dot(q.row(i), k.row(j)) * inv_sqrt_d));
        let weights = &mut alpha[start..];
        softmax_in_place(weights);
        let out = output.row_mut(i);
        for (&j, &a) in targets.iter().zip(weights.iter()) {
            axpy(a, v.row(j), out);
        }
        offsets.push(alpha.len());
    }
    HeadCache {
        q,
        k,
        v,
        alpha,
        offsets,
        output,
    }
}

/// Attention of every node over its neighbors in this layer, scaled by
/// `1/sqrt(d)`, with cost linear in the edge count.
pub fn sparse_attention(enriched: &Matrix, layer: &LayerTopology, params: &LayerParams) -> Matrix {
    attention_head(enriched, layer, params).output
}

fn concat_heads(heads: &[&Matrix]) -> Matrix {
    let n = heads[0].rows();
    let d = heads[0].cols();
    let mut out = Matrix::zeros(n, heads.len() * d);
    for (s, h) in heads.iter().enumerate() {
        for i in 0..n {
            out.row_mut(i)[s * d..(s + 1) * d].copy_from_slice(h.row(i));
        }
    }
    out
}

/// `Z_out^(s) = concat(heads) * W_O + Z'^(s)`; returns the concatenation
/// alongside the outputs.
fn aggregate(heads: &[&Matrix], enriched: &[Matrix], out_proj: &Matrix) -> (Matrix, Vec<Matrix>) {
    let concat = concat_heads(heads);
    let unified = concat.matmul(out_proj);
    let outputs = enriched
        .iter()
        .map(|z| {
            let mut o = unified.clone();
            o.add_scaled(1.0, z);
            o
        })
        .collect();
    (concat, outputs)
}

pub fn aggregate_heads(
    head_outputs: &[Matrix],
    enriched: &FeatureTensor,
    params: &ModelParameters,
) -> Result<FeatureTensor> {
    let l = enriched.num_layers();
    if head_outputs.len() != l {
        return Err(Error::ShapeMismatch {
            what: "head outputs",
            expected: l,
            found: head_outputs.len(),
        });
    }
    if let Some(bad) = head_outputs.iter().find(|h| h.shape() != enriched.slice(0).shape()) {
        return Err(Error::ShapeMismatch {
            what: "head output",
            expected: enriched.num_nodes() * enriched.dim(),
            found: bad.rows() * bad.cols(),
        });
    }
    if params.out_proj.shape() != (l * enriched.dim(), enriched.dim()) {
        return Err(Error::ShapeMismatch {
            what: "out_proj",
            expected: l * enriched.dim() * enriched.dim(),
            found: params.out_proj.rows() * params.out_proj.cols(),
        });
    }
    let heads: Vec<&Matrix> = head_outputs.iter().collect();
    let (_, outputs) = aggregate(&heads, enriched.slices(), &params.out_proj);
    Ok(FeatureTensor { slices: outputs })
}

#[inline]
fn prelu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Scorer intermediates: pre-activation, activation, probabilities.
fn score_parts(layer_output: &Matrix, params: &ModelParameters) -> (Matrix, Matrix, Matrix) {
    let n = layer_output.rows();
    let mut pre = Matrix::zeros(n, params.scorer_w1.cols());
    for i in 0..n {
        pre.row_mut(i).copy_from_slice(&params.scorer_b1);
    }
    gemm(1.0, layer_output, Trans::No, &params.scorer_w1, Trans::No, 1.0, &mut pre);
    let mut act = pre.clone();
    act.as_mut_slice()
        .iter_mut()
        .for_each(|x| *x = prelu(*x, params.prelu_slope));
    let mut probs = Matrix::zeros(n, params.scorer_w2.cols());
    for i in 0..n {
        probs.row_mut(i).copy_from_slice(&params.scorer_b2);
    }
    gemm(1.0, &act, Trans::No, &params.scorer_w2, Trans::No, 1.0, &mut probs);
    for i in 0..n {
        softmax_in_place(probs.row_mut(i));
    }
    (pre, act, probs)
}

/// `softmax(PReLU(z W1 + b1) W2 + b2)` row by row.
pub fn score(layer_output: &Matrix, params: &ModelParameters) -> Matrix {
    score_parts(layer_output, params).2
}

/// Everything the backward pass needs from a forward evaluation.
pub(crate) struct ForwardCache {
    pub enriched: Vec<Matrix>,
    pub mixtures: Option<Vec<Matrix>>,
    pub heads: Vec<HeadCache>,
    pub concat: Matrix,
    pub outputs: Vec<Matrix>,
    pub hidden_pre: Vec<Matrix>,
    pub hidden: Vec<Matrix>,
    pub assignments: SoftAssignments,
}

pub(crate) fn forward_cached(
    graph: &MultilayerGraph,
    features: &FeatureTensor,
    params: &ModelParameters,
    prev: Option<&SoftAssignments>,
) -> Result<ForwardCache> {
    check_inputs(graph, features, params, prev)?;
    let (enriched, mixtures) = match prev {
        Some(prev) => {
            let (e, m) = enrich_slices(features, prev, params)?;
            (e, Some(m))
        }
        None => (features.slices.clone(), None),
    };
    let heads: Vec<HeadCache> = graph
        .layers()
        .iter()
        .zip(&enriched)
        .zip(&params.layers)
        .map(|((layer, z), lp)| attention_head(z, layer, lp))
        .collect();
    let head_refs: Vec<&Matrix> = heads.iter().map(|h| &h.output).collect();
    let (concat, outputs) = aggregate(&head_refs, &enriched, &params.out_proj);
    let mut hidden_pre = Vec::with_capacity(outputs.len());
    let mut hidden = Vec::with_capacity(outputs.len());
    let mut probs = Vec::with_capacity(outputs.len());
    for out in &outputs {
        let (pre, act, p) = score_parts(out, params);
        hidden_pre.push(pre);
        hidden.push(act);
        probs.push(p);
    }
    for p in &probs {
        if !p.is_finite() {
            return Err(Error::NonFinite("soft assignments"));
        }
    }
    Ok(ForwardCache {
        enriched,
        mixtures,
        heads,
        concat,
        outputs,
        hidden_pre,
        hidden,
        assignments: SoftAssignments { layers: probs },
    })
}

/// Full forward pass producing one soft assignment matrix per layer.
pub fn forward(
    graph: &MultilayerGraph,
    features: &FeatureTensor,
    params: &ModelParameters,
    prev: Option<&SoftAssignments>,
) -> Result<SoftAssignments> {
    Ok(forward_cached(graph, features, params, prev)?.assignments)
}

fn ensure_finite(m: &Matrix, name: &'static str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

/// Reverse pass through the model given `dLoss/dC^(s)` for every layer.
/// Previous assignments are constants.
pub(crate) fn backprop(
    graph: &MultilayerGraph,
    params: &ModelParameters,
    prev: Option<&SoftAssignments>,
    cache: &ForwardCache,
    d_assign: &[Matrix],
) -> Result<ModelParameters> {
    let cfg = params.config;
    let d = cfg.dim;
    let n = graph.num_nodes();
    let mut grads = ModelParameters::zeros(cfg);
    let mut d_unified = Matrix::zeros(n, d);
    let mut d_enriched: Vec<Matrix> = Vec::with_capacity(cfg.num_layers);

    for s in 0..cfg.num_layers {
        let probs = cache.assignments.layer(s);
        let dc = &d_assign[s];
        ensure_finite(dc, "assignment gradient")?;
        // softmax
        let mut d_logits = Matrix::zeros(n, cfg.kappa);
        for i in 0..n {
            let p = probs.row(i);
            let g = dc.row(i);
            let inner = dot(p, g);
            for ((o, pi), gi) in d_logits.row_mut(i).iter_mut().zip(p).zip(g) {
                *o = pi * (gi - inner);
            }
        }
        gemm(1.0, &cache.hidden[s], Trans::Yes, &d_logits, Trans::No, 1.0, &mut grads.scorer_w2);
        for (b, v) in grads.scorer_b2.iter_mut().zip(d_logits.column_sums()) {
            *b += v;
        }
        let mut d_hidden = Matrix::zeros(n, cfg.ffn_dim);
        gemm(1.0, &d_logits, Trans::No, &params.scorer_w2, Trans::Yes, 0.0, &mut d_hidden);
        // PReLU
        let pre = &cache.hidden_pre[s];
        for (g, &x) in d_hidden.as_mut_slice().iter_mut().zip(pre.as_slice()) {
            if x < 0.0 {
                grads.prelu_slope += *g * x;
                *g *= params.prelu_slope;
            }
        }
        gemm(1.0, &cache.outputs[s], Trans::Yes, &d_hidden, Trans::No, 1.0, &mut grads.scorer_w1);
        for (b, v) in grads.scorer_b1.iter_mut().zip(d_hidden.column_sums()) {
            *b += v;
        }
        let mut d_out = Matrix::zeros(n, d);
        gemm(1.0, &d_hidden, Trans::No, &params.scorer_w1, Trans::Yes, 0.0, &mut d_out);
        ensure_finite(&d_out, "layer output gradient")?;
        d_unified.add_scaled(1.0, &d_out);
        d_enriched.push(d_out);
    }

    gemm(1.0, &cache.concat, Trans::Yes, &d_unified, Trans::No, 0.0, &mut grads.out_proj);
    let mut d_concat = Matrix::zeros(n, cfg.num_layers * d);
    gemm(1.0, &d_unified, Trans::No, &params.out_proj, Trans::Yes, 0.0, &mut d_concat);

    let scale = 1.0 / libm::sqrt(d as f64);
    for (s, layer) in graph.layers().iter().enumerate() {
        let head = &cache.heads[s];
        let lp = &params.layers[s];
        let mut dq = Matrix::zeros(n, d);
        let mut dk = Matrix::zeros(n, d);
        let mut dv = Matrix::zeros(n, d);
        let mut d_alpha = Vec::new();
        for i in 0..n {
            let targets = attention_targets(layer, &i);
            let alpha = &head.alpha[head.offsets[i]..head.offsets[i + 1]];
            let d_out = &d_concat.row(i)[s * d..(s + 1) * d];
            d_alpha.clear();
            d_alpha.extend(targets.iter().map(|&j| dot(d_out, head.v.row(j))));
            let inner: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
            for ((&j, &a), &ga) in targets.iter().zip(alpha).zip(&d_alpha) {
                axpy(a, d_out, dv.row_mut(j));
                let de = a * (ga - inner) * scale;
                axpy(de, head.k.row(j), dq.row_mut(i));
                axpy(de, head.q.row(i), dk.row_mut(j));
            }
        }
        let z = &cache.enriched[s];
        let gl = &mut grads.layers[s];
        gemm(1.0, z, Trans::Yes, &dq, Trans::No, 0.0, &mut gl.attn_q);
        gemm(1.0, z, Trans::Yes, &dk, Trans::No, 0.0, &mut gl.attn_k);
        gemm(1.0, z, Trans::Yes, &dv, Trans::No, 0.0, &mut gl.attn_v);
        let dz = &mut d_enriched[s];
        gemm(1.0, &dq, Trans::No, &lp.attn_q, Trans::Yes, 1.0, dz);
        gemm(1.0, &dk, Trans::No, &lp.attn_k, Trans::Yes, 1.0, dz);
        gemm(1.0, &dv, Trans::No, &lp.attn_v, Trans::Yes, 1.0, dz);
        ensure_finite(dz, "enriched feature gradient")?;

        if let (Some(prev), Some(mixtures)) = (prev, cache.mixtures.as_ref()) {
            gl.fusion = dot(dz.as_slice(), mixtures[s].as_slice());
            gemm(lp.fusion, prev.layer(s), Trans::Yes, dz, Trans::No, 0.0, &mut gl.prototypes);
        }
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("parameter gradients"));
    }
    Ok(grads)
}

/// Consensus label per node: the community of the largest probability over
/// all layers and communities. Ties go to the smaller community index, then
/// the smaller layer index.
pub fn global_allocate(assignments: &SoftAssignments) -> ConsensusPartition {
    let n = assignments.num_nodes();
    let kappa = assignments.kappa();
    let mut labels = Vec::with_capacity(n);
    let mut confidence = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = (0usize, f64::NEG_INFINITY);
        for p in 0..kappa {
            for m in assignments.layers() {
                let v = m.get(i, p);
                if v > best.1 {
                    best = (p, v);
                }
            }
        }
        labels.push(best.0);
        confidence.push(best.1);
    }
    ConsensusPartition { labels, confidence }
}

/// Number of distinct labels used.
pub fn count_nonempty(partition: &ConsensusPartition, kappa: usize) -> usize {
    let size = partition.labels.iter().copied().max().map_or(0, |m| m + 1).max(kappa);
    let mut seen = vec![false; size];
    for &l in &partition.labels {
        seen[l] = true;
    }
    seen.iter().filter(|&&b| b).count()
}
