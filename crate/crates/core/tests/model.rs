mod common;

use common::*;
use ldga_core::graph::MultilayerGraph;
use ldga_core::linalg::Matrix;
use ldga_core::model::{
    aggregate_heads, cle_enrich, forward, score, sparse_attention, FeatureTensor, ModelConfig, ModelParameters,
    SoftAssignments,
};
use ldga_core::rng::SplitMix64;

fn model(layers: usize, dim: usize, ffn_dim: usize, kappa: usize, seed: u64) -> ModelParameters {
    ModelParameters::init(
        ModelConfig {
            num_layers: layers,
            dim,
            ffn_dim,
            kappa,
        },
        seed,
    )
    .unwrap()
}

fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * (2.0 * uniform(rng) - 1.0))
}

#[test]
fn sparse_attention_matches_dense_oracle() {
    let mut rng = SplitMix64::new(2);
    for case in 0..25 {
        let n = 2 + rng.below(19);
        let d = 1 + rng.below(6);
        let g = random_graph(&mut rng, n, 1, 0.25);
        let mut params = model(1, d, 4, 2, case);
        let lp = &mut params.layers[0];
        lp.attn_q = random_matrix(&mut rng, d, d, 1.0);
        lp.attn_k = random_matrix(&mut rng, d, d, 1.0);
        lp.attn_v = random_matrix(&mut rng, d, d, 1.0);
        let z = random_matrix(&mut rng, n, d, 2.0);
        let sparse = sparse_attention(&z, g.layer(0), lp);
        let dense = dense_masked_attention(&z, g.layer(0), &lp.attn_q, &lp.attn_k, &lp.attn_v);
        assert!(sparse.max_abs_diff(&dense) < 1e-10, "case {case}");
    }
}

#[test]
fn attention_on_a_path() {
    let g = MultilayerGraph::from_edge_lists(3, &[vec![(0, 1), (1, 2)]]).unwrap();
    let mut params = model(1, 2, 2, 2, 0);
    let lp = &mut params.layers[0];
    lp.attn_q = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    lp.attn_k = lp.attn_q.clone();
    lp.attn_v = lp.attn_q.clone();
    let z = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    let out = sparse_attention(&z, g.layer(0), lp);
    // Endpoints see only the middle node; the middle node weighs its two
    // neighbors by exp(q_1 . k_j / sqrt 2).
    assert_eq!(out.row(0), &[0.0, 1.0]);
    assert_eq!(out.row(2), &[0.0, 1.0]);
    let w0 = (0.0f64 / 2f64.sqrt()).exp();
    let w2 = (1.0f64 / 2f64.sqrt()).exp();
    let expected = [(w0 + w2) / (w0 + w2), w2 / (w0 + w2)];
    for t in 0..2 {
        assert!((out.get(1, t) - expected[t]).abs() < 1e-15);
    }
}

#[test]
fn attention_rows_are_stochastic_and_local() {
    // With Z = I and W_V = I the attention output is the weight matrix itself.
    let mut rng = SplitMix64::new(5);
    let n = 12;
    let g = random_graph(&mut rng, n, 1, 0.3);
    let mut params = model(1, n, 4, 2, 1);
    let lp = &mut params.layers[0];
    lp.attn_q = random_matrix(&mut rng, n, n, 3.0);
    lp.attn_k = random_matrix(&mut rng, n, n, 3.0);
    lp.attn_v = Matrix::identity(n);
    let weights = sparse_attention(&Matrix::identity(n), g.layer(0), lp);
    let layer = g.layer(0);
    for i in 0..n {
        assert!((weights.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for j in 0..n {
            let allowed = if layer.degree(i) == 0 { i == j } else { layer.has_edge(i, j) };
            if !allowed {
                assert_eq!(weights.get(i, j), 0.0);
            }
            assert!(weights.get(i, j) >= 0.0);
        }
    }
}

#[test]
fn attention_ignores_non_neighbors() {
    let mut rng = SplitMix64::new(8);
    let n = 15;
    let d = 4;
    let g = random_graph(&mut rng, n, 1, 0.2);
    let params = model(1, d, 4, 2, 9);
    let layer = g.layer(0);
    let z = random_matrix(&mut rng, n, d, 1.0);
    let base = sparse_attention(&z, layer, &params.layers[0]);
    for i in 0..n {
        let mut masked = z.clone();
        for j in 0..n {
            if j != i && !layer.has_edge(i, j) {
                masked.row_mut(j).fill(0.0);
            }
        }
        let out = sparse_attention(&masked, layer, &params.layers[0]);
        assert_eq!(out.row(i), base.row(i), "node {i}");
    }
}

#[test]
fn first_epoch_enrichment_is_identity() {
    let mut rng = SplitMix64::new(3);
    let features = random_features(&mut rng, 3, 10, 5);
    let params = model(3, 5, 4, 3, 3);
    assert_eq!(cle_enrich(&features, None, &params).unwrap(), features);
    let prev = random_assignments(&mut rng, 3, 10, 3);
    let mut prototypes = params.clone();
    for lp in &mut prototypes.layers {
        lp.prototypes = random_matrix(&mut rng, 3, 5, 1.0);
        lp.fusion = 0.0;
    }
    assert_eq!(cle_enrich(&features, Some(&prev), &prototypes).unwrap(), features);
}

#[test]
fn aggregation_hand_case() {
    let mut params = ModelParameters::zeros(ModelConfig {
        num_layers: 2,
        dim: 2,
        ffn_dim: 2,
        kappa: 2,
    });
    params.out_proj = Matrix::from_vec(4, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]).unwrap();
    let heads = [
        Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap(),
        Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap(),
    ];
    let enriched = FeatureTensor::new(vec![
        Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap(),
        Matrix::from_vec(1, 2, vec![-1.0, 0.0]).unwrap(),
    ])
    .unwrap();
    // [1 2 3 4] W_O = [1 + 3 + 8, 2 + 3 - 4] = [12, 1]
    let out = aggregate_heads(&heads, &enriched, &params).unwrap();
    assert_eq!(out.slice(0).row(0), &[12.5, 1.5]);
    assert_eq!(out.slice(1).row(0), &[11.0, 1.0]);
}

#[test]
fn aggregation_rejects_mismatched_shapes() {
    let params = model(2, 2, 2, 2, 0);
    let enriched = FeatureTensor::new(vec![Matrix::zeros(3, 2), Matrix::zeros(3, 2)]).unwrap();
    assert!(aggregate_heads(&[Matrix::zeros(3, 2)], &enriched, &params).is_err());
    assert!(aggregate_heads(&[Matrix::zeros(3, 2), Matrix::zeros(2, 2)], &enriched, &params).is_err());
}

#[test]
fn scorer_hand_case() {
    let mut params = ModelParameters::zeros(ModelConfig {
        num_layers: 1,
        dim: 2,
        ffn_dim: 2,
        kappa: 2,
    });
    params.scorer_w1 = Matrix::from_vec(2, 2, vec![1.0, 0.5, 2.0, -1.0]).unwrap();
    params.scorer_b1 = vec![0.1, -0.2];
    params.scorer_w2 = Matrix::from_vec(2, 2, vec![1.0, -1.0, 0.5, 2.0]).unwrap();
    params.scorer_b2 = vec![0.0, 0.3];
    params.prelu_slope = 0.25;
    let z = Matrix::from_vec(1, 2, vec![1.0, -2.0]).unwrap();
    // pre = (1 - 4 + 0.1, 0.5 + 2 - 0.2) = (-2.9, 2.3); act = (-0.725, 2.3)
    let a0: f64 = 0.25 * (1.0 * 1.0 + -2.0 * 2.0 + 0.1);
    let a1: f64 = 1.0 * 0.5 + -2.0 * -1.0 - 0.2;
    let l0 = a0 * 1.0 + a1 * 0.5;
    let l1 = a0 * -1.0 + a1 * 2.0 + 0.3;
    let p0 = l0.exp() / (l0.exp() + l1.exp());
    let c = score(&z, &params);
    assert!((c.get(0, 0) - p0).abs() < 1e-10);
    assert!((c.get(0, 1) - (1.0 - p0)).abs() < 1e-10);
}

#[test]
fn forward_is_node_permutation_equivariant() {
    let mut rng = SplitMix64::new(13);
    let n = 18;
    let g = random_graph(&mut rng, n, 3, 0.25);
    let features = random_features(&mut rng, 3, n, 6);
    let mut params = model(3, 6, 10, 4, 4);
    for lp in &mut params.layers {
        lp.prototypes = random_matrix(&mut rng, 4, 6, 1.0);
        lp.fusion = 0.5;
    }
    let prev = random_assignments(&mut rng, 3, n, 4);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.below(i + 1));
    }
    let permute = |m: &Matrix| {
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            out.row_mut(perm[i]).copy_from_slice(m.row(i));
        }
        out
    };
    let pg = g.permute_nodes(&perm).unwrap();
    let pf = FeatureTensor::new(features.slices().iter().map(permute).collect()).unwrap();
    let pprev = SoftAssignments::new(prev.layers().iter().map(permute).collect()).unwrap();
    let base = forward(&g, &features, &params, Some(&prev)).unwrap();
    let moved = forward(&pg, &pf, &params, Some(&pprev)).unwrap();
    for s in 0..3 {
        assert!(permute(base.layer(s)).max_abs_diff(moved.layer(s)) < 1e-12);
    }
}

#[test]
fn identical_layers_give_identical_assignments() {
    let mut rng = SplitMix64::new(17);
    let single = random_graph(&mut rng, 20, 1, 0.2);
    let edges = single.layer(0).edges().to_vec();
    let g = MultilayerGraph::from_edge_lists(20, &[edges.clone(), edges]).unwrap();
    let slice = random_matrix(&mut rng, 20, 5, 1.0);
    let features = FeatureTensor::new(vec![slice.clone(), slice]).unwrap();
    let mut params = model(2, 5, 8, 3, 6);
    params.layers[1] = params.layers[0].clone();
    let c = forward(&g, &features, &params, None).unwrap();
    assert_eq!(c.layer(0), c.layer(1));
}

#[test]
fn forward_shape_and_rows() {
    let mut rng = SplitMix64::new(19);
    let g = random_graph(&mut rng, 30, 4, 0.1);
    let features = random_features(&mut rng, 4, 30, 8);
    let params = model(4, 8, 16, 5, 2);
    let c = forward(&g, &features, &params, None).unwrap();
    assert_eq!((c.num_layers(), c.num_nodes(), c.kappa()), (4, 30, 5));
    assert!(c.max_row_sum_error() < 1e-6);
}

#[test]
fn forward_is_stable_for_large_inputs() {
    let mut rng = SplitMix64::new(23);
    let g = random_graph(&mut rng, 25, 2, 0.3);
    let features = FeatureTensor::new((0..2).map(|_| random_matrix(&mut rng, 25, 6, 1e3)).collect()).unwrap();
    let mut params = model(2, 6, 12, 4, 8);
    for lp in &mut params.layers {
        lp.prototypes = random_matrix(&mut rng, 4, 6, 1e3);
        lp.fusion = 1.0;
    }
    let prev = random_assignments(&mut rng, 2, 25, 4);
    let c = forward(&g, &features, &params, Some(&prev)).unwrap();
    for m in c.layers() {
        assert!(m.is_finite());
    }
    assert!(c.max_row_sum_error() < 1e-6);
}

#[test]
fn forward_rejects_inconsistent_shapes() {
    let mut rng = SplitMix64::new(29);
    let g = random_graph(&mut rng, 10, 2, 0.3);
    let features = random_features(&mut rng, 2, 10, 4);
    assert!(forward(&g, &features, &model(3, 4, 4, 2, 0), None).is_err());
    assert!(forward(&g, &features, &model(2, 5, 4, 2, 0), None).is_err());
    let prev = random_assignments(&mut rng, 2, 10, 3);
    assert!(forward(&g, &features, &model(2, 4, 4, 2, 0), Some(&prev)).is_err());
}
