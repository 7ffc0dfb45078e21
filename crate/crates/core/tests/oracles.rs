mod common;

use common::*;
use ldga_core::graph::{modularity_matvec, modularity_product};
use ldga_core::linalg::Matrix;
use ldga_core::metrics::{multilayer_modularity, MetricConfig};
use ldga_core::model::SoftAssignments;
use ldga_core::objective::{balance_term, loss_soft, modularity_term, LossConfig, LossMode};
use ldga_core::rng::SplitMix64;
use proptest::prelude::*;

fn config(kappa: usize, mode: LossMode) -> LossConfig {
    LossConfig {
        mode,
        ..LossConfig::new(kappa)
    }
}

#[test]
fn two_triangles_modularity_loss() {
    let g = two_triangles(2);
    let c = one_hot(&[0, 0, 0, 1, 1, 1], 2);
    let assignments = SoftAssignments::new(vec![c.clone(), c.clone()]).unwrap();
    for mode in [LossMode::PerLayer, LossMode::Pooled] {
        let lq = modularity_term(&assignments, &g, &config(2, mode)).unwrap();
        assert!((lq - (-10.0 / 14.0)).abs() < 1e-12, "{mode:?}: {lq}");
    }
    let dense = dense_modularity_loss(&g, &[c.clone(), c], 1.0);
    assert!((dense - (-10.0 / 14.0)).abs() < 1e-12);
}

#[test]
fn one_hot_loss_matches_dense_on_random_graphs() {
    let mut rng = SplitMix64::new(17);
    for case in 0..20 {
        let n = 5 + rng.below(26);
        let layers = 1 + rng.below(3);
        let kappa = 2 + rng.below(4);
        let g = random_graph(&mut rng, n, layers, 0.3);
        if g.total_edges() == 0 {
            continue;
        }
        let slices: Vec<Matrix> = (0..layers).map(|_| one_hot(&random_labels(&mut rng, n, kappa), kappa)).collect();
        let assignments = SoftAssignments::new(slices.clone()).unwrap();
        let lq = modularity_term(&assignments, &g, &config(kappa, LossMode::PerLayer)).unwrap();
        let dense = dense_modularity_loss(&g, &slices, 1.0);
        assert!((lq - dense).abs() < 1e-9, "case {case}: {lq} vs {dense}");
    }
}

#[test]
fn soft_loss_matches_dense_in_both_modes() {
    let mut rng = SplitMix64::new(23);
    for _ in 0..10 {
        let n = 4 + rng.below(20);
        let layers = 1 + rng.below(3);
        let g = random_graph(&mut rng, n, layers, 0.4);
        if g.total_edges() == 0 {
            continue;
        }
        let assignments = random_assignments(&mut rng, layers, n, 3);
        let per_layer = modularity_term(&assignments, &g, &config(3, LossMode::PerLayer)).unwrap();
        assert!((per_layer - dense_modularity_loss(&g, assignments.layers(), 1.0)).abs() < 1e-9);
        let pooled = modularity_term(&assignments, &g, &config(3, LossMode::Pooled)).unwrap();
        let mean = vec![assignments.pooled(); layers];
        assert!((pooled - dense_modularity_loss(&g, &mean, 1.0)).abs() < 1e-9);
    }
}

#[test]
fn single_layer_loss_is_scaled_newman_girvan() {
    let mut rng = SplitMix64::new(29);
    for _ in 0..10 {
        let n = 6 + rng.below(40);
        let g = random_graph(&mut rng, n, 1, 0.2);
        let m = g.total_edges() as f64;
        if m == 0.0 {
            continue;
        }
        let labels = random_labels(&mut rng, n, 4);
        let assignments = SoftAssignments::new(vec![one_hot(&labels, 4)]).unwrap();
        let lq = modularity_term(&assignments, &g, &config(4, LossMode::PerLayer)).unwrap();
        let q = -m * lq / (2.0 * m);
        assert!((q - newman_girvan(g.layer(0), &labels)).abs() < 1e-9);
    }
}

#[test]
fn modes_coincide_for_one_layer() {
    let mut rng = SplitMix64::new(31);
    let g = random_graph(&mut rng, 15, 1, 0.3);
    let assignments = random_assignments(&mut rng, 1, 15, 4);
    let a = loss_soft(&assignments, &g, &config(4, LossMode::PerLayer)).unwrap();
    let b = loss_soft(&assignments, &g, &config(4, LossMode::Pooled)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn multilayer_modularity_two_triangles() {
    let g = two_triangles(2);
    let labels = [0, 0, 0, 1, 1, 1];
    let dense = dense_multilayer_modularity(&g, &labels, 1.0, 1.0);
    // (10 intra + 12 coupling) / (28 adjacency + 12 coupling)
    assert!((dense - 0.55).abs() < 1e-12, "{dense}");
    let qm = multilayer_modularity(&g, &labels, &MetricConfig::default()).unwrap();
    assert!((qm - 0.55).abs() < 1e-12, "{qm}");
}

#[test]
fn multilayer_modularity_matches_dense_on_random_graphs() {
    let mut rng = SplitMix64::new(37);
    for _ in 0..20 {
        let n = 3 + rng.below(48);
        let layers = 1 + rng.below(4);
        let g = random_graph(&mut rng, n, layers, 0.15);
        if g.total_edges() == 0 {
            continue;
        }
        let k = 1 + rng.below(5);
        let labels = random_labels(&mut rng, n, k);
        for coupling in [0.0, 1.0, 0.5] {
            let cfg = MetricConfig {
                coupling,
                ..MetricConfig::default()
            };
            let qm = multilayer_modularity(&g, &labels, &cfg).unwrap();
            let dense = dense_multilayer_modularity(&g, &labels, 1.0, coupling);
            assert!((qm - dense).abs() < 1e-9, "{qm} vs {dense}");
            assert!(qm <= 1.0);
        }
    }
}

#[test]
fn multilayer_modularity_reduces_to_newman_girvan() {
    let mut rng = SplitMix64::new(41);
    let g = random_graph(&mut rng, 30, 1, 0.2);
    let labels = random_labels(&mut rng, 30, 3);
    let cfg = MetricConfig {
        coupling: 0.0,
        ..MetricConfig::default()
    };
    let qm = multilayer_modularity(&g, &labels, &cfg).unwrap();
    assert!((qm - newman_girvan(g.layer(0), &labels)).abs() < 1e-12);
}

#[test]
fn truth_beats_single_cluster() {
    let g = two_triangles(3);
    let cfg = MetricConfig::default();
    let single = multilayer_modularity(&g, &[0; 6], &cfg).unwrap();
    let truth = multilayer_modularity(&g, &[0, 0, 0, 1, 1, 1], &cfg).unwrap();
    assert!(truth > single);
}

fn graph_strategy() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 2usize..50, 1usize..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matvec_matches_dense((seed, n, layers) in graph_strategy(), gamma in 0.0f64..2.0) {
        let mut rng = SplitMix64::new(seed);
        let g = random_graph(&mut rng, n, layers, 0.3);
        let x: Vec<f64> = (0..n).map(|_| 2.0 * uniform(&mut rng) - 1.0).collect();
        for layer in g.layers() {
            if layer.edge_count() == 0 {
                prop_assert!(modularity_matvec(layer, gamma, &x).is_err());
                continue;
            }
            let b = dense_modularity_matrix(layer, gamma);
            let y = modularity_matvec(layer, gamma, &x).unwrap();
            for i in 0..n {
                let expected: f64 = (0..n).map(|j| b[i][j] * x[j]).sum();
                prop_assert!((y[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn modularity_columns_sum_to_zero((seed, n, layers) in graph_strategy()) {
        let mut rng = SplitMix64::new(seed);
        let g = random_graph(&mut rng, n, layers, 0.3);
        let c = Matrix::from_fn(n, 3, |_, _| 2.0 * uniform(&mut rng) - 1.0);
        for layer in g.layers().iter().filter(|l| l.edge_count() > 0) {
            let bc = modularity_product(layer, 1.0, &c).unwrap();
            for s in bc.column_sums() {
                prop_assert!(s.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn balance_stays_in_range(seed in any::<u64>(), n in 1usize..40, kappa in 2usize..9, layers in 1usize..4, alpha in 0.0f64..3.0) {
        let mut rng = SplitMix64::new(seed);
        let assignments = random_assignments(&mut rng, layers, n, kappa);
        for mode in [LossMode::PerLayer, LossMode::Pooled] {
            let cfg = LossConfig { alpha, mode, ..LossConfig::new(kappa) };
            let b = balance_term(&assignments, &cfg).unwrap();
            prop_assert!((0.0..=alpha + 1e-12).contains(&b), "{b}");
        }
    }
}
