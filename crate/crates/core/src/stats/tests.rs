use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::{compute_ground_truth, Dataset, ElementKind, Metric};
use crate::quantization::{build_hierarchy, quantized_distance, HierarchyConfig, LevelSpec, Store};
use crate::search::single_layer_topk;

/// Coarse integer-valued data, so equal distances are common.
fn lattice(n: usize, d: usize, seed: u64) -> Arc<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..n * d).map(|_| rng.random_range(0..4) as f32).collect();
    Arc::new(Dataset::from_vec(data, d, ElementKind::F32).unwrap())
}

fn gaussianish(n: usize, d: usize, seed: u64) -> Arc<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0) * rng.random_range(0.5f32..2.0)).collect();
    Arc::new(Dataset::from_vec(data, d, ElementKind::F32).unwrap())
}

fn config() -> HierarchyConfig {
    HierarchyConfig {
        metric: Metric::SquaredEuclidean,
        levels: vec![
            LevelSpec::Vq { centroids: 12, store: Store::Float32 },
            LevelSpec::Pq { dims_per_block: 2, bits: 4 },
        ],
        keep_exact: true,
        seed: 0,
        vq_iters: 5,
        pq_iters: 4,
        max_train_rows: None,
    }
}

fn single_stats(n: usize, k: usize, v: Vec<u32>) -> RankStats {
    RankStats::from_rank_counts(n, k, 1, v, vec![1], 1).unwrap()
}

#[test]
fn worked_example_steps() {
    let rs = single_stats(10, 3, vec![1, 3, 8]);
    let hits: Vec<usize> = (0..=10).map(|t| rs.hits(0, 0, t)).collect();
    assert_eq!(hits, vec![0, 0, 1, 1, 2, 2, 2, 2, 2, 3, 3]);
}

#[test]
fn two_neighbor_loss_value() {
    let rs = single_stats(8, 2, vec![0, 5]);
    let lm = rs.loss_matrix(DEFAULT_FLOOR).unwrap();
    assert_eq!(lm.value(0, 3), -(0.5f64).ln());
    assert_eq!(lm.value(0, 0), (2.0f64 / 0.5).ln());
    assert_eq!(lm.value(0, 6), 0.0);
    assert_eq!(lm.value(0, 8), 0.0);
    assert_eq!(lm.curve(0).depths(), &[0, 1, 6]);
}

#[test]
fn floor_arithmetic() {
    let rs = RankStats::from_rank_counts(100, 10, 2, (0..2).flat_map(|_| 40..50).collect(), vec![1, 2], 3).unwrap();
    let lm = rs.loss_matrix(0.5).unwrap();
    for level in 0..2 {
        assert!((lm.value(level, 1) - 2.995_732_273_553_991).abs() < 1e-12);
        assert_eq!(lm.value(level, 100), 0.0);
    }
    assert!(rs.loss_matrix(0.0).is_err());
    assert!(rs.loss_matrix(-1.0).is_err());
}

#[test]
fn rank_count_validation() {
    assert!(RankStats::from_rank_counts(10, 3, 1, vec![1, 1, 2], vec![1], 1).is_err());
    assert!(RankStats::from_rank_counts(10, 3, 1, vec![1, 2, 10], vec![1], 1).is_err());
    assert!(RankStats::from_rank_counts(10, 3, 1, vec![1, 2], vec![1], 1).is_err());
}

#[test]
fn hull_examples() {
    let h = convexify(&[4.0, 3.0, 3.0, 0.0]).unwrap();
    let vals: Vec<f64> = (0..4).map(|t| h.value_at(t)).collect();
    assert_eq!(h.breakpoints(), &[(0, 4.0), (3, 0.0)]);
    assert!((vals[1] - 8.0 / 3.0).abs() < 1e-15 && (vals[2] - 4.0 / 3.0).abs() < 1e-15);
    assert_eq!((vals[0], vals[3]), (4.0, 0.0));

    let convex = [9.0, 5.0, 2.0, 1.0, 0.5];
    let h = convexify(&convex).unwrap();
    assert_eq!(h.breakpoints().len(), 5);
    for (t, &v) in convex.iter().enumerate() {
        assert_eq!(h.value_at(t), v);
    }
    let linear = [6.0, 4.0, 2.0, 0.0];
    assert_eq!(convexify(&linear).unwrap().breakpoints(), &[(0, 6.0), (3, 0.0)]);
    assert!(convexify(&[]).is_err());

    // The step representation gives the same hull as the dense row.
    let curve = LossCurve::from_dense(&[4.0, 3.0, 3.0, 0.0]).unwrap();
    assert_eq!(curve.convexify(), convexify(&[4.0, 3.0, 3.0, 0.0]).unwrap());
}

#[test]
fn proxy_recall_examples() {
    let h = |v: f64| ConvexLossCurve::from_breakpoints(vec![(0, v), (10, v)]).unwrap_or_else(|_| convexify(&[v; 11]).unwrap());
    let zero = convexify(&[3.0, 1.0, 0.0]).unwrap();
    assert_eq!(proxy_recall(&[2], &[zero.clone()]).unwrap(), 1.0);
    let p = proxy_recall(&[4], &[h(-(0.8f64).ln())]).unwrap();
    assert!((p - 0.8).abs() < 1e-12);
    let p = proxy_recall(&[4, 4], &[h(-(0.9f64).ln()), h(-(0.8f64).ln())]).unwrap();
    assert!((p - 0.72).abs() < 1e-12);
    assert!(proxy_recall(&[3], &[zero.clone()]).is_err());
    assert!(proxy_recall(&[1, 1], &[zero]).is_err());
}

#[test]
fn u_matches_direct_evaluation() {
    let ds = gaussianish(400, 6, 1);
    let h = build_hierarchy(ds.clone(), &config(), 2).unwrap();
    let qs = crate::dataset::QuerySet::new((*gaussianish(7, 6, 3)).clone());
    let gt = compute_ground_truth(&ds, &qs, 10, Metric::SquaredEuclidean).unwrap();
    let u = compute_u(&h, &qs, &gt, 10).unwrap();
    for a in 0..qs.len() {
        // Exact level reproduces the ground truth.
        assert_eq!(u.distances(a, 2), gt.distances(a));
        assert_eq!(u.ids(a, 2), gt.row(a));
        for b in 0..3 {
            let mut direct: Vec<(f64, u32)> = gt
                .row(a)
                .iter()
                .map(|&j| (quantized_distance(h.level(b), qs.query(a), j as usize).unwrap(), j))
                .collect();
            direct.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            assert_eq!(u.distances(a, b), direct.iter().map(|x| x.0).collect::<Vec<_>>());
            assert_eq!(u.ids(a, b), direct.iter().map(|x| x.1).collect::<Vec<_>>());
        }
    }
    let u1 = compute_u(&h, &qs, &gt, 1).unwrap();
    assert_eq!(u1.distances(0, 2), &gt.distances(0)[..1]);
    assert!(compute_u(&h, &qs, &gt, 11).is_err());
}

#[test]
fn exact_level_ranks_are_perfect() {
    let ds = gaussianish(60, 4, 5);
    let cfg = HierarchyConfig {
        levels: vec![LevelSpec::Vq { centroids: 3, store: Store::Float32 }],
        ..config()
    };
    let h = build_hierarchy(ds.clone(), &cfg, 0).unwrap();
    let qs = crate::dataset::QuerySet::new((*gaussianish(3, 4, 6)).clone());
    let gt = compute_ground_truth(&ds, &qs, 60, Metric::SquaredEuclidean).unwrap();
    let rs = RankStats::compute(&h, &qs, &gt, 60).unwrap();
    for a in 0..3 {
        assert_eq!(rs.v(a, 1), (0..60).collect::<Vec<u32>>().as_slice());
    }
}

fn sweep_check(ds: Arc<Dataset>, cfg: &HierarchyConfig, seed: u64) {
    let h = build_hierarchy(ds.clone(), cfg, seed).unwrap();
    let qs = crate::dataset::QuerySet::new((*lattice(5, ds.dim(), seed + 50)).clone());
    let gt = compute_ground_truth(&ds, &qs, 10, Metric::SquaredEuclidean).unwrap();
    let rs = RankStats::compute(&h, &qs, &gt, 10).unwrap();
    for b in 0..h.num_levels() {
        for a in 0..qs.len() {
            let full = single_layer_topk(h.level(b), qs.query(a), h.n()).unwrap();
            let truth = gt.row(a);
            let mut found = 0;
            assert_eq!(rs.hits(a, b, 0), 0);
            for t in 1..=h.n() {
                if truth.contains(&full[t - 1]) {
                    found += 1;
                }
                assert_eq!(rs.hits(a, b, t), found, "level {b} query {a} depth {t}");
            }
        }
    }
}

#[test]
fn v_agrees_with_single_layer_sweep() {
    sweep_check(gaussianish(500, 6, 7), &config(), 1);
}

#[test]
fn v_agrees_with_single_layer_sweep_under_ties() {
    // Many duplicate points and equal distances at every level kind.
    let cfg = HierarchyConfig {
        levels: vec![
            LevelSpec::Pq { dims_per_block: 2, bits: 4 },
            LevelSpec::Vq { centroids: 20, store: Store::Int8 },
            LevelSpec::Pq { dims_per_block: 1, bits: 4 },
        ],
        ..config()
    };
    sweep_check(lattice(600, 4, 8), &cfg, 2);
}

#[test]
fn select_matches_recomputation() {
    let ds = gaussianish(300, 6, 9);
    let h = build_hierarchy(ds.clone(), &config(), 1).unwrap();
    let qs = crate::dataset::QuerySet::new((*gaussianish(10, 6, 10)).clone());
    let gt = compute_ground_truth(&ds, &qs, 10, Metric::SquaredEuclidean).unwrap();
    let rs = RankStats::compute(&h, &qs, &gt, 10).unwrap();
    let pick = [7, 2, 5];
    let sub = rs.select(&pick).unwrap();
    let direct = RankStats::compute(&h, &qs.select(&pick).unwrap(), &gt.select(&pick).unwrap(), 10).unwrap();
    assert_eq!(sub.loss_matrix(0.5).unwrap(), direct.loss_matrix(0.5).unwrap());
    assert!(rs.select(&[10]).is_err());
}

#[test]
fn persistence_round_trip() {
    let ds = gaussianish(300, 6, 11);
    let h = build_hierarchy(ds.clone(), &config(), 1).unwrap();
    let qs = crate::dataset::QuerySet::new((*gaussianish(10, 6, 12)).clone());
    let gt = compute_ground_truth(&ds, &qs, 10, Metric::SquaredEuclidean).unwrap();
    let lm = RankStats::compute(&h, &qs, &gt, 10).unwrap().loss_matrix(0.5).unwrap();
    assert_eq!(lm.hierarchy_hash(), h.content_hash());
    let dir = tempfile::tempdir().unwrap();
    lm.save(dir.path()).unwrap();
    let back = LossMatrix::load(dir.path()).unwrap();
    assert_eq!(back, lm);
    let other = tempfile::tempdir().unwrap();
    back.save(other.path()).unwrap();
    for name in ["manifest.json", "level1.loss.f64", "level3.loss.f64"] {
        assert_eq!(
            std::fs::read(dir.path().join(name)).unwrap(),
            std::fs::read(other.path().join(name)).unwrap()
        );
    }
    std::fs::write(dir.path().join("level2.loss.f64"), [0u8; 7]).unwrap();
    assert!(matches!(LossMatrix::load(dir.path()), Err(crate::Error::Format { .. })));
}

proptest! {
    #[test]
    fn loss_rows_and_hulls_are_well_formed(
        rows in proptest::collection::vec(
            proptest::collection::btree_set(0u32..200, 5), 1..12)
    ) {
        let v: Vec<u32> = rows.iter().flat_map(|s| s.iter().copied()).collect();
        let rs = single_stats(200, 5, v);
        let lm = rs.loss_matrix(DEFAULT_FLOOR).unwrap();
        let dense = lm.dense_row(0);
        prop_assert!(dense.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(dense[200], 0.0);
        let hull = lm.hull(0);
        let slopes = hull.slopes();
        prop_assert!(slopes.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        for (t, &raw) in dense.iter().enumerate() {
            prop_assert!(hull.value_at(t) <= raw + 1e-12);
        }
        prop_assert_eq!(hull.breakpoints()[0], (0, dense[0]));
        prop_assert_eq!(*hull.breakpoints().last().unwrap(), (200, 0.0));
        prop_assert_eq!(&convexify(&dense).unwrap(), hull);
    }
}
