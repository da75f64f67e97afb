use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::{compute_ground_truth, Dataset, ElementKind, Metric, QuerySet};
use crate::quantization::{build_hierarchy, quantized_distance, HierarchyConfig, LevelSpec, Store};

fn blobs(n: usize, d: usize, seed: u64) -> Arc<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f32>> = (0..12)
        .map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect())
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = &centers[rng.random_range(0..centers.len())];
        data.extend(c.iter().map(|&x| x + rng.random_range(-1.5f32..1.5)));
    }
    Arc::new(Dataset::from_vec(data, d, ElementKind::F32).unwrap())
}

fn queries(nq: usize, d: usize, seed: u64) -> QuerySet {
    let ds = blobs(nq, d, seed);
    QuerySet::new((*ds).clone())
}

fn deep_config() -> HierarchyConfig {
    HierarchyConfig {
        metric: Metric::SquaredEuclidean,
        levels: vec![
            LevelSpec::Pq { dims_per_block: 4, bits: 4 },
            LevelSpec::Vq { centroids: 16, store: Store::Int8 },
            LevelSpec::Pq { dims_per_block: 1, bits: 4 },
            LevelSpec::Vq { centroids: 64, store: Store::Int8 },
            LevelSpec::Pq { dims_per_block: 2, bits: 4 },
        ],
        keep_exact: true,
        seed: 0,
        vq_iters: 6,
        pq_iters: 4,
        max_train_rows: None,
    }
}

/// Direct transcription: score every surviving candidate, sort fully, keep the first `t_i`.
fn reference_search(h: &QuantizationHierarchy, t: &[usize], q: &[f32]) -> (Vec<u32>, Vec<Vec<u32>>) {
    let mut cand: Vec<u32> = (0..h.n() as u32).collect();
    let mut sets = Vec::new();
    for (level, &ti) in h.levels().iter().zip(t) {
        let mut scored: Vec<(f64, u32)> = cand
            .iter()
            .map(|&j| (quantized_distance(level, q, j as usize).unwrap(), j))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(ti);
        cand = scored.iter().map(|&(_, j)| j).collect();
        let mut sorted = cand.clone();
        sorted.sort_unstable();
        sets.push(sorted);
    }
    (cand, sets)
}

fn random_tuning(rng: &mut ChaCha8Rng, m: usize, n: usize, floor: usize) -> Tuning {
    let mut t: Vec<usize> = (0..m).map(|_| rng.random_range(floor..=n)).collect();
    t.sort_unstable_by(|a, b| b.cmp(a));
    Tuning::new(t).unwrap()
}

#[test]
fn tuning_validation() {
    assert!(Tuning::new(vec![]).is_err());
    assert!(Tuning::new(vec![3, 5]).is_err());
    let t = Tuning::new(vec![5, 5, 2]).unwrap();
    assert_eq!(t.to_string(), "(5,5,2)");
    assert_eq!(t.last(), 2);
}

#[test]
fn toy_two_level_walkthrough() {
    // Two 1-D clusters: values {0,1,2,3,4} and {20,21,22}.
    let values = [3.0, 20.0, 0.0, 21.0, 4.0, 1.0, 22.0, 2.0];
    let ds = Arc::new(Dataset::from_vec(values.to_vec(), 1, ElementKind::F32).unwrap());
    let cfg = HierarchyConfig {
        levels: vec![LevelSpec::Vq { centroids: 2, store: Store::Float32 }],
        ..deep_config()
    };
    let h = build_hierarchy(ds, &cfg, 0).unwrap();
    assert_eq!(h.num_levels(), 2);
    let q = [5.0f32];
    let t = Tuning::new(vec![4, 3]).unwrap();
    let r = quantized_search(&h, &t, &q, true).unwrap();
    let trace = r.trace.as_ref().unwrap();
    // The near bucket holds points 0,2,4,5,7; truncation keeps the four smallest indices.
    assert_eq!(trace.candidates[0], vec![0, 2, 4, 5]);
    // Exact re-ranking of values 3,0,4,1 around 5: 4, 3, 1. Point 7 (value 2) was truncated.
    assert_eq!(r.ids, vec![4, 0, 5]);
    assert_eq!(r.distances, vec![1.0, 4.0, 16.0]);
    assert_eq!(r.scored, vec![8, 4]);
    let (reference, sets) = reference_search(&h, t.as_slice(), &q);
    assert_eq!(r.ids, reference);
    assert_eq!(trace.candidates, sets);
}

#[test]
fn matches_reference_and_keeps_invariants() {
    let ds = blobs(1200, 8, 1);
    let h = build_hierarchy(ds, &deep_config(), 4).unwrap();
    let qs = queries(12, 8, 99);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..40 {
        let t = random_tuning(&mut rng, h.num_levels(), h.n(), 0);
        let q = qs.query(trial % qs.len());
        let r = quantized_search(&h, &t, q, true).unwrap();
        let (reference, sets) = reference_search(&h, t.as_slice(), q);
        assert_eq!(r.ids, reference, "tuning {t}");
        let trace = r.trace.as_ref().unwrap();
        assert_eq!(trace.candidates, sets);
        for (i, c) in trace.candidates.iter().enumerate() {
            assert_eq!(c.len(), t.as_slice()[i]);
            if i > 0 {
                let prev = &trace.candidates[i - 1];
                assert!(c.iter().all(|j| prev.binary_search(j).is_ok()));
            }
        }
        // Bytes: n*|X1| + sum t_i |X_{i+1}|, exactly.
        let fp = h.footprints();
        let mut expect = h.n() as u128 * fp[0] as u128;
        for i in 1..fp.len() {
            expect += t.as_slice()[i - 1] as u128 * fp[i] as u128;
        }
        assert_eq!(r.byte_numerator(&h), expect);
    }
}

#[test]
fn no_pruning_is_brute_force() {
    let ds = blobs(700, 8, 2);
    let h = build_hierarchy(ds.clone(), &deep_config(), 1).unwrap();
    let qs = queries(6, 8, 3);
    let gt = compute_ground_truth(&ds, &qs, 10, Metric::SquaredEuclidean).unwrap();
    let m = h.num_levels();
    for q in 0..qs.len() {
        let all = quantized_search(&h, &Tuning::new(vec![h.n(); m]).unwrap(), qs.query(q), false).unwrap();
        assert_eq!(&all.ids[..10], gt.row(q));
        let mut t = vec![h.n(); m];
        t[m - 1] = 10;
        let r = quantized_search(&h, &Tuning::new(t).unwrap(), qs.query(q), false).unwrap();
        assert_eq!(r.ids, gt.row(q));
        assert_eq!(r.distances, gt.distances(q));
    }
}

#[test]
fn search_errors() {
    let ds = blobs(700, 8, 2);
    let h = build_hierarchy(ds, &deep_config(), 1).unwrap();
    let q = vec![0.0; 8];
    assert!(quantized_search(&h, &Tuning::new(vec![5; 3]).unwrap(), &q, false).is_err());
    assert!(quantized_search(&h, &Tuning::new(vec![701; 6]).unwrap(), &q, false).is_err());
    assert!(quantized_search(&h, &Tuning::new(vec![5; 6]).unwrap(), &q[..4], false).is_err());
}

#[test]
fn single_layer_topk_cases() {
    let ds = blobs(700, 8, 2);
    let h = build_hierarchy(ds, &deep_config(), 1).unwrap();
    let q = vec![0.5; 8];
    for level in h.levels() {
        let all = single_layer_topk(level, &q, h.n()).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..h.n() as u32).collect::<Vec<_>>());
        assert!(single_layer_topk(level, &q, 0).unwrap().is_empty());
        assert!(single_layer_topk(level, &q, h.n() + 1).is_err());
        // Full-sort oracle.
        let mut scored: Vec<(f64, u32)> = (0..h.n())
            .map(|j| (quantized_distance(level, &q, j).unwrap(), j as u32))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for depth in [1, 3, 37, 400] {
            let expect: Vec<u32> = scored[..depth].iter().map(|&(_, j)| j).collect();
            assert_eq!(single_layer_topk(level, &q, depth).unwrap(), expect);
        }
    }
}

#[test]
fn single_layer_topk_six_point_pq() {
    let values: Vec<f32> = (0..6 * 4).map(|i| ((i * 37) % 11) as f32).collect();
    let ds = Arc::new(Dataset::from_vec(values, 4, ElementKind::F32).unwrap());
    let cfg = HierarchyConfig {
        levels: vec![LevelSpec::Pq { dims_per_block: 1, bits: 4 }],
        keep_exact: false,
        ..deep_config()
    };
    // 16 centers per block need 16 training rows; six points are too few.
    assert!(build_hierarchy(ds.clone(), &cfg, 0).is_err());
    let many: Vec<f32> = (0..16 * 4).map(|i| ((i * 37) % 11) as f32).collect();
    let ds = Arc::new(Dataset::from_vec(many, 4, ElementKind::F32).unwrap());
    let h = build_hierarchy(ds.clone(), &cfg, 0).unwrap();
    let q = [1.0, 2.0, 3.0, 4.0];
    let level = h.level(0);
    let mut scored: Vec<(f64, u32)> = (0..16)
        .map(|j| (quantized_distance(level, &q, j).unwrap(), j as u32))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let expect: Vec<u32> = scored[..3].iter().map(|&(_, j)| j).collect();
    assert_eq!(single_layer_topk(level, &q, 3).unwrap(), expect);
}

#[test]
fn recall_examples() {
    let gt = crate::dataset::GroundTruth::new(10, (0..20).collect(), vec![0.0; 20]).unwrap();
    let exact: Vec<Vec<u32>> = vec![(0..10).collect(), (10..20).collect()];
    let r = evaluate_recall(&exact, &gt, 10).unwrap();
    assert_eq!(r.per_query, vec![1.0, 1.0]);
    assert_eq!(r.geometric_mean, 1.0);
    let disjoint: Vec<Vec<u32>> = vec![(100..110).collect(), (200..210).collect()];
    let r = evaluate_recall(&disjoint, &gt, 10).unwrap();
    assert_eq!(r.per_query, vec![0.0, 0.0]);
    assert!((r.geometric_mean - 0.05).abs() < 1e-12);
    let half: Vec<Vec<u32>> = vec![(5..15).collect(), (15..25).collect()];
    let r = evaluate_recall(&half, &gt, 10).unwrap();
    assert_eq!(r.per_query, vec![0.5, 0.5]);
    assert!((r.mean - 0.5).abs() < 1e-15);
    assert!((r.geometric_mean - 0.5).abs() < 1e-12);
    assert!(evaluate_recall(&half, &gt, 11).is_err());
    assert!(evaluate_recall(&half[..1], &gt, 10).is_err());
}

#[test]
fn bench_accounting() {
    let ds = blobs(900, 8, 6);
    let h = build_hierarchy(ds.clone(), &deep_config(), 2).unwrap();
    let qs = queries(20, 8, 7);
    let gt = compute_ground_truth(&ds, &qs, 10, Metric::SquaredEuclidean).unwrap();
    let opts = BenchOptions { threads: 1, repeats: 1, warmup: false };
    let zero = Tuning::new(vec![0; h.num_levels()]).unwrap();
    assert!(bench(&h, &[zero], &qs, &gt, 10, opts).is_err());
    let small = Tuning::new(vec![400, 300, 200, 100, 50, 10]).unwrap();
    let large = Tuning::new(vec![800, 300, 250, 100, 60, 20]).unwrap();
    let rows = bench(&h, &[small.clone(), large], &qs, &gt, 10, opts).unwrap();
    let fp = h.footprints();
    let expect = fp[0] as f64
        + (1..fp.len()).map(|i| small.as_slice()[i - 1] as f64 / 900.0 * fp[i] as f64).sum::<f64>();
    assert!((rows[0].bytes_per_query - expect).abs() <= 1e-9 * expect);
    assert!(rows[1].bytes_per_query >= rows[0].bytes_per_query);
    let x = h.dataset_bytes() as f64;
    assert!((rows[0].modeled_cost * x - rows[0].bytes_per_query).abs() <= 1e-9 * expect);
    let mut csv = Vec::new();
    write_bench_csv(&mut csv, &rows).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("tuning_id,t_1,t_2,t_3,t_4,t_5,t_6,modeled_cost,bytes_per_query,recall_at_k,qps"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn deeper_candidates_do_not_hurt_on_average() {
    let ds = blobs(1500, 8, 8);
    let h = build_hierarchy(ds.clone(), &deep_config(), 3).unwrap();
    let qs = queries(40, 8, 9);
    let gt = compute_ground_truth(&ds, &qs, 10, Metric::SquaredEuclidean).unwrap();
    // Sweep t_3 with the rest fixed; least-squares slope of mean hits must be non-negative.
    let xs: Vec<f64> = (0..8).map(|s| 100.0 + 50.0 * s as f64).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&t3| {
            let t = Tuning::new(vec![600, 500, t3 as usize, 80, 40, 10]).unwrap();
            let ids: Vec<Vec<u32>> = (0..qs.len())
                .map(|q| quantized_search(&h, &t, qs.query(q), false).unwrap().ids)
                .collect();
            evaluate_recall(&ids, &gt, 10).unwrap().mean
        })
        .collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>();
    assert!(slope >= 0.0, "{ys:?}");
}
