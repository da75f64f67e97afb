use anntune_demo::Demo;

fn demo() -> Demo {
    Demo::new(2000, 8, 200, 3).unwrap()
}

#[test]
fn curves_cover_every_level() {
    let d = demo();
    let kinds: Vec<&str> = d.curves().iter().map(|c| c.kind).collect();
    assert_eq!(kinds, ["vq", "pq", "exact"]);
    for c in d.curves() {
        assert_eq!(c.steps[0].0, 0);
        assert!(c.steps.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 > w[1].1));
        assert_eq!(c.hull.first().unwrap().0, 0);
        assert_eq!(c.hull.last().unwrap().0, 2000);
    }
}

#[test]
fn tuning_respects_budget_and_measures_bytes_exactly() {
    let d = demo();
    let frontier = d.frontier();
    assert!(frontier.len() >= 2);
    let target = &frontier[frontier.len() / 2];
    let m = d.tune(target.modeled_cost).unwrap();
    assert!(m.result.modeled_cost <= target.modeled_cost);
    assert!((m.bytes_per_query - m.modeled_bytes).abs() <= 1e-9 * m.modeled_bytes);
    assert!((0.0..=1.0).contains(&m.recall));
    let all = d.tune(10.0).unwrap();
    assert!(all.recall >= m.recall);
    assert!(d.tune(0.0).is_err());
}

#[test]
fn batched_cost_reduces_to_single_query_cost() {
    let d = demo();
    let t = d.frontier()[1].tuning.as_slice().to_vec();
    let single = d.frontier()[1].modeled_cost;
    assert!((d.batched_cost(&t, 1, 4.0).unwrap() - single).abs() < 1e-12);
    assert!(d.batched_cost(&t, 16, 4.0).unwrap() >= single);
    assert!(d.batched_cost(&[5, 10, 1], 1, 1.0).is_err());
}
