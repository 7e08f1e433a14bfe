mod common;

use proptest::prelude::*;
use subtrack::evaluation::{
    aggregate, cluster_memberships, cohen_kappa, cohen_kappa_pairs, hausdorff, internal_density,
    metrics_csv, run_outcomes, BenchCell, Method, ScenarioId, METRICS_CSV_HEADER,
};
use subtrack::netdata::GraphSequence;

fn point_set() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::btree_set(1usize..200, 0..6).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hausdorff_matches_exhaustive(a in point_set(), b in point_set()) {
        let h = hausdorff(&a, &b, 200);
        prop_assert_eq!(h.value, common::hausdorff_exhaustive(&a, &b, 200));
        prop_assert_eq!(h.value, hausdorff(&b, &a, 200).value);
    }

    #[test]
    fn kappa_is_symmetric_and_bounded(
        x in proptest::collection::vec(any::<bool>(), 1..40),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let y: Vec<bool> = x.iter().map(|_| rng.random::<bool>()).collect();
        let k1 = cohen_kappa(&x, &y);
        let k2 = cohen_kappa(&y, &x);
        prop_assert_eq!(k1, k2);
        if let Some(k) = k1 {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
        }
    }
}

#[test]
fn internal_density_hand_example() {
    let g = GraphSequence::new(4, vec![vec![(0, 1), (2, 3), (0, 2)], vec![(0, 1)]]).unwrap();
    let acc = internal_density(&g, &[0, 0, 1, 1], 1, 3).unwrap();
    assert_eq!(acc, vec![1.0, 0.5]);
}

#[test]
fn kappa_hand_example() {
    // pair (0, 1) compared through node 2 over four layers
    let g =
        GraphSequence::new(3, vec![vec![(0, 2), (1, 2)], vec![(0, 2)], vec![], vec![]]).unwrap();
    let summary = cohen_kappa_pairs(&g, &[0, 0, 1], 1, 5).unwrap();
    assert_eq!(summary[0].values, vec![0.5]);
    assert_eq!(summary[0].skipped, 0);
    assert!(summary[1].values.is_empty());
    assert_eq!(
        cohen_kappa(&[true, true, false, false], &[true, false, false, false]),
        Some(0.5)
    );
}

#[test]
fn kappa_identical_neighborhoods_is_one() {
    let g = GraphSequence::new(
        5,
        vec![vec![(0, 2), (1, 2), (0, 4), (1, 4)], vec![(0, 3), (1, 3)]],
    )
    .unwrap();
    let s = cohen_kappa_pairs(&g, &[0, 0, 1, 1, 1], 1, 3).unwrap();
    assert_eq!(s[0].values, vec![1.0]);
}

#[test]
fn kappa_near_zero_for_independent_vectors() {
    use rand::Rng;
    for seed in 0..20 {
        let mut rng = common::rng(seed);
        let x: Vec<bool> = (0..200).map(|_| rng.random::<bool>()).collect();
        let y: Vec<bool> = (0..200).map(|_| rng.random::<bool>()).collect();
        let k = cohen_kappa(&x, &y).unwrap();
        assert!(k.abs() < 0.2, "seed {seed}: {k}");
    }
}

#[test]
fn internal_density_invariant_to_relabeling_within_communities() {
    let g = GraphSequence::new(
        6,
        vec![vec![(0, 1), (1, 2), (3, 4), (0, 5)], vec![(0, 2), (4, 5)]],
    )
    .unwrap();
    let labels = [0, 0, 0, 1, 1, 1];
    let base = internal_density(&g, &labels, 1, 3).unwrap();
    // swap nodes 0 and 2, both in community 0
    let perm = [2, 1, 0, 3, 4, 5];
    let layers = g
        .layers()
        .iter()
        .map(|l| {
            l.edges()
                .iter()
                .map(|&(i, j)| (perm[i as usize], perm[j as usize]))
                .collect()
        })
        .collect();
    let h = GraphSequence::new(6, layers).unwrap();
    assert_eq!(internal_density(&h, &labels, 1, 3).unwrap(), base);
}

#[test]
fn hausdorff_triangle_inequality() {
    use rand::Rng;
    let mut rng = common::rng(3);
    for _ in 0..500 {
        let mut draw = || -> Vec<usize> {
            let k = rng.random_range(1..5);
            (0..k).map(|_| rng.random_range(1..100)).collect()
        };
        let (a, b, c) = (draw(), draw(), draw());
        let ab = hausdorff(&a, &b, 100).value;
        let bc = hausdorff(&b, &c, 100).value;
        let ac = hausdorff(&a, &c, 100).value;
        assert!(ac <= ab + bc);
    }
}

#[test]
fn clustering_recovers_planted_blocks() {
    let labels: Vec<usize> = (0..30).map(|i| i / 10).collect();
    let basis = common::block_basis(&labels, 3);
    let found = cluster_memberships(&basis, 3, 7).unwrap();
    for i in 0..30 {
        for j in 0..30 {
            assert_eq!(labels[i] == labels[j], found[i] == found[j]);
        }
    }
    assert_eq!(found, cluster_memberships(&basis, 3, 7).unwrap());
}

#[test]
fn clustering_recovers_scenario_memberships() {
    let (truth, _) = subtrack::generator::build_scenario(&subtrack::generator::ScenarioParams {
        n: 60,
        t_len: 100,
        s: 0.1,
        q: 0.5,
        rho: 1.0,
        seed: 8,
    })
    .unwrap();
    let labels = &truth.labels()[0];
    let found = cluster_memberships(&truth.segment_basis(0), 3, 1).unwrap();
    for i in 0..60 {
        for j in 0..60 {
            assert_eq!(labels[i] == labels[j], found[i] == found[j]);
        }
    }
}

#[test]
fn aggregated_rows_match_outcomes() {
    let cells = vec![BenchCell {
        scenario: ScenarioId::I,
        n: 40,
        t_len: 120,
        param: 0.1,
    }];
    let outcomes = run_outcomes(&cells, 3, 9);
    let rows = aggregate(&cells[0], &outcomes[0]);
    assert_eq!(rows.len(), 2);
    let ok: Vec<_> = outcomes[0].iter().filter_map(|o| o.as_ref().ok()).collect();
    for row in &rows {
        let method = row.method;
        let mean = ok.iter().map(|o| o.hausdorff(method)).sum::<f64>() / ok.len() as f64;
        assert!((row.haus_mean - mean).abs() < 1e-12);
        assert!(row.count_se >= 0.0 && row.haus_se >= 0.0);
        assert_eq!(row.reps + row.failures, 3);
    }
    assert_eq!(rows[0].method, Method::Coarse);
    let csv = metrics_csv(&rows);
    assert!(csv.starts_with(METRICS_CSV_HEADER));
    assert_eq!(csv.lines().count(), 3);
}
