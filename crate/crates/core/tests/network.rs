mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sodfeeder_core::network::{CorridorSpec, Segment, TravelTable, build_corridor};

use common::bellman_ford;

fn small_spec(seed: u64) -> CorridorSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.random_range(3..6) as f64 * 200.0;
    let b = rng.random_range(2..5) as f64 * 200.0;
    let c = rng.random_range(2..5) as f64 * 200.0;
    CorridorSpec {
        mainline_length: a + b + c,
        segment_lengths: [a, b, c],
        side_spacing: 200.0,
        side_depth: 200.0,
        side_node_spacing: 100.0,
        sides: 2,
        mainline_speed: rng.random_range(6.0..14.0),
        side_speed: rng.random_range(3.0..6.0),
    }
}

#[test]
fn shortest_paths_match_bellman_ford() {
    for seed in 0..5 {
        let net = build_corridor(&small_spec(seed)).unwrap();
        assert!(net.node_count() >= 40, "{} nodes", net.node_count());
        let table = TravelTable::new(&net);
        let (bt, bd) = bellman_ford(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for _ in 0..100 {
            let a = rng.random_range(0..net.node_count());
            let b = rng.random_range(0..net.node_count());
            assert!((table.time(a, b) - bt[a][b]).abs() < 1e-6, "time {a}->{b}");
            assert!((table.distance(a, b) - bd[a][b]).abs() < 1e-6, "distance {a}->{b}");
            let p = net.shortest_path(a, b).unwrap();
            assert_eq!(p.nodes.first(), Some(&a));
            assert_eq!(p.nodes.last(), Some(&b));
            let mut t = 0.0;
            for w in p.nodes.windows(2) {
                let e = net.out_edges(w[0]).find(|e| e.to == w[1]).expect("consecutive path nodes are adjacent");
                t += e.time;
            }
            assert!((t - bt[a][b]).abs() < 1e-6);
            assert_eq!(table.path(a, b), p.nodes);
        }
    }
}

#[test]
fn default_corridor_geometry() {
    let spec = CorridorSpec::default();
    let net = build_corridor(&spec).unwrap();
    let t = net.terminus();
    let far = net.mainline_node_near(5600.0);
    let table = TravelTable::new(&net);
    assert!((table.time(t, far) - 5600.0 / spec.mainline_speed).abs() < 1e-6);
    assert_eq!(net.segment(t), Segment::FixedRoute);
    assert_eq!(net.segment(net.mainline_node_near(2000.0)), Segment::Zone1);
    assert_eq!(net.segment(far), Segment::Zone2);
    assert!(net.nodes().iter().all(|n| net.distance_to_mainline(n.id) <= spec.side_depth + 1e-9));
}

#[test]
fn invalid_geometry_rejected() {
    let bad = CorridorSpec { segment_lengths: [1000.0, 1000.0, 1000.0], ..CorridorSpec::default() };
    assert!(build_corridor(&bad).is_err());
    let bad = CorridorSpec { mainline_speed: 0.0, ..CorridorSpec::default() };
    assert!(build_corridor(&bad).is_err());
    let net = build_corridor(&CorridorSpec::default()).unwrap();
    assert!(net.shortest_path(0, net.node_count()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn triangle_inequality_and_symmetry(seed in 0u64..1000, a in 0usize..30, b in 0usize..30, c in 0usize..30) {
        let net = build_corridor(&small_spec(seed)).unwrap();
        let table = TravelTable::new(&net);
        let n = net.node_count();
        let (a, b, c) = (a % n, b % n, c % n);
        prop_assert!(table.time(a, c) <= table.time(a, b) + table.time(b, c) + 1e-9);
        prop_assert!((table.time(a, b) - table.time(b, a)).abs() < 1e-9);
        prop_assert_eq!(table.time(a, a), 0.0);
    }
}
