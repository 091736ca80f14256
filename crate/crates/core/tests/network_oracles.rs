use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracelens_core::geo::LocalFrame;
use tracelens_core::network::{LinkId, LinkProjection, LinkSpec, NodeId, RoadNetwork, Router};
use tracelens_core::Point;

/// Random planar-ish graph: nodes scattered over a few km, links between
/// random distinct pairs, some one-way, some with a bend.
fn random_network(seed: u64, n_nodes: usize, n_links: usize) -> RoadNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = LocalFrame::new(Point { lat: 39.0, lon: -76.9 });
    let nodes: Vec<(NodeId, Point)> = (0..n_nodes)
        .map(|i| {
            (
                NodeId(i as u64 + 1),
                frame.to_latlon(rng.gen_range(0.0..3000.0), rng.gen_range(0.0..3000.0)),
            )
        })
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut links = Vec::new();
    while links.len() < n_links {
        let a = rng.gen_range(0..n_nodes);
        let b = rng.gen_range(0..n_nodes);
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        let (pa, pb) = (nodes[a].1, nodes[b].1);
        let mut geometry = vec![pa];
        if rng.gen_bool(0.3) {
            let m = pa.midpoint(pb);
            geometry.push(Point {
                lat: m.lat + rng.gen_range(-0.002..0.002),
                lon: m.lon + rng.gen_range(-0.002..0.002),
            });
        }
        geometry.push(pb);
        links.push(LinkSpec {
            id: LinkId(links.len() as u64 + 1),
            from: nodes[a].0,
            to: nodes[b].0,
            geometry,
            oneway: rng.gen_bool(0.3),
        });
    }
    RoadNetwork::new(nodes, links).unwrap()
}

fn random_projection(net: &RoadNetwork, rng: &mut ChaCha8Rng) -> LinkProjection {
    let l = &net.links()[rng.gen_range(0..net.n_links())];
    let off = rng.gen_range(0.0..=1.0) * l.length_m();
    net.project(l.point_at(off), l)
}

/// Bellman-Ford over directed link edges, seeded from both ends of `a`'s
/// link as the router does.
fn bellman_ford(net: &RoadNetwork, a: &LinkProjection, b: &LinkProjection) -> Option<f64> {
    let ids = net.node_ids();
    let idx = |n: NodeId| ids.binary_search(&n).unwrap();
    let mut dist = vec![f64::INFINITY; ids.len()];
    let la = net.link(a.link).unwrap();
    dist[idx(la.to)] = la.length_m() - a.offset_m;
    if !la.oneway {
        dist[idx(la.from)] = dist[idx(la.from)].min(a.offset_m);
    }
    let mut edges = Vec::new();
    for l in net.links() {
        edges.push((idx(l.from), idx(l.to), l.length_m()));
        if !l.oneway {
            edges.push((idx(l.to), idx(l.from), l.length_m()));
        }
    }
    for _ in 0..ids.len() {
        let mut changed = false;
        for &(u, v, w) in &edges {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let lb = net.link(b.link).unwrap();
    let mut best = f64::INFINITY;
    if a.link == b.link && (b.offset_m >= a.offset_m || !lb.oneway) {
        best = (b.offset_m - a.offset_m).abs();
    }
    best = best.min(dist[idx(lb.from)] + b.offset_m);
    if !lb.oneway {
        best = best.min(dist[idx(lb.to)] + lb.length_m() - b.offset_m);
    }
    best.is_finite().then_some(best)
}

#[test]
fn dijkstra_matches_bellman_ford() {
    for seed in 0..40 {
        let net = random_network(seed, 25, 45);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let mut router = Router::new(&net);
        for _ in 0..25 {
            let a = random_projection(&net, &mut rng);
            let b = random_projection(&net, &mut rng);
            let got = router.distances(&a, &[b], f64::INFINITY)[0];
            let want = bellman_ford(&net, &a, &b);
            match (got, want) {
                (Some(g), Some(w)) => assert!((g - w).abs() <= 1e-6 * w.max(1.0), "seed {seed}: {g} vs {w}"),
                (None, None) => {}
                other => panic!("seed {seed}: reachability differs {other:?}"),
            }
            if let Some(r) = net.shortest_path(&a, &b) {
                assert!((r.distance_m - want.unwrap()).abs() <= 1e-6 * r.distance_m.max(1.0));
            }
        }
    }
}

#[test]
fn nearest_links_equals_brute_force() {
    for seed in 0..20 {
        let net = random_network(seed, 30, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
        let frame = LocalFrame::new(Point { lat: 39.0, lon: -76.9 });
        for _ in 0..100 {
            let p = frame.to_latlon(rng.gen_range(-200.0..3200.0), rng.gen_range(-200.0..3200.0));
            let radius = rng.gen_range(10.0..600.0);
            let k = rng.gen_range(1..10);
            let mut brute: Vec<LinkProjection> = net
                .links()
                .iter()
                .map(|l| net.project(p, l))
                .filter(|pr| pr.distance_m <= radius)
                .collect();
            brute.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then(a.link.cmp(&b.link)));
            brute.truncate(k);
            let got = net.nearest_links(p, radius, k);
            assert_eq!(got, brute, "seed {seed}, radius {radius}, k {k}");
        }
    }
}

#[test]
fn shortest_path_triangle_inequality() {
    for seed in 0..20 {
        let net = random_network(seed, 20, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 5);
        let mut router = Router::new(&net);
        for _ in 0..50 {
            let (a, b, c) = (
                random_projection(&net, &mut rng),
                random_projection(&net, &mut rng),
                random_projection(&net, &mut rng),
            );
            let ab = router.distances(&a, &[b], f64::INFINITY)[0];
            let bc = router.distances(&b, &[c], f64::INFINITY)[0];
            let ac = router.distances(&a, &[c], f64::INFINITY)[0];
            if let (Some(ab), Some(bc)) = (ab, bc) {
                let ac = ac.expect("c reachable through b");
                assert!(ac <= ab + bc + 1e-6, "{ac} > {ab} + {bc}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_way_routes_are_symmetric(seed in 0u64..10_000, i in 0usize..1000, j in 0usize..1000) {
        let mut net_rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = LocalFrame::new(Point { lat: 39.0, lon: -76.9 });
        // All links two-way.
        let n = 12;
        let nodes: Vec<(NodeId, Point)> = (0..n)
            .map(|k| (NodeId(k as u64), frame.to_latlon(net_rng.gen_range(0.0..2000.0), net_rng.gen_range(0.0..2000.0))))
            .collect();
        let mut links = Vec::new();
        for k in 0..n {
            for m in [k + 1, k + 3] {
                if m < n {
                    links.push(LinkSpec {
                        id: LinkId(links.len() as u64),
                        from: nodes[k].0,
                        to: nodes[m].0,
                        geometry: vec![nodes[k].1, nodes[m].1],
                        oneway: false,
                    });
                }
            }
        }
        let net = RoadNetwork::new(nodes, links).unwrap();
        let la = &net.links()[i % net.n_links()];
        let lb = &net.links()[j % net.n_links()];
        let a = net.project(la.point_at(la.length_m() * 0.3), la);
        let b = net.project(lb.point_at(lb.length_m() * 0.6), lb);
        let ab = net.shortest_path(&a, &b).unwrap().distance_m;
        let ba = net.shortest_path(&b, &a).unwrap().distance_m;
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
    }
}
