use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracelens_core::demand::{aggregate, build_od_matrix, estimate_penetration, expand_matrix};
use tracelens_core::enforcement::{detect_wim_evasion, speed_grid, SpeedThreshold};
use tracelens_core::geo::LocalFrame;
use tracelens_core::isochrone::{alpha_shape, build_isochrones, filter_and_hull, IsochroneSpec};
use tracelens_core::mapmatch::{match_batch, HmmParams};
use tracelens_core::synth::{
    matched_fleet, radial_world, speed_world, transit_world, wim_world, zone_world, FleetSpec, GridWorld,
    GridWorldSpec, RadialSpec, SpeedWorldSpec, TransitWorldSpec, WimClassSpec, WimWorldSpec, ZoneWorldSpec,
};
use tracelens_core::transit::{cluster_od_pairs, coverage_score, demand_vs_transit_report, TransitNetwork, TransitRoute};
use tracelens_core::{haversine, point_in_polygon, ClusterParams, Point, Trip, WeightClass};

// ---------------------------------------------------------------- hulls

fn blob(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = LocalFrame::new(Point { lat: 39.2, lon: -76.6 });
    (0..n)
        .map(|_| {
            let r = 2000.0 * rng.gen::<f64>().sqrt();
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            f.to_latlon(r * t.cos(), r * t.sin() * 0.6)
        })
        .collect()
}

fn proper_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o = |p: Point, q: Point, r: Point| (q.lon - p.lon) * (r.lat - p.lat) - (q.lat - p.lat) * (r.lon - p.lon);
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn assert_simple_closed(ring: &[Point]) {
    assert!(ring.len() >= 4);
    assert_eq!(ring[0], ring[ring.len() - 1]);
    let n = ring.len() - 1;
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            assert!(!proper_cross(ring[i], ring[i + 1], ring[j], ring[j + 1]), "edges {i} and {j} cross");
        }
    }
    let mut verts: Vec<_> = ring[..n].iter().map(|p| (p.lat.to_bits(), p.lon.to_bits())).collect();
    verts.sort();
    verts.dedup();
    assert_eq!(verts.len(), n, "repeated vertex");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hulls_are_simple_and_hold_survivors(seed in 0u64..10_000, n in 40usize..400) {
        let pts = blob(seed, n);
        let iso = filter_and_hull(&pts, &ClusterParams::new(600.0, 5).unwrap()).unwrap();
        if let Some(b) = &iso.boundary {
            assert_simple_closed(b.exterior());
            for p in &iso.survivors {
                prop_assert!(point_in_polygon(*p, b) || iso.discarded_fraction > 0.0);
            }
        }
    }

    #[test]
    fn far_outliers_never_move_the_hull(seed in 0u64..10_000, k in 1usize..5) {
        let pts = blob(seed, 300);
        let p = ClusterParams::new(600.0, 5).unwrap();
        let base = filter_and_hull(&pts, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = LocalFrame::new(Point { lat: 39.2, lon: -76.6 });
        let mut with = pts.clone();
        for _ in 0..k {
            // Diameter is about 4 km; scatter beyond 12 km.
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = rng.gen_range(13_000.0..40_000.0);
            with.insert(rng.gen_range(0..=with.len()), f.to_latlon(r * t.cos(), r * t.sin()));
        }
        let moved = filter_and_hull(&with, &p).unwrap();
        prop_assert_eq!(
            base.boundary.as_ref().map(|b| b.exterior().to_vec()),
            moved.boundary.as_ref().map(|b| b.exterior().to_vec())
        );
    }
}

#[test]
fn hulls_are_deterministic() {
    let pts = blob(3, 500);
    let p = ClusterParams::new(500.0, 4).unwrap();
    assert_eq!(filter_and_hull(&pts, &p).unwrap(), filter_and_hull(&pts, &p).unwrap());
}

#[test]
fn cross_shaped_cloud_gets_a_non_convex_hull() {
    let f = LocalFrame::new(Point { lat: 39.2, lon: -76.6 });
    let mut pts = Vec::new();
    for i in -40..=40 {
        for j in -4..=4 {
            let (a, b) = (i as f64 * 50.0, j as f64 * 50.0);
            pts.push(f.to_latlon(a, b));
            pts.push(f.to_latlon(b, a));
        }
    }
    let shape = alpha_shape(&pts, 300.0);
    let hull = shape.boundary.unwrap();
    // The notch between two arms lies inside the convex hull but not the shape.
    assert!(!point_in_polygon(f.to_latlon(1200.0, 1200.0), &hull));
    assert!(point_in_polygon(f.to_latlon(1200.0, 0.0), &hull));
    assert!(point_in_polygon(f.to_latlon(0.0, -1500.0), &hull));
}

#[test]
fn radial_world_hull_radius_tracks_speed() {
    let spec = RadialSpec::default();
    let (origin, trips, truth) = radial_world(&spec, 4).unwrap();
    let iso_spec = IsochroneSpec::with_defaults(origin);
    let set = build_isochrones(&trips, &iso_spec).unwrap();
    for iso in &set.isochrones {
        if iso.threshold_min > 20.0 {
            continue;
        }
        let b = iso.boundary.as_ref().expect("hull");
        let r = b.exterior().iter().map(|p| haversine(*p, truth.center)).fold(0.0, f64::max);
        let want = truth.speed_mps * iso.threshold_min * 60.0;
        assert!((r - want).abs() <= 0.15 * want, "t = {}: radius {r} vs {want}", iso.threshold_min);
    }
}

// ---------------------------------------------------------------- demand

#[test]
fn od_conservation_and_hierarchy() {
    let (h, trips, truth) = zone_world(&ZoneWorldSpec { trips: 3000, ..Default::default() }, 12).unwrap();
    let taz = build_od_matrix(&trips, &h.taz);
    let county = build_od_matrix(&trips, &h.county);
    let state = build_od_matrix(&trips, &h.state);
    for m in [&taz, &county, &state] {
        assert_eq!(m.total() + m.unassigned, 3000);
        assert_eq!(m.unassigned, truth.unassigned);
    }
    let c2s = aggregate(&county, &h.county.parent_map(&h.state).unwrap(), &h.state).unwrap();
    assert_eq!(c2s.counts, state.counts);
    assert_eq!(c2s.unassigned, state.unassigned);
    let t2c = aggregate(&taz, &h.taz.parent_map(&h.county).unwrap(), &h.county).unwrap();
    assert_eq!(t2c.counts, county.counts);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn expansion_commutes_with_aggregation(seed in 0u64..1000, factor in 1u32..200) {
        let (h, trips, _) = zone_world(&ZoneWorldSpec { trips: 300, ..Default::default() }, seed).unwrap();
        let county = build_od_matrix(&trips, &h.county);
        let parents = h.county.parent_map(&h.state).unwrap();
        let f = factor as f64;
        let a = expand_matrix(&aggregate(&county, &parents, &h.state).unwrap(), f).unwrap();
        let b = aggregate(&expand_matrix(&county, f).unwrap(), &parents, &h.state).unwrap();
        prop_assert_eq!(a.factor(), b.factor());
        prop_assert_eq!(a.counts, b.counts);
    }
}

#[test]
fn penetration_estimate_tracks_sampling_rate() {
    let grid = GridWorldSpec::default();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in [0.01, 0.02, 0.05] {
        let spec = FleetSpec {
            sampling_p: p,
            stations: 10,
            hours: 40,
            count_min: 300,
            count_max: 900,
            ..Default::default()
        };
        let w = matched_fleet(&grid, &spec, 77).unwrap();
        let est = estimate_penetration(&w.matched, &w.atr, &w.grid.net).unwrap();
        assert_eq!(est.station_hours, 400);
        sxy += p * est.mean_pr;
        sxx += p * p;
    }
    let slope = sxy / sxx;
    assert!((0.95..=1.05).contains(&slope), "slope {slope}");
}

// ---------------------------------------------------------------- enforcement

fn small_wim() -> WimWorldSpec {
    WimWorldSpec {
        classes: vec![
            WimClassSpec {
                weight_class: WeightClass::W0_14,
                relevant: 300,
                circumvent_pct: 4.0,
            },
            WimClassSpec {
                weight_class: WeightClass::W26Plus,
                relevant: 150,
                circumvent_pct: 2.0,
            },
        ],
        irrelevant: 40,
        ..Default::default()
    }
}

#[test]
fn relevant_splits_into_compliant_and_circumventing() {
    let (site, trips, _) = wim_world(&small_wim(), 2).unwrap();
    let r = detect_wim_evasion(&trips, &site);
    for row in &r.rows {
        assert_eq!(row.relevant, row.compliant + row.circumventing);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn evasion_report_ignores_trip_order(seed in 0u64..1000) {
        let (site, mut trips, _) = wim_world(&small_wim(), 2).unwrap();
        let base = detect_wim_evasion(&trips, &site);
        trips.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(detect_wim_evasion(&trips, &site), base);
    }

    #[test]
    fn speed_grid_conserves_segments_and_is_monotone(seed in 0u64..1000, lo in 5.0f64..20.0, step in 0.0f64..15.0) {
        let g = GridWorld::new(&GridWorldSpec::default()).unwrap();
        let (trips, truth) = speed_world(&g, &SpeedWorldSpec { trips: 30, ..Default::default() }, seed).unwrap();
        let segs: u64 = trips.iter().map(|t| t.waypoints().len() as u64 - 1).sum();
        let a = speed_grid(&trips, &truth.grid, SpeedThreshold::Absolute(lo)).unwrap();
        let b = speed_grid(&trips, &truth.grid, SpeedThreshold::Absolute(lo + step)).unwrap();
        prop_assert_eq!(a.segments(), segs);
        for (x, y) in a.cells.iter().zip(&b.cells) {
            prop_assert!(y.high <= x.high);
        }
    }
}

#[test]
fn planted_speeding_row_tops_the_ratio_ranking() {
    let g = GridWorld::new(&GridWorldSpec::default()).unwrap();
    let (trips, truth) = speed_world(&g, &SpeedWorldSpec::default(), 6).unwrap();
    let sg = speed_grid(&trips, &truth.grid, SpeedThreshold::Absolute(1.5 * truth.ambient_mps)).unwrap();
    let mut ranked: Vec<(f64, usize)> = (0..sg.grid.rows)
        .flat_map(|r| (0..sg.grid.cols).map(move |c| (r, c)))
        .filter_map(|(r, c)| sg.high_ratio(r, c).map(|x| (x, r)))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (ratio, row) in ranked.iter().take(5) {
        assert_eq!(*row, truth.hot_row, "ratio {ratio}");
    }
}

// ---------------------------------------------------------------- transit

fn line(f: &LocalFrame<f64>, pts: &[(f64, f64)]) -> Vec<Point> {
    pts.iter().map(|(x, y)| f.to_latlon(*x, *y)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn extra_route_never_lowers_coverage(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = LocalFrame::new(Point { lat: 39.0, lon: -76.5 });
        let rp = |rng: &mut ChaCha8Rng| (rng.gen_range(0.0..5000.0), rng.gen_range(0.0..5000.0));
        let trip: Vec<Vec<Point>> = (0..3).map(|_| line(&f, &[rp(&mut rng), rp(&mut rng), rp(&mut rng)])).collect();
        let r1 = TransitRoute { route_id: "a".into(), name: "A".into(), line: line(&f, &[rp(&mut rng), rp(&mut rng)]) };
        let r2 = TransitRoute { route_id: "b".into(), name: "B".into(), line: line(&f, &[rp(&mut rng), rp(&mut rng)]) };
        let one = TransitNetwork::new(vec![r1.clone()]).unwrap();
        let two = TransitNetwork::new(vec![r1, r2]).unwrap();
        let a = coverage_score(&trip, &one, 400.0).unwrap();
        let b = coverage_score(&trip, &two, 400.0).unwrap();
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn densifying_barely_changes_coverage(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = LocalFrame::new(Point { lat: 39.0, lon: -76.5 });
        let rp = |rng: &mut ChaCha8Rng| (rng.gen_range(0.0..5000.0), rng.gen_range(0.0..5000.0));
        let coarse: Vec<Point> = line(&f, &[rp(&mut rng), rp(&mut rng), rp(&mut rng), rp(&mut rng)]);
        let mut fine = vec![coarse[0]];
        for w in coarse.windows(2) {
            fine.push(w[0].midpoint(w[1]));
            fine.push(w[1]);
        }
        let tn = TransitNetwork::new(vec![TransitRoute {
            route_id: "a".into(),
            name: "A".into(),
            line: line(&f, &[rp(&mut rng), rp(&mut rng), rp(&mut rng)]),
        }])
        .unwrap();
        let a = coverage_score(&[coarse], &tn, 400.0).unwrap();
        let b = coverage_score(&[fine], &tn, 400.0).unwrap();
        prop_assert!((a - b).abs() < 0.01, "{a} vs {b}");
    }
}

#[test]
fn uncovered_commute_is_flagged_first() {
    let g = GridWorld::new(&GridWorldSpec::default()).unwrap();
    let (tn, planted, truth) = transit_world(&g, &TransitWorldSpec::default(), 5).unwrap();
    let trips: Vec<Trip> = planted.iter().map(|p| p.trip.clone()).collect();
    let (outcomes, _) = match_batch(&trips, &g.net, &HmmParams::default(), 2).unwrap();
    let labels = cluster_od_pairs(&trips, 5, 5000.0, 1500.0).unwrap();
    let matched: Vec<_> = outcomes.iter().map(|o| o.matched()).collect();
    let (report, _) = demand_vs_transit_report(&labels, &matched, &g.net, &tn, 400.0, 0.5).unwrap();
    let first = &report.clusters[0];
    assert!(first.flagged, "{report:?}");
    let members: Vec<&str> = (0..trips.len())
        .filter(|&i| labels.labels[i] == Some(first.cluster_id))
        .map(|i| trips[i].trip_id.as_str())
        .collect();
    let uncovered = truth.commutes.iter().find(|c| !c.covered).unwrap();
    assert!(members.iter().all(|m| uncovered.trip_ids.iter().any(|t| t == m)));
    assert_eq!(report.clusters.iter().filter(|c| c.flagged).count(), 1);
    let weights: usize = report.clusters.iter().map(|c| c.n_trips).sum();
    assert_eq!(weights + report.noise_trips, trips.len());
    let by_id: BTreeMap<usize, usize> = report.clusters.iter().map(|c| (c.cluster_id, c.n_trips)).collect();
    assert_eq!(by_id.len(), labels.n_clusters());
}
