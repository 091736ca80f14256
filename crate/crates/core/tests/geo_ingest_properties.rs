use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracelens_core::geo::{LatLon, LocalFrame};
use tracelens_core::ingest::{
    chain_device_trips, classify_trip_region, filter_outlier_waypoints, parse_trips, write_trips_csv,
    write_trips_jsonl, Format, RegionClass,
};
use tracelens_core::{
    haversine, point_in_polygon, segment_speed, GeoPolygon, GridSpec, Mode, Point, Provider, Trip, Waypoint,
    WeightClass,
};

#[test]
fn haversine_is_a_metric_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pt = |rng: &mut ChaCha8Rng| Point {
        lat: rng.gen_range(-89.0..89.0),
        lon: rng.gen_range(-180.0..180.0),
    };
    for _ in 0..10_000 {
        let (a, b, c) = (pt(&mut rng), pt(&mut rng), pt(&mut rng));
        assert_eq!(haversine(a, b), haversine(b, a));
        let (ab, bc, ac) = (haversine(a, b), haversine(b, c), haversine(a, c));
        assert!(ac <= (ab + bc) * (1.0 + 1e-6), "{ac} > {ab} + {bc}");
    }
}

/// Winding number of a closed ring around `p`, by signed angle sum.
fn winding(p: Point, ring: &[Point]) -> i64 {
    let mut total = 0.0;
    for w in ring.windows(2) {
        let a = (w[0].lon - p.lon, w[0].lat - p.lat);
        let b = (w[1].lon - p.lon, w[1].lat - p.lat);
        total += (a.0 * b.1 - a.1 * b.0).atan2(a.0 * b.0 + a.1 * b.1);
    }
    (total / std::f64::consts::TAU).round() as i64
}

#[test]
fn point_in_polygon_agrees_with_winding_number_on_convex_polygons() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 10_000 {
        // Convex polygon: sorted angles on a jittered ellipse.
        let n = rng.gen_range(3..12);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let (rx, ry) = (rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2));
        let mut ring: Vec<Point> = angles
            .iter()
            .map(|t| Point {
                lat: 39.0 + ry * t.sin(),
                lon: -77.0 + rx * t.cos(),
            })
            .collect();
        ring.push(ring[0]);
        let Ok(poly) = GeoPolygon::new(ring.clone(), vec![]) else { continue };
        for _ in 0..100 {
            let p = Point {
                lat: 39.0 + rng.gen_range(-0.25..0.25),
                lon: -77.0 + rng.gen_range(-0.25..0.25),
            };
            assert_eq!(point_in_polygon(p, &poly), winding(p, &ring) != 0, "{p:?}");
            checked += 1;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn doubling_lapse_halves_speed(lat in -60.0f64..60.0, lon in -170.0f64..170.0, d in 0.0f64..0.01, dt in 1i64..100_000) {
        let a = Waypoint::new(lat, lon, 1000).unwrap();
        let b = Waypoint::new(lat + d, lon + d, 1000 + dt).unwrap();
        let c = Waypoint::new(lat + d, lon + d, 1000 + 2 * dt).unwrap();
        prop_assert_eq!(segment_speed(&a, &c).unwrap(), segment_speed(&a, &b).unwrap() / 2.0);
    }

    #[test]
    fn cell_centres_round_trip(row in 0usize..50, col in 0usize..50, cell in 10.0f64..5000.0, lat in -60.0f64..60.0) {
        let g = GridSpec::new(LatLon { lat, lon: 10.0 }, cell, 50, 50).unwrap();
        prop_assert_eq!(g.index(g.cell_center(row, col)), Some((row, col)));
        prop_assert_eq!(g.index(g.cell_corner(row, col)), Some((row, col)));
    }
}

fn arb_trip() -> impl Strategy<Value = Trip> {
    (
        "[a-z][a-z0-9]{0,8}",
        "[a-z0-9]{1,6}",
        prop::sample::select(Mode::ALL),
        prop::sample::select(WeightClass::ALL),
        prop::sample::select(Provider::ALL),
        prop::collection::vec((-89.9f64..89.9, -179.9f64..179.9, 0i64..600_000), 2..30),
    )
        .prop_map(|(id, dev, mode, wc, prov, raw)| {
            let mut t = 1_444_003_200_000i64;
            let wps = raw
                .into_iter()
                .map(|(lat, lon, dt)| {
                    t += dt;
                    Waypoint::new(lat, lon, t).unwrap()
                })
                .collect();
            Trip::new(id, dev, mode, wc, prov, wps).unwrap()
        })
}

fn arb_corpus() -> impl Strategy<Value = Vec<Trip>> {
    prop::collection::vec(arb_trip(), 0..12).prop_map(|mut v| {
        // Trip ids must differ between neighbours for CSV grouping.
        for (i, t) in v.iter_mut().enumerate() {
            t.trip_id = format!("{}-{i}", t.trip_id);
        }
        v
    })
}

fn read_all(bytes: &[u8], format: Format) -> Vec<Trip> {
    parse_trips(bytes, format).unwrap().map(|t| t.unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn csv_round_trip_is_lossless(trips in arb_corpus()) {
        let mut buf = Vec::new();
        write_trips_csv(&mut buf, &trips).unwrap();
        prop_assert_eq!(read_all(&buf, Format::Csv), trips);
    }

    #[test]
    fn jsonl_round_trip_is_lossless(trips in arb_corpus()) {
        let mut buf = Vec::new();
        write_trips_jsonl(&mut buf, &trips).unwrap();
        prop_assert_eq!(read_all(&buf, Format::Jsonl), trips);
    }

    #[test]
    fn outlier_filter_is_idempotent(trip in arb_trip(), vmax in 1.0f64..500.0) {
        if let Ok((once, _)) = filter_outlier_waypoints(&trip, vmax) {
            let (twice, dropped) = filter_outlier_waypoints(&once, vmax).unwrap();
            prop_assert_eq!(dropped, 0);
            prop_assert_eq!(twice, once);
        }
    }

    #[test]
    fn region_classes_partition(trips in arb_corpus(), half in 1.0f64..60.0) {
        let region = GeoPolygon::rect(-half, -2.0 * half, half, 2.0 * half).unwrap();
        let mut counts = std::collections::BTreeMap::<RegionClass, usize>::new();
        for t in &trips {
            *counts.entry(classify_trip_region(t, &region)).or_default() += 1;
        }
        prop_assert_eq!(counts.values().sum::<usize>(), trips.len());
    }

    #[test]
    fn chain_count_non_increasing_in_gap(trips in arb_corpus(), g1 in 0u64..2000, extra in 0u64..2000) {
        let mut trips = trips;
        for (i, t) in trips.iter_mut().enumerate() {
            t.device_id = format!("d{}", i % 3);
        }
        let a = chain_device_trips(&trips, g1).len();
        let b = chain_device_trips(&trips, g1 + extra).len();
        prop_assert!(b <= a);
    }
}

#[test]
fn local_frame_round_trips() {
    let f = LocalFrame::new(Point { lat: 39.0, lon: -76.0 });
    let p = f.to_latlon(1234.5, -987.6);
    let (x, y) = f.to_xy(p);
    assert!((x - 1234.5).abs() < 1e-6 && (y + 987.6).abs() < 1e-6);
}
