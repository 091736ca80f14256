//! Throughput measurements shared by the bench harness and the tests.

use std::time::Instant;

use tracelens_core::ingest::{parse_trips, summarize_corpus, trip_stats, write_trips_csv, Format};
use tracelens_core::mapmatch::{match_batch, HmmParams};
use tracelens_core::synth::{route_trips, GridWorld, GridWorldSpec, RouteTripSpec, EPOCH_MS};
use tracelens_core::Trip;

#[derive(Debug, Clone, Copy)]
pub struct Throughput {
    pub items: u64,
    pub seconds: f64,
}

impl Throughput {
    pub fn per_second(&self) -> f64 {
        self.items as f64 / self.seconds.max(1e-9)
    }
}

/// Trips driven on the default grid world, 1 Hz with 4 m noise.
pub fn grid_trips(n: usize, seed: u64) -> (GridWorld, Vec<Trip>) {
    let g = GridWorld::new(&GridWorldSpec::default()).expect("default grid");
    let spec = RouteTripSpec {
        trips: n,
        ..Default::default()
    };
    let trips = route_trips(&g, &spec, seed, "b", EPOCH_MS)
        .expect("route trips")
        .into_iter()
        .map(|p| p.trip)
        .collect();
    (g, trips)
}

pub fn trips_to_csv(trips: &[Trip]) -> Vec<u8> {
    let mut b = Vec::new();
    write_trips_csv(&mut b, trips).expect("in-memory write");
    b
}

/// Waypoints per second through CSV parsing, per-trip stats and the
/// corpus summary.
pub fn ingest_stats_throughput(csv: &[u8]) -> Throughput {
    let t0 = Instant::now();
    let mut reader = parse_trips(csv, Format::Csv).expect("header");
    let mut stats = Vec::new();
    let mut waypoints = 0u64;
    for t in reader.by_ref() {
        let t = t.expect("in-memory read");
        waypoints += t.waypoints().len() as u64;
        stats.push(trip_stats(&t));
    }
    summarize_corpus(stats).expect("non-empty corpus");
    Throughput {
        items: waypoints,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// Matched trips per second on `workers` threads.
pub fn matching_throughput(g: &GridWorld, trips: &[Trip], workers: usize) -> Throughput {
    let t0 = Instant::now();
    let (out, _) = match_batch(trips, &g.net, &HmmParams::default(), workers).expect("batch");
    assert_eq!(out.len(), trips.len());
    Throughput {
        items: trips.len() as u64,
        seconds: t0.elapsed().as_secs_f64(),
    }
}
