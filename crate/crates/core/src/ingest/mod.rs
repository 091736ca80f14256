//! Trip ingestion: parsing, validation, device-error cleanup, trip chaining
//! and descriptive statistics.

mod io;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geo::haversine;
use crate::{GeoPolygon, Trip, Waypoint};

pub use io::{fmt_coord, parse_trips, write_trips_csv, write_trips_jsonl, Format, TripReader, CSV_HEADER};
pub use stats::{
    lower_median, summarize_corpus, trip_stats, CorpusSummarizer, CorpusSummary, Distribution,
    Histogram, QuantileSketch, TripStats, EXACT_QUANTILE_LIMIT,
};

/// Default outlier speed limit, m/s (about 150 mph).
pub const DEFAULT_VMAX_MPS: f64 = 67.0;
/// Default idle gap that still joins two trips of one device, seconds.
pub const DEFAULT_MAX_GAP_S: u64 = 600;

/// Why a trip record was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    CoordinateBounds,
    NonPositiveTime,
    NonMonotonicTime,
    TooFewWaypoints,
    TooFewAfterOutliers,
    BadAttribute,
    Malformed,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::CoordinateBounds => "coordinate_bounds",
            RejectReason::NonPositiveTime => "non_positive_time",
            RejectReason::NonMonotonicTime => "non_monotonic_time",
            RejectReason::TooFewWaypoints => "too_few_waypoints",
            RejectReason::TooFewAfterOutliers => "too_few_after_outliers",
            RejectReason::BadAttribute => "bad_attribute",
            RejectReason::Malformed => "malformed",
        }
    }
}

/// Running account of what ingestion read, kept and dropped.
///
/// `trips_read == trips_kept + trips_rejected` holds at every step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub trips_read: u64,
    pub trips_kept: u64,
    pub trips_rejected: u64,
    pub waypoints_read: u64,
    pub waypoints_dropped_as_outliers: u64,
    pub rejection_reasons: BTreeMap<String, u64>,
}

impl IngestReport {
    pub(crate) fn record_read(&mut self, waypoints: u64) {
        self.trips_read += 1;
        self.waypoints_read += waypoints;
    }

    pub(crate) fn record_kept(&mut self) {
        self.trips_kept += 1;
    }

    pub(crate) fn record_rejected(&mut self, reason: RejectReason) {
        self.trips_rejected += 1;
        *self.rejection_reasons.entry(reason.as_str().to_string()).or_default() += 1;
    }

    /// Moves a previously kept trip to the rejected column.
    pub fn reject_kept(&mut self, reason: RejectReason) {
        debug_assert!(self.trips_kept > 0);
        self.trips_kept = self.trips_kept.saturating_sub(1);
        self.record_rejected(reason);
    }

    pub fn record_outliers(&mut self, dropped: usize) {
        self.waypoints_dropped_as_outliers += dropped as u64;
    }

    /// Associative merge of two partial reports.
    pub fn merge(&mut self, other: &IngestReport) {
        self.trips_read += other.trips_read;
        self.trips_kept += other.trips_kept;
        self.trips_rejected += other.trips_rejected;
        self.waypoints_read += other.waypoints_read;
        self.waypoints_dropped_as_outliers += other.waypoints_dropped_as_outliers;
        for (k, v) in &other.rejection_reasons {
            *self.rejection_reasons.entry(k.clone()).or_default() += v;
        }
    }
}

/// Drops waypoints implying a jump faster than `vmax` from the last kept fix.
///
/// Greedy forward scan; the first waypoint is always kept. Two fixes with the
/// same timestamp are kept only if they coincide. Returns the cleaned trip and
/// the number of dropped waypoints, or `TooFewAfterOutliers` when fewer than
/// two survive.
pub fn filter_outlier_waypoints(
    trip: &Trip,
    vmax: f64,
) -> Result<(Trip, usize), RejectReason> {
    let wps = trip.waypoints();
    let mut kept: Vec<Waypoint> = Vec::with_capacity(wps.len());
    kept.push(wps[0]);
    for w in &wps[1..] {
        let last = kept[kept.len() - 1];
        let d = haversine(last.pos(), w.pos());
        let dt_s = (w.t_ms - last.t_ms) as f64 / 1000.0;
        let ok = if dt_s <= 0.0 { d == 0.0 } else { d / dt_s <= vmax };
        if ok {
            kept.push(*w);
        }
    }
    let dropped = wps.len() - kept.len();
    if kept.len() < 2 {
        return Err(RejectReason::TooFewAfterOutliers);
    }
    if dropped == 0 {
        return Ok((trip.clone(), 0));
    }
    let cleaned = trip
        .with_waypoints(kept)
        .map_err(|_| RejectReason::TooFewAfterOutliers)?;
    Ok((cleaned, dropped))
}

/// Consecutive trips of one device separated by short idle gaps.
#[derive(Debug, Clone)]
pub struct TripChain<'a> {
    pub device_id: &'a str,
    pub trips: Vec<&'a Trip>,
}

impl TripChain<'_> {
    pub fn start_ms(&self) -> i64 {
        self.trips[0].start_ms()
    }

    pub fn end_ms(&self) -> i64 {
        self.trips.iter().map(|t| t.end_ms()).max().unwrap_or(0)
    }
}

/// Joins each device's trips whose idle gap (next start minus previous end)
/// is at most `max_gap_s` seconds.
///
/// Devices come out in id order, chains in time order; trips of one device
/// are ordered by start time, then trip id.
pub fn chain_device_trips<'a, I>(trips: I, max_gap_s: u64) -> Vec<TripChain<'a>>
where
    I: IntoIterator<Item = &'a Trip>,
{
    let mut by_device: BTreeMap<&'a str, Vec<&'a Trip>> = BTreeMap::new();
    for t in trips {
        by_device.entry(t.device_id.as_str()).or_default().push(t);
    }
    let max_gap_ms = (max_gap_s as i64).saturating_mul(1000);
    let mut chains = Vec::new();
    for (device_id, mut list) in by_device {
        list.sort_by(|a, b| a.start_ms().cmp(&b.start_ms()).then_with(|| a.trip_id.cmp(&b.trip_id)));
        let mut current = TripChain {
            device_id,
            trips: vec![list[0]],
        };
        for t in &list[1..] {
            if t.start_ms() - current.end_ms() <= max_gap_ms {
                current.trips.push(t);
            } else {
                chains.push(std::mem::replace(
                    &mut current,
                    TripChain {
                        device_id,
                        trips: vec![t],
                    },
                ));
            }
        }
        chains.push(current);
    }
    chains
}

/// Relation of a trip to a study region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionClass {
    Internal,
    Outbound,
    Inbound,
    Through,
    External,
}

/// Classifies a trip by where its endpoints and intermediate fixes fall.
///
/// A trip whose endpoints are both inside counts as internal even if it
/// briefly leaves the region in between.
pub fn classify_trip_region(trip: &Trip, region: &GeoPolygon) -> RegionClass {
    let wps = trip.waypoints();
    let origin_in = region.contains(wps[0].pos());
    let dest_in = region.contains(wps[wps.len() - 1].pos());
    match (origin_in, dest_in) {
        (true, true) => RegionClass::Internal,
        (true, false) => RegionClass::Outbound,
        (false, true) => RegionClass::Inbound,
        (false, false) => {
            if wps[1..wps.len() - 1].iter().any(|w| region.contains(w.pos())) {
                RegionClass::Through
            } else {
                RegionClass::External
            }
        }
    }
}
