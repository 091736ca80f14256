//! Demand versus transit supply: O-D pair clustering, trajectory coverage
//! by transit routes and a link-traversal heat layer.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use crate::cluster::{extract_clusters, od_pair_distance, optics_with, ClusterLabeling, OdPair, PairwiseNeighborhood};
use crate::geo::{project_onto_segment, BBox, LocalFrame};
use crate::geojson::{line_geometry, FeatureCollection};
use crate::mapmatch::MatchedTrip;
use crate::network::{LinkId, RoadNetwork};
use crate::{haversine, Error, Point, Result, Trip};

pub const DEFAULT_BUFFER_M: f64 = 400.0;
pub const DEFAULT_UNCOVERED_BELOW: f64 = 0.5;
pub const DEFAULT_OPTICS_MIN_PTS: usize = 5;
pub const DEFAULT_OPTICS_MAX_EPS_M: f64 = 5000.0;
pub const DEFAULT_EXTRACT_THRESHOLD_M: f64 = 1500.0;
/// Trajectories are cut into pieces no longer than this for coverage tests.
pub const COVERAGE_STEP_M: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitRoute {
    pub route_id: String,
    pub name: String,
    pub line: Vec<Point>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitNetwork {
    pub routes: Vec<TransitRoute>,
}

impl TransitNetwork {
    pub fn new(mut routes: Vec<TransitRoute>) -> Result<Self> {
        for r in &routes {
            if r.line.len() < 2 {
                return Err(Error::Parse(format!("transit route {} needs at least 2 points", r.route_id)));
            }
        }
        routes.sort_by(|a, b| a.route_id.cmp(&b.route_id));
        Ok(TransitNetwork { routes })
    }

    /// LineString features with `route_id` and `name`.
    pub fn from_geojson(text: &str) -> Result<Self> {
        let fc = FeatureCollection::from_str(text)?;
        let mut routes = Vec::new();
        for (i, f) in fc.features.iter().enumerate() {
            let line = f.line(i)?;
            if line.len() < 2 {
                return Err(Error::Parse(format!("feature {i}: route needs at least 2 points")));
            }
            routes.push(TransitRoute {
                route_id: f.prop_str(i, "route_id")?,
                name: f.prop_str(i, "name").unwrap_or_default(),
                line,
            });
        }
        TransitNetwork::new(routes)
    }

    pub fn to_geojson(&self) -> FeatureCollection {
        let mut fc = FeatureCollection::default();
        for r in &self.routes {
            let mut props = Map::new();
            props.insert("route_id".into(), json!(r.route_id));
            props.insert("name".into(), json!(r.name));
            fc.push(line_geometry(&r.line), props);
        }
        fc
    }

    /// Whether `p` is within `buffer_m` of any route.
    pub fn within(&self, p: Point, buffer_m: f64) -> bool {
        self.routes.iter().any(|r| {
            r.line
                .windows(2)
                .any(|s| project_onto_segment(p, s[0], s[1]).distance <= buffer_m)
        })
    }
}

/// OPTICS over trip O-D pairs, then a horizontal cut at `threshold_m`.
pub fn cluster_od_pairs(trips: &[Trip], min_pts: usize, max_eps_m: f64, threshold_m: f64) -> Result<ClusterLabeling> {
    if trips.len() < min_pts.max(1) {
        return Err(Error::Domain(format!(
            "{} trips, fewer than min_pts = {min_pts}",
            trips.len()
        )));
    }
    let pairs: Vec<OdPair<f64>> = trips
        .iter()
        .map(|t| OdPair {
            origin: t.origin(),
            destination: t.destination(),
        })
        .collect();
    let nb = PairwiseNeighborhood::new(pairs.len(), |i, j| od_pair_distance(&pairs[i], &pairs[j]));
    let ord = optics_with(&nb, min_pts, max_eps_m)?;
    extract_clusters(&ord, threshold_m)
}

/// Bounding boxes of route segments padded by the buffer, for cheap rejection.
struct CoverageIndex {
    segs: Vec<(Point, Point, BBox<f64>)>,
    buffer_m: f64,
}

impl CoverageIndex {
    fn new(tn: &TransitNetwork, buffer_m: f64) -> Self {
        let mut segs = Vec::new();
        for r in &tn.routes {
            for s in r.line.windows(2) {
                let mut b = BBox::of(s).expect("two points");
                let dlat = buffer_m / 111_000.0 * 1.01;
                let dlon = dlat / b.max_lat.abs().max(b.min_lat.abs()).to_radians().cos().max(1e-6);
                b.min_lat -= dlat;
                b.max_lat += dlat;
                b.min_lon -= dlon;
                b.max_lon += dlon;
                segs.push((s[0], s[1], b));
            }
        }
        CoverageIndex { segs, buffer_m }
    }

    fn covers(&self, p: Point) -> bool {
        self.segs
            .iter()
            .any(|(a, b, bb)| bb.contains(p) && project_onto_segment(p, *a, *b).distance <= self.buffer_m)
    }
}

/// Length-weighted share of the polylines lying within `buffer_m` of any
/// transit route. Each segment is cut into pieces of at most
/// [`COVERAGE_STEP_M`]; a piece counts as covered when its midpoint is.
/// Returns 0 for an empty transit network or zero total length.
pub fn coverage_score(lines: &[Vec<Point>], tn: &TransitNetwork, buffer_m: f64) -> Result<f64> {
    if !(buffer_m > 0.0) {
        return Err(Error::Domain("coverage buffer must be positive".into()));
    }
    let idx = CoverageIndex::new(tn, buffer_m);
    let mut total = 0.0;
    let mut covered = 0.0;
    for line in lines {
        for s in line.windows(2) {
            let len = haversine(s[0], s[1]);
            if len == 0.0 {
                continue;
            }
            total += len;
            if idx.segs.is_empty() {
                continue;
            }
            let frame = LocalFrame::new(s[0]);
            let (bx, by) = frame.to_xy(s[1]);
            let n = (len / COVERAGE_STEP_M).ceil().max(1.0) as usize;
            let piece = len / n as f64;
            for k in 0..n {
                let f = (k as f64 + 0.5) / n as f64;
                if idx.covers(frame.to_latlon(bx * f, by * f)) {
                    covered += piece;
                }
            }
        }
    }
    Ok(if total > 0.0 { covered / total } else { 0.0 })
}

/// Link geometries traversed by a matched trip.
pub fn matched_polylines(m: &MatchedTrip, net: &RoadNetwork) -> Vec<Vec<Point>> {
    m.links()
        .filter_map(|e| net.link(e.link))
        .map(|l| l.geometry().to_vec())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCoverage {
    pub cluster_id: usize,
    pub n_trips: usize,
    pub covered_fraction: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Sorted by demand weight descending, then by covered fraction.
    pub clusters: Vec<ClusterCoverage>,
    pub noise_trips: usize,
    pub buffer_m: f64,
    pub uncovered_below: f64,
}

impl CoverageReport {
    /// CSV `cluster_id,n_trips,covered_fraction,flagged`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cluster_id", "n_trips", "covered_fraction", "flagged"])?;
        for c in &self.clusters {
            w.write_record([
                c.cluster_id.to_string(),
                c.n_trips.to_string(),
                format!("{:.6}", c.covered_fraction),
                c.flagged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores every O-D cluster against the transit network and builds a heat
/// layer of link traversal counts. `matched[i]` is the match of the trip
/// labelled `labels.labels[i]` (if it matched).
pub fn demand_vs_transit_report(
    labels: &ClusterLabeling,
    matched: &[Option<&MatchedTrip>],
    net: &RoadNetwork,
    tn: &TransitNetwork,
    buffer_m: f64,
    uncovered_below: f64,
) -> Result<(CoverageReport, FeatureCollection)> {
    if labels.len() != matched.len() {
        return Err(Error::Domain(format!(
            "{} labels but {} trips",
            labels.len(),
            matched.len()
        )));
    }
    let mut clusters = Vec::new();
    for (cid, members) in labels.members().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let lines: Vec<Vec<Point>> = members
            .iter()
            .filter_map(|&i| matched[i])
            .flat_map(|m| matched_polylines(m, net))
            .collect();
        let covered_fraction = coverage_score(&lines, tn, buffer_m)?;
        clusters.push(ClusterCoverage {
            cluster_id: cid,
            n_trips: members.len(),
            covered_fraction,
            flagged: covered_fraction < uncovered_below,
        });
    }
    clusters.sort_by(|a, b| {
        b.n_trips
            .cmp(&a.n_trips)
            .then(a.covered_fraction.total_cmp(&b.covered_fraction))
            .then(a.cluster_id.cmp(&b.cluster_id))
    });

    let mut counts: BTreeMap<LinkId, u64> = BTreeMap::new();
    for m in matched.iter().flatten() {
        for e in m.links() {
            *counts.entry(e.link).or_insert(0) += 1;
        }
    }
    let mut heat = FeatureCollection::default();
    for (id, n) in counts {
        let Some(l) = net.link(id) else { continue };
        let mut props = Map::new();
        props.insert("link_id".into(), json!(id.0));
        props.insert("count".into(), json!(n));
        heat.push(line_geometry(l.geometry()), props);
    }
    Ok((
        CoverageReport {
            clusters,
            noise_trips: labels.n_noise(),
            buffer_m,
            uncovered_below,
        },
        heat,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::destination;
    use crate::Waypoint;

    fn base() -> Point {
        Point { lat: 38.98, lon: -76.49 }
    }

    fn route(id: &str, a: Point, b: Point) -> TransitRoute {
        TransitRoute {
            route_id: id.into(),
            name: id.into(),
            line: vec![a, b],
        }
    }

    #[test]
    fn identical_line_fully_covered_far_line_not() {
        let a = base();
        let b = destination(a, 90.0, 2000.0);
        let tn = TransitNetwork::new(vec![route("r1", a, b)]).unwrap();
        assert!((coverage_score(&[vec![a, b]], &tn, 400.0).unwrap() - 1.0).abs() < 1e-12);
        let far_a = destination(a, 0.0, 5000.0);
        let far_b = destination(b, 0.0, 5000.0);
        assert_eq!(coverage_score(&[vec![far_a, far_b]], &tn, 400.0).unwrap(), 0.0);
        assert_eq!(coverage_score(&[vec![a, b]], &TransitNetwork::default(), 400.0).unwrap(), 0.0);
    }

    #[test]
    fn half_on_half_off() {
        let a = base();
        let mid = destination(a, 90.0, 2000.0);
        let off_a = destination(a, 0.0, 3000.0);
        let off_b = destination(off_a, 0.0, 2000.0);
        let tn = TransitNetwork::new(vec![route("r1", destination(a, 270.0, 1000.0), mid)]).unwrap();
        let f = coverage_score(&[vec![a, mid], vec![off_a, off_b]], &tn, 100.0).unwrap();
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn od_clusters() {
        let mk = |id: usize, o: Point, d: Point| {
            Trip::vehicle(
                format!("t{id}"),
                vec![
                    Waypoint::new(o.lat, o.lon, 1000).unwrap(),
                    Waypoint::new(d.lat, d.lon, 600_000).unwrap(),
                ],
            )
            .unwrap()
        };
        let o1 = base();
        let d1 = destination(o1, 45.0, 6000.0);
        let o2 = destination(o1, 90.0, 10_000.0);
        let d2 = destination(o2, 45.0, 6000.0);
        let mut trips = Vec::new();
        for k in 0..20 {
            let j = 30.0 * (k % 5) as f64;
            trips.push(mk(k, destination(o1, 0.0, j), destination(d1, 90.0, j)));
            trips.push(mk(100 + k, destination(o2, 0.0, j), destination(d2, 90.0, j)));
        }
        let lab = cluster_od_pairs(&trips, 5, 5000.0, 1500.0).unwrap();
        assert_eq!(lab.n_clusters(), 2);
        assert_eq!(lab.n_noise(), 0);

        let same: Vec<Trip> = (0..6).map(|k| mk(k, o1, d1)).collect();
        assert_eq!(cluster_od_pairs(&same, 5, 5000.0, 1500.0).unwrap().n_clusters(), 1);
        assert!(cluster_od_pairs(&same[..3], 5, 5000.0, 1500.0).is_err());
    }
}
