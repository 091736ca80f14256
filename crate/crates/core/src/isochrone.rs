//! Trajectory isochrones: waypoints reached from an origin region within
//! a time budget, outlier-filtered with DBSCAN and bounded by an
//! alpha-shape concave hull (alpha = eps).

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use crate::cluster::{dbscan, ClusterParams, Role};
use crate::geo::LocalFrame;
use crate::geojson::{polygon_geometry, FeatureCollection};
use crate::{Error, GeoPolygon, Point, Result, Trip};

/// Default thresholds (minutes) with their clustering parameters.
pub const DEFAULT_LEVELS: [(f64, f64, usize); 4] = [
    (10.0, 1100.0, 60),
    (20.0, 1300.0, 20),
    (30.0, 1400.0, 10),
    (40.0, 1600.0, 5),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsochroneSpec {
    pub origin: GeoPolygon,
    pub thresholds_min: Vec<f64>,
    pub params: Vec<ClusterParams<f64>>,
}

impl IsochroneSpec {
    pub fn with_defaults(origin: GeoPolygon) -> Self {
        IsochroneSpec {
            origin,
            thresholds_min: DEFAULT_LEVELS.iter().map(|l| l.0).collect(),
            params: DEFAULT_LEVELS
                .iter()
                .map(|l| ClusterParams { eps: l.1, min_pts: l.2 })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds_min.is_empty() {
            return Err(Error::Config("at least one isochrone threshold is required".into()));
        }
        if self.thresholds_min.len() != self.params.len() {
            return Err(Error::Config(format!(
                "{} thresholds but {} parameter sets",
                self.thresholds_min.len(),
                self.params.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &self.thresholds_min {
            if !(t > prev) || !t.is_finite() {
                return Err(Error::Config("thresholds must be positive and strictly increasing".into()));
            }
            prev = t;
        }
        for p in &self.params {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isochrone {
    /// Zero when built outside [`build_isochrones`].
    pub threshold_min: f64,
    pub boundary: Option<GeoPolygon>,
    pub n_points: usize,
    pub n_outliers: usize,
    /// Share of non-outlier points left outside the boundary (disconnected
    /// alpha-shape pieces and stragglers).
    pub discarded_fraction: f64,
    #[serde(skip)]
    pub survivors: Vec<Point>,
    pub diagnostics: Vec<String>,
}

/// Waypoints of trips starting inside `origin`, recorded no later than
/// `threshold_min` after the trip start.
pub fn collect_waypoints<'a>(
    trips: impl IntoIterator<Item = &'a Trip>,
    origin: &GeoPolygon,
    threshold_min: f64,
) -> Vec<Point> {
    let budget_ms = (threshold_min * 60_000.0).floor() as i64;
    let mut out = Vec::new();
    for t in trips {
        if !origin.contains(t.origin()) {
            continue;
        }
        let start = t.start_ms();
        out.extend(
            t.waypoints()
                .iter()
                .take_while(|w| w.t_ms - start <= budget_ms)
                .map(|w| w.pos()),
        );
    }
    out
}

/// DBSCAN-filters `points` and bounds the survivors with an alpha-shape.
pub fn filter_and_hull(points: &[Point], p: &ClusterParams<f64>) -> Result<Isochrone> {
    p.validate()?;
    let mut iso = Isochrone {
        threshold_min: 0.0,
        boundary: None,
        n_points: points.len(),
        n_outliers: points.len(),
        discarded_fraction: 0.0,
        survivors: Vec::new(),
        diagnostics: Vec::new(),
    };
    if points.len() < p.min_pts {
        iso.diagnostics.push(format!(
            "only {} points, fewer than min_pts = {}",
            points.len(),
            p.min_pts
        ));
        return Ok(iso);
    }
    let labels = dbscan(points, p)?;
    iso.survivors = points
        .iter()
        .zip(&labels.roles)
        .filter(|(_, r)| **r != Role::Noise)
        .map(|(q, _)| *q)
        .collect();
    iso.n_outliers = points.len() - iso.survivors.len();
    if iso.survivors.is_empty() {
        iso.diagnostics.push("all points are noise".into());
        return Ok(iso);
    }
    let shape = alpha_shape(&iso.survivors, p.eps);
    match shape.boundary {
        Some(b) => {
            iso.discarded_fraction = shape.discarded_fraction;
            iso.boundary = Some(b);
            if shape.n_components > 1 {
                iso.diagnostics.push(format!(
                    "alpha-shape has {} components; kept the largest, discarding {:.2}% of points",
                    shape.n_components,
                    100.0 * shape.discarded_fraction
                ));
            }
        }
        None => {
            iso.discarded_fraction = 1.0;
            iso.diagnostics.push("surviving points do not span an area at this alpha".into());
        }
    }
    Ok(iso)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaShape {
    pub boundary: Option<GeoPolygon>,
    pub n_components: usize,
    pub discarded_fraction: f64,
}

/// Alpha-shape of `points`: Delaunay triangles with circumradius
/// `<= alpha` meters, largest edge-connected component, boundary traced
/// into an exterior ring plus holes.
pub fn alpha_shape(points: &[Point], alpha: f64) -> AlphaShape {
    let empty = AlphaShape {
        boundary: None,
        n_components: 0,
        discarded_fraction: 1.0,
    };
    if points.len() < 3 {
        return empty;
    }
    let n = points.len() as f64;
    let (slat, slon) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.lat, a.1 + p.lon));
    let frame = LocalFrame::new(Point { lat: slat / n, lon: slon / n });
    let xy: Vec<delaunator::Point> = points
        .iter()
        .map(|p| {
            let (x, y) = frame.to_xy(*p);
            delaunator::Point { x, y }
        })
        .collect();
    let tri = delaunator::triangulate(&xy);
    let n_tri = tri.triangles.len() / 3;
    if n_tri == 0 {
        return empty;
    }

    let corners = |t: usize| [tri.triangles[3 * t], tri.triangles[3 * t + 1], tri.triangles[3 * t + 2]];
    let signed_area = |a: usize, b: usize, c: usize| {
        let (pa, pb, pc) = (&xy[a], &xy[b], &xy[c]);
        0.5 * ((pb.x - pa.x) * (pc.y - pa.y) - (pc.x - pa.x) * (pb.y - pa.y))
    };
    let keep: Vec<bool> = (0..n_tri)
        .map(|t| {
            let [a, b, c] = corners(t);
            let d = |i: usize, j: usize| ((xy[i].x - xy[j].x).powi(2) + (xy[i].y - xy[j].y).powi(2)).sqrt();
            let area = signed_area(a, b, c).abs();
            area > 0.0 && d(a, b) * d(b, c) * d(c, a) / (4.0 * area) <= alpha
        })
        .collect();

    // union-find over kept triangles sharing an edge
    let mut parent: Vec<usize> = (0..n_tri).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in 0..tri.halfedges.len() {
        let o = tri.halfedges[e];
        if o == delaunator::EMPTY || o < e {
            continue;
        }
        let (t1, t2) = (e / 3, o / 3);
        if keep[t1] && keep[t2] {
            let (r1, r2) = (find(&mut parent, t1), find(&mut parent, t2));
            if r1 != r2 {
                parent[r1.max(r2)] = r1.min(r2);
            }
        }
    }
    let mut comp_area: HashMap<usize, f64> = HashMap::new();
    for t in (0..n_tri).filter(|&t| keep[t]) {
        let [a, b, c] = corners(t);
        *comp_area.entry(find(&mut parent, t)).or_default() += signed_area(a, b, c).abs();
    }
    if comp_area.is_empty() {
        return empty;
    }
    let n_components = comp_area.len();
    let best = comp_area
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(r, _)| *r)
        .unwrap();

    // directed CCW edges of the chosen component; boundary = unpaired ones
    let mut edges: HashSet<(usize, usize)> = HashSet::new();
    let mut vertices: HashSet<usize> = HashSet::new();
    for t in 0..n_tri {
        if !keep[t] || find(&mut parent, t) != best {
            continue;
        }
        let [a, b, c] = corners(t);
        let (a, b, c) = if signed_area(a, b, c) > 0.0 { (a, b, c) } else { (a, c, b) };
        edges.extend([(a, b), (b, c), (c, a)]);
        vertices.extend([a, b, c]);
    }
    let mut boundary: Vec<(usize, usize)> = edges
        .iter()
        .filter(|(u, v)| !edges.contains(&(*v, *u)))
        .copied()
        .collect();
    boundary.sort_unstable();
    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(u, v) in &boundary {
        outgoing.entry(u).or_default().push(v);
    }

    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut rings: Vec<(f64, Vec<usize>)> = Vec::new();
    for &start in &boundary {
        if used.contains(&start) {
            continue;
        }
        used.insert(start);
        let mut ring = vec![start.0];
        let (mut u, mut v) = start;
        loop {
            // sharpest clockwise turn keeps rings simple at pinch vertices
            let back = (xy[u].y - xy[v].y).atan2(xy[u].x - xy[v].x);
            let mut pick: Option<(f64, usize)> = None;
            for &w in outgoing.get(&v).map(|x| x.as_slice()).unwrap_or(&[]) {
                if used.contains(&(v, w)) && (v, w) != start {
                    continue;
                }
                let ang = (xy[w].y - xy[v].y).atan2(xy[w].x - xy[v].x);
                let mut cw = (back - ang).rem_euclid(std::f64::consts::TAU);
                if cw == 0.0 {
                    cw = std::f64::consts::TAU;
                }
                if pick.map_or(true, |(best, _)| cw < best) {
                    pick = Some((cw, w));
                }
            }
            let Some((_, w)) = pick else { break };
            if (v, w) == start {
                break;
            }
            used.insert((v, w));
            ring.push(v);
            u = v;
            v = w;
        }
        let area: f64 = (0..ring.len())
            .map(|i| {
                let (a, b) = (&xy[ring[i]], &xy[ring[(i + 1) % ring.len()]]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            / 2.0;
        if ring.len() >= 3 {
            rings.push((area, ring));
        }
    }
    let Some(ext_at) = rings
        .iter()
        .enumerate()
        .filter(|(_, r)| r.0 > 0.0)
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .map(|(i, _)| i)
    else {
        return empty;
    };
    let close = |r: &[usize]| {
        let mut v: Vec<Point> = r.iter().map(|&i| points[i]).collect();
        v.push(points[r[0]]);
        v
    };
    let exterior = close(&rings[ext_at].1);
    let holes: Vec<Vec<Point>> = rings
        .iter()
        .filter(|r| r.0 < 0.0)
        .map(|r| close(&r.1))
        .collect();
    let Ok(poly) = GeoPolygon::new(exterior, holes) else {
        return empty;
    };

    let on_shape: HashSet<(u64, u64)> = vertices
        .iter()
        .map(|&i| (points[i].lat.to_bits(), points[i].lon.to_bits()))
        .collect();
    let outside = points
        .iter()
        .filter(|p| !on_shape.contains(&(p.lat.to_bits(), p.lon.to_bits())) && !poly.contains(**p))
        .count();
    AlphaShape {
        boundary: Some(poly),
        n_components,
        discarded_fraction: outside as f64 / points.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentCheck {
    pub smaller_min: f64,
    pub larger_min: f64,
    pub fraction_contained: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsochroneSet {
    pub isochrones: Vec<Isochrone>,
    pub containment: Vec<ContainmentCheck>,
    pub diagnostics: Vec<String>,
}

/// Minimum share of a smaller isochrone's survivors expected inside the
/// next larger boundary.
pub const CONTAINMENT_FLOOR: f64 = 0.99;

pub fn build_isochrones(trips: &[Trip], spec: &IsochroneSpec) -> Result<IsochroneSet> {
    spec.validate()?;
    let mut isochrones = Vec::with_capacity(spec.thresholds_min.len());
    for (t, p) in spec.thresholds_min.iter().zip(&spec.params) {
        let pts = collect_waypoints(trips, &spec.origin, *t);
        let mut iso = filter_and_hull(&pts, p)?;
        iso.threshold_min = *t;
        isochrones.push(iso);
    }
    let mut containment = Vec::new();
    let mut diagnostics = Vec::new();
    for iso in &isochrones {
        for d in &iso.diagnostics {
            diagnostics.push(format!("{} min: {d}", iso.threshold_min));
        }
    }
    for w in isochrones.windows(2) {
        let (small, large) = (&w[0], &w[1]);
        let Some(b) = &large.boundary else { continue };
        if small.survivors.is_empty() {
            continue;
        }
        let inside = small.survivors.iter().filter(|p| b.contains(**p)).count();
        let fraction = inside as f64 / small.survivors.len() as f64;
        if fraction < CONTAINMENT_FLOOR {
            diagnostics.push(format!(
                "{} min hull contains only {:.2}% of the {} min points",
                large.threshold_min,
                100.0 * fraction,
                small.threshold_min
            ));
        }
        containment.push(ContainmentCheck {
            smaller_min: small.threshold_min,
            larger_min: large.threshold_min,
            fraction_contained: fraction,
        });
    }
    Ok(IsochroneSet {
        isochrones,
        containment,
        diagnostics,
    })
}

/// Polygon features with `threshold_min`, `n_points`, `n_outliers`;
/// isochrones without a boundary are omitted.
pub fn isochrones_to_geojson(isos: &[Isochrone]) -> FeatureCollection {
    let mut fc = FeatureCollection::default();
    for iso in isos {
        let Some(b) = &iso.boundary else { continue };
        let mut props = Map::new();
        props.insert("threshold_min".into(), json!(iso.threshold_min));
        props.insert("n_points".into(), json!(iso.n_points));
        props.insert("n_outliers".into(), json!(iso.n_outliers));
        props.insert("discarded_fraction".into(), json!(iso.discarded_fraction));
        fc.push(polygon_geometry(b), props);
    }
    fc
}
