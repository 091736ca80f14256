//! Synthetic worlds with planted ground truth.
//!
//! Every generator is a pure function of its spec and an RNG seed, so the
//! same spec always yields byte-identical corpora. Each scenario draws from
//! its own stream derived from the world seed, which keeps one scenario's
//! output stable when another's spec changes.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::demand::{AtrRecord, CorridorSpec, Zone, ZoneLevel, ZoneSystem, DEFAULT_TZ_OFFSET_HOURS};
use crate::enforcement::WimSite;
use crate::geo::LocalFrame;
use crate::mapmatch::{MatchedTrip, RouteItem};
use crate::network::{LinkEntry, LinkId, LinkSpec, NodeId, RoadNetwork};
use crate::transit::{TransitNetwork, TransitRoute};
use crate::{haversine, Error, GeoPolygon, GridSpec, Mode, Point, Provider, Result, Trip, Waypoint, WeightClass};

/// Monday 2015-10-05 00:00 UTC; all synthetic clocks start here.
pub const EPOCH_MS: i64 = 1_444_003_200_000;

const HOUR_MS: i64 = 3_600_000;
const DAY_MS: i64 = 24 * HOUR_MS;

fn cfg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn origin_point(lat: f64, lon: f64) -> Result<Point> {
    Point::new(lat, lon).map_err(|_| Error::Config(format!("origin ({lat}, {lon}) is not a coordinate")))
}

fn rect(frame: &LocalFrame<f64>, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<GeoPolygon> {
    let sw = frame.to_latlon(x0.min(x1), y0.min(y1));
    let ne = frame.to_latlon(x0.max(x1), y0.max(y1));
    GeoPolygon::rect(sw.lat, sw.lon, ne.lat, ne.lon)
}

/// Gaussian position noise, applied in a local frame around `p`.
fn perturb(p: Point, sigma_m: f64, rng: &mut ChaCha8Rng) -> Point {
    if sigma_m <= 0.0 {
        return p;
    }
    let n = Normal::new(0.0, sigma_m).expect("positive sigma");
    LocalFrame::new(p).to_latlon(n.sample(rng), n.sample(rng))
}

fn wp(p: Point, t_ms: i64) -> Waypoint {
    Waypoint {
        lat: p.lat,
        lon: p.lon,
        t_ms,
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        cfg(format!("{name} must be positive, got {v}"))
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        cfg(format!("{name} must lie in [0, 1], got {v}"))
    }
}

// ---------------------------------------------------------------- traces

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub speed_mps: f64,
    pub interval_s: f64,
    pub sigma_m: f64,
}

impl TraceParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("speed_mps", self.speed_mps)?;
        check_positive("interval_s", self.interval_s)?;
        if !(self.sigma_m >= 0.0 && self.sigma_m.is_finite()) {
            return cfg(format!("sigma_m must be non-negative, got {}", self.sigma_m));
        }
        Ok(())
    }
}

/// Point `s` meters along a polyline with cumulative lengths `cum`.
fn along(line: &[Point], cum: &[f64], s: f64) -> Point {
    let i = match cum.partition_point(|c| *c <= s) {
        0 => 0,
        k => (k - 1).min(line.len() - 2),
    };
    let seg = cum[i + 1] - cum[i];
    let f = if seg > 0.0 { ((s - cum[i]) / seg).clamp(0.0, 1.0) } else { 0.0 };
    Point {
        lat: line[i].lat + f * (line[i + 1].lat - line[i].lat),
        lon: line[i].lon + f * (line[i + 1].lon - line[i].lon),
    }
}

fn cumulative(line: &[Point]) -> Vec<f64> {
    let mut cum = vec![0.0];
    for w in line.windows(2) {
        cum.push(cum.last().unwrap() + haversine(w[0], w[1]));
    }
    cum
}

/// Samples a drive along `line` from `from_m` to `to_m` at constant speed.
///
/// Always yields at least two waypoints; the last sample lands on `to_m`
/// when the interval does not divide the distance.
pub fn sample_polyline(
    line: &[Point],
    from_m: f64,
    to_m: f64,
    t0_ms: i64,
    tp: &TraceParams,
    rng: &mut ChaCha8Rng,
) -> Vec<Waypoint> {
    let cum = cumulative(line);
    let step = tp.speed_mps * tp.interval_s;
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let s = from_m + step * k as f64;
        if s > to_m + 1e-9 {
            break;
        }
        let t = t0_ms + (k as f64 * tp.interval_s * 1000.0).round() as i64;
        out.push(wp(perturb(along(line, &cum, s), tp.sigma_m, rng), t));
        k += 1;
    }
    let last_s = from_m + step * (k.saturating_sub(1)) as f64;
    // A stub shorter than half a step would turn GPS noise into speed spikes.
    if out.len() < 2 || to_m - last_s >= 0.5 * step {
        let t = t0_ms + ((to_m - from_m) / tp.speed_mps * 1000.0).round() as i64;
        let t = t.max(out.last().map_or(t0_ms, |w| w.t_ms + 1));
        out.push(wp(perturb(along(line, &cum, to_m), tp.sigma_m, rng), t));
    }
    out
}

// ---------------------------------------------------------------- grid

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridWorldSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
}

impl Default for GridWorldSpec {
    fn default() -> Self {
        GridWorldSpec {
            origin_lat: 39.20,
            origin_lon: -76.80,
            rows: 12,
            cols: 12,
            spacing_m: 250.0,
        }
    }
}

fn grid_link_id(rows: usize, cols: usize, a: GridNode, b: GridNode) -> Option<LinkId> {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if b.0 >= rows || b.1 >= cols {
        return None;
    }
    if a.0 == b.0 && a.1 + 1 == b.1 {
        Some(LinkId((a.0 * (cols - 1) + a.1 + 1) as u64))
    } else if a.1 == b.1 && a.0 + 1 == b.0 {
        Some(LinkId((rows * (cols - 1) + a.0 * cols + a.1 + 1) as u64))
    } else {
        None
    }
}

/// Cell of the grid network: `(row, col)`, rows northwards.
pub type GridNode = (usize, usize);

/// Manhattan road grid of two-way straight links.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub net: RoadNetwork,
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub origin: Point,
}

impl GridWorld {
    pub fn new(spec: &GridWorldSpec) -> Result<Self> {
        if spec.rows < 2 || spec.cols < 2 {
            return cfg(format!("grid needs at least 2x2 nodes, got {}x{}", spec.rows, spec.cols));
        }
        check_positive("spacing_m", spec.spacing_m)?;
        let origin = origin_point(spec.origin_lat, spec.origin_lon)?;
        let frame = LocalFrame::new(origin);
        let (rows, cols) = (spec.rows, spec.cols);
        let pos = |r: usize, c: usize| frame.to_latlon(c as f64 * spec.spacing_m, r as f64 * spec.spacing_m);
        let mut nodes = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                nodes.push((NodeId((r * cols + c) as u64), pos(r, c)));
            }
        }
        let mut links = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                for (r2, c2) in [(r, c + 1), (r + 1, c)] {
                    if r2 < rows && c2 < cols {
                        links.push(LinkSpec {
                            id: grid_link_id(rows, cols, (r, c), (r2, c2)).expect("adjacent"),
                            from: NodeId((r * cols + c) as u64),
                            to: NodeId((r2 * cols + c2) as u64),
                            geometry: vec![pos(r, c), pos(r2, c2)],
                            oneway: false,
                        });
                    }
                }
            }
        }
        links.sort_by_key(|l| l.id);
        Ok(GridWorld {
            net: RoadNetwork::new(nodes, links)?,
            rows,
            cols,
            spacing_m: spec.spacing_m,
            origin,
        })
    }

    pub fn node(&self, r: usize, c: usize) -> NodeId {
        NodeId((r * self.cols + c) as u64)
    }

    pub fn position(&self, n: GridNode) -> Point {
        LocalFrame::new(self.origin).to_latlon(n.1 as f64 * self.spacing_m, n.0 as f64 * self.spacing_m)
    }

    /// Horizontal links are numbered first, row by row, then vertical ones.
    pub fn link_between(&self, a: GridNode, b: GridNode) -> Option<LinkId> {
        grid_link_id(self.rows, self.cols, a, b)
    }

    pub fn neighbors(&self, (r, c): GridNode) -> Vec<GridNode> {
        let mut v = Vec::with_capacity(4);
        if r > 0 {
            v.push((r - 1, c));
        }
        if c > 0 {
            v.push((r, c - 1));
        }
        if r + 1 < self.rows {
            v.push((r + 1, c));
        }
        if c + 1 < self.cols {
            v.push((r, c + 1));
        }
        v
    }

    /// Self-avoiding random walk of up to `n_links` steps.
    pub fn random_walk(&self, rng: &mut ChaCha8Rng, start: GridNode, n_links: usize) -> Vec<GridNode> {
        let mut path = vec![start];
        let mut seen: BTreeSet<GridNode> = path.iter().copied().collect();
        while path.len() <= n_links {
            let opts: Vec<GridNode> = self
                .neighbors(*path.last().unwrap())
                .into_iter()
                .filter(|n| !seen.contains(n))
                .collect();
            let Some(&next) = opts.choose(rng) else { break };
            seen.insert(next);
            path.push(next);
        }
        path
    }

    pub fn path_links(&self, path: &[GridNode]) -> Vec<LinkId> {
        path.windows(2)
            .map(|w| self.link_between(w[0], w[1]).expect("walk steps are adjacent"))
            .collect()
    }

    /// Noisy trace along a node path, starting and ending part-way into
    /// the first and last links so both are unambiguously traversed.
    pub fn drive(&self, path: &[GridNode], t0_ms: i64, tp: &TraceParams, rng: &mut ChaCha8Rng) -> Vec<Waypoint> {
        let line: Vec<Point> = path.iter().map(|n| self.position(*n)).collect();
        let total = cumulative(&line).last().copied().unwrap_or(0.0);
        let from = rng.gen_range(0.3..0.7) * self.spacing_m;
        let to = total - rng.gen_range(0.3..0.7) * self.spacing_m;
        sample_polyline(&line, from, to, t0_ms, tp, rng)
    }

    fn random_node(&self, rng: &mut ChaCha8Rng) -> GridNode {
        (rng.gen_range(0..self.rows), rng.gen_range(0..self.cols))
    }
}

/// A trip with the link sequence it was driven along.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRoute {
    pub trip: Trip,
    pub links: Vec<LinkId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteTripSpec {
    pub trips: usize,
    pub min_links: usize,
    pub max_links: usize,
    pub speed_mps: f64,
    pub interval_s: f64,
    pub sigma_m: f64,
}

impl Default for RouteTripSpec {
    fn default() -> Self {
        RouteTripSpec {
            trips: 200,
            min_links: 4,
            max_links: 12,
            speed_mps: 12.0,
            interval_s: 1.0,
            sigma_m: 4.0,
        }
    }
}

impl RouteTripSpec {
    fn trace(&self) -> TraceParams {
        TraceParams {
            speed_mps: self.speed_mps,
            interval_s: self.interval_s,
            sigma_m: self.sigma_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_links < 2 || self.max_links < self.min_links {
            return cfg(format!(
                "route length range [{}, {}] needs 2 <= min <= max",
                self.min_links, self.max_links
            ));
        }
        self.trace().validate()
    }
}

/// Random drives over the grid, one every ten minutes from `t0_ms`.
pub fn route_trips(g: &GridWorld, spec: &RouteTripSpec, seed: u64, prefix: &str, t0_ms: i64) -> Result<Vec<PlantedRoute>> {
    spec.validate()?;
    if spec.trips > 0 && g.rows * g.cols <= spec.min_links {
        return cfg("grid too small for the requested route length");
    }
    let mut rng = stream(seed, 1);
    let tp = spec.trace();
    let mut out = Vec::with_capacity(spec.trips);
    let mut attempts = 0usize;
    while out.len() < spec.trips {
        attempts += 1;
        if attempts > 100 * spec.trips + 100 {
            return cfg("could not draw routes of the requested length on this grid");
        }
        let n = rng.gen_range(spec.min_links..=spec.max_links);
        let start = g.random_node(&mut rng);
        let path = g.random_walk(&mut rng, start, n);
        if path.len() <= spec.min_links {
            continue;
        }
        let t0 = t0_ms + out.len() as i64 * 600_000;
        let wps = g.drive(&path, t0, &tp, &mut rng);
        let id = format!("{prefix}{:06}", out.len() + 1);
        out.push(PlantedRoute {
            trip: Trip::vehicle(id, wps)?,
            links: g.path_links(&path),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------- ATR fleet

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetSpec {
    /// Probability that a vehicle passing a counter is in the probe sample.
    pub sampling_p: f64,
    pub stations: usize,
    pub hours: usize,
    /// True hourly volumes are uniform on `[count_min, count_max]`.
    pub count_min: u64,
    pub count_max: u64,
    pub speed_mps: f64,
    pub interval_s: f64,
    pub sigma_m: f64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec {
            sampling_p: 0.02,
            stations: 6,
            hours: 24,
            count_min: 200,
            count_max: 600,
            speed_mps: 12.0,
            interval_s: 1.0,
            sigma_m: 4.0,
        }
    }
}

impl FleetSpec {
    pub fn validate(&self) -> Result<()> {
        check_fraction("sampling_p", self.sampling_p)?;
        if self.count_min > self.count_max {
            return cfg(format!("count_min {} exceeds count_max {}", self.count_min, self.count_max));
        }
        TraceParams {
            speed_mps: self.speed_mps,
            interval_s: self.interval_s,
            sigma_m: self.sigma_m,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetTruth {
    pub sampling_p: f64,
    pub station_links: Vec<(String, LinkId)>,
    pub station_hours: usize,
    pub true_volume: u64,
    pub probe_traversals: u64,
}

/// One probe vehicle crossing a counted link.
#[derive(Debug, Clone, PartialEq)]
struct Traversal {
    path: Vec<GridNode>,
    /// Index in `path` of the counted link's entry node.
    at: usize,
    t_entry_ms: i64,
}

struct FleetPlan {
    atr: Vec<AtrRecord>,
    traversals: Vec<Traversal>,
    truth: FleetTruth,
}

/// Grows `path` by up to `steps` links, never reusing a node or crossing a
/// link in `blocked`.
fn extend_walk(g: &GridWorld, rng: &mut ChaCha8Rng, path: &mut Vec<GridNode>, steps: usize, blocked: &[LinkId]) {
    for _ in 0..steps {
        let last = *path.last().unwrap();
        let opts: Vec<GridNode> = g
            .neighbors(last)
            .into_iter()
            .filter(|n| !path.contains(n) && g.link_between(last, *n).map_or(true, |l| !blocked.contains(&l)))
            .collect();
        let Some(&n) = opts.choose(rng) else { break };
        path.push(n);
    }
}

fn plan_fleet(g: &GridWorld, spec: &FleetSpec, rng: &mut ChaCha8Rng, first_hour: i64) -> Result<FleetPlan> {
    spec.validate()?;
    // Interior links only, so every traversal has a link on either side.
    let mut candidates: Vec<(GridNode, GridNode)> = Vec::new();
    for r in 1..g.rows.saturating_sub(1) {
        for c in 1..g.cols.saturating_sub(1) {
            for (r2, c2) in [(r, c + 1), (r + 1, c)] {
                if r2 + 1 < g.rows && c2 + 1 < g.cols {
                    candidates.push(((r, c), (r2, c2)));
                }
            }
        }
    }
    if spec.stations > candidates.len() {
        return cfg(format!(
            "{} stations requested but the grid has only {} interior links",
            spec.stations,
            candidates.len()
        ));
    }
    let stations: Vec<(GridNode, GridNode)> = candidates.choose_multiple(rng, spec.stations).copied().collect();
    // Probes feed only their own station's count.
    let blocked: Vec<LinkId> = stations.iter().map(|&(a, b)| g.link_between(a, b).expect("adjacent")).collect();
    let mut atr = Vec::new();
    let mut traversals = Vec::new();
    let mut station_links = Vec::new();
    let (mut true_volume, mut probes) = (0u64, 0u64);
    for (si, &(a, b)) in stations.iter().enumerate() {
        let link = g.link_between(a, b).expect("adjacent");
        let station_id = format!("S{:02}", si + 1);
        station_links.push((station_id.clone(), link));
        for h in 0..spec.hours as i64 {
            let hour = first_hour + h;
            let n = rng.gen_range(spec.count_min..=spec.count_max);
            let x = if n == 0 || spec.sampling_p == 0.0 {
                0
            } else {
                Binomial::new(n, spec.sampling_p)
                    .map_err(|e| Error::Config(format!("binomial: {e}")))?
                    .sample(rng)
            };
            true_volume += n;
            probes += x;
            atr.push(AtrRecord {
                station_id: station_id.clone(),
                link_id: link,
                hour,
                count: n,
            });
            for _ in 0..x {
                let (u, v) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                let mut back = vec![u, v];
                back.reverse();
                let k = rng.gen_range(1..=2);
                extend_walk(g, rng, &mut back, k, &blocked);
                back.reverse();
                let at = back.len() - 2;
                let k = rng.gen_range(1..=2);
                extend_walk(g, rng, &mut back, k, &blocked);
                let t_entry_ms = hour * HOUR_MS + rng.gen_range(60_000..HOUR_MS - 60_000);
                traversals.push(Traversal {
                    path: back,
                    at,
                    t_entry_ms,
                });
            }
        }
    }
    Ok(FleetPlan {
        atr,
        traversals,
        truth: FleetTruth {
            sampling_p: spec.sampling_p,
            station_links,
            station_hours: spec.stations * spec.hours,
            true_volume,
            probe_traversals: probes,
        },
    })
}

/// A counter world expressed directly as matched trips, for exercising the
/// penetration estimator without the cost of matching.
#[derive(Debug, Clone)]
pub struct MatchedFleet {
    pub grid: GridWorld,
    pub atr: Vec<AtrRecord>,
    pub matched: Vec<MatchedTrip>,
    pub truth: FleetTruth,
}

pub fn matched_fleet(grid: &GridWorldSpec, spec: &FleetSpec, seed: u64) -> Result<MatchedFleet> {
    let g = GridWorld::new(grid)?;
    let mut rng = stream(seed, 2);
    let plan = plan_fleet(&g, spec, &mut rng, EPOCH_MS / HOUR_MS)?;
    let link_ms = (g.spacing_m / spec.speed_mps * 1000.0).round() as i64;
    let matched = plan
        .traversals
        .iter()
        .enumerate()
        .map(|(i, tr)| {
            let route = g
                .path_links(&tr.path)
                .into_iter()
                .enumerate()
                .map(|(k, link)| {
                    RouteItem::Link(LinkEntry {
                        link,
                        t_entry_ms: tr.t_entry_ms + (k as i64 - tr.at as i64) * link_ms,
                    })
                })
                .collect();
            MatchedTrip {
                trip_id: format!("m{:07}", i + 1),
                route,
                projections: Vec::new(),
                log_likelihood: 0.0,
                emission_sum: 0.0,
                transition_sum: 0.0,
                n_segments: 1,
            }
        })
        .collect();
    Ok(MatchedFleet {
        grid: g,
        atr: plan.atr,
        matched,
        truth: plan.truth,
    })
}

/// GPS probe trips for a counter world, with their driven link sequences.
fn fleet_trips(g: &GridWorld, spec: &FleetSpec, rng: &mut ChaCha8Rng, plan: &FleetPlan) -> Result<Vec<PlantedRoute>> {
    let tp = TraceParams {
        speed_mps: spec.speed_mps,
        interval_s: spec.interval_s,
        sigma_m: spec.sigma_m,
    };
    plan.traversals
        .iter()
        .enumerate()
        .map(|(i, tr)| {
            // Start where the schedule puts the counted-link entry at t_entry.
            let from = rng.gen_range(0.3..0.7) * g.spacing_m;
            let lead = tr.at as f64 * g.spacing_m - from;
            let t0 = tr.t_entry_ms - (lead / spec.speed_mps * 1000.0).round() as i64;
            let line: Vec<Point> = tr.path.iter().map(|n| g.position(*n)).collect();
            let total = (tr.path.len() - 1) as f64 * g.spacing_m;
            let to = total - rng.gen_range(0.3..0.7) * g.spacing_m;
            let wps = sample_polyline(&line, from, to, t0, &tp, rng);
            Ok(PlantedRoute {
                trip: Trip::vehicle(format!("f{:06}", i + 1), wps)?,
                links: g.path_links(&tr.path),
            })
        })
        .collect()
}

// ---------------------------------------------------------------- WIM

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WimClassSpec {
    pub weight_class: WeightClass,
    pub relevant: u64,
    /// Planted circumvention rate, percent, reproduced to two decimals.
    pub circumvent_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WimWorldSpec {
    pub site_id: String,
    pub center_lat: f64,
    pub center_lon: f64,
    pub classes: Vec<WimClassSpec>,
    /// Share of circumventing trips planted slower than the main road.
    pub slower_fraction: f64,
    /// Trips near the site that never qualify as relevant.
    pub irrelevant: u64,
}

impl Default for WimWorldSpec {
    fn default() -> Self {
        WimWorldSpec {
            site_id: "site-1".into(),
            center_lat: 39.05,
            center_lon: -76.95,
            classes: vec![
                WimClassSpec {
                    weight_class: WeightClass::W0_14,
                    relevant: 3794,
                    circumvent_pct: 1.45,
                },
                WimClassSpec {
                    weight_class: WeightClass::W14_26,
                    relevant: 12333,
                    circumvent_pct: 0.61,
                },
                WimClassSpec {
                    weight_class: WeightClass::W26Plus,
                    relevant: 4847,
                    circumvent_pct: 0.0,
                },
            ],
            slower_fraction: 0.5,
            irrelevant: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WimClassTruth {
    pub weight_class: WeightClass,
    pub relevant: u64,
    pub circumventing: u64,
    /// Expected report value, formatted to two decimals.
    pub percentage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WimTruth {
    pub site_id: String,
    pub classes: Vec<WimClassTruth>,
    pub slower: u64,
    pub circumventing: u64,
    pub slower_fraction: Option<f64>,
    pub compliant_gate_to_gate_s: f64,
}

/// Integer count reproducing `pct` of `relevant` at two decimals.
pub fn circumventing_count(relevant: u64, pct: f64) -> Result<u64> {
    if !(0.0..=100.0).contains(&pct) {
        return cfg(format!("circumvention rate {pct}% outside [0, 100]"));
    }
    if relevant == 0 {
        return if pct == 0.0 { Ok(0) } else { cfg(format!("{pct}% of zero relevant trips is infeasible")) };
    }
    let c = (relevant as f64 * pct / 100.0).round() as u64;
    let got = format!("{:.2}", 100.0 * c as f64 / relevant as f64);
    if got != format!("{pct:.2}") {
        return cfg(format!(
            "{pct:.2}% of {relevant} is not reachable with whole trips (nearest {c} gives {got}%)"
        ));
    }
    Ok(c)
}

const WIM_GATE_TO_GATE_S: f64 = 300.0;

pub fn wim_site(spec: &WimWorldSpec) -> Result<WimSite> {
    let frame = LocalFrame::new(origin_point(spec.center_lat, spec.center_lon)?);
    let site = WimSite {
        site_id: spec.site_id.clone(),
        station: frame.origin(),
        corridor: rect(&frame, -5000.0, -150.0, 5000.0, 150.0)?,
        gate_up: rect(&frame, -3200.0, -100.0, -2800.0, 100.0)?,
        gate_down: rect(&frame, 2800.0, -100.0, 3200.0, 100.0)?,
        buffer: rect(&frame, -300.0, -100.0, 300.0, 100.0)?,
    };
    site.validate()?;
    Ok(site)
}

/// Eastbound trips through a weigh station with an exact planted number of
/// circumventing trips per weight class.
pub fn wim_world(spec: &WimWorldSpec, seed: u64) -> Result<(WimSite, Vec<Trip>, WimTruth)> {
    check_fraction("slower_fraction", spec.slower_fraction)?;
    let site = wim_site(spec)?;
    let frame = LocalFrame::new(site.station);
    let mut rng = stream(seed, 3);

    let mut plan: Vec<(WeightClass, bool)> = Vec::new();
    let mut classes = Vec::new();
    for c in &spec.classes {
        let n = circumventing_count(c.relevant, c.circumvent_pct)?;
        classes.push(WimClassTruth {
            weight_class: c.weight_class,
            relevant: c.relevant,
            circumventing: n,
            percentage: format!("{:.2}", c.circumvent_pct),
        });
        plan.extend((0..c.relevant).map(|i| (c.weight_class, i < n)));
    }
    plan.shuffle(&mut rng);
    let total_circ: u64 = classes.iter().map(|c| c.circumventing).sum();
    let n_slower = (total_circ as f64 * spec.slower_fraction).round() as u64;

    let jit = |rng: &mut ChaCha8Rng, x: f64, y: f64| {
        frame.to_latlon(x + rng.gen_range(-20.0..20.0), y + rng.gen_range(-20.0..20.0))
    };
    let approach = [-4500.0, -3700.0];
    let depart = [3700.0, 4500.0];
    let main = [-2000.0, -1000.0, 0.0, 1000.0, 2000.0];
    let detour = [(-2500.0, 1500.0), (-1000.0, 1500.0), (0.0, 1500.0), (1000.0, 1500.0), (2500.0, 1500.0)];

    let mut trips = Vec::with_capacity(plan.len() + spec.irrelevant as usize);
    let mut circ_seen = 0u64;
    for (i, (class, circ)) in plan.iter().enumerate() {
        let t0 = EPOCH_MS + i as i64 * 60_000;
        let gg_s = if *circ {
            circ_seen += 1;
            if circ_seen <= n_slower {
                WIM_GATE_TO_GATE_S + rng.gen_range(60.0..120.0)
            } else {
                WIM_GATE_TO_GATE_S - rng.gen_range(30.0..60.0)
            }
        } else {
            WIM_GATE_TO_GATE_S + rng.gen_range(-10.0..10.0)
        };
        let mut w = Vec::with_capacity(10);
        let mut t = t0;
        for x in approach {
            w.push(wp(jit(&mut rng, x, 0.0), t));
            t += 30_000;
        }
        w.push(wp(jit(&mut rng, -3000.0, 0.0), t));
        let gate_t = t;
        let step = (gg_s * 1000.0 / 6.0).round() as i64;
        let mid: Vec<(f64, f64)> = if *circ { detour.to_vec() } else { main.iter().map(|x| (*x, 0.0)).collect() };
        for (k, (x, y)) in mid.into_iter().enumerate() {
            w.push(wp(jit(&mut rng, x, y), gate_t + (k as i64 + 1) * step));
        }
        t = gate_t + (gg_s * 1000.0).round() as i64;
        w.push(wp(jit(&mut rng, 3000.0, 0.0), t));
        for x in depart {
            t += 30_000;
            w.push(wp(jit(&mut rng, x, 0.0), t));
        }
        trips.push(Trip::new(
            format!("w{:07}", i + 1),
            format!("dev-w{:07}", i + 1),
            Mode::Vehicle,
            *class,
            Provider::Fleet,
            w,
        )?);
    }
    let all = [WeightClass::W0_14, WeightClass::W14_26, WeightClass::W26Plus];
    for j in 0..spec.irrelevant as usize {
        let i = plan.len() + j;
        let t0 = EPOCH_MS + i as i64 * 60_000;
        // Westbound through both gates, or eastbound leaving before the
        // downstream gate.
        let xs: Vec<f64> = if j % 2 == 0 {
            vec![4500.0, 3000.0, 1000.0, 0.0, -1000.0, -3000.0, -4500.0]
        } else {
            vec![-4500.0, -3000.0, -1000.0, 0.0, 1000.0]
        };
        let w = xs
            .iter()
            .enumerate()
            .map(|(k, x)| wp(jit(&mut rng, *x, 0.0), t0 + k as i64 * 60_000))
            .collect();
        trips.push(Trip::new(
            format!("w{:07}", i + 1),
            format!("dev-w{:07}", i + 1),
            Mode::Vehicle,
            *all.choose(&mut rng).unwrap(),
            Provider::Fleet,
            w,
        )?);
    }
    let truth = WimTruth {
        site_id: site.site_id.clone(),
        classes,
        slower: n_slower,
        circumventing: total_circ,
        slower_fraction: (total_circ > 0).then(|| n_slower as f64 / total_circ as f64),
        compliant_gate_to_gate_s: WIM_GATE_TO_GATE_S,
    };
    Ok((site, trips, truth))
}

// ---------------------------------------------------------------- corridor

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorridorFleetSpec {
    pub center_lat: f64,
    pub center_lon: f64,
    pub days: usize,
    pub trips_per_hour: usize,
    /// Local departure hours covered, inclusive.
    pub first_hour: u32,
    pub last_hour: u32,
    pub base_travel_s: f64,
    pub am_peak_hours: Vec<u32>,
    pub pm_peak_hours: Vec<u32>,
    pub am_peak_factor: f64,
    pub pm_peak_factor: f64,
    /// Uniform relative noise on every travel time.
    pub jitter: f64,
    pub route_names: Vec<String>,
    pub route_shares: Vec<f64>,
    /// Trips near the regions that do not go from A to B.
    pub other_trips: usize,
}

impl Default for CorridorFleetSpec {
    fn default() -> Self {
        CorridorFleetSpec {
            center_lat: 39.30,
            center_lon: -76.75,
            days: 14,
            trips_per_hour: 12,
            first_hour: 5,
            last_hour: 21,
            base_travel_s: 1500.0,
            am_peak_hours: vec![7],
            pm_peak_hours: vec![16, 17],
            am_peak_factor: 1.6,
            pm_peak_factor: 1.45,
            jitter: 0.05,
            route_names: vec!["north".into(), "central".into(), "south".into()],
            route_shares: vec![0.5, 0.3, 0.2],
            other_trips: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorTruth {
    pub tz_offset_hours: i32,
    pub am_peak_hours: Vec<u32>,
    pub pm_peak_hours: Vec<u32>,
    pub base_travel_s: f64,
    pub route_shares: Vec<(String, f64)>,
    pub route_counts: Vec<(String, usize)>,
    pub qualifying_trips: usize,
}

impl CorridorFleetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.first_hour > self.last_hour || self.last_hour > 23 {
            return cfg(format!("departure hours {}..={} are not a valid range", self.first_hour, self.last_hour));
        }
        check_positive("base_travel_s", self.base_travel_s)?;
        check_positive("am_peak_factor", self.am_peak_factor)?;
        check_positive("pm_peak_factor", self.pm_peak_factor)?;
        if !(0.0..0.5).contains(&self.jitter) {
            return cfg(format!("jitter must lie in [0, 0.5), got {}", self.jitter));
        }
        if self.route_names.len() != self.route_shares.len() || self.route_names.is_empty() || self.route_names.len() > 3 {
            return cfg("corridor needs one to three named routes with one share each");
        }
        if self.route_shares.iter().any(|s| !(*s >= 0.0)) || (self.route_shares.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return cfg("route shares must be non-negative and sum to 1");
        }
        Ok(())
    }
}

/// Offsets, in meters north, of the route bands.
const ROUTE_BANDS: [f64; 3] = [3000.0, 0.0, -3000.0];

pub fn corridor_regions(spec: &CorridorFleetSpec) -> Result<CorridorSpec> {
    let frame = LocalFrame::new(origin_point(spec.center_lat, spec.center_lon)?);
    let routes = spec
        .route_names
        .iter()
        .zip(ROUTE_BANDS)
        .map(|(name, y)| Ok((name.clone(), rect(&frame, 1200.0, y - 600.0, 18800.0, y + 600.0)?)))
        .collect::<Result<_>>()?;
    Ok(CorridorSpec {
        origin: rect(&frame, -1000.0, -1000.0, 1000.0, 1000.0)?,
        destination: rect(&frame, 19000.0, -1000.0, 21000.0, 1000.0)?,
        routes,
        tz_offset_hours: DEFAULT_TZ_OFFSET_HOURS,
    })
}

/// Trips from region A to region B with planted weekday rush-hour
/// slowdowns and a flat weekend.
pub fn corridor_fleet(spec: &CorridorFleetSpec, seed: u64) -> Result<(CorridorSpec, Vec<Trip>, CorridorTruth)> {
    spec.validate()?;
    let regions = corridor_regions(spec)?;
    let frame = LocalFrame::new(origin_point(spec.center_lat, spec.center_lon)?);
    let mut rng = stream(seed, 4);
    let tz_ms = -(regions.tz_offset_hours as i64) * HOUR_MS;
    let mut trips = Vec::new();
    let mut counts = vec![0usize; spec.route_names.len()];
    let pt = |rng: &mut ChaCha8Rng, x: f64, y: f64| frame.to_latlon(x + rng.gen_range(-50.0..50.0), y + rng.gen_range(-50.0..50.0));
    for day in 0..spec.days {
        // EPOCH_MS is a Monday.
        let weekend = day % 7 >= 5;
        for hour in spec.first_hour..=spec.last_hour {
            for _ in 0..spec.trips_per_hour {
                let start = EPOCH_MS + day as i64 * DAY_MS + hour as i64 * HOUR_MS + tz_ms + rng.gen_range(0..3_540_000);
                let factor = if weekend {
                    1.0
                } else if spec.am_peak_hours.contains(&hour) {
                    spec.am_peak_factor
                } else if spec.pm_peak_hours.contains(&hour) {
                    spec.pm_peak_factor
                } else {
                    1.0
                };
                let travel_ms =
                    (spec.base_travel_s * factor * (1.0 + rng.gen_range(-spec.jitter..=spec.jitter)) * 1000.0).round() as i64;
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut route = spec.route_shares.len() - 1;
                for (k, s) in spec.route_shares.iter().enumerate() {
                    acc += s;
                    if u < acc {
                        route = k;
                        break;
                    }
                }
                counts[route] += 1;
                let band = ROUTE_BANDS[route];
                let mut w = vec![
                    wp(pt(&mut rng, -500.0, 0.0), start),
                    wp(pt(&mut rng, 0.0, 0.0), start + 20_000),
                    wp(pt(&mut rng, 700.0, 0.0), start + 40_000),
                ];
                let leave = start + 40_000;
                for k in 0..8 {
                    let x = 2000.0 + k as f64 * 2250.0;
                    w.push(wp(pt(&mut rng, x, band), leave + travel_ms * (k + 1) / 9));
                }
                w.push(wp(pt(&mut rng, 19500.0, 0.0), leave + travel_ms));
                w.push(wp(pt(&mut rng, 20300.0, 0.0), leave + travel_ms + 30_000));
                let id = format!("c{:07}", trips.len() + 1);
                trips.push(Trip::new(id.clone(), format!("dev-{id}"), Mode::Vehicle, WeightClass::Unknown, Provider::Consumer, w)?);
            }
        }
    }
    let qualifying = trips.len();
    for j in 0..spec.other_trips {
        let start = EPOCH_MS + (j as i64 % 14) * DAY_MS + 12 * HOUR_MS + j as i64 * 60_000;
        // Either B to A, or a loop that never leaves A.
        let xs: &[f64] = if j % 2 == 0 { &[20300.0, 19500.0, 10000.0, 700.0, -500.0] } else { &[-500.0, 0.0, 500.0] };
        let w = xs
            .iter()
            .enumerate()
            .map(|(k, x)| wp(pt(&mut rng, *x, 0.0), start + k as i64 * 300_000))
            .collect();
        let id = format!("c{:07}", trips.len() + 1);
        trips.push(Trip::new(id.clone(), format!("dev-{id}"), Mode::Vehicle, WeightClass::Unknown, Provider::Consumer, w)?);
    }
    let truth = CorridorTruth {
        tz_offset_hours: regions.tz_offset_hours,
        am_peak_hours: spec.am_peak_hours.clone(),
        pm_peak_hours: spec.pm_peak_hours.clone(),
        base_travel_s: spec.base_travel_s,
        route_shares: spec.route_names.iter().cloned().zip(spec.route_shares.iter().copied()).collect(),
        route_counts: spec.route_names.iter().cloned().zip(counts).collect(),
        qualifying_trips: qualifying,
    };
    Ok((regions, trips, truth))
}

// ---------------------------------------------------------------- zones

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoneWorldSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// States sit side by side, west to east.
    pub states: usize,
    /// Each state is a square of `counties_per_side`² counties, each a
    /// square of `taz_per_side`² TAZs.
    pub counties_per_side: usize,
    pub taz_per_side: usize,
    pub taz_size_m: f64,
    pub trips: usize,
    /// Share of trips with one end outside every zone.
    pub outside_fraction: f64,
    /// Share of origins drawn from the hotspot TAZ.
    pub hotspot_fraction: f64,
}

impl Default for ZoneWorldSpec {
    fn default() -> Self {
        ZoneWorldSpec {
            origin_lat: 38.90,
            origin_lon: -77.30,
            states: 2,
            counties_per_side: 2,
            taz_per_side: 3,
            taz_size_m: 3000.0,
            trips: 10_000,
            outside_fraction: 0.05,
            hotspot_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneTruth {
    pub trips: usize,
    pub unassigned: u64,
    /// Expected TAZ-level counts, `(origin, destination, count)`.
    pub taz_counts: Vec<(String, String, u64)>,
    pub hotspot_taz: String,
    /// Grid whose cells are the TAZs; the hotspot is `hotspot_cell`.
    pub heat_grid: GridSpec,
    pub hotspot_cell: (usize, usize),
}

/// TAZ, county and state systems with nested rectangular zones.
#[derive(Debug, Clone)]
pub struct ZoneHierarchy {
    pub taz: ZoneSystem,
    pub county: ZoneSystem,
    pub state: ZoneSystem,
    /// TAZ id by `(row, col)` of the TAZ lattice.
    taz_ids: Vec<Vec<String>>,
    frame: LocalFrame<f64>,
    size_m: f64,
}

impl ZoneHierarchy {
    pub fn new(spec: &ZoneWorldSpec) -> Result<Self> {
        if spec.states == 0 || spec.counties_per_side == 0 || spec.taz_per_side == 0 {
            return cfg("zone hierarchy needs at least one state, county and TAZ per side");
        }
        if spec.states > 9 || spec.counties_per_side > 9 || spec.taz_per_side > 9 {
            return cfg("zone hierarchy supports at most 9 units per level and side");
        }
        check_positive("taz_size_m", spec.taz_size_m)?;
        let frame = LocalFrame::new(origin_point(spec.origin_lat, spec.origin_lon)?);
        let (cps, tps, s) = (spec.counties_per_side, spec.taz_per_side, spec.taz_size_m);
        let side = cps * tps;
        let cell = |r0: usize, c0: usize, n: usize| {
            rect(&frame, c0 as f64 * s, r0 as f64 * s, (c0 + n) as f64 * s, (r0 + n) as f64 * s)
        };
        let (mut states, mut counties, mut tazs) = (Vec::new(), Vec::new(), Vec::new());
        let mut taz_ids = vec![vec![String::new(); spec.states * side]; side];
        for st in 0..spec.states {
            let sid = st + 1;
            states.push(Zone {
                id: sid.to_string(),
                name: format!("State {sid}"),
                polygon: cell(0, st * side, side)?,
                parent: None,
            });
            for cr in 0..cps {
                for cc in 0..cps {
                    let cid = sid * 100 + cr * cps + cc + 1;
                    counties.push(Zone {
                        id: cid.to_string(),
                        name: format!("County {cid}"),
                        polygon: cell(cr * tps, st * side + cc * tps, tps)?,
                        parent: Some(sid.to_string()),
                    });
                    for tr in 0..tps {
                        for tc in 0..tps {
                            let tid = cid * 100 + tr * tps + tc + 1;
                            let (row, col) = (cr * tps + tr, st * side + cc * tps + tc);
                            taz_ids[row][col] = tid.to_string();
                            tazs.push(Zone {
                                id: tid.to_string(),
                                name: format!("TAZ {tid}"),
                                polygon: cell(row, col, 1)?,
                                parent: Some(cid.to_string()),
                            });
                        }
                    }
                }
            }
        }
        Ok(ZoneHierarchy {
            taz: ZoneSystem::new(ZoneLevel::Taz, tazs)?,
            county: ZoneSystem::new(ZoneLevel::County, counties)?,
            state: ZoneSystem::new(ZoneLevel::State, states)?,
            taz_ids,
            frame,
            size_m: s,
        })
    }

    pub fn to_geojson(&self) -> crate::geojson::FeatureCollection {
        let mut fc = crate::geojson::FeatureCollection::default();
        self.taz.append_geojson(&mut fc);
        self.county.append_geojson(&mut fc);
        self.state.append_geojson(&mut fc);
        fc
    }

    fn rows(&self) -> usize {
        self.taz_ids.len()
    }

    fn cols(&self) -> usize {
        self.taz_ids[0].len()
    }

    /// Uniform point strictly inside TAZ cell `(row, col)`.
    fn point_in(&self, rng: &mut ChaCha8Rng, row: usize, col: usize) -> Point {
        let s = self.size_m;
        self.frame.to_latlon(
            (col as f64 + rng.gen_range(0.02..0.98)) * s,
            (row as f64 + rng.gen_range(0.02..0.98)) * s,
        )
    }
}

/// Two-point trips between TAZ cells with a known zone for every endpoint.
pub fn zone_world(spec: &ZoneWorldSpec, seed: u64) -> Result<(ZoneHierarchy, Vec<Trip>, ZoneTruth)> {
    check_fraction("outside_fraction", spec.outside_fraction)?;
    check_fraction("hotspot_fraction", spec.hotspot_fraction)?;
    let h = ZoneHierarchy::new(spec)?;
    let mut rng = stream(seed, 5);
    let (rows, cols) = (h.rows(), h.cols());
    let hot = (rows / 2, cols / 4);
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut unassigned = 0;
    let mut trips = Vec::with_capacity(spec.trips);
    for i in 0..spec.trips {
        let o = if rng.gen_bool(spec.hotspot_fraction) { hot } else { (rng.gen_range(0..rows), rng.gen_range(0..cols)) };
        let d = (rng.gen_range(0..rows), rng.gen_range(0..cols));
        let op = h.point_in(&mut rng, o.0, o.1);
        let dp = if rng.gen_bool(spec.outside_fraction) {
            unassigned += 1;
            h.frame.to_latlon(rng.gen_range(0.0..cols as f64 * h.size_m), -rng.gen_range(2000.0..8000.0))
        } else {
            *counts.entry((h.taz_ids[o.0][o.1].clone(), h.taz_ids[d.0][d.1].clone())).or_default() += 1;
            h.point_in(&mut rng, d.0, d.1)
        };
        let t0 = EPOCH_MS + i as i64 * 30_000;
        let w = vec![wp(op, t0), wp(op.midpoint(dp), t0 + 900_000), wp(dp, t0 + 1_800_000)];
        let id = format!("z{:07}", i + 1);
        trips.push(Trip::new(id.clone(), format!("dev-{id}"), Mode::Vehicle, WeightClass::Unknown, Provider::Consumer, w)?);
    }
    let truth = ZoneTruth {
        trips: spec.trips,
        unassigned,
        taz_counts: counts.into_iter().map(|((o, d), n)| (o, d, n)).collect(),
        hotspot_taz: h.taz_ids[hot.0][hot.1].clone(),
        heat_grid: GridSpec::new(h.frame.origin(), h.size_m, rows, cols)?,
        hotspot_cell: hot,
    };
    Ok((h, trips, truth))
}

// ---------------------------------------------------------------- radial

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadialSpec {
    pub center_lat: f64,
    pub center_lon: f64,
    pub spokes: usize,
    pub trips_per_spoke: usize,
    pub speed_mps: f64,
    pub duration_min: f64,
    pub interval_s: f64,
    pub sigma_m: f64,
    /// Half-width of the square origin region.
    pub origin_half_m: f64,
}

impl Default for RadialSpec {
    fn default() -> Self {
        RadialSpec {
            center_lat: 39.26,
            center_lon: -76.58,
            spokes: 16,
            trips_per_spoke: 3,
            speed_mps: 10.0,
            duration_min: 45.0,
            interval_s: 10.0,
            sigma_m: 5.0,
            origin_half_m: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialTruth {
    pub center: Point,
    pub speed_mps: f64,
    pub spokes: usize,
}

/// Straight drives outward from a common origin at uniform speed, one
/// spoke per equal bearing step.
pub fn radial_world(spec: &RadialSpec, seed: u64) -> Result<(GeoPolygon, Vec<Trip>, RadialTruth)> {
    check_positive("duration_min", spec.duration_min)?;
    check_positive("origin_half_m", spec.origin_half_m)?;
    let tp = TraceParams {
        speed_mps: spec.speed_mps,
        interval_s: spec.interval_s,
        sigma_m: spec.sigma_m,
    };
    tp.validate()?;
    let center = origin_point(spec.center_lat, spec.center_lon)?;
    let frame = LocalFrame::new(center);
    let half = spec.origin_half_m;
    let origin = rect(&frame, -half, -half, half, half)?;
    let mut rng = stream(seed, 6);
    let reach = spec.speed_mps * spec.duration_min * 60.0;
    let mut trips = Vec::new();
    for s in 0..spec.spokes {
        let bearing = (s as f64 * 360.0 / spec.spokes as f64).to_radians();
        for _ in 0..spec.trips_per_spoke {
            let j = half / 3.0;
            let (x0, y0) = (rng.gen_range(-j..j), rng.gen_range(-j..j));
            let line = vec![
                frame.to_latlon(x0, y0),
                frame.to_latlon(x0 + reach * bearing.sin(), y0 + reach * bearing.cos()),
            ];
            let t0 = EPOCH_MS + trips.len() as i64 * 600_000;
            let wps = sample_polyline(&line, 0.0, reach, t0, &tp, &mut rng);
            let id = format!("r{:06}", trips.len() + 1);
            trips.push(Trip::new(id.clone(), format!("dev-{id}"), Mode::Vehicle, WeightClass::Unknown, Provider::Consumer, wps)?);
        }
    }
    Ok((
        origin,
        trips,
        RadialTruth {
            center,
            speed_mps: spec.speed_mps,
            spokes: spec.spokes,
        },
    ))
}

// ---------------------------------------------------------------- transit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitWorldSpec {
    /// Commute along a grid row far from every transit route.
    pub uncovered_trips: usize,
    /// Commutes along the two transit routes.
    pub covered_row_trips: usize,
    pub covered_col_trips: usize,
    pub noise_trips: usize,
    pub speed_mps: f64,
    pub interval_s: f64,
    pub sigma_m: f64,
}

impl Default for TransitWorldSpec {
    fn default() -> Self {
        TransitWorldSpec {
            uncovered_trips: 40,
            covered_row_trips: 25,
            covered_col_trips: 20,
            noise_trips: 10,
            speed_mps: 12.0,
            interval_s: 2.0,
            sigma_m: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommuteTruth {
    pub name: String,
    pub trip_ids: Vec<String>,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitTruth {
    pub commutes: Vec<CommuteTruth>,
    pub noise_trips: usize,
}

/// Transit along grid row 2 and the middle column, planted commute
/// clusters on and off those lines, and scattered noise trips.
pub fn transit_world(
    g: &GridWorld,
    spec: &TransitWorldSpec,
    seed: u64,
) -> Result<(TransitNetwork, Vec<PlantedRoute>, TransitTruth)> {
    if g.rows < 6 || g.cols < 6 {
        return cfg("transit world needs a grid of at least 6x6 nodes");
    }
    let tp = TraceParams {
        speed_mps: spec.speed_mps,
        interval_s: spec.interval_s,
        sigma_m: spec.sigma_m,
    };
    tp.validate()?;
    let (row_t, col_t, row_u) = (2, g.cols / 2, g.rows - 2);
    let row_path = |r: usize| (0..g.cols).map(|c| (r, c)).collect::<Vec<_>>();
    let col_path: Vec<GridNode> = (0..g.rows).map(|r| (r, col_t)).collect();
    let line = |p: &[GridNode]| p.iter().map(|n| g.position(*n)).collect::<Vec<_>>();
    let tn = TransitNetwork::new(vec![
        TransitRoute {
            route_id: "T1".into(),
            name: "Crosstown".into(),
            line: line(&row_path(row_t)),
        },
        TransitRoute {
            route_id: "T2".into(),
            name: "Uptown".into(),
            line: line(&col_path),
        },
    ])?;
    let mut rng = stream(seed, 7);
    let mut out = Vec::new();
    let mut commutes = Vec::new();
    let plan = [
        ("uncovered", row_path(row_u), spec.uncovered_trips, false),
        ("crosstown", row_path(row_t), spec.covered_row_trips, true),
        ("uptown", col_path.clone(), spec.covered_col_trips, true),
    ];
    for (name, path, n, covered) in plan {
        let mut ids = Vec::new();
        for _ in 0..n {
            let id = format!("t{:06}", out.len() + 1);
            let t0 = EPOCH_MS + out.len() as i64 * 900_000;
            let wps = g.drive(&path, t0, &tp, &mut rng);
            out.push(PlantedRoute {
                trip: Trip::vehicle(id.clone(), wps)?,
                links: g.path_links(&path),
            });
            ids.push(id);
        }
        commutes.push(CommuteTruth {
            name: name.into(),
            trip_ids: ids,
            covered,
        });
    }
    for _ in 0..spec.noise_trips {
        let path = loop {
            let start = g.random_node(&mut rng);
            let n = rng.gen_range(3..=6);
            let p = g.random_walk(&mut rng, start, n);
            if p.len() >= 3 {
                break p;
            }
        };
        let id = format!("t{:06}", out.len() + 1);
        let t0 = EPOCH_MS + out.len() as i64 * 900_000;
        let wps = g.drive(&path, t0, &tp, &mut rng);
        out.push(PlantedRoute {
            trip: Trip::vehicle(id, wps)?,
            links: g.path_links(&path),
        });
    }
    Ok((
        tn,
        out,
        TransitTruth {
            commutes,
            noise_trips: spec.noise_trips,
        },
    ))
}

// ---------------------------------------------------------------- speeding

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedWorldSpec {
    pub trips: usize,
    pub ambient_mps: f64,
    pub fast_factor: f64,
    /// Row of the grid network carrying the planted fast trips.
    pub hot_row: usize,
    /// Share of hot-row trips driven at `fast_factor` times ambient.
    pub fast_fraction: f64,
    pub interval_s: f64,
    pub sigma_m: f64,
}

impl Default for SpeedWorldSpec {
    fn default() -> Self {
        SpeedWorldSpec {
            trips: 240,
            ambient_mps: 12.0,
            fast_factor: 2.0,
            hot_row: 5,
            fast_fraction: 0.2,
            interval_s: 5.0,
            sigma_m: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedTruth {
    /// Grid whose cell rows are centred on the road rows.
    pub grid: GridSpec,
    pub hot_row: usize,
    pub ambient_mps: f64,
    pub fast_mps: f64,
    pub fast_trips: usize,
}

/// East-west drives along grid rows; a share of drives on one row go fast.
pub fn speed_world(g: &GridWorld, spec: &SpeedWorldSpec, seed: u64) -> Result<(Vec<Trip>, SpeedTruth)> {
    if spec.hot_row >= g.rows {
        return cfg(format!("hot_row {} outside a grid of {} rows", spec.hot_row, g.rows));
    }
    check_fraction("fast_fraction", spec.fast_fraction)?;
    check_positive("fast_factor", spec.fast_factor)?;
    let base = TraceParams {
        speed_mps: spec.ambient_mps,
        interval_s: spec.interval_s,
        sigma_m: spec.sigma_m,
    };
    base.validate()?;
    let mut rng = stream(seed, 8);
    let mut trips = Vec::with_capacity(spec.trips);
    let mut fast_trips = 0;
    for i in 0..spec.trips {
        let row = if i % 4 == 0 { spec.hot_row } else { rng.gen_range(0..g.rows) };
        let fast = row == spec.hot_row && rng.gen_bool(spec.fast_fraction);
        fast_trips += fast as usize;
        let tp = TraceParams {
            speed_mps: if fast {
                spec.ambient_mps * spec.fast_factor
            } else {
                spec.ambient_mps * rng.gen_range(0.9..1.1)
            },
            ..base
        };
        let mut path: Vec<GridNode> = (0..g.cols).map(|c| (row, c)).collect();
        if rng.gen_bool(0.5) {
            path.reverse();
        }
        let wps = g.drive(&path, EPOCH_MS + i as i64 * 300_000, &tp, &mut rng);
        trips.push(Trip::vehicle(format!("s{:06}", i + 1), wps)?);
    }
    let half = g.spacing_m / 2.0;
    let grid = GridSpec::new(LocalFrame::new(g.origin).to_latlon(-half, -half), g.spacing_m, g.rows, g.cols)?;
    Ok((
        trips,
        SpeedTruth {
            grid,
            hot_row: spec.hot_row,
            ambient_mps: spec.ambient_mps,
            fast_mps: spec.ambient_mps * spec.fast_factor,
            fast_trips,
        },
    ))
}

// ---------------------------------------------------------------- world

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    pub grid: GridWorldSpec,
    pub routes: RouteTripSpec,
    pub fleet: FleetSpec,
    pub wim: WimWorldSpec,
    pub corridor: CorridorFleetSpec,
    pub zones: ZoneWorldSpec,
    pub radial: RadialSpec,
    pub transit: TransitWorldSpec,
    pub speed: SpeedWorldSpec,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 42,
            grid: GridWorldSpec::default(),
            routes: RouteTripSpec::default(),
            fleet: FleetSpec::default(),
            wim: WimWorldSpec::default(),
            corridor: CorridorFleetSpec::default(),
            zones: ZoneWorldSpec::default(),
            radial: RadialSpec::default(),
            transit: TransitWorldSpec::default(),
            speed: SpeedWorldSpec::default(),
        }
    }
}

impl WorldSpec {
    /// A world with its geometry intact and every trip count at zero.
    pub fn empty(seed: u64) -> Self {
        let mut s = WorldSpec {
            seed,
            ..WorldSpec::default()
        };
        s.routes.trips = 0;
        s.fleet.stations = 0;
        s.wim.classes.iter_mut().for_each(|c| {
            c.relevant = 0;
            c.circumvent_pct = 0.0;
        });
        s.wim.irrelevant = 0;
        s.corridor.days = 0;
        s.corridor.other_trips = 0;
        s.zones.trips = 0;
        s.radial.spokes = 0;
        s.transit = TransitWorldSpec {
            uncovered_trips: 0,
            covered_row_trips: 0,
            covered_col_trips: 0,
            noise_trips: 0,
            ..TransitWorldSpec::default()
        };
        s.speed.trips = 0;
        s
    }
}

/// Ground truth planted in a world, written beside the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: WorldSpec,
    pub grid_nodes: usize,
    pub grid_directed_edges: usize,
    pub fleet: FleetTruth,
    pub wim: WimTruth,
    pub corridor: CorridorTruth,
    pub zones: ZoneTruth,
    pub radial: RadialTruth,
    pub transit: TransitTruth,
    pub speed: SpeedTruth,
}

/// Every scenario's corpus. Trips that are matched against the grid
/// network (`grid_trips`, `transit_trips`) carry their driven links.
#[derive(Debug, Clone)]
pub struct World {
    pub grid: GridWorld,
    /// Random drives followed by the counter-fleet probes.
    pub grid_trips: Vec<PlantedRoute>,
    pub atr: Vec<AtrRecord>,
    pub wim_site: WimSite,
    pub wim_trips: Vec<Trip>,
    pub corridor: CorridorSpec,
    pub corridor_trips: Vec<Trip>,
    pub zones: ZoneHierarchy,
    pub od_trips: Vec<Trip>,
    pub isochrone_origin: GeoPolygon,
    pub radial_trips: Vec<Trip>,
    pub transit: TransitNetwork,
    pub transit_trips: Vec<PlantedRoute>,
    pub speed_trips: Vec<Trip>,
    pub truth: Truth,
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    let seed = spec.seed;
    let grid = GridWorld::new(&spec.grid)?;
    let mut grid_trips = route_trips(&grid, &spec.routes, seed, "g", EPOCH_MS)?;
    let mut rng = stream(seed, 9);
    let plan = plan_fleet(&grid, &spec.fleet, &mut rng, EPOCH_MS / HOUR_MS)?;
    grid_trips.extend(fleet_trips(&grid, &spec.fleet, &mut rng, &plan)?);
    let (wim_site, wim_trips, wim) = wim_world(&spec.wim, seed)?;
    let (corridor, corridor_trips, corridor_truth) = corridor_fleet(&spec.corridor, seed)?;
    let (zones, od_trips, zone_truth) = zone_world(&spec.zones, seed)?;
    let (isochrone_origin, radial_trips, radial) = radial_world(&spec.radial, seed)?;
    let (transit, transit_trips, transit_truth) = transit_world(&grid, &spec.transit, seed)?;
    let (speed_trips, speed) = speed_world(&grid, &spec.speed, seed)?;
    let truth = Truth {
        spec: spec.clone(),
        grid_nodes: grid.net.n_nodes(),
        grid_directed_edges: grid.net.n_edges(),
        fleet: plan.truth,
        wim,
        corridor: corridor_truth,
        zones: zone_truth,
        radial,
        transit: transit_truth,
        speed,
    };
    Ok(World {
        grid,
        grid_trips,
        atr: plan.atr,
        wim_site,
        wim_trips,
        corridor,
        corridor_trips,
        zones,
        od_trips,
        isochrone_origin,
        radial_trips,
        transit,
        transit_trips,
        speed_trips,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{build_od_matrix, corridor_analysis, DayType};
    use crate::enforcement::detect_wim_evasion;

    #[test]
    fn ten_by_ten_grid() {
        let g = GridWorld::new(&GridWorldSpec {
            rows: 10,
            cols: 10,
            ..GridWorldSpec::default()
        })
        .unwrap();
        assert_eq!(g.net.n_nodes(), 100);
        assert_eq!(g.net.n_edges(), 360);
        let l = g.net.link(g.link_between((3, 4), (3, 5)).unwrap()).unwrap();
        assert!((l.length_m() - 250.0).abs() < 0.5);
    }

    #[test]
    fn route_trips_follow_their_links() {
        let g = GridWorld::new(&GridWorldSpec::default()).unwrap();
        let r = route_trips(&g, &RouteTripSpec { trips: 5, ..Default::default() }, 7, "g", EPOCH_MS).unwrap();
        assert_eq!(r.len(), 5);
        for p in &r {
            assert!(p.links.len() >= 5);
            let first = g.net.link(p.links[0]).unwrap();
            let proj = g.net.project(p.trip.origin(), first);
            assert!(proj.distance_m < 25.0);
            let w = p.trip.waypoints();
            assert!(w.windows(2).all(|x| x[1].t_ms - x[0].t_ms == 1000 || x[1].t_ms > x[0].t_ms));
        }
    }

    #[test]
    fn wim_counts_reproduce_table() {
        assert_eq!(circumventing_count(3794, 1.45).unwrap(), 55);
        assert_eq!(circumventing_count(12333, 0.61).unwrap(), 75);
        assert_eq!(circumventing_count(4847, 0.0).unwrap(), 0);
        assert!(circumventing_count(1775, 1.82).is_err());
        assert!(circumventing_count(100, 120.0).is_err());
    }

    #[test]
    fn small_wim_world_classifies_as_planted() {
        let spec = WimWorldSpec {
            classes: vec![WimClassSpec {
                weight_class: WeightClass::W0_14,
                relevant: 200,
                circumvent_pct: 5.0,
            }],
            irrelevant: 20,
            ..Default::default()
        };
        let (site, trips, truth) = wim_world(&spec, 1).unwrap();
        let r = detect_wim_evasion(&trips, &site);
        let row = r.row(WeightClass::W0_14).unwrap();
        assert_eq!((row.relevant, row.circumventing), (200, 10));
        assert_eq!(r.detour.fraction, truth.slower_fraction);
    }

    #[test]
    fn corridor_peaks_are_visible() {
        let spec = CorridorFleetSpec {
            days: 7,
            trips_per_hour: 5,
            ..Default::default()
        };
        let (regions, trips, truth) = corridor_fleet(&spec, 3).unwrap();
        let rep = corridor_analysis(&trips, &regions).unwrap();
        assert_eq!(rep.trips.len(), truth.qualifying_trips);
        let am = rep.hour_bin(DayType::Weekday, 7).unwrap().median_s;
        let noon = rep.hour_bin(DayType::Weekday, 12).unwrap().median_s;
        assert!(am > 1.3 * noon);
        assert_eq!(rep.unassigned, 0);
    }

    #[test]
    fn zone_truth_matches_matrix() {
        let spec = ZoneWorldSpec {
            trips: 500,
            ..Default::default()
        };
        let (h, trips, truth) = zone_world(&spec, 9).unwrap();
        let m = build_od_matrix(&trips, &h.taz);
        assert_eq!(m.unassigned, truth.unassigned);
        for (o, d, n) in &truth.taz_counts {
            assert_eq!(m.get(o, d), *n);
        }
        assert_eq!(m.total() + m.unassigned, 500);
    }

    #[test]
    fn empty_world_is_valid() {
        let w = generate_world(&WorldSpec::empty(5)).unwrap();
        assert!(w.grid_trips.is_empty() && w.wim_trips.is_empty() && w.od_trips.is_empty());
        assert!(w.atr.is_empty());
        assert_eq!(w.truth.grid_nodes, 144);
    }

    #[test]
    fn infeasible_specs_are_config_errors() {
        let mut s = WorldSpec::empty(1);
        s.fleet.sampling_p = 1.5;
        assert!(matches!(generate_world(&s), Err(Error::Config(_))));
        let mut s = WorldSpec::empty(1);
        s.wim.slower_fraction = -0.1;
        assert!(matches!(generate_world(&s), Err(Error::Config(_))));
        let mut s = WorldSpec::empty(1);
        s.grid.rows = 1;
        assert!(matches!(generate_world(&s), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_world() {
        let mut s = WorldSpec::empty(11);
        s.routes.trips = 3;
        s.zones.trips = 20;
        let a = generate_world(&s).unwrap();
        let b = generate_world(&s).unwrap();
        assert_eq!(a.grid_trips, b.grid_trips);
        assert_eq!(a.od_trips, b.od_trips);
    }
}
