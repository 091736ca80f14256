//! Density-based clustering: DBSCAN labelling and OPTICS reachability
//! ordering with horizontal-cut cluster extraction.
//!
//! Both algorithms run over a [`Neighborhood`], which answers fixed-radius
//! queries. [`GeoNeighborhood`] indexes lat/lon points with haversine
//! distances; [`PairwiseNeighborhood`] wraps an arbitrary metric (used for
//! O-D pairs). Processing is sequential in index order, so results are
//! deterministic for a given input order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geo::{haversine, lit, GeoFloat, LatLon, EARTH_RADIUS_M};
use crate::{Error, Result};

/// Neighbourhood radius (meters) and minimum neighbourhood size, the point
/// itself included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams<T> {
    pub eps: T,
    pub min_pts: usize,
}

impl<T: GeoFloat> ClusterParams<T> {
    pub fn new(eps: T, min_pts: usize) -> Result<Self> {
        let p = ClusterParams { eps, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > T::zero()) || !self.eps.is_finite() {
            return Err(Error::Domain("eps must be positive".into()));
        }
        if self.min_pts < 1 {
            return Err(Error::Domain("min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Core,
    Border,
    Noise,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Core => "core",
            Role::Border => "border",
            Role::Noise => "noise",
        }
    }
}

/// Per-point cluster assignment. `labels[i]` is `None` exactly for noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    pub labels: Vec<Option<usize>>,
    pub roles: Vec<Role>,
}

impl ClusterLabeling {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    pub fn indices_with_role(&self, role: Role) -> Vec<usize> {
        (0..self.roles.len()).filter(|&i| self.roles[i] == role).collect()
    }

    /// Point indices per cluster id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }

    /// CSV `point_index,cluster_id,role`; noise has cluster id -1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["point_index", "cluster_id", "role"])?;
        for (i, (l, r)) in self.labels.iter().zip(&self.roles).enumerate() {
            let id = l.map_or(-1, |c| c as i64);
            w.write_record([i.to_string(), id.to_string(), r.as_str().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fixed-radius neighbour queries over an indexed point set.
pub trait Neighborhood<T> {
    fn len(&self) -> usize;

    /// Fills `out` with `(j, dist(i, j))` for every `j` (including `i`)
    /// with `dist <= radius`, in ascending `j`.
    fn neighbors(&self, i: usize, radius: T, out: &mut Vec<(usize, T)>);
}

/// Haversine neighbourhoods over lat/lon points via a uniform degree grid.
pub struct GeoNeighborhood<'a, T> {
    points: &'a [LatLon<T>],
    build_radius: T,
    cell_lat: T,
    cell_lon: T,
    cells: Option<HashMap<(i64, i64), Vec<u32>>>,
}

impl<'a, T: GeoFloat> GeoNeighborhood<'a, T> {
    /// Builds an index tuned for queries of radius `radius_m`.
    pub fn new(points: &'a [LatLon<T>], radius_m: T) -> Self {
        let m_per_deg = lit::<T>(EARTH_RADIUS_M) * T::PI() / lit(180.0);
        let max_abs_lat = points
            .iter()
            .fold(T::zero(), |acc, p| acc.max(p.lat.abs()));
        let cos = max_abs_lat.to_radians().cos();
        let cell_lat = radius_m / m_per_deg * lit(1.01);
        let cell_lon = radius_m / (m_per_deg * cos) * lit(1.01);
        let usable = cos > lit(0.01) && cell_lat.is_finite() && cell_lat > T::zero() && cell_lon < lit(90.0);
        let cells = usable.then(|| {
            let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
            for (i, p) in points.iter().enumerate() {
                cells.entry(Self::key(p, cell_lat, cell_lon)).or_default().push(i as u32);
            }
            cells
        });
        GeoNeighborhood {
            points,
            build_radius: radius_m,
            cell_lat,
            cell_lon,
            cells,
        }
    }

    fn key(p: &LatLon<T>, cell_lat: T, cell_lon: T) -> (i64, i64) {
        (
            (p.lat / cell_lat).floor().to_i64().unwrap_or(0),
            (p.lon / cell_lon).floor().to_i64().unwrap_or(0),
        )
    }
}

impl<T: GeoFloat> Neighborhood<T> for GeoNeighborhood<'_, T> {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn neighbors(&self, i: usize, radius: T, out: &mut Vec<(usize, T)>) {
        out.clear();
        let p = self.points[i];
        match &self.cells {
            Some(cells) => {
                let span = (radius / self.build_radius).ceil().to_i64().unwrap_or(1).max(1);
                let (r, c) = Self::key(&p, self.cell_lat, self.cell_lon);
                for dr in -span..=span {
                    for dc in -span..=span {
                        if let Some(v) = cells.get(&(r + dr, c + dc)) {
                            for &j in v {
                                let d = haversine(p, self.points[j as usize]);
                                if d <= radius {
                                    out.push((j as usize, d));
                                }
                            }
                        }
                    }
                }
                out.sort_unstable_by_key(|(j, _)| *j);
            }
            None => {
                for (j, q) in self.points.iter().enumerate() {
                    let d = haversine(p, *q);
                    if d <= radius {
                        out.push((j, d));
                    }
                }
            }
        }
    }
}

/// Brute-force neighbourhoods under an arbitrary symmetric metric.
pub struct PairwiseNeighborhood<F> {
    n: usize,
    metric: F,
}

impl<F> PairwiseNeighborhood<F> {
    pub fn new(n: usize, metric: F) -> Self {
        PairwiseNeighborhood { n, metric }
    }
}

impl<T: GeoFloat, F: Fn(usize, usize) -> T> Neighborhood<T> for PairwiseNeighborhood<F> {
    fn len(&self) -> usize {
        self.n
    }

    fn neighbors(&self, i: usize, radius: T, out: &mut Vec<(usize, T)>) {
        out.clear();
        for j in 0..self.n {
            let d = if i == j { T::zero() } else { (self.metric)(i, j) };
            if d <= radius {
                out.push((j, d));
            }
        }
    }
}

/// DBSCAN over haversine distances.
pub fn dbscan<T: GeoFloat>(points: &[LatLon<T>], params: &ClusterParams<T>) -> Result<ClusterLabeling> {
    params.validate()?;
    dbscan_with(&GeoNeighborhood::new(points, params.eps), params)
}

/// DBSCAN over any neighbourhood structure.
///
/// Clusters are seeded in index order and expanded breadth-first; a border
/// point reachable from several clusters joins the first one that reaches it.
pub fn dbscan_with<T: GeoFloat, N: Neighborhood<T>>(
    nb: &N,
    params: &ClusterParams<T>,
) -> Result<ClusterLabeling> {
    params.validate()?;
    let n = nb.len();
    if n == 0 {
        return Err(Error::Domain("cannot cluster an empty point set".into()));
    }
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut roles = vec![Role::Noise; n];
    let mut visited = vec![false; n];
    let mut buf = Vec::new();
    let mut queue = VecDeque::new();
    let mut next_id = 0usize;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        nb.neighbors(i, params.eps, &mut buf);
        if buf.len() < params.min_pts {
            continue;
        }
        let cid = next_id;
        next_id += 1;
        labels[i] = Some(cid);
        roles[i] = Role::Core;
        queue.clear();
        queue.extend(buf.iter().map(|(j, _)| *j).filter(|&j| j != i));
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cid);
                roles[j] = Role::Border;
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            nb.neighbors(j, params.eps, &mut buf);
            if buf.len() >= params.min_pts {
                roles[j] = Role::Core;
                for &(k, _) in &buf {
                    if !visited[k] || labels[k].is_none() {
                        queue.push_back(k);
                    }
                }
            }
        }
    }
    Ok(ClusterLabeling { labels, roles })
}

/// OPTICS output: processing order plus per-point reachability and core
/// distances (indexed by point, `None` = undefined).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityOrdering<T> {
    pub order: Vec<usize>,
    pub reachability: Vec<Option<T>>,
    pub core_distance: Vec<Option<T>>,
    pub min_pts: usize,
    pub max_eps: T,
}

impl<T: GeoFloat> ReachabilityOrdering<T> {
    /// Reachability values in processing order (the reachability plot).
    pub fn plot(&self) -> Vec<Option<T>> {
        self.order.iter().map(|&i| self.reachability[i]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Seed<T> {
    reach: T,
    index: usize,
}

impl<T: GeoFloat> PartialEq for Seed<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: GeoFloat> Eq for Seed<T> {}

impl<T: GeoFloat> Ord for Seed<T> {
    // min-heap on (reach, index)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .reach
            .partial_cmp(&self.reach)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl<T: GeoFloat> PartialOrd for Seed<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn optics<T: GeoFloat>(points: &[LatLon<T>], min_pts: usize, max_eps: T) -> Result<ReachabilityOrdering<T>> {
    optics_with(&GeoNeighborhood::new(points, max_eps), min_pts, max_eps)
}

/// OPTICS over any neighbourhood structure. The core distance of a point
/// is the distance to its `min_pts`-th nearest neighbour (itself first)
/// within `max_eps`, matching the DBSCAN core definition.
pub fn optics_with<T: GeoFloat, N: Neighborhood<T>>(
    nb: &N,
    min_pts: usize,
    max_eps: T,
) -> Result<ReachabilityOrdering<T>> {
    ClusterParams::new(max_eps, min_pts)?;
    let n = nb.len();
    if n == 0 {
        return Err(Error::Domain("cannot order an empty point set".into()));
    }
    let mut reach: Vec<Option<T>> = vec![None; n];
    let mut core: Vec<Option<T>> = vec![None; n];
    let mut processed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut buf = Vec::new();
    let mut dists: Vec<T> = Vec::new();
    let mut seeds: BinaryHeap<Seed<T>> = BinaryHeap::new();

    let mut expand = |p: usize,
                      buf: &mut Vec<(usize, T)>,
                      core: &mut Vec<Option<T>>,
                      reach: &mut Vec<Option<T>>,
                      processed: &Vec<bool>,
                      seeds: &mut BinaryHeap<Seed<T>>| {
        nb.neighbors(p, max_eps, buf);
        if buf.len() < min_pts {
            return;
        }
        dists.clear();
        dists.extend(buf.iter().map(|(_, d)| *d));
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let cd = dists[min_pts - 1];
        core[p] = Some(cd);
        for &(o, d) in buf.iter() {
            if processed[o] {
                continue;
            }
            let r = if d > cd { d } else { cd };
            if reach[o].map_or(true, |old| r < old) {
                reach[o] = Some(r);
                seeds.push(Seed { reach: r, index: o });
            }
        }
    };

    for i in 0..n {
        if processed[i] {
            continue;
        }
        processed[i] = true;
        order.push(i);
        expand(i, &mut buf, &mut core, &mut reach, &processed, &mut seeds);
        while let Some(Seed { reach: r, index: q }) = seeds.pop() {
            if processed[q] || reach[q] != Some(r) {
                continue;
            }
            processed[q] = true;
            order.push(q);
            expand(q, &mut buf, &mut core, &mut reach, &processed, &mut seeds);
        }
    }
    Ok(ReachabilityOrdering {
        order,
        reachability: reach,
        core_distance: core,
        min_pts,
        max_eps,
    })
}

/// Horizontal-cut extraction: walking the ordering, a point whose
/// reachability exceeds `threshold` (or is undefined) starts a new cluster
/// if it is core at `threshold`, otherwise it is noise; every other point
/// joins the current cluster.
pub fn extract_clusters<T: GeoFloat>(ord: &ReachabilityOrdering<T>, threshold: T) -> Result<ClusterLabeling> {
    if !(threshold > T::zero()) {
        return Err(Error::Domain("extraction threshold must be positive".into()));
    }
    let n = ord.order.len();
    let mut labels = vec![None; n];
    let mut roles = vec![Role::Noise; n];
    let mut current: Option<usize> = None;
    let mut next_id = 0usize;
    for &i in &ord.order {
        let is_core = ord.core_distance[i].map_or(false, |c| c <= threshold);
        let reachable = ord.reachability[i].map_or(false, |r| r <= threshold);
        if !reachable {
            if is_core {
                current = Some(next_id);
                next_id += 1;
                labels[i] = current;
                roles[i] = Role::Core;
            }
        } else {
            labels[i] = current;
            roles[i] = if is_core { Role::Core } else { Role::Border };
        }
    }
    Ok(ClusterLabeling { labels, roles })
}

/// Origin and destination of one trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdPair<T> {
    pub origin: LatLon<T>,
    pub destination: LatLon<T>,
}

/// Sum of the origin-origin and destination-destination great-circle
/// distances, meters.
pub fn od_pair_distance<T: GeoFloat>(a: &OdPair<T>, b: &OdPair<T>) -> T {
    haversine(a.origin, b.origin) + haversine(a.destination, b.destination)
}
