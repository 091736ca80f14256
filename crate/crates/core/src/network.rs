//! Directed road network with link geometry, a uniform-grid spatial index
//! for nearest-link queries, and Dijkstra routing between points on links.
//!
//! A two-way link is one road record (one [`LinkId`]) backed by two directed
//! edges. Internally nodes are indexed densely in ascending [`NodeId`]
//! order, so "smaller index" and "smaller id" coincide for tie-breaking.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use crate::geo::{haversine, polyline_length, project_onto_segment, LatLon, EARTH_RADIUS_M};
use crate::geojson::{self, FeatureCollection, Geometry};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Road link as supplied to [`RoadNetwork::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub geometry: Vec<Point>,
    pub oneway: bool,
}

#[derive(Debug, Clone)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub oneway: bool,
    geometry: Vec<Point>,
    cumulative: Vec<f64>,
}

impl Link {
    pub fn geometry(&self) -> &[Point] {
        &self.geometry
    }

    pub fn length_m(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    /// Point at `offset_m` along the link from its `from` node.
    pub fn point_at(&self, offset_m: f64) -> Point {
        let off = offset_m.clamp(0.0, self.length_m());
        let i = self
            .cumulative
            .partition_point(|&c| c < off)
            .clamp(1, self.cumulative.len() - 1);
        let seg = self.cumulative[i] - self.cumulative[i - 1];
        let f = if seg > 0.0 { (off - self.cumulative[i - 1]) / seg } else { 0.0 };
        let (a, b) = (self.geometry[i - 1], self.geometry[i]);
        LatLon {
            lat: a.lat + f * (b.lat - a.lat),
            lon: a.lon + f * (b.lon - a.lon),
        }
    }
}

/// A point snapped onto a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkProjection {
    pub link: LinkId,
    pub point: Point,
    /// Distance along the link from its `from` node, meters.
    pub offset_m: f64,
    /// Perpendicular distance from the query point, meters.
    pub distance_m: f64,
}

/// First entry of a trip onto a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub link: LinkId,
    pub t_entry_ms: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub links: Vec<LinkId>,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    link: u32,
    from: u32,
    to: u32,
    length: f64,
}

#[derive(Clone)]
pub struct RoadNetwork {
    nodes: Vec<NodeId>,
    positions: Vec<Point>,
    node_index: HashMap<NodeId, u32>,
    links: Vec<Link>,
    link_index: HashMap<LinkId, u32>,
    edges: Vec<Edge>,
    out: Vec<Vec<u32>>,
    index: SegmentIndex,
}

impl fmt::Debug for RoadNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RoadNetwork")
            .field("nodes", &self.nodes.len())
            .field("links", &self.links.len())
            .field("edges", &self.edges.len())
            .finish()
    }
}

/// Endpoint mismatch allowed between a link geometry and its node, meters.
const NODE_SNAP_TOLERANCE_M: f64 = 1.0;

impl RoadNetwork {
    pub fn new(nodes: Vec<(NodeId, Point)>, links: Vec<LinkSpec>) -> Result<Self> {
        let mut nodes = nodes;
        nodes.sort_by_key(|(id, _)| *id);
        if let Some(w) = nodes.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse(format!("duplicate node {}", w[0].0)));
        }
        if let Some((id, _)) = nodes.iter().find(|(_, p)| !p.is_valid()) {
            return Err(Error::Parse(format!("node {id} has invalid coordinates")));
        }
        let node_index: HashMap<NodeId, u32> =
            nodes.iter().enumerate().map(|(i, (id, _))| (*id, i as u32)).collect();

        let mut specs = links;
        specs.sort_by_key(|l| l.id);
        if let Some(w) = specs.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Parse(format!("duplicate link {}", w[0].id)));
        }
        let mut built = Vec::with_capacity(specs.len());
        for spec in specs {
            validate_link(&spec, &nodes, &node_index)?;
            let mut cumulative = Vec::with_capacity(spec.geometry.len());
            let mut acc = 0.0;
            cumulative.push(0.0);
            for w in spec.geometry.windows(2) {
                acc += haversine(w[0], w[1]);
                cumulative.push(acc);
            }
            built.push(Link {
                id: spec.id,
                from: spec.from,
                to: spec.to,
                oneway: spec.oneway,
                geometry: spec.geometry,
                cumulative,
            });
        }
        let link_index = built.iter().enumerate().map(|(i, l)| (l.id, i as u32)).collect();

        let mut edges = Vec::new();
        for (li, l) in built.iter().enumerate() {
            let from = node_index[&l.from];
            let to = node_index[&l.to];
            edges.push(Edge { link: li as u32, from, to, length: l.length_m() });
            if !l.oneway {
                edges.push(Edge { link: li as u32, from: to, to: from, length: l.length_m() });
            }
        }
        let mut out: Vec<Vec<u32>> = vec![Vec::new(); nodes.len()];
        for (ei, e) in edges.iter().enumerate() {
            out[e.from as usize].push(ei as u32);
        }
        for list in &mut out {
            list.sort_by_key(|&e| (edges[e as usize].to, edges[e as usize].link));
        }
        let index = SegmentIndex::build(&built);
        Ok(RoadNetwork {
            positions: nodes.iter().map(|(_, p)| *p).collect(),
            nodes: nodes.into_iter().map(|(id, _)| id).collect(),
            node_index,
            links: built,
            link_index,
            edges,
            out,
            index,
        })
    }

    /// Loads a network from GeoJSON text.
    ///
    /// LineString features carry `link_id`, `from_node`, `to_node` and
    /// `oneway`; node positions come from the geometry endpoints. Optional
    /// Point features with a `node_id` property pin node positions
    /// explicitly, in which case every link must reference one of them. An
    /// optional `length_m` property must agree with the geometry within 0.1%.
    pub fn from_geojson(text: &str) -> Result<Self> {
        let fc = FeatureCollection::from_str(text)?;
        let mut explicit: BTreeMap<NodeId, Point> = BTreeMap::new();
        for (i, f) in fc.features.iter().enumerate() {
            if let Geometry::Point { coordinates } = f.geometry {
                let id = NodeId(f.prop_u64(i, "node_id")?);
                if explicit.insert(id, geojson::from_position(coordinates)).is_some() {
                    return Err(Error::Parse(format!("feature {i}: duplicate node {id}")));
                }
            }
        }
        let strict = !explicit.is_empty();
        let mut implied: BTreeMap<NodeId, Point> = BTreeMap::new();
        let mut links = Vec::new();
        for (i, f) in fc.features.iter().enumerate() {
            if matches!(f.geometry, Geometry::Point { .. }) {
                continue;
            }
            let geometry = f.line(i)?;
            if geometry.len() < 2 {
                return Err(Error::Parse(format!("feature {i}: LineString needs 2+ positions")));
            }
            if let Some(p) = geometry.iter().find(|p| !p.is_valid()) {
                return Err(Error::Parse(format!("feature {i}: invalid coordinate ({}, {})", p.lat, p.lon)));
            }
            let spec = LinkSpec {
                id: LinkId(f.prop_u64(i, "link_id")?),
                from: NodeId(f.prop_u64(i, "from_node")?),
                to: NodeId(f.prop_u64(i, "to_node")?),
                oneway: f.prop_bool(i, "oneway")?,
                geometry,
            };
            if let Some(stated) = f.prop_f64_opt(i, "length_m")? {
                let actual = polyline_length(&spec.geometry);
                if (stated - actual).abs() > 1e-3 * actual.max(1e-9) {
                    return Err(Error::Parse(format!(
                        "feature {i}: link {} length_m {stated} differs from geometry length {actual:.3}",
                        spec.id
                    )));
                }
            }
            let ends = [(spec.from, spec.geometry[0]), (spec.to, *spec.geometry.last().unwrap())];
            for (node, pos) in ends {
                if strict {
                    if !explicit.contains_key(&node) {
                        return Err(Error::Parse(format!(
                            "feature {i}: link {} references missing node {node}",
                            spec.id
                        )));
                    }
                } else if let Some(prev) = implied.get(&node) {
                    if haversine(*prev, pos) > NODE_SNAP_TOLERANCE_M {
                        return Err(Error::Parse(format!(
                            "feature {i}: node {node} placed inconsistently by link {}",
                            spec.id
                        )));
                    }
                } else {
                    implied.insert(node, pos);
                }
            }
            links.push(spec);
        }
        let nodes = if strict { explicit } else { implied };
        RoadNetwork::new(nodes.into_iter().collect(), links)
    }

    pub fn to_geojson(&self) -> FeatureCollection {
        let mut fc = FeatureCollection::default();
        for l in &self.links {
            let mut props = Map::new();
            props.insert("link_id".into(), json!(l.id.0));
            props.insert("from_node".into(), json!(l.from.0));
            props.insert("to_node".into(), json!(l.to.0));
            props.insert("oneway".into(), json!(l.oneway));
            fc.push(geojson::line_geometry(&l.geometry), props);
        }
        fc
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// Number of directed edges (two per two-way link).
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.link_index.get(&id).map(|&i| &self.links[i as usize])
    }

    pub fn node_position(&self, id: NodeId) -> Option<Point> {
        self.node_index.get(&id).map(|&i| self.positions[i as usize])
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Links reachable by leaving `node` along a directed edge, with the
    /// node at the other end.
    pub fn outgoing(&self, node: NodeId) -> Vec<(LinkId, NodeId, f64)> {
        let Some(&ni) = self.node_index.get(&node) else {
            return Vec::new();
        };
        self.out[ni as usize]
            .iter()
            .map(|&e| {
                let e = &self.edges[e as usize];
                (self.links[e.link as usize].id, self.nodes[e.to as usize], e.length)
            })
            .collect()
    }

    /// Projects `p` onto the closest point of `link`.
    pub fn project(&self, p: Point, link: &Link) -> LinkProjection {
        let mut best: Option<(f64, usize, f64)> = None;
        for (i, w) in link.geometry.windows(2).enumerate() {
            let pr = project_onto_segment(p, w[0], w[1]);
            if best.map_or(true, |(d, _, _)| pr.distance < d) {
                best = Some((pr.distance, i, pr.fraction));
            }
        }
        let (distance, seg, fraction) = best.expect("link has at least one segment");
        let seg_len = link.cumulative[seg + 1] - link.cumulative[seg];
        let offset = (link.cumulative[seg] + fraction * seg_len).clamp(0.0, link.length_m());
        let (a, b) = (link.geometry[seg], link.geometry[seg + 1]);
        LinkProjection {
            link: link.id,
            point: LatLon {
                lat: a.lat + fraction * (b.lat - a.lat),
                lon: a.lon + fraction * (b.lon - a.lon),
            },
            offset_m: offset,
            distance_m: distance,
        }
    }

    /// Links within `radius_m` of `p`, closest first (ties by link id),
    /// at most `k` of them.
    pub fn nearest_links(&self, p: Point, radius_m: f64, k: usize) -> Vec<LinkProjection> {
        let mut out: Vec<LinkProjection> = self
            .index
            .candidates(p, radius_m)
            .into_iter()
            .map(|li| self.project(p, &self.links[li as usize]))
            .filter(|pr| pr.distance_m <= radius_m)
            .collect();
        out.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then(a.link.cmp(&b.link)));
        out.truncate(k);
        out
    }

    /// Shortest route from `a` to `b` honouring one-way links; `None` if
    /// unreachable.
    pub fn shortest_path(&self, a: &LinkProjection, b: &LinkProjection) -> Option<Route> {
        Router::new(self).route(a, b, f64::INFINITY)
    }
}

fn validate_link(spec: &LinkSpec, nodes: &[(NodeId, Point)], index: &HashMap<NodeId, u32>) -> Result<()> {
    if spec.geometry.len() < 2 {
        return Err(Error::Parse(format!("link {} needs at least 2 positions", spec.id)));
    }
    for (node, pos) in [(spec.from, spec.geometry[0]), (spec.to, *spec.geometry.last().unwrap())] {
        let Some(&ni) = index.get(&node) else {
            return Err(Error::Parse(format!("link {} references missing node {node}", spec.id)));
        };
        if haversine(nodes[ni as usize].1, pos) > NODE_SNAP_TOLERANCE_M {
            return Err(Error::Parse(format!(
                "link {} geometry does not start/end at node {node}",
                spec.id
            )));
        }
    }
    Ok(())
}

/// Collapses consecutive records of the same link, keeping the earliest
/// entry time.
pub fn dedupe_route_nodes(entries: &[LinkEntry]) -> Vec<LinkEntry> {
    let mut out: Vec<LinkEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        match out.last_mut() {
            Some(last) if last.link == e.link => last.t_entry_ms = last.t_entry_ms.min(e.t_entry_ms),
            _ => out.push(*e),
        }
    }
    out
}

const INDEX_CELL_M: f64 = 250.0;

/// Uniform lat/lon grid of link segment bounding boxes.
#[derive(Clone)]
struct SegmentIndex {
    cell_lat: f64,
    cell_lon: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl SegmentIndex {
    fn build(links: &[Link]) -> Self {
        let m_per_deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let mean_lat = if links.is_empty() {
            0.0
        } else {
            links.iter().map(|l| l.geometry[0].lat).sum::<f64>() / links.len() as f64
        };
        let cell_lat = INDEX_CELL_M / m_per_deg;
        let cell_lon = INDEX_CELL_M / (m_per_deg * mean_lat.to_radians().cos().max(0.01));
        let mut idx = SegmentIndex { cell_lat, cell_lon, cells: HashMap::new() };
        for (li, l) in links.iter().enumerate() {
            for w in l.geometry.windows(2) {
                let (r0, c0) = idx.cell(w[0].lat.min(w[1].lat), w[0].lon.min(w[1].lon));
                let (r1, c1) = idx.cell(w[0].lat.max(w[1].lat), w[0].lon.max(w[1].lon));
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        let v = idx.cells.entry((r, c)).or_default();
                        if v.last() != Some(&(li as u32)) {
                            v.push(li as u32);
                        }
                    }
                }
            }
        }
        idx
    }

    fn cell(&self, lat: f64, lon: f64) -> (i64, i64) {
        ((lat / self.cell_lat).floor() as i64, (lon / self.cell_lon).floor() as i64)
    }

    /// Superset of links having a point within `radius_m` of `p`.
    fn candidates(&self, p: Point, radius_m: f64) -> Vec<u32> {
        let m_per_deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let dlat = radius_m / m_per_deg + 1e-9;
        let dlon = radius_m / (m_per_deg * p.lat.to_radians().cos().max(1e-6)) + 1e-9;
        let (r0, c0) = self.cell(p.lat - dlat, p.lon - dlon);
        let (r1, c1) = self.cell(p.lat + dlat, p.lon + dlon);
        let mut out = Vec::new();
        if (r1 - r0 + 1).saturating_mul(c1 - c0 + 1) > 4 * self.cells.len() as i64 {
            for v in self.cells.values() {
                out.extend_from_slice(v);
            }
        } else {
            for r in r0..=r1 {
                for c in c0..=c1 {
                    if let Some(v) = self.cells.get(&(r, c)) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NO_PRED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Arrival {
    /// Both points on the same link, travelled along it.
    Direct(f64),
    /// Reached the target link's entry node, then `extra` meters along it.
    Via { node: u32, dist: f64 },
}

impl Arrival {
    fn dist(&self) -> f64 {
        match *self {
            Arrival::Direct(d) | Arrival::Via { dist: d, .. } => d,
        }
    }
}

/// Reusable Dijkstra workspace over one network. Not shared between threads.
pub struct Router<'n> {
    net: &'n RoadNetwork,
    dist: Vec<f64>,
    pred: Vec<u32>,
    settled: Vec<bool>,
    needed: Vec<bool>,
    touched: Vec<u32>,
    heap: BinaryHeap<HeapItem>,
}

impl<'n> Router<'n> {
    pub fn new(net: &'n RoadNetwork) -> Self {
        let n = net.nodes.len();
        Router {
            net,
            dist: vec![f64::INFINITY; n],
            pred: vec![NO_PRED; n],
            settled: vec![false; n],
            needed: vec![false; n],
            touched: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn reset(&mut self) {
        for &n in &self.touched {
            let n = n as usize;
            self.dist[n] = f64::INFINITY;
            self.pred[n] = NO_PRED;
            self.settled[n] = false;
            self.needed[n] = false;
        }
        self.touched.clear();
        self.heap.clear();
    }

    fn touch(&mut self, n: u32) {
        let i = n as usize;
        if !(self.settled[i] || self.needed[i] || self.dist[i].is_finite()) {
            self.touched.push(n);
        }
    }

    fn seed(&mut self, node: u32, d: f64) {
        self.touch(node);
        let i = node as usize;
        if d < self.dist[i] {
            self.dist[i] = d;
            self.pred[i] = NO_PRED;
            self.heap.push(HeapItem { dist: d, node });
        }
    }

    fn search(&mut self, a: &LinkProjection, targets: &[LinkProjection], max_dist: f64) -> Vec<Option<Arrival>> {
        self.reset();
        let net = self.net;
        let Some(&ai) = net.link_index.get(&a.link) else {
            return vec![None; targets.len()];
        };
        let la = &net.links[ai as usize];
        self.seed(net.node_index[&la.to], la.length_m() - a.offset_m);
        if !la.oneway {
            self.seed(net.node_index[&la.from], a.offset_m);
        }
        let mut remaining = 0usize;
        for b in targets {
            if let Some(&bi) = net.link_index.get(&b.link) {
                let lb = &net.links[bi as usize];
                let mut entries = vec![net.node_index[&lb.from]];
                if !lb.oneway {
                    entries.push(net.node_index[&lb.to]);
                }
                for n in entries {
                    if !self.needed[n as usize] {
                        self.touch(n);
                        self.needed[n as usize] = true;
                        remaining += 1;
                    }
                }
            }
        }
        while let Some(HeapItem { dist, node }) = self.heap.pop() {
            let u = node as usize;
            if self.settled[u] || dist > self.dist[u] {
                continue;
            }
            if dist > max_dist || remaining == 0 {
                break;
            }
            self.settled[u] = true;
            if self.needed[u] {
                remaining -= 1;
            }
            for &ei in &net.out[u] {
                let e = net.edges[ei as usize];
                let v = e.to as usize;
                if self.settled[v] {
                    continue;
                }
                let nd = dist + e.length;
                let better = nd < self.dist[v]
                    || (nd == self.dist[v] && self.pred[v] != NO_PRED && net.edges[self.pred[v] as usize].from > node);
                if better {
                    self.touch(e.to);
                    self.dist[v] = nd;
                    self.pred[v] = ei;
                    self.heap.push(HeapItem { dist: nd, node: e.to });
                }
            }
        }
        targets
            .iter()
            .map(|b| {
                let bi = *net.link_index.get(&b.link)?;
                let lb = &net.links[bi as usize];
                let mut best: Option<Arrival> = None;
                let mut consider = |cand: Arrival| {
                    if best.map_or(true, |x| cand.dist() < x.dist()) {
                        best = Some(cand);
                    }
                };
                if b.link == a.link && (b.offset_m >= a.offset_m || !lb.oneway) {
                    consider(Arrival::Direct((b.offset_m - a.offset_m).abs()));
                }
                let from = net.node_index[&lb.from];
                if self.settled[from as usize] {
                    consider(Arrival::Via { node: from, dist: self.dist[from as usize] + b.offset_m });
                }
                if !lb.oneway {
                    let to = net.node_index[&lb.to];
                    if self.settled[to as usize] {
                        consider(Arrival::Via {
                            node: to,
                            dist: self.dist[to as usize] + (lb.length_m() - b.offset_m),
                        });
                    }
                }
                best
            })
            .collect()
    }

    /// Network distances from `a` to each target; `None` when unreachable or
    /// beyond `max_dist` of settled search radius.
    pub fn distances(&mut self, a: &LinkProjection, targets: &[LinkProjection], max_dist: f64) -> Vec<Option<f64>> {
        self.search(a, targets, max_dist)
            .into_iter()
            .map(|x| x.map(|a| a.dist()))
            .collect()
    }

    pub fn route(&mut self, a: &LinkProjection, b: &LinkProjection, max_dist: f64) -> Option<Route> {
        if a.link == b.link && a.offset_m == b.offset_m {
            return Some(Route { links: Vec::new(), distance_m: 0.0 });
        }
        let arrival = self.search(a, std::slice::from_ref(b), max_dist)[0]?;
        let links = match arrival {
            Arrival::Direct(_) => vec![a.link],
            Arrival::Via { node, .. } => {
                let mut rev = Vec::new();
                let mut n = node as usize;
                while self.pred[n] != NO_PRED {
                    let e = self.net.edges[self.pred[n] as usize];
                    rev.push(self.net.links[e.link as usize].id);
                    n = e.from as usize;
                }
                let mut links = Vec::with_capacity(rev.len() + 2);
                links.push(a.link);
                links.extend(rev.into_iter().rev());
                links.push(b.link);
                links.dedup();
                links
            }
        };
        Some(Route { links, distance_m: arrival.dist() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::destination;

    fn two_node_file() -> String {
        r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","geometry":{"type":"LineString","coordinates":[[-76.6,39.0],[-76.59,39.0]]},
           "properties":{"link_id":1,"from_node":10,"to_node":11,"oneway":false}}]}"#
            .to_string()
    }

    #[test]
    fn loads_single_link() {
        let net = RoadNetwork::from_geojson(&two_node_file()).unwrap();
        assert_eq!(net.n_nodes(), 2);
        assert_eq!(net.n_links(), 1);
        assert_eq!(net.n_edges(), 2);
        let expected = haversine(Point { lat: 39.0, lon: -76.6 }, Point { lat: 39.0, lon: -76.59 });
        assert!((net.links()[0].length_m() - expected).abs() < 1e-9);
    }

    #[test]
    fn missing_node_is_named() {
        let text = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","geometry":{"type":"Point","coordinates":[-76.6,39.0]},"properties":{"node_id":10}},
          {"type":"Feature","geometry":{"type":"Point","coordinates":[-76.59,39.0]},"properties":{"node_id":11}},
          {"type":"Feature","geometry":{"type":"LineString","coordinates":[[-76.6,39.0],[-76.59,39.0]]},
           "properties":{"link_id":1,"from_node":10,"to_node":11,"oneway":true}},
          {"type":"Feature","geometry":{"type":"LineString","coordinates":[[-76.59,39.0],[-76.58,39.0]]},
           "properties":{"link_id":2,"from_node":11,"to_node":12,"oneway":true}}]}"#;
        let err = RoadNetwork::from_geojson(text).unwrap_err().to_string();
        assert!(err.contains("feature 3") && err.contains("node 12"), "{err}");
    }

    #[test]
    fn bad_length_property_rejected() {
        let text = two_node_file().replace("\"oneway\":false", "\"oneway\":false,\"length_m\":5000");
        assert!(RoadNetwork::from_geojson(&text).is_err());
    }

    #[test]
    fn geojson_round_trip_preserves_graph() {
        let net = RoadNetwork::from_geojson(&two_node_file()).unwrap();
        let again = RoadNetwork::from_geojson(&net.to_geojson().to_string_pretty()).unwrap();
        assert_eq!(again.n_edges(), net.n_edges());
        assert_eq!(again.links()[0].length_m(), net.links()[0].length_m());
    }

    fn chain() -> RoadNetwork {
        let p0 = Point { lat: 39.0, lon: -76.6 };
        let p1 = destination(p0, 90.0, 100.0);
        let p2 = destination(p1, 90.0, 150.0);
        let p3 = destination(p2, 90.0, 200.0);
        let nodes = vec![(NodeId(0), p0), (NodeId(1), p1), (NodeId(2), p2), (NodeId(3), p3)];
        let links = vec![
            LinkSpec { id: LinkId(1), from: NodeId(0), to: NodeId(1), geometry: vec![p0, p1], oneway: true },
            LinkSpec { id: LinkId(2), from: NodeId(1), to: NodeId(2), geometry: vec![p1, p2], oneway: true },
            LinkSpec { id: LinkId(3), from: NodeId(2), to: NodeId(3), geometry: vec![p2, p3], oneway: true },
        ];
        RoadNetwork::new(nodes, links).unwrap()
    }

    #[test]
    fn point_on_link_projects_with_zero_distance() {
        let net = chain();
        let l2 = net.link(LinkId(2)).unwrap();
        let p = l2.point_at(40.0);
        let near = net.nearest_links(p, 50.0, 8);
        assert_eq!(near[0].link, LinkId(2));
        assert!(near[0].distance_m < 1e-6);
        assert!((near[0].offset_m - 40.0).abs() < 1e-3);
        let far = destination(p, 0.0, 5000.0);
        assert!(net.nearest_links(far, 200.0, 8).is_empty());
    }

    #[test]
    fn chain_routes() {
        let net = chain();
        let start = net.project(net.link(LinkId(1)).unwrap().point_at(0.0), net.link(LinkId(1)).unwrap());
        let l3 = net.link(LinkId(3)).unwrap();
        let end = net.project(l3.point_at(l3.length_m()), l3);
        let r = net.shortest_path(&start, &end).unwrap();
        assert_eq!(r.links, vec![LinkId(1), LinkId(2), LinkId(3)]);
        let total: f64 = net.links().iter().map(|l| l.length_m()).sum();
        assert!((r.distance_m - total).abs() < 1e-6);

        let same = net.shortest_path(&start, &start).unwrap();
        assert!(same.links.is_empty());
        assert_eq!(same.distance_m, 0.0);

        // one-way chain cannot be driven backwards
        assert!(net.shortest_path(&end, &start).is_none());
    }

    #[test]
    fn dedupe_examples() {
        let e = |l, t| LinkEntry { link: LinkId(l), t_entry_ms: t };
        assert_eq!(dedupe_route_nodes(&[e(1, 0), e(2, 5)]), vec![e(1, 0), e(2, 5)]);
        assert_eq!(dedupe_route_nodes(&[e(1, 0), e(1, 3), e(2, 5)]), vec![e(1, 0), e(2, 5)]);
        assert_eq!(dedupe_route_nodes(&[e(1, 0), e(2, 3), e(1, 5)]).len(), 3);
    }
}
