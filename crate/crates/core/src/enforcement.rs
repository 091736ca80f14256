//! Enforcement analytics: high-speed heat grids and weigh-in-motion (WIM)
//! circumvention detection. Outputs are aggregate counts only.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use crate::geo::{initial_bearing, octant};
use crate::geojson::{from_position, polygon_geometry, FeatureCollection, Geometry};
use crate::ingest::lower_median;
use crate::{haversine, Error, GeoPolygon, GridSpec, Point, Result, Trip, WeightClass};

// ---------------------------------------------------------------- speed grid

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum SpeedThreshold {
    /// Speed strictly above this many m/s.
    Absolute(f64),
    /// Speed strictly above the mean segment speed of the same cell.
    AboveCellMean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeedCell {
    pub total: u64,
    pub high: u64,
    /// Segment counts by initial-bearing octant, 0 = north, clockwise.
    pub octants: [u64; 8],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedGrid {
    pub grid: GridSpec,
    pub threshold: SpeedThreshold,
    /// Row-major cells.
    pub cells: Vec<SpeedCell>,
    pub out_of_grid: u64,
    /// Segments with zero elapsed time; counted in totals, never as high.
    pub zero_duration: u64,
}

impl SpeedGrid {
    pub fn cell(&self, row: usize, col: usize) -> &SpeedCell {
        &self.cells[self.grid.flat_index(row, col)]
    }

    pub fn segments(&self) -> u64 {
        self.cells.iter().map(|c| c.total).sum::<u64>() + self.out_of_grid
    }

    /// High-speed share per cell; `None` for empty cells.
    pub fn high_ratio(&self, row: usize, col: usize) -> Option<f64> {
        let c = self.cell(row, col);
        (c.total > 0).then(|| c.high as f64 / c.total as f64)
    }

    /// CSV `row,col,total,high,octant_0..octant_7`, every cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["row".to_string(), "col".into(), "total".into(), "high".into()];
        header.extend((0..8).map(|k| format!("octant_{k}")));
        w.write_record(&header)?;
        for (i, c) in self.cells.iter().enumerate() {
            let mut rec = vec![
                (i / self.grid.cols).to_string(),
                (i % self.grid.cols).to_string(),
                c.total.to_string(),
                c.high.to_string(),
            ];
            rec.extend(c.octants.iter().map(|o| o.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Cell polygons with observations, properties `row`, `col`, `total`,
    /// `high`, `high_ratio`.
    pub fn to_geojson(&self) -> Result<FeatureCollection> {
        let mut fc = FeatureCollection::default();
        for (i, c) in self.cells.iter().enumerate() {
            if c.total == 0 {
                continue;
            }
            let (r, col) = (i / self.grid.cols, i % self.grid.cols);
            let poly = GeoPolygon::new(self.grid.cell_ring(r, col), Vec::new())?;
            let mut props = Map::new();
            props.insert("row".into(), json!(r));
            props.insert("col".into(), json!(col));
            props.insert("total".into(), json!(c.total));
            props.insert("high".into(), json!(c.high));
            props.insert("high_ratio".into(), json!(c.high as f64 / c.total as f64));
            fc.push(polygon_geometry(&poly), props);
        }
        Ok(fc)
    }
}

struct Segment {
    cell: Option<usize>,
    speed: Option<f64>,
    octant: usize,
}

fn segments<'a>(trips: &'a [Trip], grid: &'a GridSpec) -> impl Iterator<Item = Segment> + 'a {
    trips.iter().flat_map(move |t| {
        t.waypoints().windows(2).map(move |w| {
            let (a, b) = (w[0].pos(), w[1].pos());
            let dt = w[1].t_ms - w[0].t_ms;
            Segment {
                cell: grid.index(a.midpoint(b)).map(|(r, c)| grid.flat_index(r, c)),
                speed: (dt > 0).then(|| haversine(a, b) / (dt as f64 / 1000.0)),
                octant: octant(initial_bearing(a, b)),
            }
        })
    })
}

/// Attributes every consecutive-waypoint segment to the grid cell of its
/// midpoint and counts those above the threshold.
pub fn speed_grid(trips: &[Trip], grid: &GridSpec, threshold: SpeedThreshold) -> Result<SpeedGrid> {
    grid.validate()?;
    if let SpeedThreshold::Absolute(v) = threshold {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("speed threshold must be non-negative, got {v}")));
        }
    }
    let n = grid.n_cells();
    let cell_limit: Vec<f64> = match threshold {
        SpeedThreshold::Absolute(v) => vec![v; n],
        SpeedThreshold::AboveCellMean => {
            let mut sum = vec![0.0; n];
            let mut cnt = vec![0u64; n];
            for s in segments(trips, grid) {
                if let (Some(c), Some(v)) = (s.cell, s.speed) {
                    sum[c] += v;
                    cnt[c] += 1;
                }
            }
            sum.iter()
                .zip(&cnt)
                .map(|(s, c)| if *c > 0 { s / *c as f64 } else { f64::INFINITY })
                .collect()
        }
    };
    let mut g = SpeedGrid {
        grid: *grid,
        threshold,
        cells: vec![SpeedCell::default(); n],
        out_of_grid: 0,
        zero_duration: 0,
    };
    for s in segments(trips, grid) {
        if s.speed.is_none() {
            g.zero_duration += 1;
        }
        let Some(c) = s.cell else {
            g.out_of_grid += 1;
            continue;
        };
        let cell = &mut g.cells[c];
        cell.total += 1;
        cell.octants[s.octant] += 1;
        if s.speed.map_or(false, |v| v > cell_limit[c]) {
            cell.high += 1;
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------- WIM

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WimSite {
    pub site_id: String,
    pub station: Point,
    pub corridor: GeoPolygon,
    pub gate_up: GeoPolygon,
    pub gate_down: GeoPolygon,
    pub buffer: GeoPolygon,
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient = |p: Point, q: Point, r: Point| (q.lon - p.lon) * (r.lat - p.lat) - (q.lat - p.lat) * (r.lon - p.lon);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}

/// True when the polygons share any point (boundaries included).
pub fn polygons_intersect(a: &GeoPolygon, b: &GeoPolygon) -> bool {
    if a.exterior().iter().any(|p| b.contains(*p)) || b.exterior().iter().any(|p| a.contains(*p)) {
        return true;
    }
    a.exterior().windows(2).any(|e| {
        b.exterior()
            .windows(2)
            .any(|f| segments_cross(e[0], e[1], f[0], f[1]))
    })
}

impl WimSite {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("gate_up", &self.gate_up), ("gate_down", &self.gate_down)] {
            if polygons_intersect(g, &self.buffer) {
                return Err(Error::Config(format!("site {}: {name} overlaps the station buffer", self.site_id)));
            }
            if !polygons_intersect(g, &self.corridor) {
                return Err(Error::Config(format!("site {}: {name} misses the main-route corridor", self.site_id)));
            }
        }
        Ok(())
    }
}

/// Sites from a GeoJSON file whose features carry `site_id` and `role`
/// (`station` point; `corridor`, `gate_up`, `gate_down`, `buffer`
/// polygons). Sites come back sorted by id.
pub fn load_wim_sites(text: &str) -> Result<Vec<WimSite>> {
    let fc = FeatureCollection::from_str(text)?;
    #[derive(Default)]
    struct Parts {
        station: Option<Point>,
        polys: BTreeMap<String, GeoPolygon>,
    }
    let mut sites: BTreeMap<String, Parts> = BTreeMap::new();
    for (i, f) in fc.features.iter().enumerate() {
        let id = f.prop_str(i, "site_id")?;
        let role = f.prop_str(i, "role")?;
        let parts = sites.entry(id).or_default();
        match role.as_str() {
            "station" => match &f.geometry {
                Geometry::Point { coordinates } => parts.station = Some(from_position(*coordinates)),
                _ => return Err(Error::Parse(format!("feature {i}: station must be a Point"))),
            },
            "corridor" | "gate_up" | "gate_down" | "buffer" => {
                parts.polys.insert(role, f.polygon(i)?);
            }
            other => return Err(Error::Parse(format!("feature {i}: unknown role '{other}'"))),
        }
    }
    let mut out = Vec::new();
    for (id, mut p) in sites {
        let mut take = |role: &str| {
            p.polys
                .remove(role)
                .ok_or_else(|| Error::Parse(format!("site {id}: missing '{role}' polygon")))
        };
        let corridor = take("corridor")?;
        let gate_up = take("gate_up")?;
        let gate_down = take("gate_down")?;
        let buffer = take("buffer")?;
        let station = p
            .station
            .ok_or_else(|| Error::Parse(format!("site {id}: missing station point")))?;
        let site = WimSite {
            site_id: id,
            station,
            corridor,
            gate_up,
            gate_down,
            buffer,
        };
        site.validate()?;
        out.push(site);
    }
    Ok(out)
}

pub fn wim_sites_to_geojson(sites: &[WimSite]) -> FeatureCollection {
    let mut fc = FeatureCollection::default();
    for s in sites {
        let props = |role: &str| {
            let mut m = Map::new();
            m.insert("site_id".into(), json!(s.site_id));
            m.insert("role".into(), json!(role));
            m
        };
        fc.push(
            Geometry::Point {
                coordinates: crate::geojson::to_position(s.station),
            },
            props("station"),
        );
        for (role, poly) in [
            ("corridor", &s.corridor),
            ("gate_up", &s.gate_up),
            ("gate_down", &s.gate_down),
            ("buffer", &s.buffer),
        ] {
            fc.push(polygon_geometry(poly), props(role));
        }
    }
    fc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Passage {
    NotRelevant,
    Compliant { gate_to_gate_s: f64 },
    Circumventing { gate_to_gate_s: f64 },
}

/// Relevant when a waypoint in the upstream gate is followed by one in
/// the downstream gate; compliant when any waypoint strictly between the
/// last upstream and first downstream hit lies in the station buffer.
pub fn classify_wim_passage(trip: &Trip, site: &WimSite) -> Passage {
    let wps = trip.waypoints();
    let mut last_up = None;
    let mut first_down = None;
    for (i, w) in wps.iter().enumerate() {
        let p = w.pos();
        if last_up.is_some() && site.gate_down.contains(p) {
            first_down = Some(i);
            break;
        }
        if site.gate_up.contains(p) {
            last_up = Some(i);
        }
    }
    let (Some(u), Some(d)) = (last_up, first_down) else {
        return Passage::NotRelevant;
    };
    let gate_to_gate_s = (wps[d].t_ms - wps[u].t_ms) as f64 / 1000.0;
    if wps[u + 1..d].iter().any(|w| site.buffer.contains(w.pos())) {
        Passage::Compliant { gate_to_gate_s }
    } else {
        Passage::Circumventing { gate_to_gate_s }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvasionRow {
    pub weight_class: WeightClass,
    /// Relevant trips on the main road through both gates.
    pub relevant: u64,
    pub compliant: u64,
    pub circumventing: u64,
}

impl EvasionRow {
    pub fn percentage(&self) -> f64 {
        if self.relevant == 0 {
            0.0
        } else {
            100.0 * self.circumventing as f64 / self.relevant as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetourCost {
    pub compliant_median_s: Option<f64>,
    pub circumventing: usize,
    pub slower: usize,
    /// Share of circumventing trips slower than the compliant median.
    pub fraction: Option<f64>,
    pub diagnostic: Option<String>,
}

/// Compares circumventing gate-to-gate times with the compliant median.
pub fn detour_cost(passages: &[Passage]) -> DetourCost {
    let mut compliant: Vec<f64> = passages
        .iter()
        .filter_map(|p| match p {
            Passage::Compliant { gate_to_gate_s } => Some(*gate_to_gate_s),
            _ => None,
        })
        .collect();
    let circ: Vec<f64> = passages
        .iter()
        .filter_map(|p| match p {
            Passage::Circumventing { gate_to_gate_s } => Some(*gate_to_gate_s),
            _ => None,
        })
        .collect();
    let median = (!compliant.is_empty()).then(|| lower_median(&mut compliant));
    let mut out = DetourCost {
        compliant_median_s: median,
        circumventing: circ.len(),
        slower: 0,
        fraction: None,
        diagnostic: None,
    };
    match median {
        None => out.diagnostic = Some("undefined: no compliant trips to set the main-route median".into()),
        Some(_) if circ.is_empty() => out.diagnostic = Some("undefined: no circumventing trips".into()),
        Some(m) => {
            out.slower = circ.iter().filter(|t| **t > m).count();
            out.fraction = Some(out.slower as f64 / circ.len() as f64);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvasionReport {
    pub site_id: String,
    pub rows: Vec<EvasionRow>,
    pub detour: DetourCost,
}

impl EvasionReport {
    pub fn row(&self, class: WeightClass) -> Option<&EvasionRow> {
        self.rows.iter().find(|r| r.weight_class == class)
    }
}

/// One row per known weight class (plus `unknown` when such trips are
/// relevant), and the detour-cost comparison over all relevant trips.
pub fn detect_wim_evasion(trips: &[Trip], site: &WimSite) -> EvasionReport {
    let mut rows: BTreeMap<WeightClass, EvasionRow> = BTreeMap::new();
    for c in [WeightClass::W0_14, WeightClass::W14_26, WeightClass::W26Plus] {
        rows.insert(
            c,
            EvasionRow {
                weight_class: c,
                relevant: 0,
                compliant: 0,
                circumventing: 0,
            },
        );
    }
    let mut passages = Vec::new();
    for t in trips {
        let p = classify_wim_passage(t, site);
        if p == Passage::NotRelevant {
            continue;
        }
        let row = rows.entry(t.weight_class).or_insert(EvasionRow {
            weight_class: t.weight_class,
            relevant: 0,
            compliant: 0,
            circumventing: 0,
        });
        row.relevant += 1;
        match p {
            Passage::Compliant { .. } => row.compliant += 1,
            Passage::Circumventing { .. } => row.circumventing += 1,
            Passage::NotRelevant => unreachable!(),
        }
        passages.push(p);
    }
    // detour cost must not depend on input order
    passages.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
    EvasionReport {
        site_id: site.site_id.clone(),
        rows: rows.into_values().collect(),
        detour: detour_cost(&passages),
    }
}

/// CSV `site_id,weight_class,main_road,circumvent_pct,circumventing`;
/// percentages to two decimals.
pub fn write_evasion_csv<W: Write>(out: W, reports: &[EvasionReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["site_id", "weight_class", "main_road", "circumvent_pct", "circumventing"])?;
    for r in reports {
        for row in &r.rows {
            w.write_record([
                r.site_id.clone(),
                row.weight_class.as_str().to_string(),
                row.relevant.to_string(),
                format!("{:.2}", row.percentage()),
                row.circumventing.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
