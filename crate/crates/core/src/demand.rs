//! Travel demand: zone systems and O-D matrices, penetration rates against
//! fixed traffic recorders, expansion scaling, corridor travel times and
//! origin heat maps.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Datelike, FixedOffset, NaiveDateTime, Timelike, Utc, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geojson::FeatureCollection;
use crate::ingest::lower_median;
use crate::mapmatch::MatchedTrip;
use crate::network::{LinkId, RoadNetwork};
use crate::{Error, GeoPolygon, GridSpec, Point, Result, Trip};

// ---------------------------------------------------------------- zones

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneLevel {
    Taz,
    Zip,
    County,
    State,
}

impl ZoneLevel {
    pub const ALL: [ZoneLevel; 4] = [ZoneLevel::Taz, ZoneLevel::Zip, ZoneLevel::County, ZoneLevel::State];

    pub fn as_str(&self) -> &'static str {
        match self {
            ZoneLevel::Taz => "taz",
            ZoneLevel::Zip => "zip",
            ZoneLevel::County => "county",
            ZoneLevel::State => "state",
        }
    }
}

impl fmt::Display for ZoneLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ZoneLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ZoneLevel::ALL
            .iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| Error::Parse(format!("unknown zone level '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub name: String,
    pub polygon: GeoPolygon,
    /// Containing zone at the next coarser level, when the file says so.
    pub parent: Option<String>,
}

/// Ordering used for tie-breaks: numeric ids numerically, then the rest
/// lexicographically.
fn zone_key(id: &str) -> (u8, u64, &str) {
    match id.parse::<u64>() {
        Ok(n) => (0, n, ""),
        Err(_) => (1, 0, id),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSystem {
    pub level: ZoneLevel,
    zones: Vec<Zone>,
}

impl ZoneSystem {
    pub fn new(level: ZoneLevel, mut zones: Vec<Zone>) -> Result<Self> {
        zones.sort_by(|a, b| zone_key(&a.id).cmp(&zone_key(&b.id)));
        for w in zones.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::Parse(format!("duplicate zone id '{}'", w[0].id)));
            }
        }
        Ok(ZoneSystem { level, zones })
    }

    /// Zones of one level from a GeoJSON file with `zone_id`, `name`,
    /// `level` and optional `parent` properties. Features of other levels
    /// are skipped.
    pub fn from_geojson(text: &str, level: ZoneLevel) -> Result<Self> {
        let fc = FeatureCollection::from_str(text)?;
        let mut zones = Vec::new();
        for (i, f) in fc.features.iter().enumerate() {
            let lv: ZoneLevel = f
                .prop_str(i, "level")?
                .parse()
                .map_err(|e| Error::Parse(format!("feature {i}: {e}")))?;
            if lv != level {
                continue;
            }
            let parent = match f.properties.get("parent") {
                None | Some(serde_json::Value::Null) => None,
                Some(_) => Some(f.prop_str(i, "parent")?),
            };
            zones.push(Zone {
                id: f.prop_str(i, "zone_id")?,
                name: f.prop_str(i, "name").unwrap_or_default(),
                polygon: f.polygon(i)?,
                parent,
            });
        }
        if zones.is_empty() {
            return Err(Error::Config(format!("no zones of level '{level}' in zone file")));
        }
        ZoneSystem::new(level, zones)
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn zone_ids(&self) -> Vec<String> {
        self.zones.iter().map(|z| z.id.clone()).collect()
    }

    /// Lowest-id zone containing `p` (edge-inclusive).
    pub fn assign(&self, p: Point) -> Option<&str> {
        self.zones
            .iter()
            .find(|z| z.polygon.contains(p))
            .map(|z| z.id.as_str())
    }

    /// Maps every zone to its parent in `coarser`: the declared `parent`
    /// property when present, otherwise the coarser zone containing the
    /// zone's vertex centroid.
    pub fn parent_map(&self, coarser: &ZoneSystem) -> Result<BTreeMap<String, String>> {
        let known: HashSet<&str> = coarser.zones.iter().map(|z| z.id.as_str()).collect();
        let mut out = BTreeMap::new();
        for z in &self.zones {
            let parent = match &z.parent {
                Some(p) if known.contains(p.as_str()) => p.clone(),
                Some(p) => {
                    return Err(Error::Config(format!(
                        "zone '{}' names parent '{p}', absent at level {}",
                        z.id, coarser.level
                    )))
                }
                None => coarser
                    .assign(z.polygon.vertex_centroid())
                    .ok_or_else(|| {
                        Error::Config(format!("zone '{}' lies outside every {} zone", z.id, coarser.level))
                    })?
                    .to_string(),
            };
            out.insert(z.id.clone(), parent);
        }
        Ok(out)
    }

    /// Features carrying `zone_id`, `name`, `level` and `parent`, readable
    /// by [`ZoneSystem::from_geojson`].
    pub fn append_geojson(&self, fc: &mut FeatureCollection) {
        for z in &self.zones {
            let mut m = serde_json::Map::new();
            m.insert("zone_id".into(), serde_json::json!(z.id));
            m.insert("name".into(), serde_json::json!(z.name));
            m.insert("level".into(), serde_json::json!(self.level.to_string()));
            if let Some(p) = &z.parent {
                m.insert("parent".into(), serde_json::json!(p));
            }
            fc.push(crate::geojson::polygon_geometry(&z.polygon), m);
        }
    }
}

// ---------------------------------------------------------------- O-D

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ODMatrix {
    pub level: ZoneLevel,
    /// Every zone of the system, in tie-break order.
    pub zones: Vec<String>,
    pub counts: BTreeMap<(String, String), u64>,
    pub unassigned: u64,
    /// Cumulative expansion factor applied, if any.
    pub expansion: Option<f64>,
}

impl ODMatrix {
    pub fn empty(level: ZoneLevel, zones: Vec<String>) -> Self {
        ODMatrix {
            level,
            zones,
            counts: BTreeMap::new(),
            unassigned: 0,
            expansion: None,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn get(&self, origin: &str, dest: &str) -> u64 {
        self.counts
            .get(&(origin.to_string(), dest.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn factor(&self) -> f64 {
        self.expansion.unwrap_or(1.0)
    }

    pub fn expanded(&self, origin: &str, dest: &str) -> f64 {
        self.get(origin, dest) as f64 * self.factor()
    }

    pub fn row_sums(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for ((o, _), c) in &self.counts {
            *out.entry(o.clone()).or_insert(0) += c;
        }
        out
    }

    fn add(&mut self, origin: &str, dest: &str, n: u64) {
        *self.counts.entry((origin.to_string(), dest.to_string())).or_insert(0) += n;
    }

    /// Adds another partial matrix over the same zone system.
    pub fn merge(&mut self, other: &ODMatrix) {
        for ((o, d), c) in &other.counts {
            self.add(o, d, *c);
        }
        self.unassigned += other.unassigned;
    }

    /// CSV `origin_zone,dest_zone,count,expanded_count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["origin_zone", "dest_zone", "count", "expanded_count"])?;
        for ((o, d), c) in &self.counts {
            w.write_record([o.as_str(), d.as_str(), &c.to_string(), &(*c as f64 * self.factor()).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Origin zone of the first waypoint by destination zone of the last.
pub fn build_od_matrix(trips: &[Trip], zones: &ZoneSystem) -> ODMatrix {
    let ids = zones.zone_ids();
    trips
        .par_iter()
        .fold(
            || ODMatrix::empty(zones.level, ids.clone()),
            |mut m, t| {
                match (zones.assign(t.origin()), zones.assign(t.destination())) {
                    (Some(o), Some(d)) => m.add(o, d, 1),
                    _ => m.unassigned += 1,
                }
                m
            },
        )
        .reduce(
            || ODMatrix::empty(zones.level, ids.clone()),
            |mut a, b| {
                a.merge(&b);
                a
            },
        )
}

/// Re-keys a matrix to coarser zones through a child → parent map.
pub fn aggregate(m: &ODMatrix, parent_of: &BTreeMap<String, String>, coarser: &ZoneSystem) -> Result<ODMatrix> {
    let mut out = ODMatrix::empty(coarser.level, coarser.zone_ids());
    out.unassigned = m.unassigned;
    out.expansion = m.expansion;
    let lookup = |z: &str| {
        parent_of
            .get(z)
            .ok_or_else(|| Error::Config(format!("zone '{z}' has no parent mapping")))
    };
    for ((o, d), c) in &m.counts {
        out.add(lookup(o)?, lookup(d)?, *c);
    }
    Ok(out)
}

/// Scales a matrix; raw counts are kept and the factor accumulates.
pub fn expand_matrix(m: &ODMatrix, factor: f64) -> Result<ODMatrix> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::Domain(format!("expansion factor must be positive, got {factor}")));
    }
    let mut out = m.clone();
    out.expansion = Some(m.factor() * factor);
    Ok(out)
}

/// Integer expansion factor `round(1 / pr)`.
pub fn expansion_factor_from_pr(pr: f64) -> Result<u64> {
    if !(pr > 0.0 && pr <= 1.0) {
        return Err(Error::Domain(format!("penetration rate must be in (0, 1], got {pr}")));
    }
    Ok((1.0 / pr).round() as u64)
}

/// Tab-separated `origin`, `destination`, `flow`, `expanded_flow`: every
/// zone pair with flow at least `min_flow`, sorted by flow descending then
/// by zone ids; smaller pairs are summed into a final `OTHER OTHER` row
/// (written only when that sum is positive).
pub fn export_chord_table<W: Write>(m: &ODMatrix, min_flow: u64, mut out: W) -> Result<()> {
    writeln!(out, "origin\tdestination\tflow\texpanded_flow")?;
    let mut rows: Vec<(&str, &str, u64)> = Vec::new();
    let mut other = 0u64;
    for o in &m.zones {
        for d in &m.zones {
            let f = m.get(o, d);
            if f >= min_flow {
                rows.push((o, d, f));
            } else {
                other += f;
            }
        }
    }
    // pairs outside the zone list (hand-built matrices) still count
    let listed: BTreeSet<&str> = m.zones.iter().map(|s| s.as_str()).collect();
    for ((o, d), f) in &m.counts {
        if !(listed.contains(o.as_str()) && listed.contains(d.as_str())) {
            if *f >= min_flow {
                rows.push((o, d, *f));
            } else {
                other += f;
            }
        }
    }
    rows.sort_by(|a, b| b.2.cmp(&a.2).then(zone_key(a.0).cmp(&zone_key(b.0))).then(zone_key(a.1).cmp(&zone_key(b.1))));
    let k = m.factor();
    for (o, d, f) in rows {
        writeln!(out, "{o}\t{d}\t{f}\t{}", f as f64 * k)?;
    }
    if other > 0 {
        writeln!(out, "OTHER\tOTHER\t{other}\t{}", other as f64 * k)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- penetration

/// One traffic-recorder hour. `hour` counts whole hours since the epoch (UTC).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtrRecord {
    pub station_id: String,
    pub link_id: LinkId,
    pub hour: i64,
    pub count: u64,
}

const HOUR_MS: i64 = 3_600_000;

pub fn hour_of_ms(t_ms: i64) -> i64 {
    t_ms.div_euclid(HOUR_MS)
}

/// Parses `YYYY-MM-DDTHH`, optionally followed by `:MM[:SS]` and `Z`;
/// minutes and seconds are truncated.
pub fn parse_hour_utc(s: &str) -> Result<i64> {
    let s = s.trim().trim_end_matches('Z');
    let full = match s.len() {
        13 => format!("{s}:00:00"),
        16 => format!("{s}:00"),
        _ => s.to_string(),
    };
    let dt = NaiveDateTime::parse_from_str(&full, "%Y-%m-%dT%H:%M:%S")
        .map_err(|e| Error::Parse(format!("bad hour_utc '{s}': {e}")))?;
    Ok(hour_of_ms(dt.and_utc().timestamp_millis()))
}

pub fn format_hour_utc(hour: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(hour * HOUR_MS)
        .map(|d| d.format("%Y-%m-%dT%H:00:00Z").to_string())
        .unwrap_or_default()
}

/// Reads `station_id,link_id,hour_utc,count`.
pub fn read_atr_csv<R: Read>(src: R) -> Result<Vec<AtrRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(src);
    let headers = rdr.headers()?.clone();
    let want = ["station_id", "link_id", "hour_utc", "count"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(Error::Parse(format!("ATR header must be {}", want.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let num = |k: usize| -> Result<u64> {
            row[k]
                .parse()
                .map_err(|_| Error::Parse(format!("ATR line {line}: bad {} '{}'", want[k], &row[k])))
        };
        out.push(AtrRecord {
            station_id: row[0].to_string(),
            link_id: LinkId(num(1)?),
            hour: parse_hour_utc(&row[2]).map_err(|e| Error::Parse(format!("ATR line {line}: {e}")))?,
            count: num(3)?,
        });
    }
    Ok(out)
}

pub fn write_atr_csv<W: Write>(out: W, records: &[AtrRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["station_id", "link_id", "hour_utc", "count"])?;
    for r in records {
        w.write_record([
            r.station_id.clone(),
            r.link_id.to_string(),
            format_hour_utc(r.hour),
            r.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyPr {
    pub station_id: String,
    pub hour: i64,
    pub traversals: u64,
    pub count: u64,
    /// `None` when the sensor count is zero.
    pub pr: Option<f64>,
    pub anomaly: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationPr {
    pub station_id: String,
    pub link_id: LinkId,
    pub hours: usize,
    pub mean_pr: f64,
    pub median_pr: f64,
    pub anomalies: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PrAggregate {
    #[default]
    Median,
    Mean,
}

impl FromStr for PrAggregate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(PrAggregate::Median),
            "mean" => Ok(PrAggregate::Mean),
            _ => Err(Error::Config(format!("aggregate must be 'median' or 'mean', got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetrationEstimate {
    pub hourly: Vec<HourlyPr>,
    pub stations: Vec<StationPr>,
    /// Over all station-hours with a positive count.
    pub mean_pr: f64,
    pub median_pr: f64,
    /// Median of the per-station mean hourly rates.
    pub median_station_mean_pr: f64,
    pub station_hours: usize,
    pub anomalies: usize,
}

impl PenetrationEstimate {
    pub fn aggregate(&self, which: PrAggregate) -> f64 {
        match which {
            PrAggregate::Median => self.median_pr,
            PrAggregate::Mean => self.mean_pr,
        }
    }

    pub fn expansion_factor(&self, which: PrAggregate) -> Result<u64> {
        expansion_factor_from_pr(self.aggregate(which))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per station-hour rate of matched trips entering the station's link in
/// that hour over the recorded count. Rates above one are flagged, not
/// clamped; zero-count hours are reported without a rate.
pub fn estimate_penetration(
    matched: &[MatchedTrip],
    atr: &[AtrRecord],
    net: &RoadNetwork,
) -> Result<PenetrationEstimate> {
    let mut seen = HashSet::new();
    for r in atr {
        if net.link(r.link_id).is_none() {
            return Err(Error::Config(format!(
                "station {} references link {} absent from the network",
                r.station_id, r.link_id
            )));
        }
        if !seen.insert((r.station_id.as_str(), r.hour)) {
            return Err(Error::Config(format!(
                "station {} has more than one record for hour {}",
                r.station_id,
                format_hour_utc(r.hour)
            )));
        }
    }
    let links: HashSet<LinkId> = atr.iter().map(|r| r.link_id).collect();
    let traversals: HashMap<(LinkId, i64), u64> = matched
        .par_iter()
        .fold(HashMap::new, |mut acc, m| {
            let mut once = HashSet::new();
            for e in m.links() {
                if links.contains(&e.link) && once.insert((e.link, hour_of_ms(e.t_entry_ms))) {
                    *acc.entry((e.link, hour_of_ms(e.t_entry_ms))).or_insert(0u64) += 1;
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });

    let mut sorted: Vec<&AtrRecord> = atr.iter().collect();
    sorted.sort_by(|a, b| a.station_id.cmp(&b.station_id).then(a.hour.cmp(&b.hour)));
    let mut hourly = Vec::with_capacity(sorted.len());
    let mut by_station: BTreeMap<&str, (LinkId, Vec<f64>, usize)> = BTreeMap::new();
    for r in sorted {
        let tr = traversals.get(&(r.link_id, r.hour)).copied().unwrap_or(0);
        let pr = (r.count > 0).then(|| tr as f64 / r.count as f64);
        let anomaly = pr.map_or(false, |p| p > 1.0);
        let st = by_station.entry(&r.station_id).or_insert((r.link_id, Vec::new(), 0));
        if let Some(p) = pr {
            st.1.push(p);
        }
        st.2 += anomaly as usize;
        hourly.push(HourlyPr {
            station_id: r.station_id.clone(),
            hour: r.hour,
            traversals: tr,
            count: r.count,
            pr,
            anomaly,
        });
    }
    let mut all: Vec<f64> = hourly.iter().filter_map(|h| h.pr).collect();
    if all.is_empty() {
        return Err(Error::Domain("no station-hour has a positive count".into()));
    }
    let mut stations = Vec::new();
    for (id, (link, mut prs, anomalies)) in by_station {
        if prs.is_empty() {
            continue;
        }
        stations.push(StationPr {
            station_id: id.to_string(),
            link_id: link,
            hours: prs.len(),
            mean_pr: mean(&prs),
            median_pr: lower_median(&mut prs),
            anomalies,
        });
    }
    let mut station_means: Vec<f64> = stations.iter().map(|s| s.mean_pr).collect();
    Ok(PenetrationEstimate {
        station_hours: all.len(),
        anomalies: hourly.iter().filter(|h| h.anomaly).count(),
        mean_pr: mean(&all),
        median_pr: lower_median(&mut all),
        median_station_mean_pr: lower_median(&mut station_means),
        hourly,
        stations,
    })
}

// ---------------------------------------------------------------- corridor

pub const DEFAULT_TZ_OFFSET_HOURS: i32 = -5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    pub fn as_str(&self) -> &'static str {
        match self {
            DayType::Weekday => "weekday",
            DayType::Weekend => "weekend",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorSpec {
    pub origin: GeoPolygon,
    pub destination: GeoPolygon,
    pub routes: Vec<(String, GeoPolygon)>,
    pub tz_offset_hours: i32,
}

impl CorridorSpec {
    /// Regions from GeoJSON polygons with a `role` of `origin`,
    /// `destination` or `route`; routes also carry a `name`.
    pub fn from_geojson(text: &str, tz_offset_hours: i32) -> Result<Self> {
        let fc = FeatureCollection::from_str(text)?;
        let (mut origin, mut destination, mut routes) = (None, None, Vec::new());
        for (i, f) in fc.features.iter().enumerate() {
            let poly = f.polygon(i)?;
            match f.prop_str(i, "role")?.as_str() {
                "origin" => origin = Some(poly),
                "destination" => destination = Some(poly),
                "route" => routes.push((f.prop_str(i, "name")?, poly)),
                other => return Err(Error::Parse(format!("feature {i}: unknown role '{other}'"))),
            }
        }
        Ok(CorridorSpec {
            origin: origin.ok_or_else(|| Error::Config("corridor file has no origin polygon".into()))?,
            destination: destination
                .ok_or_else(|| Error::Config("corridor file has no destination polygon".into()))?,
            routes,
            tz_offset_hours,
        })
    }

    pub fn to_geojson(&self) -> FeatureCollection {
        let mut fc = FeatureCollection::default();
        let props = |role: &str, name: Option<&str>| {
            let mut m = serde_json::Map::new();
            m.insert("role".into(), serde_json::json!(role));
            if let Some(n) = name {
                m.insert("name".into(), serde_json::json!(n));
            }
            m
        };
        fc.push(crate::geojson::polygon_geometry(&self.origin), props("origin", None));
        fc.push(crate::geojson::polygon_geometry(&self.destination), props("destination", None));
        for (name, poly) in &self.routes {
            fc.push(crate::geojson::polygon_geometry(poly), props("route", Some(name)));
        }
        fc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorTrip {
    pub trip_id: String,
    pub day_type: DayType,
    pub departure_hour: u32,
    pub travel_time_s: f64,
    /// `None` when no route holds a strict majority of the waypoints.
    pub route: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourBin {
    pub day_type: DayType,
    pub hour: u32,
    pub n: usize,
    pub median_s: f64,
    pub q1_s: f64,
    pub q3_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteShare {
    pub route: String,
    pub n: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorReport {
    pub trips_considered: usize,
    pub trips: Vec<CorridorTrip>,
    pub by_hour: Vec<HourBin>,
    pub routes: Vec<RouteShare>,
    pub unassigned: usize,
}

impl CorridorReport {
    pub fn hour_bin(&self, day: DayType, hour: u32) -> Option<&HourBin> {
        self.by_hour.iter().find(|b| b.day_type == day && b.hour == hour)
    }

    /// CSV `day_type,hour,n,median_s,q1_s,q3_s`.
    pub fn write_hourly_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["day_type", "hour", "n", "median_s", "q1_s", "q3_s"])?;
        for b in &self.by_hour {
            w.write_record([
                b.day_type.as_str().to_string(),
                b.hour.to_string(),
                b.n.to_string(),
                b.median_s.to_string(),
                b.q1_s.to_string(),
                b.q3_s.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `route,n,share`, unassigned trips last with an empty share.
    pub fn write_routes_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["route", "n", "share"])?;
        for r in &self.routes {
            w.write_record([r.route.clone(), r.n.to_string(), r.share.to_string()])?;
        }
        w.write_record(["UNASSIGNED".to_string(), self.unassigned.to_string(), String::new()])?;
        w.flush()?;
        Ok(())
    }
}

fn local_time(t_ms: i64, tz: &FixedOffset) -> Option<DateTime<FixedOffset>> {
    DateTime::<Utc>::from_timestamp_millis(t_ms).map(|d| d.with_timezone(tz))
}

fn quantile_lower(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).floor() as usize]
}

/// Travel times from region A to region B by local departure hour and day
/// type, plus route split shares.
pub fn corridor_analysis(trips: &[Trip], spec: &CorridorSpec) -> Result<CorridorReport> {
    let tz = FixedOffset::east_opt(spec.tz_offset_hours * 3600)
        .ok_or_else(|| Error::Config(format!("bad timezone offset {}", spec.tz_offset_hours)))?;
    let mut out = Vec::new();
    for t in trips {
        let wps = t.waypoints();
        let mut last_a = None;
        let mut first_b = None;
        for (i, w) in wps.iter().enumerate() {
            let p = w.pos();
            if last_a.is_some() && spec.destination.contains(p) {
                first_b = Some(i);
                break;
            }
            if spec.origin.contains(p) {
                last_a = Some(i);
            }
        }
        let (Some(ia), Some(ib)) = (last_a, first_b) else { continue };
        let Some(local) = local_time(t.start_ms(), &tz) else { continue };
        let day_type = match local.weekday() {
            Weekday::Sat | Weekday::Sun => DayType::Weekend,
            _ => DayType::Weekday,
        };
        let between = &wps[ia + 1..ib];
        let mut route = None;
        for (name, poly) in &spec.routes {
            let n = between.iter().filter(|w| poly.contains(w.pos())).count();
            if 2 * n > between.len() && !between.is_empty() {
                route = Some(name.clone());
                break;
            }
        }
        out.push(CorridorTrip {
            trip_id: t.trip_id.clone(),
            day_type,
            departure_hour: local.hour(),
            travel_time_s: (wps[ib].t_ms - wps[ia].t_ms) as f64 / 1000.0,
            route,
        });
    }
    out.sort_by(|a, b| a.trip_id.cmp(&b.trip_id));

    let mut bins: BTreeMap<(DayType, u32), Vec<f64>> = BTreeMap::new();
    for c in &out {
        bins.entry((c.day_type, c.departure_hour)).or_default().push(c.travel_time_s);
    }
    let by_hour = bins
        .into_iter()
        .map(|((day_type, hour), mut v)| {
            v.sort_by(f64::total_cmp);
            HourBin {
                day_type,
                hour,
                n: v.len(),
                median_s: quantile_lower(&v, 0.5),
                q1_s: quantile_lower(&v, 0.25),
                q3_s: quantile_lower(&v, 0.75),
            }
        })
        .collect();
    let assigned = out.iter().filter(|c| c.route.is_some()).count();
    let routes = spec
        .routes
        .iter()
        .map(|(name, _)| {
            let n = out.iter().filter(|c| c.route.as_deref() == Some(name)).count();
            RouteShare {
                route: name.clone(),
                n,
                share: if assigned > 0 { n as f64 / assigned as f64 } else { 0.0 },
            }
        })
        .collect();
    Ok(CorridorReport {
        trips_considered: trips.len(),
        unassigned: out.len() - assigned,
        trips: out,
        by_hour,
        routes,
    })
}

// ---------------------------------------------------------------- heat map

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub grid: GridSpec,
    /// Row-major counts.
    pub counts: Vec<u64>,
    pub out_of_grid: u64,
}

impl Heatmap {
    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[self.grid.flat_index(row, col)]
    }

    pub fn argmax(&self) -> Option<(usize, usize)> {
        let (i, c) = self
            .counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        (*c > 0).then(|| (i / self.grid.cols, i % self.grid.cols))
    }

    /// CSV `row,col,count` for non-empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            if *c > 0 {
                w.write_record([(i / self.grid.cols).to_string(), (i % self.grid.cols).to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Trip first-waypoint counts per grid cell.
pub fn origin_heatmap(trips: &[Trip], grid: &GridSpec) -> Result<Heatmap> {
    grid.validate()?;
    let mut h = Heatmap {
        grid: *grid,
        counts: vec![0; grid.n_cells()],
        out_of_grid: 0,
    };
    for t in trips {
        match grid.index(t.origin()) {
            Some((r, c)) => h.counts[grid.flat_index(r, c)] += 1,
            None => h.out_of_grid += 1,
        }
    }
    Ok(h)
}
