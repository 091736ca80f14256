//! Subcommand bodies. Each reads its inputs through an [`InputLog`] and
//! fills an [`OutputSet`]; nothing touches the output directory until the
//! whole computation has succeeded.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use tracelens_core::demand::{
    build_od_matrix, corridor_analysis, estimate_penetration, expand_matrix, format_hour_utc, read_atr_csv,
    write_atr_csv, CorridorSpec, ZoneSystem,
};
use tracelens_core::enforcement::{detect_wim_evasion, load_wim_sites, speed_grid, wim_sites_to_geojson, write_evasion_csv};
use tracelens_core::geojson::{polygon_geometry, FeatureCollection, Geometry};
use tracelens_core::ingest::{
    filter_outlier_waypoints, parse_trips, summarize_corpus, trip_stats, write_trips_csv, IngestReport, TripStats,
};
use tracelens_core::isochrone::{build_isochrones, isochrones_to_geojson};
use tracelens_core::mapmatch::{match_batch, read_matched_csv, write_matched_csv, MatchOutcome};
use tracelens_core::network::RoadNetwork;
use tracelens_core::synth::{generate_world, PlantedRoute, World};
use tracelens_core::transit::{cluster_od_pairs, demand_vs_transit_report, TransitNetwork};
use tracelens_core::{GeoPolygon, Trip};

use crate::artifacts::{InputLog, OutputSet};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    IngestStats,
    Match,
    Penetration,
    OdMatrix,
    Corridor,
    Isochrone,
    TransitCoverage,
    SpeedGrid,
    WimEvasion,
    Synth,
}

impl Subcommand {
    pub const ALL: [Subcommand; 10] = [
        Subcommand::IngestStats,
        Subcommand::Match,
        Subcommand::Penetration,
        Subcommand::OdMatrix,
        Subcommand::Corridor,
        Subcommand::Isochrone,
        Subcommand::TransitCoverage,
        Subcommand::SpeedGrid,
        Subcommand::WimEvasion,
        Subcommand::Synth,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::IngestStats => "ingest-stats",
            Subcommand::Match => "match",
            Subcommand::Penetration => "penetration",
            Subcommand::OdMatrix => "od-matrix",
            Subcommand::Corridor => "corridor",
            Subcommand::Isochrone => "isochrone",
            Subcommand::TransitCoverage => "transit-coverage",
            Subcommand::SpeedGrid => "speed-grid",
            Subcommand::WimEvasion => "wim-evasion",
            Subcommand::Synth => "synth",
        }
    }
}

/// Loading state shared by the subcommands.
pub struct Ctx<'a> {
    pub cfg: &'a PipelineConfig,
    pub inputs: InputLog,
    pub out: OutputSet,
    pub workers: usize,
}

fn require<'p>(p: &'p Option<PathBuf>, what: &str) -> CliResult<&'p Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("no {what} file given (config [inputs] or flag)")))
}

impl Ctx<'_> {
    fn trips_path(&self, section: &Option<PathBuf>) -> CliResult<PathBuf> {
        section
            .clone()
            .or_else(|| self.cfg.inputs.trips.clone())
            .ok_or_else(|| CliError::Config("no trips file given (config or --trips)".into()))
    }

    /// All valid trips of a file and the ingestion account.
    fn load_trips(&mut self, section: &Option<PathBuf>) -> CliResult<(Vec<Trip>, IngestReport)> {
        let path = self.trips_path(section)?;
        let format = self.cfg.trips_format(&path)?;
        self.inputs.stream("trips", &path, |r| {
            let mut reader = parse_trips(r, format).map_err(|e| CliError::from(e).context(path.display()))?;
            let mut trips = Vec::new();
            for t in reader.by_ref() {
                trips.push(t.map_err(|e| CliError::from(e).context(path.display()))?);
            }
            Ok((trips, reader.into_report()))
        })
    }

    fn network(&mut self) -> CliResult<RoadNetwork> {
        let path = require(&self.cfg.inputs.network, "network")?.to_path_buf();
        let text = self.inputs.read_text("network", &path)?;
        RoadNetwork::from_geojson(&text).map_err(|e| config_err(e, &path))
    }
}

/// Parse failures in an input file are configuration errors whatever the
/// core calls them.
fn config_err(e: tracelens_core::Error, path: &Path) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

pub fn execute(cmd: Subcommand, ctx: &mut Ctx) -> CliResult<()> {
    match cmd {
        Subcommand::IngestStats => ingest_stats(ctx),
        Subcommand::Match => map_match(ctx),
        Subcommand::Penetration => penetration(ctx),
        Subcommand::OdMatrix => od_matrix(ctx),
        Subcommand::Corridor => corridor(ctx),
        Subcommand::Isochrone => isochrone(ctx),
        Subcommand::TransitCoverage => transit_coverage(ctx),
        Subcommand::SpeedGrid => speed(ctx),
        Subcommand::WimEvasion => wim(ctx),
        Subcommand::Synth => synth(ctx),
    }
}

// ---------------------------------------------------------------- ingest

pub const STATS_HEADER: &str = "trip_id,duration_s,length_m,n_waypoints,median_lapse_s,median_spacing_m";

/// One stats CSV line, millimetre and millisecond resolution.
pub fn stats_row(trip_id: &str, s: &TripStats) -> String {
    format!(
        "{},{:.3},{:.3},{},{:.3},{:.3}",
        csv_field(trip_id),
        s.duration_s,
        s.length_m,
        s.n_waypoints,
        s.median_lapse_s,
        s.median_spacing_m
    )
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn ingest_stats(ctx: &mut Ctx) -> CliResult<()> {
    let path = ctx.trips_path(&ctx.cfg.ingest.trips)?;
    let format = ctx.cfg.trips_format(&path)?;
    let vmax = ctx.cfg.ingest.vmax_mps;
    if let Some(v) = vmax {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("vmax_mps must be positive, got {v}")));
        }
    }
    let (csv, stats, report) = ctx.inputs.stream("trips", &path, |r| {
        let mut reader = parse_trips(r, format).map_err(|e| CliError::from(e).context(path.display()))?;
        let mut csv = Vec::new();
        writeln!(csv, "{STATS_HEADER}")?;
        let mut stats = Vec::new();
        let mut extra = IngestReport::default();
        for t in reader.by_ref() {
            let mut t = t.map_err(|e| CliError::from(e).context(path.display()))?;
            if let Some(v) = vmax {
                match filter_outlier_waypoints(&t, v) {
                    Ok((clean, dropped)) => {
                        extra.record_outliers(dropped);
                        t = clean;
                    }
                    Err(reason) => {
                        extra.trips_kept += 1;
                        extra.reject_kept(reason);
                        continue;
                    }
                }
            }
            let s = trip_stats(&t);
            writeln!(csv, "{}", stats_row(&t.trip_id, &s))?;
            stats.push(s);
        }
        let mut report = reader.into_report();
        // Rejections after parsing move trips from kept to rejected.
        report.trips_kept -= extra.trips_rejected;
        report.trips_rejected += extra.trips_rejected;
        report.waypoints_dropped_as_outliers += extra.waypoints_dropped_as_outliers;
        for (k, v) in extra.rejection_reasons {
            *report.rejection_reasons.entry(k).or_default() += v;
        }
        Ok((csv, stats, report))
    })?;
    let summary = summarize_corpus(stats)?;
    ctx.out.add("trip_stats.csv", csv);
    ctx.out.add_json("corpus_summary.json", &summary)?;
    ctx.out.add_json("ingest_report.json", &report)?;
    Ok(())
}

// ---------------------------------------------------------------- match

fn map_match(ctx: &mut Ctx) -> CliResult<()> {
    let params = ctx.cfg.hmm_params()?;
    let net = ctx.network()?;
    let (trips, ingest) = ctx.load_trips(&ctx.cfg.mapmatch.trips)?;
    let (outcomes, report) = match_batch(&trips, &net, &params, ctx.workers)?;
    let unmatchable: Vec<&str> = outcomes
        .iter()
        .filter(|o| o.matched().is_none())
        .map(|o| o.trip_id())
        .collect();
    ctx.out.add_with("matched.csv", |b| write_matched_csv(b, &outcomes))?;
    ctx.out.add_json(
        "match_report.json",
        &json!({
            "params": params,
            "batch": report,
            "unmatchable_trips": unmatchable,
            "ingest": ingest,
        }),
    )?;
    Ok(())
}

/// Outcome of each input trip, undoing the batch's trip-id ordering.
pub fn outcomes_in_input_order<'o>(trips: &[Trip], outcomes: &'o [MatchOutcome]) -> Vec<&'o MatchOutcome> {
    let mut order: Vec<usize> = (0..trips.len()).collect();
    order.sort_by(|&a, &b| trips[a].trip_id.cmp(&trips[b].trip_id).then(a.cmp(&b)));
    let mut out: Vec<Option<&MatchOutcome>> = vec![None; trips.len()];
    for (k, &i) in order.iter().enumerate() {
        out[i] = Some(&outcomes[k]);
    }
    out.into_iter().map(|o| o.expect("one outcome per trip")).collect()
}

// ---------------------------------------------------------------- penetration

fn penetration(ctx: &mut Ctx) -> CliResult<()> {
    let which = ctx.cfg.pr_aggregate()?;
    let net = ctx.network()?;
    let atr_path = require(&ctx.cfg.inputs.atr, "ATR")?.to_path_buf();
    let atr = ctx
        .inputs
        .stream("atr", &atr_path, |r| read_atr_csv(r).map_err(|e| config_err(e, &atr_path)))?;
    let m_path = require(&ctx.cfg.inputs.matched, "matched-route")?.to_path_buf();
    let matched = ctx
        .inputs
        .stream("matched", &m_path, |r| read_matched_csv(r).map_err(|e| config_err(e, &m_path)))?;
    let est = estimate_penetration(&matched, &atr, &net)?;
    let factor = est.expansion_factor(which)?;

    let mut hourly = Vec::new();
    writeln!(hourly, "station_id,hour_utc,traversals,count,pr,anomaly")?;
    for h in &est.hourly {
        writeln!(
            hourly,
            "{},{},{},{},{},{}",
            csv_field(&h.station_id),
            format_hour_utc(h.hour),
            h.traversals,
            h.count,
            h.pr.map_or(String::new(), |p| format!("{p:.6}")),
            h.anomaly
        )?;
    }
    let mut stations = Vec::new();
    writeln!(stations, "station_id,link_id,hours,mean_pr,median_pr,anomalies")?;
    for s in &est.stations {
        writeln!(
            stations,
            "{},{},{},{:.6},{:.6},{}",
            csv_field(&s.station_id),
            s.link_id,
            s.hours,
            s.mean_pr,
            s.median_pr,
            s.anomalies
        )?;
    }
    ctx.out.add("penetration_hourly.csv", hourly);
    ctx.out.add("penetration_stations.csv", stations);
    ctx.out.add_json(
        "penetration.json",
        &json!({
            "aggregate": which,
            "mean_pr": est.mean_pr,
            "median_pr": est.median_pr,
            "median_station_mean_pr": est.median_station_mean_pr,
            "station_hours": est.station_hours,
            "anomalies": est.anomalies,
            "expansion_factor": factor,
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------- od

fn od_matrix(ctx: &mut Ctx) -> CliResult<()> {
    let level = ctx.cfg.od_level()?;
    let factor = ctx.cfg.od_expansion()?;
    let z_path = require(&ctx.cfg.inputs.zones, "zones")?.to_path_buf();
    let text = ctx.inputs.read_text("zones", &z_path)?;
    let zones = ZoneSystem::from_geojson(&text, level).map_err(|e| config_err(e, &z_path))?;
    let (trips, ingest) = ctx.load_trips(&ctx.cfg.od.trips)?;
    let mut m = build_od_matrix(&trips, &zones);
    if let Some(f) = factor {
        m = expand_matrix(&m, f)?;
    }
    ctx.out.add_with("od_matrix.csv", |b| m.write_csv(b))?;
    ctx.out.add_json(
        "od_summary.json",
        &json!({
            "level": level.as_str(),
            "zones": m.zones.len(),
            "trips": trips.len(),
            "assigned": m.total(),
            "unassigned": m.unassigned,
            "expansion_factor": m.factor(),
            "ingest": ingest,
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------- corridor

fn corridor(ctx: &mut Ctx) -> CliResult<()> {
    let tz = ctx.cfg.tz_offset_hours()?;
    let c_path = require(&ctx.cfg.inputs.corridor, "corridor")?.to_path_buf();
    let text = ctx.inputs.read_text("corridor", &c_path)?;
    let spec = CorridorSpec::from_geojson(&text, tz).map_err(|e| config_err(e, &c_path))?;
    let (trips, _) = ctx.load_trips(&ctx.cfg.corridor.trips)?;
    let rep = corridor_analysis(&trips, &spec)?;
    ctx.out.add_with("corridor_hourly.csv", |b| rep.write_hourly_csv(b))?;
    ctx.out.add_with("corridor_routes.csv", |b| rep.write_routes_csv(b))?;
    let mut per_trip = Vec::new();
    writeln!(per_trip, "trip_id,day_type,departure_hour,travel_time_s,route")?;
    for t in &rep.trips {
        let day = serde_json::to_value(t.day_type).expect("day type");
        writeln!(
            per_trip,
            "{},{},{},{:.3},{}",
            csv_field(&t.trip_id),
            day.as_str().unwrap_or_default(),
            t.departure_hour,
            t.travel_time_s,
            t.route.as_deref().map(csv_field).unwrap_or_default()
        )?;
    }
    ctx.out.add("corridor_trips.csv", per_trip);
    ctx.out.add_json(
        "corridor_summary.json",
        &json!({
            "tz_offset_hours": tz,
            "trips_considered": rep.trips_considered,
            "qualifying_trips": rep.trips.len(),
            "unassigned": rep.unassigned,
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------- isochrone

fn first_polygon(fc: &FeatureCollection, path: &Path) -> CliResult<GeoPolygon> {
    fc.features
        .iter()
        .enumerate()
        .find(|(_, f)| matches!(f.geometry, Geometry::Polygon { .. }))
        .ok_or_else(|| CliError::Config(format!("{}: no Polygon feature", path.display())))
        .and_then(|(i, f)| f.polygon(i).map_err(|e| config_err(e, path)))
}

fn isochrone(ctx: &mut Ctx) -> CliResult<()> {
    let o_path = require(&ctx.cfg.inputs.origin, "isochrone origin")?.to_path_buf();
    let text = ctx.inputs.read_text("origin", &o_path)?;
    let fc = FeatureCollection::from_str(&text).map_err(|e| config_err(e, &o_path))?;
    let spec = ctx.cfg.isochrone_spec(first_polygon(&fc, &o_path)?)?;
    let (trips, _) = ctx.load_trips(&ctx.cfg.isochrone.trips)?;
    let set = build_isochrones(&trips, &spec)?;
    let mut geo = isochrones_to_geojson(&set.isochrones).to_string_pretty().into_bytes();
    geo.push(b'\n');
    ctx.out.add("isochrones.geojson", geo);
    ctx.out.add_json("isochrones.json", &set)?;
    Ok(())
}

// ---------------------------------------------------------------- transit

fn transit_coverage(ctx: &mut Ctx) -> CliResult<()> {
    let tp = ctx.cfg.transit_params();
    let params = ctx.cfg.hmm_params()?;
    let net = ctx.network()?;
    let t_path = require(&ctx.cfg.inputs.transit, "transit")?.to_path_buf();
    let text = ctx.inputs.read_text("transit", &t_path)?;
    let tn = TransitNetwork::from_geojson(&text).map_err(|e| config_err(e, &t_path))?;
    let (trips, _) = ctx.load_trips(&ctx.cfg.transit.trips)?;
    let labels = cluster_od_pairs(&trips, tp.min_pts, tp.max_eps_m, tp.threshold_m)?;
    let (outcomes, _) = match_batch(&trips, &net, &params, ctx.workers)?;
    let matched: Vec<_> = outcomes_in_input_order(&trips, &outcomes)
        .into_iter()
        .map(|o| o.matched())
        .collect();
    let (report, heat) = demand_vs_transit_report(&labels, &matched, &net, &tn, tp.buffer_m, tp.uncovered_below)?;
    ctx.out.add_with("transit_coverage.csv", |b| report.write_csv(b))?;
    let mut geo = heat.to_string_pretty().into_bytes();
    geo.push(b'\n');
    ctx.out.add("transit_heat.geojson", geo);
    let mut labels_csv = Vec::new();
    writeln!(labels_csv, "trip_id,cluster_id")?;
    for (t, l) in trips.iter().zip(&labels.labels) {
        writeln!(labels_csv, "{},{}", csv_field(&t.trip_id), l.map_or(String::new(), |c| c.to_string()))?;
    }
    ctx.out.add("transit_clusters.csv", labels_csv);
    ctx.out.add_json(
        "transit_summary.json",
        &json!({
            "params": tp,
            "trips": trips.len(),
            "clusters": report.clusters.len(),
            "flagged": report.clusters.iter().filter(|c| c.flagged).count(),
            "noise_trips": report.noise_trips,
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------- enforcement

fn speed(ctx: &mut Ctx) -> CliResult<()> {
    let (grid, threshold) = ctx.cfg.speed_grid()?;
    let (trips, _) = ctx.load_trips(&ctx.cfg.speed_grid.trips)?;
    let sg = speed_grid(&trips, &grid, threshold)?;
    ctx.out.add_with("speed_grid.csv", |b| sg.write_csv(b))?;
    let mut geo = sg.to_geojson()?.to_string_pretty().into_bytes();
    geo.push(b'\n');
    ctx.out.add("speed_grid.geojson", geo);
    ctx.out.add_json(
        "speed_grid_summary.json",
        &json!({
            "grid": grid,
            "threshold": threshold,
            "segments": sg.segments(),
            "out_of_grid": sg.out_of_grid,
            "zero_duration": sg.zero_duration,
        }),
    )?;
    Ok(())
}

fn wim(ctx: &mut Ctx) -> CliResult<()> {
    let s_path = require(&ctx.cfg.inputs.wim_sites, "WIM site")?.to_path_buf();
    let text = ctx.inputs.read_text("wim_sites", &s_path)?;
    let sites = load_wim_sites(&text).map_err(|e| config_err(e, &s_path))?;
    let (trips, _) = ctx.load_trips(&ctx.cfg.wim.trips)?;
    let reports: Vec<_> = sites.iter().map(|s| detect_wim_evasion(&trips, s)).collect();
    ctx.out.add_with("wim_evasion.csv", |b| write_evasion_csv(b, &reports))?;
    let detours: Vec<_> = reports
        .iter()
        .map(|r| json!({ "site_id": r.site_id, "detour": r.detour }))
        .collect();
    ctx.out.add_json("wim_detour.json", &detours)?;
    Ok(())
}

// ---------------------------------------------------------------- synth

fn trips_csv<'a>(trips: impl IntoIterator<Item = &'a Trip>) -> CliResult<Vec<u8>> {
    let mut b = Vec::new();
    write_trips_csv(&mut b, trips)?;
    Ok(b)
}

fn routes_csv(planted: &[PlantedRoute]) -> Vec<u8> {
    let mut b = String::from("trip_id,seq,link_id\n");
    for p in planted {
        for (i, l) in p.links.iter().enumerate() {
            b.push_str(&format!("{},{i},{l}\n", csv_field(&p.trip.trip_id)));
        }
    }
    b.into_bytes()
}

fn geojson_bytes(fc: &FeatureCollection) -> Vec<u8> {
    let mut b = fc.to_string_pretty().into_bytes();
    b.push(b'\n');
    b
}

/// Config that runs every subcommand on a synthetic corpus.
#[derive(Serialize)]
struct SynthPipeline {
    inputs: toml::Table,
    output: toml::Table,
    mapmatch: toml::Table,
    od: toml::Table,
    corridor: toml::Table,
    isochrone: toml::Table,
    transit: toml::Table,
    speed_grid: toml::Table,
    wim: toml::Table,
}

fn table(pairs: &[(&str, toml::Value)]) -> toml::Table {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn pipeline_toml(w: &World) -> String {
    use toml::Value as V;
    let s = |x: &str| V::String(x.into());
    let g = &w.truth.speed.grid;
    let cfg = SynthPipeline {
        inputs: table(&[
            ("trips", s("trips_grid.csv")),
            ("network", s("network.geojson")),
            ("zones", s("zones.geojson")),
            ("atr", s("atr.csv")),
            ("matched", s("out/matched.csv")),
            ("wim_sites", s("wim_sites.geojson")),
            ("transit", s("transit.geojson")),
            ("corridor", s("corridor.geojson")),
            ("origin", s("isochrone_origin.geojson")),
        ]),
        output: table(&[("dir", s("out"))]),
        mapmatch: table(&[("trips", s("trips_grid.csv"))]),
        od: table(&[("trips", s("trips_od.csv"))]),
        corridor: table(&[
            ("trips", s("trips_corridor.csv")),
            ("tz_offset_hours", V::Integer(w.truth.corridor.tz_offset_hours as i64)),
        ]),
        isochrone: table(&[("trips", s("trips_radial.csv"))]),
        transit: table(&[("trips", s("trips_transit.csv"))]),
        speed_grid: table(&[
            ("trips", s("trips_speed.csv")),
            ("sw_lat", V::Float(g.origin.lat)),
            ("sw_lon", V::Float(g.origin.lon)),
            ("cell_m", V::Float(g.cell_m)),
            ("rows", V::Integer(g.rows as i64)),
            ("cols", V::Integer(g.cols as i64)),
            ("threshold_mps", V::Float(1.5 * w.truth.speed.ambient_mps)),
        ]),
        wim: table(&[("trips", s("trips_wim.csv"))]),
    };
    format!(
        "# Runs every subcommand on this corpus: tracelens --config pipeline.toml <subcommand>\n# Run `match` before `penetration`.\n{}",
        toml::to_string(&cfg).expect("pipeline config serializes")
    )
}

fn synth(ctx: &mut Ctx) -> CliResult<()> {
    let spec = ctx.cfg.world_spec();
    let w = generate_world(&spec)?;
    let out = &mut ctx.out;
    out.add("network.geojson", geojson_bytes(&w.grid.net.to_geojson()));
    out.add("trips_grid.csv", trips_csv(w.grid_trips.iter().map(|p| &p.trip))?);
    out.add("truth_routes_grid.csv", routes_csv(&w.grid_trips));
    out.add_with("atr.csv", |b| write_atr_csv(b, &w.atr))?;
    out.add("wim_sites.geojson", geojson_bytes(&wim_sites_to_geojson(std::slice::from_ref(&w.wim_site))));
    out.add("trips_wim.csv", trips_csv(&w.wim_trips)?);
    out.add("corridor.geojson", geojson_bytes(&w.corridor.to_geojson()));
    out.add("trips_corridor.csv", trips_csv(&w.corridor_trips)?);
    out.add("zones.geojson", geojson_bytes(&w.zones.to_geojson()));
    out.add("trips_od.csv", trips_csv(&w.od_trips)?);
    let mut origin = FeatureCollection::default();
    origin.push(polygon_geometry(&w.isochrone_origin), Default::default());
    out.add("isochrone_origin.geojson", geojson_bytes(&origin));
    out.add("trips_radial.csv", trips_csv(&w.radial_trips)?);
    out.add("transit.geojson", geojson_bytes(&w.transit.to_geojson()));
    out.add("trips_transit.csv", trips_csv(w.transit_trips.iter().map(|p| &p.trip))?);
    out.add("truth_routes_transit.csv", routes_csv(&w.transit_trips));
    out.add("trips_speed.csv", trips_csv(&w.speed_trips)?);
    out.add_json("truth.json", &w.truth)?;
    out.add("pipeline.toml", pipeline_toml(&w).into_bytes());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tracelens_core::Waypoint;

    #[test]
    fn stats_rows_are_fixed_precision() {
        let t = Trip::vehicle(
            "a,b",
            vec![
                Waypoint::new(39.0, -77.0, 1_000).unwrap(),
                Waypoint::new(39.001, -77.0, 3_500).unwrap(),
            ],
        )
        .unwrap();
        let row = stats_row(&t.trip_id, &trip_stats(&t));
        assert!(row.starts_with("\"a,b\",2.500,111.195,2,2.500,111.195"), "{row}");
    }

    #[test]
    fn input_order_is_restored() {
        let mk = |id: &str| {
            Trip::vehicle(
                id,
                vec![Waypoint::new(1.0, 1.0, 1).unwrap(), Waypoint::new(1.0, 1.0, 2).unwrap()],
            )
            .unwrap()
        };
        let trips = vec![mk("b"), mk("a"), mk("b"), mk("c")];
        let sorted: Vec<MatchOutcome> = ["a", "b", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, id)| MatchOutcome::Unmatchable {
                trip_id: format!("{id}{i}"),
            })
            .collect();
        let got: Vec<&str> = outcomes_in_input_order(&trips, &sorted).iter().map(|o| o.trip_id()).collect();
        assert_eq!(got, ["b1", "a0", "b2", "c3"]);
    }
}
