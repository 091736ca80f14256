//! Pipeline configuration: one TOML file, overridden by command-line flags.
//!
//! ```toml
//! [inputs]
//! trips = "trips.csv"          # default trip file for every subcommand
//! network = "network.geojson"
//! zones = "zones.geojson"
//! atr = "atr.csv"
//! matched = "matched.csv"
//! wim_sites = "wim_sites.geojson"
//! transit = "transit.geojson"
//! corridor = "corridor.geojson"
//! origin = "origin.geojson"
//!
//! [output]
//! dir = "out"
//!
//! [run]
//! workers = 4
//! seed = 42
//!
//! [mapmatch]
//! sigma_gps = 4.07
//! trips = "other.csv"          # any analysis section may name its own trips
//! ```
//!
//! Relative paths in the file resolve against the file's directory; paths
//! given as flags resolve against the working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracelens_core::demand::{PrAggregate, ZoneLevel, DEFAULT_TZ_OFFSET_HOURS};
use tracelens_core::enforcement::SpeedThreshold;
use tracelens_core::ingest::Format;
use tracelens_core::isochrone::{IsochroneSpec, DEFAULT_LEVELS};
use tracelens_core::mapmatch::HmmParams;
use tracelens_core::synth::WorldSpec;
use tracelens_core::transit;
use tracelens_core::{ClusterParams, GeoPolygon, GridSpec, Point};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    pub output: OutputSection,
    pub run: RunSection,
    pub ingest: IngestSection,
    pub mapmatch: MatchSection,
    pub penetration: PenetrationSection,
    pub od: OdSection,
    pub corridor: CorridorSection,
    pub isochrone: IsochroneSection,
    pub transit: TransitSection,
    pub speed_grid: SpeedGridSection,
    pub wim: WimSection,
    pub synth: Option<WorldSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub trips: Option<PathBuf>,
    /// `csv` or `jsonl`; inferred from the extension when absent.
    pub trips_format: Option<String>,
    pub network: Option<PathBuf>,
    pub zones: Option<PathBuf>,
    pub atr: Option<PathBuf>,
    pub matched: Option<PathBuf>,
    pub wim_sites: Option<PathBuf>,
    pub transit: Option<PathBuf>,
    pub corridor: Option<PathBuf>,
    pub origin: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub trips: Option<PathBuf>,
    /// Drop waypoints implying more than this speed; off when absent.
    pub vmax_mps: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSection {
    pub trips: Option<PathBuf>,
    pub sigma_gps: Option<f64>,
    pub beta: Option<f64>,
    pub candidate_radius: Option<f64>,
    pub max_candidates: Option<usize>,
    pub route_slack_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenetrationSection {
    /// `median` (default) or `mean`.
    pub aggregate: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdSection {
    pub trips: Option<PathBuf>,
    /// `taz` (default), `zip`, `county` or `state`.
    pub level: Option<String>,
    /// Expansion factor applied to the counts.
    pub expansion_factor: Option<f64>,
    /// Penetration rate; the factor is derived from it when no factor is given.
    pub penetration_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorridorSection {
    pub trips: Option<PathBuf>,
    pub tz_offset_hours: Option<i32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsochroneSection {
    pub trips: Option<PathBuf>,
    pub thresholds_min: Option<Vec<f64>>,
    pub eps_m: Option<Vec<f64>>,
    pub min_pts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitSection {
    pub trips: Option<PathBuf>,
    pub buffer_m: Option<f64>,
    pub uncovered_below: Option<f64>,
    pub min_pts: Option<usize>,
    pub max_eps_m: Option<f64>,
    pub threshold_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedGridSection {
    pub trips: Option<PathBuf>,
    /// South-west corner of the grid.
    pub sw_lat: Option<f64>,
    pub sw_lon: Option<f64>,
    pub cell_m: Option<f64>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    /// Segments faster than this count as high speed.
    pub threshold_mps: Option<f64>,
    /// Compare against the cell's mean segment speed instead.
    pub above_cell_mean: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WimSection {
    pub trips: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| e.context(path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.trips,
            &mut i.network,
            &mut i.zones,
            &mut i.atr,
            &mut i.matched,
            &mut i.wim_sites,
            &mut i.transit,
            &mut i.corridor,
            &mut i.origin,
            &mut self.output.dir,
            &mut self.ingest.trips,
            &mut self.mapmatch.trips,
            &mut self.od.trips,
            &mut self.corridor.trips,
            &mut self.isochrone.trips,
            &mut self.transit.trips,
            &mut self.speed_grid.trips,
            &mut self.wim.trips,
        ] {
            fix(p);
        }
    }

    pub fn workers(&self) -> CliResult<usize> {
        match self.run.workers {
            Some(0) => Err(CliError::Config("workers must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.output
            .dir
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory (set [output] dir or pass --out)".into()))
    }

    pub fn trips_format(&self, path: &Path) -> CliResult<Format> {
        if let Some(f) = &self.inputs.trips_format {
            return f.parse().map_err(CliError::from);
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Ok(Format::Jsonl),
            _ => Ok(Format::Csv),
        }
    }

    pub fn hmm_params(&self) -> CliResult<HmmParams> {
        let d = HmmParams::default();
        let m = &self.mapmatch;
        let p = HmmParams {
            sigma_gps: m.sigma_gps.unwrap_or(d.sigma_gps),
            beta: m.beta.unwrap_or(d.beta),
            candidate_radius: m.candidate_radius.unwrap_or(d.candidate_radius),
            max_candidates: m.max_candidates.unwrap_or(d.max_candidates),
            route_slack_m: m.route_slack_m.unwrap_or(d.route_slack_m),
        };
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn pr_aggregate(&self) -> CliResult<PrAggregate> {
        match &self.penetration.aggregate {
            None => Ok(PrAggregate::default()),
            Some(s) => s.parse().map_err(CliError::from),
        }
    }

    pub fn od_level(&self) -> CliResult<ZoneLevel> {
        match &self.od.level {
            None => Ok(ZoneLevel::Taz),
            Some(s) => s
                .parse()
                .map_err(|e: tracelens_core::Error| CliError::Config(e.to_string())),
        }
    }

    /// Factor from `expansion_factor`, else from `penetration_rate`.
    pub fn od_expansion(&self) -> CliResult<Option<f64>> {
        match (self.od.expansion_factor, self.od.penetration_rate) {
            (Some(f), _) if f >= 1.0 && f.is_finite() => Ok(Some(f)),
            (Some(f), _) => Err(CliError::Config(format!("expansion_factor must be at least 1, got {f}"))),
            (None, Some(pr)) => tracelens_core::demand::expansion_factor_from_pr(pr)
                .map(|f| Some(f as f64))
                .map_err(|e| CliError::Config(e.to_string())),
            (None, None) => Ok(None),
        }
    }

    pub fn tz_offset_hours(&self) -> CliResult<i32> {
        let tz = self.corridor.tz_offset_hours.unwrap_or(DEFAULT_TZ_OFFSET_HOURS);
        if !(-14..=14).contains(&tz) {
            return Err(CliError::Config(format!("tz_offset_hours {tz} outside -14..=14")));
        }
        Ok(tz)
    }

    /// Isochrone levels; the published defaults fill whatever is unset.
    pub fn isochrone_spec(&self, origin: GeoPolygon) -> CliResult<IsochroneSpec> {
        let s = &self.isochrone;
        let n = s.thresholds_min.as_ref().map_or(DEFAULT_LEVELS.len(), Vec::len);
        let pick = |v: &Option<Vec<f64>>, k: usize| -> CliResult<Vec<f64>> {
            match v {
                Some(v) if v.len() == n => Ok(v.clone()),
                Some(v) => Err(CliError::Config(format!("isochrone lists differ in length: {} vs {n}", v.len()))),
                None if n == DEFAULT_LEVELS.len() => Ok(DEFAULT_LEVELS
                    .iter()
                    .map(|l| if k == 0 { l.0 } else { l.1 })
                    .collect()),
                None => Err(CliError::Config("custom isochrone thresholds need eps_m and min_pts".into())),
            }
        };
        let thresholds = pick(&s.thresholds_min, 0)?;
        let eps = pick(&s.eps_m, 1)?;
        let min_pts: Vec<usize> = match &s.min_pts {
            Some(v) if v.len() == n => v.clone(),
            Some(v) => return Err(CliError::Config(format!("isochrone lists differ in length: {} vs {n}", v.len()))),
            None if n == DEFAULT_LEVELS.len() => DEFAULT_LEVELS.iter().map(|l| l.2).collect(),
            None => return Err(CliError::Config("custom isochrone thresholds need eps_m and min_pts".into())),
        };
        let spec = IsochroneSpec {
            origin,
            thresholds_min: thresholds,
            params: eps
                .into_iter()
                .zip(min_pts)
                .map(|(eps, min_pts)| ClusterParams { eps, min_pts })
                .collect(),
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn transit_params(&self) -> TransitParams {
        let t = &self.transit;
        TransitParams {
            buffer_m: t.buffer_m.unwrap_or(transit::DEFAULT_BUFFER_M),
            uncovered_below: t.uncovered_below.unwrap_or(transit::DEFAULT_UNCOVERED_BELOW),
            min_pts: t.min_pts.unwrap_or(transit::DEFAULT_OPTICS_MIN_PTS),
            max_eps_m: t.max_eps_m.unwrap_or(transit::DEFAULT_OPTICS_MAX_EPS_M),
            threshold_m: t.threshold_m.unwrap_or(transit::DEFAULT_EXTRACT_THRESHOLD_M),
        }
    }

    pub fn speed_grid(&self) -> CliResult<(GridSpec, SpeedThreshold)> {
        let s = &self.speed_grid;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Config(format!("[speed_grid] {name} is required")))
        };
        let sw = Point {
            lat: need(s.sw_lat, "sw_lat")?,
            lon: need(s.sw_lon, "sw_lon")?,
        };
        let rows = s.rows.ok_or_else(|| CliError::Config("[speed_grid] rows is required".into()))?;
        let cols = s.cols.ok_or_else(|| CliError::Config("[speed_grid] cols is required".into()))?;
        let grid = GridSpec::new(sw, need(s.cell_m, "cell_m")?, rows, cols).map_err(|e| CliError::Config(e.to_string()))?;
        let threshold = match (s.above_cell_mean.unwrap_or(false), s.threshold_mps) {
            (true, None) => SpeedThreshold::AboveCellMean,
            (false, Some(v)) if v > 0.0 && v.is_finite() => SpeedThreshold::Absolute(v),
            (false, Some(v)) => return Err(CliError::Config(format!("threshold_mps must be positive, got {v}"))),
            (true, Some(_)) => {
                return Err(CliError::Config("set either threshold_mps or above_cell_mean, not both".into()))
            }
            (false, None) => return Err(CliError::Config("[speed_grid] needs threshold_mps or above_cell_mean".into())),
        };
        Ok((grid, threshold))
    }

    /// World spec for `synth`, seeded from `[run] seed` when given.
    pub fn world_spec(&self) -> WorldSpec {
        let mut spec = self.synth.clone().unwrap_or_default();
        if let Some(seed) = self.run.seed {
            spec.seed = seed;
        }
        spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitParams {
    pub buffer_m: f64,
    pub uncovered_below: f64,
    pub min_pts: usize,
    pub max_eps_m: f64,
    pub threshold_m: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid() {
        let c = PipelineConfig::parse("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.hmm_params().unwrap(), HmmParams::default());
        assert!(c.out_dir().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::parse("[mapmatch]\nsigma = 3.0\n").is_err());
        assert!(PipelineConfig::parse("[nope]\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let c = PipelineConfig::parse(
            "[inputs]\ntrips = \"a.csv\"\n[mapmatch]\nsigma_gps = 5.0\n[od]\nlevel = \"county\"\npenetration_rate = 0.0186\n[run]\nworkers = 3\n",
        )
        .unwrap();
        assert_eq!(c.hmm_params().unwrap().sigma_gps, 5.0);
        assert_eq!(c.od_level().unwrap(), ZoneLevel::County);
        assert_eq!(c.od_expansion().unwrap(), Some(54.0));
        assert_eq!(c.workers().unwrap(), 3);
    }

    #[test]
    fn default_isochrone_levels_validate() {
        let origin = GeoPolygon::rect(39.0, -77.0, 39.01, -76.99).unwrap();
        let spec = PipelineConfig::default().isochrone_spec(origin.clone()).unwrap();
        assert_eq!(spec, IsochroneSpec::with_defaults(origin.clone()));
        let mut c = PipelineConfig::default();
        c.isochrone.thresholds_min = Some(vec![5.0, 10.0]);
        assert!(c.isochrone_spec(origin.clone()).is_err());
        c.isochrone.eps_m = Some(vec![500.0, 600.0]);
        c.isochrone.min_pts = Some(vec![5, 5]);
        assert_eq!(c.isochrone_spec(origin).unwrap().thresholds_min, vec![5.0, 10.0]);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut c = PipelineConfig::default();
        c.mapmatch.sigma_gps = Some(-1.0);
        assert!(matches!(c.hmm_params(), Err(CliError::Config(_))));
        c.run.workers = Some(0);
        assert!(c.workers().is_err());
        c.corridor.tz_offset_hours = Some(30);
        assert!(c.tz_offset_hours().is_err());
        assert!(c.speed_grid().is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let mut c = PipelineConfig::parse("[inputs]\ntrips = \"t.csv\"\nnetwork = \"/abs/n.geojson\"\n").unwrap();
        c.rebase(Path::new("/data/run"));
        assert_eq!(c.inputs.trips.unwrap(), Path::new("/data/run/t.csv"));
        assert_eq!(c.inputs.network.unwrap(), Path::new("/abs/n.geojson"));
    }
}
