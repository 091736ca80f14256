//! Command-line pipelines over the tracelens core.
//!
//! Every run reads one optional TOML config, applies flag overrides, and
//! writes its artifacts plus a `<subcommand>.manifest.json` into the output
//! directory. Exit status is 0 on success, 1 on a domain error and 2 on a
//! configuration or I/O error; diagnostics go to stderr as logfmt lines.

pub mod artifacts;
pub mod bench;
pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand as ClapSubcommand};

use crate::artifacts::{manifest_name, InputLog, Manifest, OutputSet};
use crate::commands::{execute, Ctx, Subcommand};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tracelens", version, about = "Trajectory analytics pipelines over GPS probe data")]
pub struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for batch matching.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct TripArgs {
    /// Trip file (CSV or JSONL).
    #[arg(long)]
    pub trips: Option<PathBuf>,
    /// Trip format: csv or jsonl (default: from the extension).
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, ClapSubcommand)]
pub enum Command {
    /// Per-trip statistics and corpus summary.
    IngestStats {
        #[command(flatten)]
        trips: TripArgs,
        /// Drop waypoints implying more than this speed (m/s).
        #[arg(long)]
        vmax: Option<f64>,
    },
    /// Map-match trips onto a road network.
    Match {
        #[command(flatten)]
        trips: TripArgs,
        #[arg(long)]
        network: Option<PathBuf>,
        /// GPS noise standard deviation (m).
        #[arg(long)]
        sigma: Option<f64>,
        /// Transition scale (m).
        #[arg(long)]
        beta: Option<f64>,
        /// Candidate search radius (m).
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Penetration rate of matched probes against counter stations.
    Penetration {
        /// Matched-route CSV written by `match`.
        #[arg(long)]
        matched: Option<PathBuf>,
        #[arg(long)]
        atr: Option<PathBuf>,
        #[arg(long)]
        network: Option<PathBuf>,
        /// median or mean.
        #[arg(long)]
        aggregate: Option<String>,
    },
    /// Origin-destination matrix over a zone system.
    OdMatrix {
        #[command(flatten)]
        trips: TripArgs,
        #[arg(long)]
        zones: Option<PathBuf>,
        /// taz, zip, county or state.
        #[arg(long)]
        level: Option<String>,
        /// Expansion factor for the counts.
        #[arg(long)]
        expansion: Option<f64>,
        /// Penetration rate to derive the expansion factor from.
        #[arg(long)]
        pr: Option<f64>,
    },
    /// Corridor travel times by departure hour and route shares.
    Corridor {
        #[command(flatten)]
        trips: TripArgs,
        #[arg(long)]
        corridor: Option<PathBuf>,
        /// Local time offset from UTC, hours.
        #[arg(long, allow_hyphen_values = true)]
        tz_offset: Option<i32>,
    },
    /// Density-filtered isochrones around an origin area.
    Isochrone {
        #[command(flatten)]
        trips: TripArgs,
        /// GeoJSON with the origin polygon.
        #[arg(long)]
        origin: Option<PathBuf>,
    },
    /// Demand clusters scored against transit coverage.
    TransitCoverage {
        #[command(flatten)]
        trips: TripArgs,
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        transit: Option<PathBuf>,
        /// Walking buffer around transit lines (m).
        #[arg(long)]
        buffer: Option<f64>,
    },
    /// High-speed segment shares on a metric grid.
    SpeedGrid {
        #[command(flatten)]
        trips: TripArgs,
        /// Absolute high-speed threshold (m/s).
        #[arg(long)]
        threshold: Option<f64>,
        /// Compare each segment with its cell's mean speed.
        #[arg(long)]
        above_cell_mean: bool,
    },
    /// Weigh-in-motion circumvention rates.
    WimEvasion {
        #[command(flatten)]
        trips: TripArgs,
        #[arg(long)]
        wim_sites: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with its ground truth.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

impl Cli {
    /// Effective configuration: the file (if any) with flags applied on top.
    pub fn resolve(self) -> CliResult<(Subcommand, PipelineConfig)> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        set(&mut cfg.output.dir, self.out);
        set(&mut cfg.run.workers, self.workers);
        let trip_flags = |t: TripArgs, section: &mut Option<PathBuf>, fmt: &mut Option<String>| {
            set(section, t.trips);
            set(fmt, t.format);
        };
        let i = &mut cfg.inputs;
        let cmd = match self.command {
            Command::IngestStats { trips, vmax } => {
                trip_flags(trips, &mut cfg.ingest.trips, &mut i.trips_format);
                set(&mut cfg.ingest.vmax_mps, vmax);
                Subcommand::IngestStats
            }
            Command::Match { trips, network, sigma, beta, radius } => {
                trip_flags(trips, &mut cfg.mapmatch.trips, &mut i.trips_format);
                set(&mut i.network, network);
                set(&mut cfg.mapmatch.sigma_gps, sigma);
                set(&mut cfg.mapmatch.beta, beta);
                set(&mut cfg.mapmatch.candidate_radius, radius);
                Subcommand::Match
            }
            Command::Penetration { matched, atr, network, aggregate } => {
                set(&mut i.matched, matched);
                set(&mut i.atr, atr);
                set(&mut i.network, network);
                set(&mut cfg.penetration.aggregate, aggregate);
                Subcommand::Penetration
            }
            Command::OdMatrix { trips, zones, level, expansion, pr } => {
                trip_flags(trips, &mut cfg.od.trips, &mut i.trips_format);
                set(&mut i.zones, zones);
                set(&mut cfg.od.level, level);
                if expansion.is_some() || pr.is_some() {
                    cfg.od.expansion_factor = expansion;
                    cfg.od.penetration_rate = pr;
                }
                Subcommand::OdMatrix
            }
            Command::Corridor { trips, corridor, tz_offset } => {
                trip_flags(trips, &mut cfg.corridor.trips, &mut i.trips_format);
                set(&mut i.corridor, corridor);
                set(&mut cfg.corridor.tz_offset_hours, tz_offset);
                Subcommand::Corridor
            }
            Command::Isochrone { trips, origin } => {
                trip_flags(trips, &mut cfg.isochrone.trips, &mut i.trips_format);
                set(&mut i.origin, origin);
                Subcommand::Isochrone
            }
            Command::TransitCoverage { trips, network, transit, buffer } => {
                trip_flags(trips, &mut cfg.transit.trips, &mut i.trips_format);
                set(&mut i.network, network);
                set(&mut i.transit, transit);
                set(&mut cfg.transit.buffer_m, buffer);
                Subcommand::TransitCoverage
            }
            Command::SpeedGrid { trips, threshold, above_cell_mean } => {
                trip_flags(trips, &mut cfg.speed_grid.trips, &mut i.trips_format);
                if above_cell_mean {
                    cfg.speed_grid.above_cell_mean = Some(true);
                    cfg.speed_grid.threshold_mps = None;
                } else if threshold.is_some() {
                    cfg.speed_grid.threshold_mps = threshold;
                    cfg.speed_grid.above_cell_mean = None;
                }
                Subcommand::SpeedGrid
            }
            Command::WimEvasion { trips, wim_sites } => {
                trip_flags(trips, &mut cfg.wim.trips, &mut i.trips_format);
                set(&mut i.wim_sites, wim_sites);
                Subcommand::WimEvasion
            }
            Command::Synth { seed } => {
                set(&mut cfg.run.seed, seed);
                Subcommand::Synth
            }
        };
        Ok((cmd, cfg))
    }
}

/// What a successful run wrote.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub manifest: String,
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Runs one subcommand to completion. Nothing is written unless every
/// input loads and the computation succeeds.
pub fn run(cmd: Subcommand, cfg: &PipelineConfig) -> CliResult<RunSummary> {
    let started = Instant::now();
    let out_dir = cfg.out_dir()?.to_path_buf();
    let workers = cfg.workers()?;
    let mut ctx = Ctx {
        cfg,
        inputs: InputLog::default(),
        out: OutputSet::default(),
        workers,
    };
    execute(cmd, &mut ctx)?;
    let Ctx { inputs, out, .. } = ctx;
    let names: Vec<String> = out.names().into_iter().map(String::from).collect();
    for n in &names {
        if let Some(r) = inputs.records.iter().find(|r| same_file(&out_dir.join(n), &r.path)) {
            return Err(CliError::Config(format!(
                "output {n} would overwrite the {} input {}",
                r.role,
                r.path.display()
            )));
        }
    }
    let manifest = Manifest::new(cmd.name(), cfg, inputs.records, workers, started);
    out.commit(&out_dir, manifest)?;
    Ok(RunSummary {
        out_dir,
        outputs: names,
        manifest: manifest_name(cmd.name()),
    })
}

/// One logfmt line on stderr.
pub fn log_line(level: &str, fields: &[(&str, &str)]) {
    let mut line = format!(
        "ts={} level={level}",
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
    );
    for (k, v) in fields {
        if v.is_empty() || v.contains([' ', '"', '=']) {
            line.push_str(&format!(" {k}={v:?}"));
        } else {
            line.push_str(&format!(" {k}={v}"));
        }
    }
    eprintln!("{line}");
}

/// Parses `args`, runs, logs, and returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let resolved = cli.resolve();
    let (cmd, cfg) = match resolved {
        Ok(x) => x,
        Err(e) => {
            log_line("error", &[("kind", e.kind()), ("exit", &e.exit_code().to_string()), ("msg", e.message())]);
            return e.exit_code();
        }
    };
    log_line("info", &[("cmd", cmd.name()), ("event", "start")]);
    match run(cmd, &cfg) {
        Ok(s) => {
            log_line(
                "info",
                &[
                    ("cmd", cmd.name()),
                    ("event", "done"),
                    ("outputs", &s.outputs.len().to_string()),
                    ("dir", &s.out_dir.display().to_string()),
                ],
            );
            0
        }
        Err(e) => {
            log_line(
                "error",
                &[
                    ("cmd", cmd.name()),
                    ("kind", e.kind()),
                    ("exit", &e.exit_code().to_string()),
                    ("msg", e.message()),
                ],
            );
            e.exit_code()
        }
    }
}
