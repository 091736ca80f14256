//! Trajectory analytics over GPS probe data.
//!
//! The pipeline ingests raw trip traces, snaps them onto a road network with
//! an HMM map matcher, and derives planning products from the result: trip
//! statistics, penetration rates against fixed counters, O-D matrices,
//! corridor travel times, density-filtered isochrones, transit coverage,
//! speed heat grids and weigh-in-motion circumvention rates.
//!
//! Geometry and clustering are generic over the coordinate scalar; the
//! aliases below fix it to `f64`, which is what the trip pipelines use.

pub mod cluster;
pub mod demand;
pub mod enforcement;
mod error;
pub mod geo;
pub mod geojson;
pub mod ingest;
pub mod isochrone;
pub mod mapmatch;
pub mod model;
pub mod network;
pub mod synth;
pub mod transit;

pub use error::{Error, Result};
pub use model::{segment_speed, Mode, Provider, Trip, Waypoint, WeightClass};

/// Latitude/longitude pair in `f64` degrees.
pub type Point = geo::LatLon<f64>;
/// Single-precision coordinate pair, for memory-bound point clouds.
pub type Point32 = geo::LatLon<f32>;
/// Polygon in `f64` degrees.
pub type GeoPolygon = geo::Polygon<f64>;
/// Metric grid anchored in `f64` degrees.
pub type GridSpec = geo::Grid<f64>;
/// DBSCAN/OPTICS parameters in meters.
pub type ClusterParams = cluster::ClusterParams<f64>;
/// Reachability ordering over `f64` distances.
pub type ReachabilityOrdering = cluster::ReachabilityOrdering<f64>;
/// Origin/destination pair of a trip.
pub type OdPair = cluster::OdPair<f64>;

pub use geo::{haversine, point_in_polygon, EARTH_RADIUS_M};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
