//! Spherical geodesy and small-area planar helpers.
//!
//! Everything here is generic over the coordinate scalar (`f32` or `f64`);
//! the crate root re-exports `f64` aliases used by the trip pipelines.
//! Distances are great-circle distances on a sphere of radius
//! [`EARTH_RADIUS_M`]. Planar work (segment projection, grid binning, hull
//! construction) happens in a local equirectangular frame, which is accurate
//! to well under a meter over the few-kilometre windows it is used for.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Scalar usable for coordinates and distances.
pub trait GeoFloat:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
}

impl<T> GeoFloat for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
}

/// Converts an `f64` constant into the working scalar.
#[inline]
pub fn lit<T: GeoFloat>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

#[inline]
fn meters_per_degree<T: GeoFloat>() -> T {
    lit::<T>(EARTH_RADIUS_M) * T::PI() / lit(180.0)
}

/// A WGS84 latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatLon<T> {
    pub lat: T,
    pub lon: T,
}

impl<T: GeoFloat> LatLon<T> {
    /// Validated constructor; rejects out-of-range or non-finite coordinates.
    pub fn new(lat: T, lon: T) -> Result<Self> {
        let p = LatLon { lat, lon };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::InvalidCoordinate {
                lat: lat.to_f64().unwrap_or(f64::NAN),
                lon: lon.to_f64().unwrap_or(f64::NAN),
            })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && self.lat.abs() <= lit(90.0)
            && self.lon.abs() <= lit(180.0)
    }

    pub fn cast<U: GeoFloat>(self) -> LatLon<U> {
        LatLon {
            lat: U::from(self.lat).expect("finite coordinate"),
            lon: U::from(self.lon).expect("finite coordinate"),
        }
    }

    /// Arithmetic midpoint in degree space; fine for segments of a few hundred meters.
    pub fn midpoint(self, other: Self) -> Self {
        let two = lit::<T>(2.0);
        LatLon {
            lat: (self.lat + other.lat) / two,
            lon: (self.lon + other.lon) / two,
        }
    }
}

/// Great-circle distance in meters (haversine formula).
///
/// Callers must pass valid coordinates; see [`try_haversine`] for the checked form.
pub fn haversine<T: GeoFloat>(a: LatLon<T>, b: LatLon<T>) -> T {
    let two = lit::<T>(2.0);
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let s1 = (dphi / two).sin();
    let s2 = (dlambda / two).sin();
    let h = s1 * s1 + phi1.cos() * phi2.cos() * s2 * s2;
    two * lit::<T>(EARTH_RADIUS_M) * h.min(T::one()).sqrt().asin()
}

pub fn try_haversine<T: GeoFloat>(a: LatLon<T>, b: LatLon<T>) -> Result<T> {
    for p in [a, b] {
        LatLon::new(p.lat, p.lon)?;
    }
    Ok(haversine(a, b))
}

/// Initial bearing from `a` to `b`, degrees clockwise from north in `[0, 360)`.
pub fn initial_bearing<T: GeoFloat>(a: LatLon<T>, b: LatLon<T>) -> T {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dl = (b.lon - a.lon).to_radians();
    let y = dl.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dl.cos();
    let deg = y.atan2(x).to_degrees();
    let full = lit::<T>(360.0);
    let b = (deg + full) % full;
    if b >= full {
        T::zero()
    } else {
        b
    }
}

/// Compass octant (0 = N, 1 = NE, ... 7 = NW) of a bearing in degrees.
pub fn octant<T: GeoFloat>(bearing_deg: T) -> usize {
    let shifted = (bearing_deg + lit(22.5)) / lit(45.0);
    (shifted.floor().to_i64().unwrap_or(0).rem_euclid(8)) as usize
}

/// Point reached by travelling `distance_m` from `start` along `bearing_deg`.
pub fn destination<T: GeoFloat>(start: LatLon<T>, bearing_deg: T, distance_m: T) -> LatLon<T> {
    let delta = distance_m / lit(EARTH_RADIUS_M);
    let theta = bearing_deg.to_radians();
    let phi1 = start.lat.to_radians();
    let lambda1 = start.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    let mut lon = lambda2.to_degrees();
    let full = lit::<T>(360.0);
    let half = lit::<T>(180.0);
    lon = ((lon + half) % full + full) % full - half;
    LatLon {
        lat: phi2.to_degrees(),
        lon,
    }
}

/// Local equirectangular frame: x east, y north, meters from `origin`.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame<T> {
    origin: LatLon<T>,
    m_per_deg_lat: T,
    m_per_deg_lon: T,
}

impl<T: GeoFloat> LocalFrame<T> {
    pub fn new(origin: LatLon<T>) -> Self {
        let m = meters_per_degree::<T>();
        LocalFrame {
            origin,
            m_per_deg_lat: m,
            m_per_deg_lon: m * origin.lat.to_radians().cos(),
        }
    }

    pub fn origin(&self) -> LatLon<T> {
        self.origin
    }

    pub fn to_xy(&self, p: LatLon<T>) -> (T, T) {
        (
            (p.lon - self.origin.lon) * self.m_per_deg_lon,
            (p.lat - self.origin.lat) * self.m_per_deg_lat,
        )
    }

    pub fn to_latlon(&self, x: T, y: T) -> LatLon<T> {
        LatLon {
            lat: self.origin.lat + y / self.m_per_deg_lat,
            lon: self.origin.lon + x / self.m_per_deg_lon,
        }
    }
}

/// Foot of the perpendicular from a point onto a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProjection<T> {
    pub point: LatLon<T>,
    /// Position along the segment in `[0, 1]`.
    pub fraction: T,
    /// Planar distance from the query point, meters.
    pub distance: T,
}

/// Projects `p` onto segment `a`-`b` in a local frame centred on `p`.
pub fn project_onto_segment<T: GeoFloat>(
    p: LatLon<T>,
    a: LatLon<T>,
    b: LatLon<T>,
) -> SegmentProjection<T> {
    let frame = LocalFrame::new(p);
    let (ax, ay) = frame.to_xy(a);
    let (bx, by) = frame.to_xy(b);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > T::zero() {
        ((-ax * dx - ay * dy) / len2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let fx = ax + t * dx;
    let fy = ay + t * dy;
    SegmentProjection {
        point: frame.to_latlon(fx, fy),
        fraction: t,
        distance: (fx * fx + fy * fy).sqrt(),
    }
}

/// Great-circle length of a polyline.
pub fn polyline_length<T: GeoFloat>(line: &[LatLon<T>]) -> T {
    line.windows(2)
        .fold(T::zero(), |acc, w| acc + haversine(w[0], w[1]))
}

/// Axis-aligned bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<T> {
    pub min_lat: T,
    pub min_lon: T,
    pub max_lat: T,
    pub max_lon: T,
}

impl<T: GeoFloat> BBox<T> {
    pub fn of(points: &[LatLon<T>]) -> Option<Self> {
        let first = points.first()?;
        let mut bb = BBox {
            min_lat: first.lat,
            min_lon: first.lon,
            max_lat: first.lat,
            max_lon: first.lon,
        };
        for p in &points[1..] {
            bb.min_lat = bb.min_lat.min(p.lat);
            bb.max_lat = bb.max_lat.max(p.lat);
            bb.min_lon = bb.min_lon.min(p.lon);
            bb.max_lon = bb.max_lon.max(p.lon);
        }
        Some(bb)
    }

    pub fn contains(&self, p: LatLon<T>) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }
}

/// Closed polygon with optional holes, vertices in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolygon<T>", into = "RawPolygon<T>", bound = "T: GeoFloat + Serialize + for<'a> Deserialize<'a>")]
pub struct Polygon<T> {
    exterior: Vec<LatLon<T>>,
    holes: Vec<Vec<LatLon<T>>>,
    bbox: BBox<T>,
}

#[derive(Serialize, Deserialize)]
struct RawPolygon<T> {
    exterior: Vec<LatLon<T>>,
    #[serde(default)]
    holes: Vec<Vec<LatLon<T>>>,
}

impl<T: GeoFloat> TryFrom<RawPolygon<T>> for Polygon<T> {
    type Error = Error;
    fn try_from(r: RawPolygon<T>) -> Result<Self> {
        Polygon::new(r.exterior, r.holes)
    }
}

impl<T> From<Polygon<T>> for RawPolygon<T> {
    fn from(p: Polygon<T>) -> Self {
        RawPolygon {
            exterior: p.exterior,
            holes: p.holes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RingPosition {
    Inside,
    Boundary,
    Outside,
}

impl<T: GeoFloat> Polygon<T> {
    /// Builds a polygon; every ring must be closed with at least 4 vertices.
    pub fn new(exterior: Vec<LatLon<T>>, holes: Vec<Vec<LatLon<T>>>) -> Result<Self> {
        validate_ring(&exterior)?;
        for h in &holes {
            validate_ring(h)?;
        }
        let bbox = BBox::of(&exterior).expect("ring is non-empty");
        Ok(Polygon {
            exterior,
            holes,
            bbox,
        })
    }

    /// Axis-aligned rectangle from its south-west and north-east corners.
    pub fn rect(min_lat: T, min_lon: T, max_lat: T, max_lon: T) -> Result<Self> {
        let ring = vec![
            LatLon { lat: min_lat, lon: min_lon },
            LatLon { lat: min_lat, lon: max_lon },
            LatLon { lat: max_lat, lon: max_lon },
            LatLon { lat: max_lat, lon: min_lon },
            LatLon { lat: min_lat, lon: min_lon },
        ];
        Polygon::new(ring, Vec::new())
    }

    pub fn exterior(&self) -> &[LatLon<T>] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<LatLon<T>>] {
        &self.holes
    }

    pub fn bbox(&self) -> BBox<T> {
        self.bbox
    }

    /// Edge-inclusive even-odd containment.
    pub fn contains(&self, p: LatLon<T>) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        match ring_position(&self.exterior, p) {
            RingPosition::Outside => false,
            RingPosition::Boundary => true,
            RingPosition::Inside => !self
                .holes
                .iter()
                .any(|h| ring_position(h, p) == RingPosition::Inside),
        }
    }

    /// Vertex average of the exterior ring (closing vertex excluded).
    pub fn vertex_centroid(&self) -> LatLon<T> {
        let n = self.exterior.len() - 1;
        let (slat, slon) = self.exterior[..n]
            .iter()
            .fold((T::zero(), T::zero()), |(a, b), p| (a + p.lat, b + p.lon));
        let n = lit::<T>(n as f64);
        LatLon {
            lat: slat / n,
            lon: slon / n,
        }
    }

    /// Area in square meters (exterior minus holes), local planar approximation.
    pub fn area_m2(&self) -> T {
        let frame = LocalFrame::new(self.vertex_centroid());
        let ring_area = |ring: &[LatLon<T>]| -> T {
            let pts: Vec<(T, T)> = ring.iter().map(|p| frame.to_xy(*p)).collect();
            let twice = pts
                .windows(2)
                .fold(T::zero(), |acc, w| acc + (w[0].0 * w[1].1 - w[1].0 * w[0].1));
            (twice / lit(2.0)).abs()
        };
        let holes = self.holes.iter().fold(T::zero(), |acc, h| acc + ring_area(h));
        ring_area(&self.exterior) - holes
    }
}

fn validate_ring<T: GeoFloat>(ring: &[LatLon<T>]) -> Result<()> {
    if ring.len() < 4 {
        return Err(Error::Domain(format!(
            "polygon ring needs at least 4 vertices including closure, got {}",
            ring.len()
        )));
    }
    if ring.first() != ring.last() {
        return Err(Error::Domain("polygon ring is not closed".into()));
    }
    if let Some(bad) = ring.iter().find(|p| !p.is_valid()) {
        return Err(Error::InvalidCoordinate {
            lat: bad.lat.to_f64().unwrap_or(f64::NAN),
            lon: bad.lon.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Edge-inclusive even-odd ray cast against a single closed ring.
///
/// Returns `Err` for rings with fewer than 4 vertices or without closure.
pub fn point_in_ring<T: GeoFloat>(p: LatLon<T>, ring: &[LatLon<T>]) -> Result<bool> {
    validate_ring(ring)?;
    Ok(ring_position(ring, p) != RingPosition::Outside)
}

/// Edge-inclusive containment test; points on any edge or vertex are inside.
pub fn point_in_polygon<T: GeoFloat>(p: LatLon<T>, poly: &Polygon<T>) -> bool {
    poly.contains(p)
}

fn on_segment<T: GeoFloat>(p: LatLon<T>, a: LatLon<T>, b: LatLon<T>) -> bool {
    let dx = b.lon - a.lon;
    let dy = b.lat - a.lat;
    let len = (dx * dx + dy * dy).sqrt();
    let tol = len * T::epsilon().sqrt() * lit(0.1) + T::epsilon();
    let cross = dx * (p.lat - a.lat) - dy * (p.lon - a.lon);
    if cross.abs() > tol {
        return false;
    }
    p.lon >= a.lon.min(b.lon) - tol
        && p.lon <= a.lon.max(b.lon) + tol
        && p.lat >= a.lat.min(b.lat) - tol
        && p.lat <= a.lat.max(b.lat) + tol
}

fn ring_position<T: GeoFloat>(ring: &[LatLon<T>], p: LatLon<T>) -> RingPosition {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if on_segment(p, a, b) {
            return RingPosition::Boundary;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    if inside {
        RingPosition::Inside
    } else {
        RingPosition::Outside
    }
}

/// Regular metric grid anchored at its south-west corner.
///
/// Rows grow northwards and columns eastwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub origin: LatLon<T>,
    pub cell_m: T,
    pub rows: usize,
    pub cols: usize,
}

impl<T: GeoFloat> Grid<T> {
    pub fn new(origin: LatLon<T>, cell_m: T, rows: usize, cols: usize) -> Result<Self> {
        let g = Grid {
            origin,
            cell_m,
            rows,
            cols,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.origin.is_valid() {
            return Err(Error::InvalidCoordinate {
                lat: self.origin.lat.to_f64().unwrap_or(f64::NAN),
                lon: self.origin.lon.to_f64().unwrap_or(f64::NAN),
            });
        }
        if !(self.cell_m > T::zero()) || !self.cell_m.is_finite() {
            return Err(Error::Domain("grid cell size must be positive".into()));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Domain("grid needs at least one row and column".into()));
        }
        Ok(())
    }

    fn frame(&self) -> LocalFrame<T> {
        LocalFrame::new(self.origin)
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Cell `(row, col)` containing `p`, or `None` outside the grid.
    ///
    /// Points on a cell boundary belong to the higher-index cell.
    pub fn index(&self, p: LatLon<T>) -> Option<(usize, usize)> {
        let (x, y) = self.frame().to_xy(p);
        let row = self.bin(y)?;
        let col = self.bin(x)?;
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            return None;
        }
        Some((row as usize, col as usize))
    }

    fn bin(&self, v: T) -> Option<i64> {
        let c = v / self.cell_m;
        if !c.is_finite() {
            return None;
        }
        let r = c.round();
        let snap = lit::<T>(1e-9).max(T::epsilon() * lit(64.0));
        let c = if (c - r).abs() <= snap { r } else { c.floor() };
        c.to_i64()
    }

    pub fn flat_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn cell_corner(&self, row: usize, col: usize) -> LatLon<T> {
        let x = lit::<T>(col as f64) * self.cell_m;
        let y = lit::<T>(row as f64) * self.cell_m;
        self.frame().to_latlon(x, y)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> LatLon<T> {
        let half = lit::<T>(0.5);
        let x = (lit::<T>(col as f64) + half) * self.cell_m;
        let y = (lit::<T>(row as f64) + half) * self.cell_m;
        self.frame().to_latlon(x, y)
    }

    /// Closed ring outlining a cell.
    pub fn cell_ring(&self, row: usize, col: usize) -> Vec<LatLon<T>> {
        let sw = self.cell_corner(row, col);
        let ne = self.cell_corner(row + 1, col + 1);
        vec![
            sw,
            LatLon { lat: sw.lat, lon: ne.lon },
            ne,
            LatLon { lat: ne.lat, lon: sw.lon },
            sw,
        ]
    }
}
