//! Trip and waypoint records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geo::{haversine, LatLon};
use crate::{Error, Point, Result};

/// A single GPS fix. Time is UTC milliseconds since the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub lat: f64,
    pub lon: f64,
    pub t_ms: i64,
}

impl Waypoint {
    pub fn new(lat: f64, lon: f64, t_ms: i64) -> Result<Self> {
        LatLon::new(lat, lon)?;
        if t_ms <= 0 {
            return Err(Error::Domain(format!("timestamp must be positive, got {t_ms}")));
        }
        Ok(Waypoint { lat, lon, t_ms })
    }

    pub fn is_valid(&self) -> bool {
        self.pos().is_valid() && self.t_ms > 0
    }

    #[inline]
    pub fn pos(&self) -> Point {
        LatLon {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// Average speed in m/s over the segment `a -> b`.
pub fn segment_speed(a: &Waypoint, b: &Waypoint) -> Result<f64> {
    if b.t_ms <= a.t_ms {
        return Err(Error::ZeroDuration {
            from_ms: a.t_ms,
            to_ms: b.t_ms,
        });
    }
    Ok(haversine(a.pos(), b.pos()) / ((b.t_ms - a.t_ms) as f64 / 1000.0))
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $token)] $variant,)+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $token,)+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($token => Ok($name::$variant),)+
                    other => Err(Error::Parse(format!(
                        concat!("unknown ", stringify!($name), " '{}'"),
                        other
                    ))),
                }
            }
        }
    };
}

token_enum!(
    /// Travel mode reported by the data provider.
    Mode {
        Vehicle => "vehicle",
        Pedestrian => "pedestrian",
        Unknown => "unknown",
    }
);

token_enum!(
    /// Gross vehicle weight band, in thousands of pounds.
    WeightClass {
        W0_14 => "0-14",
        W14_26 => "14-26",
        W26Plus => "26+",
        Unknown => "unknown",
    }
);

token_enum!(
    Provider {
        Fleet => "fleet",
        Consumer => "consumer",
        Unknown => "unknown",
    }
);

/// One device's recorded journey.
///
/// Holds at least two valid waypoints with non-decreasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrip", into = "RawTrip")]
pub struct Trip {
    pub trip_id: String,
    pub device_id: String,
    pub mode: Mode,
    pub weight_class: WeightClass,
    pub provider: Provider,
    waypoints: Vec<Waypoint>,
}

impl Trip {
    pub fn new(
        trip_id: impl Into<String>,
        device_id: impl Into<String>,
        mode: Mode,
        weight_class: WeightClass,
        provider: Provider,
        waypoints: Vec<Waypoint>,
    ) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Domain(format!(
                "trip needs at least 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        if let Some(bad) = waypoints.iter().find(|w| !w.is_valid()) {
            if bad.t_ms <= 0 {
                return Err(Error::Domain(format!("timestamp must be positive, got {}", bad.t_ms)));
            }
            return Err(Error::InvalidCoordinate {
                lat: bad.lat,
                lon: bad.lon,
            });
        }
        if waypoints.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
            return Err(Error::Domain("waypoint timestamps decrease".into()));
        }
        Ok(Trip {
            trip_id: trip_id.into(),
            device_id: device_id.into(),
            mode,
            weight_class,
            provider,
            waypoints,
        })
    }

    /// Vehicle trip with unknown attributes; handy for synthetic data.
    pub fn vehicle(trip_id: impl Into<String>, waypoints: Vec<Waypoint>) -> Result<Self> {
        let id = trip_id.into();
        Trip::new(
            id.clone(),
            id,
            Mode::Vehicle,
            WeightClass::Unknown,
            Provider::Unknown,
            waypoints,
        )
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    /// Same attributes, different waypoints (validated).
    pub fn with_waypoints(&self, waypoints: Vec<Waypoint>) -> Result<Self> {
        Trip::new(
            self.trip_id.clone(),
            self.device_id.clone(),
            self.mode,
            self.weight_class,
            self.provider,
            waypoints,
        )
    }

    pub fn start_ms(&self) -> i64 {
        self.waypoints[0].t_ms
    }

    pub fn end_ms(&self) -> i64 {
        self.waypoints[self.waypoints.len() - 1].t_ms
    }

    pub fn duration_ms(&self) -> i64 {
        self.end_ms() - self.start_ms()
    }

    pub fn origin(&self) -> Point {
        self.waypoints[0].pos()
    }

    pub fn destination(&self) -> Point {
        self.waypoints[self.waypoints.len() - 1].pos()
    }
}

#[derive(Serialize, Deserialize)]
struct RawTrip {
    trip_id: String,
    device_id: String,
    mode: Mode,
    weight_class: WeightClass,
    provider: Provider,
    waypoints: Vec<(f64, f64, i64)>,
}

impl TryFrom<RawTrip> for Trip {
    type Error = Error;

    fn try_from(r: RawTrip) -> Result<Self> {
        let wps = r
            .waypoints
            .into_iter()
            .map(|(lat, lon, t_ms)| Waypoint { lat, lon, t_ms })
            .collect();
        Trip::new(r.trip_id, r.device_id, r.mode, r.weight_class, r.provider, wps)
    }
}

impl From<Trip> for RawTrip {
    fn from(t: Trip) -> Self {
        RawTrip {
            trip_id: t.trip_id,
            device_id: t.device_id,
            mode: t.mode,
            weight_class: t.weight_class,
            provider: t.provider,
            waypoints: t.waypoints.iter().map(|w| (w.lat, w.lon, w.t_ms)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::destination;

    const T0: i64 = 1_443_657_600_000;

    #[test]
    fn stationary_segment_has_zero_speed() {
        let a = Waypoint::new(38.9, -76.9, T0).unwrap();
        let b = Waypoint::new(38.9, -76.9, T0 + 10_000).unwrap();
        assert_eq!(segment_speed(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn median_spacing_and_lapse_give_28_mps() {
        let a = Waypoint::new(38.9, -76.9, T0).unwrap();
        let p = destination(a.pos(), 90.0, 28.0);
        let b = Waypoint::new(p.lat, p.lon, T0 + 1000).unwrap();
        assert!((segment_speed(&a, &b).unwrap() - 28.0).abs() < 1e-6);
    }

    #[test]
    fn hundred_meters_in_four_seconds() {
        let a = Waypoint::new(38.9, -76.9, T0).unwrap();
        let p = destination(a.pos(), 10.0, 100.0);
        let b = Waypoint::new(p.lat, p.lon, T0 + 4000).unwrap();
        assert!((segment_speed(&a, &b).unwrap() - 25.0).abs() < 1e-6);
    }

    #[test]
    fn zero_duration_is_an_error() {
        let a = Waypoint::new(38.9, -76.9, T0).unwrap();
        assert!(matches!(
            segment_speed(&a, &a),
            Err(Error::ZeroDuration { .. })
        ));
        let earlier = Waypoint { t_ms: T0 - 1, ..a };
        assert!(segment_speed(&a, &earlier).is_err());
    }

    #[test]
    fn doubling_lapse_halves_speed_exactly() {
        let a = Waypoint::new(39.0, -76.0, T0).unwrap();
        for (dist, dt) in [(37.3, 3_000), (1.0, 7), (512.25, 60_001)] {
            let p = destination(a.pos(), 45.0, dist);
            let b1 = Waypoint::new(p.lat, p.lon, T0 + dt).unwrap();
            let b2 = Waypoint::new(p.lat, p.lon, T0 + 2 * dt).unwrap();
            assert_eq!(
                segment_speed(&a, &b2).unwrap(),
                segment_speed(&a, &b1).unwrap() / 2.0
            );
        }
    }

    #[test]
    fn trip_invariants() {
        let w = |t| Waypoint { lat: 39.0, lon: -76.0, t_ms: t };
        assert!(Trip::vehicle("a", vec![w(T0)]).is_err());
        assert!(Trip::vehicle("a", vec![w(T0 + 5), w(T0)]).is_err());
        assert!(Trip::vehicle("a", vec![w(T0), w(T0)]).is_ok());
        let bad = Waypoint { lat: 91.0, lon: 0.0, t_ms: T0 };
        assert!(Trip::vehicle("a", vec![w(T0), bad]).is_err());
        let t = Trip::vehicle("a", vec![w(T0), w(T0 + 1000)]).unwrap();
        assert_eq!(t.duration_ms(), 1000);
    }

    #[test]
    fn tokens_round_trip() {
        for wc in WeightClass::ALL {
            assert_eq!(wc.as_str().parse::<WeightClass>().unwrap(), *wc);
        }
        assert!("heavy".parse::<Mode>().is_err());
    }
}
