//! Minimal GeoJSON reading and writing (RFC 7946 subset: Point,
//! LineString, Polygon). Coordinates are `[lon, lat]` on the wire.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, GeoPolygon, Point, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Geometry {
    Point { coordinates: [f64; 2] },
    LineString { coordinates: Vec<[f64; 2]> },
    Polygon { coordinates: Vec<Vec<[f64; 2]>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    #[serde(rename = "type")]
    pub kind: String,
    pub geometry: Geometry,
    #[serde(default)]
    pub properties: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCollection {
    #[serde(rename = "type")]
    pub kind: String,
    pub features: Vec<Feature>,
}

impl Default for FeatureCollection {
    fn default() -> Self {
        FeatureCollection {
            kind: "FeatureCollection".into(),
            features: Vec::new(),
        }
    }
}

impl FeatureCollection {
    pub fn from_str(s: &str) -> Result<Self> {
        let fc: FeatureCollection =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("GeoJSON: {e}")))?;
        if fc.kind != "FeatureCollection" {
            return Err(Error::Parse(format!("expected FeatureCollection, got {}", fc.kind)));
        }
        Ok(fc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn push(&mut self, geometry: Geometry, properties: Map<String, Value>) {
        self.features.push(Feature {
            kind: "Feature".into(),
            geometry,
            properties,
        });
    }

    pub fn to_string_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("GeoJSON serializes")
    }
}

pub fn to_position(p: Point) -> [f64; 2] {
    [p.lon, p.lat]
}

pub fn from_position(c: [f64; 2]) -> Point {
    Point { lat: c[1], lon: c[0] }
}

pub fn line_geometry(points: &[Point]) -> Geometry {
    Geometry::LineString {
        coordinates: points.iter().map(|p| to_position(*p)).collect(),
    }
}

pub fn polygon_geometry(poly: &GeoPolygon) -> Geometry {
    let ring = |r: &[Point]| r.iter().map(|p| to_position(*p)).collect::<Vec<_>>();
    let mut rings = vec![ring(poly.exterior())];
    rings.extend(poly.holes().iter().map(|h| ring(h)));
    Geometry::Polygon { coordinates: rings }
}

impl Feature {
    pub fn polygon(&self, index: usize) -> Result<GeoPolygon> {
        match &self.geometry {
            Geometry::Polygon { coordinates } if !coordinates.is_empty() => {
                let ring = |r: &Vec<[f64; 2]>| r.iter().map(|c| from_position(*c)).collect::<Vec<_>>();
                GeoPolygon::new(ring(&coordinates[0]), coordinates[1..].iter().map(ring).collect())
                    .map_err(|e| Error::Parse(format!("feature {index}: {e}")))
            }
            _ => Err(Error::Parse(format!("feature {index}: expected Polygon geometry"))),
        }
    }

    pub fn line(&self, index: usize) -> Result<Vec<Point>> {
        match &self.geometry {
            Geometry::LineString { coordinates } => {
                Ok(coordinates.iter().map(|c| from_position(*c)).collect())
            }
            _ => Err(Error::Parse(format!("feature {index}: expected LineString geometry"))),
        }
    }

    pub fn prop(&self, index: usize, key: &str) -> Result<&Value> {
        self.properties
            .get(key)
            .ok_or_else(|| Error::Parse(format!("feature {index}: missing property '{key}'")))
    }

    /// String property; numbers are accepted and rendered in decimal.
    pub fn prop_str(&self, index: usize, key: &str) -> Result<String> {
        match self.prop(index, key)? {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(Error::Parse(format!("feature {index}: property '{key}' must be a string"))),
        }
    }

    pub fn prop_u64(&self, index: usize, key: &str) -> Result<u64> {
        let v = self.prop(index, key)?;
        v.as_u64()
            .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
            .ok_or_else(|| {
                Error::Parse(format!("feature {index}: property '{key}' must be a non-negative integer"))
            })
    }

    pub fn prop_bool(&self, index: usize, key: &str) -> Result<bool> {
        self.prop(index, key)?
            .as_bool()
            .ok_or_else(|| Error::Parse(format!("feature {index}: property '{key}' must be a boolean")))
    }

    pub fn prop_f64_opt(&self, index: usize, key: &str) -> Result<Option<f64>> {
        match self.properties.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v.as_f64().map(Some).ok_or_else(|| {
                Error::Parse(format!("feature {index}: property '{key}' must be a number"))
            }),
        }
    }
}
