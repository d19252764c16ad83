//! Hexagonal micro-region tessellation.
//!
//! Cell identifiers follow the H3 convention (64-bit index, rendered as a
//! 15-character lowercase hex string) so that cell files written here can be
//! joined with data produced by any other H3 implementation.

use std::fmt;
use std::str::FromStr;

use h3o::{CellIndex, LatLng, Resolution};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Mean Earth radius used by H3 for its spherical computations, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_007.180_918_475;

/// Grid level used for urban micro-regions.
pub const DEFAULT_RESOLUTION: u8 = 9;

pub const MAX_RESOLUTION: u8 = 15;

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoPoint {
    lat: f64,
    lng: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lng: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::invalid(format!("latitude {lat} outside [-90, 90]")));
        }
        if !lng.is_finite() || !(-180.0..=180.0).contains(&lng) {
            return Err(Error::invalid(format!(
                "longitude {lng} outside [-180, 180]"
            )));
        }
        Ok(Self { lat, lng })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lng(&self) -> f64 {
        self.lng
    }

    /// Great-circle distance in meters on the H3 sphere.
    pub fn distance_m(&self, other: &GeoPoint) -> f64 {
        let (lat1, lat2) = (self.lat.to_radians(), other.lat.to_radians());
        let dlat = lat2 - lat1;
        let dlng = (other.lng - self.lng).to_radians();
        let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlng / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
    }

    /// Azimuthal equidistant projection of `self` onto the tangent plane at
    /// `origin`. Returns (east, north) in meters.
    pub fn project_from(&self, origin: &GeoPoint) -> (f64, f64) {
        let (lat0, lat) = (origin.lat.to_radians(), self.lat.to_radians());
        let dlng = (self.lng - origin.lng).to_radians();
        let cos_c = (lat0.sin() * lat.sin() + lat0.cos() * lat.cos() * dlng.cos()).clamp(-1.0, 1.0);
        let c = cos_c.acos();
        if c == 0.0 {
            return (0.0, 0.0);
        }
        let k = EARTH_RADIUS_M * c / c.sin();
        let east = k * lat.cos() * dlng.sin();
        let north = k * (lat0.cos() * lat.sin() - lat0.sin() * lat.cos() * dlng.cos());
        (east, north)
    }
}

impl<'de> Deserialize<'de> for GeoPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lat: f64,
            lng: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        GeoPoint::new(raw.lat, raw.lng).map_err(serde::de::Error::custom)
    }
}

impl From<LatLng> for GeoPoint {
    fn from(ll: LatLng) -> Self {
        Self {
            lat: ll.lat(),
            lng: ll.lng(),
        }
    }
}

/// Identifier of one hexagonal (or pentagonal) cell.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(CellIndex);

impl CellId {
    pub fn resolution(&self) -> u8 {
        u8::from(self.0.resolution())
    }

    pub fn as_u64(&self) -> u64 {
        u64::from(self.0)
    }

    pub fn is_pentagon(&self) -> bool {
        self.0.is_pentagon()
    }

    pub fn center(&self) -> GeoPoint {
        LatLng::from(self.0).into()
    }

    pub fn area_m2(&self) -> f64 {
        self.0.area_m2()
    }
}

impl TryFrom<u64> for CellId {
    type Error = Error;

    fn try_from(value: u64) -> Result<Self> {
        CellIndex::try_from(value)
            .map(CellId)
            .map_err(|e| Error::invalid(format!("malformed cell id {value:#x}: {e}")))
    }
}

impl FromStr for CellId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 15 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(Error::invalid(format!(
                "malformed cell id {s:?}: expected 15 lowercase hex digits"
            )));
        }
        let raw = u64::from_str_radix(s, 16).map_err(|e| Error::invalid(e.to_string()))?;
        CellId::try_from(raw)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:015x}", u64::from(self.0))
    }
}

impl fmt::Debug for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CellId({self})")
    }
}

impl Serialize for CellId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Cell outline, counter-clockwise, first vertex not repeated.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBoundary {
    pub vertices: Vec<GeoPoint>,
}

impl CellBoundary {
    /// Mean great-circle length of the ring's edges, in meters.
    pub fn mean_edge_length_m(&self) -> f64 {
        let n = self.vertices.len();
        let total: f64 = (0..n)
            .map(|i| self.vertices[i].distance_m(&self.vertices[(i + 1) % n]))
            .sum();
        total / n as f64
    }

    /// Arithmetic mean of the vertex coordinates.
    pub fn vertex_centroid(&self) -> GeoPoint {
        let n = self.vertices.len() as f64;
        let lat = self.vertices.iter().map(|v| v.lat).sum::<f64>() / n;
        let lng = self.vertices.iter().map(|v| v.lng).sum::<f64>() / n;
        GeoPoint { lat, lng }
    }

    /// Planar point-in-polygon test in a local azimuthal projection centred
    /// on `origin`.
    pub fn contains(&self, origin: &GeoPoint, p: &GeoPoint) -> bool {
        let ring: Vec<(f64, f64)> = self.vertices.iter().map(|v| v.project_from(origin)).collect();
        let (x, y) = p.project_from(origin);
        let mut inside = false;
        let mut j = ring.len() - 1;
        for i in 0..ring.len() {
            let (xi, yi) = ring[i];
            let (xj, yj) = ring[j];
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

fn resolution(res: u8) -> Result<Resolution> {
    Resolution::try_from(res)
        .map_err(|_| Error::invalid(format!("resolution {res} outside [0, {MAX_RESOLUTION}]")))
}

pub fn validate_resolution(res: u8) -> Result<()> {
    resolution(res).map(|_| ())
}

/// Cell containing `p` at the given grid level.
pub fn latlng_to_cell(p: &GeoPoint, res: u8) -> Result<CellId> {
    let res = resolution(res)?;
    let ll = LatLng::new(p.lat, p.lng).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(CellId(ll.to_cell(res)))
}

pub fn cell_boundary(cell: CellId) -> CellBoundary {
    CellBoundary {
        vertices: cell.0.boundary().iter().map(|&ll| GeoPoint::from(ll)).collect(),
    }
}

/// True when `p` falls inside the drawn outline of `cell`.
pub fn cell_contains(cell: CellId, p: &GeoPoint) -> bool {
    cell_boundary(cell).contains(&cell.center(), p)
}
