//! Hexagonal tokenization of geographic coordinates.
//!
//! A planar pointy-top axial grid over an equirectangular projection stands in
//! for a geodesic hex index: cheap, closed-form, and invertible. Cell ids are
//! 64-bit packed (resolution, q, r) values, but any externally assigned 64-bit
//! id can also ride through the rest of the pipeline untouched — only the
//! operations in this module interpret the bits.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Axial coordinate bounds: q and r are stored as 30-bit two's-complement.
pub const AXIAL_MIN: i64 = -(1 << 29);
pub const AXIAL_MAX: i64 = (1 << 29) - 1;

/// Geographic coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoord {
    pub lat: f64,
    pub lon: f64,
}

impl GeoCoord {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let c = GeoCoord { lat, lon };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::Range(format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if !self.lon.is_finite() || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Range(format!("longitude {} outside [-180, 180]", self.lon)));
        }
        Ok(())
    }
}

/// Packed hexagonal cell address: 4 bits resolution, 30 bits q, 30 bits r
/// (two's-complement), most significant first.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub u64);

impl CellId {
    pub fn from_axial(resolution: u8, q: i64, r: i64) -> Result<Self> {
        if resolution > 15 {
            return Err(Error::Range(format!("resolution {resolution} exceeds 4-bit field")));
        }
        for (name, v) in [("q", q), ("r", r)] {
            if !(AXIAL_MIN..=AXIAL_MAX).contains(&v) {
                return Err(Error::Range(format!("axial {name}={v} outside 30-bit range")));
            }
        }
        let packed = ((resolution as u64) << 60)
            | (((q as u64) & 0x3FFF_FFFF) << 30)
            | ((r as u64) & 0x3FFF_FFFF);
        Ok(CellId(packed))
    }

    pub fn resolution(&self) -> u8 {
        (self.0 >> 60) as u8
    }

    /// Decode the axial pair, sign-extending the 30-bit fields.
    pub fn axial(&self) -> (i64, i64) {
        let sext = |bits: u64| -> i64 {
            if bits & (1 << 29) != 0 {
                (bits | !0x3FFF_FFFF) as i64
            } else {
                bits as i64
            }
        };
        (sext((self.0 >> 30) & 0x3FFF_FFFF), sext(self.0 & 0x3FFF_FFFF))
    }
}

impl fmt::Debug for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (q, r) = self.axial();
        write!(f, "CellId(res={}, q={}, r={})", self.resolution(), q, r)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Grid geometry: edge length halves at each resolution step.
///
/// The default calibrates resolution 6 to a hexagon area of 36.13 km².
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: u8,
    /// Hexagon edge length in meters at resolution 0.
    pub edge0_m: f64,
    pub origin: GeoCoord,
    /// Reference latitude of the equirectangular projection, degrees.
    pub ref_lat: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            resolution: 6,
            edge0_m: 238_664.0,
            origin: GeoCoord { lat: 0.0, lon: 0.0 },
            ref_lat: 0.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution > 15 {
            return Err(Error::Config(format!(
                "resolution {} exceeds the 4-bit cell id field",
                self.resolution
            )));
        }
        if !(self.edge0_m.is_finite() && self.edge0_m > 0.0) {
            return Err(Error::Config(format!("edge0_m must be positive, got {}", self.edge0_m)));
        }
        self.origin.validate()?;
        if !self.ref_lat.is_finite() || !(-90.0..=90.0).contains(&self.ref_lat) {
            return Err(Error::Config(format!("ref_lat {} outside [-90, 90]", self.ref_lat)));
        }
        Ok(())
    }

    /// Edge length in meters at the configured resolution.
    pub fn edge_m(&self) -> f64 {
        self.edge0_m / (1u64 << self.resolution) as f64
    }

    /// Hexagon area in m² at the configured resolution.
    pub fn hex_area_m2(&self) -> f64 {
        let a = self.edge_m();
        1.5 * SQRT3 * a * a
    }

    /// Project to meters east/north of the origin.
    pub fn project(&self, coord: GeoCoord) -> Result<(f64, f64)> {
        coord.validate()?;
        let x = (coord.lon - self.origin.lon).to_radians()
            * EARTH_RADIUS_M
            * self.ref_lat.to_radians().cos();
        let y = (coord.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M;
        Ok((x, y))
    }

    /// Inverse of [`GridConfig::project`].
    pub fn unproject(&self, x: f64, y: f64) -> GeoCoord {
        GeoCoord {
            lat: self.origin.lat + (y / EARTH_RADIUS_M).to_degrees(),
            lon: self.origin.lon
                + (x / (EARTH_RADIUS_M * self.ref_lat.to_radians().cos())).to_degrees(),
        }
    }
}

/// Tokenize a coordinate into the cell containing it.
///
/// Boundary points resolve by cube rounding: round each cube coordinate and
/// repair the one with the largest rounding error.
pub fn cell_of(coord: GeoCoord, cfg: &GridConfig) -> Result<CellId> {
    cfg.validate()?;
    let (x, y) = cfg.project(coord)?;
    let a = cfg.edge_m();
    // Pointy-top axial with r increasing southwards.
    let rf = -(2.0 / 3.0) * y / a;
    let qf = (SQRT3 / 3.0) * x / a - rf / 2.0;
    let (q, r) = axial_round(qf, rf);
    CellId::from_axial(cfg.resolution, q, r)
}

/// Projected center of a cell, in meters east/north of the origin.
pub fn cell_center_m(cell: CellId, cfg: &GridConfig) -> (f64, f64) {
    let (q, r) = cell.axial();
    let a = cfg.edge_m();
    let x = SQRT3 * a * (q as f64 + r as f64 / 2.0);
    let y = -1.5 * a * r as f64;
    (x, y)
}

/// Inverse-projected hexagon center.
pub fn centroid_of(cell: CellId, cfg: &GridConfig) -> Result<GeoCoord> {
    cfg.validate()?;
    if cell.resolution() != cfg.resolution {
        return Err(Error::Config(format!(
            "cell resolution {} does not match grid resolution {}",
            cell.resolution(),
            cfg.resolution
        )));
    }
    let (x, y) = cell_center_m(cell, cfg);
    Ok(cfg.unproject(x, y))
}

/// Axial offsets of the six neighbors in canonical order E, NE, NW, W, SW, SE.
pub const NEIGHBOR_OFFSETS: [(i64, i64); 6] =
    [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

/// The six axial neighbors in canonical order.
pub fn neighbors(cell: CellId) -> Result<[CellId; 6]> {
    let (q, r) = cell.axial();
    let res = cell.resolution();
    let mut out = [cell; 6];
    for (slot, (dq, dr)) in out.iter_mut().zip(NEIGHBOR_OFFSETS) {
        *slot = CellId::from_axial(res, q + dq, r + dr)?;
    }
    Ok(out)
}

fn axial_round(qf: f64, rf: f64) -> (i64, i64) {
    // Cube coordinates (x, y, z) = (q, -q-r, r).
    let (xf, zf) = (qf, rf);
    let yf = -xf - zf;
    let mut x = xf.round();
    let mut y = yf.round();
    let mut z = zf.round();
    let (dx, dy, dz) = ((x - xf).abs(), (y - yf).abs(), (z - zf).abs());
    if dx > dy && dx > dz {
        x = -y - z;
    } else if dy > dz {
        y = -x - z;
    } else {
        z = -x - y;
    }
    let _ = y;
    (x as i64, z as i64)
}
