//! Positions, search regions and error metrics. Meters everywhere.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in a local east/north/up frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Distance in the horizontal (x, y) plane, ignoring altitude.
    pub fn horizontal_distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn with_z(self, z: f64) -> Self {
        Self { z, ..self }
    }

    /// Point a fraction `t` of the way from `self` to `other`.
    pub fn lerp(&self, other: &Position, t: f64) -> Position {
        Position::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
            self.z + t * (other.z - self.z),
        )
    }
}

impl From<[f64; 3]> for Position {
    fn from(a: [f64; 3]) -> Self {
        Position::new(a[0], a[1], a[2])
    }
}

/// Euclidean distance between two points.
pub fn distance(p: &Position, q: &Position) -> f64 {
    let (dx, dy, dz) = (p.x - q.x, p.y - q.y, p.z - q.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Root mean square of a list of errors.
pub fn rmse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::ContractViolation("rmse of an empty list".into()));
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(Error::ContractViolation(format!(
            "rmse entries must be finite and non-negative, got {bad}"
        )));
    }
    let sum_sq: f64 = errors.iter().map(|e| e * e).sum();
    Ok((sum_sq / errors.len() as f64).sqrt())
}

/// Axis-aligned search region for the source. `z_min == z_max` pins the
/// source altitude and removes that axis from the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roi {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for Roi {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 1250.0,
            y_min: 0.0,
            y_max: 1250.0,
            z_min: 0.0,
            z_max: 0.0,
        }
    }
}

impl Roi {
    pub fn validate(&self) -> Result<()> {
        let all = [self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("roi", "bounds must be finite"));
        }
        if self.x_min >= self.x_max {
            return Err(Error::invalid("roi.x_max", "x_min must be < x_max"));
        }
        if self.y_min >= self.y_max {
            return Err(Error::invalid("roi.y_max", "y_min must be < y_max"));
        }
        if self.z_min > self.z_max {
            return Err(Error::invalid("roi.z_max", "z_min must be <= z_max"));
        }
        Ok(())
    }

    pub fn lower(&self) -> [f64; 3] {
        [self.x_min, self.y_min, self.z_min]
    }

    pub fn upper(&self) -> [f64; 3] {
        [self.x_max, self.y_max, self.z_max]
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.x_max - self.x_min,
            self.y_max - self.y_min,
            self.z_max - self.z_min,
        ]
    }

    pub fn contains(&self, p: &Position) -> bool {
        (self.x_min..=self.x_max).contains(&p.x)
            && (self.y_min..=self.y_max).contains(&p.y)
            && (self.z_min..=self.z_max).contains(&p.z)
    }

    pub fn contains_footprint(&self, p: &Position) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    pub fn clamp(&self, p: &Position) -> Position {
        Position::new(
            p.x.clamp(self.x_min, self.x_max),
            p.y.clamp(self.y_min, self.y_max),
            p.z.clamp(self.z_min, self.z_max),
        )
    }

    /// Mirror a horizontal coordinate pair back into the footprint, keeping z.
    pub fn reflect_footprint(&self, p: &Position) -> Position {
        Position::new(
            reflect(p.x, self.x_min, self.x_max),
            reflect(p.y, self.y_min, self.y_max),
            p.z,
        )
    }

    /// Same region with the z range replaced.
    pub fn with_z_range(self, z_min: f64, z_max: f64) -> Self {
        Self { z_min, z_max, ..self }
    }
}

/// Fold `v` back into `[lo, hi]` by mirroring at the walls.
pub(crate) fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if width <= 0.0 {
        return lo;
    }
    let period = 2.0 * width;
    let mut t = (v - lo).rem_euclid(period);
    if t > width {
        t = period - t;
    }
    lo + t
}
