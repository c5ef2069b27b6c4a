//! Earth rotation, ground targets and elevation geometry on a spherical Earth.

use std::f64::consts::{PI, TAU};
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grad::{GradError, Real};

/// WGS-84 equatorial radius, km.
pub const EARTH_RADIUS_KM: f64 = 6378.137;
/// Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_855_3e-5;

pub type Epoch = DateTime<Utc>;

pub fn default_epoch() -> Epoch {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("target file contains no targets")]
    Empty,
    #[error("total target weight must be positive")]
    ZeroWeight,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("elevation: satellite coincides with target")]
    Coincident,
    #[error(transparent)]
    Grad(#[from] GradError),
}

pub fn julian_date(epoch: &Epoch) -> f64 {
    let secs = epoch.timestamp() as f64 + f64::from(epoch.timestamp_subsec_nanos()) * 1e-9;
    secs / 86_400.0 + 2_440_587.5
}

fn wrap_two_pi(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// GMST at the epoch itself (IAU-1982 polynomial, UT1 taken equal to UTC).
pub fn gmst_at_epoch(epoch: &Epoch) -> f64 {
    let t = (julian_date(epoch) - 2_451_545.0) / 36_525.0;
    let seconds =
        67_310.548_41 + (876_600.0 * 3600.0 + 8_640_184.812_866) * t + 0.093_104 * t * t - 6.2e-6 * t * t * t;
    wrap_two_pi(seconds.rem_euclid(86_400.0) / 240.0 * PI / 180.0)
}

/// Sidereal angle `dt` seconds after `epoch`, shifted by `offset`, in [0, 2π).
pub fn gmst(epoch: &Epoch, dt: f64, offset: f64) -> f64 {
    wrap_two_pi(gmst_at_epoch(epoch) + EARTH_ROTATION_RATE * dt + offset)
}

/// Rotates an inertial vector into the Earth-fixed frame for sidereal angle `theta`.
pub fn teme_to_ecef<S: Real>(r: &[S; 3], theta: f64) -> [S; 3] {
    let (s, c) = theta.sin_cos();
    [r[0] * c + r[1] * s, r[1] * c - r[0] * s, r[2]]
}

/// Transpose of [`teme_to_ecef`], used to pull gradients back to the inertial frame.
pub fn ecef_to_teme(r: &[f64; 3], theta: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    [r[0] * c - r[1] * s, r[0] * s + r[1] * c, r[2]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTarget {
    /// Geocentric latitude, rad.
    pub lat: f64,
    /// Longitude, rad.
    pub lon: f64,
    pub ecef: [f64; 3],
    pub up: [f64; 3],
    pub weight: f64,
}

impl GroundTarget {
    pub fn new(lat: f64, lon: f64, weight: f64) -> Self {
        let (sl, cl) = lat.sin_cos();
        let (so, co) = lon.sin_cos();
        let up = [cl * co, cl * so, sl];
        let ecef = [EARTH_RADIUS_KM * up[0], EARTH_RADIUS_KM * up[1], EARTH_RADIUS_KM * up[2]];
        Self { lat, lon, ecef, up, weight }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTargetSet {
    pub targets: Vec<GroundTarget>,
    pub total_weight: f64,
}

impl GroundTargetSet {
    pub fn new(targets: Vec<GroundTarget>) -> Result<Self, TargetError> {
        if targets.is_empty() {
            return Err(TargetError::Empty);
        }
        let total_weight: f64 = targets.iter().map(|t| t.weight).sum();
        if !(total_weight > 0.0) || targets.iter().any(|t| !(t.weight >= 0.0)) {
            return Err(TargetError::ZeroWeight);
        }
        Ok(Self { targets, total_weight })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Normalized weights w_j / Σw.
    pub fn normalized_weights(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.weight / self.total_weight).collect()
    }
}

/// Cell-centred latitude/longitude grid weighted by cos(latitude).
pub fn latlon_grid(n_lat: usize, n_lon: usize, lat_max_deg: f64) -> GroundTargetSet {
    assert!(n_lat >= 1 && n_lon >= 1, "grid needs at least one cell");
    let lat_max = lat_max_deg.to_radians();
    let band = 2.0 * lat_max / n_lat as f64;
    let lon_step = TAU / n_lon as f64;
    let mut targets = Vec::with_capacity(n_lat * n_lon);
    let south = |i: usize| -lat_max + band * (i as f64 + 0.5);
    for i in 0..n_lat {
        // northern bands mirror the southern ones so the grid is exactly symmetric
        let lat = if 2 * i + 1 > n_lat { -south(n_lat - 1 - i) } else { south(i) };
        for j in 0..n_lon {
            let lon = lon_step * (j as f64 + 0.5);
            targets.push(GroundTarget::new(lat, lon, lat.cos()));
        }
    }
    GroundTargetSet::new(targets).expect("grid weights are positive")
}

/// Reads targets from CSV with header `lat_deg,lon_deg[,weight]`.
pub fn parse_targets<R: Read>(reader: R) -> Result<GroundTargetSet, TargetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| TargetError::Malformed { line: 1, msg: e.to_string() })?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (lat_col, lon_col) = match (col("lat_deg"), col("lon_deg")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(TargetError::Malformed { line: 1, msg: "header must contain lat_deg and lon_deg".into() })
        }
    };
    let weight_col = col("weight");
    let mut targets = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| TargetError::Malformed { line, msg: e.to_string() })?;
        let field = |c: usize, name: &str| -> Result<f64, TargetError> {
            let raw = rec.get(c).ok_or_else(|| TargetError::Malformed { line, msg: format!("missing {name}") })?;
            let v: f64 = raw.parse().map_err(|_| TargetError::Malformed { line, msg: format!("bad {name} '{raw}'") })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(TargetError::Malformed { line, msg: format!("non-finite {name}") })
            }
        };
        let lat = field(lat_col, "lat_deg")?;
        let lon = field(lon_col, "lon_deg")?;
        if lat.abs() > 90.0 {
            return Err(TargetError::Malformed { line, msg: format!("latitude {lat} out of range") });
        }
        let lat = lat.to_radians();
        let weight = match weight_col {
            Some(c) => {
                let w = field(c, "weight")?;
                if w <= 0.0 {
                    return Err(TargetError::Malformed { line, msg: format!("weight {w} must be positive") });
                }
                w
            }
            None => lat.cos(),
        };
        targets.push(GroundTarget::new(lat, lon.to_radians(), weight));
    }
    GroundTargetSet::new(targets)
}

pub fn load_targets(path: &Path) -> Result<GroundTargetSet, TargetError> {
    parse_targets(std::fs::File::open(path)?)
}

/// Sine of the elevation angle of `sat` seen from `target`, on plain values.
#[inline]
pub fn sin_elevation(sat: &[f64; 3], target: &GroundTarget) -> f64 {
    let d = [sat[0] - target.ecef[0], sat[1] - target.ecef[1], sat[2] - target.ecef[2]];
    let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    (d[0] * target.up[0] + d[1] * target.up[1] + d[2] * target.up[2]) / dist
}

/// Hard visibility predicate shared by every hard-metric path.
#[inline]
pub fn is_visible(sat: &[f64; 3], target: &GroundTarget, sin_min_elevation: f64) -> bool {
    sin_elevation(sat, target) >= sin_min_elevation
}

/// Elevation angle (rad) of an Earth-fixed satellite position above the
/// target's local horizon.
pub fn elevation<S: Real>(sat: &[S; 3], target: &GroundTarget) -> Result<S, TargetError> {
    let d = [sat[0] - target.ecef[0], sat[1] - target.ecef[1], sat[2] - target.ecef[2]];
    let dist2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if dist2.value() <= 0.0 {
        return Err(TargetError::Coincident);
    }
    let along = d[0] * target.up[0] + d[1] * target.up[1] + d[2] * target.up[2];
    let s = along / dist2.sqrt();
    // rounding can push |s| a hair past 1 at exactly-overhead geometry
    let s = if s.value() > 1.0 {
        s - (s.value() - 1.0)
    } else if s.value() < -1.0 {
        s - (s.value() + 1.0)
    } else {
        s
    };
    Ok(s.checked_asin()?)
}

/// Discretized simulation horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimWindow {
    pub horizon_s: f64,
    pub steps: usize,
    pub epoch: Epoch,
    pub gmst_offset: f64,
}

impl SimWindow {
    pub fn new(horizon_s: f64, steps: usize, epoch: Epoch, gmst_offset: f64) -> Self {
        assert!(steps >= 2 && horizon_s > 0.0, "window needs K >= 2 and T > 0");
        Self { horizon_s, steps, epoch, gmst_offset }
    }

    pub fn day(steps: usize) -> Self {
        Self::new(86_400.0, steps, default_epoch(), 0.0)
    }

    pub fn dt_s(&self) -> f64 {
        self.horizon_s / (self.steps - 1) as f64
    }

    pub fn dt_min(&self) -> f64 {
        self.dt_s() / 60.0
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt_s();
        (0..self.steps).map(|k| k as f64 * dt).collect()
    }

    pub fn sidereal_angles(&self) -> Vec<f64> {
        self.times().iter().map(|&t| gmst(&self.epoch, t, self.gmst_offset)).collect()
    }
}
