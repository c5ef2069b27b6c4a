use std::f64::consts::TAU;

use thiserror::Error;

use crate::earth::Epoch;
use crate::orbit::ElementSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkerError {
    #[error("{planes} planes do not divide {total} satellites")]
    Planes { total: usize, planes: usize },
    #[error("phasing {f} must lie in 0..{planes}")]
    Phasing { f: usize, planes: usize },
}

/// Walker-delta t/p/f pattern of circular orbits. Satellites are ordered
/// plane by plane; plane `p` sits at RAAN `p·360°/P` and its `s`-th
/// satellite at mean anomaly `s·360°/(N/P) + p·f·360°/N`.
pub fn walker_generate(
    total: usize,
    planes: usize,
    phasing: usize,
    inc: f64,
    altitude_km: f64,
    epoch: Epoch,
) -> Result<Vec<ElementSet>, WalkerError> {
    if planes == 0 || total % planes != 0 {
        return Err(WalkerError::Planes { total, planes });
    }
    if phasing >= planes {
        return Err(WalkerError::Phasing { f: phasing, planes });
    }
    let per_plane = total / planes;
    let mut out = Vec::with_capacity(total);
    for p in 0..planes {
        let raan = TAU * p as f64 / planes as f64;
        let offset = TAU * (p * phasing) as f64 / total as f64;
        for s in 0..per_plane {
            let ma = TAU * s as f64 / per_plane as f64 + offset;
            out.push(ElementSet::circular(altitude_km, inc, raan, ma, epoch));
        }
    }
    Ok(out)
}
