//! Two-body propagation from classical elements to inertial positions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::earth::{Epoch, EARTH_RADIUS_KM};
use crate::grad::Real;

/// Earth gravitational parameter, km³/s².
pub const MU_EARTH: f64 = 398_600.4418;

const KEPLER_TOL: f64 = 1e-12;
const KEPLER_MAX_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("Kepler solve did not converge (M = {mean_anomaly}, e = {eccentricity})")]
    KeplerDivergence { mean_anomaly: f64, eccentricity: f64 },
    #[error("invalid elements: {0}")]
    InvalidElements(String),
    #[error("propagation failed for satellite {satellite} at step {step}: {source}")]
    Batch {
        satellite: usize,
        step: usize,
        #[source]
        source: Box<OrbitError>,
    },
    #[error("propagate_batch needs at least one satellite and one time")]
    EmptyBatch,
}

/// Osculating classical elements. Lengths in km, angles in radians.
/// Angles are not wrapped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementSet<S = f64> {
    pub a: S,
    pub e: S,
    pub inc: S,
    pub raan: S,
    pub argp: S,
    pub mean_anomaly: S,
    pub epoch: Epoch,
}

impl<S: Real> ElementSet<S> {
    pub fn values(&self) -> ElementSet<f64> {
        ElementSet {
            a: self.a.value(),
            e: self.e.value(),
            inc: self.inc.value(),
            raan: self.raan.value(),
            argp: self.argp.value(),
            mean_anomaly: self.mean_anomaly.value(),
            epoch: self.epoch,
        }
    }
}

impl ElementSet<f64> {
    pub fn circular(altitude_km: f64, inc: f64, raan: f64, mean_anomaly: f64, epoch: Epoch) -> Self {
        Self { a: EARTH_RADIUS_KM + altitude_km, e: 0.0, inc, raan, argp: 0.0, mean_anomaly, epoch }
    }

    pub fn perigee_radius(&self) -> f64 {
        self.a * (1.0 - self.e)
    }

    pub fn apogee_radius(&self) -> f64 {
        self.a * (1.0 + self.e)
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / mean_motion(self.a)
    }

    pub fn validate(&self) -> Result<(), OrbitError> {
        let bad = |m: String| Err(OrbitError::InvalidElements(m));
        let all = [self.a, self.e, self.inc, self.raan, self.argp, self.mean_anomaly];
        if all.iter().any(|v| !v.is_finite()) {
            return bad(format!("non-finite element in {self:?}"));
        }
        if self.a <= EARTH_RADIUS_KM {
            return bad(format!("a = {} km is inside the Earth", self.a));
        }
        if !(0.0..1.0).contains(&self.e) {
            return bad(format!("e = {} outside [0, 1)", self.e));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.inc) {
            return bad(format!("inclination {} rad outside [0, pi]", self.inc));
        }
        if self.perigee_radius() <= EARTH_RADIUS_KM {
            return bad(format!("perigee radius {} km below the surface", self.perigee_radius()));
        }
        Ok(())
    }
}

/// Inertial position at a time offset from the element epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector<S = f64> {
    pub position: [S; 3],
    pub dt: f64,
}

/// Mean motion in rad/s for semi-major axis `a` (km).
pub fn mean_motion<S: Real>(a: S) -> S {
    (S::constant(MU_EARTH) / (a * a * a)).sqrt()
}

fn solve_kepler_value(m: f64, e: f64) -> Result<f64, OrbitError> {
    let mut ecc = m + e * m.sin();
    for _ in 0..KEPLER_MAX_ITER {
        let (s, c) = ecc.sin_cos();
        let f = ecc - e * s - m;
        if f.abs() < KEPLER_TOL {
            return Ok(ecc);
        }
        ecc -= f / (1.0 - e * c);
    }
    let residual = ecc - e * ecc.sin() - m;
    if residual.abs() < KEPLER_TOL {
        Ok(ecc)
    } else {
        Err(OrbitError::KeplerDivergence { mean_anomaly: m, eccentricity: e })
    }
}

/// Eccentric anomaly from mean anomaly. The root is found on plain values
/// and the derivatives are attached through the implicit-function relation,
/// so they do not depend on the number of Newton iterations taken.
pub fn solve_kepler<S: Real>(m: S, e: S) -> Result<S, OrbitError> {
    let (mv, ev) = (m.value(), e.value());
    if !(0.0..1.0).contains(&ev) || !mv.is_finite() {
        return Err(OrbitError::KeplerDivergence { mean_anomaly: mv, eccentricity: ev });
    }
    let ecc = solve_kepler_value(mv, ev)?;
    let (s, c) = ecc.sin_cos();
    let denom = 1.0 - ev * c;
    // The two differences are exactly zero in value.
    Ok((m - mv) * (1.0 / denom) + (e - ev) * (s / denom) + ecc)
}

/// Perifocal-to-inertial rotation R_z(raan) R_x(inc) R_z(argp) applied to
/// the in-plane coordinates (x, y).
fn rotate_perifocal<S: Real>(el: &ElementSet<S>, x: S, y: S) -> [S; 3] {
    let (so, co) = el.raan.sin_cos();
    let (si, ci) = el.inc.sin_cos();
    let (sw, cw) = el.argp.sin_cos();
    // argument-of-perigee rotation within the plane
    let xw = x * cw - y * sw;
    let yw = x * sw + y * cw;
    // inclination about the node line
    let yi = yw * ci;
    let zi = yw * si;
    [xw * co - yi * so, xw * so + yi * co, zi]
}

/// Position `dt` seconds after the element epoch.
pub fn propagate<S: Real>(el: &ElementSet<S>, dt: f64) -> Result<StateVector<S>, OrbitError> {
    let n = mean_motion(el.a);
    let m = el.mean_anomaly + n * dt;
    let ecc = solve_kepler(m, el.e)?;
    let (s, c) = ecc.sin_cos();
    let b = (S::constant(1.0) - el.e * el.e).sqrt();
    let x = el.a * (c - el.e);
    let y = el.a * b * s;
    Ok(StateVector { position: rotate_perifocal(el, x, y), dt })
}

/// Position and velocity (km, km/s) on plain values.
pub fn propagate_with_velocity(el: &ElementSet<f64>, dt: f64) -> Result<([f64; 3], [f64; 3]), OrbitError> {
    let n = mean_motion(el.a);
    let ecc = solve_kepler(el.mean_anomaly + n * dt, el.e)?;
    let (s, c) = ecc.sin_cos();
    let b = (1.0 - el.e * el.e).sqrt();
    let pos = rotate_perifocal(el, el.a * (c - el.e), el.a * b * s);
    let edot = n / (1.0 - el.e * c);
    let vel = rotate_perifocal(el, -el.a * s * edot, el.a * b * c * edot);
    Ok((pos, vel))
}

/// Positions for every satellite at every time, satellite-major:
/// `out[i][k]` is satellite `i` at `times[k]`.
pub fn propagate_batch<S: Real>(elements: &[ElementSet<S>], times: &[f64]) -> Result<Vec<Vec<[S; 3]>>, OrbitError> {
    if elements.is_empty() || times.is_empty() {
        return Err(OrbitError::EmptyBatch);
    }
    elements
        .iter()
        .enumerate()
        .map(|(i, el)| {
            times
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    propagate(el, t).map(|s| s.position).map_err(|e| OrbitError::Batch {
                        satellite: i,
                        step: k,
                        source: Box::new(e),
                    })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth::default_epoch;
    use crate::grad::Dual;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn norm(v: &[f64; 3]) -> f64 {
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }

    fn random_elements(rng: &mut ChaCha8Rng) -> ElementSet {
        let e = rng.random_range(0.0..0.6);
        let rp = EARTH_RADIUS_KM + rng.random_range(300.0..3000.0);
        ElementSet {
            a: rp / (1.0 - e),
            e,
            inc: rng.random_range(0.0..PI),
            raan: rng.random_range(-7.0..7.0),
            argp: rng.random_range(-7.0..7.0),
            mean_anomaly: rng.random_range(-7.0..7.0),
            epoch: default_epoch(),
        }
    }

    #[test]
    fn periods() {
        let geo = 2.0 * PI / mean_motion(42164.17);
        assert!((geo - 86164.0).abs() < 1.0, "{geo}");
        let leo = 2.0 * PI / mean_motion(6928.137);
        assert!((leo - 5739.0).abs() < 1.0, "{leo}");
        let ratio = mean_motion(7000.0) / mean_motion(14000.0);
        assert!((ratio - 2f64.powf(1.5)).abs() < 1e-12);
    }

    fn bisect(m: f64, e: f64) -> f64 {
        let (mut lo, mut hi) = (m - 1.0, m + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - e * mid.sin() - m > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn kepler_examples() {
        for m in [-3.0, 0.2, 1.0, 5.5] {
            assert_eq!(solve_kepler(m, 0.0).unwrap(), m);
        }
        for e in [0.0, 0.3, 0.9] {
            assert!((solve_kepler(PI, e).unwrap() - PI).abs() < 1e-15);
        }
        let ecc = solve_kepler(1.0, 0.4).unwrap();
        assert!((ecc - bisect(1.0, 0.4)).abs() < 1e-12);
        assert!((ecc - 1.3938).abs() < 1e-4);
    }

    #[test]
    fn kepler_residual_and_implicit_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let m = rng.random_range(-10.0..10.0);
            let e = rng.random_range(0.0..0.95);
            let ecc = solve_kepler(m, e).unwrap();
            assert!((ecc - e * ecc.sin() - m).abs() < 1e-12);
            let p = crate::grad::seed_params::<2>(&[m, e]).unwrap();
            let d = solve_kepler(p[0], p[1]).unwrap();
            assert_eq!(d.v, ecc);
            let denom = 1.0 - e * ecc.cos();
            assert!((d.d[0] - 1.0 / denom).abs() < 1e-12);
            assert!((d.d[1] - ecc.sin() / denom).abs() < 1e-12);
        }
        assert!(solve_kepler(1.0, 1.0).is_err());
    }

    #[test]
    fn propagate_examples() {
        let a = 7000.0;
        let el = ElementSet { a, e: 0.0, inc: 0.0, raan: 0.0, argp: 0.0, mean_anomaly: 0.0, epoch: default_epoch() };
        let p = propagate(&el, 0.0).unwrap().position;
        assert_eq!(p, [a, 0.0, 0.0]);
        let quarter = 0.25 * TAU / mean_motion(a);
        let q = propagate(&el, quarter).unwrap().position;
        assert!(q[0].abs() < 1e-6 * a && (q[1] - a).abs() < 1e-6 * a && q[2].abs() < 1e-6 * a);
        let ecc = ElementSet { e: 0.4, ..el };
        let r = norm(&propagate(&ecc, 0.0).unwrap().position);
        assert!((r - a * 0.6).abs() < 1e-9);
    }

    #[test]
    fn radius_bounds_and_periodicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let els: Vec<_> = (0..20).map(|_| random_elements(&mut rng)).collect();
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 977.0).collect();
        let batch = propagate_batch(&els, &times).unwrap();
        assert_eq!(batch.len(), 20);
        for (el, row) in els.iter().zip(&batch) {
            assert_eq!(row.len(), times.len());
            for (k, p) in row.iter().enumerate() {
                let r = norm(p);
                assert!(r >= el.perigee_radius() - 1e-6 && r <= el.apogee_radius() + 1e-6);
                assert_eq!(*p, propagate(el, times[k]).unwrap().position);
            }
            let t = 1234.5;
            let p0 = propagate(el, t).unwrap().position;
            let p1 = propagate(el, t + el.period()).unwrap().position;
            let diff = [p0[0] - p1[0], p0[1] - p1[1], p0[2] - p1[2]];
            assert!(norm(&diff) < 1e-6, "{}", norm(&diff));
        }
        assert!(matches!(propagate_batch::<f64>(&[], &times), Err(OrbitError::EmptyBatch)));
    }

    #[test]
    fn energy_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let el = random_elements(&mut rng);
            let energy = |t: f64| {
                let (r, v) = propagate_with_velocity(&el, t).unwrap();
                0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - MU_EARTH / norm(&r)
            };
            let e0 = energy(0.0);
            assert!((e0 + MU_EARTH / (2.0 * el.a)).abs() < 1e-9 * e0.abs());
            for t in [100.0, 3000.0, 40000.0] {
                assert!((energy(t) - e0).abs() < 1e-9 * e0.abs());
            }
            // finite-differenced velocity agrees with the analytic one
            let (_, v) = propagate_with_velocity(&el, 500.0).unwrap();
            let p1 = propagate(&el, 499.5).unwrap().position;
            let p2 = propagate(&el, 500.5).unwrap().position;
            for c in 0..3 {
                assert!((p2[c] - p1[c] - v[c]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn position_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let el = random_elements(&mut rng);
            let dt = rng.random_range(0.0..20000.0);
            let x = [el.a, el.e, el.inc, el.raan, el.argp, el.mean_anomaly];
            let seeded = crate::grad::seed_params::<6>(&x).unwrap();
            let del = ElementSet {
                a: seeded[0],
                e: seeded[1],
                inc: seeded[2],
                raan: seeded[3],
                argp: seeded[4],
                mean_anomaly: seeded[5],
                epoch: el.epoch,
            };
            let pd: [Dual<6>; 3] = propagate(&del, dt).unwrap().position;
            let pos = |x: &[f64]| {
                let e = ElementSet { a: x[0], e: x[1], inc: x[2], raan: x[3], argp: x[4], mean_anomaly: x[5], epoch: el.epoch };
                propagate(&e, dt).unwrap().position
            };
            for c in 0..3 {
                assert_eq!(pd[c].v, pos(&x)[c]);
                for j in 0..6 {
                    let h = if j == 0 { 1e-3 } else { 1e-6 };
                    let mut xp = x;
                    let mut xm = x;
                    xp[j] += h;
                    xm[j] -= h;
                    let num = (pos(&xp)[c] - pos(&xm)[c]) / (2.0 * h);
                    let an = pd[c].d[j];
                    // position components reach ~1e4 km, so compare against that scale
                    let scale = an.abs().max(1.0);
                    assert!((an - num).abs() / scale < 1e-5, "comp {c} slot {j}: {an} vs {num}");
                }
            }
        }
    }

    #[test]
    fn validation() {
        let ok = ElementSet::circular(550.0, 1.0, 0.0, 0.0, default_epoch());
        assert!(ok.validate().is_ok());
        assert!(ElementSet { a: 6000.0, ..ok }.validate().is_err());
        assert!(ElementSet { e: 0.5, ..ok }.validate().is_err());
        assert!(ElementSet { inc: 4.0, ..ok }.validate().is_err());
    }
}
