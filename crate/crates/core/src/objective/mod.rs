//! Parameter packing, constraint reparameterizations and the relaxed loss.
//!
//! The optimizer works on an unconstrained vector θ. A [`ParamSpec`] says
//! how every orbital element of every satellite is produced from θ: fixed,
//! identity (periodic angles), sigmoid-bounded, or through the coupled
//! perigee/excess-altitude map. Satellites that reference the same slot
//! share that element exactly.

mod engine;
mod problem;

pub use engine::{LossEval, RelaxedEval};
pub use problem::{Problem, ProblemError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::earth::{Epoch, EARTH_RADIUS_KM};
use crate::grad::{GradientVector, Real};
use crate::orbit::ElementSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("slot {slot} is never referenced")]
    UnusedSlot { slot: usize },
    #[error("slot {slot} out of range ({n} slots)")]
    SlotRange { slot: usize, n: usize },
    #[error("slot {slot} used with inconsistent mappings")]
    Inconsistent { slot: usize },
    #[error("slot {slot} referenced twice by satellite {satellite}")]
    Duplicate { slot: usize, satellite: usize },
    #[error("bad bounds [{lower}, {upper}]")]
    Bounds { lower: f64, upper: f64 },
    #[error("expected {expected} parameters, got {got}")]
    Length { expected: usize, got: usize },
    #[error("value {value} not strictly inside ({lower}, {upper}) for slot {slot}")]
    Encode { slot: usize, value: f64, lower: f64, upper: f64 },
    #[error("{0} satellites given, spec has {1}")]
    SatelliteCount(usize, usize),
}

/// How one element is produced from θ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ElementMap {
    Fixed { value: f64 },
    /// x = θ; angles are never wrapped inside the loss.
    Periodic { slot: usize },
    /// x = lower + (upper − lower) σ(θ).
    Interval { slot: usize, lower: f64, upper: f64 },
}

impl ElementMap {
    fn slot(&self) -> Option<usize> {
        match *self {
            ElementMap::Fixed { .. } => None,
            ElementMap::Periodic { slot } | ElementMap::Interval { slot, .. } => Some(slot),
        }
    }

    fn apply<S: Real>(&self, theta: S) -> S {
        match *self {
            ElementMap::Fixed { value } => S::constant(value),
            ElementMap::Periodic { .. } => theta,
            ElementMap::Interval { lower, upper, .. } => apply_interval(theta, lower, upper),
        }
    }

    fn encode(&self, x: f64) -> Result<f64, SpecError> {
        match *self {
            ElementMap::Fixed { .. } => Ok(0.0),
            ElementMap::Periodic { .. } => Ok(x),
            ElementMap::Interval { slot, lower, upper } => {
                if x > lower && x < upper {
                    Ok(logit((x - lower) / (upper - lower)))
                } else {
                    Err(SpecError::Encode { slot, value: x, lower, upper })
                }
            }
        }
    }
}

/// Semi-major axis and eccentricity, either directly or through the
/// perigee/excess-altitude map (altitudes above the reference sphere, km).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeMap {
    Direct { a: ElementMap, e: ElementMap },
    PerigeeExcess { rp_slot: usize, dr_slot: usize, bounds: PerigeeBounds },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerigeeBounds {
    pub rp_min_km: f64,
    pub rp_max_km: f64,
    pub dr_max_km: f64,
}

/// Mapping for one satellite. `plane` is a reporting label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatelliteMap {
    pub plane: usize,
    pub shape: ShapeMap,
    pub inc: ElementMap,
    pub raan: ElementMap,
    pub argp: ElementMap,
    pub mean_anomaly: ElementMap,
}

/// Number of per-satellite local parameter positions:
/// [a | perigee, e | excess, inc, raan, argp, mean anomaly].
pub const LOCAL_SLOTS: usize = 6;

impl SatelliteMap {
    /// Global slot feeding each local position, if any.
    pub fn local_slots(&self) -> [Option<usize>; LOCAL_SLOTS] {
        let (s0, s1) = match self.shape {
            ShapeMap::Direct { a, e } => (a.slot(), e.slot()),
            ShapeMap::PerigeeExcess { rp_slot, dr_slot, .. } => (Some(rp_slot), Some(dr_slot)),
        };
        [s0, s1, self.inc.slot(), self.raan.slot(), self.argp.slot(), self.mean_anomaly.slot()]
    }

    /// Elements from the local θ values (entries for fixed positions are ignored).
    pub fn apply<S: Real>(&self, local: &[S; LOCAL_SLOTS], epoch: Epoch) -> ElementSet<S> {
        let (a, e) = match self.shape {
            ShapeMap::Direct { a, e } => (a.apply(local[0]), e.apply(local[1])),
            ShapeMap::PerigeeExcess { bounds, .. } => apply_perigee_excess(local[0], local[1], &bounds),
        };
        ElementSet {
            a,
            e,
            inc: self.inc.apply(local[2]),
            raan: self.raan.apply(local[3]),
            argp: self.argp.apply(local[4]),
            mean_anomaly: self.mean_anomaly.apply(local[5]),
            epoch,
        }
    }

    fn encode(&self, el: &ElementSet) -> Result<[f64; LOCAL_SLOTS], SpecError> {
        let (t0, t1) = match self.shape {
            ShapeMap::Direct { a, e } => (a.encode(el.a)?, e.encode(el.e)?),
            ShapeMap::PerigeeExcess { rp_slot, dr_slot, bounds } => {
                let rp = el.a * (1.0 - el.e) - EARTH_RADIUS_KM;
                let dr = 2.0 * el.a * el.e;
                let span = bounds.rp_max_km - bounds.rp_min_km;
                let u = (rp - bounds.rp_min_km) / span;
                if !(u > 0.0 && u < 1.0) {
                    return Err(SpecError::Encode {
                        slot: rp_slot,
                        value: rp,
                        lower: bounds.rp_min_km,
                        upper: bounds.rp_max_km,
                    });
                }
                let v = dr / bounds.dr_max_km;
                if !(v > 0.0 && v < 1.0) {
                    return Err(SpecError::Encode { slot: dr_slot, value: dr, lower: 0.0, upper: bounds.dr_max_km });
                }
                (logit(u), logit(v))
            }
        };
        Ok([
            t0,
            t1,
            self.inc.encode(el.inc)?,
            self.raan.encode(el.raan)?,
            self.argp.encode(el.argp)?,
            self.mean_anomaly.encode(el.mean_anomaly)?,
        ])
    }

    /// Signature used to check that every member of a slot maps it the same way.
    fn slot_kind(&self, local: usize) -> SlotKind {
        let of = |m: &ElementMap| match *m {
            ElementMap::Fixed { .. } => SlotKind::Periodic,
            ElementMap::Periodic { .. } => SlotKind::Periodic,
            ElementMap::Interval { lower, upper, .. } => SlotKind::Interval { lower, upper },
        };
        match (local, self.shape) {
            (0, ShapeMap::Direct { a, .. }) => of(&a),
            (1, ShapeMap::Direct { e, .. }) => of(&e),
            (0, ShapeMap::PerigeeExcess { bounds, .. }) => SlotKind::Perigee(bounds),
            (1, ShapeMap::PerigeeExcess { bounds, .. }) => SlotKind::Excess(bounds),
            (2, _) => of(&self.inc),
            (3, _) => of(&self.raan),
            (4, _) => of(&self.argp),
            _ => of(&self.mean_anomaly),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlotKind {
    Periodic,
    Interval { lower: f64, upper: f64 },
    Perigee(PerigeeBounds),
    Excess(PerigeeBounds),
}

impl SlotKind {
    pub fn is_periodic(&self) -> bool {
        matches!(self, SlotKind::Periodic)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotInfo {
    pub name: String,
    pub kind: SlotKind,
    /// Satellites reading this slot, ascending.
    pub members: Vec<usize>,
    /// Local position (see [`LOCAL_SLOTS`]) the slot feeds.
    pub element: usize,
}

/// Mapping between unconstrained optimizer variables and element sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub satellites: Vec<SatelliteMap>,
    pub slots: Vec<SlotInfo>,
}

const ELEMENT_NAMES: [&str; LOCAL_SLOTS] = ["a", "e", "inc", "raan", "argp", "ma"];

impl ParamSpec {
    /// Builds the slot table and checks consistency. `n_slots` is the number
    /// of θ entries; every one must be referenced.
    pub fn new(satellites: Vec<SatelliteMap>, n_slots: usize) -> Result<Self, SpecError> {
        let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_slots];
        for (i, sat) in satellites.iter().enumerate() {
            let locals = sat.local_slots();
            for (l, slot) in locals.iter().enumerate() {
                if let Some(s) = *slot {
                    if s >= n_slots {
                        return Err(SpecError::SlotRange { slot: s, n: n_slots });
                    }
                    if locals[..l].contains(&Some(s)) {
                        return Err(SpecError::Duplicate { slot: s, satellite: i });
                    }
                    members[s].push((i, l));
                }
            }
            for m in [sat.inc, sat.raan, sat.argp, sat.mean_anomaly] {
                if let ElementMap::Interval { lower, upper, .. } = m {
                    check_bounds(lower, upper)?;
                }
            }
            match sat.shape {
                ShapeMap::Direct { a, e } => {
                    for m in [a, e] {
                        if let ElementMap::Interval { lower, upper, .. } = m {
                            check_bounds(lower, upper)?;
                        }
                    }
                }
                ShapeMap::PerigeeExcess { bounds, .. } => {
                    check_bounds(bounds.rp_min_km, bounds.rp_max_km)?;
                    if !(bounds.dr_max_km > 0.0) || !bounds.dr_max_km.is_finite() {
                        return Err(SpecError::Bounds { lower: 0.0, upper: bounds.dr_max_km });
                    }
                }
            }
        }
        let mut slots = Vec::with_capacity(n_slots);
        for (s, m) in members.iter().enumerate() {
            let Some(&(i0, l0)) = m.first() else {
                return Err(SpecError::UnusedSlot { slot: s });
            };
            let kind = satellites[i0].slot_kind(l0);
            if m.iter().any(|&(i, l)| l != l0 || satellites[i].slot_kind(l) != kind) {
                return Err(SpecError::Inconsistent { slot: s });
            }
            let ids: Vec<usize> = m.iter().map(|&(i, _)| i).collect();
            let name = match kind {
                SlotKind::Perigee(_) => "perigee".to_string(),
                SlotKind::Excess(_) => "excess".to_string(),
                _ => ELEMENT_NAMES[l0].to_string(),
            };
            let plane = satellites[i0].plane;
            let name = if ids.len() == 1 {
                format!("{name}[sat {}]", ids[0])
            } else if ids.iter().all(|&i| satellites[i].plane == plane) {
                format!("{name}[plane {plane}]")
            } else {
                format!("{name}[all]")
            };
            slots.push(SlotInfo { name, kind, members: ids, element: l0 });
        }
        Ok(Self { satellites, slots })
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn n_satellites(&self) -> usize {
        self.satellites.len()
    }

    pub fn check_len(&self, theta_len: usize) -> Result<(), SpecError> {
        if theta_len != self.n_slots() {
            return Err(SpecError::Length { expected: self.n_slots(), got: theta_len });
        }
        Ok(())
    }

    /// Local θ values of satellite `i`.
    pub fn local_theta<S: Real>(&self, i: usize, theta: &[S]) -> [S; LOCAL_SLOTS] {
        let locals = self.satellites[i].local_slots();
        std::array::from_fn(|l| locals[l].map_or(S::constant(0.0), |s| theta[s]))
    }

    /// Element sets for every satellite; shared slots give bit-identical elements.
    pub fn unpack<S: Real>(&self, theta: &[S], epoch: Epoch) -> Result<Vec<ElementSet<S>>, SpecError> {
        self.check_len(theta.len())?;
        Ok((0..self.n_satellites()).map(|i| self.satellites[i].apply(&self.local_theta(i, theta), epoch)).collect())
    }

    /// Inverse of [`ParamSpec::unpack`]; each slot takes the value implied by
    /// its first member.
    pub fn encode(&self, elements: &[ElementSet]) -> Result<ParamVector, SpecError> {
        if elements.len() != self.n_satellites() {
            return Err(SpecError::SatelliteCount(elements.len(), self.n_satellites()));
        }
        let mut theta = vec![0.0; self.n_slots()];
        for (s, info) in self.slots.iter().enumerate() {
            let i = info.members[0];
            theta[s] = self.satellites[i].encode(&elements[i])?[info.element];
        }
        Ok(ParamVector(theta))
    }

    /// Whether slot `s` holds an unwrapped angle.
    pub fn is_periodic(&self, s: usize) -> bool {
        self.slots[s].kind.is_periodic()
    }
}

fn check_bounds(lower: f64, upper: f64) -> Result<(), SpecError> {
    if lower.is_finite() && upper.is_finite() && lower < upper {
        Ok(())
    } else {
        Err(SpecError::Bounds { lower, upper })
    }
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

/// Unconstrained optimizer variables, one per slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

/// x = l + (u − l) σ(θ), strictly inside (l, u) for finite θ.
pub fn apply_interval<S: Real>(theta: S, lower: f64, upper: f64) -> S {
    theta.sigmoid() * (upper - lower) + lower
}

/// ∂x/∂θ of [`apply_interval`].
pub fn interval_derivative(theta: f64, lower: f64, upper: f64) -> f64 {
    let s = crate::grad::sigmoid_f64(theta);
    (upper - lower) * s * (1.0 - s)
}

/// (a, e) from perigee altitude and excess altitude, both sigmoid-bounded:
/// r_p = r_p,min + (r_p,max − r_p,min) σ(θ_rp), δr = δr_max σ(θ_δr),
/// a = R + r_p + δr/2, e = δr / (2a).
pub fn apply_perigee_excess<S: Real>(theta_rp: S, theta_dr: S, b: &PerigeeBounds) -> (S, S) {
    let rp = apply_interval(theta_rp, b.rp_min_km, b.rp_max_km);
    let dr = theta_dr.sigmoid() * b.dr_max_km;
    let a = rp + dr * 0.5 + EARTH_RADIUS_KM;
    let e = dr / (a * 2.0);
    (a, e)
}

/// Converts the summed per-slot gradient into the per-member mean: a slot
/// shared by m satellites has its accumulated partial divided by m.
pub fn plane_average_grads(grads: &GradientVector, spec: &ParamSpec) -> GradientVector {
    GradientVector(grads.0.iter().zip(&spec.slots).map(|(g, s)| g / s.members.len() as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth::default_epoch;
    use crate::grad::{seed_params, Dual};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circ(plane: usize, raan: ElementMap, ma: ElementMap) -> SatelliteMap {
        SatelliteMap {
            plane,
            shape: ShapeMap::Direct {
                a: ElementMap::Fixed { value: EARTH_RADIUS_KM + 550.0 },
                e: ElementMap::Fixed { value: 0.0 },
            },
            inc: ElementMap::Fixed { value: 1.0 },
            raan,
            argp: ElementMap::Fixed { value: 0.0 },
            mean_anomaly: ma,
        }
    }

    #[test]
    fn interval_examples() {
        assert_eq!(apply_interval(0.0, 2.0, 6.0), 4.0);
        assert_eq!(interval_derivative(0.0, 2.0, 6.0), 1.0);
        assert!((6.0 - apply_interval(10.0, 2.0, 6.0)) < 1e-4 * 4.0);
        let h = 1e-6;
        let num = (apply_interval(0.7 + h, 2.0, 6.0) - apply_interval(0.7 - h, 2.0, 6.0)) / (2.0 * h);
        assert!((num - interval_derivative(0.7, 2.0, 6.0)).abs() < 1e-9);
        let d = apply_interval(Dual::<1>::variable(0.7, 0), 2.0, 6.0);
        assert!((d.d[0] - interval_derivative(0.7, 2.0, 6.0)).abs() < 1e-15);
    }

    #[test]
    fn perigee_excess_examples() {
        let b = PerigeeBounds { rp_min_km: 400.0, rp_max_km: 600.0, dr_max_km: 1500.0 };
        let (a, e) = apply_perigee_excess(0.0, 0.0, &b);
        assert!((a - 7253.137).abs() < 1e-9);
        assert!((e - 750.0 / (2.0 * 7253.137)).abs() < 1e-15);
        assert!((e - 0.0517).abs() < 1e-4);
        let (a, e) = apply_perigee_excess(0.0, -60.0, &b);
        assert!(e < 1e-20 && (a - (EARTH_RADIUS_KM + 500.0)).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (t1, t2) = (rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
            let (a, e) = apply_perigee_excess(t1, t2, &b);
            let rp = apply_interval(t1, 400.0, 600.0);
            assert!((a * (1.0 - e) - EARTH_RADIUS_KM - rp).abs() < 1e-9);
        }
    }

    #[test]
    fn spec_slots_and_sharing() {
        let mut sats = Vec::new();
        for p in 0..6 {
            for s in 0..4 {
                sats.push(circ(p, ElementMap::Periodic { slot: p }, ElementMap::Periodic { slot: 6 + 4 * p + s }));
            }
        }
        let spec = ParamSpec::new(sats, 30).unwrap();
        assert_eq!(spec.n_slots(), 30);
        assert_eq!(spec.slots[2].members, vec![8, 9, 10, 11]);
        assert_eq!(spec.slots[2].name, "raan[plane 2]");
        let theta: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let els = spec.unpack(&theta, default_epoch()).unwrap();
        for p in 0..6 {
            for s in 0..4 {
                assert_eq!(els[4 * p + s].raan.to_bits(), els[4 * p].raan.to_bits());
            }
        }
        let back = spec.encode(&els).unwrap();
        assert_eq!(back.0, theta);
    }

    #[test]
    fn fixed_spec_ignores_theta() {
        let sat = circ(0, ElementMap::Fixed { value: 0.3 }, ElementMap::Periodic { slot: 0 });
        let spec = ParamSpec::new(vec![sat], 1).unwrap();
        let th = seed_params::<1>(&[2.0]).unwrap();
        let el = &spec.unpack(&th, default_epoch()).unwrap()[0];
        assert_eq!(el.raan.d, [0.0]);
        assert_eq!(el.inc.d, [0.0]);
        assert_eq!(el.mean_anomaly.d, [1.0]);
    }

    #[test]
    fn spec_errors() {
        let sat = circ(0, ElementMap::Periodic { slot: 0 }, ElementMap::Periodic { slot: 1 });
        assert_eq!(ParamSpec::new(vec![sat], 3).unwrap_err(), SpecError::UnusedSlot { slot: 2 });
        assert!(matches!(ParamSpec::new(vec![sat], 1), Err(SpecError::SlotRange { .. })));
        let dup = circ(0, ElementMap::Periodic { slot: 0 }, ElementMap::Periodic { slot: 0 });
        assert!(matches!(ParamSpec::new(vec![dup], 1), Err(SpecError::Duplicate { .. })));
        let a = circ(0, ElementMap::Periodic { slot: 0 }, ElementMap::Fixed { value: 0.0 });
        let b = circ(0, ElementMap::Interval { slot: 0, lower: 0.0, upper: 1.0 }, ElementMap::Fixed { value: 0.0 });
        assert!(matches!(ParamSpec::new(vec![a, b], 1), Err(SpecError::Inconsistent { slot: 0 })));
        let c = circ(0, ElementMap::Interval { slot: 0, lower: 1.0, upper: 1.0 }, ElementMap::Fixed { value: 0.0 });
        assert!(matches!(ParamSpec::new(vec![c], 1), Err(SpecError::Bounds { .. })));
        let ok = ParamSpec::new(vec![a], 1).unwrap();
        assert!(matches!(ok.unpack(&[0.0, 1.0], default_epoch()), Err(SpecError::Length { .. })));
    }

    #[test]
    fn plane_average_examples() {
        let sats = vec![
            circ(0, ElementMap::Periodic { slot: 0 }, ElementMap::Periodic { slot: 1 }),
            circ(0, ElementMap::Periodic { slot: 0 }, ElementMap::Periodic { slot: 2 }),
        ];
        let spec = ParamSpec::new(sats, 3).unwrap();
        // member partials 1 and 3 accumulate to 4 in the shared slot
        let summed = GradientVector(vec![1.0 + 3.0, 5.0, -2.0]);
        assert_eq!(plane_average_grads(&summed, &spec).0, vec![2.0, 5.0, -2.0]);
        assert_eq!(plane_average_grads(&GradientVector::zeros(3), &spec).0, vec![0.0; 3]);
    }

    #[test]
    fn constraints_hold_for_extreme_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = PerigeeBounds { rp_min_km: 400.0, rp_max_km: 600.0, dr_max_km: 15000.0 };
        for _ in 0..10_000 {
            let t: f64 = rng.random_range(-40.0..40.0);
            let x = apply_interval(t, 0.5, 1.5);
            assert!(x > 0.5 && x < 1.5 || (t.abs() > 36.0 && (0.5..=1.5).contains(&x)));
            let (a, e) = apply_perigee_excess(t, -t * 0.5, &b);
            assert!(e >= 0.0 && a * (1.0 - e) - EARTH_RADIUS_KM >= 400.0 - 1e-9);
        }
    }
}
