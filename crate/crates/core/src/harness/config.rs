use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::seeds::{LegacyUniform, Seeds};
use super::HarnessError;
use crate::earth::{default_epoch, latlon_grid, load_targets, parse_targets, Epoch, GroundTargetSet, SimWindow};
use crate::metrics::RelaxConfig;
use crate::objective::{ElementMap, ParamSpec, PerigeeBounds, Problem, SatelliteMap, ShapeMap};
use crate::optim::{AdamWConfig, BaselineConfig, Method};
use crate::orbit::ElementSet;

/// The 500 European targets shipped with the crate.
pub const EUROPE_500: &str = include_str!("../../data/europe_500.csv");

/// Which satellites read one shared slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Share {
    Satellite,
    Plane,
    Constellation,
}

/// Angle element rule. Angles are given in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AngleRule {
    Fixed { deg: f64 },
    /// Unbounded angle, identity map.
    Free { share: Share },
    Interval { lower_deg: f64, upper_deg: f64, share: Share },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeRule {
    /// Fixed circular orbit.
    Circular { altitude_km: f64 },
    /// Free perigee altitude and apogee excess, both sigmoid-bounded.
    PerigeeExcess { perigee_min_km: f64, perigee_max_km: f64, excess_max_km: f64, share: Share },
}

/// Constellation layout and which elements the optimizer may move.
/// Satellites are numbered plane by plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstellationConfig {
    pub satellites: usize,
    pub planes: usize,
    pub shape: ShapeRule,
    pub inclination: AngleRule,
    pub raan: AngleRule,
    pub argp: AngleRule,
    pub mean_anomaly: AngleRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AngleInit {
    /// Walker-delta placement with the given inter-plane phasing.
    Walker { phasing: usize },
    /// One value per plane (RAAN) or per satellite.
    Values { deg: Vec<f64> },
    /// Uniform on [0°, 360°) from the init seed stream.
    Random,
}

/// Starting point, in physical units. Elements held fixed by the
/// constellation rules ignore these values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub raan: AngleInit,
    pub mean_anomaly: AngleInit,
    pub inclination_deg: f64,
    pub argp_deg: f64,
    pub perigee_altitude_km: f64,
    pub eccentricity: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            raan: AngleInit::Walker { phasing: 1 },
            mean_anomaly: AngleInit::Walker { phasing: 1 },
            inclination_deg: 60.0,
            argp_deg: 0.0,
            perigee_altitude_km: 550.0,
            eccentricity: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSource {
    /// cos(lat)-weighted latitude/longitude grid.
    Grid { n_lat: usize, n_lon: usize, lat_max_deg: f64 },
    /// `lat_deg,lon_deg[,weight]` file.
    Csv { path: PathBuf },
    /// The bundled 500-point European set.
    Europe,
}

impl Default for TargetSource {
    fn default() -> Self {
        TargetSource::Grid { n_lat: 36, n_lon: 72, lat_max_deg: 70.0 }
    }
}

impl TargetSource {
    pub fn load(&self) -> Result<GroundTargetSet, HarnessError> {
        Ok(match self {
            TargetSource::Grid { n_lat, n_lon, lat_max_deg } => {
                if *n_lat == 0 || *n_lon == 0 || !(*lat_max_deg > 0.0 && *lat_max_deg <= 90.0) {
                    return Err(HarnessError::Config(format!("bad grid {n_lat}x{n_lon} ±{lat_max_deg}°")));
                }
                latlon_grid(*n_lat, *n_lon, *lat_max_deg)
            }
            TargetSource::Csv { path } => load_targets(path)?,
            TargetSource::Europe => parse_targets(EUROPE_500.as_bytes())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub horizon_h: f64,
    pub steps: usize,
    pub epoch: Epoch,
    /// Draw the sidereal-angle offset uniformly from the gmst seed stream.
    pub randomize_gmst: bool,
    pub gmst_offset_deg: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { horizon_h: 24.0, steps: 240, epoch: default_epoch(), randomize_gmst: false, gmst_offset_deg: 0.0 }
    }
}

impl WindowConfig {
    pub fn resolve(&self, seeds: &Seeds) -> Result<SimWindow, HarnessError> {
        if self.steps < 2 || !(self.horizon_h > 0.0) {
            return Err(HarnessError::Config(format!("window needs steps >= 2 and a positive horizon, got {self:?}")));
        }
        let offset = if self.randomize_gmst {
            LegacyUniform::new(seeds.gmst).uniform(0.0, TAU)
        } else {
            self.gmst_offset_deg.to_radians()
        };
        Ok(SimWindow::new(self.horizon_h * 3600.0, self.steps, self.epoch, offset))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adamw(AdamWConfig),
    Sa(BaselineConfig),
    Ga(BaselineConfig),
    De(BaselineConfig),
}

impl OptimizerConfig {
    pub fn baseline(method: Method, cfg: BaselineConfig) -> Self {
        match method {
            Method::Sa => OptimizerConfig::Sa(cfg),
            Method::Ga => OptimizerConfig::Ga(cfg),
            Method::De => OptimizerConfig::De(cfg),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Also write the per-target visibility density of the final constellation.
    pub density: bool,
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub constellation: ConstellationConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub targets: TargetSource,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub relax: RelaxConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape: Option<super::LandscapeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gridsearch: Option<super::GridSearchConfig>,
}

/// A config resolved into a problem and a starting point.
#[derive(Clone, Debug)]
pub struct Setup {
    pub problem: Problem,
    pub theta0: Vec<f64>,
    pub initial_elements: Vec<ElementSet>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let c = &self.constellation;
        if c.planes == 0 || c.satellites == 0 || c.satellites % c.planes != 0 {
            return Err(HarnessError::Config(format!("{} planes do not divide {} satellites", c.planes, c.satellites)));
        }
        self.relax.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        match &self.optimizer {
            OptimizerConfig::Adamw(a) => a.validate()?,
            OptimizerConfig::Sa(b) | OptimizerConfig::Ga(b) | OptimizerConfig::De(b) => b.validate()?,
        }
        Ok(())
    }

    /// Optimizer settings with the seed taken from the optimizer stream.
    pub fn optimizer(&self) -> OptimizerConfig {
        let seeded = |b: &BaselineConfig| BaselineConfig { seed: self.seeds.optimizer, ..b.clone() };
        match &self.optimizer {
            OptimizerConfig::Adamw(a) => OptimizerConfig::Adamw(*a),
            OptimizerConfig::Sa(b) => OptimizerConfig::Sa(seeded(b)),
            OptimizerConfig::Ga(b) => OptimizerConfig::Ga(seeded(b)),
            OptimizerConfig::De(b) => OptimizerConfig::De(seeded(b)),
        }
    }

    pub fn spec(&self) -> Result<ParamSpec, HarnessError> {
        build_spec(&self.constellation)
    }

    pub fn setup(&self) -> Result<Setup, HarnessError> {
        self.validate()?;
        let spec = self.spec()?;
        let window = self.window.resolve(&self.seeds)?;
        let targets = self.targets.load()?;
        let initial_elements = initial_elements(&self.constellation, &self.init, &self.seeds, window.epoch)?;
        let theta0 = spec.encode(&initial_elements)?.0;
        let problem = Problem::new(spec, targets, window, self.relax)?;
        // round-trip through the mapping so fixed elements reflect the spec
        let initial_elements = problem.elements(&theta0)?;
        Ok(Setup { problem, theta0, initial_elements })
    }
}

fn group_count(share: Share, n: usize, planes: usize) -> usize {
    match share {
        Share::Satellite => n,
        Share::Plane => planes,
        Share::Constellation => 1,
    }
}

fn group_of(share: Share, sat: usize, per_plane: usize) -> usize {
    match share {
        Share::Satellite => sat,
        Share::Plane => sat / per_plane,
        Share::Constellation => 0,
    }
}

/// Slots are laid out element by element — perigee, excess, inclination,
/// RAAN, argument of perigee, mean anomaly — and group by group within
/// each element.
pub fn build_spec(c: &ConstellationConfig) -> Result<ParamSpec, HarnessError> {
    let (n, planes) = (c.satellites, c.planes);
    let per_plane = n / planes;
    let mut next = 0usize;
    let mut alloc = |share: Share| {
        let base = next;
        next += group_count(share, n, planes);
        base
    };
    let shape_bases = match c.shape {
        ShapeRule::Circular { .. } => None,
        ShapeRule::PerigeeExcess { share, .. } => Some((alloc(share), alloc(share))),
    };
    let mut angle = |rule: AngleRule| -> (AngleRule, Option<usize>) {
        match rule {
            AngleRule::Fixed { .. } => (rule, None),
            AngleRule::Free { share } | AngleRule::Interval { share, .. } => (rule, Some(alloc(share))),
        }
    };
    let inc = angle(c.inclination);
    let raan = angle(c.raan);
    let argp = angle(c.argp);
    let ma = angle(c.mean_anomaly);

    let map = |(rule, base): (AngleRule, Option<usize>), sat: usize| match rule {
        AngleRule::Fixed { deg } => ElementMap::Fixed { value: deg.to_radians() },
        AngleRule::Free { share } => ElementMap::Periodic { slot: base.unwrap() + group_of(share, sat, per_plane) },
        AngleRule::Interval { lower_deg, upper_deg, share } => ElementMap::Interval {
            slot: base.unwrap() + group_of(share, sat, per_plane),
            lower: lower_deg.to_radians(),
            upper: upper_deg.to_radians(),
        },
    };
    let sats = (0..n)
        .map(|i| {
            let shape = match (c.shape, shape_bases) {
                (ShapeRule::PerigeeExcess { perigee_min_km, perigee_max_km, excess_max_km, share }, Some((rp, dr))) => {
                    let g = group_of(share, i, per_plane);
                    ShapeMap::PerigeeExcess {
                        rp_slot: rp + g,
                        dr_slot: dr + g,
                        bounds: PerigeeBounds {
                            rp_min_km: perigee_min_km,
                            rp_max_km: perigee_max_km,
                            dr_max_km: excess_max_km,
                        },
                    }
                }
                (ShapeRule::Circular { altitude_km }, _) => ShapeMap::Direct {
                    a: ElementMap::Fixed { value: crate::earth::EARTH_RADIUS_KM + altitude_km },
                    e: ElementMap::Fixed { value: 0.0 },
                },
                _ => unreachable!("shape slots allocated for perigee-excess only"),
            };
            SatelliteMap {
                plane: i / per_plane,
                shape,
                inc: map(inc, i),
                raan: map(raan, i),
                argp: map(argp, i),
                mean_anomaly: map(ma, i),
            }
        })
        .collect();
    Ok(ParamSpec::new(sats, next)?)
}

/// Initial element sets. Random draws come from one stream: all mean
/// anomalies first, then all per-plane RAANs.
pub fn initial_elements(
    c: &ConstellationConfig,
    init: &InitConfig,
    seeds: &Seeds,
    epoch: Epoch,
) -> Result<Vec<ElementSet>, HarnessError> {
    let (n, planes) = (c.satellites, c.planes);
    let per_plane = n / planes;
    let mut rng = LegacyUniform::new(seeds.init);

    let ma_deg: Vec<f64> = match &init.mean_anomaly {
        AngleInit::Walker { phasing } => (0..n)
            .map(|i| 360.0 * (i % per_plane) as f64 / per_plane as f64 + 360.0 * ((i / per_plane) * phasing) as f64 / n as f64)
            .collect(),
        AngleInit::Values { deg } if deg.len() == n => deg.clone(),
        AngleInit::Values { deg } => {
            return Err(HarnessError::Config(format!("{} mean anomalies for {n} satellites", deg.len())));
        }
        AngleInit::Random => (0..n).map(|_| rng.uniform(0.0, 360.0)).collect(),
    };
    let raan_deg: Vec<f64> = match &init.raan {
        AngleInit::Walker { .. } => (0..n).map(|i| 360.0 * (i / per_plane) as f64 / planes as f64).collect(),
        AngleInit::Values { deg } if deg.len() == planes => (0..n).map(|i| deg[i / per_plane]).collect(),
        AngleInit::Values { deg } if deg.len() == n => deg.clone(),
        AngleInit::Values { deg } => {
            return Err(HarnessError::Config(format!("{} RAANs for {planes} planes", deg.len())));
        }
        AngleInit::Random => {
            let per: Vec<f64> = (0..planes).map(|_| rng.uniform(0.0, 360.0)).collect();
            (0..n).map(|i| per[i / per_plane]).collect()
        }
    };

    let (a, e) = match c.shape {
        ShapeRule::Circular { altitude_km } => (crate::earth::EARTH_RADIUS_KM + altitude_km, 0.0),
        ShapeRule::PerigeeExcess { .. } => {
            let e = init.eccentricity;
            ((crate::earth::EARTH_RADIUS_KM + init.perigee_altitude_km) / (1.0 - e), e)
        }
    };
    Ok((0..n)
        .map(|i| ElementSet {
            a,
            e,
            inc: init.inclination_deg.to_radians(),
            raan: raan_deg[i].to_radians(),
            argp: init.argp_deg.to_radians(),
            mean_anomaly: ma_deg[i].to_radians(),
            epoch,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walker_cfg() -> ConstellationConfig {
        ConstellationConfig {
            satellites: 24,
            planes: 6,
            shape: ShapeRule::Circular { altitude_km: 550.0 },
            inclination: AngleRule::Fixed { deg: 60.0 },
            raan: AngleRule::Free { share: Share::Plane },
            argp: AngleRule::Fixed { deg: 0.0 },
            mean_anomaly: AngleRule::Free { share: Share::Satellite },
        }
    }

    #[test]
    fn slot_layout_is_element_major() {
        let spec = build_spec(&walker_cfg()).unwrap();
        assert_eq!(spec.n_slots(), 30);
        assert_eq!(spec.slots[0].name, "raan[plane 0]");
        assert_eq!(spec.slots[0].members, vec![0, 1, 2, 3]);
        assert_eq!(spec.slots[6].name, "ma[sat 0]");
        assert_eq!(spec.slots[29].name, "ma[sat 23]");
    }

    #[test]
    fn constellation_share_uses_one_slot() {
        let mut c = walker_cfg();
        c.inclination = AngleRule::Interval { lower_deg: 30.0, upper_deg: 90.0, share: Share::Constellation };
        let spec = build_spec(&c).unwrap();
        assert_eq!(spec.n_slots(), 31);
        assert_eq!(spec.slots[0].name, "inc[all]");
        assert_eq!(spec.slots[0].members.len(), 24);
    }

    #[test]
    fn explicit_init_round_trips() {
        let c = walker_cfg();
        let init = InitConfig {
            raan: AngleInit::Values { deg: vec![0.0, 30.0, 120.0, 200.0, 210.0, 300.0] },
            mean_anomaly: AngleInit::Random,
            ..Default::default()
        };
        let els = initial_elements(&c, &init, &Seeds::default(), default_epoch()).unwrap();
        let spec = build_spec(&c).unwrap();
        let theta = spec.encode(&els).unwrap().0;
        assert!((theta[3].to_degrees() - 200.0).abs() < 1e-12);
        // first random mean anomaly of the default init stream
        assert!((theta[6].to_degrees() - 134.8344427850505).abs() < 1e-9);
    }

    #[test]
    fn wrong_init_lengths_are_errors() {
        let init = InitConfig { raan: AngleInit::Values { deg: vec![0.0; 5] }, ..Default::default() };
        assert!(initial_elements(&walker_cfg(), &init, &Seeds::default(), default_epoch()).is_err());
    }

    #[test]
    fn gmst_randomization_is_seeded() {
        let w = WindowConfig { randomize_gmst: true, ..Default::default() };
        let a = w.resolve(&Seeds { gmst: 3, ..Default::default() }).unwrap();
        let b = w.resolve(&Seeds { gmst: 3, ..Default::default() }).unwrap();
        let c = w.resolve(&Seeds { gmst: 4, ..Default::default() }).unwrap();
        assert_eq!(a.gmst_offset, b.gmst_offset);
        assert_ne!(a.gmst_offset, c.gmst_offset);
        assert!((0.0..TAU).contains(&a.gmst_offset));
    }
}
