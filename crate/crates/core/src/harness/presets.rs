use super::config::*;
use super::{AxisSpec, HarnessError, LandscapeConfig, Seeds};
use crate::metrics::RelaxConfig;
use crate::optim::{AdamWConfig, BaselineConfig};

/// Irregular starting RAANs of the Walker recovery experiment, degrees.
pub const IRREGULAR_RAAN_DEG: [f64; 6] = [0.0, 30.0, 120.0, 200.0, 210.0, 300.0];

/// Starting RAANs of the four tuning runs, in tier order.
pub const TUNING_INITS: [(&str, [f64; 6]); 4] = [
    ("near-uniform", [0.0, 60.0, 120.0, 180.0, 240.0, 300.0]),
    ("moderate", IRREGULAR_RAAN_DEG),
    ("clustered", [0.0, 10.0, 20.0, 30.0, 40.0, 50.0]),
    ("two-cluster", [0.0, 5.0, 180.0, 185.0, 270.0, 275.0]),
];

pub const PRESETS: [&str; 18] = [
    "exp1",
    "exp2",
    "exp3",
    "baselines",
    "tuning-near-uniform",
    "tuning-moderate",
    "tuning-clustered",
    "tuning-two-cluster",
    "ablation-a",
    "ablation-a-revisit",
    "ablation-b",
    "ablation-b-inverted",
    "ablation-c",
    "ablation-c-high",
    "ablation-d",
    "ablation-d-high",
    "ablation-e",
    "walker-4-2-1",
];

fn adamw(iterations: usize) -> OptimizerConfig {
    OptimizerConfig::Adamw(AdamWConfig { iterations, ..Default::default() })
}

fn relax(lambda: f64) -> RelaxConfig {
    RelaxConfig { lambda, ..Default::default() }
}

/// Two satellites sharing one plane; only their mean anomalies move.
pub fn exp1() -> ExperimentConfig {
    ExperimentConfig {
        id: "exp1".into(),
        constellation: ConstellationConfig {
            satellites: 2,
            planes: 1,
            shape: ShapeRule::Circular { altitude_km: 550.0 },
            inclination: AngleRule::Fixed { deg: 60.0 },
            raan: AngleRule::Fixed { deg: 0.0 },
            argp: AngleRule::Fixed { deg: 0.0 },
            mean_anomaly: AngleRule::Free { share: Share::Satellite },
        },
        init: InitConfig { mean_anomaly: AngleInit::Values { deg: vec![179.0, 181.0] }, ..Default::default() },
        targets: TargetSource::default(),
        window: WindowConfig::default(),
        relax: relax(2.0),
        optimizer: adamw(800),
        seeds: Seeds::default(),
        output: OutputConfig::default(),
        landscape: Some(LandscapeConfig { x: full_turn(0), y: full_turn(1), trace: None }),
        gridsearch: None,
    }
}

fn full_turn(slot: usize) -> AxisSpec {
    AxisSpec { slot, lower: 0.0, upper: 360.0, n: 65, degrees: true }
}

/// 24 satellites in 6 planes, RAAN shared per plane, mean anomalies free,
/// irregular RAANs and seeded random mean anomalies to start.
pub fn exp2() -> ExperimentConfig {
    ExperimentConfig {
        id: "exp2".into(),
        constellation: ConstellationConfig {
            satellites: 24,
            planes: 6,
            shape: ShapeRule::Circular { altitude_km: 550.0 },
            inclination: AngleRule::Fixed { deg: 60.0 },
            raan: AngleRule::Free { share: Share::Plane },
            argp: AngleRule::Fixed { deg: 0.0 },
            mean_anomaly: AngleRule::Free { share: Share::Satellite },
        },
        init: InitConfig {
            raan: AngleInit::Values { deg: IRREGULAR_RAAN_DEG.to_vec() },
            mean_anomaly: AngleInit::Random,
            ..Default::default()
        },
        targets: TargetSource::default(),
        window: WindowConfig::default(),
        relax: relax(0.1),
        optimizer: adamw(1000),
        seeds: Seeds::default(),
        output: OutputConfig::default(),
        landscape: None,
        gridsearch: None,
    }
}

/// Four satellites over Europe with every geometric element free. Orbit
/// shape is shared by the whole constellation; inclination, RAAN and
/// argument of perigee per plane; mean anomaly per satellite (12 slots).
pub fn exp3() -> ExperimentConfig {
    let plane_interval = AngleRule::Interval { lower_deg: 30.0, upper_deg: 90.0, share: Share::Plane };
    ExperimentConfig {
        id: "exp3".into(),
        constellation: ConstellationConfig {
            satellites: 4,
            planes: 2,
            shape: ShapeRule::PerigeeExcess {
                perigee_min_km: 400.0,
                perigee_max_km: 600.0,
                excess_max_km: 15_000.0,
                share: Share::Constellation,
            },
            inclination: plane_interval,
            raan: AngleRule::Free { share: Share::Plane },
            argp: AngleRule::Free { share: Share::Plane },
            mean_anomaly: AngleRule::Free { share: Share::Satellite },
        },
        init: InitConfig { eccentricity: 1e-3, ..Default::default() },
        targets: TargetSource::Europe,
        window: WindowConfig::default(),
        relax: relax(1.0),
        optimizer: adamw(3000),
        seeds: Seeds::default(),
        output: OutputConfig { dir: None, density: true },
        landscape: None,
        gridsearch: None,
    }
}

/// Walker 4/2/1 at 550 km over Europe, for reference metrics.
pub fn walker_4_2_1() -> ExperimentConfig {
    let mut c = exp3();
    c.id = "walker-4-2-1".into();
    c.constellation.shape = ShapeRule::Circular { altitude_km: 550.0 };
    c.constellation.inclination = AngleRule::Fixed { deg: 60.0 };
    c.constellation.argp = AngleRule::Fixed { deg: 0.0 };
    c.init = InitConfig::default();
    c.optimizer = adamw(0);
    c
}

pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut c = match name {
        "exp1" => exp1(),
        "exp2" => exp2(),
        "exp3" => exp3(),
        "walker-4-2-1" => walker_4_2_1(),
        "baselines" => ExperimentConfig { optimizer: OptimizerConfig::Sa(BaselineConfig::default()), ..exp2() },
        _ => {
            let mut c = exp2();
            if let Some(label) = name.strip_prefix("tuning-") {
                let (_, raan) = TUNING_INITS
                    .iter()
                    .find(|(l, _)| *l == label)
                    .ok_or_else(|| HarnessError::Preset(name.to_string()))?;
                c.init.raan = AngleInit::Values { deg: raan.to_vec() };
                c.window.randomize_gmst = true;
                c.optimizer = adamw(800);
            } else {
                let r = &mut c.relax;
                match name {
                    "ablation-a" => r.lambda = 0.0,
                    "ablation-a-revisit" => r.coverage_weight = 0.0,
                    "ablation-b" => (r.tau_cov_deg, r.tau_rev_deg) = (3.0, 1.0),
                    "ablation-b-inverted" => (r.tau_cov_deg, r.tau_rev_deg) = (1.0, 3.0),
                    "ablation-c" => r.lambda = 0.01,
                    "ablation-c-high" => r.lambda = 1.0,
                    "ablation-d" => r.beta_min = 1.0,
                    "ablation-d-high" => r.beta_min = 100.0,
                    "ablation-e" => c.init.raan = AngleInit::Random,
                    _ => return Err(HarnessError::Preset(name.to_string())),
                }
            }
            c
        }
    };
    c.id = name.to_string();
    Ok(c)
}
