use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OptimizerConfig, Setup};
use super::HarnessError;
use crate::earth::{GroundTargetSet, SimWindow, EARTH_RADIUS_KM};
use crate::metrics::{MetricsReport, RelaxConfig};
use crate::objective::{ElementMap, ParamSpec, Problem, SatelliteMap, ShapeMap};
use crate::optim::{
    run_baseline, run_gradient_with, BaselineConfig, HardFitness, Method, RunTrace, Snapshot, TraceRow,
};
use crate::orbit::ElementSet;

pub const CONFIG_FILE: &str = "config.toml";
pub const TRACE_FILE: &str = "trace.csv";
pub const THETA_FILE: &str = "theta.csv";
pub const ELEMENTS_FILE: &str = "elements.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const DENSITY_FILE: &str = "density.csv";

/// One satellite in the elements file. Angles wrapped to [0°, 360°);
/// perigee and apogee are altitudes above the reference sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatelliteRecord {
    pub satellite: usize,
    pub plane: usize,
    pub a_km: f64,
    pub e: f64,
    pub inc_deg: f64,
    pub raan_deg: f64,
    pub argp_deg: f64,
    pub ma_deg: f64,
    pub perigee_km: f64,
    pub apogee_km: f64,
}

impl SatelliteRecord {
    pub fn new(satellite: usize, plane: usize, el: &ElementSet) -> Self {
        let wrap = |x: f64| {
            let d = x.to_degrees().rem_euclid(360.0);
            if d >= 360.0 {
                0.0
            } else {
                d
            }
        };
        Self {
            satellite,
            plane,
            a_km: el.a,
            e: el.e,
            inc_deg: el.inc.to_degrees(),
            raan_deg: wrap(el.raan),
            argp_deg: wrap(el.argp),
            ma_deg: wrap(el.mean_anomaly),
            perigee_km: el.perigee_radius() - EARTH_RADIUS_KM,
            apogee_km: el.apogee_radius() - EARTH_RADIUS_KM,
        }
    }

    pub fn to_elements(&self, epoch: crate::earth::Epoch) -> ElementSet {
        ElementSet {
            a: self.a_km,
            e: self.e,
            inc: self.inc_deg.to_radians(),
            raan: self.raan_deg.to_radians(),
            argp: self.argp_deg.to_radians(),
            mean_anomaly: self.ma_deg.to_radians(),
            epoch,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementsFile {
    pub initial: Vec<SatelliteRecord>,
    #[serde(rename = "final")]
    pub final_: Vec<SatelliteRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub id: String,
    pub method: String,
    pub initial: MetricsReport,
    #[serde(rename = "final")]
    pub final_: MetricsReport,
    /// Optimizer steps (gradient) or fitness evaluations (baselines).
    pub iterations: usize,
    /// Forward passes charged to the optimizer; each gradient step is one
    /// forward plus one backward pass.
    pub evaluations: usize,
    pub final_loss: f64,
}

/// In-memory result of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: Option<PathBuf>,
    pub setup: Setup,
    pub trace: RunTrace,
    pub final_elements: Vec<ElementSet>,
    pub metrics: MetricsFile,
}

fn records(spec: &ParamSpec, els: &[ElementSet]) -> Vec<SatelliteRecord> {
    els.iter().enumerate().map(|(i, el)| SatelliteRecord::new(i, spec.satellites[i].plane, el)).collect()
}

/// Runs the configured optimizer and, when `cfg.output.dir` is set, writes
/// the run directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    run_experiment_with(cfg, |_| {})
}

/// [`run_experiment`] with a progress callback per trace row.
pub fn run_experiment_with(cfg: &ExperimentConfig, mut progress: impl FnMut(&TraceRow)) -> Result<RunOutput, HarnessError> {
    let wrap = |e: HarnessError| HarnessError::Run { id: cfg.id.clone(), source: Box::new(e) };
    let setup = cfg.setup().map_err(wrap)?;
    let problem = &setup.problem;
    let trace = match cfg.optimizer() {
        OptimizerConfig::Adamw(a) => run_gradient_with(&setup.theta0, problem, &a, |row, _| progress(row)),
        OptimizerConfig::Sa(b) => baseline(Method::Sa, &setup, &b),
        OptimizerConfig::Ga(b) => baseline(Method::Ga, &setup, &b),
        OptimizerConfig::De(b) => baseline(Method::De, &setup, &b),
    }
    .map_err(|e| wrap(e.into()))?;

    let final_elements = problem.elements(&trace.final_theta).map_err(|e| wrap(e.into()))?;
    let initial = problem.report_elements(&setup.initial_elements).map_err(|e| wrap(e.into()))?;
    let final_ = problem.report_elements(&final_elements).map_err(|e| wrap(e.into()))?;
    let last = trace.last();
    let metrics = MetricsFile {
        id: cfg.id.clone(),
        method: trace.method.clone(),
        initial,
        final_,
        iterations: last.iter,
        evaluations: last.evals,
        final_loss: last.loss,
    };
    let out = RunOutput { dir: cfg.output.dir.clone(), setup, trace, final_elements, metrics };
    if let Some(dir) = &cfg.output.dir {
        write_run_dir(dir, cfg, &out).map_err(wrap)?;
    }
    Ok(out)
}

fn baseline(method: Method, setup: &Setup, cfg: &BaselineConfig) -> Result<RunTrace, crate::optim::OptimError> {
    let mut fitness = HardFitness { problem: &setup.problem };
    run_baseline(method, &setup.theta0, &mut fitness, cfg)
}

fn write_run_dir(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut snapshot = cfg.clone();
    snapshot.optimizer = cfg.optimizer();
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, snapshot.to_toml()?).map_err(|e| HarnessError::io(&path, e))?;
    out.trace.write_csv(&dir.join(TRACE_FILE))?;
    write_snapshots(&dir.join(THETA_FILE), &out.trace.snapshots)?;
    let spec = &out.setup.problem.spec;
    let elements =
        ElementsFile { initial: records(spec, &out.setup.initial_elements), final_: records(spec, &out.final_elements) };
    write_json(&dir.join(ELEMENTS_FILE), &elements)?;
    write_json(&dir.join(METRICS_FILE), &out.metrics)?;
    if cfg.output.density {
        let counts = out.setup.problem.density_elements(&out.final_elements)?;
        write_density(&dir.join(DENSITY_FILE), &out.setup.problem.targets, &counts)?;
    }
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_snapshots(path: &Path, snaps: &[Snapshot]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let n = snaps.first().map_or(0, |s| s.theta.len());
    let mut header = vec!["iter".to_string()];
    header.extend((0..n).map(|i| format!("theta_{i}")));
    w.write_record(&header)?;
    for s in snaps {
        let mut rec = vec![s.iter.to_string()];
        rec.extend(s.theta.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |f: &str| HarnessError::Config(format!("{}: bad value '{f}'", path.display()));
        let mut it = rec.iter();
        let iter = it.next().ok_or_else(|| bad(""))?;
        let iter: usize = iter.parse().map_err(|_| bad(iter))?;
        let theta = it.map(|f| f.parse::<f64>().map_err(|_| bad(f))).collect::<Result<_, _>>()?;
        out.push(Snapshot { iter, theta });
    }
    Ok(out)
}

fn write_density(path: &Path, targets: &GroundTargetSet, counts: &[u32]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lat_deg", "lon_deg", "weight", "covered_steps"])?;
    for (t, c) in targets.targets.iter().zip(counts) {
        w.write_record(&[
            t.lat.to_degrees().to_string(),
            t.lon.to_degrees().to_string(),
            t.weight.to_string(),
            c.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// A completed run directory read back from disk.
#[derive(Clone, Debug)]
pub struct RunDirectory {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<Snapshot>,
    pub elements: ElementsFile,
    pub metrics: MetricsFile,
}

impl RunDirectory {
    pub fn open(path: &Path) -> Result<Self, HarnessError> {
        Ok(Self {
            path: path.to_path_buf(),
            config: ExperimentConfig::load(&path.join(CONFIG_FILE))?,
            rows: RunTrace::read_csv(&path.join(TRACE_FILE))?,
            snapshots: read_snapshots(&path.join(THETA_FILE))?,
            elements: read_json(&path.join(ELEMENTS_FILE))?,
            metrics: read_json(&path.join(METRICS_FILE))?,
        })
    }

    /// Trace assembled from the stored rows and snapshots.
    pub fn trace(&self) -> RunTrace {
        RunTrace {
            method: self.metrics.method.clone(),
            rows: self.rows.clone(),
            snapshots: self.snapshots.clone(),
            final_theta: self.snapshots.last().map(|s| s.theta.clone()).unwrap_or_default(),
        }
    }

    pub fn final_elements(&self) -> Vec<ElementSet> {
        let epoch = self.config.window.epoch;
        self.elements.final_.iter().map(|r| r.to_elements(epoch)).collect()
    }
}

/// A spec with every element fixed to `elements`; it has no slots.
pub fn fixed_spec(elements: &[ElementSet]) -> Result<ParamSpec, HarnessError> {
    let fixed = |v: f64| ElementMap::Fixed { value: v };
    let sats = elements
        .iter()
        .enumerate()
        .map(|(i, el)| SatelliteMap {
            plane: i,
            shape: ShapeMap::Direct { a: fixed(el.a), e: fixed(el.e) },
            inc: fixed(el.inc),
            raan: fixed(el.raan),
            argp: fixed(el.argp),
            mean_anomaly: fixed(el.mean_anomaly),
        })
        .collect();
    Ok(ParamSpec::new(sats, 0)?)
}

/// Hard and soft metrics of a fixed constellation, no optimization.
pub fn eval_constellation(
    elements: &[ElementSet],
    targets: &GroundTargetSet,
    window: &SimWindow,
    relax: &RelaxConfig,
) -> Result<MetricsReport, HarnessError> {
    let problem = Problem::new(fixed_spec(elements)?, targets.clone(), window.clone(), *relax)?;
    Ok(problem.report_elements(elements)?)
}

/// Per-method spread of final hard metrics across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub method: String,
    pub runs: usize,
    /// Seed whose run ended with the lowest fitness.
    pub best_seed: u64,
    pub best_coverage: f64,
    pub best_revisit_min: f64,
    pub coverage_lo: f64,
    pub coverage_hi: f64,
    pub revisit_lo: f64,
    pub revisit_hi: f64,
}

#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub method: Method,
    pub seed: u64,
    pub output: RunOutput,
}

/// SA, GA and DE for every seed, all warm-started from `base`'s initial
/// point. `base.optimizer` provides the baseline settings when it names a
/// baseline; otherwise defaults are used. With an output directory, each
/// run lands in `<dir>/<method>/seed_<k>` and the summary in
/// `<dir>/summary.csv`.
pub fn run_baseline_suite(
    base: &ExperimentConfig,
    seeds: &[u64],
) -> Result<(Vec<BaselineRun>, Vec<BaselineSummary>), HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("baseline suite needs at least one seed".into()));
    }
    let template = match &base.optimizer {
        OptimizerConfig::Sa(b) | OptimizerConfig::Ga(b) | OptimizerConfig::De(b) => b.clone(),
        OptimizerConfig::Adamw(_) => BaselineConfig::default(),
    };
    let jobs: Vec<(Method, u64)> = Method::ALL.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(method, seed)| {
            let mut cfg = base.clone();
            cfg.id = format!("{}-{}-seed{seed}", base.id, method.name());
            cfg.optimizer = OptimizerConfig::baseline(method, template.clone());
            cfg.seeds.optimizer = seed;
            cfg.output.dir = base.output.dir.as_ref().map(|d| d.join(method.name()).join(format!("seed_{seed}")));
            run_experiment(&cfg).map(|output| BaselineRun { method, seed, output })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&runs);
    if let Some(dir) = &base.output.dir {
        let path = dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for s in &summary {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok((runs, summary))
}

pub fn summarize(runs: &[BaselineRun]) -> Vec<BaselineSummary> {
    Method::ALL
        .iter()
        .filter_map(|&m| {
            let mine: Vec<&BaselineRun> = runs.iter().filter(|r| r.method == m).collect();
            let best = mine.iter().min_by(|a, b| a.output.trace.last().loss.total_cmp(&b.output.trace.last().loss))?;
            let cov: Vec<f64> = mine.iter().map(|r| r.output.trace.last().hard_coverage).collect();
            let rev: Vec<f64> = mine.iter().map(|r| r.output.trace.last().hard_revisit_min).collect();
            let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Some(BaselineSummary {
                method: m.name().to_string(),
                runs: mine.len(),
                best_seed: best.seed,
                best_coverage: best.output.trace.last().hard_coverage,
                best_revisit_min: best.output.trace.last().hard_revisit_min,
                coverage_lo: lo(&cov),
                coverage_hi: hi(&cov),
                revisit_lo: lo(&rev),
                revisit_hi: hi(&rev),
            })
        })
        .collect()
}
