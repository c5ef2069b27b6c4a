//! AdamW on the relaxed loss, and three black-box baselines on the hard fitness.

mod adamw;
mod de;
mod ga;
mod sa;

pub use adamw::{run_gradient, run_gradient_with, AdamWConfig, AdamWState};
pub use de::{exponential_crossover, run_de};
pub use ga::{run_ga, uniform_crossover};
pub use sa::{acceptance_probability, metropolis_accept, run_sa, SaSchedule};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::HardMetrics;
use crate::objective::{Problem, ProblemError};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("iteration {iter}: {source}")]
    Iteration {
        iter: usize,
        #[source]
        source: ProblemError,
    },
    #[error("non-finite gradient at iteration {iter}")]
    NonFiniteGradient { iter: usize },
    #[error("evaluation {eval}: {msg}")]
    Fitness { eval: usize, msg: String },
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("trace io: {0}")]
    Io(#[from] csv::Error),
}

/// One line of the trace CSV. Baseline rows carry best-so-far values and
/// NaN soft metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub evals: usize,
    pub loss: f64,
    pub soft_coverage: f64,
    pub soft_revisit_min: f64,
    pub hard_coverage: f64,
    pub hard_revisit_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iter: usize,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: String,
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<Snapshot>,
    /// Last iterate (gradient) or best point found (baselines).
    pub final_theta: Vec<f64>,
}

impl RunTrace {
    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has at least one row")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), OptimError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<TraceRow>, OptimError> {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<Result<_, _>>()?)
    }

    /// Iterates in snapshot order, for PCA.
    pub fn iterates(&self) -> Vec<Vec<f64>> {
        self.snapshots.iter().map(|s| s.theta.clone()).collect()
    }
}

/// Black-box objective seen by SA, GA and DE.
pub trait Fitness {
    fn dim(&self) -> usize;
    /// Whether slot `i` is an angle that may be wrapped mod 2π.
    fn periodic(&self, i: usize) -> bool;
    fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation, String>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub hard: Option<HardMetrics>,
}

/// Hard-metric fitness −C + λΔmax of a problem.
pub struct HardFitness<'a> {
    pub problem: &'a Problem,
}

impl Fitness for HardFitness<'_> {
    fn dim(&self) -> usize {
        self.problem.n_params()
    }
    fn periodic(&self, i: usize) -> bool {
        self.problem.spec.is_periodic(i)
    }
    fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation, String> {
        let hard = self.problem.hard_metrics(theta).map_err(|e| e.to_string())?;
        Ok(Evaluation { fitness: hard.loss(self.problem.relax.lambda), hard: Some(hard) })
    }
}

/// Closure fitness for tests and synthetic problems.
pub struct FnFitness<F> {
    pub dim: usize,
    pub periodic: Vec<bool>,
    pub f: F,
}

impl<F: FnMut(&[f64]) -> f64> FnFitness<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, periodic: vec![false; dim], f }
    }
}

impl<F: FnMut(&[f64]) -> f64> Fitness for FnFitness<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn periodic(&self, i: usize) -> bool {
        self.periodic[i]
    }
    fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation, String> {
        Ok(Evaluation { fitness: (self.f)(theta), hard: None })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sa,
    Ga,
    De,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sa, Method::Ga, Method::De];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sa => "sa",
            Method::Ga => "ga",
            Method::De => "de",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub budget: usize,
    pub seed: u64,
    pub sa_probe_evals: usize,
    pub sa_initial_step_deg: f64,
    pub sa_target_acceptance: f64,
    pub sa_window: usize,
    pub sa_initial_acceptance: f64,
    pub sa_final_acceptance: f64,
    pub ga_population: usize,
    pub ga_tournament: usize,
    pub ga_sigma_start_deg: f64,
    pub ga_sigma_end_deg: f64,
    /// Per-gene mutation probability; 0 means 1/dim.
    pub ga_mutation_rate: f64,
    pub ga_elitism: usize,
    pub de_population: usize,
    pub de_f: f64,
    pub de_cr: f64,
    /// Spread of the warm-start population around θ₀.
    pub init_sigma_deg: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            budget: 4050,
            seed: 0,
            sa_probe_evals: 50,
            sa_initial_step_deg: 10.0,
            sa_target_acceptance: 0.44,
            sa_window: 50,
            sa_initial_acceptance: 0.8,
            sa_final_acceptance: 0.01,
            ga_population: 40,
            ga_tournament: 3,
            ga_sigma_start_deg: 30.0,
            ga_sigma_end_deg: 5.0,
            ga_mutation_rate: 0.0,
            ga_elitism: 1,
            de_population: 30,
            de_f: 0.8,
            de_cr: 0.5,
            init_sigma_deg: 30.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: &str| Err(OptimError::Config(m.to_string()));
        if self.budget == 0 {
            return bad("budget must be positive");
        }
        if self.ga_population < 2 || self.ga_tournament == 0 || self.ga_elitism >= self.ga_population {
            return bad("GA needs population >= 2, tournament >= 1, elitism < population");
        }
        if self.de_population < 4 {
            return bad("DE needs population >= 4");
        }
        if !(0.0..=1.0).contains(&self.de_cr) || !(0.0..1.0).contains(&self.sa_final_acceptance) {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }
}

pub fn run_baseline<F: Fitness>(method: Method, theta0: &[f64], fitness: &mut F, cfg: &BaselineConfig) -> Result<RunTrace, OptimError> {
    match method {
        Method::Sa => run_sa(theta0, fitness, cfg),
        Method::Ga => run_ga(theta0, fitness, cfg),
        Method::De => run_de(theta0, fitness, cfg),
    }
}

/// Budget accounting and best-so-far trace shared by the baselines.
pub(crate) struct Ledger<'a, F: Fitness> {
    fitness: &'a mut F,
    budget: usize,
    evals: usize,
    best: f64,
    best_theta: Vec<f64>,
    best_hard: Option<HardMetrics>,
    rows: Vec<TraceRow>,
}

impl<'a, F: Fitness> Ledger<'a, F> {
    pub(crate) fn new(fitness: &'a mut F, budget: usize) -> Self {
        Self {
            fitness,
            budget,
            evals: 0,
            best: f64::INFINITY,
            best_theta: Vec::new(),
            best_hard: None,
            rows: Vec::with_capacity(budget),
        }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.budget - self.evals
    }

    pub(crate) fn evals(&self) -> usize {
        self.evals
    }

    pub(crate) fn periodic(&self, i: usize) -> bool {
        self.fitness.periodic(i)
    }

    /// Evaluates `theta`, or returns `None` when the budget is spent.
    pub(crate) fn eval(&mut self, theta: &[f64]) -> Result<Option<f64>, OptimError> {
        if self.evals >= self.budget {
            return Ok(None);
        }
        let e = self.fitness.evaluate(theta).map_err(|msg| OptimError::Fitness { eval: self.evals, msg })?;
        self.evals += 1;
        if e.fitness < self.best || self.best_theta.is_empty() {
            self.best = e.fitness;
            self.best_theta = theta.to_vec();
            self.best_hard = e.hard;
        }
        let (hc, hr) = self.best_hard.map_or((f64::NAN, f64::NAN), |h| (h.coverage, h.revisit_min));
        self.rows.push(TraceRow {
            iter: self.evals - 1,
            evals: self.evals,
            loss: self.best,
            soft_coverage: f64::NAN,
            soft_revisit_min: f64::NAN,
            hard_coverage: hc,
            hard_revisit_min: hr,
        });
        Ok(Some(e.fitness))
    }

    pub(crate) fn finish(self, method: &str) -> RunTrace {
        RunTrace {
            method: method.to_string(),
            rows: self.rows,
            snapshots: vec![Snapshot { iter: self.evals, theta: self.best_theta.clone() }],
            final_theta: self.best_theta,
        }
    }
}

pub(crate) fn wrap_angle(x: f64) -> f64 {
    x.rem_euclid(std::f64::consts::TAU)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_respects_budget_and_tracks_best() {
        let mut fit = FnFitness::new(1, |x: &[f64]| (x[0] - 2.0).abs());
        let mut l = Ledger::new(&mut fit, 3);
        assert_eq!(l.eval(&[0.0]).unwrap(), Some(2.0));
        assert_eq!(l.eval(&[3.0]).unwrap(), Some(1.0));
        assert_eq!(l.eval(&[5.0]).unwrap(), Some(3.0));
        assert_eq!(l.eval(&[2.0]).unwrap(), None);
        let t = l.finish("x");
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.last().loss, 1.0);
        assert_eq!(t.final_theta, vec![3.0]);
    }

    #[test]
    fn trace_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let row = TraceRow {
            iter: 0,
            evals: 1,
            loss: -0.5,
            soft_coverage: f64::NAN,
            soft_revisit_min: 3.0,
            hard_coverage: 0.25,
            hard_revisit_min: 48.0,
        };
        let t = RunTrace { method: "sa".into(), rows: vec![row], snapshots: vec![], final_theta: vec![] };
        t.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iter,evals,loss,soft_coverage,soft_revisit_min,hard_coverage,hard_revisit_min"));
        let back = RunTrace::read_csv(&path).unwrap();
        assert_eq!(back[0].hard_revisit_min, 48.0);
        assert!(back[0].soft_coverage.is_nan());
    }

    #[test]
    fn wrap_is_into_zero_two_pi() {
        assert_eq!(wrap_angle(-0.5), std::f64::consts::TAU - 0.5);
        assert!((wrap_angle(7.0) - (7.0 - std::f64::consts::TAU)).abs() < 1e-15);
    }
}
