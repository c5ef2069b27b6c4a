use thiserror::Error;

use super::{ParamSpec, SpecError};
use crate::earth::{elevation, teme_to_ecef, GroundTargetSet, SimWindow, TargetError};
use crate::grad::{GradError, Real};
use crate::metrics::{
    coverage_matrix_indexed, lse_softmax, leaky_gaps, noisy_or, soft_visibility, HardMetrics, MetricsError,
    MetricsReport, RelaxConfig, TargetIndex,
};
use crate::orbit::{propagate_batch, ElementSet, OrbitError};

pub(super) const RAD2DEG: f64 = 180.0 / std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("satellite {satellite}: {source}")]
    Elements {
        satellite: usize,
        #[source]
        source: OrbitError,
    },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

/// Everything needed to evaluate one constellation objective: the parameter
/// mapping, ground targets, simulation window and relaxation settings.
#[derive(Clone, Debug)]
pub struct Problem {
    pub spec: ParamSpec,
    pub targets: GroundTargetSet,
    pub window: SimWindow,
    pub relax: RelaxConfig,
    pub(super) index: TargetIndex,
    pub(super) times: Vec<f64>,
    pub(super) angles: Vec<f64>,
}

impl Problem {
    pub fn new(spec: ParamSpec, targets: GroundTargetSet, window: SimWindow, relax: RelaxConfig) -> Result<Self, ProblemError> {
        relax.validate()?;
        let index = TargetIndex::new(&targets);
        let times = window.times();
        let angles = window.sidereal_angles();
        Ok(Self { spec, targets, window, relax, index, times, angles })
    }

    /// Same geometry under different relaxation settings.
    pub fn with_relax(&self, relax: RelaxConfig) -> Result<Self, ProblemError> {
        relax.validate()?;
        Ok(Self { relax, ..self.clone() })
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_slots()
    }

    pub fn sidereal_angles(&self) -> &[f64] {
        &self.angles
    }

    /// Validated element sets for θ.
    pub fn elements(&self, theta: &[f64]) -> Result<Vec<ElementSet>, ProblemError> {
        let els = self.spec.unpack(theta, self.window.epoch)?;
        check_elements(&els)?;
        Ok(els)
    }

    /// Earth-fixed positions `out[i][k]`.
    pub fn positions_ecef(&self, elements: &[ElementSet]) -> Result<Vec<Vec<[f64; 3]>>, ProblemError> {
        let mut pos = propagate_batch(elements, &self.times)?;
        for sat in &mut pos {
            for (p, &th) in sat.iter_mut().zip(&self.angles) {
                *p = teme_to_ecef(p, th);
            }
        }
        Ok(pos)
    }

    pub fn hard_metrics_elements(&self, elements: &[ElementSet]) -> Result<HardMetrics, ProblemError> {
        let pos = self.positions_ecef(elements)?;
        let m = coverage_matrix_indexed(&pos, &self.targets, &self.index, self.relax.min_elevation_deg);
        Ok(m.metrics(&self.targets, self.window.dt_min()))
    }

    pub fn hard_metrics(&self, theta: &[f64]) -> Result<HardMetrics, ProblemError> {
        self.hard_metrics_elements(&self.elements(theta)?)
    }

    /// Fitness of the black-box baselines: −C + λ Δmax on hard metrics.
    pub fn hard_fitness(&self, theta: &[f64]) -> Result<f64, ProblemError> {
        Ok(self.hard_metrics(theta)?.loss(self.relax.lambda))
    }

    /// Covered-step count per target.
    pub fn density_elements(&self, elements: &[ElementSet]) -> Result<Vec<u32>, ProblemError> {
        let pos = self.positions_ecef(elements)?;
        let m = coverage_matrix_indexed(&pos, &self.targets, &self.index, self.relax.min_elevation_deg);
        Ok((0..self.targets.len()).map(|j| m.covered_steps(j)).collect())
    }

    pub fn report_elements(&self, elements: &[ElementSet]) -> Result<MetricsReport, ProblemError> {
        let hard = self.hard_metrics_elements(elements)?;
        let soft = self.relaxed_elements(elements)?;
        Ok(MetricsReport {
            hard_coverage: hard.coverage,
            hard_revisit_min: hard.revisit_min,
            soft_coverage: soft.soft_coverage,
            soft_revisit_min: soft.soft_revisit_min,
        })
    }

    pub fn metrics_report(&self, theta: &[f64]) -> Result<MetricsReport, ProblemError> {
        self.report_elements(&self.elements(theta)?)
    }

    /// Straightforward composition of the relaxed chain on any [`Real`].
    /// Slow, but with `Dual` it is an independent check of the fused
    /// gradient in [`Problem::loss_and_grad`]. Returns (loss, C̃, Δ̃).
    pub fn loss_generic<S: Real>(&self, theta: &[S]) -> Result<(S, S, S), ProblemError> {
        let els = self.spec.unpack(theta, self.window.epoch)?;
        let plain: Vec<ElementSet> = els.iter().map(ElementSet::values).collect();
        check_elements(&plain)?;
        let teme = propagate_batch(&els, &self.times)?;
        let ecef: Vec<Vec<[S; 3]>> = teme
            .iter()
            .map(|sat| sat.iter().zip(&self.angles).map(|(p, &th)| teme_to_ecef(p, th)).collect())
            .collect();
        let r = &self.relax;
        let k_steps = self.times.len();
        let mut acc_cov = S::constant(0.0);
        let mut acc_rev = S::constant(0.0);
        let mut c_cov = Vec::with_capacity(ecef.len());
        let mut c_rev = Vec::with_capacity(ecef.len());
        for t in &self.targets.targets {
            let mut series_cov = Vec::with_capacity(k_steps);
            let mut series_rev = Vec::with_capacity(k_steps);
            for k in 0..k_steps {
                c_cov.clear();
                c_rev.clear();
                for sat in &ecef {
                    let alpha = elevation(&sat[k], t)? * RAD2DEG;
                    c_cov.push(soft_visibility(alpha, r.min_elevation_deg, r.tau_cov_deg));
                    c_rev.push(soft_visibility(alpha, r.min_elevation_deg, r.tau_rev_deg));
                }
                series_cov.push(noisy_or(&c_cov));
                series_rev.push(noisy_or(&c_rev));
            }
            let mut sum = S::constant(0.0);
            for &c in &series_cov {
                sum += c;
            }
            let cov = sum / k_steps as f64;
            let worst = lse_softmax(&leaky_gaps(&series_rev, self.window.dt_min()), r.beta_min);
            acc_cov += cov * t.weight;
            acc_rev += worst * t.weight;
        }
        let soft_cov = acc_cov / self.targets.total_weight;
        let soft_rev = acc_rev / self.targets.total_weight;
        let loss = -(soft_cov * r.coverage_weight) + soft_rev * r.lambda;
        Ok((loss.ensure_finite("loss")?, soft_cov, soft_rev))
    }
}

pub(super) fn check_elements(els: &[ElementSet]) -> Result<(), ProblemError> {
    for (i, el) in els.iter().enumerate() {
        el.validate().map_err(|source| ProblemError::Elements { satellite: i, source })?;
    }
    Ok(())
}
