//! Hard coverage/revisit metrics and their smooth counterparts.
//!
//! The relaxed chain is: sigmoid visibility per (satellite, target, step),
//! noisy-OR across satellites, a leaky integrator for the running revisit
//! gap, and a LogSumExp soft maximum over time. Every scalar stage is
//! generic over [`Real`] so it can be differentiated with [`crate::grad::Dual`].

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::earth::{is_visible, GroundTargetSet, SimWindow, EARTH_RADIUS_KM};
use crate::grad::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid relaxation config: {0}")]
    Config(String),
}

/// Relaxation temperatures and loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxConfig {
    /// Sigmoid temperature of the coverage branch, degrees of elevation.
    pub tau_cov_deg: f64,
    /// Sigmoid temperature of the revisit branch, degrees of elevation.
    pub tau_rev_deg: f64,
    /// LogSumExp temperature, minutes.
    pub beta_min: f64,
    /// Revisit weight.
    pub lambda: f64,
    pub min_elevation_deg: f64,
    /// Weight of the soft coverage term; 0 drops it from the loss.
    #[serde(default = "one")]
    pub coverage_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self { tau_cov_deg: 2.0, tau_rev_deg: 2.0, beta_min: 10.0, lambda: 0.1, min_elevation_deg: 10.0, coverage_weight: 1.0 }
    }
}

impl RelaxConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let pos = [("tau_cov", self.tau_cov_deg), ("tau_rev", self.tau_rev_deg), ("beta", self.beta_min)];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(MetricsError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda >= 0.0) || !(self.coverage_weight >= 0.0) {
            return Err(MetricsError::Config("lambda and coverage weight must be non-negative".into()));
        }
        if !(-90.0..90.0).contains(&self.min_elevation_deg) {
            return Err(MetricsError::Config(format!("minimum elevation {}", self.min_elevation_deg)));
        }
        Ok(())
    }

    pub fn shared_tau(&self) -> bool {
        self.tau_cov_deg == self.tau_rev_deg
    }
}

/// Hard and soft metrics for one constellation over one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hard_coverage: f64,
    pub hard_revisit_min: f64,
    pub soft_coverage: f64,
    pub soft_revisit_min: f64,
}

/// Hard metrics only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardMetrics {
    pub coverage: f64,
    pub revisit_min: f64,
}

impl HardMetrics {
    /// Fitness used by the black-box baselines: −C + λ Δmax.
    pub fn loss(&self, lambda: f64) -> f64 {
        -self.coverage + lambda * self.revisit_min
    }
}

/// Sigmoid visibility σ((α − α_min)/τ). Any consistent angle unit works.
pub fn soft_visibility<S: Real>(alpha: S, alpha_min: f64, tau: f64) -> S {
    ((alpha - alpha_min) / tau).sigmoid()
}

/// Rescaled tanh form of [`soft_visibility`].
pub fn tanh_visibility<S: Real>(alpha: S, alpha_min: f64, tau: f64) -> S {
    (((alpha - alpha_min) / (2.0 * tau)).tanh() + 1.0) * 0.5
}

/// Probabilistic OR, 1 − Π(1 − c_i).
pub fn noisy_or<S: Real>(values: &[S]) -> S {
    let mut miss = S::constant(1.0);
    for &c in values {
        miss *= S::constant(1.0) - c;
    }
    S::constant(1.0) - miss
}

/// Leaky running gap: Δ_0 = 0, Δ_k = (Δ_{k−1} + δt)(1 − C_k).
pub fn leaky_gaps<S: Real>(coverage: &[S], dt_min: f64) -> Vec<S> {
    let mut out = Vec::with_capacity(coverage.len());
    let mut gap = S::constant(0.0);
    for (k, &c) in coverage.iter().enumerate() {
        if k > 0 {
            gap = (gap + dt_min) * (S::constant(1.0) - c);
        }
        out.push(gap);
    }
    out
}

/// LogSumExp soft maximum β log Σ exp(x/β), shifted by the largest value.
pub fn lse_softmax<S: Real>(values: &[S], beta: f64) -> S {
    let m = values.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max);
    let mut acc = S::constant(0.0);
    for &v in values {
        acc += ((v - m) / beta).exp();
    }
    acc.ln() * beta + m
}

/// Mellowmax with ω = 1/β: LogSumExp minus β log K.
pub fn mellowmax<S: Real>(values: &[S], beta: f64) -> S {
    let m = values.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max);
    let mut acc = S::constant(0.0);
    for &v in values {
        acc += ((v - m) / beta).exp();
    }
    (acc / values.len() as f64).ln() * beta + m
}

/// Dense per-(satellite, target, step) visibility values.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityTensor {
    pub n_sat: usize,
    pub n_target: usize,
    pub n_steps: usize,
    data: Vec<f64>,
}

impl VisibilityTensor {
    pub fn from_fn(n_sat: usize, n_target: usize, n_steps: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_sat * n_target * n_steps);
        for i in 0..n_sat {
            for j in 0..n_target {
                for k in 0..n_steps {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { n_sat, n_target, n_steps, data }
    }

    /// Soft visibility of every satellite/target/step from Earth-fixed positions.
    pub fn soft(positions: &[Vec<[f64; 3]>], targets: &GroundTargetSet, min_elevation_deg: f64, tau_deg: f64) -> Self {
        let n_steps = positions.first().map_or(0, Vec::len);
        Self::from_fn(positions.len(), targets.len(), n_steps, |i, j, k| {
            let s = crate::earth::sin_elevation(&positions[i][k], &targets.targets[j]).clamp(-1.0, 1.0);
            soft_visibility(s.asin().to_degrees(), min_elevation_deg, tau_deg)
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n_target + j) * self.n_steps + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n_target + j) * self.n_steps + k] = v;
    }

    /// Noisy-OR aggregate over satellites for one target, one value per step.
    pub fn aggregate(&self, j: usize) -> Vec<f64> {
        (0..self.n_steps)
            .map(|k| {
                let col: Vec<f64> = (0..self.n_sat).map(|i| self.get(i, j, k)).collect();
                noisy_or(&col)
            })
            .collect()
    }

    fn check_weights(&self, weights: &[f64]) -> Result<f64, MetricsError> {
        if weights.len() != self.n_target {
            return Err(MetricsError::Dimension(format!("{} weights for {} targets", weights.len(), self.n_target)));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(MetricsError::Dimension("weights sum to zero".into()));
        }
        Ok(total)
    }
}

/// Weighted mean over targets and plain mean over steps of the noisy-OR coverage.
pub fn soft_coverage_fraction(v: &VisibilityTensor, weights: &[f64]) -> Result<f64, MetricsError> {
    let total = v.check_weights(weights)?;
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        let series = v.aggregate(j);
        acc += w * series.iter().sum::<f64>() / v.n_steps as f64;
    }
    Ok(acc / total)
}

/// Weighted mean over targets of the soft worst-case revisit gap, minutes.
pub fn soft_mean_worst_revisit(v: &VisibilityTensor, dt_min: f64, beta: f64, weights: &[f64]) -> Result<f64, MetricsError> {
    let total = v.check_weights(weights)?;
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        let gaps = leaky_gaps(&v.aggregate(j), dt_min);
        acc += w * lse_softmax(&gaps, beta);
    }
    Ok(acc / total)
}

/// Boolean coverage per (target, step), target-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageMatrix {
    pub n_target: usize,
    pub n_steps: usize,
    pub covered: Vec<bool>,
}

impl CoverageMatrix {
    pub fn new(n_target: usize, n_steps: usize) -> Self {
        Self { n_target, n_steps, covered: vec![false; n_target * n_steps] }
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> bool {
        self.covered[j * self.n_steps + k]
    }

    #[inline]
    pub fn mark(&mut self, j: usize, k: usize) {
        self.covered[j * self.n_steps + k] = true;
    }

    pub fn row(&self, j: usize) -> &[bool] {
        &self.covered[j * self.n_steps..(j + 1) * self.n_steps]
    }

    /// Worst revisit gap of one target in minutes. Before the first
    /// coverage event the gap is the time elapsed since the window start.
    pub fn worst_gap_min(&self, j: usize, dt_min: f64) -> f64 {
        let mut last = 0usize;
        let mut worst = 0usize;
        for (k, &c) in self.row(j).iter().enumerate() {
            if c {
                last = k;
            } else {
                worst = worst.max(k - last);
            }
        }
        worst as f64 * dt_min
    }

    pub fn covered_steps(&self, j: usize) -> u32 {
        self.row(j).iter().filter(|&&c| c).count() as u32
    }

    pub fn metrics(&self, targets: &GroundTargetSet, dt_min: f64) -> HardMetrics {
        let mut cov = 0.0;
        let mut rev = 0.0;
        for (j, t) in targets.targets.iter().enumerate() {
            cov += t.weight * f64::from(self.covered_steps(j)) / self.n_steps as f64;
            rev += t.weight * self.worst_gap_min(j, dt_min);
        }
        HardMetrics { coverage: cov / targets.total_weight, revisit_min: rev / targets.total_weight }
    }
}

/// Coverage matrix by testing every satellite against every target.
pub fn coverage_matrix_brute(positions: &[Vec<[f64; 3]>], targets: &GroundTargetSet, min_elevation_deg: f64) -> CoverageMatrix {
    let n_steps = positions.first().map_or(0, Vec::len);
    let sin_min = min_elevation_deg.to_radians().sin();
    let mut m = CoverageMatrix::new(targets.len(), n_steps);
    for (j, t) in targets.targets.iter().enumerate() {
        for k in 0..n_steps {
            if positions.iter().any(|p| is_visible(&p[k], t, sin_min)) {
                m.mark(j, k);
            }
        }
    }
    m
}

/// Hard coverage fraction and mean worst-case revisit from Earth-fixed
/// positions `positions[i][k]`.
pub fn hard_metrics(
    positions: &[Vec<[f64; 3]>],
    targets: &GroundTargetSet,
    window: &SimWindow,
    min_elevation_deg: f64,
) -> Result<HardMetrics, MetricsError> {
    check_positions(positions, window)?;
    Ok(coverage_matrix_brute(positions, targets, min_elevation_deg).metrics(targets, window.dt_min()))
}

/// Number of covered steps per target.
pub fn visibility_density(
    positions: &[Vec<[f64; 3]>],
    targets: &GroundTargetSet,
    window: &SimWindow,
    min_elevation_deg: f64,
) -> Result<Vec<u32>, MetricsError> {
    check_positions(positions, window)?;
    let m = coverage_matrix_brute(positions, targets, min_elevation_deg);
    Ok((0..targets.len()).map(|j| m.covered_steps(j)).collect())
}

fn check_positions(positions: &[Vec<[f64; 3]>], window: &SimWindow) -> Result<(), MetricsError> {
    if let Some(bad) = positions.iter().position(|p| p.len() != window.steps) {
        return Err(MetricsError::Dimension(format!(
            "satellite {bad} has {} steps, window has {}",
            positions[bad].len(),
            window.steps
        )));
    }
    Ok(())
}

/// Latitude-binned lookup of targets near a sub-satellite point.
#[derive(Clone, Debug)]
pub struct TargetIndex {
    bin_width: f64,
    /// Per latitude bin: (longitude in [0, 2π), target index), sorted.
    bins: Vec<Vec<(f64, usize)>>,
}

/// Extra cap radius so rounding in the cap bound never drops a visible target.
const CAP_MARGIN: f64 = 1e-3;

impl TargetIndex {
    pub fn new(targets: &GroundTargetSet) -> Self {
        let bin_width = 1f64.to_radians();
        let n_bins = (PI / bin_width).ceil() as usize;
        let mut bins = vec![Vec::new(); n_bins];
        for (j, t) in targets.targets.iter().enumerate() {
            let b = (((t.lat + FRAC_PI_2) / bin_width) as usize).min(n_bins - 1);
            bins[b].push((t.lon.rem_euclid(TAU), j));
        }
        for b in &mut bins {
            b.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        }
        Self { bin_width, bins }
    }

    fn bin_of(&self, lat: f64) -> usize {
        (((lat + FRAC_PI_2) / self.bin_width).max(0.0) as usize).min(self.bins.len() - 1)
    }

    /// Calls `f` for every target within angular distance `radius` of
    /// (`lat`, `lon`), plus possibly some just outside it.
    pub fn for_each_candidate(&self, lat: f64, lon: f64, radius: f64, mut f: impl FnMut(usize)) {
        let lo_lat = lat - radius;
        let hi_lat = lat + radius;
        let (b0, b1) = (self.bin_of(lo_lat), self.bin_of(hi_lat));
        let full = hi_lat >= FRAC_PI_2 || lo_lat <= -FRAC_PI_2 || radius.sin() >= lat.cos();
        if full {
            for bin in &self.bins[b0..=b1] {
                bin.iter().for_each(|&(_, j)| f(j));
            }
            return;
        }
        let half = (radius.sin() / lat.cos()).asin();
        let start = (lon - half).rem_euclid(TAU);
        let end = start + 2.0 * half;
        for bin in &self.bins[b0..=b1] {
            let from = bin.partition_point(|&(l, _)| l < start);
            if end < TAU {
                let to = bin.partition_point(|&(l, _)| l <= end);
                bin[from..to].iter().for_each(|&(_, j)| f(j));
            } else {
                bin[from..].iter().for_each(|&(_, j)| f(j));
                let to = bin.partition_point(|&(l, _)| l <= end - TAU);
                bin[..to].iter().for_each(|&(_, j)| f(j));
            }
        }
    }
}

/// Central-angle radius of the visibility cap for a satellite at radius `r`.
pub fn cap_radius(r: f64, min_elevation_rad: f64) -> f64 {
    let c = (EARTH_RADIUS_KM * min_elevation_rad.cos() / r).min(1.0);
    c.acos() - min_elevation_rad
}

/// Coverage matrix using the spatial index; identical to [`coverage_matrix_brute`].
pub fn coverage_matrix_indexed(
    positions: &[Vec<[f64; 3]>],
    targets: &GroundTargetSet,
    index: &TargetIndex,
    min_elevation_deg: f64,
) -> CoverageMatrix {
    let n_steps = positions.first().map_or(0, Vec::len);
    let el_min = min_elevation_deg.to_radians();
    let sin_min = el_min.sin();
    let mut m = CoverageMatrix::new(targets.len(), n_steps);
    for sat in positions {
        for (k, p) in sat.iter().enumerate() {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if r <= EARTH_RADIUS_KM {
                continue;
            }
            let lat = (p[2] / r).asin();
            let lon = p[1].atan2(p[0]);
            let radius = if el_min < 0.0 { PI } else { cap_radius(r, el_min) + CAP_MARGIN };
            index.for_each_candidate(lat, lon, radius, |j| {
                if !m.get(j, k) && is_visible(p, &targets.targets[j], sin_min) {
                    m.mark(j, k);
                }
            });
        }
    }
    m
}

/// Indexed hard metrics for repeated evaluation on one target set.
pub fn hard_metrics_indexed(
    positions: &[Vec<[f64; 3]>],
    targets: &GroundTargetSet,
    index: &TargetIndex,
    window: &SimWindow,
    min_elevation_deg: f64,
) -> HardMetrics {
    coverage_matrix_indexed(positions, targets, index, min_elevation_deg).metrics(targets, window.dt_min())
}
