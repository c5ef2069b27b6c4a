use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::earth::{elevation, GroundTargetSet, SimWindow};
use crate::metrics::{leaky_gaps, lse_softmax, soft_visibility};
use crate::objective::Problem;
use crate::orbit::ElementSet;

/// Candidate relaxation settings. Defaults are the full 7 × 7 × 6 × 6 grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub tau_cov_deg: Vec<f64>,
    pub tau_rev_deg: Vec<f64>,
    pub beta_min: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            tau_cov_deg: vec![1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0],
            tau_rev_deg: vec![0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
            beta_min: vec![3.0, 5.0, 7.5, 10.0, 15.0, 20.0],
            lambda: vec![0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
        }
    }
}

impl HyperGrid {
    pub fn len(&self) -> usize {
        self.tau_cov_deg.len() * self.tau_rev_deg.len() * self.beta_min.len() * self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One constellation under test. Solutions are passed in tier order: the
/// first two are expected to be better than the last two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSolution {
    pub label: String,
    pub elements: Vec<ElementSet>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub tau_cov_deg: f64,
    pub tau_rev_deg: f64,
    pub beta_min: f64,
    pub lambda: f64,
    pub loss_0: f64,
    pub loss_1: f64,
    pub loss_2: f64,
    pub loss_3: f64,
    pub valid: bool,
    pub margin: f64,
}

impl GridRow {
    pub fn losses(&self) -> [f64; 4] {
        [self.loss_0, self.loss_1, self.loss_2, self.loss_3]
    }
}

/// Tier ordering check: valid when max(L₀, L₁) < min(L₂, L₃); the margin
/// is the right side minus the left.
pub fn validity(losses: [f64; 4]) -> (bool, f64) {
    let margin = losses[2].min(losses[3]) - losses[0].max(losses[1]);
    (margin > 0.0, margin)
}

/// Among valid rows: largest τ_cov, then largest τ_rev, then largest margin.
pub fn select(rows: &[GridRow]) -> Option<&GridRow> {
    rows.iter().filter(|r| r.valid).max_by(|a, b| {
        a.tau_cov_deg
            .total_cmp(&b.tau_cov_deg)
            .then(a.tau_rev_deg.total_cmp(&b.tau_rev_deg))
            .then(a.margin.total_cmp(&b.margin))
    })
}

/// Soft coverage per τ_cov and soft mean worst revisit per (τ_rev, β) for
/// one constellation. The loss at λ is −C̃ + λΔ̃, so λ never needs its own
/// forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedTerms {
    pub coverage: Vec<f64>,
    /// `revisit[r][b]` for `tau_rev[r]`, `beta[b]`.
    pub revisit: Vec<Vec<f64>>,
}

/// Same arithmetic as the objective's generic path, evaluated once per
/// temperature instead of once per combination.
pub fn relaxed_terms(
    problem: &Problem,
    elements: &[ElementSet],
    grid: &HyperGrid,
) -> Result<RelaxedTerms, HarnessError> {
    let pos = problem.positions_ecef(elements)?;
    let targets: &GroundTargetSet = &problem.targets;
    let window: &SimWindow = &problem.window;
    let (k_steps, n_sat) = (window.steps, pos.len());
    let amin = problem.relax.min_elevation_deg;
    let dt = window.dt_min();
    let deg = 180.0 / std::f64::consts::PI;

    let per_target = targets
        .targets
        .par_iter()
        .map(|t| -> Result<(Vec<f64>, Vec<Vec<f64>>), HarnessError> {
            let mut alpha = Vec::with_capacity(k_steps * n_sat);
            for k in 0..k_steps {
                for sat in &pos {
                    alpha.push(elevation(&sat[k], t)? * deg);
                }
            }
            let series = |tau: f64| -> Vec<f64> {
                alpha
                    .chunks(n_sat)
                    .map(|step| {
                        let mut miss = 1.0;
                        for &a in step {
                            miss *= 1.0 - soft_visibility(a, amin, tau);
                        }
                        1.0 - miss
                    })
                    .collect()
            };
            let cov = grid
                .tau_cov_deg
                .iter()
                .map(|&tau| series(tau).iter().sum::<f64>() / k_steps as f64 * t.weight)
                .collect();
            let rev = grid
                .tau_rev_deg
                .iter()
                .map(|&tau| {
                    let gaps = leaky_gaps(&series(tau), dt);
                    grid.beta_min.iter().map(|&b| lse_softmax(&gaps, b) * t.weight).collect()
                })
                .collect();
            Ok((cov, rev))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let w = targets.total_weight;
    let mut coverage = vec![0.0; grid.tau_cov_deg.len()];
    let mut revisit = vec![vec![0.0; grid.beta_min.len()]; grid.tau_rev_deg.len()];
    for (cov, rev) in &per_target {
        for (acc, v) in coverage.iter_mut().zip(cov) {
            *acc += v;
        }
        for (row, vals) in revisit.iter_mut().zip(rev) {
            for (acc, v) in row.iter_mut().zip(vals) {
                *acc += v;
            }
        }
    }
    coverage.iter_mut().for_each(|c| *c /= w);
    revisit.iter_mut().flatten().for_each(|r| *r /= w);
    Ok(RelaxedTerms { coverage, revisit })
}

/// Relaxed loss of each of the four solutions under every grid combination,
/// with the tier-ordering validity and margin. Rows iterate τ_cov slowest,
/// then τ_rev, β, λ.
pub fn hyperparam_grid(
    problem: &Problem,
    solutions: &[LabeledSolution],
    grid: &HyperGrid,
) -> Result<Vec<GridRow>, HarnessError> {
    if solutions.len() != 4 {
        return Err(HarnessError::Grid(format!("need exactly 4 solutions, got {}", solutions.len())));
    }
    let terms =
        solutions.iter().map(|s| relaxed_terms(problem, &s.elements, grid)).collect::<Result<Vec<_>, _>>()?;
    Ok(rows_from_terms(&terms, grid))
}

pub fn rows_from_terms(terms: &[RelaxedTerms], grid: &HyperGrid) -> Vec<GridRow> {
    let mut rows = Vec::with_capacity(grid.len());
    for (c, &tau_cov) in grid.tau_cov_deg.iter().enumerate() {
        for (r, &tau_rev) in grid.tau_rev_deg.iter().enumerate() {
            for (b, &beta) in grid.beta_min.iter().enumerate() {
                for &lambda in &grid.lambda {
                    let l: Vec<f64> = terms.iter().map(|t| -t.coverage[c] + lambda * t.revisit[r][b]).collect();
                    let losses = [l[0], l[1], l[2], l[3]];
                    let (valid, margin) = validity(losses);
                    rows.push(GridRow {
                        tau_cov_deg: tau_cov,
                        tau_rev_deg: tau_rev,
                        beta_min: beta,
                        lambda,
                        loss_0: losses[0],
                        loss_1: losses[1],
                        loss_2: losses[2],
                        loss_3: losses[3],
                        valid,
                        margin,
                    });
                }
            }
        }
    }
    rows
}

pub fn write_rows(path: &std::path::Path, rows: &[GridRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}
