use serde::{Deserialize, Serialize};

use super::{OptimError, RunTrace, Snapshot, TraceRow};
use crate::objective::{plane_average_grads, Problem};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay; left at 0 so periodic angles are not pulled toward 0.
    pub weight_decay: f64,
    pub iterations: usize,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, iterations: 1000 }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(OptimError::Config(format!("bad AdamW settings {self:?}")));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(OptimError::Config(format!("bad AdamW settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl AdamWState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &AdamWConfig) -> Result<(), OptimError> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient { iter: self.t as usize });
        }
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps)) + cfg.lr * cfg.weight_decay * theta[i];
        }
        Ok(())
    }
}

/// Keep every iterate for short runs, every fifth beyond 2000 iterations.
fn keep_snapshot(t: usize, n: usize) -> bool {
    n <= 2000 || t % 5 == 0 || t == n
}

/// Gradient descent on the relaxed loss: loss → per-plane gradient
/// averaging → AdamW. Row `t` of the trace describes iterate θ_t, so a
/// run of `n` iterations has `n + 1` rows; `evals` counts forward+backward
/// passes. Hard metrics are computed for every row but not counted.
pub fn run_gradient(theta0: &[f64], problem: &Problem, cfg: &AdamWConfig) -> Result<RunTrace, OptimError> {
    run_gradient_with(theta0, problem, cfg, |_, _| {})
}

/// [`run_gradient`] with a per-row callback (progress reporting).
pub fn run_gradient_with(
    theta0: &[f64],
    problem: &Problem,
    cfg: &AdamWConfig,
    mut on_row: impl FnMut(&TraceRow, &[f64]),
) -> Result<RunTrace, OptimError> {
    cfg.validate()?;
    problem.spec.check_len(theta0.len()).map_err(|e| OptimError::Iteration { iter: 0, source: e.into() })?;
    let n = cfg.iterations;
    let mut theta = theta0.to_vec();
    let mut state = AdamWState::new(theta.len());
    let mut rows = Vec::with_capacity(n + 1);
    let mut snapshots = Vec::new();
    for t in 0..=n {
        let fail = |source| OptimError::Iteration { iter: t, source };
        let eval = problem.loss_and_grad(&theta).map_err(fail)?;
        let hard = problem.hard_metrics(&theta).map_err(fail)?;
        let row = TraceRow {
            iter: t,
            evals: t + 1,
            loss: eval.loss,
            soft_coverage: eval.soft_coverage,
            soft_revisit_min: eval.soft_revisit_min,
            hard_coverage: hard.coverage,
            hard_revisit_min: hard.revisit_min,
        };
        on_row(&row, &theta);
        rows.push(row);
        if keep_snapshot(t, n) {
            snapshots.push(Snapshot { iter: t, theta: theta.clone() });
        }
        if t == n {
            break;
        }
        let g = plane_average_grads(&eval.grad, &problem.spec);
        state.step(&mut theta, g.as_slice(), cfg).map_err(|_| OptimError::NonFiniteGradient { iter: t })?;
    }
    Ok(RunTrace { method: "adamw".into(), rows, snapshots, final_theta: theta })
}
