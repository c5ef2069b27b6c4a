//! Fused evaluation of the relaxed loss and its gradient.
//!
//! Forward-mode duals over every slot would cost O(slots) per visibility
//! entry, so instead each satellite position is differentiated once with
//! respect to its own six local parameters (a 3×6 Jacobian per step) and
//! the loss is pulled back to the positions with a hand-written adjoint
//! of the noisy-OR / leaky-gap / LogSumExp chain. The generic path in
//! `problem.rs` computes the same quantity and serves as the oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{check_elements, ProblemError, RAD2DEG};
use super::LOCAL_SLOTS;
use crate::earth::{ecef_to_teme, teme_to_ecef, GroundTarget, TargetError};
use crate::grad::{asin_deriv, sigmoid_f64, Dual, GradientVector};
use crate::metrics::{leaky_gaps, lse_softmax};
use crate::orbit::{propagate, ElementSet};

use super::Problem;

/// Targets per parallel work item. Fixed so the reduction order, and hence
/// every bit of the result, does not depend on the thread count.
const CHUNK: usize = 32;

/// Sigmoid arguments below this give 1 − σ(x) == 1 in f64, so such pairs
/// can be skipped without changing any value.
const CULL_ARG: f64 = -40.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxedEval {
    pub loss: f64,
    pub soft_coverage: f64,
    pub soft_revisit_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub soft_coverage: f64,
    pub soft_revisit_min: f64,
    /// Raw gradient: a shared slot holds the sum over its members.
    pub grad: GradientVector,
}

struct Setup {
    n_sat: usize,
    n_steps: usize,
    dt_min: f64,
    // sigmoid argument = asin(s)·slope − offset, per branch
    slope_cov: f64,
    offset_cov: f64,
    slope_rev: f64,
    offset_rev: f64,
    inv_tau_cov: f64,
    inv_tau_rev: f64,
    shared: bool,
    beta: f64,
    s_cull: f64,
    g_cov: f64,
    g_rev: f64,
    weight_total: f64,
}

struct ChunkOut {
    per_target: Vec<(f64, f64)>,
    grad: Vec<[f64; 3]>,
}

/// Scratch buffers for one target.
struct Scratch {
    s: Vec<f64>,
    inv_dist: Vec<f64>,
    c_cov: Vec<f64>,
    c_rev: Vec<f64>,
    series_cov: Vec<f64>,
    series_rev: Vec<f64>,
    g_series_rev: Vec<f64>,
    prefix: Vec<f64>,
}

impl Scratch {
    fn new(n_sat: usize, n_steps: usize) -> Self {
        let nk = n_sat * n_steps;
        Self {
            s: vec![0.0; nk],
            inv_dist: vec![0.0; nk],
            c_cov: vec![0.0; nk],
            c_rev: vec![0.0; nk],
            series_cov: vec![0.0; n_steps],
            series_rev: vec![0.0; n_steps],
            g_series_rev: vec![0.0; n_steps],
            prefix: vec![0.0; n_sat + 1],
        }
    }
}

impl Problem {
    /// Relaxed loss and soft metrics without gradients.
    pub fn relaxed(&self, theta: &[f64]) -> Result<RelaxedEval, ProblemError> {
        self.relaxed_elements(&self.elements(theta)?)
    }

    pub fn relaxed_elements(&self, elements: &[ElementSet]) -> Result<RelaxedEval, ProblemError> {
        let sat_major = self.positions_ecef(elements)?;
        let n_sat = elements.len();
        let n_steps = self.times.len();
        let mut pos = vec![[0.0; 3]; n_sat * n_steps];
        for (i, sat) in sat_major.iter().enumerate() {
            for (k, p) in sat.iter().enumerate() {
                pos[k * n_sat + i] = *p;
            }
        }
        Ok(self.fused(&pos, n_sat, false)?.0)
    }

    /// Relaxed loss with its exact gradient over all slots.
    pub fn loss_and_grad(&self, theta: &[f64]) -> Result<LossEval, ProblemError> {
        self.spec.check_len(theta.len())?;
        let n_sat = self.spec.n_satellites();
        let n_steps = self.times.len();
        let epoch = self.window.epoch;
        let mut pos = vec![[0.0; 3]; n_sat * n_steps];
        // ∂(inertial position)/∂(local parameter), per (step, satellite)
        let mut jac = vec![[[0.0; LOCAL_SLOTS]; 3]; n_sat * n_steps];
        let mut plain = Vec::with_capacity(n_sat);
        let mut duals = Vec::with_capacity(n_sat);
        for i in 0..n_sat {
            let local = self.spec.local_theta(i, theta);
            let seeded: [Dual<LOCAL_SLOTS>; LOCAL_SLOTS] = std::array::from_fn(|l| Dual::variable(local[l], l));
            let el = self.spec.satellites[i].apply(&seeded, epoch);
            plain.push(el.values());
            duals.push(el);
        }
        check_elements(&plain)?;
        for (i, el) in duals.iter().enumerate() {
            for (k, &t) in self.times.iter().enumerate() {
                let r = propagate(el, t)
                    .map_err(|e| crate::orbit::OrbitError::Batch { satellite: i, step: k, source: Box::new(e) })?
                    .position;
                let idx = k * n_sat + i;
                pos[idx] = teme_to_ecef(&[r[0].v, r[1].v, r[2].v], self.angles[k]);
                for c in 0..3 {
                    jac[idx][c] = r[c].d;
                }
            }
        }
        let (eval, g_pos) = self.fused(&pos, n_sat, true)?;
        let g_pos = g_pos.expect("gradient requested");

        let mut grad = GradientVector::zeros(self.spec.n_slots());
        for i in 0..n_sat {
            let mut local = [0.0; LOCAL_SLOTS];
            for k in 0..n_steps {
                let idx = k * n_sat + i;
                let g = ecef_to_teme(&g_pos[idx], self.angles[k]);
                for c in 0..3 {
                    for (l, acc) in local.iter_mut().enumerate() {
                        *acc += g[c] * jac[idx][c][l];
                    }
                }
            }
            for (l, slot) in self.spec.satellites[i].local_slots().iter().enumerate() {
                if let Some(s) = *slot {
                    grad.0[s] += local[l];
                }
            }
        }
        if !grad.is_finite() {
            return Err(ProblemError::NonFinite("gradient"));
        }
        Ok(LossEval { loss: eval.loss, soft_coverage: eval.soft_coverage, soft_revisit_min: eval.soft_revisit_min, grad })
    }

    fn setup(&self, n_sat: usize) -> Setup {
        let r = &self.relax;
        let tau_max = r.tau_cov_deg.max(r.tau_rev_deg);
        let cull_deg = r.min_elevation_deg + CULL_ARG * tau_max;
        // a small margin keeps the test on s conservative against asin/sin rounding
        let s_cull = if cull_deg - 1e-6 <= -90.0 { f64::NEG_INFINITY } else { (cull_deg - 1e-6).to_radians().sin() };
        let n_steps = self.times.len();
        let w = self.targets.total_weight;
        Setup {
            n_sat,
            n_steps,
            dt_min: self.window.dt_min(),
            slope_cov: RAD2DEG / r.tau_cov_deg,
            offset_cov: r.min_elevation_deg / r.tau_cov_deg,
            slope_rev: RAD2DEG / r.tau_rev_deg,
            offset_rev: r.min_elevation_deg / r.tau_rev_deg,
            inv_tau_cov: 1.0 / r.tau_cov_deg,
            inv_tau_rev: 1.0 / r.tau_rev_deg,
            shared: r.shared_tau(),
            beta: r.beta_min,
            s_cull,
            g_cov: -r.coverage_weight / (w * n_steps as f64),
            g_rev: r.lambda / w,
            weight_total: w,
        }
    }

    /// `pos` is time-major: `pos[k * n_sat + i]`, Earth-fixed.
    fn fused(
        &self,
        pos: &[[f64; 3]],
        n_sat: usize,
        want_grad: bool,
    ) -> Result<(RelaxedEval, Option<Vec<[f64; 3]>>), ProblemError> {
        let st = self.setup(n_sat);
        let chunks: Vec<Result<ChunkOut, ProblemError>> = self
            .targets
            .targets
            .par_chunks(CHUNK)
            .map(|ts| {
                let mut scratch = Scratch::new(st.n_sat, st.n_steps);
                let mut out = ChunkOut {
                    per_target: Vec::with_capacity(ts.len()),
                    grad: if want_grad { vec![[0.0; 3]; pos.len()] } else { Vec::new() },
                };
                for t in ts {
                    let vals = forward_target(&st, t, pos, &mut scratch)?;
                    if want_grad {
                        backward_target(&st, t, pos, &mut scratch, &mut out.grad);
                    }
                    out.per_target.push(vals);
                }
                Ok(out)
            })
            .collect();

        let mut acc_cov = 0.0;
        let mut acc_rev = 0.0;
        let mut grad = if want_grad { Some(vec![[0.0; 3]; pos.len()]) } else { None };
        let mut j = 0;
        for chunk in chunks {
            let chunk = chunk?;
            for &(cov, worst) in &chunk.per_target {
                let w = self.targets.targets[j].weight;
                acc_cov += cov * w;
                acc_rev += worst * w;
                j += 1;
            }
            if let Some(g) = grad.as_mut() {
                for (a, b) in g.iter_mut().zip(&chunk.grad) {
                    a[0] += b[0];
                    a[1] += b[1];
                    a[2] += b[2];
                }
            }
        }
        let soft_coverage = acc_cov / st.weight_total;
        let soft_revisit_min = acc_rev / st.weight_total;
        let loss = -(soft_coverage * self.relax.coverage_weight) + soft_revisit_min * self.relax.lambda;
        if !loss.is_finite() {
            return Err(ProblemError::NonFinite("loss"));
        }
        Ok((RelaxedEval { loss, soft_coverage, soft_revisit_min }, grad))
    }
}

#[inline]
fn offset(p: &[f64; 3], t: &GroundTarget) -> ([f64; 3], f64) {
    let d = [p[0] - t.ecef[0], p[1] - t.ecef[1], p[2] - t.ecef[2]];
    (d, d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
}

/// Fills the scratch buffers for one target and returns (coverage, soft worst gap).
fn forward_target(st: &Setup, t: &GroundTarget, pos: &[[f64; 3]], sc: &mut Scratch) -> Result<(f64, f64), ProblemError> {
    let n = st.n_sat;
    for k in 0..st.n_steps {
        let mut miss_cov = 1.0;
        let mut miss_rev = 1.0;
        for i in 0..n {
            let idx = k * n + i;
            let (d, dist2) = offset(&pos[idx], t);
            if dist2 <= 0.0 {
                return Err(TargetError::Coincident.into());
            }
            let along = d[0] * t.up[0] + d[1] * t.up[1] + d[2] * t.up[2];
            let dist = dist2.sqrt();
            let s = along / dist;
            let s = if s > 1.0 {
                s - (s - 1.0)
            } else if s < -1.0 {
                s - (s + 1.0)
            } else {
                s
            };
            sc.s[idx] = s;
            sc.inv_dist[idx] = 1.0 / dist;
            if s < st.s_cull {
                sc.c_cov[idx] = 0.0;
                sc.c_rev[idx] = 0.0;
                continue;
            }
            let a = s.asin();
            let cc = sigmoid_f64(a * st.slope_cov - st.offset_cov);
            sc.c_cov[idx] = cc;
            miss_cov *= 1.0 - cc;
            if !st.shared {
                let cr = sigmoid_f64(a * st.slope_rev - st.offset_rev);
                sc.c_rev[idx] = cr;
                miss_rev *= 1.0 - cr;
            }
        }
        sc.series_cov[k] = 1.0 - miss_cov;
        sc.series_rev[k] = if st.shared { sc.series_cov[k] } else { 1.0 - miss_rev };
    }
    let mut sum = 0.0;
    for &c in &sc.series_cov {
        sum += c;
    }
    let cov = sum / st.n_steps as f64;
    let gaps = leaky_gaps(&sc.series_rev, st.dt_min);
    let worst = lse_softmax(&gaps, st.beta);

    // adjoint of the revisit branch down to the per-step coverage values
    if st.g_rev != 0.0 {
        let g_worst = st.g_rev * t.weight;
        let m = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &g in &gaps {
            z += ((g - m) / st.beta).exp();
        }
        let mut adj_next = 0.0;
        for k in (1..st.n_steps).rev() {
            let p = ((gaps[k] - m) / st.beta).exp() / z;
            let carry = if k + 1 < st.n_steps { adj_next * (1.0 - sc.series_rev[k + 1]) } else { 0.0 };
            let adj = p * g_worst + carry;
            sc.g_series_rev[k] = -adj * (gaps[k - 1] + st.dt_min);
            adj_next = adj;
        }
        sc.g_series_rev[0] = 0.0;
    } else {
        sc.g_series_rev.iter_mut().for_each(|g| *g = 0.0);
    }
    Ok((cov, worst))
}

/// Leave-one-out products Π_{l≠i}(1 − c_l) via prefix/suffix sweeps, so a
/// saturated c = 1 needs no division.
fn loo_factors(c: &[f64], prefix: &mut [f64], out: &mut [f64]) {
    let n = c.len();
    prefix[0] = 1.0;
    for i in 0..n {
        prefix[i + 1] = prefix[i] * (1.0 - c[i]);
    }
    let mut suffix = 1.0;
    for i in (0..n).rev() {
        out[i] = prefix[i] * suffix;
        suffix *= 1.0 - c[i];
    }
}

fn backward_target(st: &Setup, t: &GroundTarget, pos: &[[f64; 3]], sc: &mut Scratch, grad: &mut [[f64; 3]]) {
    let n = st.n_sat;
    let g_cov = st.g_cov * t.weight;
    let mut loo_cov = vec![0.0; n];
    let mut loo_rev = vec![0.0; n];
    for k in 0..st.n_steps {
        let row = k * n..(k + 1) * n;
        let g_rev = sc.g_series_rev[k];
        if sc.s[row.clone()].iter().all(|&s| s < st.s_cull) {
            continue;
        }
        loo_factors(&sc.c_cov[row.clone()], &mut sc.prefix, &mut loo_cov);
        if !st.shared {
            loo_factors(&sc.c_rev[row.clone()], &mut sc.prefix, &mut loo_rev);
        }
        for i in 0..n {
            let idx = k * n + i;
            let s = sc.s[idx];
            if s < st.s_cull {
                continue;
            }
            let cc = sc.c_cov[idx];
            let g_alpha = if st.shared {
                (g_cov + g_rev) * loo_cov[i] * cc * (1.0 - cc) * st.inv_tau_cov
            } else {
                let cr = sc.c_rev[idx];
                g_cov * loo_cov[i] * cc * (1.0 - cc) * st.inv_tau_cov + g_rev * loo_rev[i] * cr * (1.0 - cr) * st.inv_tau_rev
            };
            if g_alpha == 0.0 {
                continue;
            }
            let g_s = g_alpha * RAD2DEG * asin_deriv(s);
            // ∂s/∂r = (ĝ − s·u)/|d| with u = d/|d|
            let (d, _) = offset(&pos[idx], t);
            let inv = sc.inv_dist[idx];
            let scale = g_s * inv;
            let su = s * inv;
            let g = &mut grad[idx];
            for c in 0..3 {
                g[c] += scale * (t.up[c] - su * d[c]);
            }
        }
    }
}
