use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::objective::Problem;
use crate::optim::RunTrace;

/// One grid axis over a single parameter slot, in θ units (radians for
/// angle slots). Both ends are included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub slot: usize,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.lower, self.upper, self.n)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Loss values at one point of a 2-D slice. `x`, `y` are the slice
/// coordinates (slot values, or offsets along the slice directions).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub relaxed_loss: f64,
    pub hard_loss: f64,
    pub hard_coverage: f64,
    pub hard_revisit_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub iter: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Landscape {
    pub cells: Vec<Cell>,
    /// Optimizer path in the slice coordinates, when a trace was given.
    pub trajectory: Vec<Point2>,
}

fn evaluate(problem: &Problem, theta: &[f64], i: usize, j: usize, x: f64, y: f64) -> Result<Cell, HarnessError> {
    let relaxed = problem.relaxed(theta)?;
    let hard = problem.hard_metrics(theta)?;
    Ok(Cell {
        i,
        j,
        x,
        y,
        relaxed_loss: relaxed.loss,
        hard_loss: hard.loss(problem.relax.lambda),
        hard_coverage: hard.coverage,
        hard_revisit_min: hard.revisit_min,
    })
}

/// Relaxed and hard loss on a grid over two slots, all other slots held at
/// `base`. Rows are ordered with the first axis outermost. Periodic slots
/// in the trajectory overlay are wrapped into the axis' 2π window.
pub fn landscape_grid(
    problem: &Problem,
    base: &[f64],
    axes: [Axis; 2],
    trace: Option<&RunTrace>,
) -> Result<Landscape, HarnessError> {
    problem.spec.check_len(base.len())?;
    for a in &axes {
        if a.slot >= base.len() {
            return Err(HarnessError::Landscape(format!("axis slot {} not in a {}-slot spec", a.slot, base.len())));
        }
        if a.n == 0 || !(a.lower <= a.upper) {
            return Err(HarnessError::Landscape(format!("bad axis {a:?}")));
        }
    }
    if axes[0].slot == axes[1].slot {
        return Err(HarnessError::Landscape("the two axes must use different slots".into()));
    }
    let (xs, ys) = (axes[0].values(), axes[1].values());
    let jobs: Vec<(usize, usize)> = (0..xs.len()).flat_map(|i| (0..ys.len()).map(move |j| (i, j))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(i, j)| {
            let mut theta = base.to_vec();
            theta[axes[0].slot] = xs[i];
            theta[axes[1].slot] = ys[j];
            evaluate(problem, &theta, i, j, xs[i], ys[j])
        })
        .collect::<Result<Vec<_>, _>>()?;

    let place = |slot: usize, lower: f64, v: f64| {
        if problem.spec.is_periodic(slot) {
            lower + (v - lower).rem_euclid(std::f64::consts::TAU)
        } else {
            v
        }
    };
    let trajectory = trace
        .map(|t| {
            t.snapshots
                .iter()
                .map(|s| Point2 {
                    iter: s.iter,
                    x: place(axes[0].slot, axes[0].lower, s.theta[axes[0].slot]),
                    y: place(axes[1].slot, axes[1].lower, s.theta[axes[1].slot]),
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(Landscape { cells, trajectory })
}

/// Loss on the affine slice `origin + x·d1 + y·d2`.
pub fn plane_slice(
    problem: &Problem,
    origin: &[f64],
    d1: &[f64],
    d2: &[f64],
    xs: &[f64],
    ys: &[f64],
) -> Result<Vec<Cell>, HarnessError> {
    problem.spec.check_len(origin.len())?;
    if d1.len() != origin.len() || d2.len() != origin.len() {
        return Err(HarnessError::Landscape("slice directions must match θ length".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..xs.len()).flat_map(|i| (0..ys.len()).map(move |j| (i, j))).collect();
    jobs.par_iter()
        .map(|&(i, j)| {
            let theta: Vec<f64> = (0..origin.len()).map(|k| origin[k] + xs[i] * d1[k] + ys[j] * d2[k]).collect();
            evaluate(problem, &theta, i, j, xs[i], ys[j])
        })
        .collect()
}

/// Two unit-norm Gaussian directions. No filter normalization: every slot
/// is a physical quantity of comparable scale.
pub fn random_directions(dim: usize, seed: u64) -> [Vec<f64>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    [draw(), draw()]
}

/// Global view around a reference point along two random directions,
/// offsets in [−span, span].
pub fn random_slice(problem: &Problem, center: &[f64], span: f64, n: usize, seed: u64) -> Result<Vec<Cell>, HarnessError> {
    let [d1, d2] = random_directions(center.len(), seed);
    let v = linspace(-span, span, n);
    plane_slice(problem, center, &d1, &d2, &v, &v)
}

/// Top two principal directions of an iterate sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    pub singular_values: [f64; 2],
    /// Fraction of total variance along each component.
    pub explained: [f64; 2],
}

impl PcaBasis {
    pub fn project(&self, theta: &[f64]) -> (f64, f64) {
        let dot = |c: &[f64]| theta.iter().zip(&self.mean).zip(c).map(|((t, m), c)| (t - m) * c).sum::<f64>();
        (dot(&self.components[0]), dot(&self.components[1]))
    }

    pub fn lift(&self, x: f64, y: f64) -> Vec<f64> {
        (0..self.mean.len()).map(|k| self.mean[k] + x * self.components[0][k] + y * self.components[1][k]).collect()
    }
}

/// PCA of the mean-centred iterate matrix via SVD. Component signs are
/// fixed so the largest-magnitude entry is positive.
pub fn pca_basis(iterates: &[Vec<f64>]) -> Result<PcaBasis, HarnessError> {
    let t = iterates.len();
    let n = iterates.first().map_or(0, Vec::len);
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for x in iterates {
        if x.len() != n {
            return Err(HarnessError::Pca("iterates differ in length".into()));
        }
        if !distinct.contains(&x) {
            distinct.push(x);
            if distinct.len() >= 3 {
                break;
            }
        }
    }
    if distinct.len() < 3 {
        return Err(HarnessError::Pca(format!("need at least 3 distinct iterates, got {}", distinct.len())));
    }
    let mean: Vec<f64> = (0..n).map(|k| iterates.iter().map(|x| x[k]).sum::<f64>() / t as f64).collect();
    let m = DMatrix::from_fn(t, n, |r, c| iterates[r][c] - mean[c]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(HarnessError::Pca("trajectory has rank 0".into()));
    }
    let component = |r: usize| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|c| v_t[(r, c)]).collect();
        let big = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let s = |i: usize| order.get(i).map_or(0.0, |&r| svd.singular_values[r]);
    let second = if order.len() > 1 { component(order[1]) } else { vec![0.0; n] };
    Ok(PcaBasis {
        mean,
        components: [component(order[0]), second],
        singular_values: [s(0), s(1)],
        explained: [s(0) * s(0) / total, s(1) * s(1) / total],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaSlice {
    pub basis: PcaBasis,
    pub cells: Vec<Cell>,
    pub trajectory: Vec<Point2>,
}

/// Loss on the plane of a trajectory's top two principal directions,
/// covering the projected trajectory's bounding box plus a 20 % margin.
pub fn pca_slice(trace: &RunTrace, problem: &Problem, resolution: usize) -> Result<PcaSlice, HarnessError> {
    if resolution == 0 {
        return Err(HarnessError::Pca("resolution must be positive".into()));
    }
    let basis = pca_basis(&trace.iterates())?;
    let trajectory: Vec<Point2> = trace
        .snapshots
        .iter()
        .map(|s| {
            let (x, y) = basis.project(&s.theta);
            Point2 { iter: s.iter, x, y }
        })
        .collect();
    let range = |f: fn(&Point2) -> f64| {
        let lo = trajectory.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = trajectory.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (x0, x1) = range(|p| p.x);
    let (y0, y1) = range(|p| p.y);
    // a flat second direction borrows the first one's extent
    let wx = x1 - x0;
    let wy = if y1 - y0 > 1e-9 * wx { y1 - y0 } else { wx };
    let (cy, wy_half) = (0.5 * (y0 + y1), 0.5 * wy);
    let xs = linspace(x0 - 0.2 * wx, x1 + 0.2 * wx, resolution);
    let ys = linspace(cy - wy_half * 1.4, cy + wy_half * 1.4, resolution);
    let cells = plane_slice(problem, &basis.mean, &basis.components[0], &basis.components[1], &xs, &ys)?;
    Ok(PcaSlice { basis, cells, trajectory })
}

pub fn write_cells(path: &std::path::Path, cells: &[Cell]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_points(path: &std::path::Path, points: &[Point2]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Snapshot;

    fn trace_of(iterates: Vec<Vec<f64>>) -> RunTrace {
        RunTrace {
            method: "test".into(),
            rows: Vec::new(),
            final_theta: iterates.last().unwrap().clone(),
            snapshots: iterates.into_iter().enumerate().map(|(iter, theta)| Snapshot { iter, theta }).collect(),
        }
    }

    #[test]
    fn straight_line_is_one_component() {
        let dir = [1.0, 2.0, -2.0];
        let its: Vec<Vec<f64>> = (0..6).map(|t| dir.iter().map(|d| 0.5 + d * t as f64).collect()).collect();
        let b = pca_basis(&its).unwrap();
        assert!((b.explained[0] - 1.0).abs() < 1e-12);
        for (t, x) in its.iter().enumerate() {
            let (p, q) = b.project(x);
            assert!((p - 3.0 * (t as f64 - 2.5)).abs() < 1e-9 && q.abs() < 1e-9, "{p} {q}");
        }
    }

    #[test]
    fn components_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let its: Vec<Vec<f64>> = (0..20).map(|_| (0..7).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let b = pca_basis(&its).unwrap();
        let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        assert!((dot(&b.components[0], &b.components[0]) - 1.0).abs() < 1e-12);
        assert!((dot(&b.components[1], &b.components[1]) - 1.0).abs() < 1e-12);
        assert!(dot(&b.components[0], &b.components[1]).abs() < 1e-12);
        assert!(b.singular_values[0] >= b.singular_values[1]);
    }

    #[test]
    fn planar_trajectory_is_reconstructed_exactly() {
        // four points in a 2-D affine plane of R^5
        let (u, v, o) = ([1.0, 0.0, 2.0, -1.0, 0.5], [0.0, 1.0, -1.0, 3.0, 1.0], [0.3, 0.1, -0.2, 0.7, 0.0]);
        let coeffs = [(0.0, 0.0), (1.0, 0.5), (-2.0, 1.5), (0.7, -1.1)];
        let its: Vec<Vec<f64>> =
            coeffs.iter().map(|(a, b)| (0..5).map(|k| o[k] + a * u[k] + b * v[k]).collect()).collect();
        let basis = pca_basis(&its).unwrap();
        // oracle: the trailing singular values of the centred matrix vanish
        let mean: Vec<f64> = (0..5).map(|k| its.iter().map(|x| x[k]).sum::<f64>() / 4.0).collect();
        let m = DMatrix::from_fn(4, 5, |r, c| its[r][c] - mean[c]);
        let sv = m.singular_values();
        let mut sorted: Vec<f64> = sv.iter().copied().collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert!(sorted[2] < 1e-12);
        for x in &its {
            let (p, q) = basis.project(x);
            let back = basis.lift(p, q);
            assert!(back.iter().zip(x).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn degenerate_trajectories_are_rejected() {
        assert!(pca_basis(&vec![vec![1.0, 2.0]; 5]).is_err());
        assert!(pca_basis(&[vec![1.0, 2.0], vec![1.0, 3.0], vec![1.0, 2.0]]).is_err());
        let t = trace_of(vec![vec![0.0, 0.0]; 4]);
        assert!(pca_basis(&t.iterates()).is_err());
    }

    #[test]
    fn random_directions_are_unit_and_seeded() {
        let [a, b] = random_directions(30, 3);
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((b.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(random_directions(30, 3), [a, b]);
    }
}
