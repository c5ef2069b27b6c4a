//! Forward-mode multi-dual arithmetic and gradient extraction.
//!
//! Every numeric routine in the crate that must be differentiable is written
//! against the [`Real`] trait, so the same code runs on plain `f64` (fast
//! evaluation, black-box baselines) and on [`Dual`] (exact gradients over a
//! fixed number of seeded slots). The value channel of a `Dual` is computed
//! with exactly the same floating-point expressions as the `f64` path.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use thiserror::Error;

/// Largest |x| at which the asin derivative is evaluated. Beyond it the
/// derivative is frozen so exactly-overhead geometry stays finite.
pub const ASIN_DERIV_CLAMP: f64 = 1.0 - 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("{op}: argument {arg} outside the domain")]
    Domain { op: &'static str, arg: f64 },
    #[error("{op}: non-finite value {value}")]
    NonFinite { op: &'static str, value: f64 },
    #[error("seed_params: expected {expected} values, got {got}")]
    SlotCount { expected: usize, got: usize },
    #[error("finite difference probe {index} ({sign}h) gave a non-finite value")]
    ProbeNonFinite { index: usize, sign: char },
}

/// Scalar abstraction shared by `f64` and [`Dual`].
pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    /// Inverse sine with the derivative clamped at |x| = [`ASIN_DERIV_CLAMP`].
    fn asin(self) -> Self;
    /// `atan2(self, x)`.
    fn atan2(self, x: Self) -> Self;
    fn powf(self, p: f64) -> Self;
    /// Logistic sigmoid, evaluated without overflow for any argument.
    fn sigmoid(self) -> Self;

    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }

    fn checked_sqrt(self) -> Result<Self, GradError> {
        let v = self.value();
        if v > 0.0 {
            Ok(self.sqrt())
        } else {
            Err(GradError::Domain { op: "sqrt", arg: v })
        }
    }

    fn checked_ln(self) -> Result<Self, GradError> {
        let v = self.value();
        if v > 0.0 {
            Ok(self.ln())
        } else {
            Err(GradError::Domain { op: "log", arg: v })
        }
    }

    fn checked_asin(self) -> Result<Self, GradError> {
        let v = self.value();
        if (-1.0..=1.0).contains(&v) {
            Ok(self.asin())
        } else {
            Err(GradError::Domain { op: "asin", arg: v })
        }
    }

    fn checked_div(self, rhs: Self) -> Result<Self, GradError> {
        if rhs.value() == 0.0 {
            return Err(GradError::Domain { op: "div", arg: 0.0 });
        }
        Ok(self / rhs)
    }

    /// Returns the scalar unchanged if its value is finite.
    fn ensure_finite(self, op: &'static str) -> Result<Self, GradError> {
        let v = self.value();
        if v.is_finite() {
            Ok(self)
        } else {
            Err(GradError::NonFinite { op, value: v })
        }
    }
}

#[inline]
pub fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

#[inline]
pub(crate) fn asin_deriv(x: f64) -> f64 {
    let c = x.clamp(-ASIN_DERIV_CLAMP, ASIN_DERIV_CLAMP);
    1.0 / (1.0 - c * c).sqrt()
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn asin(self) -> Self {
        f64::asin(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    #[inline]
    fn sin_cos(self) -> (Self, Self) {
        (f64::sin(self), f64::cos(self))
    }
}

/// A value together with its partial derivatives over `N` seeded slots.
#[derive(Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> fmt::Debug for Dual<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({}, {:?})", self.v, &self.d[..])
    }
}

impl<const N: usize> Dual<N> {
    #[inline]
    pub fn new(v: f64, d: [f64; N]) -> Self {
        Self { v, d }
    }

    /// Independent variable occupying `slot`.
    pub fn variable(v: f64, slot: usize) -> Self {
        let mut d = [0.0; N];
        d[slot] = 1.0;
        Self { v, d }
    }

    /// Applies a unary function with value `v` and local derivative `dv`.
    #[inline]
    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x *= dv;
        }
        Self { v, d }
    }
}

/// Seeds one independent slot per input value.
pub fn seed_params<const N: usize>(values: &[f64]) -> Result<Vec<Dual<N>>, GradError> {
    if values.len() != N {
        return Err(GradError::SlotCount { expected: N, got: values.len() });
    }
    values
        .iter()
        .enumerate()
        .map(|(slot, &v)| {
            if v.is_finite() {
                Ok(Dual::variable(v, slot))
            } else {
                Err(GradError::NonFinite { op: "seed_params", value: v })
            }
        })
        .collect()
}

/// Per-slot partial derivatives, ordered by slot index.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

/// Full gradient of `output` over its seeded slots. A result that does not
/// depend on any slot yields the zero vector.
pub fn gradient<const N: usize>(output: &Dual<N>) -> GradientVector {
    GradientVector(output.d.to_vec())
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d.iter()) {
            *a += b;
        }
        Self { v: self.v + rhs.v, d }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d.iter()) {
            *a -= b;
        }
        Self { v: self.v - rhs.v, d }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Self { v: self.v * rhs.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let v = self.v / rhs.v;
        let inv = 1.0 / rhs.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x = -*x;
        }
        Self { v: -self.v, d }
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Self { v: self.v + rhs, d: self.d }
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Self { v: self.v - rhs, d: self.d }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x *= rhs;
        }
        Self { v: self.v * rhs, d }
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x /= rhs;
        }
        Self { v: self.v / rhs, d }
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const N: usize> MulAssign for Dual<N> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }
    #[inline]
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.chain(t, 1.0 - t * t)
    }
    fn asin(self) -> Self {
        self.chain(self.v.asin(), asin_deriv(self.v))
    }
    fn atan2(self, x: Self) -> Self {
        let v = self.v.atan2(x.v);
        let r2 = self.v * self.v + x.v * x.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (x.v * self.d[i] - self.v * x.d[i]) / r2;
        }
        Self { v, d }
    }
    fn powf(self, p: f64) -> Self {
        let v = self.v.powf(p);
        self.chain(v, p * self.v.powf(p - 1.0))
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.v);
        self.chain(s, s * (1.0 - s))
    }
    fn sin_cos(self) -> (Self, Self) {
        let (s, c) = self.v.sin_cos();
        (self.chain(s, c), self.chain(c, -s))
    }
}

/// Central-difference estimate of the gradient of `f` at `x`.
pub fn central_difference<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>, GradError>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() {
            return Err(GradError::ProbeNonFinite { index: i, sign: '+' });
        }
        if !fm.is_finite() {
            return Err(GradError::ProbeNonFinite { index: i, sign: '-' });
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Largest relative disagreement between `analytic` and a central-difference
/// gradient of `f`, each coordinate scaled by `max(|analytic|, 1e-8)`.
pub fn finite_diff_check<F>(f: F, x: &[f64], h: f64, analytic: &[f64]) -> Result<f64, GradError>
where
    F: Fn(&[f64]) -> f64,
{
    let numeric = central_difference(f, x, h)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1e-8))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d1(v: f64) -> Dual<1> {
        Dual::variable(v, 0)
    }

    #[test]
    fn seeding_and_basic_rules() {
        let x = seed_params::<1>(&[2.0]).unwrap();
        assert_eq!(gradient(&x[0]).0, vec![1.0]);

        let p = seed_params::<2>(&[1.0, 3.0]).unwrap();
        assert_eq!(gradient(&(p[0] * p[1])).0, vec![3.0, 1.0]);

        let s = seed_params::<1>(&[0.5]).unwrap()[0].sin();
        assert!((s.d[0] - 0.5f64.cos()).abs() < 1e-15);
        assert!((s.d[0] - 0.87758).abs() < 1e-5);
    }

    #[test]
    fn seeding_rejects_bad_input() {
        assert!(matches!(seed_params::<1>(&[f64::NAN]), Err(GradError::NonFinite { .. })));
        assert!(matches!(seed_params::<2>(&[1.0]), Err(GradError::SlotCount { .. })));
    }

    #[test]
    fn named_examples() {
        let s = d1(0.0).sigmoid();
        assert_eq!(s.v, 0.5);
        assert_eq!(s.d[0], 0.25);
        let a = Dual::<1>::constant(1.0).atan2(Dual::constant(0.0));
        assert_eq!(a.v, std::f64::consts::FRAC_PI_2);
        let l = d1(7.3).exp().ln();
        assert!((l.d[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sum_of_squares_and_independence() {
        let t = seed_params::<3>(&[1.0, 2.0, 3.0]).unwrap();
        let f = t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
        assert_eq!(gradient(&f).0, vec![2.0, 4.0, 6.0]);
        let g = t[0] * t[2];
        assert_eq!(gradient(&g).0[1], 0.0);
        let c = Dual::<3>::constant(4.0) * 2.0;
        assert_eq!(gradient(&c).0, vec![0.0; 3]);
    }

    #[test]
    fn lse_gradient_sums_to_one() {
        let vals = [0.3, -1.2, 2.5, 0.0];
        let t = seed_params::<4>(&vals).unwrap();
        let m = 2.5;
        let mut acc = Dual::<4>::constant(0.0);
        for x in &t {
            acc += (*x - m).exp();
        }
        let lse = acc.ln() + m;
        let g = gradient(&lse);
        assert!((g.0.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // softmax weights brute force
        let z: f64 = vals.iter().map(|v| f64::exp(*v)).sum();
        for (gi, v) in g.0.iter().zip(vals) {
            assert!((gi - v.exp() / z).abs() < 1e-14);
        }
    }

    #[test]
    fn asin_derivative_is_finite_at_the_pole() {
        for x in [1.0, -1.0, 1.0 - 1e-13, -1.0 + 1e-15] {
            let a = d1(x).asin();
            assert!(a.d[0].is_finite(), "x = {x}");
        }
        assert!(d1(1.0 + 1e-9).checked_asin().is_err());
        assert!(d1(-0.5).checked_sqrt().is_err());
        assert!(d1(0.0).checked_ln().is_err());
        let e = d1(f64::INFINITY).ensure_finite("loss").unwrap_err();
        assert!(e.to_string().contains("loss"));
    }

    type Unary = (&'static str, fn(Dual<1>) -> Dual<1>, fn(f64) -> f64, f64, f64);

    fn unary_ops() -> Vec<Unary> {
        vec![
            ("sqrt", |x| x.sqrt(), |x| x.sqrt(), 0.1, 50.0),
            ("exp", |x| x.exp(), |x| x.exp(), -5.0, 5.0),
            ("log", |x| x.ln(), |x| x.ln(), 0.1, 50.0),
            ("sin", |x| x.sin(), |x| x.sin(), -6.0, 6.0),
            ("cos", |x| x.cos(), |x| x.cos(), -6.0, 6.0),
            ("tanh", |x| x.tanh(), |x| x.tanh(), -4.0, 4.0),
            ("asin", |x| x.asin(), |x| x.asin(), -0.95, 0.95),
            ("sigmoid", |x| x.sigmoid(), sigmoid_f64, -10.0, 10.0),
            ("pow", |x| x.powf(1.7), |x| x.powf(1.7), 0.1, 10.0),
            ("recip", |x| Dual::constant(1.0) / x, |x| 1.0 / x, 0.2, 10.0),
            ("neg-mul", |x| -(x * x * 3.0), |x| -(x * x * 3.0), -5.0, 5.0),
        ]
    }

    #[test]
    fn elementary_ops_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (name, fd, ff, lo, hi) in unary_ops() {
            for _ in 0..100 {
                let x: f64 = rng.random_range(lo..hi);
                let h = 1e-6 * x.abs().max(1.0);
                let num = (ff(x + h) - ff(x - h)) / (2.0 * h);
                let an = fd(d1(x));
                assert_eq!(an.v, ff(x), "{name}: value channel");
                let rel = (an.d[0] - num).abs() / an.d[0].abs().max(1e-8);
                assert!(rel < 1e-6, "{name} at {x}: {} vs {num}", an.d[0]);
            }
        }
    }

    #[test]
    fn binary_ops_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ops: Vec<(&str, fn(Dual<2>, Dual<2>) -> Dual<2>, fn(f64, f64) -> f64)> = vec![
            ("add", |a, b| a + b, |a, b| a + b),
            ("sub", |a, b| a - b, |a, b| a - b),
            ("mul", |a, b| a * b, |a, b| a * b),
            ("div", |a, b| a / b, |a, b| a / b),
            ("atan2", |a, b| a.atan2(b), f64::atan2),
        ];
        for (name, fd, ff) in ops {
            for _ in 0..100 {
                let x: f64 = rng.random_range(-5.0..5.0);
                let mut y: f64 = rng.random_range(-5.0..5.0);
                if y.abs() < 0.3 {
                    y += 1.0;
                }
                let p = seed_params::<2>(&[x, y]).unwrap();
                let an = fd(p[0], p[1]);
                assert_eq!(an.v, ff(x, y));
                let hx = 1e-6 * x.abs().max(1.0);
                let hy = 1e-6 * y.abs().max(1.0);
                let nx = (ff(x + hx, y) - ff(x - hx, y)) / (2.0 * hx);
                let ny = (ff(x, y + hy) - ff(x, y - hy)) / (2.0 * hy);
                for (a, n) in [(an.d[0], nx), (an.d[1], ny)] {
                    assert!((a - n).abs() / a.abs().max(1e-8) < 1e-6, "{name}");
                }
            }
        }
    }

    #[test]
    fn gradient_is_linear() {
        let p = seed_params::<2>(&[0.7, -1.3]).unwrap();
        let f = p[0].sin() * p[1];
        let g = p[0].exp() + p[1] * p[1];
        let (a, b) = (2.5, -0.75);
        let combo = gradient(&(f * a + g * b));
        let (gf, gg) = (gradient(&f), gradient(&g));
        for i in 0..2 {
            assert!((combo.0[i] - (a * gf.0[i] + b * gg.0[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn finite_diff_check_examples() {
        let err = finite_diff_check(|x| x[0] * x[0], &[3.0], 1e-5, &[6.0]).unwrap();
        assert!(err < 1e-8);
        let err = finite_diff_check(|_| 4.0, &[1.0, 2.0], 1e-5, &[0.0, 0.0]).unwrap();
        assert_eq!(err, 0.0);
        let bad = finite_diff_check(|x| if x[0] > 1.0 { f64::NAN } else { 0.0 }, &[1.0], 1e-3, &[0.0]);
        assert!(matches!(bad, Err(GradError::ProbeNonFinite { index: 0, sign: '+' })));
    }
}
