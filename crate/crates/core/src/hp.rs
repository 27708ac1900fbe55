//! Scalar abstraction over `f64`, MPFR floats and truncated jets, plus small
//! 2-vector / 2x2 matrix helpers used everywhere in the lab.

use rug::float::Constant;
use rug::Float;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Default significand width for period arithmetic.
pub const DEFAULT_PREC: u32 = 256;

/// Field-like scalar with the handful of transcendental functions the maps
/// and roofs need. Constants are produced "in the image" of an existing
/// value so that precision (or jet order) propagates implicitly.
pub trait Real:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Constant with the decimal value of `x` (shortest round-trip digits).
    fn lit(&self, x: f64) -> Self;
    fn int(&self, n: i64) -> Self;
    /// `(sin 2πx, cos 2πx)`.
    fn sin_cos_2pi(&self) -> (Self, Self);
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    /// The constant 2π.
    fn tau(&self) -> Self;
    /// Value (constant term for jets) as a double.
    fn to_f64(&self) -> f64;
    /// log2 of the largest component magnitude (-inf for zero).
    fn log2_mag(&self) -> f64;
    /// log2 of the unit roundoff.
    fn eps_log2(&self) -> f64;
    /// A multiprecision constant carried into this scalar type.
    fn from_float(&self, x: &Float) -> Self;

    fn zero(&self) -> Self {
        self.int(0)
    }
    fn one(&self) -> Self {
        self.int(1)
    }
}

impl Real for f64 {
    fn lit(&self, x: f64) -> Self {
        x
    }
    fn int(&self, n: i64) -> Self {
        n as f64
    }
    fn sin_cos_2pi(&self) -> (Self, Self) {
        (std::f64::consts::TAU * self).sin_cos()
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn tau(&self) -> Self {
        std::f64::consts::TAU
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn log2_mag(&self) -> f64 {
        self.abs().log2()
    }
    fn eps_log2(&self) -> f64 {
        -52.0
    }
    fn from_float(&self, x: &Float) -> Self {
        x.to_f64()
    }
}

impl Real for Float {
    fn lit(&self, x: f64) -> Self {
        dec(self.prec(), x)
    }
    fn int(&self, n: i64) -> Self {
        Float::with_val(self.prec(), n)
    }
    fn sin_cos_2pi(&self) -> (Self, Self) {
        let p = self.prec();
        let arg = Float::with_val(p, self * tau(p));
        let (s, c) = arg.sin_cos(Float::new(p));
        (s, c)
    }
    fn exp(&self) -> Self {
        self.clone().exp()
    }
    fn ln(&self) -> Self {
        self.clone().ln()
    }
    fn sqrt(&self) -> Self {
        self.clone().sqrt()
    }
    fn tau(&self) -> Self {
        tau(self.prec())
    }
    fn to_f64(&self) -> f64 {
        Float::to_f64(self)
    }
    fn log2_mag(&self) -> f64 {
        log2_abs(self)
    }
    fn eps_log2(&self) -> f64 {
        -(self.prec() as f64)
    }
    fn from_float(&self, x: &Float) -> Self {
        Float::with_val(self.prec(), x)
    }
}

/// Float holding the decimal number printed by `x` (so `0.01` is 1/100, not
/// the nearest double).
pub fn dec(prec: u32, x: f64) -> Float {
    if x == x.trunc() && x.abs() < 9.0e15 {
        return Float::with_val(prec, x as i64);
    }
    let s = format!("{x:e}");
    let parsed = Float::parse(&s).expect("f64 display is parseable");
    Float::with_val(prec, parsed)
}

pub fn fl(prec: u32, x: i64) -> Float {
    Float::with_val(prec, x)
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn tau(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi) * 2u32
}

/// Re-round to a new precision.
pub fn reprec(x: &Float, prec: u32) -> Float {
    Float::with_val(prec, x)
}

pub type V2<T> = [T; 2];
pub type M2<T> = [[T; 2]; 2];

pub fn v_add<T: Real>(a: &V2<T>, b: &V2<T>) -> V2<T> {
    [a[0].clone() + b[0].clone(), a[1].clone() + b[1].clone()]
}

pub fn v_sub<T: Real>(a: &V2<T>, b: &V2<T>) -> V2<T> {
    [a[0].clone() - b[0].clone(), a[1].clone() - b[1].clone()]
}

pub fn v_scale<T: Real>(s: &T, a: &V2<T>) -> V2<T> {
    [s.clone() * a[0].clone(), s.clone() * a[1].clone()]
}

pub fn dot<T: Real>(a: &V2<T>, b: &V2<T>) -> T {
    a[0].clone() * b[0].clone() + a[1].clone() * b[1].clone()
}

pub fn norm<T: Real>(a: &V2<T>) -> T {
    dot(a, a).sqrt()
}

pub fn mat_vec<T: Real>(m: &M2<T>, v: &V2<T>) -> V2<T> {
    [
        m[0][0].clone() * v[0].clone() + m[0][1].clone() * v[1].clone(),
        m[1][0].clone() * v[0].clone() + m[1][1].clone() * v[1].clone(),
    ]
}

pub fn mat_mul<T: Real>(a: &M2<T>, b: &M2<T>) -> M2<T> {
    let e = |i: usize, j: usize| a[i][0].clone() * b[0][j].clone() + a[i][1].clone() * b[1][j].clone();
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

pub fn det<T: Real>(m: &M2<T>) -> T {
    m[0][0].clone() * m[1][1].clone() - m[0][1].clone() * m[1][0].clone()
}

pub fn trace<T: Real>(m: &M2<T>) -> T {
    m[0][0].clone() + m[1][1].clone()
}

pub fn mat_inv<T: Real>(m: &M2<T>) -> M2<T> {
    let d = det(m);
    [
        [m[1][1].clone() / d.clone(), -(m[0][1].clone()) / d.clone()],
        [-(m[1][0].clone()) / d.clone(), m[0][0].clone() / d],
    ]
}

/// Solve `m x = b` by Cramer's rule.
pub fn solve2<T: Real>(m: &M2<T>, b: &V2<T>) -> V2<T> {
    let d = det(m);
    [
        (m[1][1].clone() * b[0].clone() - m[0][1].clone() * b[1].clone()) / d.clone(),
        (m[0][0].clone() * b[1].clone() - m[1][0].clone() * b[0].clone()) / d,
    ]
}

/// Coefficients of `v` in the basis given by the columns `c0`, `c1`.
pub fn coords<T: Real>(c0: &V2<T>, c1: &V2<T>, v: &V2<T>) -> V2<T> {
    let m = [[c0[0].clone(), c1[0].clone()], [c0[1].clone(), c1[1].clone()]];
    solve2(&m, v)
}

pub fn ident<T: Real>(proto: &T) -> M2<T> {
    [[proto.one(), proto.zero()], [proto.zero(), proto.one()]]
}

pub fn to_f64_v(v: &V2<Float>) -> [f64; 2] {
    [v[0].to_f64(), v[1].to_f64()]
}

pub fn v_reprec(v: &V2<Float>, prec: u32) -> V2<Float> {
    [reprec(&v[0], prec), reprec(&v[1], prec)]
}

pub fn m_reprec(m: &M2<Float>, prec: u32) -> M2<Float> {
    [
        [reprec(&m[0][0], prec), reprec(&m[0][1], prec)],
        [reprec(&m[1][0], prec), reprec(&m[1][1], prec)],
    ]
}

/// Max-norm of a float vector as a double (for convergence tests).
pub fn max_abs(v: &V2<Float>) -> Float {
    let a = Float::with_val(v[0].prec(), v[0].abs_ref());
    let b = Float::with_val(v[1].prec(), v[1].abs_ref());
    if a > b {
        a
    } else {
        b
    }
}

/// log2 of |x|, or -inf for zero; cheap magnitude probe.
pub fn log2_abs(x: &Float) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let (m, e) = x.to_f64_exp();
    m.abs().log2() + e as f64
}

/// Full-precision decimal rendering with an explicit digit count.
pub fn fmt_float(x: &Float) -> String {
    let digits = ((x.prec() as f64) * std::f64::consts::LOG10_2).floor() as usize;
    x.to_string_radix(10, Some(digits.max(2)))
}

/// Parse a decimal string produced by [`fmt_float`].
pub fn parse_float(prec: u32, s: &str) -> Option<Float> {
    Float::parse(s).ok().map(|p| Float::with_val(prec, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dec_is_decimal_exact() {
        let a = dec(256, 0.01);
        let b = Float::with_val(256, 1) / 100u32;
        assert_eq!(a, b);
        assert_eq!(dec(64, 3.0), 3);
    }

    #[test]
    fn sin_cos_quarter_turn() {
        let x = dec(200, 0.25);
        let (s, c) = x.sin_cos_2pi();
        assert!((s - 1u32).abs() < 1e-55);
        assert!(c.abs() < 1e-55);
    }

    #[test]
    fn solve_matches_inverse() {
        let m = [[2.0, 1.0], [1.0, 1.0]];
        let b = [3.0, 5.0];
        let x = solve2(&m, &b);
        let y = mat_vec(&mat_inv(&m), &b);
        assert!((x[0] - y[0]).abs() < 1e-14 && (x[1] - y[1]).abs() < 1e-14);
    }

    #[test]
    fn float_roundtrip_text() {
        let x = pi(256);
        let s = fmt_float(&x);
        let y = parse_float(256, &s).unwrap();
        assert!(log2_abs(&(x - y)) < -240.0);
    }
}
