//! Truncated univariate Taylor series `Σ c_k t^k`, k ≤ order.
//!
//! Jets over [`Real`] scalars are themselves [`Real`], so every closed-form
//! map and roof evaluator doubles as a jet evaluator.

use crate::hp::Real;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Debug)]
pub struct Jet<T> {
    pub c: Vec<T>,
    /// True when only the constant term can be nonzero (fast paths).
    konst: bool,
}

impl<T: Real> Jet<T> {
    pub fn constant(x: T, order: usize) -> Self {
        let z = x.zero();
        let mut c = vec![z; order + 1];
        c[0] = x;
        Jet { c, konst: true }
    }

    /// The jet of `t ↦ x0 + t`.
    pub fn variable(x0: T, order: usize) -> Self {
        let mut j = Jet::constant(x0, order);
        if order >= 1 {
            j.c[1] = j.c[0].one();
            j.konst = false;
        }
        j
    }

    pub fn from_coeffs(c: Vec<T>) -> Self {
        assert!(!c.is_empty());
        Jet { c, konst: false }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> &T {
        &self.c[0]
    }

    pub fn coeff(&self, k: usize) -> T {
        if k < self.c.len() {
            self.c[k].clone()
        } else {
            self.c[0].zero()
        }
    }

    /// `t ↦ f(s t)`: multiplies the k-th coefficient by s^k.
    pub fn rescale(&self, s: &T) -> Self {
        let mut pw = s.one();
        let mut out = Vec::with_capacity(self.c.len());
        for ck in &self.c {
            out.push(ck.clone() * pw.clone());
            pw = pw * s.clone();
        }
        Jet { c: out, konst: self.konst }
    }

    /// Derivative jet (order drops by one, padded back with zero).
    pub fn deriv(&self) -> Self {
        let n = self.c.len();
        let mut out = Vec::with_capacity(n);
        for k in 1..n {
            out.push(self.c[k].clone() * self.c[0].int(k as i64));
        }
        out.push(self.c[0].zero());
        Jet { c: out, konst: false }
    }

    /// Horner evaluation at a scalar.
    pub fn eval(&self, t: &T) -> T {
        let mut acc = self.c[self.c.len() - 1].clone();
        for k in (0..self.c.len() - 1).rev() {
            acc = acc * t.clone() + self.c[k].clone();
        }
        acc
    }

    pub fn scale(&self, s: &T) -> Self {
        Jet { c: self.c.iter().map(|x| x.clone() * s.clone()).collect(), konst: self.konst }
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut c = self.c.clone();
        c.truncate(order + 1);
        while c.len() < order + 1 {
            c.push(self.c[0].zero());
        }
        Jet { c, konst: self.konst }
    }

    fn zip(&self, o: &Self, f: impl Fn(T, T) -> T) -> Self {
        let n = self.c.len().min(o.c.len());
        let c = (0..n).map(|k| f(self.c[k].clone(), o.c[k].clone())).collect();
        Jet { c, konst: self.konst && o.konst }
    }

    fn map_const(&self, v: T) -> Self {
        let mut c: Vec<T> = vec![v.zero(); self.c.len()];
        c[0] = v;
        Jet { c, konst: true }
    }
}

impl<T: Real> Add for Jet<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.zip(&o, |a, b| a + b)
    }
}

impl<T: Real> Sub for Jet<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.zip(&o, |a, b| a - b)
    }
}

impl<T: Real> Neg for Jet<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Jet { c: self.c.into_iter().map(|x| -x).collect(), konst: self.konst }
    }
}

impl<T: Real> Mul for Jet<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let n = self.c.len().min(o.c.len());
        if o.konst {
            let s = o.c[0].clone();
            return Jet { c: self.c[..n].iter().map(|x| x.clone() * s.clone()).collect(), konst: self.konst };
        }
        if self.konst {
            let s = self.c[0].clone();
            return Jet { c: o.c[..n].iter().map(|x| s.clone() * x.clone()).collect(), konst: false };
        }
        let mut c = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = self.c[0].clone() * o.c[k].clone();
            for j in 1..=k {
                acc = acc + self.c[j].clone() * o.c[k - j].clone();
            }
            c.push(acc);
        }
        Jet { c, konst: false }
    }
}

impl<T: Real> Div for Jet<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let n = self.c.len().min(o.c.len());
        if o.konst {
            let s = o.c[0].clone();
            return Jet { c: self.c[..n].iter().map(|x| x.clone() / s.clone()).collect(), konst: self.konst };
        }
        let b0 = o.c[0].clone();
        let mut q: Vec<T> = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = self.c[k].clone();
            for j in 1..=k {
                acc = acc - o.c[j].clone() * q[k - j].clone();
            }
            q.push(acc / b0.clone());
        }
        Jet { c: q, konst: false }
    }
}

impl<T: Real> Real for Jet<T> {
    fn lit(&self, x: f64) -> Self {
        self.map_const(self.c[0].lit(x))
    }
    fn int(&self, n: i64) -> Self {
        self.map_const(self.c[0].int(n))
    }
    fn sin_cos_2pi(&self) -> (Self, Self) {
        let (s0, c0) = self.c[0].sin_cos_2pi();
        if self.konst {
            return (self.map_const(s0), self.map_const(c0));
        }
        let tau = self.c[0].tau();
        let a: Vec<T> = self.c.iter().map(|x| x.clone() * tau.clone()).collect();
        let n = a.len();
        let mut s = vec![s0];
        let mut c = vec![c0];
        for k in 1..n {
            let mut sk = a[0].zero();
            let mut ck = a[0].zero();
            for j in 1..=k {
                let w = a[j].clone() * a[0].int(j as i64);
                sk = sk + w.clone() * c[k - j].clone();
                ck = ck - w * s[k - j].clone();
            }
            let kk = a[0].int(k as i64);
            s.push(sk / kk.clone());
            c.push(ck / kk);
        }
        (Jet { c: s, konst: false }, Jet { c, konst: false })
    }
    fn exp(&self) -> Self {
        let e0 = self.c[0].exp();
        if self.konst {
            return self.map_const(e0);
        }
        let n = self.c.len();
        let mut e = vec![e0];
        for k in 1..n {
            let mut acc = self.c[0].zero();
            for j in 1..=k {
                acc = acc + self.c[j].clone() * self.c[0].int(j as i64) * e[k - j].clone();
            }
            e.push(acc / self.c[0].int(k as i64));
        }
        Jet { c: e, konst: false }
    }
    fn ln(&self) -> Self {
        let l0 = self.c[0].ln();
        if self.konst {
            return self.map_const(l0);
        }
        let n = self.c.len();
        let a0 = self.c[0].clone();
        let mut l = vec![l0];
        for k in 1..n {
            let mut acc = self.c[k].clone();
            for j in 1..k {
                acc = acc - l[j].clone() * self.c[0].int(j as i64) * self.c[k - j].clone() / self.c[0].int(k as i64);
            }
            l.push(acc / a0.clone());
        }
        Jet { c: l, konst: false }
    }
    fn sqrt(&self) -> Self {
        let r0 = self.c[0].sqrt();
        if self.konst {
            return self.map_const(r0);
        }
        let n = self.c.len();
        let mut r = vec![r0.clone()];
        for k in 1..n {
            let mut acc = self.c[k].clone();
            for j in 1..k {
                acc = acc - r[j].clone() * r[k - j].clone();
            }
            r.push(acc / (r0.clone() * self.c[0].int(2)));
        }
        Jet { c: r, konst: false }
    }
    fn tau(&self) -> Self {
        self.map_const(self.c[0].tau())
    }
    fn to_f64(&self) -> f64 {
        self.c[0].to_f64()
    }
    fn log2_mag(&self) -> f64 {
        self.c.iter().map(|x| x.log2_mag()).fold(f64::NEG_INFINITY, f64::max)
    }
    fn eps_log2(&self) -> f64 {
        self.c[0].eps_log2()
    }
    fn from_float(&self, x: &rug::Float) -> Self {
        self.map_const(self.c[0].from_float(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn sin_series_matches_taylor() {
        // sin(2π(0.1 + t)) coefficients: derivatives / k!
        let j = Jet::variable(0.1f64, 4);
        let (s, c) = j.sin_cos_2pi();
        let w = std::f64::consts::TAU;
        let a = w * 0.1;
        assert!(close(s.c[0], a.sin()));
        assert!(close(s.c[1], w * a.cos()));
        assert!(close(s.c[2], -w * w * a.sin() / 2.0));
        assert!(close(c.c[3], w.powi(3) * a.sin() / 6.0));
    }

    #[test]
    fn exp_ln_inverse() {
        let j = Jet::from_coeffs(vec![0.3f64, 0.7, -0.2, 0.05, 0.01]);
        let back = j.exp().ln();
        for k in 0..5 {
            assert!(close(back.c[k], j.c[k]), "k={k}");
        }
    }

    #[test]
    fn div_mul_roundtrip() {
        let a = Jet::from_coeffs(vec![1.5f64, -0.3, 0.2, 0.9]);
        let b = Jet::from_coeffs(vec![2.0f64, 0.1, -0.4, 0.3]);
        let q = a.clone() / b.clone();
        let back = q * b;
        for k in 0..4 {
            assert!(close(back.c[k], a.c[k]));
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let a = Jet::from_coeffs(vec![4.0f64, 1.0, 0.5, -0.25]);
        let r = a.sqrt();
        let back = r.clone() * r;
        for k in 0..4 {
            assert!(close(back.c[k], a.c[k]));
        }
    }

    #[test]
    fn rescale_and_eval() {
        let a = Jet::from_coeffs(vec![1.0f64, 2.0, 3.0]);
        assert!(close(a.rescale(&2.0).eval(&0.5), a.eval(&1.0)));
        assert!(close(a.deriv().eval(&1.0), 2.0 + 6.0));
    }
}
