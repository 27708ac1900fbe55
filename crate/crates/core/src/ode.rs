//! Autonomous ODE integration in `f64`: an adaptive Dormand-Prince 5(4)
//! pair with event location by bisection, plus a three-variable dual number
//! used to get Jacobians of vector fields.

use crate::error::{LabError, Result};
use serde::Serialize;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value with gradient in three variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual3 {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual3 {
    pub fn cst(v: f64) -> Self {
        Dual3 { v, d: [0.0; 3] }
    }

    pub fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; 3];
        d[i] = 1.0;
        Dual3 { v, d }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        Dual3 { v, d: [self.d[0] * dv, self.d[1] * dv, self.d[2] * dv] }
    }

    pub fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }

    pub fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }

    pub fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn scale(self, c: f64) -> Self {
        self.chain(self.v * c, c)
    }
}

impl Add for Dual3 {
    type Output = Dual3;
    fn add(self, o: Dual3) -> Dual3 {
        Dual3 { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]] }
    }
}

impl Sub for Dual3 {
    type Output = Dual3;
    fn sub(self, o: Dual3) -> Dual3 {
        Dual3 { v: self.v - o.v, d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]] }
    }
}

impl Mul for Dual3 {
    type Output = Dual3;
    fn mul(self, o: Dual3) -> Dual3 {
        let d = [0, 1, 2].map(|i| self.d[i] * o.v + self.v * o.d[i]);
        Dual3 { v: self.v * o.v, d }
    }
}

impl Div for Dual3 {
    type Output = Dual3;
    fn div(self, o: Dual3) -> Dual3 {
        let q = self.v / o.v;
        let d = [0, 1, 2].map(|i| (self.d[i] - q * o.d[i]) / o.v);
        Dual3 { v: q, d }
    }
}

impl Neg for Dual3 {
    type Output = Dual3;
    fn neg(self) -> Dual3 {
        self.scale(-1.0)
    }
}

impl Add<f64> for Dual3 {
    type Output = Dual3;
    fn add(self, c: f64) -> Dual3 {
        Dual3 { v: self.v + c, d: self.d }
    }
}

impl Sub<f64> for Dual3 {
    type Output = Dual3;
    fn sub(self, c: f64) -> Dual3 {
        Dual3 { v: self.v - c, d: self.d }
    }
}

impl Mul<f64> for Dual3 {
    type Output = Dual3;
    fn mul(self, c: f64) -> Dual3 {
        self.scale(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Dp45 {
    pub atol: f64,
    pub rtol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// Width of the final bisection bracket for event times.
    pub event_tol: f64,
    pub max_steps: usize,
}

impl Default for Dp45 {
    fn default() -> Self {
        Dp45 { atol: 1e-12, rtol: 1e-12, h_init: 1e-3, h_max: 0.02, h_min: 1e-14, event_tol: 1e-13, max_steps: 2_000_000 }
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand-Prince step: fifth-order solution and error estimate.
pub fn dp45_step<const N: usize>(f: &impl Fn(&[f64; N]) -> [f64; N], y: &[f64; N], h: f64) -> ([f64; N], [f64; N]) {
    let mut k = [[0.0; N]; 7];
    k[0] = f(y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(&ys);
    }
    let mut y5 = *y;
    let mut err = [0.0; N];
    for s in 0..7 {
        for i in 0..N {
            y5[i] += h * B5[s] * k[s][i];
            err[i] += h * (B5[s] - B4[s]) * k[s][i];
        }
    }
    (y5, err)
}

#[derive(Clone, Copy, Debug)]
pub enum Stop {
    /// Integrate for this signed time.
    Time(f64),
    /// Integrate forward until this many events have fired.
    Events(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct RunResult<const N: usize> {
    pub y: [f64; N],
    pub t: f64,
    pub events: usize,
    pub steps: usize,
}

/// Integrates `y' = f(y)`. An event fires when `event(y)` becomes positive;
/// its time is bracketed by bisection on re-taken steps and `on_event` then
/// maps the state across (for suspensions, the roof identification).
pub fn run<const N: usize>(
    f: &impl Fn(&[f64; N]) -> [f64; N],
    y0: [f64; N],
    stop: Stop,
    opts: &Dp45,
    event: &impl Fn(&[f64; N]) -> f64,
    on_event: &mut impl FnMut(&mut [f64; N]),
) -> Result<RunResult<N>> {
    let (dir, t_end, max_events) = match stop {
        Stop::Time(t) => (if t < 0.0 { -1.0 } else { 1.0 }, t.abs(), usize::MAX),
        Stop::Events(n) => (1.0, f64::INFINITY, n),
    };
    let mut y = y0;
    let mut t = 0.0f64;
    let mut h = opts.h_init.min(opts.h_max);
    let mut events = 0;
    let mut steps = 0;
    if max_events == 0 {
        return Ok(RunResult { y, t, events, steps });
    }
    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(LabError::StepUnderflow(dir * t));
        }
        let h_try = h.min(t_end - t);
        let (y1, err) = dp45_step(f, &y, dir * h_try);
        let mut e = 0.0f64;
        for i in 0..N {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
            e = e.max((err[i] / sc).abs());
        }
        if !e.is_finite() || e > 1.0 {
            let fac = if e.is_finite() { (0.9 * e.powf(-0.2)).clamp(0.1, 0.5) } else { 0.1 };
            h = h_try * fac;
            if h < opts.h_min {
                return Err(LabError::StepUnderflow(dir * t));
            }
            continue;
        }
        if event(&y1) > 0.0 {
            // bracket the crossing inside (0, h_try]
            let (mut lo, mut hi) = (0.0, h_try);
            let mut y_hi = y1;
            while hi - lo > opts.event_tol {
                let mid = 0.5 * (lo + hi);
                let (ym, _) = dp45_step(f, &y, dir * mid);
                if event(&ym) > 0.0 {
                    hi = mid;
                    y_hi = ym;
                } else {
                    lo = mid;
                }
            }
            y = y_hi;
            t += hi;
            on_event(&mut y);
            events += 1;
            if events >= max_events {
                break;
            }
        } else {
            y = y1;
            t += h_try;
        }
        let grow = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h_try * grow).min(opts.h_max);
    }
    Ok(RunResult { y, t: dir * t, events, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_rules() {
        let x = Dual3::var(0.7, 0);
        let y = Dual3::var(-1.3, 1);
        let f = (x * y).sin() / (x.exp() + 2.0);
        let h = 1e-6;
        let g = |a: f64, b: f64| (a * b).sin() / (a.exp() + 2.0);
        let fd0 = (g(0.7 + h, -1.3) - g(0.7 - h, -1.3)) / (2.0 * h);
        let fd1 = (g(0.7, -1.3 + h) - g(0.7, -1.3 - h)) / (2.0 * h);
        assert!((f.d[0] - fd0).abs() < 1e-9 && (f.d[1] - fd1).abs() < 1e-9);
        assert_eq!(f.d[2], 0.0);
    }

    #[test]
    fn harmonic_oscillator() {
        let f = |y: &[f64; 2]| [y[1], -y[0]];
        let r = run(&f, [1.0, 0.0], Stop::Time(2.0 * std::f64::consts::PI), &Dp45::default(), &|_| -1.0, &mut |_| {})
            .unwrap();
        assert!((r.y[0] - 1.0).abs() < 1e-10 && r.y[1].abs() < 1e-10, "{:?}", r.y);
        let b = run(&f, r.y, Stop::Time(-2.0 * std::f64::consts::PI), &Dp45::default(), &|_| -1.0, &mut |_| {})
            .unwrap();
        assert!((b.y[0] - 1.0).abs() < 1e-10 && b.y[1].abs() < 1e-10);
    }

    #[test]
    fn event_time() {
        // y' = 1 from 0, wrap at 0.3: the third event is at t = 0.9
        let f = |_: &[f64; 1]| [1.0];
        let r = run(&f, [0.0], Stop::Events(3), &Dp45::default(), &|y| y[0] - 0.3, &mut |y| y[0] -= 0.3).unwrap();
        assert!((r.t - 0.9).abs() < 1e-12, "{}", r.t);
        assert!(r.y[0].abs() < 1e-12);
    }
}
