//! Hyperbolic torus maps `x -> A x + eps v(x) mod Z^2` with trigonometric `v`,
//! exact periodic-orbit enumeration, Newton continuation, multipliers and a
//! grid cone certificate.

use crate::error::{LabError, Result};
use crate::hp::{self, coords, dec, det, ident, mat_inv, mat_mul, mat_vec, norm, solve2, v_scale, Real, M2, V2};
use crate::lattice::{self, IMat, LinearCycle};
use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermFn {
    Sin,
    Cos,
}

/// One vector-field term `amp * fn(2 pi k.x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub k: [i64; 2],
    pub amp: [f64; 2],
    #[serde(rename = "fn")]
    pub func: TermFn,
}

impl TrigTerm {
    pub fn sin(k: [i64; 2], amp: [f64; 2]) -> Self {
        TrigTerm { k, amp, func: TermFn::Sin }
    }
    pub fn cos(k: [i64; 2], amp: [f64; 2]) -> Self {
        TrigTerm { k, amp, func: TermFn::Cos }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseMap {
    pub linear: [[i64; 2]; 2],
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
    #[serde(default)]
    pub epsilon: f64,
}

fn check_matrix(m: &[[i64; 2]; 2]) -> Result<()> {
    let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if d.abs() != 1 {
        return Err(LabError::NotUnimodular(*m));
    }
    if (m[0][0] + m[1][1]).abs() <= 2 {
        return Err(LabError::NotHyperbolic(*m));
    }
    Ok(())
}

pub fn make_linear_map(matrix: [[i64; 2]; 2]) -> Result<BaseMap> {
    check_matrix(&matrix)?;
    Ok(BaseMap { linear: matrix, terms: vec![], epsilon: 0.0 })
}

/// Perturbed map, accepted only if the 64x64 cone certificate passes.
pub fn make_perturbed_map(matrix: [[i64; 2]; 2], terms: Vec<TrigTerm>, epsilon: f64) -> Result<BaseMap> {
    check_matrix(&matrix)?;
    let map = BaseMap { linear: matrix, terms, epsilon };
    let cert = verify_anosov_cones(&map, 64);
    if !cert.pass {
        let (i, j) = cert.witness.unwrap_or((0, 0));
        return Err(LabError::ConeFailure { i, j, reason: cert.reason });
    }
    Ok(map)
}

/// The cat map `[[2,1],[1,1]]`.
pub const CAT: [[i64; 2]; 2] = [[2, 1], [1, 1]];

/// The standard dissipative example `A x + eps (sin 2 pi x1, 0)`.
pub fn standard_perturbed(epsilon: f64) -> Result<BaseMap> {
    make_perturbed_map(CAT, vec![TrigTerm::sin([1, 0], [1.0, 0.0])], epsilon)
}

impl BaseMap {
    pub fn validate(&self) -> Result<()> {
        check_matrix(&self.linear)?;
        if !self.is_linear() {
            let cert = verify_anosov_cones(self, 64);
            if !cert.pass {
                let (i, j) = cert.witness.unwrap_or((0, 0));
                return Err(LabError::ConeFailure { i, j, reason: cert.reason });
            }
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.epsilon == 0.0 || self.terms.iter().all(|t| t.amp == [0.0, 0.0])
    }

    pub fn lin_det(&self) -> i64 {
        let m = &self.linear;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Exactly area preserving: only the linear maps qualify.
    pub fn area_preserving(&self) -> bool {
        self.is_linear()
    }

    pub fn imat(&self) -> IMat {
        lattice::imat(&self.linear)
    }

    pub fn prepare<T: Real>(&self, proto: &T) -> MapEval<T> {
        let a = [
            [proto.int(self.linear[0][0]), proto.int(self.linear[0][1])],
            [proto.int(self.linear[1][0]), proto.int(self.linear[1][1])],
        ];
        let eps = proto.lit(self.epsilon);
        let terms = if self.is_linear() {
            vec![]
        } else {
            self.terms
                .iter()
                .map(|t| PTerm {
                    k: t.k,
                    ea: [eps.clone() * proto.lit(t.amp[0]), eps.clone() * proto.lit(t.amp[1])],
                    func: t.func,
                })
                .collect()
        };
        MapEval { lin: self.linear, a, terms, proto: proto.zero() }
    }

    pub fn at(&self, prec: u32) -> MapEval<Float> {
        self.prepare(&Float::new(prec))
    }

    /// Closed-form eigendata of the linear part.
    pub fn linear_eigen(&self, prec: u32) -> LinearEigen {
        LinearEigen::new(&self.linear, prec)
    }

    /// Sup bounds of `|eps Dv_ij|` and of its Lipschitz constant in the max norm.
    fn dv_bounds(&self) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
        let mut b = [[0.0; 2]; 2];
        let mut l = [[0.0; 2]; 2];
        if self.is_linear() {
            return (b, l);
        }
        for t in &self.terms {
            let kk = (t.k[0].abs() + t.k[1].abs()) as f64;
            for i in 0..2 {
                for j in 0..2 {
                    let c = self.epsilon.abs() * t.amp[i].abs() * TAU * (t.k[j].abs() as f64);
                    b[i][j] += c;
                    l[i][j] += c * TAU * kk;
                }
            }
        }
        (b, l)
    }

    /// Bounds `(lo, hi)` on `det Df` over the torus.
    pub fn det_bounds(&self) -> (f64, f64) {
        let (b, _) = self.dv_bounds();
        let a = self.linear;
        let d0 = self.lin_det() as f64;
        let adj = [[a[1][1] as f64, -(a[0][1] as f64)], [-(a[1][0] as f64), a[0][0] as f64]];
        let mut lin = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                lin += adj[j][i].abs() * b[i][j];
            }
        }
        let quad = b[0][0] * b[1][1] + b[0][1] * b[1][0];
        (d0 - lin - quad, d0 + lin + quad)
    }
}

#[derive(Clone, Debug)]
struct PTerm<T> {
    k: [i64; 2],
    ea: [T; 2],
    func: TermFn,
}

/// A map prepared for evaluation over one scalar type.
#[derive(Clone, Debug)]
pub struct MapEval<T> {
    pub lin: [[i64; 2]; 2],
    pub a: M2<T>,
    terms: Vec<PTerm<T>>,
    proto: T,
}

impl<T: Real> MapEval<T> {
    fn phase(&self, x: &V2<T>, k: &[i64; 2]) -> T {
        let p = &self.proto;
        match (k[0], k[1]) {
            (k0, 0) => x[0].clone() * p.int(k0),
            (0, k1) => x[1].clone() * p.int(k1),
            (k0, k1) => x[0].clone() * p.int(k0) + x[1].clone() * p.int(k1),
        }
    }

    /// Lift of the map to the plane.
    pub fn f(&self, x: &V2<T>) -> V2<T> {
        let mut y = mat_vec(&self.a, x);
        for t in &self.terms {
            let (s, c) = self.phase(x, &t.k).sin_cos_2pi();
            let w = match t.func {
                TermFn::Sin => s,
                TermFn::Cos => c,
            };
            y[0] = y[0].clone() + t.ea[0].clone() * w.clone();
            y[1] = y[1].clone() + t.ea[1].clone() * w;
        }
        y
    }

    pub fn df(&self, x: &V2<T>) -> M2<T> {
        self.f_df(x).1
    }

    pub fn f_df(&self, x: &V2<T>) -> (V2<T>, M2<T>) {
        let mut y = mat_vec(&self.a, x);
        let mut m = self.a.clone();
        let p = &self.proto;
        for t in &self.terms {
            let (s, c) = self.phase(x, &t.k).sin_cos_2pi();
            let (w, dw) = match t.func {
                TermFn::Sin => (s, c),
                TermFn::Cos => (c, -s),
            };
            let dw = dw * p.tau();
            for i in 0..2 {
                y[i] = y[i].clone() + t.ea[i].clone() * w.clone();
                for j in 0..2 {
                    if t.k[j] != 0 {
                        m[i][j] = m[i][j].clone() + t.ea[i].clone() * dw.clone() * p.int(t.k[j]);
                    }
                }
            }
        }
        (y, m)
    }

    /// `det Df(x)` and its gradient (closed-form second derivatives).
    pub fn det_grad(&self, x: &V2<T>) -> (T, V2<T>) {
        let mut m = self.a.clone();
        let z = self.proto.zero();
        let mut dm: [[V2<T>; 2]; 2] = [[[z.clone(), z.clone()], [z.clone(), z.clone()]], [[z.clone(), z.clone()], [z.clone(), z]]];
        let p = &self.proto;
        let tau = p.tau();
        let tau2 = tau.clone() * tau.clone();
        for t in &self.terms {
            let (s, c) = self.phase(x, &t.k).sin_cos_2pi();
            let (w, dw) = match t.func {
                TermFn::Sin => (s, c),
                TermFn::Cos => (c.clone(), -s),
            };
            for i in 0..2 {
                for j in 0..2 {
                    if t.k[j] == 0 {
                        continue;
                    }
                    m[i][j] = m[i][j].clone() + t.ea[i].clone() * dw.clone() * tau.clone() * p.int(t.k[j]);
                    for l in 0..2 {
                        if t.k[l] != 0 {
                            dm[i][j][l] = dm[i][j][l].clone() - t.ea[i].clone() * w.clone() * tau2.clone() * p.int(t.k[j] * t.k[l]);
                        }
                    }
                }
            }
        }
        let d = det(&m);
        let g = |l: usize| {
            dm[0][0][l].clone() * m[1][1].clone() + m[0][0].clone() * dm[1][1][l].clone()
                - dm[0][1][l].clone() * m[1][0].clone()
                - m[0][1].clone() * dm[1][0][l].clone()
        };
        (d, [g(0), g(1)])
    }

    /// Lift of the inverse map, by Newton from the linear inverse.
    pub fn inverse(&self, x: &V2<T>) -> V2<T> {
        let ainv = mat_inv(&self.a);
        let mut y = mat_vec(&ainv, x);
        if self.terms.is_empty() {
            return y;
        }
        let tol = self.proto.eps_log2() + 6.0;
        for _ in 0..200 {
            let (fy, d) = self.f_df(&y);
            let r = hp::v_sub(&fy, x);
            let dy = solve2(&d, &r);
            y = hp::v_sub(&y, &dy);
            let m = dy[0].log2_mag().max(dy[1].log2_mag());
            if m < tol {
                break;
            }
        }
        y
    }

    pub fn proto(&self) -> &T {
        &self.proto
    }
}

impl MapEval<Float> {
    /// Carry the prepared constants into another scalar type.
    pub fn lift<T: Real>(&self, proto: &T) -> MapEval<T> {
        let c = |x: &Float| proto.from_float(x);
        MapEval {
            lin: self.lin,
            a: [[c(&self.a[0][0]), c(&self.a[0][1])], [c(&self.a[1][0]), c(&self.a[1][1])]],
            terms: self.terms.iter().map(|t| PTerm { k: t.k, ea: [c(&t.ea[0]), c(&t.ea[1])], func: t.func }).collect(),
            proto: proto.zero(),
        }
    }
}

/// Eigendata of the integer linear part, normalized with first component 1.
#[derive(Clone, Debug)]
pub struct LinearEigen {
    pub lambda: Float,
    pub mu: Float,
    pub e_u: V2<Float>,
    pub e_s: V2<Float>,
}

impl LinearEigen {
    pub fn new(a: &[[i64; 2]; 2], prec: u32) -> Self {
        let tr = a[0][0] + a[1][1];
        let d = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = Float::with_val(prec, tr * tr - 4 * d).sqrt();
        let lambda = if tr > 0 {
            (Float::with_val(prec, tr) + disc) / 2u32
        } else {
            (Float::with_val(prec, tr) - disc) / 2u32
        };
        let mu = Float::with_val(prec, d) / lambda.clone();
        let vec = |nu: &Float| -> V2<Float> {
            [Float::with_val(prec, 1), (nu.clone() - a[0][0]) / Float::with_val(prec, a[0][1])]
        };
        LinearEigen { e_u: vec(&lambda), e_s: vec(&mu), lambda, mu }
    }
}

#[derive(Clone, Debug)]
pub struct Multipliers {
    pub mu: Float,
    pub lambda: Float,
    pub jacobian: Float,
    pub log_mu: Float,
    pub log_lambda: Float,
}

impl Multipliers {
    pub fn from_logs(log_mu: Float, log_lambda: Float) -> Self {
        let mu = log_mu.clone().exp();
        let lambda = log_lambda.clone().exp();
        let jacobian = mu.clone() * lambda.clone();
        Multipliers { mu, lambda, jacobian, log_mu, log_lambda }
    }

    /// Data of the same orbit for the time-reversed system: `(1/lambda, 1/mu)`.
    pub fn reversed(&self) -> Self {
        Multipliers::from_logs(-self.log_lambda.clone(), -self.log_mu.clone())
    }

    pub fn log_jacobian(&self) -> Float {
        self.log_mu.clone() + self.log_lambda.clone()
    }
}

/// Exact data of a linear cycle representative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactRep {
    pub num: [i128; 2],
    pub den: i128,
}

#[derive(Clone, Debug)]
pub struct BasePeriodicOrbit {
    pub period: u32,
    /// Cycle in dynamical order, starting at the representative.
    pub points: Vec<V2<Float>>,
    /// Integer jumps: `F(y_i) = y_{i+1} + c_i` on the lift.
    pub corrections: Vec<[i64; 2]>,
    /// `None` for cycles too long for an `i64` class.
    pub lattice_class: Option<[i64; 2]>,
    pub symbolic_id: String,
    pub exact: Option<ExactRep>,
}

impl BasePeriodicOrbit {
    pub fn representative(&self) -> &V2<Float> {
        &self.points[0]
    }

    pub fn prec(&self) -> u32 {
        self.points[0][0].prec()
    }

    /// Same cycle started `k` steps later (for re-rooting tests).
    pub fn rerooted(&self, k: usize) -> Self {
        let mut o = self.clone();
        o.points.rotate_left(k % self.points.len());
        o.corrections.rotate_left(k % self.points.len());
        o
    }

    fn from_linear(cyc: &LinearCycle, a: &IMat, prec: u32) -> Self {
        let d = cyc.d;
        let n = cyc.points.len();
        let points = cyc
            .points
            .iter()
            .map(|u| [Float::with_val(prec, u[0]) / Float::with_val(prec, d), Float::with_val(prec, u[1]) / Float::with_val(prec, d)])
            .collect();
        let corrections = (0..n)
            .map(|i| {
                let w = lattice::imat_vec(a, &cyc.points[i]);
                let nx = cyc.points[(i + 1) % n];
                [((w[0] - nx[0]) / d) as i64, ((w[1] - nx[1]) / d) as i64]
            })
            .collect();
        BasePeriodicOrbit {
            period: cyc.n,
            points,
            corrections,
            lattice_class: Some(cyc.lattice_class(a)),
            symbolic_id: cyc.symbolic_id(),
            exact: Some(ExactRep { num: cyc.rep(), den: d }),
        }
    }
}

/// Multiple-shooting Newton for the cycle `F(y_i) - c_i = y_{i+1}` on the lift,
/// with the integer jumps frozen. Returns the points at `prec` bits.
pub fn shoot(map: &BaseMap, seeds: &[V2<Float>], corr: &[[i64; 2]], prec: u32, label: &str) -> Result<Vec<V2<Float>>> {
    let p = seeds.len();
    let wp = prec + 48 + 2 * p as u32;
    let ev = map.at(wp);
    let mut y: Vec<V2<Float>> = seeds.iter().map(|s| hp::v_reprec(s, wp)).collect();
    if map.is_linear() {
        return Ok(y.iter().map(|v| hp::v_reprec(v, prec)).collect());
    }
    let target = -(wp as f64) + 12.0;
    let mut last = f64::INFINITY;
    for it in 0..80 {
        let mut ds = Vec::with_capacity(p);
        let mut gs = Vec::with_capacity(p);
        let mut gmax = f64::NEG_INFINITY;
        for i in 0..p {
            let (fy, d) = ev.f_df(&y[i]);
            let nx = &y[(i + 1) % p];
            let g = [
                fy[0].clone() - corr[i][0] - nx[0].clone(),
                fy[1].clone() - corr[i][1] - nx[1].clone(),
            ];
            gmax = gmax.max(g[0].log2_mag()).max(g[1].log2_mag());
            ds.push(d);
            gs.push(g);
        }
        last = gmax;
        if gmax < target {
            return Ok(y.iter().map(|v| hp::v_reprec(v, prec)).collect());
        }
        if it > 60 {
            break;
        }
        let mut m = ident(&Float::new(wp));
        let mut s = [Float::new(wp), Float::new(wp)];
        for i in 0..p {
            m = mat_mul(&ds[i], &m);
            s = hp::v_add(&mat_vec(&ds[i], &s), &gs[i]);
        }
        let one = Float::with_val(wp, 1);
        let im = [[one.clone() - m[0][0].clone(), -m[0][1].clone()], [-m[1][0].clone(), one - m[1][1].clone()]];
        let mut d = solve2(&im, &s);
        for i in 0..p {
            y[i] = hp::v_add(&y[i], &d);
            d = hp::v_add(&mat_vec(&ds[i], &d), &gs[i]);
        }
    }
    Err(LabError::NewtonFailure { seed: label.to_string(), iters: 80, log2_residual: last })
}

fn frac(x: &Float) -> (Float, i64) {
    let fl = x.clone().floor();
    let k = fl.to_f64() as i64;
    (x.clone() - fl, k)
}

/// Continue a linear cycle to the perturbed map and re-root at the
/// lexicographically least point (mod 1).
fn continue_cycle(map: &BaseMap, lin: &BasePeriodicOrbit, prec: u32) -> Result<BasePeriodicOrbit> {
    let ys = shoot(map, &lin.points, &lin.corrections, prec, &lin.symbolic_id)?;
    let n = ys.len();
    let mut pts = Vec::with_capacity(n);
    let mut shifts = Vec::with_capacity(n);
    for y in &ys {
        let (a, ka) = frac(&y[0]);
        let (b, kb) = frac(&y[1]);
        pts.push([a, b]);
        shifts.push([ka, kb]);
    }
    // y_i = x_i + k_i, so F(x_i) = x_{i+1} + c_i + k_{i+1} - A k_i.
    let a = map.linear;
    let corrections: Vec<[i64; 2]> = (0..n)
        .map(|i| {
            let k = shifts[i];
            let kn = shifts[(i + 1) % n];
            let ak = [a[0][0] * k[0] + a[0][1] * k[1], a[1][0] * k[0] + a[1][1] * k[1]];
            [lin.corrections[i][0] + kn[0] - ak[0], lin.corrections[i][1] + kn[1] - ak[1]]
        })
        .collect();
    let mut best = 0;
    for i in 1..n {
        let c = pts[i][0].partial_cmp(&pts[best][0]).unwrap();
        if c == std::cmp::Ordering::Less || (c == std::cmp::Ordering::Equal && pts[i][1] < pts[best][1]) {
            best = i;
        }
    }
    let mut o = BasePeriodicOrbit {
        period: lin.period,
        points: pts,
        corrections,
        lattice_class: None,
        symbolic_id: lin.symbolic_id.clone(),
        exact: None,
    };
    o = o.rerooted(best);
    o.lattice_class = cycle_class(&map.linear, &o.corrections);
    Ok(o)
}

/// `m = sum_i A^{N-1-i} c_i`, the class with `lift(f^N)(x_0) = x_0 + m`;
/// `None` once it leaves the `i64` range (it grows like `lambda^N`).
pub fn cycle_class(a: &[[i64; 2]; 2], corr: &[[i64; 2]]) -> Option<[i64; 2]> {
    let mut m = [0i64, 0];
    for c in corr {
        let row = |r: usize| -> Option<i64> {
            a[r][0].checked_mul(m[0])?.checked_add(a[r][1].checked_mul(m[1])?)?.checked_add(c[r])
        };
        m = [row(0)?, row(1)?];
    }
    Some(m)
}

/// Primitive cycles of exact period `n`, continued to the map when perturbed.
pub fn orbits_of_period(map: &BaseMap, n: u32, prec: u32) -> Result<Vec<BasePeriodicOrbit>> {
    let a = map.imat();
    let (_, cycles) = lattice::primitive_cycles(&a, n).ok_or_else(|| LabError::Invalid(format!("period {n} overflows")))?;
    let lin: Vec<BasePeriodicOrbit> = cycles.par_iter().map(|c| BasePeriodicOrbit::from_linear(c, &a, prec)).collect();
    if map.is_linear() {
        return Ok(lin);
    }
    lin.par_iter().map(|o| continue_cycle(map, o, prec)).collect()
}

/// One entry per primitive cycle of each period `<= n_max`, ordered by
/// period and then by linear representative.
pub fn enumerate_periodic_orbits(map: &BaseMap, n_max: u32, prec: u32) -> Result<Vec<BasePeriodicOrbit>> {
    if n_max == 0 {
        return Err(LabError::Invalid("N_max must be >= 1".into()));
    }
    let per: Vec<Vec<BasePeriodicOrbit>> =
        (1..=n_max).into_par_iter().map(|n| orbits_of_period(map, n, prec)).collect::<Result<_>>()?;
    let out: Vec<BasePeriodicOrbit> = per.into_iter().flatten().collect();
    if !map.is_linear() {
        check_distinct(&out)?;
    }
    Ok(out)
}

fn check_distinct(orbits: &[BasePeriodicOrbit]) -> Result<()> {
    let mut reps: Vec<(u32, f64, f64, &str)> =
        orbits.iter().map(|o| (o.period, o.points[0][0].to_f64(), o.points[0][1].to_f64(), o.symbolic_id.as_str())).collect();
    reps.sort_by(|a, b| (a.0, a.1, a.2).partial_cmp(&(b.0, b.1, b.2)).unwrap());
    for w in reps.windows(2) {
        if w[0].0 == w[1].0 && (w[0].1 - w[1].1).abs() < 1e-12 && (w[0].2 - w[1].2).abs() < 1e-12 {
            return Err(LabError::NewtonFailure { seed: format!("{} collides with {}", w[0].3, w[1].3), iters: 0, log2_residual: 0.0 });
        }
    }
    Ok(())
}

/// Stable and unstable multipliers by cone iteration along the cycle.
pub fn orbit_multipliers(map: &BaseMap, orbit: &BasePeriodicOrbit) -> Result<Multipliers> {
    let prec = orbit.prec();
    if map.is_linear() {
        let e = map.linear_eigen(prec + 16);
        let n = orbit.period;
        let ll = Float::with_val(prec + 16, e.lambda.abs_ref()).ln() * n;
        let log_lambda = Float::with_val(prec, &ll);
        let log_mu = Float::with_val(prec, -ll);
        return Ok(Multipliers::from_logs(log_mu, log_lambda));
    }
    let wp = prec + 32;
    let ev = map.at(wp);
    let ds: Vec<M2<Float>> = orbit.points.iter().map(|x| ev.df(&hp::v_reprec(x, wp))).collect();
    let inv: Vec<M2<Float>> = ds.iter().map(mat_inv).collect();
    let e = map.linear_eigen(wp);
    let log_lambda = cone_growth(&ds, e.e_u.clone(), wp).ok_or_else(|| LabError::BadSpectrum(orbit.symbolic_id.clone()))?;
    let back: Vec<M2<Float>> = inv.into_iter().rev().collect();
    let inv_mu = cone_growth(&back, e.e_s.clone(), wp).ok_or_else(|| LabError::BadSpectrum(orbit.symbolic_id.clone()))?;
    let log_mu = -inv_mu;
    if log_lambda <= 0 || log_mu >= 0 {
        return Err(LabError::BadSpectrum(orbit.symbolic_id.clone()));
    }
    Ok(Multipliers::from_logs(Float::with_val(prec, &log_mu), Float::with_val(prec, &log_lambda)))
}

/// Log growth per pass of the dominant direction of the cyclic product.
fn cone_growth(ms: &[M2<Float>], v0: V2<Float>, wp: u32) -> Option<Float> {
    let mut v = v0;
    let nv = norm(&v);
    v = v_scale(&(Float::with_val(wp, 1) / nv), &v);
    let tol = -(wp as f64) + 24.0;
    for _ in 0..2000 {
        let mut acc = Float::new(wp);
        let start = v.clone();
        for m in ms {
            v = mat_vec(m, &v);
            let nv = norm(&v);
            acc += nv.clone().ln();
            v = v_scale(&(Float::with_val(wp, 1) / nv), &v);
        }
        let same = hp::v_sub(&v, &start);
        let flip = hp::v_add(&v, &start);
        let dev = hp::max_abs(&same).min(&hp::max_abs(&flip)).clone();
        if hp::log2_abs(&dev) < tol {
            return Some(acc);
        }
    }
    None
}

/// Unit stable and unstable directions at a point, by cone iteration over
/// `iters` forward and backward iterates.
pub fn invariant_directions(map: &BaseMap, point: &V2<Float>, iters: usize) -> (V2<Float>, V2<Float>) {
    let prec = point[0].prec();
    let e = map.linear_eigen(prec);
    let unit = |v: V2<Float>| {
        let n = norm(&v);
        let s = if v[0].is_sign_negative() { -Float::with_val(prec, 1) } else { Float::with_val(prec, 1) };
        v_scale(&(s / n), &v)
    };
    if map.is_linear() {
        return (unit(e.e_s), unit(e.e_u));
    }
    let wp = prec + 32;
    let ev = map.at(wp);
    let x = hp::v_reprec(point, wp);
    let mut fwd = vec![x.clone()];
    for _ in 0..iters {
        let nx = ev.f(fwd.last().unwrap());
        fwd.push(nx);
    }
    let mut w = hp::v_reprec(&e.e_s, wp);
    for k in (0..iters).rev() {
        w = solve2(&ev.df(&fwd[k]), &w);
        let n = norm(&w);
        w = v_scale(&(Float::with_val(wp, 1) / n), &w);
    }
    let mut bwd = vec![x];
    for _ in 0..iters {
        let px = ev.inverse(bwd.last().unwrap());
        bwd.push(px);
    }
    let mut u = hp::v_reprec(&e.e_u, wp);
    for k in (1..=iters).rev() {
        u = mat_vec(&ev.df(&bwd[k]), &u);
        let n = norm(&u);
        u = v_scale(&(Float::with_val(wp, 1) / n), &u);
    }
    (unit(hp::v_reprec(&w, prec)), unit(hp::v_reprec(&u, prec)))
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeCertificate {
    pub pass: bool,
    pub resolution: usize,
    /// Worst lower bound on expansion of unstable-cone vectors by Df.
    pub min_expansion_u: f64,
    /// Worst lower bound on expansion of stable-cone vectors by Df^{-1}.
    pub min_expansion_s: f64,
    pub witness: Option<(usize, usize)>,
    pub reason: String,
}

/// Constant cone pair `|s| <= |u|` and `|u| <= |s|` in eigen-coordinates of
/// the linear part, checked on every cell of a uniform grid with the
/// derivative padded by its Lipschitz bound over the cell.
pub fn verify_anosov_cones(map: &BaseMap, res: usize) -> ConeCertificate {
    let e = map.linear_eigen(64);
    let to = |v: &V2<Float>| {
        let n = (v[0].to_f64().powi(2) + v[1].to_f64().powi(2)).sqrt();
        [v[0].to_f64() / n, v[1].to_f64() / n]
    };
    let eu = to(&e.e_u);
    let es = to(&e.e_s);
    let p = [[eu[0], es[0]], [eu[1], es[1]]];
    let pinv = mat_inv(&p);
    let (_, lip) = map.dv_bounds();
    let h = 0.5 / res as f64;
    let ev = map.prepare(&0.0f64);
    let abs_m = |m: &M2<f64>| [[m[0][0].abs(), m[0][1].abs()], [m[1][0].abs(), m[1][1].abs()]];
    let pad = [[lip[0][0] * h, lip[0][1] * h], [lip[1][0] * h, lip[1][1] * h]];
    let dpad = mat_mul(&mat_mul(&abs_m(&pinv), &pad), &abs_m(&p));
    let mut cert = ConeCertificate {
        pass: true,
        resolution: res,
        min_expansion_u: f64::INFINITY,
        min_expansion_s: f64::INFINITY,
        witness: None,
        reason: String::new(),
    };
    let tol = 1e-9;
    for i in 0..res {
        for j in 0..res {
            let x = [(i as f64 + 0.5) / res as f64, (j as f64 + 0.5) / res as f64];
            let df = ev.df(&x);
            let b = mat_mul(&mat_mul(&pinv, &df), &p);
            let fail = |c: &mut ConeCertificate, why: String| {
                if c.pass {
                    c.pass = false;
                    c.witness = Some((i, j));
                    c.reason = why;
                }
            };
            let low_u = b[0][0].abs() - dpad[0][0] - (b[0][1].abs() + dpad[0][1]);
            let high_s = b[1][0].abs() + dpad[1][0] + b[1][1].abs() + dpad[1][1];
            cert.min_expansion_u = cert.min_expansion_u.min(low_u);
            if !(low_u > 1.0 + tol) || !(high_s < low_u * (1.0 - tol)) {
                fail(&mut cert, format!("unstable cone: expansion {low_u:.4}, transverse {high_s:.4}"));
            }
            let d = det(&b);
            if d.abs() < 1e-12 {
                fail(&mut cert, "singular derivative".into());
                continue;
            }
            let c = mat_inv(&b);
            let ca = abs_m(&c);
            let nrm = |m: &M2<f64>| (m[0][0] + m[0][1]).max(m[1][0] + m[1][1]);
            let q = nrm(&ca) * nrm(&dpad);
            if q >= 1.0 {
                fail(&mut cert, "padding too large for inverse bound".into());
                continue;
            }
            let cpad0 = mat_mul(&mat_mul(&ca, &dpad), &ca);
            let cpad = [[cpad0[0][0] / (1.0 - q), cpad0[0][1] / (1.0 - q)], [cpad0[1][0] / (1.0 - q), cpad0[1][1] / (1.0 - q)]];
            let low_s = c[1][1].abs() - cpad[1][1] - (c[1][0].abs() + cpad[1][0]);
            let high_u = c[0][1].abs() + cpad[0][1] + c[0][0].abs() + cpad[0][0];
            cert.min_expansion_s = cert.min_expansion_s.min(low_s);
            if !(low_s > 1.0 + tol) || !(high_u < low_s * (1.0 - tol)) {
                fail(&mut cert, format!("stable cone: expansion {low_s:.4}, transverse {high_u:.4}"));
            }
        }
    }
    cert
}

/// Orbit table with columns `symbolic_id, N, x1, x2, mu, lambda, jacobian`.
pub fn write_orbit_csv(path: &Path, rows: &[(BasePeriodicOrbit, Multipliers)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["symbolic_id", "N", "x1", "x2", "mu", "lambda", "jacobian"])?;
    for (o, m) in rows {
        w.write_record([
            o.symbolic_id.clone(),
            o.period.to_string(),
            hp::fmt_float(&o.points[0][0]),
            hp::fmt_float(&o.points[0][1]),
            hp::fmt_float(&m.mu),
            hp::fmt_float(&m.lambda),
            hp::fmt_float(&m.jacobian),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(v)?.as_bytes())?;
    Ok(())
}

/// Product of `det Df` over the cycle, for the Jacobian oracle.
pub fn det_product(map: &BaseMap, orbit: &BasePeriodicOrbit) -> Float {
    let prec = orbit.prec() + 32;
    let ev = map.at(prec);
    let mut acc = Float::with_val(prec, 1);
    for x in &orbit.points {
        acc *= det(&ev.df(&hp::v_reprec(x, prec)));
    }
    acc.abs()
}

/// Eigen-coordinates of `v` in the basis `(e_u, e_s)`.
pub fn eigen_coords(e: &LinearEigen, v: &V2<Float>) -> V2<Float> {
    coords(&e.e_u, &e.e_s, v)
}

pub fn dec_v(prec: u32, v: [f64; 2]) -> V2<Float> {
    [dec(prec, v[0]), dec(prec, v[1])]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(make_linear_map([[1, 1], [1, 0]]), Err(LabError::NotHyperbolic(_))));
        assert!(matches!(make_linear_map([[2, 1], [1, 2]]), Err(LabError::NotUnimodular(_))));
        assert!(make_linear_map(CAT).is_ok());
    }

    #[test]
    fn cat_eigen_closed_form() {
        let e = make_linear_map(CAT).unwrap().linear_eigen(128);
        assert_relative_eq!(e.lambda.to_f64(), (3.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(e.mu.to_f64(), (3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(e.e_u[1].to_f64(), (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(e.e_s[1].to_f64(), -(1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn perturbed_det_at_origin() {
        let m = standard_perturbed(0.01).unwrap();
        let d = det(&m.at(128).df(&[Float::new(128), Float::new(128)]));
        let expect = Float::with_val(128, 1) + Float::with_val(128, rug::float::Constant::Pi) * 2u32 / 100u32;
        assert!(hp::log2_abs(&(d - expect)) < -120.0);
        assert_relative_eq!(1.0 + TAU * 0.01, 1.0628318, epsilon = 1e-6);
    }

    #[test]
    fn cone_certificate_gates() {
        let cat = make_linear_map(CAT).unwrap();
        let c = verify_anosov_cones(&cat, 32);
        assert!(c.pass);
        assert!(c.min_expansion_u >= 2.618 * (1.0 - 1e-6));
        assert!(verify_anosov_cones(&standard_perturbed(0.01).unwrap(), 64).pass);
        let bad = BaseMap { linear: CAT, terms: vec![TrigTerm::sin([1, 0], [1.0, 0.0])], epsilon: 0.5 };
        let c = verify_anosov_cones(&bad, 64);
        assert!(!c.pass && c.witness.is_some());
        assert!(matches!(standard_perturbed(0.5), Err(LabError::ConeFailure { .. })));
    }

    #[test]
    fn json_roundtrip_and_unknown_keys() {
        let m = standard_perturbed(0.01).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"fn\":\"sin\""));
        let back: BaseMap = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<BaseMap>(r#"{"linear":[[2,1],[1,1]],"bogus":1}"#).is_err());
    }

    #[test]
    fn inverse_newton() {
        let m = standard_perturbed(0.01).unwrap().at(200);
        let x = dec_v(200, [0.3, 0.7]);
        let y = m.inverse(&x);
        let back = m.f(&y);
        assert!(hp::log2_abs(&hp::max_abs(&hp::v_sub(&back, &x))) < -190.0);
    }

    #[test]
    fn cat_point_counts() {
        let cat = make_linear_map(CAT).unwrap();
        let orbits = enumerate_periodic_orbits(&cat, 12, 64).unwrap();
        let expect = [1, 5, 16, 45, 121, 320, 841, 2205, 5776, 15125, 39601, 103680];
        for n in 1..=12u32 {
            let pts: u32 = orbits.iter().filter(|o| n % o.period == 0).map(|o| o.period).sum();
            assert_eq!(pts, expect[n as usize - 1], "n={n}");
        }
    }

    #[test]
    fn perturbed_fixed_point_multipliers() {
        let m = standard_perturbed(0.01).unwrap();
        let o = orbits_of_period(&m, 1, 256).unwrap();
        assert_eq!(o.len(), 1);
        assert!(o[0].points[0][0].is_zero() && o[0].points[0][1].is_zero());
        let mu = orbit_multipliers(&m, &o[0]).unwrap();
        let tr = 3.0 + TAU * 0.01;
        let dt = 1.0 + TAU * 0.01;
        let lam = (tr + (tr * tr - 4.0 * dt).sqrt()) / 2.0;
        assert_relative_eq!(mu.lambda.to_f64(), lam, epsilon = 1e-13);
        assert_relative_eq!(mu.mu.to_f64(), dt / lam, epsilon = 1e-13);
        assert_relative_eq!(mu.jacobian.to_f64(), 1.0628318530717959, epsilon = 1e-13);
    }

    #[test]
    fn jacobian_matches_det_product() {
        let m = standard_perturbed(0.01).unwrap();
        for o in orbits_of_period(&m, 4, 192).unwrap().iter().take(6) {
            let mu = orbit_multipliers(&m, o).unwrap();
            let gap = mu.jacobian.clone() - det_product(&m, o);
            assert!(hp::log2_abs(&gap) < -100.0, "{}", o.symbolic_id);
            let r = orbit_multipliers(&m, &o.rerooted(2)).unwrap();
            assert!(hp::log2_abs(&(r.lambda - mu.lambda.clone())) < -100.0);
        }
    }

    #[test]
    fn perturbed_cycles_close_up() {
        let m = standard_perturbed(0.01).unwrap();
        let ev = m.at(256);
        for o in orbits_of_period(&m, 5, 256).unwrap() {
            let n = o.points.len();
            for i in 0..n {
                let fy = ev.f(&o.points[i]);
                let g = [
                    fy[0].clone() - o.corrections[i][0] - o.points[(i + 1) % n][0].clone(),
                    fy[1].clone() - o.corrections[i][1] - o.points[(i + 1) % n][1].clone(),
                ];
                assert!(hp::log2_abs(&hp::max_abs(&g)) < -240.0);
            }
            assert!(o.points.iter().all(|p| p[0] >= 0 && p[0] < 1 && p[1] >= 0 && p[1] < 1));
        }
    }

    #[test]
    fn linear_class_matches_corrections() {
        let cat = make_linear_map(CAT).unwrap();
        for o in orbits_of_period(&cat, 6, 64).unwrap() {
            assert_eq!(cycle_class(&CAT, &o.corrections), o.lattice_class);
        }
    }
}
