//! Suspension flows `(base, roof)`: periods, multipliers, dissipation classes,
//! strong-manifold heights over a periodic anchor, the crude section
//! `h = h^s(xi) + h^u(eta)` and jets of its return time.

use crate::error::{LabError, Result};
use crate::hp::{self, coords, dot, mat_mul, mat_vec, solve2, v_add, v_sub, Real, M2, V2};
use crate::jet::Jet;
use crate::torus_maps::{self, BaseMap, BasePeriodicOrbit, MapEval, Multipliers};
use rayon::prelude::*;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_PREC: u32 = 256;
pub const DEFAULT_MILD_RHO: f64 = 1.25;
/// Jacobian tolerance for the dissipation classes.
pub const CLASS_TOL: f64 = 1e-20;
/// Half-width of the section chart in leaf coordinates.
pub const SECTION_RADIUS: f64 = 0.25;

/// `cos * cos(2 pi k.x) + sin * sin(2 pi k.x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoofTerm {
    pub k: [i64; 2],
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Odd bump `-amp (n.d) exp(1 - 1/(1 - |d|^2/radius^2))` with `d = y - center`
/// taken at the nearest lift. Center and normal are decimal strings so they
/// survive JSON at full precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: [String; 2],
    pub normal: [String; 2],
    pub amp: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roof {
    pub c0: f64,
    #[serde(default)]
    pub terms: Vec<RoofTerm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bumps: Vec<Bump>,
    /// Weight `w` of an extra `w ln det Df(x)` summand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_jacobian: Option<f64>,
}

impl Roof {
    pub fn constant(c0: f64) -> Self {
        Roof { c0, terms: vec![], bumps: vec![], log_jacobian: None }
    }

    /// `c0 + a cos 2 pi x1`.
    pub fn cos_x1(c0: f64, a: f64) -> Self {
        Roof { c0, terms: vec![RoofTerm { k: [1, 0], cos: a, sin: 0.0 }], bumps: vec![], log_jacobian: None }
    }

    /// `ln det Df + kappa`, the dissipative-suspension recipe.
    pub fn log_jacobian_plus(kappa: f64) -> Self {
        Roof { c0: kappa, terms: vec![], bumps: vec![], log_jacobian: Some(1.0) }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
            && self.bumps.iter().all(|b| b.amp == 0.0)
            && self.log_jacobian.map_or(true, |w| w == 0.0)
    }

    /// Certified lower bound `c0 - sum |a_k| - |b_k| - ...` over the torus.
    pub fn lower_bound(&self, base: &BaseMap) -> f64 {
        let mut lo = self.c0;
        for t in &self.terms {
            lo -= t.cos.abs() + t.sin.abs();
        }
        for b in &self.bumps {
            lo -= b.amp.abs() * b.radius;
        }
        if let Some(w) = self.log_jacobian {
            let (dlo, dhi) = base.det_bounds();
            if dlo <= 0.0 {
                return f64::NEG_INFINITY;
            }
            lo += if w >= 0.0 { w * dlo.ln() } else { w * dhi.ln() };
        }
        lo
    }

    /// Upper bound on `|r|`, used in tail estimates.
    pub fn upper_bound(&self, base: &BaseMap) -> f64 {
        let mut hi = self.c0.abs();
        for t in &self.terms {
            hi += t.cos.abs() + t.sin.abs();
        }
        for b in &self.bumps {
            hi += b.amp.abs() * b.radius;
        }
        if let Some(w) = self.log_jacobian {
            let (dlo, dhi) = base.det_bounds();
            hi += w.abs() * dlo.ln().abs().max(dhi.ln().abs());
        }
        hi
    }

    /// The same roof multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Roof {
            c0: self.c0 * s,
            terms: self.terms.iter().map(|t| RoofTerm { k: t.k, cos: t.cos * s, sin: t.sin * s }).collect(),
            bumps: self.bumps.iter().map(|b| Bump { amp: b.amp * s, ..b.clone() }).collect(),
            log_jacobian: self.log_jacobian.map(|w| w * s),
        }
    }

    pub fn prepare(&self, base: &BaseMap, prec: u32) -> Result<RoofEval<Float>> {
        let p = Float::new(prec);
        let parse = |s: &str| hp::parse_float(prec, s).ok_or_else(|| LabError::Invalid(format!("bad decimal {s:?}")));
        let mut bumps = Vec::new();
        for b in &self.bumps {
            let center = [parse(&b.center[0])?, parse(&b.center[1])?];
            let normal = [parse(&b.normal[0])?, parse(&b.normal[1])?];
            let r = p.lit(b.radius);
            bumps.push(PBump { center, normal, amp: p.lit(b.amp), r2: r.clone() * r, radius: b.radius });
        }
        Ok(RoofEval {
            c0: p.lit(self.c0),
            terms: self.terms.iter().filter(|t| t.cos != 0.0 || t.sin != 0.0).map(|t| (t.k, p.lit(t.cos), p.lit(t.sin))).collect(),
            bumps,
            logjac: self.log_jacobian.filter(|w| *w != 0.0).map(|w| (p.lit(w), base.at(prec))),
            proto: p,
        })
    }
}

#[derive(Clone, Debug)]
struct PBump<T> {
    center: V2<T>,
    normal: V2<T>,
    amp: T,
    r2: T,
    radius: f64,
}

/// A roof prepared for one scalar type.
#[derive(Clone, Debug)]
pub struct RoofEval<T> {
    c0: T,
    terms: Vec<([i64; 2], T, T)>,
    bumps: Vec<PBump<T>>,
    logjac: Option<(T, MapEval<T>)>,
    proto: T,
}

fn wrap<T: Real>(d: T) -> T {
    let k = d.to_f64().round();
    if k == 0.0 {
        d
    } else {
        let kk = d.int(k as i64);
        d - kk
    }
}

impl RoofEval<Float> {
    pub fn lift<T: Real>(&self, proto: &T) -> RoofEval<T> {
        let c = |x: &Float| proto.from_float(x);
        RoofEval {
            c0: c(&self.c0),
            terms: self.terms.iter().map(|(k, a, b)| (*k, c(a), c(b))).collect(),
            bumps: self
                .bumps
                .iter()
                .map(|b| PBump {
                    center: [c(&b.center[0]), c(&b.center[1])],
                    normal: [c(&b.normal[0]), c(&b.normal[1])],
                    amp: c(&b.amp),
                    r2: c(&b.r2),
                    radius: b.radius,
                })
                .collect(),
            logjac: self.logjac.as_ref().map(|(w, m)| (c(w), m.lift(proto))),
            proto: proto.zero(),
        }
    }

    /// Centers of the bumps as doubles with their radii.
    pub fn bump_disks(&self) -> Vec<([f64; 2], f64)> {
        self.bumps.iter().map(|b| ([b.center[0].to_f64(), b.center[1].to_f64()], b.radius)).collect()
    }
}

impl<T: Real> RoofEval<T> {
    pub fn value(&self, x: &V2<T>) -> T {
        self.value_grad_impl(x, false).0
    }

    pub fn value_grad(&self, x: &V2<T>) -> (T, V2<T>) {
        self.value_grad_impl(x, true)
    }

    fn value_grad_impl(&self, x: &V2<T>, want_grad: bool) -> (T, V2<T>) {
        let p = &self.proto;
        let mut v = self.c0.clone();
        let mut g = [p.zero(), p.zero()];
        for (k, a, b) in &self.terms {
            let th = x[0].clone() * p.int(k[0]) + x[1].clone() * p.int(k[1]);
            let (s, c) = th.sin_cos_2pi();
            v = v + a.clone() * c.clone() + b.clone() * s.clone();
            if want_grad {
                let d = (b.clone() * c - a.clone() * s) * p.tau();
                for j in 0..2 {
                    if k[j] != 0 {
                        g[j] = g[j].clone() + d.clone() * p.int(k[j]);
                    }
                }
            }
        }
        for b in &self.bumps {
            let d = [wrap(x[0].clone() - b.center[0].clone()), wrap(x[1].clone() - b.center[1].clone())];
            let s2 = dot(&d, &d) / b.r2.clone();
            if s2.to_f64() >= 1.0 {
                continue;
            }
            let one = p.one();
            let q = one.clone() / (one.clone() - s2);
            let e = (one - q.clone()).exp();
            let ld = dot(&b.normal, &d);
            v = v - b.amp.clone() * ld.clone() * e.clone();
            if want_grad {
                let f = ld * q.clone() * q * p.int(2) / b.r2.clone();
                for j in 0..2 {
                    g[j] = g[j].clone() - b.amp.clone() * e.clone() * (b.normal[j].clone() - f.clone() * d[j].clone());
                }
            }
        }
        if let Some((w, m)) = &self.logjac {
            let (dt, dg) = m.det_grad(x);
            v = v + w.clone() * dt.ln();
            if want_grad {
                for j in 0..2 {
                    g[j] = g[j].clone() + w.clone() * dg[j].clone() / dt.clone();
                }
            }
        }
        (v, g)
    }
}

fn default_prec() -> u32 {
    DEFAULT_PREC
}

fn default_rho() -> f64 {
    DEFAULT_MILD_RHO
}

/// Suspension of `base` under `roof`. With `reversed` set, the model is the
/// time reversal: base `f^{-1}`, roof `r o f^{-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowModel {
    pub base: BaseMap,
    pub roof: Roof,
    #[serde(default = "default_prec")]
    pub precision_bits: u32,
    #[serde(default)]
    pub reversed: bool,
    #[serde(default = "default_rho")]
    pub mild_rho: f64,
}

pub fn make_suspension(base: BaseMap, roof: Roof, precision_bits: u32) -> Result<FlowModel> {
    let m = FlowModel { base, roof, precision_bits, reversed: false, mild_rho: DEFAULT_MILD_RHO };
    m.validate()?;
    Ok(m)
}

impl FlowModel {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let lo = self.roof.lower_bound(&self.base);
        if !(lo > 0.0) {
            return Err(LabError::RoofNotPositive(lo));
        }
        if self.precision_bits < 64 {
            return Err(LabError::Invalid("precision_bits must be at least 64".into()));
        }
        Ok(())
    }

    pub fn time_reversed(&self) -> FlowModel {
        FlowModel { reversed: !self.reversed, ..self.clone() }
    }

    pub fn with_precision(&self, bits: u32) -> FlowModel {
        FlowModel { precision_bits: bits, ..self.clone() }
    }

    pub fn with_roof(&self, roof: Roof) -> FlowModel {
        FlowModel { roof, ..self.clone() }
    }

    /// Precision used for base orbit points (guard bits over the model).
    pub fn orbit_prec(&self) -> u32 {
        self.precision_bits + 32
    }

    /// Exactly conservative: area-preserving base (any roof).
    pub fn conservative(&self) -> bool {
        self.base.area_preserving()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissipationClass {
    Contracting,
    Preserving,
    Expanding,
}

impl DissipationClass {
    pub fn name(&self) -> &'static str {
        match self {
            DissipationClass::Contracting => "contracting",
            DissipationClass::Preserving => "preserving",
            DissipationClass::Expanding => "expanding",
        }
    }
}

/// Witness of `rho`-mild dissipation: `mu^rho lambda < 1 < mu lambda^rho`.
#[derive(Clone, Debug, Serialize)]
pub struct MildCertificate {
    pub rho: f64,
    pub log_contraction: f64,
    pub log_expansion: f64,
}

pub fn mild_certificate(m: &Multipliers, rho: f64) -> Option<MildCertificate> {
    let r = Float::with_val(m.log_mu.prec(), rho);
    let c = Float::with_val(m.log_mu.prec(), &m.log_mu * &r) + &m.log_lambda;
    let e = Float::with_val(m.log_mu.prec(), &m.log_lambda * &r) + &m.log_mu;
    if c < 0 && e > 0 {
        Some(MildCertificate { rho, log_contraction: c.to_f64(), log_expansion: e.to_f64() })
    } else {
        None
    }
}

#[derive(Clone, Debug)]
pub struct FlowPeriodicOrbit {
    /// The underlying cycle of `f`, in forward order (also for reversed models).
    pub base: BasePeriodicOrbit,
    pub id: String,
    /// Class `m` with `lift(F^N)(x) = x + m` for the model's own base map.
    pub lattice_class: Option<[i64; 2]>,
    pub period: Float,
    pub multipliers: Multipliers,
    pub class: DissipationClass,
    pub mild: Option<MildCertificate>,
}

impl FlowPeriodicOrbit {
    pub fn n(&self) -> u32 {
        self.base.period
    }
}

/// `sum_{j<N} r(f^j x)` in cycle order from the representative.
pub fn flow_period(model: &FlowModel, orbit: &BasePeriodicOrbit) -> Result<Float> {
    let wp = model.precision_bits + 32;
    let r = model.roof.prepare(&model.base, wp)?;
    let mut acc = Float::new(wp);
    for x in &orbit.points {
        acc += r.value(&hp::v_reprec(x, wp));
    }
    Ok(Float::with_val(model.precision_bits, acc))
}

fn inv_matrix(a: &[[i64; 2]; 2]) -> [[i64; 2]; 2] {
    let d = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] * d, -a[0][1] * d], [-a[1][0] * d, a[0][0] * d]]
}

/// Lattice class of the cycle for `f^{-1}`: `-A^{-N} m`.
pub fn reversed_class(a: &[[i64; 2]; 2], n: u32, m: [i64; 2]) -> Option<[i64; 2]> {
    let b = inv_matrix(a);
    let mut v = m;
    for _ in 0..n {
        let row = |r: usize| -> Option<i64> { b[r][0].checked_mul(v[0])?.checked_add(b[r][1].checked_mul(v[1])?) };
        v = [row(0)?, row(1)?];
    }
    Some([-v[0], -v[1]])
}

pub fn classify(model: &FlowModel, m: &Multipliers) -> DissipationClass {
    let gap = (m.jacobian.clone() - 1u32).abs().to_f64();
    if model.conservative() && gap < CLASS_TOL {
        DissipationClass::Preserving
    } else if m.log_jacobian() < 0 {
        DissipationClass::Contracting
    } else {
        DissipationClass::Expanding
    }
}

pub fn flow_orbit(model: &FlowModel, orbit: &BasePeriodicOrbit) -> Result<FlowPeriodicOrbit> {
    let period = flow_period(model, orbit)?;
    let fwd = torus_maps::orbit_multipliers(&model.base, orbit)?;
    let (multipliers, id, lattice_class) = if model.reversed {
        (
            fwd.reversed(),
            format!("{}~", orbit.symbolic_id),
            orbit.lattice_class.and_then(|m| reversed_class(&model.base.linear, orbit.period, m)),
        )
    } else {
        (fwd, orbit.symbolic_id.clone(), orbit.lattice_class)
    };
    let class = classify(model, &multipliers);
    let mild = mild_certificate(&multipliers, model.mild_rho);
    Ok(FlowPeriodicOrbit { base: orbit.clone(), id, lattice_class, period, multipliers, class, mild })
}

/// Every flow periodic orbit with base period at most `n_max`.
pub fn flow_orbits(model: &FlowModel, n_max: u32) -> Result<Vec<FlowPeriodicOrbit>> {
    let base = torus_maps::enumerate_periodic_orbits(&model.base, n_max, model.orbit_prec())?;
    base.par_iter().map(|o| flow_orbit(model, o)).collect()
}

/// The flow orbit over the base fixed point at the origin class, or the first
/// fixed point.
pub fn fixed_point_orbit(model: &FlowModel) -> Result<FlowPeriodicOrbit> {
    let base = torus_maps::orbits_of_period(&model.base, 1, model.orbit_prec())?;
    let o = base.into_iter().next().ok_or_else(|| LabError::Invalid("no fixed point".into()))?;
    flow_orbit(model, &o)
}

/// Orbit table with columns `symbolic_id, N, T, mu, lambda, jacobian, class`.
pub fn write_flow_csv(path: &Path, orbits: &[FlowPeriodicOrbit]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["symbolic_id", "N", "T", "mu", "lambda", "jacobian", "class"])?;
    for o in orbits {
        w.write_record([
            o.id.clone(),
            o.n().to_string(),
            hp::fmt_float(&o.period),
            hp::fmt_float(&o.multipliers.mu),
            hp::fmt_float(&o.multipliers.lambda),
            hp::fmt_float(&o.multipliers.jacobian),
            o.class.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    #[serde(rename = "s")]
    Stable,
    #[serde(rename = "u")]
    Unstable,
}

/// Polynomial part of a strong-manifold parametrization `Phi(t) = sum c_j t^j`
/// with `g(Phi(t)) = Phi(nu t)`, valid for `|t| <= radius`.
#[derive(Clone, Debug)]
pub struct StrongParam {
    pub nu: Float,
    pub coeffs: Vec<V2<Float>>,
    pub radius: f64,
}

impl StrongParam {
    pub fn eval<T: Real>(&self, t: &T) -> V2<T> {
        let c = |x: &Float| t.from_float(x);
        let n = self.coeffs.len();
        let mut acc = [c(&self.coeffs[n - 1][0]), c(&self.coeffs[n - 1][1])];
        for k in (0..n - 1).rev() {
            acc = [acc[0].clone() * t.clone() + c(&self.coeffs[k][0]), acc[1].clone() * t.clone() + c(&self.coeffs[k][1])];
        }
        acc
    }
}

/// Map and roof of the anchor-local return, over one scalar type.
pub struct AnchorEval<T> {
    map: MapEval<T>,
    roof: RoofEval<T>,
    shift: V2<T>,
    n: u32,
    reversed: bool,
}

impl<T: Real> AnchorEval<T> {
    fn fwd(&self, x: &V2<T>) -> V2<T> {
        let mut y = x.clone();
        for _ in 0..self.n {
            y = self.map.f(&y);
        }
        v_sub(&y, &self.shift)
    }

    fn bwd(&self, x: &V2<T>) -> V2<T> {
        let mut y = v_add(x, &self.shift);
        for _ in 0..self.n {
            y = self.map.inverse(&y);
        }
        y
    }

    fn fwd_d(&self, x: &V2<T>) -> (V2<T>, M2<T>) {
        let mut y = x.clone();
        let mut m = hp::ident(&x[0]);
        for _ in 0..self.n {
            let (fy, d) = self.map.f_df(&y);
            m = mat_mul(&d, &m);
            y = fy;
        }
        (v_sub(&y, &self.shift), m)
    }

    fn fwd_r(&self, x: &V2<T>) -> (T, V2<T>) {
        let mut y = x.clone();
        let mut m = hp::ident(&x[0]);
        let mut v = x[0].zero();
        let mut g = [x[0].zero(), x[0].zero()];
        for _ in 0..self.n {
            let (r, dr) = self.roof.value_grad(&y);
            v = v + r;
            g = [g[0].clone() + dot(&dr, &[m[0][0].clone(), m[1][0].clone()]), g[1].clone() + dot(&dr, &[m[0][1].clone(), m[1][1].clone()])];
            let (fy, d) = self.map.f_df(&y);
            m = mat_mul(&d, &m);
            y = fy;
        }
        (v, g)
    }

    /// The local return `g`: `F^N - m_p`, or its inverse when reversed.
    pub fn g(&self, x: &V2<T>) -> V2<T> {
        if self.reversed {
            self.bwd(x)
        } else {
            self.fwd(x)
        }
    }

    pub fn g_inv(&self, x: &V2<T>) -> V2<T> {
        if self.reversed {
            self.fwd(x)
        } else {
            self.bwd(x)
        }
    }

    pub fn g_d(&self, x: &V2<T>) -> (V2<T>, M2<T>) {
        if self.reversed {
            let y = self.bwd(x);
            let (_, d) = self.fwd_d(&y);
            (y, hp::mat_inv(&d))
        } else {
            self.fwd_d(x)
        }
    }

    /// Return-time roof sum `R` and its gradient.
    pub fn big_r(&self, x: &V2<T>) -> (T, V2<T>) {
        if self.reversed {
            let y = self.bwd(x);
            let (r, g) = self.fwd_r(&y);
            let (_, d) = self.fwd_d(&y);
            let di = hp::mat_inv(&d);
            let gg = [
                g[0].clone() * di[0][0].clone() + g[1].clone() * di[1][0].clone(),
                g[0].clone() * di[0][1].clone() + g[1].clone() * di[1][1].clone(),
            ];
            (r, gg)
        } else {
            self.fwd_r(x)
        }
    }

    pub fn big_r_value(&self, x: &V2<T>) -> T {
        if self.reversed {
            let y = self.bwd(x);
            let mut v = x[0].zero();
            let mut z = y;
            for _ in 0..self.n {
                v = v + self.roof.value(&z);
                z = self.map.f(&z);
            }
            v
        } else {
            let mut v = x[0].zero();
            let mut z = x.clone();
            for _ in 0..self.n {
                v = v + self.roof.value(&z);
                z = self.map.f(&z);
            }
            v
        }
    }
}

const PHI_ORDER: usize = 30;
const HEIGHT_ORDER: usize = 16;

/// Local geometry around a periodic point `p` of the model: the return `g`
/// (`N` base steps), strong-manifold parametrizations, and height series.
#[derive(Clone, Debug)]
pub struct Anchor {
    pub model: FlowModel,
    pub orbit: BasePeriodicOrbit,
    pub wp: u32,
    pub n: u32,
    pub shift: [i64; 2],
    pub p: V2<Float>,
    pub mono: M2<Float>,
    /// Signed eigenvalues of `Dg(p)`.
    pub lambda: Float,
    pub mu: Float,
    /// Eigenvectors with first component 1.
    pub e_u: V2<Float>,
    pub e_s: V2<Float>,
    /// Period `R(p)`.
    pub t: Float,
    pub phi_u: StrongParam,
    pub phi_s: StrongParam,
    /// Jet coefficients of `h^u` and `h^s` at 0.
    pub hu_coef: Vec<Float>,
    pub hs_coef: Vec<Float>,
    /// `rho_j / (1 - lambda^{-j})` and `s_j / (1 - mu^j)` for the tail sums.
    hu_tail: Vec<Float>,
    hs_tail: Vec<Float>,
    pub hr_u: f64,
    pub hr_s: f64,
    /// log2 of the truncation estimate of the height jets.
    pub height_tail_log2: f64,
    map_f: MapEval<Float>,
    roof_f: RoofEval<Float>,
}

fn eigvec(m: &M2<Float>, nu: &Float) -> Option<V2<Float>> {
    let prec = nu.prec();
    let one = Float::with_val(prec, 1);
    let d0 = m[0][1].clone();
    let d1 = Float::with_val(prec, &m[1][1] - nu);
    if d0.clone().abs() >= d1.clone().abs() {
        if d0.is_zero() {
            return None;
        }
        Some([one, (nu.clone() - &m[0][0]) / d0])
    } else {
        Some([one, -(m[1][0].clone()) / d1])
    }
}

impl Anchor {
    pub fn new(model: &FlowModel, orbit: &BasePeriodicOrbit, wp: u32) -> Result<Anchor> {
        let base = &model.base;
        let points = match &orbit.exact {
            Some(ex) => vec![[
                Float::with_val(wp, ex.num[0]) / Float::with_val(wp, ex.den),
                Float::with_val(wp, ex.num[1]) / Float::with_val(wp, ex.den),
            ]],
            None => torus_maps::shoot(base, &orbit.points, &orbit.corrections, wp, &orbit.symbolic_id)?,
        };
        let p = points[0].clone();
        let shift = torus_maps::cycle_class(&base.linear, &orbit.corrections)
            .ok_or_else(|| LabError::Section(format!("anchor {} is too long", orbit.symbolic_id)))?;
        let map_f = base.at(wp);
        let roof_f = model.roof.prepare(base, wp)?;
        let ev = AnchorEval { map: map_f.clone(), roof: roof_f.clone(), shift: [Float::with_val(wp, shift[0]), Float::with_val(wp, shift[1])], n: orbit.period, reversed: model.reversed };
        let (gp, mono) = ev.g_d(&p);
        let drift = hp::log2_abs(&hp::max_abs(&v_sub(&gp, &p)));
        if drift > -(wp as f64) + 24.0 {
            return Err(LabError::Section(format!("anchor is not fixed by the return (2^{drift:.0})")));
        }
        let tr = hp::trace(&mono);
        let dt = hp::det(&mono);
        let disc = Float::with_val(wp, &tr * &tr) - Float::with_val(wp, &dt * 4u32);
        if disc <= 0 {
            return Err(LabError::BadSpectrum(orbit.symbolic_id.clone()));
        }
        let sq = disc.sqrt();
        let (a, b) = ((tr.clone() + &sq) / 2u32, (tr - &sq) / 2u32);
        let (lambda, mu) = if a.clone().abs() > b.clone().abs() { (a, b) } else { (b, a) };
        if !(lambda.clone().abs() > 1u32 && mu.clone().abs() < 1u32) {
            return Err(LabError::BadSpectrum(orbit.symbolic_id.clone()));
        }
        let e_u = eigvec(&mono, &lambda).ok_or_else(|| LabError::Section("unstable eigenvector has zero first component".into()))?;
        let e_s = eigvec(&mono, &mu).ok_or_else(|| LabError::Section("stable eigenvector has zero first component".into()))?;
        let t = ev.big_r_value(&p);
        let mut anc = Anchor {
            model: model.clone(),
            orbit: orbit.clone(),
            wp,
            n: orbit.period,
            shift,
            p: p.clone(),
            mono: mono.clone(),
            lambda: lambda.clone(),
            mu: mu.clone(),
            e_u: e_u.clone(),
            e_s: e_s.clone(),
            t,
            phi_u: StrongParam { nu: lambda.clone(), coeffs: vec![p.clone(), e_u], radius: 0.0 },
            phi_s: StrongParam { nu: mu.clone(), coeffs: vec![p, e_s], radius: 0.0 },
            hu_coef: vec![],
            hs_coef: vec![],
            hu_tail: vec![],
            hs_tail: vec![],
            hr_u: 0.0,
            hr_s: 0.0,
            height_tail_log2: f64::NEG_INFINITY,
            map_f,
            roof_f,
        };
        anc.phi_u = anc.parametrize(Branch::Unstable);
        anc.phi_s = anc.parametrize(Branch::Stable);
        anc.build_heights();
        Ok(anc)
    }

    /// Anchor at the model's natural working precision (+64 guard bits).
    pub fn for_orbit(model: &FlowModel, orbit: &BasePeriodicOrbit) -> Result<Anchor> {
        Anchor::new(model, orbit, model.precision_bits + 64)
    }

    pub fn eval<T: Real>(&self, proto: &T) -> AnchorEval<T> {
        AnchorEval {
            map: self.map_f.lift(proto),
            roof: self.roof_f.lift(proto),
            shift: [proto.int(self.shift[0]), proto.int(self.shift[1])],
            n: self.n,
            reversed: self.model.reversed,
        }
    }

    pub fn fl(&self, x: i64) -> Float {
        Float::with_val(self.wp, x)
    }

    fn param(&self, br: Branch) -> &StrongParam {
        match br {
            Branch::Unstable => &self.phi_u,
            Branch::Stable => &self.phi_s,
        }
    }

    /// Parametrization method: `phi_j = (nu^j I - M)^{-1} [g(Phi_{<j})]_j`.
    fn parametrize(&self, br: Branch) -> StrongParam {
        let wp = self.wp;
        let (nu, e) = match br {
            Branch::Unstable => (self.lambda.clone(), self.e_u.clone()),
            Branch::Stable => (self.mu.clone(), self.e_s.clone()),
        };
        let mut coeffs = vec![self.p.clone(), e];
        let linear = self.model.base.is_linear();
        if !linear {
            let zero = Float::new(wp);
            for j in 2..=PHI_ORDER {
                let x: V2<Jet<Float>> = [
                    Jet::from_coeffs((0..=j).map(|k| coeffs.get(k).map_or(zero.clone(), |c| c[0].clone())).collect()),
                    Jet::from_coeffs((0..=j).map(|k| coeffs.get(k).map_or(zero.clone(), |c| c[1].clone())).collect()),
                ];
                let ev = self.eval(&x[0]);
                let y = ev.g(&x);
                let ej = [y[0].coeff(j), y[1].coeff(j)];
                let nj = nu.clone().pow(j as i32);
                let a = [
                    [nj.clone() - &self.mono[0][0], -self.mono[0][1].clone()],
                    [-self.mono[1][0].clone(), nj - &self.mono[1][1]],
                ];
                coeffs.push(solve2(&a, &ej));
            }
        }
        let mut radius = 0.25f64;
        if !linear {
            let eps = -(wp as f64) - 16.0;
            for j in [PHI_ORDER - 1, PHI_ORDER] {
                let m = hp::log2_abs(&hp::max_abs(&coeffs[j]));
                if m.is_finite() {
                    radius = radius.min(((eps - m) / j as f64).exp2());
                }
            }
        }
        StrongParam { nu, coeffs, radius }
    }

    /// `Phi(t)` on the whole branch, iterating `g` (or `g^{-1}`) outside the
    /// polynomial radius.
    pub fn phi<T: Real>(&self, br: Branch, t: &T) -> V2<T> {
        let sp = self.param(br);
        let nu = t.from_float(&sp.nu);
        let mut x = t.clone();
        let mut k = 0;
        while x.to_f64().abs() > sp.radius && k < 4000 {
            x = match br {
                Branch::Unstable => x / nu.clone(),
                Branch::Stable => x * nu.clone(),
            };
            k += 1;
        }
        let mut y = sp.eval(&x);
        if k > 0 {
            let ev = self.eval(t);
            for _ in 0..k {
                y = match br {
                    Branch::Unstable => ev.g(&y),
                    Branch::Stable => ev.g_inv(&y),
                };
            }
        }
        y
    }

    /// `Phi'(t)`.
    pub fn phi_d<T: Real>(&self, br: Branch, t: &T) -> V2<T> {
        let j = Jet::variable(t.clone(), 1);
        let y = self.phi(br, &j);
        [y[0].coeff(1), y[1].coeff(1)]
    }

    fn build_heights(&mut self) {
        let wp = self.wp;
        let one = Float::with_val(wp, 1);
        let mut tail_est = f64::NEG_INFINITY;
        let mut radii = [0.0f64; 2];
        for (bi, br) in [Branch::Unstable, Branch::Stable].into_iter().enumerate() {
            let t = Jet::variable(Float::new(wp), HEIGHT_ORDER);
            let x = self.param(br).eval(&t);
            let ev = self.eval(&t);
            let r = ev.big_r_value(&x);
            let mut c: Vec<Float> = (0..=HEIGHT_ORDER).map(|j| r.coeff(j)).collect();
            c[0] = Float::new(wp);
            let mut rad = self.param(br).radius;
            let eps = -(wp as f64) - 16.0;
            for j in [HEIGHT_ORDER - 1, HEIGHT_ORDER] {
                let m = hp::log2_abs(&c[j]);
                if m.is_finite() {
                    rad = rad.min(((eps - m) / j as f64).exp2());
                }
            }
            // Keep the jet region clear of localized bumps.
            let e = match br {
                Branch::Unstable => &self.e_u,
                Branch::Stable => &self.e_s,
            };
            let elen = hp::to_f64_v(e).iter().map(|v| v * v).sum::<f64>().sqrt();
            let pf = hp::to_f64_v(&self.p);
            for (cen, r0) in self.roof_f.bump_disks() {
                let d: f64 = (0..2).map(|i| {
                    let z = pf[i] - cen[i];
                    let z = z - z.round();
                    z * z
                }).sum::<f64>().sqrt();
                rad = rad.min(((d - r0) / (2.0 * elen)).max(1e-6));
            }
            let mj = HEIGHT_ORDER;
            let est = hp::log2_abs(&c[mj]) + mj as f64 * rad.log2();
            tail_est = tail_est.max(est);
            radii[bi] = rad;
            let nu = self.param(br).nu.clone();
            let mut coef = vec![Float::new(wp)];
            let mut tail = vec![Float::new(wp)];
            for (j, cj) in c.iter().enumerate().skip(1) {
                let nj = nu.clone().pow(j as i32);
                match br {
                    Branch::Unstable => {
                        coef.push(cj.clone() / (nj.clone() - &one));
                        tail.push(cj.clone() / (one.clone() - one.clone() / nj));
                    }
                    Branch::Stable => {
                        let q = cj.clone() / (one.clone() - nj);
                        coef.push(-q.clone());
                        tail.push(q);
                    }
                }
            }
            match br {
                Branch::Unstable => {
                    self.hu_coef = coef;
                    self.hu_tail = tail;
                }
                Branch::Stable => {
                    self.hs_coef = coef;
                    self.hs_tail = tail;
                }
            }
        }
        self.hr_u = radii[0];
        self.hr_s = radii[1];
        self.height_tail_log2 = tail_est;
    }

    fn poly<T: Real>(c: &[Float], x: &T) -> T {
        let mut acc = x.from_float(&c[c.len() - 1]);
        for k in (0..c.len() - 1).rev() {
            acc = acc * x.clone() + x.from_float(&c[k]);
        }
        acc
    }

    /// `h^s(xi) = -sum_{k>=0} [R(Phi^s(mu^k xi)) - T]`.
    pub fn h_s<T: Real>(&self, xi: &T) -> T {
        let mu = xi.from_float(&self.mu);
        let tt = xi.from_float(&self.t);
        let ev = self.eval(xi);
        let mut acc = xi.zero();
        let mut x = xi.clone();
        let mut k = 0;
        while x.to_f64().abs() > self.hr_s && k < 4000 {
            acc = acc + ev.big_r_value(&self.phi(Branch::Stable, &x)) - tt.clone();
            x = x * mu.clone();
            k += 1;
        }
        -(acc + Self::poly(&self.hs_tail, &x))
    }

    /// `h^u(eta) = sum_{k>=1} [R(Phi^u(lambda^{-k} eta)) - T]`.
    pub fn h_u<T: Real>(&self, eta: &T) -> T {
        let lam = eta.from_float(&self.lambda);
        let tt = eta.from_float(&self.t);
        let ev = self.eval(eta);
        let mut acc = eta.zero();
        let mut x = eta.clone() / lam.clone();
        let mut k = 0;
        while x.to_f64().abs() > self.hr_u && k < 4000 {
            acc = acc + ev.big_r_value(&self.phi(Branch::Unstable, &x)) - tt.clone();
            x = x / lam.clone();
            k += 1;
        }
        acc + Self::poly(&self.hu_tail, &x)
    }

    pub fn height<T: Real>(&self, br: Branch, t: &T) -> T {
        match br {
            Branch::Stable => self.h_s(t),
            Branch::Unstable => self.h_u(t),
        }
    }

    pub fn height_d<T: Real>(&self, br: Branch, t: &T) -> T {
        self.height(br, &Jet::variable(t.clone(), 1)).coeff(1)
    }

    /// `h^s'(0)`.
    pub fn hs1(&self) -> Float {
        self.hs_coef[1].clone()
    }

    pub fn hu1(&self) -> Float {
        self.hu_coef[1].clone()
    }

    /// Section base point `b(xi, eta) = Phi^s(xi) + Phi^u(eta) - p`.
    pub fn b<T: Real>(&self, xi: &T, eta: &T) -> V2<T> {
        let s = self.phi(Branch::Stable, xi);
        let u = self.phi(Branch::Unstable, eta);
        let p = [xi.from_float(&self.p[0]), xi.from_float(&self.p[1])];
        v_sub(&v_add(&s, &u), &p)
    }

    /// Chart coordinates of a base point near `p` (Newton on `b`).
    pub fn b_inv(&self, y: &V2<Float>) -> Result<(Float, Float)> {
        let d = v_sub(y, &self.p);
        let c = coords(&self.e_s, &self.e_u, &d);
        let (mut xi, mut eta) = (c[0].clone(), c[1].clone());
        let tol = -(self.wp as f64) + 12.0;
        for _ in 0..100 {
            let r = v_sub(&self.b(&xi, &eta), y);
            let ds = self.phi_d(Branch::Stable, &xi);
            let du = self.phi_d(Branch::Unstable, &eta);
            let m = [[ds[0].clone(), du[0].clone()], [ds[1].clone(), du[1].clone()]];
            let dx = solve2(&m, &r);
            xi -= &dx[0];
            eta -= &dx[1];
            if hp::log2_abs(&hp::max_abs(&dx)) < tol {
                return Ok((xi, eta));
            }
        }
        Err(LabError::Section("chart inversion did not converge".into()))
    }

    /// Total height `H(xi, eta)`.
    pub fn big_h<T: Real>(&self, xi: &T, eta: &T) -> T {
        self.h_s(xi) + self.h_u(eta)
    }

    /// Return time of the flow from the section to itself near `p`.
    pub fn tau_hat(&self, xi: &Float, eta: &Float) -> Result<Float> {
        let ev = self.eval(xi);
        let y = self.b(xi, eta);
        let (b1, b2) = self.b_inv(&ev.g(&y))?;
        Ok(self.big_h(xi, eta) + ev.big_r_value(&y) - self.big_h(&b1, &b2))
    }

    /// `(d_xi beta)(0, eta)` in the basis `(e^s, Phi^u'(lambda eta))` and
    /// `d_1 tau_hat(0, eta)`.
    pub fn d1_tau_u<T: Real>(&self, eta: &T) -> (V2<T>, T) {
        let ev = self.eval(eta);
        let es = [eta.from_float(&self.e_s[0]), eta.from_float(&self.e_s[1])];
        let y = self.phi(Branch::Unstable, eta);
        let (_, dg) = ev.g_d(&y);
        let v = mat_vec(&dg, &es);
        let le = eta.clone() * eta.from_float(&self.lambda);
        let u2 = self.phi_d(Branch::Unstable, &le);
        let db = coords(&es, &u2, &v);
        let (_, gr) = ev.big_r(&y);
        let hs1 = eta.from_float(&self.hs1());
        let hu_d = self.height_d(Branch::Unstable, &le);
        let val = hs1.clone() + dot(&gr, &es) - (hs1 * db[0].clone() + hu_d * db[1].clone());
        (db, val)
    }

    /// Coefficients `c_j` of `d_1 tau_hat(0, eta) = sum c_j eta^j`.
    pub fn d1_tau_coeffs(&self, order: usize) -> Vec<Float> {
        let j = Jet::variable(Float::new(self.wp), order);
        let (_, v) = self.d1_tau_u(&j);
        (0..=order).map(|k| v.coeff(k)).collect()
    }
}

/// Height of the flow's strong stable (`s`) or unstable (`u`) manifold of
/// the periodic orbit over the base leaf through its representative, at
/// leaf offset `t`, with derivatives up to `order`.
#[derive(Clone, Debug)]
pub struct HeightJet {
    pub value: Float,
    /// `d^k h / dt^k` for `k = 1..=order`.
    pub derivatives: Vec<Float>,
    pub tail_log2: f64,
}

pub fn strong_manifold_height(model: &FlowModel, orbit: &BasePeriodicOrbit, branch: Branch, offset: f64, order: usize) -> Result<HeightJet> {
    let a = Anchor::for_orbit(model, orbit)?;
    Ok(height_jet(&a, branch, &hp::dec(a.wp, offset), order))
}

pub fn height_jet(a: &Anchor, branch: Branch, t: &Float, order: usize) -> HeightJet {
    let j = a.height(branch, &Jet::variable(t.clone(), order.max(1)));
    let mut fact = Float::with_val(a.wp, 1);
    let mut derivatives = Vec::new();
    for k in 1..=order {
        fact *= k as u32;
        derivatives.push(j.coeff(k) * fact.clone());
    }
    HeightJet { value: j.coeff(0), derivatives, tail_log2: a.height_tail_log2 }
}

/// Crude transversal at a periodic point: graph of `-h(xi, eta)` over the
/// base chart `b(xi, eta)`.
#[derive(Clone, Debug)]
pub struct SectionChart {
    pub anchor: Anchor,
    pub domain_radius: f64,
}

impl SectionChart {
    pub fn h(&self, xi: &Float, eta: &Float) -> Float {
        self.anchor.big_h(xi, eta)
    }
}

pub fn section_at(model: &FlowModel, orbit: &BasePeriodicOrbit) -> Result<SectionChart> {
    let anchor = Anchor::for_orbit(model, orbit)?;
    // Parametrizations and heights extend past their jet radii by iterating
    // the return, so the chart is limited by the local-leaf scale only.
    let domain_radius = SECTION_RADIUS;
    Ok(SectionChart { anchor, domain_radius })
}

#[derive(Clone, Debug)]
pub struct HittingTimeJets {
    pub j_max: usize,
    /// `d_1 d_2^j tau_hat(0,0)` for `j = 1..=j_max`.
    pub mixed: Vec<Float>,
    /// Coefficients of `d_1 tau_hat(0, eta)` (index 0 must vanish).
    pub coeffs: Vec<Float>,
    /// Samples `(eta, d_1 tau_hat(0, eta))` along the unstable axis.
    pub samples: Vec<(f64, Float)>,
    /// Finite-difference values for `j = 1, 2`.
    pub fd: Vec<Float>,
}

/// Mixed partials of the return time from the jets of the roof-sum-plus-height
/// formula, cross-checked by central differences.
pub fn hitting_time_jets(section: &SectionChart, j_max: usize) -> Result<HittingTimeJets> {
    if j_max == 0 || j_max > 4 {
        return Err(LabError::Invalid("j_max must be in 1..=4".into()));
    }
    let a = &section.anchor;
    let wp = a.wp;
    let coeffs = a.d1_tau_coeffs(j_max);
    let scale = coeffs.iter().map(hp::log2_abs).fold(0.0f64, f64::max);
    if hp::log2_abs(&coeffs[0]) > -(wp as f64) + 32.0 + scale {
        return Err(LabError::JetMismatch(format!("d1 tau(0,0) = {}", coeffs[0].to_f64())));
    }
    let mut fact = Float::with_val(wp, 1);
    let mut mixed = Vec::new();
    for (j, c) in coeffs.iter().enumerate().skip(1) {
        fact *= j as u32;
        mixed.push(c.clone() * fact.clone());
    }
    let samples = [0.0, 0.01, 0.02, 0.05]
        .iter()
        .map(|&e| (e, a.d1_tau_u(&hp::dec(wp, e)).1))
        .collect();
    // d1 d2: step 2^{-p/3}; d1 d2^2: step 2^{-p/4}.
    let t = |x: &Float, y: &Float| a.tau_hat(x, y);
    let h1 = Float::with_val(wp, Float::i_exp(1, -(wp as i32) / 3));
    let m1 = -h1.clone();
    let fd1 = (t(&h1, &h1)? - t(&h1, &m1)? - t(&m1, &h1)? + t(&m1, &m1)?) / (h1.clone() * h1.clone() * 4u32);
    let h2 = Float::with_val(wp, Float::i_exp(1, -(wp as i32) / 4));
    let m2 = -h2.clone();
    let z = Float::new(wp);
    let second = |x: &Float| -> Result<Float> { Ok(t(x, &h2)? - t(x, &z)? * 2u32 + t(x, &m2)?) };
    let fd2 = (second(&h2)? - second(&m2)?) / (h2.clone() * h2.clone() * h2.clone() * 2u32);
    let checks = [(&mixed[0], &fd1, -(wp as f64) / 3.0 + 24.0), (mixed.get(1).unwrap_or(&z), &fd2, -(wp as f64) / 4.0 + 24.0)];
    for (k, (an, fd, tol)) in checks.iter().enumerate() {
        if k + 1 > j_max {
            break;
        }
        let gap = hp::log2_abs(&Float::with_val(wp, *an - *fd));
        if gap > tol + scale.max(0.0) {
            return Err(LabError::JetMismatch(format!("order {}: jet {} vs difference {}", k + 1, an.to_f64(), fd.to_f64())));
        }
    }
    Ok(HittingTimeJets { j_max, mixed, coeffs, samples, fd: vec![fd1, fd2] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_maps::{make_linear_map, orbits_of_period, standard_perturbed, CAT};

    fn cat_model(roof: Roof) -> FlowModel {
        make_suspension(make_linear_map(CAT).unwrap(), roof, 256).unwrap()
    }

    #[test]
    fn roof_certificate() {
        let base = make_linear_map(CAT).unwrap();
        assert!(make_suspension(base.clone(), Roof::cos_x1(1.0, 0.25), 256).is_ok());
        assert!(matches!(make_suspension(base.clone(), Roof::cos_x1(1.0, 1.5), 256), Err(LabError::RoofNotPositive(_))));
        let dis = standard_perturbed(0.01).unwrap();
        assert!(Roof::log_jacobian_plus(1.0).lower_bound(&dis) > 0.9);
    }

    #[test]
    fn constant_and_cos_periods() {
        let m = cat_model(Roof::constant(1.0));
        for o in orbits_of_period(&m.base, 3, 288).unwrap() {
            assert_eq!(flow_period(&m, &o).unwrap(), 3);
        }
        let m = cat_model(Roof::cos_x1(1.0, 0.25));
        let o = &orbits_of_period(&m.base, 1, 288).unwrap()[0];
        assert_eq!(flow_period(&m, o).unwrap(), Float::with_val(256, 1.25));
    }

    #[test]
    fn precision_ladder() {
        let m = cat_model(Roof::cos_x1(1.0, 0.25));
        let o = &orbits_of_period(&m.base, 2, 400).unwrap()[0];
        let a = flow_period(&m, o).unwrap();
        let b = flow_period(&m.with_precision(320), o).unwrap();
        assert!(hp::log2_abs(&Float::with_val(320, &a - &b)) < -240.0);
    }

    #[test]
    fn classes_and_mild_certificate() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::constant(1.0), 256).unwrap();
        let o = fixed_point_orbit(&m).unwrap();
        assert_eq!(o.class, DissipationClass::Expanding);
        let mc = o.mild.clone().unwrap();
        assert!((mc.log_contraction.exp() - 0.845).abs() < 0.01);
        let r = fixed_point_orbit(&m.time_reversed()).unwrap();
        assert_eq!(r.class, DissipationClass::Contracting);
        assert!((r.multipliers.lambda.to_f64() - 1.0 / 0.39896).abs() < 1e-3);
        assert_eq!(r.multipliers.log_lambda, -o.multipliers.log_mu.clone());
        let c = fixed_point_orbit(&cat_model(Roof::cos_x1(1.0, 0.25))).unwrap();
        assert_eq!(c.class, DissipationClass::Preserving);
    }

    #[test]
    fn constant_roof_heights_vanish() {
        let m = cat_model(Roof::constant(1.0));
        let sec = section_at(&m, &fixed_point_orbit(&m).unwrap().base).unwrap();
        let a = &sec.anchor;
        assert!(a.h_s(&hp::dec(a.wp, 0.1)).is_zero());
        assert!(a.h_u(&hp::dec(a.wp, -0.2)).is_zero());
        let j = hitting_time_jets(&sec, 3).unwrap();
        assert!(j.mixed.iter().all(|x| x.is_zero()));
    }

    /// Height derivative at 0 against the direct series on the linear leaf.
    #[test]
    fn hs_derivative_series_oracle() {
        let m = cat_model(Roof::cos_x1(1.0, 0.25));
        let a = Anchor::for_orbit(&m, &fixed_point_orbit(&m).unwrap().base).unwrap();
        let e = m.base.linear_eigen(a.wp);
        // r = 1 + 0.25 cos(2 pi x1); along x + t e^s with f^k = A^k: d/dt r(mu^k t e^s) at 0 is 0.
        // So use an offset point: derivative of h^s at xi0.
        let xi0 = hp::dec(a.wp, 0.07);
        let direct = {
            let mut acc = Float::new(a.wp);
            let mut muk = Float::with_val(a.wp, 1);
            for _ in 0..400 {
                let x1 = Float::with_val(a.wp, &xi0 * &muk) * &e.e_s[0];
                let s = (x1 * hp::tau(a.wp)).sin();
                acc += s * hp::tau(a.wp) * Float::with_val(a.wp, 0.25) * &muk * &e.e_s[0];
                muk *= &e.mu;
            }
            acc
        };
        let got = a.height_d(Branch::Stable, &xi0);
        assert!(hp::log2_abs(&(got - direct)) < -200.0);
    }

    #[test]
    fn axes_are_flat_and_reversal_swaps_heights() {
        let m = cat_model(Roof::cos_x1(1.0, 0.25));
        let orb = fixed_point_orbit(&m).unwrap().base;
        let a = Anchor::for_orbit(&m, &orb).unwrap();
        let z = Float::new(a.wp);
        let x = hp::dec(a.wp, 0.03);
        assert!(hp::log2_abs(&(a.tau_hat(&x, &z).unwrap() - &a.t)) < -250.0);
        assert!(hp::log2_abs(&(a.tau_hat(&z, &x).unwrap() - &a.t)) < -250.0);
        let r = Anchor::for_orbit(&m.time_reversed(), &orb).unwrap();
        let y = hp::dec(a.wp, 0.11);
        assert!(hp::log2_abs(&(r.h_s(&y) + a.h_u(&y))) < -250.0);
        assert!(hp::log2_abs(&(r.h_u(&y) + a.h_s(&y))) < -250.0);
    }

    #[test]
    fn perturbed_parametrization_is_invariant() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::cos_x1(1.0, 0.25), 256).unwrap();
        let a = Anchor::for_orbit(&m, &fixed_point_orbit(&m).unwrap().base).unwrap();
        let ev = a.eval(&a.p[0]);
        for t in [0.003, 0.04, 0.3] {
            let t = hp::dec(a.wp, t);
            let lhs = ev.g(&a.phi(Branch::Unstable, &t));
            let rhs = a.phi(Branch::Unstable, &(t.clone() * &a.lambda));
            assert!(hp::log2_abs(&hp::max_abs(&v_sub(&lhs, &rhs))) < -250.0);
            let lhs = ev.g(&a.phi(Branch::Stable, &t));
            let rhs = a.phi(Branch::Stable, &(t.clone() * &a.mu));
            assert!(hp::log2_abs(&hp::max_abs(&v_sub(&lhs, &rhs))) < -250.0);
        }
        let sec = section_at(&m, &a.orbit).unwrap();
        let j = hitting_time_jets(&sec, 2).unwrap();
        assert!(!j.mixed[0].is_zero());
    }

    #[test]
    fn stable_leaf_contracts() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::constant(1.0), 256).unwrap();
        let a = Anchor::for_orbit(&m, &fixed_point_orbit(&m).unwrap().base).unwrap();
        let ev = a.eval(&a.p[0]);
        let mut y = a.phi(Branch::Stable, &hp::dec(a.wp, 0.1));
        let d0 = hp::max_abs(&v_sub(&y, &a.p)).to_f64();
        for _ in 0..20 {
            y = ev.g(&y);
        }
        let d20 = hp::max_abs(&v_sub(&y, &a.p)).to_f64();
        let rate = (d20 / d0).ln() / 20.0;
        assert!((rate - a.mu.to_f64().abs().ln()).abs() < 1e-3);
    }
}
