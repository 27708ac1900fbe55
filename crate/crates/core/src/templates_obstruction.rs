//! Stable and unstable templates along the local leaves of a periodic anchor
//! and the obstruction value `zeta_hat` attached to a homoclinic branch.
//!
//! The stable template at the section point over `Phi^u(eta)` is the slope,
//! in flow time, of that point's strong stable manifold relative to the
//! section:
//!
//! `T(eta) = h^s'(0) + c h^u'(eta) - sigma(Phi^u(eta); w)`,
//!
//! where `w = e^s + c Phi^u'(eta)` spans `E^s` and
//! `sigma(y; w) = -sum_{k>=0} DR(g^k y) Dg^k w`.

use crate::error::{LabError, Result};
use crate::homoclinic_shadowing::{self, HomoclinicDatum};
use crate::hp::{self, coords, dot, solve2, V2};
use crate::jet::Jet;
use crate::suspension_flow::{Anchor, Branch, FlowModel, FlowPeriodicOrbit, SectionChart};
use rayon::prelude::*;
use rug::ops::Pow;
use rug::Float;
use serde::Serialize;
use std::path::Path;

/// Extra working bits for the obstruction series.
pub const ZETA_GUARD_BITS: u32 = 400;
/// Order of the analytic part subtracted at the truncation point.
pub const ZETA_JET_ORDER: usize = 4;
/// Lattice classes `m` with `max |m_i| <= SCAN_CLASS_RADIUS` enter the scan.
pub const SCAN_CLASS_RADIUS: i64 = 2;

#[derive(Clone, Debug)]
pub struct TemplateSample {
    pub anchor: String,
    pub branch: Branch,
    /// `eta` for the stable template, `xi` for the unstable one.
    pub param: Float,
    pub value: Float,
    /// Slope `c` of the strong direction in the section chart.
    pub weak_slope: Float,
    pub tail_log2: f64,
}

#[derive(Clone, Debug)]
pub struct ObstructionValue {
    pub lattice_class: [i64; 2],
    pub reversed: bool,
    pub eta_inf: Float,
    pub xi_inf: Float,
    pub zeta_hat: Float,
    /// Number of backward returns `L` before the analytic part takes over.
    pub truncation: usize,
    pub jet_order: usize,
    pub tail_bound_log2: f64,
    /// `log2 |lambda_hat(-l) d1 tau_hat(0, eta_l)|` for `l = 1..=L`.
    pub term_log2: Vec<f64>,
    /// `T(eta_inf) + sum_{l<=L} lambda_hat(-l) d1 tau_hat(0, eta_l)`.
    pub partial_sum: Float,
    /// `lambda_hat(-L) T(eta_L)`, equal to `partial_sum` by the cocycle relation.
    pub transported: Float,
    /// `T(eta_inf)` on the homoclinic path.
    pub template_at_q: Float,
    pub mu_lambda: f64,
}

impl ObstructionValue {
    pub fn branch_id(&self) -> String {
        format!("m{},{}{}", self.lattice_class[0], self.lattice_class[1], if self.reversed { "~" } else { "" })
    }
}

fn frac(v: &V2<Float>) -> V2<Float> {
    [v[0].clone() - v[0].clone().floor(), v[1].clone() - v[1].clone().floor()]
}

fn log2_max(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp2() + (b - m).exp2()).log2()
    }
}

/// Pulls the vector `v_end` at `ys[last]` back along the orbit `ys` and sums
/// `-DR(y_k) v_k`. Returns the pulled-back vectors and the sum, which is
/// `sigma(ys[0]; v_0) - sigma(ys[last]; v_end)`.
fn pull_back_stable(a: &Anchor, ys: &[V2<Float>], v_end: V2<Float>) -> (Vec<V2<Float>>, Float) {
    let ev = a.eval(&ys[0][0]);
    let m = ys.len() - 1;
    let mut vs = vec![v_end.clone(); m + 1];
    let mut acc = Float::new(a.wp);
    let mut v = v_end;
    for k in (0..m).rev() {
        let (_, d) = ev.g_d(&ys[k]);
        v = solve2(&d, &v);
        let (_, gr) = ev.big_r(&ys[k]);
        acc -= dot(&gr, &v);
        vs[k] = v.clone();
    }
    (vs, acc)
}

/// Forward pushes of `v_end` at `ys[last]` (a backward orbit) and the sum
/// `sum_{k>=1} DR(y_k) v_k`.
fn push_forward_unstable(a: &Anchor, ys: &[V2<Float>], v_end: V2<Float>) -> (V2<Float>, Float) {
    let ev = a.eval(&ys[0][0]);
    let m = ys.len() - 1;
    let mut acc = Float::new(a.wp);
    let mut v = v_end;
    for k in (1..=m).rev() {
        let (_, gr) = ev.big_r(&ys[k]);
        acc += dot(&gr, &v);
        let (_, d) = ev.g_d(&ys[k]);
        v = hp::mat_vec(&d, &v);
    }
    (v, acc)
}

fn horizon(a: &Anchor) -> usize {
    let lmu = -a.mu.to_f64().abs().log2();
    let llam = a.lambda.to_f64().abs().log2();
    let rate = lmu.min(llam);
    (((a.wp as f64 + 32.0) / rate).ceil() as usize).max(8)
}

/// Stable template at `Phi^u(eta)` with `E^s` found by pulling an arbitrary
/// vector back from far along the forward orbit.
fn stable_template_value(a: &Anchor, eta: &Float) -> (Float, Float, f64) {
    let kk = horizon(a);
    let ev = a.eval(eta);
    let mut ys = Vec::with_capacity(kk + 1);
    ys.push(a.phi(Branch::Unstable, eta));
    for k in 0..kk {
        let y = frac(&ev.g(&ys[k]));
        ys.push(y);
    }
    let (vs, sig) = pull_back_stable(a, &ys, a.e_s.clone());
    let du = a.phi_d(Branch::Unstable, eta);
    let c = coords(&a.e_s, &du, &vs[0]);
    let s = c[0].clone();
    let slope = Float::with_val(a.wp, &c[1] / &s);
    let value = a.hs1() + slope.clone() * a.height_d(Branch::Unstable, eta) - sig / &s;
    let tail = hp::log2_abs(&hp::max_abs(&vs[kk])) - hp::log2_abs(&s) + 4.0;
    (value, slope, tail)
}

fn unstable_template_value(a: &Anchor, xi: &Float) -> (Float, Float, f64) {
    let kk = horizon(a);
    let ev = a.eval(xi);
    let mut ys = Vec::with_capacity(kk + 1);
    ys.push(a.phi(Branch::Stable, xi));
    for k in 0..kk {
        let y = frac(&ev.g_inv(&ys[k]));
        ys.push(y);
    }
    let (v0, sig) = push_forward_unstable(a, &ys, a.e_u.clone());
    let ds = a.phi_d(Branch::Stable, xi);
    let c = coords(&ds, &a.e_u, &v0);
    let beta = c[1].clone();
    let slope = Float::with_val(a.wp, &c[0] / &beta);
    let value = slope.clone() * a.height_d(Branch::Stable, xi) + a.hu1() - sig / &beta;
    let tail = -hp::log2_abs(&beta) + 4.0;
    (value, slope, tail)
}

fn check_domain(section: &SectionChart, t: f64) -> Result<()> {
    if !(t.abs() <= section.domain_radius) {
        return Err(LabError::Section(format!("|{t}| exceeds the section domain radius {:e}", section.domain_radius)));
    }
    Ok(())
}

fn sample(section: &SectionChart, branch: Branch, t: f64, r: (Float, Float, f64)) -> Result<TemplateSample> {
    let a = &section.anchor;
    let tail_ok = -(a.model.precision_bits as f64) + 16.0;
    if r.2 > tail_ok {
        return Err(LabError::TailFailure(format!("template tail 2^{:.1} at {t}", r.2)));
    }
    Ok(TemplateSample {
        anchor: a.orbit.symbolic_id.clone(),
        branch,
        param: hp::dec(a.wp, t),
        value: r.0,
        weak_slope: r.1,
        tail_log2: r.2,
    })
}

pub fn stable_template(section: &SectionChart, eta: f64) -> Result<TemplateSample> {
    check_domain(section, eta)?;
    let a = &section.anchor;
    let r = stable_template_value(a, &hp::dec(a.wp, eta));
    sample(section, Branch::Stable, eta, r)
}

/// Time-reversed counterpart: the flow-time slope of the strong unstable
/// manifold of the section point over `Phi^s(xi)`. It equals minus the stable
/// template of the reversed model at the same parameter.
pub fn unstable_template(section: &SectionChart, xi: f64) -> Result<TemplateSample> {
    check_domain(section, xi)?;
    let a = &section.anchor;
    let r = unstable_template_value(a, &hp::dec(a.wp, xi));
    sample(section, Branch::Unstable, xi, r)
}

/// Jets at `eta = 0` of `lambda_hat_1(eta)` (the weak-stable multiplier of the
/// section return along the unstable axis) and of `d1 tau_hat(0, eta)`.
pub fn section_return_jets(a: &Anchor, order: usize) -> (Vec<Float>, Vec<Float>) {
    let j = Jet::variable(Float::new(a.wp), order);
    let (db, v) = a.d1_tau_u(&j);
    ((0..=order).map(|k| db[0].coeff(k)).collect(), (0..=order).map(|k| v.coeff(k)).collect())
}

/// Coefficients of the analytic solution `P` of
/// `P(eta) = lambda_hat_1(eta) P(lambda eta) + d1 tau_hat(0, eta)`.
pub fn analytic_part(a: &Anchor, order: usize) -> Vec<Float> {
    let (l1, c) = section_return_jets(a, order);
    let wp = a.wp;
    let mut p = vec![Float::new(wp); order + 1];
    for j in 1..=order {
        let mut acc = c[j].clone();
        for i in 1..j {
            let lp = a.lambda.clone().pow((j - i) as u32);
            acc += Float::with_val(wp, &l1[i] * &lp) * &p[j - i];
        }
        let den = Float::with_val(wp, &a.mu * a.lambda.clone().pow(j as u32)) - 1u32;
        p[j] = -(acc / den);
    }
    p
}

/// Points `Phi^u(eta_inf lambda^{i-L})`, `i = 0..=L`, then the excursion to
/// the stable leaf (torus-reduced), and the endpoint data on `W^s_loc`.
struct HomPath {
    ys: Vec<V2<Float>>,
    etas: Vec<Float>,
}

fn hom_path(a: &Anchor, eta: &Float, xi: &Float, steps: u32, l: usize) -> Result<HomPath> {
    let wp = a.wp;
    let mut etas = Vec::with_capacity(l + 1);
    let mut e = eta.clone();
    for _ in 0..l {
        e /= &a.lambda;
    }
    for _ in 0..=l {
        etas.push(e.clone());
        e *= &a.lambda;
    }
    let mut ys: Vec<V2<Float>> = etas.iter().map(|t| frac(&a.phi(Branch::Unstable, t))).collect();
    let ev = a.eval(eta);
    let mut y = a.phi(Branch::Unstable, eta);
    for _ in 0..steps {
        y = ev.g(&y);
        ys.push(frac(&y));
    }
    let end = frac(&a.phi(Branch::Stable, xi));
    let gap = (0..2)
        .map(|i| {
            let d = Float::with_val(wp, &ys[ys.len() - 1][i] - &end[i]).to_f64();
            (d - d.round()).abs()
        })
        .fold(0.0, f64::max);
    if gap > (-(wp as f64) / 2.0).exp2() {
        return Err(LabError::Section(format!("homoclinic path misses the stable leaf by {gap:e}")));
    }
    Ok(HomPath { ys, etas })
}

/// Template at `eta_L` read off the homoclinic path, with the stable vectors
/// at every point of the unstable segment.
fn path_template(a: &Anchor, path: &HomPath, xi: &Float) -> (Float, Vec<Float>) {
    let l = path.etas.len() - 1;
    let v_end = a.phi_d(Branch::Stable, xi);
    let (vs, sig) = pull_back_stable(a, &path.ys, v_end);
    let sig = sig + a.height_d(Branch::Stable, xi);
    let mut s = Vec::with_capacity(l + 1);
    let mut slope0 = Float::new(a.wp);
    for i in 0..=l {
        let du = a.phi_d(Branch::Unstable, &path.etas[i]);
        let c = coords(&a.e_s, &du, &vs[i]);
        if i == 0 {
            slope0 = Float::with_val(a.wp, &c[1] / &c[0]);
        }
        s.push(c[0].clone());
    }
    let t = a.hs1() + slope0 * a.height_d(Branch::Unstable, &path.etas[0]) - sig / &s[0];
    (t, s)
}

/// High-precision anchor and homoclinic coordinates for `hom`.
fn refined(model: &FlowModel, hom: &HomoclinicDatum) -> Result<(Anchor, Float, Float, u32)> {
    let wp = model.precision_bits + ZETA_GUARD_BITS;
    let m = FlowModel { reversed: hom.reversed, ..model.clone() };
    let a = Anchor::new(&m, &hom.anchor.base, wp)?;
    let steps = hom.j + hom.k;
    let eta = Float::with_val(wp, &hom.eta_inf);
    let xi = Float::with_val(wp, &hom.xi_inf);
    let ev = a.eval(&eta);
    let mut y = a.phi(Branch::Unstable, &eta);
    for _ in 0..steps {
        y = ev.g(&y);
    }
    let s = a.phi(Branch::Stable, &xi);
    let shift = [
        Float::with_val(wp, Float::with_val(wp, &y[0] - &s[0]).round()),
        Float::with_val(wp, Float::with_val(wp, &y[1] - &s[1]).round()),
    ];
    let (eta, xi) = homoclinic_shadowing::solve_homoclinic(&a, eta, xi, steps, &shift)?;
    Ok((a, eta, xi, steps))
}

/// `zeta_hat = lambda_hat(-L) [T(eta_L) - P(eta_L)]`, the obstruction value of
/// the branch. Defined for volume-expanding anchors.
pub fn zeta_hat(model: &FlowModel, hom: &HomoclinicDatum) -> Result<ObstructionValue> {
    let (a, eta, xi, steps) = refined(model, hom)?;
    let wp = a.wp;
    let ml = Float::with_val(64, &a.mu * &a.lambda).to_f64();
    if ml.abs() <= 1.0 + 1e-12 {
        return Err(LabError::NotVolumeExpanding(ml));
    }
    let jo = ZETA_JET_ORDER;
    let p = analytic_part(&a, jo + 1);
    let llam = a.lambda.to_f64().abs().log2();
    let lmu = a.mu.to_f64().abs().log2();
    let le = hp::log2_abs(&eta);
    let pj = hp::log2_abs(&p[jo + 1]);
    let target = -(model.precision_bits as f64) - 24.0;
    // Truncation estimate |lambda_hat(-L)| |p_{J+1}| |eta_L|^{J+1}.
    let est = |l: usize| pj + (jo + 1) as f64 * (le - l as f64 * llam) - l as f64 * lmu;
    let mut l = 8usize;
    while est(l) > target && l < 2000 {
        l += 1;
    }
    zeta_at(&a, hom, &eta, &xi, steps, l, &p[..=jo], est(l) + 1.0, wp, ml)
}

/// Same as [`zeta_hat`] at an explicit truncation index.
pub fn zeta_hat_truncated(model: &FlowModel, hom: &HomoclinicDatum, l: usize) -> Result<ObstructionValue> {
    let (a, eta, xi, steps) = refined(model, hom)?;
    let ml = Float::with_val(64, &a.mu * &a.lambda).to_f64();
    if ml.abs() <= 1.0 + 1e-12 {
        return Err(LabError::NotVolumeExpanding(ml));
    }
    let jo = ZETA_JET_ORDER;
    let p = analytic_part(&a, jo + 1);
    let llam = a.lambda.to_f64().abs().log2();
    let lmu = a.mu.to_f64().abs().log2();
    let est = hp::log2_abs(&p[jo + 1]) + (jo + 1) as f64 * (hp::log2_abs(&eta) - l as f64 * llam) - l as f64 * lmu;
    let wp = a.wp;
    zeta_at(&a, hom, &eta, &xi, steps, l, &p[..=jo], est + 1.0, wp, ml)
}

#[allow(clippy::too_many_arguments)]
fn zeta_at(
    a: &Anchor,
    hom: &HomoclinicDatum,
    eta: &Float,
    xi: &Float,
    steps: u32,
    l: usize,
    p: &[Float],
    trunc_log2: f64,
    wp: u32,
    ml: f64,
) -> Result<ObstructionValue> {
    let path = hom_path(a, eta, xi, steps, l)?;
    let (t_l, s) = path_template(a, &path, xi);
    // lambda_hat(-l) = s_{L-l} / s_L.
    let lam_hat = |i: usize| Float::with_val(wp, &s[l - i] / &s[l]);
    let eta_l = &path.etas[0];
    let mut poly = Float::new(wp);
    for c in p.iter().rev() {
        poly = poly * eta_l + c;
    }
    let scale = lam_hat(l);
    let zeta = Float::with_val(wp, &t_l - &poly) * &scale;
    let transported = Float::with_val(wp, &t_l * &scale);

    // Audit: the original series from the template at q itself.
    let q_path = HomPath { ys: path.ys[l..].to_vec(), etas: vec![eta.clone()] };
    let (t_q, _) = path_template(a, &q_path, xi);
    let mut partial = t_q.clone();
    let mut term_log2 = Vec::with_capacity(l);
    for i in 1..=l {
        let (_, d1) = a.d1_tau_u(&path.etas[l - i]);
        let term = lam_hat(i) * d1;
        term_log2.push(hp::log2_abs(&term));
        partial += &term;
    }
    let round = -(wp as f64) + 24.0 + hp::log2_abs(&scale).max(0.0);
    let prec = a.model.precision_bits;
    Ok(ObstructionValue {
        lattice_class: hom.lattice_class,
        reversed: hom.reversed,
        eta_inf: Float::with_val(prec, eta),
        xi_inf: Float::with_val(prec, xi),
        zeta_hat: Float::with_val(prec, &zeta),
        truncation: l,
        jet_order: p.len() - 1,
        tail_bound_log2: log2_max(trunc_log2, round),
        term_log2,
        partial_sum: Float::with_val(prec, &partial),
        transported: Float::with_val(prec, &transported),
        template_at_q: Float::with_val(prec, &t_q),
        mu_lambda: ml,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub branch: String,
    pub eta_inf: f64,
    pub xi_inf: f64,
    pub zeta_hat: String,
    pub tail_bound_log2: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanVerdict {
    Obstructed,
    UnobstructedAtScale,
}

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionScan {
    pub anchor: String,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub rows: Vec<ScanRow>,
    pub max_abs_zeta_log2: f64,
    pub floor_log2: f64,
    pub verdict: ScanVerdict,
    #[serde(skip)]
    pub values: Vec<ObstructionValue>,
}

impl ObstructionScan {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["branch", "eta_inf", "xi_inf", "zeta_hat", "tail_bound_log2"])?;
        for r in &self.rows {
            w.write_record([
                r.branch.clone(),
                format!("{:.17e}", r.eta_inf),
                format!("{:.17e}", r.xi_inf),
                r.zeta_hat.clone(),
                format!("{:.2}", r.tail_bound_log2),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Values below `2^{-precision_bits + 32}` count as zero.
pub fn zeta_floor_log2(model: &FlowModel) -> f64 {
    -(model.precision_bits as f64) + 32.0
}

pub fn scan_classes() -> Vec<[i64; 2]> {
    let r = SCAN_CLASS_RADIUS;
    let mut v = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            if (a, b) != (0, 0) {
                v.push([a, b]);
            }
        }
    }
    v
}

/// Obstruction values of every branch whose `eta_inf` falls inside the grid's
/// range; obstructed when some value exceeds ten times the floor.
pub fn c1_obstruction_scan(model: &FlowModel, anchor: &FlowPeriodicOrbit, eta_grid: &[f64]) -> Result<ObstructionScan> {
    if eta_grid.is_empty() {
        return Err(LabError::Invalid("empty eta grid".into()));
    }
    let lo = eta_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eta_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let homs: Vec<HomoclinicDatum> = scan_classes()
        .into_par_iter()
        .filter_map(|m| homoclinic_shadowing::find_homoclinic(model, anchor, m).ok())
        .filter(|h| {
            let e = h.eta_inf.to_f64();
            e >= lo && e <= hi
        })
        .collect();
    let values: Vec<ObstructionValue> = homs.par_iter().map(|h| zeta_hat(model, h)).collect::<Result<_>>()?;
    let floor = zeta_floor_log2(model);
    let max_abs = values.iter().map(|v| hp::log2_abs(&v.zeta_hat)).fold(f64::NEG_INFINITY, f64::max);
    let verdict = if max_abs > floor + 10f64.log2() { ScanVerdict::Obstructed } else { ScanVerdict::UnobstructedAtScale };
    let rows = values
        .iter()
        .map(|v| ScanRow {
            branch: v.branch_id(),
            eta_inf: v.eta_inf.to_f64(),
            xi_inf: v.xi_inf.to_f64(),
            zeta_hat: hp::fmt_float(&v.zeta_hat),
            tail_bound_log2: v.tail_bound_log2,
        })
        .collect();
    Ok(ObstructionScan {
        anchor: anchor.id.clone(),
        grid_min: lo,
        grid_max: hi,
        grid_points: eta_grid.len(),
        rows,
        max_abs_zeta_log2: max_abs,
        floor_log2: floor,
        verdict,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suspension_flow::{fixed_point_orbit, make_suspension, section_at, Roof};
    use crate::torus_maps::{make_linear_map, standard_perturbed, CAT};

    fn close(a: &Float, b: &Float, log2_tol: f64) -> bool {
        let d = Float::with_val(a.prec(), a - b);
        hp::log2_abs(&d) < log2_tol
    }

    #[test]
    fn constant_roof_templates_vanish() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::constant(1.0), 192).unwrap();
        let o = fixed_point_orbit(&m).unwrap();
        let sec = section_at(&m, &o.base).unwrap();
        assert!(stable_template(&sec, 0.02).unwrap().value.is_zero());
        assert!(unstable_template(&sec, -0.03).unwrap().value.is_zero());
        let h = homoclinic_shadowing::find_homoclinic(&m, &o, [1, 1]).unwrap();
        assert!(zeta_hat(&m, &h).unwrap().zeta_hat.is_zero());
    }

    #[test]
    fn stable_template_invariance() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::cos_x1(1.0, 0.25), 192).unwrap();
        let o = fixed_point_orbit(&m).unwrap();
        let sec = section_at(&m, &o.base).unwrap();
        let a = &sec.anchor;
        assert!(stable_template(&sec, 0.0).unwrap().value.to_f64().abs() < 1e-50);
        for e in [0.003, 0.01, -0.02, 0.03, 0.05] {
            let eta = hp::dec(a.wp, e);
            let (t0, _, _) = stable_template_value(a, &eta);
            let (t1, _, _) = stable_template_value(a, &Float::with_val(a.wp, &eta * &a.lambda));
            let (db, d1) = a.d1_tau_u(&eta);
            let rhs = db[0].clone() * t1 + d1;
            assert!(close(&t0, &rhs, -150.0), "eta {e}: {} vs {}", t0.to_f64(), rhs.to_f64());
        }
    }

    #[test]
    fn unstable_template_matches_reversal() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::cos_x1(1.0, 0.25), 192).unwrap();
        let o = fixed_point_orbit(&m).unwrap();
        let sec = section_at(&m, &o.base).unwrap();
        let rm = m.time_reversed();
        let rsec = section_at(&rm, &o.base).unwrap();
        for x in [0.01, -0.04] {
            let u = unstable_template(&sec, x).unwrap();
            let s = stable_template(&rsec, x).unwrap();
            assert!(close(&u.value, &(-s.value.clone()), -150.0), "{} vs {}", u.value.to_f64(), s.value.to_f64());
        }
    }

    #[test]
    fn zeta_series_and_truncation_audit() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::cos_x1(1.0, 0.25), 192).unwrap();
        let o = fixed_point_orbit(&m).unwrap();
        let h = homoclinic_shadowing::find_homoclinic(&m, &o, [1, 1]).unwrap();
        let z = zeta_hat(&m, &h).unwrap();
        assert!(z.tail_bound_log2 < -(192.0) + 16.0);
        assert!(!z.zeta_hat.is_zero());
        // Cocycle relation: the telescoped sum equals the transported template.
        assert!(close(&z.partial_sum, &z.transported, -150.0));
        // Terms decay at the volume rate.
        let r = (z.mu_lambda).log2();
        for w in z.term_log2.windows(2).skip(4) {
            assert!(w[1] - w[0] < -r * 0.5, "{:?}", w);
        }
        let z2 = zeta_hat_truncated(&m, &h, 2 * z.truncation).unwrap();
        let d = Float::with_val(192, &z2.zeta_hat - &z.zeta_hat);
        assert!(hp::log2_abs(&d) <= z.tail_bound_log2, "{} > {}", hp::log2_abs(&d), z.tail_bound_log2);
    }

    #[test]
    fn conservative_anchor_is_rejected() {
        let m = make_suspension(make_linear_map(CAT).unwrap(), Roof::cos_x1(1.0, 0.25), 128).unwrap();
        let o = fixed_point_orbit(&m).unwrap();
        let h = homoclinic_shadowing::find_homoclinic(&m, &o, [1, 1]).unwrap();
        assert!(matches!(zeta_hat(&m, &h), Err(LabError::NotVolumeExpanding(_))));
    }
}
