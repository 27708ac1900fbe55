//! Homoclinic data at a periodic anchor and the periodic orbits that shadow
//! `n` turns around the anchor followed by one homoclinic excursion.

use crate::error::{LabError, Result};
use crate::hp::{self, mat_vec, solve2, v_sub, V2};
use crate::lattice::{self, BigMat};
use crate::suspension_flow::{self, Anchor, Branch, FlowModel, FlowPeriodicOrbit};
use crate::torus_maps::{self, BasePeriodicOrbit};
use rayon::prelude::*;
use rug::{Float, Integer, Rational};
use std::path::Path;
use std::sync::Arc;

/// Largest admissible `|eta_inf|`, `|xi_inf|` (local-leaf scale).
pub const LOCAL_SCALE: f64 = 0.5;
/// Shadowing-distance threshold defining `n0` (a tenth of the local scale).
pub const AUDIT_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct HomoclinicDatum {
    pub anchor: FlowPeriodicOrbit,
    pub lattice_class: [i64; 2],
    /// Return steps from `q` out to the global homoclinic point, and from
    /// there into `W^s_loc`.
    pub j: u32,
    pub k: u32,
    pub eta_inf: Float,
    pub xi_inf: Float,
    /// `q = Phi^u(eta_inf)` and `q' = Phi^s(xi_inf)` (lift near the anchor).
    pub q: V2<Float>,
    pub q_prime: V2<Float>,
    /// Base steps of the excursion, `N (j + k)`.
    pub n_prime: u32,
    /// Excursion time from the relative Birkhoff series.
    pub excursion: Float,
    pub n0: usize,
    /// True when the datum describes the time-reversed model (coordinates
    /// and branches swapped; geometry computed on the forward model).
    pub reversed: bool,
    pub local: Arc<Anchor>,
}

impl HomoclinicDatum {
    /// Turns of the anchor's return per shadowing orbit of index `n`.
    pub fn turns(&self, n: usize) -> usize {
        n + (self.j + self.k) as usize
    }

    /// The forward-model datum behind a reversed one (identity otherwise).
    pub fn forward_view(&self) -> HomoclinicDatum {
        if !self.reversed {
            return self.clone();
        }
        HomoclinicDatum {
            j: self.k,
            k: self.j,
            eta_inf: self.xi_inf.clone(),
            xi_inf: self.eta_inf.clone(),
            q: self.q_prime.clone(),
            q_prime: self.q.clone(),
            reversed: false,
            ..self.clone()
        }
    }

    pub fn xi_eta(&self) -> Float {
        Float::with_val(self.xi_inf.prec(), &self.xi_inf * &self.eta_inf)
    }
}

fn int_vec(m: [i64; 2]) -> [Integer; 2] {
    [Integer::from(m[0]), Integer::from(m[1])]
}

fn float_vec(prec: u32, v: &[Integer; 2]) -> V2<Float> {
    [Float::with_val(prec, &v[0]), Float::with_val(prec, &v[1])]
}

fn torus_dist(a: &V2<Float>, b: &V2<Float>) -> f64 {
    (0..2)
        .map(|i| {
            let d = Float::with_val(a[i].prec(), &a[i] - &b[i]).to_f64();
            (d - d.round()).abs()
        })
        .fold(0.0, f64::max)
}

/// Homoclinic point of the anchor in lattice class `m`: `q` on `W^u_loc(p)`
/// whose image after `j + k` returns lies on `W^s_loc(p) + A^{Nk} m`.
pub fn find_homoclinic(model: &FlowModel, anchor: &FlowPeriodicOrbit, m: [i64; 2]) -> Result<HomoclinicDatum> {
    if m == [0, 0] {
        return Err(LabError::DegenerateHomoclinic(m, "class (0,0) is the anchor itself".into()));
    }
    if model.reversed {
        let fwd = model.time_reversed();
        let fa = suspension_flow::flow_orbit(&fwd, &anchor.base)?;
        let h = find_homoclinic(&fwd, &fa, m)?;
        return Ok(HomoclinicDatum {
            anchor: anchor.clone(),
            j: h.k,
            k: h.j,
            eta_inf: h.xi_inf.clone(),
            xi_inf: h.eta_inf.clone(),
            q: h.q_prime.clone(),
            q_prime: h.q.clone(),
            reversed: true,
            ..h
        });
    }
    let local = Arc::new(Anchor::for_orbit(model, &anchor.base)?);
    let a_ = &local;
    let wp = a_.wp;
    // Linear guess: a e^u - b e^s = m with the eigenvectors of A^N.
    let le = model.base.linear_eigen(wp);
    let mm = [Float::with_val(wp, m[0]), Float::with_val(wp, m[1])];
    let ab = hp::coords(&le.e_u, &le.e_s, &mm);
    let (ga, gb) = (ab[0].clone(), -ab[1].clone());
    if ga.is_zero() || gb.is_zero() {
        return Err(LabError::DegenerateHomoclinic(m, "zero leaf coordinate".into()));
    }
    let lam = a_.lambda.clone();
    let mu = a_.mu.clone();
    let mut j = 1u32;
    let mut eta = Float::with_val(wp, &ga / &lam);
    while eta.to_f64().abs() > LOCAL_SCALE {
        eta /= &lam;
        j += 1;
    }
    let mut k = 1u32;
    let mut xi = Float::with_val(wp, &gb * &mu);
    while xi.to_f64().abs() > LOCAL_SCALE {
        xi *= &mu;
        k += 1;
    }
    let big = lattice::big(&model.base.linear);
    let an = lattice::big_pow(&big, a_.n);
    let shift = float_vec(wp, &lattice::big_vec(&lattice::big_pow(&an, k), &int_vec(m)));
    let ev = a_.eval(&eta);
    let steps = j + k;
    let (eta, xi) = solve_homoclinic(a_, eta, xi, steps, &shift)
        .map_err(|_| LabError::NewtonFailure { seed: format!("homoclinic class {m:?}"), iters: 60, log2_residual: 0.0 })?;
    if eta.is_zero() || xi.is_zero() {
        return Err(LabError::DegenerateHomoclinic(m, "zero leaf coordinate".into()));
    }
    let q = a_.phi(Branch::Unstable, &eta);
    let q_prime = a_.phi(Branch::Stable, &xi);
    let mut series = a_.h_u(&eta) - a_.h_s(&xi);
    let mut y = q.clone();
    for _ in 0..steps {
        series += ev.big_r_value(&y);
        y = ev.g(&y);
    }
    let mut h = HomoclinicDatum {
        anchor: anchor.clone(),
        lattice_class: m,
        j,
        k,
        eta_inf: eta,
        xi_inf: xi,
        q,
        q_prime,
        n_prime: a_.n * steps,
        excursion: Float::with_val(model.precision_bits, &series),
        n0: 0,
        reversed: false,
        local: local.clone(),
    };
    h.n0 = measure_n0(model, &h)?;
    Ok(h)
}

/// Newton for `(eta, xi)` with `g^steps(Phi^u(eta)) - shift = Phi^s(xi)`.
pub(crate) fn solve_homoclinic(a: &Anchor, mut eta: Float, mut xi: Float, steps: u32, shift: &V2<Float>) -> Result<(Float, Float)> {
    let ev = a.eval(&eta);
    let tol = -(a.wp as f64) + 16.0;
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let mut y = a.phi(Branch::Unstable, &eta);
        let mut v = a.phi_d(Branch::Unstable, &eta);
        for _ in 0..steps {
            let (gy, d) = ev.g_d(&y);
            v = mat_vec(&d, &v);
            y = gy;
        }
        let s = a.phi(Branch::Stable, &xi);
        let ds = a.phi_d(Branch::Stable, &xi);
        let r = v_sub(&v_sub(&y, shift), &s);
        let jm = [[v[0].clone(), -ds[0].clone()], [v[1].clone(), -ds[1].clone()]];
        let d = solve2(&jm, &r);
        eta -= &d[0];
        xi -= &d[1];
        last = hp::log2_abs(&d[0]).max(hp::log2_abs(&d[1]));
        if last < tol {
            return Ok((eta, xi));
        }
    }
    Err(LabError::NewtonFailure { seed: "homoclinic point".into(), iters: 60, log2_residual: last })
}

fn measure_n0(model: &FlowModel, hom: &HomoclinicDatum) -> Result<usize> {
    for n in 1..200 {
        let (_, audit) = shadow_orbit(model, hom, n)?;
        if audit < AUDIT_THRESHOLD {
            return Ok(n);
        }
    }
    Err(LabError::ShadowAudit { n: 200, detail: "no index reached the audit threshold".into() })
}

/// Return-level pseudo-orbit of length `n + j + k`: `n` steps from `q'`
/// to `q` near the anchor (first half along `W^s`, second along `W^u`),
/// then the excursion from `q`.
pub fn pseudo_orbit(hom: &HomoclinicDatum, n: usize) -> Vec<V2<Float>> {
    let hom = &hom.forward_view();
    let a = &hom.local;
    let ev = a.eval(&a.p[0]);
    let mut pts = Vec::with_capacity(hom.turns(n));
    let half = n / 2;
    let mut y = hom.q_prime.clone();
    for _ in 0..=half.min(n.saturating_sub(1)) {
        pts.push(y.clone());
        y = ev.g(&y);
    }
    let mut back = Vec::new();
    let mut y = hom.q.clone();
    for _ in pts.len()..n {
        y = ev.g_inv(&y);
        back.push(y.clone());
    }
    pts.extend(back.into_iter().rev());
    let mut y = hom.q.clone();
    for _ in 0..(hom.j + hom.k) {
        pts.push(y.clone());
        y = ev.g(&y);
    }
    pts
}

/// Base shadowing orbit of index `n` (no `n0` gate) and its distance audit.
pub fn shadow_orbit(model: &FlowModel, hom: &HomoclinicDatum, n: usize) -> Result<(BasePeriodicOrbit, f64)> {
    let hom = &hom.forward_view();
    let a = &hom.local;
    let big_m = hom.turns(n);
    let nn = a.n as usize;
    let p_total = nn * big_m;
    let prec = model.orbit_prec();
    let pseudo = pseudo_orbit(hom, n);
    let base = &model.base;
    let id = format!("shadow:{}:m{},{}:n{}", hom.anchor.base.symbolic_id, hom.lattice_class[0], hom.lattice_class[1], n);
    let (points, corrections) = if base.is_linear() {
        // (A^{NM} - I) z = sum_{i<M} A^{Ni} m_p + A^{Nk} m, solved exactly.
        let bigm: BigMat = lattice::big(&base.linear);
        let an = lattice::big_pow(&bigm, a.n);
        let mut rhs = [Integer::new(), Integer::new()];
        let mut acc = int_vec(a.shift);
        for _ in 0..big_m {
            rhs = [rhs[0].clone() + &acc[0], rhs[1].clone() + &acc[1]];
            acc = lattice::big_vec(&an, &acc);
        }
        let mk = lattice::big_vec(&lattice::big_pow(&an, hom.k), &int_vec(hom.lattice_class));
        rhs = [rhs[0].clone() + &mk[0], rhs[1].clone() + &mk[1]];
        let mut e = lattice::big_pow(&an, big_m as u32);
        e[0][0] -= 1;
        e[1][1] -= 1;
        let det = Integer::from(&e[0][0] * &e[1][1]) - Integer::from(&e[0][1] * &e[1][0]);
        let z0 = Rational::from((Integer::from(&e[1][1] * &rhs[0]) - Integer::from(&e[0][1] * &rhs[1]), det.clone()));
        let z1 = Rational::from((Integer::from(&e[0][0] * &rhs[1]) - Integer::from(&e[1][0] * &rhs[0]), det));
        let mut z = [z0, z1];
        let lin = &base.linear;
        let mut pts = Vec::with_capacity(p_total);
        let mut cor = Vec::with_capacity(p_total);
        let red = |r: Rational| -> (Rational, i64) {
            let (f, fl) = r.fract_floor(Integer::new());
            (f, fl.to_i64().expect("small floor"))
        };
        let (f0, _) = red(z[0].clone());
        let (f1, _) = red(z[1].clone());
        z = [f0, f1];
        for _ in 0..p_total {
            pts.push([Float::with_val(prec, &z[0]), Float::with_val(prec, &z[1])]);
            let w0 = Rational::from(&z[0] * lin[0][0]) + Rational::from(&z[1] * lin[0][1]);
            let w1 = Rational::from(&z[0] * lin[1][0]) + Rational::from(&z[1] * lin[1][1]);
            let (g0, c0) = red(w0);
            let (g1, c1) = red(w1);
            cor.push([c0, c1]);
            z = [g0, g1];
        }
        (pts, cor)
    } else {
        let wp = a.wp;
        let ev = base.at(wp);
        let mut seeds = Vec::with_capacity(p_total);
        for x in &pseudo {
            let mut y = x.clone();
            for _ in 0..nn {
                seeds.push([y[0].clone() - y[0].clone().floor(), y[1].clone() - y[1].clone().floor()]);
                y = ev.f(&y);
            }
        }
        let cor: Vec<[i64; 2]> = (0..p_total)
            .map(|t| {
                let fy = ev.f(&seeds[t]);
                let nx = &seeds[(t + 1) % p_total];
                [
                    Float::with_val(wp, &fy[0] - &nx[0]).to_f64().round() as i64,
                    Float::with_val(wp, &fy[1] - &nx[1]).to_f64().round() as i64,
                ]
            })
            .collect();
        let pts = torus_maps::shoot(base, &seeds, &cor, prec, &id)?;
        (pts, cor)
    };
    let audit = (0..big_m).map(|i| torus_dist(&points[i * nn], &pseudo[i])).fold(0.0, f64::max);
    let lattice_class = torus_maps::cycle_class(&base.linear, &corrections);
    Ok((
        BasePeriodicOrbit { period: p_total as u32, points, corrections, lattice_class, symbolic_id: id, exact: None },
        audit,
    ))
}

/// The `n`-th shadowing orbit, gated by `n >= n0`.
pub fn shadowing_base_orbit(model: &FlowModel, hom: &HomoclinicDatum, n: usize) -> Result<BasePeriodicOrbit> {
    if n < hom.n0 {
        return Err(LabError::BelowN0 { n, n0: hom.n0 });
    }
    let (o, audit) = shadow_orbit(model, hom, n)?;
    if audit >= AUDIT_THRESHOLD {
        return Err(LabError::ShadowAudit { n, detail: format!("distance {audit:.3e}") });
    }
    Ok(o)
}

#[derive(Clone, Debug)]
pub struct ShadowSeries {
    pub hom: HomoclinicDatum,
    pub n1: usize,
    pub n2: usize,
    /// Anchor period `T`.
    pub anchor_period: Float,
    pub periods: Vec<Float>,
    pub audits: Vec<f64>,
    pub orbits: Vec<BasePeriodicOrbit>,
}

impl ShadowSeries {
    pub fn ns(&self) -> impl Iterator<Item = usize> + '_ {
        self.n1..=self.n2
    }

    pub fn period(&self, n: usize) -> &Float {
        &self.periods[n - self.n1]
    }

    /// `T_n - n T - T'` with the series excursion time.
    pub fn residuals(&self) -> Vec<Float> {
        self.residuals_with(&self.hom.excursion)
    }

    pub fn residuals_with(&self, t_prime: &Float) -> Vec<Float> {
        self.ns()
            .map(|n| {
                let p = self.period(n);
                Float::with_val(p.prec(), p - Float::with_val(p.prec(), &self.anchor_period * n as u32)) - t_prime
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let res = self.residuals();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "T_n", "residual", "ratio"])?;
        for (i, n) in self.ns().enumerate() {
            let ratio = if i == 0 || res[i - 1].is_zero() {
                String::new()
            } else {
                format!("{:.12e}", Float::with_val(64, &res[i] / &res[i - 1]).to_f64())
            };
            w.write_record([n.to_string(), hp::fmt_float(&self.periods[i]), format!("{:.12e}", res[i].to_f64()), ratio])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n_range` must respect `|mu|^{n2} > 2^{-precision_bits + 32}`.
pub fn check_budget(model: &FlowModel, hom: &HomoclinicDatum, n2: usize) -> Result<()> {
    let a = &hom.local;
    let lmu = a.mu.to_f64().abs().log2().max((1.0 / a.lambda.to_f64().abs()).log2());
    let need = n2 as f64 * -lmu;
    if need > model.precision_bits as f64 - 32.0 {
        return Err(LabError::PrecisionBudget(format!(
            "n = {n2} needs about {need:.0} bits of headroom, precision_bits = {}",
            model.precision_bits
        )));
    }
    Ok(())
}

pub fn shadow_series(model: &FlowModel, hom: &HomoclinicDatum, n1: usize, n2: usize) -> Result<ShadowSeries> {
    if n1 > n2 {
        return Err(LabError::Invalid(format!("empty range [{n1}, {n2}]")));
    }
    check_budget(model, hom, n2)?;
    let rows: Vec<(BasePeriodicOrbit, Float, f64)> = (n1..=n2)
        .into_par_iter()
        .map(|n| {
            if n < hom.n0 {
                return Err(LabError::BelowN0 { n, n0: hom.n0 });
            }
            let (o, audit) = shadow_orbit(model, hom, n)?;
            if audit >= AUDIT_THRESHOLD {
                return Err(LabError::ShadowAudit { n, detail: format!("distance {audit:.3e}") });
            }
            let t = suspension_flow::flow_period(model, &o)?;
            Ok((o, t, audit))
        })
        .collect::<Result<_>>()?;
    let mut periods = Vec::new();
    let mut audits = Vec::new();
    let mut orbits = Vec::new();
    for (o, t, a) in rows {
        orbits.push(o);
        periods.push(t);
        audits.push(a);
    }
    Ok(ShadowSeries { hom: hom.clone(), n1, n2, anchor_period: hom.anchor.period.clone(), periods, audits, orbits })
}

#[derive(Clone, Debug)]
pub struct ExcursionTime {
    /// Relative Birkhoff series route.
    pub series: Float,
    /// `T_n - n T` at the large index `n_limit`.
    pub limit: Float,
    pub n_limit: usize,
    pub log2_gap: f64,
}

/// Both routes to `T'`, required to agree to `2^{-precision_bits/2}`.
pub fn excursion_time(model: &FlowModel, hom: &HomoclinicDatum) -> Result<ExcursionTime> {
    let a = &hom.local;
    let rate = a.mu.to_f64().abs().log2().max((1.0 / a.lambda.to_f64().abs()).log2());
    let half = model.precision_bits as f64 / 2.0;
    let n_limit = (((half + 16.0) / -rate).ceil() as usize).max(hom.n0);
    let (o, _) = shadow_orbit(model, hom, n_limit)?;
    let t = suspension_flow::flow_period(model, &o)?;
    let limit = Float::with_val(model.precision_bits, &t - Float::with_val(model.precision_bits, &hom.anchor.period * n_limit as u32));
    let gap = Float::with_val(model.precision_bits, &limit - &hom.excursion);
    let log2_gap = hp::log2_abs(&gap);
    let scale = hp::log2_abs(&hom.excursion).max(0.0);
    if log2_gap > -half + scale {
        return Err(LabError::ExcursionMismatch {
            series: hp::fmt_float(&hom.excursion),
            limit: hp::fmt_float(&limit),
            log2_gap,
        });
    }
    Ok(ExcursionTime { series: hom.excursion.clone(), limit, n_limit, log2_gap })
}

/// Linear-base closed form: leaf coordinates `(a, b)` with `a e^u - b e^s = m`.
pub fn linear_homoclinic_coords(model: &FlowModel, m: [i64; 2], prec: u32) -> (Float, Float) {
    let le = model.base.linear_eigen(prec);
    let mm = [Float::with_val(prec, m[0]), Float::with_val(prec, m[1])];
    let ab = hp::coords(&le.e_u, &le.e_s, &mm);
    (ab[0].clone(), -ab[1].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suspension_flow::{fixed_point_orbit, make_suspension, Roof};
    use crate::torus_maps::{make_linear_map, standard_perturbed, CAT};

    fn cat(roof: Roof) -> FlowModel {
        make_suspension(make_linear_map(CAT).unwrap(), roof, 256).unwrap()
    }

    #[test]
    fn linear_coords_closed_form() {
        let m = cat(Roof::constant(1.0));
        let (a, b) = linear_homoclinic_coords(&m, [1, 1], 200);
        let l = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((a.to_f64() - l / 5f64.sqrt()).abs() < 1e-14);
        assert!((b.to_f64() - 0.17082039324993690).abs() < 1e-14);
        let (a2, b2) = linear_homoclinic_coords(&m, [-1, -1], 200);
        assert_eq!(a2, -a);
        assert_eq!(b2, -b);
        let anchor = fixed_point_orbit(&m).unwrap();
        assert!(matches!(find_homoclinic(&m, &anchor, [0, 0]), Err(LabError::DegenerateHomoclinic(..))));
    }

    #[test]
    fn constant_roof_series_is_integer() {
        let m = cat(Roof::constant(1.0));
        let anchor = fixed_point_orbit(&m).unwrap();
        let h = find_homoclinic(&m, &anchor, [1, 1]).unwrap();
        assert_eq!(h.excursion, h.n_prime);
        let s = shadow_series(&m, &h, h.n0.max(5), 15).unwrap();
        assert!(s.residuals().iter().all(|r| r.is_zero()));
        let e = excursion_time(&m, &h).unwrap();
        assert_eq!(e.limit, e.series);
    }

    #[test]
    fn cos_roof_routes_agree_and_scale() {
        let m = cat(Roof::cos_x1(1.0, 0.25));
        let anchor = fixed_point_orbit(&m).unwrap();
        let h = find_homoclinic(&m, &anchor, [1, 1]).unwrap();
        let e = excursion_time(&m, &h).unwrap();
        assert!(e.log2_gap < -128.0);
        let m2 = m.with_roof(m.roof.scaled(2.0));
        let a2 = fixed_point_orbit(&m2).unwrap();
        let h2 = find_homoclinic(&m2, &a2, [1, 1]).unwrap();
        assert!(hp::log2_abs(&(h2.excursion.clone() - h.excursion.clone() * 2u32)) < -240.0);
    }

    #[test]
    fn audits_contract_and_orbits_are_unique() {
        let m = cat(Roof::cos_x1(1.0, 0.25));
        let anchor = fixed_point_orbit(&m).unwrap();
        let h = find_homoclinic(&m, &anchor, [1, 1]).unwrap();
        let (_, d6) = shadow_orbit(&m, &h, 6).unwrap();
        let (_, d10) = shadow_orbit(&m, &h, 10).unwrap();
        let mu = (3.0 - 5f64.sqrt()) / 2.0;
        let r = d10 / d6;
        assert!((r / (mu * mu) - 1.0).abs() < 0.25, "ratio {r}");
        let a = shadowing_base_orbit(&m, &h, 12).unwrap();
        let b = shadowing_base_orbit(&m, &h, 12).unwrap();
        assert_eq!(a.points[0], b.points[0]);
        assert!(matches!(shadowing_base_orbit(&m, &h, 0), Err(LabError::BelowN0 { .. })));
    }

    #[test]
    fn perturbed_shadowing() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::cos_x1(1.0, 0.25), 256).unwrap();
        let anchor = fixed_point_orbit(&m).unwrap();
        let h = find_homoclinic(&m, &anchor, [1, 1]).unwrap();
        let e = excursion_time(&m, &h).unwrap();
        assert!(e.log2_gap < -128.0);
        let s = shadow_series(&m, &h, 10, 14).unwrap();
        let r = s.residuals();
        let q = Float::with_val(64, &r[4] / &r[3]).to_f64();
        assert!((q / h.local.mu.to_f64() - 1.0).abs() < 0.2, "ratio {q}");
    }

    #[test]
    fn reversed_datum_swaps_coordinates() {
        let m = cat(Roof::cos_x1(1.0, 0.25));
        let anchor = fixed_point_orbit(&m).unwrap();
        let h = find_homoclinic(&m, &anchor, [1, 1]).unwrap();
        let rm = m.time_reversed();
        let ra = fixed_point_orbit(&rm).unwrap();
        let hr = find_homoclinic(&rm, &ra, [1, 1]).unwrap();
        assert_eq!(hr.eta_inf, h.xi_inf);
        assert_eq!(hr.xi_inf, h.eta_inf);
        let s = shadow_series(&m, &h, 8, 10).unwrap();
        let sr = shadow_series(&rm, &hr, 8, 10).unwrap();
        assert_eq!(s.periods, sr.periods);
    }
}
