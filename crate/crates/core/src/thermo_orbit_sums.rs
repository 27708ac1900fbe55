//! Periodic-orbit thermodynamics: windowed orbit sums, pressure estimates,
//! Bowen averages, class proportions and the pressure curve of
//! `phi_t = t psi^s + (1 - t) psi^u`.
//!
//! Window sums are length weighted: a prime orbit `gamma` traversed `k` times
//! with `k T(gamma)` in `(T, T + delta]` contributes
//! `T(gamma) exp(k T_psi(gamma))`. This has the same exponential growth rate
//! as the plain prime-orbit sum without its `log T / T` bias.

use crate::error::{LabError, Result};
use crate::lattice::{idet, ipow, IMat};
use crate::period_asymptotics::golden;
use crate::suspension_flow::{self, DissipationClass, FlowModel, FlowPeriodicOrbit};
use serde::Serialize;
use std::path::Path;

/// Default window width, one roof unit.
pub const DEFAULT_DELTA: f64 = 1.0;
/// Orbit weights below this magnitude count as vanishing.
pub const COBOUNDARY_TOL: f64 = 1e-20;
/// Slack allowed in the midpoint tests before the curve is flagged.
pub const CONVEX_TOL: f64 = 1e-12;

/// Per-orbit data in `f64`, extracted once from the high-precision orbit.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitStats {
    pub n: u32,
    pub period: f64,
    pub log_mu: f64,
    pub log_lambda: f64,
    /// `log(mu lambda)` rounded once from the high-precision sum.
    pub log_jacobian: f64,
    pub class: DissipationClass,
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    orbit: usize,
    k: u32,
    length: f64,
}

pub struct OrbitEnsemble {
    pub model: FlowModel,
    pub n_max: u32,
    pub orbits: Vec<FlowPeriodicOrbit>,
    pub stats: Vec<OrbitStats>,
    /// Certified lower bound of the roof.
    pub roof_min: f64,
    /// `(orbit, k)` pairs sorted by `k T(gamma)`.
    entries: Vec<Entry>,
}

#[derive(Clone, Debug)]
pub enum Potential {
    PsiU,
    PsiS,
    LogJacobian,
    FamilyT(f64),
    Zero,
    /// `psi + c`, integrated: `T_psi(gamma) + c T(gamma)`.
    Shifted(Box<Potential>, f64),
    /// One weight per orbit, aligned with `OrbitEnsemble::orbits`.
    Custom(Vec<f64>),
}

impl Potential {
    pub fn name(&self) -> String {
        match self {
            Potential::PsiU => "psi_u".into(),
            Potential::PsiS => "psi_s".into(),
            Potential::LogJacobian => "log_jacobian".into(),
            Potential::FamilyT(t) => format!("family_t({t})"),
            Potential::Zero => "zero".into(),
            Potential::Shifted(p, c) => format!("{}+{c}", p.name()),
            Potential::Custom(_) => "custom".into(),
        }
    }

    /// `T_psi(gamma)` for orbit `i`.
    pub fn weight(&self, ens: &OrbitEnsemble, i: usize) -> f64 {
        let s = &ens.stats[i];
        match self {
            Potential::PsiU => -s.log_lambda,
            Potential::PsiS => s.log_mu,
            Potential::LogJacobian => s.log_jacobian,
            Potential::FamilyT(t) => t * s.log_mu - (1.0 - t) * s.log_lambda,
            Potential::Zero => 0.0,
            Potential::Shifted(p, c) => p.weight(ens, i) + c * s.period,
            Potential::Custom(w) => w[i],
        }
    }

    fn weights(&self, ens: &OrbitEnsemble) -> Result<Vec<f64>> {
        if let Potential::Custom(w) = self {
            if w.len() != ens.orbits.len() {
                return Err(LabError::Invalid(format!(
                    "custom potential has {} weights for {} orbits",
                    w.len(),
                    ens.orbits.len()
                )));
            }
        }
        Ok((0..ens.orbits.len()).map(|i| self.weight(ens, i)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OrbitClass {
    Dissipation(DissipationClass),
    /// Orbits carrying a `rho`-mild certificate.
    Mild(f64),
}

/// `sum_{d | n} d * #(prime cycles of period d) = |det(A^n - I)|`.
pub fn lattice_point_count(a: &IMat, n: u32) -> Result<i128> {
    let mut an = ipow(a, n).ok_or_else(|| LabError::PrecisionBudget(format!("A^{n} overflows i128")))?;
    an[0][0] -= 1;
    an[1][1] -= 1;
    Ok(idet(&an).abs())
}

/// Compares per-period point counts of `orbits` against the lattice oracle.
pub fn count_audit(a: &IMat, orbits: &[FlowPeriodicOrbit], n_max: u32) -> Result<Vec<(u32, i128, i128)>> {
    let mut cycles = vec![0i128; n_max as usize + 1];
    for o in orbits {
        let n = o.n();
        if n == 0 || n > n_max {
            return Err(LabError::Incomplete(format!("orbit {} has base period {n} outside 1..={n_max}", o.id)));
        }
        cycles[n as usize] += 1;
    }
    let mut rows = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let points: i128 = (1..=n).filter(|d| n % d == 0).map(|d| d as i128 * cycles[d as usize]).sum();
        let expect = lattice_point_count(a, n)?;
        if points != expect {
            return Err(LabError::Incomplete(format!("period {n}: {points} points found, lattice count {expect}")));
        }
        rows.push((n, points, expect));
    }
    Ok(rows)
}

pub fn build_ensemble(model: &FlowModel, n_max: u32) -> Result<OrbitEnsemble> {
    let orbits = suspension_flow::flow_orbits(model, n_max)?;
    from_orbits(model, n_max, orbits)
}

/// Wraps precomputed orbits, running the count audit.
pub fn from_orbits(model: &FlowModel, n_max: u32, orbits: Vec<FlowPeriodicOrbit>) -> Result<OrbitEnsemble> {
    count_audit(&model.base.imat(), &orbits, n_max)?;
    let roof_min = model.roof.lower_bound(&model.base);
    if !(roof_min > 0.0) {
        return Err(LabError::RoofNotPositive(roof_min));
    }
    let stats: Vec<OrbitStats> = orbits
        .iter()
        .map(|o| OrbitStats {
            n: o.n(),
            period: o.period.to_f64(),
            log_mu: o.multipliers.log_mu.to_f64(),
            log_lambda: o.multipliers.log_lambda.to_f64(),
            log_jacobian: o.multipliers.log_jacobian().to_f64(),
            class: o.class,
        })
        .collect();
    let mut entries = Vec::new();
    for (i, s) in stats.iter().enumerate() {
        for k in 1..=(n_max / s.n) {
            entries.push(Entry { orbit: i, k, length: k as f64 * s.period });
        }
    }
    entries.sort_by(|a, b| a.length.total_cmp(&b.length).then(a.orbit.cmp(&b.orbit)).then(a.k.cmp(&b.k)));
    Ok(OrbitEnsemble { model: model.clone(), n_max, orbits, stats, roof_min, entries })
}

/// Deterministic pairwise summation.
fn pairwise(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise(a) + pairwise(b)
}

/// A window sum `exp(shift) * scaled`.
#[derive(Clone, Copy, Debug)]
pub struct LogSum {
    pub shift: f64,
    pub scaled: f64,
    pub terms: usize,
}

impl LogSum {
    pub fn ln(&self) -> f64 {
        self.shift + self.scaled.ln()
    }
}

impl OrbitEnsemble {
    /// Windows `(T, T + delta]` with `T + delta` below this are complete.
    pub fn complete_length(&self) -> f64 {
        (self.n_max + 1) as f64 * self.roof_min
    }

    /// Start of the largest complete window of width `delta`.
    pub fn largest_window(&self, delta: f64) -> f64 {
        self.n_max as f64 * self.roof_min - delta
    }

    /// Starts of the last `count` complete windows, ascending.
    pub fn last_windows(&self, delta: f64, count: usize) -> Vec<f64> {
        let top = self.largest_window(delta);
        (0..count).rev().map(|j| top - j as f64 * delta).collect()
    }

    fn window(&self, t: f64, delta: f64) -> Result<&[Entry]> {
        if !(delta > 0.0) {
            return Err(LabError::Invalid(format!("window width {delta} must be positive")));
        }
        let end = t + delta;
        if end >= self.complete_length() {
            return Err(LabError::Incomplete(format!(
                "window ({t}, {end}] reaches past the complete range (< {}) for N_max = {}",
                self.complete_length(),
                self.n_max
            )));
        }
        let lo = self.entries.partition_point(|e| e.length <= t);
        let hi = self.entries.partition_point(|e| e.length <= end);
        if lo >= hi {
            return Err(LabError::EmptyWindow { t, t_end: end });
        }
        Ok(&self.entries[lo..hi])
    }

    /// Number of `(orbit, traversal)` terms in the window.
    pub fn window_len(&self, t: f64, delta: f64) -> Result<usize> {
        Ok(self.window(t, delta)?.len())
    }

    fn exponents(&self, w: &[Entry], psi: &[f64]) -> Vec<f64> {
        w.iter().map(|e| e.k as f64 * psi[e.orbit] + self.stats[e.orbit].period.ln()).collect()
    }

    /// `sum_window T(gamma) exp(k T_psi(gamma))`, max exponent factored out.
    pub fn window_sum(&self, psi: &Potential, t: f64, delta: f64) -> Result<LogSum> {
        let w = self.window(t, delta)?;
        let ex = self.exponents(w, &psi.weights(self)?);
        let shift = ex.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let terms: Vec<f64> = ex.iter().map(|x| (x - shift).exp()).collect();
        Ok(LogSum { shift, scaled: pairwise(&terms), terms: w.len() })
    }

    fn normalized(&self, psi: &[f64], w: &[Entry]) -> Vec<f64> {
        let ex = self.exponents(w, psi);
        let shift = ex.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let terms: Vec<f64> = ex.iter().map(|x| (x - shift).exp()).collect();
        let z = pairwise(&terms);
        terms.into_iter().map(|x| x / z).collect()
    }

    fn in_class(&self, i: usize, class: OrbitClass) -> bool {
        match class {
            OrbitClass::Dissipation(c) => self.stats[i].class == c,
            OrbitClass::Mild(rho) => suspension_flow::mild_certificate(&self.orbits[i].multipliers, rho).is_some(),
        }
    }
}

/// `(1/T) log sum_window`.
pub fn pressure_estimate(ens: &OrbitEnsemble, psi: &Potential, t: f64, delta: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(LabError::Invalid(format!("window start {t} must be positive")));
    }
    Ok(ens.window_sum(psi, t, delta)?.ln() / t)
}

/// Weighted average of `T_phi(gamma) / T(gamma)` under the window weights of `psi`.
pub fn bowen_average(ens: &OrbitEnsemble, psi: &Potential, phi: &Potential, t: f64, delta: f64) -> Result<f64> {
    let w = ens.window(t, delta)?;
    let p = ens.normalized(&psi.weights(ens)?, w);
    let f = phi.weights(ens)?;
    let terms: Vec<f64> = w.iter().zip(&p).map(|(e, p)| p * f[e.orbit] / ens.stats[e.orbit].period).collect();
    Ok(pairwise(&terms))
}

/// Share of the window weight of `psi` carried by orbits in `class`.
pub fn proportion(ens: &OrbitEnsemble, psi: &Potential, class: OrbitClass, t: f64, delta: f64) -> Result<f64> {
    let s = ens.window_sum(psi, t, delta)?;
    let w = ens.window(t, delta)?;
    let ex = ens.exponents(w, &psi.weights(ens)?);
    let terms: Vec<f64> = w
        .iter()
        .zip(&ex)
        .map(|(e, x)| if ens.in_class(e.orbit, class) { (x - s.shift).exp() } else { 0.0 })
        .collect();
    Ok((pairwise(&terms) / s.scaled).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowValue {
    #[serde(rename = "T")]
    pub t: f64,
    pub delta: f64,
    pub value: f64,
}

pub fn write_window_csv(path: &Path, rows: &[WindowValue]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Proportion of `class` over the last `count` windows.
pub fn proportion_profile(
    ens: &OrbitEnsemble,
    psi: &Potential,
    class: OrbitClass,
    delta: f64,
    count: usize,
) -> Result<Vec<WindowValue>> {
    ens.last_windows(delta, count)
        .into_iter()
        .filter(|&t| t > 0.0)
        .map(|t| Ok(WindowValue { t, delta, value: proportion(ens, psi, class, t, delta)? }))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub t0: f64,
    pub p_t0: f64,
    /// Smallest `P(t_{i-1}) + P(t_{i+1}) - 2 P(t_i)` over consecutive triples.
    pub min_margin: f64,
    pub convex_ok: bool,
    #[serde(rename = "T")]
    pub t: f64,
    pub delta: f64,
}

/// `t = i / 20` for `i` in `-10..=30`, so `0` and `1` are exact.
pub fn default_t_grid() -> Vec<f64> {
    (-10..=30).map(|i| i as f64 / 20.0).collect()
}

pub fn pressure_curve(ens: &OrbitEnsemble, grid: &[f64], t: f64, delta: f64) -> Result<PressureCurve> {
    if grid.len() < 3 {
        return Err(LabError::Invalid("pressure grid needs at least 3 points".into()));
    }
    if grid.iter().any(|&s| !(-0.5..=1.5).contains(&s)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Invalid("pressure grid must be increasing inside [-0.5, 1.5]".into()));
    }
    let p = |s: f64| pressure_estimate(ens, &Potential::FamilyT(s), t, delta);
    let values: Vec<f64> = grid.iter().map(|&s| p(s)).collect::<Result<_>>()?;
    let mut min_margin = f64::INFINITY;
    for i in 1..grid.len() - 1 {
        // midpoint test on the symmetric sub-bracket
        let h = (grid[i] - grid[i - 1]).min(grid[i + 1] - grid[i]);
        let (l, r) = (grid[i] - h, grid[i] + h);
        let (pl, pr) = if l == grid[i - 1] && r == grid[i + 1] { (values[i - 1], values[i + 1]) } else { (p(l)?, p(r)?) };
        min_margin = min_margin.min(pl + pr - 2.0 * values[i]);
    }
    let k = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    let a = grid[k.saturating_sub(1)];
    let b = grid[(k + 1).min(grid.len() - 1)];
    let t0 = golden(a, b, 1e-9, |s| p(s).unwrap_or(f64::INFINITY));
    let p_t0 = p(t0)?;
    Ok(PressureCurve {
        grid: grid.to_vec(),
        values,
        t0,
        p_t0,
        min_margin,
        convex_ok: min_margin >= -CONVEX_TOL,
        t,
        delta,
    })
}

impl PressureCurve {
    pub fn value_at(&self, s: f64) -> Option<f64> {
        self.grid.iter().position(|&g| g == s).map(|i| self.values[i])
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoboundaryReport {
    pub potential: String,
    pub max_abs: f64,
    pub witness: String,
    /// Largest `|T_psi(gamma)| / T(gamma)` and its orbit.
    pub max_rate: f64,
    pub rate_witness: String,
    pub tolerance: f64,
    pub vanishing: bool,
}

pub fn coboundary_obstruction(ens: &OrbitEnsemble, psi: &Potential) -> Result<CoboundaryReport> {
    let w = psi.weights(ens)?;
    let mut best = (0.0f64, 0usize);
    let mut best_rate = (0.0f64, 0usize);
    for (i, x) in w.iter().enumerate() {
        if x.abs() > best.0 {
            best = (x.abs(), i);
        }
        let r = x.abs() / ens.stats[i].period;
        if r > best_rate.0 {
            best_rate = (r, i);
        }
    }
    Ok(CoboundaryReport {
        potential: psi.name(),
        max_abs: best.0,
        witness: ens.orbits[best.1].id.clone(),
        max_rate: best_rate.0,
        rate_witness: ens.orbits[best_rate.1].id.clone(),
        tolerance: COBOUNDARY_TOL,
        vanishing: best.0 < COBOUNDARY_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suspension_flow::{make_suspension, Roof};
    use crate::torus_maps::{make_linear_map, standard_perturbed};
    use std::sync::OnceLock;

    const CAT: [[i64; 2]; 2] = [[2, 1], [1, 1]];

    fn dissipative() -> &'static OrbitEnsemble {
        static E: OnceLock<OrbitEnsemble> = OnceLock::new();
        E.get_or_init(|| {
            let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::constant(1.0), 256).unwrap();
            build_ensemble(&m, 12).unwrap()
        })
    }

    fn cat(n_max: u32) -> OrbitEnsemble {
        let m = make_suspension(make_linear_map(CAT).unwrap(), Roof::constant(1.0), 128).unwrap();
        build_ensemble(&m, n_max).unwrap()
    }

    #[test]
    fn lattice_counts() {
        let a = crate::lattice::imat(&CAT);
        let c: Vec<i128> = (1..=6).map(|n| lattice_point_count(&a, n).unwrap()).collect();
        assert_eq!(c, vec![1, 5, 16, 45, 121, 320]);
        let e = cat(1);
        assert_eq!(e.orbits.len(), 1);
    }

    #[test]
    fn perturbed_cycles_match_linear() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::constant(1.0), 128).unwrap();
        let a = build_ensemble(&m, 10).unwrap();
        let b = cat(10);
        for n in 1..=10 {
            let ca = a.stats.iter().filter(|s| s.n == n).count();
            let cb = b.stats.iter().filter(|s| s.n == n).count();
            assert_eq!(ca, cb, "period {n}");
        }
    }

    #[test]
    fn missing_orbit_is_detected() {
        let m = make_suspension(make_linear_map(CAT).unwrap(), Roof::constant(1.0), 128).unwrap();
        let mut o = suspension_flow::flow_orbits(&m, 5).unwrap();
        o.pop();
        assert!(matches!(from_orbits(&m, 5, o), Err(LabError::Incomplete(_))));
    }

    #[test]
    fn zero_potential_gives_entropy() {
        let e = cat(12);
        let p = pressure_estimate(&e, &Potential::Zero, 10.0, 1.0).unwrap();
        let h = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((p - h).abs() < 0.1, "{p} vs {h}");
        assert!(matches!(pressure_estimate(&e, &Potential::Zero, 10.2, 0.5), Err(LabError::EmptyWindow { .. })));
        assert!(matches!(pressure_estimate(&e, &Potential::Zero, 12.0, 1.0), Err(LabError::Incomplete(_))));
    }

    #[test]
    fn conservative_geometric_pressure() {
        let e = cat(12);
        let p = pressure_estimate(&e, &Potential::PsiU, 11.0, 1.0).unwrap();
        assert!(p.abs() <= 0.1, "{p}");
        let q = pressure_estimate(&e, &Potential::PsiU, 8.0, 1.0).unwrap();
        assert!(p.abs() <= q.abs() + 1e-12);
        let r = proportion(&e, &Potential::PsiS, OrbitClass::Dissipation(DissipationClass::Preserving), 11.0, 1.0)
            .unwrap();
        assert_eq!(r, 1.0);
        let c = coboundary_obstruction(&e, &Potential::LogJacobian).unwrap();
        assert!(c.vanishing, "{c:?}");
        let avg = bowen_average(&e, &Potential::Zero, &Potential::Custom(e.stats.iter().map(|s| s.period).collect()), 11.0, 1.0)
            .unwrap();
        assert!((avg - 1.0).abs() < 1e-14);
    }

    #[test]
    fn window_additivity_and_shift() {
        let e = dissipative();
        let psi = Potential::PsiU;
        let whole = e.window_sum(&psi, 9.0, 2.0).unwrap();
        let a = e.window_sum(&psi, 9.0, 1.0).unwrap();
        let b = e.window_sum(&psi, 10.0, 1.0).unwrap();
        let sum = a.scaled * (a.shift - whole.shift).exp() + b.scaled * (b.shift - whole.shift).exp();
        assert!((sum / whole.scaled - 1.0).abs() < 1e-13);
        assert_eq!(whole.terms, a.terms + b.terms);
        for c in [-0.3, 0.2, 1.0] {
            let s = e.window_sum(&Potential::Shifted(Box::new(psi.clone()), c), 9.0, 2.0).unwrap();
            let d = s.ln() - whole.ln();
            let (lo, hi) = if c > 0.0 { (c * 9.0, c * 11.0) } else { (c * 11.0, c * 9.0) };
            assert!(d >= lo - 1e-12 && d <= hi + 1e-12, "c = {c}: {d}");
        }
    }

    #[test]
    fn dissipative_curve() {
        let e = dissipative();
        let t = e.largest_window(1.0);
        let curve = pressure_curve(e, &default_t_grid(), t, 1.0).unwrap();
        let p0 = curve.value_at(0.0).unwrap();
        let p1 = curve.value_at(1.0).unwrap();
        assert!(p0.abs() <= 0.05 && p1.abs() <= 0.05, "{p0} {p1}");
        assert!(curve.t0 > 0.05 && curve.t0 < 0.95, "{}", curve.t0);
        assert!(curve.convex_ok && curve.min_margin >= 0.0, "{}", curve.min_margin);
        assert_eq!(p0.to_bits(), pressure_estimate(e, &Potential::PsiU, t, 1.0).unwrap().to_bits());
        // the log-Jacobian rate averages to ~0 at the minimizer
        let avg = bowen_average(e, &Potential::FamilyT(curve.t0), &Potential::LogJacobian, t, 1.0).unwrap();
        assert!(avg.abs() < 1e-6, "{avg}");
        let neg = bowen_average(e, &Potential::PsiU, &Potential::LogJacobian, t, 1.0).unwrap();
        assert!(neg < 0.0, "{neg}");
    }

    #[test]
    fn dissipative_classes() {
        let e = dissipative();
        let t = e.largest_window(1.0);
        let pres = proportion(e, &Potential::PsiU, OrbitClass::Dissipation(DissipationClass::Preserving), t, 1.0).unwrap();
        assert!(pres < 0.01);
        let c = coboundary_obstruction(e, &Potential::LogJacobian).unwrap();
        assert!(!c.vanishing);
        let fp = e.stats.iter().position(|s| s.n == 1).unwrap();
        assert!((e.stats[fp].log_jacobian - 1.0628f64.ln()).abs() < 1e-4, "{}", e.stats[fp].log_jacobian);
        let curve = pressure_curve(e, &default_t_grid(), t, 1.0).unwrap();
        let mild = proportion(e, &Potential::FamilyT(curve.t0), OrbitClass::Mild(1.25), t, 1.0).unwrap();
        assert!(mild >= 0.9, "{mild}");
    }
}
