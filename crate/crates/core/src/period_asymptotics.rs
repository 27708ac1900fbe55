//! Asymptotic fits of shadowing periods `T_n = n T + T' + r_n`, the recovery
//! exponent `Gamma`, and the per-anchor recovery dichotomy.

use crate::error::{LabError, Result};
use crate::homoclinic_shadowing::{self, HomoclinicDatum, ShadowSeries};
use crate::hp;
use crate::suspension_flow::{FlowModel, FlowPeriodicOrbit};
use crate::templates_obstruction::{self, ObstructionValue};
use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};

/// The `log n` regressor is accepted when its coefficient is this close to 1.
pub const LOG_N_WINDOW: f64 = 0.25;
/// ... and it must cut the residual RMS by this factor.
pub const LOG_N_RMS_GAIN: f64 = 10.0;
/// `|Gamma - log |mu||` below this counts as recovery.
pub const GAMMA_TOL: f64 = 0.15;
/// Minimum number of first differences in a fit.
pub const MIN_USABLE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Zero,
    PureExponential,
    NTimesExponential,
    TwoExponential,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FitOptions {
    /// Try the two-exponential model by peeling on mildly dissipative anchors.
    pub peel: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitDiagnostics {
    pub n_used: usize,
    pub zero_floor_log2: f64,
    pub rms_linear: Option<f64>,
    pub rms_log: Option<f64>,
    pub log_n_coef: Option<f64>,
    /// Second coefficient: `B` of `B mu^n` (n-times model) or of the
    /// `lambda^{-n}` term (two-exponential model).
    pub second_coef: Option<f64>,
    pub second_rate: Option<f64>,
    /// Largest `|D_{n+1}/D_n / mu - 1|` over the top half of the window.
    pub ratio_spread: Option<f64>,
    /// Common sign of `D_n` over the top half, if there is one.
    pub eventual_sign: Option<i8>,
    pub t_prime_series: String,
    pub t_prime_gap_log2: f64,
    pub t_prime_consistent: bool,
    /// `xi_inf eta_inf d1 d2 tau_hat(0,0)`, the predicted `n mu^n` coefficient
    /// on conservative anchors.
    pub predicted_coefficient: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticFit {
    pub model_kind: ModelKind,
    #[serde(rename = "T_prime", serialize_with = "ser_float")]
    pub t_prime: Float,
    pub zeta_fit: f64,
    /// Fitted `log |mu|`.
    pub rate: Option<f64>,
    pub rate_reference: f64,
    /// Decay rate of what the model leaves over (upper-bound diagnostic).
    pub remainder_rate: Option<f64>,
    pub diagnostics: FitDiagnostics,
}

fn ser_float<S: serde::Serializer>(x: &Float, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&hp::fmt_float(x))
}

/// Signed `(mu, lambda)` of the anchor return in the model's time direction.
pub fn anchor_eigenvalues(hom: &HomoclinicDatum) -> (f64, f64) {
    let a = &hom.local;
    if hom.reversed {
        (1.0 / a.lambda.to_f64(), 1.0 / a.mu.to_f64())
    } else {
        (a.mu.to_f64(), a.lambda.to_f64())
    }
}

/// Least squares with the normal equations (tiny, well-scaled systems).
fn lstsq(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (i, r) in rows.iter().enumerate() {
        let wi = w[i] * w[i];
        for p in 0..k {
            for q in 0..k {
                a[p][q] += wi * r[p] * r[q];
            }
            a[p][k] += wi * r[p] * y[i];
        }
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        a.swap(c, piv);
        if a[c][c].abs() < 1e-300 {
            return None;
        }
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for q in c..=k {
                    a[r][q] -= f * a[c][q];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    let ss: f64 = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let e = (y[i] - r.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>()) * w[i];
            e * e
        })
        .sum();
    Some((beta, (ss / rows.len() as f64).sqrt()))
}

/// Minimizes `f` on `[a, b]` by golden-section search.
pub(crate) fn golden(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// `D_n = T_{n+1} - T_n - T` with `n` the lower index.
pub fn first_differences(series: &ShadowSeries) -> Vec<(usize, Float)> {
    let t = &series.anchor_period;
    (series.n1..series.n2)
        .map(|n| {
            let p = series.period(n);
            let d = Float::with_val(p.prec(), series.period(n + 1) - p) - t;
            (n, d)
        })
        .collect()
}

/// Profiled weighted fit of `D_n = A ((n+1) mu - n) mu^n + B (mu - 1) mu^n`.
fn fit_n_times(pts: &[(f64, f64)], sign: f64, rate0: f64) -> (f64, f64, f64, f64) {
    let solve = |r: f64| -> Option<(Vec<f64>, f64)> {
        let mu = sign * r.exp();
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .map(|&(n, _)| {
                let mn = sign.powi(n as i32) * (r * n).exp();
                vec![((n + 1.0) * mu - n) * mn, (mu - 1.0) * mn]
            })
            .collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let w: Vec<f64> = pts.iter().map(|p| 1.0 / p.1.abs()).collect();
        lstsq(&rows, &y, &w)
    };
    // The profile is not unimodal: bracket on a grid, then refine.
    let f = |r: f64| solve(r).map_or(f64::INFINITY, |s| s.1);
    let (lo, hi) = (rate0 - 0.3, (rate0 + 0.3).min(-1e-9));
    let steps = 240;
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps).map(|i| lo + h * i as f64).min_by(|x, y| f(*x).total_cmp(&f(*y))).unwrap_or(rate0);
    let r = golden((best - h).max(lo), (best + h).min(hi), 1e-13, f);
    let (b, rms) = solve(r).unwrap_or((vec![f64::NAN, f64::NAN], f64::INFINITY));
    (r, b[0], b[1], rms)
}

pub fn fit_expansion(series: &ShadowSeries) -> Result<AsymptoticFit> {
    fit_expansion_with(series, FitOptions::default())
}

pub fn fit_expansion_with(series: &ShadowSeries, opts: FitOptions) -> Result<AsymptoticFit> {
    let hom = &series.hom;
    let prec = series.anchor_period.prec().min(hom.excursion.prec());
    let bits = hom.excursion.prec();
    let (mu_a, lam_a) = anchor_eigenvalues(hom);
    let rate_reference = mu_a.abs().ln();
    let d = first_differences(series);
    if d.len() < MIN_USABLE {
        return Err(LabError::IllConditioned(format!("{} differences; need at least {MIN_USABLE}", d.len())));
    }
    let floor_log2 = -(bits as f64) + 48.0;
    let n2 = series.n2;
    let t2 = Float::with_val(prec, series.period(n2) - Float::with_val(prec, &series.anchor_period * n2 as u32));
    let gap_of = |tp: &Float| hp::log2_abs(&Float::with_val(prec, tp - &hom.excursion));
    let tol_log2 = -(bits as f64) / 2.0 + 8.0;
    let predicted = if hom.local.model.conservative() {
        let c = hom.local.d1_tau_coeffs(1);
        Some(Float::with_val(64, hom.xi_eta() * &c[1]).to_f64())
    } else {
        None
    };
    let mut diag = FitDiagnostics {
        n_used: 0,
        zero_floor_log2: floor_log2,
        rms_linear: None,
        rms_log: None,
        log_n_coef: None,
        second_coef: None,
        second_rate: None,
        ratio_spread: None,
        eventual_sign: None,
        t_prime_series: hp::fmt_float(&hom.excursion),
        t_prime_gap_log2: f64::NEG_INFINITY,
        t_prime_consistent: true,
        predicted_coefficient: predicted,
    };
    if d.iter().all(|(_, x)| hp::log2_abs(x) < floor_log2) {
        diag.t_prime_gap_log2 = gap_of(&t2);
        diag.t_prime_consistent = diag.t_prime_gap_log2 <= tol_log2;
        return Ok(AsymptoticFit {
            model_kind: ModelKind::Zero,
            t_prime: t2,
            zeta_fit: 0.0,
            rate: None,
            rate_reference,
            remainder_rate: None,
            diagnostics: diag,
        });
    }
    // Relative scale keeps the doubles well inside range.
    let usable: Vec<(f64, f64)> = d
        .iter()
        .filter(|(_, x)| hp::log2_abs(x) > floor_log2 + 8.0)
        .map(|(n, x)| (*n as f64, x.to_f64()))
        .collect();
    if usable.len() < MIN_USABLE {
        return Err(LabError::IllConditioned(format!(
            "only {} differences above the floor 2^{floor_log2:.0}; lengthen n_range or raise precision",
            usable.len()
        )));
    }
    diag.n_used = usable.len();
    let top: Vec<(f64, f64)> = usable[usable.len() / 2..].to_vec();
    let sign = {
        let flips = usable.windows(2).filter(|w| w[0].1 * w[1].1 < 0.0).count();
        if flips * 2 > usable.len() { -1.0 } else { 1.0 }
    };
    let ly: Vec<f64> = usable.iter().map(|p| p.1.abs().ln()).collect();
    let ones = vec![1.0; usable.len()];
    let rows1: Vec<Vec<f64>> = usable.iter().map(|p| vec![1.0, p.0]).collect();
    let rows2: Vec<Vec<f64>> = usable.iter().map(|p| vec![1.0, p.0, p.0.ln()]).collect();
    let (b1, rms1) = lstsq(&rows1, &ly, &ones).ok_or_else(|| LabError::IllConditioned("singular regression".into()))?;
    let (b2, rms2) = lstsq(&rows2, &ly, &ones).ok_or_else(|| LabError::IllConditioned("singular regression".into()))?;
    diag.rms_linear = Some(rms1);
    diag.rms_log = Some(rms2);
    diag.log_n_coef = Some(b2[2]);
    let n_times = (b2[2] - 1.0).abs() < LOG_N_WINDOW && rms1 >= LOG_N_RMS_GAIN * rms2;

    let (mut kind, rate, zeta, model): (ModelKind, f64, f64, Box<dyn Fn(f64) -> f64>) = if n_times {
        let (r, a, b, _) = fit_n_times(&usable, sign, b2[1]);
        diag.second_coef = Some(b);
        (ModelKind::NTimesExponential, r, a, Box::new(move |n: f64| (a * n + b) * sign.powi(n as i32) * (r * n).exp()))
    } else {
        let r = b1[1];
        let mu = sign * r.exp();
        // D_n = zeta (mu - 1) mu^n, weighted fit for the amplitude.
        let (num, den) = usable.iter().fold((0.0, 0.0), |(a, b), &(n, y)| {
            let f = (mu - 1.0) * sign.powi(n as i32) * (r * n).exp() / y;
            (a + f, b + f * f)
        });
        let z = num / den;
        (ModelKind::PureExponential, r, z, Box::new(move |n: f64| z * sign.powi(n as i32) * (r * n).exp()))
    };
    let mut rate = rate;
    let mut zeta = zeta;
    let mut residual: Box<dyn Fn(f64) -> f64> = model;

    if opts.peel && kind == ModelKind::PureExponential && hom.anchor.mild.is_some() && !hom.local.model.conservative() {
        // mu^n term from the top half, then the lambda^{-n} term from the rest.
        let rows: Vec<Vec<f64>> = top.iter().map(|p| vec![1.0, p.0]).collect();
        let lt: Vec<f64> = top.iter().map(|p| p.1.abs().ln()).collect();
        if let Some((bt, _)) = lstsq(&rows, &lt, &vec![1.0; top.len()]) {
            let r1 = bt[1];
            let mu1 = sign * r1.exp();
            let c1 = (usable.last().unwrap().1) / (sign.powi(usable.last().unwrap().0 as i32) * (r1 * usable.last().unwrap().0).exp());
            let rest: Vec<(f64, f64)> = usable
                .iter()
                .map(|&(n, y)| (n, y - c1 * sign.powi(n as i32) * (r1 * n).exp()))
                .filter(|p| p.1 != 0.0)
                .collect();
            let ls = (1.0 / lam_a).signum();
            if rest.len() >= 4 {
                let rr: Vec<Vec<f64>> = rest.iter().map(|p| vec![1.0, p.0]).collect();
                let ly2: Vec<f64> = rest.iter().map(|p| p.1.abs().ln()).collect();
                if let Some((b3, _)) = lstsq(&rr, &ly2, &vec![1.0; rest.len()]) {
                    let r2 = b3[1];
                    let c2 = rest.iter().map(|&(n, y)| y / (ls.powi(n as i32) * (r2 * n).exp())).sum::<f64>() / rest.len() as f64;
                    let two = |n: f64| c1 * sign.powi(n as i32) * (r1 * n).exp() + c2 * ls.powi(n as i32) * (r2 * n).exp();
                    let rms_two = (usable.iter().map(|&(n, y)| ((y - two(n)) / y).powi(2)).sum::<f64>() / usable.len() as f64).sqrt();
                    let rms_one = (usable.iter().map(|&(n, y)| ((y - residual_d(&*residual, n)) / y).powi(2)).sum::<f64>()
                        / usable.len() as f64)
                        .sqrt();
                    let expect = -lam_a.abs().ln();
                    if (r2 - expect).abs() < 0.1 && rms_one >= LOG_N_RMS_GAIN * rms_two && r2 < r1 {
                        kind = ModelKind::TwoExponential;
                        rate = r1;
                        zeta = c1 / (mu1 - 1.0);
                        let lam_inv = ls * r2.exp();
                        let z2 = c2 / (lam_inv - 1.0);
                        diag.second_coef = Some(z2);
                        diag.second_rate = Some(r2);
                        residual = Box::new(move |n: f64| zeta * sign.powi(n as i32) * (r1 * n).exp() + z2 * ls.powi(n as i32) * (r2 * n).exp());
                    }
                }
            }
        }
    }
    // Ill-conditioning: the rate must sit between the floor rate and 0.
    let floor_rate = floor_log2 * std::f64::consts::LN_2 / n2 as f64;
    if !(rate < 0.0 && rate > floor_rate) || !zeta.is_finite() {
        return Err(LabError::IllConditioned(format!(
            "rate {rate:.4} outside ({floor_rate:.3}, 0); lengthen n_range or raise precision"
        )));
    }

    // Remainder after the model.
    let rem: Vec<(f64, f64)> = usable
        .iter()
        .map(|&(n, y)| (n, y - residual_d(&*residual, n)))
        .filter(|p| p.1 != 0.0 && p.1.abs().log2() > floor_log2 + 8.0)
        .collect();
    let remainder_rate = if rem.len() >= 3 {
        let rr: Vec<Vec<f64>> = rem.iter().map(|p| vec![1.0, p.0]).collect();
        let lr: Vec<f64> = rem.iter().map(|p| p.1.abs().ln()).collect();
        lstsq(&rr, &lr, &vec![1.0; rem.len()]).map(|b| b.0[1])
    } else {
        None
    };

    // Back-substitution for T'.
    let r_n2 = residual(n2 as f64);
    let t_prime = Float::with_val(prec, &t2 - r_n2);
    diag.t_prime_gap_log2 = gap_of(&t_prime);
    diag.t_prime_consistent = diag.t_prime_gap_log2 <= tol_log2;

    let ratios: Vec<f64> = top.windows(2).filter(|w| w[1].0 == w[0].0 + 1.0).map(|w| w[1].1 / w[0].1).collect();
    if !ratios.is_empty() {
        diag.ratio_spread = Some(ratios.iter().map(|q| (q / mu_a - 1.0).abs()).fold(0.0, f64::max));
    }
    let s0 = top[0].1.signum();
    if top.iter().all(|p| p.1.signum() == s0) {
        diag.eventual_sign = Some(s0 as i8);
    }
    Ok(AsymptoticFit { model_kind: kind, t_prime, zeta_fit: zeta, rate: Some(rate), rate_reference, remainder_rate, diagnostics: diag })
}

/// `D_n` implied by a residual model `r_n`.
fn residual_d(r: &dyn Fn(f64) -> f64, n: f64) -> f64 {
    r(n + 1.0) - r(n)
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryVerdict {
    /// `(1/n2) log |T_{n2} - n2 T - T'|`; `None` at the zero floor.
    pub gamma_estimate: Option<f64>,
    pub recovered: bool,
    pub reference_log_mu: f64,
    /// `max(3/2 log|mu|, 2 log(lambda) log|mu| / (log(lambda) - log|mu|))`.
    pub ceiling_log: f64,
    pub gap_to_ceiling: Option<f64>,
    pub n2: usize,
    /// Whether `(1/n) log |r_n|` moves monotonically over the top half.
    pub monotone: bool,
}

pub fn theta_ceiling(log_mu: f64, log_lambda: f64) -> f64 {
    let a = 1.5 * log_mu;
    let b = 2.0 * log_lambda * log_mu / (log_lambda - log_mu);
    a.max(b)
}

/// The recovery exponent at the largest index, with `T'` from the series route.
pub fn gamma_recovery(series: &ShadowSeries) -> Result<RecoveryVerdict> {
    let fit = fit_expansion(series)?;
    let hom = &series.hom;
    let (mu, lam) = anchor_eigenvalues(hom);
    let lmu = mu.abs().ln();
    let llam = lam.abs().ln();
    let ceiling_log = theta_ceiling(lmu, llam);
    let res = series.residuals();
    let floor = fit.diagnostics.zero_floor_log2;
    let n2 = series.n2;
    let g_of = |i: usize, n: usize| -> Option<f64> {
        let l = hp::log2_abs(&res[i]);
        if l < floor {
            None
        } else {
            Some(l * std::f64::consts::LN_2 / n as f64)
        }
    };
    let gamma = if fit.model_kind == ModelKind::Zero { None } else { g_of(res.len() - 1, n2) };
    let half: Vec<Option<f64>> = (res.len() / 2..res.len()).map(|i| g_of(i, series.n1 + i)).collect();
    let vals: Vec<f64> = half.iter().flatten().cloned().collect();
    let monotone = vals.len() == half.len()
        && (vals.windows(2).all(|w| w[1] >= w[0]) || vals.windows(2).all(|w| w[1] <= w[0]));
    let recovered = gamma.is_some_and(|g| (g - lmu).abs() <= GAMMA_TOL);
    Ok(RecoveryVerdict {
        gamma_estimate: gamma,
        recovered,
        reference_log_mu: lmu,
        ceiling_log,
        gap_to_ceiling: gamma.map(|g| g - ceiling_log),
        n2,
        monotone,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchRecovery {
    pub lattice_class: [i64; 2],
    pub verdict: RecoveryVerdict,
    pub zeta_hat: Option<String>,
    pub zeta_hat_log2: Option<f64>,
    /// False when a branch with `zeta_hat` at the floor still reports recovery.
    pub consistent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DichotomyReport {
    pub anchor: String,
    pub recoverable: bool,
    pub branches: Vec<BranchRecovery>,
    /// Largest `log2 |zeta_hat|` when no branch recovers.
    pub zeta_scan_max_log2: Option<f64>,
    pub zeta_floor_log2: f64,
}

/// Series length that fits the precision budget, capped at `n_cap`.
pub fn budget_n2(model: &FlowModel, hom: &HomoclinicDatum, n_cap: usize) -> usize {
    let a = &hom.local;
    let l = a.mu.to_f64().abs().log2().max((1.0 / a.lambda.to_f64().abs()).log2());
    let n = ((model.precision_bits as f64 - 40.0) / -l).floor() as usize;
    n.min(n_cap)
}

pub fn recovery_dichotomy_scan(
    model: &FlowModel,
    anchor: &FlowPeriodicOrbit,
    lattice_classes: &[[i64; 2]],
    n_cap: usize,
) -> Result<DichotomyReport> {
    if lattice_classes.len() < 3 {
        return Err(LabError::Invalid("the dichotomy scan needs at least 3 homoclinic branches".into()));
    }
    let floor = templates_obstruction::zeta_floor_log2(model);
    let branches: Vec<BranchRecovery> = lattice_classes
        .par_iter()
        .map(|&m| -> Result<BranchRecovery> {
            let hom = homoclinic_shadowing::find_homoclinic(model, anchor, m)?;
            let n2 = budget_n2(model, &hom, n_cap);
            let n1 = hom.n0.max(n2.saturating_sub(3 * MIN_USABLE));
            let series = homoclinic_shadowing::shadow_series(model, &hom, n1, n2)?;
            let verdict = gamma_recovery(&series)?;
            let z: Option<ObstructionValue> = match templates_obstruction::zeta_hat(model, &hom) {
                Ok(z) => Some(z),
                Err(LabError::NotVolumeExpanding(_)) => None,
                Err(e) => return Err(e),
            };
            let zl = z.as_ref().map(|z| hp::log2_abs(&z.zeta_hat));
            let consistent = match zl {
                Some(l) if l < floor => !verdict.recovered,
                _ => true,
            };
            Ok(BranchRecovery {
                lattice_class: m,
                verdict,
                zeta_hat: z.as_ref().map(|z| hp::fmt_float(&z.zeta_hat)),
                zeta_hat_log2: zl,
                consistent,
            })
        })
        .collect::<Result<_>>()?;
    let recoverable = branches.iter().any(|b| b.verdict.recovered);
    let zeta_scan_max_log2 = if recoverable {
        None
    } else {
        Some(branches.iter().filter_map(|b| b.zeta_hat_log2).fold(f64::NEG_INFINITY, f64::max))
    };
    Ok(DichotomyReport { anchor: anchor.id.clone(), recoverable, branches, zeta_scan_max_log2, zeta_floor_log2: floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suspension_flow::{fixed_point_orbit, make_suspension, Roof};
    use crate::torus_maps::{make_linear_map, standard_perturbed, CAT};

    #[test]
    fn constant_roof_is_zero_model() {
        let m = make_suspension(make_linear_map(CAT).unwrap(), Roof::constant(1.0), 256).unwrap();
        let a = fixed_point_orbit(&m).unwrap();
        let h = homoclinic_shadowing::find_homoclinic(&m, &a, [1, 1]).unwrap();
        let s = homoclinic_shadowing::shadow_series(&m, &h, 5, 20).unwrap();
        let f = fit_expansion(&s).unwrap();
        assert_eq!(f.model_kind, ModelKind::Zero);
        assert!(f.diagnostics.t_prime_consistent);
        let g = gamma_recovery(&s).unwrap();
        assert!(!g.recovered && g.gamma_estimate.is_none());
    }

    #[test]
    fn conservative_cos_roof_is_n_times() {
        let m = make_suspension(make_linear_map(CAT).unwrap(), Roof::cos_x1(1.0, 0.25), 256).unwrap();
        let a = fixed_point_orbit(&m).unwrap();
        let h = homoclinic_shadowing::find_homoclinic(&m, &a, [1, 1]).unwrap();
        let s = homoclinic_shadowing::shadow_series(&m, &h, 10, 40).unwrap();
        let f = fit_expansion(&s).unwrap();
        eprintln!("{}", serde_json::to_string_pretty(&f).unwrap());
        assert_eq!(f.model_kind, ModelKind::NTimesExponential);
        assert!((f.rate.unwrap() - -0.96242).abs() < 0.01);
        let p = f.diagnostics.predicted_coefficient.unwrap();
        assert!((f.zeta_fit / p - 1.0).abs() < 1e-3, "{} vs {}", f.zeta_fit, p);
    }

    #[test]
    fn long_range_t_prime_matches_series() {
        let m = make_suspension(make_linear_map(CAT).unwrap(), Roof::cos_x1(1.0, 0.25), 256).unwrap();
        let a = fixed_point_orbit(&m).unwrap();
        let h = homoclinic_shadowing::find_homoclinic(&m, &a, [1, 1]).unwrap();
        let s = homoclinic_shadowing::shadow_series(&m, &h, 70, 110).unwrap();
        let f = fit_expansion(&s).unwrap();
        assert!(f.diagnostics.t_prime_consistent, "gap 2^{}", f.diagnostics.t_prime_gap_log2);
    }

    #[test]
    fn rate_is_roof_scale_invariant() {
        let base = make_linear_map(CAT).unwrap();
        let mut rates = Vec::new();
        for c in [1.0, 2.0] {
            let m = make_suspension(base.clone(), Roof::cos_x1(1.0, 0.25).scaled(c), 256).unwrap();
            let a = fixed_point_orbit(&m).unwrap();
            let h = homoclinic_shadowing::find_homoclinic(&m, &a, [1, 1]).unwrap();
            let s = homoclinic_shadowing::shadow_series(&m, &h, 10, 40).unwrap();
            let f = fit_expansion(&s).unwrap();
            rates.push((f.rate.unwrap(), f.zeta_fit));
        }
        assert!((rates[0].0 - rates[1].0).abs() < 1e-9);
        assert!((rates[1].1 / rates[0].1 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn dissipative_cos_roof_fit_and_recovery() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::cos_x1(1.0, 0.25), 256).unwrap();
        let a = fixed_point_orbit(&m).unwrap();
        let h = homoclinic_shadowing::find_homoclinic(&m, &a, [1, 1]).unwrap();
        let s = homoclinic_shadowing::shadow_series(&m, &h, 10, 40).unwrap();
        let f = fit_expansion(&s).unwrap();
        assert_ne!(f.model_kind, ModelKind::Zero);
        let g = gamma_recovery(&s).unwrap();
        assert!(g.recovered);
        let z = templates_obstruction::zeta_hat(&m, &h).unwrap();
        let xz = h.xi_inf.to_f64() * z.zeta_hat.to_f64();
        assert_eq!(f.zeta_fit.signum(), xz.signum());
        // Time reversal: the same anchor seen backwards recovers -log lambda.
        let rm = m.time_reversed();
        let ra = fixed_point_orbit(&rm).unwrap();
        let rh = homoclinic_shadowing::find_homoclinic(&rm, &ra, [1, 1]).unwrap();
        let rs = homoclinic_shadowing::shadow_series(&rm, &rh, 10, 40).unwrap();
        let rg = gamma_recovery(&rs).unwrap();
        let lam = h.local.lambda.to_f64().ln();
        assert!((rg.reference_log_mu + lam).abs() < 1e-12);
        assert!(rg.recovered);
    }

    #[test]
    fn dichotomy_on_constant_roof() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::constant(1.0), 192).unwrap();
        let a = fixed_point_orbit(&m).unwrap();
        let r = recovery_dichotomy_scan(&m, &a, &[[1, 1], [1, 0], [0, 1]], 30).unwrap();
        assert!(!r.recoverable);
        assert!(r.branches.iter().all(|b| b.consistent && b.zeta_hat_log2 == Some(f64::NEG_INFINITY)));
    }
}
