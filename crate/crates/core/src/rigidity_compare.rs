//! Orbit-by-orbit comparison of two flows sharing a base-orbit
//! correspondence: multiplier match or swap, Jacobian matching, period
//! matching.

use crate::error::{LabError, Result};
use crate::suspension_flow::{self, FlowModel, FlowPeriodicOrbit};
use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// Tolerance for pairings that reuse the same high-precision orbit data.
pub const EXACT_TOL: f64 = 1e-20;
/// Tolerance when the two bases are continued separately by Newton.
pub const CONTINUATION_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMethod {
    SameBase,
    Continuation,
    TimeReversal,
}

impl PairingMethod {
    pub fn default_tol(&self) -> f64 {
        match self {
            PairingMethod::Continuation => CONTINUATION_TOL,
            _ => EXACT_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PairedOrbit {
    pub id_x: String,
    pub id_y: String,
    pub n: u32,
    pub t_x: Float,
    pub t_y: Float,
    pub log_mu_x: Float,
    pub log_mu_y: Float,
    pub log_lambda_x: Float,
    pub log_lambda_y: Float,
}

impl PairedOrbit {
    fn from_orbits(x: &FlowPeriodicOrbit, y: &FlowPeriodicOrbit) -> Self {
        PairedOrbit {
            id_x: x.id.clone(),
            id_y: y.id.clone(),
            n: x.n(),
            t_x: x.period.clone(),
            t_y: y.period.clone(),
            log_mu_x: x.multipliers.log_mu.clone(),
            log_mu_y: y.multipliers.log_mu.clone(),
            log_lambda_x: x.multipliers.log_lambda.clone(),
            log_lambda_y: y.multipliers.log_lambda.clone(),
        }
    }

    pub fn log_jac_x(&self) -> Float {
        self.log_mu_x.clone() + &self.log_lambda_x
    }

    pub fn log_jac_y(&self) -> Float {
        self.log_mu_y.clone() + &self.log_lambda_y
    }

    /// `max(|log mu_X - log mu_Y|, |log lambda_X - log lambda_Y|)`.
    pub fn match_deviation(&self) -> f64 {
        let a = (self.log_mu_x.clone() - &self.log_mu_y).abs().to_f64();
        let b = (self.log_lambda_x.clone() - &self.log_lambda_y).abs().to_f64();
        a.max(b)
    }

    /// `max(|log mu_X + log lambda_Y|, |log lambda_X + log mu_Y|)`.
    pub fn swap_deviation(&self) -> f64 {
        let a = (self.log_mu_x.clone() + &self.log_lambda_y).abs().to_f64();
        let b = (self.log_lambda_x.clone() + &self.log_mu_y).abs().to_f64();
        a.max(b)
    }

    pub fn jacobian_deviation(&self) -> f64 {
        (self.log_jac_x() - self.log_jac_y()).abs().to_f64()
    }

    pub fn period_deviation(&self) -> f64 {
        (self.t_x.clone() - &self.t_y).abs().to_f64()
    }
}

#[derive(Clone, Debug)]
pub struct OrbitCorrespondence {
    pub model_x: FlowModel,
    pub model_y: FlowModel,
    pub method: PairingMethod,
    pub n_max: u32,
    pub pairs: Vec<PairedOrbit>,
}

fn y_id(method: PairingMethod, x_id: &str) -> String {
    match method {
        PairingMethod::TimeReversal => match x_id.strip_suffix('~') {
            Some(s) => s.to_string(),
            None => format!("{x_id}~"),
        },
        _ => x_id.to_string(),
    }
}

fn check_method(x: &FlowModel, y: &FlowModel, method: PairingMethod) -> Result<()> {
    let ok = match method {
        PairingMethod::SameBase => x.base == y.base && x.reversed == y.reversed,
        PairingMethod::TimeReversal => x.base == y.base && x.reversed != y.reversed,
        PairingMethod::Continuation => x.base.linear == y.base.linear && x.reversed == y.reversed,
    };
    if ok {
        Ok(())
    } else {
        Err(LabError::Invalid(format!("pairing method {method:?} does not apply to these models")))
    }
}

/// Pairs precomputed orbit lists.
pub fn pair_orbits(
    x: &FlowModel,
    xs: &[FlowPeriodicOrbit],
    y: &FlowModel,
    ys: &[FlowPeriodicOrbit],
    method: PairingMethod,
    n_max: u32,
) -> Result<OrbitCorrespondence> {
    check_method(x, y, method)?;
    let index: HashMap<&str, usize> = ys.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect();
    if index.len() != ys.len() {
        return Err(LabError::Invalid("duplicate orbit ids in Y".into()));
    }
    let mut used = vec![false; ys.len()];
    let mut pairs = Vec::with_capacity(xs.len());
    for o in xs {
        let key = y_id(method, &o.id);
        let j = *index.get(key.as_str()).ok_or_else(|| LabError::Unpairable(o.id.clone()))?;
        if used[j] || ys[j].n() != o.n() {
            return Err(LabError::Unpairable(o.id.clone()));
        }
        used[j] = true;
        pairs.push(PairedOrbit::from_orbits(o, &ys[j]));
    }
    if let Some(j) = used.iter().position(|u| !u) {
        return Err(LabError::Unpairable(ys[j].id.clone()));
    }
    Ok(OrbitCorrespondence { model_x: x.clone(), model_y: y.clone(), method, n_max, pairs })
}

pub fn match_orbits(x: &FlowModel, y: &FlowModel, method: PairingMethod, n_max: u32) -> Result<OrbitCorrespondence> {
    check_method(x, y, method)?;
    let xs = suspension_flow::flow_orbits(x, n_max)?;
    let ys = if x == y { xs.clone() } else { suspension_flow::flow_orbits(y, n_max)? };
    pair_orbits(x, &xs, y, &ys, method, n_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    EigendataMatch,
    EigendataSwap,
    Mixed,
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitFlags {
    pub id: String,
    pub is_match: bool,
    pub is_swap: bool,
    pub match_deviation: f64,
    pub swap_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatchTest {
    pub passed: bool,
    pub tolerance: f64,
    pub worst_id: String,
    pub worst_deviation: f64,
    /// First failing pair in enumeration order (shortest period first).
    pub first_failure: Option<String>,
    pub first_failure_deviation: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub method: PairingMethod,
    pub tolerance: f64,
    pub pairs: usize,
    pub aggregate: Aggregate,
    pub match_count: usize,
    pub swap_count: usize,
    pub max_match_deviation: f64,
    pub max_swap_deviation: f64,
    pub jacobian_match: MatchTest,
    pub period_match: MatchTest,
    pub note: Option<String>,
    #[serde(skip)]
    pub flags: Vec<OrbitFlags>,
}

fn run_test(c: &OrbitCorrespondence, tol: f64, dev: impl Fn(&PairedOrbit) -> f64 + Sync + Send) -> MatchTest {
    let devs: Vec<f64> = c.pairs.par_iter().map(dev).collect();
    let mut worst = (0.0f64, 0usize);
    for (i, d) in devs.iter().enumerate() {
        if *d > worst.0 {
            worst = (*d, i);
        }
    }
    let first = devs.iter().position(|d| !(*d < tol));
    MatchTest {
        passed: first.is_none(),
        tolerance: tol,
        worst_id: c.pairs.get(worst.1).map(|p| p.id_x.clone()).unwrap_or_default(),
        worst_deviation: worst.0,
        first_failure: first.map(|i| c.pairs[i].id_x.clone()),
        first_failure_deviation: first.map(|i| devs[i]),
    }
}

pub fn jacobian_match_test(c: &OrbitCorrespondence, tol: f64) -> MatchTest {
    run_test(c, tol, |p| p.jacobian_deviation())
}

pub fn period_match_test(c: &OrbitCorrespondence, tol: f64) -> MatchTest {
    run_test(c, tol, |p| p.period_deviation())
}

pub fn compare_eigendata(c: &OrbitCorrespondence, tol: f64) -> ComparisonReport {
    let flags: Vec<OrbitFlags> = c
        .pairs
        .par_iter()
        .map(|p| {
            let (m, s) = (p.match_deviation(), p.swap_deviation());
            OrbitFlags { id: p.id_x.clone(), is_match: m < tol, is_swap: s < tol, match_deviation: m, swap_deviation: s }
        })
        .collect();
    let match_count = flags.iter().filter(|f| f.is_match).count();
    let swap_count = flags.iter().filter(|f| f.is_swap).count();
    let n = flags.len();
    let aggregate = if n > 0 && match_count == n {
        Aggregate::EigendataMatch
    } else if n > 0 && swap_count == n {
        Aggregate::EigendataSwap
    } else if flags.iter().all(|f| !f.is_match && !f.is_swap) {
        Aggregate::None
    } else {
        Aggregate::Mixed
    };
    let note = (aggregate == Aggregate::Mixed).then(|| {
        "per-orbit verdicts disagree; for dissipative pairs this points to a mis-set tolerance or a broken correspondence"
            .to_string()
    });
    ComparisonReport {
        method: c.method,
        tolerance: tol,
        pairs: n,
        aggregate,
        match_count,
        swap_count,
        max_match_deviation: flags.iter().map(|f| f.match_deviation).fold(0.0, f64::max),
        max_swap_deviation: flags.iter().map(|f| f.swap_deviation).fold(0.0, f64::max),
        jacobian_match: jacobian_match_test(c, tol),
        period_match: period_match_test(c, tol),
        note,
        flags,
    }
}

impl ComparisonReport {
    /// Swap together with Jacobian matching forces `|log Jac| < 2 tol` on
    /// every orbit; returns whether the data respect that.
    pub fn swap_jacobian_implication(&self, c: &OrbitCorrespondence) -> bool {
        if self.aggregate != Aggregate::EigendataSwap || !self.jacobian_match.passed {
            return true;
        }
        c.pairs.iter().all(|p| p.log_jac_x().abs().to_f64() < 2.0 * self.tolerance)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    id: &'a str,
    #[serde(rename = "T_X")]
    t_x: String,
    #[serde(rename = "T_Y")]
    t_y: String,
    #[serde(rename = "mu_X")]
    mu_x: String,
    #[serde(rename = "mu_Y")]
    mu_y: String,
    #[serde(rename = "lambda_X")]
    lambda_x: String,
    #[serde(rename = "lambda_Y")]
    lambda_y: String,
    flags: String,
}

/// Per-orbit CSV; multipliers are written as `exp(log)` to 30 digits.
pub fn write_pairs_csv(path: &Path, c: &OrbitCorrespondence, report: &ComparisonReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let s = |x: &Float| x.to_string_radix(10, Some(30));
    for (p, f) in c.pairs.iter().zip(&report.flags) {
        let mut tags = Vec::new();
        if f.is_match {
            tags.push("match");
        }
        if f.is_swap {
            tags.push("swap");
        }
        w.serialize(CsvRow {
            id: &p.id_x,
            t_x: s(&p.t_x),
            t_y: s(&p.t_y),
            mu_x: s(&p.log_mu_x.clone().exp()),
            mu_y: s(&p.log_mu_y.clone().exp()),
            lambda_x: s(&p.log_lambda_x.clone().exp()),
            lambda_y: s(&p.log_lambda_y.clone().exp()),
            flags: tags.join("|"),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suspension_flow::{make_suspension, Roof};
    use crate::torus_maps::standard_perturbed;

    fn diss(roof: Roof) -> FlowModel {
        make_suspension(standard_perturbed(0.01).unwrap(), roof, 192).unwrap()
    }

    #[test]
    fn self_comparison_is_exact() {
        let x = diss(Roof::constant(1.0));
        let c = match_orbits(&x, &x, PairingMethod::SameBase, 5).unwrap();
        let r = compare_eigendata(&c, EXACT_TOL);
        assert_eq!(r.aggregate, Aggregate::EigendataMatch);
        assert_eq!(r.max_match_deviation, 0.0);
        assert!(r.jacobian_match.passed && r.period_match.passed);
    }

    #[test]
    fn reversal_swaps() {
        let x = diss(Roof::cos_x1(1.0, 0.25));
        let y = x.time_reversed();
        let c = match_orbits(&x, &y, PairingMethod::TimeReversal, 5).unwrap();
        let r = compare_eigendata(&c, EXACT_TOL);
        assert_eq!(r.aggregate, Aggregate::EigendataSwap);
        assert_eq!(r.max_swap_deviation, 0.0);
        assert!(r.period_match.passed);
        let j = &r.jacobian_match;
        assert!(!j.passed);
        let fp = &c.pairs[0];
        assert_eq!(fp.n, 1);
        assert_eq!(j.first_failure.as_deref(), Some(fp.id_x.as_str()));
        assert!(fp.log_jac_x() > 0);
        assert!(r.swap_jacobian_implication(&c));
        // involution
        let back = match_orbits(&y, &x, PairingMethod::TimeReversal, 5).unwrap();
        let rb = compare_eigendata(&back, EXACT_TOL);
        assert_eq!(rb.aggregate, Aggregate::EigendataSwap);
        assert_eq!(rb.max_swap_deviation, r.max_swap_deviation);
    }

    #[test]
    fn roof_change_keeps_multipliers() {
        let x = diss(Roof::constant(1.0));
        let y = diss(Roof::cos_x1(1.0, 0.1));
        let c = match_orbits(&x, &y, PairingMethod::SameBase, 4).unwrap();
        let r = compare_eigendata(&c, EXACT_TOL);
        assert_eq!(r.aggregate, Aggregate::EigendataMatch);
        assert!(r.jacobian_match.passed);
        assert!(!r.period_match.passed);
        assert!(r.period_match.first_failure.is_some());
    }

    #[test]
    fn wrong_method_or_missing_orbit() {
        let x = diss(Roof::constant(1.0));
        assert!(match_orbits(&x, &x, PairingMethod::TimeReversal, 2).is_err());
        let xs = suspension_flow::flow_orbits(&x, 3).unwrap();
        let mut ys = xs.clone();
        ys.pop();
        assert!(matches!(pair_orbits(&x, &xs, &x, &ys, PairingMethod::SameBase, 3), Err(LabError::Unpairable(_))));
    }
}
