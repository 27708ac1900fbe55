//! Experiment configs, the preset catalog and the batch runner behind `lab`.
//!
//! A config names one experiment kind with its parameters and expectations;
//! `run` executes it, writes CSV/JSON artifacts when given an output
//! directory, and returns a [`RunReport`] whose JSON is a pure function of
//! the config. Wall-clock time is kept out of the report (see [`RunOutcome`]).

use crate::error::{LabError, Result};
use crate::homoclinic_shadowing::{self, HomoclinicDatum};
use crate::hp;
use crate::period_asymptotics::{self, AsymptoticFit, ModelKind};
use crate::perturbation_lab;
use crate::rigidity_compare::{self, Aggregate, PairingMethod};
use crate::suspension_flow::{self, DissipationClass, FlowModel, FlowPeriodicOrbit, Roof};
use crate::templates_obstruction::{self, ScanVerdict};
use crate::thermo_orbit_sums::{self, OrbitClass, OrbitEnsemble, Potential, WindowValue};
use crate::torus_maps::{BaseMap, TrigTerm, CAT};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

/// Bumped when the report layout changes.
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimechangeSpec {
    pub c0: f64,
    pub classes: Vec<[i64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub flow: FlowModel,
    /// Roof bumps at homoclinic points of the fixed-point anchor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timechange: Option<TimechangeSpec>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<FlowModel> {
        self.flow.validate()?;
        match &self.timechange {
            None => Ok(self.flow.clone()),
            Some(tc) => {
                let anchor = suspension_flow::fixed_point_orbit(&self.flow)?;
                perturbation_lab::roof_timechange_perturbation(&self.flow, &anchor, tc.c0, &tc.classes)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialSpec {
    PsiU,
    PsiS,
    LogJacobian,
    Zero,
    FamilyT(f64),
    /// `phi_t` at the minimizer of the pressure curve.
    FamilyT0,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSpec {
    Contracting,
    Preserving,
    Expanding,
    Mild(f64),
}

impl ClassSpec {
    fn class(&self) -> OrbitClass {
        match *self {
            ClassSpec::Contracting => OrbitClass::Dissipation(DissipationClass::Contracting),
            ClassSpec::Preserving => OrbitClass::Dissipation(DissipationClass::Preserving),
            ClassSpec::Expanding => OrbitClass::Dissipation(DissipationClass::Expanding),
            ClassSpec::Mild(r) => OrbitClass::Mild(r),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitExpect {
    #[serde(default)]
    pub model_kind: Option<ModelKind>,
    /// `|rate - log |mu||` bound, `mu` from the anchor monodromy.
    #[serde(default)]
    pub rate_tol: Option<f64>,
    /// Residual ratios `r_n / r_{n-1}` within this relative distance of `mu`
    /// for `n` in `ratio_range`.
    #[serde(default)]
    pub ratio_tol: Option<f64>,
    #[serde(default)]
    pub ratio_range: Option<[usize; 2]>,
    /// Pure-exponential residual RMS at least this multiple of the n-times one.
    #[serde(default)]
    pub rms_gain: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZetaExpect {
    /// Branches on which `sign(zeta_fit) = sign(xi_inf zeta_hat)`.
    #[serde(default)]
    pub sign_agreement_min: Option<usize>,
    #[serde(default)]
    pub tail_log2_max: Option<f64>,
    /// Residuals exactly zero, no recovery, obstruction scan below the floor.
    #[serde(default)]
    pub all_zero: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProportionCheck {
    pub potential: PotentialSpec,
    pub class: ClassSpec,
    pub min_final: f64,
    #[serde(default)]
    pub nondecreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Against {
    Itself,
    TimeReversed,
    Model(ModelSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareCase {
    pub against: Against,
    pub method: PairingMethod,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub expect_aggregate: Option<Aggregate>,
    /// Bound on the deviation of the expected aggregate.
    #[serde(default)]
    pub expect_max_deviation: Option<f64>,
    #[serde(default)]
    pub expect_jacobian_match: Option<bool>,
    /// Base period of the first Jacobian mismatch, with a volume-expanding
    /// `X` side.
    #[serde(default)]
    pub expect_witness_period: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Orbits {
        n_max: u32,
    },
    Shadow {
        class: [i64; 2],
        n1: usize,
        n2: usize,
        #[serde(default)]
        expect_zero: bool,
    },
    Fit {
        class: [i64; 2],
        n1: usize,
        n2: usize,
        /// Used when the mixed derivative of the hitting time vanishes at the anchor.
        #[serde(default)]
        fallback_roof: Option<Roof>,
        #[serde(default)]
        expect: FitExpect,
    },
    Zeta {
        classes: Vec<[i64; 2]>,
        n1: usize,
        n2: usize,
        #[serde(default)]
        scan_eta_grid: Option<Vec<f64>>,
        #[serde(default)]
        expect: ZetaExpect,
    },
    Pressure {
        n_max: u32,
        #[serde(default = "default_delta")]
        delta: f64,
        potentials: Vec<PotentialSpec>,
        /// Potentials whose pressure should vanish, with the bound.
        #[serde(default)]
        expect_zero: Vec<PotentialSpec>,
        #[serde(default = "default_root_tol")]
        tol: f64,
    },
    Proportions {
        n_max: u32,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_windows")]
        windows: usize,
        checks: Vec<ProportionCheck>,
    },
    Curve {
        n_max: u32,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        grid: Option<Vec<f64>>,
        #[serde(default = "default_root_tol")]
        root_tol: f64,
        #[serde(default = "default_t0_range")]
        t0_range: [f64; 2],
    },
    Compare {
        n_max: u32,
        cases: Vec<CompareCase>,
    },
    Perturb {
        c0s: Vec<f64>,
        n_max: u32,
        #[serde(default = "default_period_tol")]
        period_tol: f64,
        #[serde(default = "default_lambda_tol")]
        lambda_tol: f64,
    },
}

fn default_delta() -> f64 {
    thermo_orbit_sums::DEFAULT_DELTA
}
fn default_windows() -> usize {
    3
}
fn default_root_tol() -> f64 {
    0.05
}
fn default_t0_range() -> [f64; 2] {
    [0.05, 0.95]
}
fn default_period_tol() -> f64 {
    1e-8
}
fn default_lambda_tol() -> f64 {
    1e-6
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Orbits { .. } => "orbits",
            Experiment::Shadow { .. } => "shadow",
            Experiment::Fit { .. } => "fit",
            Experiment::Zeta { .. } => "zeta",
            Experiment::Pressure { .. } => "pressure",
            Experiment::Proportions { .. } => "proportions",
            Experiment::Curve { .. } => "curve",
            Experiment::Compare { .. } => "compare",
            Experiment::Perturb { .. } => "perturb",
        }
    }
}

pub const KINDS: [&str; 9] = ["orbits", "shadow", "fit", "zeta", "pressure", "proportions", "curve", "compare", "perturb"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelSpec,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Schema checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Invalid(format!("config {}: {m}", self.name)));
        match &self.experiment {
            Experiment::Shadow { n1, n2, .. } | Experiment::Fit { n1, n2, .. } | Experiment::Zeta { n1, n2, .. }
                if n1 > n2 =>
            {
                bad(format!("n1 = {n1} exceeds n2 = {n2}"))
            }
            Experiment::Zeta { classes, .. } if classes.is_empty() => bad("no homoclinic classes".into()),
            Experiment::Orbits { n_max }
            | Experiment::Pressure { n_max, .. }
            | Experiment::Proportions { n_max, .. }
            | Experiment::Curve { n_max, .. }
            | Experiment::Compare { n_max, .. }
            | Experiment::Perturb { n_max, .. }
                if *n_max == 0 =>
            {
                bad("n_max must be positive".into())
            }
            Experiment::Pressure { delta, .. } | Experiment::Proportions { delta, .. } | Experiment::Curve { delta, .. }
                if !(*delta > 0.0) =>
            {
                bad("delta must be positive".into())
            }
            Experiment::Perturb { c0s, .. } if c0s.is_empty() => bad("no c0 values".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Assertion {
    Assertion { name: name.to_string(), passed, detail }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub lab_version: String,
    pub name: String,
    pub kind: String,
    pub precision_bits: u32,
    pub config: ExperimentConfig,
    pub result: Value,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

/// A report plus the run's wall-clock seconds, which are written to a
/// separate `timing.json` so the report stays byte-stable.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub wall_seconds: f64,
}

/// Writes via a temporary sibling and a rename.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |p| Ok(std::fs::write(p, text)?))
}

struct Ctx<'a> {
    out: Option<&'a Path>,
    artifacts: Vec<String>,
}

impl Ctx<'_> {
    fn emit(&mut self, file: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        if let Some(dir) = self.out {
            write_atomic(&dir.join(file), write)?;
            self.artifacts.push(file.to_string());
        }
        Ok(())
    }
}

fn with_context<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        LabError::Invalid(m) => LabError::Invalid(format!("{name}: {m}")),
        other => other,
    })
}

pub fn run(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let model = config.model.build()?;
    let mut ctx = Ctx { out, artifacts: Vec::new() };
    let (result, assertions) = with_context(
        &config.name,
        match &config.experiment {
            Experiment::Orbits { n_max } => run_orbits(&model, *n_max, &mut ctx),
            Experiment::Shadow { class, n1, n2, expect_zero } => run_shadow(&model, *class, *n1, *n2, *expect_zero, &mut ctx),
            Experiment::Fit { class, n1, n2, fallback_roof, expect } => {
                run_fit(&model, *class, *n1, *n2, fallback_roof.as_ref(), expect, &mut ctx)
            }
            Experiment::Zeta { classes, n1, n2, scan_eta_grid, expect } => {
                run_zeta(&model, classes, *n1, *n2, scan_eta_grid.as_deref(), expect, &mut ctx)
            }
            Experiment::Pressure { n_max, delta, potentials, expect_zero, tol } => {
                run_pressure(&model, *n_max, *delta, potentials, expect_zero, *tol, &mut ctx)
            }
            Experiment::Proportions { n_max, delta, windows, checks } => {
                run_proportions(&model, *n_max, *delta, *windows, checks, &mut ctx)
            }
            Experiment::Curve { n_max, delta, grid, root_tol, t0_range } => {
                run_curve(&model, *n_max, *delta, grid.as_deref(), *root_tol, *t0_range, &mut ctx)
            }
            Experiment::Compare { n_max, cases } => run_compare(&model, *n_max, cases, &mut ctx),
            Experiment::Perturb { c0s, n_max, period_tol, lambda_tol } => {
                run_perturb(&model, c0s, *n_max, *period_tol, *lambda_tol, &mut ctx)
            }
        },
    )?;
    let passed = assertions.iter().all(|a| a.passed);
    let mut report = RunReport {
        schema: REPORT_SCHEMA,
        lab_version: env!("CARGO_PKG_VERSION").to_string(),
        name: config.name.clone(),
        kind: config.experiment.kind().to_string(),
        precision_bits: config.model.flow.precision_bits,
        config: config.clone(),
        result,
        assertions,
        passed,
        artifacts: Vec::new(),
    };
    if let Some(dir) = out {
        let mut artifacts = ctx.artifacts;
        artifacts.push("report.json".into());
        report.artifacts = artifacts;
        write_text(&dir.join("report.json"), &report.to_json())?;
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    if let Some(dir) = out {
        write_text(&dir.join("timing.json"), &serde_json::to_string_pretty(&json!({ "wall_seconds": wall_seconds }))?)?;
    }
    Ok(RunOutcome { report, wall_seconds })
}

fn f64s(v: &[f64]) -> Value {
    json!(v)
}

fn run_orbits(model: &FlowModel, n_max: u32, ctx: &mut Ctx) -> Result<(Value, Vec<Assertion>)> {
    let orbits = suspension_flow::flow_orbits(model, n_max)?;
    let a = crate::lattice::imat(&model.base.linear);
    let mut cycles = vec![0i128; n_max as usize + 1];
    for o in &orbits {
        cycles[o.n() as usize] += 1;
    }
    let mut rows = Vec::new();
    let mut all = true;
    for n in 1..=n_max {
        let points: i128 = (1..=n).filter(|d| n % d == 0).map(|d| d as i128 * cycles[d as usize]).sum();
        let det = thermo_orbit_sums::lattice_point_count(&a, n)?;
        all &= points == det;
        rows.push(json!({ "n": n, "prime_cycles": cycles[n as usize] as i64, "points": points as i64, "det_formula": det as i64 }));
    }
    ctx.emit("orbits.csv", |p| suspension_flow::write_flow_csv(p, &orbits))?;
    let detail = format!("n = 1..={n_max}: {}", rows.iter().map(|r| r["points"].to_string()).collect::<Vec<_>>().join(", "));
    Ok((json!({ "orbit_count": orbits.len(), "counts": rows }), vec![check("counts_match_det_formula", all, detail)]))
}

fn anchor_and_branch(model: &FlowModel, class: [i64; 2]) -> Result<(FlowPeriodicOrbit, HomoclinicDatum)> {
    let anchor = suspension_flow::fixed_point_orbit(model)?;
    let hom = homoclinic_shadowing::find_homoclinic(model, &anchor, class)?;
    Ok((anchor, hom))
}

fn run_shadow(
    model: &FlowModel,
    class: [i64; 2],
    n1: usize,
    n2: usize,
    expect_zero: bool,
    ctx: &mut Ctx,
) -> Result<(Value, Vec<Assertion>)> {
    let (anchor, hom) = anchor_and_branch(model, class)?;
    let s = homoclinic_shadowing::shadow_series(model, &hom, n1, n2)?;
    let res = s.residuals();
    ctx.emit("shadow.csv", |p| s.write_csv(p))?;
    let mut asserts = Vec::new();
    if expect_zero {
        let nz = res.iter().filter(|r| !r.is_zero()).count();
        asserts.push(check("residuals_exactly_zero", nz == 0, format!("{nz} nonzero residuals")));
    }
    let max_audit = s.audits.iter().cloned().fold(0.0, f64::max);
    Ok((
        json!({
            "anchor": anchor.id,
            "lattice_class": class,
            "anchor_period": hp::fmt_float(&s.anchor_period),
            "excursion_time": hp::fmt_float(&hom.excursion),
            "n": s.ns().collect::<Vec<_>>(),
            "periods": s.periods.iter().map(hp::fmt_float).collect::<Vec<_>>(),
            "residuals": res.iter().map(hp::fmt_float).collect::<Vec<_>>(),
            "max_audit": max_audit,
        }),
        asserts,
    ))
}

/// `r_n / r_{n-1}` for `n` in `[a, b]`.
fn residual_ratios(res: &[rug::Float], n1: usize, range: [usize; 2]) -> Vec<f64> {
    (range[0].max(n1 + 1)..=range[1])
        .filter(|&n| n - n1 < res.len())
        .map(|n| {
            let (a, b) = (&res[n - n1], &res[n - n1 - 1]);
            if b.is_zero() {
                f64::NAN
            } else {
                rug::Float::with_val(64, a / b).to_f64()
            }
        })
        .collect()
}

fn fit_assertions(fit: &AsymptoticFit, mu: f64, ratios: &[f64], expect: &FitExpect) -> Vec<Assertion> {
    let mut v = Vec::new();
    if let Some(k) = expect.model_kind {
        v.push(check("model_kind", fit.model_kind == k, format!("selected {:?}, expected {:?}", fit.model_kind, k)));
    }
    if let Some(tol) = expect.rate_tol {
        let lmu = mu.abs().ln();
        let ok = fit.rate.is_some_and(|r| (r - lmu).abs() <= tol);
        v.push(check("rate", ok, format!("rate {:?} vs log|mu| = {lmu:.6}, tol {tol}", fit.rate)));
    }
    if let Some(tol) = expect.ratio_tol {
        let worst = ratios.iter().map(|q| (q / mu - 1.0).abs()).fold(0.0f64, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
        let ok = !ratios.is_empty() && worst <= tol;
        v.push(check("residual_ratio", ok, format!("max |ratio/mu - 1| = {worst:.3e} over {} ratios, tol {tol}", ratios.len())));
    }
    if let Some(g) = expect.rms_gain {
        let (l, n) = (fit.diagnostics.rms_linear, fit.diagnostics.rms_log);
        let ok = matches!((l, n), (Some(a), Some(b)) if a >= g * b);
        v.push(check("pure_rms_gain", ok, format!("pure RMS {l:?} vs n-times RMS {n:?}, need gain {g}")));
    }
    v
}

fn run_fit(
    model: &FlowModel,
    class: [i64; 2],
    n1: usize,
    n2: usize,
    fallback_roof: Option<&Roof>,
    expect: &FitExpect,
    ctx: &mut Ctx,
) -> Result<(Value, Vec<Assertion>)> {
    let (mut anchor, mut hom) = anchor_and_branch(model, class)?;
    let mixed = hom.local.d1_tau_coeffs(1)[1].to_f64();
    let mut used = model.clone();
    let floor = 2f64.powf(templates_obstruction::zeta_floor_log2(model));
    let switched = mixed.abs() <= floor && fallback_roof.is_some();
    if switched {
        used = model.with_roof(fallback_roof.unwrap().clone());
        used.validate()?;
        (anchor, hom) = anchor_and_branch(&used, class)?;
    }
    let s = homoclinic_shadowing::shadow_series(&used, &hom, n1, n2)?;
    let fit = period_asymptotics::fit_expansion(&s)?;
    let verdict = period_asymptotics::gamma_recovery(&s)?;
    let mu = anchor.multipliers.mu.to_f64();
    let res = s.residuals();
    let range = expect.ratio_range.unwrap_or([n1 + 1, n2]);
    let ratios = residual_ratios(&res, n1, range);
    ctx.emit("shadow.csv", |p| s.write_csv(p))?;
    ctx.emit("fit.json", |p| Ok(std::fs::write(p, serde_json::to_string_pretty(&fit)?)?))?;
    let asserts = fit_assertions(&fit, mu, &ratios, expect);
    Ok((
        json!({
            "anchor": anchor.id,
            "lattice_class": class,
            "mu": mu,
            "lambda": anchor.multipliers.lambda.to_f64(),
            "mixed_derivative": mixed,
            "fallback_roof_used": switched,
            "fit": fit,
            "recovery": verdict,
            "ratio_range": range,
            "ratios": f64s(&ratios),
        }),
        asserts,
    ))
}

fn run_zeta(
    model: &FlowModel,
    classes: &[[i64; 2]],
    n1: usize,
    n2: usize,
    grid: Option<&[f64]>,
    expect: &ZetaExpect,
    ctx: &mut Ctx,
) -> Result<(Value, Vec<Assertion>)> {
    let anchor = suspension_flow::fixed_point_orbit(model)?;
    let floor = templates_obstruction::zeta_floor_log2(model);
    let mut rows = Vec::new();
    let mut agree = 0;
    let mut worst_tail = f64::NEG_INFINITY;
    let mut nonzero = 0;
    let mut recovered = 0;
    for &m in classes {
        let hom = homoclinic_shadowing::find_homoclinic(model, &anchor, m)?;
        let s = homoclinic_shadowing::shadow_series(model, &hom, n1, n2)?;
        let fit = period_asymptotics::fit_expansion(&s)?;
        let verdict = period_asymptotics::gamma_recovery(&s)?;
        let z = templates_obstruction::zeta_hat(model, &hom)?;
        nonzero += s.residuals().iter().filter(|r| !r.is_zero()).count();
        recovered += verdict.recovered as usize;
        let pred = rug::Float::with_val(64, &hom.xi_inf * &z.zeta_hat).to_f64();
        let sf = fit.zeta_fit.signum() * (fit.zeta_fit != 0.0) as i32 as f64;
        let sp = pred.signum() * (pred != 0.0) as i32 as f64;
        agree += (sf == sp) as usize;
        worst_tail = worst_tail.max(z.tail_bound_log2);
        rows.push(json!({
            "lattice_class": m,
            "model_kind": fit.model_kind,
            "zeta_fit": fit.zeta_fit,
            "xi_inf": hom.xi_inf.to_f64(),
            "zeta_hat": hp::fmt_float(&z.zeta_hat),
            "xi_zeta_hat": pred,
            "signs_agree": sf == sp,
            "tail_bound_log2": z.tail_bound_log2,
            "recovered": verdict.recovered,
            "gamma_estimate": verdict.gamma_estimate,
        }));
    }
    let scan = match grid {
        Some(g) => Some(templates_obstruction::c1_obstruction_scan(model, &anchor, g)?),
        None => None,
    };
    if let Some(sc) = &scan {
        ctx.emit("zeta_scan.csv", |p| sc.write_csv(p))?;
    }
    let mut asserts = Vec::new();
    if let Some(k) = expect.sign_agreement_min {
        asserts.push(check("sign_agreement", agree >= k, format!("{agree} of {} branches agree, need {k}", classes.len())));
    }
    if let Some(t) = expect.tail_log2_max {
        asserts.push(check("tail_bounds", worst_tail < t, format!("largest tail bound 2^{worst_tail:.1}, need < 2^{t}")));
    }
    if expect.all_zero {
        asserts.push(check("residuals_exactly_zero", nonzero == 0, format!("{nonzero} nonzero residuals")));
        asserts.push(check("no_recovery", recovered == 0, format!("{recovered} branches report recovery")));
        let ok = scan.as_ref().is_some_and(|s| matches!(s.verdict, ScanVerdict::UnobstructedAtScale) && s.max_abs_zeta_log2 < floor);
        let d = scan.as_ref().map_or("no scan grid".to_string(), |s| {
            format!("max log2|zeta_hat| = {} over {} branches, floor {floor}", s.max_abs_zeta_log2, s.rows.len())
        });
        asserts.push(check("scan_below_floor", ok, d));
    }
    Ok((json!({ "anchor": anchor.id, "floor_log2": floor, "branches": rows, "scan": scan }), asserts))
}

/// Ensembles are the slow part of the thermodynamic runs; reuse them across
/// runs in one process.
fn ensemble(model: &FlowModel, n_max: u32) -> Result<Arc<OrbitEnsemble>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<OrbitEnsemble>>>> = OnceLock::new();
    let key = format!("{}#{n_max}", serde_json::to_string(model)?);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(e) = cache.lock().unwrap().get(&key) {
        return Ok(e.clone());
    }
    let e = Arc::new(thermo_orbit_sums::build_ensemble(model, n_max)?);
    cache.lock().unwrap().insert(key, e.clone());
    Ok(e)
}

fn potential(spec: &PotentialSpec, t0: Option<f64>) -> Potential {
    match spec {
        PotentialSpec::PsiU => Potential::PsiU,
        PotentialSpec::PsiS => Potential::PsiS,
        PotentialSpec::LogJacobian => Potential::LogJacobian,
        PotentialSpec::Zero => Potential::Zero,
        PotentialSpec::FamilyT(t) => Potential::FamilyT(*t),
        PotentialSpec::FamilyT0 => Potential::FamilyT(t0.expect("t0 computed")),
    }
}

fn curve_if_needed(ens: &OrbitEnsemble, specs: &[&PotentialSpec], delta: f64) -> Result<Option<thermo_orbit_sums::PressureCurve>> {
    if specs.iter().any(|p| **p == PotentialSpec::FamilyT0) {
        let t = ens.largest_window(delta);
        Ok(Some(thermo_orbit_sums::pressure_curve(ens, &thermo_orbit_sums::default_t_grid(), t, delta)?))
    } else {
        Ok(None)
    }
}

fn run_pressure(
    model: &FlowModel,
    n_max: u32,
    delta: f64,
    potentials: &[PotentialSpec],
    expect_zero: &[PotentialSpec],
    tol: f64,
    ctx: &mut Ctx,
) -> Result<(Value, Vec<Assertion>)> {
    let ens = ensemble(model, n_max)?;
    let t = ens.largest_window(delta);
    let all: Vec<&PotentialSpec> = potentials.iter().chain(expect_zero).collect();
    let t0 = curve_if_needed(&ens, &all, delta)?.map(|c| c.t0);
    let mut rows = Vec::new();
    let mut windows = Vec::new();
    for p in potentials {
        let psi = potential(p, t0);
        let v = thermo_orbit_sums::pressure_estimate(&ens, &psi, t, delta)?;
        windows.push(WindowValue { t, delta, value: v });
        rows.push(json!({ "potential": psi.name(), "pressure": v }));
    }
    ctx.emit("pressure.csv", |p| thermo_orbit_sums::write_window_csv(p, &windows))?;
    let mut asserts = Vec::new();
    for p in expect_zero {
        let psi = potential(p, t0);
        let v = thermo_orbit_sums::pressure_estimate(&ens, &psi, t, delta)?;
        asserts.push(check(&format!("pressure_zero_{}", potential_label(p)), v.abs() <= tol, format!("P = {v:.6e}, tol {tol}")));
    }
    Ok((json!({ "T": t, "delta": delta, "orbits": ens.orbits.len(), "t0": t0, "estimates": rows }), asserts))
}

fn run_proportions(
    model: &FlowModel,
    n_max: u32,
    delta: f64,
    windows: usize,
    checks: &[ProportionCheck],
    ctx: &mut Ctx,
) -> Result<(Value, Vec<Assertion>)> {
    let ens = ensemble(model, n_max)?;
    let specs: Vec<&PotentialSpec> = checks.iter().map(|c| &c.potential).collect();
    let t0 = curve_if_needed(&ens, &specs, delta)?.map(|c| c.t0);
    let mut rows = Vec::new();
    let mut asserts = Vec::new();
    let mut csv_rows = Vec::new();
    for c in checks {
        let psi = potential(&c.potential, t0);
        let prof = thermo_orbit_sums::proportion_profile(&ens, &psi, c.class.class(), delta, windows)?;
        let tag = format!("{}_{}", potential_label(&c.potential), class_name(&c.class));
        let last = prof.last().map_or(f64::NAN, |w| w.value);
        asserts.push(check(&format!("{tag}_final"), last >= c.min_final, format!("proportion {last:.6} at T = {:.3}, need >= {}", prof.last().map_or(f64::NAN, |w| w.t), c.min_final)));
        if c.nondecreasing {
            let ok = prof.len() == windows && prof.windows(2).all(|w| w[1].value >= w[0].value);
            let vals: Vec<String> = prof.iter().map(|w| format!("{:.6}", w.value)).collect();
            asserts.push(check(&format!("{tag}_nondecreasing"), ok, format!("last windows: {}", vals.join(", "))));
        }
        csv_rows.extend(prof.iter().map(|w| (tag.clone(), w.clone())));
        rows.push(json!({ "potential": psi.name(), "class": class_name(&c.class), "profile": prof }));
    }
    ctx.emit("proportions.csv", |p| {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["check", "T", "delta", "value"])?;
        for (tag, v) in &csv_rows {
            w.write_record([tag.clone(), format!("{:.17e}", v.t), format!("{:.17e}", v.delta), format!("{:.17e}", v.value)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok((json!({ "T": ens.largest_window(delta), "delta": delta, "t0": t0, "checks": rows }), asserts))
}

fn potential_label(p: &PotentialSpec) -> String {
    match p {
        PotentialSpec::PsiU => "psi_u".into(),
        PotentialSpec::PsiS => "psi_s".into(),
        PotentialSpec::LogJacobian => "log_jacobian".into(),
        PotentialSpec::Zero => "zero".into(),
        PotentialSpec::FamilyT(t) => format!("phi_{t}"),
        PotentialSpec::FamilyT0 => "phi_t0".into(),
    }
}

fn class_name(c: &ClassSpec) -> String {
    match c {
        ClassSpec::Contracting => "contracting".into(),
        ClassSpec::Preserving => "preserving".into(),
        ClassSpec::Expanding => "expanding".into(),
        ClassSpec::Mild(r) => format!("mild{r}"),
    }
}

fn run_curve(
    model: &FlowModel,
    n_max: u32,
    delta: f64,
    grid: Option<&[f64]>,
    root_tol: f64,
    t0_range: [f64; 2],
    ctx: &mut Ctx,
) -> Result<(Value, Vec<Assertion>)> {
    let ens = ensemble(model, n_max)?;
    let t = ens.largest_window(delta);
    let g = grid.map(<[f64]>::to_vec).unwrap_or_else(thermo_orbit_sums::default_t_grid);
    let c = thermo_orbit_sums::pressure_curve(&ens, &g, t, delta)?;
    ctx.emit("pressure_curve.json", |p| c.write_json(p))?;
    let p0 = match c.value_at(0.0) {
        Some(v) => v,
        None => thermo_orbit_sums::pressure_estimate(&ens, &Potential::FamilyT(0.0), t, delta)?,
    };
    let p1 = match c.value_at(1.0) {
        Some(v) => v,
        None => thermo_orbit_sums::pressure_estimate(&ens, &Potential::FamilyT(1.0), t, delta)?,
    };
    let asserts = vec![
        check("pressure_zero_at_0", p0.abs() <= root_tol, format!("P(0) = {p0:.6e}, tol {root_tol}")),
        check("pressure_zero_at_1", p1.abs() <= root_tol, format!("P(1) = {p1:.6e}, tol {root_tol}")),
        check("t0_interior", c.t0 > t0_range[0] && c.t0 < t0_range[1], format!("t0 = {:.6}", c.t0)),
        check("midpoint_convex", c.min_margin >= 0.0, format!("min margin {:.3e}", c.min_margin)),
    ];
    Ok((json!({ "curve": c, "p0": p0, "p1": p1 }), asserts))
}

fn run_compare(model: &FlowModel, n_max: u32, cases: &[CompareCase], ctx: &mut Ctx) -> Result<(Value, Vec<Assertion>)> {
    let mut rows = Vec::new();
    let mut asserts = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let y = match &case.against {
            Against::Itself => model.clone(),
            Against::TimeReversed => model.time_reversed(),
            Against::Model(spec) => spec.build()?,
        };
        let c = rigidity_compare::match_orbits(model, &y, case.method, n_max)?;
        let tol = case.tol.unwrap_or(case.method.default_tol());
        let r = rigidity_compare::compare_eigendata(&c, tol);
        let tag = format!("case{i}");
        ctx.emit(&format!("{tag}_pairs.csv"), |p| rigidity_compare::write_pairs_csv(p, &c, &r))?;
        if let Some(a) = case.expect_aggregate {
            asserts.push(check(&format!("{tag}_aggregate"), r.aggregate == a, format!("{:?}, expected {a:?}", r.aggregate)));
            if let Some(d) = case.expect_max_deviation {
                let dev = match a {
                    Aggregate::EigendataSwap => r.max_swap_deviation,
                    _ => r.max_match_deviation,
                };
                asserts.push(check(&format!("{tag}_deviation"), dev <= d, format!("deviation {dev:e}, bound {d:e}")));
            }
        }
        if let Some(j) = case.expect_jacobian_match {
            asserts.push(check(
                &format!("{tag}_jacobian_match"),
                r.jacobian_match.passed == j,
                format!("passed = {}, first failure {:?}", r.jacobian_match.passed, r.jacobian_match.first_failure),
            ));
        }
        if let Some(n) = case.expect_witness_period {
            let w = r.jacobian_match.first_failure.as_deref().and_then(|id| c.pairs.iter().find(|p| p.id_x == id));
            let ok = w.is_some_and(|p| p.n == n && p.log_jac_x() > 0);
            let d = w.map_or("no witness".into(), |p| {
                format!("witness {} (period {}, log Jac {:.6e})", p.id_x, p.n, p.log_jac_x().to_f64())
            });
            asserts.push(check(&format!("{tag}_witness"), ok, d));
        }
        rows.push(json!({ "against": case.against, "method": case.method, "pairs": c.pairs.len(), "report": r }));
    }
    Ok((json!({ "n_max": n_max, "cases": rows }), asserts))
}

fn run_perturb(
    model: &FlowModel,
    c0s: &[f64],
    n_max: u32,
    period_tol: f64,
    lambda_tol: f64,
    ctx: &mut Ctx,
) -> Result<(Value, Vec<Assertion>)> {
    let r = perturbation_lab::perturbation_experiment(model, c0s, n_max)?;
    ctx.emit("perturbation.json", |p| r.write_json(p))?;
    ctx.emit("perturbation.csv", |p| r.write_csv(p))?;
    let increased = r.anchor.iter().all(|a| a.c0 <= 0.0 || a.mu > r.mu_unperturbed);
    let asserts = vec![
        check("periods", r.max_period_deviation <= period_tol, format!("max deviation {:.3e}, tol {period_tol:e}", r.max_period_deviation)),
        check(
            "unstable_multipliers",
            r.max_lambda_deviation <= lambda_tol,
            format!("max deviation {:.3e}, tol {lambda_tol:e}", r.max_lambda_deviation),
        ),
        check(
            "stable_multiplier_increased",
            increased,
            format!("mu = {:.9} -> {:?}", r.mu_unperturbed, r.anchor.iter().map(|a| a.mu).collect::<Vec<_>>()),
        ),
        check("increase_monotone", r.stable_increase_monotone, format!("c0 = {c0s:?}")),
    ];
    Ok((serde_json::to_value(&r)?, asserts))
}

fn flow(base: BaseMap, roof: Roof, bits: u32) -> ModelSpec {
    ModelSpec {
        flow: FlowModel { base, roof, precision_bits: bits, reversed: false, mild_rho: suspension_flow::DEFAULT_MILD_RHO },
        timechange: None,
    }
}

fn dissipative(roof: Roof, bits: u32) -> ModelSpec {
    let base = BaseMap { linear: CAT, terms: vec![TrigTerm::sin([1, 0], [1.0, 0.0])], epsilon: 0.01 };
    flow(base, roof, bits)
}

fn cat(roof: Roof, bits: u32) -> ModelSpec {
    flow(BaseMap { linear: CAT, terms: vec![], epsilon: 0.0 }, roof, bits)
}

/// Branches used by the sign cross-check, one per distinct homoclinic orbit.
pub const SIGN_CLASSES: [[i64; 2]; 4] = [[1, 0], [0, 1], [-1, 0], [0, -1]];
/// Amplitude of the roof time change in the amended presets.
pub const AMEND_C0: f64 = 0.02;

pub const PRESETS: [&str; 12] = [
    "acc-shadow-dissipative",
    "acc-zeta-sign",
    "acc-volume-preserving",
    "acc-zero-case",
    "acc-pressure-roots",
    "acc-full-proportion",
    "acc-mild-proportion",
    "acc-perturb-stable",
    "acc-swap-reversal",
    "acc-orbit-counts",
    "amend-shadow-bump",
    "amend-zeta-bump",
];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let shadow_fit = |model: ModelSpec| Experiment::Fit {
        class: [1, 1],
        n1: 10,
        n2: 40,
        fallback_roof: None,
        expect: FitExpect {
            model_kind: Some(ModelKind::PureExponential),
            rate_tol: Some(0.01),
            ratio_tol: Some(0.05),
            ratio_range: Some([25, 40]),
            rms_gain: None,
        },
    }
    .with(model);
    let zeta_sign = |model: ModelSpec| {
        Experiment::Zeta {
            classes: SIGN_CLASSES.to_vec(),
            n1: 10,
            n2: 40,
            scan_eta_grid: None,
            expect: ZetaExpect { sign_agreement_min: Some(3), tail_log2_max: Some(-200.0), all_zero: false },
        }
        .with(model)
    };
    let timechange = |mut m: ModelSpec, classes: Vec<[i64; 2]>| {
        m.timechange = Some(TimechangeSpec { c0: AMEND_C0, classes });
        m
    };
    let (model, experiment) = match name {
        "acc-shadow-dissipative" => shadow_fit(dissipative(Roof::constant(1.0), 256)),
        "amend-shadow-bump" => shadow_fit(timechange(dissipative(Roof::constant(1.0), 256), vec![[1, 1]])),
        "acc-zeta-sign" => zeta_sign(dissipative(Roof::constant(1.0), 256)),
        "amend-zeta-bump" => zeta_sign(timechange(dissipative(Roof::constant(1.0), 256), SIGN_CLASSES.to_vec())),
        "acc-volume-preserving" => (
            cat(Roof::cos_x1(1.0, 0.25), 256),
            Experiment::Fit {
                class: [1, 1],
                n1: 10,
                n2: 40,
                fallback_roof: Some(Roof::cos_x1(1.0, 0.3)),
                expect: FitExpect {
                    model_kind: Some(ModelKind::NTimesExponential),
                    rms_gain: Some(period_asymptotics::LOG_N_RMS_GAIN),
                    ..Default::default()
                },
            },
        ),
        "acc-zero-case" => (
            dissipative(Roof::constant(1.0), 192),
            Experiment::Zeta {
                classes: vec![[1, 1], [1, 0], [0, 1]],
                n1: 10,
                n2: 30,
                scan_eta_grid: Some((0..=16).map(|i| -0.8 + 0.1 * i as f64).collect()),
                expect: ZetaExpect { all_zero: true, ..Default::default() },
            },
        ),
        "acc-pressure-roots" => (
            dissipative(Roof::constant(1.0), 256),
            Experiment::Curve {
                n_max: 12,
                delta: default_delta(),
                grid: None,
                root_tol: 0.05,
                t0_range: [0.05, 0.95],
            },
        ),
        "acc-full-proportion" => (
            dissipative(Roof::constant(1.0), 256),
            Experiment::Proportions {
                n_max: 12,
                delta: default_delta(),
                windows: 3,
                checks: vec![
                    ProportionCheck { potential: PotentialSpec::PsiU, class: ClassSpec::Contracting, min_final: 0.9, nondecreasing: true },
                    ProportionCheck { potential: PotentialSpec::PsiS, class: ClassSpec::Expanding, min_final: 0.9, nondecreasing: true },
                ],
            },
        ),
        "acc-mild-proportion" => (
            dissipative(Roof::constant(1.0), 256),
            Experiment::Proportions {
                n_max: 12,
                delta: default_delta(),
                windows: 3,
                checks: vec![ProportionCheck {
                    potential: PotentialSpec::FamilyT0,
                    class: ClassSpec::Mild(1.25),
                    min_final: 0.9,
                    nondecreasing: false,
                }],
            },
        ),
        "acc-perturb-stable" => (
            cat(Roof::constant(1.0), 128),
            Experiment::Perturb { c0s: vec![0.01, 0.02, 0.05], n_max: 6, period_tol: 1e-8, lambda_tol: 1e-6 },
        ),
        "acc-swap-reversal" => (
            dissipative(Roof::cos_x1(1.0, 0.25), 192),
            Experiment::Compare {
                n_max: 5,
                cases: vec![
                    CompareCase {
                        against: Against::Itself,
                        method: PairingMethod::SameBase,
                        tol: None,
                        expect_aggregate: Some(Aggregate::EigendataMatch),
                        expect_max_deviation: Some(0.0),
                        expect_jacobian_match: Some(true),
                        expect_witness_period: None,
                    },
                    CompareCase {
                        against: Against::TimeReversed,
                        method: PairingMethod::TimeReversal,
                        tol: None,
                        expect_aggregate: Some(Aggregate::EigendataSwap),
                        expect_max_deviation: Some(0.0),
                        expect_jacobian_match: Some(false),
                        expect_witness_period: Some(1),
                    },
                ],
            },
        ),
        "acc-orbit-counts" => (cat(Roof::constant(1.0), 128), Experiment::Orbits { n_max: 12 }),
        other => return Err(LabError::UnknownPreset(other.to_string())),
    };
    let c = ExperimentConfig { name: name.to_string(), model, experiment };
    c.validate()?;
    Ok(c)
}

trait With {
    fn with(self, m: ModelSpec) -> (ModelSpec, Experiment);
}

impl With for Experiment {
    fn with(self, m: ModelSpec) -> (ModelSpec, Experiment) {
        (m, self)
    }
}

/// Kind-level sanity for a path given on the command line.
pub fn load_for_kind(kind: &str, path: &Path) -> Result<ExperimentConfig> {
    let c = ExperimentConfig::load(path)?;
    if c.experiment.kind() != kind {
        return Err(LabError::Invalid(format!(
            "config {} describes a {} experiment, not {kind}",
            c.name,
            c.experiment.kind()
        )));
    }
    Ok(c)
}

/// Catalog entry used by `lab presets`.
pub fn preset_summary() -> Vec<(String, String)> {
    PRESETS.iter().map(|n| (n.to_string(), preset(n).map(|c| c.experiment.kind().to_string()).unwrap_or_default())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for n in PRESETS {
            let c = preset(n).unwrap();
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c, "{n}");
            assert!(KINDS.contains(&c.experiment.kind()));
        }
        assert!(matches!(preset("acc-nope"), Err(LabError::UnknownPreset(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let c = preset("acc-orbit-counts").unwrap();
        let mut v: Value = serde_json::from_str(&c.to_json()).unwrap();
        v["experiment"]["bogus"] = json!(1);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v: Value = serde_json::from_str(&c.to_json()).unwrap();
        v["extra"] = json!(true);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v: Value = serde_json::from_str(&c.to_json()).unwrap();
        v["model"]["flow"]["roof"]["c1"] = json!(0.5);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v: Value = serde_json::from_str(&c.to_json()).unwrap();
        v["experiment"]["n_max"] = json!(0);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn shadow_on_constant_roof_is_zero_and_deterministic() {
        let c = ExperimentConfig {
            name: "shadow-roof1".into(),
            model: dissipative(Roof::constant(1.0), 192),
            experiment: Experiment::Shadow { class: [1, 1], n1: 8, n2: 16, expect_zero: true },
        };
        let dir = std::env::temp_dir().join(format!("lab-shadow-{}", std::process::id()));
        let a = run(&c, Some(&dir)).unwrap();
        assert!(a.report.passed);
        let first = std::fs::read(dir.join("report.json")).unwrap();
        let b = run(&c, Some(&dir)).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert_eq!(first, std::fs::read(dir.join("report.json")).unwrap());
        assert!(dir.join("shadow.csv").exists() && dir.join("timing.json").exists());
        assert!(!dir.join("report.json.tmp").exists());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn orbit_counts_small() {
        let c = ExperimentConfig {
            name: "counts".into(),
            model: cat(Roof::constant(1.0), 128),
            experiment: Experiment::Orbits { n_max: 6 },
        };
        let r = run(&c, None).unwrap().report;
        assert!(r.passed);
        let pts: Vec<i64> = r.result["counts"].as_array().unwrap().iter().map(|x| x["points"].as_i64().unwrap()).collect();
        assert_eq!(pts, vec![1, 5, 16, 45, 121, 320]);
    }
}
