//! Two perturbations of a suspension flow.
//!
//! `perturb_along_stable` adds `rho S` to the generator, with `S` the strong
//! stable field and `rho` supported on a cylinder around a fixed-point anchor
//! orbit. The result is an ODE flow, integrated with the adaptive DP45 pair
//! from [`crate::ode`]; periodic orbits are continued by Newton on the
//! section `s = 0` with monodromy from the variational equations.
//!
//! `roof_timechange_perturbation` instead adds odd bumps to the roof at
//! homoclinic points of the anchor, which leaves the base map alone and makes
//! the obstruction functional nonzero.

use crate::error::{LabError, Result};
use crate::homoclinic_shadowing::{self, HomoclinicDatum};
use crate::hp::{self, V2};
use crate::ode::{self, Dp45, Dual3, Stop};
use crate::rigidity_compare::{OrbitCorrespondence, PairedOrbit, PairingMethod};
use crate::suspension_flow::{self, Branch, Bump, FlowModel, FlowPeriodicOrbit, RoofTerm, SECTION_RADIUS};
use crate::templates_obstruction;
use crate::torus_maps::LinearEigen;
use rayon::prelude::*;
use rug::Float;
use serde::Serialize;
use std::f64::consts::{PI, TAU};
use std::path::Path;

/// Radius of the cutoff cylinder, in stable/unstable displacement units.
pub const SUPPORT_RADIUS: f64 = 0.05;
/// Radius of each roof bump of the time change.
pub const TIMECHANGE_RADIUS: f64 = 0.05;
/// Sup-norm of the Newton residual on the section.
pub const NEWTON_TOL: f64 = 1e-12;
const NEWTON_ITERS: usize = 40;
/// `c0 T Lip(profile)` may use this share of the smaller hyperbolicity
/// exponent: the stable multiplier then stays below `|mu|^{1/4}` and the cone
/// pair of the linear part survives along the cylinder.
pub const BUDGET_FRACTION: f64 = 0.75;

type M2f = [[f64; 2]; 2];

fn m2_inv(m: &M2f) -> M2f {
    let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

fn m2_vec(m: &M2f, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn wrap(v: f64) -> f64 {
    v - v.round()
}

fn reduce(v: f64) -> f64 {
    v - v.floor()
}

/// `(d/dx r) . v` for a trigonometric roof.
fn roof_slope(terms: &[RoofTerm], y: [f64; 2], v: [f64; 2]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let (k0, k1) = (t.k[0] as f64, t.k[1] as f64);
            let ph = TAU * (k0 * y[0] + k1 * y[1]);
            TAU * (k0 * v[0] + k1 * v[1]) * (t.sin * ph.cos() - t.cos * ph.sin())
        })
        .sum()
}

/// Strong stable field of a suspension over a linear base,
/// `S(x, s) ∝ (e^s, sigma(x))` with
/// `sigma(x) = sum_i mu^i (dr . e^s)(A^i x)`.
#[derive(Clone, Debug)]
pub struct StableField {
    a: M2f,
    pub mu: f64,
    pub e_s: [f64; 2],
    terms: Vec<RoofTerm>,
    pub depth: usize,
    /// Bound on the dropped tail of the series.
    pub tail: f64,
}

pub fn stable_vector_field(model: &FlowModel) -> Result<StableField> {
    if !model.base.is_linear() {
        return Err(LabError::Invalid("the strong stable field is built for linear bases".into()));
    }
    if !model.roof.bumps.is_empty() || model.roof.log_jacobian.is_some() {
        return Err(LabError::Invalid("the strong stable field needs a trigonometric roof".into()));
    }
    let e = LinearEigen::new(&model.base.linear, 128);
    let mu = e.mu.to_f64();
    let es = hp::to_f64_v(&e.e_s);
    let len = (es[0] * es[0] + es[1] * es[1]).sqrt();
    let e_s = [es[0] / len, es[1] / len];
    let terms: Vec<RoofTerm> = model.roof.terms.iter().filter(|t| t.cos != 0.0 || t.sin != 0.0).cloned().collect();
    let sup: f64 = terms
        .iter()
        .map(|t| TAU * (t.k[0] as f64 * e_s[0] + t.k[1] as f64 * e_s[1]).abs() * (t.cos.abs() + t.sin.abs()))
        .sum();
    let (depth, tail) = if sup == 0.0 {
        (0, 0.0)
    } else {
        let d = ((1e-17 / sup).ln() / mu.abs().ln()).ceil().max(1.0) as usize;
        if d > 10_000 {
            return Err(LabError::TailFailure(format!("strong stable series needs {d} terms")));
        }
        (d, sup * mu.abs().powi(d as i32) / (1.0 - mu.abs()))
    };
    let a = model.base.linear.map(|r| r.map(|v| v as f64));
    Ok(StableField { a, mu, e_s, terms, depth, tail })
}

impl StableField {
    pub fn sigma(&self, x: [f64; 2]) -> f64 {
        let mut y = [reduce(x[0]), reduce(x[1])];
        let mut w = 1.0;
        let mut acc = 0.0;
        for _ in 0..self.depth {
            acc += w * roof_slope(&self.terms, y, self.e_s);
            let z = m2_vec(&self.a, y);
            y = [reduce(z[0]), reduce(z[1])];
            w *= self.mu;
        }
        acc
    }

    /// Unit vector `(e^s, sigma) / |.|` in `(x1, x2, s)` coordinates.
    pub fn vector(&self, x: [f64; 2]) -> [f64; 3] {
        let s = self.sigma(x);
        let n = (1.0 + s * s).sqrt();
        [self.e_s[0] / n, self.e_s[1] / n, s / n]
    }

    /// Defect of `S` under the roof identification: the glued image of
    /// `(e^s, sigma(x))` must be parallel to `(e^s, sigma(Ax))`.
    pub fn invariance_defect(&self, x: [f64; 2]) -> f64 {
        let pushed = (self.sigma(x) - roof_slope(&self.terms, x, self.e_s)) / self.mu;
        (pushed - self.sigma(m2_vec(&self.a, x))).abs()
    }
}

fn cutoff(u: Dual3) -> Dual3 {
    if u.v <= 0.5 {
        Dual3::cst(1.0)
    } else if u.v >= 1.0 {
        Dual3::cst(0.0)
    } else {
        ((u * 2.0 - 1.0).scale(PI).cos() + 1.0) * 0.5
    }
}

/// `X + rho S` near a fixed-point anchor of a constant-roof suspension over a
/// linear base.
#[derive(Clone, Debug)]
pub struct PerturbedFlow {
    pub model: FlowModel,
    pub anchor_id: String,
    pub c0: f64,
    pub radius: f64,
    /// The constant roof, which is also the anchor period.
    pub period: f64,
    pub integrator: Dp45,
    /// Lipschitz constant of the cutoff profile and the resulting cone budget.
    pub lip: f64,
    pub budget: f64,
    pub budget_limit: f64,
    pub field: StableField,
    p: [f64; 2],
    a: M2f,
    a_inv: M2f,
    to_eigen: M2f,
    log_mu: f64,
    log_lambda: f64,
}

pub fn perturb_along_stable(model: &FlowModel, anchor: &FlowPeriodicOrbit, c0: f64) -> Result<PerturbedFlow> {
    if model.reversed || !model.base.is_linear() || !model.roof.is_constant() {
        return Err(LabError::Invalid(
            "perturbation along the stable field needs a forward model with linear base and constant roof".into(),
        ));
    }
    if anchor.n() != 1 {
        return Err(LabError::Invalid(format!("anchor {} is not a fixed point", anchor.id)));
    }
    let field = stable_vector_field(model)?;
    let e = LinearEigen::new(&model.base.linear, 128);
    let unit = |v: [f64; 2]| {
        let n = v[0].hypot(v[1]);
        [v[0] / n, v[1] / n]
    };
    let (eu, es) = (unit(hp::to_f64_v(&e.e_u)), unit(hp::to_f64_v(&e.e_s)));
    let to_eigen = m2_inv(&[[eu[0], es[0]], [eu[1], es[1]]]);
    let a = model.base.linear.map(|r| r.map(|v| v as f64));
    let p = hp::to_f64_v(anchor.base.representative());
    let period = model.roof.c0;
    let mut pf = PerturbedFlow {
        model: model.clone(),
        anchor_id: anchor.id.clone(),
        c0,
        radius: SUPPORT_RADIUS,
        period,
        integrator: Dp45::default(),
        lip: 0.0,
        budget: 0.0,
        budget_limit: 0.0,
        field,
        p,
        a,
        a_inv: m2_inv(&a),
        to_eigen,
        log_mu: e.mu.to_f64().abs().ln(),
        log_lambda: e.lambda.to_f64().abs().ln(),
    };
    pf.lip = pf.profile_lipschitz();
    pf.budget = c0.abs() * period * pf.lip;
    pf.budget_limit = BUDGET_FRACTION * pf.log_mu.abs().min(pf.log_lambda);
    if pf.budget > pf.budget_limit {
        return Err(LabError::Budget(format!(
            "c0 T Lip = {:.4} exceeds {:.4}; lower c0",
            pf.budget, pf.budget_limit
        )));
    }
    Ok(pf)
}

impl PerturbedFlow {
    /// `d_s chi(|mu|^{s/T} |d_s| / R) chi(|lambda|^{s/T} |d_u| / R)`.
    fn profile(&self, d_s: Dual3, d_u: Dual3, s: Dual3) -> Dual3 {
        let fs = s.scale(self.log_mu / self.period).exp();
        let fu = s.scale(self.log_lambda / self.period).exp();
        let r = 1.0 / self.radius;
        d_s * cutoff((fs * d_s.abs()).scale(r)) * cutoff((fu * d_u.abs()).scale(r))
    }

    fn profile_lipschitz(&self) -> f64 {
        let mut lip = 0.0f64;
        for i in 0..=8 {
            let s = self.period * i as f64 / 8.0;
            let fs = (s * self.log_mu / self.period).exp();
            let fu = (s * self.log_lambda / self.period).exp();
            for a in -60..=60 {
                for b in -60..=60 {
                    let ds = Dual3::var(a as f64 / 60.0 * self.radius / fs, 0);
                    let du = Dual3::var(b as f64 / 60.0 * self.radius / fu, 1);
                    let g = self.profile(ds, du, Dual3::cst(s));
                    lip = lip.max(g.d[0].hypot(g.d[1]));
                }
            }
        }
        lip
    }

    fn eigen_coords(&self, x0: Dual3, x1: Dual3) -> (Dual3, Dual3) {
        let y0 = x0 - (self.p[0] + (x0.v - self.p[0]).round());
        let y1 = x1 - (self.p[1] + (x1.v - self.p[1]).round());
        let m = &self.to_eigen;
        (y0.scale(m[0][0]) + y1.scale(m[0][1]), y0.scale(m[1][0]) + y1.scale(m[1][1]))
    }

    fn field_dual(&self, z: [Dual3; 3]) -> [Dual3; 3] {
        let (d_u, d_s) = self.eigen_coords(z[0], z[1]);
        let amp = self.profile(d_s, d_u, z[2]).scale(self.c0);
        let e = self.field.e_s;
        // constant roof: sigma = 0, so S has no flow component
        [amp.scale(e[0]), amp.scale(e[1]), Dual3::cst(1.0)]
    }

    /// `rho S` plus the suspension generator at `(x1, x2, s)`.
    pub fn vector_field(&self, z: &[f64; 3]) -> [f64; 3] {
        self.field_dual([Dual3::cst(z[0]), Dual3::cst(z[1]), Dual3::cst(z[2])]).map(|d| d.v)
    }

    /// `rho` in units of the stable displacement.
    pub fn rho(&self, z: &[f64; 3]) -> f64 {
        let (d_u, d_s) = self.eigen_coords(Dual3::cst(z[0]), Dual3::cst(z[1]));
        let fs = (z[2] * self.log_mu / self.period).exp();
        self.c0 * fs * self.profile(d_s, d_u, Dual3::cst(z[2])).v
    }

    fn jacobian(&self, z: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let v = self.field_dual([Dual3::var(z[0], 0), Dual3::var(z[1], 1), Dual3::var(z[2], 2)]);
        (v.map(|d| d.v), v.map(|d| d.d))
    }

    fn glue_forward(&self, z: &mut [f64; 3]) {
        let x = m2_vec(&self.a, [z[0], z[1]]);
        *z = [reduce(x[0]), reduce(x[1]), z[2] - self.period];
    }

    fn glue_backward(&self, z: &mut [f64; 3]) {
        let x = m2_vec(&self.a_inv, [z[0], z[1]]);
        *z = [reduce(x[0]), reduce(x[1]), z[2] + self.period];
    }

    /// Whether the flow line over base point `x` meets the support.
    pub fn touches_support(&self, x: [f64; 2]) -> bool {
        (0..=32).any(|i| {
            let s = self.period * i as f64 / 32.0;
            let (d_u, d_s) = self.eigen_coords(Dual3::cst(x[0]), Dual3::cst(x[1]));
            let fs = (s * self.log_mu / self.period).exp();
            let fu = (s * self.log_lambda / self.period).exp();
            fs * d_s.v.abs() < self.radius && fu * d_u.v.abs() < self.radius
        })
    }
}

/// Flow map for signed time `t` on `(x1, x2, s)` with `s` in `[0, T)`.
pub fn integrate_flow(pf: &PerturbedFlow, z0: [f64; 3], t: f64) -> Result<[f64; 3]> {
    let f = |z: &[f64; 3]| pf.vector_field(z);
    let r = if t >= 0.0 {
        ode::run(&f, z0, Stop::Time(t), &pf.integrator, &|z| z[2] - pf.period, &mut |z| pf.glue_forward(z))?
    } else {
        ode::run(&f, z0, Stop::Time(t), &pf.integrator, &|z| -z[2], &mut |z| pf.glue_backward(z))?
    };
    let z = r.y;
    Ok([reduce(z[0]), reduce(z[1]), z[2]])
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuedOrbit {
    pub id: String,
    pub n: u32,
    pub x0: [f64; 2],
    pub period: f64,
    pub mu: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl PerturbedFlow {
    /// `n` returns to `s = 0` from `(x0, 0)`: endpoint, section derivative
    /// and elapsed time.
    pub fn return_map(&self, x0: [f64; 2], n: usize) -> Result<([f64; 2], M2f, f64)> {
        let f = |y: &[f64; 12]| {
            let (v, j) = self.jacobian(&[y[0], y[1], y[2]]);
            let mut out = [0.0; 12];
            out[..3].copy_from_slice(&v);
            for r in 0..3 {
                for c in 0..3 {
                    out[3 + 3 * r + c] = (0..3).map(|k| j[r][k] * y[3 + 3 * k + c]).sum();
                }
            }
            out
        };
        let mut y0 = [0.0; 12];
        y0[0] = x0[0];
        y0[1] = x0[1];
        for i in 0..3 {
            y0[3 + 4 * i] = 1.0;
        }
        let mut on_event = |y: &mut [f64; 12]| {
            let z = [y[0], y[1], y[2]];
            let fm = self.vector_field(&z);
            // project onto the hitting surface (grad g = e_s-coordinate), then
            // apply the identification (x, s) -> (A x, s - T)
            let phi: [[f64; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| y[3 + 3 * r + c]));
            let proj: [[f64; 3]; 3] =
                std::array::from_fn(|r| std::array::from_fn(|c| phi[r][c] - fm[r] / fm[2] * phi[2][c]));
            for c in 0..3 {
                let top = m2_vec(&self.a, [proj[0][c], proj[1][c]]);
                y[3 + c] = top[0];
                y[6 + c] = top[1];
                y[9 + c] = proj[2][c];
            }
            let mut zz = z;
            self.glue_forward(&mut zz);
            y[..3].copy_from_slice(&zz);
        };
        let r = ode::run(&f, y0, Stop::Events(n), &self.integrator, &|y| y[2] - self.period, &mut on_event)?;
        let dp = [[r.y[3], r.y[4]], [r.y[6], r.y[7]]];
        Ok(([r.y[0], r.y[1]], dp, r.t))
    }
}

pub fn continue_periodic_orbit(pf: &PerturbedFlow, seed: &FlowPeriodicOrbit) -> Result<ContinuedOrbit> {
    let n = seed.n() as usize;
    let s = hp::to_f64_v(seed.base.representative());
    let mut x0 = [reduce(s[0]), reduce(s[1])];
    let mut last = f64::INFINITY;
    for it in 0..NEWTON_ITERS {
        let (xn, dp, t) = pf.return_map(x0, n)?;
        let g = [wrap(xn[0] - x0[0]), wrap(xn[1] - x0[1])];
        let res = g[0].abs().max(g[1].abs());
        last = res;
        let m = [[dp[0][0] - 1.0, dp[0][1]], [dp[1][0], dp[1][1] - 1.0]];
        let step = m2_vec(&m2_inv(&m), g);
        if res < NEWTON_TOL || step[0].abs().max(step[1].abs()) < 1e-15 {
            let tr = dp[0][0] + dp[1][1];
            let det = dp[0][0] * dp[1][1] - dp[0][1] * dp[1][0];
            let disc = tr * tr - 4.0 * det;
            if disc < 0.0 {
                return Err(LabError::BadSpectrum(seed.id.clone()));
            }
            let big = (tr + tr.signum() * disc.sqrt()) / 2.0;
            let small = det / big;
            return Ok(ContinuedOrbit {
                id: seed.id.clone(),
                n: seed.n(),
                x0,
                period: t,
                mu: small,
                lambda: big,
                iterations: it,
                residual: res,
            });
        }
        x0 = [reduce(x0[0] - step[0]), reduce(x0[1] - step[1])];
    }
    Err(LabError::NewtonFailure { seed: seed.id.clone(), iters: NEWTON_ITERS, log2_residual: last.log2() })
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitChange {
    pub id: String,
    pub n: u32,
    pub c0: f64,
    pub touches_support: bool,
    pub period_before: f64,
    pub period_after: f64,
    pub period_deviation: f64,
    pub mu_before: f64,
    pub mu_after: f64,
    pub lambda_before: f64,
    pub lambda_after: f64,
    pub lambda_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnchorChange {
    pub c0: f64,
    pub mu: f64,
    /// `mu exp(c0 T)` from the linearization at the anchor.
    pub predicted: f64,
    /// The factor bound `mu (1 + c0 T)`.
    pub lower_bound: f64,
    pub log_jacobian: f64,
    pub budget: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationReport {
    pub anchor_id: String,
    pub anchor_period: f64,
    pub mu_unperturbed: f64,
    pub integrator: Dp45,
    pub support_radius: f64,
    pub anchor: Vec<AnchorChange>,
    pub max_period_deviation: f64,
    pub max_lambda_deviation: f64,
    pub orbits_touching_support: usize,
    /// Anchor stable multiplier strictly increasing along increasing `c0`.
    pub stable_increase_monotone: bool,
    #[serde(skip)]
    pub rows: Vec<OrbitChange>,
}

/// Continues every base orbit up to `n_max` for each `c0`.
pub fn perturbation_experiment(model: &FlowModel, c0s: &[f64], n_max: u32) -> Result<PerturbationReport> {
    let orbits = suspension_flow::flow_orbits(model, n_max)?;
    let anchor = orbits
        .iter()
        .find(|o| o.n() == 1)
        .cloned()
        .ok_or_else(|| LabError::Invalid("no fixed point to anchor at".into()))?;
    let mu0 = anchor.multipliers.mu.to_f64();
    let mut rows = Vec::new();
    let mut anchor_rows = Vec::new();
    let mut integrator = Dp45::default();
    for &c0 in c0s {
        let pf = perturb_along_stable(model, &anchor, c0)?;
        integrator = pf.integrator;
        let cont: Vec<ContinuedOrbit> = orbits.par_iter().map(|o| continue_periodic_orbit(&pf, o)).collect::<Result<_>>()?;
        for (o, c) in orbits.iter().zip(&cont) {
            let lb = o.multipliers.lambda.to_f64();
            let tb = o.period.to_f64();
            let touches = o.base.points.iter().any(|x| pf.touches_support(hp::to_f64_v(x)));
            rows.push(OrbitChange {
                id: o.id.clone(),
                n: o.n(),
                c0,
                touches_support: touches,
                period_before: tb,
                period_after: c.period,
                period_deviation: (c.period - tb).abs(),
                mu_before: o.multipliers.mu.to_f64(),
                mu_after: c.mu,
                lambda_before: lb,
                lambda_after: c.lambda,
                lambda_deviation: (c.lambda - lb).abs(),
            });
            if o.id == anchor.id {
                let t = pf.period;
                anchor_rows.push(AnchorChange {
                    c0,
                    mu: c.mu,
                    predicted: mu0 * (c0 * t).exp(),
                    lower_bound: mu0 * (1.0 + c0 * t),
                    log_jacobian: (c.mu * c.lambda).abs().ln(),
                    budget: pf.budget,
                });
            }
        }
    }
    let mut sorted = anchor_rows.clone();
    sorted.sort_by(|a, b| a.c0.total_cmp(&b.c0));
    let monotone = sorted.windows(2).all(|w| w[1].mu > w[0].mu) && sorted.iter().all(|a| a.c0 <= 0.0 || a.mu > mu0);
    let last_c0 = c0s.last().copied().unwrap_or(0.0);
    Ok(PerturbationReport {
        anchor_id: anchor.id.clone(),
        anchor_period: anchor.period.to_f64(),
        mu_unperturbed: mu0,
        integrator,
        support_radius: SUPPORT_RADIUS,
        anchor: anchor_rows,
        max_period_deviation: rows.iter().map(|r| r.period_deviation).fold(0.0, f64::max),
        max_lambda_deviation: rows.iter().map(|r| r.lambda_deviation).fold(0.0, f64::max),
        orbits_touching_support: rows.iter().filter(|r| r.c0 == last_c0 && r.touches_support).count(),
        stable_increase_monotone: monotone,
        rows,
    })
}

impl PerturbationReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Before/after orbit table.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pairs unperturbed orbits with their continuations for
/// [`crate::rigidity_compare`]. `model_y` is the unperturbed model, since the
/// perturbed flow is not a suspension.
pub fn continuation_correspondence(
    model: &FlowModel,
    orbits: &[FlowPeriodicOrbit],
    continued: &[ContinuedOrbit],
) -> Result<OrbitCorrespondence> {
    if orbits.len() != continued.len() {
        return Err(LabError::Invalid("orbit lists differ in length".into()));
    }
    let f = |x: f64| Float::with_val(53, x);
    let pairs = orbits
        .iter()
        .zip(continued)
        .map(|(o, c)| {
            if o.id != c.id {
                return Err(LabError::Unpairable(o.id.clone()));
            }
            Ok(PairedOrbit {
                id_x: o.id.clone(),
                id_y: c.id.clone(),
                n: o.n(),
                t_x: o.period.clone(),
                t_y: f(c.period),
                log_mu_x: o.multipliers.log_mu.clone(),
                log_mu_y: f(c.mu.abs().ln()),
                log_lambda_x: o.multipliers.log_lambda.clone(),
                log_lambda_y: f(c.lambda.abs().ln()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_max = orbits.iter().map(|o| o.n()).max().unwrap_or(0);
    Ok(OrbitCorrespondence {
        model_x: model.clone(),
        model_y: model.clone(),
        method: PairingMethod::Continuation,
        n_max,
        pairs,
    })
}

/// Placement of one time-change bump.
#[derive(Clone, Debug, Serialize)]
pub struct BumpPlacement {
    pub lattice_class: [i64; 2],
    /// Index along the homoclinic orbit, counted in base steps from `q`.
    pub step: usize,
    pub center: [f64; 2],
    pub normal: [f64; 2],
    pub anchor_distance: f64,
    pub bump: Bump,
}

fn torus_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    wrap(a[0] - b[0]).hypot(wrap(a[1] - b[1]))
}

/// Points of the homoclinic orbit from `q` through the excursion, with the
/// pushed-forward unstable tangent.
fn homoclinic_points(model: &FlowModel, hom: &HomoclinicDatum) -> Vec<(V2<Float>, V2<Float>)> {
    let a = &hom.local;
    let wp = a.wp;
    let ev = model.base.at(wp);
    let mut y = hp::v_reprec(&hom.q, wp);
    let mut t = a.phi_d(Branch::Unstable, &hp::reprec(&hom.eta_inf, wp));
    let mut out = Vec::with_capacity(hom.n_prime as usize + 1);
    for _ in 0..=hom.n_prime {
        out.push((y.clone(), t.clone()));
        let (y1, df) = ev.f_df(&y);
        t = hp::mat_vec(&df, &t);
        y = y1;
    }
    out
}

/// Bumps for `roof_timechange_perturbation`: on each class's homoclinic
/// orbit, the point farthest from the anchor, with the normal orthogonal to
/// `W^u` there so the bump vanishes to first order along the unstable leaf.
pub fn timechange_bumps(
    model: &FlowModel,
    anchor: &FlowPeriodicOrbit,
    c0: f64,
    classes: &[[i64; 2]],
) -> Result<Vec<BumpPlacement>> {
    if model.reversed {
        return Err(LabError::Invalid("place time-change bumps on the forward model".into()));
    }
    if anchor.n() != 1 {
        return Err(LabError::Invalid(format!("anchor {} is not a fixed point", anchor.id)));
    }
    let p = hp::to_f64_v(anchor.base.representative());
    let mut orbits = Vec::new();
    for &m in classes {
        let hom = homoclinic_shadowing::find_homoclinic(model, anchor, m)?;
        orbits.push((m, homoclinic_points(model, &hom)));
    }
    let all: Vec<[f64; 2]> =
        orbits.iter().flat_map(|(_, pts)| pts.iter().map(|(y, _)| hp::to_f64_v(y))).collect();
    let e_s = hp::to_f64_v(&LinearEigen::new(&model.base.linear, 64).e_s);
    let r = TIMECHANGE_RADIUS;
    let mut out: Vec<BumpPlacement> = Vec::new();
    for (m, pts) in &orbits {
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let dist = |i: usize| torus_dist(hp::to_f64_v(&pts[i].0), p);
        order.sort_by(|&a, &b| dist(b).total_cmp(&dist(a)));
        let pick = order.into_iter().find(|&i| {
            let c = hp::to_f64_v(&pts[i].0);
            dist(i) >= SECTION_RADIUS + r
                && all.iter().filter(|y| torus_dist(**y, c) > 1e-9).all(|y| torus_dist(*y, c) >= 2.0 * r)
                && out.iter().all(|b| torus_dist(b.center, c) >= 2.0 * r)
        });
        let i = pick.ok_or_else(|| {
            LabError::Invalid(format!("no isolated point on the homoclinic orbit of class {m:?} for a bump"))
        })?;
        let (y, t) = &pts[i];
        let tf = hp::to_f64_v(t);
        let len = tf[0].hypot(tf[1]);
        let mut normal = [-tf[1] / len, tf[0] / len];
        if normal[0] * e_s[0] + normal[1] * e_s[1] < 0.0 {
            normal = [-normal[0], -normal[1]];
        }
        let wp = y[0].prec();
        let cen: V2<Float> = [
            Float::with_val(wp, &y[0] - y[0].clone().floor()),
            Float::with_val(wp, &y[1] - y[1].clone().floor()),
        ];
        let nv: V2<Float> = [Float::with_val(wp, &t[1]) * -1i32 / len, Float::with_val(wp, &t[0]) / len];
        let sign = if nv[0].to_f64() * normal[0] + nv[1].to_f64() * normal[1] < 0.0 { -1i32 } else { 1 };
        let bump = Bump {
            center: [hp::fmt_float(&cen[0]), hp::fmt_float(&cen[1])],
            normal: [hp::fmt_float(&(nv[0].clone() * sign)), hp::fmt_float(&(nv[1].clone() * sign))],
            amp: c0,
            radius: r,
        };
        out.push(BumpPlacement {
            lattice_class: *m,
            step: i,
            center: hp::to_f64_v(&cen),
            normal,
            anchor_distance: dist(i),
            bump,
        });
    }
    Ok(out)
}

/// The model with one roof bump per homoclinic class.
pub fn roof_timechange_perturbation(
    model: &FlowModel,
    anchor: &FlowPeriodicOrbit,
    c0: f64,
    classes: &[[i64; 2]],
) -> Result<FlowModel> {
    if c0 == 0.0 {
        return Ok(model.clone());
    }
    let mut roof = model.roof.clone();
    roof.bumps.extend(timechange_bumps(model, anchor, c0, classes)?.into_iter().map(|b| b.bump));
    let lo = roof.lower_bound(&model.base);
    if !(lo > 0.0) {
        return Err(LabError::RoofNotPositive(lo));
    }
    Ok(model.with_roof(roof))
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopePoint {
    pub l: u32,
    pub eta: f64,
    /// Template change `T_after - T_before` at `lambda^{-l} eta_inf`.
    pub delta: f64,
    /// `delta_{l+1} / delta_l`.
    pub ratio: Option<f64>,
}

/// Template change along the backward orbit `lambda^{-l} eta_inf` of a
/// homoclinic point; the ratios approach the anchor's stable multiplier.
pub fn slope_sequence(
    before: &FlowModel,
    after: &FlowModel,
    hom: &HomoclinicDatum,
    l_max: u32,
) -> Result<Vec<SlopePoint>> {
    let sb = suspension_flow::section_at(before, &hom.anchor.base)?;
    let sa = suspension_flow::section_at(after, &hom.anchor.base)?;
    let lam = hom.local.lambda.to_f64();
    let eta_inf = hom.eta_inf.to_f64();
    let mut out: Vec<SlopePoint> = Vec::new();
    for l in 1..=l_max {
        let eta = eta_inf * lam.powi(-(l as i32));
        let d = templates_obstruction::stable_template(&sa, eta)?.value
            - templates_obstruction::stable_template(&sb, eta)?.value;
        let delta = d.to_f64();
        if let Some(prev) = out.last_mut() {
            prev.ratio = Some(delta / prev.delta);
        }
        out.push(SlopePoint { l, eta, delta, ratio: None });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suspension_flow::{make_suspension, Roof};
    use crate::torus_maps::{make_linear_map, standard_perturbed};

    const CAT: [[i64; 2]; 2] = [[2, 1], [1, 1]];

    fn cat() -> FlowModel {
        make_suspension(make_linear_map(CAT).unwrap(), Roof::constant(1.0), 128).unwrap()
    }

    #[test]
    fn stable_field_series() {
        let f = stable_vector_field(&cat()).unwrap();
        assert_eq!(f.depth, 0);
        let v = f.vector([0.3, 0.7]);
        assert_eq!(v[2], 0.0);
        let m = cat().with_roof(Roof::cos_x1(1.0, 0.25));
        let f = stable_vector_field(&m).unwrap();
        assert!(f.depth > 10 && f.tail < 1e-15);
        for i in 0..10 {
            let x = [(0.137 * i as f64 + 0.05) % 1.0, (0.291 * i as f64 + 0.11) % 1.0];
            assert!(f.invariance_defect(x) < 1e-12, "{}", f.invariance_defect(x));
        }
    }

    #[test]
    fn unperturbed_closure_and_audits() {
        let m = cat();
        let orbits = suspension_flow::flow_orbits(&m, 3).unwrap();
        let fp = &orbits[0];
        let pf0 = perturb_along_stable(&m, fp, 0.0).unwrap();
        let o = orbits.iter().find(|o| o.n() == 3).unwrap();
        let x = hp::to_f64_v(o.base.representative());
        let z = integrate_flow(&pf0, [x[0], x[1], 0.0], 3.0).unwrap();
        assert!(wrap(z[0] - x[0]).abs() < 1e-10 && wrap(z[1] - x[1]).abs() < 1e-10 && z[2].abs() < 1e-10, "{z:?}");

        let pf = perturb_along_stable(&m, fp, 0.05).unwrap();
        let tol = 2.0 * 1e-10;
        let z0 = [0.02, 0.01, 0.1];
        let a = integrate_flow(&pf, z0, 0.7).unwrap();
        let b = integrate_flow(&pf, a, 0.9).unwrap();
        let c = integrate_flow(&pf, z0, 1.6).unwrap();
        for i in 0..2 {
            assert!(wrap(b[i] - c[i]).abs() < tol, "{b:?} {c:?}");
        }
        let back = integrate_flow(&pf, c, -1.6).unwrap();
        for i in 0..2 {
            assert!(wrap(back[i] - z0[i]).abs() < tol, "{back:?}");
        }
        assert!((back[2] - z0[2]).abs() < tol);
        // rho vanishes on the anchor orbit
        for s in [0.0, 0.3, 0.9] {
            assert_eq!(pf.rho(&[0.0, 0.0, s]), 0.0);
        }
    }

    #[test]
    fn anchor_multiplier_moves() {
        let m = cat();
        let r = perturbation_experiment(&m, &[0.01, 0.02, 0.05], 4).unwrap();
        assert!(r.max_period_deviation < 1e-8, "{}", r.max_period_deviation);
        assert!(r.max_lambda_deviation < 1e-6, "{}", r.max_lambda_deviation);
        assert!(r.stable_increase_monotone);
        for a in &r.anchor {
            assert!((a.mu - a.predicted).abs() < 1e-9, "{a:?}");
            assert!(a.mu > a.lower_bound);
        }
        assert!(r.orbits_touching_support > 0);
        let far: Vec<&OrbitChange> = r.rows.iter().filter(|o| !o.touches_support).collect();
        assert!(!far.is_empty());
        for o in far {
            assert!((o.mu_after - o.mu_before).abs() < 1e-9);
        }
    }

    #[test]
    fn budget_and_base_checks() {
        let m = cat();
        let fp = suspension_flow::fixed_point_orbit(&m).unwrap();
        assert!(matches!(perturb_along_stable(&m, &fp, 5.0), Err(LabError::Budget(_))));
        let p = make_suspension(standard_perturbed(0.01).unwrap(), Roof::constant(1.0), 128).unwrap();
        let fq = suspension_flow::fixed_point_orbit(&p).unwrap();
        assert!(perturb_along_stable(&p, &fq, 0.01).is_err());
    }

    #[test]
    fn perturbed_pair_is_period_matching_only() {
        let m = cat();
        let orbits = suspension_flow::flow_orbits(&m, 3).unwrap();
        let pf = perturb_along_stable(&m, &orbits[0], 0.05).unwrap();
        let cont: Vec<ContinuedOrbit> = orbits.iter().map(|o| continue_periodic_orbit(&pf, o).unwrap()).collect();
        let c = continuation_correspondence(&m, &orbits, &cont).unwrap();
        let r = crate::rigidity_compare::compare_eigendata(&c, crate::rigidity_compare::CONTINUATION_TOL);
        assert!(r.period_match.passed);
        assert_ne!(r.aggregate, crate::rigidity_compare::Aggregate::EigendataMatch);
        assert!(!r.jacobian_match.passed);
    }

    #[test]
    fn timechange_makes_zeta_nonzero() {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::constant(1.0), 192).unwrap();
        let a = suspension_flow::fixed_point_orbit(&m).unwrap();
        assert_eq!(roof_timechange_perturbation(&m, &a, 0.0, &[[1, 1]]).unwrap(), m);
        let m2 = roof_timechange_perturbation(&m, &a, 0.02, &[[1, 1]]).unwrap();
        assert_eq!(m2.roof.bumps.len(), 1);
        let h0 = homoclinic_shadowing::find_homoclinic(&m, &a, [1, 1]).unwrap();
        let z0 = templates_obstruction::zeta_hat(&m, &h0).unwrap();
        let a2 = suspension_flow::fixed_point_orbit(&m2).unwrap();
        let h2 = homoclinic_shadowing::find_homoclinic(&m2, &a2, [1, 1]).unwrap();
        let z2 = templates_obstruction::zeta_hat(&m2, &h2).unwrap();
        let moved = (z2.zeta_hat.clone() - &z0.zeta_hat).abs().to_f64();
        assert!(moved.log2() > z2.tail_bound_log2 + 10f64.log2(), "{moved} vs 2^{}", z2.tail_bound_log2);

        let seq = slope_sequence(&m, &m2, &h2, 8).unwrap();
        let mu = a.multipliers.mu.to_f64();
        for s in seq.iter().filter_map(|s| s.ratio) {
            assert!((s / mu - 1.0).abs() < 0.05, "{s} vs {mu}: {seq:?}");
        }
    }
}
