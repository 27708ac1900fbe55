use lab_core::cli_runner::{self, ExperimentConfig};
use lab_core::lattice::{imat, primitive_cycles};
use lab_core::ode::Dual3;
use lab_core::perturbation_lab::{integrate_flow, perturb_along_stable, PerturbedFlow};
use lab_core::rigidity_compare::{compare_eigendata, match_orbits, Aggregate, PairingMethod, EXACT_TOL};
use lab_core::suspension_flow::{self, make_suspension, FlowModel, Roof};
use lab_core::thermo_orbit_sums::{build_ensemble, lattice_point_count, OrbitEnsemble, Potential};
use lab_core::torus_maps::{self, make_linear_map, standard_perturbed, CAT};
use proptest::prelude::*;
use std::sync::OnceLock;

fn ensemble() -> &'static OrbitEnsemble {
    static E: OnceLock<OrbitEnsemble> = OnceLock::new();
    E.get_or_init(|| {
        let m = make_suspension(standard_perturbed(0.01).unwrap(), Roof::cos_x1(1.0, 0.25), 128).unwrap();
        build_ensemble(&m, 8).unwrap()
    })
}

fn perturbed_cat() -> &'static PerturbedFlow {
    static P: OnceLock<PerturbedFlow> = OnceLock::new();
    P.get_or_init(|| {
        let m = make_suspension(make_linear_map(CAT).unwrap(), Roof::constant(1.0), 128).unwrap();
        let fp = suspension_flow::fixed_point_orbit(&m).unwrap();
        perturb_along_stable(&m, &fp, 0.05).unwrap()
    })
}

fn diss(a: f64) -> FlowModel {
    make_suspension(standard_perturbed(0.01).unwrap(), Roof::cos_x1(1.0, a), 128).unwrap()
}

/// Hyperbolic unimodular matrices with small entries.
fn hyperbolic() -> impl Strategy<Value = [[i64; 2]; 2]> {
    (-3i64..=3, -3i64..=3, -3i64..=3, -3i64..=3)
        .prop_map(|(a, b, c, d)| [[a, b], [c, d]])
        .prop_filter("hyperbolic, |det| = 1", |m| {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            det.abs() == 1 && (m[0][0] + m[1][1]).abs() > 2
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn lattice_enumeration_matches_det_formula(m in hyperbolic(), n in 1u32..=6) {
        let a = imat(&m);
        let points: i128 = (1..=n)
            .filter(|d| n % d == 0)
            .map(|d| d as i128 * primitive_cycles(&a, d).unwrap().1.len() as i128)
            .sum();
        prop_assert_eq!(points, lattice_point_count(&a, n).unwrap());
    }

    #[test]
    fn window_additivity_and_shift(frac in 0.0f64..1.0, delta in 0.3f64..1.5, c in -2.0f64..2.0, t in 0.0f64..1.0) {
        let e = ensemble();
        let top = e.complete_length() - 2.0 * delta - 1e-9;
        let start = 2.0 + frac * (top - 2.0);
        let psi = Potential::FamilyT(t);
        let whole = e.window_sum(&psi, start, 2.0 * delta).unwrap();
        let a = e.window_sum(&psi, start, delta).unwrap();
        let b = e.window_sum(&psi, start + delta, delta).unwrap();
        let sum = a.shift.max(b.shift);
        let parts = a.scaled * (a.shift - sum).exp() + b.scaled * (b.shift - sum).exp();
        prop_assert!((whole.ln() - (sum + parts.ln())).abs() < 1e-12);
        prop_assert_eq!(whole.terms, a.terms + b.terms);

        let shifted = Potential::Shifted(Box::new(psi.clone()), c);
        let d = e.window_sum(&shifted, start, delta).unwrap().ln() - a.ln();
        let (lo, hi) = if c >= 0.0 { (c * start, c * (start + delta)) } else { (c * (start + delta), c * start) };
        prop_assert!(d >= lo - 1e-12 && d <= hi + 1e-12, "{} not in [{}, {}]", d, lo, hi);
    }

    #[test]
    fn family_weights_are_affine(t in -0.5f64..1.5) {
        let e = ensemble();
        let w: Vec<f64> = (0..e.orbits.len())
            .map(|i| t * e.stats[i].log_mu - (1.0 - t) * e.stats[i].log_lambda)
            .collect();
        let start = e.largest_window(1.0);
        let a = e.window_sum(&Potential::FamilyT(t), start, 1.0).unwrap().ln();
        let b = e.window_sum(&Potential::Custom(w), start, 1.0).unwrap().ln();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn dual_numbers_match_finite_differences(x in -2.0f64..2.0, y in -2.0f64..2.0, s in 0.1f64..2.0) {
        let f = |a: Dual3, b: Dual3, c: Dual3| (a * b).sin() + (c * a).exp() / (b * b + 1.5) - (a - c).cos().abs();
        let g = |a: f64, b: f64, c: f64| (a * b).sin() + (c * a).exp() / (b * b + 1.5) - (a - c).cos().abs();
        let v = f(Dual3::var(x, 0), Dual3::var(y, 1), Dual3::var(s, 2));
        let h = 1e-6;
        let fd = [
            (g(x + h, y, s) - g(x - h, y, s)) / (2.0 * h),
            (g(x, y + h, s) - g(x, y - h, s)) / (2.0 * h),
            (g(x, y, s + h) - g(x, y, s - h)) / (2.0 * h),
        ];
        prop_assume!((x - s).cos().abs() > 1e-3);
        for i in 0..3 {
            prop_assert!((v.d[i] - fd[i]).abs() < 1e-6 * (1.0 + fd[i].abs()), "{} vs {}", v.d[i], fd[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn flow_composition_and_reversal(x in 0.0f64..1.0, y in 0.0f64..1.0, s in 0.0f64..1.0, t1 in 0.1f64..1.5, t2 in 0.1f64..1.5) {
        // start near the support so the perturbation is active
        let pf = perturbed_cat();
        let z0 = [(0.02 * x).rem_euclid(1.0), (0.02 * y - 0.01).rem_euclid(1.0), s * 0.999];
        let a = integrate_flow(pf, z0, t1).unwrap();
        let b = integrate_flow(pf, a, t2).unwrap();
        let c = integrate_flow(pf, z0, t1 + t2).unwrap();
        let wrap = |v: f64| v - v.round();
        for i in 0..2 {
            prop_assert!(wrap(b[i] - c[i]).abs() < 1e-9, "{:?} {:?}", b, c);
        }
        let back = integrate_flow(pf, c, -(t1 + t2)).unwrap();
        for i in 0..2 {
            prop_assert!(wrap(back[i] - z0[i]).abs() < 1e-9);
        }
        prop_assert!((back[2] - z0[2]).abs() < 1e-9);
    }

    #[test]
    fn multipliers_ignore_roof_and_rerooting(a in -0.4f64..0.4, k in 0usize..5) {
        let x = diss(0.0);
        let y = diss(a);
        let xs = suspension_flow::flow_orbits(&x, 5).unwrap();
        let ys = suspension_flow::flow_orbits(&y, 5).unwrap();
        for (o, p) in xs.iter().zip(&ys) {
            prop_assert_eq!(&o.multipliers.log_mu, &p.multipliers.log_mu);
            prop_assert_eq!(&o.multipliers.log_lambda, &p.multipliers.log_lambda);
        }
        let o = xs.iter().find(|o| o.n() == 5).unwrap();
        let r = torus_maps::orbit_multipliers(&x.base, &o.base.rerooted(k % 5)).unwrap();
        let dev = rug::Float::with_val(64, &r.log_mu - &o.multipliers.log_mu).abs().to_f64();
        prop_assert!(dev < 1e-30, "{}", dev);
    }

    #[test]
    fn reversal_swaps_and_self_matches(a in -0.4f64..0.4) {
        let x = diss(a);
        let c = match_orbits(&x, &x.time_reversed(), PairingMethod::TimeReversal, 4).unwrap();
        let r = compare_eigendata(&c, EXACT_TOL);
        prop_assert_eq!(r.aggregate, Aggregate::EigendataSwap);
        prop_assert_eq!(r.max_swap_deviation, 0.0);
        prop_assert!(r.period_match.passed);
        let back = match_orbits(&x.time_reversed(), &x, PairingMethod::TimeReversal, 4).unwrap();
        prop_assert_eq!(compare_eigendata(&back, EXACT_TOL).max_swap_deviation, r.max_swap_deviation);
        let s = compare_eigendata(&match_orbits(&x, &x, PairingMethod::SameBase, 4).unwrap(), EXACT_TOL);
        prop_assert_eq!(s.aggregate, Aggregate::EigendataMatch);
        prop_assert_eq!(s.max_match_deviation, 0.0);
    }

    #[test]
    fn configs_round_trip(n1 in 5usize..20, len in 8usize..30, c0 in 0.0f64..0.05) {
        let mut c = cli_runner::preset("amend-shadow-bump").unwrap();
        if let cli_runner::Experiment::Fit { n1: a, n2: b, .. } = &mut c.experiment {
            *a = n1;
            *b = n1 + len;
        }
        c.model.timechange.as_mut().unwrap().c0 = c0;
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back, c);
    }
}
