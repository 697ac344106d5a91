use proptest::prelude::*;
use transdev::deviation::{
    convergence_study, fit_order, residual, residual_terms, residual_terms_with, EquationId, Form, ResidualTerms,
};
use transdev::geometry::{cov_derivative_along, Tangent};
use transdev::kinematics::{deviation_vector, worldline, EvalConfig, Scenario};
use transdev::scenarios::{build, default_specs, ScenarioSpec, DEFAULT_LADDER};
use transdev::Error;

fn sc(name: &str) -> Scenario {
    build(&ScenarioSpec::new(name)).unwrap()
}

fn cfg() -> EvalConfig {
    EvalConfig::default()
}

fn terms(eq: EquationId, form: Form, sc: &Scenario, s: f64, eps: f64, frozen: &EvalConfig) -> ResidualTerms {
    residual_terms_with(eq, form, sc, s, eps, frozen).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

#[test]
fn velocity_equation_follows_from_substitution() {
    // r(E4_5) = r(E3_1) - D/ds r(E4_4) identically in ε
    for name in ["sphere-torsion", "offset-transport+linear-drift", "flat-torsion"] {
        let sc = sc(name);
        let (s, eps) = (0.3, 0.05);
        let frozen = cfg().frozen_transport(&sc, s, eps).unwrap();
        let x1 = worldline(&sc, 1, eps).unwrap().with_step(frozen.h_s);
        let r44 = |u: f64| {
            let r = terms(EquationId::E4_4, Form::Standard, &sc, u, eps, &frozen).residual();
            Tangent::new(x1.point(u)?, r)
        };
        let d44 = cov_derivative_along(&sc.conn, &x1, &r44, s).unwrap();
        let r31 = terms(EquationId::E3_1, Form::Standard, &sc, s, eps, &frozen).residual();
        let r45 = terms(EquationId::E4_5, Form::Standard, &sc, s, eps, &frozen).residual();
        let via: Vec<f64> = r31.iter().zip(d44.components()).map(|(a, b)| a - b).collect();
        let gap = max_abs(&r45.iter().zip(&via).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(gap < 1e-9, "{name}: {gap:e}");
        assert!(max_abs(&r45) > 1e-6, "{name}: identity must not hold trivially");
    }
}

#[test]
fn acceleration_equation_follows_from_substitution() {
    // r(E6_4) = r(E3_1) - r(E6_2)
    for name in ["sphere-torsion", "offset-transport", "flat-torsion+linear-drift"] {
        let sc = sc(name);
        let (s, eps) = (0.3, 0.05);
        let frozen = cfg().frozen_transport(&sc, s, eps).unwrap();
        let r31 = terms(EquationId::E3_1, Form::Standard, &sc, s, eps, &frozen).residual();
        let r62 = terms(EquationId::E6_2, Form::Standard, &sc, s, eps, &frozen).residual();
        let r64 = terms(EquationId::E6_4, Form::Standard, &sc, s, eps, &frozen).residual();
        let gap = (0..sc.dim).map(|i| (r64[i] - (r31[i] - r62[i])).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-9, "{name}: {gap:e}");
    }
}

fn ladder_norms(eq: EquationId, form: Form, sc: &Scenario) -> Vec<f64> {
    DEFAULT_LADDER
        .iter()
        .map(|&e| {
            let frozen = cfg().frozen_transport(sc, 0.3, e).unwrap();
            terms(eq, form, sc, 0.3, e, &frozen).norm()
        })
        .collect()
}

#[test]
fn printed_sign_of_acceleration_equation_is_first_order() {
    let sc = sc("offset-transport");
    let standard = fit_order(&DEFAULT_LADDER, &ladder_norms(EquationId::E6_5, Form::Standard, &sc)).unwrap();
    let printed = fit_order(&DEFAULT_LADDER, &ladder_norms(EquationId::E6_5, Form::PrintedSign, &sc)).unwrap();
    assert!(standard.slope >= 1.9, "standard slope {}", standard.slope);
    assert!(printed.slope < 1.2, "printed slope {}", printed.slope);
    // with S = 0 the two forms coincide
    let flat = self::sc("sphere");
    assert_eq!(
        ladder_norms(EquationId::E6_5, Form::Standard, &flat),
        ladder_norms(EquationId::E6_5, Form::PrintedSign, &flat)
    );
}

#[test]
fn force_expansions_with_either_mass_agree_to_second_order() {
    let sc = sc("offset-transport+linear-drift");
    let diff: Vec<f64> = DEFAULT_LADDER
        .iter()
        .map(|&e| {
            let frozen = cfg().frozen_transport(&sc, 0.3, e).unwrap();
            let a = terms(EquationId::E7_1, Form::Standard, &sc, 0.3, e, &frozen).residual();
            let b = terms(EquationId::E7_1, Form::MassOne, &sc, 0.3, e, &frozen).residual();
            max_abs(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>())
        })
        .collect();
    let fit = fit_order(&DEFAULT_LADDER, &diff).unwrap();
    assert!(fit.slope >= 1.9 && fit.r2 >= 0.98, "{fit:?}");
    let mass_one = fit_order(&DEFAULT_LADDER, &ladder_norms(EquationId::E7_1, Form::MassOne, &sc)).unwrap();
    assert!(mass_one.slope >= 1.9);
}

/// E4_4 residual on flat-torsion from the surface jets and a fixed-step RK4 transport.
fn independent_e44(sc: &Scenario, c: f64, s: f64, eps: f64) -> f64 {
    let j1 = sc.surface.jet(s, 0.0).unwrap();
    let j2 = sc.surface.jet(s, eps).unwrap();
    // only Γ^0_{10} = c is nonzero
    let gamma = |a: &[f64], b: &[f64]| [c * a[1] * b[0], 0.0];
    // transport back from r = ε to r = 0: dY/du = -Γ(Y, γ_r(u))
    let n = 4000;
    let h = -eps / n as f64;
    let rhs = |u: f64, y: [f64; 2]| {
        let xr = sc.surface.d_r(s, u).unwrap();
        let g = gamma(&y, &xr);
        [-g[0], -g[1]]
    };
    let mut y = [j2.xs[0], j2.xs[1]];
    let mut u = eps;
    for _ in 0..n {
        let k1 = rhs(u, y);
        let k2 = rhs(u + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = rhs(u + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = rhs(u + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        u += h;
    }
    let zeta = [eps * j1.xr[0], eps * j1.xr[1]];
    let g = gamma(&j1.xr, &j1.xs);
    let dzeta = [eps * (j1.xsr[0] + g[0]), eps * (j1.xsr[1] + g[1])];
    // T(V, ζ)^0 = c (ζ^1 V^0 - ζ^0 V^1)
    let t = [c * (zeta[1] * j1.xs[0] - zeta[0] * j1.xs[1]), 0.0];
    (0..2)
        .map(|i| (dzeta[i] - (y[i] - j1.xs[i]) - t[i]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn velocity_deviation_ratio_on_flat_torsion() {
    let c = 0.3;
    let sc = build(&ScenarioSpec::new("flat-torsion").with("c", c)).unwrap();
    let (a, b) = (independent_e44(&sc, c, 0.3, 1e-2), independent_e44(&sc, c, 0.3, 5e-3));
    assert!((3.5..=4.5).contains(&(a / b)), "oracle ratio {}", a / b);

    let mut fine = cfg();
    fine.ode.rel_tol = 1e-13;
    fine.ode.abs_tol = 1e-13;
    fine.quad_tol = 1e-13;
    let ha = residual(EquationId::E4_4, &sc, 0.3, 1e-2, &fine).unwrap().residual_norm;
    let hb = residual(EquationId::E4_4, &sc, 0.3, 5e-3, &fine).unwrap().residual_norm;
    assert!((ha - a).abs() < 1e-9 * a.max(1.0) + 1e-12, "{ha} vs {a}");
    assert!((hb - b).abs() < 1e-9 * b.max(1.0) + 1e-12, "{hb} vs {b}");
    let da = residual(EquationId::E4_4, &sc, 0.3, 1e-2, &cfg()).unwrap().residual_norm;
    let db = residual(EquationId::E4_4, &sc, 0.3, 5e-3, &cfg()).unwrap().residual_norm;
    assert!((3.5..=4.5).contains(&(da / db)));
}

#[test]
fn velocity_deviation_without_offset_has_no_s_term() {
    let with = build(&ScenarioSpec::new("offset-transport")).unwrap();
    let without = build(&ScenarioSpec::new("offset-transport").with("sigma", 0.0)).unwrap();
    let (s, eps) = (0.3, 0.02);
    let t_with = residual_terms(EquationId::E4_4, &with, s, eps, &cfg()).unwrap();
    let t_without = residual_terms(EquationId::E4_4, &without, s, eps, &cfg()).unwrap();
    assert!(max_abs(t_with.term("-S(V,zeta)").unwrap()) > 1e-3);
    assert_eq!(max_abs(t_without.term("-S(V,zeta)").unwrap()), 0.0);
    // zero torsion too, so the parallel form is Dζ - ΔV
    let r = t_without.residual();
    let dv = t_without.term("dV").unwrap();
    let reduced: Vec<f64> = (0..2).map(|i| t_without.lhs[i] - dv[i]).collect();
    assert!(max_abs(&r.iter().zip(&reduced).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-15);
    // the offset changes ΔV by exactly what the S-term compensates, to first order
    let gap_with = t_with.norm();
    let gap_without = t_without.norm();
    assert!(gap_with < 1e-3 && gap_without < 1e-3);
}

#[test]
fn flat_curved_rlines_deviation_has_closed_form() {
    let sc = sc("flat-euclidean/quadratic");
    for eps in DEFAULT_LADDER {
        let s = 0.3;
        let h = deviation_vector(&sc, s, eps, &cfg()).unwrap();
        let a = sc.surface.map(s, 0.0).unwrap();
        let b = sc.surface.map(s, eps).unwrap();
        for i in 0..2 {
            assert!((h.components()[i] - (b.coords()[i] - a.coords()[i])).abs() < 1e-14);
        }
    }
    let rep = convergence_study(EquationId::E2_13, &sc, 0.3, &DEFAULT_LADDER, &cfg()).unwrap();
    assert!(rep.fitted_order.unwrap() >= 1.9);
    assert!(!rep.floor_detected);
}

#[test]
fn classical_flat_deviation_is_identically_zero() {
    let sc = sc("flat-euclidean");
    for eq in [EquationId::E3_1, EquationId::E4_4, EquationId::E6_5] {
        let rep = convergence_study(eq, &sc, 0.3, &DEFAULT_LADDER, &cfg()).unwrap();
        assert!(rep.samples.iter().all(|x| x.residual_norm < 1e-10), "{eq}");
        assert!(rep.floor_detected);
        assert!(rep.fitted_order.is_none());
    }
}

#[test]
fn momentum_identity_is_exact_and_unfitted() {
    for spec in default_specs() {
        let sc = build(&ScenarioSpec::new(format!("{}+linear-drift", spec.name))).unwrap();
        let rep = convergence_study(EquationId::E5_1, &sc, 0.3, &DEFAULT_LADDER, &cfg()).unwrap();
        assert!(rep.exact);
        assert!(rep.max_residual() < 1e-9);
        assert!(rep.meets(1.9));
    }
}

#[test]
fn fits_have_enough_points_unless_at_the_floor() {
    for (name, eq) in [("sphere", EquationId::E4_5), ("flat-torsion", EquationId::E6_4)] {
        let rep = convergence_study(eq, &sc(name), 0.3, &DEFAULT_LADDER, &cfg()).unwrap();
        assert!(rep.floor_detected || rep.points_in_fit >= 4);
        assert_eq!(rep.samples.len(), DEFAULT_LADDER.len());
        let eps: Vec<f64> = rep.samples.iter().map(|x| x.epsilon).collect();
        assert_eq!(eps, DEFAULT_LADDER.to_vec());
    }
}

#[test]
fn ladder_is_validated() {
    let sc = sc("sphere");
    let bad: [&[f64]; 4] = [
        &[1e-1, 5e-2, 2e-2, 1e-2],
        &[1e-1, 5e-2, 5e-2, 1e-2, 5e-3],
        &[1e-1, 5e-2, 2e-2, 1e-2, -5e-3],
        &[0.9, 0.5, 0.2, 0.1, 0.05],
    ];
    for l in bad {
        assert!(convergence_study(EquationId::E4_4, &sc, 0.3, l, &cfg()).is_err(), "{l:?}");
    }
}

#[test]
fn energy_equation_needs_a_metric() {
    let mut sc = sc("minkowski");
    sc.metric = None;
    assert!(matches!(
        residual(EquationId::E7_4, &sc, 0.3, 0.01, &cfg()),
        Err(Error::MissingMetric { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn residuals_ignore_the_origin_of_r(c in -0.3f64..0.3, eps in 1e-3f64..0.15) {
        for name in ["sphere-torsion+linear-drift", "offset-transport+linear-drift"] {
            let base = sc(name);
            let moved = base.shift_r(c);
            for eq in EquationId::ALL {
                let a = residual(eq, &base, 0.3, eps, &cfg()).unwrap().residual_norm;
                let b = residual(eq, &moved, 0.3, eps, &cfg()).unwrap().residual_norm;
                prop_assert!((a - b).abs() < 1e-10, "{} {}: {} vs {}", name, eq, a, b);
            }
        }
    }

    #[test]
    fn momentum_identity_at_any_separation(s in -0.8f64..0.8, eps in 1e-4f64..0.45) {
        for spec in default_specs() {
            let sc = build(&ScenarioSpec::new(format!("{}+linear-drift", spec.name))).unwrap();
            let r = residual(EquationId::E5_1, &sc, s, eps, &cfg()).unwrap();
            prop_assert!(r.residual_norm < 1e-9);
        }
    }
}
