//! Frozen reference values computed independently of the library.

use approx::assert_relative_eq;
use pgn::bounds::{const_c1, dtv_bound_1d, q_floor_sq, rho_tau, stable_bound_a};
use pgn::levy::{gamma_levy_cumulant, LevyMeasure1D};
use pgn::matching::{match4, match5, match_sym9, stable_p_asym};
use pgn::radial::{j_functions, radial_match, sigma_tau, RadialLevySpec};
use pgn::special::ln_gamma;
use pgn::sphere::{DirFn, SphereMeasure};

fn ts(c: f64, a: f64) -> LevyMeasure1D {
    LevyMeasure1D::trunc_stable(c, a, 1.0)
}

fn uniform_circle(a: f64, c: f64) -> RadialLevySpec {
    RadialLevySpec {
        nu: SphereMeasure::UniformSpherical { d: 2, total_mass: 1.0 },
        a: DirFn::constant(a),
        c: DirFn::constant(c),
        r0: 1.0,
        symmetric: true,
        direction_independent: true,
    }
}

#[test]
fn order_four_fit_at_unit_radius() {
    let fit = match4(&ts(1.0, 1.0), 1.0, 4.0).unwrap();
    assert_relative_eq!(fit.s, 1.0 / 12.0, max_relative = 1e-14);
    assert_relative_eq!(fit.m, 12f64.powi(8) / 10080.0, max_relative = 1e-12);
    assert_relative_eq!(fit.sigma.powi(2), 1.0 / 7.0, max_relative = 1e-12);
}

#[test]
fn stable_exponents() {
    for (a, p) in [(0.5, 7.25), (1.0, 4.0), (1.5, 1.25)] {
        assert_relative_eq!(stable_p_asym(a).unwrap(), p, max_relative = 1e-14);
        assert_relative_eq!(match5(&ts(2.0, a), 0.1).unwrap().p, p, max_relative = 1e-10);
    }
    let p = match_sym9(&ts(1.0, 1.0), 0.5).unwrap().p;
    assert_relative_eq!(p, (10.0 + 526f64.sqrt()) / 2.0, max_relative = 1e-10);
}

#[test]
fn gamma_cumulant_closed_form() {
    // ∫u^j m u^p e^{-u/s} du = m Γ(p+j+1) s^{p+j+1}
    let (p, s, m): (f64, f64, f64) = (2.5, 0.3, 7.0);
    for j in 2..=8 {
        let want = m * (ln_gamma(p + j as f64 + 1.0) + (p + j as f64 + 1.0) * s.ln()).exp();
        assert_relative_eq!(gamma_levy_cumulant(p, s, m, j).unwrap(), want, max_relative = 1e-12);
    }
}

#[test]
fn bound_constants() {
    assert_relative_eq!(const_c1(), 0.841_470_984_807_896_5, max_relative = 1e-15);
    assert_relative_eq!(stable_bound_a(1.0), 5.0 / 24.0, max_relative = 1e-15);
    // Γ(5.5) / (2 (sin²1 / 2)^5.5)
    let want = 52.342_777_784_553_52 / (2.0 * (0.5 * 1f64.sin().powi(2)).powf(5.5));
    assert_relative_eq!(q_floor_sq(5), want, max_relative = 1e-12);
}

#[test]
fn q_reaches_floor_for_small_radius() {
    let m = ts(1.0, 1.5);
    let rep = dtv_bound_1d(&m, &match5(&m, 1e-3).unwrap()).unwrap();
    for j in 5..=7 {
        let ratio = rep.qs[&j].powi(2) / q_floor_sq(j);
        assert!((ratio - 1.0).abs() < 0.05, "Q{j}²/floor = {ratio}");
    }
}

#[test]
fn j_functions_at_unit_index() {
    let j = j_functions(1.0).unwrap();
    let pi = (10.0 + 526f64.sqrt()) / 2.0;
    assert_relative_eq!(j.pi, pi, max_relative = 1e-14);
    assert_relative_eq!(j.j1, (3.0 / (5.0 * (pi + 5.0) * (pi + 6.0))).sqrt(), max_relative = 1e-14);
}

#[test]
fn circle_sigma_is_isotropic() {
    let field = radial_match(&uniform_circle(1.0, 1.0), 0.1).unwrap();
    assert_relative_eq!(field.k[(0, 0)], 0.5, max_relative = 1e-14);
    assert!(field.k[(0, 1)].abs() < 1e-15);
    let (sigma, _) = sigma_tau(&field).unwrap();
    // c J0 r^{2-a} / 2 with J0 = 1 at a = 1
    assert_relative_eq!(sigma[(0, 0)], field.r_max / 2.0, max_relative = 1e-12);
}

#[test]
fn rho_closed_form_on_circle() {
    let field = radial_match(&uniform_circle(1.0, 1.0), 0.1).unwrap();
    let (sigma, a) = sigma_tau(&field).unwrap();
    let alpha2 = sigma[(0, 0)];
    let r = field.r_max;
    let c1 = const_c1();
    for z in [1e-4, 1e-3, 1e-2, 0.1, 1.0] {
        let cut = r.min(z * alpha2.sqrt());
        let stable = c1 * c1 * cut / 2.0 / alpha2;
        let gauss = field.tau * field.tau / 2.0 / alpha2;
        let got = rho_tau(z, &field, &a).unwrap();
        assert_relative_eq!(got, stable.min(gauss), max_relative = 1e-8);
    }
}
