use super::*;
use crate::measures::Grid1D;
use crate::solvers::{InitialSpec, Potential};
use approx::assert_relative_eq;
use proptest::prelude::*;

fn unit_input(m: f64, n: f64) -> BoundInput {
    BoundInput {
        m,
        n,
        alpha: None,
        beta: None,
        t: 1.0,
        powers: PowerIntegrals::Constant(1.0),
        linf: 1.0,
        log_sup: f64::INFINITY,
        second_moment: 1.0,
        pot_mu: PotentialPair::default(),
        pot_nu: PotentialPair::default(),
    }
}

#[test]
fn c_kappa_branches() {
    let mut input = unit_input(2.0, 2.0);
    assert_relative_eq!(c_kappa(&input, 0.5), 2.0 / E + 1.0, max_relative = 1e-14);
    // uniform density 1/2 on a bounded domain: ‖log μ₀‖ = ln 2 beats the first branch
    input.linf = 0.5;
    input.log_sup = 2f64.ln();
    let first = 1.0 / (E * 0.5) + 0.5f64.powf(1.5);
    let second = 0.5f64.powf(0.5) * 2f64.ln();
    assert!(second < first);
    assert_relative_eq!(c_kappa(&input, 0.5), second, max_relative = 1e-14);
    assert_relative_eq!(c_kappa(&input, 0.0), 2f64.ln(), max_relative = 1e-14);
    assert_eq!(c_kappa_aggdiff(&input, 0.5, 0.0), c_kappa(&input, 0.5));
}

#[test]
fn pme_constant_examples() {
    let mut input = unit_input(2.0, 2.0);
    input.alpha = Some(0.5);
    input.beta = Some(0.5);
    assert_relative_eq!(pme_constant_c(&input).unwrap().value, 8.571943218272269, max_relative = 1e-12);
    // first term alone at m = n
    let first = (2.0_f64 * 1.0 * 2.0).sqrt().recip();
    assert!(pme_constant_c(&input).unwrap().value > first);
    assert_eq!(pme_exponent_bound(&input).unwrap(), 0.0);
    input.alpha = Some(1.0);
    assert!(matches!(pme_constant_c(&input), Err(Error::Range(_))));
    assert!(matches!(pme_constant_c(&unit_input(2.0, 1.5)), Err(Error::Range(_))));
}

#[test]
fn minimization_never_exceeds_fixed_parameters() {
    let g = Grid1D::line(-2.0, 2.0, 200).unwrap();
    let f = InitialSpec::Bump { center: 0.0, width: 1.0, peak: None }.build(g).unwrap();
    let free = BoundInput::from_field(&f, 2.0, 2.4, 0.25);
    let best = pme_constant_c(&free).unwrap();
    for (a, b) in [(0.0, 0.0), (0.5, 0.5), (0.9, 1.7), (0.25, 1.0)] {
        let fixed = BoundInput { alpha: Some(a), beta: Some(b), ..free.clone() };
        assert!(best.value <= pme_constant_c(&fixed).unwrap().value + 1e-12);
    }
    assert!(best.alpha < 1.0 && best.beta < 1.8);
}

#[test]
fn mesa_examples() {
    assert_relative_eq!(mesa_bound(4.0, 1.0, 1.0, 0.0).unwrap(), 1.2844570503761734, max_relative = 1e-14);
    assert_eq!(mesa_bound(8.0, 0.0, 3.0, 0.02).unwrap(), 0.02);
    let b: Vec<f64> = [2.0, 4.0, 8.0, 16.0, 64.0].iter().map(|m| mesa_bound(*m, 0.5, 1.0, 0.0).unwrap()).collect();
    assert!(b.windows(2).all(|w| w[1] < w[0]));
    assert!(mesa_bound(1.5, 1.0, 1.0, 0.0).is_err());
}

#[test]
fn nonlocal_examples() {
    let base = NonlocalInput { t: 1.0, epsilon: 0.1, dx_sup: 1.0, linf: 1.0, d2_neg: 2.0, kernel_moment: 2.0 };
    assert_relative_eq!(nonlocal_bound(&base), 0.44, max_relative = 1e-14);
    assert_eq!(nonlocal_bound(&NonlocalInput { epsilon: 0.0, ..base }), 0.0);
    assert_relative_eq!(
        nonlocal_bound(&NonlocalInput { epsilon: 0.2, ..base }),
        4.0 * nonlocal_bound(&base),
        max_relative = 1e-14
    );
}

#[test]
fn derivative_stats_of_a_cap() {
    // unit-mass 0.75(1 − x²)₊ has slope 1.5 at the edges and curvature −1.5 on [−1, 1];
    // the kinks at ±1 are positive and do not count
    let g = Grid1D::line(-2.0, 2.0, 4000).unwrap();
    let f = DensityField::from_fn(g, 0.0, |x| (1.0 - x * x).max(0.0)).unwrap();
    let (dx, d2) = derivative_stats(&f);
    assert_relative_eq!(dx, 1.5, max_relative = 2e-3);
    assert_relative_eq!(d2, 3.0, max_relative = 2e-3);
    let c = Grid1D::circle(1.0, 64).unwrap();
    let u = DensityField::new(c, vec![0.5; 64], 0.0).unwrap();
    assert_eq!(derivative_stats(&u), (0.0, 0.0));
}

#[test]
fn lambda_and_time_factor() {
    assert_eq!(lambda_select(1.0, 0.5, true), 0.5);
    assert_eq!(lambda_select(1.0, 0.5, false), 1.0);
    assert_eq!(lambda_select(1.0, -0.5, false), 0.5);
    assert_eq!(time_factor(0.0, 0.7), 0.7);
    assert_relative_eq!(time_factor(1e-12, 0.7), 0.7, max_relative = 1e-10);
    assert_relative_eq!(time_factor(1.0, 1.0), (1.0 - (-2.0f64).exp()) / 2.0, max_relative = 1e-14);
}

#[test]
fn aggdiff_degenerates_to_pme_bound() {
    let g = Grid1D::line(-2.0, 2.0, 200).unwrap();
    let f = InitialSpec::Bump { center: 0.0, width: 1.0, peak: None }.build(g).unwrap();
    let input = BoundInput::from_field(&f, 2.0, 2.2, 0.25);
    let a = aggdiff_bound(&input, 0.0, 0.0).unwrap();
    assert_eq!(a.lambda, 0.0);
    assert_relative_eq!(a.total(), pme_exponent_bound(&input).unwrap(), max_relative = 1e-14);
    let mut conf = input.clone();
    conf.pot_nu = PotentialPair::new(Potential::Zero, Potential::Quadratic { a: 0.3 });
    assert_eq!(aggdiff_bound(&conf, 0.0, 0.0).unwrap().lambda, 0.3);
    let same = BoundInput { n: 2.0, ..input };
    assert_eq!(aggdiff_bound(&same, 0.0, 0.0).unwrap().total(), 0.0);
}

#[test]
fn heat_limit_examples() {
    let input =
        HeatInput { t: 1.0, alpha: 2.0, n: 1.5, int_alpha: 1.0, second_moment: 1.0, domain: HeatDomain::real_line() };
    assert_relative_eq!(heat_limit_constant(&input).unwrap(), 114.64583250857285, max_relative = 1e-14);
    let bounded = HeatInput { domain: HeatDomain::Bounded { r: 2.0, exp_integral: 1.0 }, ..input };
    let direct = 4.0 * (4.0 / 0.25 + 4.0 + 16.0 / (E * E));
    assert_relative_eq!(heat_limit_constant(&bounded).unwrap(), direct, max_relative = 1e-14);
    assert!(heat_limit_constant(&HeatInput { n: 2.0, ..input }).is_err());
    assert_relative_eq!(HeatDomain::interval(1e3).exp_integral(), 4.0, max_relative = 1e-12);
}

fn support_input(m: f64) -> SupportInput {
    SupportInput {
        m,
        c_flux: 1.0,
        v: GrowthConstants::default(),
        w: GrowthConstants::default(),
        second_moment: 0.1,
        energy: 0.5,
        r0: 0.4,
        d: 1,
    }
}

#[test]
fn support_forecast_closed_forms() {
    // B ≡ 0: R = R₀ e^{at}, a = 2C^{m−1}m/(m−1)
    let s = support_input(2.0);
    let r = support_radius_forecast(&s, &[0.0, 0.5, 1.0]).unwrap();
    assert_eq!(r[0], 0.4);
    assert_relative_eq!(r[2], 0.4 * (4.0f64).exp(), max_relative = 1e-10);
    // constant B = b with zero rate: R′ = bR + b, R = (R₀ + 1)e^{bt} − 1
    let mut s = support_input(2.0);
    s.c_flux = 1e-300;
    s.v.c[3] = 0.7;
    let r = support_radius_forecast(&s, &[1.0]).unwrap();
    assert_relative_eq!(r[0], 1.4 * 0.7f64.exp() - 1.0, max_relative = 1e-10);
    // constraint violated
    let mut bad = support_input(2.0);
    bad.v.lap_sup = 10.0;
    assert!(matches!(support_radius_forecast(&bad, &[1.0]), Err(Error::ConstraintViolation(_))));
}

#[test]
fn domination_check() {
    let g = Grid1D::line(-2.0, 2.0, 200).unwrap();
    let f = InitialSpec::Bump { center: 0.0, width: 0.5, peak: None }.build(g).unwrap();
    let mut s = support_input(2.0);
    s.c_flux = 2.0;
    s.r0 = 1.0;
    assert!(s.dominates(&f));
    s.r0 = 0.05;
    assert!(!s.dominates(&f));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounds_are_nondecreasing_in_time(t0 in 0.0..2.0f64, dt in 0.0..1.0f64, m in 2.0..6.0f64, lam in -1.0..1.0f64) {
        let t1 = t0 + dt;
        prop_assert!(mesa_bound(m, t1, 2.0, 0.1).unwrap() >= mesa_bound(m, t0, 2.0, 0.1).unwrap());
        prop_assert!(time_factor(lam, t1) >= time_factor(lam, t0));
        let nl = |t| nonlocal_bound(&NonlocalInput { t, epsilon: 0.1, dx_sup: 1.0, linf: 1.0, d2_neg: 1.0, kernel_moment: 2.0 });
        prop_assert!(nl(t1) >= nl(t0));
        let heat = |t| heat_limit_constant(&HeatInput { t, alpha: 2.0, n: 1.2, int_alpha: 1.0, second_moment: 0.3, domain: HeatDomain::real_line() }).unwrap();
        prop_assert!(heat(t1) >= heat(t0));
        let mut a = unit_input(2.0, 2.5);
        a.t = t0;
        let b0 = pme_exponent_bound(&a).unwrap();
        a.t = t1;
        prop_assert!(pme_exponent_bound(&a).unwrap() >= b0);
        let mut s = support_input(m);
        s.w.c[4] = 0.3;
        let r = support_radius_forecast(&s, &[t0, t1]).unwrap();
        prop_assert!(r[1] >= r[0]);
    }
}
