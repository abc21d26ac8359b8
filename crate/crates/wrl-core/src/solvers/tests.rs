use super::*;
use crate::kernels::rescale;
use crate::measures::{moment, signed_moment};
use approx::assert_relative_eq;

fn bump_field(grid: Grid1D, w: f64) -> DensityField {
    InitialSpec::Bump { center: 0.0, width: w, peak: None }.build(grid).unwrap()
}

#[test]
fn constant_on_circle_is_steady() {
    let g = Grid1D::circle(1.0, 64).unwrap();
    let f = DensityField::new(g, vec![0.5; 64], 0.0).unwrap();
    let traj = solve_pme(&PmeConfig::new(2.0, g, 0.1).with_snapshots(3), &f).unwrap();
    for s in &traj.snapshots {
        assert!(s.values().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }
    let ncfg = NonlocalConfig { kernel: Kernel::laplace(), epsilon: 0.1, grid: g, end_time: 0.1, output_times: vec![] };
    let traj = solve_nonlocal(&ncfg, &f).unwrap();
    assert!(traj.last().values().iter().all(|v| (v - 0.5).abs() < 1e-13));
    assert!(traj.velocity_samples.iter().flatten().all(|v| v.abs() < 1e-10));
}

fn barenblatt_l1_error(n: usize) -> f64 {
    let g = Grid1D::line(-2.0, 2.0, n).unwrap();
    let b = Barenblatt::new(2.0, 1.0).unwrap();
    let (t0, t1) = (0.05, 0.15);
    let init = b.field(g, t0).unwrap().with_time(0.0);
    let traj = solve_pme(&PmeConfig::new(2.0, g, t1 - t0), &init).unwrap();
    let exact = b.field(g, t1).unwrap();
    traj.last().l1_distance(&exact.with_time(t1 - t0)).unwrap()
}

#[test]
fn barenblatt_convergence() {
    let errs: Vec<f64> = [100, 200, 400].iter().map(|n| barenblatt_l1_error(*n)).collect();
    assert!(errs[0] < 2e-2, "{errs:?}");
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 1.7, "{errs:?}");
    }
}

#[test]
fn mass_and_maximum_principle() {
    let g = Grid1D::line(-4.0, 4.0, 400).unwrap();
    let f = InitialSpec::DoubleBump { separation: 1.0, width: 0.4, ratio: 0.5 }.build(g).unwrap();
    for m in [1.0, 1.5, 2.0, 3.0] {
        let traj = solve_pme(&PmeConfig::new(m, g, 0.05).with_snapshots(6), &f).unwrap();
        for s in &traj.snapshots {
            assert!((s.mass() - 1.0).abs() < 1e-10);
            assert!(s.max() <= f.max() * (1.0 + 1e-12));
        }
        assert!(traj.check_invariants(1e-10));
    }
}

#[test]
fn circle_comparison_principle() {
    let g = Grid1D::circle(1.0, 128).unwrap();
    let f = InitialSpec::Wave { amplitude: 0.7 }.build(g).unwrap();
    let traj = solve_pme(&PmeConfig::new(2.5, g, 0.05).with_snapshots(5), &f).unwrap();
    let slack = 1e-8 * f.max();
    for s in &traj.snapshots {
        assert!(s.max() <= f.max() + slack && s.min() >= f.min() - slack);
    }
}

#[test]
fn cfl_examples() {
    let g = Grid1D::line(0.0, 1.0, 100).unwrap();
    let f = DensityField::new(g, vec![1.0; 100], 0.0).unwrap();
    let model = StabilityModel { diffusion: Some((2.0, 1.0)), max_speed: 0.0, nonlocal_curvature: None };
    assert_relative_eq!(cfl_dt(&f, &model).unwrap(), 0.45 * 2.5e-5, max_relative = 1e-12);
    let g2 = Grid1D::line(0.0, 1.0, 50).unwrap();
    let f2 = DensityField::new(g2, vec![1.0; 50], 0.0).unwrap();
    assert_relative_eq!(cfl_dt(&f2, &model).unwrap(), 4.0 * cfl_dt(&f, &model).unwrap(), max_relative = 1e-12);
    let fast = StabilityModel { max_speed: 1e4, ..model };
    assert_relative_eq!(cfl_dt(&f, &fast).unwrap(), 0.45 * 0.01 / 1e4, max_relative = 1e-12);
    let z = DensityField::new(g, vec![0.0; 100], 0.0).unwrap();
    assert!(matches!(cfl_dt(&z, &model), Err(Error::DegenerateState(_))));
}

#[test]
fn explicit_step_rejected_when_unstable() {
    let g = Grid1D::line(-2.0, 2.0, 100).unwrap();
    let f = bump_field(g, 0.5);
    let mut cfg = PmeConfig::new(2.0, g, 0.01);
    cfg.dt_policy = DtPolicy::Explicit(1e-2);
    assert!(matches!(solve_pme(&cfg, &f), Err(Error::CflViolation { .. })));
}

#[test]
fn support_escape_guard() {
    let g = Grid1D::line(-1.0, 1.0, 100).unwrap();
    let f = bump_field(g, 0.5);
    let cfg = PmeConfig::new(2.0, g, 5.0);
    assert!(matches!(solve_pme(&cfg, &f), Err(Error::SupportEscape { .. })));
    let wide = bump_field(g, 0.85);
    assert!(matches!(solve_pme(&PmeConfig::new(2.0, g, 0.01), &wide), Err(Error::SupportEscape { t, .. }) if t == 0.0));
}

#[test]
fn implicit_matches_explicit() {
    let g = Grid1D::line(-2.0, 2.0, 200).unwrap();
    let f = InitialSpec::Bump { center: 0.0, width: 1.0, peak: Some(1.0) }.build(g).unwrap();
    let expl = solve_pme(&PmeConfig::new(3.0, g, 0.05), &f).unwrap();
    let mut cfg = PmeConfig::new(3.0, g, 0.05);
    cfg.dt_policy = DtPolicy::Implicit(1e-4);
    let impl_ = solve_pme(&cfg, &f).unwrap();
    assert!(impl_.step_log.implicit);
    assert!((impl_.last().mass() - 1.0).abs() < 1e-12);
    assert!(expl.last().l1_distance(impl_.last()).unwrap() < 2e-3);
}

#[test]
fn high_exponent_switches_to_implicit() {
    let g = Grid1D::line(-2.0, 2.0, 128).unwrap();
    let f = InitialSpec::Bump { center: 0.0, width: 1.0, peak: Some(0.9) }.build(g).unwrap();
    let traj = solve_pme(&PmeConfig::new(32.0, g, 0.2), &f).unwrap();
    assert!(traj.step_log.implicit);
    assert!((traj.last().mass() - 1.0).abs() < 1e-10);
    assert!(traj.last().max() <= f.max() + 1e-12);
}

#[test]
fn heat_spreads_like_the_heat_kernel() {
    // variance grows by 2t under ∂ₜμ = ∂ₓₓμ
    let g = Grid1D::line(-8.0, 8.0, 800).unwrap();
    let f = bump_field(g, 1.0);
    let traj = solve_pme(&PmeConfig::new(1.0, g, 0.25), &f).unwrap();
    let gain = moment(traj.last(), 2.0) - moment(&f, 2.0);
    assert_relative_eq!(gain, 0.5, max_relative = 1e-6);
}

#[test]
fn aggdiff_zero_potentials_identical() {
    let g = Grid1D::line(-2.0, 2.0, 128).unwrap();
    let f = bump_field(g, 0.6);
    let pme = PmeConfig::new(2.0, g, 0.05).with_snapshots(4);
    let a = solve_pme(&pme, &f).unwrap();
    let b = solve_aggdiff(&AggDiffConfig { pme, potentials: PotentialPair::default() }, &f).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
}

#[test]
fn aggdiff_symmetry_and_confinement() {
    let g = Grid1D::line(-3.0, 3.0, 240).unwrap();
    let f = bump_field(g, 0.8);
    let pot = PotentialPair::new(Potential::Quadratic { a: 1.0 }, Potential::Quadratic { a: 0.5 });
    let pme = PmeConfig::new(2.0, g, 0.3).with_snapshots(4);
    let traj = solve_aggdiff(&AggDiffConfig { pme, potentials: pot }, &f).unwrap();
    for s in &traj.snapshots {
        let v = s.values();
        let n = v.len();
        for i in 0..n / 2 {
            assert!((v[i] - v[n - 1 - i]).abs() < 1e-13);
        }
        assert!(signed_moment(s, 1).abs() < 1e-13);
        assert!((s.mass() - 1.0).abs() < 1e-10);
    }
    // L∞ growth bound ‖μₜ‖ ≤ L(t)‖μ₀‖
    let lt = pot.growth_factor(0.3);
    assert!(traj.last().max() <= lt * f.max() * (1.0 + 1e-8));
}

#[test]
fn nonlocal_errors() {
    let g = Grid1D::circle(1.0, 100).unwrap();
    let f = DensityField::new(g, vec![0.5; 100], 0.0).unwrap();
    let cfg = NonlocalConfig { kernel: Kernel::laplace(), epsilon: 0.01, grid: g, end_time: 0.1, output_times: vec![] };
    assert!(matches!(solve_nonlocal(&cfg, &f), Err(Error::KernelResolution { .. })));
    let cfg = NonlocalConfig { kernel: Kernel::gaussian(), epsilon: 0.1, ..cfg };
    assert!(solve_nonlocal(&cfg, &f).is_err());
}

#[test]
fn nonlocal_energy_decreases_and_mass_is_kept() {
    let g = Grid1D::circle(1.0, 200).unwrap();
    let f = InitialSpec::Cap { center: 0.1, width: 0.5 }.build(g).unwrap();
    let cfg = NonlocalConfig {
        kernel: Kernel::laplace(),
        epsilon: 0.05,
        grid: g,
        end_time: 0.1,
        output_times: uniform_times(0.1, 11),
    };
    let traj = solve_nonlocal(&cfg, &f).unwrap();
    let k = rescale(&Kernel::laplace(), 0.05).unwrap();
    let e: Vec<f64> = traj.snapshots.iter().map(|s| nonlocal_energy(s, &k).unwrap()).collect();
    for w in e.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{e:?}");
    }
    for s in &traj.snapshots {
        assert!((s.mass() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn nonlocal_small_epsilon_tracks_half_speed_pme() {
    let g = Grid1D::circle(1.0, 256).unwrap();
    let f = InitialSpec::Cap { center: 0.0, width: 0.5 }.build(g).unwrap();
    let eps = 4.0 * g.cell_width();
    let t = 0.1;
    let nl = solve_nonlocal(
        &NonlocalConfig { kernel: Kernel::laplace(), epsilon: eps, grid: g, end_time: t, output_times: vec![] },
        &f,
    )
    .unwrap();
    let mut pcfg = PmeConfig::new(2.0, g, t);
    pcfg.diffusivity = 0.5;
    let local = solve_pme(&pcfg, &f).unwrap();
    let far = solve_pme(&PmeConfig::new(2.0, g, t), &f).unwrap();
    let d_half = nl.last().l1_distance(local.last()).unwrap();
    let d_full = nl.last().l1_distance(far.last()).unwrap();
    assert!(d_half < 0.2 * d_full, "{d_half} vs {d_full}");
}
