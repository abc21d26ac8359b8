use super::*;
use crate::bounds::{support_radius_forecast, SupportInput};
use crate::solvers::{solve_aggdiff, AggDiffConfig, GrowthConstants, InitialSpec, Potential};

fn line(n: usize) -> Grid1D {
    Grid1D::line(-2.0, 2.0, n).unwrap()
}

fn bump(g: Grid1D) -> DensityField {
    InitialSpec::Bump { center: 0.0, width: 1.0, peak: None }.build(g).unwrap()
}

fn pme(m: f64, g: Grid1D, end: f64, snaps: usize) -> Trajectory {
    solve_pme(&PmeConfig::new(m, g, end).with_snapshots(snaps), &bump(g)).unwrap()
}

fn quadratic_run(g: Grid1D, snaps: usize) -> Trajectory {
    let pot = PotentialPair::new(Potential::Quadratic { a: 1.0 }, Potential::Zero);
    let cfg = AggDiffConfig { pme: PmeConfig::new(2.0, g, 0.25).with_snapshots(snaps), potentials: pot };
    solve_aggdiff(&cfg, &bump(g)).unwrap()
}

#[test]
fn report_pass_flag_and_rows() {
    let r = DiagnosticReport::new("x", vec![0.0, 1.0], vec![0.1, 0.3], 0.2);
    assert_eq!(r.max_residual, 0.3);
    assert!(!r.pass);
    assert_eq!(r.csv_rows(), "x,0,1e-1,2e-1,true\nx,1,3e-1,2e-1,false\n");
    assert!(DiagnosticReport::new("x", vec![0.0], vec![0.2], 0.2).pass);
    assert!(DiagnosticReport::new("x", vec![], vec![], 0.0).pass);
}

#[test]
fn gradients_are_one_sided_at_support_edges() {
    let g = Grid1D::line(0.0, 1.0, 4).unwrap();
    assert_eq!(cell_gradient(&g, &[0.0, 1.0, 2.0, 3.0]), vec![4.0; 4]);
    // the support edge at cell 1 uses the forward difference
    assert_eq!(cell_gradient(&g, &[0.0, 1.0, 3.0, 0.0]), vec![4.0, 8.0, 8.0, -12.0]);
    let c = Grid1D::circle(0.5, 4).unwrap();
    assert_eq!(cell_gradient(&c, &[1.0, 2.0, 1.0, 2.0]), vec![0.0; 4]);
}

#[test]
fn default_slack_covers_the_calibration() {
    for n in [64, 128] {
        let c = calibrate_slack(n).unwrap();
        assert!(c.dx <= DEFAULT_SLACK.dx && c.dt <= DEFAULT_SLACK.dt, "{c:?}");
    }
    assert!(calibrate_slack(64).unwrap().dx > 0.5 * DEFAULT_SLACK.dx);
}

#[test]
fn energy_identity_trivial_cases() {
    let tr = pme(2.0, line(128), 0.1, 11);
    let k0 = energy_identity_residual(&tr, 0, &DEFAULT_SLACK).unwrap();
    assert!(k0.pass && k0.max_residual <= 1e-10);
    let k1 = energy_identity_residual(&tr, 1, &DEFAULT_SLACK).unwrap();
    assert_eq!(k1.residuals[0], 0.0);
    assert!(k1.pass);
    let wide = Grid1D::line(-4.0, 4.0, 256).unwrap();
    let heat = pme(1.0, wide, 0.02, 41);
    assert!(energy_identity_residual(&heat, 1, &DEFAULT_SLACK).unwrap().pass);
}

#[test]
fn energy_identity_converges_under_refinement() {
    let res: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|n| energy_identity_residual(&pme(2.0, line(*n), 0.25, 321), 1, &DEFAULT_SLACK).unwrap().max_residual)
        .collect();
    for w in res.windows(2) {
        assert!(w[0] / w[1] >= 1.7, "{res:?}");
    }
}

#[test]
fn weighted_energy_examples() {
    let g = line(256);
    let zero = pme(2.0, g, 0.25, 161);
    let w0 = weighted_energy_aggdiff(&zero, 0, &DEFAULT_SLACK).unwrap();
    assert!(w0.max_residual.abs() < 1e-12);
    assert!(weighted_energy_aggdiff(&zero, 1, &DEFAULT_SLACK).unwrap().pass);
    let q = weighted_energy_aggdiff(&quadratic_run(g, 161), 1, &DEFAULT_SLACK).unwrap();
    assert!(q.pass, "{} {}", q.max_residual, q.tol);
}

#[test]
fn aronson_benilan_on_quadratic_runs() {
    let c = Grid1D::circle(1.0, 64).unwrap();
    let flat =
        solve_pme(&PmeConfig::new(2.0, c, 0.1).with_snapshots(5), &InitialSpec::Uniform.build(c).unwrap()).unwrap();
    let s = aronson_benilan_suite(&flat, &DEFAULT_SLACK).unwrap();
    assert!(s.pass());
    assert!(s.reports().iter().all(|r| r.max_residual == 0.0));
    for d in [0.5, 1.0] {
        let g = line(256);
        let mut cfg = PmeConfig::new(2.0, g, 0.25).with_snapshots(81);
        cfg.diffusivity = d;
        let s = aronson_benilan_suite(&solve_pme(&cfg, &bump(g)).unwrap(), &DEFAULT_SLACK).unwrap();
        assert!(s.pass(), "{:?}", s.reports().map(|r| r.max_residual));
    }
    assert!(aronson_benilan_suite(&pme(2.2, line(64), 0.1, 5), &DEFAULT_SLACK).is_err());
}

#[test]
fn tail_estimate_examples() {
    let tr = pme(2.0, line(256), 0.25, 21);
    let r = tail_estimate_check(&tr, &DEFAULT_SLACK).unwrap();
    assert_eq!(r.residuals[0], 0.0);
    assert!(r.pass);
    let q = tail_estimate_check(&quadratic_run(line(256), 21), &DEFAULT_SLACK).unwrap();
    assert!(q.pass && q.residuals.last().unwrap() < &-0.2);
}

#[test]
fn evi_examples() {
    let g = line(256);
    let mu = pme(2.0, g, 0.25, 21);
    let rhs = mismatch_series(&mu, &mu.model).unwrap();
    assert!(rhs.iter().all(|r| *r == 0.0));
    let same = evi_rate_check(&mu, &mu, 0.0, &rhs, &DEFAULT_SLACK).unwrap();
    assert!(same.residuals.iter().all(|r| r.abs() <= 1e-12));
    let nu = pme(2.2, g, 0.25, 21);
    let rhs = mismatch_series(&mu, &nu.model).unwrap();
    let r = evi_rate_check(&mu, &nu, 0.0, &rhs, &DEFAULT_SLACK).unwrap();
    assert!(r.pass, "{:?}", r.residuals);
    let short = pme(2.0, g, 0.1, 2);
    assert!(matches!(
        evi_rate_check(&short, &short, 0.0, &[0.0; 2], &DEFAULT_SLACK),
        Err(Error::InsufficientSnapshots(2))
    ));
}

#[test]
fn support_confinement_examples() {
    let g = line(256);
    let tr = pme(2.0, g, 0.25, 11);
    let input = |r0: f64| SupportInput {
        m: 2.0,
        c_flux: 1.0,
        v: GrowthConstants::default(),
        w: GrowthConstants::default(),
        second_moment: moment(tr.initial(), 2.0),
        energy: free_energy(tr.initial(), 2.0, 1.0, &PotentialPair::default()),
        r0,
        d: 1,
    };
    let generous = input(1.0);
    assert!(generous.dominates(tr.initial()));
    let forecast = support_radius_forecast(&generous, &tr.times()).unwrap();
    assert!(support_confinement_check(&tr, &forecast, 1e-9, &DEFAULT_SLACK).unwrap().pass);
    let small = input(0.2);
    assert!(!small.dominates(tr.initial()));
    let forecast = support_radius_forecast(&small, &tr.times()).unwrap();
    let r = support_confinement_check(&tr, &forecast, 1e-9, &DEFAULT_SLACK).unwrap();
    assert!(!r.pass && r.residuals[0] > 0.0);
}
