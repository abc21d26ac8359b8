//! A priori estimate checks on computed trajectories.

use crate::error::{Error, Result};
use crate::measures::{ksum, moment, support_radius, DensityField, Grid1D, TOL_MASS};
use crate::solvers::{free_energy, solve_pme, Barenblatt, Model, PmeConfig, PotentialPair, Trajectory};
use crate::transport::wasserstein;

/// `check,snapshot_t,residual,tol,pass`.
pub const DIAGNOSTIC_HEADER: &str = "check,snapshot_t,residual,tol,pass";

/// Discretization slack `c₁·Δx + c₂·dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slack {
    pub dx: f64,
    pub dt: f64,
}

/// [`calibrate_slack`] at 64 cells, rounded up; the fit charges the whole Barenblatt error to `Δx`.
pub const DEFAULT_SLACK: Slack = Slack { dx: 0.1, dt: 0.0 };

impl Default for Slack {
    fn default() -> Self {
        DEFAULT_SLACK
    }
}

impl Slack {
    pub fn eval(&self, dx: f64, dt: f64) -> f64 {
        self.dx * dx + self.dt * dt
    }

    /// Slack at the cell width and largest step of `traj`.
    pub fn for_trajectory(&self, traj: &Trajectory) -> f64 {
        self.eval(traj.grid().cell_width(), traj.step_log.max_dt())
    }
}

/// Snapshot count used by the calibration runs.
pub const CALIBRATION_SNAPSHOTS: usize = 161;

/// Snapshot count that keeps the time quadrature of the energy identities below the spatial
/// error on 512-cell grids.
pub const IDENTITY_SNAPSHOTS: usize = 321;

/// Fits `c₁Δx + c₂dt` to the larger of the L¹ error and the `k = 1` energy-identity residual of
/// the quadratic Barenblatt solution on `n_cells` and `2·n_cells`.
pub fn calibrate_slack(n_cells: usize) -> Result<Slack> {
    let b = Barenblatt::new(2.0, 1.0)?;
    let (t0, span) = (0.02, 0.1);
    let run = |n: usize| -> Result<(f64, f64, f64)> {
        let g = Grid1D::line(-2.0, 2.0, n)?;
        let f0 = b.field(g, t0)?.with_time(0.0);
        let traj = solve_pme(&PmeConfig::new(2.0, g, span).with_snapshots(CALIBRATION_SNAPSHOTS), &f0)?;
        let exact = b.field(g, t0 + span)?.with_time(span);
        let l1 = traj.last().l1_distance(&exact)?;
        let zero = Slack { dx: 0.0, dt: 0.0 };
        let identity = energy_identity_residual(&traj, 1, &zero)?.max_residual;
        Ok((g.cell_width(), traj.step_log.max_dt(), l1.max(identity)))
    };
    let (h1, d1, e1) = run(n_cells)?;
    let (h2, d2, e2) = run(2 * n_cells)?;
    let det = h1 * d2 - h2 * d1;
    let (c1, c2) = ((e1 * d2 - e2 * d1) / det, (h1 * e2 - h2 * e1) / det);
    if det != 0.0 && c1 >= 0.0 && c2 >= 0.0 {
        Ok(Slack { dx: c1, dt: c2 })
    } else {
        // not sign-definite: charge everything to the spatial term
        Ok(Slack { dx: (e1 / h1).max(e2 / h2), dt: 0.0 })
    }
}

/// Per-snapshot residuals of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticReport {
    pub check: String,
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl DiagnosticReport {
    pub fn new(check: impl Into<String>, times: Vec<f64>, residuals: Vec<f64>, tol: f64) -> Self {
        let max_residual = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let max_residual = if residuals.is_empty() { 0.0 } else { max_residual };
        let pass = max_residual <= tol;
        Self { check: check.into(), times, residuals, max_residual, tol, pass }
    }

    /// Rows under [`DIAGNOSTIC_HEADER`].
    pub fn csv_rows(&self) -> String {
        self.times
            .iter()
            .zip(&self.residuals)
            .map(|(t, r)| format!("{},{},{:e},{:e},{}\n", self.check, t, r, self.tol, *r <= self.tol))
            .collect()
    }
}

/// `|mass(μₜ) − mass(μ₀)|` against [`TOL_MASS`].
pub fn mass_drift(traj: &Trajectory) -> DiagnosticReport {
    let m0 = traj.initial().mass();
    let r = traj.snapshots.iter().map(|s| (s.mass() - m0).abs()).collect();
    DiagnosticReport::new("mass_drift", traj.times(), r, TOL_MASS)
}

/// `(max μₜ − max μ₀)/max μ₀`, nonpositive for the porous medium and nonlocal equations.
pub fn maximum_principle(traj: &Trajectory) -> DiagnosticReport {
    let m0 = traj.initial().max();
    let r = traj.snapshots.iter().map(|s| (s.max() - m0) / m0).collect();
    DiagnosticReport::new("maximum_principle", traj.times(), r, 1e-12)
}

/// Cell gradient: centered in the interior, one-sided at walls and at support edges.
pub fn cell_gradient(grid: &Grid1D, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let h = grid.cell_width();
    let at = |i: i64| -> Option<f64> {
        if grid.is_circle() {
            Some(v[i.rem_euclid(n as i64) as usize])
        } else if i < 0 || i >= n as i64 {
            None
        } else {
            Some(v[i as usize])
        }
    };
    (0..n as i64)
        .map(|i| {
            let c = v[i as usize];
            match (at(i - 1), at(i + 1)) {
                (Some(l), Some(r)) if c > 0.0 && l <= 0.0 && r > 0.0 => (r - c) / h,
                (Some(l), Some(r)) if c > 0.0 && r <= 0.0 && l > 0.0 => (c - l) / h,
                (Some(l), Some(r)) => (r - l) / (2.0 * h),
                (None, Some(r)) => (r - c) / h,
                (Some(l), None) => (c - l) / h,
                (None, None) => 0.0,
            }
        })
        .collect()
}

/// `∫ μ^q |∂ₓμ|²` with [`cell_gradient`].
fn weighted_dirichlet(f: &DensityField, q: f64) -> f64 {
    let g = cell_gradient(f.grid(), f.values());
    let w = |v: f64| {
        if q == 0.0 {
            1.0
        } else if v > 0.0 {
            v.powf(q)
        } else {
            0.0
        }
    };
    ksum(f.values().iter().zip(&g).map(|(v, d)| w(*v) * d * d)) * f.grid().cell_width()
}

/// Cumulative trapezoid of `y` over `t`, starting at 0.
fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(t.len());
    out.push(0.0);
    for j in 1..t.len() {
        acc += 0.5 * (t[j] - t[j - 1]) * (y[j] + y[j - 1]);
        out.push(acc);
    }
    out
}

fn diffusion_of(traj: &Trajectory) -> Result<(f64, f64)> {
    match &traj.model {
        Model::Pme { m, diffusivity } | Model::AggDiff { m, diffusivity, .. } => Ok((*m, *diffusivity)),
        Model::Nonlocal { .. } => Err(Error::Invalid("check needs a local diffusion trajectory".into())),
    }
}

/// `∫μₜ^{k+1} + D k(k+1) m ∫₀ᵗ∫μ^{k+m−2}|∂ₓμ|² = ∫μ₀^{k+1}` as relative residual per snapshot.
pub fn energy_identity_residual(traj: &Trajectory, k: u32, slack: &Slack) -> Result<DiagnosticReport> {
    let (m, d) = diffusion_of(traj)?;
    if let Model::AggDiff { potentials, .. } = &traj.model {
        if !potentials.is_zero() {
            return Err(Error::Invalid("energy identity needs vanishing potentials".into()));
        }
    }
    let kf = k as f64;
    let times = traj.times();
    let coef = d * kf * (kf + 1.0) * m;
    let diss: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|s| if coef == 0.0 { 0.0 } else { coef * weighted_dirichlet(s, kf + m - 2.0) })
        .collect();
    let cum = cumulative_trapezoid(&times, &diss);
    let rhs = traj.initial().integral_pow(kf + 1.0);
    let r = traj.snapshots.iter().zip(&cum).map(|(s, c)| ((s.integral_pow(kf + 1.0) + c) - rhs).abs() / rhs).collect();
    let tol = if k == 0 { TOL_MASS } else { slack.for_trajectory(traj) };
    Ok(DiagnosticReport::new(format!("energy_identity_k{k}"), times, r, tol))
}

/// Increments of `L^{−k}∫μ^{k+1} + ∫₀ᵗ L^{−k} D m k(k+1)∫μ^{m+k−2}|∂ₓμ|²`, which is nonincreasing,
/// divided by the step and the initial value.
pub fn weighted_energy_aggdiff(traj: &Trajectory, k: u32, slack: &Slack) -> Result<DiagnosticReport> {
    let (m, d) = diffusion_of(traj)?;
    let pot = match &traj.model {
        Model::AggDiff { potentials, .. } => *potentials,
        _ => PotentialPair::default(),
    };
    let kf = k as f64;
    let times = traj.times();
    let weight: Vec<f64> = times.iter().map(|t| pot.growth_factor(*t).powf(-kf)).collect();
    let coef = d * m * kf * (kf + 1.0);
    let diss: Vec<f64> = traj
        .snapshots
        .iter()
        .zip(&weight)
        .map(|(s, w)| if coef == 0.0 { 0.0 } else { w * coef * weighted_dirichlet(s, m + kf - 2.0) })
        .collect();
    let cum = cumulative_trapezoid(&times, &diss);
    let phi: Vec<f64> =
        traj.snapshots.iter().zip(&weight).zip(&cum).map(|((s, w), c)| w * s.integral_pow(kf + 1.0) + c).collect();
    let mut r = vec![0.0];
    r.extend(phi.windows(2).zip(times.windows(2)).map(|(p, t)| (p[1] - p[0]) / ((t[1] - t[0]) * phi[0])));
    Ok(DiagnosticReport::new(format!("weighted_energy_k{k}"), times, r, slack.for_trajectory(traj)))
}

/// Discrete second derivatives `(μ_{i+1} − 2μ_i + μ_{i−1})/h²` with the minimum of the stencil,
/// including one ghost cell beyond each wall of a line (zero extension).
fn second_differences(f: &DensityField) -> Vec<(f64, f64)> {
    let g = f.grid();
    let h = g.cell_width();
    let v = f.values();
    let n = v.len() as i64;
    let at = |i: i64| -> f64 {
        if g.is_circle() {
            v[i.rem_euclid(n) as usize]
        } else if i < 0 || i >= n {
            0.0
        } else {
            v[i as usize]
        }
    };
    let (lo, hi) = if g.is_circle() { (0, n) } else { (-1, n + 1) };
    (lo..hi)
        .map(|i| {
            let (l, c, r) = (at(i - 1), at(i), at(i + 1));
            ((r - 2.0 * c + l) / (h * h), l.min(c).min(r))
        })
        .collect()
}

/// `(‖∂ₓμ‖_∞, ‖∂ₓ²μ‖_M, ‖|∂ₓ²μ|⁻‖_M, ∫ μ|∂ₓ²μ|²)` from adjacent differences.
pub fn regularity_stats(f: &DensityField) -> (f64, f64, f64, f64) {
    let h = f.grid().cell_width();
    let (dx, neg) = crate::bounds::derivative_stats(f);
    let d2 = second_differences(f);
    let tv = ksum(d2.iter().map(|(s, _)| s.abs())) * h;
    // the stencil minimum vanishes next to vacuum, which removes the kinks at free boundaries
    let weighted = ksum(d2.iter().map(|(s, w)| w * s * s)) * h;
    (dx, tv, neg, weighted)
}

/// Three reports of the regularity estimates for the quadratic porous medium equation.
#[derive(Clone, Debug, PartialEq)]
pub struct AronsonBenilanSuite {
    /// `(‖∂ₓρₜ‖_∞ − ‖∂ₓρ₀‖_∞)/‖∂ₓρ₀‖_∞`.
    pub lipschitz: DiagnosticReport,
    /// `‖∂ₓ²ρₜ‖_M / (2‖|∂ₓ²ρ₀|⁻‖_M) − 1`.
    pub second_derivative: DiagnosticReport,
    /// `∫₀ᵗ∫ρ|∂ₓ²ρ|² / ((t‖∂ₓρ₀‖² + ½‖ρ₀‖)‖|∂ₓ²ρ₀|⁻‖_M) − 1`.
    pub weighted: DiagnosticReport,
}

impl AronsonBenilanSuite {
    pub fn pass(&self) -> bool {
        self.lipschitz.pass && self.second_derivative.pass && self.weighted.pass
    }

    pub fn reports(&self) -> [&DiagnosticReport; 3] {
        [&self.lipschitz, &self.second_derivative, &self.weighted]
    }
}

/// Relative tolerance of the Lipschitz bound.
pub const LIPSCHITZ_TOL: f64 = 1e-6;

/// Checks the three estimates on a quadratic trajectory `∂ₜρ = D ∂ₓₓρ²`.
/// The estimates hold for `D = ½`; for other `D` time is rescaled by `2D`.
pub fn aronson_benilan_suite(traj: &Trajectory, slack: &Slack) -> Result<AronsonBenilanSuite> {
    let (m, d) = diffusion_of(traj)?;
    if m != 2.0 {
        return Err(Error::Invalid(format!("estimates need m = 2, got {m}")));
    }
    if let Model::AggDiff { potentials, .. } = &traj.model {
        if !potentials.is_zero() {
            return Err(Error::Invalid("estimates need vanishing potentials".into()));
        }
    }
    let times = traj.times();
    let stats: Vec<_> = traj.snapshots.iter().map(regularity_stats).collect();
    let (dx0, _, neg0, _) = stats[0];
    let linf0 = traj.initial().max();
    let tol = slack.for_trajectory(traj);
    let lip = stats.iter().map(|s| if dx0 > 0.0 { (s.0 - dx0) / dx0 } else { s.0 }).collect();
    let tv = stats.iter().map(|s| if neg0 > 0.0 { s.1 / (2.0 * neg0) - 1.0 } else { s.1 }).collect();
    let scaled: Vec<f64> = times.iter().map(|t| 2.0 * d * t).collect();
    let lhs = cumulative_trapezoid(&scaled, &stats.iter().map(|s| s.3).collect::<Vec<_>>());
    let w = scaled
        .iter()
        .zip(&lhs)
        .map(|(s, l)| {
            let rhs = (s * dx0 * dx0 + 0.5 * linf0) * neg0;
            if rhs > 0.0 {
                l / rhs - 1.0
            } else {
                *l
            }
        })
        .collect();
    Ok(AronsonBenilanSuite {
        lipschitz: DiagnosticReport::new("ab_lipschitz", times.clone(), lip, LIPSCHITZ_TOL),
        second_derivative: DiagnosticReport::new("ab_second_derivative", times.clone(), tv, tol),
        weighted: DiagnosticReport::new("ab_weighted", times, w, tol),
    })
}

/// `(∫|x|²μₜ)^{1/2} − (∫|x|²μ₀)^{1/2} − √t(ℱ[μ₀] + C⁰_V + C⁰_W)^{1/2}` per snapshot.
pub fn tail_estimate_check(traj: &Trajectory, slack: &Slack) -> Result<DiagnosticReport> {
    let (m, d) = diffusion_of(traj)?;
    let pot = match &traj.model {
        Model::AggDiff { potentials, .. } => *potentials,
        _ => PotentialPair::default(),
    };
    let energy = free_energy(traj.initial(), m, d, &pot) + pot.v_consts.c[0] + pot.w_consts.c[0];
    if energy < 0.0 {
        return Err(Error::ConstraintViolation(format!("energy plus lower constants is negative: {energy}")));
    }
    let m0 = moment(traj.initial(), 2.0).sqrt();
    let r = traj.snapshots.iter().map(|s| moment(s, 2.0).sqrt() - m0 - (s.time() * energy).sqrt()).collect();
    Ok(DiagnosticReport::new("tail_estimate", traj.times(), r, slack.for_trajectory(traj)))
}

/// `‖v^a[μ] − v^b[μ]‖_{L²(μ)}` with edge densities averaged from the adjacent cells.
pub fn velocity_mismatch(f: &DensityField, a: &Model, b: &Model) -> Result<f64> {
    let va = a.velocity(f)?;
    let vb = b.velocity(f)?;
    let v = f.values();
    let n = v.len();
    let circle = f.grid().is_circle();
    let s = ksum(va.iter().zip(&vb).enumerate().map(|(i, (x, y))| {
        let rho = if circle {
            0.5 * (v[(i + n - 1) % n] + v[i])
        } else if i == 0 || i == n {
            0.0
        } else {
            0.5 * (v[i - 1] + v[i])
        };
        rho * (x - y) * (x - y)
    }));
    Ok((s * f.grid().cell_width()).sqrt())
}

/// Right-hand side of the differential inequality along `traj`, with the other equation's
/// velocity evaluated at the same states.
pub fn mismatch_series(traj: &Trajectory, other: &Model) -> Result<Vec<f64>> {
    traj.snapshots.iter().map(|s| velocity_mismatch(s, &traj.model, other)).collect()
}

/// `d/dt W₂(μₜ, νₜ) + λ W₂(μₜ, νₜ) − rhs` at interior snapshots, the derivative by centered
/// differences.
pub fn evi_rate_check(
    mu: &Trajectory,
    nu: &Trajectory,
    lambda: f64,
    rhs: &[f64],
    slack: &Slack,
) -> Result<DiagnosticReport> {
    let k = mu.snapshots.len();
    if k < 3 {
        return Err(Error::InsufficientSnapshots(k));
    }
    if nu.snapshots.len() != k || rhs.len() != k {
        return Err(Error::Invalid("trajectories and rhs series differ in length".into()));
    }
    if mu.grid() != nu.grid() {
        return Err(Error::GridMismatch);
    }
    let times = mu.times();
    if nu.times().iter().zip(&times).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::Invalid("snapshot times differ".into()));
    }
    let w: Vec<f64> =
        mu.snapshots.iter().zip(&nu.snapshots).map(|(a, b)| wasserstein(2.0, a, b)).collect::<Result<_>>()?;
    let r =
        (1..k - 1).map(|j| (w[j + 1] - w[j - 1]) / (times[j + 1] - times[j - 1]) + lambda * w[j] - rhs[j]).collect();
    let tol = slack.eval(mu.grid().cell_width(), mu.step_log.max_dt().max(nu.step_log.max_dt()));
    Ok(DiagnosticReport::new("evi_rate", times[1..k - 1].to_vec(), r, tol))
}

/// `support_radius(μₜ) − √(2R(t))` against one cell width plus slack.
pub fn support_confinement_check(
    traj: &Trajectory,
    forecast: &[f64],
    floor: f64,
    slack: &Slack,
) -> Result<DiagnosticReport> {
    if forecast.len() != traj.snapshots.len() {
        return Err(Error::Invalid("forecast length differs from the snapshot count".into()));
    }
    let r =
        traj.snapshots.iter().zip(forecast).map(|(s, big_r)| support_radius(s, floor) - (2.0 * big_r).sqrt()).collect();
    let tol = traj.grid().cell_width() + slack.for_trajectory(traj);
    Ok(DiagnosticReport::new("support_confinement", traj.times(), r, tol))
}

#[cfg(test)]
mod tests;
