//! Finite-volume time integration of the porous medium, aggregation-diffusion and nonlocal
//! equations in one dimension.
//!
//! Edge arrays follow [`crate::kernels::edge_gradient`]: entry `i` is the edge between cells
//! `i − 1` and `i`, lines carry `n + 1` edges with the walls at both ends, circles carry `n`.

mod initial;
mod potentials;
mod tridiag;

pub use initial::{Barenblatt, InitialSpec};
pub use potentials::{GrowthConstants, Potential, PotentialPair};

use crate::error::{Error, Result};
use crate::kernels::{check_assumptions, ConvolutionStencil, Kernel};
use crate::measures::{ksum, support_radius, DensityField, Grid1D};

/// Safety factor applied to every stability limit.
pub const CFL_SAFETY: f64 = 0.45;

/// Exponent from which the automatic policy switches to backward Euler.
pub const IMPLICIT_FROM_M: f64 = 16.0;

/// Cumulative clipped mass allowed before a run aborts.
pub const CLIP_BUDGET: f64 = 1e-8;

/// Density floor used by the support-escape guard.
pub const ESCAPE_FLOOR: f64 = 1e-9;

/// Time step selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtPolicy {
    /// Explicit steps at the stability limit; backward Euler once `m ≥ 16`.
    AutoExplicit,
    /// Explicit steps of fixed size, rejected when unstable.
    Explicit(f64),
    /// Backward Euler with damped Newton at fixed step.
    Implicit(f64),
}

/// Boundary treatment; must agree with the grid kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    NoFlux,
    Periodic,
}

impl Boundary {
    pub fn of(grid: &Grid1D) -> Self {
        if grid.is_circle() {
            Boundary::Periodic
        } else {
            Boundary::NoFlux
        }
    }
}

/// Porous medium run `∂ₜμ = D ∂ₓₓ μᵐ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PmeConfig {
    /// Exponent `m ≥ 1`; `m = 1` is the heat equation.
    pub m: f64,
    pub grid: Grid1D,
    pub end_time: f64,
    pub dt_policy: DtPolicy,
    pub boundary: Boundary,
    /// Diffusion coefficient `D` (1 for the standard equation).
    pub diffusivity: f64,
    /// Snapshot times in `[0, end_time]`; `0` and `end_time` are always recorded.
    pub output_times: Vec<f64>,
}

impl PmeConfig {
    pub fn new(m: f64, grid: Grid1D, end_time: f64) -> Self {
        Self {
            m,
            grid,
            end_time,
            dt_policy: DtPolicy::AutoExplicit,
            boundary: Boundary::of(&grid),
            diffusivity: 1.0,
            output_times: Vec::new(),
        }
    }

    pub fn with_snapshots(mut self, count: usize) -> Self {
        self.output_times = uniform_times(self.end_time, count);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.m >= 1.0) || !self.m.is_finite() {
            return Err(Error::Range(format!("exponent m must be at least 1, got {}", self.m)));
        }
        if !(self.end_time > 0.0) {
            return Err(Error::Range(format!("end time must be positive, got {}", self.end_time)));
        }
        if !(self.diffusivity > 0.0) {
            return Err(Error::Range(format!("diffusivity must be positive, got {}", self.diffusivity)));
        }
        if self.boundary != Boundary::of(&self.grid) {
            return Err(Error::Invalid("boundary does not match the grid kind".into()));
        }
        Ok(())
    }
}

/// `count` equally spaced times from 0 to `end` inclusive.
pub fn uniform_times(end: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count).map(|i| end * i as f64 / (count - 1) as f64).collect()
}

/// Aggregation-diffusion run `∂ₜμ = D ∂ₓₓ μᵐ + ∂ₓ(μ ∂ₓ(V + W ∗ μ))`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggDiffConfig {
    pub pme: PmeConfig,
    pub potentials: PotentialPair,
}

/// Nonlocal run `∂ₜμ = ∂ₓ(μ ∂ₓ(μ ∗ ω_ε))`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlocalConfig {
    /// Unscaled kernel; the run uses `ω_ε`.
    pub kernel: Kernel,
    pub epsilon: f64,
    pub grid: Grid1D,
    pub end_time: f64,
    pub output_times: Vec<f64>,
}

/// Per-run step statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepLog {
    pub dts: Vec<f64>,
    /// Largest `dt / dt_stable` over explicit steps.
    pub max_cfl_ratio: f64,
    pub clipped_mass: f64,
    pub max_newton_iters: usize,
    pub implicit: bool,
}

impl StepLog {
    pub fn steps(&self) -> usize {
        self.dts.len()
    }

    pub fn max_dt(&self) -> f64 {
        self.dts.iter().copied().fold(0.0, f64::max)
    }
}

/// Which equation produced a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Pme { m: f64, diffusivity: f64 },
    AggDiff { m: f64, diffusivity: f64, potentials: PotentialPair },
    Nonlocal { kernel: Kernel },
}

impl Model {
    pub fn exponent(&self) -> Option<f64> {
        match self {
            Model::Pme { m, .. } | Model::AggDiff { m, .. } => Some(*m),
            Model::Nonlocal { .. } => None,
        }
    }

    pub fn diffusivity(&self) -> f64 {
        match self {
            Model::Pme { diffusivity, .. } | Model::AggDiff { diffusivity, .. } => *diffusivity,
            Model::Nonlocal { .. } => 0.0,
        }
    }

    /// Edge velocity of this model at the state `f`, in the layout of the trajectory samples.
    pub fn velocity(&self, f: &DensityField) -> Result<Vec<f64>> {
        let grid = f.grid();
        match self {
            Model::Pme { m, diffusivity } => Ok(pme_velocity(grid, f.values(), *m, *diffusivity)),
            Model::AggDiff { m, diffusivity, potentials } => {
                let adv = advective_velocity(grid, f.values(), potentials, f.time())?;
                let dif = pme_velocity(grid, f.values(), *m, *diffusivity);
                Ok(adv.iter().zip(dif).map(|(a, b)| a + b).collect())
            }
            Model::Nonlocal { kernel } => {
                let stencil = ConvolutionStencil::new(grid, kernel)?;
                Ok(stencil.apply_derivative(f.values()).iter().map(|g| -g).collect())
            }
        }
    }
}

/// Snapshots of a run with the edge velocities at each snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<DensityField>,
    pub velocity_samples: Vec<Vec<f64>>,
    pub step_log: StepLog,
    pub model: Model,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid1D {
        self.snapshots[0].grid()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    pub fn last(&self) -> &DensityField {
        self.snapshots.last().expect("trajectory has snapshots")
    }

    pub fn initial(&self) -> &DensityField {
        &self.snapshots[0]
    }

    /// Checks snapshot ordering and the density invariants at tolerance `tol_mass`.
    pub fn check_invariants(&self, tol_mass: f64) -> bool {
        self.snapshots.windows(2).all(|w| w[1].time() > w[0].time())
            && self.snapshots.iter().all(|s| s.is_normalized(tol_mass))
    }
}

/// Ingredients of the stability limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityModel {
    /// `(m, D)` of the local diffusion, absent for purely nonlocal transport.
    pub diffusion: Option<(f64, f64)>,
    /// `max |v|` of the advective part.
    pub max_speed: f64,
    /// `Σ|ΔW|` of a nonlocal stencil, see [`ConvolutionStencil::curvature_l1`].
    pub nonlocal_curvature: Option<f64>,
}

/// `dt = 0.45·min(Δx²/(2 D m max μ^{m−1}), Δx/max|v|, 2Δx²/(max μ·Σ|ΔW|))`.
pub fn cfl_dt(state: &DensityField, model: &StabilityModel) -> Result<f64> {
    let umax = state.max();
    if !(umax > 0.0) {
        return Err(Error::DegenerateState("maximum density is zero".into()));
    }
    let h = state.grid().cell_width();
    let mut dt = f64::INFINITY;
    if let Some((m, d)) = model.diffusion {
        dt = dt.min(h * h / (2.0 * d * m * umax.powf(m - 1.0)));
    }
    if model.max_speed > 0.0 {
        dt = dt.min(h / model.max_speed);
    }
    if let Some(curv) = model.nonlocal_curvature {
        if curv > 0.0 {
            dt = dt.min(2.0 * h * h / (umax * curv));
        }
    }
    if !dt.is_finite() {
        return Err(Error::DegenerateState("no stability limit applies".into()));
    }
    Ok(CFL_SAFETY * dt)
}

fn powm(x: f64, m: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if m == 1.0 {
        x
    } else if m == 2.0 {
        x * x
    } else {
        x.powf(m)
    }
}

/// Diffusive edge fluxes `F_i = D (u_i − u_{i−1})/h` of `u = μᵐ`.
fn diffusion_flux(grid: &Grid1D, mu: &[f64], m: f64, d: f64, flux: &mut [f64]) {
    let n = mu.len();
    let h = grid.cell_width();
    let u: Vec<f64> = mu.iter().map(|x| powm(*x, m)).collect();
    if grid.is_circle() {
        for i in 0..n {
            flux[i] = d * (u[i] - u[(i + n - 1) % n]) / h;
        }
    } else {
        flux[0] = 0.0;
        flux[n] = 0.0;
        for i in 1..n {
            flux[i] = d * (u[i] - u[i - 1]) / h;
        }
    }
}

/// Upwind edge fluxes of `μ v`, sign convention: positive flux moves mass to the right.
fn upwind_flux(grid: &Grid1D, mu: &[f64], v: &[f64], flux: &mut [f64]) {
    let n = mu.len();
    let edge = |i: usize, left: f64, right: f64| {
        let vi = v[i];
        if vi > 0.0 {
            vi * left
        } else {
            vi * right
        }
    };
    if grid.is_circle() {
        for i in 0..n {
            flux[i] = edge(i, mu[(i + n - 1) % n], mu[i]);
        }
    } else {
        flux[0] = 0.0;
        flux[n] = 0.0;
        for i in 1..n {
            flux[i] = edge(i, mu[i - 1], mu[i]);
        }
    }
}

/// `μ_i ← μ_i + sign·(dt/h)(F_{i+1} − F_i)`.
fn apply_flux(grid: &Grid1D, mu: &mut [f64], flux: &[f64], dt: f64, sign: f64) {
    let n = mu.len();
    let r = sign * dt / grid.cell_width();
    for i in 0..n {
        let right = if grid.is_circle() { flux[(i + 1) % n] } else { flux[i + 1] };
        mu[i] += r * (right - flux[i]);
    }
}

fn n_edges(grid: &Grid1D) -> usize {
    grid.n_cells() + usize::from(!grid.is_circle())
}

/// Clips negative undershoots to zero, restores the mass and accumulates the clipped amount.
fn clip(grid: &Grid1D, mu: &mut [f64], mass: f64, log: &mut StepLog) -> Result<()> {
    let h = grid.cell_width();
    let neg = ksum(mu.iter().filter(|v| **v < 0.0).map(|v| -v * h));
    if neg > 0.0 {
        mu.iter_mut().for_each(|v| *v = v.max(0.0));
        let now = ksum(mu.iter().copied()) * h;
        mu.iter_mut().for_each(|v| *v *= mass / now);
        log.clipped_mass += neg;
        if log.clipped_mass > CLIP_BUDGET {
            return Err(Error::ClippedMass(log.clipped_mass));
        }
    }
    Ok(())
}

fn escape_guard(grid: &Grid1D, mu: &[f64], t: f64) -> Result<()> {
    if grid.is_circle() {
        return Ok(());
    }
    let mid = 0.5 * (grid.left() + grid.right());
    let half = 0.5 * grid.length();
    let limit = 0.9 * half;
    let radius = mu
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > ESCAPE_FLOOR)
        .map(|(i, _)| (grid.center(i) - mid).abs())
        .fold(0.0, f64::max);
    if radius >= limit {
        return Err(Error::SupportEscape { radius, limit, t });
    }
    Ok(())
}

fn check_initial(initial: &DensityField, grid: &Grid1D) -> Result<()> {
    if initial.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let mass = initial.mass();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::Invalid(format!("initial density has mass {mass}, expected 1")));
    }
    if !grid.is_circle() {
        let mid = 0.5 * (grid.left() + grid.right());
        let half = 0.5 * grid.length();
        let radius = initial
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| (grid.center(i) - mid).abs())
            .fold(0.0, f64::max);
        if radius >= 0.8 * half {
            return Err(Error::SupportEscape { radius, limit: 0.8 * half, t: 0.0 });
        }
    }
    Ok(())
}

fn snapshot_schedule(times: &[f64], end: f64) -> Vec<f64> {
    let mut out: Vec<f64> = times.iter().copied().filter(|t| *t > 0.0 && *t < end).collect();
    out.push(end);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// PME velocity `−F/μ` at edges with the arithmetic edge density; zero across vacuum.
fn pme_velocity(grid: &Grid1D, mu: &[f64], m: f64, d: f64) -> Vec<f64> {
    let n = mu.len();
    let mut flux = vec![0.0; n_edges(grid)];
    diffusion_flux(grid, mu, m, d, &mut flux);
    flux.iter()
        .enumerate()
        .map(|(i, f)| {
            let (l, r) = if grid.is_circle() {
                (mu[(i + n - 1) % n], mu[i])
            } else if i == 0 || i == n {
                return 0.0;
            } else {
                (mu[i - 1], mu[i])
            };
            let rho = 0.5 * (l + r);
            if rho > 0.0 {
                -f / rho
            } else {
                0.0
            }
        })
        .collect()
}

/// Backward-Euler step `μ − dt·D·Δ_h(μᵐ) = μⁿ` solved by damped Newton.
fn implicit_step(grid: &Grid1D, prev: &[f64], m: f64, d: f64, dt: f64, t: f64) -> Result<(Vec<f64>, usize)> {
    const MAX_ITERS: usize = 60;
    let n = prev.len();
    let h = grid.cell_width();
    let r = d * dt / (h * h);
    let circle = grid.is_circle();
    let left = |i: usize| {
        if i > 0 {
            Some(i - 1)
        } else if circle {
            Some(n - 1)
        } else {
            None
        }
    };
    let right = |i: usize| {
        if i + 1 < n {
            Some(i + 1)
        } else if circle {
            Some(0)
        } else {
            None
        }
    };
    let residual = |mu: &[f64]| -> Vec<f64> {
        let u: Vec<f64> = mu.iter().map(|x| powm(*x, m)).collect();
        (0..n)
            .map(|i| {
                let lap: f64 = [left(i), right(i)].iter().flatten().map(|j| u[*j] - u[i]).sum();
                mu[i] - prev[i] - r * lap
            })
            .collect()
    };
    let norm = |v: &[f64]| v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let tol = 1e-13 * norm(prev).max(1e-300);
    let mut mu = prev.to_vec();
    let mut res = residual(&mu);
    let mut rn = norm(&res);
    for iter in 0..MAX_ITERS {
        if rn <= tol {
            return Ok((mu, iter));
        }
        // J = I − r L diag(φ'(μ)), φ(μ) = max(μ, 0)ᵐ
        let dphi: Vec<f64> = mu
            .iter()
            .map(|x| {
                if m == 1.0 {
                    1.0
                } else if *x > 0.0 {
                    m * powm(*x, m - 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let mut a = vec![0.0; n];
        let mut b = vec![1.0; n];
        let mut c = vec![0.0; n];
        for i in 0..n {
            if let Some(j) = left(i) {
                a[i] = -r * dphi[j];
                b[i] += r * dphi[i];
            }
            if let Some(j) = right(i) {
                c[i] = -r * dphi[j];
                b[i] += r * dphi[i];
            }
        }
        let rhs: Vec<f64> = res.iter().map(|x| -x).collect();
        let delta = if circle { tridiag::solve_cyclic(&a, &b, &c, &rhs) } else { tridiag::solve(&a, &b, &c, &rhs) };
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = mu.iter().zip(&delta).map(|(x, dx)| x + lambda * dx).collect();
            let tres = residual(&trial);
            let tn = norm(&tres);
            if tn < rn || lambda < 1e-4 {
                mu = trial;
                res = tres;
                rn = tn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if rn <= tol {
        Ok((mu, MAX_ITERS))
    } else {
        Err(Error::NonConvergedNewton { t, residual: rn })
    }
}

/// Integrates the porous medium equation with no-flux walls or periodic boundary.
pub fn solve_pme(cfg: &PmeConfig, initial: &DensityField) -> Result<Trajectory> {
    cfg.validate()?;
    check_initial(initial, &cfg.grid)?;
    let grid = cfg.grid;
    let (m, d) = (cfg.m, cfg.diffusivity);
    let model = StabilityModel { diffusion: Some((m, d)), max_speed: 0.0, nonlocal_curvature: None };
    let implicit_dt = match cfg.dt_policy {
        DtPolicy::Implicit(dt) => Some(dt),
        DtPolicy::AutoExplicit if m >= IMPLICIT_FROM_M => {
            let base = cfl_dt(initial, &model)?;
            Some((10.0 * base).min(cfg.end_time / 100.0))
        }
        _ => None,
    };
    if let Some(dt) = implicit_dt {
        if !(dt > 0.0) {
            return Err(Error::Range(format!("implicit step must be positive, got {dt}")));
        }
    }
    let mass = initial.mass();
    let mut mu = initial.values().to_vec();
    let mut t = 0.0;
    let mut log = StepLog { implicit: implicit_dt.is_some(), ..Default::default() };
    let mut snaps = vec![initial.clone().with_time(0.0)];
    let mut vels = vec![pme_velocity(&grid, &mu, m, d)];
    let mut flux = vec![0.0; n_edges(&grid)];
    for target in snapshot_schedule(&cfg.output_times, cfg.end_time) {
        while t < target {
            let remaining = target - t;
            let state = DensityField::new(grid, mu.clone(), t)?;
            let dt = match (implicit_dt, cfg.dt_policy) {
                (Some(dt), _) => dt.min(remaining),
                (None, DtPolicy::Explicit(dt)) => {
                    let stable = cfl_dt(&state, &model)? / CFL_SAFETY;
                    if dt > stable {
                        return Err(Error::CflViolation { dt, stable });
                    }
                    log.max_cfl_ratio = log.max_cfl_ratio.max(dt / stable);
                    dt.min(remaining)
                }
                (None, _) => {
                    let dt = cfl_dt(&state, &model)?;
                    log.max_cfl_ratio = log.max_cfl_ratio.max(CFL_SAFETY);
                    // avoid a sliver step just before the target
                    if remaining < 1.5 * dt {
                        if remaining > dt {
                            0.5 * remaining
                        } else {
                            remaining
                        }
                    } else {
                        dt
                    }
                }
            };
            if implicit_dt.is_some() {
                let (next, iters) = implicit_step(&grid, &mu, m, d, dt, t + dt)?;
                mu = next;
                log.max_newton_iters = log.max_newton_iters.max(iters);
            } else {
                diffusion_flux(&grid, &mu, m, d, &mut flux);
                apply_flux(&grid, &mut mu, &flux, dt, 1.0);
            }
            clip(&grid, &mut mu, mass, &mut log)?;
            t = if dt == remaining { target } else { t + dt };
            log.dts.push(dt);
            escape_guard(&grid, &mu, t)?;
        }
        snaps.push(DensityField::new(grid, mu.clone(), t)?);
        vels.push(pme_velocity(&grid, &mu, m, d));
    }
    Ok(Trajectory { snapshots: snaps, velocity_samples: vels, step_log: log, model: Model::Pme { m, diffusivity: d } })
}

/// Edge coordinates (line: all `n + 1` edges, circle: the `n` left edges).
fn edge_points(grid: &Grid1D) -> Vec<f64> {
    (0..n_edges(grid)).map(|i| grid.edge(i)).collect()
}

fn advective_velocity(grid: &Grid1D, mu: &[f64], pot: &PotentialPair, t: f64) -> Result<Vec<f64>> {
    let f = DensityField::new(*grid, mu.to_vec(), t)?;
    let mut v = pot.velocity(&f, &edge_points(grid));
    if !grid.is_circle() {
        let n = mu.len();
        v[0] = 0.0;
        v[n] = 0.0;
    }
    Ok(v)
}

/// Integrates the aggregation-diffusion equation by Strang splitting
/// (half diffusion, full upwind advection, half diffusion).
/// Vanishing potentials delegate to [`solve_pme`] so both produce identical trajectories.
pub fn solve_aggdiff(cfg: &AggDiffConfig, initial: &DensityField) -> Result<Trajectory> {
    let pot = cfg.potentials;
    if pot.is_zero() {
        let mut traj = solve_pme(&cfg.pme, initial)?;
        traj.model = Model::AggDiff { m: cfg.pme.m, diffusivity: cfg.pme.diffusivity, potentials: pot };
        return Ok(traj);
    }
    let pcfg = &cfg.pme;
    pcfg.validate()?;
    check_initial(initial, &pcfg.grid)?;
    pot.validate(&pcfg.grid)?;
    let grid = pcfg.grid;
    let (m, d) = (pcfg.m, pcfg.diffusivity);
    let mass = initial.mass();
    let mut mu = initial.values().to_vec();
    let mut t = 0.0;
    let mut log = StepLog::default();
    let total_velocity = |mu: &[f64], t: f64| -> Result<Vec<f64>> {
        let adv = advective_velocity(&grid, mu, &pot, t)?;
        let dif = pme_velocity(&grid, mu, m, d);
        Ok(adv.iter().zip(dif).map(|(a, b)| a + b).collect())
    };
    let mut snaps = vec![initial.clone().with_time(0.0)];
    let mut vels = vec![total_velocity(&mu, 0.0)?];
    let mut flux = vec![0.0; n_edges(&grid)];
    for target in snapshot_schedule(&pcfg.output_times, pcfg.end_time) {
        while t < target {
            let remaining = target - t;
            let state = DensityField::new(grid, mu.clone(), t)?;
            let v = advective_velocity(&grid, &mu, &pot, t)?;
            let vmax = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            let model = StabilityModel { diffusion: Some((m, d)), max_speed: vmax, nonlocal_curvature: None };
            let stable = cfl_dt(&state, &model)?;
            let dt = match pcfg.dt_policy {
                DtPolicy::Explicit(dt) => {
                    if dt > stable / CFL_SAFETY {
                        return Err(Error::CflViolation { dt, stable: stable / CFL_SAFETY });
                    }
                    dt.min(remaining)
                }
                _ => {
                    if remaining < 1.5 * stable {
                        if remaining > stable {
                            0.5 * remaining
                        } else {
                            remaining
                        }
                    } else {
                        stable
                    }
                }
            };
            log.max_cfl_ratio = log.max_cfl_ratio.max(dt / (stable / CFL_SAFETY));
            diffusion_flux(&grid, &mu, m, d, &mut flux);
            apply_flux(&grid, &mut mu, &flux, 0.5 * dt, 1.0);
            clip(&grid, &mut mu, mass, &mut log)?;
            let v = advective_velocity(&grid, &mu, &pot, t)?;
            upwind_flux(&grid, &mu, &v, &mut flux);
            apply_flux(&grid, &mut mu, &flux, dt, -1.0);
            clip(&grid, &mut mu, mass, &mut log)?;
            diffusion_flux(&grid, &mu, m, d, &mut flux);
            apply_flux(&grid, &mut mu, &flux, 0.5 * dt, 1.0);
            clip(&grid, &mut mu, mass, &mut log)?;
            t = if dt == remaining { target } else { t + dt };
            log.dts.push(dt);
            escape_guard(&grid, &mu, t)?;
        }
        snaps.push(DensityField::new(grid, mu.clone(), t)?);
        vels.push(total_velocity(&mu, t)?);
    }
    Ok(Trajectory {
        snapshots: snaps,
        velocity_samples: vels,
        step_log: log,
        model: Model::AggDiff { m, diffusivity: d, potentials: pot },
    })
}

/// Integrates the nonlocal equation by conservative upwind transport with edge velocity
/// `−∂ₓ(μ ∗ ω_ε)`.
pub fn solve_nonlocal(cfg: &NonlocalConfig, initial: &DensityField) -> Result<Trajectory> {
    let grid = cfg.grid;
    let h = grid.cell_width();
    if !(cfg.epsilon >= 2.0 * h) {
        return Err(Error::KernelResolution { epsilon: cfg.epsilon, cell_width: h });
    }
    if !(cfg.end_time > 0.0) {
        return Err(Error::Range(format!("end time must be positive, got {}", cfg.end_time)));
    }
    let report = check_assumptions(&cfg.kernel);
    if !report.all_pass() {
        return Err(Error::Invalid(format!("kernel fails its assumptions: {report:?}")));
    }
    check_initial(initial, &grid)?;
    let kernel = crate::kernels::rescale(&cfg.kernel, cfg.epsilon)?;
    let stencil = ConvolutionStencil::new(&grid, &kernel)?;
    let curvature = stencil.curvature_l1();
    let mass = initial.mass();
    let mut mu = initial.values().to_vec();
    let mut t = 0.0;
    let mut log = StepLog::default();
    let velocity = |mu: &[f64]| -> Vec<f64> { stencil.apply_derivative(mu).iter().map(|g| -g).collect() };
    let mut snaps = vec![initial.clone().with_time(0.0)];
    let mut vels = vec![velocity(&mu)];
    let mut flux = vec![0.0; n_edges(&grid)];
    for target in snapshot_schedule(&cfg.output_times, cfg.end_time) {
        while t < target {
            let remaining = target - t;
            let state = DensityField::new(grid, mu.clone(), t)?;
            let v = velocity(&mu);
            let vmax = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            let model = StabilityModel { diffusion: None, max_speed: vmax, nonlocal_curvature: Some(curvature) };
            let stable = cfl_dt(&state, &model)?;
            let dt = if remaining < 1.5 * stable {
                if remaining > stable {
                    0.5 * remaining
                } else {
                    remaining
                }
            } else {
                stable
            };
            log.max_cfl_ratio = log.max_cfl_ratio.max(dt / (stable / CFL_SAFETY));
            upwind_flux(&grid, &mu, &v, &mut flux);
            apply_flux(&grid, &mut mu, &flux, dt, -1.0);
            clip(&grid, &mut mu, mass, &mut log)?;
            t = if dt == remaining { target } else { t + dt };
            log.dts.push(dt);
            escape_guard(&grid, &mu, t)?;
        }
        snaps.push(DensityField::new(grid, mu.clone(), t)?);
        vels.push(velocity(&mu));
    }
    Ok(Trajectory { snapshots: snaps, velocity_samples: vels, step_log: log, model: Model::Nonlocal { kernel } })
}

/// Interaction energy `½ ∫ μ (μ ∗ ω_ε)` on the grid of `f`.
pub fn nonlocal_energy(f: &DensityField, kernel: &Kernel) -> Result<f64> {
    let c = ConvolutionStencil::new(f.grid(), kernel)?.apply(f.values());
    Ok(0.5 * ksum(f.values().iter().zip(&c).map(|(a, b)| a * b)) * f.grid().cell_width())
}

/// Free energy `∫ D μᵐ/(m−1) + ∫ V μ + ½ ∫ (W ∗ μ) μ` (`∫ μ log μ` when `m = 1`).
pub fn free_energy(f: &DensityField, m: f64, diffusivity: f64, pot: &PotentialPair) -> f64 {
    let internal = if m == 1.0 {
        diffusivity * ksum(f.values().iter().map(|v| if *v > 0.0 { v * v.ln() } else { 0.0 })) * f.grid().cell_width()
    } else {
        diffusivity * f.integral_pow(m) / (m - 1.0)
    };
    internal + f.integrate(|x| pot.v.value(x)) + 0.5 * pot.w.interaction_energy(f)
}

/// Support radius of `f` above the escape floor.
pub fn active_radius(f: &DensityField) -> f64 {
    support_radius(f, ESCAPE_FLOOR)
}

#[cfg(test)]
mod tests;
