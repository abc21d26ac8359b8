//! Characteristic flows of sampled velocity fields, push-forwards and the Trotter-Kato gap.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{ksum, moment, DensityField, Grid1D};
use crate::transport::deposit;

/// Outward wall speed tolerated (relative to `max(1, sup|v|)`) before a trajectory is an escape.
pub const WALL_TOL: f64 = 1e-8;

/// Time-dependent velocity sampled at cell centers, linear in time between nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityFieldSample {
    grid: Grid1D,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl VelocityFieldSample {
    pub fn new(grid: Grid1D, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Invalid(format!("{} time nodes for {} slices", times.len(), values.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("time nodes must increase".into()));
        }
        if values.iter().any(|v| v.len() != grid.n_cells()) {
            return Err(Error::GridMismatch);
        }
        if values.iter().flatten().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("velocity samples must be finite".into()));
        }
        Ok(Self { grid, times, values })
    }

    /// Samples `v(t, x)` at the given time nodes.
    pub fn from_fn(grid: Grid1D, times: Vec<f64>, v: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let xs = grid.centers();
        let values = times.iter().map(|t| xs.iter().map(|x| v(*t, *x)).collect()).collect();
        Self::new(grid, times, values)
    }

    /// Time-independent field `v(x)`.
    pub fn autonomous(grid: Grid1D, v: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, vec![0.0], |_, x| v(x))
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Pointwise sum of two fields on the same grid and time nodes.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid || self.times != other.times {
            return Err(Error::GridMismatch);
        }
        let values =
            self.values.iter().zip(&other.values).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        Self::new(self.grid, self.times.clone(), values)
    }

    /// Slice at time `t`, interpolated linearly and held constant outside the nodes.
    pub fn slice_at(&self, t: f64) -> Vec<f64> {
        let (k, w) = self.bracket(t);
        if w == 0.0 {
            return self.values[k].clone();
        }
        self.values[k].iter().zip(&self.values[k + 1]).map(|(a, b)| (1.0 - w) * a + w * b).collect()
    }

    fn bracket(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 1, 0.0);
        }
        let k = self.times.partition_point(|s| *s <= t) - 1;
        (k, (t - self.times[k]) / (self.times[k + 1] - self.times[k]))
    }

    fn space(&self, v: &[f64], x: f64) -> f64 {
        let g = &self.grid;
        let h = g.cell_width();
        let n = v.len();
        if n == 1 {
            return v[0];
        }
        if g.is_circle() {
            let s = (g.wrap(x) - g.left()) / h - 0.5;
            let k = s.floor();
            let w = s - k;
            let i = (k as i64).rem_euclid(n as i64) as usize;
            return (1.0 - w) * v[i] + w * v[(i + 1) % n];
        }
        // linear inside the centers, linear extrapolation out to the walls
        let s = ((x - g.left()) / h - 0.5).clamp(-0.5, n as f64 - 0.5);
        let k = s.floor().clamp(0.0, (n - 2) as f64);
        let w = s - k;
        let i = k as usize;
        (1.0 - w) * v[i] + w * v[i + 1]
    }

    /// `v(t, x)` with linear interpolation in both variables.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let (k, w) = self.bracket(t);
        let a = self.space(&self.values[k], x);
        if w == 0.0 {
            a
        } else {
            (1.0 - w) * a + w * self.space(&self.values[k + 1], x)
        }
    }

    /// `‖v(t)‖_BL` of the slice at `t`.
    pub fn bl_norm_at(&self, t: f64) -> f64 {
        let v = self.slice_at(t);
        let h = self.grid.cell_width();
        let wrap = if self.grid.is_circle() && v.len() > 1 { (v[0] - v[v.len() - 1]).abs() / h } else { 0.0 };
        sup(&v) + lipschitz(&v, h).max(wrap)
    }

    /// `∫ₛᵗ ‖v(τ)‖_BL dτ`, composite trapezoid on every node interval.
    pub fn bl_integral(&self, s: f64, t: f64) -> f64 {
        const SUB: usize = 16;
        let nodes = breakpoints(&self.times, s, t);
        ksum(
            nodes
                .windows(2)
                .flat_map(|w| {
                    let d = (w[1] - w[0]) / SUB as f64;
                    (0..SUB).map(move |j| (w[0] + j as f64 * d, d))
                })
                .map(|(a, d)| 0.5 * d * (self.bl_norm_at(a) + self.bl_norm_at(a + d))),
        )
    }

    /// `‖v‖_{L¹(s,t;L^∞)}`.
    pub fn sup_integral(&self, s: f64, t: f64) -> f64 {
        const SUB: usize = 16;
        let nodes = breakpoints(&self.times, s, t);
        ksum(
            nodes
                .windows(2)
                .flat_map(|w| {
                    let d = (w[1] - w[0]) / SUB as f64;
                    (0..SUB).map(move |j| (w[0] + j as f64 * d, d))
                })
                .map(|(a, d)| 0.5 * d * (sup(&self.slice_at(a)) + sup(&self.slice_at(a + d)))),
        )
    }

    fn sup_abs(&self) -> f64 {
        self.values.iter().map(|v| sup(v)).fold(0.0, f64::max)
    }

    fn max_bl(&self) -> f64 {
        self.times.iter().map(|t| self.bl_norm_at(*t)).fold(0.0, f64::max)
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `max|v| + max|vᵢ₊₁ − vᵢ|/h` over adjacent samples.
pub fn bl_norm(v: &[f64], spacing: f64) -> f64 {
    sup(v) + lipschitz(v, spacing)
}

fn lipschitz(v: &[f64], spacing: f64) -> f64 {
    v.windows(2).fold(0.0_f64, |m, w| m.max((w[1] - w[0]).abs() / spacing))
}

fn breakpoints(times: &[f64], s: f64, t: f64) -> Vec<f64> {
    let mut out = vec![s];
    out.extend(times.iter().copied().filter(|x| *x > s && *x < t));
    out.push(t);
    out
}

/// Sampled characteristic map `x ↦ X(s, t, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMap {
    pub s: f64,
    pub t: f64,
    pub seeds: Vec<f64>,
    /// `X(s, t, x)` inside the domain (wrapped on a circle).
    pub positions: Vec<f64>,
    /// Unwrapped displacement `X(s, t, x) − x`.
    pub displacement: Vec<f64>,
}

impl FlowMap {
    /// Map with prescribed unwrapped images.
    pub fn from_images(grid: &Grid1D, s: f64, t: f64, seeds: Vec<f64>, images: &[f64]) -> Result<Self> {
        if images.len() != seeds.len() {
            return Err(Error::SeedMismatch);
        }
        let displacement = images.iter().zip(&seeds).map(|(y, x)| y - x).collect();
        let positions = images.iter().map(|y| grid.wrap(y.clamp(grid_lo(grid), grid_hi(grid)))).collect();
        Ok(Self { s, t, seeds, positions, displacement })
    }

    /// Unwrapped images `x + displacement`.
    pub fn images(&self) -> Vec<f64> {
        self.seeds.iter().zip(&self.displacement).map(|(x, d)| x + d).collect()
    }
}

fn grid_lo(g: &Grid1D) -> f64 {
    if g.is_circle() {
        f64::NEG_INFINITY
    } else {
        g.left()
    }
}

fn grid_hi(g: &Grid1D) -> f64 {
    if g.is_circle() {
        f64::INFINITY
    } else {
        g.right()
    }
}

/// Default step count: at least 16 and about 64 steps per unit of `∫‖v‖_BL`.
fn default_steps(v: &VelocityFieldSample, s: f64, t: f64) -> usize {
    let work = (t - s) * v.max_bl();
    (64.0 * work).ceil().max(16.0) as usize
}

/// Integrates `dX/dτ = v(τ, X)` from `s` to `t` for every seed with the default resolution.
pub fn integrate_flow(v: &VelocityFieldSample, s: f64, t: f64, seeds: &[f64]) -> Result<FlowMap> {
    integrate_flow_steps(v, s, t, seeds, default_steps(v, s, t))
}

/// Classical RK4 with about `steps` steps, aligned with the time nodes of `v`.
pub fn integrate_flow_steps(v: &VelocityFieldSample, s: f64, t: f64, seeds: &[f64], steps: usize) -> Result<FlowMap> {
    if !(t >= s) {
        return Err(Error::Range(format!("flow needs t ≥ s, got s = {s}, t = {t}")));
    }
    let grid = *v.grid();
    let tol = WALL_TOL * v.sup_abs().max(1.0);
    let nodes = breakpoints(v.times(), s, t);
    let span = t - s;
    let plan: Vec<(f64, usize, f64)> = nodes
        .windows(2)
        .map(|w| {
            let n = if span > 0.0 { ((steps as f64) * (w[1] - w[0]) / span).ceil().max(1.0) as usize } else { 0 };
            (w[0], n, if n > 0 { (w[1] - w[0]) / n as f64 } else { 0.0 })
        })
        .collect();
    let images = seeds
        .par_iter()
        .map(|x0| {
            let mut x = *x0;
            for &(a, n, dt) in &plan {
                for j in 0..n {
                    x = rk4_step(v, &grid, a + j as f64 * dt, x, dt, tol)?;
                }
            }
            Ok(x)
        })
        .collect::<Result<Vec<f64>>>()?;
    FlowMap::from_images(&grid, s, t, seeds.to_vec(), &images)
}

fn rk4_step(v: &VelocityFieldSample, grid: &Grid1D, t: f64, x: f64, dt: f64, tol: f64) -> Result<f64> {
    let f = |tau: f64, y: f64| -> Result<f64> {
        let y = confine(v, grid, tau, y, tol)?;
        Ok(v.eval(tau, y))
    };
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)?;
    let k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)?;
    let k4 = f(t + dt, x + dt * k3)?;
    confine(v, grid, t + dt, x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), tol)
}

/// Clamps to the walls of a line when the outward wall speed is within `tol`, else escapes.
fn confine(v: &VelocityFieldSample, grid: &Grid1D, t: f64, x: f64, tol: f64) -> Result<f64> {
    if grid.is_circle() {
        return Ok(x);
    }
    let (lo, hi) = (grid.left(), grid.right());
    if x >= lo && x <= hi {
        return Ok(x);
    }
    let wall = if x < lo { lo } else { hi };
    let outward = if x < lo { -v.eval(t, lo) } else { v.eval(t, hi) };
    if outward > tol {
        return Err(Error::DomainEscape { x, violation: outward });
    }
    Ok(wall)
}

/// `X(s, t, ·)♯μ` with exact mass conservation. Seeds at the cell edges spread each cell over
/// its image interval; seeds at the centers split each cell between the two nearest cells.
pub fn push_forward(f: &DensityField, flow: &FlowMap) -> Result<DensityField> {
    let grid = *f.grid();
    let n = grid.n_cells();
    let h = grid.cell_width();
    let edges = grid.edges();
    let centers = grid.centers();
    let same = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * h);
    let images = flow.images();
    let mut acc = vec![0.0; n];
    if same(&flow.seeds, &edges) {
        for (i, m) in f.values().iter().enumerate() {
            if *m > 0.0 {
                deposit(&grid, &mut acc, images[i], images[i + 1], m * h);
            }
        }
    } else if same(&flow.seeds, &centers) {
        for (i, m) in f.values().iter().enumerate() {
            if *m > 0.0 {
                cloud_in_cell(&grid, &mut acc, images[i], m * h);
            }
        }
    } else {
        return Err(Error::SeedMismatch);
    }
    DensityField::new(grid, acc, flow.t)
}

fn cloud_in_cell(grid: &Grid1D, acc: &mut [f64], x: f64, mass: f64) {
    let n = grid.n_cells();
    let h = grid.cell_width();
    let x = if grid.is_circle() { grid.wrap(x) } else { x.clamp(grid.left(), grid.right()) };
    let s = (x - grid.left()) / h - 0.5;
    let k = s.floor();
    let w = s - k;
    let (i, j) = if grid.is_circle() {
        let i = (k as i64).rem_euclid(n as i64) as usize;
        (i, (i + 1) % n)
    } else {
        let i = (k.max(-1.0) as i64).clamp(-1, n as i64 - 1);
        ((i.max(0)) as usize, ((i + 1).min(n as i64 - 1)) as usize)
    };
    acc[i] += (1.0 - w) * mass / h;
    acc[j] += w * mass / h;
}

/// Moment bound `2ᵖ∫|x|ᵖdμ₀ + 2ᵖ‖v‖ᵖ_{L¹L^∞}` for the push-forward along `v` over `[s, t]`.
pub fn moment_bound(f0: &DensityField, v: &VelocityFieldSample, s: f64, t: f64, p: f64) -> f64 {
    2f64.powf(p) * (moment(f0, p) + v.sup_integral(s, t).powf(p))
}

/// Composition gap of two flows against its bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrotterKatoGap {
    pub h: f64,
    /// `max |X^{1+2} − X¹ ∘ X²|` over the seeds.
    pub lhs: f64,
    /// `2(∫(‖v¹‖_BL + ‖v²‖_BL))²`.
    pub rhs: f64,
    /// Step-doubling estimate of the integration error in `lhs`.
    pub integrator_budget: f64,
    pub pass: bool,
}

fn gap_at(
    v1: &VelocityFieldSample,
    v2: &VelocityFieldSample,
    v12: &VelocityFieldSample,
    s: f64,
    h: f64,
    seeds: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    let grid = v1.grid();
    let full = integrate_flow_steps(v12, s, s + h, seeds, steps)?;
    let second = integrate_flow_steps(v2, s, s + h, seeds, steps)?;
    let mid = second.images();
    let comp = integrate_flow_steps(v1, s, s + h, &mid, steps)?;
    Ok(full
        .images()
        .iter()
        .zip(comp.images())
        .map(|(a, b)| if grid.is_circle() { grid.distance(*a, b) } else { (a - b).abs() })
        .collect())
}

/// Gap between the flow of `v¹ + v²` and the composition `X¹ ∘ X²` over `[s, s + h]`.
pub fn trotter_kato_gap(
    v1: &VelocityFieldSample,
    v2: &VelocityFieldSample,
    s: f64,
    h: f64,
    seeds: &[f64],
    tol: f64,
) -> Result<TrotterKatoGap> {
    if !(h >= 0.0) {
        return Err(Error::Range(format!("step {h} must be nonnegative")));
    }
    let v12 = v1.sum(v2)?;
    let steps = default_steps(&v12, s, s + h);
    let coarse = gap_at(v1, v2, &v12, s, h, seeds, steps)?;
    let fine = gap_at(v1, v2, &v12, s, h, seeds, 2 * steps)?;
    let lhs = fine.iter().fold(0.0_f64, |m, x| m.max(*x));
    let budget = coarse.iter().zip(&fine).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) + 1e-13;
    let rhs = 2.0 * (v1.bl_integral(s, s + h) + v2.bl_integral(s, s + h)).powi(2);
    Ok(TrotterKatoGap { h, lhs, rhs, integrator_budget: budget, pass: lhs <= rhs * (1.0 + tol) + budget })
}
