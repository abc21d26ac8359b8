//! Exact one-dimensional optimal transport on the line and the circle.
//!
//! Quantile functions of cell-averaged densities are piecewise linear, so `∫|F⁻¹ − G⁻¹|ᵖ` is
//! integrated exactly on the merged breakpoints of both functions.

use crate::error::{Error, Result};
use crate::measures::{cdf, ksum, quantile_from_cdf, DensityField, DomainKind, Grid1D};
use crate::solvers::Trajectory;

/// Relative mass mismatch tolerated between the two arguments of a distance.
pub const MASS_TOL: f64 = 1e-8;

/// Oracle size limit.
pub const ORACLE_MAX_ATOMS: usize = 64;

/// Linear piece `q ∈ [q0, q1] ↦ x0 + (x1 − x0)(q − q0)/(q1 − q0)` of a quantile function.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Piece {
    q0: f64,
    q1: f64,
    x0: f64,
    x1: f64,
}

impl Piece {
    fn at(&self, q: f64) -> f64 {
        if self.q1 <= self.q0 {
            return self.x0;
        }
        self.x0 + (self.x1 - self.x0) * ((q - self.q0) / (self.q1 - self.q0))
    }
}

/// Exact quantile function as contiguous pieces covering `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
struct Quantile {
    pieces: Vec<Piece>,
}

impl Quantile {
    fn of_density(f: &DensityField) -> Result<Self> {
        let c = cdf(f);
        let total = c[c.len() - 1];
        if !(total > 0.0) {
            return Err(Error::ZeroMass(total));
        }
        let g = f.grid();
        let mut pieces = Vec::new();
        for (i, v) in f.values().iter().enumerate() {
            if *v > 0.0 {
                pieces.push(Piece { q0: c[i] / total, q1: c[i + 1] / total, x0: g.edge(i), x1: g.edge(i + 1) });
            }
        }
        Ok(Self::closed(pieces))
    }

    fn of_atoms(atoms: &[Atom]) -> Result<Self> {
        let mut sorted: Vec<Atom> = atoms.iter().copied().filter(|a| a.w > 0.0).collect();
        if sorted.is_empty() {
            return Err(Error::ZeroMass(0.0));
        }
        sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
        let total = ksum(sorted.iter().map(|a| a.w));
        let mut acc = 0.0;
        let pieces = sorted
            .iter()
            .map(|a| {
                let q0 = acc / total;
                acc += a.w;
                Piece { q0, q1: acc / total, x0: a.x, x1: a.x }
            })
            .collect();
        Ok(Self::closed(pieces))
    }

    /// Pins the first and last breakpoints to exactly 0 and 1.
    fn closed(mut pieces: Vec<Piece>) -> Self {
        if let Some(p) = pieces.first_mut() {
            p.q0 = 0.0;
        }
        if let Some(p) = pieces.last_mut() {
            p.q1 = 1.0;
        }
        Self { pieces }
    }

    /// Pieces of `q ↦ G⁻¹(q + θ)` on `[0, 1]` with the quasi-periodic extension
    /// `G⁻¹(q + 1) = G⁻¹(q) + period`.
    fn shifted(&self, theta: f64, period: f64) -> Self {
        let k0 = theta.floor();
        let mut pieces = Vec::with_capacity(self.pieces.len() + 1);
        for k in [k0, k0 + 1.0] {
            for p in &self.pieces {
                let (a, b) = (p.q0 + k - theta, p.q1 + k - theta);
                let (lo, hi) = (a.max(0.0), b.min(1.0));
                if hi > lo {
                    let shift = k * period;
                    pieces.push(Piece {
                        q0: lo,
                        q1: hi,
                        x0: p.at(lo + theta - k) + shift,
                        x1: p.at(hi + theta - k) + shift,
                    });
                }
            }
        }
        Self::closed(pieces)
    }

    fn eval(&self, q: f64) -> f64 {
        let i = self.pieces.partition_point(|p| p.q1 < q).min(self.pieces.len() - 1);
        self.pieces[i].at(q)
    }
}

/// `∫_{lo}^{hi} |d(q)|ᵖ dq` for `d` linear from `d0` to `d1`.
fn abs_pow_integral(d0: f64, d1: f64, len: f64, p: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    if p == 2.0 {
        return len * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
    }
    if d0 * d1 < 0.0 {
        let r = d0.abs() / (d0.abs() + d1.abs());
        return len * (r * d0.abs().powf(p) + (1.0 - r) * d1.abs().powf(p)) / (p + 1.0);
    }
    let (a, b) = (d0.abs(), d1.abs());
    if p == 1.0 {
        return len * 0.5 * (a + b);
    }
    let span = (b - a).abs();
    if span <= 1e-6 * a.max(b) {
        // Simpson is exact to O(span⁴) here
        let mid = 0.5 * (a + b);
        return len * (a.powf(p) + 4.0 * mid.powf(p) + b.powf(p)) / 6.0;
    }
    len * (b.powf(p + 1.0) - a.powf(p + 1.0)) / ((p + 1.0) * (b - a))
}

/// `∫₀¹ |F⁻¹ − G⁻¹|ᵖ` by merging breakpoints.
fn quantile_cost(f: &Quantile, g: &Quantile, p: f64) -> f64 {
    let (fp, gp) = (&f.pieces, &g.pieces);
    let (mut i, mut j) = (0, 0);
    let mut terms = Vec::with_capacity(fp.len() + gp.len());
    while i < fp.len() && j < gp.len() {
        let (a, b) = (fp[i], gp[j]);
        let lo = a.q0.max(b.q0);
        let hi = a.q1.min(b.q1);
        if hi > lo {
            terms.push(abs_pow_integral(a.at(lo) - b.at(lo), a.at(hi) - b.at(hi), hi - lo, p));
        }
        if a.q1 <= b.q1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    ksum(terms)
}

/// Merged pieces `(lo, hi, F⁻¹(lo), F⁻¹(hi), G⁻¹(lo), G⁻¹(hi))`.
fn merged(f: &Quantile, g: &Quantile) -> Vec<[f64; 6]> {
    let (fp, gp) = (&f.pieces, &g.pieces);
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(fp.len() + gp.len());
    while i < fp.len() && j < gp.len() {
        let (a, b) = (fp[i], gp[j]);
        let lo = a.q0.max(b.q0);
        let hi = a.q1.min(b.q1);
        if hi > lo {
            out.push([lo, hi, a.at(lo), a.at(hi), b.at(lo), b.at(hi)]);
        }
        if a.q1 <= b.q1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn check_masses(f: &DensityField, g: &DensityField) -> Result<()> {
    let (a, b) = (f.mass(), g.mass());
    if (a - b).abs() > MASS_TOL * a.max(b) {
        return Err(Error::MassMismatch(a, b));
    }
    Ok(())
}

fn check_order(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Range(format!("transport order must be at least 1, got {p}")));
    }
    Ok(())
}

/// `W_p` on the line from the exact quantile representation.
pub fn wasserstein_line(p: f64, f: &DensityField, g: &DensityField) -> Result<f64> {
    check_order(p)?;
    check_masses(f, g)?;
    let cost = quantile_cost(&Quantile::of_density(f)?, &Quantile::of_density(g)?, p);
    Ok(cost.max(0.0).powf(1.0 / p))
}

/// Result of the rotation search on a circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircleShift {
    /// Optimal shift `θ` of the quantile argument.
    pub theta: f64,
    /// `W_pᵖ` at the optimum.
    pub cost: f64,
    /// Number of scan points used before refinement.
    pub scan_points: usize,
}

fn circle_period(grid: &Grid1D) -> Result<f64> {
    match grid.kind() {
        DomainKind::Circle { r } => Ok(2.0 * r),
        DomainKind::Line { .. } => Err(Error::Invalid("circle distance on a line grid".into())),
    }
}

/// Minimizes `θ ↦ ∫₀¹ |F⁻¹(q) − G⁻¹(q + θ)|ᵖ` by a scan over `scan` shifts in `[−1, 1]`
/// followed by golden-section refinement around the best scan point.
fn minimize_shift(f: &Quantile, g: &Quantile, p: f64, period: f64, scan: usize) -> CircleShift {
    let cost = |theta: f64| quantile_cost(f, &g.shifted(theta, period), p);
    let scan = scan.max(8);
    let step = 2.0 / scan as f64;
    let (mut best_t, mut best_c) = (0.0, cost(0.0));
    for k in 0..=scan {
        let t = -1.0 + k as f64 * step;
        let c = cost(t);
        if c < best_c {
            best_t = t;
            best_c = c;
        }
    }
    let (mut a, mut b) = (best_t - step, best_t + step);
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut c1, mut c2) = (cost(x1), cost(x2));
    for _ in 0..200 {
        if b - a < 1e-14 {
            break;
        }
        if c1 <= c2 {
            b = x2;
            x2 = x1;
            c2 = c1;
            x1 = b - phi * (b - a);
            c1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            c1 = c2;
            x2 = a + phi * (b - a);
            c2 = cost(x2);
        }
    }
    for (t, c) in [(x1, c1), (x2, c2)] {
        if c < best_c {
            best_t = t;
            best_c = c;
        }
    }
    CircleShift { theta: best_t, cost: best_c.max(0.0), scan_points: scan + 1 }
}

/// Optimal rotation shift between two densities on the same circle.
pub fn circle_shift(p: f64, f: &DensityField, g: &DensityField) -> Result<CircleShift> {
    check_order(p)?;
    if f.grid().kind() != g.grid().kind() {
        return Err(Error::GridMismatch);
    }
    check_masses(f, g)?;
    let period = circle_period(f.grid())?;
    let scan = 2 * f.grid().n_cells().max(g.grid().n_cells());
    Ok(minimize_shift(&Quantile::of_density(f)?, &Quantile::of_density(g)?, p, period, scan))
}

/// `W_p` on the circle: minimum over rotations of the line cost of shifted quantiles.
pub fn wasserstein_circle(p: f64, f: &DensityField, g: &DensityField) -> Result<f64> {
    Ok(circle_shift(p, f, g)?.cost.powf(1.0 / p))
}

/// `W_p` on whichever domain the grids describe.
pub fn wasserstein(p: f64, f: &DensityField, g: &DensityField) -> Result<f64> {
    if f.grid().is_circle() {
        wasserstein_circle(p, f, g)
    } else {
        wasserstein_line(p, f, g)
    }
}

/// Quantile function sampled on a uniform grid of levels.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileMap {
    pub q: Vec<f64>,
    pub positions: Vec<f64>,
}

impl QuantileMap {
    /// Samples `F⁻¹` at `n_q` uniform levels (default `4·n_cells` via [`QuantileMap::of`]).
    pub fn new(f: &DensityField, n_q: usize) -> Result<Self> {
        let n_q = n_q.max(2);
        let c = cdf(f);
        let total = c[c.len() - 1];
        if !(total > 0.0) {
            return Err(Error::ZeroMass(total));
        }
        let q: Vec<f64> = (0..n_q).map(|k| k as f64 / (n_q - 1) as f64).collect();
        let positions = q.iter().map(|l| quantile_from_cdf(f.grid(), f.values(), &c, l * total)).collect();
        Ok(Self { q, positions })
    }

    pub fn of(f: &DensityField) -> Result<Self> {
        Self::new(f, 4 * f.grid().n_cells())
    }

    /// Trapezoid approximation of `∫₀¹ |F⁻¹ − G⁻¹|ᵖ` on a shared level grid.
    pub fn trapezoid_cost(&self, other: &QuantileMap, p: f64) -> Result<f64> {
        if self.q != other.q {
            return Err(Error::GridMismatch);
        }
        let d: Vec<f64> = self.positions.iter().zip(&other.positions).map(|(a, b)| (a - b).abs().powf(p)).collect();
        let dq = 1.0 / (self.q.len() - 1) as f64;
        Ok(ksum(d.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dq)))
    }
}

/// Sampled monotone transport map.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportMap1D {
    pub x: Vec<f64>,
    /// `T(x)`, not wrapped on a circle so that `T(x) − x` is the displacement.
    pub t: Vec<f64>,
}

impl TransportMap1D {
    pub fn displacement(&self) -> Vec<f64> {
        self.t.iter().zip(&self.x).map(|(t, x)| t - x).collect()
    }

    /// Kantorovich gradient `∇φ = x − T(x)`.
    pub fn kantorovich_grad(&self) -> Vec<f64> {
        self.x.iter().zip(&self.t).map(|(x, t)| x - t).collect()
    }
}

fn shift_for(f: &DensityField, g: &DensityField) -> Result<(f64, f64)> {
    if f.grid().is_circle() {
        let period = circle_period(f.grid())?;
        Ok((circle_shift(2.0, f, g)?.theta, period))
    } else {
        Ok((0.0, 0.0))
    }
}

/// `T = G⁻¹ ∘ F` at the cell centers of `f` (with the optimal rotation on a circle).
pub fn optimal_map_1d(f: &DensityField, g: &DensityField) -> Result<TransportMap1D> {
    check_masses(f, g)?;
    let vals = f.values();
    let first = vals.iter().position(|v| *v > 0.0).ok_or(Error::DegenerateSupport)?;
    let last = vals.iter().rposition(|v| *v > 0.0).ok_or(Error::DegenerateSupport)?;
    if vals[first..=last].iter().any(|v| *v <= 0.0) {
        return Err(Error::DegenerateSupport);
    }
    let (theta, period) = shift_for(f, g)?;
    let gq = Quantile::of_density(g)?.shifted(theta, period);
    let c = cdf(f);
    let total = c[c.len() - 1];
    let grid = f.grid();
    let x = grid.centers();
    let t = (0..grid.n_cells())
        .map(|i| gq.eval(((c[i] + 0.5 * vals[i] * grid.cell_width()) / total).clamp(0.0, 1.0)))
        .collect();
    Ok(TransportMap1D { x, t })
}

/// Adds `mass` spread uniformly over `[a, b]` to the cell averages `acc`
/// (wrapped on a circle, clamped to the walls on a line).
pub(crate) fn deposit(grid: &Grid1D, acc: &mut [f64], a: f64, b: f64, mass: f64) {
    let h = grid.cell_width();
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    if !grid.is_circle() {
        a = a.clamp(grid.left(), grid.right());
        b = b.clamp(grid.left(), grid.right());
    }
    if b - a <= 1e-14 * h {
        acc[grid.cell_of(0.5 * (a + b))] += mass / h;
        return;
    }
    let n = grid.n_cells() as i64;
    let left = grid.left();
    let density = mass / (b - a);
    let ka = ((a - left) / h).floor() as i64;
    let kb = ((b - left) / h).floor() as i64;
    for k in ka..=kb {
        let lo = a.max(left + k as f64 * h);
        let hi = b.min(left + (k + 1) as f64 * h);
        if hi > lo {
            let i = if grid.is_circle() { k.rem_euclid(n) } else { k.clamp(0, n - 1) };
            acc[i as usize] += density * (hi - lo) / h;
        }
    }
}

/// McCann interpolant `γ_s` on the grid of `f`, built from the interpolated quantile function.
pub fn displacement_interpolate(f: &DensityField, g: &DensityField, s: f64) -> Result<DensityField> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Range(format!("interpolation parameter {s} outside [0, 1]")));
    }
    check_masses(f, g)?;
    let (theta, period) = shift_for(f, g)?;
    let fq = Quantile::of_density(f)?;
    let gq = Quantile::of_density(g)?.shifted(theta, period);
    let grid = *f.grid();
    let mut acc = vec![0.0; grid.n_cells()];
    let mass = f.mass();
    for [lo, hi, fa, fb, ga, gb] in merged(&fq, &gq) {
        let xa = (1.0 - s) * fa + s * ga;
        let xb = (1.0 - s) * fb + s * gb;
        deposit(&grid, &mut acc, xa, xb, (hi - lo) * mass);
    }
    DensityField::new(grid, acc, f.time())
}

/// Weighted point of a discrete measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

/// Ground cost of the discrete oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AtomDomain {
    Line,
    Circle { r: f64 },
}

impl AtomDomain {
    fn dist(&self, x: f64, y: f64) -> f64 {
        match *self {
            AtomDomain::Line => (x - y).abs(),
            AtomDomain::Circle { r } => {
                let d = (x - y).rem_euclid(2.0 * r);
                d.min(2.0 * r - d)
            }
        }
    }
}

fn check_atoms(f: &[Atom], g: &[Atom]) -> Result<()> {
    let n = f.len().max(g.len());
    if n > ORACLE_MAX_ATOMS {
        return Err(Error::SizeLimit(n));
    }
    if f.iter().chain(g).any(|a| !(a.w >= 0.0) || !a.x.is_finite()) {
        return Err(Error::Invalid("atoms need finite positions and nonnegative weights".into()));
    }
    let (a, b) = (ksum(f.iter().map(|a| a.w)), ksum(g.iter().map(|a| a.w)));
    if (a - b).abs() > MASS_TOL * a.max(b) {
        return Err(Error::MassMismatch(a, b));
    }
    Ok(())
}

/// Quantile-based `W_p` between discrete measures. On the circle the shift objective is
/// piecewise linear and convex in `θ`, so its minimum sits at a breakpoint `θ = F_i − G_j`.
pub fn wasserstein_atoms(p: f64, f: &[Atom], g: &[Atom], domain: AtomDomain) -> Result<f64> {
    check_order(p)?;
    check_atoms(f, g)?;
    match domain {
        AtomDomain::Line => Ok(quantile_cost(&Quantile::of_atoms(f)?, &Quantile::of_atoms(g)?, p).powf(1.0 / p)),
        AtomDomain::Circle { r } => {
            let wrap = |a: &Atom| Atom { x: (a.x + r).rem_euclid(2.0 * r) - r, w: a.w };
            let fw: Vec<Atom> = f.iter().map(wrap).collect();
            let gw: Vec<Atom> = g.iter().map(wrap).collect();
            let fq = Quantile::of_atoms(&fw)?;
            let gq = Quantile::of_atoms(&gw)?;
            let mut best = f64::INFINITY;
            for a in fq.pieces.iter().map(|p| p.q0) {
                for b in gq.pieces.iter().map(|p| p.q0) {
                    for k in [-1.0, 0.0, 1.0] {
                        let theta = b - a + k;
                        if (-1.0..=1.0).contains(&theta) {
                            best = best.min(quantile_cost(&fq, &gq.shifted(theta, 2.0 * r), p));
                        }
                    }
                }
            }
            Ok(best.max(0.0).powf(1.0 / p))
        }
    }
}

/// Exact optimal transport cost between discrete measures by successive shortest paths on
/// the transportation network. Returns `(min Σ π_ij d_ij^p)^{1/p}`. Intended as a test oracle.
pub fn discrete_ot_oracle(f: &[Atom], g: &[Atom], p: f64, domain: AtomDomain) -> Result<f64> {
    check_order(p)?;
    check_atoms(f, g)?;
    let (nf, ng) = (f.len(), g.len());
    let tf = ksum(f.iter().map(|a| a.w));
    let tg = ksum(g.iter().map(|a| a.w));
    let supply: Vec<f64> = f.iter().map(|a| a.w / tf).collect();
    let demand: Vec<f64> = g.iter().map(|a| a.w / tg).collect();
    let cost: Vec<Vec<f64>> = f.iter().map(|a| g.iter().map(|b| domain.dist(a.x, b.x).powf(p)).collect()).collect();
    // nodes: source, f atoms, g atoms, sink
    let (src, sink) = (0, nf + ng + 1);
    let nodes = nf + ng + 2;
    let mut flow = vec![vec![0.0; ng]; nf];
    let mut sent = vec![0.0; nf];
    let mut recv = vec![0.0; ng];
    let eps = 1e-15;
    let mut remaining = 1.0;
    for _ in 0..10 * (nf + ng + 2) * (nf + ng + 2) {
        if remaining <= 1e-14 {
            break;
        }
        // Bellman-Ford on the residual graph
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for i in 0..nf {
                let u = 1 + i;
                if supply[i] - sent[i] > eps && dist[src] < dist[u] {
                    dist[u] = dist[src];
                    prev[u] = src;
                    changed = true;
                }
                if !dist[u].is_finite() {
                    continue;
                }
                for (j, c) in cost[i].iter().enumerate() {
                    let v = 1 + nf + j;
                    if dist[u] + c < dist[v] - 1e-15 {
                        dist[v] = dist[u] + c;
                        prev[v] = u;
                        changed = true;
                    }
                }
            }
            for j in 0..ng {
                let v = 1 + nf + j;
                if !dist[v].is_finite() {
                    continue;
                }
                for i in 0..nf {
                    let u = 1 + i;
                    if flow[i][j] > eps && dist[v] - cost[i][j] < dist[u] - 1e-15 {
                        dist[u] = dist[v] - cost[i][j];
                        prev[u] = v;
                        changed = true;
                    }
                }
                if demand[j] - recv[j] > eps && dist[v] < dist[sink] {
                    dist[sink] = dist[v];
                    prev[sink] = v;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        // bottleneck along the path
        let mut path = vec![sink];
        let mut node = sink;
        while node != src {
            node = prev[node];
            path.push(node);
        }
        path.reverse();
        let mut push = f64::INFINITY;
        for w in path.windows(2) {
            let (u, v) = (w[0], w[1]);
            let cap = if u == src {
                supply[v - 1] - sent[v - 1]
            } else if v == sink {
                demand[u - 1 - nf] - recv[u - 1 - nf]
            } else if u <= nf {
                f64::INFINITY
            } else {
                flow[v - 1][u - 1 - nf]
            };
            push = push.min(cap);
        }
        for w in path.windows(2) {
            let (u, v) = (w[0], w[1]);
            if u == src {
                sent[v - 1] += push;
            } else if v == sink {
                recv[u - 1 - nf] += push;
            } else if u <= nf {
                flow[u - 1][v - 1 - nf] += push;
            } else {
                flow[v - 1][u - 1 - nf] -= push;
            }
        }
        remaining -= push;
    }
    let total = ksum((0..nf).flat_map(|i| (0..ng).map(move |j| (i, j))).map(|(i, j)| flow[i][j] * cost[i][j]));
    Ok(total.max(0.0).powf(1.0 / p))
}

/// Benamou-Brenier action and the rescaled inequality `W_pᵖ(μ₀, μ_h) ≤ h^{p−1}·action`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionCheck {
    pub action: f64,
    pub horizon: f64,
    /// `W_pᵖ(μ₀, μ_h)`.
    pub lhs: f64,
    /// `h^{p−1}·action`.
    pub rhs: f64,
    pub pass: bool,
}

/// `∫₀ʰ ∫ |v|ᵖ dμ_τ dτ` by the trapezoid rule over snapshots; the inner integral averages
/// `|v|ᵖ` over the two edges of each cell.
pub fn bb_action(traj: &Trajectory, p: f64) -> Result<f64> {
    check_order(p)?;
    if traj.velocity_samples.len() != traj.snapshots.len() || traj.velocity_samples.iter().any(|v| v.is_empty()) {
        return Err(Error::MissingVelocities);
    }
    let inner: Vec<f64> = traj
        .snapshots
        .iter()
        .zip(&traj.velocity_samples)
        .map(|(s, v)| {
            let n = s.values().len();
            let h = s.grid().cell_width();
            ksum(s.values().iter().enumerate().map(|(i, mu)| {
                let right = if v.len() == n { v[(i + 1) % n] } else { v[i + 1] };
                mu * 0.5 * (v[i].abs().powf(p) + right.abs().powf(p)) * h
            }))
        })
        .collect();
    let times = traj.times();
    Ok(ksum(times.windows(2).zip(inner.windows(2)).map(|(t, a)| 0.5 * (t[1] - t[0]) * (a[0] + a[1]))))
}

/// Evaluates both sides of the rescaled Benamou-Brenier inequality at relative tolerance `tol`.
pub fn bb_check(traj: &Trajectory, p: f64, tol: f64) -> Result<ActionCheck> {
    let action = bb_action(traj, p)?;
    let horizon = traj.last().time() - traj.initial().time();
    let lhs = wasserstein(p, traj.initial(), traj.last())?.powf(p);
    let rhs = horizon.powf(p - 1.0) * action;
    Ok(ActionCheck { action, horizon, lhs, rhs, pass: lhs <= rhs * (1.0 + tol) + 1e-14 })
}

/// Midpoint convexity of `s ↦ ∫ γ_sᵐ` at `s ∈ {0, 1/8, …, 1}` with slack.
pub fn internal_energy_convexity(f: &DensityField, g: &DensityField, m: f64, slack: f64) -> Result<bool> {
    let e: Vec<f64> = (0..=8)
        .map(|k| displacement_interpolate(f, g, k as f64 / 8.0).map(|d| d.integral_pow(m)))
        .collect::<Result<_>>()?;
    Ok(e.windows(3).all(|w| w[1] <= 0.5 * (w[0] + w[2]) + slack))
}
