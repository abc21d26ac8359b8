//! Grids, cell-averaged probability densities, moments and CDF/quantile machinery.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Default tolerance on the total mass of a normalized density.
pub const TOL_MASS: f64 = 1e-10;

/// Positivity floor used by [`MomentSummary::log_sup`].
pub const LOG_FLOOR: f64 = 1e-300;

/// Compensated (Neumaier) summation.
pub fn ksum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Ambient one-dimensional domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DomainKind {
    /// Interval `[a, b]` with walls at both ends.
    Line { a: f64, b: f64 },
    /// Circle of circumference `2r`, coordinates in `(-r, r]`.
    Circle { r: f64 },
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::Line { a, b } => write!(f, "line:{a}:{b}"),
            DomainKind::Circle { r } => write!(f, "circle:{r}"),
        }
    }
}

impl std::str::FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| Error::Invalid(format!("bad number {t:?} in domain {s:?}")));
        match parts.as_slice() {
            ["line", a, b] => Ok(DomainKind::Line { a: num(a)?, b: num(b)? }),
            ["circle", r] => Ok(DomainKind::Circle { r: num(r)? }),
            _ => Err(Error::Invalid(format!("unknown domain {s:?}"))),
        }
    }
}

/// Uniform one-dimensional grid of `n_cells` cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    kind: DomainKind,
    n_cells: usize,
}

impl Grid1D {
    pub fn line(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Invalid(format!("line needs a < b, got [{a}, {b}]")));
        }
        Self::new(DomainKind::Line { a, b }, n_cells)
    }

    pub fn circle(r: f64, n_cells: usize) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Invalid(format!("circle radius must be positive, got {r}")));
        }
        Self::new(DomainKind::Circle { r }, n_cells)
    }

    pub fn new(kind: DomainKind, n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::Invalid("grid needs at least one cell".into()));
        }
        match kind {
            DomainKind::Line { a, b } if !(b > a) => Err(Error::Invalid(format!("line needs a < b, got [{a}, {b}]"))),
            DomainKind::Circle { r } if !(r > 0.0) => {
                Err(Error::Invalid(format!("circle radius must be positive, got {r}")))
            }
            _ => Ok(Self { kind, n_cells }),
        }
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.kind, DomainKind::Circle { .. })
    }

    /// Left end of the coordinate interval.
    pub fn left(&self) -> f64 {
        match self.kind {
            DomainKind::Line { a, .. } => a,
            DomainKind::Circle { r } => -r,
        }
    }

    /// Right end of the coordinate interval.
    pub fn right(&self) -> f64 {
        match self.kind {
            DomainKind::Line { b, .. } => b,
            DomainKind::Circle { r } => r,
        }
    }

    /// Domain length (the circumference on a circle).
    pub fn length(&self) -> f64 {
        self.right() - self.left()
    }

    pub fn cell_width(&self) -> f64 {
        self.length() / self.n_cells as f64
    }

    /// Left edge of cell `i` (edge `n_cells` is the right end).
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.right()
        } else {
            self.left() + i as f64 * self.cell_width()
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        self.left() + (i as f64 + 0.5) * self.cell_width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|i| self.edge(i)).collect()
    }

    /// Canonical representative of `x`: wrapped into `(-r, r]` on a circle, unchanged on a line.
    pub fn wrap(&self, x: f64) -> f64 {
        match self.kind {
            DomainKind::Line { .. } => x,
            DomainKind::Circle { r } => {
                let period = 2.0 * r;
                let mut y = (x + r).rem_euclid(period) - r;
                if y <= -r {
                    y += period;
                }
                y
            }
        }
    }

    /// Geodesic distance between two points of the domain.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            DomainKind::Line { .. } => (x - y).abs(),
            DomainKind::Circle { r } => {
                let d = (x - y).rem_euclid(2.0 * r);
                d.min(2.0 * r - d)
            }
        }
    }

    /// Index of the cell containing `x` (clamped on a line, wrapped on a circle).
    pub fn cell_of(&self, x: f64) -> usize {
        let y = self.wrap(x);
        let k = ((y - self.left()) / self.cell_width()).floor();
        (k.max(0.0) as usize).min(self.n_cells - 1)
    }
}

/// Nonnegative cell-averaged density on a [`Grid1D`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    grid: Grid1D,
    values: Vec<f64>,
    time: f64,
}

impl DensityField {
    /// Wraps cell averages; rejects negative or non-finite values.
    pub fn new(grid: Grid1D, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Invalid(format!("{} values for {} cells", values.len(), grid.n_cells())));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Invalid(format!("density value {v} is negative or not finite")));
        }
        Ok(Self { grid, values, time })
    }

    /// Cell averages of `f` computed with 4-point Gauss-Legendre per cell, then normalized.
    pub fn from_fn(grid: Grid1D, time: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        const NODES: [f64; 4] =
            [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
        const WEIGHTS: [f64; 4] =
            [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
        let h = grid.cell_width();
        let values = (0..grid.n_cells())
            .map(|i| {
                let c = grid.center(i);
                NODES.iter().zip(WEIGHTS).map(|(z, w)| w * f(c + 0.5 * h * z).max(0.0)).sum::<f64>() * 0.5
            })
            .collect();
        normalize_mass(&Self::new(grid, values, time)?)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn mass(&self) -> f64 {
        ksum(self.values.iter().copied()) * self.grid.cell_width()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `∫ μ^p`.
    pub fn integral_pow(&self, p: f64) -> f64 {
        ksum(self.values.iter().map(|v| if *v > 0.0 { v.powf(p) } else { 0.0 })) * self.grid.cell_width()
    }

    /// `∫ g(x) μ(x) dx` with `g` sampled at cell centers.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let h = self.grid.cell_width();
        ksum(self.values.iter().enumerate().map(|(i, v)| g(self.grid.center(i)) * v)) * h
    }

    /// L¹ distance to another density on the same grid.
    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(ksum(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs())) * self.grid.cell_width())
    }

    /// Checks the mass invariant at tolerance `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.mass() - 1.0).abs() <= tol
    }
}

/// Rescales `f` to unit mass.
pub fn normalize_mass(f: &DensityField) -> Result<DensityField> {
    let mass = f.mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass(mass));
    }
    if mass == 1.0 {
        return Ok(f.clone());
    }
    let values = f.values.iter().map(|v| v / mass).collect();
    Ok(DensityField { grid: f.grid, values, time: f.time })
}

/// `∫ |x|^p dμ` with circle coordinates taken in `(-r, r]`.
pub fn moment(f: &DensityField, p: f64) -> f64 {
    f.integrate(|x| x.abs().powf(p))
}

/// `∫ x^k dμ` with signed coordinates, integer order.
pub fn signed_moment(f: &DensityField, k: i32) -> f64 {
    f.integrate(|x| x.powi(k))
}

/// Moment and norm summary of a density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentSummary {
    pub p: f64,
    /// `∫ |x|^p dμ`.
    pub value: f64,
    pub second_moment: f64,
    pub linf: f64,
    /// `(∫ μ^p)^{1/p}`.
    pub lp: f64,
    /// `‖log μ‖_∞` over the whole domain, `+∞` when any cell is below [`LOG_FLOOR`].
    pub log_sup: f64,
}

impl MomentSummary {
    pub fn of(f: &DensityField, p: f64) -> Self {
        Self {
            p,
            value: moment(f, p),
            second_moment: moment(f, 2.0),
            linf: f.max(),
            lp: f.integral_pow(p).powf(1.0 / p),
            log_sup: log_sup(f),
        }
    }
}

/// `‖log μ‖_∞`, reported as `+∞` once any cell falls below the positivity floor.
pub fn log_sup(f: &DensityField) -> f64 {
    f.values
        .iter()
        .try_fold(0.0_f64, |acc, v| if *v < LOG_FLOOR { None } else { Some(acc.max(v.ln().abs())) })
        .unwrap_or(f64::INFINITY)
}

/// Cumulative mass at the `n_cells + 1` cell edges, from 0 to the total mass.
pub fn cdf(f: &DensityField) -> Vec<f64> {
    let h = f.grid.cell_width();
    let mut out = Vec::with_capacity(f.values.len() + 1);
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    out.push(0.0);
    for v in &f.values {
        // empty cells keep the CDF exactly flat
        if *v == 0.0 {
            out.push(sum);
            continue;
        }
        let y = v * h - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        out.push(sum);
    }
    out
}

/// Left-continuous piecewise-linear pseudo-inverse of the CDF.
pub fn quantile(f: &DensityField, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::QOutOfRange(q));
    }
    let c = cdf(f);
    let total = *c.last().unwrap_or(&0.0);
    if !(total > 0.0) {
        return Err(Error::ZeroMass(total));
    }
    Ok(quantile_from_cdf(&f.grid, &f.values, &c, q * total))
}

/// Quantile at absolute cumulative level `level` given a precomputed CDF.
pub(crate) fn quantile_from_cdf(grid: &Grid1D, values: &[f64], c: &[f64], level: f64) -> f64 {
    let h = grid.cell_width();
    let first = values.iter().position(|v| *v > 0.0).unwrap_or(0);
    if level <= 0.0 {
        return grid.edge(first);
    }
    let last = values.iter().rposition(|v| *v > 0.0).unwrap_or(values.len() - 1);
    if level >= c[values.len()] {
        return grid.edge(last + 1);
    }
    let i = c.partition_point(|v| *v < level).saturating_sub(1).min(values.len() - 1);
    let i = (i..values.len()).find(|&j| values[j] > 0.0).unwrap_or(last);
    let frac = ((level - c[i]) / (values[i] * h)).clamp(0.0, 1.0);
    grid.edge(i) + frac * h
}

/// Largest `|x|` over cells whose value exceeds `threshold`; 0 when there are none.
pub fn support_radius(f: &DensityField, threshold: f64) -> f64 {
    f.values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > threshold)
        .map(|(i, _)| f.grid.center(i).abs())
        .fold(0.0, f64::max)
}

/// Writes `# grid=<kind>,n=<cells>,t=<time>` followed by `x,value` rows.
pub fn write_density<W: Write>(f: &DensityField, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# grid={},n={},t={}", f.grid.kind, f.grid.n_cells, f.time)?;
    writeln!(out, "x,value")?;
    for (i, v) in f.values.iter().enumerate() {
        writeln!(out, "{},{}", f.grid.center(i), v)?;
    }
    Ok(())
}

pub fn save_density(f: &DensityField, path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    write_density(f, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

/// Reads a density CSV. Without a grid header the grid is a line inferred from uniform centers.
pub fn load_density(path: &Path) -> Result<DensityField> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    let parse = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut kind = None;
    let mut time = 0.0;
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (ln, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            for item in header.trim().split(',') {
                match item.split_once('=') {
                    Some(("grid", k)) => kind = Some(k.parse::<DomainKind>()?),
                    Some(("t", t)) => time = t.parse().map_err(|_| parse(ln + 1, format!("bad time {t:?}")))?,
                    _ => {}
                }
            }
            continue;
        }
        if line.starts_with("x,") {
            continue;
        }
        let (x, v) = line.split_once(',').ok_or_else(|| parse(ln + 1, "expected two columns".into()))?;
        xs.push(x.trim().parse::<f64>().map_err(|e| parse(ln + 1, e.to_string()))?);
        vs.push(v.trim().parse::<f64>().map_err(|e| parse(ln + 1, e.to_string()))?);
    }
    let n = vs.len();
    let kind = match kind {
        Some(k) => k,
        None => {
            if n < 2 {
                return Err(parse(0, "cannot infer a grid from fewer than two rows".into()));
            }
            let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
            DomainKind::Line { a: xs[0] - 0.5 * h, b: xs[n - 1] + 0.5 * h }
        }
    };
    let grid = Grid1D::new(kind, n)?;
    DensityField::new(grid, vs, time)
}
