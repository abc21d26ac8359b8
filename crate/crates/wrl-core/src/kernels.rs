//! Mollifier kernels, their rescalings and periodizations, and discrete convolution.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measures::{DensityField, Grid1D};
use crate::quad;

/// Tail mass tolerated when truncating an infinite-support kernel.
pub const TAIL_TOL: f64 = 1e-12;

/// Convexity check tolerance relative to `max |ω|`.
pub const CONVEXITY_TOL: f64 = 1e-8;

/// Piecewise-linear kernel table, zero outside its range.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTable {
    xs: Vec<f64>,
    omega: Vec<f64>,
}

impl KernelTable {
    pub fn new(xs: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        if xs.len() != omega.len() || xs.len() < 2 {
            return Err(Error::Invalid("kernel table needs at least two rows".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("kernel table abscissae must increase".into()));
        }
        Ok(Self { xs, omega })
    }

    /// Reads a CSV with columns `x,omega`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let mut xs = Vec::new();
        let mut om = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("x,") {
                continue;
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: ln + 1,
                    msg: e.to_string(),
                })
            };
            let (a, b) = line.split_once(',').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                msg: "expected x,omega".into(),
            })?;
            xs.push(parse(a)?);
            om.push(parse(b)?);
        }
        Self::new(xs, om)
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let j = self.xs.partition_point(|v| *v <= x).clamp(1, n - 1);
        let t = (x - self.xs[j - 1]) / (self.xs[j] - self.xs[j - 1]);
        self.omega[j - 1] + t * (self.omega[j] - self.omega[j - 1])
    }

    fn reach(&self) -> f64 {
        self.xs[0].abs().max(self.xs[self.xs.len() - 1].abs())
    }
}

/// Unscaled kernel profile.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelFamily {
    /// `ω(x) = ½ e^{−|x|}`.
    Laplace,
    /// `ω(x) = (1 − |x|)₊`.
    Tent,
    /// Standard normal density; violates convexity on `x ≥ 0` and serves as a negative control.
    Gaussian,
    Tabulated(Arc<KernelTable>),
}

/// Kernel `ω_ε(x) = ω(x/ε)/ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    epsilon: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily) -> Self {
        Self { family, epsilon: 1.0 }
    }

    pub fn laplace() -> Self {
        Self::new(KernelFamily::Laplace)
    }

    pub fn tent() -> Self {
        Self::new(KernelFamily::Tent)
    }

    pub fn gaussian() -> Self {
        Self::new(KernelFamily::Gaussian)
    }

    pub fn tabulated(table: KernelTable) -> Self {
        Self::new(KernelFamily::Tabulated(Arc::new(table)))
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn base(&self, y: f64) -> f64 {
        match &self.family {
            KernelFamily::Laplace => 0.5 * (-y.abs()).exp(),
            KernelFamily::Tent => (1.0 - y.abs()).max(0.0),
            KernelFamily::Gaussian => (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            KernelFamily::Tabulated(t) => t.eval(y),
        }
    }

    /// `ω_ε(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.base(x / self.epsilon) / self.epsilon
    }

    /// Points where `ω_ε` fails to be smooth.
    pub fn kinks(&self) -> Vec<f64> {
        let e = self.epsilon;
        match &self.family {
            KernelFamily::Laplace => vec![0.0],
            KernelFamily::Tent => vec![-e, 0.0, e],
            KernelFamily::Gaussian => vec![],
            KernelFamily::Tabulated(t) => t.xs.iter().map(|x| x * e).collect(),
        }
    }

    /// Mass of `ω_ε` outside `[−d, d]`, or an upper bound for it.
    pub fn tail_mass(&self, d: f64) -> f64 {
        let y = d / self.epsilon;
        match &self.family {
            KernelFamily::Laplace => (-y).exp(),
            KernelFamily::Tent => (1.0 - y).max(0.0).powi(2),
            KernelFamily::Gaussian => (-0.5 * y * y).exp(),
            KernelFamily::Tabulated(t) => {
                if y >= t.reach() {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Radius beyond which the tail mass is below `tol`.
    pub fn reach(&self, tol: f64) -> f64 {
        let e = self.epsilon;
        match &self.family {
            KernelFamily::Laplace => e * (1.0 / tol).ln(),
            KernelFamily::Tent => e * (1.0 - tol.sqrt()),
            KernelFamily::Gaussian => e * (2.0 * (1.0 / tol).ln()).sqrt(),
            KernelFamily::Tabulated(t) => e * t.reach(),
        }
    }

    /// `‖ω_ε |y|²‖_{L¹}`, analytic for the built-in families.
    pub fn second_moment(&self) -> f64 {
        let base = match &self.family {
            KernelFamily::Laplace => 2.0,
            KernelFamily::Tent => 1.0 / 6.0,
            KernelFamily::Gaussian => 1.0,
            KernelFamily::Tabulated(t) => {
                let r = t.reach();
                quad::piecewise(&|y| y * y * t.eval(y), -r, r, &t.xs, 4)
            }
        };
        base * self.epsilon * self.epsilon
    }

    /// Numerical `∫ ω_ε` over its effective support.
    pub fn mass(&self) -> f64 {
        let r = self.reach(1e-16);
        quad::piecewise(&|x| self.eval(x), -r, r, &self.kinks(), 64)
    }
}

/// `ω ↦ ω_ε` composed with the existing scale.
pub fn rescale(k: &Kernel, epsilon: f64) -> Result<Kernel> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    Ok(Kernel { family: k.family.clone(), epsilon: k.epsilon * epsilon })
}

/// Outcome of the kernel assumption checks.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelReport {
    pub nonnegative: bool,
    pub symmetric: bool,
    pub unit_mass: bool,
    pub mass: f64,
    pub second_moment: f64,
    pub finite_second_moment: bool,
    pub bounded: bool,
    pub bounded_derivative: bool,
    /// Total variation of the sampled derivative, the surrogate for `‖ω″‖_M`.
    pub derivative_tv: f64,
    pub finite_derivative_tv: bool,
    pub convex_on_positive: bool,
}

impl KernelReport {
    pub fn all_pass(&self) -> bool {
        self.nonnegative
            && self.symmetric
            && self.unit_mass
            && self.finite_second_moment
            && self.bounded
            && self.bounded_derivative
            && self.finite_derivative_tv
            && self.convex_on_positive
    }
}

fn derivative_tv(k: &Kernel, reach: f64, n: usize) -> (f64, f64) {
    let dx = 2.0 * reach / n as f64;
    let deriv: Vec<f64> = (0..n)
        .map(|i| {
            let a = -reach + i as f64 * dx;
            (k.eval(a + dx) - k.eval(a)) / dx
        })
        .collect();
    let sup = deriv.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let tv = deriv.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    (sup, tv)
}

/// Samples the kernel and evaluates every assumption; failures are report entries.
pub fn check_assumptions(k: &Kernel) -> KernelReport {
    let reach = k.reach(1e-14);
    let n = 4000;
    let dx = 2.0 * reach / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| -reach + i as f64 * dx).collect();
    let vals: Vec<f64> = xs.iter().map(|x| k.eval(*x)).collect();
    let vmax = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let nonnegative = vals.iter().all(|v| *v >= 0.0);
    let symmetric = xs.iter().all(|x| (k.eval(*x) - k.eval(-x)).abs() <= 1e-12 * vmax.max(1.0));
    let mass = k.mass();
    let second_moment = k.second_moment();
    let (dsup, tv) = derivative_tv(k, reach, n);
    let (_, tv_fine) = derivative_tv(k, reach, 2 * n);
    let finite_derivative_tv = tv.is_finite() && (tv_fine - tv).abs() <= 0.1 * tv.max(1e-300);
    // second differences on x ≥ 0
    let pos: Vec<f64> = (0..=n / 2).map(|i| k.eval(i as f64 * dx)).collect();
    let convex_on_positive = pos.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -CONVEXITY_TOL * vmax);
    KernelReport {
        nonnegative,
        symmetric,
        unit_mass: (mass - 1.0).abs() <= 1e-8,
        mass,
        second_moment,
        finite_second_moment: second_moment.is_finite(),
        bounded: vmax.is_finite(),
        bounded_derivative: dsup.is_finite(),
        derivative_tv: tv,
        finite_derivative_tv,
        convex_on_positive,
    }
}

/// Periodic extension `Σ_k ω_ε(x + k·period)` truncated to `|k| ≤ terms`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodizedKernel {
    base: Kernel,
    period: f64,
    terms: usize,
}

impl PeriodizedKernel {
    pub fn base(&self) -> &Kernel {
        &self.base
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = self.period;
        let y = if (-0.5 * p..0.5 * p).contains(&x) { x } else { (x + 0.5 * p).rem_euclid(p) - 0.5 * p };
        let t = self.terms as i64;
        (-t..=t).map(|k| self.base.eval(y + k as f64 * p)).sum()
    }

    /// Mass of the truncated sum over one period.
    pub fn period_mass(&self) -> f64 {
        let half = (self.terms as f64 + 0.5) * self.period;
        let mut breaks = self.base.kinks();
        let t = self.terms as i64;
        breaks.extend((-t..=t + 1).map(|k| (k as f64 - 0.5) * self.period));
        quad::piecewise(&|x| self.base.eval(x), -half, half, &breaks, 16)
    }
}

/// Builds the periodization, refusing truncations whose tail exceeds [`TAIL_TOL`].
pub fn periodize(k: &Kernel, period: f64, terms: usize) -> Result<PeriodizedKernel> {
    if !(period > 0.0) {
        return Err(Error::Invalid(format!("period must be positive, got {period}")));
    }
    let terms = terms.max(1);
    let tail = k.tail_mass((terms as f64 + 0.5) * period);
    if tail > TAIL_TOL {
        return Err(Error::InsufficientTerms { terms, tail, tol: TAIL_TOL });
    }
    Ok(PeriodizedKernel { base: k.clone(), period, terms })
}

/// Cell-pair weights `W_k = (1/h) ∫_{I_0} ∫_{I_k} ω_ε(y − x) dy dx`.
fn pair_weight(k: &Kernel, h: f64, offset: i64) -> f64 {
    let c = offset as f64 * h;
    let mut breaks: Vec<f64> = k.kinks().iter().map(|z| z - c).collect();
    breaks.push(0.0);
    quad::piecewise(&|s| k.eval(c + s) * (h - s.abs()), -h, h, &breaks, 2) / h
}

/// Precomputed convolution weights of a kernel on a grid.
///
/// `c_i = Σ_j μ_j W_{i−j}` gives the cell averages of `μ ∗ ω_ε` for piecewise-constant `μ`.
/// On a circle the weights are folded over all periods, so `Σ W = 1` and mass is exact.
#[derive(Clone, Debug)]
pub struct ConvolutionStencil {
    grid: Grid1D,
    /// Line: index `k + n − 1` for offset `k ∈ (−n, n)`. Circle: index `k mod n`.
    weights: Vec<f64>,
    kernel: Kernel,
}

impl ConvolutionStencil {
    pub fn new(grid: &Grid1D, k: &Kernel) -> Result<Self> {
        let n = grid.n_cells() as i64;
        let h = grid.cell_width();
        let len = grid.length();
        let reach = k.reach(TAIL_TOL);
        let weights = if grid.is_circle() {
            let median = k.reach(0.5);
            if median > 0.5 * len {
                return Err(Error::KernelWiderThanDomain { support: median, domain: len });
            }
            let kmax = (reach / h).ceil() as i64 + 2;
            let mut w = vec![0.0; n as usize];
            for off in -kmax..=kmax {
                w[off.rem_euclid(n) as usize] += pair_weight(k, h, off);
            }
            // the folded weights sum to one up to truncation and quadrature error
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            w
        } else {
            let effective = k.reach(1e-3);
            if 2.0 * effective > len {
                return Err(Error::KernelWiderThanDomain { support: 2.0 * effective, domain: len });
            }
            let kmax = ((reach / h).ceil() as i64 + 2).min(n - 1);
            let mut w = vec![0.0; (2 * n - 1) as usize];
            for off in -kmax..=kmax {
                w[(off + n - 1) as usize] = pair_weight(k, h, off);
            }
            w
        };
        Ok(Self { grid: *grid, weights, kernel: k.clone() })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn weight(&self, offset: i64) -> f64 {
        let n = self.grid.n_cells() as i64;
        if self.grid.is_circle() {
            self.weights[offset.rem_euclid(n) as usize]
        } else if offset.abs() < n {
            self.weights[(offset + n - 1) as usize]
        } else {
            0.0
        }
    }

    /// `Σ_k |W_{k+1} − 2W_k + W_{k−1}|`, the sup of the discrete second-derivative multiplier
    /// times `h²`.
    pub fn curvature_l1(&self) -> f64 {
        let n = self.grid.n_cells() as i64;
        let range = if self.grid.is_circle() { 0..n } else { -n..n };
        range.map(|k| (self.weight(k + 1) - 2.0 * self.weight(k) + self.weight(k - 1)).abs()).sum()
    }

    /// Cell averages of `μ ∗ ω_ε`.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let support: Vec<(usize, f64)> = values.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        (0..n).map(|i| support.iter().map(|(j, v)| v * self.weight(i as i64 - *j as i64)).sum::<f64>()).collect()
    }

    /// Edge differences `(c_i − c_{i−1})/h`; line walls carry 0, circle edge 0 wraps.
    pub fn apply_derivative(&self, values: &[f64]) -> Vec<f64> {
        edge_gradient(&self.grid, &self.apply(values))
    }
}

/// Gradient of cell data at edges: entry `i` sits between cells `i − 1` and `i`.
/// Lines return `n + 1` entries with zero at the walls; circles return `n` entries.
pub fn edge_gradient(grid: &Grid1D, c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let h = grid.cell_width();
    if grid.is_circle() {
        (0..n).map(|i| (c[i] - c[(i + n - 1) % n]) / h).collect()
    } else {
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            out[i] = (c[i] - c[i - 1]) / h;
        }
        out
    }
}

/// Cell averages of `μ ∗ ω_ε` (periodized on a circle).
pub fn convolve(f: &DensityField, k: &Kernel) -> Result<Vec<f64>> {
    Ok(ConvolutionStencil::new(f.grid(), k)?.apply(f.values()))
}

/// `∂ₓ(μ ∗ ω_ε)` at cell edges, see [`edge_gradient`] for the layout.
pub fn convolve_derivative(f: &DensityField, k: &Kernel) -> Result<Vec<f64>> {
    Ok(ConvolutionStencil::new(f.grid(), k)?.apply_derivative(f.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ksum;
    use approx::assert_relative_eq;

    #[test]
    fn rescale_identity_and_moments() {
        let k = Kernel::laplace();
        let k1 = rescale(&k, 1.0).unwrap();
        assert_eq!(k1, k);
        let k2 = rescale(&k, 0.5).unwrap();
        assert_relative_eq!(k2.second_moment(), 0.5, epsilon = 1e-15);
        for e in [0.05, 0.3, 2.0] {
            assert_relative_eq!(rescale(&Kernel::tent(), e).unwrap().mass(), 1.0, epsilon = 1e-12);
        }
        assert!(matches!(rescale(&k, 0.0), Err(Error::NonpositiveEpsilon(_))));
    }

    #[test]
    fn rescale_composes() {
        let k = Kernel::laplace();
        let a = rescale(&rescale(&k, 0.3).unwrap(), 0.7).unwrap();
        let b = rescale(&k, 0.21).unwrap();
        for x in [-0.4, -0.01, 0.0, 0.13, 1.0] {
            assert_relative_eq!(a.eval(x), b.eval(x), max_relative = 1e-14);
        }
    }

    #[test]
    fn laplace_and_tent_pass_gaussian_fails() {
        let lap = check_assumptions(&Kernel::laplace());
        assert!(lap.all_pass(), "{lap:?}");
        assert_relative_eq!(lap.second_moment, 2.0);
        let tent = check_assumptions(&Kernel::tent());
        assert!(tent.all_pass(), "{tent:?}");
        assert_relative_eq!(tent.second_moment, 1.0 / 6.0);
        let g = check_assumptions(&Kernel::gaussian());
        assert!(!g.convex_on_positive);
        assert!(g.nonnegative && g.symmetric && g.unit_mass);
    }

    #[test]
    fn numerical_second_moments() {
        // independent check: composite trapezoid on a fine grid
        let lap = Kernel::laplace();
        let n = 400_000;
        let r = 60.0;
        let dx = 2.0 * r / n as f64;
        let m2 = ksum((0..=n).map(|i| {
            let x = -r + i as f64 * dx;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * x * x * lap.eval(x) * dx
        }));
        assert_relative_eq!(m2, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn periodize_tent_single_term() {
        let k = rescale(&Kernel::tent(), 0.3).unwrap();
        let p = periodize(&k, 2.0, 1).unwrap();
        for x in [-0.9, -0.2, 0.0, 0.25, 0.99] {
            assert_eq!(p.eval(x), k.eval(x));
        }
    }

    #[test]
    fn periodize_laplace_mass_and_periodicity() {
        let k = rescale(&Kernel::laplace(), 0.1).unwrap();
        let p = periodize(&k, 2.0, 10).unwrap();
        assert_relative_eq!(p.period_mass(), 1.0, epsilon = 1e-12);
        for x in [-0.7, 0.0, 0.31] {
            assert_relative_eq!(p.eval(x), p.eval(x + 2.0), max_relative = 1e-14);
            assert_relative_eq!(p.eval(x), p.eval(-x), max_relative = 1e-14);
        }
        let wide = rescale(&Kernel::laplace(), 2.0).unwrap();
        assert!(matches!(periodize(&wide, 2.0, 1), Err(Error::InsufficientTerms { .. })));
    }

    #[test]
    fn spike_gives_kernel_copy() {
        let g = Grid1D::line(-1.0, 1.0, 200).unwrap();
        let h = g.cell_width();
        let mut v = vec![0.0; 200];
        v[100] = 1.0 / h;
        let f = DensityField::new(g, v, 0.0).unwrap();
        let k = rescale(&Kernel::laplace(), 0.1).unwrap();
        let c = convolve(&f, &k).unwrap();
        for i in [60, 95, 105, 140] {
            let x = g.center(i) - g.center(100);
            // cell-pair weights approximate the kernel to O(h²) away from the cusp
            assert_relative_eq!(c[i], k.eval(x), max_relative = 2e-3);
        }
    }

    #[test]
    fn uniform_on_circle_is_fixed() {
        let g = Grid1D::circle(1.0, 128).unwrap();
        let f = DensityField::new(g, vec![0.5; 128], 0.0).unwrap();
        for k in [Kernel::laplace(), Kernel::tent()] {
            let k = rescale(&k, 0.15).unwrap();
            let c = convolve(&f, &k).unwrap();
            assert!(c.iter().all(|v| (v - 0.5).abs() < 1e-14));
            assert!(convolve_derivative(&f, &k).unwrap().iter().all(|d| d.abs() < 1e-11));
        }
    }

    #[test]
    fn mass_preserved_against_dense_quadrature() {
        let g = Grid1D::line(-3.0, 3.0, 300).unwrap();
        let f = DensityField::from_fn(g, 0.0, |x| (-8.0 * x * x).exp()).unwrap();
        let k = rescale(&Kernel::laplace(), 0.1).unwrap();
        let c = convolve(&f, &k).unwrap();
        let mass = ksum(c.iter().copied()) * g.cell_width();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-10);
        // dense oracle: direct quadrature of the continuous convolution at one point
        let x0 = g.center(160);
        let dense = ksum((0..60_000).map(|i| {
            let y = -3.0 + (i as f64 + 0.5) * 1e-4;
            f.values()[g.cell_of(y)] * k.eval(x0 - y) * 1e-4
        }));
        let h = g.cell_width();
        let avg = ksum((0..200).map(|j| {
            let x = g.edge(160) + (j as f64 + 0.5) * h / 200.0;
            ksum((0..60_000).map(|i| {
                let y = -3.0 + (i as f64 + 0.5) * 1e-4;
                f.values()[g.cell_of(y)] * k.eval(x - y) * 1e-4
            })) / 200.0
        }));
        assert_relative_eq!(c[160], avg, max_relative = 1e-4);
        assert_relative_eq!(c[160], dense, max_relative = 1e-2);
    }

    #[test]
    fn circle_translation_commutes() {
        let g = Grid1D::circle(1.0, 64).unwrap();
        let f = DensityField::from_fn(g, 0.0, |x| 1.0 + 0.8 * (3.0 * x).sin()).unwrap();
        let k = rescale(&Kernel::laplace(), 0.2).unwrap();
        let c = convolve(&f, &k).unwrap();
        let shifted: Vec<f64> = (0..64).map(|i| f.values()[(i + 64 - 5) % 64]).collect();
        let fs = DensityField::new(g, shifted, 0.0).unwrap();
        let cs = convolve(&fs, &k).unwrap();
        for i in 0..64 {
            assert_relative_eq!(cs[i], c[(i + 64 - 5) % 64], epsilon = 1e-14);
        }
    }
}
