//! Confinement and interaction potentials with analytic derivatives.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::measures::{DensityField, Grid1D};

/// Scalar potential on the line or circle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    #[default]
    Zero,
    /// `a x² / 2`.
    Quadratic { a: f64 },
    /// `amp · cos(freq · x)`; periodic on a circle when `freq·2R` is a multiple of `2π`.
    Cosine { amp: f64, freq: f64 },
}

impl Potential {
    pub fn is_zero(&self) -> bool {
        match *self {
            Potential::Zero => true,
            Potential::Quadratic { a } => a == 0.0,
            Potential::Cosine { amp, freq } => amp == 0.0 || freq == 0.0,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Quadratic { a } => 0.5 * a * x * x,
            Potential::Cosine { amp, freq } => amp * (freq * x).cos(),
        }
    }

    pub fn grad(&self, x: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Quadratic { a } => a * x,
            Potential::Cosine { amp, freq } => -amp * freq * (freq * x).sin(),
        }
    }

    pub fn hess(&self, x: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Quadratic { a } => a,
            Potential::Cosine { amp, freq } => -amp * freq * freq * (freq * x).cos(),
        }
    }

    /// Growth constants `C⁰..C⁴`, hessian lower bound and `‖Δ·‖_∞` valid on the whole line.
    pub fn constants(&self) -> GrowthConstants {
        match *self {
            Potential::Zero => GrowthConstants::default(),
            Potential::Quadratic { a } => GrowthConstants {
                c: [if a >= 0.0 { 0.0 } else { f64::INFINITY }, 0.0, 0.5 * a.max(0.0), 0.0, a.abs()],
                hess_lower: a,
                lap_sup: a.abs(),
            },
            Potential::Cosine { amp, freq } => {
                let (a, f) = (amp.abs(), freq.abs());
                GrowthConstants { c: [a, a, 0.0, a * f, 0.0], hess_lower: -a * f * f, lap_sup: a * f * f }
            }
        }
    }

    /// `(W' ∗ μ)(x)` at each `x`, exact for these separable families (midpoint moments).
    pub fn convolve_grad(&self, f: &DensityField, xs: &[f64]) -> Vec<f64> {
        match *self {
            Potential::Zero => vec![0.0; xs.len()],
            Potential::Quadratic { a } => {
                let mean = f.integrate(|y| y);
                let mass = f.mass();
                xs.iter().map(|x| a * (x * mass - mean)).collect()
            }
            Potential::Cosine { amp, freq } => {
                let cm = f.integrate(|y| (freq * y).cos());
                let sm = f.integrate(|y| (freq * y).sin());
                xs.iter().map(|x| -amp * freq * ((freq * x).sin() * cm - (freq * x).cos() * sm)).collect()
            }
        }
    }

    /// `∫ (W ∗ μ) μ`.
    pub fn interaction_energy(&self, f: &DensityField) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Quadratic { a } => {
                let m0 = f.mass();
                let m1 = f.integrate(|y| y);
                let m2 = f.integrate(|y| y * y);
                a * (m2 * m0 - m1 * m1)
            }
            Potential::Cosine { amp, freq } => {
                let cm = f.integrate(|y| (freq * y).cos());
                let sm = f.integrate(|y| (freq * y).sin());
                amp * (cm * cm + sm * sm)
            }
        }
    }
}

/// Constants of the growth, hessian and laplacian assumptions for one potential.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GrowthConstants {
    /// `C⁰..C⁴`: `−C⁰ ≤ V ≤ C¹ + C²|x|²`, `|∇V| ≤ C³ + C⁴|x|`.
    pub c: [f64; 5],
    /// `c` with `∇²V ≥ c`.
    pub hess_lower: f64,
    /// `‖ΔV‖_∞`.
    pub lap_sup: f64,
}

impl GrowthConstants {
    /// Checks that the constants dominate sampled values at `xs`.
    pub fn validate(&self, p: &Potential, xs: &[f64], name: &str) -> Result<()> {
        let tol = 1e-9;
        for &x in xs {
            let v = p.value(x);
            let g = p.grad(x).abs();
            let h = p.hess(x);
            let [c0, c1, c2, c3, c4] = self.c;
            let bad = if v < -c0 - tol {
                Some(format!("{name}({x}) = {v} below −C⁰ = {}", -c0))
            } else if v > c1 + c2 * x * x + tol {
                Some(format!("{name}({x}) = {v} above C¹ + C²x²"))
            } else if g > c3 + c4 * x.abs() + tol {
                Some(format!("|{name}'({x})| = {g} above C³ + C⁴|x|"))
            } else if h < self.hess_lower - tol {
                Some(format!("{name}''({x}) = {h} below the hessian bound {}", self.hess_lower))
            } else if h.abs() > self.lap_sup + tol {
                Some(format!("|{name}''({x})| = {} above ‖Δ{name}‖", h.abs()))
            } else {
                None
            };
            if let Some(msg) = bad {
                return Err(Error::PotentialMismatch(msg));
            }
        }
        Ok(())
    }
}

/// Confinement `V` and interaction `W` of one aggregation-diffusion equation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PotentialPair {
    pub v: Potential,
    pub w: Potential,
    pub v_consts: GrowthConstants,
    pub w_consts: GrowthConstants,
}

impl PotentialPair {
    /// Pair with analytic constants.
    pub fn new(v: Potential, w: Potential) -> Self {
        Self { v, w, v_consts: v.constants(), w_consts: w.constants() }
    }

    /// Pair with supplied constants, validated on the grid.
    pub fn with_constants(
        v: Potential,
        w: Potential,
        v_consts: GrowthConstants,
        w_consts: GrowthConstants,
        grid: &Grid1D,
    ) -> Result<Self> {
        let pair = Self { v, w, v_consts, w_consts };
        pair.validate(grid)?;
        Ok(pair)
    }

    pub fn is_zero(&self) -> bool {
        self.v.is_zero() && self.w.is_zero()
    }

    /// Checks symmetry of `W` and domination of the constants on grid centers and differences.
    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        let xs = grid.centers();
        self.v_consts.validate(&self.v, &xs, "V")?;
        let span = grid.length();
        let ds: Vec<f64> = (0..=2 * grid.n_cells()).map(|i| -span + i as f64 * grid.cell_width()).collect();
        self.w_consts.validate(&self.w, &ds, "W")?;
        if ds.iter().any(|d| (self.w.value(*d) - self.w.value(-d)).abs() > 1e-12) {
            return Err(Error::PotentialMismatch("W is not even".into()));
        }
        Ok(())
    }

    /// Advective velocity `−∇(V + W ∗ μ)` at `xs`.
    pub fn velocity(&self, f: &DensityField, xs: &[f64]) -> Vec<f64> {
        let wc = self.w.convolve_grad(f, xs);
        xs.iter().zip(wc).map(|(x, w)| -(self.v.grad(*x) + w)).collect()
    }

    /// `L(t) = exp(t(‖ΔV‖_∞ + ‖ΔW‖_∞))`.
    pub fn growth_factor(&self, t: f64) -> f64 {
        (t * (self.v_consts.lap_sup + self.w_consts.lap_sup)).exp()
    }
}
