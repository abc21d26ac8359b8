//! Built-in initial data and the Barenblatt solution.

use std::path::PathBuf;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::measures::{load_density, normalize_mass, DensityField, Grid1D};

/// One-dimensional Barenblatt profile of `∂ₜμ = D ∂ₓₓ μᵐ` with unit mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Barenblatt {
    pub m: f64,
    pub diffusivity: f64,
    c: f64,
}

impl Barenblatt {
    pub fn new(m: f64, diffusivity: f64) -> Result<Self> {
        if !(m > 1.0) || !(diffusivity > 0.0) {
            return Err(Error::Range(format!("Barenblatt needs m > 1 and D > 0, got {m}, {diffusivity}")));
        }
        // ∫ (C − k y²)₊^{1/(m−1)} dy = C^{1/(m−1) + 1/2} k^{−1/2} B(1/2, 1/(m−1) + 1)
        let k = Self::k(m);
        let q = 1.0 / (m - 1.0);
        let beta = beta_fn(0.5, q + 1.0);
        let c = (k.sqrt() / beta).powf(1.0 / (q + 0.5));
        Ok(Self { m, diffusivity, c })
    }

    fn k(m: f64) -> f64 {
        (m - 1.0) / (2.0 * m * (m + 1.0))
    }

    /// Density at `x` and physical time `t > 0`.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let s = self.diffusivity * t;
        let a = 1.0 / (self.m + 1.0);
        let y = x * s.powf(-a);
        let core = self.c - Self::k(self.m) * y * y;
        if core <= 0.0 {
            0.0
        } else {
            s.powf(-a) * core.powf(1.0 / (self.m - 1.0))
        }
    }

    /// Free-boundary position at time `t`.
    pub fn support(&self, t: f64) -> f64 {
        (self.c / Self::k(self.m)).sqrt() * (self.diffusivity * t).powf(1.0 / (self.m + 1.0))
    }

    pub fn field(&self, grid: Grid1D, t: f64) -> Result<DensityField> {
        DensityField::from_fn(grid, t, |x| self.eval(x, t))
    }
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_fn(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Initial data recipes.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Uniform,
    /// `(1 − r²)₊²` with `r = (x − center)/width`; `peak` overrides `width` so that the
    /// normalized maximum equals `peak`.
    Bump {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        peak: Option<f64>,
    },
    /// `(1 − r²)₊`, a profile with Lipschitz edges.
    Cap {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// Barenblatt profile of exponent `m` at time `t0`.
    Barenblatt {
        m: f64,
        t0: f64,
        #[serde(default = "one")]
        diffusivity: f64,
    },
    /// Two bumps at `±separation/2`, the right one with relative weight `ratio`.
    DoubleBump {
        #[serde(default = "one")]
        separation: f64,
        #[serde(default = "half")]
        width: f64,
        #[serde(default = "one")]
        ratio: f64,
    },
    /// Strictly positive `1 + amplitude·cos(π x / R)` on a circle.
    Wave {
        #[serde(default = "half")]
        amplitude: f64,
    },
    Csv {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn bump(r: f64) -> f64 {
    let s = 1.0 - r * r;
    if s > 0.0 {
        s * s
    } else {
        0.0
    }
}

impl InitialSpec {
    /// Builds the normalized density on `grid`.
    pub fn build(&self, grid: Grid1D) -> Result<DensityField> {
        match self {
            InitialSpec::Uniform => DensityField::from_fn(grid, 0.0, |_| 1.0),
            InitialSpec::Bump { center, width, peak } => {
                // ∫ (1 − r²)² dx = 16 w / 15
                let w = match peak {
                    Some(p) if *p > 0.0 => 15.0 / (16.0 * p),
                    Some(p) => return Err(Error::Range(format!("bump peak must be positive, got {p}"))),
                    None => *width,
                };
                DensityField::from_fn(grid, 0.0, |x| bump((x - center) / w))
            }
            InitialSpec::Cap { center, width } => DensityField::from_fn(grid, 0.0, |x| {
                let r = (x - center) / width;
                (1.0 - r * r).max(0.0)
            }),
            InitialSpec::Barenblatt { m, t0, diffusivity } => {
                Barenblatt::new(*m, *diffusivity)?.field(grid, *t0).map(|f| f.with_time(0.0))
            }
            InitialSpec::DoubleBump { separation, width, ratio } => DensityField::from_fn(grid, 0.0, |x| {
                bump((x + 0.5 * separation) / width) + ratio * bump((x - 0.5 * separation) / width)
            }),
            InitialSpec::Wave { amplitude } => {
                let r = 0.5 * grid.length();
                DensityField::from_fn(grid, 0.0, |x| {
                    1.0 + amplitude * (std::f64::consts::PI * (x - grid.left() - r) / r).cos()
                })
            }
            InitialSpec::Csv { path } => {
                let f = load_density(path)?;
                if f.grid() != &grid {
                    return Err(Error::GridMismatch);
                }
                normalize_mass(&f.with_time(0.0))
            }
        }
    }
}
