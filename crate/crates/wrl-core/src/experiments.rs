//! Config-driven rate studies: each runner sweeps one parameter ladder, compares measured
//! Wasserstein distances with the explicit bounds and fits a log-log rate.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::bounds::{
    aggdiff_bound, derivative_stats, heat_limit_constant, mesa_bound, nonlocal_bound, pme_exponent_bound,
    support_radius_forecast, BoundInput, BoundReport, HeatDomain, HeatInput, NonlocalInput, SupportInput,
};
use crate::diagnostics::{
    aronson_benilan_suite, energy_identity_residual, evi_rate_check, mass_drift, maximum_principle, mismatch_series,
    support_confinement_check, tail_estimate_check, weighted_energy_aggdiff, DiagnosticReport, Slack,
    DIAGNOSTIC_HEADER, IDENTITY_SNAPSHOTS,
};
use crate::error::{Error, Result};
use crate::flows::{trotter_kato_gap, VelocityFieldSample};
use crate::kernels::{Kernel, KernelTable};
use crate::measures::{ksum, moment, save_density, support_radius, DensityField, DomainKind, Grid1D};
use crate::solvers::{
    free_energy, solve_aggdiff, solve_nonlocal, solve_pme, AggDiffConfig, InitialSpec, NonlocalConfig, PmeConfig,
    Potential, PotentialPair, Trajectory,
};
use crate::transport::{discrete_ot_oracle, wasserstein, wasserstein_atoms, Atom, AtomDomain};

/// The six studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    PmeExponent,
    Mesa,
    Nonlocal,
    Aggdiff,
    HeatLimit,
    TrotterKato,
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentId::PmeExponent => "pme_exponent",
            ExperimentId::Mesa => "mesa",
            ExperimentId::Nonlocal => "nonlocal",
            ExperimentId::Aggdiff => "aggdiff",
            ExperimentId::HeatLimit => "heat_limit",
            ExperimentId::TrotterKato => "trotter_kato",
        };
        f.write_str(s)
    }
}

/// Which parameter the aggregation-diffusion ladder varies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggdiffLadder {
    /// Potential perturbation `δ` at fixed `n`.
    #[default]
    Delta,
    /// Exponent `n` at fixed `δ`.
    N,
}

/// Which potential of the `ν` equation is scaled by `1 + δ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturb {
    #[default]
    V,
    W,
    Both,
}

/// `[experiment]` section.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub id: ExperimentId,
    /// `n` values, `m` values, `ε` values, `δ` or `n` values, `n` values or `h` values.
    pub ladder: Vec<f64>,
    /// Base exponent of the `μ` equation.
    #[serde(default = "two")]
    pub m: f64,
    /// Exponent of the `ν` equation when the ladder varies `δ`; defaults to `m`.
    pub n: Option<f64>,
    /// Fixed perturbation when the ladder varies `n`.
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub vary: AggdiffLadder,
    #[serde(default)]
    pub perturb: Perturb,
    /// Final time (start time of the composition for the flow study).
    #[serde(default = "quarter")]
    pub t: f64,
    /// Integrability exponent `α` of the heat-limit constant.
    #[serde(default = "two")]
    pub alpha: f64,
    /// Diffusion coefficient of the porous medium runs.
    #[serde(default = "one")]
    pub diffusivity: f64,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default)]
    pub seed: u64,
    /// Random field pairs of the flow study.
    #[serde(default = "default_cases")]
    pub cases: usize,
    /// Rows pass when `rhs − measured ≥ −margin_tol`.
    #[serde(default = "default_margin_tol")]
    pub margin_tol: f64,
    /// Acceptance band of the fitted exponent.
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
}

/// `[grid]` section.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Line { a: f64, b: f64, n_cells: usize },
    Circle { r: f64, n_cells: usize },
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid1D> {
        match *self {
            GridSpec::Line { a, b, n_cells } => Grid1D::line(a, b, n_cells),
            GridSpec::Circle { r, n_cells } => Grid1D::circle(r, n_cells),
        }
    }
}

/// `[kernel]` section.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    #[default]
    Laplace,
    Tent,
    Gaussian,
    Tabulated {
        path: PathBuf,
    },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        Ok(match self {
            KernelSpec::Laplace => Kernel::laplace(),
            KernelSpec::Tent => Kernel::tent(),
            KernelSpec::Gaussian => Kernel::gaussian(),
            KernelSpec::Tabulated { path } => Kernel::tabulated(KernelTable::load(path)?),
        })
    }
}

/// `[potentials]` section: potentials of the `μ` equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub v: Potential,
    #[serde(default)]
    pub w: Potential,
}

/// `[output]` section.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// A full experiment description.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub grid: GridSpec,
    #[serde(default = "default_initial")]
    pub initial: InitialSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub potentials: PotentialSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn quarter() -> f64 {
    0.25
}

fn default_snapshots() -> usize {
    21
}

fn default_cases() -> usize {
    100
}

fn default_margin_tol() -> f64 {
    1e-3
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_initial() -> InitialSpec {
    InitialSpec::Bump { center: 0.0, width: 1.0, peak: None }
}

/// Minimum ladder length for a rate fit.
pub const MIN_LADDER: usize = 3;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    /// Ladder length and referenced files.
    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        let needed = if e.id == ExperimentId::Aggdiff { 1 } else { MIN_LADDER };
        if e.ladder.len() < needed {
            return Err(Error::Config(format!("ladder needs at least {needed} entries, got {}", e.ladder.len())));
        }
        if e.ladder.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("ladder entries must be finite".into()));
        }
        if !(e.t >= 0.0) {
            return Err(Error::Config(format!("time must be nonnegative, got {}", e.t)));
        }
        let mut files = Vec::new();
        if let InitialSpec::Csv { path } = &self.initial {
            files.push(path);
        }
        if let KernelSpec::Tabulated { path } = &self.kernel {
            files.push(path);
        }
        if let Some(missing) = files.into_iter().find(|p| !p.exists()) {
            return Err(Error::Config(format!("referenced file {} does not exist", missing.display())));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid1D> {
        self.grid.build()
    }

    pub fn initial_field(&self) -> Result<DensityField> {
        self.initial.build(self.grid()?)
    }

    /// Porous medium run of exponent `m` to the configured time.
    pub fn pme_config(&self, m: f64) -> Result<PmeConfig> {
        let mut c = PmeConfig::new(m, self.grid()?, self.experiment.t).with_snapshots(self.experiment.snapshots);
        c.diffusivity = self.experiment.diffusivity;
        Ok(c)
    }

    pub fn potentials_mu(&self) -> PotentialPair {
        PotentialPair::new(self.potentials.v, self.potentials.w)
    }

    /// Potentials of the `ν` equation at perturbation `δ`.
    pub fn potentials_nu(&self, delta: f64) -> PotentialPair {
        let s = 1.0 + delta;
        let (v, w) = (self.potentials.v, self.potentials.w);
        match self.experiment.perturb {
            Perturb::V => PotentialPair::new(scaled(v, s), w),
            Perturb::W => PotentialPair::new(v, scaled(w, s)),
            Perturb::Both => PotentialPair::new(scaled(v, s), scaled(w, s)),
        }
    }
}

fn scaled(p: Potential, s: f64) -> Potential {
    match p {
        Potential::Zero => Potential::Zero,
        Potential::Quadratic { a } => Potential::Quadratic { a: a * s },
        Potential::Cosine { amp, freq } => Potential::Cosine { amp: amp * s, freq },
    }
}

/// Least-squares line through `(log x, log y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Fits `log y = slope·log x + intercept` to at least three positive pairs.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < MIN_LADDER {
        return Err(Error::Range(format!("rate fit needs {MIN_LADDER} points, got {}", points.len())));
    }
    if let Some(bad) = points.iter().flat_map(|(x, y)| [*x, *y]).find(|v| !(*v > 0.0)) {
        return Err(Error::NonpositiveValue(bad));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = ksum(lx.iter().copied()) / n;
    let my = ksum(ly.iter().copied()) / n;
    let sxx = ksum(lx.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = ksum(lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)));
    if sxx == 0.0 {
        return Err(Error::Range("rate fit needs distinct parameters".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss = ksum(lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)));
    Ok(RateFit { slope, intercept, residual: (ss / n).sqrt() })
}

/// One ladder entry.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    /// Case index; nonzero only in the flow study.
    pub group: usize,
    pub parameter: f64,
    pub measured: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    /// Error message when the row aborted, otherwise study-specific remarks.
    pub note: String,
}

impl RateRow {
    fn new(group: usize, parameter: f64, measured: f64, rhs: f64, margin_tol: f64) -> Self {
        let margin = rhs - measured;
        Self { group, parameter, measured, rhs, margin, pass: margin >= -margin_tol, note: String::new() }
    }

    fn failed(group: usize, parameter: f64, err: &Error) -> Self {
        Self {
            group,
            parameter,
            measured: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            pass: false,
            note: err.to_string().replace([',', '\n'], ";"),
        }
    }
}

/// `experiment,group,parameter,measured,rhs,margin,pass,note`.
pub const RATE_HEADER: &str = "experiment,group,parameter,measured,rhs,margin,pass,note";

/// Outcome of one study.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub experiment: ExperimentId,
    /// What `measured` holds, e.g. `W2` or `W2^2`.
    pub measured_label: String,
    pub rows: Vec<RateRow>,
    /// One fit per group; `None` when the group has fewer than three usable rows.
    pub fits: Vec<Option<RateFit>>,
    /// The reported rate of each group, derived from its fit.
    pub exponents: Vec<Option<f64>>,
    pub band: (Option<f64>, Option<f64>),
}

impl RateReport {
    pub fn rows_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Every exponent exists and lies in the band (vacuous without a band).
    pub fn rate_pass(&self) -> bool {
        self.band == (None, None) || (!self.exponents.is_empty() && self.exponents.iter().all(|e| self.in_band(*e)))
    }

    pub fn pass(&self) -> bool {
        self.rows_pass() && self.rate_pass()
    }

    /// Rows as bound comparisons at time `t`; `inputs` carries the group and ladder parameter.
    pub fn bound_reports(&self, t: f64, slack: f64) -> Vec<BoundReport> {
        self.rows
            .iter()
            .map(|r| BoundReport {
                theorem: self.experiment.to_string(),
                t,
                lhs: r.measured,
                rhs: r.rhs,
                margin: r.margin,
                slack,
                pass: r.pass,
                inputs: format!("group={} parameter={}", r.group, r.parameter),
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{RATE_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{},{}\n",
                self.experiment, r.group, r.parameter, r.measured, r.rhs, r.margin, r.pass, r.note
            ));
        }
        s
    }

    pub fn summary(&self) -> String {
        let passed = self.rows.iter().filter(|r| r.pass).count();
        let mut s = format!("experiment: {}\nmeasured: {}\n", self.experiment, self.measured_label);
        s.push_str(&format!("rows: {} passed, {} failed\n", passed, self.rows.len() - passed));
        let fmt_bound = |b: Option<f64>| b.map_or("-".to_string(), |v| v.to_string());
        s.push_str(&format!("band: [{}, {}]\n", fmt_bound(self.band.0), fmt_bound(self.band.1)));
        let ok = self.exponents.iter().filter(|e| self.in_band(**e)).count();
        s.push_str(&format!("rates: {} in band, {} outside\n", ok, self.exponents.len() - ok));
        if self.exponents.len() == 1 {
            match (self.exponents[0], self.fits[0]) {
                (Some(e), Some(f)) => s.push_str(&format!("exponent: {e:.6} (log residual {:.3e})\n", f.residual)),
                _ => s.push_str("exponent: n/a\n"),
            }
        }
        s.push_str(&format!("overall: {}\n", if self.pass() { "PASS" } else { "FAIL" }));
        s
    }

    fn in_band(&self, e: Option<f64>) -> bool {
        match e {
            Some(e) => self.band.0.is_none_or(|lo| e >= lo) && self.band.1.is_none_or(|hi| e <= hi),
            None => self.band == (None, None),
        }
    }
}

/// How a group's fit turns into the reported exponent.
#[derive(Clone, Copy)]
enum Exponent {
    Slope,
    NegSlope,
    HalfSlope,
}

fn build_report(
    cfg: &ExperimentConfig,
    label: &str,
    rows: Vec<RateRow>,
    groups: usize,
    kind: Exponent,
    default_band: (Option<f64>, Option<f64>),
) -> RateReport {
    let e = &cfg.experiment;
    let fits: Vec<Option<RateFit>> = (0..groups)
        .map(|g| {
            let pts: Vec<(f64, f64)> =
                rows.iter().filter(|r| r.group == g && r.parameter > 0.0).map(|r| (r.parameter, r.measured)).collect();
            fit_rate(&pts).ok()
        })
        .collect();
    let exponents = fits
        .iter()
        .map(|f| {
            f.map(|f| match kind {
                Exponent::Slope => f.slope,
                Exponent::NegSlope => -f.slope,
                Exponent::HalfSlope => 0.5 * f.slope,
            })
        })
        .collect();
    let band = if e.band_lo.is_some() || e.band_hi.is_some() { (e.band_lo, e.band_hi) } else { default_band };
    RateReport { experiment: e.id, measured_label: label.into(), rows, fits, exponents, band }
}

fn expect(cfg: &ExperimentConfig, id: ExperimentId) -> Result<()> {
    if cfg.experiment.id != id {
        return Err(Error::Config(format!("config is for {}, not {id}", cfg.experiment.id)));
    }
    Ok(())
}

fn row_or_fail(group: usize, parameter: f64, r: Result<(f64, f64)>, tol: f64) -> RateRow {
    match r {
        Ok((measured, rhs)) => RateRow::new(group, parameter, measured, rhs, tol),
        Err(e) => RateRow::failed(group, parameter, &e),
    }
}

/// Bound input for the pair `(m, n)` ordered so that `m ≤ n`.
fn ordered_input(f0: &DensityField, m: f64, n: f64, t: f64) -> BoundInput {
    BoundInput::from_field(f0, m.min(n), m.max(n), t)
}

/// `W₂(μₜ, νₜ)` for exponents `m` and each ladder `n` against `C √t |m − n|`.
pub fn run_pme_exponent(cfg: &ExperimentConfig) -> Result<RateReport> {
    expect(cfg, ExperimentId::PmeExponent)?;
    let e = &cfg.experiment;
    let f0 = cfg.initial_field()?;
    let mu = solve_pme(&cfg.pme_config(e.m)?, &f0)?;
    let rows = e
        .ladder
        .par_iter()
        .map(|&n| {
            let r = (|| {
                let nu = solve_pme(&cfg.pme_config(n)?, &f0)?;
                let w = wasserstein(2.0, mu.last(), nu.last())?;
                Ok((w, pme_exponent_bound(&ordered_input(&f0, e.m, n, e.t))?))
            })();
            row_or_fail(0, (e.m - n).abs(), r, e.margin_tol)
        })
        .collect();
    Ok(build_report(cfg, "W2", rows, 1, Exponent::Slope, (Some(0.85), Some(1.15))))
}

/// `W₂(μ_{m,t}, μ₀)` along the `m` ladder against the incompressible-limit bound, with
/// `𝒞 = max_m ∫μ₀^{2m}` and the limit identified with `μ₀`.
pub fn run_mesa(cfg: &ExperimentConfig) -> Result<RateReport> {
    expect(cfg, ExperimentId::Mesa)?;
    let e = &cfg.experiment;
    let f0 = cfg.initial_field()?;
    if f0.max() >= 1.0 {
        return Err(Error::Range(format!("initial density must stay below 1, max is {}", f0.max())));
    }
    let cal_c = e.ladder.iter().map(|m| f0.integral_pow(2.0 * m)).fold(0.0, f64::max);
    let rows = e
        .ladder
        .par_iter()
        .map(|&m| {
            let r = (|| {
                let traj = solve_pme(&cfg.pme_config(m)?, &f0)?;
                let w = wasserstein(2.0, traj.last(), &f0.clone().with_time(e.t))?;
                Ok((w, mesa_bound(m, e.t, cal_c, 0.0)?))
            })();
            row_or_fail(0, m, r, e.margin_tol)
        })
        .collect();
    Ok(build_report(cfg, "W2", rows, 1, Exponent::NegSlope, (Some(0.4), None)))
}

/// `W₂²(μ^ε_t, μₜ)` at time `t` for a kernel scaled to `ε`; the local limit is the quadratic
/// porous medium equation with `D = ½`.
fn nonlocal_gap(cfg: &ExperimentConfig, kernel: &Kernel, grid: Grid1D, eps: f64) -> Result<f64> {
    let e = &cfg.experiment;
    let h = grid.cell_width();
    if !(eps >= 4.0 * h) {
        return Err(Error::KernelResolution { epsilon: eps, cell_width: h });
    }
    let f0 = cfg.initial.build(grid)?;
    let mut local = PmeConfig::new(2.0, grid, e.t).with_snapshots(e.snapshots);
    local.diffusivity = 0.5;
    let reference = solve_pme(&local, &f0)?;
    let ncfg = NonlocalConfig {
        kernel: kernel.clone(),
        epsilon: eps,
        grid,
        end_time: e.t,
        output_times: crate::solvers::uniform_times(e.t, e.snapshots),
    };
    let traj = solve_nonlocal(&ncfg, &f0)?;
    let w = wasserstein(2.0, traj.last(), reference.last())?;
    Ok(w * w)
}

/// `W₂²(μ^ε_t, μₜ)` along the `ε` ladder against the nonlocal bound. Each row is repeated on
/// the grid with twice the cells and the relative change is kept in the note.
pub fn run_nonlocal(cfg: &ExperimentConfig) -> Result<RateReport> {
    expect(cfg, ExperimentId::Nonlocal)?;
    let e = &cfg.experiment;
    let grid = cfg.grid()?;
    let fine = Grid1D::new(grid.kind(), 2 * grid.n_cells())?;
    let f0 = cfg.initial_field()?;
    let kernel = cfg.kernel.build()?;
    let (dx_sup, d2_neg) = derivative_stats(&f0);
    let rows = e
        .ladder
        .par_iter()
        .map(|&eps| {
            let r = nonlocal_gap(cfg, &kernel, grid, eps).map(|w2| {
                let input = NonlocalInput {
                    t: e.t,
                    epsilon: eps,
                    dx_sup,
                    linf: f0.max(),
                    d2_neg,
                    kernel_moment: kernel.second_moment(),
                };
                (w2, nonlocal_bound(&input))
            });
            let mut row = row_or_fail(0, eps, r, e.margin_tol);
            if row.note.is_empty() {
                row.note = match nonlocal_gap(cfg, &kernel, fine, eps) {
                    Ok(w2) => format!("refined {w2:e} change {:.3}", (w2 - row.measured) / row.measured),
                    Err(err) => format!("refinement unavailable: {}", err.to_string().replace([',', '\n'], ";")),
                };
            }
            row
        })
        .collect();
    Ok(build_report(cfg, "W2^2", rows, 1, Exponent::HalfSlope, (Some(0.8), Some(1.2))))
}

/// `∫₀ᵗ∫|∇V_μ − ∇V_ν|²μₛ` and `∫₀ᵗ∫|∇(W_μ − W_ν)∗μₛ|²μₛ` along `traj` by the trapezoid rule.
pub fn potential_mismatch(traj: &Trajectory, mu: &PotentialPair, nu: &PotentialPair) -> (f64, f64) {
    let per_snapshot: Vec<(f64, f64)> = traj
        .snapshots
        .iter()
        .map(|s| {
            let xs = s.grid().centers();
            let v = s.integrate(|x| (mu.v.grad(x) - nu.v.grad(x)).powi(2));
            let wm = mu.w.convolve_grad(s, &xs);
            let wn = nu.w.convolve_grad(s, &xs);
            let h = s.grid().cell_width();
            let w = ksum(s.values().iter().zip(wm.iter().zip(&wn)).map(|(rho, (a, b))| rho * (a - b) * (a - b))) * h;
            (v, w)
        })
        .collect();
    let times = traj.times();
    let trap = |sel: fn(&(f64, f64)) -> f64| {
        ksum(
            times.windows(2).zip(per_snapshot.windows(2)).map(|(t, p)| 0.5 * (t[1] - t[0]) * (sel(&p[0]) + sel(&p[1]))),
        )
    };
    (trap(|p| p.0), trap(|p| p.1))
}

/// `W₂(μₜ, νₜ)` for perturbed potentials or exponents against the three-term bound.
pub fn run_aggdiff(cfg: &ExperimentConfig) -> Result<RateReport> {
    expect(cfg, ExperimentId::Aggdiff)?;
    let e = &cfg.experiment;
    let f0 = cfg.initial_field()?;
    let pot_mu = cfg.potentials_mu();
    let mu = solve_aggdiff(&AggDiffConfig { pme: cfg.pme_config(e.m)?, potentials: pot_mu }, &f0)?;
    let rows = e
        .ladder
        .par_iter()
        .map(|&p| {
            let (n, delta, parameter) = match e.vary {
                AggdiffLadder::Delta => (e.n.unwrap_or(e.m), p, p),
                AggdiffLadder::N => (p, e.delta, (e.m - p).abs()),
            };
            let r = (|| {
                let pot_nu = cfg.potentials_nu(delta);
                let nu = solve_aggdiff(&AggDiffConfig { pme: cfg.pme_config(n)?, potentials: pot_nu }, &f0)?;
                let w = wasserstein(2.0, mu.last(), nu.last())?;
                let (vm, wm) = potential_mismatch(&mu, &pot_mu, &pot_nu);
                let mut input = ordered_input(&f0, e.m, n, e.t);
                input.pot_mu = pot_mu;
                input.pot_nu = pot_nu;
                Ok((w, aggdiff_bound(&input, vm, wm)?.total()))
            })();
            row_or_fail(0, parameter, r, e.margin_tol)
        })
        .collect();
    Ok(build_report(cfg, "W2", rows, 1, Exponent::Slope, (None, None)))
}

/// Domain branch of the heat-limit constant for a grid; a line is treated as a truncation of ℝ.
pub fn heat_domain(grid: &Grid1D) -> HeatDomain {
    if grid.is_circle() {
        HeatDomain::circle(0.5 * grid.length())
    } else {
        HeatDomain::real_line()
    }
}

/// `W₂²(heat, PME_n)` along the `n` ladder against `C(t, α, n, μ₀)|n − 1|`.
pub fn run_heat_limit(cfg: &ExperimentConfig) -> Result<RateReport> {
    expect(cfg, ExperimentId::HeatLimit)?;
    let e = &cfg.experiment;
    if let Some(n) = e.ladder.iter().find(|n| !(**n >= 1.0 && **n < e.alpha)) {
        return Err(Error::Range(format!("heat limit needs 1 ≤ n < α = {}, got n = {n}", e.alpha)));
    }
    let grid = cfg.grid()?;
    let f0 = cfg.initial_field()?;
    let heat = solve_pme(&cfg.pme_config(1.0)?, &f0)?;
    let domain = heat_domain(&grid);
    let rows = e
        .ladder
        .par_iter()
        .map(|&n| {
            let r = (|| {
                let nu = solve_pme(&cfg.pme_config(n)?, &f0)?;
                let w = wasserstein(2.0, heat.last(), nu.last())?;
                let input = HeatInput {
                    t: e.t,
                    alpha: e.alpha,
                    n,
                    int_alpha: f0.integral_pow(e.alpha),
                    second_moment: moment(&f0, 2.0),
                    domain,
                };
                Ok((w * w, heat_limit_constant(&input)? * (n - 1.0).abs()))
            })();
            row_or_fail(0, (n - 1.0).abs(), r, e.margin_tol)
        })
        .collect();
    Ok(build_report(cfg, "W2^2", rows, 1, Exponent::Slope, (Some(0.8), Some(1.2))))
}

/// Random smooth field `Σ_{k≤3} (a_k sin(kπx/R) + b_k cos(kπx/R))/k` with `|a_k|, |b_k| ≤ ½`.
pub fn random_field(grid: Grid1D, rng: &mut ChaCha8Rng) -> Result<VelocityFieldSample> {
    let r = 0.5 * grid.length();
    let coef: Vec<(f64, f64)> = (1..=3).map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
    VelocityFieldSample::autonomous(grid, move |x| {
        coef.iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let w = (k + 1) as f64 * std::f64::consts::PI * x / r;
                (a * w.sin() + b * w.cos()) / (k + 1) as f64
            })
            .sum()
    })
}

/// Seeds of the flow study: 16 equally spaced points.
pub fn flow_seeds(grid: &Grid1D) -> Vec<f64> {
    (0..16).map(|k| grid.left() + (k as f64 + 0.5) * grid.length() / 16.0).collect()
}

/// Largest atom count of the transport cross-check.
pub const MAX_ATOMS: usize = 32;

/// One seeded instance of the transport cross-check.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCase {
    pub case: usize,
    pub p: f64,
    pub domain: AtomDomain,
    pub quantile: f64,
    pub oracle: f64,
}

impl OracleCase {
    pub fn gap(&self) -> f64 {
        (self.quantile - self.oracle).abs()
    }
}

/// Between 1 and [`MAX_ATOMS`] unit-mass atoms placed uniformly on `[−1, 1)`.
pub fn random_atoms(rng: &mut ChaCha8Rng) -> Vec<Atom> {
    let k = rng.gen_range(1..=MAX_ATOMS);
    let raw: Vec<Atom> = (0..k).map(|_| Atom { x: rng.gen_range(-1.0..1.0), w: rng.gen_range(0.05..1.0) }).collect();
    let total: f64 = raw.iter().map(|a| a.w).sum();
    raw.into_iter().map(|a| Atom { w: a.w / total, ..a }).collect()
}

/// Quantile distance against the linear-programming oracle on `cases` seeded pairs, cycling
/// through line and circle (`r = 1`) and `p ∈ {1, 2}`.
pub fn oracle_cases(seed: u64, cases: usize) -> Result<Vec<OracleCase>> {
    (0..cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(case as u64);
            let domain = if case % 2 == 0 { AtomDomain::Line } else { AtomDomain::Circle { r: 1.0 } };
            let p = if (case / 2) % 2 == 0 { 1.0 } else { 2.0 };
            let (f, g) = (random_atoms(&mut rng), random_atoms(&mut rng));
            let quantile = wasserstein_atoms(p, &f, &g, domain)?;
            let oracle = discrete_ot_oracle(&f, &g, p, domain)?;
            Ok(OracleCase { case, p, domain, quantile, oracle })
        })
        .collect()
}

/// Composition gap of random field pairs along the `h` ladder, one group per pair.
pub fn run_trotter_kato(cfg: &ExperimentConfig) -> Result<RateReport> {
    expect(cfg, ExperimentId::TrotterKato)?;
    let e = &cfg.experiment;
    let grid = cfg.grid()?;
    let seeds = flow_seeds(&grid);
    let rows: Vec<RateRow> = (0..e.cases)
        .into_par_iter()
        .flat_map_iter(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(e.seed);
            rng.set_stream(case as u64);
            let pair = random_field(grid, &mut rng).and_then(|a| Ok((a, random_field(grid, &mut rng)?)));
            e.ladder
                .iter()
                .map(|&h| {
                    let r = pair.as_ref().map_err(|err| Error::Invalid(err.to_string())).and_then(|(v1, v2)| {
                        let g = trotter_kato_gap(v1, v2, e.t, h, &seeds, 0.0)?;
                        Ok((g.lhs, g.rhs + g.integrator_budget))
                    });
                    row_or_fail(case, h, r, 0.0)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(build_report(cfg, "gap", rows, e.cases, Exponent::Slope, (Some(1.8), Some(2.2))))
}

/// Dispatches on the experiment id.
pub fn run(cfg: &ExperimentConfig) -> Result<RateReport> {
    match cfg.experiment.id {
        ExperimentId::PmeExponent => run_pme_exponent(cfg),
        ExperimentId::Mesa => run_mesa(cfg),
        ExperimentId::Nonlocal => run_nonlocal(cfg),
        ExperimentId::Aggdiff => run_aggdiff(cfg),
        ExperimentId::HeatLimit => run_heat_limit(cfg),
        ExperimentId::TrotterKato => run_trotter_kato(cfg),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

/// Writes `<id>.csv` and `summary.txt` into `dir`.
pub fn write_report(report: &RateReport, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join(format!("{}.csv", report.experiment)), &report.to_csv())?;
    write_file(&dir.join("summary.txt"), &report.summary())
}

/// The base trajectory of an experiment: the `μ` run (first ladder entry for the `m` and `ε`
/// ladders, the heat equation for the heat limit).
pub fn base_trajectory(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let e = &cfg.experiment;
    let f0 = cfg.initial_field()?;
    match e.id {
        ExperimentId::PmeExponent => solve_pme(&cfg.pme_config(e.m)?, &f0),
        ExperimentId::Mesa => solve_pme(&cfg.pme_config(e.ladder[0])?, &f0),
        ExperimentId::HeatLimit => solve_pme(&cfg.pme_config(1.0)?, &f0),
        ExperimentId::Aggdiff => {
            solve_aggdiff(&AggDiffConfig { pme: cfg.pme_config(e.m)?, potentials: cfg.potentials_mu() }, &f0)
        }
        ExperimentId::Nonlocal => {
            let ncfg = NonlocalConfig {
                kernel: cfg.kernel.build()?,
                epsilon: e.ladder[0],
                grid: cfg.grid()?,
                end_time: e.t,
                output_times: crate::solvers::uniform_times(e.t, e.snapshots),
            };
            solve_nonlocal(&ncfg, &f0)
        }
        ExperimentId::TrotterKato => Err(Error::Config("the flow study has no density trajectory".into())),
    }
}

/// Writes the snapshots of [`base_trajectory`] as `snapshot_<k>.csv`; returns the paths.
pub fn solve_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let traj = base_trajectory(cfg)?;
    ensure_dir(dir)?;
    traj.snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let p = dir.join(format!("snapshot_{k:04}.csv"));
            save_density(s, &p).map(|_| p)
        })
        .collect()
}

/// Comparison data for the support forecast: the smallest amplitude the growth constraint
/// admits (at least 1) and the first `R₀` on a ×1.25 ladder whose profile dominates `μ₀`.
pub fn support_input(f0: &DensityField, m: f64, diffusivity: f64, pot: &PotentialPair) -> Result<SupportInput> {
    let lap = pot.v_consts.lap_sup + pot.w_consts.lap_sup;
    let c_flux = (lap * (m - 1.0) / m).powf(1.0 / (m - 1.0)).max(1.0);
    let reach = support_radius(f0, 0.0);
    let mut input = SupportInput {
        m,
        c_flux,
        v: pot.v_consts,
        w: pot.w_consts,
        second_moment: moment(f0, 2.0),
        energy: free_energy(f0, m, diffusivity, pot),
        r0: (0.5 * reach * reach).max(f64::MIN_POSITIVE),
        d: 1,
    };
    for _ in 0..200 {
        if input.dominates(f0) {
            return Ok(input);
        }
        input.r0 *= 1.25;
    }
    Err(Error::ConstraintViolation("no comparison profile dominates the initial density".into()))
}

/// Estimate suite on the base trajectory: mass drift, maximum principle where it applies,
/// energy identities on a dense rerun, the regularity estimates for quadratic runs, the tail
/// estimate for `m > 1`, support confinement for confined aggregation-diffusion and, for the exponent
/// study, the differential inequality against the first ladder entry.
pub fn verify(cfg: &ExperimentConfig, slack: &Slack) -> Result<Vec<DiagnosticReport>> {
    let e = &cfg.experiment;
    let traj = base_trajectory(cfg)?;
    let dense = if e.snapshots < IDENTITY_SNAPSHOTS {
        let mut c = cfg.clone();
        c.experiment.snapshots = IDENTITY_SNAPSHOTS;
        Some(base_trajectory(&c)?)
    } else {
        None
    };
    let dense = dense.as_ref().unwrap_or(&traj);
    let mut out = vec![mass_drift(&traj)];
    let local = !matches!(e.id, ExperimentId::Nonlocal);
    let pot = cfg.potentials_mu();
    let potential_free = pot.is_zero() || e.id != ExperimentId::Aggdiff;
    if potential_free {
        out.push(maximum_principle(&traj));
    }
    if local && potential_free {
        out.push(energy_identity_residual(dense, 1, slack)?);
        if traj.model.exponent() == Some(2.0) {
            out.extend(aronson_benilan_suite(&traj, slack)?.reports().into_iter().cloned());
        }
    }
    if local && traj.model.exponent().is_some_and(|m| m > 1.0) {
        out.push(tail_estimate_check(&traj, slack)?);
    }
    if e.id == ExperimentId::Aggdiff && !potential_free {
        out.push(weighted_energy_aggdiff(dense, 1, slack)?);
        if matches!(traj.grid().kind(), DomainKind::Line { .. }) && e.m > 1.0 {
            let input = support_input(traj.initial(), e.m, e.diffusivity, &pot)?;
            let forecast = support_radius_forecast(&input, &traj.times())?;
            out.push(support_confinement_check(&traj, &forecast, 0.0, slack)?);
        }
    }
    if e.id == ExperimentId::PmeExponent {
        let nu = solve_pme(&cfg.pme_config(e.ladder[0])?, traj.initial())?;
        let rhs = mismatch_series(&traj, &nu.model)?;
        out.push(evi_rate_check(&traj, &nu, 0.0, &rhs, slack)?);
    }
    Ok(out)
}

/// Writes `diagnostics.csv` and `summary.txt` for [`verify`] results.
pub fn write_diagnostics(reports: &[DiagnosticReport], dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let mut csv = format!("{DIAGNOSTIC_HEADER}\n");
    for r in reports {
        csv.push_str(&r.csv_rows());
    }
    write_file(&dir.join("diagnostics.csv"), &csv)?;
    let passed = reports.iter().filter(|r| r.pass).count();
    let mut s = format!("checks: {} passed, {} failed\n", passed, reports.len() - passed);
    for r in reports {
        s.push_str(&format!(
            "{}: max residual {:e}, tol {:e}, {}\n",
            r.check,
            r.max_residual,
            r.tol,
            if r.pass { "pass" } else { "FAIL" }
        ));
    }
    write_file(&dir.join("summary.txt"), &s)
}
