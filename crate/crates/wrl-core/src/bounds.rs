//! Evaluators for the explicit constants and right-hand sides of the stability estimates.

use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::measures::{ksum, log_sup, moment, DensityField};
use crate::solvers::{GrowthConstants, PotentialPair};

/// Grid size per free parameter when minimizing over `α` or `β`.
pub const PARAM_GRID: usize = 32;

/// `p ↦ ∫μ₀ᵖ`, either measured from a density or prescribed.
#[derive(Clone, Debug, PartialEq)]
pub enum PowerIntegrals {
    Field(DensityField),
    Constant(f64),
}

impl PowerIntegrals {
    pub fn eval(&self, p: f64) -> f64 {
        match self {
            PowerIntegrals::Field(f) => f.integral_pow(p),
            PowerIntegrals::Constant(c) => *c,
        }
    }
}

/// Every quantity entering the bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInput {
    pub m: f64,
    pub n: f64,
    /// Fixed `α ∈ [0, m−1)`; minimized over a grid when absent.
    pub alpha: Option<f64>,
    /// Fixed `β ∈ [0, 2n−m−1)`; minimized over a grid when absent.
    pub beta: Option<f64>,
    pub t: f64,
    pub powers: PowerIntegrals,
    /// `‖μ₀‖_∞`.
    pub linf: f64,
    /// `‖log μ₀‖_∞`, infinite when `μ₀` vanishes somewhere.
    pub log_sup: f64,
    /// `∫|x|²dμ₀`.
    pub second_moment: f64,
    /// Potentials of the `μ` equation.
    pub pot_mu: PotentialPair,
    /// Potentials of the `ν` equation.
    pub pot_nu: PotentialPair,
}

impl BoundInput {
    /// Input with all functionals measured from `f` and no potentials.
    pub fn from_field(f: &DensityField, m: f64, n: f64, t: f64) -> Self {
        Self {
            m,
            n,
            alpha: None,
            beta: None,
            t,
            powers: PowerIntegrals::Field(f.clone()),
            linf: f.max(),
            log_sup: log_sup(f),
            second_moment: moment(f, 2.0),
            pot_mu: PotentialPair::default(),
            pot_nu: PotentialPair::default(),
        }
    }

    /// `L_μ(t) = exp(t(‖ΔV_μ‖_∞ + ‖ΔW_μ‖_∞))`.
    pub fn l_mu(&self, t: f64) -> f64 {
        self.pot_mu.growth_factor(t)
    }
}

/// Comparison of a measured quantity against its bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub theorem: String,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub slack: f64,
    pub pass: bool,
    /// Free-form echo of the inputs.
    pub inputs: String,
}

impl BoundReport {
    pub fn new(theorem: impl Into<String>, t: f64, lhs: f64, rhs: f64, slack: f64, inputs: impl Into<String>) -> Self {
        let margin = rhs - lhs;
        Self { theorem: theorem.into(), t, lhs, rhs, margin, slack, pass: margin >= -slack, inputs: inputs.into() }
    }

    /// `theorem,t,lhs,rhs,margin,pass`.
    pub fn csv_row(&self) -> String {
        format!("{},{},{:e},{:e},{:e},{}", self.theorem, self.t, self.lhs, self.rhs, self.margin, self.pass)
    }
}

pub const REPORT_HEADER: &str = "theorem,t,lhs,rhs,margin,pass";

/// `min(1/(eκ) + ‖μ₀‖^{κ+1}, ‖μ₀‖^κ ‖log μ₀‖)`; at `κ = 0` only the logarithmic branch is finite.
pub fn c_kappa(input: &BoundInput, kappa: f64) -> f64 {
    c_kappa_scaled(input, kappa, 1.0)
}

/// Variant with `L_μ(t)` in both branches.
pub fn c_kappa_aggdiff(input: &BoundInput, kappa: f64, t: f64) -> f64 {
    c_kappa_scaled(input, kappa, input.l_mu(t))
}

fn c_kappa_scaled(input: &BoundInput, kappa: f64, l: f64) -> f64 {
    let first = if kappa > 0.0 { 1.0 / (E * kappa) + l * input.linf.powf(kappa + 1.0) } else { f64::INFINITY };
    let second = input.linf.powf(kappa) * (input.log_sup + l.ln());
    first.min(second)
}

/// The constant together with the free parameters that realize it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmeConstant {
    pub value: f64,
    pub alpha: f64,
    pub beta: f64,
}

fn check_exponents(m: f64, n: f64) -> Result<()> {
    if !(m > 1.0) || !(n >= m) || !n.is_finite() {
        return Err(Error::Range(format!("exponents need 1 < m ≤ n, got m = {m}, n = {n}")));
    }
    Ok(())
}

fn check_param(name: &str, v: f64, hi: f64) -> Result<()> {
    if !(v >= 0.0 && v < hi) {
        return Err(Error::Range(format!("{name} = {v} outside [0, {hi})")));
    }
    Ok(())
}

/// Minimizes `term` over the fixed value or a grid of the admissible range `[0, hi)`.
fn minimize(fixed: Option<f64>, hi: f64, term: impl Fn(f64) -> f64) -> (f64, f64) {
    let candidates: Vec<f64> = match fixed {
        Some(v) => vec![v],
        None => (0..PARAM_GRID).map(|k| hi * k as f64 / PARAM_GRID as f64).collect(),
    };
    candidates.into_iter().map(|a| (term(a), a)).filter(|(v, _)| !v.is_nan()).fold((f64::INFINITY, 0.0), |best, cur| {
        if cur.0 < best.0 {
            cur
        } else {
            best
        }
    })
}

fn pme_constant_with(input: &BoundInput, ck: impl Fn(f64) -> f64) -> Result<PmeConstant> {
    let (m, n) = (input.m, input.n);
    check_exponents(m, n)?;
    let (ahi, bhi) = (m - 1.0, 2.0 * n - m - 1.0);
    if let Some(a) = input.alpha {
        check_param("α", a, ahi)?;
    }
    if let Some(b) = input.beta {
        check_param("β", b, bhi)?;
    }
    let p = &input.powers;
    let first = (m * (2.0 * n - m - 1.0) * (2.0 * n - m)).sqrt().recip() * p.eval(2.0 * n - m).sqrt();
    let (second, alpha) =
        minimize(input.alpha, ahi, |a| m / (m * (m - 1.0 - a) * (m - a)).sqrt() * ck(a / 2.0) * p.eval(m - a).sqrt());
    let (third, beta) = minimize(input.beta, bhi, |b| {
        m / (m * (2.0 * n - m - 1.0 - b) * (2.0 * n - m - b)).sqrt() * ck(b / 2.0) * p.eval(2.0 * n - m - b).sqrt()
    });
    Ok(PmeConstant { value: first + second + third, alpha, beta })
}

/// The three-term constant of the exponent-stability estimate for the porous medium equation.
pub fn pme_constant_c(input: &BoundInput) -> Result<PmeConstant> {
    pme_constant_with(input, |k| c_kappa(input, k))
}

/// `C √t |m − n|`.
pub fn pme_exponent_bound(input: &BoundInput) -> Result<f64> {
    if input.m == input.n {
        check_exponents(input.m, input.n)?;
        return Ok(0.0);
    }
    Ok(pme_constant_c(input)?.value * input.t.sqrt() * (input.n - input.m).abs())
}

/// `W₂(μ_{m,0}, μ_{∞,0}) + √t/√(m−1) + √(2t)/√m · 𝒞^{1/2}`.
pub fn mesa_bound(m: f64, t: f64, cal_c: f64, w0: f64) -> Result<f64> {
    if !(m >= 2.0) {
        return Err(Error::Range(format!("mesa bound needs m ≥ 2, got {m}")));
    }
    Ok(w0 + (t / (m - 1.0)).sqrt() + (2.0 * t / m).sqrt() * cal_c.sqrt())
}

/// Inputs of the nonlocal-to-local bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonlocalInput {
    pub t: f64,
    pub epsilon: f64,
    /// `‖∂ₓμ₀‖_∞`.
    pub dx_sup: f64,
    /// `‖μ₀‖_∞`.
    pub linf: f64,
    /// `‖|∂ₓ²μ₀|⁻‖_M`.
    pub d2_neg: f64,
    /// `‖ω|y|²‖_{L¹}` of the unscaled kernel.
    pub kernel_moment: f64,
}

/// Bound on `W₂²(μ^ε_t, μ_t)`: `2tε²(5t‖∂ₓμ₀‖² + ½‖μ₀‖)‖|∂ₓ²μ₀|⁻‖ ‖ω|y|²‖`.
pub fn nonlocal_bound(input: &NonlocalInput) -> f64 {
    let NonlocalInput { t, epsilon, dx_sup, linf, d2_neg, kernel_moment } = *input;
    2.0 * t * epsilon * epsilon * (5.0 * t * dx_sup * dx_sup + 0.5 * linf) * d2_neg * kernel_moment
}

/// `‖∂ₓμ‖_∞` and `‖|∂ₓ²μ|⁻‖_M` from adjacent differences (zero extension on a line).
pub fn derivative_stats(f: &DensityField) -> (f64, f64) {
    let g = f.grid();
    let h = g.cell_width();
    let v = f.values();
    let n = v.len();
    let at = |i: i64| -> f64 {
        if g.is_circle() {
            v[i.rem_euclid(n as i64) as usize]
        } else if i < 0 || i >= n as i64 {
            0.0
        } else {
            v[i as usize]
        }
    };
    let (lo, hi) = if g.is_circle() { (0, n as i64) } else { (-1, n as i64 + 1) };
    let dx = (lo..hi).map(|i| (at(i + 1) - at(i)).abs() / h).fold(0.0, f64::max);
    let d2 = ksum((lo..hi).map(|i| (-(at(i + 1) - 2.0 * at(i) + at(i - 1)) / (h * h)).max(0.0) * h));
    (dx, d2)
}

/// Rate `Λ` of the stability estimate for aggregation-diffusion equations.
pub fn lambda_select(c_v: f64, c_w: f64, v_is_zero: bool) -> f64 {
    if v_is_zero {
        c_w
    } else if c_w > 0.0 {
        c_v
    } else {
        c_v + c_w
    }
}

/// `(1 − e^{−2Λt})/(2Λ)`, equal to `t` at `Λ = 0`.
pub fn time_factor(lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        t
    } else {
        -(-2.0 * lambda * t).exp_m1() / (2.0 * lambda)
    }
}

/// Terms of the aggregation-diffusion bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggDiffBound {
    pub lambda: f64,
    pub time_factor: f64,
    pub constant: PmeConstant,
    pub exponent_term: f64,
    pub confinement_term: f64,
    pub interaction_term: f64,
}

impl AggDiffBound {
    pub fn total(&self) -> f64 {
        self.exponent_term + self.confinement_term + self.interaction_term
    }
}

/// Three-term bound given `∫₀ᵗ∫|∇V_μ − ∇V_ν|²μₛ` and `∫₀ᵗ∫|∇(W_μ − W_ν)∗μₛ|²μₛ`.
pub fn aggdiff_bound(input: &BoundInput, v_mismatch: f64, w_mismatch: f64) -> Result<AggDiffBound> {
    check_exponents(input.m, input.n)?;
    let nu = &input.pot_nu;
    let lambda = lambda_select(nu.v_consts.hess_lower, nu.w_consts.hess_lower, nu.v.is_zero());
    let tf = time_factor(lambda, input.t);
    let constant = if input.m == input.n {
        PmeConstant { value: 0.0, alpha: 0.0, beta: 0.0 }
    } else {
        pme_constant_with(input, |k| c_kappa_aggdiff(input, k, input.t))?
    };
    let l = input.l_mu(input.t);
    let exponent_term =
        constant.value * tf.sqrt() * l.powf((2.0 * input.n - input.m - 1.0) / 2.0) * (input.n - input.m).abs();
    Ok(AggDiffBound {
        lambda,
        time_factor: tf,
        constant,
        exponent_term,
        confinement_term: tf.sqrt() * v_mismatch.max(0.0).sqrt(),
        interaction_term: tf.sqrt() * w_mismatch.max(0.0).sqrt(),
    })
}

/// Domain branch of the heat-limit constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeatDomain {
    /// Whole space or periodic cell of dimension `d`, with `∫_Ω e^{−|x|/2}`.
    Unbounded { d: usize, exp_integral: f64 },
    /// Bounded domain with `sup|x| ≤ r`.
    Bounded { r: f64, exp_integral: f64 },
}

impl HeatDomain {
    /// `∫_ℝ e^{−|x|/2} = 4`.
    pub fn real_line() -> Self {
        HeatDomain::Unbounded { d: 1, exp_integral: 4.0 }
    }

    /// Interval `[−r, r]` with `∫ e^{−|x|/2} = 4(1 − e^{−r/2})`.
    pub fn interval(r: f64) -> Self {
        HeatDomain::Bounded { r, exp_integral: -4.0 * (-r / 2.0).exp_m1() }
    }

    pub fn exp_integral(&self) -> f64 {
        match *self {
            HeatDomain::Unbounded { exp_integral, .. } | HeatDomain::Bounded { exp_integral, .. } => exp_integral,
        }
    }

    /// Circle `(−r, r]` as a periodic cell.
    pub fn circle(r: f64) -> Self {
        HeatDomain::Unbounded { d: 1, exp_integral: -4.0 * (-r / 2.0).exp_m1() }
    }
}

/// Inputs of the heat-limit constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatInput {
    pub t: f64,
    pub alpha: f64,
    pub n: f64,
    /// `‖μ₀‖_{L^α}^α`.
    pub int_alpha: f64,
    pub second_moment: f64,
    pub domain: HeatDomain,
}

/// `C(t, α, n, μ₀)` with `W₂²(heat, PME_n) ≤ C |n − 1|`.
pub fn heat_limit_constant(input: &HeatInput) -> Result<f64> {
    let HeatInput { t, alpha, n, int_alpha, second_moment, domain } = *input;
    if !(n >= 1.0 && n < alpha) {
        return Err(Error::Range(format!("heat limit needs 1 ≤ n < α, got n = {n}, α = {alpha}")));
    }
    let lead = 4.0 / (alpha - n).powi(2) * int_alpha;
    let tail = 16.0 / (E * E);
    Ok(match domain {
        HeatDomain::Unbounded { d, exp_integral } => {
            4.0 * t * (lead + second_moment + d as f64 * t * (2.0 + int_alpha) + tail * exp_integral)
        }
        HeatDomain::Bounded { r, exp_integral } => 4.0 * t * (lead + r * r + tail * exp_integral),
    })
}

/// Inputs of the support-radius comparison ODE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportInput {
    pub m: f64,
    /// Amplitude `C` of the comparison profile `C(R − |x|²/2)₊^{1/(m−1)}`.
    pub c_flux: f64,
    pub v: GrowthConstants,
    pub w: GrowthConstants,
    /// `∫|x|²dμ₀`.
    pub second_moment: f64,
    /// `ℱ[μ₀]`.
    pub energy: f64,
    pub r0: f64,
    pub d: usize,
}

impl SupportInput {
    /// `B(t)`.
    pub fn b(&self, t: f64) -> f64 {
        let (v, w) = (&self.v.c, &self.w.c);
        let e = (self.energy + v[0] + w[0]).max(0.0);
        v[3] + w[3] + w[4] * self.second_moment.sqrt() + w[4] * t.sqrt() * e.sqrt()
    }

    /// Constant part of the linear growth rate.
    pub fn rate(&self) -> f64 {
        let m = self.m;
        2.0 * self.c_flux.powf(m - 1.0) * m / (m - 1.0) + 2.0 * (self.v.c[4] + self.w.c[4])
    }

    fn check(&self) -> Result<()> {
        let m = self.m;
        if !(m > 1.0) {
            return Err(Error::Range(format!("support forecast needs m > 1, got {m}")));
        }
        let lhs = self.c_flux.powf(m - 1.0) * self.d as f64 * m / (m - 1.0);
        let rhs = self.v.lap_sup + self.w.lap_sup;
        if lhs < rhs {
            return Err(Error::ConstraintViolation(format!("C^(m−1)·d·m/(m−1) = {lhs} below ‖ΔV‖ + ‖ΔW‖ = {rhs}")));
        }
        Ok(())
    }

    /// Comparison profile at time 0.
    pub fn profile(&self, r: f64, x: f64) -> f64 {
        self.c_flux * (r - 0.5 * x * x).max(0.0).powf(1.0 / (self.m - 1.0))
    }

    /// Whether the initial comparison profile dominates `f` on every cell (profile taken at the
    /// cell point farthest from the origin).
    pub fn dominates(&self, f: &DensityField) -> bool {
        let g = f.grid();
        f.values().iter().enumerate().all(|(i, v)| {
            let far = g.edge(i).abs().max(g.edge(i + 1).abs());
            *v <= 0.0 || self.profile(self.r0, far) >= *v
        })
    }
}

/// `R(t)` from `R′ = (rate + B(t))R + B(t)` by classical RK4 at the requested times.
pub fn support_radius_forecast(input: &SupportInput, times: &[f64]) -> Result<Vec<f64>> {
    input.check()?;
    let f = |t: f64, r: f64| (input.rate() + input.b(t)) * r + input.b(t);
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut r) = (0.0_f64, input.r0);
    for &target in times {
        if target < t {
            return Err(Error::Range("forecast times must be nondecreasing".into()));
        }
        let steps = ((target - t) * 2000.0).ceil().max(1.0) as usize;
        let dt = (target - t) / steps as f64;
        for _ in 0..steps {
            if dt == 0.0 {
                break;
            }
            let k1 = f(t, r);
            let k2 = f(t + 0.5 * dt, r + 0.5 * dt * k1);
            let k3 = f(t + 0.5 * dt, r + 0.5 * dt * k2);
            let k4 = f(t + dt, r + dt * k3);
            r += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += dt;
        }
        t = target;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
