//! `Γ(ε)`, the glassy system, the estimator filters `Ξ₁`, `Ξ₂` and the
//! Wiener filter, and the resulting MSE values and free energies.
//!
//! The two integral constraints on `(α₁, α₂)` are solved in the scaled
//! multipliers `a = α₁/2`, `b = α₂/(2ε)`. For fixed `b` the power constraint
//! is monotone in `a`, and the resulting energy is monotone in `b`, so both
//! nested roots are unique and bracketable.

use num_complex::Complex64;
use serde::Serialize;

use crate::rates::{classify_phase, rates_from_spectra, CriticalRates, Phase, PhaseLabel, DEFAULT_TIE_TOL};
use crate::solvers::{machine_precision, solve_scalar_root_to_precision, solve_system, RootConfig, SolverError};
use crate::spectrum::{mean, mean_by, ChannelSpectra, CompensatedSum, ProblemInstance};
use crate::{Error, Result};

/// Constraint residuals accepted without a Newton polish.
const RESIDUAL_TOL: f64 = 1e-10;
const MAX_BRACKET_STEPS: usize = 200;

/// A point of the scaled dual parametrization at fixed `b`.
#[derive(Debug, Clone, Copy)]
struct DualPoint {
    b: f64,
    /// `a − a_min`, kept separately so `u = 2a + |H′|²b` never cancels.
    t: f64,
    /// `min_m |H′_m|² b`
    floor: f64,
}

impl DualPoint {
    fn a(&self) -> f64 {
        self.t - 0.5 * self.floor
    }

    fn u(&self, sp: &ChannelSpectra, m: usize) -> f64 {
        2.0 * self.t + (sp.s[m] * self.b - self.floor)
    }

    fn energy(&self, sp: &ChannelSpectra) -> f64 {
        let b = self.b;
        mean_by(sp.len(), |m| {
            let u = self.u(sp, m);
            let c2 = sp.s[m] * sp.pt[m];
            let p = (u + b * b * c2) / (u * u);
            0.5 * sp.py[m] + 0.5 * sp.s[m] * p - b * c2 / u
        })
    }

    fn gamma(&self, sp: &ChannelSpectra) -> f64 {
        -0.5 * mean_by(sp.len(), |m| (sp.p_x * self.u(sp, m)).ln())
    }
}

fn power_gap_and_slope(sp: &ChannelSpectra, b: f64, floor: f64, t: f64) -> (f64, f64) {
    let mut f = CompensatedSum::default();
    let mut df = 0.0;
    for m in 0..sp.len() {
        let u = 2.0 * t + (sp.s[m] * b - floor);
        let num = u + b * b * sp.s[m] * sp.pt[m];
        f.add(num / (u * u));
        df += 2.0 / (u * u) - 4.0 * num / (u * u * u);
    }
    let n = sp.len() as f64;
    (f.value() / n - sp.p_x, df / n)
}

/// Solves the power constraint for `a` at fixed `b` by safeguarded Newton in
/// `t = a − a_min`.
fn solve_power_multiplier(sp: &ChannelSpectra, b: f64, t_guess: Option<f64>, max_iters: usize) -> Result<DualPoint> {
    let floor = sp.s.iter().fold(f64::INFINITY, |acc, v| acc.min(v * b));
    let gap = |t: f64| power_gap_and_slope(sp, b, floor, t);
    let start = t_guess.filter(|t| *t > 0.0 && t.is_finite()).unwrap_or(0.5 / sp.p_x);
    let (mut lo, mut hi) = (start, start);
    let mut steps = 0;
    while gap(lo).0 <= 0.0 {
        lo *= 0.5;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || lo == 0.0 {
            return Err(Error::solver(
                "power multiplier",
                SolverError::NoSignChange { lo, hi: start, f_lo: gap(lo).0, f_hi: gap(start).0 },
            ));
        }
    }
    while gap(hi).0 >= 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
            return Err(Error::solver(
                "power multiplier",
                SolverError::NoSignChange { lo: start, hi, f_lo: gap(start).0, f_hi: gap(hi).0 },
            ));
        }
    }
    let tol = 1e-14 * sp.p_x.max(1.0);
    let mut t = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    for _ in 0..max_iters.max(100) {
        let (f, df) = gap(t);
        if !f.is_finite() {
            return Err(Error::solver("power multiplier", SolverError::NonFinite { point: vec![b, t] }));
        }
        if f == 0.0 {
            return Ok(DualPoint { b, t, floor });
        }
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - f / df;
        // Near the root keep stepping until Newton stalls at rounding level.
        if f.abs() <= tol && (newton - t).abs() <= 2.0 * f64::EPSILON * t {
            return Ok(DualPoint { b, t: newton, floor });
        }
        t = if df < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(DualPoint { b, t, floor });
        }
    }
    Err(Error::solver(
        "power multiplier",
        SolverError::MaxIters { iterations: max_iters, residual: gap(t).0.abs(), point: vec![b, t] },
    ))
}

/// Runs a scalar root search whose closure may fail; the first inner error
/// takes precedence over the outer solver's report.
fn root_with_inner<F>(mut f: F, bracket: (f64, f64), cfg: &RootConfig) -> Result<std::result::Result<f64, SolverError>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut failure = None;
    let cfg = &machine_precision(cfg);
    let out = solve_scalar_root_to_precision(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        bracket,
        cfg,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Finds a sign change of the decreasing function `f` starting from a `b`
/// of the given sign and scale, doubling outward.
fn bracket_decreasing<F>(f: &mut F, positive: bool, scale: f64) -> Result<Option<(f64, f64)>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let dir = if positive { 1.0 } else { -1.0 };
    let mut inner = 0.0;
    let mut outer = dir * scale;
    for _ in 0..MAX_BRACKET_STEPS {
        let v = f(outer)?;
        if (positive && v <= 0.0) || (!positive && v >= 0.0) {
            return Ok(Some(if positive { (inner, outer) } else { (outer, inner) }));
        }
        inner = outer;
        outer *= 2.0;
        if !outer.is_finite() {
            break;
        }
    }
    Ok(None)
}

/// Solution of the two constraint integrals at a fixed energy level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaSolution {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Power and energy-normalization residuals.
    pub residuals: [f64; 2],
}

impl AlphaSolution {
    /// `Γ(ε) = ½·mean ln(2ε/(P_x|H′|²α₂ + 2P_xα₁ε))`.
    pub fn gamma(&self, sp: &ChannelSpectra, eps: f64) -> Result<f64> {
        let mut acc = CompensatedSum::default();
        for m in 0..sp.len() {
            let d = sp.s[m] * self.alpha2 + 2.0 * self.alpha1 * eps;
            let arg = 2.0 * eps / (sp.p_x * d);
            if !(arg > 0.0) || !arg.is_finite() {
                return Err(Error::LogOfNonPositive("gamma_of_eps".into()));
            }
            acc.add(arg.ln());
        }
        Ok(0.5 * acc.value() / sp.len() as f64)
    }
}

/// Power and energy-normalization residuals of `(α₁, α₂)` at energy `ε`.
pub fn alpha_residuals(sp: &ChannelSpectra, eps: f64, alpha1: f64, alpha2: f64) -> [f64; 2] {
    let (mut power, mut energy) = (CompensatedSum::default(), CompensatedSum::default());
    for m in 0..sp.len() {
        let d = sp.s[m] * alpha2 + 2.0 * alpha1 * eps;
        let p = (4.0 * alpha1 * eps * eps + sp.s[m] * alpha2 * (sp.pt[m] * alpha2 + 2.0 * eps)) / (d * d);
        power.add(p);
        energy.add(0.5 * sp.py[m] + 0.5 * sp.s[m] * p - alpha2 * sp.s[m] * sp.pt[m] / d);
    }
    let n = sp.len() as f64;
    [power.value() / n - sp.p_x, energy.value() / n / eps - 1.0]
}

fn domain_ok(sp: &ChannelSpectra, eps: f64, alpha1: f64, alpha2: f64) -> bool {
    sp.s.iter().all(|s| s * alpha2 + 2.0 * alpha1 * eps > 0.0)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn from_dual(sp: &ChannelSpectra, eps: f64, dp: &DualPoint) -> AlphaSolution {
    let alpha1 = 2.0 * dp.a();
    let alpha2 = 2.0 * eps * dp.b;
    AlphaSolution {
        alpha1,
        alpha2,
        residuals: alpha_residuals(sp, eps, alpha1, alpha2),
    }
}

/// Damped-Newton refinement of `(α₁, α₂)`; returns the better of the two.
fn polish_alphas(sp: &ChannelSpectra, eps: f64, sol: AlphaSolution, cfg: &RootConfig) -> AlphaSolution {
    if max_abs(&sol.residuals) <= RESIDUAL_TOL {
        return sol;
    }
    let f = |x: &[f64]| alpha_residuals(sp, eps, x[0], x[1]).to_vec();
    match solve_system(f, &[sol.alpha1, sol.alpha2], cfg) {
        Ok(s) if domain_ok(sp, eps, s.point[0], s.point[1]) => {
            let r = alpha_residuals(sp, eps, s.point[0], s.point[1]);
            if max_abs(&r) < max_abs(&sol.residuals) {
                AlphaSolution { alpha1: s.point[0], alpha2: s.point[1], residuals: r }
            } else {
                sol
            }
        }
        _ => sol,
    }
}

/// Solves the energy constraint for `b`, starting the bracket search at
/// `b_hint` when its sign matches.
fn solve_energy_multiplier(sp: &ChannelSpectra, eps: f64, b_hint: Option<f64>, cfg: &RootConfig) -> Result<DualPoint> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("energy level must be positive, got {eps}")));
    }
    let mut last_t = None;
    let mut h = |b: f64| -> Result<f64> {
        let dp = solve_power_multiplier(sp, b, last_t, cfg.max_iters)?;
        last_t = Some(dp.t);
        Ok(dp.energy(sp) - eps)
    };
    let at_zero = h(0.0)?;
    if at_zero == 0.0 {
        return solve_power_multiplier(sp, 0.0, None, cfg.max_iters);
    }
    let positive = at_zero > 0.0;
    let scale = b_hint
        .filter(|b| b.is_finite() && *b != 0.0 && (*b > 0.0) == positive)
        .map(|b| b.abs() / 1.5)
        .unwrap_or(sp.beta);
    let bracket = bracket_decreasing(&mut h, positive, scale)?.ok_or(Error::EnergyOutOfRange { eps })?;
    let b = root_with_inner(&mut h, bracket, cfg)?.map_err(|e| Error::solver("energy multiplier", e))?;
    solve_power_multiplier(sp, b, last_t, cfg.max_iters)
}

/// `(α₁, α₂)` solving the two constraint integrals at energy `ε` on the given
/// spectra. A warm start only seeds the bracket; the nested solve is always
/// used, followed by a Newton polish if the residuals are above tolerance.
pub fn alphas_for_energy(
    sp: &ChannelSpectra,
    eps: f64,
    warm: Option<(f64, f64)>,
    cfg: &RootConfig,
) -> Result<AlphaSolution> {
    let hint = warm.map(|(_, a2)| a2 / (2.0 * eps));
    let dp = solve_energy_multiplier(sp, eps, hint, cfg)?;
    Ok(polish_alphas(sp, eps, from_dual(sp, eps, &dp), cfg))
}

pub fn solve_alphas_given_eps(
    inst: &ProblemInstance,
    eps: f64,
    warm: Option<(f64, f64)>,
    cfg: &RootConfig,
) -> Result<AlphaSolution> {
    alphas_for_energy(&inst.spectra(), eps, warm, cfg)
}

/// `Γ(ε)` on the given spectra.
pub fn gamma_of_eps_spectra(sp: &ChannelSpectra, eps: f64, cfg: &RootConfig) -> Result<f64> {
    alphas_for_energy(sp, eps, None, cfg)?.gamma(sp, eps)
}

pub fn gamma_of_eps(inst: &ProblemInstance, eps: f64, cfg: &RootConfig) -> Result<f64> {
    gamma_of_eps_spectra(&inst.spectra(), eps, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlassySolution {
    pub eps_s0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Residuals of the rate equation and the two constraints.
    pub residuals: [f64; 3],
    pub rate: f64,
}

impl GlassySolution {
    pub fn max_residual(&self) -> f64 {
        max_abs(&self.residuals)
    }
}

/// Residuals of the three-equation glassy system at `(ε, α₁, α₂)`.
pub fn glassy_residuals(sp: &ChannelSpectra, rate: f64, eps: f64, alpha1: f64, alpha2: f64) -> [f64; 3] {
    let log_mean = mean_by(sp.len(), |m| {
        (2.0 * eps / (sp.p_x * (sp.s[m] * alpha2 + 2.0 * alpha1 * eps))).ln()
    });
    let [p, e] = alpha_residuals(sp, eps, alpha1, alpha2);
    [rate + 0.5 * log_mean, p, e]
}

fn glassy_at(sp: &ChannelSpectra, rate: f64, dp: &DualPoint) -> GlassySolution {
    let eps = dp.energy(sp);
    let alpha1 = 2.0 * dp.a();
    let alpha2 = 2.0 * eps * dp.b;
    GlassySolution {
        eps_s0: eps,
        alpha1,
        alpha2,
        residuals: glassy_residuals(sp, rate, eps, alpha1, alpha2),
        rate,
    }
}

/// Raw damped-Newton solve of the three-equation system from `x0 = (ε, α₁, α₂)`.
pub fn solve_glassy_direct(sp: &ChannelSpectra, rate: f64, x0: [f64; 3], cfg: &RootConfig) -> Result<GlassySolution> {
    let f = |x: &[f64]| glassy_residuals(sp, rate, x[0], x[1], x[2]).to_vec();
    let s = solve_system(f, &x0, cfg).map_err(|e| Error::solver("glassy system", e))?;
    let (eps, a1, a2) = (s.point[0], s.point[1], s.point[2]);
    Ok(GlassySolution {
        eps_s0: eps,
        alpha1: a1,
        alpha2: a2,
        residuals: glassy_residuals(sp, rate, eps, a1, a2),
        rate,
    })
}

/// Solves `R + Γ(ε_s) = 0` with the constraints, on the given spectra.
///
/// The root is searched in the energy multiplier `b > 0`, along which `R + Γ`
/// decreases from `R`. `hint` (a neighbouring solution) seeds the bracket.
pub fn glassy_from_spectra(
    sp: &ChannelSpectra,
    rate: f64,
    hint: Option<&GlassySolution>,
    cfg: &RootConfig,
) -> Result<GlassySolution> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidInput(format!("rate must be positive, got {rate}")));
    }
    let mut last_t = None;
    let mut g = |b: f64| -> Result<f64> {
        let dp = solve_power_multiplier(sp, b, last_t, cfg.max_iters)?;
        last_t = Some(dp.t);
        Ok(rate + dp.gamma(sp))
    };
    let scale = hint
        .map(|h| h.alpha2 / (2.0 * h.eps_s0))
        .filter(|b| *b > 0.0 && b.is_finite())
        .map(|b| b / 1.5)
        .unwrap_or(sp.beta);
    let bracket = match bracket_decreasing(&mut g, true, scale)? {
        Some(br) => br,
        None => {
            let b_hi = scale * 2f64.powi(MAX_BRACKET_STEPS as i32 - 1);
            return Err(Error::GlassyRootNotBracketed {
                b_lo: 0.0,
                b_hi,
                g_lo: rate,
                g_hi: g(b_hi.min(f64::MAX)).unwrap_or(f64::NAN),
            });
        }
    };
    let b = root_with_inner(&mut g, bracket, cfg)?.map_err(|e| match e {
        SolverError::NoSignChange { lo, hi, f_lo, f_hi } => Error::GlassyRootNotBracketed {
            b_lo: lo,
            b_hi: hi,
            g_lo: f_lo,
            g_hi: f_hi,
        },
        other => Error::solver("glassy rate equation", other),
    })?;
    let dp = solve_power_multiplier(sp, b, last_t, cfg.max_iters)?;
    let sol = glassy_at(sp, rate, &dp);
    if sol.max_residual() <= RESIDUAL_TOL {
        return Ok(sol);
    }
    match solve_glassy_direct(sp, rate, [sol.eps_s0, sol.alpha1, sol.alpha2], cfg) {
        Ok(p) if p.eps_s0 > 0.0 && domain_ok(sp, p.eps_s0, p.alpha1, p.alpha2) && p.max_residual() < sol.max_residual() => {
            Ok(p)
        }
        _ => Ok(sol),
    }
}

pub fn solve_glassy_system(inst: &ProblemInstance, rate: f64, cfg: &RootConfig) -> Result<GlassySolution> {
    glassy_from_spectra(&inst.spectra(), rate, None, cfg)
}

/// Intermediates of the paramagnetic estimator `Ξ₁`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpChain {
    pub p_a: Vec<f64>,
    /// `∂P_a/∂γ`
    pub b: Vec<f64>,
    /// `∂/∂γ √(1 + 4β²|H′|²P_yP_a)`
    pub c: Vec<f64>,
    pub theta: f64,
    pub xi1: Vec<Complex64>,
}

pub fn build_ep_chain(inst: &ProblemInstance, gamma0: f64) -> Result<EpChain> {
    let sp = inst.spectra();
    let beta = sp.beta;
    let n = sp.len();
    let mut p_a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut root = Vec::with_capacity(n);
    for m in 0..n {
        let sb = sp.s[m] * beta;
        let g = sb + gamma0;
        let num = sb * (1.0 + beta * sp.py[m]) + gamma0;
        let pa = num / (g * g);
        let bm = (g - 2.0 * num) / (g * g * g);
        let r = (1.0 + 4.0 * beta * beta * sp.s[m] * sp.py[m] * pa).sqrt();
        p_a.push(pa);
        b.push(bm);
        c.push(2.0 * beta * beta * sp.s[m] * sp.py[m] * bm / r);
        root.push(r);
    }
    let mean_b = mean(&b);
    if mean_b == 0.0 || !mean_b.is_finite() {
        return Err(Error::DegenerateChain("mean of B".into()));
    }
    let theta = -mean_by(n, |m| 1.0 / (sp.s[m] * beta + gamma0) + sp.s[m] * beta * b[m] - c[m]) / mean_b;
    let hp = inst.h_assumed.samples();
    let xi1 = (0..n)
        .map(|m| {
            let sb = sp.s[m] * beta;
            let g = sb + gamma0;
            let bracket = theta + sb - (2.0 * g * g * p_a[m] + 2.0 * beta * beta * sp.s[m] * sp.py[m]) / root[m];
            -(beta * hp[m].conj() / (g * g)) * bracket
        })
        .collect();
    Ok(EpChain { p_a, b, c, theta, xi1 })
}

/// Intermediates of the glassy estimator `Ξ₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EgChain {
    pub k_w: Vec<f64>,
    pub t_w: Vec<f64>,
    pub d_w: Vec<f64>,
    pub r_w: Vec<f64>,
    pub q_w: Vec<f64>,
    pub v: f64,
    pub f: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub r1: f64,
    pub r2: f64,
    pub upsilon: Vec<f64>,
    pub lambda_w: Vec<f64>,
    pub j1: Vec<f64>,
    pub j2: Vec<f64>,
    pub j_w: Vec<f64>,
    pub xi2: Vec<Complex64>,
}

fn nonzero(v: f64, name: &str) -> Result<f64> {
    if v == 0.0 || !v.is_finite() {
        Err(Error::DegenerateChain(name.into()))
    } else {
        Ok(v)
    }
}

pub fn build_eg_chain(inst: &ProblemInstance, glassy: &GlassySolution) -> Result<EgChain> {
    let sp = inst.spectra();
    let (beta, px) = (sp.beta, sp.p_x);
    let (e, a1, a2) = (glassy.eps_s0, glassy.alpha1, glassy.alpha2);
    let n = sp.len();
    let s = &sp.s;
    let py = &sp.py;
    let bh: Vec<f64> = sp.h2.iter().map(|h2| 1.0 + px * beta * h2).collect();

    let d_w: Vec<f64> = s.iter().map(|s| s * a2 + 2.0 * a1 * e).collect();
    if let Some(m) = d_w.iter().position(|d| *d == 0.0 || !d.is_finite()) {
        return Err(Error::DegenerateChain(format!("D at sample {m}")));
    }
    let k_w: Vec<f64> = d_w.iter().map(|d| 2.0 * beta * e * d * d).collect();
    let t_w: Vec<f64> = (0..n)
        .map(|m| 4.0 * a1 * a1 * e * e * bh[m] + 4.0 * beta * s[m] * a1 * e * e + 2.0 * s[m] * s[m] * a2 * beta * e)
        .collect();
    let r_w: Vec<f64> = (0..n).map(|m| 4.0 * a1 * e * e + s[m] * a2 * (py[m] * a2 + 2.0 * e)).collect();
    let q_w: Vec<f64> = d_w.iter().map(|d| px * e * d).collect();
    let v = nonzero(mean_by(n, |m| s[m] * a2 / (e * d_w[m])), "V")?;

    let gamma1 = mean_by(n, |m| {
        let (k, d) = (k_w[m], d_w[m]);
        (8.0 * a1 * e * e * bh[m] + 4.0 * beta * s[m] * e * e) / k - 8.0 * t_w[m] * beta * e * e * d / (k * k)
    });
    let gamma2 = mean_by(n, |m| {
        let (k, d) = (k_w[m], d_w[m]);
        (2.0 * k * beta * e * s[m] * s[m] - 4.0 * t_w[m] * beta * e * d * s[m]) / (k * k)
    });
    let gamma3 = mean_by(n, |m| {
        let (k, d) = (k_w[m], d_w[m]);
        (8.0 * a1 * a1 * e * bh[m] + 8.0 * beta * e * s[m] * a1 + 2.0 * beta * a2 * s[m] * s[m]) / k
            - t_w[m] * (2.0 * beta * d * d + 8.0 * beta * e * a1 * d) / (k * k)
    });
    let upsilon: Vec<f64> = (0..n)
        .map(|m| (-4.0 * beta * a1 * e * a2 - beta * a2 * a2 * s[m]) / k_w[m])
        .collect();
    let eta1 = mean_by(n, |m| {
        let d = d_w[m];
        (4.0 * d * e * e - 4.0 * r_w[m] * e) / (d * d * d)
    });
    let eta2 = mean_by(n, |m| {
        let d = d_w[m];
        s[m] * (py[m] * a2 + 2.0 * e) / (d * d) + (s[m] * a2 * py[m] * d - 2.0 * r_w[m] * s[m]) / (d * d * d)
    });
    let eta3 = mean_by(n, |m| {
        let d = d_w[m];
        (8.0 * d * a1 * e + 2.0 * d * s[m] * a2 - 4.0 * r_w[m] * a1) / (d * d * d)
    });
    let lambda_w: Vec<f64> = d_w.iter().map(|d| a2 * a2 / (d * d)).collect();

    let det = nonzero(gamma2 * eta1 - eta2 * gamma1, "gamma2*eta1 - eta2*gamma1")?;
    let r1 = (eta2 * gamma3 - gamma2 * eta3) / det;
    let r2 = (eta1 * gamma3 - gamma1 * eta3) / (-det);
    let j1: Vec<f64> = (0..n).map(|m| (eta2 * upsilon[m] - gamma2 * lambda_w[m]) / det).collect();
    let j2: Vec<f64> = (0..n).map(|m| (eta1 * upsilon[m] - gamma1 * lambda_w[m]) / (-det)).collect();
    let f = mean_by(n, |m| (s[m] * r2 + 2.0 * e * r1) / d_w[m]) / v;
    let scale = nonzero(v * (1.0 - f), "V(1 - F)")?;
    let w1 = mean_by(n, |m| 2.0 * e * e * px / q_w[m]);
    let w2 = mean_by(n, |m| e * px * s[m] / q_w[m]);
    let j_w: Vec<f64> = (0..n).map(|m| (j1[m] * w1 + j2[m] * w2) / scale).collect();
    let hp = inst.h_assumed.samples();
    let xi2 = (0..n).map(|m| -2.0 * j_w[m] * hp[m].conj()).collect();
    Ok(EgChain {
        k_w,
        t_w,
        d_w,
        r_w,
        q_w,
        v,
        f,
        gamma1,
        gamma2,
        gamma3,
        eta1,
        eta2,
        eta3,
        r1,
        r2,
        upsilon,
        lambda_w,
        j1,
        j2,
        j_w,
        xi2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Wiener,
    Xi1,
    Xi2,
    Custom,
}

/// A frequency-domain linear estimator `x̂(ω) = Ξ(ω)·y(ω)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFilter {
    pub xi: Vec<Complex64>,
    pub kind: FilterKind,
}

impl LinearFilter {
    pub fn new(xi: Vec<Complex64>, kind: FilterKind) -> Result<Self> {
        if xi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("filter samples".into()));
        }
        Ok(LinearFilter { xi, kind })
    }

    pub fn grid_size(&self) -> usize {
        self.xi.len()
    }
}

/// `Ξ(ω) = βH*(ω)P_x/(1 + |H(ω)|²P_xβ)`.
pub fn wiener_filter(inst: &ProblemInstance) -> LinearFilter {
    let (beta, px) = (inst.beta, inst.p_x);
    let xi = inst
        .h_true
        .samples()
        .iter()
        .map(|h| h.conj() * (beta * px / (1.0 + h.norm_sqr() * px * beta)))
        .collect();
    LinearFilter { xi, kind: FilterKind::Wiener }
}

/// Per-symbol MSE of a linear filter applied to the true channel output:
/// `P_x − 2P_x·mean Re(ΞH) + mean(|Ξ|²(|H|²P_x + 1/β))`.
pub fn filter_mse(filter: &LinearFilter, inst: &ProblemInstance) -> Result<f64> {
    let h = inst.h_true.samples();
    if filter.xi.len() != h.len() {
        return Err(Error::GridMismatch { left: filter.xi.len(), right: h.len() });
    }
    let (beta, px) = (inst.beta, inst.p_x);
    let v = px
        + mean_by(h.len(), |m| {
            let xi = filter.xi[m];
            -2.0 * px * (xi * h[m]).re + xi.norm_sqr() * (h[m].norm_sqr() * px + 1.0 / beta)
        });
    if !v.is_finite() {
        return Err(Error::NonFinite("filter_mse".into()));
    }
    Ok(v)
}

/// Asymptotic MMSE of the matched receiver; `s_x` replaces the flat input
/// spectrum when given. `H′` is ignored.
pub fn matched_mmse(inst: &ProblemInstance, rate: f64, s_x: Option<&[f64]>) -> Result<f64> {
    let h = inst.h_true.samples();
    let n = h.len();
    let flat = vec![inst.p_x; n];
    let sx = s_x.unwrap_or(&flat);
    if sx.len() != n {
        return Err(Error::GridMismatch { left: n, right: sx.len() });
    }
    if sx.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("input spectral density must be finite and non-negative".into()));
    }
    let beta = inst.beta;
    let r_c = 0.5 * mean_by(n, |m| (1.0 + h[m].norm_sqr() * sx[m] * beta).ln());
    if rate <= r_c {
        return Ok(0.0);
    }
    Ok(mean_by(n, |m| sx[m] / (1.0 + h[m].norm_sqr() * sx[m] * beta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Ferro,
    Glassy,
    Para,
}

/// Free energy of one branch given precomputed rates.
pub fn free_energy_from(
    sp: &ChannelSpectra,
    rates: &CriticalRates,
    rate: f64,
    branch: Branch,
    cfg: &RootConfig,
) -> Result<f64> {
    Ok(match branch {
        Branch::Ferro => -rate - sp.beta * rates.eps_tilde,
        Branch::Para => -rates.r_e - sp.beta * rates.eps_star,
        Branch::Glassy => -rate - sp.beta * glassy_from_spectra(sp, rate, None, cfg)?.eps_s0,
    })
}

pub fn free_energy(inst: &ProblemInstance, rate: f64, branch: Branch, cfg: &RootConfig) -> Result<f64> {
    let sp = inst.spectra();
    let rates = rates_from_spectra(&sp, cfg)?;
    free_energy_from(&sp, &rates, rate, branch, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseReport {
    pub phase: PhaseLabel,
    pub mse_per_symbol: f64,
    /// Absent in the ferromagnetic phase.
    pub filter: Option<LinearFilter>,
    pub rates: CriticalRates,
    pub glassy: Option<GlassySolution>,
}

/// Evaluates phase and MSE at many rates for one instance, caching the
/// rates and the paramagnetic filter.
#[derive(Debug, Clone)]
pub struct MseEvaluator<'a> {
    inst: &'a ProblemInstance,
    sp: ChannelSpectra,
    rates: CriticalRates,
    cfg: RootConfig,
    tie_tol: f64,
    para: Option<(LinearFilter, f64)>,
}

impl<'a> MseEvaluator<'a> {
    pub fn new(inst: &'a ProblemInstance, cfg: &RootConfig, tie_tol: f64) -> Result<Self> {
        let sp = inst.spectra();
        let rates = rates_from_spectra(&sp, cfg)?;
        Ok(MseEvaluator { inst, sp, rates, cfg: *cfg, tie_tol, para: None })
    }

    pub fn rates(&self) -> &CriticalRates {
        &self.rates
    }

    pub fn spectra(&self) -> &ChannelSpectra {
        &self.sp
    }

    pub fn classify(&self, rate: f64) -> PhaseLabel {
        classify_phase(rate, &self.rates, self.tie_tol)
    }

    /// `(Ξ₁, E_p)`, computed once.
    pub fn para(&mut self) -> Result<(LinearFilter, f64)> {
        if self.para.is_none() {
            let chain = build_ep_chain(self.inst, self.rates.gamma0)?;
            let filter = LinearFilter::new(chain.xi1, FilterKind::Xi1)?;
            let e_p = filter_mse(&filter, self.inst)?;
            self.para = Some((filter, e_p));
        }
        Ok(self.para.clone().expect("para filled above"))
    }

    pub fn glassy(&self, rate: f64, hint: Option<&GlassySolution>) -> Result<GlassySolution> {
        glassy_from_spectra(&self.sp, rate, hint, &self.cfg)
    }

    /// `(Ξ₂, E_g)` at a glassy solution.
    pub fn glassy_filter(&self, glassy: &GlassySolution) -> Result<(LinearFilter, f64)> {
        let chain = build_eg_chain(self.inst, glassy)?;
        let filter = LinearFilter::new(chain.xi2, FilterKind::Xi2)?;
        let e_g = filter_mse(&filter, self.inst)?;
        Ok((filter, e_g))
    }

    pub fn evaluate(&mut self, rate: f64, hint: Option<&GlassySolution>) -> Result<MseReport> {
        let phase = self.classify(rate);
        let (mse, filter, glassy) = match phase.phase {
            Phase::Ferromagnetic => (0.0, None, None),
            Phase::Paramagnetic => {
                let (f, e) = self.para()?;
                (e, Some(f), None)
            }
            Phase::Glassy => {
                let g = self.glassy(rate, hint)?;
                let (f, e) = self.glassy_filter(&g)?;
                (e, Some(f), Some(g))
            }
        };
        Ok(MseReport {
            phase,
            mse_per_symbol: mse,
            filter,
            rates: self.rates.clone(),
            glassy,
        })
    }
}

pub fn mismatched_mse(inst: &ProblemInstance, rate: f64, cfg: &RootConfig) -> Result<MseReport> {
    MseEvaluator::new(inst, cfg, DEFAULT_TIE_TOL)?.evaluate(rate, None)
}
