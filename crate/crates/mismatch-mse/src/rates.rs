//! `γ₀`, the critical rates `R_e`, `R_d`, `R_c`, `R_g`, and phase labels.

use serde::Serialize;

use crate::mse::alphas_for_energy;
use crate::solvers::{machine_precision, solve_scalar_root_to_precision, RootConfig, SolverError};
use crate::spectrum::{mean, mean_by, ChannelSpectra, ProblemInstance};
use crate::{Error, Result};

pub const DEFAULT_TIE_TOL: f64 = 1e-9;
/// `|R_d|` below this is treated as zero (two-phase structure).
pub const RD_ZERO_TOL: f64 = 1e-12;
const RD_CROSS_CHECK_TOL: f64 = 1e-6;

/// `P_a(ω)` for multiplier `γ`, using the tilted output spectrum.
pub fn pa_density(sp: &ChannelSpectra, gamma: f64) -> Vec<f64> {
    let beta = sp.beta;
    (0..sp.len())
        .map(|m| {
            let sb = sp.s[m] * beta;
            let g = sb + gamma;
            (sb * (1.0 + beta * sp.pt[m]) + gamma) / (g * g)
        })
        .collect()
}

fn pa_gap(sp: &ChannelSpectra, gamma: f64) -> f64 {
    let beta = sp.beta;
    mean_by(sp.len(), |m| {
        let sb = sp.s[m] * beta;
        let g = sb + gamma;
        (sb * (1.0 + beta * sp.pt[m]) + gamma) / (g * g)
    }) - sp.p_x
}

/// Solves `mean P_a(γ₀) = P_x`.
///
/// The root is normally positive; when `|H′|` is bounded away from zero it
/// may be negative, in which case it is searched on `(−min β|H′|², 1e−8/P_x)`.
pub fn gamma0_from_spectra(sp: &ChannelSpectra, cfg: &RootConfig) -> Result<f64> {
    let cfg = &machine_precision(cfg);
    let lo = 1e-8 / sp.p_x;
    let hi = 1e4 / sp.p_x;
    let f = |g: f64| pa_gap(sp, g);
    if f(lo) >= 0.0 {
        return solve_scalar_root_to_precision(f, (lo, hi), cfg).map_err(Error::Gamma0NotBracketed);
    }
    let edge = sp.s.iter().fold(f64::INFINITY, |m, v| m.min(*v)) * sp.beta;
    let mut left = lo;
    for k in 1..=60 {
        let x = -edge + (lo + edge) * 0.5_f64.powi(k);
        if f(x) > 0.0 {
            left = x;
            break;
        }
    }
    if left == lo {
        return Err(Error::Gamma0NotBracketed(SolverError::NoSignChange {
            lo: -edge,
            hi: lo,
            f_lo: f64::NAN,
            f_hi: f(lo),
        }));
    }
    solve_scalar_root_to_precision(f, (left, lo), cfg).map_err(Error::Gamma0NotBracketed)
}

pub fn solve_gamma0(inst: &ProblemInstance, cfg: &RootConfig) -> Result<f64> {
    gamma0_from_spectra(&inst.spectra(), cfg)
}

pub fn compute_pa(inst: &ProblemInstance, gamma0: f64) -> Vec<f64> {
    pa_density(&inst.spectra(), gamma0)
}

pub(crate) fn re_from_spectra(sp: &ChannelSpectra, gamma0: f64) -> Result<f64> {
    let mut acc = 0.0;
    for m in 0..sp.len() {
        let arg = sp.p_x * gamma0 + sp.p_x * sp.beta * sp.s[m];
        if !(arg > 0.0) {
            return Err(Error::LogOfNonPositive("R_e integrand".into()));
        }
        acc += arg.ln();
    }
    Ok(0.5 * acc / sp.len() as f64)
}

/// `R_e = ½·mean ln(P_xγ₀ + P_xβ|H′|²)`.
pub fn compute_re(inst: &ProblemInstance, gamma0: f64) -> Result<f64> {
    re_from_spectra(&inst.spectra(), gamma0)
}

/// Pointwise `ε*(ω)` at zero tilt multiplier.
pub fn eps_star_density(sp: &ChannelSpectra, gamma0: f64) -> Vec<f64> {
    let beta = sp.beta;
    let pa = pa_density(sp, gamma0);
    (0..sp.len())
        .map(|m| {
            let radicand = 1.0 + 4.0 * beta * beta * sp.s[m] * sp.pt[m] * pa[m];
            (2.0 + sp.s[m] * beta * pa[m] + sp.h2[m] * beta * sp.p_x - radicand.sqrt()) / (2.0 * beta)
        })
        .collect()
}

pub fn compute_eps_star(inst: &ProblemInstance, gamma0: f64) -> Result<f64> {
    let e = mean(&eps_star_density(&inst.spectra(), gamma0));
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::NonFinite("eps_star".into()));
    }
    Ok(e)
}

/// The two evaluations of `R_d`: the three-integral display formula and the
/// energy identity `β(ε* − ε̃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdForms {
    pub display: f64,
    pub identity: f64,
}

pub fn rd_forms(sp: &ChannelSpectra, gamma0: f64) -> RdForms {
    let beta = sp.beta;
    let px = sp.p_x;
    let pa = pa_density(sp, gamma0);
    let n = sp.len();
    let display = 0.5 + beta * px * mean(&sp.cross) + 0.5 * mean_by(n, |m| sp.s[m] * beta * (pa[m] - px))
        - 0.5 * mean_by(n, |m| {
            let sb = sp.s[m] * beta;
            (sb * (3.0 + 2.0 * px * beta * sp.h2[m]) + gamma0) / (sb + gamma0)
        });
    let identity = beta * (mean(&eps_star_density(sp, gamma0)) - sp.eps_tilde());
    RdForms { display, identity }
}

pub(crate) fn rd_from_spectra(sp: &ChannelSpectra, gamma0: f64) -> Result<f64> {
    let forms = rd_forms(sp, gamma0);
    if !forms.display.is_finite() || !forms.identity.is_finite() {
        return Err(Error::NonFinite("R_d".into()));
    }
    if (forms.display - forms.identity).abs() > RD_CROSS_CHECK_TOL {
        return Err(Error::CrossCheckMismatch {
            display: forms.display,
            identity: forms.identity,
        });
    }
    Ok(forms.identity)
}

/// `R_d`, certified against the display formula; the identity form is
/// returned.
pub fn compute_rd(inst: &ProblemInstance, gamma0: f64) -> Result<f64> {
    rd_from_spectra(&inst.spectra(), gamma0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RgSolution {
    pub r_g: f64,
    pub eps_tilde: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

pub(crate) fn rg_from_spectra(sp: &ChannelSpectra, cfg: &RootConfig) -> Result<RgSolution> {
    let eps = sp.eps_tilde();
    let sol = alphas_for_energy(sp, eps, None, cfg)?;
    let gamma = sol.gamma(sp, eps)?;
    Ok(RgSolution {
        r_g: -gamma,
        eps_tilde: eps,
        alpha1: sol.alpha1,
        alpha2: sol.alpha2,
    })
}

/// `R_g = −Γ(ε̃)` with `(α̃₁, α̃₂)` solving the two constraint integrals.
pub fn compute_rg(inst: &ProblemInstance, cfg: &RootConfig) -> Result<RgSolution> {
    rg_from_spectra(&inst.spectra(), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalRates {
    pub gamma0: f64,
    pub r_e: f64,
    pub r_d: f64,
    pub r_c: f64,
    /// Present only when `r_d < 0`.
    pub r_g: Option<f64>,
    pub eps_tilde: f64,
    pub eps_star: f64,
    /// `(α̃₁, α̃₂)`, present iff `r_g` is.
    pub alpha_tilde: Option<(f64, f64)>,
    /// `−Γ(ε̃)` evaluated regardless of the sign of `r_d`, when solvable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_g_unconditional: Option<f64>,
    pub beta: f64,
}

impl CriticalRates {
    pub fn three_phase(&self) -> bool {
        self.r_g.is_some()
    }

    /// Largest rate of the ferromagnetic phase.
    pub fn ferro_threshold(&self) -> f64 {
        self.r_g.unwrap_or(self.r_c)
    }
}

pub(crate) fn rates_from_spectra(sp: &ChannelSpectra, cfg: &RootConfig) -> Result<CriticalRates> {
    let gamma0 = gamma0_from_spectra(sp, cfg)?;
    let r_e = re_from_spectra(sp, gamma0)?;
    let r_d = rd_from_spectra(sp, gamma0)?;
    let eps_star = mean(&eps_star_density(sp, gamma0));
    let eps_tilde = sp.eps_tilde();
    let (r_g, alpha_tilde, r_g_unconditional) = if r_d < -RD_ZERO_TOL {
        let rg = rg_from_spectra(sp, cfg)?;
        (Some(rg.r_g), Some((rg.alpha1, rg.alpha2)), Some(rg.r_g))
    } else {
        (None, None, rg_from_spectra(sp, cfg).ok().map(|rg| rg.r_g))
    };
    Ok(CriticalRates {
        gamma0,
        r_e,
        r_d,
        r_c: r_e + r_d,
        r_g,
        eps_tilde,
        eps_star,
        alpha_tilde,
        r_g_unconditional,
        beta: sp.beta,
    })
}

pub fn compute_critical_rates(inst: &ProblemInstance, cfg: &RootConfig) -> Result<CriticalRates> {
    rates_from_spectra(&inst.spectra(), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Phase {
    Ferromagnetic,
    Glassy,
    Paramagnetic,
}

impl Phase {
    pub fn letter(self) -> char {
        match self {
            Phase::Ferromagnetic => 'F',
            Phase::Glassy => 'G',
            Phase::Paramagnetic => 'P',
        }
    }

    /// Position along the rate axis: F < G < P.
    pub fn order(self) -> u8 {
        match self {
            Phase::Ferromagnetic => 0,
            Phase::Glassy => 1,
            Phase::Paramagnetic => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PhaseLabel {
    pub phase: Phase,
    pub boundary: bool,
}

/// Phase of rate `R`. Rates within `tie_tol` above a threshold count as
/// ties and resolve to the lower-rate phase.
pub fn classify_phase(rate: f64, rates: &CriticalRates, tie_tol: f64) -> PhaseLabel {
    let near = |t: f64| (rate - t).abs() <= tie_tol;
    match rates.r_g {
        None => PhaseLabel {
            phase: if rate <= rates.r_c + tie_tol {
                Phase::Ferromagnetic
            } else {
                Phase::Paramagnetic
            },
            boundary: near(rates.r_c),
        },
        Some(r_g) => {
            let phase = if rate <= r_g + tie_tol {
                Phase::Ferromagnetic
            } else if rate <= rates.r_e + tie_tol {
                Phase::Glassy
            } else {
                Phase::Paramagnetic
            };
            PhaseLabel {
                phase,
                boundary: near(r_g) || near(rates.r_e),
            }
        }
    }
}

/// Matched critical rate `½·mean ln(1 + |H|²P_xβ)`; `H′` is ignored.
pub fn matched_rc(inst: &ProblemInstance) -> f64 {
    let sp = inst.spectra();
    0.5 * mean_by(sp.len(), |m| (1.0 + sp.h2[m] * sp.p_x * sp.beta).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{make_builtin_filter, FilterSpec, FrequencyResponse};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2, PI};

    fn cfg() -> RootConfig {
        RootConfig::default()
    }

    fn filt(spec: FilterSpec, n: usize) -> FrequencyResponse {
        make_builtin_filter(&spec, n).unwrap()
    }

    fn identity(beta: f64, p_x: f64) -> ProblemInstance {
        let h = filt(FilterSpec::Identity { gain: 1.0 }, 64);
        ProblemInstance::matched(h, beta, p_x).unwrap()
    }

    fn lpf_instance(cutoff: f64, gain: f64) -> ProblemInstance {
        ProblemInstance::new(
            filt(FilterSpec::IdealLpf { cutoff: FRAC_PI_2, gain: 1.0 }, 1024),
            filt(FilterSpec::IdealLpf { cutoff, gain }, 1024),
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn gamma0_matched_is_inverse_power() {
        for (beta, p_x) in [(1.0, 1.0), (2.0, 0.5), (0.5, 4.0)] {
            let g = solve_gamma0(&identity(beta, p_x), &cfg()).unwrap();
            assert!((g - 1.0 / p_x).abs() < 1e-9, "{beta} {p_x} {g}");
        }
        let g = solve_gamma0(&lpf_instance(FRAC_PI_2, 1.0), &cfg()).unwrap();
        assert!((g - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gamma0_with_zero_assumed_channel() {
        let h = filt(FilterSpec::IdealLpf { cutoff: 1.0, gain: 1.3 }, 128);
        let zero = filt(FilterSpec::Identity { gain: 0.0 }, 128);
        let inst = ProblemInstance::new(h, zero, 1.0, 2.0).unwrap();
        let g = solve_gamma0(&inst, &cfg()).unwrap();
        assert!((g - 0.5).abs() < 1e-9);
        let pa = compute_pa(&inst, g);
        assert!(pa.iter().all(|v| (v - 1.0 / g).abs() < 1e-12));
        assert!(compute_re(&inst, g).unwrap().abs() < 1e-12);
        let es = eps_star_density(&inst.spectra(), g);
        for (m, e) in es.iter().enumerate() {
            let h2 = inst.spectra().h2[m];
            assert!((e - (1.0 + h2 * 2.0) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma0_may_be_negative() {
        let inst = ProblemInstance::new(
            filt(FilterSpec::IdealLpf { cutoff: FRAC_PI_2, gain: 1.0 }, 512),
            filt(FilterSpec::Identity { gain: 2.0 }, 512),
            1.0,
            1.0,
        )
        .unwrap();
        let g = solve_gamma0(&inst, &cfg()).unwrap();
        assert!(g < 0.0);
        let pa = compute_pa(&inst, g);
        assert!((mean(&pa) - 1.0).abs() < 1e-10);
        assert!(compute_re(&inst, g).unwrap().is_finite());
    }

    #[test]
    fn pa_matched_identity_is_power() {
        let inst = identity(1.0, 1.0);
        assert!(compute_pa(&inst, 1.0).iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn pa_matched_on_lpf_passband() {
        let inst = lpf_instance(FRAC_PI_2, 1.0);
        let g = solve_gamma0(&inst, &cfg()).unwrap();
        let pa = compute_pa(&inst, g);
        let s = inst.spectra().s;
        for m in 0..pa.len() {
            if s[m] > 0.0 {
                assert!((pa[m] - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_closed_forms() {
        let inst = identity(1.0, 1.0);
        let r = compute_critical_rates(&inst, &cfg()).unwrap();
        assert!((r.r_e - 0.5 * LN_2).abs() < 1e-12, "{r:?}");
        assert!(r.r_d.abs() < 1e-12);
        assert!((r.eps_star - 0.5).abs() < 1e-12);
        assert!(r.r_g.is_none());
        assert_eq!(r.r_c, r.r_e + r.r_d);
    }

    #[test]
    fn matched_rc_examples() {
        assert!((matched_rc(&identity(1.0, 1.0)) - 0.5 * LN_2).abs() < 1e-12);
        assert!((matched_rc(&lpf_instance(FRAC_PI_2, 1.0)) - LN_2 / 4.0).abs() < 1e-3);
        let zero = filt(FilterSpec::Identity { gain: 0.0 }, 64);
        assert_eq!(matched_rc(&ProblemInstance::matched(zero, 1.0, 1.0).unwrap()), 0.0);
    }

    #[test]
    fn rd_forms_agree_on_mismatched_instances() {
        for (cutoff, gain) in [(0.7, 0.5), (2.5, 1.0), (1.0, 2.0), (FRAC_PI_2, 1.3)] {
            let sp = lpf_instance(cutoff, gain).spectra();
            let g = gamma0_from_spectra(&sp, &cfg()).unwrap();
            let f = rd_forms(&sp, g);
            assert!((f.display - f.identity).abs() < 1e-8, "{cutoff} {gain} {f:?}");
        }
    }

    #[test]
    fn classify_examples() {
        let r = compute_critical_rates(&lpf_instance(FRAC_PI_4, 1.0), &cfg()).unwrap();
        assert!(r.r_d >= -RD_ZERO_TOL);
        assert_eq!(classify_phase(0.01, &r, DEFAULT_TIE_TOL).phase, Phase::Ferromagnetic);
        assert_eq!(classify_phase(1.0, &r, DEFAULT_TIE_TOL).phase, Phase::Paramagnetic);

        let id = compute_critical_rates(&identity(1.0, 1.0), &cfg()).unwrap();
        assert_eq!(classify_phase(0.2, &id, DEFAULT_TIE_TOL).phase, Phase::Ferromagnetic);
        let at = classify_phase(id.r_c, &id, DEFAULT_TIE_TOL);
        assert_eq!(at.phase, Phase::Ferromagnetic);
        assert!(at.boundary);
    }

    #[test]
    fn three_phase_ordering() {
        let r = compute_critical_rates(&lpf_instance(2.5, 1.0), &cfg()).unwrap();
        let r_g = r.r_g.expect("optimistic receiver has a glassy phase");
        assert!(r_g <= r.r_e + 1e-9);
        let mid = 0.5 * (r_g + r.r_e);
        assert_eq!(classify_phase(mid, &r, DEFAULT_TIE_TOL).phase, Phase::Glassy);
        let mut last = 0;
        for k in 0..200 {
            let rate = 0.005 * k as f64;
            let o = classify_phase(rate, &r, DEFAULT_TIE_TOL).phase.order();
            assert!(o >= last);
            last = o;
        }
        let _ = PI;
    }
}
