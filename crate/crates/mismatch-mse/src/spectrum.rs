//! Sampled frequency responses, the channel instance, and grid quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 4096;
const MIN_GRID_SIZE: usize = 16;
const SYMMETRY_TOL: f64 = 1e-12;
/// Slack used when deciding whether a grid point lies on a passband edge.
const EDGE_TOL: f64 = 1e-12;

/// Frequency response sampled at `ω_j = 2πj/N`, `j = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    samples: Vec<Complex64>,
    real_impulse: bool,
}

impl FrequencyResponse {
    /// Wraps samples, checking the grid invariants. When `real_impulse` is
    /// set the samples must be conjugate symmetric.
    pub fn new(samples: Vec<Complex64>, real_impulse: bool) -> Result<Self> {
        let n = samples.len();
        if n < MIN_GRID_SIZE || n % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "grid size must be even and at least {MIN_GRID_SIZE}, got {n}"
            )));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("frequency response samples".into()));
        }
        let resp = FrequencyResponse {
            samples,
            real_impulse,
        };
        if real_impulse && !resp.is_conjugate_symmetric(SYMMETRY_TOL) {
            return Err(Error::InvalidInput(
                "samples flagged real_impulse are not conjugate symmetric".into(),
            ));
        }
        Ok(resp)
    }

    /// Wraps samples and sets `real_impulse` according to a symmetry check.
    pub fn from_samples(samples: Vec<Complex64>) -> Result<Self> {
        let mut resp = FrequencyResponse::new(samples, false)?;
        resp.real_impulse = resp.is_conjugate_symmetric(SYMMETRY_TOL);
        Ok(resp)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn grid_size(&self) -> usize {
        self.samples.len()
    }

    pub fn real_impulse(&self) -> bool {
        self.real_impulse
    }

    pub fn omega(&self, j: usize) -> f64 {
        omega(j, self.grid_size())
    }

    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        conjugate_asymmetry(&self.samples) <= tol
    }

    /// Restriction to the coarser grid of size `n` (every `N/n`-th sample).
    pub fn decimate(&self, n: usize) -> Result<Vec<Complex64>> {
        let big = self.grid_size();
        if n == 0 || big % n != 0 {
            return Err(Error::InvalidInput(format!(
                "cannot resample a {big}-point response onto {n} points"
            )));
        }
        let step = big / n;
        Ok((0..n).map(|j| self.samples[j * step]).collect())
    }
}

/// Largest `|z[j] − conj(z[N−j mod N])|` over the grid.
pub fn conjugate_asymmetry(z: &[Complex64]) -> f64 {
    let n = z.len();
    (0..n)
        .map(|j| (z[j] - z[(n - j) % n].conj()).norm())
        .fold(0.0, f64::max)
}

pub fn omega(j: usize, n: usize) -> f64 {
    2.0 * PI * j as f64 / n as f64
}

/// `min(ω, 2π − ω)` for grid point `j`, computed from the folded index so
/// that mirrored points get bit-identical values.
fn folded_omega(j: usize, n: usize) -> f64 {
    omega(j.min(n - j), n)
}

fn one() -> f64 {
    1.0
}

fn is_zero(x: &i64) -> bool {
    *x == 0
}

fn is_false(x: &bool) -> bool {
    !*x
}

/// Builtin filter families. Frequencies are in radians; band edges refer to
/// `|ω|` folded into `[0, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterSpec {
    /// Constant response `gain`.
    Identity {
        #[serde(default = "one")]
        gain: f64,
    },
    /// `gain` on `|ω| ≤ cutoff`, zero elsewhere.
    IdealLpf {
        cutoff: f64,
        #[serde(default = "one")]
        gain: f64,
    },
    /// `gain` on `low ≤ |ω| ≤ high`, zero elsewhere.
    Bandpass {
        low: f64,
        high: f64,
        #[serde(default = "one")]
        gain: f64,
    },
    /// `gain` on the union of closed bands `[lo, hi]` of `|ω|`.
    Multiband {
        bands: Vec<[f64; 2]>,
        #[serde(default = "one")]
        gain: f64,
    },
    /// `gain · e^{jω·shift} · Π_k (1 − z_k e^{−jω})`; zeros are `[re, im]`
    /// pairs and must be closed under conjugation. With `unit_energy` the
    /// gain is divided by the ℓ² norm of the impulse response.
    FirFromZeros {
        zeros: Vec<[f64; 2]>,
        #[serde(default = "one")]
        gain: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        shift: i64,
        #[serde(default, skip_serializing_if = "is_false")]
        unit_energy: bool,
    },
    /// `base(ω) · e^{−jωd}`.
    DelayedCopyOf { base: Box<FilterSpec>, d: i64 },
    /// Explicit samples on the grid.
    Tabulated { re: Vec<f64>, im: Vec<f64> },
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite")))
    }
}

fn check_band(lo: f64, hi: f64) -> Result<()> {
    check_finite("band edge", lo)?;
    check_finite("band edge", hi)?;
    if !(0.0..=PI + EDGE_TOL).contains(&lo) || !(0.0..=PI + EDGE_TOL).contains(&hi) || lo > hi {
        return Err(Error::InvalidInput(format!(
            "band [{lo}, {hi}] must satisfy 0 ≤ lo ≤ hi ≤ π"
        )));
    }
    Ok(())
}

fn in_band(w: f64, lo: f64, hi: f64) -> bool {
    w >= lo - EDGE_TOL && w <= hi + EDGE_TOL
}

fn conjugate_closed(zeros: &[Complex64]) -> bool {
    let mut used = vec![false; zeros.len()];
    for i in 0..zeros.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        if zeros[i].im.abs() <= 1e-12 * (1.0 + zeros[i].norm()) {
            continue;
        }
        let target = zeros[i].conj();
        match (0..zeros.len()).find(|&j| !used[j] && (zeros[j] - target).norm() <= 1e-9 * (1.0 + target.norm())) {
            Some(j) => used[j] = true,
            None => return false,
        }
    }
    true
}

/// Coefficients of `Π_k (1 − z_k x)` in increasing powers of `x`.
fn poly_from_zeros(zeros: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for z in zeros {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, ck) in c.iter().enumerate() {
            next[k] += ck;
            next[k + 1] -= z * ck;
        }
        c = next;
    }
    c
}

/// Evaluates a builtin filter with a real impulse response on the grid.
/// Samples for `j > N/2` are mirrored so symmetry holds exactly.
fn symmetric_response(n: usize, mut value_at: impl FnMut(usize) -> Complex64) -> Result<FrequencyResponse> {
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..=n / 2 {
        samples[j] = value_at(j);
    }
    samples[0].im = 0.0;
    samples[n / 2].im = 0.0;
    for j in n / 2 + 1..n {
        samples[j] = samples[n - j].conj();
    }
    FrequencyResponse::new(samples, true)
}

fn check_grid(n: usize) -> Result<()> {
    if n < MIN_GRID_SIZE || n % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "grid size must be even and at least {MIN_GRID_SIZE}, got {n}"
        )));
    }
    Ok(())
}

pub fn make_builtin_filter(spec: &FilterSpec, grid_size: usize) -> Result<FrequencyResponse> {
    check_grid(grid_size)?;
    let n = grid_size;
    match spec {
        FilterSpec::Identity { gain } => {
            check_finite("gain", *gain)?;
            symmetric_response(n, |_| Complex64::new(*gain, 0.0))
        }
        FilterSpec::IdealLpf { cutoff, gain } => {
            check_finite("gain", *gain)?;
            check_band(0.0, *cutoff)?;
            symmetric_response(n, |j| {
                let v = if in_band(folded_omega(j, n), 0.0, *cutoff) { *gain } else { 0.0 };
                Complex64::new(v, 0.0)
            })
        }
        FilterSpec::Bandpass { low, high, gain } => {
            check_finite("gain", *gain)?;
            check_band(*low, *high)?;
            symmetric_response(n, |j| {
                let v = if in_band(folded_omega(j, n), *low, *high) { *gain } else { 0.0 };
                Complex64::new(v, 0.0)
            })
        }
        FilterSpec::Multiband { bands, gain } => {
            check_finite("gain", *gain)?;
            if bands.is_empty() {
                return Err(Error::InvalidInput("multiband needs at least one band".into()));
            }
            for [lo, hi] in bands {
                check_band(*lo, *hi)?;
            }
            symmetric_response(n, |j| {
                let w = folded_omega(j, n);
                let v = if bands.iter().any(|[lo, hi]| in_band(w, *lo, *hi)) { *gain } else { 0.0 };
                Complex64::new(v, 0.0)
            })
        }
        FilterSpec::FirFromZeros {
            zeros,
            gain,
            shift,
            unit_energy,
        } => {
            check_finite("gain", *gain)?;
            let zs: Vec<Complex64> = zeros.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
            if zs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidInput("zeros must be finite".into()));
            }
            if !conjugate_closed(&zs) {
                return Err(Error::InvalidInput(
                    "fir_from_zeros needs zeros closed under conjugation".into(),
                ));
            }
            let mut g = *gain;
            if *unit_energy {
                let energy: f64 = poly_from_zeros(&zs).iter().map(|c| c.norm_sqr()).sum();
                g /= energy.sqrt();
            }
            symmetric_response(n, |j| {
                let w = omega(j, n);
                let zinv = Complex64::from_polar(1.0, -w);
                let prod = zs.iter().fold(Complex64::new(1.0, 0.0), |acc, z| acc * (1.0 - z * zinv));
                prod * Complex64::from_polar(g, w * *shift as f64)
            })
        }
        FilterSpec::DelayedCopyOf { base, d } => {
            let base = make_builtin_filter(base, n)?;
            let s = base.samples();
            symmetric_response(n, |j| s[j] * Complex64::from_polar(1.0, -omega(j, n) * *d as f64))
        }
        FilterSpec::Tabulated { re, im } => {
            if re.len() != n || im.len() != n {
                return Err(Error::InvalidInput(format!(
                    "tabulated filter needs {n} samples, got {} real and {} imaginary",
                    re.len(),
                    im.len()
                )));
            }
            let samples = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
            FrequencyResponse::from_samples(samples)
        }
    }
}

/// Grid mean, the rectangle rule for `(1/2π)∫₀^{2π} · dω`.
pub fn quadrature_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("empty quadrature array".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quadrature integrand".into()));
    }
    Ok(mean(values))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    mean_by(values.len(), |m| values[m])
}

pub(crate) fn mean_by(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = CompensatedSum::default();
    (0..n).for_each(|m| acc.add(f(m)));
    acc.value() / n as f64
}

pub fn magnitude_sq(f: &FrequencyResponse) -> Vec<f64> {
    f.samples().iter().map(|z| z.norm_sqr()).collect()
}

fn same_grid(f: &FrequencyResponse, g: &FrequencyResponse) -> Result<()> {
    if f.grid_size() != g.grid_size() {
        return Err(Error::GridMismatch {
            left: f.grid_size(),
            right: g.grid_size(),
        });
    }
    Ok(())
}

/// `Re(f*(ω) g(ω))` pointwise.
pub fn cross_re(f: &FrequencyResponse, g: &FrequencyResponse) -> Result<Vec<f64>> {
    same_grid(f, g)?;
    Ok(f.samples().iter().zip(g.samples()).map(|(a, b)| (a.conj() * b).re).collect())
}

/// `|f(ω) − g(ω)|²` pointwise.
pub fn diff_magnitude_sq(f: &FrequencyResponse, g: &FrequencyResponse) -> Result<Vec<f64>> {
    same_grid(f, g)?;
    Ok(f.samples().iter().zip(g.samples()).map(|(a, b)| (a - b).norm_sqr()).collect())
}

/// True channel `H`, assumed channel `H′`, inverse noise variance `β` and
/// input power `P_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub h_true: FrequencyResponse,
    pub h_assumed: FrequencyResponse,
    pub beta: f64,
    pub p_x: f64,
}

impl ProblemInstance {
    pub fn new(h_true: FrequencyResponse, h_assumed: FrequencyResponse, beta: f64, p_x: f64) -> Result<Self> {
        same_grid(&h_true, &h_assumed)?;
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
        }
        if !(p_x > 0.0) || !p_x.is_finite() {
            return Err(Error::InvalidInput(format!("p_x must be positive, got {p_x}")));
        }
        Ok(ProblemInstance {
            h_true,
            h_assumed,
            beta,
            p_x,
        })
    }

    /// Builds both responses from filter specs on a common grid.
    pub fn from_specs(h_true: &FilterSpec, h_assumed: &FilterSpec, beta: f64, p_x: f64, grid_size: usize) -> Result<Self> {
        ProblemInstance::new(
            make_builtin_filter(h_true, grid_size)?,
            make_builtin_filter(h_assumed, grid_size)?,
            beta,
            p_x,
        )
    }

    /// The matched instance `H′ = H`.
    pub fn matched(h: FrequencyResponse, beta: f64, p_x: f64) -> Result<Self> {
        ProblemInstance::new(h.clone(), h, beta, p_x)
    }

    pub fn grid_size(&self) -> usize {
        self.h_true.grid_size()
    }

    pub fn real_impulse(&self) -> bool {
        self.h_true.real_impulse() && self.h_assumed.real_impulse()
    }

    pub fn spectra(&self) -> ChannelSpectra {
        ChannelSpectra::new(self)
    }
}

/// Pointwise spectral quantities shared by every integrand.
///
/// `pt` is the tilted output spectrum `P̃_y`; it equals `py` unless a tilt
/// perturbation is applied with [`ChannelSpectra::with_tilted_py`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectra {
    /// `|H′|²`
    pub s: Vec<f64>,
    /// `|H|²`
    pub h2: Vec<f64>,
    /// `|H|² P_x + 1/β`
    pub py: Vec<f64>,
    pub pt: Vec<f64>,
    /// `Re(H′* H)`
    pub cross: Vec<f64>,
    /// `|H′ − H|²`
    pub diff2: Vec<f64>,
    pub beta: f64,
    pub p_x: f64,
}

impl ChannelSpectra {
    pub fn new(inst: &ProblemInstance) -> Self {
        let h = inst.h_true.samples();
        let hp = inst.h_assumed.samples();
        let h2: Vec<f64> = h.iter().map(|z| z.norm_sqr()).collect();
        let py: Vec<f64> = h2.iter().map(|v| v * inst.p_x + 1.0 / inst.beta).collect();
        ChannelSpectra {
            s: hp.iter().map(|z| z.norm_sqr()).collect(),
            pt: py.clone(),
            py,
            h2,
            cross: hp.iter().zip(h).map(|(a, b)| (a.conj() * b).re).collect(),
            diff2: hp.iter().zip(h).map(|(a, b)| (a - b).norm_sqr()).collect(),
            beta: inst.beta,
            p_x: inst.p_x,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn with_tilted_py(mut self, pt: Vec<f64>) -> Result<Self> {
        if pt.len() != self.len() {
            return Err(Error::GridMismatch {
                left: self.len(),
                right: pt.len(),
            });
        }
        self.pt = pt;
        Ok(self)
    }

    /// `ε̃ = 1/(2β) + (P_x/2)·mean|H′ − H|²`, the normalized energy of the
    /// transmitted codeword.
    pub fn eps_tilde(&self) -> f64 {
        0.5 / self.beta + 0.5 * self.p_x * mean(&self.diff2)
    }

    /// Energy of a typical codeword, `mean(½P_y + ½|H′|²P_x)`.
    pub fn eps_typical(&self) -> f64 {
        mean_by(self.len(), |m| 0.5 * self.py[m] + 0.5 * self.s[m] * self.p_x)
    }
}
