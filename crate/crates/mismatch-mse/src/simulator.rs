//! Finite-n Monte-Carlo: random spherical codebooks through a circulant
//! Gaussian channel, with the exact mismatched posterior mean computed by
//! enumerating the codebook.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::mse::mismatched_mse;
use crate::rates::PhaseLabel;
use crate::solvers::RootConfig;
use crate::spectrum::{FrequencyResponse, ProblemInstance};
use crate::{Error, Result};

pub const MAX_BLOCK_LENGTH: usize = 4096;
pub const MAX_CODEWORDS: usize = 1 << 22;
/// Default bound on `n·M` (stored codebook entries).
pub const DEFAULT_MEMORY_CAP: usize = 1 << 26;
const CODEBOOK_STREAM: u64 = 0xFFFF_FFFF;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub rate: f64,
    pub inst: ProblemInstance,
    /// Trials per codebook.
    pub trials: usize,
    pub codebooks: usize,
    pub seed: u64,
    pub keep_trials: bool,
    pub memory_cap: usize,
}

impl SimConfig {
    pub fn new(inst: ProblemInstance, n: usize, rate: f64, trials: usize, seed: u64) -> Self {
        SimConfig {
            n,
            rate,
            inst,
            trials,
            codebooks: 1,
            seed,
            keep_trials: false,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }

    /// `M = round(e^{nR})`, at least 1.
    pub fn codebook_size(&self) -> Result<usize> {
        let m = (self.n as f64 * self.rate).exp().round().max(1.0);
        if !m.is_finite() || m > MAX_CODEWORDS as f64 {
            return Err(Error::SimulationLimit(format!(
                "codebook size e^(nR) = {m:.3e} exceeds {MAX_CODEWORDS}"
            )));
        }
        Ok(m as usize)
    }

    pub fn validate(&self) -> Result<usize> {
        if !self.n.is_power_of_two() || self.n < 2 || self.n > MAX_BLOCK_LENGTH {
            return Err(Error::InvalidInput(format!(
                "block length must be a power of two in [2, {MAX_BLOCK_LENGTH}], got {}",
                self.n
            )));
        }
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(Error::InvalidInput(format!("rate must be finite and non-negative, got {}", self.rate)));
        }
        if self.trials == 0 || self.codebooks == 0 {
            return Err(Error::InvalidInput("trials and codebooks must be at least 1".into()));
        }
        let m = self.codebook_size()?;
        if m.saturating_mul(self.n) > self.memory_cap {
            return Err(Error::SimulationLimit(format!(
                "codebook needs {} entries, cap is {}",
                m * self.n,
                self.memory_cap
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub codebook_idx: usize,
    pub trial_idx: usize,
    pub sq_error_per_symbol: f64,
    pub log_partition_per_symbol: f64,
    pub estimate_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub n: usize,
    pub codewords: usize,
    pub empirical_mse_per_symbol: f64,
    pub standard_error: f64,
    pub theory_mse_per_symbol: f64,
    pub empirical_log_partition_mean: f64,
    pub log_partition_std: f64,
    pub phase_predicted: PhaseLabel,
    pub max_estimate_norm: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_trial: Vec<TrialRecord>,
}

/// `M` codewords of length `n`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    n: usize,
    words: Vec<f64>,
}

impl Codebook {
    pub fn from_words(n: usize, words: Vec<f64>) -> Result<Self> {
        if n == 0 || words.is_empty() || words.len() % n != 0 {
            return Err(Error::InvalidInput("codebook must hold a positive number of length-n words".into()));
        }
        Ok(Codebook { n, words })
    }

    pub fn block_length(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, i: usize) -> &[f64] {
        &self.words[i * self.n..(i + 1) * self.n]
    }

    fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.words.chunks_exact(self.n)
    }
}

/// Independent codewords uniform on the sphere of radius `√(nP_x)`.
pub fn sample_codebook<R: Rng + ?Sized>(n: usize, m: usize, p_x: f64, rng: &mut R) -> Result<Codebook> {
    if n < 2 || m == 0 {
        return Err(Error::InvalidInput(format!("need n >= 2 and M >= 1, got n = {n}, M = {m}")));
    }
    if !(p_x > 0.0) || !p_x.is_finite() {
        return Err(Error::InvalidInput(format!("p_x must be positive, got {p_x}")));
    }
    let radius = (n as f64 * p_x).sqrt();
    let mut words = Vec::with_capacity(n * m);
    let mut row = vec![0.0; n];
    for _ in 0..m {
        let norm = loop {
            row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                break norm;
            }
        };
        words.extend(row.iter().map(|v| v * radius / norm));
    }
    Ok(Codebook { n, words })
}

/// A real circulant operator with DFT eigenvalues `H(2πk/n)`.
#[derive(Clone)]
pub struct Circulant {
    eig: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Circulant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Circulant").field("eig", &self.eig).finish()
    }
}

impl Circulant {
    /// Restricts `h` to `n` points and symmetrizes, so the operator is real.
    pub fn new(h: &FrequencyResponse, n: usize) -> Result<Self> {
        let d = h.decimate(n)?;
        let eig = (0..n).map(|k| 0.5 * (d[k] + d[(n - k) % n].conj())).collect();
        let mut planner = FftPlanner::new();
        Ok(Circulant {
            eig,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eig
    }

    fn apply_with(&self, x: &[f64], conj: bool) -> Vec<f64> {
        let n = self.eig.len();
        let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.fwd.process(&mut buf);
        for (b, e) in buf.iter_mut().zip(&self.eig) {
            *b *= if conj { e.conj() } else { *e };
        }
        self.inv.process(&mut buf);
        buf.iter().map(|z| z.re / n as f64).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply_with(x, false)
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        self.apply_with(x, true)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.eig.len() {
            return Err(Error::GridMismatch { left: self.eig.len(), right: len });
        }
        Ok(())
    }
}

fn add_noise<R: Rng + ?Sized>(y: &mut [f64], beta: f64, rng: &mut R) {
    let sigma = beta.sqrt().recip();
    for v in y.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
}

/// `y = A x + N` with `A` circulant from `h` and `N ~ N(0, I/β)`.
pub fn apply_channel<R: Rng + ?Sized>(h: &FrequencyResponse, x: &[f64], beta: f64, rng: &mut R) -> Result<Vec<f64>> {
    let a = Circulant::new(h, x.len())?;
    let mut y = a.apply(x);
    add_noise(&mut y, beta, rng);
    Ok(y)
}

/// Posterior-mean evaluator for one codebook and assumed channel.
struct Posterior<'a> {
    codebook: &'a Codebook,
    assumed: &'a Circulant,
    /// `‖A′x_i‖²`
    energies: Vec<f64>,
    beta: f64,
}

struct PosteriorOutput {
    mean: Vec<f64>,
    /// `ln Σ_i exp(−β‖y − A′x_i‖²/2)`
    log_sum: f64,
}

impl<'a> Posterior<'a> {
    fn new(codebook: &'a Codebook, assumed: &'a Circulant, beta: f64) -> Self {
        let energies = codebook
            .rows()
            .map(|x| assumed.apply(x).iter().map(|v| v * v).sum())
            .collect();
        Posterior { codebook, assumed, energies, beta }
    }

    fn evaluate(&self, y: &[f64]) -> PosteriorOutput {
        let n = self.codebook.n;
        let z = self.assumed.apply_transpose(y);
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let half = 0.5 * self.beta;
        let log_w: Vec<f64> = self
            .codebook
            .rows()
            .zip(&self.energies)
            .map(|(x, e)| {
                let dot: f64 = x.iter().zip(&z).map(|(a, b)| a * b).sum();
                -half * (yy - 2.0 * dot + e)
            })
            .collect();
        let max = log_w.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut total = 0.0;
        let mut acc = vec![0.0; n];
        for (x, lw) in self.codebook.rows().zip(&log_w) {
            let w = (lw - max).exp();
            total += w;
            acc.iter_mut().zip(x).for_each(|(a, v)| *a += w * v);
        }
        acc.iter_mut().for_each(|a| *a /= total);
        PosteriorOutput { mean: acc, log_sum: max + total.ln() }
    }
}

/// `E′{X|Y=y}` under the assumed channel, by enumeration with log-sum-exp
/// weights.
pub fn exact_posterior_mean(codebook: &Codebook, y: &[f64], h_assumed: &FrequencyResponse, beta: f64) -> Result<Vec<f64>> {
    let a = Circulant::new(h_assumed, codebook.n)?;
    a.check_len(y.len())?;
    Ok(Posterior::new(codebook, &a, beta).evaluate(y).mean)
}

fn stream_rng(seed: u64, codebook_idx: usize, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((codebook_idx as u64) << 32) | trial);
    rng
}

fn mean_and_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs all codebooks and trials. Each trial draws from its own ChaCha20
/// stream keyed by `(codebook_idx, trial_idx)`, so results do not depend on
/// the thread count.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult> {
    let m = cfg.validate()?;
    if cfg.trials as u64 >= CODEBOOK_STREAM {
        return Err(Error::InvalidInput("too many trials".into()));
    }
    let n = cfg.n;
    let inst = &cfg.inst;
    let truth = Circulant::new(&inst.h_true, n)?;
    let assumed = Circulant::new(&inst.h_assumed, n)?;
    let mut records = Vec::with_capacity(cfg.codebooks * cfg.trials);
    for cb in 0..cfg.codebooks {
        let mut rng = stream_rng(cfg.seed, cb, CODEBOOK_STREAM);
        let codebook = sample_codebook(n, m, inst.p_x, &mut rng)?;
        let post = Posterior::new(&codebook, &assumed, inst.beta);
        let norm_const = 0.5 * n as f64 * (2.0 * std::f64::consts::PI / inst.beta).ln();
        let batch: Vec<TrialRecord> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream_rng(cfg.seed, cb, t as u64);
                let idx = rng.random_range(0..m);
                let x = codebook.word(idx);
                let mut y = truth.apply(x);
                add_noise(&mut y, inst.beta, &mut rng);
                let out = post.evaluate(&y);
                let err: f64 = x.iter().zip(&out.mean).map(|(a, b)| (a - b).powi(2)).sum();
                TrialRecord {
                    codebook_idx: cb,
                    trial_idx: t,
                    sq_error_per_symbol: err / n as f64,
                    log_partition_per_symbol: (out.log_sum - n as f64 * cfg.rate - norm_const) / n as f64,
                    estimate_norm: out.mean.iter().map(|v| v * v).sum::<f64>().sqrt(),
                }
            })
            .collect();
        records.extend(batch);
    }
    let errs: Vec<f64> = records.iter().map(|r| r.sq_error_per_symbol).collect();
    let logs: Vec<f64> = records.iter().map(|r| r.log_partition_per_symbol).collect();
    let (mse, sd) = mean_and_std(&errs);
    let (log_mean, log_sd) = mean_and_std(&logs);
    let theory = mismatched_mse(inst, cfg.rate.max(f64::MIN_POSITIVE), &RootConfig::default())?;
    Ok(SimResult {
        n,
        codewords: m,
        empirical_mse_per_symbol: mse,
        standard_error: sd / (errs.len() as f64).sqrt(),
        theory_mse_per_symbol: theory.mse_per_symbol,
        empirical_log_partition_mean: log_mean,
        log_partition_std: log_sd,
        phase_predicted: theory.phase,
        max_estimate_norm: records.iter().map(|r| r.estimate_norm).fold(0.0, f64::max),
        per_trial: if cfg.keep_trials { records } else { Vec::new() },
    })
}
