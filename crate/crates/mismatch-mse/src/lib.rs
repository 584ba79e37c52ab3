//! Asymptotic matched and mismatched MSE of codeword estimation over
//! Gaussian Toeplitz channels.
//!
//! The library evaluates critical rates, phase labels, asymptotic estimator
//! filters and MSE values from sampled frequency responses, and ships a
//! finite-n Monte-Carlo simulator plus a sweep engine for phase diagrams.

pub mod cli;
pub mod mse;
pub mod rates;
pub mod simulator;
pub mod solvers;
pub mod spectrum;

use solvers::SolverError;
use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {left} vs {right} samples")]
    GridMismatch { left: usize, right: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: SolverError,
    },

    #[error("gamma0 not bracketed: {0}")]
    Gamma0NotBracketed(SolverError),

    #[error("logarithm of non-positive value in {0}")]
    LogOfNonPositive(String),

    #[error("R_d cross-check mismatch: display form {display}, identity form {identity}")]
    CrossCheckMismatch { display: f64, identity: f64 },

    #[error("degenerate chain: {0} vanishes")]
    DegenerateChain(String),

    #[error("glassy root not bracketed: g = {g_lo} at b = {b_lo}, g = {g_hi} at b = {b_hi}")]
    GlassyRootNotBracketed {
        b_lo: f64,
        b_hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("energy level {eps} outside the attainable range")]
    EnergyOutOfRange { eps: f64 },

    #[error("simulation limits exceeded: {0}")]
    SimulationLimit(String),
}

impl Error {
    pub(crate) fn solver(context: impl Into<String>, source: SolverError) -> Self {
        Error::Solver {
            context: context.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidInput(_) | Error::GridMismatch { .. } | Error::SimulationLimit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub use mse::{
    build_eg_chain, build_ep_chain, filter_mse, free_energy, gamma_of_eps, matched_mmse,
    mismatched_mse, solve_alphas_given_eps, solve_glassy_system, wiener_filter, Branch, EgChain,
    EpChain, FilterKind, GlassySolution, LinearFilter, MseReport,
};
pub use rates::{
    classify_phase, compute_critical_rates, matched_rc, CriticalRates, Phase, PhaseLabel,
};
pub use solvers::RootConfig;
pub use spectrum::{make_builtin_filter, FilterSpec, FrequencyResponse, ProblemInstance};
