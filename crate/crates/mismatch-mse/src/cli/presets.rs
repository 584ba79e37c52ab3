//! Named sweeps for the four example channel pairs. All use `β = P_x = 1`.

use std::f64::consts::PI;

use crate::cli::sweep::{InstanceTemplate, Outputs, SweepSpec, SweptParam};
use crate::spectrum::{FilterSpec, DEFAULT_GRID_SIZE};
use crate::{Error, Result};

pub const PRESET_NAMES: [&str; 4] = ["example1", "example2", "example3", "example4"];

/// Zero of the Type-II FIR examples, `e^{j0.8π}`.
pub fn fir_zero() -> [f64; 2] {
    [(0.8 * PI).cos(), (0.8 * PI).sin()]
}

/// 60 log-spaced rates on `[0.01, 1.2]`.
pub fn default_rate_grid() -> Vec<f64> {
    log_grid(0.01, 1.2, 60)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "example1" => "ideal LPF (cutoff pi/2) vs LPF of cutoff k*pi/16 and gain chi; sweeps the cutoff",
        "example2" => "two-band channel vs a width-pi/8 bandpass; sweeps the left band edge k*pi/16",
        "example3" => "Type-II FIR with double zeros at exp(+-0.8j*pi) vs an FIR whose first zero pair sits at angle k*pi/20",
        "example4" => "unit-energy FIR vs its own delayed copy; sweeps the delay d = 0..8",
        _ => return None,
    })
}

pub fn example1_assumed(cutoff: f64, chi: f64) -> FilterSpec {
    FilterSpec::IdealLpf { cutoff, gain: chi }
}

pub fn example3_fir(first: [f64; 2]) -> FilterSpec {
    let a = fir_zero();
    FilterSpec::FirFromZeros {
        zeros: vec![first, [first[0], -first[1]], a, [a[0], -a[1]]],
        gain: 1.0,
        shift: 0,
        unit_energy: false,
    }
}

pub fn example4_base() -> FilterSpec {
    let a = fir_zero();
    FilterSpec::FirFromZeros { zeros: vec![a, [a[0], -a[1]]], gain: 1.0, shift: 1, unit_energy: true }
}

/// The named preset sweep. `chi` sets the assumed gain of `example1`
/// (default 1) and is rejected by the others.
pub fn preset(name: &str, chi: Option<f64>, grid_size: Option<usize>) -> Result<SweepSpec> {
    if chi.is_some() && name != "example1" {
        return Err(Error::InvalidInput(format!("preset `{name}` takes no gain parameter")));
    }
    let grid_size = grid_size.unwrap_or(DEFAULT_GRID_SIZE);
    let template = |h_true: FilterSpec, h_assumed: FilterSpec| InstanceTemplate {
        h_true,
        h_assumed,
        beta: 1.0,
        p_x: 1.0,
        grid_size,
    };
    let steps = |lo: usize, hi: usize, div: f64| -> Vec<f64> { (lo..=hi).map(|k| k as f64 * PI / div).collect() };
    let (template, swept, param_grid) = match name {
        "example1" => {
            let chi = chi.unwrap_or(1.0);
            (
                template(FilterSpec::IdealLpf { cutoff: PI / 2.0, gain: 1.0 }, example1_assumed(PI / 2.0, chi)),
                SweptParam::Cutoff,
                steps(1, 16, 16.0),
            )
        }
        "example2" => (
            template(
                FilterSpec::Multiband { bands: vec![[PI / 4.0, PI / 2.0], [3.0 * PI / 4.0, PI]], gain: 1.0 },
                FilterSpec::Bandpass { low: 0.0, high: PI / 8.0, gain: 1.0 },
            ),
            SweptParam::BandLeft,
            steps(0, 14, 16.0),
        ),
        "example3" => {
            let a = fir_zero();
            (
                template(FilterSpec::FirFromZeros {
                    zeros: vec![a, a, [a[0], -a[1]], [a[0], -a[1]]],
                    gain: 1.0,
                    shift: 0,
                    unit_energy: false,
                }, example3_fir([1.0, 0.0])),
                SweptParam::ZeroAngle,
                steps(0, 20, 20.0),
            )
        }
        "example4" => (
            template(example4_base(), FilterSpec::DelayedCopyOf { base: Box::new(example4_base()), d: 0 }),
            SweptParam::Delay,
            (0..=8).map(f64::from).collect(),
        ),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown preset `{other}`; known presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(SweepSpec {
        name: name.to_string(),
        template,
        swept,
        param_grid,
        rate_grid: default_rate_grid(),
        outputs: Outputs::default(),
    })
}
