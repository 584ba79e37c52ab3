//! Sweeps over a mismatch parameter and the rate axis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mse::{free_energy_from, Branch, GlassySolution, MseEvaluator};
use crate::rates::{CriticalRates, PhaseLabel, DEFAULT_TIE_TOL};
use crate::solvers::RootConfig;
use crate::spectrum::{FilterSpec, ProblemInstance, DEFAULT_GRID_SIZE};
use crate::{Error, Result};

/// Unevaluated instance: filter specs plus scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceTemplate {
    pub h_true: FilterSpec,
    pub h_assumed: FilterSpec,
    pub beta: f64,
    pub p_x: f64,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
}

fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

impl InstanceTemplate {
    pub fn instance(&self) -> Result<ProblemInstance> {
        ProblemInstance::from_specs(&self.h_true, &self.h_assumed, self.beta, self.p_x, self.grid_size)
    }
}

/// The mismatch parameter varied across sweep columns. All variants act on
/// the assumed channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "param", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweptParam {
    /// Cutoff of an `ideal_lpf`.
    Cutoff,
    /// Gain of any gain-bearing filter.
    Gain,
    /// Lower edge of a `bandpass`, keeping its width.
    BandLeft,
    /// Angle of the first conjugate zero pair of a `fir_from_zeros`, keeping
    /// its modulus.
    ZeroAngle,
    /// Delay `d` of a `delayed_copy_of`.
    Delay,
    /// Index into an explicit list of assumed filters.
    CustomList { filters: Vec<FilterSpec> },
}

fn set_gain(spec: &FilterSpec, v: f64) -> Result<FilterSpec> {
    let mut out = spec.clone();
    match &mut out {
        FilterSpec::Identity { gain }
        | FilterSpec::IdealLpf { gain, .. }
        | FilterSpec::Bandpass { gain, .. }
        | FilterSpec::Multiband { gain, .. }
        | FilterSpec::FirFromZeros { gain, .. } => *gain = v,
        FilterSpec::DelayedCopyOf { base, d } => {
            return Ok(FilterSpec::DelayedCopyOf { base: Box::new(set_gain(base, v)?), d: *d });
        }
        FilterSpec::Tabulated { .. } => return Err(mismatch("gain", "tabulated")),
    }
    Ok(out)
}

fn mismatch(param: &str, kind: &str) -> Error {
    Error::InvalidInput(format!("swept parameter `{param}` does not apply to a `{kind}` filter"))
}

impl SweptParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweptParam::Cutoff => "cutoff",
            SweptParam::Gain => "gain",
            SweptParam::BandLeft => "band_left",
            SweptParam::ZeroAngle => "zero_angle",
            SweptParam::Delay => "delay",
            SweptParam::CustomList { .. } => "custom_list",
        }
    }

    /// The assumed filter at parameter value `v`.
    pub fn apply(&self, spec: &FilterSpec, v: f64) -> Result<FilterSpec> {
        if !v.is_finite() {
            return Err(Error::InvalidInput("swept value must be finite".into()));
        }
        match (self, spec) {
            (SweptParam::Cutoff, FilterSpec::IdealLpf { gain, .. }) => Ok(FilterSpec::IdealLpf { cutoff: v, gain: *gain }),
            (SweptParam::Cutoff, _) => Err(mismatch("cutoff", kind_name(spec))),
            (SweptParam::Gain, _) => set_gain(spec, v),
            (SweptParam::BandLeft, FilterSpec::Bandpass { low, high, gain }) => Ok(FilterSpec::Bandpass {
                low: v,
                high: v + (high - low),
                gain: *gain,
            }),
            (SweptParam::BandLeft, _) => Err(mismatch("band_left", kind_name(spec))),
            (SweptParam::ZeroAngle, FilterSpec::FirFromZeros { zeros, gain, shift, unit_energy }) => {
                if zeros.len() < 2 || zeros[1] != [zeros[0][0], -zeros[0][1]] {
                    return Err(Error::InvalidInput(
                        "zero_angle needs the first two zeros to be a conjugate pair".into(),
                    ));
                }
                let r = zeros[0][0].hypot(zeros[0][1]);
                let mut z = zeros.clone();
                z[0] = [r * v.cos(), r * v.sin()];
                z[1] = [r * v.cos(), -r * v.sin()];
                Ok(FilterSpec::FirFromZeros { zeros: z, gain: *gain, shift: *shift, unit_energy: *unit_energy })
            }
            (SweptParam::ZeroAngle, _) => Err(mismatch("zero_angle", kind_name(spec))),
            (SweptParam::Delay, FilterSpec::DelayedCopyOf { base, .. }) => {
                if v.fract() != 0.0 {
                    return Err(Error::InvalidInput(format!("delay must be an integer, got {v}")));
                }
                Ok(FilterSpec::DelayedCopyOf { base: base.clone(), d: v as i64 })
            }
            (SweptParam::Delay, _) => Err(mismatch("delay", kind_name(spec))),
            (SweptParam::CustomList { filters }, _) => {
                if v.fract() != 0.0 || v < 0.0 || v as usize >= filters.len() {
                    return Err(Error::InvalidInput(format!("custom_list index {v} out of range")));
                }
                Ok(filters[v as usize].clone())
            }
        }
    }
}

fn kind_name(spec: &FilterSpec) -> &'static str {
    match spec {
        FilterSpec::Identity { .. } => "identity",
        FilterSpec::IdealLpf { .. } => "ideal_lpf",
        FilterSpec::Bandpass { .. } => "bandpass",
        FilterSpec::Multiband { .. } => "multiband",
        FilterSpec::FirFromZeros { .. } => "fir_from_zeros",
        FilterSpec::DelayedCopyOf { .. } => "delayed_copy_of",
        FilterSpec::Tabulated { .. } => "tabulated",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "yes")]
    pub rates: bool,
    #[serde(default = "yes")]
    pub phase: bool,
    #[serde(default = "yes")]
    pub mse: bool,
    #[serde(default)]
    pub free_energies: bool,
}

fn yes() -> bool {
    true
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { rates: true, phase: true, mse: true, free_energies: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub name: String,
    pub template: InstanceTemplate,
    pub swept: SweptParam,
    pub param_grid: Vec<f64>,
    pub rate_grid: Vec<f64>,
    #[serde(default)]
    pub outputs: Outputs,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.param_grid.is_empty() || !strictly_increasing(&self.param_grid) {
            return Err(Error::InvalidInput("param_grid must be nonempty and strictly increasing".into()));
        }
        if self.rate_grid.is_empty() || !strictly_increasing(&self.rate_grid) || self.rate_grid[0] <= 0.0 {
            return Err(Error::InvalidInput(
                "rate_grid must be nonempty, positive and strictly increasing".into(),
            ));
        }
        for v in &self.param_grid {
            self.swept.apply(&self.template.h_assumed, *v)?;
        }
        Ok(())
    }

    /// The instance of column `v`.
    pub fn instance_at(&self, v: f64) -> Result<ProblemInstance> {
        let h_assumed = self.swept.apply(&self.template.h_assumed, v)?;
        InstanceTemplate { h_assumed, ..self.template.clone() }.instance()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeEnergies {
    pub ferro: f64,
    pub para: f64,
    /// Defined for `R ≤ R_e`.
    pub glassy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub rate: f64,
    pub phase: Option<PhaseLabel>,
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_energies: Option<FreeEnergies>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub param: f64,
    pub rates: Option<CriticalRates>,
    /// `E_p`, when any paramagnetic cell needed it.
    pub para_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMetadata {
    pub spec: SweepSpec,
    pub grid_size: usize,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub metadata: SweepMetadata,
    pub columns: Vec<Column>,
}

impl SweepGrid {
    pub fn error_count(&self) -> usize {
        self.columns
            .iter()
            .map(|c| c.error.is_some() as usize + c.cells.iter().filter(|x| x.error.is_some()).count())
            .sum()
    }
}

fn failed_cell(rate: f64, e: &Error) -> Cell {
    Cell { rate, phase: None, mse: None, free_energies: None, error: Some(e.to_string()) }
}

fn run_column(spec: &SweepSpec, param: f64, cfg: &RootConfig) -> Column {
    let fail = |e: Error| Column {
        param,
        rates: None,
        para_mse: None,
        error: Some(e.to_string()),
        cells: spec.rate_grid.iter().map(|r| failed_cell(*r, &e)).collect(),
    };
    let inst = match spec.instance_at(param) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    let mut eval = match MseEvaluator::new(&inst, cfg, DEFAULT_TIE_TOL) {
        Ok(e) => e,
        Err(e) => return fail(e),
    };
    let mut hint: Option<GlassySolution> = None;
    let mut cells = Vec::with_capacity(spec.rate_grid.len());
    for &rate in &spec.rate_grid {
        let mut cell = Cell { rate, phase: None, mse: None, free_energies: None, error: None };
        let label = eval.classify(rate);
        cell.phase = Some(label);
        if spec.outputs.mse {
            match eval.evaluate(rate, hint.as_ref()) {
                Ok(rep) => {
                    cell.mse = Some(rep.mse_per_symbol);
                    if rep.glassy.is_some() {
                        hint = rep.glassy;
                    }
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
        }
        if spec.outputs.free_energies {
            match column_free_energies(&eval, rate, hint.as_ref(), cfg) {
                Ok(f) => cell.free_energies = Some(f),
                Err(e) => cell.error = cell.error.or(Some(e.to_string())),
            }
        }
        cells.push(cell);
    }
    let para_mse = if spec.outputs.mse { eval.para().ok().map(|(_, e)| e) } else { None };
    Column { param, rates: Some(eval.rates().clone()), para_mse, error: None, cells }
}

fn column_free_energies(
    eval: &MseEvaluator<'_>,
    rate: f64,
    hint: Option<&GlassySolution>,
    cfg: &RootConfig,
) -> Result<FreeEnergies> {
    let sp = eval.spectra();
    let rates = eval.rates();
    let glassy = if rate <= rates.r_e {
        let g = eval.glassy(rate, hint)?;
        Some(-rate - sp.beta * g.eps_s0)
    } else {
        None
    };
    Ok(FreeEnergies {
        ferro: free_energy_from(sp, rates, rate, Branch::Ferro, cfg)?,
        para: free_energy_from(sp, rates, rate, Branch::Para, cfg)?,
        glassy,
    })
}

/// Evaluates the sweep on a pool of `parallelism` threads. Each column is a
/// single task, so warm starts along the rate axis never cross threads and
/// the output does not depend on the pool size.
pub fn run_sweep(spec: &SweepSpec, parallelism: usize, cfg: &RootConfig) -> Result<SweepGrid> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let columns = pool.install(|| {
        spec.param_grid
            .par_iter()
            .map(|p| run_column(spec, *p, cfg))
            .collect::<Vec<_>>()
    });
    Ok(SweepGrid {
        metadata: SweepMetadata {
            spec: spec.clone(),
            grid_size: spec.template.grid_size,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn lpf_spec() -> SweepSpec {
        SweepSpec {
            name: "t".into(),
            template: InstanceTemplate {
                h_true: FilterSpec::IdealLpf { cutoff: PI / 2.0, gain: 1.0 },
                h_assumed: FilterSpec::IdealLpf { cutoff: PI / 2.0, gain: 1.0 },
                beta: 1.0,
                p_x: 1.0,
                grid_size: 256,
            },
            swept: SweptParam::Cutoff,
            param_grid: vec![1.0, 2.5],
            rate_grid: vec![0.05, 0.2, 0.5],
            outputs: Outputs { free_energies: true, ..Outputs::default() },
        }
    }

    #[test]
    fn swept_params_apply() {
        let bp = FilterSpec::Bandpass { low: 0.1, high: 0.5, gain: 2.0 };
        assert_eq!(
            SweptParam::BandLeft.apply(&bp, 1.0).unwrap(),
            FilterSpec::Bandpass { low: 1.0, high: 1.4, gain: 2.0 }
        );
        assert!(SweptParam::Cutoff.apply(&bp, 1.0).is_err());
        let d = FilterSpec::DelayedCopyOf { base: Box::new(bp.clone()), d: 0 };
        assert!(SweptParam::Delay.apply(&d, 1.5).is_err());
        match SweptParam::Gain.apply(&d, 3.0).unwrap() {
            FilterSpec::DelayedCopyOf { base, .. } => assert_eq!(*base, FilterSpec::Bandpass { low: 0.1, high: 0.5, gain: 3.0 }),
            other => panic!("{other:?}"),
        }
        let fir = FilterSpec::FirFromZeros { zeros: vec![[0.0, 2.0], [0.0, -2.0]], gain: 1.0, shift: 0, unit_energy: false };
        match SweptParam::ZeroAngle.apply(&fir, 0.0).unwrap() {
            FilterSpec::FirFromZeros { zeros, .. } => assert_eq!(zeros, vec![[2.0, 0.0], [2.0, -0.0]]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unsorted_grid() {
        let mut s = lpf_spec();
        s.param_grid = vec![2.0, 1.0];
        assert!(s.validate().is_err());
        let mut s = lpf_spec();
        s.rate_grid = vec![];
        assert!(s.validate().is_err());
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let spec = lpf_spec();
        let a = run_sweep(&spec, 1, &RootConfig::default()).unwrap();
        let b = run_sweep(&spec, 4, &RootConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.columns.len(), 2);
        assert!(a.columns.iter().all(|c| c.cells.len() == 3));
        assert_eq!(a.error_count(), 0);
    }

    #[test]
    fn bad_column_is_recorded() {
        let mut spec = lpf_spec();
        spec.template.beta = -1.0;
        spec.param_grid = vec![1.0];
        let g = run_sweep(&spec, 1, &RootConfig::default()).unwrap();
        assert!(g.columns[0].error.is_some());
        assert_eq!(g.error_count(), 4);
    }
}
