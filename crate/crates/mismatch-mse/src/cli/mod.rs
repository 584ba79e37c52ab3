//! Command-line front end: configuration, presets, sweeps and emitters.

pub mod config;
pub mod output;
pub mod presets;
pub mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::cli::config::ConfigError;
use crate::cli::sweep::{run_sweep, SweepSpec};
use crate::mse::MseEvaluator;
use crate::rates::{classify_phase, compute_critical_rates, DEFAULT_TIE_TOL};
use crate::simulator::run_simulation;
use crate::solvers::RootConfig;
use crate::spectrum::ProblemInstance;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const SEED_ENV: &str = "MMSE_SEED";

#[derive(Debug, Parser)]
#[command(name = "mismatch-mse", version, about = "Critical rates, phases and MSE of mismatched codeword estimation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Frequency grid size (overrides the config file).
    #[arg(long, global = true)]
    pub grid_size: Option<usize>,
    /// Residual tolerance of the root solvers.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Iteration cap of the root solvers.
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Worker threads for sweeps and simulations.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallelism: usize,
    /// RNG seed (overrides MMSE_SEED and the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InstanceSource {
    /// Instance JSON file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Preset name; the instance is the column at `--param`.
    #[arg(long, requires = "param")]
    pub preset: Option<String>,
    /// Swept-parameter value selecting a column of the preset.
    #[arg(long)]
    pub param: Option<f64>,
    /// Assumed gain of example1.
    #[arg(long)]
    pub chi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepSource {
    /// Sweep JSON file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Preset name.
    #[arg(long)]
    pub preset: Option<String>,
    /// Assumed gain of example1.
    #[arg(long)]
    pub chi: Option<f64>,
    /// Also compute free energies of every branch.
    #[arg(long)]
    pub free_energies: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print γ₀ and the critical rates as JSON.
    Rates {
        #[command(flatten)]
        source: InstanceSource,
        /// Also classify this rate.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Print the MSE report at one rate as JSON.
    Mse {
        #[command(flatten)]
        source: InstanceSource,
        #[arg(long)]
        rate: f64,
        /// Write the estimator filter samples as CSV.
        #[arg(long)]
        emit_filter: Option<PathBuf>,
    },
    /// Run a sweep and write the CSV and SVG phase diagram.
    PhaseDiagram {
        #[command(flatten)]
        source: SweepSource,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_svg: PathBuf,
        /// Also write a gnuplot script reading the CSV.
        #[arg(long, requires = "out_csv")]
        gnuplot: Option<PathBuf>,
    },
    /// Monte-Carlo simulation with exact posterior means.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Per-trial CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep and write the CSV (stdout when `--out` is absent).
    Sweep {
        #[command(flatten)]
        source: SweepSource,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full grid as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Preset sweeps.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetsAction {
    /// List preset names.
    List,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(Error),
    Io { path: String, message: String },
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }

    pub fn report(&self) -> Value {
        let (kind, message, field) = match self {
            CliError::Config(e) => ("config", e.to_string(), e.field().map(str::to_string)),
            CliError::Core(e) if e.is_numerical() => ("numerical", e.to_string(), None),
            CliError::Core(e) => ("input", e.to_string(), None),
            CliError::Io { path, message } => ("io", format!("{path}: {message}"), None),
            CliError::Usage(m) => ("usage", m.clone(), None),
        };
        let mut v = json!({ "error": kind, "message": message, "exit_code": self.exit_code() });
        if let Some(f) = field {
            v["field"] = json!(f);
        }
        v
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn root_config(g: &GlobalArgs) -> Result<RootConfig, CliError> {
    let mut cfg = RootConfig::default();
    if let Some(t) = g.tol {
        cfg.abs_tol = t;
    }
    if let Some(m) = g.max_iters {
        cfg.max_iters = m;
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("invalid solver settings: {e}")))?;
    Ok(cfg)
}

fn load_instance(src: &InstanceSource, g: &GlobalArgs) -> Result<ProblemInstance, CliError> {
    match (&src.config, &src.preset) {
        (Some(path), None) => Ok(config::load_instance(path, g.grid_size)?.1),
        (None, Some(name)) => {
            let spec = presets::preset(name, src.chi, g.grid_size)?;
            let v = src.param.ok_or_else(|| CliError::Usage("--preset needs --param".into()))?;
            Ok(spec.instance_at(v)?)
        }
        _ => Err(CliError::Usage("give either --config or --preset".into())),
    }
}

fn load_sweep(src: &SweepSource, g: &GlobalArgs) -> Result<SweepSpec, CliError> {
    let mut spec = match (&src.config, &src.preset) {
        (Some(path), None) => config::load_sweep(path, g.grid_size)?,
        (None, Some(name)) => presets::preset(name, src.chi, g.grid_size)?,
        _ => return Err(CliError::Usage("give either --config or --preset".into())),
    };
    if src.free_energies {
        spec.outputs.free_energies = true;
    }
    Ok(spec)
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn print_json(out: &mut dyn Write, v: &Value) -> Result<(), CliError> {
    writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json value")).map_err(|e| CliError::Io {
        path: "<stdout>".into(),
        message: e.to_string(),
    })
}

fn seed_override(g: &GlobalArgs) -> Result<Option<u64>, CliError> {
    if g.seed.is_some() {
        return Ok(g.seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let g = &cli.global;
    let cfg = root_config(g)?;
    if g.parallelism == 0 {
        return Err(CliError::Usage("--parallelism must be at least 1".into()));
    }
    match &cli.command {
        Command::Rates { source, rate } => {
            let inst = load_instance(source, g)?;
            let rates = compute_critical_rates(&inst, &cfg)?;
            let mut v = to_json(&rates);
            if let Some(r) = rate {
                let label = classify_phase(*r, &rates, DEFAULT_TIE_TOL);
                v["rate"] = json!(r);
                v["phase"] = to_json(&label.phase);
                v["boundary"] = json!(label.boundary);
            }
            print_json(out, &v)
        }
        Command::Mse { source, rate, emit_filter } => {
            let inst = load_instance(source, g)?;
            let report = MseEvaluator::new(&inst, &cfg, DEFAULT_TIE_TOL)?.evaluate(*rate, None)?;
            if let (Some(path), Some(f)) = (emit_filter, &report.filter) {
                write_file(path, &output::filter_csv(f))?;
            }
            let v = json!({
                "rate": rate,
                "phase": to_json(&report.phase.phase),
                "boundary": report.phase.boundary,
                "mse_per_symbol": report.mse_per_symbol,
                "filter_kind": report.filter.as_ref().map(|f| to_json(&f.kind)),
                "rates": to_json(&report.rates),
                "glassy": report.glassy.as_ref().map(to_json),
            });
            print_json(out, &v)
        }
        Command::PhaseDiagram { source, out_csv, out_svg, gnuplot } => {
            let spec = load_sweep(source, g)?;
            let grid = run_sweep(&spec, g.parallelism, &cfg)?;
            write_file(out_svg, &output::sweep_svg(&grid))?;
            if let Some(p) = out_csv {
                write_file(p, &output::sweep_csv(&grid))?;
                if let Some(script) = gnuplot {
                    write_file(script, &output::gnuplot_script(&grid, &p.display().to_string()))?;
                }
            }
            print_json(out, &sweep_summary(&grid))
        }
        Command::Sweep { source, out: path, json } => {
            let spec = load_sweep(source, g)?;
            let grid = run_sweep(&spec, g.parallelism, &cfg)?;
            let csv = output::sweep_csv(&grid);
            if let Some(p) = json {
                write_file(p, &serde_json::to_string_pretty(&grid).expect("grid serializes"))?;
            }
            match path {
                Some(p) => {
                    write_file(p, &csv)?;
                    print_json(out, &sweep_summary(&grid))
                }
                None => out.write_all(csv.as_bytes()).map_err(|e| CliError::Io {
                    path: "<stdout>".into(),
                    message: e.to_string(),
                }),
            }
        }
        Command::Simulate { config: path, out: csv } => {
            let mut sim = config::load_sim(path, g.grid_size)?;
            if let Some(seed) = seed_override(g)? {
                sim.seed = seed;
            }
            sim.keep_trials = sim.keep_trials || csv.is_some();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(g.parallelism)
                .build()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            let mut result = pool.install(|| run_simulation(&sim))?;
            if let Some(p) = csv {
                write_file(p, &output::trials_csv(&result.per_trial))?;
            }
            result.per_trial.clear();
            let mut v = to_json(&result);
            v["seed"] = json!(sim.seed);
            v["rate"] = json!(sim.rate);
            print_json(out, &v)
        }
        Command::Presets { action: PresetsAction::List } => {
            for name in presets::PRESET_NAMES {
                writeln!(out, "{name}\t{}", presets::describe(name).unwrap_or("")).map_err(|e| CliError::Io {
                    path: "<stdout>".into(),
                    message: e.to_string(),
                })?;
            }
            Ok(())
        }
    }
}

fn sweep_summary(grid: &sweep::SweepGrid) -> Value {
    let errors: Vec<Value> = grid
        .columns
        .iter()
        .flat_map(|c| {
            c.cells
                .iter()
                .filter_map(move |x| x.error.as_ref().map(|e| json!({ "param": c.param, "rate": x.rate, "error": e })))
        })
        .collect();
    json!({
        "name": grid.metadata.spec.name,
        "swept": grid.metadata.spec.swept.name(),
        "columns": grid.columns.len(),
        "rates": grid.metadata.spec.rate_grid.len(),
        "grid_size": grid.metadata.grid_size,
        "tool_version": grid.metadata.tool_version,
        "cell_errors": errors,
    })
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let report = CliError::Usage(e.to_string()).report();
            let _ = writeln!(err, "{report}");
            return EXIT_CONFIG;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{}", e.report());
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
