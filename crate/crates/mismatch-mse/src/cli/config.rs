//! Strict JSON configuration files. See `docs/schema.md`.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::cli::presets::preset;
use crate::cli::sweep::{InstanceTemplate, SweepSpec};
use crate::simulator::{SimConfig, DEFAULT_MEMORY_CAP};
use crate::spectrum::ProblemInstance;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: String, message: String },
    Parse { line: usize, column: usize, message: String },
    Schema { field: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read {path}: {message}"),
            ConfigError::Parse { line, column, message } => {
                write!(f, "parse error at line {line}, column {column}: {message}")
            }
            ConfigError::Schema { field, message } => write!(f, "schema error in `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { field, .. } => Some(field),
            _ => None,
        }
    }
}

fn schema(field: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Schema { field: field.to_string(), message: message.to_string() }
}

/// Parses JSON text, reporting syntax errors with their position.
pub fn parse_json(text: &str) -> Result<Value, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Deserializes a parsed value; the error names the offending field path.
pub fn from_value<T: DeserializeOwned>(value: Value) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let field = if path == "." {
            inner
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<root>".to_string())
        } else {
            path
        };
        schema(&field, inner)
    })
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn check_template(t: &InstanceTemplate, prefix: &str) -> Result<ProblemInstance, ConfigError> {
    let field = |name: &str| format!("{prefix}{name}");
    if !(t.beta > 0.0) || !t.beta.is_finite() {
        return Err(schema(&field("beta"), format!("must be positive, got {}", t.beta)));
    }
    if !(t.p_x > 0.0) || !t.p_x.is_finite() {
        return Err(schema(&field("p_x"), format!("must be positive, got {}", t.p_x)));
    }
    if t.grid_size < 16 || t.grid_size % 2 != 0 {
        return Err(schema(&field("grid_size"), format!("must be even and at least 16, got {}", t.grid_size)));
    }
    crate::spectrum::make_builtin_filter(&t.h_true, t.grid_size).map_err(|e| schema(&field("h_true"), e))?;
    crate::spectrum::make_builtin_filter(&t.h_assumed, t.grid_size).map_err(|e| schema(&field("h_assumed"), e))?;
    t.instance().map_err(|e| schema(prefix.trim_end_matches('.'), e))
}

fn override_grid(t: &mut InstanceTemplate, grid_size: Option<usize>) {
    if let Some(g) = grid_size {
        t.grid_size = g;
    }
}

pub fn instance_from_str(text: &str, grid_size: Option<usize>) -> Result<(InstanceTemplate, ProblemInstance), ConfigError> {
    let mut t: InstanceTemplate = from_value(parse_json(text)?)?;
    override_grid(&mut t, grid_size);
    let inst = check_template(&t, "")?;
    Ok((t, inst))
}

pub fn load_instance(path: &Path, grid_size: Option<usize>) -> Result<(InstanceTemplate, ProblemInstance), ConfigError> {
    instance_from_str(&read(path)?, grid_size)
}

fn default_codebooks() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimFile {
    instance: InstanceTemplate,
    n: usize,
    rate: f64,
    trials: usize,
    #[serde(default = "default_codebooks")]
    codebooks: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    keep_trials: bool,
    #[serde(default)]
    memory_cap: Option<usize>,
}

pub fn sim_from_str(text: &str, grid_size: Option<usize>) -> Result<SimConfig, ConfigError> {
    let mut f: SimFile = from_value(parse_json(text)?)?;
    override_grid(&mut f.instance, grid_size);
    let inst = check_template(&f.instance, "instance.")?;
    if !f.n.is_power_of_two() || f.n < 2 {
        return Err(schema("n", format!("must be a power of two, got {}", f.n)));
    }
    if !(f.rate >= 0.0) || !f.rate.is_finite() {
        return Err(schema("rate", format!("must be non-negative, got {}", f.rate)));
    }
    if f.trials == 0 {
        return Err(schema("trials", "must be at least 1"));
    }
    if f.codebooks == 0 {
        return Err(schema("codebooks", "must be at least 1"));
    }
    Ok(SimConfig {
        n: f.n,
        rate: f.rate,
        inst,
        trials: f.trials,
        codebooks: f.codebooks,
        seed: f.seed,
        keep_trials: f.keep_trials,
        memory_cap: f.memory_cap.unwrap_or(DEFAULT_MEMORY_CAP),
    })
}

pub fn load_sim(path: &Path, grid_size: Option<usize>) -> Result<SimConfig, ConfigError> {
    sim_from_str(&read(path)?, grid_size)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetRef {
    preset: String,
    #[serde(default)]
    chi: Option<f64>,
    #[serde(default)]
    grid_size: Option<usize>,
    #[serde(default)]
    rate_grid: Option<Vec<f64>>,
}

/// A sweep file holds either a full sweep specification or a reference to a
/// preset (`{"preset": "example1", "chi": 2}`).
pub fn sweep_from_str(text: &str, grid_size: Option<usize>) -> Result<SweepSpec, ConfigError> {
    let value = parse_json(text)?;
    let mut spec = if value.get("preset").is_some() {
        let r: PresetRef = from_value(value)?;
        let mut s = preset(&r.preset, r.chi, r.grid_size).map_err(|e| schema("preset", e))?;
        if let Some(g) = r.rate_grid {
            s.rate_grid = g;
        }
        s
    } else {
        from_value::<SweepSpec>(value)?
    };
    override_grid(&mut spec.template, grid_size);
    check_template(&spec.template, "template.")?;
    spec.validate().map_err(|e| schema("swept", e))?;
    Ok(spec)
}

pub fn load_sweep(path: &Path, grid_size: Option<usize>) -> Result<SweepSpec, ConfigError> {
    sweep_from_str(&read(path)?, grid_size)
}

/// Any of the three configuration kinds.
#[derive(Debug, Clone)]
pub enum LoadedConfig {
    Instance(ProblemInstance),
    Sim(SimConfig),
    Sweep(SweepSpec),
}

/// Loads a file, choosing the kind from its top-level keys.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    config_from_str(&read(path)?)
}

pub fn config_from_str(text: &str) -> Result<LoadedConfig, ConfigError> {
    let value = parse_json(text)?;
    let has = |k: &str| value.get(k).is_some();
    if has("preset") || has("swept") {
        sweep_from_str(text, None).map(LoadedConfig::Sweep)
    } else if has("instance") {
        sim_from_str(text, None).map(LoadedConfig::Sim)
    } else {
        instance_from_str(text, None).map(|(_, i)| LoadedConfig::Instance(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MATCHED: &str = r#"{"h_true": {"kind": "identity"}, "h_assumed": {"kind": "identity"}, "beta": 1, "p_x": 1}"#;

    #[test]
    fn minimal_matched_instance() {
        let (t, inst) = instance_from_str(MATCHED, None).unwrap();
        assert_eq!(t.grid_size, 4096);
        assert_eq!(inst.grid_size(), 4096);
        assert!(matches!(config_from_str(MATCHED).unwrap(), LoadedConfig::Instance(_)));
    }

    #[test]
    fn nonpositive_beta_is_schema_error() {
        let text = MATCHED.replace("\"beta\": 1", "\"beta\": 0");
        let err = instance_from_str(&text, None).unwrap_err();
        assert_eq!(err.field(), Some("beta"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MATCHED.replace("\"p_x\": 1", "\"p_x\": 1, \"colour\": 3");
        let err = instance_from_str(&text, None).unwrap_err();
        assert_eq!(err.field(), Some("colour"), "{err}");
        let text = MATCHED.replace(r#"{"kind": "identity"}"#, r#"{"kind": "identity", "gian": 2}"#);
        assert!(matches!(instance_from_str(&text, None), Err(ConfigError::Schema { .. })));
    }

    #[test]
    fn wrong_type_names_field() {
        let text = MATCHED.replace("\"p_x\": 1", "\"p_x\": \"one\"");
        assert_eq!(instance_from_str(&text, None).unwrap_err().field(), Some("p_x"));
        let text = r#"{"h_true": {"kind": "ideal_lpf", "cutoff": "x"}, "h_assumed": {"kind": "identity"}, "beta": 1, "p_x": 1}"#;
        let f = instance_from_str(text, None).unwrap_err();
        assert!(f.field().unwrap().starts_with("h_true"), "{f}");
    }

    #[test]
    fn parse_error_has_position() {
        match instance_from_str("{\n  \"beta\": 1,,\n}", None) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn preset_reference() {
        let s = sweep_from_str(r#"{"preset": "example4"}"#, Some(256)).unwrap();
        assert_eq!(s.param_grid, (0..=8).map(f64::from).collect::<Vec<_>>());
        assert_eq!(s.template.grid_size, 256);
        assert!(sweep_from_str(r#"{"preset": "example9"}"#, None).is_err());
    }

    #[test]
    fn sim_file() {
        let text = format!(r#"{{"instance": {MATCHED}, "n": 16, "rate": 0.5, "trials": 3}}"#);
        let s = sim_from_str(&text, Some(64)).unwrap();
        assert_eq!((s.n, s.trials, s.codebooks, s.seed), (16, 3, 1, 0));
        let bad = text.replace("\"n\": 16", "\"n\": 12");
        assert_eq!(sim_from_str(&bad, None).unwrap_err().field(), Some("n"));
    }
}
