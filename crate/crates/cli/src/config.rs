//! Pipeline configuration: TOML sections with defaults, overrides, and
//! validation errors that point at the offending line.

use crate::error::CliError;
use lcs_core::ns_solver::TurbulenceConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    /// Built-in analytic field: duffing, saddle, uniform, zero.
    pub builtin: Option<String>,
    /// Gridded velocity file; also where `turbulence` writes its output.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    /// Output time for extracted LCS.
    pub t: Option<f64>,
}

/// Seed grid; unset keys default from the field.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Aux,
    Main,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub method: Method,
    /// Auxiliary offset; defaults to 1e-2 of the grid spacing.
    pub rho: Option<f64>,
    pub atol: f64,
    pub rtol: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection { method: Method::Aux, rho: None, atol: 1e-8, rtol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedingSection {
    pub radius: f64,
    pub length: f64,
    pub floor: bool,
    pub floor_percentile: f64,
}

impl Default for SeedingSection {
    fn default() -> Self {
        SeedingSection { radius: 0.2, length: 0.1, floor: true, floor_percentile: 90.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    /// Largest allowed gap between neighbouring curve points; defaults to the grid spacing.
    pub delta_max: Option<f64>,
    pub n_substeps: usize,
    pub max_points: usize,
    pub max_turn_deg: f64,
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection { delta_max: None, n_substeps: 20, max_points: 100_000, max_turn_deg: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Pointwise,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Shrinkline,
    Advected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    /// Time at which curves are compared; defaults to t1.
    pub time: Option<f64>,
    /// Shrink-line step; defaults to half the grid spacing.
    pub step: Option<f64>,
    pub samples: usize,
    pub metric: MetricKind,
    pub baseline: Baseline,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection { time: None, step: None, samples: 201, metric: MetricKind::Pointwise, baseline: Baseline::Shrinkline }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub incompressible: bool,
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { incompressible: true, output_dir: PathBuf::from("lcs-out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub field: FieldSection,
    pub time: TimeSection,
    pub grid: GridSection,
    pub flow: FlowSection,
    pub seeding: SeedingSection,
    pub refine: RefineSection,
    pub compare: CompareSection,
    pub run: RunSection,
    pub turbulence: TurbulenceConfig,
}

/// A parsed configuration together with the text it came from, for locating
/// keys in error messages.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub source: String,
    pub origin: String,
}

/// Line (1-based) of `key = ...` inside `[section]`.
pub fn locate_key(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

impl LoadedConfig {
    /// Semantic error attached to `section.key`.
    pub fn error_at(&self, section: &str, key: &str, msg: impl Into<String>) -> CliError {
        let msg = msg.into();
        match locate_key(&self.source, section, key) {
            Some(line) => CliError::Config(format!("{}:{line}: {section}.{key}: {msg}", self.origin)),
            None => CliError::Config(format!("{}: {section}.{key}: {msg}", self.origin)),
        }
    }
}

fn parse_error(origin: &str, source: &str, err: toml::de::Error) -> CliError {
    let msg = err.message().trim().to_string();
    match err.span() {
        Some(span) => {
            let line = source[..span.start.min(source.len())].matches('\n').count() + 1;
            CliError::Config(format!("{origin}:{line}: {msg}"))
        }
        None => CliError::Config(format!("{origin}: {msg}")),
    }
}

/// Parses `source`, then applies `section.key=value` overrides (values in
/// TOML syntax; bare words are taken as strings).
pub fn parse(source: &str, origin: &str, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let config: Config = toml::from_str(source).map_err(|e| parse_error(origin, source, e))?;
    if overrides.is_empty() {
        return Ok(LoadedConfig { config, source: source.to_string(), origin: origin.to_string() });
    }
    let mut table: toml::Table = toml::from_str(source).map_err(|e| parse_error(origin, source, e))?;
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{o}` is not of the form section.key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| CliError::Config(format!("override `{o}` needs a section.key path")))?;
        let value = parse_value(raw.trim());
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(key.to_string(), value);
            }
            _ => return Err(CliError::Config(format!("override `{o}`: `{section}` is not a section"))),
        }
    }
    let config = Config::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::Config(format!("command-line override: {}", e.message().trim())))?;
    Ok(LoadedConfig { config, source: source.to_string(), origin: origin.to_string() })
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            parse(&text, &p.display().to_string(), overrides)
        }
        None => parse("", "<defaults>", overrides),
    }
}

impl Config {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
