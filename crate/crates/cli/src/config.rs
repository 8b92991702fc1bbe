//! Analysis and simulation configuration files.
//!
//! Files are TOML unless the extension is `.json`. A file with a
//! `[simulation]` table configures `minbo simulate`; one with a `[main]` table
//! configures `minbo estimate`.

use std::fmt;
use std::path::{Path, PathBuf};

use minbo::model::{Link, VarianceMode};
use minbo::schemes::WeightMode;
use minbo::simulation::{EstimatorId, Generator, Missingness, SimulationConfig};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

/// Environment variable overriding any configured seed.
pub const SEED_ENV: &str = "MINBO_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

impl<T> Default for OneOrMany<T> {
    fn default() -> Self {
        Self::Many(Vec::new())
    }
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub main: MainFile,
    #[serde(default)]
    pub secondary: Vec<SecondaryFile>,
    pub scheme: OneOrMany<SchemeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub options: Options,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MainFile {
    pub file: PathBuf,
    #[serde(default = "default_id")]
    pub id: String,
    pub outcome: String,
    pub covariates: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondaryKind {
    Longitudinal,
    CrossSectional,
}

/// Basis matrices for longitudinal moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMatrix {
    Identity,
    /// Ones off the diagonal.
    Exchangeable,
    /// Ones on the first off-diagonals.
    Band,
    /// First and last diagonal entries.
    Corners,
}

impl BasisMatrix {
    pub const DEFAULT: [BasisMatrix; 4] = [Self::Identity, Self::Exchangeable, Self::Band, Self::Corners];

    /// Position in `minbo::model::default_basis`.
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryFile {
    pub file: PathBuf,
    pub kind: SecondaryKind,
    #[serde(default = "default_id")]
    pub id: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    /// Extra moment covariates of a cross-sectional model.
    #[serde(default)]
    pub redundant: Vec<String>,
    /// Visit column of a longitudinal file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<String>,
    #[serde(default = "default_true")]
    pub intercept: bool,
    #[serde(default = "default_basis")]
    pub basis: Vec<BasisMatrix>,
    #[serde(default = "default_link")]
    pub link: Link,
    #[serde(default = "default_variance_mode")]
    pub variance_mode: VarianceMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKindConfig {
    Averaging,
    Aggregating,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kind: SchemeKindConfig,
    /// Rows of `ω` for custom schemes, each a comma-separated list of reals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<OmegaRow>>,
    #[serde(default = "default_weight_mode")]
    pub weight_mode: WeightMode,
}

impl SchemeConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            match self.kind {
                SchemeKindConfig::Averaging => "averaging",
                SchemeKindConfig::Aggregating => "aggregating",
                SchemeKindConfig::Custom => "custom",
            }
            .to_string()
        })
    }
}

/// One `ω` row, written as `"0.5, 0, 0.5"`.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaRow(pub Vec<f64>);

impl fmt::Display for OmegaRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(", "))
    }
}

impl std::str::FromStr for OmegaRow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>().map_err(|_| format!("invalid weight {t:?} in omega row {s:?}"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(OmegaRow)
    }
}

impl Serialize for OmegaRow {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OmegaRow {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            level: default_level(),
            inner_tol: default_inner_tol(),
            outer_tol: default_outer_tol(),
            threads: None,
            seed: None,
        }
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub simulation: OneOrMany<SimulationBlock>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A grid of Monte Carlo cells sharing everything except `n` and `rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    /// Prefix of this block's output files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: OneOrMany<usize>,
    pub rho: OneOrMany<f64>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_missingness")]
    pub missingness: Missingness,
    #[serde(default)]
    pub misspecified: bool,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorId>,
    #[serde(default)]
    pub generator: Generator,
    #[serde(default = "default_level")]
    pub level: f64,
}

/// One `(n, rho)` cell of a block.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub name: String,
    pub config: SimulationConfig,
}

impl SimulateConfig {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for block in self.simulation.to_vec() {
            for n in block.n.to_vec() {
                for rho in block.rho.to_vec() {
                    let stem = format!("n{n}_rho{rho}");
                    let name = match &block.name {
                        Some(p) => format!("{p}_{stem}"),
                        None => stem,
                    };
                    out.push(Cell {
                        name,
                        config: SimulationConfig {
                            n,
                            rho,
                            missingness: block.missingness.clone(),
                            misspecified: block.misspecified,
                            reps: block.reps,
                            seed: block.seed,
                            estimators: block.estimators.clone(),
                            generator: block.generator,
                            level: block.level,
                        },
                    });
                }
            }
        }
        out
    }

    /// Replaces every block's seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.simulation = OneOrMany::Many(
            self.simulation
                .to_vec()
                .into_iter()
                .map(|b| SimulationBlock { seed, ..b })
                .collect(),
        );
    }
}

// ---------------------------------------------------------------------------
// loading
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum Config {
    Analysis(AnalysisConfig),
    Simulate(SimulateConfig),
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Parses a configuration from text; `json` selects the JSON syntax.
pub fn parse_config(text: &str, json: bool) -> Result<Config, CliError> {
    let value: serde_json::Value = if json {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        serde_json::to_value(table).map_err(|e| CliError::Config(e.to_string()))?
    };
    let is_sim = value.get("simulation").is_some();
    let is_main = value.get("main").is_some();
    match (is_sim, is_main) {
        (true, false) => serde_json::from_value(value)
            .map(Config::Simulate)
            .map_err(|e| CliError::Config(e.to_string())),
        (false, true) => serde_json::from_value(value)
            .map(Config::Analysis)
            .map_err(|e| CliError::Config(e.to_string())),
        (true, true) => Err(CliError::Config(
            "a config has either a [simulation] or a [main] table, not both".into(),
        )),
        (false, false) => Err(CliError::Config(
            "config needs a [simulation] table (simulate) or a [main] table (estimate)".into(),
        )),
    }
}

/// Reads a configuration file, resolving data paths against its directory and
/// applying the seed override from the environment.
pub fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse_config(&text, is_json(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let seed = env_seed()?;
    match &mut cfg {
        Config::Analysis(a) => {
            a.main.file = base.join(&a.main.file);
            for s in &mut a.secondary {
                s.file = base.join(&s.file);
            }
            if seed.is_some() {
                a.options.seed = seed;
            }
        }
        Config::Simulate(s) => {
            if let Some(seed) = seed {
                s.override_seed(seed);
            }
        }
    }
    Ok(cfg)
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Serializes a configuration in the given syntax.
pub fn render_config(cfg: &Config, json: bool) -> Result<String, CliError> {
    let value = match cfg {
        Config::Analysis(a) => serde_json::to_value(a),
        Config::Simulate(s) => serde_json::to_value(s),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    if json {
        serde_json::to_string_pretty(&value).map_err(|e| CliError::Config(e.to_string()))
    } else {
        toml::to_string(&value).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn default_id() -> String {
    "id".into()
}

fn default_true() -> bool {
    true
}

fn default_basis() -> Vec<BasisMatrix> {
    BasisMatrix::DEFAULT.to_vec()
}

fn default_link() -> Link {
    Link::Identity
}

fn default_variance_mode() -> VarianceMode {
    VarianceMode::Unit
}

fn default_weight_mode() -> WeightMode {
    WeightMode::Fixed
}

fn default_level() -> f64 {
    0.95
}

fn default_inner_tol() -> f64 {
    minbo::el::ElOptions::default().inner_tol
}

fn default_outer_tol() -> f64 {
    minbo::el::ElOptions::default().outer_tol
}

fn default_missingness() -> Missingness {
    Missingness::Full
}

fn default_estimators() -> Vec<EstimatorId> {
    EstimatorId::EIGHT.to_vec()
}
