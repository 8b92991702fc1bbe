//! `estimate`, `simulate` and `validate`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use minbo::analysis::{analyze, AnalysisOptions, AnalysisResult, SchemeRequest};
use minbo::el::ElOptions;
use minbo::model::WorkingModel;
use minbo::numerics::Matrix;
use minbo::schemes::{build_scheme, SchemeKind, SchemeSpec};
use minbo::simulation::{monte_carlo_with_threads, MonteCarloSummary, MAX_FAILURE_FRACTION};
use serde::Serialize;

use crate::config::{
    AnalysisConfig, Config, OutputFormat, SchemeConfig, SchemeKindConfig, SimulateConfig,
};
use crate::data::{load_datasets, Loaded};
use crate::error::CliError;
use crate::format::to_json;
use crate::report::{report_csv, report_json, report_rows, table_csv, ReportRow};

pub fn scheme_spec(s: &SchemeConfig, k: usize) -> Result<SchemeSpec, CliError> {
    let kind = match s.kind {
        SchemeKindConfig::Averaging => SchemeKind::Averaging,
        SchemeKindConfig::Aggregating => SchemeKind::Aggregating,
        SchemeKindConfig::Custom => {
            let rows = s.omega.as_ref().ok_or_else(|| {
                CliError::Config(format!("custom scheme {:?} needs omega rows", s.label()))
            })?;
            let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            SchemeKind::Custom(Matrix::from_rows(&rows)?)
        }
    };
    Ok(build_scheme(kind, k, s.weight_mode)?)
}

pub fn scheme_requests(cfg: &AnalysisConfig) -> Result<Vec<SchemeRequest>, CliError> {
    let k = cfg.secondary.len();
    cfg.scheme
        .to_vec()
        .iter()
        .map(|s| {
            Ok(SchemeRequest {
                label: s.label(),
                spec: scheme_spec(s, k)?,
            })
        })
        .collect()
}

pub fn analysis_options(cfg: &AnalysisConfig) -> AnalysisOptions {
    AnalysisOptions {
        level: cfg.options.level,
        el: ElOptions {
            inner_tol: cfg.options.inner_tol,
            outer_tol: cfg.options.outer_tol,
            ..ElOptions::default()
        },
    }
}

/// Loads the data and runs the pipeline.
pub fn estimate(cfg: &AnalysisConfig) -> Result<(Loaded, AnalysisResult), CliError> {
    let loaded = load_datasets(cfg)?;
    let requests = scheme_requests(cfg)?;
    let result = analyze(
        &loaded.main,
        &loaded.secondaries,
        &loaded.specs,
        &requests,
        &analysis_options(cfg),
    )?;
    for s in &result.schemes {
        info!("scheme {}: omega = {:?}", s.label, s.omega);
    }
    Ok((loaded, result))
}

/// Runs `estimate` and writes the report; returns the rows written.
pub fn cmd_estimate(cfg: &AnalysisConfig, out: Option<&Path>) -> Result<Vec<ReportRow>, CliError> {
    let (loaded, result) = estimate(cfg)?;
    let rows = report_rows(&result, &loaded.coefficient_names);
    let path = out.map(Path::to_path_buf).or_else(|| cfg.output.path.clone());
    let format = match &path {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => OutputFormat::Csv,
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => OutputFormat::Json,
        _ => cfg.output.format,
    };
    let text = match format {
        OutputFormat::Json => report_json(&rows)?,
        OutputFormat::Csv => report_csv(&rows)?,
    };
    match path {
        Some(p) => write(&p, &text)?,
        None => print!("{text}"),
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
pub struct CellRecord {
    pub name: String,
    pub n: usize,
    pub rho: f64,
    pub seed: u64,
    pub reps: usize,
    pub replicates: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub wall_time_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub threads: usize,
    pub cells: Vec<CellRecord>,
    pub wall_time_seconds: f64,
}

impl Manifest {
    /// True when every cell ran and kept its failure fraction within bounds.
    pub fn succeeded(&self) -> bool {
        self.cells.iter().all(|c| {
            c.error.is_none() && c.failures as f64 <= MAX_FAILURE_FRACTION * c.reps as f64
        })
    }
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs every cell, writing `<cell>.csv`, `<cell>.json` and `manifest.json` to `out`.
pub fn cmd_simulate(cfg: &SimulateConfig, threads: usize, out: &Path) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let start = Instant::now();
    let mut cells = Vec::new();
    for cell in cfg.cells() {
        let c = &cell.config;
        if c.reps == 1 {
            warn!("{}: a single replicate has no Monte Carlo spread; MCSD and ERE are omitted", cell.name);
        }
        let t = Instant::now();
        let outcome = monte_carlo_with_threads(c, threads);
        let elapsed = t.elapsed().as_secs_f64();
        let mut record = CellRecord {
            name: cell.name.clone(),
            n: c.n,
            rho: c.rho,
            seed: c.seed,
            reps: c.reps,
            replicates: 0,
            failures: 0,
            failure_messages: Vec::new(),
            wall_time_seconds: elapsed,
            error: None,
            table: None,
        };
        match outcome {
            Ok(summary) => {
                write_cell(out, &cell.name, &summary)?;
                record.replicates = summary.replicates;
                record.failures = summary.failures;
                record.failure_messages = summary.failure_messages;
                record.table = Some(format!("{}.csv", cell.name));
            }
            Err(e) => {
                if let minbo::Error::TooManyFailures { failed, .. } = e {
                    record.failures = failed;
                }
                warn!("{}: {e}", cell.name);
                record.error = Some(e.to_string());
            }
        }
        cells.push(record);
    }
    let manifest = Manifest {
        threads,
        cells,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let text = to_json(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    write(&out.join("manifest.json"), &text)?;
    Ok(manifest)
}

fn write_cell(out: &Path, name: &str, summary: &MonteCarloSummary) -> Result<(), CliError> {
    write(&out.join(format!("{name}.csv")), &table_csv(summary))?;
    let json = to_json(summary).map_err(|e| CliError::Config(e.to_string()))?;
    write(&out.join(format!("{name}.json")), &json)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Dry run: checks the schema and, for analyses, the data and working models.
pub fn cmd_validate(cfg: &Config) -> Result<Vec<String>, CliError> {
    let mut lines = Vec::new();
    match cfg {
        Config::Simulate(s) => {
            for cell in s.cells() {
                cell.config.validate()?;
                lines.push(format!(
                    "cell {}: n = {}, rho = {}, reps = {}, {} estimators",
                    cell.name,
                    cell.config.n,
                    cell.config.rho,
                    cell.config.reps,
                    cell.config.estimators.len()
                ));
            }
        }
        Config::Analysis(a) => {
            let loaded = load_datasets(a)?;
            lines.push(format!(
                "main: {} subjects, {} coefficients",
                loaded.main.n(),
                loaded.main.p()
            ));
            for (k, (data, spec)) in loaded.secondaries.iter().zip(&loaded.specs).enumerate() {
                let model = WorkingModel::new(data, spec)?;
                lines.push(format!(
                    "secondary {}: {} of {} subjects observed, dim h = {}, dim theta = {}",
                    k + 1,
                    data.n_observed(),
                    data.n(),
                    model.d(),
                    model.r()
                ));
            }
            for req in scheme_requests(a)? {
                lines.push(format!(
                    "scheme {}: {}x{} omega, {} weights",
                    req.label,
                    req.spec.k_prime(),
                    req.spec.k(),
                    format!("{:?}", req.spec.weight_mode).to_lowercase()
                ));
            }
        }
    }
    Ok(lines)
}

/// Output directory for `simulate`: the flag, then the config, then `./minbo-out`.
pub fn simulate_out_dir(cfg: &SimulateConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output.path.clone())
        .unwrap_or_else(|| PathBuf::from("minbo-out"))
}
