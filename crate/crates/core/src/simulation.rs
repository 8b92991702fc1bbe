//! Synthetic scenarios and the Monte Carlo driver.
//!
//! Three secondary datasets share subjects with a binary main outcome: two
//! longitudinal continuous outcomes over four visits and one cross-sectional
//! binary outcome. Association is induced through shared normal residuals.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, AnalysisOptions, SchemeRequest};
use crate::el::ElFit;
use crate::error::{Error, Result};
use crate::model::{
    CrossSectionalData, Link, LongitudinalData, MainDataset, SecondaryDataset, VarianceMode,
    WorkingModelSpec,
};
use crate::numerics::{dot, expit, normal_quantile, Matrix, MvnSampler, RngStream};
use crate::schemes::{build_scheme, SchemeKind, SchemeSpec, WeightMode};

pub const VISITS: usize = 4;
pub const THETA1: [f64; 4] = [-1.0, 2.0, 1.0, 1.0];
pub const THETA2: [f64; 4] = [1.0, -2.0, -1.0, -1.0];
pub const THETA3: [f64; 2] = [-1.0, 1.0];
pub const BETA0: [f64; 4] = [1.0, -0.5, -1.0, 0.5];
pub const DEFAULT_ETA: [f64; 3] = [0.6, 0.7, 0.5];
pub const DEFAULT_ALPHA: [f64; 4] = [0.5, 1.0, 1.0, 1.0];
/// Exchangeable correlation of the time-varying covariates.
pub const COVARIATE_CORRELATION: f64 = 0.3;
/// Eigenvalue floor when the residual covariance has to be repaired.
pub const PSD_FLOOR: f64 = 1e-9;
/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Latent normal correlation giving binary correlation 0.3 at p = 1/2.
pub fn copula_latent_correlation() -> f64 {
    (0.5 * std::f64::consts::PI * COVARIATE_CORRELATION).sin()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Missingness {
    Full,
    Mcar { eta: [f64; 3] },
    Informative { alpha: Vec<f64> },
}

/// Which data-generating recipe to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[default]
    Standard,
    /// Main outcome drawn first and fed into every secondary outcome.
    HighCorrelation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorId {
    #[serde(rename = "single100")]
    Single100,
    #[serde(rename = "single010")]
    Single010,
    #[serde(rename = "single001")]
    Single001,
    #[serde(rename = "ave110")]
    Ave110,
    #[serde(rename = "agg110")]
    Agg110,
    #[serde(rename = "ave101")]
    Ave101,
    #[serde(rename = "agg101")]
    Agg101,
    #[serde(rename = "ave111")]
    Ave111,
    #[serde(rename = "agg111")]
    Agg111,
    #[serde(rename = "omn111")]
    Omn111,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 10] = [
        Self::Single100,
        Self::Single010,
        Self::Single001,
        Self::Ave110,
        Self::Agg110,
        Self::Ave101,
        Self::Agg101,
        Self::Ave111,
        Self::Agg111,
        Self::Omn111,
    ];

    /// The eight estimators compared on correctly specified data.
    pub const EIGHT: [EstimatorId; 8] = [
        Self::Single100,
        Self::Single010,
        Self::Single001,
        Self::Ave110,
        Self::Agg110,
        Self::Ave111,
        Self::Agg111,
        Self::Omn111,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Single100 => "single100",
            Self::Single010 => "single010",
            Self::Single001 => "single001",
            Self::Ave110 => "ave110",
            Self::Agg110 => "agg110",
            Self::Ave101 => "ave101",
            Self::Agg101 => "agg101",
            Self::Ave111 => "ave111",
            Self::Agg111 => "agg111",
            Self::Omn111 => "omn111",
        }
    }

    /// Weight template over the three datasets; averaging rows use IIB.
    pub fn scheme(self) -> SchemeSpec {
        let h = 0.5;
        let t = 1.0 / 3.0;
        let (rows, mode): (Vec<Vec<f64>>, WeightMode) = match self {
            Self::Single100 => (vec![vec![1.0, 0.0, 0.0]], WeightMode::Fixed),
            Self::Single010 => (vec![vec![0.0, 1.0, 0.0]], WeightMode::Fixed),
            Self::Single001 => (vec![vec![0.0, 0.0, 1.0]], WeightMode::Fixed),
            Self::Ave110 => (vec![vec![h, h, 0.0]], WeightMode::Iib),
            Self::Agg110 => (vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], WeightMode::Fixed),
            Self::Ave101 => (vec![vec![h, 0.0, h]], WeightMode::Iib),
            Self::Agg101 => (vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]], WeightMode::Fixed),
            Self::Ave111 => (vec![vec![t, t, 1.0 - 2.0 * t]], WeightMode::Iib),
            Self::Agg111 => return build_scheme(SchemeKind::Aggregating, 3, WeightMode::Fixed)
                .expect("identity is valid"),
            Self::Omn111 => (vec![vec![h, 0.0, h], vec![0.0, 1.0, 0.0]], WeightMode::Iib),
        };
        let omega = Matrix::from_rows(&rows).expect("rectangular template");
        SchemeSpec::new(omega, mode).expect("valid template")
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.label() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown estimator {s}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub rho: f64,
    pub missingness: Missingness,
    pub misspecified: bool,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorId>,
    #[serde(default)]
    pub generator: Generator,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

impl SimulationConfig {
    /// Fully observed, correctly specified, eight estimators, 95% intervals.
    pub fn new(n: usize, rho: f64, reps: usize, seed: u64) -> Self {
        Self {
            n,
            rho,
            missingness: Missingness::Full,
            misspecified: false,
            reps,
            seed,
            estimators: EstimatorId::EIGHT.to_vec(),
            generator: Generator::Standard,
            level: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::OutOfRange(format!("n = {} is too small", self.n)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::OutOfRange(format!("rho = {} outside [0, 1)", self.rho)));
        }
        if self.reps == 0 {
            return Err(Error::OutOfRange("reps must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::OutOfRange(format!("level = {}", self.level)));
        }
        match &self.missingness {
            Missingness::Full => {}
            Missingness::Mcar { eta } => {
                if let Some(e) = eta.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
                    return Err(Error::OutOfRange(format!("eta = {e} outside (0, 1]")));
                }
            }
            Missingness::Informative { alpha } => {
                if alpha.len() != BETA0.len() {
                    return Err(Error::LengthMismatch {
                        expected: BETA0.len(),
                        got: alpha.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// One generated dataset with working-model specifications.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub main: MainDataset,
    pub secondaries: Vec<SecondaryDataset>,
    pub specs: Vec<WorkingModelSpec>,
}

fn exchangeable(dim: usize, r: f64) -> Matrix {
    let mut m = Matrix::from_vec(dim, dim, vec![r; dim * dim]).expect("square");
    for i in 0..dim {
        m[(i, i)] = 1.0;
    }
    m
}

/// Nominal 8×8 residual covariance of the two longitudinal outcomes.
pub fn nominal_residual_covariance(rho: f64) -> Matrix {
    let mut v = Matrix::zeros(2 * VISITS, 2 * VISITS);
    for i in 0..2 * VISITS {
        for j in 0..2 * VISITS {
            v[(i, j)] = match (i < VISITS, j < VISITS) {
                _ if i == j => 1.0,
                (true, true) => 0.8,
                (false, false) => 0.5,
                _ => rho,
            };
        }
    }
    v
}

/// Residual covariance actually sampled: the nominal one, eigen-clipped if indefinite.
pub fn effective_residual_covariance(rho: f64) -> Matrix {
    let v = nominal_residual_covariance(rho);
    if v.min_eigenvalue() > PSD_FLOOR {
        v
    } else {
        v.clip_eigenvalues(PSD_FLOOR)
    }
}

/// Standard deviation of `ε₁₄ + ε₂₄` under the sampled covariance.
pub fn alpha_scale(cov: &Matrix) -> f64 {
    let (a, b) = (VISITS - 1, 2 * VISITS - 1);
    (cov[(a, a)] + cov[(b, b)] + 2.0 * cov[(a, b)]).sqrt()
}

/// One subject's covariates.
struct Covariates {
    binary: Vec<f64>,
    normal: Vec<f64>,
    constant: f64,
}

/// Samplers shared by every subject of a configuration.
pub struct ScenarioGenerator {
    config: SimulationConfig,
    binary_latent: MvnSampler,
    normal_cov: MvnSampler,
    residual: MvnSampler,
    alpha: f64,
}

impl ScenarioGenerator {
    pub fn new(config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        let cov = effective_residual_covariance(config.rho);
        Ok(Self {
            config: config.clone(),
            binary_latent: MvnSampler::new(
                vec![0.0; VISITS],
                &exchangeable(VISITS, copula_latent_correlation()),
            )?,
            normal_cov: MvnSampler::new(
                vec![0.0; VISITS],
                &exchangeable(VISITS, COVARIATE_CORRELATION),
            )?,
            alpha: alpha_scale(&cov),
            residual: MvnSampler::new(vec![0.0; 2 * VISITS], &cov)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn covariates(&self, rng: &mut RngStream) -> Covariates {
        let binary = self
            .binary_latent
            .sample(rng)
            .into_iter()
            .map(|u| if u > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let normal = self.normal_cov.sample(rng);
        let constant = if rng.bernoulli(0.5) { 1.0 } else { 0.0 };
        Covariates {
            binary,
            normal,
            constant,
        }
    }

    pub fn generate(&self, rng: &mut RngStream) -> Result<Scenario> {
        let cfg = &self.config;
        let n = cfg.n;
        let mis = cfg.misspecified;
        let r12 = if mis { 3 } else { 4 };
        let mut y0 = Vec::with_capacity(n);
        let mut x0 = Matrix::zeros(n, 4);
        let mut long_y = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut long_x = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut y3 = Vec::with_capacity(n);
        let (q3, r3) = if mis { (1, 2) } else { (2, 2) };
        let mut x3 = Matrix::zeros(n, r3);
        let mut z3 = Matrix::zeros(n, q3);
        let mut observed = [vec![true; n], vec![true; n], vec![true; n]];

        for i in 0..n {
            // Both longitudinal datasets share one covariate draw.
            let cv = self.covariates(rng);
            let (b, c, t) = (&cv.binary, &cv.normal, cv.constant);
            let eps = self.residual.sample(rng);

            let x0i = [1.0, b[0], c[0], t];
            x0.row_mut(i).copy_from_slice(&x0i);
            let p0 = expit(dot(&x0i, &BETA0));
            let p3 = expit(THETA3[0] + THETA3[1] * b[0]);
            let cut0 = normal_quantile(1.0 - p0)?;
            let cut3 = normal_quantile(1.0 - p3)?;

            let (main_y, shift, sec_eps, y3_latent) = match cfg.generator {
                Generator::Standard => {
                    let xbar = (eps[VISITS - 1] + eps[2 * VISITS - 1]) / self.alpha;
                    let y = if xbar >= cut0 { 1.0 } else { 0.0 };
                    (y, 0.0, 1.0, eps[0])
                }
                Generator::HighCorrelation => {
                    let z0 = rng.standard_normal();
                    let y = if z0 >= cut0 { 1.0 } else { 0.0 };
                    (y, y - p0, 0.4, -z0)
                }
            };
            y0.push(main_y);

            for (k, theta) in [THETA1, THETA2].iter().enumerate() {
                let mut design = Matrix::zeros(VISITS, r12);
                let mut y = Vec::with_capacity(VISITS);
                for v in 0..VISITS {
                    let full = [1.0, cv.binary[v], cv.normal[v], cv.constant];
                    y.push(dot(&full, theta) + shift + sec_eps * eps[k * VISITS + v]);
                    design.row_mut(v).copy_from_slice(&full[..r12]);
                }
                long_y[k].push(y);
                long_x[k].push(design);
            }
            y3.push(if y3_latent >= cut3 { 1.0 } else { 0.0 });
            if mis {
                x3.row_mut(i).copy_from_slice(&[1.0, b[1]]);
                z3[(i, 0)] = t;
            } else {
                x3.row_mut(i).copy_from_slice(&[1.0, b[0]]);
                z3.row_mut(i).copy_from_slice(&[c[0], t]);
            }

            match &cfg.missingness {
                Missingness::Full => {}
                Missingness::Mcar { eta } => {
                    for k in 0..3 {
                        observed[k][i] = rng.bernoulli(eta[k]);
                    }
                }
                Missingness::Informative { alpha } => {
                    let p = expit(dot(&x0i, alpha));
                    for obs in observed.iter_mut() {
                        obs[i] = rng.bernoulli(p);
                    }
                }
            }
        }

        let [obs1, obs2, obs3] = observed;
        let [ly1, ly2] = long_y;
        let [lx1, lx2] = long_x;
        let secondaries = vec![
            SecondaryDataset::Longitudinal(LongitudinalData::new(ly1, lx1, obs1)?),
            SecondaryDataset::Longitudinal(LongitudinalData::new(ly2, lx2, obs2)?),
            SecondaryDataset::CrossSectional(CrossSectionalData::new(y3, x3, z3, obs3)?),
        ];
        let specs = vec![
            WorkingModelSpec::longitudinal(VISITS, r12, VarianceMode::PreliminaryResidual),
            WorkingModelSpec::longitudinal(VISITS, r12, VarianceMode::PreliminaryResidual),
            WorkingModelSpec::cross_sectional(Link::Logit, r3),
        ];
        Ok(Scenario {
            main: MainDataset::new(y0, x0)?,
            secondaries,
            specs,
        })
    }
}

pub fn gen_scenario(config: &SimulationConfig, rng: &mut RngStream) -> Result<Scenario> {
    ScenarioGenerator::new(config)?.generate(rng)
}

/// Point estimate and standard errors of one estimator in one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub beta: Vec<f64>,
    pub ase: Vec<f64>,
}

/// Worst-case EL fit invariants over a set of fits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElCheck {
    pub fits: usize,
    pub min_weight: f64,
    /// `max |Σ p̂ᵢ − 1|`.
    pub max_normalization_error: f64,
    pub max_constraint_residual: f64,
}

impl Default for ElCheck {
    fn default() -> Self {
        Self {
            fits: 0,
            min_weight: f64::INFINITY,
            max_normalization_error: 0.0,
            max_constraint_residual: 0.0,
        }
    }
}

impl ElCheck {
    pub fn from_fits<'a>(fits: impl IntoIterator<Item = &'a ElFit>) -> Self {
        let mut c = Self::default();
        for f in fits {
            c.fits += 1;
            c.min_weight = f.weights.iter().copied().fold(c.min_weight, f64::min);
            let total: f64 = f.weights.iter().sum();
            c.max_normalization_error = c.max_normalization_error.max((total - 1.0).abs());
            c.max_constraint_residual = c.max_constraint_residual.max(f.constraint_residual);
        }
        c
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            fits: self.fits + other.fits,
            min_weight: self.min_weight.min(other.min_weight),
            max_normalization_error: self.max_normalization_error.max(other.max_normalization_error),
            max_constraint_residual: self.max_constraint_residual.max(other.max_constraint_residual),
        }
    }
}

/// Output of one replicate: the MLE followed by the configured estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: u64,
    pub mle: Estimate,
    pub estimates: Vec<Estimate>,
    pub el_check: ElCheck,
}

pub fn scheme_requests(estimators: &[EstimatorId]) -> Vec<SchemeRequest> {
    estimators
        .iter()
        .map(|e| SchemeRequest {
            label: e.label().to_string(),
            spec: e.scheme(),
        })
        .collect()
}

fn run_with(gen: &ScenarioGenerator, cfg: &SimulationConfig, index: u64) -> Result<ReplicateResult> {
    let mut rng = RngStream::new(cfg.seed, index);
    let sc = gen.generate(&mut rng)?;
    let opts = AnalysisOptions {
        level: cfg.level,
        ..AnalysisOptions::default()
    };
    let res = analyze(
        &sc.main,
        &sc.secondaries,
        &sc.specs,
        &scheme_requests(&cfg.estimators),
        &opts,
    )?;
    Ok(ReplicateResult {
        index,
        el_check: ElCheck::from_fits(res.el_fits.iter().flatten()),
        mle: Estimate {
            beta: res.mle.beta_hat,
            ase: res.mle.ase,
        },
        estimates: res
            .schemes
            .into_iter()
            .map(|s| Estimate {
                beta: s.report.beta_hat,
                ase: s.report.ase,
            })
            .collect(),
    })
}

/// One generate-fit-summarise pass, deterministic in `(seed, index)`.
pub fn run_replicate(config: &SimulationConfig, index: u64) -> Result<ReplicateResult> {
    run_with(&ScenarioGenerator::new(config)?, config, index)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    /// Zero-based coefficient index (0 is the intercept).
    pub coefficient: usize,
    pub bias: f64,
    /// Absent with a single usable replicate.
    pub mcsd: Option<f64>,
    pub mean_ase: f64,
    /// Percentage of Wald intervals covering the truth.
    pub cp: f64,
    pub ere: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub rows: Vec<SummaryRow>,
    pub replicates: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    /// EL invariants over every fit in the successful replicates.
    pub el_check: ElCheck,
}

impl MonteCarloSummary {
    pub fn row(&self, estimator: &str, coefficient: usize) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.coefficient == coefficient)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Bias, MCSD, mean ASE, coverage and ERE over successful replicates.
pub fn summarize_replicates(
    results: &[ReplicateResult],
    labels: &[String],
    truth: &[f64],
    level: f64,
) -> Result<Vec<SummaryRow>> {
    if results.is_empty() {
        return Err(Error::TooManyFailures { failed: 0, total: 0 });
    }
    let zq = normal_quantile(0.5 + 0.5 * level)?;
    let reps = results.len();
    let p = truth.len();
    let mut rows = Vec::new();
    let columns = std::iter::once("MLE".to_string()).chain(labels.iter().cloned());
    for (col, label) in columns.enumerate() {
        let pick = |r: &ReplicateResult| -> Estimate {
            if col == 0 {
                r.mle.clone()
            } else {
                r.estimates[col - 1].clone()
            }
        };
        let est: Vec<Estimate> = results.iter().map(pick).collect();
        for j in 0..p {
            let b: Vec<f64> = est.iter().map(|e| e.beta[j]).collect();
            let a: Vec<f64> = est.iter().map(|e| e.ase[j]).collect();
            let covered = est
                .iter()
                .filter(|e| (e.beta[j] - truth[j]).abs() <= zq * e.ase[j])
                .count();
            let (mcsd, ere) = if reps >= 2 {
                let var = sample_variance(&b);
                if !(var > 0.0) {
                    return Err(Error::NonPositiveVariance { index: j });
                }
                let mle: Vec<f64> = results.iter().map(|r| r.mle.beta[j]).collect();
                (Some(var.sqrt()), Some(sample_variance(&mle) / var))
            } else {
                (None, None)
            };
            rows.push(SummaryRow {
                estimator: label.clone(),
                coefficient: j,
                bias: mean(&b) - truth[j],
                mcsd,
                mean_ase: mean(&a),
                cp: 100.0 * covered as f64 / reps as f64,
                ere,
            });
        }
    }
    Ok(rows)
}

/// Runs every replicate on the current rayon pool and summarises.
pub fn monte_carlo(config: &SimulationConfig) -> Result<MonteCarloSummary> {
    let gen = ScenarioGenerator::new(config)?;
    let outcomes: Vec<Result<ReplicateResult>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|i| run_with(&gen, config, i))
        .collect();
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut messages = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => ok.push(r),
            Err(e) => messages.push(format!("replicate {i}: {e}")),
        }
    }
    let failed = messages.len();
    if failed as f64 > MAX_FAILURE_FRACTION * config.reps as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: config.reps,
        });
    }
    let labels: Vec<String> = config.estimators.iter().map(|e| e.label().to_string()).collect();
    let rows = summarize_replicates(&ok, &labels, &BETA0, config.level)?;
    let el_check = ok.iter().fold(ElCheck::default(), |c, r| c.merge(r.el_check));
    Ok(MonteCarloSummary {
        rows,
        el_check,
        replicates: ok.len(),
        failures: failed,
        failure_messages: messages,
    })
}

/// Like [`monte_carlo`] on a dedicated pool of `threads` workers.
pub fn monte_carlo_with_threads(config: &SimulationConfig, threads: usize) -> Result<MonteCarloSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    pool.install(|| monte_carlo(config))
}
