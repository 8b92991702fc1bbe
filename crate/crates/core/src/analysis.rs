//! End-to-end estimation: MLE, per-dataset EL fits, and every requested scheme.

use serde::{Deserialize, Serialize};

use crate::el::{fit_working_model, ElFit, ElOptions};
use crate::error::{Error, Result};
use crate::estimator::{fit_unweighted, fit_weighted, BetaSolution};
use crate::model::{MainDataset, SecondaryDataset, WorkingModel, WorkingModelSpec};
use crate::numerics::Matrix;
use crate::schemes::{integrate_scores, SchemeSpec};
use crate::variance::{
    scheme_variance, summarize, EstimateReport, SecondaryMoments, VarianceComponents,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeRequest {
    pub label: String,
    pub spec: SchemeSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub level: f64,
    pub el: ElOptions,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            el: ElOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchemeResult {
    pub label: String,
    /// Weights actually used, after any IIB resolution.
    pub omega: Matrix,
    pub solution: BetaSolution,
    pub report: EstimateReport,
}

#[derive(Clone, Debug)]
pub struct AnalysisResult {
    pub n: usize,
    pub mle: EstimateReport,
    pub schemes: Vec<SchemeResult>,
    /// EL fits, `None` for datasets no scheme draws on.
    pub el_fits: Vec<Option<ElFit>>,
}

/// Runs the full pipeline on in-memory data.
pub fn analyze(
    main: &MainDataset,
    secondaries: &[SecondaryDataset],
    specs: &[WorkingModelSpec],
    schemes: &[SchemeRequest],
    opts: &AnalysisOptions,
) -> Result<AnalysisResult> {
    let k = secondaries.len();
    if specs.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: specs.len(),
        });
    }
    let n = main.n();
    for (idx, s) in secondaries.iter().enumerate() {
        if s.n() != n {
            return Err(Error::InvalidData(format!(
                "secondary dataset {idx} has {} subjects, main has {n}",
                s.n()
            )));
        }
    }
    for req in schemes {
        if req.spec.k() != k {
            return Err(Error::InvalidWeights(format!(
                "scheme {} has {} columns for {k} datasets",
                req.label,
                req.spec.k()
            )));
        }
    }

    let mle = fit_unweighted(main)?;
    let mut used = vec![false; k];
    for req in schemes {
        for d in req.spec.datasets_used() {
            used[d] = true;
        }
    }
    let models = secondaries
        .iter()
        .zip(specs)
        .map(|(data, spec)| WorkingModel::new(data, spec))
        .collect::<Result<Vec<_>>>()?;
    let el_fits = models
        .iter()
        .zip(&used)
        .map(|(m, &u)| u.then(|| fit_working_model(m, &opts.el)).transpose())
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<Option<(&WorkingModel, &ElFit)>> = models
        .iter()
        .zip(&el_fits)
        .map(|(m, f)| f.as_ref().map(|f| (m, f)))
        .collect();
    let dims: Vec<usize> = models.iter().map(WorkingModel::d).collect();
    let moments = SecondaryMoments::new(&pairs, &dims, n)?;

    let comp_mle = VarianceComponents::new(main, &mle.beta_hat, &moments)?;
    let v_ref = comp_mle.reference_variance()?;
    let mle_report = summarize(&mle.beta_hat, &v_ref, n, Some(&v_ref), opts.level)?;

    let uniform = vec![1.0 / n as f64; n];
    let weights: Vec<Vec<f64>> = el_fits
        .iter()
        .map(|f| f.as_ref().map_or_else(|| uniform.clone(), |f| f.weights.clone()))
        .collect();
    let mut results = Vec::with_capacity(schemes.len());
    for req in schemes {
        let spec = req.spec.resolve(&comp_mle)?;
        let score = integrate_scores(&spec, &weights)?;
        let sol = fit_weighted(main, &score.p_star, &mle.beta_hat)?;
        let comp = VarianceComponents::new(main, &sol.beta_hat, &moments)?;
        let v = scheme_variance(&comp, &spec)?;
        let report = summarize(&sol.beta_hat, &v, n, Some(&v_ref), opts.level)?;
        results.push(SchemeResult {
            label: req.label.clone(),
            omega: spec.omega().clone(),
            solution: sol,
            report,
        });
    }
    Ok(AnalysisResult {
        n,
        mle: mle_report,
        schemes: results,
        el_fits,
    })
}
