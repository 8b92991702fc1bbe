//! Newton solvers for the unweighted and re-weighted logistic score equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MainDataset;
use crate::numerics::{axpy, dot, expit, max_abs, Matrix};

pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOL: f64 = 1e-8;
pub const SEPARATION_LIMIT: f64 = 30.0;
const MAX_HALVINGS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSolution {
    pub beta_hat: Vec<f64>,
    /// `max |Σᵢ p*ᵢ g(D₀ᵢ; β̂)|`.
    pub score_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Logistic maximum likelihood.
pub fn fit_unweighted(data: &MainDataset) -> Result<BetaSolution> {
    newton(data, &vec![1.0; data.n()], vec![0.0; data.p()])
}

/// Solves `Σᵢ p*ᵢ X₀ᵢ (yᵢ − expit(X₀ᵢᵀβ)) = 0` starting from `beta0`.
pub fn fit_weighted(data: &MainDataset, p_star: &[f64], beta0: &[f64]) -> Result<BetaSolution> {
    if p_star.len() != data.n() {
        return Err(Error::LengthMismatch {
            expected: data.n(),
            got: p_star.len(),
        });
    }
    if beta0.len() != data.p() {
        return Err(Error::LengthMismatch {
            expected: data.p(),
            got: beta0.len(),
        });
    }
    if p_star.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::OutOfRange("integrated scores must be positive and finite".into()));
    }
    newton(data, p_star, beta0.to_vec())
}

fn score_and_information(data: &MainDataset, w: &[f64], beta: &[f64]) -> (Vec<f64>, Matrix) {
    let p = data.p();
    let mut u = vec![0.0; p];
    let mut info = Matrix::zeros(p, p);
    for i in 0..data.n() {
        let xi = data.x().row(i);
        let mu = expit(dot(xi, beta));
        axpy(w[i] * (data.y()[i] - mu), xi, &mut u);
        info.add_outer(w[i] * mu * (1.0 - mu), xi, xi);
    }
    (u, info)
}

fn score(data: &MainDataset, w: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; data.p()];
    for i in 0..data.n() {
        let xi = data.x().row(i);
        axpy(w[i] * (data.y()[i] - expit(dot(xi, beta))), xi, &mut u);
    }
    u
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn newton(data: &MainDataset, w: &[f64], beta0: Vec<f64>) -> Result<BetaSolution> {
    let tol = SCORE_TOL * w.iter().sum::<f64>() / w.len() as f64;
    let mut beta = beta0;
    for it in 0..=MAX_ITERATIONS {
        let (u, info) = score_and_information(data, w, &beta);
        let resid = max_abs(&u);
        let step = info
            .cholesky()
            .map_err(|_| Error::Separation {
                limit: SEPARATION_LIMIT,
            })?
            .solve_vec(&u);
        if resid <= tol && max_abs(&step) <= 1e-6 * (1.0 + max_abs(&beta)) {
            return Ok(BetaSolution {
                beta_hat: beta,
                score_residual: resid,
                iterations: it,
                converged: true,
            });
        }
        if it == MAX_ITERATIONS {
            return Err(Error::NotConverged {
                what: "logistic Newton",
                iterations: it,
                residual: resid,
            });
        }
        let base = norm2(&u);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            if norm2(&score(data, w, &cand)) < base {
                beta = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No representable decrease left.
            if resid <= tol {
                return Ok(BetaSolution {
                    beta_hat: beta,
                    score_residual: resid,
                    iterations: it,
                    converged: true,
                });
            }
            return Err(Error::NotConverged {
                what: "logistic Newton",
                iterations: it,
                residual: resid,
            });
        }
        if max_abs(&beta) > SEPARATION_LIMIT {
            return Err(Error::Separation {
                limit: SEPARATION_LIMIT,
            });
        }
    }
    unreachable!("loop returns on its final iteration")
}
