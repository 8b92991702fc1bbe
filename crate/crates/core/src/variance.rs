//! Plug-in sandwich variances for the integrated estimators.

use serde::{Deserialize, Serialize};

use crate::el::ElFit;
use crate::error::{Error, Result};
use crate::model::{main_score, main_score_jacobian, MainDataset, WorkingModel};
use crate::numerics::{normal_cdf, normal_quantile, Matrix};
use crate::schemes::SchemeSpec;

/// Secondary-side moments that do not depend on `β`.
#[derive(Clone, Debug)]
pub struct SecondaryMoments {
    /// `H̃_k`, rows `R_ki h_k(D_ki; θ̂_k)`; `None` for datasets left unfitted.
    pub h_tilde: Vec<Option<Matrix>>,
    pub s: Vec<Matrix>,
    pub cross: Vec<Vec<Matrix>>,
}

impl SecondaryMoments {
    /// `fits[k]` is `None` for datasets no scheme uses; `dims[k]` is `dim h_k`.
    pub fn new(fits: &[Option<(&WorkingModel, &ElFit)>], dims: &[usize], n: usize) -> Result<Self> {
        if fits.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                got: fits.len(),
            });
        }
        let h_tilde: Vec<Option<Matrix>> = fits
            .iter()
            .map(|f| f.map(|(model, fit)| model.constraints(&fit.theta_hat)))
            .collect();
        let s = fits
            .iter()
            .zip(dims)
            .map(|(f, &d)| f.map_or_else(|| Matrix::zeros(d, d), |(_, fit)| fit.s.clone()))
            .collect();
        let k = fits.len();
        let mut cross = vec![Vec::with_capacity(k); k];
        for a in 0..k {
            for b in 0..k {
                let m = match (&h_tilde[a], &h_tilde[b]) {
                    (Some(ha), Some(hb)) => ha.tr_matmul(hb)?.scale(1.0 / n as f64),
                    _ => Matrix::zeros(dims[a], dims[b]),
                };
                cross[a].push(m);
            }
        }
        Ok(Self { h_tilde, s, cross })
    }
}

/// `Γ̂, Σ̂, Λ̂_k, Ŝ_k` and the cross moments `Ŝ_{h_k h_k′}` at one `β̂`.
#[derive(Clone, Debug)]
pub struct VarianceComponents {
    pub gamma: Matrix,
    pub sigma: Matrix,
    pub lambda: Vec<Matrix>,
    pub s: Vec<Matrix>,
    pub cross: Vec<Vec<Matrix>>,
}

impl VarianceComponents {
    pub fn new(data: &MainDataset, beta: &[f64], secondary: &SecondaryMoments) -> Result<Self> {
        let n = data.n() as f64;
        let g = main_score(data, beta);
        let gamma = main_score_jacobian(data, beta);
        let sigma = g.tr_matmul(&g)?.scale(1.0 / n).symmetrize();
        let lambda = secondary
            .h_tilde
            .iter()
            .zip(&secondary.s)
            .map(|(h, s)| match h {
                Some(h) => Ok(g.tr_matmul(h)?.scale(1.0 / n)),
                None => Ok(Matrix::zeros(data.p(), s.rows())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gamma,
            sigma,
            lambda,
            s: secondary.s.clone(),
            cross: secondary.cross.clone(),
        })
    }

    pub fn k(&self) -> usize {
        self.s.len()
    }

    /// `Γ̂⁻¹` via the Cholesky factor of `−Γ̂`.
    pub fn gamma_inverse(&self) -> Result<Matrix> {
        Ok(self.gamma.scale(-1.0).inverse_spd()?.scale(-1.0))
    }

    /// `Ṽ = Γ⁻¹ Σ Γ⁻ᵀ`, the variance of the unweighted estimator.
    pub fn reference_variance(&self) -> Result<Matrix> {
        sandwich(&self.gamma_inverse()?, &self.sigma)
    }
}

fn sandwich(gi: &Matrix, middle: &Matrix) -> Result<Matrix> {
    Ok(gi.matmul(middle)?.matmul(&gi.transpose())?.symmetrize())
}

/// Asymptotic covariance of `√n(β̌ − β₀)` for an omnibus scheme.
pub fn scheme_variance(comp: &VarianceComponents, spec: &SchemeSpec) -> Result<Matrix> {
    if spec.k() != comp.k() {
        return Err(Error::LengthMismatch {
            expected: comp.k(),
            got: spec.k(),
        });
    }
    let wt = spec.omega_tilde();
    let mut middle = comp.sigma.clone();
    // Λ_m S_m, reused by both sums.
    let ls: Vec<Matrix> = (0..comp.k())
        .map(|m| comp.lambda[m].matmul(&comp.s[m]))
        .collect::<Result<_>>()?;
    for m in 0..comp.k() {
        if wt[m] == 0.0 {
            continue;
        }
        let own = ls[m].matmul(&comp.lambda[m].transpose())?;
        middle.add_scaled(-(2.0 * wt[m] - wt[m] * wt[m]), &own);
        for m2 in (0..comp.k()).filter(|&m2| m2 != m && wt[m2] != 0.0) {
            let term = ls[m]
                .matmul(&comp.cross[m][m2])?
                .matmul(&ls[m2].transpose())?;
            middle.add_scaled(wt[m] * wt[m2], &term);
        }
    }
    sandwich(&comp.gamma_inverse()?, &middle)
}

/// Coefficient table for one estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub beta_hat: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub ase: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub ere: Option<Vec<f64>>,
    pub p_value: Vec<f64>,
    pub level: f64,
}

/// Standard errors, Wald intervals, two-sided Wald p-values and EREs.
pub fn summarize(
    beta_hat: &[f64],
    v: &Matrix,
    n: usize,
    reference_v: Option<&Matrix>,
    level: f64,
) -> Result<EstimateReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::OutOfRange(format!("confidence level {level}")));
    }
    let p = beta_hat.len();
    if v.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "variance is {}x{} for {p} coefficients",
            v.rows(),
            v.cols()
        )));
    }
    let zq = normal_quantile(0.5 + 0.5 * level)?;
    let mut ase = Vec::with_capacity(p);
    for j in 0..p {
        let vj = v[(j, j)];
        if !(vj > 0.0 && vj.is_finite()) {
            return Err(Error::NonPositiveVariance { index: j });
        }
        ase.push((vj / n as f64).sqrt());
    }
    let ci_lower = beta_hat.iter().zip(&ase).map(|(b, s)| b - zq * s).collect();
    let ci_upper = beta_hat.iter().zip(&ase).map(|(b, s)| b + zq * s).collect();
    let p_value = beta_hat
        .iter()
        .zip(&ase)
        .map(|(b, s)| 2.0 * normal_cdf(-(b / s).abs()))
        .collect();
    let ere = reference_v.map(|r| (0..p).map(|j| r[(j, j)] / v[(j, j)]).collect());
    Ok(EstimateReport {
        beta_hat: beta_hat.to_vec(),
        v: (0..p).map(|i| v.row(i).to_vec()).collect(),
        ase,
        ci_lower,
        ci_upper,
        ere,
        p_value,
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_identity_gives_unit_ase() {
        let n = 250;
        let v = Matrix::identity(3).scale(n as f64);
        let r = summarize(&[0.1, 0.2, 0.3], &v, n, Some(&v), 0.95).unwrap();
        assert!(r.ase.iter().all(|&s| (s - 1.0).abs() < 1e-15));
        assert_eq!(r.ere.unwrap(), vec![1.0; 3]);
        for j in 0..3 {
            let width = r.ci_upper[j] - r.ci_lower[j];
            assert!((width - 2.0 * 1.959963984540054).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_variance_rejected() {
        let v = Matrix::from_diag(&[1.0, 0.0]);
        assert_eq!(
            summarize(&[0.0, 0.0], &v, 10, None, 0.95).unwrap_err(),
            Error::NonPositiveVariance { index: 1 }
        );
    }

    #[test]
    fn wald_p_value() {
        let r = summarize(&[1.959963984540054], &Matrix::from_diag(&[1.0]), 1, None, 0.95).unwrap();
        assert!((r.p_value[0] - 0.05).abs() < 1e-12);
    }
}
