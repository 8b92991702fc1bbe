//! Averaging, aggregating and omnibus integration of per-dataset weights.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::variance::VarianceComponents;

const ROW_SUM_TOL: f64 = 1e-12;
const IIB_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Fixed,
    /// Row weights recomputed from the index of information borrowing.
    Iib,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SchemeKind {
    /// One row of equal weights.
    Averaging,
    /// Identity rows: the product of all weights.
    Aggregating,
    Custom(Matrix),
}

/// `K′×K` nonnegative row-stochastic array `ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpec {
    omega: Matrix,
    pub weight_mode: WeightMode,
}

impl SchemeSpec {
    pub fn new(omega: Matrix, weight_mode: WeightMode) -> Result<Self> {
        validate_omega(&omega)?;
        Ok(Self { omega, weight_mode })
    }

    pub fn omega(&self) -> &Matrix {
        &self.omega
    }

    /// Number of secondary datasets `K`.
    pub fn k(&self) -> usize {
        self.omega.cols()
    }

    pub fn k_prime(&self) -> usize {
        self.omega.rows()
    }

    /// Column sums `ω̃_m = Σ_{k′} ω_{k′m}`.
    pub fn omega_tilde(&self) -> Vec<f64> {
        (0..self.k())
            .map(|m| (0..self.k_prime()).map(|r| self.omega[(r, m)]).sum())
            .collect()
    }

    /// Datasets with a nonzero entry in row `row`.
    pub fn support(&self, row: usize) -> Vec<usize> {
        (0..self.k()).filter(|&k| self.omega[(row, k)] > 0.0).collect()
    }

    /// Datasets the scheme actually draws on.
    pub fn datasets_used(&self) -> Vec<usize> {
        (0..self.k())
            .filter(|&k| (0..self.k_prime()).any(|r| self.omega[(r, k)] > 0.0))
            .collect()
    }

    /// Replaces IIB rows by data-driven weights over each row's support.
    ///
    /// A row whose datasets all carry no information falls back to equal
    /// weights over its support.
    pub fn resolve(&self, comp: &VarianceComponents) -> Result<SchemeSpec> {
        if self.weight_mode == WeightMode::Fixed {
            return Ok(self.clone());
        }
        let mut omega = Matrix::zeros(self.k_prime(), self.k());
        for row in 0..self.k_prime() {
            let support = self.support(row);
            let w = match iib_weights(comp, &support) {
                Ok(w) => w,
                Err(Error::DegenerateIib) => {
                    warn!("index of information borrowing vanishes on row {row}; using equal weights");
                    vec![1.0 / support.len() as f64; support.len()]
                }
                Err(e) => return Err(e),
            };
            for (&k, wk) in support.iter().zip(w) {
                omega[(row, k)] = wk;
            }
        }
        SchemeSpec::new(omega, WeightMode::Fixed)
    }
}

fn validate_omega(omega: &Matrix) -> Result<()> {
    let (rows, k) = omega.shape();
    if rows == 0 || k == 0 {
        return Err(Error::InvalidWeights("omega must have at least one row and column".into()));
    }
    if rows > k {
        return Err(Error::InvalidWeights(format!(
            "omega has {rows} rows but only {k} datasets"
        )));
    }
    for r in 0..rows {
        let row = omega.row(r);
        if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidWeights(format!("row {r} has entry {v}")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidWeights(format!("row {r} sums to {sum}")));
        }
    }
    for k in 0..k {
        let hits = (0..rows).filter(|&r| omega[(r, k)] > 0.0).count();
        if hits > 1 {
            return Err(Error::InvalidWeights(format!(
                "dataset {k} appears in {hits} rows"
            )));
        }
    }
    Ok(())
}

pub fn build_scheme(kind: SchemeKind, k: usize, weight_mode: WeightMode) -> Result<SchemeSpec> {
    if k == 0 {
        return Err(Error::InvalidWeights("need at least one secondary dataset".into()));
    }
    let omega = match kind {
        SchemeKind::Averaging => Matrix::from_vec(1, k, vec![1.0 / k as f64; k])?,
        SchemeKind::Aggregating => Matrix::identity(k),
        SchemeKind::Custom(omega) => {
            if omega.cols() != k {
                return Err(Error::InvalidWeights(format!(
                    "omega has {} columns for {k} datasets",
                    omega.cols()
                )));
            }
            omega
        }
    };
    SchemeSpec::new(omega, weight_mode)
}

/// Integrated per-subject score on the `n p̂` scale.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegratedScore {
    pub p_star: Vec<f64>,
    pub scheme: SchemeSpec,
}

/// `p̌ᵢ = Π_{k′} Σ_k ω_{k′k} n p̂_{ki}`.
pub fn integrate_scores(spec: &SchemeSpec, weights: &[Vec<f64>]) -> Result<IntegratedScore> {
    if weights.len() != spec.k() {
        return Err(Error::LengthMismatch {
            expected: spec.k(),
            got: weights.len(),
        });
    }
    let n = weights[0].len();
    if let Some(w) = weights.iter().find(|w| w.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            got: w.len(),
        });
    }
    let nf = n as f64;
    let omega = spec.omega();
    let p_star = (0..n)
        .map(|i| {
            let mut prod = 1.0;
            for r in 0..spec.k_prime() {
                let mut s = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    s += omega[(r, k)] * (nf * w[i]);
                }
                prod *= s;
            }
            prod
        })
        .collect();
    Ok(IntegratedScore {
        p_star,
        scheme: spec.clone(),
    })
}

/// `IIB_k = Σ_j (Γ⁻¹ Λ_k S_k Λ_kᵀ Γ⁻ᵀ)_jj / Ṽ_jj`.
pub fn iib_index(comp: &VarianceComponents, k: usize) -> Result<f64> {
    let gi = comp.gamma_inverse()?;
    let v_ref = comp.reference_variance()?;
    let a = gi.matmul(&comp.lambda[k])?;
    let m = a.matmul(&comp.s[k])?.matmul(&a.transpose())?;
    let mut total = 0.0;
    for j in 0..m.rows() {
        let v = v_ref[(j, j)];
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance { index: j });
        }
        total += m[(j, j)] / v;
    }
    Ok(total)
}

/// Normalised IIB weights over `datasets`.
pub fn iib_weights(comp: &VarianceComponents, datasets: &[usize]) -> Result<Vec<f64>> {
    let idx = datasets
        .iter()
        .map(|&k| iib_index(comp, k).map(|v| v.max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    if idx.iter().all(|&v| v <= IIB_FLOOR) {
        return Err(Error::DegenerateIib);
    }
    let total: f64 = idx.iter().sum();
    Ok(idx.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_and_aggregating_shapes() {
        let a = build_scheme(SchemeKind::Averaging, 3, WeightMode::Fixed).unwrap();
        assert_eq!(a.omega().as_slice(), &[1.0 / 3.0; 3]);
        let g = build_scheme(SchemeKind::Aggregating, 3, WeightMode::Fixed).unwrap();
        assert_eq!(g.omega(), &Matrix::identity(3));
    }

    #[test]
    fn row_sum_checked() {
        let bad = Matrix::from_rows(&[vec![0.5, 0.6]]).unwrap();
        assert!(matches!(
            build_scheme(SchemeKind::Custom(bad), 2, WeightMode::Fixed),
            Err(Error::InvalidWeights(_))
        ));
        let neg = Matrix::from_rows(&[vec![1.5, -0.5]]).unwrap();
        assert!(SchemeSpec::new(neg, WeightMode::Fixed).is_err());
    }

    #[test]
    fn repeated_dataset_rejected() {
        let om = Matrix::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]).unwrap();
        assert!(matches!(
            SchemeSpec::new(om, WeightMode::Fixed),
            Err(Error::InvalidWeights(_))
        ));
    }

    #[test]
    fn single_dataset_pass_through() {
        let spec = build_scheme(SchemeKind::Averaging, 1, WeightMode::Fixed).unwrap();
        let p = vec![0.1, 0.2, 0.3, 0.4];
        let s = integrate_scores(&spec, std::slice::from_ref(&p)).unwrap();
        let expect: Vec<f64> = p.iter().map(|v| 4.0 * v).collect();
        assert_eq!(s.p_star, expect);
    }

    #[test]
    fn uniform_weights_are_fixed_point() {
        let u = vec![vec![0.2; 5]; 3];
        let om = Matrix::from_rows(&[vec![0.25, 0.0, 0.75], vec![0.0, 1.0, 0.0]]).unwrap();
        for kind in [SchemeKind::Averaging, SchemeKind::Aggregating, SchemeKind::Custom(om)] {
            let spec = build_scheme(kind, 3, WeightMode::Fixed).unwrap();
            let s = integrate_scores(&spec, &u).unwrap();
            assert!(s.p_star.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn omnibus_grouping_formula() {
        let w = vec![vec![0.3, 0.7], vec![0.45, 0.55], vec![0.6, 0.4]];
        let (a, c) = (0.4, 0.6);
        let om = Matrix::from_rows(&[vec![a, 0.0, c], vec![0.0, 1.0, 0.0]]).unwrap();
        let spec = SchemeSpec::new(om, WeightMode::Fixed).unwrap();
        let s = integrate_scores(&spec, &w).unwrap();
        for i in 0..2 {
            let expect = (a * 2.0 * w[0][i] + c * 2.0 * w[2][i]) * (2.0 * w[1][i]);
            assert!((s.p_star[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch() {
        let spec = build_scheme(SchemeKind::Aggregating, 2, WeightMode::Fixed).unwrap();
        assert!(integrate_scores(&spec, &[vec![0.5, 0.5]]).is_err());
        assert!(integrate_scores(&spec, &[vec![0.5, 0.5], vec![1.0]]).is_err());
    }
}
