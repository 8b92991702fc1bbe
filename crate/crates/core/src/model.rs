//! Datasets, working-model specifications and the estimating functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, expit, Matrix};

// ---------------------------------------------------------------------------
// main data
// ---------------------------------------------------------------------------

/// Binary primary endpoint with its design matrix (first column the intercept).
#[derive(Clone, Debug, PartialEq)]
pub struct MainDataset {
    y: Vec<f64>,
    x: Matrix,
}

impl MainDataset {
    pub fn new(y: Vec<f64>, x: Matrix) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::LengthMismatch {
                expected: x.rows(),
                got: y.len(),
            });
        }
        if y.is_empty() || x.cols() == 0 {
            return Err(Error::InvalidData("main dataset is empty".into()));
        }
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData(format!(
                "main outcome must be 0/1, subject {i} has {}",
                y[i]
            )));
        }
        if !x.is_finite() {
            return Err(Error::InvalidData("main design has non-finite entries".into()));
        }
        x.tr_matmul(&x)?.cholesky().map_err(|_| {
            Error::InvalidData("main design matrix is not of full column rank".into())
        })?;
        Ok(Self { y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    /// Fitted probabilities `expit(X β)`.
    pub fn fitted(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| expit(dot(self.x.row(i), beta)))
            .collect()
    }
}

/// Per-subject logistic scores `X₀ᵢ (yᵢ − μᵢ)`, one row per subject.
pub fn main_score(data: &MainDataset, beta: &[f64]) -> Matrix {
    let (n, p) = data.x.shape();
    let mut g = Matrix::zeros(n, p);
    for (i, mu) in data.fitted(beta).into_iter().enumerate() {
        let r = data.y[i] - mu;
        axpy(r, data.x.row(i), g.row_mut(i));
    }
    g
}

/// `(1/n) Σᵢ ∂gᵢ/∂βᵀ = −(1/n) Σᵢ μᵢ(1−μᵢ) X₀ᵢX₀ᵢᵀ`.
pub fn main_score_jacobian(data: &MainDataset, beta: &[f64]) -> Matrix {
    let n = data.n();
    let mut gamma = Matrix::zeros(data.p(), data.p());
    for (i, mu) in data.fitted(beta).into_iter().enumerate() {
        let xi = data.x.row(i);
        gamma.add_outer(-mu * (1.0 - mu) / n as f64, xi, xi);
    }
    gamma.symmetrize()
}

// ---------------------------------------------------------------------------
// secondary data
// ---------------------------------------------------------------------------

/// Balanced repeated measurements: `m` visits per subject, `r` covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct LongitudinalData {
    y: Vec<Vec<f64>>,
    x: Vec<Matrix>,
    observed: Vec<bool>,
}

impl LongitudinalData {
    /// Unobserved subjects may carry zero placeholders; they are never read.
    pub fn new(y: Vec<Vec<f64>>, x: Vec<Matrix>, observed: Vec<bool>) -> Result<Self> {
        let n = observed.len();
        if y.len() != n || x.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: if y.len() != n { y.len() } else { x.len() },
            });
        }
        if n == 0 {
            return Err(Error::InvalidData("longitudinal dataset is empty".into()));
        }
        let m = y[0].len();
        let r = x[0].cols();
        if m == 0 || r == 0 {
            return Err(Error::InvalidData("empty longitudinal block".into()));
        }
        for i in 0..n {
            if y[i].len() != m || x[i].shape() != (m, r) {
                return Err(Error::DimensionMismatch(format!(
                    "subject {i}: expected {m} visits and a {m}x{r} design"
                )));
            }
            if observed[i] && (!x[i].is_finite() || y[i].iter().any(|v| !v.is_finite())) {
                return Err(Error::InvalidData(format!(
                    "subject {i} has non-finite longitudinal data"
                )));
            }
        }
        Ok(Self { y, x, observed })
    }

    pub fn m(&self) -> usize {
        self.y[0].len()
    }

    pub fn r(&self) -> usize {
        self.x[0].cols()
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.y[i]
    }

    pub fn x(&self, i: usize) -> &Matrix {
        &self.x[i]
    }
}

/// One outcome per subject with main covariates `x` and redundant covariates `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossSectionalData {
    y: Vec<f64>,
    x: Matrix,
    z: Matrix,
    observed: Vec<bool>,
}

impl CrossSectionalData {
    pub fn new(y: Vec<f64>, x: Matrix, z: Matrix, observed: Vec<bool>) -> Result<Self> {
        let n = observed.len();
        for got in [y.len(), x.rows(), z.rows()] {
            if got != n {
                return Err(Error::LengthMismatch { expected: n, got });
            }
        }
        if n == 0 || x.cols() == 0 {
            return Err(Error::InvalidData("cross-sectional dataset is empty".into()));
        }
        for i in (0..n).filter(|&i| observed[i]) {
            if !y[i].is_finite()
                || x.row(i).iter().chain(z.row(i)).any(|v| !v.is_finite())
            {
                return Err(Error::InvalidData(format!(
                    "subject {i} has non-finite cross-sectional data"
                )));
            }
        }
        Ok(Self { y, x, z, observed })
    }

    pub fn r(&self) -> usize {
        self.x.cols()
    }

    pub fn q(&self) -> usize {
        self.z.cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SecondaryDataset {
    Longitudinal(LongitudinalData),
    CrossSectional(CrossSectionalData),
}

impl SecondaryDataset {
    pub fn n(&self) -> usize {
        self.observed().len()
    }

    pub fn observed(&self) -> &[bool] {
        match self {
            Self::Longitudinal(d) => &d.observed,
            Self::CrossSectional(d) => &d.observed,
        }
    }

    pub fn n_observed(&self) -> usize {
        self.observed().iter().filter(|&&o| o).count()
    }

    /// Dimension of the working-model parameter implied by the design.
    pub fn r(&self) -> usize {
        match self {
            Self::Longitudinal(d) => d.r(),
            Self::CrossSectional(d) => d.r(),
        }
    }
}

// ---------------------------------------------------------------------------
// working models
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logit,
}

/// Diagonal scaling `R̃` used in the longitudinal moment blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    Unit,
    /// Per-visit residual variances from a preliminary OLS fit, then frozen.
    PreliminaryResidual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkingModelSpec {
    pub link: Link,
    /// Symmetric `m×m` basis matrices; ignored for cross-sectional data.
    pub basis: Vec<Matrix>,
    pub variance_mode: VarianceMode,
    pub theta_dim: usize,
}

impl WorkingModelSpec {
    /// Identity-link longitudinal model with the four default basis matrices.
    pub fn longitudinal(m: usize, r: usize, variance_mode: VarianceMode) -> Self {
        Self {
            link: Link::Identity,
            basis: default_basis(m),
            variance_mode,
            theta_dim: r,
        }
    }

    pub fn cross_sectional(link: Link, r: usize) -> Self {
        Self {
            link,
            basis: Vec::new(),
            variance_mode: VarianceMode::Unit,
            theta_dim: r,
        }
    }
}

/// Identity; ones off the diagonal; ones on the first off-diagonals; the two corners.
pub fn default_basis(m: usize) -> Vec<Matrix> {
    let v1 = Matrix::identity(m);
    let mut v2 = Matrix::zeros(m, m);
    let mut v3 = Matrix::zeros(m, m);
    let mut v4 = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                v2[(i, j)] = 1.0;
            }
            if i.abs_diff(j) == 1 {
                v3[(i, j)] = 1.0;
            }
        }
    }
    if m > 0 {
        v4[(0, 0)] = 1.0;
        v4[(m - 1, m - 1)] = 1.0;
    }
    vec![v1, v2, v3, v4]
}

#[derive(Clone, Debug)]
enum Moments {
    /// `hᵢ(θ) = cᵢ + Jᵢ θ` (identity links).
    Affine { c: Matrix, jac: Vec<Matrix> },
    /// `hᵢ(θ) = (xᵢ, zᵢ)(yᵢ − expit(xᵢᵀθ))`.
    Logit { y: Vec<f64>, x: Matrix, z: Matrix },
}

/// A working model bound to its dataset, with subject-level terms precomputed.
#[derive(Clone, Debug)]
pub struct WorkingModel {
    moments: Moments,
    observed: Vec<bool>,
    d: usize,
    r: usize,
    residual_scale: Option<Vec<f64>>,
}

impl WorkingModel {
    /// Binds `spec` to `data`; requires `dim h > dim θ`.
    pub fn new(data: &SecondaryDataset, spec: &WorkingModelSpec) -> Result<Self> {
        let model = Self::build(data, spec)?;
        if model.d <= model.r {
            return Err(Error::InvalidSpec(format!(
                "working model must be over-identified: dim h = {} but dim theta = {}",
                model.d, model.r
            )));
        }
        Ok(model)
    }

    /// Skips the over-identification check; only meant for just-identified tests.
    #[doc(hidden)]
    pub fn new_allow_just_identified(
        data: &SecondaryDataset,
        spec: &WorkingModelSpec,
    ) -> Result<Self> {
        Self::build(data, spec)
    }

    fn build(data: &SecondaryDataset, spec: &WorkingModelSpec) -> Result<Self> {
        if spec.theta_dim != data.r() {
            return Err(Error::DimensionMismatch(format!(
                "working model has theta_dim {} but the data carry {} covariates",
                spec.theta_dim,
                data.r()
            )));
        }
        match data {
            SecondaryDataset::Longitudinal(d) => Self::longitudinal(d, spec),
            SecondaryDataset::CrossSectional(d) => Self::cross_sectional(d, spec),
        }
    }

    fn longitudinal(data: &LongitudinalData, spec: &WorkingModelSpec) -> Result<Self> {
        if spec.link != Link::Identity {
            return Err(Error::InvalidSpec(
                "longitudinal working models support the identity link only".into(),
            ));
        }
        let (m, r) = (data.m(), data.r());
        if spec.basis.is_empty() {
            return Err(Error::InvalidSpec("empty basis".into()));
        }
        for (j, v) in spec.basis.iter().enumerate() {
            if v.shape() != (m, m) {
                return Err(Error::DimensionMismatch(format!(
                    "basis matrix {j} is {}x{}, expected {m}x{m}",
                    v.rows(),
                    v.cols()
                )));
            }
            if v.asymmetry() > 0.0 {
                return Err(Error::InvalidSpec(format!("basis matrix {j} is not symmetric")));
            }
        }
        let scale = match spec.variance_mode {
            VarianceMode::Unit => None,
            VarianceMode::PreliminaryResidual => Some(residual_variances(data)?),
        };
        // A_j = R̃^{-1/2} V_j R̃^{-1/2}
        let a: Vec<Matrix> = spec
            .basis
            .iter()
            .map(|v| {
                let mut a = v.clone();
                if let Some(s) = &scale {
                    for i in 0..m {
                        for k in 0..m {
                            a[(i, k)] /= (s[i] * s[k]).sqrt();
                        }
                    }
                }
                a
            })
            .collect();
        let d = r * a.len();
        let n = data.observed.len();
        let mut c = Matrix::zeros(n, d);
        let mut jac = Vec::with_capacity(n);
        for i in 0..n {
            if !data.observed[i] {
                jac.push(Matrix::zeros(d, r));
                continue;
            }
            let xi = &data.x[i];
            // G_i stacks Xᵢᵀ A_j, a d×m block.
            let mut g = Matrix::zeros(d, m);
            for (j, aj) in a.iter().enumerate() {
                let block = xi.tr_matmul(aj)?;
                for row in 0..r {
                    g.row_mut(j * r + row).copy_from_slice(block.row(row));
                }
            }
            c.row_mut(i).copy_from_slice(&g.mat_vec(&data.y[i])?);
            jac.push(g.matmul(xi)?.scale(-1.0));
        }
        Ok(Self {
            moments: Moments::Affine { c, jac },
            observed: data.observed.clone(),
            d,
            r,
            residual_scale: scale,
        })
    }

    fn cross_sectional(data: &CrossSectionalData, spec: &WorkingModelSpec) -> Result<Self> {
        let (r, q) = (data.r(), data.q());
        let d = r + q;
        let n = data.observed.len();
        let moments = match spec.link {
            Link::Logit => {
                if let Some(i) = (0..n)
                    .find(|&i| data.observed[i] && data.y[i] != 0.0 && data.y[i] != 1.0)
                {
                    return Err(Error::InvalidData(format!(
                        "logit working model needs 0/1 outcomes, subject {i} has {}",
                        data.y[i]
                    )));
                }
                Moments::Logit {
                    y: data.y.clone(),
                    x: data.x.clone(),
                    z: data.z.clone(),
                }
            }
            Link::Identity => {
                let mut c = Matrix::zeros(n, d);
                let mut jac = Vec::with_capacity(n);
                for i in 0..n {
                    let mut ji = Matrix::zeros(d, r);
                    if data.observed[i] {
                        let dvec = stack(data.x.row(i), data.z.row(i));
                        for (k, &dk) in dvec.iter().enumerate() {
                            c[(i, k)] = dk * data.y[i];
                        }
                        ji.add_outer(-1.0, &dvec, data.x.row(i));
                    }
                    jac.push(ji);
                }
                Moments::Affine { c, jac }
            }
        };
        Ok(Self {
            moments,
            observed: data.observed.clone(),
            d,
            r,
            residual_scale: None,
        })
    }

    /// Dimension of `h`.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Dimension of `θ`.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.observed.len()
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Frozen per-visit variances behind `R̃`, when estimated.
    pub fn residual_variances(&self) -> Option<&[f64]> {
        self.residual_scale.as_deref()
    }

    /// True when `h` is affine in `θ` (constant Jacobian).
    pub fn is_linear(&self) -> bool {
        matches!(self.moments, Moments::Affine { .. })
    }

    /// `h(Dᵢ; θ)` for an observed subject.
    pub fn h_eval(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        match &self.moments {
            Moments::Affine { c, jac } => {
                let mut h = c.row(i).to_vec();
                for (k, hk) in h.iter_mut().enumerate() {
                    *hk += dot(jac[i].row(k), theta);
                }
                h
            }
            Moments::Logit { y, x, z } => {
                let res = y[i] - expit(dot(x.row(i), theta));
                stack(x.row(i), z.row(i)).into_iter().map(|v| v * res).collect()
            }
        }
    }

    /// `∂h(Dᵢ; θ)/∂θᵀ`, a `d×r` matrix.
    pub fn h_jacobian(&self, i: usize, theta: &[f64]) -> Matrix {
        match &self.moments {
            Moments::Affine { jac, .. } => jac[i].clone(),
            Moments::Logit { x, z, .. } => {
                let mu = expit(dot(x.row(i), theta));
                let mut j = Matrix::zeros(self.d, self.r);
                j.add_outer(-mu * (1.0 - mu), &stack(x.row(i), z.row(i)), x.row(i));
                j
            }
        }
    }

    /// `Σⱼ λⱼ ∂²hⱼ(Dᵢ; θ)/∂θ∂θᵀ`, zero for affine models.
    pub fn h_curvature(&self, i: usize, theta: &[f64], lambda: &[f64]) -> Option<Matrix> {
        match &self.moments {
            Moments::Affine { .. } => None,
            Moments::Logit { x, z, .. } => {
                let mu = expit(dot(x.row(i), theta));
                let ld = dot(&lambda[..self.r], x.row(i)) + dot(&lambda[self.r..], z.row(i));
                let mut c = Matrix::zeros(self.r, self.r);
                c.add_outer(-ld * mu * (1.0 - mu) * (1.0 - 2.0 * mu), x.row(i), x.row(i));
                Some(c)
            }
        }
    }

    /// Constraint matrix `H̃` with rows `Rᵢ h(Dᵢ; θ)`.
    pub fn constraints(&self, theta: &[f64]) -> Matrix {
        let mut h = Matrix::zeros(self.n(), self.d);
        for i in 0..self.n() {
            if self.observed[i] {
                h.row_mut(i).copy_from_slice(&self.h_eval(i, theta));
            }
        }
        h
    }

    /// Jacobians of `Rᵢ h(Dᵢ; θ)`; `None` marks an unobserved subject.
    pub fn constraint_jacobians(&self, theta: &[f64]) -> Vec<Option<Matrix>> {
        (0..self.n())
            .map(|i| self.observed[i].then(|| self.h_jacobian(i, theta)))
            .collect()
    }
}

fn stack(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Per-visit residual variances from pooled OLS over observed subjects.
fn residual_variances(data: &LongitudinalData) -> Result<Vec<f64>> {
    let (m, r) = (data.m(), data.r());
    let mut xtx = Matrix::zeros(r, r);
    let mut xty = vec![0.0; r];
    let mut count = 0usize;
    for i in (0..data.observed.len()).filter(|&i| data.observed[i]) {
        xtx.add_scaled(1.0, &data.x[i].tr_matmul(&data.x[i])?);
        axpy(1.0, &data.x[i].tr_mat_vec(&data.y[i])?, &mut xty);
        count += 1;
    }
    if count == 0 {
        return Ok(vec![1.0; m]);
    }
    let theta = xtx
        .cholesky()
        .map_err(|_| Error::RankDeficient)?
        .solve_vec(&xty);
    let mut var = vec![0.0; m];
    for i in (0..data.observed.len()).filter(|&i| data.observed[i]) {
        let fit = data.x[i].mat_vec(&theta)?;
        for t in 0..m {
            var[t] += (data.y[i][t] - fit[t]).powi(2) / count as f64;
        }
    }
    if let Some(t) = var.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidData(format!(
            "visit {t} has zero residual variance"
        )));
    }
    Ok(var)
}
