#![allow(dead_code)]

use minbo::model::{
    CrossSectionalData, LongitudinalData, MainDataset, SecondaryDataset, VarianceMode,
    WorkingModelSpec,
};
use minbo::numerics::{expit, Matrix, RngStream};
use nalgebra::DMatrix;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

/// `max |a − b| / max |b|`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

pub fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

/// `AAᵀ/k + δI`, well conditioned.
pub fn random_spd(rng: &mut RngStream, d: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, d, d + 2);
    &a * a.transpose() / (d + 2) as f64 + DMatrix::identity(d, d) * 0.1
}

pub fn random_main(rng: &mut RngStream, n: usize, p: usize) -> (MainDataset, Vec<f64>) {
    let beta: Vec<f64> = (0..p).map(|j| if j == 0 { 0.3 } else { 0.5 * rng.standard_normal() }).collect();
    let mut x = Matrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..p {
            x[(i, j)] = rng.standard_normal();
        }
        let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        y.push(if rng.bernoulli(expit(eta)) { 1.0 } else { 0.0 });
    }
    (MainDataset::new(y, x).unwrap(), beta)
}

/// Balanced longitudinal data from `y = Xθ + ε`, observed with probability `obs`.
pub fn random_longitudinal(
    rng: &mut RngStream,
    n: usize,
    m: usize,
    theta: &[f64],
    obs: f64,
) -> SecondaryDataset {
    let r = theta.len();
    let mut ys = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    for _ in 0..n {
        let shared = rng.standard_normal();
        let mut x = Matrix::zeros(m, r);
        let mut y = Vec::with_capacity(m);
        for v in 0..m {
            x[(v, 0)] = 1.0;
            for j in 1..r {
                x[(v, j)] = rng.standard_normal();
            }
            let mean: f64 = (0..r).map(|j| x[(v, j)] * theta[j]).sum();
            y.push(mean + 0.7 * shared + 0.7 * rng.standard_normal());
        }
        xs.push(x);
        ys.push(y);
        observed.push(rng.uniform() < obs);
    }
    SecondaryDataset::Longitudinal(LongitudinalData::new(ys, xs, observed).unwrap())
}

/// Logistic cross-sectional data with `q` redundant covariates.
pub fn random_cross_sectional(
    rng: &mut RngStream,
    n: usize,
    theta: &[f64],
    q: usize,
    obs: f64,
) -> SecondaryDataset {
    let r = theta.len();
    let mut x = Matrix::zeros(n, r);
    let mut z = Matrix::zeros(n, q);
    let mut y = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..r {
            x[(i, j)] = rng.standard_normal();
        }
        for j in 0..q {
            z[(i, j)] = rng.standard_normal();
        }
        let eta: f64 = (0..r).map(|j| x[(i, j)] * theta[j]).sum();
        y.push(if rng.bernoulli(expit(eta)) { 1.0 } else { 0.0 });
        observed.push(rng.uniform() < obs);
    }
    SecondaryDataset::CrossSectional(CrossSectionalData::new(y, x, z, observed).unwrap())
}

pub fn unit_longitudinal_spec(m: usize, r: usize) -> WorkingModelSpec {
    WorkingModelSpec::longitudinal(m, r, VarianceMode::Unit)
}
