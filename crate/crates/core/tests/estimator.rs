//! Logistic solvers: closed forms, a duplicated-subject oracle and invariances.

mod common;

use common::random_main;
use minbo::estimator::{fit_unweighted, fit_weighted};
use minbo::model::MainDataset;
use minbo::numerics::{Matrix, RngStream};
use minbo::Error;
use proptest::prelude::*;

fn intercept_only(y: &[f64]) -> MainDataset {
    MainDataset::new(y.to_vec(), Matrix::from_vec(y.len(), 1, vec![1.0; y.len()]).unwrap()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn subset(data: &MainDataset, rows: &[usize]) -> MainDataset {
    let y = rows.iter().map(|&i| data.y()[i]).collect();
    let flat = rows.iter().flat_map(|&i| data.x().row(i).to_vec()).collect();
    let x = Matrix::from_vec(rows.len(), data.p(), flat).unwrap();
    MainDataset::new(y, x).unwrap()
}

#[test]
fn intercept_only_closed_forms() {
    let balanced = intercept_only(&[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    assert!(fit_unweighted(&balanced).unwrap().beta_hat[0].abs() < 1e-10);
    let quarter = intercept_only(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let b = fit_unweighted(&quarter).unwrap().beta_hat[0];
    assert!((b - (1.0f64 / 3.0).ln()).abs() < 1e-10);
}

#[test]
fn separation_is_reported() {
    let x = Matrix::from_rows(&[
        vec![1.0, -2.0],
        vec![1.0, -1.0],
        vec![1.0, -0.5],
        vec![1.0, 0.5],
        vec![1.0, 1.0],
        vec![1.0, 2.0],
    ])
    .unwrap();
    let data = MainDataset::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], x).unwrap();
    assert!(matches!(fit_unweighted(&data), Err(Error::Separation { .. })));
}

#[test]
fn weight_two_equals_duplicated_subject() {
    for seed in 0..20 {
        let mut rng = RngStream::new(seed, 31);
        let (data, _) = random_main(&mut rng, 150, 4);
        let dup = (seed as usize * 7) % data.n();
        let mut w = vec![1.0; data.n()];
        w[dup] = 2.0;
        let weighted = fit_weighted(&data, &w, &[0.0; 4]).unwrap();
        let rows: Vec<usize> = (0..data.n()).chain(std::iter::once(dup)).collect();
        let doubled = fit_unweighted(&subset(&data, &rows)).unwrap();
        assert!(max_diff(&weighted.beta_hat, &doubled.beta_hat) < 1e-9, "seed {seed}");
    }
}

#[test]
fn zero_or_negative_weights_rejected() {
    let mut rng = RngStream::new(3, 32);
    let (data, _) = random_main(&mut rng, 40, 2);
    let mut w = vec![1.0; 40];
    w[5] = 0.0;
    assert!(fit_weighted(&data, &w, &[0.0, 0.0]).is_err());
    w[5] = f64::NAN;
    assert!(fit_weighted(&data, &w, &[0.0, 0.0]).is_err());
    assert!(fit_weighted(&data, &w[..39], &[0.0, 0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scaling_weights_leaves_estimate_unchanged(seed in 0u64..1000, c in 0.05f64..20.0) {
        let mut rng = RngStream::new(seed, 33);
        let (data, _) = random_main(&mut rng, 200, 3);
        let w: Vec<f64> = (0..data.n()).map(|_| 0.2 + rng.uniform()).collect();
        let scaled: Vec<f64> = w.iter().map(|v| c * v).collect();
        let a = fit_weighted(&data, &w, &[0.0; 3]).unwrap();
        let b = fit_weighted(&data, &scaled, &[0.0; 3]).unwrap();
        prop_assert!(max_diff(&a.beta_hat, &b.beta_hat) < 1e-8);
    }

    #[test]
    fn subject_order_does_not_matter(seed in 0u64..1000) {
        let mut rng = RngStream::new(seed, 34);
        let (data, _) = random_main(&mut rng, 120, 3);
        let w: Vec<f64> = (0..data.n()).map(|_| 0.5 + rng.uniform()).collect();
        let mut perm: Vec<usize> = (0..data.n()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, (rng.uniform() * (i + 1) as f64) as usize % (i + 1));
        }
        let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
        let a = fit_weighted(&data, &w, &[0.0; 3]).unwrap();
        let b = fit_weighted(&subset(&data, &perm), &pw, &[0.0; 3]).unwrap();
        prop_assert!(max_diff(&a.beta_hat, &b.beta_hat) < 1e-9);
    }

    #[test]
    fn weighted_score_vanishes(seed in 0u64..1000) {
        let mut rng = RngStream::new(seed, 35);
        let (data, _) = random_main(&mut rng, 150, 4);
        let w: Vec<f64> = (0..data.n()).map(|_| 0.1 + 2.0 * rng.uniform()).collect();
        let sol = fit_weighted(&data, &w, &[0.0; 4]).unwrap();
        prop_assert!(sol.converged);
        let fitted = data.fitted(&sol.beta_hat);
        for j in 0..4 {
            let u: f64 = (0..data.n()).map(|i| w[i] * data.x()[(i, j)] * (data.y()[i] - fitted[i])).sum();
            prop_assert!(u.abs() < 1e-7);
        }
    }
}
