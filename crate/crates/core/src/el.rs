//! Empirical-likelihood weights for one secondary dataset.
//!
//! For fixed `θ` the multiplier `λ` maximises `(1/n) Σ log*(1 + λᵀHᵢ)`, where
//! `log*` is Owen's pseudo-logarithm (exact above `1/n`, quadratic below). The
//! nuisance parameter then minimises the resulting profile `P(θ)`.

use std::cell::RefCell;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::WorkingModel;
use crate::numerics::{axpy, dot, max_abs, Cholesky, Matrix, PINV_TOLERANCE};

/// Solver tolerances and iteration caps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElOptions {
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
}

impl Default for ElOptions {
    fn default() -> Self {
        Self {
            inner_tol: 1e-10,
            outer_tol: 1e-8,
            max_inner: 100,
            max_outer: 200,
        }
    }
}

/// Outer steps without residual improvement before switching to Nelder-Mead.
const STALL_WINDOW: usize = 10;
/// Inner tolerance tightening for profile evaluations inside the outer solve,
/// so that λ error does not put a floor under the θ residual.
const PROFILE_INNER_FACTOR: f64 = 1e-3;
/// `|λᵀHᵢ|` beyond this means the dual is running off to infinity.
const DIVERGENCE: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    /// No subject was observed; weights are uniform and θ̂ is the start value.
    NoInformation,
}

/// Fitted empirical-likelihood solution and its efficiency matrices.
#[derive(Clone, Debug)]
pub struct ElFit {
    pub theta_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    /// `p̂ᵢ`, summing to one.
    pub weights: Vec<f64>,
    pub status: FitStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub used_fallback: bool,
    /// `max |Σ p̂ᵢ Hᵢ|` at the solution.
    pub constraint_residual: f64,
    pub s11: Matrix,
    pub s12: Matrix,
    pub omega: Matrix,
    pub s: Matrix,
}

impl ElFit {
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Weights on the `n p̂ᵢ` scale (each close to one).
    pub fn normalized_weights(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.weights.iter().map(|p| n * p).collect()
    }
}

// ---------------------------------------------------------------------------
// pseudo-logarithm
// ---------------------------------------------------------------------------

#[inline]
pub fn log_star(z: f64, eps: f64) -> f64 {
    if z >= eps {
        z.ln()
    } else {
        let u = z / eps;
        eps.ln() - 1.5 + 2.0 * u - 0.5 * u * u
    }
}

/// First derivative of `log*`.
#[inline]
fn psi(z: f64, eps: f64) -> f64 {
    if z >= eps {
        1.0 / z
    } else {
        2.0 / eps - z / (eps * eps)
    }
}

/// Second derivative of `log*`.
#[inline]
fn psi_prime(z: f64, eps: f64) -> f64 {
    if z >= eps {
        -1.0 / (z * z)
    } else {
        -1.0 / (eps * eps)
    }
}

// ---------------------------------------------------------------------------
// inner problem
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LambdaSolve {
    pub lambda: Vec<f64>,
    pub iterations: usize,
    /// Dual objective `−(1/n) Σ log*(1 + λᵀHᵢ)` after each accepted step.
    pub trace: Vec<f64>,
    /// Profile value `(1/n) Σ log*(1 + λᵀHᵢ)` at the solution.
    pub profile: f64,
}

/// Rows of `h` that are not identically zero.
fn active_rows(h: &Matrix) -> Vec<usize> {
    (0..h.rows())
        .filter(|&i| h.row(i).iter().any(|&v| v != 0.0))
        .collect()
}

fn dual_value(h: &Matrix, rows: &[usize], lambda: &[f64], eps: f64) -> f64 {
    let n = h.rows() as f64;
    -rows
        .iter()
        .map(|&i| log_star(1.0 + dot(lambda, h.row(i)), eps))
        .sum::<f64>()
        / n
}

/// Solves `(1/n) Σ Hᵢ / (1 + λᵀHᵢ) = 0` for `λ`.
pub fn solve_lambda(h: &Matrix, lambda0: &[f64]) -> Result<Vec<f64>> {
    solve_lambda_with(h, lambda0, &ElOptions::default()).map(|s| s.lambda)
}

pub fn solve_lambda_with(h: &Matrix, lambda0: &[f64], opts: &ElOptions) -> Result<LambdaSolve> {
    let (n, d) = h.shape();
    if lambda0.len() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            got: lambda0.len(),
        });
    }
    if !h.is_finite() {
        return Err(Error::InvalidData("constraint rows are not finite".into()));
    }
    let rows = active_rows(h);
    if rows.is_empty() {
        warn!("all constraint rows are zero; returning lambda = 0");
        return Ok(LambdaSolve {
            lambda: vec![0.0; d],
            iterations: 0,
            trace: vec![0.0],
            profile: 0.0,
        });
    }
    let nf = n as f64;
    let eps = 1.0 / nf;
    let scale = h.max_abs();
    let tol = opts.inner_tol * scale;

    let mut lambda = lambda0.to_vec();
    let mut f = dual_value(h, &rows, &lambda, eps);
    if !f.is_finite() {
        lambda = vec![0.0; d];
        f = 0.0;
    }
    let mut trace = vec![f];
    let mut grad = vec![0.0; d];
    let mut raw = vec![0.0; d];
    let mut hess = Matrix::zeros(d, d);
    let mut last_system = None;
    for it in 0..=opts.max_inner {
        grad.iter_mut().for_each(|g| *g = 0.0);
        raw.iter_mut().for_each(|g| *g = 0.0);
        hess.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        let mut min_z = f64::INFINITY;
        for &i in &rows {
            let hi = h.row(i);
            let z = 1.0 + dot(&lambda, hi);
            min_z = min_z.min(z);
            axpy(-psi(z, eps) / nf, hi, &mut grad);
            axpy(1.0 / (z * nf), hi, &mut raw);
            hess.add_outer(-psi_prime(z, eps) / nf, hi, hi);
        }
        let system = NewtonSystem::new(&hess, || {
            let mut a = Matrix::zeros(rows.len(), d);
            for (r, &i) in rows.iter().enumerate() {
                let hi = h.row(i);
                let c = (-psi_prime(1.0 + dot(&lambda, hi), eps) / nf).sqrt();
                hi.iter().enumerate().for_each(|(j, v)| a[(r, j)] = c * v);
            }
            a
        });
        let resid = system.residual(&raw);
        if min_z > 0.5 * eps && resid <= tol {
            let profile = -f;
            return Ok(LambdaSolve {
                lambda,
                iterations: it,
                trace,
                profile,
            });
        }
        if it == opts.max_inner {
            break;
        }
        let step = system.solve(&grad.iter().map(|g| -g).collect::<Vec<_>>());
        let slope = dot(&grad, &step);
        let floor = dual_floor(f, &lambda, scale);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = lambda.iter().zip(&step).map(|(l, s)| l + t * s).collect();
            let ft = dual_value(h, &rows, &trial, eps);
            if !ft.is_finite() {
                t *= 0.5;
                continue;
            }
            // Within rounding of the dual only the residual can tell progress.
            let ok = if (ft - f).abs() <= floor {
                let (tz, tr) = raw_residual(h, &rows, &trial);
                tz > 0.5 * eps && system.residual(&tr) < resid
            } else {
                ft <= f + 1e-4 * t * slope
            };
            if ok {
                lambda = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        last_system = Some(system);
        if !accepted {
            break;
        }
        trace.push(f);
        let reach = rows
            .iter()
            .map(|&i| dot(&lambda, h.row(i)).abs())
            .fold(0.0, f64::max);
        if reach > DIVERGENCE {
            return Err(Error::HullViolation);
        }
    }
    // Accept a solution that stalled within a modest factor of the tolerance.
    let (min_z, raw) = raw_residual(h, &rows, &lambda);
    let resid = last_system.map_or(max_abs(&raw), |s| s.residual(&raw));
    if min_z > 0.5 * eps && resid <= 1e3 * tol {
        let profile = -f;
        return Ok(LambdaSolve {
            iterations: opts.max_inner,
            lambda,
            trace,
            profile,
        });
    }
    Err(Error::HullViolation)
}

/// Rounding uncertainty of the dual value: each `1 + λᵀHᵢ` carries an error
/// of order `ε ‖λ‖₁ max|H|`.
fn dual_floor(f: f64, lambda: &[f64], scale: f64) -> f64 {
    let l1: f64 = lambda.iter().map(|v| v.abs()).sum();
    8.0 * f64::EPSILON * (f.abs() + l1 * scale).max(f64::MIN_POSITIVE)
}

/// Smallest `1 + λᵀHᵢ` and the raw residual vector `(1/n) Σ Hᵢ/(1 + λᵀHᵢ)`.
fn raw_residual(h: &Matrix, rows: &[usize], lambda: &[f64]) -> (f64, Vec<f64>) {
    let nf = h.rows() as f64;
    let mut raw = vec![0.0; h.cols()];
    let mut min_z = f64::INFINITY;
    for &i in rows {
        let z = 1.0 + dot(lambda, h.row(i));
        min_z = min_z.min(z);
        axpy(1.0 / (z * nf), h.row(i), &mut raw);
    }
    (min_z, raw)
}

/// Singular values of the weighted constraint rows below this many `d ε max`
/// are treated as null.
const NULL_SINGULAR_FACTOR: f64 = 4.0;

/// Newton system for the dual. A numerically singular Hessian means some
/// moment combinations are (nearly) redundant. The reduced system is then
/// built from the singular vectors of the weighted rows `Aᵀ A = Hessian`,
/// which resolve directions whose Hessian eigenvalues are lost to rounding.
/// Only rounding-level directions are dropped from the step and the
/// convergence check.
enum NewtonSystem {
    Full(Cholesky),
    Reduced { pinv: Matrix, projector: Matrix },
}

impl NewtonSystem {
    fn new(hess: &Matrix, weighted_rows: impl FnOnce() -> Matrix) -> Self {
        if let Ok(c) = hess.cholesky() {
            return Self::Full(c);
        }
        let a = weighted_rows();
        let d = hess.rows();
        let (values, vectors) = a.right_singular();
        let top = values.iter().copied().fold(0.0, f64::max);
        let cutoff = NULL_SINGULAR_FACTOR * d as f64 * f64::EPSILON * top;
        let mut pinv = Matrix::zeros(d, d);
        let mut projector = Matrix::zeros(d, d);
        for (k, &s) in values.iter().enumerate() {
            if s > cutoff {
                let u = vectors.col_vec(k);
                pinv.add_outer(1.0 / (s * s), &u, &u);
                projector.add_outer(1.0, &u, &u);
            }
        }
        Self::Reduced { pinv, projector }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Self::Full(c) => c.solve_vec(rhs),
            Self::Reduced { pinv, .. } => pinv.mat_vec(rhs).expect("conformable"),
        }
    }

    /// Max-abs residual on the identified directions.
    fn residual(&self, raw: &[f64]) -> f64 {
        match self {
            Self::Full(_) => max_abs(raw),
            Self::Reduced { projector, .. } => max_abs(&projector.mat_vec(raw).expect("conformable")),
        }
    }
}

/// Solves `A δ = −g` for PSD `A`, adding a growing ridge if needed.
fn newton_step(a: &Matrix, g: &[f64]) -> Result<Vec<f64>> {
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    if let Ok(c) = a.cholesky() {
        return Ok(c.solve_vec(&neg));
    }
    let base = a.diag().into_iter().fold(0.0, f64::max).max(1e-300);
    let mut ridge = 1e-10 * base;
    for _ in 0..20 {
        let mut b = a.clone();
        for i in 0..b.rows() {
            b[(i, i)] += ridge;
        }
        if let Ok(c) = b.cholesky() {
            return Ok(c.solve_vec(&neg));
        }
        ridge *= 100.0;
    }
    Err(Error::NotPositiveDefinite {
        index: 0,
        pivot: f64::NAN,
    })
}

// ---------------------------------------------------------------------------
// profile in θ
// ---------------------------------------------------------------------------

/// `P(θ) = max_λ (1/n) Σ log*(1 + λᵀHᵢ(θ))`, the negative log EL ratio over `n`.
pub fn profile_objective(model: &WorkingModel, theta: &[f64]) -> Result<f64> {
    let h = model.constraints(theta);
    let s = solve_lambda_with(&h, &vec![0.0; model.d()], &ElOptions::default())?;
    Ok(s.profile)
}

struct ProfilePoint {
    theta: Vec<f64>,
    h: Matrix,
    lambda: Vec<f64>,
    value: f64,
}

fn evaluate(
    model: &WorkingModel,
    theta: Vec<f64>,
    warm: &[f64],
    opts: &ElOptions,
    inner_total: &mut usize,
) -> Result<ProfilePoint> {
    let h = model.constraints(&theta);
    let inner = ElOptions {
        inner_tol: opts.inner_tol * PROFILE_INNER_FACTOR,
        ..*opts
    };
    let s = solve_lambda_with(&h, warm, &inner)?;
    *inner_total += s.iterations;
    Ok(ProfilePoint {
        theta,
        h,
        lambda: s.lambda,
        value: s.profile,
    })
}

struct ProfileDerivatives {
    grad: Vec<f64>,
    hess: Matrix,
    gauss_newton: Matrix,
    /// `max |(1/n) Σ Jᵢᵀλ / (1 + λᵀHᵢ)|`, the raw θ-equation residual.
    theta_residual: f64,
    jac_scale: f64,
}

fn derivatives(model: &WorkingModel, pt: &ProfilePoint) -> Result<ProfileDerivatives> {
    let (n, d) = pt.h.shape();
    let r = model.r();
    let nf = n as f64;
    let eps = 1.0 / nf;
    let lambda = &pt.lambda;
    let mut l_t = vec![0.0; r];
    let mut raw_t = vec![0.0; r];
    let mut l_lt = Matrix::zeros(d, r);
    let mut l_ll = Matrix::zeros(d, d);
    let mut l_tt = Matrix::zeros(r, r);
    let mut jac_scale: f64 = 0.0;
    for i in (0..n).filter(|&i| model.observed()[i]) {
        let hi = pt.h.row(i);
        let ji = model.h_jacobian(i, &pt.theta);
        jac_scale = jac_scale.max(ji.max_abs());
        let z = 1.0 + dot(lambda, hi);
        let (ps, pp) = (psi(z, eps), psi_prime(z, eps));
        let jl = ji.tr_mat_vec(lambda)?;
        axpy(ps / nf, &jl, &mut l_t);
        axpy(1.0 / (z * nf), &jl, &mut raw_t);
        l_lt.add_scaled(ps / nf, &ji);
        l_lt.add_outer(pp / nf, hi, &jl);
        l_ll.add_outer(pp / nf, hi, hi);
        l_tt.add_outer(pp / nf, &jl, &jl);
        if let Some(c) = model.h_curvature(i, &pt.theta, lambda) {
            l_tt.add_scaled(ps / nf, &c);
        }
    }
    let neg_ll = l_ll.scale(-1.0);
    let gauss_newton = match neg_ll.cholesky() {
        Ok(c) => l_lt.tr_matmul(&c.solve(&l_lt))?.symmetrize(),
        Err(_) => {
            let pinv = neg_ll.pinv_psd(PINV_TOLERANCE);
            l_lt.tr_matmul(&pinv.matmul(&l_lt)?)?.symmetrize()
        }
    };
    let hess = l_tt.add(&gauss_newton)?.symmetrize();
    Ok(ProfileDerivatives {
        grad: l_t,
        hess,
        gauss_newton,
        theta_residual: max_abs(&raw_t),
        jac_scale,
    })
}

/// Profile cost for the derivative-free fallback.
struct ProfileCost<'a> {
    model: &'a WorkingModel,
    warm: RefCell<Vec<f64>>,
    opts: ElOptions,
}

impl CostFunction for ProfileCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let h = self.model.constraints(theta);
        let warm = self.warm.borrow().clone();
        match solve_lambda_with(&h, &warm, &self.opts) {
            Ok(s) => {
                *self.warm.borrow_mut() = s.lambda;
                Ok(s.profile)
            }
            Err(_) => Ok(f64::INFINITY),
        }
    }
}

fn nelder_mead(model: &WorkingModel, start: &ProfilePoint, opts: &ElOptions) -> Option<Vec<f64>> {
    let r = start.theta.len();
    let mut simplex = vec![start.theta.clone()];
    for j in 0..r {
        let mut v = start.theta.clone();
        v[j] += 0.05 * (1.0 + v[j].abs());
        simplex.push(v);
    }
    let cost = ProfileCost {
        model,
        warm: RefCell::new(start.lambda.clone()),
        opts: *opts,
    };
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-14).ok()?;
    let res = Executor::new(cost, solver)
        .configure(|state| state.max_iters(400 * r as u64))
        .run()
        .ok()?;
    res.state.best_param
}

/// Fits `θ̂` and `λ̂` from the start value `theta0`.
pub fn fit_el(model: &WorkingModel, theta0: &[f64]) -> Result<ElFit> {
    fit_el_with(model, theta0, &ElOptions::default())
}

pub fn fit_el_with(model: &WorkingModel, theta0: &[f64], opts: &ElOptions) -> Result<ElFit> {
    let (n, d, r) = (model.n(), model.d(), model.r());
    if theta0.len() != r {
        return Err(Error::LengthMismatch {
            expected: r,
            got: theta0.len(),
        });
    }
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange("theta0 must be finite".into()));
    }
    if model.n_observed() == 0 {
        warn!("secondary dataset has no observed subjects; it carries no information");
        return Ok(ElFit {
            theta_hat: theta0.to_vec(),
            lambda_hat: vec![0.0; d],
            weights: vec![1.0 / n as f64; n],
            status: FitStatus::NoInformation,
            outer_iterations: 0,
            inner_iterations: 0,
            used_fallback: false,
            constraint_residual: 0.0,
            s11: Matrix::zeros(d, d),
            s12: Matrix::zeros(d, r),
            omega: Matrix::zeros(r, r),
            s: Matrix::zeros(d, d),
        });
    }

    let mut inner_total = 0;
    let mut pt = evaluate(model, theta0.to_vec(), &vec![0.0; d], opts, &mut inner_total)?;
    let mut best_residual = f64::INFINITY;
    let mut stalled = 0;
    let mut used_fallback = false;
    let mut outer = 0;
    let converged = loop {
        let der = derivatives(model, &pt)?;
        let h_scale = pt.h.max_abs().max(f64::MIN_POSITIVE);
        let tol = opts.outer_tol * der.jac_scale.max(f64::MIN_POSITIVE) / h_scale;
        if der.theta_residual <= tol {
            break true;
        }
        if outer == opts.max_outer {
            break false;
        }
        outer += 1;

        if der.theta_residual < best_residual {
            best_residual = der.theta_residual;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled >= STALL_WINDOW && !used_fallback {
            used_fallback = true;
            stalled = 0;
            if let Some(theta) = nelder_mead(model, &pt, opts) {
                let lambda = pt.lambda.clone();
                if let Ok(cand) = evaluate(model, theta, &lambda, opts, &mut inner_total) {
                    if cand.value <= pt.value {
                        pt = cand;
                    }
                }
            }
            continue;
        }

        let step = match der.hess.cholesky() {
            Ok(c) => c.solve_vec(&der.grad.iter().map(|g| -g).collect::<Vec<_>>()),
            Err(_) => newton_step(&der.gauss_newton, &der.grad)?,
        };
        let theta_norm = max_abs(&pt.theta);
        if max_abs(&step) <= 1e-12 * (1.0 + theta_norm) {
            break true;
        }
        let slope = dot(&der.grad, &step);
        let floor = dual_floor(pt.value, &pt.lambda, pt.h.max_abs());
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let trial: Vec<f64> = pt.theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            if let Ok(cand) = evaluate(model, trial, &pt.lambda, opts, &mut inner_total) {
                if cand.value <= pt.value + 1e-4 * t * slope || cand.value <= pt.value + floor {
                    next = Some(cand);
                    break;
                }
            }
            t *= 0.5;
        }
        match next {
            Some(cand) => pt = cand,
            None if used_fallback => break false,
            None => stalled = STALL_WINDOW,
        }
    };
    if !converged {
        let der = derivatives(model, &pt)?;
        return Err(Error::NotConverged {
            what: "empirical likelihood outer solve",
            iterations: outer,
            residual: der.theta_residual,
        });
    }
    finish(model, pt, outer, inner_total, used_fallback)
}

fn finish(
    model: &WorkingModel,
    pt: ProfilePoint,
    outer: usize,
    inner: usize,
    used_fallback: bool,
) -> Result<ElFit> {
    let (n, d) = pt.h.shape();
    let r = model.r();
    let nf = n as f64;
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let z = 1.0 + dot(&pt.lambda, pt.h.row(i));
        if !(z > 0.5 / nf) {
            return Err(Error::HullViolation);
        }
        weights.push(1.0 / (nf * z));
    }
    let mut resid = vec![0.0; d];
    for (i, &w) in weights.iter().enumerate() {
        axpy(w, pt.h.row(i), &mut resid);
    }
    let s11 = pt.h.tr_matmul(&pt.h)?.scale(1.0 / nf).symmetrize();
    let mut s12 = Matrix::zeros(d, r);
    for i in (0..n).filter(|&i| model.observed()[i]) {
        s12.add_scaled(1.0 / nf, &model.h_jacobian(i, &pt.theta));
    }
    let (omega, s) = efficiency_matrices(&s11, &s12)?;
    Ok(ElFit {
        theta_hat: pt.theta,
        lambda_hat: pt.lambda,
        weights,
        status: FitStatus::Converged,
        outer_iterations: outer,
        inner_iterations: inner,
        used_fallback,
        constraint_residual: max_abs(&resid),
        s11,
        s12,
        omega,
        s,
    })
}

/// `Ω = (S12ᵀ S11⁻¹ S12)⁻¹` and `S = S11⁻¹ − S11⁻¹ S12 Ω S12ᵀ S11⁻¹`.
///
/// A numerically singular `S11` (redundant moments) is handled with its
/// pseudo-inverse.
pub fn efficiency_matrices(s11: &Matrix, s12: &Matrix) -> Result<(Matrix, Matrix)> {
    let s11_inv = match s11.inverse_spd() {
        Ok(inv) => inv,
        Err(Error::NotPositiveDefinite { .. }) => {
            debug!("moment covariance is rank deficient; using its pseudo-inverse");
            s11.pinv_psd(PINV_TOLERANCE)
        }
        Err(e) => return Err(e),
    };
    let a = s11_inv.matmul(s12)?; // S11⁻¹ S12
    let info = s12.tr_matmul(&a)?.symmetrize();
    let omega = info.inverse_spd().map_err(|_| Error::RankDeficient)?;
    let s = s11_inv
        .sub(&a.matmul(&omega)?.matmul(&a.transpose())?)?
        .symmetrize();
    Ok((omega, s))
}

// ---------------------------------------------------------------------------
// initial value
// ---------------------------------------------------------------------------

fn mean_moments(model: &WorkingModel, theta: &[f64]) -> (Vec<f64>, Matrix) {
    let n = model.n() as f64;
    let mut hbar = vec![0.0; model.d()];
    let mut jbar = Matrix::zeros(model.d(), model.r());
    for i in (0..model.n()).filter(|&i| model.observed()[i]) {
        axpy(1.0 / n, &model.h_eval(i, theta), &mut hbar);
        jbar.add_scaled(1.0 / n, &model.h_jacobian(i, theta));
    }
    (hbar, jbar)
}

fn gmm_objective(model: &WorkingModel, w: &Matrix, theta: &[f64]) -> f64 {
    let (hbar, _) = mean_moments(model, theta);
    dot(&hbar, &w.mat_vec(&hbar).expect("conformable weight"))
}

fn gmm_minimize(model: &WorkingModel, w: &Matrix, theta0: Vec<f64>) -> Result<Vec<f64>> {
    let mut theta = theta0;
    let mut q = gmm_objective(model, w, &theta);
    let mut last = f64::INFINITY;
    for _ in 0..100 {
        let (hbar, jbar) = mean_moments(model, &theta);
        let wj = w.matmul(&jbar)?;
        let a = jbar.tr_matmul(&wj)?.symmetrize();
        let b = wj.tr_mat_vec(&hbar)?;
        let chol = a.cholesky().map_err(|_| Error::RankDeficient)?;
        let step: Vec<f64> = chol.solve_vec(&b).into_iter().map(|v| -v).collect();
        let mut t = 1.0;
        for _ in 0..30 {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let qt = gmm_objective(model, w, &trial);
            if qt <= q || t < 1e-8 {
                theta = trial;
                q = qt;
                break;
            }
            t *= 0.5;
        }
        last = max_abs(&step);
        if last <= 1e-10 * (1.0 + max_abs(&theta)) {
            return Ok(theta);
        }
    }
    // Only a start value; the EL solve refines it.
    debug!("GMM initialiser stopped with step {last:e}");
    Ok(theta)
}

/// Two-step GMM: identity weight first, then the inverse moment covariance.
pub fn two_step_gmm_init(model: &WorkingModel) -> Result<Vec<f64>> {
    let first = gmm_minimize(model, &Matrix::identity(model.d()), vec![0.0; model.r()])?;
    let h = model.constraints(&first);
    let s11 = h.tr_matmul(&h)?.scale(1.0 / model.n() as f64);
    let w = s11
        .inverse_spd()
        .unwrap_or_else(|_| s11.pinv_psd(PINV_TOLERANCE));
    gmm_minimize(model, &w, first)
}

/// Initialises with two-step GMM and fits.
pub fn fit_working_model(model: &WorkingModel, opts: &ElOptions) -> Result<ElFit> {
    if model.n_observed() == 0 {
        return fit_el_with(model, &vec![0.0; model.r()], opts);
    }
    let theta0 = two_step_gmm_init(model)?;
    fit_el_with(model, &theta0, opts)
}
