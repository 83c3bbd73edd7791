//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Objective: `(1/2n)·‖y − b − Xβ‖² + λ·‖β‖₁`; the intercept `b` is optional and
//! never penalized.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSolution {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub sweeps: usize,
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Solves one LASSO problem. `columns[j][i]` is feature `j` of row `i`.
pub fn lasso_cd(columns: &[Vec<f64>], y: &[f64], lambda: f64, fit_intercept: bool) -> Result<LassoSolution> {
    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidConfig("feature column length mismatch".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig("lambda must be non-negative".into()));
    }
    let nf = n as f64;
    let p = columns.len();
    let sq: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();
    let mut beta = vec![0.0; p];
    let mut intercept = if fit_intercept { y.iter().sum::<f64>() / nf } else { 0.0 };
    let mut resid: Vec<f64> = y.iter().map(|&v| v - intercept).collect();
    for sweep in 1..=MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if sq[j] == 0.0 {
                continue;
            }
            let col = &columns[j];
            let rho = col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / nf + sq[j] * beta[j];
            let new = soft_threshold(rho, lambda) / sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if fit_intercept {
            let shift = resid.iter().sum::<f64>() / nf;
            if shift != 0.0 {
                for r in resid.iter_mut() {
                    *r -= shift;
                }
                intercept += shift;
                max_delta = max_delta.max(shift.abs());
            }
        }
        if max_delta < TOLERANCE {
            return Ok(LassoSolution { coefficients: beta, intercept, lambda, sweeps: sweep });
        }
    }
    Err(Error::Convergence { sweeps: MAX_SWEEPS })
}

/// `max_j |x_jᵀ(y − ȳ)| / n` (`ȳ = 0` without intercept): the smallest λ
/// with an all-zero solution.
pub fn lambda_max(columns: &[Vec<f64>], y: &[f64], fit_intercept: bool) -> f64 {
    let n = y.len() as f64;
    let mean = if fit_intercept { y.iter().sum::<f64>() / n } else { 0.0 };
    columns.iter().map(|c| (c.iter().zip(y).map(|(x, v)| x * (v - mean)).sum::<f64>() / n).abs()).fold(0.0, f64::max)
}

/// Geometric grid from `lambda_max` down to `lambda_max · 1e-3`, then 0.
pub fn default_lambda_grid(columns: &[Vec<f64>], y: &[f64], count: usize, fit_intercept: bool) -> Vec<f64> {
    let top = lambda_max(columns, y, fit_intercept);
    let count = count.max(2);
    let mut grid: Vec<f64> = (0..count).map(|i| top * libm::pow(10.0, -3.0 * i as f64 / (count - 1) as f64)).collect();
    grid.push(0.0);
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub lambdas: Vec<f64>,
    /// Mean validation squared error per lambda.
    pub mean_errors: Vec<f64>,
    pub best_lambda: f64,
    /// Per-fold validation squared error at the best lambda.
    pub fold_errors: Vec<f64>,
    /// Fold index of every row.
    pub folds: Vec<usize>,
}

/// Deterministic fold assignment: shuffled round-robin.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &row) in idx.iter().enumerate() {
        folds[row] = pos % k;
    }
    folds
}

/// k-fold cross-validation over `lambdas`, minimizing mean validation
/// squared error. Ties keep the larger lambda.
pub fn cross_validate(
    columns: &[Vec<f64>],
    y: &[f64],
    lambdas: &[f64],
    k: usize,
    seed: u64,
    fit_intercept: bool,
) -> Result<CrossValidation> {
    let n = y.len();
    if k < 2 || n < k {
        return Err(Error::InvalidConfig("need at least 2 folds and one row per fold".into()));
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let folds = fold_assignment(n, k, seed);
    let mut per_lambda: Vec<Vec<f64>> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut errs = Vec::with_capacity(k);
        for fold in 0..k {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
            let sub: Vec<Vec<f64>> = columns.iter().map(|c| train.iter().map(|&i| c[i]).collect()).collect();
            let ys: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let sol = lasso_cd(&sub, &ys, lambda, fit_intercept)?;
            let err = test
                .iter()
                .map(|&i| {
                    let pred =
                        sol.intercept + columns.iter().zip(&sol.coefficients).map(|(c, b)| c[i] * b).sum::<f64>();
                    (y[i] - pred) * (y[i] - pred)
                })
                .sum::<f64>()
                / test.len() as f64;
            errs.push(err);
        }
        per_lambda.push(errs);
    }
    let mean_errors: Vec<f64> = per_lambda.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
    let mut best = 0;
    for (i, &e) in mean_errors.iter().enumerate() {
        let better = e < mean_errors[best] || (e == mean_errors[best] && lambdas[i] > lambdas[best]);
        if better {
            best = i;
        }
    }
    Ok(CrossValidation {
        lambdas: lambdas.to_vec(),
        best_lambda: lambdas[best],
        fold_errors: per_lambda[best].clone(),
        mean_errors,
        folds,
    })
}

/// Largest KKT violation of a solution: for zero coefficients
/// `|g_j| − λ` (if positive), otherwise `|g_j − λ·sign(β_j)|`, where
/// `g_j = x_jᵀ r / n`. Also includes the intercept stationarity `|mean(r)|`.
pub fn kkt_violation(columns: &[Vec<f64>], y: &[f64], sol: &LassoSolution, fit_intercept: bool) -> f64 {
    let n = y.len() as f64;
    let resid: Vec<f64> = (0..y.len())
        .map(|i| y[i] - sol.intercept - columns.iter().zip(&sol.coefficients).map(|(c, b)| c[i] * b).sum::<f64>())
        .collect();
    let mut worst: f64 = if fit_intercept { (resid.iter().sum::<f64>() / n).abs() } else { 0.0 };
    for (c, &b) in columns.iter().zip(&sol.coefficients) {
        let g = c.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n;
        let v = if b == 0.0 { (g.abs() - sol.lambda).max(0.0) } else { (g - sol.lambda * b.signum()).abs() };
        worst = worst.max(v);
    }
    worst
}
