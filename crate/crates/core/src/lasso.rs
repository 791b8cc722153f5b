//! L1-penalized least squares by cyclic coordinate descent.
//!
//! The objective is the unnormalized `||y - X b||^2 + lambda * ||b||_1`
//! (no 1/2, no 1/n), so the per-coordinate threshold is `lambda / 2` and the
//! smallest penalty giving the zero solution is `2 * max_j |x_j' y|`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EstimatorKind, EstimatorResult, FitFlag, RegressionData};

/// Grid length used when none is supplied.
pub const DEFAULT_GRID_LEN: usize = 20;
/// Smallest grid value as a fraction of `lambda_max`.
pub const GRID_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSelection {
    /// Use `LassoConfig::lambda` as is.
    #[default]
    Fixed,
    /// K-fold cross-validation over `lambda_grid` (or the default grid).
    CrossValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub lambda_grid: Option<Vec<f64>>,
    pub cv_folds: usize,
    pub seed: u64,
    pub selection: LambdaSelection,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            lambda: 0.0,
            tol: 1e-7,
            max_iter: 10_000,
            lambda_grid: None,
            cv_folds: 10,
            seed: 0,
            selection: LambdaSelection::Fixed,
        }
    }
}

impl LassoConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        LassoConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn cross_validated(seed: u64) -> Self {
        LassoConfig {
            selection: LambdaSelection::CrossValidation,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be >= 1".into()));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() {
                return Err(Error::InvalidInput("lambda grid is empty".into()));
            }
            if grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
                return Err(Error::InvalidInput("lambda grid values must be >= 0".into()));
            }
            if grid.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::InvalidInput("lambda grid must be strictly decreasing".into()));
            }
        }
        Ok(())
    }
}

/// Coefficients along a sequence of penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub betas: Vec<DVector<f64>>,
    pub cv_errors: Option<Vec<f64>>,
}

/// `sign(z) * max(|z| - t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    (y - x * beta).norm_squared() + lambda * beta.lp_norm(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveInfo {
    pub sweeps: usize,
    pub converged: bool,
}

/// Reusable solver state for one design: column norms and a residual buffer.
struct Solver<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    col_sq: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Self {
        let col_sq = x.column_iter().map(|c| c.norm_squared()).collect();
        Solver { x, y, col_sq }
    }

    /// Runs sweeps from `beta` in place. `trace` receives the objective after
    /// every sweep.
    fn solve(
        &self,
        lambda: f64,
        beta: &mut DVector<f64>,
        tol: f64,
        max_iter: usize,
        mut trace: Option<&mut Vec<f64>>,
    ) -> SolveInfo {
        let half = 0.5 * lambda;
        let mut resid = self.y - self.x * &*beta;
        for sweep in 1..=max_iter {
            let mut max_change = 0.0_f64;
            for (j, col) in self.x.column_iter().enumerate() {
                let old = beta[j];
                let new = if self.col_sq[j] > 0.0 {
                    let z = col.dot(&resid) + self.col_sq[j] * old;
                    soft_threshold(z, half) / self.col_sq[j]
                } else {
                    0.0
                };
                if new != old {
                    resid.axpy(old - new, &col, 1.0);
                    beta[j] = new;
                    max_change = max_change.max((new - old).abs());
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(resid.norm_squared() + lambda * beta.lp_norm(1));
            }
            if max_change < tol {
                return SolveInfo {
                    sweeps: sweep,
                    converged: true,
                };
            }
        }
        SolveInfo {
            sweeps: max_iter,
            converged: false,
        }
    }
}

fn lasso_result(beta: DVector<f64>, lambda: f64, info: SolveInfo) -> EstimatorResult {
    let mut out = EstimatorResult::new(beta, EstimatorKind::Ule);
    out.lambda = Some(lambda);
    if !info.converged {
        out.flags.push(FitFlag::NonConvergence);
    }
    out
}

/// Unrestricted LASSO at `cfg.lambda`, started from zero.
///
/// Hitting `max_iter` is not an error: the last iterate is returned with
/// [`FitFlag::NonConvergence`].
pub fn lasso_fit(data: &RegressionData, cfg: &LassoConfig) -> Result<EstimatorResult> {
    lasso_fit_from(data, cfg, None)
}

/// Like [`lasso_fit`] but starting from `warm` when given.
pub fn lasso_fit_from(
    data: &RegressionData,
    cfg: &LassoConfig,
    warm: Option<&DVector<f64>>,
) -> Result<EstimatorResult> {
    cfg.validate()?;
    let mut beta = start_point(data.p(), warm)?;
    let info = Solver::new(data.x(), data.y()).solve(cfg.lambda, &mut beta, cfg.tol, cfg.max_iter, None);
    Ok(lasso_result(beta, cfg.lambda, info))
}

/// Fit plus the objective value recorded after every sweep.
pub fn lasso_fit_traced(data: &RegressionData, cfg: &LassoConfig) -> Result<(EstimatorResult, Vec<f64>)> {
    cfg.validate()?;
    let mut beta = DVector::zeros(data.p());
    let mut trace = Vec::new();
    let info = Solver::new(data.x(), data.y()).solve(
        cfg.lambda,
        &mut beta,
        cfg.tol,
        cfg.max_iter,
        Some(&mut trace),
    );
    Ok((lasso_result(beta, cfg.lambda, info), trace))
}

fn start_point(p: usize, warm: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    match warm {
        Some(w) if w.len() != p => Err(Error::InvalidInput(format!(
            "warm start has length {}, expected {p}",
            w.len()
        ))),
        Some(w) => Ok(w.clone()),
        None => Ok(DVector::zeros(p)),
    }
}

/// Warm-started fits along `lambdas`, in the order given.
pub fn lasso_path(data: &RegressionData, lambdas: &[f64], cfg: &LassoConfig) -> Result<LassoPath> {
    cfg.validate()?;
    let solver = Solver::new(data.x(), data.y());
    let mut beta = DVector::zeros(data.p());
    let mut betas = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        solver.solve(lambda, &mut beta, cfg.tol, cfg.max_iter, None);
        betas.push(beta.clone());
    }
    Ok(LassoPath {
        lambdas: lambdas.to_vec(),
        betas,
        cv_errors: None,
    })
}

/// `2 * max_j |x_j' y|`, the smallest penalty with an all-zero solution.
pub fn lambda_max(data: &RegressionData) -> f64 {
    let xty = data.x().tr_mul(data.y());
    2.0 * xty.amax()
}

/// Log-spaced grid from `lambda_max` down to `1e-3 * lambda_max`.
pub fn lambda_grid_default(data: &RegressionData, length: usize) -> Result<Vec<f64>> {
    if length < 2 {
        return Err(Error::InvalidInput(format!("grid length must be >= 2, got {length}")));
    }
    let top = lambda_max(data);
    if top == 0.0 {
        return Err(Error::DegenerateResponse);
    }
    let last = length - 1;
    Ok((0..length)
        .map(|i| {
            if i == 0 {
                top
            } else if i == last {
                top * GRID_RATIO
            } else {
                top * GRID_RATIO.powf(i as f64 / last as f64)
            }
        })
        .collect())
}

/// Seeded near-equal fold labels: row `i` belongs to fold `labels[i]`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        labels[row] = pos % folds;
    }
    labels
}

/// Indices of training and test rows for `fold`.
pub fn split_fold(labels: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

fn resolve_grid(data: &RegressionData, cfg: &LassoConfig) -> Result<Vec<f64>> {
    match &cfg.lambda_grid {
        Some(g) => Ok(g.clone()),
        None => lambda_grid_default(data, DEFAULT_GRID_LEN),
    }
}

/// Mean out-of-fold squared error per grid value. `labels` assigns rows to
/// folds; when absent a seeded split into `cfg.cv_folds` is used.
fn cv_errors(data: &RegressionData, cfg: &LassoConfig, grid: &[f64], labels: Option<&[usize]>) -> Result<Vec<f64>> {
    let n = data.n();
    let owned;
    let labels = match labels {
        Some(l) if l.len() != n => {
            return Err(Error::InvalidInput("one fold label per row is required".into()));
        }
        Some(l) => l,
        None => {
            if cfg.cv_folds < 2 || cfg.cv_folds > n {
                return Err(Error::InvalidInput(format!(
                    "cv_folds must lie in [2, n], got {}",
                    cfg.cv_folds
                )));
            }
            owned = fold_assignment(n, cfg.cv_folds, cfg.seed);
            &owned
        }
    };
    let folds = labels.iter().max().map_or(0, |m| m + 1);
    let mut sse = vec![0.0; grid.len()];
    for fold in 0..folds {
        let (train, test) = split_fold(labels, fold);
        if test.is_empty() {
            continue;
        }
        let train_data = data.select_rows(&train)?;
        let path = lasso_path(&train_data, grid, cfg)?;
        for (k, beta) in path.betas.iter().enumerate() {
            for &i in &test {
                let pred = data.x().row(i).transpose().dot(beta);
                sse[k] += (data.y()[i] - pred).powi(2);
            }
        }
    }
    Ok(sse.into_iter().map(|s| s / n as f64).collect())
}

/// Cross-validated path: full-data coefficients plus mean out-of-fold
/// squared error per grid value.
pub fn cv_path(data: &RegressionData, cfg: &LassoConfig) -> Result<LassoPath> {
    cfg.validate()?;
    let grid = resolve_grid(data, cfg)?;
    let errors = cv_errors(data, cfg, &grid, None)?;
    let full = lasso_path(data, &grid, cfg)?;
    Ok(LassoPath {
        lambdas: grid,
        betas: full.betas,
        cv_errors: Some(errors),
    })
}

/// Grid value minimizing mean out-of-fold squared prediction error; ties go
/// to the larger penalty.
pub fn select_lambda_cv(data: &RegressionData, cfg: &LassoConfig) -> Result<f64> {
    select_lambda_with_labels(data, cfg, None)
}

/// [`select_lambda_cv`] with caller-supplied fold labels.
pub fn select_lambda_with_labels(data: &RegressionData, cfg: &LassoConfig, labels: Option<&[usize]>) -> Result<f64> {
    cfg.validate()?;
    if let Some(g) = &cfg.lambda_grid {
        if g.len() == 1 {
            return Ok(g[0]);
        }
    }
    let grid = resolve_grid(data, cfg)?;
    let errors = cv_errors(data, cfg, &grid, labels)?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    // visit from the largest lambda so strict improvement keeps the sparser tie
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut best = order[0];
    for &k in &order[1..] {
        if errors[k] < errors[best] {
            best = k;
        }
    }
    Ok(grid[best])
}

/// Penalty actually used by `cfg` on `data`.
pub fn resolve_lambda(data: &RegressionData, cfg: &LassoConfig) -> Result<f64> {
    match cfg.selection {
        LambdaSelection::Fixed => Ok(cfg.lambda),
        LambdaSelection::CrossValidation => select_lambda_cv(data, cfg),
    }
}
