//! Regression data model, Gram summaries, least squares and residual variances.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Design matrix and response of `y = X beta + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
    centering: Option<Centering>,
}

impl RegressionData {
    /// Builds a data set, requiring `n > p >= 1` and finite entries.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect();
        Self::with_names(x, y, names)
    }

    pub fn with_names(x: DMatrix<f64>, y: DVector<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::InvalidInput("design has no columns".into()));
        }
        if n <= p {
            return Err(Error::InvalidInput(format!(
                "need more rows than columns, got n = {n}, p = {p}"
            )));
        }
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "response has length {}, design has {n} rows",
                y.len()
            )));
        }
        if names.len() != p {
            return Err(Error::InvalidInput("column name count mismatch".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in data".into()));
        }
        Ok(RegressionData {
            x,
            y,
            names,
            centering: None,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Centering applied to produce this data set, if any.
    pub fn centering(&self) -> Option<&Centering> {
        self.centering.as_ref()
    }

    pub fn is_centered(&self) -> bool {
        self.centering.is_some()
    }

    /// Rows `idx` (in order, repeats allowed) as a new data set.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let x = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_fn(idx.len(), |i, _| self.y[idx[i]]);
        Self::with_names(x, y, self.names.clone())
    }

    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        let mut out = Self::with_names(self.x.clone(), y, self.names.clone())?;
        out.centering = self.centering.clone();
        Ok(out)
    }

    /// Centers every predictor column; original means are kept for prediction.
    pub fn center_columns(&self) -> RegressionData {
        let c = Centering::fit(self, CenteringOptions::default());
        c.apply(self)
    }

    pub fn predict(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }

    pub fn residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * beta
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CenteringOptions {
    /// Also subtract the response mean.
    #[serde(default)]
    pub center_response: bool,
    /// Also scale predictors to unit (population) standard deviation.
    #[serde(default)]
    pub standardize: bool,
}

/// Column statistics learned on one data set and applicable to another.
#[derive(Debug, Clone, PartialEq)]
pub struct Centering {
    pub column_means: Vec<f64>,
    pub column_scales: Option<Vec<f64>>,
    pub response_mean: Option<f64>,
}

impl Centering {
    pub fn fit(data: &RegressionData, opts: CenteringOptions) -> Centering {
        let n = data.n() as f64;
        let column_means: Vec<f64> = data.x.column_iter().map(|c| c.sum() / n).collect();
        let column_scales = opts.standardize.then(|| {
            data.x
                .column_iter()
                .zip(&column_means)
                .map(|(c, m)| {
                    let ss: f64 = c.iter().map(|v| (v - m).powi(2)).sum();
                    let sd = (ss / n).sqrt();
                    if sd > 0.0 {
                        sd
                    } else {
                        1.0
                    }
                })
                .collect()
        });
        let response_mean = opts.center_response.then(|| data.y.sum() / n);
        Centering {
            column_means,
            column_scales,
            response_mean,
        }
    }

    pub fn transform_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let m = self.column_means[j];
            let s = self.column_scales.as_ref().map_or(1.0, |s| s[j]);
            for v in col.iter_mut() {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn transform_y(&self, y: &DVector<f64>) -> DVector<f64> {
        match self.response_mean {
            Some(m) => y.map(|v| v - m),
            None => y.clone(),
        }
    }

    /// Response-scale prediction from transformed-scale coefficients.
    pub fn predict(&self, x_raw: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
        let pred = self.transform_x(x_raw) * beta;
        match self.response_mean {
            Some(m) => pred.map(|v| v + m),
            None => pred,
        }
    }

    pub fn apply(&self, data: &RegressionData) -> RegressionData {
        let x = self.transform_x(&data.x);
        let y = self.transform_y(&data.y);
        // Re-centering keeps means relative to the very first raw data.
        let combined = match &data.centering {
            Some(prev) if self.column_scales.is_none() && prev.column_scales.is_none() => {
                Centering {
                    column_means: prev
                        .column_means
                        .iter()
                        .zip(&self.column_means)
                        .map(|(a, b)| a + b)
                        .collect(),
                    column_scales: None,
                    response_mean: match (prev.response_mean, self.response_mean) {
                        (None, None) => None,
                        (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
                    },
                }
            }
            _ => self.clone(),
        };
        RegressionData {
            x,
            y,
            names: data.names.clone(),
            centering: Some(combined),
        }
    }
}

/// `X'X`, its inverse, and residual degrees of freedom `m = n - p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSummary {
    pub gram: DMatrix<f64>,
    pub gram_inv: DMatrix<f64>,
    pub dof: usize,
}

/// Minimum eigenvalue ratio accepted for `X'X`.
pub const SINGULAR_RATIO: f64 = 1e-10;

pub fn gram_summary(data: &RegressionData) -> Result<GramSummary> {
    let gram = linalg::symmetrize(data.x.tr_mul(&data.x));
    let ratio = linalg::eigen_ratio(&gram);
    if !(ratio > SINGULAR_RATIO) {
        return Err(Error::SingularDesign { ratio });
    }
    let gram_inv = linalg::spd_inverse(&gram, "X'X")?;
    Ok(GramSummary {
        gram,
        gram_inv,
        dof: data.n() - data.p(),
    })
}

/// Linear restriction `H beta = h` with `rank(H) = q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    h_mat: DMatrix<f64>,
    h_vec: DVector<f64>,
}

pub const RANK_TOL: f64 = 1e-10;

impl Restriction {
    pub fn new(h_mat: DMatrix<f64>, h_vec: DVector<f64>) -> Result<Self> {
        let (q, p) = h_mat.shape();
        if q == 0 || q > p {
            return Err(Error::InvalidInput(format!(
                "restriction must have 1 <= q <= p, got q = {q}, p = {p}"
            )));
        }
        if h_vec.len() != q {
            return Err(Error::InvalidInput(format!(
                "h has length {}, H has {q} rows",
                h_vec.len()
            )));
        }
        if h_mat.iter().chain(h_vec.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in restriction".into()));
        }
        let rank = linalg::rank(&h_mat, RANK_TOL);
        if rank != q {
            return Err(Error::RankDeficientRestriction { rank, expected: q });
        }
        Ok(Restriction { h_mat, h_vec })
    }

    pub fn from_rows(rows: &[Vec<f64>], h: &[f64]) -> Result<Self> {
        Self::new(linalg::matrix_from_rows(rows)?, DVector::from_column_slice(h))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h_mat
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.h_vec
    }

    pub fn q(&self) -> usize {
        self.h_mat.nrows()
    }

    pub fn p(&self) -> usize {
        self.h_mat.ncols()
    }

    /// `H beta - h`.
    pub fn violation(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.h_mat * beta - &self.h_vec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "OLS")]
    Ols,
    #[serde(rename = "ROLS")]
    Rols,
    #[serde(rename = "ULE")]
    Ule,
    #[serde(rename = "RLE")]
    Rle,
    #[serde(rename = "PTLE")]
    Ptle,
    #[serde(rename = "SSLE")]
    Ssle,
    #[serde(rename = "PRSSLE")]
    Prssle,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Ols => "OLS",
            EstimatorKind::Rols => "ROLS",
            EstimatorKind::Ule => "ULE",
            EstimatorKind::Rle => "RLE",
            EstimatorKind::Ptle => "PTLE",
            EstimatorKind::Ssle => "SSLE",
            EstimatorKind::Prssle => "PRSSLE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_uppercase().as_str() {
            "OLS" => EstimatorKind::Ols,
            "ROLS" => EstimatorKind::Rols,
            "ULE" => EstimatorKind::Ule,
            "RLE" => EstimatorKind::Rle,
            "PTLE" => EstimatorKind::Ptle,
            "SSLE" => EstimatorKind::Ssle,
            "PRSSLE" | "PRLE" => EstimatorKind::Prssle,
            _ => return None,
        })
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitFlag {
    /// Coordinate descent hit `max_iter` before the change fell below `tol`.
    NonConvergence,
    /// The test statistic was exactly zero; the restricted estimate was returned.
    DegenerateStatistic,
}

/// A coefficient vector tagged with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub beta: DVector<f64>,
    pub kind: EstimatorKind,
    pub test_stat: Option<f64>,
    /// `Some(true)` when the null restriction was accepted.
    pub decision: Option<bool>,
    pub shrink_factor: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub flags: Vec<FitFlag>,
}

impl EstimatorResult {
    pub fn new(beta: DVector<f64>, kind: EstimatorKind) -> Self {
        EstimatorResult {
            beta,
            kind,
            test_stat: None,
            decision: None,
            shrink_factor: None,
            alpha: None,
            lambda: None,
            flags: Vec::new(),
        }
    }

    pub fn has_flag(&self, flag: FitFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub(crate) fn expect_kind(&self, kinds: &[EstimatorKind], expected: &'static str) -> Result<()> {
        if kinds.contains(&self.kind) {
            Ok(())
        } else {
            Err(Error::WrongEstimatorKind {
                expected,
                found: self.kind.as_str(),
            })
        }
    }
}

/// Least squares `C^{-1} X'y` using the cached inverse.
pub fn ols_fit(data: &RegressionData, g: &GramSummary) -> EstimatorResult {
    let xty = data.x.tr_mul(&data.y);
    EstimatorResult::new(&g.gram_inv * xty, EstimatorKind::Ols)
}

fn rss_over_dof(data: &RegressionData, beta: &DVector<f64>, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidInput("degrees of freedom must be >= 1".into()));
    }
    Ok(data.residuals(beta).norm_squared() / m as f64)
}

/// `s_e^2 = RSS / m` from an OLS fit.
pub fn sigma2_ols(data: &RegressionData, fit: &EstimatorResult, m: usize) -> Result<f64> {
    fit.expect_kind(&[EstimatorKind::Ols], "OLS")?;
    rss_over_dof(data, &fit.beta, m)
}

/// `s_L^2 = RSS / m` from an unrestricted LASSO fit (still divided by `n - p`).
pub fn sigma2_lasso(data: &RegressionData, lasso_fit: &EstimatorResult, m: usize) -> Result<f64> {
    lasso_fit.expect_kind(&[EstimatorKind::Ule], "ULE")?;
    rss_over_dof(data, &lasso_fit.beta, m)
}
