//! Restricted, preliminary-test and Stein-type estimators built from a
//! LASSO fit and a linear restriction `H b = h`.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{lasso_fit, resolve_lambda, LassoConfig};
use crate::linalg::spd_inverse;
use crate::model::{
    gram_summary, ols_fit, sigma2_lasso, sigma2_ols, EstimatorKind, EstimatorResult, FitFlag,
    GramSummary, RegressionData, Restriction,
};
use crate::special::{check_alpha, chisq_upper_quantile, f_upper_quantile};

/// Reference distribution for the critical value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalRule {
    /// Upper quantile of chi-square with `q` degrees of freedom.
    #[default]
    ChiSquare,
    /// `q` times the upper quantile of `F(q, m)`.
    FisherF,
}

/// Which fit feeds the Wald statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    /// OLS coefficients with `s_e^2`.
    #[default]
    OlsResidual,
    /// LASSO coefficients with `s_L^2`.
    LassoResidual,
}

/// Everything derived from the Gram matrix and the restriction that the
/// estimators share.
#[derive(Debug, Clone)]
pub struct ShrinkageContext {
    g: GramSummary,
    r: Restriction,
    /// `C^{-1} H' (H C^{-1} H')^{-1}`, p x q.
    correction_kernel: DMatrix<f64>,
    /// `(H C^{-1} H')^{-1}`, q x q.
    wald_core: DMatrix<f64>,
    k_n: f64,
    alpha: f64,
    rule: CriticalRule,
    critical_value: f64,
}

impl ShrinkageContext {
    pub fn new(g: GramSummary, r: Restriction, alpha: f64, rule: CriticalRule) -> Result<Self> {
        let p = g.gram.nrows();
        if r.p() != p {
            return Err(Error::InvalidInput(format!(
                "restriction has {} columns but the design has {p}",
                r.p()
            )));
        }
        let h = r.matrix();
        let ci_ht = &g.gram_inv * h.transpose();
        let wald_core = spd_inverse(&(h * &ci_ht), "H C^-1 H'")?;
        let correction_kernel = ci_ht * &wald_core;
        let q = r.q() as f64;
        let m = g.dof as f64;
        let k_n = m * (q - 2.0) / (m + 2.0);
        let critical_value = critical_value(alpha, rule, r.q(), g.dof)?;
        Ok(ShrinkageContext {
            g,
            r,
            correction_kernel,
            wald_core,
            k_n,
            alpha,
            rule,
            critical_value,
        })
    }

    /// Same context with a different test level.
    pub fn at_level(&self, alpha: f64) -> Result<Self> {
        let mut ctx = self.clone();
        ctx.critical_value = critical_value(alpha, self.rule, self.r.q(), self.g.dof)?;
        ctx.alpha = alpha;
        Ok(ctx)
    }

    pub fn gram(&self) -> &GramSummary {
        &self.g
    }

    pub fn restriction(&self) -> &Restriction {
        &self.r
    }

    pub fn correction_kernel(&self) -> &DMatrix<f64> {
        &self.correction_kernel
    }

    pub fn wald_core(&self) -> &DMatrix<f64> {
        &self.wald_core
    }

    /// `m (q - 2) / (m + 2)`; positive only for `q >= 3`.
    pub fn k_n(&self) -> f64 {
        self.k_n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn critical_value(&self) -> f64 {
        self.critical_value
    }

    pub fn rule(&self) -> CriticalRule {
        self.rule
    }
}

fn critical_value(alpha: f64, rule: CriticalRule, q: usize, m: usize) -> Result<f64> {
    check_alpha(alpha)?;
    match rule {
        CriticalRule::ChiSquare => chisq_upper_quantile(alpha, q),
        CriticalRule::FisherF => Ok(q as f64 * f_upper_quantile(alpha, q, m)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub variance_source: VarianceSource,
    pub accepted: bool,
    pub alpha: f64,
    pub critical_value: f64,
}

impl TestOutcome {
    /// Re-decide at another level without recomputing the statistic.
    pub fn at_level(&self, ctx: &ShrinkageContext) -> TestOutcome {
        TestOutcome {
            accepted: self.statistic <= ctx.critical_value,
            alpha: ctx.alpha,
            critical_value: ctx.critical_value,
            ..*self
        }
    }
}

/// Projects `base` onto `H b = h`: ULE gives RLE and OLS gives restricted OLS.
pub fn restrict(base: &EstimatorResult, ctx: &ShrinkageContext) -> Result<EstimatorResult> {
    base.expect_kind(&[EstimatorKind::Ule, EstimatorKind::Ols], "ULE or OLS")?;
    let kind = if base.kind == EstimatorKind::Ule {
        EstimatorKind::Rle
    } else {
        EstimatorKind::Rols
    };
    let d = ctx.r.violation(&base.beta);
    let beta = &base.beta - &ctx.correction_kernel * d;
    let mut out = EstimatorResult::new(beta, kind);
    out.lambda = base.lambda;
    out.flags = base.flags.clone();
    Ok(out)
}

pub fn restricted_lasso(base: &EstimatorResult, ctx: &ShrinkageContext) -> Result<EstimatorResult> {
    base.expect_kind(&[EstimatorKind::Ule], "ULE")?;
    restrict(base, ctx)
}

/// `(H b - h)' (H C^{-1} H')^{-1} (H b - h) / s2`.
pub fn wald_statistic(
    beta_hat: &DVector<f64>,
    ctx: &ShrinkageContext,
    s2: f64,
    source: VarianceSource,
) -> Result<TestOutcome> {
    if !(s2 > 0.0) || !s2.is_finite() {
        return Err(Error::InvalidInput(format!("variance estimate must be > 0, got {s2}")));
    }
    let d = ctx.r.violation(beta_hat);
    let statistic = (d.dot(&(&ctx.wald_core * &d)) / s2).max(0.0);
    Ok(TestOutcome {
        statistic,
        variance_source: source,
        accepted: statistic <= ctx.critical_value,
        alpha: ctx.alpha,
        critical_value: ctx.critical_value,
    })
}

fn check_pair(base: &EstimatorResult, restricted: &EstimatorResult) -> Result<()> {
    base.expect_kind(&[EstimatorKind::Ule], "ULE")?;
    restricted.expect_kind(&[EstimatorKind::Rle], "RLE")?;
    if base.beta.len() != restricted.beta.len() {
        return Err(Error::InvalidInput("estimates have different lengths".into()));
    }
    Ok(())
}

fn derived(beta: DVector<f64>, kind: EstimatorKind, base: &EstimatorResult, test: &TestOutcome) -> EstimatorResult {
    let mut out = EstimatorResult::new(beta, kind);
    out.test_stat = Some(test.statistic);
    out.decision = Some(test.accepted);
    out.alpha = Some(test.alpha);
    out.lambda = base.lambda;
    out.flags = base.flags.clone();
    out
}

/// RLE when the test accepts, ULE otherwise. The output is a copy of one of
/// the two inputs.
pub fn preliminary_test_lasso(
    base: &EstimatorResult,
    restricted: &EstimatorResult,
    test: &TestOutcome,
) -> Result<EstimatorResult> {
    check_pair(base, restricted)?;
    let beta = if test.accepted {
        restricted.beta.clone()
    } else {
        base.beta.clone()
    };
    Ok(derived(beta, EstimatorKind::Ptle, base, test))
}

/// `b - f (b - r)` coordinatewise. Shared by both Stein-type estimators so
/// they agree bit for bit when the positive part is inactive.
fn shrink_toward(base: &DVector<f64>, restricted: &DVector<f64>, factor: f64) -> DVector<f64> {
    base.zip_map(restricted, |b, r| b - factor * (b - r))
}

fn stein_prelude(test: &TestOutcome, ctx: &ShrinkageContext) -> Result<()> {
    if ctx.r.q() < 3 {
        return Err(Error::QTooSmall(ctx.r.q()));
    }
    if !(test.statistic >= 0.0) {
        return Err(Error::InvalidInput("test statistic must be >= 0".into()));
    }
    Ok(())
}

/// `ULE - (k_n / L_n)(ULE - RLE)`.
pub fn stein_shrinkage_lasso(
    base: &EstimatorResult,
    restricted: &EstimatorResult,
    test: &TestOutcome,
    ctx: &ShrinkageContext,
) -> Result<EstimatorResult> {
    check_pair(base, restricted)?;
    stein_prelude(test, ctx)?;
    if test.statistic == 0.0 {
        let mut out = derived(restricted.beta.clone(), EstimatorKind::Ssle, base, test);
        out.flags.push(FitFlag::DegenerateStatistic);
        return Ok(out);
    }
    let factor = ctx.k_n / test.statistic;
    let mut out = derived(
        shrink_toward(&base.beta, &restricted.beta, factor),
        EstimatorKind::Ssle,
        base,
        test,
    );
    out.shrink_factor = Some(factor);
    Ok(out)
}

/// Stein-type estimator with the shrinkage capped at the restricted fit.
pub fn positive_rule_lasso(
    base: &EstimatorResult,
    restricted: &EstimatorResult,
    test: &TestOutcome,
    ctx: &ShrinkageContext,
) -> Result<EstimatorResult> {
    check_pair(base, restricted)?;
    stein_prelude(test, ctx)?;
    if test.statistic <= ctx.k_n {
        let mut out = derived(restricted.beta.clone(), EstimatorKind::Prssle, base, test);
        out.shrink_factor = Some(1.0);
        if test.statistic == 0.0 {
            out.flags.push(FitFlag::DegenerateStatistic);
        }
        return Ok(out);
    }
    let factor = ctx.k_n / test.statistic;
    let mut out = derived(
        shrink_toward(&base.beta, &restricted.beta, factor),
        EstimatorKind::Prssle,
        base,
        test,
    );
    out.shrink_factor = Some(factor);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestOptions {
    pub variance_source: VarianceSource,
    pub rule: CriticalRule,
}

/// Every estimator for one data set, with PTLE evaluated at several levels.
#[derive(Debug, Clone)]
pub struct FamilyFit {
    pub ols: EstimatorResult,
    pub ule: EstimatorResult,
    pub rle: EstimatorResult,
    /// One entry per requested level, in the order given.
    pub ptle: Vec<EstimatorResult>,
    pub ssle: Option<EstimatorResult>,
    pub prssle: Option<EstimatorResult>,
    /// The statistic with its decision at the first level.
    pub test: TestOutcome,
    pub lambda: f64,
    pub warnings: Vec<String>,
}

/// Fits every estimator at a known penalty, reusing a precomputed Gram
/// summary.
pub fn fit_family_with(
    data: &RegressionData,
    g: &GramSummary,
    r: &Restriction,
    lambda: f64,
    cfg: &LassoConfig,
    alphas: &[f64],
    opts: TestOptions,
) -> Result<FamilyFit> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput("at least one test level is required".into()));
    }
    let ctx = ShrinkageContext::new(g.clone(), r.clone(), alphas[0], opts.rule)?;
    let ols = ols_fit(data, g);
    let ule = lasso_fit(data, &LassoConfig { lambda, ..cfg.clone() })?;
    let rle = restrict(&ule, &ctx)?;
    let test = match opts.variance_source {
        VarianceSource::OlsResidual => {
            let s2 = sigma2_ols(data, &ols, g.dof)?;
            wald_statistic(&ols.beta, &ctx, s2, opts.variance_source)?
        }
        VarianceSource::LassoResidual => {
            let s2 = sigma2_lasso(data, &ule, g.dof)?;
            wald_statistic(&ule.beta, &ctx, s2, opts.variance_source)?
        }
    };
    let mut ptle = Vec::with_capacity(alphas.len());
    for (i, &a) in alphas.iter().enumerate() {
        let level = if i == 0 { ctx.clone() } else { ctx.at_level(a)? };
        ptle.push(preliminary_test_lasso(&ule, &rle, &test.at_level(&level))?);
    }
    let mut warnings = Vec::new();
    let (ssle, prssle) = if r.q() >= 3 {
        (
            Some(stein_shrinkage_lasso(&ule, &rle, &test, &ctx)?),
            Some(positive_rule_lasso(&ule, &rle, &test, &ctx)?),
        )
    } else {
        let msg = format!(
            "SSLE and PRSSLE need at least 3 restrictions (q = {}); omitted",
            r.q()
        );
        warn!("{msg}");
        warnings.push(msg);
        (None, None)
    };
    Ok(FamilyFit {
        ols,
        ule,
        rle,
        ptle,
        ssle,
        prssle,
        test,
        lambda,
        warnings,
    })
}

/// Resolves the penalty from `cfg` and fits every estimator.
pub fn fit_family(
    data: &RegressionData,
    r: &Restriction,
    cfg: &LassoConfig,
    alphas: &[f64],
    opts: TestOptions,
) -> Result<FamilyFit> {
    let g = gram_summary(data)?;
    let lambda = resolve_lambda(data, cfg)?;
    fit_family_with(data, &g, r, lambda, cfg, alphas, opts)
}

/// The five LASSO-based estimators at a single level.
#[derive(Debug, Clone)]
pub struct FitSet {
    pub estimates: BTreeMap<EstimatorKind, EstimatorResult>,
    pub test: TestOutcome,
    pub lambda: f64,
    pub warnings: Vec<String>,
}

impl FitSet {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorResult> {
        self.estimates.get(&kind)
    }
}

pub fn fit_all(
    data: &RegressionData,
    r: &Restriction,
    cfg: &LassoConfig,
    alpha: f64,
    variance_source: VarianceSource,
) -> Result<FitSet> {
    let opts = TestOptions {
        variance_source,
        ..Default::default()
    };
    let fam = fit_family(data, r, cfg, &[alpha], opts)?;
    Ok(FitSet::from_family(fam))
}

impl FitSet {
    pub fn from_family(fam: FamilyFit) -> FitSet {
        let mut estimates = BTreeMap::new();
        let mut ptle = fam.ptle;
        for e in [fam.ule, fam.rle, ptle.swap_remove(0)]
            .into_iter()
            .chain(fam.ssle)
            .chain(fam.prssle)
        {
            estimates.insert(e.kind, e);
        }
        FitSet {
            estimates,
            test: fam.test,
            lambda: fam.lambda,
            warnings: fam.warnings,
        }
    }
}
