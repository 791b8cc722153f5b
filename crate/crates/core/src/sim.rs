//! Monte Carlo relative efficiency of the estimators on equicorrelated
//! Gaussian designs.
//!
//! Every replicate draws its design and noise from a stream keyed by
//! `(seed, p, k, r index, replicate)`. The noncentrality is not part of the
//! key, so all points of the `delta2` grid share the same draws.

use std::fmt::Write as _;
use std::io::Write;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{select_lambda_cv, LassoConfig};
use crate::linalg::spd_inverse;
use crate::model::{gram_summary, EstimatorKind, RegressionData, Restriction};
use crate::par::{map_indexed, stream, ExecMode};
use crate::risk::fmt_num;
use crate::shrinkage::{fit_family_with, FamilyFit, TestOptions};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `lambda = c * sqrt(n)` for every replicate.
    #[default]
    FixedSqrtN,
    /// Ten-fold cross-validation inside every replicate.
    Cv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimDesign {
    pub n: usize,
    pub p_list: Vec<usize>,
    /// Number of leading nonzero coefficients; the remaining `p - k` are
    /// restricted to zero.
    pub k_nonzero: usize,
    pub r_list: Vec<f64>,
    pub delta2_list: Vec<f64>,
    pub reps: usize,
    pub sigma_eps: f64,
    pub alpha_list: Vec<f64>,
    pub seed: u64,
    pub lambda_mode: LambdaMode,
    /// `c` in `lambda = c * sqrt(n)`.
    pub lambda_c: f64,
    /// Also report ULE against OLS for every `k` in `1..p`.
    pub ule_k_sweep: bool,
    pub test: TestOptions,
    /// Largest tolerated share of failed replicates in a cell.
    pub max_failure_rate: f64,
}

impl Default for SimDesign {
    fn default() -> Self {
        SimDesign {
            n: 100,
            p_list: vec![10, 20, 30],
            k_nonzero: 1,
            r_list: vec![0.0, 0.2, 0.9],
            delta2_list: vec![0.0, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 30.0, 50.0],
            reps: 2000,
            sigma_eps: 5.0,
            alpha_list: vec![0.15, 0.20, 0.25],
            seed: 2024,
            lambda_mode: LambdaMode::FixedSqrtN,
            lambda_c: 0.5,
            ule_k_sweep: false,
            test: TestOptions::default(),
            max_failure_rate: 0.01,
        }
    }
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.reps == 0 {
            return bad("reps must be >= 1".into());
        }
        if self.p_list.is_empty() || self.r_list.is_empty() || self.delta2_list.is_empty() {
            return bad("p_list, r_list and delta2_list must be nonempty".into());
        }
        if self.alpha_list.is_empty() {
            return bad("alpha_list must be nonempty".into());
        }
        for &p in &self.p_list {
            if p == 0 || p >= self.n {
                return bad(format!("need 1 <= p < n, got p = {p}, n = {}", self.n));
            }
            if self.k_nonzero >= p {
                return bad(format!("k_nonzero = {} leaves no restricted coefficient at p = {p}", self.k_nonzero));
            }
        }
        if self.r_list.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("equicorrelation must lie in [0, 1)".into());
        }
        if self.delta2_list.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return bad("delta2 values must be >= 0".into());
        }
        if !(self.sigma_eps > 0.0) {
            return bad("sigma_eps must be > 0".into());
        }
        if !(self.lambda_c >= 0.0) {
            return bad("lambda_c must be >= 0".into());
        }
        for &a in &self.alpha_list {
            crate::special::check_alpha(a)?;
        }
        Ok(())
    }
}

/// Unit diagonal, constant off-diagonal `r`.
pub fn equicorrelation(p: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { r })
}

/// `n` rows drawn i.i.d. from `N(0, Sigma)` as `Z L'` with `Sigma = L L'`.
pub fn gen_design_with<R: Rng + ?Sized>(n: usize, p: usize, r: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidInput(format!("equicorrelation must lie in [0, 1), got {r}")));
    }
    let chol = equicorrelation(p, r)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("equicorrelation matrix"))?;
    let z: DMatrix<f64> = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng));
    Ok(z * chol.l().transpose())
}

pub fn gen_design(n: usize, p: usize, r: f64, seed: u64) -> Result<DMatrix<f64>> {
    gen_design_with(n, p, r, &mut stream(seed, &[]))
}

/// `[0 | I]` with `p - k` rows and zero right-hand side.
pub fn trailing_restriction(p: usize, k: usize) -> Result<Restriction> {
    if k >= p {
        return Err(Error::InvalidInput(format!("k = {k} must be below p = {p}")));
    }
    let q = p - k;
    let h = DMatrix::from_fn(q, p, |i, j| if j == k + i { 1.0 } else { 0.0 });
    Restriction::new(h, DVector::zeros(q))
}

/// `n (H b - h)' (H Sigma^{-1} H')^{-1} (H b - h) / sigma^2`.
pub fn delta2_of_beta(beta: &DVector<f64>, r: &Restriction, sigma: &DMatrix<f64>, sigma_eps: f64, n: usize) -> Result<f64> {
    let s_inv = spd_inverse(sigma, "Sigma")?;
    let core = spd_inverse(&(r.matrix() * s_inv * r.matrix().transpose()), "H Sigma^-1 H'")?;
    let d = r.violation(beta);
    Ok(n as f64 * d.dot(&(core * &d)) / (sigma_eps * sigma_eps))
}

/// True coefficients with `k` leading ones and the trailing block set to
/// `tau / sqrt(p - k)` per entry, `tau` chosen to hit `delta2`.
pub fn beta_for_delta2(
    p: usize,
    k: usize,
    delta2: f64,
    r: f64,
    sigma_eps: f64,
    n: usize,
) -> Result<(DVector<f64>, Restriction)> {
    if !(delta2 >= 0.0) || !delta2.is_finite() {
        return Err(Error::InvalidInput(format!("delta2 must be >= 0, got {delta2}")));
    }
    let restriction = trailing_restriction(p, k)?;
    let q = p - k;
    let mut beta = DVector::zeros(p);
    beta.rows_mut(0, k).fill(1.0);
    if delta2 > 0.0 {
        let sigma = equicorrelation(p, r);
        let s_inv = spd_inverse(&sigma, "Sigma")?;
        let core = spd_inverse(
            &(restriction.matrix() * s_inv * restriction.matrix().transpose()),
            "H Sigma^-1 H'",
        )?;
        let u = DVector::from_element(q, 1.0 / (q as f64).sqrt());
        let tau = sigma_eps * (delta2 / (n as f64 * u.dot(&(core * &u)))).sqrt();
        beta.rows_mut(k, q).copy_from(&(u * tau));
    }
    Ok((beta, restriction))
}

/// Column labels of a cell, in loss order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub estimator: EstimatorKind,
    pub alpha: Option<f64>,
}

fn family_columns(alphas: &[f64]) -> Vec<Column> {
    let mut cols = vec![
        Column { estimator: EstimatorKind::Ols, alpha: None },
        Column { estimator: EstimatorKind::Ule, alpha: None },
        Column { estimator: EstimatorKind::Rle, alpha: None },
    ];
    cols.extend(alphas.iter().map(|&a| Column {
        estimator: EstimatorKind::Ptle,
        alpha: Some(a),
    }));
    cols.push(Column { estimator: EstimatorKind::Ssle, alpha: None });
    cols.push(Column { estimator: EstimatorKind::Prssle, alpha: None });
    cols
}

fn family_losses(fam: &FamilyFit, beta: &DVector<f64>) -> Vec<f64> {
    let loss = |b: &DVector<f64>| (b - beta).norm_squared();
    let mut v = vec![loss(&fam.ols.beta), loss(&fam.ule.beta), loss(&fam.rle.beta)];
    v.extend(fam.ptle.iter().map(|e| loss(&e.beta)));
    v.push(fam.ssle.as_ref().map_or(f64::NAN, |e| loss(&e.beta)));
    v.push(fam.prssle.as_ref().map_or(f64::NAN, |e| loss(&e.beta)));
    v
}

/// Empirical risks of one `(p, k, r, delta2)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub p: usize,
    pub k: usize,
    pub r: f64,
    pub delta2: f64,
    pub columns: Vec<Column>,
    /// Mean squared error per column.
    pub risk: Vec<f64>,
    /// `risk(ULE) / risk(column)`.
    pub rel_eff: Vec<f64>,
    /// Delta-method standard error of `rel_eff`.
    pub mc_se: Vec<f64>,
    pub reps_used: usize,
    pub failed: usize,
    pub nonconverged: usize,
}

/// Ratio of means with its delta-method standard error, from paired samples.
pub fn ratio_with_se(num: &[f64], den: &[f64]) -> (f64, f64) {
    let n = num.len() as f64;
    let ma = num.iter().sum::<f64>() / n;
    let mb = den.iter().sum::<f64>() / n;
    let ratio = ma / mb;
    if num.len() < 2 {
        return (ratio, f64::NAN);
    }
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for (a, b) in num.iter().zip(den) {
        vaa += (a - ma) * (a - ma);
        vbb += (b - mb) * (b - mb);
        vab += (a - ma) * (b - mb);
    }
    let d = n - 1.0;
    let (vaa, vbb, vab) = (vaa / d, vbb / d, vab / d);
    let var = (vaa / (mb * mb) - 2.0 * ma * vab / mb.powi(3) + ma * ma * vbb / mb.powi(4)) / n;
    (ratio, var.max(0.0).sqrt())
}

struct Replicate {
    /// One loss vector per delta2 point, or `None` when the fit failed.
    losses: Vec<Option<Vec<f64>>>,
    nonconverged: usize,
}

fn cell_lambda(design: &SimDesign, data: &RegressionData, key: u64) -> Result<f64> {
    match design.lambda_mode {
        LambdaMode::FixedSqrtN => Ok(design.lambda_c * (design.n as f64).sqrt()),
        LambdaMode::Cv => {
            let cfg = LassoConfig {
                seed: key,
                ..LassoConfig::cross_validated(key)
            };
            select_lambda_cv(data, &cfg)
        }
    }
}

/// All `delta2` points for one `(p, k, r)` combination.
pub fn run_block(design: &SimDesign, p: usize, k: usize, r_index: usize, mode: ExecMode) -> Result<Vec<CellResult>> {
    design.validate()?;
    let r = *design
        .r_list
        .get(r_index)
        .ok_or_else(|| Error::InvalidInput(format!("r index {r_index} out of range")))?;
    let n = design.n;
    let truths = design
        .delta2_list
        .iter()
        .map(|&d| beta_for_delta2(p, k, d, r, design.sigma_eps, n))
        .collect::<Result<Vec<_>>>()?;
    let restriction = truths[0].1.clone();
    let columns = family_columns(&design.alpha_list);
    let lasso_cfg = LassoConfig::default();

    let reps: Vec<Replicate> = map_indexed(mode, design.reps, |rep| {
        let mut rng = stream(design.seed, &[p as u64, k as u64, r_index as u64, rep as u64]);
        let fail = || Replicate {
            losses: vec![None; truths.len()],
            nonconverged: 0,
        };
        let Ok(x) = gen_design_with(n, p, r, &mut rng) else {
            return fail();
        };
        let eps = DVector::from_fn(n, |_, _| design.sigma_eps * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let Ok(base) = RegressionData::new(x.clone(), eps.clone()) else {
            return fail();
        };
        let Ok(g) = gram_summary(&base) else {
            return fail();
        };
        let lambda_key = crate::par::derive_seed(design.seed, &[p as u64, k as u64, r_index as u64, rep as u64, 1]);
        let mut nonconverged = 0;
        let losses = truths
            .iter()
            .map(|(beta, _)| {
                let y = &x * beta + &eps;
                let data = base.with_response(y).ok()?;
                let lambda = cell_lambda(design, &data, lambda_key).ok()?;
                let fam = fit_family_with(&data, &g, &restriction, lambda, &lasso_cfg, &design.alpha_list, design.test).ok()?;
                if fam.ule.has_flag(crate::model::FitFlag::NonConvergence) {
                    nonconverged += 1;
                }
                Some(family_losses(&fam, beta))
            })
            .collect();
        Replicate { losses, nonconverged }
    });

    let nonconverged = reps.iter().map(|r| r.nonconverged).sum();
    let mut cells = Vec::with_capacity(truths.len());
    for (d, &delta2) in design.delta2_list.iter().enumerate() {
        let ok: Vec<&Vec<f64>> = reps.iter().filter_map(|r| r.losses[d].as_ref()).collect();
        let failed = design.reps - ok.len();
        if failed as f64 > design.max_failure_rate * design.reps as f64 {
            return Err(Error::TooManyFailures {
                failed,
                total: design.reps,
            });
        }
        if failed > 0 {
            warn!("p={p} k={k} r={r} delta2={delta2}: {failed} replicates failed");
        }
        let column = |c: usize| ok.iter().map(|l| l[c]).collect::<Vec<f64>>();
        let ule = column(1);
        let mut risk = Vec::new();
        let mut rel_eff = Vec::new();
        let mut mc_se = Vec::new();
        for c in 0..columns.len() {
            let loss = column(c);
            risk.push(loss.iter().sum::<f64>() / loss.len() as f64);
            let (re, se) = ratio_with_se(&ule, &loss);
            rel_eff.push(re);
            mc_se.push(se);
        }
        cells.push(CellResult {
            p,
            k,
            r,
            delta2,
            columns: columns.clone(),
            risk,
            rel_eff,
            mc_se,
            reps_used: ok.len(),
            failed,
            nonconverged,
        });
    }
    Ok(cells)
}

/// A single `(p, k, r, delta2)` cell.
pub fn run_cell(design: &SimDesign, p: usize, k: usize, r_index: usize, delta2: f64, mode: ExecMode) -> Result<CellResult> {
    let one = SimDesign {
        delta2_list: vec![delta2],
        ..design.clone()
    };
    Ok(run_block(&one, p, k, r_index, mode)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub p: usize,
    pub k: usize,
    pub r: f64,
    pub delta2: f64,
    pub estimator: EstimatorKind,
    pub alpha: Option<f64>,
    pub rel_eff: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyTable {
    pub design: SimDesign,
    pub rows: Vec<EfficiencyRow>,
    /// Per-cell detail including empirical risks and failure counts.
    pub cells: Vec<CellResult>,
    /// How the `k` column is to be read.
    pub notes: Vec<String>,
}

/// Full sweep over `p`, `r` and `delta2`, plus the optional ULE-vs-OLS sweep
/// over `k`.
pub fn run_experiment(design: &SimDesign, mode: ExecMode) -> Result<EfficiencyTable> {
    design.validate()?;
    let mut cells = Vec::new();
    for &p in &design.p_list {
        for ri in 0..design.r_list.len() {
            info!("simulating p={p} r={}", design.r_list[ri]);
            cells.extend(run_block(design, p, design.k_nonzero, ri, mode)?);
            if design.ule_k_sweep {
                for k in 1..p {
                    if k == design.k_nonzero {
                        continue;
                    }
                    cells.extend(run_block(design, p, k, ri, mode)?);
                }
            }
        }
    }
    let mut rows = Vec::new();
    for cell in &cells {
        for (c, col) in cell.columns.iter().enumerate() {
            let family = cell.k == design.k_nonzero;
            if !family && col.estimator != EstimatorKind::Ols {
                continue;
            }
            rows.push(EfficiencyRow {
                p: cell.p,
                k: cell.k,
                r: cell.r,
                delta2: cell.delta2,
                estimator: col.estimator,
                alpha: col.alpha,
                rel_eff: cell.rel_eff[c],
                mc_se: cell.mc_se[c],
            });
        }
    }
    let mut notes = vec![format!(
        "restricted estimators use k = {} nonzero coefficients and restrict the remaining p - k to zero",
        design.k_nonzero
    )];
    if design.ule_k_sweep {
        notes.push("rows with k != k_nonzero report only OLS, i.e. risk(ULE) / risk(OLS) at that sparsity".into());
    }
    notes.push(format!("lambda mode: {:?}", design.lambda_mode));
    Ok(EfficiencyTable {
        design: design.clone(),
        rows,
        cells,
        notes,
    })
}

impl EfficiencyTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "k", "r", "delta2", "estimator", "alpha", "rel_eff", "mc_se"])?;
        for r in &self.rows {
            w.write_record([
                r.p.to_string(),
                r.k.to_string(),
                fmt_num(r.r),
                fmt_num(r.delta2),
                r.estimator.to_string(),
                r.alpha.map(fmt_num).unwrap_or_default(),
                fmt_num(r.rel_eff),
                fmt_num(r.mc_se),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn find(&self, p: usize, r: f64, delta2: f64, estimator: EstimatorKind, alpha: Option<f64>) -> Option<&EfficiencyRow> {
        self.rows.iter().find(|row| {
            row.p == p
                && row.r == r
                && row.delta2 == delta2
                && row.estimator == estimator
                && row.alpha == alpha
                && (row.k == self.design.k_nonzero || estimator == EstimatorKind::Ols)
        })
    }

    /// One block per `(p, r)`: rows are `delta2`, columns the estimators.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.design;
        for &p in &d.p_list {
            for &r in &d.r_list {
                let _ = writeln!(s, "p = {p}, r = {r}, k = {}", d.k_nonzero);
                let cols = family_columns(&d.alpha_list);
                let label = |c: &Column| match c.alpha {
                    Some(a) => format!("{}({a})", c.estimator),
                    None => c.estimator.to_string(),
                };
                let mut header = format!("{:>8}", "delta2");
                for c in cols.iter().skip(2) {
                    let _ = write!(header, " {:>12}", label(c));
                }
                let ks: Vec<usize> = if d.ule_k_sweep { (1..p).collect() } else { Vec::new() };
                for k in &ks {
                    let _ = write!(header, " {:>8}", format!("k={k}"));
                }
                let _ = writeln!(s, "{header}");
                for &d2 in &d.delta2_list {
                    let _ = write!(s, "{d2:>8}");
                    for c in cols.iter().skip(2) {
                        let v = self.find(p, r, d2, c.estimator, c.alpha).map_or(f64::NAN, |x| x.rel_eff);
                        let _ = write!(s, " {v:>12.4}");
                    }
                    for &k in &ks {
                        let v = self
                            .rows
                            .iter()
                            .find(|x| x.p == p && x.r == r && x.delta2 == d2 && x.k == k && x.estimator == EstimatorKind::Ols)
                            .map_or(f64::NAN, |x| x.rel_eff);
                        let _ = write!(s, " {v:>8.4}");
                    }
                    let _ = writeln!(s);
                }
                let _ = writeln!(s);
            }
        }
        s
    }
}
