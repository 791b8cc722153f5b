//! Asymptotic bias and quadratic risk of the five LASSO-based estimators
//! under local alternatives `H b = h + xi / sqrt(n)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, rank, spd_inverse, symmetrize, trace_product};
use crate::model::{EstimatorKind, RANK_TOL};
use crate::par::{map_indexed, ExecMode};
use crate::special::{
    check_alpha, chisq_upper_quantile, inv_moment, noncentral_chisq_cdf, truncated_shrink_moment,
    InvPower,
};

/// Inputs of the risk formulas, with the projection quantities cached.
#[derive(Debug, Clone)]
pub struct RiskScenario {
    sigma2: f64,
    c: DMatrix<f64>,
    w: DMatrix<f64>,
    h_mat: DMatrix<f64>,
    h_vec: DVector<f64>,
    xi: DVector<f64>,
    alpha: f64,
    /// Apply `W` to the shrinkage trace terms of SSLE and PRSSLE.
    pub weighted_shrink_terms: bool,
    c_inv: DMatrix<f64>,
    hch_inv: DMatrix<f64>,
    a: DMatrix<f64>,
    delta: DVector<f64>,
}

impl RiskScenario {
    pub fn new(
        c: DMatrix<f64>,
        w: DMatrix<f64>,
        h_mat: DMatrix<f64>,
        h_vec: DVector<f64>,
        xi: DVector<f64>,
        sigma2: f64,
        alpha: f64,
    ) -> Result<Self> {
        let p = c.nrows();
        let q = h_mat.nrows();
        if c.ncols() != p || w.nrows() != p || w.ncols() != p || h_mat.ncols() != p {
            return Err(Error::InvalidInput("scenario matrices have inconsistent shapes".into()));
        }
        if h_vec.len() != q || xi.len() != q {
            return Err(Error::InvalidInput(format!("h and xi must have length q = {q}")));
        }
        if q == 0 || q > p {
            return Err(Error::InvalidInput(format!("need 1 <= q <= p, got q = {q}, p = {p}")));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!("sigma2 must be > 0, got {sigma2}")));
        }
        check_alpha(alpha)?;
        if (&w - w.transpose()).amax() > 1e-12 * (1.0 + w.amax()) {
            return Err(Error::InvalidInput("weight matrix must be symmetric".into()));
        }
        let r = rank(&h_mat, RANK_TOL);
        if r != q {
            return Err(Error::RankDeficientRestriction { rank: r, expected: q });
        }
        let c_inv = spd_inverse(&c, "C")?;
        let ci_ht = &c_inv * h_mat.transpose();
        let hch_inv = spd_inverse(&(&h_mat * &ci_ht), "H C^-1 H'")?;
        let kernel = &ci_ht * &hch_inv;
        let a = symmetrize(&c_inv - &kernel * ci_ht.transpose());
        let delta = &kernel * &xi;
        Ok(RiskScenario {
            sigma2,
            c,
            w,
            h_mat,
            h_vec,
            xi,
            alpha,
            weighted_shrink_terms: false,
            c_inv,
            hch_inv,
            a,
            delta,
        })
    }

    /// `p = 4`, `q = 3` configuration with `C = W = I`, `h = 0` and
    /// `xi = (1, 1, 1)`.
    pub fn paper_default(sigma2: f64, alpha: f64) -> Result<Self> {
        let h = DMatrix::from_row_slice(
            3,
            4,
            &[1.0, -1.0, 3.0, 1.0, 3.0, 2.0, 1.0, 0.0, 4.0, -2.0, 0.0, 5.0],
        );
        RiskScenario::new(
            DMatrix::identity(4, 4),
            DMatrix::identity(4, 4),
            h,
            DVector::zeros(3),
            DVector::from_element(3, 1.0),
            sigma2,
            alpha,
        )
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn q(&self) -> usize {
        self.h_mat.nrows()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn h_mat(&self) -> &DMatrix<f64> {
        &self.h_mat
    }

    pub fn h_vec(&self) -> &DVector<f64> {
        &self.h_vec
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }

    pub fn c_inv(&self) -> &DMatrix<f64> {
        &self.c_inv
    }

    /// `C^{-1} - C^{-1} H' (H C^{-1} H')^{-1} H C^{-1}`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `C^{-1} H' (H C^{-1} H')^{-1} xi`.
    pub fn delta(&self) -> &DVector<f64> {
        &self.delta
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(RiskScenario {
            alpha,
            ..self.clone()
        })
    }

    /// Same scenario with `xi` rescaled along its direction so that the
    /// noncentrality equals `delta2`.
    pub fn at_delta2(&self, delta2: f64) -> Result<Self> {
        if !(delta2 >= 0.0) || !delta2.is_finite() {
            return Err(Error::InvalidInput(format!("delta2 must be >= 0, got {delta2}")));
        }
        let current = noncentrality(self);
        let scale = if delta2 == 0.0 {
            0.0
        } else if current > 0.0 {
            (delta2 / current).sqrt()
        } else {
            return Err(Error::InvalidInput(
                "xi is zero, so it has no direction to scale along".into(),
            ));
        };
        Ok(RiskScenario {
            xi: &self.xi * scale,
            delta: &self.delta * scale,
            ..self.clone()
        })
    }
}

/// `xi' (H C^{-1} H')^{-1} xi / sigma2`.
pub fn noncentrality(s: &RiskScenario) -> f64 {
    quad_form(&s.xi, &s.hch_inv) / s.sigma2
}

/// The same quantity computed as `delta' C delta / sigma2`.
pub fn noncentrality_delta_form(s: &RiskScenario) -> f64 {
    quad_form(&s.delta, &s.c) / s.sigma2
}

/// The three scalar functions entering the PTLE, SSLE and PRSSLE risks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auxiliary {
    pub z: f64,
    pub x: f64,
    pub q: f64,
}

/// `Z`, `X` and `Q` at level `alpha` for `q` restrictions, with `k = q - 2`
/// and critical value the upper-`alpha` chi-square(q) quantile.
pub fn auxiliary_zxq(q: usize, alpha: f64, delta2: f64) -> Result<Auxiliary> {
    let c = chisq_upper_quantile(alpha, q)?;
    let z = 2.0 * noncentral_chisq_cdf(c, q + 2, delta2)? - noncentral_chisq_cdf(c, q + 4, delta2)?;
    if q < 3 {
        return Ok(Auxiliary {
            z,
            x: f64::NAN,
            q: f64::NAN,
        });
    }
    let k = (q - 2) as f64;
    let x = 2.0 * inv_moment(q, 2, InvPower::Two, delta2, None)?
        - k * inv_moment(q, 4, InvPower::Two, delta2, None)?;
    let qq = 2.0 * truncated_shrink_moment(q, 2, k, delta2, false)?
        - truncated_shrink_moment(q, 4, k, delta2, false)?;
    Ok(Auxiliary { z, x, q: qq })
}

/// Asymptotic bias, quadratic bias, MSE matrix and weighted risk of one
/// estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRisk {
    pub kind: EstimatorKind,
    pub bias: DVector<f64>,
    /// `b' C b / sigma2`.
    pub adqb: f64,
    pub admse: DMatrix<f64>,
    pub adqr: f64,
}

impl EstimatorRisk {
    pub fn adb_norm(&self) -> f64 {
        self.bias.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub delta2: f64,
    pub ule: EstimatorRisk,
    pub rle: EstimatorRisk,
    pub ptle: EstimatorRisk,
    /// Absent when `q < 3`.
    pub ssle: Option<EstimatorRisk>,
    pub prssle: Option<EstimatorRisk>,
}

impl RiskReport {
    pub fn all(&self) -> Vec<&EstimatorRisk> {
        let mut v = vec![&self.ule, &self.rle, &self.ptle];
        v.extend(self.ssle.as_ref());
        v.extend(self.prssle.as_ref());
        v
    }

    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorRisk> {
        self.all().into_iter().find(|r| r.kind == kind)
    }
}

/// Evaluates every estimator's risk for `s` rescaled to noncentrality `delta2`.
pub fn asymptotic_risks(s: &RiskScenario, delta2: f64) -> Result<RiskReport> {
    let s = s.at_delta2(delta2)?;
    let q = s.q();
    let sigma2 = s.sigma2;
    let w = &s.w;
    let delta = &s.delta;
    let c_inv = &s.c_inv;
    let proj = c_inv - &s.a;
    let dd = delta * delta.transpose();
    let dwd = quad_form(delta, w);
    let tr_w_cinv = trace_product(w, c_inv);
    let tr_w_proj = trace_product(w, &proj);
    let tr_w_a = trace_product(w, &s.a);
    let quad_bias = |b: &DVector<f64>| quad_form(b, &s.c) / sigma2;
    let make = |kind, bias: DVector<f64>, admse: DMatrix<f64>, adqr: f64| EstimatorRisk {
        kind,
        adqb: quad_bias(&bias),
        bias,
        admse,
        adqr,
    };

    let r1 = sigma2 * tr_w_cinv;
    let ule = make(EstimatorKind::Ule, DVector::zeros(s.p()), c_inv * sigma2, r1);
    let rle = make(
        EstimatorKind::Rle,
        -delta,
        &s.a * sigma2 + &dd,
        sigma2 * tr_w_a + dwd,
    );

    let aux = auxiliary_zxq(q, s.alpha, delta2)?;
    let crit = chisq_upper_quantile(s.alpha, q)?;
    let h_q2 = noncentral_chisq_cdf(crit, q + 2, delta2)?;
    let ptle = make(
        EstimatorKind::Ptle,
        -delta * h_q2,
        c_inv * sigma2 - &proj * (sigma2 * h_q2) + &dd * aux.z,
        r1 - sigma2 * tr_w_proj * h_q2 + dwd * aux.z,
    );

    let (ssle, prssle) = if q >= 3 {
        let k = (q - 2) as f64;
        let tr_shrink = if s.weighted_shrink_terms {
            tr_w_proj
        } else {
            proj.trace()
        };
        let e2 = inv_moment(q, 2, InvPower::Two, delta2, None)?;
        let e4 = inv_moment(q, 4, InvPower::Four, delta2, None)?;
        let m4 = c_inv * sigma2 - &proj * (k * sigma2 * aux.x) + &dd * (k * (k + 4.0) * e4);
        let r4 = r1 - k * sigma2 * tr_shrink * aux.x + k * (k + 4.0) * dwd * e4;
        let b4 = -delta * (k * e2);
        let lin = truncated_shrink_moment(q, 2, k, delta2, false)?;
        let sq = truncated_shrink_moment(q, 2, k, delta2, true)?;
        let b5 = &b4 - delta * lin;
        let m5 = &m4 - &proj * (sigma2 * sq) - &dd * aux.q;
        let r5 = r4 - sigma2 * tr_shrink * sq - dwd * aux.q;
        (
            Some(make(EstimatorKind::Ssle, b4, m4, r4)),
            Some(make(EstimatorKind::Prssle, b5, m5, r5)),
        )
    } else {
        (None, None)
    };

    Ok(RiskReport {
        delta2,
        ule,
        rle,
        ptle,
        ssle,
        prssle,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub delta2: f64,
    pub estimator: EstimatorKind,
    /// Only PTLE depends on the level.
    pub alpha: Option<f64>,
    pub adb_norm: f64,
    pub adqb: f64,
    pub adqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTable {
    pub sigma2: f64,
    pub delta2_grid: Vec<f64>,
    pub alphas: Vec<f64>,
    pub rows: Vec<RiskRow>,
}

/// Risks over an ascending grid of noncentralities, with PTLE at every level
/// in `alphas`.
pub fn risk_curves(s: &RiskScenario, grid: &[f64], alphas: &[f64], mode: ExecMode) -> Result<RiskTable> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("delta2 grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("delta2 grid must be ascending".into()));
    }
    if alphas.is_empty() {
        return Err(Error::InvalidInput("at least one level is required".into()));
    }
    let scenarios = alphas
        .iter()
        .map(|&a| s.with_alpha(a))
        .collect::<Result<Vec<_>>>()?;
    let per_point = map_indexed(mode, grid.len(), |i| -> Result<Vec<RiskRow>> {
        let d2 = grid[i];
        let row = |r: &EstimatorRisk, alpha| RiskRow {
            delta2: d2,
            estimator: r.kind,
            alpha,
            adb_norm: r.adb_norm(),
            adqb: r.adqb,
            adqr: r.adqr,
        };
        let mut rows = Vec::new();
        for (j, scn) in scenarios.iter().enumerate() {
            let rep = asymptotic_risks(scn, d2)?;
            if j == 0 {
                rows.push(row(&rep.ule, None));
                rows.push(row(&rep.rle, None));
            }
            rows.push(row(&rep.ptle, Some(scn.alpha)));
            if j == 0 {
                rows.extend(rep.ssle.as_ref().map(|r| row(r, None)));
                rows.extend(rep.prssle.as_ref().map(|r| row(r, None)));
            }
        }
        Ok(rows)
    });
    let mut rows = Vec::new();
    for r in per_point {
        rows.extend(r?);
    }
    Ok(RiskTable {
        sigma2: s.sigma2,
        delta2_grid: grid.to_vec(),
        alphas: alphas.to_vec(),
        rows,
    })
}

/// Full-precision decimal text used in every output file.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

impl RiskTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta2", "estimator", "alpha", "adb_norm", "adqb", "adqr"])?;
        for r in &self.rows {
            w.write_record([
                fmt_num(r.delta2),
                r.estimator.to_string(),
                r.alpha.map(fmt_num).unwrap_or_default(),
                fmt_num(r.adb_norm),
                fmt_num(r.adqb),
                fmt_num(r.adqr),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Rows of one estimator (and level, for PTLE) in grid order.
    pub fn series(&self, kind: EstimatorKind, alpha: Option<f64>) -> Vec<&RiskRow> {
        self.rows
            .iter()
            .filter(|r| r.estimator == kind && r.alpha == alpha)
            .collect()
    }
}
