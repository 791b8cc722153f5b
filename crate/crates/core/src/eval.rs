//! Cross-validated prediction error of the estimators on real data, under
//! bootstrap resampling.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{
    fold_assignment, lambda_grid_default, select_lambda_with_labels, split_fold, LassoConfig,
    DEFAULT_GRID_LEN,
};
use crate::model::{Centering, CenteringOptions, EstimatorKind, RegressionData, Restriction};
use crate::par::{derive_seed, map_indexed, stream, ExecMode};
use crate::risk::fmt_num;
use crate::shrinkage::{fit_family, FamilyFit, TestOptions};
use crate::sim::Column;

/// Reads a header-first CSV (comma or tab separated) into predictors and a
/// response.
///
/// Columns named in `drop` and columns with an empty header (row labels) are
/// ignored; every other column is a predictor, in header order.
pub fn load_csv(path: impl AsRef<Path>, response: &str, drop: &[&str]) -> Result<RegressionData> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_from(file, response, drop)
}

pub fn load_csv_from<R: Read>(mut reader: R, response: &str, drop: &[&str]) -> Result<RegressionData> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let first = text.lines().next().ok_or(Error::EmptyFile)?;
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let resp_idx = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::MissingColumn(response.to_owned()))?;
    for d in drop {
        if !headers.iter().any(|h| h == d) {
            return Err(Error::MissingColumn((*d).to_owned()));
        }
    }
    let pred_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != resp_idx && !headers[i].is_empty() && !drop.contains(&headers[i].as_str()))
        .collect();
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericCell {
                    row: row + 1,
                    column: headers[i].clone(),
                    value: raw.to_owned(),
                })
        };
        ys.push(cell(resp_idx)?);
        for &i in &pred_idx {
            xs.push(cell(i)?);
        }
    }
    if ys.is_empty() {
        return Err(Error::EmptyFile);
    }
    let n = ys.len();
    let p = pred_idx.len();
    let x = DMatrix::from_row_slice(n, p, &xs);
    let names = pred_idx.iter().map(|&i| headers[i].clone()).collect();
    RegressionData::with_names(x, DVector::from_vec(ys), names)
}

/// The three linear constraints on the eight prostate predictors, with
/// zero right-hand side.
pub fn prostate_restriction() -> Restriction {
    Restriction::from_rows(
        &[
            vec![-1.0, 3.0, 1.0, -1.0, 0.0, -1.0, 0.0, 0.0],
            vec![-1.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        ],
        &[0.0, 0.0, 0.0],
    )
    .expect("fixed restriction has full rank")
}

#[derive(Debug, Clone)]
pub struct CvDesign {
    pub folds: usize,
    pub bootstrap_reps: usize,
    pub alpha_list: Vec<f64>,
    pub restriction: Restriction,
    pub seed: u64,
    pub centering: CenteringOptions,
    /// Folds of the inner search for the penalty on each training part.
    pub inner_folds: usize,
    pub grid_len: usize,
    pub test: TestOptions,
    pub max_failure_rate: f64,
    /// Keep every copy of a resampled row in the same fold. Off by default;
    /// with it off a duplicated row can sit on both sides of a split, which
    /// favors the less constrained fits.
    pub group_resampled_rows: bool,
}

impl CvDesign {
    pub fn new(restriction: Restriction) -> Self {
        CvDesign {
            folds: 10,
            bootstrap_reps: 1000,
            alpha_list: vec![0.01, 0.05, 0.10],
            restriction,
            seed: 2024,
            centering: CenteringOptions::default(),
            inner_folds: 10,
            grid_len: DEFAULT_GRID_LEN,
            test: TestOptions::default(),
            max_failure_rate: 0.01,
            group_resampled_rows: false,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidInput(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.bootstrap_reps == 0 {
            return Err(Error::InvalidInput("bootstrap_reps must be >= 1".into()));
        }
        if self.alpha_list.is_empty() {
            return Err(Error::InvalidInput("alpha_list must be nonempty".into()));
        }
        for &a in &self.alpha_list {
            crate::special::check_alpha(a)?;
        }
        if self.restriction.p() != p {
            return Err(Error::InvalidInput(format!(
                "restriction has {} columns, data has {p} predictors",
                self.restriction.p()
            )));
        }
        Ok(())
    }

    /// Estimators reported, in output order.
    pub fn columns(&self) -> Vec<Column> {
        let mut cols = vec![
            Column { estimator: EstimatorKind::Ule, alpha: None },
            Column { estimator: EstimatorKind::Rle, alpha: None },
        ];
        cols.extend(self.alpha_list.iter().map(|&a| Column {
            estimator: EstimatorKind::Ptle,
            alpha: Some(a),
        }));
        if self.restriction.q() >= 3 {
            cols.push(Column { estimator: EstimatorKind::Ssle, alpha: None });
            cols.push(Column { estimator: EstimatorKind::Prssle, alpha: None });
        }
        cols
    }
}

fn family_betas(fam: &FamilyFit) -> Vec<&DVector<f64>> {
    let mut v = vec![&fam.ule.beta, &fam.rle.beta];
    v.extend(fam.ptle.iter().map(|e| &e.beta));
    v.extend(fam.ssle.iter().map(|e| &e.beta));
    v.extend(fam.prssle.iter().map(|e| &e.beta));
    v
}

/// Total held-out squared error of every estimator in
/// [`CvDesign::columns`] order, for a given fold labelling of the rows.
///
/// Centering is learned on each training part and applied unchanged to the
/// held-out part.
///
/// `inner_labels` assign every row to a fold of the penalty search run on
/// each training part, so results depend only on row identities.
pub fn kfold_errors_with_labels(
    data: &RegressionData,
    cfg: &CvDesign,
    labels: &[usize],
    inner_labels: &[usize],
) -> Result<Vec<f64>> {
    cfg.validate(data.p())?;
    if labels.len() != data.n() || inner_labels.len() != data.n() {
        return Err(Error::InvalidInput("one fold label per row is required".into()));
    }
    let folds = labels.iter().max().map_or(0, |m| m + 1);
    let mut sse = vec![0.0; cfg.columns().len()];
    for fold in 0..folds {
        let (train_idx, test_idx) = split_fold(labels, fold);
        if test_idx.is_empty() {
            continue;
        }
        let train = data.select_rows(&train_idx)?;
        // held-out rows are only predicted, so they may be fewer than p
        let test_x = data.x().select_rows(&test_idx);
        let test_y = data.y().select_rows(&test_idx);
        let centering = Centering::fit(&train, cfg.centering);
        let train_c = centering.apply(&train);
        let inner = LassoConfig {
            lambda_grid: Some(lambda_grid_default(&train_c, cfg.grid_len)?),
            ..LassoConfig::default()
        };
        let train_inner: Vec<usize> = train_idx.iter().map(|&i| inner_labels[i]).collect();
        let lambda = select_lambda_with_labels(&train_c, &inner, Some(&train_inner))?;
        let fam = fit_family(
            &train_c,
            &cfg.restriction,
            &LassoConfig::with_lambda(lambda),
            &cfg.alpha_list,
            cfg.test,
        )?;
        for (c, beta) in family_betas(&fam).into_iter().enumerate() {
            let pred = centering.predict(&test_x, beta);
            sse[c] += (&test_y - pred).norm_squared();
        }
    }
    Ok(sse)
}

/// Per-estimator errors with a seeded near-equal split into `cfg.folds`.
pub fn kfold_errors(data: &RegressionData, cfg: &CvDesign, split_seed: u64) -> Result<Vec<f64>> {
    if cfg.folds > data.n() {
        return Err(Error::InvalidInput(format!("{} folds exceed {} rows", cfg.folds, data.n())));
    }
    if cfg.inner_folds < 2 {
        return Err(Error::InvalidInput("inner_folds must be >= 2".into()));
    }
    let labels = fold_assignment(data.n(), cfg.folds, split_seed);
    let inner = fold_assignment(data.n(), cfg.inner_folds, derive_seed(split_seed, &[1]));
    kfold_errors_with_labels(data, cfg, &labels, &inner)
}

/// Total held-out squared error of a single estimator.
pub fn kfold_prediction_error(
    data: &RegressionData,
    cfg: &CvDesign,
    estimator: EstimatorKind,
    alpha: Option<f64>,
    split_seed: u64,
) -> Result<f64> {
    let cols = cfg.columns();
    let idx = cols
        .iter()
        .position(|c| c.estimator == estimator && (estimator != EstimatorKind::Ptle || c.alpha == alpha))
        .ok_or_else(|| Error::InvalidInput(format!("{estimator} is not among the evaluated estimators")))?;
    Ok(kfold_errors(data, cfg, split_seed)?[idx])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionErrorRow {
    pub estimator: EstimatorKind,
    pub alpha: Option<f64>,
    pub mean_pe: f64,
    pub sd_pe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionErrorReport {
    pub rows: Vec<PredictionErrorRow>,
    /// `series[c][b]`: error of column `c` in bootstrap replicate `b`.
    pub series: Vec<Vec<f64>>,
    pub failed: usize,
    pub notes: Vec<String>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Resamples rows with replacement, then runs k-fold CV on every resample.
pub fn bootstrap_cv(data: &RegressionData, cfg: &CvDesign, mode: ExecMode) -> Result<PredictionErrorReport> {
    cfg.validate(data.p())?;
    let n = data.n();
    let cols = cfg.columns();
    let results: Vec<Option<Vec<f64>>> = map_indexed(mode, cfg.bootstrap_reps, |b| {
        let mut rng = stream(cfg.seed, &[b as u64]);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let split_seed = rng.random::<u64>();
        let boot = data.select_rows(&idx).ok()?;
        let res = if cfg.group_resampled_rows {
            let outer = fold_assignment(n, cfg.folds, split_seed);
            let inner = fold_assignment(n, cfg.inner_folds, derive_seed(split_seed, &[1]));
            let labels: Vec<usize> = idx.iter().map(|&i| outer[i]).collect();
            let inner: Vec<usize> = idx.iter().map(|&i| inner[i]).collect();
            kfold_errors_with_labels(&boot, cfg, &labels, &inner)
        } else {
            kfold_errors(&boot, cfg, split_seed)
        };
        match res {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("bootstrap replicate {b} failed: {e}");
                None
            }
        }
    });
    let ok: Vec<&Vec<f64>> = results.iter().flatten().collect();
    let failed = cfg.bootstrap_reps - ok.len();
    if failed as f64 > cfg.max_failure_rate * cfg.bootstrap_reps as f64 || ok.is_empty() {
        return Err(Error::TooManyFailures {
            failed,
            total: cfg.bootstrap_reps,
        });
    }
    let series: Vec<Vec<f64>> = (0..cols.len()).map(|c| ok.iter().map(|v| v[c]).collect()).collect();
    let rows = cols
        .iter()
        .zip(&series)
        .map(|(col, s)| {
            let (mean_pe, sd_pe) = mean_sd(s);
            PredictionErrorRow {
                estimator: col.estimator,
                alpha: col.alpha,
                mean_pe,
                sd_pe,
            }
        })
        .collect();
    Ok(PredictionErrorReport {
        rows,
        series,
        failed,
        notes: vec![
            "rows are resampled with replacement before the fold split".into(),
            "prediction error is the total squared error over all held-out rows".into(),
            format!(
                "penalty chosen by {}-fold CV over a {}-point grid inside every training part",
                cfg.inner_folds, cfg.grid_len
            ),
        ],
    })
}

impl PredictionErrorReport {
    pub fn get(&self, estimator: EstimatorKind, alpha: Option<f64>) -> Option<&PredictionErrorRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.alpha == alpha)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimator", "alpha", "mean_pe", "sd_pe"])?;
        for r in &self.rows {
            w.write_record([
                r.estimator.to_string(),
                r.alpha.map(fmt_num).unwrap_or_default(),
                fmt_num(r.mean_pe),
                fmt_num(r.sd_pe),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long format: one line per (replicate, estimator).
    pub fn write_series_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "estimator", "alpha", "pe"])?;
        for (row, s) in self.rows.iter().zip(&self.series) {
            for (b, v) in s.iter().enumerate() {
                w.write_record([
                    b.to_string(),
                    row.estimator.to_string(),
                    row.alpha.map(fmt_num).unwrap_or_default(),
                    fmt_num(*v),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let label = |r: &PredictionErrorRow| match r.alpha {
            Some(a) => format!("{}({a})", r.estimator),
            None => r.estimator.to_string(),
        };
        let mut s = format!("{:>6}", "");
        for r in &self.rows {
            let _ = write!(s, " {:>12}", label(r));
        }
        let _ = write!(s, "\n{:>6}", "mean");
        for r in &self.rows {
            let _ = write!(s, " {:>12.2}", r.mean_pe);
        }
        let _ = write!(s, "\n{:>6}", "sd");
        for r in &self.rows {
            let _ = write!(s, " {:>12.2}", r.sd_pe);
        }
        s.push('\n');
        s
    }
}
