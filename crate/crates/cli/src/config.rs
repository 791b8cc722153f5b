//! Versioned JSON documents accepted and written by the commands.
//!
//! Every config carries `schema_version`; the resolved form of each command's
//! configuration is stored in the run manifest and is sufficient to replay it.

use std::path::Path;

use rlasso::eval::CvDesign;
use rlasso::risk::RiskScenario;
use rlasso::shrinkage::TestOptions;
use rlasso::sim::SimDesign;
use rlasso::{CenteringOptions, Restriction};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn check_version(found: u32, what: &str) -> Result<(), CliError> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what}: unsupported schema_version {found} (expected {SCHEMA_VERSION})"
        )))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{what} {}: {e}", path.display())))
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Usage(format!("{what} must be a nonempty rectangular array of rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// `H beta = h`, with `H` given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionSpec {
    #[serde(rename = "H")]
    pub h_mat: Vec<Vec<f64>>,
    #[serde(rename = "h")]
    pub h_vec: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct RestrictionFile {
    schema_version: u32,
    #[serde(flatten)]
    spec: RestrictionSpec,
}

impl RestrictionSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let f: RestrictionFile = read_json(path, "restriction")?;
        check_version(f.schema_version, "restriction")?;
        Ok(f.spec)
    }

    pub fn from_restriction(r: &Restriction) -> Self {
        let m = r.matrix();
        RestrictionSpec {
            h_mat: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
            h_vec: r.rhs().iter().copied().collect(),
        }
    }

    pub fn build(&self) -> Result<Restriction, CliError> {
        Ok(Restriction::from_rows(&self.h_mat, &self.h_vec)?)
    }
}

/// Where the input table lives and which columns to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub path: String,
    pub response: String,
    #[serde(default)]
    pub drop: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PenaltyChoice {
    Fixed { lambda: f64 },
    Cv { folds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub schema_version: u32,
    pub data: DataSpec,
    pub restriction: RestrictionSpec,
    pub alphas: Vec<f64>,
    pub penalty: PenaltyChoice,
    pub seed: u64,
    pub test: TestOptions,
    pub centering: CenteringOptions,
}

/// Risk-analytics inputs; `sigma2` and the grid live on [`RiskCurveConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub c: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h_mat: Vec<Vec<f64>>,
    #[serde(rename = "h")]
    pub h_vec: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(flatten)]
    spec: ScenarioSpec,
}

impl ScenarioSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let f: ScenarioFile = read_json(path, "scenario")?;
        check_version(f.schema_version, "scenario")?;
        Ok(f.spec)
    }

    pub fn paper_default() -> Self {
        let s = RiskScenario::paper_default(1.0, 0.05).expect("built-in scenario is valid");
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        ScenarioSpec {
            c: rows(s.c()),
            w: rows(s.w()),
            h_mat: rows(s.h_mat()),
            h_vec: s.h_vec().iter().copied().collect(),
            xi: s.xi().iter().copied().collect(),
        }
    }

    pub fn build(&self, sigma2: f64, alpha: f64) -> Result<RiskScenario, CliError> {
        Ok(RiskScenario::new(
            matrix(&self.c, "C")?,
            matrix(&self.w, "W")?,
            matrix(&self.h_mat, "H")?,
            DVector::from_vec(self.h_vec.clone()),
            DVector::from_vec(self.xi.clone()),
            sigma2,
            alpha,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurveConfig {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub sigma2: Vec<f64>,
    pub delta2_grid: Vec<f64>,
    pub alphas: Vec<f64>,
    pub weighted_shrink_terms: bool,
}

/// Simulation design document: the design fields at top level next to
/// `schema_version`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub schema_version: u32,
    #[serde(flatten)]
    pub design: SimDesign,
}

impl SimulateConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let c: SimulateConfig = read_json(path, "design")?;
        check_version(c.schema_version, "design")?;
        Ok(c)
    }
}

/// Bootstrap cross-validation settings as read from a config file. The data
/// and restriction are supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvSettings {
    pub folds: usize,
    pub bootstrap_reps: usize,
    pub alpha_list: Vec<f64>,
    pub seed: u64,
    pub centering: CenteringOptions,
    pub inner_folds: usize,
    pub grid_len: usize,
    pub test: TestOptions,
    pub max_failure_rate: f64,
    pub group_resampled_rows: bool,
}

impl Default for CvSettings {
    fn default() -> Self {
        // any full-rank restriction will do to read the library defaults
        let d = CvDesign::new(Restriction::from_rows(&[vec![1.0]], &[0.0]).expect("1x1 restriction"));
        CvSettings {
            folds: d.folds,
            bootstrap_reps: d.bootstrap_reps,
            alpha_list: d.alpha_list,
            seed: d.seed,
            centering: d.centering,
            inner_folds: d.inner_folds,
            grid_len: d.grid_len,
            test: d.test,
            max_failure_rate: d.max_failure_rate,
            group_resampled_rows: d.group_resampled_rows,
        }
    }
}

#[derive(Debug, Deserialize)]
struct CvSettingsFile {
    schema_version: u32,
    #[serde(flatten)]
    settings: CvSettings,
}

impl CvSettings {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let f: CvSettingsFile = read_json(path, "cv config")?;
        check_version(f.schema_version, "cv config")?;
        Ok(f.settings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub schema_version: u32,
    pub data: DataSpec,
    pub restriction: RestrictionSpec,
    pub settings: CvSettings,
}

impl CvConfig {
    pub fn design(&self) -> Result<CvDesign, CliError> {
        let s = &self.settings;
        let mut d = CvDesign::new(self.restriction.build()?);
        d.folds = s.folds;
        d.bootstrap_reps = s.bootstrap_reps;
        d.alpha_list = s.alpha_list.clone();
        d.seed = s.seed;
        d.centering = s.centering;
        d.inner_folds = s.inner_folds;
        d.grid_len = s.grid_len;
        d.test = s.test;
        d.max_failure_rate = s.max_failure_rate;
        d.group_resampled_rows = s.group_resampled_rows;
        Ok(d)
    }
}
