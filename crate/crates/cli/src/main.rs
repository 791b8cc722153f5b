//! `rlasso` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.

mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rlasso::eval::{bootstrap_cv, load_csv, prostate_restriction};
use rlasso::risk::{fmt_num, risk_curves};
use rlasso::shrinkage::{fit_family, CriticalRule, TestOptions, VarianceSource};
use rlasso::sim::{run_experiment, SimDesign};
use rlasso::{par, Centering, CenteringOptions, ExecMode, LassoConfig, RegressionData};
use serde::Serialize;
use thiserror::Error;

use config::{
    CvConfig, CvSettings, DataSpec, FitConfig, PenaltyChoice, RestrictionSpec, RiskCurveConfig,
    ScenarioSpec, SimulateConfig, SCHEMA_VERSION,
};
use manifest::{FileDigest, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<rlasso::Error> for CliError {
    fn from(e: rlasso::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rlasso", version, about = "Restricted and shrinkage LASSO estimators")]
struct Cli {
    /// Seed for every random stream; overrides any seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit all estimators to a data set.
    Fit(FitArgs),
    /// Tabulate asymptotic risks over a grid of noncentralities.
    RiskCurve(RiskCurveArgs),
    /// Monte Carlo relative efficiencies.
    Simulate(SimulateArgs),
    /// Bootstrap cross-validated prediction error on a data set.
    Cv(CvArgs),
    /// Rerun a command from its manifest and compare outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV or tab-separated file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    response: String,
    /// Columns to ignore (repeatable).
    #[arg(long)]
    drop: Vec<String>,
}

impl DataArgs {
    fn spec(&self) -> DataSpec {
        DataSpec {
            path: self.data.display().to_string(),
            response: self.response.clone(),
            drop: self.drop.clone(),
        }
    }
}

#[derive(Debug, Args)]
#[group(id = "restriction_source", required = true, multiple = false)]
struct RestrictionArgs {
    /// JSON file with `schema_version`, `H` (rows) and `h`.
    #[arg(long)]
    restriction: Option<PathBuf>,
    /// The three-row restriction on the eight prostate predictors.
    #[arg(long)]
    paper_default_restriction: bool,
}

impl RestrictionArgs {
    fn spec(&self) -> Result<RestrictionSpec, CliError> {
        match &self.restriction {
            Some(p) => RestrictionSpec::load(p),
            None => Ok(RestrictionSpec::from_restriction(&prostate_restriction())),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VarianceArg {
    Ols,
    Lasso,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    ChiSquare,
    F,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Residual variance used in the test statistic.
    #[arg(long, value_enum, default_value = "ols")]
    variance: VarianceArg,
    /// Reference distribution for the critical value.
    #[arg(long, value_enum, default_value = "chi-square")]
    critical: RuleArg,
}

impl TestArgs {
    fn options(&self) -> TestOptions {
        TestOptions {
            variance_source: match self.variance {
                VarianceArg::Ols => VarianceSource::OlsResidual,
                VarianceArg::Lasso => VarianceSource::LassoResidual,
            },
            rule: match self.critical {
                RuleArg::ChiSquare => CriticalRule::ChiSquare,
                RuleArg::F => CriticalRule::FisherF,
            },
        }
    }
}

#[derive(Debug, Args)]
struct CenterArgs {
    /// Subtract the response mean as well as the predictor means.
    #[arg(long)]
    center_response: bool,
    /// Scale predictors to unit standard deviation after centering.
    #[arg(long)]
    standardize: bool,
}

impl CenterArgs {
    fn options(&self) -> CenteringOptions {
        CenteringOptions {
            center_response: self.center_response,
            standardize: self.standardize,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("penalty").required(true).args(["lambda", "cv"])))]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    restriction: RestrictionArgs,
    /// Test level; repeat for several PTLE rows.
    #[arg(long, default_values_t = vec![0.05])]
    alpha: Vec<f64>,
    /// Fixed LASSO penalty.
    #[arg(long)]
    lambda: Option<f64>,
    /// Choose the penalty by k-fold cross-validation.
    #[arg(long)]
    cv: bool,
    #[arg(long, default_value_t = 10)]
    cv_folds: usize,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    center: CenterArgs,
}

#[derive(Debug, Args)]
#[group(id = "scenario_source", required = true, multiple = false)]
struct ScenarioArgs {
    /// JSON file with `schema_version`, `c`, `w`, `H`, `h` and `xi`.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// p = 4, q = 3 scenario with C = W = I.
    #[arg(long)]
    paper_default: bool,
}

#[derive(Debug, Args)]
struct RiskCurveArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Error variance; repeat for several series.
    #[arg(long, default_values_t = vec![1.0])]
    sigma2: Vec<f64>,
    /// Comma-separated ascending noncentralities; default 0, 0.5, ..., 50.
    #[arg(long)]
    delta2: Option<String>,
    #[arg(long, default_values_t = vec![0.01, 0.05, 0.10])]
    alpha: Vec<f64>,
    /// Apply the weight matrix to the Stein-type trace terms.
    #[arg(long)]
    weighted_shrink_terms: bool,
}

#[derive(Debug, Args)]
#[group(id = "design_source", required = true, multiple = false)]
struct DesignArgs {
    /// Design JSON (`schema_version` plus design fields; missing fields take defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    /// n = 100, p in {10, 20, 30}, r in {0, 0.2, 0.9}, sigma = 5.
    #[arg(long)]
    paper_default_sim: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    restriction: RestrictionArgs,
    /// Settings JSON (`schema_version` plus settings; missing fields take defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bootstrap replicates.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Put every copy of a resampled row in the same fold.
    #[arg(long)]
    group_resampled_rows: bool,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
}

/// A fully resolved command, ready to run.
#[derive(Debug, Clone)]
enum Job {
    Fit(FitConfig),
    RiskCurve(RiskCurveConfig),
    Simulate(SimulateConfig),
    Cv(CvConfig),
}

impl Job {
    fn name(&self) -> &'static str {
        match self {
            Job::Fit(_) => "fit",
            Job::RiskCurve(_) => "risk-curve",
            Job::Simulate(_) => "simulate",
            Job::Cv(_) => "cv",
        }
    }

    fn seed(&self) -> u64 {
        match self {
            Job::Fit(c) => c.seed,
            Job::RiskCurve(_) => 0,
            Job::Simulate(c) => c.design.seed,
            Job::Cv(c) => c.settings.seed,
        }
    }

    fn config_json(&self) -> serde_json::Value {
        fn v<T: Serialize>(t: &T) -> serde_json::Value {
            serde_json::to_value(t).expect("configs serialize")
        }
        match self {
            Job::Fit(c) => v(c),
            Job::RiskCurve(c) => v(c),
            Job::Simulate(c) => v(c),
            Job::Cv(c) => v(c),
        }
    }

    fn from_manifest(m: &RunManifest) -> Result<Job, CliError> {
        fn parse<T: serde::de::DeserializeOwned>(v: &serde_json::Value) -> Result<T, CliError> {
            serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("manifest config: {e}")))
        }
        Ok(match m.command.as_str() {
            "fit" => Job::Fit(parse(&m.config)?),
            "risk-curve" => Job::RiskCurve(parse(&m.config)?),
            "simulate" => Job::Simulate(parse(&m.config)?),
            "cv" => Job::Cv(parse(&m.config)?),
            other => return Err(CliError::Usage(format!("manifest names unknown command `{other}`"))),
        })
    }

    fn data_path(&self) -> Option<&str> {
        match self {
            Job::Fit(c) => Some(&c.data.path),
            Job::Cv(c) => Some(&c.data.path),
            _ => None,
        }
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let grid = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--delta2: `{t}` is not a number")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if grid.is_empty() {
        return Err(CliError::Usage("--delta2: grid is empty".into()));
    }
    if grid.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return Err(CliError::Usage("--delta2: values must be finite and >= 0".into()));
    }
    Ok(grid)
}

fn resolve(cmd: Command, seed: Option<u64>) -> Result<Job, CliError> {
    Ok(match cmd {
        Command::Fit(a) => {
            let penalty = match a.lambda {
                Some(lambda) => PenaltyChoice::Fixed { lambda },
                None => PenaltyChoice::Cv { folds: a.cv_folds },
            };
            Job::Fit(FitConfig {
                schema_version: SCHEMA_VERSION,
                data: a.data.spec(),
                restriction: a.restriction.spec()?,
                alphas: a.alpha,
                penalty,
                seed: seed.unwrap_or(SimDesign::default().seed),
                test: a.test.options(),
                centering: a.center.options(),
            })
        }
        Command::RiskCurve(a) => {
            let scenario = match &a.scenario.scenario {
                Some(p) => ScenarioSpec::load(p)?,
                None => ScenarioSpec::paper_default(),
            };
            let delta2_grid = match &a.delta2 {
                Some(s) => parse_grid(s)?,
                None => (0..=100).map(|i| i as f64 * 0.5).collect(),
            };
            Job::RiskCurve(RiskCurveConfig {
                schema_version: SCHEMA_VERSION,
                scenario,
                sigma2: a.sigma2,
                delta2_grid,
                alphas: a.alpha,
                weighted_shrink_terms: a.weighted_shrink_terms,
            })
        }
        Command::Simulate(a) => {
            let mut c = match &a.design.config {
                Some(p) => SimulateConfig::load(p)?,
                None => SimulateConfig {
                    schema_version: SCHEMA_VERSION,
                    design: SimDesign::default(),
                },
            };
            if let Some(r) = a.reps {
                c.design.reps = r;
            }
            if let Some(s) = seed {
                c.design.seed = s;
            }
            Job::Simulate(c)
        }
        Command::Cv(a) => {
            let mut settings = match &a.config {
                Some(p) => CvSettings::load(p)?,
                None => CvSettings::default(),
            };
            if let Some(r) = a.reps {
                settings.bootstrap_reps = r;
            }
            if let Some(f) = a.folds {
                settings.folds = f;
            }
            if a.group_resampled_rows {
                settings.group_resampled_rows = true;
            }
            if let Some(s) = seed {
                settings.seed = s;
            }
            Job::Cv(CvConfig {
                schema_version: SCHEMA_VERSION,
                data: a.data.spec(),
                restriction: a.restriction.spec()?,
                settings,
            })
        }
        Command::Replay(_) => unreachable!("replay is handled before resolution"),
    })
}

fn load_data(spec: &DataSpec) -> Result<RegressionData, CliError> {
    let drop: Vec<&str> = spec.drop.iter().map(String::as_str).collect();
    Ok(load_csv(&spec.path, &spec.response, &drop)?)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> rlasso::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn run_fit(c: &FitConfig) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let raw = load_data(&c.data)?;
    let data = Centering::fit(&raw, c.centering).apply(&raw);
    let r = c.restriction.build()?;
    let cfg = match c.penalty {
        PenaltyChoice::Fixed { lambda } => LassoConfig::with_lambda(lambda),
        PenaltyChoice::Cv { folds } => LassoConfig {
            cv_folds: folds,
            ..LassoConfig::cross_validated(c.seed)
        },
    };
    let fam = fit_family(&data, &r, &cfg, &c.alphas, c.test)?;
    for w in &fam.warnings {
        eprintln!("warning: {w}");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["estimator", "alpha", "index", "name", "value", "lambda", "test_stat", "decision"])
        .map_err(io)?;
    let mut rows = vec![&fam.ule, &fam.rle];
    rows.extend(fam.ptle.iter());
    rows.extend(fam.ssle.iter());
    rows.extend(fam.prssle.iter());
    for e in rows {
        for (j, b) in e.beta.iter().enumerate() {
            w.write_record([
                e.kind.to_string(),
                e.alpha.map(fmt_num).unwrap_or_default(),
                j.to_string(),
                data.names().get(j).cloned().unwrap_or_default(),
                fmt_num(*b),
                fmt_num(fam.lambda),
                e.test_stat.map(fmt_num).unwrap_or_default(),
                e.decision
                    .map(|d| if d { "accept" } else { "reject" }.to_string())
                    .unwrap_or_default(),
            ])
            .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(vec![("estimates.csv".into(), bytes)])
}

fn run_risk_curve(c: &RiskCurveConfig, mode: ExecMode) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    if c.delta2_grid.is_empty() {
        return Err(CliError::Usage("delta2 grid is empty".into()));
    }
    if c.sigma2.is_empty() || c.alphas.is_empty() {
        return Err(CliError::Usage("at least one sigma2 and one alpha are required".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["sigma2", "delta2", "estimator", "alpha", "adb_norm", "adqb", "adqr"])
        .map_err(io)?;
    for &s2 in &c.sigma2 {
        let mut s = c.scenario.build(s2, c.alphas[0])?;
        s.weighted_shrink_terms = c.weighted_shrink_terms;
        let table = risk_curves(&s, &c.delta2_grid, &c.alphas, mode)?;
        for r in &table.rows {
            w.write_record([
                fmt_num(s2),
                fmt_num(r.delta2),
                r.estimator.to_string(),
                r.alpha.map(fmt_num).unwrap_or_default(),
                fmt_num(r.adb_norm),
                fmt_num(r.adqb),
                fmt_num(r.adqr),
            ])
            .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(vec![("risk_curves.csv".into(), bytes)])
}

fn run_simulate(c: &SimulateConfig, mode: ExecMode) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let table = run_experiment(&c.design, mode)?;
    let failed: usize = table.cells.iter().map(|x| x.failed).sum();
    let nonconv: usize = table.cells.iter().map(|x| x.nonconverged).sum();
    if failed > 0 || nonconv > 0 {
        let cells = table.cells.iter().filter(|x| x.failed > 0).count();
        warn!("{failed} failed replicates in {cells} cells; {nonconv} solver runs hit the iteration cap");
        eprintln!("warning: {failed} failed replicates across {cells} cells, {nonconv} non-converged fits");
    }
    let csv = csv_bytes(|b| table.write_csv(b))?;
    let mut text = table.to_text();
    for n in &table.notes {
        text.push_str(&format!("# {n}\n"));
    }
    Ok(vec![
        ("efficiency.csv".into(), csv),
        ("efficiency.txt".into(), text.into_bytes()),
    ])
}

fn run_cv(c: &CvConfig, mode: ExecMode) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let data = load_data(&c.data)?;
    let design = c.design()?;
    let report = bootstrap_cv(&data, &design, mode)?;
    if report.failed > 0 {
        eprintln!("warning: {} of {} bootstrap replicates failed", report.failed, design.bootstrap_reps);
    }
    let summary = csv_bytes(|b| report.write_csv(b))?;
    let series = csv_bytes(|b| report.write_series_csv(b))?;
    Ok(vec![
        ("prediction_error.csv".into(), summary),
        ("prediction_error_series.csv".into(), series),
        ("prediction_error.txt".into(), report.to_text().into_bytes()),
    ])
}

/// Runs `job`, writes its outputs and manifest into `out_dir`, and returns
/// the manifest.
fn execute(job: &Job, out_dir: &Path) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let mode = ExecMode::Parallel;
    let mut inputs = Vec::new();
    if let Some(p) = job.data_path() {
        inputs.push(FileDigest::of(Path::new(p), p.to_string())?);
    }
    info!("running {}", job.name());
    let outputs = match job {
        Job::Fit(c) => run_fit(c)?,
        Job::RiskCurve(c) => run_risk_curve(c, mode)?,
        Job::Simulate(c) => run_simulate(c, mode)?,
        Job::Cv(c) => run_cv(c, mode)?,
    };
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut digests = Vec::new();
    for (name, bytes) in &outputs {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        digests.push(FileDigest::of(&path, name.clone())?);
    }
    let m = RunManifest {
        schema_version: SCHEMA_VERSION,
        command: job.name().into(),
        config: job.config_json(),
        seed: job.seed(),
        version: env!("CARGO_PKG_VERSION").into(),
        inputs,
        outputs: digests,
        threads: par::current_threads(),
        duration_secs: start.elapsed().as_secs_f64(),
    };
    m.write(out_dir)?;
    Ok(m)
}

fn replay(args: &ReplayArgs, out_dir: &Path) -> Result<(), CliError> {
    let old = RunManifest::read(&args.manifest)?;
    let job = Job::from_manifest(&old)?;
    for input in &old.inputs {
        let now = FileDigest::of(Path::new(&input.path), input.path.clone())?;
        if now.sha256 != input.sha256 {
            return Err(CliError::Usage(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let new = execute(&job, out_dir)?;
    let mut mismatched = Vec::new();
    for (a, b) in old.outputs.iter().zip(&new.outputs) {
        if a != b {
            mismatched.push(a.path.clone());
        }
    }
    if old.outputs.len() != new.outputs.len() {
        mismatched.push("<output list>".into());
    }
    if mismatched.is_empty() {
        println!("replay of {} reproduced {} outputs", old.command, new.outputs.len());
        Ok(())
    } else {
        Err(CliError::Numeric(format!("replay differs in: {}", mismatched.join(", "))))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        par::init_threads(t);
    }
    match cli.command {
        Command::Replay(a) => replay(&a, &cli.out_dir),
        cmd => {
            let job = resolve(cmd, cli.seed)?;
            let m = execute(&job, &cli.out_dir)?;
            for o in &m.outputs {
                println!("{}", cli.out_dir.join(&o.path).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
