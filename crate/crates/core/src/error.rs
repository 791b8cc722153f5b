use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is numerically singular (eigenvalue ratio {ratio:.3e})")]
    SingularDesign { ratio: f64 },

    #[error("restriction matrix has rank {rank}, expected {expected}")]
    RankDeficientRestriction { rank: usize, expected: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("response vector is identically zero")]
    DegenerateResponse,

    #[error("expected a {expected} estimate, got {found}")]
    WrongEstimatorKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("Stein-type shrinkage needs at least 3 restrictions, got q = {0}")]
    QTooSmall(usize),

    #[error("inverse moment diverges: {degrees} degrees of freedom, power -{power}")]
    DivergentMoment { degrees: u32, power: u32 },

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("file has no data rows")]
    EmptyFile,

    #[error("too many failed replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("io error: {0}")]
    Io(String),

    #[error("csv error: {0}")]
    Csv(String),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign { .. }
                | Error::NotPositiveDefinite(_)
                | Error::DivergentMoment { .. }
                | Error::TooManyFailures { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
