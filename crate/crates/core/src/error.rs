use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: missing mandatory column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error(
        "{path}: {malformed} of {rows} rows are malformed ({:.2}%), above the {:.2}% limit; first problem: {first}",
        100.0 * *malformed as f64 / (*rows).max(1) as f64,
        100.0 * limit
    )]
    TooManyMalformed {
        path: PathBuf,
        rows: u64,
        malformed: u64,
        limit: f64,
        first: String,
    },

    #[error("distribution is empty")]
    EmptyDistribution,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("Tsallis entropy of order 1 is the Shannon entropy; use shannon_entropy")]
    AlphaIsOne,

    #[error("need at least {needed} bins, got {got}")]
    TooFewBins { needed: usize, got: usize },

    #[error("bin sequence has gaps; missing bins starting {}", fmt_dates(.missing))]
    BinGaps { missing: Vec<NaiveDate> },

    #[error("bins must share one granularity and be strictly increasing")]
    UnorderedBins,

    #[error("baseline bin starting {0} is not present")]
    MissingBaseline(NaiveDate),

    #[error("bin starting {0} is not present")]
    MissingBin(NaiveDate),

    #[error("predicted and observed series share no bins")]
    NoOverlap,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn fmt_dates(dates: &[NaiveDate]) -> String {
    dates
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
