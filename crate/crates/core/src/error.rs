//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

use crate::data::Origin;

pub type Result<T> = std::result::Result<T, Error>;

/// Direction in which a heterozygous flank was searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Left => f.write_str("left"),
            Direction::Right => f.write_str("right"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("locus {locus}: negative genetic distance {distance}")]
    NegativeDistance { locus: usize, distance: f64 },

    #[error("{}:{line}: expected locus index {expected}, found {found}", path.display())]
    NonMonotoneIndex {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("family {family}: {what} has {found} loci, map has {expected}")]
    LengthMismatch {
        family: String,
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("family {family}: non-binary allele {allele:?} in {what}")]
    NonBinaryAllele {
        family: String,
        what: String,
        allele: char,
    },

    #[error("family {family}: missing haplotype row for {member} origin {origin}")]
    MissingMember {
        family: String,
        member: char,
        origin: char,
    },

    #[error("family {family}: duplicate row for {what}")]
    Duplicate { family: String, what: String },

    #[error("family {family} appears in the {present_in} file but not the {missing_from} file")]
    UnmatchedFamily {
        family: String,
        present_in: &'static str,
        missing_from: &'static str,
    },

    #[error("child haplotype is impossible under the parental haplotypes with epsilon = 0 (locus {locus})")]
    ImpossibleHaplotype { locus: usize },

    #[error("parent is homozygous at flank locus {locus}")]
    FlankNotHeterozygous { locus: usize },

    #[error("no heterozygous {origin} flank to the {direction} of locus {locus}")]
    NoHeterozygousFlank {
        locus: usize,
        direction: Direction,
        origin: Origin,
    },

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("mutation rate must lie in [0, 0.5), got {0}")]
    InvalidEpsilon(f64),

    #[error("this computation requires mutation rate 0, got {0}")]
    MutationRateNotZero(f64),

    #[error("invalid probability {0}")]
    InvalidProbability(f64),

    #[error("at least one Monte Carlo draw is required")]
    ZeroDraws,

    #[error("cannot combine an empty list of p-values")]
    EmptyPValues,

    #[error("{needed} trios needed for this statistic, cohort has {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the contents of input data files rather
    /// than by the analysis configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::NegativeDistance { .. }
                | Error::NonMonotoneIndex { .. }
                | Error::LengthMismatch { .. }
                | Error::NonBinaryAllele { .. }
                | Error::MissingMember { .. }
                | Error::Duplicate { .. }
                | Error::UnmatchedFamily { .. }
                | Error::ImpossibleHaplotype { .. }
                | Error::InsufficientSamples { .. }
        )
    }
}
