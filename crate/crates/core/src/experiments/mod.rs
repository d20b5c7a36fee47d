//! Strong-error ladders, one-step diagnostics and table reproduction.
//!
//! Every trajectory draws one Brownian grid at the reference resolution; the
//! scheme under test reads coarsenings of that same grid, so the error
//! `|X_T^ref - X_T|` is measured on a common path.

mod diagnostics;
mod regression;
mod strong;
mod table;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::ModelError;
use crate::paths::PathError;
use crate::schemes::SchemeError;

pub use diagnostics::{diagnostic_ladder, run_diagnostics, DiagnosticsReport, DiagnosticsRow};
pub use regression::{ols_loglog, LogLogFit};
pub use strong::{
    default_reference, estimate_strong_error, estimate_strong_errors,
    estimate_three_halves_strong_error, write_regression_csv, write_strong_error_csv, ErrorPoint,
    LadderConfig, StrongErrorReport,
};
pub use table::{reproduce_table, TableCell, TableId, TableResult, TableRow};

/// Stream tags keeping the experiments' Gaussian sequences disjoint.
pub(crate) mod streams {
    pub const STRONG: u32 = 1;
    pub const PATH_DUMP: u32 = 2;
    pub const DIAGNOSTICS: u32 = 100;
    pub const MLMC: u32 = 1000;
}

pub(crate) use streams::PATH_DUMP as PATH_DUMP_STREAM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { got: usize, needed: usize },
    #[error("all step sizes are equal, slope undefined")]
    DegenerateRegression,
    #[error("regression point (dt = {dt}, err = {err}) is not strictly positive")]
    NonPositivePoint { dt: f64, err: f64 },
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Problem size preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scale {
    /// 5e3 trajectories, ladder 1..=7, reference exponent 10.
    #[default]
    Desk,
    /// 5e4 trajectories, ladder 1..=9, reference exponent 12.
    Full,
}

impl Scale {
    pub fn n_trajectories(self) -> usize {
        match self {
            Scale::Desk => 5_000,
            Scale::Full => 50_000,
        }
    }

    pub fn ladder(self) -> std::ops::RangeInclusive<u32> {
        match self {
            Scale::Desk => 1..=7,
            Scale::Full => 1..=9,
        }
    }

    pub fn reference_exponent(self) -> u32 {
        match self {
            Scale::Desk => 10,
            Scale::Full => 12,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        })
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(format!("unknown scale `{other}` (expected desk or full)")),
        }
    }
}
