//! Error type shared across the library.
//!
//! Variants split into two families, reflected in [`Error::exit_code`]:
//! invalid input (bad parameters, malformed configs, I/O) maps to exit
//! code 1, while numerical failure (solvers that did not converge to
//! tolerance, factorization breakdowns, overflow, out-of-budget requests)
//! maps to exit code 2.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside the supported domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested computation is well-formed but violates a model
    /// assumption (e.g. a level with zero coefficient, an empty tail).
    #[error("model assumption violated: {0}")]
    AssumptionViolation(String),

    /// A configuration file could not be interpreted.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem error while reading inputs or writing results.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A fixed-point solve failed to converge to tolerance.
    #[error("fixed-point solve failed: {0}")]
    FixedPoint(String),

    /// The two independent solution paths for the self-consistent
    /// equations disagree beyond tolerance — the result is not trusted.
    #[error(
        "solution paths disagree by {gap:.3e} at psi1={psi1}, psi2={psi2}, \
         zeta={zeta}, lambda_bar={lambda_bar}"
    )]
    PathDisagreement {
        gap: f64,
        psi1: f64,
        psi2: f64,
        zeta: f64,
        lambda_bar: f64,
    },

    /// A LAPACK routine reported failure (`info != 0`).
    #[error("linear algebra failure in {routine} (info={info}): {detail}")]
    Linalg {
        routine: &'static str,
        info: i32,
        detail: String,
    },

    /// A computation finished but failed its own accuracy check.
    #[error("accuracy check failed: {0}")]
    Accuracy(String),

    /// Exact integer computation exceeded 128-bit range.
    #[error("integer overflow: {0}")]
    Overflow(String),

    /// The request would exceed the memory budget.
    #[error("memory budget exceeded: {0}")]
    Memory(String),

    /// A Monte Carlo trial failed; carries the trial index and cause.
    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit code for CLI use: 1 for invalid input, 2 for
    /// numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::AssumptionViolation(_)
            | Error::Config(_)
            | Error::Io(_) => 1,
            Error::FixedPoint(_)
            | Error::PathDisagreement { .. }
            | Error::Linalg { .. }
            | Error::Accuracy(_)
            | Error::Overflow(_)
            | Error::Memory(_) => 2,
            Error::Trial { source, .. } => source.exit_code(),
        }
    }

    /// Wrap an error with the index of the Monte Carlo trial it occurred in.
    pub fn in_trial(self, trial: usize) -> Error {
        Error::Trial {
            trial,
            source: Box::new(self),
        }
    }
}
