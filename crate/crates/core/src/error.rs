use std::fmt;

use thiserror::Error;

/// A rejected input row, with its 1-based line number in the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("{what} = {value} is outside {domain}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("hessian evaluation failed at {point:?}")]
    HessianFailure { point: Vec<f64> },

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("constant not certified: {0}")]
    NotCertified(String),

    #[error("not a stochastic vector: {0}")]
    NotStochastic(String),

    #[error("{} malformed row(s); first: {}", .0.len(), .0.first().map(|r| r.to_string()).unwrap_or_default())]
    MalformedRows(Vec<RowError>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_same_len<A, B>(a: &[A], b: &[B]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    Ok(())
}

pub(crate) fn ensure_unit(what: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfDomain {
            what,
            value: p,
            domain: "[0, 1]",
        });
    }
    Ok(())
}

pub(crate) fn ensure_unit_cube(what: &'static str, v: &[f64]) -> Result<()> {
    for &x in v {
        ensure_unit(what, x)?;
    }
    Ok(())
}

/// Checks nonnegativity and unit mass within `tol`.
pub(crate) fn ensure_stochastic(what: &str, v: &[f64], tol: f64) -> Result<()> {
    if v.is_empty() {
        return Err(Error::NotStochastic(format!("{what} is empty")));
    }
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::NotStochastic(format!("{what} has entry {x}")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::NotStochastic(format!("{what} sums to {s}")));
    }
    Ok(())
}
