//! Crate-wide error type aggregating the per-layer errors.

use thiserror::Error;

use crate::chart::ChartError;
use crate::expr::{ExprError, ParseError};
use crate::field::FieldError;
use crate::ham::HamError;
use crate::ode::OdeError;
use crate::structure::StructureError;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Ham(#[from] HamError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(
        "numerically indeterminate rank at order {order}: singular value gap \
         {kept:.3e} / {dropped:.3e} is below the safety factor"
    )]
    IndeterminateRank { order: usize, kept: f64, dropped: f64 },
    #[error("growth vector is not constant along the curve: {detail}")]
    NotEquiregular { detail: String },
    #[error("frame file, line {line}: {msg}")]
    FrameFile { line: usize, msg: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type CoreResult<T> = Result<T, CoreError>;
