use thiserror::Error;

use crate::env_model::RegimeTag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("operation requires {required} regime, distribution is {actual:?}")]
    Regime {
        required: &'static str,
        actual: RegimeTag,
    },

    #[error("E_P rho_0 = {0} >= 1, bound undefined")]
    MeanRhoNotBelowOne(f64),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("site {site} outside environment window [{lo}, {hi}]")]
    OutOfWindow { site: i64, lo: i64, hi: i64 },

    #[error(
        "environment window [{have_lo}, {have_hi}] does not cover required [{need_lo}, {need_hi}]"
    )]
    WindowTooSmall {
        need_lo: i64,
        need_hi: i64,
        have_lo: i64,
        have_hi: i64,
    },

    #[error("bridge constraint needs an even step count, got {0}")]
    Parity(usize),

    #[error("expected a < x < b, got a={a}, x={x}, b={b}")]
    Ordering { a: i64, x: i64, b: i64 },

    #[error("P(X_2n = 0) vanished for n = {0}")]
    DegenerateBridge(usize),

    #[error("path is not a bridge: {0}")]
    NotABridge(String),

    #[error("support has no gap above omega_min (eta = 0)")]
    Gap,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
