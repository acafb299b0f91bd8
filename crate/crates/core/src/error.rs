use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("twisting violated at exponent {exponent}: {detail}")]
    Twisting { exponent: i32, detail: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("division by the zero function")]
    DivisionByZero,

    #[error(
        "iwasawa solver did not converge: residual {residual:e} after {iterations} refinements"
    )]
    NotConverged { residual: f64, iterations: usize },

    #[error("loop lies outside the big cell (condition estimate {condition:e})")]
    OutsideBigCell { condition: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("inconsistent monodromy: spread {spread:e} across base points")]
    InconsistentMonodromy { spread: f64 },

    #[error("invalid Möbius map: {0}")]
    InvalidMoebius(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
