use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown factor label `{0}`")]
    UnknownLabel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("quadrature did not converge: estimated error {estimate:.3e}, requested {requested:.3e}")]
    Quadrature { estimate: f64, requested: f64 },

    #[error("time grid is not uniformly spaced (step {index} deviates by {deviation:.3e})")]
    NonUniformGrid { index: usize, deviation: f64 },

    #[error("pencil is rank deficient for order {order}: singular value ratio {ratio:.3e}")]
    RankDeficient { order: usize, ratio: f64 },

    #[error("fitted exponent {re:.6e}{im:+.6e}i is unstable (positive real part beyond noise level)")]
    UnstableExponent { re: f64, im: f64 },

    #[error(
        "term {index} has weight {re:.6e}{im:+.6e}i; only real positive weights can be realized \
         as independent damped modes (complex-weight mode pairs are not supported)"
    )]
    UnsupportedWeight { index: usize, re: f64, im: f64 },

    #[error("truncation breach on `{label}`: top Fock population {population:.3e} exceeds {tolerance:.3e}")]
    TruncationBreach {
        label: String,
        population: f64,
        tolerance: f64,
    },

    #[error("resource cap exceeded: {what} = {value} > {cap}")]
    ResourceCap {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("frequency window holds only {fraction:.6} of the spectral weight (required {required:.6})")]
    WindowTooNarrow { fraction: f64, required: f64 },

    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
