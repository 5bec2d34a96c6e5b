use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A field element does not fit in GF(2^q).
    #[error("element {value:#x} out of range for GF(2^{q})")]
    ElementOutOfRange { value: u8, q: u8 },

    /// Multiplicative inverse of zero requested.
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,

    /// An argument violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Density outside the validity range of the fitted dependence model.
    #[error("density w={w} outside [3, {max_w}] supported by the fitted model for k={k}")]
    UnsupportedDensity { w: u32, k: u32, max_w: u32 },

    /// Payload shape or symbol range problem during encoding.
    #[error("encoding error: {0}")]
    Encoding(String),

    /// Decoding requested before the decoder reached full rank.
    #[error("generation not decodable: rank {rank} < k = {k}")]
    NotDecodable { rank: u32, k: u32 },

    /// A dependence-probability table has no usable entry for a state.
    #[error("no dependence probability available for state (r={r}, c={c})")]
    ThetaUnavailable { r: u32, c: u32 },

    /// Monte Carlo state synthesis failed to reach the requested state.
    #[error("could not synthesize decoder state (r={r}, c={c}) within {attempts} attempts")]
    Synthesis { r: u32, c: u32, attempts: u32 },

    /// Regression failure (degenerate or insufficient samples).
    #[error("fit error: {0}")]
    Fit(String),

    /// Internal inconsistency while building or solving the chain.
    #[error("model construction error: {0}")]
    ModelConstruction(String),

    /// Model and simulation outputs cannot be compared.
    #[error("comparison error: {0}")]
    Comparison(String),

    /// Simulation exceeded its transmission cap without decoding.
    #[error("generation did not decode within {cap} transmissions (k={k})")]
    TransmissionCap { cap: u64, k: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Malformed table or report file.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
