use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{rows} rows exceeds the size cap of {cap}")]
    SizeCap { rows: u128, cap: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergent { iterations: usize, residual: f64 },

    #[error("stationary mass of state {state} is {mass:.3e}, too small to reverse the chain")]
    ZeroStationaryMass { state: usize, mass: f64 },

    #[error("projected slices are numerically singular after {attempts} attempts")]
    SingularProjection { attempts: usize },

    #[error("eigenvalues with imaginary part {max_imag:.3e} after {attempts} attempts")]
    ComplexEigenvalues { attempts: usize, max_imag: f64 },

    #[error("eigenvalue pairing failed: {0}")]
    PairingFailure(String),

    #[error("matrix has numerical rank {rank} < {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("empty input")]
    EmptyInput,

    #[error("symbol {symbol} outside alphabet of size {m}")]
    AlphabetMismatch { symbol: usize, m: usize },

    #[error("index {index} out of range for bound {bound}")]
    OutOfRange { index: usize, bound: usize },

    #[error("output string has zero likelihood (step {step})")]
    ZeroLikelihood { step: usize },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{failed} cells failed, first at cell {first_cell}: {message}")]
    Partial { failed: usize, first_cell: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
