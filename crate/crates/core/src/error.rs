//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex {vertex} out of range for {n}-vertex graph")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("pauli product has odd i-power (non-Hermitian result)")]
    NonHermitianProduct,
    #[error("readout channel not invertible: eps + eta = {0} >= 1")]
    SingularChannel(f64),
    #[error("flip rate undefined: qubit {qubit} never prepared in {value}")]
    UndefinedRate { qubit: usize, value: u8 },
    #[error("pair ({j},{k}): prepared pattern {pattern:02b} has no surviving records")]
    EmptyColumn { j: usize, k: usize, pattern: u8 },
    #[error("matrix logarithm failed: {0}")]
    MatrixLog(String),
    #[error("size overflow: {0}")]
    SizeOverflow(String),
    #[error("window overflow: {needed} live qubits exceed cap {cap}")]
    WindowOverflow { needed: usize, cap: usize },
    #[error("exit rate {rate} exceeds gamma {gamma}: noise strength underestimated")]
    GammaUnderestimated { rate: f64, gamma: f64 },
    #[error("oscillation fit did not converge: {0}")]
    FitDiverged(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config: {0}")]
    Config(String),
    #[error("file: {0}")]
    File(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
