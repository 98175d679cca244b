use thiserror::Error;

/// Unified error type for the whole laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix not Hermitian: worst entry pair ({row},{col})/({col},{row}) differs from conjugate symmetry by {diff:.3e} (tolerance {tol:.1e})")]
    NotHermitian {
        row: usize,
        col: usize,
        diff: f64,
        tol: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("state not normalized: norm = {norm} (tolerance {tol:.1e})")]
    Unnormalized { norm: f64, tol: f64 },

    #[error("{context}: size {requested} exceeds supported maximum {max}")]
    SizeLimit {
        context: &'static str,
        requested: usize,
        max: usize,
    },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("forced branch {bit} has probability {probability:.3e}; branch is degenerate")]
    DegenerateBranch { bit: u8, probability: f64 },

    #[error("joint success probability underflowed ({probability:.3e} < 1e-300); reduce the cycle count")]
    Underflow { probability: f64 },

    #[error("target at E = {target:.6} is not isolated: competing levels (energy, weight) within {radius:.4}: {competitors:?}")]
    AmbiguousTarget {
        target: f64,
        radius: f64,
        competitors: Vec<(f64, f64)>,
    },

    #[error("integrator did not converge after {doublings} step doublings (last change {last_change:.3e}, tolerance {tol:.1e})")]
    NotConverged {
        doublings: u32,
        last_change: f64,
        tol: f64,
    },

    #[error("search failed: no peak above threshold after {scans} scan(s); windows visited: {windows:?}")]
    SearchFailed {
        scans: usize,
        windows: Vec<(f64, f64)>,
    },

    #[error("occupied level E = {energy:.6} lies outside the phase window [{lo:.6}, {hi:.6}]")]
    LevelOutsideWindow { energy: f64, lo: f64, hi: f64 },

    #[error("duplicate matrix entry at ({row},{col})")]
    DuplicateEntry { row: usize, col: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("digest mismatch for {path}: manifest records {expected}, file has {found}")]
    DigestMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
