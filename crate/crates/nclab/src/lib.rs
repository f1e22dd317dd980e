//! Exact-plus-numeric toolkit for noncommutative calculus and 1/N² expansions
//! of GUE tensor models: free difference quotients and their derived builders,
//! exact first-order corrections, Gaussian Wick oracles, random-matrix
//! experiments, and Cauchy-transform scaling checks.

pub mod cauchy;
pub mod freemoments;
pub mod guewick;
pub mod linalg;
pub mod matched;
pub mod ncpoly;
pub mod parraud;
pub mod rmt;
pub mod scalar;

pub use scalar::{CQ, Q};

/// Library version, embedded in artifact files written by downstream tools.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("operation requires selfadjoint letters only, found a Cayley letter")]
    MixedKind,
    #[error("tensor slot {slot} out of range for order {order}")]
    SlotOutOfRange { slot: usize, order: usize },
    #[error("expected {expected} inserted polynomials, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("fresh family labels must be pairwise distinct")]
    DuplicateFamily,
    #[error("letter family is not one of the four first-level interpolation families")]
    NonJ1Letter,
    #[error("word length {len} exceeds the degree cap {cap}")]
    DegreeCap { len: usize, cap: usize },
    #[error("intermediate term count would exceed the cap of {cap} terms")]
    TermCap { cap: usize },
    #[error("marginal moments not available to depth {needed}")]
    MarginalDepth { needed: usize },
    #[error("quadrature failed to converge to {tol:e} (last correction {last:e})")]
    QuadratureNonConvergence { tol: f64, last: f64 },
    #[error("matrix dimensions are inconsistent: {0}")]
    SizeMismatch(String),
    #[error("dense materialization of size {size} exceeds the cap {cap}")]
    MemoryCap { size: usize, cap: usize },
    #[error("eigenvalue iteration did not converge within {iters} iterations")]
    NonConvergence { iters: usize },
    #[error("fit is degenerate: {0}")]
    DegenerateFit(String),
    #[error("evaluation point must have nonzero imaginary part")]
    RealEvaluationPoint,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("linear algebra backend error: {0}")]
    Backend(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
