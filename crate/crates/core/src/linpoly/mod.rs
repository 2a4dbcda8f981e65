//! Linear single-input single-output systems: exact polynomial algebra,
//! transfer functions, the internal-model pipeline for linear plants and the
//! similarity solve that embeds an exosystem into a larger linear system.

mod embed;
mod matrix;
mod pipeline;
mod poly;

use thiserror::Error;

pub use embed::{inf_norm, solve_embedding, EmbeddingResult, EmbeddingSpace, DEFAULT_EMBED_TOL};
pub use matrix::{dmatrix_rows, RMatrix};
pub use pipeline::{
    characteristic_polynomial, check_linear_adaptation, extract_internal_model_linear, feedback_decomposition, output_annihilator,
    poly_divmod, reassemble, transfer_function, AdaptationCheck, FeedbackDecomposition, LinSys, LinearIMResult,
    DEFAULT_EPS_STAB,
};
pub use poly::{pair_roots, poly_from_roots, poly_roots, Coeff, Poly, RPoly, RRationalFn, RationalFn, PAIRING_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinError {
    #[error("division by the zero polynomial")]
    DivisionByZero,
    #[error("numerator is identically zero; the feedback decomposition needs p ≢ 0")]
    ZeroNumerator,
    #[error("transfer function is not strictly proper")]
    NotStrictlyProper,
    #[error("no internal model: {pi} does not divide the numerator {p} (remainder {remainder})")]
    NoInternalModel { pi: String, p: String, remainder: String },
    #[error("exosystem polynomial {pi} has a stable mode at {root}")]
    StableMode { pi: String, root: String },
    #[error("exosystem polynomial must be monic of degree at least 1, got {0}")]
    BadExosystemPolynomial(String),
    #[error("no embedding: matching residual {residual:.3e} exceeds tolerance {tol:.1e}")]
    NoEmbedding { residual: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
