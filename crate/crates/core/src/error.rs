//! Error type shared by all modules.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum HelioxError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("mask selects no cells")]
    EmptyMask,
    #[error("mask is not edge-connected ({components} components)")]
    DisconnectedMask { components: usize },
    #[error("mask touches the lattice boundary (one-cell margin required)")]
    MaskTouchesBoundary,
    #[error("invalid domain parameter: {0}")]
    InvalidParameter(String),
    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: u8, got: u8 },
    #[error("cannot apply d to a degree-3 cochain")]
    TopDegree,
    #[error("fields live on different complexes")]
    ComplexMismatch,
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("field is not tangential: boundary-normal residual {residual:e}")]
    NotTangential { residual: f64 },
    #[error("field is not divergence-free: residual {residual:e} exceeds {threshold:e}")]
    NotDivergenceFree { residual: f64, threshold: f64 },
    #[error("linear solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("flux matrix is singular; atlas is inconsistent with the complex")]
    SingularFluxMatrix,
    #[error("topology atlas does not match: {0}")]
    AtlasMismatch(String),
    #[error("time step {dt:e} violates the stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("non-finite value detected at step {step}")]
    NanDetected { step: usize },
    #[error("zero field where a nonzero field is required")]
    ZeroField,
    #[error("unknown initial field name: {0}")]
    UnknownInitialField(String),
    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HelioxError>;
