//! Error type shared by every numeric routine in the crate.

use thiserror::Error;

/// Errors raised by basis construction, operator assembly, and the spectral
/// routines. Variants are deliberately specific so callers (and the CLI exit
/// codes) can distinguish "the input is wrong" from "the computation could
/// not decide".
#[derive(Debug, Error)]
pub enum McsError {
    /// Invalid model parameters (layer count, tunneling list length, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The requested operation needs a rotation-closed momentum set, but the
    /// basis was built at a Bloch momentum without threefold symmetry.
    #[error("momentum set is not rotation-closed: {0}")]
    RotationNotClosed(String),

    /// Two operators or vectors live on different spaces.
    #[error("domain/codomain mismatch: {0}")]
    SpaceMismatch(String),

    /// A "generic" Bloch momentum collided with a lattice momentum, which
    /// would make the unperturbed diagonal singular.
    #[error("bloch momentum collides with the lattice (min |q + k| = {0:.3e}); pick a different k")]
    GenericKCollision(f64),

    /// The spectral projector trace was not close to an integer, meaning the
    /// contour runs too close to spectrum.
    #[error("contour too close to spectrum: projector trace deviates from an integer by {0:.3e}")]
    ContourCollision(f64),

    /// Kernel dimension could not be decided from the singular-value gap.
    #[error("kernel dimension ambiguous: {0}")]
    KernelAmbiguous(String),

    /// A Jordan chain iterate failed its residual check before reaching the
    /// expected length.
    #[error("jordan chain breaks at step {step}: residual {residual:.3e} (expected length {expected})")]
    ChainBreak {
        step: usize,
        expected: usize,
        residual: f64,
    },

    /// A band expected to vanish at the crossing center does not.
    #[error("band {band} not pinned at the crossing center: E = {value:.3e} exceeds {tol:.3e}")]
    BandNotPinned { band: usize, value: f64, tol: f64 },

    /// The log-log fit residual is too large for a power law to be read off.
    #[error("fit window too coarse: log-log residual {0:.3e}")]
    WindowTooCoarse(f64),

    /// A pairing that must stay away from zero (gauge fixing) collapsed,
    /// usually indicating that the truncation is too small.
    #[error("truncation too small: pairing |<u_1, v_{{n-1}}>| = {0:.3e} is numerically zero")]
    TruncationFailure(f64),

    /// The computation finished but its own consistency checks failed, so no
    /// answer is reported.
    #[error("numerically inconclusive: {0}")]
    Inconclusive(String),

    /// LAPACK failure (non-convergence, illegal argument).
    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, McsError>;
