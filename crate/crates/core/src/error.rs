use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("resolution {resolution} px/a gives {pixels:.2} px across a hole diameter (need >= 4)")]
    UnderResolved { resolution: usize, pixels: f64 },

    #[error("fourier cutoff {cutoff} exceeds the Nyquist limit of a {nx}x{ny} grid")]
    CutoffAboveNyquist { cutoff: usize, nx: usize, ny: usize },

    #[error("invalid solver input: {0}")]
    InvalidSolverInput(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("band crossing near k_frac={k_frac}: eigenvector overlap {overlap:.4} < 0.9")]
    BandCrossing { k_frac: f64, overlap: f64 },

    #[error("no confined band in the bulk gap [{gap_lo:.5}, {gap_hi:.5}] (omega a / 2 pi c)")]
    NoConfinedBand { gap_lo: f64, gap_hi: f64 },

    #[error("cannot normalize a zero field")]
    ZeroField,

    #[error("mode is not normalized")]
    NotNormalized,

    #[error("field grid invariant violated: {0}")]
    GridInvariant(String),

    #[error("missing metadata field `{0}`")]
    MissingMetadata(&'static str),

    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("unsupported PCWF version header `{0}`")]
    Version(String),

    #[error("point ({x:.4e}, {y:.4e}) lies outside the transverse extent of the grid")]
    OutsideGrid { x: f64, y: f64 },

    #[error("polarization undefined where s0 = 0")]
    UndefinedPolarization,

    #[error("no usable polarization singularity: {0}")]
    NoSingularity(String),

    #[error("group velocity must be positive, got {0}")]
    NonPositiveGroupVelocity(f64),

    #[error("bare polarizability evaluated exactly at the pole; use the dressed amplitudes")]
    Pole,

    #[error("no resonance feature in the spectrum")]
    NoResonance,

    #[error("rate records refer to different positions")]
    PositionMismatch,

    #[error("all amplitudes are zero")]
    EmptyState,

    #[error("config error: {0}")]
    Config(String),

    #[error("missing upstream artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by user configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidLattice(_)
                | Error::UnderResolved { .. }
                | Error::CutoffAboveNyquist { .. }
                | Error::MissingArtifact(_)
                | Error::InvalidSolverInput(_)
        )
    }
}
