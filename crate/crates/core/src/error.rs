//! Error type shared across the crate.

use alloc::boxed::Box;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors produced by geometry, solver, and pipeline routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input carried a NaN or infinity.
    NonFinite {
        /// Name of the offending input.
        what: &'static str,
    },
    /// A supplied value was outside the accepted domain.
    InvalidArgument {
        /// Description of the violated requirement.
        what: &'static str,
    },
    /// Two rasters that must share a shape did not.
    ShapeMismatch {
        /// Shape required by the operation, as (width, height).
        expected: (usize, usize),
        /// Shape actually supplied, as (width, height).
        got: (usize, usize),
    },
    /// A point lies at or behind the camera and cannot be projected.
    ProjectionDomain {
        /// Depth of the offending point in meters.
        z: f64,
    },
    /// An inverse depth was not strictly positive where one is required.
    InverseDepthDomain {
        /// The offending inverse-depth value.
        d: f64,
    },
    /// A rotation angle is too close to pi for a stable logarithm.
    LogDomain {
        /// Rotation angle in radians.
        angle: f64,
        /// Pixel at which the rotation was encountered, when known.
        pixel: Option<(usize, usize)>,
    },
    /// An iterative solver stopped without reaching its tolerance.
    SolverDiverged {
        /// Relative residual at the final iteration.
        residual: f64,
        /// Number of iterations performed.
        iterations: usize,
    },
    /// A per-pixel numeric operation failed.
    Numeric {
        /// Description of the failure.
        what: &'static str,
        /// Pixel at which the failure occurred, when known.
        pixel: Option<(usize, usize)>,
    },
    /// An error raised inside a pipeline stage, tagged with its location.
    Pipeline {
        /// Scale index, coarsest first.
        scale: usize,
        /// Iteration index within the scale.
        iteration: usize,
        /// The underlying failure.
        source: Box<Error>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::InvalidArgument { what } => write!(f, "invalid argument: {what}"),
            Error::ShapeMismatch { expected, got } => write!(
                f,
                "shape mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Error::ProjectionDomain { z } => {
                write!(f, "cannot project point at depth {z} m")
            }
            Error::InverseDepthDomain { d } => {
                write!(f, "inverse depth {d} is not strictly positive")
            }
            Error::LogDomain { angle, pixel } => match pixel {
                Some((x, y)) => write!(
                    f,
                    "rotation angle {angle} rad too close to pi for log at pixel ({x}, {y})"
                ),
                None => write!(f, "rotation angle {angle} rad too close to pi for log"),
            },
            Error::SolverDiverged { residual, iterations } => write!(
                f,
                "solver stopped after {iterations} iterations with relative residual {residual}"
            ),
            Error::Numeric { what, pixel } => match pixel {
                Some((x, y)) => write!(f, "numeric failure at pixel ({x}, {y}): {what}"),
                None => write!(f, "numeric failure: {what}"),
            },
            Error::Pipeline { scale, iteration, source } => write!(
                f,
                "pipeline failure at scale {scale}, iteration {iteration}: {source}"
            ),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Pipeline { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

/// Attaches pipeline-stage context to an error.
pub(crate) fn at_stage(scale: usize, iteration: usize, err: Error) -> Error {
    Error::Pipeline { scale, iteration, source: Box::new(err) }
}
