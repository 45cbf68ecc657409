use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared across the crate.
///
/// `is_validation` separates bad inputs from numerical breakdowns, which the
/// command-line front end maps to distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("gamma must exceed 1 (got {0})")]
    GammaOutOfRange(f64),

    #[error("Newton iteration did not converge (last residual {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("domain too small: boundary mismatch {mismatch:.3e}")]
    DomainTooSmall { mismatch: f64 },
    #[error("decay-fit window underflow: values below {floor:.1e} in window")]
    WindowUnderflow { floor: f64 },
    #[error("shift |alpha| = {alpha} exceeds L/4 = {limit}")]
    ShiftTooLarge { alpha: f64, limit: f64 },

    #[error("shifted factorization singular at sigma = {sigma}")]
    FactorizationSingular { sigma: f64 },
    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("R = {r} too small: lambda_1 = {lambda1:.3e}, lambda_2 = {lambda2:.3e}")]
    SmallR { r: f64, lambda1: f64, lambda2: f64 },

    #[error("inner fixed-point iteration did not converge (last update {update:.3e})")]
    InnerNoConvergence { update: f64 },
    #[error("non-finite value in state at step {step}")]
    NonFinite { step: usize },
    #[error("energy drift {drift:.3e} exceeds limit at t = {time}")]
    EnergyDriftExceeded { drift: f64, time: f64 },

    #[error("modulation fit left the basin (residual {residual:.3e})")]
    OutsideBasin { residual: f64 },
    #[error("modulation tracking lost at t = {time}")]
    TrackingLost { time: f64 },
    #[error("orthogonality conditions violated (max residual {residual:.3e})")]
    OrthogonalityViolated { residual: f64 },

    #[error("golden entry {name} drifted by {relative:.2} tolerances; rerun with --force to accept")]
    GoldenDrift { name: String, relative: f64 },
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::LengthMismatch { .. }
                | Error::GridMismatch
                | Error::GammaOutOfRange(_)
                | Error::ShiftTooLarge { .. }
                | Error::DomainTooSmall { .. }
                | Error::GoldenDrift { .. }
        )
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 1.0 {
        Ok(())
    } else {
        Err(Error::GammaOutOfRange(gamma))
    }
}
