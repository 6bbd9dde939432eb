//! Error and infeasibility vocabulary shared across the crate.

use std::fmt;
use std::str::FromStr;

/// Why a trajectory sample cannot be realized by the aircraft.
///
/// These show up both as hard errors (standalone solver calls) and as
/// per-sample flags in [`crate::inverse::InverseSolution`], where the sweep
/// keeps going.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InfeasibleReason {
    /// The (T, alpha) fixed point has no root inside the stall bracket.
    NoTrim,
    /// The axial balance would need thrust pointing backwards everywhere.
    NegativeThrust,
    /// The trim angle of attack exceeds the stall bound.
    AlphaExceedsMax,
    /// The trim thrust exceeds the propulsion limit.
    ThrustExceedsMax,
    /// Dynamic pressure is too small to realize moment coefficients.
    NoDynamicPressure,
    /// One or more surface deflections were clamped to their limits.
    Saturation,
    /// The control effectiveness matrix has rank < 3.
    Unallocatable,
    /// No frame choice pins the attitude (vertical flight with no history).
    UndefinedAttitude,
}

impl InfeasibleReason {
    /// Stable token used in CSV flag columns.
    pub fn token(&self) -> &'static str {
        match self {
            Self::NoTrim => "no_trim",
            Self::NegativeThrust => "negative_thrust",
            Self::AlphaExceedsMax => "alpha_exceeds_max",
            Self::ThrustExceedsMax => "thrust_exceeds_max",
            Self::NoDynamicPressure => "no_dynamic_pressure",
            Self::Saturation => "saturation",
            Self::Unallocatable => "unallocatable",
            Self::UndefinedAttitude => "undefined_attitude",
        }
    }
}

impl fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for InfeasibleReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_trim" => Ok(Self::NoTrim),
            "negative_thrust" => Ok(Self::NegativeThrust),
            "alpha_exceeds_max" => Ok(Self::AlphaExceedsMax),
            "thrust_exceeds_max" => Ok(Self::ThrustExceedsMax),
            "no_dynamic_pressure" => Ok(Self::NoDynamicPressure),
            "saturation" => Ok(Self::Saturation),
            "unallocatable" => Ok(Self::Unallocatable),
            "undefined_attitude" => Ok(Self::UndefinedAttitude),
            other => Err(format!("unknown infeasibility token `{other}`")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric: symmetric part norm {residual:.3e} exceeds {tol:.1e}")]
    NotSkewSymmetric { residual: f64, tol: f64 },

    #[error("axes do not form a right-handed orthonormal triad (Gram residual {gram_residual:.3e})")]
    NonOrthonormalAxes { gram_residual: f64 },

    #[error("finite-difference step {h:.3e} is not representable at t = {t}")]
    StepTooSmall { t: f64, h: f64 },

    #[error("airflow is parallel to the wing normal; lift direction is undefined{}",
            .surface.map(|i| format!(" (surface {i})")).unwrap_or_default())]
    DegenerateLift { surface: Option<usize> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("flight path is vertical and no previous attitude is available")]
    VerticalFlightNoHistory,

    #[error("perpendicular force demand is exactly zero; trajectory frame is undefined")]
    ZeroPerpendicularDemand,

    #[error("external force would invert the aircraft (1 + eta cos(theta) <= 0)")]
    InvertedRegime,

    #[error("infeasible: {0}")]
    Infeasible(InfeasibleReason),

    #[error("integration state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("{path}:{line}: {msg}")]
    Malformed { path: String, line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
