//! Inverse flight dynamics for fixed-wing aircraft, posed directly on SO(3).
//!
//! The library turns a center-of-mass trajectory plus external loads into the
//! attitude, angular velocity, thrust, angle of attack, and aerodynamic moment
//! coefficients that realize it under coordinated (zero-sideslip) flight. A
//! specialization to tethered flight on spherical parallels provides closed
//! forms for the bank angle, the zero-bank tension locus, and the trim angle
//! of attack, and a forward Newton-Euler integrator closes the loop as an
//! independent round-trip oracle.
//!
//! - [`geom`]: frame-tagged vectors, rotations, hat/vee, angular-rate extraction
//! - [`aero`]: air state, aerodynamic directions and angles, polar, presets
//! - [`inverse`]: the trajectory-to-input pipeline and the (T, alpha) solvers
//! - [`tether`]: spherical-parallel tethered flight, bank law, sensitivities
//! - [`forward`]: forward simulation and round-trip verification
//! - [`io`]: CSV/JSON schemas shared by the library and the CLI

pub mod aero;
pub mod error;
pub mod forward;
pub mod geom;
pub mod inverse;
pub mod io;
pub mod tether;

pub use aero::{AeroAngles, AeroDirections, AeroPolar, AirState, AircraftParams, Preset, PresetId};
pub use error::{Error, InfeasibleReason};
pub use forward::{ErrorReport, InputSchedule, RigidBodyState, ScheduleInputs};
pub use geom::{AngularState, Body, BodyVec, Frame, FrameVec, Rot3, World, WorldVec};
pub use inverse::{
    ControlAllocation, ForceDecomposition, InverseSolution, InvertOptions, TrajectoryPoint,
    TrimOptions, TrimPair,
};
pub use tether::{BankResult, DemandComponents, Regime, SensitivityReport, TetherScenario};

/// Standard gravitational acceleration [m/s^2].
pub const GRAVITY: f64 = 9.81;

/// ISA sea-level air density [kg/m^3].
pub const SEA_LEVEL_AIR_DENSITY: f64 = 1.225;
