//! Forward Newton-Euler simulation, used as an independent oracle: feed the
//! inverse-dynamics outputs back in and check that the commanded trajectory
//! and attitude come back out.
//!
//! The forward model recomputes the aerodynamic angles from the simulated
//! state rather than trusting the inverse solution, and the tether force is
//! re-derived from the instantaneous position, so the round trip genuinely
//! exercises the model instead of replaying it.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::aero::{self, AeroPolar, AircraftParams};
use crate::error::{Error, Result};
use crate::geom::{BodyVec, Rot3, WorldVec};
use crate::inverse::TrimOptions;
use crate::tether::{self, TetherScenario};

/// Re-orthonormalization threshold on the attitude during integration.
pub const ATTITUDE_DRIFT_TOL: f64 = 1e-9;

/// Rigid-body state in world coordinates with a body-frame rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub position: WorldVec,
    pub velocity: WorldVec,
    pub attitude: Rot3,
    pub omega_body: BodyVec,
}

impl RigidBodyState {
    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.velocity.is_finite()
            && self.omega_body.is_finite()
            && self.attitude.matrix().iter().all(|v| v.is_finite())
    }
}

/// Inputs fed to the plant at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleInputs {
    /// Thrust along the body thrust axis [N].
    pub thrust: f64,
    /// Commanded `(C_l, C_m, C_n)`.
    pub moment_coeffs: [f64; 3],
    /// External force at the CoM, world frame [N].
    pub f_ext_world: WorldVec,
    /// External moment at the CoM, body frame [N m].
    pub tau_ext_body: BodyVec,
    /// Wind velocity [m/s].
    pub wind_world: WorldVec,
}

impl ScheduleInputs {
    pub fn coast() -> Self {
        Self {
            thrust: 0.0,
            moment_coeffs: [0.0; 3],
            f_ext_world: WorldVec::zeros(),
            tau_ext_body: BodyVec::zeros(),
            wind_world: WorldVec::zeros(),
        }
    }
}

/// Input source for [`integrate`]. The state is passed so that physically
/// attached loads (a cable, for instance) can follow the simulated position
/// rather than a precomputed schedule.
pub trait InputSchedule {
    fn sample(&self, t: f64, state: &RigidBodyState) -> ScheduleInputs;
}

impl<F> InputSchedule for F
where
    F: Fn(f64, &RigidBodyState) -> ScheduleInputs,
{
    fn sample(&self, t: f64, state: &RigidBodyState) -> ScheduleInputs {
        self(t, state)
    }
}

/// Time derivative of the state under the full model.
#[derive(Debug, Clone, Copy)]
pub struct StateDerivative {
    pub velocity: WorldVec,
    pub acceleration: WorldVec,
    /// Body-frame attitude rate (the angular velocity itself).
    pub omega_body: BodyVec,
    pub omega_dot_body: BodyVec,
}

/// Evaluates the equations of motion at one state.
///
/// Translational balance in world frame, rotational in body frame; the
/// aerodynamic force comes from the state's own air-relative angles through
/// the geometric direction triad (side-force coefficient fixed at zero).
pub fn dynamics_rhs(
    state: &RigidBodyState,
    inputs: &ScheduleInputs,
    params: &AircraftParams,
    polar: &AeroPolar,
    gravity: f64,
    eps_airspeed: f64,
) -> Result<StateDerivative> {
    let inv_inertia = params
        .inertia
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("inertia is singular".into()))?;
    dynamics_rhs_with_inv(state, inputs, params, polar, gravity, eps_airspeed, &inv_inertia)
}

/// One state of an integrated trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TimedState {
    pub t: f64,
    pub state: RigidBodyState,
}

/// Classical fourth-order one-step integration of the rigid-body equations.
///
/// Position, velocity, and body rate take the standard RK4 update; the
/// attitude is propagated by `R <- R exp(hat(omega_bar dt))` with the
/// stage-averaged body rate, which keeps the rotation on SO(3) up to
/// rounding. States are emitted at every step, the initial one included.
pub fn integrate<S: InputSchedule + ?Sized>(
    state0: RigidBodyState,
    schedule: &S,
    params: &AircraftParams,
    polar: &AeroPolar,
    gravity: f64,
    eps_airspeed: f64,
    dt: f64,
    t_end: f64,
) -> Result<Vec<TimedState>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    params.validate()?;
    let inv_inertia = params
        .inertia
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("inertia is singular".into()))?;

    // Stage evaluation with the attitude parameterized as R0 exp(hat(sigma)).
    let stage = |t: f64,
                 base: &RigidBodyState,
                 p: Vector3<f64>,
                 v: Vector3<f64>,
                 sigma: Vector3<f64>,
                 w: Vector3<f64>|
     -> Result<(Vector3<f64>, Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
        let state = RigidBodyState {
            position: WorldVec::from(p),
            velocity: WorldVec::from(v),
            attitude: base.attitude * Rot3::exp(sigma),
            omega_body: BodyVec::from(w),
        };
        let inputs = schedule.sample(t, &state);
        let d = dynamics_rhs_with_inv(&state, &inputs, params, polar, gravity, eps_airspeed, &inv_inertia)?;
        Ok((v, d.acceleration.raw(), w, d.omega_dot_body.raw()))
    };

    let n_steps = ((t_end / dt).round() as usize).max(0);
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut t = 0.0;
    let mut state = state0;
    out.push(TimedState { t, state });

    for step in 0..n_steps {
        if !state.is_finite() {
            return Err(Error::NonFiniteState { t });
        }
        let p0 = state.position.raw();
        let v0 = state.velocity.raw();
        let w0 = state.omega_body.raw();
        let zero = Vector3::zeros();

        let k1 = stage(t, &state, p0, v0, zero, w0)?;
        let h2 = 0.5 * dt;
        let k2 = stage(t + h2, &state, p0 + h2 * k1.0, v0 + h2 * k1.1, h2 * k1.2, w0 + h2 * k1.3)?;
        let k3 = stage(t + h2, &state, p0 + h2 * k2.0, v0 + h2 * k2.1, h2 * k2.2, w0 + h2 * k2.3)?;
        let k4 = stage(t + dt, &state, p0 + dt * k3.0, v0 + dt * k3.1, dt * k3.2, w0 + dt * k3.3)?;

        let sixth = dt / 6.0;
        let position = WorldVec::from(p0 + sixth * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0));
        let velocity = WorldVec::from(v0 + sixth * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1));
        let sigma = sixth * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        let omega_body = BodyVec::from(w0 + sixth * (k1.3 + 2.0 * k2.3 + 2.0 * k3.3 + k4.3));

        let mut attitude = state.attitude * Rot3::exp(sigma);
        if attitude.orthonormality_error() > ATTITUDE_DRIFT_TOL {
            attitude = attitude.renormalized();
        }

        t = (step as f64 + 1.0) * dt;
        state = RigidBodyState { position, velocity, attitude, omega_body };
        out.push(TimedState { t, state });
    }
    if !state.is_finite() {
        return Err(Error::NonFiniteState { t });
    }
    Ok(out)
}

/// Same as [`dynamics_rhs`] with a precomputed inertia inverse.
fn dynamics_rhs_with_inv(
    state: &RigidBodyState,
    inputs: &ScheduleInputs,
    params: &AircraftParams,
    polar: &AeroPolar,
    gravity: f64,
    eps_airspeed: f64,
    inv_inertia: &Matrix3<f64>,
) -> Result<StateDerivative> {
    let air = aero::air_state(
        state.velocity,
        inputs.wind_world,
        &state.attitude,
        params.rho,
        eps_airspeed,
    );
    let dirs = aero::aero_directions(air.e_air_body, BodyVec::normal_axis())?;
    let alpha = aero::angle_of_attack(air.e_air_body);
    let (c_l, c_d) = polar.eval(alpha);
    let f_aero_body =
        aero::aero_force_body(air.dynamic_pressure, params.s_ref, c_d, c_l, 0.0, &dirs);
    let f_prop_body = params.thrust_dir_body * inputs.thrust;
    let weight = WorldVec::up() * (-gravity * params.mass);
    let f_total = weight
        + state.attitude.to_world(f_prop_body + f_aero_body)
        + inputs.f_ext_world;

    let [cl_m, cm_m, cn_m] = inputs.moment_coeffs;
    let tau_aero = aero::aero_moment_body(
        air.dynamic_pressure,
        params.s_ref,
        params.span,
        params.chord,
        cl_m,
        cm_m,
        cn_m,
        &params.rate_damping,
        state.omega_body,
    );
    let tau_total = tau_aero + inputs.tau_ext_body;
    let w = state.omega_body.raw();
    let omega_dot = inv_inertia * (tau_total.raw() - w.cross(&(params.inertia * w)));

    Ok(StateDerivative {
        velocity: state.velocity,
        acceleration: f_total / params.mass,
        omega_body: state.omega_body,
        omega_dot_body: BodyVec::from(omega_dot),
    })
}

/// Maximum deviations of an integrated trajectory from its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Largest position error [m].
    pub max_pos_err: f64,
    /// Largest attitude geodesic angle [rad].
    pub max_att_err: f64,
    /// Largest speed error [m/s].
    pub max_speed_err: f64,
    /// Integration step [s].
    pub dt: f64,
    /// Simulated span [s].
    pub t_end: f64,
    pub n_steps: usize,
}

/// One telemetry sample of a round-trip run.
#[derive(Debug, Clone, Copy)]
pub struct TelemetryRow {
    pub t: f64,
    pub position: WorldVec,
    pub attitude: Rot3,
    pub omega_body: BodyVec,
    pub pos_err: f64,
    pub att_err: f64,
}

/// Round-trip result: the error report plus the full telemetry trace.
#[derive(Debug, Clone)]
pub struct RoundtripResult {
    pub report: ErrorReport,
    pub telemetry: Vec<TelemetryRow>,
}

/// Open-loop inputs realizing a tethered parallel orbit. Thrust and moment
/// coefficients are the constant trim values; the cable force follows the
/// simulated position (`-F_ext p/||p||`), not the reference orbit.
pub struct TetherSchedule {
    pub thrust: f64,
    pub moment_coeffs: [f64; 3],
    pub f_ext: f64,
}

impl InputSchedule for TetherSchedule {
    fn sample(&self, _t: f64, state: &RigidBodyState) -> ScheduleInputs {
        let f_ext_world = state
            .position
            .normalized()
            .map(|e_r| -e_r * self.f_ext)
            .unwrap_or_else(WorldVec::zeros);
        ScheduleInputs {
            thrust: self.thrust,
            moment_coeffs: self.moment_coeffs,
            f_ext_world,
            tau_ext_body: BodyVec::zeros(),
            wind_world: WorldVec::zeros(),
        }
    }
}

/// Inverts the tethered scenario analytically, integrates the resulting
/// inputs forward for `n_orbits` revolutions, and reports the maximum
/// position/attitude/speed deviations from the analytic references.
pub fn roundtrip_verify(
    scenario: &TetherScenario,
    params: &AircraftParams,
    polar: &AeroPolar,
    dt: f64,
    n_orbits: f64,
) -> Result<RoundtripResult> {
    let trim_opts = TrimOptions { alpha_max: params.alpha_max, ..TrimOptions::default() };
    let solution = tether::solve_parallel(scenario, polar, params.s_ref, &trim_opts)?;
    if solution.trim.alpha.abs() > params.alpha_max {
        return Err(Error::Infeasible(crate::error::InfeasibleReason::AlphaExceedsMax));
    }
    if solution.trim.thrust > params.t_max {
        return Err(Error::Infeasible(crate::error::InfeasibleReason::ThrustExceedsMax));
    }
    let coeffs = solution.moment_coefficients(params)?;

    let schedule = TetherSchedule {
        thrust: solution.trim.thrust,
        moment_coeffs: coeffs,
        f_ext: scenario.f_ext,
    };

    let r0 = solution.attitude(0.0);
    let pt0 = solution.trajectory_point(0.0);
    let state0 = RigidBodyState {
        position: pt0.position,
        velocity: pt0.velocity,
        attitude: r0,
        omega_body: solution.rates(0.0).omega_body,
    };

    let t_end = n_orbits * solution.orbit_period();
    let trace = integrate(
        state0,
        &schedule,
        params,
        polar,
        scenario.gravity,
        aero::DEFAULT_EPS_AIRSPEED,
        dt,
        t_end,
    )?;

    let mut report = ErrorReport {
        max_pos_err: 0.0,
        max_att_err: 0.0,
        max_speed_err: 0.0,
        dt,
        t_end,
        n_steps: trace.len().saturating_sub(1),
    };
    let telemetry = trace
        .iter()
        .map(|ts| {
            let ref_pt = solution.trajectory_point(ts.t);
            let ref_att = solution.attitude(ts.t);
            let pos_err = (ts.state.position - ref_pt.position).norm();
            let att_err = ref_att.geodesic_angle_to(&ts.state.attitude);
            let speed_err = (ts.state.velocity.norm() - ref_pt.velocity.norm()).abs();
            report.max_pos_err = report.max_pos_err.max(pos_err);
            report.max_att_err = report.max_att_err.max(att_err);
            report.max_speed_err = report.max_speed_err.max(speed_err);
            TelemetryRow {
                t: ts.t,
                position: ts.state.position,
                attitude: ts.state.attitude,
                omega_body: ts.state.omega_body,
                pos_err,
                att_err,
            }
        })
        .collect();

    Ok(RoundtripResult { report, telemetry })
}
