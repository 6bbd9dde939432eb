//! Closed-form trajectory-to-input inversion under coordinated flight.
//!
//! Given a CoM trajectory and external loads, each sample is processed in
//! order: required force, decomposition along the air-relative direction,
//! trajectory frame, attitude from the to-be-solved angle of attack, the
//! (T, alpha) fixed point, angular rates from the constructed attitude
//! history, required torque, moment coefficients, and control allocation.
//! Degenerate samples are flagged, never fatal: the sweep always completes.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::aero::{self, AeroPolar, AircraftParams};
use crate::error::{Error, InfeasibleReason, Result};
use crate::geom::{vee_lenient, AngularState, BodyVec, Rot3, WorldVec};

/// Relative threshold on `f_perp` below which the perpendicular demand is
/// treated as zero and the wings-level rule applies.
pub const DEGENERATE_PERP_REL_TOL: f64 = 1e-6;

/// One sample of the commanded trajectory with its external loads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    /// Sample time [s].
    pub t: f64,
    pub position: WorldVec,
    pub velocity: WorldVec,
    pub acceleration: WorldVec,
    /// Known external force at the CoM, world frame [N].
    pub f_ext_world: WorldVec,
    /// Known external moment at the CoM, body frame [N m].
    pub tau_ext_body: BodyVec,
    /// Wind velocity [m/s].
    pub wind_world: WorldVec,
}

impl TrajectoryPoint {
    /// A sample with no external loads and no wind.
    pub fn free(t: f64, position: WorldVec, velocity: WorldVec, acceleration: WorldVec) -> Self {
        Self {
            t,
            position,
            velocity,
            acceleration,
            f_ext_world: WorldVec::zeros(),
            tau_ext_body: BodyVec::zeros(),
            wind_world: WorldVec::zeros(),
        }
    }
}

/// Net force that propulsion and aerodynamics must generate:
/// `F_req = m a - m g^W - f_ext` with `g^W = -g e3`.
///
/// Wind never enters here; it only affects the aerodynamic directions and
/// the dynamic pressure downstream.
pub fn required_force(pt: &TrajectoryPoint, mass: f64, gravity: f64) -> WorldVec {
    pt.acceleration * mass + WorldVec::up() * (mass * gravity) - pt.f_ext_world
}

/// Split of the required force along and orthogonal to the air-relative
/// direction, plus the trajectory frame when it is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceDecomposition {
    pub f_req_world: WorldVec,
    /// Component along the flow [N].
    pub f_par: f64,
    pub f_perp_world: WorldVec,
    /// Norm of the perpendicular component [N].
    pub f_perp: f64,
    /// Required-lift direction (trajectory normal); `None` when degenerate.
    pub n_curve_world: Option<WorldVec>,
    /// Trajectory binormal, pointing to the aircraft's left; `None` when
    /// degenerate.
    pub s_traj_world: Option<WorldVec>,
    pub degenerate_perp: bool,
}

/// Decomposes `F_req` along `e_a` and fills the trajectory frame
/// `n_curve = F_perp / ||F_perp||`, `s_traj = n_curve x e_a` when the
/// perpendicular component is meaningfully nonzero.
pub fn decompose(f_req_world: WorldVec, e_air_world: WorldVec) -> ForceDecomposition {
    let f_par = f_req_world.dot(e_air_world);
    let f_perp_world = f_req_world - e_air_world * f_par;
    let f_perp = f_perp_world.norm();
    let degenerate = f_perp <= DEGENERATE_PERP_REL_TOL * f_req_world.norm().max(1.0);
    let (n_curve_world, s_traj_world) = if degenerate {
        (None, None)
    } else {
        let n = f_perp_world / f_perp;
        (Some(n), Some(n.cross(e_air_world)))
    };
    ForceDecomposition {
        f_req_world,
        f_par,
        f_perp_world,
        f_perp,
        n_curve_world,
        s_traj_world,
        degenerate_perp: degenerate,
    }
}

/// Wings-level frame for a purely axial force demand: projects world-up onto
/// the plane orthogonal to the flow, aligning the lift axis with gravity.
///
/// Fails for vertical flight (`e_a` parallel to e3), where the caller must
/// fall back to the previous sample's attitude.
pub fn degenerate_perp_frame(e_air_world: WorldVec) -> Result<(WorldVec, WorldVec)> {
    let up = WorldVec::up();
    let proj = up - e_air_world * up.dot(e_air_world);
    let norm = proj.norm();
    if norm <= 1e-6 {
        return Err(Error::VerticalFlightNoHistory);
    }
    let n_curve = proj / norm;
    Ok((n_curve, n_curve.cross(e_air_world)))
}

/// Body axes from the trajectory frame and the angle of attack: the frame is
/// rotated about the binormal so the nose pitches toward `n_curve`:
/// `c = cos(a) e_a + sin(a) n_curve`, `n = -sin(a) e_a + cos(a) n_curve`.
pub fn body_axes(
    alpha: f64,
    e_air_world: WorldVec,
    s_world: WorldVec,
    n_curve_world: WorldVec,
) -> Result<Rot3> {
    let c = e_air_world * alpha.cos() + n_curve_world * alpha.sin();
    let n = -e_air_world * alpha.sin() + n_curve_world * alpha.cos();
    Rot3::from_axes(c, s_world, n)
}

/// Thrust magnitude and angle of attack solving the planar force balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimPair {
    /// Thrust along the chord axis [N].
    pub thrust: f64,
    /// Angle of attack [rad].
    pub alpha: f64,
    /// Solver iterations spent (0 for closed forms).
    pub iterations: usize,
    /// Fixed-point residual `|alpha - atan2(T_perp, T_par)|` at the solution.
    pub residual: f64,
}

/// Options for the (T, alpha) solvers.
#[derive(Debug, Clone, Copy)]
pub struct TrimOptions {
    /// Initial guess (previous sample's alpha in sweeps).
    pub alpha0: f64,
    /// Bracket half-width; the stall bound [rad].
    pub alpha_max: f64,
    /// Residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrimOptions {
    fn default() -> Self {
        Self {
            alpha0: 0.0,
            alpha_max: 15f64.to_radians(),
            tol: 1e-12,
            max_iter: 100,
        }
    }
}

/// Solves the fixed point
/// `T_par(a) = f_par + qS C_D(a)`, `T_perp(a) = f_perp - qS C_L(a)`,
/// `a = atan2(T_perp(a), T_par(a))`, `T = sqrt(T_par^2 + T_perp^2)`
/// by Newton iteration with a bisection safeguard on
/// `[-alpha_max, alpha_max]`.
///
/// When both thrust components vanish (glider point), any alpha satisfies
/// the balance; the solver accepts the alpha where it happened.
pub fn solve_trim(
    f_par: f64,
    f_perp: f64,
    q: f64,
    s_ref: f64,
    polar: &AeroPolar,
    opts: &TrimOptions,
) -> Result<TrimPair> {
    if !(opts.alpha_max > 0.0) {
        return Err(Error::InvalidParameter("alpha_max must be positive".into()));
    }
    let qs = q * s_ref;
    let zero_thrust = 1e-12 * qs.abs().max(f_par.abs()).max(f_perp.abs()).max(1.0);

    let components = |alpha: f64| {
        (
            f_par + qs * polar.drag_coeff(alpha),
            f_perp - qs * polar.lift_coeff(alpha),
        )
    };
    let residual = |alpha: f64| {
        let (t_par, t_perp) = components(alpha);
        if t_par.hypot(t_perp) <= zero_thrust {
            0.0
        } else {
            alpha - t_perp.atan2(t_par)
        }
    };
    let residual_slope = |alpha: f64| {
        let (t_par, t_perp) = components(alpha);
        let t2 = t_par * t_par + t_perp * t_perp;
        if t2 <= zero_thrust * zero_thrust {
            return 1.0;
        }
        let d_par = qs * polar.drag_coeff_slope(alpha);
        let d_perp = -qs * polar.lift_coeff_slope(alpha);
        1.0 - (t_par * d_perp - t_perp * d_par) / t2
    };

    let finish = |alpha: f64, iterations: usize, res: f64| {
        let (t_par, t_perp) = components(alpha);
        TrimPair {
            thrust: t_par.hypot(t_perp),
            alpha,
            iterations,
            residual: res.abs(),
        }
    };

    let (mut lo, mut hi) = (-opts.alpha_max, opts.alpha_max);

    // Thrust can only pull forward. If the axial component is negative over
    // the whole bracket, the demand needs braking thrust: fail before the
    // atan2 branch jump at T_par < 0 fakes a root.
    if components(lo).0.max(components(hi).0) < 0.0 {
        let all_negative =
            (0..=32).all(|j| components(lo + (hi - lo) * (j as f64) / 32.0).0 < 0.0);
        if all_negative {
            return Err(Error::Infeasible(InfeasibleReason::NegativeThrust));
        }
    }

    let mut g_lo = residual(lo);
    let g_hi = residual(hi);

    let mut x = opts.alpha0.clamp(lo, hi);
    let mut g_x = residual(x);
    if g_x.abs() <= opts.tol {
        return Ok(finish(x, 0, g_x));
    }

    if g_lo * g_hi > 0.0 {
        // No sign change at the bracket ends: scan for one, or detect that
        // the axial balance is hopeless.
        let n_scan = 128;
        let mut bracket = None;
        let mut prev = (lo, g_lo);
        let mut t_par_max = f64::NEG_INFINITY;
        for j in 0..=n_scan {
            let a = lo + (hi - lo) * (j as f64) / (n_scan as f64);
            let g = residual(a);
            if g.abs() <= opts.tol {
                return Ok(finish(a, 0, g));
            }
            t_par_max = t_par_max.max(components(a).0);
            if j > 0 && prev.1 * g < 0.0 {
                bracket = Some((prev.0, a, prev.1));
                break;
            }
            prev = (a, g);
        }
        match bracket {
            Some((l, h, gl)) => {
                lo = l;
                hi = h;
                g_lo = gl;
                x = 0.5 * (lo + hi);
                g_x = residual(x);
            }
            None => {
                let reason = if t_par_max < 0.0 {
                    InfeasibleReason::NegativeThrust
                } else {
                    InfeasibleReason::NoTrim
                };
                return Err(Error::Infeasible(reason));
            }
        }
    }

    for iter in 1..=opts.max_iter {
        if g_x.abs() <= opts.tol {
            return Ok(finish(x, iter - 1, g_x));
        }
        if g_x.signum() == g_lo.signum() {
            lo = x;
            g_lo = g_x;
        } else {
            hi = x;
        }
        let slope = residual_slope(x);
        let mut next = x - g_x / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            break;
        }
        x = next;
        g_x = residual(x);
    }

    if g_x.abs() <= opts.tol {
        Ok(finish(x, opts.max_iter, g_x))
    } else {
        Err(Error::Infeasible(InfeasibleReason::NoTrim))
    }
}

/// Solves the scalar small-angle trim equation
/// `tan(a) = (f_perp - qS a_lift a) / (f_par + qS (C_D0 + k_alpha a^2))`
/// by safeguarded Newton on the same bracket as [`solve_trim`].
///
/// Uses the quadratic-polar coefficients of `polar` directly (the scalar
/// equation is specific to that model); custom coefficient maps are ignored.
pub fn solve_trim_smallangle(
    f_par: f64,
    f_perp: f64,
    q: f64,
    s_ref: f64,
    polar: &AeroPolar,
    opts: &TrimOptions,
) -> Result<f64> {
    let qs = q * s_ref;
    let drag = |a: f64| qs * (polar.c_d0 + polar.k_alpha * a * a);
    let psi = |a: f64| a.tan() * (f_par + drag(a)) - (f_perp - qs * polar.lift_slope * a);
    let psi_slope = |a: f64| {
        let sec2 = 1.0 + a.tan() * a.tan();
        sec2 * (f_par + drag(a)) + a.tan() * (2.0 * qs * polar.k_alpha * a) + qs * polar.lift_slope
    };

    let (mut lo, mut hi) = (-opts.alpha_max, opts.alpha_max);
    let mut g_lo = psi(lo);
    let g_hi = psi(hi);
    if g_lo * g_hi > 0.0 {
        return Err(Error::Infeasible(InfeasibleReason::NoTrim));
    }
    let mut x = opts.alpha0.clamp(lo, hi);
    let mut g_x = psi(x);
    for _ in 0..opts.max_iter {
        if g_x.abs() <= opts.tol * qs.abs().max(1.0) {
            return Ok(x);
        }
        if g_x.signum() == g_lo.signum() {
            lo = x;
            g_lo = g_x;
        } else {
            hi = x;
        }
        let mut next = x - g_x / psi_slope(x);
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            return Ok(x);
        }
        x = next;
        g_x = psi(x);
    }
    Ok(x)
}

/// Aerodynamic torque the surfaces must produce:
/// `tau_req = I omega_dot + omega x (I omega) - tau_ext - tau_prop`.
pub fn required_torque(
    inertia: &Matrix3<f64>,
    omega_body: BodyVec,
    omega_dot_body: BodyVec,
    tau_ext_body: BodyVec,
    tau_prop_body: BodyVec,
) -> BodyVec {
    let w = omega_body.raw();
    BodyVec::from(inertia * omega_dot_body.raw() + w.cross(&(inertia * w)))
        - tau_ext_body
        - tau_prop_body
}

/// Component-wise moment coefficients from the required torque:
/// `zeta = tau_req - D_omega omega`, normalized by `(qSb, qS cbar, qSb)`.
///
/// Note the FLU sign caveat: `C_m` and `C_n` have opposite signs relative to
/// FRD aeronautics conventions (left-pointing y-axis), while `C_l` matches.
#[allow(clippy::too_many_arguments)]
pub fn moment_coefficients(
    tau_req_body: BodyVec,
    rate_damping: &Matrix3<f64>,
    omega_body: BodyVec,
    q: f64,
    s_ref: f64,
    span: f64,
    chord: f64,
) -> Result<[f64; 3]> {
    if q < aero::MIN_DYNAMIC_PRESSURE {
        return Err(Error::Infeasible(InfeasibleReason::NoDynamicPressure));
    }
    let zeta = tau_req_body - BodyVec::from(rate_damping * omega_body.raw());
    let qs = q * s_ref;
    Ok([
        zeta.x() / (qs * span),
        zeta.y() / (qs * chord),
        zeta.z() / (qs * span),
    ])
}

type PassiveMap = Arc<dyn Fn(f64, f64, BodyVec) -> Vector3<f64> + Send + Sync>;
type EffectivenessMap = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

enum Effectiveness {
    Constant(DMatrix<f64>),
    PerAlpha { n_controls: usize, map: EffectivenessMap },
}

/// Affine moment-coefficient model `C_req = C_passive(a, b, omega) + B_eff(a) u`
/// together with the actuator limits, inverted by [`allocate_controls`].
pub struct ControlAllocation {
    effectiveness: Effectiveness,
    passive: Option<PassiveMap>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    /// Optional lift coupling `dC_L/du`, used by the step-5/9 iteration.
    pub lift_gradient: Option<DVector<f64>>,
    /// Optional drag coupling `dC_D/du`, used by the step-5/9 iteration.
    pub drag_gradient: Option<DVector<f64>>,
}

impl fmt::Debug for ControlAllocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAllocation")
            .field("n_controls", &self.n_controls())
            .field("u_min", &self.u_min)
            .field("u_max", &self.u_max)
            .finish()
    }
}

impl ControlAllocation {
    /// Constant effectiveness matrix (3 x n) with symmetric limits.
    pub fn constant(b_eff: DMatrix<f64>, u_min: DVector<f64>, u_max: DVector<f64>) -> Result<Self> {
        if b_eff.nrows() != 3 {
            return Err(Error::InvalidParameter(format!(
                "effectiveness matrix must have 3 rows, got {}",
                b_eff.nrows()
            )));
        }
        let n = b_eff.ncols();
        if u_min.len() != n || u_max.len() != n {
            return Err(Error::InvalidParameter(
                "actuator limits must match the number of controls".into(),
            ));
        }
        if u_min.iter().zip(u_max.iter()).any(|(lo, hi)| lo > hi) {
            return Err(Error::InvalidParameter("u_min must not exceed u_max".into()));
        }
        Ok(Self {
            effectiveness: Effectiveness::Constant(b_eff),
            passive: None,
            u_min,
            u_max,
            lift_gradient: None,
            drag_gradient: None,
        })
    }

    /// Alpha-dependent effectiveness map producing 3 x `n_controls` matrices.
    pub fn per_alpha(
        n_controls: usize,
        map: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        u_min: DVector<f64>,
        u_max: DVector<f64>,
    ) -> Result<Self> {
        if u_min.len() != n_controls || u_max.len() != n_controls {
            return Err(Error::InvalidParameter(
                "actuator limits must match the number of controls".into(),
            ));
        }
        Ok(Self {
            effectiveness: Effectiveness::PerAlpha { n_controls, map: Arc::new(map) },
            passive: None,
            u_min,
            u_max,
            lift_gradient: None,
            drag_gradient: None,
        })
    }

    /// Adds static-stability/damping terms independent of the controls.
    pub fn with_passive(
        mut self,
        passive: impl Fn(f64, f64, BodyVec) -> Vector3<f64> + Send + Sync + 'static,
    ) -> Self {
        self.passive = Some(Arc::new(passive));
        self
    }

    pub fn n_controls(&self) -> usize {
        match &self.effectiveness {
            Effectiveness::Constant(b) => b.ncols(),
            Effectiveness::PerAlpha { n_controls, .. } => *n_controls,
        }
    }

    pub fn effectiveness(&self, alpha: f64) -> DMatrix<f64> {
        match &self.effectiveness {
            Effectiveness::Constant(b) => b.clone(),
            Effectiveness::PerAlpha { map, .. } => map(alpha),
        }
    }

    pub fn passive(&self, alpha: f64, beta: f64, omega_body: BodyVec) -> Vector3<f64> {
        match &self.passive {
            Some(p) => p(alpha, beta, omega_body),
            None => Vector3::zeros(),
        }
    }
}

/// Result of a control allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub u: DVector<f64>,
    /// Indices of surfaces clamped to a limit.
    pub saturated: Vec<usize>,
}

/// Inverts the affine model for the surface deflections:
/// exact inverse when `B_eff` is square and well conditioned, otherwise a
/// Tikhonov-regularized pseudoinverse with `lambda = 1e-8 ||B_eff||^2`;
/// deflections are clamped to the limits and clamped axes reported.
pub fn allocate_controls(
    alloc: &ControlAllocation,
    c_req: Vector3<f64>,
    alpha: f64,
    beta: f64,
    omega_body: BodyVec,
) -> Result<Allocation> {
    let b = alloc.effectiveness(alpha);
    if b.nrows() != 3 || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "effectiveness matrix must be finite with 3 rows".into(),
        ));
    }
    let delta = c_req - alloc.passive(alpha, beta, omega_body);
    let rhs = DVector::from_column_slice(delta.as_slice());

    let svd = b.clone().svd(false, false);
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-12 * sigma_max.max(1e-300))
        .count();
    if rank < 3 {
        return Err(Error::Infeasible(InfeasibleReason::Unallocatable));
    }
    let sigma_min = svd.singular_values.iter().fold(f64::INFINITY, |a, &s| a.min(s));

    let n = b.ncols();
    let u = if n == 3 && sigma_max / sigma_min < 1e8 {
        b.clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::Infeasible(InfeasibleReason::Unallocatable))?
    } else {
        // Minimum-norm Tikhonov solution u = B^T (B B^T + lambda I)^-1 rhs.
        let lambda = 1e-8 * sigma_max * sigma_max;
        let mut gram = &b * b.transpose();
        for i in 0..3 {
            gram[(i, i)] += lambda;
        }
        let y = gram
            .lu()
            .solve(&rhs)
            .ok_or(Error::Infeasible(InfeasibleReason::Unallocatable))?;
        b.transpose() * y
    };

    let mut clamped = u;
    let mut saturated = Vec::new();
    for i in 0..n {
        let limited = clamped[i].clamp(alloc.u_min[i], alloc.u_max[i]);
        if limited != clamped[i] {
            saturated.push(i);
            clamped[i] = limited;
        }
    }
    Ok(Allocation { u: clamped, saturated })
}

/// Per-sample status flags of the inversion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InverseFlags {
    /// Airspeed fell below the regularization floor; attitude was built from
    /// the required-force direction and thrust carries the whole demand.
    pub regularized_airspeed: bool,
    /// Perpendicular demand vanished; the wings-level rule fixed the roll.
    pub degenerate_perp: bool,
    pub infeasible: Vec<InfeasibleReason>,
}

impl InverseFlags {
    pub fn is_ok(&self) -> bool {
        !self.regularized_airspeed && !self.degenerate_perp && self.infeasible.is_empty()
    }

    fn push_infeasible(&mut self, reason: InfeasibleReason) {
        if !self.infeasible.contains(&reason) {
            self.infeasible.push(reason);
        }
    }
}

impl fmt::Display for InverseFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let mut tokens = Vec::new();
        if self.regularized_airspeed {
            tokens.push("regularized_airspeed".to_string());
        }
        if self.degenerate_perp {
            tokens.push("degenerate_perp".to_string());
        }
        tokens.extend(self.infeasible.iter().map(|r| r.token().to_string()));
        f.write_str(&tokens.join(";"))
    }
}

impl FromStr for InverseFlags {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut flags = InverseFlags::default();
        if s == "ok" {
            return Ok(flags);
        }
        for token in s.split(';') {
            match token {
                "regularized_airspeed" => flags.regularized_airspeed = true,
                "degenerate_perp" => flags.degenerate_perp = true,
                other => flags.infeasible.push(other.parse()?),
            }
        }
        Ok(flags)
    }
}

/// Inversion output at one trajectory sample.
#[derive(Debug, Clone)]
pub struct InverseSolution {
    pub t: f64,
    pub rotation: Rot3,
    pub omega_body: BodyVec,
    pub omega_dot_body: BodyVec,
    /// Thrust [N]; NaN when the trim solve failed.
    pub thrust: f64,
    /// Angle of attack [rad]; NaN when the trim solve failed.
    pub alpha: f64,
    /// Sideslip recovered from the constructed attitude [rad].
    pub beta: f64,
    /// `(C_l, C_m, C_n)`; NaN when dynamic pressure was too low.
    pub moment_coeffs: [f64; 3],
    /// Surface deflections [rad]; empty when no allocation model was given.
    pub controls: DVector<f64>,
    pub flags: InverseFlags,
}

/// Where the pipeline gets `omega` and `omega_dot` from.
#[derive(Clone)]
pub enum RateSource {
    /// Second-order finite differences over the constructed attitude
    /// samples (three-point nonuniform stencils; one-sided at the ends).
    FiniteDifference,
    /// Closed-form rates for analytically known trajectories.
    Analytic(Arc<dyn Fn(f64) -> AngularState + Send + Sync>),
}

impl fmt::Debug for RateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FiniteDifference => f.write_str("FiniteDifference"),
            Self::Analytic(_) => f.write_str("Analytic(<fn>)"),
        }
    }
}

/// Options of [`invert_trajectory`].
#[derive(Debug, Clone)]
pub struct InvertOptions {
    pub gravity: f64,
    /// Airspeed regularization floor [m/s].
    pub eps_airspeed: f64,
    /// Warm start for the first sample's trim solve [rad].
    pub alpha0: f64,
    pub trim_tol: f64,
    pub trim_max_iter: usize,
    pub rate_source: RateSource,
    /// Maximum passes of the trim/allocation coupling iteration. 1 disables
    /// the iteration; it only has an effect when the allocation model
    /// declares lift/drag gradients.
    pub coupling_max_passes: usize,
    /// Convergence threshold on `max ||u - u_prev||` between passes.
    pub coupling_tol: f64,
}

impl Default for InvertOptions {
    fn default() -> Self {
        Self {
            gravity: crate::GRAVITY,
            eps_airspeed: aero::DEFAULT_EPS_AIRSPEED,
            alpha0: 0.0,
            trim_tol: 1e-12,
            trim_max_iter: 100,
            rate_source: RateSource::FiniteDifference,
            coupling_max_passes: 1,
            coupling_tol: 1e-8,
        }
    }
}

struct SampleState {
    rotation: Rot3,
    e_air_world: WorldVec,
    q: f64,
    thrust: f64,
    alpha: f64,
    flags: InverseFlags,
}

/// Runs the full inversion over a sampled trajectory.
///
/// Samples are processed in order with the previous alpha as warm start;
/// at least 3 samples are required for finite-difference rates. Per-sample
/// problems (degenerate frames, failed trims, saturated controls) are
/// recorded in flags and never abort the sweep.
pub fn invert_trajectory(
    samples: &[TrajectoryPoint],
    params: &AircraftParams,
    polar: &AeroPolar,
    allocation: Option<&ControlAllocation>,
    options: &InvertOptions,
) -> Result<Vec<InverseSolution>> {
    params.validate()?;
    polar.validate()?;
    if matches!(options.rate_source, RateSource::FiniteDifference) && samples.len() < 3 {
        return Err(Error::InvalidParameter(
            "finite-difference rates need at least 3 samples".into(),
        ));
    }
    if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::InvalidParameter(
            "sample times must be strictly increasing".into(),
        ));
    }

    let n_controls = allocation.map_or(0, |a| a.n_controls());
    let mut coeff_shift = vec![(0.0, 0.0); samples.len()];
    let mut previous_u: Option<Vec<DVector<f64>>> = None;
    let mut solutions = Vec::new();

    let max_passes = options.coupling_max_passes.max(1);
    let coupling_active = allocation
        .map(|a| a.lift_gradient.is_some() || a.drag_gradient.is_some())
        .unwrap_or(false);

    for _pass in 0..max_passes {
        let states = construct_attitudes(samples, params, polar, options, &coeff_shift);
        let rates = compute_rates(samples, &states, options);
        solutions = finalize(samples, params, allocation, states, rates);

        if !coupling_active || max_passes == 1 {
            break;
        }
        let current: Vec<DVector<f64>> = solutions.iter().map(|s| s.controls.clone()).collect();
        if let Some(prev) = &previous_u {
            let delta = current
                .iter()
                .zip(prev)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            if delta < options.coupling_tol {
                break;
            }
        }
        if let Some(alloc) = allocation {
            for (i, u) in current.iter().enumerate() {
                let dcl = alloc.lift_gradient.as_ref().map_or(0.0, |g| g.dot(u));
                let dcd = alloc.drag_gradient.as_ref().map_or(0.0, |g| g.dot(u));
                coeff_shift[i] = (dcl, dcd);
            }
        }
        previous_u = Some(current);
    }

    debug_assert!(solutions.iter().all(|s| s.controls.len() == n_controls
        || s.controls.iter().all(|v| v.is_nan())));
    Ok(solutions)
}

fn construct_attitudes(
    samples: &[TrajectoryPoint],
    params: &AircraftParams,
    polar: &AeroPolar,
    options: &InvertOptions,
    coeff_shift: &[(f64, f64)],
) -> Vec<SampleState> {
    let eps = options.eps_airspeed.max(f64::MIN_POSITIVE);
    let mut warm_alpha = options.alpha0;
    let mut previous: Option<Rot3> = None;
    let mut states = Vec::with_capacity(samples.len());

    for (pt, &(dcl, dcd)) in samples.iter().zip(coeff_shift) {
        let mut flags = InverseFlags::default();
        let f_req = required_force(pt, params.mass, options.gravity);
        let v_air = pt.velocity - pt.wind_world;
        let speed = v_air.norm();
        let speed_eps = speed.max(eps);
        let e_air_world = v_air / speed_eps;
        let q = 0.5 * params.rho * speed_eps * speed_eps;

        let state = if speed < eps {
            // Zero airspeed: aerodynamics cannot help; thrust carries the
            // whole demand and the attitude points the nose along it.
            flags.regularized_airspeed = true;
            let rotation = thrust_only_attitude(f_req, previous, &mut flags);
            SampleState {
                rotation,
                e_air_world,
                q,
                thrust: f_req.norm(),
                alpha: 0.0,
                flags,
            }
        } else {
            let decomp = decompose(f_req, e_air_world);
            let frame = if decomp.degenerate_perp {
                flags.degenerate_perp = true;
                match degenerate_perp_frame(e_air_world) {
                    Ok(frame) => Some(frame),
                    Err(_) => previous.map(|prev| {
                        // Vertical flight: recycle the previous sample's
                        // lift plane.
                        let n_prev = prev.normal_world();
                        let proj = n_prev - e_air_world * n_prev.dot(e_air_world);
                        match proj.normalized() {
                            Some(n) => (n, n.cross(e_air_world)),
                            None => (n_prev, n_prev.cross(e_air_world)),
                        }
                    }),
                }
            } else {
                decomp.n_curve_world.zip(decomp.s_traj_world)
            };

            match frame {
                None => {
                    flags.push_infeasible(InfeasibleReason::UndefinedAttitude);
                    SampleState {
                        rotation: previous.unwrap_or_else(Rot3::identity),
                        e_air_world,
                        q,
                        thrust: f64::NAN,
                        alpha: f64::NAN,
                        flags,
                    }
                }
                Some((n_curve, s_traj)) => {
                    let trim_opts = TrimOptions {
                        alpha0: warm_alpha,
                        alpha_max: params.alpha_max,
                        tol: options.trim_tol,
                        max_iter: options.trim_max_iter,
                    };
                    let f_par = decomp.f_par + q * params.s_ref * dcd;
                    let f_perp = (decomp.f_perp - q * params.s_ref * dcl).max(0.0);
                    let trim = solve_trim(f_par, f_perp, q, params.s_ref, polar, &trim_opts);
                    let (alpha, thrust) = match trim {
                        Ok(pair) => {
                            warm_alpha = pair.alpha;
                            if pair.thrust > params.t_max {
                                flags.push_infeasible(InfeasibleReason::ThrustExceedsMax);
                            }
                            (pair.alpha, pair.thrust)
                        }
                        Err(Error::Infeasible(reason)) => {
                            // Distinguish "trim exists but post-stall" from
                            // "no trim at all" by retrying on a wide bracket.
                            let wide = TrimOptions {
                                alpha_max: 0.98 * std::f64::consts::FRAC_PI_2,
                                ..trim_opts
                            };
                            let reason = match reason {
                                InfeasibleReason::NoTrim
                                    if solve_trim(
                                        f_par,
                                        f_perp,
                                        q,
                                        params.s_ref,
                                        polar,
                                        &wide,
                                    )
                                    .is_ok() =>
                                {
                                    InfeasibleReason::AlphaExceedsMax
                                }
                                other => other,
                            };
                            flags.push_infeasible(reason);
                            (f64::NAN, f64::NAN)
                        }
                        Err(_) => {
                            flags.push_infeasible(InfeasibleReason::NoTrim);
                            (f64::NAN, f64::NAN)
                        }
                    };
                    let alpha_for_axes = if alpha.is_finite() { alpha } else { 0.0 };
                    let rotation = body_axes(alpha_for_axes, e_air_world, s_traj, n_curve)
                        .unwrap_or_else(|_| previous.unwrap_or_else(Rot3::identity));
                    SampleState { rotation, e_air_world, q, thrust, alpha, flags }
                }
            }
        };
        previous = Some(state.rotation);
        states.push(state);
    }
    states
}

/// Nose along the required force, roll fixed from the previous attitude or
/// the world-up projection.
fn thrust_only_attitude(
    f_req: WorldVec,
    previous: Option<Rot3>,
    flags: &mut InverseFlags,
) -> Rot3 {
    let Some(c) = f_req.normalized() else {
        // No force demand either: nothing constrains the attitude.
        return previous.unwrap_or_else(Rot3::identity);
    };
    let candidates = [
        previous.map(|r| r.normal_world()),
        Some(WorldVec::up()),
        Some(WorldVec::unit_x()),
    ];
    for candidate in candidates.into_iter().flatten() {
        let proj = candidate - c * candidate.dot(c);
        if let Some(n) = proj.normalized() {
            let s = n.cross(c);
            if let Ok(r) = Rot3::from_axes(c, s, n) {
                return r;
            }
        }
    }
    flags.push_infeasible(InfeasibleReason::UndefinedAttitude);
    previous.unwrap_or_else(Rot3::identity)
}

/// Derivative weights of the quadratic through `(a, b, c)` evaluated at `x`.
fn lagrange_weights(a: f64, b: f64, c: f64, x: f64) -> (f64, f64, f64) {
    (
        (2.0 * x - b - c) / ((a - b) * (a - c)),
        (2.0 * x - a - c) / ((b - a) * (b - c)),
        (2.0 * x - a - b) / ((c - a) * (c - b)),
    )
}

fn compute_rates(
    samples: &[TrajectoryPoint],
    states: &[SampleState],
    options: &InvertOptions,
) -> Vec<AngularState> {
    match &options.rate_source {
        RateSource::Analytic(f) => samples.iter().map(|pt| f(pt.t)).collect(),
        RateSource::FiniteDifference => {
            let n = samples.len();
            let stencil = |i: usize| -> [usize; 3] {
                if i == 0 {
                    [0, 1, 2]
                } else if i == n - 1 {
                    [n - 3, n - 2, n - 1]
                } else {
                    [i - 1, i, i + 1]
                }
            };
            let omegas: Vec<Vector3<f64>> = (0..n)
                .map(|i| {
                    let [j0, j1, j2] = stencil(i);
                    let (w0, w1, w2) = lagrange_weights(
                        samples[j0].t,
                        samples[j1].t,
                        samples[j2].t,
                        samples[i].t,
                    );
                    let r_dot = states[j0].rotation.matrix() * w0
                        + states[j1].rotation.matrix() * w1
                        + states[j2].rotation.matrix() * w2;
                    vee_lenient(&(states[i].rotation.matrix().transpose() * r_dot))
                })
                .collect();
            (0..n)
                .map(|i| {
                    let [j0, j1, j2] = stencil(i);
                    let (w0, w1, w2) = lagrange_weights(
                        samples[j0].t,
                        samples[j1].t,
                        samples[j2].t,
                        samples[i].t,
                    );
                    let omega_dot = omegas[j0] * w0 + omegas[j1] * w1 + omegas[j2] * w2;
                    AngularState {
                        omega_body: BodyVec::from(omegas[i]),
                        omega_dot_body: BodyVec::from(omega_dot),
                    }
                })
                .collect()
        }
    }
}

fn finalize(
    samples: &[TrajectoryPoint],
    params: &AircraftParams,
    allocation: Option<&ControlAllocation>,
    states: Vec<SampleState>,
    rates: Vec<AngularState>,
) -> Vec<InverseSolution> {
    states
        .into_iter()
        .zip(rates)
        .zip(samples)
        .map(|((state, rate), pt)| {
            let mut flags = state.flags;
            let tau_req = required_torque(
                &params.inertia,
                rate.omega_body,
                rate.omega_dot_body,
                pt.tau_ext_body,
                BodyVec::zeros(),
            );
            let moment_coeffs = match moment_coefficients(
                tau_req,
                &params.rate_damping,
                rate.omega_body,
                state.q,
                params.s_ref,
                params.span,
                params.chord,
            ) {
                Ok(c) => c,
                Err(_) => {
                    flags.push_infeasible(InfeasibleReason::NoDynamicPressure);
                    [f64::NAN; 3]
                }
            };
            let beta = aero::sideslip(state.rotation.to_body(state.e_air_world));
            let alpha_for_alloc = if state.alpha.is_finite() { state.alpha } else { 0.0 };
            let controls = match allocation {
                None => DVector::zeros(0),
                Some(alloc) => {
                    if moment_coeffs.iter().all(|c| c.is_finite()) {
                        match allocate_controls(
                            alloc,
                            Vector3::from_column_slice(&moment_coeffs),
                            alpha_for_alloc,
                            beta,
                            rate.omega_body,
                        ) {
                            Ok(result) => {
                                if !result.saturated.is_empty() {
                                    flags.push_infeasible(InfeasibleReason::Saturation);
                                }
                                result.u
                            }
                            Err(Error::Infeasible(reason)) => {
                                flags.push_infeasible(reason);
                                DVector::from_element(alloc.n_controls(), f64::NAN)
                            }
                            Err(_) => {
                                flags.push_infeasible(InfeasibleReason::Unallocatable);
                                DVector::from_element(alloc.n_controls(), f64::NAN)
                            }
                        }
                    } else {
                        DVector::from_element(alloc.n_controls(), f64::NAN)
                    }
                }
            };
            InverseSolution {
                t: pt.t,
                rotation: state.rotation,
                omega_body: rate.omega_body,
                omega_dot_body: rate.omega_dot_body,
                thrust: state.thrust,
                alpha: state.alpha,
                beta,
                moment_coeffs,
                controls,
                flags,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aero::{preset, PresetId};
    use approx::assert_abs_diff_eq;

    fn demo_polar() -> AeroPolar {
        preset(PresetId::Paper5).polar
    }

    #[test]
    fn required_force_hover_equals_weight() {
        let pt = TrajectoryPoint::free(0.0, WorldVec::zeros(), WorldVec::zeros(), WorldVec::zeros());
        let f = required_force(&pt, 2.0, 9.81);
        assert_abs_diff_eq!((f - WorldVec::new(0.0, 0.0, 19.62)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn required_force_free_fall_is_zero() {
        let pt = TrajectoryPoint::free(
            0.0,
            WorldVec::zeros(),
            WorldVec::new(5.0, 0.0, 0.0),
            WorldVec::new(0.0, 0.0, -9.81),
        );
        assert_eq!(required_force(&pt, 2.0, 9.81).norm(), 0.0);
    }

    #[test]
    fn required_force_ignores_wind_bit_identically() {
        let mut pt = TrajectoryPoint::free(
            0.0,
            WorldVec::zeros(),
            WorldVec::new(11.7, 0.0, 0.0),
            WorldVec::new(0.1, -0.4, 0.02),
        );
        let calm = required_force(&pt, 2.0, 9.81);
        pt.wind_world = WorldVec::new(-3.0, 7.0, 1.0);
        let windy = required_force(&pt, 2.0, 9.81);
        assert_eq!(calm.raw(), windy.raw());
    }

    #[test]
    fn decompose_perpendicular_demand() {
        let d = decompose(WorldVec::new(0.0, 0.0, 19.62), WorldVec::unit_x());
        assert_abs_diff_eq!(d.f_par, 0.0);
        assert_abs_diff_eq!(d.f_perp, 19.62, epsilon = 1e-12);
        assert!(!d.degenerate_perp);
        let n = d.n_curve_world.unwrap();
        let s = d.s_traj_world.unwrap();
        assert_abs_diff_eq!((n - WorldVec::unit_z()).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((s - WorldVec::unit_y()).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn decompose_axial_demand_is_degenerate() {
        let d = decompose(WorldVec::new(5.0, 0.0, 0.0), WorldVec::unit_x());
        assert_abs_diff_eq!(d.f_par, 5.0);
        assert!(d.degenerate_perp);
        assert!(d.n_curve_world.is_none());
    }

    #[test]
    fn degenerate_frame_is_wings_level() {
        let (n, s) = degenerate_perp_frame(WorldVec::unit_x()).unwrap();
        assert_abs_diff_eq!((n - WorldVec::unit_z()).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((s - WorldVec::unit_y()).norm(), 0.0, epsilon = 1e-15);

        let climb = 30f64.to_radians();
        let e_a = WorldVec::new(climb.cos(), 0.0, climb.sin());
        let (n, _) = degenerate_perp_frame(e_a).unwrap();
        assert_abs_diff_eq!(n.dot(e_a), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n.y(), 0.0, epsilon = 1e-15);
        assert!(n.z() > 0.0);

        assert!(matches!(
            degenerate_perp_frame(WorldVec::unit_z()),
            Err(Error::VerticalFlightNoHistory)
        ));
    }

    #[test]
    fn body_axes_at_zero_alpha_is_trajectory_frame() {
        let r = body_axes(0.0, WorldVec::unit_x(), WorldVec::unit_y(), WorldVec::unit_z()).unwrap();
        assert_eq!(*r.matrix(), nalgebra::Matrix3::identity());
    }

    #[test]
    fn body_axes_quarter_turn() {
        let r = body_axes(
            std::f64::consts::FRAC_PI_2,
            WorldVec::unit_x(),
            WorldVec::unit_y(),
            WorldVec::unit_z(),
        )
        .unwrap();
        assert_abs_diff_eq!((r.chord_world() - WorldVec::unit_z()).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((r.normal_world() + WorldVec::unit_x()).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn body_axes_alpha_round_trips_through_flow_angles() {
        let alpha = 0.2957;
        let e_a = WorldVec::unit_x();
        let r = body_axes(alpha, e_a, WorldVec::unit_y(), WorldVec::unit_z()).unwrap();
        let recovered = crate::aero::angle_of_attack(r.to_body(e_a));
        assert_abs_diff_eq!(recovered, alpha, epsilon = 1e-14);
        assert_abs_diff_eq!(crate::aero::sideslip(r.to_body(e_a)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn trim_glider_point_has_zero_thrust() {
        let polar = demo_polar();
        let q_s = 20.0;
        let alpha_star = 0.1;
        let (c_l, c_d) = polar.eval(alpha_star);
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let trim = solve_trim(-q_s * c_d, q_s * c_l, q_s, 1.0, &polar, &opts).unwrap();
        assert!(trim.thrust < 1e-9, "thrust {}", trim.thrust);
        assert_abs_diff_eq!(trim.alpha, alpha_star, epsilon = 1e-10);
    }

    #[test]
    fn trim_matches_frozen_demo_zero_bank_case() {
        // f_par = 0, f_perp = 27.58 N, q S = 20.96128125; expected values
        // frozen from a 200-step bisection of the fixed-point residual.
        let polar = demo_polar();
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let trim = solve_trim(0.0, 27.58, 83.845125, 0.25, &polar, &opts).unwrap();
        assert_abs_diff_eq!(trim.alpha, 0.2954008145852398, epsilon = 1e-9);
        assert_abs_diff_eq!(trim.thrust, 3.278637679059687, epsilon = 1e-7);
        assert!(trim.residual <= 1e-12);
    }

    #[test]
    fn trim_axial_demand_gives_zero_alpha() {
        let polar = demo_polar();
        let opts = TrimOptions::default();
        let trim = solve_trim(5.0, 0.0, 61.25, 0.25, &polar, &opts).unwrap();
        assert_abs_diff_eq!(trim.alpha, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(trim.thrust, 5.0 + 61.25 * 0.25 * polar.c_d0, epsilon = 1e-12);
    }

    #[test]
    fn trim_scaling_invariance() {
        let polar = demo_polar();
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let base = solve_trim(1.5, 24.0, 80.0, 0.25, &polar, &opts).unwrap();
        let scale = 7.25;
        let scaled = solve_trim(1.5 * scale, 24.0 * scale, 80.0 * scale, 0.25, &polar, &opts)
            .unwrap();
        assert_abs_diff_eq!(scaled.alpha, base.alpha, epsilon = 1e-10);
        assert_abs_diff_eq!(scaled.thrust / base.thrust, scale, epsilon = 1e-9);
    }

    #[test]
    fn trim_infeasible_when_demand_needs_backward_thrust() {
        let polar = demo_polar();
        let opts = TrimOptions::default();
        // Strong deceleration demand: f_par so negative that T_par < 0 over
        // the whole bracket.
        let err = solve_trim(-500.0, 0.0, 61.25, 0.25, &polar, &opts).unwrap_err();
        assert!(matches!(
            err,
            Error::Infeasible(InfeasibleReason::NegativeThrust)
        ));
    }

    #[test]
    fn smallangle_agrees_with_fixed_point_solver() {
        let polar = demo_polar();
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let full = solve_trim(0.0, 27.58, 83.845125, 0.25, &polar, &opts).unwrap();
        let scalar = solve_trim_smallangle(0.0, 27.58, 83.845125, 0.25, &polar, &opts).unwrap();
        // Same root: the scalar equation is the tan form of the fixed point.
        assert_abs_diff_eq!(scalar, full.alpha, epsilon = 2e-3);
        assert_abs_diff_eq!(scalar, full.alpha, epsilon = 1e-9);
    }

    #[test]
    fn smallangle_zero_perp_gives_zero() {
        let polar = demo_polar();
        let alpha = solve_trim_smallangle(3.0, 0.0, 61.25, 0.25, &polar, &TrimOptions::default())
            .unwrap();
        assert_abs_diff_eq!(alpha, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn smallangle_tiny_perp_linearizes() {
        let polar = demo_polar();
        let (q, s_ref) = (83.845125, 0.25);
        let q_s = q * s_ref;
        let f_perp = 1e-6;
        let alpha =
            solve_trim_smallangle(0.0, f_perp, q, s_ref, &polar, &TrimOptions::default()).unwrap();
        let linear = f_perp / (q_s * (polar.c_d0 + polar.lift_slope));
        assert_abs_diff_eq!(alpha, linear, epsilon = 1e-12 * linear.max(1e-12));
    }

    #[test]
    fn torque_zero_motion_is_zero() {
        let inertia = Matrix3::from_diagonal(&Vector3::new(0.02, 0.03, 0.05));
        let tau = required_torque(
            &inertia,
            BodyVec::zeros(),
            BodyVec::zeros(),
            BodyVec::zeros(),
            BodyVec::zeros(),
        );
        assert_eq!(tau.norm(), 0.0);
    }

    #[test]
    fn torque_principal_axis_spin_is_zero() {
        let inertia = Matrix3::from_diagonal(&Vector3::new(0.02, 0.03, 0.05));
        let tau = required_torque(
            &inertia,
            BodyVec::new(0.0, 0.0, 4.0),
            BodyVec::zeros(),
            BodyVec::zeros(),
            BodyVec::zeros(),
        );
        assert_abs_diff_eq!(tau.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn torque_gyroscopic_term() {
        let inertia = Matrix3::from_diagonal(&Vector3::new(0.02, 0.03, 0.05));
        let tau = required_torque(
            &inertia,
            BodyVec::new(1.0, 2.0, 3.0),
            BodyVec::zeros(),
            BodyVec::zeros(),
            BodyVec::zeros(),
        );
        // omega x (I omega) with I omega = (0.02, 0.06, 0.15).
        assert_abs_diff_eq!((tau - BodyVec::new(0.12, -0.09, 0.02)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn coefficients_unit_normalization() {
        let zero = Matrix3::zeros();
        let (q, s_ref, b, c) = (50.0, 0.25, 2.0, 0.3);
        let qs = q * s_ref;
        let got = moment_coefficients(
            BodyVec::new(qs * b, 0.0, 0.0),
            &zero,
            BodyVec::zeros(),
            q,
            s_ref,
            b,
            c,
        )
        .unwrap();
        assert_abs_diff_eq!(got[0], 1.0, epsilon = 1e-14);
        assert_eq!((got[1], got[2]), (0.0, 0.0));

        let pitch = moment_coefficients(
            BodyVec::new(0.0, qs * c, 0.0),
            &zero,
            BodyVec::zeros(),
            q,
            s_ref,
            b,
            c,
        )
        .unwrap();
        assert_abs_diff_eq!(pitch[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn coefficients_reject_vanishing_pressure() {
        let zero = Matrix3::zeros();
        assert!(matches!(
            moment_coefficients(BodyVec::zeros(), &zero, BodyVec::zeros(), 1e-9, 0.25, 2.0, 0.3),
            Err(Error::Infeasible(InfeasibleReason::NoDynamicPressure))
        ));
    }

    fn identity_allocation(limit: f64) -> ControlAllocation {
        ControlAllocation::constant(
            DMatrix::identity(3, 3),
            DVector::from_element(3, -limit),
            DVector::from_element(3, limit),
        )
        .unwrap()
    }

    #[test]
    fn allocation_identity_passthrough() {
        let alloc = identity_allocation(0.5);
        let c_req = Vector3::new(0.01, -0.02, 0.005);
        let got = allocate_controls(&alloc, c_req, 0.1, 0.0, BodyVec::zeros()).unwrap();
        assert!(got.saturated.is_empty());
        assert_abs_diff_eq!((got.u - DVector::from_column_slice(c_req.as_slice())).norm(), 0.0);
    }

    #[test]
    fn allocation_diagonal_scaling() {
        let alloc = ControlAllocation::constant(
            DMatrix::from_diagonal(&DVector::from_element(3, 2.0)),
            DVector::from_element(3, -1.0),
            DVector::from_element(3, 1.0),
        )
        .unwrap();
        let got = allocate_controls(&alloc, Vector3::new(0.4, -0.2, 0.1), 0.0, 0.0, BodyVec::zeros())
            .unwrap();
        assert_abs_diff_eq!(got.u[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(got.u[1], -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(got.u[2], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn allocation_clamps_and_reports_saturation() {
        let alloc = identity_allocation(0.1);
        let got = allocate_controls(&alloc, Vector3::new(0.5, 0.0, -0.3), 0.0, 0.0, BodyVec::zeros())
            .unwrap();
        assert_eq!(got.saturated, vec![0, 2]);
        assert_eq!(got.u[0], 0.1);
        assert_eq!(got.u[2], -0.1);
    }

    #[test]
    fn allocation_rejects_rank_deficient_map() {
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 0)] = 1.0;
        b[(1, 1)] = 1.0;
        let alloc = ControlAllocation::constant(
            b,
            DVector::from_element(3, -1.0),
            DVector::from_element(3, 1.0),
        )
        .unwrap();
        assert!(matches!(
            allocate_controls(&alloc, Vector3::new(0.1, 0.1, 0.1), 0.0, 0.0, BodyVec::zeros()),
            Err(Error::Infeasible(InfeasibleReason::Unallocatable))
        ));
    }

    #[test]
    fn allocation_redundant_surfaces_use_min_norm_pseudoinverse() {
        // 3x4: two ailerons with identical roll authority.
        let b = DMatrix::from_row_slice(
            3,
            4,
            &[
                1.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 2.0, 0.0, //
                0.0, 0.0, 0.0, 1.5,
            ],
        );
        let alloc = ControlAllocation::constant(
            b.clone(),
            DVector::from_element(4, -1.0),
            DVector::from_element(4, 1.0),
        )
        .unwrap();
        let c_req = Vector3::new(0.3, -0.4, 0.6);
        let got = allocate_controls(&alloc, c_req, 0.0, 0.0, BodyVec::zeros()).unwrap();
        let achieved = &b * &got.u;
        assert_abs_diff_eq!(
            (achieved - DVector::from_column_slice(c_req.as_slice())).norm(),
            0.0,
            epsilon = 1e-6
        );
        // Identical surfaces split the demand evenly (minimum norm).
        assert_abs_diff_eq!(got.u[0], got.u[1], epsilon = 1e-9);
    }

    #[test]
    fn allocation_passive_terms_subtract() {
        let alloc = identity_allocation(1.0)
            .with_passive(|_, _, _| Vector3::new(0.05, 0.0, 0.0));
        let got = allocate_controls(&alloc, Vector3::new(0.15, 0.0, 0.0), 0.0, 0.0, BodyVec::zeros())
            .unwrap();
        assert_abs_diff_eq!(got.u[0], 0.1, epsilon = 1e-15);
    }

    fn level_flight_samples(n: usize, dt: f64) -> Vec<TrajectoryPoint> {
        (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                TrajectoryPoint::free(
                    t,
                    WorldVec::new(11.7 * t, 0.0, 50.0),
                    WorldVec::new(11.7, 0.0, 0.0),
                    WorldVec::zeros(),
                )
            })
            .collect()
    }

    #[test]
    fn invert_straight_level_flight_is_static() {
        let p = preset(PresetId::Paper5);
        let samples = level_flight_samples(5, 0.1);
        let out = invert_trajectory(&samples, &p.params, &p.polar, None, &InvertOptions::default())
            .unwrap();
        assert_eq!(out.len(), 5);
        let alphas: Vec<f64> = out.iter().map(|s| s.alpha).collect();
        let thrusts: Vec<f64> = out.iter().map(|s| s.thrust).collect();
        for s in &out {
            assert!(s.flags.is_ok(), "flags {}", s.flags);
            assert!(s.omega_body.norm() < 1e-9);
            assert!(s.beta.abs() < 1e-12);
            for c in s.moment_coeffs {
                assert!(c.abs() < 1e-10, "coefficient {c}");
            }
        }
        for w in alphas.windows(2) {
            assert_abs_diff_eq!(w[0], w[1], epsilon = 1e-12);
        }
        for w in thrusts.windows(2) {
            assert_abs_diff_eq!(w[0], w[1], epsilon = 1e-10);
        }
        // Level flight demands lift = weight; the trim pitch is well inside
        // the pre-stall range.
        assert!(alphas[0] > 0.15 && alphas[0] < 0.25, "alpha {}", alphas[0]);
    }

    #[test]
    fn invert_zero_airspeed_points_nose_along_demand() {
        let p = preset(PresetId::Paper5);
        let samples: Vec<TrajectoryPoint> = (0..3)
            .map(|i| {
                TrajectoryPoint::free(
                    i as f64 * 0.1,
                    WorldVec::new(0.0, 0.0, 5.0),
                    WorldVec::zeros(),
                    WorldVec::zeros(),
                )
            })
            .collect();
        let out = invert_trajectory(&samples, &p.params, &p.polar, None, &InvertOptions::default())
            .unwrap();
        for s in &out {
            assert!(s.flags.regularized_airspeed);
            assert_abs_diff_eq!(s.thrust, 2.0 * 9.81, epsilon = 1e-12);
            assert_abs_diff_eq!(
                (s.rotation.chord_world() - WorldVec::unit_z()).norm(),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn invert_flags_post_stall_demand() {
        let p = preset(PresetId::Paper5);
        // Tight pull-up: far more lift than the polar can give pre-stall.
        let samples: Vec<TrajectoryPoint> = (0..3)
            .map(|i| {
                let t = i as f64 * 0.05;
                TrajectoryPoint::free(
                    t,
                    WorldVec::new(11.7 * t, 0.0, 50.0),
                    WorldVec::new(11.7, 0.0, 0.0),
                    WorldVec::new(0.0, 0.0, 60.0),
                )
            })
            .collect();
        let out = invert_trajectory(&samples, &p.params, &p.polar, None, &InvertOptions::default())
            .unwrap();
        assert!(out.iter().all(|s| s
            .flags
            .infeasible
            .contains(&InfeasibleReason::AlphaExceedsMax)));
        assert!(out[0].thrust.is_nan());
    }

    #[test]
    fn invert_rejects_short_or_unsorted_input() {
        let p = preset(PresetId::Paper5);
        let two = level_flight_samples(2, 0.1);
        assert!(invert_trajectory(&two, &p.params, &p.polar, None, &InvertOptions::default())
            .is_err());
        let mut bad = level_flight_samples(4, 0.1);
        bad[2].t = bad[1].t;
        assert!(invert_trajectory(&bad, &p.params, &p.polar, None, &InvertOptions::default())
            .is_err());
    }

    #[test]
    fn invert_with_allocation_fills_controls() {
        let p = preset(PresetId::Paper5);
        let samples = level_flight_samples(5, 0.1);
        let alloc = identity_allocation(0.5);
        let out = invert_trajectory(
            &samples,
            &p.params,
            &p.polar,
            Some(&alloc),
            &InvertOptions::default(),
        )
        .unwrap();
        for s in &out {
            assert_eq!(s.controls.len(), 3);
            // Identity B_eff: deflections equal the coefficients.
            for (u, c) in s.controls.iter().zip(s.moment_coeffs) {
                assert_abs_diff_eq!(*u, c, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn invert_coupling_iteration_shifts_trim() {
        let p = preset(PresetId::Paper5);
        let samples = level_flight_samples(5, 0.1);
        // Controls that add lift when deflected, with a passive pitching
        // moment so the allocator demands a nonzero u.
        let mut alloc = identity_allocation(0.5)
            .with_passive(|_, _, _| Vector3::new(0.0, -0.05, 0.0));
        alloc.lift_gradient = Some(DVector::from_vec(vec![0.0, 0.8, 0.0]));
        let base = invert_trajectory(
            &samples,
            &p.params,
            &p.polar,
            Some(&alloc),
            &InvertOptions::default(),
        )
        .unwrap();
        let coupled = invert_trajectory(
            &samples,
            &p.params,
            &p.polar,
            Some(&alloc),
            &InvertOptions { coupling_max_passes: 5, ..InvertOptions::default() },
        )
        .unwrap();
        // The deflected surface carries some lift, so trim alpha drops.
        assert!(coupled[2].alpha < base[2].alpha);
        assert!((coupled[2].alpha - base[2].alpha).abs() > 1e-5);
    }
}
