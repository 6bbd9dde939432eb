//! Aerodynamic directions, angles, force/moment models, the small-angle
//! polar, and parameter presets for two airframe classes plus the 2 kg
//! tethered-demo aircraft.
//!
//! Directions are geometric: drag along `-e_a`, lift as the wing normal
//! projected orthogonal to the flow, side force closing the triad. This keeps
//! the model valid at any attitude, with no local-coordinate singularities.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geom::{BodyVec, Rot3, WorldVec};

/// Default airspeed regularization floor [m/s]. Well below any meaningful
/// flight speed; keeps the regularized dynamic pressure above 0.15 Pa at
/// sea level.
pub const DEFAULT_EPS_AIRSPEED: f64 = 0.5;

/// Dynamic pressure below which moment coefficients are not recoverable [Pa].
pub const MIN_DYNAMIC_PRESSURE: f64 = 1e-6;

type CoeffMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Lift/drag coefficient model.
///
/// The built-in small-angle form is `C_L = a alpha`,
/// `C_D = C_D0 + k_alpha alpha^2` with `k_alpha = k a^2`; arbitrary maps can
/// override either coefficient for pre-stall models that need more shape.
#[derive(Clone)]
pub struct AeroPolar {
    /// Lift slope `a = C_L_alpha` [1/rad].
    pub lift_slope: f64,
    /// Zero-lift drag coefficient.
    pub c_d0: f64,
    /// Induced drag factor `k = 1/(pi e AR)` (per unit `C_L^2`).
    pub induced: f64,
    /// Quadratic drag coefficient in alpha, `k_alpha = k a^2` [1/rad^2].
    pub k_alpha: f64,
    lift_map: Option<CoeffMap>,
    drag_map: Option<CoeffMap>,
}

impl fmt::Debug for AeroPolar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AeroPolar")
            .field("lift_slope", &self.lift_slope)
            .field("c_d0", &self.c_d0)
            .field("induced", &self.induced)
            .field("k_alpha", &self.k_alpha)
            .field("lift_map", &self.lift_map.as_ref().map(|_| "<fn>"))
            .field("drag_map", &self.drag_map.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl AeroPolar {
    /// Small-angle polar from the lift slope and the `C_L^2` drag factor;
    /// derives `k_alpha = k a^2`.
    pub fn small_angle(lift_slope: f64, c_d0: f64, induced: f64) -> Self {
        Self {
            lift_slope,
            c_d0,
            induced,
            k_alpha: k_alpha_of(induced, lift_slope),
            lift_map: None,
            drag_map: None,
        }
    }

    /// Small-angle polar given `k_alpha` directly; derives `k = k_alpha/a^2`.
    pub fn from_k_alpha(lift_slope: f64, c_d0: f64, k_alpha: f64) -> Self {
        Self {
            lift_slope,
            c_d0,
            induced: k_alpha / (lift_slope * lift_slope),
            k_alpha,
            lift_map: None,
            drag_map: None,
        }
    }

    /// Stores all four coefficients exactly as given (no rederivation).
    /// Used by the presets, which pin table values rather than recompute.
    pub fn from_parts(lift_slope: f64, c_d0: f64, induced: f64, k_alpha: f64) -> Self {
        Self { lift_slope, c_d0, induced, k_alpha, lift_map: None, drag_map: None }
    }

    /// Overrides `C_L(alpha)` with a user map.
    pub fn with_lift_map(mut self, map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.lift_map = Some(Arc::new(map));
        self
    }

    /// Overrides `C_D(alpha)` with a user map.
    pub fn with_drag_map(mut self, map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.drag_map = Some(Arc::new(map));
        self
    }

    pub fn lift_coeff(&self, alpha: f64) -> f64 {
        match &self.lift_map {
            Some(map) => map(alpha),
            None => self.lift_slope * alpha,
        }
    }

    pub fn drag_coeff(&self, alpha: f64) -> f64 {
        match &self.drag_map {
            Some(map) => map(alpha),
            None => self.c_d0 + self.k_alpha * alpha * alpha,
        }
    }

    /// `(C_L, C_D)` at the given angle of attack.
    pub fn eval(&self, alpha: f64) -> (f64, f64) {
        (self.lift_coeff(alpha), self.drag_coeff(alpha))
    }

    /// `dC_L/dalpha`; analytic for the built-in form, central difference
    /// for user maps.
    pub fn lift_coeff_slope(&self, alpha: f64) -> f64 {
        match &self.lift_map {
            Some(map) => central_diff(map.as_ref(), alpha),
            None => self.lift_slope,
        }
    }

    /// `dC_D/dalpha`; analytic for the built-in form, central difference
    /// for user maps.
    pub fn drag_coeff_slope(&self, alpha: f64) -> f64 {
        match &self.drag_map {
            Some(map) => central_diff(map.as_ref(), alpha),
            None => 2.0 * self.k_alpha * alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lift_slope", self.lift_slope),
            ("c_d0", self.c_d0),
            ("induced", self.induced),
            ("k_alpha", self.k_alpha),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "polar {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn central_diff(f: &(dyn Fn(f64) -> f64 + Send + Sync), x: f64) -> f64 {
    let h = 1e-7 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Mass, inertia, aerodynamic references, and actuation bounds of one
/// airframe.
#[derive(Debug, Clone)]
pub struct AircraftParams {
    /// Mass [kg].
    pub mass: f64,
    /// Body-frame inertia tensor [kg m^2], symmetric positive definite.
    pub inertia: Matrix3<f64>,
    /// Air density [kg/m^3].
    pub rho: f64,
    /// Reference wing area [m^2].
    pub s_ref: f64,
    /// Wingspan [m].
    pub span: f64,
    /// Mean aerodynamic chord [m].
    pub chord: f64,
    /// Rate-damping matrix `D_omega` [N m s], negative semidefinite; its
    /// product with the body rate adds directly to the aerodynamic moment.
    pub rate_damping: Matrix3<f64>,
    /// Thrust direction in the body frame, unit norm (tractor: chord axis).
    pub thrust_dir_body: BodyVec,
    /// Stall bound on the angle of attack [rad].
    pub alpha_max: f64,
    /// Maximum thrust [N] (`INFINITY` when unconstrained).
    pub t_max: f64,
}

impl AircraftParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("rho", self.rho),
            ("s_ref", self.s_ref),
            ("span", self.span),
            ("chord", self.chord),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        let asym = (self.inertia - self.inertia.transpose()).norm();
        if asym > 1e-9 * self.inertia.norm().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "inertia must be symmetric (asymmetry {asym:.3e})"
            )));
        }
        if nalgebra::Cholesky::new(self.inertia).is_none() {
            return Err(Error::InvalidParameter(
                "inertia must be positive definite".into(),
            ));
        }
        let d_sym = 0.5 * (self.rate_damping + self.rate_damping.transpose());
        let max_eig = d_sym
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if max_eig > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "rate damping must be negative semidefinite (max eigenvalue {max_eig:.3e})"
            )));
        }
        if self.thrust_dir_body.unit_error() > 1e-9 {
            return Err(Error::InvalidParameter(
                "thrust direction must be a unit vector".into(),
            ));
        }
        if !(self.alpha_max > 0.0 && self.alpha_max < PI / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha_max must lie in (0, pi/2), got {}",
                self.alpha_max
            )));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidParameter("t_max must be positive".into()));
        }
        Ok(())
    }
}

/// Angle of attack and sideslip [rad].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroAngles {
    pub alpha: f64,
    pub beta: f64,
}

/// Right-handed orthonormal (drag, side, lift) direction triad in the body
/// frame: `drag x side = lift` and `e_a x lift = side` with `e_a = -drag`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroDirections {
    pub drag: BodyVec,
    pub side: BodyVec,
    pub lift: BodyVec,
}

/// Air-relative velocity, flow direction, and dynamic pressure.
///
/// When the airspeed falls below the regularization floor, the flow
/// direction is scaled by `||v_a||/eps` (sub-unit) and the dynamic pressure
/// is computed from the floor, exactly as the regularized model prescribes;
/// `regularized` records that this happened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirState {
    pub v_air_world: WorldVec,
    pub v_air_body: BodyVec,
    pub e_air_world: WorldVec,
    pub e_air_body: BodyVec,
    /// Dynamic pressure [Pa].
    pub dynamic_pressure: f64,
    pub regularized: bool,
}

/// One lifting surface of a distributed layout.
#[derive(Debug, Clone)]
pub struct LiftingSurface {
    /// Offset of the surface's reference point from the CoM [m], body frame.
    pub offset_body: BodyVec,
    /// Surface reference area [m^2].
    pub area: f64,
    pub polar: AeroPolar,
}

/// Air-relative state from ground velocity, wind, and attitude.
pub fn air_state(
    v_world: WorldVec,
    w_world: WorldVec,
    rotation: &Rot3,
    rho: f64,
    eps: f64,
) -> AirState {
    let eps = eps.max(f64::MIN_POSITIVE);
    let v_air_world = v_world - w_world;
    let speed = v_air_world.norm();
    let regularized = speed < eps;
    let speed_eps = speed.max(eps);
    let e_air_world = v_air_world / speed_eps;
    AirState {
        v_air_world,
        v_air_body: rotation.to_body(v_air_world),
        e_air_world,
        e_air_body: rotation.to_body(e_air_world),
        dynamic_pressure: 0.5 * rho * speed_eps * speed_eps,
        regularized,
    }
}

/// Geometric aerodynamic directions from the body-frame flow direction and
/// the wing-plane normal.
///
/// Fails when the flow is parallel to the normal (projection shorter than
/// 1e-9), where the lift direction is undefined.
pub fn aero_directions(e_air_body: BodyVec, normal_body: BodyVec) -> Result<AeroDirections> {
    let proj = normal_body - e_air_body * normal_body.dot(e_air_body);
    let norm = proj.norm();
    if norm <= 1e-9 {
        return Err(Error::DegenerateLift { surface: None });
    }
    let lift = proj / norm;
    Ok(AeroDirections {
        drag: -e_air_body,
        side: e_air_body.cross(lift),
        lift,
    })
}

/// Angle of attack: `atan2(-e_a . n, e_a . c)`. Positive when the flow has a
/// component from below the chord (nose-up relative to flow).
pub fn angle_of_attack(e_air_body: BodyVec) -> f64 {
    (-e_air_body.dot(BodyVec::normal_axis())).atan2(e_air_body.dot(BodyVec::chord_axis()))
}

/// Sideslip: signed angle between the flow and the sagittal plane. Positive
/// for wind from starboard (motion to the right), matching aeronautical
/// convention despite the left-pointing body y-axis.
pub fn sideslip(e_air_body: BodyVec) -> f64 {
    let lateral = e_air_body.dot(BodyVec::span_axis());
    (-lateral).atan2((1.0 - lateral * lateral).max(0.0).sqrt())
}

pub fn aero_angles(e_air_body: BodyVec) -> AeroAngles {
    AeroAngles { alpha: angle_of_attack(e_air_body), beta: sideslip(e_air_body) }
}

/// Aerodynamic force in the body frame:
/// `q S (C_D e_D + C_L e_L + C_Y e_Y)`.
pub fn aero_force_body(
    q: f64,
    s_ref: f64,
    c_d: f64,
    c_l: f64,
    c_y: f64,
    dirs: &AeroDirections,
) -> BodyVec {
    (dirs.drag * c_d + dirs.lift * c_l + dirs.side * c_y) * (q * s_ref)
}

/// Same force mapped to world coordinates.
pub fn aero_force_world(
    rotation: &Rot3,
    q: f64,
    s_ref: f64,
    c_d: f64,
    c_l: f64,
    c_y: f64,
    dirs: &AeroDirections,
) -> WorldVec {
    rotation.to_world(aero_force_body(q, s_ref, c_d, c_l, c_y, dirs))
}

/// Net aerodynamic moment about the CoM:
/// `q S (C_l b e1 + C_m cbar e2 + C_n b e3) + D_omega omega`.
#[allow(clippy::too_many_arguments)]
pub fn aero_moment_body(
    q: f64,
    s_ref: f64,
    span: f64,
    chord: f64,
    c_l: f64,
    c_m: f64,
    c_n: f64,
    rate_damping: &Matrix3<f64>,
    omega_body: BodyVec,
) -> BodyVec {
    let coeff = BodyVec::new(c_l * span, c_m * chord, c_n * span) * (q * s_ref);
    coeff + BodyVec::from(rate_damping * omega_body.raw())
}

/// Moment from distributed lifting surfaces: each surface sees the apparent
/// local flow `v_a + omega x r_i`, produces drag+lift through its own polar,
/// and contributes `r_i x F_i`.
pub fn distributed_aero_moment(
    surfaces: &[LiftingSurface],
    v_air_body: BodyVec,
    omega_body: BodyVec,
    rho: f64,
    eps: f64,
) -> Result<BodyVec> {
    let eps = eps.max(f64::MIN_POSITIVE);
    let mut total = BodyVec::zeros();
    for (i, surface) in surfaces.iter().enumerate() {
        let v_local = v_air_body + omega_body.cross(surface.offset_body);
        let speed_eps = v_local.norm().max(eps);
        let e_local = v_local / speed_eps;
        let q_local = 0.5 * rho * speed_eps * speed_eps;
        let dirs = aero_directions(e_local, BodyVec::normal_axis())
            .map_err(|_| Error::DegenerateLift { surface: Some(i) })?;
        let alpha = angle_of_attack(e_local);
        let (c_l, c_d) = surface.polar.eval(alpha);
        let force = aero_force_body(q_local, surface.area, c_d, c_l, 0.0, &dirs);
        total += surface.offset_body.cross(force);
    }
    Ok(total)
}

/// Finite-wing lift slope `a0 / (1 + a0/(pi e AR))` [1/rad].
pub fn finite_wing_lift_slope(a0: f64, aspect_ratio: f64, oswald: f64) -> f64 {
    a0 / (1.0 + a0 / (PI * oswald * aspect_ratio))
}

/// Parabolic-polar induced factor `k = 1/(pi e AR)`.
pub fn induced_factor(aspect_ratio: f64, oswald: f64) -> f64 {
    1.0 / (PI * oswald * aspect_ratio)
}

/// Quadratic-in-alpha drag coefficient `k_alpha = k a^2` [1/rad^2].
pub fn k_alpha_of(induced: f64, lift_slope: f64) -> f64 {
    induced * lift_slope * lift_slope
}

/// Built-in airframe presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetId {
    /// 1-3 m span class, Skywalker-X8-like nominal point.
    ClassA,
    /// 4-6 m span class, 5 m Skyeye-like nominal point.
    ClassB,
    /// The 2 kg tethered-demo aircraft.
    Paper5,
}

impl PresetId {
    pub const ALL: [PresetId; 3] = [PresetId::ClassA, PresetId::ClassB, PresetId::Paper5];

    pub fn name(&self) -> &'static str {
        match self {
            PresetId::ClassA => "ClassA",
            PresetId::ClassB => "ClassB",
            PresetId::Paper5 => "Paper5",
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ClassA" => Ok(PresetId::ClassA),
            "ClassB" => Ok(PresetId::ClassB),
            "Paper5" => Ok(PresetId::Paper5),
            other => Err(format!("unknown preset `{other}`")),
        }
    }
}

/// A preset airframe: parameters, polar, and the cruise point. The stored
/// coefficients are the nominal table values as printed, not mid-range
/// recomputations, so goldens stay bit-stable.
#[derive(Debug, Clone)]
pub struct Preset {
    pub id: PresetId,
    pub params: AircraftParams,
    pub polar: AeroPolar,
    pub aspect_ratio: f64,
    pub oswald: f64,
    /// Cruise speed [m/s].
    pub v_cruise: f64,
    /// Cruise dynamic pressure [Pa].
    pub q_cruise: f64,
}

/// Flat-plate estimate of the inertia tensor for a preset airframe.
fn plate_inertia(mass: f64, span: f64, chord: f64) -> Matrix3<f64> {
    let (b2, c2) = (span * span, chord * chord);
    Matrix3::from_diagonal(&(nalgebra::Vector3::new(b2, c2, b2 + c2) * (mass / 12.0)))
}

/// Returns the nominal preset for `id`.
pub fn preset(id: PresetId) -> Preset {
    let rho = crate::SEA_LEVEL_AIR_DENSITY;
    match id {
        PresetId::ClassA => {
            let (mass, s_ref, span) = (3.0, 0.80, 2.12);
            let chord = s_ref / span;
            Preset {
                id,
                params: AircraftParams {
                    mass,
                    inertia: plate_inertia(mass, span, chord),
                    rho,
                    s_ref,
                    span,
                    chord,
                    rate_damping: Matrix3::zeros(),
                    thrust_dir_body: BodyVec::chord_axis(),
                    alpha_max: 15f64.to_radians(),
                    t_max: f64::INFINITY,
                },
                polar: AeroPolar::from_parts(4.35, 0.035, 0.0708, 1.34),
                aspect_ratio: 5.62,
                oswald: 0.80,
                v_cruise: 18.0,
                q_cruise: 198.0,
            }
        }
        PresetId::ClassB => {
            let (mass, s_ref, span) = (40.0, 2.615, 5.00);
            let chord = s_ref / span;
            Preset {
                id,
                params: AircraftParams {
                    mass,
                    inertia: plate_inertia(mass, span, chord),
                    rho,
                    s_ref,
                    span,
                    chord,
                    rate_damping: Matrix3::zeros(),
                    thrust_dir_body: BodyVec::chord_axis(),
                    alpha_max: 15f64.to_radians(),
                    t_max: f64::INFINITY,
                },
                polar: AeroPolar::from_parts(5.10, 0.030, 0.0370, 0.962),
                aspect_ratio: 9.56,
                oswald: 0.90,
                v_cruise: 27.0,
                q_cruise: 447.0,
            }
        }
        PresetId::Paper5 => {
            let (mass, s_ref) = (2.0f64, 0.25f64);
            let (aspect_ratio, oswald) = (5.6f64, 0.8f64);
            let span = (aspect_ratio * s_ref).sqrt();
            let chord = s_ref / span;
            let v_cruise = 11.7;
            // No printed drag-factor column exists for this airframe;
            // k and k_alpha come from the finite-wing relations.
            let polar = AeroPolar::small_angle(4.3, 0.035, induced_factor(aspect_ratio, oswald));
            Preset {
                id,
                params: AircraftParams {
                    mass,
                    inertia: plate_inertia(mass, span, chord),
                    rho,
                    s_ref,
                    span,
                    chord,
                    rate_damping: Matrix3::zeros(),
                    thrust_dir_body: BodyVec::chord_axis(),
                    // The tethered demo trims near 16 degrees; the default
                    // 15 degree stall bound would reject it.
                    alpha_max: 20f64.to_radians(),
                    t_max: f64::INFINITY,
                },
                polar,
                aspect_ratio,
                oswald,
                v_cruise,
                q_cruise: 0.5 * rho * v_cruise * v_cruise,
            }
        }
    }
}
