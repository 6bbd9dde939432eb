//! Tethered flight on a spherical parallel: circular trajectory at constant
//! tangential speed on a sphere of radius `L`, with a radial cable force
//! pulling toward the center.
//!
//! The required force has constant components `A_h` (horizontal, along the
//! outward radial) and `A_z` (vertical), which makes every trim quantity
//! closed-form: the bank law in the dimensionless parameters
//! `kappa = v0^2/(gL)`, `eta = F_ext/(mg)`, the zero-bank locus
//! `eta = kappa/sin^2(theta)`, its parameter sensitivities, and the
//! small-angle trim angle of attack as the unique real root of a cubic.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::aero::AeroPolar;
use crate::error::{Error, Result};
use crate::geom::{AngularState, BodyVec, Rot3, WorldVec};
use crate::inverse::{self, TrajectoryPoint, TrimOptions, TrimPair};

/// Default relative tolerance classifying `eta` as exactly on the zero-bank
/// locus. The boundary is measure-zero; without a tolerance the enum would
/// be unusable.
pub const ZERO_BANK_REL_TOL: f64 = 1e-9;

/// Circular-parallel flight scenario under a radial tether force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetherScenario {
    /// Tether length / sphere radius [m].
    pub length: f64,
    /// Colatitude from world-up [rad], in (0, pi/2].
    pub theta: f64,
    /// Tangential speed [m/s], > 0.
    pub v0: f64,
    /// Cable force magnitude [N]; positive pulls toward the center.
    pub f_ext: f64,
    /// Aircraft mass [kg].
    pub mass: f64,
    /// Gravitational acceleration [m/s^2].
    pub gravity: f64,
    /// Air density [kg/m^3].
    pub rho: f64,
    /// Azimuth at t = 0 [rad].
    pub psi0: f64,
}

impl TetherScenario {
    /// Validates and derives nothing eagerly; `radius`, `height`, etc. are
    /// computed on demand from `(length, theta)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        length: f64,
        theta: f64,
        v0: f64,
        f_ext: f64,
        mass: f64,
        gravity: f64,
        rho: f64,
        psi0: f64,
    ) -> Result<Self> {
        let s = Self { length, theta, v0, f_ext, mass, gravity, rho, psi0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidParameter("tether length must be positive".into()));
        }
        // theta -> 0 sends the parallel radius to zero and the circular
        // rate to infinity; reject at construction.
        if !(self.theta > 0.0 && self.theta <= FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!(
                "colatitude must lie in (0, pi/2] rad, got {}",
                self.theta
            )));
        }
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(Error::InvalidParameter("tangential speed must be positive".into()));
        }
        if !(self.mass > 0.0 && self.gravity > 0.0 && self.rho > 0.0) {
            return Err(Error::InvalidParameter(
                "mass, gravity, and density must be positive".into(),
            ));
        }
        if !self.f_ext.is_finite() || !self.psi0.is_finite() {
            return Err(Error::InvalidParameter("f_ext and psi0 must be finite".into()));
        }
        Ok(())
    }

    /// Parallel-circle radius `r = L sin(theta)` [m].
    pub fn radius(&self) -> f64 {
        self.length * self.theta.sin()
    }

    /// Height of the parallel `z0 = L cos(theta)` [m].
    pub fn height(&self) -> f64 {
        self.length * self.theta.cos()
    }

    /// Circular angular rate `omega_cir = v0 / r` [rad/s].
    pub fn omega_cir(&self) -> f64 {
        self.v0 / self.radius()
    }

    /// Dimensionless speed squared `kappa = v0^2/(gL)`.
    pub fn kappa(&self) -> f64 {
        self.v0 * self.v0 / (self.gravity * self.length)
    }

    /// Normalized cable force `eta = F_ext/(mg)`.
    pub fn eta(&self) -> f64 {
        self.f_ext / (self.mass * self.gravity)
    }

    /// Cruise dynamic pressure `q = rho v0^2 / 2` [Pa], constant along the
    /// parallel.
    pub fn dynamic_pressure(&self) -> f64 {
        0.5 * self.rho * self.v0 * self.v0
    }

    /// Azimuth at time `t` [rad].
    pub fn psi(&self, t: f64) -> f64 {
        self.psi0 + self.omega_cir() * t
    }

    /// The 2 kg demo aircraft on a 20 m tether, 11.7 m/s, at the colatitude
    /// reproducing the published 18.544 m parallel radius, with 16 N of
    /// cable tension.
    pub fn demo() -> Self {
        Self {
            length: 20.0,
            theta: (18.544f64 / 20.0).asin(),
            v0: 11.7,
            f_ext: 16.0,
            mass: 2.0,
            gravity: crate::GRAVITY,
            rho: crate::SEA_LEVEL_AIR_DENSITY,
            psi0: 0.0,
        }
    }
}

/// Trajectory sample on the parallel at time `t`, including the radial cable
/// force; no wind, no external moment.
pub fn parallel_state(s: &TetherScenario, t: f64) -> TrajectoryPoint {
    let (sin_psi, cos_psi) = s.psi(t).sin_cos();
    let u_rxy = WorldVec::new(cos_psi, sin_psi, 0.0);
    let e_t = WorldVec::new(-sin_psi, cos_psi, 0.0);
    let r = s.radius();
    let e_r = u_rxy * (r / s.length) + WorldVec::up() * (s.height() / s.length);
    TrajectoryPoint {
        t,
        position: u_rxy * r + WorldVec::up() * s.height(),
        velocity: e_t * s.v0,
        acceleration: -u_rxy * (s.v0 * s.v0 / r),
        f_ext_world: -e_r * s.f_ext,
        tau_ext_body: BodyVec::zeros(),
        wind_world: WorldVec::zeros(),
    }
}

/// Constant components of the required force and the trajectory frame at a
/// given azimuth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandComponents {
    /// Horizontal demand along the outward radial [N]:
    /// `A_h = -m v0^2/r + F_ext r/L`.
    pub a_h: f64,
    /// Vertical demand [N]: `A_z = m g + F_ext z0/L`.
    pub a_z: f64,
    /// Inward horizontal demand `-A_h` [N].
    pub a_h_in: f64,
    /// `sqrt(A_h^2 + A_z^2)` [N]; the entire demand is perpendicular to the
    /// flow, `f_par = 0` by construction.
    pub f_perp: f64,
    pub n_curve_world: WorldVec,
    pub s_world: WorldVec,
}

/// Required-force components and coordinated-flight frame at azimuth `psi`.
///
/// Fails when both components vanish simultaneously (no perpendicular
/// demand at all), which needs a negative cable force tuned against both
/// gravity and the centrifugal term.
pub fn demand(s: &TetherScenario, psi: f64) -> Result<DemandComponents> {
    let r = s.radius();
    let a_h = -s.mass * s.v0 * s.v0 / r + s.f_ext * r / s.length;
    let a_z = s.mass * s.gravity + s.f_ext * s.height() / s.length;
    let f_perp = a_h.hypot(a_z);
    if f_perp <= 0.0 {
        return Err(Error::ZeroPerpendicularDemand);
    }
    let (sin_psi, cos_psi) = psi.sin_cos();
    let u_rxy = WorldVec::new(cos_psi, sin_psi, 0.0);
    let n_curve_world = (u_rxy * a_h + WorldVec::up() * a_z) / f_perp;
    let s_world = (WorldVec::up() * a_h - u_rxy * a_z) / f_perp;
    Ok(DemandComponents { a_h, a_z, a_h_in: -a_h, f_perp, n_curve_world, s_world })
}

/// Trim via the full fixed-point solver with `f_par = 0`,
/// `f_perp = sqrt(A_h^2 + A_z^2)`, `q = rho v0^2 / 2`.
pub fn implicit_trim(
    s: &TetherScenario,
    polar: &AeroPolar,
    s_ref: f64,
    opts: &TrimOptions,
) -> Result<TrimPair> {
    let dem = demand(s, s.psi0)?;
    inverse::solve_trim(0.0, dem.f_perp, s.dynamic_pressure(), s_ref, polar, opts)
}

/// Unique real root of the small-angle trim cubic
/// `k_alpha a^3 + (C_D0 + a_lift) a = demand_ratio` by Cardano's formula.
///
/// `demand_ratio` is `f_perp / (q S)`. With `k_alpha > 0` and
/// `C_D0 + a_lift > 0` the cubic is strictly increasing, so the real root is
/// unique and the discriminant positive.
pub fn cardano_alpha(k_alpha: f64, c_d0: f64, lift_slope: f64, demand_ratio: f64) -> f64 {
    let p = (c_d0 + lift_slope) / k_alpha;
    let d = demand_ratio / k_alpha;
    let half_d = 0.5 * d;
    let sqrt_delta = (half_d * half_d + (p / 3.0).powi(3)).sqrt();
    (half_d + sqrt_delta).cbrt() + (half_d - sqrt_delta).cbrt()
}

/// Closed-form trim of the scenario under the small-angle polar: alpha from
/// [`cardano_alpha`], thrust from the drag it implies,
/// `T = qS (C_D0 + k_alpha a^2) / cos(a)`.
pub fn cardano_trim(s: &TetherScenario, polar: &AeroPolar, s_ref: f64) -> Result<TrimPair> {
    if !(polar.k_alpha > 0.0 && polar.c_d0 + polar.lift_slope > 0.0) {
        return Err(Error::InvalidParameter(
            "cardano trim needs k_alpha > 0 and C_D0 + lift slope > 0".into(),
        ));
    }
    let dem = demand(s, s.psi0)?;
    let q_s = s.dynamic_pressure() * s_ref;
    let ratio = dem.f_perp / q_s;
    let alpha = cardano_alpha(polar.k_alpha, polar.c_d0, polar.lift_slope, ratio);
    let thrust = q_s * (polar.c_d0 + polar.k_alpha * alpha * alpha) / alpha.cos();
    let residual =
        (polar.k_alpha * alpha.powi(3) + (polar.c_d0 + polar.lift_slope) * alpha - ratio).abs();
    Ok(TrimPair { thrust, alpha, iterations: 0, residual })
}

/// Which side of the zero-bank locus the operating point sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Centrifugal force dominates; bank into the turn (`mu > 0`).
    Inward,
    /// Cable tension exactly supplies the centripetal demand; wings level.
    ZeroBank,
    /// Cable tension dominates; bank away from the turn center (`mu < 0`).
    Outward,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Inward => "Inward",
            Regime::ZeroBank => "ZeroBank",
            Regime::Outward => "Outward",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Inward" => Ok(Regime::Inward),
            "ZeroBank" => Ok(Regime::ZeroBank),
            "Outward" => Ok(Regime::Outward),
            other => Err(format!("unknown regime `{other}`")),
        }
    }
}

/// Signed geometric bank angle, positive inward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankResult {
    /// Bank angle [rad].
    pub mu: f64,
    pub regime: Regime,
}

/// Bank law in dimensionless form:
/// `tan(mu) = (kappa/sin(theta) - eta sin(theta)) / (1 + eta cos(theta))`.
///
/// Fails when the denominator is not positive (the external force would
/// invert the aircraft).
pub fn bank_angle_dimensionless(kappa: f64, eta: f64, theta: f64) -> Result<f64> {
    let den = 1.0 + eta * theta.cos();
    if den <= 0.0 {
        return Err(Error::InvertedRegime);
    }
    Ok(((kappa / theta.sin() - eta * theta.sin()) / den).atan())
}

/// Bank angle of the scenario in physical variables,
/// `tan(mu) = A_h_in / A_z`, with the regime classified against the
/// zero-bank locus at [`ZERO_BANK_REL_TOL`].
pub fn bank_angle(s: &TetherScenario) -> Result<BankResult> {
    let dem = demand(s, 0.0)?;
    if dem.a_z <= 0.0 {
        return Err(Error::InvertedRegime);
    }
    let mu = dem.a_h_in.atan2(dem.a_z);
    let eta_star = zero_bank_eta(s.kappa(), s.theta);
    let regime = classify_regime(s.kappa(), s.eta(), s.theta, ZERO_BANK_REL_TOL * eta_star);
    Ok(BankResult { mu, regime })
}

/// Cable tension that exactly cancels the centrifugal demand:
/// `F_ext* = m v0^2 L / r^2` [N].
pub fn zero_bank_tension(s: &TetherScenario) -> f64 {
    let r = s.radius();
    s.mass * s.v0 * s.v0 * s.length / (r * r)
}

/// Zero-bank locus in dimensionless form: `eta* = kappa / sin^2(theta)`.
pub fn zero_bank_eta(kappa: f64, theta: f64) -> f64 {
    kappa / (theta.sin() * theta.sin())
}

/// Classifies the operating point against the locus with an absolute
/// tolerance on `eta`.
pub fn classify_regime(kappa: f64, eta: f64, theta: f64, tol: f64) -> Regime {
    let eta_star = zero_bank_eta(kappa, theta);
    if eta < eta_star - tol {
        Regime::Inward
    } else if eta > eta_star + tol {
        Regime::Outward
    } else {
        Regime::ZeroBank
    }
}

/// Closed-form partial derivatives of the bank angle at the zero-bank locus.
///
/// Signs for `theta` in (0, pi/2) and positive tension: (-, +, -, -) in the
/// field order below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    /// `dmu/deta` [rad per unit eta].
    pub d_eta: f64,
    /// `dmu/dkappa` [rad per unit kappa].
    pub d_kappa: f64,
    /// `dmu/dtheta` [rad/rad].
    pub d_theta: f64,
    /// `dmu/dL` at fixed physical speed and force [rad/m].
    pub d_length: f64,
}

/// Evaluates the four bank-angle sensitivities at the locus
/// `eta = kappa/sin^2(theta)`:
/// `dmu/deta = -sin(theta)/D`, `dmu/dkappa = 1/(sin(theta) D)`,
/// `dmu/dtheta = -2 kappa cos(theta)/(sin^2(theta) D)`,
/// `dmu/dL = -kappa/(L sin(theta) D)`, with `D = 1 + eta cos(theta)`.
pub fn sensitivities_at_locus(kappa: f64, theta: f64, length: f64) -> SensitivityReport {
    let (sin_t, cos_t) = theta.sin_cos();
    let den = 1.0 + zero_bank_eta(kappa, theta) * cos_t;
    SensitivityReport {
        d_eta: -sin_t / den,
        d_kappa: 1.0 / (sin_t * den),
        d_theta: -2.0 * kappa * cos_t / (sin_t * sin_t * den),
        d_length: -kappa / (length * sin_t * den),
    }
}

/// Total drag as a function of the lift force it must produce:
/// `D(F_L) = qS C_D0 + F_L^2 k_alpha / (qS a^2)`; strictly increasing in
/// `|F_L|`, which is why the zero-bank point (minimal `f_perp`) is the
/// efficiency sweet spot.
pub fn induced_drag_of_lift(f_lift: f64, q: f64, s_ref: f64, polar: &AeroPolar) -> f64 {
    let q_s = q * s_ref;
    q_s * polar.c_d0 + f_lift * f_lift * polar.k_alpha / (q_s * polar.lift_slope * polar.lift_slope)
}

/// Accelerometer-measured specific force `f_meas^B = R^T (a^W - g^W)`.
pub fn specific_force(rotation: &Rot3, a_world: WorldVec, g_world: WorldVec) -> BodyVec {
    rotation.to_body(a_world - g_world)
}

/// Body rates of the parallel solution: `omega^W = omega_cir e3` is
/// constant, so `omega^B = R^T omega^W` and `omega_dot^B = 0`.
pub fn constant_rates(s: &TetherScenario, rotation: &Rot3) -> AngularState {
    AngularState {
        omega_body: rotation.to_body(WorldVec::up() * s.omega_cir()),
        omega_dot_body: BodyVec::zeros(),
    }
}

/// Fully solved parallel flight: scenario, trim, and the closed-form
/// attitude history.
#[derive(Debug, Clone)]
pub struct ParallelSolution {
    pub scenario: TetherScenario,
    pub trim: TrimPair,
    pub demand: DemandComponents,
    pub bank: BankResult,
}

/// Solves the scenario once; the result samples attitude, rates, and
/// trajectory at any time.
pub fn solve_parallel(
    s: &TetherScenario,
    polar: &AeroPolar,
    s_ref: f64,
    opts: &TrimOptions,
) -> Result<ParallelSolution> {
    let trim = implicit_trim(s, polar, s_ref, opts)?;
    Ok(ParallelSolution {
        scenario: *s,
        trim,
        demand: demand(s, s.psi0)?,
        bank: bank_angle(s)?,
    })
}

impl ParallelSolution {
    /// Attitude at time `t`: the coordinated trajectory frame at azimuth
    /// `psi(t)` pitched by the constant trim alpha.
    pub fn attitude(&self, t: f64) -> Rot3 {
        let s = &self.scenario;
        let (sin_psi, cos_psi) = s.psi(t).sin_cos();
        let u_rxy = WorldVec::new(cos_psi, sin_psi, 0.0);
        let e_a = WorldVec::new(-sin_psi, cos_psi, 0.0);
        let n_curve = (u_rxy * self.demand.a_h + WorldVec::up() * self.demand.a_z)
            / self.demand.f_perp;
        let s_world = n_curve.cross(e_a);
        inverse::body_axes(self.trim.alpha, e_a, s_world, n_curve)
            .expect("parallel frame is orthonormal by construction")
    }

    pub fn rates(&self, t: f64) -> AngularState {
        constant_rates(&self.scenario, &self.attitude(t))
    }

    pub fn trajectory_point(&self, t: f64) -> TrajectoryPoint {
        parallel_state(&self.scenario, t)
    }

    /// Constant moment coefficients realizing the orbit: `omega_dot^B = 0`,
    /// so the required torque is the gyroscopic term alone.
    pub fn moment_coefficients(&self, params: &crate::aero::AircraftParams) -> Result<[f64; 3]> {
        let rates = self.rates(0.0);
        let tau_req = inverse::required_torque(
            &params.inertia,
            rates.omega_body,
            rates.omega_dot_body,
            BodyVec::zeros(),
            BodyVec::zeros(),
        );
        inverse::moment_coefficients(
            tau_req,
            &params.rate_damping,
            rates.omega_body,
            self.scenario.dynamic_pressure(),
            params.s_ref,
            params.span,
            params.chord,
        )
    }

    /// Orbit period `2 pi r / v0` [s].
    pub fn orbit_period(&self) -> f64 {
        2.0 * PI * self.scenario.radius() / self.scenario.v0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aero::{preset, PresetId};
    use crate::geom::frame_rate_fd;
    use approx::assert_abs_diff_eq;

    fn demo() -> TetherScenario {
        TetherScenario::demo()
    }

    fn demo_polar() -> AeroPolar {
        preset(PresetId::Paper5).polar
    }

    const DEMO_S_REF: f64 = 0.25;

    #[test]
    fn scenario_rejects_bad_domains() {
        assert!(TetherScenario::new(20.0, 0.0, 11.7, 0.0, 2.0, 9.81, 1.225, 0.0).is_err());
        assert!(
            TetherScenario::new(20.0, 95f64.to_radians(), 11.7, 0.0, 2.0, 9.81, 1.225, 0.0)
                .is_err()
        );
        assert!(TetherScenario::new(20.0, 1.0, -1.0, 0.0, 2.0, 9.81, 1.225, 0.0).is_err());
        assert!(TetherScenario::new(-5.0, 1.0, 11.7, 0.0, 2.0, 9.81, 1.225, 0.0).is_err());
    }

    #[test]
    fn demo_geometry_matches_published_radius() {
        let s = demo();
        assert_abs_diff_eq!(s.radius(), 18.544, epsilon = 1e-12);
        assert_abs_diff_eq!(s.omega_cir(), 0.6309318377911992, epsilon = 1e-12);
        assert_abs_diff_eq!(s.kappa(), 0.6977064220183485, epsilon = 1e-12);
        assert_abs_diff_eq!(s.dynamic_pressure(), 83.845125, epsilon = 1e-9);
    }

    #[test]
    fn parallel_state_at_origin_azimuth() {
        let s = demo();
        let pt = parallel_state(&s, 0.0);
        assert_abs_diff_eq!(pt.position.x(), s.radius(), epsilon = 1e-12);
        assert_abs_diff_eq!(pt.position.y(), 0.0);
        assert_abs_diff_eq!(pt.position.z(), s.height(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            (pt.velocity - WorldVec::new(0.0, s.v0, 0.0)).norm(),
            0.0,
            epsilon = 1e-12
        );
        let a_expected = -s.v0 * s.v0 / s.radius();
        assert_abs_diff_eq!(pt.acceleration.x(), a_expected, epsilon = 1e-12);
        // Cable pulls toward the origin along the sphere radial.
        assert!(pt.f_ext_world.x() < 0.0 && pt.f_ext_world.z() < 0.0);
        assert_abs_diff_eq!(pt.f_ext_world.norm(), s.f_ext, epsilon = 1e-12);
    }

    #[test]
    fn parallel_state_stays_on_sphere() {
        let s = demo();
        for i in 0..50 {
            let pt = parallel_state(&s, 0.37 * i as f64);
            assert_abs_diff_eq!(pt.position.norm() / s.length, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn demand_free_flight_components() {
        let mut s = demo();
        s.f_ext = 0.0;
        let d = demand(&s, 0.0).unwrap();
        assert_abs_diff_eq!(d.a_h, -s.mass * s.v0 * s.v0 / s.radius(), epsilon = 1e-12);
        assert_abs_diff_eq!(d.a_z, s.mass * s.gravity, epsilon = 1e-12);
    }

    #[test]
    fn demand_matches_frozen_demo_values() {
        let d = demand(&demo(), 0.0).unwrap();
        assert_abs_diff_eq!(d.a_h, 0.07139499568593877, epsilon = 1e-9);
        assert_abs_diff_eq!(d.a_z, 25.613066073388477, epsilon = 1e-9);
        assert_abs_diff_eq!(d.f_perp, 25.613165577982993, epsilon = 1e-9);
        // Demand is entirely perpendicular to the flow.
        let e_a = WorldVec::new(0.0, 1.0, 0.0);
        assert_abs_diff_eq!(d.n_curve_world.dot(e_a), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn demand_vanishing_horizontal_at_zero_bank_tension() {
        let mut s = demo();
        s.f_ext = zero_bank_tension(&s);
        let d = demand(&s, 0.0).unwrap();
        assert_abs_diff_eq!(d.a_h, 0.0, epsilon = 1e-12 * d.f_perp);
    }

    #[test]
    fn implicit_trim_matches_frozen_bisection() {
        let mut s = demo();
        s.f_ext = zero_bank_tension(&s);
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let trim = implicit_trim(&s, &demo_polar(), DEMO_S_REF, &opts).unwrap();
        assert_abs_diff_eq!(trim.alpha, 0.27503004657307284, epsilon = 1e-9);
        assert_abs_diff_eq!(trim.thrust, 2.9266258695416436, epsilon = 1e-7);
    }

    #[test]
    fn implicit_trim_monotone_in_demand() {
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let polar = demo_polar();
        let q = demo().dynamic_pressure();
        let mut last = -1.0;
        for f_perp in [20.0, 23.0, 26.0, 29.0] {
            let trim =
                crate::inverse::solve_trim(0.0, f_perp, q, DEMO_S_REF, &polar, &opts).unwrap();
            assert!(trim.alpha > last);
            last = trim.alpha;
        }
    }

    #[test]
    fn implicit_trim_high_pressure_limit() {
        // q S -> infinity: alpha -> 0 and T -> q S C_D0.
        let polar = demo_polar();
        let opts = TrimOptions::default();
        let q = 1e9;
        let trim = crate::inverse::solve_trim(0.0, 25.58, q, DEMO_S_REF, &polar, &opts).unwrap();
        assert!(trim.alpha.abs() < 1e-6);
        assert_abs_diff_eq!(trim.thrust / (q * DEMO_S_REF * polar.c_d0), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn cardano_zero_demand_is_zero_alpha() {
        assert_eq!(cardano_alpha(1.314, 0.035, 4.3, 0.0), 0.0);
        let trim = cardano_trim(&demo(), &demo_polar(), DEMO_S_REF).unwrap();
        assert!(trim.residual < 1e-12);
    }

    #[test]
    fn cardano_matches_frozen_root_at_locus() {
        let mut s = demo();
        s.f_ext = zero_bank_tension(&s);
        let trim = cardano_trim(&s, &demo_polar(), DEMO_S_REF).unwrap();
        assert_abs_diff_eq!(trim.alpha, 0.27523743539112966, epsilon = 1e-12);
        assert_abs_diff_eq!(trim.thrust, 2.9300627006455047, epsilon = 1e-9);
        // Within a quarter degree of the full fixed-point solve.
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let full = implicit_trim(&s, &demo_polar(), DEMO_S_REF, &opts).unwrap();
        assert!((trim.alpha - full.alpha).abs() < 5e-3);
    }

    #[test]
    fn cardano_alpha_decreases_with_pressure() {
        let (ka, c_d0, a) = (1.314, 0.035, 4.3);
        let f_perp = 25.58;
        let mut last = f64::INFINITY;
        for q_s in [10.0, 20.0, 40.0, 80.0] {
            let alpha = cardano_alpha(ka, c_d0, a, f_perp / q_s);
            assert!(alpha < last);
            last = alpha;
        }
    }

    #[test]
    fn bank_free_flight_matches_classical_turn() {
        let mut s = demo();
        s.f_ext = 0.0;
        let bank = bank_angle(&s).unwrap();
        let classical = (s.v0 * s.v0 / (s.gravity * s.radius())).atan();
        assert_abs_diff_eq!(bank.mu, classical, epsilon = 1e-15);
        assert_abs_diff_eq!(bank.mu.to_degrees(), 36.96100414353285, epsilon = 1e-9);
        assert_eq!(bank.regime, Regime::Inward);
    }

    #[test]
    fn bank_zero_at_locus() {
        let kappa = 0.6977;
        let theta = 60f64.to_radians();
        let mu = bank_angle_dimensionless(kappa, zero_bank_eta(kappa, theta), theta).unwrap();
        assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-15);

        let mut s = demo();
        s.f_ext = zero_bank_tension(&s);
        let bank = bank_angle(&s).unwrap();
        assert_abs_diff_eq!(bank.mu, 0.0, epsilon = 1e-12);
        assert_eq!(bank.regime, Regime::ZeroBank);
    }

    #[test]
    fn bank_asymptotic_tension_aligns_with_tether() {
        for theta_deg in [30.0f64, 60.0] {
            let theta = theta_deg.to_radians();
            let mu = bank_angle_dimensionless(0.6977, 1e6, theta).unwrap();
            assert!((mu + theta).abs() < 1e-4, "theta {theta_deg}: mu {mu}");
        }
    }

    #[test]
    fn bank_rejects_inverted_regime() {
        assert!(matches!(
            bank_angle_dimensionless(0.7, -3.0, 60f64.to_radians()),
            Err(Error::InvertedRegime)
        ));
    }

    #[test]
    fn bank_physical_equals_dimensionless() {
        for f_ext in [0.0, 5.0, 10.0, 16.0, 40.0] {
            let mut s = demo();
            s.f_ext = f_ext;
            let physical = bank_angle(&s).unwrap().mu;
            let dimensionless =
                bank_angle_dimensionless(s.kappa(), s.eta(), s.theta).unwrap();
            assert_abs_diff_eq!(physical, dimensionless, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_bank_tension_frozen_and_limits() {
        let s = demo();
        assert_abs_diff_eq!(zero_bank_tension(&s), 15.922999357543207, epsilon = 1e-9);
        // Equator: eta* = kappa.
        assert_abs_diff_eq!(zero_bank_eta(0.42, FRAC_PI_2), 0.42, epsilon = 1e-15);
        // No speed, no centrifugal demand.
        let mut slow = s;
        slow.v0 = 1e-6;
        assert!(zero_bank_tension(&slow) < 1e-9);
    }

    #[test]
    fn sensitivities_match_frozen_point() {
        let report = sensitivities_at_locus(0.6977, 60f64.to_radians(), 20.0);
        assert_abs_diff_eq!(report.d_eta, -0.591089823759684, epsilon = 1e-12);
        assert_abs_diff_eq!(report.d_kappa, 0.7881197650129121, epsilon = 1e-12);
        assert_abs_diff_eq!(report.d_theta, -0.6349365245483916, epsilon = 1e-12);
        assert_abs_diff_eq!(report.d_length, -0.02749355800247544, epsilon = 1e-12);
    }

    #[test]
    fn sensitivities_flat_in_theta_at_equator() {
        let report = sensitivities_at_locus(0.9, FRAC_PI_2, 15.0);
        assert_abs_diff_eq!(report.d_theta, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sensitivity_signs() {
        for theta_deg in [20.0, 45.0, 75.0] {
            for kappa in [0.2, 0.8, 1.7] {
                let r = sensitivities_at_locus(kappa, (theta_deg as f64).to_radians(), 20.0);
                assert!(r.d_eta < 0.0);
                assert!(r.d_kappa > 0.0);
                assert!(r.d_theta < 0.0);
                assert!(r.d_length < 0.0);
            }
        }
    }

    #[test]
    fn sensitivities_match_central_differences() {
        let (kappa, theta, length) = (0.6977064220183485, (18.544f64 / 20.0).asin(), 20.0);
        let eta_star = zero_bank_eta(kappa, theta);
        let h = 1e-6;
        let report = sensitivities_at_locus(kappa, theta, length);

        let mu = |k: f64, e: f64, t: f64| bank_angle_dimensionless(k, e, t).unwrap();
        let fd_eta = (mu(kappa, eta_star + h, theta) - mu(kappa, eta_star - h, theta)) / (2.0 * h);
        let fd_kappa = (mu(kappa + h, eta_star, theta) - mu(kappa - h, eta_star, theta)) / (2.0 * h);
        let fd_theta = (mu(kappa, eta_star, theta + h) - mu(kappa, eta_star, theta - h)) / (2.0 * h);
        // L enters through kappa = v0^2/(gL) at fixed physical speed.
        let kappa_of = |l: f64| kappa * length / l;
        let fd_length =
            (mu(kappa_of(length + h), eta_star, theta) - mu(kappa_of(length - h), eta_star, theta))
                / (2.0 * h);

        assert_abs_diff_eq!(report.d_eta, fd_eta, epsilon = 1e-8);
        assert_abs_diff_eq!(report.d_kappa, fd_kappa, epsilon = 1e-8);
        assert_abs_diff_eq!(report.d_theta, fd_theta, epsilon = 1e-8);
        assert_abs_diff_eq!(report.d_length, fd_length, epsilon = 1e-8);
    }

    #[test]
    fn regime_classification() {
        let theta = 60f64.to_radians();
        let kappa = 0.6977;
        let eta_star = zero_bank_eta(kappa, theta);
        assert_eq!(classify_regime(kappa, 0.0, theta, 1e-9), Regime::Inward);
        assert_eq!(classify_regime(kappa, eta_star, theta, 1e-9), Regime::ZeroBank);
        assert_eq!(classify_regime(kappa, 10.0 * eta_star, theta, 1e-9), Regime::Outward);
    }

    #[test]
    fn regime_boundary_is_bank_zero() {
        for theta_deg in [25.0, 50.0, 85.0] {
            let theta = (theta_deg as f64).to_radians();
            for kappa in [0.3, 1.1] {
                let eta_star = zero_bank_eta(kappa, theta);
                let mu = bank_angle_dimensionless(kappa, eta_star, theta).unwrap();
                assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn induced_drag_quadratic_in_lift() {
        let polar = demo_polar();
        let (q, s_ref) = (83.845125, DEMO_S_REF);
        let parasitic = induced_drag_of_lift(0.0, q, s_ref, &polar);
        assert_abs_diff_eq!(parasitic, q * s_ref * polar.c_d0, epsilon = 1e-12);
        let d1 = induced_drag_of_lift(10.0, q, s_ref, &polar) - parasitic;
        let d2 = induced_drag_of_lift(20.0, q, s_ref, &polar) - parasitic;
        assert_abs_diff_eq!(d2 / d1, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_bank_minimizes_drag_over_horizontal_demand() {
        let polar = demo_polar();
        let a_z = 25.58422420226742;
        let drag_at = |a_h: f64| {
            induced_drag_of_lift(a_h.hypot(a_z), 83.845125, DEMO_S_REF, &polar)
        };
        let at_locus = drag_at(0.0);
        for a_h in [-4.0, -2.0, 2.0, 4.0] {
            assert!(drag_at(a_h) > at_locus);
        }
        assert!(drag_at(4.0) > drag_at(2.0));
    }

    #[test]
    fn specific_force_hover_and_free_fall() {
        let g_world = WorldVec::new(0.0, 0.0, -9.81);
        let hover = specific_force(&Rot3::identity(), WorldVec::zeros(), g_world);
        assert_abs_diff_eq!((hover - BodyVec::new(0.0, 0.0, 9.81)).norm(), 0.0, epsilon = 1e-15);
        let fall = specific_force(&Rot3::identity(), g_world, g_world);
        assert_eq!(fall.norm(), 0.0);
    }

    #[test]
    fn specific_force_lateral_component_at_zero_bank() {
        let mut s = demo();
        s.f_ext = zero_bank_tension(&s);
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let solution = solve_parallel(&s, &demo_polar(), DEMO_S_REF, &opts).unwrap();
        let rot = solution.attitude(0.0);
        let pt = solution.trajectory_point(0.0);
        let g_world = WorldVec::new(0.0, 0.0, -s.gravity);
        let f_meas = specific_force(&rot, pt.acceleration, g_world);
        let lateral = f_meas.dot(BodyVec::span_axis());
        // Wings are level and beta = 0, yet the seat pushes sideways with
        // the full centripetal acceleration: the tether, not a slip.
        assert_abs_diff_eq!(lateral, 7.381902502157031, epsilon = 1e-9);
    }

    #[test]
    fn constant_rates_match_numeric_differentiation() {
        let s = demo();
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let solution = solve_parallel(&s, &demo_polar(), DEMO_S_REF, &opts).unwrap();
        let rot = solution.attitude(1.234);
        let analytic = constant_rates(&s, &rot);
        assert_abs_diff_eq!(analytic.omega_body.norm(), 0.6309318377911992, epsilon = 1e-12);
        assert_eq!(analytic.omega_dot_body.norm(), 0.0);

        let (_, numeric) = frame_rate_fd(|t| solution.attitude(t), 1.234, 1e-5).unwrap();
        assert!((numeric.omega_body - analytic.omega_body).norm() < 1e-6);
        assert!(numeric.omega_dot_body.norm() < 1e-6);
    }

    #[test]
    fn parallel_solution_orbit_period() {
        let opts = TrimOptions { alpha_max: 20f64.to_radians(), ..TrimOptions::default() };
        let solution = solve_parallel(&demo(), &demo_polar(), DEMO_S_REF, &opts).unwrap();
        assert_abs_diff_eq!(solution.orbit_period(), 9.958580199687031, epsilon = 1e-9);
        // Attitude columns stay orthonormal around the whole orbit.
        for i in 0..20 {
            let r = solution.attitude(i as f64 * 0.5);
            assert!(r.orthonormality_error() < 1e-14);
            assert_abs_diff_eq!(r.det(), 1.0, epsilon = 1e-13);
        }
    }
}
