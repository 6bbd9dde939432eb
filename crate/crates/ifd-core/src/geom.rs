//! Frame-tagged vectors, rotations on SO(3), and angular-velocity extraction.
//!
//! Every vector carries its frame in the type: [`WorldVec`] for the z-up world
//! frame, [`BodyVec`] for the FLU (forward-left-up) body frame. A [`Rot3`]
//! maps body to world; mixing frames without going through a rotation is a
//! compile error, which is the whole point of the tagging.

use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Frobenius tolerance on `R^T R - I` for a valid rotation.
pub const ROTATION_ORTHO_TOL: f64 = 1e-10;
/// Gram-residual tolerance accepted when building a rotation from axes.
pub const AXES_ORTHO_TOL: f64 = 1e-8;
/// Symmetric-part tolerance accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-8;
/// Unit-norm tolerance for direction vectors.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Default central-difference step for [`frame_rate_fd`] [s].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Marker trait for coordinate frames.
pub trait Frame: Copy + Clone + PartialEq + Eq + std::fmt::Debug + 'static {}

/// World frame: z-up, gravity along -e3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct World;

/// Body frame: FLU, e1 chord/forward, e2 span/left, e3 wing normal/up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Body;

impl Frame for World {}
impl Frame for Body {}

/// A 3-vector tagged with the frame it is expressed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameVec<F: Frame> {
    v: Vector3<f64>,
    _frame: PhantomData<F>,
}

pub type WorldVec = FrameVec<World>;
pub type BodyVec = FrameVec<Body>;

impl<F: Frame> FrameVec<F> {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { v: Vector3::new(x, y, z), _frame: PhantomData }
    }

    pub fn zeros() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn unit_x() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }

    pub fn unit_y() -> Self {
        Self::new(0.0, 1.0, 0.0)
    }

    pub fn unit_z() -> Self {
        Self::new(0.0, 0.0, 1.0)
    }

    pub fn x(&self) -> f64 {
        self.v.x
    }

    pub fn y(&self) -> f64 {
        self.v.y
    }

    pub fn z(&self) -> f64 {
        self.v.z
    }

    /// The untagged nalgebra vector.
    pub fn raw(&self) -> Vector3<f64> {
        self.v
    }

    pub fn dot(&self, other: Self) -> f64 {
        self.v.dot(&other.v)
    }

    pub fn cross(&self, other: Self) -> Self {
        Self::from(self.v.cross(&other.v))
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.v.norm_squared()
    }

    /// `None` when the norm is below `1e-300` (direction undefined).
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 1e-300).then(|| *self / n)
    }

    /// `| ||v|| - 1 |`, the defect against the unit-vector contract.
    pub fn unit_error(&self) -> f64 {
        (self.norm() - 1.0).abs()
    }

    pub fn is_unit(&self) -> bool {
        self.unit_error() <= UNIT_NORM_TOL
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|c| c.is_finite())
    }
}

impl WorldVec {
    /// World up axis e3 (gravity acts along `-up()`).
    pub fn up() -> Self {
        Self::unit_z()
    }
}

impl BodyVec {
    /// Chord/forward axis c = e1.
    pub fn chord_axis() -> Self {
        Self::unit_x()
    }

    /// Span/left axis s = e2.
    pub fn span_axis() -> Self {
        Self::unit_y()
    }

    /// Wing-plane normal n = e3.
    pub fn normal_axis() -> Self {
        Self::unit_z()
    }
}

impl<F: Frame> From<Vector3<f64>> for FrameVec<F> {
    fn from(v: Vector3<f64>) -> Self {
        Self { v, _frame: PhantomData }
    }
}

impl<F: Frame> From<FrameVec<F>> for Vector3<f64> {
    fn from(v: FrameVec<F>) -> Self {
        v.v
    }
}

impl<F: Frame> Add for FrameVec<F> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from(self.v + rhs.v)
    }
}

impl<F: Frame> AddAssign for FrameVec<F> {
    fn add_assign(&mut self, rhs: Self) {
        self.v += rhs.v;
    }
}

impl<F: Frame> Sub for FrameVec<F> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from(self.v - rhs.v)
    }
}

impl<F: Frame> SubAssign for FrameVec<F> {
    fn sub_assign(&mut self, rhs: Self) {
        self.v -= rhs.v;
    }
}

impl<F: Frame> Neg for FrameVec<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from(-self.v)
    }
}

impl<F: Frame> Mul<f64> for FrameVec<F> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::from(self.v * rhs)
    }
}

impl<F: Frame> Mul<FrameVec<F>> for f64 {
    type Output = FrameVec<F>;
    fn mul(self, rhs: FrameVec<F>) -> FrameVec<F> {
        rhs * self
    }
}

impl<F: Frame> Div<f64> for FrameVec<F> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        Self::from(self.v / rhs)
    }
}

/// Skew operator: `hat(v) * y == v x y` for all y.
pub fn hat(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] on the skew-symmetric part of `m`, with no tolerance
/// check. Used where the input is skew only up to discretization error.
pub fn vee_lenient(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Inverse of [`hat`]. Antisymmetrizes first; rejects matrices whose
/// symmetric part exceeds [`SKEW_TOL`] in Frobenius norm.
pub fn vee(m: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let sym = 0.5 * (m + m.transpose());
    let residual = sym.norm();
    if residual > SKEW_TOL {
        return Err(Error::NotSkewSymmetric { residual, tol: SKEW_TOL });
    }
    Ok(vee_lenient(m))
}

/// Body angular velocity and its body-frame derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularState {
    pub omega_body: BodyVec,
    pub omega_dot_body: BodyVec,
}

impl AngularState {
    pub fn zero() -> Self {
        Self { omega_body: BodyVec::zeros(), omega_dot_body: BodyVec::zeros() }
    }
}

/// Rotation matrix mapping body to world; columns are the body axes
/// (chord, span, normal) expressed in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3 {
    m: Matrix3<f64>,
}

impl Rot3 {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    /// Wraps a matrix without checking the SO(3) invariants.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self { m }
    }

    /// Builds `R = [c s n]` from body axes expressed in world coordinates.
    ///
    /// The inputs must form a right-handed orthonormal triad within
    /// [`AXES_ORTHO_TOL`]; the error carries the offending Gram residual.
    pub fn from_axes(c: WorldVec, s: WorldVec, n: WorldVec) -> Result<Self> {
        let m = Matrix3::from_columns(&[c.raw(), s.raw(), n.raw()]);
        let gram_residual = (m.transpose() * m - Matrix3::identity()).norm();
        let handedness = (c.cross(s).dot(n) - 1.0).abs();
        if gram_residual > AXES_ORTHO_TOL || handedness > AXES_ORTHO_TOL {
            return Err(Error::NonOrthonormalAxes {
                gram_residual: gram_residual.max(handedness),
            });
        }
        Ok(Self { m })
    }

    /// Exponential map: rotation by the axis-angle vector `phi` (Rodrigues).
    pub fn exp(phi: Vector3<f64>) -> Self {
        let theta2 = phi.norm_squared();
        let k = hat(phi);
        if theta2 < 1e-28 {
            // Second-order series; keeps orthogonality to O(theta^3).
            return Self { m: Matrix3::identity() + k + 0.5 * (k * k) };
        }
        let theta = theta2.sqrt();
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / theta2;
        Self { m: Matrix3::identity() + a * k + b * (k * k) }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Maps a body-frame vector to world coordinates.
    pub fn to_world(&self, v: BodyVec) -> WorldVec {
        WorldVec::from(self.m * v.raw())
    }

    /// Maps a world-frame vector to body coordinates (applies `R^T`).
    pub fn to_body(&self, v: WorldVec) -> BodyVec {
        BodyVec::from(self.m.transpose() * v.raw())
    }

    /// Body chord axis in world coordinates (first column).
    pub fn chord_world(&self) -> WorldVec {
        WorldVec::from(self.m.column(0).into_owned())
    }

    /// Body span axis in world coordinates (second column).
    pub fn span_world(&self) -> WorldVec {
        WorldVec::from(self.m.column(1).into_owned())
    }

    /// Wing-plane normal in world coordinates (third column).
    pub fn normal_world(&self) -> WorldVec {
        WorldVec::from(self.m.column(2).into_owned())
    }

    /// Frobenius norm of `R^T R - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.m.transpose() * self.m - Matrix3::identity()).norm()
    }

    pub fn det(&self) -> f64 {
        self.m.determinant()
    }

    /// Geodesic distance to `other`: the rotation angle of `self^T other`.
    ///
    /// Computed as `atan2(||skew part||, (trace - 1)/2)`, which stays
    /// accurate for tiny angles where the pure-trace form drowns in the
    /// symmetric rounding defect of long matrix products.
    pub fn geodesic_angle_to(&self, other: &Rot3) -> f64 {
        let rel = self.m.transpose() * other.m;
        let s = vee_lenient(&rel).norm();
        let c = 0.5 * (rel.trace() - 1.0);
        s.atan2(c)
    }

    /// Re-orthonormalizes by Gram-Schmidt on (n, s), then c = s x n.
    ///
    /// Intended for long sampled sweeps where drift accumulates; the wing
    /// normal is kept as the anchor direction.
    pub fn renormalized(&self) -> Rot3 {
        let n = self.normal_world().normalized().unwrap_or_else(WorldVec::up);
        let s_raw = self.span_world();
        let s = (s_raw - n * s_raw.dot(n))
            .normalized()
            .unwrap_or_else(|| WorldVec::unit_y());
        let c = s.cross(n);
        Rot3 { m: Matrix3::from_columns(&[c.raw(), s.raw(), n.raw()]) }
    }
}

impl Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3 { m: self.m * rhs.m }
    }
}

/// Angular velocity of a moving orthonormal frame from its axis rates:
/// `omega = 1/2 (c x c_dot + s x s_dot + n x n_dot)`, expressed in world.
///
/// Exact when the rates are generated by a rigid rotation; for degraded
/// inputs this is the least-squares fit, no error is raised.
pub fn omega_from_frame_rates(
    c: WorldVec,
    s: WorldVec,
    n: WorldVec,
    c_dot: WorldVec,
    s_dot: WorldVec,
    n_dot: WorldVec,
) -> WorldVec {
    (c.cross(c_dot) + s.cross(s_dot) + n.cross(n_dot)) * 0.5
}

/// Samples `R(t)` by second-order central differences and returns the
/// rotation at `t` together with the body rates:
/// `omega^B = vee(R^T dR/dt)`, `omega_dot^B` by a central difference of
/// `omega^B` over `+-h` (five samples total, spanning `t +- 2h`).
pub fn frame_rate_fd<S>(sampler: S, t: f64, h: f64) -> Result<(Rot3, AngularState)>
where
    S: Fn(f64) -> Rot3,
{
    if !(h > 0.0) {
        return Err(Error::StepTooSmall { t, h });
    }
    // The step must move t by a representable amount, and 2h must stay
    // distinguishable from h, or every difference below collapses.
    if t + h == t || t - h == t || t + 2.0 * h == t + h {
        return Err(Error::StepTooSmall { t, h });
    }

    let omega_at = |tau: f64| -> Vector3<f64> {
        let r = sampler(tau);
        let dr = (sampler(tau + h).matrix() - sampler(tau - h).matrix()) / (2.0 * h);
        vee_lenient(&(r.matrix().transpose() * dr))
    };

    let r = sampler(t);
    let omega = omega_at(t);
    let omega_dot = (omega_at(t + h) - omega_at(t - h)) / (2.0 * h);

    Ok((
        r,
        AngularState {
            omega_body: BodyVec::from(omega),
            omega_dot_body: BodyVec::from(omega_dot),
        },
    ))
}
