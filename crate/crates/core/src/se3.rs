//! SE(3) / se(3) kernel.
//!
//! Tangent vectors are ordered translation first, rotation second:
//! `xi = [rho; phi]` for poses and `varpi = [v; omega]` for velocities.
//! Poses act on homogeneous points as `p' = T p`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Matrix6, SMatrix, Vector3, Vector4, Vector6};

use crate::error::Se3Error;

pub type Matrix4x6 = SMatrix<f64, 4, 6>;

/// Below this rotation angle the closed forms switch to Taylor series.
pub const SMALL_ANGLE: f64 = 1e-7;

/// Below this angle the SE(3) Jacobians use the curly-hat power series.
const JACOBIAN_SERIES_ANGLE: f64 = 1e-3;

/// Rotation angles closer than this to pi are rejected by [`log_map`].
const BRANCH_GUARD: f64 = 1e-9;

/// Number of curly-hat powers used by the series fallback.
const JACOBIAN_SERIES_TERMS: usize = 10;

/// A 6-vector in se(3): linear part `v` and angular part `omega`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist {
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl Twist {
    pub fn new(v: Vector3<f64>, omega: Vector3<f64>) -> Self {
        Self { v, omega }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            v: x.fixed_rows::<3>(0).into_owned(),
            omega: x.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn from_slice(x: [f64; 6]) -> Self {
        Self::from_vector(&Vector6::from_column_slice(&x))
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut out = Vector6::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&self.v);
        out.fixed_rows_mut::<3>(3).copy_from(&self.omega);
        out
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(self.omega.iter()).all(|x| x.is_finite())
    }
}

impl Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.v + rhs.v, self.omega + rhs.omega)
    }
}

impl Sub for Twist {
    type Output = Twist;
    fn sub(self, rhs: Twist) -> Twist {
        Twist::new(self.v - rhs.v, self.omega - rhs.omega)
    }
}

impl Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.v, -self.omega)
    }
}

impl Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, s: f64) -> Twist {
        Twist::new(self.v * s, self.omega * s)
    }
}

impl Mul<Twist> for f64 {
    type Output = Twist;
    fn mul(self, t: Twist) -> Twist {
        t * self
    }
}

/// Rigid transform with an orthonormal rotation block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        write!(f, "Pose(t=[{:.6}, {:.6}, {:.6}], R={:?})", t.x, t.y, t.z, self.rotation.as_slice())
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, checking that `rotation` is a proper rotation within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, Se3Error> {
        let pose = Self {
            rotation,
            translation,
        };
        if pose.is_valid(1e-9) {
            Ok(pose)
        } else {
            Err(Se3Error::InvalidRotation)
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let orth = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        orth <= tol
            && (self.rotation.determinant() - 1.0).abs() <= tol
            && self.translation.iter().all(|x| x.is_finite())
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Takes the rotation and translation blocks of a 4x4 matrix; the bottom row is ignored.
    pub fn from_matrix(m: &Matrix4<f64>) -> Pose {
        Pose {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    pub fn transform_vector(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Re-orthonormalizes the rotation block (SVD projection onto SO(3)).
    pub fn renormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            r = u2 * vt;
        }
        Pose {
            rotation: r,
            translation: self.translation,
        }
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl<'a> Mul<&'a Pose> for &'a Pose {
    type Output = Pose;
    fn mul(self, rhs: &'a Pose) -> Pose {
        *self * *rhs
    }
}

/// A point in homogeneous coordinates; finite points carry `w = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogeneousPoint {
    pub coords: Vector4<f64>,
}

impl HomogeneousPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            coords: Vector4::new(x, y, z, 1.0),
        }
    }

    pub fn from_vector3(p: &Vector3<f64>) -> Self {
        Self::new(p.x, p.y, p.z)
    }

    pub fn from_coords(coords: Vector4<f64>) -> Self {
        Self { coords }
    }

    /// Scales so that the fourth component is exactly one.
    pub fn normalized(&self) -> Self {
        let w = self.coords.w;
        Self {
            coords: Vector4::new(self.coords.x / w, self.coords.y / w, self.coords.z / w, 1.0),
        }
    }

    /// The `P` projector: homogeneous to Euclidean (first three entries).
    pub fn xyz(&self) -> Vector3<f64> {
        self.coords.xyz()
    }

    pub fn w(&self) -> f64 {
        self.coords.w
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee3(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// The `^` lifting operator se(3) -> 4x4.
pub fn hat(xi: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&xi.omega));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.v);
    m
}

/// Inverse of [`hat`]; reads the skew block and the translation column.
pub fn vee(m: &Matrix4<f64>) -> Twist {
    let r = m.fixed_view::<3, 3>(0, 0).into_owned();
    Twist::new(m.fixed_view::<3, 1>(0, 3).into_owned(), vee3(&r))
}

/// The `curly-wedge` operator se(3) -> 6x6 (the adjoint of the algebra).
pub fn curlyhat(varpi: &Twist) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    let w = skew(&varpi.omega);
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&varpi.v));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
    m
}

/// The `odot` operator: `hat(xi) * p == odot(p) * xi`.
pub fn odot(p: &HomogeneousPoint) -> Matrix4x6 {
    let mut m = Matrix4x6::zeros();
    let eta = p.w();
    let eps = p.xyz();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * eta));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&eps)));
    m
}

/// Adjoint of a pose, `[[R, t^ R], [0, R]]`.
pub fn adjoint(t: &Pose) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&t.rotation);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(skew(&t.translation) * t.rotation));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&t.rotation);
    m
}

/// Inverse adjoint without a matrix inversion.
pub fn adjoint_inv(t: &Pose) -> Matrix6<f64> {
    adjoint(&t.inverse())
}

pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let k2 = k * k;
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    Matrix3::identity() + k * a + k2 * b
}

/// SO(3) left Jacobian.
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0 + t2 * t2 / 720.0, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() + k * a + k * k * b
}

pub fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let c = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// Rotation angle of a rotation matrix in [0, pi].
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = 0.5 * vee3(&(r - r.transpose())).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, Se3Error> {
    let theta = rotation_angle(r);
    if PI - theta < BRANCH_GUARD {
        return Err(Se3Error::AmbiguousBranch { angle: theta });
    }
    let anti = vee3(&(r - r.transpose()));
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        return Ok(anti * (0.5 * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0)));
    }
    if theta < 3.0 {
        return Ok(anti * (theta / (2.0 * theta.sin())));
    }
    // Close to pi the antisymmetric part vanishes; read the axis from the
    // symmetric part and take its sign from the antisymmetric part.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * theta.cos();
    let scale = 1.0 - theta.cos();
    let diag = Vector3::new(sym[(0, 0)], sym[(1, 1)], sym[(2, 2)]);
    let i = diag.imax();
    let mut axis = sym.column(i).into_owned() / (diag[i] * scale).sqrt();
    axis /= axis.norm();
    if axis.dot(&anti) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Matrix exponential se(3) -> SE(3), closed form.
pub fn exp_map(xi: &Twist) -> Pose {
    Pose {
        rotation: so3_exp(&xi.omega),
        translation: so3_left_jacobian(&xi.omega) * xi.v,
    }
}

/// Principal-branch logarithm SE(3) -> se(3).
pub fn log_map(t: &Pose) -> Result<Twist, Se3Error> {
    let phi = so3_log(&t.rotation)?;
    let rho = so3_left_jacobian_inv(&phi) * t.translation;
    Ok(Twist::new(rho, phi))
}

/// The `Q` block of the SE(3) left Jacobian (closed form).
fn q_block(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let t2 = theta * theta;
    let (s, c) = theta.sin_cos();
    let r = skew(rho);
    let p = skew(phi);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    let ppr = p * pr;
    let rpp = rp * p;
    let a = (theta - s) / (t2 * theta);
    let b = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    let d = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
    r * 0.5 + (pr + rp + prp) * a + (ppr + rpp - prp * 3.0) * b + (prp * p + p * prp) * d
}

/// Power series `sum_n coeffs[n] * curlyhat(xi)^n`.
fn curly_series(xi: &Twist, coeffs: &[f64]) -> Matrix6<f64> {
    let ad = curlyhat(xi);
    let mut power = Matrix6::identity();
    let mut out = Matrix6::zeros();
    for &c in coeffs {
        if c != 0.0 {
            out += power * c;
        }
        power = ad * power;
    }
    out
}

/// Taylor coefficients 1/(n+1)! of the left Jacobian.
fn left_jacobian_coeffs() -> [f64; JACOBIAN_SERIES_TERMS] {
    let mut c = [0.0; JACOBIAN_SERIES_TERMS];
    let mut fact = 1.0;
    for (n, ci) in c.iter_mut().enumerate() {
        fact *= (n + 1) as f64;
        *ci = 1.0 / fact;
    }
    c
}

/// Bernoulli-number coefficients B_n / n! of the inverse left Jacobian.
pub(crate) const BERNOULLI_OVER_FACTORIAL: [f64; 22] = [
    1.0,
    -0.5,
    1.0 / 12.0,
    0.0,
    -1.0 / 720.0,
    0.0,
    1.0 / 30240.0,
    0.0,
    -1.0 / 1209600.0,
    0.0,
    1.0 / 47900160.0,
    0.0,
    -691.0 / 1307674368000.0,
    0.0,
    1.0 / 74724249600.0,
    0.0,
    -3617.0 / 10670622842880000.0,
    0.0,
    43867.0 / 5109094217170944000.0,
    0.0,
    -174611.0 / 802857662698291200000.0,
    0.0,
];

/// SE(3) left Jacobian. `left_jacobian(xi) * xi == xi`.
pub fn left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let theta = xi.omega.norm();
    if theta < JACOBIAN_SERIES_ANGLE {
        return curly_series(xi, &left_jacobian_coeffs());
    }
    let j = so3_left_jacobian(&xi.omega);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&q_block(&xi.v, &xi.omega));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    m
}

/// Inverse of the SE(3) left Jacobian.
pub fn left_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let theta = xi.omega.norm();
    if theta < JACOBIAN_SERIES_ANGLE {
        return curly_series(xi, &BERNOULLI_OVER_FACTORIAL[..JACOBIAN_SERIES_TERMS + 1]);
    }
    let jinv = so3_left_jacobian_inv(&xi.omega);
    let q = q_block(&xi.v, &xi.omega);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-(jinv * q * jinv)));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    m
}

/// Exact derivative of `left_jacobian_inv(xi) * w` with respect to `xi`.
///
/// Evaluated through the Bernoulli series; terms are added until they fall
/// below machine precision (the series converges for rotation angles below
/// 2 pi).
pub fn left_jacobian_inv_times_derivative(xi: &Twist, w: &Twist) -> Matrix6<f64> {
    let ad = curlyhat(xi);
    let wv = w.to_vector();
    let scale = ad.norm().max(1.0);
    // powers[i] = ad^i ; applied[i] = ad^i * w
    let mut powers: Vec<Matrix6<f64>> = vec![Matrix6::identity()];
    let mut applied: Vec<Vector6<f64>> = vec![wv];
    let mut out = Matrix6::zeros();
    let mut idx = 1usize;
    let max_terms = 200;
    let mut small_streak = 0;
    while idx < max_terms {
        powers.push(ad * powers[idx - 1]);
        applied.push(ad * applied[idx - 1]);
        let coeff = bernoulli_over_factorial(idx);
        if coeff != 0.0 {
            // d/dxi (ad^n w) = sum_i ad^i * (-(ad^(n-1-i) w)^curly)
            let mut term = Matrix6::zeros();
            for i in 0..idx {
                term -= powers[i] * curlyhat(&Twist::from_vector(&applied[idx - 1 - i]));
            }
            let term = term * coeff;
            out += term;
            if term.norm() < 1e-18 * scale {
                small_streak += 1;
                if small_streak >= 2 {
                    break;
                }
            } else {
                small_streak = 0;
            }
        }
        idx += 1;
    }
    out
}

/// B_n / n!, from the table for small n and the asymptotic relation beyond.
fn bernoulli_over_factorial(n: usize) -> f64 {
    if n < BERNOULLI_OVER_FACTORIAL.len() {
        return BERNOULLI_OVER_FACTORIAL[n];
    }
    if n % 2 == 1 {
        return 0.0;
    }
    // B_2k / (2k)! = (-1)^(k+1) * 2 * zeta(2k) / (2 pi)^(2k)
    let k = n / 2;
    let zeta: f64 = (1..20).map(|m| (m as f64).powi(-(n as i32))).sum();
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    sign * 2.0 * zeta / (2.0 * PI).powi(n as i32)
}

/// Applies `T` to a homogeneous point.
pub fn transform_point(t: &Pose, p: &HomogeneousPoint) -> HomogeneousPoint {
    let xyz = t.rotation * p.xyz() + t.translation * p.w();
    HomogeneousPoint {
        coords: Vector4::new(xyz.x, xyz.y, xyz.z, p.w()),
    }
}

/// Matrix exponential by scaled Taylor series; used as an independent
/// reference in tests.
pub fn expm_series<const N: usize>(a: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let mut squarings = 0;
    let mut scaled = *a;
    while scaled.norm() > 0.5 {
        scaled /= 2.0;
        squarings += 1;
    }
    let mut term = SMatrix::<f64, N, N>::identity();
    let mut sum = SMatrix::<f64, N, N>::identity();
    for k in 1..30 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_twist(rng: &mut impl Rng, scale: f64) -> Twist {
        let mut x = Vector6::zeros();
        for i in 0..6 {
            x[i] = rng.random_range(-1.0..1.0);
        }
        Twist::from_vector(&(x.normalize() * scale * rng.random_range(0.0..1.0)))
    }

    #[test]
    fn hat_examples() {
        assert_eq!(hat(&Twist::zero()), Matrix4::zeros());
        let m = hat(&Twist::from_slice([1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));
        assert_eq!(m.fixed_view::<3, 1>(0, 3).into_owned(), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(m.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::zeros());
        let m = hat(&Twist::from_slice([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(m.fixed_view::<3, 3>(0, 0).into_owned(), expected);
        assert_eq!(m.row(3).into_owned(), nalgebra::RowVector4::zeros());
    }

    #[test]
    fn exp_examples() {
        assert_eq!(exp_map(&Twist::zero()), Pose::identity());
        let t = exp_map(&Twist::from_slice([1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));
        assert_eq!(t.rotation, Matrix3::identity());
        assert_relative_eq!(t.translation, Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-15);
        let t = exp_map(&Twist::from_slice([0.0, 0.0, 0.0, 0.0, 0.0, PI / 2.0]));
        let rz = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(t.rotation, rz, epsilon = 1e-15);
        assert_relative_eq!(t.translation, Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn exp_matches_matrix_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let xi = random_twist(&mut rng, 2.5);
            let a = exp_map(&xi).matrix();
            let b = expm_series(&hat(&xi));
            assert_relative_eq!(a, b, epsilon = 1e-11);
        }
    }

    #[test]
    fn log_examples() {
        assert_eq!(log_map(&Pose::identity()).unwrap(), Twist::zero());
        let xi = log_map(&Pose::from_translation(Vector3::new(1.0, 2.0, 3.0))).unwrap();
        assert_relative_eq!(xi.v, Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-15);
        assert_eq!(xi.omega, Vector3::zeros());
    }

    #[test]
    fn log_rejects_half_turn() {
        let t = Pose::from_rotation(so3_exp(&Vector3::new(PI, 0.0, 0.0)));
        assert!(matches!(log_map(&t), Err(Se3Error::AmbiguousBranch { .. })));
    }

    #[test]
    fn log_exp_round_trip_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let xi = random_twist(&mut rng, 1.0);
            let back = log_map(&exp_map(&xi)).unwrap();
            assert!((back.to_vector() - xi.to_vector()).amax() < 1e-9);
        }
    }

    #[test]
    fn log_near_pi_uses_symmetric_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let angle = rng.random_range(3.0..3.14);
            let xi = Twist::new(Vector3::new(0.3, -0.2, 0.5), axis * angle);
            let back = log_map(&exp_map(&xi)).unwrap();
            assert!((back.to_vector() - xi.to_vector()).amax() < 1e-9);
        }
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(adjoint(&Pose::identity()), Matrix6::identity());
        let r = so3_exp(&Vector3::new(0.1, -0.4, 0.3));
        let ad = adjoint(&Pose::from_rotation(r));
        assert_eq!(ad.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::zeros());
        assert_eq!(ad.fixed_view::<3, 3>(0, 0).into_owned(), r);
        assert_eq!(ad.fixed_view::<3, 3>(3, 3).into_owned(), r);
    }

    #[test]
    fn adjoint_conjugates_hat() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let t = exp_map(&random_twist(&mut rng, 2.0));
            let xi = random_twist(&mut rng, 2.0);
            let lhs = adjoint(&t) * xi.to_vector();
            let rhs = vee(&(t.matrix() * hat(&xi) * t.inverse().matrix())).to_vector();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn curlyhat_examples() {
        assert_eq!(curlyhat(&Twist::zero()), Matrix6::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let w = random_twist(&mut rng, 3.0);
            assert!((curlyhat(&w) * w.to_vector()).amax() < 1e-15);
        }
    }

    #[test]
    fn adjoint_of_exp_is_exp_of_curlyhat() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let xi = random_twist(&mut rng, 2.0);
            let a = adjoint(&exp_map(&xi));
            let b = expm_series(&curlyhat(&xi));
            assert!((a - b).amax() < 1e-8);
        }
    }

    #[test]
    fn odot_examples() {
        let m = odot(&HomogeneousPoint::new(0.0, 0.0, 0.0));
        assert_eq!(m.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::identity());
        assert_eq!(m.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::zeros());
        let m = odot(&HomogeneousPoint::new(0.0, 0.0, 1.0));
        let expected = -skew(&Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(m.fixed_view::<3, 3>(0, 3).into_owned(), expected);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let xi = random_twist(&mut rng, 3.0);
            let p = HomogeneousPoint::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let lhs = hat(&xi) * p.coords;
            let rhs = odot(&p) * xi.to_vector();
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn transform_point_examples() {
        let p = HomogeneousPoint::new(0.3, -1.0, 2.0);
        assert_eq!(transform_point(&Pose::identity(), &p), p);
        let t = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(
            transform_point(&t, &HomogeneousPoint::new(0.0, 0.0, 1.0)),
            HomogeneousPoint::new(1.0, 0.0, 1.0)
        );
        let rz = exp_map(&Twist::from_slice([0.0, 0.0, 0.0, 0.0, 0.0, PI / 2.0]));
        let q = transform_point(&rz, &HomogeneousPoint::new(1.0, 0.0, 0.0));
        assert_relative_eq!(q.coords, Vector4::new(0.0, 1.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn left_jacobian_identity_and_fixed_point() {
        assert_eq!(left_jacobian(&Twist::zero()), Matrix6::identity());
        assert_eq!(left_jacobian_inv(&Twist::zero()), Matrix6::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let xi = random_twist(&mut rng, 3.0);
            let x = xi.to_vector();
            assert!((left_jacobian(&xi) * x - x).amax() < 1e-12);
            assert!((left_jacobian_inv(&xi) * x - x).amax() < 1e-12);
        }
    }

    #[test]
    fn left_jacobian_inverse_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for scale in [1e-6, 1e-4, 5e-3, 0.1, 1.0, 3.0] {
            for _ in 0..50 {
                let xi = random_twist(&mut rng, scale);
                let prod = left_jacobian(&xi) * left_jacobian_inv(&xi);
                assert!((prod - Matrix6::identity()).amax() < 1e-9, "scale {scale}");
            }
        }
    }

    #[test]
    fn closed_form_matches_series_across_switch() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let coeffs: Vec<f64> = {
            let mut fact = 1.0;
            (0..30)
                .map(|n| {
                    fact *= (n + 1) as f64;
                    1.0 / fact
                })
                .collect()
        };
        for _ in 0..200 {
            let xi = random_twist(&mut rng, 2.0);
            let series = curly_series(&xi, &coeffs);
            assert!((left_jacobian(&xi) - series).amax() < 1e-10);
        }
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        // exp(xi + d) ~= exp((J d)^) exp(xi)
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let eps = 1e-6;
        for _ in 0..50 {
            let xi = random_twist(&mut rng, 2.0);
            let base = exp_map(&xi);
            let j = left_jacobian(&xi);
            for c in 0..6 {
                let mut d = Vector6::zeros();
                d[c] = eps;
                let plus = exp_map(&Twist::from_vector(&(xi.to_vector() + d)));
                let minus = exp_map(&Twist::from_vector(&(xi.to_vector() - d)));
                let fp = log_map(&(plus * base.inverse())).unwrap().to_vector();
                let fm = log_map(&(minus * base.inverse())).unwrap().to_vector();
                let col = (fp - fm) / (2.0 * eps);
                assert!((col - j.column(c)).amax() < 1e-5 * (1.0 + j.column(c).amax()));
            }
        }
    }

    #[test]
    fn jinv_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let eps = 1e-6;
        for _ in 0..50 {
            let xi = random_twist(&mut rng, 2.0);
            let w = random_twist(&mut rng, 3.0);
            let d = left_jacobian_inv_times_derivative(&xi, &w);
            for c in 0..6 {
                let mut dx = Vector6::zeros();
                dx[c] = eps;
                let fp = left_jacobian_inv(&Twist::from_vector(&(xi.to_vector() + dx))) * w.to_vector();
                let fm = left_jacobian_inv(&Twist::from_vector(&(xi.to_vector() - dx))) * w.to_vector();
                let col = (fp - fm) / (2.0 * eps);
                assert!((col - d.column(c)).amax() < 1e-6 * (1.0 + col.amax()));
            }
        }
    }

    #[test]
    fn composition_with_inverse_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..200 {
            let xi = random_twist(&mut rng, 3.0);
            let p = exp_map(&xi) * exp_map(&(-xi));
            assert!((p.matrix() - Matrix4::identity()).amax() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn log_exp_round_trip(v in proptest::array::uniform3(-5.0f64..5.0),
                              axis in proptest::array::uniform3(-1.0f64..1.0),
                              angle in 0.0f64..3.0) {
            let a = Vector3::from(axis);
            prop_assume!(a.norm() > 1e-3);
            let xi = Twist::new(Vector3::from(v), a.normalize() * angle);
            let back = log_map(&exp_map(&xi)).unwrap();
            prop_assert!((back.to_vector() - xi.to_vector()).amax() < 1e-9);
        }

        #[test]
        fn adjoint_is_homomorphism(a in proptest::array::uniform6(-1.0f64..1.0),
                                   b in proptest::array::uniform6(-1.0f64..1.0)) {
            let t1 = exp_map(&Twist::from_slice(a));
            let t2 = exp_map(&Twist::from_slice(b));
            let lhs = adjoint(&(t1 * t2));
            let rhs = adjoint(&t1) * adjoint(&t2);
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
