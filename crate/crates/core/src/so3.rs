//! The rotation group SO(3).
//!
//! Rotations are stored as 3×3 orthonormal matrices. Tangent vectors are stored
//! in algebra coordinates: the rotation vector of the left-translated element in
//! 𝔰𝔬(3). Moving between the algebra and `T_r SO(3)` is a left multiplication by
//! `r`, so a tangent vector is fully described by its base point and a 3-vector.
//!
//! Distances use the Frobenius norm of the logarithm, `d(a, b) = ‖log(aᵀb)‖_F`.
//! For a rotation by angle `θ` this is `√2·θ`. The inner product
//! `tr(AᵀB)/2` on the algebra would give `θ` instead; every distance, cost and
//! norm in this crate uses the Frobenius convention.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Rotation vector: axis scaled by angle (radians).
pub type RotVec = Vector3<f64>;

/// Tolerance on `‖mᵀm − I‖_F` and `|det m − 1|` for a valid rotation.
pub const ROTATION_TOL: f64 = 1e-9;
/// Tolerance on `‖m + mᵀ‖_F` relative to `max(1, ‖m‖_F)` accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-12;
/// Below this angle the Rodrigues and log coefficients use Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-6;
/// Within this distance of π the log recovers the axis from the symmetric part.
const NEAR_PI: f64 = 1e-3;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps `m` after checking orthonormality and unit determinant.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let r = Self(m);
        let orthogonality = r.orthogonality_error();
        let det = m.determinant();
        if !(orthogonality <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::NotRotation { orthogonality, det });
        }
        Ok(r)
    }

    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Rotation from a unit quaternion `(w, x, y, z)`; the input is normalized.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        #[rustfmt::skip]
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),       2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),       1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),       2.0 * (y * z + w * x),       1.0 - 2.0 * (x * x + y * y),
        );
        Self(m)
    }

    pub fn about_x(angle: f64) -> Self {
        exp(&Vector3::new(angle, 0.0, 0.0))
    }

    pub fn about_y(angle: f64) -> Self {
        exp(&Vector3::new(0.0, angle, 0.0))
    }

    pub fn about_z(angle: f64) -> Self {
        exp(&Vector3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        log(self).norm()
    }

    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }

    pub fn is_valid(&self) -> bool {
        self.orthogonality_error() <= ROTATION_TOL
            && (self.0.determinant() - 1.0).abs() <= ROTATION_TOL
    }

    /// Nearest rotation in Frobenius norm (polar factor).
    pub fn orthonormalize(&self) -> Self {
        let svd = self.0.svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Self(u * d * v_t)
    }

    /// The 9 matrix entries in row-major order.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;

    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Skew-symmetric matrix with `hat(w)·v = w × v`.
pub fn hat(w: &RotVec) -> Matrix3<f64> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.0,  -w.z,  w.y,
        w.z,   0.0, -w.x,
        -w.y,  w.x,  0.0,
    );
    m
}

/// Inverse of [`hat`]; rejects matrices that are not skew-symmetric.
pub fn vee(m: &Matrix3<f64>) -> Result<RotVec> {
    let asymmetry = (m + m.transpose()).norm();
    if !(asymmetry <= SKEW_TOL * m.norm().max(1.0)) {
        return Err(Error::NotSkew { asymmetry });
    }
    Ok(vee_unchecked(m))
}

/// Rotation vector of the skew part of `m`.
pub(crate) fn vee_unchecked(m: &Matrix3<f64>) -> RotVec {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues formula `I + (sin θ/θ)·W + ((1 − cos θ)/θ²)·W²` with `W = hat(w)`.
pub fn exp(w: &RotVec) -> Rotation {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let half = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * half * half / theta2)
    };
    let k = hat(w);
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Matrix exponential of a skew-symmetric matrix.
pub fn exp_skew(s: &Matrix3<f64>) -> Result<Rotation> {
    Ok(exp(&vee(s)?))
}

/// Principal logarithm as a rotation vector with angle in `[0, π]`.
///
/// At angle π the axis sign is ambiguous; the axis is then taken from the
/// symmetric part and oriented so its first nonzero component is positive.
pub fn log(r: &Rotation) -> RotVec {
    let m = r.matrix();
    let s_vec = vee_unchecked(m);
    let s = s_vec.norm();
    let c = 0.5 * (m.trace() - 1.0);
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE {
        return s_vec * (1.0 + theta * theta / 6.0);
    }
    if PI - theta > NEAR_PI {
        return s_vec * (theta / s);
    }

    // (r + rᵀ)/2 = cos θ·I + (1 − cos θ)·n nᵀ
    let sym = (m + m.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * c) / (1.0 - c);
    let k = (0..3)
        .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
        .unwrap_or(0);
    let mut axis = Vector3::new(outer[(0, k)], outer[(1, k)], outer[(2, k)]);
    axis /= axis.norm();
    let along = axis.dot(&s_vec);
    if s > 1e-12 && along != 0.0 {
        if along < 0.0 {
            axis = -axis;
        }
    } else if let Some(first) = axis.iter().copied().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            axis = -axis;
        }
    }
    axis * theta
}

/// Matrix logarithm as a skew-symmetric matrix.
pub fn log_skew(r: &Rotation) -> Matrix3<f64> {
    hat(&log(r))
}

/// Norm of an algebra element under the Frobenius convention: `‖hat(v)‖_F`.
pub fn tangent_norm(v: &RotVec) -> f64 {
    SQRT_2 * v.norm()
}

/// `‖log(aᵀb)‖_F`; equals `√2` times the relative rotation angle.
pub fn geodesic_distance(a: &Rotation, b: &Rotation) -> f64 {
    SQRT_2 * relative_angle(a, b)
}

/// Rotation angle of `aᵀb` in `[0, π]`, without forming the logarithm.
pub fn relative_angle(a: &Rotation, b: &Rotation) -> f64 {
    let (a, b) = (a.matrix(), b.matrix());
    // (aᵀb)[k][l] = Σ_i a[i][k]·b[i][l]
    let e = |k: usize, l: usize| a[(0, k)] * b[(0, l)] + a[(1, k)] * b[(1, l)] + a[(2, k)] * b[(2, l)];
    let trace = e(0, 0) + e(1, 1) + e(2, 2);
    let s = Vector3::new(e(2, 1) - e(1, 2), e(0, 2) - e(2, 0), e(1, 0) - e(0, 1)).norm() * 0.5;
    s.atan2(0.5 * (trace - 1.0))
}

/// A tangent vector at `base`, stored in algebra coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentRotation {
    pub base: Rotation,
    pub coords: RotVec,
}

impl TangentRotation {
    pub fn new(base: Rotation, coords: RotVec) -> Self {
        Self { base, coords }
    }

    /// The ambient 3×3 matrix `base · hat(coords)` in `T_base SO(3)`.
    pub fn ambient(&self) -> Matrix3<f64> {
        self.base.matrix() * hat(&self.coords)
    }

    pub fn norm(&self) -> f64 {
        tangent_norm(&self.coords)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.base, self.coords * k)
    }
}

/// `log_base(target)`, computed as the rotation vector of `baseᵀ·target`.
pub fn log_map(base: &Rotation, target: &Rotation) -> TangentRotation {
    TangentRotation::new(*base, log(&(base.transpose() * *target)))
}

/// `exp_base(v) = base · exp(hat(v))` for `v` in algebra coordinates.
pub fn exp_map(base: &Rotation, v: &RotVec) -> Rotation {
    *base * exp(v)
}

/// Point at fraction `t` along the geodesic from `r0` to `r1`.
pub fn geodesic_interpolant(r0: &Rotation, r1: &Rotation, t: f64) -> Rotation {
    if t == 0.0 {
        return *r0;
    }
    if t == 1.0 {
        return *r1;
    }
    exp_map(r0, &(log_map(r0, r1).coords * t))
}

/// Haar-uniform rotation via a normalized Gaussian quaternion.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        let n2: f64 = q.iter().map(|x| x * x).sum();
        if n2 > 1e-20 {
            return Rotation::from_quaternion(q[0], q[1], q[2], q[3]);
        }
    }
}

/// Uniform direction on the unit sphere.
pub fn sample_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-10 {
            return v / n;
        }
    }
}

/// Euler angles `(φ, θ, ψ)` in the x-convention, `r = Rz(φ)·Rx(θ)·Rz(ψ)`,
/// with `θ ∈ [0, π]`. At gimbal lock (`sin θ = 0`) the rotation about z is
/// assigned entirely to `φ` and `ψ = 0`.
pub fn to_euler_xconv(r: &Rotation) -> (f64, f64, f64) {
    let m = r.matrix();
    let sin_theta = m[(0, 2)].hypot(m[(1, 2)]);
    let theta = sin_theta.atan2(m[(2, 2)]);
    if sin_theta < 1e-12 {
        // θ = 0: Rz(φ); θ = π: Rz(φ)·Rx(π) has the same first column.
        let phi = m[(1, 0)].atan2(m[(0, 0)]);
        return (phi, theta, 0.0);
    }
    let phi = m[(0, 2)].atan2(-m[(1, 2)]);
    let psi = m[(2, 0)].atan2(m[(2, 1)]);
    (phi, theta, psi)
}

pub fn from_euler_xconv(phi: f64, theta: f64, psi: f64) -> Rotation {
    Rotation::about_z(phi) * Rotation::about_x(theta) * Rotation::about_z(psi)
}
