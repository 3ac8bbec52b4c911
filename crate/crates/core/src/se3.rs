//! Frames in SE(3) and the centered product group SE(3)^N_0.
//!
//! A [`FrameSet`] keeps all N frames; membership in SE(3)^N_0 is the constraint
//! that translations sum to zero, enforced by [`center`] when data enters the
//! pipeline. The metric is the product of the SO(3) Frobenius metric and the
//! Euclidean metric, so distances combine as a root sum of squares.

use nalgebra::Vector3;

use crate::so3::{self, RotVec, Rotation};
use crate::{Error, Result};

/// Tolerance on `‖Σ s_i‖` for a centered frame set.
pub const CENTER_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rot: Rotation,
    pub trans: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rot: Rotation, trans: Vector3<f64>) -> Self {
        Self { rot, trans }
    }

    pub fn from_rotation(rot: Rotation) -> Self {
        Self::new(rot, Vector3::zeros())
    }
}

/// Velocity of one frame: rotation part in algebra coordinates plus translation.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TangentSe3 {
    pub rot: RotVec,
    pub vel: Vector3<f64>,
}

impl TangentSe3 {
    pub fn new(rot: RotVec, vel: Vector3<f64>) -> Self {
        Self { rot, vel }
    }

    pub fn is_finite(&self) -> bool {
        self.rot.iter().chain(self.vel.iter()).all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<RigidTransform>,
}

impl FrameSet {
    pub fn new(frames: Vec<RigidTransform>) -> Self {
        Self { frames }
    }

    /// A single frame with zero translation: the SO(3)-only state.
    pub fn single(rot: Rotation) -> Self {
        Self::new(vec![RigidTransform::from_rotation(rot)])
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn translation_sum(&self) -> Vector3<f64> {
        self.frames.iter().map(|f| f.trans).sum()
    }

    pub fn is_centered(&self) -> bool {
        self.translation_sum().norm() <= CENTER_TOL
    }

    pub fn rotations(&self) -> impl Iterator<Item = &Rotation> {
        self.frames.iter().map(|f| &f.rot)
    }

    /// Applies `rot` to every frame: `(r, s) ↦ (q r, q s)`.
    pub fn rotate_globally(&self, q: &Rotation) -> Self {
        Self::new(
            self.frames
                .iter()
                .map(|f| RigidTransform::new(*q * f.rot, q.apply(&f.trans)))
                .collect(),
        )
    }

    pub fn translate(&self, offset: &Vector3<f64>) -> Self {
        Self::new(
            self.frames
                .iter()
                .map(|f| RigidTransform::new(f.rot, f.trans + offset))
                .collect(),
        )
    }
}

/// Subtracts the mean translation; rotations are untouched.
pub fn center(frames: &FrameSet) -> FrameSet {
    let mut out = frames.clone();
    center_in_place(&mut out);
    out
}

pub fn center_in_place(frames: &mut FrameSet) {
    if frames.is_empty() {
        return;
    }
    let mean = frames.translation_sum() / frames.len() as f64;
    for f in &mut frames.frames {
        f.trans -= mean;
    }
}

/// `√(d_SO3(r1, r2)² + ‖s1 − s2‖²)`.
pub fn se3_distance(a: &RigidTransform, b: &RigidTransform) -> f64 {
    se3_distance_squared(a, b).sqrt()
}

fn se3_distance_squared(a: &RigidTransform, b: &RigidTransform) -> f64 {
    let dr = so3::geodesic_distance(&a.rot, &b.rot);
    dr * dr + (a.trans - b.trans).norm_squared()
}

fn check_same_len(a: &FrameSet, b: &FrameSet) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            what: "frame count",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Root sum of squared per-frame SE(3) distances.
pub fn product_distance(a: &FrameSet, b: &FrameSet) -> Result<f64> {
    Ok(product_distance_squared(a, b)?.sqrt())
}

pub fn product_distance_squared(a: &FrameSet, b: &FrameSet) -> Result<f64> {
    check_same_len(a, b)?;
    Ok(a.frames
        .iter()
        .zip(&b.frames)
        .map(|(x, y)| se3_distance_squared(x, y))
        .sum())
}

/// Per-frame geodesic interpolation of rotations and linear interpolation of
/// translations. Linear interpolation keeps centered inputs centered.
pub fn frameset_interpolant(a: &FrameSet, b: &FrameSet, t: f64) -> Result<FrameSet> {
    check_same_len(a, b)?;
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    Ok(FrameSet::new(
        a.frames
            .iter()
            .zip(&b.frames)
            .map(|(x, y)| {
                RigidTransform::new(
                    so3::geodesic_interpolant(&x.rot, &y.rot, t),
                    y.trans * t + x.trans * (1.0 - t),
                )
            })
            .collect(),
    ))
}
