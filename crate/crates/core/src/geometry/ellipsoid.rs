use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Orthonormality / determinant tolerance for rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

/// A solid ellipsoid `{x : (x - c)ᵀ R diag(1/a²) Rᵀ (x - c) ≤ 1}`.
///
/// The semi-axes `a` are carried explicitly; the two matrix forms
/// ([`Ellipsoid::shape_matrix`] and [`Ellipsoid::quadratic_matrix`]) are
/// derived on demand. Column `i` of `rotation` is the direction of
/// semi-axis `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EllipsoidRecord", into = "EllipsoidRecord")]
pub struct Ellipsoid {
    center: Vector3<f64>,
    semi_axes: Vector3<f64>,
    rotation: Matrix3<f64>,
}

impl Ellipsoid {
    pub fn new(center: Vector3<f64>, semi_axes: Vector3<f64>, rotation: Matrix3<f64>) -> Result<Self, GeometryError> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidEllipsoid("center is not finite".into()));
        }
        if !semi_axes.iter().all(|&a| a.is_finite() && a > 0.0) {
            return Err(GeometryError::InvalidEllipsoid(format!(
                "semi-axes must be positive, got {:?}",
                semi_axes.as_slice()
            )));
        }
        check_rotation(&rotation)?;
        Ok(Self {
            center,
            semi_axes,
            rotation,
        })
    }

    /// Axis-aligned ellipsoid.
    pub fn axis_aligned(center: Vector3<f64>, semi_axes: Vector3<f64>) -> Result<Self, GeometryError> {
        Self::new(center, semi_axes, Matrix3::identity())
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self, GeometryError> {
        Self::axis_aligned(center, Vector3::repeat(radius))
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    pub fn semi_axes(&self) -> Vector3<f64> {
        self.semi_axes
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.rotation
    }

    /// World-frame matrix mapping the unit sphere onto the surface:
    /// `R·diag(a)·Rᵀ`.
    pub fn shape_matrix(&self) -> Matrix3<f64> {
        self.rotation * Matrix3::from_diagonal(&self.semi_axes) * self.rotation.transpose()
    }

    /// Inverse of [`Ellipsoid::shape_matrix`]: `R·diag(1/a)·Rᵀ`.
    pub fn inverse_shape_matrix(&self) -> Matrix3<f64> {
        let inv = self.semi_axes.map(|a| 1.0 / a);
        self.rotation * Matrix3::from_diagonal(&inv) * self.rotation.transpose()
    }

    /// World-frame quadratic form `M = R·diag(1/a²)·Rᵀ`, so that membership
    /// reads `(x − c)ᵀ M (x − c) ≤ 1`.
    pub fn quadratic_matrix(&self) -> Matrix3<f64> {
        let inv_sq = self.semi_axes.map(|a| 1.0 / (a * a));
        self.rotation * Matrix3::from_diagonal(&inv_sq) * self.rotation.transpose()
    }

    /// `(x − c)ᵀ M (x − c)`; evaluated in the body frame for accuracy.
    pub fn quadratic_form(&self, x: &Vector3<f64>) -> f64 {
        let local = self.rotation.transpose() * (x - self.center);
        local
            .iter()
            .zip(self.semi_axes.iter())
            .map(|(d, a)| (d / a) * (d / a))
            .sum()
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        self.quadratic_form(x) <= 1.0
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.semi_axes.product()
    }

    /// Surface point `c + R·diag(a)·Rᵀ·s` for a unit direction `s`.
    pub fn surface_point(&self, unit: &Vector3<f64>) -> Vector3<f64> {
        self.center + self.shape_matrix() * unit
    }

    /// Same ellipsoid moved to `center`.
    pub fn with_center(&self, center: Vector3<f64>) -> Self {
        Self { center, ..*self }
    }

    /// Grows every semi-axis by `margin` meters.
    pub fn inflated(&self, margin: f64) -> Result<Self, GeometryError> {
        Self::new(self.center, self.semi_axes.add_scalar(margin), self.rotation)
    }

    /// Applies the rigid motion `x ↦ rot·x + shift`.
    pub fn transformed(&self, rot: &Matrix3<f64>, shift: &Vector3<f64>) -> Result<Self, GeometryError> {
        Self::new(rot * self.center + shift, self.semi_axes, rot * self.rotation)
    }

    /// Flat record `{center[3], semi_axes[3], rotation[9] row-major}`.
    pub fn to_record(&self) -> [f64; 15] {
        let mut out = [0.0; 15];
        out[..3].copy_from_slice(self.center.as_slice());
        out[3..6].copy_from_slice(self.semi_axes.as_slice());
        for r in 0..3 {
            for c in 0..3 {
                out[6 + 3 * r + c] = self.rotation[(r, c)];
            }
        }
        out
    }

    pub fn from_record(rec: &[f64]) -> Result<Self, GeometryError> {
        if rec.len() != 15 {
            return Err(GeometryError::InvalidEllipsoid(format!(
                "record must hold 15 values, got {}",
                rec.len()
            )));
        }
        let center = Vector3::new(rec[0], rec[1], rec[2]);
        let semi_axes = Vector3::new(rec[3], rec[4], rec[5]);
        let rotation = Matrix3::from_row_slice(&rec[6..15]);
        Self::new(center, semi_axes, rotation)
    }
}

pub(crate) fn check_rotation(rotation: &Matrix3<f64>) -> Result<(), GeometryError> {
    let err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
    let det = rotation.determinant();
    if !(err <= ROTATION_TOL) || !((det - 1.0).abs() <= ROTATION_TOL) {
        return Err(GeometryError::InvalidRotation {
            orthogonality_error: err,
            det,
        });
    }
    Ok(())
}

/// Rotation of `angle` radians about a unit `axis` (Rodrigues).
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRecord {
    center: [f64; 3],
    semi_axes: [f64; 3],
    rotation: [f64; 9],
}

impl TryFrom<EllipsoidRecord> for Ellipsoid {
    type Error = GeometryError;

    fn try_from(r: EllipsoidRecord) -> Result<Self, Self::Error> {
        Ellipsoid::new(
            r.center.into(),
            r.semi_axes.into(),
            Matrix3::from_row_slice(&r.rotation),
        )
    }
}

impl From<Ellipsoid> for EllipsoidRecord {
    fn from(e: Ellipsoid) -> Self {
        let rec = e.to_record();
        let mut rotation = [0.0; 9];
        rotation.copy_from_slice(&rec[6..]);
        Self {
            center: e.center.into(),
            semi_axes: e.semi_axes.into(),
            rotation,
        }
    }
}
