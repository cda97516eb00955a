//! Ellipsoids, minimum-volume fitting and the intersection oracle.

mod ellipsoid;
mod intersect;
pub mod io;
mod mvee;

use nalgebra::Vector3;
use thiserror::Error;

pub use ellipsoid::{axis_angle, Ellipsoid, ROTATION_TOL};
pub use intersect::{ellipsoids_intersect, min_quadratic_over};
pub use mvee::{ellipsoid_from_quadratic, fit_mvee, fit_mvee_slice, MveeConfig, DEFAULT_INFLATION_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid ellipsoid: {0}")]
    InvalidEllipsoid(String),
    #[error("rotation is not proper orthonormal (orthogonality error {orthogonality_error:e}, det {det})")]
    InvalidRotation { orthogonality_error: f64, det: f64 },
    #[error("point set spans only {rank} dimension(s); enable inflation to fit a flat cloud")]
    DegenerateInput { rank: usize },
    #[error("MVEE did not converge after {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite point at index {0}")]
    NonFinitePoint(usize),
}

/// Ordered world-frame points, meters. All coordinates finite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, GeometryError> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(GeometryError::NonFinitePoint(i));
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vector3<f64>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            None
        } else {
            Some(self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64)
        }
    }

    /// Keeps points in order for which `keep` holds; never invents points.
    pub fn filtered(&self, mut keep: impl FnMut(usize, &Vector3<f64>) -> bool) -> Self {
        Self {
            points: self
                .points
                .iter()
                .enumerate()
                .filter(|(i, p)| keep(*i, p))
                .map(|(_, p)| *p)
                .collect(),
        }
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }
}

impl From<PointCloud> for Vec<Vector3<f64>> {
    fn from(c: PointCloud) -> Self {
        c.points
    }
}
