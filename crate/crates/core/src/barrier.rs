//! Ellipsoid–ellipsoid control barrier function.
//!
//! A unit vector `p_s` (the virtual state) picks the point
//! `p_b = Q̄_ef p_s + p_ep` on the end-effector ellipsoid. The plane tangent
//! there has normal `n = Q̄_ef⁻¹ p_s` and satisfies `n·(q − p_ep) = 1`; the
//! whole end-effector ellipsoid lies on the side `n·(q − p_ep) ≤ 1`. The
//! barrier value is the signed distance from the obstacle to that plane,
//!
//! ```text
//! h = ( −‖Q̄_ob n‖ + (p_ob − p_ep)·n − 1 ) / ‖n‖,
//! ```
//!
//! positive when the plane separates the bodies. All formulas are evaluated
//! relative to the ellipsoid center `p_ep`, not the end-effector point.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{Ellipsoid, GeometryError, ROTATION_TOL};

/// Unit-norm tolerance on the virtual state.
pub const SPHERE_TOL: f64 = 1e-9;

/// Augmented state `[p_ep, R_ef, p_s]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState {
    pub p_ep: Vector3<f64>,
    pub r_ef: Matrix3<f64>,
    pub p_s: Vector3<f64>,
}

impl AugmentedState {
    pub fn new(p_ep: Vector3<f64>, r_ef: Matrix3<f64>, p_s: Vector3<f64>) -> Result<Self, GeometryError> {
        if !((p_s.norm() - 1.0).abs() <= SPHERE_TOL) {
            return Err(GeometryError::InvalidArgument(format!(
                "virtual state must be a unit vector, norm is {}",
                p_s.norm()
            )));
        }
        let orth = (r_ef.transpose() * r_ef - Matrix3::identity()).amax();
        if !(orth <= ROTATION_TOL) || !((r_ef.determinant() - 1.0).abs() <= ROTATION_TOL) {
            return Err(GeometryError::InvalidRotation {
                orthogonality_error: orth,
                det: r_ef.determinant(),
            });
        }
        Ok(Self { p_ep, r_ef, p_s })
    }
}

/// End-effector proxy: semi-axes in the gripper frame and the offset of the
/// ellipsoid center from the end-effector point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EEGeometry {
    pub semi_axes: Vector3<f64>,
    pub offset: Vector3<f64>,
}

impl EEGeometry {
    pub fn new(semi_axes: Vector3<f64>, offset: Vector3<f64>) -> Result<Self, GeometryError> {
        if !semi_axes.iter().all(|&a| a.is_finite() && a > 0.0) {
            return Err(GeometryError::InvalidEllipsoid(
                "end-effector semi-axes must be positive".into(),
            ));
        }
        Ok(Self { semi_axes, offset })
    }

    /// Gripper-sized proxy with semi-axes (0.06, 0.12, 0.11) m and no offset.
    pub fn panda_gripper() -> Self {
        Self {
            semi_axes: Vector3::new(0.06, 0.12, 0.11),
            offset: Vector3::zeros(),
        }
    }

    /// `Q̄_ef = R diag(q) Rᵀ`.
    pub fn shape_matrix(&self, r_ef: &Matrix3<f64>) -> Matrix3<f64> {
        r_ef * Matrix3::from_diagonal(&self.semi_axes) * r_ef.transpose()
    }

    pub fn inverse_shape_matrix(&self, r_ef: &Matrix3<f64>) -> Matrix3<f64> {
        r_ef * Matrix3::from_diagonal(&self.semi_axes.map(|a| 1.0 / a)) * r_ef.transpose()
    }

    /// World-frame end-effector ellipsoid for the pose `(p_ef, r_ef)`.
    pub fn ellipsoid(&self, p_ef: &Vector3<f64>, r_ef: &Matrix3<f64>) -> Result<Ellipsoid, GeometryError> {
        Ellipsoid::new(ee_center(p_ef, r_ef, self), self.semi_axes, *r_ef)
    }
}

/// Plane `{q : normal·q = offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    /// Signed distance, positive on the side the normal points to.
    pub fn signed_distance(&self, q: &Vector3<f64>) -> f64 {
        (self.normal.dot(q) - self.offset) / self.normal.norm()
    }
}

/// `p_ep = p_ef + R_ef Δp`.
pub fn ee_center(p_ef: &Vector3<f64>, r_ef: &Matrix3<f64>, geom: &EEGeometry) -> Vector3<f64> {
    p_ef + r_ef * geom.offset
}

/// `p_b = Q̄_ef p_s + p_ep`.
pub fn surface_point(state: &AugmentedState, geom: &EEGeometry) -> Vector3<f64> {
    geom.shape_matrix(&state.r_ef) * state.p_s + state.p_ep
}

/// Tangent plane at [`surface_point`], normal pointing away from the body.
pub fn tangent_plane(state: &AugmentedState, geom: &EEGeometry) -> Plane {
    let normal = geom.inverse_shape_matrix(&state.r_ef) * state.p_s;
    let p_b = surface_point(state, geom);
    Plane {
        normal,
        offset: normal.dot(&p_b),
    }
}

/// Signed distance from the obstacle to the tangent plane.
pub fn barrier_value(state: &AugmentedState, geom: &EEGeometry, obstacle: &Ellipsoid) -> f64 {
    let n = geom.inverse_shape_matrix(&state.r_ef) * state.p_s;
    let support = (obstacle.shape_matrix() * n).norm();
    (-support + (obstacle.center() - state.p_ep).dot(&n) - 1.0) / n.norm()
}

/// Value and gradients of the barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEval {
    pub h: f64,
    /// `∂h/∂p_ep`.
    pub grad_p: Vector3<f64>,
    /// Ambient `∂h/∂p_s`; not projected onto the sphere's tangent space.
    pub grad_s: Vector3<f64>,
}

pub fn barrier_gradient(state: &AugmentedState, geom: &EEGeometry, obstacle: &Ellipsoid) -> BarrierEval {
    let a = geom.inverse_shape_matrix(&state.r_ef);
    let b = obstacle.shape_matrix();
    let n = a * state.p_s;
    let n_norm = n.norm();
    let bn = b * n;
    let bn_norm = bn.norm();
    let d = obstacle.center() - state.p_ep;
    let numer = -bn_norm + d.dot(&n) - 1.0;
    let h = numer / n_norm;

    let grad_p = -n / n_norm;
    // ∂‖Bn‖/∂n = B²n/‖Bn‖; chain through n = A p_s (A symmetric).
    let d_numer = a * (d - b * bn / bn_norm);
    let d_denom = a * n / n_norm;
    let grad_s = d_numer / n_norm - d_denom * (h / n_norm);
    BarrierEval { h, grad_p, grad_s }
}

/// `w − (w·p) p`: projection onto the tangent space of the sphere at `p`.
pub fn tangential(w: &Vector3<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    w - p * w.dot(p)
}

pub const SPHERE_ASCENT_TOL: f64 = 1e-8;
pub const SPHERE_ASCENT_MAX_ITER: usize = 500;

/// Maximizes `h` over the virtual state by projected gradient ascent with
/// backtracking, from the six axis directions and the direction of the
/// obstacle center. Returns the best `(p_s*, h*)`; ties keep the earlier
/// start.
pub fn max_barrier_over_sphere(
    p_ep: &Vector3<f64>,
    r_ef: &Matrix3<f64>,
    geom: &EEGeometry,
    obstacle: &Ellipsoid,
) -> (Vector3<f64>, f64) {
    let mut starts: Vec<Vector3<f64>> = Vec::with_capacity(7);
    for i in 0..3 {
        let mut e = Vector3::zeros();
        e[i] = 1.0;
        starts.push(e);
        starts.push(-e);
    }
    let towards = obstacle.center() - p_ep;
    if towards.norm() > 0.0 {
        starts.push(towards.normalize());
    }

    let mut best = (starts[0], f64::NEG_INFINITY);
    for s in starts {
        let (p, h) = ascend(p_ep, r_ef, geom, obstacle, s);
        if h > best.1 {
            best = (p, h);
        }
    }
    best
}

fn ascend(
    p_ep: &Vector3<f64>,
    r_ef: &Matrix3<f64>,
    geom: &EEGeometry,
    obstacle: &Ellipsoid,
    start: Vector3<f64>,
) -> (Vector3<f64>, f64) {
    let state_at = |p_s: Vector3<f64>| AugmentedState {
        p_ep: *p_ep,
        r_ef: *r_ef,
        p_s,
    };
    let mut p = start;
    let mut eval = barrier_gradient(&state_at(p), geom, obstacle);
    let mut step = 1.0 / eval.grad_s.norm().max(1e-12);
    for _ in 0..SPHERE_ASCENT_MAX_ITER {
        let g = tangential(&eval.grad_s, &p);
        let g_norm = g.norm();
        if g_norm < SPHERE_ASCENT_TOL {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = (p + g * step).normalize();
            let next = barrier_gradient(&state_at(candidate), geom, obstacle);
            if next.h >= eval.h + 1e-4 * step * g_norm * g_norm {
                p = candidate;
                eval = next;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (p, eval.h)
}
