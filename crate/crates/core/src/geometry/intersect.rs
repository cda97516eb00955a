use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::Ellipsoid;

/// Slack on the minimum quadratic value; tangent bodies count as touching.
const CONTACT_TOL: f64 = 1e-10;

/// Minimum of `b`'s quadratic form over the solid `a`.
///
/// `a` is mapped to the unit ball; the minimum of `(y − c)ᵀ M (y − c)` over
/// `‖y‖ ≤ 1` is either zero (center inside) or attained on the sphere at
/// `y(λ) = (M + λI)⁻¹ M c`, where `λ ≥ 0` is the root of the decreasing
/// secular function `‖y(λ)‖² − 1`, found by bisection.
pub fn min_quadratic_over(a: &Ellipsoid, b: &Ellipsoid) -> f64 {
    let r = a.rotation();
    let s = Matrix3::from_diagonal(&a.semi_axes());
    let s_inv = Matrix3::from_diagonal(&a.semi_axes().map(|v| 1.0 / v));
    let m = s * r.transpose() * b.quadratic_matrix() * r * s;
    let c = s_inv * r.transpose() * (b.center() - a.center());
    if c.norm_squared() <= 1.0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let mu = eig.eigenvalues;
    let ct: Vector3<f64> = eig.eigenvectors.transpose() * c;

    let radius_sq = |lambda: f64| -> f64 {
        (0..3)
            .map(|i| {
                let y = mu[i] * ct[i] / (mu[i] + lambda);
                y * y
            })
            .sum()
    };
    let mut lo = 0.0;
    let mut hi = mu.max() * ct.norm();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if radius_sq(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    (0..3)
        .map(|i| {
            let d = lambda * ct[i] / (mu[i] + lambda);
            mu[i] * d * d
        })
        .sum()
}

/// True iff the closed ellipsoids share at least one point.
pub fn ellipsoids_intersect(a: &Ellipsoid, b: &Ellipsoid) -> bool {
    min_quadratic_over(a, b) <= 1.0 + CONTACT_TOL
}
