//! Minimum-volume enclosing ellipsoid.
//!
//! The optimum of the log-det problem over `(x − c)ᵀ M (x − c) ≤ 1` is found
//! on its dual (a D-optimal design over the points) by Khachiyan's
//! barycentric coordinate ascent with Todd–Yildirim away steps, which keeps
//! the convergence linear near the optimum. The rotation and semi-axes are
//! then read off the eigendecomposition of `M`.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};

use super::{Ellipsoid, GeometryError, PointCloud};

/// Default semi-axis floor for degenerate (planar / linear) clouds, meters.
pub const DEFAULT_INFLATION_FLOOR: f64 = 0.005;

/// Relative eigenvalue threshold on the point covariance below which a
/// direction counts as collapsed.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MveeConfig {
    /// Stop once `max_i M_i / (d + 1) − 1` drops below this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// When set, degenerate clouds are fitted in their own span and every
    /// semi-axis is raised to at least this many meters.
    pub inflation_floor: Option<f64>,
}

impl Default for MveeConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_iterations: 10_000,
            inflation_floor: None,
        }
    }
}

impl MveeConfig {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_inflation(mut self, floor: f64) -> Self {
        self.inflation_floor = Some(floor);
        self
    }
}

/// Fits the minimum-volume ellipsoid enclosing `points`.
///
/// Every input point satisfies `(x − c)ᵀ M (x − c) ≤ 1 + tolerance`; the
/// fitted quadratic form is rescaled so the worst point lies on the
/// boundary.
pub fn fit_mvee(points: &PointCloud, config: &MveeConfig) -> Result<Ellipsoid, GeometryError> {
    fit_mvee_slice(points.points(), config)
}

pub fn fit_mvee_slice(points: &[Vector3<f64>], config: &MveeConfig) -> Result<Ellipsoid, GeometryError> {
    if !(config.tolerance > 0.0) {
        return Err(GeometryError::InvalidArgument("tolerance must be positive".into()));
    }
    if points.is_empty() {
        return Err(GeometryError::DegenerateInput { rank: 0 });
    }
    if let Some(floor) = config.inflation_floor {
        if !(floor > 0.0) {
            return Err(GeometryError::InvalidArgument(
                "inflation floor must be positive".into(),
            ));
        }
    }

    let n = points.len();
    let mean = points.iter().sum::<Vector3<f64>>() / n as f64;
    let scale = points.iter().map(|p| (p - mean).amax()).fold(0.0_f64, f64::max);

    // Principal directions of the (normalized) cloud decide the working span.
    let mut cov = Matrix3::zeros();
    if scale > 0.0 {
        for p in points {
            let d = (p - mean) / scale;
            cov += d * d.transpose();
        }
        cov /= n as f64;
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let rank = if top <= 0.0 {
        0
    } else {
        order.iter().filter(|&&i| eig.eigenvalues[i] > RANK_TOL * top).count()
    };

    if rank < 3 && config.inflation_floor.is_none() {
        return Err(GeometryError::DegenerateInput { rank });
    }

    let (center, quad) = if rank == 3 {
        let local: Vec<Vec<f64>> = points
            .iter()
            .map(|p| ((p - mean) / scale).iter().copied().collect())
            .collect();
        let (c, a) = khachiyan(&local, 3, config)?;
        let c = Vector3::new(c[0], c[1], c[2]) * scale + mean;
        let a = Matrix3::from_fn(|r, k| a[(r, k)]) / (scale * scale);
        (c, a)
    } else {
        // Fit inside the span, then give the collapsed directions the floor.
        let floor = config.inflation_floor.unwrap_or(DEFAULT_INFLATION_FLOOR);
        let basis: Vec<Vector3<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
        let mut center = mean;
        let mut quad = Matrix3::zeros();
        if rank > 0 {
            let local: Vec<Vec<f64>> = points
                .iter()
                .map(|p| {
                    let d = (p - mean) / scale;
                    basis[..rank].iter().map(|b| b.dot(&d)).collect()
                })
                .collect();
            let (c, a) = khachiyan(&local, rank, config)?;
            for i in 0..rank {
                center += basis[i] * (c[i] * scale);
                for j in 0..rank {
                    quad += basis[i] * basis[j].transpose() * (a[(i, j)] / (scale * scale));
                }
            }
            // Settle containment inside the span so the floor stays exact.
            let worst = points
                .iter()
                .map(|p| (p - center).dot(&(quad * (p - center))))
                .fold(0.0_f64, f64::max);
            if worst > 1.0 {
                quad /= worst;
            }
        }
        for b in &basis[rank..] {
            quad += b * b.transpose() / (floor * floor);
        }
        (center, quad)
    };

    let mut ellipsoid = ellipsoid_from_quadratic(center, &quad)?;

    // Land exactly on the containment bound.
    let worst = points
        .iter()
        .map(|p| ellipsoid.quadratic_form(p))
        .fold(0.0_f64, f64::max);
    if worst > 1.0 {
        ellipsoid = Ellipsoid::new(center, ellipsoid.semi_axes() * worst.sqrt(), ellipsoid.rotation())?;
    }
    if let Some(floor) = config.inflation_floor {
        let axes = ellipsoid.semi_axes().map(|a| a.max(floor));
        ellipsoid = Ellipsoid::new(center, axes, ellipsoid.rotation())?;
    }
    Ok(ellipsoid)
}

/// Builds the canonical ellipsoid of a positive-definite quadratic form:
/// semi-axes sorted descending, each eigenvector's first nonzero component
/// positive, and the last column negated if that leaves a reflection.
pub fn ellipsoid_from_quadratic(center: Vector3<f64>, quad: &Matrix3<f64>) -> Result<Ellipsoid, GeometryError> {
    let sym = (quad + quad.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(GeometryError::InvalidEllipsoid(
            "quadratic form is not positive definite".into(),
        ));
    }
    let mut idx = [0usize, 1, 2];
    // Ascending eigenvalue ⇔ descending semi-axis.
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let semi_axes = Vector3::from_fn(|i, _| 1.0 / eig.eigenvalues[idx[i]].sqrt());
    let mut rotation = Matrix3::zeros();
    for (col, &i) in idx.iter().enumerate() {
        let mut v: Vector3<f64> = eig.eigenvectors.column(i).normalize();
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                v = -v;
            }
        }
        rotation.set_column(col, &v);
    }
    if rotation.determinant() < 0.0 {
        let last = -rotation.column(2);
        rotation.set_column(2, &last);
    }
    Ellipsoid::new(center, semi_axes, rotation)
}

/// Kumar–Yildirim start: equal mass on the two extreme points along `dim`
/// successively orthogonal directions. Uniform weights converge far more
/// slowly on large clouds.
fn initial_weights(points: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let n = points.len();
    let mut u = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for _ in 0..dim {
        // The coordinate axis least covered by the chosen spans.
        let dir = (0..dim)
            .map(|axis| {
                let mut d = vec![0.0; dim];
                d[axis] = 1.0;
                for b in &basis {
                    let proj: f64 = d.iter().zip(b).map(|(x, y)| x * y).sum();
                    d.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
                }
                d
            })
            .max_by(|a, b| {
                let na: f64 = a.iter().map(|x| x * x).sum();
                let nb: f64 = b.iter().map(|x| x * x).sum();
                na.total_cmp(&nb)
            })
            .unwrap_or_default();
        let dot = |p: &Vec<f64>| p.iter().zip(&dir).map(|(x, y)| x * y).sum::<f64>();
        let (mut lo, mut hi) = (0, 0);
        for i in 1..n {
            if dot(&points[i]) < dot(&points[lo]) {
                lo = i;
            }
            if dot(&points[i]) > dot(&points[hi]) {
                hi = i;
            }
        }
        u[lo] += 1.0;
        u[hi] += 1.0;
        let mut span: Vec<f64> = points[hi].iter().zip(&points[lo]).map(|(a, b)| a - b).collect();
        for b in &basis {
            let proj: f64 = span.iter().zip(b).map(|(x, y)| x * y).sum();
            span.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = span.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            basis.push(span.into_iter().map(|x| x / norm).collect());
        }
    }
    let total: f64 = u.iter().sum();
    u.iter_mut().for_each(|w| *w /= total);
    u
}

/// Khachiyan ascent with away steps on lifted points `(x, 1)`.
/// Returns `(center, A)` with `(x − c)ᵀ A (x − c) ≤ 1 + O(tolerance)`.
fn khachiyan(points: &[Vec<f64>], dim: usize, config: &MveeConfig) -> Result<(Vec<f64>, DMatrix<f64>), GeometryError> {
    let n = points.len();
    let lifted_dim = dim + 1;
    let d = lifted_dim as f64;
    let lifted: Vec<f64> = points
        .iter()
        .flat_map(|p| p.iter().copied().chain(std::iter::once(1.0)))
        .collect();
    let q = |i: usize| &lifted[i * lifted_dim..(i + 1) * lifted_dim];

    let mut u = initial_weights(points, dim);
    let mut m = vec![0.0; n];
    let mut iterations = 0usize;
    loop {
        let mut x = DMatrix::<f64>::zeros(lifted_dim, lifted_dim);
        for (i, &w) in u.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let qi = q(i);
            for r in 0..lifted_dim {
                for c in 0..lifted_dim {
                    x[(r, c)] += w * qi[r] * qi[c];
                }
            }
        }
        let x_inv = x.try_inverse().ok_or(GeometryError::DegenerateInput {
            rank: dim.saturating_sub(1),
        })?;
        for (i, mi) in m.iter_mut().enumerate() {
            let qi = q(i);
            let mut acc = 0.0;
            for r in 0..lifted_dim {
                let mut row = 0.0;
                for c in 0..lifted_dim {
                    row += x_inv[(r, c)] * qi[c];
                }
                acc += qi[r] * row;
            }
            *mi = acc;
        }

        let (j, m_max) =
            m.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (i, v)| if v > best.1 { (i, v) } else { best },
            );
        let (l, m_min) =
            m.iter()
                .copied()
                .enumerate()
                .filter(|&(i, _)| u[i] > 0.0)
                .fold(
                    (0, f64::INFINITY),
                    |best, (i, v)| if v < best.1 { (i, v) } else { best },
                );

        let gap_up = m_max / d - 1.0;
        let gap_down = 1.0 - m_min / d;
        if gap_up <= config.tolerance {
            break;
        }
        if iterations >= config.max_iterations {
            return Err(GeometryError::NonConvergence {
                iterations,
                gap: gap_up,
            });
        }
        iterations += 1;

        let (idx, step) = if gap_up >= gap_down {
            (j, (m_max - d) / (d * (m_max - 1.0)))
        } else {
            let limit = -u[l] / (1.0 - u[l]);
            let step = if m_min > 1.0 {
                ((m_min - d) / (d * (m_min - 1.0))).max(limit)
            } else {
                limit
            };
            (l, step)
        };
        for w in u.iter_mut() {
            *w *= 1.0 - step;
        }
        u[idx] += step;
        if u[idx] < 0.0 {
            u[idx] = 0.0;
        }
    }

    let mut center = vec![0.0; dim];
    for (i, &w) in u.iter().enumerate() {
        for (k, c) in center.iter_mut().enumerate() {
            *c += w * points[i][k];
        }
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for (i, &w) in u.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for r in 0..dim {
            for c in 0..dim {
                cov[(r, c)] += w * (points[i][r] - center[r]) * (points[i][c] - center[c]);
            }
        }
    }
    let a = cov.try_inverse().ok_or(GeometryError::DegenerateInput {
        rank: dim.saturating_sub(1),
    })? / dim as f64;
    Ok((center, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cross_polytope() -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = 1.0;
            pts.push(e);
            pts.push(-e);
        }
        pts
    }

    #[test]
    fn cross_polytope_gives_unit_ball() {
        let e = fit_mvee_slice(&cross_polytope(), &MveeConfig::default()).unwrap();
        assert!(e.center().norm() < 1e-6);
        for a in e.semi_axes().iter() {
            assert!((a - 1.0).abs() < 1e-6, "{a}");
        }
    }

    #[test]
    fn coplanar_points_are_degenerate_without_inflation() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.3),
            Vector3::new(1.0, 0.0, 0.3),
            Vector3::new(0.0, 1.0, 0.3),
            Vector3::new(1.0, 1.0, 0.3),
        ];
        assert!(matches!(
            fit_mvee_slice(&pts, &MveeConfig::default()),
            Err(GeometryError::DegenerateInput { rank: 2 })
        ));
        let e = fit_mvee_slice(&pts, &MveeConfig::default().with_inflation(0.005)).unwrap();
        let min_axis = e.semi_axes().min();
        assert!((min_axis - 0.005).abs() < 1e-12);
        // Thin axis is the plane normal.
        assert!(e.rotation().column(2).z.abs() > 1.0 - 1e-9);
        for p in &pts {
            assert!(e.quadratic_form(p) <= 1.0 + 1e-7);
        }
    }

    #[test]
    fn collinear_and_single_points_inflate() {
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let e = fit_mvee_slice(&line, &MveeConfig::default().with_inflation(0.01)).unwrap();
        assert!((e.semi_axes()[0] - 0.2).abs() < 1e-6);
        assert!((e.center().x - 0.2).abs() < 1e-6);
        assert_eq!(e.semi_axes()[2], 0.01);

        let single = vec![Vector3::new(1.0, 2.0, 3.0)];
        let e = fit_mvee_slice(&single, &MveeConfig::default().with_inflation(0.01)).unwrap();
        assert_eq!(e.semi_axes(), Vector3::repeat(0.01));
        assert_eq!(e.center(), single[0]);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let pts: Vec<_> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.7;
                Vector3::new(t.cos(), (1.3 * t).sin(), (0.4 * t).cos() * 0.5)
            })
            .collect();
        let cfg = MveeConfig {
            max_iterations: 2,
            ..MveeConfig::default()
        };
        assert!(matches!(
            fit_mvee_slice(&pts, &cfg),
            Err(GeometryError::NonConvergence { .. })
        ));
    }

    #[test]
    fn canonical_orientation_rules() {
        let e =
            ellipsoid_from_quadratic(Vector3::zeros(), &Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 9.0))).unwrap();
        assert_eq!(e.semi_axes(), Vector3::new(1.0, 0.5, 1.0 / 3.0));
        assert!((e.rotation().determinant() - 1.0).abs() < 1e-12);
        assert!(e.rotation()[(1, 0)] > 0.0);
    }
}
