//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the closed forms under test; each oracle is either a
//! brute-force search, a first-order iterative solver or a plain textbook
//! algorithm.

#![allow(dead_code)]

use std::f64::consts::PI;

use aegis_core::filter::CbfRow;
use aegis_core::geometry::Ellipsoid;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn vec_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::new(uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi))
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = vec_in(rng, -1.0, 1.0);
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let q = Vector4::new(
        uniform(rng, -1.0, 1.0),
        uniform(rng, -1.0, 1.0),
        uniform(rng, -1.0, 1.0),
        uniform(rng, -1.0, 1.0),
    );
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q))
        .to_rotation_matrix()
        .into_inner()
}

pub fn ellipsoid(rng: &mut ChaCha8Rng, center_span: f64, axis_lo: f64, axis_hi: f64) -> Ellipsoid {
    let c = vec_in(rng, -center_span, center_span);
    let a = vec_in(rng, axis_lo, axis_hi);
    Ellipsoid::new(c, a, rotation(rng)).unwrap()
}

/// `(x − c)ᵀ R diag(a)⁻² Rᵀ (x − c)`, from the ellipsoid's raw parameters.
pub fn form(e: &Ellipsoid, x: &Vector3<f64>) -> f64 {
    let local = e.rotation().transpose() * (x - e.center());
    local.component_div(&e.semi_axes()).norm_squared()
}

/// Surface point at spherical angles `(θ, φ)`.
pub fn surface_at(e: &Ellipsoid, theta: f64, phi: f64) -> Vector3<f64> {
    let u = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
    e.center() + e.rotation() * u.component_mul(&e.semi_axes())
}

/// Roughly `n` surface points on a Fibonacci lattice of the unit sphere,
/// mapped onto the ellipsoid.
pub fn surface_samples(e: &Ellipsoid, n: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            let u = Vector3::new(r * t.cos(), r * t.sin(), z);
            e.center() + e.rotation() * u.component_mul(&e.semi_axes())
        })
        .collect()
}

/// Minimum of `f` over the ellipsoid surface: a coarse angular grid, then
/// six rounds of zoomed local grids around the best sample. The search runs
/// once per choice of polar axis, since a minimizer near a pole is poorly
/// resolved in that chart.
pub fn min_over_surface(e: &Ellipsoid, f: impl Fn(&Vector3<f64>) -> f64) -> f64 {
    (0..3)
        .map(|pole| min_in_chart(e, pole, &f))
        .fold(f64::INFINITY, f64::min)
}

fn min_in_chart(e: &Ellipsoid, pole: usize, f: &impl Fn(&Vector3<f64>) -> f64) -> f64 {
    let at = |t: f64, p: f64| {
        let u = Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos());
        let u = Vector3::new(u[(pole + 1) % 3], u[(pole + 2) % 3], u[pole % 3]);
        e.center() + e.rotation() * u.component_mul(&e.semi_axes())
    };
    let (nt, np) = (32, 64);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=nt {
        for j in 0..np {
            let (t, p) = (PI * i as f64 / nt as f64, 2.0 * PI * j as f64 / np as f64);
            let v = f(&at(t, p));
            if v < best.0 {
                best = (v, t, p);
            }
        }
    }
    let (mut dt, mut dp) = (PI / nt as f64, 2.0 * PI / np as f64);
    for _ in 0..6 {
        let (_, t0, p0) = best;
        for i in -4..=4 {
            for j in -4..=4 {
                let (t, p) = (t0 + dt * i as f64 / 4.0, p0 + dp * j as f64 / 4.0);
                let v = f(&at(t, p));
                if v < best.0 {
                    best = (v, t, p);
                }
            }
        }
        dt /= 4.0;
        dp /= 4.0;
    }
    best.0
}

/// Barrier value by search: build the tangent plane at the virtual-state
/// point from a finite-difference normal of the end-effector's implicit
/// function, then minimize the signed point-to-plane distance over the
/// obstacle surface.
pub fn barrier_by_sampling(ee: &Ellipsoid, p_s: &Vector3<f64>, obstacle: &Ellipsoid) -> f64 {
    let q = ee.rotation() * Matrix3::from_diagonal(&ee.semi_axes()) * ee.rotation().transpose();
    let p_b = ee.center() + q * p_s;
    let step = 1e-6;
    let grad = Vector3::from_fn(|i, _| {
        let mut e = Vector3::zeros();
        e[i] = step;
        (form(ee, &(p_b + e)) - form(ee, &(p_b - e))) / (2.0 * step)
    });
    let n = grad.normalize();
    min_over_surface(obstacle, |x| n.dot(&(x - p_b)))
}

/// Certified lower bound on `min over solid b of a's quadratic form`, by
/// projected gradient on the unit-ball parameterization of `b` with a
/// Frank–Wolfe duality bound. Stops once the bound exceeds `target` or the
/// gap closes.
pub fn min_form_lower_bound(a: &Ellipsoid, b: &Ellipsoid, target: f64) -> (f64, f64) {
    let sb = b.rotation() * Matrix3::from_diagonal(&b.semi_axes());
    let da = Matrix3::from_diagonal(&a.semi_axes().map(|v| 1.0 / v)) * a.rotation().transpose();
    // f(u) = ‖K u + r‖², K = da·sb, r = da·(c_b − c_a).
    let k = da * sb;
    let r = da * (b.center() - a.center());
    let h = k.transpose() * k;
    let lip = 2.0 * h.symmetric_eigenvalues().max();
    let f = |u: &Vector3<f64>| (k * u + r).norm_squared();
    let grad = |u: &Vector3<f64>| 2.0 * k.transpose() * (k * u + r);
    let project = |u: Vector3<f64>| if u.norm() > 1.0 { u.normalize() } else { u };

    let mut u = Vector3::zeros();
    let mut y = u;
    let mut t = 1.0f64;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f(&u);
    for _ in 0..200_000 {
        let g = grad(&y);
        let next = project(y - g / lip);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next + (next - u) * ((t - 1.0) / t_next);
        u = next;
        t = t_next;
        let gu = grad(&u);
        let fu = f(&u);
        upper = upper.min(fu);
        lower = lower.max(fu - gu.norm() - gu.dot(&u));
        if lower > target || upper - lower < 1e-13 {
            break;
        }
    }
    (lower, upper)
}

/// Minimum-volume enclosing ellipsoid from the D-optimal design dual,
/// solved with a log-barrier Newton method. Returns the center, the shape
/// matrix rescaled so the worst point lies on the boundary, and the
/// achieved gap `max_i m_i / (d + 1) - 1`.
pub fn mvee_barrier(points: &[Vector3<f64>], tol: f64) -> (Vector3<f64>, Matrix3<f64>, f64) {
    let n = points.len();
    let q: Vec<Vector4<f64>> = points.iter().map(|p| Vector4::new(p.x, p.y, p.z, 1.0)).collect();
    let moment = |u: &[f64]| {
        let mut x = Matrix4::zeros();
        for (qi, &ui) in q.iter().zip(u) {
            x += qi * qi.transpose() * ui;
        }
        x
    };
    let objective = |u: &[f64], mu: f64| {
        let det = moment(u).determinant();
        if det <= 0.0 || u.iter().any(|&w| w <= 0.0) {
            return f64::NEG_INFINITY;
        }
        det.ln() + mu * u.iter().map(|w| w.ln()).sum::<f64>()
    };
    let gap_of = |u: &[f64]| {
        let xi = moment(u).try_inverse().expect("points must span 3-D");
        q.iter().map(|qi| (qi.transpose() * xi * qi)[0]).fold(0.0, f64::max) / 4.0 - 1.0
    };
    let mut u = vec![1.0 / n as f64; n];
    let mut mu = 1.0;
    for _ in 0..400 {
        if gap_of(&u) < tol {
            break;
        }
        for _ in 0..50 {
            let xi = moment(&u).try_inverse().expect("points must span 3-D");
            let mut kkt = DMatrix::zeros(n + 1, n + 1);
            let mut rhs = DVector::zeros(n + 1);
            for i in 0..n {
                let xq = xi * q[i];
                for j in 0..n {
                    let mij = q[j].dot(&xq);
                    kkt[(i, j)] = -mij * mij;
                }
                kkt[(i, i)] -= mu / (u[i] * u[i]);
                kkt[(i, n)] = 1.0;
                kkt[(n, i)] = 1.0;
                rhs[i] = -(q[i].dot(&xq) + mu / u[i]);
            }
            let step = kkt.lu().solve(&rhs).expect("singular Newton system");
            let du: Vec<f64> = (0..n).map(|i| step[i]).collect();
            let decrement: f64 = du.iter().zip(&rhs.as_slice()[..n]).map(|(d, g)| -d * g).sum();
            if decrement.abs() < 1e-14 {
                break;
            }
            let f0 = objective(&u, mu);
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = u.iter().zip(&du).map(|(w, d)| w + t * d).collect();
                if objective(&trial, mu) >= f0 || t < 1e-12 {
                    u = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        mu *= 0.2;
    }
    let gap = gap_of(&u);
    let c: Vector3<f64> = points.iter().zip(&u).map(|(p, &w)| p * w).sum();
    let mut s = Matrix3::zeros();
    for (p, &w) in points.iter().zip(&u) {
        s += p * p.transpose() * w;
    }
    let a = (s - c * c.transpose()).try_inverse().unwrap() / 3.0;
    let worst = points
        .iter()
        .map(|p| ((p - c).transpose() * a * (p - c))[0])
        .fold(0.0, f64::max);
    (c, a / worst, gap)
}

pub fn volume_of(a: &Matrix3<f64>) -> f64 {
    4.0 / 3.0 * PI / a.determinant().sqrt()
}

/// Solution of the safety QP by projected gradient on its dual.
pub struct QpOracle {
    pub u_v: Vector3<f64>,
    pub u_ps: Vec<Vector3<f64>>,
    pub cost: f64,
}

/// `‖u_v − u_ref‖² + w Σ ‖u_ps_j − ref_j‖²`.
pub fn qp_cost(u_ref: &Vector3<f64>, rows: &[CbfRow], w: f64, u_v: &Vector3<f64>, u_ps: &[Vector3<f64>]) -> f64 {
    (u_v - u_ref).norm_squared()
        + w * rows
            .iter()
            .zip(u_ps)
            .map(|(r, u)| (u - r.reference).norm_squared())
            .sum::<f64>()
}

pub fn qp_dual_oracle(u_ref: &Vector3<f64>, rows: &[CbfRow], w: f64) -> QpOracle {
    let m = rows.len();
    let dim = 3 + 3 * m;
    // Stack x = [u_v; u_ps_1; ...], cost ½ xᵀ D x − ..., D = diag(1, w, ...).
    let mut g = DMatrix::zeros(m, dim);
    let mut x_ref = DVector::zeros(dim);
    let mut d_inv = DVector::from_element(dim, 1.0);
    x_ref.fixed_rows_mut::<3>(0).copy_from(u_ref);
    for (j, r) in rows.iter().enumerate() {
        for k in 0..3 {
            g[(j, k)] = r.a[k];
            g[(j, 3 + 3 * j + k)] = r.b[k];
            x_ref[3 + 3 * j + k] = r.reference[k];
            d_inv[3 + 3 * j + k] = 1.0 / w;
        }
    }
    let rhs = DVector::from_iterator(m, rows.iter().map(|r| r.rhs));
    let gd = &g * DMatrix::from_diagonal(&d_inv);
    let hess = &gd * g.transpose();
    let lip = hess.clone().symmetric_eigenvalues().max().max(1e-300);
    let primal = |lambda: &DVector<f64>| &x_ref + gd.transpose() * lambda;

    let mut lambda = DVector::zeros(m);
    let mut y = lambda.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let grad = &rhs - &g * primal(&y);
        let next = (&y + grad / lip).map(|v: f64| v.max(0.0));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &lambda) * ((t - 1.0) / t_next);
        lambda = next;
        t = t_next;
        // Projected-gradient stationarity of the dual at the current iterate.
        let g_now = &rhs - &g * primal(&lambda);
        let scale = 1.0 + rhs.amax() + lambda.amax() * lip;
        let stationary = (0..m).all(|j| {
            let r = if lambda[j] > 0.0 {
                g_now[j].abs()
            } else {
                g_now[j].max(0.0)
            };
            r < 1e-14 * scale
        });
        if stationary {
            break;
        }
    }
    let x = primal(&lambda);
    let u_v = Vector3::new(x[0], x[1], x[2]);
    let u_ps: Vec<Vector3<f64>> = (0..m)
        .map(|j| Vector3::new(x[3 + 3 * j], x[4 + 3 * j], x[5 + 3 * j]))
        .collect();
    let cost = qp_cost(u_ref, rows, w, &u_v, &u_ps);
    QpOracle { u_v, u_ps, cost }
}

/// Elementwise crop oracle: strict inequality on every axis.
pub fn crop_oracle(points: &[Vector3<f64>], min: &Vector3<f64>, max: &Vector3<f64>) -> Vec<Vector3<f64>> {
    points
        .iter()
        .filter(|p| (0..3).all(|i| p[i] > min[i] && p[i] < max[i]))
        .copied()
        .collect()
}

/// Trim oracle: rank by distance to the centroid, drop `ceil(f·n)` of the
/// farthest; among equal distances the later index goes first.
pub fn trim_oracle(points: &[Vector3<f64>], fraction: f64) -> Vec<Vector3<f64>> {
    let n = points.len();
    let c: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / n as f64;
    let drop = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        (points[j] - c)
            .norm()
            .total_cmp(&(points[i] - c).norm())
            .then(j.cmp(&i))
    });
    let removed: Vec<usize> = order.into_iter().take(drop).collect();
    (0..n).filter(|i| !removed.contains(i)).map(|i| points[i]).collect()
}

/// Connected components of the radius graph restricted to core points
/// (at least `min_neighbors` others within `radius`), by flood fill over an
/// adjacency matrix. Returns the members of the largest component plus
/// the border points attached to it, in input order.
///
/// Repeated until the selection maps to itself.
pub fn largest_component(points: &[Vector3<f64>], radius: f64, min_neighbors: usize) -> Vec<Vector3<f64>> {
    let mut current = points.to_vec();
    loop {
        let next = component_pass(&current, radius, min_neighbors);
        if next.len() == current.len() || next.is_empty() {
            return next;
        }
        current = next;
    }
}

fn component_pass(points: &[Vector3<f64>], radius: f64, min_neighbors: usize) -> Vec<Vector3<f64>> {
    let n = points.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| i != j && (points[i] - points[j]).norm() <= radius)
                .collect()
        })
        .collect();
    let core: Vec<bool> = adj
        .iter()
        .map(|row| row.iter().filter(|&&b| b).count() >= min_neighbors)
        .collect();
    let mut label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if !core[s] || label[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![s];
        label[s] = id;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if adj[i][j] && core[j] && label[j] == usize::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(0);
    }
    for i in 0..n {
        if !core[i] {
            if let Some(j) = (0..n).find(|&j| adj[i][j] && core[j]) {
                label[i] = label[j];
            }
        }
    }
    let mut first = vec![usize::MAX; sizes.len()];
    for (i, &l) in label.iter().enumerate() {
        if l != usize::MAX {
            sizes[l] += 1;
            first[l] = first[l].min(i);
        }
    }
    let best = (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(first[b].cmp(&first[a])));
    match best {
        Some(b) => (0..n).filter(|&i| label[i] == b).map(|i| points[i]).collect(),
        None => Vec::new(),
    }
}

/// A random end-effector/obstacle configuration for the barrier checks.
#[derive(Debug, Clone)]
pub struct BarrierCase {
    pub geom: aegis_core::barrier::EEGeometry,
    pub state: aegis_core::barrier::AugmentedState,
    pub obstacle: Ellipsoid,
}

impl BarrierCase {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let geom = aegis_core::barrier::EEGeometry::new(vec_in(rng, 0.02, 0.12), vec_in(rng, -0.05, 0.05)).unwrap();
        let state =
            aegis_core::barrier::AugmentedState::new(vec_in(rng, -0.3, 0.3), rotation(rng), unit_vector(rng)).unwrap();
        let obstacle = ellipsoid(rng, 0.3, 0.02, 0.2);
        Self { geom, state, obstacle }
    }

    /// The end-effector body as a plain ellipsoid.
    pub fn ee(&self) -> Ellipsoid {
        Ellipsoid::new(self.state.p_ep, self.geom.semi_axes, self.state.r_ef).unwrap()
    }
}

/// Central differences of `f` at `x`.
pub fn central_gradient(x: &Vector3<f64>, step: f64, f: impl Fn(&Vector3<f64>) -> f64) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let mut e = Vector3::zeros();
        e[i] = step;
        (f(&(x + e)) - f(&(x - e))) / (2.0 * step)
    })
}

/// Smallest pairwise distance between surface samples of two bodies.
pub fn sampled_distance(a: &Ellipsoid, b: &Ellipsoid, n: usize) -> f64 {
    let sa = surface_samples(a, n);
    let sb = surface_samples(b, n);
    let mut best = f64::INFINITY;
    for p in &sa {
        for q in &sb {
            best = best.min((p - q).norm_squared());
        }
    }
    best.sqrt()
}

/// `m` random rows whose reference point violates every row, with
/// tangential `b` and reference vectors like the filter produces.
pub fn violated_rows(rng: &mut ChaCha8Rng, u_ref: &Vector3<f64>, m: usize) -> Vec<CbfRow> {
    (0..m)
        .map(|_| {
            let p_s = unit_vector(rng);
            let tangent = |w: Vector3<f64>| w - p_s * w.dot(&p_s);
            let a = vec_in(rng, -1.0, 1.0) * 0.2;
            let b = tangent(vec_in(rng, -1.0, 1.0));
            let reference = b * 10.0;
            let at_ref = a.dot(u_ref) + b.dot(&reference);
            CbfRow {
                a,
                b,
                rhs: at_ref + uniform(rng, 0.01, 2.0),
                reference,
            }
        })
        .collect()
}

/// Worst KKT violation of a candidate solution of the safety QP (with the
/// half-scaled cost, so `u_v − u_ref = Σ λ_j a_j` and
/// `w (u_ps_j − ref_j) = λ_j b_j`). Multipliers are recovered from the
/// virtual-input block of each row.
pub fn kkt_residual(u_ref: &Vector3<f64>, rows: &[CbfRow], w: f64, u_v: &Vector3<f64>, u_ps: &[Vector3<f64>]) -> f64 {
    let mut worst = 0.0f64;
    let mut stationarity = u_v - u_ref;
    for (r, u) in rows.iter().zip(u_ps) {
        let lambda = if r.b.norm_squared() > 0.0 {
            w * (u - r.reference).dot(&r.b) / r.b.norm_squared()
        } else {
            0.0
        };
        stationarity -= r.a * lambda;
        let tangential_rest = w * (u - r.reference) - r.b * lambda;
        let slack = r.value(u_v, u);
        worst = worst
            .max(tangential_rest.norm())
            .max((-lambda).max(0.0))
            .max((-slack).max(0.0))
            .max((lambda * slack).abs());
    }
    worst.max(stationarity.norm())
}
