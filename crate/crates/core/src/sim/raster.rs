//! Minimal depth rasterizer for synthesizing depth views of a scene made of
//! ellipsoids, boxes and a bounded horizontal table.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::Ellipsoid;
use crate::perception::{BBox, CameraModel, DepthView, PerceptionError, WorkspaceBounds};

/// Table top sits this far below the workspace floor so that the strict
/// workspace crop removes it.
pub const TABLE_DROP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ellipsoid(Ellipsoid),
    /// Oriented box; column `i` of `rotation` is the direction of half-extent `i`.
    Box {
        center: Vector3<f64>,
        half_extents: Vector3<f64>,
        rotation: Matrix3<f64>,
    },
    /// Horizontal rectangle `z = height` over `[min, max]` in x and y.
    Table {
        height: f64,
        min: [f64; 2],
        max: [f64; 2],
    },
}

/// A table spanning the workspace footprint just below its floor.
pub fn table_under(bounds: &WorkspaceBounds) -> Shape {
    let (lo, hi) = (bounds.min(), bounds.max());
    Shape::Table {
        height: lo.z - TABLE_DROP,
        min: [lo.x, lo.y],
        max: [hi.x, hi.y],
    }
}

impl Shape {
    /// Smallest positive ray parameter `s` with `origin + s·dir` on the surface.
    pub fn hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Shape::Ellipsoid(e) => {
                let inv = Matrix3::from_diagonal(&e.semi_axes().map(|a| 1.0 / a)) * e.rotation().transpose();
                let o = inv * (origin - e.center());
                let d = inv * dir;
                let (a, b, c) = (d.dot(&d), 2.0 * o.dot(&d), o.dot(&o) - 1.0);
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
                    .into_iter()
                    .find(|&s| s > 0.0)
            }
            Shape::Box {
                center,
                half_extents,
                rotation,
            } => {
                let o = rotation.transpose() * (origin - center);
                let d = rotation.transpose() * dir;
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..3 {
                    if d[i].abs() < 1e-15 {
                        if o[i].abs() > half_extents[i] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-half_extents[i] - o[i]) / d[i];
                    let b = (half_extents[i] - o[i]) / d[i];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t0 > t1 {
                    None
                } else {
                    [t0, t1].into_iter().find(|&s| s > 0.0)
                }
            }
            Shape::Table { height, min, max } => {
                if dir.z.abs() < 1e-15 {
                    return None;
                }
                let s = (height - origin.z) / dir.z;
                let q = origin + dir * s;
                (s > 0.0 && q.x >= min[0] && q.x <= max[0] && q.y >= min[1] && q.y <= max[1]).then_some(s)
            }
        }
    }
}

/// Renders optical-axis depth for every pixel; pixels that see nothing get 0.
pub fn render_depth(
    camera: &CameraModel,
    width: usize,
    height: usize,
    shapes: &[Shape],
) -> Result<DepthView, PerceptionError> {
    let origin = camera.position();
    let rot = camera.rotation();
    let mut depth = Vec::with_capacity(width * height);
    for v in 0..height {
        for u in 0..width {
            // The camera-frame ray has unit z, so the ray parameter is the depth.
            let dir = rot * camera.ray(u as f64, v as f64);
            let d = shapes
                .iter()
                .filter_map(|s| s.hit(&origin, &dir))
                .fold(f64::INFINITY, f64::min);
            depth.push(if d.is_finite() { d } else { 0.0 });
        }
    }
    DepthView::new(width, height, depth, *camera)
}

/// Pixel box around the projected outline of `e`, padded by `pad` pixels and
/// clipped to the image; `None` if it falls outside the image or behind the
/// camera.
pub fn silhouette_box(camera: &CameraModel, width: usize, height: usize, e: &Ellipsoid, pad: f64) -> Option<BBox> {
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    const RINGS: usize = 24;
    const SEGMENTS: usize = 48;
    for i in 0..=RINGS {
        let theta = std::f64::consts::PI * i as f64 / RINGS as f64;
        for j in 0..SEGMENTS {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / SEGMENTS as f64;
            let dir = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let (u, v, _) = camera.project(&e.surface_point(&dir))?;
            u0 = u0.min(u);
            v0 = v0.min(v);
            u1 = u1.max(u);
            v1 = v1.max(v);
        }
    }
    let (w, h) = ((width - 1) as f64, (height - 1) as f64);
    let (u0, v0) = ((u0 - pad).max(0.0), (v0 - pad).max(0.0));
    let (u1, v1) = ((u1 + pad).min(w), (v1 + pad).min(h));
    if u0 > u1 || v0 > v1 {
        return None;
    }
    BBox::new(u0, v0, u1, v1, 1.0).ok()
}
