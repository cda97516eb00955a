//! Synthetic tabletop scene for the perception checks: one rotated box on
//! the table, optionally flanked by two posts that leak into the detection
//! box, seen by two cameras from opposite sides.

#![allow(dead_code)]

use aegis_core::geometry::axis_angle;
use aegis_core::perception::{BBox, CameraModel, RegionView, WorkspaceBounds};
use aegis_core::sim::raster::{render_depth, table_under, Shape};
use nalgebra::{Matrix3, Vector3};

pub struct BoxScene {
    pub bounds: WorkspaceBounds,
    pub center: Vector3<f64>,
    pub half: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub views: Vec<RegionView>,
}

pub fn corners(c: &Vector3<f64>, h: &Vector3<f64>, r: &Matrix3<f64>) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(8);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                out.push(c + r * Vector3::new(sx * h.x, sy * h.y, sz * h.z));
            }
        }
    }
    out
}

impl BoxScene {
    /// `posts` adds the clutter; `width` is the image width (4:3 aspect,
    /// focal length scaled with it).
    pub fn new(posts: bool, width: usize) -> Self {
        let bounds = WorkspaceBounds::new(Vector3::new(-0.5, -0.5, 0.0), Vector3::new(0.5, 0.5, 0.8)).unwrap();
        let center = Vector3::new(0.05, -0.02, 0.06);
        let half = Vector3::new(0.05, 0.04, 0.06);
        let rotation = axis_angle(&Vector3::z(), 0.35);
        let mut shapes = vec![
            Shape::Box {
                center,
                half_extents: half,
                rotation,
            },
            table_under(&bounds),
        ];
        let mut outline = corners(&center, &half, &rotation);
        if posts {
            let lateral = Vector3::new(-0.5, 0.75, 0.0).normalize();
            for s in [1.0, -1.0] {
                let pc = center + lateral * (0.25 * s) + Vector3::new(0.0, 0.0, 0.04);
                let ph = Vector3::new(0.03, 0.03, 0.10);
                shapes.push(Shape::Box {
                    center: pc,
                    half_extents: ph,
                    rotation: Matrix3::identity(),
                });
                outline.extend(corners(&pc, &ph, &Matrix3::identity()));
            }
        }
        let height = width * 3 / 4;
        let f = width as f64 * 1.375;
        let (wf, hf) = (width as f64 - 1.0, height as f64 - 1.0);
        let views = [Vector3::new(0.6, 0.35, 0.45), Vector3::new(-0.55, -0.4, 0.45)]
            .into_iter()
            .map(|eye| {
                let cam = CameraModel::look_at(f, f, wf / 2.0, hf / 2.0, eye, center, Vector3::z()).unwrap();
                let view = render_depth(&cam, width, height, &shapes).unwrap();
                // Detection box: projected outline plus two pixels.
                let (mut u0, mut v0) = (f64::INFINITY, f64::INFINITY);
                let (mut u1, mut v1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for k in &outline {
                    let (u, v, _) = cam.project(k).unwrap();
                    u0 = u0.min(u);
                    v0 = v0.min(v);
                    u1 = u1.max(u);
                    v1 = v1.max(v);
                }
                let region = BBox::new(
                    (u0 - 2.0).max(0.0),
                    (v0 - 2.0).max(0.0),
                    (u1 + 2.0).min(wf),
                    (v1 + 2.0).min(hf),
                    1.0,
                )
                .unwrap();
                RegionView { view, region }
            })
            .collect();
        Self {
            bounds,
            center,
            half,
            rotation,
            views,
        }
    }

    /// Grid samples over the six faces, `n × n` per face.
    pub fn surface(&self, n: usize) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(6 * n * n);
        for axis in 0..3 {
            for s in [-1.0, 1.0] {
                for i in 0..n {
                    for j in 0..n {
                        let mut l = Vector3::zeros();
                        l[axis] = s;
                        l[(axis + 1) % 3] = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
                        l[(axis + 2) % 3] = -1.0 + 2.0 * (j as f64 + 0.5) / n as f64;
                        out.push(self.center + self.rotation * l.component_mul(&self.half));
                    }
                }
            }
        }
        out
    }

    pub fn on_box(&self, p: &Vector3<f64>) -> bool {
        let l = self.rotation.transpose() * (p - self.center);
        (0..3).all(|i| l[i].abs() <= self.half[i] + 1e-6)
    }
}
