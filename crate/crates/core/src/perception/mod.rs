//! From depth images and a detection box to an obstacle ellipsoid.
//!
//! The pipeline runs back-projection of every view, fusion, a strict
//! workspace crop, removal of the points farthest from the centroid, a
//! density-based cluster pick and finally the MVEE fit.

mod cluster;
pub mod io;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    fit_mvee, Ellipsoid, GeometryError, MveeConfig, PointCloud, DEFAULT_INFLATION_FLOOR, ROTATION_TOL,
};

pub use cluster::{largest_cluster, radius_clusters};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("depth grid has {got} values, expected {width}×{height}")]
    DepthSize { width: usize, height: usize, got: usize },
    #[error("invalid bounding box: {0}")]
    InvalidRegion(String),
    #[error("no pixel in the region carries valid depth")]
    EmptyRegion,
    #[error("cannot process an empty cloud")]
    EmptyCloud,
    #[error("every point was classified as noise")]
    NoCluster,
    #[error("pipeline stage `{0}` left no points")]
    PipelineEmpty(&'static str),
    #[error("invalid workspace bounds: {0}")]
    InvalidBounds(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Pinhole intrinsics `K` plus the rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    intrinsics: Matrix3<f64>,
    extrinsic: Matrix4<f64>,
}

impl CameraModel {
    pub fn new(intrinsics: Matrix3<f64>, extrinsic: Matrix4<f64>) -> Result<Self, PerceptionError> {
        let k = &intrinsics;
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(PerceptionError::InvalidCamera("focal lengths must be positive".into()));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(PerceptionError::InvalidCamera(
                "K must be upper triangular with K[2][2] = 1".into(),
            ));
        }
        let rot: Matrix3<f64> = extrinsic.fixed_view::<3, 3>(0, 0).into_owned();
        let orth = (rot.transpose() * rot - Matrix3::identity()).amax();
        if !(orth <= ROTATION_TOL) || !((rot.determinant() - 1.0).abs() <= ROTATION_TOL) {
            return Err(PerceptionError::InvalidCamera(
                "extrinsic rotation is not orthonormal".into(),
            ));
        }
        if extrinsic.fixed_view::<1, 4>(3, 0) != nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0) {
            return Err(PerceptionError::InvalidCamera(
                "extrinsic bottom row must be [0 0 0 1]".into(),
            ));
        }
        Ok(Self { intrinsics, extrinsic })
    }

    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, extrinsic: Matrix4<f64>) -> Result<Self, PerceptionError> {
        Self::new(Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0), extrinsic)
    }

    /// Camera at `eye` looking at `target`; camera axes x right, y down,
    /// z forward.
    pub fn look_at(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self, PerceptionError> {
        let z = (target - eye).normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(PerceptionError::InvalidCamera(
                "up vector is parallel to the view direction".into(),
            ));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let mut t = Matrix4::identity();
        t.fixed_view_mut::<3, 1>(0, 0).copy_from(&x);
        t.fixed_view_mut::<3, 1>(0, 1).copy_from(&y);
        t.fixed_view_mut::<3, 1>(0, 2).copy_from(&z);
        t.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye);
        Self::pinhole(fx, fy, cx, cy, t)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn extrinsic(&self) -> &Matrix4<f64> {
        &self.extrinsic
    }

    pub fn position(&self) -> Vector3<f64> {
        self.extrinsic.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.extrinsic.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Camera-frame ray through pixel `(u, v)` with unit depth.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let (fx, s, cx, fy, cy) = (k[(0, 0)], k[(0, 1)], k[(0, 2)], k[(1, 1)], k[(1, 2)]);
        let y = (v - cy) / fy;
        let x = (u - cx - s * y) / fx;
        Vector3::new(x, y, 1.0)
    }

    /// `T · [K⁻¹ · d · (u, v, 1); 1]`, truncated to three coordinates.
    pub fn backproject_pixel(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let cam = self.ray(u, v) * depth;
        let world = self.extrinsic * Vector4::new(cam.x, cam.y, cam.z, 1.0);
        Vector3::new(world.x, world.y, world.z)
    }

    /// Pixel coordinates and depth of a world point; `None` behind the camera.
    pub fn project(&self, world: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let cam = self.rotation().transpose() * (world - self.position());
        if !(cam.z > 0.0) {
            return None;
        }
        let px = self.intrinsics * (cam / cam.z);
        Some((px.x, px.y, cam.z))
    }
}

/// Row-major depth image in meters; non-positive or non-finite = invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthView {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    camera: CameraModel,
}

impl DepthView {
    pub fn new(width: usize, height: usize, depth: Vec<f64>, camera: CameraModel) -> Result<Self, PerceptionError> {
        if depth.len() != width * height {
            return Err(PerceptionError::DepthSize {
                width,
                height,
                got: depth.len(),
            });
        }
        Ok(Self {
            width,
            height,
            depth,
            camera,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn depth_values(&self) -> &[f64] {
        &self.depth
    }

    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    /// The whole image as a region.
    pub fn full_region(&self) -> BBox {
        BBox {
            u_min: 0.0,
            v_min: 0.0,
            u_max: (self.width - 1) as f64,
            v_max: (self.height - 1) as f64,
            confidence: 1.0,
        }
    }
}

pub fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Pixel-coordinate box; covers pixels `ceil(min) ..= floor(max)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    #[serde(default = "one")]
    pub confidence: f64,
}

fn one() -> f64 {
    1.0
}

impl BBox {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64, confidence: f64) -> Result<Self, PerceptionError> {
        let b = Self {
            u_min,
            v_min,
            u_max,
            v_max,
            confidence,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.u_min < self.u_max && self.v_min < self.v_max) {
            return Err(PerceptionError::InvalidRegion(format!(
                "need u_min < u_max and v_min < v_max, got {self:?}"
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(PerceptionError::InvalidRegion(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }

    fn check_inside(&self, view: &DepthView) -> Result<(), PerceptionError> {
        self.validate()?;
        if self.u_min < 0.0
            || self.v_min < 0.0
            || self.u_max > (view.width as f64 - 1.0)
            || self.v_max > (view.height as f64 - 1.0)
        {
            return Err(PerceptionError::InvalidRegion(format!(
                "{self:?} exceeds the {}×{} image",
                view.width, view.height
            )));
        }
        Ok(())
    }
}

/// Axis-aligned workspace; membership uses strict inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundsRecord", into = "BoundsRecord")]
pub struct WorkspaceBounds {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

impl WorkspaceBounds {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self, PerceptionError> {
        if !(0..3).all(|i| min[i] < max[i]) {
            return Err(PerceptionError::InvalidBounds(format!(
                "min {:?} must be below max {:?} componentwise",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> Vector3<f64> {
        self.min
    }

    pub fn max(&self) -> Vector3<f64> {
        self.max
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| self.min[i] < p[i] && p[i] < self.max[i])
    }
}

#[derive(Serialize, Deserialize)]
struct BoundsRecord {
    min: [f64; 3],
    max: [f64; 3],
}

impl TryFrom<BoundsRecord> for WorkspaceBounds {
    type Error = PerceptionError;
    fn try_from(r: BoundsRecord) -> Result<Self, Self::Error> {
        WorkspaceBounds::new(r.min.into(), r.max.into())
    }
}

impl From<WorkspaceBounds> for BoundsRecord {
    fn from(b: WorkspaceBounds) -> Self {
        Self {
            min: b.min.into(),
            max: b.max.into(),
        }
    }
}

/// Back-projects every valid-depth pixel inside `region`, row by row.
pub fn backproject(view: &DepthView, region: &BBox) -> Result<PointCloud, PerceptionError> {
    region.check_inside(view)?;
    let (u0, u1) = (region.u_min.ceil() as usize, region.u_max.floor() as usize);
    let (v0, v1) = (region.v_min.ceil() as usize, region.v_max.floor() as usize);
    let mut pts = Vec::new();
    for v in v0..=v1 {
        for u in u0..=u1 {
            let d = view.depth_at(u, v);
            if is_valid_depth(d) {
                pts.push(view.camera.backproject_pixel(u as f64, v as f64, d));
            }
        }
    }
    if pts.is_empty() {
        return Err(PerceptionError::EmptyRegion);
    }
    Ok(PointCloud::new(pts)?)
}

/// Concatenation in input order.
pub fn fuse_clouds(clouds: &[PointCloud]) -> PointCloud {
    let mut out = PointCloud::empty();
    for c in clouds {
        out.extend(c);
    }
    out
}

pub fn crop_workspace(cloud: &PointCloud, bounds: &WorkspaceBounds) -> PointCloud {
    cloud.filtered(|_, p| bounds.contains(p))
}

/// Number of points `trim_farthest` discards from `n`.
pub fn trim_count(n: usize, fraction: f64) -> usize {
    // The epsilon keeps products like 0.2·10 from rounding up to 3.
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Drops the `ceil(fraction·n)` points farthest from the centroid; among
/// equal distances the later-indexed point goes first.
pub fn trim_farthest(cloud: &PointCloud, fraction: f64) -> Result<PointCloud, PerceptionError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(PerceptionError::InvalidRegion(format!(
            "trim fraction {fraction} outside [0, 1)"
        )));
    }
    let centroid = cloud.centroid().ok_or(PerceptionError::EmptyCloud)?;
    let n = cloud.len();
    let drop = trim_count(n, fraction);
    if drop == 0 {
        return Ok(cloud.clone());
    }
    let dist: Vec<f64> = cloud.points().iter().map(|p| (p - centroid).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(b.cmp(&a)));
    let mut removed = vec![false; n];
    for &i in &order[..drop] {
        removed[i] = true;
    }
    Ok(cloud.filtered(|i, _| !removed[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub trim_fraction: f64,
    /// Neighborhood radius of the density clustering, meters.
    pub cluster_radius: f64,
    pub min_neighbors: usize,
    pub mvee_tolerance: f64,
    pub mvee_max_iterations: usize,
    /// Semi-axis floor for flat clouds, meters.
    pub inflation_floor: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            trim_fraction: 0.2,
            cluster_radius: 0.02,
            min_neighbors: 5,
            mvee_tolerance: 1e-7,
            mvee_max_iterations: 10_000,
            inflation_floor: DEFAULT_INFLATION_FLOOR,
        }
    }
}

impl PipelineConfig {
    pub fn mvee(&self) -> MveeConfig {
        MveeConfig {
            tolerance: self.mvee_tolerance,
            max_iterations: self.mvee_max_iterations,
            inflation_floor: Some(self.inflation_floor),
        }
    }
}

/// One camera image plus the detection box to cut from it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionView {
    pub view: DepthView,
    pub region: BBox,
}

/// Intermediate clouds of a pipeline run, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub ellipsoid: Ellipsoid,
    pub fused: PointCloud,
    pub cropped: PointCloud,
    pub trimmed: PointCloud,
    pub cluster: PointCloud,
}

pub fn obstacle_pipeline(
    views: &[RegionView],
    bounds: &WorkspaceBounds,
    config: &PipelineConfig,
) -> Result<Ellipsoid, PerceptionError> {
    obstacle_pipeline_detailed(views, bounds, config).map(|o| o.ellipsoid)
}

pub fn obstacle_pipeline_detailed(
    views: &[RegionView],
    bounds: &WorkspaceBounds,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PerceptionError> {
    let mut clouds = Vec::with_capacity(views.len());
    for rv in views {
        match backproject(&rv.view, &rv.region) {
            Ok(c) => clouds.push(c),
            Err(PerceptionError::EmptyRegion) => {}
            Err(e) => return Err(e),
        }
    }
    if clouds.is_empty() {
        return Err(PerceptionError::EmptyRegion);
    }
    let fused = fuse_clouds(&clouds);
    let cropped = crop_workspace(&fused, bounds);
    if cropped.is_empty() {
        return Err(PerceptionError::PipelineEmpty("crop_workspace"));
    }
    let trimmed = trim_farthest(&cropped, config.trim_fraction)?;
    if trimmed.is_empty() {
        return Err(PerceptionError::PipelineEmpty("trim_farthest"));
    }
    let cluster = largest_cluster(&trimmed, config.cluster_radius, config.min_neighbors)?;
    let ellipsoid = fit_mvee(&cluster, &config.mvee())?;
    Ok(PipelineOutput {
        ellipsoid,
        fused,
        cropped,
        trimmed,
        cluster,
    })
}
