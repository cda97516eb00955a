//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "spatial-bowl-1"
//! suite = "spatial"
//! level = 1
//! instruction = "Pick up the black bowl and place it on the plate"
//! hazard_name = "milk carton"
//! horizon = 300          # steps
//! dt = 0.05              # seconds
//! seed = 0
//! jitter = 0.01          # half-width of the uniform position jitter cube, m
//! margin = 0.0           # inflation of the injected obstacle ellipsoids, m
//! start = [-0.3, 0.0, 0.3]
//! waypoints = []         # intermediate targets before the goal
//! goal = [0.3, 0.0, 0.3]
//!
//! [workspace]
//! min = [-0.6, -0.6, 0.0]
//! max = [0.6, 0.6, 0.9]
//!
//! [ee]                   # optional, defaults to the gripper proxy
//! semi_axes = [0.06, 0.12, 0.11]
//! offset = [0.0, 0.0, 0.0]
//!
//! [policy]               # optional
//! kp = 50.0
//! v_max = 0.5
//! capture_radius = 0.02
//! grip_at = [0]
//!
//! [filter]               # optional, filter parameters
//! alpha_gain = 10.0
//!
//! [[obstacles]]
//! name = "milk carton"
//! center = [0.0, 0.02, 0.3]
//! semi_axes = [0.04, 0.04, 0.1]
//! yaw_deg = 0.0
//! ```
//!
//! An optional `[perception]` table with `[[perception.views]]` cameras
//! replaces direct injection: the true scene is rendered to depth, the hazard
//! is boxed from its silhouette and the obstacle ellipsoid comes from the
//! perception pipeline.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raster::{self, Shape};
use super::{PolicySpec, SimError};
use crate::assessment::{
    ground_object, identify_hazard, AssessmentError, AssessorBackend, HazardQuery, MockAssessor, MockDetector,
};
use crate::barrier::EEGeometry;
use crate::filter::FilterParams;
use crate::geometry::{axis_angle, Ellipsoid};
use crate::perception::{obstacle_pipeline, BBox, CameraModel, PipelineConfig, RegionView, WorkspaceBounds};

fn default_horizon() -> usize {
    300
}

fn default_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub suite: String,
    #[serde(default)]
    pub level: u8,
    #[serde(default)]
    pub instruction: String,
    pub hazard_name: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub margin: f64,
    pub start: [f64; 3],
    #[serde(default)]
    pub waypoints: Vec<[f64; 3]>,
    pub goal: [f64; 3],
    pub workspace: WorkspaceBounds,
    #[serde(default)]
    pub ee: EeSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub filter: FilterParams,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub perception: Option<PerceptionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EeSpec {
    pub semi_axes: [f64; 3],
    #[serde(default)]
    pub offset: [f64; 3],
}

impl Default for EeSpec {
    fn default() -> Self {
        let g = EEGeometry::panda_gripper();
        Self {
            semi_axes: g.semi_axes.into(),
            offset: g.offset.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub name: String,
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    /// Rotation about the vertical axis, degrees.
    #[serde(default)]
    pub yaw_deg: f64,
}

impl ObstacleSpec {
    pub fn ellipsoid_at(&self, center: Vector3<f64>) -> Result<Ellipsoid, SimError> {
        let rot = axis_angle(&Vector3::z(), self.yaw_deg.to_radians());
        Ok(Ellipsoid::new(center, self.semi_axes.into(), rot)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionSpec {
    pub views: Vec<ViewSpec>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    /// Pixels added around the hazard silhouette on every side of the box.
    #[serde(default = "default_bbox_pad")]
    pub bbox_pad: f64,
}

fn default_bbox_pad() -> f64 {
    2.0
}

fn default_up() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
}

impl ViewSpec {
    pub fn camera(&self) -> Result<CameraModel, SimError> {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        Ok(CameraModel::look_at(
            self.fx,
            self.fy,
            cx,
            cy,
            self.eye.into(),
            self.target.into(),
            self.up.into(),
        )?)
    }
}

/// A scenario instantiated for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSetup {
    /// Ground-truth obstacles after jitter, in file order.
    pub obstacles_true: Vec<Ellipsoid>,
    /// What the filter is told about the identified hazard.
    pub filter_obstacles: Vec<Ellipsoid>,
    /// Waypoints followed by the jittered goal.
    pub route: Vec<Vector3<f64>>,
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::ScenarioInvalid {
            path: origin.to_string(),
            msg: e.message().to_string(),
        })?;
        s.validate().map_err(|msg| SimError::ScenarioInvalid {
            path: origin.to_string(),
            msg,
        })?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|e| SimError::ScenarioInvalid {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() || self.name.contains(char::is_whitespace) {
            return Err(format!("name must be a nonempty word, got {:?}", self.name));
        }
        if self.horizon == 0 {
            return Err("horizon must be positive".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.jitter >= 0.0 && self.margin >= 0.0) {
            return Err("jitter and margin must be nonnegative".into());
        }
        if !self.workspace.contains(&self.start()) {
            return Err("start lies outside the workspace".into());
        }
        if !self.workspace.contains(&self.goal()) {
            return Err("goal lies outside the workspace".into());
        }
        let route_len = self.waypoints.len() + 1;
        if let Some(&g) = self.policy.grip_at.iter().find(|&&g| g >= route_len) {
            return Err(format!(
                "grip_at index {g} is past the goal (route has {route_len} points)"
            ));
        }
        if !(self.policy.kp > 0.0 && self.policy.v_max > 0.0 && self.policy.capture_radius > 0.0) {
            return Err("policy gains must be positive".into());
        }
        self.filter.validate().map_err(|e| e.to_string())?;
        self.ee_geometry().map_err(|e| e.to_string())?;
        for o in &self.obstacles {
            o.ellipsoid_at(o.center.into())
                .map_err(|e| format!("obstacle {:?}: {e}", o.name))?;
        }
        if !self.obstacles.is_empty() && !self.obstacles.iter().any(|o| o.name == self.hazard_name) {
            return Err(format!("hazard {:?} is not among the obstacles", self.hazard_name));
        }
        if let Some(p) = &self.perception {
            if p.views.is_empty() {
                return Err("perception needs at least one view".into());
            }
            for v in &p.views {
                v.camera().map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    pub fn start(&self) -> Vector3<f64> {
        self.start.into()
    }

    pub fn goal(&self) -> Vector3<f64> {
        self.goal.into()
    }

    pub fn ee_geometry(&self) -> Result<EEGeometry, SimError> {
        Ok(EEGeometry::new(self.ee.semi_axes.into(), self.ee.offset.into())?)
    }

    /// The hazard query for this scenario's instruction and obstacle names.
    pub fn hazard_query(&self, image_ref: &str) -> Result<HazardQuery, SimError> {
        Ok(HazardQuery::new(
            self.instruction_or_name(),
            image_ref,
            self.obstacle_names(),
        )?)
    }

    /// Applies the seeded jitter and resolves the hazard named by the mock
    /// assessor.
    pub fn setup(&self, seed: u64) -> Result<EpisodeSetup, SimError> {
        let query = self.hazard_query(&format!("{}.png", self.name))?;
        let assessor = MockAssessor {
            hazard_name: self.hazard_name.clone(),
        };
        let name = identify_hazard(&query, &assessor as &dyn AssessorBackend)?.object_name;
        self.setup_for(seed, &name)
    }

    /// Like [`Scenario::setup`] with an externally identified hazard. A name
    /// that matches no obstacle is `NotFound`.
    pub fn setup_for(&self, seed: u64, hazard: &str) -> Result<EpisodeSetup, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = self.jitter;
        let mut offset = || Vector3::from_fn(|_, _| if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 });
        let mut obstacles_true = Vec::with_capacity(self.obstacles.len());
        for o in &self.obstacles {
            let c = Vector3::from(o.center) + offset();
            obstacles_true.push(o.ellipsoid_at(c)?);
        }
        let goal = self.goal() + offset();
        let mut route: Vec<Vector3<f64>> = self.waypoints.iter().map(|&w| w.into()).collect();
        route.push(goal);

        let filter_obstacles = if self.obstacles.is_empty() {
            Vec::new()
        } else {
            self.resolve_hazard(&obstacles_true, hazard)?
        };
        Ok(EpisodeSetup {
            obstacles_true,
            filter_obstacles,
            route,
        })
    }

    fn resolve_hazard(&self, obstacles_true: &[Ellipsoid], name: &str) -> Result<Vec<Ellipsoid>, SimError> {
        let hits: Vec<usize> = (0..self.obstacles.len())
            .filter(|&i| self.obstacles[i].name == name)
            .collect();
        if hits.is_empty() {
            return Err(AssessmentError::NotFound(name.to_string()).into());
        }

        let mut out = Vec::with_capacity(hits.len());
        for i in hits {
            let e = match &self.perception {
                None => obstacles_true[i],
                Some(spec) => self.perceive(spec, obstacles_true, i, name)?,
            };
            out.push(if self.margin > 0.0 { e.inflated(self.margin)? } else { e });
        }
        Ok(out)
    }

    /// Renders every view, boxes obstacle `i` from its silhouette and runs the
    /// perception pipeline on the boxed pixels.
    fn perceive(
        &self,
        spec: &PerceptionSpec,
        obstacles_true: &[Ellipsoid],
        i: usize,
        name: &str,
    ) -> Result<Ellipsoid, SimError> {
        let mut shapes: Vec<Shape> = obstacles_true.iter().copied().map(Shape::Ellipsoid).collect();
        shapes.push(raster::table_under(&self.workspace));
        let mut views = Vec::with_capacity(spec.views.len());
        for v in &spec.views {
            let camera = v.camera()?;
            let view = raster::render_depth(&camera, v.width, v.height, &shapes)?;
            let Some(silhouette) =
                raster::silhouette_box(&camera, v.width, v.height, &obstacles_true[i], spec.bbox_pad)
            else {
                continue;
            };
            let mut detector = MockDetector::default();
            detector.boxes.insert(name.to_string(), silhouette);
            let region: BBox = ground_object(name, "", &detector)?;
            views.push(RegionView { view, region });
        }
        Ok(obstacle_pipeline(&views, &self.workspace, &spec.pipeline)?)
    }

    fn instruction_or_name(&self) -> String {
        if self.instruction.trim().is_empty() {
            self.name.clone()
        } else {
            self.instruction.clone()
        }
    }

    fn obstacle_names(&self) -> Vec<String> {
        self.obstacles.iter().map(|o| o.name.clone()).collect()
    }
}
