//! Kinematic tabletop harness: a translational plant, scripted nominal
//! policies, scenario files, collision ground truth and episode metrics.

pub mod raster;
pub mod report;
pub mod scenario;
pub mod suite;
pub mod trace;

use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::AssessmentError;
use crate::barrier::{AugmentedState, EEGeometry};
use crate::filter::{self, constraint_row, filter_step_report, Action, FilterError, FilterParams, FilterState};
use crate::geometry::{ellipsoids_intersect, Ellipsoid, GeometryError};
use crate::perception::PerceptionError;

pub use report::{Metrics, SuiteTable};
pub use scenario::{EpisodeSetup, ObstacleSpec, Scenario};
pub use trace::{Trace, TraceStep};

/// Distance to the goal that counts as arrival, meters.
pub const GOAL_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario {path}: {msg}")]
    ScenarioInvalid { path: String, msg: String },
    #[error("no episode results to aggregate")]
    EmptyResults,
    #[error("trace line {line}: {msg}")]
    TraceFormat { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Assessment(#[from] AssessmentError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Explicit Euler step of `ṗ = 0.2·u`.
pub fn step_plant(p: &Vector3<f64>, u_v: &Vector3<f64>, dt: f64) -> Vector3<f64> {
    p + u_v * (filter::PLANT_GAIN * dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySpec {
    /// Proportional gain on the position error.
    pub kp: f64,
    /// Componentwise bound on the velocity command.
    pub v_max: f64,
    /// Distance at which an intermediate waypoint counts as reached.
    pub capture_radius: f64,
    /// Route indices at which the gripper toggles; the goal is the last
    /// route index.
    pub grip_at: Vec<usize>,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self {
            kp: 50.0,
            v_max: 0.5,
            capture_radius: 0.02,
            grip_at: Vec::new(),
        }
    }
}

pub const GRIPPER_OPEN: f64 = -1.0;
pub const GRIPPER_CLOSED: f64 = 1.0;

/// Proportional waypoint follower standing in for the learned policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedPolicy {
    spec: PolicySpec,
    route: Vec<Vector3<f64>>,
    index: usize,
    gripper: f64,
    toggles_done: usize,
}

impl ScriptedPolicy {
    /// `route` ends at the goal and must be nonempty.
    pub fn new(spec: PolicySpec, route: Vec<Vector3<f64>>) -> Self {
        assert!(!route.is_empty(), "route needs at least the goal");
        Self {
            spec,
            route,
            index: 0,
            gripper: GRIPPER_OPEN,
            toggles_done: 0,
        }
    }

    pub fn target(&self) -> Vector3<f64> {
        self.route[self.index]
    }

    pub fn goal(&self) -> Vector3<f64> {
        *self.route.last().expect("nonempty route")
    }

    pub fn gripper(&self) -> f64 {
        self.gripper
    }

    fn toggle_if_scheduled(&mut self, i: usize) {
        let scheduled = self.spec.grip_at.iter().filter(|&&g| g == i).count();
        for _ in 0..scheduled {
            self.gripper = -self.gripper;
            self.toggles_done += 1;
        }
    }

    /// Advances past captured waypoints, then returns the command for `p`.
    pub fn act(&mut self, p: &Vector3<f64>) -> Action {
        let last = self.route.len() - 1;
        while self.index < last && (self.route[self.index] - p).norm() < self.spec.capture_radius {
            self.toggle_if_scheduled(self.index);
            self.index += 1;
        }
        if self.index == last
            && self.toggles_done < self.spec.grip_at.len()
            && (self.goal() - p).norm() < GOAL_TOLERANCE
        {
            self.toggle_if_scheduled(last);
        }
        let v = ((self.target() - p) * self.spec.kp).map(|c| c.clamp(-self.spec.v_max, self.spec.v_max));
        Action::new(v, Vector3::zeros(), self.gripper)
    }

    /// All waypoints visited and every scheduled gripper toggle done.
    pub fn sequence_complete(&self) -> bool {
        self.index == self.route.len() - 1 && self.toggles_done == self.spec.grip_at.len()
    }
}

/// Cheap bounding-sphere rejection before the exact ellipsoid test.
fn may_touch(a: &Ellipsoid, b: &Ellipsoid) -> bool {
    (a.center() - b.center()).norm() <= a.semi_axes().max() + b.semi_axes().max()
}

pub fn check_collision(
    p_ef: &Vector3<f64>,
    r_ef: &Matrix3<f64>,
    geom: &EEGeometry,
    obstacles: &[Ellipsoid],
) -> Result<bool, GeometryError> {
    let ee = geom.ellipsoid(p_ef, r_ef)?;
    Ok(obstacles
        .iter()
        .any(|o| may_touch(&ee, o) && ellipsoids_intersect(&ee, o)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub collided: bool,
    pub succeeded: bool,
    pub steps: usize,
    /// Steps at which the filter changed the nominal action.
    pub interventions: usize,
    /// Smallest barrier value along the trace (`+∞` with no obstacles).
    pub min_h: f64,
}

/// Runs one episode; see [`run_episode_timed`].
pub fn run_episode(scenario: &Scenario, filter_on: bool, seed: u64) -> Result<(Trace, EpisodeResult), SimError> {
    run_episode_timed(scenario, filter_on, seed).map(|(t, r, _)| (t, r))
}

/// Runs one episode and also returns the wall time of every filter step
/// (empty with the filter off).
///
/// The loop is policy → filter → plant → collision check → success check.
/// Collisions are recorded but do not end the episode. Row `t` of the trace
/// holds the state before step `t` and the commands issued at it.
pub fn run_episode_timed(
    scenario: &Scenario,
    filter_on: bool,
    seed: u64,
) -> Result<(Trace, EpisodeResult, Vec<Duration>), SimError> {
    run_setup(scenario, &scenario.setup(seed)?, filter_on, seed)
}

/// Runs one timed episode against an externally identified hazard.
pub fn run_episode_for(
    scenario: &Scenario,
    hazard: &str,
    filter_on: bool,
    seed: u64,
) -> Result<(Trace, EpisodeResult, Vec<Duration>), SimError> {
    run_setup(scenario, &scenario.setup_for(seed, hazard)?, filter_on, seed)
}

fn run_setup(
    scenario: &Scenario,
    setup: &EpisodeSetup,
    filter_on: bool,
    seed: u64,
) -> Result<(Trace, EpisodeResult, Vec<Duration>), SimError> {
    let geom = scenario.ee_geometry()?;
    let params = scenario.filter;
    let r_ef = Matrix3::identity();
    let dt = scenario.dt;
    let mut p = scenario.start();
    let mut policy = ScriptedPolicy::new(scenario.policy.clone(), setup.route.clone());

    // With the filter off the virtual states still follow their reference
    // law so the trace reports a barrier value.
    let mut fstate = match FilterState::initialize(&p, &r_ef, &geom, &setup.filter_obstacles) {
        Ok(s) => Some(s),
        Err(e @ FilterError::UnsafeStart { .. }) if filter_on => return Err(e.into()),
        Err(_) => None,
    };

    let mut trace = Trace::new(&scenario.name, seed, filter_on, scenario.margin, dt);
    let mut latencies = Vec::new();
    let mut collided = false;
    let mut succeeded = false;
    let mut interventions = 0;
    let mut min_h = f64::INFINITY;

    for t in 0..scenario.horizon {
        let u_vla = policy.act(&p);
        let (u_safe, h, active) = match (&mut fstate, filter_on) {
            (Some(state), true) => {
                let start = Instant::now();
                let (safe, next, report) =
                    filter_step_report(&u_vla, &p, &r_ef, &geom, &setup.filter_obstacles, state, dt, &params)?;
                latencies.push(start.elapsed());
                *state = next;
                (
                    safe,
                    report.h.iter().copied().fold(f64::INFINITY, f64::min),
                    report.active,
                )
            }
            (Some(state), false) => (
                u_vla,
                shadow_virtual_step(&p, &r_ef, &geom, setup, state, dt, &params),
                false,
            ),
            (None, _) => (u_vla, f64::NAN, false),
        };
        if active {
            interventions += 1;
        }
        min_h = min_h.min(h);
        let collided_now = check_collision(&p, &r_ef, &geom, &setup.obstacles_true)?;
        collided |= collided_now;
        trace.steps.push(TraceStep {
            t,
            p,
            h,
            u_vla,
            u_safe,
            active,
            collided: collided_now,
        });

        p = step_plant(&p, &u_safe.v, dt);
        if (p - policy.goal()).norm() < GOAL_TOLERANCE && policy.sequence_complete() {
            succeeded = true;
            break;
        }
    }
    collided |= check_collision(&p, &r_ef, &geom, &setup.obstacles_true)?;

    let result = EpisodeResult {
        collided,
        succeeded,
        steps: trace.steps.len(),
        interventions,
        min_h,
    };
    Ok((trace, result, latencies))
}

/// Advances the virtual states along their reference law only and returns
/// the smallest pre-step barrier value.
fn shadow_virtual_step(
    p: &Vector3<f64>,
    r_ef: &Matrix3<f64>,
    geom: &EEGeometry,
    setup: &EpisodeSetup,
    state: &mut FilterState,
    dt: f64,
    params: &FilterParams,
) -> f64 {
    let p_ep = crate::barrier::ee_center(p, r_ef, geom);
    let mut h_min = f64::INFINITY;
    for (obstacle, p_s) in setup.filter_obstacles.iter().zip(state.virtual_states.iter_mut()) {
        let aug = AugmentedState {
            p_ep,
            r_ef: *r_ef,
            p_s: *p_s,
        };
        let (row, h) = constraint_row(&aug, geom, obstacle, params);
        h_min = h_min.min(h);
        *p_s = (*p_s + row.reference * dt).normalize();
    }
    h_min
}
