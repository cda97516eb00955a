//! The safety layer: per-step minimal modification of a nominal action.
//!
//! Each step linearizes `ḣ ≥ −α(h)` around the current augmented state,
//! solves the QP of [`qp`], forwards the corrected translational command and
//! integrates the virtual states on the sphere.

pub mod qp;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{barrier_gradient, ee_center, max_barrier_over_sphere, tangential, AugmentedState, EEGeometry};
use crate::geometry::{Ellipsoid, GeometryError};

pub use qp::{CbfRow, QpSolution};

/// Position gain of the translational plant `ṗ = 0.2 u`.
pub const PLANT_GAIN: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("unsafe start: best achievable barrier value {h} is not positive")]
    UnsafeStart { h: f64 },
    #[error("constraint row is numerically zero but violated by {violation}")]
    DegenerateConstraint { violation: f64 },
    #[error("barrier constraints admit no common solution")]
    Infeasible,
    #[error("{0} simultaneous constraints exceed the active-set limit")]
    TooManyConstraints(usize),
    #[error("filter state tracks {state} obstacles but {given} were given")]
    ObstacleCountMismatch { state: usize, given: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `u = [v, ω, g]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Action {
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub gripper: f64,
}

impl Action {
    pub fn new(v: Vector3<f64>, omega: Vector3<f64>, gripper: f64) -> Self {
        Self { v, omega, gripper }
    }

    pub fn translational(v: Vector3<f64>) -> Self {
        Self { v, ..Self::default() }
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(self.omega.iter()).all(|x| x.is_finite()) && self.gripper.is_finite()
    }

    /// `[vx, vy, vz, ωx, ωy, ωz, g]`.
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.v.x,
            self.v.y,
            self.v.z,
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.gripper,
        ]
    }

    pub fn from_array(a: &[f64; 7]) -> Self {
        Self {
            v: Vector3::new(a[0], a[1], a[2]),
            omega: Vector3::new(a[3], a[4], a[5]),
            gripper: a[6],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// Gain γ of the linear class-K∞ function `α(h) = γh`.
    pub alpha_gain: f64,
    /// Gain k of the virtual-state reference law.
    pub virtual_gain: f64,
    /// Weight of the virtual-input deviation in the QP cost.
    pub virtual_weight: f64,
    /// Obstacles whose barrier exceeds this distance impose no constraint.
    pub activation_distance: f64,
    pub plant_gain: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            alpha_gain: 10.0,
            virtual_gain: 10.0,
            virtual_weight: 1.0,
            activation_distance: f64::INFINITY,
            plant_gain: PLANT_GAIN,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), FilterError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(FilterError::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("alpha_gain", self.alpha_gain)?;
        positive("virtual_gain", self.virtual_gain)?;
        positive("virtual_weight", self.virtual_weight)?;
        positive("plant_gain", self.plant_gain)?;
        if !(self.activation_distance > 0.0) {
            return Err(FilterError::InvalidArgument(
                "activation_distance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `α(h) = γh`, odd extension for negative `h`.
pub fn alpha(h: f64, params: &FilterParams) -> f64 {
    params.alpha_gain * h
}

/// Per-episode filter memory: one virtual state per obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub virtual_states: Vec<Vector3<f64>>,
    /// Smallest barrier value seen at the last step (`+∞` with no obstacles).
    pub last_h: f64,
    pub intervened: bool,
}

impl FilterState {
    /// Starts every virtual state at the maximizer of `h`, so the initial
    /// barrier equals the (approximate) true distance to each obstacle.
    pub fn initialize(
        p_ef: &Vector3<f64>,
        r_ef: &Matrix3<f64>,
        geom: &EEGeometry,
        obstacles: &[Ellipsoid],
    ) -> Result<Self, FilterError> {
        let mut virtual_states = Vec::with_capacity(obstacles.len());
        let mut last_h = f64::INFINITY;
        for obstacle in obstacles {
            let (p_s, h) = init_virtual_state_with_value(p_ef, r_ef, geom, obstacle)?;
            virtual_states.push(p_s);
            last_h = last_h.min(h);
        }
        Ok(Self {
            virtual_states,
            last_h,
            intervened: false,
        })
    }

    /// Virtual state of the first obstacle.
    pub fn p_s(&self) -> Option<Vector3<f64>> {
        self.virtual_states.first().copied()
    }
}

pub fn init_virtual_state(
    p_ef: &Vector3<f64>,
    r_ef: &Matrix3<f64>,
    geom: &EEGeometry,
    obstacle: &Ellipsoid,
) -> Result<Vector3<f64>, FilterError> {
    init_virtual_state_with_value(p_ef, r_ef, geom, obstacle).map(|(p, _)| p)
}

fn init_virtual_state_with_value(
    p_ef: &Vector3<f64>,
    r_ef: &Matrix3<f64>,
    geom: &EEGeometry,
    obstacle: &Ellipsoid,
) -> Result<(Vector3<f64>, f64), FilterError> {
    let p_ep = ee_center(p_ef, r_ef, geom);
    let (p_s, h) = max_barrier_over_sphere(&p_ep, r_ef, geom, obstacle);
    if !(h > 0.0) {
        return Err(FilterError::UnsafeStart { h });
    }
    Ok((p_s, h))
}

/// Reference law for the virtual state: `k·Π_{p_s}(∂h/∂p_s)`.
pub fn nominal_virtual_control(
    state: &AugmentedState,
    geom: &EEGeometry,
    obstacle: &Ellipsoid,
    params: &FilterParams,
) -> Vector3<f64> {
    let eval = barrier_gradient(state, geom, obstacle);
    tangential(&eval.grad_s, &state.p_s) * params.virtual_gain
}

/// Builds the linearized constraint row for one obstacle.
pub fn constraint_row(
    state: &AugmentedState,
    geom: &EEGeometry,
    obstacle: &Ellipsoid,
    params: &FilterParams,
) -> (CbfRow, f64) {
    let eval = barrier_gradient(state, geom, obstacle);
    let b = tangential(&eval.grad_s, &state.p_s);
    let row = CbfRow {
        a: eval.grad_p * params.plant_gain,
        b,
        rhs: -alpha(eval.h, params),
        reference: b * params.virtual_gain,
    };
    (row, eval.h)
}

/// Single-obstacle safety QP. Returns `(u_safe_v, u_ps, active)`.
pub fn solve_safety_qp(
    u_vla_v: &Vector3<f64>,
    state: &AugmentedState,
    geom: &EEGeometry,
    obstacle: &Ellipsoid,
    params: &FilterParams,
) -> Result<(Vector3<f64>, Vector3<f64>, bool), FilterError> {
    let (row, _) = constraint_row(state, geom, obstacle, params);
    let sol = qp::solve(u_vla_v, &[row], params.virtual_weight)?;
    Ok((sol.u_v, sol.u_ps[0], sol.active))
}

/// Per-step diagnostics alongside the safe action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Barrier value per obstacle at the pre-step state.
    pub h: Vec<f64>,
    pub u_ps: Vec<Vector3<f64>>,
    pub rows: Vec<CbfRow>,
    pub active: bool,
}

/// One pass of the control loop: filter the nominal action and advance the
/// virtual states. `ω` and the gripper command pass through untouched; when
/// no constraint binds, the returned action is the input action itself.
#[allow(clippy::too_many_arguments)]
pub fn filter_step(
    action: &Action,
    p_ef: &Vector3<f64>,
    r_ef: &Matrix3<f64>,
    geom: &EEGeometry,
    obstacles: &[Ellipsoid],
    fstate: &FilterState,
    dt: f64,
    params: &FilterParams,
) -> Result<(Action, FilterState), FilterError> {
    filter_step_report(action, p_ef, r_ef, geom, obstacles, fstate, dt, params).map(|(a, s, _)| (a, s))
}

#[allow(clippy::too_many_arguments)]
pub fn filter_step_report(
    action: &Action,
    p_ef: &Vector3<f64>,
    r_ef: &Matrix3<f64>,
    geom: &EEGeometry,
    obstacles: &[Ellipsoid],
    fstate: &FilterState,
    dt: f64,
    params: &FilterParams,
) -> Result<(Action, FilterState, StepReport), FilterError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FilterError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if fstate.virtual_states.len() != obstacles.len() {
        return Err(FilterError::ObstacleCountMismatch {
            state: fstate.virtual_states.len(),
            given: obstacles.len(),
        });
    }
    let p_ep = ee_center(p_ef, r_ef, geom);

    let mut rows = Vec::with_capacity(obstacles.len());
    let mut hs = Vec::with_capacity(obstacles.len());
    // Constraint index per obstacle; None when beyond the activation distance.
    let mut slots = Vec::with_capacity(obstacles.len());
    let mut free_refs = Vec::with_capacity(obstacles.len());
    for (obstacle, p_s) in obstacles.iter().zip(&fstate.virtual_states) {
        let state = AugmentedState {
            p_ep,
            r_ef: *r_ef,
            p_s: *p_s,
        };
        let (row, h) = constraint_row(&state, geom, obstacle, params);
        hs.push(h);
        if h > params.activation_distance {
            slots.push(None);
            free_refs.push(row.reference);
        } else {
            slots.push(Some(rows.len()));
            free_refs.push(Vector3::zeros());
            rows.push(row);
        }
    }

    let sol = qp::solve(&action.v, &rows, params.virtual_weight)?;

    let mut u_ps_all = Vec::with_capacity(obstacles.len());
    let mut next_states = Vec::with_capacity(obstacles.len());
    for (j, p_s) in fstate.virtual_states.iter().enumerate() {
        let u_ps = match slots[j] {
            Some(k) => sol.u_ps[k],
            None => free_refs[j],
        };
        next_states.push((p_s + u_ps * dt).normalize());
        u_ps_all.push(u_ps);
    }

    let safe = if sol.active {
        Action { v: sol.u_v, ..*action }
    } else {
        *action
    };
    let next = FilterState {
        virtual_states: next_states,
        last_h: hs.iter().copied().fold(f64::INFINITY, f64::min),
        intervened: sol.active,
    };
    let report = StepReport {
        h: hs,
        u_ps: u_ps_all,
        rows,
        active: sol.active,
    };
    Ok((safe, next, report))
}
