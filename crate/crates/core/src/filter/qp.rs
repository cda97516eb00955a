//! Closed-form / enumerated active-set solution of the safety QP.
//!
//! Decision variables are the translational command `u_v` and one tangential
//! virtual input `u_ps_j` per obstacle:
//!
//! ```text
//! min  ‖u_v − u_ref‖² + w Σ_j ‖u_ps_j − ref_j‖²
//! s.t. a_j·u_v + b_j·u_ps_j ≥ rhs_j     for every row j
//! ```
//!
//! where `b_j` and `ref_j` already lie in the tangent space of the sphere at
//! `p_s_j`, so every correction `λ_j b_j / w` keeps `p_s_j·u_ps_j = 0`.

use nalgebra::{DMatrix, DVector, Vector3};

use super::FilterError;

/// Below this norm a constraint row counts as numerically zero.
pub const DEGENERATE_ROW_TOL: f64 = 1e-12;
/// Rows with more members than this are rejected; enumeration is 2^m.
pub const MAX_ROWS: usize = 12;

/// One linearized barrier constraint `a·u_v + b·u_ps ≥ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfRow {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub rhs: f64,
    /// Reference virtual input for this row's virtual state.
    pub reference: Vector3<f64>,
}

impl CbfRow {
    pub fn value(&self, u_v: &Vector3<f64>, u_ps: &Vector3<f64>) -> f64 {
        self.a.dot(u_v) + self.b.dot(u_ps) - self.rhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_v: Vector3<f64>,
    pub u_ps: Vec<Vector3<f64>>,
    /// Multipliers, zero for inactive rows.
    pub multipliers: Vec<f64>,
    pub active: bool,
}

/// Solves the weighted projection of `(u_ref, references)` onto the
/// intersection of half-spaces. When the reference already satisfies every
/// row it is returned untouched and `active` is false.
pub fn solve(u_ref: &Vector3<f64>, rows: &[CbfRow], weight: f64) -> Result<QpSolution, FilterError> {
    let m = rows.len();
    let references: Vec<Vector3<f64>> = rows.iter().map(|r| r.reference).collect();
    // v_j > 0 means row j is violated by the reference.
    let violation: Vec<f64> = rows.iter().map(|r| -r.value(u_ref, &r.reference)).collect();
    if violation.iter().all(|&v| v <= 0.0) {
        return Ok(QpSolution {
            u_v: *u_ref,
            u_ps: references,
            multipliers: vec![0.0; m],
            active: false,
        });
    }
    for (row, &v) in rows.iter().zip(&violation) {
        let coeff = (row.a.norm_squared() + row.b.norm_squared()).sqrt();
        if v > 0.0 && coeff < DEGENERATE_ROW_TOL {
            return Err(FilterError::DegenerateConstraint { violation: v });
        }
    }

    let gram = |j: usize, k: usize| {
        let mut g = rows[j].a.dot(&rows[k].a);
        if j == k {
            g += rows[j].b.norm_squared() / weight;
        }
        g
    };

    let lambda = if m == 1 {
        vec![violation[0] / gram(0, 0)]
    } else {
        enumerate_active_sets(m, &gram, &violation)?
    };

    let mut u_v = *u_ref;
    let mut u_ps = references;
    for (j, row) in rows.iter().enumerate() {
        u_v += row.a * lambda[j];
        u_ps[j] += row.b * (lambda[j] / weight);
    }
    Ok(QpSolution {
        u_v,
        u_ps,
        multipliers: lambda,
        active: true,
    })
}

/// KKT search over active sets in order of size. The dual of a strictly
/// convex QP has a unique optimum, so the first consistent set is it.
fn enumerate_active_sets(
    m: usize,
    gram: &dyn Fn(usize, usize) -> f64,
    violation: &[f64],
) -> Result<Vec<f64>, FilterError> {
    if m > MAX_ROWS {
        return Err(FilterError::TooManyConstraints(m));
    }
    let mut masks: Vec<u32> = (1..(1u32 << m)).collect();
    masks.sort_by_key(|mask| (mask.count_ones(), *mask));
    let tol = 1e-12 * violation.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for mask in masks {
        let set: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let g = DMatrix::from_fn(set.len(), set.len(), |r, c| gram(set[r], set[c]));
        let rhs = DVector::from_iterator(set.len(), set.iter().map(|&j| violation[j]));
        let Some(sol) = g.lu().solve(&rhs) else {
            continue;
        };
        if sol.iter().any(|&l| !l.is_finite() || l < -tol) {
            continue;
        }
        let mut lambda = vec![0.0; m];
        for (k, &j) in set.iter().enumerate() {
            lambda[j] = sol[k].max(0.0);
        }
        let feasible = (0..m).all(|j| {
            let lhs: f64 = (0..m).map(|k| gram(j, k) * lambda[k]).sum();
            lhs >= violation[j] - tol
        });
        if feasible {
            return Ok(lambda);
        }
    }
    Err(FilterError::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfspace_projection_1d() {
        // min ‖u − (1,0,0)‖² s.t. −u_x ≥ 0.
        let row = CbfRow {
            a: Vector3::new(-1.0, 0.0, 0.0),
            b: Vector3::zeros(),
            rhs: 0.0,
            reference: Vector3::zeros(),
        };
        let sol = solve(&Vector3::x(), &[row], 1.0).unwrap();
        assert!(sol.active);
        assert_eq!(sol.u_v, Vector3::zeros());
    }

    #[test]
    fn inactive_is_identity() {
        let row = CbfRow {
            a: Vector3::new(-1.0, 0.0, 0.0),
            b: Vector3::y(),
            rhs: -5.0,
            reference: Vector3::new(0.0, 0.3, 0.0),
        };
        let u = Vector3::new(0.1, 0.2, 0.3);
        let sol = solve(&u, &[row], 1.0).unwrap();
        assert!(!sol.active);
        assert_eq!(sol.u_v, u);
        assert_eq!(sol.u_ps[0], row.reference);
    }

    #[test]
    fn zero_row_violated_is_degenerate() {
        let row = CbfRow {
            a: Vector3::zeros(),
            b: Vector3::zeros(),
            rhs: 1.0,
            reference: Vector3::zeros(),
        };
        assert!(matches!(
            solve(&Vector3::zeros(), &[row], 1.0),
            Err(FilterError::DegenerateConstraint { .. })
        ));
    }

    #[test]
    fn two_rows_corner_solution() {
        // u ≥ 0 in x and y from reference (−1, −1, 0): optimum at origin.
        let rows = [
            CbfRow {
                a: Vector3::x(),
                b: Vector3::zeros(),
                rhs: 0.0,
                reference: Vector3::zeros(),
            },
            CbfRow {
                a: Vector3::y(),
                b: Vector3::zeros(),
                rhs: 0.0,
                reference: Vector3::zeros(),
            },
        ];
        let sol = solve(&Vector3::new(-1.0, -1.0, 0.0), &rows, 1.0).unwrap();
        assert!(sol.u_v.norm() < 1e-15);
        assert_eq!(sol.multipliers, vec![1.0, 1.0]);

        // Only the first row binds when the reference already satisfies y.
        let sol = solve(&Vector3::new(-1.0, 2.0, 0.0), &rows, 1.0).unwrap();
        assert_eq!(sol.u_v, Vector3::new(0.0, 2.0, 0.0));
        assert_eq!(sol.multipliers[1], 0.0);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let rows = [
            CbfRow {
                a: Vector3::x(),
                b: Vector3::zeros(),
                rhs: 1.0,
                reference: Vector3::zeros(),
            },
            CbfRow {
                a: -Vector3::x(),
                b: Vector3::zeros(),
                rhs: 1.0,
                reference: Vector3::zeros(),
            },
        ];
        assert!(matches!(
            solve(&Vector3::zeros(), &rows, 1.0),
            Err(FilterError::Infeasible)
        ));
    }
}
