//! Pose-space simulation of the bisection scheduler: the navigation sign is
//! taken directly from the pose error, with no rendering in the loop.

use serde::{Deserialize, Serialize};

use crate::navigation::{nav_magnitude, NavState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSweepTrace {
    pub mu: f64,
    /// `diag(lambda_t) m_t` for every iteration.
    pub steps: Vec<[f64; 3]>,
    /// First iteration whose step norm fell below the tolerance.
    pub converged_at: Option<usize>,
    pub final_pose: [f64; 3],
}

impl PoseSweepTrace {
    pub fn step_norms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }
}

fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Iterates `x += diag(lambda_t) m_t` with `m_t = sgn(target - x)` until the
/// step norm drops below `tol * |lambda0|` or `max_iter` is reached. Units
/// are whatever the caller uses consistently per axis.
pub fn simulate_pose_sweep(target: [f64; 3], init: [f64; 3], lambda0: [f64; 3], mu: f64, max_iter: usize, tol: f64) -> PoseSweepTrace {
    let limit = tol * lambda0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut state = NavState { lambda: lambda0, prev_m: [0; 3], mu };
    let mut x = init;
    let mut steps = Vec::new();
    let mut converged_at = None;
    for t in 1..=max_iter {
        let m = [sgn(target[0] - x[0]), sgn(target[1] - x[1]), sgn(target[2] - x[2])];
        state = nav_magnitude(&state, m);
        let step = [state.lambda[0] * m[0] as f64, state.lambda[1] * m[1] as f64, state.lambda[2] * m[2] as f64];
        steps.push(step);
        if step.iter().map(|v| v * v).sum::<f64>().sqrt() < limit {
            converged_at = Some(t);
            break;
        }
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        for a in 0..3 {
            x[a] += step[a];
        }
    }
    PoseSweepTrace { mu, steps, converged_at, final_pose: x }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rate_walks_the_lattice() {
        let tr = simulate_pose_sweep([60.0, -70.0, 80.0], [0.0; 3], [5.0; 3], 1.0, 500, 1e-3);
        assert_eq!(tr.converged_at, Some(17));
        assert_eq!(tr.final_pose, [60.0, -70.0, 80.0]);
    }

    #[test]
    fn rate_two_and_above_never_settle() {
        for mu in [2.0, 2.5] {
            let tr = simulate_pose_sweep([60.0, -70.0, 80.0], [0.0; 3], [5.0; 3], mu, 500, 1e-3);
            assert_eq!(tr.converged_at, None, "mu {mu}");
        }
    }
}
