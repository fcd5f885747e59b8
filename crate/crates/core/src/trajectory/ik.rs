use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::{JointVector, KinematicChain, TrajectoryError, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkOptions {
    pub tolerance_cm: f64,
    pub max_iterations: usize,
    /// Initial damping, cm.
    pub damping_cm: f64,
    /// Extra deterministic seeds tried when the given one stalls.
    pub restarts: usize,
    /// Largest joint step per iteration, rad.
    pub max_step_rad: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tolerance_cm: 0.1,
            max_iterations: 200,
            damping_cm: 1.0,
            restarts: 8,
            max_step_rad: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub q: JointVector,
    /// Iterations spent on the successful attempt.
    pub iterations: usize,
    pub residual_cm: f64,
}

const FD_STEP: f64 = 1e-6;

fn jacobian(chain: &KinematicChain, q: &JointVector) -> SMatrix<f64, 3, DOF> {
    let mut j = SMatrix::<f64, 3, DOF>::zeros();
    for k in 0..DOF {
        let mut hi = *q;
        let mut lo = *q;
        hi[k] += FD_STEP;
        lo[k] -= FD_STEP;
        let d = (chain.head_position(&hi) - chain.head_position(&lo)) / (2.0 * FD_STEP);
        j.set_column(k, &d);
    }
    j
}

/// Damped least-squares step; joints pinned at a limit and pushed further out are frozen.
fn dls_step(
    chain: &KinematicChain,
    q: &JointVector,
    err: &Vector3<f64>,
    lambda: f64,
    max_step: f64,
) -> JointVector {
    let full = jacobian(chain, q);
    let mut free = [true; DOF];
    let mut dq = SMatrix::<f64, DOF, 1>::zeros();
    for _ in 0..DOF {
        let mut jf = full;
        for (k, &f) in free.iter().enumerate() {
            if !f {
                jf.column_mut(k).fill(0.0);
            }
        }
        let a: Matrix3<f64> = jf * jf.transpose() + Matrix3::identity() * lambda * lambda;
        let Some(inv) = a.try_inverse() else { break };
        dq = jf.transpose() * (inv * err);
        let mut changed = false;
        for k in 0..DOF {
            let (lo, hi) = chain.limits(k);
            if free[k] && ((q[k] <= lo + 1e-12 && dq[k] < 0.0) || (q[k] >= hi - 1e-12 && dq[k] > 0.0)) {
                free[k] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let norm = dq.amax();
    let scale = if norm > max_step { max_step / norm } else { 1.0 };
    let mut out: JointVector = std::array::from_fn(|k| q[k] + scale * dq[k]);
    chain.clamp(&mut out);
    out
}

fn solve_from(
    chain: &KinematicChain,
    target: &Vector3<f64>,
    seed: &JointVector,
    opts: &IkOptions,
) -> IkSolution {
    let mut q = *seed;
    chain.clamp(&mut q);
    let mut err = target - chain.head_position(&q);
    let mut res = err.norm();
    let mut lambda = opts.damping_cm;
    let mut iterations = 0;
    while res > opts.tolerance_cm && iterations < opts.max_iterations {
        iterations += 1;
        let cand = dls_step(chain, &q, &err, lambda, opts.max_step_rad);
        let cand_err = target - chain.head_position(&cand);
        let cand_res = cand_err.norm();
        if cand_res < res {
            q = cand;
            err = cand_err;
            res = cand_res;
            lambda = (lambda * 0.5).max(1e-3);
        } else {
            lambda *= 4.0;
            if lambda > 1e6 {
                break;
            }
        }
    }
    IkSolution {
        q,
        iterations,
        residual_cm: res,
    }
}

/// Low-discrepancy points inside the joint box, used as fallback seeds.
fn restart_seed(chain: &KinematicChain, i: usize) -> JointVector {
    // Additive recurrence on the 5-dimensional generalised golden ratio.
    const PHI5: f64 = 1.167_303_978_261_418_7;
    std::array::from_fn(|k| {
        let alpha = 1.0 / PHI5.powi(k as i32 + 1);
        let frac = (0.5 + alpha * (i + 1) as f64).fract();
        let (lo, hi) = chain.limits(k);
        lo + frac * (hi - lo)
    })
}

/// Damped least-squares IK for the mallet-head position.
///
/// Each attempt runs up to `max_iterations`; if the seed stalls in a local
/// minimum, up to `restarts` deterministic seeds are tried and the first
/// converged result is returned.
pub fn inverse_kinematics(
    chain: &KinematicChain,
    target: Vector3<f64>,
    seed: &JointVector,
    opts: &IkOptions,
) -> Result<IkSolution, TrajectoryError> {
    chain.validate()?;
    let gap = (target - chain.shoulder()).norm() - chain.reach();
    if gap > opts.tolerance_cm {
        return Err(TrajectoryError::Unreachable { residual_cm: gap });
    }
    let mut best = solve_from(chain, &target, seed, opts);
    for i in 0..opts.restarts {
        if best.residual_cm <= opts.tolerance_cm {
            break;
        }
        let attempt = solve_from(chain, &target, &restart_seed(chain, i), opts);
        if attempt.residual_cm < best.residual_cm {
            best = attempt;
        }
    }
    if best.residual_cm <= opts.tolerance_cm {
        Ok(best)
    } else {
        Err(TrajectoryError::Unreachable {
            residual_cm: best.residual_cm,
        })
    }
}
