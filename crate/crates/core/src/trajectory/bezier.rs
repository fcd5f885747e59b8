use serde::{Deserialize, Serialize};

use super::{JointVector, DOF};

/// Bernstein form of a cubic in joint space, `s` in [0, 1].
pub fn cubic_bezier(p: &[JointVector; 4], s: f64) -> JointVector {
    let u = 1.0 - s;
    let (b0, b1, b2, b3) = (u * u * u, 3.0 * u * u * s, 3.0 * u * s * s, s * s * s);
    std::array::from_fn(|k| b0 * p[0][k] + b1 * p[1][k] + b2 * p[2][k] + b3 * p[3][k])
}

/// One timed segment between two control points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BezierSegment {
    pub t0: f64,
    pub t1: f64,
    pub control: [JointVector; 4],
}

impl BezierSegment {
    /// Inner control points at 1/3 and 2/3 of the chord.
    pub fn from_chord(t0: f64, q0: JointVector, t1: f64, q1: JointVector) -> Self {
        let at = |f: f64| -> JointVector { std::array::from_fn(|k| q0[k] + f * (q1[k] - q0[k])) };
        Self {
            t0,
            t1,
            control: [q0, at(1.0 / 3.0), at(2.0 / 3.0), q1],
        }
    }

    pub fn eval(&self, t: f64) -> JointVector {
        let s = ((t - self.t0) / (self.t1 - self.t0)).clamp(0.0, 1.0);
        cubic_bezier(&self.control, s)
    }

    /// Joint-space velocity at `t`, rad/s.
    pub fn velocity(&self, t: f64) -> JointVector {
        let s = ((t - self.t0) / (self.t1 - self.t0)).clamp(0.0, 1.0);
        let u = 1.0 - s;
        let p = &self.control;
        let dt = self.t1 - self.t0;
        let mut v = [0.0; DOF];
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 3.0
                * (u * u * (p[1][k] - p[0][k])
                    + 2.0 * u * s * (p[2][k] - p[1][k])
                    + s * s * (p[3][k] - p[2][k]))
                / dt;
        }
        v
    }
}
