//! Note sequences to joint-space trajectories and back.
//!
//! Striking configurations come from inverse kinematics on a configurable
//! five-joint arm; motion between them is cubic Bezier in joint space. A
//! kinematic simulator replays a trajectory and reports where the mallet
//! head crosses a bar surface.

mod bezier;
mod chain;
mod ik;
mod plan;
mod sim;

use std::io::Write;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instrument::NoteId;

pub use bezier::{cubic_bezier, BezierSegment};
pub use chain::{Axis, HeadPose, JointSpec, JointVector, KinematicChain, HOME_HEAD_LEFT_CM};
pub use ik::{inverse_kinematics, IkOptions, IkSolution};
pub use plan::{
    generate_trajectory, strike_configs, strike_targets, solve_strike, arm_notes, ArmAssignment, ArmTrajectories, StrikeConfig, StrikeTable,
    TrajectoryOptions, DEFAULT_STRIKE_DUR_S, SAMPLE_RATE_HZ,
};
pub use sim::{execute_sim, execute_sim_pair, SimEvent};

/// Joints per arm.
pub const DOF: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("joint {0} outside its limits")]
    JointLimit(usize),
    #[error("target unreachable (residual {residual_cm:.3} cm)")]
    Unreachable { residual_cm: f64 },
    #[error("note {0} cannot be reached")]
    UnreachableNote(NoteId),
    #[error("no striking configuration for note {0}")]
    MissingConfig(NoteId),
    #[error("strikes on the {arm:?} arm at {first_s:.3}s and {second_s:.3}s are closer than the strike duration")]
    OnsetCollision { arm: Arm, first_s: f64, second_s: f64 },
    #[error("invalid kinematic chain: {0}")]
    InvalidChain(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("csv export failed: {0}")]
    Export(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub fn other(self) -> Arm {
        match self {
            Arm::Left => Arm::Right,
            Arm::Right => Arm::Left,
        }
    }
}

/// Pose of the instrument frame in the robot frame.
///
/// With `yaw_rad = 0` the instrument's pitch axis runs toward the robot's
/// right, so low notes sit on the left arm's side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub origin_cm: [f64; 3],
    pub yaw_rad: f64,
}

/// Canonical setup: instrument centred 15 cm ahead of the shoulders.
pub const CANONICAL_PLACEMENT: Placement = Placement {
    origin_cm: [15.0, 0.0, -31.0],
    yaw_rad: 0.0,
};

impl Default for Placement {
    fn default() -> Self {
        CANONICAL_PLACEMENT
    }
}

impl Placement {
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw_rad - std::f64::consts::FRAC_PI_2)
    }

    pub fn origin(&self) -> Vector3<f64> {
        Vector3::from(self.origin_cm)
    }

    pub fn to_robot(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.origin()
    }

    pub fn to_instrument(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse() * (p - self.origin())
    }

    pub fn translated(&self, d: [f64; 3]) -> Self {
        Self {
            origin_cm: [self.origin_cm[0] + d[0], self.origin_cm[1] + d[1], self.origin_cm[2] + d[2]],
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t_s: f64,
    pub q: JointVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub arm: Arm,
    pub points: Vec<TrajectoryPoint>,
}

impl JointTrajectory {
    pub fn validate(&self, chain: &KinematicChain) -> Result<(), TrajectoryError> {
        if self.points.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
            return Err(TrajectoryError::InvalidTrajectory("times must strictly increase".into()));
        }
        for p in &self.points {
            chain.within_limits(&p.q)?;
        }
        Ok(())
    }

    /// Joint vector at `t`, linear between samples and held at the ends.
    pub fn sample(&self, t: f64) -> Option<JointVector> {
        let pts = &self.points;
        let first = pts.first()?;
        let last = pts.last()?;
        if t <= first.t_s {
            return Some(first.q);
        }
        if t >= last.t_s {
            return Some(last.q);
        }
        let i = pts.partition_point(|p| p.t_s <= t);
        let (a, b) = (&pts[i - 1], &pts[i]);
        let u = (t - a.t_s) / (b.t_s - a.t_s);
        Some(std::array::from_fn(|k| a.q[k] + u * (b.q[k] - a.q[k])))
    }

    /// CSV with header `t,q1,..,q5`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TrajectoryError> {
        let err = |e: csv::Error| TrajectoryError::Export(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "q1", "q2", "q3", "q4", "q5"]).map_err(err)?;
        for p in &self.points {
            let mut row = vec![p.t_s.to_string()];
            row.extend(p.q.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| TrajectoryError::Export(e.to_string()))
    }

    pub fn read_csv<R: std::io::Read>(arm: Arm, input: R) -> Result<Self, TrajectoryError> {
        let err = |e: csv::Error| TrajectoryError::Export(e.to_string());
        let mut r = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for rec in r.deserialize::<(f64, f64, f64, f64, f64, f64)>() {
            let (t_s, a, b, c, d, e) = rec.map_err(err)?;
            points.push(TrajectoryPoint { t_s, q: [a, b, c, d, e] });
        }
        Ok(Self { arm, points })
    }
}

#[cfg(test)]
mod tests;
