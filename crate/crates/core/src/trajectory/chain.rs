use nalgebra::{Isometry3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{Arm, TrajectoryError, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub axis: Axis,
    /// Translation from the previous joint frame, cm.
    pub offset_cm: [f64; 3],
    pub min_rad: f64,
    pub max_rad: f64,
}

/// Joint vector for one arm.
pub type JointVector = [f64; DOF];

/// Mallet-head pose in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// A serial revolute arm holding a mallet.
///
/// Robot frame: origin between the shoulders, `x` forward, `y` to the robot's
/// left, `z` up; lengths in centimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub arm: Arm,
    pub joints: Vec<JointSpec>,
    /// Wrist to grip, in the last joint frame.
    pub hand_cm: [f64; 3],
    pub mallet_length_cm: f64,
    /// Mallet pitch below the hand axis.
    pub mallet_tilt_rad: f64,
    pub mallet_head_radius_cm: f64,
}

/// Head centre of the default left arm at the zero configuration, cm.
pub const HOME_HEAD_LEFT_CM: [f64; 3] = [31.0, 9.8, -21.0];

const SHOULDER_Y_CM: f64 = 9.8;
const UPPER_ARM_CM: f64 = 10.5;
const FOREARM_CM: f64 = 10.5;
const HAND_CM: f64 = 10.0;

impl KinematicChain {
    /// Default five-joint arm: shoulder pitch/roll, elbow yaw/roll, wrist yaw.
    pub fn default_arm(arm: Arm) -> Self {
        let deg = |d: f64| d.to_radians();
        let left = vec![
            joint("shoulder_pitch", Axis::Y, [0.0, SHOULDER_Y_CM, 0.0], deg(-119.5), deg(119.5)),
            joint("shoulder_roll", Axis::Z, [0.0, 0.0, 0.0], deg(-18.0), deg(76.0)),
            joint("elbow_yaw", Axis::X, [UPPER_ARM_CM, 0.0, 0.0], deg(-119.5), deg(119.5)),
            joint("elbow_roll", Axis::Z, [0.0, 0.0, 0.0], deg(-88.5), 0.0),
            joint("wrist_yaw", Axis::X, [FOREARM_CM, 0.0, 0.0], deg(-104.5), deg(104.5)),
        ];
        let chain = Self {
            arm: Arm::Left,
            joints: left,
            hand_cm: [HAND_CM, 0.0, 0.0],
            mallet_length_cm: 21.0,
            mallet_tilt_rad: deg(90.0),
            mallet_head_radius_cm: 0.8,
        };
        match arm {
            Arm::Left => chain,
            Arm::Right => chain.mirrored(),
        }
    }

    /// Reflection through the sagittal plane: `y` offsets flip, and rotations
    /// about `x` and `z` change sense.
    pub fn mirrored(&self) -> Self {
        let joints = self
            .joints
            .iter()
            .map(|j| {
                let [x, y, z] = j.offset_cm;
                let (min_rad, max_rad) = match j.axis {
                    Axis::Y => (j.min_rad, j.max_rad),
                    Axis::X | Axis::Z => (-j.max_rad, -j.min_rad),
                };
                JointSpec {
                    name: j.name.clone(),
                    axis: j.axis,
                    offset_cm: [x, -y, z],
                    min_rad,
                    max_rad,
                }
            })
            .collect();
        let [hx, hy, hz] = self.hand_cm;
        Self {
            arm: self.arm.other(),
            joints,
            hand_cm: [hx, -hy, hz],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.joints.len() != DOF {
            return Err(TrajectoryError::InvalidChain(format!(
                "expected {DOF} joints, found {}",
                self.joints.len()
            )));
        }
        if self.joints.iter().any(|j| !(j.min_rad < j.max_rad)) {
            return Err(TrajectoryError::InvalidChain("joint limits must be ordered".into()));
        }
        Ok(())
    }

    pub fn shoulder(&self) -> Vector3<f64> {
        Vector3::from(self.joints[0].offset_cm)
    }

    /// Grip-to-head offset in the last joint frame.
    pub fn tool_offset(&self) -> Vector3<f64> {
        let (s, c) = self.mallet_tilt_rad.sin_cos();
        Vector3::from(self.hand_cm) + self.mallet_length_cm * Vector3::new(c, 0.0, -s)
    }

    /// Shoulder to grip along the links, cm.
    pub fn link_length_sum(&self) -> f64 {
        self.joints[1..]
            .iter()
            .map(|j| Vector3::from(j.offset_cm).norm())
            .sum::<f64>()
            + Vector3::from(self.hand_cm).norm()
    }

    /// Upper bound on the head's distance from the shoulder.
    pub fn reach(&self) -> f64 {
        self.joints[1..]
            .iter()
            .map(|j| Vector3::from(j.offset_cm).norm())
            .sum::<f64>()
            + self.tool_offset().norm()
    }

    pub fn limits(&self, i: usize) -> (f64, f64) {
        (self.joints[i].min_rad, self.joints[i].max_rad)
    }

    pub fn within_limits(&self, q: &JointVector) -> Result<(), TrajectoryError> {
        for (i, (&v, j)) in q.iter().zip(&self.joints).enumerate() {
            if !(v >= j.min_rad - 1e-12 && v <= j.max_rad + 1e-12) {
                return Err(TrajectoryError::JointLimit(i));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut JointVector) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.min_rad, j.max_rad);
        }
    }

    /// Nominal seed for the first strike solve: arm lowered forward, elbow bent.
    pub fn rest_seed(&self) -> JointVector {
        let sign = match self.arm {
            Arm::Left => 1.0,
            Arm::Right => -1.0,
        };
        let mut q = [0.6, 0.0, 0.0, sign * -0.8, 0.0];
        self.clamp(&mut q);
        q
    }

    pub fn midpoint(&self) -> JointVector {
        std::array::from_fn(|i| 0.5 * (self.joints[i].min_rad + self.joints[i].max_rad))
    }

    /// Head pose with every joint at zero: arm straight ahead, mallet hanging down.
    pub fn home_pose(&self) -> HeadPose {
        self.pose_unchecked(&[0.0; DOF])
    }

    pub fn forward_kinematics(&self, q: &JointVector) -> Result<HeadPose, TrajectoryError> {
        self.within_limits(q)?;
        Ok(self.pose_unchecked(q))
    }

    pub(crate) fn head_position(&self, q: &JointVector) -> Vector3<f64> {
        self.pose_unchecked(q).position
    }

    pub(crate) fn pose_unchecked(&self, q: &JointVector) -> HeadPose {
        let mut frame = Isometry3::identity();
        for (j, &angle) in self.joints.iter().zip(q) {
            let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(j.axis.unit()), angle);
            frame = frame
                * Translation3::from(Vector3::from(j.offset_cm))
                * UnitQuaternion::from_rotation_matrix(&rot);
        }
        HeadPose {
            position: (frame * nalgebra::Point3::from(self.tool_offset())).coords,
            orientation: frame.rotation,
        }
    }
}

fn joint(name: &str, axis: Axis, offset_cm: [f64; 3], min_rad: f64, max_rad: f64) -> JointSpec {
    JointSpec {
        name: name.to_string(),
        axis,
        offset_cm,
        min_rad,
        max_rad,
    }
}
