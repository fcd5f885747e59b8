//! Colour-based instrument localisation from a top-down camera.
//!
//! The camera looks straight down at the table. Camera frame: `x` to the
//! image right, `y` to the image bottom, `z` along the optical axis. A pose
//! hypothesis places the instrument frame in the camera frame as
//! `p_cam = diag(1, -1, -1) · Rz(yaw) · p_inst + position`.

mod contour;
mod pose;
mod render;

use std::path::Path;

use image::RgbImage;
use nalgebra::{Matrix3, Point2, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Placement;

pub use contour::{
    detect_blue_mask, extract_contour, instrument_mask, largest_component, BlueDetection, HsvRange,
    Mask,
};
pub use pose::{
    estimate_pose, hypothesis_likelihood, mean_nearest_distance, project_contour, ContourMatcher,
    SearchOptions,
};
pub use render::render_synthetic;


pub type Image = RgbImage;

/// Mask pixel count below which no instrument is reported.
pub const MIN_MASK_PIXELS: usize = 25;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("no instrument visible")]
    NoInstrument,
    #[error("mask is empty")]
    EmptyMask,
    #[error("pose hypothesis behind the camera")]
    BehindCamera,
    #[error("image I/O: {0}")]
    Image(#[from] image::ImageError),
}

/// Pinhole camera with square pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
}

pub const DIAGONAL_FOV_DEG: f64 = 73.0;

impl Default for CameraModel {
    fn default() -> Self {
        Self::from_diagonal_fov(640, 480, DIAGONAL_FOV_DEG)
    }
}

impl CameraModel {
    pub fn from_diagonal_fov(width: u32, height: u32, fov_deg: f64) -> Self {
        let diag = (width as f64).hypot(height as f64);
        Self {
            width,
            height,
            focal_px: diag / (2.0 * (fov_deg.to_radians() / 2.0).tan()),
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    /// Same field of view at `k` times the resolution.
    pub fn scaled(&self, k: u32) -> Self {
        let f = k as f64;
        Self {
            width: self.width * k,
            height: self.height * k,
            focal_px: self.focal_px * f,
            cx: self.cx * f,
            cy: self.cy * f,
        }
    }

    /// Image coordinates, pixel `(i, j)` covering `[i, i+1) × [j, j+1)`.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Point2<f64>> {
        (p.z > 1e-9).then(|| {
            Point2::new(
                self.focal_px * p.x / p.z + self.cx,
                self.focal_px * p.y / p.z + self.cy,
            )
        })
    }
}

/// Instrument position (cm) and yaw in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseHypothesis {
    pub position: [f64; 3],
    pub yaw_rad: f64,
}

impl PoseHypothesis {
    pub fn new(x: f64, y: f64, z: f64, yaw_rad: f64) -> Self {
        Self {
            position: [x, y, z],
            yaw_rad,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
            * Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw_rad).into_inner()
    }

    pub fn to_camera(&self, p_inst: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p_inst + Vector3::from(self.position)
    }

    pub fn offset(&self, dx: f64, dy: f64, dz: f64, dyaw: f64) -> Self {
        let [x, y, z] = self.position;
        Self::new(x + dx, y + dy, z + dz, self.yaw_rad + dyaw)
    }
}

/// Camera placement on the robot, looking straight down.
///
/// Camera axes in the robot frame: `x_cam = -y`, `y_cam = -x`, `z_cam = -z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    pub position_cm: [f64; 3],
}

impl Default for CameraMount {
    fn default() -> Self {
        Self {
            position_cm: [15.0, 0.0, 30.0],
        }
    }
}

fn camera_axes() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0)
}

impl CameraMount {
    pub fn hypothesis(&self, placement: &Placement) -> PoseHypothesis {
        let p = camera_axes() * (placement.origin() - Vector3::from(self.position_cm));
        PoseHypothesis::new(p.x, p.y, p.z, placement.yaw_rad)
    }

    pub fn placement(&self, h: &PoseHypothesis) -> Placement {
        let o = camera_axes() * Vector3::from(h.position) + Vector3::from(self.position_cm);
        Placement {
            origin_cm: [o.x, o.y, o.z],
            yaw_rad: h.yaw_rad,
        }
    }
}

/// Rigid correction: rotate by `yaw_rad` about the vertical through `pivot_cm`, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseDelta {
    pub translation_cm: [f64; 3],
    pub yaw_rad: f64,
    pub pivot_cm: [f64; 3],
}

impl PoseDelta {
    pub fn zero() -> Self {
        Self {
            translation_cm: [0.0; 3],
            yaw_rad: 0.0,
            pivot_cm: [0.0; 3],
        }
    }

    /// Correction carrying targets computed for `nominal` onto `observed`.
    pub fn between(nominal: &Placement, observed: &Placement) -> Self {
        let d = observed.origin() - nominal.origin();
        Self {
            translation_cm: [d.x, d.y, d.z],
            yaw_rad: observed.yaw_rad - nominal.yaw_rad,
            pivot_cm: nominal.origin_cm,
        }
    }
}

/// Move a robot-frame strike target with the instrument's pose error.
pub fn micro_adjust(target: Vector3<f64>, delta: &PoseDelta) -> Vector3<f64> {
    let pivot = Vector3::from(delta.pivot_cm);
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), delta.yaw_rad);
    pivot + rot * (target - pivot) + Vector3::from(delta.translation_cm)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image, VisionError> {
    let reader = image::ImageReader::with_format(
        std::io::BufReader::new(std::fs::File::open(path).map_err(image::ImageError::IoError)?),
        image::ImageFormat::Pnm,
    );
    Ok(reader.decode()?.to_rgb8())
}

/// Binary P6 pixmap.
pub fn write_ppm(path: impl AsRef<Path>, img: &Image) -> Result<(), VisionError> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    use image::ImageEncoder;
    let file = std::io::BufWriter::new(std::fs::File::create(path).map_err(image::ImageError::IoError)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)?;
    Ok(())
}

#[cfg(test)]
mod tests;
