use image::Rgb;
use nalgebra::{Point2, Vector3};

use super::{CameraModel, Image, PoseHypothesis};
use crate::instrument::XylophoneModel;

/// Visit every pixel of a `w`×`h` grid whose centre lies inside a convex polygon.
pub(crate) fn for_each_covered(poly: &[Point2<f64>], w: u32, h: u32, mut f: impl FnMut(u32, u32)) {
    let min_x = poly.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = poly.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let i0 = (min_x - 0.5).ceil().max(0.0) as u32;
    let i1 = ((max_x - 0.5).floor()).min(w as f64 - 1.0);
    let j0 = (min_y - 0.5).ceil().max(0.0) as u32;
    let j1 = ((max_y - 0.5).floor()).min(h as f64 - 1.0);
    if i1 < 0.0 || j1 < 0.0 {
        return;
    }
    // Orientation-independent inside test.
    let area: f64 = poly
        .iter()
        .zip(poly.iter().cycle().skip(1))
        .map(|(a, b)| a.x * b.y - b.x * a.y)
        .sum();
    let sign = area.signum();
    for j in j0..=j1 as u32 {
        for i in i0..=i1 as u32 {
            let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
            let inside = poly.iter().zip(poly.iter().cycle().skip(1)).all(|(a, b)| {
                sign * ((b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x)) >= 0.0
            });
            if inside {
                f(i, j);
            }
        }
    }
}

fn fill_convex(img: &mut Image, poly: &[Point2<f64>], color: [u8; 3]) {
    let (w, h) = img.dimensions();
    for_each_covered(poly, w, h, |i, j| img.put_pixel(i, j, Rgb(color)));
}

fn project_quad(
    camera: &CameraModel,
    pose: &PoseHypothesis,
    corners: &[[f64; 3]; 4],
) -> Option<Vec<Point2<f64>>> {
    corners
        .iter()
        .map(|c| camera.project(&pose.to_camera(&Vector3::from(*c))))
        .collect()
}

/// Flat-shaded top-down view: body top face, then each bar over it.
pub fn render_synthetic(
    model: &XylophoneModel,
    camera: &CameraModel,
    pose: &PoseHypothesis,
    background: [u8; 3],
) -> Image {
    let mut img = Image::from_pixel(camera.width, camera.height, Rgb(background));
    let lift = model.stand_height_cm;
    if let Some(q) = project_quad(camera, pose, &model.body_outline(model.body_top_cm + lift)) {
        fill_convex(&mut img, &q, model.body_color);
    }
    for bar in &model.bars {
        let [cx, cy, cz] = bar.center_cm;
        let (hx, hy, z) = (bar.width_cm / 2.0, bar.length_cm / 2.0, cz + lift);
        let corners = [
            [cx - hx, cy - hy, z],
            [cx + hx, cy - hy, z],
            [cx + hx, cy + hy, z],
            [cx - hx, cy + hy, z],
        ];
        if let Some(q) = project_quad(camera, pose, &corners) {
            fill_convex(&mut img, &q, bar.color);
        }
    }
    img
}
