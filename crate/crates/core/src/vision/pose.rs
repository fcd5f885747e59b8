use nalgebra::{Point2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::contour::{detect_blue_mask, extract_contour, instrument_mask, HsvRange, Mask};
use super::render::for_each_covered;
use super::{CameraModel, Image, PoseHypothesis, VisionError};
use crate::instrument::XylophoneModel;

/// Projected body-top corners, in order.
fn projected_corners(
    model: &XylophoneModel,
    camera: &CameraModel,
    h: &PoseHypothesis,
) -> Result<[Point2<f64>; 4], VisionError> {
    let outline = model.body_outline(model.body_top_cm + model.stand_height_cm);
    let mut out = [Point2::origin(); 4];
    for (o, c) in out.iter_mut().zip(&outline) {
        *o = camera
            .project(&h.to_camera(&Vector3::from(*c)))
            .ok_or(VisionError::BehindCamera)?;
    }
    Ok(out)
}

fn resample_closed(corners: &[Point2<f64>], spacing: f64, out: &mut Vec<Point2<f64>>) {
    out.clear();
    for (k, a) in corners.iter().enumerate() {
        let b = corners[(k + 1) % corners.len()];
        let n = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
        out.extend((0..n).map(|s| a + (b - a) * (s as f64 / n as f64)));
    }
}

/// Body outline under a hypothesis, resampled at about one point per pixel.
pub fn project_contour(
    model: &XylophoneModel,
    camera: &CameraModel,
    h: &PoseHypothesis,
) -> Result<Vec<Point2<f64>>, VisionError> {
    let corners = projected_corners(model, camera, h)?;
    let mut out = Vec::new();
    resample_closed(&corners, 1.0, &mut out);
    Ok(out)
}

/// Mean over `a` of the distance to the nearest point of `b`.
pub fn mean_nearest_distance(a: &[Point2<f64>], b: &[Point2<f64>]) -> f64 {
    let mut sorted: Vec<Point2<f64>> = b.to_vec();
    sorted.sort_by(|p, q| p.x.total_cmp(&q.x));
    let total: f64 = a
        .iter()
        .map(|p| {
            let start = sorted.partition_point(|q| q.x < p.x);
            let mut best = f64::INFINITY;
            for q in sorted[start..].iter() {
                if (q.x - p.x).powi(2) >= best {
                    break;
                }
                best = best.min((q - p).norm_squared());
            }
            for q in sorted[..start].iter().rev() {
                if (q.x - p.x).powi(2) >= best {
                    break;
                }
                best = best.min((q - p).norm_squared());
            }
            best.sqrt()
        })
        .sum();
    total / a.len() as f64
}

/// `1 / (1 + d)`, `d` the symmetric mean nearest-point distance in pixels.
pub fn hypothesis_likelihood(observed: &[Point2<f64>], projected: &[Point2<f64>]) -> f64 {
    if observed.is_empty() || projected.is_empty() {
        return 0.0;
    }
    let d = 0.5
        * (mean_nearest_distance(observed, projected) + mean_nearest_distance(projected, observed));
    1.0 / (1.0 + d)
}

/// Exact 1-D squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let sq = |q: usize| (q * q) as f64;
    for q in 1..n {
        // z[0] is -inf, so the scan always stops.
        let mut s = ((f[q] + sq(q)) - (f[v[k]] + sq(v[k]))) / (2.0 * (q - v[k]) as f64);
        while s <= z[k] {
            k -= 1;
            s = ((f[q] + sq(q)) - (f[v[k]] + sq(v[k]))) / (2.0 * (q - v[k]) as f64);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// Euclidean distance from every pixel centre to the nearest seed pixel.
fn distance_transform(width: usize, height: usize, seeds: &[(usize, usize)]) -> Vec<f64> {
    // Large finite value keeps the parabola intersections well defined.
    let mut grid = vec![1e12; width * height];
    for &(i, j) in seeds {
        grid[j * width + i] = 0.0;
    }
    let n = width.max(height);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0; n], vec![0.0; n + 1]);
    for j in 0..height {
        f[..width].copy_from_slice(&grid[j * width..(j + 1) * width]);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        grid[j * width..(j + 1) * width].copy_from_slice(&out[..width]);
    }
    for i in 0..width {
        for j in 0..height {
            f[j] = grid[j * width + i];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for j in 0..height {
            grid[j * width + i] = out[j];
        }
    }
    grid.iter().map(|d| d.sqrt()).collect()
}

fn segment_distance(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared().max(1e-18)).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Boundary pixel centres of the body outline as the renderer would draw it.
///
/// Works on a crop around the outline, so clipping at the image border
/// behaves exactly as in a full-frame mask.
fn raster_contour(model: &XylophoneModel, camera: &CameraModel, h: &PoseHypothesis) -> Option<Vec<Point2<f64>>> {
    let corners = projected_corners(model, camera, h).ok()?;
    let lo = |f: fn(&Point2<f64>) -> f64| corners.iter().map(f).fold(f64::INFINITY, f64::min);
    let hi = |f: fn(&Point2<f64>) -> f64| corners.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (lo(|p| p.x).floor() - 1.0).clamp(0.0, camera.width as f64) as u32;
    let y0 = (lo(|p| p.y).floor() - 1.0).clamp(0.0, camera.height as f64) as u32;
    let x1 = (hi(|p| p.x).ceil() + 1.0).clamp(0.0, camera.width as f64) as u32;
    let y1 = (hi(|p| p.y).ceil() + 1.0).clamp(0.0, camera.height as f64) as u32;
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    let mut mask = Mask::new(x1 - x0, y1 - y0);
    let shifted = corners.map(|p| Point2::new(p.x - x0 as f64, p.y - y0 as f64));
    let w = mask.width;
    for_each_covered(&shifted, x1 - x0, y1 - y0, |i, j| mask.data[(j * w + i) as usize] = true);
    let pts = extract_contour(&mask).ok()?;
    Some(pts.into_iter().map(|p| Point2::new(p.x + x0 as f64, p.y + y0 as f64)).collect())
}

/// Fast scorer for many hypotheses against one observed contour: a distance
/// map of the observed points answers projected-to-observed queries, and
/// observed-to-projected distances are taken to the projected quad's edges.
pub struct ContourMatcher<'a> {
    model: &'a XylophoneModel,
    camera: &'a CameraModel,
    observed: Vec<Point2<f64>>,
    dist: Vec<f64>,
    width: usize,
    height: usize,
}

impl<'a> ContourMatcher<'a> {
    pub fn new(model: &'a XylophoneModel, camera: &'a CameraModel, observed: Vec<Point2<f64>>) -> Self {
        let (width, height) = (camera.width as usize, camera.height as usize);
        let seeds: Vec<(usize, usize)> = observed
            .iter()
            .map(|p| {
                (
                    (p.x.floor().max(0.0) as usize).min(width - 1),
                    (p.y.floor().max(0.0) as usize).min(height - 1),
                )
            })
            .collect();
        let dist = distance_transform(width, height, &seeds);
        Self {
            model,
            camera,
            observed,
            dist,
            width,
            height,
        }
    }

    pub fn observed(&self) -> &[Point2<f64>] {
        &self.observed
    }

    /// Bilinear lookup; points off the image add their distance to the border.
    fn lookup(&self, p: &Point2<f64>) -> f64 {
        let u = p.x - 0.5;
        let v = p.y - 0.5;
        let uc = u.clamp(0.0, (self.width - 1) as f64);
        let vc = v.clamp(0.0, (self.height - 1) as f64);
        let outside = (u - uc).hypot(v - vc);
        let (i0, j0) = (uc.floor() as usize, vc.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(self.width - 1), (j0 + 1).min(self.height - 1));
        let (fu, fv) = (uc - i0 as f64, vc - j0 as f64);
        let d = |i: usize, j: usize| self.dist[j * self.width + i];
        let top = d(i0, j0) * (1.0 - fu) + d(i1, j0) * fu;
        let bottom = d(i0, j1) * (1.0 - fu) + d(i1, j1) * fu;
        top * (1.0 - fv) + bottom * fv + outside
    }

    /// Approximate likelihood; `stride` thins both point sets for coarse search.
    pub fn score(&self, h: &PoseHypothesis, stride: usize) -> f64 {
        let Ok(corners) = projected_corners(self.model, self.camera, h) else {
            return 0.0;
        };
        let mut pts = Vec::new();
        resample_closed(&corners, stride as f64, &mut pts);
        self.score_shape(&corners, &pts, nalgebra::Vector2::zeros(), stride)
    }

    /// Score a projected outline translated by `shift` pixels.
    fn score_shape(
        &self,
        corners: &[Point2<f64>; 4],
        pts: &[Point2<f64>],
        shift: nalgebra::Vector2<f64>,
        stride: usize,
    ) -> f64 {
        let d1 = pts.iter().map(|p| self.lookup(&(p + shift))).sum::<f64>() / pts.len() as f64;
        let (mut s2, mut n2) = (0.0, 0usize);
        for p in self.observed.iter().step_by(stride) {
            let q = p - shift;
            let d = (0..4)
                .map(|k| segment_distance(&q, &corners[k], &corners[(k + 1) % 4]))
                .fold(f64::INFINITY, f64::min);
            s2 += d;
            n2 += 1;
        }
        1.0 / (1.0 + 0.5 * (d1 + s2 / n2.max(1) as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub half_range_cm: f64,
    pub step_cm: f64,
    pub half_yaw_deg: f64,
    pub yaw_step_deg: f64,
    pub final_step_cm: f64,
    pub final_yaw_step_deg: f64,
    /// Colour distance for the instrument mask.
    pub color_tolerance: f64,
    /// Point thinning used during the coarse grid.
    pub coarse_stride: usize,
    pub blue: HsvRange,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            half_range_cm: 10.0,
            step_cm: 1.0,
            half_yaw_deg: 15.0,
            yaw_step_deg: 3.0,
            final_step_cm: 0.1,
            final_yaw_step_deg: 0.5,
            color_tolerance: 40.0,
            coarse_stride: 8,
            blue: HsvRange::default(),
        }
    }
}

/// Grid search around the prior, then coordinate descent with halving steps.
pub fn estimate_pose(
    img: &Image,
    model: &XylophoneModel,
    camera: &CameraModel,
    prior: &PoseHypothesis,
    opts: &SearchOptions,
) -> Result<PoseHypothesis, VisionError> {
    detect_blue_mask(img, &opts.blue)?;
    let mask = instrument_mask(img, model, opts.color_tolerance);
    let contour = extract_contour(&mask).map_err(|_| VisionError::NoInstrument)?;
    let matcher = ContourMatcher::new(model, camera, contour);

    let n = (opts.half_range_cm / opts.step_cm).round() as i64;
    let m = (opts.half_yaw_deg / opts.yaw_step_deg).round() as i64;
    let side = (2 * n + 1) as usize;
    let yaws = (2 * m + 1) as usize;
    let at = |idx: usize| {
        let ix = (idx % side) as i64 - n;
        let iy = ((idx / side) % side) as i64 - n;
        let iz = ((idx / (side * side)) % side) as i64 - n;
        let iw = (idx / (side * side * side)) as i64 - m;
        prior.offset(
            ix as f64 * opts.step_cm,
            iy as f64 * opts.step_cm,
            iz as f64 * opts.step_cm,
            (iw as f64 * opts.yaw_step_deg).to_radians(),
        )
    };
    let stride = opts.coarse_stride.max(1);
    let top = model.body_top_cm + model.stand_height_cm;
    // The body top is planar and parallel to the image, so moving the
    // hypothesis sideways only translates its outline: project once per
    // depth and yaw, then slide.
    let per_shape: Vec<(f64, usize)> = (0..side * yaws)
        .into_par_iter()
        .map(|shape| {
            let iz = shape % side;
            let iw = shape / side;
            let base = at(iw * side * side * side + iz * side * side + n as usize * side + n as usize);
            let Ok(c) = projected_corners(model, camera, &base) else {
                return (f64::NEG_INFINITY, usize::MAX);
            };
            let mut pts = Vec::new();
            resample_closed(&c, stride as f64, &mut pts);
            let px_per_cm = camera.focal_px / (base.position[2] - top);
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for iy in 0..side {
                for ix in 0..side {
                    let shift = nalgebra::Vector2::new(
                        (ix as f64 - n as f64) * opts.step_cm * px_per_cm,
                        (iy as f64 - n as f64) * opts.step_cm * px_per_cm,
                    );
                    let idx = iw * side * side * side + iz * side * side + iy * side + ix;
                    let s = matcher.score_shape(&c, &pts, shift, stride);
                    if s > best.0 {
                        best = (s, idx);
                    }
                }
            }
            best
        })
        .collect();
    // Highest score wins; equal scores keep the lowest grid index.
    let (_, best_idx) = per_shape.into_iter().fold((f64::NEG_INFINITY, usize::MAX), |a, b| {
        if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    });
    let mut best = at(best_idx);
    let mut best_score = matcher.score(&best, 1);
    let (mut step, mut yaw_step) = (opts.step_cm, opts.yaw_step_deg.to_radians());
    let final_yaw = opts.final_yaw_step_deg.to_radians();
    loop {
        let mut improved = true;
        while improved {
            improved = false;
            for axis in 0..4 {
                for sign in [1.0, -1.0] {
                    let d = |k: usize, s: f64| if axis == k { sign * s } else { 0.0 };
                    let cand = best.offset(d(0, step), d(1, step), d(2, step), d(3, yaw_step));
                    let s = matcher.score(&cand, 1);
                    if s > best_score + 1e-12 {
                        best = cand;
                        best_score = s;
                        improved = true;
                    }
                }
            }
        }
        if step <= opts.final_step_cm && yaw_step <= final_yaw {
            break;
        }
        step /= 2.0;
        yaw_step /= 2.0;
    }
    Ok(polish(model, camera, matcher.observed(), best))
}

/// Settle on the outline the renderer would actually produce.
///
/// A binary mask only pins each edge to within a pixel, so many poses explain
/// it equally well. Descend on the rasterised outline, then move to the
/// middle of the tied region along each axis.
fn polish(model: &XylophoneModel, camera: &CameraModel, observed: &[Point2<f64>], start: PoseHypothesis) -> PoseHypothesis {
    let score = |h: &PoseHypothesis| {
        raster_contour(model, camera, h).map_or(0.0, |c| hypothesis_likelihood(observed, &c))
    };
    let axis_step = |h: &PoseHypothesis, axis: usize, s: f64| match axis {
        0 => h.offset(s, 0.0, 0.0, 0.0),
        1 => h.offset(0.0, s, 0.0, 0.0),
        2 => h.offset(0.0, 0.0, s, 0.0),
        _ => h.offset(0.0, 0.0, 0.0, s.to_radians()),
    };
    let mut best = start;
    let mut best_score = score(&best);
    // Steps in cm for translation, degrees for yaw.
    for (step, yaw_step) in [(0.25, 0.5), (0.125, 0.25), (0.0625, 0.125), (0.03125, 0.0625)] {
        let mut improved = true;
        while improved {
            improved = false;
            for axis in 0..4 {
                let s = if axis == 3 { yaw_step } else { step };
                for sign in [1.0, -1.0] {
                    let cand = axis_step(&best, axis, sign * s);
                    let v = score(&cand);
                    if v > best_score + 1e-12 {
                        (best, best_score) = (cand, v);
                        improved = true;
                    }
                }
            }
        }
    }
    for axis in 0..4 {
        let s = if axis == 3 { 0.0625 } else { 0.03125 };
        let reach = |sign: f64| {
            (1..=16)
                .take_while(|&k| score(&axis_step(&best, axis, sign * s * k as f64)) >= best_score - 1e-12)
                .last()
                .unwrap_or(0) as f64
        };
        let (up, down) = (reach(1.0), reach(-1.0));
        let centred = axis_step(&best, axis, 0.5 * (up - down) * s);
        if score(&centred) >= best_score - 1e-12 {
            best = centred;
        }
    }
    best
}
