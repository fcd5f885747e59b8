use std::collections::VecDeque;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::{Image, VisionError, MIN_MASK_PIXELS};
use crate::instrument::XylophoneModel;

/// Binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|j| (0..width).map(move |i| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, i: i64, j: i64) -> bool {
        i >= 0
            && j >= 0
            && i < self.width as i64
            && j < self.height as i64
            && self.data[(j * self.width as i64 + i) as usize]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Mean pixel centre.
    pub fn centroid(&self) -> Option<Point2<f64>> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (k, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            sx += (k as u32 % self.width) as f64 + 0.5;
            sy += (k as u32 / self.width) as f64 + 0.5;
            n += 1;
        }
        (n > 0).then(|| Point2::new(sx / n as f64, sy / n as f64))
    }
}

/// 4-connected component with the most pixels; ties go to the one reached first in raster order.
pub fn largest_component(mask: &Mask) -> Mask {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut label = vec![0u32; w * h];
    let mut best: (usize, u32) = (0, 0);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0;
        while let Some(k) = queue.pop_front() {
            size += 1;
            let (i, j) = (k % w, k / w);
            let mut visit = |n: usize| {
                if mask.data[n] && label[n] == 0 {
                    label[n] = next;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < w {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - w);
            }
            if j + 1 < h {
                visit(k + w);
            }
        }
        if size > best.0 {
            best = (size, next);
        }
    }
    Mask {
        width: mask.width,
        height: mask.height,
        data: label.iter().map(|&l| l != 0 && l == best.1).collect(),
    }
}

/// Hue in degrees, saturation and value in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvRange {
    pub hue_min: f64,
    pub hue_max: f64,
    pub sat_min: f64,
    pub val_min: f64,
}

impl Default for HsvRange {
    fn default() -> Self {
        Self {
            hue_min: 200.0,
            hue_max: 260.0,
            sat_min: 0.5,
            val_min: 0.3,
        }
    }
}

pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let hue = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { d / max };
    (hue, sat, max)
}

impl HsvRange {
    pub fn contains(&self, rgb: [u8; 3]) -> bool {
        let (h, s, v) = rgb_to_hsv(rgb);
        h >= self.hue_min && h <= self.hue_max && s >= self.sat_min && v >= self.val_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlueDetection {
    /// Largest connected blue region.
    pub mask: Mask,
    pub centroid: Point2<f64>,
    pub pixel_count: usize,
}

pub fn detect_blue_mask(img: &Image, range: &HsvRange) -> Result<BlueDetection, VisionError> {
    let raw = Mask::from_fn(img.width(), img.height(), |i, j| {
        range.contains(img.get_pixel(i, j).0)
    });
    let mask = largest_component(&raw);
    let pixel_count = mask.count();
    if pixel_count < MIN_MASK_PIXELS {
        return Err(VisionError::NoInstrument);
    }
    let centroid = mask.centroid().expect("nonempty mask");
    Ok(BlueDetection {
        mask,
        centroid,
        pixel_count,
    })
}

/// Pixels close in colour to the body or any bar, largest component only.
pub fn instrument_mask(img: &Image, model: &XylophoneModel, max_dist: f64) -> Mask {
    let palette: Vec<[u8; 3]> = std::iter::once(model.body_color)
        .chain(model.bars.iter().map(|b| b.color))
        .collect();
    let near = |p: [u8; 3]| {
        palette.iter().any(|c| {
            let d2: f64 = (0..3).map(|k| (p[k] as f64 - c[k] as f64).powi(2)).sum();
            d2 <= max_dist * max_dist
        })
    };
    let raw = Mask::from_fn(img.width(), img.height(), |i, j| near(img.get_pixel(i, j).0));
    largest_component(&raw)
}

// Clockwise in image coordinates (y down), starting west.
const RING: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn ring_index(d: (i64, i64)) -> usize {
    RING.iter().position(|&r| r == d).expect("neighbouring pixel")
}

/// Outer boundary of the largest component by Moore-neighbour tracing,
/// as pixel centres in tracing order.
pub fn extract_contour(mask: &Mask) -> Result<Vec<Point2<f64>>, VisionError> {
    let comp = largest_component(mask);
    let Some(first) = comp.data.iter().position(|&b| b) else {
        return Err(VisionError::EmptyMask);
    };
    let w = comp.width as i64;
    let start = (first as i64 % w, first as i64 / w);
    let centre = |p: (i64, i64)| Point2::new(p.0 as f64 + 0.5, p.1 as f64 + 0.5);
    let mut out = vec![centre(start)];
    // The raster-first pixel always has background to its west.
    let (mut cur, mut back) = (start, 0usize);
    let mut first_step = None;
    let limit = 4 * comp.count() + 8;
    for _ in 0..limit {
        let found = (1..=8)
            .map(|k| (back + k) % 8)
            .find(|&d| comp.get(cur.0 + RING[d].0, cur.1 + RING[d].1));
        let Some(d) = found else { break };
        let next = (cur.0 + RING[d].0, cur.1 + RING[d].1);
        // Done once the walk would repeat its first step.
        if cur == start {
            match first_step {
                None => first_step = Some(next),
                Some(f) if f == next => break,
                Some(_) => {}
            }
        }
        let prev = RING[(d + 7) % 8];
        back = ring_index((cur.0 + prev.0 - next.0, cur.1 + prev.1 - next.1));
        cur = next;
        if cur != start {
            out.push(centre(cur));
        }
    }
    Ok(out)
}
