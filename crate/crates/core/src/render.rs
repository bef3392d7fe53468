//! Heatmap overlays and channel point maps as RGB images.
//!
//! The colormap runs from blue (low) to red (high) along the HSV hue circle
//! at full saturation and value: `hue = 240 * (1 - v)` degrees, so
//! `0 -> (0,0,255)`, `0.25 -> (0,255,255)`, `0.5 -> (0,255,0)`,
//! `0.75 -> (255,255,0)`, `1 -> (255,0,0)`. Channels are rounded to nearest.

use std::path::Path;

use crate::error::{Error, Result};
use crate::pngio;
use crate::shift::ShiftKind;

/// Packed 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn filled(height: usize, width: usize, color: [u8; 3]) -> Self {
        Self {
            height,
            width,
            pixels: color.iter().copied().cycle().take(height * width * 3).collect(),
        }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, y: usize, x: usize, c: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let (height, width, pixels) = pngio::read_rgb_png(path)?;
        Ok(Self { height, width, pixels })
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        pngio::write_rgb_png(path, self.height, self.width, &self.pixels)
    }
}

fn channel(x: f64) -> u8 {
    (x * 255.0).round() as u8
}

/// Blue-to-red hue ramp for a value in `[0, 1]` (clamped).
pub fn colormap(v: f64) -> [u8; 3] {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let h = 4.0 * (1.0 - v); // hue / 60 degrees, in [0, 4]
    let sector = (h.floor() as usize).min(3);
    let f = h - sector as f64;
    let (r, g, b) = match sector {
        0 => (1.0, f, 0.0),
        1 => (1.0 - f, 1.0, 0.0),
        2 => (0.0, 1.0, f),
        _ => (0.0, 1.0 - f, 1.0),
    };
    [channel(r), channel(g), channel(b)]
}

/// Colormapped slice, alpha-blended over `base` when one is given:
/// `out = round(alpha * heat + (1 - alpha) * base)`.
pub fn overlay(slice: &[f32], height: usize, width: usize, base: Option<&RgbImage>, alpha: f64) -> Result<RgbImage> {
    if slice.len() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "slice has {} values for a {height}x{width} image",
            slice.len()
        )));
    }
    if let Some(b) = base {
        if (b.height, b.width) != (height, width) {
            return Err(Error::ShapeMismatch(format!(
                "base image is {}x{}, map is {height}x{width}",
                b.height, b.width
            )));
        }
    }
    let mut pixels = Vec::with_capacity(slice.len() * 3);
    for (i, &v) in slice.iter().enumerate() {
        let heat = colormap(v as f64);
        match base {
            None => pixels.extend_from_slice(&heat),
            Some(b) => {
                for (&h, &p) in heat.iter().zip(&b.pixels[3 * i..3 * i + 3]) {
                    let mixed = alpha * h as f64 + (1.0 - alpha) * p as f64;
                    pixels.push(mixed.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    Ok(RgbImage { height, width, pixels })
}

pub const B2F_COLOR: [u8; 3] = [0, 0, 255];
pub const F2B_COLOR: [u8; 3] = [255, 0, 0];
pub const UNSHIFTED_COLOR: [u8; 3] = [128, 128, 128];

pub fn shift_color(kind: ShiftKind) -> [u8; 3] {
    match kind {
        ShiftKind::BackgroundToForeground => B2F_COLOR,
        ShiftKind::ForegroundToBackground => F2B_COLOR,
        ShiftKind::Unshifted => UNSHIFTED_COLOR,
    }
}

/// One drawn channel point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawPoint {
    pub grid_index: usize,
    pub value: f64,
    pub color: [u8; 3],
}

/// Radius in pixels for a pooled value, scaled over the value range of all
/// points: 1 for the smallest, 4 for the largest.
fn radius(value: f64, lo: f64, hi: f64) -> i64 {
    let t = if hi - lo > 0.0 { (value - lo) / (hi - lo) } else { 0.5 };
    1 + (3.0 * t).round() as i64
}

/// Draws points at the centers of their grid cells over `base`, or over a
/// light canvas that shades foreground cells when `foreground` is given.
pub fn render_points(
    points: &[DrawPoint],
    grid: (usize, usize),
    size: (usize, usize),
    base: Option<&RgbImage>,
    foreground: Option<&[bool]>,
) -> Result<RgbImage> {
    let (h, w) = grid;
    let (hh, ww) = size;
    let mut img = match base {
        Some(b) if (b.height, b.width) == (hh, ww) => b.clone(),
        Some(b) => {
            return Err(Error::ShapeMismatch(format!(
                "base image is {}x{}, expected {hh}x{ww}",
                b.height, b.width
            )))
        }
        None => {
            let mut canvas = RgbImage::filled(hh, ww, [245, 245, 245]);
            if let Some(fg) = foreground {
                for y in 0..hh {
                    for x in 0..ww {
                        if fg[(y * h / hh) * w + x * w / ww] {
                            canvas.put(y, x, [205, 205, 205]);
                        }
                    }
                }
            }
            canvas
        }
    };
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.value), hi.max(p.value))
    });
    for p in points {
        if p.grid_index >= h * w {
            return Err(Error::GridMismatch(format!(
                "point index {} outside {h}x{w}",
                p.grid_index
            )));
        }
        let cy = ((p.grid_index / w) as f64 + 0.5) * hh as f64 / h as f64;
        let cx = ((p.grid_index % w) as f64 + 0.5) * ww as f64 / w as f64;
        let r = radius(p.value, lo, hi);
        let (cy, cx) = (cy.floor() as i64, cx.floor() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (y, x) = (cy + dy, cx + dx);
                if y >= 0 && x >= 0 && (y as usize) < hh && (x as usize) < ww {
                    img.put(y as usize, x as usize, p.color);
                }
            }
        }
    }
    Ok(img)
}
