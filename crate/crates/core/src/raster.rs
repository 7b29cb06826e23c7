//! Trajectories, glyphs and the trajectory-to-glyph rasterizer.
//!
//! A finalized trajectory is cropped to its bounding box, scaled uniformly so
//! that the stroked drawing fits a 40 px content box, centred on the 56 x 56
//! canvas and drawn as a chain of round-capped segments. Drawing happens in
//! glyph space on a 4x supersampled grid, so stroke thickness does not depend
//! on how large the gesture was in the camera frame.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::GLYPH_SIDE;

/// Side of the square the stroked drawing is normalized into.
pub const CONTENT_BOX: f64 = 40.0;
/// Default stroke width in glyph pixels.
pub const DEFAULT_STROKE_WIDTH: f64 = 4.0;
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPoint {
    pub x: f64,
    pub y: f64,
    pub t_ms: u64,
}

/// Ordered pen-down tip positions in capture pixel coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TimedPoint>,
    pub stream: String,
}

impl Trajectory {
    pub fn new(stream: impl Into<String>) -> Self {
        Self {
            points: Vec::new(),
            stream: stream.into(),
        }
    }

    pub fn from_points(points: &[(f64, f64)]) -> Self {
        Self {
            points: points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| TimedPoint {
                    x,
                    y,
                    t_ms: i as u64,
                })
                .collect(),
            stream: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of straight segments in the piecewise-linear curve.
    pub fn segments(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn push(&mut self, x: f64, y: f64, t_ms: u64) {
        self.points.push(TimedPoint { x, y, t_ms });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Live,
    Replay,
    Synthetic,
    Imported,
}

/// 56 x 56 grayscale image, white strokes on black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pixels: Vec<u8>,
    pub provenance: Provenance,
    pub label: Option<u8>,
}

impl Glyph {
    pub fn new(pixels: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if pixels.len() != GLYPH_SIDE * GLYPH_SIDE {
            return Err(Error::GlyphSize {
                width: GLYPH_SIDE,
                height: pixels.len() / GLYPH_SIDE,
            });
        }
        Ok(Self {
            pixels,
            provenance,
            label: None,
        })
    }

    pub fn blank() -> Self {
        Self {
            pixels: vec![0; GLYPH_SIDE * GLYPH_SIDE],
            provenance: Provenance::Imported,
            label: None,
        }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * GLYPH_SIDE + x]
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|&p| p == 0)
    }

    pub fn transposed(&self) -> Self {
        let mut pixels = vec![0; GLYPH_SIDE * GLYPH_SIDE];
        for y in 0..GLYPH_SIDE {
            for x in 0..GLYPH_SIDE {
                pixels[x * GLYPH_SIDE + y] = self.pixels[y * GLYPH_SIDE + x];
            }
        }
        Self {
            pixels,
            ..self.clone()
        }
    }
}

/// Renders a finalized trajectory into a glyph.
///
/// `stroke_width` is measured in glyph pixels. Fails with
/// [`Error::DegenerateGlyph`] when fewer than two points are given or all
/// points coincide.
pub fn rasterize(trajectory: &Trajectory, stroke_width: f64) -> Result<Glyph> {
    let pts = &trajectory.points;
    let first = pts.first().ok_or(Error::DegenerateGlyph)?;
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (first.x, first.x, first.y, first.y);
    for p in pts {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let span = (max_x - min_x).max(max_y - min_y);
    if !(span > 0.0) {
        return Err(Error::DegenerateGlyph);
    }
    if !(stroke_width > 0.0 && stroke_width < CONTENT_BOX) {
        return Err(Error::InvalidConfig("stroke width must lie in (0, 40)".into()));
    }

    let radius = stroke_width / 2.0;
    let scale = (CONTENT_BOX - stroke_width) / span;
    let (cx, cy) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
    let centre = GLYPH_SIDE as f64 / 2.0;
    let ss = SUPERSAMPLE as f64;
    // glyph coordinates scaled to the supersampled grid
    let mapped: Vec<(f64, f64)> = pts
        .iter()
        .map(|p| {
            (
                (centre + (p.x - cx) * scale) * ss,
                (centre + (p.y - cy) * scale) * ss,
            )
        })
        .collect();

    let grid = GLYPH_SIDE * SUPERSAMPLE;
    let mut hit = vec![false; grid * grid];
    let r = radius * ss;
    let segments = mapped.windows(2).map(|w| (w[0], w[1]));
    let single = (mapped.len() == 1).then(|| (mapped[0], mapped[0]));
    for (a, b) in segments.chain(single) {
        stamp_capsule(&mut hit, grid, a, b, r);
    }

    let per_pixel = (SUPERSAMPLE * SUPERSAMPLE) as u32;
    let mut pixels = vec![0u8; GLYPH_SIDE * GLYPH_SIDE];
    for gy in 0..GLYPH_SIDE {
        for gx in 0..GLYPH_SIDE {
            let mut count = 0u32;
            for sy in 0..SUPERSAMPLE {
                let row = (gy * SUPERSAMPLE + sy) * grid + gx * SUPERSAMPLE;
                count += hit[row..row + SUPERSAMPLE].iter().filter(|&&h| h).count() as u32;
            }
            pixels[gy * GLYPH_SIDE + gx] = ((count * 255 + per_pixel / 2) / per_pixel) as u8;
        }
    }
    Glyph::new(pixels, Provenance::Live)
}

/// Marks grid cells whose centre lies within `r` of segment `ab`.
fn stamp_capsule(hit: &mut [bool], grid: usize, a: (f64, f64), b: (f64, f64), r: f64) {
    let lo_x = (a.0.min(b.0) - r).floor().max(0.0) as usize;
    let hi_x = ((a.0.max(b.0) + r).ceil() as usize).min(grid);
    let lo_y = (a.1.min(b.1) - r).floor().max(0.0) as usize;
    let hi_y = ((a.1.max(b.1) + r).ceil() as usize).min(grid);
    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
    let len2 = ex * ex + ey * ey;
    let r2 = r * r;
    for y in lo_y..hi_y {
        let py = y as f64 + 0.5;
        for x in lo_x..hi_x {
            let px = x as f64 + 0.5;
            let (dx, dy) = (px - a.0, py - a.1);
            let t = if len2 > 0.0 {
                ((dx * ex + dy * ey) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (dx - t * ex, dy - t * ey);
            if qx * qx + qy * qy <= r2 {
                hit[y * grid + x] = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_segment_becomes_centred_bar() {
        let t = Trajectory::from_points(&[(100.0, 100.0), (200.0, 100.0)]);
        let g = rasterize(&t, DEFAULT_STROKE_WIDTH).unwrap();
        // rows 26..=29 carry the stroke, i.e. centred on y = 28 in continuous coordinates
        for y in 0..GLYPH_SIDE {
            let any = (0..GLYPH_SIDE).any(|x| g.at(x, y) > 0);
            assert_eq!(any, (26..=29).contains(&y), "row {y}");
        }
        for y in [27, 28] {
            let cols: Vec<usize> = (0..GLYPH_SIDE).filter(|&x| g.at(x, y) > 0).collect();
            assert_eq!(cols.first(), Some(&8));
            assert_eq!(cols.last(), Some(&47));
            assert_eq!(cols.len(), 40);
        }
        assert_eq!(g.at(28, 28), 255);
        assert_eq!(g.at(10, 27), 255);
    }

    #[test]
    fn degenerate_inputs() {
        let same = Trajectory::from_points(&[(3.0, 4.0), (3.0, 4.0), (3.0, 4.0)]);
        assert_eq!(rasterize(&same, 4.0), Err(Error::DegenerateGlyph));
        assert_eq!(rasterize(&Trajectory::default(), 4.0), Err(Error::DegenerateGlyph));
    }

    #[test]
    fn duplicate_points_do_not_change_the_drawing() {
        let a = Trajectory::from_points(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]);
        let b = Trajectory::from_points(&[(0.0, 0.0), (10.0, 0.0), (10.0, 0.0), (10.0, 10.0)]);
        assert_eq!(a.segments(), 2);
        assert_eq!(rasterize(&a, 4.0).unwrap(), rasterize(&b, 4.0).unwrap());
    }

    #[test]
    fn vertical_and_horizontal_strokes_are_transposes() {
        let h = Trajectory::from_points(&[(10.0, 50.0), (90.0, 50.0)]);
        let v = Trajectory::from_points(&[(50.0, 10.0), (50.0, 90.0)]);
        let gh = rasterize(&h, 4.0).unwrap();
        let gv = rasterize(&v, 4.0).unwrap();
        assert_eq!(gh.transposed(), gv);
    }

    #[test]
    fn glyph_size_is_enforced() {
        assert!(Glyph::new(vec![0; 55 * 56], Provenance::Live).is_err());
    }
}
