//! Colour-marker segmentation, connected components and tip extraction.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default minimum component area, in pixels at 640 x 480.
pub const DEFAULT_MIN_AREA: usize = 25;

/// One captured RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub timestamp_ms: u64,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, timestamp_ms: u64) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height * 3 {
            return Err(Error::LengthMismatch {
                what: "frame bytes vs width * height * 3",
                left: pixels.len(),
                right: width * height * 3,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp_ms,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3], timestamp_ms: u64) -> Self {
        Self {
            width,
            height,
            pixels: rgb.repeat(width * height),
            timestamp_ms,
        }
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta) % 6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let hue = if hue < 0.0 { hue + 360.0 } else { hue };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}

/// Reference marker colour with an acceptance band around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerColorSpec {
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
    pub hue_tolerance: f64,
    pub saturation_tolerance: f64,
    pub value_tolerance: f64,
}

impl Default for MarkerColorSpec {
    /// Saturated green.
    fn default() -> Self {
        Self::from_rgb([0, 200, 0])
    }
}

impl MarkerColorSpec {
    /// Reference taken from an RGB colour, with the default tolerances.
    pub fn from_rgb(rgb: [u8; 3]) -> Self {
        let (hue, saturation, value) = rgb_to_hsv(rgb);
        Self {
            hue,
            saturation,
            value,
            hue_tolerance: 15.0,
            saturation_tolerance: 0.3,
            value_tolerance: 0.3,
        }
    }

    pub fn exact(rgb: [u8; 3]) -> Self {
        Self {
            hue_tolerance: 0.0,
            saturation_tolerance: 0.0,
            value_tolerance: 0.0,
            ..Self::from_rgb(rgb)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.hue,
            self.saturation,
            self.value,
            self.hue_tolerance,
            self.saturation_tolerance,
            self.value_tolerance,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("marker colour values must be finite".into()));
        }
        if !(0.0..360.0).contains(&self.hue)
            || !(0.0..=1.0).contains(&self.saturation)
            || !(0.0..=1.0).contains(&self.value)
        {
            return Err(Error::InvalidConfig("marker colour out of HSV range".into()));
        }
        if self.hue_tolerance < 0.0 || self.saturation_tolerance < 0.0 || self.value_tolerance < 0.0 {
            return Err(Error::InvalidConfig("marker colour tolerances must be non-negative".into()));
        }
        Ok(())
    }

    pub fn matches(&self, rgb: [u8; 3]) -> bool {
        let (h, s, v) = rgb_to_hsv(rgb);
        let d = (h - self.hue).abs();
        let hue_distance = d.min(360.0 - d);
        hue_distance <= self.hue_tolerance
            && (s - self.saturation).abs() <= self.saturation_tolerance
            && (v - self.value).abs() <= self.value_tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "mask bits vs width * height",
                left: bits.len(),
                right: width * height,
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn segment(frame: &Frame, spec: &MarkerColorSpec) -> SegmentationMask {
    let bits = frame
        .pixels
        .chunks_exact(3)
        .map(|p| spec.matches([p[0], p[1], p[2]]))
        .collect();
    SegmentationMask {
        width: frame.width,
        height: frame.height,
        bits,
    }
}

/// An 8-connected set of mask pixels, listed in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

/// All 8-connected components, ordered by their first pixel in row-major order.
pub fn components(mask: &SegmentationMask) -> Vec<Component> {
    let (w, h) = (mask.width, mask.height);
    const NONE: u32 = u32::MAX;
    let mut label = vec![NONE; w * h];
    let mut parent: Vec<u32> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut neighbours = [NONE; 4];
            if x > 0 {
                neighbours[0] = label[y * w + x - 1];
            }
            if y > 0 {
                let row = (y - 1) * w;
                if x > 0 {
                    neighbours[1] = label[row + x - 1];
                }
                neighbours[2] = label[row + x];
                if x + 1 < w {
                    neighbours[3] = label[row + x + 1];
                }
            }
            let mut own = NONE;
            for &n in neighbours.iter().filter(|&&n| n != NONE) {
                let root = find(&mut parent, n);
                if own == NONE {
                    own = root;
                } else if root != own {
                    let (lo, hi) = if root < own { (root, own) } else { (own, root) };
                    parent[hi as usize] = lo;
                    own = lo;
                }
            }
            if own == NONE {
                own = parent.len() as u32;
                parent.push(own);
            }
            label[y * w + x] = own;
        }
    }

    let mut slot = vec![NONE; parent.len()];
    let mut out: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = label[y * w + x];
            if l == NONE {
                continue;
            }
            let root = find(&mut parent, l) as usize;
            if slot[root] == NONE {
                slot[root] = out.len() as u32;
                out.push(Component {
                    pixels: Vec::new(),
                    min_x: x,
                    min_y: y,
                    max_x: x,
                    max_y: y,
                });
            }
            let c = &mut out[slot[root] as usize];
            c.pixels.push((x, y));
            c.min_x = c.min_x.min(x);
            c.max_x = c.max_x.max(x);
            c.max_y = y;
        }
    }
    out
}

/// The component with the most pixels, if it reaches `min_area`.
///
/// Equal areas are resolved by the bounding-box top-left corner in row-major
/// order, then by the first pixel in row-major order.
pub fn largest_component(mask: &SegmentationMask, min_area: usize) -> Option<Component> {
    // components() is already ordered by first pixel, so a stable minimum
    // over (area desc, corner) applies the final tie-break for free
    components(mask)
        .into_iter()
        .filter(|c| c.area() >= min_area.max(1))
        .min_by(|a, b| {
            b.area()
                .cmp(&a.area())
                .then((a.min_y, a.min_x).cmp(&(b.min_y, b.min_x)))
        })
}

/// Topmost pixel; leftmost among the topmost.
pub fn marker_tip(pixels: &[(usize, usize)]) -> Result<(usize, usize)> {
    pixels
        .iter()
        .copied()
        .min_by_key(|&(x, y)| (y, x))
        .ok_or(Error::EmptyComponent)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerObservation {
    pub x: f64,
    pub y: f64,
    pub area: usize,
    pub found: bool,
    pub timestamp_ms: u64,
}

impl MarkerObservation {
    pub fn found(x: f64, y: f64, timestamp_ms: u64) -> Self {
        Self {
            x,
            y,
            area: 1,
            found: true,
            timestamp_ms,
        }
    }

    pub fn missing(timestamp_ms: u64) -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            area: 0,
            found: false,
            timestamp_ms,
        }
    }
}

/// Per-stream tracker; frames must arrive in timestamp order.
#[derive(Debug, Clone)]
pub struct MarkerTracker {
    pub spec: MarkerColorSpec,
    pub min_area: usize,
    last_timestamp: Option<u64>,
}

impl MarkerTracker {
    pub fn new(spec: MarkerColorSpec, min_area: usize) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            min_area,
            last_timestamp: None,
        })
    }

    pub fn observe(&mut self, frame: &Frame) -> Result<MarkerObservation> {
        if let Some(previous) = self.last_timestamp {
            if frame.timestamp_ms <= previous {
                return Err(Error::NonMonotonicTimestamp {
                    previous,
                    current: frame.timestamp_ms,
                });
            }
        }
        self.last_timestamp = Some(frame.timestamp_ms);
        let mask = segment(frame, &self.spec);
        Ok(match largest_component(&mask, self.min_area) {
            Some(c) => {
                let (x, y) = marker_tip(&c.pixels)?;
                MarkerObservation {
                    x: x as f64,
                    y: y as f64,
                    area: c.area(),
                    found: true,
                    timestamp_ms: frame.timestamp_ms,
                }
            }
            None => MarkerObservation::missing(frame.timestamp_ms),
        })
    }
}

/// Observations for a whole frame sequence.
pub fn track<'a>(
    frames: impl IntoIterator<Item = &'a Frame>,
    spec: &MarkerColorSpec,
    min_area: usize,
) -> Result<Vec<MarkerObservation>> {
    let mut tracker = MarkerTracker::new(*spec, min_area)?;
    frames.into_iter().map(|f| tracker.observe(f)).collect()
}
