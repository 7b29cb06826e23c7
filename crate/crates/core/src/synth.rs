//! Synthetic air-writing: unistroke digit templates, virtual writers, a
//! gesture generator producing replay streams, and a disc renderer that turns
//! streams into camera-like frames.
//!
//! Glyphs for the air-written splits are made by replaying generated streams
//! through [`crate::motion`], never by drawing templates directly.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, SplitName};
use crate::error::{Error, Result};
use crate::motion::{replay_observations, segment_stream, MotionConfig, ReplayPoint, NOMINAL_HEIGHT, NOMINAL_WIDTH};
use crate::raster::{Glyph, Provenance};
use crate::rng;
use crate::vision::Frame;
use crate::GLYPH_SIDE;

/// Width of a template box relative to its height.
const DIGIT_ASPECT: f64 = 0.7;
const SAMPLES_PER_SPAN: usize = 24;
const MAX_ATTEMPTS: u64 = 8;
/// Fixed seed for the virtual-writer population.
const WRITER_SEED: u64 = 0x5752_4954_4552_5300;

pub const WRITER_COUNT: usize = 20;
/// Writers whose gestures make up the air-written training split.
pub const TRAIN_WRITERS: Range<usize> = 0..12;
/// Writers reserved for evaluation.
pub const EVAL_WRITERS: Range<usize> = 12..20;

/// An ordered unistroke path in the unit square (y grows downwards).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureTemplate {
    pub class: u8,
    pub points: Vec<(f64, f64)>,
    /// Pause at each control point, in seconds. A positive pause also makes
    /// the point a sharp corner.
    pub dwell: Vec<f64>,
}

impl GestureTemplate {
    pub fn new(class: u8, points: Vec<(f64, f64)>, dwell: Vec<f64>) -> Result<Self> {
        let t = Self { class, points, dwell };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 3 {
            return Err(Error::InvalidConfig("a gesture template needs at least 3 control points".into()));
        }
        if self.dwell.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                what: "template dwell times vs control points",
                left: self.dwell.len(),
                right: self.points.len(),
            });
        }
        let finite = self.points.iter().all(|p| p.0.is_finite() && p.1.is_finite());
        if !finite || self.dwell.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidConfig("template values must be finite, dwell non-negative".into()));
        }
        Ok(())
    }
}

fn template(class: u8, pts: &[(f64, f64)], corners: &[usize]) -> GestureTemplate {
    let mut dwell = vec![0.0; pts.len()];
    for &c in corners {
        dwell[c] = 0.08;
    }
    GestureTemplate {
        class,
        points: pts.to_vec(),
        dwell,
    }
}

/// One unistroke template per digit 0-9.
pub fn digit_templates() -> Vec<GestureTemplate> {
    vec![
        template(
            0,
            &[
                (0.55, 0.0),
                (0.25, 0.08),
                (0.05, 0.35),
                (0.05, 0.65),
                (0.25, 0.93),
                (0.5, 1.0),
                (0.75, 0.93),
                (0.95, 0.65),
                (0.95, 0.35),
                (0.78, 0.07),
                (0.5, 0.0),
                (0.35, 0.06),
            ],
            &[],
        ),
        template(1, &[(0.5, 0.0), (0.5, 0.5), (0.5, 1.0)], &[]),
        template(
            2,
            &[
                (0.08, 0.25),
                (0.3, 0.03),
                (0.62, 0.0),
                (0.88, 0.18),
                (0.82, 0.42),
                (0.45, 0.72),
                (0.05, 1.0),
                (0.95, 1.0),
            ],
            &[6],
        ),
        template(
            3,
            &[
                (0.1, 0.1),
                (0.45, 0.0),
                (0.8, 0.08),
                (0.85, 0.27),
                (0.62, 0.45),
                (0.38, 0.48),
                (0.72, 0.55),
                (0.92, 0.75),
                (0.76, 0.95),
                (0.4, 1.0),
                (0.08, 0.9),
            ],
            &[5],
        ),
        template(
            4,
            &[(0.72, 1.0), (0.72, 0.5), (0.72, 0.0), (0.05, 0.65), (0.95, 0.65)],
            &[2, 3],
        ),
        template(
            5,
            &[
                (0.88, 0.0),
                (0.25, 0.0),
                (0.18, 0.45),
                (0.5, 0.37),
                (0.8, 0.5),
                (0.88, 0.72),
                (0.75, 0.93),
                (0.45, 1.0),
                (0.1, 0.9),
            ],
            &[1, 2],
        ),
        template(
            6,
            &[
                (0.78, 0.0),
                (0.42, 0.18),
                (0.15, 0.52),
                (0.12, 0.8),
                (0.35, 1.0),
                (0.65, 1.0),
                (0.87, 0.8),
                (0.76, 0.58),
                (0.45, 0.52),
                (0.18, 0.66),
            ],
            &[],
        ),
        template(7, &[(0.05, 0.0), (0.95, 0.0), (0.6, 0.5), (0.38, 1.0)], &[1]),
        template(
            8,
            &[
                (0.8, 0.12),
                (0.5, 0.0),
                (0.2, 0.12),
                (0.25, 0.35),
                (0.5, 0.5),
                (0.78, 0.68),
                (0.8, 0.9),
                (0.5, 1.0),
                (0.2, 0.9),
                (0.22, 0.68),
                (0.5, 0.5),
                (0.75, 0.32),
                (0.78, 0.12),
            ],
            &[],
        ),
        template(
            9,
            &[
                (0.82, 0.2),
                (0.6, 0.0),
                (0.3, 0.02),
                (0.13, 0.2),
                (0.3, 0.4),
                (0.6, 0.4),
                (0.82, 0.22),
                (0.8, 0.6),
                (0.74, 1.0),
            ],
            &[6],
        ),
    ]
}

/// Alternative forms some writers use. Without a pen lift, multi-stroke
/// digits carry the travel between strokes as an extra line.
pub fn template_variants() -> Vec<GestureTemplate> {
    vec![
        template(
            1,
            &[(0.25, 0.2), (0.55, 0.0), (0.55, 0.5), (0.55, 1.0), (0.2, 1.0), (0.9, 1.0)],
            &[1, 3, 4],
        ),
        template(
            2,
            &[
                (0.08, 0.25),
                (0.3, 0.03),
                (0.62, 0.0),
                (0.88, 0.18),
                (0.82, 0.42),
                (0.45, 0.72),
                (0.12, 0.97),
                (0.08, 0.84),
                (0.25, 0.8),
                (0.35, 0.95),
                (0.95, 1.0),
            ],
            &[],
        ),
        template(
            3,
            &[
                (0.1, 0.0),
                (0.85, 0.0),
                (0.45, 0.4),
                (0.8, 0.55),
                (0.9, 0.78),
                (0.7, 0.97),
                (0.35, 1.0),
                (0.08, 0.88),
            ],
            &[1, 2],
        ),
        template(
            4,
            &[(0.3, 0.0), (0.05, 0.62), (0.95, 0.62), (0.72, 0.0), (0.72, 0.5), (0.72, 1.0)],
            &[1, 2, 3],
        ),
        template(
            5,
            &[
                (0.25, 0.0),
                (0.18, 0.45),
                (0.5, 0.37),
                (0.8, 0.5),
                (0.88, 0.72),
                (0.75, 0.93),
                (0.45, 1.0),
                (0.1, 0.9),
                (0.25, 0.0),
                (0.88, 0.0),
            ],
            &[1, 7, 8],
        ),
        template(
            7,
            &[(0.05, 0.0), (0.95, 0.0), (0.6, 0.5), (0.38, 1.0), (0.3, 0.52), (0.82, 0.48)],
            &[1, 3, 4],
        ),
        template(
            8,
            &[
                (0.75, 0.1),
                (0.5, 0.0),
                (0.22, 0.12),
                (0.25, 0.35),
                (0.5, 0.5),
                (0.78, 0.7),
                (0.75, 0.92),
                (0.5, 1.0),
                (0.22, 0.9),
                (0.25, 0.7),
                (0.5, 0.42),
                (0.78, 0.12),
            ],
            &[],
        ),
        template(
            9,
            &[
                (0.82, 0.2),
                (0.6, 0.0),
                (0.3, 0.02),
                (0.13, 0.2),
                (0.3, 0.4),
                (0.6, 0.4),
                (0.82, 0.22),
                (0.8, 0.6),
                (0.7, 0.93),
                (0.45, 1.0),
                (0.22, 0.88),
            ],
            &[6],
        ),
    ]
}

/// Every form a virtual writer may use: [`digit_templates`] then
/// [`template_variants`].
pub fn writer_templates() -> Vec<GestureTemplate> {
    let mut all = digit_templates();
    all.extend(template_variants());
    all
}

/// Perturbations applied to one gesture. Spatial magnitudes are in template
/// units (digit heights) unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Mean rotation in degrees (a writer's slant).
    pub slant_deg: f64,
    /// Maximum per-gesture rotation around the slant, degrees.
    pub rotation_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Mean horizontal shear.
    pub shear_bias: f64,
    /// Maximum per-gesture shear around the bias.
    pub shear: f64,
    /// Standard deviation of control-point displacement.
    pub control_jitter: f64,
    /// Standard deviation of the smooth low-frequency deformation.
    pub wobble: f64,
    /// Pen speed, digit heights per second.
    pub speed: f64,
    /// Relative spread of stroke-piece durations.
    pub speed_variation: f64,
    /// Per-frame positional noise, frame heights.
    pub tremor: f64,
    /// Digit height, frame heights.
    pub size: f64,
    pub fps: f64,
    pub lead_dwell: f64,
    pub trail_dwell: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            slant_deg: 0.0,
            rotation_deg: 8.0,
            scale_min: 0.9,
            scale_max: 1.1,
            shear_bias: 0.0,
            shear: 0.05,
            control_jitter: 0.025,
            wobble: 0.012,
            speed: 1.0,
            speed_variation: 0.2,
            tremor: 0.00003,
            size: 0.35,
            fps: 30.0,
            lead_dwell: 0.5,
            trail_dwell: 0.8,
        }
    }
}

impl NoiseParams {
    /// No randomness at all: the stream follows the template exactly.
    pub fn none() -> Self {
        Self {
            rotation_deg: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            shear: 0.0,
            control_jitter: 0.0,
            wobble: 0.0,
            speed_variation: 0.0,
            tremor: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.slant_deg.abs() + self.rotation_deg > 15.0 + 1e-9 || self.rotation_deg < 0.0 {
            return bad("rotation must stay within 15 degrees");
        }
        if !(0.8..=1.2).contains(&self.scale_min) || !(self.scale_min..=1.2).contains(&self.scale_max) {
            return bad("scale range must lie within [0.8, 1.2]");
        }
        if self.shear_bias.abs() + self.shear > 0.1 + 1e-9 || self.shear < 0.0 {
            return bad("shear must stay within 0.1");
        }
        if self.control_jitter < 0.0 || self.wobble < 0.0 || self.tremor < 0.0 {
            return bad("noise magnitudes must be non-negative");
        }
        if !(0.0..1.0).contains(&self.speed_variation) {
            return bad("speed_variation must lie in [0, 1)");
        }
        if !(self.speed > 0.0 && self.size > 0.0 && self.size <= 0.8 && self.fps > 0.0) {
            return bad("speed, size and fps must be positive, size at most 0.8");
        }
        if self.lead_dwell < 0.0 || self.trail_dwell < 0.0 {
            return bad("dwell times must be non-negative");
        }
        Ok(())
    }
}

/// A fixed noise profile standing in for one person's writing habits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualWriter {
    pub id: usize,
    pub noise: NoiseParams,
}

impl VirtualWriter {
    /// The writer's form of `class` among `templates`. Writers keep one form
    /// per digit; consecutive writer ids alternate between forms.
    pub fn pick<'a>(&self, templates: &'a [GestureTemplate], class: u8) -> Option<&'a GestureTemplate> {
        let forms: Vec<&GestureTemplate> = templates.iter().filter(|t| t.class == class).collect();
        if forms.is_empty() {
            return None;
        }
        Some(forms[(self.id + class as usize) % forms.len()])
    }
}

/// Distinct classes of `templates` in order of first appearance.
fn template_classes(templates: &[GestureTemplate]) -> Vec<u8> {
    let mut classes = Vec::new();
    for t in templates {
        if !classes.contains(&t.class) {
            classes.push(t.class);
        }
    }
    classes
}

/// The 20-writer population, identical on every call.
pub fn virtual_writers() -> Vec<VirtualWriter> {
    let mut r = rng::rng(WRITER_SEED);
    (0..WRITER_COUNT)
        .map(|id| {
            let scale: f64 = r.random_range(0.9..1.1);
            let shear_bias = r.random_range(-0.04..0.04);
            VirtualWriter {
                id,
                noise: NoiseParams {
                    slant_deg: r.random_range(-6.0..6.0),
                    rotation_deg: 9.0,
                    scale_min: (scale - 0.08).max(0.8),
                    scale_max: (scale + 0.08).min(1.2),
                    shear_bias,
                    shear: 0.06,
                    control_jitter: r.random_range(0.02..0.05),
                    wobble: r.random_range(0.01..0.03),
                    speed: r.random_range(0.8..1.4),
                    speed_variation: r.random_range(0.1..0.3),
                    tremor: r.random_range(0.00001..0.00004),
                    size: r.random_range(0.28..0.42),
                    ..NoiseParams::default()
                },
            }
        })
        .collect()
}

enum Span {
    Hold { at: (f64, f64), seconds: f64 },
    Move { path: Vec<(f64, f64)>, cumulative: Vec<f64>, seconds: f64 },
}

/// A continuous gesture, independent of the sampling rate.
pub struct GestureCurve {
    spans: Vec<Span>,
    centre: (f64, f64),
    size: f64,
    duration: f64,
}

fn catmull_rom(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64), p3: (f64, f64), t: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let f = |a: f64, b: f64, c: f64, d: f64| {
        0.5 * (2.0 * b + (c - a) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (3.0 * b - a - 3.0 * c + d) * t3)
    };
    (f(p0.0, p1.0, p2.0, p3.0), f(p0.1, p1.1, p2.1, p3.1))
}

/// Dense samples of a Catmull-Rom spline through `ctrl`, ends clamped.
fn spline(ctrl: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = ctrl.len();
    let mut out = Vec::with_capacity((n - 1) * SAMPLES_PER_SPAN + 1);
    for i in 0..n - 1 {
        let p0 = ctrl[i.saturating_sub(1)];
        let p3 = ctrl[(i + 2).min(n - 1)];
        for s in 0..SAMPLES_PER_SPAN {
            out.push(catmull_rom(p0, ctrl[i], ctrl[i + 1], p3, s as f64 / SAMPLES_PER_SPAN as f64));
        }
    }
    out.push(ctrl[n - 1]);
    out
}

fn cumulative_length(path: &[(f64, f64)]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(path.len());
    out.push(0.0);
    for w in path.windows(2) {
        acc += ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
        out.push(acc);
    }
    out
}

/// Point at arc length `s` along a sampled path.
fn along(path: &[(f64, f64)], cumulative: &[f64], s: f64) -> (f64, f64) {
    let i = cumulative.partition_point(|&c| c <= s).clamp(1, path.len() - 1);
    let (c0, c1) = (cumulative[i - 1], cumulative[i]);
    let f = if c1 > c0 { ((s - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
    let (a, b) = (path[i - 1], path[i]);
    (a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f)
}

/// Fraction of a stroke piece spent accelerating (and again decelerating).
const RAMP: f64 = 0.2;

/// Progress along a piece at constant speed, with raised-cosine ramps at both
/// ends so the pen starts and stops smoothly.
fn eased(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    let peak = 1.0 / (1.0 - RAMP);
    let ramp = |t: f64| peak * (t / 2.0 - RAMP / (2.0 * PI) * (PI * t / RAMP).sin());
    if t < RAMP {
        ramp(t)
    } else if t <= 1.0 - RAMP {
        peak * (RAMP / 2.0 + t - RAMP)
    } else {
        1.0 - ramp(1.0 - t)
    }
}

fn uniform<R: Rng>(r: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        r.random_range(lo..hi)
    } else {
        lo
    }
}

fn gaussian<R: Rng>(r: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(r)
    } else {
        0.0
    }
}

impl GestureCurve {
    pub fn new(template: &GestureTemplate, noise: &NoiseParams, seed: u64) -> Result<Self> {
        template.validate()?;
        noise.validate()?;
        let mut r = rng::rng(seed);

        let ctrl: Vec<(f64, f64)> = template
            .points
            .iter()
            .map(|&(x, y)| {
                let jx = gaussian(&mut r, noise.control_jitter);
                let jy = gaussian(&mut r, noise.control_jitter);
                ((x - 0.5) * DIGIT_ASPECT + jx, y - 0.5 + jy)
            })
            .collect();

        // smooth deformation: a few low-frequency modes per axis
        let modes: Vec<(f64, f64, f64, f64)> = (1..=3)
            .map(|k| {
                let amp = noise.wobble / k as f64;
                (
                    gaussian(&mut r, amp),
                    r.random_range(0.0..2.0 * PI),
                    gaussian(&mut r, amp),
                    r.random_range(0.0..2.0 * PI),
                )
            })
            .collect();

        let theta = (noise.slant_deg + uniform(&mut r, -noise.rotation_deg, noise.rotation_deg)).to_radians();
        let scale = uniform(&mut r, noise.scale_min, noise.scale_max);
        let shear = noise.shear_bias + uniform(&mut r, -noise.shear, noise.shear);
        let (sin, cos) = (theta.sin(), theta.cos());
        let affine = |(x, y): (f64, f64)| {
            let x = x + shear * y;
            (scale * (cos * x - sin * y), scale * (sin * x + cos * y))
        };

        // split at corners, spline each piece
        let mut pieces: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut start = 0;
        for i in 1..ctrl.len() {
            if i == ctrl.len() - 1 || template.dwell[i] > 0.0 {
                pieces.push(spline(&ctrl[start..=i]));
                start = i;
            }
        }
        let total: f64 = pieces
            .iter()
            .map(|p| *cumulative_length(p).last().unwrap_or(&0.0))
            .sum();
        let mut walked = 0.0;
        let mut spans = Vec::new();
        let mut corner = 0;
        for piece in pieces {
            let raw = cumulative_length(&piece);
            let piece_len = *raw.last().unwrap_or(&0.0);
            let path: Vec<(f64, f64)> = piece
                .iter()
                .zip(&raw)
                .map(|(&(x, y), &s)| {
                    let u = if total > 0.0 { (walked + s) / total } else { 0.0 };
                    let (mut wx, mut wy) = (0.0, 0.0);
                    for (k, &(ax, px, ay, py)) in modes.iter().enumerate() {
                        let w = 2.0 * PI * (k + 1) as f64 * u;
                        wx += ax * (w + px).sin();
                        wy += ay * (w + py).sin();
                    }
                    affine((x + wx, y + wy))
                })
                .collect();
            walked += piece_len;
            let cumulative = cumulative_length(&path);
            let length = *cumulative.last().unwrap_or(&0.0);
            let vary = uniform(&mut r, 1.0 - noise.speed_variation, 1.0 + noise.speed_variation);
            let seconds = (length / noise.speed * vary).max(1e-3);
            if corner > 0 {
                let at = path[0];
                let pause = template.dwell[corner];
                if pause > 0.0 {
                    spans.push(Span::Hold { at, seconds: pause });
                }
            }
            corner += piece.len().saturating_sub(1) / SAMPLES_PER_SPAN;
            spans.push(Span::Move {
                path,
                cumulative,
                seconds,
            });
        }

        let centre = (uniform(&mut r, 0.4, 0.6), uniform(&mut r, 0.42, 0.58));
        let duration = spans
            .iter()
            .map(|s| match s {
                Span::Hold { seconds, .. } | Span::Move { seconds, .. } => *seconds,
            })
            .sum();
        Ok(Self {
            spans,
            centre,
            size: noise.size,
            duration,
        })
    }

    /// Writing time, excluding the leading and trailing rest.
    pub fn duration(&self) -> f64 {
        self.duration
    }

    fn start(&self) -> (f64, f64) {
        match &self.spans[0] {
            Span::Hold { at, .. } => *at,
            Span::Move { path, .. } => path[0],
        }
    }

    fn end(&self) -> (f64, f64) {
        match self.spans.last().expect("gesture has spans") {
            Span::Hold { at, .. } => *at,
            Span::Move { path, .. } => *path.last().expect("nonempty path"),
        }
    }

    /// Position in template units at writing time `t`.
    pub fn position(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return self.start();
        }
        let mut t = t;
        for span in &self.spans {
            match span {
                Span::Hold { at, seconds } => {
                    if t <= *seconds {
                        return *at;
                    }
                    t -= seconds;
                }
                Span::Move {
                    path,
                    cumulative,
                    seconds,
                } => {
                    if t <= *seconds {
                        let total = *cumulative.last().unwrap_or(&0.0);
                        return along(path, cumulative, eased(t / seconds) * total);
                    }
                    t -= seconds;
                }
            }
        }
        self.end()
    }

    /// Normalized frame coordinates of a template-space point.
    fn to_frame(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let aspect = NOMINAL_HEIGHT as f64 / NOMINAL_WIDTH as f64;
        (
            (self.centre.0 + x * self.size * aspect).clamp(0.0, 1.0),
            (self.centre.1 + y * self.size).clamp(0.0, 1.0),
        )
    }

    /// Samples the gesture at `fps`, with rests long enough for the motion
    /// model to settle before and after writing at any frame rate.
    pub fn sample(&self, noise: &NoiseParams, fps: f64, seed: u64) -> Vec<ReplayPoint> {
        let lead = noise.lead_dwell.max(6.0 / fps);
        let trail = noise.trail_dwell.max(24.0 / fps);
        let total = lead + self.duration + trail;
        let frames = (total * fps).ceil() as usize + 1;
        let mut r = rng::rng(seed);
        let tremor_x = noise.tremor * NOMINAL_HEIGHT as f64 / NOMINAL_WIDTH as f64;
        (0..frames)
            .map(|k| {
                let t = k as f64 / fps;
                let (x, y) = self.to_frame(self.position(t - lead));
                ReplayPoint {
                    t: (t * 1000.0).round() as u64,
                    x: (x + gaussian(&mut r, tremor_x)).clamp(0.0, 1.0),
                    y: (y + gaussian(&mut r, noise.tremor)).clamp(0.0, 1.0),
                    found: true,
                }
            })
            .collect()
    }
}

/// A replay stream for one gesture, deterministic per seed.
pub fn generate_gesture(template: &GestureTemplate, noise: &NoiseParams, seed: u64) -> Result<Vec<ReplayPoint>> {
    let curve = GestureCurve::new(template, noise, seed)?;
    Ok(curve.sample(noise, noise.fps, rng::derive(seed, 1)))
}

/// Replays a stream through the motion model and returns its only glyph,
/// or `None` unless exactly one non-degenerate stroke came out.
pub fn replay_single_glyph(points: &[ReplayPoint], motion: &MotionConfig) -> Result<Option<Glyph>> {
    let (_, strokes) = segment_stream(&replay_observations(points), *motion, NOMINAL_HEIGHT, Provenance::Synthetic)?;
    Ok(match <[_; 1]>::try_from(strokes) {
        Ok([stroke]) => stroke.glyph,
        Err(_) => None,
    })
}

/// One generated item: template class, writer and the final seed used.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStream {
    pub class: u8,
    pub writer: usize,
    pub seed: u64,
    pub points: Vec<ReplayPoint>,
}

/// `per_class` streams per class, cycling through `writers`, each writing
/// its own form of the class (see [`VirtualWriter::pick`]); item `i` draws
/// from seed `derive(seed, i)`.
pub fn generate_streams(
    templates: &[GestureTemplate],
    per_class: usize,
    writers: &[VirtualWriter],
    seed: u64,
) -> Result<Vec<GeneratedStream>> {
    if templates.is_empty() || writers.is_empty() {
        return Err(Error::InvalidConfig("need at least one template and one writer".into()));
    }
    let classes = template_classes(templates);
    let n = classes.len();
    (0..per_class * n)
        .map(|i| {
            let writer = &writers[(i / n) % writers.len()];
            let template = writer.pick(templates, classes[i % n]).expect("class has a template");
            let item_seed = rng::derive(seed, i as u64);
            Ok(GeneratedStream {
                class: template.class,
                writer: writer.id,
                seed: item_seed,
                points: generate_gesture(template, &writer.noise, item_seed)?,
            })
        })
        .collect()
}

/// Air-written glyph dataset built by replaying generated gestures through
/// the motion model. A gesture that does not give exactly one glyph is
/// regenerated with a fresh seed, up to a fixed number of attempts.
pub fn build_air_dataset(
    templates: &[GestureTemplate],
    per_class: usize,
    writers: &[VirtualWriter],
    motion: &MotionConfig,
    seed: u64,
    split: SplitName,
) -> Result<LabeledDataset> {
    if templates.is_empty() || writers.is_empty() {
        return Err(Error::InvalidConfig("need at least one template and one writer".into()));
    }
    let classes = template_classes(templates);
    let n = classes.len();
    let mut out = LabeledDataset::empty(GLYPH_SIDE, split, "synthetic");
    for i in 0..per_class * n {
        let writer = &writers[(i / n) % writers.len()];
        let template = writer.pick(templates, classes[i % n]).expect("class has a template");
        let item_seed = rng::derive(seed, i as u64);
        let mut glyph = None;
        for attempt in 0..MAX_ATTEMPTS {
            let s = if attempt == 0 { item_seed } else { rng::derive(item_seed, attempt) };
            let points = generate_gesture(template, &writer.noise, s)?;
            if let Some(g) = replay_single_glyph(&points, motion)? {
                glyph = Some(g);
                break;
            }
        }
        let glyph = glyph.ok_or(Error::GenerationFailed {
            item: i,
            attempts: MAX_ATTEMPTS as usize,
        })?;
        out.push(glyph.pixels(), template.class)?;
    }
    Ok(out)
}

fn writer_range(range: Range<usize>) -> Vec<VirtualWriter> {
    virtual_writers()[range].to_vec()
}

/// Seed stream tags keeping the standard corpora disjoint.
const TAG_TS_A: u64 = 0x7a;
const TAG_EVAL: u64 = 0xe7;
const TAG_HELD_OUT: u64 = 0x40;

/// The standard air-written splits: TS-A from training writers, EVAL from
/// evaluation writers, on separate seed streams.
pub fn air_split(split: SplitName, per_class: usize, motion: &MotionConfig, seed: u64) -> Result<LabeledDataset> {
    let (writers, tag) = match split {
        SplitName::TsA => (TRAIN_WRITERS, TAG_TS_A),
        SplitName::Eval => (EVAL_WRITERS, TAG_EVAL),
        ref other => {
            return Err(Error::InvalidConfig(alloc::format!(
                "{other} is not an air-written split"
            )))
        }
    };
    build_air_dataset(
        &writer_templates(),
        per_class,
        &writer_range(writers),
        motion,
        rng::derive(seed, tag),
        split,
    )
}

/// Named stream corpora, each on its own seed stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamSet {
    /// Training writers, same seed stream as the TS-A dataset.
    TsA,
    /// Evaluation writers, same seed stream as the EVAL dataset.
    Eval,
    /// Evaluation writers on a seed stream used by no dataset.
    HeldOut,
}

/// Raw gesture streams for a corpus; `fps` replaces every writer's frame
/// rate when given.
pub fn stream_set(set: StreamSet, per_class: usize, seed: u64, fps: Option<f64>) -> Result<Vec<GeneratedStream>> {
    let (range, tag) = match set {
        StreamSet::TsA => (TRAIN_WRITERS, TAG_TS_A),
        StreamSet::Eval => (EVAL_WRITERS, TAG_EVAL),
        StreamSet::HeldOut => (EVAL_WRITERS, TAG_HELD_OUT),
    };
    let mut writers = writer_range(range);
    if let Some(fps) = fps {
        for w in &mut writers {
            w.noise.fps = fps;
            w.noise.validate()?;
        }
    }
    generate_streams(&writer_templates(), per_class, &writers, rng::derive(seed, tag))
}

/// Streams from the evaluation writers on a seed stream used by no dataset.
pub fn held_out_streams(per_class: usize, seed: u64) -> Result<Vec<GeneratedStream>> {
    stream_set(StreamSet::HeldOut, per_class, seed, None)
}

/// A rendered frame and, when the marker is visible, the ground-truth tip.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub frame: Frame,
    pub tip: Option<(f64, f64)>,
}

fn texture(x: usize, y: usize) -> [u8; 3] {
    let h = rng::mix64(((y as u64) << 32) | x as u64);
    let grain = (h & 0x1f) as i32 - 16;
    let stripe = if (x / 16 + y / 16) % 2 == 0 { 12 } else { -12 };
    let base = 118 + grain + stripe;
    let c = |v: i32| v.clamp(0, 255) as u8;
    [c(base + 14), c(base + 6), c(base)]
}

/// Background-only frame.
pub fn render_background(width: usize, height: usize, timestamp_ms: u64) -> Frame {
    let mut pixels = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            pixels.extend_from_slice(&texture(x, y));
        }
    }
    Frame {
        width,
        height,
        pixels,
        timestamp_ms,
    }
}

/// Draws each found point as a filled disc over a textured background.
///
/// Disc centres are rounded to whole pixels; the returned tip is the exact
/// top of the disc around the unrounded point, `(x, y - radius)`.
pub fn render_synthetic_frames(
    points: &[ReplayPoint],
    marker: [u8; 3],
    radius: usize,
    (width, height): (usize, usize),
) -> Vec<RenderedFrame> {
    let background = render_background(width, height, 0);
    points
        .iter()
        .map(|p| {
            let mut frame = background.clone();
            frame.timestamp_ms = p.t;
            if !p.found {
                return RenderedFrame { frame, tip: None };
            }
            let (fx, fy) = (p.x * width as f64, p.y * height as f64);
            let (cx, cy) = (fx.round() as i64, fy.round() as i64);
            let r = radius as i64;
            for y in (cy - r).max(0)..=(cy + r).min(height as i64 - 1) {
                for x in (cx - r).max(0)..=(cx + r).min(width as i64 - 1) {
                    if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                        frame.set_rgb(x as usize, y as usize, marker);
                    }
                }
            }
            RenderedFrame {
                frame,
                tip: Some((fx, fy - radius as f64)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::{track, MarkerColorSpec};

    #[test]
    fn templates_are_valid_unistrokes() {
        let t = digit_templates();
        assert_eq!(t.len(), 10);
        for (i, tpl) in t.iter().enumerate() {
            assert_eq!(tpl.class as usize, i);
            tpl.validate().unwrap();
        }
        assert!(GestureTemplate::new(0, alloc::vec![(0.0, 0.0), (1.0, 1.0)], alloc::vec![0.0, 0.0]).is_err());
        for tpl in template_variants() {
            tpl.validate().unwrap();
        }
    }

    #[test]
    fn zero_noise_straight_template_is_collinear() {
        let tpl = GestureTemplate::new(1, alloc::vec![(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)], alloc::vec![0.0; 3]).unwrap();
        let pts = generate_gesture(&tpl, &NoiseParams::none(), 3).unwrap();
        let (a, b) = (pts[0], *pts.last().unwrap());
        assert!((a.x - b.x).abs() > 0.01);
        for p in &pts {
            let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            assert!(cross.abs() < 1e-9, "{p:?}");
        }
        assert!(pts.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let tpl = &digit_templates()[3];
        let w = virtual_writers()[4];
        let a = generate_gesture(tpl, &w.noise, 11).unwrap();
        let b = generate_gesture(tpl, &w.noise, 11).unwrap();
        let c = generate_gesture(tpl, &w.noise, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn writers_respect_noise_bounds() {
        let w = virtual_writers();
        assert_eq!(w.len(), WRITER_COUNT);
        assert_eq!(w, virtual_writers());
        for writer in &w {
            writer.noise.validate().unwrap();
        }
    }

    #[test]
    fn every_digit_replays_to_one_glyph() {
        let motion = MotionConfig::default();
        for tpl in writer_templates() {
            let pts = generate_gesture(&tpl, &NoiseParams::default(), 5).unwrap();
            let g = replay_single_glyph(&pts, &motion).unwrap();
            assert!(g.is_some_and(|g| !g.is_blank()), "digit {}", tpl.class);
        }
    }

    #[test]
    fn small_dataset_is_balanced() {
        let d = build_air_dataset(
            &digit_templates(),
            2,
            &virtual_writers()[..3],
            &MotionConfig::default(),
            9,
            SplitName::TsA,
        )
        .unwrap();
        assert_eq!(d.len(), 20);
        assert_eq!(d.class_counts(10).unwrap(), [2; 10]);
    }

    #[test]
    fn both_writer_groups_use_every_form() {
        let all = writer_templates();
        let writers = virtual_writers();
        for range in [TRAIN_WRITERS, EVAL_WRITERS] {
            for tpl in &all {
                let users = writers[range.clone()]
                    .iter()
                    .filter(|w| w.pick(&all, tpl.class) == Some(tpl))
                    .count();
                assert!(users >= 2, "digit {} form used by {users} writers", tpl.class);
            }
        }
        assert!(writers[0].pick(&all, 42).is_none());
    }

    #[test]
    fn rendered_disc_tip_is_tracked() {
        let pts = [
            ReplayPoint { t: 0, x: 0.5, y: 0.5, found: true },
            ReplayPoint { t: 33, x: 0.2, y: 0.7, found: false },
            ReplayPoint { t: 66, x: 0.3012, y: 0.6993, found: true },
        ];
        for radius in [3, 8, 20] {
            let frames = render_synthetic_frames(&pts, [0, 200, 0], radius, (160, 120));
            let obs = track(frames.iter().map(|f| &f.frame), &MarkerColorSpec::default(), 5).unwrap();
            assert!(!obs[1].found && frames[1].tip.is_none());
            for i in [0, 2] {
                let (tx, ty) = frames[i].tip.unwrap();
                assert!(obs[i].found);
                assert!((obs[i].x - tx).hypot(obs[i].y - ty) <= 1.0, "radius {radius}");
            }
        }
    }
}
