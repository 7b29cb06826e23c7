//! Virtual pen-up/pen-down segmentation.
//!
//! Per-frame tip displacements (in frame heights) go into a trailing window
//! whose length follows the measured frame rate. Their mean, optionally
//! converted to a per-second rate, is the tip velocity. The pen is down while
//! either velocity component reaches `v_threshold`; a run of
//! `penup_hold_frames` static frames ends the stroke.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rasterize, Glyph, Provenance, TimedPoint, Trajectory, DEFAULT_STROKE_WIDTH};
use crate::vision::MarkerObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityUnits {
    /// Mean displacement per frame.
    PerFrameAvg,
    /// Mean displacement per frame times the frame rate.
    #[default]
    PerSecond,
}

impl VelocityUnits {
    pub fn as_str(self) -> &'static str {
        match self {
            VelocityUnits::PerFrameAvg => "per_frame_avg",
            VelocityUnits::PerSecond => "per_second",
        }
    }

    /// Default `v_threshold`: 0.02 frame heights per second, or the same
    /// speed expressed per frame at 30 fps.
    pub fn default_threshold(self) -> f64 {
        match self {
            VelocityUnits::PerSecond => 0.02,
            VelocityUnits::PerFrameAvg => 0.02 / 30.0,
        }
    }
}

impl fmt::Display for VelocityUnits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VelocityUnits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "per_frame_avg" => Ok(VelocityUnits::PerFrameAvg),
            "per_second" => Ok(VelocityUnits::PerSecond),
            _ => Err(Error::InvalidConfig(alloc::format!(
                "velocity units must be per_frame_avg or per_second, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub v_threshold: f64,
    pub velocity_units: VelocityUnits,
    pub window_cap: usize,
    pub penup_hold_frames: usize,
    pub fps_floor: f64,
    pub fps_ceiling: f64,
    /// Longest run of lost-marker frames bridged while the pen is down.
    pub max_gap_frames: usize,
    /// Glyph stroke width in glyph pixels.
    pub stroke_width: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            v_threshold: VelocityUnits::PerSecond.default_threshold(),
            velocity_units: VelocityUnits::PerSecond,
            window_cap: 5,
            penup_hold_frames: 15,
            fps_floor: 5.0,
            fps_ceiling: 240.0,
            max_gap_frames: 3,
            stroke_width: DEFAULT_STROKE_WIDTH,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.v_threshold > 0.0 && self.v_threshold.is_finite()) {
            return bad("v_threshold must be a positive number");
        }
        if self.window_cap < 1 {
            return bad("window_cap must be >= 1");
        }
        if self.penup_hold_frames < 1 {
            return bad("penup_hold_frames must be >= 1");
        }
        if !(self.fps_floor > 0.0 && self.fps_ceiling >= self.fps_floor && self.fps_ceiling.is_finite()) {
            return bad("fps bounds must satisfy 0 < fps_floor <= fps_ceiling");
        }
        if !(self.stroke_width > 0.0 && self.stroke_width < 40.0) {
            return bad("stroke_width must lie in (0, 40)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenState {
    #[default]
    Up,
    Down,
}

impl PenState {
    pub fn as_str(self) -> &'static str {
        match self {
            PenState::Up => "up",
            PenState::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenEvent {
    None,
    PenDown,
    PenUp,
}

/// Rolling motion state of one stream.
#[derive(Debug, Clone)]
pub struct PenMotionState {
    window: VecDeque<(f64, f64)>,
    fps: f64,
    last_timestamp: Option<u64>,
    pen: PenState,
    trajectory: Trajectory,
    static_run: usize,
    /// Trajectory length when the current static run began.
    static_mark: usize,
    finished: Option<Trajectory>,
}

impl PenMotionState {
    pub fn new(config: &MotionConfig) -> Self {
        Self {
            window: VecDeque::with_capacity(config.window_cap),
            fps: config.fps_floor,
            last_timestamp: None,
            pen: PenState::Up,
            trajectory: Trajectory::default(),
            static_run: 0,
            static_mark: 0,
            finished: None,
        }
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn pen(&self) -> PenState {
        self.pen
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Frame-rate estimate from the gap to the previous frame, clamped.
    /// The first frame of a stream leaves it at `fps_floor`.
    pub fn update_fps(&mut self, timestamp_ms: u64, config: &MotionConfig) -> Result<f64> {
        if let Some(previous) = self.last_timestamp {
            if timestamp_ms <= previous {
                return Err(Error::NonMonotonicTimestamp {
                    previous,
                    current: timestamp_ms,
                });
            }
            let gap = (timestamp_ms - previous) as f64 / 1000.0;
            self.fps = (1.0 / gap).clamp(config.fps_floor, config.fps_ceiling);
        } else {
            self.fps = config.fps_floor;
        }
        self.last_timestamp = Some(timestamp_ms);
        Ok(self.fps)
    }

    /// Effective window length: `min(ceil(N_FPS), window_cap)`.
    pub fn window_length(&self, config: &MotionConfig) -> usize {
        (self.fps.ceil() as usize).clamp(1, config.window_cap)
    }

    /// Pushes one per-frame displacement and returns the windowed velocity.
    pub fn update_velocity(&mut self, delta: (f64, f64), config: &MotionConfig) -> (f64, f64) {
        self.window.push_back(delta);
        let len = self.window_length(config);
        while self.window.len() > len {
            self.window.pop_front();
        }
        self.velocity(config)
    }

    pub fn velocity(&self, config: &MotionConfig) -> (f64, f64) {
        if self.window.is_empty() {
            return (0.0, 0.0);
        }
        let n = self.window.len() as f64;
        let (sx, sy) = self.window.iter().fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + x, ay + y));
        let scale = match config.velocity_units {
            VelocityUnits::PerFrameAvg => 1.0,
            VelocityUnits::PerSecond => self.fps,
        };
        (sx / n * scale, sy / n * scale)
    }

    /// Forgets the velocity history, e.g. after the marker was lost.
    pub fn clear_window(&mut self) {
        self.window.clear();
    }

    /// Advances the state machine. A stroke ends after `penup_hold_frames`
    /// consecutive static frames; its trailing static points are trimmed
    /// and it becomes available from [`take_finished`](Self::take_finished).
    pub fn step_pen_state(&mut self, dx: f64, dy: f64, config: &MotionConfig) -> PenEvent {
        let is_static = dx.abs() < config.v_threshold && dy.abs() < config.v_threshold;
        match (self.pen, is_static) {
            (PenState::Up, true) => PenEvent::None,
            (PenState::Up, false) => {
                self.pen = PenState::Down;
                self.trajectory.points.clear();
                self.static_run = 0;
                PenEvent::PenDown
            }
            (PenState::Down, false) => {
                self.static_run = 0;
                PenEvent::None
            }
            (PenState::Down, true) => {
                if self.static_run == 0 {
                    self.static_mark = self.trajectory.len();
                }
                self.static_run += 1;
                if self.static_run >= config.penup_hold_frames {
                    self.lift(true);
                    PenEvent::PenUp
                } else {
                    PenEvent::None
                }
            }
        }
    }

    /// Ends the current stroke immediately.
    pub fn force_pen_up(&mut self) -> PenEvent {
        if self.pen == PenState::Up {
            return PenEvent::None;
        }
        let trim = self.static_run > 0;
        self.lift(trim);
        PenEvent::PenUp
    }

    fn lift(&mut self, trim: bool) {
        let mut done = core::mem::take(&mut self.trajectory);
        if trim {
            done.points.truncate(self.static_mark.max(1));
        }
        // the velocity window lags, so a resting tip repeats at the end
        while done.len() > 1 {
            let n = done.len();
            let (a, b) = (done.points[n - 2], done.points[n - 1]);
            if a.x != b.x || a.y != b.y {
                break;
            }
            done.points.pop();
        }
        self.finished = Some(done);
        self.pen = PenState::Up;
        self.static_run = 0;
    }

    pub fn append_trajectory(&mut self, point: TimedPoint) -> Result<()> {
        if self.pen != PenState::Down {
            return Err(Error::PenIsUp);
        }
        self.trajectory.points.push(point);
        Ok(())
    }

    pub fn take_finished(&mut self) -> Option<Trajectory> {
        self.finished.take()
    }
}

/// A stroke that reached pen-up.
#[derive(Debug, Clone, PartialEq)]
pub struct FinishedStroke {
    pub trajectory: Trajectory,
    /// `None` when the stroke is degenerate (all points coincide).
    pub glyph: Option<Glyph>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub event: PenEvent,
    pub pen: PenState,
    pub dx: f64,
    pub dy: f64,
    pub stroke: Option<FinishedStroke>,
}

/// Observation-level driver: converts tip positions to frame heights, bridges
/// short marker losses and turns finished strokes into glyphs.
#[derive(Debug, Clone)]
pub struct PenTracker {
    config: MotionConfig,
    frame_height: f64,
    provenance: Provenance,
    stream: String,
    state: PenMotionState,
    last_tip: Option<TimedPoint>,
    recent: VecDeque<TimedPoint>,
    missing: Vec<u64>,
}

impl PenTracker {
    pub fn new(config: MotionConfig, frame_height: usize, provenance: Provenance) -> Result<Self> {
        config.validate()?;
        if frame_height == 0 {
            return Err(Error::InvalidConfig("frame height must be positive".into()));
        }
        Ok(Self {
            state: PenMotionState::new(&config),
            config,
            frame_height: frame_height as f64,
            provenance,
            stream: String::new(),
            last_tip: None,
            recent: VecDeque::new(),
            missing: Vec::new(),
        })
    }

    pub fn with_stream(mut self, stream: impl Into<String>) -> Self {
        self.stream = stream.into();
        self
    }

    pub fn config(&self) -> &MotionConfig {
        &self.config
    }

    /// Replaces the motion settings; takes effect from the next observation.
    pub fn set_config(&mut self, config: MotionConfig) -> Result<()> {
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn state(&self) -> &PenMotionState {
        &self.state
    }

    fn delta(&self, a: &TimedPoint, b: &TimedPoint) -> (f64, f64) {
        ((b.x - a.x) / self.frame_height, (b.y - a.y) / self.frame_height)
    }

    fn remember(&mut self, p: TimedPoint) {
        self.recent.push_back(p);
        while self.recent.len() > self.config.window_cap + 1 {
            self.recent.pop_front();
        }
        self.last_tip = Some(p);
    }

    pub fn observe(&mut self, obs: &MarkerObservation) -> Result<StepOutput> {
        let config = self.config;
        self.state.update_fps(obs.timestamp_ms, &config)?;
        if !obs.found {
            return Ok(self.observe_missing(obs.timestamp_ms));
        }
        let tip = TimedPoint {
            x: obs.x,
            y: obs.y,
            t_ms: obs.timestamp_ms,
        };

        if !self.missing.is_empty() {
            // only reached while the pen is down and the gap was short
            if let Some(last) = self.last_tip {
                let m = self.missing.len();
                let stamps = core::mem::take(&mut self.missing);
                for (k, t_ms) in stamps.into_iter().enumerate() {
                    let f = (k + 1) as f64 / (m + 1) as f64;
                    let p = TimedPoint {
                        x: last.x + (tip.x - last.x) * f,
                        y: last.y + (tip.y - last.y) * f,
                        t_ms,
                    };
                    let prev = self.last_tip.unwrap_or(p);
                    let d = self.delta(&prev, &p);
                    self.state.update_velocity(d, &config);
                    if self.state.pen() == PenState::Down {
                        self.state.append_trajectory(p)?;
                    }
                    self.remember(p);
                }
            }
            self.missing.clear();
        }

        let (dx, dy) = match self.last_tip {
            Some(prev) => {
                let d = self.delta(&prev, &tip);
                self.state.update_velocity(d, &config)
            }
            None => (0.0, 0.0),
        };
        self.remember(tip);

        let event = self.state.step_pen_state(dx, dy, &config);
        match event {
            PenEvent::PenDown => {
                // the stroke starts where the tip last rested
                let window = self.state.window_len() + 1;
                let skip = self.recent.len().saturating_sub(window);
                let pts: Vec<TimedPoint> = self.recent.iter().skip(skip).copied().collect();
                let start = (0..pts.len().saturating_sub(1))
                    .rev()
                    .find(|&i| pts[i].x == pts[i + 1].x && pts[i].y == pts[i + 1].y)
                    .map_or(0, |i| i + 1);
                for p in &pts[start..] {
                    self.state.append_trajectory(*p)?;
                }
            }
            PenEvent::None if self.state.pen() == PenState::Down => {
                self.state.append_trajectory(tip)?;
            }
            _ => {}
        }
        Ok(StepOutput {
            event,
            pen: self.state.pen(),
            dx,
            dy,
            stroke: self.finish_stroke(),
        })
    }

    fn observe_missing(&mut self, t_ms: u64) -> StepOutput {
        let mut event = PenEvent::None;
        if self.state.pen() == PenState::Down {
            self.missing.push(t_ms);
            if self.missing.len() > self.config.max_gap_frames {
                event = self.state.force_pen_up();
                self.reset_motion();
            }
        } else {
            self.reset_motion();
        }
        StepOutput {
            event,
            pen: self.state.pen(),
            dx: 0.0,
            dy: 0.0,
            stroke: self.finish_stroke(),
        }
    }

    fn reset_motion(&mut self) {
        self.missing.clear();
        self.last_tip = None;
        self.recent.clear();
        self.state.clear_window();
    }

    /// Ends the stream; a stroke still in progress is finalized.
    pub fn finish(&mut self) -> StepOutput {
        self.missing.clear();
        let event = self.state.force_pen_up();
        StepOutput {
            event,
            pen: self.state.pen(),
            dx: 0.0,
            dy: 0.0,
            stroke: self.finish_stroke(),
        }
    }

    fn finish_stroke(&mut self) -> Option<FinishedStroke> {
        let mut trajectory = self.state.take_finished()?;
        trajectory.stream = self.stream.clone();
        let glyph = rasterize(&trajectory, self.config.stroke_width)
            .ok()
            .map(|mut g| {
                g.provenance = self.provenance;
                g
            });
        Some(FinishedStroke { trajectory, glyph })
    }
}

/// Frame size that normalized replay coordinates are mapped onto.
pub const NOMINAL_WIDTH: usize = 640;
pub const NOMINAL_HEIGHT: usize = 480;

/// One line of a point-stream replay: time in ms, position as a fraction of
/// the frame size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayPoint {
    #[serde(deserialize_with = "millis")]
    pub t: u64,
    pub x: f64,
    pub y: f64,
    pub found: bool,
}

/// Accepts integral or fractional millisecond timestamps.
fn millis<'de, D: serde::Deserializer<'de>>(d: D) -> core::result::Result<u64, D::Error> {
    let v = f64::deserialize(d)?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(serde::de::Error::custom("t must be a non-negative number of milliseconds"));
    }
    Ok(v.round() as u64)
}

impl ReplayPoint {
    pub fn to_observation(&self, width: usize, height: usize) -> MarkerObservation {
        if self.found {
            MarkerObservation::found(self.x * width as f64, self.y * height as f64, self.t)
        } else {
            MarkerObservation::missing(self.t)
        }
    }
}

pub fn replay_observations(points: &[ReplayPoint]) -> Vec<MarkerObservation> {
    points
        .iter()
        .map(|p| p.to_observation(NOMINAL_WIDTH, NOMINAL_HEIGHT))
        .collect()
}

/// Runs a whole observation sequence, including the end-of-stream flush.
pub fn segment_stream(
    observations: &[MarkerObservation],
    config: MotionConfig,
    frame_height: usize,
    provenance: Provenance,
) -> Result<(Vec<StepOutput>, Vec<FinishedStroke>)> {
    let mut tracker = PenTracker::new(config, frame_height, provenance)?;
    let mut steps = Vec::with_capacity(observations.len() + 1);
    let mut strokes = Vec::new();
    for obs in observations {
        let mut step = tracker.observe(obs)?;
        strokes.extend(step.stroke.take());
        steps.push(step);
    }
    let mut last = tracker.finish();
    strokes.extend(last.stroke.take());
    steps.push(last);
    Ok((steps, strokes))
}
