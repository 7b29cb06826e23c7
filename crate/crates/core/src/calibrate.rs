//! Velocity-threshold calibration from a "hold still, then write" stream.
//!
//! Per-frame speeds (the larger velocity component) are split into two
//! clusters by 2-means on their logarithms; the suggested threshold is the
//! geometric midpoint of the cluster means.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{MotionConfig, PenMotionState, ReplayPoint, NOMINAL_HEIGHT};

pub const MIN_STREAM_SECONDS: f64 = 3.0;
/// Clusters closer than this ratio count as a single (static) mode.
const MIN_MODE_RATIO: f64 = 10.0;
const SPEED_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub v_threshold: f64,
    pub static_speed: f64,
    pub motion_speed: f64,
    pub samples: usize,
}

/// Threshold between the static and the moving mode of `speeds`.
pub fn suggest_threshold(speeds: &[f64]) -> Result<Calibration> {
    let logs: Vec<f64> = speeds.iter().map(|s| s.abs().max(SPEED_FLOOR).ln()).collect();
    let (lo, hi) = logs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if logs.len() < 2 || hi - lo < MIN_MODE_RATIO.ln() {
        return Err(Error::NoMotion);
    }
    let (mut c0, mut c1) = (lo, hi);
    for _ in 0..100 {
        let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
        for &v in &logs {
            if (v - c0).abs() <= (v - c1).abs() {
                s0 += v;
                n0 += 1;
            } else {
                s1 += v;
                n1 += 1;
            }
        }
        if n0 == 0 || n1 == 0 {
            return Err(Error::NoMotion);
        }
        let (next0, next1) = (s0 / n0 as f64, s1 / n1 as f64);
        let settled = next0 == c0 && next1 == c1;
        c0 = next0;
        c1 = next1;
        if settled {
            break;
        }
    }
    if c1 - c0 < MIN_MODE_RATIO.ln() {
        return Err(Error::NoMotion);
    }
    Ok(Calibration {
        v_threshold: ((c0 + c1) / 2.0).exp(),
        static_speed: c0.exp(),
        motion_speed: c1.exp(),
        samples: logs.len(),
    })
}

/// Per-frame speeds of a replay stream as the motion model measures them.
pub fn stream_speeds(points: &[ReplayPoint], motion: &MotionConfig) -> Result<Vec<f64>> {
    let mut state = PenMotionState::new(motion);
    let mut last: Option<(f64, f64)> = None;
    let mut speeds = Vec::with_capacity(points.len());
    let h = NOMINAL_HEIGHT as f64;
    for p in points {
        state.update_fps(p.t, motion)?;
        if !p.found {
            last = None;
            state.clear_window();
            continue;
        }
        // replay x is a fraction of the width; measure it in heights too
        let pos = (p.x * crate::motion::NOMINAL_WIDTH as f64 / h, p.y);
        if let Some(prev) = last {
            let (dx, dy) = state.update_velocity((pos.0 - prev.0, pos.1 - prev.1), motion);
            speeds.push(dx.abs().max(dy.abs()));
        }
        last = Some(pos);
    }
    Ok(speeds)
}

pub fn calibrate(points: &[ReplayPoint], motion: &MotionConfig) -> Result<Calibration> {
    let seconds = match (points.first(), points.last()) {
        (Some(a), Some(b)) => b.t.saturating_sub(a.t) as f64 / 1000.0,
        _ => 0.0,
    };
    if seconds < MIN_STREAM_SECONDS {
        return Err(Error::StreamTooShort { seconds });
    }
    suggest_threshold(&stream_speeds(points, motion)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn stream(static_frames: usize, moving_frames: usize, static_speed: f64, moving_speed: f64) -> Vec<ReplayPoint> {
        // 30 fps; the static part alternates by a tiny step, the moving part
        // travels at a constant speed (frame heights per second)
        let mut pts = Vec::new();
        let mut y = 0.5;
        for i in 0..static_frames + moving_frames {
            let step = if i < static_frames {
                if i % 2 == 0 { static_speed } else { -static_speed }
            } else {
                moving_speed
            } / 30.0;
            y += step;
            pts.push(ReplayPoint {
                t: (i as f64 * 1000.0 / 30.0).round() as u64,
                x: 0.5,
                y,
                found: true,
            });
        }
        pts
    }

    #[test]
    fn threshold_lands_between_modes() {
        let speeds: Vec<f64> = (0..50).map(|i| 0.001 * (1.0 + 0.1 * (i % 3) as f64)).chain((0..40).map(|_| 0.05)).collect();
        let c = suggest_threshold(&speeds).unwrap();
        assert!(c.v_threshold > 0.001 && c.v_threshold < 0.05, "{c:?}");
    }

    #[test]
    fn calibrates_a_recorded_stream() {
        let pts = stream(60, 60, 0.01, 0.5);
        let c = calibrate(&pts, &MotionConfig::default()).unwrap();
        assert!(c.v_threshold > c.static_speed && c.v_threshold < 0.5, "{c:?}");
    }

    #[test]
    fn static_stream_has_no_motion() {
        let pts = stream(120, 0, 0.0, 0.0);
        assert_eq!(calibrate(&pts, &MotionConfig::default()), Err(Error::NoMotion));
        assert_eq!(suggest_threshold(&vec![0.001; 10]), Err(Error::NoMotion));
    }

    #[test]
    fn short_stream_is_rejected() {
        let pts = stream(30, 30, 0.0, 0.5);
        assert!(matches!(
            calibrate(&pts, &MotionConfig::default()),
            Err(Error::StreamTooShort { .. })
        ));
    }
}
