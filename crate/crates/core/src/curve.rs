//! Single-channel keyframe curves: cubic Bézier, linear and step segments.
//!
//! Bézier segments live in the (time, value) plane. Their handle times are
//! kept inside the segment span, which makes the time component monotone
//! in the curve parameter, so a playback timestamp maps to exactly one
//! parameter value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Newton/bisection stopping tolerance on the time residual, in seconds.
pub const TIME_TOLERANCE: f64 = 1e-9;
pub const MAX_SOLVER_ITERATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub t: f64,
    pub v: f64,
}

impl Point {
    pub const fn new(t: f64, v: f64) -> Self {
        Point { t, v }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    CubicBezier,
    Linear,
    Step,
}

/// A key on one channel. `mode` and the two handles describe the segment
/// that starts at this key: `out_handle` leaves this key, `in_handle`
/// arrives at the next one.
#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub time: f64,
    pub value: f64,
    pub mode: Interp,
    pub out_handle: Option<Point>,
    pub in_handle: Option<Point>,
}

impl Keyframe {
    pub fn new(time: f64, value: f64, mode: Interp) -> Self {
        Keyframe {
            time,
            value,
            mode,
            out_handle: None,
            in_handle: None,
        }
    }

    pub fn bezier(time: f64, value: f64, out_handle: Point, in_handle: Point) -> Self {
        Keyframe {
            time,
            value,
            mode: Interp::CubicBezier,
            out_handle: Some(out_handle),
            in_handle: Some(in_handle),
        }
    }

    pub fn point(&self) -> Point {
        Point::new(self.time, self.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BezierSegment {
    pub p0: Point,
    pub p1: Point,
    pub p2: Point,
    pub p3: Point,
}

impl BezierSegment {
    pub fn new(p0: Point, p1: Point, p2: Point, p3: Point) -> Result<Self> {
        if !(p0.t < p3.t) {
            return Err(Error::Structure(format!("bezier span [{}, {}] is empty", p0.t, p3.t)));
        }
        for h in [p1, p2] {
            if !(h.t >= p0.t && h.t <= p3.t) {
                return Err(Error::Structure(format!(
                    "bezier handle time {} outside [{}, {}]",
                    h.t, p0.t, p3.t
                )));
            }
        }
        Ok(BezierSegment { p0, p1, p2, p3 })
    }

    /// Handles at 1/3 and 2/3 of both spans; traces the straight line.
    pub fn uniform(p0: Point, p3: Point) -> Result<Self> {
        let dt = p3.t - p0.t;
        let dv = p3.v - p0.v;
        Self::new(
            p0,
            Point::new(p0.t + dt / 3.0, p0.v + dv / 3.0),
            Point::new(p0.t + 2.0 * dt / 3.0, p0.v + 2.0 * dv / 3.0),
            p3,
        )
    }

    /// Bernstein blend of the four control points at parameter `u`.
    pub fn eval(&self, u: f64) -> Result<Point> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Parameter(format!("bezier parameter {u} outside [0, 1]")));
        }
        Ok(self.eval_unchecked(u))
    }

    pub(crate) fn eval_unchecked(&self, u: f64) -> Point {
        let [b0, b1, b2, b3] = bernstein(u);
        Point::new(
            b0 * self.p0.t + b1 * self.p1.t + b2 * self.p2.t + b3 * self.p3.t,
            b0 * self.p0.v + b1 * self.p1.v + b2 * self.p2.v + b3 * self.p3.v,
        )
    }

    fn time_at(&self, u: f64) -> f64 {
        let [b0, b1, b2, b3] = bernstein(u);
        b0 * self.p0.t + b1 * self.p1.t + b2 * self.p2.t + b3 * self.p3.t
    }

    fn time_derivative(&self, u: f64) -> f64 {
        let s = 1.0 - u;
        3.0 * (s * s * (self.p1.t - self.p0.t)
            + 2.0 * s * u * (self.p2.t - self.p1.t)
            + u * u * (self.p3.t - self.p2.t))
    }

    /// Finds `u` with `|Bx(u) - t| <= tol` using Newton steps kept inside a
    /// shrinking bracket, falling back to bisection when a step leaves it.
    pub fn solve_time(&self, t: f64, tol: f64) -> Result<f64> {
        let (start, end) = (self.p0.t, self.p3.t);
        if !(t >= start && t <= end) {
            return Err(Error::Range { t, start, end });
        }
        if t == start {
            return Ok(0.0);
        }
        if t == end {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut u = (t - start) / (end - start);
        for _ in 0..MAX_SOLVER_ITERATIONS {
            let residual = self.time_at(u) - t;
            if residual.abs() <= tol {
                return Ok(u);
            }
            if residual < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let slope = self.time_derivative(u);
            let newton = u - residual / slope;
            u = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON {
                return Ok(u);
            }
        }
        Err(Error::Numeric(format!(
            "bezier time inversion did not converge for t = {t}"
        )))
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        let u = self.solve_time(t, TIME_TOLERANCE)?;
        Ok(self.eval_unchecked(u).v)
    }
}

#[inline]
fn bernstein(u: f64) -> [f64; 4] {
    let s = 1.0 - u;
    [s * s * s, 3.0 * s * s * u, 3.0 * s * u * u, u * u * u]
}

/// Straight-line transition between two keys.
pub fn eval_linear(p0: Point, p1: Point, t: f64) -> f64 {
    p0.v + (p1.v - p0.v) * (t - p0.t) / (p1.t - p0.t)
}

/// Holds `p0` until exactly `p1.t`.
pub fn eval_step(p0: Point, p1: Point, t: f64) -> f64 {
    if t == p1.t {
        p1.v
    } else {
        p0.v
    }
}

/// Keyframes for one control channel, sorted and validated.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    channel: usize,
    keys: Vec<Keyframe>,
}

impl Track {
    /// Validates `keys` and clamps Bézier handle times into their segment
    /// span. Returns the track and the number of handles that were clamped.
    pub fn new(channel: usize, mut keys: Vec<Keyframe>) -> Result<(Self, usize)> {
        if keys.is_empty() {
            return Err(Error::Structure(format!("track for channel {channel} has no keys")));
        }
        for (i, k) in keys.iter().enumerate() {
            if !k.time.is_finite() || !k.value.is_finite() || k.time < 0.0 {
                return Err(Error::Structure(format!(
                    "key {i} has invalid time/value ({}, {})",
                    k.time, k.value
                )));
            }
            if i > 0 && !(keys[i - 1].time < k.time) {
                return Err(Error::Structure(format!(
                    "key times must strictly increase (key {i} at {} after {})",
                    k.time,
                    keys[i - 1].time
                )));
            }
        }
        let mut clamped = 0;
        let n = keys.len();
        for i in 0..n.saturating_sub(1) {
            if keys[i].mode != Interp::CubicBezier {
                continue;
            }
            let (start, end) = (keys[i].time, keys[i + 1].time);
            let key = &mut keys[i];
            for (label, handle) in [("out_handle", &mut key.out_handle), ("in_handle", &mut key.in_handle)] {
                let h = handle
                    .as_mut()
                    .ok_or_else(|| Error::Structure(format!("cubic_bezier key {i} is missing {label}")))?;
                if !h.t.is_finite() || !h.v.is_finite() {
                    return Err(Error::Structure(format!("key {i} {label} is not finite")));
                }
                let c = h.t.clamp(start, end);
                if c != h.t {
                    log::warn!(
                        "channel {channel} key {i}: {label} time {} clamped into [{start}, {end}]",
                        h.t
                    );
                    h.t = c;
                    clamped += 1;
                }
            }
        }
        Ok((Track { channel, keys }, clamped))
    }

    pub fn channel(&self) -> usize {
        self.channel
    }

    pub fn keys(&self) -> &[Keyframe] {
        &self.keys
    }

    pub fn start_time(&self) -> f64 {
        self.keys[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.keys[self.keys.len() - 1].time
    }

    /// The Bézier segment starting at key `i`, if that segment is Bézier.
    pub fn bezier_segment(&self, i: usize) -> Option<BezierSegment> {
        let (a, b) = (self.keys.get(i)?, self.keys.get(i + 1)?);
        if a.mode != Interp::CubicBezier {
            return None;
        }
        Some(BezierSegment {
            p0: a.point(),
            p1: a.out_handle?,
            p2: a.in_handle?,
            p3: b.point(),
        })
    }

    /// Value at time `t`, holding the first/last key outside the key range.
    pub fn eval(&self, t: f64) -> f64 {
        let keys = &self.keys;
        let first = &keys[0];
        let last = &keys[keys.len() - 1];
        if t <= first.time {
            return first.value;
        }
        if t >= last.time {
            return last.value;
        }
        // first key with time > t; t lies in [keys[i-1].time, keys[i].time)
        let i = keys.partition_point(|k| k.time <= t);
        let (a, b) = (&keys[i - 1], &keys[i]);
        if t == a.time {
            return a.value;
        }
        match a.mode {
            Interp::Linear => eval_linear(a.point(), b.point(), t),
            Interp::Step => eval_step(a.point(), b.point(), t),
            Interp::CubicBezier => {
                let seg = self.bezier_segment(i - 1).expect("validated bezier handles");
                // t is strictly inside the span, so inversion cannot fail
                seg.value_at(t).unwrap_or(a.value)
            }
        }
    }
}
