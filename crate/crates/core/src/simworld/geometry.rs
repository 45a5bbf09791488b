use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x_m: f64,
    pub y_m: f64,
}

impl Point2D {
    pub const ORIGIN: Point2D = Point2D { x_m: 0.0, y_m: 0.0 };

    pub fn new(x_m: f64, y_m: f64) -> Self {
        Point2D { x_m, y_m }
    }

    pub fn is_finite(&self) -> bool {
        self.x_m.is_finite() && self.y_m.is_finite()
    }

    pub fn distance_sq(&self, other: &Point2D) -> f64 {
        let dx = self.x_m - other.x_m;
        let dy = self.y_m - other.y_m;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

/// Inclusive disk membership.
pub fn within(center: &Point2D, range_m: f64, p: &Point2D) -> bool {
    center.distance_sq(p) <= range_m * range_m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_us: u64,
    pub pos: Point2D,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("waypoint times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("waypoint {0} has a non-finite coordinate")]
    NonFinite(usize),
}

/// Piecewise-linear path, clamped at both ends.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    waypoints: Vec<Waypoint>,
}

impl Trace {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, TraceError> {
        if waypoints.is_empty() {
            return Err(TraceError::Empty);
        }
        for (i, w) in waypoints.iter().enumerate() {
            if !w.pos.is_finite() {
                return Err(TraceError::NonFinite(i));
            }
            if i > 0 && w.t_us <= waypoints[i - 1].t_us {
                return Err(TraceError::NotIncreasing(i));
            }
        }
        Ok(Trace { waypoints })
    }

    /// A node that never moves.
    pub fn stationary(pos: Point2D) -> Self {
        Trace {
            waypoints: vec![Waypoint { t_us: 0, pos }],
        }
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn position_at_us(&self, t_us: u64) -> Point2D {
        let w = &self.waypoints;
        let idx = w.partition_point(|p| p.t_us <= t_us);
        if idx == 0 {
            return w[0].pos;
        }
        if idx == w.len() {
            return w[w.len() - 1].pos;
        }
        let (a, b) = (&w[idx - 1], &w[idx]);
        let f = (t_us - a.t_us) as f64 / (b.t_us - a.t_us) as f64;
        Point2D {
            x_m: a.pos.x_m + (b.pos.x_m - a.pos.x_m) * f,
            y_m: a.pos.y_m + (b.pos.y_m - a.pos.y_m) * f,
        }
    }
}

/// Position at `t_ms`, interpolated between waypoints.
pub fn position_at(trace: &Trace, t_ms: f64) -> Point2D {
    trace.position_at_us(ms_to_us(t_ms))
}

/// Rounds a non-negative millisecond value to whole microseconds.
pub fn ms_to_us(t_ms: f64) -> u64 {
    if t_ms <= 0.0 || !t_ms.is_finite() {
        0
    } else {
        (t_ms * 1000.0).round() as u64
    }
}
