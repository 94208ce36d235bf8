//! Trajectory data model, ego-frame geometry and 1 Hz to 4 Hz spline upsampling.
//!
//! All coordinates are meters in the ego frame of the current pose: `x` points
//! forward and `y` points left. Trajectories start one sample after the current
//! pose, so a 4 Hz, 5 s future holds samples at `t = 0.25, 0.5, ..., 5.0` s.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of samples in a 4 Hz, 5 s future trajectory.
pub const FUTURE_LEN: usize = 20;
/// Number of samples in a 4 Hz, 4 s past trajectory.
pub const PAST_LEN: usize = 16;
/// Number of 1 Hz waypoints a policy predicts.
pub const WAYPOINTS_1HZ: usize = 5;
/// Sampling rate of dense trajectories.
pub const DENSE_RATE_HZ: u32 = 4;

const DEGENERATE_HEADING_NORM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajError {
    #[error("waypoint {index} is not finite")]
    NonFinite { index: usize },
    #[error("expected {expected} points, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("{len} points is not a whole number of seconds at {rate_hz} Hz")]
    PartialSecond { len: usize, rate_hz: u32 },
    #[error("sampling rate must be positive")]
    ZeroRate,
    #[error("trajectories sampled at different rates ({0} Hz vs {1} Hz)")]
    RateMismatch(u32, u32),
}

/// A 2-D point in the ego frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
}

impl Waypoint {
    pub const ORIGIN: Waypoint = Waypoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn sub(self, other: Waypoint) -> Waypoint {
        Waypoint::new(self.x - other.x, self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotates the point counter-clockwise about the origin.
    pub fn rotated(self, angle: f64) -> Waypoint {
        let (s, c) = angle.sin_cos();
        Waypoint::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl From<[f64; 2]> for Waypoint {
    fn from(p: [f64; 2]) -> Self {
        Waypoint::new(p[0], p[1])
    }
}

impl From<Waypoint> for [f64; 2] {
    fn from(w: Waypoint) -> Self {
        [w.x, w.y]
    }
}

pub(crate) fn check_finite(points: &[Waypoint]) -> Result<(), TrajError> {
    match points.iter().position(|p| !p.is_finite()) {
        Some(index) => Err(TrajError::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn check_len(points: &[Waypoint], expected: usize) -> Result<(), TrajError> {
    if points.len() != expected {
        return Err(TrajError::WrongLength {
            expected,
            found: points.len(),
        });
    }
    Ok(())
}

/// An ordered, uniformly sampled waypoint sequence covering a whole number of seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<Waypoint>,
    rate_hz: u32,
}

impl Trajectory {
    pub fn new(points: Vec<Waypoint>, rate_hz: u32) -> Result<Self, TrajError> {
        if rate_hz == 0 {
            return Err(TrajError::ZeroRate);
        }
        if points.len() % rate_hz as usize != 0 {
            return Err(TrajError::PartialSecond {
                len: points.len(),
                rate_hz,
            });
        }
        check_finite(&points)?;
        Ok(Self { points, rate_hz })
    }

    /// A 4 Hz, 5 s trajectory (exactly 20 points).
    pub fn future(points: Vec<Waypoint>) -> Result<Self, TrajError> {
        check_len(&points, FUTURE_LEN)?;
        Self::new(points, DENSE_RATE_HZ)
    }

    /// A 4 Hz, 4 s trajectory (exactly 16 points).
    pub fn past(points: Vec<Waypoint>) -> Result<Self, TrajError> {
        check_len(&points, PAST_LEN)?;
        Self::new(points, DENSE_RATE_HZ)
    }

    pub fn from_xy(xy: &[[f64; 2]], rate_hz: u32) -> Result<Self, TrajError> {
        Self::new(xy.iter().copied().map(Waypoint::from).collect(), rate_hz)
    }

    pub fn points(&self) -> &[Waypoint] {
        &self.points
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    pub fn horizon_s(&self) -> f64 {
        self.points.len() as f64 / self.rate_hz as f64
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_xy(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|&p| p.into()).collect()
    }

    pub fn into_points(self) -> Vec<Waypoint> {
        self.points
    }
}

/// Absolute lateral/longitudinal deviation of a trajectory from a reference,
/// one entry per timestep, measured in the reference's local heading frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviationProfile {
    pub lateral: Vec<f64>,
    pub longitudinal: Vec<f64>,
}

impl DeviationProfile {
    pub fn len(&self) -> usize {
        self.lateral.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lateral.is_empty()
    }
}

/// Unit heading of `reference` at every timestep.
///
/// Central differences inside, one-sided at the ends. A difference shorter than
/// 1e-9 m inherits the previous heading (or +x at the first step).
pub fn headings(reference: &[Waypoint]) -> Vec<Waypoint> {
    let n = reference.len();
    let mut out = Vec::with_capacity(n);
    let mut prev = Waypoint::new(1.0, 0.0);
    for k in 0..n {
        let diff = if n < 2 {
            Waypoint::ORIGIN
        } else if k == 0 {
            reference[1].sub(reference[0])
        } else if k == n - 1 {
            reference[n - 1].sub(reference[n - 2])
        } else {
            reference[k + 1].sub(reference[k - 1])
        };
        let norm = diff.norm();
        let heading = if norm < DEGENERATE_HEADING_NORM {
            prev
        } else {
            Waypoint::new(diff.x / norm, diff.y / norm)
        };
        out.push(heading);
        prev = heading;
    }
    out
}

/// Splits `pred[k] - reference[k]` into components across and along the
/// reference heading and returns their absolute values.
pub fn deviation_profile(
    pred: &Trajectory,
    reference: &Trajectory,
) -> Result<DeviationProfile, TrajError> {
    if pred.rate_hz() != reference.rate_hz() {
        return Err(TrajError::RateMismatch(pred.rate_hz(), reference.rate_hz()));
    }
    check_len(pred.points(), reference.len())?;
    Ok(deviation_profile_points(pred.points(), reference.points()))
}

pub(crate) fn deviation_profile_points(pred: &[Waypoint], reference: &[Waypoint]) -> DeviationProfile {
    let heads = headings(reference);
    let mut profile = DeviationProfile {
        lateral: Vec::with_capacity(reference.len()),
        longitudinal: Vec::with_capacity(reference.len()),
    };
    for ((p, r), h) in pred.iter().zip(reference).zip(&heads) {
        let d = p.sub(*r);
        profile.longitudinal.push((d.x * h.x + d.y * h.y).abs());
        profile.lateral.push((h.x * d.y - h.y * d.x).abs());
    }
    profile
}

/// Returns the samples at t = 1, 2, 3, 4, 5 s of a 4 Hz, 5 s trajectory.
pub fn resample_4hz_to_1hz(traj: &Trajectory) -> Result<[Waypoint; WAYPOINTS_1HZ], TrajError> {
    if traj.rate_hz() != DENSE_RATE_HZ {
        return Err(TrajError::RateMismatch(traj.rate_hz(), DENSE_RATE_HZ));
    }
    check_len(traj.points(), FUTURE_LEN)?;
    let p = traj.points();
    Ok([p[3], p[7], p[11], p[15], p[19]])
}

/// Options for [`upsample_spline_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplineOptions {
    /// Add the current pose (0, 0) as a knot at t = 0.
    pub anchor_origin: bool,
}

impl Default for SplineOptions {
    fn default() -> Self {
        Self { anchor_origin: true }
    }
}

/// Upsamples five 1 Hz waypoints to a 20-point 4 Hz trajectory with a natural
/// cubic spline anchored at the origin.
pub fn upsample_spline(waypoints: &[Waypoint]) -> Result<Trajectory, TrajError> {
    upsample_spline_with(waypoints, SplineOptions::default())
}

pub fn upsample_spline_with(
    waypoints: &[Waypoint],
    opts: SplineOptions,
) -> Result<Trajectory, TrajError> {
    check_len(waypoints, WAYPOINTS_1HZ)?;
    check_finite(waypoints)?;

    let mut knots_t = Vec::with_capacity(WAYPOINTS_1HZ + 1);
    let mut xs = Vec::with_capacity(WAYPOINTS_1HZ + 1);
    let mut ys = Vec::with_capacity(WAYPOINTS_1HZ + 1);
    if opts.anchor_origin {
        knots_t.push(0.0);
        xs.push(0.0);
        ys.push(0.0);
    }
    for (i, w) in waypoints.iter().enumerate() {
        knots_t.push((i + 1) as f64);
        xs.push(w.x);
        ys.push(w.y);
    }
    let sx = NaturalSpline::fit(&knots_t, &xs);
    let sy = NaturalSpline::fit(&knots_t, &ys);

    let step = 1.0 / DENSE_RATE_HZ as f64;
    let points = (1..=FUTURE_LEN)
        .map(|k| {
            if k % DENSE_RATE_HZ as usize == 0 {
                waypoints[k / DENSE_RATE_HZ as usize - 1]
            } else {
                let t = k as f64 * step;
                Waypoint::new(sx.eval(t), sy.eval(t))
            }
        })
        .collect();
    Trajectory::new(points, DENSE_RATE_HZ)
}

/// Natural cubic spline through `(t_i, y_i)` with strictly increasing knots.
///
/// Evaluation outside the knot range extends the nearest end piece.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivative at each knot.
    m: Vec<f64>,
}

impl NaturalSpline {
    /// Panics if fewer than two knots are given or the lengths differ.
    pub fn fit(t: &[f64], y: &[f64]) -> Self {
        assert!(t.len() >= 2 && t.len() == y.len(), "need >= 2 matching knots");
        let n = t.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives (Thomas algorithm).
            let inner = n - 2;
            let mut diag = vec![0.0; inner];
            let mut upper = vec![0.0; inner];
            let mut rhs = vec![0.0; inner];
            for i in 1..n - 1 {
                let h0 = t[i] - t[i - 1];
                let h1 = t[i + 1] - t[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..inner {
                let lower = t[i + 1] - t[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[inner] = rhs[inner - 1] / diag[inner - 1];
            for i in (0..inner - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self {
            t: t.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.m
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        let i = match self.t.iter().position(|&tk| x < tk) {
            Some(0) => 0,
            Some(j) => j - 1,
            None => n - 2,
        }
        .min(n - 2);
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let a = t1 - x;
        let b = x - t0;
        self.m[i] * a * a * a / (6.0 * h)
            + self.m[i + 1] * b * b * b / (6.0 * h)
            + (self.y[i] / h - self.m[i] * h / 6.0) * a
            + (self.y[i + 1] / h - self.m[i + 1] * h / 6.0) * b
    }
}
