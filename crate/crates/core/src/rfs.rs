//! Rater-feedback score (RFS).
//!
//! Each rated trajectory carries a trust region: every timestep of the
//! prediction must stay within `lat_tol` across and `lon_tol` along the rated
//! trajectory's heading. The normalized overshoot
//!
//! ```text
//! d = max(0, max_k max(lat_k / lat_tol, lon_k / lon_tol) − 1)
//! ```
//!
//! is zero inside the region. A rater with score `s` then offers
//! `4 + (max(s, 4) − 4) · exp(−λ d)`, which equals the clamped rater score
//! inside the region and decays to the floor of 4 far away. Dataset RFS is
//! the unweighted mean of per-category means.
//!
//! Absolute values depend on the tolerance and decay constants, which are not
//! those of any official scoring service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::schema::dataset::{PredictionOutput, RatedTrajectory, RATERS_PER_FRAME};
use crate::schema::text::parse_trajectory_text;
use crate::traj::{
    self, check_len, deviation_profile_points, SplineOptions, TrajError, Trajectory, Waypoint, FUTURE_LEN,
};

pub const FLOOR_SCORE: f64 = 4.0;
pub const MAX_SCORE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaterSelect {
    /// Rater with the smallest excess distance.
    #[default]
    Nearest,
    /// Rater offering the highest candidate score.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfsConfig {
    /// Lateral trust-region half-width, meters.
    pub lat_tol: f64,
    /// Longitudinal trust-region half-width, meters.
    pub lon_tol: f64,
    /// Decay rate λ applied to the excess distance.
    pub decay_rate: f64,
    pub rater_select: RaterSelect,
    /// Share of the combined reward given to well-formed output.
    pub format_weight: f64,
    /// Spline options used when 1 Hz predictions are upsampled for scoring.
    pub spline: SplineOptions,
}

impl Default for RfsConfig {
    fn default() -> Self {
        Self {
            lat_tol: 1.0,
            lon_tol: 2.5,
            decay_rate: 1.0,
            rater_select: RaterSelect::Nearest,
            format_weight: 0.1,
            spline: SplineOptions::default(),
        }
    }
}

impl RfsConfig {
    pub fn validate(&self) -> Result<(), RfsError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.lat_tol) || !positive(self.lon_tol) {
            return Err(RfsError::Config("tolerances must be positive and finite".into()));
        }
        if !positive(self.decay_rate) {
            return Err(RfsError::Config("decay_rate must be positive and finite".into()));
        }
        if !(0.0..=1.0).contains(&self.format_weight) {
            return Err(RfsError::Config("format_weight must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RfsError {
    #[error(transparent)]
    Trajectory(#[from] TrajError),
    #[error("expected {RATERS_PER_FRAME} rated trajectories, found {0}")]
    RaterCount(usize),
    #[error("score {0} outside [4, 10]")]
    ScoreRange(f64),
    #[error("cannot aggregate an empty score list")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// How a single prediction was scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreBreakdown {
    pub excess: [f64; RATERS_PER_FRAME],
    pub candidates: [f64; RATERS_PER_FRAME],
    pub selected: usize,
    pub score: f64,
    pub in_trust_region: bool,
}

fn check_dense(points: &[Waypoint]) -> Result<(), TrajError> {
    check_len(points, FUTURE_LEN)
}

/// Normalized trust-region overshoot of `pred` relative to `rated`; zero inside.
pub fn excess_distance(pred: &Trajectory, rated: &Trajectory, cfg: &RfsConfig) -> Result<f64, RfsError> {
    check_dense(pred.points())?;
    check_dense(rated.points())?;
    Ok(excess_points(pred.points(), rated.points(), cfg))
}

fn excess_points(pred: &[Waypoint], rated: &[Waypoint], cfg: &RfsConfig) -> f64 {
    let prof = deviation_profile_points(pred, rated);
    let worst = prof
        .lateral
        .iter()
        .zip(&prof.longitudinal)
        .map(|(lat, lon)| (lat / cfg.lat_tol).max(lon / cfg.lon_tol))
        .fold(0.0_f64, f64::max);
    (worst - 1.0).max(0.0)
}

/// Score offered by a rater with score `rater_score` at excess distance `excess`.
pub fn candidate_score(rater_score: f64, excess: f64, decay_rate: f64) -> f64 {
    let s = rater_score.clamp(FLOOR_SCORE, MAX_SCORE);
    if excess == 0.0 {
        s
    } else {
        FLOOR_SCORE + (s - FLOOR_SCORE) * (-decay_rate * excess).exp()
    }
}

pub fn score_against_raters(
    pred: &Trajectory,
    rated: &[RatedTrajectory],
    cfg: &RfsConfig,
) -> Result<ScoreBreakdown, RfsError> {
    check_dense(pred.points())?;
    score_points(pred.points(), rated, cfg)
}

fn score_points(pred: &[Waypoint], rated: &[RatedTrajectory], cfg: &RfsConfig) -> Result<ScoreBreakdown, RfsError> {
    if rated.len() != RATERS_PER_FRAME {
        return Err(RfsError::RaterCount(rated.len()));
    }
    let mut excess = [0.0; RATERS_PER_FRAME];
    let mut candidates = [0.0; RATERS_PER_FRAME];
    for (i, r) in rated.iter().enumerate() {
        check_dense(r.traj.points())?;
        excess[i] = excess_points(pred, r.traj.points(), cfg);
        candidates[i] = candidate_score(r.score, excess[i], cfg.decay_rate);
    }
    let mut selected = 0;
    for i in 1..RATERS_PER_FRAME {
        let better = match cfg.rater_select {
            RaterSelect::Nearest => {
                excess[i] < excess[selected]
                    || (excess[i] == excess[selected] && rated[i].score > rated[selected].score)
            }
            RaterSelect::Max => candidates[i] > candidates[selected],
        };
        if better {
            selected = i;
        }
    }
    Ok(ScoreBreakdown {
        excess,
        candidates,
        selected,
        score: candidates[selected],
        in_trust_region: excess[selected] == 0.0,
    })
}

/// Maps a score in [4, 10] onto [0, 1].
pub fn normalized_rfs_reward(score: f64) -> Result<f64, RfsError> {
    if !(FLOOR_SCORE..=MAX_SCORE).contains(&score) {
        return Err(RfsError::ScoreRange(score));
    }
    Ok((score - FLOOR_SCORE) / (MAX_SCORE - FLOOR_SCORE))
}

/// 1 when the text parses under the strict trajectory grammar, else 0.
pub fn format_reward(raw: &str) -> f64 {
    if parse_trajectory_text(raw).is_ok() {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub format: f64,
    pub normalized_rfs: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub const ZERO: RewardBreakdown = RewardBreakdown {
        format: 0.0,
        normalized_rfs: 0.0,
        total: 0.0,
    };
}

/// Format-gated reward for raw model text. Unparseable text earns nothing.
pub fn combined_reward(raw: &str, rated: &[RatedTrajectory], cfg: &RfsConfig) -> RewardBreakdown {
    match parse_trajectory_text(raw) {
        Ok(w) => waypoint_reward(&w, rated, cfg).unwrap_or(RewardBreakdown::ZERO),
        Err(_) => RewardBreakdown::ZERO,
    }
}

/// Reward for already well-formed 1 Hz waypoints (format reward fixed at 1).
pub fn waypoint_reward(
    waypoints: &[Waypoint],
    rated: &[RatedTrajectory],
    cfg: &RfsConfig,
) -> Result<RewardBreakdown, RfsError> {
    let dense = traj::upsample_spline_with(waypoints, cfg.spline)?;
    let s = score_points(dense.points(), rated, cfg)?;
    let normalized_rfs = normalized_rfs_reward(s.score)?;
    Ok(RewardBreakdown {
        format: 1.0,
        normalized_rfs,
        total: cfg.format_weight + (1.0 - cfg.format_weight) * normalized_rfs,
    })
}

/// Per-frame outcome of scoring one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub score: f64,
    /// The prediction failed the format gate and received the floor.
    pub unparseable: bool,
    pub in_trust_region: bool,
}

/// Scores a raw or structured prediction; unparseable text scores the floor.
pub fn score_prediction(
    output: &PredictionOutput,
    rated: &[RatedTrajectory],
    cfg: &RfsConfig,
) -> Result<FrameScore, RfsError> {
    let waypoints = match output {
        PredictionOutput::Waypoints(w) => *w,
        PredictionOutput::RawText(t) => match parse_trajectory_text(t) {
            Ok(w) => w,
            Err(_) => {
                if rated.len() != RATERS_PER_FRAME {
                    return Err(RfsError::RaterCount(rated.len()));
                }
                return Ok(FrameScore {
                    score: FLOOR_SCORE,
                    unparseable: true,
                    in_trust_region: false,
                });
            }
        },
    };
    let dense = traj::upsample_spline_with(&waypoints, cfg.spline)?;
    let s = score_points(dense.points(), rated, cfg)?;
    Ok(FrameScore {
        score: s.score,
        unparseable: false,
        in_trust_region: s.in_trust_region,
    })
}

/// Work item for [`score_frames`].
#[derive(Debug, Clone, Copy)]
pub struct ScoringJob<'a> {
    pub output: &'a PredictionOutput,
    pub rated: &'a [RatedTrajectory],
}

/// Scores every job; results are in input order regardless of `exec`.
pub fn score_frames(
    jobs: &[ScoringJob<'_>],
    cfg: &RfsConfig,
    exec: Execution,
) -> Result<Vec<FrameScore>, RfsError> {
    exec.map(jobs, |_, job| score_prediction(job.output, job.rated, cfg))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryStat {
    pub category: String,
    pub n: usize,
    pub mean: f64,
}

/// Two-level mean: within each category, then across categories.
#[derive(Debug, Clone, PartialEq)]
pub struct RfsAggregate {
    /// Sorted by category name.
    pub per_category: Vec<CategoryStat>,
    pub final_rfs: f64,
}

pub fn aggregate_rfs<S: AsRef<str>>(scores: &[(S, f64)]) -> Result<RfsAggregate, RfsError> {
    if scores.is_empty() {
        return Err(RfsError::Empty);
    }
    let mut groups: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for (cat, s) in scores {
        let g = groups.entry(cat.as_ref()).or_insert((0, 0.0));
        g.0 += 1;
        g.1 += *s;
    }
    let per_category: Vec<CategoryStat> = groups
        .into_iter()
        .map(|(category, (n, sum))| CategoryStat {
            category: category.to_string(),
            n,
            mean: sum / n as f64,
        })
        .collect();
    let total: f64 = per_category.iter().map(|c| c.mean).sum();
    Ok(RfsAggregate {
        final_rfs: total / per_category.len() as f64,
        per_category,
    })
}

impl RfsAggregate {
    pub fn total_frames(&self) -> usize {
        self.per_category.iter().map(|c| c.n).sum()
    }

    /// `category,n,mean_score` rows followed by a `final_rfs` row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut rows = vec![["category".to_string(), "n".to_string(), "mean_score".to_string()]];
        for c in &self.per_category {
            rows.push([c.category.clone(), c.n.to_string(), c.mean.to_string()]);
        }
        rows.push([
            "final_rfs".to_string(),
            self.total_frames().to_string(),
            self.final_rfs.to_string(),
        ]);
        for r in &rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| category | n | mean_score |\n|---|---:|---:|\n");
        for c in &self.per_category {
            s.push_str(&format!("| {} | {} | {} |\n", c.category.replace('|', "\\|"), c.n, c.mean));
        }
        s.push_str(&format!(
            "| **final_rfs** | {} | {} |\n",
            self.total_frames(),
            self.final_rfs
        ));
        s
    }
}
