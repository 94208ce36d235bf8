//! JSONL scenario and prediction files.
//!
//! Scenario line:
//! `{"scenario_id", "category", "intent", "past_xy": [[x,y]×16], "future_xy"?: [[x,y]×20],
//!   "rated"?: [{"traj_xy": [[x,y]×20], "score"}×3], "annotation"?: {...}}`
//!
//! Prediction line: `{"scenario_id", "raw_text"}` or `{"scenario_id", "waypoints_1hz": [[x,y]×5]}`.
//!
//! Floats are written in shortest round-trip form, so save/load is bit-exact.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::annotation::{strict_from_str, Annotation, SchemaError};
use crate::traj::{Trajectory, TrajError, Waypoint, FUTURE_LEN, PAST_LEN, WAYPOINTS_1HZ};

pub const RATERS_PER_FRAME: usize = 3;
pub const MAX_RATER_SCORE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RatedTrajectory {
    pub traj: Trajectory,
    pub score: f64,
}

impl RatedTrajectory {
    pub fn new(traj: Trajectory, score: f64) -> Result<Self, FrameError> {
        check_future(&traj, "traj_xy")?;
        if !(0.0..=MAX_RATER_SCORE).contains(&score) {
            return Err(FrameError::new("score", format!("rater score {score} outside [0, 10]")));
        }
        Ok(Self { traj, score })
    }
}

/// One evaluation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFrame {
    pub scenario_id: String,
    pub category: String,
    pub intent: String,
    pub past: Trajectory,
    pub future: Option<Trajectory>,
    pub rated: Option<[RatedTrajectory; RATERS_PER_FRAME]>,
    pub annotation: Option<Annotation>,
}

/// A frame-level schema violation; `path` is a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct FrameError {
    pub path: String,
    pub message: String,
}

impl FrameError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }

    fn nested(self, prefix: &str) -> Self {
        Self {
            path: format!("{prefix}.{}", self.path),
            message: self.message,
        }
    }
}

impl From<SchemaError> for FrameError {
    fn from(e: SchemaError) -> Self {
        Self::new(e.path, e.message)
    }
}

fn traj_error(path: &str, e: TrajError) -> FrameError {
    match e {
        TrajError::NonFinite { index } => FrameError::new(format!("{path}[{index}]"), "not finite"),
        other => FrameError::new(path, other.to_string()),
    }
}

fn check_future(traj: &Trajectory, path: &str) -> Result<(), FrameError> {
    if traj.len() != FUTURE_LEN || traj.rate_hz() != 4 {
        return Err(FrameError::new(
            path,
            format!("expected {FUTURE_LEN} points at 4 Hz, found {} at {} Hz", traj.len(), traj.rate_hz()),
        ));
    }
    Ok(())
}

impl ScenarioFrame {
    pub fn rated_slice(&self) -> Option<&[RatedTrajectory]> {
        self.rated.as_ref().map(|r| r.as_slice())
    }

    pub fn to_record(&self) -> ScenarioRecord {
        ScenarioRecord {
            scenario_id: self.scenario_id.clone(),
            category: self.category.clone(),
            intent: self.intent.clone(),
            past_xy: self.past.to_xy(),
            future_xy: self.future.as_ref().map(Trajectory::to_xy),
            rated: self.rated.as_ref().map(|r| {
                r.iter()
                    .map(|rt| RatedRecord {
                        traj_xy: rt.traj.to_xy(),
                        score: rt.score,
                    })
                    .collect()
            }),
            annotation: self.annotation.clone(),
        }
    }

    pub fn from_record(rec: ScenarioRecord) -> Result<Self, FrameError> {
        let past = Trajectory::from_xy(&rec.past_xy, 4).map_err(|e| traj_error("past_xy", e))?;
        if past.len() != PAST_LEN {
            return Err(FrameError::new(
                "past_xy",
                format!("expected {PAST_LEN} points, found {}", past.len()),
            ));
        }
        let future = rec
            .future_xy
            .map(|xy| {
                let t = Trajectory::from_xy(&xy, 4).map_err(|e| traj_error("future_xy", e))?;
                check_future(&t, "future_xy")?;
                Ok::<_, FrameError>(t)
            })
            .transpose()?;
        let rated = rec
            .rated
            .map(|list| {
                if list.len() != RATERS_PER_FRAME {
                    return Err(FrameError::new(
                        "rated",
                        format!("expected {RATERS_PER_FRAME} rated trajectories, found {}", list.len()),
                    ));
                }
                let mut out = Vec::with_capacity(RATERS_PER_FRAME);
                for (i, r) in list.into_iter().enumerate() {
                    let prefix = format!("rated[{i}]");
                    let traj = Trajectory::from_xy(&r.traj_xy, 4)
                        .map_err(|e| traj_error("traj_xy", e).nested(&prefix))?;
                    out.push(RatedTrajectory::new(traj, r.score).map_err(|e| e.nested(&prefix))?);
                }
                Ok(out.try_into().expect("length checked"))
            })
            .transpose()?;
        if let Some(a) = &rec.annotation {
            if a.explanation.trim().is_empty() {
                return Err(FrameError::new("annotation.explanation", "explanation must not be empty"));
            }
        }
        Ok(Self {
            scenario_id: rec.scenario_id,
            category: rec.category,
            intent: rec.intent,
            past,
            future,
            rated,
            annotation: rec.annotation,
        })
    }

    /// Parses and validates one JSONL line.
    pub fn from_json(line: &str) -> Result<Self, FrameError> {
        let rec: ScenarioRecord = strict_from_str(line)?;
        Self::from_record(rec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("records always serialize")
    }
}

/// Wire form of a [`ScenarioFrame`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub scenario_id: String,
    pub category: String,
    pub intent: String,
    pub past_xy: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub future_xy: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rated: Option<Vec<RatedRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatedRecord {
    pub traj_xy: Vec<[f64; 2]>,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {error}")]
    Line { line: usize, error: FrameError },
}

impl DatasetError {
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Line { line, .. } => Some(*line),
            Self::Io { .. } => None,
        }
    }
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, body: &str) -> Result<(), DatasetError> {
    fs::write(path, body).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines with their 1-based line numbers.
pub fn jsonl_lines(body: &str) -> impl Iterator<Item = (usize, &str)> {
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
}

/// Parses a whole JSONL body; the first bad line aborts the load.
pub fn parse_scenarios(body: &str) -> Result<Vec<ScenarioFrame>, DatasetError> {
    jsonl_lines(body)
        .map(|(line, text)| ScenarioFrame::from_json(text).map_err(|error| DatasetError::Line { line, error }))
        .collect()
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<ScenarioFrame>, DatasetError> {
    parse_scenarios(&read(path.as_ref())?)
}

pub fn scenarios_to_jsonl(frames: &[ScenarioFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&f.to_json());
        out.push('\n');
    }
    out
}

pub fn save_scenarios(frames: &[ScenarioFrame], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    write(path.as_ref(), &scenarios_to_jsonl(frames))
}

/// What a model produced for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionOutput {
    RawText(String),
    Waypoints([Waypoint; WAYPOINTS_1HZ]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scenario_id: String,
    pub output: PredictionOutput,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    scenario_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    waypoints_1hz: Option<Vec<[f64; 2]>>,
}

impl Prediction {
    pub fn from_json(line: &str) -> Result<Self, FrameError> {
        let rec: PredictionRecord = strict_from_str(line)?;
        let output = match (rec.raw_text, rec.waypoints_1hz) {
            (Some(t), None) => PredictionOutput::RawText(t),
            (None, Some(xy)) => PredictionOutput::Waypoints(waypoints_from_xy(&xy, "waypoints_1hz")?),
            _ => {
                return Err(FrameError::new(
                    "<root>",
                    "exactly one of `raw_text` or `waypoints_1hz` is required",
                ))
            }
        };
        Ok(Self {
            scenario_id: rec.scenario_id,
            output,
        })
    }

    pub fn to_json(&self) -> String {
        let rec = match &self.output {
            PredictionOutput::RawText(t) => PredictionRecord {
                scenario_id: self.scenario_id.clone(),
                raw_text: Some(t.clone()),
                waypoints_1hz: None,
            },
            PredictionOutput::Waypoints(w) => PredictionRecord {
                scenario_id: self.scenario_id.clone(),
                raw_text: None,
                waypoints_1hz: Some(w.iter().map(|&p| p.into()).collect()),
            },
        };
        serde_json::to_string(&rec).expect("records always serialize")
    }
}

pub(crate) fn waypoints_from_xy(xy: &[[f64; 2]], path: &str) -> Result<[Waypoint; WAYPOINTS_1HZ], FrameError> {
    if xy.len() != WAYPOINTS_1HZ {
        return Err(FrameError::new(
            path,
            format!("expected {WAYPOINTS_1HZ} waypoints, found {}", xy.len()),
        ));
    }
    let mut out = [Waypoint::ORIGIN; WAYPOINTS_1HZ];
    for (i, (slot, p)) in out.iter_mut().zip(xy).enumerate() {
        *slot = Waypoint::from(*p);
        if !slot.is_finite() {
            return Err(FrameError::new(format!("{path}[{i}]"), "not finite"));
        }
    }
    Ok(out)
}

pub fn parse_predictions(body: &str) -> Result<Vec<Prediction>, DatasetError> {
    jsonl_lines(body)
        .map(|(line, text)| Prediction::from_json(text).map_err(|error| DatasetError::Line { line, error }))
        .collect()
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, DatasetError> {
    parse_predictions(&read(path.as_ref())?)
}

pub fn save_predictions(preds: &[Prediction], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut out = String::new();
    for p in preds {
        out.push_str(&p.to_json());
        out.push('\n');
    }
    write(path.as_ref(), &out)
}
