//! Strict-JSON annotation schema and the per-stage chain-of-thought payloads.
//!
//! "Strict" means: exactly one top-level object, no duplicate keys, no keys
//! beyond the schema at any depth, closed vocabularies for every enum-valued
//! field, and nothing but whitespace around the object.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::text::{parse_trajectory_text, TextError};
use crate::traj::{Waypoint, WAYPOINTS_1HZ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn is_yes(self) -> bool {
        self == YesNo::Yes
    }
}

impl From<bool> for YesNo {
    fn from(b: bool) -> Self {
        if b {
            YesNo::Yes
        } else {
            YesNo::No
        }
    }
}

/// The twelve audited object classes, in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CriticalClass {
    NearbyVehicle,
    Pedestrian,
    Cyclist,
    Construction,
    TrafficElement,
    WeatherCondition,
    RoadHazard,
    EmergencyVehicle,
    Animal,
    SpecialVehicle,
    ConflictingVehicle,
    DoorOpeningVehicle,
}

impl CriticalClass {
    pub const ALL: [CriticalClass; 12] = [
        Self::NearbyVehicle,
        Self::Pedestrian,
        Self::Cyclist,
        Self::Construction,
        Self::TrafficElement,
        Self::WeatherCondition,
        Self::RoadHazard,
        Self::EmergencyVehicle,
        Self::Animal,
        Self::SpecialVehicle,
        Self::ConflictingVehicle,
        Self::DoorOpeningVehicle,
    ];

    /// JSON key.
    pub fn key(self) -> &'static str {
        match self {
            Self::NearbyVehicle => "nearby_vehicle",
            Self::Pedestrian => "pedestrian",
            Self::Cyclist => "cyclist",
            Self::Construction => "construction",
            Self::TrafficElement => "traffic_element",
            Self::WeatherCondition => "weather_condition",
            Self::RoadHazard => "road_hazard",
            Self::EmergencyVehicle => "emergency_vehicle",
            Self::Animal => "animal",
            Self::SpecialVehicle => "special_vehicle",
            Self::ConflictingVehicle => "conflicting_vehicle",
            Self::DoorOpeningVehicle => "door_opening_vehicle",
        }
    }

    /// Key with underscores replaced by spaces, as it would appear in prose.
    pub fn display_name(self) -> String {
        self.key().replace('_', " ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalObjects {
    pub nearby_vehicle: YesNo,
    pub pedestrian: YesNo,
    pub cyclist: YesNo,
    pub construction: YesNo,
    pub traffic_element: YesNo,
    pub weather_condition: YesNo,
    pub road_hazard: YesNo,
    pub emergency_vehicle: YesNo,
    pub animal: YesNo,
    pub special_vehicle: YesNo,
    pub conflicting_vehicle: YesNo,
    pub door_opening_vehicle: YesNo,
}

impl CriticalObjects {
    pub fn none() -> Self {
        Self::from_fn(|_| YesNo::No)
    }

    pub fn from_fn(mut f: impl FnMut(CriticalClass) -> YesNo) -> Self {
        use CriticalClass::*;
        Self {
            nearby_vehicle: f(NearbyVehicle),
            pedestrian: f(Pedestrian),
            cyclist: f(Cyclist),
            construction: f(Construction),
            traffic_element: f(TrafficElement),
            weather_condition: f(WeatherCondition),
            road_hazard: f(RoadHazard),
            emergency_vehicle: f(EmergencyVehicle),
            animal: f(Animal),
            special_vehicle: f(SpecialVehicle),
            conflicting_vehicle: f(ConflictingVehicle),
            door_opening_vehicle: f(DoorOpeningVehicle),
        }
    }

    pub fn get(&self, class: CriticalClass) -> YesNo {
        use CriticalClass::*;
        match class {
            NearbyVehicle => self.nearby_vehicle,
            Pedestrian => self.pedestrian,
            Cyclist => self.cyclist,
            Construction => self.construction,
            TrafficElement => self.traffic_element,
            WeatherCondition => self.weather_condition,
            RoadHazard => self.road_hazard,
            EmergencyVehicle => self.emergency_vehicle,
            Animal => self.animal,
            SpecialVehicle => self.special_vehicle,
            ConflictingVehicle => self.conflicting_vehicle,
            DoorOpeningVehicle => self.door_opening_vehicle,
        }
    }

    pub fn flagged(&self) -> impl Iterator<Item = CriticalClass> + '_ {
        CriticalClass::ALL.into_iter().filter(|c| self.get(*c).is_yes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speed {
    Keep,
    Accelerate,
    Decelerate,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Straight,
    Yield,
    LeftTurn,
    RightTurn,
    LaneFollow,
    LaneChangeLeft,
    LaneChangeRight,
    Reverse,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaBehaviour {
    pub speed: Speed,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub critical_objects: CriticalObjects,
    pub explanation: String,
    pub meta_behaviour: MetaBehaviour,
}

impl Annotation {
    /// Advisory findings: classes marked "no" that the explanation still names.
    pub fn explanation_warnings(&self) -> Vec<String> {
        let text = self.explanation.to_lowercase();
        CriticalClass::ALL
            .into_iter()
            .filter(|c| !self.critical_objects.get(*c).is_yes())
            .filter(|c| text.contains(&c.display_name()) || text.contains(c.key()))
            .map(|c| format!("explanation mentions `{}` which is marked \"no\"", c.key()))
            .collect()
    }
}

/// A schema violation located by a dotted JSON path (`<root>` for the document itself).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub(crate) fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub(crate) const ROOT_PATH: &str = "<root>";

fn join_path(base: &str, leaf: &str) -> String {
    if base.is_empty() || base == "." {
        leaf.to_string()
    } else {
        format!("{base}.{leaf}")
    }
}

/// Returns the backquoted name in serde messages such as "missing field `x`".
fn quoted_name(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    Some(&message[start..end])
}

/// Deserializes `raw` as `T`, mapping any failure to a [`SchemaError`] with a path
/// that points at the offending key (including missing and unknown keys).
pub(crate) fn strict_from_str<T: DeserializeOwned>(raw: &str) -> Result<T, SchemaError> {
    let mut de = serde_json::Deserializer::from_str(raw);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| locate(&e))?;
    // `end` rejects anything but trailing whitespace.
    de.end()
        .map_err(|e| SchemaError::new(ROOT_PATH, format!("trailing characters after object ({e})")))?;
    Ok(value)
}

fn locate(err: &serde_path_to_error::Error<serde_json::Error>) -> SchemaError {
    let path = err.path().to_string();
    let inner = err.inner();
    let message = inner.to_string();
    let base = if path == "." { "" } else { path.as_str() };
    let leaf_path = if message.starts_with("missing field") || message.starts_with("duplicate field") {
        quoted_name(&message).map(|name| join_path(base, name))
    } else {
        None
    };
    let path = leaf_path.unwrap_or_else(|| {
        if base.is_empty() {
            ROOT_PATH.to_string()
        } else {
            base.to_string()
        }
    });
    SchemaError::new(path, message)
}

/// Parses and validates a full annotation document.
pub fn validate_annotation(raw: &str) -> Result<Annotation, SchemaError> {
    let ann: Annotation = strict_from_str(raw)?;
    check_explanation(&ann.explanation, "explanation")?;
    Ok(ann)
}

fn check_explanation(text: &str, path: &str) -> Result<(), SchemaError> {
    if text.trim().is_empty() {
        return Err(SchemaError::new(path, "explanation must not be empty"));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stage1 {
    critical_objects: CriticalObjects,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stage2 {
    explanation: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stage3 {
    meta_behaviour: MetaBehaviour,
}

/// One step of the four-stage reasoning chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CotStage {
    CriticalObjects = 1,
    Explanation = 2,
    MetaBehaviour = 3,
    Trajectory = 4,
}

impl CotStage {
    pub fn from_index(stage: u8) -> Option<Self> {
        match stage {
            1 => Some(Self::CriticalObjects),
            2 => Some(Self::Explanation),
            3 => Some(Self::MetaBehaviour),
            4 => Some(Self::Trajectory),
            _ => None,
        }
    }
}

impl fmt::Display for CotStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}", *self as u8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CotPayload {
    CriticalObjects(CriticalObjects),
    Explanation(String),
    MetaBehaviour(MetaBehaviour),
    Trajectory([Waypoint; WAYPOINTS_1HZ]),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CotError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("trajectory: {0}")]
    Text(#[from] TextError),
}

pub fn validate_cot_stage(raw: &str, stage: CotStage) -> Result<CotPayload, CotError> {
    Ok(match stage {
        CotStage::CriticalObjects => {
            CotPayload::CriticalObjects(strict_from_str::<Stage1>(raw)?.critical_objects)
        }
        CotStage::Explanation => {
            let s: Stage2 = strict_from_str(raw)?;
            check_explanation(&s.explanation, "explanation")?;
            CotPayload::Explanation(s.explanation)
        }
        CotStage::MetaBehaviour => {
            CotPayload::MetaBehaviour(strict_from_str::<Stage3>(raw)?.meta_behaviour)
        }
        CotStage::Trajectory => CotPayload::Trajectory(parse_trajectory_text(raw)?),
    })
}
