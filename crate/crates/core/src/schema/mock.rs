//! Rule-based stand-in for a captioning model, so annotation pipelines run offline.
//!
//! Rules, applied to the 4 Hz future:
//! - speed: mean speed over the last second vs the first second. Below
//!   `0.8·v0 − 0.2` is `decelerate`, above `1.2·v0 + 0.2` is `accelerate`,
//!   otherwise `keep`.
//! - command: final x below −1 m is `reverse`; a decelerating future whose final
//!   quarter-second runs below 0.3 m/s is `yield`; |final y| ≤ 2 m is `straight`; beyond that a
//!   final heading change over 0.35 rad toward the offset side is a turn,
//!   otherwise a lane change.
//! - critical objects: `conflicting_vehicle` for yields, `nearby_vehicle` for
//!   decelerations, `traffic_element` for turns and yields; each remaining
//!   class is set with probability 0.05 from a stream seeded by
//!   `(seed, scenario_id)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::annotation::{Annotation, Command, CriticalClass, CriticalObjects, MetaBehaviour, Speed, YesNo};
use super::dataset::ScenarioFrame;
use crate::traj::Waypoint;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("frame {scenario_id} has no future trajectory to annotate")]
pub struct MissingFuture {
    pub scenario_id: String,
}

const TURN_HEADING_RAD: f64 = 0.35;
const LATERAL_MOVE_M: f64 = 2.0;
const RANDOM_FLAG_P: f64 = 0.05;

/// FNV-1a, used only to fold a scenario id into the annotator seed.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn speed_label(future: &[Waypoint]) -> Speed {
    let n = future.len();
    let v0 = future[3].norm(); // distance covered in the first second
    let v1 = future[n - 1].sub(future[n - 5]).norm();
    if v1 < 0.8 * v0 - 0.2 {
        Speed::Decelerate
    } else if v1 > 1.2 * v0 + 0.2 {
        Speed::Accelerate
    } else {
        Speed::Keep
    }
}

pub fn command_label(future: &[Waypoint], speed: Speed) -> Command {
    let n = future.len();
    let last = future[n - 1];
    let v_end = last.sub(future[n - 2]).norm() * 4.0;
    if last.x < -1.0 {
        return Command::Reverse;
    }
    if speed == Speed::Decelerate && v_end < 0.3 {
        return Command::Yield;
    }
    if last.y.abs() <= LATERAL_MOVE_M {
        return Command::Straight;
    }
    let d = last.sub(future[n - 2]);
    let heading = d.y.atan2(d.x);
    match (last.y > 0.0, heading.abs() > TURN_HEADING_RAD && heading.signum() == last.y.signum()) {
        (true, true) => Command::LeftTurn,
        (true, false) => Command::LaneChangeLeft,
        (false, true) => Command::RightTurn,
        (false, false) => Command::LaneChangeRight,
    }
}

fn speed_phrase(s: Speed) -> &'static str {
    match s {
        Speed::Keep => "holds its speed",
        Speed::Accelerate => "speeds up",
        Speed::Decelerate => "slows down",
        Speed::Other => "adjusts its speed",
    }
}

fn command_phrase(c: Command) -> &'static str {
    match c {
        Command::Straight => "continues straight",
        Command::Yield => "comes to a stop to yield",
        Command::LeftTurn => "turns left",
        Command::RightTurn => "turns right",
        Command::LaneFollow => "follows its lane",
        Command::LaneChangeLeft => "moves over to the left",
        Command::LaneChangeRight => "moves over to the right",
        Command::Reverse => "backs up",
        Command::Other => "manoeuvres",
    }
}

/// Deterministic in `(frame, seed)`; the result always passes strict validation.
pub fn mock_annotate(frame: &ScenarioFrame, seed: u64) -> Result<Annotation, MissingFuture> {
    let future = frame.future.as_ref().ok_or_else(|| MissingFuture {
        scenario_id: frame.scenario_id.clone(),
    })?;
    let pts = future.points();
    let speed = speed_label(pts);
    let command = command_label(pts, speed);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&frame.scenario_id));
    let turning = matches!(command, Command::LeftTurn | Command::RightTurn);
    let objects = CriticalObjects::from_fn(|class| {
        // Draw for every class so the stream position does not depend on the rules.
        let coin = rng.random_bool(RANDOM_FLAG_P);
        let ruled = match class {
            CriticalClass::ConflictingVehicle => command == Command::Yield,
            CriticalClass::NearbyVehicle => speed == Speed::Decelerate,
            CriticalClass::TrafficElement => turning || command == Command::Yield,
            _ => false,
        };
        YesNo::from(ruled || coin)
    });

    let mut explanation = format!(
        "The ego vehicle {} and {}.",
        speed_phrase(speed),
        command_phrase(command)
    );
    let flagged: Vec<String> = objects.flagged().map(|c| c.display_name()).collect();
    if flagged.is_empty() {
        explanation.push_str(" Nothing in the scene constrains the plan.");
    } else {
        explanation.push_str(&format!(" The plan accounts for: {}.", flagged.join(", ")));
    }

    Ok(Annotation {
        critical_objects: objects,
        explanation,
        meta_behaviour: MetaBehaviour { speed, command },
    })
}
