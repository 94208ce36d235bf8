//! System prompt templates for annotation and driving, rendered with one frame's inputs.

use thiserror::Error;

use super::dataset::ScenarioFrame;
use super::text::format_pairs;

const ANNOTATION_TEMPLATE: &str = r#"You are an expert labeller of driving scenarios.
Input:
- 3 frames of multi-view images collected from the ego-vehicle over the last 1 second
- Current high-level intent (string)
- 4-second past trajectory (16 steps at 4 Hz)
- Expert 5-second future trajectory (20 steps at 4 Hz)
Task:
1. Inspect the input and decide, for each object class below, whether at least one critical instance of that class is present (i.e., it materially affects the ego-vehicle's future trajectory). A vehicle can be a car, bus, truck, motorcyclist, scooter, etc. traffic_element includes traffic signs and traffic lights. road_hazard may include hazardous road conditions, road debris, obstacles, etc. A conflicting_vehicle is a vehicle that may potentially conflict with the ego's future path.
   Object classes to audit:
     - nearby_vehicle
     - pedestrian
     - cyclist
     - construction
     - traffic_element
     - weather_condition
     - road_hazard
     - emergency_vehicle
     - animal
     - special_vehicle
     - conflicting_vehicle
     - door_opening_vehicle
2. Output "yes" or "no" for every class (no omissions).
3. Compose a concise natural-language description explaining why the expert safe driver plans the given future trajectory.
     - Mention only the classes you marked "yes"
     - Describe how each of those critical objects or conditions influences the trajectory.
     - Do not invent objects or conditions not present in the input.
4. From the expert's 5-second future trajectory, assign exactly one category from each list:
     - speed ∈ { keep, accelerate, decelerate }
     - command ∈ { straight, yield, left_turn, right_turn, lane_follow, lane_change_left, lane_change_right, reverse }
   Choose the label that best summarises the overall behaviour of the expert future trajectory.
     - If none fits, use `other`, but do this sparingly.
Output format (strict JSON, no extra keys, no commentary):
{
  "critical_objects": {
    "nearby_vehicle": "yes | no",
    "pedestrian": "yes | no",
    "cyclist": "yes | no",
    "construction": "yes | no",
    "traffic_element": "yes | no",
    "weather_condition": "yes | no",
    "road_hazard": "yes | no",
    "emergency_vehicle": "yes | no",
    "animal": "yes | no",
    "special_vehicle": "yes | no",
    "conflicting_vehicle": "yes | no",
    "door_opening_vehicle": "yes | no"
  },
  "explanation": "100-word description that references only the classes marked 'yes'",
  "meta_behaviour": {
    "speed": "keep | accelerate | decelerate | other",
    "command": "straight | yield | left_turn | right_turn | lane_follow | lane_change_left | lane_change_right | reverse | other"}}
"#;

const DRIVER_TEMPLATE: &str = r#"You are an expert driver.
Input:
- 1 frame of multi-view images collected from the ego-vehicle at the present timestep
- Current high-level intent (string)
- 4-second past trajectory (16 steps at 4 Hz)
Task 1: Critical Objects and Conditions Detection
Decide whether at least one critical instance of each class could influence the ego-vehicle's future path (no omissions). A vehicle can be a car, bus, truck, motorcyclist, scooter, etc. traffic_element includes traffic signs and traffic lights. road_hazard may include hazardous road conditions, road debris, obstacles, etc. A conflicting_vehicle is a vehicle that may potentially conflict with the ego's future path. Output "yes" or "no" for every class (no omissions).
   Object classes to audit:
     - nearby_vehicle
     - pedestrian
     - cyclist
     - construction
     - traffic_element
     - weather_condition
     - road_hazard
     - emergency_vehicle
     - animal
     - special_vehicle
     - conflicting_vehicle
     - door_opening_vehicle
Output format (strict JSON, no extra keys, no commentary):
{
  "critical_objects": {
    "nearby_vehicle": "yes | no",
    "pedestrian": "yes | no",
    "cyclist": "yes | no",
    "construction": "yes | no",
    "traffic_element": "yes | no",
    "weather_condition": "yes | no",
    "road_hazard": "yes | no",
    "emergency_vehicle": "yes | no",
    "animal": "yes | no",
    "special_vehicle": "yes | no",
    "conflicting_vehicle": "yes | no",
    "door_opening_vehicle": "yes | no"
  }}
Task 2: Natural Language Explanation
Compose a concise natural-language description of the optimal future 5-second trajectory for the ego vehicle that the expert driver (you) plans and explain why the expert driver plans to execute this trajectory.
    - Mention only the classes you marked "yes" in the previous task.
    - Describe how each of those critical objects or conditions influences the optimal trajectory.
    - Do not invent objects or conditions not present in the input.
Output format (strict JSON, no extra keys, no commentary):
{
  "explanation": "100-word description that references only the classes marked 'yes'"
}
Task 3: Meta-Behaviour Selection
Assign exactly one category from each list. Choose the label that best summarises the overall behaviour of the optimal future trajectory:
     - speed ∈ { keep, accelerate, decelerate }
     - command ∈ { straight, yield, left_turn, right_turn, lane_follow, lane_change_left, lane_change_right, reverse }
     - If none fits, use `other`, but do this sparingly.
Output format (strict JSON, no extra keys, no commentary):
{
  "meta_behaviour": {
    "speed": "keep | accelerate | decelerate | other",
    "command": "straight | yield | left_turn | right_turn | lane_follow | lane_change_left | lane_change_right | reverse | other"
  }}
Task 4: Future Trajectory Prediction
Given the input, critical objects/conditions, natural language explanation, and meta-behaviour, predict the optimal 5-second future trajectory (5 steps at 1 Hz) of the ego vehicle.
Output format (raw text, not markdown or LaTeX):
[x_1, y_1], [x_2, y_2], [x_3, y_3], [x_4, y_4], [x_5, y_5]
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    /// Labelling prompt; conditions on the expert future.
    Annotation,
    /// Driving prompt with the four-stage reasoning chain.
    Vlt,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("frame {scenario_id} has no future trajectory; the annotation prompt needs one")]
    MissingFuture { scenario_id: String },
}

pub fn template(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::Annotation => ANNOTATION_TEMPLATE,
        PromptKind::Vlt => DRIVER_TEMPLATE,
    }
}

/// The template followed by the frame's intent, past and (annotation only) future.
pub fn render_prompt(kind: PromptKind, frame: &ScenarioFrame) -> Result<String, PromptError> {
    let mut out = String::from(template(kind));
    out.push_str("\nInput values:\n");
    out.push_str(&format!("- Current high-level intent: {}\n", frame.intent));
    out.push_str(&format!(
        "- 4-second past trajectory (16 steps at 4 Hz): {}\n",
        format_pairs(frame.past.points())
    ));
    if kind == PromptKind::Annotation {
        let future = frame.future.as_ref().ok_or_else(|| PromptError::MissingFuture {
            scenario_id: frame.scenario_id.clone(),
        })?;
        out.push_str(&format!(
            "- Expert 5-second future trajectory (20 steps at 4 Hz): {}\n",
            format_pairs(future.points())
        ));
    }
    Ok(out)
}
