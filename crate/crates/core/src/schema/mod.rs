//! Output grammars, strict-JSON schemas, prompt templates and dataset files.

pub mod annotation;
pub mod dataset;
pub mod mock;
pub mod prompt;
pub mod text;

pub use annotation::{
    validate_annotation, validate_cot_stage, Annotation, Command, CotError, CotPayload, CotStage,
    CriticalClass, CriticalObjects, MetaBehaviour, SchemaError, Speed, YesNo,
};
pub use dataset::{
    load_predictions, load_scenarios, parse_predictions, parse_scenarios, save_predictions,
    save_scenarios, scenarios_to_jsonl, DatasetError, FrameError, Prediction, PredictionOutput,
    RatedTrajectory, ScenarioFrame, RATERS_PER_FRAME,
};
pub use mock::mock_annotate;
pub use prompt::{render_prompt, PromptKind};
pub use text::{parse_trajectory_text, serialize_trajectory_text, TextError, TextErrorKind};
