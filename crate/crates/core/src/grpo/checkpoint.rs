//! JSON checkpoint: a small header followed by the flat parameter array.
//!
//! ```json
//! {"format_version":1,"input":33,"hidden":64,"output":10,"sigma":0.5,"seed":0,"step":2000,"params":[...]}
//! ```
//!
//! Floats use shortest round-trip notation, so save/load is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::{PolicyParams, PolicyShape};
use super::GrpoError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub seed: u64,
    pub step: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    input: usize,
    hidden: usize,
    output: usize,
    sigma: f64,
    seed: u64,
    step: usize,
    params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: PolicyParams, seed: u64, step: usize) -> Self {
        Self { params, seed, step }
    }

    pub fn to_json(&self) -> String {
        let s = self.params.shape;
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            input: s.input,
            hidden: s.hidden,
            output: s.output,
            sigma: self.params.sigma,
            seed: self.seed,
            step: self.step,
            params: self.params.values.clone(),
        };
        serde_json::to_string(&file).expect("finite parameters serialize")
    }

    pub fn from_json(raw: &str) -> Result<Self, GrpoError> {
        let file: CheckpointFile =
            serde_json::from_str(raw).map_err(|e| GrpoError::Checkpoint(e.to_string()))?;
        if file.format_version != CHECKPOINT_VERSION {
            return Err(GrpoError::Checkpoint(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        let params = PolicyParams {
            shape: PolicyShape {
                input: file.input,
                hidden: file.hidden,
                output: file.output,
            },
            values: file.params,
            sigma: file.sigma,
        };
        params
            .validate()
            .map_err(|e| GrpoError::Checkpoint(e.to_string()))?;
        Ok(Self {
            params,
            seed: file.seed,
            step: file.step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GrpoError> {
        fs::write(path.as_ref(), self.to_json() + "\n")
            .map_err(|e| GrpoError::Checkpoint(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GrpoError> {
        let raw = fs::read_to_string(path.as_ref())
            .map_err(|e| GrpoError::Checkpoint(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&raw)
    }
}
