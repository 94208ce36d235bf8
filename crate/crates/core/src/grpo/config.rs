use serde::{Deserialize, Serialize};

use super::GrpoError;
use crate::rfs::RfsConfig;

const MAXNORM: f64 = 5.0;

/// GRPO hyperparameters. Learning-rate magnitude is scaled for the small
/// waypoint network; the schedule decays linearly to zero over `steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoConfig {
    /// Rollouts per frame (G).
    pub group_size: usize,
    /// KL penalty coefficient (β).
    pub kl_coeff: f64,
    pub clip_eps: f64,
    /// Ratio clipping on/off.
    pub clip: bool,
    /// Multiplies the policy's σ while sampling.
    pub temperature: f64,
    pub steps: usize,
    /// Frames per step; each contributes `group_size` rollouts.
    pub batch_frames: usize,
    pub lr_start: f64,
    /// Rescales any update whose gradient L2 norm exceeds this; `null` disables.
    pub max_grad_norm: Option<f64>,
    pub eval_every: usize,
    pub seed: u64,
    /// Reward scoring; set in code, not read from or written to JSON.
    #[serde(skip)]
    pub reward: RfsConfig,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            kl_coeff: 0.04,
            clip_eps: 0.2,
            clip: true,
            temperature: 0.9,
            steps: 2000,
            batch_frames: 32,
            lr_start: 1e-2,
            max_grad_norm: Some(MAXNORM),
            eval_every: 100,
            seed: 0,
            reward: RfsConfig::default(),
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: &str| Err(GrpoError::Config(m.to_string()));
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.kl_coeff >= 0.0 && self.kl_coeff.is_finite()) {
            return bad("kl_coeff must be non-negative");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if self.batch_frames == 0 {
            return bad("batch_frames must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if !(self.lr_start >= 0.0 && self.lr_start.is_finite()) {
            return bad("lr_start must be non-negative");
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad("max_grad_norm must be positive");
            }
        }
        self.reward
            .validate()
            .map_err(|e| GrpoError::Config(e.to_string()))
    }

    /// Factor that brings `grad` within `max_grad_norm` (1 when already inside).
    pub fn grad_scale(&self, grad: &[f64]) -> f64 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        match self.max_grad_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        }
    }

    /// Linearly decayed learning rate for `step` (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.steps == 0 {
            return self.lr_start;
        }
        self.lr_start * (1.0 - step as f64 / self.steps as f64)
    }
}
