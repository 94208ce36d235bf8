//! Training loop: frozen reference, on-policy batches, plain gradient descent
//! with a linearly decaying learning rate, periodic greedy evaluation.

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::objective::{collect_groups, surrogate_loss_and_grad};
use super::policy::{policy_context, PolicyParams};
use super::{GrpoConfig, GrpoError};
use crate::exec::Execution;
use crate::rfs::{aggregate_rfs, normalized_rfs_reward, score_prediction};
use crate::schema::dataset::{PredictionOutput, ScenarioFrame};

/// One line of the metrics log. Training columns are empty on the final
/// evaluation-only row; evaluation columns are empty between evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub lr: f64,
    pub mean_reward: Option<f64>,
    pub mean_kl: Option<f64>,
    pub clip_fraction: Option<f64>,
    /// Per-category RFS of the greedy policy on the evaluation frames.
    pub eval_rfs: Option<f64>,
    /// Mean normalized RFS reward of the greedy policy on the evaluation frames.
    pub eval_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<MetricsRow>,
}

impl TrainOutcome {
    pub fn eval_rows(&self) -> impl Iterator<Item = &MetricsRow> {
        self.log.iter().filter(|r| r.eval_reward.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub rfs: f64,
    pub mean_reward: f64,
}

/// Greedy (mean) predictions scored against each frame's raters.
pub fn evaluate_policy(
    params: &PolicyParams,
    frames: &[ScenarioFrame],
    cfg: &GrpoConfig,
    exec: Execution,
) -> Result<Option<EvalSummary>, GrpoError> {
    if frames.is_empty() {
        return Ok(None);
    }
    let scores = exec
        .map(frames, |_, f| {
            let rated = f
                .rated_slice()
                .ok_or_else(|| GrpoError::MissingRaters(f.scenario_id.clone()))?;
            let out = PredictionOutput::Waypoints(params.waypoint_means(&policy_context(f)));
            Ok::<_, GrpoError>(score_prediction(&out, rated, &cfg.reward)?.score)
        })
        .into_iter()
        .collect::<Result<Vec<f64>, _>>()?;
    let mut reward = 0.0;
    for s in &scores {
        reward += normalized_rfs_reward(*s)?;
    }
    let pairs: Vec<(&str, f64)> = frames
        .iter()
        .zip(&scores)
        .map(|(f, s)| (f.category.as_str(), *s))
        .collect();
    Ok(Some(EvalSummary {
        rfs: aggregate_rfs(&pairs)?.final_rfs,
        mean_reward: reward / scores.len() as f64,
    }))
}

/// Runs GRPO from `init`, which also becomes the frozen reference policy.
///
/// On a non-finite loss, gradient or parameter the run stops and the error
/// carries the last finite checkpoint.
pub fn train(
    cfg: &GrpoConfig,
    init: &PolicyParams,
    train_frames: &[ScenarioFrame],
    eval_frames: &[ScenarioFrame],
    exec: Execution,
) -> Result<TrainOutcome, GrpoError> {
    cfg.validate()?;
    init.validate()?;
    if cfg.steps > 0 && train_frames.is_empty() {
        return Err(GrpoError::NoFrames);
    }
    if let Some(f) = train_frames.iter().chain(eval_frames).find(|f| f.rated.is_none()) {
        return Err(GrpoError::MissingRaters(f.scenario_id.clone()));
    }

    let reference = init.clone();
    let mut params = init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.steps + 1);
    let batch = cfg.batch_frames.min(train_frames.len());

    let eval_row = |params: &PolicyParams, step: usize, lr: f64| -> Result<MetricsRow, GrpoError> {
        let e = evaluate_policy(params, eval_frames, cfg, exec)?;
        Ok(MetricsRow {
            step,
            lr,
            mean_reward: None,
            mean_kl: None,
            clip_fraction: None,
            eval_rfs: e.map(|e| e.rfs),
            eval_reward: e.map(|e| e.mean_reward),
        })
    };

    for step in 0..cfg.steps {
        let lr = cfg.lr_at(step);
        let mut row = if step % cfg.eval_every == 0 {
            eval_row(&params, step, lr)?
        } else {
            MetricsRow {
                step,
                lr,
                mean_reward: None,
                mean_kl: None,
                clip_fraction: None,
                eval_rfs: None,
                eval_reward: None,
            }
        };

        let picked = index::sample(&mut rng, train_frames.len(), batch);
        let frames: Vec<&ScenarioFrame> = picked.iter().map(|i| &train_frames[i]).collect();
        let seed = rng.next_u64();
        let diverged = |reason: String| GrpoError::Diverged {
            step,
            reason,
            last_good: Box::new(Checkpoint::new(params.clone(), cfg.seed, step)),
        };
        let groups = collect_groups(&params, &reference, &frames, cfg, seed, exec)?;
        let out = match surrogate_loss_and_grad(&params, &groups, cfg, exec) {
            Ok(out) => out,
            Err(GrpoError::NonFinite(reason)) => return Err(diverged(reason)),
            Err(e) => return Err(e),
        };
        let step_size = lr * cfg.grad_scale(&out.grad);
        let mut next = params.clone();
        for (p, g) in next.values.iter_mut().zip(&out.grad) {
            *p -= step_size * g;
        }
        if let Some(i) = next.values.iter().position(|v| !v.is_finite()) {
            return Err(diverged(format!("parameter {i} became non-finite")));
        }
        params = next;

        row.mean_reward = Some(out.stats.mean_reward);
        row.mean_kl = Some(out.stats.mean_kl);
        row.clip_fraction = Some(out.stats.clip_fraction);
        log.push(row);
    }
    log.push(eval_row(&params, cfg.steps, cfg.lr_at(cfg.steps))?);

    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(params, cfg.seed, cfg.steps),
        log,
    })
}

/// `step,lr,mean_reward,mean_kl,clip_fraction,eval_rfs,eval_reward`; empty cells for absent values.
pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "step",
        "lr",
        "mean_reward",
        "mean_kl",
        "clip_fraction",
        "eval_rfs",
        "eval_reward",
    ])
    .expect("in-memory write");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.lr.to_string(),
            cell(r.mean_reward),
            cell(r.mean_kl),
            cell(r.clip_fraction),
            cell(r.eval_rfs),
            cell(r.eval_reward),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}
