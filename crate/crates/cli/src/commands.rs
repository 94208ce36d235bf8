use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use trajkit::grpo::checkpoint::Checkpoint;
use trajkit::grpo::gradcheck::{toy_instance, DEFAULT_TOLERANCE};
use trajkit::grpo::{metrics_to_csv, train, GrpoError, PolicyParams, PolicyShape};
use trajkit::rfs::{aggregate_rfs, score_frames, ScoringJob};
use trajkit::schema::dataset::jsonl_lines;
use trajkit::schema::{
    parse_trajectory_text, scenarios_to_jsonl, validate_annotation, validate_cot_stage, Prediction,
    PredictionOutput, ScenarioFrame,
};
use trajkit::synth::{generate_with, prefit_policy, split};
use trajkit::traj::upsample_spline_with;
use trajkit::Execution;

use crate::config::{InitKind, ReportFormat, RunConfig, ValidateKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How a command that ran to completion went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Validation found bad input (exit 1).
    Failures,
}

/// Command inputs after merging flags over the config file.
pub struct Run {
    pub cfg: RunConfig,
    pub scenarios: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: ReportFormat,
    pub kind: Option<ValidateKind>,
}

impl Run {
    fn exec(&self) -> Execution {
        if self.cfg.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    fn need<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        let p = path
            .as_deref()
            .ok_or_else(|| anyhow!("missing {flag} (flag or config key)"))?;
        crate::config::require_file(p, flag.trim_start_matches('-'))?;
        Ok(p)
    }

    /// Writes to `--out` when given, stdout otherwise.
    fn emit(&self, body: &str) -> Result<()> {
        match &self.out {
            Some(p) => write_file(p, body),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(body.as_bytes())?;
                out.flush()?;
                Ok(())
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn load_frames(path: &Path) -> Result<Vec<(usize, ScenarioFrame)>> {
    let body = read(path)?;
    jsonl_lines(&body)
        .map(|(line, text)| {
            ScenarioFrame::from_json(text)
                .map(|f| (line, f))
                .map_err(|e| anyhow!("{}: line {line}: {e}", path.display()))
        })
        .collect()
}

fn load_predictions(path: &Path) -> Result<Vec<(usize, Prediction)>> {
    let body = read(path)?;
    jsonl_lines(&body)
        .map(|(line, text)| {
            Prediction::from_json(text)
                .map(|p| (line, p))
                .map_err(|e| anyhow!("{}: line {line}: {e}", path.display()))
        })
        .collect()
}

pub fn evaluate(run: &Run) -> Result<Outcome> {
    let scen_path = Run::need(&run.scenarios, "--scenarios")?;
    let pred_path = Run::need(&run.predictions, "--predictions")?;
    let frames = load_frames(scen_path)?;
    let preds = load_predictions(pred_path)?;

    let mut by_id: HashMap<&str, (usize, &ScenarioFrame)> = HashMap::new();
    for (line, f) in &frames {
        if let Some((first, _)) = by_id.insert(f.scenario_id.as_str(), (*line, f)) {
            bail!(
                "{}: line {line}: duplicate scenario_id `{}` (first on line {first})",
                scen_path.display(),
                f.scenario_id
            );
        }
    }
    if preds.is_empty() {
        bail!("{}: no predictions", pred_path.display());
    }

    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut jobs = Vec::with_capacity(preds.len());
    let mut categories = Vec::with_capacity(preds.len());
    for (line, p) in &preds {
        let at = || format!("{}: line {line}", pred_path.display());
        let id = p.scenario_id.as_str();
        if let Some(first) = seen.insert(id, *line) {
            bail!("{}: duplicate prediction for `{id}` (first on line {first})", at());
        }
        let (fline, frame) = by_id
            .get(id)
            .ok_or_else(|| anyhow!("{}: scenario_id `{id}` not found in {}", at(), scen_path.display()))?;
        let rated = frame.rated_slice().ok_or_else(|| {
            anyhow!(
                "{}: scenario `{id}` ({} line {fline}) has no rated trajectories",
                at(),
                scen_path.display()
            )
        })?;
        jobs.push(ScoringJob {
            output: &p.output,
            rated,
        });
        categories.push(frame.category.as_str());
    }

    let scores = score_frames(&jobs, &run.cfg.rfs, run.exec())?;
    let pairs: Vec<(&str, f64)> = categories.iter().copied().zip(scores.iter().map(|s| s.score)).collect();
    let agg = aggregate_rfs(&pairs)?;
    run.emit(&match run.report {
        ReportFormat::Csv => agg.to_csv(),
        ReportFormat::Md => agg.to_markdown(),
    })?;

    let flagged: Vec<_> = preds
        .iter()
        .zip(&scores)
        .filter(|(_, s)| s.unparseable)
        .map(|((line, p), _)| (line, p.scenario_id.as_str()))
        .collect();
    eprintln!(
        "scored {} predictions in {} categories: final RFS {}; {} of {} flagged unparseable ({:.1}%)",
        preds.len(),
        agg.per_category.len(),
        agg.final_rfs,
        flagged.len(),
        preds.len(),
        100.0 * flagged.len() as f64 / preds.len() as f64
    );
    for (line, id) in flagged {
        eprintln!("  unparseable: {id} ({} line {line})", pred_path.display());
    }
    Ok(Outcome::Ok)
}

fn check_line(kind: ValidateKind, text: &str) -> Result<(), String> {
    match kind {
        ValidateKind::Annotation => validate_annotation(text).map(drop).map_err(|e| e.to_string()),
        ValidateKind::CotStage(s) => validate_cot_stage(text, s).map(drop).map_err(|e| e.to_string()),
        ValidateKind::Trajectory => parse_trajectory_text(text)
            .map(drop)
            .map_err(|e| format!("<text>: {e}")),
        ValidateKind::Scenarios => ScenarioFrame::from_json(text).map(drop).map_err(|e| e.to_string()),
    }
}

pub fn validate(run: &Run) -> Result<Outcome> {
    let kind = run
        .kind
        .ok_or_else(|| anyhow!("missing validate kind (--kind or validate.kind)"))?;
    let path = Run::need(&run.input, "--input")?;
    let body = read(path)?;
    let mut report = String::new();
    let (mut total, mut ok) = (0usize, 0usize);
    for (line, text) in jsonl_lines(&body) {
        total += 1;
        match check_line(kind, text) {
            Ok(()) => {
                ok += 1;
                report.push_str(&format!("line {line}: ok\n"));
            }
            Err(e) => report.push_str(&format!("line {line}: FAIL {e}\n")),
        }
    }
    report.push_str(&format!("{ok}/{total} valid ({kind})\n"));
    run.emit(&report)?;
    Ok(if ok == total { Outcome::Ok } else { Outcome::Failures })
}

#[derive(Serialize)]
struct UpsampledRecord<'a> {
    scenario_id: &'a str,
    waypoints_4hz: Vec<[f64; 2]>,
}

pub fn upsample(run: &Run) -> Result<Outcome> {
    let src = if run.input.is_some() { &run.input } else { &run.predictions };
    let path = Run::need(src, "--input")?;
    let mut out = String::new();
    for (line, p) in load_predictions(path)? {
        let waypoints = match &p.output {
            PredictionOutput::Waypoints(w) => *w,
            PredictionOutput::RawText(t) => parse_trajectory_text(t)
                .map_err(|e| anyhow!("{}: line {line}: raw_text: {e}", path.display()))?,
        };
        let dense = upsample_spline_with(&waypoints, run.cfg.rfs.spline)
            .map_err(|e| anyhow!("{}: line {line}: {e}", path.display()))?;
        let rec = UpsampledRecord {
            scenario_id: &p.scenario_id,
            waypoints_4hz: dense.to_xy(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    run.emit(&out)?;
    Ok(Outcome::Ok)
}

pub fn generate(run: &Run) -> Result<Outcome> {
    let frames = generate_with(&run.cfg.synth, run.exec())?;
    run.emit(&scenarios_to_jsonl(&frames))?;
    eprintln!("generated {} scenarios (seed {})", frames.len(), run.cfg.synth.seed);
    Ok(Outcome::Ok)
}

pub fn train_cmd(run: &Run) -> Result<Outcome> {
    let t = &run.cfg.train;
    let out_dir = run
        .out
        .as_deref()
        .ok_or_else(|| anyhow!("train needs --out <dir> for the checkpoint and metrics"))?;
    let mut grpo = t.grpo;
    grpo.reward = run.cfg.rfs;
    grpo.validate()?;
    if let Some(p) = &t.init_checkpoint {
        crate::config::require_file(p, "train.init_checkpoint")?;
    }

    let frames: Vec<ScenarioFrame> = match &run.scenarios {
        Some(_) => load_frames(Run::need(&run.scenarios, "--scenarios")?)?
            .into_iter()
            .map(|(_, f)| f)
            .collect(),
        None => generate_with(&run.cfg.synth, run.exec())?,
    };
    let seed = run.cfg.base_seed();
    let (train_frames, eval_frames) = split(&frames, t.holdout, seed)?;

    let shape = PolicyShape {
        hidden: t.hidden,
        ..PolicyShape::default()
    };
    let init = match (&t.init_checkpoint, t.init) {
        (Some(p), _) => Checkpoint::load(p)?.params,
        (None, InitKind::Prefit) => prefit_policy(&train_frames, shape, t.sigma, t.prefit_ridge, seed)?,
        (None, InitKind::Random) => PolicyParams::random(shape, t.sigma, &mut ChaCha8Rng::seed_from_u64(seed)),
    };

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let outcome = match train(&grpo, &init, &train_frames, &eval_frames, run.exec()) {
        Ok(o) => o,
        Err(GrpoError::Diverged { step, reason, last_good }) => {
            let p = out_dir.join("checkpoint.last_good.json");
            last_good.save(&p)?;
            bail!("training diverged at step {step}: {reason}; last finite parameters saved to {}", p.display());
        }
        Err(e) => return Err(e.into()),
    };
    write_file(&out_dir.join("metrics.csv"), &metrics_to_csv(&outcome.log))?;
    outcome.checkpoint.save(out_dir.join("checkpoint.json"))?;

    eprintln!(
        "trained {} steps on {} frames, evaluated on {}",
        grpo.steps,
        train_frames.len(),
        eval_frames.len()
    );
    for r in outcome.eval_rows() {
        eprintln!(
            "  step {:>5}: eval_reward {:.4} eval_rfs {:.4}",
            r.step,
            r.eval_reward.unwrap_or(f64::NAN),
            r.eval_rfs.unwrap_or(f64::NAN)
        );
    }
    Ok(Outcome::Ok)
}

pub fn gradcheck(run: &Run) -> Result<Outcome> {
    let base = run.cfg.seed.unwrap_or(0);
    let mut report = String::new();
    let mut worst = 0.0f64;
    for seed in base..base + run.cfg.gradcheck.trials as u64 {
        let r = toy_instance(seed).check()?;
        worst = worst.max(r.max_rel_error);
        let at = r.worst_index.map(|i| format!(", parameter {i}")).unwrap_or_default();
        report.push_str(&format!(
            "seed {seed}: max relative error {:e} ({} parameters{at})\n",
            r.max_rel_error, r.n_params
        ));
    }
    let pass = worst <= DEFAULT_TOLERANCE;
    report.push_str(&format!(
        "max relative error {worst:e} (tolerance {DEFAULT_TOLERANCE:e}): {}\n",
        if pass { "PASS" } else { "FAIL" }
    ));
    run.emit(&report)?;
    Ok(if pass { Outcome::Ok } else { Outcome::Failures })
}
