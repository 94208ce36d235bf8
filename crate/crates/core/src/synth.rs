//! Seeded synthetic scenarios with known structure.
//!
//! Every frame follows a constant-curvature path with constant longitudinal
//! acceleration (speed clamped at zero). The stored `future` is that path.
//! Raters judge against a *preferred* trajectory: the same path plus a lateral
//! shift that grows linearly to `preference_shift` metres at 5 s (zero by
//! default). Each rater trajectory perturbs the preferred one by a lateral
//! ramp and a speed scale; its score is
//! `clamp(10 − 6 · max_k |rated_k − preferred_k| / max_perturbation, 4, 10)`.
//! Rater 0 carries only `rater_noise` lateral noise, so it is always the
//! best-scored; raters 1 and 2 are strongly perturbed.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::grpo::policy::{policy_context, PolicyParams, PolicyShape};
use crate::schema::dataset::{RatedTrajectory, ScenarioFrame};
use crate::schema::mock::mock_annotate;
use crate::traj::{resample_4hz_to_1hz, Trajectory, Waypoint, FUTURE_LEN, PAST_LEN};

const HORIZON_S: f64 = 5.0;
const DT: f64 = 0.25;
const STRAIGHT_CURVATURE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryWeight {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_scenarios: usize,
    /// Category labels with mixture weights summing to 1.
    pub categories: Vec<CategoryWeight>,
    /// Current speed range, m/s.
    pub speed_range: [f64; 2],
    /// Path curvature range, 1/m (positive turns left).
    pub curvature_range: [f64; 2],
    /// Longitudinal acceleration range, m/s².
    pub accel_range: [f64; 2],
    /// Half-width of rater 0's lateral noise at 5 s, metres.
    pub rater_noise: f64,
    /// Lateral ramp range for raters 1 and 2 at 5 s, metres (sign random).
    pub rater_offset_range: [f64; 2],
    /// Speed-scale range for raters 1 and 2.
    pub rater_speed_scale: [f64; 2],
    /// Perturbation magnitude that maps to the score floor.
    pub max_perturbation: f64,
    /// Lateral offset of the preferred trajectory at 5 s, metres.
    pub preference_shift: f64,
    /// Attach a mock annotation to every frame.
    pub annotate: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let categories = ["construction", "cut_ins", "intersections", "pedestrians", "special_vehicles"]
            .into_iter()
            .map(|name| CategoryWeight {
                name: name.to_string(),
                weight: 0.2,
            })
            .collect();
        Self {
            n_scenarios: 479,
            categories,
            speed_range: [4.0, 12.0],
            curvature_range: [-0.03, 0.03],
            accel_range: [-1.0, 0.5],
            rater_noise: 0.0,
            rater_offset_range: [2.5, 5.0],
            rater_speed_scale: [0.75, 1.25],
            max_perturbation: 8.0,
            preference_shift: 0.0,
            annotate: false,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// The preference-alignment task used to exercise GRPO: raters prefer a
    /// path shifted 2 m to the left of the logged one by 5 s. The scenario
    /// family is narrower than the default so plain gradient descent at the
    /// default learning rate stays well conditioned.
    pub fn grpo_task(seed: u64) -> Self {
        Self {
            speed_range: [6.0, 10.0],
            curvature_range: [-0.01, 0.01],
            accel_range: [-0.5, 0.5],
            preference_shift: 2.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError(m.to_string()));
        if self.n_scenarios == 0 {
            return bad("n_scenarios must be at least 1");
        }
        if self.categories.is_empty() || self.categories.iter().any(|c| !(c.weight >= 0.0)) {
            return bad("categories need non-negative weights");
        }
        let total: f64 = self.categories.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad("category weights must sum to 1");
        }
        for (name, r) in [
            ("speed_range", self.speed_range),
            ("curvature_range", self.curvature_range),
            ("accel_range", self.accel_range),
            ("rater_offset_range", self.rater_offset_range),
            ("rater_speed_scale", self.rater_speed_scale),
        ] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(SynthError(format!("{name} must be a finite [lo, hi] pair")));
            }
        }
        if self.speed_range[0] < 0.0 || self.rater_speed_scale[0] < 0.0 {
            return bad("speeds and speed scales must be non-negative");
        }
        if !(self.rater_noise >= 0.0 && self.rater_noise.is_finite()) {
            return bad("rater_noise must be non-negative");
        }
        if !(self.max_perturbation > 0.0 && self.max_perturbation.is_finite()) {
            return bad("max_perturbation must be positive");
        }
        if !self.preference_shift.is_finite() {
            return bad("preference_shift must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid synthetic spec: {0}")]
pub struct SynthError(pub String);

/// Constant-curvature motion with constant acceleration, anchored at the
/// origin heading +x at t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub speed: f64,
    pub accel: f64,
    pub curvature: f64,
}

impl Kinematics {
    /// Signed arc length travelled since t = 0; speed never goes negative.
    pub fn arc_length(&self, t: f64) -> f64 {
        let (v, a) = (self.speed, self.accel);
        let s = |t: f64| v * t + 0.5 * a * t * t;
        if a == 0.0 {
            return s(t);
        }
        let t_stop = -v / a;
        let stopped = (t > 0.0 && a < 0.0 && t > t_stop) || (t < 0.0 && a > 0.0 && t < t_stop);
        if stopped {
            s(t_stop)
        } else {
            s(t)
        }
    }

    pub fn heading(&self, t: f64) -> f64 {
        self.curvature * self.arc_length(t)
    }

    pub fn position(&self, t: f64) -> Waypoint {
        let s = self.arc_length(t);
        let k = self.curvature;
        if k.abs() < 1e-9 {
            return Waypoint::new(s, 0.0);
        }
        let half = 0.5 * k * s;
        Waypoint::new((k * s).sin() / k, 2.0 * half.sin() * half.sin() / k)
    }

    /// Position at `t` displaced `lateral` metres along the left normal.
    pub fn offset_position(&self, t: f64, lateral: f64) -> Waypoint {
        let p = self.position(t);
        let (s, c) = self.heading(t).sin_cos();
        Waypoint::new(p.x - lateral * s, p.y + lateral * c)
    }

    pub fn scaled(&self, speed_scale: f64) -> Self {
        Self {
            speed: self.speed * speed_scale,
            accel: self.accel * speed_scale,
            curvature: self.curvature,
        }
    }

    /// Future samples at 0.25 … 5 s with a lateral ramp reaching `lateral_at_end` at 5 s.
    pub fn future(&self, lateral_at_end: f64) -> Vec<Waypoint> {
        (1..=FUTURE_LEN)
            .map(|k| {
                let t = k as f64 * DT;
                self.offset_position(t, lateral_at_end * t / HORIZON_S)
            })
            .collect()
    }

    /// Past samples at −4 … −0.25 s.
    pub fn past(&self) -> Vec<Waypoint> {
        (0..PAST_LEN)
            .map(|k| self.position(-((PAST_LEN - k) as f64) * DT))
            .collect()
    }
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn max_displacement(a: &[Waypoint], b: &[Waypoint]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.sub(*q).norm()).fold(0.0, f64::max)
}

fn rater_score(magnitude: f64, max_magnitude: f64) -> f64 {
    (10.0 - 6.0 * magnitude / max_magnitude).clamp(4.0, 10.0)
}

fn frame_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn generate_frame(spec: &SynthSpec, index: usize) -> ScenarioFrame {
    let mut rng = frame_rng(spec.seed, index);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut category = &spec.categories[spec.categories.len() - 1].name;
    for c in &spec.categories {
        acc += c.weight;
        if u < acc {
            category = &c.name;
            break;
        }
    }
    let kin = Kinematics {
        speed: uniform(&mut rng, spec.speed_range),
        curvature: uniform(&mut rng, spec.curvature_range),
        accel: uniform(&mut rng, spec.accel_range),
    };
    let intent = if kin.curvature > STRAIGHT_CURVATURE {
        "GO_LEFT"
    } else if kin.curvature < -STRAIGHT_CURVATURE {
        "GO_RIGHT"
    } else {
        "GO_STRAIGHT"
    };

    let future = kin.future(0.0);
    let preferred = kin.future(spec.preference_shift);

    let noise = if spec.rater_noise > 0.0 {
        rng.random_range(-spec.rater_noise..=spec.rater_noise)
    } else {
        0.0
    };
    let mut raters = vec![(kin, spec.preference_shift + noise)];
    for _ in 0..2 {
        let magnitude = uniform(&mut rng, spec.rater_offset_range);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let scale = uniform(&mut rng, spec.rater_speed_scale);
        raters.push((kin.scaled(scale), spec.preference_shift + sign * magnitude));
    }
    let rated: Vec<RatedTrajectory> = raters
        .into_iter()
        .map(|(k, lateral)| {
            let pts = k.future(lateral);
            let score = rater_score(max_displacement(&pts, &preferred), spec.max_perturbation);
            RatedTrajectory::new(Trajectory::future(pts).expect("finite kinematics"), score)
                .expect("score clamped to [4, 10]")
        })
        .collect();

    let mut frame = ScenarioFrame {
        scenario_id: format!("synth-{index:05}"),
        category: category.clone(),
        intent: intent.to_string(),
        past: Trajectory::past(kin.past()).expect("finite kinematics"),
        future: Some(Trajectory::future(future).expect("finite kinematics")),
        rated: Some(rated.try_into().expect("three raters")),
        annotation: None,
    };
    if spec.annotate {
        frame.annotation = Some(mock_annotate(&frame, spec.seed).expect("frame has a future"));
    }
    frame
}

/// Generates `spec.n_scenarios` frames; identical specs give identical frames.
pub fn generate(spec: &SynthSpec) -> Result<Vec<ScenarioFrame>, SynthError> {
    generate_with(spec, Execution::default())
}

pub fn generate_with(spec: &SynthSpec, exec: Execution) -> Result<Vec<ScenarioFrame>, SynthError> {
    spec.validate()?;
    let indices: Vec<usize> = (0..spec.n_scenarios).collect();
    Ok(exec.map(&indices, |_, &i| generate_frame(spec, i)))
}

/// Deterministic shuffled split into `(train, eval)`; each side keeps input order.
pub fn split(
    frames: &[ScenarioFrame],
    holdout_n: usize,
    seed: u64,
) -> Result<(Vec<ScenarioFrame>, Vec<ScenarioFrame>), SynthError> {
    if holdout_n >= frames.len() {
        return Err(SynthError(format!(
            "holdout of {holdout_n} leaves no training frames out of {}",
            frames.len()
        )));
    }
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_eval = vec![false; frames.len()];
    for &i in &order[..holdout_n] {
        is_eval[i] = true;
    }
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (f, e) in frames.iter().zip(is_eval) {
        if e {
            eval.push(f.clone());
        } else {
            train.push(f.clone());
        }
    }
    Ok((train, eval))
}

/// Supervised starting point for RL.
///
/// Each hidden unit projects the context on a random direction, standardised
/// over `frames` and shifted by a random offset in [−1, 1], so the tanh
/// features span the data instead of saturating or sitting near a constant.
/// The output layer is then fitted by ridge least squares (intercept
/// unpenalised) to each frame's logged 1 Hz future.
pub fn prefit_policy(
    frames: &[ScenarioFrame],
    shape: PolicyShape,
    sigma: f64,
    ridge: f64,
    seed: u64,
) -> Result<PolicyParams, SynthError> {
    let labelled: Vec<(Vec<f64>, [Waypoint; 5])> = frames
        .iter()
        .filter_map(|f| {
            let future = f.future.as_ref()?;
            Some((policy_context(f), resample_4hz_to_1hz(future).ok()?))
        })
        .collect();
    if labelled.is_empty() {
        return Err(SynthError("pre-fit needs frames with a future".into()));
    }
    if shape.input != labelled[0].0.len() {
        return Err(SynthError(format!(
            "policy input width {} does not match the {}-wide context",
            shape.input,
            labelled[0].0.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = PolicyParams::zeros(shape, sigma);
    let direction = Normal::new(0.0, 1.0).expect("valid std");
    let n = labelled.len() as f64;
    for h in 0..shape.hidden {
        let g: Vec<f64> = (0..shape.input).map(|_| direction.sample(&mut rng)).collect();
        let proj: Vec<f64> = labelled
            .iter()
            .map(|(x, _)| x.iter().zip(&g).map(|(a, b)| a * b).sum())
            .collect();
        let mean = proj.iter().sum::<f64>() / n;
        let sd = (proj.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n).sqrt();
        let scale = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        let offset: f64 = rng.random_range(-1.0..=1.0);
        let row = h * shape.input;
        for (w, gi) in params.values[row..row + shape.input].iter_mut().zip(&g) {
            *w = gi * scale;
        }
        params.values[shape.hidden * shape.input + h] = offset - mean * scale;
    }

    let rows: Vec<(Vec<f64>, [Waypoint; 5])> = labelled
        .into_iter()
        .map(|(x, y)| (params.forward(&x).hidden, y))
        .collect();
    let cols = shape.hidden + 1;
    let design = DMatrix::from_fn(rows.len(), cols, |r, c| {
        if c < shape.hidden {
            rows[r].0[c]
        } else {
            1.0
        }
    });
    let mut gram = design.transpose() * &design;
    // The intercept is not penalised.
    for i in 0..shape.hidden {
        gram[(i, i)] += ridge;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| SynthError("pre-fit normal equations are singular".into()))?;
    let hidden = shape.hidden;
    for o in 0..shape.output {
        let target = DVector::from_fn(rows.len(), |r, _| {
            let w = rows[r].1[o / 2];
            if o % 2 == 0 {
                w.x
            } else {
                w.y
            }
        });
        let coef = chol.solve(&(design.transpose() * target));
        params.w2_mut()[o * hidden..(o + 1) * hidden].copy_from_slice(&coef.as_slice()[..hidden]);
        params.b2_mut()[o] = coef[hidden];
    }
    Ok(params)
}
