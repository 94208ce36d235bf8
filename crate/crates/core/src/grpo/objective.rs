//! Rollouts, group-relative advantages, the k3 KL estimate and the clipped
//! surrogate loss with its analytic gradient.
//!
//! For rollout `i` with sampling log-density `l_old`, current `l` and
//! reference `l_ref`:
//!
//! ```text
//! ρ_i  = exp(l − l_old)
//! L    = −(1/N) Σ min(ρ_i A_i, clip(ρ_i, 1−ε, 1+ε) A_i) + β (1/N) Σ k3_i
//! k3_i = exp(l_ref − l) − (l_ref − l) − 1
//! ```
//!
//! Samples, `l_old` and `l_ref` are fixed once drawn; the gradient flows
//! through `l` only. All three densities share one std, so the log-ratios
//! are evaluated from the stored means directly rather than by subtracting
//! log-densities; this keeps finite differences of the loss accurate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::policy::{gaussian_log_density, gaussian_log_ratio, policy_context, PolicyParams, OUTPUT_DIM};
use super::{GrpoConfig, GrpoError};
use crate::exec::Execution;
use crate::rfs::waypoint_reward;
use crate::schema::dataset::ScenarioFrame;
use crate::traj::{Waypoint, WAYPOINTS_1HZ};

/// Threshold below which a group's reward spread counts as zero.
pub const ADVANTAGE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Flattened `[x1, y1, ..., x5, y5]`.
    pub sample: [f64; OUTPUT_DIM],
    /// Means of the policy that drew the sample.
    pub sampling_mean: Vec<f64>,
    /// Log-density under the policy that drew the sample.
    pub logp_sampling: f64,
    /// Means of the frozen reference policy.
    pub ref_mean: Vec<f64>,
    /// Log-density under the frozen reference policy.
    pub logp_ref: f64,
    pub reward: f64,
    pub advantage: f64,
}

impl Rollout {
    pub fn waypoints(&self) -> [Waypoint; WAYPOINTS_1HZ] {
        let mut out = [Waypoint::ORIGIN; WAYPOINTS_1HZ];
        for (k, w) in out.iter_mut().enumerate() {
            *w = Waypoint::new(self.sample[2 * k], self.sample[2 * k + 1]);
        }
        out
    }
}

/// All rollouts drawn for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub context: Vec<f64>,
    pub rollouts: Vec<Rollout>,
}

/// Draws `group_size` samples around the policy mean with std `τσ`. Rewards,
/// advantages and reference means/log-densities are left at zero.
pub fn sample_rollouts<R: Rng + ?Sized>(
    params: &PolicyParams,
    context: &[f64],
    group_size: usize,
    temperature: f64,
    rng: &mut R,
) -> Vec<Rollout> {
    let mean = params.forward(context).means;
    let std = temperature * params.sigma;
    (0..group_size)
        .map(|_| {
            let mut sample = [0.0; OUTPUT_DIM];
            for (s, m) in sample.iter_mut().zip(&mean) {
                let z: f64 = StandardNormal.sample(rng);
                *s = m + std * z;
            }
            Rollout {
                logp_sampling: gaussian_log_density(&sample, &mean, std),
                sample,
                sampling_mean: mean.clone(),
                ref_mean: Vec::new(),
                logp_ref: 0.0,
                reward: 0.0,
                advantage: 0.0,
            }
        })
        .collect()
}

/// `(r − mean) / (std + ε)` with the population std; all zeros when std < ε.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std >= ADVANTAGE_EPS) {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / (std + ADVANTAGE_EPS)).collect()
}

/// k3 estimate of KL(π‖π_ref) from one sample; never negative.
pub fn kl_estimate(logp: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp;
    (d.exp() - d - 1.0).max(0.0)
}

/// Independent RNG stream for the `index`-th frame of a batch.
pub(crate) fn frame_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Samples and rewards one group per frame, using the frame's position in
/// `frames` to pick its RNG stream, so results do not depend on scheduling.
pub fn collect_groups(
    sampling: &PolicyParams,
    reference: &PolicyParams,
    frames: &[&ScenarioFrame],
    cfg: &GrpoConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<RolloutGroup>, GrpoError> {
    let std = cfg.temperature * sampling.sigma;
    exec.map(frames, |i, frame| {
        let rated = frame
            .rated_slice()
            .ok_or_else(|| GrpoError::MissingRaters(frame.scenario_id.clone()))?;
        let context = policy_context(frame);
        let mut rng = frame_rng(seed, i);
        let mut rollouts = sample_rollouts(sampling, &context, cfg.group_size, cfg.temperature, &mut rng);
        let ref_mean = reference.forward(&context).means;
        for r in &mut rollouts {
            r.logp_ref = gaussian_log_density(&r.sample, &ref_mean, std);
            r.ref_mean = ref_mean.clone();
            r.reward = waypoint_reward(&r.waypoints(), rated, &cfg.reward)?.total;
        }
        let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
        for (r, a) in rollouts.iter_mut().zip(group_advantages(&rewards)) {
            r.advantage = a;
        }
        Ok(RolloutGroup { context, rollouts })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub rollouts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub stats: LossStats,
}

struct GroupTerms {
    advantage: f64,
    /// Σ min((ρ − 1)A, (clip(ρ) − 1)A)
    surrogate: f64,
    kl: f64,
    reward: f64,
    clipped: usize,
    grad: Option<Vec<f64>>,
}

fn group_terms(
    params: &PolicyParams,
    group: &RolloutGroup,
    cfg: &GrpoConfig,
    n_total: f64,
    want_grad: bool,
) -> GroupTerms {
    let cache = params.forward(&group.context);
    let std = cfg.temperature * params.sigma;
    let var = std * std;
    let mut d_means = [0.0; OUTPUT_DIM];
    let mut t = GroupTerms {
        advantage: 0.0,
        surrogate: 0.0,
        kl: 0.0,
        reward: 0.0,
        clipped: 0,
        grad: None,
    };
    for r in &group.rollouts {
        // l − l_old and l_ref − l
        let log_ratio = gaussian_log_ratio(&r.sample, &cache.means, &r.sampling_mean, std);
        let ref_gap = gaussian_log_ratio(&r.sample, &r.ref_mean, &cache.means, std);
        // ρA is split as A + (ρ − 1)A. The first part does not depend on the
        // parameters, so perturbed evaluations differ only in the small second part.
        let excess_ratio = log_ratio.exp_m1();
        let ratio = 1.0 + excess_ratio;
        let a = r.advantage;
        let unclipped = excess_ratio * a;
        let (surr, d_surr) = if cfg.clip {
            let clipped = excess_ratio.clamp(-cfg.clip_eps, cfg.clip_eps) * a;
            if excess_ratio < -cfg.clip_eps || excess_ratio > cfg.clip_eps {
                t.clipped += 1;
            }
            if unclipped <= clipped {
                (unclipped, a * ratio)
            } else {
                // Only reachable when the ratio is outside the clip range.
                (clipped, 0.0)
            }
        } else {
            (unclipped, a * ratio)
        };
        let kl = (ref_gap.exp_m1() - ref_gap).max(0.0);
        t.advantage += a;
        t.surrogate += surr;
        t.kl += kl;
        t.reward += r.reward;
        if want_grad {
            let d_kl = 1.0 - ref_gap.exp();
            let d_logp = (-d_surr + cfg.kl_coeff * d_kl) / n_total;
            for (j, d) in d_means.iter_mut().enumerate() {
                *d += d_logp * (r.sample[j] - cache.means[j]) / var;
            }
        }
    }
    if want_grad {
        let mut grad = vec![0.0; params.values.len()];
        params.backward(&group.context, &cache, &d_means, &mut grad);
        t.grad = Some(grad);
    }
    t
}

fn reduce(
    params: &PolicyParams,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
    want_grad: bool,
    exec: Execution,
) -> LossAndGrad {
    let n: usize = groups.iter().map(|g| g.rollouts.len()).sum();
    let n_total = n.max(1) as f64;
    let terms = exec.map(groups, |_, g| group_terms(params, g, cfg, n_total, want_grad));
    let mut grad = vec![0.0; if want_grad { params.values.len() } else { 0 }];
    let (mut advantage, mut surrogate, mut kl, mut reward, mut clipped) = (0.0, 0.0, 0.0, 0.0, 0);
    for t in terms {
        advantage += t.advantage;
        surrogate += t.surrogate;
        kl += t.kl;
        reward += t.reward;
        clipped += t.clipped;
        if let Some(g) = t.grad {
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
    }
    LossAndGrad {
        loss: (cfg.kl_coeff * kl - surrogate) / n_total - advantage / n_total,
        grad,
        stats: LossStats {
            mean_reward: reward / n_total,
            mean_kl: kl / n_total,
            clip_fraction: clipped as f64 / n_total,
            rollouts: n,
        },
    }
}

/// Loss and analytic gradient over pre-drawn rollout groups.
pub fn surrogate_loss_and_grad(
    params: &PolicyParams,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
    exec: Execution,
) -> Result<LossAndGrad, GrpoError> {
    let out = reduce(params, groups, cfg, true, exec);
    if !out.loss.is_finite() {
        return Err(GrpoError::NonFinite(format!("loss is {}", out.loss)));
    }
    if let Some(i) = out.grad.iter().position(|g| !g.is_finite()) {
        return Err(GrpoError::NonFinite(format!("gradient entry {i} is {}", out.grad[i])));
    }
    Ok(out)
}

/// Loss only; used by the finite-difference check.
pub fn surrogate_loss(params: &PolicyParams, groups: &[RolloutGroup], cfg: &GrpoConfig) -> f64 {
    reduce(params, groups, cfg, false, Execution::Sequential).loss
}

/// Draws fresh on-policy rollouts from `params` and returns the loss and gradient.
pub fn grpo_loss_and_grad<R: Rng + ?Sized>(
    params: &PolicyParams,
    ref_params: &PolicyParams,
    frames: &[&ScenarioFrame],
    cfg: &GrpoConfig,
    rng: &mut R,
    exec: Execution,
) -> Result<LossAndGrad, GrpoError> {
    if frames.is_empty() {
        return Err(GrpoError::NoFrames);
    }
    let seed = rng.next_u64();
    let groups = collect_groups(params, ref_params, frames, cfg, seed, exec)?;
    surrogate_loss_and_grad(params, &groups, cfg, exec)
}
