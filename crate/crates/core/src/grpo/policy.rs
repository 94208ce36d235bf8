//! Two-layer tanh perceptron mapping a frame's context to five waypoint means,
//! with a fixed isotropic Gaussian around them.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::schema::dataset::ScenarioFrame;
use crate::traj::{Waypoint, PAST_LEN, WAYPOINTS_1HZ};

use super::GrpoError;

/// Past coordinates are divided by this before entering the network.
pub const CONTEXT_SCALE_M: f64 = 20.0;
pub const CONTEXT_DIM: usize = 2 * PAST_LEN + 1;
pub const OUTPUT_DIM: usize = 2 * WAYPOINTS_1HZ;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        Self {
            input: CONTEXT_DIM,
            hidden: DEFAULT_HIDDEN,
            output: OUTPUT_DIM,
        }
    }
}

impl PolicyShape {
    pub fn num_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    // Offsets of W1, b1, W2, b2 inside the flat parameter vector.
    pub fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        [w1, b1, w2, b2]
    }
}

/// Scalar encoding of the high-level intent: left +1, right −1, anything else 0.
pub fn intent_scalar(intent: &str) -> f64 {
    let upper = intent.to_ascii_uppercase();
    if upper.contains("LEFT") {
        1.0
    } else if upper.contains("RIGHT") {
        -1.0
    } else {
        0.0
    }
}

/// Flattened, scaled past trajectory followed by the intent scalar.
pub fn policy_context(frame: &ScenarioFrame) -> Vec<f64> {
    let mut ctx = Vec::with_capacity(CONTEXT_DIM);
    for p in frame.past.points() {
        ctx.push(p.x / CONTEXT_SCALE_M);
        ctx.push(p.y / CONTEXT_SCALE_M);
    }
    ctx.push(intent_scalar(&frame.intent));
    ctx
}

/// Network weights in one flat vector: `W1 (hidden×input, row-major), b1, W2 (output×hidden), b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub shape: PolicyShape,
    pub values: Vec<f64>,
    /// Per-coordinate standard deviation before temperature, meters.
    pub sigma: f64,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hidden: Vec<f64>,
    pub means: Vec<f64>,
}

impl ForwardCache {
    pub fn waypoints(&self) -> [Waypoint; WAYPOINTS_1HZ] {
        let mut out = [Waypoint::ORIGIN; WAYPOINTS_1HZ];
        for (k, w) in out.iter_mut().enumerate() {
            *w = Waypoint::new(self.means[2 * k], self.means[2 * k + 1]);
        }
        out
    }
}

impl PolicyParams {
    pub fn zeros(shape: PolicyShape, sigma: f64) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.num_params()],
            sigma,
        }
    }

    /// W1 ~ N(0, 1/input), W2 ~ N(0, 1/hidden), biases zero.
    pub fn random<R: Rng + ?Sized>(shape: PolicyShape, sigma: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape, sigma);
        let [w1, b1, w2, b2] = shape.offsets();
        let n1 = Normal::new(0.0, (1.0 / shape.input.max(1) as f64).sqrt()).expect("valid std");
        let n2 = Normal::new(0.0, (1.0 / shape.hidden.max(1) as f64).sqrt()).expect("valid std");
        for v in &mut p.values[w1..b1] {
            *v = n1.sample(rng);
        }
        for v in &mut p.values[w2..b2] {
            *v = n2.sample(rng);
        }
        p
    }

    pub fn w1(&self) -> &[f64] {
        let [w1, b1, ..] = self.shape.offsets();
        &self.values[w1..b1]
    }
    pub fn b1(&self) -> &[f64] {
        let [_, b1, w2, _] = self.shape.offsets();
        &self.values[b1..w2]
    }
    pub fn w2(&self) -> &[f64] {
        let [_, _, w2, b2] = self.shape.offsets();
        &self.values[w2..b2]
    }
    pub fn b2(&self) -> &[f64] {
        let [.., b2] = self.shape.offsets();
        &self.values[b2..]
    }
    pub fn w2_mut(&mut self) -> &mut [f64] {
        let [_, _, w2, b2] = self.shape.offsets();
        &mut self.values[w2..b2]
    }
    pub fn b2_mut(&mut self) -> &mut [f64] {
        let [.., b2] = self.shape.offsets();
        &mut self.values[b2..]
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.values.len() != self.shape.num_params() {
            return Err(GrpoError::Shape(format!(
                "{} values for a network with {} parameters",
                self.values.len(),
                self.shape.num_params()
            )));
        }
        if self.shape.output != OUTPUT_DIM {
            return Err(GrpoError::Shape(format!("output must be {OUTPUT_DIM}")));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(GrpoError::Shape("sigma must be positive".into()));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(GrpoError::NonFinite(format!("parameter {i} is {}", self.values[i])));
        }
        Ok(())
    }

    /// Hidden activations and output means for one context.
    pub fn forward(&self, ctx: &[f64]) -> ForwardCache {
        let PolicyShape { input, hidden, output } = self.shape;
        debug_assert_eq!(ctx.len(), input);
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        let h: Vec<f64> = (0..hidden)
            .map(|j| {
                let row = &w1[j * input..(j + 1) * input];
                let z = row.iter().zip(ctx).fold(b1[j], |acc, (w, x)| acc + w * x);
                z.tanh()
            })
            .collect();
        let means = (0..output)
            .map(|o| {
                let row = &w2[o * hidden..(o + 1) * hidden];
                row.iter().zip(&h).fold(b2[o], |acc, (w, a)| acc + w * a)
            })
            .collect();
        ForwardCache { hidden: h, means }
    }

    pub fn waypoint_means(&self, ctx: &[f64]) -> [Waypoint; WAYPOINTS_1HZ] {
        self.forward(ctx).waypoints()
    }

    /// Accumulates `∂/∂θ` of a scalar whose gradient with respect to the output
    /// means is `d_means`, into `grad` (same layout as `values`).
    pub fn backward(&self, ctx: &[f64], cache: &ForwardCache, d_means: &[f64], grad: &mut [f64]) {
        let PolicyShape { input, hidden, output } = self.shape;
        let [w1o, b1o, w2o, b2o] = self.shape.offsets();
        let w2 = self.w2();
        let mut d_hidden = vec![0.0; hidden];
        for o in 0..output {
            let g = d_means[o];
            grad[b2o + o] += g;
            let row = o * hidden;
            for j in 0..hidden {
                grad[w2o + row + j] += g * cache.hidden[j];
                d_hidden[j] += g * w2[row + j];
            }
        }
        for j in 0..hidden {
            let hj = cache.hidden[j];
            let dz = d_hidden[j] * (1.0 - hj * hj);
            grad[b1o + j] += dz;
            let row = j * input;
            for (i, x) in ctx.iter().enumerate() {
                grad[w1o + row + i] += dz * x;
            }
        }
    }
}

/// Log-density of `sample` under independent N(mean, std²) coordinates.
pub fn gaussian_log_density(sample: &[f64], mean: &[f64], std: f64) -> f64 {
    let var = std * std;
    let quad: f64 = sample
        .iter()
        .zip(mean)
        .map(|(a, m)| (a - m) * (a - m))
        .sum();
    -0.5 * quad / var - sample.len() as f64 * (std.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// `log N(sample; mean_a, std²) − log N(sample; mean_b, std²)` without forming
/// either density, so it is exactly zero for equal means and keeps full
/// relative precision when the means are close.
pub fn gaussian_log_ratio(sample: &[f64], mean_a: &[f64], mean_b: &[f64], std: f64) -> f64 {
    let quad: f64 = sample
        .iter()
        .zip(mean_a.iter().zip(mean_b))
        .map(|(s, (a, b))| (b - a) * (2.0 * s - a - b))
        .sum();
    -0.5 * quad / (std * std)
}
