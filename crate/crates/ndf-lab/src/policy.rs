//! The data-filtration policy: a small sigmoid-output network, Bernoulli
//! keep/filter sampling, and the REINFORCE update with a moving-average
//! reward baseline.
//!
//! The network is `input -> tanh hidden -> sigmoid`, by default 25x12x1.
//! Weights start uniform in `(-0.01, 0.01)`, biases at zero except the
//! output bias, which starts at 2 so the fresh policy keeps most data
//! (sigma(2) ~ 0.88). One update is applied per episode: every step shares
//! the terminal reward, the baseline-corrected advantage scales the summed
//! log-probability gradient, and Adam ascends it.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::StateFeatureVector;
use crate::matrix::DenseMatrix;
use crate::nn::PROB_CLAMP;
use crate::optim::{adam_update, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::rng::{rng_from_seed, ChaCha8Rng};

pub const DEFAULT_HIDDEN_DIM: usize = 12;
pub const DEFAULT_POLICY_LR: f64 = 1e-3;
/// Output bias at init; keeps early filtering mild.
pub const INIT_OUTPUT_BIAS: f64 = 2.0;
const INIT_WEIGHT_RANGE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    /// Shape `(input_dim, hidden_dim)`.
    w1: DenseMatrix,
    b1: Vec<f64>,
    /// Hidden-to-output weights, length `hidden_dim`.
    w2: Vec<f64>,
    b2: f64,
    adam: AdamBuffers,
}

#[derive(Debug, Clone, PartialEq)]
struct AdamBuffers {
    learning_rate: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Keep/filter decisions for one arrived mini-batch.
#[derive(Debug, Clone)]
pub struct PolicyDecision {
    /// `true` = keep for training, `false` = filter out.
    pub keep_mask: Vec<bool>,
    /// Clamped keep probabilities, each strictly inside `(0,1)`.
    pub keep_probs: Vec<f64>,
    /// `sum_m log P(a_m | s_m)` over the batch.
    pub log_prob_sum: f64,
}

/// Exponential moving average of episode rewards, `b_0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBaseline {
    value: f64,
    episodes: u64,
}

impl RewardBaseline {
    pub fn new() -> Self {
        RewardBaseline {
            value: 0.0,
            episodes: 0,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// `b_l = 0.8 b_{l-1} + 0.2 r_l`; returns the new value.
    pub fn update(&mut self, reward: f64) -> f64 {
        self.value = 0.8 * self.value + 0.2 * reward;
        self.episodes += 1;
        self.value
    }
}

impl Default for RewardBaseline {
    fn default() -> Self {
        Self::new()
    }
}

/// The `(state features, sampled actions)` pairs of one episode, in step
/// order. This is all the REINFORCE update needs.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    steps: Vec<TrajectoryStep>,
}

#[derive(Debug, Clone)]
struct TrajectoryStep {
    features: Vec<StateFeatureVector>,
    actions: Vec<bool>,
}

impl TrajectoryLog {
    pub fn new() -> Self {
        TrajectoryLog { steps: Vec::new() }
    }

    pub fn push(&mut self, features: Vec<StateFeatureVector>, actions: Vec<bool>) {
        debug_assert_eq!(features.len(), actions.len());
        self.steps.push(TrajectoryStep { features, actions });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Builds a fresh policy: weights uniform in `(-0.01, 0.01)`, hidden biases
/// zero, output bias 2.
pub fn init_policy(input_dim: usize, hidden_dim: usize, seed: u64, learning_rate: f64) -> PolicyNet {
    let mut rng = rng_from_seed(seed);
    let w1_data: Vec<f64> = (0..input_dim * hidden_dim)
        .map(|_| rng.gen_range(-INIT_WEIGHT_RANGE..INIT_WEIGHT_RANGE))
        .collect();
    let w2: Vec<f64> = (0..hidden_dim)
        .map(|_| rng.gen_range(-INIT_WEIGHT_RANGE..INIT_WEIGHT_RANGE))
        .collect();
    let n_params = input_dim * hidden_dim + hidden_dim + hidden_dim + 1;
    PolicyNet {
        w1: DenseMatrix::from_vec(input_dim, hidden_dim, w1_data)
            .expect("init data matches dims"),
        b1: vec![0.0; hidden_dim],
        w2,
        b2: INIT_OUTPUT_BIAS,
        adam: AdamBuffers {
            learning_rate,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        },
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

impl PolicyNet {
    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn learning_rate(&self) -> f64 {
        self.adam.learning_rate
    }

    pub fn num_params(&self) -> usize {
        self.w1.data().len() + self.b1.len() + self.w2.len() + 1
    }

    /// Parameters in fixed order: `w1`, `b1`, `w2`, `b2`.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(self.w1.data());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
        out
    }

    pub fn assign_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} params, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        let nw = self.w1.data().len();
        self.w1.data_mut().copy_from_slice(&flat[off..off + nw]);
        off += nw;
        let nb = self.b1.len();
        self.b1.copy_from_slice(&flat[off..off + nb]);
        off += nb;
        let nh = self.w2.len();
        self.w2.copy_from_slice(&flat[off..off + nh]);
        off += nh;
        self.b2 = flat[off];
        Ok(())
    }

    fn hidden(&self, features: &[f64]) -> Vec<f64> {
        let hidden_dim = self.hidden_dim();
        let mut h = self.b1.clone();
        for (i, &x) in features.iter().enumerate() {
            let row = &self.w1.data()[i * hidden_dim..(i + 1) * hidden_dim];
            for (hj, &w) in h.iter_mut().zip(row) {
                *hj += x * w;
            }
        }
        for v in &mut h {
            *v = v.tanh();
        }
        h
    }

    /// Keep probability for one instance, clamped into `(0,1)`.
    pub fn keep_probability(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "feature length {} != policy input {}",
                features.len(),
                self.input_dim()
            )));
        }
        let h = self.hidden(features);
        let z = self.b2 + self.w2.iter().zip(&h).map(|(w, a)| w * a).sum::<f64>();
        Ok(clamp_prob(sigmoid(z)))
    }

    /// Samples an independent Bernoulli keep/filter bit for each instance.
    pub fn decide(
        &self,
        features: &[StateFeatureVector],
        rng: &mut ChaCha8Rng,
    ) -> Result<PolicyDecision> {
        let mut keep_mask = Vec::with_capacity(features.len());
        let mut keep_probs = Vec::with_capacity(features.len());
        let mut log_prob_sum = 0.0;
        for f in features {
            let p = self.keep_probability(f.as_slice())?;
            let keep = rng.gen::<f64>() < p;
            log_prob_sum += if keep { p.ln() } else { (1.0 - p).ln() };
            keep_mask.push(keep);
            keep_probs.push(p);
        }
        Ok(PolicyDecision {
            keep_mask,
            keep_probs,
            log_prob_sum,
        })
    }

    /// Deterministic variant: keep iff `p >= 0.5`.
    pub fn decide_threshold(&self, features: &[StateFeatureVector]) -> Result<PolicyDecision> {
        let mut keep_mask = Vec::with_capacity(features.len());
        let mut keep_probs = Vec::with_capacity(features.len());
        let mut log_prob_sum = 0.0;
        for f in features {
            let p = self.keep_probability(f.as_slice())?;
            let keep = p >= 0.5;
            log_prob_sum += if keep { p.ln() } else { (1.0 - p).ln() };
            keep_mask.push(keep);
            keep_probs.push(p);
        }
        Ok(PolicyDecision {
            keep_mask,
            keep_probs,
            log_prob_sum,
        })
    }

    /// `sum_m log P(a_m | s_m)` for fixed actions under the current
    /// parameters. Used by gradient checks.
    pub fn log_prob_of(&self, features: &[StateFeatureVector], actions: &[bool]) -> Result<f64> {
        if features.len() != actions.len() {
            return Err(Error::shape("features/actions length mismatch"));
        }
        let mut total = 0.0;
        for (f, &a) in features.iter().zip(actions) {
            let p = self.keep_probability(f.as_slice())?;
            total += if a { p.ln() } else { (1.0 - p).ln() };
        }
        Ok(total)
    }

    /// Gradient of `sum log P(a|s)` w.r.t. the flattened parameters.
    fn log_prob_grad(&self, features: &[StateFeatureVector], actions: &[bool]) -> Result<Vec<f64>> {
        let (input_dim, hidden_dim) = (self.input_dim(), self.hidden_dim());
        let mut grad = vec![0.0; self.num_params()];
        let (gw1, rest) = grad.split_at_mut(input_dim * hidden_dim);
        let (gb1, rest) = rest.split_at_mut(hidden_dim);
        let (gw2, gb2) = rest.split_at_mut(hidden_dim);

        for (f, &a) in features.iter().zip(actions) {
            let x = f.as_slice();
            if x.len() != input_dim {
                return Err(Error::shape("feature length mismatch"));
            }
            let h = self.hidden(x);
            let z = self.b2 + self.w2.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
            let p = sigmoid(z);
            // d log P(a|s) / dz = a - p for a sigmoid Bernoulli
            let dz = if a { 1.0 - p } else { -p };
            gb2[0] += dz;
            for j in 0..hidden_dim {
                gw2[j] += dz * h[j];
                let dh_pre = dz * self.w2[j] * (1.0 - h[j] * h[j]);
                gb1[j] += dh_pre;
                for (i, &xi) in x.iter().enumerate() {
                    gw1[i * hidden_dim + j] += xi * dh_pre;
                }
            }
        }
        Ok(grad)
    }

    /// One REINFORCE update from a finished episode.
    ///
    /// The advantage `r_l - b_{l-1}` scales the gradient of the episode's
    /// total log-probability, Adam ascends it, and the baseline then folds in
    /// `r_l`. A zero advantage leaves the parameters (and Adam moments)
    /// untouched. Episode steps are replayed against the end-of-episode
    /// parameters, which equal the acting parameters because the policy is
    /// only updated here, between episodes.
    pub fn reinforce_update(
        &mut self,
        trajectory: &TrajectoryLog,
        reward: f64,
        baseline: &mut RewardBaseline,
    ) -> Result<()> {
        if trajectory.is_empty() {
            return Err(Error::input("trajectory must be nonempty"));
        }
        let advantage = reward - baseline.value();
        if advantage != 0.0 {
            let mut grad = vec![0.0; self.num_params()];
            for step in &trajectory.steps {
                let g = self.log_prob_grad(&step.features, &step.actions)?;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            // Adam minimizes; feed the negated ascent direction.
            let descent: Vec<f64> = grad.iter().map(|g| -advantage * g).collect();
            let mut params = self.flatten_params();
            self.adam.step += 1;
            adam_update(
                &mut params,
                &mut self.adam.m,
                &mut self.adam.v,
                &descent,
                self.adam.step,
                self.adam.learning_rate,
                ADAM_BETA1,
                ADAM_BETA2,
                ADAM_EPS,
            );
            self.assign_params(&params)?;
        }
        baseline.update(reward);
        Ok(())
    }

    // -- checkpointing -------------------------------------------------------

    /// Serializes the policy (parameters, Adam state) and the reward baseline
    /// to a versioned text format. Values are written as raw `f64` bit
    /// patterns so the round trip is bit-exact.
    pub fn save_checkpoint(&self, baseline: &RewardBaseline, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_HEADER}");
        let _ = writeln!(out, "dims {} {}", self.input_dim(), self.hidden_dim());
        let _ = writeln!(
            out,
            "adam {} {}",
            hex_f64(self.adam.learning_rate),
            self.adam.step
        );
        let _ = writeln!(
            out,
            "baseline {} {}",
            hex_f64(baseline.value),
            baseline.episodes
        );
        for (name, values) in [
            ("params", self.flatten_params()),
            ("adam_m", self.adam.m.clone()),
            ("adam_v", self.adam.v.clone()),
        ] {
            let _ = writeln!(out, "{} {}", name, values.len());
            for v in values {
                let _ = writeln!(out, "{}", hex_f64(v));
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint written by [`save_checkpoint`](Self::save_checkpoint).
    pub fn load_checkpoint(path: &Path) -> Result<(PolicyNet, RewardBaseline)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: &str| Error::FileFormat {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_HEADER) {
            return Err(bad("missing or unsupported checkpoint header"));
        }

        let dims_line = lines.next().ok_or_else(|| bad("missing dims"))?;
        let dims: Vec<&str> = dims_line.split_whitespace().collect();
        let (input_dim, hidden_dim) = match dims.as_slice() {
            ["dims", i, h] => (
                i.parse::<usize>().map_err(|_| bad("bad input dim"))?,
                h.parse::<usize>().map_err(|_| bad("bad hidden dim"))?,
            ),
            _ => return Err(bad("malformed dims line")),
        };

        let adam_line = lines.next().ok_or_else(|| bad("missing adam line"))?;
        let adam: Vec<&str> = adam_line.split_whitespace().collect();
        let (lr, step) = match adam.as_slice() {
            ["adam", lr, step] => (
                parse_hex_f64(lr).ok_or_else(|| bad("bad adam lr"))?,
                step.parse::<u64>().map_err(|_| bad("bad adam step"))?,
            ),
            _ => return Err(bad("malformed adam line")),
        };

        let base_line = lines.next().ok_or_else(|| bad("missing baseline line"))?;
        let base: Vec<&str> = base_line.split_whitespace().collect();
        let baseline = match base.as_slice() {
            ["baseline", value, episodes] => RewardBaseline {
                value: parse_hex_f64(value).ok_or_else(|| bad("bad baseline value"))?,
                episodes: episodes
                    .parse::<u64>()
                    .map_err(|_| bad("bad baseline episode count"))?,
            },
            _ => return Err(bad("malformed baseline line")),
        };

        let mut read_block = |name: &str| -> Result<Vec<f64>> {
            let head = lines.next().ok_or_else(|| bad("missing block header"))?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            let count = match parts.as_slice() {
                [n, c] if *n == name => c.parse::<usize>().map_err(|_| bad("bad block count"))?,
                _ => return Err(bad(&format!("expected block {name}"))),
            };
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                let line = lines.next().ok_or_else(|| bad("truncated block"))?;
                values.push(parse_hex_f64(line).ok_or_else(|| bad("bad f64 bits"))?);
            }
            Ok(values)
        };
        let params = read_block("params")?;
        let m = read_block("adam_m")?;
        let v = read_block("adam_v")?;

        let n_params = input_dim * hidden_dim + 2 * hidden_dim + 1;
        if params.len() != n_params || m.len() != n_params || v.len() != n_params {
            return Err(bad("parameter count does not match dims"));
        }

        let mut policy = init_policy(input_dim, hidden_dim, 0, lr);
        policy.assign_params(&params)?;
        policy.adam = AdamBuffers {
            learning_rate: lr,
            step,
            m,
            v,
        };
        Ok((policy, baseline))
    }
}

const CHECKPOINT_HEADER: &str = "ndf-policy-checkpoint v1";

fn hex_f64(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn parse_hex_f64(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.len() != 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok().map(f64::from_bits)
}
