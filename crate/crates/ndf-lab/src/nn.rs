//! Feed-forward classifier with manual backpropagation.
//!
//! The model is a stack of dense layers; hidden layers use `tanh`, the output
//! layer is a row-wise softmax trained with cross-entropy. Gradients are
//! computed by hand for this fixed graph; there is no general autodiff.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::rng_from_seed;

/// Probability floor used when taking `-ln p` so losses stay finite.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    /// Shape `(in_dim, out_dim)`; a batch row is multiplied from the left.
    pub weights: DenseMatrix,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<MlpLayer>,
}

/// Per-parameter gradients, shape-mirroring the model they came from.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub layers: Vec<MlpLayer>,
}

/// Losses and gradients for one training batch.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub per_instance: Vec<f64>,
    pub mean: f64,
    pub grads: GradientSet,
}

impl MlpModel {
    /// Builds a model with the given layer sizes, e.g. `[784, 500, 10]`.
    /// Weights are drawn uniformly from `(-init_scale, init_scale)`, biases
    /// start at zero.
    pub fn new(layer_sizes: &[usize], init_scale: f64, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::input("model needs at least input and output sizes"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::input("layer sizes must be positive"));
        }
        if init_scale < 0.0 || !init_scale.is_finite() {
            return Err(Error::input("init scale must be finite and >= 0"));
        }
        let mut rng = rng_from_seed(seed);
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| {
                    if init_scale == 0.0 {
                        0.0
                    } else {
                        rng.gen_range(-init_scale..init_scale)
                    }
                })
                .collect();
            layers.push(MlpLayer {
                weights: DenseMatrix::from_vec(fan_in, fan_out, data)?,
                biases: vec![0.0; fan_out],
            });
        }
        Ok(MlpModel { layers })
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [MlpLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().weights.cols()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.biases.len())
            .sum()
    }

    /// All parameters in a fixed order (layer by layer, weights then biases).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    /// Inverse of [`flatten_params`](Self::flatten_params).
    pub fn assign_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} params, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Forward pass over a batch (rows are instances). Returns the class
    /// probability matrix; each row sums to 1.
    pub fn forward(&self, batch_features: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_cached(batch_features)?.pop().unwrap())
    }

    /// Forward pass keeping every post-activation, for backprop. The returned
    /// list is `[a_1, ..., a_L]` where `a_L` is the softmax output.
    fn forward_cached(&self, batch_features: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        if batch_features.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input dim {} != model input {}",
                batch_features.cols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = batch_features;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = current.matmul(&layer.weights)?;
            z.add_row_vector(&layer.biases)?;
            if k == last {
                softmax_rows(&mut z);
            } else {
                for v in z.data_mut() {
                    *v = v.tanh();
                }
            }
            activations.push(z);
            current = activations.last().unwrap();
        }
        Ok(activations)
    }

    /// Cross-entropy losses and gradients of the *mean* loss over the batch.
    pub fn loss_and_grad(&self, features: &DenseMatrix, labels: &[usize]) -> Result<LossGrad> {
        if features.rows() == 0 {
            return Err(Error::input("batch must be nonempty"));
        }
        if labels.len() != features.rows() {
            return Err(Error::shape("labels length != batch rows"));
        }
        let classes = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::input(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }

        let activations = self.forward_cached(features)?;
        let probs = activations.last().unwrap();
        let m = features.rows();

        let per_instance: Vec<f64> = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -probs.get(i, y).max(PROB_CLAMP).ln())
            .collect();
        let mean = per_instance.iter().sum::<f64>() / m as f64;

        // dL/dz for softmax + cross-entropy on the mean loss: (p - onehot) / m
        let mut delta = probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            let row = delta.row_mut(i);
            for v in row.iter_mut() {
                *v /= m as f64;
            }
            row[y] -= 1.0 / m as f64;
        }

        let mut grads: Vec<MlpLayer> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input: &DenseMatrix = if k == 0 { features } else { &activations[k - 1] };
            let d_weights = input.matmul_tn(&delta)?;
            let d_biases = delta.column_sums();
            grads.push(MlpLayer {
                weights: d_weights,
                biases: d_biases,
            });
            if k > 0 {
                // delta for the layer below: (delta . W^T) * tanh'(a)
                let mut next = delta.matmul_nt(&self.layers[k].weights)?;
                let act = &activations[k - 1];
                for (v, &a) in next.data_mut().iter_mut().zip(act.data()) {
                    *v *= 1.0 - a * a;
                }
                delta = next;
            }
        }
        grads.reverse();

        let out = LossGrad {
            per_instance,
            mean,
            grads: GradientSet { layers: grads },
        };
        debug_assert!(out.mean.is_finite());
        Ok(out)
    }
}

fn softmax_rows(z: &mut DenseMatrix) {
    for r in 0..z.rows() {
        let row = z.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Per-instance cross-entropy `-ln p(y|x)` from a probability matrix,
/// clamped so the result stays finite.
pub fn cross_entropy_losses(probs: &DenseMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    if labels.len() != probs.rows() {
        return Err(Error::shape("labels length != probability rows"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= probs.cols()) {
        return Err(Error::input(format!(
            "label {bad} out of range for {} classes",
            probs.cols()
        )));
    }
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.get(i, y).max(PROB_CLAMP).ln())
        .collect())
}

/// Index of the row maximum; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of instances whose predicted class equals the label.
pub fn evaluate_accuracy(model: &MlpModel, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::input("cannot evaluate on an empty dataset"));
    }
    let chunk = 512;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut correct = 0usize;
    for block in indices.chunks(chunk) {
        let (features, labels) = dataset.batch_matrix(block);
        let probs = model.forward(&features)?;
        for (i, &y) in labels.iter().enumerate() {
            if argmax(probs.row(i)) == y {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
