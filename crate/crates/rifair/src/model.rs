//! A small multilayer perceptron with reverse-mode gradients.
//!
//! The classifier exposes exactly the two capabilities the attack engine
//! needs — a deterministic forward pass and the gradient of the loss with
//! respect to the *input* — plus mini-batch SGD training. Hidden layers use
//! ReLU (subgradient 0 at the kink), the output layer is a softmax, and the
//! loss is cross-entropy with probability clipping. All math is `f64` and
//! all randomness flows through a seeded [`ChaCha8Rng`], so identical seeds
//! give bit-identical parameters.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{encode, Instance};
use crate::error::{Error, Result};
use crate::schema::FeatureSchema;

/// Probabilities are clipped to this floor before taking logs.
pub const PROB_CLIP: f64 = 1e-12;

/// MLP parameters. `weights[l]` is row-major with shape
/// `(layer_dims[l+1], layer_dims[l])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
    /// Hash of the schema whose encoding this model was trained on.
    pub schema_hash: String,
}

/// Softmax output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    /// Argmax class (lowest index on ties).
    pub label: usize,
    /// Top probability minus runner-up probability.
    pub margin: f64,
}

impl Prediction {
    /// Positive-class probability of a binary prediction.
    pub fn positive(&self) -> f64 {
        self.probs[1]
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dims: vec![64, 32],
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            l2: 1e-4,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        if self.l2 < 0.0 {
            return Err(Error::InvalidArgument("l2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Trained parameters plus the per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: MlpParams,
    pub epoch_loss: Vec<f64>,
}

/// Clipped cross-entropy of a probability vector against a class index.
pub fn cross_entropy(probs: &[f64], target: usize) -> f64 {
    -probs[target].max(PROB_CLIP).ln()
}

/// Decision rule for binary tasks: class 1 iff the positive-class
/// probability reaches the threshold (inclusive).
pub fn threshold_label(p_positive: f64, tau_dec: f64) -> usize {
    usize::from(p_positive >= tau_dec)
}

impl MlpParams {
    /// Seeded Xavier-uniform initialization: weights drawn from
    /// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(layer_dims: &[usize], seed: u64, schema_hash: &str) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "network needs at least input and output layers".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidArgument("layer dims must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let layer: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            weights.push(layer);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpParams {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            seed,
            schema_hash: schema_hash.to_string(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} positions, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Pre-activations and post-activations layer by layer. The final
    /// entry of `activations` holds the softmax probabilities.
    fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n_layers = self.weights.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut act = Vec::with_capacity(n_layers + 1);
        act.push(x.to_vec());
        for l in 0..n_layers {
            let n_in = self.layer_dims[l];
            let input = &act[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                *zo += row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
            }
            let a = if l + 1 == n_layers {
                softmax(&z)
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            pre.push(z);
            act.push(a);
        }
        (pre, act)
    }

    /// Deterministic forward pass producing softmax probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Prediction> {
        self.check_input(x)?;
        let (_, act) = self.forward_trace(x);
        let probs = act.last().unwrap().clone();
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
        let label = order[0];
        let margin = if probs.len() > 1 {
            probs[order[0]] - probs[order[1]]
        } else {
            probs[order[0]]
        };
        Ok(Prediction {
            probs,
            label,
            margin,
        })
    }

    /// Gradient of the clipped cross-entropy loss `l(f(x), target)` with
    /// respect to every dense input position.
    pub fn input_gradient(&self, x: &[f64], target: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if target >= self.output_dim() {
            return Err(Error::InvalidArgument(format!(
                "target class {target} out of range"
            )));
        }
        let (pre, act) = self.forward_trace(x);
        let probs = act.last().unwrap();
        // Softmax + cross-entropy collapses to probs - onehot(target).
        let mut delta: Vec<f64> = probs.clone();
        delta[target] -= 1.0;
        for l in (0..self.weights.len()).rev() {
            let n_in = self.layer_dims[l];
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if l > 0 {
                for (p, z) in prev.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Gradient of the softmax probability of `class` with respect to
    /// every dense input position (not the loss — the raw output).
    pub fn prob_gradient(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if class >= self.output_dim() {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range"
            )));
        }
        let (pre, act) = self.forward_trace(x);
        let probs = act.last().unwrap();
        // Seed with the softmax Jacobian row: dp_c/dz_j = p_c (1{c=j} - p_j).
        let mut delta: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(j, &p)| probs[class] * (f64::from(j == class) - p))
            .collect();
        for l in (0..self.weights.len()).rev() {
            let n_in = self.layer_dims[l];
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if l > 0 {
                for (p, z) in prev.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Smallest |pre-activation| over all hidden units for this input;
    /// small values mean the input sits near a ReLU kink where
    /// finite-difference checks are unreliable.
    pub fn kink_proximity(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let (pre, _) = self.forward_trace(x);
        let mut min = f64::INFINITY;
        for z in &pre[..pre.len().saturating_sub(1)] {
            for &v in z {
                min = min.min(v.abs());
            }
        }
        Ok(min)
    }

    /// Per-layer parameter gradients of the loss at one sample, plus the
    /// loss value itself.
    fn param_gradients(&self, x: &[f64], target: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, f64) {
        let (pre, act) = self.forward_trace(x);
        let probs = act.last().unwrap();
        let loss = cross_entropy(probs, target);
        let mut dw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut db: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut delta: Vec<f64> = probs.clone();
        delta[target] -= 1.0;
        for l in (0..self.weights.len()).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            for o in 0..n_out {
                db[l][o] = delta[o];
                let row = &mut dw[l][o * n_in..(o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(&act[l]) {
                    *g = delta[o] * a;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                for (p, z) in prev.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        (dw, db, loss)
    }

    /// Forward + threshold decision for binary tasks: returns 1 iff the
    /// positive-class probability is at least `tau_dec`.
    pub fn predict_label(&self, x: &[f64], tau_dec: f64) -> Result<usize> {
        if self.output_dim() != 2 {
            return Err(Error::InvalidArgument(
                "thresholded prediction requires a binary task".into(),
            ));
        }
        let pred = self.forward(x)?;
        Ok(threshold_label(pred.positive(), tau_dec))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let params: MlpParams = serde_json::from_str(&text)?;
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Data("checkpoint has fewer than 2 layers".into()));
        }
        if self.weights.len() != self.layer_dims.len() - 1
            || self.biases.len() != self.weights.len()
        {
            return Err(Error::Data("checkpoint layer counts inconsistent".into()));
        }
        for (l, w) in self.layer_dims.windows(2).enumerate() {
            if self.weights[l].len() != w[0] * w[1] || self.biases[l].len() != w[1] {
                return Err(Error::Data(format!(
                    "checkpoint layer {l} dimensions inconsistent"
                )));
            }
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::Numeric(
                "checkpoint contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Mini-batch SGD with L2 regularization on cross-entropy. Seeded
/// initialization and shuffling make training bit-reproducible; a
/// non-finite epoch loss aborts with a diagnostic.
pub fn train(
    train_set: &[Instance],
    schema: &FeatureSchema,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let encoded: Vec<(Vec<f64>, usize)> = train_set
        .iter()
        .map(|inst| encode(inst, schema).map(|e| (e.dense, inst.label)))
        .collect::<Result<_>>()?;

    let mut layer_dims = vec![schema.encoded_dim()];
    layer_dims.extend(&config.hidden_dims);
    layer_dims.push(schema.label_domain.len());

    let mut params = MlpParams::init(&layer_dims, config.seed, &schema.hash())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut epoch_loss = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc_w: Vec<Vec<f64>> =
                params.weights.iter().map(|w| vec![0.0; w.len()]).collect();
            let mut acc_b: Vec<Vec<f64>> =
                params.biases.iter().map(|b| vec![0.0; b.len()]).collect();
            for &i in batch {
                let (x, y) = &encoded[i];
                let (dw, db, loss) = params.param_gradients(x, *y);
                loss_sum += loss;
                for (a, g) in acc_w.iter_mut().zip(dw) {
                    for (av, gv) in a.iter_mut().zip(g) {
                        *av += gv;
                    }
                }
                for (a, g) in acc_b.iter_mut().zip(db) {
                    for (av, gv) in a.iter_mut().zip(g) {
                        *av += gv;
                    }
                }
            }
            let scale = config.learning_rate / batch.len() as f64;
            for (w, g) in params.weights.iter_mut().zip(&acc_w) {
                for (wv, gv) in w.iter_mut().zip(g) {
                    *wv -= scale * gv + config.learning_rate * config.l2 * *wv;
                }
            }
            for (b, g) in params.biases.iter_mut().zip(&acc_b) {
                for (bv, gv) in b.iter_mut().zip(g) {
                    *bv -= scale * gv;
                }
            }
        }
        let mean = loss_sum / encoded.len() as f64;
        // The probability clip keeps the loss finite even when activations
        // overflow, so divergence is detected on the parameters themselves.
        if !mean.is_finite() || params.validate().is_err() {
            return Err(Error::Numeric(format!(
                "training diverged at epoch {epoch} (mean loss {mean}); \
                 lower the learning rate"
            )));
        }
        epoch_loss.push(mean);
    }

    Ok(TrainOutput { params, epoch_loss })
}

/// Accuracy of argmax predictions over a set of instances.
pub fn accuracy(params: &MlpParams, instances: &[Instance], schema: &FeatureSchema) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty set".into()));
    }
    let mut correct = 0usize;
    for inst in instances {
        let enc = encode(inst, schema)?;
        let pred = params.forward(&enc.dense)?;
        if pred.label == inst.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / instances.len() as f64)
}
