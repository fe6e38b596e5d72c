//! Dense evidential classifier: ReLU MLP whose clamped output logits are
//! exponentiated into Dirichlet evidence, plus the evidential loss, its
//! analytic gradient, SGD and per-round local training.

use rand::Rng;

use crate::error::{Error, Result};
use crate::special::{lgamma, trigamma};

/// One dense layer, row-major weights `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Layer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// y = W x + b
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.out_dim {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = self.bias[r];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

/// Full parameter set of the evidential MLP. The logit clamp travels with the
/// parameters so that any holder of a model snapshot evaluates it identically.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub logit_clamp: f64,
}

impl MlpParams {
    /// All-zero parameters for the dimension chain `dims = [in, h1, .., K]`.
    pub fn zeros(dims: &[usize], logit_clamp: f64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        MlpParams {
            layers,
            logit_clamp,
        }
    }

    /// Seeded uniform init in +/- sqrt(6 / fan_in); biases start at zero so an
    /// untrained model sits at vacuity 0.5.
    pub fn init<R: Rng>(dims: &[usize], logit_clamp: f64, rng: &mut R) -> Self {
        let mut params = Self::zeros(dims, logit_clamp);
        for layer in &mut params.layers {
            let bound = (6.0 / layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim).unwrap_or(0)
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    pub fn zeros_like(&self) -> MlpParams {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.in_dim, l.out_dim))
            .collect();
        MlpParams {
            layers,
            logit_clamp: self.logit_clamp,
        }
    }

    /// Consecutive layer dims must chain and every entry must be finite.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        if !(self.logit_clamp > 0.0) {
            return Err(Error::Config(format!(
                "logit_clamp must be > 0, got {}",
                self.logit_clamp
            )));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Config(format!(
                    "layer {} out_dim {} does not chain into layer {} in_dim {}",
                    i,
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.in_dim * layer.out_dim
                || layer.bias.len() != layer.out_dim
            {
                return Err(Error::Config(format!("layer {i} has inconsistent buffers")));
            }
            if !layer.weights.iter().chain(&layer.bias).all(|v| v.is_finite()) {
                return Err(Error::Config(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Dirichlet view of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidentialOutput {
    pub alpha: Vec<f64>,
    pub strength: f64,
    pub vacuity: f64,
    pub entropy: f64,
    pub predicted: usize,
}

/// Decomposed evidential loss for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub mse_term: f64,
    pub kl_term: f64,
    pub lambda_t: f64,
    pub total: f64,
}

/// Local-training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub lambda_max: f64,
    pub logit_clamp: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            local_epochs: 5,
            lambda_max: 1.0,
            logit_clamp: 10.0,
        }
    }
}

/// Argmax with ties broken to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Forward pass: hidden ReLU layers, then clamped logits exponentiated into
/// evidence e_k = exp(z_k) and concentration alpha_k = e_k + 1.
pub fn forward(params: &MlpParams, features: &[f64]) -> Result<EvidentialOutput> {
    if features.len() != params.input_dim() {
        return Err(Error::Config(format!(
            "feature dim {} does not match model input dim {}",
            features.len(),
            params.input_dim()
        )));
    }
    if !features.iter().all(|v| v.is_finite()) {
        return Err(Error::Input("non-finite feature value".into()));
    }

    let mut cur = features.to_vec();
    let mut next = Vec::new();
    let last = params.layers.len() - 1;
    for (i, layer) in params.layers.iter().enumerate() {
        layer.affine(&cur, &mut next);
        if i < last {
            for v in &mut next {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }

    let c = params.logit_clamp;
    let alpha: Vec<f64> = cur.iter().map(|z| z.clamp(-c, c).exp() + 1.0).collect();
    Ok(output_from_alpha(alpha))
}

fn output_from_alpha(alpha: Vec<f64>) -> EvidentialOutput {
    let k = alpha.len() as f64;
    let strength: f64 = alpha.iter().sum();
    let vacuity = k / strength;
    let mut entropy = 0.0;
    for a in &alpha {
        let p = a / strength;
        entropy -= p * p.ln();
    }
    let predicted = argmax(&alpha);
    EvidentialOutput {
        alpha,
        strength,
        vacuity,
        entropy,
        predicted,
    }
}

fn check_alpha_positive(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::Domain("empty concentration vector".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Domain(format!(
            "concentration entries must be > 0, got {a}"
        )));
    }
    Ok(())
}

/// Epistemic uncertainty u = K / sum(alpha).
pub fn vacuity(alpha: &[f64]) -> Result<f64> {
    check_alpha_positive(alpha)?;
    let s: f64 = alpha.iter().sum();
    Ok(alpha.len() as f64 / s)
}

/// Aleatoric uncertainty: entropy of the expected class probabilities.
pub fn aleatoric_entropy(alpha: &[f64]) -> Result<f64> {
    check_alpha_positive(alpha)?;
    let s: f64 = alpha.iter().sum();
    let mut h = 0.0;
    for a in alpha {
        let p = a / s;
        h -= p * p.ln();
    }
    Ok(h)
}

/// Closed-form KL( Dir(alpha_tilde) || Dir(1,..,1) ). Exactly zero for the
/// all-ones vector; never negative.
pub fn kl_dirichlet_to_uniform(alpha_tilde: &[f64]) -> Result<f64> {
    if alpha_tilde.is_empty() {
        return Err(Error::Domain("empty concentration vector".into()));
    }
    if let Some(a) = alpha_tilde.iter().find(|a| !(**a >= 1.0)) {
        return Err(Error::Domain(format!(
            "KL to uniform requires alpha_tilde >= 1, got {a}"
        )));
    }
    if alpha_tilde.iter().all(|a| *a == 1.0) {
        return Ok(0.0);
    }
    let k = alpha_tilde.len() as f64;
    let s: f64 = alpha_tilde.iter().sum();
    let mut kl = lgamma(s)? - lgamma(k)?;
    let dg_s = crate::special::digamma(s)?;
    for &a in alpha_tilde {
        kl -= lgamma(a)?;
        kl += (a - 1.0) * (crate::special::digamma(a)? - dg_s);
    }
    Ok(kl.max(0.0))
}

/// Evidential loss of Sensoy-style MSE plus the annealed KL regularizer on
/// the misleading evidence alpha_tilde = y + (1 - y) .* alpha.
pub fn evidential_loss(alpha: &[f64], onehot: &[f64], lambda_t: f64) -> Result<LossBreakdown> {
    check_alpha_positive(alpha)?;
    if onehot.len() != alpha.len() {
        return Err(Error::Input(format!(
            "one-hot length {} does not match {} classes",
            onehot.len(),
            alpha.len()
        )));
    }
    let mut ones = 0usize;
    for y in onehot {
        if *y == 1.0 {
            ones += 1;
        } else if *y != 0.0 {
            return Err(Error::Input(format!("one-hot entries must be 0 or 1, got {y}")));
        }
    }
    if ones != 1 {
        return Err(Error::Input(format!(
            "one-hot vector must have exactly one 1, got {ones}"
        )));
    }

    let s: f64 = alpha.iter().sum();
    let mut mse = 0.0;
    for (a, y) in alpha.iter().zip(onehot) {
        let d = y - a / s;
        mse += d * d;
    }
    let alpha_tilde: Vec<f64> = alpha
        .iter()
        .zip(onehot)
        .map(|(a, y)| y + (1.0 - y) * a)
        .collect();
    let kl = kl_dirichlet_to_uniform(&alpha_tilde)?;
    Ok(LossBreakdown {
        mse_term: mse,
        kl_term: kl,
        lambda_t,
        total: mse + lambda_t * kl,
    })
}

/// KL coefficient schedule: linear ramp from zero to lambda_max over the
/// first half of the rounds, then flat.
pub fn anneal_lambda(round_t: usize, total_rounds: usize, lambda_max: f64) -> f64 {
    debug_assert!(round_t >= 1 && round_t <= total_rounds);
    let ramp = 2.0 * round_t as f64 / total_rounds as f64;
    lambda_max * ramp.min(1.0)
}

/// Cached activations for one sample.
struct ForwardTrace {
    /// inputs[l] is the input to layer l; inputs[0] is the feature vector.
    inputs: Vec<Vec<f64>>,
    raw_logits: Vec<f64>,
    alpha: Vec<f64>,
}

fn forward_trace(params: &MlpParams, features: &[f64]) -> ForwardTrace {
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut cur = features.to_vec();
    let mut next = Vec::new();
    for (i, layer) in params.layers.iter().enumerate() {
        layer.affine(&cur, &mut next);
        inputs.push(std::mem::take(&mut cur));
        if i < last {
            for v in &mut next {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        cur = std::mem::take(&mut next);
    }
    let raw_logits = cur;
    let c = params.logit_clamp;
    let alpha: Vec<f64> = raw_logits.iter().map(|z| z.clamp(-c, c).exp() + 1.0).collect();
    ForwardTrace {
        inputs,
        raw_logits,
        alpha,
    }
}

/// Mean-over-batch analytic gradient of the evidential loss with respect to
/// every weight and bias. Gradient is zero through clamped logits.
pub fn backward(
    params: &MlpParams,
    features: &[&[f64]],
    labels: &[usize],
    lambda_t: f64,
) -> Result<MlpParams> {
    if features.is_empty() {
        return Err(Error::Config("backward on empty batch".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Config(format!(
            "batch has {} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let k = params.num_classes();
    let in_dim = params.input_dim();
    let mut grads = params.zeros_like();

    for (x, &label) in features.iter().zip(labels) {
        if x.len() != in_dim {
            return Err(Error::Config(format!(
                "feature dim {} does not match model input dim {in_dim}",
                x.len()
            )));
        }
        if label >= k {
            return Err(Error::Config(format!("label {label} out of range for {k} classes")));
        }
        accumulate_sample(params, x, label, lambda_t, &mut grads)?;
    }

    let scale = 1.0 / features.len() as f64;
    for layer in &mut grads.layers {
        for w in &mut layer.weights {
            *w *= scale;
        }
        for b in &mut layer.bias {
            *b *= scale;
        }
    }
    Ok(grads)
}

fn accumulate_sample(
    params: &MlpParams,
    x: &[f64],
    label: usize,
    lambda_t: f64,
    grads: &mut MlpParams,
) -> Result<()> {
    let trace = forward_trace(params, x);
    let k = trace.alpha.len();
    let kf = k as f64;
    let s: f64 = trace.alpha.iter().sum();

    // dL/dalpha_j: MSE part plus (for non-true classes) the KL part.
    let mut cross = 0.0; // sum_k (p_k - y_k) p_k
    for (j, a) in trace.alpha.iter().enumerate() {
        let p = a / s;
        let y = if j == label { 1.0 } else { 0.0 };
        cross += (p - y) * p;
    }
    let s_tilde = s - trace.alpha[label] + 1.0;
    let kl_common = (s_tilde - kf) * trigamma(s_tilde)?;

    let c = params.logit_clamp;
    let mut delta = Vec::with_capacity(k);
    for (j, a) in trace.alpha.iter().enumerate() {
        let p = a / s;
        let y = if j == label { 1.0 } else { 0.0 };
        let mut dl_da = (2.0 / s) * ((p - y) - cross);
        if lambda_t != 0.0 && j != label {
            dl_da += lambda_t * ((a - 1.0) * trigamma(*a)? - kl_common);
        }
        let z = trace.raw_logits[j];
        let passes = z > -c && z < c;
        // d alpha / d z = exp(z) = alpha - 1, gated by the clamp
        delta.push(if passes { dl_da * (a - 1.0) } else { 0.0 });
    }

    // Backpropagate through the linear/ReLU stack.
    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let input = &trace.inputs[l];
        let glayer = &mut grads.layers[l];
        for r in 0..layer.out_dim {
            let d = delta[r];
            glayer.bias[r] += d;
            let row = &mut glayer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
            for (g, v) in row.iter_mut().zip(input) {
                *g += d * v;
            }
        }
        if l > 0 {
            let mut prev = vec![0.0; layer.in_dim];
            for r in 0..layer.out_dim {
                let d = delta[r];
                let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (pv, w) in prev.iter_mut().zip(row) {
                    *pv += d * w;
                }
            }
            // ReLU gate: the stored input to layer l is the post-ReLU value.
            for (pv, h) in prev.iter_mut().zip(input) {
                if *h <= 0.0 {
                    *pv = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok(())
}

/// theta <- theta - lr * g, elementwise.
pub fn sgd_step(params: &MlpParams, grads: &MlpParams, learning_rate: f64) -> Result<MlpParams> {
    if !params.same_shape(grads) {
        return Err(Error::Config("gradient shape does not match parameters".into()));
    }
    let mut out = params.clone();
    for (layer, glayer) in out.layers.iter_mut().zip(&grads.layers) {
        for (w, g) in layer.weights.iter_mut().zip(&glayer.weights) {
            *w -= learning_rate * g;
        }
        for (b, g) in layer.bias.iter_mut().zip(&glayer.bias) {
            *b -= learning_rate * g;
        }
    }
    Ok(out)
}

/// Result of one node-round of local training.
#[derive(Debug, Clone)]
pub struct LocalTrainOutcome {
    pub params: MlpParams,
    /// Set when the training split was empty and the parameters passed
    /// through unchanged.
    pub skipped_empty: bool,
}

/// E epochs of seeded mini-batch SGD over the node's training split. The KL
/// coefficient is fixed for the whole round from the annealing schedule.
pub fn local_train<R: Rng>(
    params: &MlpParams,
    features: &[&[f64]],
    labels: &[usize],
    config: &TrainConfig,
    round_t: usize,
    total_rounds: usize,
    rng: &mut R,
) -> Result<LocalTrainOutcome> {
    if features.is_empty() {
        return Ok(LocalTrainOutcome {
            params: params.clone(),
            skipped_empty: true,
        });
    }
    if features.len() != labels.len() {
        return Err(Error::Config(format!(
            "training split has {} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let lambda_t = anneal_lambda(round_t, total_rounds, config.lambda_max);
    let mut current = params.clone();
    let mut order: Vec<usize> = (0..features.len()).collect();
    for _ in 0..config.local_epochs {
        shuffle(&mut order, rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch_features: Vec<&[f64]> = chunk.iter().map(|&i| features[i]).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let grads = backward(&current, &batch_features, &batch_labels, lambda_t)?;
            current = sgd_step(&current, &grads, config.learning_rate)?;
        }
    }
    Ok(LocalTrainOutcome {
        params: current,
        skipped_empty: false,
    })
}

/// Fisher-Yates with the caller's stream; kept local so shuffles are
/// reproducible bit-for-bit across platforms.
pub(crate) fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Helper to build a one-hot target vector.
pub fn one_hot(label: usize, num_classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; num_classes];
    v[label] = 1.0;
    v
}
