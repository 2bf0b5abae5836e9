//! Minimal neural substrate for time-series forecasting.
//!
//! One network type covers all three predictors: a tapped-delay-line input
//! layer (a fixed window of each channel's most recent values), one hidden
//! layer of logistic sigmoid units with optional Elman-style recurrence, and
//! a linear readout. Training is full-batch gradient descent with classical
//! momentum and early stopping on a cross-validation split; recurrent nets
//! backpropagate through time over a truncated window. Analytic gradients
//! are verifiable against central finite differences via [`gradient_check`].
//!
//! Window layout is channel-major: `window[c * n_delays + d]` with `d = 0`
//! the newest tap. In closed-loop rollout the leading `n_feedback` channels
//! are refilled from the network's own outputs and the remaining channels
//! from a caller-supplied exogenous matrix, one column per step.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activation tags persisted with a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Linear,
}

/// Static dimensions of a [`TdlNetwork`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    /// Input channels in the delay window.
    pub n_inputs: usize,
    /// Taps per channel.
    pub n_delays: usize,
    /// Hidden units.
    pub n_hidden: usize,
    /// Output units.
    pub n_outputs: usize,
    /// Leading input channels that are autoregressive, i.e. refilled from
    /// the outputs during closed-loop prediction. Zero for nets whose inputs
    /// are all exogenous.
    pub n_feedback: usize,
    /// Hidden-state feedback (Elman recurrence).
    pub recurrent: bool,
}

impl NetShape {
    pub fn window_len(&self) -> usize {
        self.n_inputs * self.n_delays
    }

    pub fn n_exogenous(&self) -> usize {
        self.n_inputs - self.n_feedback
    }

    fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_delays == 0 || self.n_hidden == 0 || self.n_outputs == 0 {
            return Err(Error::DimensionMismatch {
                what: "network shape",
                expected: 1,
                actual: 0,
            });
        }
        if self.n_feedback > self.n_inputs || self.n_feedback > self.n_outputs {
            return Err(Error::DimensionMismatch {
                what: "feedback channels",
                expected: self.n_inputs.min(self.n_outputs),
                actual: self.n_feedback,
            });
        }
        Ok(())
    }
}

/// Tapped-delay-line network with sigmoid hidden units and linear readout.
/// Weight matrices are row-major; `w_rec` is identically zero (and unused)
/// for non-recurrent nets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdlNetwork {
    pub shape: NetShape,
    /// `[n_hidden x window_len]`
    pub w_in: Vec<f64>,
    /// `[n_hidden]`
    pub b_h: Vec<f64>,
    /// `[n_hidden x n_hidden]`
    pub w_rec: Vec<f64>,
    /// `[n_outputs x n_hidden]`
    pub w_out: Vec<f64>,
    /// `[n_outputs]`
    pub b_o: Vec<f64>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl TdlNetwork {
    pub fn zeros(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        Ok(TdlNetwork {
            shape,
            w_in: vec![0.0; shape.n_hidden * shape.window_len()],
            b_h: vec![0.0; shape.n_hidden],
            w_rec: vec![0.0; shape.n_hidden * shape.n_hidden],
            w_out: vec![0.0; shape.n_outputs * shape.n_hidden],
            b_o: vec![0.0; shape.n_outputs],
            hidden_activation: Activation::Sigmoid,
            output_activation: Activation::Linear,
        })
    }

    /// Seeded init: weights uniform in `[-0.5, 0.5] / sqrt(fan_in)`, biases
    /// zero. Small enough that sigmoids start well away from saturation.
    pub fn random(shape: NetShape, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_scale = 1.0 / (shape.window_len() as f64).sqrt();
        for w in &mut net.w_in {
            *w = rng.random_range(-0.5..=0.5) * in_scale;
        }
        let h_scale = 1.0 / (shape.n_hidden as f64).sqrt();
        if shape.recurrent {
            for w in &mut net.w_rec {
                *w = rng.random_range(-0.5..=0.5) * h_scale;
            }
        }
        for w in &mut net.w_out {
            *w = rng.random_range(-0.5..=0.5) * h_scale;
        }
        Ok(net)
    }

    pub fn num_params(&self) -> usize {
        self.w_in.len() + self.b_h.len() + self.w_rec.len() + self.w_out.len() + self.b_o.len()
    }

    /// Checks the persisted invariants (dimensions, finiteness, supported
    /// activations). Used after deserializing a model file.
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let checks = [
            ("w_in", self.w_in.len(), self.shape.n_hidden * self.shape.window_len()),
            ("b_h", self.b_h.len(), self.shape.n_hidden),
            ("w_rec", self.w_rec.len(), self.shape.n_hidden * self.shape.n_hidden),
            ("w_out", self.w_out.len(), self.shape.n_outputs * self.shape.n_hidden),
            ("b_o", self.b_o.len(), self.shape.n_outputs),
        ];
        for (_, actual, expected) in checks {
            if actual != expected {
                return Err(Error::DimensionMismatch {
                    what: "weight matrix",
                    expected,
                    actual,
                });
            }
        }
        let all = [&self.w_in, &self.b_h, &self.w_rec, &self.w_out, &self.b_o];
        if all.iter().any(|v| v.iter().any(|w| !w.is_finite())) {
            return Err(Error::BadModel("non-finite weight".into()));
        }
        if !self.shape.recurrent && self.w_rec.iter().any(|w| *w != 0.0) {
            return Err(Error::BadModel("non-recurrent net with nonzero w_rec".into()));
        }
        if self.hidden_activation != Activation::Sigmoid
            || self.output_activation != Activation::Linear
        {
            return Err(Error::BadModel("unsupported activation combination".into()));
        }
        Ok(())
    }

    /// One step: `hidden = sigmoid(W_in window + W_rec hidden_prev + b_h)`,
    /// `output = W_out hidden + b_o`. `hidden_prev` is ignored for
    /// non-recurrent nets.
    pub fn forward(&self, window: &[f64], hidden_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if window.len() != self.shape.window_len() {
            return Err(Error::DimensionMismatch {
                what: "input window",
                expected: self.shape.window_len(),
                actual: window.len(),
            });
        }
        if hidden_prev.len() != self.shape.n_hidden {
            return Err(Error::DimensionMismatch {
                what: "hidden state",
                expected: self.shape.n_hidden,
                actual: hidden_prev.len(),
            });
        }
        let mut hidden = vec![0.0; self.shape.n_hidden];
        let mut output = vec![0.0; self.shape.n_outputs];
        self.forward_into(window, hidden_prev, &mut hidden, &mut output);
        Ok((output, hidden))
    }

    /// Allocation-free core used by the training loop. Dimensions must
    /// already be right.
    fn forward_into(
        &self,
        window: &[f64],
        hidden_prev: &[f64],
        hidden: &mut [f64],
        output: &mut [f64],
    ) {
        let nh = self.shape.n_hidden;
        let wlen = self.shape.window_len();
        for j in 0..nh {
            let mut a = self.b_h[j];
            let row = &self.w_in[j * wlen..(j + 1) * wlen];
            for (w, x) in row.iter().zip(window) {
                a += w * x;
            }
            if self.shape.recurrent {
                let rrow = &self.w_rec[j * nh..(j + 1) * nh];
                for (w, h) in rrow.iter().zip(hidden_prev) {
                    a += w * h;
                }
            }
            hidden[j] = sigmoid(a);
        }
        for k in 0..self.shape.n_outputs {
            let mut o = self.b_o[k];
            let row = &self.w_out[k * nh..(k + 1) * nh];
            for (w, h) in row.iter().zip(hidden.iter()) {
                o += w * h;
            }
            output[k] = o;
        }
    }

    /// Multi-step rollout. Starting from `seed_window` (and `hidden0` for
    /// recurrent nets), repeatedly: shift this step's exogenous column into
    /// the window, run [`TdlNetwork::forward`], then shift the predicted
    /// outputs into the feedback channels for the next step. Returns one
    /// output vector per step.
    pub fn predict_closed_loop(
        &self,
        seed_window: &[f64],
        hidden0: &[f64],
        exogenous: Option<&[Vec<f64>]>,
        steps: usize,
    ) -> Result<Vec<Vec<f64>>> {
        if steps == 0 {
            return Err(Error::DegenerateInput("rollout needs at least one step"));
        }
        let n_exo = self.shape.n_exogenous();
        if n_exo > 0 {
            let ok = exogenous
                .map(|e| e.len() == n_exo && e.iter().all(|col| col.len() >= steps))
                .unwrap_or(false);
            if !ok {
                return Err(Error::MissingExogenous { steps });
            }
        }
        let mut window = seed_window.to_vec();
        let mut hidden = hidden0.to_vec();
        let mut outputs = Vec::with_capacity(steps);
        for s in 0..steps {
            if let Some(exo) = exogenous {
                for (j, col) in exo.iter().enumerate() {
                    shift_in(&mut window, self.shape.n_delays, self.shape.n_feedback + j, col[s]);
                }
            }
            let (out, new_hidden) = self.forward(&window, &hidden)?;
            hidden = new_hidden;
            for c in 0..self.shape.n_feedback {
                shift_in(&mut window, self.shape.n_delays, c, out[c]);
            }
            outputs.push(out);
        }
        Ok(outputs)
    }
}

/// Pushes `value` as the newest tap of `channel`, discarding the oldest.
fn shift_in(window: &mut [f64], n_delays: usize, channel: usize, value: f64) {
    let base = channel * n_delays;
    for d in (1..n_delays).rev() {
        window[base + d] = window[base + d - 1];
    }
    window[base] = value;
}

/// One ordered training sequence: per step an input window and a target.
/// For non-recurrent nets step order is irrelevant (no state crosses steps),
/// so the same representation serves both network kinds.
#[derive(Clone, Debug, Default)]
pub struct Sequence {
    pub windows: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Sequence {
    pub fn push(&mut self, window: Vec<f64>, target: Vec<f64>) {
        self.windows.push(window);
        self.targets.push(target);
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Batch training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Classical momentum coefficient in [0, 1).
    pub momentum: f64,
    pub max_epochs: usize,
    /// Epochs without cross-validation improvement before stopping.
    pub patience: usize,
    /// Root seed; consumed by callers for weight init and data splitting.
    pub seed: u64,
    /// Truncation length for backpropagation through time.
    pub bptt_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            max_epochs: 1200,
            patience: 40,
            seed: 0,
            bptt_window: 15,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean squared error over the training set at the epoch's start weights.
    pub train: f64,
    /// Mean squared error over the CV set after the epoch's update.
    pub cv: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights achieving the best CV loss.
    pub net: TdlNetwork,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub best_cv: f64,
}

struct Gradients {
    w_in: Vec<f64>,
    b_h: Vec<f64>,
    w_rec: Vec<f64>,
    w_out: Vec<f64>,
    b_o: Vec<f64>,
}

impl Gradients {
    fn zeros_like(net: &TdlNetwork) -> Self {
        Gradients {
            w_in: vec![0.0; net.w_in.len()],
            b_h: vec![0.0; net.b_h.len()],
            w_rec: vec![0.0; net.w_rec.len()],
            w_out: vec![0.0; net.w_out.len()],
            b_o: vec![0.0; net.b_o.len()],
        }
    }

    fn reset(&mut self) {
        for v in [&mut self.w_in, &mut self.b_h, &mut self.w_rec, &mut self.w_out, &mut self.b_o] {
            v.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

fn check_dataset(net: &TdlNetwork, data: &[Sequence], what: &'static str) -> Result<usize> {
    let mut steps = 0;
    for seq in data {
        for (w, t) in seq.windows.iter().zip(&seq.targets) {
            if w.len() != net.shape.window_len() {
                return Err(Error::DimensionMismatch {
                    what: "dataset window",
                    expected: net.shape.window_len(),
                    actual: w.len(),
                });
            }
            if t.len() != net.shape.n_outputs {
                return Err(Error::DimensionMismatch {
                    what: "dataset target",
                    expected: net.shape.n_outputs,
                    actual: t.len(),
                });
            }
            steps += 1;
        }
    }
    if steps == 0 {
        let _ = what;
        return Err(Error::EmptyDataset);
    }
    Ok(steps)
}

/// Mean squared error of `net` over `data` (hidden state carried across
/// each full sequence, starting from zero).
pub fn dataset_loss(net: &TdlNetwork, data: &[Sequence]) -> f64 {
    let nh = net.shape.n_hidden;
    let mut hidden = vec![0.0; nh];
    let mut next_hidden = vec![0.0; nh];
    let mut output = vec![0.0; net.shape.n_outputs];
    let mut sse = 0.0;
    let mut count = 0usize;
    for seq in data {
        hidden.iter_mut().for_each(|h| *h = 0.0);
        for (window, target) in seq.windows.iter().zip(&seq.targets) {
            net.forward_into(window, &hidden, &mut next_hidden, &mut output);
            std::mem::swap(&mut hidden, &mut next_hidden);
            for (o, y) in output.iter().zip(target) {
                sse += (o - y) * (o - y);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sse / count as f64
    }
}

/// Accumulates MSE gradients for one sequence via backpropagation through
/// time, truncated to `chunk_len` steps: hidden state flows across chunk
/// boundaries but gradients do not. Returns the sum of squared errors.
fn accumulate_sequence(
    net: &TdlNetwork,
    seq: &Sequence,
    chunk_len: usize,
    inv_n: f64,
    grads: &mut Gradients,
) -> f64 {
    let nh = net.shape.n_hidden;
    let no = net.shape.n_outputs;
    let wlen = net.shape.window_len();
    let recurrent = net.shape.recurrent;

    let mut sse = 0.0;
    let mut hidden = vec![0.0; nh];
    let mut delta_o = vec![0.0; no];
    let mut delta_a = vec![0.0; nh];
    let mut delta_a_next = vec![0.0; nh];

    let total = seq.len();
    let mut start = 0;
    while start < total {
        let end = (start + chunk_len).min(total);
        let entry_hidden = hidden.clone();

        // Forward through the chunk, keeping activations for the backward pass.
        let mut hiddens: Vec<Vec<f64>> = Vec::with_capacity(end - start);
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(end - start);
        for t in start..end {
            let mut h = vec![0.0; nh];
            let mut o = vec![0.0; no];
            let prev = hiddens.last().map(|v| v.as_slice()).unwrap_or(&entry_hidden);
            net.forward_into(&seq.windows[t], prev, &mut h, &mut o);
            for (ok, yk) in o.iter().zip(&seq.targets[t]) {
                sse += (ok - yk) * (ok - yk);
            }
            hiddens.push(h);
            outputs.push(o);
        }
        hidden.copy_from_slice(hiddens.last().unwrap_or(&entry_hidden));

        // Backward in time within the chunk.
        delta_a_next.iter_mut().for_each(|d| *d = 0.0);
        for rel in (0..end - start).rev() {
            let t = start + rel;
            let h = &hiddens[rel];
            let h_prev: &[f64] = if rel == 0 { &entry_hidden } else { &hiddens[rel - 1] };
            for k in 0..no {
                delta_o[k] = 2.0 * (outputs[rel][k] - seq.targets[t][k]) * inv_n;
            }
            for k in 0..no {
                let d = delta_o[k];
                let row = &mut grads.w_out[k * nh..(k + 1) * nh];
                for (g, hj) in row.iter_mut().zip(h) {
                    *g += d * hj;
                }
                grads.b_o[k] += d;
            }
            for j in 0..nh {
                let mut dh = 0.0;
                for k in 0..no {
                    dh += net.w_out[k * nh + j] * delta_o[k];
                }
                if recurrent {
                    for m in 0..nh {
                        dh += net.w_rec[m * nh + j] * delta_a_next[m];
                    }
                }
                delta_a[j] = dh * h[j] * (1.0 - h[j]);
            }
            let window = &seq.windows[t];
            for j in 0..nh {
                let da = delta_a[j];
                grads.b_h[j] += da;
                let row = &mut grads.w_in[j * wlen..(j + 1) * wlen];
                for (g, x) in row.iter_mut().zip(window) {
                    *g += da * x;
                }
                if recurrent {
                    let rrow = &mut grads.w_rec[j * nh..(j + 1) * nh];
                    for (g, hp) in rrow.iter_mut().zip(h_prev) {
                        *g += da * hp;
                    }
                }
            }
            std::mem::swap(&mut delta_a, &mut delta_a_next);
        }
        start = end;
    }
    sse
}

/// Full-batch gradient descent with momentum and CV early stopping. Returns
/// the weights with the best CV loss. Deterministic: fixed iteration order,
/// no stochastic elements.
pub fn train_batch(
    net: TdlNetwork,
    train: &[Sequence],
    cv: &[Sequence],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let train_steps = check_dataset(&net, train, "train")?;
    check_dataset(&net, cv, "cv")?;
    let inv_n = 1.0 / (train_steps * net.shape.n_outputs) as f64;
    let chunk = cfg.bptt_window.max(1);

    let mut net = net;
    let mut grads = Gradients::zeros_like(&net);
    let mut velocity = Gradients::zeros_like(&net);
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best_cv = f64::INFINITY;
    let mut best_net = net.clone();
    let mut best_epoch = 0;
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        grads.reset();
        let mut sse = 0.0;
        for seq in train {
            sse += accumulate_sequence(&net, seq, chunk, inv_n, &mut grads);
        }
        let train_loss = sse * inv_n;
        if !train_loss.is_finite() {
            return Err(Error::DivergenceDetected { epoch });
        }

        let lr = cfg.learning_rate;
        let mom = cfg.momentum;
        let pairs: [(&mut Vec<f64>, &Vec<f64>, &mut Vec<f64>); 5] = [
            (&mut net.w_in, &grads.w_in, &mut velocity.w_in),
            (&mut net.b_h, &grads.b_h, &mut velocity.b_h),
            (&mut net.w_rec, &grads.w_rec, &mut velocity.w_rec),
            (&mut net.w_out, &grads.w_out, &mut velocity.w_out),
            (&mut net.b_o, &grads.b_o, &mut velocity.b_o),
        ];
        for (w, g, v) in pairs {
            for i in 0..w.len() {
                v[i] = mom * v[i] - lr * g[i];
                w[i] += v[i];
            }
        }

        let cv_loss = dataset_loss(&net, cv);
        if !cv_loss.is_finite() {
            return Err(Error::DivergenceDetected { epoch });
        }
        history.push(EpochLoss {
            epoch,
            train: train_loss,
            cv: cv_loss,
        });

        if cv_loss < best_cv {
            best_cv = cv_loss;
            best_net = net.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        net: best_net,
        history,
        best_epoch,
        best_cv,
    })
}

fn param_mut(net: &mut TdlNetwork, array: usize, index: usize) -> &mut f64 {
    match array {
        0 => &mut net.w_in[index],
        1 => &mut net.b_h[index],
        2 => &mut net.w_rec[index],
        3 => &mut net.w_out[index],
        4 => &mut net.b_o[index],
        _ => unreachable!(),
    }
}

/// Compares the analytic MSE gradient against central finite differences,
/// weight by weight, over `batch`. Gradients here are untruncated (full
/// backpropagation through time), matching what finite differences measure.
/// Returns the maximum relative error
/// `|g_a - g_fd| / max(|g_a| + |g_fd|, 1e-8)`.
pub fn gradient_check(net: &TdlNetwork, batch: &[Sequence], epsilon: f64) -> Result<f64> {
    debug_assert!(epsilon > 0.0 && epsilon <= 1e-3);
    let steps = check_dataset(net, batch, "gradcheck")?;
    let inv_n = 1.0 / (steps * net.shape.n_outputs) as f64;

    let mut grads = Gradients::zeros_like(net);
    for seq in batch {
        accumulate_sequence(net, seq, usize::MAX, inv_n, &mut grads);
    }
    let analytic: [&Vec<f64>; 5] = [&grads.w_in, &grads.b_h, &grads.w_rec, &grads.w_out, &grads.b_o];

    let mut worst = 0.0_f64;
    let mut probe = net.clone();
    for (array, g_arr) in analytic.iter().enumerate() {
        for index in 0..g_arr.len() {
            let original = *param_mut(&mut probe, array, index);
            *param_mut(&mut probe, array, index) = original + epsilon;
            let plus = dataset_loss(&probe, batch);
            *param_mut(&mut probe, array, index) = original - epsilon;
            let minus = dataset_loss(&probe, batch);
            *param_mut(&mut probe, array, index) = original;
            let fd = (plus - minus) / (2.0 * epsilon);
            let ga = g_arr[index];
            let rel = (ga - fd).abs() / (ga.abs() + fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(n_inputs: usize, n_delays: usize, n_hidden: usize, n_outputs: usize) -> NetShape {
        NetShape {
            n_inputs,
            n_delays,
            n_hidden,
            n_outputs,
            n_feedback: n_outputs.min(n_inputs),
            recurrent: false,
        }
    }

    #[test]
    fn forward_zero_net() {
        let net = TdlNetwork::zeros(shape(2, 3, 4, 2)).unwrap();
        let (out, hidden) = net.forward(&[0.5; 6], &[0.0; 4]).unwrap();
        assert_eq!(hidden, vec![0.5; 4]);
        assert_eq!(out, vec![0.0; 2]);
    }

    #[test]
    fn forward_hand_computed() {
        // 1 input, 1 delay, 1 hidden, 1 output; W_in = 1, b_h = 0,
        // W_out = 2, b_o = 1; input 0 -> 2 * sigmoid(0) + 1 = 2.
        let mut net = TdlNetwork::zeros(shape(1, 1, 1, 1)).unwrap();
        net.w_in[0] = 1.0;
        net.w_out[0] = 2.0;
        net.b_o[0] = 1.0;
        let (out, _) = net.forward(&[0.0], &[0.0]).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn readout_is_linear() {
        let mut net = TdlNetwork::random(shape(2, 4, 5, 2), 11).unwrap();
        let window: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let (base, _) = net.forward(&window, &[0.0; 5]).unwrap();
        for w in &mut net.w_out {
            *w *= 3.0;
        }
        for b in &mut net.b_o {
            *b *= 3.0;
        }
        let (scaled, _) = net.forward(&window, &[0.0; 5]).unwrap();
        for (s, b) in scaled.iter().zip(&base) {
            assert!((s - 3.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_dimension_mismatch() {
        let net = TdlNetwork::zeros(shape(2, 3, 4, 1)).unwrap();
        assert!(matches!(
            net.forward(&[0.0; 5], &[0.0; 4]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            net.forward(&[0.0; 6], &[0.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn constant_sequence(value: f64, len: usize, window_len: usize) -> Sequence {
        let mut seq = Sequence::default();
        for _ in 0..len {
            seq.push(vec![value; window_len], vec![value]);
        }
        seq
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let net = TdlNetwork::random(shape(1, 3, 2, 1), 5).unwrap();
        let data = [constant_sequence(0.4, 10, 3)];
        let cfg = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 20,
            patience: 5,
            ..TrainConfig::default()
        };
        let out = train_batch(net.clone(), &data, &data, &cfg).unwrap();
        assert_eq!(out.net, net);
        let first = out.history[0].train;
        assert!(out.history.iter().all(|e| e.train == first));
    }

    #[test]
    fn single_sample_converges() {
        let net = TdlNetwork::random(shape(1, 3, 1, 1), 3).unwrap();
        let mut seq = Sequence::default();
        seq.push(vec![0.5, 0.2, -0.1], vec![0.3]);
        let data = [seq];
        let cfg = TrainConfig {
            learning_rate: 0.5,
            momentum: 0.9,
            max_epochs: 3000,
            patience: 3000,
            ..TrainConfig::default()
        };
        let out = train_batch(net, &data, &data, &cfg).unwrap();
        let final_loss = dataset_loss(&out.net, &data);
        assert!(final_loss <= 1e-6, "loss = {final_loss}");
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            max_epochs: 30,
            ..TrainConfig::default()
        };
        let data = [constant_sequence(0.3, 20, 4), constant_sequence(-0.2, 20, 4)];
        let run = || {
            let net = TdlNetwork::random(shape(2, 2, 3, 1), 17).unwrap();
            train_batch(net, &data, &data, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.net, b.net);
        assert_eq!(a.history.len(), b.history.len());
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.train.to_bits(), y.train.to_bits());
            assert_eq!(x.cv.to_bits(), y.cv.to_bits());
        }
    }

    #[test]
    fn loss_non_increasing_without_momentum() {
        let net = TdlNetwork::random(shape(1, 4, 3, 1), 23).unwrap();
        let data = [constant_sequence(0.2, 30, 4)];
        let cfg = TrainConfig {
            learning_rate: 0.01,
            momentum: 0.0,
            max_epochs: 10,
            patience: 100,
            ..TrainConfig::default()
        };
        let out = train_batch(net, &data, &data, &cfg).unwrap();
        for pair in out.history.windows(2) {
            assert!(pair[1].train <= pair[0].train + 1e-15);
        }
    }

    #[test]
    fn gradcheck_feedforward_small_net() {
        let net = TdlNetwork::random(shape(2, 3, 4, 2), 31).unwrap();
        let mut seq = Sequence::default();
        let mut v = 0.17_f64;
        for _ in 0..4 {
            let window: Vec<f64> = (0..6)
                .map(|i| {
                    v = (v * 3.9).sin();
                    (i as f64 * 0.1) + v * 0.5
                })
                .collect();
            seq.push(window, vec![v, -v]);
        }
        let err = gradient_check(&net, &[seq], 1e-5).unwrap();
        assert!(err < 1e-5, "max relative error = {err}");
    }

    #[test]
    fn gradcheck_zero_targets_zero_weights() {
        let net = TdlNetwork::zeros(shape(1, 2, 2, 1)).unwrap();
        let mut seq = Sequence::default();
        seq.push(vec![0.0, 0.0], vec![0.0]);
        let err = gradient_check(&net, &[seq], 1e-5).unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn gradcheck_recurrent_unrolled() {
        let shape = NetShape {
            n_inputs: 2,
            n_delays: 3,
            n_hidden: 4,
            n_outputs: 1,
            n_feedback: 0,
            recurrent: true,
        };
        let net = TdlNetwork::random(shape, 37).unwrap();
        let mut seq = Sequence::default();
        for t in 0..5 {
            let window: Vec<f64> = (0..6).map(|i| ((t * 7 + i) as f64 * 0.31).sin()).collect();
            seq.push(window, vec![(t as f64 * 0.21).cos() * 0.5]);
        }
        let err = gradient_check(&net, &[seq], 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error = {err}");
    }

    #[test]
    fn closed_loop_single_step_equals_forward() {
        let net = TdlNetwork::random(shape(1, 5, 4, 1), 41).unwrap();
        let window: Vec<f64> = (0..5).map(|i| (i as f64 * 0.4).sin()).collect();
        let rolled = net
            .predict_closed_loop(&window, &[0.0; 4], None, 1)
            .unwrap();
        let (direct, _) = net.forward(&window, &[0.0; 4]).unwrap();
        assert_eq!(rolled[0], direct);
    }

    #[test]
    fn closed_loop_trained_constant_stays_constant() {
        let net = TdlNetwork::random(shape(1, 3, 4, 1), 43).unwrap();
        let data = [constant_sequence(0.6, 40, 3)];
        let cfg = TrainConfig {
            learning_rate: 0.3,
            max_epochs: 2000,
            patience: 2000,
            ..TrainConfig::default()
        };
        let trained = train_batch(net, &data, &data, &cfg).unwrap().net;
        let rolled = trained
            .predict_closed_loop(&[0.6; 3], &[0.0; 4], None, 10)
            .unwrap();
        for out in rolled {
            assert!((out[0] - 0.6).abs() < 0.01, "drifted to {}", out[0]);
        }
    }

    #[test]
    fn closed_loop_requires_exogenous() {
        let shape = NetShape {
            n_inputs: 3,
            n_delays: 4,
            n_hidden: 4,
            n_outputs: 1,
            n_feedback: 1,
            recurrent: false,
        };
        let net = TdlNetwork::random(shape, 47).unwrap();
        let window = vec![0.0; 12];
        assert!(matches!(
            net.predict_closed_loop(&window, &[0.0; 4], None, 5),
            Err(Error::MissingExogenous { steps: 5 })
        ));
        // Too-short exogenous columns are also rejected.
        let exo = vec![vec![0.0; 3], vec![0.0; 3]];
        assert!(matches!(
            net.predict_closed_loop(&window, &[0.0; 4], Some(&exo), 5),
            Err(Error::MissingExogenous { .. })
        ));
        let exo = vec![vec![0.0; 5], vec![0.0; 5]];
        assert!(net.predict_closed_loop(&window, &[0.0; 4], Some(&exo), 5).is_ok());
    }

    #[test]
    fn shift_in_moves_newest_first() {
        let mut window = vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0];
        shift_in(&mut window, 3, 0, 9.0);
        assert_eq!(window, vec![9.0, 1.0, 2.0, 10.0, 20.0, 30.0]);
        shift_in(&mut window, 3, 1, -1.0);
        assert_eq!(window, vec![9.0, 1.0, 2.0, -1.0, 10.0, 20.0]);
    }

    proptest! {
        // Sigmoid saturates and the readout is affine in the bounded hidden
        // state, so any finite weights and inputs give finite outputs.
        #[test]
        fn forward_is_finite(
            scale in 0.0_f64..1e6,
            seed in 0_u64..1000,
            x in -1e6_f64..1e6,
        ) {
            let mut net = TdlNetwork::random(shape(1, 4, 3, 2), seed).unwrap();
            for w in &mut net.w_in { *w *= scale; }
            for w in &mut net.w_out { *w *= scale; }
            let (out, hidden) = net.forward(&[x; 4], &[0.0; 3]).unwrap();
            prop_assert!(out.iter().all(|v| v.is_finite()));
            prop_assert!(hidden.iter().all(|v| v.is_finite()));
        }
    }
}
