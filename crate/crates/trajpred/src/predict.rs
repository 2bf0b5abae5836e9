//! The two-stage trajectory predictor and its kinematic baseline.
//!
//! Stage one forecasts each parameter channel (steering angle, yaw rate,
//! heading, speed, longitudinal acceleration) a horizon ahead with one NAR
//! net per channel, rolling closed-loop on the preprocessed (smoothed,
//! differenced, normalized) series. Stage two turns parameter forecasts into
//! positions: a NARX net rolls the differenced longitudinal position with
//! {yaw rate, heading, speed, accel} as exogenous inputs, and a recurrent
//! net rolls the differenced lateral position from {steering angle, yaw
//! rate, heading}. Predicted differences are denormalized and anchored at
//! the last observed position.
//!
//! The baseline is a constant-input forward-Euler rollout of the bicycle
//! model: `x' = v cos(theta)`, `y' = v sin(theta)`,
//! `theta' = (v / L) tan(phi)` with `v` and `phi` held at their last
//! observed values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::EnuTrack;
use crate::error::{Error, Result};
use crate::neural::{
    train_batch, EpochLoss, NetShape, Sequence, TdlNetwork, TrainConfig,
};
use crate::preprocess::{reconstruct, Channel, ChannelSpec, Normalizer};
use crate::seed;

/// Delay taps per channel.
pub const N_DELAYS: usize = 15;
/// Hidden units per net.
pub const N_HIDDEN: usize = 20;
/// Minimum history length (raw samples) for one prediction: enough for 15
/// differenced taps.
pub const MIN_HISTORY: usize = N_DELAYS + 1;

/// Channels forecast by stage one.
pub const NAR_CHANNELS: [Channel; 5] = [
    Channel::SteeringAngle,
    Channel::YawRate,
    Channel::Heading,
    Channel::Speed,
    Channel::AccelLon,
];

/// Exogenous inputs of the longitudinal NARX net.
pub const NARX_EXOGENOUS: [Channel; 4] = [
    Channel::YawRate,
    Channel::Heading,
    Channel::Speed,
    Channel::AccelLon,
];

/// Inputs of the lateral recurrent net.
pub const RNN_INPUTS: [Channel; 3] = [Channel::SteeringAngle, Channel::YawRate, Channel::Heading];

/// Prediction horizon: `steps` of `dt` seconds (default 10 x 0.1 s = 1 s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionHorizon {
    pub steps: usize,
    pub dt: f64,
}

impl Default for PredictionHorizon {
    fn default() -> Self {
        PredictionHorizon { steps: 10, dt: 0.1 }
    }
}

/// State of the bicycle model at rollout start.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinematicsState {
    pub x: f64,
    pub y: f64,
    /// Angle between instantaneous heading and road direction, rad.
    pub theta: f64,
    /// Speed, m/s.
    pub v: f64,
    /// Steering angle, rad.
    pub phi: f64,
    /// Vehicle length, m.
    pub length: f64,
}

/// Baseline configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub vehicle_length: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            vehicle_length: 5.0,
        }
    }
}

/// Forward-Euler rollout of the bicycle model with constant `v` and `phi`.
/// Derivatives are evaluated at each step's start. Returns one position per
/// step.
pub fn kinematics_predict(
    state: &KinematicsState,
    horizon: &PredictionHorizon,
) -> Result<Vec<(f64, f64)>> {
    let finite = state.x.is_finite()
        && state.y.is_finite()
        && state.theta.is_finite()
        && state.v.is_finite()
        && state.phi.is_finite()
        && state.length > 0.0;
    if !finite {
        return Err(Error::InvalidState("non-finite kinematic state".into()));
    }
    if state.phi.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::InvalidState(format!(
            "steering angle {} rad has no finite tangent",
            state.phi
        )));
    }
    let theta_rate = state.v / state.length * state.phi.tan();
    let (mut x, mut y, mut theta) = (state.x, state.y, state.theta);
    let mut out = Vec::with_capacity(horizon.steps);
    for _ in 0..horizon.steps {
        x += horizon.dt * state.v * theta.cos();
        y += horizon.dt * state.v * theta.sin();
        theta += horizon.dt * theta_rate;
        out.push((x, y));
    }
    Ok(out)
}

/// Baseline state read off the last sample of a history track.
pub fn baseline_state(history: &EnuTrack, cfg: &BaselineConfig) -> Result<KinematicsState> {
    let m = history.len();
    if m == 0 {
        return Err(Error::InsufficientHistory { have: 0, need: 1 });
    }
    Ok(KinematicsState {
        x: history.x[m - 1],
        y: history.y[m - 1],
        theta: history.heading_rad[m - 1],
        v: history.speed[m - 1],
        phi: history.steering_rad[m - 1],
        length: cfg.vehicle_length,
    })
}

/// Deterministic 70/15/15 corpus split (floored train and CV counts, the
/// remainder to test).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<usize>,
    pub cv: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_corpus(n: usize, split_seed: u64) -> Result<CorpusSplit> {
    const MIN: usize = 10;
    if n < MIN {
        return Err(Error::CorpusTooSmall { n, min: MIN });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    // Integer arithmetic keeps floor(0.70 n) exact (0.70 * 90.0 rounds just
    // below 63 in binary).
    let n_train = n * 70 / 100;
    let n_cv = n * 15 / 100;
    Ok(CorpusSplit {
        train: idx[..n_train].to_vec(),
        cv: idx[n_train..n_train + n_cv].to_vec(),
        test: idx[n_train + n_cv..].to_vec(),
    })
}

/// Trained predictor stack: five NAR nets, the NARX longitudinal net, the
/// recurrent lateral net, and the fitted channel specs they rely on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorBundle {
    pub horizon: PredictionHorizon,
    /// One spec per [`Channel::ALL`] entry.
    pub specs: Vec<ChannelSpec>,
    /// Stage-one nets in [`NAR_CHANNELS`] order.
    pub nar: Vec<(Channel, TdlNetwork)>,
    pub narx: TdlNetwork,
    pub rnn: TdlNetwork,
}

impl PredictorBundle {
    pub fn spec(&self, c: Channel) -> &ChannelSpec {
        self.specs
            .iter()
            .find(|s| s.channel == c)
            .expect("bundle has a spec per channel")
    }

    fn nar_net(&self, c: Channel) -> &TdlNetwork {
        &self
            .nar
            .iter()
            .find(|(ch, _)| *ch == c)
            .expect("bundle has a NAR net per forecast channel")
            .1
    }

    pub fn validate(&self) -> Result<()> {
        for c in Channel::ALL {
            if !self.specs.iter().any(|s| s.channel == c) {
                return Err(Error::BadModel(format!("missing channel spec for {c}")));
            }
        }
        for c in NAR_CHANNELS {
            if !self.nar.iter().any(|(ch, _)| *ch == c) {
                return Err(Error::BadModel(format!("missing NAR net for {c}")));
            }
        }
        for (_, net) in &self.nar {
            net.validate()?;
        }
        self.narx.validate()?;
        self.rnn.validate()?;
        if self.horizon.steps == 0 || self.horizon.dt <= 0.0 {
            return Err(Error::BadModel("degenerate horizon".into()));
        }
        Ok(())
    }

    /// Stage one alone: closed-loop parameter forecasts in normalized
    /// difference space, one sequence of `horizon.steps` values per channel.
    pub fn predict_parameters(&self, history: &EnuTrack) -> Result<ParameterForecast> {
        let m = history.len();
        if m < MIN_HISTORY {
            return Err(Error::InsufficientHistory {
                have: m,
                need: MIN_HISTORY,
            });
        }
        let zeros = vec![0.0; N_HIDDEN];
        let mut channels = Vec::with_capacity(NAR_CHANNELS.len());
        for c in NAR_CHANNELS {
            let diffs = self.spec(c).apply(history.channel(c))?;
            let window = seed_window(&[&diffs]);
            let rolled =
                self.nar_net(c)
                    .predict_closed_loop(&window, &zeros, None, self.horizon.steps)?;
            channels.push((c, rolled.into_iter().map(|o| o[0]).collect()));
        }
        Ok(ParameterForecast {
            steps: self.horizon.steps,
            channels,
        })
    }

    /// Stage two driven by an existing stage-one forecast. Composing
    /// [`PredictorBundle::predict_parameters`] with this function is exactly
    /// [`PredictorBundle::predict_trajectory`].
    pub fn predict_trajectory_from(
        &self,
        history: &EnuTrack,
        params: &ParameterForecast,
    ) -> Result<Vec<(f64, f64)>> {
        let m = history.len();
        if m < MIN_HISTORY {
            return Err(Error::InsufficientHistory {
                have: m,
                need: MIN_HISTORY,
            });
        }
        let steps = self.horizon.steps;
        let zeros = vec![0.0; N_HIDDEN];

        // Longitudinal: NARX over [x, exogenous...] differenced channels.
        let x_diffs = self.spec(Channel::X).apply(&history.x)?;
        let mut narx_series: Vec<Vec<f64>> = vec![x_diffs];
        for c in NARX_EXOGENOUS {
            narx_series.push(self.spec(c).apply(history.channel(c))?);
        }
        let narx_refs: Vec<&[f64]> = narx_series.iter().map(|s| s.as_slice()).collect();
        let narx_window = seed_window(&narx_refs);
        let narx_exo: Vec<Vec<f64>> = NARX_EXOGENOUS
            .iter()
            .map(|c| params.channel(*c).to_vec())
            .collect();
        let dx_norm =
            self.narx
                .predict_closed_loop(&narx_window, &zeros, Some(&narx_exo), steps)?;

        // Lateral: warm the recurrent state over the observed history, then
        // roll forward on the forecast inputs.
        let rnn_series: Vec<Vec<f64>> = RNN_INPUTS
            .iter()
            .map(|c| self.spec(*c).apply(history.channel(*c)))
            .collect::<Result<_>>()?;
        let rnn_refs: Vec<&[f64]> = rnn_series.iter().map(|s| s.as_slice()).collect();
        let d_len = rnn_refs[0].len();
        let mut hidden = vec![0.0; N_HIDDEN];
        for k in N_DELAYS..d_len {
            let window = window_at(&rnn_refs, 0, k);
            let (_, h) = self.rnn.forward(&window, &hidden)?;
            hidden = h;
        }
        let rnn_window = seed_window(&rnn_refs);
        let rnn_exo: Vec<Vec<f64>> = RNN_INPUTS
            .iter()
            .map(|c| params.channel(*c).to_vec())
            .collect();
        let dy_norm = self
            .rnn
            .predict_closed_loop(&rnn_window, &hidden, Some(&rnn_exo), steps)?;

        // Denormalize the differences and anchor at the last observed
        // position (step-0 continuity by construction).
        let norm_x = self.spec(Channel::X).norm;
        let norm_y = self.spec(Channel::Y).norm;
        let dx: Vec<f64> = dx_norm.iter().map(|o| norm_x.denormalize(o[0])).collect();
        let dy: Vec<f64> = dy_norm.iter().map(|o| norm_y.denormalize(o[0])).collect();
        let xs = reconstruct(history.x[m - 1], &dx);
        let ys = reconstruct(history.y[m - 1], &dy);
        Ok(xs[1..].iter().copied().zip(ys[1..].iter().copied()).collect())
    }

    /// Full pipeline: parameter forecasts, then both position rollouts.
    pub fn predict_trajectory(&self, history: &EnuTrack) -> Result<Vec<(f64, f64)>> {
        let params = self.predict_parameters(history)?;
        self.predict_trajectory_from(history, &params)
    }

    /// Parameter forecasts converted back to channel units (still first
    /// differences per step).
    pub fn denormalize_forecast(&self, params: &ParameterForecast) -> Vec<(Channel, Vec<f64>)> {
        params
            .channels
            .iter()
            .map(|(c, vals)| (*c, self.spec(*c).norm.denormalize_all(vals)))
            .collect()
    }
}

/// Stage-one output: per channel, `steps` forecast values in normalized
/// difference space.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterForecast {
    pub steps: usize,
    pub channels: Vec<(Channel, Vec<f64>)>,
}

impl ParameterForecast {
    pub fn channel(&self, c: Channel) -> &[f64] {
        self.channels
            .iter()
            .find(|(ch, _)| *ch == c)
            .map(|(_, v)| v.as_slice())
            .expect("forecast covers every stage-one channel")
    }
}

/// Input window for the sample whose target is diff index `k`: feedback
/// channels tap `k-1-d` (their newest value is the previous step), exogenous
/// channels tap `k-d` (their newest value is contemporaneous with the
/// target, which is how stage-one forecasts feed stage two step by step).
fn window_at(series: &[&[f64]], n_feedback: usize, k: usize) -> Vec<f64> {
    let mut window = Vec::with_capacity(series.len() * N_DELAYS);
    for (c, s) in series.iter().enumerate() {
        for d in 0..N_DELAYS {
            let idx = if c < n_feedback { k - 1 - d } else { k - d };
            window.push(s[idx]);
        }
    }
    window
}

/// Rollout seed window: the last [`N_DELAYS`] observed values of every
/// channel, newest first.
fn seed_window(series: &[&[f64]]) -> Vec<f64> {
    let d_len = series[0].len();
    let mut window = Vec::with_capacity(series.len() * N_DELAYS);
    for s in series {
        for d in 0..N_DELAYS {
            window.push(s[d_len - 1 - d]);
        }
    }
    window
}

/// Training sequence over one scenario for a net with the given channel
/// series (feedback channels first) and target series.
fn training_sequence(series: &[&[f64]], target: &[f64], n_feedback: usize) -> Sequence {
    let d_len = target.len();
    let mut seq = Sequence::default();
    for k in N_DELAYS..d_len {
        seq.push(window_at(series, n_feedback, k), vec![target[k]]);
    }
    seq
}

fn fit_spec(channel: Channel, tracks: &[&EnuTrack]) -> Result<ChannelSpec> {
    let deadband = channel.default_deadband();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for t in tracks {
        for d in ChannelSpec::smoothed_diffs(deadband, t.channel(channel))? {
            min = min.min(d);
            max = max.max(d);
        }
    }
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::EmptyDataset);
    }
    // A channel that never moves in the training corpus (e.g. acceleration
    // in a constant-speed corpus) gets a unit band around its constant so
    // the map stays invertible and the constant maps to 0.
    let norm = if max > min {
        Normalizer::new(min, max)?
    } else {
        Normalizer::new(min - 1.0, max + 1.0)?
    };
    Ok(ChannelSpec {
        channel,
        deadband,
        norm,
    })
}

fn preprocessed(track: &EnuTrack, spec: &ChannelSpec) -> Result<Vec<f64>> {
    spec.apply(track.channel(spec.channel))
}

fn net_dataset(
    tracks: &[&EnuTrack],
    specs: &[ChannelSpec],
    channels: &[Channel],
    target: Channel,
    n_feedback: usize,
) -> Result<Vec<Sequence>> {
    let spec_for = |c: Channel| specs.iter().find(|s| s.channel == c).unwrap();
    let mut sequences = Vec::with_capacity(tracks.len());
    for track in tracks {
        let series: Vec<Vec<f64>> = channels
            .iter()
            .map(|c| preprocessed(track, spec_for(*c)))
            .collect::<Result<_>>()?;
        let target_series = preprocessed(track, spec_for(target))?;
        if target_series.len() <= N_DELAYS {
            continue;
        }
        let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
        let seq = training_sequence(&refs, &target_series, n_feedback);
        if !seq.is_empty() {
            sequences.push(seq);
        }
    }
    if sequences.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(sequences)
}

fn nar_shape() -> NetShape {
    NetShape {
        n_inputs: 1,
        n_delays: N_DELAYS,
        n_hidden: N_HIDDEN,
        n_outputs: 1,
        n_feedback: 1,
        recurrent: false,
    }
}

fn narx_shape() -> NetShape {
    NetShape {
        n_inputs: 1 + NARX_EXOGENOUS.len(),
        n_delays: N_DELAYS,
        n_hidden: N_HIDDEN,
        n_outputs: 1,
        n_feedback: 1,
        recurrent: false,
    }
}

fn rnn_shape() -> NetShape {
    NetShape {
        n_inputs: RNN_INPUTS.len(),
        n_delays: N_DELAYS,
        n_hidden: N_HIDDEN,
        n_outputs: 1,
        n_feedback: 0,
        recurrent: true,
    }
}

/// Everything `train_bundle` produces: the bundle, which corpus indices
/// landed in which split, and per-net loss histories.
#[derive(Clone, Debug)]
pub struct BundleTraining {
    pub bundle: PredictorBundle,
    pub split: CorpusSplit,
    pub histories: Vec<(String, Vec<EpochLoss>)>,
}

/// Trains the full predictor stack on a corpus of ENU tracks: seeded
/// shuffle into 70/15/15 train/CV/test, channel specs fitted on the
/// training scenarios only, then one training run per net (teacher-forced
/// for NAR and NARX, truncated BPTT for the recurrent net).
pub fn train_bundle(
    corpus: &[EnuTrack],
    cfg: &TrainConfig,
    horizon: PredictionHorizon,
) -> Result<BundleTraining> {
    let split = split_corpus(corpus.len(), seed::derive(cfg.seed, "split"))?;
    let usable = |idx: &[usize]| -> Vec<&EnuTrack> {
        idx.iter()
            .map(|&i| &corpus[i])
            .filter(|t| t.len() >= MIN_HISTORY + 1)
            .collect()
    };
    let train_tracks = usable(&split.train);
    let cv_tracks = usable(&split.cv);
    if train_tracks.is_empty() || cv_tracks.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let specs: Vec<ChannelSpec> = Channel::ALL
        .iter()
        .map(|c| fit_spec(*c, &train_tracks))
        .collect::<Result<_>>()?;

    let mut histories = Vec::new();

    let mut nar = Vec::with_capacity(NAR_CHANNELS.len());
    for c in NAR_CHANNELS {
        let train_data = net_dataset(&train_tracks, &specs, &[c], c, 1)?;
        let cv_data = net_dataset(&cv_tracks, &specs, &[c], c, 1)?;
        let init = TdlNetwork::random(nar_shape(), seed::derive(cfg.seed, &format!("nar-{c}")))?;
        let outcome = train_batch(init, &train_data, &cv_data, cfg)?;
        histories.push((format!("nar_{c}"), outcome.history));
        nar.push((c, outcome.net));
    }

    let mut narx_channels = vec![Channel::X];
    narx_channels.extend(NARX_EXOGENOUS);
    let train_data = net_dataset(&train_tracks, &specs, &narx_channels, Channel::X, 1)?;
    let cv_data = net_dataset(&cv_tracks, &specs, &narx_channels, Channel::X, 1)?;
    let init = TdlNetwork::random(narx_shape(), seed::derive(cfg.seed, "narx"))?;
    let outcome = train_batch(init, &train_data, &cv_data, cfg)?;
    histories.push(("narx".to_string(), outcome.history));
    let narx = outcome.net;

    let train_data = net_dataset(&train_tracks, &specs, &RNN_INPUTS, Channel::Y, 0)?;
    let cv_data = net_dataset(&cv_tracks, &specs, &RNN_INPUTS, Channel::Y, 0)?;
    let init = TdlNetwork::random(rnn_shape(), seed::derive(cfg.seed, "rnn"))?;
    let outcome = train_batch(init, &train_data, &cv_data, cfg)?;
    histories.push(("rnn".to_string(), outcome.history));
    let rnn = outcome.net;

    Ok(BundleTraining {
        bundle: PredictorBundle {
            horizon,
            specs,
            nar,
            narx,
            rnn,
        },
        split,
        histories,
    })
}

/// Scenario ids per split, as persisted with the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub cv: Vec<String>,
    pub test: Vec<String>,
}

impl SplitIds {
    pub fn from_split(split: &CorpusSplit, ids: &[String]) -> Self {
        let pick = |idx: &[usize]| idx.iter().map(|&i| ids[i].clone()).collect();
        SplitIds {
            train: pick(&split.train),
            cv: pick(&split.cv),
            test: pick(&split.test),
        }
    }
}

/// Self-contained model document: nets, normalizers, horizon, the training
/// configuration and seed, and the corpus split it came from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleDocument {
    pub format_version: u32,
    pub tool_version: String,
    pub train_config: TrainConfig,
    pub split: SplitIds,
    pub bundle: PredictorBundle,
}

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

pub fn save_bundle(doc: &BundleDocument, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), doc)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<BundleDocument> {
    let file = std::fs::File::open(path)?;
    let doc: BundleDocument = serde_json::from_reader(std::io::BufReader::new(file))?;
    if doc.format_version != BUNDLE_FORMAT_VERSION {
        return Err(Error::BadModel(format!(
            "unsupported format version {}",
            doc.format_version
        )));
    }
    doc.bundle.validate()?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinematics_stationary() {
        let state = KinematicsState {
            x: 3.0,
            y: -1.0,
            theta: 0.4,
            v: 0.0,
            phi: 0.1,
            length: 5.0,
        };
        let out = kinematics_predict(&state, &PredictionHorizon::default()).unwrap();
        assert_eq!(out.len(), 10);
        for (x, y) in out {
            assert_eq!((x, y), (3.0, -1.0));
        }
    }

    #[test]
    fn kinematics_straight_line() {
        let state = KinematicsState {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            v: 10.0,
            phi: 0.0,
            length: 5.0,
        };
        let out = kinematics_predict(&state, &PredictionHorizon::default()).unwrap();
        assert!((out[0].0 - 1.0).abs() < 1e-12);
        assert_eq!(out[0].1, 0.0);
        assert!((out[9].0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn kinematics_hand_rollout() {
        // v = 10, L = 5, tan(phi) = 0.5 -> theta_rate = 1 rad/s from
        // theta = 0: step 1 advances (1, 0), step 2 adds (cos 0.1, sin 0.1).
        let state = KinematicsState {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            v: 10.0,
            phi: 0.5_f64.atan(),
            length: 5.0,
        };
        let out = kinematics_predict(&state, &PredictionHorizon { steps: 2, dt: 0.1 }).unwrap();
        assert!((out[0].0 - 1.0).abs() < 1e-9);
        assert!(out[0].1.abs() < 1e-9);
        assert!((out[1].0 - (1.0 + 0.1_f64.cos())).abs() < 1e-6);
        assert!((out[1].1 - 0.1_f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn kinematics_rejects_bad_state() {
        let mut state = KinematicsState {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            v: 10.0,
            phi: 1.6,
            length: 5.0,
        };
        assert!(matches!(
            kinematics_predict(&state, &PredictionHorizon::default()),
            Err(Error::InvalidState(_))
        ));
        state.phi = f64::NAN;
        assert!(kinematics_predict(&state, &PredictionHorizon::default()).is_err());
    }

    #[test]
    fn kinematics_frame_equivariance() {
        let horizon = PredictionHorizon::default();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        for _ in 0..50 {
            use rand::Rng;
            let state = KinematicsState {
                x: rng.random_range(-20.0..20.0),
                y: rng.random_range(-20.0..20.0),
                theta: rng.random_range(-1.0..1.0),
                v: rng.random_range(0.0..25.0),
                phi: rng.random_range(-0.25..0.25),
                length: 5.0,
            };
            let delta: f64 = rng.random_range(0.0..6.28);
            let (s, c) = delta.sin_cos();
            let rotated = KinematicsState {
                x: state.x * c - state.y * s,
                y: state.x * s + state.y * c,
                theta: state.theta + delta,
                ..state
            };
            let base = kinematics_predict(&state, &horizon).unwrap();
            let turned = kinematics_predict(&rotated, &horizon).unwrap();
            for ((bx, by), (tx, ty)) in base.iter().zip(&turned) {
                let ex = bx * c - by * s;
                let ey = bx * s + by * c;
                assert!((tx - ex).abs() < 1e-9);
                assert!((ty - ey).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn split_counts_match_rounding_rule() {
        let s = split_corpus(90, 1).unwrap();
        assert_eq!((s.train.len(), s.cv.len(), s.test.len()), (63, 13, 14));
        let s = split_corpus(20, 1).unwrap();
        assert_eq!((s.train.len(), s.cv.len(), s.test.len()), (14, 3, 3));
        assert!(matches!(
            split_corpus(9, 1),
            Err(Error::CorpusTooSmall { n: 9, min: 10 })
        ));
        // Partition: every index exactly once.
        let s = split_corpus(37, 99).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.cv).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    fn constant_track(id: &str, len: usize) -> EnuTrack {
        EnuTrack {
            scenario_id: id.to_string(),
            rate_hz: 10.0,
            x: vec![2.0; len],
            y: vec![-1.0; len],
            speed: vec![0.0; len],
            heading_rad: vec![0.0; len],
            steering_rad: vec![0.0; len],
            accel_lon: vec![0.0; len],
            yaw_rate: vec![0.0; len],
        }
    }

    fn stationary_bundle() -> BundleTraining {
        let corpus: Vec<EnuTrack> = (0..10)
            .map(|i| constant_track(&format!("s{i}"), 40))
            .collect();
        let cfg = TrainConfig {
            max_epochs: 400,
            patience: 400,
            seed: 3,
            ..TrainConfig::default()
        };
        train_bundle(&corpus, &cfg, PredictionHorizon::default()).unwrap()
    }

    #[test]
    fn stationary_corpus_predicts_stationary() {
        let trained = stationary_bundle();
        let history = constant_track("probe", 20);
        let pred = trained.bundle.predict_trajectory(&history).unwrap();
        for (x, y) in pred {
            assert!((x - 2.0).abs() < 0.01, "x drifted to {x}");
            assert!((y + 1.0).abs() < 0.01, "y drifted to {y}");
        }
        // Stage one is constant too.
        let params = trained.bundle.predict_parameters(&history).unwrap();
        for (c, vals) in trained.bundle.denormalize_forecast(&params) {
            for v in vals {
                assert!(v.abs() < 0.01, "{c} forecast diff {v}");
            }
        }
    }

    #[test]
    fn staged_calls_equal_fused_call() {
        let trained = stationary_bundle();
        let history = constant_track("probe", 25);
        let params = trained.bundle.predict_parameters(&history).unwrap();
        let staged = trained
            .bundle
            .predict_trajectory_from(&history, &params)
            .unwrap();
        let fused = trained.bundle.predict_trajectory(&history).unwrap();
        assert_eq!(staged, fused);
    }

    #[test]
    fn single_step_horizon() {
        let mut trained = stationary_bundle();
        trained.bundle.horizon = PredictionHorizon { steps: 1, dt: 0.1 };
        let history = constant_track("probe", 20);
        let pred = trained.bundle.predict_trajectory(&history).unwrap();
        assert_eq!(pred.len(), 1);
    }

    #[test]
    fn insufficient_history_is_reported() {
        let trained = stationary_bundle();
        let history = constant_track("short", 10);
        assert!(matches!(
            trained.bundle.predict_trajectory(&history),
            Err(Error::InsufficientHistory { have: 10, need: 16 })
        ));
    }

    #[test]
    fn training_is_deterministic_and_persists_exactly() {
        let corpus: Vec<EnuTrack> = (0..10)
            .map(|i| {
                let mut t = constant_track(&format!("s{i}"), 30);
                // Small per-scenario wiggle so normalizers fit real ranges.
                for k in 0..t.len() {
                    let w = ((i * 31 + k) as f64 * 0.7).sin();
                    t.x[k] = k as f64 * 1.2 + 0.01 * w;
                    t.speed[k] = 12.0 + 0.2 * w;
                    t.heading_rad[k] = 0.02 * w;
                    t.yaw_rate[k] = 0.005 * w;
                    t.accel_lon[k] = 0.1 * w;
                    t.steering_rad[k] = 0.01 * w;
                    t.y[k] = 0.05 * w;
                }
                t
            })
            .collect();
        let cfg = TrainConfig {
            max_epochs: 60,
            patience: 60,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train_bundle(&corpus, &cfg, PredictionHorizon::default()).unwrap();
        let b = train_bundle(&corpus, &cfg, PredictionHorizon::default()).unwrap();
        assert_eq!(a.split, b.split);
        if a.bundle != b.bundle {
            std::fs::write("/tmp/bundle_a.json", serde_json::to_string_pretty(&a.bundle).unwrap()).unwrap();
            std::fs::write("/tmp/bundle_b.json", serde_json::to_string_pretty(&b.bundle).unwrap()).unwrap();
            panic!("bundles differ; dumped to /tmp/bundle_{{a,b}}.json");
        }

        // Save/load reproduces inference bit for bit.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let ids: Vec<String> = corpus.iter().map(|t| t.scenario_id.clone()).collect();
        let doc = BundleDocument {
            format_version: BUNDLE_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            train_config: cfg,
            split: SplitIds::from_split(&a.split, &ids),
            bundle: a.bundle.clone(),
        };
        save_bundle(&doc, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded.bundle, a.bundle);
        let history = &corpus[0];
        let p1 = a.bundle.predict_trajectory(history).unwrap();
        let p2 = loaded.bundle.predict_trajectory(history).unwrap();
        assert_eq!(p1, p2);
    }
}
