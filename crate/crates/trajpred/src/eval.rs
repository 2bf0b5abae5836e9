//! Evaluation harness: per-step error distributions, nearest-rank
//! percentiles, predictor-vs-baseline comparison, and the lossy-channel
//! robustness study.
//!
//! Errors are measured per axis in the rotated ENU frame (longitudinal
//! `|dx|`, lateral `|dy|`). Every sliding window is evaluated by both the
//! trained predictors and the kinematic baseline from the same history, so
//! the comparison is paired by construction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{apply_drops, zero_order_hold, ChannelConfig};
use crate::data::{to_rotated_enu, EnuTrack, Trajectory};
use crate::error::{Error, Result};
use crate::predict::{
    baseline_state, kinematics_predict, BaselineConfig, PredictorBundle, MIN_HISTORY,
    NAR_CHANNELS,
};
use crate::preprocess::Channel;
use crate::seed;

/// Nearest-rank percentile: the element at 1-based index `ceil(q * n)` of
/// the ascending order statistics. `q` must be in (0, 1].
pub fn percentile(samples: &[f64], q: f64) -> Result<f64> {
    assert!(q > 0.0 && q <= 1.0, "quantile {q} outside (0, 1]");
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

/// The four evaluated predictor/axis pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorKind {
    NarxLong,
    RnnLat,
    KinLong,
    KinLat,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 4] = [
        PredictorKind::NarxLong,
        PredictorKind::RnnLat,
        PredictorKind::KinLong,
        PredictorKind::KinLat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::NarxLong => "narx_long",
            PredictorKind::RnnLat => "rnn_lat",
            PredictorKind::KinLong => "kin_long",
            PredictorKind::KinLat => "kin_lat",
        }
    }

    pub fn axis(self) -> &'static str {
        match self {
            PredictorKind::NarxLong | PredictorKind::KinLong => "long",
            PredictorKind::RnnLat | PredictorKind::KinLat => "lat",
        }
    }

    /// Figs-style model label within an axis.
    pub fn model(self) -> &'static str {
        match self {
            PredictorKind::NarxLong => "narx",
            PredictorKind::RnnLat => "rnn",
            PredictorKind::KinLong | PredictorKind::KinLat => "kinematics",
        }
    }
}

/// Absolute-error distribution of one predictor at one prediction step.
#[derive(Clone, Debug)]
pub struct StepStats {
    pub samples: Vec<f64>,
    pub p90: f64,
    pub mean: f64,
}

impl StepStats {
    fn from_samples(samples: Vec<f64>) -> Result<Self> {
        let p90 = percentile(&samples, 0.9)?;
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Ok(StepStats { samples, p90, mean })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvalMeta {
    pub corpus_id: String,
    pub seed: u64,
    pub drop_rate: f64,
}

/// Per-predictor, per-step error statistics over a set of test scenarios.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub meta: EvalMeta,
    pub steps: usize,
    pub n_windows: usize,
    pub entries: Vec<(PredictorKind, Vec<StepStats>)>,
}

impl EvalReport {
    pub fn empty(meta: EvalMeta) -> Self {
        EvalReport {
            meta,
            steps: 0,
            n_windows: 0,
            entries: Vec::new(),
        }
    }

    pub fn stats(&self, kind: PredictorKind) -> &[StepStats] {
        self.entries
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, s)| s.as_slice())
            .unwrap_or(&[])
    }
}

/// Runs every valid sliding window (advancing one sample at a time) of every
/// test scenario through the bundle and the baseline. A window anchored at
/// sample `p` uses the scenario prefix `[0, p]` as history and compares each
/// predicted step against the true positions at `p+1 ..= p+steps`.
pub fn sliding_eval(
    bundle: &PredictorBundle,
    baseline: &BaselineConfig,
    tracks: &[EnuTrack],
    meta: EvalMeta,
) -> Result<EvalReport> {
    let pairs: Vec<(&EnuTrack, &EnuTrack)> = tracks.iter().map(|t| (t, t)).collect();
    sliding_eval_paired(bundle, baseline, &pairs, meta)
}

/// [`sliding_eval`] generalized to distinct input and truth tracks of equal
/// length per scenario: histories come from the input track (e.g. a lossy
/// reconstruction) while errors are measured against the truth track.
pub fn sliding_eval_paired(
    bundle: &PredictorBundle,
    baseline: &BaselineConfig,
    tracks: &[(&EnuTrack, &EnuTrack)],
    meta: EvalMeta,
) -> Result<EvalReport> {
    let steps = bundle.horizon.steps;
    let mut errors: Vec<Vec<Vec<f64>>> = PredictorKind::ALL
        .iter()
        .map(|_| vec![Vec::new(); steps])
        .collect();
    let mut n_windows = 0usize;

    for (input, truth) in tracks {
        let m = input.len();
        if truth.len() != m {
            return Err(Error::DimensionMismatch {
                what: "truth track length",
                expected: m,
                actual: truth.len(),
            });
        }
        if m < MIN_HISTORY + steps {
            continue;
        }
        for p in (MIN_HISTORY - 1)..(m - steps) {
            let history = input.prefix(p + 1);
            let predicted = bundle.predict_trajectory(&history)?;
            let state = baseline_state(&history, baseline)?;
            let kinematic = kinematics_predict(&state, &bundle.horizon)?;
            for s in 0..steps {
                let tx = truth.x[p + 1 + s];
                let ty = truth.y[p + 1 + s];
                errors[0][s].push((predicted[s].0 - tx).abs());
                errors[1][s].push((predicted[s].1 - ty).abs());
                errors[2][s].push((kinematic[s].0 - tx).abs());
                errors[3][s].push((kinematic[s].1 - ty).abs());
            }
            n_windows += 1;
        }
    }
    if n_windows == 0 {
        return Err(Error::NoValidWindows);
    }

    let mut entries = Vec::with_capacity(4);
    for (kind, err) in PredictorKind::ALL.into_iter().zip(errors) {
        let stats: Vec<StepStats> = err
            .into_iter()
            .map(StepStats::from_samples)
            .collect::<Result<_>>()?;
        debug_assert!(stats.iter().all(|s| s.samples.len() == n_windows));
        entries.push((kind, stats));
    }
    Ok(EvalReport {
        meta,
        steps,
        n_windows,
        entries,
    })
}

/// One row of the summary CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub predictor: String,
    pub axis: String,
    pub step: usize,
    pub p90: f64,
    pub mean: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for (kind, stats) in &self.entries {
            for (s, st) in stats.iter().enumerate() {
                rows.push(SummaryRow {
                    predictor: kind.name().to_string(),
                    axis: kind.axis().to_string(),
                    step: s + 1,
                    p90: st.p90,
                    mean: st.mean,
                    n: st.samples.len(),
                });
            }
        }
        rows
    }
}

/// Writes `report.csv` (predictor, axis, step, p90, mean, n) and
/// `report_long.csv` (axis, step, model, p90) into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    w.write_record(["predictor", "axis", "step", "p90", "mean", "n"])?;
    for row in report.summary_rows() {
        w.write_record([
            row.predictor,
            row.axis,
            row.step.to_string(),
            row.p90.to_string(),
            row.mean.to_string(),
            row.n.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("report_long.csv"))?;
    w.write_record(["axis", "step", "model", "p90"])?;
    for (kind, stats) in &report.entries {
        for (s, st) in stats.iter().enumerate() {
            w.write_record([
                kind.axis().to_string(),
                (s + 1).to_string(),
                kind.model().to_string(),
                st.p90.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads back the summary CSV written by [`emit_report`].
pub fn read_report_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |idx: usize| -> Result<&str> {
            rec.get(idx).ok_or_else(|| Error::NonFiniteValue {
                row: i + 1,
                column: format!("col{idx}"),
                detail: "missing".into(),
            })
        };
        let parse_f = |idx: usize, name: &str| -> Result<f64> {
            field(idx)?.parse().map_err(|e| Error::NonFiniteValue {
                row: i + 1,
                column: name.to_string(),
                detail: format!("{e}"),
            })
        };
        let parse_u = |idx: usize, name: &str| -> Result<usize> {
            field(idx)?.parse().map_err(|e| Error::NonFiniteValue {
                row: i + 1,
                column: name.to_string(),
                detail: format!("{e}"),
            })
        };
        rows.push(SummaryRow {
            predictor: field(0)?.to_string(),
            axis: field(1)?.to_string(),
            step: parse_u(2, "step")?,
            p90: parse_f(3, "p90")?,
            mean: parse_f(4, "mean")?,
            n: parse_u(5, "n")?,
        });
    }
    Ok(rows)
}

/// Stage-one degradation of one channel at one drop rate: mean squared
/// deviation between lossy-input and ideal-input forecasts, in channel
/// units (differences per step).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustnessChannelRow {
    pub drop_rate: f64,
    pub channel: Channel,
    pub mse_vs_ideal: f64,
}

/// Trajectory-level robustness at one drop rate, axis and step. `p90_lossy`
/// covers all windows; `p90_lossy_fresh` restricts to windows whose anchor
/// sample was received (the natural prediction instant at the receiver —
/// every window still carries held/corrupted history). Deltas are against
/// the ideal-channel p90 on the same scenarios.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustnessStepRow {
    pub drop_rate: f64,
    pub axis: String,
    pub step: usize,
    pub p90_lossy: f64,
    pub p90_lossy_fresh: f64,
    pub p90_ideal: f64,
    pub delta: f64,
    pub delta_fresh: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub seed: u64,
    pub rates: Vec<f64>,
    /// Achieved drop fraction per rate.
    pub achieved: Vec<(f64, f64)>,
    pub channels: Vec<RobustnessChannelRow>,
    pub steps: Vec<RobustnessStepRow>,
}

struct WindowForecasts {
    /// Denormalized stage-one forecasts per window, `[window][channel]`.
    params: Vec<Vec<(Channel, Vec<f64>)>>,
    /// `[axis][step][window]` absolute trajectory errors.
    errors: [Vec<Vec<f64>>; 2],
    /// Anchor sample index per window.
    anchors: Vec<usize>,
}

fn forecast_track(
    bundle: &PredictorBundle,
    input: &EnuTrack,
    truth: &EnuTrack,
) -> Result<WindowForecasts> {
    let steps = bundle.horizon.steps;
    let m = input.len();
    let mut out = WindowForecasts {
        params: Vec::new(),
        errors: [vec![Vec::new(); steps], vec![Vec::new(); steps]],
        anchors: Vec::new(),
    };
    if m < MIN_HISTORY + steps {
        return Ok(out);
    }
    for p in (MIN_HISTORY - 1)..(m - steps) {
        let history = input.prefix(p + 1);
        let params = bundle.predict_parameters(&history)?;
        let traj = bundle.predict_trajectory_from(&history, &params)?;
        out.params.push(bundle.denormalize_forecast(&params));
        for s in 0..steps {
            out.errors[0][s].push((traj[s].0 - truth.x[p + 1 + s]).abs());
            out.errors[1][s].push((traj[s].1 - truth.y[p + 1 + s]).abs());
        }
        out.anchors.push(p);
    }
    Ok(out)
}

fn forecast_mse(a: &[(Channel, Vec<f64>)], b: &[(Channel, Vec<f64>)], c: Channel) -> (f64, usize) {
    let find = |set: &[(Channel, Vec<f64>)]| -> Vec<f64> {
        set.iter()
            .find(|(ch, _)| *ch == c)
            .map(|(_, v)| v.clone())
            .unwrap_or_default()
    };
    let (va, vb) = (find(a), find(b));
    let sq: f64 = va.iter().zip(&vb).map(|(x, y)| (x - y) * (x - y)).sum();
    (sq, va.len().min(vb.len()))
}

/// Ideal-vs-lossy study: for each drop rate, corrupt every scenario with a
/// derived channel seed, rebuild by zero-order hold, rerun both prediction
/// stages, and compare against the ideal-channel run on the same windows.
pub fn robustness_eval(
    bundle: &PredictorBundle,
    trajectories: &[Trajectory],
    rates: &[f64],
    channel_seed: u64,
) -> Result<RobustnessReport> {
    let steps = bundle.horizon.steps;
    let ideal_tracks: Vec<EnuTrack> = trajectories
        .iter()
        .map(|t| to_rotated_enu(t, 0))
        .collect::<Result<_>>()?;
    let ideal: Vec<WindowForecasts> = ideal_tracks
        .iter()
        .map(|t| forecast_track(bundle, t, t))
        .collect::<Result<_>>()?;
    if ideal.iter().all(|w| w.anchors.is_empty()) {
        return Err(Error::NoValidWindows);
    }

    // Ideal per-step p90 per axis.
    let mut p90_ideal = [vec![0.0; steps], vec![0.0; steps]];
    for axis in 0..2 {
        for s in 0..steps {
            let pool: Vec<f64> = ideal
                .iter()
                .flat_map(|w| w.errors[axis][s].iter().copied())
                .collect();
            p90_ideal[axis][s] = percentile(&pool, 0.9)?;
        }
    }

    let mut report = RobustnessReport {
        seed: channel_seed,
        rates: rates.to_vec(),
        achieved: Vec::new(),
        channels: Vec::new(),
        steps: Vec::new(),
    };

    for (r_idx, &rate) in rates.iter().enumerate() {
        let base = seed::derive_indexed(seed::derive(channel_seed, "drop"), r_idx as u64);
        let mut mse_acc: Vec<(Channel, f64, usize)> =
            NAR_CHANNELS.iter().map(|c| (*c, 0.0, 0usize)).collect();
        let mut lossy_all: [Vec<Vec<f64>>; 2] =
            [vec![Vec::new(); steps], vec![Vec::new(); steps]];
        let mut lossy_fresh: [Vec<Vec<f64>>; 2] =
            [vec![Vec::new(); steps], vec![Vec::new(); steps]];
        let mut dropped = 0usize;
        let mut total = 0usize;

        for (j, traj) in trajectories.iter().enumerate() {
            let cfg = ChannelConfig::new(rate, seed::derive_indexed(base, j as u64))?;
            let stream = apply_drops(traj, &cfg);
            dropped += stream.drop_mask.iter().filter(|d| **d).count();
            total += stream.len();
            let held = zero_order_hold(&stream)?;
            let lossy_track = to_rotated_enu(&held, 0)?;
            let lossy = forecast_track(bundle, &lossy_track, &ideal_tracks[j])?;

            for (w, anchor) in lossy.anchors.iter().enumerate() {
                for (c, acc, n) in &mut mse_acc {
                    let (sq, len) = forecast_mse(&lossy.params[w], &ideal[j].params[w], *c);
                    *acc += sq;
                    *n += len;
                }
                for axis in 0..2 {
                    for s in 0..steps {
                        let e = lossy.errors[axis][s][w];
                        lossy_all[axis][s].push(e);
                        if !stream.drop_mask[*anchor] {
                            lossy_fresh[axis][s].push(e);
                        }
                    }
                }
            }
        }

        report
            .achieved
            .push((rate, dropped as f64 / total.max(1) as f64));
        for (c, acc, n) in mse_acc {
            report.channels.push(RobustnessChannelRow {
                drop_rate: rate,
                channel: c,
                mse_vs_ideal: if n == 0 { 0.0 } else { acc / n as f64 },
            });
        }
        for (axis, name) in ["long", "lat"].iter().enumerate() {
            for s in 0..steps {
                let p90_lossy = percentile(&lossy_all[axis][s], 0.9)?;
                let p90_fresh = if lossy_fresh[axis][s].is_empty() {
                    f64::NAN
                } else {
                    percentile(&lossy_fresh[axis][s], 0.9)?
                };
                report.steps.push(RobustnessStepRow {
                    drop_rate: rate,
                    axis: name.to_string(),
                    step: s + 1,
                    p90_lossy,
                    p90_lossy_fresh: p90_fresh,
                    p90_ideal: p90_ideal[axis][s],
                    delta: p90_lossy - p90_ideal[axis][s],
                    delta_fresh: p90_fresh - p90_ideal[axis][s],
                });
            }
        }
    }
    Ok(report)
}

/// Writes `robustness_channels.csv` and `robustness_steps.csv` into `dir`.
pub fn emit_robustness(report: &RobustnessReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("robustness_channels.csv"))?;
    w.write_record(["drop_rate", "channel", "mse_vs_ideal"])?;
    for row in &report.channels {
        w.write_record([
            row.drop_rate.to_string(),
            row.channel.name().to_string(),
            row.mse_vs_ideal.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("robustness_steps.csv"))?;
    w.write_record([
        "drop_rate",
        "axis",
        "step",
        "p90_lossy",
        "p90_lossy_fresh",
        "p90_ideal",
        "delta",
        "delta_fresh",
    ])?;
    for row in &report.steps {
        w.write_record([
            row.drop_rate.to_string(),
            row.axis.clone(),
            row.step.to_string(),
            row.p90_lossy.to_string(),
            row.p90_lossy_fresh.to_string(),
            row.p90_ideal.to_string(),
            row.delta.to_string(),
            row.delta_fresh.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(percentile(&v, 0.9).unwrap(), 9.0);
        assert_eq!(percentile(&v, 1.0).unwrap(), 10.0);
        assert_eq!(percentile(&[3.5], 0.9).unwrap(), 3.5);
        assert!(matches!(percentile(&[], 0.9), Err(Error::EmptyInput)));
    }

    #[test]
    fn empty_report_emits_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport::empty(EvalMeta::default());
        emit_report(&report, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(text.trim(), "predictor,axis,step,p90,mean,n");
        assert!(read_report_csv(&dir.path().join("report.csv")).unwrap().is_empty());
    }

    proptest! {
        // Order statistics: the 90th percentile is never below the median.
        #[test]
        fn p90_at_least_median(samples in proptest::collection::vec(0.0_f64..100.0, 1..200)) {
            let p90 = percentile(&samples, 0.9).unwrap();
            let median = percentile(&samples, 0.5).unwrap();
            prop_assert!(p90 >= median);
        }
    }
}
