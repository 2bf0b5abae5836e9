//! Signal conditioning ahead of network training.
//!
//! Per channel the pipeline is: deadband smoothing, first differencing,
//! then min-max normalization onto [-1, 1]. Normalization bounds are fitted
//! on training data only and carried around as [`ChannelSpec`]s so inference
//! stays self-contained.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter channels the pipeline knows about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    SteeringAngle,
    Heading,
    Speed,
    AccelLon,
    YawRate,
    X,
    Y,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::SteeringAngle,
        Channel::Heading,
        Channel::Speed,
        Channel::AccelLon,
        Channel::YawRate,
        Channel::X,
        Channel::Y,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::SteeringAngle => "steering_angle",
            Channel::Heading => "heading",
            Channel::Speed => "speed",
            Channel::AccelLon => "accel_lon",
            Channel::YawRate => "yaw_rate",
            Channel::X => "x",
            Channel::Y => "y",
        }
    }

    /// Default deadband threshold, in the track-frame unit of the channel
    /// (angles in radians). Steering, heading, speed and longitudinal
    /// acceleration use 3 deg, 0.1 rad, 0.1 m/s and 0.1 m/s^2; yaw rate gets
    /// 0.01 rad/s by analogy. Positions are targets, not noisy commands, and
    /// are left untouched.
    pub fn default_deadband(self) -> f64 {
        match self {
            Channel::SteeringAngle => 3.0_f64.to_radians(),
            Channel::Heading => 0.1,
            Channel::Speed => 0.1,
            Channel::AccelLon => 0.1,
            Channel::YawRate => 0.01,
            Channel::X | Channel::Y => 0.0,
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hold-last-output deadband: a sample only moves the output when it differs
/// from the currently held value by at least `threshold`.
pub fn deadband_smooth(series: &[f64], threshold: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut held = f64::NAN;
    for (i, &v) in series.iter().enumerate() {
        if i == 0 || (v - held).abs() >= threshold {
            held = v;
        }
        out.push(held);
    }
    out
}

/// First difference: `out[t] = in[t+1] - in[t]`, one element shorter.
pub fn difference(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::DegenerateInput(
            "difference needs at least two samples",
        ));
    }
    Ok(series.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Cumulative-sum inverse of [`difference`], anchored at `first`.
pub fn reconstruct(first: f64, diffs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(diffs.len() + 1);
    let mut acc = first;
    out.push(acc);
    for d in diffs {
        acc += d;
        out.push(acc);
    }
    out
}

/// Affine map of `[min, max]` onto `[-1, 1]`. Values outside the fitted
/// range extrapolate linearly so the map stays invertible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: f64,
    pub max: f64,
}

impl Normalizer {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::DegenerateRange);
        }
        Ok(Normalizer { min, max })
    }

    /// Fit on a single series.
    pub fn fit(series: &[f64]) -> Result<Self> {
        Self::fit_many(std::iter::once(series))
    }

    /// Fit on several series at once (e.g. one per training scenario).
    pub fn fit_many<'a>(series: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for s in series {
            for &v in s {
                min = min.min(v);
                max = max.max(v);
            }
        }
        Self::new(min, max)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        -1.0 + 2.0 * (x - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.min + (u + 1.0) * (self.max - self.min) / 2.0
    }

    pub fn normalize_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.normalize(x)).collect()
    }

    pub fn denormalize_all(&self, us: &[f64]) -> Vec<f64> {
        us.iter().map(|&u| self.denormalize(u)).collect()
    }
}

/// Fitted conditioning parameters for one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub channel: Channel,
    pub deadband: f64,
    pub norm: Normalizer,
}

impl ChannelSpec {
    /// Full per-channel pipeline: smooth, difference, normalize.
    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let smoothed = deadband_smooth(raw, self.deadband);
        let diffs = difference(&smoothed)?;
        Ok(self.norm.normalize_all(&diffs))
    }

    /// The smooth-then-difference half of [`ChannelSpec::apply`], used when
    /// fitting the normalizer itself.
    pub fn smoothed_diffs(deadband: f64, raw: &[f64]) -> Result<Vec<f64>> {
        difference(&deadband_smooth(raw, deadband))
    }
}
