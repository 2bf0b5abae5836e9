//! Lossy V2V stream simulation.
//!
//! Packets drop i.i.d. with a configurable rate (a packet carries the whole
//! record, so all channels drop together) and the receiver rebuilds a
//! uniform stream by zero-order hold. The first sample is exempt from
//! dropping so the hold always has an anchor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::{BsmRecord, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Probability that a given packet is lost, in [0, 1].
    pub drop_rate: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(drop_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&drop_rate) {
            return Err(Error::InvalidState(format!(
                "drop_rate {drop_rate} outside [0, 1]"
            )));
        }
        Ok(ChannelConfig { drop_rate, seed })
    }
}

/// A received stream: per-slot optional records plus the drop mask and the
/// (known) uniform broadcast grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LossyStream {
    pub scenario_id: String,
    pub rate_hz: f64,
    pub timestamps: Vec<f64>,
    pub received: Vec<Option<BsmRecord>>,
    pub drop_mask: Vec<bool>,
}

impl LossyStream {
    pub fn len(&self) -> usize {
        self.received.len()
    }

    pub fn is_empty(&self) -> bool {
        self.received.is_empty()
    }

    pub fn dropped_fraction(&self) -> f64 {
        if self.drop_mask.is_empty() {
            return 0.0;
        }
        self.drop_mask.iter().filter(|d| **d).count() as f64 / self.drop_mask.len() as f64
    }
}

/// Drops each sample after the first independently with `cfg.drop_rate`.
pub fn apply_drops(traj: &Trajectory, cfg: &ChannelConfig) -> LossyStream {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut received = Vec::with_capacity(traj.len());
    let mut drop_mask = Vec::with_capacity(traj.len());
    for (i, r) in traj.records.iter().enumerate() {
        let dropped = i > 0 && rng.random::<f64>() < cfg.drop_rate;
        drop_mask.push(dropped);
        received.push(if dropped { None } else { Some(*r) });
    }
    LossyStream {
        scenario_id: traj.scenario_id.clone(),
        rate_hz: traj.rate_hz,
        timestamps: traj.records.iter().map(|r| r.t).collect(),
        received,
        drop_mask,
    }
}

/// Replaces each missing sample with the most recent received one, restoring
/// the uniform grid timestamps.
pub fn zero_order_hold(stream: &LossyStream) -> Result<Trajectory> {
    let Some(Some(first)) = stream.received.first() else {
        return Err(Error::DegenerateInput(
            "zero-order hold needs a present first sample",
        ));
    };
    let mut held = *first;
    let mut records = Vec::with_capacity(stream.len());
    for (i, slot) in stream.received.iter().enumerate() {
        if let Some(r) = slot {
            held = *r;
        }
        let mut r = held;
        r.t = stream.timestamps[i];
        records.push(r);
    }
    Trajectory::new(stream.scenario_id.clone(), stream.rate_hz, records)
}

/// Exports a stream as a trajectory CSV (post-hold values) plus a trailing
/// `dropped` 0/1 column.
pub fn write_lossy_csv(stream: &LossyStream, path: &Path) -> Result<()> {
    let held = zero_order_hold(stream)?;
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = BsmRecord::COLUMNS.to_vec();
    header.push("dropped");
    writer.write_record(&header)?;
    for (r, dropped) in held.records.iter().zip(&stream.drop_mask) {
        let mut row = vec![
            r.t.to_string(),
            r.lat.to_string(),
            r.lon.to_string(),
            r.elev.to_string(),
            r.speed.to_string(),
            r.heading.to_string(),
            r.steering_angle.to_string(),
            r.accel_lon.to_string(),
            r.accel_lat.to_string(),
            r.accel_vert.to_string(),
            r.yaw_rate.to_string(),
            r.veh_length.to_string(),
            r.veh_width.to_string(),
        ];
        row.push(if *dropped { "1" } else { "0" }.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
