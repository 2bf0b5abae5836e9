//! Data model for vehicle parameter streams and coordinate conversion.
//!
//! A [`Trajectory`] is one maneuver's worth of timestamped [`BsmRecord`]s,
//! read from and written to a simple CSV schema. Geodetic positions convert
//! into a rotated east-north-up frame ([`EnuTrack`]) whose +x axis follows
//! the reference heading and whose +y axis points to the right of travel,
//! so a clockwise heading change is a positive angle throughout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::Channel;

/// Equatorial radius used by the local tangent-plane conversion, meters.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// One timestamped broadcast sample of the vehicle parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsmRecord {
    /// Seconds, monotone within a trajectory.
    pub t: f64,
    /// WGS-84 degrees.
    pub lat: f64,
    /// WGS-84 degrees.
    pub lon: f64,
    /// Meters.
    pub elev: f64,
    /// m/s, non-negative.
    pub speed: f64,
    /// Degrees clockwise from north, in [0, 360).
    pub heading: f64,
    /// Degrees, clockwise (right turn) positive.
    pub steering_angle: f64,
    /// m/s^2.
    pub accel_lon: f64,
    /// m/s^2, right positive.
    pub accel_lat: f64,
    /// m/s^2.
    pub accel_vert: f64,
    /// rad/s, clockwise positive.
    pub yaw_rate: f64,
    /// Meters, > 0.
    pub veh_length: f64,
    /// Meters.
    pub veh_width: f64,
}

impl BsmRecord {
    /// Field names in CSV column order.
    pub const COLUMNS: [&'static str; 13] = [
        "t",
        "lat",
        "lon",
        "elev",
        "speed",
        "heading",
        "steering_angle",
        "accel_lon",
        "accel_lat",
        "accel_vert",
        "yaw_rate",
        "veh_length",
        "veh_width",
    ];

    fn fields(&self) -> [f64; 13] {
        [
            self.t,
            self.lat,
            self.lon,
            self.elev,
            self.speed,
            self.heading,
            self.steering_angle,
            self.accel_lon,
            self.accel_lat,
            self.accel_vert,
            self.yaw_rate,
            self.veh_length,
            self.veh_width,
        ]
    }

    /// Checks the per-record invariants; returns the offending column and a
    /// reason on failure.
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        for (name, v) in Self::COLUMNS.iter().zip(self.fields()) {
            if !v.is_finite() {
                return Err((name.to_string(), format!("{v} is not finite")));
            }
        }
        if self.speed < 0.0 {
            return Err(("speed".into(), format!("{} is negative", self.speed)));
        }
        if !(0.0..360.0).contains(&self.heading) {
            return Err((
                "heading".into(),
                format!("{} is outside [0, 360)", self.heading),
            ));
        }
        if self.veh_length <= 0.0 {
            return Err((
                "veh_length".into(),
                format!("{} is not positive", self.veh_length),
            ));
        }
        Ok(())
    }
}

/// A uniformly sampled sequence of records for one maneuver scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario_id: String,
    pub rate_hz: f64,
    pub records: Vec<BsmRecord>,
}

impl Trajectory {
    /// Minimum length for one prediction window: 15 delay taps + 10
    /// prediction steps + 1.
    pub const MIN_WINDOW_LEN: usize = 26;

    /// Builds a trajectory, enforcing record invariants and strictly
    /// increasing timestamps. Short trajectories are allowed; windowing
    /// code checks lengths where it matters.
    pub fn new(scenario_id: impl Into<String>, rate_hz: f64, records: Vec<BsmRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if let Err((column, detail)) = r.validate() {
                return Err(Error::NonFiniteValue {
                    row: i + 1,
                    column,
                    detail,
                });
            }
            if i > 0 && r.t <= records[i - 1].t {
                return Err(Error::NonMonotoneTimestamp { row: i + 1 });
            }
        }
        Ok(Trajectory {
            scenario_id: scenario_id.into(),
            rate_hz,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// True when inter-sample spacing matches `1/rate_hz` within `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let dt = 1.0 / self.rate_hz;
        self.records
            .windows(2)
            .all(|w| ((w[1].t - w[0].t) - dt).abs() <= tol)
    }
}

/// Track in the rotated ENU frame of a reference sample: +x along the
/// reference heading, +y to the right of travel, angles in radians relative
/// to the reference heading (clockwise positive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnuTrack {
    pub scenario_id: String,
    pub rate_hz: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub speed: Vec<f64>,
    pub heading_rad: Vec<f64>,
    pub steering_rad: Vec<f64>,
    pub accel_lon: Vec<f64>,
    pub yaw_rate: Vec<f64>,
}

impl EnuTrack {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        match c {
            Channel::SteeringAngle => &self.steering_rad,
            Channel::Heading => &self.heading_rad,
            Channel::Speed => &self.speed,
            Channel::AccelLon => &self.accel_lon,
            Channel::YawRate => &self.yaw_rate,
            Channel::X => &self.x,
            Channel::Y => &self.y,
        }
    }

    /// Copy of the samples `[0, end)`, used as prediction history.
    pub fn prefix(&self, end: usize) -> EnuTrack {
        EnuTrack {
            scenario_id: self.scenario_id.clone(),
            rate_hz: self.rate_hz,
            x: self.x[..end].to_vec(),
            y: self.y[..end].to_vec(),
            speed: self.speed[..end].to_vec(),
            heading_rad: self.heading_rad[..end].to_vec(),
            steering_rad: self.steering_rad[..end].to_vec(),
            accel_lon: self.accel_lon[..end].to_vec(),
            yaw_rate: self.yaw_rate[..end].to_vec(),
        }
    }
}

/// Wraps an angle to (-pi, pi].
pub(crate) fn wrap_to_pi(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Wraps a heading to [0, 360). `rem_euclid` alone can round a hair-below
/// -0 up to exactly 360.0, which violates the record invariant.
pub(crate) fn wrap_heading_deg(h: f64) -> f64 {
    let r = h.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Converts a trajectory into the rotated ENU frame anchored at
/// `ref_index`: that sample maps to (0, 0) and its heading becomes the +x
/// direction. Elevation differences are ignored (planar approximation on a
/// sphere of radius [`EARTH_RADIUS_M`]).
pub fn to_rotated_enu(traj: &Trajectory, ref_index: usize) -> Result<EnuTrack> {
    let n = traj.len();
    let Some(ref_rec) = traj.records.get(ref_index) else {
        return Err(Error::IndexOutOfRange {
            index: ref_index,
            len: n,
        });
    };
    let lat0 = ref_rec.lat.to_radians();
    let lon0 = ref_rec.lon.to_radians();
    let (sin_h, cos_h) = ref_rec.heading.to_radians().sin_cos();
    let cos_lat0 = lat0.cos();

    let mut track = EnuTrack {
        scenario_id: traj.scenario_id.clone(),
        rate_hz: traj.rate_hz,
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        speed: Vec::with_capacity(n),
        heading_rad: Vec::with_capacity(n),
        steering_rad: Vec::with_capacity(n),
        accel_lon: Vec::with_capacity(n),
        yaw_rate: Vec::with_capacity(n),
    };
    for r in &traj.records {
        let d_north = (r.lat.to_radians() - lat0) * EARTH_RADIUS_M;
        let d_east = (r.lon.to_radians() - lon0) * EARTH_RADIUS_M * cos_lat0;
        // Heading is clockwise from north, +y is right of travel.
        track.x.push(d_east * sin_h + d_north * cos_h);
        track.y.push(d_east * cos_h - d_north * sin_h);
        track.speed.push(r.speed);
        track
            .heading_rad
            .push(wrap_to_pi((r.heading - ref_rec.heading).to_radians()));
        track.steering_rad.push(r.steering_angle.to_radians());
        track.accel_lon.push(r.accel_lon);
        track.yaw_rate.push(r.yaw_rate);
    }
    Ok(track)
}

/// Inverse of the positional part of [`to_rotated_enu`]: places a rotated
/// ENU point back onto the sphere around `(lat0_deg, lon0_deg)` with the
/// frame heading `heading_deg`. Used by the synthetic generator.
pub fn enu_to_geodetic(x: f64, y: f64, lat0_deg: f64, lon0_deg: f64, heading_deg: f64) -> (f64, f64) {
    let (sin_h, cos_h) = heading_deg.to_radians().sin_cos();
    let d_east = x * sin_h + y * cos_h;
    let d_north = x * cos_h - y * sin_h;
    let lat0 = lat0_deg.to_radians();
    let lat = lat0 + d_north / EARTH_RADIUS_M;
    let lon = lon0_deg.to_radians() + d_east / (EARTH_RADIUS_M * lat0.cos());
    (lat.to_degrees(), lon.to_degrees())
}

/// Reads one scenario from a CSV file in the documented schema. The
/// scenario id is the filename stem; the sample rate is inferred from the
/// median timestamp spacing.
pub fn parse_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    // Map each expected column to its position in the file.
    let mut positions = Vec::with_capacity(BsmRecord::COLUMNS.len());
    for want in BsmRecord::COLUMNS {
        match header.iter().position(|h| h.trim() == want) {
            Some(p) => positions.push(p),
            None => {
                return Err(Error::MissingColumn {
                    column: want.to_string(),
                })
            }
        }
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let mut vals = [0.0_f64; 13];
        for (slot, (&pos, name)) in positions.iter().zip(BsmRecord::COLUMNS).enumerate() {
            let cell = row.get(pos).unwrap_or("");
            vals[slot] = cell.trim().parse::<f64>().map_err(|e| Error::NonFiniteValue {
                row: i + 1,
                column: name.to_string(),
                detail: format!("{cell:?}: {e}"),
            })?;
        }
        records.push(BsmRecord {
            t: vals[0],
            lat: vals[1],
            lon: vals[2],
            elev: vals[3],
            speed: vals[4],
            heading: vals[5],
            steering_angle: vals[6],
            accel_lon: vals[7],
            accel_lat: vals[8],
            accel_vert: vals[9],
            yaw_rate: vals[10],
            veh_length: vals[11],
            veh_width: vals[12],
        });
    }

    let scenario_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    let rate_hz = infer_rate(&records);
    Trajectory::new(scenario_id, rate_hz, records)
}

fn infer_rate(records: &[BsmRecord]) -> f64 {
    if records.len() < 2 {
        return 10.0;
    }
    let mut dts: Vec<f64> = records.windows(2).map(|w| w[1].t - w[0].t).collect();
    dts.sort_by(|a, b| a.total_cmp(b));
    let median = dts[dts.len() / 2];
    if median <= 0.0 {
        return 10.0;
    }
    // Snap to 1e-6 Hz so exact grids round-trip cleanly.
    (1.0 / median * 1e6).round() / 1e6
}

/// Writes a trajectory in the CSV schema with full round-trip precision.
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(BsmRecord::COLUMNS)?;
    for r in &traj.records {
        let fields = r.fields();
        writer.write_record(fields.iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Resamples onto an exact `1/rate_hz` grid spanning the input time range.
/// Scalar channels interpolate linearly; heading interpolates on the circle
/// (shortest arc) via unit vectors.
pub fn resample_uniform(traj: &Trajectory, rate_hz: f64) -> Result<Trajectory> {
    if traj.len() < 2 {
        return Err(Error::DegenerateInput(
            "resampling needs at least two records",
        ));
    }
    let recs = &traj.records;
    let t0 = recs[0].t;
    let t_end = recs[recs.len() - 1].t;
    let dt = 1.0 / rate_hz;
    let steps = ((t_end - t0) * rate_hz + 1e-9).floor() as usize;

    let mut out = Vec::with_capacity(steps + 1);
    let mut j = 0usize;
    for i in 0..=steps {
        let t = t0 + i as f64 * dt;
        while j + 2 < recs.len() && recs[j + 1].t <= t {
            j += 1;
        }
        let a = &recs[j];
        let b = &recs[j + 1];
        let alpha = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let lerp = |va: f64, vb: f64| va + alpha * (vb - va);

        let ha = a.heading.to_radians();
        let hb = b.heading.to_radians();
        let heading = wrap_heading_deg(
            f64::atan2(lerp(ha.sin(), hb.sin()), lerp(ha.cos(), hb.cos())).to_degrees(),
        );

        out.push(BsmRecord {
            t,
            lat: lerp(a.lat, b.lat),
            lon: lerp(a.lon, b.lon),
            elev: lerp(a.elev, b.elev),
            speed: lerp(a.speed, b.speed),
            heading,
            steering_angle: lerp(a.steering_angle, b.steering_angle),
            accel_lon: lerp(a.accel_lon, b.accel_lon),
            accel_lat: lerp(a.accel_lat, b.accel_lat),
            accel_vert: lerp(a.accel_vert, b.accel_vert),
            yaw_rate: lerp(a.yaw_rate, b.yaw_rate),
            veh_length: lerp(a.veh_length, b.veh_length),
            veh_width: lerp(a.veh_width, b.veh_width),
        });
    }
    Trajectory::new(traj.scenario_id.clone(), rate_hz, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn plain_record(t: f64) -> BsmRecord {
        BsmRecord {
            t,
            lat: 42.28,
            lon: -83.74,
            elev: 260.0,
            speed: 10.0,
            heading: 45.0,
            steering_angle: 0.0,
            accel_lon: 0.0,
            accel_lat: 0.0,
            accel_vert: 0.0,
            yaw_rate: 0.0,
            veh_length: 5.0,
            veh_width: 1.9,
        }
    }

    #[test]
    fn parse_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scn.csv");
        let traj = Trajectory::new(
            "scn",
            10.0,
            (0..3).map(|i| plain_record(i as f64 * 0.1)).collect(),
        )
        .unwrap();
        write_trajectory_csv(&traj, &path).unwrap();
        let parsed = parse_trajectory_csv(&path).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed.rate_hz, 10.0);
        assert_eq!(parsed.scenario_id, "scn");
    }

    #[test]
    fn heading_360_is_rejected() {
        let mut rec = plain_record(0.0);
        rec.heading = 360.0;
        let err = Trajectory::new("s", 10.0, vec![rec]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { row: 1, .. }));
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,lat,lon\n0.0,42.0,-83.0\n").unwrap();
        match parse_trajectory_csv(&path) {
            Err(Error::MissingColumn { column }) => assert_eq!(column, "elev"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn non_monotone_timestamp_is_named() {
        let recs = vec![plain_record(0.0), plain_record(0.1), plain_record(0.1)];
        match Trajectory::new("s", 10.0, recs) {
            Err(Error::NonMonotoneTimestamp { row }) => assert_eq!(row, 3),
            other => panic!("expected NonMonotoneTimestamp, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let mut records = Vec::new();
        for i in 0..30 {
            let mut r = plain_record(i as f64 * 0.1);
            r.lat += i as f64 * 1.2345678941e-5;
            r.speed = 10.0 + (i as f64 * 0.731).sin();
            r.yaw_rate = 0.01 * (i as f64).cos();
            records.push(r);
        }
        let traj = Trajectory::new("rt", 10.0, records).unwrap();
        write_trajectory_csv(&traj, &path).unwrap();
        let parsed = parse_trajectory_csv(&path).unwrap();
        assert_eq!(parsed, traj);
    }

    #[test]
    fn enu_reference_maps_to_origin() {
        let traj = Trajectory::new(
            "s",
            10.0,
            (0..5).map(|i| plain_record(i as f64 * 0.1)).collect(),
        )
        .unwrap();
        let track = to_rotated_enu(&traj, 2).unwrap();
        assert_eq!(track.x[2], 0.0);
        assert_eq!(track.y[2], 0.0);
    }

    #[test]
    fn enu_point_north_of_equator_reference() {
        // Reference at (0, 0) heading north; a point 1e-4 deg further north
        // sits ~11.13 m straight ahead.
        let mut r0 = plain_record(0.0);
        r0.lat = 0.0;
        r0.lon = 0.0;
        r0.heading = 0.0;
        let mut r1 = r0;
        r1.t = 0.1;
        r1.lat = 1e-4;
        let traj = Trajectory::new("s", 10.0, vec![r0, r1]).unwrap();
        let track = to_rotated_enu(&traj, 0).unwrap();
        let expect = EARTH_RADIUS_M * 1e-4_f64.to_radians();
        assert!((track.x[1] - expect).abs() < 1e-2, "x = {}", track.x[1]);
        assert!(track.y[1].abs() < 1e-2);
        assert!((expect - 11.13).abs() < 0.01);
    }

    #[test]
    fn enu_rotated_reference_heading() {
        // Same point, but the reference drives east: straight-north offset
        // is now to the left, i.e. negative y.
        let mut r0 = plain_record(0.0);
        r0.lat = 0.0;
        r0.lon = 0.0;
        r0.heading = 90.0;
        let mut r1 = r0;
        r1.t = 0.1;
        r1.lat = 1e-4;
        let traj = Trajectory::new("s", 10.0, vec![r0, r1]).unwrap();
        let track = to_rotated_enu(&traj, 0).unwrap();
        let expect = EARTH_RADIUS_M * 1e-4_f64.to_radians();
        assert!(track.x[1].abs() < 1e-2);
        assert!((track.y[1] + expect).abs() < 1e-2);
    }

    #[test]
    fn enu_ref_index_out_of_range() {
        let traj = Trajectory::new("s", 10.0, vec![plain_record(0.0)]).unwrap();
        assert!(matches!(
            to_rotated_enu(&traj, 5),
            Err(Error::IndexOutOfRange { index: 5, len: 1 })
        ));
    }

    #[test]
    fn enu_geodetic_round_trip() {
        let (lat, lon) = enu_to_geodetic(120.0, -35.0, 42.28, -83.74, 77.0);
        let mut r0 = plain_record(0.0);
        r0.lat = 42.28;
        r0.lon = -83.74;
        r0.heading = 77.0;
        let mut r1 = r0;
        r1.t = 0.1;
        r1.lat = lat;
        r1.lon = lon;
        let traj = Trajectory::new("s", 10.0, vec![r0, r1]).unwrap();
        let track = to_rotated_enu(&traj, 0).unwrap();
        assert!((track.x[1] - 120.0).abs() < 1e-6);
        assert!((track.y[1] + 35.0).abs() < 1e-6);
    }

    #[test]
    fn resample_identity_on_grid() {
        let traj = Trajectory::new(
            "s",
            10.0,
            (0..20).map(|i| plain_record(i as f64 * 0.1)).collect(),
        )
        .unwrap();
        let out = resample_uniform(&traj, 10.0).unwrap();
        assert_eq!(out.len(), traj.len());
        for (a, b) in out.records.iter().zip(&traj.records) {
            assert!((a.t - b.t).abs() < 1e-9);
            assert!((a.speed - b.speed).abs() < 1e-9);
            assert!((a.heading - b.heading).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_linear_midpoint() {
        let mut r0 = plain_record(0.0);
        r0.speed = 0.0;
        let mut r1 = plain_record(0.2);
        r1.speed = 10.0;
        let traj = Trajectory::new("s", 5.0, vec![r0, r1]).unwrap();
        let out = resample_uniform(&traj, 10.0).unwrap();
        assert_eq!(out.len(), 3);
        assert!((out.records[1].speed - 5.0).abs() < 1e-12);
    }

    #[test]
    fn resample_heading_wraps_shortest_arc() {
        let mut r0 = plain_record(0.0);
        r0.heading = 350.0;
        let mut r1 = plain_record(0.2);
        r1.heading = 10.0;
        let traj = Trajectory::new("s", 5.0, vec![r0, r1]).unwrap();
        let out = resample_uniform(&traj, 10.0).unwrap();
        let mid = out.records[1].heading;
        assert!(mid < 1e-9 || mid > 360.0 - 1e-9, "midpoint = {mid}");
    }

    #[test]
    fn resample_rejects_single_record() {
        let traj = Trajectory::new("s", 10.0, vec![plain_record(0.0)]).unwrap();
        assert!(matches!(
            resample_uniform(&traj, 10.0),
            Err(Error::DegenerateInput(_))
        ));
    }

    fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
        let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
        let dp = p2 - p1;
        let dl = (lon2 - lon1).to_radians();
        let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().asin()
    }

    proptest! {
        // Planar small-area regime: distances from the reference are
        // preserved within 0.1% up to 1 km (great-circle oracle on the
        // same sphere).
        #[test]
        fn enu_preserves_short_distances(
            east in -1000.0_f64..1000.0,
            north in -1000.0_f64..1000.0,
            lat0 in -60.0_f64..60.0,
            heading in 0.0_f64..360.0,
        ) {
            let dist = (east * east + north * north).sqrt();
            prop_assume!(dist > 1.0 && dist <= 1000.0);
            let lat = lat0 + (north / EARTH_RADIUS_M).to_degrees();
            let lon = 10.0 + (east / (EARTH_RADIUS_M * lat0.to_radians().cos())).to_degrees();
            let mut r0 = plain_record(0.0);
            r0.lat = lat0;
            r0.lon = 10.0;
            r0.heading = heading;
            let mut r1 = r0;
            r1.t = 0.1;
            r1.lat = lat;
            r1.lon = lon;
            let traj = Trajectory::new("s", 10.0, vec![r0, r1]).unwrap();
            let track = to_rotated_enu(&traj, 0).unwrap();
            let planar = (track.x[1].powi(2) + track.y[1].powi(2)).sqrt();
            let truth = haversine(lat0, 10.0, lat, lon);
            prop_assert!((planar - truth).abs() <= 1e-3 * truth, "planar {planar} vs {truth}");
        }

        // Rotating the reference heading by delta rotates every output by
        // the same analytic matrix.
        #[test]
        fn enu_rotation_equivariance(
            east in -500.0_f64..500.0,
            north in -500.0_f64..500.0,
            heading in 0.0_f64..360.0,
            delta in 0.0_f64..360.0,
        ) {
            let lat = (north / EARTH_RADIUS_M).to_degrees();
            let lon = (east / EARTH_RADIUS_M).to_degrees();
            let make = |h: f64| {
                let mut r0 = plain_record(0.0);
                r0.lat = 0.0;
                r0.lon = 0.0;
                r0.heading = h;
                let mut r1 = r0;
                r1.t = 0.1;
                r1.lat = lat;
                r1.lon = lon;
                let traj = Trajectory::new("s", 10.0, vec![r0, r1]).unwrap();
                to_rotated_enu(&traj, 0).unwrap()
            };
            let base = make(heading);
            let turned = make((heading + delta).rem_euclid(360.0));
            let (s, c) = delta.to_radians().sin_cos();
            let expect_x = base.x[1] * c + base.y[1] * s;
            let expect_y = -base.x[1] * s + base.y[1] * c;
            prop_assert!((turned.x[1] - expect_x).abs() <= 1e-9 * (1.0 + expect_x.abs()));
            prop_assert!((turned.y[1] - expect_y).abs() <= 1e-9 * (1.0 + expect_y.abs()));
        }
    }
}
