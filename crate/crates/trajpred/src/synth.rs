//! Synthetic cut-in scenario generator.
//!
//! Produces desk-scale maneuver corpora with the four classic cut-in phases:
//! an intention phase of steady driving, a preparation phase that adjusts
//! speed, a transition phase that shifts the vehicle one lane over, and a
//! completion phase of steady driving in the new lane. The lateral motion is
//! a smooth accelerate-then-decelerate pulse (one full sine period of
//! lateral acceleration) whose double integral equals the lane offset, kept
//! inside the comfort bound of 0.2 g. All remaining kinematic channels are
//! derived so the track satisfies the bicycle model exactly before noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{enu_to_geodetic, BsmRecord, Trajectory};
use crate::error::{Error, Result};
use crate::seed;

const GRAVITY: f64 = 9.81;
/// Comfort bound on lateral acceleration, m/s^2.
pub const LATERAL_ACCEL_BOUND: f64 = 0.2 * GRAVITY;
/// Bicycle-model vehicle length used throughout, meters.
pub const VEHICLE_LENGTH_M: f64 = 5.0;

/// Additive Gaussian sensor noise, one std dev per channel. Defaults sit
/// below the deadband smoothing thresholds so smoothing has real work to do.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStd {
    pub speed: f64,
    pub heading_deg: f64,
    pub steering_deg: f64,
    pub accel: f64,
    pub yaw_rate: f64,
}

impl Default for NoiseStd {
    fn default() -> Self {
        NoiseStd {
            speed: 0.05,
            heading_deg: 0.3,
            steering_deg: 1.0,
            accel: 0.05,
            yaw_rate: 0.01,
        }
    }
}

impl NoiseStd {
    pub fn zero() -> Self {
        NoiseStd {
            speed: 0.0,
            heading_deg: 0.0,
            steering_deg: 0.0,
            accel: 0.0,
            yaw_rate: 0.0,
        }
    }
}

/// Parameters of one synthetic cut-in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutInSpec {
    /// Noise stream seed.
    pub seed: u64,
    /// Speed at scenario start, m/s.
    pub initial_speed: f64,
    /// Speed adjustment applied during the preparation phase, m/s.
    pub speed_delta: f64,
    /// Lateral displacement of the lane change, m (positive = right).
    pub lane_offset: f64,
    /// Durations of intention, preparation, transition, completion, s.
    pub phase_durations: [f64; 4],
    /// Cap on lateral acceleration, m/s^2, in (0, 0.2 g].
    pub lateral_accel_peak: f64,
    pub noise: NoiseStd,
    /// Geodetic anchor of the road frame.
    pub base_lat_deg: f64,
    pub base_lon_deg: f64,
    /// Road direction, degrees clockwise from north.
    pub road_heading_deg: f64,
}

impl Default for CutInSpec {
    fn default() -> Self {
        CutInSpec {
            seed: 0,
            initial_speed: 12.0,
            speed_delta: 1.5,
            lane_offset: 3.5,
            phase_durations: [2.5, 3.0, 4.0, 2.5],
            lateral_accel_peak: LATERAL_ACCEL_BOUND,
            noise: NoiseStd::default(),
            base_lat_deg: 42.28,
            base_lon_deg: -83.74,
            road_heading_deg: 90.0,
        }
    }
}

impl CutInSpec {
    /// Required peak of the sinusoidal lateral acceleration pulse for this
    /// offset and transition duration.
    pub fn required_lateral_peak(&self) -> f64 {
        let t_t = self.phase_durations[2];
        if self.lane_offset == 0.0 {
            0.0
        } else {
            2.0 * std::f64::consts::PI * self.lane_offset.abs() / (t_t * t_t)
        }
    }

    fn validate(&self) -> Result<()> {
        let total: f64 = self.phase_durations.iter().sum();
        if self.phase_durations.iter().any(|d| *d < 0.0) || total <= 0.0 {
            return Err(Error::InfeasibleSpec(
                "phase durations must be non-negative with positive total".into(),
            ));
        }
        if !(self.lateral_accel_peak > 0.0 && self.lateral_accel_peak <= LATERAL_ACCEL_BOUND) {
            return Err(Error::InfeasibleSpec(format!(
                "lateral_accel_peak {} outside (0, {LATERAL_ACCEL_BOUND}]",
                self.lateral_accel_peak
            )));
        }
        if self.initial_speed <= 0.0 {
            return Err(Error::InfeasibleSpec("initial_speed must be positive".into()));
        }
        let v_min = self.initial_speed + self.speed_delta.min(0.0);
        if v_min <= 0.0 {
            return Err(Error::InfeasibleSpec(
                "speed_delta would stop the vehicle".into(),
            ));
        }
        if self.lane_offset != 0.0 && self.phase_durations[2] <= 0.0 {
            return Err(Error::InfeasibleSpec(
                "nonzero lane_offset with zero transition duration".into(),
            ));
        }
        let amp = self.required_lateral_peak();
        if amp > self.lateral_accel_peak {
            return Err(Error::InfeasibleSpec(format!(
                "lane_offset {} m in {} s needs |a_lat| = {:.3} m/s^2 > peak {:.3}",
                self.lane_offset, self.phase_durations[2], amp, self.lateral_accel_peak
            )));
        }
        // Peak lateral speed must stay well below the travel speed so the
        // heading angle asin() is defined.
        let v_lat_max = if self.phase_durations[2] > 0.0 {
            2.0 * self.lane_offset.abs() / self.phase_durations[2]
        } else {
            0.0
        };
        if v_lat_max >= 0.9 * v_min {
            return Err(Error::InfeasibleSpec(format!(
                "lateral speed {v_lat_max:.2} m/s too close to travel speed {v_min:.2} m/s"
            )));
        }
        Ok(())
    }
}

/// Continuous-time profiles of the maneuver, all closed-form.
struct Profile<'a> {
    spec: &'a CutInSpec,
    /// Phase boundary times.
    t1: f64,
    t2: f64,
    t3: f64,
    /// Lateral pulse amplitude (signed).
    amp: f64,
}

impl<'a> Profile<'a> {
    fn new(spec: &'a CutInSpec) -> Self {
        let t1 = spec.phase_durations[0];
        let t2 = t1 + spec.phase_durations[1];
        let t3 = t2 + spec.phase_durations[2];
        let amp = spec.required_lateral_peak() * spec.lane_offset.signum();
        Profile { spec, t1, t2, t3, amp }
    }

    /// Travel speed (raised-cosine ramp during preparation).
    fn speed(&self, t: f64) -> f64 {
        let v0 = self.spec.initial_speed;
        let dv = self.spec.speed_delta;
        if t <= self.t1 {
            v0
        } else if t < self.t2 {
            let s = (t - self.t1) / (self.t2 - self.t1);
            v0 + dv * (1.0 - (std::f64::consts::PI * s).cos()) / 2.0
        } else {
            v0 + dv
        }
    }

    fn speed_dot(&self, t: f64) -> f64 {
        if t > self.t1 && t < self.t2 {
            let tp = self.t2 - self.t1;
            let s = (t - self.t1) / tp;
            self.spec.speed_delta * std::f64::consts::PI / (2.0 * tp)
                * (std::f64::consts::PI * s).sin()
        } else {
            0.0
        }
    }

    fn lateral_accel(&self, t: f64) -> f64 {
        let t_t = self.t3 - self.t2;
        if t > self.t2 && t < self.t3 && t_t > 0.0 {
            let tau = t - self.t2;
            self.amp * (2.0 * std::f64::consts::PI * tau / t_t).sin()
        } else {
            0.0
        }
    }

    fn lateral_speed(&self, t: f64) -> f64 {
        let t_t = self.t3 - self.t2;
        if t > self.t2 && t < self.t3 && t_t > 0.0 {
            let tau = t - self.t2;
            self.amp * t_t / (2.0 * std::f64::consts::PI)
                * (1.0 - (2.0 * std::f64::consts::PI * tau / t_t).cos())
        } else {
            0.0
        }
    }

    /// Closed-form lateral position (double integral of the pulse).
    fn lateral_pos(&self, t: f64) -> f64 {
        let t_t = self.t3 - self.t2;
        if t <= self.t2 || t_t <= 0.0 {
            0.0
        } else if t < self.t3 {
            let tau = t - self.t2;
            let w = 2.0 * std::f64::consts::PI / t_t;
            self.amp / w * (tau - (w * tau).sin() / w)
        } else {
            self.spec.lane_offset
        }
    }

    /// Heading relative to the road, clockwise positive.
    fn heading(&self, t: f64) -> f64 {
        (self.lateral_speed(t) / self.speed(t)).asin()
    }

    /// Yaw rate: d/dt asin(v_lat / v).
    fn heading_dot(&self, t: f64) -> f64 {
        let v = self.speed(t);
        let v_lat = self.lateral_speed(t);
        let w = v_lat / v;
        let w_dot = (self.lateral_accel(t) * v - v_lat * self.speed_dot(t)) / (v * v);
        w_dot / (1.0 - w * w).sqrt()
    }

    /// Longitudinal speed along the road: sqrt(v^2 - v_lat^2).
    fn long_speed(&self, t: f64) -> f64 {
        let v = self.speed(t);
        let v_lat = self.lateral_speed(t);
        (v * v - v_lat * v_lat).max(0.0).sqrt()
    }
}

/// Generates one cut-in trajectory at `rate_hz`. The track is exact bicycle
/// kinematics before the (seeded) additive noise pass.
pub fn generate_cutin(spec: &CutInSpec, rate_hz: f64) -> Result<Trajectory> {
    spec.validate()?;
    let profile = Profile::new(spec);
    let total: f64 = spec.phase_durations.iter().sum();
    let dt = 1.0 / rate_hz;
    let n = ((total * rate_hz) + 1e-9).floor() as usize + 1;

    // Longitudinal position by Simpson's rule over each sample interval;
    // the integrand is smooth so this is exact to well below a millimeter.
    let mut xs = Vec::with_capacity(n);
    let mut x = 0.0;
    xs.push(0.0);
    const SUB: usize = 8;
    for i in 1..n {
        let a = (i - 1) as f64 * dt;
        let h = dt / SUB as f64;
        let mut acc = 0.0;
        for k in 0..SUB {
            let lo = a + k as f64 * h;
            acc += h / 6.0
                * (profile.long_speed(lo)
                    + 4.0 * profile.long_speed(lo + h / 2.0)
                    + profile.long_speed(lo + h));
        }
        x += acc;
        xs.push(x);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gauss = |rng: &mut ChaCha8Rng, std: f64| -> f64 {
        if std > 0.0 {
            Normal::new(0.0, std).unwrap().sample(rng)
        } else {
            // Keep the stream aligned whether or not a channel is noisy.
            let _ = rng.random::<f64>();
            0.0
        }
    };

    let mut records = Vec::with_capacity(n);
    for (i, &xi) in xs.iter().enumerate() {
        let t = i as f64 * dt;
        let v = profile.speed(t);
        let theta = profile.heading(t);
        let theta_dot = profile.heading_dot(t);
        let phi = (VEHICLE_LENGTH_M * theta_dot / v).atan();
        let yi = profile.lateral_pos(t);
        let (lat, lon) = enu_to_geodetic(
            xi,
            yi,
            spec.base_lat_deg,
            spec.base_lon_deg,
            spec.road_heading_deg,
        );

        let speed = (v + gauss(&mut rng, spec.noise.speed)).max(0.0);
        let heading = crate::data::wrap_heading_deg(
            spec.road_heading_deg + theta.to_degrees() + gauss(&mut rng, spec.noise.heading_deg),
        );
        let steering_angle = phi.to_degrees() + gauss(&mut rng, spec.noise.steering_deg);
        let accel_lon = profile.speed_dot(t) + gauss(&mut rng, spec.noise.accel);
        let accel_lat = v * theta_dot + gauss(&mut rng, spec.noise.accel);
        let accel_vert = gauss(&mut rng, spec.noise.accel);
        let yaw_rate = theta_dot + gauss(&mut rng, spec.noise.yaw_rate);

        records.push(BsmRecord {
            t,
            lat,
            lon,
            elev: 260.0,
            speed,
            heading,
            steering_angle,
            accel_lon,
            accel_lat,
            accel_vert,
            yaw_rate,
            veh_length: VEHICLE_LENGTH_M,
            veh_width: 1.9,
        });
    }
    Trajectory::new(format!("cutin_{:016x}", spec.seed), rate_hz, records)
}

/// Closed interval a corpus parameter is drawn from (uniformly).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

/// Parameter ranges for corpus generation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRanges {
    pub initial_speed: Interval,
    pub speed_delta: Interval,
    /// Magnitude of the lane offset; the direction is drawn separately.
    pub lane_offset_abs: Interval,
    pub random_offset_sign: bool,
    pub intention: Interval,
    pub preparation: Interval,
    pub transition: Interval,
    pub completion: Interval,
    pub road_heading: Interval,
    pub lateral_accel_peak: f64,
    pub noise: NoiseStd,
    pub base_lat_deg: f64,
    pub base_lon_deg: f64,
}

impl Default for CorpusRanges {
    fn default() -> Self {
        CorpusRanges {
            initial_speed: Interval::new(8.0, 16.0),
            speed_delta: Interval::new(-2.5, 3.0),
            lane_offset_abs: Interval::new(3.2, 3.8),
            random_offset_sign: true,
            intention: Interval::new(2.0, 3.5),
            preparation: Interval::new(2.0, 3.5),
            transition: Interval::new(3.8, 5.5),
            completion: Interval::new(2.5, 4.0),
            road_heading: Interval::new(0.0, 359.99),
            lateral_accel_peak: LATERAL_ACCEL_BOUND,
            noise: NoiseStd::default(),
            base_lat_deg: 42.28,
            base_lon_deg: -83.74,
        }
    }
}

impl CorpusRanges {
    fn draw(&self, rng: &mut ChaCha8Rng, noise_seed: u64) -> CutInSpec {
        let initial_speed = self.initial_speed.sample(rng);
        let speed_delta = self.speed_delta.sample(rng);
        let mut lane_offset = self.lane_offset_abs.sample(rng);
        if self.random_offset_sign && rng.random::<bool>() {
            lane_offset = -lane_offset;
        }
        let phase_durations = [
            self.intention.sample(rng),
            self.preparation.sample(rng),
            self.transition.sample(rng),
            self.completion.sample(rng),
        ];
        let road_heading_deg = self.road_heading.sample(rng);
        CutInSpec {
            seed: noise_seed,
            initial_speed,
            speed_delta,
            lane_offset,
            phase_durations,
            lateral_accel_peak: self.lateral_accel_peak,
            noise: self.noise,
            base_lat_deg: self.base_lat_deg,
            base_lon_deg: self.base_lon_deg,
            road_heading_deg,
        }
    }
}

/// One generated scenario with the spec that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedScenario {
    pub id: String,
    pub spec: CutInSpec,
    pub trajectory: Trajectory,
}

/// Corpus manifest written next to the scenario files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub n: usize,
    pub rate_hz: f64,
    pub ranges: CorpusRanges,
    pub scenarios: Vec<(String, CutInSpec)>,
}

/// Generates `n` scenarios with parameters drawn uniformly from `ranges`.
/// Fully reproducible from `seed`; infeasible draws are skipped and redrawn
/// from a derived stream.
pub fn generate_corpus(
    n: usize,
    seed: u64,
    ranges: &CorpusRanges,
    rate_hz: f64,
) -> Result<Vec<GeneratedScenario>> {
    if n == 0 {
        return Err(Error::DegenerateInput("corpus size must be at least 1"));
    }
    let param_base = seed::derive(seed, "corpus-params");
    let noise_base = seed::derive(seed, "corpus-noise");

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut scenario = None;
        for attempt in 0..64u64 {
            let slot = (i as u64) << 8 | attempt;
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(param_base, slot));
            let spec = ranges.draw(&mut rng, seed::derive_indexed(noise_base, slot));
            match generate_cutin(&spec, rate_hz) {
                Ok(mut traj) => {
                    let id = format!("cutin_{i:03}");
                    traj.scenario_id = id.clone();
                    scenario = Some(GeneratedScenario {
                        id,
                        spec,
                        trajectory: traj,
                    });
                    break;
                }
                Err(Error::InfeasibleSpec(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        match scenario {
            Some(s) => out.push(s),
            None => {
                return Err(Error::InfeasibleSpec(format!(
                    "no feasible draw for scenario {i} after 64 attempts"
                )))
            }
        }
    }
    Ok(out)
}
