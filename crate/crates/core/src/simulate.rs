//! Synthetic accelerometer traces with exact ground truth.
//!
//! A trip is laid out as a timeline of dwells and motion pieces. Each motion
//! piece has a raised-cosine acceleration pulse at the start, a mirrored
//! deceleration pulse at the end and a cruise in between. While moving, the
//! train sways with an amplitude proportional to its speed and adds per-axis
//! Gaussian vibration; while standing, only the dwell noise remains. The
//! train-frame signal is rotated into a fixed random device orientation.
//!
//! All noise levels here are calibration choices for desk testing, not
//! measured values.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::AccelSample;
use crate::trip::{StopClass, TripPlan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("profile: {0}")]
    Profile(String),
    #[error("script: {0}")]
    Script(String),
    #[error("scripted intervals overlap: {0}")]
    Overlap(String),
    #[error("sample rate must be positive and finite, got {0}")]
    Rate(f64),
}

/// Vibration and acceleration characteristics of a train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainProfile {
    /// Per-axis noise std-dev at cruise speed, m/s².
    pub cruise_noise_sigma: f64,
    /// Per-axis noise std-dev while standing, m/s².
    pub dwell_noise_sigma: f64,
    /// Length of the acceleration and deceleration pulses, s.
    pub ramp_seconds: f64,
    /// Peak longitudinal acceleration of the pulses, m/s².
    pub ramp_peak: f64,
    /// Deterministic lateral sway at cruise speed, m/s².
    #[serde(default)]
    pub sway_amplitude: f64,
    #[serde(default = "default_sway_hz")]
    pub sway_hz: f64,
    /// Share of cruise speed at which vibration reaches full strength.
    #[serde(default = "default_full_vibration_speed")]
    pub full_vibration_speed: f64,
}

fn default_full_vibration_speed() -> f64 {
    1.0
}

fn default_sway_hz() -> f64 {
    1.3
}

impl TrainProfile {
    /// Gentle, long acceleration pulses and a fairly quiet ride.
    pub fn london_like() -> Self {
        TrainProfile {
            cruise_noise_sigma: 0.22,
            dwell_noise_sigma: 0.025,
            ramp_seconds: 12.0,
            ramp_peak: 0.15,
            sway_amplitude: 0.12,
            sway_hz: 1.1,
            full_vibration_speed: 0.3,
        }
    }

    /// Short, strong acceleration pulses and a rougher ride.
    pub fn cologne_like() -> Self {
        TrainProfile {
            cruise_noise_sigma: 0.32,
            dwell_noise_sigma: 0.03,
            ramp_seconds: 7.0,
            ramp_peak: 1.1,
            sway_amplitude: 0.18,
            sway_hz: 1.6,
            full_vibration_speed: 1.0,
        }
    }

    /// No random noise at all: the trace is the deterministic ramp and sway
    /// profile, exactly zero while standing. The sway alone keeps cruising
    /// above the default threshold.
    pub fn noise_free() -> Self {
        TrainProfile {
            cruise_noise_sigma: 0.0,
            dwell_noise_sigma: 0.0,
            sway_amplitude: 0.5,
            ..Self::cologne_like()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "london" => Some(Self::london_like()),
            "cologne" => Some(Self::cologne_like()),
            "noise-free" => Some(Self::noise_free()),
            _ => None,
        }
    }

    pub fn is_noise_free(&self) -> bool {
        self.cruise_noise_sigma == 0.0 && self.dwell_noise_sigma == 0.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.cruise_noise_sigma) || !finite_nonneg(self.dwell_noise_sigma) {
            return Err(SimError::Profile(
                "noise sigmas must be finite and >= 0".into(),
            ));
        }
        if !self.is_noise_free() && self.cruise_noise_sigma <= self.dwell_noise_sigma {
            return Err(SimError::Profile(
                "cruise_noise_sigma must exceed dwell_noise_sigma".into(),
            ));
        }
        if !(self.ramp_seconds > 0.0) || !(self.ramp_peak > 0.0) {
            return Err(SimError::Profile(
                "ramp_seconds and ramp_peak must be > 0".into(),
            ));
        }
        if !(self.full_vibration_speed > 0.0 && self.full_vibration_speed <= 1.0) {
            return Err(SimError::Profile(
                "full_vibration_speed must lie in (0, 1]".into(),
            ));
        }
        if !finite_nonneg(self.sway_amplitude) || !finite_nonneg(self.sway_hz) {
            return Err(SimError::Profile("sway must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn cruise_speed(&self) -> f64 {
        self.ramp_peak * self.ramp_seconds / 2.0
    }
}

/// Per-segment ride texture: overall vibration scale and a slow periodic
/// modulation (smooth and rough stretches of track).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RideQuality {
    pub scale: f64,
    #[serde(default)]
    pub modulation_depth: f64,
    #[serde(default = "default_modulation_period")]
    pub modulation_period_s: f64,
}

fn default_modulation_period() -> f64 {
    10.0
}

impl Default for RideQuality {
    fn default() -> Self {
        RideQuality {
            scale: 1.0,
            modulation_depth: 0.0,
            modulation_period_s: default_modulation_period(),
        }
    }
}

/// An unscheduled halt. `segment` counts trip segments from the origin;
/// `at_fraction` is the share of the segment's motion time completed before
/// the halt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InBetweenHalt {
    pub segment: usize,
    pub at_fraction: f64,
    pub duration_s: f64,
}

/// Phone handling: Gaussian-enveloped noise on all axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub start_s: f64,
    pub duration_s: f64,
    pub amplitude: f64,
}

impl Burst {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    fn envelope(&self, t_s: f64) -> f64 {
        if t_s < self.start_s || t_s > self.end_s() {
            return 0.0;
        }
        let mid = self.start_s + self.duration_s / 2.0;
        let sigma = self.duration_s / 6.0;
        (-0.5 * ((t_s - mid) / sigma).powi(2)).exp()
    }
}

/// Everything needed to synthesize one trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripScript {
    pub plan: TripPlan,
    /// Actual motion seconds per trip segment.
    pub travel_s: Vec<f64>,
    /// Stand time per trip station, origin first (before departure) and
    /// destination last (after arrival).
    pub dwell_s: Vec<f64>,
    #[serde(default)]
    pub in_between: Vec<InBetweenHalt>,
    #[serde(default)]
    pub bursts: Vec<Burst>,
    /// Empty, or one entry per trip segment.
    #[serde(default)]
    pub ride_quality: Vec<RideQuality>,
    #[serde(default)]
    pub device_bias: [f64; 3],
    /// Timetable departure from the origin, seconds from trace start. When
    /// absent the train leaves on time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduled_departure_s: Option<f64>,
    pub rng_seed: u64,
}

impl TripScript {
    /// A trip that runs exactly to schedule with fixed dwells.
    pub fn on_schedule(plan: TripPlan, dwell_s: f64, rng_seed: u64) -> Self {
        let travel_s = plan.trip_durations().to_vec();
        let dwell = vec![dwell_s; plan.segment_count() + 1];
        TripScript {
            plan,
            travel_s,
            dwell_s: dwell,
            in_between: Vec::new(),
            bursts: Vec::new(),
            ride_quality: Vec::new(),
            device_bias: [0.0; 3],
            scheduled_departure_s: None,
            rng_seed,
        }
    }

    pub fn scheduled_departure_ms(&self) -> f64 {
        self.scheduled_departure_s.unwrap_or(self.dwell_s[0]) * 1000.0
    }

    pub fn total_s(&self) -> f64 {
        self.travel_s.iter().sum::<f64>()
            + self.dwell_s.iter().sum::<f64>()
            + self.in_between.iter().map(|h| h.duration_s).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let segs = self.plan.segment_count();
        if self.travel_s.len() != segs {
            return Err(SimError::Script(format!(
                "travel_s has {} entries, plan has {segs} segments",
                self.travel_s.len()
            )));
        }
        if self.dwell_s.len() != segs + 1 {
            return Err(SimError::Script(format!(
                "dwell_s has {} entries, plan has {} stations",
                self.dwell_s.len(),
                segs + 1
            )));
        }
        if let Some((i, v)) = self
            .travel_s
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(SimError::Script(format!(
                "travel_s[{i}] must be > 0, got {v}"
            )));
        }
        if let Some((i, v)) = self
            .dwell_s
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(SimError::Script(format!(
                "dwell_s[{i}] must be >= 0, got {v}"
            )));
        }
        if !self.ride_quality.is_empty() && self.ride_quality.len() != segs {
            return Err(SimError::Script(format!(
                "ride_quality has {} entries, expected 0 or {segs}",
                self.ride_quality.len()
            )));
        }
        for (i, q) in self.ride_quality.iter().enumerate() {
            if !(q.scale >= 0.0) || !(q.modulation_depth >= 0.0) || !(q.modulation_period_s > 0.0) {
                return Err(SimError::Script(format!("ride_quality[{i}] is invalid")));
            }
        }
        for (i, h) in self.in_between.iter().enumerate() {
            if h.segment >= segs {
                return Err(SimError::Script(format!(
                    "in_between[{i}].segment {} out of range",
                    h.segment
                )));
            }
            if !(h.at_fraction > 0.0 && h.at_fraction < 1.0) {
                return Err(SimError::Script(format!(
                    "in_between[{i}].at_fraction must lie in (0, 1)"
                )));
            }
            if !(h.duration_s > 0.0 && h.duration_s.is_finite()) {
                return Err(SimError::Script(format!(
                    "in_between[{i}].duration_s must be > 0"
                )));
            }
        }
        for seg in 0..segs {
            let mut fr: Vec<f64> = self
                .in_between
                .iter()
                .filter(|h| h.segment == seg)
                .map(|h| h.at_fraction)
                .collect();
            fr.sort_by(f64::total_cmp);
            if fr.windows(2).any(|w| w[0] == w[1]) {
                return Err(SimError::Overlap(format!(
                    "two in-between halts at the same point of segment {seg}"
                )));
            }
        }
        let total = self.total_s();
        let mut bursts = self.bursts.clone();
        bursts.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for b in &bursts {
            if !(b.start_s >= 0.0)
                || !(b.duration_s > 0.0)
                || !(b.amplitude >= 0.0)
                || !b.end_s().is_finite()
            {
                return Err(SimError::Script(format!(
                    "burst at {} s is invalid",
                    b.start_s
                )));
            }
            if b.end_s() > total {
                return Err(SimError::Script(format!(
                    "burst at {} s runs past the end of the trip",
                    b.start_s
                )));
            }
        }
        if let Some(w) = bursts.windows(2).find(|w| w[1].start_s < w[0].end_s()) {
            return Err(SimError::Overlap(format!(
                "bursts at {} s and {} s",
                w[0].start_s, w[1].start_s
            )));
        }
        if self.device_bias.iter().any(|b| !b.is_finite()) {
            return Err(SimError::Script("device_bias must be finite".into()));
        }
        Ok(())
    }
}

/// One scripted stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStop {
    pub onset_ms: f64,
    pub end_ms: f64,
    pub label: StopClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    /// The origin stop, where tracking starts.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub start: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub stops: Vec<TruthStop>,
}

impl GroundTruth {
    /// Intervals must be ordered and disjoint.
    pub fn validate(&self) -> Result<(), SimError> {
        for (i, s) in self.stops.iter().enumerate() {
            if !(s.end_ms >= s.onset_ms) {
                return Err(SimError::Script(format!(
                    "truth[{i}] ends before it starts"
                )));
            }
        }
        if let Some(i) = self
            .stops
            .windows(2)
            .position(|w| w[1].onset_ms < w[0].end_ms)
        {
            return Err(SimError::Overlap(format!(
                "truth entries {i} and {}",
                i + 1
            )));
        }
        Ok(())
    }

    /// Drops in-between stops; used when scoring timetable predictions.
    pub fn stations_only(&self) -> GroundTruth {
        GroundTruth {
            stops: self
                .stops
                .iter()
                .filter(|s| s.label == StopClass::StationStop)
                .cloned()
                .collect(),
        }
    }

    /// Scripted departure from the origin, when the first stop is the origin.
    pub fn departure_ms(&self) -> Option<f64> {
        self.stops.first().filter(|s| s.start).map(|s| s.end_ms)
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Dwell {
        start: f64,
        end: f64,
    },
    Motion {
        start: f64,
        end: f64,
        seg: usize,
        phase: f64,
    },
}

impl Piece {
    fn end(&self) -> f64 {
        match *self {
            Piece::Dwell { end, .. } | Piece::Motion { end, .. } => end,
        }
    }
}

fn layout(script: &TripScript, phases: &[f64]) -> (Vec<Piece>, GroundTruth) {
    let plan = &script.plan;
    let stations = plan.stations();
    let mut pieces = Vec::new();
    let mut truth = Vec::new();
    let mut t = 0.0;

    let d0 = script.dwell_s[0];
    pieces.push(Piece::Dwell {
        start: 0.0,
        end: d0,
    });
    truth.push(TruthStop {
        onset_ms: 0.0,
        end_ms: d0 * 1000.0,
        label: StopClass::StationStop,
        station_id: Some(stations[0].id.clone()),
        fraction: None,
        start: true,
    });
    t += d0;

    for seg in 0..plan.segment_count() {
        let travel = script.travel_s[seg];
        let mut halts: Vec<&InBetweenHalt> = script
            .in_between
            .iter()
            .filter(|h| h.segment == seg)
            .collect();
        halts.sort_by(|a, b| a.at_fraction.total_cmp(&b.at_fraction));
        let mut done = 0.0;
        for h in halts {
            let run = h.at_fraction * travel - done;
            pieces.push(Piece::Motion {
                start: t,
                end: t + run,
                seg,
                phase: phases[seg],
            });
            t += run;
            done += run;
            pieces.push(Piece::Dwell {
                start: t,
                end: t + h.duration_s,
            });
            truth.push(TruthStop {
                onset_ms: t * 1000.0,
                end_ms: (t + h.duration_s) * 1000.0,
                label: StopClass::InBetweenStop,
                station_id: None,
                fraction: Some(h.at_fraction),
                start: false,
            });
            t += h.duration_s;
        }
        let run = travel - done;
        pieces.push(Piece::Motion {
            start: t,
            end: t + run,
            seg,
            phase: phases[seg],
        });
        t += run;
        let dwell = script.dwell_s[seg + 1];
        pieces.push(Piece::Dwell {
            start: t,
            end: t + dwell,
        });
        truth.push(TruthStop {
            onset_ms: t * 1000.0,
            end_ms: (t + dwell) * 1000.0,
            label: StopClass::StationStop,
            station_id: Some(stations[seg + 1].id.clone()),
            fraction: None,
            start: false,
        });
        t += dwell;
    }
    (pieces, GroundTruth { stops: truth })
}

/// Raised-cosine pulse on [0, 1], zero at both ends, peak 1 in the middle.
fn pulse(u: f64) -> f64 {
    0.5 * (1.0 - (2.0 * PI * u).cos())
}

/// Integral of `pulse` from 0 to `tau` over a pulse of length `r`.
fn pulse_integral(tau: f64, r: f64) -> f64 {
    0.5 * (tau - r / (2.0 * PI) * (2.0 * PI * tau / r).sin())
}

/// Longitudinal acceleration and speed (as a fraction of cruise speed) at
/// `tau` seconds into a motion piece of length `len`.
fn kinematics(profile: &TrainProfile, tau: f64, len: f64) -> (f64, f64) {
    let r = profile.ramp_seconds.min(len / 2.0);
    let a = profile.ramp_peak;
    let v_ref = profile.cruise_speed();
    let tau = tau.clamp(0.0, len);
    let (acc, speed) = if tau < r {
        (a * pulse(tau / r), a * pulse_integral(tau, r))
    } else if tau <= len - r {
        (0.0, a * r / 2.0)
    } else {
        let td = tau - (len - r);
        (-a * pulse(td / r), a * r / 2.0 - a * pulse_integral(td, r))
    };
    (acc, (speed / v_ref).clamp(0.0, 1.0))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let mut q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    q.iter_mut().for_each(|v| *v /= norm);
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Synthesizes a trace and its ground truth. Deterministic in
/// `script.rng_seed`.
pub fn generate(
    script: &TripScript,
    profile: &TrainProfile,
    rate_hz: f64,
) -> Result<(Vec<AccelSample>, GroundTruth), SimError> {
    if !(rate_hz > 0.0) || !rate_hz.is_finite() {
        return Err(SimError::Rate(rate_hz));
    }
    profile.validate()?;
    script.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(script.rng_seed);
    let rot = random_rotation(&mut rng);
    let phases: Vec<f64> = (0..script.plan.segment_count())
        .map(|_| rng.random::<f64>() * 2.0 * PI)
        .collect();
    let (pieces, truth) = layout(script, &phases);

    let total = script.total_s();
    let count = (total * rate_hz + 1e-9).floor() as usize + 1;
    let mut trace = Vec::with_capacity(count);
    let mut idx = 0;
    let mut bursts = script.bursts.clone();
    bursts.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));

    for k in 0..count {
        let t = k as f64 / rate_hz;
        while idx + 1 < pieces.len() && t >= pieces[idx].end() {
            idx += 1;
        }
        let noise: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));

        let mut v = match pieces[idx] {
            Piece::Dwell { .. } => {
                let s = profile.dwell_noise_sigma;
                [s * noise[0], s * noise[1], s * noise[2]]
            }
            Piece::Motion {
                start,
                end,
                seg,
                phase,
            } => {
                let q = script.ride_quality.get(seg).copied().unwrap_or_default();
                let wave =
                    1.0 + q.modulation_depth * (2.0 * PI * t / q.modulation_period_s + phase).sin();
                let (acc, speed) = kinematics(profile, t - start, end - start);
                let vib = (speed / profile.full_vibration_speed).min(1.0) * q.scale * wave.max(0.0);
                let sigma = profile.dwell_noise_sigma
                    + (profile.cruise_noise_sigma - profile.dwell_noise_sigma) * vib;
                let sway = profile.sway_amplitude * vib;
                let w = 2.0 * PI * profile.sway_hz * t;
                [
                    acc + sigma * noise[0],
                    sway * w.cos() + sigma * noise[1],
                    sway * w.sin() + sigma * noise[2],
                ]
            }
        };

        for b in bursts.iter().filter(|b| t >= b.start_s && t <= b.end_s()) {
            let e = b.amplitude * b.envelope(t);
            v[0] += e * noise[3];
            v[1] += e * noise[4];
            v[2] += e * noise[5];
        }

        let d: [f64; 3] =
            std::array::from_fn(|r| rot[r][0] * v[0] + rot[r][1] * v[1] + rot[r][2] * v[2]);
        trace.push(AccelSample {
            t_ms: k as f64 * 1000.0 / rate_hz,
            x: d[0] + script.device_bias[0],
            y: d[1] + script.device_bias[1],
            z: d[2] + script.device_bias[2],
        });
    }
    Ok((trace, truth))
}

/// Trip delay model.
///
/// Most trips run close to schedule; a share of them (`disruption_prob`) are
/// slowed down as a whole by a factor `exp(s·|Z|)`. The spread `s` is solved
/// so that the standard deviation of the total trip multiplier equals
/// `sigma_fraction`. Each segment also gets a small independent jitter.
/// Multipliers are floored at 0.3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub sigma_fraction: f64,
    pub disruption_prob: f64,
}

/// Trip-time spread observed on a 29 minute trip with a 7.12 minute
/// standard deviation.
pub const DEFAULT_DELAY_SIGMA: f64 = 7.12 / 29.0;
const DELAY_FLOOR: f64 = 0.3;
const JITTER_PER_SIGMA: f64 = 0.04;

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            sigma_fraction: DEFAULT_DELAY_SIGMA,
            disruption_prob: 0.4,
        }
    }
}

/// E[exp(c·|Z|)] for standard normal Z, by Simpson's rule.
fn half_normal_mgf(c: f64) -> f64 {
    let upper = 12.0 + c.abs();
    let steps = 4000;
    let h = upper / steps as f64;
    let f = |z: f64| (c * z - 0.5 * z * z).exp() * (2.0 / (2.0 * PI).sqrt());
    let mut acc = f(0.0) + f(upper);
    for i in 1..steps {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

impl DelayModel {
    fn multiplier_std(&self, spread: f64) -> f64 {
        let p = self.disruption_prob;
        let m1 = (1.0 - p) + p * half_normal_mgf(spread);
        let m2 = (1.0 - p) + p * half_normal_mgf(2.0 * spread);
        (m2 - m1 * m1).max(0.0).sqrt()
    }

    /// Spread of the disruption factor matching `sigma_fraction`.
    pub fn disruption_spread(&self) -> f64 {
        if self.sigma_fraction <= 0.0 || self.disruption_prob <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, 4.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.multiplier_std(mid) < self.sigma_fraction {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Actual seconds for each scheduled segment.
    pub fn sample<R: Rng + ?Sized>(&self, scheduled_s: &[f64], rng: &mut R) -> Vec<f64> {
        let sigma = self.sigma_fraction.max(0.0);
        if sigma == 0.0 {
            return scheduled_s.to_vec();
        }
        let disrupted = rng.random::<f64>() < self.disruption_prob;
        let z: f64 = rng.sample(StandardNormal);
        let trip = if disrupted {
            (self.disruption_spread() * z.abs()).exp()
        } else {
            1.0
        };
        let jitter = JITTER_PER_SIGMA * sigma;
        scheduled_s
            .iter()
            .map(|&s| {
                let zj: f64 = rng.sample(StandardNormal);
                s * (trip * (1.0 + jitter * zj)).max(DELAY_FLOOR)
            })
            .collect()
    }
}

/// Samples actual segment times for every segment of `route` under the
/// default delay model with the given spread.
pub fn sample_delays<R: Rng + ?Sized>(
    route: &crate::trip::Route,
    sigma_fraction: f64,
    rng: &mut R,
) -> Vec<f64> {
    DelayModel {
        sigma_fraction,
        ..DelayModel::default()
    }
    .sample(&route.segment_durations_s, rng)
}

/// Inclusive range used by [`Scenario`] draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Span { min, max }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.max <= self.min {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

/// Recipe for random trip scripts, used to build corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub profile: TrainProfile,
    pub delays: DelayModel,
    pub origin_dwell_s: Span,
    pub dwell_s: Span,
    /// Std-dev of the origin departure against the timetable, seconds.
    pub departure_offset_sigma_s: f64,
    pub in_between_prob: f64,
    pub in_between_fraction: Span,
    pub in_between_duration_s: Span,
    /// Halts are only placed where the train moves at least this long on
    /// both sides of them.
    #[serde(default)]
    pub in_between_min_run_s: f64,
    /// Probability that a segment runs on smooth, undulating track.
    pub smooth_segment_prob: f64,
    pub smooth_quality: (Span, Span, Span),
    /// Probability of a handling burst per cruise stretch and per dwell.
    pub cruise_burst_prob: f64,
    pub dwell_burst_prob: f64,
    pub cruise_burst_s: Span,
    pub dwell_burst_s: Span,
    pub burst_amplitude: Span,
}

impl Scenario {
    /// On-time trips with in-between halts and some smooth track.
    pub fn london_like() -> Self {
        Scenario {
            profile: TrainProfile::london_like(),
            delays: DelayModel {
                sigma_fraction: 0.0,
                ..DelayModel::default()
            },
            origin_dwell_s: Span::new(25.0, 40.0),
            dwell_s: Span::new(25.0, 45.0),
            departure_offset_sigma_s: 0.0,
            in_between_prob: 0.15,
            in_between_fraction: Span::new(0.2, 0.5),
            in_between_duration_s: Span::new(20.0, 60.0),
            in_between_min_run_s: 20.0,
            smooth_segment_prob: 0.15,
            smooth_quality: (
                Span::new(0.75, 0.85),
                Span::new(0.7, 0.8),
                Span::new(8.5, 9.5),
            ),
            cruise_burst_prob: 0.0,
            dwell_burst_prob: 0.0,
            cruise_burst_s: Span::new(1.0, 3.0),
            dwell_burst_s: Span::new(1.0, 3.0),
            burst_amplitude: Span::new(0.3, 1.0),
        }
    }

    /// Rough track, strong acceleration and passengers jostling the phone
    /// at platforms.
    pub fn cologne_like() -> Self {
        Scenario {
            profile: TrainProfile::cologne_like(),
            smooth_segment_prob: 0.0,
            dwell_s: Span::new(35.0, 50.0),
            dwell_burst_prob: 0.5,
            dwell_burst_s: Span::new(7.0, 9.0),
            burst_amplitude: Span::new(0.6, 1.0),
            ..Self::london_like()
        }
    }

    /// Deterministic trips that run exactly to schedule: no noise, no
    /// delays, no halts, no bursts.
    pub fn noise_free() -> Self {
        Scenario {
            profile: TrainProfile::noise_free(),
            origin_dwell_s: Span::new(30.0, 30.0),
            dwell_s: Span::new(30.0, 30.0),
            in_between_prob: 0.0,
            smooth_segment_prob: 0.0,
            ..Self::london_like()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "london" => Some(Self::london_like()),
            "cologne" => Some(Self::cologne_like()),
            "delayed" => Some(Self::delayed()),
            "noise-free" => Some(Self::noise_free()),
            _ => None,
        }
    }

    /// Delayed service with off-schedule departures.
    pub fn delayed() -> Self {
        Scenario {
            profile: TrainProfile::cologne_like(),
            delays: DelayModel::default(),
            departure_offset_sigma_s: 40.0,
            origin_dwell_s: Span::new(60.0, 90.0),
            dwell_s: Span::new(20.0, 30.0),
            in_between_prob: 0.05,
            smooth_segment_prob: 0.0,
            ..Self::london_like()
        }
    }

    /// Builds a random script for `plan`.
    pub fn script(&self, plan: &TripPlan, seed: u64) -> TripScript {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
        let segs = plan.segment_count();
        let travel_s = self.delays.sample(plan.trip_durations(), &mut rng);

        let origin = self.origin_dwell_s.draw(&mut rng);
        let offset = if self.departure_offset_sigma_s > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            (z * self.departure_offset_sigma_s)
                .clamp(-origin + 5.0, 3.0 * self.departure_offset_sigma_s)
        } else {
            0.0
        };
        let mut dwell_s = vec![origin + offset];
        let sched_dwell = plan.scheduled_dwell_s();
        for i in 1..=segs {
            let d = if sched_dwell > 0.0 {
                sched_dwell + self.dwell_s.draw(&mut rng)
                    - 0.5 * (self.dwell_s.min + self.dwell_s.max)
            } else {
                self.dwell_s.draw(&mut rng)
            };
            // the destination dwell only needs to outlast detection
            dwell_s.push(if i == segs { d.max(20.0) } else { d.max(1.0) });
        }

        let mut in_between = Vec::new();
        for (seg, &travel) in travel_s.iter().enumerate() {
            if rng.random::<f64>() < self.in_between_prob {
                let halt = InBetweenHalt {
                    segment: seg,
                    at_fraction: self.in_between_fraction.draw(&mut rng),
                    duration_s: self.in_between_duration_s.draw(&mut rng),
                };
                let before = halt.at_fraction * travel;
                let after = travel - before;
                if before.min(after) >= self.in_between_min_run_s {
                    in_between.push(halt);
                }
            }
        }

        let ride_quality = (0..segs)
            .map(|_| {
                if rng.random::<f64>() < self.smooth_segment_prob {
                    RideQuality {
                        scale: self.smooth_quality.0.draw(&mut rng),
                        modulation_depth: self.smooth_quality.1.draw(&mut rng),
                        modulation_period_s: self.smooth_quality.2.draw(&mut rng),
                    }
                } else {
                    RideQuality::default()
                }
            })
            .collect();

        let mut script = TripScript {
            plan: plan.clone(),
            travel_s,
            dwell_s,
            in_between,
            bursts: Vec::new(),
            ride_quality,
            device_bias: [0.0; 3],
            scheduled_departure_s: Some(origin),
            rng_seed: seed,
        };
        script.bursts = self.place_bursts(&script, &mut rng);
        script
    }

    /// Picks a random trip of at least `min_segments` segments (or the
    /// whole line, if shorter) in a random direction.
    pub fn random_plan<R: Rng + ?Sized>(
        route: &crate::trip::Route,
        min_segments: usize,
        rng: &mut R,
    ) -> TripPlan {
        let n = route.stations.len();
        let span = min_segments.clamp(1, n - 1);
        let len = rng.random_range(span..n);
        let start = rng.random_range(0..n - len);
        let (a, b) = (start, start + len);
        let (o, d) = if rng.random::<bool>() { (a, b) } else { (b, a) };
        TripPlan::new(route, &route.stations[o].id, &route.stations[d].id)
            .expect("distinct stations on the route")
    }

    /// Builds `trips` scripts on `route`. Trip `i` uses the derived seed
    /// `seed + i`.
    pub fn corpus(
        &self,
        route: &crate::trip::Route,
        trips: usize,
        min_segments: usize,
        seed: u64,
    ) -> Vec<TripScript> {
        (0..trips as u64)
            .map(|i| {
                let trip_seed = seed.wrapping_add(i);
                let mut rng = ChaCha8Rng::seed_from_u64(trip_seed.rotate_left(17));
                let plan = Self::random_plan(route, min_segments, &mut rng);
                self.script(&plan, trip_seed)
            })
            .collect()
    }

    fn place_bursts<R: Rng + ?Sized>(&self, script: &TripScript, rng: &mut R) -> Vec<Burst> {
        if self.cruise_burst_prob <= 0.0 && self.dwell_burst_prob <= 0.0 {
            return Vec::new();
        }
        let (pieces, _) = layout(script, &vec![0.0; script.plan.segment_count()]);
        let ramp = self.profile.ramp_seconds;
        // keep clear of the smoothing window and detection runs around each edge
        let margin = 12.0;
        let mut out = Vec::new();
        for p in &pieces {
            let (lo, hi, prob, span) = match *p {
                Piece::Motion { start, end, .. } => (
                    start + ramp + 3.0,
                    end - ramp - 3.0,
                    self.cruise_burst_prob,
                    self.cruise_burst_s,
                ),
                Piece::Dwell { start, end } => (
                    start + margin,
                    end - margin,
                    self.dwell_burst_prob,
                    self.dwell_burst_s,
                ),
            };
            if rng.random::<f64>() >= prob {
                continue;
            }
            let duration = span.draw(rng);
            let amplitude = self.burst_amplitude.draw(rng);
            if hi - lo < duration {
                continue;
            }
            let start_s = Span::new(lo, hi - duration).draw(rng);
            out.push(Burst {
                start_s,
                duration_s: duration,
                amplitude,
            });
        }
        out
    }
}

/// A line with `stations` stations and whole-minute scheduled segments.
pub fn synthetic_route(
    line_id: &str,
    stations: usize,
    minutes: (u32, u32),
    seed: u64,
) -> crate::trip::Route {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let list = (0..stations)
        .map(|i| {
            crate::trip::Station::new(
                format!("{line_id}-{i:02}"),
                format!("{line_id} station {i}"),
            )
        })
        .collect();
    let durations = (1..stations)
        .map(|_| f64::from(rng.random_range(minutes.0..=minutes.1)) * 60.0)
        .collect();
    crate::trip::Route::new(line_id, list, durations).expect("synthetic route is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::synthesize;
    use crate::trip::{Route, Station};

    fn plan(n: usize, seg_s: f64) -> TripPlan {
        let stations = (0..n)
            .map(|i| Station::new(format!("S{i}"), format!("S{i}")))
            .collect();
        let route = Route::new("T", stations, vec![seg_s; n - 1]).unwrap();
        TripPlan::new(&route, "S0", &format!("S{}", n - 1)).unwrap()
    }

    #[test]
    fn noise_free_dwells_are_exactly_zero() {
        let script = TripScript::on_schedule(plan(3, 90.0), 30.0, 1);
        let (trace, truth) = generate(&script, &TrainProfile::noise_free(), 50.0).unwrap();
        truth.validate().unwrap();
        let mut moving_min = f64::INFINITY;
        for s in &trace {
            let a = synthesize(s).unwrap().a;
            let in_stop = truth
                .stops
                .iter()
                .any(|st| s.t_ms >= st.onset_ms && s.t_ms <= st.end_ms);
            if in_stop {
                assert_eq!(a, 0.0, "non-zero magnitude at {} ms", s.t_ms);
            } else {
                moving_min = moving_min.min(a);
            }
        }
        assert!(moving_min > 0.0);
    }

    #[test]
    fn same_seed_same_trace() {
        let mut script = TripScript::on_schedule(plan(4, 120.0), 30.0, 42);
        script.bursts.push(Burst {
            start_s: 100.0,
            duration_s: 3.0,
            amplitude: 1.0,
        });
        let a = generate(&script, &TrainProfile::london_like(), 50.0).unwrap();
        let b = generate(&script, &TrainProfile::london_like(), 50.0).unwrap();
        assert_eq!(a, b);
        script.rng_seed = 43;
        let c = generate(&script, &TrainProfile::london_like(), 50.0).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn trace_length_matches_duration() {
        let script = TripScript::on_schedule(plan(3, 61.3), 17.7, 3);
        for rate in [50.0, 25.0, 33.0, 100.0] {
            let (trace, _) = generate(&script, &TrainProfile::cologne_like(), rate).unwrap();
            let expected = script.total_s() * rate;
            assert!(
                (trace.len() as f64 - expected).abs() <= 1.0,
                "{rate}: {} vs {expected}",
                trace.len()
            );
        }
    }

    #[test]
    fn truth_follows_the_script() {
        let mut script = TripScript::on_schedule(plan(3, 100.0), 30.0, 3);
        script.in_between.push(InBetweenHalt {
            segment: 1,
            at_fraction: 0.4,
            duration_s: 20.0,
        });
        let (_, truth) = generate(&script, &TrainProfile::london_like(), 50.0).unwrap();
        let onsets: Vec<f64> = truth.stops.iter().map(|s| s.onset_ms / 1000.0).collect();
        // origin, S1 after 30 + 100, halt 40 s into the second segment, S2
        assert_eq!(onsets, vec![0.0, 130.0, 200.0, 280.0]);
        assert!(truth.stops[0].start);
        assert_eq!(truth.stops[2].label, StopClass::InBetweenStop);
        assert_eq!(truth.stops[2].fraction, Some(0.4));
        assert_eq!(truth.stops[3].station_id.as_deref(), Some("S2"));
        assert_eq!(truth.departure_ms(), Some(30_000.0));
        assert_eq!(truth.stations_only().stops.len(), 3);
    }

    #[test]
    fn script_errors() {
        let base = TripScript::on_schedule(plan(3, 100.0), 30.0, 3);

        let mut s = base.clone();
        s.bursts = vec![
            Burst {
                start_s: 50.0,
                duration_s: 5.0,
                amplitude: 1.0,
            },
            Burst {
                start_s: 53.0,
                duration_s: 5.0,
                amplitude: 1.0,
            },
        ];
        assert!(matches!(s.validate(), Err(SimError::Overlap(_))));

        let mut s = base.clone();
        s.in_between = vec![
            InBetweenHalt {
                segment: 0,
                at_fraction: 0.5,
                duration_s: 10.0,
            },
            InBetweenHalt {
                segment: 0,
                at_fraction: 0.5,
                duration_s: 10.0,
            },
        ];
        assert!(matches!(s.validate(), Err(SimError::Overlap(_))));

        let mut s = base.clone();
        s.in_between = vec![InBetweenHalt {
            segment: 0,
            at_fraction: 1.0,
            duration_s: 10.0,
        }];
        assert!(s.validate().is_err());

        let mut s = base.clone();
        s.travel_s.pop();
        assert!(s.validate().is_err());

        let mut s = base;
        s.travel_s[0] = 0.0;
        assert!(s.validate().is_err());

        let bad_profile = TrainProfile {
            dwell_noise_sigma: 0.5,
            ..TrainProfile::london_like()
        };
        assert!(bad_profile.validate().is_err());
        assert!(generate(
            &TripScript::on_schedule(plan(2, 60.0), 10.0, 0),
            &TrainProfile::london_like(),
            0.0
        )
        .is_err());
    }

    #[test]
    fn kinematics_are_continuous() {
        let p = TrainProfile::london_like();
        let len = 100.0;
        let (a0, v0) = kinematics(&p, 0.0, len);
        let (a1, v1) = kinematics(&p, len, len);
        assert_eq!((a0, v0), (0.0, 0.0));
        assert!(a1.abs() < 1e-12 && v1.abs() < 1e-12);
        let (_, vc) = kinematics(&p, 50.0, len);
        assert_eq!(vc, 1.0);
        // short hop: pulses shrink, top speed stays below cruise
        let (_, vs) = kinematics(&p, 10.0, 20.0);
        assert!(vs > 0.0 && vs < 1.0);
    }

    #[test]
    fn zero_sigma_means_no_delay() {
        let route = synthetic_route("Z", 8, (1, 3), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_delays(&route, 0.0, &mut rng),
            route.segment_durations_s
        );
    }

    #[test]
    fn delays_are_positive_and_calibrated() {
        let route = Route::new(
            "X",
            vec![Station::new("a", "A"), Station::new("b", "B")],
            vec![29.0 * 60.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let totals: Vec<f64> = (0..10_000)
            .map(|_| {
                sample_delays(&route, DEFAULT_DELAY_SIGMA, &mut rng)
                    .iter()
                    .sum::<f64>()
            })
            .collect();
        assert!(totals.iter().all(|&t| t > 0.0));
        let mean = totals.iter().sum::<f64>() / totals.len() as f64;
        let var =
            totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (totals.len() - 1) as f64;
        let std_min = var.sqrt() / 60.0;
        assert!((std_min - 7.12).abs() <= 0.15 * 7.12, "std {std_min} min");
    }

    #[test]
    fn mgf_matches_closed_form_at_zero() {
        assert!((half_normal_mgf(0.0) - 1.0).abs() < 1e-9);
        // E[exp(|Z|)] = 2 e^{1/2} Φ(1) ≈ 2.774286
        assert!((half_normal_mgf(1.0) - 2.774_286).abs() < 1e-5);
    }

    #[test]
    fn scenario_scripts_are_valid_and_deterministic() {
        let route = synthetic_route("L", 9, (1, 3), 2);
        let p = TripPlan::new(&route, "L-00", "L-06").unwrap();
        for sc in [
            Scenario::london_like(),
            Scenario::cologne_like(),
            Scenario::delayed(),
        ] {
            for seed in 0..20 {
                let s = sc.script(&p, seed);
                s.validate().unwrap();
                assert_eq!(s, sc.script(&p, seed));
            }
        }
    }
}
