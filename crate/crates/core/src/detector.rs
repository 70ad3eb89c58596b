//! Hysteresis state machine turning the smoothed magnitude into
//! `Moving`/`Stopped` transitions.
//!
//! While the train is considered moving, `delta_below` consecutive samples
//! strictly below `gamma` are needed to declare a stop; while stopped,
//! `delta_above` consecutive samples strictly above `gamma` are needed to
//! declare movement. A sample that does not qualify resets the run. A sample
//! exactly equal to `gamma` qualifies in neither direction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::MagnitudeSample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("threshold gamma must be positive and finite, got {0}")]
    NonPositiveGamma(f64),
    #[error("`{0}` must be at least 1")]
    ZeroCount(&'static str),
    #[error("sample rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),
    #[error("unknown parameter preset `{0}` (expected one of: worldwide, london, cologne)")]
    UnknownPreset(String),
}

/// Detector configuration. Sample counts refer to `nominal_rate_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    #[serde(rename = "gamma_ms2")]
    pub gamma: f64,
    pub delta_below: usize,
    pub delta_above: usize,
    pub window_n: usize,
    pub nominal_rate_hz: f64,
}

pub const PRESET_NAMES: [&str; 3] = ["worldwide", "london", "cologne"];

impl DetectorParams {
    /// General-purpose values that work across networks.
    pub const fn worldwide() -> Self {
        DetectorParams {
            gamma: 0.2,
            delta_below: 250,
            delta_above: 350,
            window_n: 100,
            nominal_rate_hz: 50.0,
        }
    }

    /// Slowly accelerating trains: movement is confirmed sooner.
    pub const fn london() -> Self {
        DetectorParams {
            delta_above: 250,
            ..Self::worldwide()
        }
    }

    /// Quickly accelerating trains: a longer run guards against false starts.
    pub const fn cologne() -> Self {
        DetectorParams {
            delta_above: 500,
            ..Self::worldwide()
        }
    }

    pub fn preset(name: &str) -> Result<Self, ParamsError> {
        match name {
            "worldwide" => Ok(Self::worldwide()),
            "london" => Ok(Self::london()),
            "cologne" => Ok(Self::cologne()),
            other => Err(ParamsError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(ParamsError::NonPositiveGamma(self.gamma));
        }
        if self.delta_below == 0 {
            return Err(ParamsError::ZeroCount("delta_below"));
        }
        if self.delta_above == 0 {
            return Err(ParamsError::ZeroCount("delta_above"));
        }
        if self.window_n == 0 {
            return Err(ParamsError::ZeroCount("window_n"));
        }
        if !(self.nominal_rate_hz > 0.0) || !self.nominal_rate_hz.is_finite() {
            return Err(ParamsError::NonPositiveRate(self.nominal_rate_hz));
        }
        Ok(())
    }

    pub fn sample_period_ms(&self) -> f64 {
        1000.0 / self.nominal_rate_hz
    }
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self::worldwide()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Motion {
    Moving,
    Stopped,
}

/// Current motion plus the length of the qualifying run towards the other
/// state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionState {
    pub motion: Motion,
    pub counter: usize,
}

impl MotionState {
    /// Tracking starts at a station.
    pub const fn stopped() -> Self {
        MotionState {
            motion: Motion::Stopped,
            counter: 0,
        }
    }

    pub const fn moving() -> Self {
        MotionState {
            motion: Motion::Moving,
            counter: 0,
        }
    }

    /// Advances the machine by one smoothed magnitude. Returns the new state
    /// and the kind of transition completed by this sample, if any.
    pub fn step(self, a: f64, params: &DetectorParams) -> (MotionState, Option<TransitionKind>) {
        let (qualifies, needed, next, kind) = match self.motion {
            Motion::Moving => (
                a < params.gamma,
                params.delta_below,
                Motion::Stopped,
                TransitionKind::StopDetected,
            ),
            Motion::Stopped => (
                a > params.gamma,
                params.delta_above,
                Motion::Moving,
                TransitionKind::MovingDetected,
            ),
        };
        if !qualifies {
            return (MotionState { counter: 0, ..self }, None);
        }
        let counter = self.counter + 1;
        if counter >= needed {
            (
                MotionState {
                    motion: next,
                    counter: 0,
                },
                Some(kind),
            )
        } else {
            (MotionState { counter, ..self }, None)
        }
    }
}

impl Default for MotionState {
    fn default() -> Self {
        Self::stopped()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionKind {
    StopDetected,
    MovingDetected,
}

impl TransitionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionKind::StopDetected => "STOP",
            TransitionKind::MovingDetected => "MOVING",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "STOP" => Some(TransitionKind::StopDetected),
            "MOVING" => Some(TransitionKind::MovingDetected),
            _ => None,
        }
    }

    pub fn target(self) -> Motion {
        match self {
            TransitionKind::StopDetected => Motion::Stopped,
            TransitionKind::MovingDetected => Motion::Moving,
        }
    }
}

/// A detected change of motion.
///
/// `t_ms` is the timestamp of the sample that completed the run, i.e. when
/// the detector could first know. `onset_t_ms` backs that off by the run
/// length to estimate when the change physically began. `index` counts
/// smoothed samples fed to the detector, starting at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionTransition {
    pub t_ms: f64,
    pub onset_t_ms: f64,
    pub kind: TransitionKind,
    pub index: u64,
}

/// A [`MotionState`] bundled with its parameters and a sample counter.
#[derive(Debug, Clone)]
pub struct Detector {
    params: DetectorParams,
    state: MotionState,
    fed: u64,
}

impl Detector {
    pub fn new(params: DetectorParams) -> Result<Self, ParamsError> {
        Self::with_state(params, MotionState::stopped())
    }

    pub fn with_state(params: DetectorParams, state: MotionState) -> Result<Self, ParamsError> {
        params.validate()?;
        Ok(Detector {
            params,
            state,
            fed: 0,
        })
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    pub fn state(&self) -> MotionState {
        self.state
    }

    pub fn feed(&mut self, sample: &MagnitudeSample) -> Option<MotionTransition> {
        let index = self.fed;
        self.fed += 1;
        let (state, kind) = self.state.step(sample.a, &self.params);
        self.state = state;
        kind.map(|kind| {
            let run = match kind {
                TransitionKind::StopDetected => self.params.delta_below,
                TransitionKind::MovingDetected => self.params.delta_above,
            };
            MotionTransition {
                t_ms: sample.t_ms,
                onset_t_ms: sample.t_ms - (run - 1) as f64 * self.params.sample_period_ms(),
                kind,
                index,
            }
        })
    }
}

/// Folds [`Detector::feed`] over a whole trace.
pub fn run_detector(
    trace: &[MagnitudeSample],
    params: &DetectorParams,
    initial: MotionState,
) -> Result<Vec<MotionTransition>, ParamsError> {
    let mut det = Detector::with_state(*params, initial)?;
    Ok(trace.iter().filter_map(|s| det.feed(s)).collect())
}
