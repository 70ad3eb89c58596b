//! End-to-end processing: raw samples in, motion transitions and trip events
//! out.

use thiserror::Error;

use crate::detector::{Detector, DetectorParams, MotionTransition, ParamsError};
use crate::signal::{synthesize, AccelSample, AxisBias, MagnitudeSample, SignalError, Smoother};
use crate::trip::{TrackerConfig, TripError, TripEvent, TripPlan, TripTracker};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Trip(#[from] TripError),
    #[error("sample at {got} ms precedes the previous sample at {last} ms")]
    TimeReversal { last: f64, got: f64 },
}

/// What one raw sample produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub raw: MagnitudeSample,
    pub smoothed: Option<MagnitudeSample>,
    pub transition: Option<MotionTransition>,
    pub events: Vec<TripEvent>,
}

/// Sample-at-a-time engine. The trip tracker is optional: without a plan the
/// engine only reports motion transitions.
#[derive(Debug, Clone)]
pub struct Engine {
    bias: AxisBias,
    smoother: Smoother,
    detector: Detector,
    tracker: Option<TripTracker>,
    last_t_ms: f64,
}

impl Engine {
    pub fn new(params: DetectorParams) -> Result<Self, EngineError> {
        params.validate()?;
        Ok(Engine {
            bias: AxisBias::default(),
            smoother: Smoother::new(params.window_n)?,
            detector: Detector::new(params)?,
            tracker: None,
            last_t_ms: f64::NEG_INFINITY,
        })
    }

    pub fn with_bias(mut self, bias: AxisBias) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_trip(mut self, plan: TripPlan, config: TrackerConfig) -> Result<Self, EngineError> {
        self.tracker = Some(TripTracker::with_config(plan, config)?);
        Ok(self)
    }

    pub fn tracker(&self) -> Option<&TripTracker> {
        self.tracker.as_ref()
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn push(&mut self, sample: &AccelSample) -> Result<Step, EngineError> {
        sample.validate()?;
        if sample.t_ms < self.last_t_ms {
            return Err(EngineError::TimeReversal {
                last: self.last_t_ms,
                got: sample.t_ms,
            });
        }
        self.last_t_ms = sample.t_ms;

        let raw = synthesize(&self.bias.apply(sample))?;
        let smoothed = self.smoother.push(raw);
        let transition = smoothed.and_then(|s| self.detector.feed(&s));
        let mut events = Vec::new();
        if let Some(tracker) = self.tracker.as_mut() {
            if let Some(tr) = &transition {
                events.extend(tracker.advance(tr)?);
            }
            events.extend(tracker.poll(sample.t_ms)?);
        }
        Ok(Step {
            raw,
            smoothed,
            transition,
            events,
        })
    }
}

/// Batch output of the signal and detector stages for one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub raw: Vec<MagnitudeSample>,
    /// Aligned with `raw`; `None` during warm-up.
    pub smoothed: Vec<Option<f64>>,
    pub transitions: Vec<MotionTransition>,
}

pub fn process_trace(
    trace: &[AccelSample],
    params: &DetectorParams,
    bias: &AxisBias,
) -> Result<Processed, EngineError> {
    let mut engine = Engine::new(*params)?.with_bias(*bias);
    let mut out = Processed {
        raw: Vec::with_capacity(trace.len()),
        smoothed: Vec::with_capacity(trace.len()),
        transitions: Vec::new(),
    };
    for s in trace {
        let step = engine.push(s)?;
        out.raw.push(step.raw);
        out.smoothed.push(step.smoothed.map(|m| m.a));
        out.transitions.extend(step.transition);
    }
    Ok(out)
}

/// Magnitudes for a whole trace, bias removed.
pub fn magnitudes(
    trace: &[AccelSample],
    bias: &AxisBias,
) -> Result<Vec<MagnitudeSample>, SignalError> {
    trace.iter().map(|s| synthesize(&bias.apply(s))).collect()
}

/// Feeds a transition list through a fresh tracker. Time-driven events are
/// not produced here.
pub fn replay_transitions(
    plan: &TripPlan,
    config: &TrackerConfig,
    transitions: &[MotionTransition],
) -> Result<Vec<TripEvent>, TripError> {
    let mut tracker = TripTracker::with_config(plan.clone(), *config)?;
    let mut events = Vec::new();
    for tr in transitions {
        events.extend(tracker.advance(tr)?);
    }
    Ok(events)
}
