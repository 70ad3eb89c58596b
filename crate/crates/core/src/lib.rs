//! Accelerometer-based positioning for trains running underground.
//!
//! A phone riding in a train sees "shaky" linear acceleration while the train
//! moves and near-silence while it stands at a platform. This crate turns that
//! observation into a streaming positioning engine:
//!
//! * [`signal`] collapses three-axis linear acceleration into a magnitude and
//!   smooths it with a trailing rolling mean.
//! * [`detector`] runs a two-sided hysteresis state machine over the smoothed
//!   magnitude and emits `Moving`/`Stopped` transitions.
//! * [`trip`] fuses those transitions with a timetable: it decides whether a
//!   stop is a station or an unscheduled halt in the tunnel and interpolates
//!   the position along the current segment.
//! * [`pipeline`] wires the three together into a sample-at-a-time engine.
//! * [`simulate`] produces synthetic traces with exact ground truth.
//! * [`eval`] scores detections against ground truth, runs the timetable
//!   baselines and grid-searches detector parameters.
//! * [`io`] reads and writes the CSV/JSON/JSONL file formats.
//!
//! The guide under `book/` walks through each stage; its code listings are
//! compiled and run as doc-tests of this crate.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod signal;
pub mod simulate;
pub mod trip;

pub use detector::{
    run_detector, Detector, DetectorParams, Motion, MotionState, MotionTransition, ParamsError,
    TransitionKind,
};
pub use eval::{
    classify_transitions, evaluate_corpus, match_stops, relative_time_baseline, timetable_baseline,
    trip_accuracy, tune, DetectedStop, EvalError, EvalReport, LabelledTrip, Matching, ParamGrid,
    StopMatch, ToleranceWindow, TuneResult, TuneRow,
};
pub use pipeline::{process_trace, Engine, EngineError, Processed};
pub use signal::{
    resample_params, smooth, synthesize, AccelSample, AxisBias, MagnitudeSample, RollingMean,
    SignalError, Smoother,
};
pub use simulate::{
    generate, sample_delays, Burst, DelayModel, GroundTruth, InBetweenHalt, RideQuality, Scenario,
    SimError, TrainProfile, TripScript, TruthStop,
};
pub use trip::{
    classify_stop, interpolate, load_route, Phase, PositionEstimate, Route, RouteError, Station,
    StopClass, TimeBasis, TrackerConfig, TripError, TripEvent, TripEventKind, TripPlan, TripState,
    TripTracker,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/signal.md")]
    mod signal {}
    #[doc = include_str!("../../../book/src/detector.md")]
    mod detector {}
    #[doc = include_str!("../../../book/src/trip.md")]
    mod trip {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
