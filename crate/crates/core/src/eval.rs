//! Scoring detected stops against ground truth.
//!
//! Detected stops are paired with truth entries greedily and in order: each
//! detected stop takes the earliest unmatched truth entry, after the last
//! paired one, whose onset lies within the tolerance window. A pair is
//! correct when the labels agree. Unpaired truth entries are misses and
//! unpaired detections are false positives. The origin stop, where tracking
//! begins, is left out of the matching; the inclusive accuracy counts it as
//! correct.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{
    run_detector, DetectorParams, MotionState, MotionTransition, ParamsError, TransitionKind,
};
use crate::pipeline::magnitudes;
use crate::signal::{smooth, AccelSample, AxisBias, MagnitudeSample, SignalError};
use crate::simulate::{GroundTruth, TruthStop};
use crate::trip::{StopClass, TrackerConfig, TripError, TripEventKind, TripPlan, TripTracker};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("tolerance must be positive and finite, got {0} s")]
    Tolerance(f64),
    #[error("nothing to evaluate: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("trip {index}: {source}")]
    Trip { index: usize, source: TripError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceWindow {
    pub seconds: f64,
}

impl ToleranceWindow {
    pub fn new(seconds: f64) -> Result<Self, EvalError> {
        if seconds > 0.0 && seconds.is_finite() {
            Ok(ToleranceWindow { seconds })
        } else {
            Err(EvalError::Tolerance(seconds))
        }
    }

    pub fn ms(&self) -> f64 {
        self.seconds * 1000.0
    }
}

impl Default for ToleranceWindow {
    fn default() -> Self {
        ToleranceWindow { seconds: 30.0 }
    }
}

/// A classified stop, from the tracker or from a timetable baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedStop {
    /// Estimated start of the stop; used for matching.
    pub onset_ms: f64,
    /// When the stop was reported.
    pub t_ms: f64,
    pub label: StopClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopMatch {
    pub truth: TruthStop,
    pub detected: Option<DetectedStop>,
    pub correct: bool,
    /// Detected minus truth onset, seconds.
    pub time_error_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// One entry per non-origin truth stop, in truth order.
    pub matches: Vec<StopMatch>,
    pub false_positives: Vec<DetectedStop>,
    /// Origin entries skipped by the matcher.
    pub start_stops: usize,
}

impl Matching {
    pub fn correct(&self) -> usize {
        self.matches.iter().filter(|m| m.correct).count()
    }

    /// Every truth stop matched and correct, and nothing spurious.
    pub fn is_perfect(&self) -> bool {
        self.false_positives.is_empty() && self.matches.iter().all(|m| m.correct)
    }
}

pub fn match_stops(
    truth: &GroundTruth,
    detected: &[DetectedStop],
    tol: ToleranceWindow,
) -> Matching {
    let scored: Vec<&TruthStop> = truth.stops.iter().filter(|s| !s.start).collect();
    let mut paired: Vec<Option<&DetectedStop>> = vec![None; scored.len()];
    let mut false_positives = Vec::new();
    let mut next = 0;
    for d in detected {
        let hit =
            (next..scored.len()).find(|&i| (d.onset_ms - scored[i].onset_ms).abs() <= tol.ms());
        match hit {
            Some(i) => {
                paired[i] = Some(d);
                next = i + 1;
            }
            None => false_positives.push(d.clone()),
        }
    }
    let matches = scored
        .iter()
        .zip(paired)
        .map(|(t, d)| StopMatch {
            truth: (*t).clone(),
            correct: d.is_some_and(|d| d.label == t.label),
            time_error_s: d.map(|d| (d.onset_ms - t.onset_ms) / 1000.0),
            detected: d.cloned(),
        })
        .collect();
    Matching {
        matches,
        false_positives,
        start_stops: truth.stops.len() - scored.len(),
    }
}

/// Fraction of trips whose matching is perfect.
pub fn trip_accuracy(
    trips: &[(GroundTruth, Vec<DetectedStop>)],
    tol: ToleranceWindow,
) -> Result<f64, EvalError> {
    if trips.is_empty() {
        return Err(EvalError::Empty("trip list"));
    }
    let perfect = trips
        .iter()
        .filter(|(truth, det)| match_stops(truth, det, tol).is_perfect())
        .count();
    Ok(perfect as f64 / trips.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stops_total: usize,
    pub stops_correct: usize,
    pub stations_missed: usize,
    pub inbetween_missed: usize,
    pub false_positives: usize,
    pub start_stops: usize,
    pub accuracy_excl_start: f64,
    pub accuracy_incl_start: f64,
    pub trips_total: usize,
    pub trips_fully_correct: usize,
}

impl EvalReport {
    /// Builds a report from raw counts.
    pub fn from_counts(
        stops_total: usize,
        stops_correct: usize,
        start_stops: usize,
        trips_total: usize,
        trips_fully_correct: usize,
    ) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        EvalReport {
            stops_total,
            stops_correct,
            start_stops,
            accuracy_excl_start: ratio(stops_correct, stops_total),
            accuracy_incl_start: ratio(stops_correct + start_stops, stops_total + start_stops),
            trips_total,
            trips_fully_correct,
            ..EvalReport::default()
        }
    }

    pub fn from_matchings<'a>(matchings: impl IntoIterator<Item = &'a Matching>) -> Self {
        matchings.into_iter().fold(EvalReport::default(), |acc, m| {
            acc.merge(&EvalReport::of(m))
        })
    }

    fn of(m: &Matching) -> Self {
        let missed = |label| {
            m.matches
                .iter()
                .filter(|x| !x.correct && x.truth.label == label)
                .count()
        };
        EvalReport {
            stations_missed: missed(StopClass::StationStop),
            inbetween_missed: missed(StopClass::InBetweenStop),
            false_positives: m.false_positives.len(),
            ..EvalReport::from_counts(
                m.matches.len(),
                m.correct(),
                m.start_stops,
                1,
                usize::from(m.is_perfect()),
            )
        }
    }

    pub fn merge(&self, other: &EvalReport) -> EvalReport {
        EvalReport {
            stations_missed: self.stations_missed + other.stations_missed,
            inbetween_missed: self.inbetween_missed + other.inbetween_missed,
            false_positives: self.false_positives + other.false_positives,
            ..EvalReport::from_counts(
                self.stops_total + other.stops_total,
                self.stops_correct + other.stops_correct,
                self.start_stops + other.start_stops,
                self.trips_total + other.trips_total,
                self.trips_fully_correct + other.trips_fully_correct,
            )
        }
    }

    pub fn trip_accuracy(&self) -> f64 {
        if self.trips_total == 0 {
            0.0
        } else {
            self.trips_fully_correct as f64 / self.trips_total as f64
        }
    }
}

/// Runs transitions through a trip tracker and collects one classified stop
/// per stop transition.
pub fn classify_transitions(
    plan: &TripPlan,
    config: &TrackerConfig,
    transitions: &[MotionTransition],
) -> Result<Vec<DetectedStop>, TripError> {
    let mut tracker = TripTracker::with_config(plan.clone(), *config)?;
    let mut out = Vec::new();
    for tr in transitions {
        for ev in tracker.advance(tr)? {
            let (label, station_id) = match ev.kind {
                TripEventKind::StationArrival { station_id } => {
                    (StopClass::StationStop, Some(station_id))
                }
                TripEventKind::InBetweenStop { .. } => (StopClass::InBetweenStop, None),
                TripEventKind::UnexpectedExtraStop => (StopClass::StationStop, None),
                // accompanies the final StationArrival
                TripEventKind::ArrivedAtDestination { .. } => continue,
                TripEventKind::Departed | TripEventKind::ApproachingStation { .. } => continue,
            };
            debug_assert_eq!(tr.kind, TransitionKind::StopDetected);
            out.push(DetectedStop {
                onset_ms: tr.onset_t_ms,
                t_ms: tr.t_ms,
                label,
                station_id,
            });
        }
    }
    Ok(out)
}

fn predicted_arrivals(plan: &TripPlan, anchor_ms: f64) -> Vec<DetectedStop> {
    let dwell_ms = plan.scheduled_dwell_s() * 1000.0;
    let mut t = anchor_ms;
    plan.trip_durations()
        .iter()
        .enumerate()
        .map(|(k, d)| {
            if k > 0 {
                t += dwell_ms;
            }
            t += d * 1000.0;
            DetectedStop {
                onset_ms: t,
                t_ms: t,
                label: StopClass::StationStop,
                station_id: Some(plan.station(k + 1).id.clone()),
            }
        })
        .collect()
}

/// Arrivals predicted from the official clock: cumulative scheduled segment
/// and dwell times from the scheduled departure.
pub fn timetable_baseline(plan: &TripPlan, scheduled_departure_ms: f64) -> Vec<DetectedStop> {
    predicted_arrivals(plan, scheduled_departure_ms)
}

/// Same cumulative schedule, anchored on the observed departure instead.
pub fn relative_time_baseline(plan: &TripPlan, actual_departure_ms: f64) -> Vec<DetectedStop> {
    predicted_arrivals(plan, actual_departure_ms)
}

/// One recorded or simulated trip.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledTrip {
    pub plan: TripPlan,
    pub trace: Vec<AccelSample>,
    pub truth: GroundTruth,
}

/// Per-trip outcome of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripOutcome {
    pub transitions: usize,
    pub matching: Matching,
}

fn outcome_from_magnitudes(
    trip: &LabelledTrip,
    smoothed: &[MagnitudeSample],
    params: &DetectorParams,
    config: &TrackerConfig,
    tol: ToleranceWindow,
) -> Result<TripOutcome, TripError> {
    let transitions = run_detector(smoothed, params, MotionState::stopped())
        .map_err(|_| TripError::BadConfig("params"))?;
    let detected = classify_transitions(&trip.plan, config, &transitions)?;
    Ok(TripOutcome {
        transitions: transitions.len(),
        matching: match_stops(&trip.truth, &detected, tol),
    })
}

/// Runs the full pipeline on every trip, in parallel.
pub fn evaluate_corpus(
    trips: &[LabelledTrip],
    params: &DetectorParams,
    config: &TrackerConfig,
    tol: ToleranceWindow,
) -> Result<(EvalReport, Vec<TripOutcome>), EvalError> {
    params.validate()?;
    let outcomes = trips
        .par_iter()
        .enumerate()
        .map(|(index, trip)| {
            let raw = magnitudes(&trip.trace, &AxisBias::default())?;
            let smoothed = smooth(&raw, params.window_n)?;
            outcome_from_magnitudes(trip, &smoothed, params, config, tol)
                .map_err(|source| EvalError::Trip { index, source })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let report = EvalReport::from_matchings(outcomes.iter().map(|o| &o.matching));
    Ok((report, outcomes))
}

/// Parameter ranges searched by [`tune`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub gamma: Vec<f64>,
    pub delta_below: Vec<usize>,
    pub delta_above: Vec<usize>,
    pub window_n: Vec<usize>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
}

fn default_rate() -> f64 {
    50.0
}

impl ParamGrid {
    pub fn cells(&self) -> Vec<DetectorParams> {
        let mut out = Vec::new();
        for &gamma in &self.gamma {
            for &delta_below in &self.delta_below {
                for &delta_above in &self.delta_above {
                    for &window_n in &self.window_n {
                        out.push(DetectorParams {
                            gamma,
                            delta_below,
                            delta_above,
                            window_n,
                            nominal_rate_hz: self.rate_hz,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub params: DetectorParams,
    pub accuracy: f64,
    pub stops_correct: usize,
    pub stops_total: usize,
    pub false_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: TuneRow,
    /// Every cell, in grid order.
    pub table: Vec<TuneRow>,
}

/// True when `a` should be preferred over `b`.
fn better(a: &TuneRow, b: &TuneRow) -> bool {
    let key = |r: &TuneRow| (r.accuracy, r.params.delta_above, r.params.delta_below);
    let (ka, kb) = (key(a), key(b));
    if ka.0 != kb.0 {
        return ka.0 > kb.0;
    }
    if (ka.1, ka.2) != (kb.1, kb.2) {
        return (ka.1, ka.2) > (kb.1, kb.2);
    }
    a.params.gamma < b.params.gamma
}

/// Exhaustive grid search maximizing stop classification accuracy
/// (excluding origin stops). Ties go to the larger `delta_above`, then the
/// larger `delta_below`, then the smaller `gamma`.
pub fn tune(
    trips: &[LabelledTrip],
    grid: &ParamGrid,
    config: &TrackerConfig,
    tol: ToleranceWindow,
) -> Result<TuneResult, EvalError> {
    if trips.is_empty() {
        return Err(EvalError::Empty("corpus"));
    }
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(EvalError::Empty("grid"));
    }
    for c in &cells {
        c.validate()?;
    }
    let raw: Vec<Vec<MagnitudeSample>> = trips
        .par_iter()
        .map(|t| magnitudes(&t.trace, &AxisBias::default()))
        .collect::<Result<_, _>>()?;

    let mut windows: Vec<usize> = grid.window_n.clone();
    windows.sort_unstable();
    windows.dedup();

    let mut table = Vec::with_capacity(cells.len());
    for &n in &windows {
        let smoothed: Vec<Vec<MagnitudeSample>> = raw
            .par_iter()
            .map(|r| smooth(r, n))
            .collect::<Result<_, _>>()?;
        let rows = cells
            .par_iter()
            .enumerate()
            .filter(|(_, c)| c.window_n == n)
            .map(|(pos, c)| {
                let mut report = EvalReport::default();
                for (index, (trip, sm)) in trips.iter().zip(&smoothed).enumerate() {
                    let o = outcome_from_magnitudes(trip, sm, c, config, tol)
                        .map_err(|source| EvalError::Trip { index, source })?;
                    report = report.merge(&EvalReport::of(&o.matching));
                }
                Ok((
                    pos,
                    TuneRow {
                        params: *c,
                        accuracy: report.accuracy_excl_start,
                        stops_correct: report.stops_correct,
                        stops_total: report.stops_total,
                        false_positives: report.false_positives,
                    },
                ))
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        table.extend(rows);
    }
    table.sort_by_key(|(pos, _)| *pos);
    let table: Vec<TuneRow> = table.into_iter().map(|(_, r)| r).collect();
    let best = *table
        .iter()
        .reduce(|best, r| if better(r, best) { r } else { best })
        .expect("grid is non-empty");
    Ok(TuneResult { best, table })
}
