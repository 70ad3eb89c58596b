//! Trip tracking: timetable model, station/in-between stop classification,
//! linear position interpolation and navigation events.
//!
//! The tracker consumes [`MotionTransition`]s in order. A stop that comes
//! before `inbetween_ratio` (default 0.7) of the segment's scheduled travel
//! time is an unscheduled halt in the tunnel; anything later is the next
//! station. Elapsed time is measured in motion: it starts at the segment's
//! first departure and excludes time spent standing at in-between stops.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{Motion, MotionTransition, TransitionKind};

pub const DEFAULT_INBETWEEN_RATIO: f64 = 0.7;
pub const DEFAULT_APPROACH_FRACTION: f64 = 0.9;

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("route JSON is malformed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("route must have at least 2 stations, found {0}")]
    TooFewStations(usize),
    #[error("stations[{index}]: duplicate station id `{id}`")]
    DuplicateStation { index: usize, id: String },
    #[error("segment_durations_s has {got} entries, expected {expected} (stations - 1)")]
    SegmentCount { expected: usize, got: usize },
    #[error("departure_times has {got} entries, expected {expected} (one per station)")]
    TimetableCount { expected: usize, got: usize },
    #[error("segment_durations_s[{index}]: duration must be positive and finite, got {value}")]
    NonPositiveDuration { index: usize, value: f64 },
    #[error("departure_times[{index}]: `{value}` is not a valid HH:MM time")]
    BadTime { index: usize, value: String },
    #[error(
        "departure_times[{index}]: `{value}` does not come after the previous time `{previous}`"
    )]
    NonMonotoneTimetable {
        index: usize,
        value: String,
        previous: String,
    },
    #[error("route needs exactly one of `segment_durations_s` or `departure_times`")]
    DurationSource,
    #[error("dwell_s must be non-negative and finite, got {0}")]
    BadDwell(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TripError {
    #[error("station `{0}` is not on this route")]
    UnknownStation(String),
    #[error("origin and destination are the same station `{0}`")]
    SameStation(String),
    #[error("transition at {got} ms arrived after one at {last} ms")]
    OutOfOrder { last: f64, got: f64 },
    #[error("expected a {expected:?} transition, got {got:?}")]
    UnexpectedTransition {
        expected: TransitionKind,
        got: TransitionKind,
    },
    #[error("query time {now} ms is earlier than the last transition at {last} ms")]
    ClockSkew { now: f64, last: f64 },
    #[error("scheduled segment duration must be positive, got {0}")]
    NonPositiveSchedule(f64),
    #[error("elapsed time must be non-negative, got {0}")]
    NegativeElapsed(f64),
    #[error("tracker setting `{0}` must lie in (0, 1]")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
}

impl Station {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Station {
            id: id.into(),
            name: name.into(),
            lat: None,
            lon: None,
        }
    }
}

/// One line with ordered stations and scheduled travel seconds between
/// consecutive stations. `dwell_s` is the scheduled stand time at
/// intermediate stations (zero when the durations already include it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RouteFile", into = "RouteFile")]
pub struct Route {
    pub line_id: String,
    pub stations: Vec<Station>,
    pub segment_durations_s: Vec<f64>,
    pub dwell_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RouteFile {
    line_id: String,
    stations: Vec<Station>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segment_durations_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    departure_times: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    dwell_s: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl TryFrom<RouteFile> for Route {
    type Error = RouteError;

    fn try_from(f: RouteFile) -> Result<Self, Self::Error> {
        let durations = match (f.segment_durations_s, f.departure_times) {
            (Some(d), None) => d,
            (None, Some(times)) => {
                if times.len() != f.stations.len() {
                    return Err(RouteError::TimetableCount {
                        expected: f.stations.len(),
                        got: times.len(),
                    });
                }
                durations_from_timetable(&times)?
            }
            _ => return Err(RouteError::DurationSource),
        };
        Route::with_dwell(f.line_id, f.stations, durations, f.dwell_s)
    }
}

impl From<Route> for RouteFile {
    fn from(r: Route) -> Self {
        RouteFile {
            line_id: r.line_id,
            stations: r.stations,
            segment_durations_s: Some(r.segment_durations_s),
            departure_times: None,
            dwell_s: r.dwell_s,
        }
    }
}

fn parse_hhmm(s: &str) -> Option<u32> {
    let (h, m) = s.trim().split_once(':')?;
    let h: u32 = h.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    (h < 48 && m < 60).then_some(h * 60 + m)
}

/// Converts minute-precision departure times into segment seconds.
fn durations_from_timetable(times: &[String]) -> Result<Vec<f64>, RouteError> {
    let minutes = times
        .iter()
        .enumerate()
        .map(|(index, t)| {
            parse_hhmm(t).ok_or_else(|| RouteError::BadTime {
                index,
                value: t.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    minutes
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            if w[1] <= w[0] {
                Err(RouteError::NonMonotoneTimetable {
                    index: i + 1,
                    value: times[i + 1].clone(),
                    previous: times[i].clone(),
                })
            } else {
                Ok(f64::from(w[1] - w[0]) * 60.0)
            }
        })
        .collect()
}

impl Route {
    pub fn new(
        line_id: impl Into<String>,
        stations: Vec<Station>,
        segment_durations_s: Vec<f64>,
    ) -> Result<Self, RouteError> {
        Self::with_dwell(line_id, stations, segment_durations_s, 0.0)
    }

    pub fn with_dwell(
        line_id: impl Into<String>,
        stations: Vec<Station>,
        segment_durations_s: Vec<f64>,
        dwell_s: f64,
    ) -> Result<Self, RouteError> {
        if stations.len() < 2 {
            return Err(RouteError::TooFewStations(stations.len()));
        }
        let mut seen = HashSet::new();
        for (index, s) in stations.iter().enumerate() {
            if !seen.insert(s.id.as_str()) {
                return Err(RouteError::DuplicateStation {
                    index,
                    id: s.id.clone(),
                });
            }
        }
        if segment_durations_s.len() != stations.len() - 1 {
            return Err(RouteError::SegmentCount {
                expected: stations.len() - 1,
                got: segment_durations_s.len(),
            });
        }
        for (index, &value) in segment_durations_s.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(RouteError::NonPositiveDuration { index, value });
            }
        }
        if !(dwell_s >= 0.0) || !dwell_s.is_finite() {
            return Err(RouteError::BadDwell(dwell_s));
        }
        Ok(Route {
            line_id: line_id.into(),
            stations,
            segment_durations_s,
            dwell_s,
        })
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    pub fn reversed(&self) -> Route {
        let mut r = self.clone();
        r.stations.reverse();
        r.segment_durations_s.reverse();
        r
    }
}

/// Reads a route from its JSON representation.
pub fn load_route<R: Read>(reader: R) -> Result<Route, RouteError> {
    let file: RouteFile = serde_json::from_reader(reader)?;
    Route::try_from(file)
}

/// A trip along one route. The route is stored in travel direction so that
/// `origin_index < destination_index` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanFile", into = "PlanFile")]
pub struct TripPlan {
    route: Route,
    origin_index: usize,
    destination_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlanFile {
    route: Route,
    origin: String,
    destination: String,
}

impl TryFrom<PlanFile> for TripPlan {
    type Error = TripError;

    fn try_from(f: PlanFile) -> Result<Self, Self::Error> {
        TripPlan::new(&f.route, &f.origin, &f.destination)
    }
}

impl From<TripPlan> for PlanFile {
    fn from(p: TripPlan) -> Self {
        PlanFile {
            origin: p.origin().id.clone(),
            destination: p.destination().id.clone(),
            route: p.route,
        }
    }
}

impl TripPlan {
    pub fn new(route: &Route, origin: &str, destination: &str) -> Result<Self, TripError> {
        let o = route
            .station_index(origin)
            .ok_or_else(|| TripError::UnknownStation(origin.to_string()))?;
        let d = route
            .station_index(destination)
            .ok_or_else(|| TripError::UnknownStation(destination.to_string()))?;
        if o == d {
            return Err(TripError::SameStation(origin.to_string()));
        }
        if o < d {
            Ok(TripPlan {
                route: route.clone(),
                origin_index: o,
                destination_index: d,
            })
        } else {
            let last = route.stations.len() - 1;
            Ok(TripPlan {
                route: route.reversed(),
                origin_index: last - o,
                destination_index: last - d,
            })
        }
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    pub fn origin_index(&self) -> usize {
        self.origin_index
    }

    pub fn destination_index(&self) -> usize {
        self.destination_index
    }

    pub fn origin(&self) -> &Station {
        &self.route.stations[self.origin_index]
    }

    pub fn destination(&self) -> &Station {
        &self.route.stations[self.destination_index]
    }

    pub fn station(&self, index: usize) -> &Station {
        &self.route.stations[index]
    }

    /// Scheduled seconds for the segment starting at station `index`.
    pub fn segment_duration(&self, index: usize) -> f64 {
        self.route.segment_durations_s[index]
    }

    pub fn segment_count(&self) -> usize {
        self.destination_index - self.origin_index
    }

    /// Route segment indices travelled on this trip, in order.
    pub fn segments(&self) -> std::ops::Range<usize> {
        self.origin_index..self.destination_index
    }

    /// Stations visited on this trip, origin and destination included.
    pub fn stations(&self) -> &[Station] {
        &self.route.stations[self.origin_index..=self.destination_index]
    }

    /// Scheduled durations of this trip's segments.
    pub fn trip_durations(&self) -> &[f64] {
        &self.route.segment_durations_s[self.segments()]
    }

    pub fn scheduled_dwell_s(&self) -> f64 {
        self.route.dwell_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopClass {
    StationStop,
    InBetweenStop,
}

/// Classifies a stop with the default 70 % rule.
pub fn classify_stop(elapsed_s: f64, scheduled_s: f64) -> Result<StopClass, TripError> {
    classify_stop_with_ratio(elapsed_s, scheduled_s, DEFAULT_INBETWEEN_RATIO)
}

/// A stop strictly earlier than `ratio × scheduled` is an in-between stop.
pub fn classify_stop_with_ratio(
    elapsed_s: f64,
    scheduled_s: f64,
    ratio: f64,
) -> Result<StopClass, TripError> {
    if !(scheduled_s > 0.0) {
        return Err(TripError::NonPositiveSchedule(scheduled_s));
    }
    if !(elapsed_s >= 0.0) {
        return Err(TripError::NegativeElapsed(elapsed_s));
    }
    Ok(if elapsed_s < ratio * scheduled_s {
        StopClass::InBetweenStop
    } else {
        StopClass::StationStop
    })
}

/// Linear progress along a segment, clamped to 1 for late trains.
pub fn interpolate(elapsed_s: f64, scheduled_s: f64) -> Result<f64, TripError> {
    if !(scheduled_s > 0.0) {
        return Err(TripError::NonPositiveSchedule(scheduled_s));
    }
    if !(elapsed_s >= 0.0) {
        return Err(TripError::NegativeElapsed(elapsed_s));
    }
    Ok((elapsed_s / scheduled_s).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AtStation,
    EnRoute,
    InBetweenStop,
    Arrived,
}

/// Which transition timestamp the tracker treats as the moment of the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TimeBasis {
    /// Estimated physical start of the stop or departure.
    #[default]
    Onset,
    /// The instant the detector completed its run.
    Detection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub inbetween_ratio: f64,
    pub approach_fraction: f64,
    pub time_basis: TimeBasis,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            inbetween_ratio: DEFAULT_INBETWEEN_RATIO,
            approach_fraction: DEFAULT_APPROACH_FRACTION,
            time_basis: TimeBasis::Onset,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TripError> {
        if !(self.inbetween_ratio > 0.0 && self.inbetween_ratio <= 1.0) {
            return Err(TripError::BadConfig("inbetween_ratio"));
        }
        if !(self.approach_fraction > 0.0 && self.approach_fraction <= 1.0) {
            return Err(TripError::BadConfig("approach_fraction"));
        }
        Ok(())
    }
}

/// Progress of one trip.
///
/// `segment_index` is a route segment index: the segment being travelled, or
/// the upcoming one while standing at a station. On arrival it stays on the
/// final segment and the phase becomes [`Phase::Arrived`].
#[derive(Debug, Clone, PartialEq)]
pub struct TripState {
    pub segment_index: usize,
    pub phase: Phase,
    /// Last accepted departure.
    pub departure_t_ms: Option<f64>,
    /// Last accepted stop.
    pub stop_t_ms: Option<f64>,
    /// First departure in the current segment; elapsed time counts from here.
    pub segment_start_t_ms: Option<f64>,
    /// Time spent at in-between stops in the current segment.
    pub paused_ms: f64,
    /// Position shown while standing at an in-between stop.
    pub frozen_fraction: f64,
    pub motion: Motion,
    last_event_ms: f64,
    last_detection_ms: f64,
    approach_sent: bool,
    /// Highest fraction shown in the current segment. Backdated transitions
    /// must not move the displayed position backwards.
    shown_fraction: f64,
}

impl TripState {
    pub fn at_origin(plan: &TripPlan) -> Self {
        TripState {
            segment_index: plan.origin_index(),
            phase: Phase::AtStation,
            departure_t_ms: None,
            stop_t_ms: None,
            segment_start_t_ms: None,
            paused_ms: 0.0,
            frozen_fraction: 0.0,
            motion: Motion::Stopped,
            last_event_ms: 0.0,
            last_detection_ms: f64::NEG_INFINITY,
            approach_sent: false,
            shown_fraction: 0.0,
        }
    }

    /// Timestamp of the last accepted transition, on the tracker's time basis.
    pub fn last_transition_ms(&self) -> f64 {
        self.last_event_ms
    }

    fn elapsed_s(&self, now_ms: f64) -> f64 {
        let start = self.segment_start_t_ms.unwrap_or(now_ms);
        ((now_ms - start - self.paused_ms) / 1000.0).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub prev_station: String,
    pub next_station: String,
    pub fraction: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TripEventKind {
    Departed,
    StationArrival { station_id: String },
    InBetweenStop { fraction: f64 },
    ApproachingStation { station_id: String },
    ArrivedAtDestination { station_id: String },
    UnexpectedExtraStop,
}

impl TripEventKind {
    pub fn name(&self) -> &'static str {
        match self {
            TripEventKind::Departed => "departed",
            TripEventKind::StationArrival { .. } => "station_arrival",
            TripEventKind::InBetweenStop { .. } => "in_between_stop",
            TripEventKind::ApproachingStation { .. } => "approaching_station",
            TripEventKind::ArrivedAtDestination { .. } => "arrived_at_destination",
            TripEventKind::UnexpectedExtraStop => "unexpected_extra_stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripEvent {
    pub t_ms: f64,
    pub kind: TripEventKind,
}

/// Applies one motion transition to a trip state.
pub fn advance(
    state: &TripState,
    transition: &MotionTransition,
    plan: &TripPlan,
    config: &TrackerConfig,
) -> Result<(TripState, Vec<TripEvent>), TripError> {
    if transition.t_ms < state.last_detection_ms {
        return Err(TripError::OutOfOrder {
            last: state.last_detection_ms,
            got: transition.t_ms,
        });
    }
    let expected = match state.motion {
        Motion::Stopped => TransitionKind::MovingDetected,
        Motion::Moving => TransitionKind::StopDetected,
    };
    if transition.kind != expected {
        return Err(TripError::UnexpectedTransition {
            expected,
            got: transition.kind,
        });
    }

    let t = match config.time_basis {
        TimeBasis::Onset => transition.onset_t_ms,
        TimeBasis::Detection => transition.t_ms,
    }
    .max(state.last_event_ms);

    let mut next = state.clone();
    if matches!(state.phase, Phase::EnRoute | Phase::InBetweenStop) {
        let now = transition.t_ms.max(state.last_event_ms);
        next.shown_fraction = estimate_position(state, now, plan)?.fraction;
    }
    next.motion = transition.kind.target();
    next.last_detection_ms = transition.t_ms;
    next.last_event_ms = t;
    let mut events = Vec::new();
    let event = |kind| TripEvent { t_ms: t, kind };

    match (state.phase, transition.kind) {
        (Phase::Arrived, TransitionKind::MovingDetected) => {}
        (Phase::Arrived, TransitionKind::StopDetected) => {
            next.stop_t_ms = Some(t);
            events.push(event(TripEventKind::UnexpectedExtraStop));
        }
        (Phase::AtStation, TransitionKind::MovingDetected) => {
            next.phase = Phase::EnRoute;
            next.departure_t_ms = Some(t);
            next.segment_start_t_ms = Some(t);
            next.paused_ms = 0.0;
            next.frozen_fraction = 0.0;
            next.approach_sent = false;
            events.push(event(TripEventKind::Departed));
        }
        (Phase::InBetweenStop, TransitionKind::MovingDetected) => {
            next.phase = Phase::EnRoute;
            next.paused_ms += t - state.stop_t_ms.unwrap_or(t);
            next.departure_t_ms = Some(t);
            events.push(event(TripEventKind::Departed));
        }
        (Phase::EnRoute, TransitionKind::StopDetected) => {
            next.stop_t_ms = Some(t);
            let seg = state.segment_index;
            let scheduled = plan.segment_duration(seg);
            let elapsed = state.elapsed_s(t);
            match classify_stop_with_ratio(elapsed, scheduled, config.inbetween_ratio)? {
                StopClass::InBetweenStop => {
                    let fraction = interpolate(elapsed, scheduled)?;
                    next.phase = Phase::InBetweenStop;
                    next.frozen_fraction = fraction;
                    events.push(event(TripEventKind::InBetweenStop { fraction }));
                }
                StopClass::StationStop => {
                    let reached = seg + 1;
                    let station_id = plan.station(reached).id.clone();
                    events.push(event(TripEventKind::StationArrival {
                        station_id: station_id.clone(),
                    }));
                    next.segment_start_t_ms = None;
                    next.paused_ms = 0.0;
                    if reached == plan.destination_index() {
                        next.phase = Phase::Arrived;
                        next.frozen_fraction = 1.0;
                        events.push(event(TripEventKind::ArrivedAtDestination { station_id }));
                    } else {
                        next.phase = Phase::AtStation;
                        next.segment_index = reached;
                        next.frozen_fraction = 0.0;
                        next.shown_fraction = 0.0;
                    }
                }
            }
        }
        // The motion check above rules out every other combination.
        (phase, kind) => unreachable!("{kind:?} while {phase:?}"),
    }
    Ok((next, events))
}

/// Where the train is at `now_ms`.
pub fn estimate_position(
    state: &TripState,
    now_ms: f64,
    plan: &TripPlan,
) -> Result<PositionEstimate, TripError> {
    if now_ms < state.last_event_ms {
        return Err(TripError::ClockSkew {
            now: now_ms,
            last: state.last_event_ms,
        });
    }
    let seg = state.segment_index;
    let fraction = match state.phase {
        Phase::AtStation => 0.0,
        Phase::Arrived => 1.0,
        Phase::InBetweenStop => state.frozen_fraction.max(state.shown_fraction),
        Phase::EnRoute => interpolate(state.elapsed_s(now_ms), plan.segment_duration(seg))?
            .max(state.shown_fraction),
    };
    Ok(PositionEstimate {
        prev_station: plan.station(seg).id.clone(),
        next_station: plan.station(seg + 1).id.clone(),
        fraction,
        phase: state.phase,
    })
}

/// Scheduled seconds left until the destination.
pub fn eta(state: &TripState, now_ms: f64, plan: &TripPlan) -> Result<f64, TripError> {
    if state.phase == Phase::Arrived {
        return Ok(0.0);
    }
    let pos = estimate_position(state, now_ms, plan)?;
    let seg = state.segment_index;
    let rest: f64 = (seg + 1..plan.destination_index())
        .map(|i| plan.segment_duration(i))
        .sum();
    Ok((rest + (1.0 - pos.fraction) * plan.segment_duration(seg)).max(0.0))
}

/// Stateful wrapper around [`advance`], [`estimate_position`] and [`eta`].
#[derive(Debug, Clone)]
pub struct TripTracker {
    plan: TripPlan,
    config: TrackerConfig,
    state: TripState,
}

impl TripTracker {
    pub fn new(plan: TripPlan) -> Self {
        Self::with_config(plan, TrackerConfig::default()).expect("default config is valid")
    }

    pub fn with_config(plan: TripPlan, config: TrackerConfig) -> Result<Self, TripError> {
        config.validate()?;
        let state = TripState::at_origin(&plan);
        Ok(TripTracker {
            plan,
            config,
            state,
        })
    }

    pub fn plan(&self) -> &TripPlan {
        &self.plan
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn state(&self) -> &TripState {
        &self.state
    }

    pub fn advance(&mut self, transition: &MotionTransition) -> Result<Vec<TripEvent>, TripError> {
        let (state, events) = advance(&self.state, transition, &self.plan, &self.config)?;
        self.state = state;
        Ok(events)
    }

    /// Emits time-driven events (currently only [`TripEventKind::ApproachingStation`]).
    pub fn poll(&mut self, now_ms: f64) -> Result<Vec<TripEvent>, TripError> {
        if self.state.phase != Phase::EnRoute || self.state.approach_sent {
            return Ok(Vec::new());
        }
        let pos = self.estimate_position(now_ms)?;
        if pos.fraction < self.config.approach_fraction {
            return Ok(Vec::new());
        }
        self.state.approach_sent = true;
        Ok(vec![TripEvent {
            t_ms: now_ms,
            kind: TripEventKind::ApproachingStation {
                station_id: pos.next_station,
            },
        }])
    }

    pub fn estimate_position(&self, now_ms: f64) -> Result<PositionEstimate, TripError> {
        estimate_position(&self.state, now_ms, &self.plan)
    }

    pub fn eta(&self, now_ms: f64) -> Result<f64, TripError> {
        eta(&self.state, now_ms, &self.plan)
    }

    /// Station arrivals still expected before the destination, destination
    /// included.
    pub fn stops_remaining(&self) -> usize {
        match self.state.phase {
            Phase::Arrived => 0,
            _ => self.plan.destination_index() - self.state.segment_index,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stations(n: usize) -> Vec<Station> {
        (0..n)
            .map(|i| Station::new(format!("S{i}"), format!("Station {i}")))
            .collect()
    }

    fn plan(durations: &[f64]) -> TripPlan {
        let route = Route::new("L1", stations(durations.len() + 1), durations.to_vec()).unwrap();
        let last = route.stations.last().unwrap().id.clone();
        TripPlan::new(&route, "S0", &last).unwrap()
    }

    fn tr(kind: TransitionKind, t_s: f64) -> MotionTransition {
        MotionTransition {
            t_ms: t_s * 1000.0,
            onset_t_ms: t_s * 1000.0,
            kind,
            index: 0,
        }
    }

    fn moving(t_s: f64) -> MotionTransition {
        tr(TransitionKind::MovingDetected, t_s)
    }

    fn stop(t_s: f64) -> MotionTransition {
        tr(TransitionKind::StopDetected, t_s)
    }

    fn kinds(events: &[TripEvent]) -> Vec<TripEventKind> {
        events.iter().map(|e| e.kind.clone()).collect()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_stop(83.0, 120.0).unwrap(),
            StopClass::InBetweenStop
        );
        assert_eq!(classify_stop(84.0, 120.0).unwrap(), StopClass::StationStop);
        assert_eq!(classify_stop(0.0, 120.0).unwrap(), StopClass::InBetweenStop);
        assert!(matches!(
            classify_stop(10.0, 0.0),
            Err(TripError::NonPositiveSchedule(_))
        ));
        assert!(classify_stop(-1.0, 10.0).is_err());
    }

    #[test]
    fn interpolate_examples() {
        assert_eq!(interpolate(0.0, 120.0).unwrap(), 0.0);
        assert_eq!(interpolate(60.0, 120.0).unwrap(), 0.5);
        assert_eq!(interpolate(150.0, 120.0).unwrap(), 1.0);
        assert!(interpolate(1.0, -5.0).is_err());
    }

    #[test]
    fn route_from_timetable() {
        let json = r#"{"line_id":"U1","stations":[{"id":"a","name":"A"},{"id":"b","name":"B"}],
                       "departure_times":["08:00","08:03"]}"#;
        let route = load_route(json.as_bytes()).unwrap();
        assert_eq!(route.segment_durations_s, vec![180.0]);
    }

    #[test]
    fn route_errors() {
        let one = r#"{"line_id":"U1","stations":[{"id":"a","name":"A"}],"segment_durations_s":[]}"#;
        assert!(matches!(
            load_route(one.as_bytes()),
            Err(RouteError::TooFewStations(1))
        ));

        let decreasing = r#"{"line_id":"U1","stations":[{"id":"a","name":"A"},{"id":"b","name":"B"},{"id":"c","name":"C"}],
                             "departure_times":["08:00","08:05","08:04"]}"#;
        let err = load_route(decreasing.as_bytes()).unwrap_err();
        assert!(
            matches!(err, RouteError::NonMonotoneTimetable { index: 2, .. }),
            "{err}"
        );

        let dup = r#"{"line_id":"U1","stations":[{"id":"a","name":"A"},{"id":"a","name":"B"}],"segment_durations_s":[60]}"#;
        assert!(matches!(
            load_route(dup.as_bytes()),
            Err(RouteError::DuplicateStation { index: 1, .. })
        ));

        let zero = r#"{"line_id":"U1","stations":[{"id":"a","name":"A"},{"id":"b","name":"B"}],"segment_durations_s":[0]}"#;
        assert!(matches!(
            load_route(zero.as_bytes()),
            Err(RouteError::NonPositiveDuration { index: 0, .. })
        ));

        let both = r#"{"line_id":"U1","stations":[{"id":"a","name":"A"},{"id":"b","name":"B"}]}"#;
        assert!(matches!(
            load_route(both.as_bytes()),
            Err(RouteError::DurationSource)
        ));

        let garbage = r#"{"line_id":"U1","stations":[{"id":"a","name":"A"},{"id":"b","name":"B"}],"departure_times":["8h","9h"]}"#;
        assert!(matches!(
            load_route(garbage.as_bytes()),
            Err(RouteError::BadTime { index: 0, .. })
        ));
    }

    #[test]
    fn route_json_round_trip() {
        let mut route = Route::new("L1", stations(3), vec![60.0, 120.0]).unwrap();
        route.stations[0].lat = Some(50.94);
        route.stations[0].lon = Some(6.96);
        let json = serde_json::to_string(&route).unwrap();
        let back: Route = serde_json::from_str(&json).unwrap();
        assert_eq!(back, route);
    }

    #[test]
    fn plans_are_normalized_to_travel_direction() {
        let route = Route::new("L1", stations(4), vec![60.0, 120.0, 180.0]).unwrap();
        let p = TripPlan::new(&route, "S3", "S1").unwrap();
        assert_eq!(p.origin().id, "S3");
        assert_eq!(p.destination().id, "S1");
        assert!(p.origin_index() < p.destination_index());
        assert_eq!(p.trip_durations(), &[180.0, 120.0]);
        assert!(matches!(
            TripPlan::new(&route, "S1", "S1"),
            Err(TripError::SameStation(_))
        ));
        assert!(matches!(
            TripPlan::new(&route, "S1", "X"),
            Err(TripError::UnknownStation(_))
        ));
    }

    #[test]
    fn three_station_trip() {
        let p = plan(&[120.0, 100.0]);
        let mut t = TripTracker::new(p);
        let mut events = vec![];
        events.extend(t.advance(&moving(10.0)).unwrap());
        events.extend(t.advance(&stop(10.0 + 0.9 * 120.0)).unwrap());
        events.extend(t.advance(&moving(150.0)).unwrap());
        events.extend(t.advance(&stop(150.0 + 0.95 * 100.0)).unwrap());
        assert_eq!(
            kinds(&events),
            vec![
                TripEventKind::Departed,
                TripEventKind::StationArrival {
                    station_id: "S1".into()
                },
                TripEventKind::Departed,
                TripEventKind::StationArrival {
                    station_id: "S2".into()
                },
                TripEventKind::ArrivedAtDestination {
                    station_id: "S2".into()
                },
            ]
        );
        assert_eq!(t.state().phase, Phase::Arrived);
        assert_eq!(t.eta(1e9).unwrap(), 0.0);
        assert_eq!(t.stops_remaining(), 0);
    }

    #[test]
    fn early_stop_is_in_between_and_frozen() {
        let p = plan(&[120.0, 100.0]);
        let mut t = TripTracker::new(p);
        t.advance(&moving(0.0)).unwrap();
        let ev = t.advance(&stop(0.4 * 120.0)).unwrap();
        assert_eq!(
            kinds(&ev),
            vec![TripEventKind::InBetweenStop { fraction: 0.4 }]
        );
        assert_eq!(t.state().segment_index, 0);
        let pos = t
            .estimate_position(0.4 * 120.0 * 1000.0 + 60_000.0)
            .unwrap();
        assert_eq!(pos.fraction, 0.4);
        assert_eq!(
            (pos.prev_station.as_str(), pos.next_station.as_str()),
            ("S0", "S1")
        );
    }

    #[test]
    fn in_between_dwell_does_not_count_as_travel() {
        let p = plan(&[100.0, 100.0]);
        let mut t = TripTracker::new(p);
        t.advance(&moving(0.0)).unwrap();
        t.advance(&stop(30.0)).unwrap();
        // 200 s standing is excluded: 30 s + 45 s of motion = 75 s >= 70 s
        t.advance(&moving(230.0)).unwrap();
        let pos = t.estimate_position(250_000.0).unwrap();
        assert!((pos.fraction - 0.5).abs() < 1e-12);
        let ev = t.advance(&stop(275.0)).unwrap();
        assert_eq!(
            ev[0].kind,
            TripEventKind::StationArrival {
                station_id: "S1".into()
            }
        );

        // a second early halt in the next segment stays in-between
        let mut t2 = TripTracker::new(plan(&[100.0, 100.0]));
        t2.advance(&moving(0.0)).unwrap();
        t2.advance(&stop(30.0)).unwrap();
        t2.advance(&moving(230.0)).unwrap();
        let ev = t2.advance(&stop(260.0)).unwrap();
        assert!(
            matches!(ev[0].kind, TripEventKind::InBetweenStop { fraction } if (fraction - 0.6).abs() < 1e-12)
        );
    }

    #[test]
    fn position_and_eta_examples() {
        let p = plan(&[120.0, 120.0]);
        let mut t = TripTracker::new(p);
        assert_eq!(t.eta(0.0).unwrap(), 240.0);
        assert_eq!(t.stops_remaining(), 2);
        t.advance(&moving(5.0)).unwrap();
        assert_eq!(t.estimate_position(5000.0).unwrap().fraction, 0.0);
        assert_eq!(t.estimate_position(65_000.0).unwrap().fraction, 0.5);
        assert_eq!(t.eta(65_000.0).unwrap(), 180.0);
        assert!(matches!(
            t.estimate_position(1000.0),
            Err(TripError::ClockSkew { .. })
        ));
    }

    #[test]
    fn protocol_errors() {
        let mut t = TripTracker::new(plan(&[120.0]));
        assert!(matches!(
            t.advance(&stop(1.0)),
            Err(TripError::UnexpectedTransition { .. })
        ));
        t.advance(&moving(10.0)).unwrap();
        assert!(matches!(
            t.advance(&moving(20.0)),
            Err(TripError::UnexpectedTransition { .. })
        ));
        assert!(matches!(
            t.advance(&stop(5.0)),
            Err(TripError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn stops_after_arrival_are_extra() {
        let mut t = TripTracker::new(plan(&[60.0]));
        t.advance(&moving(0.0)).unwrap();
        t.advance(&stop(60.0)).unwrap();
        assert!(t.advance(&moving(100.0)).unwrap().is_empty());
        let ev = t.advance(&stop(200.0)).unwrap();
        assert_eq!(kinds(&ev), vec![TripEventKind::UnexpectedExtraStop]);
        assert_eq!(t.state().phase, Phase::Arrived);
    }

    #[test]
    fn approaching_fires_once_per_segment() {
        let mut t = TripTracker::new(plan(&[100.0, 100.0]));
        assert!(t.poll(0.0).unwrap().is_empty());
        t.advance(&moving(0.0)).unwrap();
        assert!(t.poll(80_000.0).unwrap().is_empty());
        let ev = t.poll(90_000.0).unwrap();
        assert_eq!(
            kinds(&ev),
            vec![TripEventKind::ApproachingStation {
                station_id: "S1".into()
            }]
        );
        assert!(t.poll(95_000.0).unwrap().is_empty());
    }

    #[test]
    fn no_transitions_no_change() {
        let p = plan(&[100.0]);
        let t = TripTracker::new(p.clone());
        assert_eq!(t.state(), &TripState::at_origin(&p));
    }

    #[test]
    fn detection_time_basis() {
        let cfg = TrackerConfig {
            time_basis: TimeBasis::Detection,
            ..Default::default()
        };
        let mut t = TripTracker::with_config(plan(&[100.0]), cfg).unwrap();
        let m = MotionTransition {
            t_ms: 7000.0,
            onset_t_ms: 20.0,
            kind: TransitionKind::MovingDetected,
            index: 0,
        };
        let ev = t.advance(&m).unwrap();
        assert_eq!(ev[0].t_ms, 7000.0);
        assert!(TripTracker::with_config(
            plan(&[100.0]),
            TrackerConfig {
                inbetween_ratio: 0.0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
