use proptest::prelude::*;
use undertrack::trip::{
    classify_stop, Phase, Route, Station, StopClass, TimeBasis, TrackerConfig, TripPlan,
    TripTracker,
};
use undertrack::{MotionTransition, TransitionKind};

fn plan_strategy() -> impl Strategy<Value = TripPlan> {
    (2usize..9)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(30.0f64..400.0, n - 1),
                0..n,
                0..n,
                Just(n),
            )
        })
        .prop_filter("distinct ends", |(_, o, d, _)| o != d)
        .prop_map(|(durations, o, d, n)| {
            let stations = (0..n)
                .map(|i| Station::new(format!("s{i}"), format!("S{i}")))
                .collect();
            let route = Route::new("P", stations, durations).unwrap();
            TripPlan::new(&route, &format!("s{o}"), &format!("s{d}")).unwrap()
        })
}

/// Alternating transitions, starting with a departure. Each entry is
/// (gap since previous detection, detection lag), both in ms.
fn transitions_strategy() -> impl Strategy<Value = Vec<MotionTransition>> {
    prop::collection::vec((1_000.0f64..300_000.0, 0.0f64..7_000.0), 0..40).prop_map(|steps| {
        let mut t = 0.0;
        steps
            .into_iter()
            .enumerate()
            .map(|(i, (gap, lag))| {
                t += gap;
                MotionTransition {
                    t_ms: t,
                    onset_t_ms: t - lag.min(gap - 1.0),
                    kind: if i % 2 == 0 {
                        TransitionKind::MovingDetected
                    } else {
                        TransitionKind::StopDetected
                    },
                    index: i as u64,
                }
            })
            .collect()
    })
}

/// Replays `transitions`, probing position and eta between updates.
fn check_invariants(
    plan: &TripPlan,
    transitions: &[MotionTransition],
    basis: TimeBasis,
    probes: usize,
) -> Result<(), TestCaseError> {
    let config = TrackerConfig {
        time_basis: basis,
        ..TrackerConfig::default()
    };
    let mut tracker = TripTracker::with_config(plan.clone(), config).unwrap();
    let mut last_segment = tracker.state().segment_index;
    let mut last_eta = tracker.eta(0.0).unwrap();
    let mut last_fraction: Option<(usize, f64)> = None;
    let end = transitions.last().map_or(0.0, |t| t.t_ms) + 600_000.0;

    for (i, tr) in transitions.iter().enumerate() {
        tracker.advance(tr).unwrap();
        let state = tracker.state();
        prop_assert!(state.segment_index >= last_segment);
        prop_assert!((plan.origin_index()..plan.destination_index()).contains(&state.segment_index));
        last_segment = state.segment_index;

        let seg = state.segment_index;
        let next = transitions.get(i + 1).map_or(end, |t| t.t_ms);
        for k in 0..=probes {
            let now = tr.t_ms + (next - tr.t_ms) * k as f64 / (probes + 1) as f64;
            let pos = tracker.estimate_position(now).unwrap();
            prop_assert!((0.0..=1.0).contains(&pos.fraction));

            let eta = tracker.eta(now).unwrap();
            prop_assert!(eta >= 0.0);
            prop_assert!(
                eta <= last_eta + 1e-9,
                "eta rose from {} to {}",
                last_eta,
                eta
            );
            last_eta = eta;

            match pos.phase {
                Phase::EnRoute | Phase::InBetweenStop => {
                    if let Some((s, f)) = last_fraction {
                        if s == seg {
                            prop_assert!(
                                pos.fraction >= f,
                                "fraction fell from {} to {}",
                                f,
                                pos.fraction
                            );
                        }
                    }
                    last_fraction = Some((seg, pos.fraction));
                }
                Phase::Arrived => prop_assert_eq!(eta, 0.0),
                Phase::AtStation => last_fraction = None,
            }
        }
    }
    if tracker.state().phase == Phase::Arrived {
        prop_assert_eq!(tracker.eta(end).unwrap(), 0.0);
        prop_assert_eq!(tracker.stops_remaining(), 0);
    }
    Ok(())
}

proptest! {
    #[test]
    fn invariants_on_detection_time(plan in plan_strategy(), transitions in transitions_strategy(), probes in 1usize..6) {
        check_invariants(&plan, &transitions, TimeBasis::Detection, probes)?;
    }

    #[test]
    fn invariants_on_onset_time(plan in plan_strategy(), transitions in transitions_strategy(), probes in 1usize..6) {
        check_invariants(&plan, &transitions, TimeBasis::Onset, probes)?;
    }

    #[test]
    fn seventy_percent_rule(scheduled in 1.0f64..1000.0, share in 0.0f64..2.0) {
        let elapsed = scheduled * share;
        let class = classify_stop(elapsed, scheduled).unwrap();
        let expected = if elapsed < 0.7 * scheduled { StopClass::InBetweenStop } else { StopClass::StationStop };
        prop_assert_eq!(class, expected);
    }
}

#[test]
fn seventy_percent_boundary() {
    assert_eq!(
        classify_stop(83.0, 120.0).unwrap(),
        StopClass::InBetweenStop
    );
    assert_eq!(classify_stop(84.0, 120.0).unwrap(), StopClass::StationStop);
}

#[test]
fn a_full_trip_reaches_zero_eta() {
    let stations = (0..4)
        .map(|i| Station::new(format!("s{i}"), format!("S{i}")))
        .collect();
    let route = Route::new("P", stations, vec![100.0, 100.0, 100.0]).unwrap();
    let plan = TripPlan::new(&route, "s0", "s3").unwrap();
    let mut tracker = TripTracker::new(plan);
    let mut t = 0.0;
    for i in 0..6 {
        t += 100_000.0;
        let kind = if i % 2 == 0 {
            TransitionKind::MovingDetected
        } else {
            TransitionKind::StopDetected
        };
        tracker
            .advance(&MotionTransition {
                t_ms: t,
                onset_t_ms: t,
                kind,
                index: i,
            })
            .unwrap();
    }
    assert_eq!(tracker.state().phase, Phase::Arrived);
    assert_eq!(tracker.eta(t).unwrap(), 0.0);
}
