//! Acceleration synthesis and trailing rolling-mean smoothing.
//!
//! Raw samples are linear acceleration (gravity already removed by the
//! platform) on the device's fixed sensor axes. The detector only looks at
//! the magnitude `a = sqrt(x² + y² + z²)`, averaged over the last `n`
//! samples.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{DetectorParams, ParamsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("sample field `{field}` is not finite ({value})")]
    NonFinite { field: &'static str, value: f64 },
    #[error("sample timestamp {0} ms is negative")]
    NegativeTime(f64),
    #[error("smoothing window must hold at least one sample")]
    EmptyWindow,
}

/// One linear-acceleration reading, timestamped in milliseconds since the
/// start of the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AccelSample {
    pub fn new(t_ms: f64, x: f64, y: f64, z: f64) -> Result<Self, SignalError> {
        let sample = AccelSample { t_ms, x, y, z };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        for (field, value) in [
            ("t_ms", self.t_ms),
            ("x", self.x),
            ("y", self.y),
            ("z", self.z),
        ] {
            if !value.is_finite() {
                return Err(SignalError::NonFinite { field, value });
            }
        }
        if self.t_ms < 0.0 {
            return Err(SignalError::NegativeTime(self.t_ms));
        }
        Ok(())
    }
}

/// Synthesized acceleration magnitude in m/s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeSample {
    pub t_ms: f64,
    pub a: f64,
}

/// Constant per-axis offset subtracted before synthesis.
///
/// Some devices report a non-zero linear acceleration at rest because of a
/// miscalibrated gyroscope; when the offset is known it can be removed here.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisBias {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AxisBias {
    pub fn apply(&self, s: &AccelSample) -> AccelSample {
        AccelSample {
            t_ms: s.t_ms,
            x: s.x - self.x,
            y: s.y - self.y,
            z: s.z - self.z,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.z == 0.0
    }
}

/// Collapses a three-axis sample into its Euclidean magnitude.
///
/// The squares are summed smallest first so the result is bit-identical under
/// any permutation of the axes.
pub fn synthesize(sample: &AccelSample) -> Result<MagnitudeSample, SignalError> {
    sample.validate()?;
    let mut sq = [
        sample.x * sample.x,
        sample.y * sample.y,
        sample.z * sample.z,
    ];
    sq.sort_by(f64::total_cmp);
    Ok(MagnitudeSample {
        t_ms: sample.t_ms,
        a: (sq[0] + sq[1] + sq[2]).sqrt(),
    })
}

/// Trailing mean over the last `n` values.
///
/// The running sum is compensated (Neumaier) and re-summed from the buffer
/// once every `n` pushes, so the result does not drift over long streams.
#[derive(Debug, Clone)]
pub struct RollingMean {
    n: usize,
    buf: VecDeque<f64>,
    sum: f64,
    comp: f64,
    since_resum: usize,
}

impl RollingMean {
    pub fn new(n: usize) -> Result<Self, SignalError> {
        if n == 0 {
            return Err(SignalError::EmptyWindow);
        }
        Ok(RollingMean {
            n,
            buf: VecDeque::with_capacity(n),
            sum: 0.0,
            comp: 0.0,
            since_resum: 0,
        })
    }

    pub fn window(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.n
    }

    /// Pushes a value; returns the window mean once the window is full.
    pub fn push(&mut self, v: f64) -> Option<f64> {
        if self.buf.len() == self.n {
            let old = self.buf.pop_front().expect("full window");
            self.add(-old);
        }
        self.buf.push_back(v);
        self.add(v);

        self.since_resum += 1;
        if self.since_resum >= self.n {
            self.resum();
        }

        self.is_full()
            .then(|| (self.sum + self.comp) / self.n as f64)
    }

    pub fn reset(&mut self) {
        self.buf.clear();
        self.sum = 0.0;
        self.comp = 0.0;
        self.since_resum = 0;
    }

    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn resum(&mut self) {
        self.sum = 0.0;
        self.comp = 0.0;
        for i in 0..self.buf.len() {
            let v = self.buf[i];
            self.add(v);
        }
        self.since_resum = 0;
    }
}

/// Streaming smoother over magnitude samples. Emits nothing until the window
/// is full; each output carries the timestamp of the newest input.
#[derive(Debug, Clone)]
pub struct Smoother {
    mean: RollingMean,
}

impl Smoother {
    pub fn new(n: usize) -> Result<Self, SignalError> {
        Ok(Smoother {
            mean: RollingMean::new(n)?,
        })
    }

    pub fn push(&mut self, s: MagnitudeSample) -> Option<MagnitudeSample> {
        self.mean
            .push(s.a)
            .map(|a| MagnitudeSample { t_ms: s.t_ms, a })
    }

    pub fn window(&self) -> usize {
        self.mean.window()
    }
}

/// Batch form of [`Smoother`].
pub fn smooth(samples: &[MagnitudeSample], n: usize) -> Result<Vec<MagnitudeSample>, SignalError> {
    let mut sm = Smoother::new(n)?;
    Ok(samples.iter().filter_map(|s| sm.push(*s)).collect())
}

/// Rescales the sample-count parameters for a trace recorded at
/// `actual_rate_hz` instead of the parameters' nominal rate. The threshold is
/// left untouched.
pub fn resample_params(
    params: &DetectorParams,
    actual_rate_hz: f64,
) -> Result<DetectorParams, ParamsError> {
    if !(actual_rate_hz > 0.0) || !actual_rate_hz.is_finite() {
        return Err(ParamsError::NonPositiveRate(actual_rate_hz));
    }
    params.validate()?;
    let scale = actual_rate_hz / params.nominal_rate_hz;
    let rescale = |count: usize| ((count as f64 * scale).round() as usize).max(1);
    Ok(DetectorParams {
        gamma: params.gamma,
        delta_below: rescale(params.delta_below),
        delta_above: rescale(params.delta_above),
        window_n: rescale(params.window_n),
        nominal_rate_hz: actual_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mag(t_ms: f64, a: f64) -> MagnitudeSample {
        MagnitudeSample { t_ms, a }
    }

    // Independent oracle: recompute every window from scratch.
    fn brute_force(values: &[f64], n: usize) -> Vec<f64> {
        values
            .windows(n)
            .map(|w| w.iter().sum::<f64>() / n as f64)
            .collect()
    }

    #[test]
    fn synthesize_examples() {
        let a = |t, x, y, z| synthesize(&AccelSample::new(t, x, y, z).unwrap()).unwrap();
        assert_eq!(a(0.0, 0.0, 0.0, 0.0), mag(0.0, 0.0));
        assert_eq!(a(10.0, 3.0, 4.0, 0.0), mag(10.0, 5.0));
        assert_eq!(a(20.0, 1.0, 2.0, 2.0), mag(20.0, 3.0));
    }

    #[test]
    fn non_finite_components_are_rejected() {
        let err = AccelSample::new(0.0, 1.0, f64::NAN, 0.0).unwrap_err();
        assert!(matches!(err, SignalError::NonFinite { field: "y", .. }));
        let raw = AccelSample {
            t_ms: 5.0,
            x: 0.0,
            y: 0.0,
            z: f64::INFINITY,
        };
        assert!(matches!(
            synthesize(&raw),
            Err(SignalError::NonFinite { field: "z", .. })
        ));
        assert!(matches!(
            AccelSample::new(-1.0, 0.0, 0.0, 0.0),
            Err(SignalError::NegativeTime(_))
        ));
    }

    #[test]
    fn bias_is_subtracted_per_axis() {
        let bias = AxisBias {
            x: 1.0,
            y: -0.5,
            z: 0.0,
        };
        let s = bias.apply(&AccelSample::new(0.0, 1.0, -0.5, 0.0).unwrap());
        assert_eq!(synthesize(&s).unwrap().a, 0.0);
    }

    #[test]
    fn smooth_examples() {
        let constant: Vec<_> = (0..300).map(|i| mag(i as f64 * 20.0, 0.5)).collect();
        let out = smooth(&constant, 100).unwrap();
        assert_eq!(out.len(), 201);
        assert!(out.iter().all(|s| s.a == 0.5));
        assert_eq!(out[0].t_ms, 99.0 * 20.0);

        let out = smooth(&[mag(0.0, 0.0), mag(20.0, 1.0)], 2).unwrap();
        assert_eq!(out, vec![mag(20.0, 0.5)]);

        assert_eq!(smooth(&[mag(0.0, 1.0)], 0), Err(SignalError::EmptyWindow));
    }

    #[test]
    fn smooth_matches_brute_force_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let input: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, &a)| mag(i as f64, a))
            .collect();
        let out = smooth(&input, 100).unwrap();
        let expected = brute_force(&values, 100);
        assert_eq!(out.len(), expected.len());
        for (o, e) in out.iter().zip(&expected) {
            assert!((o.a - e).abs() <= 1e-9);
        }
    }

    #[test]
    fn warm_up_emits_nothing() {
        let mut sm = Smoother::new(3).unwrap();
        assert!(sm.push(mag(0.0, 1.0)).is_none());
        assert!(sm.push(mag(1.0, 1.0)).is_none());
        assert_eq!(sm.push(mag(2.0, 4.0)), Some(mag(2.0, 2.0)));
    }

    #[test]
    fn resample_examples() {
        let ww = DetectorParams::worldwide();
        assert_eq!(resample_params(&ww, 50.0).unwrap(), ww);

        let half = resample_params(&ww, 25.0).unwrap();
        assert_eq!(
            (half.window_n, half.delta_below, half.delta_above),
            (50, 125, 175)
        );
        assert_eq!(half.gamma, ww.gamma);

        let double = resample_params(&ww, 100.0).unwrap();
        assert_eq!(
            (double.window_n, double.delta_below, double.delta_above),
            (200, 500, 700)
        );

        assert!(resample_params(&ww, 0.0).is_err());
        assert!(resample_params(&ww, -3.0).is_err());
        // very low rates never round a count down to zero
        let tiny = resample_params(&ww, 0.01).unwrap();
        assert!(tiny.window_n >= 1 && tiny.delta_below >= 1 && tiny.delta_above >= 1);
    }

    proptest! {
        #[test]
        fn synthesize_ignores_axis_order_and_sign(
            x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0,
            perm in 0usize..6, signs in 0u8..8,
        ) {
            let base = synthesize(&AccelSample::new(0.0, x, y, z).unwrap()).unwrap().a;
            let v = [x, y, z];
            let order = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]][perm];
            let flip = |i: usize, val: f64| if signs & (1 << i) != 0 { -val } else { val };
            let s = AccelSample::new(0.0, flip(0, v[order[0]]), flip(1, v[order[1]]), flip(2, v[order[2]])).unwrap();
            prop_assert_eq!(synthesize(&s).unwrap().a, base);
            prop_assert!(base >= 0.0);
            prop_assert_eq!(base == 0.0, x == 0.0 && y == 0.0 && z == 0.0);
        }

        #[test]
        fn smooth_stays_within_window_bounds(
            values in proptest::collection::vec(0.0f64..10.0, 1..300),
            n in 1usize..40,
        ) {
            let input: Vec<_> = values.iter().enumerate().map(|(i, &a)| mag(i as f64, a)).collect();
            let out = smooth(&input, n).unwrap();
            prop_assert_eq!(out.len(), values.len().saturating_sub(n - 1));
            for (k, s) in out.iter().enumerate() {
                let w = &values[k..k + n];
                let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let slack = 1e-12 * hi.max(1.0);
                prop_assert!(s.a >= lo - slack && s.a <= hi + slack);
                prop_assert_eq!(s.t_ms, (k + n - 1) as f64);
            }
            prop_assert_eq!(smooth(&input, n).unwrap(), out);
        }
    }
}
