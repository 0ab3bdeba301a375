//! Signal preprocessing: irregularly sampled sensor channels are resampled to
//! a fixed length and normalized to positive unit-norm vectors.
//!
//! A tap window carries six channels (accelerometer x, y, z then gyroscope
//! x, y, z). The two sensors report independently, so the accelerometer and
//! gyroscope channels of one session may have different lengths. The
//! preprocessing contract is:
//!
//! 1. linear resampling of each channel to [`SIGNAL_LEN`] values,
//! 2. subtraction of the channel minimum (all values become non-negative),
//! 3. division by the Euclidean norm.

use crate::error::{Error, Result};

/// Fixed post-resampling signal length (1.5 s at a nominal 100 Hz).
pub const SIGNAL_LEN: usize = 150;

/// Number of sensor channels per tap session.
pub const NUM_CHANNELS: usize = 6;

/// Canonical channel names in symbol order 0..=5.
pub const CHANNEL_NAMES: [&str; NUM_CHANNELS] =
    ["acc.x", "acc.y", "acc.z", "gyro.x", "gyro.y", "gyro.z"];

/// One raw sensor channel: magnitudes plus their sample times in seconds
/// from the window start.
#[derive(Debug, Clone, PartialEq)]
pub struct RawChannel {
    values: Vec<f64>,
    timestamps: Vec<f64>,
}

impl RawChannel {
    /// Build a channel, enforcing equal lengths, length >= 2 and strictly
    /// increasing timestamps.
    pub fn new(values: Vec<f64>, timestamps: Vec<f64>) -> Result<Self> {
        if values.len() != timestamps.len() {
            return Err(Error::invalid(format!(
                "channel has {} values but {} timestamps",
                values.len(),
                timestamps.len()
            )));
        }
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "channel needs at least 2 samples, got {}",
                values.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "channel timestamps must be strictly increasing".to_string(),
            ));
        }
        Ok(Self { values, timestamps })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Six raw sensor channels recorded around one tap event.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSession {
    pub user_id: String,
    pub tap_index: u32,
    channels: [RawChannel; NUM_CHANNELS],
    pub window_seconds: f64,
}

impl TapSession {
    /// Build a session. Channels 0-2 must share one length and channels 3-5
    /// another (the two sensors report independently).
    pub fn new(
        user_id: impl Into<String>,
        tap_index: u32,
        channels: [RawChannel; NUM_CHANNELS],
        window_seconds: f64,
    ) -> Result<Self> {
        let acc_len = channels[0].len();
        if channels[1].len() != acc_len || channels[2].len() != acc_len {
            return Err(Error::invalid(
                "accelerometer channels must share one length".to_string(),
            ));
        }
        let gyro_len = channels[3].len();
        if channels[4].len() != gyro_len || channels[5].len() != gyro_len {
            return Err(Error::invalid(
                "gyroscope channels must share one length".to_string(),
            ));
        }
        Ok(Self {
            user_id: user_id.into(),
            tap_index,
            channels,
            window_seconds,
        })
    }

    pub fn channels(&self) -> &[RawChannel; NUM_CHANNELS] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &RawChannel {
        &self.channels[index]
    }
}

/// A length-150, non-negative, unit-norm signal ready for image encoding.
///
/// The all-zeros vector is the designated degenerate value for constant
/// input channels, where the post-shift norm vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSignal {
    values: Vec<f64>,
}

impl NormalizedSignal {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Resample a channel to `target_len` values by linear interpolation in index
/// space: query positions are uniformly spaced over 0..L-1 and timestamps are
/// ignored.
pub fn resample_linear(channel: &RawChannel, target_len: usize) -> Result<Vec<f64>> {
    if target_len < 2 {
        return Err(Error::invalid(format!(
            "target length must be at least 2, got {target_len}"
        )));
    }
    Ok(resample_values(channel.values(), target_len))
}

/// Interpolation core shared with the session helpers. `values.len() >= 2`.
fn resample_values(values: &[f64], target_len: usize) -> Vec<f64> {
    let n = values.len();
    debug_assert!(n >= 2);
    let scale = (n - 1) as f64 / (target_len - 1) as f64;
    (0..target_len)
        .map(|i| {
            // i * (n-1) is an exact integer in f64, so endpoints are exact.
            let pos = i as f64 * scale;
            let lo = pos.floor() as usize;
            if lo >= n - 1 {
                values[n - 1]
            } else {
                let frac = pos - lo as f64;
                values[lo] + frac * (values[lo + 1] - values[lo])
            }
        })
        .collect()
}

/// Shift a vector so its minimum becomes 0, then divide by the Euclidean
/// norm. A (near-)constant input maps to all zeros.
pub(crate) fn shift_unit_norm(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = values.iter().map(|v| v - min).collect();
    let norm = shifted.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        vec![0.0; values.len()]
    } else {
        shifted.into_iter().map(|v| v / norm).collect()
    }
}

/// Normalize a length-150 vector per the shift-then-unit-norm contract.
pub fn normalize_signal(values: &[f64]) -> Result<NormalizedSignal> {
    if values.len() != SIGNAL_LEN {
        return Err(Error::invalid(format!(
            "expected {} values, got {}",
            SIGNAL_LEN,
            values.len()
        )));
    }
    Ok(NormalizedSignal {
        values: shift_unit_norm(values),
    })
}

/// Resample all six channels of a session to [`SIGNAL_LEN`] values each.
///
/// This is the shared temporal alignment consumed by both the handcrafted
/// feature extractor and the image encoder.
pub fn resample_session(session: &TapSession) -> Result<[Vec<f64>; NUM_CHANNELS]> {
    let mut out: [Vec<f64>; NUM_CHANNELS] = Default::default();
    for (slot, channel) in out.iter_mut().zip(session.channels().iter()) {
        *slot = resample_linear(channel, SIGNAL_LEN)?;
    }
    Ok(out)
}

/// Normalize six resampled signals.
pub fn normalize_session(
    resampled: &[Vec<f64>; NUM_CHANNELS],
) -> Result<[NormalizedSignal; NUM_CHANNELS]> {
    let mut out: [NormalizedSignal; NUM_CHANNELS] =
        std::array::from_fn(|_| NormalizedSignal { values: Vec::new() });
    for (slot, values) in out.iter_mut().zip(resampled.iter()) {
        *slot = normalize_signal(values)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn channel(values: Vec<f64>) -> RawChannel {
        let timestamps = (0..values.len()).map(|i| i as f64 * 0.01).collect();
        RawChannel::new(values, timestamps).unwrap()
    }

    /// Independent piecewise-linear evaluator: walks the polyline segment by
    /// segment instead of indexing, so it shares no code with the
    /// implementation.
    fn polyline_eval(values: &[f64], x: f64) -> f64 {
        let mut best = values[values.len() - 1];
        for (seg, w) in values.windows(2).enumerate() {
            let (x0, x1) = (seg as f64, seg as f64 + 1.0);
            if x >= x0 && x <= x1 {
                best = w[0] + (x - x0) / (x1 - x0) * (w[1] - w[0]);
                break;
            }
        }
        best
    }

    #[test]
    fn resample_matches_closed_form() {
        let out = resample_linear(&channel(vec![0.0, 1.0, 2.0, 3.0]), 7).unwrap();
        let expected = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        for (a, b) in out.iter().zip(expected.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn resample_matches_polyline_oracle() {
        let values = vec![1.5, -2.0, 0.25, 4.0, 4.0, -1.0, 7.5];
        let target = 41;
        let out = resample_linear(&channel(values.clone()), target).unwrap();
        for (i, v) in out.iter().enumerate() {
            let x = i as f64 * (values.len() - 1) as f64 / (target - 1) as f64;
            assert_relative_eq!(*v, polyline_eval(&values, x), epsilon = 1e-12);
        }
    }

    #[test]
    fn resample_identity_when_lengths_match() {
        let values: Vec<f64> = (0..150).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = resample_linear(&channel(values.clone()), 150).unwrap();
        assert_eq!(out, values);
    }

    #[test]
    fn resample_constant_channel() {
        let out = resample_linear(&channel(vec![5.0, 5.0, 5.0]), 150).unwrap();
        assert_eq!(out, vec![5.0; 150]);
    }

    #[test]
    fn resample_preserves_endpoints() {
        let values = vec![-3.25, 8.0, 1.0, 2.5];
        let out = resample_linear(&channel(values.clone()), 97).unwrap();
        assert_eq!(out[0], values[0]);
        assert_eq!(out[96], values[3]);
    }

    #[test]
    fn resample_rejects_short_channel() {
        let err = RawChannel::new(vec![1.0], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn raw_channel_rejects_non_increasing_timestamps() {
        let err = RawChannel::new(vec![1.0, 2.0, 3.0], vec![0.0, 0.2, 0.2]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn normalize_matches_hand_arithmetic() {
        // Length-3 illustration of the formula on the internal helper:
        // [1,-1,1] shifts to [2,0,2] with norm sqrt(8).
        let out = shift_unit_norm(&[1.0, -1.0, 1.0]);
        assert_relative_eq!(out[0], 0.7071067811865475, epsilon = 1e-9);
        assert_relative_eq!(out[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(out[2], 0.7071067811865475, epsilon = 1e-9);
        // Cross-check against an independent norm computation.
        let shifted = [2.0, 0.0, 2.0];
        let norm = shifted.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (o, s) in out.iter().zip(shifted.iter()) {
            assert_relative_eq!(*o, s / norm, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_constant_input_is_zero() {
        let out = normalize_signal(&[3.5; SIGNAL_LEN]).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn normalize_rejects_wrong_length() {
        let err = normalize_signal(&[1.0; 149]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn normalize_postconditions() {
        let values: Vec<f64> = (0..SIGNAL_LEN).map(|i| (i as f64 * 0.11).cos()).collect();
        let out = normalize_signal(&values).unwrap();
        let min = out.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let norm = out.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_eq!(min, 0.0);
        assert_relative_eq!(norm, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn session_rejects_mismatched_sensor_lengths() {
        let mk = |n: usize| channel((0..n).map(|i| i as f64).collect());
        let err = TapSession::new(
            "u",
            0,
            [mk(10), mk(10), mk(9), mk(8), mk(8), mk(8)],
            1.5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    proptest! {
        #[test]
        fn resample_scale_equivariant(
            values in prop::collection::vec(-50.0f64..50.0, 2..40),
            alpha in -4.0f64..4.0,
            target in 2usize..80,
        ) {
            let base = resample_values(&values, target);
            let scaled_in: Vec<f64> = values.iter().map(|v| alpha * v).collect();
            let scaled = resample_values(&scaled_in, target);
            for (s, b) in scaled.iter().zip(base.iter()) {
                prop_assert!((s - alpha * b).abs() < 1e-9);
            }
        }

        #[test]
        fn resample_preserves_monotonicity(
            increments in prop::collection::vec(0.0f64..5.0, 1..40),
            target in 2usize..80,
        ) {
            let mut values = vec![0.0];
            for inc in increments {
                values.push(values.last().unwrap() + inc);
            }
            let out = resample_values(&values, target);
            for w in out.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
        }

        #[test]
        fn normalize_invariant_to_offset_and_scale(
            values in prop::collection::vec(-10.0f64..10.0, SIGNAL_LEN),
            offset in -100.0f64..100.0,
            scale in 0.01f64..50.0,
        ) {
            let base = normalize_signal(&values).unwrap();
            let transformed: Vec<f64> = values.iter().map(|v| scale * v + offset).collect();
            let out = normalize_signal(&transformed).unwrap();
            for (a, b) in out.values().iter().zip(base.values().iter()) {
                prop_assert!((a - b).abs() < 1e-7);
            }
        }

        #[test]
        fn normalize_output_in_unit_ball(
            values in prop::collection::vec(-10.0f64..10.0, SIGNAL_LEN),
        ) {
            let out = normalize_signal(&values).unwrap();
            let min = out.values().iter().cloned().fold(f64::INFINITY, f64::min);
            let norm: f64 = out.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(min == 0.0);
            prop_assert!(out.is_zero() || (norm - 1.0).abs() < 1e-9);
        }
    }
}
