//! Handcrafted statistical baseline features.
//!
//! Every session maps to a 102-dimensional vector: 12 time-domain statistics
//! per signal (72 values) followed by Pearson and Kendall tau-b correlations
//! for each of the 15 unordered signal pairs (30 values). Features are
//! computed on the resampled signals, before unit-norm normalization, so the
//! baseline and the CNN consume the same temporal alignment.

use crate::error::{Error, Result};
use crate::signal::{NUM_CHANNELS, SIGNAL_LEN};

/// Dimension of the handcrafted feature vector.
pub const HANDCRAFTED_DIM: usize = 102;

/// Number of statistics per signal.
pub const STATS_PER_SIGNAL: usize = 12;

/// The 102-dimensional handcrafted feature vector of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct HandcraftedVector {
    values: Vec<f64>,
}

impl HandcraftedVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Twelve statistics of one signal, in this order: mean, min, max,
/// population variance, excess kurtosis, skewness, then the 30%..80%
/// quantiles in 10% steps (linear interpolation between order statistics).
///
/// Moment ratios of a constant signal are defined as 0.
pub fn stat_features(signal: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::invalid("cannot compute statistics of an empty signal"));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("signal contains non-finite values"));
    }
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let min = signal.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = signal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let (variance, kurtosis, skewness) = if min == max {
        (0.0, 0.0, 0.0)
    } else {
        let m2 = signal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = signal.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let m4 = signal.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        (m2, m4 / (m2 * m2) - 3.0, m3 / m2.powf(1.5))
    };

    let mut sorted = signal.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut out = vec![mean, min, max, variance, kurtosis, skewness];
    for step in 3..=8 {
        out.push(quantile_sorted(&sorted, step as f64 / 10.0));
    }
    Ok(out)
}

/// Quantile with linear interpolation between order statistics of a sorted
/// slice: position h = q * (N - 1).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
    }
}

/// Pearson product-moment correlation and Kendall tau-b (tie-corrected) of
/// two equal-length signals. Both are defined as 0 when either input is
/// constant.
pub fn correlation_features(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "correlation inputs differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid("correlation needs at least 2 samples"));
    }
    Ok((pearson(a, b), kendall_tau_b(a, b)))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    let denom = (var_a * var_b).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        cov / denom
    }
}

/// Kendall tau-b: (C - D) / sqrt((n0 - ties_a)(n0 - ties_b)) over all pairs.
fn kendall_tau_b(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_a = 0i64;
    let mut ties_b = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                ties_a += 1;
            }
            if db == 0.0 {
                ties_b += 1;
            }
            let s = da * db;
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

/// All 15 unordered signal pairs in lexicographic order.
pub fn signal_pairs() -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(15);
    for i in 0..NUM_CHANNELS {
        for j in (i + 1)..NUM_CHANNELS {
            pairs.push((i, j));
        }
    }
    pairs
}

/// The full handcrafted vector of a session: 6 x 12 statistics followed by
/// (Pearson, Kendall) per signal pair.
pub fn extract_handcrafted(signals: &[Vec<f64>; NUM_CHANNELS]) -> Result<HandcraftedVector> {
    for (i, s) in signals.iter().enumerate() {
        if s.len() != SIGNAL_LEN {
            return Err(Error::invalid(format!(
                "signal {i} has length {}, expected {SIGNAL_LEN}",
                s.len()
            )));
        }
    }
    let mut values = Vec::with_capacity(HANDCRAFTED_DIM);
    for s in signals.iter() {
        values.extend(stat_features(s)?);
    }
    for (i, j) in signal_pairs() {
        let (p, t) = correlation_features(&signals[i], &signals[j])?;
        values.push(p);
        values.push(t);
    }
    debug_assert_eq!(values.len(), HANDCRAFTED_DIM);
    Ok(HandcraftedVector { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn stats_match_hand_arithmetic() {
        let out = stat_features(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let expected = [3.0, 1.0, 5.0, 2.0, -1.3, 0.0, 2.2, 2.6, 3.0, 3.4, 3.8, 4.2];
        for (o, e) in out.iter().zip(expected.iter()) {
            assert_relative_eq!(o, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_signal_conventions() {
        let out = stat_features(&[7.5; 150]).unwrap();
        let expected = [7.5, 7.5, 7.5, 0.0, 0.0, 0.0, 7.5, 7.5, 7.5, 7.5, 7.5, 7.5];
        assert_eq!(out, expected);
    }

    #[test]
    fn skewness_is_odd_under_reflection() {
        let v: Vec<f64> = (0..150).map(|i| ((i as f64) * 0.2).exp().min(50.0)).collect();
        let reflected: Vec<f64> = v.iter().map(|x| -x).collect();
        let s1 = stat_features(&v).unwrap()[5];
        let s2 = stat_features(&reflected).unwrap()[5];
        assert_relative_eq!(s1, -s2, epsilon = 1e-9);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(stat_features(&[1.0, f64::NAN]).is_err());
        assert!(stat_features(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn perfect_inversion() {
        let (p, t) = correlation_features(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_relative_eq!(p, -1.0, epsilon = 1e-12);
        assert_relative_eq!(t, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_correlation() {
        let a = [1.0, 5.0, 2.0, 8.0];
        let (p, t) = correlation_features(&a, &a).unwrap();
        assert_relative_eq!(p, 1.0, epsilon = 1e-12);
        assert_relative_eq!(t, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tau_b_matches_pair_enumeration() {
        // a=[1,2,3,4], b=[1,3,2,4]: of the 6 pairs, 5 concordant and 1
        // discordant, no ties.
        let (p, t) = correlation_features(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_relative_eq!(t, 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(p, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(correlation_features(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn constant_input_correlations_are_zero() {
        let (p, t) = correlation_features(&[2.0, 2.0, 2.0], &[1.0, 5.0, 9.0]).unwrap();
        assert_eq!((p, t), (0.0, 0.0));
    }

    fn six(f: impl Fn(usize, usize) -> f64) -> [Vec<f64>; NUM_CHANNELS] {
        std::array::from_fn(|ch| (0..SIGNAL_LEN).map(|i| f(ch, i)).collect())
    }

    #[test]
    fn vector_layout() {
        let signals = six(|ch, i| (ch as f64 + 1.0) * (i as f64 * 0.1).sin());
        let v = extract_handcrafted(&signals).unwrap();
        assert_eq!(v.values().len(), HANDCRAFTED_DIM);
        for c in &v.values()[72..] {
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(c));
        }
    }

    #[test]
    fn identical_signals_correlate_perfectly() {
        let signals = six(|_, i| (i as f64 * 0.3).sin());
        let v = extract_handcrafted(&signals).unwrap();
        for c in &v.values()[72..] {
            assert_relative_eq!(*c, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_session_layout() {
        let signals = six(|ch, _| ch as f64);
        let v = extract_handcrafted(&signals).unwrap();
        for ch in 0..NUM_CHANNELS {
            let c = ch as f64;
            let block = &v.values()[ch * 12..(ch + 1) * 12];
            assert_eq!(block, [c, c, c, 0.0, 0.0, 0.0, c, c, c, c, c, c]);
        }
        assert!(v.values()[72..].iter().all(|&c| c == 0.0));
    }

    // Frozen output of an independent statistics library on the same
    // formula-generated input, element order matching extract_handcrafted.
    const REFERENCE_VECTOR: [f64; 102] = [
        0.01651227770444521, -1.2000333006262995, 1.2457106235644808, 0.30741134017126115, -0.5313545385844747, -0.05860897005608611,
        -0.2590266389252931, -0.06684993131002574, 0.01509968457918813, 0.1273319959386877, 0.26536279800242535, 0.5588250988656639,
        -0.02481698933252792, -1.0680623464986148, 1.1250997684879, 0.25742411173169794, -0.4692952510860313, 0.11674903186165565,
        -0.2438499279699781, -0.14501593920933376, -0.051740073749318244, 0.08392402237055371, 0.21662732404705842, 0.38378415039114755,
        0.007388709851063169, -1.1084075970466367, 1.1863868648276867, 0.30423473169347853, -0.5802467763261565, 0.019977967684017685,
        -0.2621392108782396, -0.15236716455594884, -0.0361755082169071, 0.1803732004007009, 0.29970217392001935, 0.4285187264020688,
        0.029457166060470937, -1.1522442844046448, 1.2362302847661202, 0.26831037752016584, -0.5011704369940051, -0.03187262239381067,
        -0.22374983380562416, -0.06582815441490651, 0.04937754940620467, 0.15301190523148558, 0.2694140217334047, 0.4617140810014778,
        -0.03010153059810784, -1.1277141183756991, 1.1969281445703264, 0.298142041909599, -0.6504287938187918, 0.02933610639670317,
        -0.36433166462155553, -0.19784820892091262, -0.043401803661435964, 0.1485768210556548, 0.3127496393670487, 0.41922579011297484,
        0.013930724464116485, -1.0892854981610642, 1.2005263599909417, 0.2900947715671479, -0.7378971647585044, 0.10542626246113904,
        -0.27233927566399363, -0.13513043950003997, -0.02946538710379697, 0.1325728923066982, 0.3328055264312899, 0.5280672347199818,
        0.0012043349288430594, 0.007069351230425055, -0.11606747663596147, -0.039821029082774045, 0.06670505260867511, 0.036241610738255034,
        -0.06511738310811666, -0.030872483221476506, -0.15405481051651093, -0.07615212527964205, -0.12429115191959025, -0.07883668903803132,
        -0.04259630475360615, -0.011006711409395973, -0.02020508147034074, -0.02478747203579418, -0.03856591106266409, -0.052527964205816555,
        -0.13311229460720764, -0.09333333333333332, -0.06828551962929648, -0.0297986577181208, 0.1395900155930339, 0.08742729306487694,
        -0.12333574515275461, -0.08474272930648769, -0.03154182378850968, -0.025861297539149886, -0.07131606407236313, -0.04823266219239373,
    ];

    #[test]
    fn matches_reference_implementation() {
        let signals = six(|ch, i| {
            let (ch, i) = (ch as f64, i as f64);
            (0.7 + 1.3 * ch + 0.37 * i).sin() * (0.11 * i * (ch + 1.0)).cos()
                + 0.25 * (2.1 * ch + (0.05 * i * i) % 6.28).sin()
        });
        let v = extract_handcrafted(&signals).unwrap();
        for (k, (got, want)) in v.values().iter().zip(REFERENCE_VECTOR.iter()).enumerate() {
            assert!((got - want).abs() < 1e-9, "element {k}: {got} vs {want}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn translation_equivariance(
            v in prop::collection::vec(-10.0f64..10.0, 150),
            c in -20.0f64..20.0,
        ) {
            let base = stat_features(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let out = stat_features(&shifted).unwrap();
            // mean/min/max and the six quantiles shift by c.
            for idx in [0usize, 1, 2, 6, 7, 8, 9, 10, 11] {
                prop_assert!((out[idx] - (base[idx] + c)).abs() < 1e-8);
            }
            // variance is translation invariant.
            prop_assert!((out[3] - base[3]).abs() < 1e-7);
        }

        #[test]
        fn kendall_invariant_under_monotone_transform(
            a in prop::collection::vec(-5.0f64..5.0, 20),
            b in prop::collection::vec(-5.0f64..5.0, 20),
        ) {
            let (_, t1) = correlation_features(&a, &b).unwrap();
            let ta: Vec<f64> = a.iter().map(|x| x.exp()).collect();
            let (_, t2) = correlation_features(&ta, &b).unwrap();
            prop_assert!((t1 - t2).abs() < 1e-12);
        }

        #[test]
        fn correlations_bounded(
            a in prop::collection::vec(-5.0f64..5.0, 30),
            b in prop::collection::vec(-5.0f64..5.0, 30),
        ) {
            let (p, t) = correlation_features(&a, &b).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&p));
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&t));
        }
    }
}
