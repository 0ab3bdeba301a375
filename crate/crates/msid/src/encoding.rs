//! Row-ordering sequences and the gray-scale image representation.
//!
//! Six normalized signals are stacked into a 25x150 image whose row order is
//! given by a covering sequence: every unordered triplet of the six signal
//! indices must appear as a contiguous window, so that 3x3 convolutional
//! filters get to see every combination of three signals. Windows with
//! repeated symbols and reorderings of an already-covered triplet are exempt,
//! which is what makes a 25-symbol sequence possible where a full de Bruijn
//! sequence would need length 218.

use std::fmt;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::signal::{NormalizedSignal, SIGNAL_LEN};

/// The shipped 25-symbol covering sequence for k=6, n=3. It is the default
/// row order at encode time; [`generate_sequence`] reproduces sequences of
/// equal or shorter length.
pub const REFERENCE_SYMBOLS: [u8; 25] = [
    0, 1, 2, 3, 4, 5, 0, 2, 4, 5, 1, 3, 0, 4, 1, 2, 5, 3, 0, 2, 0, 5, 1, 3, 4,
];

/// Upper bound on the alphabet size; subsets are tracked as u32 bitmasks.
const MAX_ALPHABET: usize = 32;

/// A symbol sequence over alphabet 0..k-1 whose length-n distinct-symbol
/// windows are meant to cover all C(k, n) unordered subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalSequence {
    symbols: Vec<u8>,
    k: usize,
    n: usize,
}

impl SignalSequence {
    pub fn new(symbols: Vec<u8>, k: usize, n: usize) -> Result<Self> {
        if n < 2 || n > k {
            return Err(Error::invalid(format!(
                "window length n={n} must satisfy 2 <= n <= k (k={k})"
            )));
        }
        if k > MAX_ALPHABET {
            return Err(Error::invalid(format!(
                "alphabet size {k} exceeds the supported maximum of {MAX_ALPHABET}"
            )));
        }
        if let Some(&s) = symbols.iter().find(|&&s| s as usize >= k) {
            return Err(Error::invalid(format!(
                "symbol {s} out of range for alphabet size {k}"
            )));
        }
        Ok(Self { symbols, k, n })
    }

    /// The default sequence used by the image encoder (k=6, n=3, length 25).
    pub fn reference() -> Self {
        Self {
            symbols: REFERENCE_SYMBOLS.to_vec(),
            k: 6,
            n: 3,
        }
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    pub fn window_len(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

impl fmt::Display for SignalSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Which unordered subsets appear as contiguous distinct-symbol windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageReport {
    /// Number of distinct subsets covered.
    pub covered: usize,
    /// Total number of subsets, C(k, n).
    pub total: usize,
    /// Sorted list of uncovered subsets (each sorted ascending).
    pub missing: Vec<Vec<u8>>,
}

impl CoverageReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

fn binomial(k: usize, n: usize) -> usize {
    if n > k {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..n {
        acc = acc * (k - i) / (i + 1);
    }
    acc
}

/// Bitmask of a window if its symbols are pairwise distinct, else None.
fn window_mask(window: &[u8]) -> Option<u32> {
    let mut mask = 0u32;
    for &s in window {
        let bit = 1u32 << s;
        if mask & bit != 0 {
            return None;
        }
        mask |= bit;
    }
    Some(mask)
}

fn masks_covered(symbols: &[u8], k: usize, n: usize) -> Vec<bool> {
    let mut covered = vec![false; 1usize << k];
    if symbols.len() >= n {
        for window in symbols.windows(n) {
            if let Some(mask) = window_mask(window) {
                covered[mask as usize] = true;
            }
        }
    }
    covered
}

/// Enumerate all n-subsets of 0..k-1 as bitmasks in ascending mask order.
fn all_subsets(k: usize, n: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(binomial(k, n));
    for mask in 0u32..(1u32 << k) {
        if mask.count_ones() as usize == n {
            out.push(mask);
        }
    }
    out
}

fn mask_to_sorted(mask: u32) -> Vec<u8> {
    (0..32).filter(|&b| mask & (1 << b) != 0).collect()
}

/// Report which unordered n-subsets appear as contiguous distinct-symbol
/// windows of the sequence.
pub fn verify_coverage(seq: &SignalSequence) -> CoverageReport {
    let covered_flags = masks_covered(seq.symbols(), seq.k, seq.n);
    let mut covered = 0;
    let mut missing = Vec::new();
    for mask in all_subsets(seq.k, seq.n) {
        if covered_flags.get(mask as usize).copied().unwrap_or(false) {
            covered += 1;
        } else {
            missing.push(mask_to_sorted(mask));
        }
    }
    CoverageReport {
        covered,
        total: binomial(seq.k, seq.n),
        missing,
    }
}

/// Greedy construction of a covering sequence.
///
/// Repeatedly appends the minimum number of symbols that makes at least one
/// not-yet-covered subset appear as a distinct-symbol window. Candidate
/// suffixes of one length are tried in lexicographic order, so the result is
/// deterministic.
pub fn generate_sequence(k: usize, n: usize) -> Result<SignalSequence> {
    // Constructor validates 2 <= n <= k and the alphabet bound.
    let mut seq = SignalSequence::new(Vec::new(), k, n)?;
    let total = binomial(k, n);
    let mut covered = vec![false; 1usize << k];
    let mut covered_count = 0;

    while covered_count < total {
        let (suffix, new_masks) = best_suffix(&seq.symbols, k, n, &covered)
            .expect("a length-n suffix can always complete an uncovered subset");
        seq.symbols.extend_from_slice(&suffix);
        for mask in new_masks {
            if !covered[mask as usize] {
                covered[mask as usize] = true;
                covered_count += 1;
            }
        }
    }
    Ok(seq)
}

/// Shortest suffix (ties: lexicographically smallest) whose appended windows
/// cover at least one new subset, together with the masks those windows hit.
fn best_suffix(prefix: &[u8], k: usize, n: usize, covered: &[bool]) -> Option<(Vec<u8>, Vec<u32>)> {
    for suffix_len in 1..=n {
        let mut suffix = vec![0u8; suffix_len];
        loop {
            let new_masks = appended_window_masks(prefix, &suffix, n);
            if new_masks.iter().any(|&m| !covered[m as usize]) {
                return Some((suffix, new_masks));
            }
            if !next_word(&mut suffix, k) {
                break;
            }
        }
    }
    None
}

/// Odometer step through words over 0..k-1; false once the last word passed.
fn next_word(word: &mut [u8], k: usize) -> bool {
    for pos in (0..word.len()).rev() {
        if (word[pos] as usize) + 1 < k {
            word[pos] += 1;
            for s in word.iter_mut().skip(pos + 1) {
                *s = 0;
            }
            return true;
        }
    }
    false
}

/// Masks of the distinct-symbol windows that end inside the appended suffix.
fn appended_window_masks(prefix: &[u8], suffix: &[u8], n: usize) -> Vec<u32> {
    let mut ext: Vec<u8> = Vec::with_capacity(prefix.len() + suffix.len());
    ext.extend_from_slice(prefix);
    ext.extend_from_slice(suffix);
    let mut masks = Vec::new();
    for end in prefix.len()..ext.len() {
        if end + 1 >= n {
            if let Some(mask) = window_mask(&ext[end + 1 - n..=end]) {
                masks.push(mask);
            }
        }
    }
    masks
}

/// How the [0, 255] rescale in the image encoder pools its maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RescaleMode {
    /// One maximum across all six signals of the session. Preserves the
    /// relative magnitudes established by the unit-norm step.
    #[default]
    Global,
    /// Each signal rescaled against its own maximum.
    PerSignal,
}

impl std::str::FromStr for RescaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(RescaleMode::Global),
            "per-signal" => Ok(RescaleMode::PerSignal),
            other => Err(Error::invalid(format!(
                "unknown rescale mode '{other}' (expected 'global' or 'per-signal')"
            ))),
        }
    }
}

/// The 8-bit gray-scale image of one tap session: one row per sequence
/// position, one column per time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalImage {
    pixels: Vec<u8>,
    rows: usize,
    cols: usize,
    pub source_user: String,
    pub source_tap: u32,
}

impl SignalImage {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.pixels[row * self.cols..(row + 1) * self.cols]
    }

    /// Row-major raw pixels.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Build directly from raw pixels; used by the PGM reader and tests.
    pub fn from_pixels(pixels: Vec<u8>, rows: usize, cols: usize) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::invalid(format!(
                "pixel buffer has {} bytes, expected {}x{}",
                pixels.len(),
                rows,
                cols
            )));
        }
        Ok(Self {
            pixels,
            rows,
            cols,
            source_user: String::new(),
            source_tap: 0,
        })
    }
}

/// Stack six normalized signals into an image, one row per sequence symbol,
/// quantized to [0, 255].
pub fn encode_image(
    signals: &[NormalizedSignal],
    seq: &SignalSequence,
    mode: RescaleMode,
) -> Result<SignalImage> {
    if signals.len() != 6 {
        return Err(Error::invalid(format!(
            "expected 6 signals, got {}",
            signals.len()
        )));
    }
    if seq.alphabet_size() != 6 {
        return Err(Error::invalid(format!(
            "image encoding needs a sequence over 6 symbols, got alphabet size {}",
            seq.alphabet_size()
        )));
    }
    let global_max = signals
        .iter()
        .flat_map(|s| s.values().iter().cloned())
        .fold(0.0f64, f64::max);
    let per_signal_max: Vec<f64> = signals
        .iter()
        .map(|s| s.values().iter().cloned().fold(0.0f64, f64::max))
        .collect();

    let rows = seq.len();
    let mut pixels = Vec::with_capacity(rows * SIGNAL_LEN);
    for &symbol in seq.symbols() {
        let signal = &signals[symbol as usize];
        let max = match mode {
            RescaleMode::Global => global_max,
            RescaleMode::PerSignal => per_signal_max[symbol as usize],
        };
        for &v in signal.values() {
            let q = if max > 0.0 {
                (255.0 * v / max).round() as u8
            } else {
                0
            };
            pixels.push(q);
        }
    }
    Ok(SignalImage {
        pixels,
        rows,
        cols: SIGNAL_LEN,
        source_user: String::new(),
        source_tap: 0,
    })
}

/// Write a binary PGM (P5): "P5\n<cols> <rows>\n255\n" followed by the raw
/// row-major bytes. Returns the number of bytes written.
pub fn write_pgm<W: Write>(image: &SignalImage, sink: &mut W) -> Result<usize> {
    let header = format!("P5\n{} {}\n255\n", image.cols, image.rows);
    sink.write_all(header.as_bytes())?;
    sink.write_all(&image.pixels)?;
    Ok(header.len() + image.pixels.len())
}

/// Parse a binary PGM produced by [`write_pgm`].
pub fn read_pgm<R: Read>(reader: &mut R) -> Result<SignalImage> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("PGM truncated before {what}")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token("magic")? != "P5" {
        return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
    }
    let cols: usize = token("width")?
        .parse()
        .map_err(|_| Error::Format("bad PGM width".into()))?;
    let rows: usize = token("height")?
        .parse()
        .map_err(|_| Error::Format("bad PGM height".into()))?;
    if token("maxval")? != "255" {
        return Err(Error::Format("PGM maxval must be 255".into()));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if bytes.len() < pos || bytes.len() - pos < rows * cols {
        return Err(Error::Format("PGM raster truncated".into()));
    }
    SignalImage::from_pixels(bytes[pos..pos + rows * cols].to_vec(), rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::normalize_signal;
    use proptest::prelude::*;

    #[test]
    fn reference_sequence_covers_all_triplets() {
        let seq = SignalSequence::reference();
        let report = verify_coverage(&seq);
        assert_eq!(seq.len(), 25);
        assert_eq!(report.covered, 20);
        assert_eq!(report.total, 20);
        assert!(report.is_complete());
    }

    #[test]
    fn generated_sequence_for_six_signals_is_short() {
        let seq = generate_sequence(6, 3).unwrap();
        let report = verify_coverage(&seq);
        assert!(report.is_complete(), "missing: {:?}", report.missing);
        assert!(
            seq.len() <= 25,
            "greedy sequence longer than the shipped one: {}",
            seq.len()
        );
    }

    #[test]
    fn minimal_alphabet_gives_single_window() {
        let seq = generate_sequence(3, 3).unwrap();
        assert_eq!(seq.symbols(), &[0, 1, 2]);
    }

    #[test]
    fn four_symbol_sequence_is_optimal() {
        // Any length-5 sequence has only 3 windows, fewer than the 4 subsets.
        let seq = generate_sequence(4, 3).unwrap();
        assert_eq!(seq.len(), 6);
        assert!(verify_coverage(&seq).is_complete());
    }

    #[test]
    fn coverage_counts_partial_sequences() {
        let seq = SignalSequence::new(vec![0, 1, 2], 6, 3).unwrap();
        let report = verify_coverage(&seq);
        assert_eq!(report.covered, 1);
        assert_eq!(report.missing.len(), 19);
    }

    #[test]
    fn repeated_symbols_never_count() {
        let seq = SignalSequence::new(vec![0, 0, 0], 6, 3).unwrap();
        let report = verify_coverage(&seq);
        assert_eq!(report.covered, 0);
    }

    #[test]
    fn exhaustive_coverage_small_alphabets() {
        for k in 2..=7 {
            for n in 2..=k {
                let seq = generate_sequence(k, n).unwrap();
                let report = verify_coverage(&seq);
                assert!(
                    report.is_complete(),
                    "(k={k}, n={n}) missing {:?}",
                    report.missing
                );
                assert!(seq.len() <= k * binomial(k, n));
            }
        }
    }

    #[test]
    fn rejects_window_longer_than_alphabet() {
        assert!(generate_sequence(3, 4).is_err());
        assert!(SignalSequence::new(vec![0], 3, 4).is_err());
    }

    #[test]
    fn display_is_comma_separated() {
        let seq = SignalSequence::new(vec![0, 1, 2], 6, 3).unwrap();
        assert_eq!(seq.to_string(), "0,1,2");
    }

    fn ramp_signal() -> NormalizedSignal {
        let values: Vec<f64> = (0..SIGNAL_LEN).map(|i| i as f64).collect();
        normalize_signal(&values).unwrap()
    }

    fn zero_signal() -> NormalizedSignal {
        normalize_signal(&[0.0; SIGNAL_LEN]).unwrap()
    }

    #[test]
    fn identical_signals_give_identical_rows() {
        let signals: Vec<NormalizedSignal> = (0..6).map(|_| ramp_signal()).collect();
        let image = encode_image(&signals, &SignalSequence::reference(), RescaleMode::Global).unwrap();
        assert_eq!(image.rows(), 25);
        let first = image.row(0).to_vec();
        for r in 1..image.rows() {
            assert_eq!(image.row(r), &first[..]);
        }
        assert_eq!(*image.pixels().iter().max().unwrap(), 255);
    }

    #[test]
    fn degenerate_signals_give_zero_image() {
        let signals: Vec<NormalizedSignal> = (0..6).map(|_| zero_signal()).collect();
        let image = encode_image(&signals, &SignalSequence::reference(), RescaleMode::Global).unwrap();
        assert!(image.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn single_ramp_matches_per_pixel_oracle() {
        // Signal 0 is a normalized ramp, the rest are zero. Rows whose symbol
        // is 0 must contain the quantized ramp ending at 255; all other rows
        // must be zero.
        let mut signals = vec![zero_signal(); 6];
        signals[0] = ramp_signal();
        let seq = SignalSequence::reference();
        let image = encode_image(&signals, &seq, RescaleMode::Global).unwrap();

        let ramp = ramp_signal();
        let max = ramp.values().iter().cloned().fold(0.0f64, f64::max);
        for (r, &symbol) in seq.symbols().iter().enumerate() {
            for c in 0..SIGNAL_LEN {
                let expected = if symbol == 0 {
                    (255.0 * ramp.values()[c] / max).round() as u8
                } else {
                    0
                };
                assert_eq!(image.pixel(r, c), expected, "row {r} col {c}");
            }
        }
        assert_eq!(image.pixel(0, SIGNAL_LEN - 1), 255);
    }

    #[test]
    fn rejects_wrong_signal_count() {
        let signals = vec![ramp_signal(); 5];
        let err = encode_image(&signals, &SignalSequence::reference(), RescaleMode::Global);
        assert!(err.is_err());
    }

    #[test]
    fn quantization_error_within_half_step() {
        let signals: Vec<NormalizedSignal> = (0..6)
            .map(|s| {
                let values: Vec<f64> =
                    (0..SIGNAL_LEN).map(|i| ((i + 37 * s) as f64 * 0.21).sin()).collect();
                normalize_signal(&values).unwrap()
            })
            .collect();
        let seq = SignalSequence::reference();
        let image = encode_image(&signals, &seq, RescaleMode::Global).unwrap();
        let max = signals
            .iter()
            .flat_map(|s| s.values().iter().cloned())
            .fold(0.0f64, f64::max);
        for (r, &symbol) in seq.symbols().iter().enumerate() {
            for c in 0..SIGNAL_LEN {
                let v = signals[symbol as usize].values()[c];
                let reconstructed = image.pixel(r, c) as f64 / 255.0 * max;
                assert!(
                    (reconstructed - v).abs() <= max / 510.0 + 1e-12,
                    "quantization error too large at ({r},{c})"
                );
            }
        }
    }

    #[test]
    fn zero_image_pgm_layout() {
        let image = SignalImage::from_pixels(vec![0u8; 25 * 150], 25, 150).unwrap();
        let mut bytes = Vec::new();
        let written = write_pgm(&image, &mut bytes).unwrap();
        // 14 header bytes plus 25*150 raster bytes.
        assert_eq!(written, 3764);
        assert_eq!(bytes.len(), 3764);
        assert!(bytes.starts_with(b"P5\n150 25\n255\n"));
        assert!(bytes[14..].iter().all(|&b| b == 0));
    }

    #[test]
    fn pgm_round_trip() {
        let pixels: Vec<u8> = (0..25 * 150).map(|i| (i % 251) as u8).collect();
        let image = SignalImage::from_pixels(pixels, 25, 150).unwrap();
        let mut bytes = Vec::new();
        write_pgm(&image, &mut bytes).unwrap();
        let back = read_pgm(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.pixels(), image.pixels());
        assert_eq!(back.rows(), 25);
        assert_eq!(back.cols(), 150);
    }

    #[test]
    fn truncated_pgm_rejected() {
        let image = SignalImage::from_pixels(vec![7u8; 25 * 150], 25, 150).unwrap();
        let mut bytes = Vec::new();
        write_pgm(&image, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(read_pgm(&mut bytes.as_slice()), Err(Error::Format(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn encode_invariant_to_positive_prescaling(
            raw in prop::collection::vec(
                prop::collection::vec(-5.0f64..5.0, SIGNAL_LEN..=SIGNAL_LEN), 6),
            scale in 0.01f64..40.0,
        ) {
            let seq = SignalSequence::reference();
            let base: Vec<NormalizedSignal> = raw
                .iter()
                .map(|v| normalize_signal(v).unwrap())
                .collect();
            let scaled: Vec<NormalizedSignal> = raw
                .iter()
                .map(|v| {
                    let s: Vec<f64> = v.iter().map(|x| x * scale).collect();
                    normalize_signal(&s).unwrap()
                })
                .collect();
            let a = encode_image(&base, &seq, RescaleMode::Global).unwrap();
            let b = encode_image(&scaled, &seq, RescaleMode::Global).unwrap();
            // Normalization removes the scale, so the images agree up to
            // one quantization step of floating-point slack.
            for (pa, pb) in a.pixels().iter().zip(b.pixels().iter()) {
                prop_assert!((*pa as i16 - *pb as i16).abs() <= 1);
            }
        }

        #[test]
        fn rows_are_pure_function_of_symbol(
            raw in prop::collection::vec(
                prop::collection::vec(-5.0f64..5.0, SIGNAL_LEN..=SIGNAL_LEN), 6),
        ) {
            let seq = SignalSequence::reference();
            let signals: Vec<NormalizedSignal> = raw
                .iter()
                .map(|v| normalize_signal(v).unwrap())
                .collect();
            let image = encode_image(&signals, &seq, RescaleMode::Global).unwrap();
            for (r1, &s1) in seq.symbols().iter().enumerate() {
                for (r2, &s2) in seq.symbols().iter().enumerate() {
                    if s1 == s2 {
                        prop_assert_eq!(image.row(r1), image.row(r2));
                    }
                    let _ = (r1, r2);
                }
            }
        }
    }
}
