//! Session file ingestion, the seeded synthetic tap generator that stands
//! in for real recordings, and artifact persistence for checkpoints,
//! classifier models and embedding batches.
//!
//! Sessions travel as newline-delimited JSON records; weight-bearing
//! artifacts use a short textual header followed by raw little-endian
//! floats.

use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classify::{KernelSpec, Standardization, SvmModel};
use crate::error::{Error, Result};
use crate::neuralnet::{
    derive_seed, parameter_shapes, Checkpoint, DepthVariant, EmbeddingVector, EpochRecord,
    NamedArray, NetworkSpec, Tensor,
};
use crate::signal::{RawChannel, TapSession, NUM_CHANNELS};

/// Magic line opening every binary artifact.
pub const ARTIFACT_MAGIC: &str = "MSID";
/// Current artifact format version.
pub const FORMAT_VERSION: u32 = 1;
/// Tap window length in seconds: half a second before the tap, one after.
pub const WINDOW_SECONDS: f64 = 1.5;
/// Offset of the tap instant from the window start, in seconds.
pub const TAP_OFFSET_SECONDS: f64 = 0.5;
/// Default seed used wherever no seed is given.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Serialize, Deserialize)]
struct SensorRecord {
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionRecord {
    user_id: String,
    tap_index: u32,
    #[serde(default = "default_window")]
    window_seconds: f64,
    accelerometer: SensorRecord,
    gyroscope: SensorRecord,
}

fn default_window() -> f64 {
    WINDOW_SECONDS
}

fn sensor_record(session: &TapSession, base: usize) -> Result<SensorRecord> {
    let t = session.channel(base).timestamps();
    for axis in 1..3 {
        if session.channel(base + axis).timestamps() != t {
            return Err(Error::invalid(format!(
                "channels of one sensor must share timestamps (user {} tap {})",
                session.user_id, session.tap_index
            )));
        }
    }
    Ok(SensorRecord {
        t: t.to_vec(),
        x: session.channel(base).values().to_vec(),
        y: session.channel(base + 1).values().to_vec(),
        z: session.channel(base + 2).values().to_vec(),
    })
}

/// Writes sessions as newline-delimited JSON records.
pub fn save_sessions<W: Write>(sessions: &[TapSession], sink: &mut W) -> Result<()> {
    for session in sessions {
        let record = SessionRecord {
            user_id: session.user_id.clone(),
            tap_index: session.tap_index,
            window_seconds: session.window_seconds,
            accelerometer: sensor_record(session, 0)?,
            gyroscope: sensor_record(session, 3)?,
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::invalid(format!("cannot serialize session: {e}")))?;
        sink.write_all(line.as_bytes())?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

fn sensor_channels(
    sensor: SensorRecord,
    name: &str,
    line: usize,
    record: &str,
) -> Result<[RawChannel; 3]> {
    let validation = |message: String| Error::Validation {
        line,
        record: record.to_string(),
        message,
    };
    let len = sensor.t.len();
    if sensor.x.len() != len || sensor.y.len() != len || sensor.z.len() != len {
        return Err(validation(format!(
            "{name} arrays must share one length, got t={len} x={} y={} z={}",
            sensor.x.len(),
            sensor.y.len(),
            sensor.z.len()
        )));
    }
    let build = |values: Vec<f64>| {
        RawChannel::new(values, sensor.t.clone()).map_err(|e| {
            validation(match e {
                Error::InvalidInput(msg) => format!("{name}: {msg}"),
                other => format!("{name}: {other}"),
            })
        })
    };
    Ok([build(sensor.x)?, build(sensor.y)?, build(sensor.z)?])
}

/// Reads newline-delimited session records. The result is sorted by
/// (user id, tap index); malformed lines are reported with their line
/// number and an empty source yields an empty list.
pub fn load_sessions<R: Read>(source: R) -> Result<Vec<TapSession>> {
    let reader = BufReader::new(source);
    let mut sessions = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let number = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SessionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: number,
            message: e.to_string(),
        })?;
        let label = format!("user {} tap {}", record.user_id, record.tap_index);
        let [ax, ay, az] = sensor_channels(record.accelerometer, "accelerometer", number, &label)?;
        let [gx, gy, gz] = sensor_channels(record.gyroscope, "gyroscope", number, &label)?;
        let session = TapSession::new(
            record.user_id,
            record.tap_index,
            [ax, ay, az, gx, gy, gz],
            record.window_seconds,
        )
        .map_err(|e| Error::Validation {
            line: number,
            record: label.clone(),
            message: e.to_string(),
        })?;
        sessions.push(session);
    }
    sessions.sort_by(|a, b| {
        (a.user_id.as_str(), a.tap_index).cmp(&(b.user_id.as_str(), b.tap_index))
    });
    Ok(sessions)
}

/// Configuration of the synthetic session generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_users: usize,
    pub taps_per_user: usize,
    pub sample_rate_hz: f64,
    pub jitter_std_seconds: f64,
    /// Inclusive bounds on the per-sensor sample count.
    pub length_range: (usize, usize),
    /// How distinct users are. 0 makes every user statistically identical.
    pub separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_users: 10,
            taps_per_user: 40,
            sample_rate_hz: 100.0,
            jitter_std_seconds: 0.001,
            length_range: (140, 160),
            separation: 2.0,
            noise_std: 0.05,
            seed: DEFAULT_SEED,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::invalid("num_users must be at least 1"));
        }
        if self.taps_per_user == 0 {
            return Err(Error::invalid("taps_per_user must be at least 1"));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample_rate_hz must be positive"));
        }
        if !(self.jitter_std_seconds.is_finite() && self.jitter_std_seconds >= 0.0) {
            return Err(Error::invalid("jitter_std_seconds must be non-negative"));
        }
        let (lo, hi) = self.length_range;
        let cap = (10.0 * WINDOW_SECONDS * self.sample_rate_hz) as usize;
        if lo < 2 || lo > hi || hi > cap {
            return Err(Error::invalid(format!(
                "length_range ({lo}, {hi}) must satisfy 2 <= lo <= hi <= {cap}"
            )));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::invalid("separation must be non-negative"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        Ok(())
    }
}

/// Nominal width of the tap transient, in seconds.
const BUMP_WIDTH_SECONDS: f64 = 0.08;
const SINUSOIDS_PER_CHANNEL: usize = 3;
/// Per-tap multiplicative gain spread (grip variation) and per-channel
/// baseline drift (sensor bias wandering between taps). Both are linear
/// per-channel maps, so signal normalization cancels them exactly; raw
/// signal statistics absorb them in full.
const GAIN_JITTER: f64 = 0.55;
const OFFSET_STD: f64 = 1.0;

struct ChannelLatent {
    /// (frequency hz, amplitude, phase) triples.
    sinusoids: [(f64, f64, f64); SINUSOIDS_PER_CHANNEL],
    bump_amplitude: f64,
    bump_width: f64,
    bump_center: f64,
}

impl ChannelLatent {
    fn value_at(&self, t: f64, separation: f64) -> f64 {
        let mut v = 0.0;
        for &(freq, amp, phase) in &self.sinusoids {
            v += amp * (2.0 * std::f64::consts::PI * freq * t + phase).sin();
        }
        let z = (t - self.bump_center) / self.bump_width;
        separation * v + self.bump_amplitude * (-0.5 * z * z).exp()
    }
}

fn draw_latents(rng: &mut ChaCha8Rng, separation: f64) -> [ChannelLatent; NUM_CHANNELS] {
    std::array::from_fn(|_| {
        let sinusoids = std::array::from_fn(|_| {
            (
                rng.gen_range(1.0..15.0),
                rng.gen_range(0.2..1.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        });
        // Identity also shows in the transient: its height, width and
        // timing drift with the user, all fading out at separation 0.
        let bump_amplitude = 1.0 + separation * rng.gen_range(-0.5..0.5);
        let bump_width =
            (BUMP_WIDTH_SECONDS * (1.0 + separation * rng.gen_range(-0.15..0.15))).max(0.01);
        let bump_center = TAP_OFFSET_SECONDS + separation * rng.gen_range(-0.02..0.02);
        ChannelLatent {
            sinusoids,
            bump_amplitude,
            bump_width,
            bump_center,
        }
    })
}

fn draw_timestamps(config: &SynthConfig, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let nominal = 1.0 / config.sample_rate_hz;
    // Jittered increments are clamped so timestamps stay strictly
    // increasing no matter how large the jitter is.
    let floor = 0.1 * nominal;
    let jitter = Normal::new(0.0, config.jitter_std_seconds).expect("validated above");
    let mut t = 0.0;
    let mut out = Vec::with_capacity(len);
    out.push(t);
    for _ in 1..len {
        t += (nominal + jitter.sample(rng)).max(floor);
        out.push(t);
    }
    out
}

fn generate_user(config: &SynthConfig, user_index: usize) -> Vec<TapSession> {
    let user_seed = derive_seed(config.seed, user_index as u64);
    let mut latent_rng = ChaCha8Rng::seed_from_u64(user_seed);
    let latents = draw_latents(&mut latent_rng, config.separation);
    let noise = Normal::new(0.0, config.noise_std).expect("validated above");
    let drift = Normal::new(0.0, OFFSET_STD).expect("constant deviation");
    let (lo, hi) = config.length_range;
    let user_id = format!("user{user_index:03}");

    let mut sessions = Vec::with_capacity(config.taps_per_user);
    for tap in 0..config.taps_per_user {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(user_seed, 1 + tap as u64));
        let gain = 1.0 + GAIN_JITTER * rng.gen_range(-1.0..1.0);
        let acc_len = rng.gen_range(lo..=hi);
        let gyro_len = rng.gen_range(lo..=hi);
        let acc_t = draw_timestamps(config, acc_len, &mut rng);
        let gyro_t = draw_timestamps(config, gyro_len, &mut rng);
        let mut channels: Vec<RawChannel> = Vec::with_capacity(NUM_CHANNELS);
        for (c, latent) in latents.iter().enumerate() {
            let t = if c < 3 { &acc_t } else { &gyro_t };
            let offset = drift.sample(&mut rng);
            let values: Vec<f64> = t
                .iter()
                .map(|&ti| {
                    gain * latent.value_at(ti, config.separation) + offset + noise.sample(&mut rng)
                })
                .collect();
            channels.push(RawChannel::new(values, t.clone()).expect("timestamps increase"));
        }
        let channels: [RawChannel; NUM_CHANNELS] =
            channels.try_into().expect("six channels built");
        sessions.push(
            TapSession::new(user_id.clone(), tap as u32, channels, WINDOW_SECONDS)
                .expect("sensor lengths agree"),
        );
    }
    sessions
}

/// Generates the synthetic corpus. Each user gets a latent signal model
/// (three sinusoids per channel plus a tap-locked bump whose height, width
/// and timing vary by user); every tap evaluates that model on jittered
/// timestamps, applies a random per-tap gain plus a per-channel baseline
/// offset, and adds Gaussian noise. Per-user seeds are derived from the
/// config seed, so users can be generated independently with identical
/// results.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<TapSession>> {
    config.validate()?;
    let mut sessions = Vec::with_capacity(config.num_users * config.taps_per_user);
    for user in 0..config.num_users {
        sessions.extend(generate_user(config, user));
    }
    Ok(sessions)
}

fn read_all<R: Read>(source: &mut R) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    Ok(bytes)
}

struct HeaderLines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderLines<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
            self.pos += 1;
        }
        if self.pos == self.bytes.len() {
            return Err(Error::Format("unexpected end of header".into()));
        }
        let line = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Format("header is not valid utf-8".into()))?;
        self.pos += 1;
        Ok(line)
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Format(format!("expected '{key} ...', got '{line}'")))
}

fn parse_value<T: std::str::FromStr>(text: &str, what: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::Format(format!("bad {what} '{text}'")))
}

fn expect_preamble(lines: &mut HeaderLines, kind: &str) -> Result<()> {
    if lines.next_line()? != ARTIFACT_MAGIC {
        return Err(Error::Format("bad magic, not an artifact file".into()));
    }
    let version: u32 = parse_value(field(lines.next_line()?, "version")?, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let found = field(lines.next_line()?, "kind")?;
    if found != kind {
        return Err(Error::Format(format!(
            "artifact kind '{found}', expected '{kind}'"
        )));
    }
    Ok(())
}

fn preamble(kind: &str) -> String {
    format!("{ARTIFACT_MAGIC}\nversion {FORMAT_VERSION}\nkind {kind}\n")
}

fn float_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_float_list(text: &str, what: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(' ')
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(s, what))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::Format(format!(
            "{what} holds {} values, expected {expected}",
            values.len()
        )));
    }
    Ok(values)
}

fn check_payload(payload: &[u8], expected_floats: usize, float_size: usize) -> Result<()> {
    let expected = expected_floats * float_size;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {expected}",
            payload.len()
        )));
    }
    Ok(())
}

/// Writes a checkpoint: magic, version, the network spec, the named array
/// shapes, then each array's values as little-endian 32-bit floats in
/// header order. The training log is not part of the file; export it with
/// [`training_log_csv`].
pub fn save_checkpoint<W: Write>(ckpt: &Checkpoint, sink: &mut W) -> Result<()> {
    ckpt.spec.validate()?;
    let expected = parameter_shapes(&ckpt.spec);
    if ckpt.weights.len() != expected.len()
        || ckpt
            .weights
            .iter()
            .zip(&expected)
            .any(|(w, (name, shape))| w.name != *name || w.tensor.shape() != &shape[..])
    {
        return Err(Error::invalid("checkpoint arrays do not match its spec"));
    }
    let mut header = preamble("checkpoint");
    header += &format!("depth {}\n", ckpt.spec.depth_variant.layer_count());
    header += &format!("embedding {}\n", ckpt.spec.embedding_width);
    header += &format!("classes {}\n", ckpt.spec.num_classes);
    header += &format!("dropout {}\n", ckpt.spec.dropout_rate);
    header += &format!("arrays {}\n", ckpt.weights.len());
    for w in &ckpt.weights {
        header += &w.name;
        for d in w.tensor.shape() {
            header += &format!(" {d}");
        }
        header += "\n";
    }
    header += "end\n";
    sink.write_all(header.as_bytes())?;
    for w in &ckpt.weights {
        for &v in w.tensor.data() {
            sink.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]. The loaded training
/// log is empty.
pub fn load_checkpoint<R: Read>(source: &mut R) -> Result<Checkpoint> {
    let bytes = read_all(source)?;
    let mut lines = HeaderLines::new(&bytes);
    expect_preamble(&mut lines, "checkpoint")?;
    let depth: usize = parse_value(field(lines.next_line()?, "depth")?, "depth")?;
    let embedding: usize = parse_value(field(lines.next_line()?, "embedding")?, "embedding")?;
    let classes: usize = parse_value(field(lines.next_line()?, "classes")?, "classes")?;
    let dropout: f64 = parse_value(field(lines.next_line()?, "dropout")?, "dropout")?;
    let spec = NetworkSpec {
        depth_variant: DepthVariant::from_layer_count(depth)
            .map_err(|e| Error::Format(e.to_string()))?,
        embedding_width: embedding,
        num_classes: classes,
        dropout_rate: dropout,
    };
    spec.validate().map_err(|e| Error::Format(e.to_string()))?;
    let count: usize = parse_value(field(lines.next_line()?, "arrays")?, "array count")?;
    let expected = parameter_shapes(&spec);
    if count != expected.len() {
        return Err(Error::Format(format!(
            "header declares {count} arrays, spec has {}",
            expected.len()
        )));
    }
    let mut declared = Vec::with_capacity(count);
    for (name, shape) in &expected {
        let line = lines.next_line()?;
        let mut parts = line.split(' ');
        let found = parts.next().unwrap_or_default();
        if found != name {
            return Err(Error::Format(format!(
                "array '{found}' does not match spec order (expected '{name}')"
            )));
        }
        let dims: Vec<usize> = parts
            .map(|p| parse_value(p, "array dimension"))
            .collect::<Result<_>>()?;
        if &dims != shape {
            return Err(Error::Format(format!(
                "array '{name}' has shape {dims:?}, spec says {shape:?}"
            )));
        }
        declared.push((name.clone(), dims));
    }
    if lines.next_line()? != "end" {
        return Err(Error::Format("missing 'end' marker".into()));
    }
    let payload = lines.rest();
    let total: usize = declared.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    check_payload(payload, total, 4)?;
    let mut weights = Vec::with_capacity(count);
    let mut offset = 0;
    for (name, shape) in declared {
        let volume: usize = shape.iter().product();
        let data: Vec<f64> = payload[offset..offset + volume * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        offset += volume * 4;
        weights.push(NamedArray {
            name,
            tensor: Tensor::from_vec(&shape, data).map_err(|e| Error::Format(e.to_string()))?,
        });
    }
    Ok(Checkpoint {
        spec,
        weights,
        training_log: Vec::new(),
    })
}

/// Renders a training log as CSV.
pub fn training_log_csv(log: &[EpochRecord]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv export failed: {e}"));
    writer
        .write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        .map_err(csv_err)?;
    for row in log {
        writer
            .write_record([
                row.epoch.to_string(),
                row.train_loss.to_string(),
                row.train_acc.to_string(),
                row.val_loss.to_string(),
                row.val_acc.to_string(),
            ])
            .map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv export failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv export failed: {e}")))
}

/// Writes a classifier: textual header (kernel, c, bias, convergence,
/// standardization vectors, support-vector layout), then the support
/// vectors and dual coefficients as little-endian 64-bit floats.
pub fn save_svm_model<W: Write>(model: &SvmModel, sink: &mut W) -> Result<()> {
    let count = model.support_vectors.len();
    if count == 0 || model.dual_coefficients.len() != count {
        return Err(Error::invalid(
            "model must hold matching support vectors and coefficients",
        ));
    }
    let dim = model.support_vectors[0].len();
    if model.support_vectors.iter().any(|sv| sv.len() != dim) {
        return Err(Error::invalid("support vectors differ in length"));
    }
    let mut header = preamble("svm-model");
    header += &match &model.kernel {
        KernelSpec::Linear => "kernel linear\n".to_string(),
        KernelSpec::Rbf { gamma } => format!("kernel rbf {gamma}\n"),
    };
    header += &format!("c {}\n", model.c);
    header += &format!("bias {}\n", model.bias);
    header += &format!("converged {}\n", u8::from(model.converged));
    match &model.standardization {
        Some(st) => {
            header += "standardization 1\n";
            header += &format!("mean {}\n", float_list(&st.mean));
            header += &format!("scale {}\n", float_list(&st.scale));
        }
        None => header += "standardization 0\n",
    }
    header += &format!("support-vectors {count} {dim}\n");
    header += "end\n";
    sink.write_all(header.as_bytes())?;
    for sv in &model.support_vectors {
        for &v in sv {
            sink.write_all(&v.to_le_bytes())?;
        }
    }
    for &v in &model.dual_coefficients {
        sink.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a classifier written by [`save_svm_model`].
pub fn load_svm_model<R: Read>(source: &mut R) -> Result<SvmModel> {
    let bytes = read_all(source)?;
    let mut lines = HeaderLines::new(&bytes);
    expect_preamble(&mut lines, "svm-model")?;
    let kernel_text = field(lines.next_line()?, "kernel")?;
    let kernel = match kernel_text.split_once(' ') {
        None if kernel_text == "linear" => KernelSpec::Linear,
        Some(("rbf", gamma)) => KernelSpec::Rbf {
            gamma: parse_value(gamma, "gamma")?,
        },
        _ => return Err(Error::Format(format!("unknown kernel '{kernel_text}'"))),
    };
    let c: f64 = parse_value(field(lines.next_line()?, "c")?, "c")?;
    let bias: f64 = parse_value(field(lines.next_line()?, "bias")?, "bias")?;
    let converged = match field(lines.next_line()?, "converged")? {
        "1" => true,
        "0" => false,
        other => return Err(Error::Format(format!("bad converged flag '{other}'"))),
    };
    let standardization = match field(lines.next_line()?, "standardization")? {
        "0" => None,
        "1" => {
            let mean_text = field(lines.next_line()?, "mean")?;
            let mean: Vec<f64> = mean_text
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(|s| parse_value(s, "mean entry"))
                .collect::<Result<_>>()?;
            let scale = parse_float_list(
                field(lines.next_line()?, "scale")?,
                "scale entry",
                mean.len(),
            )?;
            Some(Standardization { mean, scale })
        }
        other => return Err(Error::Format(format!("bad standardization flag '{other}'"))),
    };
    let layout = field(lines.next_line()?, "support-vectors")?;
    let (count_text, dim_text) = layout
        .split_once(' ')
        .ok_or_else(|| Error::Format(format!("bad support-vector layout '{layout}'")))?;
    let count: usize = parse_value(count_text, "support-vector count")?;
    let dim: usize = parse_value(dim_text, "feature dimension")?;
    if count == 0 || dim == 0 {
        return Err(Error::Format("empty support-vector layout".into()));
    }
    if lines.next_line()? != "end" {
        return Err(Error::Format("missing 'end' marker".into()));
    }
    let payload = lines.rest();
    check_payload(payload, count * dim + count, 8)?;
    let mut floats = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
    let support_vectors: Vec<Vec<f64>> = (0..count)
        .map(|_| floats.by_ref().take(dim).collect())
        .collect();
    let dual_coefficients: Vec<f64> = floats.collect();
    Ok(SvmModel {
        support_vectors,
        dual_coefficients,
        bias,
        kernel,
        c,
        standardization,
        converged,
    })
}

/// Writes an embedding batch: a textual header with the count, width and
/// per-vector provenance, then all values as little-endian 32-bit floats.
pub fn save_embeddings<W: Write>(vectors: &[EmbeddingVector], sink: &mut W) -> Result<()> {
    let Some(first) = vectors.first() else {
        return Err(Error::invalid("embedding batch is empty"));
    };
    let width = first.values.len();
    if width == 0 {
        return Err(Error::invalid("embedding vectors are empty"));
    }
    if vectors.iter().any(|v| v.values.len() != width) {
        return Err(Error::invalid("embedding vectors differ in width"));
    }
    let mut header = preamble("embeddings");
    header += &format!("count {}\n", vectors.len());
    header += &format!("width {width}\n");
    for v in vectors {
        header += &format!("vector {} {}\n", v.source_user, v.source_tap);
    }
    header += "end\n";
    sink.write_all(header.as_bytes())?;
    for v in vectors {
        for &value in &v.values {
            sink.write_all(&(value as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads an embedding batch written by [`save_embeddings`].
pub fn load_embeddings<R: Read>(source: &mut R) -> Result<Vec<EmbeddingVector>> {
    let bytes = read_all(source)?;
    let mut lines = HeaderLines::new(&bytes);
    expect_preamble(&mut lines, "embeddings")?;
    let count: usize = parse_value(field(lines.next_line()?, "count")?, "count")?;
    let width: usize = parse_value(field(lines.next_line()?, "width")?, "width")?;
    if count == 0 || width == 0 {
        return Err(Error::Format("empty embedding layout".into()));
    }
    let mut sources = Vec::with_capacity(count);
    for _ in 0..count {
        let entry = field(lines.next_line()?, "vector")?;
        let (user, tap) = entry
            .rsplit_once(' ')
            .ok_or_else(|| Error::Format(format!("bad vector entry '{entry}'")))?;
        sources.push((user.to_string(), parse_value::<u32>(tap, "tap index")?));
    }
    if lines.next_line()? != "end" {
        return Err(Error::Format("missing 'end' marker".into()));
    }
    let payload = lines.rest();
    check_payload(payload, count * width, 4)?;
    let mut floats = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")) as f64);
    Ok(sources
        .into_iter()
        .map(|(source_user, source_tap)| EmbeddingVector {
            values: floats.by_ref().take(width).collect(),
            source_user,
            source_tap,
        })
        .collect())
}
