use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use msid::classify::{
    default_rbf_gamma, grid_search_c, KernelSpec, Standardization, DEEP_FEATURES_C,
    HANDCRAFTED_FEATURES_C,
};
use msid::dataio::{
    load_checkpoint, load_embeddings, load_sessions, save_checkpoint, save_embeddings,
    save_sessions, training_log_csv, SynthConfig, DEFAULT_SEED,
};
use msid::encoding::{
    encode_image, generate_sequence, verify_coverage, write_pgm, RescaleMode, SignalImage,
    SignalSequence,
};
use msid::neuralnet::{
    extract_embedding, train_best_of_runs, Checkpoint, DepthVariant, EmbeddingVector, NetworkSpec,
    TrainConfig,
};
use msid::protocol::{
    build_fewshot_tasks, compare_reports, multiclass_split, run_identification, split_users,
    FeatureProvider, FewShotCounts, HandcraftedProvider, IdentificationReport, TaskKernel,
};
use msid::signal::{normalize_session, resample_session, TapSession};

/// Tap-to-identity pipeline: synthesize sessions, encode images, pre-train
/// the network, extract embeddings, evaluate few-shot identification and
/// compare feature providers.
///
/// Every subcommand prints human-readable lines followed by one JSON
/// summary line. Setting MSID_SEED overrides the default of every seed
/// flag.
#[derive(Parser)]
#[command(name = "msid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session corpus.
    Synth(SynthArgs),
    /// Render sessions as gray-scale signal images (binary PGM).
    Encode(EncodeArgs),
    /// Print a covering sequence, optionally verifying subset coverage.
    GenSeq(GenSeqArgs),
    /// Train the multi-class network on the pretraining half.
    Pretrain(PretrainArgs),
    /// Extract embeddings for sessions using a trained checkpoint.
    Embed(EmbedArgs),
    /// Run the few-shot identification protocol.
    Identify(IdentifyArgs),
    /// Compare two identification reports with a McNemar test.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output path for the session corpus (newline-delimited JSON).
    #[arg(long)]
    out: PathBuf,
    /// Number of synthetic users.
    #[arg(long, default_value_t = 10)]
    users: usize,
    /// Taps recorded per user.
    #[arg(long, default_value_t = 40)]
    taps: usize,
    /// Corpus seed.
    #[arg(long, env = "MSID_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Between-user separation; 0 makes users statistically identical.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    /// Additive sensor noise, standard deviation.
    #[arg(long, default_value_t = 0.05)]
    noise_std: f64,
    /// Timestamp jitter, standard deviation in seconds.
    #[arg(long, default_value_t = 0.001)]
    jitter_std: f64,
    /// Nominal sample rate in hertz.
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    /// Minimum samples per sensor.
    #[arg(long, default_value_t = 140)]
    min_len: usize,
    /// Maximum samples per sensor.
    #[arg(long, default_value_t = 160)]
    max_len: usize,
}

#[derive(Args)]
struct EncodeArgs {
    /// Session corpus to encode.
    #[arg(long)]
    sessions: PathBuf,
    /// Directory for the PGM images (created if absent).
    #[arg(long)]
    out_dir: PathBuf,
    /// Pixel rescaling: "global" or "per-signal".
    #[arg(long, default_value = "global")]
    rescale: String,
    /// Encode at most this many sessions.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct GenSeqArgs {
    /// Alphabet size.
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Window length whose subset coverage matters.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Check that every n-subset appears as a contiguous window.
    #[arg(long)]
    verify: bool,
    /// Print the built-in length-25 sequence instead of generating one.
    #[arg(long)]
    reference: bool,
}

#[derive(Args)]
struct PretrainArgs {
    /// Session corpus to train on.
    #[arg(long)]
    sessions: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Training-log CSV output path.
    #[arg(long)]
    log_out: Option<PathBuf>,
    /// Convolutional depth: 6, 9 or 12 layers.
    #[arg(long, default_value_t = 6)]
    depth: usize,
    /// Embedding width: 128, 256 or 512.
    #[arg(long, default_value_t = 256)]
    embed: usize,
    /// Mini-batch size: 32, 64 or 128.
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Dropout rate for the dense stack.
    #[arg(long, default_value_t = 0.4)]
    dropout: f64,
    /// Maximum training epochs.
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Early-stopping patience, in epochs without improvement.
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// Independent runs; the best validation accuracy wins.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Training seed.
    #[arg(long, env = "MSID_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Seed for the pretraining/identification user split.
    #[arg(long, env = "MSID_SEED", default_value_t = DEFAULT_SEED)]
    split_seed: u64,
    /// Train on every user instead of the pretraining half.
    #[arg(long)]
    all_users: bool,
}

#[derive(Args)]
struct EmbedArgs {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Session corpus to embed.
    #[arg(long)]
    sessions: PathBuf,
    /// Embeddings output path.
    #[arg(long)]
    out: PathBuf,
    /// Which users to embed: "identification", "pretrain" or "all".
    #[arg(long, default_value = "identification")]
    half: String,
    /// Seed for the pretraining/identification user split.
    #[arg(long, env = "MSID_SEED", default_value_t = DEFAULT_SEED)]
    split_seed: u64,
    /// Worker threads. Output order is fixed regardless.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Session corpus to evaluate on.
    #[arg(long)]
    sessions: PathBuf,
    /// Embeddings file; when omitted, handcrafted features are used.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Kernel: "linear", "rbf" (gamma from the data) or "rbf:<gamma>".
    /// Defaults to the preset for the chosen features.
    #[arg(long)]
    kernel: Option<String>,
    /// Soft-margin C. Defaults to the preset for the chosen features.
    #[arg(long)]
    c: Option<f64>,
    /// Pick C by cross-validation on the first task before the run.
    #[arg(long)]
    tune_c: bool,
    /// Comma-separated C grid for --tune-c.
    #[arg(long, default_value = "0.1,1,10,100")]
    c_grid: String,
    /// Cross-validation folds for --tune-c.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Positive training taps per task.
    #[arg(long, default_value_t = 20)]
    train_pos: usize,
    /// Negative training taps per task.
    #[arg(long, default_value_t = 100)]
    train_neg: usize,
    /// Positive test taps per task.
    #[arg(long, default_value_t = 100)]
    test_pos: usize,
    /// Negative test taps per task.
    #[arg(long, default_value_t = 100)]
    test_neg: usize,
    /// Seed for the pretraining/identification user split.
    #[arg(long, env = "MSID_SEED", default_value_t = DEFAULT_SEED)]
    split_seed: u64,
    /// Seed for task sampling.
    #[arg(long, env = "MSID_SEED", default_value_t = DEFAULT_SEED)]
    task_seed: u64,
    /// Evaluate every user instead of the identification half.
    #[arg(long)]
    all_users: bool,
    /// Worker threads; results merge in task order either way.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write the full report as JSON here.
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Write per-task metrics as CSV here.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// First identification report (JSON).
    #[arg(long)]
    report_a: PathBuf,
    /// Second identification report (JSON).
    #[arg(long)]
    report_b: PathBuf,
    /// Significance level: 0.01 or 0.05.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Write report A with the comparison appended.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Encode(args) => run_encode(args),
        Command::GenSeq(args) => run_gen_seq(args),
        Command::Pretrain(args) => run_pretrain(args),
        Command::Embed(args) => run_embed(args),
        Command::Identify(args) => run_identify(args),
        Command::Compare(args) => run_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn open_reader(path: &Path) -> anyhow::Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn create_writer(path: &Path) -> anyhow::Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
}

fn read_corpus(path: &Path) -> anyhow::Result<Vec<TapSession>> {
    load_sessions(open_reader(path)?).with_context(|| format!("reading {}", path.display()))
}

fn unique_users(sessions: &[TapSession]) -> Vec<String> {
    let set: BTreeSet<&str> = sessions.iter().map(|s| s.user_id.as_str()).collect();
    set.into_iter().map(String::from).collect()
}

/// Reference-sequence image of one session, tagged with its provenance.
fn session_image(
    session: &TapSession,
    sequence: &SignalSequence,
    rescale: RescaleMode,
) -> anyhow::Result<SignalImage> {
    let resampled = resample_session(session)?;
    let normalized = normalize_session(&resampled)?;
    let mut image = encode_image(&normalized, sequence, rescale)?;
    image.source_user = session.user_id.clone();
    image.source_tap = session.tap_index;
    Ok(image)
}

fn print_summary(value: serde_json::Value) {
    println!("{value}");
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    let config = SynthConfig {
        num_users: args.users,
        taps_per_user: args.taps,
        sample_rate_hz: args.rate,
        jitter_std_seconds: args.jitter_std,
        length_range: (args.min_len, args.max_len),
        separation: args.separation,
        noise_std: args.noise_std,
        seed: args.seed,
    };
    let sessions = msid::dataio::synth_generate(&config)?;
    let mut writer = create_writer(&args.out)?;
    save_sessions(&sessions, &mut writer)?;
    writer.flush()?;
    println!(
        "wrote {} sessions ({} users x {} taps) to {}",
        sessions.len(),
        args.users,
        args.taps,
        args.out.display()
    );
    print_summary(json!({
        "command": "synth",
        "sessions": sessions.len(),
        "users": args.users,
        "taps": args.taps,
        "seed": args.seed,
        "separation": args.separation,
        "out": args.out,
    }));
    Ok(())
}

/// Keeps file names portable for arbitrary user ids.
fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn run_encode(args: EncodeArgs) -> anyhow::Result<()> {
    let rescale: RescaleMode = args.rescale.parse()?;
    let sessions = read_corpus(&args.sessions)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let sequence = SignalSequence::reference();
    let limit = args.limit.unwrap_or(sessions.len());
    let mut written = 0usize;
    for session in sessions.iter().take(limit) {
        let image = session_image(session, &sequence, rescale)?;
        let name = format!("{}_tap{:05}.pgm", sanitize(&session.user_id), session.tap_index);
        let path = args.out_dir.join(name);
        let mut writer = create_writer(&path)?;
        write_pgm(&image, &mut writer)?;
        writer.flush()?;
        written += 1;
    }
    println!("encoded {written} images into {}", args.out_dir.display());
    print_summary(json!({
        "command": "encode",
        "images": written,
        "rescale": args.rescale,
        "out_dir": args.out_dir,
    }));
    Ok(())
}

fn run_gen_seq(args: GenSeqArgs) -> anyhow::Result<()> {
    let sequence = if args.reference {
        if args.k != 6 || args.n != 3 {
            bail!("the reference sequence exists only for --k 6 --n 3");
        }
        SignalSequence::reference()
    } else {
        generate_sequence(args.k, args.n)?
    };
    let symbols: Vec<String> = sequence.symbols().iter().map(|s| s.to_string()).collect();
    println!("sequence ({} symbols): {}", symbols.len(), symbols.join(","));
    let mut coverage = None;
    if args.verify {
        let report = verify_coverage(&sequence);
        println!("coverage {}/{}", report.covered, report.total);
        if !report.is_complete() {
            bail!("{} subsets are not covered", report.missing.len());
        }
        coverage = Some(json!({ "covered": report.covered, "total": report.total }));
    }
    print_summary(json!({
        "command": "gen-seq",
        "k": args.k,
        "n": args.n,
        "length": sequence.symbols().len(),
        "sequence": sequence.symbols(),
        "coverage": coverage,
    }));
    Ok(())
}

fn run_pretrain(args: PretrainArgs) -> anyhow::Result<()> {
    let sessions = read_corpus(&args.sessions)?;
    let users = unique_users(&sessions);
    let chosen = if args.all_users {
        users
    } else {
        split_users(&users, args.split_seed)?.pretrain_users
    };
    let split = multiclass_split(&sessions, &chosen)?;
    let sequence = SignalSequence::reference();
    let make_set = |indices: &[usize]| -> anyhow::Result<Vec<(SignalImage, usize)>> {
        indices
            .iter()
            .map(|&i| {
                let session = &sessions[i];
                let label = split
                    .label_of(&session.user_id)
                    .context("session outside the class list")?;
                Ok((session_image(session, &sequence, RescaleMode::Global)?, label))
            })
            .collect()
    };
    let train_set = make_set(split.train())?;
    let val_set = make_set(split.validation())?;

    let mut spec = NetworkSpec::new(
        DepthVariant::from_layer_count(args.depth)?,
        args.embed,
        split.classes().len(),
    );
    spec.dropout_rate = args.dropout;
    let config = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch,
        patience: args.patience,
        seed: args.seed,
        runs: args.runs,
    };
    println!(
        "pretraining on {} classes: {} train / {} validation images",
        split.classes().len(),
        train_set.len(),
        val_set.len()
    );
    let checkpoint = train_best_of_runs(&spec, &config, &train_set, &val_set)?;

    println!("epoch  train_loss  train_acc   val_loss    val_acc");
    for r in &checkpoint.training_log {
        println!(
            "{:>5}  {:>10.4}  {:>9.4}  {:>9.4}  {:>9.4}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        );
    }
    // Strict comparison: on ties training keeps the earlier epoch's weights.
    let best = checkpoint
        .training_log
        .iter()
        .reduce(|best, r| if r.val_acc > best.val_acc { r } else { best })
        .context("empty training log")?;
    println!(
        "best validation accuracy {:.4} at epoch {}",
        best.val_acc, best.epoch
    );

    let mut writer = create_writer(&args.out)?;
    save_checkpoint(&checkpoint, &mut writer)?;
    writer.flush()?;
    println!("checkpoint written to {}", args.out.display());
    if let Some(path) = &args.log_out {
        fs::write(path, training_log_csv(&checkpoint.training_log)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    print_summary(json!({
        "command": "pretrain",
        "classes": split.classes().len(),
        "train_images": train_set.len(),
        "val_images": val_set.len(),
        "epochs_logged": checkpoint.training_log.len(),
        "best_val_acc": best.val_acc,
        "best_epoch": best.epoch,
        "depth": args.depth,
        "embed": args.embed,
        "runs": args.runs,
        "seed": args.seed,
        "split_seed": args.split_seed,
        "out": args.out,
    }));
    Ok(())
}

/// Applies `f` to 0..n on `workers` threads, merging results in index order.
fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> anyhow::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> anyhow::Result<T> + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let gathered: Vec<Vec<(usize, anyhow::Result<T>)>> = std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| scope.spawn(move || (w..n).step_by(workers).map(|i| (i, f(i))).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    let mut merged: Vec<(usize, anyhow::Result<T>)> = gathered.into_iter().flatten().collect();
    merged.sort_by_key(|(i, _)| *i);
    merged.into_iter().map(|(_, r)| r).collect()
}

fn run_embed(args: EmbedArgs) -> anyhow::Result<()> {
    if args.workers == 0 {
        bail!("worker count must be at least 1");
    }
    let mut reader = open_reader(&args.checkpoint)?;
    let checkpoint: Checkpoint = load_checkpoint(&mut reader)
        .with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let sessions = read_corpus(&args.sessions)?;
    let users = unique_users(&sessions);
    let chosen: BTreeSet<String> = match args.half.as_str() {
        "all" => users.into_iter().collect(),
        "pretrain" => split_users(&users, args.split_seed)?
            .pretrain_users
            .into_iter()
            .collect(),
        "identification" => split_users(&users, args.split_seed)?
            .identification_users
            .into_iter()
            .collect(),
        other => bail!("unknown half {other:?}; use identification, pretrain or all"),
    };
    let selected: Vec<&TapSession> = sessions
        .iter()
        .filter(|s| chosen.contains(&s.user_id))
        .collect();
    if selected.is_empty() {
        bail!("no sessions match the requested half");
    }
    let sequence = SignalSequence::reference();
    let vectors: Vec<EmbeddingVector> = parallel_map(selected.len(), args.workers, |i| {
        let image = session_image(selected[i], &sequence, RescaleMode::Global)?;
        Ok(extract_embedding(&checkpoint, &image)?)
    })?;
    let mut writer = create_writer(&args.out)?;
    save_embeddings(&vectors, &mut writer)?;
    writer.flush()?;
    println!(
        "embedded {} sessions (width {}) to {}",
        vectors.len(),
        checkpoint.spec.embedding_width,
        args.out.display()
    );
    print_summary(json!({
        "command": "embed",
        "vectors": vectors.len(),
        "width": checkpoint.spec.embedding_width,
        "half": args.half,
        "split_seed": args.split_seed,
        "out": args.out,
    }));
    Ok(())
}

/// Serves stored embeddings keyed by session provenance.
struct EmbeddingFileProvider {
    map: BTreeMap<(String, u32), Vec<f64>>,
}

impl EmbeddingFileProvider {
    fn load(path: &Path) -> anyhow::Result<Self> {
        let vectors = load_embeddings(&mut open_reader(path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut map = BTreeMap::new();
        for v in vectors {
            map.insert((v.source_user, v.source_tap), v.values);
        }
        Ok(Self { map })
    }
}

impl FeatureProvider for EmbeddingFileProvider {
    fn name(&self) -> &str {
        "cnn-embedding"
    }

    fn features(&self, session: &TapSession) -> msid::Result<Vec<f64>> {
        self.map
            .get(&(session.user_id.clone(), session.tap_index))
            .cloned()
            .ok_or_else(|| {
                msid::Error::invalid(format!(
                    "no stored embedding for user {} tap {}",
                    session.user_id, session.tap_index
                ))
            })
    }
}

fn parse_kernel(text: &str) -> anyhow::Result<TaskKernel> {
    match text {
        "linear" => Ok(TaskKernel::Linear),
        "rbf" => Ok(TaskKernel::RbfAuto),
        other => match other.strip_prefix("rbf:") {
            Some(gamma) => {
                let gamma: f64 = gamma.parse().context("bad gamma")?;
                if !(gamma.is_finite() && gamma > 0.0) {
                    bail!("gamma must be positive and finite");
                }
                Ok(TaskKernel::Rbf(gamma))
            }
            None => bail!("unknown kernel {other:?}; use linear, rbf or rbf:<gamma>"),
        },
    }
}

fn parse_c_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            let value: f64 = part.trim().parse().with_context(|| format!("bad C {part:?}"))?;
            if !(value.is_finite() && value > 0.0) {
                bail!("C values must be positive and finite");
            }
            Ok(value)
        })
        .collect()
}

fn run_identify(args: IdentifyArgs) -> anyhow::Result<()> {
    let sessions = read_corpus(&args.sessions)?;
    let users = unique_users(&sessions);
    let targets = if args.all_users {
        users
    } else {
        split_users(&users, args.split_seed)?.identification_users
    };
    let counts = FewShotCounts {
        train_pos: args.train_pos,
        train_neg: args.train_neg,
        test_pos: args.test_pos,
        test_neg: args.test_neg,
    };
    let tasks = build_fewshot_tasks(&sessions, &targets, counts, args.task_seed)?;

    let provider: Box<dyn FeatureProvider> = match &args.embeddings {
        Some(path) => Box::new(EmbeddingFileProvider::load(path)?),
        None => Box::new(HandcraftedProvider),
    };
    let kernel = match &args.kernel {
        Some(text) => parse_kernel(text)?,
        None if args.embeddings.is_some() => TaskKernel::Linear,
        None => TaskKernel::RbfAuto,
    };
    let preset_c = if args.embeddings.is_some() {
        DEEP_FEATURES_C
    } else {
        HANDCRAFTED_FEATURES_C
    };
    let mut c = args.c.unwrap_or(preset_c);

    if args.tune_c {
        let first = tasks.first().context("no tasks")?;
        let mut train: Vec<(Vec<f64>, i8)> = Vec::new();
        for &i in &first.train_pos {
            train.push((provider.features(&sessions[i])?, 1));
        }
        for &i in &first.train_neg {
            train.push((provider.features(&sessions[i])?, -1));
        }
        let kernel_spec = match kernel {
            TaskKernel::Linear => KernelSpec::Linear,
            TaskKernel::Rbf(gamma) => KernelSpec::Rbf { gamma },
            TaskKernel::RbfAuto => {
                let matrix: Vec<Vec<f64>> = train.iter().map(|(x, _)| x.clone()).collect();
                let standardization = Standardization::fit(&matrix)?;
                let standardized: Vec<Vec<f64>> = matrix
                    .iter()
                    .map(|x| standardization.apply(x))
                    .collect::<msid::Result<_>>()?;
                KernelSpec::Rbf {
                    gamma: default_rbf_gamma(&standardized)?,
                }
            }
        };
        let grid = parse_c_grid(&args.c_grid)?;
        let (best_c, table) = grid_search_c(&train, &kernel_spec, &grid, args.folds, true)?;
        for (candidate, accuracy) in &table {
            println!("C={candidate}: cross-validation accuracy {accuracy:.4}");
        }
        println!("tuned C to {best_c} on the first task");
        c = best_c;
    }

    let report = run_identification(&sessions, &tasks, provider.as_ref(), kernel, c, args.workers)?;

    println!(
        "provider {} | kernel {} | C {} | {} tasks",
        report.provider,
        report.kernel,
        report.c,
        report.per_task.len()
    );
    println!("target        accuracy       far       frr       gap");
    for task in &report.per_task {
        println!(
            "{:<12}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
            task.target_user, task.accuracy, task.far, task.frr, task.calibrated_gap
        );
    }
    println!(
        "{:<12}  {:>8.4}  {:>8.4}  {:>8.4}",
        "mean", report.aggregate.accuracy, report.aggregate.far, report.aggregate.frr
    );

    if let Some(path) = &args.report_out {
        let mut writer = create_writer(path)?;
        serde_json::to_writer_pretty(&mut writer, &report)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        println!("report written to {}", path.display());
    }
    if let Some(path) = &args.csv_out {
        fs::write(path, report.to_csv()?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        println!("csv written to {}", path.display());
    }
    print_summary(json!({
        "command": "identify",
        "provider": report.provider,
        "kernel": report.kernel,
        "c": report.c,
        "tasks": report.per_task.len(),
        "aggregate": report.aggregate,
        "counts": {
            "train_pos": counts.train_pos,
            "train_neg": counts.train_neg,
            "test_pos": counts.test_pos,
            "test_neg": counts.test_neg,
        },
        "split_seed": args.split_seed,
        "task_seed": args.task_seed,
        "report_out": args.report_out,
        "csv_out": args.csv_out,
    }));
    Ok(())
}

fn run_compare(args: CompareArgs) -> anyhow::Result<()> {
    let report_a: IdentificationReport = serde_json::from_reader(open_reader(&args.report_a)?)
        .with_context(|| format!("reading {}", args.report_a.display()))?;
    let report_b: IdentificationReport = serde_json::from_reader(open_reader(&args.report_b)?)
        .with_context(|| format!("reading {}", args.report_b.display()))?;
    let pair = compare_reports(&report_a, &report_b, args.alpha)?;

    println!(
        "provider a: {:<16} accuracy {:.4}",
        pair.provider_a, report_a.aggregate.accuracy
    );
    println!(
        "provider b: {:<16} accuracy {:.4}",
        pair.provider_b, report_b.aggregate.accuracy
    );
    let verdict = if pair.outcome.significant {
        "significant"
    } else {
        "not significant"
    };
    println!(
        "mcnemar b={} c={} statistic {:.4} -> {} at alpha {}",
        pair.outcome.b_count, pair.outcome.c_count, pair.outcome.statistic, verdict, args.alpha
    );

    if let Some(path) = &args.out {
        let mut annotated = report_a.clone();
        annotated.significance.push(pair.clone());
        let mut writer = create_writer(path)?;
        serde_json::to_writer_pretty(&mut writer, &annotated)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        println!("annotated report written to {}", path.display());
    }
    print_summary(json!({
        "command": "compare",
        "provider_a": pair.provider_a,
        "provider_b": pair.provider_b,
        "accuracy_a": report_a.aggregate.accuracy,
        "accuracy_b": report_b.aggregate.accuracy,
        "statistic": pair.outcome.statistic,
        "significant": pair.outcome.significant,
        "b_count": pair.outcome.b_count,
        "c_count": pair.outcome.c_count,
        "alpha": pair.outcome.alpha,
    }));
    Ok(())
}
