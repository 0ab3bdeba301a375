//! The identification experiment: disjoint user halves, few-shot task
//! construction with separate negative pools, ACC/FAR/FRR evaluation and
//! McNemar significance tests between feature providers.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{
    calibrate_bias, default_rbf_gamma, train_svm, KernelSpec, Standardization,
};
use crate::encoding::{encode_image, RescaleMode, SignalImage, SignalSequence};
use crate::error::{Error, Result};
use crate::features::extract_handcrafted;
use crate::neuralnet::{derive_seed, extract_embedding, Checkpoint};
use crate::signal::{normalize_session, resample_session, TapSession};

/// The user population cut into two disjoint halves: one half trains the
/// multi-class feature extractor, the other provides the identification
/// targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    pub pretrain_users: Vec<String>,
    pub identification_users: Vec<String>,
    pub seed: u64,
}

/// Shuffles the unique user ids with a seeded generator and assigns the
/// first half to pretraining, the second to identification. The input order
/// does not matter; ids are brought into a canonical order before the
/// shuffle.
pub fn split_users(user_ids: &[String], seed: u64) -> Result<UserSplit> {
    let unique: BTreeSet<&String> = user_ids.iter().collect();
    if unique.len() != user_ids.len() {
        return Err(Error::invalid("duplicate user ids in split input"));
    }
    if user_ids.is_empty() || user_ids.len() % 2 != 0 {
        return Err(Error::invalid(format!(
            "user count {} must be even and positive",
            user_ids.len()
        )));
    }
    let mut shuffled = user_ids.to_vec();
    shuffled.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let identification_users = shuffled.split_off(shuffled.len() / 2);
    Ok(UserSplit {
        pretrain_users: shuffled,
        identification_users,
        seed,
    })
}

/// Train/validation partition of the pretraining sessions plus a stable
/// user-to-class assignment (users in sorted order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticlassSplit {
    classes: Vec<String>,
    train: Vec<usize>,
    validation: Vec<usize>,
}

impl MulticlassSplit {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Session indices of the training portion.
    pub fn train(&self) -> &[usize] {
        &self.train
    }

    /// Session indices of the validation portion.
    pub fn validation(&self) -> &[usize] {
        &self.validation
    }

    /// Class index of a user, if the user is part of the split.
    pub fn label_of(&self, user: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(user)).ok()
    }
}

/// Splits each listed user's sessions 80/20 by tap index: the first four
/// fifths (in registration order) train the network, the rest validate it.
/// Sessions of unlisted users are ignored.
pub fn multiclass_split(sessions: &[TapSession], users: &[String]) -> Result<MulticlassSplit> {
    let mut classes = users.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() != users.len() {
        return Err(Error::invalid("duplicate user ids in multi-class split"));
    }
    if classes.is_empty() {
        return Err(Error::invalid("multi-class split needs at least one user"));
    }
    let mut per_user: BTreeMap<&str, Vec<usize>> =
        classes.iter().map(|u| (u.as_str(), Vec::new())).collect();
    for (i, session) in sessions.iter().enumerate() {
        if let Some(list) = per_user.get_mut(session.user_id.as_str()) {
            list.push(i);
        }
    }
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for user in &classes {
        let mut list = per_user.remove(user.as_str()).expect("user registered above");
        if list.len() < 2 {
            return Err(Error::invalid(format!(
                "user {user} has {} sessions, needs at least 2 for an 80/20 split",
                list.len()
            )));
        }
        list.sort_by_key(|&i| sessions[i].tap_index);
        let cut = list.len() * 4 / 5;
        train.extend_from_slice(&list[..cut]);
        validation.extend_from_slice(&list[cut..]);
    }
    Ok(MulticlassSplit {
        classes,
        train,
        validation,
    })
}

/// Sample counts of one few-shot task. The defaults are the full-scale
/// protocol; desk runs shrink every count proportionally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotCounts {
    pub train_pos: usize,
    pub train_neg: usize,
    pub test_pos: usize,
    pub test_neg: usize,
}

impl Default for FewShotCounts {
    fn default() -> Self {
        Self {
            train_pos: 20,
            train_neg: 100,
            test_pos: 100,
            test_neg: 100,
        }
    }
}

impl FewShotCounts {
    pub fn validate(&self) -> Result<()> {
        if self.train_pos == 0 || self.train_neg == 0 || self.test_pos == 0 || self.test_neg == 0 {
            return Err(Error::invalid("every few-shot count must be at least 1"));
        }
        Ok(())
    }
}

/// One binary identification problem. Sample references are indices into
/// the session slice the task was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotTask {
    pub target_user: String,
    pub train_pos: Vec<usize>,
    pub train_neg: Vec<usize>,
    pub test_pos: Vec<usize>,
    pub test_neg: Vec<usize>,
    pub neg_pool_train: Vec<String>,
    pub neg_pool_test: Vec<String>,
}

fn sample_pool(
    per_user: &BTreeMap<&str, Vec<usize>>,
    pool: &[String],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let mut candidates = Vec::new();
    for user in pool {
        candidates.extend_from_slice(&per_user[user.as_str()]);
    }
    if candidates.len() < count {
        return Err(Error::invalid(format!(
            "negative pool of {} users holds {} samples, need {count}",
            pool.len(),
            candidates.len()
        )));
    }
    candidates.sort_unstable();
    let picks = rand::seq::index::sample(rng, candidates.len(), count);
    let mut chosen: Vec<usize> = picks.iter().map(|i| candidates[i]).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Builds one task per identification user. Positive training samples are
/// the target's first taps (registration order), test positives the last
/// ones. The remaining users are shuffled into two near-equal pools; train
/// negatives are drawn uniformly from one pool's sessions, test negatives
/// from the other, so negative identities never leak between train and
/// test.
pub fn build_fewshot_tasks(
    sessions: &[TapSession],
    identification_users: &[String],
    counts: FewShotCounts,
    seed: u64,
) -> Result<Vec<FewShotTask>> {
    counts.validate()?;
    let unique: BTreeSet<&String> = identification_users.iter().collect();
    if unique.len() != identification_users.len() {
        return Err(Error::invalid("duplicate identification user ids"));
    }
    if identification_users.len() < 3 {
        return Err(Error::invalid(
            "need at least 3 identification users to form two non-empty negative pools",
        ));
    }
    let mut per_user: BTreeMap<&str, Vec<usize>> = identification_users
        .iter()
        .map(|u| (u.as_str(), Vec::new()))
        .collect();
    for (i, session) in sessions.iter().enumerate() {
        if let Some(list) = per_user.get_mut(session.user_id.as_str()) {
            list.push(i);
        }
    }
    let needed = counts.train_pos + counts.test_pos;
    for (user, list) in &mut per_user {
        list.sort_by_key(|&i| sessions[i].tap_index);
        if list.len() < needed {
            return Err(Error::invalid(format!(
                "user {user} has {} sessions, needs at least {needed}",
                list.len()
            )));
        }
    }
    let mut tasks = Vec::with_capacity(identification_users.len());
    for (task_idx, target) in identification_users.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, task_idx as u64));
        let mut others: Vec<&String> = identification_users.iter().filter(|u| *u != target).collect();
        others.sort();
        others.shuffle(&mut rng);
        let cut = (others.len() + 1) / 2;
        let mut neg_pool_train: Vec<String> = others[..cut].iter().map(|u| (*u).clone()).collect();
        let mut neg_pool_test: Vec<String> = others[cut..].iter().map(|u| (*u).clone()).collect();
        let train_neg = sample_pool(&per_user, &neg_pool_train, counts.train_neg, &mut rng)?;
        let test_neg = sample_pool(&per_user, &neg_pool_test, counts.test_neg, &mut rng)?;
        neg_pool_train.sort();
        neg_pool_test.sort();
        let own = &per_user[target.as_str()];
        tasks.push(FewShotTask {
            target_user: target.clone(),
            train_pos: own[..counts.train_pos].to_vec(),
            train_neg,
            test_pos: own[own.len() - counts.test_pos..].to_vec(),
            test_neg,
            neg_pool_train,
            neg_pool_test,
        });
    }
    Ok(tasks)
}

/// Binary confusion counts; the positive class is the target user.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }
}

/// (accuracy, FAR, FRR): accuracy is the correct fraction overall, the
/// false acceptance rate is FP/(FP+TN) and the false rejection rate
/// FN/(FN+TP).
pub fn confusion_metrics(cm: &ConfusionMatrix) -> Result<(f64, f64, f64)> {
    let positives = cm.true_positives + cm.false_negatives;
    let negatives = cm.false_positives + cm.true_negatives;
    if positives == 0 {
        return Err(Error::invalid("no positive samples were evaluated"));
    }
    if negatives == 0 {
        return Err(Error::invalid("no negative samples were evaluated"));
    }
    let accuracy = (cm.true_positives + cm.true_negatives) as f64 / cm.total() as f64;
    let far = cm.false_positives as f64 / negatives as f64;
    let frr = cm.false_negatives as f64 / positives as f64;
    Ok((accuracy, far, frr))
}

/// Outcome of a paired McNemar test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McnemarOutcome {
    pub statistic: f64,
    pub significant: bool,
    /// Samples the first system got right and the second wrong.
    pub b_count: usize,
    /// Samples the second system got right and the first wrong.
    pub c_count: usize,
    pub alpha: f64,
}

/// Continuity-corrected McNemar test on paired correctness vectors:
/// statistic (|b-c|-1)²/(b+c), compared against the chi-square critical
/// value with one degree of freedom. Supported levels are 0.01 and 0.05;
/// with no disagreements the statistic is 0 and nothing is significant.
pub fn mcnemar_test(correct_a: &[bool], correct_b: &[bool], alpha: f64) -> Result<McnemarOutcome> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::invalid(format!(
            "correctness vectors differ in length: {} vs {}",
            correct_a.len(),
            correct_b.len()
        )));
    }
    let critical = if alpha == 0.01 {
        6.635
    } else if alpha == 0.05 {
        3.841
    } else {
        return Err(Error::invalid(format!(
            "unsupported significance level {alpha} (use 0.01 or 0.05)"
        )));
    };
    let mut b_count = 0usize;
    let mut c_count = 0usize;
    for (&a, &b) in correct_a.iter().zip(correct_b) {
        match (a, b) {
            (true, false) => b_count += 1,
            (false, true) => c_count += 1,
            _ => {}
        }
    }
    let statistic = if b_count + c_count == 0 {
        0.0
    } else {
        let diff = (b_count as f64 - c_count as f64).abs() - 1.0;
        diff * diff / (b_count + c_count) as f64
    };
    Ok(McnemarOutcome {
        statistic,
        significant: statistic > critical,
        b_count,
        c_count,
        alpha,
    })
}

/// Maps a tap session to a fixed-length feature vector. Implementations
/// must be thread safe so tasks can be evaluated in parallel.
pub trait FeatureProvider: Sync {
    /// Short name echoed in reports.
    fn name(&self) -> &str;

    fn features(&self, session: &TapSession) -> Result<Vec<f64>>;
}

/// The 102-value statistical feature baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct HandcraftedProvider;

impl FeatureProvider for HandcraftedProvider {
    fn name(&self) -> &str {
        "handcrafted"
    }

    fn features(&self, session: &TapSession) -> Result<Vec<f64>> {
        let resampled = resample_session(session)?;
        Ok(extract_handcrafted(&resampled)?.into_values())
    }
}

/// Embeddings from a trained checkpoint, computed on the session's image.
pub struct EmbeddingProvider {
    checkpoint: Checkpoint,
    sequence: SignalSequence,
    rescale: RescaleMode,
}

impl EmbeddingProvider {
    /// Uses the reference row sequence and global rescaling.
    pub fn new(checkpoint: Checkpoint) -> Self {
        Self::with_encoding(checkpoint, SignalSequence::reference(), RescaleMode::Global)
    }

    pub fn with_encoding(
        checkpoint: Checkpoint,
        sequence: SignalSequence,
        rescale: RescaleMode,
    ) -> Self {
        Self {
            checkpoint,
            sequence,
            rescale,
        }
    }

    pub fn image_for(&self, session: &TapSession) -> Result<SignalImage> {
        let resampled = resample_session(session)?;
        let normalized = normalize_session(&resampled)?;
        let mut image = encode_image(&normalized, &self.sequence, self.rescale)?;
        image.source_user = session.user_id.clone();
        image.source_tap = session.tap_index;
        Ok(image)
    }
}

impl FeatureProvider for EmbeddingProvider {
    fn name(&self) -> &str {
        "cnn-embedding"
    }

    fn features(&self, session: &TapSession) -> Result<Vec<f64>> {
        let image = self.image_for(session)?;
        Ok(extract_embedding(&self.checkpoint, &image)?.values)
    }
}

/// Kernel choice for the per-task classifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskKernel {
    Linear,
    /// RBF with gamma picked per task from the standardized training
    /// matrix.
    RbfAuto,
    Rbf(f64),
}

impl TaskKernel {
    fn label(&self) -> String {
        match self {
            TaskKernel::Linear => "linear".to_string(),
            TaskKernel::RbfAuto => "rbf-auto".to_string(),
            TaskKernel::Rbf(gamma) => format!("rbf gamma={gamma}"),
        }
    }
}

/// Metrics of one target user's task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub target_user: String,
    pub accuracy: f64,
    pub far: f64,
    pub frr: f64,
    /// |FAR - FRR| achieved on the calibration (training) samples.
    pub calibrated_gap: f64,
    pub confusion: ConfusionMatrix,
    /// Per-sample correctness over the test set, positives first, then
    /// negatives, for later McNemar pairing.
    pub correctness: Vec<bool>,
    /// The RBF width actually used, when the kernel has one.
    pub gamma: Option<f64>,
    pub converged: bool,
}

/// Mean metrics over all tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: f64,
    pub far: f64,
    pub frr: f64,
}

/// A provider-vs-provider McNemar record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificancePair {
    pub provider_a: String,
    pub provider_b: String,
    pub outcome: McnemarOutcome,
}

/// Everything an identification run produces for one feature provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub provider: String,
    pub kernel: String,
    pub c: f64,
    pub per_task: Vec<TaskResult>,
    pub aggregate: AggregateMetrics,
    #[serde(default)]
    pub significance: Vec<SignificancePair>,
}

impl IdentificationReport {
    /// One CSV row per task.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let io_err = |e: csv::Error| Error::invalid(format!("csv export failed: {e}"));
        writer
            .write_record(["target_user", "accuracy", "far", "frr", "calibrated_gap"])
            .map_err(io_err)?;
        for task in &self.per_task {
            writer
                .write_record([
                    task.target_user.clone(),
                    task.accuracy.to_string(),
                    task.far.to_string(),
                    task.frr.to_string(),
                    task.calibrated_gap.to_string(),
                ])
                .map_err(io_err)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::invalid(format!("csv export failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv export failed: {e}")))
    }
}

fn feature_rows(
    features: &BTreeMap<usize, Vec<f64>>,
    indices: &[usize],
    label: i8,
) -> Vec<(Vec<f64>, i8)> {
    indices
        .iter()
        .map(|i| (features[i].clone(), label))
        .collect()
}

fn evaluate_task(
    task: &FewShotTask,
    features: &BTreeMap<usize, Vec<f64>>,
    kernel: TaskKernel,
    c: f64,
) -> Result<TaskResult> {
    let mut train = feature_rows(features, &task.train_pos, 1);
    train.extend(feature_rows(features, &task.train_neg, -1));
    let kernel_spec = match kernel {
        TaskKernel::Linear => KernelSpec::Linear,
        TaskKernel::Rbf(gamma) => KernelSpec::Rbf { gamma },
        TaskKernel::RbfAuto => {
            let matrix: Vec<Vec<f64>> = train.iter().map(|(x, _)| x.clone()).collect();
            let standardization = Standardization::fit(&matrix)?;
            let standardized: Vec<Vec<f64>> = matrix
                .iter()
                .map(|x| standardization.apply(x))
                .collect::<Result<_>>()?;
            KernelSpec::Rbf {
                gamma: default_rbf_gamma(&standardized)?,
            }
        }
    };
    let uncalibrated = train_svm(&train, &kernel_spec, c, true)?;
    let (model, calibration) = calibrate_bias(&uncalibrated, &train)?;
    let mut confusion = ConfusionMatrix::default();
    let mut correctness = Vec::with_capacity(task.test_pos.len() + task.test_neg.len());
    for &i in &task.test_pos {
        let accepted = model.predict(&features[&i])? == 1;
        if accepted {
            confusion.true_positives += 1;
        } else {
            confusion.false_negatives += 1;
        }
        correctness.push(accepted);
    }
    for &i in &task.test_neg {
        let rejected = model.predict(&features[&i])? == -1;
        if rejected {
            confusion.true_negatives += 1;
        } else {
            confusion.false_positives += 1;
        }
        correctness.push(rejected);
    }
    let (accuracy, far, frr) = confusion_metrics(&confusion)?;
    let gamma = match kernel_spec {
        KernelSpec::Rbf { gamma } => Some(gamma),
        KernelSpec::Linear => None,
    };
    Ok(TaskResult {
        target_user: task.target_user.clone(),
        accuracy,
        far,
        frr,
        calibrated_gap: calibration.gap,
        confusion,
        correctness,
        gamma,
        converged: model.converged,
    })
}

fn compute_features(
    sessions: &[TapSession],
    indices: &[usize],
    provider: &dyn FeatureProvider,
    workers: usize,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut features = BTreeMap::new();
    if workers <= 1 || indices.len() <= 1 {
        for &i in indices {
            features.insert(i, provider.features(&sessions[i])?);
        }
        return Ok(features);
    }
    let worker_count = workers.min(indices.len());
    let chunks: Vec<Result<Vec<(usize, Vec<f64>)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..worker_count)
            .map(|w| {
                scope.spawn(move || {
                    indices
                        .iter()
                        .skip(w)
                        .step_by(worker_count)
                        .map(|&i| Ok((i, provider.features(&sessions[i])?)))
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::invalid("feature worker panicked")))
            })
            .collect()
    });
    for chunk in chunks {
        features.extend(chunk?);
    }
    Ok(features)
}

/// Runs every task against one feature provider: train the classifier,
/// calibrate its bias on the training samples, evaluate the test samples.
/// More than one worker spreads tasks over threads; results are merged in
/// task order either way, so reports are identical for any worker count.
pub fn run_identification(
    sessions: &[TapSession],
    tasks: &[FewShotTask],
    provider: &dyn FeatureProvider,
    kernel: TaskKernel,
    c: f64,
    workers: usize,
) -> Result<IdentificationReport> {
    if tasks.is_empty() {
        return Err(Error::invalid("no tasks to run"));
    }
    if workers == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    let mut needed = BTreeSet::new();
    for task in tasks {
        for &i in task
            .train_pos
            .iter()
            .chain(&task.train_neg)
            .chain(&task.test_pos)
            .chain(&task.test_neg)
        {
            if i >= sessions.len() {
                return Err(Error::invalid(format!(
                    "sample index {i} is out of range for {} sessions",
                    sessions.len()
                )));
            }
            needed.insert(i);
        }
    }
    let indices: Vec<usize> = needed.into_iter().collect();
    let features = compute_features(sessions, &indices, provider, workers)?;
    let per_task: Vec<TaskResult> = if workers == 1 || tasks.len() == 1 {
        tasks
            .iter()
            .map(|t| evaluate_task(t, &features, kernel, c))
            .collect::<Result<_>>()?
    } else {
        let worker_count = workers.min(tasks.len());
        let features = &features;
        let chunks: Vec<Result<Vec<(usize, TaskResult)>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..worker_count)
                .map(|w| {
                    scope.spawn(move || {
                        tasks
                            .iter()
                            .enumerate()
                            .skip(w)
                            .step_by(worker_count)
                            .map(|(i, t)| Ok((i, evaluate_task(t, features, kernel, c)?)))
                            .collect()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::invalid("task worker panicked")))
                })
                .collect()
        });
        let mut merged: Vec<Option<TaskResult>> = vec![None; tasks.len()];
        for chunk in chunks {
            for (i, result) in chunk? {
                merged[i] = Some(result);
            }
        }
        merged
            .into_iter()
            .map(|slot| slot.expect("every task index visited"))
            .collect()
    };
    let count = per_task.len() as f64;
    let aggregate = AggregateMetrics {
        accuracy: per_task.iter().map(|t| t.accuracy).sum::<f64>() / count,
        far: per_task.iter().map(|t| t.far).sum::<f64>() / count,
        frr: per_task.iter().map(|t| t.frr).sum::<f64>() / count,
    };
    Ok(IdentificationReport {
        provider: provider.name().to_string(),
        kernel: kernel.label(),
        c,
        per_task,
        aggregate,
        significance: Vec::new(),
    })
}

/// McNemar between two providers evaluated on the same tasks, pooling the
/// per-sample correctness vectors across tasks.
pub fn compare_reports(
    a: &IdentificationReport,
    b: &IdentificationReport,
    alpha: f64,
) -> Result<SignificancePair> {
    if a.per_task.len() != b.per_task.len() {
        return Err(Error::invalid(format!(
            "reports cover {} vs {} tasks",
            a.per_task.len(),
            b.per_task.len()
        )));
    }
    let mut correct_a = Vec::new();
    let mut correct_b = Vec::new();
    for (ta, tb) in a.per_task.iter().zip(&b.per_task) {
        if ta.target_user != tb.target_user {
            return Err(Error::invalid(format!(
                "task order differs: {} vs {}",
                ta.target_user, tb.target_user
            )));
        }
        if ta.correctness.len() != tb.correctness.len() {
            return Err(Error::invalid(format!(
                "task {} evaluated {} vs {} samples",
                ta.target_user,
                ta.correctness.len(),
                tb.correctness.len()
            )));
        }
        correct_a.extend_from_slice(&ta.correctness);
        correct_b.extend_from_slice(&tb.correctness);
    }
    Ok(SignificancePair {
        provider_a: a.provider.clone(),
        provider_b: b.provider.clone(),
        outcome: mcnemar_test(&correct_a, &correct_b, alpha)?,
    })
}
