//! Binary soft-margin SVM: a sequential pairwise dual solver, linear and
//! RBF kernels, C grid search, and the FAR/FRR bias sweep used for few-shot
//! identification.
//!
//! The dual min ½αᵀQα − eᵀα (Q_ij = yᵢyⱼk(xᵢ,xⱼ), 0 ≤ α ≤ C, yᵀα = 0) is
//! solved by repeatedly picking the most violating pair and minimizing the
//! objective along the feasible segment they span, until the maximal KKT
//! violation falls below 1e-3.

use crate::error::{Error, Result};

/// Kernel family of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } if *gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Rbf { gamma } => {
                Err(Error::invalid(format!("rbf gamma {gamma} must be positive")))
            }
        }
    }
}

/// Kernel evaluation between two feature vectors.
pub fn kernel_value(kernel: &KernelSpec, a: &[f64], b: &[f64]) -> f64 {
    match kernel {
        KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        KernelSpec::Rbf { gamma } => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-gamma * d2).exp()
        }
    }
}

/// Per-feature affine transform fit on training data: z = (x - mean) / scale
/// with scale the population standard deviation (1 for constant features).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(matrix: &[Vec<f64>]) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::invalid("cannot fit standardization on no samples"));
        }
        let dim = matrix[0].len();
        if matrix.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("feature rows differ in length"));
        }
        let n = matrix.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in matrix {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut scale = vec![0.0; dim];
        for row in matrix {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scale {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Ok(Standardization { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "feature vector has {} dimensions, expected {}",
                x.len(),
                self.mean.len()
            )));
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Outcome of the bias sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub far: f64,
    pub frr: f64,
    pub gap: f64,
    pub accuracy: f64,
    pub within_one_percent: bool,
}

/// A trained binary classifier. Support vectors are stored in the
/// standardized feature space when standardization is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// αᵢ·yᵢ per support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    pub standardization: Option<Standardization>,
    /// False when the solver hit its iteration cap before reaching the KKT
    /// tolerance.
    pub converged: bool,
}

const KKT_EPS: f64 = 1e-3;
const MAX_PAIR_UPDATES: usize = 10_000;

struct DualSolution {
    alpha: Vec<f64>,
    bias: f64,
    converged: bool,
}

fn solve_dual(kmat: &[Vec<f64>], y: &[f64], c: f64, eps: f64, cap: usize) -> DualSolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut converged = false;
    let mut top = f64::NEG_INFINITY;
    let mut bottom = f64::INFINITY;
    for _ in 0..cap {
        top = f64::NEG_INFINITY;
        bottom = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for p in 0..n {
            let g = -y[p] * grad[p];
            let positive = y[p] > 0.0;
            if (positive && alpha[p] < c) || (!positive && alpha[p] > 0.0) {
                if g > top {
                    top = g;
                    i = p;
                }
            }
            if (positive && alpha[p] > 0.0) || (!positive && alpha[p] < c) {
                if g < bottom {
                    bottom = g;
                    j = p;
                }
            }
        }
        if top - bottom <= eps {
            converged = true;
            break;
        }
        let a = (kmat[i][i] + kmat[j][j] - 2.0 * kmat[i][j]).max(1e-12);
        let mut t = (top - bottom) / a;
        let room_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let room_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        t = t.min(room_i).min(room_j);
        alpha[i] += y[i] * t;
        alpha[j] -= y[j] * t;
        for (p, (g, &yp)) in grad.iter_mut().zip(y).enumerate() {
            *g += yp * (kmat[p][i] - kmat[p][j]) * t;
        }
        for p in [i, j] {
            if alpha[p] < 1e-12 {
                alpha[p] = 0.0;
            } else if alpha[p] > c - 1e-12 {
                alpha[p] = c;
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&p| alpha[p] > 0.0 && alpha[p] < c).collect();
    let bias = if free.is_empty() {
        (top + bottom) / 2.0
    } else {
        free.iter().map(|&p| -y[p] * grad[p]).sum::<f64>() / free.len() as f64
    };
    DualSolution {
        alpha,
        bias,
        converged,
    }
}

fn check_samples(samples: &[(Vec<f64>, i8)]) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let dim = samples[0].0.len();
    if dim == 0 {
        return Err(Error::invalid("feature vectors are empty"));
    }
    let mut has_pos = false;
    let mut has_neg = false;
    for (x, label) in samples {
        if x.len() != dim {
            return Err(Error::invalid("feature rows differ in length"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        match label {
            1 => has_pos = true,
            -1 => has_neg = true,
            other => return Err(Error::invalid(format!("label {other} must be +1 or -1"))),
        }
    }
    if !has_pos || !has_neg {
        return Err(Error::invalid("training set must contain both labels"));
    }
    Ok(dim)
}

/// Trains a soft-margin SVM on labeled vectors (labels ±1). When
/// `standardize` is set, a per-feature standardization is fit on the
/// training data and baked into the model.
pub fn train_svm(
    samples: &[(Vec<f64>, i8)],
    kernel: &KernelSpec,
    c: f64,
    standardize: bool,
) -> Result<SvmModel> {
    check_samples(samples)?;
    kernel.validate()?;
    if c <= 0.0 || !c.is_finite() {
        return Err(Error::invalid(format!("regularization c {c} must be positive")));
    }
    let standardization = if standardize {
        let matrix: Vec<Vec<f64>> = samples.iter().map(|(x, _)| x.clone()).collect();
        Some(Standardization::fit(&matrix)?)
    } else {
        None
    };
    let features: Vec<Vec<f64>> = match &standardization {
        Some(st) => samples
            .iter()
            .map(|(x, _)| st.apply(x))
            .collect::<Result<_>>()?,
        None => samples.iter().map(|(x, _)| x.clone()).collect(),
    };
    let y: Vec<f64> = samples.iter().map(|(_, l)| *l as f64).collect();
    let n = features.len();
    let mut kmat = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_value(kernel, &features[i], &features[j]);
            kmat[i][j] = v;
            kmat[j][i] = v;
        }
    }
    let solution = solve_dual(&kmat, &y, c, KKT_EPS, MAX_PAIR_UPDATES);
    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    for (p, &a) in solution.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(features[p].clone());
            dual_coefficients.push(a * y[p]);
        }
    }
    Ok(SvmModel {
        support_vectors,
        dual_coefficients,
        bias: solution.bias,
        kernel: kernel.clone(),
        c,
        standardization,
        converged: solution.converged,
    })
}

impl SvmModel {
    /// Pre-sign score Σ αᵢyᵢ k(xᵢ, x) + bias.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let standardized;
        let z: &[f64] = match &self.standardization {
            Some(st) => {
                standardized = st.apply(x)?;
                &standardized
            }
            None => {
                let dim = self.support_vectors.first().map_or(x.len(), Vec::len);
                if x.len() != dim {
                    return Err(Error::invalid(format!(
                        "feature vector has {} dimensions, expected {dim}",
                        x.len()
                    )));
                }
                x
            }
        };
        let mut score = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefficients) {
            score += coef * kernel_value(&self.kernel, sv, z);
        }
        Ok(score)
    }

    /// Sign of the decision value; an exact zero counts as +1.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.decision_value(x)? >= 0.0 { 1 } else { -1 })
    }

    /// Dual objective ½ΣΣ(αy)ᵢ(αy)ⱼKᵢⱼ − Σαᵢ at the returned solution.
    pub fn dual_objective(&self) -> f64 {
        let n = self.support_vectors.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += self.dual_coefficients[i]
                    * self.dual_coefficients[j]
                    * kernel_value(&self.kernel, &self.support_vectors[i], &self.support_vectors[j]);
            }
        }
        0.5 * quad - self.dual_coefficients.iter().map(|c| c.abs()).sum::<f64>()
    }
}

/// γ = 1 / (m · pooled population variance), with m the feature count.
pub fn default_rbf_gamma(matrix: &[Vec<f64>]) -> Result<f64> {
    if matrix.is_empty() || matrix[0].is_empty() {
        return Err(Error::invalid("gamma needs a non-empty training matrix"));
    }
    let m = matrix[0].len();
    if matrix.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("feature rows differ in length"));
    }
    let count = (matrix.len() * m) as f64;
    let mean: f64 = matrix.iter().flatten().sum::<f64>() / count;
    let var: f64 = matrix
        .iter()
        .flatten()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count;
    if var == 0.0 {
        return Err(Error::invalid("training matrix is constant, gamma undefined"));
    }
    Ok(1.0 / (m as f64 * var))
}

fn rates(scores: &[(f64, i8)], threshold: f64) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for &(score, label) in scores {
        let predicted_pos = score - threshold >= 0.0;
        match (predicted_pos, label) {
            (true, 1) => tp += 1,
            (true, -1) => fp += 1,
            (false, 1) => fn_ += 1,
            (false, -1) => tn += 1,
            _ => unreachable!("labels validated earlier"),
        }
    }
    let far = if fp + tn == 0 { 0.0 } else { fp as f64 / (fp + tn) as f64 };
    let frr = if fn_ + tp == 0 { 0.0 } else { fn_ as f64 / (fn_ + tp) as f64 };
    let acc = (tp + tn) as f64 / scores.len() as f64;
    (far, frr, acc)
}

/// Shifts the model bias so that |FAR − FRR| on the calibration set is
/// minimal (ties go to higher accuracy). Candidate thresholds are the
/// midpoints between consecutive sorted decision values plus one value
/// outside each extreme.
pub fn calibrate_bias(
    model: &SvmModel,
    calibration_samples: &[(Vec<f64>, i8)],
) -> Result<(SvmModel, CalibrationReport)> {
    let labels: Vec<i8> = calibration_samples.iter().map(|(_, l)| *l).collect();
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::invalid("calibration set must contain both labels"));
    }
    let mut scores = Vec::with_capacity(calibration_samples.len());
    for (x, label) in calibration_samples {
        if !matches!(label, 1 | -1) {
            return Err(Error::invalid(format!("label {label} must be +1 or -1")));
        }
        scores.push((model.decision_value(x)?, *label));
    }
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.0).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Tied scores would put their midpoint exactly on a sample; midpoints
    // between distinct values keep every candidate strictly off the data.
    sorted.dedup();
    let mut candidates = vec![sorted[0] - 1.0];
    for pair in sorted.windows(2) {
        candidates.push((pair[0] + pair[1]) / 2.0);
    }
    candidates.push(sorted[sorted.len() - 1] + 1.0);

    let mut best: Option<(CalibrationReport, Vec<f64>)> = None;
    for threshold in candidates {
        let (far, frr, accuracy) = rates(&scores, threshold);
        let gap = (far - frr).abs();
        let candidate = CalibrationReport {
            far,
            frr,
            gap,
            accuracy,
            within_one_percent: gap < 0.01,
        };
        // The rates are count ratios, so equal counts compare exactly.
        match &mut best {
            Some((cur, tied)) if gap == cur.gap && accuracy == cur.accuracy => {
                tied.push(threshold);
            }
            Some((cur, _)) if gap > cur.gap || (gap == cur.gap && accuracy < cur.accuracy) => {}
            _ => best = Some((candidate, vec![threshold])),
        }
    }
    let (report, tied) = best.expect("at least one candidate threshold");
    // Among equally good thresholds take the middle one: it keeps the
    // decision boundary away from the calibration scores on both sides.
    let threshold = tied[tied.len() / 2];
    let mut calibrated = model.clone();
    calibrated.bias -= threshold;
    Ok((calibrated, report))
}

/// The regularization grid of the reference setup.
pub const DEFAULT_C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// Best C found for deep embedding features (paired with a linear kernel).
pub const DEEP_FEATURES_C: f64 = 1.0;

/// Best C found for handcrafted features (paired with an RBF kernel at the
/// default gamma).
pub const HANDCRAFTED_FEATURES_C: f64 = 100.0;

/// Stratified k-fold cross-validated accuracy per C candidate. Returns the
/// winning C (ties to the smallest) and the per-C pooled accuracies.
pub fn grid_search_c(
    samples: &[(Vec<f64>, i8)],
    kernel: &KernelSpec,
    c_grid: &[f64],
    folds: usize,
    standardize: bool,
) -> Result<(f64, Vec<(f64, f64)>)> {
    check_samples(samples)?;
    if c_grid.is_empty() {
        return Err(Error::invalid("c grid is empty"));
    }
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let pos = samples.iter().filter(|(_, l)| *l == 1).count();
    let neg = samples.len() - pos;
    if pos < folds || neg < folds {
        return Err(Error::invalid(format!(
            "each class needs at least {folds} samples for {folds}-fold validation"
        )));
    }
    // Samples of each class are dealt round-robin to folds in input order.
    let mut fold_of = vec![0usize; samples.len()];
    let mut seen_pos = 0;
    let mut seen_neg = 0;
    for (i, (_, label)) in samples.iter().enumerate() {
        if *label == 1 {
            fold_of[i] = seen_pos % folds;
            seen_pos += 1;
        } else {
            fold_of[i] = seen_neg % folds;
            seen_neg += 1;
        }
    }
    let mut grid: Vec<f64> = c_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut results = Vec::with_capacity(grid.len());
    for &c in &grid {
        let mut correct = 0usize;
        for fold in 0..folds {
            let train: Vec<(Vec<f64>, i8)> = samples
                .iter()
                .zip(&fold_of)
                .filter(|(_, &f)| f != fold)
                .map(|(s, _)| s.clone())
                .collect();
            let model = train_svm(&train, kernel, c, standardize)?;
            for (sample, _) in samples.iter().zip(&fold_of).filter(|(_, &f)| f == fold) {
                if model.predict(&sample.0)? == sample.1 {
                    correct += 1;
                }
            }
        }
        results.push((c, correct as f64 / samples.len() as f64));
    }
    let mut best = results[0];
    for &(c, acc) in &results[1..] {
        if acc > best.1 {
            best = (c, acc);
        }
    }
    Ok((best.0, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point_set() -> Vec<(Vec<f64>, i8)> {
        vec![(vec![0.0, 0.0], -1), (vec![2.0, 2.0], 1)]
    }

    #[test]
    fn two_point_problem_matches_analytic_solution() {
        let model = train_svm(&two_point_set(), &KernelSpec::Linear, 1e6, false).unwrap();
        assert!(model.converged);
        assert_relative_eq!(model.decision_value(&[0.0, 0.0]).unwrap(), -1.0, epsilon = 1e-9);
        assert_relative_eq!(model.decision_value(&[2.0, 2.0]).unwrap(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(model.decision_value(&[1.0, 1.0]).unwrap(), 0.0, epsilon = 1e-9);
        assert_relative_eq!(model.bias, -1.0, epsilon = 1e-9);
        // w = Σ αᵢyᵢxᵢ = (0.5, 0.5)
        let w: Vec<f64> = (0..2)
            .map(|d| {
                model
                    .support_vectors
                    .iter()
                    .zip(&model.dual_coefficients)
                    .map(|(sv, c)| c * sv[d])
                    .sum()
            })
            .collect();
        assert_relative_eq!(w[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(w[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn duplicating_training_points_keeps_the_boundary() {
        let base = two_point_set();
        let mut doubled = base.clone();
        doubled.extend(base.clone());
        let m1 = train_svm(&base, &KernelSpec::Linear, 1e6, false).unwrap();
        let m2 = train_svm(&doubled, &KernelSpec::Linear, 1e6, false).unwrap();
        for x in [[0.0, 0.0], [2.0, 2.0], [0.7, 1.9]] {
            let d1 = m1.decision_value(&x).unwrap();
            let d2 = m2.decision_value(&x).unwrap();
            assert!((d1 - d2).abs() < 1e-6, "{d1} vs {d2}");
        }
    }

    #[test]
    fn xor_with_rbf_reaches_full_training_accuracy() {
        let samples = vec![
            (vec![0.0, 0.0], 1),
            (vec![1.0, 1.0], 1),
            (vec![0.0, 1.0], -1),
            (vec![1.0, 0.0], -1),
        ];
        let matrix: Vec<Vec<f64>> = samples.iter().map(|(x, _)| x.clone()).collect();
        let gamma = default_rbf_gamma(&matrix).unwrap();
        assert_relative_eq!(gamma, 2.0, epsilon = 1e-12);
        let model = train_svm(&samples, &KernelSpec::Rbf { gamma }, 100.0, false).unwrap();
        for (x, label) in &samples {
            assert_eq!(model.predict(x).unwrap(), *label);
        }
    }

    #[test]
    fn single_class_input_is_rejected() {
        let samples = vec![(vec![0.0], 1), (vec![1.0], 1)];
        assert!(train_svm(&samples, &KernelSpec::Linear, 1.0, false).is_err());
        assert!(train_svm(&[], &KernelSpec::Linear, 1.0, false).is_err());
        let bad_label = vec![(vec![0.0], 1), (vec![1.0], 0)];
        assert!(train_svm(&bad_label, &KernelSpec::Linear, 1.0, false).is_err());
    }

    #[test]
    fn decision_value_checks_dimensions() {
        let model = train_svm(&two_point_set(), &KernelSpec::Linear, 1.0, false).unwrap();
        assert!(model.decision_value(&[1.0]).is_err());
        assert!(model.decision_value(&[1.0, 2.0, 3.0]).is_err());
        let st = train_svm(&two_point_set(), &KernelSpec::Linear, 1.0, true).unwrap();
        assert!(st.decision_value(&[1.0]).is_err());
    }

    #[test]
    fn rbf_kernel_is_one_at_zero_distance() {
        let k = KernelSpec::Rbf { gamma: 0.37 };
        for x in [[0.0, 0.0], [1.5, -2.0], [100.0, 3.0]] {
            assert_eq!(kernel_value(&k, &x, &x), 1.0);
        }
    }

    fn blob_set(seed: u64, n_per_class: usize, gap: f64) -> Vec<(Vec<f64>, i8)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..2 * n_per_class {
            let label: i8 = if i % 2 == 0 { 1 } else { -1 };
            let center = label as f64 * gap;
            out.push((
                vec![
                    center + rng.gen_range(-1.0..1.0),
                    center + rng.gen_range(-1.0..1.0),
                ],
                label,
            ));
        }
        out
    }

    /// y·f at every training point, classified by the three KKT cases.
    fn kkt_violation(model: &SvmModel, samples: &[(Vec<f64>, i8)]) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, label) in samples {
            let z = match &model.standardization {
                Some(st) => st.apply(x).unwrap(),
                None => x.clone(),
            };
            let alpha = model
                .support_vectors
                .iter()
                .zip(&model.dual_coefficients)
                .find(|(sv, _)| sv[..] == z[..])
                .map_or(0.0, |(_, c)| c.abs());
            let yf = *label as f64 * model.decision_value(x).unwrap();
            let v = if alpha == 0.0 {
                (1.0 - yf).max(0.0)
            } else if alpha < model.c {
                (yf - 1.0).abs()
            } else {
                (yf - 1.0).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    #[test]
    fn kkt_conditions_hold_at_tolerance() {
        for (seed, c, kernel) in [
            (1u64, 1.0, KernelSpec::Linear),
            (2, 10.0, KernelSpec::Linear),
            (3, 0.1, KernelSpec::Rbf { gamma: 0.5 }),
            (4, 100.0, KernelSpec::Rbf { gamma: 1.0 }),
        ] {
            let samples = blob_set(seed, 15, 1.5);
            let model = train_svm(&samples, &kernel, c, false).unwrap();
            assert!(model.converged);
            let worst = kkt_violation(&model, &samples);
            assert!(worst <= 1e-3, "seed {seed}: worst KKT violation {worst}");
        }
    }

    #[test]
    fn dual_coefficients_respect_box_and_equality_constraints() {
        let samples = blob_set(9, 20, 0.8);
        let model = train_svm(&samples, &KernelSpec::Rbf { gamma: 0.7 }, 1.0, false).unwrap();
        assert!(!model.support_vectors.is_empty());
        for c in &model.dual_coefficients {
            assert!(c.abs() <= model.c + 1e-12);
            assert!(c.abs() > 0.0);
        }
        let sum: f64 = model.dual_coefficients.iter().sum();
        assert!(sum.abs() < 1e-6, "Σ αᵢyᵢ = {sum}");
    }

    /// Lower-triangular Cholesky; succeeds only for positive semidefinite
    /// matrices (after the diagonal shift applied by the caller).
    fn cholesky_ok(mut a: Vec<Vec<f64>>) -> bool {
        let n = a.len();
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= a[i][k] * a[j][k];
                }
                if i == j {
                    if s < 0.0 {
                        return false;
                    }
                    a[i][j] = s.sqrt();
                } else {
                    a[i][j] = if a[j][j].abs() < 1e-300 { 0.0 } else { s / a[j][j] };
                }
            }
        }
        true
    }

    #[test]
    fn rbf_kernel_matrix_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let points: Vec<Vec<f64>> = (0..10)
                .map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect();
            let k = KernelSpec::Rbf { gamma: 0.9 };
            let mut kmat = vec![vec![0.0; 10]; 10];
            for i in 0..10 {
                for j in 0..10 {
                    kmat[i][j] = kernel_value(&k, &points[i], &points[j]);
                }
                kmat[i][i] += 1e-8;
            }
            assert!(cholesky_ok(kmat), "kernel matrix has eigenvalue below -1e-8");
        }
    }

    #[test]
    fn gamma_formula_matches_direct_substitution() {
        let r = 2.0f64.sqrt();
        let matrix = vec![vec![0.0, r], vec![r, 0.0]];
        assert_relative_eq!(default_rbf_gamma(&matrix).unwrap(), 1.0, epsilon = 1e-12);

        let wide: Vec<Vec<f64>> = (0..2)
            .map(|row| (0..256).map(|i| if (i + row) % 2 == 0 { 1.0 } else { -1.0 }).collect())
            .collect();
        assert_relative_eq!(default_rbf_gamma(&wide).unwrap(), 1.0 / 256.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_scaling_law_and_degenerate_input() {
        let matrix = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let g1 = default_rbf_gamma(&matrix).unwrap();
        let doubled: Vec<Vec<f64>> = matrix
            .iter()
            .map(|r| r.iter().map(|v| v * 2.0).collect())
            .collect();
        let g2 = default_rbf_gamma(&doubled).unwrap();
        assert_relative_eq!(g1 / g2, 4.0, epsilon = 1e-12);
        assert!(default_rbf_gamma(&[vec![3.0, 3.0], vec![3.0, 3.0]]).is_err());
    }

    /// A linear model with hand-set weights, for calibration tests that
    /// need exact decision values.
    fn identity_model() -> SvmModel {
        SvmModel {
            support_vectors: vec![vec![1.0]],
            dual_coefficients: vec![1.0],
            bias: 0.0,
            kernel: KernelSpec::Linear,
            c: 1.0,
            standardization: None,
            converged: true,
        }
    }

    #[test]
    fn separable_scores_calibrate_to_zero_rates() {
        let model = identity_model();
        let samples: Vec<(Vec<f64>, i8)> = (0..10)
            .map(|i| {
                let label: i8 = if i < 5 { -1 } else { 1 };
                (vec![i as f64], label)
            })
            .collect();
        let (calibrated, report) = calibrate_bias(&model, &samples).unwrap();
        assert_eq!(report.far, 0.0);
        assert_eq!(report.frr, 0.0);
        assert_eq!(report.gap, 0.0);
        assert!(report.within_one_percent);
        assert_eq!(report.accuracy, 1.0);
        for (x, label) in &samples {
            assert_eq!(calibrated.predict(x).unwrap(), *label);
        }
    }

    #[test]
    fn interleaved_scores_match_exhaustive_sweep() {
        let model = identity_model();
        // Positives at even integers, negatives at odd: no threshold is
        // clean, so the best balanced error is found by brute force.
        let samples: Vec<(Vec<f64>, i8)> = (0..12)
            .map(|i| (vec![i as f64], if i % 2 == 0 { 1 } else { -1 }))
            .collect();
        let (_, report) = calibrate_bias(&model, &samples).unwrap();
        let mut oracle_gap = f64::INFINITY;
        let mut oracle_acc = 0.0;
        for t in (-1..=13).map(|t| t as f64 - 0.5) {
            let (mut tp, mut fp, mut fn_, mut tn) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for (x, label) in &samples {
                match (x[0] >= t, label) {
                    (true, 1) => tp += 1.0,
                    (true, -1) => fp += 1.0,
                    (false, 1) => fn_ += 1.0,
                    _ => tn += 1.0,
                }
            }
            let gap = (fp / (fp + tn) - fn_ / (fn_ + tp)).abs();
            let acc = (tp + tn) / 12.0;
            if gap < oracle_gap || (gap == oracle_gap && acc > oracle_acc) {
                oracle_gap = gap;
                oracle_acc = acc;
            }
        }
        assert_relative_eq!(report.gap, oracle_gap, epsilon = 1e-12);
        assert_relative_eq!(report.accuracy, oracle_acc, epsilon = 1e-12);
    }

    #[test]
    fn calibration_is_shift_invariant() {
        let model = identity_model();
        let samples: Vec<(Vec<f64>, i8)> = (0..14)
            .map(|i| (vec![i as f64 * 0.3], if i % 3 == 0 { -1 } else { 1 }))
            .collect();
        let (_, r1) = calibrate_bias(&model, &samples).unwrap();
        let shifted: Vec<(Vec<f64>, i8)> =
            samples.iter().map(|(x, l)| (vec![x[0] + 42.0], *l)).collect();
        let (_, r2) = calibrate_bias(&model, &shifted).unwrap();
        assert_eq!(r1.far, r2.far);
        assert_eq!(r1.frr, r2.frr);
        assert_eq!(r1.accuracy, r2.accuracy);
    }

    #[test]
    fn calibration_rejects_single_class() {
        let samples = vec![(vec![1.0], 1), (vec![2.0], 1)];
        assert!(calibrate_bias(&identity_model(), &samples).is_err());
    }

    #[test]
    fn default_grid_is_the_reference_grid() {
        assert_eq!(DEFAULT_C_GRID, [0.1, 1.0, 10.0, 100.0]);
    }

    #[test]
    fn grid_search_breaks_ties_toward_stronger_regularization() {
        let samples = blob_set(5, 10, 5.0);
        let (best, results) = grid_search_c(
            &samples,
            &KernelSpec::Linear,
            &DEFAULT_C_GRID,
            5,
            false,
        )
        .unwrap();
        // Far-apart blobs: every C separates perfectly, so the tie rule
        // returns the smallest.
        assert!(results.iter().all(|(_, acc)| *acc == 1.0), "{results:?}");
        assert_eq!(best, 0.1);
        let model = train_svm(&samples, &KernelSpec::Linear, best, false).unwrap();
        let errors = samples
            .iter()
            .filter(|(x, l)| model.predict(x).unwrap() != *l)
            .count();
        assert_eq!(errors, 0);
    }

    #[test]
    fn grid_search_needs_enough_samples_per_class() {
        let samples = blob_set(6, 3, 2.0);
        assert!(grid_search_c(&samples, &KernelSpec::Linear, &DEFAULT_C_GRID, 5, false).is_err());
        assert!(grid_search_c(&samples, &KernelSpec::Linear, &[], 2, false).is_err());
    }

    #[test]
    fn standardized_model_ignores_constant_feature_offsets() {
        let samples = blob_set(12, 12, 1.2);
        let model_a = train_svm(&samples, &KernelSpec::Rbf { gamma: 0.5 }, 1.0, true).unwrap();
        let shifted: Vec<(Vec<f64>, i8)> = samples
            .iter()
            .map(|(x, l)| (x.iter().map(|v| v + 100.0).collect(), *l))
            .collect();
        let model_b = train_svm(&shifted, &KernelSpec::Rbf { gamma: 0.5 }, 1.0, true).unwrap();
        for (x, _) in &samples {
            let da = model_a.decision_value(x).unwrap();
            let shifted_x: Vec<f64> = x.iter().map(|v| v + 100.0).collect();
            let db = model_b.decision_value(&shifted_x).unwrap();
            assert!((da - db).abs() < 1e-6, "{da} vs {db}");
            if da.abs() > 1e-5 {
                assert_eq!(model_a.predict(x).unwrap(), model_b.predict(&shifted_x).unwrap());
            }
        }
    }

    #[test]
    fn free_support_vectors_sit_on_the_margin() {
        let samples = blob_set(21, 15, 1.0);
        let model = train_svm(&samples, &KernelSpec::Rbf { gamma: 0.8 }, 10.0, false).unwrap();
        let mut checked = 0;
        for (sv, coef) in model.support_vectors.iter().zip(&model.dual_coefficients) {
            let alpha = coef.abs();
            if alpha > 1e-9 && alpha < model.c - 1e-9 {
                let yf = coef.signum() * model.decision_value(sv).unwrap();
                assert!((yf - 1.0).abs() <= 1e-3, "free SV margin {yf}");
                checked += 1;
            }
        }
        assert!(checked > 0, "no free support vectors in test instance");
    }
}
