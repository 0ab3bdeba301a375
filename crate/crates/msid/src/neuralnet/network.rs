//! Network construction, the checkpoint container, and whole-network
//! forward/backward passes over the layer plan derived from a spec.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ops;
use super::tensor::Tensor;
use crate::encoding::SignalImage;
use crate::error::{Error, Result};

/// Input image height expected by every network.
pub const INPUT_ROWS: usize = 25;
/// Input image width expected by every network.
pub const INPUT_COLS: usize = 150;

/// Number of weighted layers: three fully connected layers plus 3, 6 or 9
/// convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthVariant {
    Six,
    Nine,
    Twelve,
}

impl DepthVariant {
    pub fn layer_count(self) -> usize {
        match self {
            DepthVariant::Six => 6,
            DepthVariant::Nine => 9,
            DepthVariant::Twelve => 12,
        }
    }

    pub fn from_layer_count(n: usize) -> Result<Self> {
        match n {
            6 => Ok(DepthVariant::Six),
            9 => Ok(DepthVariant::Nine),
            12 => Ok(DepthVariant::Twelve),
            _ => Err(Error::invalid(format!("depth variant {n} not one of 6, 9, 12"))),
        }
    }

    /// Conv filter counts in order; each pool sits after `replication`
    /// consecutive convs.
    fn filters(self) -> Vec<usize> {
        let replication = self.replication();
        [32, 64, 128]
            .iter()
            .flat_map(|&f| std::iter::repeat(f).take(replication))
            .collect()
    }

    fn replication(self) -> usize {
        match self {
            DepthVariant::Six => 1,
            DepthVariant::Nine => 2,
            DepthVariant::Twelve => 3,
        }
    }
}

/// Architecture description: depth, embedding width, class count and the
/// dropout rate applied to both hidden fully connected layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub depth_variant: DepthVariant,
    pub embedding_width: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl NetworkSpec {
    pub fn new(depth_variant: DepthVariant, embedding_width: usize, num_classes: usize) -> Self {
        NetworkSpec {
            depth_variant,
            embedding_width,
            num_classes,
            dropout_rate: 0.4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![128, 256, 512].contains(&self.embedding_width) {
            return Err(Error::invalid(format!(
                "embedding width {} not one of 128, 256, 512",
                self.embedding_width
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate {} must be in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Spatial size after the three pooling stages, starting from the fixed
    /// 25x150 input.
    pub fn flattened_size(&self) -> usize {
        let (mut h, mut w) = (INPUT_ROWS, INPUT_COLS);
        for _ in 0..3 {
            h /= 2;
            w /= 2;
        }
        h * w * 128
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Step {
    /// Convolution using parameter pair `0`.
    Conv(usize),
    Relu,
    Pool,
    Flatten,
    Dense(usize),
    Dropout,
}

/// Deterministic layer sequence for a spec. Parameter pair indices count
/// convs first, then the three fully connected layers.
pub(super) fn plan(spec: &NetworkSpec) -> Vec<Step> {
    let filters = spec.depth_variant.filters();
    let replication = spec.depth_variant.replication();
    let mut steps = Vec::new();
    for i in 0..filters.len() {
        steps.push(Step::Conv(i));
        steps.push(Step::Relu);
        if (i + 1) % replication == 0 {
            steps.push(Step::Pool);
        }
    }
    steps.push(Step::Flatten);
    let base = filters.len();
    steps.push(Step::Dense(base));
    steps.push(Step::Relu);
    steps.push(Step::Dropout);
    steps.push(Step::Dense(base + 1));
    steps.push(Step::Relu);
    steps.push(Step::Dropout);
    steps.push(Step::Dense(base + 2));
    steps
}

/// Index into `plan` of the activation used as the embedding: the rectified
/// output of the second hidden fully connected layer.
pub(super) fn embedding_step(steps: &[Step]) -> usize {
    let mut dense_seen = 0;
    for (i, s) in steps.iter().enumerate() {
        if matches!(s, Step::Dense(_)) {
            dense_seen += 1;
            if dense_seen == 2 {
                debug_assert_eq!(steps[i + 1], Step::Relu);
                return i + 1;
            }
        }
    }
    unreachable!("plan always contains three dense layers")
}

/// One named parameter array of a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub tensor: Tensor,
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// A network snapshot: spec, ordered named weights, and the training history
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub weights: Vec<NamedArray>,
    pub training_log: Vec<EpochRecord>,
}

/// Shapes of every parameter array for a spec, in checkpoint order.
pub fn parameter_shapes(spec: &NetworkSpec) -> Vec<(String, Vec<usize>)> {
    let filters = spec.depth_variant.filters();
    let mut shapes = Vec::new();
    let mut in_c = 1;
    for (i, &f) in filters.iter().enumerate() {
        shapes.push((format!("conv{}.weight", i + 1), vec![f, in_c, 3, 3]));
        shapes.push((format!("conv{}.bias", i + 1), vec![f]));
        in_c = f;
    }
    let e = spec.embedding_width;
    let fc_dims = [
        (e, spec.flattened_size()),
        (e, e),
        (spec.num_classes, e),
    ];
    for (i, &(out, input)) in fc_dims.iter().enumerate() {
        shapes.push((format!("fc{}.weight", i + 1), vec![out, input]));
        shapes.push((format!("fc{}.bias", i + 1), vec![out]));
    }
    shapes
}

/// Initializes a network: fan-in-scaled Gaussian weights (std
/// sqrt(2/fan_in), suited to rectifiers), zero biases, deterministic in the
/// seed.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<Checkpoint> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    for (name, shape) in parameter_shapes(spec) {
        let tensor = if name.ends_with(".bias") {
            Tensor::zeros(&shape)
        } else {
            let fan_in: usize = shape[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let data: Vec<f64> = (0..shape.iter().product::<usize>())
                .map(|_| normal.sample(&mut rng))
                .collect();
            Tensor::from_vec(&shape, data)?
        };
        weights.push(NamedArray { name, tensor });
    }
    Ok(Checkpoint {
        spec: spec.clone(),
        weights,
        training_log: Vec::new(),
    })
}

pub(super) enum Cache {
    Conv { x: Tensor },
    Relu { x: Tensor },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { input_shape: Vec<usize> },
    Dense { x: Tensor },
    Dropout { mask: Option<Tensor> },
}

/// Everything produced by a forward pass, including the per-layer caches
/// that `backward` consumes.
pub struct ForwardPass {
    pub logits: Tensor,
    pub probabilities: Tensor,
    /// Rectified output of the second hidden fully connected layer, [B, E].
    pub embedding: Tensor,
    pub(super) caches: Vec<Cache>,
}

/// Runs the network on a batch of shape [B,1,25,150] with pixels in [0,1].
/// In train mode, inverted dropout is applied to both hidden fully connected
/// layers using a stream seeded from `seed`; in inference mode dropout is
/// the identity.
pub fn forward(ckpt: &Checkpoint, batch: &Tensor, train_mode: bool, seed: u64) -> Result<ForwardPass> {
    let shape = batch.shape();
    if shape.len() != 4 || shape[1] != 1 || shape[2] != INPUT_ROWS || shape[3] != INPUT_COLS {
        return Err(Error::invalid(format!(
            "batch shape {shape:?} must be [B, 1, {INPUT_ROWS}, {INPUT_COLS}]"
        )));
    }
    if batch.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid("input pixels must be scaled to [0, 1]"));
    }
    let steps = plan(&ckpt.spec);
    let embed_at = embedding_step(&steps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut caches = Vec::with_capacity(steps.len());
    let mut act = batch.clone();
    let mut embedding = None;
    for (i, step) in steps.iter().enumerate() {
        act = match step {
            Step::Conv(p) => {
                let (w, b) = param_pair(ckpt, *p);
                let y = ops::conv2d_forward(&act, w, b)?;
                caches.push(Cache::Conv { x: act });
                y
            }
            Step::Relu => {
                let y = ops::relu_forward(&act);
                caches.push(Cache::Relu { x: act });
                y
            }
            Step::Pool => {
                let input_shape = act.shape().to_vec();
                let (y, argmax) = ops::maxpool2_forward(&act)?;
                caches.push(Cache::Pool { input_shape, argmax });
                y
            }
            Step::Flatten => {
                let input_shape = act.shape().to_vec();
                let bs = input_shape[0];
                let feat = act.len() / bs;
                let y = act.reshaped(&[bs, feat])?;
                caches.push(Cache::Flatten { input_shape });
                y
            }
            Step::Dense(p) => {
                let (w, b) = param_pair(ckpt, *p);
                let y = ops::dense_forward(&act, w, b)?;
                caches.push(Cache::Dense { x: act });
                y
            }
            Step::Dropout => {
                if train_mode {
                    let (y, mask) = ops::dropout_forward(&act, ckpt.spec.dropout_rate, &mut rng)?;
                    caches.push(Cache::Dropout { mask: Some(mask) });
                    y
                } else {
                    caches.push(Cache::Dropout { mask: None });
                    act
                }
            }
        };
        if i == embed_at {
            embedding = Some(act.clone());
        }
    }
    let probabilities = ops::softmax(&act)?;
    Ok(ForwardPass {
        logits: act,
        probabilities,
        embedding: embedding.expect("embedding step always reached"),
        caches,
    })
}

fn param_pair(ckpt: &Checkpoint, pair: usize) -> (&Tensor, &Tensor) {
    (&ckpt.weights[2 * pair].tensor, &ckpt.weights[2 * pair + 1].tensor)
}

/// Gradients of the mean cross-entropy loss for every weight array, aligned
/// with `ckpt.weights`, plus the scalar loss itself.
pub fn backward(ckpt: &Checkpoint, pass: &ForwardPass, labels: &[usize]) -> Result<(Vec<Tensor>, f64)> {
    let loss = ops::cross_entropy(&pass.probabilities, labels)?;
    let steps = plan(&ckpt.spec);
    let mut grads: Vec<Tensor> = ckpt
        .weights
        .iter()
        .map(|a| Tensor::zeros(a.tensor.shape()))
        .collect();
    let mut d = ops::softmax_cross_entropy_backward(&pass.probabilities, labels)?;
    for (step, cache) in steps.iter().zip(pass.caches.iter()).rev() {
        d = match (step, cache) {
            (Step::Conv(p), Cache::Conv { x }) => {
                let (w, b) = param_pair(ckpt, *p);
                let (dx, dw, db) = ops::conv2d_backward(x, w, b, &d)?;
                grads[2 * p] = dw;
                grads[2 * p + 1] = db;
                dx
            }
            (Step::Relu, Cache::Relu { x }) => ops::relu_backward(x, &d)?,
            (Step::Pool, Cache::Pool { input_shape, argmax }) => {
                ops::maxpool2_backward(input_shape, argmax, &d)?
            }
            (Step::Flatten, Cache::Flatten { input_shape }) => d.reshaped(input_shape)?,
            (Step::Dense(p), Cache::Dense { x }) => {
                let (w, _) = param_pair(ckpt, *p);
                let (dx, dw, db) = ops::dense_backward(x, w, &d)?;
                grads[2 * p] = dw;
                grads[2 * p + 1] = db;
                dx
            }
            (Step::Dropout, Cache::Dropout { mask }) => match mask {
                Some(m) => ops::dropout_backward(m, &d)?,
                None => d,
            },
            _ => return Err(Error::invalid("forward cache does not match network plan")),
        };
    }
    Ok((grads, loss))
}

/// One embedding vector with its session provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_user: String,
    pub source_tap: u32,
}

/// Converts images to a network input batch, scaling pixels to [0,1].
pub fn images_to_batch(images: &[&SignalImage]) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::invalid("cannot build an empty batch"));
    }
    let mut data = Vec::with_capacity(images.len() * INPUT_ROWS * INPUT_COLS);
    for img in images {
        if img.rows() != INPUT_ROWS || img.cols() != INPUT_COLS {
            return Err(Error::invalid(format!(
                "image is {}x{}, expected {INPUT_ROWS}x{INPUT_COLS}",
                img.rows(),
                img.cols()
            )));
        }
        data.extend(img.pixels().iter().map(|&p| p as f64 / 255.0));
    }
    Tensor::from_vec(&[images.len(), 1, INPUT_ROWS, INPUT_COLS], data)
}

/// Rectified second-hidden-layer activation of one image, inference mode.
pub fn extract_embedding(ckpt: &Checkpoint, image: &SignalImage) -> Result<EmbeddingVector> {
    let batch = images_to_batch(&[image])?;
    let pass = forward(ckpt, &batch, false, 0)?;
    Ok(EmbeddingVector {
        values: pass.embedding.data().to_vec(),
        source_user: image.source_user.clone(),
        source_tap: image.source_tap,
    })
}
