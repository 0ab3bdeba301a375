//! Smartphone-user identification from the motion of a single screen tap.
//!
//! The pipeline: six sensor channels recorded around one tap are resampled,
//! normalized and stacked into a 25x150 gray-scale image; a small CNN
//! pre-trained for multi-class user classification turns each image into an
//! embedding; a per-user binary SVM trained on 20 positive taps performs
//! few-shot identification, calibrated so that false-acceptance and
//! false-rejection rates match, and evaluated with McNemar significance
//! tests against a handcrafted-feature baseline.
//!
//! Modules follow the pipeline stages:
//!
//! * [`signal`] — resampling and normalization of raw channels
//! * [`encoding`] — the triplet-covering row sequence and image assembly
//! * [`features`] — the handcrafted statistical baseline features
//! * [`neuralnet`] — tensors, layers, Adam, training, embedding extraction
//! * [`classify`] — the binary SVM, kernels and bias calibration
//! * [`protocol`] — user splits, few-shot tasks, metrics, McNemar tests
//! * [`dataio`] — session files, the synthetic generator, artifact formats

pub mod classify;
pub mod dataio;
pub mod encoding;
pub mod error;
pub mod features;
pub mod neuralnet;
pub mod protocol;
pub mod signal;

pub use error::{Error, Result};
