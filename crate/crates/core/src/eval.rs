//! Linear softmax baseline for sanity-checking generated datasets.
//!
//! Images are downsampled to 28×28×3 by 8×8 block averaging and scaled to
//! `[0, 1]`; a 7-class linear model is trained by full-batch gradient descent
//! on the categorical cross-entropy.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Emotion;
use crate::error::{Error, Result};
use crate::pipeline::{DatasetManifest, Split};
use crate::raster::{decode_png, IMAGE_SIZE};

/// Side length of the downsampled image.
pub const FEATURE_SIDE: usize = 28;
/// Length of a feature vector, `28 × 28 × 3`.
pub const FEATURE_LEN: usize = FEATURE_SIDE * FEATURE_SIDE * 3;
const BLOCK: usize = IMAGE_SIZE / FEATURE_SIDE;
const CLASSES: usize = Emotion::COUNT;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalExample {
    /// Interleaved `(row, col, channel)`, each in `[0, 1]`.
    pub features: Vec<f64>,
    pub label: Emotion,
}

impl EvalExample {
    pub fn new(features: Vec<f64>, label: Emotion) -> Result<Self> {
        if features.len() != FEATURE_LEN {
            return Err(Error::InvalidArgument(format!(
                "expected {FEATURE_LEN} features, got {}",
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        Ok(Self { features, label })
    }

    /// Builds an example from interleaved 224×224 RGB pixels.
    pub fn from_pixels(pixels: &[u8], label: Emotion) -> Result<Self> {
        if pixels.len() != IMAGE_SIZE * IMAGE_SIZE * 3 {
            return Err(Error::InvalidArgument(format!(
                "expected {} pixel bytes, got {}",
                IMAGE_SIZE * IMAGE_SIZE * 3,
                pixels.len()
            )));
        }
        let mut features = vec![0.0; FEATURE_LEN];
        for r in 0..IMAGE_SIZE {
            for c in 0..IMAGE_SIZE {
                let dst = 3 * ((r / BLOCK) * FEATURE_SIDE + c / BLOCK);
                let src = 3 * (r * IMAGE_SIZE + c);
                for ch in 0..3 {
                    features[dst + ch] += f64::from(pixels[src + ch]);
                }
            }
        }
        let scale = 1.0 / (255.0 * (BLOCK * BLOCK) as f64);
        features.iter_mut().for_each(|v| *v *= scale);
        Ok(Self { features, label })
    }
}

/// Loss `−ln softmax(logits)[label]` and its gradient `softmax − onehot`.
pub fn softmax_cross_entropy(logits: &[f64; CLASSES], label: usize) -> (f64, [f64; CLASSES]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs = logits.map(|l| (l - max).exp());
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    let loss = sum.ln() - (logits[label] - max);
    let mut grad = probs;
    grad[label] -= 1.0;
    (loss.max(0.0), grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Row-major `7 × 2352`.
    pub weights: Vec<f64>,
    pub biases: [f64; CLASSES],
}

impl LinearModel {
    pub fn logits(&self, features: &[f64]) -> [f64; CLASSES] {
        let mut out = self.biases;
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.weights[k * FEATURE_LEN..(k + 1) * FEATURE_LEN];
            *o += row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>();
        }
        out
    }

    /// Arg-max class; ties go to the lowest class index.
    pub fn predict(&self, features: &[f64]) -> Emotion {
        let logits = self.logits(features);
        let mut best = 0;
        for k in 1..CLASSES {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        Emotion::from_index(best).expect("class index in range")
    }

    /// Mean cross-entropy over `examples`.
    pub fn mean_loss(&self, examples: &[EvalExample]) -> f64 {
        let total: f64 = examples
            .iter()
            .map(|e| softmax_cross_entropy(&self.logits(&e.features), e.label.index()).0)
            .sum();
        total / examples.len().max(1) as f64
    }
}

fn check_examples(examples: &[EvalExample]) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no examples".into()));
    }
    if let Some(e) = examples.iter().find(|e| e.features.len() != FEATURE_LEN) {
        return Err(Error::InvalidArgument(format!(
            "expected {FEATURE_LEN} features, got {}",
            e.features.len()
        )));
    }
    Ok(())
}

/// Trains a linear model; returns it with the mean training loss measured at
/// the start of each epoch.
pub fn train_linear_with_history(
    examples: &[EvalExample],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<(LinearModel, Vec<f64>)> {
    check_examples(examples)?;
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate {learning_rate} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = LinearModel {
        weights: (0..CLASSES * FEATURE_LEN)
            .map(|_| rng.random_range(-1e-3..1e-3))
            .collect(),
        biases: [0.0; CLASSES],
    };
    let n = examples.len() as f64;
    let mut history = Vec::with_capacity(epochs);
    let mut grad_w = vec![0.0; CLASSES * FEATURE_LEN];
    for _ in 0..epochs {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = [0.0; CLASSES];
        let mut loss = 0.0;
        for e in examples {
            let (l, g) = softmax_cross_entropy(&model.logits(&e.features), e.label.index());
            loss += l;
            for k in 0..CLASSES {
                grad_b[k] += g[k];
                let row = &mut grad_w[k * FEATURE_LEN..(k + 1) * FEATURE_LEN];
                row.iter_mut()
                    .zip(&e.features)
                    .for_each(|(gw, x)| *gw += g[k] * x);
            }
        }
        history.push(loss / n);
        let step = learning_rate / n;
        model
            .weights
            .iter_mut()
            .zip(&grad_w)
            .for_each(|(w, g)| *w -= step * g);
        model
            .biases
            .iter_mut()
            .zip(&grad_b)
            .for_each(|(b, g)| *b -= step * g);
    }
    Ok((model, history))
}

pub fn train_linear(
    examples: &[EvalExample],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<LinearModel> {
    train_linear_with_history(examples, epochs, learning_rate, seed).map(|(m, _)| m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`, indexed by [`Emotion::index`].
    pub confusion: [[usize; CLASSES]; CLASSES],
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let total: usize = self.confusion.iter().flatten().sum();
        writeln!(f, "accuracy {:.4} ({total} examples)", self.accuracy)?;
        write!(f, "{:>10}", "true\\pred")?;
        for e in Emotion::ALL {
            write!(f, " {:>9}", e.name())?;
        }
        for (e, row) in Emotion::ALL.iter().zip(&self.confusion) {
            write!(f, "\n{:>10}", e.name())?;
            for v in row {
                write!(f, " {v:>9}")?;
            }
        }
        Ok(())
    }
}

pub fn evaluate(model: &LinearModel, examples: &[EvalExample]) -> Result<Evaluation> {
    check_examples(examples)?;
    let confusion = examples
        .par_iter()
        .map(|e| (e.label.index(), model.predict(&e.features).index()))
        .fold(
            || [[0usize; CLASSES]; CLASSES],
            |mut m, (t, p)| {
                m[t][p] += 1;
                m
            },
        )
        .reduce(
            || [[0usize; CLASSES]; CLASSES],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(&b) {
                    ra.iter_mut().zip(rb).for_each(|(x, y)| *x += y);
                }
                a
            },
        );
    let correct: usize = (0..CLASSES).map(|k| confusion[k][k]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / examples.len() as f64,
        confusion,
    })
}

/// Loads the images of one split of a manifest as examples, in manifest
/// order.
pub fn load_examples(manifest_path: impl AsRef<Path>, split: Split) -> Result<Vec<EvalExample>> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = crate::pipeline::manifest_dir(manifest_path);
    manifest
        .records
        .par_iter()
        .filter(|r| r.split == split)
        .map(|r| {
            let path = root.join(&r.path);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            EvalExample::from_pixels(&decode_png(&bytes)?, r.category.emotion())
        })
        .collect()
}
