//! Mini-batch training loop and inference.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::argmax_channels;
use super::loss::softmax_cross_entropy;
use super::model::Model;
use super::optim::{AdamParams, Optimizer, OptimizerKind};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::augment::{augment_dataset, AugmentPolicy};
use crate::image::{normalize_zscore, resize_bilinear, resize_nearest_labels, GrayImage, LabelMap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub adam: AdamParams,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Re-estimate batchnorm statistics of the returned snapshot on the
    /// training set with dropout disabled.
    pub recalibrate_bn: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: OptimizerKind::Adam.default_learning_rate(),
            adam: AdamParams::default(),
            epochs: 100,
            batch_size: 16,
            seed: 0,
            recalibrate_bn: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One training pair at network resolution: z-scored input plane and class
/// indices, both `size * size`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub size: usize,
    pub input: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Sample {
    /// Resizes (bilinear for the image, nearest for labels) and normalizes.
    pub fn prepare(img: &GrayImage, labels: &LabelMap, size: usize) -> Result<Self> {
        if img.dims() != labels.dims() {
            return Err(Error::DimensionMismatch {
                expected: img.dims(),
                actual: labels.dims(),
            });
        }
        let input = normalize_zscore(&resize_bilinear(img, size, size)?);
        let labels = resize_nearest_labels(labels, size, size)?.as_slice().to_vec();
        Ok(Self { size, input, labels })
    }
}

/// Augments `pairs` and prepares every result at `size x size`.
pub fn build_dataset(pairs: &[(GrayImage, LabelMap)], policy: &AugmentPolicy, size: usize, seed: u64) -> Result<Vec<Sample>> {
    augment_dataset(pairs, policy, seed)?
        .iter()
        .map(|(img, lab)| Sample::prepare(img, lab, size))
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Snapshot from the epoch with the lowest mean training loss.
    pub best: Model<f32>,
    pub best_epoch: Option<usize>,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

fn batch_tensors(data: &[Sample], idx: &[usize]) -> Result<(Tensor<f32>, Vec<u8>)> {
    let size = data[idx[0]].size;
    let mut x = Vec::with_capacity(idx.len() * size * size);
    let mut y = Vec::with_capacity(idx.len() * size * size);
    for &i in idx {
        let s = &data[i];
        if s.size != size {
            return Err(Error::ShapeMismatch(format!("sample size {} in a batch of {size}", s.size)));
        }
        x.extend_from_slice(&s.input);
        y.extend_from_slice(&s.labels);
    }
    Ok((Tensor::from_vec(&[idx.len(), 1, size, size], x)?, y))
}

pub fn train(model: Model<f32>, data: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, data, cfg, |_, _| {})
}

/// Like [`train`], calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn train_with(
    mut model: Model<f32>,
    data: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let size = model.config.input_size;
    if let Some(s) = data.iter().find(|s| s.size != size || s.input.len() != size * size || s.labels.len() != size * size) {
        return Err(Error::ShapeMismatch(format!("sample of size {} for a {size} model", s.size)));
    }
    let shapes: Vec<Vec<usize>> = model.params().iter().map(|t| t.shape().to_vec()).collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut opt = Optimizer::<f32>::new(cfg.optimizer, cfg.learning_rate, cfg.adam, &shape_refs);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD15E_A5E5_0F0F_F0F0);

    let mut best = model.clone();
    let mut best_epoch = None;
    let mut best_loss = f64::INFINITY;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let (x, y) = batch_tensors(data, idx)?;
            let (logits, cache) = model.forward_train(&x, &mut dropout_rng)?;
            let (loss, grad, _) = softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("loss"));
            }
            let grads = model.backward(&cache, &grad)?;
            let g = grads.params();
            opt.step(&mut model.params_mut(), &g)?;
            total += loss as f64 * idx.len() as f64;
        }
        if !model.is_finite() {
            return Err(Error::NonFinite("weights"));
        }
        let mean = total / data.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
        if mean < best_loss {
            best_loss = mean;
            best_epoch = Some(epoch);
            best = model.clone();
        }
    }
    if cfg.recalibrate_bn && best_epoch.is_some() {
        let ordered: Vec<usize> = (0..data.len()).collect();
        let batches = ordered
            .chunks(cfg.batch_size)
            .map(|idx| batch_tensors(data, idx).map(|b| b.0))
            .collect::<Result<Vec<_>>>()?;
        best.recalibrate_batchnorm(&batches)?;
        if !best.is_finite() {
            return Err(Error::NonFinite("batchnorm statistics"));
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

/// Segments one image: resize to the model resolution, normalize, evaluate,
/// take the per-pixel argmax and resize back (nearest).
pub fn predict(model: &Model<f32>, img: &GrayImage) -> Result<LabelMap> {
    let size = model.config.input_size;
    let input = normalize_zscore(&resize_bilinear(img, size, size)?);
    let logits = model.forward_eval(&Tensor::from_vec(&[1, 1, size, size], input)?)?;
    let classes = argmax_channels(&logits)?;
    let small = LabelMap::from_vec(size, size, classes)?;
    let (w, h) = img.dims();
    resize_nearest_labels(&small, w, h)
}

/// `epoch,loss` text, one line per epoch.
pub fn loss_history_text(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{i},{l:.8}\n"));
    }
    out
}
