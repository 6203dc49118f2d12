//! Multinomial logistic regression on clip descriptors, trained on clips
//! resampled every epoch.

use rand::Rng;
use rayon::prelude::*;

use crate::bilinear::Descriptor;
use crate::error::{Error, Result};
use crate::rng;
use crate::sampler::{sample_segment_clips_with, ClipStrategy};

use super::dataset::Video;
use super::descriptor::{make_descriptor, Sketchers, Stream};
use super::features::{extract_features, FeatureConfig, StreamFeatures};
use super::protocol::CropWindow;

/// How a model was trained.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    /// Clip sampler used for training, when trained on videos.
    pub strategy: Option<ClipStrategy>,
}

/// Linear softmax classifier: `logits = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    classes: usize,
    dim: usize,
    /// Row-major `classes x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    /// Per-dimension input standardization `(x - center) * scale`.
    center: Vec<f64>,
    scale: Vec<f64>,
    pub meta: TrainingMeta,
}

impl ClassifierModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            center: vec![0.0; dim],
            scale: vec![1.0; dim],
            meta: TrainingMeta::default(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn logits(&self, x: &Descriptor) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::SizeMismatch(format!(
                "descriptor has {} values, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self.logits_of(&self.standardize(x)))
    }

    fn standardize(&self, x: &Descriptor) -> Vec<f64> {
        x.values
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| (f64::from(*v) - c) * s)
            .collect()
    }

    fn logits_of(&self, z: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                self.bias[k] + row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, x: &Descriptor) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Full-batch gradient descent settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxParams {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight decay on `W` (not on the bias).
    pub l2: f64,
    /// Standardize every input dimension with the mean and standard
    /// deviation of the first epoch's batch.
    pub standardize: bool,
}

impl Default for SoftmaxParams {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 0.5,
            l2: 1e-4,
            standardize: true,
        }
    }
}

/// Trains from zero initialisation. `batch(epoch)` supplies the labelled
/// descriptors of that epoch; one gradient step is taken per epoch. Returns
/// the model and the mean cross-entropy of each epoch's batch before its
/// step.
pub fn fit_softmax<F>(classes: usize, dim: usize, params: &SoftmaxParams, mut batch: F) -> Result<(ClassifierModel, Vec<f64>)>
where
    F: FnMut(usize) -> Result<Vec<(Descriptor, usize)>>,
{
    if classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if !(params.learning_rate > 0.0) || params.l2 < 0.0 {
        return Err(Error::InvalidArgument("learning rate must be positive and l2 nonnegative".into()));
    }
    let mut model = ClassifierModel::zeros(classes, dim);
    let mut history = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        let data = batch(epoch)?;
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        if let Some((x, _)) = data.iter().find(|(x, _)| x.len() != dim) {
            return Err(Error::SizeMismatch(format!("descriptor has {} values, model expects {dim}", x.len())));
        }
        if let Some((_, y)) = data.iter().find(|(_, y)| *y >= classes) {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        if epoch == 0 && params.standardize {
            fit_standardization(&mut model, &data);
        }
        let inputs: Vec<Vec<f64>> = data.iter().map(|(x, _)| model.standardize(x)).collect();
        let n = data.len() as f64;
        let mut gw = vec![0.0; classes * dim];
        let mut gb = vec![0.0; classes];
        let mut loss = 0.0;
        for (z, (_, y)) in inputs.iter().zip(&data) {
            let mut r = softmax(&model.logits_of(z));
            loss -= r[*y].max(f64::MIN_POSITIVE).ln();
            r[*y] -= 1.0;
            for k in 0..classes {
                gb[k] += r[k];
                for (g, v) in gw[k * dim..(k + 1) * dim].iter_mut().zip(z) {
                    *g += r[k] * v;
                }
            }
        }
        history.push(loss / n);
        let lr = params.learning_rate;
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= lr * (g / n + params.l2 * *w);
        }
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= lr * g / n;
        }
    }
    Ok((model, history))
}

fn fit_standardization(model: &mut ClassifierModel, data: &[(Descriptor, usize)]) {
    let n = data.len() as f64;
    for j in 0..model.dim {
        let mean = data.iter().map(|(x, _)| f64::from(x.values[j])).sum::<f64>() / n;
        let var = data.iter().map(|(x, _)| (f64::from(x.values[j]) - mean).powi(2)).sum::<f64>() / n;
        model.center[j] = mean;
        model.scale[j] = if var > 1e-12 { 1.0 / var.sqrt() } else { 0.0 };
    }
}

/// Classifiers for both streams.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStreamModel {
    pub spatial: ClassifierModel,
    pub temporal: ClassifierModel,
}

impl TwoStreamModel {
    pub fn get(&self, stream: Stream) -> &ClassifierModel {
        match stream {
            Stream::Spatial => &self.spatial,
            Stream::Temporal => &self.temporal,
        }
    }
}

/// How training clips are drawn and described.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: ClipStrategy,
    pub clip_len: usize,
    pub segments: usize,
    /// Random crop size `(height, width)` with random horizontal flips; the
    /// full frame when `None`.
    pub crop: Option<(usize, usize)>,
    pub classes: usize,
    pub softmax: SoftmaxParams,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: TwoStreamModel,
    pub loss_spatial: Vec<f64>,
    pub loss_temporal: Vec<f64>,
}

/// Draws one training example per video: a clip per segment with the
/// configured strategy, under a shared random crop.
pub(crate) fn training_features(
    video: &Video,
    cfg: &TrainConfig,
    features: &FeatureConfig,
    epoch: usize,
    index: usize,
) -> Result<Vec<StreamFeatures>> {
    let mut r = rng::stream(cfg.seed, &[0x7a1a, epoch as u64, index as u64]);
    let clips = sample_segment_clips_with(video.len(), cfg.segments, cfg.clip_len, cfg.strategy, &mut r)?;
    let (h, w) = video.dims();
    let window = match cfg.crop {
        Some((ch, cw)) => {
            if ch > h || cw > w {
                return Err(Error::InvalidArgument(format!("crop {ch}x{cw} exceeds {h}x{w}")));
            }
            CropWindow {
                x: r.random_range(0..=w - cw),
                y: r.random_range(0..=h - ch),
                height: ch,
                width: cw,
                flip: r.random_bool(0.5),
            }
        }
        None => CropWindow::full(h, w),
    };
    clips
        .iter()
        .map(|idx| {
            let (frames, flows) = video.clip(idx)?;
            let (frames, flows) = window.apply(&frames, &flows)?;
            extract_features(&frames, &flows, features)
        })
        .collect()
}

/// Trains both streams on clips resampled from every video in each epoch.
pub fn train_classifier(
    videos: &[Video],
    cfg: &TrainConfig,
    features: &FeatureConfig,
    sketchers: &Sketchers,
) -> Result<TrainingOutcome> {
    if videos.is_empty() {
        return Err(Error::InvalidArgument("no training videos".into()));
    }
    if let Some(v) = videos.iter().find(|v| v.class_id() >= cfg.classes) {
        return Err(Error::InvalidArgument(format!("video {} has label {} of {}", v.id(), v.class_id(), cfg.classes)));
    }
    // both streams are fitted on the same clips
    let per_epoch = (0..cfg.softmax.epochs)
        .map(|epoch| {
            videos
                .par_iter()
                .enumerate()
                .map(|(i, v)| {
                    let segs = training_features(v, cfg, features, epoch, i)?;
                    Ok((
                        make_descriptor(&segs, Stream::Spatial, &sketchers.spatial)?,
                        make_descriptor(&segs, Stream::Temporal, &sketchers.temporal)?,
                        v.class_id(),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = sketchers.dim();
    let meta = TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.softmax.epochs,
        strategy: Some(cfg.strategy),
    };
    let (mut spatial, loss_spatial) = fit_softmax(cfg.classes, dim, &cfg.softmax, |e| {
        Ok(per_epoch[e].iter().map(|(s, _, y)| (s.clone(), *y)).collect())
    })?;
    let (mut temporal, loss_temporal) = fit_softmax(cfg.classes, dim, &cfg.softmax, |e| {
        Ok(per_epoch[e].iter().map(|(_, t, y)| (t.clone(), *y)).collect())
    })?;
    spatial.meta = meta.clone();
    temporal.meta = meta;
    Ok(TrainingOutcome {
        model: TwoStreamModel { spatial, temporal },
        loss_spatial,
        loss_temporal,
    })
}
