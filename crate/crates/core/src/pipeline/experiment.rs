//! Frame-rate robustness experiment: train under several clip-sampling
//! regimes, test under several frame-rate perturbations, over several seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::bilinear::Descriptor;
use crate::error::{Error, Result};
use crate::rng;
use crate::sampler::ClipStrategy;
use crate::synth::Perturbation;

use super::classifier::{train_classifier, SoftmaxParams, TrainConfig};
use super::dataset::Video;
use super::descriptor::Sketchers;
use super::features::FeatureConfig;
use super::protocol::{all_video_descriptors, argmax, score_descriptors, EvalConfig};

/// A named training-clip sampling strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regime {
    pub name: String,
    pub strategy: ClipStrategy,
}

impl Regime {
    /// Consecutive frames from a random start.
    pub fn without_rts() -> Self {
        Self {
            name: "without_rts".into(),
            strategy: ClipStrategy::FixedStride(1),
        }
    }

    pub fn with_rts(max_stride: usize) -> Self {
        Self {
            name: "with_rts".into(),
            strategy: ClipStrategy::RandomSkip(max_stride),
        }
    }

    /// Random skipping labelled by its maximum stride, for sweeps.
    pub fn rts(max_stride: usize) -> Self {
        Self {
            name: format!("rts({max_stride})"),
            strategy: ClipStrategy::RandomSkip(max_stride),
        }
    }
}

/// Everything the experiment needs besides the videos.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub regimes: Vec<Regime>,
    pub perturbations: Vec<Perturbation>,
    pub seeds: Vec<u64>,
    pub classes: usize,
    pub clip_len: usize,
    pub segments: usize,
    /// Training crop size (random position and flip).
    pub train_crop: Option<(usize, usize)>,
    pub softmax: SoftmaxParams,
    pub eval: EvalConfig,
    pub features: FeatureConfig,
    pub sketch_dim: usize,
    /// Late-fusion weights `(spatial, temporal)`.
    pub fusion: (f64, f64),
    /// Per-class share of videos held out for testing.
    pub test_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            regimes: vec![Regime::without_rts(), Regime::with_rts(5)],
            perturbations: vec![
                Perturbation::None,
                Perturbation::Fixed(1),
                Perturbation::Fixed(3),
                Perturbation::Fixed(5),
                Perturbation::Random(5),
            ],
            seeds: vec![0, 1, 2],
            classes: 4,
            clip_len: 11,
            // fixed(5) leaves 20 of 120 frames, too few for three 11-frame
            // segments
            segments: 1,
            train_crop: Some((40, 40)),
            softmax: SoftmaxParams::default(),
            eval: EvalConfig {
                segments: 1,
                ..EvalConfig::default()
            },
            features: FeatureConfig::default(),
            sketch_dim: 512,
            fusion: (1.0, 1.0),
            test_fraction: 0.3,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() || self.perturbations.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument("regimes, perturbations and seeds must be nonempty".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument("test fraction must lie in (0, 1)".into()));
        }
        if self.eval.clip_len != self.clip_len || self.eval.segments != self.segments {
            return Err(Error::InvalidArgument("training and test clips must share length and segments".into()));
        }
        self.features.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub regime: String,
    pub perturbation: String,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub seeds: Vec<u64>,
    /// Wall-clock time; never written to the report files.
    pub runtime: Duration,
}

impl ExperimentReport {
    /// One row per (regime, perturbation, seed).
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("regime\tperturbation\tseed\taccuracy\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}\t{:.6}", r.regime, r.perturbation, r.seed, r.accuracy);
        }
        s
    }

    /// Mean accuracy over seeds.
    pub fn mean_accuracy(&self, regime: &str, perturbation: &str) -> Option<f64> {
        let acc: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.regime == regime && r.perturbation == perturbation)
            .map(|r| r.accuracy)
            .collect();
        (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
    }

    fn ordered_labels(&self) -> (Vec<String>, Vec<String>) {
        let mut regimes: Vec<String> = Vec::new();
        let mut perts: Vec<String> = Vec::new();
        for r in &self.rows {
            if !regimes.contains(&r.regime) {
                regimes.push(r.regime.clone());
            }
            if !perts.contains(&r.perturbation) {
                perts.push(r.perturbation.clone());
            }
        }
        (regimes, perts)
    }

    /// Seed-averaged accuracy: regimes as rows, perturbations as columns.
    pub fn grid_tsv(&self) -> String {
        let (regimes, perts) = self.ordered_labels();
        let mut s = String::from("regime");
        for p in &perts {
            s.push('\t');
            s.push_str(p);
        }
        s.push('\n');
        for r in &regimes {
            s.push_str(r);
            for p in &perts {
                let _ = write!(s, "\t{:.6}", self.mean_accuracy(r, p).unwrap_or(f64::NAN));
            }
            s.push('\n');
        }
        s
    }

    /// Seed-averaged accuracy of a max-stride sweep, one line per stride.
    pub fn sweep_tsv(&self) -> String {
        let mut s = String::from("max_stride\taccuracy\n");
        let (regimes, perts) = self.ordered_labels();
        for r in &regimes {
            let stride = r.trim_start_matches("rts(").trim_end_matches(')');
            let _ = writeln!(s, "{stride}\t{:.6}", self.mean_accuracy(r, &perts[0]).unwrap_or(f64::NAN));
        }
        s
    }
}

/// Shuffles each class with its own stream and holds out
/// `round(n * test_fraction)` videos of it (at least one, and at least one
/// left for training). Returns `(train, test)` index lists in input order.
pub fn split_train_test(videos: &[Video], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, v) in videos.iter().enumerate() {
        by_class.entry(v.class_id()).or_default().push(i);
    }
    let mut test = Vec::new();
    for (class, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(Error::InvalidArgument(format!("class {class} needs at least two videos")));
        }
        idx.shuffle(&mut rng::stream(seed, &[0x5b17, class as u64]));
        let n = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n]);
    }
    test.sort_unstable();
    let train = (0..videos.len()).filter(|i| test.binary_search(i).is_err()).collect();
    Ok((train, test))
}

fn perturbation_key(p: &Perturbation) -> u64 {
    match *p {
        Perturbation::None => 0,
        Perturbation::Fixed(k) => (1 << 32) | k as u64,
        Perturbation::EveryKth(k) => (2 << 32) | k as u64,
        Perturbation::Random(k) => (3 << 32) | k as u64,
    }
}

/// Runs every regime under every perturbation for every seed.
///
/// Each seed has its own split and sketch tables; test descriptors depend only
/// on the seed, the perturbation and the video, so they are shared by all
/// regimes.
pub fn robustness_experiment(videos: &[Video], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let (train_idx, test_idx) = split_train_test(videos, cfg.test_fraction, seed)?;
        let train: Vec<Video> = train_idx.iter().map(|&i| videos[i].clone()).collect();
        let sketchers = Sketchers::new(&cfg.features, cfg.sketch_dim, rng::derive(seed, &[0x5ce7]))?;

        let mut test_sets: Vec<Vec<Vec<(Descriptor, Descriptor)>>> = Vec::with_capacity(cfg.perturbations.len());
        for p in &cfg.perturbations {
            let perturbed = test_idx
                .par_iter()
                .map(|&i| {
                    let mut r = rng::stream(seed, &[0x9e27, perturbation_key(p), i as u64]);
                    videos[i].perturbed(*p, &mut r)
                })
                .collect::<Result<Vec<_>>>()?;
            test_sets.push(all_video_descriptors(&perturbed, &cfg.eval, &cfg.features, &sketchers)?);
        }

        for (ri, regime) in cfg.regimes.iter().enumerate() {
            let tc = TrainConfig {
                strategy: regime.strategy,
                clip_len: cfg.clip_len,
                segments: cfg.segments,
                crop: cfg.train_crop,
                classes: cfg.classes,
                softmax: cfg.softmax.clone(),
                seed: rng::derive(seed, &[0x7a1, ri as u64]),
            };
            let model = train_classifier(&train, &tc, &cfg.features, &sketchers)?.model;
            for (p, descs) in cfg.perturbations.iter().zip(&test_sets) {
                let mut correct = 0usize;
                for (d, &i) in descs.iter().zip(&test_idx) {
                    let fused = score_descriptors(&model, d)?.fused(cfg.fusion)?;
                    correct += usize::from(argmax(&fused) == videos[i].class_id());
                }
                rows.push(ReportRow {
                    regime: regime.name.clone(),
                    perturbation: p.label(),
                    seed,
                    accuracy: correct as f64 / test_idx.len() as f64,
                });
            }
        }
    }
    Ok(ExperimentReport {
        rows,
        seeds: cfg.seeds.clone(),
        runtime: started.elapsed(),
    })
}

/// Trains random skipping with each maximum stride and tests under one
/// perturbation.
pub fn stride_sweep(
    videos: &[Video],
    strides: &[usize],
    perturbation: Perturbation,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let sweep = ExperimentConfig {
        regimes: strides.iter().map(|&m| Regime::rts(m)).collect(),
        perturbations: vec![perturbation],
        ..cfg.clone()
    };
    robustness_experiment(videos, &sweep)
}

/// Outcome of one ordering check on seed-averaged accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn fmt_series(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" -> ")
}

/// Random skipping beats consecutive training by at least `margin` under
/// random frame-rate changes, and consecutive training degrades
/// monotonically as the fixed skip grows. The random column is the report's
/// first `random(k)` perturbation; the fixed series is `none` followed by the
/// fixed-skip columns in report order.
pub fn table_trends(report: &ExperimentReport, margin: f64) -> Result<Vec<TrendCheck>> {
    let get = |regime: &str, label: &str| {
        report
            .mean_accuracy(regime, label)
            .ok_or_else(|| Error::InvalidArgument(format!("report lacks {regime} / {label}")))
    };
    let (_, labels) = report.ordered_labels();
    let random = labels
        .iter()
        .find(|l| l.starts_with("random("))
        .ok_or_else(|| Error::InvalidArgument("report has no random perturbation".into()))?;
    let series: Vec<&String> = labels
        .iter()
        .filter(|l| *l == "none" || l.starts_with("fixed(") || l.starts_with("every("))
        .collect();
    if series.len() < 2 || series[0] != "none" {
        return Err(Error::InvalidArgument("report needs none followed by fixed perturbations".into()));
    }
    let with = get("with_rts", random)?;
    let without = get("without_rts", random)?;
    let fixed = series.iter().map(|l| get("without_rts", l)).collect::<Result<Vec<_>>>()?;
    let names = series.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(", ");
    Ok(vec![
        TrendCheck {
            name: "rts_beats_consecutive_under_random".into(),
            passed: with - without >= margin,
            detail: format!("with_rts {with:.4} vs without_rts {without:.4} under {random} (margin {margin})"),
        },
        TrendCheck {
            name: "consecutive_degrades_with_fixed_skip".into(),
            passed: fixed.windows(2).all(|w| w[1] <= w[0]),
            detail: format!("{names}: {}", fmt_series(&fixed)),
        },
    ])
}

/// Accuracy does not drop as the maximum stride grows.
pub fn sweep_trends(report: &ExperimentReport, strides: &[usize]) -> Result<TrendCheck> {
    let pert = report
        .rows
        .first()
        .map(|r| r.perturbation.clone())
        .ok_or_else(|| Error::InvalidArgument("empty sweep report".into()))?;
    let acc = strides
        .iter()
        .map(|m| {
            report
                .mean_accuracy(&format!("rts({m})"), &pert)
                .ok_or_else(|| Error::InvalidArgument(format!("sweep lacks stride {m}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrendCheck {
        name: "accuracy_nondecreasing_in_max_stride".into(),
        passed: acc.windows(2).all(|w| w[1] >= w[0]),
        detail: format!("strides {strides:?} under {pert}: {}", fmt_series(&acc)),
    })
}
