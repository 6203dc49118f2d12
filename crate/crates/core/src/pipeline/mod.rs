//! Two-stream recognition pipeline: per-cell appearance and motion features,
//! compact bilinear descriptors, linear classifiers trained on sampled clips,
//! and the multi-crop evaluation protocol used by the frame-rate robustness
//! experiment.

pub mod classifier;
pub mod dataset;
pub mod descriptor;
pub mod experiment;
pub mod features;
pub mod protocol;

pub use classifier::{fit_softmax, train_classifier, ClassifierModel, SoftmaxParams, TrainConfig, TrainingOutcome, TwoStreamModel};
pub use dataset::{load_dataset, Video};
pub use descriptor::{make_descriptor, Sketchers, Stream};
pub use experiment::{
    robustness_experiment, split_train_test, stride_sweep, sweep_trends, table_trends, ExperimentConfig,
    ExperimentReport, Regime, ReportRow, TrendCheck,
};
pub use features::{extract_features, FeatureConfig, StreamFeatures};
pub use protocol::{
    argmax, late_fuse, predict_video, score_descriptors, tencrop, tencrop_windows, video_descriptors, CropWindow,
    EvalConfig, VideoScores,
};
