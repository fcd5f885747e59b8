//! EDA emotion pipeline: complex Morlet scalograms, wavelet features, SMO SVM
//! and KNN classifiers, and a stratified cross-validation harness.

use thiserror::Error;

mod cwt;
mod eda;
mod eval;
mod features;
mod knn;
mod model;
mod svm;

pub use cwt::{cwt, log_scales, Scalogram};
pub use eda::{dataset_from_recordings, 
    load_annotations, load_recording, load_recording_dir, segment_conversations, synth_dataset, synth_eda,
    write_recording, Annotation, ClassParams, EdaRecording, Segment, SubKind, SubSegment, EDA_SAMPLE_RATE_HZ,
};
pub use eval::{auc, evaluate, KernelKind, pairwise_report, permutation_baseline, stratified_folds, ClassifierSpec, Metrics, ReportRow};
pub use features::{extract_features, FeatureConfig, FEATURE_LEN};
pub use knn::knn_classify;
pub use model::{Dataset, Normalizer, Sample, TrainedModel, MODEL_MAGIC};
pub use svm::{kkt_violation, svm_train_binary, BinarySvm, Kernel, SmoOptions, SmoStats};

#[derive(Debug, Error)]
pub enum AffectError {
    #[error("signal has {0} samples; at least 64 are needed")]
    SignalTooShort(usize),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("missing or inconsistent annotations: {0}")]
    MissingAnnotations(String),
    #[error("training data has fewer than two classes")]
    DegenerateData,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("class {0:?} has {1} members; {2} folds need at least that many")]
    InsufficientClassMembers(String, usize, usize),
    #[error("model format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
