//! Facial palsy triage from 68-point facial landmarks.
//!
//! The crate covers the whole classification pipeline: loading landmark
//! cohorts ([`dataset_io`]), geometric normalisation ([`preprocess`]), the
//! three feature views ([`features`]), four from-scratch classifiers
//! ([`classifiers`]) plus an SMO-trained kernel SVM ([`svm`]), leave-one-out
//! evaluation ([`evaluation`]) and the dataset-size scaling study with
//! learning-curve extrapolation ([`scaling_study`]).

pub mod classifiers;
pub mod dataset_io;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod preprocess;
pub mod scaling_study;
pub mod seed;
pub mod svm;

pub use classifiers::{ModelFamily, ModelSpec, TrainedModel};
pub use dataset_io::{Cohort, Diagnosis, FaceBox, LandmarkSource, RawSample};
pub use evaluation::{loocv, ConfusionMatrix, EvalResult};
pub use features::{FeatureMatrix, MetricCatalog, View};
pub use geometry::Point;
pub use preprocess::{run_pipeline, PipelineReport, ProcessedSample};

/// Crate version, embedded in emitted reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
