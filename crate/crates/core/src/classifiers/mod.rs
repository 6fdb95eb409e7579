//! Gaussian naive Bayes, entropy decision tree, distance-weighted KNN and
//! random forest, plus the shared train/predict contract that also covers
//! the SVM.
//!
//! Every vote or score tie resolves in the fixed class order
//! peripheral < central < healthy.

mod forest;
mod gnb;
mod knn;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{forest_train, ForestParams, RandomForest};
pub use gnb::{gnb_train, GaussianNb, GnbClass, VAR_SMOOTHING};
pub use knn::{knn_predict, knn_train, Knn, EXACT_MATCH};
pub use tree::{tree_train, DecisionTree, TreeNode};

use crate::dataset_io::Diagnosis;
use crate::features::{FeatureMatrix, View};
use crate::svm::{svm_train, KernelKind, SvmError, SvmModel, SvmParams};

pub const MODEL_FORMAT: &str = "palsy-model/1";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("no training samples")]
    EmptyInput,
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("k = {k} exceeds the {n} training samples")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dims(expected: usize, x: &[f64]) -> Result<(), ClassifierError> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(ClassifierError::DimensionMismatch { expected, found: x.len() })
    }
}

/// Highest score; exact ties go to the earliest class.
pub(crate) fn argmax_class(scores: impl IntoIterator<Item = (Diagnosis, f64)>) -> Diagnosis {
    let mut best: Option<(Diagnosis, f64)> = None;
    for (c, s) in scores {
        best = match best {
            Some((bc, bs)) if bs > s || (bs == s && bc < c) => Some((bc, bs)),
            _ => Some((c, s)),
        };
    }
    best.expect("at least one class").0
}

/// Most frequent class in per-class counts.
pub(crate) fn majority(counts: &[usize; 3]) -> Diagnosis {
    argmax_class(Diagnosis::ALL.into_iter().map(|c| (c, counts[c.index()] as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Gnb,
    Tree,
    Knn,
    Forest,
    Svm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] =
        [ModelFamily::Gnb, ModelFamily::Tree, ModelFamily::Knn, ModelFamily::Forest, ModelFamily::Svm];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Gnb => "gnb",
            ModelFamily::Tree => "tree",
            ModelFamily::Knn => "knn",
            ModelFamily::Forest => "forest",
            ModelFamily::Svm => "svm",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ModelFamily::Gnb => "Gaussian naive Bayes",
            ModelFamily::Tree => "Decision tree",
            ModelFamily::Knn => "K-nearest neighbours",
            ModelFamily::Forest => "Random forest",
            ModelFamily::Svm => "Support vector machine",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown model {s:?} (gnb, tree, knn, forest, svm)"))
    }
}

/// A model family with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Gnb,
    Tree { max_depth: Option<usize> },
    Knn { k: usize },
    Forest(ForestParams),
    Svm(SvmParams),
}

impl ModelSpec {
    /// Published per-view defaults.
    pub fn default_for(family: ModelFamily, view: View) -> Self {
        let metrics = view == View::Metrics;
        match family {
            ModelFamily::Gnb => ModelSpec::Gnb,
            ModelFamily::Tree => ModelSpec::Tree { max_depth: Some(if metrics { 20 } else { 10 }) },
            ModelFamily::Knn => ModelSpec::Knn { k: if metrics { 7 } else { 5 } },
            ModelFamily::Forest => ModelSpec::Forest(ForestParams::new(if metrics { 100 } else { 200 }, None)),
            ModelFamily::Svm => ModelSpec::Svm(SvmParams {
                kernel: KernelKind::Poly,
                degree: if metrics { 15 } else { 4 },
                ..SvmParams::default()
            }),
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Gnb => ModelFamily::Gnb,
            ModelSpec::Tree { .. } => ModelFamily::Tree,
            ModelSpec::Knn { .. } => ModelFamily::Knn,
            ModelSpec::Forest(_) => ModelFamily::Forest,
            ModelSpec::Svm(_) => ModelFamily::Svm,
        }
    }

    /// Short human-readable hyperparameter summary.
    pub fn describe(&self) -> String {
        let depth = |d: &Option<usize>| d.map_or("none".to_string(), |d| d.to_string());
        match self {
            ModelSpec::Gnb => "gnb".into(),
            ModelSpec::Tree { max_depth } => format!("tree(max_depth={})", depth(max_depth)),
            ModelSpec::Knn { k } => format!("knn(k={k})"),
            ModelSpec::Forest(p) => format!("forest(n_estimators={}, max_depth={})", p.n_estimators, depth(&p.max_depth)),
            ModelSpec::Svm(p) => format!(
                "svm(kernel={:?}, degree={}, C={}, balanced={})",
                p.kernel, p.degree, p.c, p.balanced
            )
            .to_lowercase(),
        }
    }

    pub fn fit(&self, data: &FeatureMatrix, seed: u64) -> Result<TrainedModel, ClassifierError> {
        Ok(match self {
            ModelSpec::Gnb => TrainedModel::Gnb(gnb_train(data)?),
            ModelSpec::Tree { max_depth } => TrainedModel::Tree(tree_train(data, *max_depth)?),
            ModelSpec::Knn { k } => TrainedModel::Knn(knn_train(data, *k)?),
            ModelSpec::Forest(p) => TrainedModel::Forest(forest_train(data, p, seed)?),
            ModelSpec::Svm(p) => {
                if data.n_samples() == 0 {
                    return Err(ClassifierError::EmptyInput);
                }
                TrainedModel::Svm(svm_train(data, p, seed)?)
            }
        })
    }
}

/// A fitted, immutable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainedModel {
    Gnb(GaussianNb),
    Tree(DecisionTree),
    Knn(Knn),
    Forest(RandomForest),
    Svm(SvmModel),
}

impl TrainedModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            TrainedModel::Gnb(_) => ModelFamily::Gnb,
            TrainedModel::Tree(_) => ModelFamily::Tree,
            TrainedModel::Knn(_) => ModelFamily::Knn,
            TrainedModel::Forest(_) => ModelFamily::Forest,
            TrainedModel::Svm(_) => ModelFamily::Svm,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Diagnosis, ClassifierError> {
        match self {
            TrainedModel::Gnb(m) => m.predict(x),
            TrainedModel::Tree(m) => m.predict(x),
            TrainedModel::Knn(m) => m.predict(x),
            TrainedModel::Forest(m) => m.predict(x),
            TrainedModel::Svm(m) => Ok(m.predict(x)?),
        }
    }

    pub fn predict_all(&self, data: &FeatureMatrix) -> Result<Vec<Diagnosis>, ClassifierError> {
        data.rows().map(|r| self.predict(r)).collect()
    }
}

/// On-disk model: the fitted state plus what is needed to check inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub view: Option<View>,
    pub feature_names: Vec<String>,
    pub spec: ModelSpec,
    pub seed: u64,
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(spec: ModelSpec, seed: u64, data: &FeatureMatrix, model: TrainedModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            view: data.view(),
            feature_names: data.feature_names().to_vec(),
            spec,
            seed,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model state is serializable")
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| ClassifierError::ModelFile(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(ClassifierError::ModelFile(format!(
                "unsupported format {:?}, expected {MODEL_FORMAT}",
                file.format
            )));
        }
        Ok(file)
    }
}
