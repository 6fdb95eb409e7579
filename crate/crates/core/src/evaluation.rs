//! Leave-one-out evaluation, accuracy and per-class sensitivity, and
//! column-normalised confusion matrices.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{ClassifierError, ForestParams, ModelSpec, RandomForest, TrainedModel};
use crate::dataset_io::Diagnosis;
use crate::features::FeatureMatrix;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("percentage of an empty set")]
    ZeroDenominator,
    #[error("no predictions")]
    EmptyInput,
    #[error("leave-one-out needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("leave-one-out needs at least 2 classes")]
    SingleClass,
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: ClassifierError,
    },
}

/// A percentage, shown to one decimal place.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Percent(pub f64);

impl Percent {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn fraction(self) -> f64 {
        self.0 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}%", self.0)
    }
}

/// `100 * correct / total`.
pub fn accuracy(correct: usize, total: usize) -> Result<Percent, EvalError> {
    ratio(correct, total)
}

/// `100 * correct_in_class / class_total`.
pub fn sensitivity(correct: usize, class_total: usize) -> Result<Percent, EvalError> {
    ratio(correct, class_total)
}

fn ratio(c: usize, n: usize) -> Result<Percent, EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroDenominator);
    }
    assert!(c <= n, "count {c} exceeds total {n}");
    Ok(Percent(c as f64 / n as f64 * 100.0))
}

/// Counts with rows = predicted class and columns = actual class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Diagnosis, Diagnosis)>) -> Result<Self, EvalError> {
        let mut counts = [[0; 3]; 3];
        let mut any = false;
        for (actual, predicted) in pairs {
            counts[predicted.index()][actual.index()] += 1;
            any = true;
        }
        if !any {
            return Err(EvalError::EmptyInput);
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn column_total(&self, actual: Diagnosis) -> usize {
        (0..3).map(|r| self.counts[r][actual.index()]).sum()
    }

    pub fn correct(&self) -> usize {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn count(&self, predicted: Diagnosis, actual: Diagnosis) -> usize {
        self.counts[predicted.index()][actual.index()]
    }

    /// Share of each actual class predicted as each class; `None` for a
    /// class that never occurs.
    pub fn column_percentages(&self) -> [[Option<f64>; 3]; 3] {
        let mut out = [[None; 3]; 3];
        for actual in Diagnosis::ALL {
            let total = self.column_total(actual);
            if total == 0 {
                continue;
            }
            for predicted in Diagnosis::ALL {
                out[predicted.index()][actual.index()] =
                    Some(100.0 * self.count(predicted, actual) as f64 / total as f64);
            }
        }
        out
    }

    pub fn accuracy(&self) -> Percent {
        accuracy(self.correct(), self.total()).expect("matrix is non-empty")
    }

    pub fn sensitivity(&self, class: Diagnosis) -> Option<Percent> {
        sensitivity(self.count(class, class), self.column_total(class)).ok()
    }

    /// Text table: one row per predicted class, one column per actual class.
    pub fn render(&self) -> String {
        let pct = self.column_percentages();
        let name = |d: Diagnosis| match d {
            Diagnosis::Peripheral => "peripheral",
            Diagnosis::Central => "central",
            Diagnosis::Healthy => "healthy",
        };
        let mut s = format!("{:<22}", "predicted \\ actual");
        for a in Diagnosis::ALL {
            s.push_str(&format!("{:>12}", name(a)));
        }
        s.push('\n');
        for p in Diagnosis::ALL {
            s.push_str(&format!("{:<22}", name(p)));
            for a in Diagnosis::ALL {
                let cell = match pct[p.index()][a.index()] {
                    Some(v) => format!("{v:.1} %"),
                    None => "-".to_string(),
                };
                s.push_str(&format!("{cell:>12}"));
            }
            s.push('\n');
        }
        s.push_str(&format!("{:<22}", "n"));
        for a in Diagnosis::ALL {
            s.push_str(&format!("{:>12}", self.column_total(a)));
        }
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub fold: usize,
    pub id: String,
    pub actual: Diagnosis,
    pub predicted: Diagnosis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n: usize,
    pub correct: usize,
    pub accuracy: Percent,
    /// Indexed peripheral, central, healthy; `None` for an absent class.
    pub sensitivity: [Option<Percent>; 3],
    pub confusion: ConfusionMatrix,
    pub column_percentages: [[Option<f64>; 3]; 3],
    pub predictions: Vec<FoldPrediction>,
    /// Folds whose SVM stopped at the sweep limit before meeting the tolerance.
    pub unconverged_folds: Vec<usize>,
}

impl EvalResult {
    pub fn from_predictions(predictions: Vec<FoldPrediction>) -> Result<Self, EvalError> {
        let confusion = ConfusionMatrix::from_pairs(predictions.iter().map(|p| (p.actual, p.predicted)))?;
        Ok(Self {
            n: confusion.total(),
            correct: confusion.correct(),
            accuracy: confusion.accuracy(),
            sensitivity: Diagnosis::ALL.map(|d| confusion.sensitivity(d)),
            column_percentages: confusion.column_percentages(),
            confusion,
            predictions,
            unconverged_folds: Vec::new(),
        })
    }

    pub fn sensitivity_of(&self, class: Diagnosis) -> Option<Percent> {
        self.sensitivity[class.index()]
    }
}

fn check_loocv_input(data: &FeatureMatrix) -> Result<(), EvalError> {
    if data.n_samples() < 2 {
        return Err(EvalError::TooFewSamples(data.n_samples()));
    }
    if data.class_counts().present().len() < 2 {
        return Err(EvalError::SingleClass);
    }
    Ok(())
}

/// Leave-one-out: fold `i` trains on every row but `i` with seed
/// `derive_seed(seed, i)` and predicts row `i`.
pub fn loocv(data: &FeatureMatrix, spec: &ModelSpec, seed: u64) -> Result<EvalResult, EvalError> {
    check_loocv_input(data)?;
    let folds: Vec<(FoldPrediction, bool)> = (0..data.n_samples())
        .into_par_iter()
        .map(|i| {
            let wrap = |source| EvalError::Fold { fold: i, source };
            let model = spec.fit(&data.without(i), derive_seed(seed, i as u64)).map_err(wrap)?;
            let predicted = model.predict(data.row(i)).map_err(wrap)?;
            let converged = match &model {
                TrainedModel::Svm(m) => m.converged(),
                _ => true,
            };
            let p = FoldPrediction { fold: i, id: data.sample_ids()[i].clone(), actual: data.labels()[i], predicted };
            Ok((p, converged))
        })
        .collect::<Result<_, EvalError>>()?;
    let unconverged_folds = folds.iter().filter(|(_, c)| !c).map(|(p, _)| p.fold).collect();
    let mut result = EvalResult::from_predictions(folds.into_iter().map(|(p, _)| p).collect())?;
    result.unconverged_folds = unconverged_folds;
    Ok(result)
}

/// Leave-one-out for every forest size in `sizes` at once. Each fold grows
/// one forest of `max(sizes)` trees and votes with its first `k` trees, which
/// equals training a `k`-tree forest with the same seed.
pub fn loocv_forest_sizes(
    data: &FeatureMatrix,
    params: &ForestParams,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<EvalResult>, EvalError> {
    check_loocv_input(data)?;
    let largest = sizes.iter().copied().max().unwrap_or(0);
    if largest == 0 || sizes.contains(&0) {
        return Err(EvalError::Fold {
            fold: 0,
            source: ClassifierError::InvalidHyperparameter("forest sizes must be at least 1".into()),
        });
    }
    let spec = ForestParams { n_estimators: largest, ..*params };
    let per_fold: Vec<Vec<FoldPrediction>> = (0..data.n_samples())
        .into_par_iter()
        .map(|i| {
            let wrap = |source| EvalError::Fold { fold: i, source };
            let forest: RandomForest =
                crate::classifiers::forest_train(&data.without(i), &spec, derive_seed(seed, i as u64)).map_err(wrap)?;
            sizes
                .iter()
                .map(|&k| {
                    Ok(FoldPrediction {
                        fold: i,
                        id: data.sample_ids()[i].clone(),
                        actual: data.labels()[i],
                        predicted: forest.predict_with(data.row(i), k).map_err(wrap)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_, EvalError>>()?;
    (0..sizes.len())
        .map(|s| EvalResult::from_predictions(per_fold.iter().map(|f| f[s].clone()).collect()))
        .collect()
}
