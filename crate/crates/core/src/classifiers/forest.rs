use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Grower};
use super::{check_dims, majority, ClassifierError};
use crate::dataset_io::Diagnosis;
use crate::features::FeatureMatrix;
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    /// Draw a bootstrap resample per tree. Disabled only in tests.
    pub bootstrap: bool,
    /// Features tried per split; `None` uses `ceil(sqrt(f))`.
    pub features_per_split: Option<usize>,
}

impl ForestParams {
    pub fn new(n_estimators: usize, max_depth: Option<usize>) -> Self {
        Self { n_estimators, max_depth, bootstrap: true, features_per_split: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub seed: u64,
    pub features_per_split: usize,
    pub n_features: usize,
}

pub fn forest_train(data: &FeatureMatrix, params: &ForestParams, seed: u64) -> Result<RandomForest, ClassifierError> {
    let n = data.n_samples();
    if n == 0 {
        return Err(ClassifierError::EmptyInput);
    }
    if params.n_estimators == 0 {
        return Err(ClassifierError::InvalidHyperparameter("n_estimators must be at least 1".into()));
    }
    if params.max_depth == Some(0) {
        return Err(ClassifierError::InvalidHyperparameter("max_depth must be at least 1".into()));
    }
    let f = data.n_features();
    let m = params.features_per_split.unwrap_or_else(|| (f as f64).sqrt().ceil() as usize).clamp(1, f.max(1));
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut r = rng(derive_seed(seed, t as u64));
            let mut idx: Vec<usize> =
                if params.bootstrap { (0..n).map(|_| r.gen_range(0..n)).collect() } else { (0..n).collect() };
            let root = Grower { data, max_depth: params.max_depth, features_per_split: Some(m), rng: Some(r) }
                .grow(&mut idx, 0);
            DecisionTree { root, n_features: f, max_depth: params.max_depth }
        })
        .collect();
    Ok(RandomForest { trees, seed, features_per_split: m, n_features: f })
}

impl RandomForest {
    pub fn predict(&self, x: &[f64]) -> Result<Diagnosis, ClassifierError> {
        self.predict_with(x, self.trees.len())
    }

    /// Majority vote of the first `n_trees` trees.
    pub fn predict_with(&self, x: &[f64], n_trees: usize) -> Result<Diagnosis, ClassifierError> {
        check_dims(self.n_features, x)?;
        let mut votes = [0usize; 3];
        for t in &self.trees[..n_trees.clamp(1, self.trees.len())] {
            votes[t.predict_unchecked(x).index()] += 1;
        }
        Ok(majority(&votes))
    }
}
