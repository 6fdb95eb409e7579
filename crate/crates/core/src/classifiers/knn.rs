use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{argmax_class, check_dims, ClassifierError};
use crate::dataset_io::Diagnosis;
use crate::features::FeatureMatrix;

/// Distances below this count as an exact match.
pub const EXACT_MATCH: f64 = 1e-12;

/// Stored training set for distance-weighted voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Diagnosis>,
}

#[derive(PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn knn_train(data: &FeatureMatrix, k: usize) -> Result<Knn, ClassifierError> {
    if data.n_samples() == 0 {
        return Err(ClassifierError::EmptyInput);
    }
    if k == 0 {
        return Err(ClassifierError::InvalidHyperparameter("k must be at least 1".into()));
    }
    if k > data.n_samples() {
        return Err(ClassifierError::KTooLarge { k, n: data.n_samples() });
    }
    Ok(Knn { k, rows: data.rows().map(<[f64]>::to_vec).collect(), labels: data.labels().to_vec() })
}

impl Knn {
    /// The `k` nearest training rows as `(distance, index)`, nearest first;
    /// equal distances resolve by training order.
    pub fn neighbours(&self, x: &[f64]) -> Vec<(f64, usize)> {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(self.k + 1);
        for (index, r) in self.rows.iter().enumerate() {
            let dist = r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let c = Candidate { dist, index };
            if heap.len() < self.k {
                heap.push(c);
            } else if heap.peek().is_some_and(|worst| c < *worst) {
                heap.pop();
                heap.push(c);
            }
        }
        heap.into_sorted_vec().into_iter().map(|c| (c.dist, c.index)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Diagnosis, ClassifierError> {
        check_dims(self.rows[0].len(), x)?;
        let near = self.neighbours(x);
        let mut weight = [0.0f64; 3];
        if near[0].0 < EXACT_MATCH {
            for (d, i) in &near {
                if *d < EXACT_MATCH {
                    weight[self.labels[*i].index()] += 1.0;
                }
            }
        } else {
            for (d, i) in &near {
                weight[self.labels[*i].index()] += 1.0 / d;
            }
        }
        let present = Diagnosis::ALL.into_iter().filter(|c| weight[c.index()] > 0.0);
        Ok(argmax_class(present.map(|c| (c, weight[c.index()]))))
    }
}

/// Convenience wrapper: fit and predict one row.
pub fn knn_predict(train: &FeatureMatrix, x: &[f64], k: usize) -> Result<Diagnosis, ClassifierError> {
    knn_train(train, k)?.predict(x)
}
