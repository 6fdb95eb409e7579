use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dims, majority, ClassifierError};
use crate::dataset_io::Diagnosis;
use crate::features::FeatureMatrix;

/// Smallest information gain accepted for a split.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { label: Diagnosis, counts: [usize; 3] },
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub n_features: usize,
    pub max_depth: Option<usize>,
}

fn entropy(counts: &[usize; 3]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / n;
        -p * p.log2()
    }).sum()
}

fn count(labels: &[Diagnosis], idx: &[usize]) -> [usize; 3] {
    let mut c = [0; 3];
    for &i in idx {
        c[labels[i].index()] += 1;
    }
    c
}

pub(crate) struct Grower<'a> {
    pub data: &'a FeatureMatrix,
    pub max_depth: Option<usize>,
    /// Features sampled per split; `None` considers every feature.
    pub features_per_split: Option<usize>,
    pub rng: Option<ChaCha8Rng>,
}

impl Grower<'_> {
    pub fn grow(&mut self, idx: &mut [usize], depth: usize) -> TreeNode {
        let labels = self.data.labels();
        let counts = count(labels, idx);
        let leaf = TreeNode::Leaf { label: majority(&counts), counts };
        if counts.iter().filter(|&&c| c > 0).count() <= 1 || self.max_depth.is_some_and(|d| depth >= d) {
            return leaf;
        }
        let Some((feature, threshold)) = self.best_split(idx, &counts) else {
            return leaf;
        };
        let split_at = partition(idx, |i| self.data.row(i)[feature] <= threshold);
        let (l, r) = idx.split_at_mut(split_at);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.grow(l, depth + 1)),
            right: Box::new(self.grow(r, depth + 1)),
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let f = self.data.n_features();
        match (self.features_per_split, self.rng.as_mut()) {
            (Some(m), Some(rng)) if m < f => {
                let mut v = sample(rng, f, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..f).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize], counts: &[usize; 3]) -> Option<(usize, f64)> {
        let labels = self.data.labels();
        let parent = entropy(counts);
        let n = idx.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, Diagnosis)> = Vec::with_capacity(idx.len());
        for feature in self.candidate_features() {
            order.clear();
            order.extend(idx.iter().map(|&i| (self.data.row(i)[feature], labels[i])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; 3];
            for k in 0..order.len() - 1 {
                left[order[k].1.index()] += 1;
                let (lo, hi) = (order[k].0, order[k + 1].0);
                if lo == hi {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1], counts[2] - left[2]];
                let nl = (k + 1) as f64;
                let gain = parent - (nl / n) * entropy(&left) - ((n - nl) / n) * entropy(&right);
                if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g + MIN_GAIN) {
                    let mut threshold = 0.5 * (lo + hi);
                    // the midpoint of adjacent floats can round up to `hi`
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((gain, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Moves rows satisfying `pred` to the front; returns their count.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut k = 0;
    for j in 0..idx.len() {
        if pred(idx[j]) {
            idx.swap(k, j);
            k += 1;
        }
    }
    k
}

/// Greedy entropy tree. `max_depth = None` grows until leaves are pure or
/// no split gains information.
pub fn tree_train(data: &FeatureMatrix, max_depth: Option<usize>) -> Result<DecisionTree, ClassifierError> {
    if data.n_samples() == 0 {
        return Err(ClassifierError::EmptyInput);
    }
    if max_depth == Some(0) {
        return Err(ClassifierError::InvalidHyperparameter("max_depth must be at least 1".into()));
    }
    let mut idx: Vec<usize> = (0..data.n_samples()).collect();
    let root = Grower { data, max_depth, features_per_split: None, rng: None }.grow(&mut idx, 0);
    Ok(DecisionTree { root, n_features: data.n_features(), max_depth })
}

impl DecisionTree {
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Diagnosis, ClassifierError> {
        check_dims(self.n_features, x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Diagnosis {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { label, .. } => return *label,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Diagnosis::{Central as B, Healthy as H, Peripheral as A};

    fn accuracy(t: &DecisionTree, d: &FeatureMatrix) -> f64 {
        d.rows().zip(d.labels()).filter(|(r, &l)| t.predict(r).unwrap() == l).count() as f64 / d.n_samples() as f64
    }

    #[test]
    fn midpoint_threshold() {
        let d = FeatureMatrix::from_rows(vec![vec![1.0], vec![2.0], vec![8.0], vec![9.0]], vec![A, A, B, B]).unwrap();
        let t = tree_train(&d, Some(10)).unwrap();
        match &t.root {
            TreeNode::Split { feature: 0, threshold, left, right } => {
                assert_eq!(*threshold, 5.0);
                assert!(matches!(**left, TreeNode::Leaf { label: A, .. }));
                assert!(matches!(**right, TreeNode::Leaf { label: B, .. }));
            }
            other => panic!("unexpected root {other:?}"),
        }
        assert_eq!(accuracy(&t, &d), 1.0);
    }

    #[test]
    fn pure_input_is_a_leaf() {
        let d = FeatureMatrix::from_rows(vec![vec![1.0], vec![3.0]], vec![H, H]).unwrap();
        assert_eq!(tree_train(&d, Some(5)).unwrap().depth(), 0);
    }

    #[test]
    fn xor_needs_two_levels() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let mut r8 = rows.clone();
        r8.extend(rows.iter().cloned());
        let d = FeatureMatrix::from_rows(r8, vec![A, B, B, A, A, B, B, A]).unwrap();
        let t = tree_train(&d, Some(1)).unwrap();
        assert!(accuracy(&t, &d) <= 0.75);
        // no single split gains information on XOR, so the stump stays a leaf
        assert_eq!(t.depth(), 0);
        assert!(tree_train(&d, Some(0)).is_err());
    }

    #[test]
    fn depth_is_bounded() {
        let rows: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64]).collect();
        let labels = (0..32).map(|i| [A, B, H][i % 3]).collect();
        let d = FeatureMatrix::from_rows(rows, labels).unwrap();
        for depth in 1..6 {
            assert!(tree_train(&d, Some(depth)).unwrap().depth() <= depth);
        }
    }

    proptest! {
        #[test]
        fn train_accuracy_grows_with_depth(
            rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 6..40),
            seed in 0u64..1000,
        ) {
            let labels: Vec<Diagnosis> = (0..rows.len()).map(|i| [A, B, H][((i as u64 * 7 + seed) % 3) as usize]).collect();
            let d = FeatureMatrix::from_rows(rows, labels).unwrap();
            let mut last = 0.0;
            for depth in 1..8 {
                let acc = accuracy(&tree_train(&d, Some(depth)).unwrap(), &d);
                prop_assert!(acc >= last - 1e-12);
                last = acc;
            }
        }
    }
}
