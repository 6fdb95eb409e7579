use serde::{Deserialize, Serialize};

use super::{argmax_class, check_dims, ClassifierError};
use crate::dataset_io::Diagnosis;
use crate::features::FeatureMatrix;

/// Relative variance floor, scaled by the largest feature variance.
pub const VAR_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbClass {
    pub label: Diagnosis,
    pub log_prior: f64,
    pub mean: Vec<f64>,
    /// Smoothed variances.
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub classes: Vec<GnbClass>,
    pub epsilon: f64,
}

fn mean_var(rows: &[&[f64]], f: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..f).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let var = (0..f).map(|j| rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).collect();
    (mean, var)
}

pub fn gnb_train(data: &FeatureMatrix) -> Result<GaussianNb, ClassifierError> {
    if data.n_samples() == 0 {
        return Err(ClassifierError::EmptyInput);
    }
    let f = data.n_features();
    let all: Vec<&[f64]> = data.rows().collect();
    let (_, total_var) = mean_var(&all, f);
    let max_var = total_var.iter().copied().fold(0.0, f64::max);
    let epsilon = if max_var > 0.0 { VAR_SMOOTHING * max_var } else { VAR_SMOOTHING };
    let n = data.n_samples() as f64;
    let classes = data
        .class_counts()
        .present()
        .into_iter()
        .map(|label| {
            let rows: Vec<&[f64]> = all.iter().zip(data.labels()).filter(|(_, &l)| l == label).map(|(r, _)| *r).collect();
            let (mean, var) = mean_var(&rows, f);
            GnbClass {
                label,
                log_prior: (rows.len() as f64 / n).ln(),
                mean,
                var: var.into_iter().map(|v| v + epsilon).collect(),
            }
        })
        .collect();
    Ok(GaussianNb { classes, epsilon })
}

impl GaussianNb {
    pub fn n_features(&self) -> usize {
        self.classes[0].mean.len()
    }

    /// Joint log-likelihood per present class.
    pub fn log_scores(&self, x: &[f64]) -> Vec<(Diagnosis, f64)> {
        self.classes
            .iter()
            .map(|c| {
                let ll: f64 = x
                    .iter()
                    .zip(c.mean.iter().zip(&c.var))
                    .map(|(v, (m, s2))| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (v - m).powi(2) / (2.0 * s2))
                    .sum();
                (c.label, c.log_prior + ll)
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Diagnosis, ClassifierError> {
        check_dims(self.n_features(), x)?;
        Ok(argmax_class(self.log_scores(x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Diagnosis::{Central as B, Peripheral as A};

    fn toy() -> FeatureMatrix {
        FeatureMatrix::from_rows(vec![vec![0.0], vec![2.0], vec![10.0], vec![12.0]], vec![A, A, B, B]).unwrap()
    }

    #[test]
    fn fits_hand_computed_moments() {
        let m = gnb_train(&toy()).unwrap();
        assert_eq!(m.classes[0].mean, vec![1.0]);
        assert_eq!(m.classes[1].mean, vec![11.0]);
        // total variance of {0,2,10,12} is 26.0
        assert!((m.epsilon - 26e-9).abs() < 1e-20);
        assert!((m.classes[0].var[0] - 1.0 - m.epsilon).abs() < 1e-15);
        assert!((m.classes[1].var[0] - 1.0 - m.epsilon).abs() < 1e-15);
    }

    #[test]
    fn predictions_and_midpoint_tie() {
        let m = gnb_train(&toy()).unwrap();
        assert_eq!(m.predict(&[1.0]).unwrap(), A);
        assert_eq!(m.predict(&[11.0]).unwrap(), B);
        assert_eq!(m.predict(&[6.0]).unwrap(), A);
        assert!(m.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_class_and_constant_features() {
        let d = FeatureMatrix::from_rows(vec![vec![1.0, 5.0], vec![1.0, 5.0]], vec![B, B]).unwrap();
        let m = gnb_train(&d).unwrap();
        assert_eq!(m.epsilon, VAR_SMOOTHING);
        assert_eq!(m.predict(&[-40.0, 3.0]).unwrap(), B);
    }

    #[test]
    fn duplicates_match_weighted_fit() {
        let once = gnb_train(&toy()).unwrap();
        let d = toy();
        let twice = gnb_train(&d.select(&[0, 1, 2, 3, 0, 1, 2, 3])).unwrap();
        for (a, b) in once.classes.iter().zip(&twice.classes) {
            assert_eq!(a.mean, b.mean);
            assert!((a.var[0] - b.var[0]).abs() < 1e-12);
            assert!((a.log_prior - b.log_prior).abs() < 1e-12);
        }
    }
}
