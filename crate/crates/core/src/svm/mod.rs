//! Soft-margin kernel SVM trained by SMO, combined one-vs-one for three
//! classes.

mod kernel;
mod smo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernel::{KernelKind, KernelSpec, KERNEL_LIMIT};

use crate::dataset_io::Diagnosis;
use crate::features::FeatureMatrix;
use crate::seed::derive_seed;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_PASSES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SvmError {
    #[error("binary SVM needs both classes present")]
    SingleClassInput,
    #[error("no training rows")]
    EmptyInput,
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Training settings. `gamma = None` picks `1 / (f * pooled feature variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: KernelKind,
    pub degree: u32,
    pub gamma: Option<f64>,
    pub coef0: f64,
    pub c: f64,
    pub balanced: bool,
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Poly,
            degree: 3,
            gamma: None,
            coef0: 0.0,
            c: 1.0,
            balanced: true,
            tol: DEFAULT_TOL,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

impl SvmParams {
    fn validate(&self) -> Result<(), SvmError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(SvmError::InvalidParameter("tol must be positive".into()));
        }
        if self.max_passes == 0 {
            return Err(SvmError::InvalidParameter("max_passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// One fitted two-class machine. `positive` is the class with target +1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub positive: Diagnosis,
    pub negative: Diagnosis,
    pub kernel: KernelSpec,
    /// Penalty for the positive and negative class after weighting.
    pub c_positive: f64,
    pub c_negative: f64,
    /// Training-set positions of the support vectors.
    pub support: Vec<usize>,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub passes: usize,
    pub overflow_events: usize,
}

impl BinarySvm {
    /// `sum alpha_i y_i K(x_i, x) - b`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * self.kernel.eval_guarded(sv, x).0)
            .sum::<f64>()
            - self.bias
    }

    pub fn predict(&self, x: &[f64]) -> Diagnosis {
        if self.decision(x) >= 0.0 {
            self.positive
        } else {
            self.negative
        }
    }

    fn alphas(&self, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n];
        for (&i, c) in self.support.iter().zip(&self.dual_coef) {
            a[i] = c.abs();
        }
        a
    }
}

/// Two-class training. Targets are +1 for `positive`, -1 otherwise;
/// `weights` scale the penalty of the positive and negative class.
#[allow(clippy::too_many_arguments)]
pub fn svm_train_binary(
    rows: &[&[f64]],
    labels: &[Diagnosis],
    positive: Diagnosis,
    kernel: KernelSpec,
    c: f64,
    weights: (f64, f64),
    tol: f64,
    max_passes: usize,
    seed: u64,
) -> Result<BinarySvm, SvmError> {
    kernel.validate()?;
    if rows.is_empty() {
        return Err(SvmError::EmptyInput);
    }
    let negative = labels.iter().copied().find(|&l| l != positive).ok_or(SvmError::SingleClassInput)?;
    if !labels.contains(&positive) || labels.iter().any(|&l| l != positive && l != negative) {
        return Err(SvmError::SingleClassInput);
    }
    let f = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != f) {
        return Err(SvmError::DimensionMismatch { expected: f, found: r.len() });
    }
    let (c_pos, c_neg) = (c * weights.0, c * weights.1);
    let y: Vec<f64> = labels.iter().map(|&l| if l == positive { 1.0 } else { -1.0 }).collect();
    let cs: Vec<f64> = y.iter().map(|&t| if t > 0.0 { c_pos } else { c_neg }).collect();
    let sol = smo::solve(&smo::SmoProblem { rows, y: &y, c: &cs, kernel, tol, max_passes, seed });
    let support: Vec<usize> = (0..rows.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    Ok(BinarySvm {
        positive,
        negative,
        kernel,
        c_positive: c_pos,
        c_negative: c_neg,
        support_vectors: support.iter().map(|&i| rows[i].to_vec()).collect(),
        dual_coef: support.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
        support,
        bias: sol.b,
        converged: sol.converged,
        passes: sol.passes,
        overflow_events: sol.overflow_events,
    })
}

/// Largest KKT residual of a machine over its own training rows.
pub fn kkt_violation(machine: &BinarySvm, rows: &[&[f64]], labels: &[Diagnosis]) -> f64 {
    let alpha = machine.alphas(rows.len());
    rows.iter()
        .zip(labels)
        .zip(alpha)
        .map(|((x, &l), a)| {
            let (y, c) =
                if l == machine.positive { (1.0, machine.c_positive) } else { (-1.0, machine.c_negative) };
            let r = y * machine.decision(x) - 1.0;
            if a <= 0.0 {
                (-r).max(0.0)
            } else if a >= c {
                r.max(0.0)
            } else {
                r.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// `1 / (f * var)` with `var` the population variance of all feature values
/// pooled together, or 1 for constant data.
pub fn default_gamma(rows: &[&[f64]]) -> f64 {
    let f = rows.first().map_or(0, |r| r.len());
    let count = (rows.len() * f) as f64;
    if count == 0.0 {
        return 1.0;
    }
    let mean = rows.iter().flat_map(|r| r.iter()).sum::<f64>() / count;
    let var = rows.iter().flat_map(|r| r.iter()).map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    if var > 0.0 && var.is_finite() {
        1.0 / (f as f64 * var)
    } else {
        1.0
    }
}

/// Balanced penalty weight `n / (2 * n_k)` for each side of a pair.
pub fn balanced_pair_weights(n_positive: usize, n_negative: usize) -> (f64, f64) {
    let n = (n_positive + n_negative) as f64;
    (n / (2.0 * n_positive as f64), n / (2.0 * n_negative as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub params: SvmParams,
    pub kernel: KernelSpec,
    pub machines: Vec<BinarySvm>,
    /// Set when training saw a single class; every prediction is this class.
    pub constant: Option<Diagnosis>,
    pub n_features: usize,
}

impl SvmModel {
    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    pub fn overflow_events(&self) -> usize {
        self.machines.iter().map(|m| m.overflow_events).sum()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Diagnosis, SvmError> {
        if x.len() != self.n_features {
            return Err(SvmError::DimensionMismatch { expected: self.n_features, found: x.len() });
        }
        if let Some(c) = self.constant {
            return Ok(c);
        }
        let mut votes = [0usize; 3];
        let mut strength = [0.0f64; 3];
        for m in &self.machines {
            let d = m.decision(x);
            let winner = if d >= 0.0 { m.positive } else { m.negative };
            votes[winner.index()] += 1;
            strength[winner.index()] += d.abs();
        }
        let best = (0..3)
            .max_by(|&a, &b| {
                votes[a]
                    .cmp(&votes[b])
                    .then(strength[a].total_cmp(&strength[b]))
                    .then(b.cmp(&a))
            })
            .expect("three classes");
        Ok(Diagnosis::from_index(best).expect("valid index"))
    }
}

/// One machine per pair of present classes, trained on that pair's rows.
pub fn svm_train(data: &FeatureMatrix, params: &SvmParams, seed: u64) -> Result<SvmModel, SvmError> {
    params.validate()?;
    if data.n_samples() == 0 {
        return Err(SvmError::EmptyInput);
    }
    let all_rows: Vec<&[f64]> = data.rows().collect();
    let gamma = params.gamma.unwrap_or_else(|| default_gamma(&all_rows));
    let kernel = KernelSpec { kind: params.kernel, degree: params.degree, gamma, coef0: params.coef0 };
    kernel.validate()?;
    let classes = data.class_counts().present();
    let mut model =
        SvmModel { params: *params, kernel, machines: Vec::new(), constant: None, n_features: data.n_features() };
    if classes.len() == 1 {
        log::warn!("SVM trained on a single class; predicting it unconditionally");
        model.constant = Some(classes[0]);
        return Ok(model);
    }
    let mut pairs = Vec::new();
    for (a, &pos) in classes.iter().enumerate() {
        for &neg in &classes[a + 1..] {
            pairs.push((pos, neg));
        }
    }
    let machines: Result<Vec<BinarySvm>, SvmError> = {
        use rayon::prelude::*;
        pairs
            .par_iter()
            .enumerate()
            .map(|(k, &(pos, neg))| {
                let idx: Vec<usize> =
                    (0..data.n_samples()).filter(|&i| data.labels()[i] == pos || data.labels()[i] == neg).collect();
                let rows: Vec<&[f64]> = idx.iter().map(|&i| data.row(i)).collect();
                let labels: Vec<Diagnosis> = idx.iter().map(|&i| data.labels()[i]).collect();
                let n_pos = labels.iter().filter(|&&l| l == pos).count();
                let weights =
                    if params.balanced { balanced_pair_weights(n_pos, labels.len() - n_pos) } else { (1.0, 1.0) };
                svm_train_binary(
                    &rows,
                    &labels,
                    pos,
                    kernel,
                    params.c,
                    weights,
                    params.tol,
                    params.max_passes,
                    derive_seed(seed, k as u64),
                )
            })
            .collect()
    };
    model.machines = machines?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use Diagnosis::{Central as C, Healthy as H, Peripheral as P};

    fn fit(rows: &[Vec<f64>], labels: &[Diagnosis], kernel: KernelSpec, c: f64) -> BinarySvm {
        let r: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        svm_train_binary(&r, labels, P, kernel, c, (1.0, 1.0), DEFAULT_TOL, DEFAULT_MAX_PASSES, 7).unwrap()
    }

    fn blobs(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<Diagnosis>) {
        let mut rng = crate::seed::rng(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let (cx, l) = if i % 2 == 0 { (-2.0, P) } else { (2.0, C) };
            rows.push(vec![cx + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            labels.push(l);
        }
        (rows, labels)
    }

    #[test]
    fn two_point_dual_matches_closed_form() {
        // x=+1 is the positive class, x=-1 the negative one
        let rows = vec![vec![-1.0], vec![1.0]];
        let labels = [C, P];
        let m = fit(&rows, &labels, KernelSpec::linear(), 10.0);
        let alpha = m.alphas(2);
        assert!((alpha[0] - 0.5).abs() < 1e-12 && (alpha[1] - 0.5).abs() < 1e-12);
        assert!(m.bias.abs() < 1e-12);
        assert!(m.decision(&[0.0]).abs() < 1e-12);
        assert!((m.decision(&[0.2]) - 0.2).abs() < 1e-12);
        assert_eq!(m.predict(&[0.2]), P);
        let r: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        assert!(kkt_violation(&m, &r, &labels) < 1e-9);
    }

    #[test]
    fn separable_blobs_fit_exactly() {
        let (rows, labels) = blobs(3, 40);
        let m = fit(&rows, &labels, KernelSpec::linear(), 100.0);
        assert!(m.converged);
        let r: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        for (x, &l) in rows.iter().zip(&labels) {
            assert_eq!(m.predict(x), l);
            let y = if l == P { 1.0 } else { -1.0 };
            assert!(y * m.decision(x) >= 1.0 - 1e-3);
        }
        assert!(kkt_violation(&m, &r, &labels) <= DEFAULT_TOL);
        let dual_sum: f64 = m.dual_coef.iter().sum();
        assert!(dual_sum.abs() < 1e-6);
    }

    #[test]
    fn flipping_labels_negates_decision() {
        let (rows, labels) = blobs(5, 30);
        let flipped: Vec<Diagnosis> = labels.iter().map(|&l| if l == P { C } else { P }).collect();
        let kernel = KernelSpec::rbf(0.5);
        let a = fit(&rows, &labels, kernel, 1.0);
        let b = fit(&rows, &flipped, kernel, 1.0);
        for probe in [[0.0, 0.0], [1.0, -0.5], [-3.0, 2.0]] {
            assert!((a.decision(&probe) + b.decision(&probe)).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicated_rows_keep_decision() {
        let (rows, labels) = blobs(11, 20);
        let mut rows2 = rows.clone();
        rows2.extend(rows.iter().cloned());
        let mut labels2 = labels.clone();
        labels2.extend(labels.iter().copied());
        let a = fit(&rows, &labels, KernelSpec::linear(), 1e4);
        let b = fit(&rows2, &labels2, KernelSpec::linear(), 1e4);
        for probe in [[0.0, 0.0], [1.0, 0.5], [-0.5, -1.0]] {
            assert!((a.decision(&probe) - b.decision(&probe)).abs() < 1e-2, "{probe:?}");
        }
    }

    #[test]
    fn box_constraints_and_equality_hold_on_noisy_data() {
        let mut rng = crate::seed::rng(21);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let labels: Vec<Diagnosis> = (0..60).map(|_| if rng.gen_bool(0.4) { P } else { H }).collect();
        let r: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let m = svm_train_binary(&r, &labels, P, KernelSpec::poly(3, 1.0, 1.0), 2.0, (1.5, 0.75), 1e-3, 1000, 1)
            .unwrap();
        let alpha = m.alphas(rows.len());
        for (a, &l) in alpha.iter().zip(&labels) {
            let c = if l == P { m.c_positive } else { m.c_negative };
            assert!(*a >= 0.0 && *a <= c);
        }
        assert!(m.dual_coef.iter().sum::<f64>().abs() < 1e-6);
    }

    #[test]
    fn single_class_binary_is_an_error() {
        let rows = [[0.0].as_slice(), [1.0].as_slice()];
        let err = svm_train_binary(&rows, &[P, P], P, KernelSpec::linear(), 1.0, (1.0, 1.0), 1e-3, 10, 0);
        assert_eq!(err.unwrap_err(), SvmError::SingleClassInput);
    }

    #[test]
    fn balanced_weights() {
        assert_eq!(balanced_pair_weights(10, 10), (1.0, 1.0));
        // proportional to inverse class counts
        let (wp, wc) = balanced_pair_weights(102, 40);
        assert!((wp * 102.0 - wc * 40.0).abs() < 1e-9);
        let (wp2, wh) = balanced_pair_weights(102, 60);
        assert!((wp2 * 102.0 - wh * 60.0).abs() < 1e-9);
    }

    fn three_class() -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut rng = crate::seed::rng(9);
        for (k, l) in [P, C, H].into_iter().enumerate() {
            for _ in 0..12 {
                rows.push(vec![3.0 * k as f64 + rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]);
                labels.push(l);
            }
        }
        FeatureMatrix::from_rows(rows, labels).unwrap()
    }

    #[test]
    fn one_vs_one_on_three_classes() {
        let data = three_class();
        let params = SvmParams { kernel: KernelKind::Linear, ..SvmParams::default() };
        let model = svm_train(&data, &params, 1).unwrap();
        assert_eq!(model.machines.len(), 3);
        let correct = data.rows().zip(data.labels()).filter(|(r, &l)| model.predict(r).unwrap() == l).count();
        assert_eq!(correct, data.n_samples());
        assert!(model.predict(&[1.0]).is_err());
        let two = data.select(&(0..24).collect::<Vec<_>>());
        assert_eq!(svm_train(&two, &params, 1).unwrap().machines.len(), 1);
        let one = data.select(&[0, 1, 2]);
        let m = svm_train(&one, &params, 1).unwrap();
        assert!(m.machines.is_empty());
        assert_eq!(m.predict(&[100.0, 0.0]).unwrap(), P);
    }

    #[test]
    fn vote_ties_fall_to_decision_magnitude() {
        let m = |positive, negative, bias| BinarySvm {
            positive,
            negative,
            kernel: KernelSpec::linear(),
            c_positive: 1.0,
            c_negative: 1.0,
            support: vec![],
            support_vectors: vec![],
            dual_coef: vec![],
            bias,
            converged: true,
            passes: 1,
            overflow_events: 0,
        };
        // decision = -bias: P-C votes P (0.5), P-H votes H (2.0), C-H votes C (1.0)
        let model = SvmModel {
            params: SvmParams::default(),
            kernel: KernelSpec::linear(),
            machines: vec![m(P, C, -0.5), m(P, H, 2.0), m(C, H, -1.0)],
            constant: None,
            n_features: 1,
        };
        assert_eq!(model.predict(&[0.0]).unwrap(), H);
        let unanimous = SvmModel { machines: vec![m(P, C, 1.0), m(C, H, -1.0), m(P, H, 1.0)], ..model.clone() };
        assert_eq!(unanimous.predict(&[0.0]).unwrap(), C);
    }

    #[test]
    fn gamma_default() {
        let rows = [[0.0, 0.0].as_slice(), [2.0, 4.0].as_slice()];
        // pooled values {0, 0, 2, 4}: mean 1.5, variance 2.75, f = 2
        assert!((default_gamma(&rows) - 1.0 / 5.5).abs() < 1e-12);
        assert_eq!(default_gamma(&[[1.0].as_slice(), [1.0].as_slice()]), 1.0);
    }
}
