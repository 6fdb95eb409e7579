//! Dataset-size study: shrink the cohort under a stratified removal
//! schedule, evaluate at each size, fit `y = 1 - A e^(B x)` to the series
//! and solve for the size at which a target performance is reached.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::ModelSpec;
use crate::dataset_io::{ClassCounts, Diagnosis};
use crate::evaluation::{loocv, EvalError};
use crate::features::FeatureMatrix;
use crate::seed::{derive_seed, rng};

use Diagnosis::{Central as C, Healthy as H, Peripheral as P};

/// Class removed at each step of a 10-removal window: 5 P, 3 C, 2 H.
pub const REMOVAL_PATTERN: [Diagnosis; 10] = [P, C, P, H, C, P, C, P, H, P];

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-10;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("floor {floor} must be at least 3 and below the cohort size {n}")]
    InfeasibleFloor { floor: usize, n: usize },
    #[error("schedule was built for class counts {expected:?}, data has {found:?}")]
    ScheduleMismatch { expected: ClassCounts, found: ClassCounts },
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("at size {size}: {source}")]
    Evaluation {
        size: usize,
        #[source]
        source: EvalError,
    },
}

/// Which rows to drop, in order, to shrink a cohort to `floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalSchedule {
    pub initial: ClassCounts,
    pub floor: usize,
    /// Class removed at each step.
    pub classes: Vec<Diagnosis>,
    /// Per class, the within-class ordinals in removal order.
    pub order: [Vec<usize>; 3],
}

/// Builds the schedule. A pattern slot whose class is down to one member
/// passes to the next class in the pattern that can still lose one.
pub fn build_schedule(counts: ClassCounts, floor: usize, seed: u64) -> Result<RemovalSchedule, ScalingError> {
    let n = counts.total();
    if floor < 3 || floor >= n {
        return Err(ScalingError::InfeasibleFloor { floor, n });
    }
    let mut left = counts;
    let mut classes = Vec::with_capacity(n - floor);
    for step in 0..n - floor {
        let slot = step % REMOVAL_PATTERN.len();
        let class = (0..REMOVAL_PATTERN.len())
            .map(|k| REMOVAL_PATTERN[(slot + k) % REMOVAL_PATTERN.len()])
            .find(|&c| left.get(c) >= 2)
            .ok_or(ScalingError::InfeasibleFloor { floor, n })?;
        *left.get_mut(class) -= 1;
        classes.push(class);
    }
    let order = Diagnosis::ALL.map(|c| {
        let mut v: Vec<usize> = (0..counts.get(c)).collect();
        v.shuffle(&mut rng(derive_seed(seed, c.index() as u64)));
        v
    });
    Ok(RemovalSchedule { initial: counts, floor, classes, order })
}

impl RemovalSchedule {
    /// Rows of `data` that remain after the first `removed` steps, in their
    /// original order.
    pub fn remaining(&self, data: &FeatureMatrix, removed: usize) -> Result<Vec<usize>, ScalingError> {
        let found = data.class_counts();
        if found != self.initial {
            return Err(ScalingError::ScheduleMismatch { expected: self.initial, found });
        }
        let mut members: [Vec<usize>; 3] = Default::default();
        for (i, l) in data.labels().iter().enumerate() {
            members[l.index()].push(i);
        }
        let mut taken = [0usize; 3];
        let mut drop = vec![false; data.n_samples()];
        for &c in &self.classes[..removed.min(self.classes.len())] {
            let k = c.index();
            drop[members[k][self.order[k][taken[k]]]] = true;
            taken[k] += 1;
        }
        Ok((0..data.n_samples()).filter(|&i| !drop[i]).collect())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub size: usize,
    /// Fraction correct.
    pub accuracy: f64,
    /// Fraction of central cases found; `None` once none remain.
    pub central_sensitivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub points: Vec<ScalingPoint>,
}

impl ScalingSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("size,accuracy,central_sensitivity\n");
        for p in &self.points {
            let sens = p.central_sensitivity.map_or(String::new(), |v| format!("{v}"));
            s.push_str(&format!("{},{},{}\n", p.size, p.accuracy, sens));
        }
        s
    }

    pub fn accuracy_points(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.size as f64, p.accuracy)).collect()
    }

    pub fn sensitivity_points(&self) -> Vec<(f64, f64)> {
        self.points.iter().filter_map(|p| p.central_sensitivity.map(|s| (p.size as f64, s))).collect()
    }
}

/// Removal counts evaluated: 0, stride, 2*stride, ... and always the floor.
pub fn evaluated_steps(schedule_len: usize, stride: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..=schedule_len).step_by(stride.max(1)).collect();
    if steps.last() != Some(&schedule_len) {
        steps.push(schedule_len);
    }
    steps
}

/// Leave-one-out at each evaluated size, largest first.
pub fn run_scaling(
    data: &FeatureMatrix,
    spec: &ModelSpec,
    schedule: &RemovalSchedule,
    stride: usize,
    seed: u64,
) -> Result<ScalingSeries, ScalingError> {
    if stride == 0 {
        return Err(ScalingError::ZeroStride);
    }
    let mut points = Vec::new();
    for removed in evaluated_steps(schedule.len(), stride) {
        let rows = schedule.remaining(data, removed)?;
        let size = rows.len();
        let subset = data.select(&rows);
        let r = loocv(&subset, spec, seed).map_err(|source| ScalingError::Evaluation { size, source })?;
        points.push(ScalingPoint {
            size,
            accuracy: r.correct as f64 / r.n as f64,
            central_sensitivity: match r.confusion.column_total(C) {
                0 => None,
                total => Some(r.confusion.count(C, C) as f64 / total as f64),
            },
        });
    }
    Ok(ScalingSeries { points })
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("every y must be finite and below 1; got {0}")]
    InvalidValue(f64),
    #[error("series is flat or has a single x; the rate is not identifiable")]
    DegenerateSeries,
    #[error("no convergence after {} iterations", .0.iterations)]
    NoConvergence(Box<FitCurve>),
    #[error("target {0} must lie strictly between 0 and 1")]
    InvalidTarget(f64),
    #[error("curve does not rise (rate {0} >= 0); target unreachable")]
    TargetUnreachable(f64),
}

/// `y = 1 - amplitude * exp(rate * x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitCurve {
    pub amplitude: f64,
    pub rate: f64,
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Display parameters of `y = 1 - a * exp(b * (x - c))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayForm {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FitCurve {
    /// Curve given in the shifted form; any `c` describes the same curve.
    pub fn from_display(a: f64, b: f64, c: f64) -> Self {
        Self { amplitude: a * (-b * c).exp(), rate: b, rms_residual: 0.0, iterations: 0, converged: true }
    }

    pub fn eval(&self, x: f64) -> f64 {
        1.0 - self.amplitude * (self.rate * x).exp()
    }

    pub fn display(&self, c: f64) -> DisplayForm {
        DisplayForm { a: self.amplitude * (self.rate * c).exp(), b: self.rate, c }
    }
}

impl DisplayForm {
    pub fn eval(&self, x: f64) -> f64 {
        1.0 - self.a * (self.b * (x - self.c)).exp()
    }
}

fn sse(points: &[(f64, f64)], center: f64, log_amp: f64, rate: f64) -> f64 {
    points.iter().map(|&(x, y)| (y - (1.0 - (log_amp + rate * (x - center)).exp())).powi(2)).sum()
}

/// Least-squares fit. Starts from a line through `ln(1 - y)` and refines
/// with damped Gauss-Newton in `(ln A', B)` around the mean size.
pub fn fit_curve(points: &[(f64, f64)]) -> Result<FitCurve, FitError> {
    if let Some(&(x0, y0)) = points.first() {
        if points.iter().all(|p| p.1 == y0) || points.iter().all(|p| p.0 == x0) {
            return Err(FitError::DegenerateSeries);
        }
    }
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if let Some(&(_, y)) = points.iter().find(|(x, y)| !(y.is_finite() && *y < 1.0 && x.is_finite())) {
        return Err(FitError::InvalidValue(y));
    }
    let n = points.len() as f64;
    let center = points.iter().map(|p| p.0).sum::<f64>() / n;
    // linear start on z = ln(1 - y) = ln A' + B (x - center)
    let zs: Vec<f64> = points.iter().map(|p| (1.0 - p.1).ln()).collect();
    let zm = zs.iter().sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - center).powi(2)).sum();
    let sxz: f64 = points.iter().zip(&zs).map(|(p, z)| (p.0 - center) * (z - zm)).sum();
    let mut rate = sxz / sxx;
    let mut log_amp = zm;
    let mut cost = sse(points, center, log_amp, rate);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // residual r = y - model; d model / d ln A' = -e, d model / d B = -e (x - c)
        let (mut j11, mut j12, mut j22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in points {
            let dx = x - center;
            let e = (log_amp + rate * dx).exp();
            let r = y - (1.0 - e);
            let (a, b) = (-e, -e * dx);
            j11 += a * a;
            j12 += a * b;
            j22 += b * b;
            g1 += a * r;
            g2 += b * r;
        }
        let det = j11 * j22 - j12 * j12;
        if det.abs() < f64::MIN_POSITIVE {
            break;
        }
        let mut d_amp = (j22 * g1 - j12 * g2) / det;
        let mut d_rate = (j11 * g2 - j12 * g1) / det;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = sse(points, center, log_amp + d_amp, rate + d_rate);
            if trial <= cost {
                log_amp += d_amp;
                rate += d_rate;
                cost = trial;
                accepted = true;
                break;
            }
            d_amp *= 0.5;
            d_rate *= 0.5;
        }
        let step = d_amp.hypot(d_rate);
        if !accepted || step < STEP_TOLERANCE {
            // no descent direction left: the iterate is a minimum
            converged = true;
            break;
        }
    }
    let curve = FitCurve {
        amplitude: (log_amp - rate * center).exp(),
        rate,
        rms_residual: (cost / n).sqrt(),
        iterations,
        converged,
    };
    if converged {
        Ok(curve)
    } else {
        Err(FitError::NoConvergence(Box::new(curve)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSize {
    /// Nearest whole number of samples.
    pub size: i64,
    /// Exact crossing of the curve with the target.
    pub crossing: f64,
}

/// Size at which the curve reaches `target` (a fraction).
pub fn solve_target_size(curve: &FitCurve, target: f64) -> Result<TargetSize, FitError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(FitError::InvalidTarget(target));
    }
    if curve.rate >= 0.0 {
        return Err(FitError::TargetUnreachable(curve.rate));
    }
    let crossing = ((1.0 - target) / curve.amplitude).ln() / curve.rate;
    Ok(TargetSize { size: crossing.round() as i64, crossing })
}
