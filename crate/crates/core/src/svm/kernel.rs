use serde::{Deserialize, Serialize};

use super::SvmError;

/// Largest magnitude a kernel value may take before it is clamped.
pub const KERNEL_LIMIT: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Poly,
    Rbf,
}

impl std::str::FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "poly" | "polynomial" => Ok(KernelKind::Poly),
            "rbf" => Ok(KernelKind::Rbf),
            other => Err(format!("unknown kernel {other:?} (linear, poly, rbf)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self { kind: KernelKind::Linear, degree: 1, gamma: 1.0, coef0: 0.0 }
    }

    pub fn poly(degree: u32, gamma: f64, coef0: f64) -> Self {
        Self { kind: KernelKind::Poly, degree, gamma, coef0 }
    }

    pub fn rbf(gamma: f64) -> Self {
        Self { kind: KernelKind::Rbf, degree: 1, gamma, coef0: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        if self.kind == KernelKind::Poly && self.degree < 1 {
            return Err(SvmError::InvalidKernel("polynomial degree must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(SvmError::InvalidKernel(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !self.coef0.is_finite() {
            return Err(SvmError::InvalidKernel("coef0 must be finite".into()));
        }
        Ok(())
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64, SvmError> {
        if u.len() != v.len() {
            return Err(SvmError::DimensionMismatch { expected: u.len(), found: v.len() });
        }
        Ok(self.eval_guarded(u, v).0)
    }

    /// Kernel value and whether it had to be clamped to `KERNEL_LIMIT`.
    pub(crate) fn eval_guarded(&self, u: &[f64], v: &[f64]) -> (f64, bool) {
        match self.kind {
            KernelKind::Linear => clamp(dot(u, v)),
            KernelKind::Poly => {
                let base = self.gamma * dot(u, v) + self.coef0;
                // |base|^d overflows once d * ln|base| passes ln(limit)
                if base != 0.0 && self.degree as f64 * base.abs().ln() > KERNEL_LIMIT.ln() {
                    let sign = if base < 0.0 && self.degree % 2 == 1 { -1.0 } else { 1.0 };
                    return (sign * KERNEL_LIMIT, true);
                }
                clamp(base.powi(self.degree as i32))
            }
            KernelKind::Rbf => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                ((-self.gamma * d2).exp(), false)
            }
        }
    }
}

fn clamp(x: f64) -> (f64, bool) {
    if x.is_nan() {
        (0.0, true)
    } else if x.abs() > KERNEL_LIMIT {
        (KERNEL_LIMIT.copysign(x), true)
    } else {
        (x, false)
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}
