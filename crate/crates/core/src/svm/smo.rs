//! Platt's sequential minimal optimisation with a full error cache and
//! per-sample box constraints.

use rand::Rng;

use super::kernel::KernelSpec;
use crate::seed;

/// Multipliers this close to a bound are snapped onto it.
const BOUND_EPS: f64 = 1e-8;
/// Minimum multiplier change that counts as progress.
const STEP_EPS: f64 = 1e-10;

pub(crate) struct SmoProblem<'a> {
    pub rows: &'a [&'a [f64]],
    /// Targets, each +1 or -1.
    pub y: &'a [f64],
    /// Per-sample penalty.
    pub c: &'a [f64],
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
}

pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub b: f64,
    pub converged: bool,
    pub passes: usize,
    pub overflow_events: usize,
}

struct Solver<'a> {
    p: &'a SmoProblem<'a>,
    n: usize,
    gram: Vec<f64>,
    alpha: Vec<f64>,
    b: f64,
    /// `f(x_i) - y_i` for every sample.
    err: Vec<f64>,
    rng: rand_chacha::ChaCha8Rng,
}

impl Solver<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.n + j]
    }

    fn non_bound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.p.c[i]
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (y1, y2) = (self.p.y[i1], self.p.y[i2]);
        let (c1, c2) = (self.p.c[i1], self.p.c[i2]);
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (e1, e2) = (self.err[i1], self.err[i2]);
        let s = y1 * y2;
        let (lo, hi) = if y1 != y2 {
            ((a2 - a1).max(0.0), c2.min(c1 + a2 - a1))
        } else {
            ((a1 + a2 - c1).max(0.0), c2.min(a1 + a2))
        };
        if lo >= hi {
            return false;
        }
        let (k11, k12, k22) = (self.k(i1, i1), self.k(i1, i2), self.k(i2, i2));
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2_new = if eta > 0.0 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // objective at both ends of the segment
            let f1 = y1 * (e1 + self.b) - a1 * k11 - s * a2 * k12;
            let f2 = y2 * (e2 + self.b) - s * a1 * k12 - a2 * k22;
            let l1 = a1 + s * (a2 - lo);
            let h1 = a1 + s * (a2 - hi);
            let obj = |a1x: f64, a2x: f64| {
                a1x * f1 + a2x * f2 + 0.5 * a1x * a1x * k11 + 0.5 * a2x * a2x * k22 + s * a2x * a1x * k12
            };
            let (lobj, hobj) = (obj(l1, lo), obj(h1, hi));
            if lobj < hobj - STEP_EPS {
                lo
            } else if lobj > hobj + STEP_EPS {
                hi
            } else {
                a2
            }
        };
        if a2_new < BOUND_EPS {
            a2_new = 0.0;
        } else if a2_new > c2 - BOUND_EPS {
            a2_new = c2;
        }
        if (a2_new - a2).abs() < STEP_EPS * (a2_new + a2 + STEP_EPS) {
            return false;
        }
        let mut a1_new = a1 + s * (a2 - a2_new);
        if a1_new < BOUND_EPS {
            a1_new = 0.0;
        } else if a1_new > c1 - BOUND_EPS {
            a1_new = c1;
        }
        let (d1, d2) = (y1 * (a1_new - a1), y2 * (a2_new - a2));
        let b1 = e1 + d1 * k11 + d2 * k12 + self.b;
        let b2 = e2 + d1 * k12 + d2 * k22 + self.b;
        let b_new = if a1_new > 0.0 && a1_new < c1 {
            b1
        } else if a2_new > 0.0 && a2_new < c2 {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.b;
        for i in 0..self.n {
            self.err[i] += d1 * self.k(i1, i) + d2 * self.k(i2, i) - db;
        }
        self.alpha[i1] = a1_new;
        self.alpha[i2] = a2_new;
        self.b = b_new;
        true
    }

    fn violates_kkt(&self, i: usize) -> bool {
        let r = self.err[i] * self.p.y[i];
        (r < -self.p.tol && self.alpha[i] < self.p.c[i]) || (r > self.p.tol && self.alpha[i] > 0.0)
    }

    fn examine(&mut self, i2: usize) -> bool {
        if !self.violates_kkt(i2) {
            return false;
        }
        let e2 = self.err[i2];
        let non_bound: Vec<usize> = (0..self.n).filter(|&i| self.non_bound(i)).collect();
        if non_bound.len() > 1 {
            let mut best = None;
            let mut gap = -1.0;
            for &i in &non_bound {
                let g = (self.err[i] - e2).abs();
                if g > gap {
                    gap = g;
                    best = Some(i);
                }
            }
            if let Some(i1) = best {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        if !non_bound.is_empty() {
            let start = self.rng.gen_range(0..non_bound.len());
            for k in 0..non_bound.len() {
                if self.take_step(non_bound[(start + k) % non_bound.len()], i2) {
                    return true;
                }
            }
        }
        let start = self.rng.gen_range(0..self.n);
        for k in 0..self.n {
            if self.take_step((start + k) % self.n, i2) {
                return true;
            }
        }
        false
    }
}

pub(crate) fn solve(p: &SmoProblem<'_>) -> SmoSolution {
    let n = p.rows.len();
    let mut gram = vec![0.0; n * n];
    let mut overflow_events = 0;
    for i in 0..n {
        for j in i..n {
            let (v, hit) = p.kernel.eval_guarded(p.rows[i], p.rows[j]);
            overflow_events += usize::from(hit);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    let mut s = Solver {
        p,
        n,
        gram,
        alpha: vec![0.0; n],
        b: 0.0,
        err: p.y.iter().map(|y| -y).collect(),
        rng: seed::rng(p.seed),
    };
    let mut examine_all = true;
    let mut passes = 0;
    let mut converged = false;
    while passes < p.max_passes {
        passes += 1;
        let mut changed = 0;
        for i in 0..n {
            if examine_all || s.non_bound(i) {
                changed += usize::from(s.examine(i));
            }
        }
        if examine_all && changed == 0 {
            converged = true;
            break;
        }
        if examine_all {
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }
    if !converged {
        log::warn!("SMO stopped after {passes} sweeps without meeting the KKT tolerance");
    }
    SmoSolution { alpha: s.alpha, b: s.b, converged, passes, overflow_events }
}
