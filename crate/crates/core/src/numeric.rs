//! Small numerical helpers shared by the evaluators.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

pub use libm::{erf, erfc};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Gauss-Legendre nodes and weights on [-1, 1], cached per order.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static [(f64, f64)]>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| {
        let rule =
            gauss_quad::GaussLegendre::new(n).expect("Gauss-Legendre order must be at least 2");
        let mut pairs = rule.into_node_weight_pairs();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Box::leak(pairs.into_boxed_slice())
    })
}

/// Fixed-order Gauss-Legendre on [a, b].
pub fn gl_integrate(n: usize, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = CompensatedSum::new();
    for &(node, w) in gauss_legendre(n) {
        acc.add(w * f(mid + half * node));
    }
    half * acc.value()
}

/// Result of an adaptive 1D integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive bisection with a 10-point Gauss-Legendre rule, comparing each panel against its halves.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Integral {
    const ORDER: usize = 10;
    const MAX_DEPTH: u32 = 40;
    let mut total = CompensatedSum::new();
    let mut err = 0.0;
    let mut evals = 0;
    let whole = gl_integrate(ORDER, a, b, &f);
    evals += ORDER;
    let mut stack = vec![(a, b, whole, tol, 0u32)];
    while let Some((lo, hi, coarse, budget, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gl_integrate(ORDER, lo, mid, &f);
        let right = gl_integrate(ORDER, mid, hi, &f);
        evals += 2 * ORDER;
        let fine = left + right;
        let diff = (fine - coarse).abs();
        if diff <= budget || depth >= MAX_DEPTH || (hi - lo) < 1e-14 * (1.0 + lo.abs()) {
            total.add(fine);
            err += diff;
        } else {
            stack.push((lo, mid, left, 0.5 * budget, depth + 1));
            stack.push((mid, hi, right, 0.5 * budget, depth + 1));
        }
    }
    Integral {
        value: total.value(),
        error: err,
        evaluations: evals,
    }
}

/// Solves the dense system `m x = rhs` (row-major `m`), returning `None` when singular.
pub fn solve_linear(m: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let b = nalgebra::DVector::from_column_slice(rhs);
    mat.lu().solve(&b).map(|x| x.iter().copied().collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}
