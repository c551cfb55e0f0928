//! Expected exit times from Ã alcoves and the eigenfunction expansion of
//! the survival probability.
//!
//! Both are lattice sums over multi-indices l, one index per pair of a pair
//! partition, weighted by products of sine modes. Indices are odd positive
//! integers when k is even and nonnegative even integers when k is odd.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinat::SignedPartitions;
use crate::error::{invalid, Error, Result};
use crate::exitprob::{survival, SurvivalQuery};
use crate::kernels1d::SeriesControl;
use crate::numeric::{gl_integrate, CompensatedSum};
use crate::rootsys::{Family, RootDatum};

/// Largest k accepted by the series evaluators.
pub const MAX_SERIES_K: usize = 8;

/// Cap on (index tuples × partitions) visited by one expected-time series.
const WORK_BUDGET: f64 = 4e8;

/// Shells are never cut off below this radius.
const MIN_RADIUS: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub value: f64,
    /// Extrapolated size of the neglected shells.
    pub tail_bound: f64,
    pub terms_used: usize,
}

/// Exact expected exit time for k = 2 or k = 3.
pub fn closed_form_expected(x: &[f64]) -> Result<f64> {
    let k = x.len();
    if !(k == 2 || k == 3) {
        return invalid(format!(
            "closed form exists only for k = 2 or 3, got k = {k}"
        ));
    }
    RootDatum::new(Family::A, k)?.require_alcove(x)?;
    Ok(if k == 2 {
        let d = x[0] - x[1];
        d * (1.0 - d) / 2.0
    } else {
        (x[0] - x[1]) * (x[1] - x[2]) * (1.0 - (x[0] - x[2]))
    })
}

/// Pairs (i, j) with i < j, and for each partition its sign and the
/// positions of its pairs in that list.
struct PairLayout {
    diffs: Vec<f64>,
    partitions: Vec<(f64, Vec<usize>)>,
    odd_k: bool,
    arity: usize,
}

impl PairLayout {
    fn new(x: &[f64]) -> Result<Self> {
        let k = x.len();
        if k > MAX_SERIES_K {
            return invalid(format!(
                "series evaluation supports k <= {MAX_SERIES_K}, got {k}"
            ));
        }
        RootDatum::new(Family::A, k)?.require_alcove(x)?;
        let pos = |i: usize, j: usize| (0..i).map(|r| k - 1 - r).sum::<usize>() + (j - i - 1);
        let mut diffs = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                diffs.push(x[i] - x[j]);
            }
        }
        let partitions = SignedPartitions::cached(k)?
            .items
            .iter()
            .map(|(s, p)| {
                (
                    *s,
                    p.pairs.iter().map(|&(i, j)| pos(i - 1, j - 1)).collect(),
                )
            })
            .collect();
        Ok(Self {
            diffs,
            partitions,
            odd_k: k % 2 == 1,
            arity: k / 2,
        })
    }

    fn smallest_index(&self) -> usize {
        if self.odd_k {
            0
        } else {
            1
        }
    }

    /// Largest index value needed for shells up to `r`.
    fn index_limit(&self, r: u64) -> usize {
        (r as f64).sqrt().floor() as usize + 1
    }

    /// mode[pair][l] for l up to `limit`, using `f(l, y)`.
    fn table(&self, limit: usize, f: impl Fn(usize, f64) -> f64) -> Vec<Vec<f64>> {
        self.diffs
            .iter()
            .map(|&y| (0..=limit).map(|l| f(l, y)).collect())
            .collect()
    }

    /// Calls `visit(l, N(l))` for every index tuple with lo < N(l) ≤ hi,
    /// split by the first index so bands can be summed in parallel.
    fn band<F>(&self, lo: u64, hi: u64, visit: F) -> (f64, f64, usize)
    where
        F: Fn(&[usize], u64) -> f64 + Sync,
    {
        let step = 2;
        let first: Vec<usize> = (self.smallest_index()..)
            .step_by(step)
            .take_while(|&l| (l * l) as u64 <= hi)
            .collect();
        let parts: Vec<(f64, f64, usize)> = first
            .par_iter()
            .map(|&l0| {
                let mut idx = vec![0usize; self.arity];
                idx[0] = l0;
                let mut sum = CompensatedSum::new();
                let mut abs = 0.0;
                let mut count = 0;
                self.recurse(
                    &mut idx,
                    1,
                    (l0 * l0) as u64,
                    lo,
                    hi,
                    &visit,
                    &mut sum,
                    &mut abs,
                    &mut count,
                );
                (sum.value(), abs, count)
            })
            .collect();
        let mut sum = CompensatedSum::new();
        let mut abs = 0.0;
        let mut count = 0;
        for (s, a, c) in parts {
            sum.add(s);
            abs += a;
            count += c;
        }
        (sum.value(), abs, count)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F>(
        &self,
        idx: &mut [usize],
        pos: usize,
        norm: u64,
        lo: u64,
        hi: u64,
        visit: &F,
        sum: &mut CompensatedSum,
        abs: &mut f64,
        count: &mut usize,
    ) where
        F: Fn(&[usize], u64) -> f64,
    {
        if pos == idx.len() {
            if norm > lo && norm <= hi {
                let v = visit(idx, norm);
                sum.add(v);
                *abs += v.abs();
                *count += 1;
            }
            return;
        }
        let mut l = self.smallest_index();
        while norm + (l * l) as u64 <= hi {
            idx[pos] = l;
            self.recurse(
                idx,
                pos + 1,
                norm + (l * l) as u64,
                lo,
                hi,
                visit,
                sum,
                abs,
                count,
            );
            l += 2;
        }
    }

    /// Σ_π sign(π) Π_s table[pair_s][l_s].
    fn signed_product(&self, table: &[Vec<f64>], l: &[usize]) -> f64 {
        let mut acc = 0.0;
        for (sign, pairs) in &self.partitions {
            let mut prod = *sign;
            for (s, &p) in pairs.iter().enumerate() {
                prod *= table[p][l[s]];
            }
            acc += prod;
        }
        acc
    }
}

/// Sine mode 4/(πl) sin(πly), with the linear mode 2y at l = 0.
fn mode(l: usize, y: f64) -> f64 {
    if l == 0 {
        2.0 * y
    } else {
        let lf = l as f64;
        4.0 / (PI * lf) * (PI * lf * y).sin()
    }
}

/// Expected exit time from the Ã_{k−1} alcove, k = x.len() ≤ 8, summed in
/// doubling shells of N(l) = Σ l_s² until the extrapolated tail drops below
/// `ctl.tol` or the work budget runs out.
pub fn expected_exit_a(x: &[f64], ctl: &SeriesControl) -> Result<ExpectationResult> {
    ctl.validate()?;
    let layout = PairLayout::new(x)?;
    let weight = layout.partitions.len() as f64 * layout.arity as f64;
    let mut total = CompensatedSum::new();
    let mut terms = 0usize;
    let mut lo = 0u64;
    let mut hi = 16u64;
    let mut prev_abs = f64::INFINITY;
    let mut tail;
    let mut table = Vec::new();
    loop {
        let limit = layout.index_limit(hi);
        if table.first().is_none_or(|t: &Vec<f64>| t.len() <= limit) {
            table = layout.table(2 * limit, mode);
        }
        let (s, abs, count) = layout.band(lo, hi, |l, n| {
            layout.signed_product(&table, l) / (PI * PI * n as f64)
        });
        total.add(s);
        terms += count;
        // Small shells may be empty, so only consecutive nonempty bands with
        // shrinking mass feed the geometric extrapolation.
        tail = if abs > 0.0 && abs < prev_abs && prev_abs.is_finite() {
            let q = abs / prev_abs;
            abs * q / (1.0 - q)
        } else {
            f64::INFINITY
        };
        prev_abs = if abs > 0.0 { abs } else { f64::INFINITY };
        let next_work = 2.0 * terms as f64 * weight;
        if (tail <= ctl.tol && hi >= MIN_RADIUS) || next_work > WORK_BUDGET {
            break;
        }
        lo = hi;
        hi *= 2;
    }
    Ok(ExpectationResult {
        value: total.value(),
        tail_bound: tail,
        terms_used: terms,
    })
}

/// Expected exit time from any supported alcove as ∫_0^∞ P_x(T > t) dt.
///
/// Fixed Gauss–Legendre panels on doubling time windows, each checked
/// against a rule of half the order. The integrand carries its own
/// truncation noise, which an adaptive scheme would chase.
pub fn expected_exit_by_quadrature(
    datum: &RootDatum,
    x: &[f64],
    ctl: &SeriesControl,
) -> Result<ExpectationResult> {
    const PANELS: usize = 4;
    let q = SurvivalQuery::new(datum.clone(), x.to_vec(), 0.0)?.with_control(*ctl)?;
    let f = |t: f64| {
        let mut q = q.clone();
        q.t = t;
        survival(&q).map(|r| r.value).unwrap_or(f64::NAN)
    };
    let mut total = CompensatedSum::new();
    let mut err = 0.0;
    let mut terms = 0;
    let (mut a, mut b) = (0.0, 1.0 / 1024.0);
    let mut prev = f64::INFINITY;
    loop {
        let h = (b - a) / PANELS as f64;
        let (mut fine, mut coarse) = (0.0, 0.0);
        for i in 0..PANELS {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            fine += gl_integrate(20, lo, hi, f);
            coarse += gl_integrate(10, lo, hi, f);
        }
        if !fine.is_finite() {
            return Err(Error::NonFinite("survival integrand".into()));
        }
        total.add(fine);
        err += (fine - coarse).abs();
        terms += 30 * PANELS;
        if fine == 0.0 {
            break;
        }
        // Survival decays exponentially, so late windows shrink geometrically.
        let ratio = fine / prev;
        if b >= 1.0 && ratio < 0.5 {
            let rest = fine * ratio / (1.0 - ratio);
            if rest <= ctl.tol {
                err += rest;
                break;
            }
        }
        if b > 1e3 {
            err = f64::INFINITY;
            break;
        }
        prev = fine;
        (a, b) = (b, 2.0 * b);
    }
    Ok(ExpectationResult {
        value: total.value(),
        tail_bound: err,
        terms_used: terms,
    })
}

/// The coefficient F_r(x) of e^{−π² r t} in the survival expansion.
pub fn eigen_level(x: &[f64], r: u64) -> Result<f64> {
    let layout = PairLayout::new(x)?;
    let table = layout.table(layout.index_limit(r), mode);
    Ok(layout
        .band(r.saturating_sub(1), r, |l, _| {
            layout.signed_product(&table, l)
        })
        .0)
}

/// Σ_{0 < r ≤ r_max} e^{−π² r t} F_r(x).
pub fn survival_eigen_expansion(x: &[f64], t: f64, r_max: u64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return invalid(format!("time must be finite and positive, got {t}"));
    }
    let layout = PairLayout::new(x)?;
    let table = layout.table(layout.index_limit(r_max), mode);
    Ok(layout
        .band(0, r_max, |l, n| {
            layout.signed_product(&table, l) * (-PI * PI * n as f64 * t).exp()
        })
        .0)
}
