//! Both sides of the affine De Bruijn identities for the Ã alcove.
//!
//! The left side integrates the W_a-alternating sum of Π f_i(y_i) over the
//! alcove. Since the alcove tiles R^k under W_a, this equals the integral
//! over R^k of Π f_i(y_i) weighted by the sign of the tile containing y,
//! which is Π_{i<j} (−1)^{⌊y_i − y_j⌋}. The right side is a Pfaffian of
//! pairwise double integrals (even k) or its singlet expansion (odd k).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinat::{pfaffian, singlet_expansion, SkewMatrix};
use crate::error::{invalid, Result};
use crate::numeric::{erfc, gauss_legendre, CompensatedSum};

/// Largest number of functions accepted by the left-side quadrature.
pub const MAX_LHS_K: usize = 4;

/// A one-dimensional integrable test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `scale` times the normal density with this mean and sigma.
    Gaussian {
        mean: f64,
        sigma: f64,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
    /// `scale` on [a, b], zero elsewhere.
    Indicator {
        a: f64,
        b: f64,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl TestFunction {
    pub fn gaussian(mean: f64, sigma: f64) -> Self {
        TestFunction::Gaussian {
            mean,
            sigma,
            scale: 1.0,
        }
    }

    pub fn indicator(a: f64, b: f64) -> Self {
        TestFunction::Indicator { a, b, scale: 1.0 }
    }

    pub fn scaled(self, c: f64) -> Self {
        match self {
            TestFunction::Gaussian { mean, sigma, scale } => TestFunction::Gaussian {
                mean,
                sigma,
                scale: scale * c,
            },
            TestFunction::Indicator { a, b, scale } => TestFunction::Indicator {
                a,
                b,
                scale: scale * c,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TestFunction::Gaussian { mean, sigma, scale } => {
                if !(sigma > 0.0) || !mean.is_finite() || !sigma.is_finite() || !scale.is_finite() {
                    return invalid(
                        "gaussian test function needs finite mean, scale and sigma > 0",
                    );
                }
            }
            TestFunction::Indicator { a, b, scale } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() || !scale.is_finite() {
                    return invalid("indicator test function needs finite a < b");
                }
            }
        }
        Ok(())
    }

    pub fn density(&self, y: f64) -> f64 {
        match *self {
            TestFunction::Gaussian { mean, sigma, scale } => {
                let z = (y - mean) / sigma;
                scale * (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            TestFunction::Indicator { a, b, scale } => {
                if (a..=b).contains(&y) {
                    scale
                } else {
                    0.0
                }
            }
        }
    }

    /// ∫_{−∞}^y f.
    pub fn cumulative(&self, y: f64) -> f64 {
        match *self {
            TestFunction::Gaussian { mean, sigma, scale } => {
                0.5 * scale * erfc(-(y - mean) / (sigma * std::f64::consts::SQRT_2))
            }
            TestFunction::Indicator { a, b, scale } => scale * (y.clamp(a, b) - a),
        }
    }

    pub fn mass(&self) -> f64 {
        match *self {
            TestFunction::Gaussian { scale, .. } => scale,
            TestFunction::Indicator { a, b, scale } => scale * (b - a),
        }
    }

    /// Interval outside which |f| carries at most `tol` of mass.
    pub fn support(&self, tol: f64) -> (f64, f64) {
        match *self {
            TestFunction::Gaussian { mean, sigma, .. } => {
                let z = (2.0 * (1.0 / tol.min(0.5)).ln()).sqrt() + 1.0;
                (mean - z * sigma, mean + z * sigma)
            }
            TestFunction::Indicator { a, b, .. } => (a, b),
        }
    }

    /// Mass of |f| outside `support(tol)`.
    pub fn tail_mass(&self, tol: f64) -> f64 {
        match *self {
            TestFunction::Gaussian { sigma, scale, mean } => {
                let (lo, _) = self.support(tol);
                scale.abs() * erfc((mean - lo) / (sigma * std::f64::consts::SQRT_2))
            }
            TestFunction::Indicator { .. } => 0.0,
        }
    }

    /// Points where f is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            TestFunction::Gaussian { .. } => Vec::new(),
            TestFunction::Indicator { a, b, .. } => vec![a, b],
        }
    }

    fn smooth_scale(&self) -> f64 {
        match *self {
            TestFunction::Gaussian { sigma, .. } => sigma,
            TestFunction::Indicator { .. } => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureControl {
    /// Mass neglected per test function outside its effective support.
    pub tol: f64,
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Upper limit on panel width.
    pub max_panel: f64,
}

impl Default for QuadratureControl {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            nodes: 10,
            max_panel: 0.5,
        }
    }
}

impl QuadratureControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) || self.nodes < 2 || !(self.max_panel > 0.0) {
            return invalid("quadrature control needs 0 < tol < 1, nodes >= 2, max_panel > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeBruijnValue {
    pub value: f64,
    /// Bound on the mass dropped by truncating the test functions.
    pub truncation_bound: f64,
}

/// Sign of the alcove tile containing y: Π_{i<j} (−1)^{⌊y_i − y_j⌋}.
pub fn tile_sign(y: &[f64]) -> f64 {
    let mut s = 1.0;
    for i in 0..y.len() {
        for j in i + 1..y.len() {
            if (y[i] - y[j]).floor().rem_euclid(2.0) != 0.0 {
                s = -s;
            }
        }
    }
    s
}

fn validate_all(fs: &[TestFunction], ctl: &QuadratureControl) -> Result<()> {
    ctl.validate()?;
    if fs.is_empty() {
        return invalid("need at least one test function");
    }
    fs.iter().try_for_each(|f| f.validate())
}

fn push_shifted(cuts: &mut Vec<f64>, base: f64, lo: f64, hi: f64) {
    let first = (lo - base).ceil() as i64;
    let last = (hi - base).floor() as i64;
    for n in first..=last {
        cuts.push(base + n as f64);
    }
}

/// Gauss–Legendre over [lo, hi] split at `cuts` and into panels no wider
/// than `width`. `f(y, mid)` also receives the midpoint of the piece between
/// consecutive cuts, for evaluating piecewise constant factors.
fn panels(
    lo: f64,
    hi: f64,
    mut cuts: Vec<f64>,
    width: f64,
    nodes: usize,
    mut f: impl FnMut(f64, f64) -> f64,
) -> f64 {
    cuts.retain(|c| *c > lo && *c < hi);
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let rule = gauss_legendre(nodes);
    let mut acc = CompensatedSum::new();
    for piece in cuts.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let mid = 0.5 * (a + b);
        let n = ((b - a) / width).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for c in 0..n {
            let (pa, pb) = (a + c as f64 * h, a + (c + 1) as f64 * h);
            let (pm, half) = (0.5 * (pa + pb), 0.5 * h);
            for &(x, w) in rule {
                acc.add(half * w * f(pm + half * x, mid));
            }
        }
    }
    acc.value()
}

fn panel_width(fs: &[TestFunction], ctl: &QuadratureControl) -> f64 {
    fs.iter()
        .map(|f| 1.5 * f.smooth_scale())
        .fold(ctl.max_panel, f64::min)
}

struct Lhs<'a> {
    fs: &'a [TestFunction],
    supports: Vec<(f64, f64)>,
    width: f64,
    nodes: usize,
}

impl Lhs<'_> {
    /// Sign contributed by the pairs (i, d) with i < d.
    fn partial_sign(ys: &[f64], d: usize, yd: f64) -> f64 {
        let mut s = 1.0;
        for &yi in &ys[..d] {
            if (yi - yd).floor().rem_euclid(2.0) != 0.0 {
                s = -s;
            }
        }
        s
    }

    /// Integral over y_d, …, y_{k−1} with y_0..y_{d−1} fixed.
    fn level(&self, ys: &mut [f64], d: usize) -> f64 {
        let k = self.fs.len();
        let f = &self.fs[d];
        let (lo, hi) = self.supports[d];
        let mut cuts = Vec::new();
        for &yi in &ys[..d] {
            push_shifted(&mut cuts, yi, lo, hi);
        }
        if d + 1 == k {
            // Innermost variable: the sign is piecewise constant, so each
            // piece integrates exactly through the cumulative function.
            cuts.retain(|c| *c > lo && *c < hi);
            cuts.extend(f.breakpoints());
            cuts.sort_by(f64::total_cmp);
            let mut acc = CompensatedSum::new();
            let mut prev = f64::NEG_INFINITY;
            let mut prev_cum = 0.0;
            for c in cuts.iter().copied().chain(std::iter::once(f64::INFINITY)) {
                let cum = if c.is_finite() {
                    f.cumulative(c)
                } else {
                    f.mass()
                };
                let probe = match (prev.is_finite(), c.is_finite()) {
                    (true, true) => 0.5 * (prev + c),
                    (false, true) => c - 0.5,
                    (true, false) => prev + 0.5,
                    (false, false) => 0.0,
                };
                acc.add(Self::partial_sign(ys, d, probe) * (cum - prev_cum));
                prev = c;
                prev_cum = cum;
            }
            return acc.value();
        }
        for j in d..k {
            for b in self.fs[j].breakpoints() {
                push_shifted(&mut cuts, b, lo, hi);
            }
        }
        panels(lo, hi, cuts, self.width, self.nodes, |y, mid| {
            let w = f.density(y);
            if w == 0.0 {
                return 0.0;
            }
            ys[d] = y;
            w * Self::partial_sign(ys, d, mid) * self.level(ys, d + 1)
        })
    }
}

fn truncation_bound(fs: &[TestFunction], tol: f64) -> f64 {
    let masses: Vec<f64> = fs.iter().map(|f| f.mass().abs()).collect();
    fs.iter()
        .enumerate()
        .map(|(i, f)| {
            let others: f64 = masses
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, m)| m)
                .product();
            f.tail_mass(tol) * others
        })
        .sum()
}

/// ∫_{alcove} Σ_{w ∈ W_a} ε(w) Π f_i((wy)_i) dy for k ≤ 4 test functions.
pub fn lhs_alternating_integral(
    fs: &[TestFunction],
    ctl: &QuadratureControl,
) -> Result<DeBruijnValue> {
    validate_all(fs, ctl)?;
    let k = fs.len();
    if k > MAX_LHS_K {
        return invalid(format!(
            "alternating integral supports at most {MAX_LHS_K} functions, got {k}"
        ));
    }
    let lhs = Lhs {
        fs,
        supports: fs.iter().map(|f| f.support(ctl.tol)).collect(),
        width: panel_width(fs, ctl),
        nodes: ctl.nodes,
    };
    let value = if k == 1 {
        lhs.level(&mut [0.0], 0)
    } else {
        // Split the outermost variable across threads, then reduce in order.
        let (lo, hi) = lhs.supports[0];
        let mut cuts = Vec::new();
        for f in fs {
            for b in f.breakpoints() {
                push_shifted(&mut cuts, b, lo, hi);
            }
        }
        cuts.retain(|c| *c > lo && *c < hi);
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let parts: Vec<f64> = cuts
            .par_windows(2)
            .map(|w| {
                panels(w[0], w[1], Vec::new(), lhs.width, lhs.nodes, |y, _| {
                    let d = fs[0].density(y);
                    if d == 0.0 {
                        return 0.0;
                    }
                    let mut ys = vec![0.0; k];
                    ys[0] = y;
                    d * lhs.level(&mut ys, 1)
                })
            })
            .collect();
        parts.into_iter().collect::<CompensatedSum>().value()
    };
    Ok(DeBruijnValue {
        value,
        truncation_bound: truncation_bound(fs, ctl.tol),
    })
}

/// ∬ (−1)^{⌊y − z⌋} f_i(y) f_j(z) dy dz.
pub fn pairing_even(fi: &TestFunction, fj: &TestFunction, ctl: &QuadratureControl) -> f64 {
    let (lo, hi) = fi.support(ctl.tol);
    let (zlo, zhi) = fj.support(ctl.tol);
    let mut cuts = fi.breakpoints();
    for b in fj.breakpoints() {
        push_shifted(&mut cuts, b, lo, hi);
    }
    let width = panel_width(&[*fi, *fj], ctl);
    panels(lo, hi, cuts, width, ctl.nodes, |y, _| {
        let w = fi.density(y);
        if w == 0.0 {
            return 0.0;
        }
        // z ∈ (y − n − 1, y − n] gives y − z ∈ [n, n + 1).
        let first = (y - zhi).floor() as i64 - 1;
        let last = (y - zlo).ceil() as i64 + 1;
        let mut acc = CompensatedSum::new();
        for n in first..=last {
            let s = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let nf = n as f64;
            acc.add(s * (fj.cumulative(y - nf) - fj.cumulative(y - nf - 1.0)));
        }
        w * acc.value()
    })
}

/// ∬ sgn(y − z) f_i f_j + 2 Σ_{m≥1} ∬_{|y−z|>m} sgn(y − z) f_i f_j.
pub fn pairing_odd(fi: &TestFunction, fj: &TestFunction, ctl: &QuadratureControl) -> f64 {
    let (lo, hi) = fi.support(ctl.tol);
    let (zlo, zhi) = fj.support(ctl.tol);
    let mj = fj.mass();
    let mut cuts = fi.breakpoints();
    for b in fj.breakpoints() {
        push_shifted(&mut cuts, b, lo, hi);
    }
    let width = panel_width(&[*fi, *fj], ctl);
    panels(lo, hi, cuts, width, ctl.nodes, |y, _| {
        let w = fi.density(y);
        if w == 0.0 {
            return 0.0;
        }
        let mut acc = CompensatedSum::new();
        acc.add(2.0 * fj.cumulative(y) - mj);
        // Once both y − m and y + m leave the support the terms vanish.
        let last = ((y - zlo).max(zhi - y)).ceil().max(0.0) as i64 + 1;
        for m in 1..=last {
            let mf = m as f64;
            acc.add(2.0 * (fj.cumulative(y - mf) + fj.cumulative(y + mf) - mj));
        }
        w * acc.value()
    })
}

pub fn pairing_matrix_even(fs: &[TestFunction], ctl: &QuadratureControl) -> SkewMatrix {
    SkewMatrix::from_fn(fs.len(), |i, j| pairing_even(&fs[i], &fs[j], ctl))
}

pub fn pairing_matrix_odd(fs: &[TestFunction], ctl: &QuadratureControl) -> SkewMatrix {
    SkewMatrix::from_fn(fs.len(), |i, j| pairing_odd(&fs[i], &fs[j], ctl))
}

/// Pf(J) for an even number of test functions.
pub fn rhs_even(fs: &[TestFunction], ctl: &QuadratureControl) -> Result<DeBruijnValue> {
    validate_all(fs, ctl)?;
    if fs.len() % 2 != 0 {
        return invalid("the even-k right side needs an even number of functions");
    }
    let value = pfaffian(&pairing_matrix_even(fs, ctl))?;
    Ok(DeBruijnValue {
        value,
        truncation_bound: truncation_bound(fs, ctl.tol),
    })
}

/// Σ_l (−1)^{l+1} (∫ f_l) Pf(H without row and column l), odd k.
pub fn rhs_odd(fs: &[TestFunction], ctl: &QuadratureControl) -> Result<DeBruijnValue> {
    validate_all(fs, ctl)?;
    if fs.len() % 2 != 1 {
        return invalid("the odd-k right side needs an odd number of functions");
    }
    let value = singlet_expansion(&pairing_matrix_odd(fs, ctl), |l| fs[l].mass())?;
    Ok(DeBruijnValue {
        value,
        truncation_bound: truncation_bound(fs, ctl.tol),
    })
}

/// The right side matching the parity of `fs.len()`.
pub fn rhs(fs: &[TestFunction], ctl: &QuadratureControl) -> Result<DeBruijnValue> {
    if fs.len() % 2 == 0 {
        rhs_even(fs, ctl)
    } else {
        rhs_odd(fs, ctl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rootsys::{Family, RootDatum};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(m: f64, s: f64) -> TestFunction {
        TestFunction::gaussian(m, s)
    }

    fn agree(fs: &[TestFunction]) -> (f64, f64) {
        let ctl = QuadratureControl::default();
        let l = lhs_alternating_integral(fs, &ctl).unwrap().value;
        let r = rhs(fs, &ctl).unwrap().value;
        (l, r)
    }

    #[test]
    fn tile_sign_matches_folding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 2..=4 {
            let d = RootDatum::new(Family::A, k).unwrap();
            for _ in 0..200 {
                let y: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
                let (_, w) = d.fold_to_alcove(&y).unwrap();
                assert_eq!(tile_sign(&y), w.sign as f64);
            }
        }
    }

    #[test]
    fn cumulative_matches_quadrature() {
        for f in [g(0.3, 0.7), TestFunction::indicator(-0.4, 1.1).scaled(2.0)] {
            let (lo, _) = f.support(1e-13);
            let q = panels(lo, 0.9, f.breakpoints(), 0.25, 10, |y, _| f.density(y));
            assert!((q - f.cumulative(0.9)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pair_gives_zero() {
        let (l, r) = agree(&[g(0.2, 0.8), g(0.2, 0.8)]);
        assert!(l.abs() < 1e-12 && r.abs() < 1e-12);
    }

    #[test]
    fn sides_agree_for_two_functions() {
        let (l, r) = agree(&[g(0.0, 1.0), g(0.5, 1.0)]);
        assert!((l - r).abs() < 1e-10, "{l} vs {r}");
        let (l, r) = agree(&[TestFunction::indicator(0.0, 1.5), g(0.3, 0.6)]);
        assert!((l - r).abs() < 1e-10, "{l} vs {r}");
    }

    #[test]
    fn sides_agree_for_three_functions() {
        let (l, r) = agree(&[g(-0.3, 0.25), g(0.0, 0.25), g(0.4, 0.25)]);
        assert!((l - r).abs() < 1e-8, "{l} vs {r}");
        assert!(l.abs() > 1e-3, "{l}");
        let (l, r) = agree(&[
            TestFunction::indicator(-0.5, 0.7),
            g(0.0, 0.4),
            TestFunction::indicator(0.2, 0.9),
        ]);
        assert!((l - r).abs() < 1e-8, "{l} vs {r}");
    }

    #[test]
    fn sides_agree_for_four_functions() {
        let (l, r) = agree(&[g(0.45, 0.15), g(0.25, 0.2), g(0.0, 0.15), g(-0.3, 0.2)]);
        assert!((l - r).abs() < 1e-8, "{l} vs {r}");
        assert!(l.abs() > 1e-2, "{l}");
    }

    #[test]
    fn identical_triple_gives_zero() {
        let (l, r) = agree(&[g(0.1, 0.5); 3]);
        assert!(l.abs() < 1e-10 && r.abs() < 1e-10, "{l} {r}");
    }

    #[test]
    fn pairings_are_antisymmetric() {
        let ctl = QuadratureControl::default();
        let fs = [
            g(-0.2, 0.6),
            g(0.5, 0.9),
            TestFunction::indicator(-0.3, 0.8),
        ];
        for a in &fs {
            for b in &fs {
                assert!((pairing_even(a, b, &ctl) + pairing_even(b, a, &ctl)).abs() < 1e-12);
                assert!((pairing_odd(a, b, &ctl) + pairing_odd(b, a, &ctl)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_is_linear() {
        let ctl = QuadratureControl::default();
        let fs = [g(-0.3, 0.5), g(0.0, 0.5), g(0.4, 0.5)];
        let mut scaled = fs;
        scaled[0] = scaled[0].scaled(3.0);
        let base = rhs_odd(&fs, &ctl).unwrap().value;
        let r = rhs_odd(&scaled, &ctl).unwrap().value;
        assert!((r - 3.0 * base).abs() < 1e-10 * base.abs());
        let base = lhs_alternating_integral(&fs, &ctl).unwrap().value;
        let l = lhs_alternating_integral(&scaled, &ctl).unwrap().value;
        assert!((l - 3.0 * base).abs() < 1e-10 * base.abs());
    }

    #[test]
    fn rejects_bad_input() {
        let ctl = QuadratureControl::default();
        assert!(rhs_even(&[g(0.0, 1.0)], &ctl).is_err());
        assert!(rhs_odd(&[g(0.0, 1.0), g(1.0, 1.0)], &ctl).is_err());
        assert!(lhs_alternating_integral(&[g(0.0, 1.0); 5], &ctl).is_err());
        assert!(TestFunction::gaussian(0.0, 0.0).validate().is_err());
        assert!(TestFunction::indicator(1.0, 0.0).validate().is_err());
    }
}
