//! Survival probabilities by the method of images in rank one and two.
//!
//! The killed heat kernel on an alcove is the alternating sum of the free
//! kernel over the affine Weyl group; integrating over the alcove gives
//! P_x(T > t) = Σ_w ε(w) ∫_{w(A)} p_t(x, y) dy. Group elements are found
//! by breadth-first search from the identity, expanding only images that
//! come within the Gaussian cutoff radius of the start point.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::numeric::{dot, erf, erfc, gauss_legendre, CompensatedSum};
use crate::rootsys::{bfs_group, AffineIsometry, AffineRoot, RootDatum, GROUP_CAP};

/// Cutoff radius in units of √t.
pub const DEFAULT_CUTOFF: f64 = 8.0;
const MAX_TRIANGLE_DEPTH: u32 = 24;

/// Smallest error budget handed to a single triangle.
const BUDGET_FLOOR: f64 = 1e-18;

/// A rank-1 interval or rank-2 triangle given by its walls, in orthonormal
/// local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AlcoveSpec2D {
    /// Walls oriented so the alcove is where every `eval` is positive.
    pub walls: Vec<AffineRoot>,
    pub vertices: Vec<Vec<f64>>,
    /// Orthonormal basis of the root span in ambient coordinates, when the
    /// spec was built from a root datum.
    pub basis: Option<Vec<Vec<f64>>>,
}

impl AlcoveSpec2D {
    pub fn from_walls(walls: Vec<AffineRoot>) -> Result<Self> {
        let dim = walls.first().map(|w| w.alpha.len()).unwrap_or(0);
        if !(1..=2).contains(&dim)
            || walls.len() != dim + 1
            || walls.iter().any(|w| w.alpha.len() != dim)
        {
            return invalid("image sums need an interval (2 walls) or a triangle (3 walls)");
        }
        let mut vertices = Vec::new();
        for skip in 0..walls.len() {
            let rows: Vec<&AffineRoot> = walls
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != skip)
                .map(|(_, w)| w)
                .collect();
            let m: Vec<Vec<f64>> = rows.iter().map(|w| w.alpha.clone()).collect();
            let rhs: Vec<f64> = rows.iter().map(|w| w.level as f64).collect();
            let v = crate::numeric::solve_linear(&m, &rhs)
                .ok_or_else(|| Error::InvalidInput("alcove walls are degenerate".into()))?;
            if walls[skip].eval(&v) <= 0.0 {
                return invalid("walls do not bound a simplex on their positive sides");
            }
            vertices.push(v);
        }
        Ok(Self {
            walls,
            vertices,
            basis: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.walls[0].alpha.len()
    }

    /// The unit interval (0, 1).
    pub fn strip() -> Self {
        Self::from_walls(vec![
            AffineRoot::new(vec![1.0], 0),
            AffineRoot::new(vec![-1.0], -1),
        ])
        .expect("unit interval")
    }

    /// The triangle {1/2 > u > v > 0}.
    pub fn c2_block() -> Self {
        Self::from_walls(vec![
            AffineRoot::new(vec![1.0, -1.0], 0),
            AffineRoot::new(vec![0.0, 2.0], 0),
            AffineRoot::new(vec![-2.0, 0.0], -1),
        ])
        .expect("C2 triangle")
    }

    /// The triangle {1 − v > u > v > 0}.
    pub fn b2_block() -> Self {
        Self::from_walls(vec![
            AffineRoot::new(vec![1.0, -1.0], 0),
            AffineRoot::new(vec![0.0, 1.0], 0),
            AffineRoot::new(vec![-1.0, -1.0], -1),
        ])
        .expect("B2 triangle")
    }

    /// The fundamental alcove of a rank ≤ 2 root datum, expressed in an
    /// orthonormal basis of its root span.
    pub fn from_datum(datum: &RootDatum) -> Result<Self> {
        if datum.rank() > 2 {
            return Err(Error::MethodUnavailable(format!(
                "image sums are only offered in rank 1 and 2, type {}{} has rank {}",
                datum.family,
                datum.k,
                datum.rank()
            )));
        }
        let basis = orthonormal_root_basis(datum);
        let walls = datum
            .affine_simple_roots()
            .into_iter()
            .map(|w| AffineRoot::new(basis.iter().map(|b| dot(b, &w.alpha)).collect(), w.level))
            .collect();
        let mut spec = Self::from_walls(walls)?;
        spec.basis = Some(basis);
        Ok(spec)
    }

    /// Local coordinates of an ambient point.
    pub fn to_local(&self, x: &[f64]) -> Vec<f64> {
        match &self.basis {
            Some(b) => b.iter().map(|v| dot(v, x)).collect(),
            None => x.to_vec(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.walls.iter().all(|w| w.eval(x) > 0.0)
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                d = d.max(dist(a, b));
            }
        }
        d
    }

    pub fn generators(&self) -> Vec<AffineIsometry> {
        self.walls.iter().map(AffineIsometry::reflection).collect()
    }
}

fn orthonormal_root_basis(datum: &RootDatum) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for a in datum.simple_roots() {
        let mut v = a.clone();
        for b in &basis {
            let c = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let n = dot(&v, &v).sqrt();
        basis.push(v.into_iter().map(|c| c / n).collect());
    }
    basis
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let ap: Vec<f64> = a.iter().zip(p).map(|(x, y)| y - x).collect();
    let len2 = dot(&ab, &ab);
    let s = if len2 > 0.0 {
        (dot(&ap, &ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q: Vec<f64> = a.iter().zip(&ab).map(|(x, d)| x + s * d).collect();
    dist(p, &q)
}

/// Distance from a point to a closed simplex (interval or triangle).
fn simplex_distance(p: &[f64], verts: &[Vec<f64>]) -> f64 {
    match verts.len() {
        2 => segment_distance(p, &verts[0], &verts[1]),
        3 => {
            let (a, b, c) = (&verts[0], &verts[1], &verts[2]);
            let cross = |o: &[f64], u: &[f64], v: &[f64]| {
                (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0])
            };
            let area = cross(a, b, c);
            let s1 = cross(a, b, p) * area;
            let s2 = cross(b, c, p) * area;
            let s3 = cross(c, a, p) * area;
            if s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0 {
                0.0
            } else {
                segment_distance(p, a, b)
                    .min(segment_distance(p, b, c))
                    .min(segment_distance(p, c, a))
            }
        }
        _ => unreachable!("simplices here have 2 or 3 vertices"),
    }
}

/// Barycentric nodes and weights of a collapsed Gauss product rule on the
/// triangle, weights summing to one. Exact for total degree ≤ 8.
fn triangle_rule() -> &'static [([f64; 3], f64)] {
    static RULE: OnceLock<Vec<([f64; 3], f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let gl = gauss_legendre(5);
        let mut out = Vec::new();
        for &(xu, wu) in gl {
            let u = 0.5 * (xu + 1.0);
            for &(xv, wv) in gl {
                let v = 0.5 * (xv + 1.0);
                // P = v0 + u (v1 − v0) + u v (v2 − v1), Jacobian 2|T| u.
                let bary = [1.0 - u, u * (1.0 - v), u * v];
                out.push((bary, 0.25 * wu * wv * 2.0 * u));
            }
        }
        out
    })
}

struct Gaussian2 {
    x: [f64; 2],
    t: f64,
}

impl Gaussian2 {
    fn density(&self, y: [f64; 2]) -> f64 {
        let d2 = (y[0] - self.x[0]).powi(2) + (y[1] - self.x[1]).powi(2);
        (-d2 / (2.0 * self.t)).exp() / (2.0 * PI * self.t)
    }

    fn rule(&self, v: &[[f64; 2]; 3]) -> f64 {
        let area = 0.5
            * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1])
                - (v[1][1] - v[0][1]) * (v[2][0] - v[0][0]))
                .abs();
        let mut acc = 0.0;
        for (b, w) in triangle_rule() {
            let y = [
                b[0] * v[0][0] + b[1] * v[1][0] + b[2] * v[2][0],
                b[0] * v[0][1] + b[1] * v[1][1] + b[2] * v[2][1],
            ];
            acc += w * self.density(y);
        }
        acc * area
    }

    /// Adaptive integral over a triangle; returns (value, error estimate).
    fn integrate(&self, v: [[f64; 2]; 3], budget: f64) -> (f64, f64) {
        let sigma = self.t.sqrt();
        let mut total = CompensatedSum::new();
        let mut err = 0.0;
        let mut stack = vec![(v, self.rule(&v), budget, 0u32)];
        while let Some((tri, coarse, b, depth)) = stack.pop() {
            // Without a floor, tail triangles chase budgets far below any
            // accuracy the sum can deliver.
            let b = b.max(BUDGET_FLOOR);
            let verts: Vec<Vec<f64>> = tri.iter().map(|p| p.to_vec()).collect();
            let d = simplex_distance(&self.x, &verts);
            // Gaussian mass beyond distance d bounds the whole triangle.
            let mass_bound = (-d * d / (2.0 * self.t)).exp();
            if mass_bound <= 1e-3 * b {
                total.add(coarse);
                err += mass_bound;
                continue;
            }
            let m01 = mid(tri[0], tri[1]);
            let m12 = mid(tri[1], tri[2]);
            let m20 = mid(tri[2], tri[0]);
            let kids = [
                [tri[0], m01, m20],
                [m01, tri[1], m12],
                [m20, m12, tri[2]],
                [m01, m12, m20],
            ];
            let vals: Vec<f64> = kids.iter().map(|k| self.rule(k)).collect();
            let fine: f64 = vals.iter().sum();
            let diam = longest_edge(&tri);
            let resolved = diam <= 2.0 * sigma;
            // Below a few ulps of the panel value the difference is roundoff.
            let floor = 1e-15 * fine.abs();
            if depth >= MAX_TRIANGLE_DEPTH || (resolved && (fine - coarse).abs() <= b.max(floor)) {
                total.add(fine);
                err += (fine - coarse).abs();
            } else {
                for (kid, val) in kids.into_iter().zip(vals) {
                    stack.push((kid, val, 0.25 * b, depth + 1));
                }
            }
        }
        (total.value(), err)
    }
}

fn mid(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn longest_edge(t: &[[f64; 2]; 3]) -> f64 {
    let e = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    e(t[0], t[1]).max(e(t[1], t[2])).max(e(t[2], t[0]))
}

/// Gaussian mass of the interval [a, b] around x, avoiding cancellation.
fn interval_mass(x: f64, t: f64, a: f64, b: f64) -> f64 {
    let s = (2.0 * t).sqrt();
    let (lo, hi) = (a.min(b), a.max(b));
    if lo >= x {
        0.5 * (erfc((lo - x) / s) - erfc((hi - x) / s))
    } else if hi <= x {
        0.5 * (erfc((x - hi) / s) - erfc((x - lo) / s))
    } else {
        0.5 * (erf((hi - x) / s) + erf((x - lo) / s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSumResult {
    pub value: f64,
    pub images: usize,
    /// Bound on the Gaussian mass of all images left out.
    pub neglected_mass: f64,
    pub quadrature_error: f64,
}

/// Group elements whose image alcove meets the ball of radius `cutoff·√t`
/// around `x`, identity first.
pub fn enumerate_images(
    spec: &AlcoveSpec2D,
    x: &[f64],
    t: f64,
    cutoff: f64,
) -> Result<Vec<AffineIsometry>> {
    let radius = cutoff * t.sqrt();
    let gens = spec.generators();
    bfs_group(
        &AffineIsometry::identity(spec.dim()),
        &gens,
        |g| {
            let verts: Vec<Vec<f64>> = spec.vertices.iter().map(|v| g.apply(v)).collect();
            simplex_distance(x, &verts) <= radius
        },
        GROUP_CAP,
    )
}

fn cutoff_for(tol: f64) -> f64 {
    DEFAULT_CUTOFF.max((2.0 * (1.0 / tol).ln()).sqrt() + 1.0)
}

/// Σ_w ε(w) ∫_{w(A)} p_t(x, y) dy for x in local coordinates.
pub fn survival_via_images(
    spec: &AlcoveSpec2D,
    x: &[f64],
    t: f64,
    tol: f64,
) -> Result<ImageSumResult> {
    survival_via_images_with_cutoff(spec, x, t, tol, cutoff_for(tol))
}

pub fn survival_via_images_with_cutoff(
    spec: &AlcoveSpec2D,
    x: &[f64],
    t: f64,
    tol: f64,
    cutoff: f64,
) -> Result<ImageSumResult> {
    if !spec.contains(x) {
        return Err(Error::NotInAlcove);
    }
    if !(t > 0.0) || !t.is_finite() {
        return invalid(format!("image sums need t > 0, got {t}"));
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let images = enumerate_images(spec, x, t, cutoff)?;
    let budget = tol / images.len() as f64;
    let mut acc = CompensatedSum::new();
    let mut qerr = 0.0;
    for g in &images {
        let verts: Vec<Vec<f64>> = spec.vertices.iter().map(|v| g.apply(v)).collect();
        let mass = match spec.dim() {
            1 => interval_mass(x[0], t, verts[0][0], verts[1][0]),
            _ => {
                let tri = [
                    [verts[0][0], verts[0][1]],
                    [verts[1][0], verts[1][1]],
                    [verts[2][0], verts[2][1]],
                ];
                let (v, e) = Gaussian2 { x: [x[0], x[1]], t }.integrate(tri, budget);
                qerr += e;
                v
            }
        };
        acc.add(g.sign as f64 * mass);
    }
    let neglected_mass = match spec.dim() {
        1 => erfc(cutoff / std::f64::consts::SQRT_2),
        _ => (-cutoff * cutoff / 2.0).exp(),
    };
    Ok(ImageSumResult {
        value: acc.value(),
        images: images.len(),
        neglected_mass,
        quadrature_error: qerr,
    })
}

/// Image-sum survival for a rank ≤ 2 root datum at an ambient start point.
pub fn survival_for_datum(
    datum: &RootDatum,
    x: &[f64],
    t: f64,
    tol: f64,
) -> Result<ImageSumResult> {
    datum.require_alcove(x)?;
    let spec = AlcoveSpec2D::from_datum(datum)?;
    survival_via_images(&spec, &spec.to_local(x), t, tol)
}

/// Survival of planar Brownian motion from (u, v) in {1/2 > u > v > 0}.
pub fn block_survival_c2(u: f64, v: f64, t: f64, tol: f64) -> Result<f64> {
    if !(0.5 > u && u > v && v > 0.0) {
        return Err(Error::NotInAlcove);
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    static SPEC: OnceLock<AlcoveSpec2D> = OnceLock::new();
    Ok(survival_via_images(SPEC.get_or_init(AlcoveSpec2D::c2_block), &[u, v], t, tol)?.value)
}

/// Survival of planar Brownian motion from (u, v) in {1 − v > u > v > 0}.
pub fn block_survival_b2(u: f64, v: f64, t: f64, tol: f64) -> Result<f64> {
    if !(1.0 - v > u && u > v && v > 0.0) {
        return Err(Error::NotInAlcove);
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    static SPEC: OnceLock<AlcoveSpec2D> = OnceLock::new();
    Ok(survival_via_images(SPEC.get_or_init(AlcoveSpec2D::b2_block), &[u, v], t, tol)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels1d::{strip_survival, SeriesControl};
    use crate::rootsys::Family;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rule_is_exact_for_degree_eight() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mut acc = 0.0;
        for (b, w) in triangle_rule() {
            let x = b[1] * tri[1][0] + b[2] * tri[2][0];
            let y = b[1] * tri[1][1] + b[2] * tri[2][1];
            acc += w * x.powi(5) * y.powi(3);
        }
        // ∫_T x^5 y^3 = 5! 3! / 10! over the unit right triangle, area 1/2.
        let exact = 120.0 * 6.0 / 3_628_800.0;
        assert!((0.5 * acc - exact).abs() < 1e-16);
    }

    #[test]
    fn triangle_gaussian_mass_is_one_for_the_plane() {
        // Two big triangles covering a square far beyond the kernel width.
        let g = Gaussian2 {
            x: [0.1, -0.2],
            t: 0.01,
        };
        let (a, _) = g.integrate([[-3.0, -3.0], [3.0, -3.0], [3.0, 3.0]], 1e-13);
        let (b, _) = g.integrate([[-3.0, -3.0], [3.0, 3.0], [-3.0, 3.0]], 1e-13);
        assert!((a + b - 1.0).abs() < 1e-12, "{}", a + b - 1.0);
    }

    #[test]
    fn strip_reproduces_the_strip_kernel() {
        let spec = AlcoveSpec2D::strip();
        let ctl = SeriesControl::default();
        for x in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9] {
            for t in [0.05, 0.1, 0.25, 0.5, 1.0, 2.0] {
                let a = survival_via_images(&spec, &[x], t, 1e-13).unwrap().value;
                let b = strip_survival(x, t, &ctl).unwrap().value;
                assert!((a - b).abs() < 1e-10, "x={x} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn type_a1_datum_is_a_scaled_strip() {
        let d = RootDatum::new(Family::A, 2).unwrap();
        let ctl = SeriesControl::default();
        let r = survival_for_datum(&d, &[0.8, 0.3], 0.1, 1e-12).unwrap();
        let want = strip_survival(0.5, 0.2, &ctl).unwrap().value;
        assert!((r.value - want).abs() < 1e-10);
    }

    #[test]
    fn truncation_radius_converges() {
        let spec = AlcoveSpec2D::from_datum(&RootDatum::new(Family::A, 3).unwrap()).unwrap();
        let x = spec.to_local(&[0.6, 0.3, 0.1]);
        let a = survival_via_images_with_cutoff(&spec, &x, 0.3, 1e-10, 6.0).unwrap();
        let b = survival_via_images_with_cutoff(&spec, &x, 0.3, 1e-10, 8.0).unwrap();
        assert!(b.images > a.images);
        assert!((a.value - b.value).abs() <= a.neglected_mass + 2e-10);
    }

    #[test]
    fn image_signs_are_multiplicative() {
        let spec = AlcoveSpec2D::from_datum(&RootDatum::new(Family::G2, 2).unwrap()).unwrap();
        let x = spec.to_local(&RootDatum::new(Family::G2, 2).unwrap().barycenter());
        let imgs = enumerate_images(&spec, &x, 0.05, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = &imgs[rng.random_range(0..imgs.len())];
            let b = &imgs[rng.random_range(0..imgs.len())];
            let ab = a.compose(b);
            assert_eq!(ab.sign, a.sign * b.sign);
            assert!((ab.determinant() - ab.sign as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn blocks_start_at_one_and_vanish_at_the_diagonal() {
        assert_eq!(block_survival_c2(0.35, 0.15, 0.0, 1e-10).unwrap(), 1.0);
        let tiny = block_survival_c2(0.35, 0.15, 1e-5, 1e-10).unwrap();
        assert!((tiny - 1.0).abs() < 1e-10);
        let mut prev = 1.0;
        for gap in [0.1, 0.03, 0.01, 0.001] {
            let v = block_survival_b2(0.3 + gap, 0.3, 0.05, 1e-10).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 0.02);
        assert!(block_survival_c2(0.15, 0.35, 0.1, 1e-10).is_err());
        assert!(block_survival_b2(0.8, 0.3, 0.1, 1e-10).is_err());
    }

    #[test]
    fn rank_three_is_unavailable() {
        let d = RootDatum::new(Family::A, 4).unwrap();
        assert!(matches!(
            AlcoveSpec2D::from_datum(&d),
            Err(Error::MethodUnavailable(_))
        ));
    }

    #[test]
    fn start_outside_is_rejected() {
        let spec = AlcoveSpec2D::c2_block();
        assert!(matches!(
            survival_via_images(&spec, &[0.1, 0.3], 0.1, 1e-10),
            Err(Error::NotInAlcove)
        ));
    }
}
