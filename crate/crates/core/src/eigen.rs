//! Laplacian eigenfunctions on alcoves built from Weyl group orbits.
//!
//! For a weight p, f_p(x) = Σ_w ε(w) e^{2πi⟨x, wp⟩} satisfies Dirichlet
//! conditions on the alcove walls and g_p(x) = Σ_w e^{2πi⟨x, wp⟩} satisfies
//! Neumann conditions. Both have eigenvalue −4π²|p|².

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{dot, norm_sq, solve_linear};
use crate::rootsys::{coroot, AffineIsometry, Family, RootDatum};

/// Largest Weyl group enumerated explicitly.
pub const MAX_GROUP_ORDER: usize = 100_000;

const LATTICE_TOL: f64 = 1e-9;

fn group_for(datum: &RootDatum) -> Result<Arc<Vec<AffineIsometry>>> {
    static CACHE: OnceLock<Mutex<HashMap<(Family, usize), Arc<Vec<AffineIsometry>>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (datum.family, datum.k);
    if let Some(g) = cache.lock().expect("group cache poisoned").get(&key) {
        return Ok(g.clone());
    }
    let g = Arc::new(datum.weyl_group(MAX_GROUP_ORDER)?);
    cache
        .lock()
        .expect("group cache poisoned")
        .insert(key, g.clone());
    Ok(g)
}

/// Fundamental weights: ⟨α_i∨, ω_j⟩ = δ_ij, in the span of the roots.
pub fn fundamental_weights(datum: &RootDatum) -> Result<Vec<Vec<f64>>> {
    let simple = datum.simple_roots();
    let r = simple.len();
    let cor: Vec<Vec<f64>> = simple.iter().map(|a| coroot(a)).collect();
    let m: Vec<Vec<f64>> = (0..r)
        .map(|i| (0..r).map(|j| dot(&cor[i], &simple[j])).collect())
        .collect();
    (0..r)
        .map(|j| {
            let rhs: Vec<f64> = (0..r).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            let c = solve_linear(&m, &rhs)
                .ok_or_else(|| Error::InvalidInput("singular Cartan system".into()))?;
            let mut w = vec![0.0; datum.ambient_dim];
            for (ci, a) in c.iter().zip(simple) {
                for (wv, av) in w.iter_mut().zip(a) {
                    *wv += ci * av;
                }
            }
            Ok(w)
        })
        .collect()
}

/// A weight together with its signed Weyl orbit.
#[derive(Debug, Clone)]
pub struct Weight {
    pub p: Vec<f64>,
    pub datum: RootDatum,
    orbit: Vec<(Vec<f64>, f64)>,
    group: Arc<Vec<AffineIsometry>>,
}

impl Weight {
    /// Accepts p when ⟨α∨, p⟩ is an integer for every root α.
    pub fn new(datum: &RootDatum, p: Vec<f64>) -> Result<Self> {
        if p.len() != datum.ambient_dim || !p.iter().all(|v| v.is_finite()) {
            return invalid(format!(
                "weight needs {} finite coordinates",
                datum.ambient_dim
            ));
        }
        if datum.lives_in_sum_zero_plane() && p.iter().sum::<f64>().abs() > LATTICE_TOL {
            return invalid("weight must lie in the sum-zero plane");
        }
        for a in datum.positive_roots() {
            let v = dot(&coroot(a), &p);
            if (v - v.round()).abs() > LATTICE_TOL {
                return invalid(format!("weight {p:?} is not in the weight lattice"));
            }
        }
        let group = group_for(datum)?;
        let orbit = group
            .iter()
            .map(|w| (w.apply_linear(&p), w.sign as f64))
            .collect();
        Ok(Self {
            p,
            datum: datum.clone(),
            orbit,
            group,
        })
    }

    /// Σ_j a_j ω_j.
    pub fn from_fundamental(datum: &RootDatum, coeffs: &[i64]) -> Result<Self> {
        let omegas = fundamental_weights(datum)?;
        if coeffs.len() != omegas.len() {
            return invalid(format!(
                "expected {} coefficients, got {}",
                omegas.len(),
                coeffs.len()
            ));
        }
        let mut p = vec![0.0; datum.ambient_dim];
        for (&a, w) in coeffs.iter().zip(&omegas) {
            for (pv, wv) in p.iter_mut().zip(w) {
                *pv += a as f64 * wv;
            }
        }
        Self::new(datum, p)
    }

    /// Half the sum of the positive roots.
    pub fn rho(datum: &RootDatum) -> Result<Self> {
        Self::from_fundamental(datum, &vec![1; datum.rank()])
    }

    /// Integer coordinates ⟨α_i∨, p⟩ in the fundamental-weight basis.
    pub fn dynkin_labels(&self) -> Vec<i64> {
        self.datum
            .simple_roots()
            .iter()
            .map(|a| dot(&coroot(a), &self.p).round() as i64)
            .collect()
    }

    /// All Dynkin labels positive: p lies in the open chamber.
    pub fn is_strictly_dominant(&self) -> bool {
        self.dynkin_labels().iter().all(|&a| a > 0)
    }

    pub fn is_dominant(&self) -> bool {
        self.dynkin_labels().iter().all(|&a| a >= 0)
    }

    pub fn is_zero(&self) -> bool {
        self.p.iter().all(|v| v.abs() < LATTICE_TOL)
    }

    pub fn orbit(&self) -> &[(Vec<f64>, f64)] {
        &self.orbit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenfunctionValue {
    pub re: f64,
    pub im: f64,
}

impl EigenfunctionValue {
    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

fn orbit_sum(w: &Weight, x: &[f64], signed: bool) -> EigenfunctionValue {
    let (mut re, mut im) = (0.0, 0.0);
    for (wp, eps) in &w.orbit {
        let theta = 2.0 * PI * dot(x, wp);
        let s = if signed { *eps } else { 1.0 };
        re += s * theta.cos();
        im += s * theta.sin();
    }
    EigenfunctionValue { re, im }
}

fn check_point(w: &Weight, x: &[f64]) -> Result<()> {
    if x.len() != w.datum.ambient_dim || !x.iter().all(|v| v.is_finite()) {
        return invalid(format!(
            "point needs {} finite coordinates",
            w.datum.ambient_dim
        ));
    }
    Ok(())
}

/// Dirichlet eigenfunction Σ_w ε(w) e^{2πi⟨x, wp⟩}; p strictly dominant.
pub fn f_p(w: &Weight, x: &[f64]) -> Result<EigenfunctionValue> {
    check_point(w, x)?;
    if !w.is_strictly_dominant() {
        return invalid("Dirichlet eigenfunctions need a strictly dominant weight");
    }
    Ok(orbit_sum(w, x, true))
}

/// Neumann eigenfunction Σ_w e^{2πi⟨x, wp⟩}; p dominant.
pub fn g_p(w: &Weight, x: &[f64]) -> Result<EigenfunctionValue> {
    check_point(w, x)?;
    if !w.is_dominant() {
        return invalid("Neumann eigenfunctions need a dominant weight");
    }
    Ok(orbit_sum(w, x, false))
}

pub fn eigenvalue(w: &Weight) -> f64 {
    -4.0 * PI * PI * norm_sq(&w.p)
}

/// A group element sending p to −p.
#[derive(Debug, Clone, PartialEq)]
pub struct RealWitness {
    pub element: AffineIsometry,
    pub sign: i8,
}

/// Some(witness) exactly when the eigenfunctions of p are real up to a
/// constant factor.
pub fn is_real(w: &Weight) -> Option<RealWitness> {
    let neg: Vec<f64> = w.p.iter().map(|v| -v).collect();
    w.orbit
        .iter()
        .position(|(wp, _)| {
            wp.iter()
                .zip(&neg)
                .all(|(a, b)| (a - b).abs() < LATTICE_TOL)
        })
        .map(|i| RealWitness {
            element: w.group[i].clone(),
            sign: w.group[i].sign,
        })
}

/// Σ_w ε(w) cs(2π⟨x, wp⟩) with cs = sin when the witness is odd and cos
/// when it is even; equals f_p up to a constant.
pub fn real_form_f(w: &Weight, x: &[f64]) -> Result<f64> {
    check_point(w, x)?;
    let Some(wit) = is_real(w) else {
        return Err(Error::MethodUnavailable("weight has no real form".into()));
    };
    Ok(w.orbit
        .iter()
        .map(|(wp, eps)| {
            let theta = 2.0 * PI * dot(x, wp);
            eps * if wit.sign < 0 {
                theta.sin()
            } else {
                theta.cos()
            }
        })
        .sum())
}

/// Σ_w cos(2π⟨x, wp⟩), the real part of g_p.
pub fn real_form_g(w: &Weight, x: &[f64]) -> Result<f64> {
    check_point(w, x)?;
    if is_real(w).is_none() {
        return Err(Error::MethodUnavailable("weight has no real form".into()));
    }
    Ok(w.orbit
        .iter()
        .map(|(wp, _)| (2.0 * PI * dot(x, wp)).cos())
        .sum())
}

/// Π_{α>0} sin(π⟨x, α⟩), positive on the open alcove.
pub fn product_eigenfunction(datum: &RootDatum, x: &[f64]) -> f64 {
    datum
        .positive_roots()
        .iter()
        .map(|a| (PI * dot(a, x)).sin())
        .product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotSpotsReport {
    pub passed: bool,
    pub interior_max: f64,
    pub boundary_sup: f64,
    /// boundary_sup − interior_max.
    pub margin: f64,
}

/// Samples the real Neumann eigenfunction of p inside the alcove and on its
/// walls, and checks that the interior stays below the boundary supremum.
pub fn hot_spots_check(w: &Weight, samples: usize, seed: u64) -> Result<HotSpotsReport> {
    if w.is_zero() {
        return invalid("the zero weight gives a constant eigenfunction");
    }
    if is_real(w).is_none() {
        return Err(Error::MethodUnavailable("weight has no real form".into()));
    }
    if samples == 0 {
        return invalid("need at least one sample");
    }
    let datum = &w.datum;
    let verts = datum.alcove_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut interior_max = f64::NEG_INFINITY;
    for _ in 0..samples {
        let x = datum.random_alcove_point(&mut rng);
        interior_max = interior_max.max(real_form_g(w, &x)?);
    }
    let mut boundary_sup = f64::NEG_INFINITY;
    for v in &verts {
        boundary_sup = boundary_sup.max(real_form_g(w, v)?);
    }
    // Each facet is the hull of all vertices but one; the walls are sampled
    // ten times more densely than the interior.
    for _ in 0..10 * samples {
        let skip = rng.random_range(0..verts.len());
        let wts: Vec<f64> = (0..verts.len())
            .map(|i| {
                if i == skip {
                    0.0
                } else {
                    -rng.random::<f64>().max(1e-300).ln()
                }
            })
            .collect();
        let total: f64 = wts.iter().sum();
        let x: Vec<f64> = (0..datum.ambient_dim)
            .map(|c| verts.iter().zip(&wts).map(|(v, a)| v[c] * a / total).sum())
            .collect();
        boundary_sup = boundary_sup.max(real_form_g(w, &x)?);
    }
    let margin = boundary_sup - interior_max;
    Ok(HotSpotsReport {
        passed: margin > 0.0,
        interior_max,
        boundary_sup,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rootsys::AffineIsometry;

    fn laplacian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..x.len() {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            acc += (f(&p) - 2.0 * f(x) + f(&m)) / (h * h);
        }
        acc
    }

    fn data() -> Vec<RootDatum> {
        [
            (Family::A, 3),
            (Family::A, 4),
            (Family::B, 2),
            (Family::B, 3),
            (Family::C, 2),
            (Family::C, 3),
            (Family::D, 4),
            (Family::G2, 2),
        ]
        .into_iter()
        .map(|(f, k)| RootDatum::new(f, k).unwrap())
        .collect()
    }

    #[test]
    fn fundamental_weights_are_dual_to_coroots() {
        for d in data() {
            let w = fundamental_weights(&d).unwrap();
            for (i, a) in d.simple_roots().iter().enumerate() {
                for (j, om) in w.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(&coroot(a), om) - expect).abs() < 1e-12);
                }
            }
            let rho = Weight::rho(&d).unwrap();
            let half: Vec<f64> = (0..d.ambient_dim)
                .map(|c| d.positive_roots().iter().map(|a| a[c]).sum::<f64>() / 2.0)
                .collect();
            assert!(rho.p.iter().zip(&half).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn dirichlet_vanishes_on_walls_and_is_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in data() {
            let w = Weight::from_fundamental(
                &d,
                &vec![1; d.rank()]
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v + i as i64)
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            let verts = d.alcove_vertices();
            for _ in 0..100 {
                let skip = rng.random_range(0..verts.len());
                let wts: Vec<f64> = (0..verts.len())
                    .map(|i| if i == skip { 0.0 } else { rng.random::<f64>() })
                    .collect();
                let s: f64 = wts.iter().sum();
                let x: Vec<f64> = (0..d.ambient_dim)
                    .map(|c| verts.iter().zip(&wts).map(|(v, a)| v[c] * a / s).sum())
                    .collect();
                assert!(f_p(&w, &x).unwrap().norm() < 1e-10);
            }
            for wall in d.affine_simple_roots() {
                let s = AffineIsometry::reflection(&wall);
                let x = d.random_alcove_point(&mut rng);
                let a = f_p(&w, &x).unwrap();
                let b = f_p(&w, &s.apply(&x)).unwrap();
                assert!((a.re + b.re).abs() < 1e-10 && (a.im + b.im).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eigenvalues_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in data() {
            let w = Weight::from_fundamental(&d, &vec![1; d.rank()]).unwrap();
            let lam = eigenvalue(&w);
            assert!(lam < 0.0);
            let x = d.random_alcove_point(&mut rng);
            for signed in [true, false] {
                let f = |y: &[f64]| orbit_sum(&w, y, signed).re;
                let g = |y: &[f64]| orbit_sum(&w, y, signed).im;
                for (func, val) in [(&f as &dyn Fn(&[f64]) -> f64, f(&x)), (&g, g(&x))] {
                    if val.abs() > 1e-3 {
                        assert!(
                            ((laplacian(func, &x, 1e-3) - lam * val) / (lam * val)).abs() < 1e-4
                        );
                    }
                }
            }
        }
        let zero = Weight::new(&RootDatum::new(Family::A, 3).unwrap(), vec![0.0; 3]).unwrap();
        assert_eq!(eigenvalue(&zero), 0.0);
        assert_eq!(g_p(&zero, &[0.1, 0.0, -0.1]).unwrap().re, 6.0);
    }

    #[test]
    fn a2_rho_eigenvalue_is_lowest_level() {
        let d = RootDatum::new(Family::A, 3).unwrap();
        let rho = Weight::rho(&d).unwrap();
        assert!((eigenvalue(&rho) + 8.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn product_is_proportional_to_rho_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in data() {
            let rho = Weight::rho(&d).unwrap();
            let x0 = d.barycenter();
            let f0 = f_p(&rho, &x0).unwrap();
            let h0 = product_eigenfunction(&d, &x0);
            for _ in 0..50 {
                // Pull samples toward the barycenter so the product stays well
                // above rounding level.
                let r = d.random_alcove_point(&mut rng);
                let x: Vec<f64> = r.iter().zip(&x0).map(|(a, b)| 0.5 * (a + b)).collect();
                let h = product_eigenfunction(&d, &x);
                assert!(h > 0.0);
                let f = f_p(&rho, &x).unwrap();
                let (rr, ri) = (f.re / h - f0.re / h0, f.im / h - f0.im / h0);
                assert!(
                    rr.hypot(ri) < 1e-9 * f0.norm() / h0,
                    "{}{}: h={h} spread={}",
                    d.family,
                    d.k,
                    rr.hypot(ri) * h0 / f0.norm()
                );
            }
        }
    }

    #[test]
    fn product_laplacian_for_type_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 2..=5 {
            let d = RootDatum::new(Family::A, k).unwrap();
            let x = d.random_alcove_point(&mut rng);
            let h = |y: &[f64]| product_eigenfunction(&d, y);
            let expect = -PI * PI * (k * (k - 1) * (k + 1)) as f64 / 3.0;
            let got = laplacian(h, &x, 1e-4) / h(&x);
            assert!(
                ((got - expect) / expect).abs() < 1e-5,
                "k={k}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn realness_classification() {
        let a2 = RootDatum::new(Family::A, 3).unwrap();
        for (a1, a2c) in [(1, 1), (2, 2), (1, 2), (3, 0), (0, 0)] {
            let w = Weight::from_fundamental(&a2, &[a1, a2c]).unwrap();
            assert_eq!(is_real(&w).is_some(), a1 == a2c);
        }
        for d in data().into_iter().filter(|d| d.family != Family::A) {
            let w =
                Weight::from_fundamental(&d, &(1..=d.rank() as i64).collect::<Vec<_>>()).unwrap();
            assert!(is_real(&w).is_some());
        }
    }

    #[test]
    fn real_forms_match_up_to_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in data() {
            let w = Weight::rho(&d).unwrap();
            if is_real(&w).is_none() {
                continue;
            }
            let x0 = d.barycenter();
            let f0 = f_p(&w, &x0).unwrap();
            let r0 = real_form_f(&w, &x0).unwrap();
            for _ in 0..20 {
                let x = d.random_alcove_point(&mut rng);
                let f = f_p(&w, &x).unwrap();
                let r = real_form_f(&w, &x).unwrap();
                assert!(
                    (f.re * r0 - f0.re * r).abs() < 1e-9 && (f.im * r0 - f0.im * r).abs() < 1e-9
                );
            }
        }
    }

    #[test]
    fn hot_spots_hold_on_samples() {
        for (fam, k) in [(Family::G2, 2), (Family::C, 2), (Family::A, 3)] {
            let d = RootDatum::new(fam, k).unwrap();
            let mut labels = vec![0; d.rank()];
            labels[0] = 1;
            if fam == Family::A {
                labels = vec![1; d.rank()];
            }
            let w = Weight::from_fundamental(&d, &labels).unwrap();
            let rep = hot_spots_check(&w, 2000, 11).unwrap();
            assert!(rep.passed, "{fam}{k}: {rep:?}");
        }
        let zero = Weight::new(&RootDatum::new(Family::C, 2).unwrap(), vec![0.0; 2]).unwrap();
        assert!(hot_spots_check(&zero, 10, 1).is_err());
    }

    #[test]
    fn rejects_non_weights() {
        let d = RootDatum::new(Family::A, 3).unwrap();
        assert!(Weight::new(&d, vec![0.3, -0.3, 0.0]).is_err());
        assert!(Weight::new(&d, vec![1.0, 0.0, 0.0]).is_err());
    }
}
