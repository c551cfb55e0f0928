//! Named self-check suites, runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::combinat::{pfaffian, sign_sum, SkewMatrix};
use crate::debruijn::{lhs_alternating_integral, rhs, QuadratureControl, TestFunction};
use crate::eigen::{eigenvalue, f_p, is_real, Weight};
use crate::error::{invalid, Result};
use crate::exitprob::{survival, survival_g2, SurvivalQuery};
use crate::expected::{closed_form_expected, expected_exit_a};
use crate::imagesum::survival_for_datum;
use crate::kernels1d::{
    strip_survival, strip_survival_images, strip_survival_theta,
    strip_survival_top_weighted_images, strip_survival_top_weighted_theta, top_exit_after,
    SeriesControl,
};
use crate::montecarlo::{mc_survival, SimConfig};
use crate::numeric::integrate_adaptive;
use crate::rootsys::{lattice_shell_sum, Family, RootDatum};

/// Positions and times of the kernel comparison grid.
pub const GRID_X: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const GRID_T: [f64; 6] = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0];

pub const SUITES: [&str; 8] = [
    "kernels",
    "combinatorics",
    "expected",
    "oracles",
    "eigen",
    "debruijn",
    "montecarlo",
    "quick",
];

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed error against the tolerance, or a short note.
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

fn check(name: &str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: worst <= tol,
        detail: format!("max error {worst:.3e} (tol {tol:.0e})"),
    }
}

fn failed(name: &str, e: impl std::fmt::Display) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: false,
        detail: e.to_string(),
    }
}

fn guard(name: &str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    f().unwrap_or_else(|e| failed(name, e))
}

fn kernels() -> Vec<CheckResult> {
    let c = SeriesControl::default();
    vec![
        guard("theta and image forms agree on the grid", || {
            let mut worst: f64 = 0.0;
            for x in GRID_X {
                for t in GRID_T {
                    worst = worst.max(
                        (strip_survival_theta(x, t, &c)?.value
                            - strip_survival_images(x, t, &c)?.value)
                            .abs(),
                    );
                    worst = worst.max(
                        (strip_survival_top_weighted_theta(x, t, &c)?.value
                            - strip_survival_top_weighted_images(x, t, &c)?.value)
                            .abs(),
                    );
                }
            }
            Ok(check(
                "theta and image forms agree on the grid",
                worst,
                1e-10,
            ))
        }),
        guard("top-weighted kernel splits by exit edge", || {
            let mut worst: f64 = 0.0;
            for x in GRID_X {
                for t in GRID_T {
                    let psi = strip_survival_top_weighted_theta(x, t, &c)?.value;
                    let phi = strip_survival(x, t, &c)?.value;
                    let early_top = x - top_exit_after(x, t / 2.0, &c)?.value;
                    worst = worst.max((psi - phi - 2.0 * early_top).abs());
                }
            }
            Ok(check(
                "top-weighted kernel splits by exit edge",
                worst,
                1e-10,
            ))
        }),
        guard("late top exit integrates to x(1-x^2)/6", || {
            let mut worst: f64 = 0.0;
            for x in [0.2, 0.5, 0.8] {
                let r = integrate_adaptive(
                    |t| {
                        top_exit_after(x, t, &c)
                            .map(|v| v.value)
                            .unwrap_or(f64::NAN)
                    },
                    0.0,
                    40.0,
                    1e-11,
                );
                worst = worst.max((r.value - x * (1.0 - x * x) / 6.0).abs());
            }
            Ok(check("late top exit integrates to x(1-x^2)/6", worst, 1e-8))
        }),
    ]
}

fn random_skew(rng: &mut ChaCha8Rng, n: usize) -> SkewMatrix {
    SkewMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn combinatorics(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        guard("pfaffian squared equals determinant", || {
            let mut worst: f64 = 0.0;
            for i in 0..50 {
                let m = random_skew(&mut rng, 2 + 2 * (i % 5));
                let n = m.n();
                let dense = m.to_dense();
                let det = nalgebra::DMatrix::from_fn(n, n, |r, c| dense[r][c]).determinant();
                let pf = pfaffian(&m)?;
                worst = worst.max((pf * pf - det).abs() / det.abs().max(1e-300));
            }
            Ok(check("pfaffian squared equals determinant", worst, 1e-9))
        }),
        guard("pfaffian of standard blocks is one", || {
            let mut worst: f64 = 0.0;
            for n in [2, 4, 6, 8, 10] {
                let m =
                    SkewMatrix::from_fn(n, |i, j| if i % 2 == 0 && j == i + 1 { 1.0 } else { 0.0 });
                worst = worst.max((pfaffian(&m)? - 1.0).abs());
            }
            Ok(check("pfaffian of standard blocks is one", worst, 0.0))
        }),
        guard("crossing signs sum to one", || {
            let mut worst: f64 = 0.0;
            for k in 2..=10 {
                worst = worst.max((sign_sum(k)? - 1).abs() as f64);
            }
            Ok(check("crossing signs sum to one", worst, 0.0))
        }),
        guard("lattice shell sums vanish", || {
            let sets: [Vec<Vec<i64>>; 3] = [
                vec![vec![1, -1, 0, 0, 0, 0]],
                vec![vec![1, -1, 0, 0, 0, 0], vec![0, 0, 1, -1, 0, 0]],
                vec![
                    vec![1, -1, 0, 0, 0, 0],
                    vec![0, 0, 1, -1, 0, 0],
                    vec![0, 0, 0, 0, 1, -1],
                ],
            ];
            let mut worst: f64 = 0.0;
            for a in &sets {
                for m in 1..=4 {
                    worst = worst.max(lattice_shell_sum(a, m)?.abs() as f64);
                }
            }
            Ok(check("lattice shell sums vanish", worst, 0.0))
        }),
    ]
}

fn expected(seed: u64) -> Vec<CheckResult> {
    let c = SeriesControl {
        tol: 1e-10,
        ..SeriesControl::default()
    };
    vec![
        guard("interval midpoint expected exit", || {
            Ok(check(
                "interval midpoint expected exit",
                (expected_exit_a(&[0.25, -0.25], &c)?.value - 0.125).abs(),
                1e-8,
            ))
        }),
        guard("triangle expected exit", || {
            Ok(check(
                "triangle expected exit",
                (expected_exit_a(&[0.6, 0.3, 0.1], &c)?.value - 0.03).abs(),
                1e-8,
            ))
        }),
        guard("series matches closed forms", || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst: f64 = 0.0;
            for k in [2, 3] {
                let d = RootDatum::new(Family::A, k)?;
                for _ in 0..5 {
                    let x = d.random_alcove_point(&mut rng);
                    worst = worst
                        .max((expected_exit_a(&x, &c)?.value - closed_form_expected(&x)?).abs());
                }
            }
            Ok(check("series matches closed forms", worst, 1e-8))
        }),
    ]
}

fn oracles(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (family, k, name) in [
        (Family::A, 3, "triangle survival matches image sum"),
        (Family::G2, 2, "G2 survival matches image sum"),
    ] {
        out.push(guard(name, || {
            let d = RootDatum::new(family, k)?;
            let mut worst: f64 = 0.0;
            for _ in 0..3 {
                let x = d.random_alcove_point(&mut rng);
                let t = rng.random_range(0.02..1.0);
                let closed = if family == Family::G2 {
                    survival_g2(&x, t, &SeriesControl::default())?.value
                } else {
                    survival(&SurvivalQuery::new(d.clone(), x.clone(), t)?)?.value
                };
                worst = worst.max((closed - survival_for_datum(&d, &x, t, 1e-9)?.value).abs());
            }
            Ok(check(name, worst, 1e-6))
        }));
    }
    out
}

fn eigen(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        guard("Dirichlet eigenfunctions vanish on walls", || {
            let mut worst: f64 = 0.0;
            for (family, k) in [(Family::A, 3), (Family::C, 2), (Family::G2, 2)] {
                let d = RootDatum::new(family, k)?;
                let w = Weight::rho(&d)?;
                let verts = d.alcove_vertices();
                for _ in 0..20 {
                    let skip = rng.random_range(0..verts.len());
                    let wts: Vec<f64> = (0..verts.len())
                        .map(|i| if i == skip { 0.0 } else { rng.random() })
                        .collect();
                    let s: f64 = wts.iter().sum();
                    let x: Vec<f64> = (0..d.ambient_dim)
                        .map(|c| verts.iter().zip(&wts).map(|(v, a)| v[c] * a / s).sum())
                        .collect();
                    worst = worst.max(f_p(&w, &x)?.norm());
                }
            }
            Ok(check(
                "Dirichlet eigenfunctions vanish on walls",
                worst,
                1e-10,
            ))
        }),
        guard("eigenvalue matches finite differences", || {
            let d = RootDatum::new(Family::B, 2)?;
            let w = Weight::from_fundamental(&d, &[1, 2])?;
            let x = d.random_alcove_point(&mut rng);
            let h = 1e-3;
            let lam = eigenvalue(&w);
            let at = f_p(&w, &x)?;
            let mut lap = (0.0, 0.0);
            for i in 0..x.len() {
                let mut p = x.clone();
                let mut m = x.clone();
                p[i] += h;
                m[i] -= h;
                let (fp, fm) = (f_p(&w, &p)?, f_p(&w, &m)?);
                lap.0 += (fp.re - 2.0 * at.re + fm.re) / (h * h);
                lap.1 += (fp.im - 2.0 * at.im + fm.im) / (h * h);
            }
            let err = (lap.0 - lam * at.re).hypot(lap.1 - lam * at.im) / (lam.abs() * at.norm());
            Ok(check("eigenvalue matches finite differences", err, 1e-4))
        }),
        guard("A2 realness follows label symmetry", || {
            let d = RootDatum::new(Family::A, 3)?;
            let mut bad = 0.0;
            for (a, b) in [(1, 1), (1, 2), (2, 1), (3, 3), (0, 4)] {
                if is_real(&Weight::from_fundamental(&d, &[a, b])?).is_some() != (a == b) {
                    bad += 1.0;
                }
            }
            Ok(check("A2 realness follows label symmetry", bad, 0.0))
        }),
    ]
}

fn debruijn() -> Vec<CheckResult> {
    let ctl = QuadratureControl::default();
    let g = TestFunction::gaussian;
    let batteries: [(&str, Vec<TestFunction>); 2] = [
        ("two-function identity", vec![g(0.0, 1.0), g(0.5, 1.0)]),
        (
            "three-function identity",
            vec![g(-0.3, 0.25), g(0.0, 0.25), g(0.4, 0.25)],
        ),
    ];
    batteries
        .into_iter()
        .map(|(name, fs)| {
            guard(name, || {
                let l = lhs_alternating_integral(&fs, &ctl)?.value;
                Ok(check(name, (l - rhs(&fs, &ctl)?.value).abs(), 1e-4))
            })
        })
        .collect()
}

fn montecarlo(seed: u64) -> Vec<CheckResult> {
    vec![
        guard("simulation matches triangle survival", || {
            let d = RootDatum::new(Family::A, 3)?;
            let x = vec![0.6, 0.3, 0.1];
            let cfg = SimConfig {
                paths: 20_000,
                horizon: 1.0,
                seed,
                bridge_correction: true,
                ..SimConfig::default()
            };
            let e = mc_survival(&d, &x, 0.02, &cfg)?;
            let exact = survival(&SurvivalQuery::new(d, x, 0.02)?)?.value;
            let dev = (e.mean - exact).abs();
            Ok(CheckResult {
                name: "simulation matches triangle survival".into(),
                passed: dev <= 3.0 * e.stderr + 0.005,
                detail: format!("deviation {dev:.3e}, stderr {:.3e}", e.stderr),
            })
        }),
        guard("simulation is independent of worker count", || {
            let d = RootDatum::new(Family::C, 2)?;
            let x = d.barycenter();
            let base = SimConfig {
                paths: 4096,
                dt: 1e-3,
                horizon: 1.0,
                seed,
                ..SimConfig::default()
            };
            let a = mc_survival(&d, &x, 0.05, &base)?;
            let b = mc_survival(&d, &x, 0.05, &SimConfig { workers: 4, ..base })?;
            Ok(CheckResult {
                name: "simulation is independent of worker count".into(),
                passed: a == b,
                detail: format!("{} vs {}", a.mean, b.mean),
            })
        }),
    ]
}

/// Runs the named suite; `quick` runs every suite except the slow
/// simulation and integral-identity ones.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let checks = match name {
        "kernels" => kernels(),
        "combinatorics" => combinatorics(seed),
        "expected" => expected(seed),
        "oracles" => oracles(seed),
        "eigen" => eigen(seed),
        "debruijn" => debruijn(),
        "montecarlo" => montecarlo(seed),
        "quick" => {
            let mut all = kernels();
            all.extend(combinatorics(seed));
            all.extend(expected(seed));
            all.extend(oracles(seed));
            all.extend(eigen(seed));
            all
        }
        other => {
            return invalid(format!(
                "unknown suite '{other}', expected one of {}",
                SUITES.join(", ")
            ))
        }
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport {
        suite: name.into(),
        passed,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suites_pass() {
        for name in ["kernels", "combinatorics", "expected", "oracles", "eigen"] {
            let r = run_suite(name, 7).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(run_suite("nope", 0).is_err());
    }
}
