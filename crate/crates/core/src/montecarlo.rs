//! Monte Carlo exit times of Euler-discretized Brownian motion.
//!
//! Path i draws from a ChaCha stream keyed by (seed, i), and paths are
//! reduced in fixed chunks in index order, so results do not depend on the
//! number of worker threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::norm_sq;
use crate::rootsys::{AffineRoot, Family, RootDatum};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub paths: usize,
    pub dt: f64,
    /// Longest simulated time; exit times are censored here.
    pub horizon: f64,
    pub seed: u64,
    pub workers: usize,
    /// Also kill a path when the Brownian bridge between two steps would
    /// have crossed a wall. Off by default: plain Euler.
    pub bridge_correction: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            dt: 1e-4,
            horizon: 2.0,
            seed: 0,
            workers: 1,
            bridge_correction: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return invalid("need at least one path");
        }
        if !(self.dt > 0.0) || !(self.horizon > self.dt) || !self.horizon.is_finite() {
            return invalid("need 0 < dt < horizon");
        }
        if self.workers == 0 {
            return invalid("need at least one worker");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over √paths.
    pub stderr: f64,
    pub paths: usize,
    pub exited_fraction: f64,
}

#[derive(Default, Clone, Copy)]
struct Moments {
    sum: f64,
    sumsq: f64,
    exited: usize,
    n: usize,
}

impl Moments {
    fn merge(mut self, o: Moments) -> Moments {
        self.sum += o.sum;
        self.sumsq += o.sumsq;
        self.exited += o.exited;
        self.n += o.n;
        self
    }

    fn estimate(&self) -> MCEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sumsq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        MCEstimate {
            mean,
            stderr: (var / n).sqrt(),
            paths: self.n,
            exited_fraction: self.exited as f64 / n,
        }
    }
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs `sample(rng) -> (value, exited)` once per path.
fn run_paths<F>(cfg: &SimConfig, sample: F) -> Result<MCEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> (f64, bool) + Sync,
{
    let chunks = cfg.paths.div_ceil(CHUNK);
    let work = || -> Vec<Moments> {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut m = Moments::default();
                for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.paths) {
                    let (v, exited) = sample(&mut path_rng(cfg.seed, i));
                    m.sum += v;
                    m.sumsq += v * v;
                    m.exited += exited as usize;
                    m.n += 1;
                }
                m
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let parts = pool.install(work);
    Ok(parts
        .into_iter()
        .fold(Moments::default(), Moments::merge)
        .estimate())
}

/// Polytope {y : λ(y) > 0 for every wall λ}.
#[derive(Debug, Clone)]
pub struct Polytope {
    walls: Vec<AffineRoot>,
    /// |α|² per wall, the clock rate of ⟨X, α⟩.
    rates: Vec<f64>,
}

impl Polytope {
    pub fn new(walls: Vec<AffineRoot>) -> Result<Self> {
        if walls.is_empty() {
            return invalid("polytope needs at least one wall");
        }
        let dim = walls[0].alpha.len();
        if walls
            .iter()
            .any(|w| w.alpha.len() != dim || norm_sq(&w.alpha) == 0.0)
        {
            return invalid("walls need nonzero normals of equal dimension");
        }
        let rates = walls.iter().map(|w| norm_sq(&w.alpha)).collect();
        Ok(Self { walls, rates })
    }

    pub fn alcove(datum: &RootDatum) -> Self {
        Self::new(datum.affine_simple_roots()).expect("alcove walls are valid")
    }

    /// The interval (0, 1).
    pub fn unit_strip() -> Self {
        Self::new(vec![
            AffineRoot::new(vec![1.0], 0),
            AffineRoot::new(vec![-1.0], -1),
        ])
        .expect("valid walls")
    }

    pub fn dim(&self) -> usize {
        self.walls[0].alpha.len()
    }

    pub fn walls(&self) -> &[AffineRoot] {
        &self.walls
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.walls.iter().all(|w| w.eval(x) > 0.0)
    }

    /// Steps until the walk leaves, or None if it survives `max_steps`.
    fn exit_step<R: Rng>(
        &self,
        x0: &[f64],
        dt: f64,
        max_steps: u64,
        bridge: bool,
        rng: &mut R,
    ) -> Option<u64> {
        let sd = dt.sqrt();
        let mut x = x0.to_vec();
        let mut prev: Vec<f64> = self.walls.iter().map(|w| w.eval(&x)).collect();
        let mut cur = prev.clone();
        for step in 1..=max_steps {
            for v in x.iter_mut() {
                *v += sd * rng.sample::<f64, _>(StandardNormal);
            }
            for (c, w) in cur.iter_mut().zip(&self.walls) {
                *c = w.eval(&x);
            }
            if cur.iter().any(|&c| c <= 0.0) {
                return Some(step);
            }
            if bridge {
                for ((&a, &b), rate) in prev.iter().zip(&cur).zip(&self.rates) {
                    let p = (-2.0 * a * b / (rate * dt)).exp();
                    if rng.random::<f64>() < p {
                        return Some(step);
                    }
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        None
    }
}

fn steps_for(t: f64, dt: f64) -> u64 {
    (t / dt).round() as u64
}

/// Fraction of paths from `x` still inside `domain` at time `t`.
pub fn mc_survival_in(domain: &Polytope, x: &[f64], t: f64, cfg: &SimConfig) -> Result<MCEstimate> {
    cfg.validate()?;
    if x.len() != domain.dim() || !domain.contains(x) {
        return Err(Error::NotInAlcove);
    }
    if !(t >= 0.0) || t > cfg.horizon {
        return invalid(format!("need 0 <= t <= horizon, got t = {t}"));
    }
    if t == 0.0 {
        return Ok(MCEstimate {
            mean: 1.0,
            stderr: 0.0,
            paths: cfg.paths,
            exited_fraction: 0.0,
        });
    }
    let n = steps_for(t, cfg.dt);
    run_paths(cfg, |rng| {
        match domain.exit_step(x, cfg.dt, n, cfg.bridge_correction, rng) {
            Some(_) => (0.0, true),
            None => (1.0, false),
        }
    })
}

/// Survival in the fundamental alcove of `datum`.
pub fn mc_survival(datum: &RootDatum, x: &[f64], t: f64, cfg: &SimConfig) -> Result<MCEstimate> {
    datum.require_alcove(x)?;
    mc_survival_in(&Polytope::alcove(datum), x, t, cfg)
}

/// Mean exit time, with paths still inside at the horizon counted at the
/// horizon.
pub fn mc_expected_exit_in(domain: &Polytope, x: &[f64], cfg: &SimConfig) -> Result<MCEstimate> {
    cfg.validate()?;
    if x.len() != domain.dim() || !domain.contains(x) {
        return Err(Error::NotInAlcove);
    }
    let n = steps_for(cfg.horizon, cfg.dt);
    run_paths(cfg, |rng| {
        match domain.exit_step(x, cfg.dt, n, cfg.bridge_correction, rng) {
            Some(s) => (s as f64 * cfg.dt, true),
            None => (cfg.horizon, false),
        }
    })
}

pub fn mc_expected_exit(datum: &RootDatum, x: &[f64], cfg: &SimConfig) -> Result<MCEstimate> {
    datum.require_alcove(x)?;
    mc_expected_exit_in(&Polytope::alcove(datum), x, cfg)
}

/// k independent walks on the circle R/Z; survival until two of them meet.
pub fn mc_circle_collision(x: &[f64], t: f64, cfg: &SimConfig) -> Result<MCEstimate> {
    cfg.validate()?;
    let k = x.len();
    if k < 2 || !x.iter().all(|v| v.is_finite()) {
        return invalid("need at least two finite starting positions");
    }
    let start: Vec<f64> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .map(|(i, j)| (x[i] - x[j]).floor())
        .collect();
    for i in 0..k {
        for j in i + 1..k {
            let d = (x[i] - x[j]).rem_euclid(1.0);
            if d == 0.0 {
                return invalid("starting positions must be distinct modulo 1");
            }
        }
    }
    if !(t >= 0.0) || t > cfg.horizon {
        return invalid(format!("need 0 <= t <= horizon, got t = {t}"));
    }
    if t == 0.0 {
        return Ok(MCEstimate {
            mean: 1.0,
            stderr: 0.0,
            paths: cfg.paths,
            exited_fraction: 0.0,
        });
    }
    let n = steps_for(t, cfg.dt);
    let sd = cfg.dt.sqrt();
    run_paths(cfg, |rng| {
        let mut y = x.to_vec();
        let mut prev = y.clone();
        for _ in 0..n {
            for v in y.iter_mut() {
                *v += sd * rng.sample::<f64, _>(StandardNormal);
            }
            let mut p = 0;
            for i in 0..k {
                for j in i + 1..k {
                    let d = y[i] - y[j];
                    if d.floor() != start[p] {
                        return (0.0, true);
                    }
                    if cfg.bridge_correction {
                        // Both cell walls of the difference, which runs at rate 2.
                        let e = prev[i] - prev[j];
                        let (lo, hi) = (start[p], start[p] + 1.0);
                        let q = (-(e - lo) * (d - lo) / cfg.dt).exp()
                            + (-(hi - e) * (hi - d) / cfg.dt).exp();
                        if rng.random::<f64>() < q {
                            return (0.0, true);
                        }
                    }
                    p += 1;
                }
            }
            prev.copy_from_slice(&y);
        }
        (1.0, false)
    })
}

/// The alcove point of type Ã_{k−1} whose circle configuration matches `x`.
pub fn circle_representative(x: &[f64]) -> Result<Vec<f64>> {
    let datum = RootDatum::new(Family::A, x.len())?;
    Ok(datum.fold_to_alcove(x)?.0)
}
