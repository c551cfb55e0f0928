//! Closed-form survival probabilities P_x(T > t) for Brownian motion started
//! inside the fundamental alcove, where T is the first exit time.
//!
//! Every formula is a signed sum over pair partitions of products of
//! one-dimensional (or, for B̃ and C̃, two-dimensional) factors. The sum is
//! evaluated either as a Pfaffian or by enumerating the partitions directly;
//! both are kept because they must agree.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinat::{pfaffian, singlet_expansion, SignedPartitions, SkewMatrix};
use crate::error::{invalid, Error, Result};
use crate::imagesum::{block_survival_b2, block_survival_c2};
use crate::kernels1d::{strip_survival, strip_survival_top_weighted, KernelValue, SeriesControl};
use crate::numeric::{dot, erf, norm_sq, CompensatedSum};
use crate::rootsys::{Family, RootDatum};

/// Accuracy requested from each planar block evaluation.
const BLOCK_TOL: f64 = 1e-11;

/// Which evaluator produced a survival value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pfaffian,
    PartitionSum,
    ImageSum,
    MonteCarlo,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Pfaffian => "pfaffian",
            Method::PartitionSum => "partition-sum",
            Method::ImageSum => "image-sum",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the signed sum over pair partitions is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumPath {
    Pfaffian,
    PartitionSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalQuery {
    pub datum: RootDatum,
    pub x: Vec<f64>,
    pub t: f64,
    pub ctl: SeriesControl,
}

impl SurvivalQuery {
    /// Checks that `x` lies strictly inside the alcove and `t` is a valid time.
    pub fn new(datum: RootDatum, x: Vec<f64>, t: f64) -> Result<Self> {
        let q = Self {
            datum,
            x,
            t,
            ctl: SeriesControl::default(),
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_control(mut self, ctl: SeriesControl) -> Result<Self> {
        ctl.validate()?;
        self.ctl = ctl;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_time(self.t)?;
        self.ctl.validate()?;
        self.datum.require_alcove(&self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalResult {
    /// Survival probability clamped to [0, 1].
    pub value: f64,
    /// Bound on truncation error, widened to cover any clamping.
    pub tail_bound: f64,
    pub method: Method,
}

impl SurvivalResult {
    pub(crate) fn from_raw(raw: f64, tail: f64, method: Method) -> Result<Self> {
        if !raw.is_finite() {
            return Err(Error::NonFinite("survival probability".into()));
        }
        let value = raw.clamp(0.0, 1.0);
        Ok(Self {
            value,
            tail_bound: tail.max((raw - value).abs()),
            method,
        })
    }

    fn one(method: Method) -> Self {
        Self {
            value: 1.0,
            tail_bound: 0.0,
            method,
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("time must be finite and nonnegative, got {t}"));
    }
    Ok(())
}

/// Survival probability by the closed form for the query's family, using
/// the Pfaffian path.
pub fn survival(q: &SurvivalQuery) -> Result<SurvivalResult> {
    survival_with_path(q, SumPath::Pfaffian)
}

pub fn survival_with_path(q: &SurvivalQuery, path: SumPath) -> Result<SurvivalResult> {
    match q.datum.family {
        Family::A => survival_a_with(q, path),
        Family::B => survival_b_with(q, path),
        Family::C => survival_c_with(q, path),
        Family::D => survival_d_with(q, path),
        Family::G2 => {
            q.validate()?;
            survival_g2(&q.x, q.t, &q.ctl)
        }
    }
}

fn require_family(q: &SurvivalQuery, family: Family) -> Result<()> {
    if q.datum.family != family {
        return invalid(format!(
            "expected a type {family} query, got type {}",
            q.datum.family
        ));
    }
    q.validate()
}

/// Pair entries (upper triangle, 0-based), singlet entries, and an error
/// bound shared by every entry.
struct Entries {
    pairs: SkewMatrix,
    singlets: Vec<f64>,
    entry_bound: f64,
}

impl Entries {
    fn build(
        k: usize,
        pair: impl Fn(usize, usize) -> Result<(f64, f64)> + Sync,
        singlet: impl Fn(usize) -> Result<(f64, f64)> + Sync,
    ) -> Result<Self> {
        let idx: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
            .collect();
        let vals: Vec<(f64, f64)> = idx
            .par_iter()
            .map(|&(i, j)| pair(i, j))
            .collect::<Result<_>>()?;
        let mut pairs = SkewMatrix::zeros(k);
        let mut entry_bound: f64 = 0.0;
        for (&(i, j), &(v, b)) in idx.iter().zip(&vals) {
            pairs.set(i, j, v);
            entry_bound = entry_bound.max(b);
        }
        let mut singlets = Vec::new();
        if k % 2 == 1 {
            for i in 0..k {
                let (v, b) = singlet(i)?;
                singlets.push(v);
                entry_bound = entry_bound.max(b);
            }
        }
        Ok(Self {
            pairs,
            singlets,
            entry_bound,
        })
    }

    fn evaluate(&self, path: SumPath) -> Result<(f64, f64)> {
        let k = self.pairs.n();
        let value = match path {
            SumPath::Pfaffian if k % 2 == 0 => pfaffian(&self.pairs)?,
            SumPath::Pfaffian => singlet_expansion(&self.pairs, |l| self.singlets[l])?,
            SumPath::PartitionSum => SignedPartitions::cached(k)?.sum(
                |i, j| self.pairs.get(i - 1, j - 1),
                |s| self.singlets[s - 1],
            ),
        };
        Ok((value, self.propagated_bound()))
    }

    /// First-order bound: every product has at most ⌈k/2⌉ factors, each
    /// perturbed by at most `entry_bound`.
    fn propagated_bound(&self) -> f64 {
        let k = self.pairs.n();
        let factors = k.div_ceil(2);
        let partitions =
            crate::combinat::double_factorial(if k % 2 == 0 { k as i64 - 1 } else { k as i64 })
                as f64;
        let mut big: f64 = 1.0;
        for i in 0..k {
            for j in i + 1..k {
                big = big.max(self.pairs.get(i, j).abs());
            }
        }
        for s in &self.singlets {
            big = big.max(s.abs());
        }
        let rel = (partitions * factors as f64 * big.powi(factors as i32 - 1) * self.entry_bound)
            .max(0.0);
        rel + 1e-15 * partitions
    }
}

fn kv(r: Result<KernelValue>) -> Result<(f64, f64)> {
    r.map(|v| (v.value, v.tail_bound))
}

fn method_of(path: SumPath) -> Method {
    match path {
        SumPath::Pfaffian => Method::Pfaffian,
        SumPath::PartitionSum => Method::PartitionSum,
    }
}

/// Survival from the Ã_{k−1} alcove {1 + x_k > x_1 > … > x_k}.
pub fn survival_a(q: &SurvivalQuery) -> Result<SurvivalResult> {
    survival_a_with(q, SumPath::Pfaffian)
}

pub fn survival_a_with(q: &SurvivalQuery, path: SumPath) -> Result<SurvivalResult> {
    require_family(q, Family::A)?;
    if q.t == 0.0 {
        return Ok(SurvivalResult::one(method_of(path)));
    }
    let (x, t, ctl) = (&q.x, q.t, &q.ctl);
    let k = x.len();
    let entries = if k % 2 == 0 {
        Entries::build(
            k,
            |i, j| kv(strip_survival(x[i] - x[j], 2.0 * t, ctl)),
            |_| Ok((1.0, 0.0)),
        )?
    } else {
        Entries::build(
            k,
            |i, j| kv(strip_survival_top_weighted(x[i] - x[j], 2.0 * t, ctl)),
            |_| Ok((1.0, 0.0)),
        )?
    };
    let (raw, tail) = entries.evaluate(path)?;
    SurvivalResult::from_raw(raw, tail, method_of(path))
}

/// Survival from the Weyl chamber {x_1 > … > x_k}: no two coordinates meet.
pub fn chamber_survival_a(x: &[f64], t: f64) -> Result<SurvivalResult> {
    check_time(t)?;
    if x.is_empty() || !x.iter().all(|v| v.is_finite()) {
        return invalid("chamber start point must be nonempty and finite");
    }
    if !x.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::NotInChamber);
    }
    if t == 0.0 || x.len() == 1 {
        return Ok(SurvivalResult::one(Method::Pfaffian));
    }
    let k = x.len();
    let c = 2.0 * t.sqrt();
    let m = SkewMatrix::from_fn(k, |i, j| erf((x[i] - x[j]) / c));
    let raw = if k % 2 == 0 {
        pfaffian(&m)?
    } else {
        singlet_expansion(&m, |_| 1.0)?
    };
    SurvivalResult::from_raw(raw, 1e-14, Method::Pfaffian)
}

/// Survival from the C̃_k alcove {1/2 > x_1 > … > x_k > 0}.
pub fn survival_c(q: &SurvivalQuery) -> Result<SurvivalResult> {
    survival_c_with(q, SumPath::Pfaffian)
}

pub fn survival_c_with(q: &SurvivalQuery, path: SumPath) -> Result<SurvivalResult> {
    require_family(q, Family::C)?;
    if q.t == 0.0 {
        return Ok(SurvivalResult::one(method_of(path)));
    }
    let (x, t, ctl) = (&q.x, q.t, &q.ctl);
    let entries = Entries::build(
        x.len(),
        |i, j| Ok((block_survival_c2(x[i], x[j], t, BLOCK_TOL)?, BLOCK_TOL)),
        |i| kv(strip_survival(2.0 * x[i], 4.0 * t, ctl)),
    )?;
    let (raw, tail) = entries.evaluate(path)?;
    SurvivalResult::from_raw(raw, tail, method_of(path))
}

/// Survival from the B̃_k alcove {x_1 + x_2 < 1, x_1 > … > x_k > 0}.
pub fn survival_b(q: &SurvivalQuery) -> Result<SurvivalResult> {
    survival_b_with(q, SumPath::Pfaffian)
}

pub fn survival_b_with(q: &SurvivalQuery, path: SumPath) -> Result<SurvivalResult> {
    require_family(q, Family::B)?;
    if q.t == 0.0 {
        return Ok(SurvivalResult::one(method_of(path)));
    }
    let (x, t, ctl) = (&q.x, q.t, &q.ctl);
    let entries = Entries::build(
        x.len(),
        |i, j| Ok((block_survival_b2(x[i], x[j], t, BLOCK_TOL)?, BLOCK_TOL)),
        |i| kv(strip_survival(x[i], t, ctl)),
    )?;
    let (raw, tail) = entries.evaluate(path)?;
    SurvivalResult::from_raw(raw, tail, method_of(path))
}

/// Survival from the D̃_k alcove {x_1 + x_2 < 1, x_1 > … > x_{k−1} > |x_k|}.
pub fn survival_d(q: &SurvivalQuery) -> Result<SurvivalResult> {
    survival_d_with(q, SumPath::Pfaffian)
}

pub fn survival_d_with(q: &SurvivalQuery, path: SumPath) -> Result<SurvivalResult> {
    require_family(q, Family::D)?;
    if q.t == 0.0 {
        return Ok(SurvivalResult::one(method_of(path)));
    }
    let (x, t, ctl) = (&q.x, q.t, &q.ctl);
    let entries = Entries::build(
        x.len(),
        |i, j| {
            let a = strip_survival(x[i] - x[j], 2.0 * t, ctl)?;
            let b = strip_survival(x[i] + x[j], 2.0 * t, ctl)?;
            Ok((a.value * b.value, a.tail_bound + b.tail_bound))
        },
        |_| Ok((1.0, 0.0)),
    )?;
    let (raw, tail) = entries.evaluate(path)?;
    SurvivalResult::from_raw(raw, tail, method_of(path))
}

/// The three signed (short, long) orthogonal root pairs for G̃₂, in the
/// ambient coordinates of the sum-zero plane in R³.
const G2_TERMS: [(f64, [f64; 3], [f64; 3]); 3] = [
    (1.0, [1.0, -1.0, 0.0], [-1.0, -1.0, 2.0]),
    (-1.0, [-1.0, 0.0, 1.0], [1.0, -2.0, 1.0]),
    (1.0, [0.0, -1.0, 1.0], [-2.0, 1.0, 1.0]),
];

/// Survival from the G̃₂ alcove, a (π/2, π/3, π/6) triangle.
pub fn survival_g2(x: &[f64], t: f64, ctl: &SeriesControl) -> Result<SurvivalResult> {
    check_time(t)?;
    ctl.validate()?;
    RootDatum::new(Family::G2, 2)?.require_alcove(x)?;
    if t == 0.0 {
        return Ok(SurvivalResult::one(Method::Pfaffian));
    }
    let mut acc = CompensatedSum::new();
    let mut tail = 0.0;
    for (sign, short, long) in &G2_TERMS {
        let a = strip_survival(dot(short, x), norm_sq(short) * t, ctl)?;
        let b = strip_survival(dot(long, x), norm_sq(long) * t, ctl)?;
        acc.add(sign * a.value * b.value);
        tail += a.tail_bound + b.tail_bound;
    }
    SurvivalResult::from_raw(acc.value(), tail, Method::Pfaffian)
}

/// Truncated lattice form of odd-k Ã survival, summing every lattice point
/// of sup-norm at most `max_norm`. Only accurate when t is small against
/// `max_norm`; kept as an independent check of the factorized form.
pub fn survival_a_lattice_debug(x: &[f64], t: f64, max_norm: u32) -> Result<f64> {
    check_time(t)?;
    let k = x.len();
    if k % 2 == 0 {
        return invalid("the lattice form applies to an odd number of coordinates");
    }
    RootDatum::new(Family::A, k)?.require_alcove(x)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    let c = 2.0 * t.sqrt();
    let n = max_norm as i64;
    // With orthogonal roots the sum over the box factorizes per root.
    let factor = |d: f64| -> f64 {
        let mut acc = CompensatedSum::new();
        for m in -n..=n {
            let sign = if m > 0 { -1.0 } else { 1.0 };
            acc.add(sign * erf((d - m as f64).abs() / c));
        }
        acc.value()
    };
    Ok(SignedPartitions::cached(k)?.sum(|i, j| factor(x[i - 1] - x[j - 1]), |_| 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagesum::survival_for_datum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn query(family: Family, k: usize, x: &[f64], t: f64) -> SurvivalQuery {
        SurvivalQuery::new(RootDatum::new(family, k).unwrap(), x.to_vec(), t).unwrap()
    }

    fn random_query(rng: &mut ChaCha8Rng, family: Family, k: usize) -> SurvivalQuery {
        let d = RootDatum::new(family, k).unwrap();
        let x = d.random_alcove_point(rng);
        let t = rng.random_range(0.005..0.6);
        SurvivalQuery::new(d, x, t).unwrap()
    }

    #[test]
    fn single_pair_is_strip_kernel() {
        let ctl = SeriesControl::default();
        for &t in &[0.01, 0.1, 0.7] {
            let q = query(Family::A, 2, &[0.25, -0.25], t);
            let expect = strip_survival(0.5, 2.0 * t, &ctl).unwrap().value;
            assert!((survival_a(&q).unwrap().value - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn pfaffian_and_partition_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (family, ks) in [
            (Family::A, 2..=8),
            (Family::D, 3..=6),
            (Family::C, 2..=4),
            (Family::B, 2..=4),
        ] {
            for k in ks {
                let q = random_query(&mut rng, family, k);
                let a = survival_with_path(&q, SumPath::Pfaffian).unwrap().value;
                let b = survival_with_path(&q, SumPath::PartitionSum).unwrap().value;
                assert!((a - b).abs() < 1e-12, "{family}{k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn a2_and_g2_match_image_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (family, k) in [(Family::A, 3), (Family::G2, 2)] {
            let d = RootDatum::new(family, k).unwrap();
            for _ in 0..4 {
                let x = d.random_alcove_point(&mut rng);
                let t = rng.random_range(0.02..1.0);
                let q = SurvivalQuery::new(d.clone(), x.clone(), t).unwrap();
                let closed = survival(&q).unwrap().value;
                let images = survival_for_datum(&d, &x, t, 1e-9).unwrap().value;
                assert!(
                    (closed - images).abs() < 1e-7,
                    "{family}: {closed} vs {images} at t={t}"
                );
            }
        }
    }

    #[test]
    fn a2_reference_point() {
        let q = query(Family::A, 3, &[0.6, 0.3, 0.1], 0.1);
        let p = q.datum.project(&q.x);
        let images = survival_for_datum(&q.datum, &p, 0.1, 1e-10).unwrap().value;
        assert!((survival_a(&q).unwrap().value - images).abs() < 1e-8);
    }

    #[test]
    fn two_block_types_reduce_to_their_block() {
        let t = 0.03;
        let c = query(Family::C, 2, &[0.35, 0.1], t);
        let expect = block_survival_c2(0.35, 0.1, t, 1e-11).unwrap();
        assert!((survival_c(&c).unwrap().value - expect).abs() < 1e-12);
        let b = query(Family::B, 2, &[0.6, 0.2], t);
        let expect = block_survival_b2(0.6, 0.2, t, 1e-11).unwrap();
        assert!((survival_b(&b).unwrap().value - expect).abs() < 1e-12);
    }

    #[test]
    fn odd_lattice_form_matches_factorized_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in [3, 5] {
            let d = RootDatum::new(Family::A, k).unwrap();
            for _ in 0..4 {
                let x = d.random_alcove_point(&mut rng);
                let t = rng.random_range(0.01..0.2);
                let q = SurvivalQuery::new(d.clone(), x.clone(), t).unwrap();
                let lattice = survival_a_lattice_debug(&x, t, 6).unwrap();
                assert!((survival_a(&q).unwrap().value - lattice).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn alcove_exit_comes_before_chamber_exit() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for k in 2..=7 {
            let q = random_query(&mut rng, Family::A, k);
            let alcove = survival_a(&q).unwrap().value;
            let chamber = chamber_survival_a(&q.x, q.t).unwrap().value;
            assert!(alcove <= chamber + 1e-12);
        }
    }

    #[test]
    fn chamber_small_cases() {
        let r = chamber_survival_a(&[0.4, 0.1], 0.3).unwrap().value;
        assert!((r - erf(0.3 / (2.0 * 0.3f64.sqrt()))).abs() < 1e-15);
        assert_eq!(
            chamber_survival_a(&[1.0, 0.0, -1.0], 0.0).unwrap().value,
            1.0
        );
        assert_eq!(
            chamber_survival_a(&[0.0, 1.0], 0.1),
            Err(Error::NotInChamber)
        );
    }

    #[test]
    fn monotone_in_time_with_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (family, k) in [
            (Family::A, 4),
            (Family::A, 5),
            (Family::D, 4),
            (Family::C, 3),
            (Family::B, 3),
            (Family::G2, 2),
        ] {
            let d = RootDatum::new(family, k).unwrap();
            let x = d.random_alcove_point(&mut rng);
            let mut prev = 1.0;
            for i in 0..12 {
                let t = 0.002 * 1.8f64.powi(i);
                let r = survival(&SurvivalQuery::new(d.clone(), x.clone(), t).unwrap()).unwrap();
                assert!((0.0..=1.0).contains(&r.value));
                assert!(r.value <= prev + 1e-10, "{family}{k} not monotone at t={t}");
                prev = r.value;
            }
            assert!(prev < 1e-3, "{family}{k} does not decay: {prev}");
            let tiny =
                survival(&SurvivalQuery::new(d.clone(), d.barycenter(), 1e-5).unwrap()).unwrap();
            assert!(tiny.value > 1.0 - 1e-9);
        }
    }

    #[test]
    fn rejects_points_outside() {
        let d = RootDatum::new(Family::A, 3).unwrap();
        assert_eq!(
            SurvivalQuery::new(d, vec![0.1, 0.3, 0.2], 0.1).unwrap_err(),
            Error::NotInAlcove
        );
        assert_eq!(
            survival_g2(&[0.0, 0.0, 0.0], 0.1, &SeriesControl::default()).unwrap_err(),
            Error::NotInAlcove
        );
        assert!(matches!("F4".parse::<Family>(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn d_factor_vanishes_at_outer_wall() {
        let ctl = SeriesControl::default();
        let q = query(Family::D, 4, &[0.55, 0.35, 0.2, 0.05], 0.05);
        assert!(survival_d(&q).unwrap().value > 0.0);
        assert!(strip_survival(1.0, 0.1, &ctl).unwrap().value.abs() < 1e-15);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn value_in_unit_interval_within_bound(seed in 0u64..10_000, k in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_query(&mut rng, Family::A, k);
            let r = survival_a(&q).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&r.value));
            proptest::prop_assert!(r.tail_bound >= 0.0);
        }
    }
}
