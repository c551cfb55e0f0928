//! Pair partitions with crossing numbers, and Pfaffians.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::numeric::CompensatedSum;

pub const MAX_PARTITION_K: usize = 12;
const PARTITION_SUM_MAX_N: usize = 10;

/// A partition of {1..k} into pairs, plus one singlet when k is odd.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairPartition {
    pub k: usize,
    /// 1-based pairs with `i < j`, sorted by first element.
    pub pairs: Vec<(usize, usize)>,
    pub singlet: Option<usize>,
}

impl PairPartition {
    /// Number of crossing arcs. For odd k the singlet is joined to an extra
    /// label 0 sitting left of 1.
    pub fn crossing_number(&self) -> usize {
        let mut arcs = self.pairs.clone();
        if let Some(s) = self.singlet {
            arcs.push((0, s));
        }
        let mut c = 0;
        for (idx, &(a, b)) in arcs.iter().enumerate() {
            for &(p, q) in &arcs[idx + 1..] {
                let (a, b, p, q) = if a < p { (a, b, p, q) } else { (p, q, a, b) };
                if a < p && p < b && b < q {
                    c += 1;
                }
            }
        }
        c
    }

    /// `(-1)^c(π)`.
    pub fn sign(&self) -> f64 {
        if self.crossing_number() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

pub fn crossing_number(pi: &PairPartition) -> usize {
    pi.crossing_number()
}

fn check_k(k: usize) -> Result<()> {
    if !(1..=MAX_PARTITION_K).contains(&k) {
        return invalid(format!(
            "pair partitions need 1 <= k <= {MAX_PARTITION_K}, got {k}"
        ));
    }
    Ok(())
}

fn pairings(items: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    if items.is_empty() {
        out.push(acc.clone());
        return;
    }
    let first = items[0];
    for idx in 1..items.len() {
        let rest: Vec<usize> = items[1..]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j + 1 != idx)
            .map(|(_, &v)| v)
            .collect();
        acc.push((first, items[idx]));
        pairings(&rest, acc, out);
        acc.pop();
    }
}

/// All of P₂(k) in a deterministic order: singlet ascending, then the first
/// remaining label paired with each later label in turn.
pub fn enumerate_pair_partitions(k: usize) -> Result<Vec<PairPartition>> {
    check_k(k)?;
    let singlets: Vec<Option<usize>> = if k % 2 == 0 {
        vec![None]
    } else {
        (1..=k).map(Some).collect()
    };
    let mut out = Vec::new();
    for s in singlets {
        let items: Vec<usize> = (1..=k).filter(|&i| Some(i) != s).collect();
        let mut raw = Vec::new();
        pairings(&items, &mut Vec::new(), &mut raw);
        out.extend(raw.into_iter().map(|pairs| PairPartition {
            k,
            pairs,
            singlet: s,
        }));
    }
    Ok(out)
}

/// Σ_{π∈P₂(k)} (−1)^{c(π)}.
pub fn sign_sum(k: usize) -> Result<i64> {
    Ok(enumerate_pair_partitions(k)?
        .iter()
        .map(|p| if p.crossing_number() % 2 == 0 { 1 } else { -1 })
        .sum())
}

/// Pair partitions of {1..k} with their signs, built once and reused.
#[derive(Debug, Clone)]
pub struct SignedPartitions {
    pub k: usize,
    pub items: Vec<(f64, PairPartition)>,
}

impl SignedPartitions {
    pub fn new(k: usize) -> Result<Self> {
        let items = enumerate_pair_partitions(k)?
            .into_iter()
            .map(|p| (p.sign(), p))
            .collect();
        Ok(Self { k, items })
    }

    /// Shared instance for `k`, built on first use.
    pub fn cached(k: usize) -> Result<&'static Self> {
        static CACHE: [OnceLock<SignedPartitions>; MAX_PARTITION_K + 1] =
            [const { OnceLock::new() }; MAX_PARTITION_K + 1];
        check_k(k)?;
        Ok(CACHE[k].get_or_init(|| Self::new(k).expect("k already checked")))
    }

    /// Σ_π (−1)^{c(π)} Π_{pairs} pair(i,j) · singlet(s), with 1-based labels.
    pub fn sum(&self, pair: impl Fn(usize, usize) -> f64, singlet: impl Fn(usize) -> f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for (sign, p) in &self.items {
            let mut prod = *sign;
            for &(i, j) in &p.pairs {
                prod *= pair(i, j);
            }
            if let Some(s) = p.singlet {
                prod *= singlet(s);
            }
            acc.add(prod);
        }
        acc.value()
    }
}

/// Skew-symmetric matrix storing only the strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl SkewMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    /// Builds from `f(i, j)` evaluated for `i < j` (0-based).
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => 0.0,
            Less => self.upper[self.index(i, j)],
            Greater => -self.upper[self.index(j, i)],
        }
    }

    /// Sets `a_ij` (and implicitly `a_ji = -a_ij`). Panics if `i == j`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i != j, "diagonal of a skew matrix is fixed at zero");
        if i < j {
            let idx = self.index(i, j);
            self.upper[idx] = v;
        } else {
            let idx = self.index(j, i);
            self.upper[idx] = -v;
        }
    }

    /// The principal submatrix on the given (0-based, increasing) indices.
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        Self::from_fn(keep.len(), |a, b| self.get(keep[a], keep[b]))
    }

    /// Principal submatrix with row and column `l` removed.
    pub fn without(&self, l: usize) -> Self {
        let keep: Vec<usize> = (0..self.n).filter(|&i| i != l).collect();
        self.submatrix(&keep)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    fn check_finite(&self) -> Result<()> {
        if self.upper.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("skew matrix entry".into()))
        }
    }
}

/// Pfaffian: pair-partition sum up to n = 10, memoized row expansion beyond.
pub fn pfaffian(m: &SkewMatrix) -> Result<f64> {
    m.check_finite()?;
    if m.n <= PARTITION_SUM_MAX_N {
        pfaffian_partition_sum(m)
    } else {
        pfaffian_row_expansion(m)
    }
}

/// Σ_π (−1)^{c(π)} Π a_ij over perfect matchings.
pub fn pfaffian_partition_sum(m: &SkewMatrix) -> Result<f64> {
    m.check_finite()?;
    let n = m.n;
    if n == 0 {
        return Ok(1.0);
    }
    if n % 2 == 1 {
        return Ok(0.0);
    }
    if n > MAX_PARTITION_K {
        return invalid(format!(
            "partition-sum Pfaffian limited to n <= {MAX_PARTITION_K}"
        ));
    }
    Ok(SignedPartitions::cached(n)?.sum(|i, j| m.get(i - 1, j - 1), |_| 1.0))
}

/// Expansion along the first remaining row, memoized on the index subset.
pub fn pfaffian_row_expansion(m: &SkewMatrix) -> Result<f64> {
    m.check_finite()?;
    let n = m.n;
    if n % 2 == 1 {
        return Ok(0.0);
    }
    if n > 40 {
        return invalid("row-expansion Pfaffian limited to n <= 40");
    }
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut memo = HashMap::new();
    Ok(expand(m, full, &mut memo))
}

fn expand(m: &SkewMatrix, mask: u64, memo: &mut HashMap<u64, f64>) -> f64 {
    if mask == 0 {
        return 1.0;
    }
    if let Some(&v) = memo.get(&mask) {
        return v;
    }
    let i = mask.trailing_zeros() as usize;
    let rest = mask & !(1u64 << i);
    let mut acc = CompensatedSum::new();
    let mut between = 0;
    let mut bits = rest;
    while bits != 0 {
        let j = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        let a = m.get(i, j);
        if a != 0.0 {
            let sign = if between % 2 == 0 { 1.0 } else { -1.0 };
            acc.add(sign * a * expand(m, rest & !(1u64 << j), memo));
        }
        between += 1;
    }
    let v = acc.value();
    memo.insert(mask, v);
    v
}

/// Σ_l (−1)^{l+1} w_l Pf(m with row/column l removed), l 1-based; the
/// odd-size singlet expansion.
pub fn singlet_expansion(m: &SkewMatrix, weight: impl Fn(usize) -> f64) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for l in 0..m.n() {
        let w = weight(l);
        if w == 0.0 {
            continue;
        }
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        acc.add(sign * w * pfaffian(&m.without(l))?);
    }
    Ok(acc.value())
}

/// (n)!! with 0!! = (−1)!! = 1.
pub fn double_factorial(n: i64) -> u128 {
    let mut acc = 1u128;
    let mut v = n;
    while v > 1 {
        acc *= v as u128;
        v -= 2;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn part(pairs: &[(usize, usize)], singlet: Option<usize>, k: usize) -> PairPartition {
        PairPartition {
            k,
            pairs: pairs.to_vec(),
            singlet,
        }
    }

    #[test]
    fn k4_partitions_and_crossings() {
        let all = enumerate_pair_partitions(4).unwrap();
        assert_eq!(all.len(), 3);
        let found: HashSet<(Vec<(usize, usize)>, usize)> = all
            .iter()
            .map(|p| (p.pairs.clone(), p.crossing_number()))
            .collect();
        for expected in [
            (vec![(1, 4), (2, 3)], 0),
            (vec![(1, 3), (2, 4)], 1),
            (vec![(1, 2), (3, 4)], 0),
        ] {
            assert!(found.contains(&expected), "{expected:?}");
        }
    }

    #[test]
    fn odd_convention_places_zero_left_of_one() {
        assert_eq!(part(&[(2, 4), (3, 5)], Some(1), 5).crossing_number(), 1);
        assert_eq!(part(&[(1, 2)], Some(3), 3).crossing_number(), 0);
        assert_eq!(part(&[(1, 3)], Some(2), 3).crossing_number(), 1);
        assert_eq!(part(&[(1, 5), (2, 4)], Some(3), 5).crossing_number(), 2);
        assert_eq!(part(&[(1, 4), (2, 5)], Some(3), 5).crossing_number(), 3);
    }

    /// Brute force: every fixed-point-free involution (plus one fixed point when odd),
    /// deduplicated as sets.
    fn brute_force_count(k: usize) -> usize {
        let mut seen = HashSet::new();
        let mut perm: Vec<usize> = (1..=k).collect();
        fn heap(n: usize, perm: &mut Vec<usize>, seen: &mut HashSet<Vec<(usize, usize)>>) {
            if n == 1 {
                let mut pairs: Vec<(usize, usize)> = perm
                    .chunks(2)
                    .filter(|c| c.len() == 2)
                    .map(|c| (c[0].min(c[1]), c[0].max(c[1])))
                    .collect();
                pairs.sort();
                seen.insert(pairs);
                return;
            }
            for i in 0..n - 1 {
                heap(n - 1, perm, seen);
                if n % 2 == 0 {
                    perm.swap(i, n - 1);
                } else {
                    perm.swap(0, n - 1);
                }
            }
            heap(n - 1, perm, seen);
        }
        heap(k, &mut perm, &mut seen);
        seen.len()
    }

    #[test]
    fn counts_match_brute_force() {
        let expected = [1usize, 3, 3, 15, 15, 105];
        for (k, &want) in (2..=7).zip(&expected) {
            let got = enumerate_pair_partitions(k).unwrap();
            assert_eq!(got.len(), want, "k={k}");
            assert_eq!(brute_force_count(k), want, "brute force k={k}");
            let uniq: HashSet<_> = got.iter().cloned().collect();
            assert_eq!(uniq.len(), want);
            let df = if k % 2 == 0 {
                double_factorial(k as i64 - 1)
            } else {
                double_factorial(k as i64)
            };
            assert_eq!(df as usize, want);
        }
    }

    #[test]
    fn every_partition_covers_labels_once() {
        for k in 2..=9 {
            for p in enumerate_pair_partitions(k).unwrap() {
                let mut labels: Vec<usize> = p.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
                labels.extend(p.singlet);
                labels.sort();
                assert_eq!(labels, (1..=k).collect::<Vec<_>>());
                assert!(p.pairs.iter().all(|&(a, b)| a < b));
                assert_eq!(p.singlet.is_some(), k % 2 == 1);
            }
        }
    }

    #[test]
    fn sign_sums_are_one() {
        for k in 2..=10 {
            assert_eq!(sign_sum(k).unwrap(), 1, "k={k}");
        }
    }

    #[test]
    fn rejects_out_of_range_k() {
        assert!(enumerate_pair_partitions(0).is_err());
        assert!(enumerate_pair_partitions(13).is_err());
    }

    #[test]
    fn small_pfaffians() {
        let mut m = SkewMatrix::zeros(2);
        m.set(0, 1, 2.5);
        assert_eq!(pfaffian(&m).unwrap(), 2.5);
        let a = [
            [0.0, 1.3, -0.7, 2.1],
            [0.0, 0.0, 0.4, -1.1],
            [0.0, 0.0, 0.0, 0.9],
        ];
        let m = SkewMatrix::from_fn(4, |i, j| a[i][j]);
        let want = a[0][1] * a[2][3] - a[0][2] * a[1][3] + a[0][3] * a[1][2];
        assert!((pfaffian(&m).unwrap() - want).abs() < 1e-15);
        assert_eq!(pfaffian(&SkewMatrix::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn block_diagonal_j_has_unit_pfaffian() {
        for n in [2, 4, 6, 8, 10, 12, 14] {
            let m = SkewMatrix::from_fn(n, |i, j| if i % 2 == 0 && j == i + 1 { 1.0 } else { 0.0 });
            assert_eq!(pfaffian(&m).unwrap(), 1.0, "n={n}");
            assert_eq!(pfaffian_row_expansion(&m).unwrap(), 1.0);
        }
    }

    #[test]
    fn skew_storage_is_antisymmetric() {
        let mut m = SkewMatrix::zeros(5);
        m.set(3, 1, 0.25);
        assert_eq!(m.get(1, 3), -0.25);
        assert_eq!(m.get(3, 1), 0.25);
        assert_eq!(m.get(2, 2), 0.0);
        let sub = m.without(0);
        assert_eq!(sub.get(0, 2), -0.25);
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let mut m = SkewMatrix::zeros(4);
        m.set(0, 2, f64::NAN);
        assert!(matches!(pfaffian(&m), Err(Error::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn partition_sum_matches_row_expansion(half in 1usize..=4, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let n = 2 * half;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = SkewMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let a = pfaffian_partition_sum(&m).unwrap();
            let b = pfaffian_row_expansion(&m).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn swapping_two_labels_flips_sign(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = SkewMatrix::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let perm = [1usize, 0, 2, 3, 4, 5];
            let p = SkewMatrix::from_fn(6, |i, j| m.get(perm[i], perm[j]));
            let a = pfaffian(&m).unwrap();
            let b = pfaffian(&p).unwrap();
            prop_assert!((a + b).abs() <= 1e-12);
        }
    }
}
