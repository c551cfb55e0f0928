//! Root systems A, B, C, D, G2, their affine extensions and alcove geometry.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{dot, norm_sq, solve_linear};

pub const GROUP_CAP: usize = 1_000_000;
const KEY_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
    C,
    D,
    G2,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::A => "A",
            Family::B => "B",
            Family::C => "C",
            Family::D => "D",
            Family::G2 => "G2",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Family::A),
            "B" => Ok(Family::B),
            "C" => Ok(Family::C),
            "D" => Ok(Family::D),
            "G2" | "G" => Ok(Family::G2),
            "F4" | "F" => Err(Error::Unsupported(
                "type F4: no compact closed-form exit formula is available".into(),
            )),
            "E6" | "E7" | "E8" | "E" => {
                Err(Error::Unsupported(format!("type {s} is not implemented")))
            }
            other => invalid(format!("unknown root system family '{other}'")),
        }
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn combo(n: usize, terms: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &(i, c) in terms {
        v[i] += c;
    }
    v
}

/// A concrete crystallographic root system with its affine extension.
#[derive(Debug, Clone, PartialEq)]
pub struct RootDatum {
    pub family: Family,
    /// Rank parameter: k coordinates for A (rank k−1), rank k for B/C/D, 2 for G2.
    pub k: usize,
    pub ambient_dim: usize,
    positive: Vec<Vec<f64>>,
    simple: Vec<Vec<f64>>,
    highest: Vec<f64>,
}

impl RootDatum {
    pub fn new(family: Family, k: usize) -> Result<Self> {
        let (ambient_dim, positive, simple, highest) = match family {
            Family::A => {
                if k < 2 {
                    return invalid("type A needs k >= 2 coordinates");
                }
                let mut pos = Vec::new();
                for i in 0..k {
                    for j in i + 1..k {
                        pos.push(combo(k, &[(i, 1.0), (j, -1.0)]));
                    }
                }
                let simple = (0..k - 1)
                    .map(|i| combo(k, &[(i, 1.0), (i + 1, -1.0)]))
                    .collect();
                (k, pos, simple, combo(k, &[(0, 1.0), (k - 1, -1.0)]))
            }
            Family::B | Family::C | Family::D => {
                let min_k = if family == Family::D { 3 } else { 2 };
                if k < min_k {
                    return invalid(format!("type {family} needs k >= {min_k}"));
                }
                let mut pos = Vec::new();
                for i in 0..k {
                    for j in i + 1..k {
                        pos.push(combo(k, &[(i, 1.0), (j, -1.0)]));
                        pos.push(combo(k, &[(i, 1.0), (j, 1.0)]));
                    }
                }
                let short = match family {
                    Family::B => 1.0,
                    Family::C => 2.0,
                    _ => 0.0,
                };
                if short > 0.0 {
                    pos.extend((0..k).map(|i| combo(k, &[(i, short)])));
                }
                let mut simple: Vec<Vec<f64>> = (0..k - 1)
                    .map(|i| combo(k, &[(i, 1.0), (i + 1, -1.0)]))
                    .collect();
                simple.push(match family {
                    Family::D => combo(k, &[(k - 2, 1.0), (k - 1, 1.0)]),
                    _ => combo(k, &[(k - 1, short)]),
                });
                let highest = match family {
                    Family::C => combo(k, &[(0, 2.0)]),
                    _ => combo(k, &[(0, 1.0), (1, 1.0)]),
                };
                (k, pos, simple, highest)
            }
            Family::G2 => {
                let pos = vec![
                    combo(3, &[(2, 1.0), (0, -1.0)]),
                    combo(3, &[(2, 1.0), (1, -1.0)]),
                    combo(3, &[(0, 1.0), (1, -1.0)]),
                    combo(3, &[(0, -2.0), (1, 1.0), (2, 1.0)]),
                    combo(3, &[(1, -2.0), (0, 1.0), (2, 1.0)]),
                    combo(3, &[(2, 2.0), (0, -1.0), (1, -1.0)]),
                ];
                let simple = vec![
                    combo(3, &[(0, 1.0), (1, -1.0)]),
                    combo(3, &[(0, -2.0), (1, 1.0), (2, 1.0)]),
                ];
                (3, pos, simple, combo(3, &[(2, 2.0), (0, -1.0), (1, -1.0)]))
            }
        };
        let k = if family == Family::G2 { 2 } else { k };
        Ok(Self {
            family,
            k,
            ambient_dim,
            positive,
            simple,
            highest,
        })
    }

    pub fn rank(&self) -> usize {
        self.simple.len()
    }

    pub fn positive_roots(&self) -> &[Vec<f64>] {
        &self.positive
    }

    pub fn simple_roots(&self) -> &[Vec<f64>] {
        &self.simple
    }

    pub fn highest_root(&self) -> &[f64] {
        &self.highest
    }

    /// The walls of the fundamental alcove: (α_i, 0) for simple α_i and (−α̃, −1).
    pub fn affine_simple_roots(&self) -> Vec<AffineRoot> {
        let mut walls: Vec<AffineRoot> = self
            .simple
            .iter()
            .map(|a| AffineRoot {
                alpha: a.clone(),
                level: 0,
            })
            .collect();
        walls.push(AffineRoot {
            alpha: self.highest.iter().map(|v| -v).collect(),
            level: -1,
        });
        walls
    }

    /// True when the ambient space has a spectator direction (1,…,1).
    pub fn lives_in_sum_zero_plane(&self) -> bool {
        matches!(self.family, Family::A | Family::G2)
    }

    /// Orthogonal projection onto the span of the roots.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        if self.lives_in_sum_zero_plane() {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| v - mean).collect()
        } else {
            x.to_vec()
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim {
            return invalid(format!(
                "point has {} coordinates, type {}{} needs {}",
                x.len(),
                self.family,
                self.k,
                self.ambient_dim
            ));
        }
        Ok(())
    }

    /// 0 < ⟨x, α⟩ < 1 for every positive root, with strict comparisons.
    pub fn in_alcove(&self, x: &[f64]) -> bool {
        x.len() == self.ambient_dim
            && self.positive.iter().all(|a| {
                let p = dot(a, x);
                p > 0.0 && p < 1.0
            })
    }

    /// ⟨x, α_i⟩ > 0 on simple roots and ⟨x, α̃⟩ < 1.
    pub fn in_alcove_by_walls(&self, x: &[f64]) -> bool {
        x.len() == self.ambient_dim
            && self.simple.iter().all(|a| dot(a, x) > 0.0)
            && dot(&self.highest, x) < 1.0
    }

    /// ⟨x, α_i⟩ > 0 on simple roots.
    pub fn in_chamber(&self, x: &[f64]) -> bool {
        x.len() == self.ambient_dim && self.simple.iter().all(|a| dot(a, x) > 0.0)
    }

    pub fn require_alcove(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("start point".into()));
        }
        if self.in_alcove(x) {
            Ok(())
        } else {
            Err(Error::NotInAlcove)
        }
    }

    /// Vertices of the fundamental alcove: the origin first, then one vertex
    /// opposite each simple wall.
    pub fn alcove_vertices(&self) -> Vec<Vec<f64>> {
        let walls = self.affine_simple_roots();
        let r = self.rank();
        let mut out = Vec::with_capacity(r + 1);
        // The vertex off wall i solves λ_j(v) = 0 for every other wall j.
        for skip in (0..=r).rev() {
            let rows: Vec<&AffineRoot> = walls
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != skip)
                .map(|(_, w)| w)
                .collect();
            let m: Vec<Vec<f64>> = rows
                .iter()
                .map(|w| (0..r).map(|c| dot(&w.alpha, &self.simple[c])).collect())
                .collect();
            let rhs: Vec<f64> = rows.iter().map(|w| w.level as f64).collect();
            let coef = solve_linear(&m, &rhs).expect("alcove walls are independent");
            let mut v = vec![0.0; self.ambient_dim];
            for (c, a) in coef.iter().zip(&self.simple) {
                for (vi, ai) in v.iter_mut().zip(a) {
                    *vi += c * ai;
                }
            }
            out.push(v);
        }
        out
    }

    pub fn barycenter(&self) -> Vec<f64> {
        let verts = self.alcove_vertices();
        let n = verts.len() as f64;
        (0..self.ambient_dim)
            .map(|i| verts.iter().map(|v| v[i]).sum::<f64>() / n)
            .collect()
    }

    /// Uniform random point of the alcove.
    pub fn random_alcove_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let verts = self.alcove_vertices();
        let w: Vec<f64> = verts
            .iter()
            .map(|_| -rng.random::<f64>().max(1e-300).ln())
            .collect();
        let total: f64 = w.iter().sum();
        (0..self.ambient_dim)
            .map(|i| verts.iter().zip(&w).map(|(v, wi)| v[i] * wi / total).sum())
            .collect()
    }

    /// Membership in the coroot lattice L = Z-span of 2α/⟨α,α⟩.
    pub fn in_coroot_lattice(&self, l: &[f64]) -> bool {
        if l.len() != self.ambient_dim {
            return false;
        }
        let basis: Vec<Vec<f64>> = self.simple.iter().map(|a| coroot(a)).collect();
        let r = basis.len();
        let gram: Vec<Vec<f64>> = (0..r)
            .map(|i| (0..r).map(|j| dot(&basis[i], &basis[j])).collect())
            .collect();
        let rhs: Vec<f64> = basis.iter().map(|b| dot(b, l)).collect();
        let Some(c) = solve_linear(&gram, &rhs) else {
            return false;
        };
        let mut recon = vec![0.0; l.len()];
        for (ci, b) in c.iter().zip(&basis) {
            for (v, bi) in recon.iter_mut().zip(b) {
                *v += ci.round() * bi;
            }
        }
        c.iter().all(|v| (v - v.round()).abs() < 1e-9)
            && recon.iter().zip(l).all(|(a, b)| (a - b).abs() < 1e-9)
    }

    /// Order of the finite Weyl group.
    pub fn weyl_order(&self) -> usize {
        let fact = |n: usize| (1..=n).product::<usize>();
        match self.family {
            Family::A => fact(self.k),
            Family::B | Family::C => fact(self.k) << self.k,
            Family::D => fact(self.k) << (self.k - 1),
            Family::G2 => 12,
        }
    }

    /// Reflections in the simple roots, as linear isometries.
    pub fn simple_reflections(&self) -> Vec<AffineIsometry> {
        self.simple
            .iter()
            .map(|a| {
                AffineIsometry::reflection(&AffineRoot {
                    alpha: a.clone(),
                    level: 0,
                })
            })
            .collect()
    }

    /// All elements of the finite Weyl group, identity first.
    pub fn weyl_group(&self, cap: usize) -> Result<Vec<AffineIsometry>> {
        let order = self.weyl_order();
        if order > cap {
            return Err(Error::GroupTooLarge(cap));
        }
        let gens = self.simple_reflections();
        let all = bfs_group(
            &AffineIsometry::identity(self.ambient_dim),
            &gens,
            |_| true,
            cap,
        )?;
        debug_assert_eq!(all.len(), order);
        Ok(all)
    }

    /// Moves `x` into the closed fundamental alcove by reflecting across
    /// violated walls. Returns the image point and the affine Weyl element
    /// that maps `x` to it.
    pub fn fold_to_alcove(&self, x: &[f64]) -> Result<(Vec<f64>, AffineIsometry)> {
        self.check_dim(x)?;
        let walls = self.affine_simple_roots();
        let mut y = self.project(x);
        let mut g = AffineIsometry::identity(self.ambient_dim);
        for _ in 0..100_000 {
            let worst = walls
                .iter()
                .map(|w| (w.eval(&y), w))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("alcove has walls");
            if worst.0 >= -1e-15 {
                return Ok((y, g));
            }
            let s = AffineIsometry::reflection(worst.1);
            y = s.apply(&y);
            g = s.compose(&g);
        }
        invalid("folding into the alcove did not terminate")
    }
}

/// 2α/⟨α,α⟩.
pub fn coroot(alpha: &[f64]) -> Vec<f64> {
    let n = norm_sq(alpha);
    alpha.iter().map(|a| 2.0 * a / n).collect()
}

/// The affine functional λ(x) = ⟨α, x⟩ − n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRoot {
    pub alpha: Vec<f64>,
    pub level: i64,
}

impl AffineRoot {
    pub fn new(alpha: Vec<f64>, level: i64) -> Self {
        Self { alpha, level }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.alpha, x) - self.level as f64
    }

    /// s_λ(x) = x − λ(x) α∨.
    pub fn reflect(&self, x: &[f64]) -> Result<Vec<f64>> {
        if norm_sq(&self.alpha) == 0.0 {
            return invalid("cannot reflect in a zero root vector");
        }
        let lam = self.eval(x);
        Ok(x.iter()
            .zip(coroot(&self.alpha))
            .map(|(xi, c)| xi - lam * c)
            .collect())
    }
}

pub fn reflect_affine(lambda: &AffineRoot, x: &[f64]) -> Result<Vec<f64>> {
    lambda.reflect(x)
}

/// x ↦ w x + shift, carrying its sign ε = det w.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineIsometry {
    /// Row-major square matrix.
    pub linear: Vec<Vec<f64>>,
    pub shift: Vec<f64>,
    pub sign: i8,
}

/// Quantized isometry used to deduplicate group elements.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupElementKey(Vec<i64>);

impl AffineIsometry {
    pub fn identity(n: usize) -> Self {
        Self {
            linear: (0..n).map(|i| unit(n, i)).collect(),
            shift: vec![0.0; n],
            sign: 1,
        }
    }

    pub fn reflection(lambda: &AffineRoot) -> Self {
        let n = lambda.alpha.len();
        let c = coroot(&lambda.alpha);
        let linear = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 1.0 } else { 0.0 } - c[i] * lambda.alpha[j])
                    .collect()
            })
            .collect();
        let shift = c.iter().map(|ci| ci * lambda.level as f64).collect();
        Self {
            linear,
            shift,
            sign: -1,
        }
    }

    pub fn translation(l: &[f64]) -> Self {
        Self {
            shift: l.to_vec(),
            ..Self::identity(l.len())
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.linear
            .iter()
            .zip(&self.shift)
            .map(|(row, s)| dot(row, x) + s)
            .collect()
    }

    pub fn apply_linear(&self, x: &[f64]) -> Vec<f64> {
        self.linear.iter().map(|row| dot(row, x)).collect()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let n = self.dim();
        let linear = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|m| self.linear[i][m] * other.linear[m][j]).sum())
                    .collect()
            })
            .collect();
        let shift = self.apply(&other.shift);
        Self {
            linear,
            shift,
            sign: self.sign * other.sign,
        }
    }

    pub fn inverse(&self) -> Self {
        let n = self.dim();
        let linear: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| self.linear[j][i]).collect())
            .collect();
        let shift = linear.iter().map(|row| -dot(row, &self.shift)).collect();
        Self {
            linear,
            shift,
            sign: self.sign,
        }
    }

    pub fn determinant(&self) -> f64 {
        let n = self.dim();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.linear[i][j]).determinant()
    }

    pub fn key(&self) -> GroupElementKey {
        let q = |v: f64| (v / KEY_QUANTUM).round() as i64;
        GroupElementKey(
            self.linear
                .iter()
                .flatten()
                .chain(&self.shift)
                .map(|&v| q(v))
                .collect(),
        )
    }
}

/// Breadth-first closure of `start · ⟨gens⟩` under right multiplication,
/// keeping only elements accepted by `keep`. Rejected elements are not
/// expanded further.
pub fn bfs_group(
    start: &AffineIsometry,
    gens: &[AffineIsometry],
    keep: impl Fn(&AffineIsometry) -> bool,
    cap: usize,
) -> Result<Vec<AffineIsometry>> {
    let mut seen: HashMap<GroupElementKey, ()> = HashMap::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    seen.insert(start.key(), ());
    if keep(start) {
        queue.push_back(start.clone());
    }
    while let Some(g) = queue.pop_front() {
        for s in gens {
            let h = g.compose(s);
            let key = h.key();
            if seen.contains_key(&key) {
                continue;
            }
            seen.insert(key, ());
            if keep(&h) {
                queue.push_back(h);
            }
        }
        out.push(g);
        if out.len() > cap {
            return Err(Error::GroupTooLarge(cap));
        }
    }
    Ok(out)
}

/// S(A, m) = Σ_{v∈E_A, |v|_A = m} ε_v^A for a pairwise orthogonal set of
/// integer root vectors. Points of E_A are indexed exactly by their pairings
/// (⟨v, β⟩)_β ∈ Z^|A|.
pub fn lattice_shell_sum(roots: &[Vec<i64>], shell: u32) -> Result<i64> {
    for (i, a) in roots.iter().enumerate() {
        if a.iter().all(|&v| v == 0) {
            return invalid("zero root in shell sum");
        }
        for b in &roots[i + 1..] {
            if a.len() != b.len() {
                return invalid("roots of different dimensions");
            }
            let d: i64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            if d != 0 {
                return invalid("shell sums need pairwise orthogonal roots");
            }
        }
    }
    let p = roots.len();
    let m = shell as i64;
    if p == 0 {
        return Ok(if shell == 0 { 1 } else { 0 });
    }
    let dim = roots[0].len();
    let norms: Vec<i64> = roots
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    let denom = norms.iter().fold(1i64, |acc, &n| lcm(acc, n));
    let mut total = 0i64;
    let mut coeff = vec![-m; p];
    loop {
        // v = Σ c_i β_i / |β_i|², held as an integer vector times 1/denom.
        let mut num = vec![0i64; dim];
        for ((c, r), n) in coeff.iter().zip(roots).zip(&norms) {
            for (v, x) in num.iter_mut().zip(r) {
                *v += c * x * (denom / n);
            }
        }
        let mut norm = 0i64;
        let mut positives = 0;
        for r in roots {
            let pair_num: i64 = num.iter().zip(r).map(|(a, b)| a * b).sum();
            debug_assert_eq!(pair_num % denom, 0);
            let pair = pair_num / denom;
            norm = norm.max(pair.abs());
            if pair > 0 {
                positives += 1;
            }
        }
        if norm == m {
            total += if positives % 2 == 0 { 1 } else { -1 };
        }
        let mut idx = 0;
        loop {
            if idx == p {
                return Ok(total);
            }
            if coeff[idx] < m {
                coeff[idx] += 1;
                break;
            }
            coeff[idx] = -m;
            idx += 1;
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_data() -> Vec<RootDatum> {
        let mut out = vec![RootDatum::new(Family::G2, 2).unwrap()];
        for k in 2..=6 {
            out.push(RootDatum::new(Family::A, k).unwrap());
            out.push(RootDatum::new(Family::B, k).unwrap());
            out.push(RootDatum::new(Family::C, k).unwrap());
            if k >= 3 {
                out.push(RootDatum::new(Family::D, k).unwrap());
            }
        }
        out
    }

    #[test]
    fn positive_root_counts() {
        for d in all_data() {
            let k = d.k;
            let want = match d.family {
                Family::A => k * (k - 1) / 2,
                Family::B | Family::C => k * k,
                Family::D => k * (k - 1),
                Family::G2 => 6,
            };
            assert_eq!(d.positive_roots().len(), want, "{:?}{}", d.family, k);
        }
    }

    #[test]
    fn listed_roots() {
        let a = RootDatum::new(Family::A, 3).unwrap();
        assert_eq!(
            a.positive_roots(),
            &[
                vec![1.0, -1.0, 0.0],
                vec![1.0, 0.0, -1.0],
                vec![0.0, 1.0, -1.0]
            ]
        );
        let b = RootDatum::new(Family::B, 2).unwrap();
        assert_eq!(
            b.positive_roots(),
            &[
                vec![1.0, -1.0],
                vec![1.0, 1.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0]
            ]
        );
        let g = RootDatum::new(Family::G2, 2).unwrap();
        assert!(g.positive_roots().contains(&vec![-1.0, -1.0, 2.0]));
        assert_eq!(g.highest_root(), &[-1.0, -1.0, 2.0]);
    }

    #[test]
    fn simple_and_highest_roots_are_positive() {
        for d in all_data() {
            for s in d.simple_roots() {
                assert!(d.positive_roots().contains(s));
            }
            assert!(d.positive_roots().contains(&d.highest_root().to_vec()));
        }
    }

    #[test]
    fn membership_examples() {
        let a = RootDatum::new(Family::A, 3).unwrap();
        assert!(a.in_alcove(&[0.6, 0.3, 0.1]));
        assert!(!a.in_alcove(&[1.2, 0.1, 0.0]));
        let c = RootDatum::new(Family::C, 2).unwrap();
        assert!(c.in_alcove(&[0.4, 0.1]));
        assert!(!c.in_alcove(&[0.6, 0.1]));
        let b = RootDatum::new(Family::B, 3).unwrap();
        assert!(b.in_alcove(&[0.6, 0.3, 0.1]));
        assert!(!b.in_alcove(&[0.6, 0.5, 0.1]));
        let d = RootDatum::new(Family::D, 4).unwrap();
        assert!(d.in_alcove(&[0.55, 0.35, 0.2, -0.05]));
        assert!(!d.in_alcove(&[0.55, 0.35, 0.2, -0.25]));
    }

    #[test]
    fn alcove_characterizations_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in all_data() {
            for _ in 0..10_000 {
                let x: Vec<f64> = (0..d.ambient_dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                let a = d.in_alcove(&x);
                assert_eq!(a, d.in_alcove_by_walls(&x), "{:?}{} {x:?}", d.family, d.k);
            }
            // Also sample inside, where the box is too coarse for higher ranks.
            for _ in 0..200 {
                let x = d.random_alcove_point(&mut rng);
                assert!(d.in_alcove(&x) && d.in_alcove_by_walls(&x));
            }
        }
    }

    #[test]
    fn vertices_lie_on_all_but_one_wall() {
        for d in all_data() {
            let walls = d.affine_simple_roots();
            let verts = d.alcove_vertices();
            assert_eq!(verts.len(), d.rank() + 1);
            assert!(verts[0].iter().all(|v| v.abs() < 1e-12));
            for v in &verts {
                let zeros = walls.iter().filter(|w| w.eval(v).abs() < 1e-12).count();
                assert_eq!(zeros, d.rank());
                assert!(walls.iter().all(|w| w.eval(v) > -1e-12));
            }
            assert!(d.in_alcove(&d.barycenter()));
        }
    }

    #[test]
    fn reflection_examples() {
        let l = AffineRoot::new(vec![1.0, -1.0, 0.0], 0);
        assert_eq!(l.reflect(&[0.3, 0.7, 0.1]).unwrap(), vec![0.7, 0.3, 0.1]);
        let l = AffineRoot::new(vec![1.0, -1.0, 0.0], 1);
        let x = [1.25, 0.25, 0.5];
        assert_eq!(l.reflect(&x).unwrap(), x.to_vec());
        assert!(AffineRoot::new(vec![0.0, 0.0], 1)
            .reflect(&[0.1, 0.2])
            .is_err());
    }

    #[test]
    fn reflections_have_sign_minus_one_and_det_minus_one() {
        for d in all_data() {
            for w in d.affine_simple_roots() {
                let s = AffineIsometry::reflection(&w);
                assert_eq!(s.sign, -1);
                assert!((s.determinant() + 1.0).abs() < 1e-12);
                let ss = s.compose(&s);
                assert_eq!(ss.key(), AffineIsometry::identity(d.ambient_dim).key());
            }
        }
    }

    #[test]
    fn weyl_group_orders_and_signs() {
        for d in all_data() {
            if d.weyl_order() > 5000 {
                continue;
            }
            let w = d.weyl_group(100_000).unwrap();
            assert_eq!(w.len(), d.weyl_order(), "{:?}{}", d.family, d.k);
            for g in &w {
                assert!((g.determinant() - g.sign as f64).abs() < 1e-9);
            }
        }
        assert!(matches!(
            RootDatum::new(Family::B, 7).unwrap().weyl_group(100_000),
            Err(Error::GroupTooLarge(_))
        ));
    }

    #[test]
    fn sign_is_multiplicative() {
        let d = RootDatum::new(Family::C, 3).unwrap();
        let w = d.weyl_group(1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = &w[rng.random_range(0..w.len())];
            let b = &w[rng.random_range(0..w.len())];
            let ab = a.compose(b);
            assert_eq!(ab.sign, a.sign * b.sign);
            assert!((ab.determinant() - ab.sign as f64).abs() < 1e-9);
            assert_eq!(
                a.compose(&a.inverse()).key(),
                AffineIsometry::identity(3).key()
            );
        }
    }

    #[test]
    fn coroot_lattice_membership() {
        let a = RootDatum::new(Family::A, 4).unwrap();
        assert!(a.in_coroot_lattice(&[1.0, -2.0, 0.0, 1.0]));
        assert!(!a.in_coroot_lattice(&[1.0, 0.0, 0.0, 0.0]));
        for fam in [Family::B, Family::D] {
            let d = RootDatum::new(fam, 4).unwrap();
            assert!(d.in_coroot_lattice(&[1.0, 1.0, 0.0, 0.0]));
            assert!(!d.in_coroot_lattice(&[1.0, 0.0, 0.0, 0.0]));
        }
        let c = RootDatum::new(Family::C, 3).unwrap();
        assert!(c.in_coroot_lattice(&[1.0, 0.0, 0.0]));
        assert!(!c.in_coroot_lattice(&[0.5, 0.0, 0.0]));
        let g = RootDatum::new(Family::G2, 2).unwrap();
        assert!(g.in_coroot_lattice(&[-1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0]));
        assert!(!g.in_coroot_lattice(&[1.0 / 3.0, -1.0 / 3.0, 0.0]));
    }

    #[test]
    fn folding_lands_in_alcove_with_consistent_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in all_data() {
            for _ in 0..50 {
                let x: Vec<f64> = (0..d.ambient_dim)
                    .map(|_| rng.random_range(-3.0..3.0))
                    .collect();
                let (y, g) = d.fold_to_alcove(&x).unwrap();
                assert!(d.in_alcove(&y), "{:?}{} {x:?} -> {y:?}", d.family, d.k);
                let gy = g.apply(&d.project(&x));
                assert!(gy.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
                assert!(d.in_coroot_lattice(&g.shift));
            }
        }
    }

    #[test]
    fn shell_sums_vanish() {
        let e = |i: usize, j: usize, s: i64, n: usize| {
            let mut v = vec![0i64; n];
            v[i] = 1;
            v[j] = s;
            v
        };
        let sets: Vec<Vec<Vec<i64>>> = vec![
            vec![e(0, 1, -1, 2)],
            vec![e(0, 1, -1, 4), e(2, 3, -1, 4)],
            vec![e(0, 1, -1, 6), e(2, 3, -1, 6), e(4, 5, -1, 6)],
            vec![e(0, 1, -1, 2), e(0, 1, 1, 2)],
            vec![vec![2, 0, 0], vec![0, 1, -1], vec![0, 1, 1]],
            vec![vec![1, -1, 0], vec![-1, -1, 2]],
        ];
        for a in &sets {
            for m in 1..=4 {
                assert_eq!(lattice_shell_sum(a, m).unwrap(), 0, "{a:?} m={m}");
            }
        }
        assert_eq!(lattice_shell_sum(&sets[0], 0).unwrap(), 1);
        assert!(lattice_shell_sum(&[vec![1, -1, 0], vec![0, 1, -1]], 1).is_err());
    }

    #[test]
    fn family_parsing() {
        assert_eq!("g2".parse::<Family>().unwrap(), Family::G2);
        assert!(matches!("F4".parse::<Family>(), Err(Error::Unsupported(_))));
        assert!(matches!("Q".parse::<Family>(), Err(Error::InvalidInput(_))));
        assert!(RootDatum::new(Family::D, 2).is_err());
    }

    proptest! {
        #[test]
        fn affine_reflection_is_an_involution_fixing_its_wall(
            alpha in proptest::collection::vec(-2.0f64..2.0, 3),
            level in -3i64..3,
            x in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            prop_assume!(norm_sq(&alpha) > 1e-3);
            let l = AffineRoot::new(alpha, level);
            let y = l.reflect(&x).unwrap();
            let z = l.reflect(&y).unwrap();
            for (a, b) in x.iter().zip(&z) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert!((l.eval(&y) + l.eval(&x)).abs() < 1e-9);
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            prop_assert!(l.eval(&mid).abs() < 1e-9);
        }
    }
}
