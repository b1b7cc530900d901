//! Plug-in mutual information over every variable subset, and Möbius
//! inversion of the resulting cumulative observable on the Boolean lattice.
//!
//! For a binary label `Y` and bits `X_1..X_n`, `g(S) = I(Y; X_S)` in bits and
//! `f` is the unique function with `g(S) = Σ_{T ⊆ S} f(T)`, `g(∅) = 0`.
//! Vectors indexed by subset use the subset bitmask as index (bit `i` is
//! variable `i + 1`), so index `0` is the empty set.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{Label, LabeledCounts};
use crate::scalar::Real;

/// Nonempty subset of variables, as a bitmask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetId(u32);

impl SubsetId {
    pub fn new(mask: u32, n: usize) -> Result<Self> {
        if mask == 0 || (mask as u64) >= (1u64 << n) {
            return Err(Error::Invalid(format!("subset mask {mask:#b} invalid for n = {n}")));
        }
        Ok(Self(mask))
    }

    /// From 1-based variable numbers, e.g. `&[1, 3]`.
    pub fn from_vars(vars: &[usize], n: usize) -> Result<Self> {
        let mut mask = 0u32;
        for &v in vars {
            if v == 0 || v > n {
                return Err(Error::Invalid(format!("variable {v} out of range 1..={n}")));
            }
            mask |= 1 << (v - 1);
        }
        Self::new(mask, n)
    }

    /// Parses a key such as `"123"` or `"1,10"`.
    pub fn parse(key: &str, n: usize) -> Result<Self> {
        let vars: std::result::Result<Vec<usize>, _> = if key.contains(',') {
            key.split(',').map(|t| t.trim().parse()).collect()
        } else {
            key.chars().map(|c| c.to_string().parse()).collect()
        };
        let vars = vars.map_err(|_| Error::Invalid(format!("bad subset key {key:?}")))?;
        Self::from_vars(&vars, n)
    }

    pub fn full(n: usize) -> Self {
        Self(((1u64 << n) - 1) as u32)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// 0-based variable indices in ascending order.
    pub fn vars(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |i| self.0 >> i & 1 == 1)
    }

    /// Sorted 1-based variable list; comma-separated once any index exceeds 9.
    pub fn key(self) -> String {
        let vars: Vec<usize> = self.vars().map(|v| v + 1).collect();
        if vars.iter().all(|&v| v < 10) {
            vars.iter().map(|v| v.to_string()).collect()
        } else {
            vars.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        }
    }

    /// All nonempty subsets of `n` variables in mask order.
    pub fn all(n: usize) -> impl Iterator<Item = SubsetId> {
        (1..(1u32 << n)).map(SubsetId)
    }
}

impl fmt::Display for SubsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// `f(S) = Σ_{T ⊆ S} (-1)^{|S|-|T|} g(T)` for every `S`, via the fast subset transform.
pub fn mobius_inverse<T: Num + Copy>(g: &[T]) -> Vec<T> {
    assert!(g.len().is_power_of_two(), "lattice vector length must be 2^n");
    let mut f = g.to_vec();
    let mut bit = 1;
    while bit < f.len() {
        for s in 0..f.len() {
            if s & bit != 0 {
                f[s] = f[s] - f[s ^ bit];
            }
        }
        bit <<= 1;
    }
    f
}

/// `g(S) = Σ_{T ⊆ S} f(T)` for every `S`.
pub fn mobius_forward<T: Num + Copy>(f: &[T]) -> Vec<T> {
    assert!(f.len().is_power_of_two(), "lattice vector length must be 2^n");
    let mut g = f.to_vec();
    let mut bit = 1;
    while bit < g.len() {
        for s in 0..g.len() {
            if s & bit != 0 {
                g[s] = g[s] + g[s ^ bit];
            }
        }
        bit <<= 1;
    }
    g
}

/// Three-variable inclusion–exclusion, `g(∅) = 0`.
pub fn triplet_term<T: Num + Copy>(g: &[T]) -> T {
    assert_eq!(g.len(), 8, "triplet term needs a 3-variable lattice");
    g[0b111] - g[0b011] - g[0b101] - g[0b110] + g[0b001] + g[0b010] + g[0b100]
}

/// How the label marginal `P(Y)` is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelPrior {
    /// Empirical label frequencies of the counts.
    #[default]
    Empirical,
    Uniform,
    /// Explicit positive weights, normalized on use.
    Weights([f64; 2]),
}

impl LabelPrior {
    pub fn resolve(&self, counts: &LabeledCounts) -> Result<[f64; 2]> {
        match *self {
            LabelPrior::Empirical => {
                let t0 = counts.total(Label::Zero) as f64;
                let t1 = counts.total(Label::One) as f64;
                if t0 == 0.0 || t1 == 0.0 {
                    return Err(Error::Degenerate("empty label histogram".into()));
                }
                Ok([t0 / (t0 + t1), t1 / (t0 + t1)])
            }
            other => other.resolve_fixed(),
        }
    }

    /// Prior without reference to counts; `Empirical` falls back to uniform.
    pub fn resolve_fixed(&self) -> Result<[f64; 2]> {
        match *self {
            LabelPrior::Empirical | LabelPrior::Uniform => Ok([0.5, 0.5]),
            LabelPrior::Weights([a, b]) => {
                if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
                    return Err(Error::Invalid(format!(
                        "prior weights must be positive, got [{a}, {b}]"
                    )));
                }
                Ok([a / (a + b), b / (a + b)])
            }
        }
    }
}

/// Label-conditional distributions `p(x | y)` over `2^n` outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditionals<T = f64> {
    n: usize,
    dist: [Vec<T>; 2],
}

impl<T: Real> Conditionals<T> {
    pub fn new(n: usize, zero: Vec<T>, one: Vec<T>) -> Result<Self> {
        let tol = T::epsilon().sqrt();
        for (label, v) in [(0, &zero), (1, &one)] {
            if v.len() != 1 << n {
                return Err(Error::WidthMismatch {
                    expected: 1 << n,
                    found: v.len(),
                });
            }
            if v.iter().any(|p| !(p.is_finite() && *p >= T::zero())) {
                return Err(Error::Invalid(format!(
                    "label {label}: probabilities must be finite and nonnegative"
                )));
            }
            let total: T = v.iter().copied().sum();
            if (total - T::one()).abs() > tol {
                return Err(Error::Invalid(format!("label {label}: probabilities sum to {total:?}")));
            }
        }
        Ok(Self { n, dist: [zero, one] })
    }

    /// Empirical plug-in conditionals.
    pub fn from_counts(counts: &LabeledCounts) -> Result<Self> {
        counts.require_both_labels()?;
        let dist = Label::BOTH.map(|label| {
            let total = T::from_f64_lossy(counts.total(label) as f64);
            counts
                .counts(label)
                .iter()
                .map(|&c| T::from_f64_lossy(c as f64) / total)
                .collect::<Vec<T>>()
        });
        Ok(Self { n: counts.n(), dist })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dist(&self, label: Label) -> &[T] {
        &self.dist[label.index()]
    }

    pub fn marginal(&self, label: Label, subset: SubsetId) -> Vec<T> {
        marginalize(self.dist(label), subset)
    }
}

/// Sums a distribution over `2^n` outcomes onto the variables in `subset`.
/// Output index bit `r` is the `r`-th smallest variable of the subset.
pub fn marginalize<T: Real>(dist: &[T], subset: SubsetId) -> Vec<T> {
    let vars: Vec<usize> = subset.vars().collect();
    let mut out = vec![T::zero(); 1 << vars.len()];
    for (x, &p) in dist.iter().enumerate() {
        let idx = vars
            .iter()
            .enumerate()
            .fold(0usize, |acc, (r, &v)| acc | ((x >> v & 1) << r));
        out[idx] = out[idx] + p;
    }
    out
}

fn sum_out_bit<T: Real>(v: &[T], r: usize) -> Vec<T> {
    let low_mask = (1usize << r) - 1;
    (0..v.len() / 2)
        .map(|j| {
            let base = ((j >> r) << (r + 1)) | (j & low_mask);
            v[base] + v[base | 1 << r]
        })
        .collect()
}

/// `I(Y; X)` in bits from aligned label-conditional vectors.
fn mi_from_marginals<T: Real>(p0: &[T], p1: &[T], prior: [T; 2]) -> T {
    let mi = p0
        .iter()
        .zip(p1)
        .map(|(&a, &b)| {
            let mix = prior[0] * a + prior[1] * b;
            prior[0] * T::xlog2_ratio(a, mix) + prior[1] * T::xlog2_ratio(b, mix)
        })
        .sum::<T>();
    // per-cell terms are nonnegative up to rounding
    mi.max(T::zero())
}

/// `g(S) = I(Y; X_S)` for a single subset.
pub fn mutual_information_exact<T: Real>(cond: &Conditionals<T>, prior: [T; 2], subset: SubsetId) -> T {
    let p0 = cond.marginal(Label::Zero, subset);
    let p1 = cond.marginal(Label::One, subset);
    mi_from_marginals(&p0, &p1, prior)
}

/// Cumulative observable and its Möbius inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeDecomposition<T = f64> {
    n: usize,
    g: Vec<T>,
    f: Vec<T>,
}

impl<T: Real> LatticeDecomposition<T> {
    /// Inverts an arbitrary cumulative vector; `g[0]` is forced to zero.
    pub fn from_cumulative(n: usize, mut g: Vec<T>) -> Result<Self> {
        if g.len() != 1 << n {
            return Err(Error::WidthMismatch {
                expected: 1 << n,
                found: g.len(),
            });
        }
        g[0] = T::zero();
        let f = mobius_inverse(&g);
        Ok(Self { n, g, f })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn g(&self, subset: SubsetId) -> T {
        self.g[subset.mask() as usize]
    }

    pub fn f(&self, subset: SubsetId) -> T {
        self.f[subset.mask() as usize]
    }

    pub fn g_values(&self) -> &[T] {
        &self.g
    }

    pub fn f_values(&self) -> &[T] {
        &self.f
    }

    /// `f` of the full variable set.
    pub fn top_f(&self) -> T {
        self.f(SubsetId::full(self.n))
    }

    /// Largest `|g(S) - Σ_{T⊆S} f(T)|`.
    pub fn forward_residual(&self) -> T {
        mobius_forward(&self.f)
            .iter()
            .zip(&self.g)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Largest violation of `g(T) ≤ g(S)` over `T ⊂ S` differing by one variable.
    pub fn monotonicity_violation(&self) -> T {
        let mut worst = T::zero();
        for s in 1..self.g.len() {
            for v in 0..self.n {
                if s >> v & 1 == 1 {
                    worst = worst.max(self.g[s ^ (1 << v)] - self.g[s]);
                }
            }
        }
        worst
    }

    pub fn max_g_of_order(&self, order: usize) -> T {
        SubsetId::all(self.n)
            .filter(|s| s.len() == order)
            .map(|s| self.g(s))
            .fold(T::zero(), T::max)
    }

    pub fn summary(&self) -> DecompositionSummary {
        let mut g = BTreeMap::new();
        let mut f = BTreeMap::new();
        for s in SubsetId::all(self.n) {
            g.insert(s.key(), self.g(s).to_f64_lossy());
            f.insert(s.key(), self.f(s).to_f64_lossy());
        }
        DecompositionSummary {
            n: self.n,
            top_f: self.top_f().to_f64_lossy(),
            forward_residual: self.forward_residual().to_f64_lossy(),
            g,
            f,
        }
    }
}

/// Serializable view of a decomposition keyed by subset strings such as `"123"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub n: usize,
    pub top_f: f64,
    pub forward_residual: f64,
    pub g: BTreeMap<String, f64>,
    pub f: BTreeMap<String, f64>,
}

/// Full lattice from label-conditional distributions.
///
/// Marginals are produced by walking a spanning tree of the lattice from the
/// full set downward, so each subset costs one sum-out of its parent.
pub fn decompose_exact<T: Real>(cond: &Conditionals<T>, prior: [T; 2]) -> LatticeDecomposition<T> {
    let n = cond.n();
    let mut g = vec![T::zero(); 1 << n];
    let full = SubsetId::full(n).mask();
    walk(full, cond.dist(Label::Zero), cond.dist(Label::One), prior, &mut g);
    let f = mobius_inverse(&g);
    LatticeDecomposition { n, g, f }
}

// Parent of S is S ∪ {min missing variable}; children of P therefore drop a
// variable below P's first gap, whose rank inside P equals its index.
fn walk<T: Real>(set: u32, p0: &[T], p1: &[T], prior: [T; 2], g: &mut [T]) {
    g[set as usize] = mi_from_marginals(p0, p1, prior);
    let first_gap = (!set).trailing_zeros() as usize;
    for k in 0..first_gap {
        let child = set & !(1 << k);
        if child == 0 {
            continue;
        }
        let c0 = sum_out_bit(p0, k);
        let c1 = sum_out_bit(p1, k);
        walk(child, &c0, &c1, prior, g);
    }
}

/// Low-order leakage diagnostics between the two label-conditionals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowOrderDiagnostics<T = f64> {
    pub max_marginal_delta: T,
    pub max_pair_tv: T,
    pub max_singleton_mi: T,
    pub max_pair_mi: T,
}

pub fn diagnostics_exact<T: Real>(cond: &Conditionals<T>, prior: [T; 2]) -> LowOrderDiagnostics<T> {
    let n = cond.n();
    let half = T::from_f64_lossy(0.5);
    let mut out = LowOrderDiagnostics {
        max_marginal_delta: T::zero(),
        max_pair_tv: T::zero(),
        max_singleton_mi: T::zero(),
        max_pair_mi: T::zero(),
    };
    for i in 0..n {
        let s = SubsetId(1 << i);
        let a = cond.marginal(Label::Zero, s);
        let b = cond.marginal(Label::One, s);
        // |Δ| is the same for bit value 0 and 1
        for v in 0..2 {
            out.max_marginal_delta = out.max_marginal_delta.max((a[v] - b[v]).abs());
        }
        out.max_singleton_mi = out.max_singleton_mi.max(mi_from_marginals(&a, &b, prior));
        for j in i + 1..n {
            let s = SubsetId(1 << i | 1 << j);
            let a = cond.marginal(Label::Zero, s);
            let b = cond.marginal(Label::One, s);
            let tv = half * a.iter().zip(&b).map(|(&x, &y)| (x - y).abs()).sum::<T>();
            out.max_pair_tv = out.max_pair_tv.max(tv);
            out.max_pair_mi = out.max_pair_mi.max(mi_from_marginals(&a, &b, prior));
        }
    }
    out
}

fn prior_as<T: Real>(prior: [f64; 2]) -> [T; 2] {
    prior.map(T::from_f64_lossy)
}

/// Plug-in `p̂(x_S | y)` for both labels.
pub fn conditional_distribution(counts: &LabeledCounts, subset: SubsetId) -> Result<[Vec<f64>; 2]> {
    check_subset(counts, subset)?;
    let cond = Conditionals::<f64>::from_counts(counts)?;
    Ok(Label::BOTH.map(|label| cond.marginal(label, subset)))
}

/// Plug-in `I(Y; X_S)` in bits.
pub fn mutual_information(counts: &LabeledCounts, subset: SubsetId, prior: LabelPrior) -> Result<f64> {
    check_subset(counts, subset)?;
    let cond = Conditionals::<f64>::from_counts(counts)?;
    Ok(mutual_information_exact(
        &cond,
        prior_as(prior.resolve(counts)?),
        subset,
    ))
}

pub fn decompose(counts: &LabeledCounts, prior: LabelPrior) -> Result<LatticeDecomposition<f64>> {
    let cond = Conditionals::<f64>::from_counts(counts)?;
    Ok(decompose_exact(&cond, prior_as(prior.resolve(counts)?)))
}

pub fn diagnostics(counts: &LabeledCounts, prior: LabelPrior) -> Result<LowOrderDiagnostics<f64>> {
    let cond = Conditionals::<f64>::from_counts(counts)?;
    Ok(diagnostics_exact(&cond, prior_as(prior.resolve(counts)?)))
}

fn check_subset(counts: &LabeledCounts, subset: SubsetId) -> Result<()> {
    if (subset.mask() as u64) >= 1u64 << counts.n() {
        return Err(Error::Invalid(format!("subset {subset} exceeds n = {}", counts.n())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{parse_bitstring, BitOrder};
    use crate::scalar::binary_entropy;
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn counts_from(n: usize, zero: &[(&str, u64)], one: &[(&str, u64)]) -> LabeledCounts {
        let conv = |v: &[(&str, u64)]| -> Vec<(u32, u64)> {
            v.iter()
                .map(|&(k, c)| (parse_bitstring(k, n, BitOrder::MsbFirst).unwrap(), c))
                .collect()
        };
        LabeledCounts::from_pairs(n, &conv(zero), &conv(one)).unwrap()
    }

    fn ideal_parity() -> LabeledCounts {
        let even: Vec<(u32, u64)> = (0..8u32).filter(|x| x.count_ones() % 2 == 0).map(|x| (x, 1)).collect();
        let odd: Vec<(u32, u64)> = (0..8u32).filter(|x| x.count_ones() % 2 == 1).map(|x| (x, 1)).collect();
        LabeledCounts::from_pairs(3, &even, &odd).unwrap()
    }

    /// Direct four-cell (or larger) plug-in from the joint table, no shared code path.
    fn brute_mi(counts: &LabeledCounts, subset: u32) -> f64 {
        let total = counts.total_shots() as f64;
        let mut joint = BTreeMap::<(usize, u32), f64>::new();
        for label in Label::BOTH {
            for (x, c) in counts.nonzero(label) {
                *joint.entry((label.index(), x & subset)).or_default() += c as f64 / total;
            }
        }
        let py = |y: usize| joint.iter().filter(|((l, _), _)| *l == y).map(|(_, p)| p).sum::<f64>();
        let px = |x: u32| joint.iter().filter(|((_, k), _)| *k == x).map(|(_, p)| p).sum::<f64>();
        joint.iter().map(|(&(y, x), &p)| p * (p / (py(y) * px(x))).log2()).sum()
    }

    #[test]
    fn subset_keys() {
        assert_eq!(SubsetId::full(3).key(), "123");
        assert_eq!(SubsetId::from_vars(&[3, 1], 3).unwrap().mask(), 0b101);
        assert_eq!(SubsetId::parse("13", 3).unwrap().mask(), 0b101);
        assert_eq!(SubsetId::from_vars(&[1, 10], 12).unwrap().key(), "1,10");
        assert_eq!(SubsetId::parse("1,10", 12).unwrap().mask(), 0b10_0000_0001);
        assert!(SubsetId::new(0, 3).is_err());
        assert!(SubsetId::new(8, 3).is_err());
        assert!(SubsetId::from_vars(&[4], 3).is_err());
    }

    #[test]
    fn conditional_distribution_examples() {
        let c = counts_from(3, &[("000", 4)], &[("111", 1)]);
        let [p0, _] = conditional_distribution(&c, SubsetId::from_vars(&[1], 3).unwrap()).unwrap();
        assert_eq!(p0, vec![1.0, 0.0]);

        let parity = ideal_parity();
        for pair in [[1, 2], [1, 3], [2, 3]] {
            let [p0, p1] = conditional_distribution(&parity, SubsetId::from_vars(&pair, 3).unwrap()).unwrap();
            assert_eq!(p0, vec![0.25; 4]);
            assert_eq!(p1, vec![0.25; 4]);
        }

        let c = counts_from(2, &[("00", 1), ("01", 1), ("10", 2)], &[("11", 1)]);
        let [p0, _] = conditional_distribution(&c, SubsetId::from_vars(&[2], 2).unwrap()).unwrap();
        assert_eq!(p0, vec![0.5, 0.5]);
    }

    #[test]
    fn mutual_information_examples() {
        let same = counts_from(2, &[("00", 2), ("11", 3)], &[("00", 4), ("11", 6)]);
        assert!(mutual_information(&same, SubsetId::full(2), LabelPrior::Empirical).unwrap() < 1e-15);

        let parity = ideal_parity();
        let mi = mutual_information(&parity, SubsetId::full(3), LabelPrior::Empirical).unwrap();
        assert!((mi - 1.0).abs() < 1e-15);

        // second variable held at 0 so the width stays at 2
        let c = counts_from(2, &[("00", 3), ("01", 1)], &[("00", 1), ("01", 3)]);
        let s = SubsetId::from_vars(&[1], 2).unwrap();
        let mi = mutual_information(&c, s, LabelPrior::Empirical).unwrap();
        let expected = 1.0 - binary_entropy(0.25_f64);
        assert!((expected - 0.188_721_875_540_867).abs() < 1e-12);
        assert!((mi - expected).abs() < 1e-12);
        assert!((mi - brute_mi(&c, 0b01)).abs() < 1e-12);
    }

    #[test]
    fn decompose_examples() {
        let uniform: Vec<(u32, u64)> = (0..8).map(|x| (x, 5)).collect();
        let c = LabeledCounts::from_pairs(3, &uniform, &uniform).unwrap();
        let d = decompose(&c, LabelPrior::Empirical).unwrap();
        assert!(d.g_values().iter().chain(d.f_values()).all(|v| v.abs() < 1e-15));

        let d = decompose(&ideal_parity(), LabelPrior::Uniform).unwrap();
        assert!((d.top_f() - 1.0).abs() < 1e-12);
        for s in SubsetId::all(3).filter(|s| s.len() < 3) {
            assert!(d.f(s).abs() < 1e-12, "f({s}) = {}", d.f(s));
        }
    }

    #[test]
    fn hand_lattice_triplet_value() {
        // g(1)=0.1, g(2)=0.2, g(3)=0, g(12)=0.4, g(13)=0.15, g(23)=0.25, g(123)=0.9
        let g: Vec<f64> = vec![0.0, 0.1, 0.2, 0.4, 0.0, 0.15, 0.25, 0.9];
        let d = LatticeDecomposition::from_cumulative(3, g.clone()).unwrap();
        assert!((d.top_f() - 0.40).abs() < 1e-12);
        assert!((triplet_term(&g) - 0.40).abs() < 1e-12);
        assert!(d.forward_residual() < 1e-12);
        // forward sum by explicit subset enumeration
        for s in 0..8usize {
            let total: f64 = (0..8usize).filter(|t| t & !s == 0).map(|t| d.f_values()[t]).sum();
            assert!((total - g[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn diagnostics_examples() {
        let same = counts_from(3, &[("001", 2), ("110", 1)], &[("001", 4), ("110", 2)]);
        let d = diagnostics(&same, LabelPrior::Empirical).unwrap();
        assert_eq!(d.max_marginal_delta, 0.0);
        assert_eq!(d.max_pair_tv, 0.0);
        assert!(d.max_singleton_mi < 1e-15 && d.max_pair_mi < 1e-15);

        // pair (½,½,0,0) vs (¼,¼,¼,¼)
        let c = counts_from(
            2,
            &[("00", 1), ("01", 1)],
            &[("00", 1), ("01", 1), ("10", 1), ("11", 1)],
        );
        let d = diagnostics(&c, LabelPrior::Empirical).unwrap();
        assert!((d.max_pair_tv - 0.5).abs() < 1e-15);
        assert!((d.max_marginal_delta - 0.5).abs() < 1e-15);

        let d = diagnostics(&ideal_parity(), LabelPrior::Empirical).unwrap();
        assert_eq!(d.max_singleton_mi, 0.0);
        assert_eq!(d.max_pair_mi, 0.0);
    }

    #[test]
    fn inclusion_exclusion_matches_generic_inversion_exactly() {
        let g: Vec<Rational64> = [0, 3, -7, 11, 5, 2, 13, 29]
            .iter()
            .zip([1, 2, 3, 5, 7, 11, 13, 17])
            .map(|(&a, b)| Rational64::new(a, b))
            .collect();
        let f = mobius_inverse(&g);
        assert_eq!(f[7], triplet_term(&g));
        assert_eq!(mobius_forward(&f), g);
    }

    #[test]
    fn decomposition_works_in_single_precision() {
        let cond = Conditionals::<f32>::from_counts(&ideal_parity()).unwrap();
        let d = decompose_exact(&cond, [0.5, 0.5]);
        assert!((d.top_f() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lattice_walk_matches_direct_marginalization() {
        let pairs: Vec<(u32, u64)> = (0..32).map(|x| (x, 1 + (x as u64 * 7919) % 13)).collect();
        let other: Vec<(u32, u64)> = (0..32).map(|x| (x, 1 + (x as u64 * 104_729) % 17)).collect();
        let c = LabeledCounts::from_pairs(5, &pairs, &other).unwrap();
        let d = decompose(&c, LabelPrior::Empirical).unwrap();
        for s in SubsetId::all(5) {
            let direct = mutual_information(&c, s, LabelPrior::Empirical).unwrap();
            assert!((d.g(s) - direct).abs() < 1e-14);
            assert!((d.g(s) - brute_mi(&c, s.mask())).abs() < 1e-12);
        }
        assert!(d.monotonicity_violation() < 1e-12);
    }

    fn arb_counts(n: usize) -> impl Strategy<Value = LabeledCounts> {
        let len = 1usize << n;
        (
            prop::collection::vec(0u64..20, len),
            prop::collection::vec(0u64..20, len),
        )
            .prop_filter("both labels populated", |(a, b)| {
                a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0
            })
            .prop_map(move |(a, b)| LabeledCounts::from_dense(n, a, b).unwrap())
    }

    proptest! {
        #[test]
        fn mobius_round_trip(g in prop::collection::vec(-5.0f64..5.0, 16)) {
            let f = mobius_inverse(&g);
            let back = mobius_forward(&f);
            for (a, b) in back.iter().zip(&g) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn mi_is_bounded_and_decomposition_consistent(c in arb_counts(3)) {
            let d = decompose(&c, LabelPrior::Empirical).unwrap();
            prop_assert!(d.forward_residual() < 1e-12);
            prop_assert!(d.monotonicity_violation() < 1e-12);
            for s in SubsetId::all(3) {
                let g = d.g(s);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
            }
        }

        #[test]
        fn mi_is_permutation_equivariant(c in arb_counts(3), perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
            use crate::records::rotate_bits;
            let mut permuted = LabeledCounts::new(3).unwrap();
            for label in Label::BOTH {
                for (x, k) in c.nonzero(label) {
                    permuted.add(label, rotate_bits(x, &perm), k).unwrap();
                }
            }
            for s in SubsetId::all(3) {
                let ps = SubsetId::new(rotate_bits(s.mask(), &perm), 3).unwrap();
                let a = mutual_information(&c, s, LabelPrior::Empirical).unwrap();
                let b = mutual_information(&permuted, ps, LabelPrior::Empirical).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn scaling_counts_keeps_conditionals(c in arb_counts(3), k in 2u64..6) {
            let scaled = LabeledCounts::from_dense(
                3,
                c.counts(Label::Zero).iter().map(|x| x * k).collect(),
                c.counts(Label::One).iter().map(|x| x * k).collect(),
            ).unwrap();
            for s in SubsetId::all(3) {
                let a = conditional_distribution(&c, s).unwrap();
                let b = conditional_distribution(&scaled, s).unwrap();
                for y in 0..2 {
                    for (p, q) in a[y].iter().zip(&b[y]) {
                        prop_assert!((p - q).abs() < 1e-15);
                    }
                }
            }
        }
    }
}
