//! Parity-structured synthetic data with analytic ground truth.
//!
//! For label `y` the noiseless source is uniform over strings whose parity
//! equals the label's target bit. Readout noise acts in the logical frame:
//! independent per-bit flips, then optional correlated flips of bit pairs.
//! Sampled records are then moved into the raw frame (role permutation,
//! then twirl mask) so that [`crate::records::aggregate`] has something to undo.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::Conditionals;
use crate::records::{rotate_bits, CircuitRecord, Dataset, Label, MAX_WIDTH, MIN_WIDTH};
use crate::scalar::{Field, Real};
use crate::seeding::indexed_rng;

/// Correlated flip of two variables (0-based) with probability `prob`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFlip {
    pub i: usize,
    pub j: usize,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub n: usize,
    /// Parity of the noiseless strings for label 0 and label 1.
    pub parity_target: [u8; 2],
    /// Per-variable independent flip probability.
    pub flip_probs: Vec<f64>,
    #[serde(default)]
    pub pair_flips: Vec<PairFlip>,
    pub masks: Vec<u32>,
    pub role_perms: Vec<Vec<usize>>,
    pub shots_per_circuit: u64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Noiseless, unmasked, single circuit per label.
    pub fn ideal(n: usize, shots_per_circuit: u64, seed: u64) -> Self {
        Self {
            n,
            parity_target: [0, 1],
            flip_probs: vec![0.0; n],
            pair_flips: Vec::new(),
            masks: vec![0],
            role_perms: vec![(0..n).collect()],
            shots_per_circuit,
            seed,
        }
    }

    /// Two labels × all eight 3-bit twirl masks × 512 shots.
    pub fn a1(seed: u64) -> Self {
        Self {
            masks: (0..8).collect(),
            ..Self::ideal(3, 512, seed)
        }
    }

    /// [`NoiseSpec::a1`] with the three cyclic role rotations added.
    pub fn a1b(seed: u64) -> Self {
        Self {
            role_perms: vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]],
            ..Self::a1(seed)
        }
    }

    pub fn with_uniform_flip(mut self, eps: f64) -> Self {
        self.flip_probs = vec![eps; self.n];
        self
    }

    pub fn circuits(&self) -> usize {
        2 * self.masks.len() * self.role_perms.len()
    }

    pub fn total_shots(&self) -> u64 {
        self.circuits() as u64 * self.shots_per_circuit
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if !(MIN_WIDTH..=MAX_WIDTH).contains(&n) {
            return Err(Error::Invalid(format!("n = {n} outside {MIN_WIDTH}..={MAX_WIDTH}")));
        }
        if self.parity_target.iter().any(|&p| p > 1) {
            return Err(Error::Invalid("parity targets must be 0 or 1".into()));
        }
        if self.flip_probs.len() != n {
            return Err(Error::WidthMismatch {
                expected: n,
                found: self.flip_probs.len(),
            });
        }
        let bad_prob = |p: f64| !(0.0..=1.0).contains(&p);
        if self.flip_probs.iter().copied().any(bad_prob) || self.pair_flips.iter().any(|pf| bad_prob(pf.prob)) {
            return Err(Error::Invalid("flip probabilities must lie in [0, 1]".into()));
        }
        if self.pair_flips.iter().any(|pf| pf.i >= n || pf.j >= n || pf.i == pf.j) {
            return Err(Error::Invalid("pair flips need two distinct variables below n".into()));
        }
        if self.masks.is_empty() || self.role_perms.is_empty() {
            return Err(Error::Invalid("masks and role_perms must be nonempty".into()));
        }
        if self.masks.iter().any(|m| m >> n != 0) {
            return Err(Error::Invalid(format!("twirl mask wider than {n} bits")));
        }
        for perm in &self.role_perms {
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            if sorted != (0..n).collect::<Vec<_>>() {
                return Err(Error::Invalid(format!("{perm:?} is not a permutation of 0..{n}")));
            }
        }
        if self.shots_per_circuit == 0 {
            return Err(Error::Invalid("shots_per_circuit must be positive".into()));
        }
        Ok(())
    }
}

/// Label-conditional distributions of the logical outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactJoint<T = f64> {
    pub n: usize,
    pub dist: [Vec<T>; 2],
}

impl<T: Real> ExactJoint<T> {
    pub fn conditionals(&self) -> Result<Conditionals<T>> {
        Conditionals::new(self.n, self.dist[0].clone(), self.dist[1].clone())
    }
}

fn apply_flip<T: Field>(dist: &[T], flip_mask: usize, prob: T) -> Vec<T> {
    let keep = T::one() - prob;
    (0..dist.len())
        .map(|x| keep * dist[x] + prob * dist[x ^ flip_mask])
        .collect()
}

/// Analytic conditionals: uniform parity-consistent strings convolved with the noise.
pub fn exact_joint<T: Field>(spec: &NoiseSpec) -> Result<ExactJoint<T>> {
    spec.validate()?;
    let n = spec.n;
    let size = 1usize << n;
    let weight = T::one() / T::from_f64_lossy((size / 2) as f64);
    let dist = [0, 1].map(|y| {
        let target = spec.parity_target[y] as u32;
        let mut d: Vec<T> = (0..size)
            .map(|x| {
                if (x as u32).count_ones() % 2 == target {
                    weight
                } else {
                    T::zero()
                }
            })
            .collect();
        for (i, &eps) in spec.flip_probs.iter().enumerate() {
            if eps > 0.0 {
                d = apply_flip(&d, 1 << i, T::from_f64_lossy(eps));
            }
        }
        for pf in &spec.pair_flips {
            if pf.prob > 0.0 {
                d = apply_flip(&d, (1 << pf.i) | (1 << pf.j), T::from_f64_lossy(pf.prob));
            }
        }
        d
    });
    Ok(ExactJoint { n, dist })
}

/// Draws raw-frame records for every (label, role permutation, mask) triple.
pub fn sample_dataset(spec: &NoiseSpec) -> Result<Dataset> {
    let joint = exact_joint::<f64>(spec)?;
    let samplers = joint
        .dist
        .iter()
        .map(|d| WeightedIndex::new(d).map_err(|e| Error::Invalid(format!("bad conditional: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(spec.circuits());
    for label in Label::BOTH {
        for (pi, perm) in spec.role_perms.iter().enumerate() {
            for (mi, &mask) in spec.masks.iter().enumerate() {
                let mut rng = indexed_rng(spec.seed, records.len() as u64);
                let mut raw_counts = BTreeMap::new();
                for _ in 0..spec.shots_per_circuit {
                    let logical = samplers[label.index()].sample(&mut rng) as u32;
                    let raw = rotate_bits(logical, perm) ^ mask;
                    *raw_counts.entry(raw).or_insert(0u64) += 1;
                }
                records.push(CircuitRecord {
                    label,
                    mask,
                    role_perm: perm.clone(),
                    raw_counts,
                    circuit_id: format!("y{}-p{pi}-m{mi}", label.index()),
                    shots: spec.shots_per_circuit,
                });
            }
        }
    }
    let provenance = format!(
        "synthetic parity: {}",
        serde_json::to_string(spec).expect("noise spec serializes")
    );
    Ok(Dataset {
        n: spec.n,
        records,
        provenance,
    })
}

/// Probability that an odd number of bits flips under independent flips `eps`.
pub fn parity_error(flip_probs: &[f64]) -> f64 {
    (1.0 - flip_probs.iter().map(|e| 1.0 - 2.0 * e).product::<f64>()) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{decompose_exact, SubsetId};
    use crate::records::aggregate;
    use crate::scalar::binary_entropy;
    use num_rational::Rational64;

    /// Enumerates every (clean string, flip pattern) pair and accumulates probabilities.
    fn brute_joint(n: usize, eps: f64) -> [Vec<f64>; 2] {
        let size = 1usize << n;
        [0u32, 1].map(|y| {
            let mut out = vec![0.0; size];
            for clean in (0..size).filter(|x| (*x as u32).count_ones() % 2 == y) {
                for flips in 0..size {
                    let k = (flips as u32).count_ones() as i32;
                    let p = eps.powi(k) * (1.0 - eps).powi(n as i32 - k) / (size / 2) as f64;
                    out[clean ^ flips] += p;
                }
            }
            out
        })
    }

    #[test]
    fn noiseless_joint_is_uniform_on_parity_strings() {
        let j = exact_joint::<f64>(&NoiseSpec::a1(0)).unwrap();
        for x in 0..8usize {
            let even = x.count_ones() % 2 == 0;
            assert_eq!(j.dist[0][x], if even { 0.25 } else { 0.0 });
            assert_eq!(j.dist[1][x], if even { 0.0 } else { 0.25 });
        }
    }

    #[test]
    fn fully_randomized_bit_destroys_information() {
        let mut spec = NoiseSpec::a1(0);
        spec.flip_probs = vec![0.0, 0.5, 0.0];
        let j = exact_joint::<f64>(&spec).unwrap();
        assert!(j.dist.iter().flatten().all(|&p| (p - 0.125).abs() < 1e-15));
        let d = decompose_exact(&j.conditionals().unwrap(), [0.5, 0.5]);
        assert!(d.g_values().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn noisy_joint_matches_enumeration_and_closed_form() {
        for eps in [0.01, 0.05, 0.1] {
            let j = exact_joint::<f64>(&NoiseSpec::a1(0).with_uniform_flip(eps)).unwrap();
            let brute = brute_joint(3, eps);
            for y in 0..2 {
                for x in 0..8 {
                    assert!((j.dist[y][x] - brute[y][x]).abs() < 1e-15);
                }
            }
            let q = parity_error(&[eps; 3]);
            // brute-force parity error from the enumerated joint
            let q_brute: f64 = (0..8)
                .filter(|x: &usize| x.count_ones() % 2 == 1)
                .map(|x| brute[0][x])
                .sum();
            assert!((q - q_brute).abs() < 1e-15);
            let d = decompose_exact(&j.conditionals().unwrap(), [0.5, 0.5]);
            assert!((d.top_f() - (1.0 - binary_entropy(q))).abs() < 1e-12);
        }
        assert!((parity_error(&[0.05; 3]) - 0.1355).abs() < 1e-12);
    }

    #[test]
    fn symmetric_noise_keeps_pairs_exactly_uniform() {
        let mut spec = NoiseSpec::a1(0);
        spec.flip_probs = vec![0.05, 0.1, 0.2];
        let j = exact_joint::<Rational64>(&spec).unwrap();
        let quarter = Rational64::new(1, 4);
        for y in 0..2 {
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                for cell in 0..4usize {
                    let p: Rational64 = (0..8usize)
                        .filter(|x| (x >> a & 1) == (cell & 1) && (x >> b & 1) == (cell >> 1))
                        .map(|x| j.dist[y][x])
                        .fold(Rational64::from_integer(0), |acc, v| acc + v);
                    assert_eq!(p, quarter);
                }
            }
        }
    }

    #[test]
    fn pair_flips_create_pairwise_leakage() {
        let mut spec = NoiseSpec::a1(0).with_uniform_flip(0.02);
        spec.pair_flips = vec![PairFlip { i: 0, j: 1, prob: 0.05 }];
        spec.parity_target = [0, 1];
        let j = exact_joint::<f64>(&spec).unwrap();
        let d = decompose_exact(&j.conditionals().unwrap(), [0.5, 0.5]);
        // a two-bit flip preserves parity, so the pair marginals stay uniform as well
        assert!(d.max_g_of_order(2) < 1e-12);
        assert!(d.top_f() > 0.5);
    }

    #[test]
    fn budgets_match_presets() {
        let ds = sample_dataset(&NoiseSpec::a1(7)).unwrap();
        assert_eq!(ds.records.len(), 16);
        assert_eq!(ds.total_shots(), 8192);
        let ds = sample_dataset(&NoiseSpec::a1b(7)).unwrap();
        assert_eq!(ds.records.len(), 48);
        assert_eq!(ds.total_shots(), 24576);
    }

    #[test]
    fn noiseless_samples_respect_parity_after_correction() {
        let ds = sample_dataset(&NoiseSpec::ideal(3, 256, 3)).unwrap();
        for r in &ds.records {
            for &x in r.raw_counts.keys() {
                assert_eq!(x.count_ones() % 2, r.label.index() as u32);
            }
        }
        let counts = aggregate(&sample_dataset(&NoiseSpec::a1b(11)).unwrap()).unwrap();
        for label in Label::BOTH {
            for (x, _) in counts.nonzero(label) {
                assert_eq!(x.count_ones() % 2, label.index() as u32);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = NoiseSpec::a1b(5).with_uniform_flip(0.05);
        assert_eq!(sample_dataset(&spec).unwrap(), sample_dataset(&spec).unwrap());
        let other = NoiseSpec {
            seed: 6,
            ..spec.clone()
        };
        assert_ne!(sample_dataset(&spec).unwrap(), sample_dataset(&other).unwrap());
    }

    #[test]
    fn sampled_counts_converge_to_exact_joint() {
        let spec = NoiseSpec {
            shots_per_circuit: 1_000_000 / 16,
            ..NoiseSpec::a1(9).with_uniform_flip(0.05)
        };
        let counts = aggregate(&sample_dataset(&spec).unwrap()).unwrap();
        let j = exact_joint::<f64>(&spec).unwrap();
        for label in Label::BOTH {
            let total = counts.total(label) as f64;
            let tv: f64 = 0.5
                * (0..8u32)
                    .map(|x| (counts.get(label, x) as f64 / total - j.dist[label.index()][x as usize]).abs())
                    .sum::<f64>();
            assert!(tv < 0.01, "tv = {tv}");
        }
        let _ = SubsetId::full(3);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = NoiseSpec::a1(0);
        s.flip_probs = vec![0.1; 2];
        assert!(s.validate().is_err());
        let mut s = NoiseSpec::a1(0);
        s.masks = vec![8];
        assert!(s.validate().is_err());
        let mut s = NoiseSpec::a1(0);
        s.role_perms = vec![vec![0, 0, 1]];
        assert!(s.validate().is_err());
    }
}
