//! Shot-level bootstrap intervals and label-shuffle permutation tests for
//! scalar statistics of [`LabeledCounts`].
//!
//! Replicate `i` always draws from its own stream derived from the config
//! seed, and results are reduced in index order, so any degree of
//! parallelism reproduces the sequential result bit for bit.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{Label, LabeledCounts};
use crate::seeding::{derive_seed, indexed_rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub bootstrap_replicates: usize,
    pub permutation_shuffles: usize,
    pub ci_level: f64,
    pub seed: u64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            bootstrap_replicates: 5_000,
            permutation_shuffles: 10_000,
            ci_level: 0.95,
            seed: 0,
        }
    }
}

impl ResampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Invalid(format!(
                "ci_level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        if self.bootstrap_replicates == 0 || self.permutation_shuffles == 0 {
            return Err(Error::Invalid("replicate and shuffle counts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicates: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    /// `(1 + exceedances) / (1 + shuffles)`, or `1 / shuffles` at the floor.
    pub p_value: f64,
    /// True when no shuffle reached the observed statistic; read as `p ≤ p_value`.
    pub p_is_floor: bool,
    pub exceedances: usize,
    pub shuffles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub statistic: String,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    pub p_value: f64,
    pub p_is_floor: bool,
    pub exceedances: usize,
    pub bootstrap_replicates: usize,
    pub permutation_shuffles: usize,
    pub seed: u64,
}

/// Multinomial resample of each label's histogram at its own total.
pub fn bootstrap_replicate(counts: &LabeledCounts, rng: &mut impl Rng) -> LabeledCounts {
    let mut out = LabeledCounts::new(counts.n()).expect("width already validated");
    for label in Label::BOTH {
        // conditional binomials: category k takes Bin(remaining draws, c_k / remaining mass)
        let mut draws = counts.total(label);
        let mut mass = draws;
        for (outcome, c) in counts.nonzero(label) {
            if draws == 0 {
                break;
            }
            let take = if c >= mass {
                draws
            } else {
                Binomial::new(draws, c as f64 / mass as f64)
                    .expect("probability in [0, 1]")
                    .sample(rng)
            };
            if take > 0 {
                out.add(label, outcome, take).expect("outcome in range");
            }
            draws -= take;
            mass -= c;
        }
    }
    out
}

/// Per-outcome shot totals pooled over both labels.
pub fn pooled_counts(counts: &LabeledCounts) -> Vec<u64> {
    counts
        .counts(Label::Zero)
        .iter()
        .zip(counts.counts(Label::One))
        .map(|(a, b)| a + b)
        .collect()
}

/// Assigns label 0 to a uniformly random subset of `zeros` pooled shots and
/// label 1 to the rest.
///
/// Only per-outcome label counts matter, so instead of permuting individual
/// shots each outcome's share of label 0 is drawn from the hypergeometric law
/// conditional on the outcomes already visited. The result has the same
/// distribution as a shot-level shuffle at `O(2^n)` cost.
pub fn shuffle_labels(n: usize, pooled: &[u64], zeros: u64, rng: &mut impl Rng) -> LabeledCounts {
    let mut out = LabeledCounts::new(n).expect("width already validated");
    let mut remaining: u64 = pooled.iter().sum();
    let mut zeros_left = zeros;
    for (outcome, &c) in pooled.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let take = if zeros_left == 0 {
            0
        } else if zeros_left == remaining {
            c
        } else {
            Hypergeometric::new(remaining, zeros_left, c)
                .expect("sizes are consistent")
                .sample(rng)
        };
        let outcome = outcome as u32;
        if take > 0 {
            out.add(Label::Zero, outcome, take).expect("outcome in range");
        }
        if take < c {
            out.add(Label::One, outcome, c - take).expect("outcome in range");
        }
        remaining -= c;
        zeros_left -= take;
    }
    out
}

fn evaluate_replicates<F, G>(count: usize, make: G, statistic: &F) -> Result<Vec<f64>>
where
    F: Fn(&LabeledCounts) -> Result<f64> + Sync,
    G: Fn(usize) -> LabeledCounts + Sync,
{
    let results: Vec<Result<f64>> = (0..count)
        .into_par_iter()
        .map(|i| {
            statistic(&make(i)).map_err(|e| Error::Statistic {
                index: i,
                source: Box::new(e),
            })
        })
        .collect();
    results.into_iter().collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval, resampling shots within each label.
pub fn bootstrap_ci<F>(counts: &LabeledCounts, statistic: F, config: &ResampleConfig) -> Result<BootstrapInterval>
where
    F: Fn(&LabeledCounts) -> Result<f64> + Sync,
{
    config.validate()?;
    counts.require_both_labels()?;
    let point = statistic(counts)?;
    let stage = derive_seed(config.seed, "bootstrap");
    let mut values = evaluate_replicates(
        config.bootstrap_replicates,
        |i| bootstrap_replicate(counts, &mut indexed_rng(stage, i as u64)),
        &statistic,
    )?;
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - config.ci_level) / 2.0;
    Ok(BootstrapInterval {
        point,
        ci_low: quantile(&values, alpha),
        ci_high: quantile(&values, 1.0 - alpha),
        replicates: values.len(),
    })
}

/// Label-shuffle permutation test of `statistic ≥ observed`.
pub fn permutation_test<F>(counts: &LabeledCounts, statistic: F, config: &ResampleConfig) -> Result<PermutationOutcome>
where
    F: Fn(&LabeledCounts) -> Result<f64> + Sync,
{
    config.validate()?;
    if counts.total_shots() < 2 {
        return Err(Error::Degenerate("permutation test needs at least 2 shots".into()));
    }
    counts.require_both_labels()?;
    let observed = statistic(counts)?;
    let pooled = pooled_counts(counts);
    let zeros = counts.total(Label::Zero);
    let stage = derive_seed(config.seed, "permutation");
    let values = evaluate_replicates(
        config.permutation_shuffles,
        |i| shuffle_labels(counts.n(), &pooled, zeros, &mut indexed_rng(stage, i as u64)),
        &statistic,
    )?;
    let exceedances = values.iter().filter(|&&v| v >= observed).count();
    let shuffles = config.permutation_shuffles;
    let (p_value, p_is_floor) = if exceedances == 0 {
        (1.0 / shuffles as f64, true)
    } else {
        ((1 + exceedances) as f64 / (1 + shuffles) as f64, false)
    };
    Ok(PermutationOutcome {
        p_value,
        p_is_floor,
        exceedances,
        shuffles,
    })
}

/// Bootstrap interval and permutation p-value for one named statistic.
pub fn resample_report<F>(
    counts: &LabeledCounts,
    name: &str,
    statistic: F,
    config: &ResampleConfig,
) -> Result<ResampleReport>
where
    F: Fn(&LabeledCounts) -> Result<f64> + Sync,
{
    let ci = bootstrap_ci(counts, &statistic, config)?;
    let perm = permutation_test(counts, &statistic, config)?;
    Ok(ResampleReport {
        statistic: name.to_string(),
        point: ci.point,
        ci_low: ci.ci_low,
        ci_high: ci.ci_high,
        ci_level: config.ci_level,
        p_value: perm.p_value,
        p_is_floor: perm.p_is_floor,
        exceedances: perm.exceedances,
        bootstrap_replicates: ci.replicates,
        permutation_shuffles: perm.shuffles,
        seed: config.seed,
    })
}
