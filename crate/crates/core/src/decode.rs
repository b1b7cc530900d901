//! Matched decoders: ridge-regularized logistic regression over spin-product
//! features capped at order two (pairwise) or three (triplet-inclusive),
//! trained and tested on one stratified 50/50 shot split.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::records::{Label, LabeledCounts};
use crate::seeding::{derive_seed, indexed_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureOrder {
    Pairwise,
    TripletInclusive,
}

impl FeatureOrder {
    fn max_order(self) -> u32 {
        match self {
            FeatureOrder::Pairwise => 2,
            FeatureOrder::TripletInclusive => 3,
        }
    }
}

/// Feature set over spins `s_i = 1 - 2 b_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub order: FeatureOrder,
}

impl FeatureSpec {
    pub const PAIRWISE: FeatureSpec = FeatureSpec {
        order: FeatureOrder::Pairwise,
    };
    pub const TRIPLET: FeatureSpec = FeatureSpec {
        order: FeatureOrder::TripletInclusive,
    };

    /// Variable masks of the product terms: singles, then pairs, then triples.
    pub fn terms(&self, n: usize) -> Vec<u32> {
        let mut terms = Vec::new();
        for order in 1..=self.order.max_order() {
            terms.extend((1u32..1 << n).filter(|m| m.count_ones() == order));
        }
        terms
    }
}

fn spin_product(outcome: u32, term: u32) -> f64 {
    if (outcome & term).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShotRow {
    pub label: Label,
    pub outcome: u32,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotTable {
    pub n: usize,
    pub rows: Vec<ShotRow>,
    pub seed: u64,
}

impl ShotTable {
    pub fn count(&self, split: Split) -> usize {
        self.rows.iter().filter(|r| r.split == split).count()
    }

    pub fn count_label(&self, split: Split, label: Label) -> usize {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.label == label)
            .count()
    }

    /// Rows of one partition aggregated to `(label, outcome) → multiplicity`.
    fn cells(&self, split: Split) -> Vec<(Label, u32, f64)> {
        let size = 1usize << self.n;
        let mut tally = vec![0u64; 2 * size];
        for r in self.rows.iter().filter(|r| r.split == split) {
            tally[r.label.index() * size + r.outcome as usize] += 1;
        }
        tally
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (Label::from_index(k / size).unwrap(), (k % size) as u32, c as f64))
            .collect()
    }
}

/// Stratified split: within each label, a seeded shuffle sends `floor(k/2)` shots to train.
pub fn split(counts: &LabeledCounts, seed: u64) -> Result<ShotTable> {
    let mut rows = Vec::with_capacity(counts.total_shots() as usize);
    for label in Label::BOTH {
        if counts.total(label) < 2 {
            return Err(Error::Degenerate(format!(
                "label {label} needs at least 2 shots to split"
            )));
        }
        let mut outcomes: Vec<u32> = counts
            .nonzero(label)
            .flat_map(|(x, c)| std::iter::repeat_n(x, c as usize))
            .collect();
        outcomes.shuffle(&mut indexed_rng(seed, label.index() as u64));
        let train = outcomes.len() / 2;
        rows.extend(outcomes.iter().enumerate().map(|(i, &outcome)| ShotRow {
            label,
            outcome,
            split: if i < train { Split::Train } else { Split::Test },
        }));
    }
    Ok(ShotTable {
        n: counts.n(),
        rows,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub ridge: f64,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            gradient_tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderModel {
    pub spec: FeatureSpec,
    pub terms: Vec<u32>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub final_loss: f64,
    pub gradient_norm: f64,
}

impl DecoderModel {
    pub fn score(&self, outcome: u32) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .zip(&self.weights)
                .map(|(&t, &w)| w * spin_product(outcome, t))
                .sum::<f64>()
    }

    /// Label 1 iff the score is strictly positive.
    pub fn predict(&self, outcome: u32) -> Label {
        if self.score(outcome) > 0.0 {
            Label::One
        } else {
            Label::Zero
        }
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn train(table: &ShotTable, spec: FeatureSpec) -> Result<DecoderModel> {
    train_with(table, spec, &TrainConfig::default())
}

/// Newton's method with backtracking on mean logistic loss plus `ridge/2 · |w|²`
/// (intercept unpenalized).
pub fn train_with(table: &ShotTable, spec: FeatureSpec, config: &TrainConfig) -> Result<DecoderModel> {
    for label in Label::BOTH {
        if table.count_label(Split::Train, label) == 0 {
            return Err(Error::Degenerate(format!("no training rows with label {label}")));
        }
    }
    let terms = spec.terms(table.n);
    let dim = terms.len() + 1;
    let cells: Vec<(f64, Vec<f64>, f64)> = table
        .cells(Split::Train)
        .into_iter()
        .map(|(label, outcome, c)| {
            let mut phi = Vec::with_capacity(dim);
            phi.push(1.0);
            phi.extend(terms.iter().map(|&t| spin_product(outcome, t)));
            (label.index() as f64, phi, c)
        })
        .collect();
    let total: f64 = cells.iter().map(|c| c.2).sum();
    let lambda = config.ridge;

    let loss = |theta: &[f64]| -> f64 {
        let data: f64 = cells
            .iter()
            .map(|(y, phi, c)| {
                let z: f64 = phi.iter().zip(theta).map(|(a, b)| a * b).sum();
                c * (log1p_exp(z) - y * z)
            })
            .sum::<f64>()
            / total;
        data + 0.5 * lambda * theta[1..].iter().map(|w| w * w).sum::<f64>()
    };

    let mut theta = vec![0.0; dim];
    let mut current = loss(&theta);
    let mut iterations = 0;
    loop {
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for (y, phi, c) in &cells {
            let z: f64 = phi.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = sigmoid(z);
            let r = c * (p - y) / total;
            let w = c * p * (1.0 - p) / total;
            for a in 0..dim {
                grad[a] += r * phi[a];
                for b in 0..=a {
                    hess[a * dim + b] += w * phi[a] * phi[b];
                }
            }
        }
        for a in 0..dim {
            if a > 0 {
                grad[a] += lambda * theta[a];
                hess[a * dim + a] += lambda;
            }
            for b in 0..a {
                hess[b * dim + a] = hess[a * dim + b];
            }
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < config.gradient_tolerance {
            return Ok(DecoderModel {
                spec,
                weights: theta[1..].to_vec(),
                intercept: theta[0],
                terms,
                iterations,
                final_loss: current,
                gradient_norm: gnorm,
            });
        }
        if iterations == config.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                residual: gnorm,
            });
        }
        // tiny jitter keeps the intercept pivot positive on perfectly separated data
        for a in 0..dim {
            hess[a * dim + a] += 1e-14;
        }
        let step_dir = solve_spd(&hess, &grad).unwrap_or_else(|| grad.clone());
        let slope: f64 = step_dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step_dir).map(|(t, d)| t - step * d).collect();
            let value = loss(&trial);
            if value <= current - 1e-4 * step * slope || step < 1e-12 {
                theta = trial;
                current = value;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
    }
}

/// Test-partition accuracy.
pub fn evaluate(model: &DecoderModel, table: &ShotTable) -> f64 {
    evaluate_split(model, table, Split::Test)
}

pub fn evaluate_split(model: &DecoderModel, table: &ShotTable, split: Split) -> f64 {
    let cells = table.cells(split);
    let total: f64 = cells.iter().map(|c| c.2).sum();
    if total == 0.0 {
        return f64::NAN;
    }
    cells
        .iter()
        .filter(|(label, outcome, _)| model.predict(*outcome) == *label)
        .map(|c| c.2)
        .sum::<f64>()
        / total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub pairwise_acc: f64,
    pub triplet_acc: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

/// Trains both feature sets on one shared split and reports held-out accuracy.
pub fn compare_decoders(counts: &LabeledCounts, seed: u64) -> Result<AccuracyReport> {
    let table = split(counts, derive_seed(seed, "split"))?;
    let pairwise = train(&table, FeatureSpec::PAIRWISE)?;
    let triplet = train(&table, FeatureSpec::TRIPLET)?;
    Ok(AccuracyReport {
        pairwise_acc: evaluate(&pairwise, &table),
        triplet_acc: evaluate(&triplet, &table),
        n_train: table.count(Split::Train),
        n_test: table.count(Split::Test),
        seed,
    })
}
