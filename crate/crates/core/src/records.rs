//! Label-conditioned measurement records.
//!
//! Raw records arrive in the "hardware frame": each circuit may XOR a twirl
//! mask onto its outcomes and may permute which physical position carries
//! which logical variable. [`aggregate`] undoes both and pools the corrected
//! shots into one histogram per label.
//!
//! Outcomes are `u32` words in which bit `i` holds variable `i + 1`. In text,
//! bitstrings are written most-significant variable first (the character at
//! position `0` is variable `n`), unless [`BitOrder::LsbFirst`] is requested.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "mobius-falsify/1";
pub const MIN_WIDTH: usize = 2;
pub const MAX_WIDTH: usize = 16;

/// Binary context label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Zero,
    One,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Zero, Label::One];

    pub fn index(self) -> usize {
        match self {
            Label::Zero => 0,
            Label::One => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        match index {
            0 => Some(Label::Zero),
            1 => Some(Label::One),
            _ => None,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Zero => Label::One,
            Label::One => Label::Zero,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Orientation of bitstrings in text form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BitOrder {
    /// First character is the highest-index variable.
    #[default]
    MsbFirst,
    /// First character is variable 1.
    LsbFirst,
}

pub fn parse_bitstring(text: &str, n: usize, order: BitOrder) -> Result<u32> {
    if text.len() != n {
        return Err(Error::WidthMismatch {
            expected: n,
            found: text.len(),
        });
    }
    let mut word = 0u32;
    for (pos, ch) in text.chars().enumerate() {
        let bit = match ch {
            '0' => 0,
            '1' => 1,
            other => {
                return Err(Error::Parse(format!(
                    "invalid character {other:?} in bitstring {text:?}"
                )))
            }
        };
        let var = match order {
            BitOrder::MsbFirst => n - 1 - pos,
            BitOrder::LsbFirst => pos,
        };
        word |= bit << var;
    }
    Ok(word)
}

pub fn format_bitstring(word: u32, n: usize, order: BitOrder) -> String {
    (0..n)
        .map(|pos| {
            let var = match order {
                BitOrder::MsbFirst => n - 1 - pos,
                BitOrder::LsbFirst => pos,
            };
            if word >> var & 1 == 1 {
                '1'
            } else {
                '0'
            }
        })
        .collect()
}

fn check_width(n: usize) -> Result<()> {
    if !(MIN_WIDTH..=MAX_WIDTH).contains(&n) {
        return Err(Error::Invalid(format!(
            "width n = {n} outside supported range {MIN_WIDTH}..={MAX_WIDTH}"
        )));
    }
    Ok(())
}

/// Per-label histograms over `n`-bit outcomes, stored densely.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledCounts {
    n: usize,
    counts: [Vec<u64>; 2],
}

impl LabeledCounts {
    /// Empty histograms of width `n`.
    pub fn new(n: usize) -> Result<Self> {
        check_width(n)?;
        Ok(Self {
            n,
            counts: [vec![0; 1 << n], vec![0; 1 << n]],
        })
    }

    /// Builds histograms from `(outcome, count)` pairs and checks both labels are populated.
    pub fn from_pairs(n: usize, zero: &[(u32, u64)], one: &[(u32, u64)]) -> Result<Self> {
        let mut counts = Self::new(n)?;
        for (label, pairs) in [(Label::Zero, zero), (Label::One, one)] {
            for &(outcome, count) in pairs {
                counts.add(label, outcome, count)?;
            }
        }
        counts.require_both_labels()?;
        Ok(counts)
    }

    /// Builds histograms from dense count vectors of length `2^n`.
    pub fn from_dense(n: usize, zero: Vec<u64>, one: Vec<u64>) -> Result<Self> {
        check_width(n)?;
        for v in [&zero, &one] {
            if v.len() != 1 << n {
                return Err(Error::WidthMismatch {
                    expected: 1 << n,
                    found: v.len(),
                });
            }
        }
        let counts = Self { n, counts: [zero, one] };
        counts.require_both_labels()?;
        Ok(counts)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, label: Label, outcome: u32, count: u64) -> Result<()> {
        let slot = self.counts[label.index()]
            .get_mut(outcome as usize)
            .ok_or_else(|| Error::Invalid(format!("outcome {outcome} does not fit in {} bits", self.n)))?;
        *slot += count;
        Ok(())
    }

    pub fn counts(&self, label: Label) -> &[u64] {
        &self.counts[label.index()]
    }

    pub fn get(&self, label: Label, outcome: u32) -> u64 {
        self.counts[label.index()].get(outcome as usize).copied().unwrap_or(0)
    }

    pub fn total(&self, label: Label) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    pub fn total_shots(&self) -> u64 {
        self.total(Label::Zero) + self.total(Label::One)
    }

    /// Nonzero `(outcome, count)` entries for a label.
    pub fn nonzero(&self, label: Label) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts[label.index()]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(x, &c)| (x as u32, c))
    }

    pub fn require_both_labels(&self) -> Result<()> {
        for label in Label::BOTH {
            if self.total(label) == 0 {
                return Err(Error::Degenerate(format!("label {label} has no shots")));
            }
        }
        Ok(())
    }

    /// Same outcomes with the label roles exchanged.
    pub fn swap_labels(&self) -> Self {
        Self {
            n: self.n,
            counts: [self.counts[1].clone(), self.counts[0].clone()],
        }
    }
}

/// One circuit's raw counts together with the frame it was measured in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircuitRecord {
    pub label: Label,
    /// Twirl mask XORed onto every outcome before readout.
    pub mask: u32,
    /// Logical variable `i` was measured at physical position `role_perm[i]`.
    pub role_perm: Vec<usize>,
    pub raw_counts: BTreeMap<u32, u64>,
    pub circuit_id: String,
    pub shots: u64,
}

impl CircuitRecord {
    /// Record with zero mask and identity permutation.
    pub fn plain(n: usize, label: Label, circuit_id: impl Into<String>, counts: BTreeMap<u32, u64>) -> Self {
        let shots = counts.values().sum();
        Self {
            label,
            mask: 0,
            role_perm: (0..n).collect(),
            raw_counts: counts,
            circuit_id: circuit_id.into(),
            shots,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.role_perm.len() != n {
            return Err(Error::WidthMismatch {
                expected: n,
                found: self.role_perm.len(),
            });
        }
        let mut seen = vec![false; n];
        for &p in &self.role_perm {
            if p >= n || seen[p] {
                return Err(Error::Invalid(format!(
                    "record {:?}: role_perm {:?} is not a permutation of 0..{n}",
                    self.circuit_id, self.role_perm
                )));
            }
            seen[p] = true;
        }
        if self.mask >> n != 0 {
            return Err(Error::Invalid(format!(
                "record {:?}: mask {:#b} wider than {n} bits",
                self.circuit_id, self.mask
            )));
        }
        if let Some((&key, _)) = self.raw_counts.iter().find(|(&k, _)| k >> n != 0) {
            return Err(Error::Invalid(format!(
                "record {:?}: outcome {key:#b} wider than {n} bits",
                self.circuit_id
            )));
        }
        if self.shots == 0 {
            return Err(Error::Invalid(format!(
                "record {:?}: shots must be positive",
                self.circuit_id
            )));
        }
        let counted: u64 = self.raw_counts.values().sum();
        if counted != self.shots {
            return Err(Error::ShotTotal {
                circuit_id: self.circuit_id.clone(),
                counted,
                shots: self.shots,
            });
        }
        Ok(())
    }

    pub fn is_identity_perm(&self) -> bool {
        self.role_perm.iter().enumerate().all(|(i, &p)| i == p)
    }
}

/// Moves logical bit `i` to physical position `perm[i]`.
pub fn rotate_bits(word: u32, perm: &[usize]) -> u32 {
    perm.iter()
        .enumerate()
        .fold(0, |acc, (logical, &physical)| acc | ((word >> logical & 1) << physical))
}

/// Reads logical bit `i` from physical position `perm[i]`.
pub fn unrotate_bits(word: u32, perm: &[usize]) -> u32 {
    perm.iter()
        .enumerate()
        .fold(0, |acc, (logical, &physical)| acc | ((word >> physical & 1) << logical))
}

/// Removes the twirl mask: every key is XORed with the mask, and the mask is zeroed.
pub fn unmask(record: &CircuitRecord) -> CircuitRecord {
    let raw_counts = relabel(&record.raw_counts, |x| x ^ record.mask);
    CircuitRecord {
        mask: 0,
        raw_counts,
        ..record.clone()
    }
}

/// Undoes the role permutation so bit `i` is logical variable `i + 1` again.
pub fn unrotate(record: &CircuitRecord) -> CircuitRecord {
    let raw_counts = relabel(&record.raw_counts, |x| unrotate_bits(x, &record.role_perm));
    CircuitRecord {
        role_perm: (0..record.role_perm.len()).collect(),
        raw_counts,
        ..record.clone()
    }
}

fn relabel(counts: &BTreeMap<u32, u64>, map: impl Fn(u32) -> u32) -> BTreeMap<u32, u64> {
    let mut out = BTreeMap::new();
    for (&k, &c) in counts {
        *out.entry(map(k)).or_insert(0) += c;
    }
    out
}

/// A collection of circuit records sharing one width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub n: usize,
    pub records: Vec<CircuitRecord>,
    pub provenance: String,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        check_width(self.n)?;
        if self.records.is_empty() {
            return Err(Error::Degenerate("dataset has no records".into()));
        }
        for record in &self.records {
            record.validate(self.n)?;
        }
        for label in Label::BOTH {
            if !self.records.iter().any(|r| r.label == label) {
                return Err(Error::Degenerate(format!("no records carry label {label}")));
            }
        }
        Ok(())
    }

    pub fn total_shots(&self) -> u64 {
        self.records.iter().map(|r| r.shots).sum()
    }
}

/// Corrects every record into the logical frame and sums per label.
pub fn aggregate(dataset: &Dataset) -> Result<LabeledCounts> {
    dataset.validate()?;
    let mut counts = LabeledCounts::new(dataset.n)?;
    for record in &dataset.records {
        let corrected = unrotate(&unmask(record));
        for (&outcome, &c) in &corrected.raw_counts {
            counts.add(record.label, outcome, c)?;
        }
    }
    counts.require_both_labels()?;
    Ok(counts)
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    schema: String,
    n: usize,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    provenance: String,
    records: Vec<RecordFile>,
}

#[derive(Serialize, Deserialize)]
struct RecordFile {
    label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role_perm: Option<Vec<usize>>,
    shots: u64,
    counts: BTreeMap<String, u64>,
    #[serde(default)]
    circuit_id: String,
}

/// Parses a dataset document; missing `mask` / `role_perm` mean zero mask / identity.
pub fn parse_dataset(text: &str, order: BitOrder) -> Result<Dataset> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(SCHEMA) => {}
        Some(other) => {
            return Err(Error::UnknownSchema {
                found: other.to_string(),
                expected: SCHEMA,
            })
        }
        None => return Err(Error::Parse("missing string field \"schema\"".into())),
    }
    let file: DatasetFile = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    check_width(file.n)?;
    let n = file.n;
    let records = file
        .records
        .into_iter()
        .map(|r| {
            let label = Label::from_index(r.label as usize)
                .ok_or_else(|| Error::Invalid(format!("record {:?}: label must be 0 or 1", r.circuit_id)))?;
            let mask = match r.mask {
                Some(m) => parse_bitstring(&m, n, order)?,
                None => 0,
            };
            let mut raw_counts = BTreeMap::new();
            for (key, c) in r.counts {
                *raw_counts.entry(parse_bitstring(&key, n, order)?).or_insert(0) += c;
            }
            Ok(CircuitRecord {
                label,
                mask,
                role_perm: r.role_perm.unwrap_or_else(|| (0..n).collect()),
                raw_counts,
                circuit_id: r.circuit_id,
                shots: r.shots,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        n,
        records,
        provenance: file.provenance,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn dataset_to_json(dataset: &Dataset, order: BitOrder) -> String {
    let n = dataset.n;
    let file = DatasetFile {
        schema: SCHEMA.to_string(),
        n,
        provenance: dataset.provenance.clone(),
        records: dataset
            .records
            .iter()
            .map(|r| RecordFile {
                label: r.label.index() as u8,
                mask: Some(format_bitstring(r.mask, n, order)),
                role_perm: Some(r.role_perm.clone()),
                shots: r.shots,
                counts: r
                    .raw_counts
                    .iter()
                    .map(|(&k, &c)| (format_bitstring(k, n, order), c))
                    .collect(),
                circuit_id: r.circuit_id.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("dataset serializes")
}

pub fn load_dataset(path: impl AsRef<Path>, order: BitOrder) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, order)
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset, order: BitOrder) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dataset_to_json(dataset, order) + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
