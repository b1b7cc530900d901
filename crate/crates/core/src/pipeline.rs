//! End-to-end analysis of one dataset: aggregate, decompose, diagnose,
//! resample the chosen statistic, fit the pairwise surrogate and compare
//! decoders. Also report comparison and table rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::decode::{compare_decoders, AccuracyReport};
use crate::error::{Error, Result};
use crate::lattice::{
    decompose, diagnostics, DecompositionSummary, LabelPrior, LatticeDecomposition, LowOrderDiagnostics, SubsetId,
};
use crate::maxent::{bayes_accuracy, fit_surrogate, surrogate_decomposition, FitAlgorithm, FitConfig};
use crate::records::{aggregate, Dataset, Label, LabeledCounts, MAX_WIDTH, SCHEMA};
use crate::resample::{resample_report, ResampleConfig, ResampleReport};
use crate::seeding::derive_seed;

/// Statistic handed to the bootstrap and permutation stages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StatisticChoice {
    /// `f` of the full variable set.
    #[default]
    TopF,
    F(SubsetId),
    G(SubsetId),
}

impl StatisticChoice {
    fn subset(self, n: usize) -> Result<SubsetId> {
        match self {
            StatisticChoice::TopF => Ok(SubsetId::full(n)),
            StatisticChoice::F(s) | StatisticChoice::G(s) => SubsetId::new(s.mask(), n),
        }
    }

    pub fn evaluate(self, decomposition: &LatticeDecomposition<f64>) -> Result<f64> {
        let s = self.subset(decomposition.n())?;
        Ok(match self {
            StatisticChoice::G(_) => decomposition.g(s),
            _ => decomposition.f(s),
        })
    }
}

impl fmt::Display for StatisticChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatisticChoice::TopF => f.write_str("top_f"),
            StatisticChoice::F(s) => write!(f, "f:{s}"),
            StatisticChoice::G(s) => write!(f, "g:{s}"),
        }
    }
}

impl FromStr for StatisticChoice {
    type Err = Error;

    /// Accepts `top_f`, `f:<subset>` or `g:<subset>`, e.g. `f:12`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "top_f" {
            return Ok(StatisticChoice::TopF);
        }
        match s.split_once(':') {
            Some(("f", key)) => Ok(StatisticChoice::F(SubsetId::parse(key, MAX_WIDTH)?)),
            Some(("g", key)) => Ok(StatisticChoice::G(SubsetId::parse(key, MAX_WIDTH)?)),
            _ => Err(Error::Invalid(format!(
                "statistic must be top_f, f:<subset> or g:<subset>, got {s:?}"
            ))),
        }
    }
}

impl TryFrom<String> for StatisticChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StatisticChoice> for String {
    fn from(s: StatisticChoice) -> String {
        s.to_string()
    }
}

/// Everything besides the dataset that determines a report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Master seed; the resample and decode stages derive their own from it.
    pub seed: u64,
    pub prior: LabelPrior,
    pub statistic: StatisticChoice,
    pub bootstrap_replicates: usize,
    pub permutation_shuffles: usize,
    pub ci_level: f64,
    pub fit: FitConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let resample = ResampleConfig::default();
        Self {
            seed: 0,
            prior: LabelPrior::Empirical,
            statistic: StatisticChoice::TopF,
            bootstrap_replicates: resample.bootstrap_replicates,
            permutation_shuffles: resample.permutation_shuffles,
            ci_level: resample.ci_level,
            fit: FitConfig::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }

    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds {
            resample: derive_seed(self.seed, "resample"),
            decode: derive_seed(self.seed, "decode"),
        }
    }

    pub fn resample_config(&self) -> ResampleConfig {
        ResampleConfig {
            bootstrap_replicates: self.bootstrap_replicates,
            permutation_shuffles: self.permutation_shuffles,
            ci_level: self.ci_level,
            seed: self.stage_seeds().resample,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resample_config().validate()?;
        self.fit.validate()?;
        self.prior.resolve_fixed()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub resample: u64,
    pub decode: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub n: usize,
    pub circuits: usize,
    pub shots: u64,
    pub shots_per_label: [u64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSummary {
    pub algorithm: FitAlgorithm,
    /// `f` of the full set implied by the fitted pairwise model.
    pub top_f: f64,
    pub bayes_accuracy: f64,
    pub fit_residual: f64,
    pub iterations: [usize; 2],
    pub forward_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema: String,
    pub version: String,
    pub dataset: String,
    pub config: AnalysisConfig,
    pub stage_seeds: StageSeeds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub budget: Budget,
    pub label_prior: [f64; 2],
    pub lattice: DecompositionSummary,
    pub diagnostics: LowOrderDiagnostics<f64>,
    pub triplet_ci: ResampleReport,
    pub surrogate: SurrogateSummary,
    pub decode: AccuracyReport,
    pub provenance: Provenance,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("analysis report: {e}")))
    }
}

fn stage<T>(name: &'static str, result: Result<T>) -> Result<T> {
    result.map_err(Error::in_stage(name))
}

/// Runs every stage on `dataset` under `config`.
pub fn run_analysis(dataset: &Dataset, config: &AnalysisConfig) -> Result<AnalysisReport> {
    stage("config", config.validate())?;
    let counts = stage("aggregate", aggregate(dataset))?;
    analyze_counts(&counts, config, dataset.records.len(), &dataset.provenance)
}

/// Same as [`run_analysis`] for already aggregated counts.
pub fn analyze_counts(
    counts: &LabeledCounts,
    config: &AnalysisConfig,
    circuits: usize,
    dataset: &str,
) -> Result<AnalysisReport> {
    stage("config", config.validate())?;
    let seeds = config.stage_seeds();
    let n = counts.n();
    let statistic = config.statistic;
    stage("config", statistic.subset(n))?;

    let prior = stage("lattice", config.prior.resolve(counts))?;
    let lattice = stage("lattice", decompose(counts, config.prior))?;
    let diag = stage("diagnostics", diagnostics(counts, config.prior))?;

    let triplet_ci = stage(
        "resample",
        resample_report(
            counts,
            &statistic.to_string(),
            |c| statistic.evaluate(&decompose(c, config.prior)?),
            &config.resample_config(),
        ),
    )?;

    let surrogate = stage("maxent", fit_surrogate(counts, &config.fit))?;
    let implied = stage("maxent", surrogate_decomposition(&surrogate, prior))?;
    let surrogate = SurrogateSummary {
        algorithm: surrogate.algorithm,
        top_f: implied.top_f(),
        bayes_accuracy: bayes_accuracy(&surrogate.labels[0].joint, &surrogate.labels[1].joint, prior),
        fit_residual: surrogate.fit_residual,
        iterations: surrogate.iterations(),
        forward_residual: implied.forward_residual(),
    };

    let decode = stage("decode", compare_decoders(counts, seeds.decode))?;

    let report = AnalysisReport {
        budget: Budget {
            n,
            circuits,
            shots: counts.total_shots(),
            shots_per_label: Label::BOTH.map(|l| counts.total(l)),
        },
        label_prior: prior,
        lattice: lattice.summary(),
        diagnostics: diag,
        triplet_ci,
        surrogate,
        decode,
        provenance: Provenance {
            schema: SCHEMA.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            dataset: dataset.to_string(),
            config: *config,
            stage_seeds: seeds,
        },
    };
    stage("report", check_finite(&report))?;
    Ok(report)
}

fn check_finite(report: &AnalysisReport) -> Result<()> {
    // serde_json writes non-finite floats as null
    let value = serde_json::to_value(report).expect("report serializes");
    match flatten(&value).into_iter().find(|(_, v)| v.is_null()) {
        Some((field, _)) => Err(Error::Degenerate(format!("report field {field} is not finite"))),
        None => Ok(()),
    }
}

/// Leaf paths joined with `.`; array elements use their index.
pub fn flatten(value: &Value) -> BTreeMap<String, Value> {
    fn go(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
        let join = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match value {
            Value::Object(map) => {
                for (k, v) in map {
                    go(&join(k), v, out);
                }
            }
            Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    go(&join(&i.to_string()), v, out);
                }
            }
            leaf => {
                out.insert(prefix.to_string(), leaf.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    go("", value, &mut out);
    out
}

/// Absolute tolerances for [`compare_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub default_abs: f64,
    /// Overrides keyed by field path or path prefix; the longest match wins.
    pub per_field: BTreeMap<String, f64>,
    /// Path prefixes skipped entirely.
    pub ignore: Vec<String>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            default_abs: 1e-9,
            per_field: BTreeMap::new(),
            ignore: vec!["provenance".to_string()],
        }
    }
}

fn covers(prefix: &str, field: &str) -> bool {
    field == prefix || field.strip_prefix(prefix).is_some_and(|rest| rest.starts_with('.'))
}

impl Tolerances {
    pub fn with_field(mut self, field: impl Into<String>, tolerance: f64) -> Self {
        self.per_field.insert(field.into(), tolerance);
        self
    }

    pub fn for_field(&self, field: &str) -> f64 {
        self.per_field
            .iter()
            .filter(|(k, _)| covers(k, field))
            .max_by_key(|(k, _)| k.len())
            .map_or(self.default_abs, |(_, &t)| t)
    }

    fn ignored(&self, field: &str) -> bool {
        self.ignore.iter().any(|p| covers(p, field))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldCheck {
    pub field: String,
    pub actual: Value,
    pub expected: Value,
    /// Absent for non-numeric fields, which must match exactly.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

/// Field-by-field comparison of two JSON reports.
pub fn compare_json(report: &Value, reference: &Value, tolerances: &Tolerances) -> Result<Vec<FieldCheck>> {
    let actual = flatten(report);
    let expected = flatten(reference);
    let keep = |k: &&String| !tolerances.ignored(k);
    let extra: Vec<&String> = expected
        .keys()
        .filter(keep)
        .filter(|k| !actual.contains_key(*k))
        .collect();
    let missing: Vec<&String> = actual
        .keys()
        .filter(keep)
        .filter(|k| !expected.contains_key(*k))
        .collect();
    if !extra.is_empty() || !missing.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "fields only in reference: {extra:?}; fields only in report: {missing:?}"
        )));
    }
    Ok(actual
        .iter()
        .filter(|(k, _)| keep(k))
        .map(|(field, a)| {
            let e = &expected[field];
            let (tolerance, pass) = match (a.as_f64(), e.as_f64()) {
                (Some(x), Some(y)) => {
                    let t = tolerances.for_field(field);
                    (Some(t), (x - y).abs() <= t)
                }
                _ => (None, a == e),
            };
            FieldCheck {
                field: field.clone(),
                actual: a.clone(),
                expected: e.clone(),
                tolerance,
                pass,
            }
        })
        .collect())
}

pub fn compare_report(
    report: &AnalysisReport,
    reference: &AnalysisReport,
    tolerances: &Tolerances,
) -> Result<Vec<FieldCheck>> {
    let a = serde_json::to_value(report).expect("report serializes");
    let b = serde_json::to_value(reference).expect("report serializes");
    compare_json(&a, &b, tolerances)
}

/// Plain-text tables of named reports, headline columns first and the
/// surrogate comparison second.
pub fn render_table(rows: &[(&str, &AnalysisReport)]) -> String {
    let top = |r: &AnalysisReport| format!("f({})", SubsetId::full(r.budget.n));
    let head = rows.first().map_or("f(123)".to_string(), |(_, r)| top(r));
    let mut main = vec![vec![
        "run".to_string(),
        "circuits/shots".to_string(),
        "max |Δ| marg".to_string(),
        "max TV pair".to_string(),
        format!("{head} [CI]"),
        "pair/trip acc".to_string(),
    ]];
    let mut second = vec![vec![
        "run".to_string(),
        "statistic".to_string(),
        "p".to_string(),
        format!("surrogate {head}"),
        "Bayes acc".to_string(),
        "fit residual".to_string(),
    ]];
    for (name, r) in rows {
        let ci = &r.triplet_ci;
        main.push(vec![
            name.to_string(),
            format!("{}/{}", r.budget.circuits, r.budget.shots),
            format!("{:.5}", r.diagnostics.max_marginal_delta),
            format!("{:.5}", r.diagnostics.max_pair_tv),
            format!("{:.5} [{:.5}, {:.5}]", r.lattice.top_f, ci.ci_low, ci.ci_high),
            format!("{:.3}/{:.3}", r.decode.pairwise_acc, r.decode.triplet_acc),
        ]);
        let p = if ci.p_is_floor {
            format!("≤ {:.1e}", ci.p_value)
        } else {
            format!("{:.4}", ci.p_value)
        };
        second.push(vec![
            name.to_string(),
            format!("{} = {:.5}", ci.statistic, ci.point),
            p,
            format!("{:.3e}", r.surrogate.top_f),
            format!("{:.3}", r.surrogate.bayes_accuracy),
            format!("{:.1e}", r.surrogate.fit_residual),
        ]);
    }
    format!("{}\n{}", layout(&main), layout(&second))
}

fn layout(rows: &[Vec<String>]) -> String {
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}
