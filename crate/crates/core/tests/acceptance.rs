//! Acceptance criteria, one PASS/FAIL/SKIP line each. Runs as a plain binary
//! so the lines appear in `cargo test` output; exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mobius_falsify::lattice::{decompose, decompose_exact, LabelPrior, SubsetId};
use mobius_falsify::maxent::{fit_gradient, fit_ipf, kl_divergence, FitAlgorithm, FitConfig};
use mobius_falsify::pipeline::{run_analysis, AnalysisConfig, AnalysisReport};
use mobius_falsify::records::{aggregate, load_dataset, BitOrder, LabeledCounts};
use mobius_falsify::resample::{bootstrap_ci, permutation_test, ResampleConfig};
use mobius_falsify::synth::{exact_joint, parity_error, sample_dataset, NoiseSpec};

/// Dataset shared by criteria 4, 5 and 7, fixed before any result was seen.
const SHARED_SEED: u64 = 7;
const SHARED_EPS: f64 = 0.05;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Verdict {
    status: Status,
    detail: String,
}

impl Verdict {
    fn check(pass: bool, detail: String) -> Self {
        Self {
            status: if pass { Status::Pass } else { Status::Fail },
            detail,
        }
    }
}

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

fn analytic_top_f(eps: f64) -> f64 {
    1.0 - h2((1.0 - (1.0 - 2.0 * eps).powi(3)) / 2.0)
}

/// `I(Y; X1 X2 X3)` by enumerating label, parity string and flip pattern.
fn brute_force_mi(eps: f64) -> f64 {
    let mut joint = [[0.0f64; 8]; 2];
    for (y, row) in joint.iter_mut().enumerate() {
        for x in (0..8u32).filter(|x| x.count_ones() as usize % 2 == y) {
            for e in 0..8u32 {
                let flips = e.count_ones() as i32;
                let p = 0.5 * 0.25 * eps.powi(flips) * (1.0 - eps).powi(3 - flips);
                row[(x ^ e) as usize] += p;
            }
        }
    }
    let mut mi = 0.0;
    for x in 0..8 {
        let px = joint[0][x] + joint[1][x];
        for row in &joint {
            if row[x] > 0.0 {
                mi += row[x] * (row[x] / (px * 0.5)).log2();
            }
        }
    }
    mi
}

fn shared_report() -> AnalysisReport {
    let ds = sample_dataset(&NoiseSpec::a1b(SHARED_SEED).with_uniform_flip(SHARED_EPS)).unwrap();
    run_analysis(&ds, &AnalysisConfig::with_seed(SHARED_SEED)).unwrap()
}

fn top_f(c: &LabeledCounts) -> mobius_falsify::Result<f64> {
    Ok(decompose(c, LabelPrior::Empirical)?.top_f())
}

fn c1() -> Verdict {
    let joint = exact_joint::<f64>(&NoiseSpec::ideal(3, 1, 0)).unwrap();
    let d = decompose_exact(&joint.conditionals().unwrap(), [0.5, 0.5]);
    let top = d.top_f();
    let low = SubsetId::all(3)
        .filter(|s| s.len() < 3)
        .map(|s| d.g(s).abs())
        .fold(0.0, f64::max);
    Verdict::check(
        (top - 1.0).abs() <= 1e-12 && low <= 1e-12,
        format!("f(123) = {top:.12}, max |g| over singletons/pairs = {low:e}"),
    )
}

fn c2() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.01, 0.05, 0.1] {
        let closed = analytic_top_f(eps);
        let brute = brute_force_mi(eps);
        let joint = exact_joint::<f64>(&NoiseSpec::ideal(3, 1, 0).with_uniform_flip(eps)).unwrap();
        let d = decompose_exact(&joint.conditionals().unwrap(), [0.5, 0.5]);
        let low = SubsetId::all(3)
            .filter(|s| s.len() < 3)
            .map(|s| d.g(s).abs())
            .fold(0.0, f64::max);
        let ok = (closed - brute).abs() <= 1e-12 && (d.top_f() - closed).abs() <= 1e-12 && low == 0.0;
        pass &= ok;
        parts.push(format!(
            "eps {eps}: top_f {:.12} vs 1-H2(q) {closed:.12} (brute {:.1e} off), low-order max g {low:e}",
            d.top_f(),
            (closed - brute).abs()
        ));
    }
    Verdict::check(pass, parts.join("; "))
}

fn c3() -> Verdict {
    let truth = analytic_top_f(0.05);
    let mut hits = 0;
    for seed in 0..20u64 {
        let ds = sample_dataset(&NoiseSpec::a1b(1000 + seed).with_uniform_flip(0.05)).unwrap();
        let r = run_analysis(&ds, &AnalysisConfig::with_seed(seed)).unwrap();
        if r.triplet_ci.ci_low <= truth && truth <= r.triplet_ci.ci_high {
            hits += 1;
        }
    }
    Verdict::check(
        hits >= 18,
        format!("analytic {truth:.5} inside the 95% CI in {hits}/20 seeds (need ≥ 18)"),
    )
}

fn c4(report: &AnalysisReport) -> Verdict {
    let s = &report.surrogate;
    let emp = report.lattice.top_f;
    let ratio = emp / s.top_f.abs().max(f64::MIN_POSITIVE);
    Verdict::check(
        s.fit_residual < 1e-10 && s.top_f < 1e-3 && emp > 0.3 && ratio > 100.0,
        format!(
            "fit residual {:.1e}, surrogate f(123) {:.3e}, empirical {emp:.5}, ratio {ratio:.3e}",
            s.fit_residual, s.top_f
        ),
    )
}

fn c5(report: &AnalysisReport) -> Verdict {
    let floor = report.triplet_ci.p_is_floor && report.triplet_ci.permutation_shuffles == 10_000;
    let mut above = 0;
    for run in 0..100u64 {
        let mut spec = NoiseSpec::a1b(5000 + run).with_uniform_flip(SHARED_EPS);
        spec.parity_target = [0, 0];
        let counts = aggregate(&sample_dataset(&spec).unwrap()).unwrap();
        let config = ResampleConfig {
            seed: run,
            ..ResampleConfig::default()
        };
        if permutation_test(&counts, top_f, &config).unwrap().p_value > 0.01 {
            above += 1;
        }
    }
    Verdict::check(
        floor && above >= 95,
        format!(
            "signal p {} {:.1e} (floor {}); null runs with p > 0.01: {above}/100 (need ≥ 95)",
            if report.triplet_ci.p_is_floor { "≤" } else { "=" },
            report.triplet_ci.p_value,
            report.triplet_ci.p_is_floor
        ),
    )
}

fn c6() -> Verdict {
    let truth = analytic_top_f(0.05);
    let runs = 200;
    let mut hits = 0;
    for run in 0..runs {
        let counts = aggregate(&sample_dataset(&NoiseSpec::a1(20_000 + run).with_uniform_flip(0.05)).unwrap()).unwrap();
        let config = ResampleConfig {
            seed: run,
            ..ResampleConfig::default()
        };
        let ci = bootstrap_ci(&counts, top_f, &config).unwrap();
        if ci.ci_low <= truth && truth <= ci.ci_high {
            hits += 1;
        }
    }
    let coverage = hits as f64 / runs as f64;
    Verdict::check(
        coverage >= 0.88,
        format!("coverage {hits}/{runs} = {coverage:.3} (need ≥ 0.88)"),
    )
}

fn c7(report: &AnalysisReport) -> Verdict {
    let target = 1.0 - parity_error(&[SHARED_EPS; 3]);
    let d = &report.decode;
    Verdict::check(
        (d.pairwise_acc - 0.5).abs() < 0.05 && (d.triplet_acc - target).abs() < 0.02,
        format!(
            "pairwise {:.4} (need within 0.05 of 0.5), triplet {:.4} (need within 0.02 of {target:.4})",
            d.pairwise_acc, d.triplet_acc
        ),
    )
}

fn pair_marginals(p: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..3 {
        for j in i + 1..3 {
            for cell in 0..4 {
                out.push(
                    (0..8)
                        .filter(|x| (x >> i & 1) | (x >> j & 1) << 1 == cell)
                        .map(|x| p[x])
                        .sum(),
                );
            }
        }
    }
    out
}

fn c8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let config = FitConfig::default();
    let gradient = FitConfig {
        algorithm: FitAlgorithm::GradientAscent,
        ..config
    };
    let (mut kl_ok, mut worst_marg, mut worst_tv, mut worst_rise) = (true, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let weights: Vec<f64> = (0..8).map(|_| -rng.random::<f64>().ln()).collect();
        let sampler = WeightedIndex::new(&weights).unwrap();
        let shots = 1000;
        let mut counts = [0u64; 8];
        for _ in 0..shots {
            counts[sampler.sample(&mut rng)] += 1;
        }
        let target: Vec<f64> = counts.iter().map(|&c| c as f64 / shots as f64).collect();

        let mut kl = vec![kl_divergence(&target, &[0.125; 8])];
        let ipf = fit_ipf(3, &target, &config, |q| kl.push(kl_divergence(&target, q))).unwrap();
        for w in kl.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
            kl_ok &= w[1] <= w[0] + 1e-12;
        }
        let marg = pair_marginals(&ipf.joint)
            .iter()
            .zip(pair_marginals(&target))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_marg = worst_marg.max(marg);
        let grad = fit_gradient(3, &target, &gradient).unwrap();
        let tv = 0.5
            * ipf
                .joint
                .iter()
                .zip(&grad.joint)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        worst_tv = worst_tv.max(tv);
    }
    Verdict::check(
        kl_ok && worst_marg <= 1e-10 && worst_tv <= 1e-6,
        format!("KL monotone {kl_ok} (largest rise {worst_rise:e}), max marginal error {worst_marg:.1e}, max IPF/gradient TV {worst_tv:.1e}"),
    )
}

const HW_A1: &str = "MOBIUS_FALSIFY_HW_A1";
const HW_A1B: &str = "MOBIUS_FALSIFY_HW_A1B";

fn c9() -> Verdict {
    let (Ok(a1), Ok(a1b)) = (std::env::var(HW_A1), std::env::var(HW_A1B)) else {
        return Verdict {
            status: Status::Skip,
            detail: format!("hardware bundle not supplied (set {HW_A1} and {HW_A1B} to converted dataset files)"),
        };
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, path, f, marg, tv) in [
        ("A1", a1, 0.72609, 0.01367, 0.03589),
        ("A1b", a1b, 0.56521, 0.00326, 0.03410),
    ] {
        let ds = match load_dataset(&path, BitOrder::MsbFirst) {
            Ok(ds) => ds,
            Err(e) => return Verdict::check(false, format!("{name}: {e}")),
        };
        let r = run_analysis(&ds, &AnalysisConfig::default()).unwrap();
        let got = [
            r.lattice.top_f,
            r.diagnostics.max_marginal_delta,
            r.diagnostics.max_pair_tv,
        ];
        pass &= got.iter().zip([f, marg, tv]).all(|(a, b)| (a - b).abs() <= 1e-4);
        parts.push(format!(
            "{name}: f(123) {:.5}, |Δ| {:.5}, TV {:.5}",
            got[0], got[1], got[2]
        ));
    }
    Verdict::check(pass, parts.join("; "))
}

type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Verdict + 'a>);

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        // test discovery by tooling
        return ExitCode::SUCCESS;
    }
    let shared = std::cell::OnceCell::new();
    let report = || shared.get_or_init(shared_report);
    let criteria: Vec<Criterion> = vec![
        ("1 ideal parity exactness", Duration::from_millis(10), Box::new(c1)),
        (
            "2 noisy parity analytic oracle",
            Duration::from_millis(30),
            Box::new(c2),
        ),
        ("3 sampled regime recovery", Duration::from_secs(30), Box::new(c3)),
        (
            "4 pairwise world refutation",
            Duration::from_secs(5),
            Box::new(|| c4(report())),
        ),
        (
            "5 permutation floor and null",
            Duration::from_secs(60),
            Box::new(|| c5(report())),
        ),
        ("6 bootstrap coverage", Duration::from_secs(300), Box::new(c6)),
        ("7 decoder gap", Duration::from_secs(10), Box::new(|| c7(report()))),
        ("8 max-ent properties", Duration::from_secs(30), Box::new(c8)),
        ("9 hardware reproduction", Duration::from_secs(60), Box::new(c9)),
    ];
    let mut failed = 0;
    for (name, limit, run) in &criteria {
        let start = Instant::now();
        let verdict = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let label = match verdict.status {
            Status::Skip => "SKIP",
            Status::Pass if in_time => "PASS",
            _ => {
                failed += 1;
                "FAIL"
            }
        };
        let timing = format!("{:.3}s, limit {:.3}s", elapsed.as_secs_f64(), limit.as_secs_f64());
        let timing = if in_time { timing } else { format!("{timing} EXCEEDED") };
        println!("{label} criterion {name} [{timing}]: {}", verdict.detail);
    }
    println!("acceptance: {failed} failed of {}", criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
