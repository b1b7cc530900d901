use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mobius_falsify::lattice::{decompose, LabelPrior, SubsetId};
use mobius_falsify::maxent::{bayes_accuracy, fit_surrogate, surrogate_decomposition, FitAlgorithm, FitConfig};
use mobius_falsify::pipeline::{self, compare_json, render_table, AnalysisConfig, StatisticChoice, Tolerances};
use mobius_falsify::records::{aggregate, load_dataset, save_dataset, BitOrder};
use mobius_falsify::resample::resample_report;
use mobius_falsify::synth::{parity_error, sample_dataset, NoiseSpec, PairFlip};
use mobius_falsify::Error;

const EXIT_COMPARE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NONCONVERGENCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "mobius-falsify",
    version,
    about = "Lattice information decomposition and pairwise falsification for labeled bitstring counts"
)]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "MOBIUS_FALSIFY_THREADS")]
    threads: Option<usize>,

    /// Which end of a bitstring holds variable 1.
    #[arg(long, global = true, value_enum, default_value_t = Order::Msb)]
    bit_order: Order,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic parity dataset.
    Synth(SynthArgs),
    /// Run the full analysis and write a report.
    Analyze(AnalyzeArgs),
    /// Fit the pairwise maximum-entropy surrogate.
    Maxent(MaxentArgs),
    /// Bootstrap interval and permutation p-value for one statistic.
    Resample(ResampleArgs),
    /// Compare a report against a reference report.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Order {
    Msb,
    Lsb,
}

impl From<Order> for BitOrder {
    fn from(o: Order) -> Self {
        match o {
            Order::Msb => BitOrder::MsbFirst,
            Order::Lsb => BitOrder::LsbFirst,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    A1,
    A1b,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Algorithm {
    Ipf,
    Gradient,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Preset::A1)]
    preset: Preset,
    /// Same flip probability on every bit.
    #[arg(long, conflicts_with = "flip")]
    eps: Option<f64>,
    /// Per-bit flip probabilities, variable 1 first.
    #[arg(long, value_delimiter = ',')]
    flip: Option<Vec<f64>>,
    /// Correlated flip of two variables, as `I,J,P` with 1-based variables.
    #[arg(long = "pair-flip", value_parser = parse_pair_flip)]
    pair_flips: Vec<PairFlip>,
    #[arg(long)]
    shots_per_circuit: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct PriorArgs {
    /// `empirical`, `uniform` or two weights `W0,W1`.
    #[arg(long, default_value = "empirical", value_parser = parse_prior)]
    prior: LabelPrior,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, value_enum, default_value_t = Algorithm::Ipf)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = FitConfig::default().tolerance)]
    fit_tolerance: f64,
    #[arg(long, default_value_t = FitConfig::default().max_iterations)]
    max_iterations: usize,
}

impl FitArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            tolerance: self.fit_tolerance,
            max_iterations: self.max_iterations,
            algorithm: match self.algorithm {
                Algorithm::Ipf => FitAlgorithm::IterativeProportionalFitting,
                Algorithm::Gradient => FitAlgorithm::GradientAscent,
            },
        }
    }
}

#[derive(Args, Debug)]
struct ResampleFlags {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 10_000)]
    shuffles: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    /// `top_f`, `f:<subset>` or `g:<subset>`, e.g. `f:12`.
    #[arg(long, default_value = "top_f", value_parser = parse_statistic)]
    statistic: StatisticChoice,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    input: PathBuf,
    #[command(flatten)]
    resample: ResampleFlags,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MaxentArgs {
    input: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ResampleArgs {
    input: PathBuf,
    #[command(flatten)]
    resample: ResampleFlags,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    report: PathBuf,
    reference: PathBuf,
    /// Absolute tolerance for numeric fields.
    #[arg(long, default_value_t = Tolerances::default().default_abs)]
    tolerance: f64,
    /// Per-field override `FIELD=TOL`; FIELD may be a path prefix such as `lattice.f`.
    #[arg(long = "field-tolerance", value_parser = parse_field_tolerance)]
    field_tolerances: Vec<(String, f64)>,
    /// Path prefixes to skip (default: provenance).
    #[arg(long)]
    ignore: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
            _ => EXIT_DATA,
        };
        let message = match e.root() {
            Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                format!("file not found: {path}")
            }
            _ => e.to_string(),
        };
        Self { code, message }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn parse_pair_flip(s: &str) -> Result<PairFlip, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [i, j, p] = parts[..] else {
        return Err("expected I,J,P".into());
    };
    let var = |t: &str| match t.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v - 1),
        _ => Err(format!("bad variable {t:?}")),
    };
    let prob = p.parse::<f64>().map_err(|_| format!("bad probability {p:?}"))?;
    Ok(PairFlip {
        i: var(i)?,
        j: var(j)?,
        prob,
    })
}

fn parse_prior(s: &str) -> Result<LabelPrior, String> {
    match s {
        "empirical" => Ok(LabelPrior::Empirical),
        "uniform" => Ok(LabelPrior::Uniform),
        _ => {
            let w: Vec<f64> = s
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let [a, b] = w[..] else {
                return Err("expected empirical, uniform or W0,W1".into());
            };
            let prior = LabelPrior::Weights([a, b]);
            prior.resolve_fixed().map_err(|e| e.to_string())?;
            Ok(prior)
        }
    }
}

fn parse_statistic(s: &str) -> Result<StatisticChoice, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_field_tolerance(s: &str) -> Result<(String, f64), String> {
    let (field, tol) = s.split_once('=').ok_or("expected FIELD=TOL")?;
    let tol: f64 = tol.parse().map_err(|_| format!("bad tolerance {tol:?}"))?;
    if !(tol >= 0.0) {
        return Err("tolerance must be non-negative".into());
    }
    Ok((field.to_string(), tol))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, text).map_err(|source| {
            Failure::from(Error::Io {
                path: path.display().to_string(),
                source,
            })
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_DATA,
            message: format!("file not found: {}", path.display()),
        })
    }
}

fn analysis_config(flags: &ResampleFlags, prior: LabelPrior, fit: FitConfig) -> Result<AnalysisConfig, Failure> {
    let config = AnalysisConfig {
        seed: flags.seed,
        prior,
        statistic: flags.statistic,
        bootstrap_replicates: flags.bootstrap,
        permutation_shuffles: flags.shuffles,
        ci_level: flags.ci_level,
        fit,
    };
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(config)
}

fn cmd_synth(args: &SynthArgs, order: BitOrder) -> Outcome {
    let mut spec = match args.preset {
        Preset::A1 => NoiseSpec::a1(args.seed),
        Preset::A1b => NoiseSpec::a1b(args.seed),
    };
    if let Some(eps) = args.eps {
        spec = spec.with_uniform_flip(eps);
    }
    if let Some(flip) = &args.flip {
        spec.flip_probs = flip.clone();
    }
    spec.pair_flips = args.pair_flips.clone();
    if let Some(shots) = args.shots_per_circuit {
        spec.shots_per_circuit = shots;
    }
    spec.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let dataset = sample_dataset(&spec)?;
    save_dataset(&args.output, &dataset, order)?;
    let flips: Vec<String> = spec.flip_probs.iter().map(|e| e.to_string()).collect();
    println!(
        "wrote {}: {} records / {} shots (preset {}, eps [{}], pair flips {}, q = {:.6}, seed {})",
        args.output.display(),
        dataset.records.len(),
        dataset.total_shots(),
        args.preset.to_possible_value().expect("preset has a name").get_name(),
        flips.join(", "),
        spec.pair_flips.len(),
        parity_error(&spec.flip_probs),
        spec.seed,
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(args: &AnalyzeArgs, order: BitOrder) -> Outcome {
    let config = analysis_config(&args.resample, args.prior.prior, args.fit.config())?;
    require_file(&args.input)?;
    let dataset = load_dataset(&args.input, order)?;
    let report = pipeline::run_analysis(&dataset, &config)?;
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Table => {
            let name = args.input.file_stem().map_or("dataset".into(), |s| s.to_string_lossy());
            render_table(&[(&name, &report)])
        }
    };
    emit(args.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_maxent(args: &MaxentArgs, order: BitOrder) -> Outcome {
    let fit = args.fit.config();
    fit.validate().map_err(|e| Failure::usage(e.to_string()))?;
    require_file(&args.input)?;
    let counts = aggregate(&load_dataset(&args.input, order)?)?;
    let prior = args.prior.prior.resolve(&counts)?;
    let surrogate = fit_surrogate(&counts, &fit)?;
    let implied = surrogate_decomposition(&surrogate, prior)?;
    let empirical = decompose(&counts, args.prior.prior)?;
    let full = SubsetId::full(counts.n());
    let out = json!({
        "n": counts.n(),
        "subset": full.key(),
        "empirical_top_f": empirical.top_f(),
        "surrogate_top_f": implied.top_f(),
        "bayes_accuracy": bayes_accuracy(&surrogate.labels[0].joint, &surrogate.labels[1].joint, prior),
        "label_prior": prior,
        "fit": surrogate,
    });
    emit(args.output.as_deref(), &to_json(&out))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_resample(args: &ResampleArgs, order: BitOrder) -> Outcome {
    let config = analysis_config(&args.resample, args.prior.prior, FitConfig::default())?;
    require_file(&args.input)?;
    let counts = aggregate(&load_dataset(&args.input, order)?)?;
    let statistic = config.statistic;
    let prior = config.prior;
    let report = resample_report(
        &counts,
        &statistic.to_string(),
        |c| statistic.evaluate(&decompose(c, prior)?),
        &config.resample_config(),
    )?;
    emit(args.output.as_deref(), &to_json(&report))?;
    Ok(ExitCode::SUCCESS)
}

fn read_report(path: &Path) -> Result<Value, Failure> {
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Failure::from(Error::Parse(format!("{}: {e}", path.display()))))
}

fn cmd_compare(args: &CompareArgs) -> Outcome {
    let mut tolerances = Tolerances {
        default_abs: args.tolerance,
        ..Tolerances::default()
    };
    if !args.ignore.is_empty() {
        tolerances.ignore = args.ignore.clone();
    }
    for (field, tol) in &args.field_tolerances {
        tolerances.per_field.insert(field.clone(), *tol);
    }
    let report = read_report(&args.report)?;
    let reference = read_report(&args.reference)?;
    let checks = compare_json(&report, &reference, &tolerances)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    match args.format {
        Format::Json => print!("{}", to_json(&checks)),
        Format::Table => {
            for c in &checks {
                let tol = c.tolerance.map_or("exact".to_string(), |t| format!("{t:e}"));
                println!(
                    "{} {}  actual {}  expected {}  tol {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.field,
                    c.actual,
                    c.expected,
                    tol
                );
            }
            println!("{} of {} fields pass", checks.len() - failed, checks.len());
        }
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_COMPARE)
    })
}

fn run(cli: &Cli) -> Outcome {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let order = cli.bit_order.into();
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, order),
        Command::Analyze(a) => cmd_analyze(a, order),
        Command::Maxent(a) => cmd_maxent(a, order),
        Command::Resample(a) => cmd_resample(a, order),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
