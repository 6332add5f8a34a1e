//! `haarperm` command-line front end.
//!
//! Exit codes: 0 pass, 1 property failure, 2 input error, 3 budget exceeded.
//! Budgets come from `HAARPERM_MAX_SUBSETS`, `HAARPERM_MAX_ANTICHAINS` and
//! `HAARPERM_SAMPLES`; `HAARPERM_THREADS` sets the worker count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use haarperm::carleson::antichain_count;
use haarperm::harness::{gen_permutation, run_suite, GeneratorKind, GeneratorSpec, SuiteConfig};
use haarperm::{
    distortion, hp_norm, run_decomposition, semyonov_k, verify_certificate, weighted_norm_sq, Budgets,
    CarlesonExponent, CheckRecord, CoefficientSeries, DecompositionCertificate, Normalization, Param,
    PermutationMap, SearchMode, SearchOutcome,
};
use serde_json::{json, Value as Json};

#[derive(Parser)]
#[command(name = "haarperm", version, about = "Permutations of the Haar system on truncated dyadic trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Semyonov K, distortion and level preservation of a permutation.
    Analyze {
        permutation: PathBuf,
        /// Carleson exponent α (repeatable); defaults to 1.
        #[arg(long)]
        alpha: Vec<String>,
        /// Exponent given as p = 2/(α+1) (repeatable).
        #[arg(long, short = 'p')]
        p: Vec<String>,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        /// Sampled mode: seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampled mode: number of random collections (default: the sample budget).
        #[arg(long)]
        trials: Option<u64>,
        /// Only check that the requested searches fit the budgets.
        #[arg(long)]
        depth_check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Squared BMO / Λ norm, or H^p norm, of a coefficient file.
    Norm {
        coefficients: PathBuf,
        #[arg(long, value_enum)]
        space: Space,
        /// Required for lambda and hp.
        #[arg(long, short = 'p')]
        p: Option<String>,
    },
    /// Runs the stopping-time decomposition and writes its certificate.
    Decompose {
        permutation: PathBuf,
        coefficients: PathBuf,
        #[arg(long = "K", default_value = "auto")]
        k: String,
        #[arg(long = "M", default_value = "auto")]
        m: String,
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long, short = 'p')]
        p: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-checks a stored certificate.
    Verify { certificate: PathBuf },
    /// Writes a generated permutation.
    Gen {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        depth: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the property suite (default configuration without --config).
    Suite {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Antichain,
    Sampled,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Space {
    Bmo,
    Lambda,
    Hp,
}

enum Failure {
    /// A checked property does not hold.
    Property(String),
    /// Bad input or usage.
    Input(String),
    Budget(String),
}

impl From<haarperm::Error> for Failure {
    fn from(e: haarperm::Error) -> Self {
        if e.is_budget() {
            return Failure::Budget(e.to_string());
        }
        let hint = match &e {
            haarperm::Error::NonContraction { .. } => "; choose K above M(M+1) or pass --K auto",
            haarperm::Error::ZeroSeries => "; the series needs at least one nonzero coefficient",
            _ => "",
        };
        Failure::Input(format!("{e}{hint}"))
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn in_file<T>(path: &Path, r: haarperm::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Input(msg) => Failure::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, format!("{text}\n"))
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Input(format!("stdout: {e}"))),
            _ => Ok(()),
        },
    }
}

fn pretty(v: &Json) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

fn exponents(alpha: &[String], p: &[String]) -> Result<Vec<CarlesonExponent>, Failure> {
    let mut out = Vec::new();
    for a in alpha {
        out.push(CarlesonExponent::parse(Some(a), None)?);
    }
    for q in p {
        out.push(CarlesonExponent::parse(None, Some(q))?);
    }
    if out.is_empty() {
        out.push(CarlesonExponent::BMO);
    }
    Ok(out)
}

fn outcome_json(o: &SearchOutcome) -> Json {
    json!({
        "value": o.value,
        "exact": o.value.is_exact(),
        "witness": o.witness,
        "candidates": o.candidates,
        "complete": o.exact,
    })
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    path: &Path,
    alpha: &[String],
    p: &[String],
    mode: Mode,
    seed: u64,
    trials: Option<u64>,
    depth_check: bool,
    out: Option<&Path>,
    budgets: &Budgets,
) -> Outcome {
    let alphas = exponents(alpha, p)?;
    let pi = in_file(path, PermutationMap::from_json_str(&read(path)?))?;
    let depth = pi.depth();
    if depth_check {
        let intervals = (1u64 << (depth + 1).min(63)) - 1;
        let subsets_fit = intervals < 64 && (1u64 << intervals) <= budgets.max_subsets;
        let antichains = antichain_count(depth);
        let report = json!({
            "depth": depth,
            "intervals": intervals,
            "exact_fits": subsets_fit,
            "antichains": antichains.to_string(),
            "antichain_fits": antichains <= budgets.max_antichains as u128,
            "budgets": budgets,
        });
        emit(out, &pretty(&report))?;
        return match mode {
            Mode::Exact if !subsets_fit => Err(Failure::Budget(format!(
                "exact search at depth {depth} needs 2^{intervals} subsets, over the budget of {}",
                budgets.max_subsets
            ))),
            Mode::Antichain if antichains > budgets.max_antichains as u128 => Err(Failure::Budget(format!(
                "antichain search at depth {depth} needs {antichains} antichains, over the budget of {}",
                budgets.max_antichains
            ))),
            _ => Ok(()),
        };
    }
    let sampled = SearchMode::Sampled { seed, trials: trials.unwrap_or(budgets.samples) };
    let k_mode = match mode {
        Mode::Exact => SearchMode::Exact,
        Mode::Antichain => SearchMode::Antichain,
        Mode::Sampled => sampled,
    };
    // distortion has no antichain reduction; that mode uses full enumeration
    let m_mode = match mode {
        Mode::Sampled => sampled,
        _ => SearchMode::Exact,
    };
    let k = semyonov_k(&pi, k_mode, budgets)?;
    let mut dist = Vec::new();
    for a in &alphas {
        let m = distortion(&pi, a, m_mode, budgets)?;
        let mut entry = outcome_json(&m);
        entry["alpha"] = json!(a);
        dist.push(entry);
    }
    let report = json!({
        "depth": depth,
        "level_preserving": pi.is_level_preserving(),
        "mode": k_mode,
        "K": outcome_json(&k),
        "distortion": dist,
    });
    emit(out, &pretty(&report))
}

fn norm(path: &Path, space: Space, p: Option<&str>) -> Outcome {
    let p = match (space, p) {
        (Space::Bmo, None) => None,
        (Space::Bmo, Some(_)) => return Err(Failure::Input("--p does not apply to --space bmo".into())),
        (_, None) => return Err(Failure::Input("--p is required with --space lambda and --space hp".into())),
        (_, Some(text)) => Some(CarlesonExponent::parse(None, Some(text))?.p()),
    };
    let x = in_file(path, CoefficientSeries::from_json_str(&read(path)?))?;
    let (quantity, value) = match (space, p) {
        (Space::Hp, Some(p)) => {
            let expected = Normalization::hp(p)?;
            if x.normalization() != expected {
                return Err(Failure::Input(
                    haarperm::Error::NormalizationMismatch {
                        expected: format!("{} p={p}", expected.name()),
                        found: x.normalization().name().into(),
                    }
                    .to_string(),
                ));
            }
            ("norm", hp_norm(&x, p)?)
        }
        (_, p) => {
            let alpha = match p {
                Some(p) => CarlesonExponent::from_p(p)?,
                None => CarlesonExponent::BMO,
            };
            ("squared_norm", weighted_norm_sq(&x, &alpha)?)
        }
    };
    let space_name = match space {
        Space::Bmo => "bmo",
        Space::Lambda => "lambda",
        Space::Hp => "hp",
    };
    let mut report = json!({"space": space_name, "quantity": quantity, "value": value, "exact": value.is_exact()});
    if let Some(p) = p {
        report["p"] = json!(p.to_string());
    }
    emit(None, &pretty(&report))
}

fn summary(report: &[CheckRecord]) -> Outcome {
    for check in report {
        println!("{check}");
    }
    let failed: Vec<&str> = report.iter().filter(|c| c.asserted && !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        println!("verdict: pass");
        Ok(())
    } else {
        println!("verdict: fail ({})", failed.join(", "));
        Err(Failure::Property(format!("failed checks: {}", failed.join(", "))))
    }
}

#[allow(clippy::too_many_arguments)]
fn decompose(
    perm_path: &Path,
    coeff_path: &Path,
    k: &str,
    m: &str,
    alpha: Option<&str>,
    p: Option<&str>,
    out: &Path,
    budgets: &Budgets,
) -> Outcome {
    let k = Param::parse(k).map_err(|e| Failure::Input(format!("--K: {e}")))?;
    let m = Param::parse(m).map_err(|e| Failure::Input(format!("--M: {e}")))?;
    let alpha = CarlesonExponent::parse(alpha, p)?;
    let pi = in_file(perm_path, PermutationMap::from_json_str(&read(perm_path)?))?;
    let x = in_file(coeff_path, CoefficientSeries::from_json_str(&read(coeff_path)?))?;
    let cert = run_decomposition(&pi, &x, k, &alpha, m, budgets)?;
    emit(Some(out), &cert.to_json_string()?)?;
    summary(&cert.report)
}

fn verify(path: &Path) -> Outcome {
    let cert = in_file(path, DecompositionCertificate::from_json_str(&read(path)?))?;
    summary(&verify_certificate(&cert).checks)
}

fn gen(kind: &str, depth: u32, seed: u64, out: Option<&Path>) -> Outcome {
    let kind: GeneratorKind = kind.parse()?;
    let pi = gen_permutation(GeneratorSpec::new(kind, depth, seed))?;
    emit(out, &pi.to_json_string()?)
}

fn suite(config: Option<&Path>, out: Option<&Path>) -> Outcome {
    let config = match config {
        Some(path) => SuiteConfig::from_json_file(path)?,
        None => SuiteConfig::default(),
    };
    let report = run_suite(&config)?;
    emit(out, &report.to_json_string()?)?;
    for rec in &report.properties {
        let subject = rec.subject.as_deref().map(|s| format!(" [{s}]")).unwrap_or_default();
        let verdict = if rec.passed() { "pass" } else { "FAIL" };
        eprintln!("{verdict} {}{subject}: {} trials, {} failures", rec.name, rec.trials, rec.failures);
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Property(format!("{} properties failed", report.failures().count())))
    }
}

fn configure_threads() -> Outcome {
    let Ok(text) = std::env::var("HAARPERM_THREADS") else {
        return Ok(());
    };
    let threads: usize = text
        .trim()
        .parse()
        .map_err(|_| Failure::Input(format!("HAARPERM_THREADS={text:?} is not a count")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Input(format!("HAARPERM_THREADS: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    configure_threads()?;
    let budgets = Budgets::from_env()?;
    match cli.command {
        Command::Analyze { permutation, alpha, p, mode, seed, trials, depth_check, out } => analyze(
            &permutation,
            &alpha,
            &p,
            mode,
            seed,
            trials,
            depth_check,
            out.as_deref(),
            &budgets,
        ),
        Command::Norm { coefficients, space, p } => norm(&coefficients, space, p.as_deref()),
        Command::Decompose { permutation, coefficients, k, m, alpha, p, out } => decompose(
            &permutation,
            &coefficients,
            &k,
            &m,
            alpha.as_deref(),
            p.as_deref(),
            &out,
            &budgets,
        ),
        Command::Verify { certificate } => verify(&certificate),
        Command::Gen { kind, depth, seed, out } => gen(&kind, depth, seed, out.as_deref()),
        Command::Suite { config, out } => suite(config.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Property(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Budget(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
