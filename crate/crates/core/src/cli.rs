//! `ompt` command-line front end.
//!
//! Every subcommand prints the pretty JSON serialization of one library
//! call. Exit status is 0 on success, 1 on domain errors (infeasible
//! thresholds, enumeration budget, malformed input files) and 2 on usage
//! errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::experiments::{
    build_gaussian_dictionary, build_identity_fourier_dictionary, convergence_check, report_csv,
    report_json, run_trials, ConvergenceInstance, Measurement, OmptStopping, TrialConfig,
    FAST_TRIALS,
};
use crate::linalg::{parse_vector, read_matrix, Dictionary};
use crate::metrics::coherence_report;
use crate::oracle::{sparsest_solution, DEFAULT_TOL};
use crate::solvers::{recover_sparse, SolverOptions, Strategy};
use crate::thresholds::{corollary_intervals, noiseless_interval, noisy_interval};

#[derive(Debug, Parser)]
#[command(
    name = "ompt",
    version,
    about = "Sparse recovery by orthogonal matching pursuit with thresholding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Coherence indices of a dictionary (--matrix, --kmax, optional --ric, --omega).
    Metrics(Flags),
    /// Admissible thresholds from --nu/--delta/--k (plus --epsilon/--amin for
    /// noise), or the four corollary intervals of --matrix at --k.
    Thresholds(Flags),
    /// Recovers a sparse vector from --signal with OMPT (--t) or OMP (--k).
    Recover(Flags),
    /// Sparsest exact representation of --signal over --matrix, up to --kmax atoms.
    Oracle(Flags),
    /// Identity+Fourier Monte-Carlo sweep over k = 1..=kmax.
    Benchmark(Flags),
    /// Runs OMPT on a random instance and checks the residual and iteration bounds.
    Converge(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Residual,
    Sparsity,
}

#[derive(Debug, Args)]
struct Flags {
    /// Dictionary in the `n d` header plus rows text format.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    amin: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Compute restricted isometry constants exhaustively.
    #[arg(long)]
    ric: bool,
    #[arg(long)]
    omega: bool,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// 200 trials per k instead of 1000.
    #[arg(long)]
    fast: bool,
    /// Observed vector as whitespace-separated reals.
    #[arg(long)]
    signal: Option<PathBuf>,
    /// Benchmark configuration as `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// OMPT stopping rule in the benchmark.
    #[arg(long, value_enum)]
    ompt_mode: Option<Mode>,
}

enum Failure {
    Usage(String),
    Domain(Error),
    /// Output was written but the result is itself a negative answer.
    Infeasible,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn require<T>(value: Option<T>, flag: &str) -> std::result::Result<T, Failure> {
    value.ok_or_else(|| Failure::Usage(format!("missing required flag --{flag}")))
}

/// Runs the CLI on `args` (including the program name) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `ompt <SUBCOMMAND> --help` for the flag grammar.");
            2
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(Failure::Infeasible) => 1,
    }
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Metrics(f) => metrics(f),
        Command::Thresholds(f) => thresholds(f),
        Command::Recover(f) => recover(f),
        Command::Oracle(f) => oracle(f),
        Command::Benchmark(f) => benchmark(f),
        Command::Converge(f) => converge(f),
    }
}

fn json_only(flags: &Flags) -> Outcome {
    if flags.format == Some(Format::Csv) {
        return Err(Failure::Usage(
            "--format csv is only available for benchmark".into(),
        ));
    }
    Ok(())
}

fn emit(out: Option<&Path>, body: &str) -> Outcome {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| Error::io(path, e).into()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e).into())
        }
    }
}

fn emit_json<T: Serialize>(flags: &Flags, value: &T) -> Outcome {
    let mut body = serde_json::to_string_pretty(value).map_err(Error::from)?;
    body.push('\n');
    emit(flags.out.as_deref(), &body)
}

fn load_dictionary(flags: &Flags) -> std::result::Result<Dictionary, Failure> {
    let path = require(flags.matrix.as_deref(), "matrix")?;
    Ok(Dictionary::new(read_matrix(path)?)?)
}

fn load_signal(flags: &Flags) -> std::result::Result<Vec<f64>, Failure> {
    let path = require(flags.signal.as_deref(), "signal")?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_vector(&text)?)
}

fn metrics(flags: Flags) -> Outcome {
    json_only(&flags)?;
    let dict = load_dictionary(&flags)?;
    let kmax = flags
        .kmax
        .unwrap_or_else(|| 4.min(dict.cols().saturating_sub(1)));
    let report = coherence_report(&dict, kmax, flags.ric, flags.omega)?;
    emit_json(&flags, &report)
}

fn thresholds(flags: Flags) -> Outcome {
    json_only(&flags)?;
    let k = require(flags.k, "k")?;
    if flags.matrix.is_some() {
        let dict = load_dictionary(&flags)?;
        let report = coherence_report(
            &dict,
            (k + 1).min(dict.cols().saturating_sub(1)),
            true,
            false,
        )?;
        let intervals = corollary_intervals(&report, k)?;
        emit_json(&flags, &intervals)?;
        return if intervals.iter().any(|i| i.feasible) {
            Ok(())
        } else {
            Err(Failure::Infeasible)
        };
    }
    let nu = require(flags.nu, "nu")?;
    let delta = require(flags.delta, "delta")?;
    let interval = match (flags.epsilon, flags.amin) {
        (None, None) => noiseless_interval(nu, delta, k)?,
        (Some(eps), Some(amin)) => noisy_interval(nu, delta, k, amin, eps)?,
        _ => {
            return Err(Failure::Usage(
                "--epsilon and --amin must be given together".into(),
            ))
        }
    };
    emit_json(&flags, &interval)?;
    if interval.feasible {
        Ok(())
    } else {
        Err(Failure::Infeasible)
    }
}

fn recover(flags: Flags) -> Outcome {
    json_only(&flags)?;
    let seed = flags.seed.unwrap_or(0);
    let (strategy, opts) = match (flags.t, flags.k) {
        (Some(t), None) => (Strategy::Ompt { t }, SolverOptions::with_seed(seed)),
        (Some(t), Some(k)) => (Strategy::Ompt { t }, SolverOptions::known_sparsity(k, seed)),
        (None, Some(k)) => (
            Strategy::Omp {
                k_stop: k,
                residual_tol: 0.0,
            },
            SolverOptions::with_seed(seed),
        ),
        (None, None) => {
            return Err(Failure::Usage(
                "recover needs --t (OMPT) or --k (OMP)".into(),
            ))
        }
    };
    let dict = load_dictionary(&flags)?;
    let observed = load_signal(&flags)?;
    let m = Measurement {
        observed,
        noise_level: flags.noise.or(flags.epsilon).unwrap_or(0.0),
        truth: None,
    };
    let result = recover_sparse(&dict, &m, strategy, &opts)?;
    emit_json(&flags, &result)
}

fn oracle(flags: Flags) -> Outcome {
    json_only(&flags)?;
    let dict = load_dictionary(&flags)?;
    let f = load_signal(&flags)?;
    let k_max = flags.kmax.or(flags.k).unwrap_or(3);
    let solution = sparsest_solution(&dict, &f, k_max, DEFAULT_TOL)?;
    emit_json(&flags, &solution)
}

fn benchmark_config(flags: &Flags) -> std::result::Result<TrialConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            TrialConfig::parse(&text)?
        }
        None => TrialConfig::flagship(flags.n.unwrap_or(128)),
    };
    if let Some(n) = flags.n {
        cfg.n = n;
        cfg.d = 2 * n;
    }
    if let Some(d) = flags.d {
        cfg.d = d;
    }
    if cfg.d != 2 * cfg.n {
        return Err(Failure::Usage(format!(
            "the identity+Fourier dictionary needs d = 2n, got n = {}, d = {}",
            cfg.n, cfg.d
        )));
    }
    if let Some(kmax) = flags.kmax {
        cfg.sparsity_range = (1..=kmax).collect();
    }
    if let Some(t) = flags.t {
        cfg.threshold_t = t;
    }
    if let Some(trials) = flags.trials {
        cfg.trials_per_k = trials;
    } else if flags.fast {
        cfg.trials_per_k = FAST_TRIALS;
    }
    if let Some(seed) = flags.seed {
        cfg.rng_seed = seed;
    }
    if let Some(noise) = flags.noise.or(flags.epsilon) {
        cfg.noise_level = noise;
    }
    if let Some(mode) = flags.ompt_mode {
        cfg.ompt_stopping = match mode {
            Mode::Residual => OmptStopping::ResidualThreshold,
            Mode::Sparsity => OmptStopping::KnownSparsity,
        };
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn benchmark(flags: Flags) -> Outcome {
    let cfg = benchmark_config(&flags)?;
    let dict = build_identity_fourier_dictionary(cfg.n)?;
    let report = run_trials(&cfg, &dict)?;
    let csv = match flags.format {
        Some(f) => f == Format::Csv,
        None => flags
            .out
            .as_deref()
            .and_then(Path::extension)
            .is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    };
    let body = if csv {
        report_csv(&report)
    } else {
        report_json(&report)?
    };
    emit(flags.out.as_deref(), &body)
}

fn converge(flags: Flags) -> Outcome {
    json_only(&flags)?;
    let t = require(flags.t, "t")?;
    let seed = flags.seed.unwrap_or(0);
    let dict = match flags.matrix {
        Some(_) => load_dictionary(&flags)?,
        None => {
            let n = flags.n.unwrap_or(32);
            build_gaussian_dictionary(n, flags.d.unwrap_or(2 * n), seed)?
        }
    };
    let epsilon = flags.epsilon.or(flags.noise).unwrap_or(0.0);
    let support = flags
        .k
        .unwrap_or_else(|| (dict.rows() / 2).max(1))
        .min(dict.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = ConvergenceInstance::generate(&dict, support, 1.0, epsilon, &mut rng)?;
    let report = convergence_check(&dict, &instance, t, &SolverOptions::with_seed(seed))?;
    emit_json(&flags, &report)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Infeasible)
    }
}
