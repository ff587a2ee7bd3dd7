//! Monte-Carlo recovery benchmark and convergence checks.
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, k, trial)`,
//! so reports do not depend on how rayon schedules the work.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, normalize_columns, Dictionary, SparseSignal, SupportSet};
use crate::solvers::{mix_seed, omp, ompt, RecoveryResult, SolverOptions, StopReason};
use crate::thresholds::iteration_bound;

/// Drawn magnitudes below this are resampled so `a_min` stays well defined.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

/// Observed vector `f = Phi a + w` with `|w|_2 <= noise_level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub observed: Vec<f64>,
    pub noise_level: f64,
    pub truth: Option<SparseSignal>,
}

impl Measurement {
    pub fn noiseless(dict: &Dictionary, signal: &SparseSignal) -> Self {
        Self {
            observed: dict.apply_support(signal.support().indices(), signal.values()),
            noise_level: 0.0,
            truth: Some(signal.clone()),
        }
    }

    /// Adds noise of norm exactly `noise_level` in a uniformly random direction.
    pub fn with_noise<R: Rng + ?Sized>(
        dict: &Dictionary,
        signal: &SparseSignal,
        noise_level: f64,
        rng: &mut R,
    ) -> Self {
        let mut m = Self::noiseless(dict, signal);
        if noise_level > 0.0 {
            for (o, w) in m
                .observed
                .iter_mut()
                .zip(noise_vector(dict.rows(), noise_level, rng))
            {
                *o += w;
            }
            m.noise_level = noise_level;
        }
        m
    }
}

/// Uniformly distributed direction scaled to norm `level`.
pub fn noise_vector<R: Rng + ?Sized>(n: usize, level: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = norm2(&g);
        if norm > 1e-12 {
            return g.into_iter().map(|x| x * level / norm).collect();
        }
    }
}

/// `[I, F]` for signals of length `n`: the standard basis followed by the
/// orthonormal real trigonometric basis (constant, cosine/sine pairs, and the
/// alternating column). Cross-block inner products are at most `sqrt(2/n)`.
pub fn build_identity_fourier_dictionary(n: usize) -> Result<Dictionary> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "identity+Fourier needs an even n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    let mut m = DMatrix::zeros(n, 2 * n);
    for i in 0..n {
        m[(i, i)] = 1.0;
    }
    let c0 = 1.0 / nf.sqrt();
    let c = (2.0 / nf).sqrt();
    for x in 0..n {
        m[(x, n)] = c0;
        m[(x, 2 * n - 1)] = if x % 2 == 0 { c0 } else { -c0 };
        for j in 1..n / 2 {
            let angle = 2.0 * std::f64::consts::PI * (j * x % n) as f64 / nf;
            m[(x, n + 2 * j - 1)] = c * angle.cos();
            m[(x, n + 2 * j)] = c * angle.sin();
        }
    }
    Dictionary::new(m)
}

/// Column-normalized i.i.d. Gaussian matrix.
pub fn build_gaussian_dictionary(n: usize, d: usize, seed: u64) -> Result<Dictionary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    normalize_columns(&m)
}

/// Nonzero values with magnitude uniform on `[lo, hi]` and a fair random sign.
/// `{lo: 0, hi: 1}` is the uniform distribution on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ValueDistribution {
    UniformSymmetric { lo: f64, hi: f64 },
}

impl Default for ValueDistribution {
    fn default() -> Self {
        ValueDistribution::UniformSymmetric { lo: 0.0, hi: 1.0 }
    }
}

impl ValueDistribution {
    fn validate(&self) -> Result<()> {
        let ValueDistribution::UniformSymmetric { lo, hi } = *self;
        if !(lo >= 0.0 && hi > lo && hi.is_finite() && hi > MAGNITUDE_FLOOR) {
            return Err(Error::InvalidArgument(format!(
                "value range [{lo}, {hi}] must satisfy 0 <= lo < hi"
            )));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let ValueDistribution::UniformSymmetric { lo, hi } = *self;
        loop {
            let mag = rng.random_range(lo..=hi);
            if mag >= MAGNITUDE_FLOOR {
                return if rng.random_bool(0.5) { mag } else { -mag };
            }
        }
    }
}

/// Random support of size `k` (uniform, without replacement) with values from `dist`.
pub fn generate_sparse_signal<R: Rng + ?Sized>(
    d: usize,
    k: usize,
    dist: ValueDistribution,
    rng: &mut R,
) -> Result<SparseSignal> {
    if k > d {
        return Err(Error::KOutOfRange { k, min: 0, max: d });
    }
    dist.validate()?;
    let indices = rand::seq::index::sample(rng, d, k).into_vec();
    let values = (0..k).map(|_| dist.draw(rng)).collect();
    SparseSignal::new(SupportSet::new(indices, d)?, values)
}

/// How OMPT decides to stop inside the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmptStopping {
    /// At most `k` iterations, no residual test (same budget as OMP).
    KnownSparsity,
    /// Stop once `|r_s| <= t |f|`, at most `n` iterations.
    ResidualThreshold,
}

impl FromStr for OmptStopping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known_sparsity" | "sparsity" => Ok(OmptStopping::KnownSparsity),
            "residual_threshold" | "residual" => Ok(OmptStopping::ResidualThreshold),
            other => Err(Error::InvalidArgument(format!(
                "unknown OMPT stopping rule {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n: usize,
    pub d: usize,
    pub sparsity_range: Vec<usize>,
    pub trials_per_k: usize,
    pub threshold_t: f64,
    pub noise_level: f64,
    pub rng_seed: u64,
    pub value_distribution: ValueDistribution,
    pub success_tol: f64,
    pub ompt_stopping: OmptStopping,
}

/// Trials per sparsity level in `--fast` runs.
pub const FAST_TRIALS: usize = 200;

impl TrialConfig {
    /// The `[I, F]` sweep at signal length `n`: `d = 2n`, `k = 1..=40`,
    /// 1000 trials, `t = 1/sqrt(n)` and the residual stopping rule.
    pub fn flagship(n: usize) -> Self {
        Self {
            n,
            d: 2 * n,
            sparsity_range: (1..=40).collect(),
            trials_per_k: 1000,
            threshold_t: 1.0 / (n as f64).sqrt(),
            noise_level: 0.0,
            rng_seed: 7,
            value_distribution: ValueDistribution::default(),
            success_tol: 1e-6,
            ompt_stopping: OmptStopping::ResidualThreshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_k == 0 {
            return Err(Error::InvalidArgument("trials_per_k must be >= 1".into()));
        }
        if !(self.threshold_t > 0.0 && self.threshold_t < 1.0) {
            return Err(Error::TOutOfRange(self.threshold_t));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_level = {}",
                self.noise_level
            )));
        }
        if !(self.success_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "success_tol = {}",
                self.success_tol
            )));
        }
        if let Some(&k) = self.sparsity_range.iter().find(|&&k| k == 0 || k > self.d) {
            return Err(Error::KOutOfRange {
                k,
                min: 1,
                max: self.d,
            });
        }
        self.value_distribution.validate()
    }

    /// Parses flat `key = value` text; unknown keys are rejected and missing
    /// keys keep the [`TrialConfig::flagship`] defaults for `n` (128 if absent).
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lno + 1,
                message: "expected key = value".into(),
            })?;
            pairs.push((lno + 1, key.trim().to_string(), value.trim().to_string()));
        }
        let parse_err = |line: usize, key: &str, e: &dyn std::fmt::Display| Error::Parse {
            line,
            message: format!("{key}: {e}"),
        };
        let n = match pairs.iter().find(|(_, k, _)| k == "n") {
            Some((line, key, v)) => v.parse().map_err(|e| parse_err(*line, key, &e))?,
            None => 128,
        };
        let mut cfg = Self::flagship(n);
        let mut lo_hi = match cfg.value_distribution {
            ValueDistribution::UniformSymmetric { lo, hi } => (lo, hi),
        };
        for (line, key, v) in &pairs {
            let line = *line;
            macro_rules! num {
                () => {
                    v.parse().map_err(|e| parse_err(line, key, &e))?
                };
            }
            match key.as_str() {
                "n" => {}
                "d" => cfg.d = num!(),
                "sparsity_range" => {
                    cfg.sparsity_range = parse_range(v).map_err(|e| parse_err(line, key, &e))?
                }
                "trials_per_k" => cfg.trials_per_k = num!(),
                "threshold_t" => cfg.threshold_t = num!(),
                "noise_level" => cfg.noise_level = num!(),
                "rng_seed" => cfg.rng_seed = num!(),
                "value_lo" => lo_hi.0 = num!(),
                "value_hi" => lo_hi.1 = num!(),
                "success_tol" => cfg.success_tol = num!(),
                "ompt_stopping" => cfg.ompt_stopping = v.parse()?,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        cfg.value_distribution = ValueDistribution::UniformSymmetric {
            lo: lo_hi.0,
            hi: lo_hi.1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config_text(&self) -> String {
        let ValueDistribution::UniformSymmetric { lo, hi } = self.value_distribution;
        let ks: Vec<String> = self.sparsity_range.iter().map(|k| k.to_string()).collect();
        let stopping = match self.ompt_stopping {
            OmptStopping::KnownSparsity => "known_sparsity",
            OmptStopping::ResidualThreshold => "residual_threshold",
        };
        format!(
            "n = {}\nd = {}\nsparsity_range = {}\ntrials_per_k = {}\nthreshold_t = {:?}\n\
             noise_level = {:?}\nrng_seed = {}\nvalue_lo = {:?}\nvalue_hi = {:?}\n\
             success_tol = {:?}\nompt_stopping = {}\n",
            self.n,
            self.d,
            ks.join(","),
            self.trials_per_k,
            self.threshold_t,
            self.noise_level,
            self.rng_seed,
            lo,
            hi,
            self.success_tol,
            stopping
        )
    }
}

/// `"1-40"`, `"1,2,5"` or a mix such as `"1-5,10,20-22"`.
pub fn parse_range(text: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|e| format!("{part:?}: {e}"))?;
                let b: usize = b.trim().parse().map_err(|e| format!("{part:?}: {e}"))?;
                if a > b {
                    return Err(format!("empty range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|e| format!("{part:?}: {e}"))?),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub k: usize,
    pub success_rate_ompt: f64,
    pub success_rate_omp: f64,
    pub mean_inner_products_ompt: f64,
    pub mean_inner_products_omp: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetadata {
    pub config: TrialConfig,
    pub seed: u64,
    /// Seconds since the Unix epoch when the run finished.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub rows: Vec<TrialRow>,
    pub metadata: TrialMetadata,
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialOutcome {
    ompt_success: bool,
    omp_success: bool,
    ompt_inner_products: u64,
    omp_inner_products: u64,
    ompt_iterations: usize,
}

fn scored(result: &crate::error::Result<RecoveryResult>, truth: &SparseSignal, tol: f64) -> bool {
    let Ok(r) = result else {
        return false;
    };
    if !r.support_set().same_set(truth.support()) {
        return false;
    }
    let a = truth.to_dense();
    let err: Vec<f64> = r.estimate.iter().zip(&a).map(|(x, y)| x - y).collect();
    norm2(&err) <= tol * norm2(&a)
}

fn run_one(config: &TrialConfig, dict: &Dictionary, k: usize, trial: usize) -> TrialOutcome {
    let mut rng =
        ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(config.rng_seed, k as u64), trial as u64));
    let signal = generate_sparse_signal(dict.cols(), k, config.value_distribution, &mut rng)
        .expect("config validated");
    let m = Measurement::with_noise(dict, &signal, config.noise_level, &mut rng);
    let ompt_seed = rng.next_u64();
    let opts = match config.ompt_stopping {
        OmptStopping::KnownSparsity => SolverOptions::known_sparsity(k, ompt_seed),
        OmptStopping::ResidualThreshold => SolverOptions::with_seed(ompt_seed),
    };
    let a = ompt(dict, &m.observed, config.threshold_t, &opts);
    let b = omp(dict, &m.observed, k, 0.0);
    TrialOutcome {
        ompt_success: scored(&a, &signal, config.success_tol),
        omp_success: scored(&b, &signal, config.success_tol),
        ompt_inner_products: a.as_ref().map_or(0, |r| r.inner_product_count),
        omp_inner_products: b.as_ref().map_or(0, |r| r.inner_product_count),
        ompt_iterations: a.as_ref().map_or(0, |r| r.iterations),
    }
}

/// Neumaier-compensated mean, summed in slice order.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut count) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        (sum + comp) / count as f64
    }
}

/// Runs OMPT and OMP on `trials_per_k` random signals for each `k`.
///
/// A solver error counts as a failed trial with zero inner products.
pub fn run_trials(config: &TrialConfig, dict: &Dictionary) -> Result<TrialReport> {
    config.validate()?;
    if dict.rows() != config.n || dict.cols() != config.d {
        return Err(Error::InvalidArgument(format!(
            "dictionary is {}x{}, config expects {}x{}",
            dict.rows(),
            dict.cols(),
            config.n,
            config.d
        )));
    }
    let trials = config.trials_per_k;
    let outcomes: Vec<TrialOutcome> = (0..config.sparsity_range.len() * trials)
        .into_par_iter()
        .map(|job| {
            run_one(
                config,
                dict,
                config.sparsity_range[job / trials],
                job % trials,
            )
        })
        .collect();
    let rows = config
        .sparsity_range
        .iter()
        .zip(outcomes.chunks(trials))
        .map(|(&k, chunk)| TrialRow {
            k,
            success_rate_ompt: mean(chunk.iter().map(|o| o.ompt_success as u8 as f64)),
            success_rate_omp: mean(chunk.iter().map(|o| o.omp_success as u8 as f64)),
            mean_inner_products_ompt: mean(chunk.iter().map(|o| o.ompt_inner_products as f64)),
            mean_inner_products_omp: mean(chunk.iter().map(|o| o.omp_inner_products as f64)),
            mean_iterations: mean(chunk.iter().map(|o| o.ompt_iterations as f64)),
        })
        .collect();
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    Ok(TrialReport {
        rows,
        metadata: TrialMetadata {
            config: config.clone(),
            seed: config.rng_seed,
            timestamp,
        },
    })
}

/// OMP inner products after `k` full iterations over `d` atoms: `k(2d - k + 1)/2`.
pub fn omp_inner_products(k: usize, d: usize) -> u64 {
    (k * (2 * d - k + 1) / 2) as u64
}

/// `f = Phi c + w` with `|c|_1 = C` and `|w|_2 = epsilon`, so that
/// `(f - w) / C` lies in the symmetric convex hull of the atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceInstance {
    pub coefficients: Vec<f64>,
    pub l1_norm: f64,
    pub perturbation_norm: f64,
    pub observed: Vec<f64>,
}

impl ConvergenceInstance {
    /// Random `support_size`-sparse `c` rescaled to `|c|_1 = l1_norm`.
    pub fn generate<R: Rng + ?Sized>(
        dict: &Dictionary,
        support_size: usize,
        l1_norm: f64,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(l1_norm > 0.0) || !(epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need C > 0 and epsilon >= 0, got C = {l1_norm}, epsilon = {epsilon}"
            )));
        }
        let signal = generate_sparse_signal(
            dict.cols(),
            support_size.max(1),
            ValueDistribution::default(),
            rng,
        )?;
        let scale = l1_norm / signal.values().iter().map(|v| v.abs()).sum::<f64>();
        let mut coefficients = signal.to_dense();
        coefficients.iter_mut().for_each(|c| *c *= scale);
        let mut observed = dict.apply(&coefficients);
        if epsilon > 0.0 {
            for (o, w) in observed
                .iter_mut()
                .zip(noise_vector(dict.rows(), epsilon, rng))
            {
                *o += w;
            }
        }
        Ok(Self {
            coefficients,
            l1_norm,
            perturbation_norm: epsilon,
            observed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub t: f64,
    pub l1_norm: f64,
    pub epsilon: f64,
    pub final_residual: f64,
    /// `epsilon + t C`.
    pub residual_bound: f64,
    /// `residual_bound - final_residual`; nonnegative when the bound holds.
    pub residual_margin: f64,
    pub iterations: usize,
    pub iteration_bound: usize,
    pub stop_reason: StopReason,
    /// Whether `m <= iteration_bound`, checked only for runs that ended on
    /// the residual test.
    pub iteration_check: Option<bool>,
    /// Largest `|r_s| - (1 - t^2)^{s/2} |f|` over all iterations.
    pub envelope_excess: f64,
    pub passed: bool,
}

/// Absolute slack allowed on the residual and envelope bounds.
pub const CONVERGENCE_TOL: f64 = 1e-8;

pub fn convergence_check(
    dict: &Dictionary,
    instance: &ConvergenceInstance,
    t: f64,
    opts: &SolverOptions,
) -> Result<ConvergenceReport> {
    let bound_m = iteration_bound(t)?;
    let r = ompt(dict, &instance.observed, t, opts)?;
    let fnorm = r.residual_norms[0];
    let decay = (1.0 - t * t).sqrt();
    let envelope_excess = r
        .residual_norms
        .iter()
        .enumerate()
        .map(|(s, &rn)| rn - decay.powi(s as i32) * fnorm)
        .fold(f64::NEG_INFINITY, f64::max);
    let residual_bound = instance.perturbation_norm + t * instance.l1_norm;
    let final_residual = r.final_residual();
    let iteration_check =
        (r.stop_reason == StopReason::ResidualBelowThreshold).then_some(r.iterations <= bound_m);
    let passed = final_residual <= residual_bound + CONVERGENCE_TOL
        && envelope_excess <= CONVERGENCE_TOL
        && iteration_check.unwrap_or(true);
    Ok(ConvergenceReport {
        t,
        l1_norm: instance.l1_norm,
        epsilon: instance.perturbation_norm,
        final_residual,
        residual_bound,
        residual_margin: residual_bound - final_residual,
        iterations: r.iterations,
        iteration_bound: bound_m,
        stop_reason: r.stop_reason,
        iteration_check,
        envelope_excess,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: [&str; 6] = [
    "k",
    "success_ompt",
    "success_omp",
    "ip_ompt",
    "ip_omp",
    "iters_mean",
];

fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV body: one row per sparsity level, floats to 17 significant digits.
pub fn report_csv(report: &TrialReport) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            sig17(r.success_rate_ompt),
            sig17(r.success_rate_omp),
            sig17(r.mean_inner_products_ompt),
            sig17(r.mean_inner_products_omp),
            sig17(r.mean_iterations)
        );
    }
    out
}

pub fn report_json(report: &TrialReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn export_report(report: &TrialReport, path: &Path, format: ReportFormat) -> Result<()> {
    let body = match format {
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Json => report_json(report)?,
    };
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Reads rows back from [`report_csv`] output.
pub fn read_report_csv(path: &Path) -> Result<Vec<TrialRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|e| Error::Parse {
                line: i + 2,
                message: format!("{}: {e}", CSV_HEADER[j]),
            })
        };
        rows.push(TrialRow {
            k: rec[0].parse().map_err(|e| Error::Parse {
                line: i + 2,
                message: format!("k: {e}"),
            })?,
            success_rate_ompt: field(1)?,
            success_rate_omp: field(2)?,
            mean_inner_products_ompt: field(3)?,
            mean_inner_products_omp: field(4)?,
            mean_iterations: field(5)?,
        });
    }
    Ok(rows)
}

pub fn read_report_json(path: &Path) -> Result<TrialReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gram;
    use crate::metrics::mutual_coherence;

    #[test]
    fn identity_fourier_n2() {
        let d = build_identity_fourier_dictionary(2).unwrap();
        assert_eq!((d.rows(), d.cols()), (2, 4));
        let g = gram(&d);
        for i in 0..4 {
            assert!((g[(i, i)] - 1.0).abs() < 1e-15);
        }
        assert_eq!(d.atom(0), &[1.0, 0.0]);
        assert!(g[(2, 3)].abs() < 1e-15);
    }

    #[test]
    fn identity_fourier_blocks_orthonormal() {
        for n in [4, 8, 16, 128] {
            let d = build_identity_fourier_dictionary(n).unwrap();
            let g = gram(&d);
            let mut cross: f64 = 0.0;
            for i in 0..2 * n {
                for j in 0..2 * n {
                    let same_block = (i < n) == (j < n);
                    let v = g[(i, j)];
                    if same_block {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((v - expect).abs() < 1e-12, "n={n} ({i},{j}) = {v}");
                    } else {
                        cross = cross.max(v.abs());
                    }
                }
            }
            assert!(cross <= (2.0 / n as f64).sqrt() + 1e-12);
            assert!((mutual_coherence(&d) - cross).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_fourier_rejects_odd() {
        assert!(build_identity_fourier_dictionary(3).is_err());
        assert!(build_identity_fourier_dictionary(0).is_err());
    }

    #[test]
    fn full_support_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = generate_sparse_signal(12, 12, ValueDistribution::default(), &mut rng).unwrap();
        assert_eq!(s.support().sorted(), (0..12).collect::<Vec<_>>());
        assert!(s.values().iter().all(|v| v.abs() >= MAGNITUDE_FLOOR));
    }

    #[test]
    fn singleton_support_is_uniform() {
        let d = 20;
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = vec![0usize; d];
        for _ in 0..draws {
            let s = generate_sparse_signal(d, 1, ValueDistribution::default(), &mut rng).unwrap();
            counts[s.support().indices()[0]] += 1;
        }
        let expected = draws as f64 / d as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 19 degrees of freedom, 0.999 quantile is about 43.8
        assert!(chi2 < 43.8, "chi2 = {chi2}");
    }

    #[test]
    fn signal_generation_is_seeded() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_sparse_signal(50, 7, ValueDistribution::default(), &mut rng).unwrap()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn magnitudes_respect_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dist = ValueDistribution::UniformSymmetric { lo: 1.0, hi: 2.0 };
        let s = generate_sparse_signal(30, 30, dist, &mut rng).unwrap();
        assert!(s.values().iter().all(|v| (1.0..=2.0).contains(&v.abs())));
        assert!(s.values().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn noise_has_exact_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for level in [1e-3, 0.05, 2.0] {
            let w = noise_vector(64, level, &mut rng);
            assert!((norm2(&w) - level).abs() <= 1e-12 * level.max(1.0));
        }
        let d = build_gaussian_dictionary(10, 20, 5).unwrap();
        let s = generate_sparse_signal(20, 3, ValueDistribution::default(), &mut rng).unwrap();
        let clean = Measurement::noiseless(&d, &s);
        let noisy = Measurement::with_noise(&d, &s, 0.1, &mut rng);
        let w: Vec<f64> = noisy
            .observed
            .iter()
            .zip(&clean.observed)
            .map(|(a, b)| a - b)
            .collect();
        assert!((norm2(&w) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn measurement_matches_dictionary_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = build_gaussian_dictionary(8, 16, 6).unwrap();
        let s = generate_sparse_signal(16, 4, ValueDistribution::default(), &mut rng).unwrap();
        let m = Measurement::noiseless(&d, &s);
        let direct = d.apply(&s.to_dense());
        for (a, b) in m.observed.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    fn small_config() -> TrialConfig {
        TrialConfig {
            n: 16,
            d: 32,
            sparsity_range: vec![1, 2, 3, 6],
            trials_per_k: 30,
            threshold_t: 0.5,
            ompt_stopping: OmptStopping::KnownSparsity,
            ..TrialConfig::flagship(16)
        }
    }

    #[test]
    fn small_benchmark_is_sane() {
        let cfg = small_config();
        let dict = build_identity_fourier_dictionary(16).unwrap();
        let report = run_trials(&cfg, &dict).unwrap();
        assert_eq!(report.rows.len(), 4);
        for row in &report.rows {
            assert!((0.0..=1.0).contains(&row.success_rate_ompt));
            assert!((0.0..=1.0).contains(&row.success_rate_omp));
            assert_eq!(
                row.mean_inner_products_omp,
                omp_inner_products(row.k, 32) as f64
            );
        }
        assert_eq!(report.rows[0].success_rate_ompt, 1.0);
        assert_eq!(report.rows[0].success_rate_omp, 1.0);
    }

    #[test]
    fn benchmark_rejects_mismatched_dictionary() {
        let cfg = small_config();
        let dict = build_identity_fourier_dictionary(8).unwrap();
        assert!(run_trials(&cfg, &dict).is_err());
    }

    #[test]
    fn empty_sparsity_range_gives_header_only_csv() {
        let cfg = TrialConfig {
            sparsity_range: vec![],
            ..small_config()
        };
        let dict = build_identity_fourier_dictionary(16).unwrap();
        let report = run_trials(&cfg, &dict).unwrap();
        assert_eq!(
            report_csv(&report),
            "k,success_ompt,success_omp,ip_ompt,ip_omp,iters_mean\n"
        );
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = TrialConfig {
            noise_level: 0.125,
            ompt_stopping: OmptStopping::KnownSparsity,
            sparsity_range: vec![1, 2, 3, 10],
            ..TrialConfig::flagship(64)
        };
        let back = TrialConfig::parse(&cfg.to_config_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_parse_errors_and_defaults() {
        let cfg = TrialConfig::parse("# comment only\n").unwrap();
        assert_eq!(cfg, TrialConfig::flagship(128));
        let cfg = TrialConfig::parse("sparsity_range = 1-3, 7\ntrials_per_k=5").unwrap();
        assert_eq!(cfg.sparsity_range, vec![1, 2, 3, 7]);
        assert_eq!(cfg.trials_per_k, 5);
        assert!(TrialConfig::parse("bogus = 1").is_err());
        assert!(TrialConfig::parse("n = x").is_err());
        assert!(TrialConfig::parse("threshold_t = 1.5").is_err());
        assert!(TrialConfig::parse("no equals sign").is_err());
        assert!(TrialConfig::parse("trials_per_k = 0").is_err());
    }

    #[test]
    fn parse_range_forms() {
        assert_eq!(parse_range("1-4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_range("2, 5,9-10").unwrap(), vec![2, 5, 9, 10]);
        assert!(parse_range("5-2").is_err());
        assert!(parse_range("a").is_err());
    }

    #[test]
    fn compensated_mean() {
        assert_eq!(mean(std::iter::empty()), 0.0);
        assert_eq!(mean([1.0, 0.0, 1.0, 1.0].into_iter()), 0.75);
        let big = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(mean(big.into_iter()), 0.5);
    }

    #[test]
    fn omp_count_formula() {
        assert_eq!(omp_inner_products(10, 256), 2515);
        assert_eq!(omp_inner_products(1, 256), 256);
        assert_eq!(omp_inner_products(30, 256), 7245);
    }

    #[test]
    fn convergence_single_atom() {
        let dict = build_gaussian_dictionary(16, 32, 7).unwrap();
        let mut coefficients = vec![0.0; 32];
        coefficients[5] = 1.0;
        let inst = ConvergenceInstance {
            observed: dict.apply(&coefficients),
            coefficients,
            l1_norm: 1.0,
            perturbation_norm: 0.0,
        };
        for t in [0.1, 0.4, 0.9] {
            let rep = convergence_check(&dict, &inst, t, &SolverOptions::with_seed(1)).unwrap();
            assert!(rep.passed);
            assert!(rep.final_residual <= t + 1e-8);
        }
    }

    #[test]
    fn convergence_random_instances() {
        let dict = build_gaussian_dictionary(32, 64, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for eps in [0.0, 0.05] {
            let inst = ConvergenceInstance::generate(&dict, 10, 1.0, eps, &mut rng).unwrap();
            let l1: f64 = inst.coefficients.iter().map(|c| c.abs()).sum();
            assert!((l1 - 1.0).abs() <= 1e-12);
            let rep = convergence_check(&dict, &inst, 0.3, &SolverOptions::with_seed(2)).unwrap();
            assert_eq!(rep.iteration_bound, 26);
            assert!(rep.final_residual <= eps + 0.3 + 1e-8);
            assert!(rep.passed, "{rep:?}");
        }
    }
}
