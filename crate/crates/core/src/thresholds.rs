//! Admissible thresholds, noise levels and iteration counts for OMPT.
//!
//! Intervals are half-open: a threshold `t` is admissible when
//! `lower < t <= upper`. Degenerate parameter regimes are reported as
//! infeasible intervals rather than errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::CoherenceReport;

/// Which recovery condition generated an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalSource {
    #[serde(rename = "theorem1")]
    Theorem1,
    #[serde(rename = "cor_i")]
    CorI,
    #[serde(rename = "cor_ii")]
    CorII,
    #[serde(rename = "cor_iii")]
    CorIII,
    #[serde(rename = "cor_iv")]
    CorIV,
    #[serde(rename = "noisy")]
    Noisy,
}

/// `(lower, upper]` range for the threshold `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInterval {
    pub lower: f64,
    pub upper: f64,
    pub feasible: bool,
    pub source: IntervalSource,
}

impl ThresholdInterval {
    pub fn contains(&self, t: f64) -> bool {
        self.feasible && self.lower < t && t <= self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// `count` evenly spaced points strictly between `lower` and `upper`.
    pub fn sample(&self, count: usize) -> Vec<f64> {
        if !self.feasible {
            return Vec::new();
        }
        let step = (self.upper - self.lower) / (count + 1) as f64;
        (1..=count)
            .map(|i| self.lower + step * i as f64)
            .filter(|&t| self.contains(t) && t < self.upper)
            .collect()
    }

    /// Builds an interval, collapsing it to a point whenever the closed-form
    /// feasibility condition fails. This keeps `feasible <=> lower < upper`
    /// even where rounding would leave a sliver between the endpoints.
    fn new(lower: f64, upper: f64, condition: bool, source: IntervalSource) -> Self {
        let feasible = condition && lower < upper;
        let (lower, upper) = if feasible || lower >= upper {
            (lower, upper)
        } else {
            (lower, lower)
        };
        Self {
            lower,
            upper,
            feasible,
            source,
        }
    }
}

/// `x / sqrt(1 - y) < t <= sqrt(1 - y) / sqrt(k)`, feasible iff `y + sqrt(k) x < 1`.
///
/// The exact condition and all four coherence-based conditions share this shape.
fn generic_interval(x: f64, y: f64, k: usize, source: IntervalSource) -> ThresholdInterval {
    let rk = (k as f64).sqrt();
    if y >= 1.0 {
        return ThresholdInterval::new(0.0, 0.0, false, source);
    }
    let s = (1.0 - y).sqrt();
    ThresholdInterval::new(x / s, s / rk, y + rk * x < 1.0, source)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{name} = {v} must be finite and >= 0"
        )));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::KOutOfRange {
            k,
            min: 1,
            max: usize::MAX,
        });
    }
    Ok(())
}

/// Exact-recovery threshold range from `delta_k + sqrt(k) nu_k < 1`.
pub fn noiseless_interval(nu_k: f64, delta_k: f64, k: usize) -> Result<ThresholdInterval> {
    check_delta(delta_k)?;
    check_nonneg("nu_k", nu_k)?;
    check_k(k)?;
    Ok(generic_interval(nu_k, delta_k, k, IntervalSource::Theorem1))
}

/// The four sufficient conditions derived from the coherence chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorollaryCondition {
    /// In `delta_k`, `delta_{k+1}`.
    Ric,
    /// In `nu_k`, `nu_{k-1}`.
    Global2,
    /// In `mu_{1,k-1}`, `mu_{1,k}`.
    Cumulative,
    /// In `M` alone.
    Mutual,
}

impl CorollaryCondition {
    pub const ALL: [CorollaryCondition; 4] = [
        CorollaryCondition::Ric,
        CorollaryCondition::Global2,
        CorollaryCondition::Cumulative,
        CorollaryCondition::Mutual,
    ];

    pub fn source(self) -> IntervalSource {
        match self {
            CorollaryCondition::Ric => IntervalSource::CorI,
            CorollaryCondition::Global2 => IntervalSource::CorII,
            CorollaryCondition::Cumulative => IntervalSource::CorIII,
            CorollaryCondition::Mutual => IntervalSource::CorIV,
        }
    }
}

fn corollary_k(report: &CoherenceReport, k: usize) -> Result<()> {
    if k < 2 || k > report.kmax {
        return Err(Error::KOutOfRange {
            k,
            min: 2,
            max: report.kmax,
        });
    }
    Ok(())
}

/// Threshold range for one corollary condition at sparsity `k >= 2`.
pub fn corollary_interval(
    report: &CoherenceReport,
    k: usize,
    condition: CorollaryCondition,
) -> Result<ThresholdInterval> {
    corollary_k(report, k)?;
    let source = condition.source();
    let missing = |what| Error::MissingMetric(what);
    let (x, y) = match condition {
        CorollaryCondition::Ric => (
            report.delta(k + 1).ok_or(missing("delta_{k+1}"))?,
            report.delta(k).ok_or(missing("delta_k"))?,
        ),
        CorollaryCondition::Global2 => (
            report.nu(k).ok_or(missing("nu_k"))?,
            ((k - 1) as f64).sqrt() * report.nu(k - 1).ok_or(missing("nu_{k-1}"))?,
        ),
        CorollaryCondition::Cumulative => (
            report.mu1(k).ok_or(missing("mu_{1,k}"))?,
            report.mu1(k - 1).ok_or(missing("mu_{1,k-1}"))?,
        ),
        CorollaryCondition::Mutual => {
            let m = report.mutual;
            ((k as f64).sqrt() * m, (k - 1) as f64 * m)
        }
    };
    Ok(generic_interval(x, y, k, source))
}

/// All four corollary intervals in order i, ii, iii, iv.
pub fn corollary_intervals(report: &CoherenceReport, k: usize) -> Result<[ThresholdInterval; 4]> {
    Ok([
        corollary_interval(report, k, CorollaryCondition::Ric)?,
        corollary_interval(report, k, CorollaryCondition::Global2)?,
        corollary_interval(report, k, CorollaryCondition::Cumulative)?,
        corollary_interval(report, k, CorollaryCondition::Mutual)?,
    ])
}

/// Threshold range under noise of norm at most `epsilon`.
pub fn noisy_interval(
    nu_k: f64,
    delta_k: f64,
    k: usize,
    a_min: f64,
    epsilon: f64,
) -> Result<ThresholdInterval> {
    check_delta(delta_k)?;
    check_nonneg("nu_k", nu_k)?;
    check_nonneg("epsilon", epsilon)?;
    check_k(k)?;
    if !(a_min > 0.0 && a_min.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "a_min = {a_min} must be positive"
        )));
    }
    let beta = 1.0 - delta_k;
    let upper = (beta * a_min - epsilon) / ((k as f64 * beta).sqrt() * a_min + epsilon);
    let denom = beta.sqrt() * a_min - epsilon;
    if denom <= 0.0 {
        let u = upper.max(0.0);
        return Ok(ThresholdInterval::new(u, u, false, IntervalSource::Noisy));
    }
    let lower = (nu_k * a_min + epsilon) / denom;
    Ok(ThresholdInterval::new(
        lower,
        upper.max(0.0),
        upper > 0.0,
        IntervalSource::Noisy,
    ))
}

/// Largest noise norm for which [`noisy_interval`] is nonempty; zero when
/// `delta_k + sqrt(k) nu_k >= 1`.
pub fn max_noise_level(nu_k: f64, delta_k: f64, k: usize, a_min: f64) -> Result<f64> {
    check_delta(delta_k)?;
    check_nonneg("nu_k", nu_k)?;
    check_nonneg("a_min", a_min)?;
    check_k(k)?;
    let rk = (k as f64).sqrt();
    let beta = 1.0 - delta_k;
    let gap = beta - rk * nu_k;
    if gap <= 0.0 {
        return Ok(0.0);
    }
    let sb = beta.sqrt();
    Ok(sb * gap / ((rk + 1.0) * sb + beta + nu_k) * a_min)
}

/// `ceil(ln t^2 / ln(1 - t^2))`: the smallest `m` with `(1 - t^2)^{m/2} <= t`.
pub fn iteration_bound(t: f64) -> Result<usize> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::TOutOfRange(t));
    }
    let t2 = t * t;
    let ratio = t2.ln() / (-t2).ln_1p();
    let nearest = ratio.round();
    // t = 1/sqrt(2) and friends land a few ulps off an integer
    let m = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    Ok((m as usize).max(1))
}

/// `epsilon^2 / (1 - delta_k)`.
pub fn error_bound(delta_k: f64, epsilon: f64) -> Result<f64> {
    check_delta(delta_k)?;
    check_nonneg("epsilon", epsilon)?;
    Ok(epsilon * epsilon / (1.0 - delta_k))
}
