//! Exhaustive l0 minimization for tiny instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    min_singular_value, norm2, restricted_least_squares, Dictionary, SparseSignal, SupportSet,
    RANK_TOL,
};
use crate::subsets::{binomial, for_each_subset};

/// Largest number of supports of the top size the oracle will try.
pub const ORACLE_BUDGET: u128 = 1_000_000;

/// Default relative residual tolerance for "f = Phi a".
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub signal: Option<SparseSignal>,
    pub unique: bool,
    pub sparsity: usize,
    pub residual_norm: f64,
}

fn fits(dict: &Dictionary, support: &[usize], f: &[f64], level: f64) -> Option<(Vec<f64>, f64)> {
    let set = SupportSet::new(support.to_vec(), dict.cols()).ok()?;
    let x = restricted_least_squares(dict, &set, f).ok()?;
    let fit = dict.apply_support(support, &x);
    let res = norm2(&f.iter().zip(&fit).map(|(a, b)| a - b).collect::<Vec<_>>());
    (res <= level).then_some((x, res))
}

/// Sparsest `a` with `|f - Phi a| <= tol * |f|`, searching sizes `0..=k_max`.
///
/// Supports are visited by size, then lexicographically; rank-deficient
/// supports are skipped since a smaller support spans the same space. When
/// nothing fits, `signal` is `None` and `sparsity` is `k_max + 1`.
pub fn sparsest_solution(
    dict: &Dictionary,
    f: &[f64],
    k_max: usize,
    tol: f64,
) -> Result<OracleSolution> {
    let d = dict.cols();
    if f.len() != dict.rows() {
        return Err(Error::DimensionMismatch {
            expected: dict.rows(),
            actual: f.len(),
        });
    }
    let k_max = k_max.min(d);
    if binomial(d, k_max) > ORACLE_BUDGET {
        return Err(Error::EnumerationBudgetExceeded { d, k: k_max });
    }
    let level = tol * norm2(f);
    for size in 0..=k_max {
        let mut hits: Vec<(Vec<usize>, Vec<f64>, f64)> = Vec::new();
        for_each_subset(d, size, |s| {
            if hits.len() < 2 {
                if let Some((x, res)) = fits(dict, s, f, level) {
                    hits.push((s.to_vec(), x, res));
                }
            }
        });
        if let Some((support, values, res)) = hits.first().cloned() {
            let support = SupportSet::new(support, d)?;
            // a fitted coefficient can be exactly zero only when a smaller
            // support would have fit first
            let signal = SparseSignal::new(support, values)?;
            return Ok(OracleSolution {
                signal: Some(signal),
                unique: hits.len() == 1,
                sparsity: size,
                residual_norm: res,
            });
        }
    }
    Ok(OracleSolution {
        signal: None,
        unique: false,
        sparsity: k_max + 1,
        residual_norm: norm2(f),
    })
}

/// Whether every `2k`-column submatrix has full column rank.
pub fn verify_spark_condition(dict: &Dictionary, k: usize) -> Result<bool> {
    let d = dict.cols();
    let size = 2 * k;
    if k == 0 || size > d {
        return Err(Error::KOutOfRange {
            k,
            min: 1,
            max: d / 2,
        });
    }
    if binomial(d, size) > ORACLE_BUDGET {
        return Err(Error::EnumerationBudgetExceeded { d, k: size });
    }
    if size > dict.rows() {
        return Ok(false);
    }
    let mut ok = true;
    for_each_subset(d, size, |s| {
        if ok {
            let set = SupportSet::new(s.to_vec(), d).expect("valid subset");
            ok = min_singular_value(dict, &set) > RANK_TOL;
        }
    });
    Ok(ok)
}
