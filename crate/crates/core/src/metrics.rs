//! Coherence indices and restricted isometry constants of a dictionary.
//!
//! `M`, `nu_k` and `mu_{1,k}` are polynomial: each is a per-row top-`k`
//! selection over the off-diagonal Gram entries. `delta_k` and `omega_k`
//! need every `k`-subset of atoms and are gated behind
//! [`ENUMERATION_BUDGET`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, mixed_norm_inf_2, Dictionary};
use crate::subsets::{binomial, par_fold_subsets};

/// Largest number of subsets `ric_exact` and `omega_k` will visit.
pub const ENUMERATION_BUDGET: u128 = 2_000_000;

/// Restricted Gram blocks with smallest eigenvalue at or below this are singular.
pub const SINGULAR_GRAM_TOL: f64 = 1e-10;

/// `max_{i != j} |<phi_i, phi_j>|`. Zero for a single-atom dictionary.
pub fn mutual_coherence(dict: &Dictionary) -> f64 {
    let g = gram(dict);
    let d = dict.cols();
    let mut m: f64 = 0.0;
    for j in 0..d {
        for i in 0..j {
            m = m.max(g[(i, j)].abs());
        }
    }
    m
}

/// Off-diagonal magnitudes of row `i`, largest first, ties to the lower column.
fn sorted_row(g: &DMatrix<f64>, i: usize) -> Vec<f64> {
    let mut row: Vec<(usize, f64)> = (0..g.ncols())
        .filter(|&j| j != i)
        .map(|j| (j, g[(i, j)].abs()))
        .collect();
    row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    row.into_iter().map(|(_, v)| v).collect()
}

fn check_k(k: usize, max: usize) -> Result<()> {
    if k == 0 || k > max {
        return Err(Error::KOutOfRange { k, min: 1, max });
    }
    Ok(())
}

/// Per-atom sorted rows, shared by the two top-`k` coherences.
struct RowProfile {
    rows: Vec<Vec<f64>>,
}

impl RowProfile {
    fn new(dict: &Dictionary) -> Self {
        let g = gram(dict);
        Self {
            rows: (0..dict.cols()).map(|i| sorted_row(&g, i)).collect(),
        }
    }

    fn global2(&self, k: usize) -> f64 {
        self.rows
            .iter()
            .map(|r| r[..k].iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn cumulative(&self, k: usize) -> f64 {
        self.rows
            .iter()
            .map(|r| r[..k].iter().sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Global 2-coherence `nu_k`: the largest l2-norm of any atom's `k` strongest
/// correlations with other atoms.
pub fn global_2_coherence(dict: &Dictionary, k: usize) -> Result<f64> {
    check_k(k, dict.cols().saturating_sub(1))?;
    Ok(RowProfile::new(dict).global2(k))
}

/// Cumulative coherence `mu_{1,k}`: as [`global_2_coherence`] with an l1 sum.
pub fn cumulative_coherence(dict: &Dictionary, k: usize) -> Result<f64> {
    check_k(k, dict.cols().saturating_sub(1))?;
    Ok(RowProfile::new(dict).cumulative(k))
}

fn check_budget(d: usize, k: usize) -> Result<()> {
    if binomial(d, k) > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudgetExceeded { d, k });
    }
    Ok(())
}

fn sub_gram(g: &DMatrix<f64>, s: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(s.len(), s.len(), |a, b| g[(s[a], s[b])])
}

/// Restricted isometry constant `delta_k`, by exhaustive enumeration of the
/// `k`-column Gram blocks.
pub fn ric_exact(dict: &Dictionary, k: usize) -> Result<f64> {
    check_k(k, dict.cols())?;
    check_budget(dict.cols(), k)?;
    let g = gram(dict);
    Ok(ric_from_gram(&g, k))
}

fn ric_from_gram(g: &DMatrix<f64>, k: usize) -> f64 {
    if k == 1 {
        return (0..g.nrows())
            .map(|i| (g[(i, i)] - 1.0).abs())
            .fold(0.0, f64::max);
    }
    par_fold_subsets(
        g.nrows(),
        k,
        0.0f64,
        |acc, s| {
            let eig = sub_gram(g, s).symmetric_eigenvalues();
            let dev = eig.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
            acc.max(dev)
        },
        f64::max,
    )
}

#[derive(Clone)]
struct OmegaAcc {
    min: f64,
    singular: Option<Vec<usize>>,
}

/// `omega_k = min_{|S| = k} 1 / |(Phi_S^T Phi_S)^{-1}|_{inf,2}`.
pub fn omega_k(dict: &Dictionary, k: usize) -> Result<f64> {
    check_k(k, dict.cols())?;
    check_budget(dict.cols(), k)?;
    if k > crate::linalg::MIXED_NORM_MAX_DIM {
        return Err(Error::DimensionTooLarge(k));
    }
    let g = gram(dict);
    omega_from_gram(&g, k)
}

fn omega_from_gram(g: &DMatrix<f64>, k: usize) -> Result<f64> {
    let acc = par_fold_subsets(
        g.nrows(),
        k,
        OmegaAcc {
            min: f64::INFINITY,
            singular: None,
        },
        |mut acc, s| {
            if acc.singular.is_some() {
                return acc;
            }
            let block = sub_gram(g, s);
            let lambda_min = block.clone().symmetric_eigenvalues().min();
            let inverse = (lambda_min > SINGULAR_GRAM_TOL)
                .then(|| block.cholesky())
                .flatten()
                .map(|c| c.inverse());
            match inverse {
                Some(inv) => {
                    // k <= 25 is checked by the caller
                    let norm = mixed_norm_inf_2(&inv).expect("dimension checked");
                    acc.min = acc.min.min(1.0 / norm);
                }
                None => acc.singular = Some(s.to_vec()),
            }
            acc
        },
        |a, b| {
            if a.singular.is_some() {
                return a;
            }
            if b.singular.is_some() {
                return b;
            }
            OmegaAcc {
                min: a.min.min(b.min),
                singular: None,
            }
        },
    );
    match acc.singular {
        Some(s) => Err(Error::SingularSubset(s)),
        None => Ok(acc.min),
    }
}

/// Every coherence index for `k = 1..=kmax`. Vector entry `i` holds the value at `k = i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub mutual: f64,
    pub global2: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub ric: Option<Vec<f64>>,
    pub omega: Option<Vec<f64>>,
    pub kmax: usize,
}

impl CoherenceReport {
    pub fn nu(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.global2.get(i).copied())
    }

    pub fn mu1(&self, k: usize) -> Option<f64> {
        k.checked_sub(1)
            .and_then(|i| self.cumulative.get(i).copied())
    }

    pub fn delta(&self, k: usize) -> Option<f64> {
        let ric = self.ric.as_ref()?;
        k.checked_sub(1).and_then(|i| ric.get(i).copied())
    }

    pub fn omega(&self, k: usize) -> Option<f64> {
        let om = self.omega.as_ref()?;
        k.checked_sub(1).and_then(|i| om.get(i).copied())
    }

    /// Smallest gap in `M <= nu_k <= delta_{k+1} <= sqrt(k) nu_k <= k M`.
    pub fn chain_slack(&self, k: usize) -> Option<f64> {
        let nu = self.nu(k)?;
        let delta = self.delta(k + 1)?;
        let rk = (k as f64).sqrt();
        Some(min_gap(&[
            self.mutual,
            nu,
            delta,
            rk * nu,
            k as f64 * self.mutual,
        ]))
    }

    /// Smallest gap in `delta_{k+1} <= mu_{1,k} <= sqrt(k) nu_k`.
    pub fn cumulative_chain_slack(&self, k: usize) -> Option<f64> {
        let delta = self.delta(k + 1)?;
        let mu = self.mu1(k)?;
        let nu = self.nu(k)?;
        Some(min_gap(&[delta, mu, (k as f64).sqrt() * nu]))
    }
}

fn min_gap(chain: &[f64]) -> f64 {
    chain
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

pub fn coherence_report(
    dict: &Dictionary,
    kmax: usize,
    compute_ric: bool,
    compute_omega: bool,
) -> Result<CoherenceReport> {
    let d = dict.cols();
    check_k(kmax, d.saturating_sub(1))?;
    if compute_ric || compute_omega {
        for k in 1..=kmax {
            check_budget(d, k)?;
        }
    }
    let profile = RowProfile::new(dict);
    let g = gram(dict);
    let ks = 1..=kmax;
    let ric = compute_ric.then(|| ks.clone().map(|k| ric_from_gram(&g, k)).collect());
    let omega = if compute_omega {
        Some(
            ks.clone()
                .map(|k| omega_from_gram(&g, k))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(CoherenceReport {
        mutual: profile.global2(1),
        global2: ks.clone().map(|k| profile.global2(k)).collect(),
        cumulative: ks.map(|k| profile.cumulative(k)).collect(),
        ric,
        omega,
        kmax,
    })
}
