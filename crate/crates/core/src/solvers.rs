//! Greedy sparse recovery: OMP with thresholding (OMPT) and plain OMP.
//!
//! Both solvers keep an incremental QR factorization of the selected atoms,
//! so each accepted atom costs one orthogonalization plus a triangular solve.
//! They differ only in the selection step: OMPT takes the first atom in a
//! random scan whose correlation with the residual reaches `t * |r|`, OMP
//! correlates the residual with every unselected atom and takes the largest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::Measurement;
use crate::linalg::{dot, norm2, Dictionary, IncrementalQr, SupportSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    ResidualBelowThreshold,
    NoIndexMeetsThreshold,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanOrder {
    /// A fresh uniform permutation of the atoms every iteration.
    RandomPermutationPerIteration,
    FixedAscending,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Iteration cap; `None` means the number of measurements `n`.
    pub max_iterations: Option<usize>,
    pub rng_seed: u64,
    pub scan_order: ScanOrder,
    /// OMPT keeps iterating while `|r_s| > stop_ratio * |f|`. `None` uses the
    /// selection threshold `t` itself.
    pub stop_ratio: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            rng_seed: 0,
            scan_order: ScanOrder::RandomPermutationPerIteration,
            stop_ratio: None,
        }
    }
}

impl SolverOptions {
    pub fn with_seed(rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..Self::default()
        }
    }

    /// Runs exactly `k` accepted iterations unless the residual vanishes or
    /// no atom qualifies. This is the regime the exact-recovery guarantees
    /// speak about.
    pub fn known_sparsity(k: usize, rng_seed: u64) -> Self {
        Self {
            max_iterations: Some(k),
            rng_seed,
            scan_order: ScanOrder::RandomPermutationPerIteration,
            stop_ratio: Some(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ompt { t: f64 },
    Omp { k_stop: usize, residual_tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    #[serde(skip)]
    pub estimate: Vec<f64>,
    pub residual_norms: Vec<f64>,
    #[serde(rename = "inner_products")]
    pub inner_product_count: u64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
}

impl RecoveryResult {
    pub fn final_residual(&self) -> f64 {
        *self
            .residual_norms
            .last()
            .expect("residual_norms holds r_0")
    }

    pub fn support_set(&self) -> SupportSet {
        SupportSet::new(self.support.clone(), self.estimate.len())
            .expect("solver supports are valid")
    }
}

/// State shared by the two pursuits.
struct Pursuit<'a> {
    dict: &'a Dictionary,
    f: &'a [f64],
    qr: IncrementalQr,
    selected: Vec<bool>,
    support: Vec<usize>,
    coefficients: Vec<f64>,
    residual: Vec<f64>,
    residual_norms: Vec<f64>,
    inner_products: u64,
}

impl<'a> Pursuit<'a> {
    fn new(dict: &'a Dictionary, f: &'a [f64]) -> Result<Self> {
        if f.len() != dict.rows() {
            return Err(Error::DimensionMismatch {
                expected: dict.rows(),
                actual: f.len(),
            });
        }
        if let Some(bad) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: bad, col: 0 });
        }
        Ok(Self {
            dict,
            f,
            qr: IncrementalQr::new(dict.rows()),
            selected: vec![false; dict.cols()],
            support: Vec::new(),
            coefficients: Vec::new(),
            residual: f.to_vec(),
            residual_norms: vec![norm2(f)],
            inner_products: 0,
        })
    }

    fn residual_norm(&self) -> f64 {
        *self.residual_norms.last().unwrap()
    }

    fn correlate(&mut self, i: usize) -> f64 {
        self.inner_products += 1;
        dot(&self.residual, self.dict.atom(i))
    }

    /// Adds atom `i`, re-solves the projection and refreshes the residual.
    fn accept(&mut self, i: usize) -> Result<()> {
        self.qr.push(self.dict.atom(i))?;
        self.selected[i] = true;
        self.support.push(i);
        self.coefficients = self.qr.solve(self.f);
        let fit = self.dict.apply_support(&self.support, &self.coefficients);
        for ((r, f), p) in self.residual.iter_mut().zip(self.f).zip(&fit) {
            *r = f - p;
        }
        self.residual_norms.push(norm2(&self.residual));
        Ok(())
    }

    fn finish(self, stop_reason: StopReason) -> RecoveryResult {
        let mut estimate = vec![0.0; self.dict.cols()];
        for (&i, &c) in self.support.iter().zip(&self.coefficients) {
            estimate[i] = c;
        }
        RecoveryResult {
            iterations: self.support.len(),
            support: self.support,
            coefficients: self.coefficients,
            estimate,
            residual_norms: self.residual_norms,
            inner_product_count: self.inner_products,
            stop_reason,
            strategy: None,
        }
    }
}

/// splitmix64 finalizer; derives independent stream seeds from counters.
pub fn mix_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed ^ counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Lazily drawn Fisher-Yates permutation: each `next` costs one random draw.
struct LazyPermutation {
    items: Vec<usize>,
    pos: usize,
    rng: Option<ChaCha8Rng>,
}

impl LazyPermutation {
    fn new(d: usize, order: ScanOrder, seed: u64, iteration: u64) -> Self {
        let rng = match order {
            ScanOrder::RandomPermutationPerIteration => {
                Some(ChaCha8Rng::seed_from_u64(mix_seed(seed, iteration)))
            }
            ScanOrder::FixedAscending => None,
        };
        Self {
            items: (0..d).collect(),
            pos: 0,
            rng,
        }
    }
}

impl Iterator for LazyPermutation {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let d = self.items.len();
        if self.pos == d {
            return None;
        }
        if let Some(rng) = self.rng.as_mut() {
            let j = rng.random_range(self.pos..d);
            self.items.swap(self.pos, j);
        }
        self.pos += 1;
        Some(self.items[self.pos - 1])
    }
}

/// Orthogonal matching pursuit with thresholding.
///
/// Iterates while `|r_s| > stop_ratio * |f|` (by default `stop_ratio = t`),
/// accepting the first scanned atom with `|<r_s, phi_i>| >= t |r_s|`. A full
/// scan with no such atom ends the run with
/// [`StopReason::NoIndexMeetsThreshold`].
pub fn ompt(dict: &Dictionary, f: &[f64], t: f64, opts: &SolverOptions) -> Result<RecoveryResult> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::TOutOfRange(t));
    }
    let mut state = Pursuit::new(dict, f)?;
    let max_iterations = opts.max_iterations.unwrap_or(dict.rows());
    let stop_level = opts.stop_ratio.unwrap_or(t) * state.residual_norm();
    let mut iteration: u64 = 0;
    let reason = loop {
        let rn = state.residual_norm();
        if rn <= stop_level {
            break StopReason::ResidualBelowThreshold;
        }
        if state.support.len() >= max_iterations {
            break StopReason::MaxIterations;
        }
        let level = t * rn;
        let scan = LazyPermutation::new(dict.cols(), opts.scan_order, opts.rng_seed, iteration);
        let mut chosen = None;
        for i in scan {
            if state.selected[i] {
                continue;
            }
            if state.correlate(i).abs() >= level {
                chosen = Some(i);
                break;
            }
        }
        match chosen {
            Some(i) => state.accept(i)?,
            None => break StopReason::NoIndexMeetsThreshold,
        }
        iteration += 1;
    };
    Ok(state.finish(reason))
}

/// Orthogonal matching pursuit, run for `k_stop` iterations or until
/// `|r_s| <= residual_tol * |f|`.
pub fn omp(
    dict: &Dictionary,
    f: &[f64],
    k_stop: usize,
    residual_tol: f64,
) -> Result<RecoveryResult> {
    let cap = dict.rows().min(dict.cols());
    if k_stop == 0 || k_stop > cap {
        return Err(Error::KOutOfRange {
            k: k_stop,
            min: 1,
            max: cap,
        });
    }
    let mut state = Pursuit::new(dict, f)?;
    let stop_level = residual_tol * state.residual_norm();
    let reason = loop {
        if state.residual_norm() <= stop_level {
            break StopReason::ResidualBelowThreshold;
        }
        if state.support.len() >= k_stop {
            break StopReason::MaxIterations;
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..dict.cols() {
            if state.selected[i] {
                continue;
            }
            let c = state.correlate(i).abs();
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        let (i, _) = best.expect("k_stop <= d leaves an unselected atom");
        state.accept(i)?;
    };
    Ok(state.finish(reason))
}

/// Uniform entry point: dispatches to [`ompt`] or [`omp`] and tags the result.
pub fn recover_sparse(
    dict: &Dictionary,
    measurement: &Measurement,
    strategy: Strategy,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    let mut result = match strategy {
        Strategy::Ompt { t } => ompt(dict, &measurement.observed, t, opts)?,
        Strategy::Omp {
            k_stop,
            residual_tol,
        } => omp(dict, &measurement.observed, k_stop, residual_tol)?,
    };
    result.strategy = Some(strategy);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::normalize_columns;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn random_dict(rows: usize, cols: usize, seed: u64) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normalize_columns(&DMatrix::from_fn(rows, cols, |_, _| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap()
    }

    #[test]
    fn ompt_single_exact_atom() {
        let d = Dictionary::identity(6);
        let f = d.atom(3).to_vec();
        for t in [0.05, 0.5, 0.95] {
            let r = ompt(&d, &f, t, &SolverOptions::with_seed(1)).unwrap();
            assert_eq!(r.support, vec![3]);
            assert_abs_diff_eq!(r.coefficients[0], 1.0, epsilon = 1e-15);
            assert_eq!(r.iterations, 1);
            assert_eq!(r.final_residual(), 0.0);
            assert_eq!(r.stop_reason, StopReason::ResidualBelowThreshold);
        }
    }

    #[test]
    fn ompt_zero_signal() {
        let d = random_dict(5, 8, 1);
        let r = ompt(&d, &[0.0; 5], 0.3, &SolverOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.inner_product_count, 0);
        assert_eq!(r.residual_norms, vec![0.0]);
        assert_eq!(r.stop_reason, StopReason::ResidualBelowThreshold);
        assert!(r.estimate.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ompt_rejects_bad_threshold_and_dims() {
        let d = Dictionary::identity(3);
        assert!(matches!(
            ompt(&d, &[1.0, 0.0, 0.0], 1.0, &SolverOptions::default()),
            Err(Error::TOutOfRange(_))
        ));
        assert!(matches!(
            ompt(&d, &[1.0, 0.0, 0.0], 0.0, &SolverOptions::default()),
            Err(Error::TOutOfRange(_))
        ));
        assert!(matches!(
            ompt(&d, &[1.0, 0.0], 0.5, &SolverOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ompt(&d, &[f64::NAN, 0.0, 0.0], 0.5, &SolverOptions::default()).is_err());
    }

    #[test]
    fn ompt_no_index_meets_threshold() {
        // f spread evenly over 4 orthonormal atoms: every correlation is |f| / 2,
        // below t |r| for t = 0.6
        let d = Dictionary::identity(4);
        let f = [1.0, 1.0, 1.0, 1.0];
        let r = ompt(&d, &f, 0.6, &SolverOptions::with_seed(3)).unwrap();
        assert_eq!(r.stop_reason, StopReason::NoIndexMeetsThreshold);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.inner_product_count, 4);
    }

    #[test]
    fn ompt_max_iterations() {
        let d = Dictionary::identity(4);
        let f = [1.0, 0.9, 0.8, 0.7];
        let opts = SolverOptions {
            max_iterations: Some(2),
            ..SolverOptions::with_seed(5)
        };
        let r = ompt(&d, &f, 0.1, &opts).unwrap();
        assert_eq!(r.stop_reason, StopReason::MaxIterations);
        assert_eq!(r.iterations, 2);
        assert_eq!(r.residual_norms.len(), 3);
    }

    #[test]
    fn ompt_fixed_scan_takes_first_qualifier() {
        let d = Dictionary::identity(4);
        let f = [0.1, 1.0, 2.0, 0.0];
        let opts = SolverOptions {
            scan_order: ScanOrder::FixedAscending,
            max_iterations: Some(1),
            ..SolverOptions::default()
        };
        let r = ompt(&d, &f, 0.3, &opts).unwrap();
        // atom 0 fails (0.1 < 0.3 * |f|), atom 1 qualifies before the larger atom 2
        assert_eq!(r.support, vec![1]);
        assert_eq!(r.inner_product_count, 2);
    }

    #[test]
    fn ompt_is_deterministic_per_seed() {
        let d = random_dict(10, 20, 7);
        let f: Vec<f64> = d.apply_support(&[2, 9, 15], &[1.0, -0.7, 0.4]);
        let a = ompt(&d, &f, 0.2, &SolverOptions::with_seed(42)).unwrap();
        let b = ompt(&d, &f, 0.2, &SolverOptions::with_seed(42)).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.estimate, b.estimate);
    }

    #[test]
    fn omp_inner_product_count_formula() {
        let d = random_dict(40, 256, 8);
        let f: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let r = omp(&d, &f, 10, 0.0).unwrap();
        assert_eq!(r.iterations, 10);
        assert_eq!(r.inner_product_count, 2515);
    }

    #[test]
    fn omp_greedy_order() {
        let d = Dictionary::identity(4);
        let mut f = vec![0.0; 4];
        f[1] = 2.0;
        f[2] = 1.0;
        let r = omp(&d, &f, 2, 0.0).unwrap();
        assert_eq!(r.support, vec![1, 2]);
        assert_abs_diff_eq!(r.estimate[1], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.estimate[2], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn omp_ties_go_to_lower_index() {
        let d = Dictionary::identity(3);
        let r = omp(&d, &[1.0, 1.0, 1.0], 1, 0.0).unwrap();
        assert_eq!(r.support, vec![0]);
    }

    #[test]
    fn omp_rejects_bad_k() {
        let d = Dictionary::identity(3);
        assert!(omp(&d, &[1.0, 0.0, 0.0], 0, 0.0).is_err());
        assert!(omp(&d, &[1.0, 0.0, 0.0], 4, 0.0).is_err());
    }

    #[test]
    fn omp_stops_on_residual() {
        let d = Dictionary::identity(5);
        let r = omp(&d, &[3.0, 0.0, 0.0, 0.0, 0.0], 4, 1e-9).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.stop_reason, StopReason::ResidualBelowThreshold);
    }

    #[test]
    fn dependent_atom_is_never_selected() {
        let mut m = DMatrix::identity(2, 3);
        m.set_column(2, &m.column(0).clone_owned());
        let d = Dictionary::new(m).unwrap();
        // once atom 0 or 2 is in, the residual is orthogonal to its duplicate
        let r = ompt(&d, &[1.0, 1.0], 0.1, &SolverOptions::with_seed(0)).unwrap();
        assert_eq!(r.iterations, 2);
        assert_eq!(r.final_residual(), 0.0);
        let mut qr = IncrementalQr::new(2);
        qr.push(d.atom(0)).unwrap();
        assert!(matches!(
            qr.push(d.atom(2)),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn recover_sparse_is_a_passthrough() {
        let d = random_dict(12, 20, 9);
        let f = d.apply_support(&[1, 7], &[1.0, -1.5]);
        let m = Measurement {
            observed: f.clone(),
            noise_level: 0.0,
            truth: None,
        };
        let opts = SolverOptions::with_seed(11);
        let direct = ompt(&d, &f, 0.3, &opts).unwrap();
        let mut via = recover_sparse(&d, &m, Strategy::Ompt { t: 0.3 }, &opts).unwrap();
        assert_eq!(via.strategy, Some(Strategy::Ompt { t: 0.3 }));
        via.strategy = None;
        assert_eq!(via, direct);

        let direct = omp(&d, &f, 2, 0.0).unwrap();
        let mut via = recover_sparse(
            &d,
            &m,
            Strategy::Omp {
                k_stop: 2,
                residual_tol: 0.0,
            },
            &opts,
        )
        .unwrap();
        via.strategy = None;
        assert_eq!(via, direct);
    }

    #[test]
    fn result_json_shape() {
        let d = Dictionary::identity(3);
        let r = ompt(&d, &[0.0, 2.0, 0.0], 0.5, &SolverOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in [
            "support",
            "coefficients",
            "residual_norms",
            "inner_products",
            "iterations",
            "stop_reason",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("strategy").is_none());
        assert_eq!(v["stop_reason"], "ResidualBelowThreshold");
    }

    #[test]
    fn mix_seed_separates_counters() {
        let a: Vec<u64> = (0..100).map(|c| mix_seed(7, c)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(mix_seed(7, 0), mix_seed(8, 0));
    }

    #[test]
    fn lazy_permutation_is_a_permutation() {
        let p: Vec<usize> =
            LazyPermutation::new(50, ScanOrder::RandomPermutationPerIteration, 3, 4).collect();
        let mut s = p.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_ne!(p, (0..50).collect::<Vec<_>>());
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn ompt_residual_invariants(seed in any::<u64>(), t in 0.05f64..0.95, k in 1usize..6) {
                let d = random_dict(16, 32, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
                let support: Vec<usize> = rand::seq::index::sample(&mut rng, 32, k).into_vec();
                let vals: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let f = d.apply_support(&support, &vals);
                let r = ompt(&d, &f, t, &SolverOptions::with_seed(seed)).unwrap();
                let fnorm = norm2(&f);

                prop_assert_eq!(r.iterations, r.support.len());
                prop_assert_eq!(r.residual_norms.len(), r.iterations + 1);
                let mut uniq = r.support.clone();
                uniq.sort_unstable();
                uniq.dedup();
                prop_assert_eq!(uniq.len(), r.support.len());
                for (&i, &c) in r.support.iter().zip(&r.coefficients) {
                    prop_assert_eq!(r.estimate[i], c);
                }
                let decay = (1.0 - t * t).sqrt();
                for (s, w) in r.residual_norms.windows(2).enumerate() {
                    prop_assert!(w[1] < w[0]);
                    prop_assert!(w[1] <= decay * w[0] + 1e-10);
                    prop_assert!(w[1] <= decay.powi(s as i32 + 1) * fnorm + 1e-8);
                }
            }
        }
    }
}
