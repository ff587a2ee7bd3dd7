//! Dense kernels shared by the metrics, solvers and oracle.
//!
//! Everything here works on real, column-major, double precision matrices.
//! A [`Dictionary`] is an `n x d` matrix whose columns (atoms) have unit
//! Euclidean norm; most routines take one together with a [`SupportSet`]
//! selecting a subset of its atoms.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns with norm below this are rejected by [`normalize_columns`].
pub const ZERO_COLUMN_TOL: f64 = 1e-14;
/// Allowed deviation of a dictionary column norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Smallest singular value below which a restricted matrix counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Allowed asymmetry for [`spectral_norm`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Largest dimension accepted by [`mixed_norm_inf_2`].
pub const MIXED_NORM_MAX_DIM: usize = 25;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Measurement matrix with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    matrix: DMatrix<f64>,
}

impl Dictionary {
    /// Wraps a matrix whose columns are already normalized.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_shape_and_finite(&matrix)?;
        for (index, col) in matrix.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotNormalized { index, norm });
            }
        }
        Ok(Self { matrix })
    }

    /// Identity dictionary of size `n x n`.
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    /// Number of measurements `n`.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of atoms `d`.
    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Atom `i` as a contiguous slice.
    pub fn atom(&self, i: usize) -> &[f64] {
        let n = self.rows();
        &self.matrix.as_slice()[i * n..(i + 1) * n]
    }

    /// Columns of the dictionary selected by `support`, in support order.
    pub fn restrict(&self, support: &SupportSet) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), support.len(), |r, c| {
            self.matrix[(r, support.indices()[c])]
        })
    }

    /// `Phi * x` for a dense coefficient vector of length `d`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols());
        let mut out = vec![0.0; self.rows()];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (o, a) in out.iter_mut().zip(self.atom(i)) {
                    *o += xi * a;
                }
            }
        }
        out
    }

    /// `Phi_S * z` for coefficients aligned with `support`.
    pub fn apply_support(&self, support: &[usize], z: &[f64]) -> Vec<f64> {
        assert_eq!(support.len(), z.len());
        let mut out = vec![0.0; self.rows()];
        for (&i, &zi) in support.iter().zip(z) {
            for (o, a) in out.iter_mut().zip(self.atom(i)) {
                *o += zi * a;
            }
        }
        out
    }
}

fn check_shape_and_finite(matrix: &DMatrix<f64>) -> Result<()> {
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix { rows, cols });
    }
    for c in 0..cols {
        for r in 0..rows {
            if !matrix[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Ordered set of atom indices. Insertion order is the selection order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    dim: usize,
    indices: Vec<usize>,
}

impl SupportSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
        }
    }

    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        let mut set = Self::empty(dim);
        for i in indices {
            set.insert(i)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, index: usize) -> Result<()> {
        if index >= self.dim {
            return Err(Error::IndexOutOfRange {
                index,
                dim: self.dim,
            });
        }
        if self.contains(index) {
            return Err(Error::DuplicateIndex(index));
        }
        self.indices.push(index);
        Ok(())
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.contains(&index)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indices in ascending order, ignoring selection order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v
    }

    /// Set equality, ignoring selection order.
    pub fn same_set(&self, other: &SupportSet) -> bool {
        self.len() == other.len() && self.sorted() == other.sorted()
    }
}

/// A length-`d` vector stored by its support and nonzero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal {
    support: SupportSet,
    values: Vec<f64>,
}

impl SparseSignal {
    pub fn new(support: SupportSet, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                actual: values.len(),
            });
        }
        for (&i, &v) in support.indices().iter().zip(&values) {
            if v == 0.0 || !v.is_finite() {
                return Err(Error::ZeroValue(i));
            }
        }
        Ok(Self { support, values })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            support: SupportSet::empty(dim),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of nonzeros `k`.
    pub fn sparsity(&self) -> usize {
        self.values.len()
    }

    /// Smallest nonzero magnitude; `None` for the zero signal.
    pub fn a_min(&self) -> Option<f64> {
        self.values.iter().map(|v| v.abs()).reduce(f64::min)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (&i, &v) in self.support.indices().iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }
}

/// Scales every column to unit Euclidean norm.
pub fn normalize_columns(matrix: &DMatrix<f64>) -> Result<Dictionary> {
    check_shape_and_finite(matrix)?;
    let mut out = matrix.clone();
    for (index, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm < ZERO_COLUMN_TOL {
            return Err(Error::ZeroColumn(index));
        }
        col /= norm;
    }
    Dictionary::new(out)
}

/// `Phi^T Phi`, exactly symmetric.
pub fn gram(dict: &Dictionary) -> DMatrix<f64> {
    let d = dict.cols();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = dot(dict.atom(i), dict.atom(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Thin QR factorization of `Phi_S` grown one column at a time.
///
/// Columns are orthogonalized by classical Gram-Schmidt with one round of
/// reorthogonalization, which keeps `Q` orthonormal to working precision for
/// the well-conditioned supports that greedy pursuit produces.
#[derive(Debug, Clone)]
pub struct IncrementalQr {
    n: usize,
    /// Orthonormal columns, concatenated.
    q: Vec<f64>,
    /// Upper triangular factor, stored column by column (column `j` has `j + 1` entries).
    r: Vec<Vec<f64>>,
    /// `R^{-1}`, same layout as `r`.
    r_inv: Vec<Vec<f64>>,
    r_inv_frobenius_sq: f64,
}

impl IncrementalQr {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            q: Vec::new(),
            r: Vec::new(),
            r_inv: Vec::new(),
            r_inv_frobenius_sq: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    fn q_col(&self, j: usize) -> &[f64] {
        &self.q[j * self.n..(j + 1) * self.n]
    }

    /// Appends a column. Fails, leaving the factorization unchanged, if the
    /// extended matrix would have smallest singular value below [`RANK_TOL`].
    pub fn push(&mut self, column: &[f64]) -> Result<()> {
        assert_eq!(column.len(), self.n);
        let s = self.len();
        let mut v = column.to_vec();
        let mut coeffs = vec![0.0; s + 1];
        for _ in 0..2 {
            for j in 0..s {
                let c = dot(self.q_col(j), &v);
                coeffs[j] += c;
                for (vi, qi) in v.iter_mut().zip(&self.q[j * self.n..(j + 1) * self.n]) {
                    *vi -= c * qi;
                }
            }
        }
        let rho = norm2(&v);
        coeffs[s] = rho;
        if rho < RANK_TOL {
            return Err(Error::RankDeficient { sigma_min: rho });
        }
        // new column of R^{-1} is [-R^{-1} c / rho; 1 / rho]
        let mut inv_col = vec![0.0; s + 1];
        for (j, col) in self.r_inv.iter().enumerate() {
            for (i, &x) in col.iter().enumerate() {
                inv_col[i] -= x * coeffs[j] / rho;
            }
        }
        inv_col[s] = 1.0 / rho;
        let frob_sq = self.r_inv_frobenius_sq + inv_col.iter().map(|x| x * x).sum::<f64>();
        self.r.push(coeffs);
        // sigma_min >= 1 / |R^{-1}|_F; fall back to the SVD when that is inconclusive
        if !(frob_sq.sqrt() * RANK_TOL <= 1.0) {
            let sigma_min = self.min_singular_value();
            if sigma_min < RANK_TOL {
                self.r.pop();
                return Err(Error::RankDeficient { sigma_min });
            }
        }
        self.r_inv.push(inv_col);
        self.r_inv_frobenius_sq = frob_sq;
        self.q.extend(v.iter().map(|x| x / rho));
        Ok(())
    }

    /// Smallest singular value of `R`, equal to that of the factored matrix.
    pub fn min_singular_value(&self) -> f64 {
        let s = self.len();
        if s == 0 {
            return f64::INFINITY;
        }
        if s == 1 {
            return self.r[0][0].abs();
        }
        let r = DMatrix::from_fn(s, s, |i, j| if i <= j { self.r[j][i] } else { 0.0 });
        r.singular_values().min()
    }

    /// Least-squares coefficients `argmin_z |f - A z|` for the factored `A`.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        let s = self.len();
        let mut x: Vec<f64> = (0..s).map(|j| dot(self.q_col(j), f)).collect();
        for i in (0..s).rev() {
            let mut acc = x[i];
            for j in i + 1..s {
                acc -= self.r[j][i] * x[j];
            }
            x[i] = acc / self.r[i][i];
        }
        x
    }
}

/// `argmin_z |f - Phi_S z|_2`.
pub fn restricted_least_squares(
    dict: &Dictionary,
    support: &SupportSet,
    f: &[f64],
) -> Result<Vec<f64>> {
    if f.len() != dict.rows() {
        return Err(Error::DimensionMismatch {
            expected: dict.rows(),
            actual: f.len(),
        });
    }
    let mut qr = IncrementalQr::new(dict.rows());
    for &i in support.indices() {
        qr.push(dict.atom(i))?;
    }
    Ok(qr.solve(f))
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm(matrix: &DMatrix<f64>) -> Result<f64> {
    let m = matrix.nrows();
    if matrix.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: matrix.ncols(),
        });
    }
    if m == 0 {
        return Ok(0.0);
    }
    let asym = (matrix - matrix.transpose()).amax();
    if asym > SYMMETRY_TOL * matrix.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    Ok(sym.symmetric_eigenvalues().amax())
}

/// `max_{x != 0} |A x|_2 / |x|_inf`, found over the vertices of the unit cube.
///
/// Sign vectors are visited in Gray-code order so each step is a rank-one
/// update; the winner is re-evaluated from scratch.
pub fn mixed_norm_inf_2(matrix: &DMatrix<f64>) -> Result<f64> {
    let (rows, m) = matrix.shape();
    if m > MIXED_NORM_MAX_DIM {
        return Err(Error::DimensionTooLarge(m));
    }
    if m == 0 || rows == 0 {
        return Ok(0.0);
    }
    // x and -x give the same norm, so x_0 = +1 throughout.
    let mut signs = vec![1.0; m];
    let mut y: Vec<f64> = (0..rows).map(|r| matrix.row(r).sum()).collect();
    let mut best = dot(&y, &y);
    let mut best_code: u64 = 0;
    let count: u64 = 1 << (m - 1);
    for step in 1..count {
        // bit that changes between gray(step - 1) and gray(step)
        let flip = step.trailing_zeros() as usize + 1;
        signs[flip] = -signs[flip];
        let col = matrix.column(flip);
        let delta = 2.0 * signs[flip];
        for (yi, ai) in y.iter_mut().zip(col.iter()) {
            *yi += delta * ai;
        }
        let val = dot(&y, &y);
        if val > best {
            best = val;
            best_code = step ^ (step >> 1);
        }
    }
    let x = DVector::from_fn(m, |j, _| {
        if j > 0 && (best_code >> (j - 1)) & 1 == 1 {
            -1.0
        } else {
            1.0
        }
    });
    Ok((matrix * x).norm())
}

/// Smallest singular value of `Phi_S`. Zero when `|S| > n`; infinite for an empty support.
pub fn min_singular_value(dict: &Dictionary, support: &SupportSet) -> f64 {
    if support.is_empty() {
        return f64::INFINITY;
    }
    if support.len() > dict.rows() {
        return 0.0;
    }
    dict.restrict(support).singular_values().min()
}

/// Reads the `n d` header plus `n` rows text format.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line: hline + 1,
            message: format!("bad header: {e}"),
        })?;
    let [n, d] = dims[..] else {
        return Err(Error::Parse {
            line: hline + 1,
            message: "header must be \"n d\"".into(),
        });
    };
    if n == 0 || d == 0 {
        return Err(Error::EmptyMatrix { rows: n, cols: d });
    }
    let mut m = DMatrix::zeros(n, d);
    for r in 0..n {
        let (lno, line) = lines.next().ok_or(Error::Parse {
            line: hline + 2 + r,
            message: format!("expected {n} rows, found {r}"),
        })?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: lno + 1,
                message: e.to_string(),
            })?;
        if vals.len() != d {
            return Err(Error::Parse {
                line: lno + 1,
                message: format!("expected {d} values, found {}", vals.len()),
            });
        }
        for (c, v) in vals.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    if let Some((lno, _)) = lines.next() {
        return Err(Error::Parse {
            line: lno + 1,
            message: "trailing data after matrix".into(),
        });
    }
    Ok(m)
}

/// Emits the text format with 17 significant digits per entry.
pub fn format_matrix(matrix: &DMatrix<f64>) -> String {
    let (n, d) = matrix.shape();
    let mut out = format!("{n} {d}\n");
    for r in 0..n {
        for c in 0..d {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", matrix[(r, c)]);
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text)
}

pub fn write_matrix(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, format_matrix(matrix)).map_err(|e| Error::io(path, e))
}

/// Whitespace-separated vector of reals.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|e| Error::Parse {
                line: 0,
                message: format!("{t:?}: {e}"),
            })
        })
        .collect()
}
