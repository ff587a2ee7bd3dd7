//! Lexicographic enumeration of fixed-size index subsets.

use rayon::prelude::*;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Calls `visit` on every `k`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        // rightmost position that can still advance
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            return;
        };
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
}

/// Folds every `k`-subset of `0..n` in parallel, one task per leading index.
///
/// Partial results are combined in leading-index order, so the outcome does
/// not depend on scheduling as long as `combine` is associative.
pub fn par_fold_subsets<T, F, C>(n: usize, k: usize, identity: T, fold: F, combine: C) -> T
where
    T: Clone + Send + Sync,
    F: Fn(T, &[usize]) -> T + Sync,
    C: Fn(T, T) -> T + Sync,
{
    if k == 0 {
        return fold(identity, &[]);
    }
    if k > n {
        return identity;
    }
    let partials: Vec<T> = (0..=n - k)
        .into_par_iter()
        .map(|first| {
            let mut acc = identity.clone();
            let mut buf = vec![first; k];
            for_each_subset(n - first - 1, k - 1, |rest| {
                for (b, r) in buf[1..].iter_mut().zip(rest) {
                    *b = first + 1 + r;
                }
                acc = fold(std::mem::replace(&mut acc, identity.clone()), &buf);
            });
            acc
        })
        .collect();
    partials.into_iter().fold(identity, combine)
}
