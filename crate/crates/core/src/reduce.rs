//! Reproducible floating-point reductions.
//!
//! Every reduction in the crate goes through [`tree_sum`], which adds terms in
//! a fixed pairwise tree determined only by the number of terms. Large ranges
//! are split across rayon workers along the same tree, so the result is
//! bit-identical for any thread count.

const LEAF: usize = 64;
const PAR_THRESHOLD: usize = 8192;

/// Pairwise sum of `term(i)` for `i` in `0..n`.
pub fn tree_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    sum_range(0, n, &term)
}

fn sum_range<F>(lo: usize, hi: usize, term: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let len = hi - lo;
    if len <= LEAF {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += term(i);
        }
        return acc;
    }
    let mid = lo + len / 2;
    if len >= PAR_THRESHOLD {
        let (a, b) = rayon::join(|| sum_range(lo, mid, term), || sum_range(mid, hi, term));
        a + b
    } else {
        sum_range(lo, mid, term) + sum_range(mid, hi, term)
    }
}

/// Pairwise sum of a slice.
pub fn sum_slice(values: &[f64]) -> f64 {
    tree_sum(values.len(), |i| values[i])
}

/// Maximum of `term(i)`; NaN-free inputs assumed. Zero for an empty range.
pub fn tree_max<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64,
{
    (0..n).map(term).fold(0.0, f64::max)
}
