// SPDX-License-Identifier: Apache-2.0

//! Contiguous weight-balanced splitting of an ordered sequence.

use std::ops::Range;

/// Split `weights` into `parts` contiguous, non-empty ranges whose weight
/// totals are as close as possible to `total / parts`.
///
/// Boundary `j` is placed at the prefix whose cumulative weight is nearest
/// to `j * total / parts` (ties go to the shorter prefix), then clamped so
/// that every range keeps at least one element. Targets are compared in
/// exact integer arithmetic.
///
/// Panics if `parts == 0` or `parts > weights.len()`.
pub fn balanced_split(weights: &[u64], parts: usize) -> Vec<Range<usize>> {
    let n = weights.len();
    assert!(parts >= 1 && parts <= n, "need 1 <= parts <= len");
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0u128);
    for &w in weights {
        let last = *cum.last().unwrap();
        cum.push(last + w as u128);
    }
    let total = cum[n];
    let p = parts as u128;

    let mut bounds = Vec::with_capacity(parts + 1);
    bounds.push(0usize);
    for j in 1..parts {
        let prev = *bounds.last().unwrap();
        let target = j as u128 * total;
        // first prefix length whose scaled weight reaches the target
        let reach = cum.partition_point(|&c| c * p < target);
        let mut b = reach;
        if reach > 0 {
            // reach <= n because cum[n] * p >= j * total
            let over = cum[reach] * p - target;
            let under = target - cum[reach - 1] * p;
            if under <= over {
                b = reach - 1;
            }
        }
        let lo = prev + 1;
        let hi = n - (parts - j);
        bounds.push(b.clamp(lo, hi));
    }
    bounds.push(n);
    bounds.windows(2).map(|w| w[0]..w[1]).collect()
}
