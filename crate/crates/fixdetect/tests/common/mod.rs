//! Brute-force reference statistics, kept deliberately independent of the
//! library's rank/DP implementations: everything here enumerates group
//! labelings directly and compares raw values pairwise.

// Shared across test targets; not every target calls every helper.
#![allow(dead_code)]

use itertools::Itertools;

/// Doubled Mann-Whitney U of `a` against `b`: each (x, y) pair contributes
/// 2 when x > y and 1 when x == y. Integer-exact for any float inputs.
pub fn doubled_u(a: &[f64], b: &[f64]) -> u64 {
    let mut u2 = 0u64;
    for &x in a {
        for &y in b {
            if x > y {
                u2 += 2;
            } else if x == y {
                u2 += 1;
            }
        }
    }
    u2
}

/// Kolmogorov-Smirnov D scaled by |a|·|b|: the max over thresholds of
/// |#{a ≤ v}·|b| − #{b ≤ v}·|a||, evaluated at every pooled value.
pub fn ks_d_numerator(a: &[f64], b: &[f64]) -> u64 {
    let n1 = a.len() as u64;
    let n2 = b.len() as u64;
    let mut best = 0u64;
    for &v in a.iter().chain(b.iter()) {
        let ca = a.iter().filter(|&&x| x <= v).count() as u64;
        let cb = b.iter().filter(|&&x| x <= v).count() as u64;
        best = best.max((ca * n2).abs_diff(cb * n1));
    }
    best
}

/// Exact permutation p-value of a two-sample statistic: enumerates every
/// way to label |a| of the pooled values as the first group and counts
/// labelings at least as extreme as the observed one.
fn permutation_p(a: &[f64], b: &[f64], stat: impl Fn(&[f64], &[f64]) -> u64) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let n = pooled.len();
    let n1 = a.len();
    let observed = stat(a, b);
    let mut hits = 0u64;
    let mut total = 0u64;
    for picked in (0..n).combinations(n1) {
        let g1: Vec<f64> = picked.iter().map(|&i| pooled[i]).collect();
        let g2: Vec<f64> = (0..n)
            .filter(|i| !picked.contains(i))
            .map(|i| pooled[i])
            .collect();
        if stat(&g1, &g2) >= observed {
            hits += 1;
        }
        total += 1;
    }
    hits as f64 / total as f64
}

/// Exact two-sided Mann-Whitney p by full enumeration. Feasible only for
/// |a|+|b| small; intended for inputs within the implementation's exact
/// regime.
pub fn mw_enumeration_p(a: &[f64], b: &[f64]) -> f64 {
    let center = (a.len() * b.len()) as u64;
    permutation_p(a, b, |g1, g2| doubled_u(g1, g2).abs_diff(center))
}

/// Exact Kolmogorov-Smirnov p by full enumeration.
pub fn ks_enumeration_p(a: &[f64], b: &[f64]) -> f64 {
    permutation_p(a, b, ks_d_numerator)
}
