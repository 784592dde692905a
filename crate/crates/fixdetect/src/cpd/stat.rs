//! Two-sample hypothesis tests: Mann-Whitney U and Kolmogorov-Smirnov.
//!
//! Both tests have an exact small-sample path that agrees with brute-force
//! enumeration of all C(n1+n2, n1) group labelings, and an asymptotic path
//! for larger samples. Exact p-values are formed as integer-count ratios, so
//! they are reproducible bit for bit.

use crate::Error;

/// Doubled midranks for each input position plus the tie term Σ(t³ − t).
///
/// Doubling keeps midranks integral (a tie group of even size has a .5
/// midrank), which the exact path needs for integer counting.
pub(crate) fn doubled_midranks(values: &[f64]) -> (Vec<u64>, u64) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));

    let mut rank2 = vec![0u64; n];
    let mut tie_cubes = 0u64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let size = (end - start) as u64;
        // Midrank of the group is (start+1 + end)/2; doubled it is integral.
        let doubled = 2 * start as u64 + size + 1;
        for &pos in &order[start..end] {
            rank2[pos] = doubled;
        }
        tie_cubes += size * size * size - size;
        start = end;
    }
    (rank2, tie_cubes)
}

fn reject_nan(sample: &[f64]) -> crate::Result<()> {
    if sample.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("sample contains NaN".into()));
    }
    Ok(())
}

/// True when the exact Mann-Whitney path is affordable for these sizes.
pub(crate) fn mw_exact_applies(n1: usize, n2: usize) -> bool {
    n1 + n2 <= 12 || n1 * n2 <= 200
}

/// Continuity-corrected z for the tie-adjusted normal approximation, or
/// `None` when the pooled sample has zero rank variance (everything tied).
///
/// `r1_2` is the doubled rank sum of the first group; `tie_cubes` is the
/// global Σ(t³ − t).
fn mw_approx_z(r1_2: u64, n1: usize, n2: usize, tie_cubes: u64) -> Option<f64> {
    let n = n1 + n2;
    debug_assert!(n >= 2);
    let (n1_u, n2_u) = (n1 as u64, n2 as u64);
    // U1 doubled; the rank-sum lower bound makes the subtraction safe.
    debug_assert!(r1_2 >= n1_u * (n1_u + 1));
    let u1_2 = r1_2 - n1_u * (n1_u + 1);
    let mean2 = n1_u * n2_u;
    let dev2 = u1_2.abs_diff(mean2);

    let nf = n as f64;
    let variance = (n1 as f64 * n2 as f64 / 12.0)
        * ((nf + 1.0) - tie_cubes as f64 / (nf * (nf - 1.0)));
    if variance <= 0.0 {
        return None;
    }
    Some((dev2 as f64 / 2.0 - 0.5).max(0.0) / variance.sqrt())
}

/// ln of the two-sided normal tail p at deviation `z` ≥ 0. Finite for any
/// finite z, unlike erfc, which underflows to zero near z ≈ 38.6; scans
/// rank candidate splits by this so huge deviations stay ordered.
pub(crate) fn normal_tail_lnp(z: f64) -> f64 {
    if z <= 30.0 {
        // erfc(30/√2) ≈ 1e-198: representable, so the log is exact here.
        libm::erfc(z / std::f64::consts::SQRT_2).ln()
    } else {
        // ln of 2φ(z)/z · (1 − z⁻² + 3z⁻⁴); relative error ~15/z⁶ at the
        // switch point, small enough to keep the ordering monotone in z.
        let zz = z * z;
        std::f64::consts::LN_2 - 0.5 * zz - z.ln()
            - 0.5 * (2.0 * std::f64::consts::PI).ln()
            + (1.0 - 1.0 / zz + 3.0 / (zz * zz)).ln()
    }
}

/// Normal-approximation two-sided Mann-Whitney (p, ln p) from integer rank
/// stats. Uses the tie-corrected variance and a 0.5 continuity correction.
/// All-tied samples (zero variance) give p = 1.
pub(crate) fn mw_approx_sig(r1_2: u64, n1: usize, n2: usize, tie_cubes: u64) -> (f64, f64) {
    match mw_approx_z(r1_2, n1, n2, tie_cubes) {
        None => (1.0, 0.0),
        Some(z) => (
            libm::erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
            normal_tail_lnp(z),
        ),
    }
}

/// Exact two-sided p: the fraction of size-`k` rank subsets whose doubled U
/// deviates from its mean by at least the observed deviation.
///
/// Counting runs over a subset-sum table rather than explicit labelings; the
/// counts are identical because U is a function of the rank sum alone.
fn mw_exact_p(rank2: &[u64], k: usize, rk_2: u64) -> f64 {
    let n = rank2.len();
    let (n_u, k_u) = (n as u64, k as u64);
    let uk_2 = rk_2 - k_u * (k_u + 1);
    let mean2 = k_u * (n_u - k_u);
    let dev2 = uk_2.abs_diff(mean2);

    let s_dim = (n_u * (n_u + 1) + 1) as usize;
    // counts[j][s] = number of j-subsets of the ranks seen so far summing to s.
    let mut counts = vec![vec![0u64; s_dim]; k + 1];
    counts[0][0] = 1;
    for &r in rank2 {
        for j in (0..k).rev() {
            for s in 0..s_dim - r as usize {
                if counts[j][s] > 0 {
                    counts[j + 1][s + r as usize] += counts[j][s];
                }
            }
        }
    }

    let mut extreme = 0u64;
    let mut total = 0u64;
    for (s, &ways) in counts[k].iter().enumerate() {
        if ways == 0 {
            continue;
        }
        total += ways;
        let u_2 = s as u64 - k_u * (k_u + 1);
        if u_2.abs_diff(mean2) >= dev2 {
            extreme += ways;
        }
    }
    extreme as f64 / total as f64
}

/// Two-sided Mann-Whitney U p-value with midrank tie handling.
///
/// Exact (equivalent to enumerating every labeling) when the sample sizes
/// satisfy [`mw_exact_applies`]; otherwise the tie-corrected normal
/// approximation with continuity correction.
pub fn mann_whitney_p(a: &[f64], b: &[f64]) -> crate::Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    reject_nan(a)?;
    reject_nan(b)?;
    let (n1, n2) = (a.len(), b.len());
    let combined: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let (rank2, tie_cubes) = doubled_midranks(&combined);
    let r1_2: u64 = rank2[..n1].iter().sum();

    if mw_exact_applies(n1, n2) {
        // Count subsets of the smaller group; the two-sided p is the same
        // either way and the table stays small.
        let n_u = (n1 + n2) as u64;
        let (k, rk_2) = if n1 <= n2 {
            (n1, r1_2)
        } else {
            (n2, n_u * (n_u + 1) - r1_2)
        };
        Ok(mw_exact_p(&rank2, k, rk_2))
    } else {
        Ok(mw_approx_sig(r1_2, n1, n2, tie_cubes).0)
    }
}

/// Kolmogorov-Smirnov D scaled by n1·n2 (an exact integer).
pub(crate) fn ks_d_scaled(sorted_a: &[f64], sorted_b: &[f64]) -> u64 {
    let (n1, n2) = (sorted_a.len() as u64, sorted_b.len() as u64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0u64;
    while i < sorted_a.len() && j < sorted_b.len() {
        let v = if sorted_a[i] <= sorted_b[j] {
            sorted_a[i]
        } else {
            sorted_b[j]
        };
        while i < sorted_a.len() && sorted_a[i] == v {
            i += 1;
        }
        while j < sorted_b.len() && sorted_b[j] == v {
            j += 1;
        }
        d = d.max((i as u64 * n2).abs_diff(j as u64 * n1));
    }
    d
}

/// Survival function of the Kolmogorov distribution,
/// Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} exp(−2 j² λ²).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sign = 2.0;
    let mut sum = 0.0;
    let mut prev = 0.0;
    for j in 1..=100u32 {
        let term = sign * libm::exp(a2 * (j * j) as f64);
        sum += term;
        if term.abs() <= 0.001 * prev || term.abs() <= 1e-12 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        prev = term.abs();
        sign = -sign;
    }
    1.0 // no convergence means no evidence against H0
}

/// Counts (group labelings with D ≥ `d_obs`, all labelings) by walking tie
/// groups of the merged sample and distributing `a`-slots binomially.
fn ks_exact_counts(groups: &[usize], n1: usize, n2: usize, d_obs: u64) -> (u64, u64) {
    fn binomial(n: usize, k: usize) -> u64 {
        let k = k.min(n - k);
        let mut acc = 1u64;
        for i in 0..k {
            acc = acc * (n - i) as u64 / (i + 1) as u64;
        }
        acc
    }

    fn walk(
        groups: &[usize],
        n1: usize,
        n2: usize,
        i: usize,
        j: usize,
        d_max: u64,
        d_obs: u64,
        hits: &mut u64,
        total: &mut u64,
    ) {
        let Some((&size, rest)) = groups.split_first() else {
            *total += 1;
            if d_max >= d_obs {
                *hits += 1;
            }
            return;
        };
        for x in 0..=size.min(n1 - i) {
            if size - x > n2 - j {
                continue;
            }
            let (ni, nj) = (i + x, j + size - x);
            let d_here = (ni as u64 * n2 as u64).abs_diff(nj as u64 * n1 as u64);
            let weight = binomial(size, x);
            let (mut h, mut t) = (0, 0);
            walk(rest, n1, n2, ni, nj, d_max.max(d_here), d_obs, &mut h, &mut t);
            *hits += weight * h;
            *total += weight * t;
        }
    }

    let (mut hits, mut total) = (0, 0);
    walk(groups, n1, n2, 0, 0, 0, d_obs, &mut hits, &mut total);
    (hits, total)
}

/// Two-sided two-sample Kolmogorov-Smirnov p-value.
///
/// Exact by enumeration when n1+n2 ≤ 12, otherwise the asymptotic
/// Kolmogorov distribution at effective sample size n1·n2/(n1+n2).
pub fn ks_p(a: &[f64], b: &[f64]) -> crate::Result<f64> {
    ks_sig(a, b).map(|(p, _)| p)
}

/// (p, ln p) with the same path selection as [`ks_p`]. When the asymptotic
/// survival function underflows, the log falls back to its leading term
/// ln 2 − 2λ² so candidate splits stay comparable.
pub(crate) fn ks_sig(a: &[f64], b: &[f64]) -> crate::Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    reject_nan(a)?;
    reject_nan(b)?;
    let (n1, n2) = (a.len(), b.len());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.total_cmp(y));
    sb.sort_by(|x, y| x.total_cmp(y));
    let d_scaled = ks_d_scaled(&sa, &sb);

    if n1 + n2 <= 12 {
        // Tie groups of the merged sample, in value order.
        let mut merged: Vec<f64> = sa.iter().chain(sb.iter()).copied().collect();
        merged.sort_by(|x, y| x.total_cmp(y));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < merged.len() {
            let mut end = start + 1;
            while end < merged.len() && merged[end] == merged[start] {
                end += 1;
            }
            groups.push(end - start);
            start = end;
        }
        let (hits, total) = ks_exact_counts(&groups, n1, n2, d_scaled);
        // The observed labeling always counts itself, so p > 0.
        let p = hits as f64 / total as f64;
        Ok((p, p.ln()))
    } else {
        let d = d_scaled as f64 / (n1 as f64 * n2 as f64);
        let ne = n1 as f64 * n2 as f64 / (n1 + n2) as f64;
        let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
        let p = kolmogorov_q(lambda);
        let lnp = if p > 0.0 {
            p.ln()
        } else {
            std::f64::consts::LN_2 - 2.0 * lambda * lambda
        };
        Ok((p, lnp))
    }
}
