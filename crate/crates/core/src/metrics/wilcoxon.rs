//! Two-sided Wilcoxon signed-rank test.
//!
//! Zero differences are dropped; ties get midranks. Up to
//! [`EXACT_MAX_N`] non-zero pairs the p-value comes from enumerating all
//! 2ⁿ sign assignments, otherwise from the normal approximation with tie
//! and continuity corrections.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StatsError;

pub const EXACT_MAX_N: usize = 12;
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub n: usize,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Normal-approximation z (continuity corrected); reported for every n.
    pub z: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks of |d| (1-based), returned doubled so they are integers.
fn doubled_midranks(abs: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && abs[idx[j + 1]] == abs[idx[i]] {
            j += 1;
        }
        // mean of ranks i+1..=j+1, doubled
        let r2 = (i + 1 + j + 1) as u64;
        for &k in &idx[i..=j] {
            ranks[k] = r2;
        }
        i = j + 1;
    }
    ranks
}

/// P(|W − μ| ≥ |w_obs − μ|) by full enumeration, on doubled ranks.
pub fn exact_p_value(doubled_ranks: &[u64], w_plus_doubled: u64) -> f64 {
    let n = doubled_ranks.len();
    let total: u64 = doubled_ranks.iter().sum();
    // compare 2·W against the doubled mean, i.e. |2W2 − total|
    let obs_dev = (2 * w_plus_doubled).abs_diff(total);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let mut w = 0u64;
        for (k, r) in doubled_ranks.iter().enumerate() {
            if mask >> k & 1 == 1 {
                w += r;
            }
        }
        if (2 * w).abs_diff(total) >= obs_dev {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Normal approximation with tie correction and continuity correction.
pub fn normal_z(doubled_ranks: &[u64], w_plus: f64) -> f64 {
    let n = doubled_ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut sorted = doubled_ranks.to_vec();
    sorted.sort_unstable();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    let dev = w_plus - mean;
    if dev == 0.0 || var <= 0.0 {
        return 0.0;
    }
    (dev - 0.5 * dev.signum()) / var.sqrt()
}

fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Signed-rank test on the differences `a − b` of paired samples.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult, StatsError> {
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.len() < MIN_PAIRS {
        return Err(StatsError::InsufficientData {
            what: "non-zero paired differences",
            needed: MIN_PAIRS,
            got: diffs.len(),
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let w2: u64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let w_plus = w2 as f64 / 2.0;
    let z = normal_z(&ranks, w_plus);
    let exact = diffs.len() <= EXACT_MAX_N;
    let p_value = if exact {
        exact_p_value(&ranks, w2)
    } else {
        two_sided_normal_p(z)
    };
    Ok(WilcoxonResult {
        n: diffs.len(),
        w_plus,
        z,
        p_value,
        exact,
    })
}

/// Normal-approximation p-value regardless of n (for comparisons).
pub fn normal_p_value(pairs: &[(f64, f64)]) -> Result<f64, StatsError> {
    let r = wilcoxon_signed_rank(pairs)?;
    Ok(two_sided_normal_p(r.z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_diffs(d: &[f64]) -> Vec<(f64, f64)> {
        d.iter().map(|x| (*x, 0.0)).collect()
    }

    /// Lower-tail counts of W⁺ for ranks 1..n by dynamic programming.
    fn tail_count(n: usize, w: usize) -> u64 {
        let max = n * (n + 1) / 2;
        let mut c = vec![0u64; max + 1];
        c[0] = 1;
        for k in 1..=n {
            for s in (k..=max).rev() {
                c[s] += c[s - k];
            }
        }
        c[..=w].iter().sum()
    }

    #[test]
    fn all_positive_n5() {
        let r = wilcoxon_signed_rank(&from_diffs(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        assert!(r.exact);
        assert_eq!(r.w_plus, 15.0);
        assert_eq!(r.p_value, 0.0625);
    }

    #[test]
    fn tabulated_values() {
        // n = 8, W = 3: 5/256 one-sided; n = 10, W = 8: 25/1024 one-sided
        let mut d: Vec<f64> = (1..=8).map(|k| k as f64).collect();
        d[0] = -1.0;
        d[1] = -2.0;
        let r = wilcoxon_signed_rank(&from_diffs(&d)).unwrap();
        assert_eq!(r.w_plus, 33.0);
        assert_eq!(r.p_value, 2.0 * 5.0 / 256.0);
        let mut d: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        d[0] = -1.0;
        d[6] = -7.0;
        let r = wilcoxon_signed_rank(&from_diffs(&d)).unwrap();
        assert_eq!(r.w_plus, 55.0 - 8.0);
        assert_eq!(r.p_value, 2.0 * 25.0 / 1024.0);
    }

    #[test]
    fn enumeration_matches_distribution_for_every_w() {
        for n in 5..=10usize {
            let max = n * (n + 1) / 2;
            for mask in 0u32..(1 << n) {
                let d: Vec<f64> = (1..=n)
                    .map(|k| if mask >> (k - 1) & 1 == 1 { k as f64 } else { -(k as f64) })
                    .collect();
                let r = wilcoxon_signed_rank(&from_diffs(&d)).unwrap();
                let w = r.w_plus as usize;
                let lo = w.min(max - w);
                let want = (2 * tail_count(n, lo)).min(1 << n) as f64 / (1u64 << n) as f64;
                assert_eq!(r.p_value, want, "n={n} w={w}");
                if n == 10 {
                    let approx = normal_p_value(&from_diffs(&d)).unwrap();
                    assert!((approx - r.p_value).abs() < 0.05, "n=10 w={w}");
                }
            }
        }
    }

    #[test]
    fn zeros_dropped_and_too_few_rejected() {
        let pairs = from_diffs(&[0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            wilcoxon_signed_rank(&pairs),
            Err(StatsError::InsufficientData { got: 4, .. })
        ));
        let r = wilcoxon_signed_rank(&from_diffs(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        assert_eq!(r.n, 5);
    }

    #[test]
    fn ties_get_midranks() {
        let r = wilcoxon_signed_rank(&from_diffs(&[1.0, -1.0, 2.0, 2.0, 3.0])).unwrap();
        // ranks 1.5, 1.5, 3.5, 3.5, 5
        assert_eq!(r.w_plus, 1.5 + 3.5 + 3.5 + 5.0);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn large_n_uses_normal() {
        let d: Vec<f64> = (1..=16).map(|k| k as f64).collect();
        let r = wilcoxon_signed_rank(&from_diffs(&d)).unwrap();
        assert!(!r.exact);
        assert!(r.p_value < 0.001);
        assert!(r.z > 3.0);
        let mixed: Vec<f64> = d.iter().enumerate().map(|(i, x)| if i % 2 == 0 { *x } else { -x }).collect();
        let r = wilcoxon_signed_rank(&from_diffs(&mixed)).unwrap();
        assert!(r.p_value > 0.5);
    }
}
