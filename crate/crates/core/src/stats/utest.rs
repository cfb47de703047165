//! Two-tailed, non-paired Wilcoxon–Mann–Whitney U-test.
//!
//! `U1 = n1·n2 + n1(n1+1)/2 − R1`, where `R1` is the rank sum of the first
//! sample in the pooled mid-ranking, `U2 = n1·n2 − U1`, and the reported
//! statistic is `u = min(U1, U2)`. The two-tailed p-value doubles the lower
//! tail at `u`:
//!
//! * exact: `min(1, 2·P(U ≤ u))` over all `C(n1+n2, n1)` equally likely rank
//!   assignments, counted with the usual recurrence;
//! * normal approximation: mean `n1·n2/2`, tie-corrected variance, continuity
//!   correction of 0.5, and the complementary error function evaluated with
//!   the five-term rational approximation of Abramowitz & Stegun 7.1.26.
//!
//! Other conventions exist (reporting `U1` only, or summing both tails of
//! the asymptotic distribution separately); they agree with this one for the
//! two-tailed decision up to the approximation error.

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Largest per-sample size for which the exact distribution is used.
pub const EXACT_MAX_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UTestMode {
    /// Exact when `max(n1, n2) <= 10` and no value appears in both samples.
    #[default]
    Auto,
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UTestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// `min(U1, U2)`.
    pub u_statistic: f64,
    /// `U1` for the first sample, kept so callers can recover the direction.
    pub u1: f64,
    pub p_value: f64,
    pub method: UTestMethod,
    pub n1: usize,
    pub n2: usize,
    /// All pooled values identical: the variance is zero and `p` is 1.
    pub degenerate: bool,
}

/// Mid-ranks (1-based); tied values share the mean of the ranks they span.
pub fn rank_with_ties(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::InvalidSample("empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(StatsError::InvalidSample("NaN in sample".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    Ok(ranks)
}

/// Sizes of runs of equal values among `values` (only groups of size > 1).
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .chunk_by(|a, b| a == b)
        .map(|g| g.len())
        .filter(|&t| t > 1)
        .collect()
}

fn has_cross_ties(a: &[f64], b: &[f64]) -> bool {
    let mut sorted_b = b.to_vec();
    sorted_b.sort_by(f64::total_cmp);
    a.iter().any(|x| sorted_b.binary_search_by(|y| y.total_cmp(x)).is_ok())
}

pub fn mann_whitney_u(sample_a: &[f64], sample_b: &[f64], mode: UTestMode) -> Result<UTestResult, StatsError> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(StatsError::InvalidSample("both samples need at least one value".into()));
    }
    let (n1, n2) = (sample_a.len(), sample_b.len());
    let pooled: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    let ranks = rank_with_ties(&pooled)?;
    let r1: f64 = ranks[..n1].iter().sum();
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let u1 = n1f * n2f + n1f * (n1f + 1.0) / 2.0 - r1;
    let u2 = n1f * n2f - u1;
    debug_assert!((u1 + u2 - n1f * n2f).abs() < 1e-9);
    let u = u1.min(u2);

    let exact_ok = n1.max(n2) <= EXACT_MAX_N && !has_cross_ties(sample_a, sample_b);
    let method = match mode {
        UTestMode::Exact if !exact_ok => {
            return Err(StatsError::ExactUnavailable { n1, n2, cross_ties: has_cross_ties(sample_a, sample_b) })
        }
        UTestMode::Exact => UTestMethod::Exact,
        UTestMode::Auto if exact_ok => UTestMethod::Exact,
        _ => UTestMethod::NormalApprox,
    };

    let base = UTestResult { u_statistic: u, u1, p_value: 1.0, method, n1, n2, degenerate: false };
    Ok(match method {
        UTestMethod::Exact => {
            // Without cross-sample ties U is an integer.
            UTestResult { p_value: exact_p_value(n1, n2, u.round() as u64), ..base }
        }
        UTestMethod::NormalApprox => {
            let (p_value, degenerate) = normal_p_value(n1, n2, u, &tie_groups(&pooled));
            UTestResult { p_value, degenerate, ..base }
        }
    })
}

/// Number of rank arrangements giving each U value, `counts[k] = #{U = k}`.
///
/// Recurrence: `f(m, n, k) = f(m−1, n, k−n) + f(m, n−1, k)` (is the largest
/// pooled rank in the first sample or the second?), with `f(0, n, 0) =
/// f(m, 0, 0) = 1`.
pub fn u_distribution(n1: usize, n2: usize) -> Vec<u64> {
    // table[m][n] holds the distribution for sizes (m, n).
    let mut table: Vec<Vec<Vec<u64>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for m in 0..=n1 {
        for n in 0..=n2 {
            table[m][n] = if m == 0 || n == 0 {
                vec![1]
            } else {
                let mut dist = vec![0u64; m * n + 1];
                for (k, c) in table[m - 1][n].iter().enumerate() {
                    dist[k + n] += c;
                }
                for (k, c) in table[m][n - 1].iter().enumerate() {
                    dist[k] += c;
                }
                dist
            };
        }
    }
    std::mem::take(&mut table[n1][n2])
}

/// `min(1, 2·P(U ≤ u))` under the exact null distribution.
pub fn exact_p_value(n1: usize, n2: usize, u: u64) -> f64 {
    let dist = u_distribution(n1, n2);
    let total: u64 = dist.iter().sum();
    let at_most: u64 = dist.iter().take(u as usize + 1).sum();
    (2.0 * at_most as f64 / total as f64).min(1.0)
}

fn normal_p_value(n1: usize, n2: usize, u: f64, ties: &[usize]) -> (f64, bool) {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let mean = n1f * n2f / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum::<f64>();
    let tie_term = if n > 1.0 { tie_term / (n * (n - 1.0)) } else { 0.0 };
    let variance = n1f * n2f / 12.0 * ((n + 1.0) - tie_term);
    if variance <= 0.0 {
        return (1.0, true);
    }
    let z = ((u - mean).abs() - 0.5) / variance.sqrt();
    if z <= 0.0 {
        return (1.0, false);
    }
    // 2·(1 − Φ(z)) = erfc(z / √2)
    (erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0), false)
}

/// Complementary error function for `x >= 0`, Abramowitz & Stegun 7.1.26
/// (absolute error ≤ 1.5e-7).
pub fn erfc(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    const P: f64 = 0.327_591_1;
    const A: [f64; 5] = [0.254_829_592, -0.284_496_736, 1.421_413_741, -1.453_152_027, 1.061_405_429];
    let t = 1.0 / (1.0 + P * x);
    let poly = A.iter().rev().fold(0.0, |acc, a| (acc + a) * t);
    poly * (-x * x).exp()
}

/// Standard normal CDF built on [`erfc`].
pub fn normal_cdf(z: f64) -> f64 {
    let tail = 0.5 * erfc(z.abs() / std::f64::consts::SQRT_2);
    if z >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn ranks() {
        assert_eq!(rank_with_ties(&[10.0, 20.0, 30.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(rank_with_ties(&[5.0, 5.0]).unwrap(), vec![1.5, 1.5]);
        assert_eq!(rank_with_ties(&[7.0, 3.0, 7.0]).unwrap(), vec![2.5, 1.0, 2.5]);
        assert!(matches!(rank_with_ties(&[1.0, f64::NAN]), Err(StatsError::InvalidSample(_))));
        assert!(matches!(rank_with_ties(&[]), Err(StatsError::InvalidSample(_))));
    }

    #[test]
    fn fully_separated_three_by_three() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], UTestMode::Auto).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.method, UTestMethod::Exact);
        // Enumeration: 1 of C(6,3) = 20 arrangements has U = 0.
        assert_eq!(r.p_value, 2.0 / 20.0);
    }

    #[test]
    fn interleaved_four_by_four() {
        let r = mann_whitney_u(&[1.0, 3.0, 5.0, 7.0], &[2.0, 4.0, 6.0, 8.0], UTestMode::Exact).unwrap();
        assert_eq!(r.u_statistic, 6.0);
        // Enumeration in tests/oracles/oracles.py: 2·P(U ≤ 6) = 24/35.
        assert!((r.p_value - 24.0 / 35.0).abs() < 1e-15);
    }

    #[test]
    fn identical_samples() {
        let a = [0.7, 0.71, 0.72, 0.7];
        let r = mann_whitney_u(&a, &a, UTestMode::Auto).unwrap();
        assert_eq!(r.u1, 8.0);
        assert_eq!(r.u_statistic, 8.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.method, UTestMethod::NormalApprox);
    }

    #[test]
    fn constant_pool_is_degenerate() {
        let r = mann_whitney_u(&[0.5; 5], &[0.5; 7], UTestMode::Auto).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.degenerate);
    }

    #[test]
    fn exact_refused_with_cross_ties_or_large_samples() {
        assert!(matches!(
            mann_whitney_u(&[1.0, 2.0], &[2.0, 3.0], UTestMode::Exact),
            Err(StatsError::ExactUnavailable { cross_ties: true, .. })
        ));
        let big: Vec<f64> = (0..11).map(f64::from).collect();
        assert!(matches!(
            mann_whitney_u(&big, &[100.0], UTestMode::Exact),
            Err(StatsError::ExactUnavailable { n1: 11, .. })
        ));
        // Ties inside one sample do not block the exact path.
        let r = mann_whitney_u(&[1.0, 1.0, 2.0], &[3.0, 4.0], UTestMode::Auto).unwrap();
        assert_eq!(r.method, UTestMethod::Exact);
    }

    #[test]
    fn empty_sample() {
        assert!(matches!(mann_whitney_u(&[], &[1.0], UTestMode::Auto), Err(StatsError::InvalidSample(_))));
    }

    #[test]
    fn approximation_with_ties_matches_reference() {
        // scipy.stats.mannwhitneyu(a, b, use_continuity=True, method="asymptotic")
        // reports U = 17.5, p = 0.001810188940607148 (tests/oracles/oracles.py).
        let a = [0.71, 0.69, 0.74, 0.70, 0.73, 0.72, 0.68, 0.75, 0.705, 0.715, 0.725, 0.735];
        let b = [0.72, 0.76, 0.77, 0.745, 0.78, 0.79, 0.755, 0.765, 0.775, 0.785, 0.70, 0.74];
        let r = mann_whitney_u(&a, &b, UTestMode::NormalApprox).unwrap();
        assert_eq!(r.u_statistic, 17.5);
        assert!((r.p_value - 0.001810188940607148).abs() < 3e-7, "{}", r.p_value);
    }

    #[test]
    fn erfc_accuracy_against_statrs() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        for i in 0..=800 {
            let z = i as f64 / 100.0;
            let reference = 2.0 * (1.0 - normal.cdf(z));
            let ours = erfc(z / std::f64::consts::SQRT_2);
            assert!((ours - reference).abs() <= 3e-7, "z={z}: {ours} vs {reference}");
            assert!((normal_cdf(-z) - normal.cdf(-z)).abs() <= 1.5e-7);
        }
    }

    #[test]
    fn distribution_sums_to_binomial() {
        for n1 in 0..=8 {
            for n2 in 0..=8 {
                let d = u_distribution(n1, n2);
                let total: u64 = d.iter().sum();
                let binom = (1..=n1 as u64).fold(1u64, |acc, i| acc * (n2 as u64 + i) / i);
                assert_eq!(total, binom);
                assert_eq!(d.len(), n1 * n2 + 1);
                assert!(d.iter().eq(d.iter().rev()), "symmetric");
            }
        }
    }

    fn distinct(seed: u64, n: usize) -> Vec<f64> {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut pool: Vec<f64> = (0..200).map(f64::from).collect();
        pool.shuffle(&mut rng);
        pool.truncate(n);
        pool
    }

    proptest! {
        #[test]
        fn u1_plus_u2_and_swap_symmetry(a in proptest::collection::vec(0u8..20, 1..15), b in proptest::collection::vec(0u8..20, 1..15)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney_u(&a, &b, UTestMode::Auto).unwrap();
            let ba = mann_whitney_u(&b, &a, UTestMode::Auto).unwrap();
            let u2 = (a.len() * b.len()) as f64 - ab.u1;
            prop_assert!((ba.u1 - u2).abs() < 1e-9);
            prop_assert_eq!(ab.u_statistic, ba.u_statistic);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }

        #[test]
        fn exact_and_approx_agree(n in 5usize..=10, seed: u64) {
            let pool = distinct(seed, 2 * n);
            let (a, b) = pool.split_at(n);
            let exact = mann_whitney_u(a, b, UTestMode::Exact).unwrap();
            let approx = mann_whitney_u(a, b, UTestMode::NormalApprox).unwrap();
            prop_assert!((exact.p_value - approx.p_value).abs() <= 0.02,
                "n={} u={} exact={} approx={}", n, exact.u_statistic, exact.p_value, approx.p_value);
        }

        #[test]
        fn large_shift_minimises_p(n1 in 1usize..=10, n2 in 1usize..=10, seed: u64) {
            let pool = distinct(seed, n1 + n2);
            let a = &pool[..n1];
            let b: Vec<f64> = pool[n1..].iter().map(|v| v + 1e6).collect();
            let r = mann_whitney_u(a, &b, UTestMode::Exact).unwrap();
            prop_assert_eq!(r.u_statistic, 0.0);
            prop_assert_eq!(r.p_value, exact_p_value(n1, n2, 0));
            let total: u64 = u_distribution(n1, n2).iter().sum();
            prop_assert_eq!(r.p_value, (2.0 / total as f64).min(1.0));
        }
    }

    #[test]
    fn rejection_rate_under_null() {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
        let normal = rand_distr::Normal::new(0.7, 0.003).unwrap();
        let trials = 400;
        let rejected = (0..trials)
            .filter(|_| {
                let a: Vec<f64> = (0..50).map(|_| normal.sample(&mut rng)).collect();
                let b: Vec<f64> = (0..50).map(|_| normal.sample(&mut rng)).collect();
                mann_whitney_u(&a, &b, UTestMode::Auto).unwrap().p_value < 0.05
            })
            .count();
        let rate = rejected as f64 / trials as f64;
        assert!((0.02..=0.09).contains(&rate), "rejection rate {rate}");
    }
}
