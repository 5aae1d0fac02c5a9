//! Trial statistics: coefficient of variation and the two-sided Mann-Whitney U test.
//!
//! Standard deviations use the n−1 (sample) denominator. Mann-Whitney p-values
//! are exact for combined sample sizes up to [`EXACT_CUTOFF`], computed by
//! counting rank-sum assignments over the pooled midranks; larger samples use
//! the normal approximation with tie and continuity correction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Combined sample size up to which p-values are computed exactly.
pub const EXACT_CUTOFF: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSeries {
    pub label: String,
    pub values: Vec<f64>,
}

impl TrialSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{label}: need at least {need} values, got {got}")]
    TooFewValues { label: String, need: usize, got: usize },
    #[error("{label}: mean is zero, coefficient of variation undefined")]
    ZeroMean { label: String },
    #[error("{label}: non-finite value")]
    NonFinite { label: String },
}

fn check_finite(series: &TrialSeries) -> Result<(), StatsError> {
    if series.values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite {
            label: series.label.clone(),
        })
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n−1 denominator). Requires at least two values.
pub fn sample_std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

/// σ/μ × 100 with the sample standard deviation.
pub fn coefficient_of_variation(series: &TrialSeries) -> Result<f64, StatsError> {
    check_finite(series)?;
    if series.values.len() < 2 {
        return Err(StatsError::TooFewValues {
            label: series.label.clone(),
            need: 2,
            got: series.values.len(),
        });
    }
    let m = mean(&series.values);
    if m == 0.0 {
        return Err(StatsError::ZeroMean {
            label: series.label.clone(),
        });
    }
    Ok(sample_std_dev(&series.values) / m * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PValueMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// U statistic of the second sample; `u + u_other == n_a * n_b`.
    pub u_other: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Pooled midranks, doubled so that every rank is an integer.
fn doubled_midranks(pooled: &[f64]) -> (Vec<i64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&x, &y| pooled[x].total_cmp(&pooled[y]));
    let mut ranks = vec![0i64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j, midrank (i+1+j)/2
        for &idx in &order[i..j] {
            ranks[idx] = (i + 1 + j) as i64;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

pub fn mann_whitney_u(a: &TrialSeries, b: &TrialSeries) -> Result<MannWhitney, StatsError> {
    for s in [a, b] {
        check_finite(s)?;
        if s.values.is_empty() {
            return Err(StatsError::TooFewValues {
                label: s.label.clone(),
                need: 1,
                got: 0,
            });
        }
    }
    let na = a.values.len();
    let nb = b.values.len();
    let n = na + nb;
    let pooled: Vec<f64> = a.values.iter().chain(&b.values).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);

    let offset = (na * (na + 1)) as i64;
    let u2 = ranks[..na].iter().sum::<i64>() - offset;
    let product = (na * nb) as i64;
    let u = u2 as f64 / 2.0;
    let u_other = product as f64 - u;

    let (p_value, method) = if n <= EXACT_CUTOFF {
        let observed = (u2 - product).abs();
        let extreme = count_assignments(&ranks, na, |sum| (sum - offset - product).abs() >= observed);
        let total = binomial(n, na);
        ((extreme as f64 / total as f64).min(1.0), PValueMethod::Exact)
    } else {
        (normal_p(u, na, nb, &ties), PValueMethod::NormalApprox)
    };

    Ok(MannWhitney {
        u,
        u_other,
        p_value,
        method,
    })
}

/// Counts size-`k` subsets of `ranks` whose (doubled) rank sum satisfies `keep`.
fn count_assignments(ranks: &[i64], k: usize, keep: impl Fn(i64) -> bool) -> u64 {
    let max_sum: i64 = ranks.iter().sum();
    let width = max_sum as usize + 1;
    // ways[c][s]: subsets of size c with doubled rank sum s
    let mut ways = vec![vec![0u64; width]; k + 1];
    ways[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for c in (1..=k).rev() {
            for s in (r..width).rev() {
                ways[c][s] += ways[c - 1][s - r];
            }
        }
    }
    ways[k]
        .iter()
        .enumerate()
        .filter(|(s, _)| keep(*s as i64))
        .map(|(_, w)| *w)
        .sum()
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

fn normal_p(u: f64, na: usize, nb: usize, ties: &[usize]) -> f64 {
    let n = (na + nb) as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = na as f64 * nb as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let mu = na as f64 * nb as f64 / 2.0;
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// Fixed-width table: label, n, mean, sample σ, CV%.
pub fn summarize_trials(series: &[TrialSeries]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>4} {:>14} {:>14} {:>9}",
        "label", "n", "mean", "stddev", "cv%"
    );
    for s in series {
        match coefficient_of_variation(s) {
            Ok(cv) => {
                let _ = writeln!(
                    out,
                    "{:<20} {:>4} {:>14.3} {:>14.3} {:>9.3}",
                    s.label,
                    s.values.len(),
                    mean(&s.values),
                    sample_std_dev(&s.values),
                    cv
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{:<20} {:>4} error: {}", s.label, s.values.len(), e);
            }
        }
    }
    out
}

/// Parses `label value` lines (blank lines and `#` comments ignored) into
/// series, in order of first appearance.
pub fn parse_trials(text: &str) -> Result<Vec<TrialSeries>, String> {
    let mut out: Vec<TrialSeries> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(label), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("line {}: expected `<label> <value>`", i + 1));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| format!("line {}: `{value}` is not a number", i + 1))?;
        match out.iter_mut().find(|s| s.label == label) {
            Some(s) => s.values.push(value),
            None => out.push(TrialSeries::new(label, vec![value])),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> TrialSeries {
        TrialSeries::new("t", v.to_vec())
    }

    #[test]
    fn cv_of_constant_series_is_zero() {
        assert_eq!(coefficient_of_variation(&s(&[100.0, 100.0, 100.0])).unwrap(), 0.0);
    }

    #[test]
    fn cv_matches_hand_computation() {
        // sample σ = sqrt(((−10)² + 10²) / 1) = sqrt(200); μ = 100
        let expected = 200f64.sqrt();
        let cv = coefficient_of_variation(&s(&[90.0, 110.0])).unwrap();
        assert!((cv - expected).abs() < 1e-12);
    }

    #[test]
    fn cv_preconditions() {
        assert!(matches!(
            coefficient_of_variation(&s(&[5.0])),
            Err(StatsError::TooFewValues { .. })
        ));
        assert!(matches!(
            coefficient_of_variation(&s(&[-1.0, 1.0])),
            Err(StatsError::ZeroMean { .. })
        ));
        assert!(matches!(
            coefficient_of_variation(&s(&[1.0, f64::NAN])),
            Err(StatsError::NonFinite { .. })
        ));
    }

    #[test]
    fn cv_changes_under_translation() {
        let base = coefficient_of_variation(&s(&[1.0, 2.0, 3.0])).unwrap();
        let shifted = coefficient_of_variation(&s(&[11.0, 12.0, 13.0])).unwrap();
        assert!((base - shifted).abs() > 1.0);
    }

    #[test]
    fn mwu_separated_samples() {
        let r = mann_whitney_u(&s(&[1.0, 2.0, 3.0]), &s(&[4.0, 5.0, 6.0])).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.u_other, 9.0);
        // 2 of C(6,3)=20 assignments are as extreme
        assert_eq!(r.p_value, 0.1);
        assert_eq!(r.method, PValueMethod::Exact);
    }

    #[test]
    fn mwu_single_values() {
        let r = mann_whitney_u(&s(&[1.0]), &s(&[2.0])).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn mwu_identical_multisets() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = mann_whitney_u(&s(&v), &s(&v)).unwrap();
        assert!(r.p_value >= 0.99);
        let big: Vec<f64> = (0..20).map(|i| (i % 7) as f64).collect();
        let r = mann_whitney_u(&s(&big), &s(&big)).unwrap();
        assert_eq!(r.method, PValueMethod::NormalApprox);
        assert!(r.p_value >= 0.99);
    }

    #[test]
    fn mwu_all_tied_large_sample() {
        let v = vec![7.0; 10];
        let r = mann_whitney_u(&s(&v), &s(&v)).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn mwu_rejects_empty() {
        assert!(mann_whitney_u(&s(&[]), &s(&[1.0])).is_err());
    }

    #[test]
    fn summary_rows_and_errors() {
        let table = summarize_trials(&[s(&[90.0, 110.0]), TrialSeries::new("one", vec![5.0])]);
        let lines: Vec<_> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("14.142"));
        assert!(lines[2].contains("error"));
        assert_eq!(summarize_trials(&[]).lines().count(), 1);
    }

    #[test]
    fn trial_file_parsing() {
        let text = "# comment\nA 1\nB 2\n\nA 3\n";
        let series = parse_trials(text).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].values, vec![1.0, 3.0]);
        assert!(parse_trials("A x").unwrap_err().contains("line 1"));
        assert!(parse_trials("A").is_err());
    }

    proptest! {
        #[test]
        fn cv_is_scale_invariant(
            values in prop::collection::vec(1.0f64..1000.0, 2..12),
            k in 0.001f64..1000.0,
        ) {
            let base = coefficient_of_variation(&s(&values)).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
            let other = coefficient_of_variation(&s(&scaled)).unwrap();
            prop_assert!((base - other).abs() <= 1e-9 * base.max(1.0));
        }

        #[test]
        fn mwu_u_values_sum_and_p_symmetric(
            a in prop::collection::vec(0u8..20, 1..9),
            b in prop::collection::vec(0u8..20, 1..9),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney_u(&s(&a), &s(&b)).unwrap();
            let ba = mann_whitney_u(&s(&b), &s(&a)).unwrap();
            prop_assert_eq!(ab.u + ab.u_other, (a.len() * b.len()) as f64);
            prop_assert_eq!(ab.u, ba.u_other);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
        }

        #[test]
        fn exact_and_normal_agree_on_tie_free_samples(
            seed in prop::collection::vec(0.0f64..1.0, 12),
            na in 3usize..7,
            nb in 3usize..7,
            shift in 0.0f64..1.5,
        ) {
            prop_assume!(na + nb <= 12);
            let a = &seed[..na];
            let b: Vec<f64> = seed[na..na + nb].iter().map(|v| v + shift).collect();
            let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            pooled.sort_by(f64::total_cmp);
            pooled.dedup();
            prop_assume!(pooled.len() == na + nb);
            let exact = mann_whitney_u(&s(a), &s(&b)).unwrap();
            let (_, ties) = doubled_midranks(&pooled);
            let approx = normal_p(exact.u, na, nb, &ties);
            prop_assert!((exact.p_value - approx).abs() <= 0.05,
                "exact {} approx {}", exact.p_value, approx);
        }
    }
}
