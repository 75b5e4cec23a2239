//! Calibration metrics and the significance protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::util;

pub const KS_MIN_TARGETS: usize = 20;

/// Sup distance between the empirical CDF of PIT values `cdf(r_i)` and the uniform.
pub fn ks_distance(cdf: impl Fn(f64) -> f64, targets: &[f64]) -> Result<f64> {
    ks_uniform(targets.iter().map(|&r| cdf(r)).collect())
}

/// Sup distance between the empirical CDF of `pit` and the uniform on [0, 1].
pub fn ks_uniform(mut pit: Vec<f64>) -> Result<f64> {
    if pit.len() < KS_MIN_TARGETS {
        return Err(Error::TooShort {
            required: KS_MIN_TARGETS,
            actual: pit.len(),
        });
    }
    pit.sort_by(f64::total_cmp);
    let n = pit.len() as f64;
    Ok(pit.iter().enumerate().fold(0.0, |d, (i, &v)| {
        d.max((i + 1) as f64 / n - v).max(v - i as f64 / n)
    }))
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("two-sample KS needs non-empty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

fn mean_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in x {
        for b in y {
            s += (a - b).abs();
        }
    }
    s / (x.len() * y.len()) as f64
}

/// Energy distance `2 E|X-Y| - E|X-X'| - E|Y-Y'|` between the parts of both
/// samples with `|r| > 2 sigma` (V-statistics). `None` when either tail is empty.
pub fn tail_energy_distance(model_samples: &[f64], targets: &[f64], sigma: f64) -> Option<f64> {
    let cut = 2.0 * sigma;
    let x: Vec<f64> = model_samples.iter().copied().filter(|v| v.abs() > cut).collect();
    let y: Vec<f64> = targets.iter().copied().filter(|v| v.abs() > cut).collect();
    if x.is_empty() || y.is_empty() {
        return None;
    }
    Some(2.0 * mean_abs_diff(&x, &y) - mean_abs_diff(&x, &x) - mean_abs_diff(&y, &y))
}

/// Circular block bootstrap percentile interval for the mean of `losses`.
pub fn block_bootstrap_ci(losses: &[f64], block_len: usize, resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    let n = losses.len();
    if block_len == 0 || resamples == 0 {
        return Err(invalid("block length and resample count must be positive"));
    }
    if n < 2 * block_len {
        return Err(Error::TooShort {
            required: 2 * block_len,
            actual: n,
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = n.div_ceil(block_len);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut s = 0.0;
            let mut taken = 0;
            for _ in 0..blocks {
                let start = rng.gen_range(0..n);
                for k in 0..block_len.min(n - taken) {
                    s += losses[(start + k) % n];
                }
                taken += block_len.min(n - taken);
            }
            s / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let lo_i = ((alpha / 2.0) * resamples as f64).floor() as usize;
    let hi_i = (((1.0 - alpha / 2.0) * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    Ok((means[lo_i.min(resamples - 1)], means[hi_i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: String,
}

pub const WILCOXON_MIN_N: usize = 5;
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Average ranks (1-based) of `v`, ties sharing the mean rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided signed-rank test. Zeros are dropped; `W+` (sum of positive
/// ranks) is the statistic. The null distribution is exact up to 25 pairs,
/// by counting subsets of doubled (integer) ranks, and normal beyond.
pub fn wilcoxon_signed_rank(deltas: &[f64]) -> Result<TestResult> {
    let d: Vec<f64> = deltas.iter().copied().filter(|&v| v != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite paired difference"));
    }
    let n = d.len();
    if n < WILCOXON_MIN_N {
        return Err(invalid(format!(
            "Wilcoxon test needs at least {WILCOXON_MIN_N} non-zero differences, got {n}"
        )));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, &v)| v > 0.0).map(|(r, _)| r).sum();

    if n <= WILCOXON_EXACT_MAX_N {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        // counts[s]: subsets with doubled rank sum s
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let w2 = (2.0 * w_plus).round() as usize;
        let all = 2f64.powi(n as i32);
        let le: u64 = counts[..=w2].iter().sum();
        let ge: u64 = counts[w2..].iter().sum();
        let p = (2.0 * le.min(ge) as f64 / all).min(1.0);
        return Ok(TestResult {
            statistic: w_plus,
            p_value: p,
            n,
            method: "wilcoxon_signed_rank_exact".into(),
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    // tie correction
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie / 48.0;
    let z = (w_plus - mean) / var.sqrt();
    let p = (2.0 * util::norm_cdf(-z.abs())).min(1.0);
    Ok(TestResult {
        statistic: w_plus,
        p_value: p,
        n,
        method: "wilcoxon_signed_rank_normal".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
}

/// Holm step-down adjustment; outputs are in the input order.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Result<HolmResult> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in idx.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p_values[i]).min(1.0));
        adjusted[i] = running;
    }
    let reject = adjusted.iter().map(|&p| p <= alpha).collect();
    Ok(HolmResult { adjusted, reject })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holm_hand_example() {
        let h = holm_bonferroni(&[0.01, 0.04], 0.05).unwrap();
        assert_eq!(h.adjusted, vec![0.02, 0.04]);
        assert_eq!(h.reject, vec![true, true]);
        assert_eq!(holm_bonferroni(&[0.3], 0.05).unwrap().adjusted, vec![0.3]);
        assert!(holm_bonferroni(&[1.0, 1.0], 0.05).unwrap().reject.iter().all(|r| !r));
        assert!(holm_bonferroni(&[1.2], 0.05).is_err());
    }

    #[test]
    fn wilcoxon_all_positive() {
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let r = wilcoxon_signed_rank(&d).unwrap();
        assert!((r.p_value - 2.0 / 1024.0).abs() < 1e-15);
        let sym = [1.0, -1.0, 2.0, -2.0, 3.0, -3.0];
        assert_eq!(wilcoxon_signed_rank(&sym).unwrap().p_value, 1.0);
        assert!(wilcoxon_signed_rank(&[1.0, 0.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn energy_distance_identity_and_undefined() {
        let x = [3.0, -2.5, 0.1, 4.0, -5.0];
        assert_eq!(tail_energy_distance(&x, &x, 1.0), Some(0.0));
        assert_eq!(tail_energy_distance(&[0.1, 0.2], &x, 1.0), None);
    }

    #[test]
    fn ks_basics() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&x, &x).unwrap(), 0.0);
        let step = ks_distance(|r| if r < 0.0 { 0.0 } else { 1.0 }, &x).unwrap();
        assert!(step >= 0.5);
    }

    #[test]
    fn bootstrap_constant() {
        let (lo, hi) = block_bootstrap_ci(&[0.7; 100], 21, 200, 0.95, 1).unwrap();
        assert_eq!(lo, hi);
        assert!((lo - 0.7).abs() < 1e-12);
    }
}
