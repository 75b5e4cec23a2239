//! Fractional Gaussian noise synthesis and horizon aggregation.
//!
//! fGn is generated exactly by circulant embedding (Davies–Harte). If the
//! embedding has a negative eigenvalue the Durbin–Levinson (Hosking)
//! recursion is used instead.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::series::TimeSeries;

/// A Hurst exponent, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstExponent(f64);

impl HurstExponent {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("Hurst exponent {value} not in (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for HurstExponent {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<HurstExponent> for f64 {
    fn from(h: HurstExponent) -> f64 {
        h.0
    }
}

/// Autocovariance of unit-variance fGn at lag `k`.
pub fn fgn_autocov(h: HurstExponent, k: usize) -> f64 {
    let two_h = 2.0 * h.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Which sampler produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    CirculantEmbedding,
    Hosking,
}

/// Exact unit-variance fGn sample of length `n`, deterministic in `seed`.
pub fn synth_fgn(h: HurstExponent, n: usize, seed: u64) -> Result<TimeSeries> {
    let (values, _) = synth_fgn_with_sampler(h, n, seed)?;
    TimeSeries::new(format!("fgn_h{:.3}_s{seed}", h.value()), values)
}

pub fn synth_fgn_with_sampler(h: HurstExponent, n: usize, seed: u64) -> Result<(Vec<f64>, Sampler)> {
    if n < 2 {
        return Err(invalid("fGn length must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match circulant_eigenvalues(h, n) {
        Some(lambda) => Ok((circulant_sample(&lambda, n, &mut rng), Sampler::CirculantEmbedding)),
        None => Ok((hosking_sample(h, n, &mut rng), Sampler::Hosking)),
    }
}

/// Eigenvalues of the size-2n circulant embedding, or `None` if any is negative.
fn circulant_eigenvalues(h: HurstExponent, n: usize) -> Option<Vec<f64>> {
    let m = 2 * n;
    let mut row: Vec<Complex64> = Vec::with_capacity(m);
    for k in 0..=n {
        row.push(Complex64::new(fgn_autocov(h, k), 0.0));
    }
    for k in (1..n).rev() {
        row.push(Complex64::new(fgn_autocov(h, k), 0.0));
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    let tol = 1e-10 * row[0].re.abs().max(1.0);
    if row.iter().any(|c| c.re < -tol) {
        return None;
    }
    Some(row.iter().map(|c| c.re.max(0.0)).collect())
}

fn circulant_sample(lambda: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = lambda.len();
    // Re(FFT(sqrt(lambda/m) * (a + ib))) has exactly the target covariance.
    let mut w: Vec<Complex64> = lambda
        .iter()
        .map(|&l| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            Complex64::new(a, b) * (l / m as f64).sqrt()
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut w);
    w.into_iter().take(n).map(|c| c.re).collect()
}

/// Durbin–Levinson sequential conditional sampling, O(n^2).
pub(crate) fn hosking_sample(h: HurstExponent, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gamma: Vec<f64> = (0..n).map(|k| fgn_autocov(h, k)).collect();
    let mut out = Vec::with_capacity(n);
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut prev: Vec<f64> = Vec::with_capacity(n);
    let mut v = gamma[0];
    let z: f64 = StandardNormal.sample(rng);
    out.push(z * v.sqrt());
    for t in 1..n {
        // phi_{t,t}
        let mut num = gamma[t];
        for j in 0..t - 1 {
            num -= phi[j] * gamma[t - 1 - j];
        }
        let kappa = num / v;
        prev.clear();
        prev.extend_from_slice(&phi);
        for j in 0..t - 1 {
            phi[j] = prev[j] - kappa * prev[t - 2 - j];
        }
        phi.push(kappa);
        v *= 1.0 - kappa * kappa;
        let mut mean = 0.0;
        for j in 0..t {
            mean += phi[j] * out[t - 1 - j];
        }
        let z: f64 = StandardNormal.sample(rng);
        out.push(mean + z * v.max(0.0).sqrt());
    }
    out
}

/// Rolling horizon-T sums `s_t = x_{t-T+1} + ... + x_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub horizon: usize,
    pub values: Vec<f64>,
}

pub fn aggregate(x: &TimeSeries, horizon: usize) -> Result<AggregateSeries> {
    let v = x.values();
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    if horizon > v.len() {
        return Err(Error::TooShort {
            required: horizon,
            actual: v.len(),
        });
    }
    let mut acc: f64 = v[..horizon].iter().sum();
    let mut values = Vec::with_capacity(v.len() - horizon + 1);
    values.push(acc);
    for t in horizon..v.len() {
        acc += v[t] - v[t - horizon];
        values.push(acc);
    }
    if horizon == 1 {
        values.copy_from_slice(v);
    }
    Ok(AggregateSeries { horizon, values })
}

/// Sums over consecutive disjoint blocks of length `horizon` (trailing remainder dropped).
pub fn block_sums(x: &[f64], horizon: usize) -> Vec<f64> {
    x.chunks_exact(horizon).map(|c| c.iter().sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util;

    fn h(v: f64) -> HurstExponent {
        HurstExponent::new(v).unwrap()
    }

    #[test]
    fn autocov_values() {
        assert_eq!(fgn_autocov(h(0.5), 0), 1.0);
        for k in 1..10 {
            assert!(fgn_autocov(h(0.5), k).abs() < 1e-15);
        }
        assert!((fgn_autocov(h(0.7), 1) - 0.5 * (2f64.powf(1.4) - 2.0)).abs() < 1e-15);
        assert!((fgn_autocov(h(0.7), 1) - 0.3195).abs() < 1e-3);
        assert!((fgn_autocov(h(0.3), 1) + 0.2421).abs() < 1e-3);
        for hv in [0.1, 0.37, 0.9] {
            assert_eq!(fgn_autocov(h(hv), 0), 1.0);
        }
    }

    #[test]
    fn hurst_bounds() {
        assert!(HurstExponent::new(0.0).is_err());
        assert!(HurstExponent::new(1.0).is_err());
        assert!(HurstExponent::new(0.5).is_ok());
    }

    #[test]
    fn white_noise_case() {
        let n = 1 << 14;
        let x = synth_fgn(h(0.5), n, 3).unwrap();
        let v = x.values();
        let m = util::mean(v);
        let var = util::pop_var(v);
        let lag1: f64 = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (n as f64 * var);
        assert!(lag1.abs() <= 3.0 / (n as f64).sqrt(), "lag1 {lag1}");
    }

    #[test]
    fn determinism() {
        let a = synth_fgn(h(0.7), 1000, 42).unwrap();
        let b = synth_fgn(h(0.7), 1000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hosking_matches_autocovariance() {
        // Average lag-1 product over many short Hosking paths.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reps = 4000;
        let mut acc = [0.0; 3];
        for _ in 0..reps {
            let x = hosking_sample(h(0.8), 8, &mut rng);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += x[4] * x[4 + k];
            }
        }
        for (k, a) in acc.iter().enumerate() {
            let est = a / reps as f64;
            let expect = fgn_autocov(h(0.8), k);
            assert!((est - expect).abs() < 0.07, "lag {k}: {est} vs {expect}");
        }
    }

    #[test]
    fn aggregate_examples() {
        let x = TimeSeries::new("x", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(aggregate(&x, 1).unwrap().values, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(aggregate(&x, 2).unwrap().values, vec![3.0, 5.0, 7.0]);
        assert!(aggregate(&x, 5).is_err());
        assert_eq!(block_sums(x.values(), 2), vec![3.0, 7.0]);
    }
}
