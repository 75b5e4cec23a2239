#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Two-sided signed-rank p-value of W+ by enumerating all 2^n sign patterns
/// on the average ranks of |d|.
pub fn brute_force_wilcoxon_p(d: &[f64]) -> f64 {
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|a| {
            let below = abs.iter().filter(|b| *b < a).count() as f64;
            let tied = abs.iter().filter(|b| *b == a).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect();
    let w: f64 = ranks.iter().zip(d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let n = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u32..1 << n {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= w + 1e-9 {
            le += 1;
        }
        if s >= w - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

/// Random differences of length 5..=12; even trials use small integer
/// magnitudes so that ties occur.
pub fn random_deltas(rng: &mut ChaCha8Rng, trial: usize) -> Vec<f64> {
    use rand::Rng;
    let n = rng.gen_range(5..=12);
    (0..n)
        .map(|_| {
            let m = if trial % 2 == 0 { rng.gen_range(1..=4) as f64 } else { rng.gen_range(0.1..5.0) };
            if rng.gen_bool(0.55) {
                m
            } else {
                -m
            }
        })
        .collect()
}
