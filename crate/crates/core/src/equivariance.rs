//! Dyadic resampling and numerical checks of the scale-equivariance identities.
//!
//! A causal convolution at dilation `2d`, read at even output indices, equals
//! the dilation-`d` convolution of the even-indexed input. Stacking tied
//! residual blocks carries the identity through every level, so a tied stack
//! at dilations `2, ..., 2^L` on `x` matches, at even indices, the stack at
//! dilations `1, ..., 2^(L-1)` on `D2 x`. Untied stacks do not.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::model::{block_stack, causal_dilated_conv, BlockParams};
use crate::nn::{Kernel, Tensor};

/// `(D2 x)_t = x_{2t}`.
pub fn downsample2(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() % 2 != 0 {
        return Err(invalid(format!("downsample2 needs even length, got {}", x.len())));
    }
    Ok(x.iter().step_by(2).copied().collect())
}

/// `(U2 y)_{2t} = y_t`, odd entries zero.
pub fn upsample2(y: &[f64]) -> Vec<f64> {
    y.iter().flat_map(|&v| [v, 0.0]).collect()
}

fn downsample_cols(x: &Tensor) -> Result<Tensor> {
    let mut data = Vec::with_capacity(x.len() / 2);
    for r in 0..x.rows {
        data.extend(downsample2(x.row(r))?);
    }
    Ok(Tensor::new(x.rows, x.cols / 2, data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub trials: usize,
    pub max_abs_residual: f64,
    pub residuals: Vec<f64>,
    pub kernel_size: usize,
    pub channels: usize,
    /// Dilations on the full-rate side.
    pub dilations: Vec<usize>,
    pub input_len: usize,
    /// Interior trim `b`; `None` when the full range is compared.
    pub trim: Option<usize>,
    /// Largest residual over all indices, including the trimmed boundary.
    pub full_range_max_residual: f64,
    /// Longest run of boundary indices with a nonzero residual, over trials.
    pub boundary_nonzero_len: usize,
}

impl EquivarianceReport {
    pub fn median_residual(&self) -> f64 {
        let mut r = self.residuals.clone();
        r.sort_by(f64::total_cmp);
        if r.is_empty() {
            return 0.0;
        }
        let m = r.len() / 2;
        if r.len() % 2 == 1 {
            r[m]
        } else {
            0.5 * (r[m - 1] + r[m])
        }
    }
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Max over channels and the given column range of `|a - b|`.
fn max_diff(a: &Tensor, b: &Tensor, cols: std::ops::Range<usize>) -> f64 {
    let mut m = 0.0f64;
    for r in 0..a.rows {
        for c in cols.clone() {
            m = m.max((a.get(r, c) - b.get(r, c)).abs());
        }
    }
    m
}

fn even_cols(x: &Tensor) -> Tensor {
    downsample_cols(x).expect("even length")
}

/// Single-convolution identity: `f_{w,2d}(x)` at even indices vs `f_{w,d}(D2 x)`.
/// With `untied` the right-hand side uses an independent kernel.
pub fn verify_prop1_with(
    k: usize,
    channels: usize,
    n: usize,
    d: usize,
    trials: usize,
    seed: u64,
    untied: bool,
) -> Result<EquivarianceReport> {
    if n % 2 != 0 {
        return Err(invalid(format!("input length must be even, got {n}")));
    }
    if k < 1 || channels == 0 || d == 0 {
        return Err(invalid("kernel size, channels and dilation must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residuals = Vec::with_capacity(trials);
    for _ in 0..trials {
        let w = Kernel::new(channels, channels, k, gaussian(channels * channels * k, &mut rng));
        let w2 = if untied {
            Kernel::new(channels, channels, k, gaussian(channels * channels * k, &mut rng))
        } else {
            w.clone()
        };
        let x = Tensor::new(channels, n, gaussian(channels * n, &mut rng));
        let lhs = even_cols(&causal_dilated_conv(&x, &w, None, 2 * d)?);
        let rhs = causal_dilated_conv(&downsample_cols(&x)?, &w2, None, d)?;
        residuals.push(max_diff(&lhs, &rhs, 0..n / 2));
    }
    let max = residuals.iter().copied().fold(0.0, f64::max);
    Ok(EquivarianceReport {
        trials,
        max_abs_residual: max,
        residuals,
        kernel_size: k,
        channels,
        dilations: vec![2 * d],
        input_len: n,
        trim: None,
        full_range_max_residual: max,
        boundary_nonzero_len: 0,
    })
}

pub fn verify_prop1(k: usize, channels: usize, n: usize, d: usize, trials: usize, seed: u64) -> Result<EquivarianceReport> {
    verify_prop1_with(k, channels, n, d, trials, seed, false)
}

/// Residual-stack check settings. The full-rate input has length `2 * half_len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackCheck {
    pub depth: usize,
    pub kernel_size: usize,
    pub channels: usize,
    pub half_len: usize,
    pub trim: usize,
    /// Standard deviation of the random block weights.
    pub weight_scale: f64,
}

impl StackCheck {
    /// `(k - 1) 2^L`.
    pub fn required_trim(&self) -> usize {
        (self.kernel_size - 1) << self.depth
    }
}

impl Default for StackCheck {
    fn default() -> Self {
        Self {
            depth: 3,
            kernel_size: 3,
            channels: 8,
            half_len: 512,
            trim: 16,
            weight_scale: 0.5,
        }
    }
}

/// Stack identity on random weights. Tied: one block at every level on both
/// sides. Untied: level `l` owns kernel `K_l`, so the full-rate side uses
/// `K_1..K_L` and the half-rate side `K_0..K_{L-1}`.
pub fn verify_corollary1_with(check: StackCheck, trials: usize, seed: u64, untied: bool) -> Result<EquivarianceReport> {
    let StackCheck {
        depth,
        kernel_size: k,
        channels,
        half_len: n,
        trim: b,
        weight_scale,
    } = check;
    if depth == 0 || k < 2 || channels == 0 {
        return Err(invalid("depth >= 1, kernel size >= 2 and channels >= 1 required"));
    }
    if b < check.required_trim() {
        return Err(invalid(format!(
            "trim {b} below the receptive field; need b >= {}",
            check.required_trim()
        )));
    }
    if n <= 2 * b {
        return Err(invalid(format!("input length {} must exceed 4b = {}", 2 * n, 4 * b)));
    }
    let full_dil: Vec<usize> = (1..=depth).map(|l| 1 << l).collect();
    let half_dil: Vec<usize> = (0..depth).map(|l| 1 << l).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residuals = Vec::with_capacity(trials);
    let mut full_max = 0.0f64;
    let mut boundary_len = 0usize;
    for _ in 0..trials {
        let levels: Vec<BlockParams> = (0..=depth)
            .map(|_| BlockParams::random(channels, k, weight_scale, rand::Rng::gen(&mut rng)))
            .collect();
        let (full_blocks, half_blocks): (Vec<&BlockParams>, Vec<&BlockParams>) = if untied {
            (levels[1..].iter().collect(), levels[..depth].iter().collect())
        } else {
            (vec![&levels[0]; depth], vec![&levels[0]; depth])
        };
        let x = Tensor::new(channels, 2 * n, gaussian(channels * 2 * n, &mut rng));
        let lhs = even_cols(&block_stack(&x, &full_blocks, &full_dil, None)?);
        let rhs = block_stack(&downsample_cols(&x)?, &half_blocks, &half_dil, None)?;
        residuals.push(max_diff(&lhs, &rhs, b..n - b));
        full_max = full_max.max(max_diff(&lhs, &rhs, 0..n));
        let nonzero_left = (0..b).filter(|&c| max_diff(&lhs, &rhs, c..c + 1) > 0.0).count();
        let nonzero_right = (n - b..n).filter(|&c| max_diff(&lhs, &rhs, c..c + 1) > 0.0).count();
        boundary_len = boundary_len.max(nonzero_left).max(nonzero_right);
    }
    Ok(EquivarianceReport {
        trials,
        max_abs_residual: residuals.iter().copied().fold(0.0, f64::max),
        residuals,
        kernel_size: k,
        channels,
        dilations: full_dil,
        input_len: 2 * n,
        trim: Some(b),
        full_range_max_residual: full_max,
        boundary_nonzero_len: boundary_len,
    })
}

pub fn verify_corollary1(check: StackCheck, trials: usize, seed: u64) -> Result<EquivarianceReport> {
    verify_corollary1_with(check, trials, seed, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resampling_operators() {
        assert_eq!(downsample2(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 3.0]);
        assert_eq!(upsample2(&[1.0, 2.0]), vec![1.0, 0.0, 2.0, 0.0]);
        assert!(upsample2(&[]).is_empty());
        assert!(downsample2(&[0.0; 5]).is_err());
        let y = [0.3, -1.2, 5.0];
        assert_eq!(downsample2(&upsample2(&y)).unwrap(), y.to_vec());
    }

    #[test]
    fn prop1_small() {
        let r = verify_prop1(3, 2, 64, 2, 5, 1).unwrap();
        assert_eq!(r.max_abs_residual, 0.0);
        let neg = verify_prop1_with(3, 2, 64, 2, 5, 1, true).unwrap();
        assert!(neg.max_abs_residual > 0.1);
    }

    #[test]
    fn trim_error_names_requirement() {
        let c = StackCheck {
            trim: 4,
            ..Default::default()
        };
        let e = verify_corollary1(c, 1, 0).unwrap_err().to_string();
        assert!(e.contains("b >= 16"), "{e}");
    }

    #[test]
    fn zero_blocks_give_zero_residual() {
        let c = StackCheck {
            weight_scale: 0.0,
            ..Default::default()
        };
        let r = verify_corollary1_with(c, 2, 3, true).unwrap();
        assert_eq!(r.full_range_max_residual, 0.0);
    }
}
