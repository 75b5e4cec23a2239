//! One-level Daubechies-4 (four-tap) DWT with periodic boundary, and its inverse.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Orthonormal Db4 scaling (low-pass) filter.
pub fn db4_lowpass() -> [f64; 4] {
    let norm = 4.0 * std::f64::consts::SQRT_2;
    [
        (1.0 + SQRT3) / norm,
        (3.0 + SQRT3) / norm,
        (3.0 - SQRT3) / norm,
        (1.0 - SQRT3) / norm,
    ]
}

/// Quadrature-mirror high-pass filter `g_j = (-1)^j h_{3-j}`.
pub fn db4_highpass() -> [f64; 4] {
    let h = db4_lowpass();
    [h[3], -h[2], h[1], -h[0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DWTPair {
    pub approx: Vec<f64>,
    pub detail: Vec<f64>,
    /// An odd-length input was extended by one periodic sample.
    pub padded: bool,
}

/// Analysis step: `a_t = sum_j h_j x_{(2t+j) mod N}`, `d_t` likewise with `g`.
pub fn dwt_db4(x: &[f64]) -> Result<DWTPair> {
    if x.len() < 4 {
        return Err(Error::TooShort {
            required: 4,
            actual: x.len(),
        });
    }
    let padded = x.len() % 2 == 1;
    let ext;
    let x = if padded {
        ext = [x, &x[..1]].concat();
        &ext[..]
    } else {
        x
    };
    let n = x.len();
    let h = db4_lowpass();
    let g = db4_highpass();
    let half = n / 2;
    let mut approx = Vec::with_capacity(half);
    let mut detail = Vec::with_capacity(half);
    for t in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..4 {
            let v = x[(2 * t + j) % n];
            a += h[j] * v;
            d += g[j] * v;
        }
        approx.push(a);
        detail.push(d);
    }
    Ok(DWTPair {
        approx,
        detail,
        padded,
    })
}

/// Synthesis step (transpose of the analysis operator). Returns the padded
/// length when the pair records padding.
pub fn idwt_db4(pair: &DWTPair) -> Result<Vec<f64>> {
    if pair.approx.len() != pair.detail.len() {
        return Err(invalid(format!(
            "approx/detail length mismatch: {} vs {}",
            pair.approx.len(),
            pair.detail.len()
        )));
    }
    let half = pair.approx.len();
    let n = 2 * half;
    let h = db4_lowpass();
    let g = db4_highpass();
    let mut x = vec![0.0; n];
    for t in 0..half {
        for j in 0..4 {
            x[(2 * t + j) % n] += h[j] * pair.approx[t] + g[j] * pair.detail[t];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn filter_identities() {
        let h = db4_lowpass();
        let g = db4_highpass();
        assert!((h.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((h.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        let m1: f64 = g.iter().enumerate().map(|(j, v)| j as f64 * v).sum();
        assert!(m1.abs() < 1e-15);
    }

    #[test]
    fn constant_input() {
        let p = dwt_db4(&[2.5; 16]).unwrap();
        assert!(p.detail.iter().all(|d| d.abs() <= 1e-12));
        assert!(p.approx.iter().all(|a| (a - 2.5 * std::f64::consts::SQRT_2).abs() <= 1e-12));
    }

    #[test]
    fn ramp_interior_detail_vanishes() {
        let x: Vec<f64> = (0..32).map(|i| 0.3 * i as f64 - 1.0).collect();
        let p = dwt_db4(&x).unwrap();
        // The last coefficient wraps around the period.
        for d in &p.detail[..p.detail.len() - 1] {
            assert!(d.abs() <= 1e-10, "{d}");
        }
    }

    #[test]
    fn perfect_reconstruction_and_energy() {
        let x = random(256, 1);
        let p = dwt_db4(&x).unwrap();
        let y = idwt_db4(&p).unwrap();
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ep: f64 = p.approx.iter().chain(&p.detail).map(|v| v * v).sum();
        assert!((ex - ep).abs() <= 1e-10);
    }

    #[test]
    fn impulse_and_synthesis_filter() {
        let mut x = vec![0.0; 16];
        x[5] = 1.0;
        let y = idwt_db4(&dwt_db4(&x).unwrap()).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 1e-10));

        let mut approx = vec![0.0; 8];
        approx[0] = 1.0;
        let y = idwt_db4(&DWTPair { approx, detail: vec![0.0; 8], padded: false }).unwrap();
        let h = db4_lowpass();
        assert_eq!(&y[..4], &h[..]);
        assert!(y[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_pair_and_errors() {
        let y = idwt_db4(&DWTPair { approx: vec![0.0; 4], detail: vec![0.0; 4], padded: false }).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert!(idwt_db4(&DWTPair { approx: vec![0.0; 4], detail: vec![0.0; 3], padded: false }).is_err());
        assert!(dwt_db4(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn odd_length_pads() {
        let p = dwt_db4(&random(9, 3)).unwrap();
        assert!(p.padded);
        assert_eq!(p.approx.len(), 5);
    }

    #[test]
    fn operator_is_orthonormal() {
        for n in [4usize, 8, 16, 32] {
            // columns of M are dwt(e_i)
            let cols: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    let p = dwt_db4(&e).unwrap();
                    [p.approx, p.detail].concat()
                })
                .collect();
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn dyadic_shift_covariance() {
        let x = random(64, 4);
        let n = x.len();
        let shifted: Vec<f64> = (0..n).map(|i| x[(i + 2) % n]).collect();
        let a = dwt_db4(&x).unwrap();
        let b = dwt_db4(&shifted).unwrap();
        for t in 0..n / 2 {
            assert_eq!(b.approx[t], a.approx[(t + 1) % (n / 2)]);
            assert_eq!(b.detail[t], a.detail[(t + 1) % (n / 2)]);
        }
    }
}
