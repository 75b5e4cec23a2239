//! Welch spectra, power-law slope fits and the spectral-consistency loss.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::util;

pub const DEFAULT_SEGMENT: usize = 256;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const MIN_SEGMENT: usize = 16;
pub const MIN_BAND_BINS: usize = 5;
/// Smallest segment whose default band holds `MIN_BAND_BINS` frequencies.
pub const MIN_LOSS_SEGMENT: usize = 32;

/// One-sided PSD at `f = j / segment`, `j = 1..=segment/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

/// Frequency band `[f_min, f_max]` in cycles per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub f_min: f64,
    pub f_max: f64,
}

impl Band {
    /// `[4 / segment, 0.25]`.
    pub fn default_for(segment: usize) -> Self {
        Self {
            f_min: 4.0 / segment as f64,
            f_max: 0.25,
        }
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn segment_starts(n: usize, segment: usize, overlap: f64) -> Result<Vec<usize>> {
    if segment < MIN_SEGMENT {
        return Err(invalid(format!("segment must be >= {MIN_SEGMENT}, got {segment}")));
    }
    if segment > n {
        return Err(Error::TooShort {
            required: segment,
            actual: n,
        });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(invalid(format!("overlap must lie in [0, 1), got {overlap}")));
    }
    let hop = (segment - (overlap * segment as f64).round() as usize).max(1);
    Ok((0..=n - segment).step_by(hop).collect())
}

/// Shared state for periodograms of one segment length.
struct Welch {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    /// One-sided density factor per bin `1..=segment/2`.
    factor: Vec<f64>,
}

impl Welch {
    fn new(segment: usize) -> Self {
        let window = hann(segment);
        let wss: f64 = window.iter().map(|w| w * w).sum();
        let half = segment / 2;
        let factor = (1..=half)
            .map(|j| if 2 * j == segment { 1.0 / wss } else { 2.0 / wss })
            .collect();
        Self {
            window,
            fft: FftPlanner::new().plan_fft_forward(segment),
            factor,
        }
    }

    /// Spectrum of the detrended, windowed segment (all bins).
    fn transform(&self, seg: &[f64]) -> Vec<Complex<f64>> {
        let m = util::mean(seg);
        let mut buf: Vec<Complex<f64>> = seg
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(w * (x - m), 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf
    }
}

fn freqs(segment: usize) -> Vec<f64> {
    (1..=segment / 2).map(|j| j as f64 / segment as f64).collect()
}

/// Hann-window Welch estimate with constant detrending, one-sided, unit
/// sampling rate: white noise of variance `s2` has level `2 s2`.
pub fn welch_psd(x: &[f64], segment: usize, overlap: f64) -> Result<Psd> {
    welch_psd_batch(&[x], segment, overlap)
}

/// Welch estimate averaging the segments of every trajectory.
pub fn welch_psd_batch(batch: &[&[f64]], segment: usize, overlap: f64) -> Result<Psd> {
    if batch.is_empty() {
        return Err(invalid("empty trajectory batch"));
    }
    let w = Welch::new(segment);
    let mut power = vec![0.0; segment / 2];
    let mut count = 0usize;
    for x in batch {
        for s in segment_starts(x.len(), segment, overlap)? {
            let spec = w.transform(&x[s..s + segment]);
            for (j, p) in power.iter_mut().enumerate() {
                *p += spec[j + 1].norm_sqr();
            }
            count += 1;
        }
    }
    for (p, f) in power.iter_mut().zip(&w.factor) {
        *p *= f / count as f64;
    }
    Ok(Psd {
        freqs: freqs(segment),
        power,
    })
}

fn band_indices(psd: &Psd, band: Band) -> Result<Vec<usize>> {
    if !(band.f_max > band.f_min) || band.f_min <= 0.0 {
        return Err(invalid(format!("bad band [{}, {}]", band.f_min, band.f_max)));
    }
    let idx: Vec<usize> = (0..psd.freqs.len())
        .filter(|&j| psd.freqs[j] >= band.f_min - 1e-12 && psd.freqs[j] <= band.f_max + 1e-12)
        .collect();
    if idx.len() < MIN_BAND_BINS {
        return Err(invalid(format!(
            "band [{}, {}] holds {} bins, need {MIN_BAND_BINS}",
            band.f_min,
            band.f_max,
            idx.len()
        )));
    }
    if idx.iter().any(|&j| psd.power[j] <= 0.0) {
        return Err(Error::Domain("zero power inside the fitting band".into()));
    }
    Ok(idx)
}

/// Least squares of `ln S` on `-ln f` over the band: `(beta, intercept)`.
pub fn spectral_slope(psd: &Psd, band: Band) -> Result<(f64, f64)> {
    let idx = band_indices(psd, band)?;
    let x: Vec<f64> = idx.iter().map(|&j| -psd.freqs[j].ln()).collect();
    let y: Vec<f64> = idx.iter().map(|&j| psd.power[j].ln()).collect();
    Ok(util::ols(&x, &y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFit {
    pub psd: Psd,
    pub band: Band,
    pub beta_hat: f64,
    pub intercept: f64,
    /// `2 H - 1`.
    pub beta_target: f64,
    pub slope_term: f64,
    pub shape_term: f64,
}

/// Slope and shape terms of the loss evaluated on a single series.
pub fn spectral_fit(x: &[f64], segment: usize, band: Band, h_hat: f64) -> Result<SpectralFit> {
    let psd = welch_psd(x, segment, DEFAULT_OVERLAP)?;
    fit_from_psd(psd, band, h_hat)
}

fn fit_from_psd(psd: Psd, band: Band, h_hat: f64) -> Result<SpectralFit> {
    let (beta_hat, intercept) = spectral_slope(&psd, band)?;
    let beta_target = 2.0 * h_hat - 1.0;
    let idx = band_indices(&psd, band)?;
    let e = shape_residuals(&psd, &idx, beta_target);
    Ok(SpectralFit {
        beta_hat,
        intercept,
        beta_target,
        slope_term: (beta_hat - beta_target).powi(2),
        shape_term: e.iter().map(|v| v * v).sum(),
        psd,
        band,
    })
}

/// `ln S - ln S*` with `S* = A f^(-beta*)` and `A` matched so the residuals
/// average to zero; the shape term therefore ignores overall level.
fn shape_residuals(psd: &Psd, idx: &[usize], beta_target: f64) -> Vec<f64> {
    let r: Vec<f64> = idx
        .iter()
        .map(|&j| psd.power[j].ln() + beta_target * psd.freqs[j].ln())
        .collect();
    let m = util::mean(&r);
    r.iter().map(|v| v - m).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLoss {
    pub value: f64,
    pub fit: SpectralFit,
    /// `d value / d sample`, same layout as the input batch.
    pub grad: Vec<Vec<f64>>,
}

/// `(beta_hat - beta*)^2 + lambda_shape * sum (ln S - ln S*)^2` over the band,
/// with the PSD pooled across the trajectories of `batch`, and its gradient
/// with respect to every sample.
pub fn spectral_loss(batch: &[&[f64]], h_hat: f64, lambda_shape: f64, segment: usize) -> Result<SpectralLoss> {
    let band = Band::default_for(segment);
    let psd = welch_psd_batch(batch, segment, DEFAULT_OVERLAP)?;
    let fit = fit_from_psd(psd, band, h_hat)?;
    let idx = band_indices(&fit.psd, band)?;
    let value = fit.slope_term + lambda_shape * fit.shape_term;

    // d value / d ln S_j
    let x: Vec<f64> = idx.iter().map(|&j| -fit.psd.freqs[j].ln()).collect();
    let xm = util::mean(&x);
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let e = shape_residuals(&fit.psd, &idx, fit.beta_target);
    let dslope = 2.0 * (fit.beta_hat - fit.beta_target);

    let w = Welch::new(segment);
    let mut count = 0usize;
    let mut starts = Vec::with_capacity(batch.len());
    for x in batch {
        let s = segment_starts(x.len(), segment, DEFAULT_OVERLAP)?;
        count += s.len();
        starts.push(s);
    }
    // d value / d |X_j|^2 for one segment (bins are 1-based in the FFT)
    let mut a = vec![0.0; segment];
    for (b, &j) in idx.iter().enumerate() {
        let dl = dslope * (x[b] - xm) / sxx + lambda_shape * 2.0 * e[b];
        a[j + 1] = dl / fit.psd.power[j] * w.factor[j] / count as f64;
    }
    let ifft = FftPlanner::new().plan_fft_inverse(segment);
    let mut grad: Vec<Vec<f64>> = batch.iter().map(|x| vec![0.0; x.len()]).collect();
    for ((x, g), st) in batch.iter().zip(grad.iter_mut()).zip(&starts) {
        for &s in st {
            let spec = w.transform(&x[s..s + segment]);
            let mut buf: Vec<Complex<f64>> = spec.iter().zip(&a).map(|(c, &ai)| c * ai).collect();
            ifft.process(&mut buf);
            // d|X_j|^2 / dy_i = 2 Re(X_j e^{+i theta_ij}); then through y = w (x - mean)
            let gy: Vec<f64> = buf.iter().zip(&w.window).map(|(c, wi)| 2.0 * c.re * wi).collect();
            let gm = util::mean(&gy);
            for (i, v) in gy.iter().enumerate() {
                g[s + i] += v - gm;
            }
        }
    }
    Ok(SpectralLoss { value, fit, grad })
}

/// `(Var(targets) - 1)^2` with the population variance.
pub fn variance_surrogate(targets: &[f64]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    (util::pop_var(targets) - 1.0).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn exact_power_law_slope() {
        let f = freqs(256);
        let psd = Psd {
            power: f.iter().map(|v| v.powf(-0.5)).collect(),
            freqs: f,
        };
        let (b, _) = spectral_slope(&psd, Band::default_for(256)).unwrap();
        assert!((b - 0.5).abs() <= 1e-10);
    }

    #[test]
    fn sinusoid_peak() {
        let x: Vec<f64> = (0..4096).map(|i| (2.0 * std::f64::consts::PI * 0.125 * i as f64).sin()).collect();
        let psd = welch_psd(&x, 256, 0.5).unwrap();
        let peak = (0..psd.power.len()).max_by(|&a, &b| psd.power[a].total_cmp(&psd.power[b])).unwrap();
        assert_eq!(psd.freqs[peak], 0.125);
    }

    #[test]
    fn shape_term_ignores_amplitude() {
        let x = noise(4096, 2);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let a = spectral_fit(&x, 256, Band::default_for(256), 0.6).unwrap();
        let b = spectral_fit(&y, 256, Band::default_for(256), 0.6).unwrap();
        assert!((a.shape_term - b.shape_term).abs() <= 1e-10);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let runs: Vec<Vec<f64>> = (0..3).map(|s| noise(96, s)).collect();
        let refs: Vec<&[f64]> = runs.iter().map(Vec::as_slice).collect();
        let l = spectral_loss(&refs, 0.7, 0.1, 32).unwrap();
        let h = 1e-6;
        for (r, i) in [(0, 0), (0, 17), (1, 50), (2, 95), (2, 31)] {
            let eval = |d: f64| {
                let mut m = runs.clone();
                m[r][i] += d;
                let refs: Vec<&[f64]> = m.iter().map(Vec::as_slice).collect();
                spectral_loss(&refs, 0.7, 0.1, 32).unwrap().value
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = l.grad[r][i];
            assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "({r},{i}) fd {fd} an {an}");
        }
    }

    #[test]
    fn errors() {
        assert!(welch_psd(&[0.0; 100], 256, 0.5).is_err());
        assert!(welch_psd(&[0.0; 100], 8, 0.5).is_err());
        assert_eq!(variance_surrogate(&[1.0, -1.0]), 0.0);
    }
}
