//! Empirical scaling-collapse diagnostic.
//!
//! For each horizon T the modulus of the empirical characteristic function is
//! evaluated on a uniform wavenumber grid. Rescaling the wavenumber by `T^H`
//! should make all curves coincide when the process is self-similar; the
//! band-averaged across-horizon standard deviation `C(H)` measures how far
//! they are from doing so.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::synth::block_sums;
use crate::util;

/// `|E exp(i k s)|` on a uniform grid starting at `k = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CFCurve {
    pub horizon: usize,
    pub k: Vec<f64>,
    pub values: Vec<f64>,
}

impl CFCurve {
    pub fn k_max(&self) -> f64 {
        *self.k.last().unwrap_or(&0.0)
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn interp(&self, k: f64) -> Option<f64> {
        let n = self.k.len();
        if n < 2 || k < 0.0 || k > self.k_max() {
            return None;
        }
        let step = self.k[1] - self.k[0];
        let pos = (k - self.k[0]) / step;
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        Some(self.values[i] + frac * (self.values[i + 1] - self.values[i]))
    }
}

/// Empirical characteristic-function modulus of `samples` on `k_grid`.
pub fn empirical_cf(samples: &[f64], k_grid: &[f64], horizon: usize) -> Result<CFCurve> {
    if samples.is_empty() {
        return Err(invalid("empirical CF of an empty sample"));
    }
    if k_grid.len() < 2 || k_grid[0] != 0.0 {
        return Err(invalid("k grid must start at 0 and hold at least two points"));
    }
    let inv_n = 1.0 / samples.len() as f64;
    let values = k_grid
        .iter()
        .map(|&k| {
            if k == 0.0 {
                return 1.0;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for &s in samples {
                let (sn, cs) = (k * s).sin_cos();
                re += cs;
                im += sn;
            }
            ((re * inv_n).powi(2) + (im * inv_n).powi(2)).sqrt().min(1.0)
        })
        .collect();
    Ok(CFCurve {
        horizon,
        k: k_grid.to_vec(),
        values,
    })
}

/// Rescaled-wavenumber band, in units of the inverse horizon-1 standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaBand {
    pub min: f64,
    pub max: f64,
}

impl Default for EtaBand {
    fn default() -> Self {
        Self { min: 0.5, max: 3.0 }
    }
}

pub const ETA_POINTS: usize = 256;
pub const MIN_BAND_COVERAGE: f64 = 0.6;
pub const K_POINTS: usize = 512;
pub const K_MAX_STD: f64 = 8.0;

/// Band actually usable at exponent `h`, shrunk where some curve's k range
/// does not reach `eta / T^h`.
fn effective_band(curves: &[CFCurve], h: f64, band: EtaBand) -> Result<(f64, f64)> {
    let mut hi = band.max;
    let mut limiting = None;
    for c in curves {
        let reach = c.k_max() * (c.horizon as f64).powf(h);
        if reach < hi {
            hi = reach;
            limiting = Some(c.horizon);
        }
    }
    let lo = band.min;
    let coverage = (hi - lo) / (band.max - band.min);
    if coverage < MIN_BAND_COVERAGE {
        return Err(Error::Domain(format!(
            "eta band collapses to {:.0}% at H={h:.3}; limiting horizon T={}",
            coverage.max(0.0) * 100.0,
            limiting.unwrap_or(0)
        )));
    }
    Ok((lo, hi))
}

fn eta_grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (ETA_POINTS - 1) as f64;
    (0..ETA_POINTS).map(move |i| lo + i as f64 * step)
}

fn rescaled(curve: &CFCurve, eta: f64, h: f64) -> f64 {
    curve
        .interp(eta / (curve.horizon as f64).powf(h))
        .expect("query inside effective band")
}

/// `C(H)`: band average of the across-horizon population std of `|rho(eta / T^H, T)|`.
pub fn collapse_score(curves: &[CFCurve], h: f64, band: EtaBand) -> Result<f64> {
    if curves.len() < 2 {
        return Err(invalid("collapse score needs at least two horizons"));
    }
    if !(band.max > band.min) || band.min < 0.0 {
        return Err(invalid(format!("bad eta band [{}, {}]", band.min, band.max)));
    }
    let (lo, hi) = effective_band(curves, h, band)?;
    let mut vals = vec![0.0; curves.len()];
    let dispersion: Vec<f64> = eta_grid(lo, hi)
        .map(|eta| {
            for (v, c) in vals.iter_mut().zip(curves) {
                *v = rescaled(c, eta, h);
            }
            util::pop_std(&vals)
        })
        .collect();
    let step = (hi - lo) / (ETA_POINTS - 1) as f64;
    let integral: f64 = dispersion.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
    Ok(integral / (hi - lo))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub h_star: f64,
    pub c_star: f64,
    pub curves: Vec<CFCurve>,
    /// `(eta, mean over T of |rho(eta / T^H*, T)|)` on the effective band.
    pub template: Vec<(f64, f64)>,
    pub eta_band: EtaBand,
    /// Standard deviation the samples were divided by before building curves.
    pub scale: f64,
}

const H_SCAN_MIN: f64 = 0.05;
const H_SCAN_MAX: f64 = 0.95;
const H_SCAN_STEP: f64 = 0.01;
const GOLDEN_TOL: f64 = 1e-9;

/// Coarse scan over H in {0.05, ..., 0.95} followed by golden-section refinement.
pub fn optimal_collapse(curves: &[CFCurve], band: EtaBand) -> Result<CollapseResult> {
    let score = |h: f64| collapse_score(curves, h, band);
    let n_scan = ((H_SCAN_MAX - H_SCAN_MIN) / H_SCAN_STEP).round() as usize + 1;
    let mut best: Option<(f64, f64)> = None;
    let mut first_err = None;
    for i in 0..n_scan {
        let h = H_SCAN_MIN + i as f64 * H_SCAN_STEP;
        match score(h) {
            Ok(c) if best.map_or(true, |(_, b)| c < b) => best = Some((h, c)),
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let (h0, c0) = match best {
        Some(b) => b,
        None => return Err(first_err.unwrap_or_else(|| invalid("empty H scan"))),
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((h0 - H_SCAN_STEP).max(H_SCAN_MIN), (h0 + H_SCAN_STEP).min(H_SCAN_MAX));
    let eval = |h: f64| score(h).unwrap_or(f64::INFINITY);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    while b - a > GOLDEN_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2);
        }
    }
    let hm = 0.5 * (a + b);
    let cm = eval(hm);
    let (h_star, c_star) = if cm <= c0 { (hm, cm) } else { (h0, c0) };

    let (lo, hi) = effective_band(curves, h_star, band)?;
    let template = eta_grid(lo, hi)
        .map(|eta| {
            let m = curves.iter().map(|c| rescaled(c, eta, h_star)).sum::<f64>() / curves.len() as f64;
            (eta, m)
        })
        .collect();
    Ok(CollapseResult {
        h_star,
        c_star,
        curves: curves.to_vec(),
        template,
        eta_band: band,
        scale: 1.0,
    })
}

/// Builds CF curves from per-horizon samples. All samples are divided by the
/// population std of the smallest horizon's samples; the k grid is
/// `K_POINTS` uniform points on `[0, K_MAX_STD]` in those units.
pub fn curves_from_samples(samples: &[(usize, Vec<f64>)]) -> Result<(Vec<CFCurve>, f64)> {
    let base = samples
        .iter()
        .min_by_key(|(t, _)| *t)
        .ok_or_else(|| invalid("no horizons supplied"))?;
    let scale = util::pop_std(&base.1);
    if !(scale > 0.0) {
        return Err(Error::Domain("zero-variance horizon samples".into()));
    }
    let k_grid: Vec<f64> = (0..K_POINTS)
        .map(|i| K_MAX_STD * i as f64 / (K_POINTS - 1) as f64)
        .collect();
    let mut curves = Vec::with_capacity(samples.len());
    for (t, s) in samples {
        if s.len() < 100 {
            return Err(invalid(format!("horizon {t}: {} samples, need at least 100", s.len())));
        }
        let scaled: Vec<f64> = s.iter().map(|v| v / scale).collect();
        curves.push(empirical_cf(&scaled, &k_grid, *t)?);
    }
    Ok((curves, scale))
}

/// Collapse diagnostic on a series using disjoint horizon-T block sums.
pub fn series_collapse(x: &[f64], horizons: &[usize], band: EtaBand) -> Result<CollapseResult> {
    let samples: Vec<(usize, Vec<f64>)> = horizons.iter().map(|&t| (t, block_sums(x, t))).collect();
    let (curves, scale) = curves_from_samples(&samples)?;
    let mut res = optimal_collapse(&curves, band)?;
    res.scale = scale;
    Ok(res)
}

/// Source of horizon-T aggregate samples from a generative model.
pub trait HorizonSampler {
    fn sample(&mut self, horizon: usize, n: usize, seed: u64) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCollapse {
    pub result: CollapseResult,
    pub c_star_model: f64,
    pub c_star_empirical: Option<f64>,
}

pub fn model_collapse(
    sampler: &mut dyn HorizonSampler,
    horizons: &[usize],
    n_samples: usize,
    seed: u64,
    band: EtaBand,
    c_star_empirical: Option<f64>,
) -> Result<ModelCollapse> {
    if n_samples < 1000 {
        return Err(invalid("model collapse needs at least 1000 samples per horizon"));
    }
    let mut samples = Vec::with_capacity(horizons.len());
    for (i, &t) in horizons.iter().enumerate() {
        samples.push((t, sampler.sample(t, n_samples, seed.wrapping_add(i as u64))?));
    }
    let (curves, scale) = curves_from_samples(&samples)?;
    let mut result = optimal_collapse(&curves, band)?;
    result.scale = scale;
    Ok(ModelCollapse {
        c_star_model: result.c_star,
        result,
        c_star_empirical,
    })
}
