//! Hurst-type statistics (rescaled range, Allan-variance slope) and the
//! F-score used to rank a universe of return series.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::series::{Panel, TimeSeries};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HurstMethod {
    Rs,
    Avar,
    Collapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub method: HurstMethod,
    pub value: f64,
    /// Fitted points `(log size, log statistic)`.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Window schedule for [`rs_hurst_with`]: dyadic sizes from `min_size`
/// up to `len / max_divisor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RsSchedule {
    pub min_size: usize,
    pub max_divisor: usize,
}

impl Default for RsSchedule {
    fn default() -> Self {
        Self {
            min_size: 16,
            max_divisor: 4,
        }
    }
}

const RS_CLIP: f64 = 1e-6;

/// R/S Hurst estimate on the default dyadic schedule {16, 32, ..., <= len/4}.
pub fn rs_hurst(x: &TimeSeries) -> Result<HurstEstimate> {
    rs_hurst_with(x.values(), RsSchedule::default())
}

pub fn rs_hurst_with(x: &[f64], schedule: RsSchedule) -> Result<HurstEstimate> {
    if x.len() < 64 {
        return Err(Error::TooShort {
            required: 64,
            actual: x.len(),
        });
    }
    let mut points = Vec::new();
    let mut n = schedule.min_size.max(2);
    while n <= x.len() / schedule.max_divisor {
        let mut acc = 0.0;
        let mut used = 0usize;
        for block in x.chunks_exact(n) {
            let m = util::mean(block);
            let s = util::pop_std(block);
            if !(s > 0.0) {
                continue;
            }
            let mut cum = 0.0;
            let (mut lo, mut hi) = (0.0f64, 0.0f64);
            for v in block {
                cum += v - m;
                lo = lo.min(cum);
                hi = hi.max(cum);
            }
            acc += (hi - lo) / s;
            used += 1;
        }
        if used > 0 {
            points.push(((n as f64).ln(), (acc / used as f64).ln()));
        }
        n *= 2;
    }
    if points.len() < 3 {
        return Err(Error::Domain(format!(
            "R/S needs at least 3 usable window sizes, found {}",
            points.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let (slope, _) = util::ols(&xs, &ys);
    Ok(HurstEstimate {
        method: HurstMethod::Rs,
        value: slope.clamp(RS_CLIP, 1.0 - RS_CLIP),
        points,
        slope,
    })
}

/// Allan variance over consecutive non-overlapping `tau`-block means.
pub fn allan_variance(x: &[f64], tau: usize) -> Result<f64> {
    if tau == 0 {
        return Err(invalid("tau must be positive"));
    }
    if x.len() < 2 * tau {
        return Err(Error::TooShort {
            required: 2 * tau,
            actual: x.len(),
        });
    }
    let means: Vec<f64> = x.chunks_exact(tau).map(util::mean).collect();
    let sq: f64 = means.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(0.5 * sq / (means.len() - 1) as f64)
}

pub const DEFAULT_AVAR_TAUS: [usize; 3] = [21, 63, 252];

/// `H_av = (1 + s) / 2` with `s` the log-log slope of AVAR against tau.
///
/// For fGn with exponent H the slope is `2H - 2`, so `H_av = H - 1/2`;
/// see [`HurstEstimate::implied_fgn_hurst`]. The value is not clamped.
pub fn avar_hurst(x: &[f64], taus: &[usize]) -> Result<HurstEstimate> {
    if taus.len() < 2 {
        return Err(invalid("AVAR slope needs at least two block lengths"));
    }
    let max_tau = *taus.iter().max().expect("non-empty");
    if x.len() < 2 * max_tau {
        return Err(Error::TooShort {
            required: 2 * max_tau,
            actual: x.len(),
        });
    }
    let mut points = Vec::with_capacity(taus.len());
    for &tau in taus {
        let av = allan_variance(x, tau)?;
        if !(av > 0.0) {
            return Err(Error::Domain(format!("zero Allan variance at tau={tau}")));
        }
        points.push(((tau as f64).ln(), av.ln()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let (slope, _) = util::ols(&xs, &ys);
    Ok(HurstEstimate {
        method: HurstMethod::Avar,
        value: 0.5 * (1.0 + slope),
        points,
        slope,
    })
}

impl HurstEstimate {
    /// For an AVAR estimate, the fGn exponent whose block-mean variance has
    /// the fitted slope (`1 + s/2`). Other methods return `value`.
    pub fn implied_fgn_hurst(&self) -> f64 {
        match self.method {
            HurstMethod::Avar => 1.0 + 0.5 * self.slope,
            _ => self.value,
        }
    }
}

/// Population excess kurtosis `m4 / m2^2 - 3`.
pub fn excess_kurtosis(x: &[f64]) -> Result<f64> {
    if x.len() < 4 {
        return Err(Error::TooShort {
            required: 4,
            actual: x.len(),
        });
    }
    let m = util::mean(x);
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= x.len() as f64;
    m4 /= x.len() as f64;
    if !(m2 > 0.0) {
        return Err(Error::Domain("zero variance".into()));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

pub const FSCORE_TAU: usize = 63;
pub const KURTOSIS_CUTOFF: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FScoreRow {
    pub ticker: String,
    pub rho: f64,
    pub h_av: f64,
    pub excess_kurtosis: f64,
    pub f: f64,
    /// Excess kurtosis above the cutoff; excluded from ranking.
    pub prefiltered: bool,
}

impl FScoreRow {
    pub fn score(rho: f64, h_av: f64, kurt: f64) -> f64 {
        -rho.log10() - h_av.max(0.0) - 0.05 * kurt
    }
}

pub fn fscore(x: &TimeSeries) -> Result<FScoreRow> {
    let v = x.values();
    if v.len() < 504 {
        return Err(Error::TooShort {
            required: 504,
            actual: v.len(),
        });
    }
    let var = util::pop_var(v);
    if !(var > 0.0) {
        return Err(Error::Domain(format!("series '{}': zero variance", x.id)));
    }
    let rho = FSCORE_TAU as f64 * allan_variance(v, FSCORE_TAU)? / var;
    let h_av = avar_hurst(v, &DEFAULT_AVAR_TAUS)?.value;
    let kurt = excess_kurtosis(v)?;
    Ok(FScoreRow {
        ticker: x.id.clone(),
        rho,
        h_av,
        excess_kurtosis: kurt,
        f: FScoreRow::score(rho, h_av, kurt),
        prefiltered: kurt > KURTOSIS_CUTOFF,
    })
}

/// Scores every ticker and returns the top `top_k` eligible rows by descending F.
pub fn rank_universe(panel: &Panel, top_k: usize) -> Result<Vec<FScoreRow>> {
    let mut eligible = Vec::new();
    let mut excluded = Vec::new();
    for s in panel.iter() {
        let row = fscore(s)?;
        if row.prefiltered {
            excluded.push(format!("{} (kurtosis {:.1})", row.ticker, row.excess_kurtosis));
        } else {
            eligible.push(row);
        }
    }
    if eligible.len() < top_k || eligible.is_empty() {
        return Err(invalid(format!(
            "only {} eligible tickers for top {top_k}; excluded: [{}]",
            eligible.len(),
            excluded.join(", ")
        )));
    }
    eligible.sort_by(|a, b| b.f.total_cmp(&a.f).then_with(|| a.ticker.cmp(&b.ticker)));
    eligible.truncate(top_k);
    Ok(eligible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_fgn, HurstExponent};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn fgn(h: f64, n: usize, seed: u64) -> TimeSeries {
        synth_fgn(HurstExponent::new(h).unwrap(), n, seed).unwrap()
    }

    #[test]
    fn rs_iid_band() {
        let x = TimeSeries::new("g", gaussian(1 << 14, 1)).unwrap();
        let h = rs_hurst(&x).unwrap().value;
        assert!((0.45..=0.60).contains(&h), "{h}");
    }

    #[test]
    fn rs_constant_errors() {
        let x = TimeSeries::new("c", vec![1.0; 1000]).unwrap();
        assert!(rs_hurst(&x).is_err());
    }

    #[test]
    fn rs_persistent_fgn() {
        let h = rs_hurst(&fgn(0.8, 1 << 16, 5)).unwrap().value;
        assert!((h - 0.8).abs() <= 0.07, "{h}");
    }

    #[test]
    fn allan_hand_example() {
        assert_eq!(allan_variance(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), 2.0);
        assert!(allan_variance(&[1.0, 2.0, 3.0, 4.0], 4).is_err());
    }

    #[test]
    fn rho_iid_near_one() {
        let x = gaussian(10_000, 2);
        let rho = 63.0 * allan_variance(&x, 63).unwrap() / util::pop_var(&x);
        assert!((0.8..=1.2).contains(&rho), "{rho}");
    }

    #[test]
    fn avar_slopes() {
        let iid = avar_hurst(&gaussian(1 << 16, 3), &DEFAULT_AVAR_TAUS).unwrap();
        assert!((iid.slope + 1.0).abs() < 0.3, "{}", iid.slope);
        assert!(iid.value.abs() <= 0.15, "{}", iid.value);

        let p = avar_hurst(fgn(0.8, 1 << 16, 4).values(), &DEFAULT_AVAR_TAUS).unwrap();
        assert!((p.slope + 0.4).abs() <= 0.2, "{}", p.slope);
        assert!((p.implied_fgn_hurst() - 0.8).abs() <= 0.1);

        let anti = avar_hurst(fgn(0.2, 1 << 16, 4).values(), &DEFAULT_AVAR_TAUS).unwrap();
        assert!(anti.value < 0.35, "{}", anti.value);
    }

    #[test]
    fn avar_too_short_names_minimum() {
        match avar_hurst(&[0.0; 100], &DEFAULT_AVAR_TAUS) {
            Err(Error::TooShort { required, .. }) => assert_eq!(required, 504),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kurtosis_cases() {
        let k = excess_kurtosis(&gaussian(100_000, 7)).unwrap();
        assert!(k.abs() <= 0.1, "{k}");
        let two_point: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(excess_kurtosis(&two_point).unwrap(), -2.0);
        assert!(excess_kurtosis(&[3.0; 10]).is_err());
    }

    #[test]
    fn fscore_null_and_antipersistent() {
        let iid = fscore(&TimeSeries::new("iid", gaussian(10_000, 11)).unwrap()).unwrap();
        assert!(iid.f.abs() < 0.15, "{iid:?}");
        assert_eq!(FScoreRow::score(iid.rho, iid.h_av, iid.excess_kurtosis), iid.f);

        let anti = fscore(&fgn(0.2, 10_000, 12)).unwrap();
        assert!(anti.rho < 1.0 && anti.f > 0.0, "{anti:?}");
    }

    #[test]
    fn heavy_tails_prefiltered() {
        // A few huge spikes on small noise give kurtosis far above 25.
        let mut x = gaussian(2000, 5);
        for i in [100, 700, 1500] {
            x[i] = 60.0;
        }
        let row = fscore(&TimeSeries::new("spiky", x).unwrap()).unwrap();
        assert!(row.excess_kurtosis > 25.0);
        assert!(row.prefiltered);
    }

    #[test]
    fn ranking_orders_by_f() {
        let mut panel = Panel::new();
        for (name, h) in [("a_h05", 0.5), ("b_h08", 0.8), ("c_h02", 0.2)] {
            let mut s = fgn(h, 5000, 21);
            s.id = name.into();
            panel.insert(s, vec![]).unwrap();
        }
        let ranked = rank_universe(&panel, 3).unwrap();
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked[0].ticker, "c_h02");
        assert!(ranked.windows(2).all(|w| w[0].f >= w[1].f));
        assert!(rank_universe(&panel, 4).is_err());
    }

    #[test]
    fn all_filtered_errors() {
        let mut panel = Panel::new();
        let mut x = gaussian(2000, 8);
        x[10] = 80.0;
        panel.insert(TimeSeries::new("spiky", x).unwrap(), vec![]).unwrap();
        let err = rank_universe(&panel, 1).unwrap_err();
        assert!(err.to_string().contains("spiky"));
    }
}
