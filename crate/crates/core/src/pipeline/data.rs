//! Universe preparation: standardisation, Hurst conditioning and window indexing.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{HurstMode, TrainConfig};
use crate::error::{invalid, Error, Result};
use crate::estimators::{rs_hurst_with, RsSchedule};
use crate::series::{standardize, Panel, TimeSeries};
use crate::synth::{synth_fgn, HurstExponent};

/// Stand-in universe of independent fGn tickers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_tickers: usize,
    pub n_obs: usize,
    /// Hurst exponents are drawn uniformly from `[h_min, h_max]`.
    pub h_min: f64,
    pub h_max: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_tickers: 25,
            n_obs: 2048,
            h_min: 0.5,
            h_max: 0.8,
            seed: 0,
        }
    }
}

fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Panel of `n_tickers` fGn series named `FGN00`, `FGN01`, ... with the drawn
/// exponents, on a weekday calendar.
pub fn synthetic_panel(spec: &SyntheticSpec) -> Result<(Panel, Vec<f64>)> {
    if spec.n_tickers == 0 {
        return Err(invalid("synthetic universe needs at least one ticker"));
    }
    if spec.h_min > spec.h_max {
        return Err(invalid("h_min exceeds h_max"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dates = business_days(spec.n_obs);
    let mut panel = Panel::new();
    let mut hs = Vec::with_capacity(spec.n_tickers);
    for i in 0..spec.n_tickers {
        let h = if spec.h_max > spec.h_min {
            rng.gen_range(spec.h_min..=spec.h_max)
        } else {
            spec.h_min
        };
        let seed = rng.gen::<u64>();
        let x = synth_fgn(HurstExponent::new(h)?, spec.n_obs, seed)?;
        let series = TimeSeries::new(format!("FGN{i:02}"), x.into_values())?;
        panel.insert(series, dates.clone())?;
        hs.push(h);
    }
    Ok((panel, hs))
}

/// One standardised ticker with its train/test boundary and Hurst inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedSeries {
    pub id: String,
    /// Standardised with train-part mean and population std.
    pub values: Vec<f64>,
    /// First test index; targets at or after it are out of sample.
    pub boundary: usize,
    pub mean: f64,
    pub std: f64,
    /// R/S estimate on the train part.
    pub h_series: f64,
    /// `rolling[t]`: R/S estimate on the trailing window ending before `t`.
    rolling: Option<Vec<f64>>,
}

impl PreparedSeries {
    /// Hurst input for a context window ending (exclusive) at `t`.
    pub fn h_hat(&self, t: usize) -> f64 {
        match &self.rolling {
            Some(r) => r[t.min(r.len() - 1)],
            None => self.h_series,
        }
    }
}

/// Minimum samples for a rolling R/S estimate (three dyadic sizes from 8);
/// shorter histories fall back to 0.5.
pub(crate) const RS_MIN_LEN: usize = 128;

fn rolling_hurst(x: &[f64], window: usize) -> Result<Vec<f64>> {
    let schedule = RsSchedule {
        min_size: 8,
        max_divisor: 4,
    };
    (0..=x.len())
        .map(|t| {
            let lo = t.saturating_sub(window);
            if t - lo < RS_MIN_LEN {
                Ok(0.5)
            } else {
                rs_hurst_with(&x[lo..t], schedule).map(|e| e.value)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    pub series: Vec<PreparedSeries>,
    pub window_len: usize,
    pub test_split: usize,
}

/// `(series index, window start)`.
pub type WindowRef = (usize, usize);

impl Universe {
    /// Standardises every ticker on its train part and computes Hurst inputs.
    pub fn prepare(panel: &Panel, cfg: &TrainConfig) -> Result<Self> {
        if panel.is_empty() {
            return Err(invalid("empty panel"));
        }
        let max_h = cfg.horizons.iter().copied().max().unwrap_or(1);
        let mut series = Vec::with_capacity(panel.len());
        for s in panel.iter() {
            let n = s.len();
            let required = cfg.window_len + max_h + cfg.test_split + RS_MIN_LEN;
            if n < required {
                return Err(Error::TooShort { required, actual: n });
            }
            let boundary = n - cfg.test_split;
            let (z, mean, std) = standardize(s, 0..boundary)?;
            let values = z.into_values();
            let h_series = rs_hurst_with(&values[..boundary], RsSchedule::default())?.value;
            let rolling = match cfg.hurst_mode {
                HurstMode::PerSeries => None,
                HurstMode::Rolling { window } => Some(rolling_hurst(&values, window)?),
            };
            series.push(PreparedSeries {
                id: s.id.clone(),
                values,
                boundary,
                mean,
                std,
                h_series,
                rolling,
            });
        }
        Ok(Self {
            series,
            window_len: cfg.window_len,
            test_split: cfg.test_split,
        })
    }

    pub fn tickers(&self) -> Vec<String> {
        self.series.iter().map(|s| s.id.clone()).collect()
    }

    pub fn window(&self, (i, s): WindowRef) -> &[f64] {
        &self.series[i].values[s..s + self.window_len]
    }

    /// Sum of the `t` values following the window.
    pub fn target(&self, (i, s): WindowRef, t: usize) -> f64 {
        let o = s + self.window_len;
        self.series[i].values[o..o + t].iter().sum()
    }

    pub fn h_hat(&self, (i, s): WindowRef) -> f64 {
        self.series[i].h_hat(s + self.window_len)
    }

    /// Training windows of series `i` at horizon `t`: targets end at or before the boundary.
    pub fn train_starts(&self, i: usize, t: usize) -> std::ops::Range<usize> {
        let b = self.series[i].boundary;
        0..(b + 1).saturating_sub(self.window_len + t)
    }

    /// Test windows of series `i` at horizon `t`: targets lie wholly in the test part.
    pub fn test_starts(&self, i: usize, t: usize) -> std::ops::Range<usize> {
        let s = &self.series[i];
        s.boundary - self.window_len..(s.values.len() + 1).saturating_sub(self.window_len + t)
    }
}
