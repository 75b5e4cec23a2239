//! Domain types for univariate series, CSV ingestion of price/return panels,
//! standardisation and causal window extraction.
//!
//! Variances use the population (1/N) convention throughout the crate.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::util;

/// A uniformly sampled univariate real sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    values: Vec<f64>,
    /// Nominal sampling step in trading days.
    pub dt: f64,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(invalid(format!("series '{id}' is empty")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("series '{id}' has a non-finite value at index {i}")));
        }
        Ok(Self { id, values, dt: 1.0 })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Tickers mapped to their series, with the calendar label of every sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Panel {
    series: BTreeMap<String, TimeSeries>,
    dates: BTreeMap<String, Vec<NaiveDate>>,
}

impl Panel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a series; `dates` may be empty when no calendar is known.
    pub fn insert(&mut self, series: TimeSeries, dates: Vec<NaiveDate>) -> Result<()> {
        if self.series.contains_key(&series.id) {
            return Err(invalid(format!("duplicate ticker '{}'", series.id)));
        }
        if !dates.is_empty() && dates.len() != series.len() {
            return Err(invalid(format!(
                "ticker '{}': {} dates for {} values",
                series.id,
                dates.len(),
                series.len()
            )));
        }
        self.dates.insert(series.id.clone(), dates);
        self.series.insert(series.id.clone(), series);
        Ok(())
    }

    pub fn get(&self, ticker: &str) -> Option<&TimeSeries> {
        self.series.get(ticker)
    }

    pub fn dates(&self, ticker: &str) -> Option<&[NaiveDate]> {
        self.dates.get(ticker).map(Vec::as_slice)
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TimeSeries> {
        self.series.values()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvFormat {
    Price,
    Return,
}

impl std::str::FromStr for CsvFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "price" => Ok(CsvFormat::Price),
            "return" | "returns" => Ok(CsvFormat::Return),
            other => Err(invalid(format!("unknown csv format '{other}'"))),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "null" | "NULL")
}

fn parse_date(path: &Path, line: u64, cell: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad ISO date '{cell}': {e}"),
    })
}

fn parse_value(path: &Path, line: u64, cell: &str) -> Result<Option<f64>> {
    if is_missing(cell) {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("non-numeric value '{cell}'"),
        })
}

/// Loads a wide (`date,TICKER1,TICKER2,...`) or long (`date,ticker,value`) CSV.
///
/// Price input is converted to log-returns; rows with a missing value are
/// dropped per ticker before the conversion.
pub fn load_csv(path: impl AsRef<Path>, format: CsvFormat) -> Result<Panel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, path, format)
}

/// Same as [`load_csv`] but from any reader; `path` is only used in messages.
pub fn read_csv<R: std::io::Read>(reader: R, path: &Path, format: CsvFormat) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(parse_err(1, "header must start with a 'date' column".into()));
    }
    let long = header.len() == 3
        && header[1].eq_ignore_ascii_case("ticker")
        && header[2].eq_ignore_ascii_case("value");

    let mut raw: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    if !long {
        for name in &header[1..] {
            if raw.insert(name.clone(), Vec::new()).is_some() {
                return Err(parse_err(1, format!("duplicate ticker column '{name}'")));
            }
        }
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let date = parse_date(path, line, &rec[0])?;
        if long {
            if let Some(v) = parse_value(path, line, &rec[2])? {
                raw.entry(rec[1].to_string()).or_default().push((date, v));
            }
        } else {
            for (name, cell) in header[1..].iter().zip(rec.iter().skip(1)) {
                if let Some(v) = parse_value(path, line, cell)? {
                    raw.get_mut(name).expect("column registered").push((date, v));
                }
            }
        }
    }

    let mut panel = Panel::new();
    for (ticker, mut rows) in raw {
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(invalid(format!("ticker '{ticker}': duplicate date {}", w[0].0)));
        }
        let (dates, values): (Vec<NaiveDate>, Vec<f64>) = match format {
            CsvFormat::Return => rows.into_iter().unzip(),
            CsvFormat::Price => {
                if let Some(r) = rows.iter().find(|r| r.1 <= 0.0) {
                    return Err(Error::Domain(format!(
                        "ticker '{ticker}': non-positive price {} on {}",
                        r.1, r.0
                    )));
                }
                rows.windows(2)
                    .map(|w| (w[1].0, (w[1].1 / w[0].1).ln()))
                    .unzip()
            }
        };
        if values.is_empty() {
            return Err(invalid(format!("ticker '{ticker}': empty series")));
        }
        panel.insert(TimeSeries::new(ticker, values)?, dates)?;
    }
    if panel.is_empty() {
        return Err(invalid(format!("{}: no series found", path.display())));
    }
    Ok(panel)
}

/// Writes a single-column CSV with header `value`.
pub fn write_single_column(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::with_capacity(values.len() * 24 + 8);
    out.push_str("value\n");
    for v in values {
        out.push_str(&format!("{v:.17e}\n"));
    }
    std::fs::write(path, out).map_err(io_err)
}

/// Reads a single-column numeric CSV (header optional).
pub fn read_single_column(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cell = line.split(',').next_back().unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    msg: format!("non-numeric value '{cell}'"),
                })
            }
        }
    }
    Ok(out)
}

/// Standardises `x` with mean and population std taken from `stats_window` only.
pub fn standardize(x: &TimeSeries, stats_window: Range<usize>) -> Result<(TimeSeries, f64, f64)> {
    if stats_window.is_empty() || stats_window.end > x.len() {
        return Err(invalid(format!(
            "stats window {stats_window:?} outside series of length {}",
            x.len()
        )));
    }
    let slice = &x.values()[stats_window];
    let mean = util::mean(slice);
    let std = util::pop_std(slice);
    if !(std > 0.0) {
        return Err(Error::Domain(format!("series '{}': zero variance window", x.id)));
    }
    let values = x.values().iter().map(|v| (v - mean) / std).collect();
    let mut out = TimeSeries::new(x.id.clone(), values)?;
    out.dt = x.dt;
    Ok((out, mean, std))
}

/// Inverse of [`standardize`].
pub fn unstandardize(x: &TimeSeries, mean: f64, std: f64) -> Result<TimeSeries> {
    TimeSeries::new(x.id.clone(), x.values().iter().map(|v| v * std + mean).collect())
}

/// Context windows of length `window_len` paired with `horizon`-step forward sums.
///
/// Pair `i` reads `x[start_i .. start_i + window_len]` and its target sums
/// `x[start_i + window_len .. start_i + window_len + horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSet {
    pub window_len: usize,
    pub horizon: usize,
    pub starts: Vec<usize>,
    pub targets: Vec<f64>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn window<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        let s = self.starts[i];
        &x[s..s + self.window_len]
    }

    /// Index range summed into target `i`.
    pub fn target_range(&self, i: usize) -> Range<usize> {
        let t = self.starts[i] + self.window_len;
        t..t + self.horizon
    }
}

/// Splits `x` into train and test window sets. Test pairs are exactly those
/// whose target indices all fall in the final `split` samples; train targets
/// end strictly before them.
pub fn make_windows(
    x: &TimeSeries,
    window_len: usize,
    horizon: usize,
    split: usize,
) -> Result<(WindowSet, WindowSet)> {
    if window_len == 0 || horizon == 0 {
        return Err(invalid("window length and horizon must be positive"));
    }
    let n = x.len();
    let required = window_len + horizon + split;
    if n < required {
        return Err(Error::TooShort { required, actual: n });
    }
    let v = x.values();
    let build = |starts: Range<usize>| {
        let starts: Vec<usize> = starts.collect();
        let targets = starts
            .iter()
            .map(|&s| v[s + window_len..s + window_len + horizon].iter().sum())
            .collect();
        WindowSet {
            window_len,
            horizon,
            starts,
            targets,
        }
    };
    let boundary = n - split;
    // train: s + W + T <= boundary ; test: s + W >= boundary and s + W + T <= n
    let train = build(0..boundary + 1 - window_len - horizon);
    let test = build(boundary - window_len..n + 1 - window_len - horizon);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn read(text: &str, format: CsvFormat) -> Result<Panel> {
        read_csv(Cursor::new(text.to_string()), Path::new("mem.csv"), format)
    }

    #[test]
    fn price_column_to_log_returns() {
        let p = read("date,A\n2020-01-01,100\n2020-01-02,110\n2020-01-03,121\n", CsvFormat::Price).unwrap();
        let a = p.get("A").unwrap().values();
        assert_eq!(a.len(), 2);
        for v in a {
            assert!((v - 1.1f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn long_form_two_tickers() {
        let mut text = String::from("date,ticker,value\n");
        for (i, d) in ["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-06"].iter().enumerate() {
            text.push_str(&format!("{d},AAA,{}\n", 10.0 + i as f64));
            text.push_str(&format!("{d},BBB,{}\n", 20.0 + i as f64));
        }
        let p = read(&text, CsvFormat::Price).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|s| s.len() == 3));
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let mut text = String::from("date,A\n");
        for d in 1..=7 {
            let v = if d == 6 { "abc".to_string() } else { format!("{}", 100 + d) };
            text.push_str(&format!("2020-01-{d:02},{v}\n"));
        }
        match read(&text, CsvFormat::Price) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_price_is_domain_error() {
        let e = read("date,A\n2020-01-01,1\n2020-01-02,0\n", CsvFormat::Price).unwrap_err();
        assert!(matches!(e, Error::Domain(_)));
    }

    #[test]
    fn empty_series_names_ticker() {
        let e = read("date,A,B\n2020-01-01,1,\n2020-01-02,2,\n", CsvFormat::Price).unwrap_err();
        assert!(e.to_string().contains("'B'"), "{e}");
    }

    #[test]
    fn missing_rows_are_dropped_and_sorted() {
        let p = read(
            "date,A\n2020-01-03,0.3\n2020-01-01,0.1\n2020-01-02,NA\n",
            CsvFormat::Return,
        )
        .unwrap();
        assert_eq!(p.get("A").unwrap().values(), &[0.1, 0.3]);
    }

    #[test]
    fn price_round_trip_via_cumsum() {
        let prices: [f64; 6] = [100.0, 101.3, 99.7, 105.2, 104.9, 110.0];
        let mut text = String::from("date,A\n");
        for (i, p) in prices.iter().enumerate() {
            text.push_str(&format!("2021-03-{:02},{p}\n", i + 1));
        }
        let r = read(&text, CsvFormat::Price).unwrap();
        let mut acc = prices[0].ln();
        for (ret, p) in r.get("A").unwrap().values().iter().zip(&prices[1..]) {
            acc += ret;
            assert!((acc - p.ln()).abs() <= 1e-12);
        }
    }

    #[test]
    fn standardize_population_convention() {
        let x = TimeSeries::new("x", vec![1.0, 2.0, 3.0]).unwrap();
        let (y, m, s) = standardize(&x, 0..3).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let back = unstandardize(&y, m, s).unwrap();
        for (a, b) in back.values().iter().zip(x.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn standardize_constant_errors() {
        let x = TimeSeries::new("c", vec![4.0; 10]).unwrap();
        assert!(standardize(&x, 0..10).is_err());
    }

    #[test]
    fn window_counts_and_boundary() {
        let x = TimeSeries::new("x", (0..400).map(|i| i as f64).collect()).unwrap();
        let (train, test) = make_windows(&x, 128, 1, 252).unwrap();
        assert_eq!(test.len(), 252);
        let max_train = (0..train.len()).map(|i| train.target_range(i).end - 1).max().unwrap();
        assert_eq!(max_train, 400 - 252 - 1);
        assert_eq!(test.target_range(0).start, 400 - 252);
    }

    #[test]
    fn horizon_targets_match_direct_sum() {
        let vals: Vec<f64> = (0..600).map(|i| ((i * 37 % 101) as f64 - 50.0) / 17.0).collect();
        let x = TimeSeries::new("x", vals.clone()).unwrap();
        let (train, test) = make_windows(&x, 128, 21, 252).unwrap();
        for set in [&train, &test] {
            for i in 0..set.len() {
                let mut direct = 0.0;
                for j in set.target_range(i) {
                    direct += vals[j];
                }
                assert!((set.targets[i] - direct).abs() < 1e-12);
            }
        }
        // test targets confined to the last 252 samples, train targets disjoint
        assert!(test.starts.iter().all(|&s| s + 128 >= 600 - 252));
        assert!((0..train.len()).all(|i| train.target_range(i).end <= 600 - 252));
    }

    #[test]
    fn too_short_names_minimum() {
        let x = TimeSeries::new("x", vec![0.0; 100]).unwrap();
        match make_windows(&x, 128, 1, 0) {
            Err(Error::TooShort { required, .. }) => assert_eq!(required, 129),
            other => panic!("{other:?}"),
        }
    }
}
