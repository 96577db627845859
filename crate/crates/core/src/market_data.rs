//! Price ingestion, calendar alignment and log-return panels.
//!
//! One CSV file per asset is loaded into a [`PriceSeries`]. Series are aligned
//! onto the strict intersection of their calendars (after dropping series with
//! poor coverage), converted to a [`ReturnPanel`] of daily log returns and
//! split into calendar-year [`YearWindow`]s.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use tracing::{debug, warn};

use crate::error::{Error, Result};

/// Price column names tried, in order, when no explicit column is configured.
pub const DEFAULT_PRICE_COLUMNS: [&str; 3] = ["Adjusted Close", "Adj Close", "Close"];
pub const DEFAULT_DATE_COLUMN: &str = "Date";
pub const DEFAULT_MIN_COVERAGE: f64 = 0.95;

/// Date formats accepted when none is configured. The Kaggle per-ticker dump
/// uses day-first dates, everything else in the wild is ISO-8601.
const DEFAULT_DATE_FORMATS: [&str; 2] = ["%Y-%m-%d", "%d-%m-%Y"];

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series from unordered rows. Rows are sorted by date, then an
    /// exact duplicate date or a non-positive price is rejected.
    pub fn new(ticker: impl Into<String>, mut rows: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let ticker = ticker.into();
        rows.sort_by_key(|(d, _)| *d);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Data(format!(
                    "{ticker}: duplicate date {}",
                    pair[0].0
                )));
            }
        }
        for (d, p) in &rows {
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::Data(format!(
                    "{ticker}: non-positive price {p} on {d}"
                )));
            }
        }
        let (dates, closes) = rows.into_iter().unzip();
        Ok(Self {
            ticker,
            dates,
            closes,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    fn date_range(&self) -> String {
        match (self.dates.first(), self.dates.last()) {
            (Some(a), Some(b)) => format!("{}: {a}..{b}", self.ticker),
            _ => format!("{}: empty", self.ticker),
        }
    }
}

/// Which CSV columns hold the date and the price.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvLayout {
    pub date_column: String,
    /// `None` means "first of [`DEFAULT_PRICE_COLUMNS`] present".
    pub price_column: Option<String>,
    /// `None` tries ISO-8601 then day-first `dd-mm-YYYY`.
    pub date_format: Option<String>,
}

impl Default for CsvLayout {
    fn default() -> Self {
        Self {
            date_column: DEFAULT_DATE_COLUMN.to_string(),
            price_column: None,
            date_format: None,
        }
    }
}

impl CsvLayout {
    fn parse_date(&self, raw: &str) -> Option<NaiveDate> {
        let raw = raw.trim();
        match &self.date_format {
            Some(fmt) => NaiveDate::parse_from_str(raw, fmt).ok(),
            None => DEFAULT_DATE_FORMATS
                .iter()
                .find_map(|fmt| NaiveDate::parse_from_str(raw, fmt).ok()),
        }
    }
}

/// Loads one per-asset price file. The ticker is the file stem.
pub fn load_price_csv(path: &Path, layout: &CsvLayout) -> Result<PriceSeries> {
    let ticker = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Data(format!("cannot derive ticker from {}", path.display())))?
        .to_string();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => format_err(path, 1, format!("{other:?}")),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| format_err(path, 1, e.to_string()))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let date_idx = find(&layout.date_column).ok_or_else(|| {
        format_err(
            path,
            1,
            format!("missing date column '{}'", layout.date_column),
        )
    })?;
    let price_idx = match &layout.price_column {
        Some(col) => {
            find(col).ok_or_else(|| format_err(path, 1, format!("missing price column '{col}'")))?
        }
        None => DEFAULT_PRICE_COLUMNS
            .iter()
            .find_map(|c| find(c))
            .ok_or_else(|| {
                format_err(
                    path,
                    1,
                    format!("none of the price columns {DEFAULT_PRICE_COLUMNS:?} present"),
                )
            })?,
    };

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| format_err(path, row, e.to_string()))?;
        let raw_date = record
            .get(date_idx)
            .ok_or_else(|| format_err(path, row, "missing date field".into()))?;
        let date = layout
            .parse_date(raw_date)
            .ok_or_else(|| format_err(path, row, format!("unparsable date '{raw_date}'")))?;
        let raw_price = record
            .get(price_idx)
            .ok_or_else(|| format_err(path, row, "missing price field".into()))?;
        let price: f64 = raw_price
            .parse()
            .map_err(|_| format_err(path, row, format!("unparsable price '{raw_price}'")))?;
        rows.push((date, price));
    }
    PriceSeries::new(ticker, rows)
}

fn format_err(path: &Path, row: usize, message: String) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        row,
        message,
    }
}

/// Loads every `*.csv` in `dir` (or only the listed tickers), sorted by ticker.
pub fn load_price_dir(
    dir: &Path,
    layout: &CsvLayout,
    tickers: Option<&[String]>,
) -> Result<Vec<PriceSeries>> {
    let mut paths: Vec<PathBuf> = match tickers {
        Some(list) => list.iter().map(|t| dir.join(format!("{t}.csv"))).collect(),
        None => fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
            .collect(),
    };
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("no price files in {}", dir.display())));
    }
    let mut series = paths
        .par_iter()
        .map(|p| load_price_csv(p, layout))
        .collect::<Result<Vec<_>>>()?;
    series.sort_by(|a, b| a.ticker.cmp(&b.ticker));
    debug!(count = series.len(), dir = %dir.display(), "loaded price files");
    Ok(series)
}

/// Closing prices of several assets on a shared calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// One row per ticker, one column per date.
    pub closes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub panel: PricePanel,
    /// Tickers removed by the coverage filter.
    pub dropped: Vec<String>,
}

/// Aligns series onto the strict intersection of their calendars.
///
/// A series covering less than `min_coverage` of the union calendar is dropped
/// before intersecting. No forward filling is done.
pub fn align_panel(series: &[PriceSeries], min_coverage: f64) -> Result<Alignment> {
    if series.len() < 2 {
        return Err(Error::Alignment(format!(
            "need at least 2 series, got {}",
            series.len()
        )));
    }
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::Domain(format!(
            "min_coverage {min_coverage} outside [0, 1]"
        )));
    }
    let mut seen = HashSet::new();
    for s in series {
        if !seen.insert(s.ticker.as_str()) {
            return Err(Error::Data(format!("duplicate ticker {}", s.ticker)));
        }
    }

    let union: BTreeSet<NaiveDate> = series
        .iter()
        .flat_map(|s| s.dates.iter().copied())
        .collect();
    let union_len = union.len().max(1) as f64;

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for s in series {
        let coverage = s.len() as f64 / union_len;
        if coverage < min_coverage {
            warn!(
                ticker = %s.ticker,
                coverage,
                min_coverage,
                "dropping series below coverage threshold"
            );
            dropped.push(s.ticker.clone());
        } else {
            kept.push(s);
        }
    }
    if kept.is_empty() {
        return Err(Error::Alignment(format!(
            "every series fell below coverage {min_coverage}"
        )));
    }

    let mut common: BTreeSet<NaiveDate> = kept[0].dates.iter().copied().collect();
    for s in &kept[1..] {
        let other: HashSet<NaiveDate> = s.dates.iter().copied().collect();
        common.retain(|d| other.contains(d));
    }
    if common.is_empty() {
        let ranges: Vec<String> = kept.iter().map(|s| s.date_range()).collect();
        return Err(Error::Alignment(format!(
            "empty date intersection; ranges: {}",
            ranges.join("; ")
        )));
    }

    let dates: Vec<NaiveDate> = common.into_iter().collect();
    let closes = kept
        .iter()
        .map(|s| {
            // both date lists are sorted, so a merge walk suffices
            let mut out = Vec::with_capacity(dates.len());
            let mut j = 0;
            for d in &dates {
                while s.dates[j] < *d {
                    j += 1;
                }
                out.push(s.closes[j]);
            }
            out
        })
        .collect();

    Ok(Alignment {
        panel: PricePanel {
            tickers: kept.iter().map(|s| s.ticker.clone()).collect(),
            dates,
            closes,
        },
        dropped,
    })
}

/// N assets by T days of daily log returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    returns: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn new(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        returns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::Data("return panel without assets".into()));
        }
        if dates.is_empty() {
            return Err(Error::Data("return panel without dates".into()));
        }
        if returns.len() != tickers.len() {
            return Err(Error::Data(format!(
                "{} return rows for {} tickers",
                returns.len(),
                tickers.len()
            )));
        }
        let mut seen = HashSet::new();
        for t in &tickers {
            if !seen.insert(t.as_str()) {
                return Err(Error::Data(format!("duplicate ticker {t}")));
            }
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("return dates not strictly increasing".into()));
        }
        for (t, row) in tickers.iter().zip(&returns) {
            if row.len() != dates.len() {
                return Err(Error::Data(format!(
                    "{t}: {} returns for {} dates",
                    row.len(),
                    dates.len()
                )));
            }
            if let Some(x) = row.iter().find(|x| !x.is_finite()) {
                return Err(Error::Data(format!("{t}: non-finite return {x}")));
            }
        }
        Ok(Self {
            tickers,
            dates,
            returns,
        })
    }

    /// Panel with consecutive weekday dates starting at 2000-01-03. Handy for
    /// tests and anything that only cares about the numbers.
    pub fn from_rows(returns: Vec<Vec<f64>>) -> Result<Self> {
        let n = returns.len();
        let t = returns.first().map_or(0, Vec::len);
        let tickers = (0..n).map(|i| format!("A{i:03}")).collect();
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        Self::new(tickers, weekdays_from(start, t), returns)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.returns
    }

    pub fn row(&self, asset: usize) -> &[f64] {
        &self.returns[asset]
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn index_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    /// Sub-panel over `tickers`, in the order given.
    pub fn select(&self, tickers: &[String]) -> Result<ReturnPanel> {
        let rows = tickers
            .iter()
            .map(|t| {
                self.index_of(t)
                    .map(|i| self.returns[i].clone())
                    .ok_or_else(|| Error::MissingTicker(t.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        ReturnPanel::new(tickers.to_vec(), self.dates.clone(), rows)
    }

    /// Sub-panel over the dates for which `keep` is true.
    pub fn filter_dates(&self, keep: impl Fn(NaiveDate) -> bool) -> Result<ReturnPanel> {
        let cols: Vec<usize> = (0..self.dates.len())
            .filter(|&c| keep(self.dates[c]))
            .collect();
        let dates = cols.iter().map(|&c| self.dates[c]).collect();
        let returns = self
            .returns
            .iter()
            .map(|row| cols.iter().map(|&c| row[c]).collect())
            .collect();
        ReturnPanel::new(self.tickers.clone(), dates, returns)
    }

    /// Dumps the panel as CSV: a `Date` column followed by one column per ticker.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("Date");
        for t in &self.tickers {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (c, d) in self.dates.iter().enumerate() {
            out.push_str(&d.to_string());
            for row in &self.returns {
                out.push(',');
                out.push_str(&row[c].to_string());
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `returns[j][t] = ln(P[j][t+1]) - ln(P[j][t])`. The first date is consumed.
pub fn log_returns(prices: &PricePanel) -> Result<ReturnPanel> {
    if prices.dates.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 price dates, got {}",
            prices.dates.len()
        )));
    }
    let returns = prices
        .closes
        .iter()
        .zip(&prices.tickers)
        .map(|(row, t)| {
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                return Err(Error::Data(format!("{t}: non-positive price {p}")));
            }
            Ok(row.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    ReturnPanel::new(prices.tickers.clone(), prices.dates[1..].to_vec(), returns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearWindow {
    pub year: i32,
    pub panel: ReturnPanel,
}

/// Splits a panel by the calendar year of each return's date, ascending.
pub fn partition_years(panel: &ReturnPanel) -> Vec<YearWindow> {
    let years: BTreeSet<i32> = panel.dates.iter().map(|d| d.year()).collect();
    years
        .into_iter()
        .map(|year| YearWindow {
            year,
            panel: panel
                .filter_dates(|d| d.year() == year)
                .expect("non-empty year slice of a valid panel"),
        })
        .collect()
}

/// `count` consecutive weekdays starting at `start` (itself moved forward to a weekday).
pub fn weekdays_from(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    use chrono::Weekday;
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Writes a series in the default layout (`Date`, `Close`).
pub fn write_price_csv(series: &PriceSeries, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::from("Date,Close\n");
    for (d, p) in series.dates.iter().zip(&series.closes) {
        out.push_str(&format!("{d},{p}\n"));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub mod synthetic {
    //! Seeded geometric random walks on a weekday calendar.

    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::{weekdays_from, PriceSeries};

    /// `n_assets` price paths over every weekday of `first_year..=last_year`.
    /// Drifts and volatilities vary per asset; a common factor induces
    /// realistic positive correlation.
    pub fn random_walk_series(
        n_assets: usize,
        first_year: i32,
        last_year: i32,
        seed: u64,
    ) -> Vec<PriceSeries> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = NaiveDate::from_ymd_opt(first_year, 1, 1).expect("valid year");
        let end = NaiveDate::from_ymd_opt(last_year, 12, 31).expect("valid year");
        let calendar: Vec<NaiveDate> =
            weekdays_from(start, 400 * (last_year - first_year + 1) as usize)
                .into_iter()
                .take_while(|d| *d <= end)
                .collect();
        let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
        let params: Vec<(f64, f64, f64)> = (0..n_assets)
            .map(|i| {
                let drift = 0.0004 * ((i % 7) as f64 - 2.5);
                let vol = 0.008 + 0.002 * (i % 5) as f64;
                let beta = 0.3 + 0.1 * (i % 4) as f64;
                (drift, vol, beta)
            })
            .collect();
        let mut prices: Vec<Vec<f64>> = vec![Vec::with_capacity(calendar.len()); n_assets];
        let mut level: Vec<f64> = (0..n_assets).map(|i| 50.0 + 5.0 * i as f64).collect();
        for _ in &calendar {
            let market = 0.01 * std_normal.sample(&mut rng);
            for (i, &(drift, vol, beta)) in params.iter().enumerate() {
                let shock = vol * std_normal.sample(&mut rng);
                level[i] *= (drift + beta * market + shock).exp();
                prices[i].push(level[i]);
            }
        }
        prices
            .into_iter()
            .enumerate()
            .map(|(i, closes)| {
                PriceSeries::new(
                    format!("S{i:03}"),
                    calendar.iter().copied().zip(closes).collect(),
                )
                .expect("synthetic prices are positive and dates unique")
            })
            .collect()
    }
}
