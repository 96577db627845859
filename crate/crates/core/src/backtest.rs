//! Train on year `y`, evaluate on year `y + 1`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hedge_score::{reduce_universe, UniverseSelection};
use crate::market_data::{partition_years, ReturnPanel};
use crate::portfolio::{equal_weights, estimate_moments, max_sharpe_weights, PortfolioWeights};

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "Full-Markowitz")]
    FullMarkowitz,
    #[serde(rename = "Full-Equal")]
    FullEqual,
    #[serde(rename = "TopK-Markowitz")]
    TopkMarkowitz,
    #[serde(rename = "TopK-Equal")]
    TopkEqual,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::FullMarkowitz,
        Strategy::FullEqual,
        Strategy::TopkMarkowitz,
        Strategy::TopkEqual,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::FullMarkowitz => "Full-Markowitz",
            Strategy::FullEqual => "Full-Equal",
            Strategy::TopkMarkowitz => "TopK-Markowitz",
            Strategy::TopkEqual => "TopK-Equal",
        }
    }

    pub fn is_topk(self) -> bool {
        matches!(self, Strategy::TopkMarkowitz | Strategy::TopkEqual)
    }

    /// Accepts the display labels and their snake_case forms.
    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "full_markowitz" => Ok(Strategy::FullMarkowitz),
            "full_equal" => Ok(Strategy::FullEqual),
            "topk_markowitz" => Ok(Strategy::TopkMarkowitz),
            "topk_equal" => Ok(Strategy::TopkEqual),
            _ => Err(Error::Domain(format!("unknown strategy {s:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub ks: Vec<usize>,
    pub strategies: Vec<Strategy>,
    /// First train year; defaults to the first year in the panel.
    pub from_year: Option<i32>,
    /// Last train year; defaults to the second-to-last year in the panel.
    pub to_year: Option<i32>,
    /// Reserved for stochastic components; the default strategies use none.
    pub seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            ks: vec![20, 30, 40, 50],
            strategies: Strategy::ALL.to_vec(),
            from_year: None,
            to_year: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRecord {
    pub train_year: i32,
    pub test_year: i32,
    pub strategy: Strategy,
    /// `None` for full-universe strategies.
    pub k: Option<usize>,
    pub annual_return: f64,
    pub annual_volatility: f64,
    /// `None` when the volatility is zero.
    pub sharpe: Option<f64>,
    pub universe: Vec<String>,
    pub universe_scores: Option<Vec<f64>>,
    pub weights: PortfolioWeights,
}

/// `r_p,t = sum_j w_j r_j,t` for every day of `panel`.
pub fn portfolio_daily_returns(panel: &ReturnPanel, w: &PortfolioWeights) -> Result<Vec<f64>> {
    if w.tickers.len() != w.weights.len() {
        return Err(Error::Domain("weights and tickers differ in length".into()));
    }
    let rows: Vec<&[f64]> = w
        .tickers
        .iter()
        .map(|t| {
            panel
                .index_of(t)
                .map(|i| panel.row(i))
                .ok_or_else(|| Error::MissingTicker(t.clone()))
        })
        .collect::<Result<_>>()?;
    Ok((0..panel.n_days())
        .map(|d| rows.iter().zip(&w.weights).map(|(r, wj)| wj * r[d]).sum())
        .collect())
}

pub fn annual_return(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::Domain("annual return of an empty series".into()));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    Ok((TRADING_DAYS * mean).exp() - 1.0)
}

pub fn annual_volatility(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "volatility needs at least 2 observations, got {n}"
        )));
    }
    // a constant series has exactly zero spread; the rounded mean would not give that
    if series.iter().all(|&x| x == series[0]) {
        return Ok(0.0);
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let ss: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((ss / (n - 1) as f64).sqrt() * TRADING_DAYS.sqrt())
}

pub fn sharpe_from_parts(annual_return: f64, annual_volatility: f64) -> Option<f64> {
    (annual_volatility > 0.0).then(|| annual_return / annual_volatility)
}

/// `None` marks an undefined ratio (zero volatility).
pub fn sharpe(series: &[f64]) -> Result<Option<f64>> {
    Ok(sharpe_from_parts(
        annual_return(series)?,
        annual_volatility(series)?,
    ))
}

/// A portfolio built from one training window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPortfolio {
    pub strategy: Strategy,
    pub k: Option<usize>,
    pub selection: Option<UniverseSelection>,
    pub weights: PortfolioWeights,
}

/// Builds every requested portfolio from the training window alone.
pub fn train_portfolios(
    train: &ReturnPanel,
    ks: &[usize],
    strategies: &[Strategy],
) -> Result<Vec<TrainedPortfolio>> {
    let wants = |s: Strategy| strategies.contains(&s);
    let mut out = Vec::new();
    if wants(Strategy::FullMarkowitz) {
        let m = estimate_moments(train).map_err(|e| e.with_context("Full-Markowitz"))?;
        out.push(TrainedPortfolio {
            strategy: Strategy::FullMarkowitz,
            k: None,
            selection: None,
            weights: max_sharpe_weights(&m).map_err(|e| e.with_context("Full-Markowitz"))?,
        });
    }
    if wants(Strategy::FullEqual) {
        out.push(TrainedPortfolio {
            strategy: Strategy::FullEqual,
            k: None,
            selection: None,
            weights: equal_weights(train.tickers())?,
        });
    }
    if !(wants(Strategy::TopkMarkowitz) || wants(Strategy::TopkEqual)) {
        return Ok(out);
    }
    let mut topk_m = Vec::new();
    let mut topk_e = Vec::new();
    for &k in ks {
        let ctx = |e: Error, s: Strategy| e.with_context(format!("{s}, K = {k}"));
        let red = reduce_universe(train, k, "train").map_err(|e| ctx(e, Strategy::TopkEqual))?;
        let sel = red.selection;
        if wants(Strategy::TopkMarkowitz) {
            let sub = train
                .select(&sel.tickers)
                .map_err(|e| ctx(e, Strategy::TopkMarkowitz))?;
            let m = estimate_moments(&sub).map_err(|e| ctx(e, Strategy::TopkMarkowitz))?;
            topk_m.push(TrainedPortfolio {
                strategy: Strategy::TopkMarkowitz,
                k: Some(k),
                selection: Some(sel.clone()),
                weights: max_sharpe_weights(&m).map_err(|e| ctx(e, Strategy::TopkMarkowitz))?,
            });
        }
        if wants(Strategy::TopkEqual) {
            topk_e.push(TrainedPortfolio {
                strategy: Strategy::TopkEqual,
                k: Some(k),
                weights: equal_weights(&sel.tickers)?,
                selection: Some(sel),
            });
        }
    }
    out.extend(topk_m);
    out.extend(topk_e);
    Ok(out)
}

fn validate(config: &BacktestConfig) -> Result<()> {
    if config.strategies.is_empty() {
        return Err(Error::Domain("no strategies requested".into()));
    }
    if config.ks.contains(&0) {
        return Err(Error::Domain("universe sizes must be positive".into()));
    }
    if config.strategies.iter().any(|s| s.is_topk()) && config.ks.is_empty() {
        return Err(Error::Domain("TopK strategies need at least one K".into()));
    }
    Ok(())
}

/// Runs every (train year, strategy, K) combination. Records come back
/// ordered by train year, then strategy, then K.
pub fn run_backtest(panel: &ReturnPanel, config: &BacktestConfig) -> Result<Vec<BacktestRecord>> {
    validate(config)?;
    let windows: BTreeMap<i32, ReturnPanel> = partition_years(panel)
        .into_iter()
        .map(|w| (w.year, w.panel))
        .collect();
    let first = *windows
        .keys()
        .next()
        .ok_or_else(|| Error::Data("empty panel".into()))?;
    let last = *windows.keys().next_back().expect("non-empty");
    let from = config.from_year.unwrap_or(first);
    let to = config.to_year.unwrap_or(last - 1);
    if from > to {
        return Err(Error::Domain(format!(
            "train years {from}..={to} are empty"
        )));
    }
    for y in from..=to {
        for needed in [y, y + 1] {
            if !windows.contains_key(&needed) {
                return Err(Error::Domain(format!(
                    "year {needed} not covered by the panel ({first}..={last})"
                )));
            }
        }
    }
    tracing::info!(from, to, ks = ?config.ks, "running backtest");

    let per_year: Vec<Vec<BacktestRecord>> = (from..=to)
        .into_par_iter()
        .map(|y| {
            let ctx = |e: Error| e.with_context(format!("train year {y}"));
            let trained =
                train_portfolios(&windows[&y], &config.ks, &config.strategies).map_err(ctx)?;
            let test = &windows[&(y + 1)];
            trained
                .into_iter()
                .map(|p| evaluate(y, test, p).map_err(ctx))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<BacktestRecord> = per_year.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.train_year, r.strategy, r.k));
    Ok(records)
}

fn evaluate(train_year: i32, test: &ReturnPanel, p: TrainedPortfolio) -> Result<BacktestRecord> {
    let series = portfolio_daily_returns(test, &p.weights)?;
    let ret = annual_return(&series)?;
    let vol = annual_volatility(&series)?;
    Ok(BacktestRecord {
        train_year,
        test_year: train_year + 1,
        strategy: p.strategy,
        k: p.k,
        annual_return: ret,
        annual_volatility: vol,
        sharpe: sharpe_from_parts(ret, vol),
        universe: p.weights.tickers.clone(),
        universe_scores: p.selection.map(|s| s.scores),
        weights: p.weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Domain(format!(
                "unknown format {s:?} (expected csv or json)"
            ))),
        }
    }
}

pub const METRICS: [&str; 3] = ["annual_return", "annual_volatility", "sharpe"];

fn metric(r: &BacktestRecord, name: &str) -> Option<f64> {
    match name {
        "annual_return" => Some(r.annual_return),
        "annual_volatility" => Some(r.annual_volatility),
        _ => r.sharpe,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes the summary, the per-metric plot data for each K, and the TopK
/// universes. Returns the written paths in a stable order.
pub fn emit_report(
    records: &[BacktestRecord],
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<std::path::PathBuf>> {
    if records.is_empty() {
        return Err(Error::Domain("no records to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let summary = match format {
        ReportFormat::Csv => {
            let path = out_dir.join("summary.csv");
            let mut body =
                String::from("train_year,test_year,strategy,k,annual_return,annual_volatility,sharpe,universe_size\n");
            for r in records {
                body.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.train_year,
                    r.test_year,
                    r.strategy,
                    r.k.map_or_else(|| "full".to_string(), |k| k.to_string()),
                    r.annual_return,
                    r.annual_volatility,
                    fmt_opt(r.sharpe),
                    r.universe.len()
                ));
            }
            write(&path, &body)?;
            path
        }
        ReportFormat::Json => {
            let path = out_dir.join("summary.json");
            write(&path, &serde_json::to_string_pretty(records)?)?;
            path
        }
    };
    written.push(summary);

    let ks: Vec<usize> = {
        let mut ks: Vec<usize> = records.iter().filter_map(|r| r.k).collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    };
    let years: Vec<i32> = {
        let mut y: Vec<i32> = records.iter().map(|r| r.test_year).collect();
        y.dedup();
        y
    };
    let lookup = |year: i32, s: Strategy, k: usize| {
        records
            .iter()
            .find(|r| r.test_year == year && r.strategy == s && (r.k.is_none() || r.k == Some(k)))
    };
    for &k in &ks {
        for name in METRICS {
            let path = out_dir.join(format!("plotdata_{name}_K{k}.csv"));
            let mut body = String::from("test_year");
            for s in Strategy::ALL {
                body.push(',');
                body.push_str(s.label());
            }
            body.push('\n');
            for &y in &years {
                body.push_str(&y.to_string());
                for s in Strategy::ALL {
                    body.push(',');
                    if let Some(r) = lookup(y, s, k) {
                        body.push_str(&fmt_opt(metric(r, name)));
                    }
                }
                body.push('\n');
            }
            write(&path, &body)?;
            written.push(path);
        }
    }

    // one universe file per (train year, K); both TopK strategies share it
    for r in records.iter().filter(|r| r.strategy.is_topk()) {
        let k = r.k.expect("TopK records carry K");
        let path = out_dir.join(format!("universe_{}_K{k}.csv", r.train_year));
        if written.contains(&path) {
            continue;
        }
        let mut body = String::from("rank,ticker,score\n");
        let scores = r.universe_scores.as_deref().unwrap_or(&[]);
        for (i, t) in r.universe.iter().enumerate() {
            let score = scores.get(i).map_or_else(String::new, |s| s.to_string());
            body.push_str(&format!("{},{t},{score}\n", i + 1));
        }
        write(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}
