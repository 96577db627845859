//! Run configuration: built-in defaults, overridden by a flat `key = value`
//! file, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use hedgegraph::backtest::ReportFormat;
use hedgegraph::market_data::{CsvLayout, DEFAULT_DATE_COLUMN, DEFAULT_MIN_COVERAGE};
use serde::Serialize;

pub const KEYS: [&str; 10] = [
    "data_dir",
    "date_column",
    "price_column",
    "min_coverage",
    "seed",
    "out",
    "format",
    "ks",
    "from_year",
    "to_year",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub date_column: String,
    /// `None` picks the first of the default price columns present.
    pub price_column: Option<String>,
    pub min_coverage: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub format: ReportFormat,
    pub ks: Vec<usize>,
    pub from_year: Option<i32>,
    pub to_year: Option<i32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            date_column: DEFAULT_DATE_COLUMN.to_string(),
            price_column: None,
            min_coverage: DEFAULT_MIN_COVERAGE,
            seed: 0,
            out: PathBuf::from("out"),
            format: ReportFormat::Csv,
            ks: vec![20, 30, 40, 50],
            from_year: None,
            to_year: None,
        }
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub date_column: Option<String>,
    pub price_column: Option<String>,
    pub min_coverage: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub ks: Option<String>,
    pub from_year: Option<i32>,
    pub to_year: Option<i32>,
}

pub fn parse_ks(raw: &str) -> anyhow::Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("invalid universe size {s:?} in ks"))
        })
        .collect()
}

impl RunConfig {
    pub fn resolve(file: Option<&Path>, cli: Overrides) -> anyhow::Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_file(&text)
                .with_context(|| format!("in config {}", path.display()))?;
        }
        if let Some(v) = cli.data_dir {
            cfg.data_dir = Some(v);
        }
        if let Some(v) = cli.date_column {
            cfg.date_column = v;
        }
        if let Some(v) = cli.price_column {
            cfg.price_column = Some(v);
        }
        if let Some(v) = cli.min_coverage {
            cfg.min_coverage = v;
        }
        if let Some(v) = cli.seed {
            cfg.seed = v;
        }
        if let Some(v) = cli.out {
            cfg.out = v;
        }
        if let Some(v) = cli.format {
            cfg.format = v.parse()?;
        }
        if let Some(v) = cli.ks {
            cfg.ks = parse_ks(&v)?;
        }
        if cli.from_year.is_some() {
            cfg.from_year = cli.from_year;
        }
        if cli.to_year.is_some() {
            cfg.to_year = cli.to_year;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, text: &str) -> anyhow::Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| anyhow!("line {}: invalid {what} {value:?}", lineno + 1);
            match key {
                "data_dir" => self.data_dir = Some(PathBuf::from(value)),
                "date_column" => self.date_column = value.to_string(),
                "price_column" => self.price_column = Some(value.to_string()),
                "min_coverage" => self.min_coverage = value.parse().map_err(|_| bad(key))?,
                "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
                "out" => self.out = PathBuf::from(value),
                "format" => self.format = value.parse().map_err(|_| bad(key))?,
                "ks" => self.ks = parse_ks(value)?,
                "from_year" => self.from_year = Some(value.parse().map_err(|_| bad(key))?),
                "to_year" => self.to_year = Some(value.parse().map_err(|_| bad(key))?),
                _ => bail!(
                    "line {}: unknown key {key:?} (known: {})",
                    lineno + 1,
                    KEYS.join(", ")
                ),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.min_coverage > 0.0 && self.min_coverage <= 1.0) {
            bail!("min_coverage must lie in (0, 1], got {}", self.min_coverage);
        }
        if self.ks.contains(&0) {
            bail!("ks must be positive");
        }
        if let (Some(a), Some(b)) = (self.from_year, self.to_year) {
            if a > b {
                bail!("from_year {a} is after to_year {b}");
            }
        }
        if self.date_column.is_empty() {
            bail!("date_column must not be empty");
        }
        Ok(())
    }

    pub fn layout(&self) -> CsvLayout {
        CsvLayout {
            date_column: self.date_column.clone(),
            price_column: self.price_column.clone(),
            date_format: None,
        }
    }

    pub fn data_dir(&self) -> anyhow::Result<&Path> {
        self.data_dir.as_deref().ok_or_else(|| {
            anyhow!("no data directory; pass --data-dir or set data_dir in the config file")
        })
    }
}
