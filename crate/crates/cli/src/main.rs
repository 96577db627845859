mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use chrono::Datelike;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hedgegraph::backtest::{emit_report, run_backtest, BacktestConfig, BacktestRecord, Strategy};
use hedgegraph::combinatorial_opt::{
    verify_reduction, Opt2Problem, UndirectedGraph, DEFAULT_ENUMERATION_BUDGET,
};
use hedgegraph::hedge_score::{hedge_scores, reduce_universe};
use hedgegraph::market_data::{align_panel, load_price_dir, log_returns, ReturnPanel};
use hedgegraph::motif_count::window_motif_counts;
use hedgegraph::signed_graph::DeviationMatrix;

use config::{Overrides, RunConfig};

const LOG_ENV: &str = "HEDGEGRAPH_LOG";

#[derive(Parser, Debug)]
#[command(
    name = "hedgegraph",
    version,
    about = "Hedge-aware universe reduction and backtesting"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory of per-ticker price CSV files.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    date_column: Option<String>,
    /// Price column; defaults to the first of "Adjusted Close", "Adj Close", "Close".
    #[arg(long, global = true)]
    price_column: Option<String>,
    /// Minimum fraction of the union calendar a series must cover.
    #[arg(long, global = true)]
    min_coverage: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for summaries: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert aligned prices to log returns; writes returns.csv.
    Ingest,
    /// Select the top-K universe of one train year.
    Reduce {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        train_year: i32,
    },
    /// Per-day triangle and 4-clique counts of a ticker subset.
    Motifs {
        /// File listing tickers, separated by newlines or commas.
        #[arg(long)]
        subset: PathBuf,
        /// Restrict to one calendar year.
        #[arg(long)]
        year: Option<i32>,
    },
    /// Solve the motif-augmented subset problem.
    Opt2 {
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Mode::Greedy)]
        mode: Mode,
        /// Maximum number of candidate swaps evaluated by the greedy solver.
        #[arg(long)]
        swap_budget: Option<usize>,
        /// Maximum number of subsets the exact solver may enumerate.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
        budget: u128,
        #[arg(long)]
        year: Option<i32>,
    },
    /// Brute-force check of the CLIQUE reduction on a small graph.
    VerifyReduction {
        /// Edge list: one "u v" pair per line, optional "n <count>" line.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        clique_size: usize,
    },
    /// Train on year y, evaluate on y+1, for every requested year and K.
    Backtest {
        /// Comma-separated universe sizes.
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        from_year: Option<i32>,
        #[arg(long)]
        to_year: Option<i32>,
        /// Comma-separated strategies; defaults to all four.
        #[arg(long)]
        strategies: Option<String>,
    },
    /// Re-emit report files from a saved summary.json.
    Report {
        #[arg(long)]
        summary: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    Greedy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let (ks, from_year, to_year) = match &cli.command {
        Command::Backtest {
            ks,
            from_year,
            to_year,
            ..
        } => (ks.clone(), *from_year, *to_year),
        _ => (None, None, None),
    };
    let g = &cli.global;
    let overrides = Overrides {
        data_dir: g.data_dir.clone(),
        date_column: g.date_column.clone(),
        price_column: g.price_column.clone(),
        min_coverage: g.min_coverage,
        seed: g.seed,
        out: g.out.clone(),
        format: g.format.clone(),
        ks,
        from_year,
        to_year,
    };
    let cfg = match RunConfig::resolve(g.config.as_deref(), overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            report_error("config", &e);
            return ExitCode::from(2);
        }
    };
    tracing::info!(config = ?cfg, "resolved configuration");
    match run(&cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<hedgegraph::Error>())
                .map_or("runtime", |he| he.kind());
            report_error(kind, &e);
            ExitCode::from(1)
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env(LOG_ENV)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn report_error(kind: &str, e: &anyhow::Error) {
    let msg = format!("{e:#}").replace('\n', " ");
    eprintln!("error: kind={kind} msg={msg:?}");
}

fn run(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<()> {
    match cmd {
        Command::Ingest => ingest(cfg),
        Command::Reduce { k, train_year } => reduce(cfg, *k, *train_year),
        Command::Motifs { subset, year } => motifs(cfg, subset, *year),
        Command::Opt2 {
            k,
            mode,
            swap_budget,
            budget,
            year,
        } => opt2(cfg, *k, *mode, *swap_budget, *budget, *year),
        Command::VerifyReduction { graph, clique_size } => verify(graph, *clique_size),
        Command::Backtest { strategies, .. } => backtest(cfg, strategies.as_deref()),
        Command::Report { summary } => report(cfg, summary),
    }
}

fn load_returns(cfg: &RunConfig) -> anyhow::Result<(ReturnPanel, Vec<String>)> {
    let dir = cfg.data_dir()?;
    let series = load_price_dir(dir, &cfg.layout(), None)?;
    let aligned = align_panel(&series, cfg.min_coverage)?;
    if !aligned.dropped.is_empty() {
        tracing::warn!(dropped = ?aligned.dropped, "series below coverage threshold");
    }
    Ok((log_returns(&aligned.panel)?, aligned.dropped))
}

fn year_window(panel: &ReturnPanel, year: Option<i32>) -> anyhow::Result<ReturnPanel> {
    match year {
        None => Ok(panel.clone()),
        Some(y) => panel
            .filter_dates(|d| d.year() == y)
            .with_context(|| format!("no returns in year {y}")),
    }
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    fs::write(path, body + "\n").with_context(|| format!("writing {}", path.display()))
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    tickers: &'a [String],
    dropped: &'a [String],
    n_days: usize,
    first_date: String,
    last_date: String,
}

fn ingest(cfg: &RunConfig) -> anyhow::Result<()> {
    let (panel, dropped) = load_returns(cfg)?;
    let out = out_dir(cfg)?;
    let csv = out.join("returns.csv");
    panel.write_csv(&csv)?;
    let json = out.join("ingest.json");
    write_json(
        &json,
        &IngestSummary {
            tickers: panel.tickers(),
            dropped: &dropped,
            n_days: panel.n_days(),
            first_date: panel.dates()[0].to_string(),
            last_date: panel.dates()[panel.n_days() - 1].to_string(),
        },
    )?;
    announce(&[csv, json]);
    Ok(())
}

fn reduce(cfg: &RunConfig, k: usize, year: i32) -> anyhow::Result<()> {
    let (panel, _) = load_returns(cfg)?;
    let train = year_window(&panel, Some(year))?;
    let red = reduce_universe(&train, k, year.to_string())?;
    let out = out_dir(cfg)?;
    let stem = format!("reduction_{year}_K{k}");
    let json = out.join(format!("{stem}.json"));
    write_json(&json, &red)?;
    let csv = out.join(format!("{stem}.csv"));
    let mut body = String::from("ticker,h,mean,score\n");
    for (i, t) in red.selection.tickers.iter().enumerate() {
        body.push_str(&format!(
            "{t},{},{},{}\n",
            red.hedge[i], red.means[i], red.selection.scores[i]
        ));
    }
    fs::write(&csv, body).with_context(|| format!("writing {}", csv.display()))?;
    announce(&[json, csv]);
    Ok(())
}

fn read_subset(path: &Path) -> anyhow::Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading subset {}", path.display()))?;
    let tickers: Vec<String> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.starts_with('#'))
        .map(String::from)
        .collect();
    if tickers.is_empty() {
        bail!("subset file {} lists no tickers", path.display());
    }
    Ok(tickers)
}

fn motifs(cfg: &RunConfig, subset: &Path, year: Option<i32>) -> anyhow::Result<()> {
    let (panel, _) = load_returns(cfg)?;
    let window = year_window(&panel, year)?;
    let tickers = read_subset(subset)?;
    let idx: Vec<usize> = tickers
        .iter()
        .map(|t| {
            window
                .index_of(t)
                .ok_or_else(|| hedgegraph::Error::MissingTicker(t.clone()))
        })
        .collect::<Result<_, _>>()?;
    let devs = DeviationMatrix::from_panel(&window);
    let counts = window_motif_counts(&devs, &idx)?;
    let out = out_dir(cfg)?;
    let path = out.join(match year {
        Some(y) => format!("motifs_{y}.csv"),
        None => "motifs.csv".to_string(),
    });
    let mut body = String::from("date,n_pos,n_neg,t0,t2,b0,b2,b4,density\n");
    for (c, d) in counts.iter().zip(window.dates()) {
        body.push_str(&format!(
            "{d},{},{},{},{},{},{},{},{}\n",
            c.n_pos,
            c.n_neg,
            c.t0,
            c.t2,
            c.b0,
            c.b2,
            c.b4,
            c.density()
        ));
    }
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    announce(&[path]);
    Ok(())
}

#[derive(Serialize)]
struct Opt2Report<'a> {
    mode: Mode,
    k: usize,
    year: Option<i32>,
    solution: &'a hedgegraph::combinatorial_opt::Opt2Solution,
}

fn opt2(
    cfg: &RunConfig,
    k: usize,
    mode: Mode,
    swap_budget: Option<usize>,
    budget: u128,
    year: Option<i32>,
) -> anyhow::Result<()> {
    let (panel, _) = load_returns(cfg)?;
    let window = year_window(&panel, year)?;
    let devs = DeviationMatrix::from_panel(&window);
    let h = hedge_scores(&devs)?;
    let problem = Opt2Problem::new(&devs, &h, devs.means(), window.tickers())?;
    let solution = match mode {
        Mode::Exact => problem.exact(k, budget)?,
        Mode::Greedy => problem.greedy(k, swap_budget)?,
    };
    let out = out_dir(cfg)?;
    let tag = year.map_or_else(|| "all".to_string(), |y| y.to_string());
    let path = out.join(format!(
        "opt2_{tag}_K{k}_{}.json",
        if mode == Mode::Exact {
            "exact"
        } else {
            "greedy"
        }
    ));
    write_json(
        &path,
        &Opt2Report {
            mode,
            k,
            year,
            solution: &solution,
        },
    )?;
    announce(&[path]);
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    vertices: usize,
    clique_size: usize,
    has_clique: bool,
    has_rich_subset: bool,
    agrees: bool,
}

fn verify(graph: &Path, c: usize) -> anyhow::Result<()> {
    let text =
        fs::read_to_string(graph).with_context(|| format!("reading graph {}", graph.display()))?;
    let h = UndirectedGraph::parse_edge_list(&text)?;
    let v = verify_reduction(&h, c)?;
    let report = VerifyReport {
        vertices: h.order(),
        clique_size: c,
        has_clique: v.has_clique,
        has_rich_subset: v.has_rich_subset,
        agrees: v.agrees(),
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn backtest(cfg: &RunConfig, strategies: Option<&str>) -> anyhow::Result<()> {
    let strategies = match strategies {
        None => Strategy::ALL.to_vec(),
        Some(raw) => raw
            .split(',')
            .map(Strategy::parse)
            .collect::<Result<_, _>>()?,
    };
    let (panel, _) = load_returns(cfg)?;
    let bt = BacktestConfig {
        ks: cfg.ks.clone(),
        strategies,
        from_year: cfg.from_year,
        to_year: cfg.to_year,
        seed: cfg.seed,
    };
    let records = run_backtest(&panel, &bt)?;
    let written = emit_report(&records, cfg.format, out_dir(cfg)?)?;
    announce(&written);
    Ok(())
}

fn report(cfg: &RunConfig, summary: &Path) -> anyhow::Result<()> {
    let text =
        fs::read_to_string(summary).with_context(|| format!("reading {}", summary.display()))?;
    let records: Vec<BacktestRecord> =
        serde_json::from_str(&text).map_err(|e| anyhow!("parsing {}: {e}", summary.display()))?;
    let written = emit_report(&records, cfg.format, out_dir(cfg)?)?;
    announce(&written);
    Ok(())
}
