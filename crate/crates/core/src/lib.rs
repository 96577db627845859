//! Hedge-aware universe reduction for long-only portfolios.
//!
//! Daily return deviations define a complete signed graph per day; assets
//! that frequently move against the others score highly as hedges. Those
//! scores pick a reduced universe, which the backtest compares against the
//! full one year by year.

pub mod backtest;
pub mod combinatorial_opt;
pub mod error;
pub mod hedge_score;
pub mod market_data;
pub mod motif_count;
pub mod portfolio;
pub mod signed_graph;

pub use error::{Error, Result};
