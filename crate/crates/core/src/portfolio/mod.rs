//! Moment estimation and long-only portfolio construction.
//!
//! Every constructor returns weights on the simplex (non-negative, summing to
//! one). The quadratic programs are solved by [`qp::solve`]; the max-Sharpe
//! problem goes through the usual homogenization `min y'Σy s.t. μ'y = 1,
//! y >= 0`, `w = y / sum(y)`, which is exact whenever some mean is positive.

pub mod qp;

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ReturnPanel;

/// Smallest eigenvalue below this fraction of the trace triggers the ridge.
pub const CONDITIONING_THRESHOLD: f64 = 1e-10;
/// Ridge size as a fraction of the average variance.
pub const RIDGE_FRACTION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub tickers: Vec<String>,
    pub mean: DVector<f64>,
    /// Sample covariance plus `ridge * I`.
    pub cov: DMatrix<f64>,
    /// Correlation of the unconditioned sample covariance. Rows of
    /// zero-variance assets are zero apart from the unit diagonal.
    pub corr: DMatrix<f64>,
    /// Assets whose correlation row is undefined.
    pub zero_variance: Vec<usize>,
    pub ridge: f64,
}

impl MomentEstimates {
    /// Builds estimates from a mean vector and a raw covariance matrix,
    /// deriving the correlation and applying the conditioning ridge.
    pub fn from_parts(tickers: Vec<String>, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if tickers.len() != n || cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Domain(format!(
                "inconsistent sizes: {} tickers, {n} means, {}x{} covariance",
                tickers.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (cov[(i, j)], cov[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) && a != b {
                    return Err(Error::Domain(format!(
                        "covariance asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let zero_variance: Vec<usize> = (0..n).filter(|&i| cov[(i, i)] <= 0.0).collect();
        let corr = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else if zero_variance.contains(&i) || zero_variance.contains(&j) {
                0.0
            } else {
                (cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()).clamp(-1.0, 1.0)
            }
        });
        let mut cov = cov;
        let ridge = condition_covariance(&mut cov);
        Ok(Self {
            tickers,
            mean,
            cov,
            corr,
            zero_variance,
            ridge,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.mean.len()
    }

    /// `w'μ / sqrt(w'Σw)` in per-day units; `None` when the variance is zero.
    pub fn sharpe_of(&self, w: &[f64]) -> Option<f64> {
        let w = DVector::from_column_slice(w);
        let var = w.dot(&(&self.cov * &w));
        (var > 0.0).then(|| w.dot(&self.mean) / var.sqrt())
    }

    pub fn variance_of(&self, w: &[f64]) -> f64 {
        let w = DVector::from_column_slice(w);
        w.dot(&(&self.cov * &w))
    }
}

/// Sample mean, unbiased covariance and correlation of a return window.
pub fn estimate_moments(panel: &ReturnPanel) -> Result<MomentEstimates> {
    let t = panel.n_days();
    if t < 2 {
        return Err(Error::Domain(format!(
            "moment estimation needs T >= 2, got {t}"
        )));
    }
    let n = panel.n_assets();
    let means: Vec<f64> = panel
        .rows()
        .iter()
        .map(|r| r.iter().sum::<f64>() / t as f64)
        .collect();
    let centred: Vec<Vec<f64>> = panel
        .rows()
        .iter()
        .zip(&means)
        .map(|(r, m)| r.iter().map(|x| x - m).collect())
        .collect();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
            let v = s / (t - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    MomentEstimates::from_parts(panel.tickers().to_vec(), DVector::from_vec(means), cov)
}

/// Adds `RIDGE_FRACTION * trace / N` to the diagonal when the smallest
/// eigenvalue is below `CONDITIONING_THRESHOLD * trace`. Returns the ridge.
pub fn condition_covariance(cov: &mut DMatrix<f64>) -> f64 {
    let n = cov.nrows();
    let trace = cov.trace();
    if n == 0 || trace <= 0.0 {
        return 0.0;
    }
    let min_eig = cov.clone().symmetric_eigenvalues().min();
    if min_eig >= CONDITIONING_THRESHOLD * trace {
        return 0.0;
    }
    let ridge = RIDGE_FRACTION * trace / n as f64;
    for i in 0..n {
        cov[(i, i)] += ridge;
    }
    ridge
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightStrategy {
    MaxSharpe,
    Equal,
    MinVariance,
    MinVarTarget,
    Omv2,
}

impl fmt::Display for WeightStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WeightStrategy::MaxSharpe => "max_sharpe",
            WeightStrategy::Equal => "equal",
            WeightStrategy::MinVariance => "min_variance",
            WeightStrategy::MinVarTarget => "min_var_target",
            WeightStrategy::Omv2 => "omv2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Set when max-Sharpe fell back to minimum variance because no mean was positive.
    pub degenerate_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
    pub strategy: WeightStrategy,
    pub diagnostics: Option<SolverDiagnostics>,
}

impl PortfolioWeights {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("ticker,weight\n");
        for (t, w) in self.tickers.iter().zip(&self.weights) {
            out.push_str(&format!("{t},{w}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

fn finish(
    m: &MomentEstimates,
    x: &DVector<f64>,
    strategy: WeightStrategy,
    diagnostics: SolverDiagnostics,
) -> PortfolioWeights {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    PortfolioWeights {
        tickers: m.tickers.clone(),
        weights: clipped.iter().map(|v| v / total).collect(),
        strategy,
        diagnostics: Some(diagnostics),
    }
}

fn vertex(n: usize, i: usize, value: f64) -> DVector<f64> {
    let mut x = DVector::zeros(n);
    x[i] = value;
    x
}

fn simplex_constraint(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    (
        DMatrix::from_element(1, n, 1.0),
        DVector::from_element(1, 1.0),
    )
}

fn argmin_by(n: usize, key: impl Fn(usize) -> f64) -> usize {
    (0..n)
        .min_by(|&a, &b| {
            key(a)
                .partial_cmp(&key(b))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("non-empty")
}

fn require_assets(m: &MomentEstimates) -> Result<usize> {
    match m.n_assets() {
        0 => Err(Error::Domain("no assets".into())),
        n => Ok(n),
    }
}

/// Long-only minimum-variance weights.
pub fn min_variance_weights(m: &MomentEstimates) -> Result<PortfolioWeights> {
    let n = require_assets(m)?;
    let (a, b) = simplex_constraint(n);
    let start = argmin_by(n, |i| m.cov[(i, i)]);
    let sol = qp::solve(&m.cov, &DVector::zeros(n), &a, &b, vertex(n, start, 1.0))?;
    Ok(finish(
        m,
        &sol.x,
        WeightStrategy::MinVariance,
        SolverDiagnostics {
            iterations: sol.iterations,
            final_gradient_norm: sol.kkt_residual,
            degenerate_fallback: false,
        },
    ))
}

/// Long-only maximum-Sharpe (tangency) weights at zero risk-free rate.
///
/// With no positive mean the ratio has no meaningful maximizer on the
/// simplex; the minimum-variance portfolio is returned instead, flagged in
/// the diagnostics.
pub fn max_sharpe_weights(m: &MomentEstimates) -> Result<PortfolioWeights> {
    let n = require_assets(m)?;
    if m.mean.iter().all(|&mu| mu <= 0.0) {
        let mut w = min_variance_weights(m)?;
        w.strategy = WeightStrategy::MaxSharpe;
        if let Some(d) = w.diagnostics.as_mut() {
            d.degenerate_fallback = true;
        }
        return Ok(w);
    }
    // start from the best single-asset portfolio
    let start = (0..n)
        .filter(|&i| m.mean[i] > 0.0)
        .max_by(|&a, &b| {
            let sa = m.mean[a] / m.cov[(a, a)].sqrt();
            let sb = m.mean[b] / m.cov[(b, b)].sqrt();
            sa.partial_cmp(&sb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.cmp(&a))
        })
        .expect("some positive mean");
    let a = DMatrix::from_row_slice(1, n, m.mean.as_slice());
    let b = DVector::from_element(1, 1.0);
    let sol = qp::solve(
        &m.cov,
        &DVector::zeros(n),
        &a,
        &b,
        vertex(n, start, 1.0 / m.mean[start]),
    )?;
    Ok(finish(
        m,
        &sol.x,
        WeightStrategy::MaxSharpe,
        SolverDiagnostics {
            iterations: sol.iterations,
            final_gradient_norm: sol.kkt_residual,
            degenerate_fallback: false,
        },
    ))
}

/// Minimum variance subject to a target mean return `epsilon`.
pub fn min_variance_target(m: &MomentEstimates, epsilon: f64) -> Result<PortfolioWeights> {
    let n = require_assets(m)?;
    let lo = argmin_by(n, |i| m.mean[i]);
    let hi = argmin_by(n, |i| -m.mean[i]);
    let (mu_lo, mu_hi) = (m.mean[lo], m.mean[hi]);
    if !(mu_lo..=mu_hi).contains(&epsilon) {
        return Err(Error::Infeasible(format!(
            "target return {epsilon} outside feasible interval [{mu_lo}, {mu_hi}]"
        )));
    }
    let diagnostics = |sol: &qp::QpSolution| SolverDiagnostics {
        iterations: sol.iterations,
        final_gradient_norm: sol.kkt_residual,
        degenerate_fallback: false,
    };
    if epsilon == mu_lo || epsilon == mu_hi {
        // only portfolios over the extreme-mean assets reach the target
        let keep: Vec<usize> = (0..n).filter(|&i| m.mean[i] == epsilon).collect();
        let sub = DMatrix::from_fn(keep.len(), keep.len(), |r, s| m.cov[(keep[r], keep[s])]);
        let (a, b) = simplex_constraint(keep.len());
        let sol = qp::solve(
            &sub,
            &DVector::zeros(keep.len()),
            &a,
            &b,
            vertex(keep.len(), 0, 1.0),
        )?;
        let mut x = DVector::zeros(n);
        for (r, &i) in keep.iter().enumerate() {
            x[i] = sol.x[r];
        }
        return Ok(finish(
            m,
            &x,
            WeightStrategy::MinVarTarget,
            diagnostics(&sol),
        ));
    }
    let a = DMatrix::from_fn(2, n, |r, j| if r == 0 { 1.0 } else { m.mean[j] });
    let b = DVector::from_vec(vec![1.0, epsilon]);
    let theta = (epsilon - mu_lo) / (mu_hi - mu_lo);
    let mut x0 = DVector::zeros(n);
    x0[lo] = 1.0 - theta;
    x0[hi] = theta;
    let sol = qp::solve(&m.cov, &DVector::zeros(n), &a, &b, x0)?;
    Ok(finish(
        m,
        &sol.x,
        WeightStrategy::MinVarTarget,
        diagnostics(&sol),
    ))
}

/// Minimizes `-μ'w + γ w'Σw` over the simplex.
pub fn omv2_weights(m: &MomentEstimates, gamma: f64) -> Result<PortfolioWeights> {
    let n = require_assets(m)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!(
            "risk aversion must be positive, got {gamma}"
        )));
    }
    let q = &m.cov * (2.0 * gamma);
    let c = -&m.mean;
    let (a, b) = simplex_constraint(n);
    let start = argmin_by(n, |i| -m.mean[i] + gamma * m.cov[(i, i)]);
    let sol = qp::solve(&q, &c, &a, &b, vertex(n, start, 1.0))?;
    Ok(finish(
        m,
        &sol.x,
        WeightStrategy::Omv2,
        SolverDiagnostics {
            iterations: sol.iterations,
            final_gradient_norm: sol.kkt_residual,
            degenerate_fallback: false,
        },
    ))
}

pub fn equal_weights(tickers: &[String]) -> Result<PortfolioWeights> {
    if tickers.is_empty() {
        return Err(Error::Domain(
            "equal weights need at least one ticker".into(),
        ));
    }
    let w = 1.0 / tickers.len() as f64;
    Ok(PortfolioWeights {
        tickers: tickers.to_vec(),
        weights: vec![w; tickers.len()],
        strategy: WeightStrategy::Equal,
        diagnostics: None,
    })
}

/// `(w'Σw, w'|Σ|w)` with `|Σ|` the entrywise absolute value. The first never
/// exceeds the second for non-negative `w`.
pub fn hedge_variance_gap(cov: &DMatrix<f64>, w: &[f64]) -> (f64, f64) {
    let n = w.len();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let term = w[i] * w[j];
            lhs += term * cov[(i, j)];
            rhs += term * cov[(i, j)].abs();
        }
    }
    (lhs, rhs)
}
