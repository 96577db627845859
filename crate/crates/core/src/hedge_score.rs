//! Hedge scores and the top-K hedge-scaled return universe.
//!
//! The hedge score of an asset is the fraction of (day, partner) pairs in the
//! window on which the asset deviates from its mean in the opposite direction
//! to its partner, i.e. its average negative degree in the daily signed
//! graphs. Multiplying by the mean return gives the score used to pick the
//! reduced universe.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signed_graph::{DeviationMatrix, Sign};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeScores {
    pub h: Vec<f64>,
    /// Negative degree summed over the window.
    pub neg_degree_total: Vec<u64>,
    pub window_len: usize,
    pub n_assets: usize,
}

/// Negative degree of `asset` in the signed graph of day `t`.
pub fn negative_degree_day(devs: &DeviationMatrix, t: usize, asset: usize) -> Result<usize> {
    if t >= devs.n_days() || asset >= devs.n_assets() {
        return Err(Error::Domain(format!(
            "(day {t}, asset {asset}) out of range ({} days, {} assets)",
            devs.n_days(),
            devs.n_assets()
        )));
    }
    let own = devs.sign(asset, t);
    Ok((0..devs.n_assets())
        .filter(|&j| j != asset && devs.sign(j, t) != own)
        .count())
}

/// Hedge scores in O(N T): on a day with `n_pos` positive vertices a positive
/// vertex has negative degree `N - n_pos` and a negative one `n_pos`.
pub fn hedge_scores(devs: &DeviationMatrix) -> Result<HedgeScores> {
    let n = devs.n_assets();
    let t_len = devs.n_days();
    if n < 2 {
        return Err(Error::Domain(format!("hedge scores need N >= 2, got {n}")));
    }
    let mut totals = vec![0u64; n];
    let mut pos_day = vec![false; n];
    for t in 0..t_len {
        let mut n_pos = 0u64;
        for (i, p) in pos_day.iter_mut().enumerate() {
            *p = devs.sign(i, t) == Sign::Pos;
            n_pos += u64::from(*p);
        }
        let n_neg = n as u64 - n_pos;
        for (total, &p) in totals.iter_mut().zip(&pos_day) {
            *total += if p { n_neg } else { n_pos };
        }
    }
    let denom = (t_len * (n - 1)) as f64;
    Ok(HedgeScores {
        h: totals.iter().map(|&c| c as f64 / denom).collect(),
        neg_degree_total: totals,
        window_len: t_len,
        n_assets: n,
    })
}

/// `s_i = h_i * mu_i`, sign preserved.
pub fn omv_scores(h: &HedgeScores, means: &[f64]) -> Result<Vec<f64>> {
    if h.h.len() != means.len() {
        return Err(Error::Domain(format!(
            "{} hedge scores but {} means",
            h.h.len(),
            means.len()
        )));
    }
    Ok(h.h.iter().zip(means).map(|(a, b)| a * b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseSelection {
    pub tickers: Vec<String>,
    /// Positions of the chosen assets in the source panel.
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub k: usize,
    pub window: String,
}

/// Descending score, ties broken by ascending ticker.
pub fn select_top_k(scores: &[f64], tickers: &[String], k: usize) -> Result<UniverseSelection> {
    let n = scores.len();
    if tickers.len() != n {
        return Err(Error::Domain(format!(
            "{n} scores but {} tickers",
            tickers.len()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::Domain(format!("K = {k} outside 1..={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| tickers[a].cmp(&tickers[b]))
    });
    order.truncate(k);
    Ok(UniverseSelection {
        tickers: order.iter().map(|&i| tickers[i].clone()).collect(),
        scores: order.iter().map(|&i| scores[i]).collect(),
        indices: order,
        k,
        window: String::new(),
    })
}

/// A reduced universe together with the per-asset quantities behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub selection: UniverseSelection,
    pub hedge: Vec<f64>,
    pub means: Vec<f64>,
}

/// Full top-K reduction of a return window: deviations, hedge scores, scores, top K.
pub fn reduce_universe(
    panel: &crate::market_data::ReturnPanel,
    k: usize,
    window: impl Into<String>,
) -> Result<Reduction> {
    let devs = DeviationMatrix::from_panel(panel);
    let h = hedge_scores(&devs)?;
    let scores = omv_scores(&h, devs.means())?;
    let mut selection = select_top_k(&scores, panel.tickers(), k)?;
    selection.window = window.into();
    Ok(Reduction {
        hedge: selection.indices.iter().map(|&i| h.h[i]).collect(),
        means: selection.indices.iter().map(|&i| devs.means()[i]).collect(),
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn devs(cols: &[&[f64]]) -> DeviationMatrix {
        // one column per day
        let n = cols[0].len();
        let mut rows = vec![Vec::new(); n];
        for col in cols {
            for (i, v) in col.iter().enumerate() {
                rows[i].push(*v);
            }
        }
        DeviationMatrix::from_returns(&rows).unwrap()
    }

    #[test]
    fn negative_degree_examples() {
        let d = devs(&[&[1.0, -1.0, -1.0], &[-1.0, 1.0, 1.0]]);
        assert_eq!(negative_degree_day(&d, 0, 0).unwrap(), 2);
        let d = devs(&[&[1.0, 1.0, 1.0], &[-1.0, -1.0, -1.0]]);
        for n in 0..3 {
            assert_eq!(negative_degree_day(&d, 0, n).unwrap(), 0);
        }
        assert!(negative_degree_day(&d, 5, 0).is_err());
    }

    #[test]
    fn hedge_score_examples() {
        let d = DeviationMatrix::from_parts(&[vec![-1.0], vec![1.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(hedge_scores(&d).unwrap().h, vec![1.0, 1.0]);

        let d = devs(&[&[-1.0, 1.0], &[1.0, -1.0]]);
        let h = hedge_scores(&d).unwrap();
        assert_eq!(h.h, vec![1.0, 1.0]);
        assert_eq!(h.neg_degree_total, vec![2, 2]);

        let d = devs(&[&[1.0, 1.0, 1.0], &[-1.0, -1.0, -1.0]]);
        assert_eq!(hedge_scores(&d).unwrap().h, vec![0.0; 3]);

        let d = DeviationMatrix::from_returns(&[vec![1.0, 2.0]]).unwrap();
        assert!(hedge_scores(&d).is_err());
    }

    #[test]
    fn omv_score_examples() {
        let h = HedgeScores {
            h: vec![0.5, 1.0],
            neg_degree_total: vec![1, 2],
            window_len: 2,
            n_assets: 2,
        };
        let s = omv_scores(&h, &[0.02, -0.01]).unwrap();
        assert!((s[0] - 0.01).abs() < 1e-18 && (s[1] + 0.01).abs() < 1e-18);
        assert!(omv_scores(&h, &[0.1]).is_err());
    }

    #[test]
    fn top_k_examples() {
        let t: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            select_top_k(&[3.0, 1.0, 2.0], &t, 2).unwrap().indices,
            vec![0, 2]
        );
        let tie = select_top_k(&[1.0, 1.0, 1.0], &t, 2).unwrap();
        assert_eq!(tie.tickers, vec!["a", "b"]);
        let all = select_top_k(&[3.0, 1.0, 2.0], &t, 3).unwrap();
        assert_eq!(all.scores, vec![3.0, 2.0, 1.0]);
        assert!(select_top_k(&[3.0, 1.0, 2.0], &t, 0).is_err());
        assert!(select_top_k(&[3.0, 1.0, 2.0], &t, 4).is_err());
    }
}
