//! Signed triangle and 4-clique counts, per day and over a window.
//!
//! On a sign-vector day with `p` positive and `q` negative vertices the counts
//! have closed forms: a 4-set is `B2` exactly when its signs split 3-1, so
//! `b2 = C(p,3) q + C(q,3) p`. The enumerating counter checks all six edges of
//! every 4-set and works on any complete signed graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signed_graph::{
    day_signs, four_clique_unchecked, DaySignVector, DeviationMatrix, FourCliqueType, Sign,
    SignedGraph,
};

/// Binomial coefficient, exact for the sizes used here.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayMotifCounts {
    pub day: usize,
    pub n_pos: u64,
    pub n_neg: u64,
    pub t0: u64,
    pub t2: u64,
    pub b0: u64,
    pub b2: u64,
    pub b4: u64,
}

impl DayMotifCounts {
    pub fn from_split(day: usize, n_pos: u64, n_neg: u64) -> Self {
        let c = binomial;
        Self {
            day,
            n_pos,
            n_neg,
            t0: c(n_pos, 3) + c(n_neg, 3),
            t2: c(n_pos, 2) * n_neg + c(n_neg, 2) * n_pos,
            b0: c(n_pos, 4) + c(n_neg, 4),
            b2: b2_closed_form(n_pos, n_neg),
            b4: c(n_pos, 2) * c(n_neg, 2),
        }
    }

    /// Share of the subset's 4-cliques that are `B2`; 0 below four vertices.
    pub fn density(&self) -> f64 {
        let all = binomial(self.n_pos + self.n_neg, 4);
        if all == 0 {
            0.0
        } else {
            self.b2 as f64 / all as f64
        }
    }
}

pub(crate) fn b2_closed_form(n_pos: u64, n_neg: u64) -> u64 {
    binomial(n_pos, 3) * n_neg + binomial(n_neg, 3) * n_pos
}

fn check_subset(n: usize, subset: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &v in subset {
        if v >= n {
            return Err(Error::Domain(format!("vertex {v} out of range (N = {n})")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::Domain(format!("vertex {v} repeated in subset")));
        }
    }
    Ok(())
}

/// `(t0, t2)` over the subset (whole graph when `None`), from the sign split.
pub fn count_triangles(sv: &DaySignVector, subset: Option<&[usize]>) -> Result<(u64, u64)> {
    let size = match subset {
        Some(s) => {
            check_subset(sv.len(), s)?;
            s.len()
        }
        None => sv.len(),
    };
    if size < 3 {
        return Err(Error::Domain(format!(
            "triangle counting needs 3 vertices, got {size}"
        )));
    }
    let n_pos = sv.count_pos(subset) as u64;
    let t0 = binomial(n_pos, 3) + binomial(size as u64 - n_pos, 3);
    Ok((t0, binomial(size as u64, 3) - t0))
}

/// Exact `B2` count by checking every 4-subset of `subset`. Zero below four vertices.
pub fn count_k4b2_enumerated<G: SignedGraph + ?Sized>(g: &G, subset: &[usize]) -> Result<u64> {
    check_subset(g.order(), subset)?;
    let k = subset.len();
    let mut count = 0;
    for a in 0..k {
        for b in a + 1..k {
            for c in b + 1..k {
                for d in c + 1..k {
                    let q = [subset[a], subset[b], subset[c], subset[d]];
                    if four_clique_unchecked(g, q) == FourCliqueType::B2 {
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(count)
}

/// Closed-form `B2` count for a sign-vector day.
pub fn count_k4b2_fast(sv: &DaySignVector, subset: &[usize]) -> Result<u64> {
    check_subset(sv.len(), subset)?;
    let n_pos = sv.count_pos(Some(subset)) as u64;
    Ok(b2_closed_form(n_pos, subset.len() as u64 - n_pos))
}

/// All counts for one day over `subset`.
pub fn day_motif_counts(sv: &DaySignVector, subset: &[usize]) -> Result<DayMotifCounts> {
    check_subset(sv.len(), subset)?;
    let n_pos = sv.count_pos(Some(subset)) as u64;
    Ok(DayMotifCounts::from_split(
        sv.day(),
        n_pos,
        subset.len() as u64 - n_pos,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifDensitySeries {
    pub densities: Vec<f64>,
    pub total: f64,
}

/// Per-day `B2` densities `b2(t) / C(K,4)` of the induced subset and their sum.
/// Subsets smaller than four give zero densities.
pub fn k4b2_density_window(devs: &DeviationMatrix, subset: &[usize]) -> Result<MotifDensitySeries> {
    check_subset(devs.n_assets(), subset)?;
    let k = subset.len() as u64;
    let all = binomial(k, 4);
    let densities: Vec<f64> = (0..devs.n_days())
        .map(|t| {
            if all == 0 {
                return 0.0;
            }
            let n_pos = subset
                .iter()
                .filter(|&&i| devs.sign(i, t) == Sign::Pos)
                .count() as u64;
            let b2 = b2_closed_form(n_pos, k - n_pos);
            #[cfg(debug_assertions)]
            if subset.len() <= 12 {
                let sv = day_signs(devs, t).expect("day in range");
                debug_assert_eq!(
                    b2,
                    count_k4b2_enumerated(&sv, subset).expect("valid subset")
                );
            }
            b2 as f64 / all as f64
        })
        .collect();
    let total = densities.iter().sum();
    Ok(MotifDensitySeries { densities, total })
}

/// Per-day counts over a window, for reporting.
pub fn window_motif_counts(
    devs: &DeviationMatrix,
    subset: &[usize],
) -> Result<Vec<DayMotifCounts>> {
    check_subset(devs.n_assets(), subset)?;
    (0..devs.n_days())
        .map(|t| day_motif_counts(&day_signs(devs, t)?, subset))
        .collect()
}
