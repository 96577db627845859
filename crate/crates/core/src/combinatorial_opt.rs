//! The motif-augmented subset objective and the CLIQUE reduction.
//!
//! The objective of a size-K subset `S` is the hedge term `sum_{n in S} h_n mu_n`
//! plus, for every day of the window, the fraction of the subset's 4-cliques
//! that are `B2`. Maximizing it is NP-hard; [`Opt2Problem::exact`] enumerates
//! small instances and [`Opt2Problem::greedy`] is a forward-selection plus
//! 1-swap heuristic for everything else.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hedge_score::HedgeScores;
use crate::motif_count::{b2_closed_form, binomial, count_k4b2_enumerated};
use crate::signed_graph::{DeviationMatrix, EdgeSignMap, Sign, SignedGraph};

pub const DEFAULT_ENUMERATION_BUDGET: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Opt2Objective {
    pub hedge_term: f64,
    pub motif_term: f64,
    pub total: f64,
}

/// Inputs of the subset problem over one window.
#[derive(Debug, Clone)]
pub struct Opt2Problem {
    tickers: Vec<String>,
    /// `h_n * mu_n`
    hedge_values: Vec<f64>,
    /// `pos[n][t]`: asset `n` is on the `+` side on day `t`.
    pos: Vec<Vec<bool>>,
    n_days: usize,
    /// Asset indices sorted by ticker.
    by_ticker: Vec<usize>,
    rank: Vec<usize>,
}

impl Opt2Problem {
    pub fn new(
        devs: &DeviationMatrix,
        hedge: &HedgeScores,
        means: &[f64],
        tickers: &[String],
    ) -> Result<Self> {
        let n = devs.n_assets();
        if hedge.h.len() != n || means.len() != n || tickers.len() != n {
            return Err(Error::Domain(format!(
                "size mismatch: {n} assets, {} hedge scores, {} means, {} tickers",
                hedge.h.len(),
                means.len(),
                tickers.len()
            )));
        }
        let mut by_ticker: Vec<usize> = (0..n).collect();
        by_ticker.sort_by(|&a, &b| tickers[a].cmp(&tickers[b]).then(a.cmp(&b)));
        let mut rank = vec![0; n];
        for (r, &i) in by_ticker.iter().enumerate() {
            rank[i] = r;
        }
        Ok(Self {
            tickers: tickers.to_vec(),
            hedge_values: hedge.h.iter().zip(means).map(|(h, m)| h * m).collect(),
            pos: (0..n)
                .map(|i| {
                    (0..devs.n_days())
                        .map(|t| devs.sign(i, t) == Sign::Pos)
                        .collect()
                })
                .collect(),
            n_days: devs.n_days(),
            by_ticker,
            rank,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.n_assets()];
        if subset.is_empty() {
            return Err(Error::Domain("empty subset".into()));
        }
        for &i in subset {
            if i >= self.n_assets() {
                return Err(Error::Domain(format!("asset {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Domain(format!("asset {i} repeated in subset")));
            }
        }
        Ok(())
    }

    /// Per-`n_pos` density table for subsets of size `k`.
    fn density_table(k: usize) -> Vec<f64> {
        let all = binomial(k as u64, 4);
        (0..=k as u64)
            .map(|p| {
                if all == 0 {
                    0.0
                } else {
                    b2_closed_form(p, k as u64 - p) as f64 / all as f64
                }
            })
            .collect()
    }

    fn motif_from_counts(table: &[f64], counts: &[u32]) -> f64 {
        counts.iter().map(|&c| table[c as usize]).sum()
    }

    /// Objective of `subset`. The hedge term is summed in ascending asset
    /// index order so equal subsets always give bit-identical values.
    pub fn objective(&self, subset: &[usize]) -> Result<Opt2Objective> {
        self.check_subset(subset)?;
        Ok(self.objective_unchecked(subset))
    }

    fn objective_unchecked(&self, subset: &[usize]) -> Opt2Objective {
        let mut sorted = subset.to_vec();
        sorted.sort_unstable();
        let hedge_term: f64 = sorted.iter().map(|&i| self.hedge_values[i]).sum();
        let table = Self::density_table(sorted.len());
        let counts: Vec<u32> = (0..self.n_days)
            .map(|t| sorted.iter().filter(|&&i| self.pos[i][t]).count() as u32)
            .collect();
        let motif_term = Self::motif_from_counts(&table, &counts);
        Opt2Objective {
            hedge_term,
            motif_term,
            total: hedge_term + motif_term,
        }
    }

    /// Global optimum by enumerating all `C(N,K)` subsets. Ties go to the
    /// lexicographically smallest ticker tuple.
    pub fn exact(&self, k: usize, budget: u128) -> Result<Opt2Solution> {
        let n = self.n_assets();
        if k == 0 || k > n {
            return Err(Error::Domain(format!("K = {k} outside 1..={n}")));
        }
        let combos = binomial_u128(n as u128, k as u128);
        if combos > budget {
            return Err(Error::BudgetExceeded {
                combinations: combos,
                budget,
            });
        }
        let table = Self::density_table(k);
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut counts = vec![0u32; self.n_days];
        let mut chosen = Vec::with_capacity(k);
        self.enumerate(0, k, &table, &mut counts, &mut chosen, &mut best);
        let (_, positions) = best.expect("at least one subset");
        let subset: Vec<usize> = positions.iter().map(|&r| self.by_ticker[r]).collect();
        Ok(Opt2Solution {
            objective: self.objective_unchecked(&subset),
            tickers: subset.iter().map(|&i| self.tickers[i].clone()).collect(),
            subset,
            trace: Vec::new(),
            evaluations: combos as usize,
            budget_exhausted: false,
        })
    }

    // depth-first over ticker-ranked positions, so the first maximum found is
    // the lexicographically smallest
    fn enumerate(
        &self,
        start: usize,
        k: usize,
        table: &[f64],
        counts: &mut [u32],
        chosen: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if chosen.len() == k {
            let mut idx: Vec<usize> = chosen.iter().map(|&r| self.by_ticker[r]).collect();
            idx.sort_unstable();
            let hedge: f64 = idx.iter().map(|&i| self.hedge_values[i]).sum();
            let total = hedge + Self::motif_from_counts(table, counts);
            if best.as_ref().is_none_or(|(v, _)| total > *v) {
                *best = Some((total, chosen.clone()));
            }
            return;
        }
        let n = self.n_assets();
        for r in start..=n - (k - chosen.len()) {
            let asset = self.by_ticker[r];
            for (c, &p) in counts.iter_mut().zip(&self.pos[asset]) {
                *c += u32::from(p);
            }
            chosen.push(r);
            self.enumerate(r + 1, k, table, counts, chosen, best);
            chosen.pop();
            for (c, &p) in counts.iter_mut().zip(&self.pos[asset]) {
                *c -= u32::from(p);
            }
        }
    }

    /// Forward greedy from the best singleton, then best-improvement 1-swap
    /// local search until no swap improves or `swap_budget` candidate
    /// evaluations are spent (default `10 N K`).
    pub fn greedy(&self, k: usize, swap_budget: Option<usize>) -> Result<Opt2Solution> {
        let n = self.n_assets();
        if k == 0 || k > n {
            return Err(Error::Domain(format!("K = {k} outside 1..={n}")));
        }
        let budget = swap_budget.unwrap_or(10 * n * k);

        let mut in_set = vec![false; n];
        let mut members: Vec<usize> = Vec::with_capacity(k);
        let mut counts = vec![0u32; self.n_days];
        let mut evaluations = 0usize;

        // forward phase
        while members.len() < k {
            let size = members.len() + 1;
            let table = Self::density_table(size);
            let hedge_now: f64 = members.iter().map(|&i| self.hedge_values[i]).sum();
            let candidates: Vec<usize> = self
                .by_ticker
                .iter()
                .copied()
                .filter(|&i| !in_set[i])
                .collect();
            evaluations += candidates.len();
            let best = candidates
                .par_iter()
                .map(|&c| {
                    let motif: f64 = counts
                        .iter()
                        .zip(&self.pos[c])
                        .map(|(&cnt, &p)| table[(cnt + u32::from(p)) as usize])
                        .sum();
                    (hedge_now + self.hedge_values[c] + motif, c)
                })
                .reduce_with(|a, b| self.better(a, b))
                .expect("a candidate remains while |S| < K <= N");
            let c = best.1;
            in_set[c] = true;
            members.push(c);
            for (cnt, &p) in counts.iter_mut().zip(&self.pos[c]) {
                *cnt += u32::from(p);
            }
        }

        // swap phase
        let table = Self::density_table(k);
        let mut current = self.objective_unchecked(&members);
        let mut trace = vec![current.total];
        let mut exhausted = false;
        loop {
            let remaining = budget.saturating_sub(evaluations);
            if remaining == 0 {
                exhausted = true;
                break;
            }
            let mut outs = members.clone();
            outs.sort_by_key(|&i| self.rank[i]);
            let ins: Vec<usize> = self
                .by_ticker
                .iter()
                .copied()
                .filter(|&i| !in_set[i])
                .collect();
            let mut moves: Vec<(usize, usize)> = outs
                .iter()
                .flat_map(|&o| ins.iter().map(move |&i| (o, i)))
                .collect();
            if moves.is_empty() {
                break;
            }
            if moves.len() > remaining {
                moves.truncate(remaining);
                exhausted = true;
            }
            evaluations += moves.len();
            let hedge_now: f64 = members.iter().map(|&i| self.hedge_values[i]).sum();
            let best = moves
                .par_iter()
                .map(|&(o, i)| {
                    let motif: f64 = counts
                        .iter()
                        .enumerate()
                        .map(|(t, &cnt)| {
                            let c = cnt - u32::from(self.pos[o][t]) + u32::from(self.pos[i][t]);
                            table[c as usize]
                        })
                        .sum();
                    (
                        hedge_now - self.hedge_values[o] + self.hedge_values[i] + motif,
                        (o, i),
                    )
                })
                .reduce_with(|a, b| self.better_swap(a, b))
                .expect("non-empty move list");
            let tol = 1e-12 * current.total.abs().max(1.0);
            if best.0 <= current.total + tol {
                break;
            }
            let (o, i) = best.1;
            let mut next_members = members.clone();
            let slot = members.iter().position(|&m| m == o).expect("member");
            next_members[slot] = i;
            let next = self.objective_unchecked(&next_members);
            if next.total <= current.total {
                // the incremental estimate and the canonical sum disagree
                break;
            }
            members = next_members;
            in_set[o] = false;
            in_set[i] = true;
            for (t, cnt) in counts.iter_mut().enumerate() {
                *cnt = *cnt - u32::from(self.pos[o][t]) + u32::from(self.pos[i][t]);
            }
            current = next;
            trace.push(current.total);
            if exhausted {
                break;
            }
        }

        members.sort_by_key(|&i| self.rank[i]);
        Ok(Opt2Solution {
            objective: current,
            tickers: members.iter().map(|&i| self.tickers[i].clone()).collect(),
            subset: members,
            trace,
            evaluations,
            budget_exhausted: exhausted,
        })
    }

    fn better(&self, a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
        match a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal) {
            Ordering::Greater => a,
            Ordering::Less => b,
            Ordering::Equal => {
                if self.rank[a.1] <= self.rank[b.1] {
                    a
                } else {
                    b
                }
            }
        }
    }

    fn better_swap(
        &self,
        a: (f64, (usize, usize)),
        b: (f64, (usize, usize)),
    ) -> (f64, (usize, usize)) {
        match a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal) {
            Ordering::Greater => a,
            Ordering::Less => b,
            Ordering::Equal => {
                let ka = (self.rank[a.1 .0], self.rank[a.1 .1]);
                let kb = (self.rank[b.1 .0], self.rank[b.1 .1]);
                if ka <= kb {
                    a
                } else {
                    b
                }
            }
        }
    }
}

fn binomial_u128(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opt2Solution {
    /// Asset indices, ordered by ticker.
    pub subset: Vec<usize>,
    pub tickers: Vec<String>,
    pub objective: Opt2Objective,
    /// Objective of the size-K set after the forward phase and after every
    /// accepted swap. Empty for the exact solver.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub budget_exhausted: bool,
}

/// Objective of `subset` given raw inputs. See [`Opt2Problem::objective`].
pub fn opt2_objective(
    devs: &DeviationMatrix,
    hedge: &HedgeScores,
    means: &[f64],
    subset: &[usize],
) -> Result<Opt2Objective> {
    let tickers: Vec<String> = (0..devs.n_assets()).map(|i| i.to_string()).collect();
    Opt2Problem::new(devs, hedge, means, &tickers)?.objective(subset)
}

/// Simple undirected graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    n: usize,
    adj: Vec<bool>,
}

impl UndirectedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            adj: vec![false; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::new(n);
        for u in 0..n {
            for v in u + 1..n {
                g.add_edge(u, v).expect("valid edge");
            }
        }
        g
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Self::new(n);
        for u in 0..n {
            g.add_edge(u, (u + 1) % n).expect("valid edge");
        }
        g
    }

    pub fn path(n: usize) -> Self {
        let mut g = Self::new(n);
        for u in 1..n {
            g.add_edge(u - 1, u).expect("valid edge");
        }
        g
    }

    /// Parses an edge list: one `u v` pair per line, `#` comments, and an
    /// optional `n <count>` line declaring the vertex count (otherwise the
    /// largest index plus one).
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Data(format!("edge list line {}: '{raw}'", lineno + 1));
            match fields.as_slice() {
                ["n", count] => declared = Some(count.parse::<usize>().map_err(|_| bad())?),
                [u, v] => edges.push((
                    u.parse::<usize>().map_err(|_| bad())?,
                    v.parse::<usize>().map_err(|_| bad())?,
                )),
                _ => return Err(bad()),
            }
        }
        let inferred = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        let n = match declared {
            Some(n) if n < inferred => {
                return Err(Error::Data(format!(
                    "edge list declares {n} vertices but uses index {}",
                    inferred - 1
                )))
            }
            Some(n) => n,
            None => inferred,
        };
        Self::from_edges(n, &edges)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u == v || u >= self.n || v >= self.n {
            return Err(Error::Domain(format!(
                "invalid edge ({u}, {v}) for {} vertices",
                self.n
            )));
        }
        self.adj[u * self.n + v] = true;
        self.adj[v * self.n + u] = true;
        Ok(())
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.adj[u * self.n + v]
    }

    /// Exhaustive search for a clique on `c` vertices.
    pub fn has_clique(&self, c: usize) -> bool {
        fn extend(g: &UndirectedGraph, start: usize, need: usize, chosen: &mut Vec<usize>) -> bool {
            if need == 0 {
                return true;
            }
            for v in start..g.n {
                if chosen.iter().all(|&u| g.has_edge(u, v)) {
                    chosen.push(v);
                    if extend(g, v + 1, need - 1, chosen) {
                        return true;
                    }
                    chosen.pop();
                }
            }
            false
        }
        c <= self.n && extend(self, 0, c, &mut Vec::new())
    }
}

/// Complete signed graph on `V_H + {apex}`: `+` exactly on the edges of `H`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionInstance {
    pub source: UndirectedGraph,
    pub signed: EdgeSignMap,
    pub apex: usize,
    pub c: usize,
    pub k: usize,
    pub threshold: u64,
}

pub fn build_clique_reduction(h: &UndirectedGraph, c: usize) -> Result<ReductionInstance> {
    let n = h.order();
    if c == 0 || c > n {
        return Err(Error::Domain(format!("clique size {c} outside 1..={n}")));
    }
    let apex = n;
    let signed = EdgeSignMap::from_fn(n + 1, |u, v| {
        if u < n && v < n && h.has_edge(u, v) {
            Sign::Pos
        } else {
            Sign::Neg
        }
    });
    Ok(ReductionInstance {
        source: h.clone(),
        signed,
        apex,
        c,
        k: c + 1,
        threshold: binomial(c as u64, 3),
    })
}

pub const MAX_VERIFY_VERTICES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionVerdict {
    pub has_clique: bool,
    /// Some `(c+1)`-subset of the reduction holds at least `C(c,3)` `B2`s.
    pub has_rich_subset: bool,
}

impl ReductionVerdict {
    pub fn agrees(&self) -> bool {
        self.has_clique == self.has_rich_subset
    }
}

/// Decides both sides of the reduction by brute force.
pub fn verify_reduction(h: &UndirectedGraph, c: usize) -> Result<ReductionVerdict> {
    if h.order() > MAX_VERIFY_VERTICES {
        return Err(Error::Domain(format!(
            "brute-force verification limited to {MAX_VERIFY_VERTICES} vertices, got {}",
            h.order()
        )));
    }
    let inst = build_clique_reduction(h, c)?;
    let total = inst.signed.order();
    let mut rich = false;
    for_each_subset(total, inst.k, &mut |s| {
        let count = count_k4b2_enumerated(&inst.signed, s).expect("subset of valid vertices");
        rich = count >= inst.threshold;
        rich
    });
    Ok(ReductionVerdict {
        has_clique: h.has_clique(c),
        has_rich_subset: rich,
    })
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order until it returns true.
fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    fn rec(
        n: usize,
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for v in start..=n - (k - cur.len()) {
            cur.push(v);
            if rec(n, k, v + 1, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    if k <= n {
        rec(n, k, 0, &mut Vec::with_capacity(k), f);
    }
}
