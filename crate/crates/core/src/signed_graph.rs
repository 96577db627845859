//! Per-day complete signed graphs induced by return deviations.
//!
//! On day `t` every asset gets a sign, `+` when its return is at or above its
//! window mean and `-` otherwise; the edge between two assets is the product
//! of their signs. A day's graph is therefore stored as its sign vector and
//! edges are computed on demand. Such graphs are always structurally balanced.
//! [`EdgeSignMap`] is the general representation, used for unbalanced
//! fixtures and for the CLIQUE reduction.

use std::fmt;
use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ReturnPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Neg,
    Pos,
}

impl Sign {
    /// Zero maps to `Pos`.
    pub fn of(x: f64) -> Sign {
        if x >= 0.0 {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Sign::Pos => 1,
            Sign::Neg => -1,
        }
    }

    pub fn is_neg(self) -> bool {
        self == Sign::Neg
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// A complete signed graph on `order()` vertices.
pub trait SignedGraph {
    fn order(&self) -> usize;

    /// Sign of edge `(i, j)`. Callers guarantee `i != j` and both in range.
    fn sign_unchecked(&self, i: usize, j: usize) -> Sign;
}

/// Return deviations `R_i^t - mu_i` over a window, row-major by asset.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationMatrix {
    n_assets: usize,
    n_days: usize,
    devs: Vec<f64>,
    means: Vec<f64>,
}

impl DeviationMatrix {
    pub fn from_panel(panel: &ReturnPanel) -> Self {
        Self::from_returns(panel.rows()).expect("a valid panel has equal-length rows")
    }

    /// Rows are per-asset return series of equal, non-zero length.
    pub fn from_returns(rows: &[Vec<f64>]) -> Result<Self> {
        let n_days = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || n_days == 0 {
            return Err(Error::Domain(
                "deviation matrix needs N >= 1 and T >= 1".into(),
            ));
        }
        if rows.iter().any(|r| r.len() != n_days) {
            return Err(Error::Domain("ragged return rows".into()));
        }
        let mut devs = Vec::with_capacity(rows.len() * n_days);
        let mut means = Vec::with_capacity(rows.len());
        for row in rows {
            let mean = row.iter().sum::<f64>() / n_days as f64;
            means.push(mean);
            devs.extend(row.iter().map(|x| x - mean));
        }
        Ok(Self {
            n_assets: rows.len(),
            n_days,
            devs,
            means,
        })
    }

    /// Deviations given directly, e.g. for hand-built fixtures. Unlike
    /// [`Self::from_returns`] the rows need not be centred.
    pub fn from_parts(rows: &[Vec<f64>], means: Vec<f64>) -> Result<Self> {
        let n_days = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || n_days == 0 || rows.iter().any(|r| r.len() != n_days) {
            return Err(Error::Domain(
                "deviation rows must be non-empty and rectangular".into(),
            ));
        }
        if means.len() != rows.len() {
            return Err(Error::Domain(format!(
                "{} means for {} rows",
                means.len(),
                rows.len()
            )));
        }
        Ok(Self {
            n_assets: rows.len(),
            n_days,
            devs: rows.concat(),
            means,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn row(&self, asset: usize) -> &[f64] {
        &self.devs[asset * self.n_days..(asset + 1) * self.n_days]
    }

    pub fn get(&self, asset: usize, day: usize) -> f64 {
        self.devs[asset * self.n_days + day]
    }

    pub fn sign(&self, asset: usize, day: usize) -> Sign {
        Sign::of(self.get(asset, day))
    }
}

pub fn deviations(panel: &ReturnPanel) -> DeviationMatrix {
    DeviationMatrix::from_panel(panel)
}

/// The complete signed graph of one day, stored as its vertex signs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaySignVector {
    day: usize,
    signs: Vec<Sign>,
}

impl DaySignVector {
    pub fn new(day: usize, signs: Vec<Sign>) -> Self {
        Self { day, signs }
    }

    /// Convenience for fixtures: `+1`/`-1` (anything >= 0 is `+`).
    pub fn from_values(values: &[i32]) -> Self {
        Self::new(0, values.iter().map(|&v| Sign::of(v as f64)).collect())
    }

    pub fn day(&self) -> usize {
        self.day
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    /// Number of `+` signs among `subset` (all vertices when `None`).
    pub fn count_pos(&self, subset: Option<&[usize]>) -> usize {
        match subset {
            Some(s) => s.iter().filter(|&&i| self.signs[i] == Sign::Pos).count(),
            None => self.signs.iter().filter(|s| **s == Sign::Pos).count(),
        }
    }

    /// Writes the day's graph as `i j sign` lines, vertices 0-indexed.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for i in 0..self.signs.len() {
            for j in i + 1..self.signs.len() {
                writeln!(out, "{i} {j} {}", self.signs[i] * self.signs[j])?;
            }
        }
        Ok(())
    }
}

impl SignedGraph for DaySignVector {
    fn order(&self) -> usize {
        self.signs.len()
    }

    fn sign_unchecked(&self, i: usize, j: usize) -> Sign {
        self.signs[i] * self.signs[j]
    }
}

pub fn day_signs(devs: &DeviationMatrix, t: usize) -> Result<DaySignVector> {
    if t >= devs.n_days {
        return Err(Error::Domain(format!(
            "day {t} out of range (T = {})",
            devs.n_days
        )));
    }
    Ok(DaySignVector::new(
        t,
        (0..devs.n_assets).map(|i| devs.sign(i, t)).collect(),
    ))
}

fn check_vertices<G: SignedGraph + ?Sized>(g: &G, vs: &[usize]) -> Result<()> {
    for (a, &v) in vs.iter().enumerate() {
        if v >= g.order() {
            return Err(Error::Domain(format!(
                "vertex {v} out of range (N = {})",
                g.order()
            )));
        }
        if vs[..a].contains(&v) {
            return Err(Error::Domain(format!("repeated vertex {v} in {vs:?}")));
        }
    }
    Ok(())
}

pub fn edge_sign<G: SignedGraph + ?Sized>(g: &G, i: usize, j: usize) -> Result<Sign> {
    check_vertices(g, &[i, j])?;
    Ok(g.sign_unchecked(i, j))
}

/// Triangles by number of negative edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriangleType {
    T0,
    T1,
    T2,
    T3,
}

impl TriangleType {
    pub fn from_negatives(m: usize) -> Self {
        match m {
            0 => TriangleType::T0,
            1 => TriangleType::T1,
            2 => TriangleType::T2,
            3 => TriangleType::T3,
            _ => unreachable!("a triangle has three edges"),
        }
    }

    pub fn is_balanced(self) -> bool {
        matches!(self, TriangleType::T0 | TriangleType::T2)
    }
}

pub fn classify_triangle<G: SignedGraph + ?Sized>(
    g: &G,
    i: usize,
    j: usize,
    k: usize,
) -> Result<TriangleType> {
    check_vertices(g, &[i, j, k])?;
    Ok(triangle_unchecked(g, i, j, k))
}

fn triangle_unchecked<G: SignedGraph + ?Sized>(
    g: &G,
    i: usize,
    j: usize,
    k: usize,
) -> TriangleType {
    let m = [(i, j), (i, k), (j, k)]
        .iter()
        .filter(|&&(a, b)| g.sign_unchecked(a, b).is_neg())
        .count();
    TriangleType::from_negatives(m)
}

/// True iff no triangle is `T1` or `T3`. Complete graphs are chordal, so this
/// is equivalent to structural balance.
pub fn is_balanced<G: SignedGraph + ?Sized>(g: &G) -> bool {
    let n = g.order();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if !triangle_unchecked(g, i, j, k).is_balanced() {
                    return false;
                }
            }
        }
    }
    true
}

/// Signed 4-clique patterns.
///
/// The balanced patterns are the three two-camp splits: `B0` (4-0, no negative
/// edge), `B2` (3-1: a positive triangle plus an apex joined to it by three
/// negative edges) and `B4` (2-2: the negative edges form a 4-cycle). The
/// unbalanced signed K4s fall into two switching classes, told apart by how
/// many of the four triangles are unbalanced: `B1` (two) and `B3` (all four).
/// Sign-vector graphs never produce `B1` or `B3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FourCliqueType {
    B0,
    B1,
    B2,
    B3,
    B4,
}

impl FourCliqueType {
    pub fn is_balanced(self) -> bool {
        matches!(
            self,
            FourCliqueType::B0 | FourCliqueType::B2 | FourCliqueType::B4
        )
    }
}

pub fn classify_four_clique<G: SignedGraph + ?Sized>(
    g: &G,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
) -> Result<FourCliqueType> {
    check_vertices(g, &[i, j, k, l])?;
    Ok(four_clique_unchecked(g, [i, j, k, l]))
}

pub(crate) fn four_clique_unchecked<G: SignedGraph + ?Sized>(
    g: &G,
    vs: [usize; 4],
) -> FourCliqueType {
    let mut neg_degree = [0u8; 4];
    let mut neg_edges = 0;
    for a in 0..4 {
        for b in a + 1..4 {
            if g.sign_unchecked(vs[a], vs[b]).is_neg() {
                neg_degree[a] += 1;
                neg_degree[b] += 1;
                neg_edges += 1;
            }
        }
    }
    neg_degree.sort_unstable();
    match (neg_edges, neg_degree) {
        (0, _) => FourCliqueType::B0,
        (3, [1, 1, 1, 3]) => FourCliqueType::B2,
        (4, [2, 2, 2, 2]) => FourCliqueType::B4,
        _ => {
            let unbalanced = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]
                .iter()
                .filter(|t| !triangle_unchecked(g, vs[t[0]], vs[t[1]], vs[t[2]]).is_balanced())
                .count();
            // every edge lies on two triangles, so the count is even and nonzero here
            if unbalanced == 4 {
                FourCliqueType::B3
            } else {
                FourCliqueType::B1
            }
        }
    }
}

/// Explicit sign for every vertex pair. Used where a graph is not induced by
/// a sign vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSignMap {
    n: usize,
    // upper triangle, row by row
    signs: Vec<Sign>,
}

impl EdgeSignMap {
    pub fn filled(n: usize, sign: Sign) -> Self {
        Self {
            n,
            signs: vec![sign; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Sign) -> Self {
        let mut m = Self::filled(n, Sign::Pos);
        for i in 0..n {
            for j in i + 1..n {
                let idx = m.index(i, j);
                m.signs[idx] = f(i, j);
            }
        }
        m
    }

    /// Materializes the graph of a sign vector.
    pub fn from_day(sv: &DaySignVector) -> Self {
        Self::from_fn(sv.len(), |i, j| sv.sign_unchecked(i, j))
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    pub fn set(&mut self, i: usize, j: usize, sign: Sign) -> Result<()> {
        if i == j || i >= self.n || j >= self.n {
            return Err(Error::Domain(format!(
                "invalid edge ({i}, {j}) for N = {}",
                self.n
            )));
        }
        let idx = self.index(i, j);
        self.signs[idx] = sign;
        Ok(())
    }
}

impl SignedGraph for EdgeSignMap {
    fn order(&self) -> usize {
        self.n
    }

    fn sign_unchecked(&self, i: usize, j: usize) -> Sign {
        self.signs[self.index(i, j)]
    }
}

/// Sign of a co-moment term: the product of deviations on one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermSign {
    Negative,
    Zero,
    Positive,
}

impl TermSign {
    fn of(x: f64) -> Self {
        if x > 0.0 {
            TermSign::Positive
        } else if x < 0.0 {
            TermSign::Negative
        } else {
            TermSign::Zero
        }
    }
}

fn term_sign(devs: &DeviationMatrix, t: usize, idx: &[usize]) -> Result<TermSign> {
    if t >= devs.n_days() {
        return Err(Error::Domain(format!("day {t} out of range")));
    }
    if let Some(i) = idx.iter().find(|&&i| i >= devs.n_assets()) {
        return Err(Error::Domain(format!("asset {i} out of range")));
    }
    Ok(TermSign::of(idx.iter().map(|&i| devs.get(i, t)).product()))
}

/// Sign of `delta_i delta_j delta_k` on day `t`; indices may repeat.
pub fn coskewness_term_sign(devs: &DeviationMatrix, t: usize, idx: [usize; 3]) -> Result<TermSign> {
    term_sign(devs, t, &idx)
}

/// Sign of `delta_i delta_j delta_k delta_l` on day `t`; indices may repeat.
pub fn cokurtosis_term_sign(devs: &DeviationMatrix, t: usize, idx: [usize; 4]) -> Result<TermSign> {
    term_sign(devs, t, &idx)
}

/// Optional edge filter for [`build_weighted_graph`]: keep entries above
/// `positive` or below `negative`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub negative: f64,
    pub positive: f64,
}

/// Weighted signed graph over a covariance or correlation estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSignedGraph {
    pub n: usize,
    pub weights: DMatrix<f64>,
    pub edge_present: DMatrix<bool>,
}

impl WeightedSignedGraph {
    /// `None` when there is no edge.
    pub fn edge(&self, i: usize, j: usize) -> Option<(Sign, f64)> {
        if i == j || !self.edge_present[(i, j)] {
            return None;
        }
        let w = self.weights[(i, j)];
        Some((Sign::of(w), w))
    }

    pub fn edge_count(&self) -> usize {
        let mut c = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                c += usize::from(self.edge_present[(i, j)]);
            }
        }
        c
    }
}

pub fn build_weighted_graph(
    cov: &DMatrix<f64>,
    thresholds: Option<Thresholds>,
) -> Result<WeightedSignedGraph> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::Domain("matrix is not square".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (cov[(i, j)], cov[(j, i)]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::Domain(format!("asymmetric entries at ({i}, {j})")));
            }
        }
    }
    if let Some(th) = thresholds {
        if !(-1.0 < th.negative && th.negative < 0.0 && 0.0 < th.positive && th.positive < 1.0) {
            return Err(Error::Domain(format!(
                "thresholds must satisfy -1 < {} < 0 < {} < 1",
                th.negative, th.positive
            )));
        }
        if cov.iter().any(|x| !(-1.0..=1.0).contains(x)) {
            return Err(Error::Domain(
                "thresholding expects correlations in [-1, 1]".into(),
            ));
        }
    }
    let edge_present = DMatrix::from_fn(n, n, |i, j| {
        let w = cov[(i, j)];
        i != j
            && match thresholds {
                None => w != 0.0,
                Some(th) => w > th.positive || w < th.negative,
            }
    });
    Ok(WeightedSignedGraph {
        n,
        weights: cov.clone(),
        edge_present,
    })
}
