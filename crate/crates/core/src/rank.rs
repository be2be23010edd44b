//! Pointwise ranks, extreme ranks and extreme rank count ranks.
//!
//! A [`TestMatrix`] holds `s + 1` test vectors of length `d`; row 0 is the
//! observed vector and rows `1..=s` are the null realizations. Ranks are
//! oriented so that rank 1 is always the most extreme value.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which tail of a component counts as extreme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Small values are extreme.
    Lower,
    /// Large values are extreme.
    Upper,
    TwoSided,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
            Side::TwoSided => "two-sided",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lower" | "less" => Ok(Side::Lower),
            "upper" | "greater" => Ok(Side::Upper),
            "two-sided" | "two_sided" | "twosided" | "two" => Ok(Side::TwoSided),
            other => Err(Error::Parameter(format!("unknown side `{other}`"))),
        }
    }
}

/// `(s + 1) x d` matrix of test vectors, row-major, row 0 observed.
#[derive(Debug, Clone, PartialEq)]
pub struct TestMatrix {
    nrows: usize,
    ncols: usize,
    values: Vec<f64>,
    sides: Vec<Side>,
}

impl TestMatrix {
    /// Builds a matrix from row vectors with one side for every column.
    pub fn from_rows(rows: &[Vec<f64>], side: Side) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(Error::Dimension(format!(
                "row {i} has length {}, expected {ncols}",
                r.len()
            )));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::from_flat(rows.len(), ncols, values, vec![side; ncols])
    }

    /// Builds a matrix from row-major values and a per-column side vector.
    pub fn from_flat(nrows: usize, ncols: usize, values: Vec<f64>, sides: Vec<Side>) -> Result<Self> {
        if nrows < 2 {
            return Err(Error::Dimension(format!(
                "need the observed vector and at least one simulation, got {nrows} rows"
            )));
        }
        if ncols == 0 {
            return Err(Error::Dimension("test vectors must have at least one component".into()));
        }
        if values.len() != nrows * ncols {
            return Err(Error::Dimension(format!(
                "{} values do not fill a {nrows} x {ncols} matrix",
                values.len()
            )));
        }
        if sides.len() != ncols {
            return Err(Error::Dimension(format!(
                "side vector has length {}, expected {ncols}",
                sides.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: k / ncols, col: k % ncols });
        }
        Ok(TestMatrix { nrows, ncols, values, sides })
    }

    /// Number of simulations `s`.
    pub fn nsim(&self) -> usize {
        self.nrows - 1
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Length `d` of each test vector.
    pub fn dim(&self) -> usize {
        self.ncols
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ncols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.ncols).copied()
    }

    /// True when every column has the same one-sided orientation.
    pub fn uniform_side(&self) -> Option<Side> {
        let first = self.sides[0];
        self.sides.iter().all(|&s| s == first).then_some(first)
    }
}

/// Pointwise ranks `R_ij`, row-major, same shape as the input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseRankMatrix {
    nrows: usize,
    ncols: usize,
    ranks: Vec<f64>,
}

impl PointwiseRankMatrix {
    /// Wraps precomputed ranks. Used mainly by tests and by callers that
    /// rank parts separately.
    pub fn from_flat(nrows: usize, ncols: usize, ranks: Vec<f64>) -> Result<Self> {
        if nrows < 2 || ncols == 0 || ranks.len() != nrows * ncols {
            return Err(Error::Dimension(format!(
                "{} ranks do not form a valid {nrows} x {ncols} rank matrix",
                ranks.len()
            )));
        }
        if let Some(k) = ranks.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: k / ncols, col: k % ncols });
        }
        Ok(PointwiseRankMatrix { nrows, ncols, ranks })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.ranks[i * self.ncols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.ranks[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.ranks
    }
}

/// Extreme ranks `R_i = min_j R_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeRankVector(pub Vec<f64>);

impl ExtremeRankVector {
    pub fn observed(&self) -> f64 {
        self.0[0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Extreme rank count ranks: number of rows whose sorted rank vector
/// strictly precedes this row's. Small counts are extreme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErcRankVector(pub Vec<usize>);

impl ErcRankVector {
    pub fn observed(&self) -> usize {
        self.0[0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Mid-ranks of `values`: smallest gets 1, ties share the mean of the raw
/// ranks they occupy. `order` is scratch space.
fn mid_ranks_into(values: &[f64], order: &mut Vec<(f64, u32)>, out: &mut [f64]) {
    let n = values.len();
    order.clear();
    order.extend(values.iter().enumerate().map(|(i, &v)| (v, i as u32)));
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut start = 0;
    while start < n {
        let v = order[start].0;
        let mut end = start + 1;
        while end < n && order[end].0 == v {
            end += 1;
        }
        // raw ranks start+1 ..= end
        let mid = (start + 1 + end) as f64 / 2.0;
        for &(_, k) in &order[start..end] {
            out[k as usize] = mid;
        }
        start = end;
    }
}

/// Raw mid-ranks of a single sample (before any side transformation).
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    mid_ranks_into(values, &mut Vec::with_capacity(values.len()), &mut out);
    out
}

/// Orients a raw rank `r` among `n = s + 1` values.
#[inline]
pub fn orient_rank(raw: f64, n: usize, side: Side) -> f64 {
    let flipped = (n + 1) as f64 - raw;
    match side {
        Side::Lower => raw,
        Side::Upper => flipped,
        Side::TwoSided => raw.min(flipped),
    }
}

/// Pointwise ranks of every column, oriented by the column's side.
pub fn pointwise_ranks(m: &TestMatrix) -> PointwiseRankMatrix {
    let (n, d) = (m.nrows, m.ncols);
    let mut ranks = vec![0.0; n * d];
    let mut column = vec![0.0; n];
    let mut raw = vec![0.0; n];
    let mut order = Vec::with_capacity(n);
    for j in 0..d {
        for (c, v) in column.iter_mut().zip(m.column(j)) {
            *c = v;
        }
        mid_ranks_into(&column, &mut order, &mut raw);
        let side = m.sides[j];
        for (i, &r) in raw.iter().enumerate() {
            ranks[i * d + j] = orient_rank(r, n, side);
        }
    }
    PointwiseRankMatrix { nrows: n, ncols: d, ranks }
}

pub fn extreme_ranks(pr: &PointwiseRankMatrix) -> ExtremeRankVector {
    ExtremeRankVector(
        (0..pr.nrows)
            .map(|i| pr.row(i).iter().copied().fold(f64::INFINITY, f64::min))
            .collect(),
    )
}

fn sorted_rows(pr: &PointwiseRankMatrix) -> Vec<Vec<f64>> {
    (0..pr.nrows)
        .map(|i| {
            let mut r = pr.row(i).to_vec();
            r.sort_unstable_by(f64::total_cmp);
            r
        })
        .collect()
}

fn lex_cmp(a: &[f64], b: &[f64], tol: f64) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > tol {
            return x.total_cmp(y);
        }
    }
    Ordering::Equal
}

/// Extreme rank count ranks with exact comparison.
pub fn erc_ranks(pr: &PointwiseRankMatrix) -> ErcRankVector {
    erc_ranks_with_tolerance(pr, 0.0)
}

/// Extreme rank count ranks; rank values within `tol` of each other are
/// treated as equal during the lexicographic comparison.
pub fn erc_ranks_with_tolerance(pr: &PointwiseRankMatrix, tol: f64) -> ErcRankVector {
    let sorted = sorted_rows(pr);
    let n = sorted.len();
    if tol > 0.0 {
        // Tolerant equality is not transitive, so count pairwise instead of sorting.
        let counts = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&k| lex_cmp(&sorted[k], &sorted[i], tol) == Ordering::Less)
                    .count()
            })
            .collect();
        return ErcRankVector(counts);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| lex_cmp(&sorted[a], &sorted[b], 0.0));
    let mut counts = vec![0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && lex_cmp(&sorted[order[start]], &sorted[order[end]], 0.0) == Ordering::Equal {
            end += 1;
        }
        for &i in &order[start..end] {
            counts[i] = start;
        }
        start = end;
    }
    ErcRankVector(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64], side: Side) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let m = TestMatrix::from_rows(&rows, side).unwrap();
        pointwise_ranks(&m).as_slice().to_vec()
    }

    #[test]
    fn lower_ranks_follow_sort_order() {
        assert_eq!(col(&[3.0, 1.0, 2.0], Side::Lower), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn ties_get_mid_ranks() {
        assert_eq!(col(&[2.0, 2.0, 5.0], Side::Lower), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn upper_ranks_put_largest_first() {
        assert_eq!(col(&[3.0, 1.0, 2.0], Side::Upper), vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn two_sided_ranks_fold_both_tails() {
        // brute force: lower (1,2,3,4,5), upper (5,4,3,2,1), elementwise min
        let lower = [1.0, 2.0, 3.0, 4.0, 5.0];
        let upper: Vec<f64> = lower.iter().rev().copied().collect();
        let expected: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| a.min(*b)).collect();
        assert_eq!(expected, vec![1.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!(col(&lower, Side::TwoSided), expected);
    }

    #[test]
    fn rejects_non_finite_with_position() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, f64::NAN]];
        match TestMatrix::from_rows(&rows, Side::Lower) {
            Err(Error::NonFinite { row, col }) => assert_eq!((row, col), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TestMatrix::from_rows(&[vec![1.0]], Side::Lower).is_err());
        assert!(TestMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]], Side::Lower).is_err());
        assert!(TestMatrix::from_flat(2, 2, vec![0.0; 4], vec![Side::Lower]).is_err());
    }

    #[test]
    fn extreme_ranks_are_row_minima() {
        let pr = PointwiseRankMatrix::from_flat(3, 2, vec![1.0, 3.0, 2.0, 2.0, 3.0, 1.0]).unwrap();
        assert_eq!(extreme_ranks(&pr).0, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn erc_counts_small_example() {
        let pr = PointwiseRankMatrix::from_flat(3, 2, vec![1.0, 2.0, 1.0, 3.0, 2.0, 2.0]).unwrap();
        assert_eq!(erc_ranks(&pr).0, vec![0, 1, 2]);
        // row order inside each row does not matter
        let pr = PointwiseRankMatrix::from_flat(3, 2, vec![2.0, 1.0, 3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(erc_ranks(&pr).0, vec![0, 1, 2]);
    }

    #[test]
    fn erc_identical_rows_all_zero() {
        let pr = PointwiseRankMatrix::from_flat(4, 2, vec![2.0; 8]).unwrap();
        assert_eq!(erc_ranks(&pr).0, vec![0; 4]);
    }

    #[test]
    fn erc_tolerance_merges_close_values() {
        let pr = PointwiseRankMatrix::from_flat(3, 1, vec![1.0, 1.0 + 1e-12, 2.0]).unwrap();
        assert_eq!(erc_ranks(&pr).0, vec![0, 1, 2]);
        assert_eq!(erc_ranks_with_tolerance(&pr, 1e-9).0, vec![0, 0, 2]);
    }

    #[test]
    fn side_parsing() {
        assert_eq!("two-sided".parse::<Side>().unwrap(), Side::TwoSided);
        assert_eq!("Upper".parse::<Side>().unwrap(), Side::Upper);
        assert!("sideways".parse::<Side>().is_err());
    }
}
