//! Permutation functional ANOVA and group comparisons.
//!
//! Every construction maps a labelled set of curves to one statistic vector.
//! The permutation engine evaluates it on the observed labelling and on
//! random relabellings (whole curves are permuted), producing a test matrix
//! for the rank envelope test.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combined::PartInfo;
use crate::error::{Error, Result};
use crate::rank::{Side, TestMatrix};
use crate::rng::Seed;

/// Stand-in for an infinite F value; ranks the same as `+inf`.
pub const DEGENERATE_F: f64 = f64::MAX;

/// Observed curves with group labels and optional positive weights.
#[derive(Debug, Clone)]
pub struct GroupedCurveSet {
    args: Vec<f64>,
    curves: Vec<f64>,
    groups: Vec<usize>,
    labels: Vec<String>,
    weights: Vec<f64>,
    weighted: bool,
}

impl GroupedCurveSet {
    /// `group_of` gives each curve's label; groups are numbered in order of
    /// first appearance.
    pub fn new(
        args: Vec<f64>,
        curves: Vec<Vec<f64>>,
        group_of: &[String],
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let k = args.len();
        if k == 0 {
            return Err(Error::Dimension("empty grid".into()));
        }
        if args.windows(2).any(|w| w[1] <= w[0]) || args.iter().any(|a| !a.is_finite()) {
            return Err(Error::Parameter("grid must be finite and strictly increasing".into()));
        }
        if curves.len() != group_of.len() {
            return Err(Error::Dimension(format!(
                "{} curves but {} group labels",
                curves.len(),
                group_of.len()
            )));
        }
        if let Some((i, c)) = curves.iter().enumerate().find(|(_, c)| c.len() != k) {
            return Err(Error::Dimension(format!("curve {i} has {} values, grid has {k}", c.len())));
        }
        let mut labels: Vec<String> = Vec::new();
        let groups: Vec<usize> = group_of
            .iter()
            .map(|g| match labels.iter().position(|l| l == g) {
                Some(p) => p,
                None => {
                    labels.push(g.clone());
                    labels.len() - 1
                }
            })
            .collect();
        if labels.len() < 2 {
            return Err(Error::Parameter(format!("need at least two groups, found {}", labels.len())));
        }
        let flat = curves.concat();
        if let Some(p) = flat.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: p / k, col: p % k });
        }
        let weighted = weights.is_some();
        let weights = match weights {
            Some(w) => {
                if w.len() != curves.len() {
                    return Err(Error::Dimension(format!("{} weights for {} curves", w.len(), curves.len())));
                }
                if w.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
                    return Err(Error::Parameter("weights must be strictly positive".into()));
                }
                w
            }
            None => vec![1.0; curves.len()],
        };
        Ok(GroupedCurveSet { args, curves: flat, groups, labels, weights, weighted })
    }

    pub fn args(&self) -> &[f64] {
        &self.args
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn ncurves(&self) -> usize {
        self.groups.len()
    }

    pub fn ngroups(&self) -> usize {
        self.labels.len()
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        let k = self.args.len();
        &self.curves[i * k..(i + 1) * k]
    }

    /// Weight of curve `i`; 1 for unweighted sets.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.ngroups()];
        for &g in &self.groups {
            n[g] += 1;
        }
        n
    }
}

/// Variance scaling for group differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    None,
    UnitVar,
    /// Unit variance with variances smoothed by a centred moving average.
    UnitVarMa(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Pointwise one-way ANOVA F statistic; Welch's weighted version when `welch`.
    Fstat { welch: bool },
    /// Group means one after another.
    GroupMeans,
    /// Differences of all pairs of group means.
    PairwiseDiff(Scaling),
    /// Each group mean against the mean of the remaining curves, scaled with
    /// moving-average smoothed variances.
    LeaveOneOut { window: usize },
}

impl Construction {
    /// Rank test orientation for this statistic.
    pub fn side(self) -> Side {
        match self {
            Construction::Fstat { .. } => Side::Upper,
            _ => Side::TwoSided,
        }
    }
}

/// A statistic vector with its segment layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStatistic {
    pub construction: Construction,
    pub values: Vec<f64>,
    pub segments: Vec<PartInfo>,
    /// Grid points where a variance denominator vanished.
    pub degenerate_points: usize,
}

/// Per-group summaries for one labelling.
struct GroupStats {
    k: usize,
    sizes: Vec<usize>,
    /// Weighted means, `J x K`.
    means: Vec<f64>,
    /// Unweighted means, `J x K`.
    plain_means: Vec<f64>,
    /// Sample variances of the curves, `J x K`.
    sample_var: Vec<f64>,
    /// `sum (m_ij / m_i)^2` per group; `1 / n_j` without weights.
    weight_sq: Vec<f64>,
}

impl GroupStats {
    fn compute(g: &GroupedCurveSet, labels: &[usize]) -> Self {
        let j = g.ngroups();
        let k = g.args.len();
        let mut sizes = vec![0usize; j];
        let mut mass = vec![0.0; j];
        for (i, &l) in labels.iter().enumerate() {
            sizes[l] += 1;
            mass[l] += g.weights[i];
        }
        let mut means = vec![0.0; j * k];
        let mut plain_means = vec![0.0; j * k];
        let mut weight_sq = vec![0.0; j];
        for (i, &l) in labels.iter().enumerate() {
            let w = g.weights[i] / mass[l];
            weight_sq[l] += w * w;
            let inv_n = 1.0 / sizes[l] as f64;
            let row = &mut means[l * k..(l + 1) * k];
            let prow = &mut plain_means[l * k..(l + 1) * k];
            for ((m, p), v) in row.iter_mut().zip(prow.iter_mut()).zip(g.curve(i)) {
                *m += w * v;
                *p += inv_n * v;
            }
        }
        let mut sample_var = vec![0.0; j * k];
        for (i, &l) in labels.iter().enumerate() {
            let prow = &plain_means[l * k..(l + 1) * k];
            let vrow = &mut sample_var[l * k..(l + 1) * k];
            for ((s, p), v) in vrow.iter_mut().zip(prow).zip(g.curve(i)) {
                *s += (v - p) * (v - p);
            }
        }
        for l in 0..j {
            let denom = sizes[l].saturating_sub(1);
            for s in &mut sample_var[l * k..(l + 1) * k] {
                *s = if denom > 0 { *s / denom as f64 } else { 0.0 };
            }
        }
        GroupStats { k, sizes, means, plain_means, sample_var, weight_sq }
    }

    fn mean(&self, l: usize) -> &[f64] {
        &self.means[l * self.k..(l + 1) * self.k]
    }

    fn plain_mean(&self, l: usize) -> &[f64] {
        &self.plain_means[l * self.k..(l + 1) * self.k]
    }

    fn var(&self, l: usize) -> &[f64] {
        &self.sample_var[l * self.k..(l + 1) * self.k]
    }

    /// Estimated variance of the (weighted) group mean.
    fn var_of_mean(&self, l: usize) -> Vec<f64> {
        self.var(l).iter().map(|v| v * self.weight_sq[l]).collect()
    }
}

/// Centred moving average over `window` points, truncated at the edges.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            if window <= 1 {
                values[i]
            } else {
                (prefix[hi] - prefix[lo]) / (hi - lo) as f64
            }
        })
        .collect()
}

fn pairs(j: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..j).flat_map(move |a| (a + 1..j).map(move |b| (a, b)))
}

fn validate(g: &GroupedCurveSet, c: Construction) -> Result<()> {
    let needs_var = match c {
        Construction::Fstat { .. } => true,
        Construction::GroupMeans => false,
        Construction::PairwiseDiff(s) => s != Scaling::None,
        Construction::LeaveOneOut { .. } => true,
    };
    if needs_var {
        if let Some((l, n)) = g.group_sizes().iter().enumerate().find(|(_, &n)| n < 2) {
            return Err(Error::Parameter(format!(
                "group `{}` has {n} curve(s); this construction needs at least 2 per group",
                g.labels[l]
            )));
        }
    }
    let window = match c {
        Construction::PairwiseDiff(Scaling::UnitVarMa(b)) => Some(b),
        Construction::LeaveOneOut { window } => Some(window),
        _ => None,
    };
    if let Some(b) = window {
        if b == 0 || b % 2 == 0 {
            return Err(Error::Parameter(format!("moving-average window must be odd and positive, got {b}")));
        }
    }
    Ok(())
}

fn segments(g: &GroupedCurveSet, c: Construction) -> Vec<PartInfo> {
    let k = g.args.len();
    let side = c.side();
    let names: Vec<String> = match c {
        Construction::Fstat { .. } => vec!["F".to_string()],
        Construction::GroupMeans => g.labels.clone(),
        Construction::PairwiseDiff(_) => pairs(g.ngroups())
            .map(|(a, b)| format!("{} - {}", g.labels[a], g.labels[b]))
            .collect(),
        Construction::LeaveOneOut { .. } => g.labels.iter().map(|l| format!("{l} - rest")).collect(),
    };
    names
        .into_iter()
        .enumerate()
        .map(|(i, name)| PartInfo { name, offset: i * k, len: k, side })
        .collect()
}

fn fstat_values(g: &GroupedCurveSet, st: &GroupStats, labels: &[usize], welch: bool) -> (Vec<f64>, usize) {
    let j = g.ngroups();
    let k = st.k;
    let n = labels.len();
    let mut out = vec![0.0; k];
    let mut degenerate = 0;
    if welch {
        for (r, o) in out.iter_mut().enumerate() {
            let means: Vec<f64> = (0..j).map(|l| st.plain_mean(l)[r]).collect();
            if (0..j).any(|l| st.var(l)[r] <= 0.0) {
                let all_equal = means.iter().all(|&m| m == means[0]);
                *o = if all_equal { 0.0 } else { DEGENERATE_F };
                degenerate += 1;
                continue;
            }
            let w: Vec<f64> = (0..j).map(|l| st.sizes[l] as f64 / st.var(l)[r]).collect();
            let wsum: f64 = w.iter().sum();
            let grand = w.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>() / wsum;
            let a = w.iter().zip(&means).map(|(w, m)| w * (m - grand).powi(2)).sum::<f64>() / (j - 1) as f64;
            let lambda: f64 = (0..j)
                .map(|l| (1.0 - w[l] / wsum).powi(2) / (st.sizes[l] - 1) as f64)
                .sum();
            let jf = j as f64;
            let b = 1.0 + 2.0 * (jf - 2.0) / (jf * jf - 1.0) * lambda;
            *o = a / b;
        }
    } else {
        let mut grand = vec![0.0; k];
        for i in 0..n {
            for (gm, v) in grand.iter_mut().zip(g.curve(i)) {
                *gm += v;
            }
        }
        grand.iter_mut().for_each(|v| *v /= n as f64);
        for (r, o) in out.iter_mut().enumerate() {
            let between: f64 = (0..j)
                .map(|l| st.sizes[l] as f64 * (st.plain_mean(l)[r] - grand[r]).powi(2))
                .sum::<f64>()
                / (j - 1) as f64;
            let within: f64 = (0..j)
                .map(|l| st.var(l)[r] * (st.sizes[l] - 1) as f64)
                .sum::<f64>()
                / (n - j) as f64;
            if within <= 0.0 {
                *o = if between > 0.0 { DEGENERATE_F } else { 0.0 };
                degenerate += 1;
            } else {
                *o = between / within;
            }
        }
    }
    (out, degenerate)
}

/// Scaled difference `(a - b) / sqrt(va + vb)`, left unscaled where the
/// denominator vanishes.
fn scaled_difference(a: &[f64], b: &[f64], va: &[f64], vb: &[f64], out: &mut Vec<f64>) -> usize {
    let mut degenerate = 0;
    for r in 0..a.len() {
        let diff = a[r] - b[r];
        let denom = (va[r] + vb[r]).sqrt();
        if denom > 0.0 {
            out.push(diff / denom);
        } else {
            out.push(diff);
            degenerate += 1;
        }
    }
    degenerate
}

fn smooth(v: Vec<f64>, window: Option<usize>) -> Vec<f64> {
    match window {
        Some(b) if b > 1 => moving_average(&v, b),
        _ => v,
    }
}

fn leave_one_out_values(g: &GroupedCurveSet, st: &GroupStats, labels: &[usize], window: usize) -> (Vec<f64>, usize) {
    let j = g.ngroups();
    let k = st.k;
    let mut out = Vec::with_capacity(j * k);
    let mut degenerate = 0;
    for l in 0..j {
        // complement pooled as a single sample
        let rest: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != l).collect();
        let mass: f64 = rest.iter().map(|&i| g.weights[i]).sum();
        let mut mean = vec![0.0; k];
        let mut plain = vec![0.0; k];
        let mut wsq = 0.0;
        for &i in &rest {
            let w = g.weights[i] / mass;
            wsq += w * w;
            for r in 0..k {
                mean[r] += w * g.curve(i)[r];
                plain[r] += g.curve(i)[r] / rest.len() as f64;
            }
        }
        let mut var = vec![0.0; k];
        for &i in &rest {
            for r in 0..k {
                var[r] += (g.curve(i)[r] - plain[r]).powi(2);
            }
        }
        let denom = (rest.len() - 1) as f64;
        let var_rest: Vec<f64> = var.iter().map(|v| v / denom * wsq).collect();
        let va = smooth(st.var_of_mean(l), Some(window));
        let vb = smooth(var_rest, Some(window));
        degenerate += scaled_difference(st.mean(l), &mean, &va, &vb, &mut out);
    }
    (out, degenerate)
}

fn statistic_for(g: &GroupedCurveSet, c: Construction, labels: &[usize]) -> (Vec<f64>, usize) {
    let st = GroupStats::compute(g, labels);
    let j = g.ngroups();
    match c {
        Construction::Fstat { welch } => fstat_values(g, &st, labels, welch),
        Construction::GroupMeans => (st.means.clone(), 0),
        Construction::PairwiseDiff(scaling) => {
            let mut out = Vec::with_capacity(j * (j - 1) / 2 * st.k);
            let mut degenerate = 0;
            let window = match scaling {
                Scaling::UnitVarMa(b) => Some(b),
                _ => None,
            };
            let vars: Vec<Vec<f64>> = match scaling {
                Scaling::None => Vec::new(),
                _ => (0..j).map(|l| smooth(st.var_of_mean(l), window)).collect(),
            };
            for (a, b) in pairs(j) {
                if scaling == Scaling::None {
                    out.extend(st.mean(a).iter().zip(st.mean(b)).map(|(x, y)| x - y));
                } else {
                    degenerate += scaled_difference(st.mean(a), st.mean(b), &vars[a], &vars[b], &mut out);
                }
            }
            (out, degenerate)
        }
        Construction::LeaveOneOut { window } => leave_one_out_values(g, &st, labels, window),
    }
}

/// Evaluates a construction on the observed labelling.
pub fn group_statistic(g: &GroupedCurveSet, c: Construction) -> Result<GroupStatistic> {
    validate(g, c)?;
    let (values, degenerate_points) = statistic_for(g, c, &g.groups);
    if degenerate_points > 0 {
        log::warn!("{degenerate_points} degenerate grid point(s) in {c:?}");
    }
    Ok(GroupStatistic { construction: c, values, segments: segments(g, c), degenerate_points })
}

pub fn fstat_vector(g: &GroupedCurveSet, welch: bool) -> Result<GroupStatistic> {
    group_statistic(g, Construction::Fstat { welch })
}

pub fn group_mean_vector(g: &GroupedCurveSet) -> Result<GroupStatistic> {
    group_statistic(g, Construction::GroupMeans)
}

pub fn pairwise_diff_vector(g: &GroupedCurveSet, scaling: Scaling) -> Result<GroupStatistic> {
    group_statistic(g, Construction::PairwiseDiff(scaling))
}

pub fn leave_one_out_vector(g: &GroupedCurveSet, window: usize) -> Result<GroupStatistic> {
    group_statistic(g, Construction::LeaveOneOut { window })
}

/// Observed and permuted statistic vectors, ready for the rank test.
#[derive(Debug, Clone)]
pub struct PermutationTest {
    pub construction: Construction,
    /// Grid values repeated once per segment.
    pub args: Vec<f64>,
    pub segments: Vec<PartInfo>,
    pub matrix: TestMatrix,
    pub degenerate_points: usize,
}

/// Row 0: observed labelling. Rows `1..=s`: i.i.d. uniform relabellings,
/// replicate `k` drawn from substream `k` of `seed`.
pub fn permutation_engine(g: &GroupedCurveSet, c: Construction, s: usize, seed: Seed) -> Result<PermutationTest> {
    if s == 0 {
        return Err(Error::Parameter("need at least one permutation".into()));
    }
    validate(g, c)?;
    let observed = statistic_for(g, c, &g.groups);
    let rows: Vec<(Vec<f64>, usize)> = (1..=s as u64)
        .into_par_iter()
        .map(|k| {
            let mut labels = g.groups.clone();
            labels.shuffle(&mut seed.child(k).rng());
            statistic_for(g, c, &labels)
        })
        .collect();
    let d = observed.0.len();
    let mut values = Vec::with_capacity((s + 1) * d);
    values.extend_from_slice(&observed.0);
    let mut degenerate_points = observed.1;
    for (row, deg) in rows {
        values.extend_from_slice(&row);
        degenerate_points += deg;
    }
    let segs = segments(g, c);
    let args = segs.iter().flat_map(|_| g.args.iter().copied()).collect();
    Ok(PermutationTest {
        construction: c,
        args,
        matrix: TestMatrix::from_flat(s + 1, d, values, vec![c.side(); d])?,
        segments: segs,
        degenerate_points,
    })
}
