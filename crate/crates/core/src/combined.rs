//! Combined tests: concatenation of several test functions (or of the same
//! function on several patterns), the two-stage view of the combined extreme
//! rank, and one-sided combination of scalar deviation measures.

use serde::{Deserialize, Serialize};

use crate::envelope::{run_rank_test, RankTestResult};
use crate::error::{Error, Result};
use crate::rank::{extreme_ranks, pointwise_ranks, ExtremeRankVector, Side, TestMatrix};

/// A discretized test function: `s + 1` curves on a shared grid, row 0 observed.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub name: String,
    args: Vec<f64>,
    curves: Vec<f64>,
    side: Side,
}

impl CurveSet {
    pub fn new(name: impl Into<String>, args: Vec<f64>, curves: Vec<Vec<f64>>, side: Side) -> Result<Self> {
        let k = args.len();
        if let Some((i, c)) = curves.iter().enumerate().find(|(_, c)| c.len() != k) {
            return Err(Error::Dimension(format!("curve {i} has {} values, grid has {k}", c.len())));
        }
        Self::from_flat(name, args, curves.concat(), side)
    }

    /// `curves` is row-major with `args.len()` columns.
    pub fn from_flat(name: impl Into<String>, args: Vec<f64>, curves: Vec<f64>, side: Side) -> Result<Self> {
        let name = name.into();
        let k = args.len();
        if k == 0 {
            return Err(Error::Dimension(format!("curve set `{name}` has an empty grid")));
        }
        if args.iter().any(|a| !a.is_finite()) {
            return Err(Error::Parameter(format!("curve set `{name}` has a non-finite grid value")));
        }
        if args.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(format!("grid of `{name}` is not strictly increasing")));
        }
        if !curves.len().is_multiple_of(k) || curves.len() / k < 2 {
            return Err(Error::Dimension(format!(
                "curve set `{name}` needs at least two curves of length {k}, got {} values",
                curves.len()
            )));
        }
        if let Some(p) = curves.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: p / k, col: p % k });
        }
        Ok(CurveSet { name, args, curves, side })
    }

    pub fn args(&self) -> &[f64] {
        &self.args
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// Grid length `K`.
    pub fn len(&self) -> usize {
        self.args.len()
    }

    pub fn is_empty(&self) -> bool {
        self.args.is_empty()
    }

    pub fn nsim(&self) -> usize {
        self.curves.len() / self.args.len() - 1
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        let k = self.args.len();
        &self.curves[i * k..(i + 1) * k]
    }

    pub fn curves_flat(&self) -> &[f64] {
        &self.curves
    }

    pub fn to_test_matrix(&self) -> TestMatrix {
        TestMatrix::from_flat(self.nsim() + 1, self.len(), self.curves.clone(), vec![self.side; self.len()])
            .expect("curve set invariants imply a valid test matrix")
    }
}

/// Location of one part inside a concatenated test vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartInfo {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub side: Side,
}

/// Concatenation of several curve sets sharing the same `s`.
#[derive(Debug, Clone)]
pub struct CombinedCurveSet {
    pub parts: Vec<PartInfo>,
    /// Concatenated argument values, one per column.
    pub args: Vec<f64>,
    pub matrix: TestMatrix,
}

impl CombinedCurveSet {
    pub fn part_args(&self, p: usize) -> &[f64] {
        let info = &self.parts[p];
        &self.args[info.offset..info.offset + info.len]
    }
}

fn check_parts(parts: &[CurveSet], allow_unequal: bool) -> Result<()> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Dimension("nothing to combine".into()))?;
    for p in &parts[1..] {
        if p.nsim() != first.nsim() {
            return Err(Error::MismatchedSimulations {
                part: p.name.clone(),
                expected: first.nsim(),
                found: p.nsim(),
            });
        }
        if !allow_unequal && p.len() != first.len() {
            return Err(Error::MismatchedGrid { part: p.name.clone(), expected: first.len(), found: p.len() });
        }
    }
    Ok(())
}

/// Concatenates the parts into one test matrix, part after part.
///
/// Parts must share `s`. Unequal grid lengths give the longer functions more
/// weight in the extreme rank and are refused unless `allow_unequal` is set.
pub fn concatenate(parts: &[CurveSet], allow_unequal: bool) -> Result<CombinedCurveSet> {
    check_parts(parts, allow_unequal)?;
    let n = parts[0].nsim() + 1;
    let d: usize = parts.iter().map(CurveSet::len).sum();
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        for p in parts {
            values.extend_from_slice(p.curve(i));
        }
    }
    let mut infos = Vec::with_capacity(parts.len());
    let mut sides = Vec::with_capacity(d);
    let mut args = Vec::with_capacity(d);
    let mut offset = 0;
    for p in parts {
        infos.push(PartInfo { name: p.name.clone(), offset, len: p.len(), side: p.side });
        sides.extend(std::iter::repeat_n(p.side, p.len()));
        args.extend_from_slice(&p.args);
        offset += p.len();
    }
    let matrix = TestMatrix::from_flat(n, d, values, sides)?;
    Ok(CombinedCurveSet { parts: infos, args, matrix })
}

/// Extreme ranks of the combined test computed part by part: the minimum of
/// the sub-tests' extreme ranks.
pub fn two_stage_extreme_ranks(parts: &[CurveSet]) -> Result<ExtremeRankVector> {
    check_parts(parts, true)?;
    let mut combined = vec![f64::INFINITY; parts[0].nsim() + 1];
    for p in parts {
        let r = extreme_ranks(&pointwise_ranks(&p.to_test_matrix()));
        for (c, v) in combined.iter_mut().zip(r.0) {
            *c = c.min(v);
        }
    }
    Ok(ExtremeRankVector(combined))
}

/// Scalar discrepancy between a curve and the central curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationMeasure {
    /// Trapezoid-weighted integral of the squared difference.
    IntL2,
    /// Maximum absolute difference; signed maximum for one-sided curve sets.
    Max,
    /// Maximum difference scaled by the distance from the centre to the
    /// pointwise empirical quantiles at `lower` and `upper`.
    ScaledMaxQ { lower: f64, upper: f64 },
}

impl DeviationMeasure {
    pub const SCALED_MAX_Q: DeviationMeasure = DeviationMeasure::ScaledMaxQ { lower: 0.025, upper: 0.975 };

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "int" | "int_l2" | "intl2" | "l2" => Ok(DeviationMeasure::IntL2),
            "max" => Ok(DeviationMeasure::Max),
            "qdir" | "scaled_max_q" | "scaledmaxq" | "q" => Ok(Self::SCALED_MAX_Q),
            other => Err(Error::Parameter(format!("unknown deviation measure `{other}`"))),
        }
    }
}

/// Deviation values `u_i` for every curve of one curve set.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationColumn {
    pub values: Vec<f64>,
    /// Grid points dropped because a scaling denominator vanished.
    pub excluded_points: usize,
}

/// Deviation measures of several test functions, one column per function.
#[derive(Debug, Clone)]
pub struct DeviationVector {
    pub names: Vec<String>,
    pub measure: DeviationMeasure,
    pub matrix: TestMatrix,
    pub excluded_points: usize,
}

/// Trapezoidal integration weights for a strictly increasing grid.
pub fn trapezoid_weights(args: &[f64]) -> Vec<f64> {
    let k = args.len();
    if k == 1 {
        return vec![1.0];
    }
    (0..k)
        .map(|i| {
            let left = if i > 0 { args[i] - args[i - 1] } else { 0.0 };
            let right = if i + 1 < k { args[i + 1] - args[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Empirical quantile with linear interpolation between order statistics
/// (`sorted` ascending, `p` in [0, 1]).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise mean of all `s + 1` curves.
pub fn central_mean(c: &CurveSet) -> Vec<f64> {
    let n = (c.nsim() + 1) as f64;
    let mut t0 = vec![0.0; c.len()];
    for i in 0..=c.nsim() {
        for (t, v) in t0.iter_mut().zip(c.curve(i)) {
            *t += v;
        }
    }
    t0.iter_mut().for_each(|t| *t /= n);
    t0
}

pub fn deviation_measures(c: &CurveSet, measure: DeviationMeasure) -> Result<DeviationColumn> {
    if c.nsim() < 2 {
        return Err(Error::Dimension(format!(
            "deviation measures of `{}` need at least two simulations",
            c.name
        )));
    }
    let t0 = central_mean(c);
    let n = c.nsim() + 1;
    match measure {
        DeviationMeasure::IntL2 => {
            let w = trapezoid_weights(c.args());
            let values = (0..n)
                .map(|i| {
                    c.curve(i)
                        .iter()
                        .zip(&t0)
                        .zip(&w)
                        .map(|((v, t), w)| (v - t) * (v - t) * w)
                        .sum()
                })
                .collect();
            Ok(DeviationColumn { values, excluded_points: 0 })
        }
        DeviationMeasure::Max => {
            let dev = |v: f64, t: f64| match c.side() {
                Side::TwoSided => (v - t).abs(),
                Side::Upper => v - t,
                Side::Lower => t - v,
            };
            let values = (0..n)
                .map(|i| {
                    c.curve(i)
                        .iter()
                        .zip(&t0)
                        .map(|(&v, &t)| dev(v, t))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            Ok(DeviationColumn { values, excluded_points: 0 })
        }
        DeviationMeasure::ScaledMaxQ { lower, upper } => {
            if !(0.0 <= lower && lower < upper && upper <= 1.0) {
                return Err(Error::Parameter(format!("invalid quantile levels ({lower}, {upper})")));
            }
            let k = c.len();
            let mut lo_q = vec![0.0; k];
            let mut hi_q = vec![0.0; k];
            let mut buf = Vec::with_capacity(n);
            for j in 0..k {
                buf.clear();
                buf.extend((0..n).map(|i| c.curve(i)[j]));
                buf.sort_unstable_by(f64::total_cmp);
                lo_q[j] = quantile_type7(&buf, lower);
                hi_q[j] = quantile_type7(&buf, upper);
            }
            let usable: Vec<bool> = (0..k).map(|j| hi_q[j] > t0[j] && t0[j] > lo_q[j]).collect();
            let excluded_points = usable.iter().filter(|u| !**u).count();
            if excluded_points > 0 {
                log::warn!(
                    "`{}`: {excluded_points} grid point(s) with a degenerate quantile scale excluded",
                    c.name
                );
            }
            let values = (0..n)
                .map(|i| {
                    let curve = c.curve(i);
                    (0..k)
                        .filter(|&j| usable[j])
                        .map(|j| {
                            let up = (curve[j] - t0[j]) / (hi_q[j] - t0[j]);
                            let down = (t0[j] - curve[j]) / (t0[j] - lo_q[j]);
                            match c.side() {
                                Side::TwoSided => up.max(down),
                                Side::Upper => up,
                                Side::Lower => down,
                            }
                        })
                        .fold(0.0_f64, f64::max)
                })
                .collect();
            Ok(DeviationColumn { values, excluded_points })
        }
    }
}

/// Deviation measures of several curve sets gathered into a one-sided
/// (large is extreme) test matrix.
pub fn deviation_vector(parts: &[CurveSet], measure: DeviationMeasure) -> Result<DeviationVector> {
    check_parts(parts, true)?;
    let n = parts[0].nsim() + 1;
    let d = parts.len();
    let mut values = vec![0.0; n * d];
    let mut excluded_points = 0;
    for (j, p) in parts.iter().enumerate() {
        let col = deviation_measures(p, measure)?;
        excluded_points += col.excluded_points;
        for (i, v) in col.values.into_iter().enumerate() {
            values[i * d + j] = v;
        }
    }
    Ok(DeviationVector {
        names: parts.iter().map(|p| p.name.clone()).collect(),
        measure,
        matrix: TestMatrix::from_flat(n, d, values, vec![Side::Upper; d])?,
        excluded_points,
    })
}

/// One-sided rank test on the deviation matrix.
pub fn combined_deviation_test(devs: &DeviationVector, alpha: f64) -> Result<RankTestResult> {
    run_rank_test(&devs.matrix, alpha)
}
