//! Summary function estimators: Ripley's K and L, the empty space function
//! F, the nearest-neighbour distance distribution G, J = (1 - G)/(1 - F),
//! the bivariate cross-L and the kernel pair correlation function.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::index::CellGrid;
use super::pattern::{PointPattern, Window};
use crate::error::{Error, Result};

/// J is carried forward where `1 - F(r)` drops to this value or below.
pub const J_TRUNCATION_EPS: f64 = 1e-6;

/// Default side length of the F-function evaluation lattice.
pub const F_LATTICE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SummaryFunction {
    L,
    F,
    G,
    J,
    /// Bivariate L from points of the first type to points of the second.
    CrossL(u32, u32),
}

impl fmt::Display for SummaryFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SummaryFunction::L => f.write_str("L"),
            SummaryFunction::F => f.write_str("F"),
            SummaryFunction::G => f.write_str("G"),
            SummaryFunction::J => f.write_str("J"),
            SummaryFunction::CrossL(i, j) => write!(f, "L_{i}_{j}"),
        }
    }
}

impl FromStr for SummaryFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_uppercase().as_str() {
            "L" => return Ok(SummaryFunction::L),
            "F" => return Ok(SummaryFunction::F),
            "G" => return Ok(SummaryFunction::G),
            "J" => return Ok(SummaryFunction::J),
            _ => {}
        }
        let parts: Vec<&str> = t.split('_').collect();
        if parts.len() == 3 && parts[0].eq_ignore_ascii_case("L") {
            if let (Ok(i), Ok(j)) = (parts[1].parse(), parts[2].parse()) {
                return Ok(SummaryFunction::CrossL(i, j));
            }
        }
        Err(Error::Parameter(format!("unknown summary function `{t}` (expected L, F, G, J or L_i_j)")))
    }
}

/// Parses a comma-separated list such as `L,F,G,J`.
pub fn parse_functions(s: &str) -> Result<Vec<SummaryFunction>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCorrection {
    None,
    Translational,
    /// Border (reduced sample) correction.
    Border,
    /// Distances measured on the torus spanned by the window.
    Periodic,
}

impl FromStr for EdgeCorrection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(EdgeCorrection::None),
            "translational" | "translate" | "trans" => Ok(EdgeCorrection::Translational),
            "border" | "rs" => Ok(EdgeCorrection::Border),
            "periodic" | "torus" => Ok(EdgeCorrection::Periodic),
            other => Err(Error::Parameter(format!("unknown edge correction `{other}`"))),
        }
    }
}

impl SummaryFunction {
    /// Edge correction used when none is requested: translational for the
    /// K-type functions, border for F, G and J.
    pub fn default_edge(self) -> EdgeCorrection {
        match self {
            SummaryFunction::L | SummaryFunction::CrossL(..) => EdgeCorrection::Translational,
            _ => EdgeCorrection::Border,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarySpec {
    pub function: SummaryFunction,
    pub grid: Vec<f64>,
    /// K-type functions accept every correction; F, G and J use the border
    /// correction for `Translational`.
    pub edge: EdgeCorrection,
    pub lattice: usize,
}

impl SummarySpec {
    pub fn new(function: SummaryFunction, grid: Vec<f64>) -> Self {
        SummarySpec { function, grid, edge: function.default_edge(), lattice: F_LATTICE }
    }

    pub fn with_edge(mut self, edge: EdgeCorrection) -> Self {
        self.edge = edge;
        self
    }

    pub fn validate(&self, window: &Window) -> Result<()> {
        let half = 0.5 * window.width().min(window.height());
        if self.grid.is_empty() {
            return Err(Error::Parameter("empty r grid".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("r grid must be strictly increasing".into()));
        }
        if self.grid[0] < 0.0 || self.grid[self.grid.len() - 1] > half + 1e-12 * half {
            return Err(Error::Parameter(format!("r grid must lie within [0, {half}]")));
        }
        if self.lattice == 0 {
            return Err(Error::Parameter("F lattice must be at least 1 x 1".into()));
        }
        Ok(())
    }
}

/// `k` equally spaced values from `rmin` to `rmax` inclusive.
pub fn equispaced_grid(rmin: f64, rmax: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![rmin],
        _ => (0..k).map(|i| rmin + (rmax - rmin) * i as f64 / (k - 1) as f64).collect(),
    }
}

pub fn estimate_summary(p: &PointPattern, spec: &SummarySpec) -> Result<Vec<f64>> {
    spec.validate(p.window())?;
    let grid = &spec.grid;
    match spec.function {
        SummaryFunction::L => Ok(k_to_l(k_function(p, grid, spec.edge)?)),
        SummaryFunction::F => f_function(p, grid, spec.edge, spec.lattice),
        SummaryFunction::G => g_function(p, grid, spec.edge),
        SummaryFunction::J => j_function(p, grid, spec.edge, spec.lattice),
        SummaryFunction::CrossL(i, j) => Ok(k_to_l(cross_k_function(p, i, j, grid, spec.edge)?)),
    }
}

fn k_to_l(k: Vec<f64>) -> Vec<f64> {
    k.into_iter().map(|v| (v.max(0.0) / std::f64::consts::PI).sqrt()).collect()
}

/// Index of the first grid value `>= d`.
#[inline]
fn first_at_least(grid: &[f64], d: f64) -> usize {
    partition(grid, d, |g| g < d)
}

/// Index of the first grid value `> b`.
#[inline]
fn first_above(grid: &[f64], b: f64) -> usize {
    partition(grid, b, |g| g <= b)
}

/// Partition point of a monotone predicate over the sorted grid. Tries the
/// position an equispaced grid would give first and checks it exactly.
#[inline]
fn partition(grid: &[f64], x: f64, below: impl Fn(f64) -> bool) -> usize {
    let k = grid.len();
    if k > 2 && x.is_finite() {
        let t = (x - grid[0]) / (grid[k - 1] - grid[0]) * (k - 1) as f64;
        let guess = t.clamp(0.0, k as f64) as usize;
        for i in guess.saturating_sub(1)..=(guess + 2).min(k) {
            if (i == 0 || below(grid[i - 1])) && (i == k || !below(grid[i])) {
                return i;
            }
        }
    }
    grid.partition_point(|&g| below(g))
}

/// Running sum of a difference array of length `K + 1`.
fn cumulate(mut diff: Vec<f64>) -> Vec<f64> {
    diff.pop();
    let mut acc = 0.0;
    for v in diff.iter_mut() {
        acc += *v;
        *v = acc;
    }
    diff
}

/// Ratio of two cumulated counts; carries the last value forward where the
/// denominator vanishes.
fn ratio_carry(num: &[f64], den: &[f64], start: f64) -> Vec<f64> {
    let mut last = start;
    num.iter()
        .zip(den)
        .map(|(n, d)| {
            if *d > 0.0 {
                last = n / d;
            }
            last
        })
        .collect()
}

fn translation_weight(w: &Window, dx: f64, dy: f64) -> f64 {
    w.area() / ((w.width() - dx.abs()) * (w.height() - dy.abs()))
}

fn torus_delta(d: f64, len: f64) -> f64 {
    let a = d.abs();
    a.min(len - a)
}

fn torus_dist(w: &Window, a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = torus_delta(a[0] - b[0], w.width());
    let dy = torus_delta(a[1] - b[1], w.height());
    (dx * dx + dy * dy).sqrt()
}

fn need_points(found: usize, needed: usize) -> Result<()> {
    if found < needed {
        Err(Error::Parameter(format!("need at least {needed} points, found {found}")))
    } else {
        Ok(())
    }
}

/// Ripley's K with the requested edge correction.
pub fn k_function(p: &PointPattern, grid: &[f64], edge: EdgeCorrection) -> Result<Vec<f64>> {
    let pts = p.points();
    let n = pts.len();
    need_points(n, 2)?;
    let w = p.window();
    let kk = grid.len();
    let rmax = grid[kk - 1];
    let mut diff = vec![0.0; kk + 1];
    let pairs_norm = w.area() / (n as f64 * (n - 1) as f64);
    match edge {
        EdgeCorrection::Periodic => {
            for i in 0..n {
                for j in i + 1..n {
                    let d = torus_dist(w, pts[i], pts[j]);
                    if d <= rmax {
                        diff[first_at_least(grid, d)] += 2.0;
                    }
                }
            }
            Ok(cumulate(diff).into_iter().map(|v| v * pairs_norm).collect())
        }
        EdgeCorrection::None | EdgeCorrection::Translational => {
            let index = CellGrid::new(pts, w, rmax.max(w.width().min(w.height()) / 256.0));
            for (i, &a) in pts.iter().enumerate() {
                index.for_each_within(a, rmax, |j, d| {
                    if j > i {
                        let wt = if edge == EdgeCorrection::Translational {
                            translation_weight(w, pts[j][0] - a[0], pts[j][1] - a[1])
                        } else {
                            1.0
                        };
                        diff[first_at_least(grid, d)] += 2.0 * wt;
                    }
                });
            }
            Ok(cumulate(diff).into_iter().map(|v| v * pairs_norm).collect())
        }
        EdgeCorrection::Border => {
            let b: Vec<f64> = pts.iter().map(|&q| w.border_distance(q)).collect();
            let mut den = vec![0.0; kk + 1];
            for &bi in &b {
                den[0] += 1.0;
                den[first_above(grid, bi)] -= 1.0;
            }
            let index = CellGrid::new(pts, w, rmax.max(w.width().min(w.height()) / 256.0));
            for (i, &a) in pts.iter().enumerate() {
                index.for_each_within(a, rmax, |j, d| {
                    if j > i {
                        let lo = first_at_least(grid, d);
                        for c in [i, j] {
                            let hi = first_above(grid, b[c]);
                            if lo < hi {
                                diff[lo] += 1.0;
                                diff[hi] -= 1.0;
                            }
                        }
                    }
                });
            }
            let lambda = n as f64 / w.area();
            let num = cumulate(diff);
            let den: Vec<f64> = cumulate(den).into_iter().map(|v| v * lambda).collect();
            Ok(ratio_carry(&num, &den, 0.0))
        }
    }
}

/// Bivariate K from points of type `from` to points of type `to`.
/// For `from == to` this is K of that type's subpattern.
pub fn cross_k_function(p: &PointPattern, from: u32, to: u32, grid: &[f64], edge: EdgeCorrection) -> Result<Vec<f64>> {
    if p.marks().is_none() {
        return Err(Error::Parameter("cross summary functions need a marked pattern".into()));
    }
    let a = p.subpattern(from);
    if from == to {
        if a.len() < 2 {
            return Err(Error::TooFewPoints { mark: from, needed: 2, found: a.len() });
        }
        return k_function(&a, grid, edge);
    }
    let b = p.subpattern(to);
    if a.is_empty() {
        return Err(Error::TooFewPoints { mark: from, needed: 1, found: 0 });
    }
    if b.is_empty() {
        return Err(Error::TooFewPoints { mark: to, needed: 1, found: 0 });
    }
    let w = p.window();
    let kk = grid.len();
    let rmax = grid[kk - 1];
    let (pa, pb) = (a.points(), b.points());
    let norm = w.area() / (pa.len() as f64 * pb.len() as f64);
    let mut diff = vec![0.0; kk + 1];
    match edge {
        EdgeCorrection::Periodic => {
            for &x in pa {
                for &y in pb {
                    let d = torus_dist(w, x, y);
                    if d <= rmax {
                        diff[first_at_least(grid, d)] += 1.0;
                    }
                }
            }
            Ok(cumulate(diff).into_iter().map(|v| v * norm).collect())
        }
        EdgeCorrection::None | EdgeCorrection::Translational => {
            let index = CellGrid::new(pb, w, rmax.max(w.width().min(w.height()) / 256.0));
            for &x in pa {
                index.for_each_within(x, rmax, |j, d| {
                    let wt = if edge == EdgeCorrection::Translational {
                        translation_weight(w, pb[j][0] - x[0], pb[j][1] - x[1])
                    } else {
                        1.0
                    };
                    diff[first_at_least(grid, d)] += wt;
                });
            }
            Ok(cumulate(diff).into_iter().map(|v| v * norm).collect())
        }
        EdgeCorrection::Border => {
            let mut den = vec![0.0; kk + 1];
            let index = CellGrid::new(pb, w, rmax.max(w.width().min(w.height()) / 256.0));
            for &x in pa {
                let bx = w.border_distance(x);
                let hi = first_above(grid, bx);
                den[0] += 1.0;
                den[hi] -= 1.0;
                index.for_each_within(x, rmax, |_, d| {
                    let lo = first_at_least(grid, d);
                    if lo < hi {
                        diff[lo] += 1.0;
                        diff[hi] -= 1.0;
                    }
                });
            }
            let lambda_to = pb.len() as f64 / w.area();
            let num = cumulate(diff);
            let den: Vec<f64> = cumulate(den).into_iter().map(|v| v * lambda_to).collect();
            Ok(ratio_carry(&num, &den, 0.0))
        }
    }
}

/// Empirical distribution of `dist` values on the grid, border corrected
/// with `border` distances when given.
fn distance_cdf(dist: &[f64], border: Option<&[f64]>, grid: &[f64]) -> Vec<f64> {
    let kk = grid.len();
    let mut num = vec![0.0; kk + 1];
    match border {
        None => {
            for &d in dist {
                num[first_at_least(grid, d)] += 1.0;
            }
            let total = dist.len().max(1) as f64;
            cumulate(num).into_iter().map(|v| v / total).collect()
        }
        Some(b) => {
            let mut den = vec![0.0; kk + 1];
            for (&d, &bi) in dist.iter().zip(b) {
                let hi = first_above(grid, bi);
                den[0] += 1.0;
                den[hi] -= 1.0;
                let lo = first_at_least(grid, d);
                if lo < hi {
                    num[lo] += 1.0;
                    num[hi] -= 1.0;
                }
            }
            ratio_carry(&cumulate(num), &cumulate(den), 0.0)
        }
    }
}

/// Nearest-neighbour distance distribution function G.
pub fn g_function(p: &PointPattern, grid: &[f64], edge: EdgeCorrection) -> Result<Vec<f64>> {
    let pts = p.points();
    need_points(pts.len(), 2)?;
    let w = p.window();
    let nn: Vec<f64> = if edge == EdgeCorrection::Periodic {
        (0..pts.len())
            .map(|i| {
                (0..pts.len())
                    .filter(|&j| j != i)
                    .map(|j| torus_dist(w, pts[i], pts[j]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    } else {
        let index = CellGrid::with_occupancy(pts, w, 2.0);
        pts.iter().enumerate().map(|(i, &q)| index.nearest(q, Some(i))).collect()
    };
    let border: Option<Vec<f64>> = match edge {
        EdgeCorrection::None | EdgeCorrection::Periodic => None,
        _ => Some(pts.iter().map(|&q| w.border_distance(q)).collect()),
    };
    Ok(distance_cdf(&nn, border.as_deref(), grid))
}

fn lattice(w: &Window, m: usize) -> Vec<[f64; 2]> {
    let (dx, dy) = (w.width() / m as f64, w.height() / m as f64);
    (0..m)
        .flat_map(|iy| (0..m).map(move |ix| [w.xmin + (ix as f64 + 0.5) * dx, w.ymin + (iy as f64 + 0.5) * dy]))
        .collect()
}

/// Empty space function F evaluated from an `m x m` lattice of cell centres.
pub fn f_function(p: &PointPattern, grid: &[f64], edge: EdgeCorrection, m: usize) -> Result<Vec<f64>> {
    let pts = p.points();
    let w = p.window();
    let probes = lattice(w, m);
    let dist: Vec<f64> = if edge == EdgeCorrection::Periodic {
        probes
            .iter()
            .map(|&x| pts.iter().map(|&q| torus_dist(w, x, q)).fold(f64::INFINITY, f64::min))
            .collect()
    } else {
        CellGrid::with_occupancy(pts, w, 2.0).nearest_batch(&probes)
    };
    let border: Option<Vec<f64>> = match edge {
        EdgeCorrection::None | EdgeCorrection::Periodic => None,
        _ => Some(probes.iter().map(|&x| w.border_distance(x)).collect()),
    };
    Ok(distance_cdf(&dist, border.as_deref(), grid))
}

/// `J = (1 - G) / (1 - F)`; where `1 - F <= J_TRUNCATION_EPS` the last
/// admissible value is carried forward (1 if there is none).
pub fn j_function(p: &PointPattern, grid: &[f64], edge: EdgeCorrection, m: usize) -> Result<Vec<f64>> {
    let g = g_function(p, grid, edge)?;
    let f = f_function(p, grid, edge, m)?;
    Ok(j_from(&g, &f))
}

pub(crate) fn j_from(g: &[f64], f: &[f64]) -> Vec<f64> {
    let mut last = 1.0;
    g.iter()
        .zip(f)
        .map(|(g, f)| {
            let free = 1.0 - f;
            if free > J_TRUNCATION_EPS {
                last = (1.0 - g) / free;
            }
            last
        })
        .collect()
}

/// Standard Stoyan bandwidth constant for the pair correlation estimate.
pub const STOYAN: f64 = 0.15;

/// Kernel estimate of the pair correlation function with translational
/// edge correction and an Epanechnikov kernel of half-width `bandwidth`
/// (default `STOYAN / sqrt(intensity)`). Grid values must be positive.
pub fn pair_correlation(p: &PointPattern, grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>> {
    let pts = p.points();
    let n = pts.len();
    need_points(n, 2)?;
    if grid.iter().any(|&r| r <= 0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("pair correlation grid must be positive and increasing".into()));
    }
    let w = p.window();
    let h = bandwidth.unwrap_or(STOYAN / p.intensity().sqrt());
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("bandwidth must be positive, got {h}")));
    }
    let reach = grid[grid.len() - 1] + h;
    let mut acc = vec![0.0; grid.len()];
    let index = CellGrid::new(pts, w, reach.max(w.width().min(w.height()) / 256.0));
    for (i, &a) in pts.iter().enumerate() {
        index.for_each_within(a, reach, |j, d| {
            if j > i {
                let wt = 2.0 * translation_weight(w, pts[j][0] - a[0], pts[j][1] - a[1]);
                let lo = first_at_least(grid, d - h);
                let hi = first_above(grid, d + h);
                for (k, slot) in acc.iter_mut().enumerate().take(hi).skip(lo) {
                    let u = (grid[k] - d) / h;
                    if u.abs() < 1.0 {
                        *slot += wt * 0.75 / h * (1.0 - u * u);
                    }
                }
            }
        });
    }
    let norm = w.area() / (n as f64 * (n - 1) as f64);
    Ok(acc
        .iter()
        .zip(grid)
        .map(|(v, r)| v * norm / (std::f64::consts::TAU * r))
        .collect())
}
