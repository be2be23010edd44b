//! p-values, p-intervals, the critical rank and global envelopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank::{
    erc_ranks, extreme_ranks, pointwise_ranks, ErcRankVector, ExtremeRankVector, Side, TestMatrix,
};

/// Liberal and conservative Monte Carlo p-values, `(p_minus, p_plus]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PInterval {
    pub p_minus: f64,
    pub p_plus: f64,
}

impl PInterval {
    pub fn width(&self) -> f64 {
        self.p_plus - self.p_minus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Reject,
    NotReject,
    Undecided,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Reject => "reject",
            Decision::NotReject => "not-reject",
            Decision::Undecided => "undecided",
        }
    }
}

/// Pointwise hull of the vectors whose extreme rank is at least `R(alpha)`.
/// Unbounded sides of one-sided components are infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalEnvelope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub critical_rank: f64,
    pub alpha: f64,
}

impl GlobalEnvelope {
    /// Components where `values` leaves the closed envelope.
    pub fn outside(&self, values: &[f64]) -> Vec<usize> {
        values
            .iter()
            .enumerate()
            .filter(|(j, &v)| v < self.lower[*j] || v > self.upper[*j])
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTestResult {
    pub nsim: usize,
    pub alpha: f64,
    pub p_interval: PInterval,
    pub p_erc: f64,
    /// Extreme rank `R_1` of the observed vector.
    pub observed_rank: f64,
    pub envelope: GlobalEnvelope,
    pub decision: Decision,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn p_interval(r: &ExtremeRankVector) -> PInterval {
    let r1 = r.observed();
    let n = r.len() as f64;
    let below = r.as_slice().iter().filter(|&&v| v < r1).count() as f64;
    let at_most = r.as_slice().iter().filter(|&&v| v <= r1).count() as f64;
    PInterval { p_minus: below / n, p_plus: at_most / n }
}

/// Conservative p-value of the extreme rank count ordering.
pub fn p_erc(c: &ErcRankVector) -> f64 {
    let c1 = c.observed();
    c.as_slice().iter().filter(|&&v| v <= c1).count() as f64 / c.len() as f64
}

/// Smallest extreme rank value whose lower tail holds at least
/// `alpha * (s + 1)` vectors.
pub fn critical_rank(r: &ExtremeRankVector, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let target = alpha * r.len() as f64;
    let mut sorted = r.as_slice().to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    // sorted[k] is a candidate; its lower-tail count is the index past its last copy
    let mut k = 0;
    while k < sorted.len() {
        let v = sorted[k];
        let mut end = k + 1;
        while end < sorted.len() && sorted[end] == v {
            end += 1;
        }
        if end as f64 >= target {
            return Ok(v);
        }
        k = end;
    }
    Ok(sorted[sorted.len() - 1])
}

pub fn build_envelope(m: &TestMatrix, r: &ExtremeRankVector, alpha: f64) -> Result<GlobalEnvelope> {
    if r.len() != m.nrows() {
        return Err(Error::Dimension(format!(
            "{} extreme ranks for a matrix with {} rows",
            r.len(),
            m.nrows()
        )));
    }
    let critical = critical_rank(r, alpha)?;
    let kept: Vec<usize> = (0..m.nrows()).filter(|&i| r.as_slice()[i] >= critical).collect();
    if kept.is_empty() {
        return Err(Error::EmptyEnvelope { alpha, critical_rank: critical });
    }
    let d = m.dim();
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for &i in &kept {
        for (j, &v) in m.row(i).iter().enumerate() {
            lower[j] = lower[j].min(v);
            upper[j] = upper[j].max(v);
        }
    }
    for (j, side) in m.sides().iter().enumerate() {
        match side {
            Side::Lower => upper[j] = f64::INFINITY,
            Side::Upper => lower[j] = f64::NEG_INFINITY,
            Side::TwoSided => {}
        }
    }
    Ok(GlobalEnvelope { lower, upper, critical_rank: critical, alpha })
}

pub fn decide(observed_rank: f64, critical_rank: f64) -> Decision {
    if observed_rank < critical_rank {
        Decision::Reject
    } else if observed_rank > critical_rank {
        Decision::NotReject
    } else {
        Decision::Undecided
    }
}

/// Full rank envelope test: p-interval, erc p-value, envelope and decision.
pub fn run_rank_test(m: &TestMatrix, alpha: f64) -> Result<RankTestResult> {
    check_alpha(alpha)?;
    let pr = pointwise_ranks(m);
    let r = extreme_ranks(&pr);
    let erc = erc_ranks(&pr);
    let envelope = build_envelope(m, &r, alpha)?;
    Ok(RankTestResult {
        nsim: m.nsim(),
        alpha,
        p_interval: p_interval(&r),
        p_erc: p_erc(&erc),
        observed_rank: r.observed(),
        decision: decide(r.observed(), envelope.critical_rank),
        envelope,
    })
}

/// Pointwise median of the simulated rows. A plotting aid only.
pub fn central_curve(m: &TestMatrix) -> Vec<f64> {
    let mut buf = Vec::with_capacity(m.nsim());
    (0..m.dim())
        .map(|j| {
            buf.clear();
            buf.extend(m.column(j).skip(1));
            buf.sort_unstable_by(f64::total_cmp);
            let n = buf.len();
            if n % 2 == 1 {
                buf[n / 2]
            } else {
                0.5 * (buf[n / 2 - 1] + buf[n / 2])
            }
        })
        .collect()
}

/// Shape of the test vector when choosing the number of simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    /// A few weakly correlated components.
    LowDim { d: usize, side: Side },
    /// `k` discretized test functions.
    Functions { k: usize },
}

/// Maximum p-interval width aimed for at `alpha = 0.05`.
pub const DEFAULT_MAX_WIDTH: f64 = 0.01;

/// Simulations needed per test function at `alpha = 0.05`.
pub const SIMULATIONS_PER_FUNCTION: usize = 2500;

/// Recommended number of simulations `s`.
///
/// For low-dimensional vectors this is the smallest `s` whose worst-case
/// p-interval width (`2d/(s+1)` two-sided, `d/(s+1)` one-sided) does not
/// exceed `max_width`.
pub fn recommend_simulations(kind: VectorKind, max_width: f64) -> Result<usize> {
    match kind {
        VectorKind::LowDim { d, side } => {
            if d == 0 {
                return Err(Error::Parameter("dimension must be at least 1".into()));
            }
            if !(max_width > 0.0 && max_width <= 1.0) {
                return Err(Error::Parameter(format!("width target must lie in (0, 1], got {max_width}")));
            }
            let ties = match side {
                Side::TwoSided => 2 * d,
                Side::Lower | Side::Upper => d,
            } as f64;
            // s + 1 >= ties / width; the small slack absorbs representation error in the target
            let needed = (ties / max_width - 1e-9).ceil() as usize;
            Ok(needed.max(2) - 1)
        }
        VectorKind::Functions { k } => {
            if k == 0 {
                return Err(Error::Parameter("need at least one test function".into()));
            }
            Ok(k * SIMULATIONS_PER_FUNCTION)
        }
    }
}
