//! Null-model fitting: CSR intensity and Matérn cluster minimum contrast.

use std::f64::consts::PI;
use std::str::FromStr;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use super::models::Model;
use super::pattern::PointPattern;
use super::summary::{equispaced_grid, pair_correlation, STOYAN};
use crate::combined::trapezoid_weights;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFamily {
    /// Homogeneous Poisson with the observed intensity.
    Csr,
    /// Matérn cluster process by pair-correlation minimum contrast.
    MatClust,
}

impl FromStr for FitFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csr" | "poisson" => Ok(FitFamily::Csr),
            "matclust" | "mat-clust" | "matern" => Ok(FitFamily::MatClust),
            other => Err(Error::Parameter(format!("unknown model family `{other}` (expected csr or matclust)"))),
        }
    }
}

/// Settings of the minimum contrast fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastOptions {
    pub q: f64,
    /// Lower end of the contrast range; the kernel bandwidth when `None`.
    pub rmin: Option<f64>,
    pub rmax: f64,
    pub points: usize,
    pub max_iters: u64,
}

impl ContrastOptions {
    pub fn new(rmax: f64) -> Self {
        ContrastOptions { q: 0.25, rmin: None, rmax, points: 128, max_iters: 400 }
    }
}

/// Pair correlation function of the Matérn cluster process with parent
/// intensity `kappa` and cluster radius `radius`.
pub fn matclust_pcf(r: f64, kappa: f64, radius: f64) -> f64 {
    if r >= 2.0 * radius {
        return 1.0;
    }
    let overlap = 2.0 * radius * radius * (r / (2.0 * radius)).acos() - 0.5 * r * (4.0 * radius * radius - r * r).sqrt();
    1.0 + overlap / (kappa * PI * PI * radius.powi(4))
}

struct Contrast {
    grid: Vec<f64>,
    weights: Vec<f64>,
    target: Vec<f64>,
    q: f64,
    bounds: [(f64, f64); 2],
}

impl Contrast {
    fn objective(&self, theta: &[f64]) -> f64 {
        let (lk, lr) = (theta[0], theta[1]);
        if !(lk >= self.bounds[0].0 && lk <= self.bounds[0].1 && lr >= self.bounds[1].0 && lr <= self.bounds[1].1) {
            return f64::MAX;
        }
        let (kappa, radius) = (lk.exp(), lr.exp());
        self.grid
            .iter()
            .zip(&self.weights)
            .zip(&self.target)
            .map(|((&r, w), t)| w * (t - matclust_pcf(r, kappa, radius).powf(self.q)).powi(2))
            .sum()
    }
}

impl CostFunction for Contrast {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.objective(p))
    }
}

/// Fits `(kappa, R)` by minimising the integrated squared difference of
/// `g^q` over the contrast range; the mean cluster size follows from the
/// observed intensity.
pub fn fit_matclust(p: &PointPattern, opts: &ContrastOptions) -> Result<Model> {
    let n = p.len();
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 points to fit a cluster model, found {n}")));
    }
    let w = p.window();
    let lambda = p.intensity();
    let rmin = opts.rmin.unwrap_or(STOYAN / lambda.sqrt());
    if !(rmin > 0.0 && rmin < opts.rmax) || opts.points < 2 {
        return Err(Error::Parameter(format!("invalid contrast range [{rmin}, {}]", opts.rmax)));
    }
    let grid = equispaced_grid(rmin, opts.rmax, opts.points);
    let target: Vec<f64> = pair_correlation(p, &grid, None)?.into_iter().map(|g| g.max(0.0).powf(opts.q)).collect();
    let side = w.width().max(w.height());
    let bounds = [((0.1 / w.area()).ln(), (100.0 * lambda).ln()), ((1e-3 * side).ln(), (0.5 * side).ln())];
    let problem = Contrast { weights: trapezoid_weights(&grid), grid, target, q: opts.q, bounds };

    // coarse log grid for the starting simplex
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for a in 0..=24 {
        for b in 0..=24 {
            let th = [
                bounds[0].0 + (bounds[0].1 - bounds[0].0) * a as f64 / 24.0,
                bounds[1].0 + (bounds[1].1 - bounds[1].0) * b as f64 / 24.0,
            ];
            let v = problem.objective(&th);
            if v < best.0 {
                best = (v, th);
            }
        }
    }
    let [k0, r0] = best.1;
    let simplex = vec![vec![k0, r0], vec![k0 + 0.3, r0], vec![k0, r0 + 0.15]];
    let fail = |objective: f64, th: [f64; 2]| Error::FitFailed { objective, kappa: th[0].exp(), radius: th[1].exp() };
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).map_err(|_| fail(best.0, best.1))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(|_| fail(best.0, best.1))?;
    let state = res.state();
    let theta = state.get_best_param().cloned().unwrap_or_else(|| best.1.to_vec());
    let cost = state.get_best_cost();
    if !cost.is_finite() || cost >= f64::MAX || !theta.iter().all(|v| v.is_finite()) {
        return Err(fail(cost, [theta[0], theta[1]]));
    }
    let (kappa, radius) = (theta[0].exp(), theta[1].exp());
    Ok(Model::mat_clust(kappa, radius, n as f64 / (kappa * w.area())))
}

/// Fitted null model for `family`; `rmax` bounds the contrast range.
pub fn fit_null(family: FitFamily, p: &PointPattern, rmax: f64) -> Result<Model> {
    if p.is_empty() {
        return Err(Error::Parameter("cannot fit a model to an empty pattern".into()));
    }
    match family {
        FitFamily::Csr => Ok(Model::csr(p.intensity())),
        FitFamily::MatClust => fit_matclust(p, &ContrastOptions::new(rmax)),
    }
}
