//! Monte Carlo pipelines for point patterns and the replicated power study.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

use crate::combined::{concatenate, CombinedCurveSet, CurveSet};
use crate::envelope::{run_rank_test, RankTestResult};
use crate::error::{Error, Result};
use crate::rank::Side;
use crate::rng::Seed;
use crate::spatial::summary::{estimate_summary, j_from, EdgeCorrection, SummaryFunction, SummarySpec};
use crate::spatial::{fit_null, random_shift, FitFamily, Model, PointPattern, Window};

/// Equally spaced distance grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rmin: f64,
    pub rmax: f64,
    pub k: usize,
}

impl GridSpec {
    pub const DEFAULT_K: usize = 500;

    pub fn new(rmin: f64, rmax: f64, k: usize) -> Result<Self> {
        let g = GridSpec { rmin, rmax, k };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rmin.is_finite() && self.rmax.is_finite() && self.rmin < self.rmax) {
            return Err(Error::Parameter(format!("need rmin < rmax, got [{}, {}]", self.rmin, self.rmax)));
        }
        if self.k == 0 {
            return Err(Error::Parameter("grid needs at least one point".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        crate::spatial::equispaced_grid(self.rmin, self.rmax, self.k)
    }
}

/// Null hypothesis of a goodness-of-fit test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullSpec {
    Known(Model),
    Fitted(FitFamily),
}

impl NullSpec {
    pub fn resolve(&self, p: &PointPattern, grid: &GridSpec) -> Result<Model> {
        match self {
            NullSpec::Known(m) => Ok(m.clone()),
            NullSpec::Fitted(f) => fit_null(*f, p, grid.rmax),
        }
    }
}

/// Rank test orientation used for a summary function.
pub fn function_side(_f: SummaryFunction) -> Side {
    Side::TwoSided
}

/// Estimates several summary functions on one pattern, sharing the G and F
/// estimates between G, F and J. `edge` overrides the per-function default.
pub fn estimate_functions(
    p: &PointPattern,
    functions: &[SummaryFunction],
    grid: &[f64],
    edge: Option<EdgeCorrection>,
) -> Result<Vec<Vec<f64>>> {
    let mut g_cache: Option<Vec<f64>> = None;
    let mut f_cache: Option<Vec<f64>> = None;
    let spec = |f: SummaryFunction| {
        let s = SummarySpec::new(f, grid.to_vec());
        match edge {
            Some(e) => s.with_edge(e),
            None => s,
        }
    };
    let get = |f: SummaryFunction, cache: &mut Option<Vec<f64>>| -> Result<Vec<f64>> {
        if cache.is_none() {
            *cache = Some(estimate_summary(p, &spec(f))?);
        }
        Ok(cache.clone().expect("filled above"))
    };
    functions
        .iter()
        .map(|&f| match f {
            SummaryFunction::G => get(SummaryFunction::G, &mut g_cache),
            SummaryFunction::F => get(SummaryFunction::F, &mut f_cache),
            SummaryFunction::J => {
                let g = get(SummaryFunction::G, &mut g_cache)?;
                let fv = get(SummaryFunction::F, &mut f_cache)?;
                Ok(j_from(&g, &fv))
            }
            other => estimate_summary(p, &spec(other)),
        })
        .collect()
}

fn dedup_functions(functions: &[SummaryFunction]) -> Vec<SummaryFunction> {
    let mut out: Vec<SummaryFunction> = Vec::new();
    for &f in functions {
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

/// Options shared by the pattern-based pipelines.
#[derive(Debug, Clone, PartialEq)]
pub struct GofOptions {
    pub functions: Vec<SummaryFunction>,
    pub grid: GridSpec,
    pub nsim: usize,
    pub alpha: f64,
    pub edge: Option<EdgeCorrection>,
}

/// Curve sets of the observed pattern(s) and their simulations.
#[derive(Debug, Clone)]
pub struct GofOutcome {
    pub parts: Vec<CurveSet>,
    pub combined: CombinedCurveSet,
    pub result: RankTestResult,
    /// Null model used for each pattern.
    pub models: Vec<Model>,
}

/// Rows `0..=s` of every requested function: the observed pattern and `s`
/// simulations of `model`, simulation `k` drawn from substream `k` of `seed`.
fn simulate_rows(
    observed: &PointPattern,
    model: &Model,
    functions: &[SummaryFunction],
    grid: &[f64],
    edge: Option<EdgeCorrection>,
    nsim: usize,
    seed: Seed,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let first = estimate_functions(observed, functions, grid, edge)?;
    let sims: Vec<Vec<Vec<f64>>> = (1..=nsim as u64)
        .into_par_iter()
        .map(|k| {
            let p = model.generate(observed.window(), &mut seed.child(k).rng())?;
            estimate_functions(&p, functions, grid, edge)
        })
        .collect::<Result<_>>()?;
    Ok(std::iter::once(first).chain(sims).collect())
}

fn rows_to_parts(rows: Vec<Vec<Vec<f64>>>, functions: &[SummaryFunction], grid: &[f64], suffix: &str) -> Result<Vec<CurveSet>> {
    functions
        .iter()
        .enumerate()
        .map(|(fi, &f)| {
            let curves: Vec<f64> = rows.iter().flat_map(|r| r[fi].iter().copied()).collect();
            CurveSet::from_flat(format!("{f}{suffix}"), grid.to_vec(), curves, function_side(f))
        })
        .collect()
}

fn check_options(opts: &GofOptions) -> Result<()> {
    opts.grid.validate()?;
    if opts.functions.is_empty() {
        return Err(Error::Parameter("no test functions requested".into()));
    }
    if opts.nsim == 0 {
        return Err(Error::Parameter("need at least one simulation".into()));
    }
    Ok(())
}

/// Goodness-of-fit test of one pattern with the concatenated functions.
pub fn gof_test(p: &PointPattern, null: &NullSpec, opts: &GofOptions, seed: Seed) -> Result<GofOutcome> {
    gof_test_multi(std::slice::from_ref(p), null, opts, seed)
}

/// Joint test of several patterns: each pattern gets its own (possibly
/// fitted) null model and simulations; all curves are concatenated into one
/// test with a global level. Pattern `m` uses substream `m` of `seed`.
pub fn gof_test_multi(patterns: &[PointPattern], null: &NullSpec, opts: &GofOptions, seed: Seed) -> Result<GofOutcome> {
    check_options(opts)?;
    if patterns.is_empty() {
        return Err(Error::Parameter("no patterns given".into()));
    }
    let grid = opts.grid.values();
    let functions = dedup_functions(&opts.functions);
    let mut parts = Vec::new();
    let mut models = Vec::new();
    for (m, p) in patterns.iter().enumerate() {
        let model = null.resolve(p, &opts.grid)?;
        let stream = if patterns.len() == 1 { seed } else { seed.child(m as u64) };
        let rows = simulate_rows(p, &model, &functions, &grid, opts.edge, opts.nsim, stream)?;
        let suffix = if patterns.len() == 1 { String::new() } else { format!("[{}]", m + 1) };
        parts.extend(rows_to_parts(rows, &functions, &grid, &suffix)?);
        models.push(model);
    }
    let combined = concatenate(&parts, false)?;
    let result = run_rank_test(&combined.matrix, opts.alpha)?;
    Ok(GofOutcome { parts, combined, result, models })
}

/// Type pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn type_pairs(types: &[u32]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for (a, &i) in types.iter().enumerate() {
        for &j in &types[a + 1..] {
            out.push((i, j));
        }
    }
    out
}

/// Random superposition test of a marked pattern: one cross-L part per type
/// pair, simulations shift every type but the smallest on the torus.
pub fn shift_test(p: &PointPattern, grid: &GridSpec, nsim: usize, alpha: f64, seed: Seed) -> Result<GofOutcome> {
    grid.validate()?;
    if nsim == 0 {
        return Err(Error::Parameter("need at least one simulation".into()));
    }
    let types = p.types();
    if p.marks().is_none() || types.len() < 2 {
        return Err(Error::Parameter("shift test needs a marked pattern with at least two types".into()));
    }
    let functions: Vec<SummaryFunction> = type_pairs(&types).into_iter().map(|(i, j)| SummaryFunction::CrossL(i, j)).collect();
    let r = grid.values();
    let fixed = [types[0]];
    let first = estimate_functions(p, &functions, &r, None)?;
    let sims: Vec<Vec<Vec<f64>>> = (1..=nsim as u64)
        .into_par_iter()
        .map(|k| {
            let q = random_shift(p, &fixed, seed.child(k))?;
            estimate_functions(&q, &functions, &r, None)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<Vec<f64>>> = std::iter::once(first).chain(sims).collect();
    let parts = rows_to_parts(rows, &functions, &r, "")?;
    let combined = concatenate(&parts, false)?;
    let result = run_rank_test(&combined.matrix, alpha)?;
    Ok(GofOutcome { parts, combined, result, models: Vec::new() })
}

/// 2.5% and 97.5% quantiles of Binomial(n, p), as proportions.
pub fn binomial_band(n: usize, p: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let b = Binomial::new(p, n as u64).expect("valid binomial parameters");
    (b.inverse_cdf(0.025) as f64 / n as f64, b.inverse_cdf(0.975) as f64 / n as f64)
}

/// Exact (Clopper–Pearson) 95% interval for a proportion.
pub fn clopper_pearson(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let lo = if k == 0 { 0.0 } else { Beta::new(k as f64, (n - k + 1) as f64).unwrap().inverse_cdf(0.025) };
    let hi = if k == n { 1.0 } else { Beta::new((k + 1) as f64, (n - k) as f64).unwrap().inverse_cdf(0.975) };
    (lo, hi)
}

/// One row of a study table: a true model tested against a null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub label: String,
    pub true_model: Model,
    pub null: NullSpec,
    /// Function combinations, each evaluated on the same replicates.
    pub combos: Vec<Vec<SummaryFunction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub cells: Vec<StudyCell>,
    pub replicates: usize,
    pub nsim: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub grid: GridSpec,
    #[serde(default = "Window::unit_square")]
    pub window: Window,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub edge: Option<EdgeCorrection>,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboRate {
    pub functions: Vec<SummaryFunction>,
    pub rejections: usize,
    pub rate: f64,
    /// Clopper–Pearson 95% interval of the rate.
    pub ci: (f64, f64),
    /// Central 95% range of the rate if the true level were `alpha`.
    pub level_band: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub replicates: usize,
    /// Replicates that failed (fit or estimation errors) and were excluded.
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failure_messages: Vec<String>,
    pub rates: Vec<ComboRate>,
}

impl CellReport {
    pub fn rate_of(&self, functions: &[SummaryFunction]) -> Option<&ComboRate> {
        self.rates.iter().find(|r| r.functions == functions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub alpha: f64,
    pub nsim: usize,
    pub replicates: usize,
    pub seed: u64,
    pub cells: Vec<CellReport>,
    pub elapsed_seconds: f64,
}

/// Rejections (`p_erc <= alpha`) of one replicate, one flag per combo.
fn replicate(cell: &StudyCell, cfg: &StudyConfig, grid: &[f64], functions: &[SummaryFunction], seed: Seed) -> Result<Vec<bool>> {
    let data = cell.true_model.generate(&cfg.window, &mut seed.child(0).rng())?;
    let model = cell.null.resolve(&data, &cfg.grid)?;
    let rows = simulate_rows_seq(&data, &model, functions, grid, cfg.edge, cfg.nsim, seed)?;
    let parts = rows_to_parts(rows, functions, grid, "")?;
    cell.combos
        .iter()
        .map(|combo| {
            let chosen: Vec<CurveSet> = combo
                .iter()
                .map(|f| parts[functions.iter().position(|g| g == f).expect("union holds every combo member")].clone())
                .collect();
            let res = run_rank_test(&concatenate(&chosen, false)?.matrix, cfg.alpha)?;
            Ok(res.p_erc <= cfg.alpha)
        })
        .collect()
}

fn simulate_rows_seq(
    observed: &PointPattern,
    model: &Model,
    functions: &[SummaryFunction],
    grid: &[f64],
    edge: Option<EdgeCorrection>,
    nsim: usize,
    seed: Seed,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut rows = Vec::with_capacity(nsim + 1);
    rows.push(estimate_functions(observed, functions, grid, edge)?);
    for k in 1..=nsim as u64 {
        let p = model.generate(observed.window(), &mut seed.child(k).rng())?;
        rows.push(estimate_functions(&p, functions, grid, edge)?);
    }
    Ok(rows)
}

/// Runs every cell for `cfg.replicates` replicates. Replicate `r` of cell
/// `c` uses substream `(c, r)`; its data come from sub-substream 0 and its
/// simulations from `1..=s`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.grid.validate()?;
    cfg.window.validate()?;
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if cfg.nsim == 0 || cfg.replicates == 0 {
        return Err(Error::Parameter("need at least one simulation and one replicate".into()));
    }
    let start = Instant::now();
    let grid = cfg.grid.values();
    let root = Seed::new(cfg.seed);
    let mut cells = Vec::with_capacity(cfg.cells.len());
    for (ci, cell) in cfg.cells.iter().enumerate() {
        if cell.combos.is_empty() || cell.combos.iter().any(Vec::is_empty) {
            return Err(Error::Parameter(format!("cell `{}` has an empty function combination", cell.label)));
        }
        cell.true_model.validate()?;
        let functions = dedup_functions(&cell.combos.concat());
        let cell_seed = root.child(ci as u64);
        let outcomes: Vec<Result<Vec<bool>>> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| replicate(cell, cfg, &grid, &functions, cell_seed.child(r)))
            .collect();
        let mut counts = vec![0usize; cell.combos.len()];
        let mut ok = 0;
        let mut failure_messages = Vec::new();
        for (r, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(flags) => {
                    ok += 1;
                    for (c, f) in counts.iter_mut().zip(flags) {
                        *c += f as usize;
                    }
                }
                Err(e) => {
                    log::warn!("cell `{}` replicate {r} failed: {e}", cell.label);
                    failure_messages.push(format!("replicate {r}: {e}"));
                }
            }
        }
        let rates = cell
            .combos
            .iter()
            .zip(&counts)
            .map(|(combo, &k)| ComboRate {
                functions: combo.clone(),
                rejections: k,
                rate: if ok > 0 { k as f64 / ok as f64 } else { f64::NAN },
                ci: clopper_pearson(k, ok),
                level_band: binomial_band(ok, cfg.alpha),
            })
            .collect();
        cells.push(CellReport {
            label: cell.label.clone(),
            replicates: ok,
            failures: cfg.replicates - ok,
            failure_messages,
            rates,
        });
    }
    Ok(StudyReport {
        alpha: cfg.alpha,
        nsim: cfg.nsim,
        replicates: cfg.replicates,
        seed: cfg.seed,
        cells,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_band_matches_quoted_interval() {
        let (lo, hi) = binomial_band(1000, 0.05);
        assert!((lo - 0.037).abs() < 1e-12 && (hi - 0.064).abs() < 1e-12, "{lo} {hi}");
    }

    #[test]
    fn clopper_pearson_brackets_rate() {
        let (lo, hi) = clopper_pearson(50, 1000);
        assert!(lo < 0.05 && 0.05 < hi && hi - lo < 0.03);
        assert_eq!(clopper_pearson(0, 10).0, 0.0);
        assert_eq!(clopper_pearson(10, 10).1, 1.0);
    }

    #[test]
    fn pairs_in_order() {
        assert_eq!(type_pairs(&[1, 2, 3, 4]), vec![(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]);
    }

    #[test]
    fn shared_j_equals_direct_estimate() {
        let p = Model::csr(150.0).generate(&Window::unit_square(), &mut Seed::new(1).rng()).unwrap();
        let grid = GridSpec::new(0.0, 0.1, 30).unwrap().values();
        let fns = [SummaryFunction::J, SummaryFunction::G, SummaryFunction::L];
        let shared = estimate_functions(&p, &fns, &grid, None).unwrap();
        for (f, v) in fns.iter().zip(&shared) {
            assert_eq!(v, &estimate_summary(&p, &SummarySpec::new(*f, grid.clone())).unwrap());
        }
    }

    #[test]
    fn gof_single_function_matches_direct_rank_test() {
        let p = Model::csr(100.0).generate(&Window::unit_square(), &mut Seed::new(2).rng()).unwrap();
        let opts = GofOptions {
            functions: vec![SummaryFunction::L],
            grid: GridSpec::new(0.0, 0.1, 20).unwrap(),
            nsim: 39,
            alpha: 0.05,
            edge: None,
        };
        let out = gof_test(&p, &NullSpec::Known(Model::csr(100.0)), &opts, Seed::new(3)).unwrap();
        let direct = run_rank_test(&out.parts[0].to_test_matrix(), 0.05).unwrap();
        assert_eq!(out.result, direct);
    }
}
