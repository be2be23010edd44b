//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `RANKENV_ACCEPT_ONLY=3,4` restricts the run to the listed criteria.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use rankenv::combined::{concatenate, two_stage_extreme_ranks, CurveSet};
use rankenv::envelope::{run_rank_test, Decision};
use rankenv::fanova::{permutation_engine, Construction, GroupedCurveSet, Scaling};
use rankenv::rank::{erc_ranks, extreme_ranks, pointwise_ranks, Side, TestMatrix};
use rankenv::spatial::{FitFamily, Model, SummaryFunction, Window};
use rankenv::study::{binomial_band, run_study, GridSpec, NullSpec, StudyCell, StudyConfig};
use rankenv::Seed;

const ALPHA: f64 = 0.05;
/// Open interval for the level at N = 1000.
const LEVEL_INTERVAL: (f64, f64) = (0.037, 0.064);
const DECISION_FIXTURES: usize = 10_000;
const DECISION_TIME_LIMIT_S: f64 = 10.0;
const POWER_MATCLUST: f64 = 0.789;
const POWER_MATCLUST_TOL: f64 = 0.08;
const MIX_L_MAX: f64 = 0.02;
const MIX_G: f64 = 0.949;
const MIX_G_TOL: f64 = 0.05;
const FITTED_F_MAX: f64 = 0.01;
const CHI_SQUARE_LEVEL: f64 = 0.01;

struct Report {
    failed: Vec<u32>,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        println!("{} [{id:>2}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

fn selected(id: u32) -> bool {
    match std::env::var("RANKENV_ACCEPT_ONLY") {
        Ok(list) => list.split(',').any(|t| t.trim().parse() == Ok(id)),
        Err(_) => true,
    }
}

fn random_side(rng: &mut impl Rng) -> Side {
    match rng.random_range(0..3) {
        0 => Side::Lower,
        1 => Side::Upper,
        _ => Side::TwoSided,
    }
}

/// Random matrix; with `ties`, values come from a small integer set and some
/// rows are copies of the observed one.
fn random_matrix(rng: &mut impl Rng, n: usize, d: usize, sides: Vec<Side>, ties: bool) -> TestMatrix {
    let levels = rng.random_range(2..6);
    let mut values: Vec<f64> = (0..n * d)
        .map(|_| if ties { rng.random_range(0..levels) as f64 } else { rng.sample(StandardNormal) })
        .collect();
    if ties && rng.random_bool(0.3) {
        for _ in 0..rng.random_range(1..4) {
            let i = rng.random_range(1..n);
            let first: Vec<f64> = values[..d].to_vec();
            values[i * d..(i + 1) * d].copy_from_slice(&first);
        }
    }
    TestMatrix::from_flat(n, d, values, sides).unwrap()
}

struct Fixture {
    m: TestMatrix,
    alpha: f64,
    ties: bool,
}

fn decision_fixtures() -> Vec<Fixture> {
    let mut rng = Seed::new(0xC1).rng();
    (0..DECISION_FIXTURES)
        .map(|i| {
            let s = rng.random_range(4..=200);
            let d = rng.random_range(1..=50);
            let sides = (0..d).map(|_| random_side(&mut rng)).collect();
            let ties = i % 2 == 0;
            let m = random_matrix(&mut rng, s + 1, d, sides, ties);
            let alpha = [0.01, 0.05, 0.1, rng.random_range(0.001..0.999)][i % 4];
            Fixture { m, alpha, ties }
        })
        .collect()
}

fn criteria_1_2(rep: &mut Report) {
    let fixtures = decision_fixtures();
    let start = Instant::now();
    let mut violations = 0;
    let mut off_boundary = 0;
    let mut width_errors = 0;
    let mut bound_errors = 0;
    let mut bound_checked = 0;
    let mut tied_over_bound = 0;
    for f in &fixtures {
        let res = run_rank_test(&f.m, f.alpha).unwrap();
        let (r1, ra) = (res.observed_rank, res.envelope.critical_rank);
        let (pm, pp) = (res.p_interval.p_minus, res.p_interval.p_plus);
        let ok = ((r1 < ra) == (pp <= f.alpha))
            && ((r1 > ra) == (pm > f.alpha))
            && ((r1 == ra) == (pm <= f.alpha && f.alpha < pp))
            && (res.decision == Decision::Reject) == (r1 < ra);
        if !ok {
            violations += 1;
            // exact boundary: a tail count equals alpha*(s+1)
            let an = f.alpha * f.m.nrows() as f64;
            let n = f.m.nrows() as f64;
            let on_edge = (an - an.round()).abs() < 1e-9
                && [(pm * n).round(), (pp * n).round()].contains(&an.round());
            off_boundary += !on_edge as usize;
        }

        let n = f.m.nrows();
        let r = extreme_ranks(&pointwise_ranks(&f.m));
        let tied = r.as_slice().iter().filter(|&&v| v == r1).count();
        // both p-values are multiples of 1/n; compare the counts exactly
        let width_count = (pp * n as f64).round() as usize - (pm * n as f64).round() as usize;
        width_errors += (width_count != tied) as usize;
        let bound: usize = f.m.sides().iter().map(|s| if *s == Side::TwoSided { 2 } else { 1 }).sum();
        if f.ties {
            tied_over_bound += (tied > bound) as usize;
        } else {
            bound_checked += 1;
            bound_errors += (tied > bound) as usize;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    rep.line(
        1,
        "decision equivalences",
        violations == 0 && secs < DECISION_TIME_LIMIT_S,
        format!(
            "{violations} violations in {} fixtures ({off_boundary} away from a tail count equal to alpha*(s+1)), \
             {secs:.2} s (limit {DECISION_TIME_LIMIT_S} s)",
            fixtures.len()
        ),
    );
    rep.line(
        2,
        "p-interval width",
        width_errors == 0 && bound_errors == 0,
        format!(
            "width != ties/(s+1) in {width_errors} fixtures; bound exceeded in {bound_errors} of {bound_checked} tie-free fixtures \
             (tied-value fixtures over the bound, not checked: {tied_over_bound})"
        ),
    );
}

fn study_grid() -> GridSpec {
    GridSpec::new(0.0, 0.125, 500).unwrap()
}

fn base_config(cells: Vec<StudyCell>, replicates: usize, seed: u64) -> StudyConfig {
    StudyConfig {
        cells,
        replicates,
        nsim: 999,
        alpha: ALPHA,
        grid: study_grid(),
        window: Window::unit_square(),
        seed,
        edge: None,
    }
}

fn in_open(x: f64, (lo, hi): (f64, f64)) -> bool {
    lo < x && x < hi
}

fn criteria_3_4(rep: &mut Report) {
    use SummaryFunction::*;
    let cell = StudyCell {
        label: "Poisson(200), known".into(),
        true_model: Model::csr(200.0),
        null: NullSpec::Known(Model::csr(200.0)),
        combos: vec![vec![L], vec![L, F, G, J]],
    };
    let start = Instant::now();
    let report = run_study(&base_config(vec![cell], 1000, 0xC3)).unwrap();
    let c = &report.cells[0];
    let secs = start.elapsed().as_secs_f64();
    for (id, combo, name) in [(3, vec![L], "level, L"), (4, vec![L, F, G, J], "level, L,F,G,J")] {
        let r = c.rate_of(&combo).unwrap();
        rep.line(
            id,
            name,
            c.failures == 0 && in_open(r.rate, LEVEL_INTERVAL),
            format!(
                "rate {:.3} ({}/{}), required in ({}, {}); {} failed replicates; {secs:.0} s shared",
                r.rate, r.rejections, c.replicates, LEVEL_INTERVAL.0, LEVEL_INTERVAL.1, c.failures
            ),
        );
    }
}

fn criterion_5(rep: &mut Report) {
    use SummaryFunction::*;
    let cells = vec![
        StudyCell {
            label: "MatClust(200, 0.06, 1) vs CSR".into(),
            true_model: Model::mat_clust(200.0, 0.06, 1.0),
            null: NullSpec::Fitted(FitFamily::Csr),
            combos: vec![vec![L]],
        },
        StudyCell {
            label: "MixMatClust vs MatClust".into(),
            true_model: Model::mix_mat_clust(),
            null: NullSpec::Fitted(FitFamily::MatClust),
            combos: vec![vec![L], vec![G]],
        },
    ];
    let start = Instant::now();
    let report = run_study(&base_config(cells, 200, 0xC5)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mc = report.cells[0].rate_of(&[L]).unwrap();
    let mix = &report.cells[1];
    let (ml, mg) = (mix.rate_of(&[L]).unwrap(), mix.rate_of(&[G]).unwrap());
    let pass = (mc.rate - POWER_MATCLUST).abs() <= POWER_MATCLUST_TOL
        && ml.rate <= MIX_L_MAX
        && (mg.rate - MIX_G).abs() <= MIX_G_TOL;
    rep.line(
        5,
        "power at reduced scale",
        pass,
        format!(
            "MatClust vs CSR, L: {:.3} (target {POWER_MATCLUST} +/- {POWER_MATCLUST_TOL}); MixMatClust vs MatClust, L: {:.3} \
             (max {MIX_L_MAX}), G: {:.3} (target {MIX_G} +/- {MIX_G_TOL}); failures {}/{}; {secs:.0} s",
            mc.rate,
            ml.rate,
            mg.rate,
            report.cells[0].failures,
            mix.failures
        ),
    );
}

fn criterion_6(rep: &mut Report) {
    let cell = StudyCell {
        label: "Poisson(200), fitted".into(),
        true_model: Model::csr(200.0),
        null: NullSpec::Fitted(FitFamily::Csr),
        combos: vec![vec![SummaryFunction::F]],
    };
    let start = Instant::now();
    let report = run_study(&base_config(vec![cell], 500, 0xC6)).unwrap();
    let r = &report.cells[0].rates[0];
    rep.line(
        6,
        "fitted CSR, F conservative",
        report.cells[0].failures == 0 && r.rate <= FITTED_F_MAX,
        format!(
            "rate {:.3} ({}/{}), required <= {FITTED_F_MAX}; {:.0} s",
            r.rate,
            r.rejections,
            report.cells[0].replicates,
            start.elapsed().as_secs_f64()
        ),
    );
}

fn criterion_7(rep: &mut Report) {
    let (d, s, reps) = (100, 99, 5000);
    let n = s + 1;
    let mut counts = vec![0usize; n];
    let mut rng = Seed::new(0xC7).rng();
    for _ in 0..reps {
        let m = random_matrix(&mut rng, n, d, vec![Side::TwoSided; d], false);
        let res = run_rank_test(&m, ALPHA).unwrap();
        let k = (res.p_erc * n as f64).round() as usize;
        counts[k - 1] += 1;
    }
    let expected = reps as f64 / n as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(stat);
    rep.line(
        7,
        "erc p-value uniformity",
        p > CHI_SQUARE_LEVEL,
        format!("chi-square {stat:.1} on {} df, p = {p:.3} (fail if <= {CHI_SQUARE_LEVEL})", n - 1),
    );
}

fn criterion_8(rep: &mut Report) {
    let mut rng = Seed::new(0xC8).rng();
    let mut mismatches = 0;
    for i in 0..1000 {
        let s = rng.random_range(4..=100);
        let nparts = rng.random_range(2..=5);
        let parts: Vec<CurveSet> = (0..nparts)
            .map(|p| {
                let k = rng.random_range(1..=30);
                let side = random_side(&mut rng);
                let m = random_matrix(&mut rng, s + 1, k, vec![side; k], i % 2 == 0);
                let args = (0..k).map(|j| j as f64).collect();
                CurveSet::from_flat(format!("part{p}"), args, m.values().to_vec(), side).unwrap()
            })
            .collect();
        let two_stage = two_stage_extreme_ranks(&parts).unwrap();
        let direct = extreme_ranks(&pointwise_ranks(&concatenate(&parts, true).unwrap().matrix));
        mismatches += (two_stage != direct) as usize;
    }
    rep.line(8, "two-stage extreme ranks", mismatches == 0, format!("{mismatches} mismatches in 1000 fixtures"));
}

/// Smooth random curves on `k` points: a few random Fourier terms plus noise.
fn synthetic_curve(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let coef: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal) / (1.0 + rng.random::<f64>())).collect();
    (0..k)
        .map(|j| {
            let t = j as f64 / (k - 1) as f64;
            let smooth: f64 = coef
                .iter()
                .enumerate()
                .map(|(h, c)| c * (std::f64::consts::PI * (h + 1) as f64 * t).sin())
                .sum();
            smooth + 0.3 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

fn criterion_9(rep: &mut Report) {
    let (k, reps, s) = (200, 500, 2499);
    let sizes = [10, 12, 8];
    let (lo, hi) = binomial_band(reps, ALPHA);
    let mut details = Vec::new();
    let mut pass = true;
    for (name, c) in [
        ("Fstat", Construction::Fstat { welch: false }),
        ("pairwise b=75", Construction::PairwiseDiff(Scaling::UnitVarMa(75))),
    ] {
        let start = Instant::now();
        let root = Seed::new(0xC9);
        let mut rejections = 0;
        for r in 0..reps as u64 {
            let mut rng = root.child(r).rng();
            let mut curves = Vec::new();
            let mut labels = Vec::new();
            for (g, &n) in sizes.iter().enumerate() {
                for _ in 0..n {
                    curves.push(synthetic_curve(&mut rng, k));
                    labels.push(format!("g{}", g + 1));
                }
            }
            let args = (0..k).map(|j| j as f64).collect();
            let g = GroupedCurveSet::new(args, curves, &labels, None).unwrap();
            let perm = permutation_engine(&g, c, s, root.child(r).child(1)).unwrap();
            let res = run_rank_test(&perm.matrix, ALPHA).unwrap();
            rejections += (res.p_erc <= ALPHA) as usize;
        }
        let rate = rejections as f64 / reps as f64;
        let ok = lo <= rate && rate <= hi;
        pass &= ok;
        details.push(format!("{name}: {rate:.3} ({:.0} s)", start.elapsed().as_secs_f64()));
    }
    rep.line(9, "fANOVA level", pass, format!("{}; band [{lo:.3}, {hi:.3}] at N={reps}", details.join(", ")));
}

/// Pairwise lexicographic oracle for the erc ranks.
fn erc_oracle(pr: &[Vec<f64>]) -> Vec<usize> {
    let sorted: Vec<Vec<f64>> = pr
        .iter()
        .map(|r| {
            let mut v = r.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        })
        .collect();
    sorted
        .iter()
        .map(|a| {
            sorted
                .iter()
                .filter(|b| {
                    let first_diff = b.iter().zip(a.iter()).find(|(x, y)| x != y);
                    matches!(first_diff, Some((x, y)) if x < y)
                })
                .count()
        })
        .collect()
}

/// Sort-based mid-ranks: position of the first and last copy in the sorted column.
fn rank_oracle(col: &[f64], side: Side) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = col.len() as f64;
    col.iter()
        .map(|v| {
            let first = sorted.iter().position(|x| x == v).unwrap() as f64;
            let last = sorted.iter().rposition(|x| x == v).unwrap() as f64;
            let r = (first + last) / 2.0 + 1.0;
            match side {
                Side::Lower => r,
                Side::Upper => n + 1.0 - r,
                Side::TwoSided => r.min(n + 1.0 - r),
            }
        })
        .collect()
}

fn criterion_10(rep: &mut Report) {
    let mut rng = Seed::new(0xCA).rng();
    let (mut erc_bad, mut rank_bad) = (0, 0);
    for i in 0..1000 {
        let n = rng.random_range(2..=100);
        let d = rng.random_range(1..=20);
        let sides: Vec<Side> = (0..d).map(|_| random_side(&mut rng)).collect();
        let m = random_matrix(&mut rng, n, d, sides.clone(), i % 3 != 0);
        let pr = pointwise_ranks(&m);
        for (j, side) in sides.iter().enumerate() {
            let col: Vec<f64> = m.column(j).collect();
            let want = rank_oracle(&col, *side);
            rank_bad += (0..n).any(|r| pr.get(r, j) != want[r]) as usize;
        }
        let rows: Vec<Vec<f64>> = (0..n).map(|r| pr.row(r).to_vec()).collect();
        erc_bad += (erc_ranks(&pr).0 != erc_oracle(&rows)) as usize;
    }
    rep.line(
        10,
        "rank and erc oracles",
        erc_bad == 0 && rank_bad == 0,
        format!("erc mismatches {erc_bad}/1000 matrices, pointwise rank mismatches {rank_bad} columns"),
    );
}

fn main() {
    // `cargo test` passes harness flags such as `--list`; only run on a plain invocation
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut rep = Report { failed: Vec::new() };
    let start = Instant::now();
    if selected(1) || selected(2) {
        criteria_1_2(&mut rep);
    }
    if selected(10) {
        criterion_10(&mut rep);
    }
    if selected(8) {
        criterion_8(&mut rep);
    }
    if selected(7) {
        criterion_7(&mut rep);
    }
    if selected(9) {
        criterion_9(&mut rep);
    }
    if selected(5) {
        criterion_5(&mut rep);
    }
    if selected(6) {
        criterion_6(&mut rep);
    }
    if selected(3) || selected(4) {
        criteria_3_4(&mut rep);
    }
    println!("acceptance finished in {:.0} s", start.elapsed().as_secs_f64());
    if !rep.failed.is_empty() {
        println!("failed criteria: {:?}", rep.failed);
    }
}
