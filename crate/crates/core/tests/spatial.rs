use std::collections::BTreeMap;

use rankenv::spatial::summary::{f_function, g_function, k_function};
use rankenv::spatial::{
    equispaced_grid, estimate_summary, fit_null, random_shift, shift_types, EdgeCorrection, FitFamily, Model,
    PointPattern, SummaryFunction, SummarySpec, Window,
};
use rankenv::study::{binomial_band, gof_test, shift_test, GofOptions, GridSpec, NullSpec};
use rankenv::Seed;

fn csr(n_mean: f64, seed: u64) -> PointPattern {
    Model::csr(n_mean).generate(&Window::unit_square(), &mut Seed::new(seed).rng()).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn csr_l_minus_r_is_centred() {
    let grid = equispaced_grid(0.01, 0.125, 24);
    let reps = 300;
    let mut sum = vec![0.0; grid.len()];
    let mut sq = vec![0.0; grid.len()];
    for i in 0..reps {
        let l = estimate_summary(&csr(200.0, 100 + i), &SummarySpec::new(SummaryFunction::L, grid.clone())).unwrap();
        for (j, (v, r)) in l.iter().zip(&grid).enumerate() {
            sum[j] += v - r;
            sq[j] += (v - r).powi(2);
        }
    }
    for j in 0..grid.len() {
        let mean = sum[j] / reps as f64;
        let se = ((sq[j] / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!(mean.abs() < 4.0 * se + 1e-4, "r = {}: mean {mean}, se {se}", grid[j]);
    }
}

#[test]
fn expected_and_observed_poisson_counts() {
    let w = Window::unit_square();
    let m = Model::csr(200.0);
    assert!((m.expected_count(&w) - 200.0).abs() < 1e-12);
    let reps = 400;
    let mean = (0..reps).map(|i| csr(200.0, 5000 + i).len() as f64).sum::<f64>() / reps as f64;
    // 3 sigma for the mean of `reps` Poisson(200) counts
    assert!((mean - 200.0).abs() < 3.0 * (200.0f64 / reps as f64).sqrt(), "mean count {mean}");
}

#[test]
fn j_envelope_contains_one_under_csr() {
    let p = csr(200.0, 7);
    let opts = GofOptions {
        functions: vec![SummaryFunction::J],
        grid: GridSpec::new(0.0, 0.1, 100).unwrap(),
        nsim: 199,
        alpha: 0.05,
        edge: None,
    };
    let out = gof_test(&p, &NullSpec::Known(Model::csr(200.0)), &opts, Seed::new(8)).unwrap();
    let env = &out.result.envelope;
    for j in 0..env.lower.len() {
        assert!(env.lower[j] <= 1.0 && 1.0 <= env.upper[j], "point {j}: [{}, {}]", env.lower[j], env.upper[j]);
    }
}

#[test]
fn estimates_are_translation_invariant() {
    let p = csr(150.0, 11);
    let q = p.translate(3.25, -7.5);
    let grid = equispaced_grid(0.0, 0.2, 50);
    for edge in [EdgeCorrection::Translational, EdgeCorrection::Border, EdgeCorrection::None] {
        let (a, b) = (k_function(&p, &grid, edge).unwrap(), k_function(&q, &grid, edge).unwrap());
        a.iter().zip(&b).for_each(|(x, y)| assert!((x - y).abs() < 1e-12));
    }
    let (a, b) = (g_function(&p, &grid, EdgeCorrection::Border).unwrap(), g_function(&q, &grid, EdgeCorrection::Border).unwrap());
    a.iter().zip(&b).for_each(|(x, y)| assert!((x - y).abs() < 1e-12));
    let (a, b) = (
        f_function(&p, &grid, EdgeCorrection::Border, 64).unwrap(),
        f_function(&q, &grid, EdgeCorrection::Border, 64).unwrap(),
    );
    a.iter().zip(&b).for_each(|(x, y)| assert!((x - y).abs() < 1e-12));
}

#[test]
fn periodic_l_is_unchanged_by_toroidal_shifts() {
    let w = Window::unit_square();
    let p = Model::Superposition { components: vec![Model::csr(80.0), Model::csr(60.0)], marked: true }
        .generate(&w, &mut Seed::new(21).rng())
        .unwrap();
    let grid = equispaced_grid(0.0, 0.25, 40);
    let spec = SummarySpec::new(SummaryFunction::L, grid).with_edge(EdgeCorrection::Periodic);
    let shifts = BTreeMap::from([(2, [0.37, 0.81])]);
    let q = shift_types(&p, &shifts).unwrap();
    let (a, b) = (estimate_summary(&p.subpattern(2), &spec).unwrap(), estimate_summary(&q.subpattern(2), &spec).unwrap());
    a.iter().zip(&b).for_each(|(x, y)| assert!((x - y).abs() < 1e-9, "{x} vs {y}"));
    // type 1 never moves
    let r = random_shift(&p, &[1], Seed::new(3)).unwrap();
    assert_eq!(r.subpattern(1).points(), p.subpattern(1).points());
}

#[test]
fn matclust_fit_recovers_parameters() {
    let truth = Model::mat_clust(50.0, 0.06, 4.0);
    let w = Window::unit_square();
    let (mut kappa, mut radius) = (Vec::new(), Vec::new());
    for i in 0..100 {
        let p = truth.generate(&w, &mut Seed::new(900 + i).rng()).unwrap();
        match fit_null(FitFamily::MatClust, &p, 0.125).unwrap() {
            Model::MatClust { parent_intensity, radius: r, .. } => {
                kappa.push(parent_intensity);
                radius.push(r);
            }
            other => panic!("unexpected model {other:?}"),
        }
    }
    let (k, r) = (median(kappa), median(radius));
    assert!((k / 50.0 - 1.0).abs() < 0.25, "median kappa {k}");
    assert!((r / 0.06 - 1.0).abs() < 0.25, "median radius {r}");
}

#[test]
fn shift_test_holds_level_under_independence() {
    let w = Window::unit_square();
    let model = Model::Superposition { components: vec![Model::csr(100.0), Model::csr(100.0)], marked: true };
    let grid = GridSpec::new(0.0, 0.125, 50).unwrap();
    let reps = 200;
    let mut rejections = 0;
    for i in 0..reps {
        let p = model.generate(&w, &mut Seed::new(3000 + i).rng()).unwrap();
        let out = shift_test(&p, &grid, 99, 0.05, Seed::new(7000 + i)).unwrap();
        rejections += (out.result.p_erc <= 0.05) as usize;
    }
    let (_, hi) = binomial_band(reps as usize, 0.05);
    assert!((rejections as f64 / reps as f64) <= hi, "{rejections} rejections in {reps}");
}

#[test]
fn fitted_matclust_l_test_is_conservative() {
    let w = Window::unit_square();
    let truth = Model::mat_clust(50.0, 0.06, 4.0);
    let opts = GofOptions {
        functions: vec![SummaryFunction::L],
        grid: GridSpec::new(0.0, 0.125, 100).unwrap(),
        nsim: 99,
        alpha: 0.05,
        edge: None,
    };
    let reps = 100;
    let mut rejections = 0;
    for i in 0..reps {
        let p = truth.generate(&w, &mut Seed::new(40 + i).rng()).unwrap();
        let out = gof_test(&p, &NullSpec::Fitted(FitFamily::MatClust), &opts, Seed::new(500 + i)).unwrap();
        rejections += (out.result.p_erc <= 0.05) as usize;
    }
    assert!(rejections as f64 / reps as f64 <= 0.05, "{rejections} rejections in {reps}");
}
