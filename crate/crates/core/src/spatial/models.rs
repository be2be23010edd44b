//! Point process generators.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::pattern::{PointPattern, Window};
use crate::error::{Error, Result};

fn default_sweeps() -> usize {
    HARD_CORE_SWEEPS
}

/// Metropolis sweeps applied after the initial dart throwing.
pub const HARD_CORE_SWEEPS: usize = 20;

/// Attempts per point allowed to the dart thrower.
pub const DART_BUDGET_PER_POINT: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    /// Homogeneous Poisson process (CSR).
    Poisson { intensity: f64 },
    /// `n` independent uniform points.
    Binomial { n: usize },
    /// Matérn cluster process: Poisson parents, Poisson(`mean_daughters`)
    /// daughters uniform in a disc of radius `radius` around each parent.
    MatClust { parent_intensity: f64, radius: f64, mean_daughters: f64 },
    /// Hard-core process with exactly `n` points and minimum distance `radius`.
    HardCore {
        n: usize,
        radius: f64,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    /// Union of independent components; component `k` gets mark `k + 1` when `marked`.
    Superposition {
        components: Vec<Model>,
        #[serde(default)]
        marked: bool,
    },
}

impl Model {
    pub fn csr(intensity: f64) -> Model {
        Model::Poisson { intensity }
    }

    pub fn mat_clust(parent_intensity: f64, radius: f64, mean_daughters: f64) -> Model {
        Model::MatClust { parent_intensity, radius, mean_daughters }
    }

    pub fn hard_core(n: usize, radius: f64) -> Model {
        Model::HardCore { n, radius, sweeps: HARD_CORE_SWEEPS }
    }

    /// Superposition of MatClust(10, 0.06, 30) and MatClust(10, 0.03, 30).
    pub fn mix_mat_clust() -> Model {
        Model::Superposition {
            components: vec![Model::mat_clust(10.0, 0.06, 30.0), Model::mat_clust(10.0, 0.03, 30.0)],
            marked: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            Model::Poisson { intensity } => positive("intensity", *intensity),
            Model::Binomial { .. } => Ok(()),
            Model::MatClust { parent_intensity, radius, mean_daughters } => {
                positive("parent intensity", *parent_intensity)?;
                positive("cluster radius", *radius)?;
                positive("mean cluster size", *mean_daughters)
            }
            Model::HardCore { radius, .. } => {
                if *radius >= 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("hard-core radius must be non-negative, got {radius}")))
                }
            }
            Model::Superposition { components, .. } => {
                if components.is_empty() {
                    return Err(Error::Parameter("superposition without components".into()));
                }
                components.iter().try_for_each(Model::validate)
            }
        }
    }

    /// Expected number of points in `window`.
    pub fn expected_count(&self, window: &Window) -> f64 {
        match self {
            Model::Poisson { intensity } => intensity * window.area(),
            Model::Binomial { n } | Model::HardCore { n, .. } => *n as f64,
            Model::MatClust { parent_intensity, mean_daughters, .. } => parent_intensity * mean_daughters * window.area(),
            Model::Superposition { components, .. } => components.iter().map(|c| c.expected_count(window)).sum(),
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, window: &Window, rng: &mut R) -> Result<PointPattern> {
        self.validate()?;
        window.validate()?;
        let (points, marks) = match self {
            Model::Superposition { components, marked } => {
                let mut points = Vec::new();
                let mut marks = Vec::new();
                for (k, c) in components.iter().enumerate() {
                    let part = c.generate(window, rng)?;
                    marks.extend(std::iter::repeat_n(k as u32 + 1, part.len()));
                    points.extend_from_slice(part.points());
                }
                (points, marked.then_some(marks))
            }
            other => (other.generate_points(window, rng)?, None),
        };
        PointPattern::new(points, *window, marks)
    }

    fn generate_points<R: Rng + ?Sized>(&self, w: &Window, rng: &mut R) -> Result<Vec<[f64; 2]>> {
        match *self {
            Model::Poisson { intensity } => {
                let n = poisson_count(intensity * w.area(), rng);
                Ok(uniform_points(n, w, rng))
            }
            Model::Binomial { n } => Ok(uniform_points(n, w, rng)),
            Model::MatClust { parent_intensity, radius, mean_daughters } => {
                // parents on the dilated window so clusters near the edge are not lost
                let outer = w.dilate(radius);
                let parents = uniform_points(poisson_count(parent_intensity * outer.area(), rng), &outer, rng);
                let mut points = Vec::new();
                for c in parents {
                    for _ in 0..poisson_count(mean_daughters, rng) {
                        let rho = radius * rng.random::<f64>().sqrt();
                        let theta = std::f64::consts::TAU * rng.random::<f64>();
                        let p = [c[0] + rho * theta.cos(), c[1] + rho * theta.sin()];
                        if w.contains(p) {
                            points.push(p);
                        }
                    }
                }
                Ok(points)
            }
            Model::HardCore { n, radius, sweeps } => hard_core(n, radius, sweeps, w, rng),
            Model::Superposition { .. } => unreachable!("handled in generate"),
        }
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    draw as usize
}

fn uniform_points<R: Rng + ?Sized>(n: usize, w: &Window, rng: &mut R) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [w.xmin + w.width() * rng.random::<f64>(), w.ymin + w.height() * rng.random::<f64>()])
        .collect()
}

fn conflicts(points: &[[f64; 2]], p: [f64; 2], skip: Option<usize>, r2: f64) -> bool {
    points
        .iter()
        .enumerate()
        .any(|(i, q)| Some(i) != skip && (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) < r2)
}

/// Dart throwing to `n` points, then Metropolis single-point moves
/// (uniform proposal, accepted when no pair falls below `radius`), whose
/// stationary law is the hard-core process conditioned on `n` points.
fn hard_core<R: Rng + ?Sized>(n: usize, radius: f64, sweeps: usize, w: &Window, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    let r2 = radius * radius;
    let budget = DART_BUDGET_PER_POINT * n.max(1) as u64;
    let mut points = Vec::with_capacity(n);
    let mut attempts = 0u64;
    while points.len() < n {
        if attempts >= budget {
            return Err(Error::PackingFailed { attempts, placed: points.len(), target: n });
        }
        attempts += 1;
        let p = uniform_points(1, w, rng)[0];
        if !conflicts(&points, p, None, r2) {
            points.push(p);
        }
    }
    for _ in 0..sweeps * n {
        let i = rng.random_range(0..n);
        let p = uniform_points(1, w, rng)[0];
        if !conflicts(&points, p, Some(i), r2) {
            points[i] = p;
        }
    }
    Ok(points)
}
