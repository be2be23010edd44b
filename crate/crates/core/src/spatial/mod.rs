//! Point patterns, point-process models and summary functions.

mod index;
pub mod fit;
pub mod models;
pub mod pattern;
pub mod shift;
pub mod summary;

pub use fit::{fit_null, matclust_pcf, ContrastOptions, FitFamily};
pub use models::Model;
pub use pattern::{PointPattern, Window};
pub use shift::{random_shift, shift_types};
pub use summary::{
    equispaced_grid, estimate_summary, pair_correlation, parse_functions, EdgeCorrection, SummaryFunction, SummarySpec,
};
