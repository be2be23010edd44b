//! Global rank envelope tests for Monte Carlo and permutation testing.
//!
//! The observed test vector and `s` simulated vectors are ranked pointwise;
//! each vector's extreme rank is its most extreme pointwise rank, and ties
//! are broken by the extreme rank count ordering. The crate also provides
//! combined tests over several test functions, permutation-based functional
//! ANOVA, and a small spatial point-pattern toolkit that produces the curves.

pub mod combined;
pub mod envelope;
pub mod error;
pub mod fanova;
pub mod io;
pub mod rank;
pub mod rng;
pub mod spatial;
pub mod study;

pub use combined::{concatenate, two_stage_extreme_ranks, CombinedCurveSet, CurveSet, DeviationMeasure, PartInfo};
pub use envelope::{
    build_envelope, critical_rank, p_erc, p_interval, recommend_simulations, run_rank_test, Decision, GlobalEnvelope,
    PInterval, RankTestResult, VectorKind,
};
pub use error::{Error, Result};
pub use fanova::{permutation_engine, Construction, GroupedCurveSet, Scaling};
pub use rank::{erc_ranks, extreme_ranks, pointwise_ranks, ErcRankVector, ExtremeRankVector, Side, TestMatrix};
pub use rng::Seed;
