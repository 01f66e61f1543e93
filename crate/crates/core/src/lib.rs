//! Top-k representative similar subtrajectory search over a dual-layer
//! graph index.
//!
//! Offline, [`index::build_gari`] links one representative trajectory per
//! grid cell and [`index::build_cndi`] links every trajectory to spatially
//! close and random peers ranked by [`dtsm`]. Online,
//! [`search::query_topk`] hill-climbs the upper layer for an entry point,
//! hill-climbs the lower layer from there and returns the best-scoring
//! representative subtrajectories it saw.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod config;
pub mod dtsm;
pub mod error;
pub mod eval;
pub mod index;
pub mod model;
pub mod search;
pub mod similarity;
pub mod spatial;

pub use config::{Ablation, Config, GariCounts};
pub use error::{Error, LoadError, Result};
pub use model::{Ground, Point, SubtrajRef, TrajId, Trajectory, TrajectoryStore};
pub use similarity::{Metric, MetricKind, RepScore, ScorerRegistry, SimTransform};
