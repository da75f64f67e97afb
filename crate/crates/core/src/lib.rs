//! Multi-level quantization ANN search with a self-tuner.
//!
//! The crate is organized bottom-up:
//!
//! * [`dataset`]: vector containers, `fvecs`/`bvecs`/`ivecs` I/O and exact ground truth.
//! * [`quantization`]: k-means, product quantization and the multi-level hierarchy.
//! * [`search`]: the progressive candidate-narrowing search, recall evaluation and benchmarking.
//! * [`stats`]: per-level recall-loss curves computed from a query sample, and their convex hulls.
//! * [`tuner`]: the cost model and the Lagrangian solvers that turn loss curves into tunings.
//! * [`experiment`]: synthetic data, grid-search baselines and validation reports.

pub mod dataset;
mod clock;
mod select;
pub mod error;
pub mod experiment;
pub mod quantization;
pub mod search;
pub mod stats;
pub mod tuner;

pub use dataset::{Dataset, ElementKind, GroundTruth, Metric, QuerySet};
pub use error::{Error, Result};
pub use quantization::{HierarchyConfig, QuantizationHierarchy, QuantizationLevel};
pub use search::{SearchResult, SearchTrace, Tuning};
pub use stats::{ConvexLossCurve, LossMatrix, RankStats};
pub use tuner::{CostModel, LagrangianTables, ParetoFrontier, TuneResult};
