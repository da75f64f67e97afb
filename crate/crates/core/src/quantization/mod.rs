//! Vector and product quantization, and the multi-level hierarchy built from them.

pub mod config;
mod hierarchy;
mod kmeans;
mod persist;
mod pq;
mod scalar;

pub use config::{HierarchyConfig, LevelPlan, LevelSpec, Plan, Store, TableRef};
pub use hierarchy::{
    build_hierarchy, quantized_distance, CentroidTable, Grouping, LevelKind, LevelScorer, Payload,
    QuantizationHierarchy, QuantizationLevel, Tier,
};
pub use kmeans::{train_vq, Buckets, VqCodebook};
pub use persist::{HierarchyManifest, LevelDescriptor, TierDescriptor};
pub use pq::{block_bounds, code_bytes, train_pq, LookupTable, PqCodebook};
pub use scalar::Int8Table;
