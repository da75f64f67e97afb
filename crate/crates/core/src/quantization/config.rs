//! Hierarchy configuration: the ordered list of search levels and how each is encoded.
//!
//! `levels` lists search levels in ascending bitrate. A `vq` entry is a centroid table whose
//! rows stand in for every datapoint assigned to them; centroid counts must grow along the list,
//! each table being the vector-quantization of the next finer one. A `pq` entry product-quantizes
//! the table of the `vq` entry that immediately follows it, or the dataset itself when it is last.
//! `keep_exact` appends an exact re-ranking level over the original vectors.

use serde::{Deserialize, Serialize};

use super::pq::{block_bounds, code_bytes};
use crate::dataset::Metric;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Store {
    Int8,
    #[default]
    Float32,
}

impl Store {
    pub fn bytes_per_dim(self) -> u64 {
        match self {
            Store::Int8 => 1,
            Store::Float32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelSpec {
    Vq {
        centroids: usize,
        #[serde(default)]
        store: Store,
    },
    Pq {
        dims_per_block: usize,
        bits: u32,
    },
}

fn default_vq_iters() -> usize {
    20
}

fn default_pq_iters() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub metric: Metric,
    pub levels: Vec<LevelSpec>,
    #[serde(default)]
    pub keep_exact: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_vq_iters")]
    pub vq_iters: usize,
    #[serde(default = "default_pq_iters")]
    pub pq_iters: usize,
    /// Train each quantizer on at most this many rows (seeded sample), then encode every row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_train_rows: Option<usize>,
}

/// Which table a level encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableRef {
    /// Centroid tier, indexed coarse to fine.
    Tier(usize),
    Points,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelPlan {
    Centroids { tier: usize, store: Store },
    Pq { table: TableRef, dims_per_block: usize, bits: u32 },
    Exact,
}

/// Resolved structure of a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    /// Centroid counts per tier, coarse to fine.
    pub tiers: Vec<usize>,
    pub levels: Vec<LevelPlan>,
}

impl Plan {
    fn table_rows(&self, table: TableRef, n: u64) -> u64 {
        match table {
            TableRef::Tier(t) => self.tiers[t] as u64,
            TableRef::Points => n,
        }
    }

    /// Footprint of each level for a dataset of `n` vectors of `d` dimensions.
    pub fn footprints(&self, n: u64, d: usize, bytes_per_dim: u64) -> Vec<u64> {
        self.levels
            .iter()
            .map(|level| match *level {
                LevelPlan::Centroids { tier, store } => {
                    self.tiers[tier] as u64 * d as u64 * store.bytes_per_dim()
                }
                LevelPlan::Pq {
                    table,
                    dims_per_block,
                    bits,
                } => {
                    let blocks = block_bounds(d, dims_per_block).len() - 1;
                    self.table_rows(table, n) * code_bytes(blocks, bits)
                }
                LevelPlan::Exact => n * d as u64 * bytes_per_dim,
            })
            .collect()
    }
}

impl HierarchyConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the level list and resolves which table each level encodes.
    pub fn plan(&self) -> Result<Plan> {
        if self.levels.is_empty() && !self.keep_exact {
            return Err(Error::InvalidConfig("hierarchy has no levels".into()));
        }
        if self.vq_iters == 0 || self.pq_iters == 0 {
            return Err(Error::InvalidConfig("training iterations must be positive".into()));
        }
        let mut tiers = Vec::new();
        for spec in &self.levels {
            if let LevelSpec::Vq { centroids, .. } = *spec {
                if centroids == 0 {
                    return Err(Error::InvalidConfig("vq level with zero centroids".into()));
                }
                if tiers.last().is_some_and(|&prev| prev >= centroids) {
                    return Err(Error::InvalidConfig(format!(
                        "vq centroid counts must increase toward finer levels ({} then {centroids})",
                        tiers.last().unwrap()
                    )));
                }
                tiers.push(centroids);
            }
        }
        let mut levels = Vec::with_capacity(self.levels.len() + 1);
        let mut tier = 0;
        for (i, spec) in self.levels.iter().enumerate() {
            match *spec {
                LevelSpec::Vq { store, .. } => {
                    levels.push(LevelPlan::Centroids { tier, store });
                    tier += 1;
                }
                LevelSpec::Pq {
                    dims_per_block,
                    bits,
                } => {
                    if bits != 4 && bits != 8 {
                        return Err(Error::InvalidConfig(format!("pq bits={bits}; use 4 or 8")));
                    }
                    if dims_per_block == 0 {
                        return Err(Error::InvalidConfig("pq dims_per_block must be positive".into()));
                    }
                    let table = match self.levels.get(i + 1) {
                        Some(LevelSpec::Vq { .. }) => TableRef::Tier(tier),
                        Some(LevelSpec::Pq { .. }) => {
                            return Err(Error::InvalidConfig(
                                "a pq level must be followed by a vq level or end the list".into(),
                            ))
                        }
                        None => TableRef::Points,
                    };
                    levels.push(LevelPlan::Pq {
                        table,
                        dims_per_block,
                        bits,
                    });
                }
            }
        }
        if self.keep_exact {
            levels.push(LevelPlan::Exact);
        }
        Ok(Plan { tiers, levels })
    }

    /// Footprints implied by this configuration for an `n x d` dataset, validated ascending.
    pub fn planned_footprints(&self, n: u64, d: usize, bytes_per_dim: u64) -> Result<Vec<u64>> {
        let plan = self.plan()?;
        for level in &plan.levels {
            if let LevelPlan::Pq { dims_per_block, .. } = *level {
                if dims_per_block > d {
                    return Err(Error::InvalidConfig(format!(
                        "dims_per_block={dims_per_block} exceeds d={d}"
                    )));
                }
            }
        }
        if let Some(&finest) = plan.tiers.last() {
            if finest as u64 > n {
                return Err(Error::InvalidConfig(format!(
                    "{finest} centroids requested for {n} points"
                )));
            }
        }
        let fp = plan.footprints(n, d, bytes_per_dim);
        if fp.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "level footprints must strictly increase, got {fp:?}"
            )));
        }
        Ok(fp)
    }

    /// Built-in configurations by name.
    pub fn preset(name: &str) -> Result<Self> {
        let vq = |centroids, store| LevelSpec::Vq { centroids, store };
        let pq = |dims_per_block, bits| LevelSpec::Pq {
            dims_per_block,
            bits,
        };
        let base = |levels, keep_exact| HierarchyConfig {
            metric: Metric::SquaredEuclidean,
            levels,
            keep_exact,
            seed: 0,
            vq_iters: default_vq_iters(),
            pq_iters: default_pq_iters(),
            max_train_rows: None,
        };
        let cfg = match name {
            // Five-level billion-scale shape: two centroid tiers, PQ at every tier.
            "deep1b" => base(
                vec![
                    pq(4, 4),
                    vq(40_000, Store::Int8),
                    pq(3, 4),
                    vq(4_000_000, Store::Int8),
                    pq(1, 4),
                ],
                false,
            ),
            // Minimal two-stage index plus exact re-ranking.
            "desk3" => base(vec![vq(256, Store::Float32), pq(2, 4)], true),
            "desk-deep" => base(
                vec![
                    pq(4, 4),
                    vq(32, Store::Int8),
                    pq(2, 4),
                    vq(1024, Store::Int8),
                    pq(2, 4),
                ],
                true,
            ),
            // desk-deep with the intermediate centroid tier removed.
            "desk-shallow" => base(vec![pq(4, 4), vq(32, Store::Int8), pq(2, 4)], true),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset {other:?}; known: {}",
                    Self::PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    pub const PRESETS: &'static [&'static str] = &["deep1b", "desk3", "desk-deep", "desk-shallow"];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deep1b_footprints() {
        let cfg = HierarchyConfig::preset("deep1b").unwrap();
        let fp = cfg.planned_footprints(1_000_000_000, 96, 1).unwrap();
        assert_eq!(
            fp,
            vec![480_000, 3_840_000, 64_000_000, 384_000_000, 48_000_000_000]
        );
    }

    #[test]
    fn minimal_two_stage_plan() {
        let cfg = HierarchyConfig::from_json(
            r#"{"metric":"squared_euclidean","levels":[{"kind":"vq","centroids":100},
                {"kind":"pq","dims_per_block":4,"bits":4}],"keep_exact":true,"seed":1}"#,
        )
        .unwrap();
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.tiers, vec![100]);
        assert_eq!(
            plan.levels,
            vec![
                LevelPlan::Centroids {
                    tier: 0,
                    store: Store::Float32
                },
                LevelPlan::Pq {
                    table: TableRef::Points,
                    dims_per_block: 4,
                    bits: 4
                },
                LevelPlan::Exact,
            ]
        );
        let fp = cfg.planned_footprints(10_000, 16, 4).unwrap();
        assert_eq!(fp, vec![100 * 16 * 4, 10_000 * 2, 10_000 * 64]);
    }

    #[test]
    fn pq_binds_to_following_tier() {
        let cfg = HierarchyConfig::preset("desk-deep").unwrap();
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.tiers, vec![32, 1024]);
        assert!(matches!(plan.levels[0], LevelPlan::Pq { table: TableRef::Tier(0), .. }));
        assert!(matches!(plan.levels[2], LevelPlan::Pq { table: TableRef::Tier(1), .. }));
        assert!(matches!(plan.levels[4], LevelPlan::Pq { table: TableRef::Points, .. }));
        assert_eq!(plan.levels.len(), 6);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = HierarchyConfig::preset("desk3").unwrap();
        cfg.levels = vec![
            LevelSpec::Vq { centroids: 50, store: Store::Float32 },
            LevelSpec::Vq { centroids: 50, store: Store::Float32 },
        ];
        assert!(cfg.plan().is_err(), "non-increasing centroid counts");

        cfg.levels = vec![
            LevelSpec::Pq { dims_per_block: 2, bits: 4 },
            LevelSpec::Pq { dims_per_block: 2, bits: 4 },
        ];
        assert!(cfg.plan().is_err(), "pq followed by pq");

        cfg.levels = vec![LevelSpec::Pq { dims_per_block: 2, bits: 5 }];
        assert!(cfg.plan().is_err());

        cfg.levels = vec![];
        cfg.keep_exact = false;
        assert!(cfg.plan().is_err());

        let cfg = HierarchyConfig::preset("desk3").unwrap();
        assert!(cfg.planned_footprints(100, 16, 4).is_err(), "256 centroids > 100 points");
        assert!(cfg.planned_footprints(10_000, 1, 4).is_err(), "dims_per_block > d");
        // 8-bit float32 centroid table larger than the point PQ: footprints not ascending.
        assert!(cfg.planned_footprints(300, 64, 4).is_err());
        assert!(HierarchyConfig::preset("nope").is_err());
    }

    #[test]
    fn json_round_trip() {
        for name in HierarchyConfig::PRESETS {
            let cfg = HierarchyConfig::preset(name).unwrap();
            assert_eq!(HierarchyConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
    }
}
