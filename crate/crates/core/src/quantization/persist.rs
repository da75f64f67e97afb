//! On-disk hierarchy layout: `manifest.json` plus one raw little-endian array per file.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{HierarchyConfig, LevelPlan, Store};
use super::hierarchy::{CentroidTable, Payload, QuantizationHierarchy};
use super::pq::PqCodebook;
use super::scalar::Int8Table;
use crate::dataset::io::write_file;
use crate::dataset::{Dataset, ElementKind, Metric};
use crate::error::{Error, Result};

const MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDescriptor {
    pub index: usize,
    pub kind: String,
    pub description: String,
    pub rows: usize,
    pub footprint_bytes: u64,
    pub compression_ratio: f64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierDescriptor {
    pub centroids: usize,
    pub files: Vec<String>,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub format_version: u32,
    pub config: HierarchyConfig,
    pub seed: u64,
    pub metric: Metric,
    pub n: usize,
    pub d: usize,
    pub element_kind: ElementKind,
    pub dataset_bytes: u64,
    pub footprints: Vec<u64>,
    pub tiers: Vec<TierDescriptor>,
    pub levels: Vec<LevelDescriptor>,
}

fn f32_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn u32_bytes(v: &[u32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn read_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

fn read_u32(bytes: &[u8]) -> Vec<u32> {
    bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

impl QuantizationHierarchy {
    /// Manifest and named arrays, in a fixed order.
    fn encode(&self) -> (HierarchyManifest, Vec<(String, Vec<u8>)>) {
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        let mut tiers = Vec::new();
        for (t, tier) in self.tiers().iter().enumerate() {
            let names = vec![format!("tier{t}.centroids.f32"), format!("tier{t}.assign.u32")];
            files.push((names[0].clone(), f32_bytes(tier.codebook().centroids())));
            files.push((names[1].clone(), u32_bytes(tier.codebook().assignments())));
            tiers.push(TierDescriptor {
                centroids: tier.codebook().num_centroids(),
                files: names,
            });
        }
        let mut levels = Vec::new();
        for level in self.levels() {
            let i = level.position();
            let mut names = Vec::new();
            let kind = match level.payload() {
                Payload::Centroids(CentroidTable::Float32(_)) => "vq_broadcast",
                Payload::Centroids(CentroidTable::Int8(table)) => {
                    names.push(format!("level{i}.scales.f32"));
                    names.push(format!("level{i}.codes.i8"));
                    files.push((names[0].clone(), f32_bytes(table.scales())));
                    files.push((names[1].clone(), table.codes().iter().map(|&c| c as u8).collect()));
                    "vq_broadcast"
                }
                Payload::Pq(pq) => {
                    names.push(format!("level{i}.codebooks.f32"));
                    names.push(format!("level{i}.codes.u8"));
                    let books: Vec<f32> = (0..pq.num_blocks()).flat_map(|b| pq.codebook(b).to_vec()).collect();
                    files.push((names[0].clone(), f32_bytes(&books)));
                    files.push((names[1].clone(), pq.all_codes().to_vec()));
                    "pq"
                }
                Payload::Exact(ds) => {
                    names.push("points.f32".to_string());
                    files.push((names[0].clone(), f32_bytes(ds.as_slice())));
                    "exact"
                }
            };
            levels.push(LevelDescriptor {
                index: i + 1,
                kind: kind.to_string(),
                description: level.describe(),
                rows: level.num_rows(),
                footprint_bytes: level.footprint_bytes(),
                compression_ratio: level.compression_ratio(),
                files: names,
            });
        }
        let manifest = HierarchyManifest {
            format_version: FORMAT_VERSION,
            config: self.config().clone(),
            seed: self.seed(),
            metric: self.metric(),
            n: self.n(),
            d: self.dim(),
            element_kind: self.element_kind(),
            dataset_bytes: self.dataset_bytes(),
            footprints: self.footprints(),
            tiers,
            levels,
        };
        (manifest, files)
    }

    pub fn manifest(&self) -> HierarchyManifest {
        self.encode().0
    }

    /// SHA-256 over the persisted representation, as lowercase hex.
    pub fn content_hash(&self) -> String {
        let (manifest, files) = self.encode();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&manifest).expect("manifest serializes"));
        for (name, bytes) in &files {
            h.update(name.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the hierarchy into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (manifest, files) = self.encode();
        for (name, bytes) in &files {
            write_file(&dir.join(name), bytes)?;
        }
        let json = serde_json::to_string_pretty(&manifest)?;
        write_file(&dir.join(MANIFEST), json.as_bytes())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let m: HierarchyManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::format(&manifest_path, format!("unsupported format version {}", m.format_version)));
        }
        let read = |name: &str, expected: usize| -> Result<Vec<u8>> {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() != expected {
                return Err(Error::format(&path, format!("expected {expected} bytes, found {}", bytes.len())));
            }
            Ok(bytes)
        };
        let plan = m.config.plan()?;
        if m.tiers.len() != plan.tiers.len() || m.levels.len() != plan.levels.len() {
            return Err(Error::format(&manifest_path, "descriptor counts do not match the configuration"));
        }
        let d = m.d;
        let mut tier_parts = Vec::new();
        let mut finer_rows = m.n;
        let mut tier_rows = vec![0; plan.tiers.len()];
        for t in (0..plan.tiers.len()).rev() {
            let c = plan.tiers[t];
            let files = &m.tiers[t].files;
            if files.len() != 2 {
                return Err(Error::format(&manifest_path, format!("tier {t} lists {} files", files.len())));
            }
            let centroids = read_f32(&read(&files[0], c * d * 4)?);
            let assign = read_u32(&read(&files[1], finer_rows * 4)?);
            tier_parts.push((centroids, assign));
            tier_rows[t] = c;
            finer_rows = c;
        }
        tier_parts.reverse();

        let mut payloads = Vec::new();
        for (i, (&lp, desc)) in plan.levels.iter().zip(&m.levels).enumerate() {
            let bad = || Error::format(&manifest_path, format!("level {} descriptor is inconsistent", i + 1));
            let payload = match lp {
                LevelPlan::Centroids { tier, store } => {
                    let rows = &tier_parts[tier].0;
                    match store {
                        Store::Float32 => Payload::Centroids(CentroidTable::Float32(rows.clone())),
                        Store::Int8 => {
                            if desc.files.len() != 2 {
                                return Err(bad());
                            }
                            let scales = read_f32(&read(&desc.files[0], d * 4)?);
                            let codes = read(&desc.files[1], rows.len())?.into_iter().map(|b| b as i8).collect();
                            Payload::Centroids(CentroidTable::Int8(Int8Table::from_parts(d, scales, codes)))
                        }
                    }
                }
                LevelPlan::Pq { table, dims_per_block, bits } => {
                    if desc.files.len() != 2 {
                        return Err(bad());
                    }
                    let blocks = d.div_ceil(dims_per_block);
                    let centers = 1usize << bits;
                    let books = read_f32(&read(&desc.files[0], centers * d * 4)?);
                    let widths: Vec<usize> = (0..blocks).map(|b| dims_per_block.min(d - b * dims_per_block)).collect();
                    let mut codebooks = Vec::with_capacity(blocks);
                    let mut at = 0;
                    for w in widths {
                        codebooks.push(books[at..at + centers * w].to_vec());
                        at += centers * w;
                    }
                    let rows = match table {
                        super::config::TableRef::Tier(t) => tier_rows[t],
                        super::config::TableRef::Points => m.n,
                    };
                    let codes = read(&desc.files[1], rows * blocks)?;
                    Payload::Pq(PqCodebook::from_parts(d, bits, dims_per_block, codebooks, codes)?)
                }
                LevelPlan::Exact => {
                    if desc.files.len() != 1 {
                        return Err(bad());
                    }
                    let data = read_f32(&read(&desc.files[0], m.n * d * 4)?);
                    Payload::Exact(Arc::new(Dataset::from_vec(data, d, m.element_kind)?))
                }
            };
            payloads.push(payload);
        }
        let h = QuantizationHierarchy::from_parts(m.config.clone(), m.seed, m.n, d, m.element_kind, tier_parts, payloads)?;
        if h.footprints() != m.footprints {
            return Err(Error::format(&manifest_path, "footprints disagree with the configuration"));
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantization::config::LevelSpec;
    use crate::quantization::hierarchy::build_hierarchy;

    #[test]
    fn save_load_round_trip() {
        let data: Vec<f32> = (0..800 * 6).map(|i| ((i * 7919) % 1013) as f32 / 101.0).collect();
        let ds = Arc::new(Dataset::from_vec(data, 6, ElementKind::F32).unwrap());
        let cfg = HierarchyConfig {
            metric: Metric::SquaredEuclidean,
            levels: vec![
                LevelSpec::Pq { dims_per_block: 3, bits: 4 },
                LevelSpec::Vq { centroids: 24, store: Store::Int8 },
                LevelSpec::Vq { centroids: 64, store: Store::Float32 },
                LevelSpec::Pq { dims_per_block: 4, bits: 8 },
            ],
            keep_exact: true,
            seed: 0,
            vq_iters: 5,
            pq_iters: 3,
            max_train_rows: None,
        };
        let h = build_hierarchy(ds, &cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        h.save(dir.path()).unwrap();
        let back = QuantizationHierarchy::load(dir.path()).unwrap();
        assert_eq!(back.content_hash(), h.content_hash());
        for (a, b) in h.levels().iter().zip(back.levels()) {
            assert_eq!(a.payload(), b.payload());
            assert_eq!(a.grouping(), b.grouping());
        }
        fs::remove_file(dir.path().join("points.f32")).unwrap();
        assert!(matches!(QuantizationHierarchy::load(dir.path()), Err(Error::Io { .. })));
    }
}
