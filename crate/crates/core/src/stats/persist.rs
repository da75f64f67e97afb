//! Stats directory: `manifest.json` plus one `(depth, loss)` little-endian `f64` pair array per level.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::{LossCurve, LossMatrix};
use crate::dataset::io::write_file;
use crate::error::{Error, Result};

const MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsLevel {
    pub index: usize,
    pub file: String,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsManifest {
    pub format_version: u32,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub n_q: usize,
    pub floor: f64,
    pub hierarchy_hash: String,
    pub footprints: Vec<u64>,
    pub dataset_bytes: u64,
    pub levels: Vec<StatsLevel>,
}

impl LossMatrix {
    pub fn manifest(&self) -> StatsManifest {
        StatsManifest {
            format_version: FORMAT_VERSION,
            m: self.num_levels(),
            n: self.n(),
            k: self.k(),
            n_q: self.n_queries(),
            floor: self.floor(),
            hierarchy_hash: self.hierarchy_hash().to_string(),
            footprints: self.footprints().to_vec(),
            dataset_bytes: self.dataset_bytes(),
            levels: self
                .curves()
                .iter()
                .enumerate()
                .map(|(i, c)| StatsLevel {
                    index: i + 1,
                    file: format!("level{}.loss.f64", i + 1),
                    steps: c.depths().len(),
                })
                .collect(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        for (level, curve) in manifest.levels.iter().zip(self.curves()) {
            let mut bytes = Vec::with_capacity(curve.depths().len() * 16);
            for (t, v) in curve.steps() {
                bytes.extend_from_slice(&(t as f64).to_le_bytes());
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            write_file(&dir.join(&level.file), &bytes)?;
        }
        let json = serde_json::to_string_pretty(&manifest)?;
        write_file(&dir.join(MANIFEST), json.as_bytes())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: StatsManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::format(&path, format!("unsupported format version {}", m.format_version)));
        }
        if m.levels.len() != m.m {
            return Err(Error::format(&path, "level list length differs from m"));
        }
        let mut curves = Vec::with_capacity(m.m);
        for level in &m.levels {
            let file = dir.join(&level.file);
            let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            if bytes.len() != level.steps * 16 {
                return Err(Error::format(&file, format!("expected {} steps", level.steps)));
            }
            let mut depths = Vec::with_capacity(level.steps);
            let mut values = Vec::with_capacity(level.steps);
            for pair in bytes.chunks_exact(16) {
                let t = f64::from_le_bytes(pair[..8].try_into().unwrap());
                if t < 0.0 || t.fract() != 0.0 || t > m.n as f64 {
                    return Err(Error::format(&file, format!("invalid depth {t}")));
                }
                depths.push(t as usize);
                values.push(f64::from_le_bytes(pair[8..].try_into().unwrap()));
            }
            curves.push(
                LossCurve::new(m.n, depths, values).map_err(|e| Error::format(&file, e.to_string()))?,
            );
        }
        LossMatrix::new(curves, m.k, m.n_q, m.floor, m.footprints, m.dataset_bytes, m.hierarchy_hash)
            .map_err(|e| Error::format(&path, e.to_string()))
    }
}
