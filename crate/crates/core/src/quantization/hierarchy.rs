//! The multi-level quantization hierarchy and per-query level scoring.

use std::sync::Arc;

use log::info;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{HierarchyConfig, LevelPlan, Plan, Store, TableRef};
use super::kmeans::{train_vq, Buckets, VqCodebook};
use super::pq::{train_pq, LookupTable, PqCodebook};
use super::scalar::Int8Table;
use crate::dataset::{Dataset, ElementKind, Metric};
use crate::error::{Error, Result};

/// Mapping from datapoints to the rows of a centroid table.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    assign: Vec<u32>,
    buckets: Buckets,
}

impl Grouping {
    pub(crate) fn new(assign: Vec<u32>, groups: usize) -> Self {
        let buckets = Buckets::from_assignments(&assign, groups);
        Grouping { assign, buckets }
    }

    pub fn num_groups(&self) -> usize {
        self.buckets.len()
    }

    #[inline]
    pub fn group_of(&self, point: usize) -> usize {
        self.assign[point] as usize
    }

    /// Datapoints of group `g`, ascending.
    #[inline]
    pub fn members(&self, g: usize) -> &[u32] {
        self.buckets.bucket(g)
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assign
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CentroidTable {
    Float32(Vec<f32>),
    Int8(Int8Table),
}

impl CentroidTable {
    #[inline]
    fn row(&self, i: usize, dim: usize) -> &[f32] {
        match self {
            CentroidTable::Float32(rows) => &rows[i * dim..(i + 1) * dim],
            CentroidTable::Int8(t) => t.row(i),
        }
    }

    pub fn store(&self) -> Store {
        match self {
            CentroidTable::Float32(_) => Store::Float32,
            CentroidTable::Int8(_) => Store::Int8,
        }
    }
}

/// What a level stores.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Centroid table; each point's quantized form is its centroid.
    Centroids(CentroidTable),
    /// Product-quantized rows (either datapoints or a centroid table).
    Pq(PqCodebook),
    /// The original vectors.
    Exact(Arc<Dataset>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelKind {
    VqBroadcast,
    Pq,
    Exact,
}

/// One quantization `X~(i)` of all `n` datapoints.
#[derive(Debug, Clone)]
pub struct QuantizationLevel {
    position: usize,
    plan: LevelPlan,
    dim: usize,
    n: usize,
    metric: Metric,
    payload: Payload,
    /// `None` when rows are datapoints.
    grouping: Option<Arc<Grouping>>,
    footprint_bytes: u64,
    dataset_bytes: u64,
}

impl QuantizationLevel {
    /// Zero-based position in ascending-bitrate order.
    pub fn position(&self) -> usize {
        self.position
    }

    pub fn kind(&self) -> LevelKind {
        match self.payload {
            Payload::Centroids(_) => LevelKind::VqBroadcast,
            Payload::Pq(_) => LevelKind::Pq,
            Payload::Exact(_) => LevelKind::Exact,
        }
    }

    pub fn plan(&self) -> LevelPlan {
        self.plan
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn grouping(&self) -> Option<&Grouping> {
        self.grouping.as_deref()
    }

    /// Number of datapoints described.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Rows whose distances are materialized per query (centroids or points).
    pub fn num_rows(&self) -> usize {
        match &self.grouping {
            Some(g) => g.num_groups(),
            None => self.n,
        }
    }

    /// `|X~(i)|` in bytes.
    pub fn footprint_bytes(&self) -> u64 {
        self.footprint_bytes
    }

    /// `|X~(i)| / |X|`.
    pub fn compression_ratio(&self) -> f64 {
        self.footprint_bytes as f64 / self.dataset_bytes as f64
    }

    pub fn describe(&self) -> String {
        match self.plan {
            LevelPlan::Centroids { tier, store } => format!(
                "vq tier {tier} ({} centroids, {store:?})",
                self.num_rows()
            ),
            LevelPlan::Pq {
                table,
                dims_per_block,
                bits,
            } => {
                let of = match table {
                    TableRef::Tier(t) => format!("tier {t} centroids"),
                    TableRef::Points => "points".to_string(),
                };
                format!("pq of {of} ({dims_per_block} dims/block, {bits} bits)")
            }
            LevelPlan::Exact => "exact".to_string(),
        }
    }

    /// Distance evaluator for one query.
    pub fn scorer<'a>(&'a self, query: &'a [f32]) -> LevelScorer<'a> {
        debug_assert_eq!(query.len(), self.dim);
        let lut = match &self.payload {
            Payload::Pq(pq) => Some(pq.lookup_table(query, self.metric)),
            _ => None,
        };
        let cache = if self.grouping.is_some() {
            vec![f64::NAN; self.num_rows()]
        } else {
            Vec::new()
        };
        LevelScorer {
            level: self,
            query,
            lut,
            cache,
        }
    }
}

/// Per-query distance evaluation against one level. Grouped levels compute each row distance
/// at most once and share it across the row's members.
pub struct LevelScorer<'a> {
    level: &'a QuantizationLevel,
    query: &'a [f32],
    lut: Option<LookupTable>,
    cache: Vec<f64>,
}

impl LevelScorer<'_> {
    /// Distance from the query to table row `r`.
    #[inline]
    pub fn row_distance(&self, r: usize) -> f64 {
        let level = self.level;
        match &level.payload {
            Payload::Centroids(table) => level.metric.eval(self.query, table.row(r, level.dim)),
            Payload::Pq(pq) => self.lut.as_ref().unwrap().distance(pq.codes(r)) as f64,
            Payload::Exact(ds) => level.metric.eval(self.query, ds.row(r)),
        }
    }

    /// Quantized distance from the query to datapoint `j`.
    #[inline]
    pub fn distance(&mut self, j: usize) -> f64 {
        match &self.level.grouping {
            Some(g) => {
                let r = g.group_of(j);
                let cached = self.cache[r];
                if cached.is_nan() {
                    let d = self.row_distance(r);
                    self.cache[r] = d;
                    d
                } else {
                    cached
                }
            }
            None => self.row_distance(j),
        }
    }

    /// Distances to every row of the level's table.
    pub fn all_row_distances(&self) -> Vec<f64> {
        (0..self.level.num_rows()).map(|r| self.row_distance(r)).collect()
    }
}

/// Distance from `q` to datapoint `j` under `level`.
pub fn quantized_distance(level: &QuantizationLevel, q: &[f32], j: usize) -> Result<f64> {
    if q.len() != level.dim {
        return Err(Error::DimensionMismatch {
            expected: level.dim,
            got: q.len(),
        });
    }
    if j >= level.n {
        return Err(Error::invalid(format!("datapoint {j} out of range 0..{}", level.n)));
    }
    Ok(level.scorer(q).distance(j))
}

/// A vector-quantized table and the grouping it induces on datapoints.
#[derive(Debug, Clone)]
pub struct Tier {
    /// Trained on the next finer table (the finer tier's centroids, or the points).
    codebook: VqCodebook,
    points: Arc<Grouping>,
}

impl Tier {
    pub fn codebook(&self) -> &VqCodebook {
        &self.codebook
    }

    pub fn point_grouping(&self) -> &Grouping {
        &self.points
    }
}

/// Quantizations `X~(1..m)` of one dataset in ascending bitrate.
#[derive(Debug, Clone)]
pub struct QuantizationHierarchy {
    config: HierarchyConfig,
    seed: u64,
    n: usize,
    d: usize,
    kind: ElementKind,
    tiers: Vec<Tier>,
    levels: Vec<QuantizationLevel>,
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rows to train on: all of them, or a seeded sample of `limit` rows in index order.
fn training_rows<'a>(data: &'a [f32], dim: usize, limit: Option<usize>, seed: u64) -> std::borrow::Cow<'a, [f32]> {
    let rows = data.len() / dim;
    match limit {
        Some(limit) if rows > limit => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, rows, limit).into_vec();
            idx.sort_unstable();
            let mut out = Vec::with_capacity(limit * dim);
            for i in idx {
                out.extend_from_slice(&data[i * dim..(i + 1) * dim]);
            }
            std::borrow::Cow::Owned(out)
        }
        _ => std::borrow::Cow::Borrowed(data),
    }
}

fn fit_vq(data: &[f32], dim: usize, c: usize, cfg: &HierarchyConfig, seed: u64) -> Result<VqCodebook> {
    let train = training_rows(data, dim, cfg.max_train_rows, derive_seed(seed, 1));
    let trained = train_vq(&train, dim, c, seed, cfg.vq_iters)?;
    if train.len() == data.len() {
        return Ok(trained);
    }
    let assign = trained.assign(data);
    Ok(VqCodebook::from_parts(dim, trained.centroids().to_vec(), assign))
}

fn fit_pq(
    data: &[f32],
    dim: usize,
    dims_per_block: usize,
    bits: u32,
    cfg: &HierarchyConfig,
    seed: u64,
) -> Result<PqCodebook> {
    let train = training_rows(data, dim, cfg.max_train_rows, derive_seed(seed, 2));
    let mut pq = train_pq(&train, dim, dims_per_block, bits, seed, cfg.pq_iters)?;
    if train.len() != data.len() {
        pq.encode_rows(data);
    }
    Ok(pq)
}

/// Builds every level of `config` over `ds`.
///
/// The finest centroid tier is trained on the datapoints and each coarser tier on the centroids
/// of the next finer one. Each PQ level is trained on the table it encodes.
pub fn build_hierarchy(
    ds: Arc<Dataset>,
    config: &HierarchyConfig,
    seed: u64,
) -> Result<QuantizationHierarchy> {
    let n = ds.len();
    let d = ds.dim();
    let footprints = config.planned_footprints(n as u64, d, ds.kind().bytes_per_dim())?;
    let plan: Plan = config.plan()?;
    let dataset_bytes = ds.footprint_bytes();

    // Tiers, finest first.
    let mut codebooks: Vec<Option<VqCodebook>> = vec![None; plan.tiers.len()];
    for t in (0..plan.tiers.len()).rev() {
        let started = crate::clock::Stopwatch::start();
        let table: &[f32] = match codebooks.get(t + 1) {
            Some(Some(finer)) => finer.centroids(),
            _ => ds.as_slice(),
        };
        let vq = fit_vq(table, d, plan.tiers[t], config, derive_seed(seed, 100 + t as u64))
            .map_err(|e| Error::InvalidConfig(format!("vq tier {t}: {e}")))?;
        info!(
            "trained vq tier {t}: {} centroids in {:.2}s",
            plan.tiers[t],
            started.seconds()
        );
        codebooks[t] = Some(vq);
    }
    let codebooks: Vec<VqCodebook> = codebooks.into_iter().map(Option::unwrap).collect();

    // Point-level groupings, composing assignments from fine to coarse.
    let mut groupings: Vec<Option<Arc<Grouping>>> = vec![None; codebooks.len()];
    let mut point_assign: Option<Vec<u32>> = None;
    for t in (0..codebooks.len()).rev() {
        let assign: Vec<u32> = match &point_assign {
            None => codebooks[t].assignments().to_vec(),
            Some(finer) => finer
                .iter()
                .map(|&r| codebooks[t].assignments()[r as usize])
                .collect(),
        };
        groupings[t] = Some(Arc::new(Grouping::new(assign.clone(), plan.tiers[t])));
        point_assign = Some(assign);
    }
    let tiers: Vec<Tier> = codebooks
        .into_iter()
        .zip(groupings)
        .map(|(codebook, g)| Tier {
            codebook,
            points: g.unwrap(),
        })
        .collect();

    let mut levels = Vec::with_capacity(plan.levels.len());
    for (position, (&level_plan, &footprint_bytes)) in plan.levels.iter().zip(&footprints).enumerate() {
        let (payload, grouping) = match level_plan {
            LevelPlan::Centroids { tier, store } => {
                let rows = tiers[tier].codebook.centroids();
                let table = match store {
                    Store::Float32 => CentroidTable::Float32(rows.to_vec()),
                    Store::Int8 => CentroidTable::Int8(Int8Table::encode(rows, d)),
                };
                (Payload::Centroids(table), Some(tiers[tier].points.clone()))
            }
            LevelPlan::Pq {
                table,
                dims_per_block,
                bits,
            } => {
                let started = crate::clock::Stopwatch::start();
                let (rows, grouping) = match table {
                    TableRef::Tier(t) => (tiers[t].codebook.centroids(), Some(tiers[t].points.clone())),
                    TableRef::Points => (ds.as_slice(), None),
                };
                let pq = fit_pq(rows, d, dims_per_block, bits, config, derive_seed(seed, 200 + position as u64))
                    .map_err(|e| Error::InvalidConfig(format!("pq level {position}: {e}")))?;
                info!("trained level {position} pq in {:.2}s", started.seconds());
                (Payload::Pq(pq), grouping)
            }
            LevelPlan::Exact => (Payload::Exact(ds.clone()), None),
        };
        levels.push(QuantizationLevel {
            position,
            plan: level_plan,
            dim: d,
            n,
            metric: config.metric,
            payload,
            grouping,
            footprint_bytes,
            dataset_bytes,
        });
    }

    Ok(QuantizationHierarchy {
        config: config.clone(),
        seed,
        n,
        d,
        kind: ds.kind(),
        tiers,
        levels,
    })
}

impl QuantizationHierarchy {
    pub(crate) fn from_parts(
        config: HierarchyConfig,
        seed: u64,
        n: usize,
        d: usize,
        kind: ElementKind,
        tier_parts: Vec<(Vec<f32>, Vec<u32>)>,
        payloads: Vec<Payload>,
    ) -> Result<Self> {
        let plan = config.plan()?;
        let footprints = config.planned_footprints(n as u64, d, kind.bytes_per_dim())?;
        if tier_parts.len() != plan.tiers.len() || payloads.len() != plan.levels.len() {
            return Err(Error::invalid("stored hierarchy does not match its configuration"));
        }
        let mut codebooks: Vec<VqCodebook> = tier_parts
            .into_iter()
            .map(|(c, a)| VqCodebook::from_parts(d, c, a))
            .collect();
        let mut groupings: Vec<Option<Arc<Grouping>>> = vec![None; codebooks.len()];
        let mut point_assign: Option<Vec<u32>> = None;
        for t in (0..codebooks.len()).rev() {
            let assign: Vec<u32> = match &point_assign {
                None => codebooks[t].assignments().to_vec(),
                Some(finer) => finer.iter().map(|&r| codebooks[t].assignments()[r as usize]).collect(),
            };
            if assign.len() != n || assign.iter().any(|&a| a as usize >= plan.tiers[t]) {
                return Err(Error::invalid("stored tier assignments are inconsistent"));
            }
            groupings[t] = Some(Arc::new(Grouping::new(assign.clone(), plan.tiers[t])));
            point_assign = Some(assign);
        }
        let tiers: Vec<Tier> = codebooks
            .drain(..)
            .zip(groupings)
            .map(|(codebook, g)| Tier { codebook, points: g.unwrap() })
            .collect();
        let dataset_bytes = n as u64 * d as u64 * kind.bytes_per_dim();
        let levels = plan
            .levels
            .iter()
            .zip(payloads)
            .zip(footprints)
            .enumerate()
            .map(|(position, ((&lp, payload), footprint_bytes))| {
                let grouping = match lp {
                    LevelPlan::Centroids { tier, .. } | LevelPlan::Pq { table: TableRef::Tier(tier), .. } => {
                        Some(tiers[tier].points.clone())
                    }
                    _ => None,
                };
                QuantizationLevel {
                    position,
                    plan: lp,
                    dim: d,
                    n,
                    metric: config.metric,
                    payload,
                    grouping,
                    footprint_bytes,
                    dataset_bytes,
                }
            })
            .collect();
        Ok(QuantizationHierarchy { config, seed, n, d, kind, tiers, levels })
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn metric(&self) -> Metric {
        self.config.metric
    }

    pub fn element_kind(&self) -> ElementKind {
        self.kind
    }

    /// Number of levels `m`.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[QuantizationLevel] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &QuantizationLevel {
        &self.levels[i]
    }

    pub fn tiers(&self) -> &[Tier] {
        &self.tiers
    }

    pub fn footprints(&self) -> Vec<u64> {
        self.levels.iter().map(|l| l.footprint_bytes).collect()
    }

    /// Brute-force footprint `|X|`.
    pub fn dataset_bytes(&self) -> u64 {
        self.n as u64 * self.d as u64 * self.kind.bytes_per_dim()
    }
}
