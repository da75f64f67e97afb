//! End-to-end experiments: configuration, query splits, grid-search baselines and
//! model-validation reports.

mod grid;
mod report;
mod synthetic;
mod validate;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{compute_ground_truth, load_vectors, Dataset, GroundTruth, QuerySet, VectorFormat};
use crate::error::{Error, Result};
use crate::quantization::{build_hierarchy, HierarchyConfig, QuantizationHierarchy};
use crate::search::{bench, BenchOptions, BenchRow, Tuning};
use crate::stats::{RankStats, DEFAULT_FLOOR};
use crate::tuner::LagrangianTables;

pub use grid::{cmd_grid, count_monotone, enumerate_grid, pareto_indices, GridSpec, MAX_GRID_CELLS};
pub use report::{frontier_csv, AccuracyRow, FrontierRow, ParityRow, PhaseTime, Report, SampleSizeRow, SampleSizeSummary, SplitRow};
pub use synthetic::SyntheticSpec;
pub use validate::{auto_budgets, cmd_validate, MIN_HOLDOUT};

/// Where the base vectors and queries come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Files {
        base: PathBuf,
        queries: PathBuf,
        /// `.ivecs` neighbor ids covering every query; computed when absent.
        #[serde(default)]
        ground_truth: Option<PathBuf>,
    },
}

/// A named preset or an inline hierarchy configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchySource {
    Preset(String),
    Config(HierarchyConfig),
}

impl HierarchySource {
    pub fn resolve(&self) -> Result<HierarchyConfig> {
        match self {
            HierarchySource::Preset(name) => HierarchyConfig::preset(name),
            HierarchySource::Config(cfg) => Ok(cfg.clone()),
        }
    }
}

/// Disjoint train/holdout fractions of the query set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub holdout_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    /// Seeded shuffle of `0..n_q`, cut into train and holdout index lists.
    pub fn split(&self, n_q: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let ok = |f: f64| f.is_finite() && (0.0..=1.0).contains(&f);
        if !ok(self.train_fraction) || !ok(self.holdout_fraction) || self.train_fraction + self.holdout_fraction > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "split fractions {} + {} must lie in [0, 1] and sum to at most 1",
                self.train_fraction, self.holdout_fraction
            )));
        }
        let mut order: Vec<usize> = (0..n_q).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let n_train = (self.train_fraction * n_q as f64).round() as usize;
        let n_holdout = ((self.holdout_fraction * n_q as f64).round() as usize).min(n_q - n_train);
        let holdout = order[n_train..n_train + n_holdout].to_vec();
        order.truncate(n_train);
        Ok((order, holdout))
    }
}

/// Cost budgets and recall targets to tune for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Targets {
    #[serde(default)]
    pub budgets: Vec<f64>,
    #[serde(default)]
    pub recalls: Vec<f64>,
    #[serde(default = "yes")]
    pub frontier: bool,
}

fn yes() -> bool {
    true
}

impl Default for Targets {
    fn default() -> Self {
        Targets {
            budgets: Vec::new(),
            recalls: Vec::new(),
            frontier: true,
        }
    }
}

fn default_sample_sizes() -> Vec<usize> {
    vec![100, 1000]
}

fn default_replicas() -> usize {
    3
}

fn default_anchors() -> Vec<f64> {
    vec![0.7, 0.8, 0.9]
}

fn default_frontier_points() -> usize {
    20
}

/// Settings for `cmd_validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSpec {
    /// Subsample sizes for the variance study; the full train split is always added.
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    /// Disjoint replicas per size, capped by what the train split can hold.
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Budgets for the split and sample-size studies; chosen from `recall_anchors` when empty.
    #[serde(default)]
    pub budgets: Vec<f64>,
    /// Modeled recalls whose frontier costs become the automatic budgets.
    #[serde(default = "default_anchors")]
    pub recall_anchors: Vec<f64>,
    /// Frontier tunings benchmarked for the accuracy table.
    #[serde(default = "default_frontier_points")]
    pub frontier_points: usize,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        ValidateSpec {
            sample_sizes: default_sample_sizes(),
            replicas: default_replicas(),
            budgets: Vec::new(),
            recall_anchors: default_anchors(),
            frontier_points: default_frontier_points(),
        }
    }
}

fn default_k() -> usize {
    10
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

/// Everything one experiment needs, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub split: SplitSpec,
    pub hierarchy: HierarchySource,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Smallest final depth the tuner may pick; defaults to `k`.
    #[serde(default)]
    pub t_min: Option<usize>,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub targets: Targets,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub validate: ValidateSpec,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    /// Hierarchy training seed.
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.hierarchy.resolve()?;
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::InvalidConfig("loss floor must be positive".into()));
        }
        self.split.split(0)?;
        Ok(())
    }

    pub fn t_min(&self) -> usize {
        self.t_min.unwrap_or(self.k)
    }

    fn bench_options(&self) -> BenchOptions {
        BenchOptions {
            threads: self.threads,
            ..BenchOptions::default()
        }
    }
}

/// Loads (or generates) the vectors and queries a config names.
pub fn load_data(source: &DatasetSource) -> Result<(Dataset, QuerySet, Option<PathBuf>)> {
    match source {
        DatasetSource::Synthetic(spec) => {
            let (ds, qs) = spec.generate()?;
            Ok((ds, qs, None))
        }
        DatasetSource::Files {
            base,
            queries,
            ground_truth,
        } => {
            let format = |p: &Path| {
                VectorFormat::from_path(p).ok_or_else(|| Error::format(p, "unknown vector file extension"))
            };
            let ds = load_vectors(base, format(base)?)?;
            let qs = QuerySet::new(load_vectors(queries, format(queries)?)?);
            Ok((ds, qs, ground_truth.clone()))
        }
    }
}

/// Squared sample Pearson correlation; NaN when either side has zero variance.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy * sxy / (sxx * syy)
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Data, ground truth, hierarchy and query split of one experiment, with phase timings.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Arc<Dataset>,
    pub queries: QuerySet,
    /// Exact neighbors of every query, depth `k`.
    pub ground_truth: GroundTruth,
    pub hierarchy: QuantizationHierarchy,
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
    pub timings: Vec<PhaseTime>,
}

impl Experiment {
    /// Loads data, computes (or loads) ground truth and builds the hierarchy.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut timings = Vec::new();
        let (ds, qs, gt_path) = timed(&mut timings, "load", || load_data(&config.dataset))?;
        let ds = Arc::new(ds);
        let gt = timed(&mut timings, "ground_truth", || match &gt_path {
            Some(path) => GroundTruth::load(path, None)?.truncate(config.k),
            None => compute_ground_truth(&ds, &qs, config.k, config.hierarchy.resolve()?.metric),
        })?;
        let hcfg = config.hierarchy.resolve()?;
        let h = timed(&mut timings, "build", || build_hierarchy(ds.clone(), &hcfg, config.seed))?;
        Self::from_parts(config, ds, qs, gt, h, timings)
    }

    /// Assembles an experiment from already loaded or built pieces.
    pub fn from_parts(
        config: ExperimentConfig,
        dataset: Arc<Dataset>,
        queries: QuerySet,
        ground_truth: GroundTruth,
        hierarchy: QuantizationHierarchy,
        timings: Vec<PhaseTime>,
    ) -> Result<Self> {
        config.validate()?;
        if ground_truth.n_queries() != queries.len() {
            return Err(Error::invalid(format!(
                "ground truth covers {} queries, query set has {}",
                ground_truth.n_queries(),
                queries.len()
            )));
        }
        if ground_truth.k() < config.k {
            return Err(Error::invalid(format!("ground truth depth {} below k={}", ground_truth.k(), config.k)));
        }
        if hierarchy.n() != dataset.len() || hierarchy.dim() != queries.dim() {
            return Err(Error::invalid("hierarchy does not match the dataset or queries"));
        }
        let (train, holdout) = config.split.split(queries.len())?;
        Ok(Experiment {
            config,
            dataset,
            queries,
            ground_truth,
            hierarchy,
            train,
            holdout,
            timings,
        })
    }

    pub(crate) fn time<T>(&mut self, phase: &str, f: impl FnOnce(&Self) -> T) -> T {
        let started = crate::clock::Stopwatch::start();
        let out = f(self);
        self.record(phase, started.seconds());
        out
    }

    fn record(&mut self, phase: &str, seconds: f64) {
        log::info!("{phase}: {seconds:.3}s");
        self.timings.push(PhaseTime {
            phase: phase.to_string(),
            seconds,
        });
    }

    /// Queries and ground truth restricted to `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<(QuerySet, GroundTruth)> {
        Ok((self.queries.select(indices)?, self.ground_truth.select(indices)?))
    }

    /// Rank statistics over the given queries.
    pub fn rank_stats(&self, indices: &[usize]) -> Result<RankStats> {
        let (qs, gt) = self.subset(indices)?;
        RankStats::compute(&self.hierarchy, &qs, &gt, self.config.k)
    }

    /// Solver tables from rank statistics, with the configured floor and `t_min`.
    pub fn tables(&self, stats: &RankStats) -> Result<LagrangianTables> {
        let lm = stats.loss_matrix(self.config.floor)?;
        LagrangianTables::from_loss_matrix(&lm, self.config.t_min())
    }

    /// Benchmarks tunings on the given queries. `timed` runs warmup and median-of-5 passes;
    /// otherwise a single pass measures recall and bytes.
    pub fn evaluate(&self, tunings: &[Tuning], indices: &[usize], timed: bool) -> Result<Vec<BenchRow>> {
        let (qs, gt) = self.subset(indices)?;
        let opts = if timed {
            self.config.bench_options()
        } else {
            BenchOptions {
                threads: self.config.threads,
                repeats: 1,
                warmup: false,
            }
        };
        bench(&self.hierarchy, tunings, &qs, &gt, self.config.k, opts)
    }
}

fn timed<T>(timings: &mut Vec<PhaseTime>, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let started = crate::clock::Stopwatch::start();
    let out = f()?;
    let seconds = started.seconds();
    log::info!("{phase}: {seconds:.3}s");
    timings.push(PhaseTime {
        phase: phase.to_string(),
        seconds,
    });
    Ok(out)
}
