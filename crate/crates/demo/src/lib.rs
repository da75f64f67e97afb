//! In-browser demo over a small synthetic index: inspect per-level loss curves, tune for a cost
//! budget (and measure the result), and price a tuning under batched execution.

use std::sync::Arc;

use anntune::dataset::compute_ground_truth;
use anntune::experiment::SyntheticSpec;
use anntune::quantization::{build_hierarchy, LevelKind};
use anntune::search::{evaluate_recall, quantized_search};
use anntune::stats::DEFAULT_FLOOR;
use anntune::tuner::{CostModel, LagrangianTables, TuneResult};
use anntune::{GroundTruth, HierarchyConfig, QuantizationHierarchy, QuerySet, RankStats, Result, Tuning};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const K: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct LevelCurves {
    pub level: usize,
    pub kind: &'static str,
    pub footprint_bytes: u64,
    /// `(depth, loss)` where the empirical loss changes.
    pub steps: Vec<(usize, f64)>,
    /// Convex hull breakpoints.
    pub hull: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Measured {
    #[serde(flatten)]
    pub result: TuneResult,
    /// Recall@10 on the evaluation queries.
    pub recall: f64,
    pub bytes_per_query: f64,
    pub modeled_bytes: f64,
}

/// Index, statistics and solver tables for one synthetic dataset.
pub struct Demo {
    hierarchy: QuantizationHierarchy,
    eval_queries: QuerySet,
    eval_truth: GroundTruth,
    tables: LagrangianTables,
    curves: Vec<LevelCurves>,
}

fn config() -> HierarchyConfig {
    HierarchyConfig::from_json(
        r#"{"metric":"squared_euclidean","keep_exact":true,"vq_iters":10,"pq_iters":6,
            "levels":[{"kind":"vq","centroids":64},{"kind":"pq","dims_per_block":2,"bits":4}]}"#,
    )
    .expect("static config")
}

impl Demo {
    /// Builds the index over `n` points in `d` dimensions; half the queries feed the
    /// statistics, the other half measure recall.
    pub fn new(n: usize, d: usize, n_queries: usize, seed: u64) -> Result<Self> {
        let (ds, qs) = SyntheticSpec {
            clusters: 32,
            ..SyntheticSpec::new(n, d, n_queries.max(2), seed)
        }
        .generate()?;
        let ds = Arc::new(ds);
        let cfg = config();
        let hierarchy = build_hierarchy(ds.clone(), &cfg, seed)?;
        let gt = compute_ground_truth(&ds, &qs, K, cfg.metric)?;
        let half = qs.len() / 2;
        let (train, eval): (Vec<usize>, Vec<usize>) = ((0..half).collect(), (half..qs.len()).collect());
        let stats = RankStats::compute(&hierarchy, &qs.select(&train)?, &gt.select(&train)?, K)?;
        let loss = stats.loss_matrix(DEFAULT_FLOOR)?;
        let tables = LagrangianTables::from_loss_matrix(&loss, K)?;
        let curves = hierarchy
            .levels()
            .iter()
            .enumerate()
            .map(|(i, level)| LevelCurves {
                level: i,
                kind: match level.kind() {
                    LevelKind::VqBroadcast => "vq",
                    LevelKind::Pq => "pq",
                    LevelKind::Exact => "exact",
                },
                footprint_bytes: level.footprint_bytes(),
                steps: loss.curve(i).steps().collect(),
                hull: loss.hull(i).breakpoints().to_vec(),
            })
            .collect();
        Ok(Demo {
            eval_queries: qs.select(&eval)?,
            eval_truth: gt.select(&eval)?,
            hierarchy,
            tables,
            curves,
        })
    }

    pub fn curves(&self) -> &[LevelCurves] {
        &self.curves
    }

    pub fn frontier(&self) -> Vec<TuneResult> {
        self.tables.pareto_frontier().entries().to_vec()
    }

    /// Best modeled tuning within `budget`, searched over the evaluation queries.
    pub fn tune(&self, budget: f64) -> Result<Measured> {
        let result = self.tables.tune_for_cost(budget)?;
        let mut ids = Vec::with_capacity(self.eval_queries.len());
        let mut numerator = 0u128;
        for q in 0..self.eval_queries.len() {
            let r = quantized_search(&self.hierarchy, &result.tuning, self.eval_queries.query(q), false)?;
            numerator += r.byte_numerator(&self.hierarchy);
            ids.push(r.ids);
        }
        let recall = evaluate_recall(&ids, &self.eval_truth, K)?.mean;
        let n = self.hierarchy.n() as f64;
        Ok(Measured {
            recall,
            bytes_per_query: numerator as f64 / (n * self.eval_queries.len() as f64),
            modeled_bytes: result.modeled_cost * self.hierarchy.dataset_bytes() as f64,
            result,
        })
    }

    /// `J(t, B)` for a batch of `batch` queries with compute/bandwidth ratio `rho`.
    pub fn batched_cost(&self, t: &[usize], batch: usize, rho: f64) -> Result<f64> {
        CostModel::from_hierarchy(&self.hierarchy).batched_cost(&Tuning::new(t.to_vec())?, batch, rho)
    }
}

fn js(e: anntune::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("demo values serialize")
}

/// JavaScript handle to a [`Demo`]. Results are JSON strings.
#[wasm_bindgen]
pub struct Session {
    inner: Demo,
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, d: usize, queries: usize, seed: u32) -> Result<Session, JsError> {
        Demo::new(n, d, queries, seed as u64).map(|inner| Session { inner }).map_err(js)
    }

    pub fn curves(&self) -> String {
        json(self.inner.curves())
    }

    pub fn frontier(&self) -> String {
        json(&self.inner.frontier())
    }

    pub fn tune(&self, budget: f64) -> Result<String, JsError> {
        self.inner.tune(budget).map(|m| json(&m)).map_err(js)
    }

    #[wasm_bindgen(js_name = batchedCost)]
    pub fn batched_cost(&self, t: &[u32], batch: usize, rho: f64) -> Result<f64, JsError> {
        let t: Vec<usize> = t.iter().map(|&x| x as usize).collect();
        self.inner.batched_cost(&t, batch, rho).map_err(js)
    }
}
