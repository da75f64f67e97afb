use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::search::{write_bench_csv, BenchRow, Tuning};
use crate::tuner::TuneResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTime {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierRow {
    pub tuning_id: usize,
    pub tuning: Tuning,
    pub lambda: f64,
    pub modeled_cost: f64,
    pub modeled_recall: f64,
    pub loss: f64,
}

impl FrontierRow {
    pub fn from_result(tuning_id: usize, r: &TuneResult) -> Self {
        FrontierRow {
            tuning_id,
            tuning: r.tuning.clone(),
            lambda: r.lambda,
            modeled_cost: r.modeled_cost,
            modeled_recall: r.modeled_recall,
            loss: r.loss,
        }
    }
}

/// Model predictions next to measurements for one tuning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub tuning_id: usize,
    pub tuning: Tuning,
    pub modeled_cost: f64,
    /// `J(t) * |X|`.
    pub modeled_bytes: f64,
    pub measured_bytes: f64,
    /// Instrumented bytes equal the model exactly (integer comparison).
    pub bytes_exact: bool,
    pub proxy_recall: f64,
    pub recall_at_k: f64,
    pub seconds_per_query: f64,
}

/// A grid Pareto point against the tuner's choice at the same or lower modeled cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityRow {
    pub grid_id: usize,
    pub grid_tuning: Tuning,
    pub grid_cost: f64,
    pub grid_recall: f64,
    pub tuner_tuning: Tuning,
    pub tuner_cost: f64,
    pub tuner_recall: f64,
    /// `grid_recall - tuner_recall`.
    pub recall_gap: f64,
}

/// Tunings from two disjoint halves of the train split at one budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRow {
    pub budget: f64,
    pub tuning_a: Tuning,
    pub tuning_b: Tuning,
    pub cost_a: f64,
    pub cost_b: f64,
    /// Recall of each half's tuning on its own queries.
    pub recall_a_in: f64,
    pub recall_b_in: f64,
    /// Recall of each half's tuning on the holdout split.
    pub recall_a_out: f64,
    pub recall_b_out: f64,
    /// `|recall_a_out - recall_b_out|`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSizeRow {
    pub size: usize,
    pub replica: usize,
    pub budget: f64,
    pub tuning: Tuning,
    pub modeled_cost: f64,
    /// Holdout recall of the tuning chosen from this sample.
    pub recall_at_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSizeSummary {
    pub size: usize,
    pub budget: f64,
    pub replicas: usize,
    pub mean_recall: f64,
    pub std_recall: f64,
}

/// Tables produced by the experiment commands. Empty sections are not written.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub frontier: Vec<FrontierRow>,
    pub accuracy: Vec<AccuracyRow>,
    pub r2_recall: Option<f64>,
    pub r2_bytes: Option<f64>,
    pub r2_seconds: Option<f64>,
    pub grid: Vec<BenchRow>,
    /// `tuning_id`s of the grid's empirical Pareto subset.
    pub grid_pareto: Vec<usize>,
    pub parity: Vec<ParityRow>,
    pub splits: Vec<SplitRow>,
    pub sample_sizes: Vec<SampleSizeRow>,
    pub sample_summary: Vec<SampleSizeSummary>,
    pub timings: Vec<PhaseTime>,
}

fn t_header(prefix: &str, m: usize) -> String {
    (1..=m).map(|i| format!("{prefix}t_{i}")).collect::<Vec<_>>().join(",")
}

fn t_values(t: &Tuning) -> String {
    t.as_slice().iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn levels<'a>(mut tunings: impl Iterator<Item = &'a Tuning>) -> usize {
    tunings.next().map_or(0, Tuning::len)
}

pub fn frontier_csv(rows: &[FrontierRow]) -> String {
    let m = levels(rows.iter().map(|r| &r.tuning));
    let mut s = format!("tuning_id,{},lambda,modeled_cost,modeled_recall,loss\n", t_header("", m));
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.tuning_id,
            t_values(&r.tuning),
            r.lambda,
            r.modeled_cost,
            r.modeled_recall,
            r.loss
        );
    }
    s
}

fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let m = levels(rows.iter().map(|r| &r.tuning));
    let mut s = format!(
        "tuning_id,{},modeled_cost,modeled_bytes,measured_bytes,bytes_exact,proxy_recall,recall_at_k,seconds_per_query\n",
        t_header("", m)
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.tuning_id,
            t_values(&r.tuning),
            r.modeled_cost,
            r.modeled_bytes,
            r.measured_bytes,
            r.bytes_exact,
            r.proxy_recall,
            r.recall_at_k,
            r.seconds_per_query
        );
    }
    s
}

fn parity_csv(rows: &[ParityRow]) -> String {
    let m = levels(rows.iter().map(|r| &r.grid_tuning));
    let mut s = format!(
        "grid_id,{},grid_cost,grid_recall,{},tuner_cost,tuner_recall,recall_gap\n",
        t_header("grid_", m),
        t_header("tuner_", m)
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.grid_id,
            t_values(&r.grid_tuning),
            r.grid_cost,
            r.grid_recall,
            t_values(&r.tuner_tuning),
            r.tuner_cost,
            r.tuner_recall,
            r.recall_gap
        );
    }
    s
}

fn splits_csv(rows: &[SplitRow]) -> String {
    let m = levels(rows.iter().map(|r| &r.tuning_a));
    let mut s = format!(
        "budget,{},{},cost_a,cost_b,recall_a_in,recall_b_in,recall_a_out,recall_b_out,delta\n",
        t_header("a_", m),
        t_header("b_", m)
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.budget,
            t_values(&r.tuning_a),
            t_values(&r.tuning_b),
            r.cost_a,
            r.cost_b,
            r.recall_a_in,
            r.recall_b_in,
            r.recall_a_out,
            r.recall_b_out,
            r.delta
        );
    }
    s
}

fn sample_sizes_csv(rows: &[SampleSizeRow]) -> String {
    let m = levels(rows.iter().map(|r| &r.tuning));
    let mut s = format!("size,replica,budget,{},modeled_cost,recall_at_k\n", t_header("", m));
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.size,
            r.replica,
            r.budget,
            t_values(&r.tuning),
            r.modeled_cost,
            r.recall_at_k
        );
    }
    s
}

fn sample_summary_csv(rows: &[SampleSizeSummary]) -> String {
    let mut s = String::from("size,budget,replicas,mean_recall,std_recall\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.size, r.budget, r.replicas, r.mean_recall, r.std_recall);
    }
    s
}

fn timings_csv(rows: &[PhaseTime]) -> String {
    let mut s = String::from("phase,seconds\n");
    for r in rows {
        let _ = writeln!(s, "{},{}", r.phase, r.seconds);
    }
    s
}

impl Report {
    /// File name and contents of every non-empty section, plus `report.json`.
    pub fn files(&self) -> Result<Vec<(&'static str, String)>> {
        let mut files = Vec::new();
        if !self.frontier.is_empty() {
            files.push(("frontier.csv", frontier_csv(&self.frontier)));
        }
        if !self.accuracy.is_empty() {
            files.push(("accuracy.csv", accuracy_csv(&self.accuracy)));
        }
        if !self.grid.is_empty() {
            let mut buf = Vec::new();
            write_bench_csv(&mut buf, &self.grid).expect("writing to memory");
            files.push(("grid.csv", String::from_utf8(buf).expect("ascii csv")));
        }
        if !self.parity.is_empty() {
            files.push(("parity.csv", parity_csv(&self.parity)));
        }
        if !self.splits.is_empty() {
            files.push(("out_of_sample.csv", splits_csv(&self.splits)));
        }
        if !self.sample_sizes.is_empty() {
            files.push(("sample_size.csv", sample_sizes_csv(&self.sample_sizes)));
            files.push(("sample_size_summary.csv", sample_summary_csv(&self.sample_summary)));
        }
        files.push(("timings.csv", timings_csv(&self.timings)));
        files.push(("report.json", serde_json::to_string_pretty(self)?));
        Ok(files)
    }

    /// Renders every file first, then writes them under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        let files = self.files()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::with_capacity(files.len());
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}
