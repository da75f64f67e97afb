//! `anntune`: build multi-level quantization indexes, compute recall-loss statistics, tune
//! per-level search depths and validate the model against measurements.

mod staging;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anntune::dataset::{compute_ground_truth, save_vectors, VectorFormat};
use anntune::experiment::{
    cmd_grid, cmd_validate, load_data, DatasetSource, Experiment, ExperimentConfig, FrontierRow, SyntheticSpec,
};
use anntune::quantization::build_hierarchy;
use anntune::search::write_bench_csv;
use anntune::stats::LossMatrix;
use anntune::tuner::{LagrangianTables, TuneResult};
use anntune::{Error, GroundTruth, QuantizationHierarchy, Tuning};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use staging::Staging;

#[derive(Parser, Debug)]
#[command(name = "anntune", version, about = "Multi-level quantization ANN search with a self-tuner")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the hierarchy training seed (and the generator seed for gen-synthetic).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Inputs {
    /// Saved hierarchy directory; the hierarchy is rebuilt from the config when absent.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Ground-truth `.ivecs` covering every query; computed when absent.
    #[arg(long)]
    gt: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded Gaussian-mixture dataset as base.fvecs and queries.fvecs.
    GenSynthetic {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Exact k-NN of every query: gt.ivecs and gt.dist.fvecs.
    Gt,
    /// Train the hierarchy and save it under hierarchy/.
    Build,
    /// Recall-loss statistics of the train split, saved under stats/.
    Stats {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Tune for cost budgets and recall targets from saved statistics: tune.json, frontier.csv.
    Tune {
        /// Statistics directory (default: <out>/stats).
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Cost budget J (fraction of brute-force bytes); repeatable.
        #[arg(long)]
        budget: Vec<f64>,
        /// Recall target in (0, 1]; repeatable.
        #[arg(long)]
        recall: Vec<f64>,
        /// Also write the Pareto frontier.
        #[arg(long)]
        frontier: bool,
    },
    /// Measure recall, bytes and throughput of tunings on the holdout split: bench.csv.
    Bench {
        #[command(flatten)]
        inputs: Inputs,
        /// Tunings file: frontier.csv or tune.json.
        #[arg(long)]
        tunings: Option<PathBuf>,
        /// A tuning as comma-separated depths; repeatable.
        #[arg(short = 't', long = "tuning")]
        tuning: Vec<String>,
    },
    /// Evaluate the config's monotone grid and compare its Pareto points with the tuner.
    Grid {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Model accuracy, out-of-sample and sample-size reports.
    Validate {
        #[command(flatten)]
        inputs: Inputs,
    },
}

/// Process exit status per failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Internal = 1,
    Io = 3,
    BadInput = 4,
    BadConfig = 5,
    Infeasible = 6,
}

fn classify(e: &Error) -> Failure {
    match e {
        Error::Io { .. } => Failure::Io,
        Error::Format { .. } | Error::EmptyDataset | Error::DimensionMismatch { .. } => Failure::BadInput,
        Error::InvalidArgument(_) | Error::InvalidConfig(_) | Error::Json(_) => Failure::BadConfig,
        Error::Infeasible(_) => Failure::Infeasible,
        #[allow(unreachable_patterns)]
        _ => Failure::Internal,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(threads) = cli.threads.filter(|&t| t > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    let started = Instant::now();
    match run(&cli) {
        Ok(()) => {
            log::info!("done in {:.2}s", started.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e) as u8)
        }
    }
}

fn config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("this command needs --config <json>".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn phase<T>(name: &str, f: impl FnOnce() -> Result<T, Error>) -> Result<T, Error> {
    let started = Instant::now();
    let out = f()?;
    log::info!("phase {name}: {:.3}s", started.elapsed().as_secs_f64());
    Ok(out)
}

/// Data, ground truth and hierarchy for commands that search.
fn experiment(cfg: ExperimentConfig, inputs: &Inputs) -> Result<Experiment, Error> {
    let (ds, qs, cfg_gt) = phase("load", || load_data(&cfg.dataset))?;
    let ds = Arc::new(ds);
    let metric = cfg.hierarchy.resolve()?.metric;
    let gt = phase("ground_truth", || match inputs.gt.as_ref().or(cfg_gt.as_ref()) {
        Some(path) => GroundTruth::load(path, None)?.truncate(cfg.k),
        None => compute_ground_truth(&ds, &qs, cfg.k, metric),
    })?;
    let h = phase("hierarchy", || match &inputs.hierarchy {
        Some(dir) => QuantizationHierarchy::load(dir),
        None => build_hierarchy(ds.clone(), &cfg.hierarchy.resolve()?, cfg.seed),
    })?;
    Experiment::from_parts(cfg, ds, qs, gt, h, Vec::new())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let out = &cli.out;
    match &cli.command {
        Command::GenSynthetic { n, d, queries, clusters } => {
            let mut spec = match cli.config.as_ref().map(ExperimentConfig::load).transpose()? {
                Some(ExperimentConfig {
                    dataset: DatasetSource::Synthetic(spec),
                    ..
                }) => spec,
                _ => SyntheticSpec::new(10_000, 16, 1_000, 0),
            };
            spec.n = n.unwrap_or(spec.n);
            spec.d = d.unwrap_or(spec.d);
            spec.n_queries = queries.unwrap_or(spec.n_queries);
            spec.clusters = clusters.unwrap_or(spec.clusters);
            spec.seed = cli.seed.unwrap_or(spec.seed);
            let (ds, qs) = phase("generate", || spec.generate())?;
            let stage = Staging::new(out);
            save_vectors(stage.file("base.fvecs")?, &ds, VectorFormat::Fvecs)?;
            save_vectors(stage.file("queries.fvecs")?, qs.vectors(), VectorFormat::Fvecs)?;
            stage.commit()
        }
        Command::Gt => {
            let cfg = config(cli)?;
            let (ds, qs, _) = phase("load", || load_data(&cfg.dataset))?;
            let metric = cfg.hierarchy.resolve()?.metric;
            let gt = phase("ground_truth", || compute_ground_truth(&ds, &qs, cfg.k, metric))?;
            let stage = Staging::new(out);
            gt.save(stage.file("gt.ivecs")?, stage.file("gt.dist.fvecs")?)?;
            stage.commit()
        }
        Command::Build => {
            let cfg = config(cli)?;
            let (ds, _, _) = phase("load", || load_data(&cfg.dataset))?;
            let hcfg = cfg.hierarchy.resolve()?;
            let h = phase("build", || build_hierarchy(Arc::new(ds), &hcfg, cfg.seed))?;
            log::info!("hierarchy {} levels, footprints {:?}", h.num_levels(), h.footprints());
            let stage = Staging::new(out);
            h.save(stage.file("hierarchy")?)?;
            stage.commit()
        }
        Command::Stats { inputs } => {
            let exp = experiment(config(cli)?, inputs)?;
            let lm = phase("stats", || exp.rank_stats(&exp.train)?.loss_matrix(exp.config.floor))?;
            let stage = Staging::new(out);
            lm.save(stage.file("stats")?)?;
            stage.commit()
        }
        Command::Tune {
            stats,
            budget,
            recall,
            frontier,
        } => {
            let cfg = cli.config.as_ref().map(|_| config(cli)).transpose()?;
            let dir = stats.clone().unwrap_or_else(|| out.join("stats"));
            let lm = phase("load_stats", || LossMatrix::load(&dir))?;
            let t_min = cfg.as_ref().map_or(lm.k(), ExperimentConfig::t_min);
            let mut budgets = cfg.as_ref().map(|c| c.targets.budgets.clone()).unwrap_or_default();
            budgets.extend(budget);
            let mut recalls = cfg.as_ref().map(|c| c.targets.recalls.clone()).unwrap_or_default();
            recalls.extend(recall);
            let want_frontier = *frontier || cfg.as_ref().is_some_and(|c| c.targets.frontier);
            let (results, front) = phase("solve", || tune(&lm, t_min, &budgets, &recalls, want_frontier))?;
            let stage = Staging::new(out);
            let body = serde_json::to_string_pretty(&TuneOutput {
                t_min,
                results: &results,
            })?;
            stage.write("tune.json", body)?;
            if let Some(rows) = front {
                stage.write("frontier.csv", anntune::experiment::frontier_csv(&rows))?;
            }
            stage.commit()
        }
        Command::Bench {
            inputs,
            tunings,
            tuning,
        } => {
            let mut list = match tunings {
                Some(path) => read_tunings(path)?,
                None => Vec::new(),
            };
            for t in tuning {
                list.push(parse_tuning(t)?);
            }
            if list.is_empty() {
                return Err(Error::InvalidArgument("no tunings given (--tunings or -t)".into()));
            }
            let exp = experiment(config(cli)?, inputs)?;
            let eval = if exp.holdout.is_empty() { &exp.train } else { &exp.holdout };
            let rows = phase("bench", || exp.evaluate(&list, eval, true))?;
            let mut csv = Vec::new();
            write_bench_csv(&mut csv, &rows).map_err(|e| Error::Io {
                path: "bench.csv".into(),
                source: e,
            })?;
            let stage = Staging::new(out);
            stage.write("bench.csv", String::from_utf8(csv).expect("ascii csv"))?;
            stage.commit()
        }
        Command::Grid { inputs } => {
            let mut exp = experiment(config(cli)?, inputs)?;
            let report = cmd_grid(&mut exp)?;
            write_report(out, &report)
        }
        Command::Validate { inputs } => {
            let mut exp = experiment(config(cli)?, inputs)?;
            let report = cmd_validate(&mut exp)?;
            if let (Some(r2), Some(bytes)) = (report.r2_recall, report.r2_bytes) {
                log::info!("r2 proxy vs empirical recall {r2:.4}; modeled vs measured bytes {bytes:.6}");
            }
            write_report(out, &report)
        }
    }
}

fn write_report(out: &Path, report: &anntune::experiment::Report) -> Result<(), Error> {
    let stage = Staging::new(out);
    for (name, body) in report.files()? {
        stage.write(name, body)?;
    }
    stage.commit()
}

#[derive(Serialize)]
struct TuneOutput<'a> {
    t_min: usize,
    results: &'a [TuneResult],
}

type Tuned = (Vec<TuneResult>, Option<Vec<FrontierRow>>);

fn tune(lm: &LossMatrix, t_min: usize, budgets: &[f64], recalls: &[f64], frontier: bool) -> Result<Tuned, Error> {
    let tables = LagrangianTables::from_loss_matrix(lm, t_min)?;
    let mut results = Vec::new();
    for &b in budgets {
        results.push(tables.tune_for_cost(b)?);
    }
    for &r in recalls {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::InvalidArgument(format!("recall target {r} outside (0, 1]")));
        }
        results.push(tables.tune_for_recall(-r.ln())?);
    }
    let rows = frontier.then(|| {
        tables
            .pareto_frontier()
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| FrontierRow::from_result(i, e))
            .collect()
    });
    Ok((results, rows))
}

fn parse_tuning(s: &str) -> Result<Tuning, Error> {
    let depths = s
        .trim_matches(|c| c == '(' || c == ')')
        .split([',', ';'])
        .map(|x| x.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidArgument(format!("bad tuning {s:?}: {e}")))?;
    Tuning::new(depths)
}

/// Reads tunings from `tune.json` (objects with a `t` array) or a CSV with `t_i` columns.
fn read_tunings(path: &Path) -> Result<Vec<Tuning>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let items = value
            .get("results")
            .and_then(|r| r.as_array())
            .or(value.as_array())
            .ok_or_else(|| bad("expected an array or an object with `results`".into()))?;
        return items
            .iter()
            .map(|item| {
                let t: Vec<usize> = serde_json::from_value(item.get("t").cloned().unwrap_or(item.clone()))?;
                Tuning::new(t)
            })
            .collect();
    }
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
    let cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("t_") && h[2..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(bad("no t_<i> columns".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            let t = cols
                .iter()
                .map(|&c| fields.get(c).and_then(|f| f.trim().parse::<usize>().ok()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad(format!("bad row {line:?}")))?;
            Tuning::new(t)
        })
        .collect()
}
