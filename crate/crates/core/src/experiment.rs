//! End-to-end runs: build a stream, run every task, evaluate, and write CSVs.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::info;

use crate::config::ExperimentConfig;
use crate::detector::{budget_for_fraction, DetectorState, DfmDetector, Method, NoveltyScorer};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, auroc, evaluate_task, write_records_csv, write_scores_csv, Evaluation,
    EvaluationRecord, ScoreRow, Summary, TaskMeta,
};
use crate::io::{read_dataset, write_atomic};
use crate::scoring::ScoreVector;
use crate::seeds;
use crate::stream::{build_stream, Task, TaskStream};
use crate::synth::synth_dataset;
use crate::ClassId;

/// Per-task facts beyond the evaluation record.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLog {
    pub task: usize,
    pub pool_size: usize,
    pub budget: usize,
    pub queries: usize,
    pub discovered: Vec<ClassId>,
    pub predicted_novel: usize,
    pub threshold: f64,
    /// AUROC of the detector's final pool scores against the hidden labels.
    pub pool_auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub method: Method,
    pub records: Vec<EvaluationRecord>,
    pub skipped: Vec<(usize, String)>,
    pub scores: Vec<ScoreRow>,
    pub logs: Vec<TaskLog>,
}

impl RunOutput {
    pub fn summary(&self) -> Result<Summary> {
        aggregate(&self.records)
    }

    pub fn mean_auroc(&self) -> Result<f64> {
        Ok(self.summary()?.mean_auroc)
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<EmbeddingSet> {
    match (&cfg.data.embeddings, &cfg.data.labels) {
        (Some(e), Some(l)) => read_dataset(e, l),
        _ => {
            let mut synth = cfg.data.synth.clone().unwrap_or_default();
            synth.seed = seeds::derive(cfg.seed, seeds::SYNTH);
            synth_dataset(&synth)
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_on_dataset(&load_dataset(cfg)?, cfg)
}

pub fn stream_for(dataset: &EmbeddingSet, cfg: &ExperimentConfig) -> Result<TaskStream> {
    let mut stream_cfg = cfg.stream.clone();
    stream_cfg.seed = seeds::derive(cfg.seed, seeds::STREAM);
    build_stream(dataset, &stream_cfg)
}

pub fn run_on_dataset(dataset: &EmbeddingSet, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let stream = stream_for(dataset, cfg)?;
    run_on_stream(&stream, cfg)
}

fn pool_auroc(task: &Task, scores: &ScoreVector) -> Option<f64> {
    let labels = task.pool.labels()?;
    let y: Vec<bool> = labels.iter().map(|c| task.novel_classes.contains(c)).collect();
    auroc(&scores.values, &y).ok()
}

pub fn run_on_stream(stream: &TaskStream, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let dcfg = cfg.detector_config();
    dcfg.validate()?;
    let method = dcfg.mode;
    let pretrain_seed = seeds::derive(cfg.seed, seeds::PRETRAIN);
    let mut out = RunOutput {
        method,
        records: Vec::new(),
        skipped: Vec::new(),
        scores: Vec::new(),
        logs: Vec::new(),
    };

    enum Runner {
        Conclad(DetectorState, crate::detector::Mode),
        Dfm(DfmDetector),
    }
    let mut runner = match method {
        Method::Conclad(mode) => {
            Runner::Conclad(DetectorState::pretrain(&stream.pretrain, dcfg.clone(), pretrain_seed)?, mode)
        }
        Method::Dfm => Runner::Dfm(DfmDetector::pretrain(&stream.pretrain, dcfg.clone(), pretrain_seed)?),
    };

    for task in &stream.tasks {
        let pool = task.pool.without_labels();
        let task_seed = seeds::task(cfg.seed, task.index);
        let budget = budget_for_fraction(dcfg.budget_fraction, pool.n());
        let (scorer, log): (Box<dyn NoveltyScorer>, TaskLog) = match &mut runner {
            Runner::Conclad(state, mode) => {
                let r = state.run_task(&pool, stream.oracle(), budget, *mode, task_seed)?;
                let log = TaskLog {
                    task: task.index,
                    pool_size: pool.n(),
                    budget,
                    queries: r.queries_spent,
                    discovered: r.discovered.clone(),
                    predicted_novel: r.predicted_novel_ids.len(),
                    threshold: r.threshold,
                    pool_auroc: pool_auroc(task, &r.final_scores),
                };
                (Box::new(r.outcome), log)
            }
            Runner::Dfm(det) => {
                let r = det.run_task(&pool, task_seed)?;
                let log = TaskLog {
                    task: task.index,
                    pool_size: pool.n(),
                    budget: 0,
                    queries: 0,
                    discovered: Vec::new(),
                    predicted_novel: r.predicted_novel_ids.len(),
                    threshold: r.threshold,
                    pool_auroc: pool_auroc(task, &r.scores),
                };
                (Box::new(r.outcome), log)
            }
        };
        info!(
            "event=task_done task={} method={} budget={} queries={} discovered={:?} predicted={}",
            task.index, method, log.budget, log.queries, log.discovered, log.predicted_novel
        );
        let meta = TaskMeta {
            task: task.index,
            queries: log.queries,
            discovered: log.discovered.clone(),
            mode: method.to_string(),
        };
        match evaluate_task(scorer.as_ref(), &task.eval, &task.novel_classes, meta)? {
            Evaluation::Scored { record, scores } => {
                let labels = task.eval.labels().unwrap_or(&[]);
                for ((&id, &score), c) in task.eval.ids().iter().zip(&scores).zip(labels) {
                    out.scores.push(ScoreRow {
                        task: task.index,
                        mode: method.to_string(),
                        sample_id: id,
                        score,
                        is_novel: u8::from(task.novel_classes.contains(c)),
                    });
                }
                out.records.push(record);
            }
            Evaluation::Skipped { task, reason } => out.skipped.push((task, reason)),
        }
        out.logs.push(log);
    }
    Ok(out)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn summary_bytes(rows: &[(String, String, &RunOutput)], with_axis: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["mode", "tasks", "mean_auroc", "total_queries"];
    if with_axis {
        header.splice(0..0, ["axis", "value"]);
    }
    w.write_record(&header)?;
    for (axis, value, run) in rows {
        let s = run.summary().ok();
        let mut rec = vec![
            run.method.to_string(),
            run.records.len().to_string(),
            s.as_ref().map(|s| s.mean_auroc.to_string()).unwrap_or_default(),
            s.as_ref().map(|s| s.total_queries.to_string()).unwrap_or_default(),
        ];
        if with_axis {
            rec.splice(0..0, [axis.clone(), value.clone()]);
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn tasks_bytes(logs: &[TaskLog]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "task",
        "pool_size",
        "budget",
        "queries",
        "discovered",
        "predicted_novel",
        "threshold",
        "pool_auroc",
    ])?;
    for l in logs {
        w.write_record([
            l.task.to_string(),
            l.pool_size.to_string(),
            l.budget.to_string(),
            l.queries.to_string(),
            l.discovered.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
            l.predicted_novel.to_string(),
            l.threshold.to_string(),
            l.pool_auroc.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `results.csv`, `scores.csv`, `tasks.csv` and `summary.csv` into
/// `dir`, each atomically.
pub fn write_run_outputs(dir: &Path, run: &RunOutput) -> Result<()> {
    write_atomic(
        &dir.join("results.csv"),
        &csv_bytes(|b| write_records_csv(b, &run.records))?,
    )?;
    write_atomic(
        &dir.join("scores.csv"),
        &csv_bytes(|b| write_scores_csv(b, &run.scores))?,
    )?;
    write_atomic(&dir.join("tasks.csv"), &tasks_bytes(&run.logs)?)?;
    let row = [(String::new(), String::new(), run)];
    write_atomic(&dir.join("summary.csv"), &summary_bytes(&row, false)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Budget,
    Increment,
    Mode,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "budget" => Ok(SweepAxis::Budget),
            "increment" => Ok(SweepAxis::Increment),
            "mode" => Ok(SweepAxis::Mode),
            _ => Err(Error::InvalidConfig(format!(
                "unknown sweep axis {s:?}; expected budget, increment or mode"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Budget => "budget",
            SweepAxis::Increment => "increment",
            SweepAxis::Mode => "mode",
        })
    }
}

/// `base` with one sweep value applied.
pub fn apply_sweep_value(base: &ExperimentConfig, axis: SweepAxis, value: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let bad = || Error::InvalidConfig(format!("bad {axis} value {value:?}"));
    match axis {
        SweepAxis::Budget => cfg.detector.budget_fraction = value.parse().map_err(|_| bad())?,
        SweepAxis::Increment => {
            cfg.stream.increment = value.parse().map_err(|_| bad())?;
        }
        SweepAxis::Mode => cfg.detector.mode = value.parse()?,
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug)]
pub struct SweepRun {
    pub value: String,
    pub result: Result<RunOutput>,
}

/// One run per value on the same dataset and seed. Runs execute on scoped
/// threads; a failing run is reported in its slot without stopping the rest.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepRun>> {
    let dataset = load_dataset(base)?;
    let runs = std::thread::scope(|s| {
        let handles: Vec<_> = values
            .iter()
            .map(|v| {
                let dataset = &dataset;
                s.spawn(move || apply_sweep_value(base, axis, v).and_then(|c| run_on_dataset(dataset, &c)))
            })
            .collect();
        handles
            .into_iter()
            .zip(values)
            .map(|(h, v)| SweepRun {
                value: v.clone(),
                result: h
                    .join()
                    .unwrap_or_else(|_| Err(Error::InvalidConfig(format!("run for {v:?} panicked")))),
            })
            .collect()
    });
    Ok(runs)
}

/// Writes `sweep.csv` (every record, prefixed by axis and value),
/// `sweep_summary.csv`, `sweep_errors.csv`, and each successful run's own
/// outputs under `<axis>_<value>/`.
pub fn write_sweep_outputs(dir: &Path, axis: SweepAxis, runs: &[SweepRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["axis", "value", "task", "auroc", "n_old", "n_new", "queries", "discovered", "mode"])?;
    let mut ok = Vec::new();
    let mut errors = csv::Writer::from_writer(Vec::new());
    errors.write_record(["axis", "value", "error"])?;
    for run in runs {
        match &run.result {
            Ok(out) => {
                for r in &out.records {
                    w.write_record([
                        axis.to_string(),
                        run.value.clone(),
                        r.task.to_string(),
                        r.auroc.to_string(),
                        r.n_old.to_string(),
                        r.n_new.to_string(),
                        r.queries.to_string(),
                        r.discovered.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
                        r.mode.clone(),
                    ])?;
                }
                write_run_outputs(&dir.join(format!("{axis}_{}", run.value)), out)?;
                ok.push((axis.to_string(), run.value.clone(), out));
            }
            Err(e) => errors.write_record([axis.to_string(), run.value.clone(), e.to_string()])?,
        }
    }
    let sweep = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&dir.join("sweep.csv"), &sweep)?;
    write_atomic(&dir.join("sweep_summary.csv"), &summary_bytes(&ok, true)?)?;
    let errors = errors.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&dir.join("sweep_errors.csv"), &errors)
}

/// Classes introduced by a stream's tasks, in order.
pub fn novel_classes(stream: &TaskStream) -> Vec<BTreeSet<ClassId>> {
    stream.tasks.iter().map(|t| t.novel_classes.clone()).collect()
}
