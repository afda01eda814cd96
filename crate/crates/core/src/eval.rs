//! AUROC, per-task evaluation records, and their CSV forms.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::detector::NoveltyScorer;
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::ClassId;

/// Probability that a random novel sample outranks a random old one, ties
/// counted one half. Computed from midranks.
pub fn auroc(scores: &[f64], is_novel: &[bool]) -> Result<f64> {
    if scores.len() != is_novel.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: is_novel.len(),
        });
    }
    let n_pos = is_novel.iter().filter(|&&y| y).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum keeps midranks integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share midrank (i + j + 2) / 2
        let mid2 = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| is_novel[k]).count() as u128;
        rank_sum2 += mid2 * pos_in_group;
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    // U = R - p(p+1)/2, doubled
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

/// Area under the empirical ROC curve by trapezoidal integration.
pub fn auroc_trapezoid(scores: &[f64], is_novel: &[bool]) -> Result<f64> {
    if scores.len() != is_novel.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: is_novel.len(),
        });
    }
    let n_pos = is_novel.iter().filter(|&&y| y).count() as f64;
    let n_neg = scores.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if is_novel[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let (tpr, fpr) = (tp / n_pos, fp / n_neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub task: usize,
    pub auroc: f64,
    pub n_old: usize,
    pub n_new: usize,
    pub queries: usize,
    pub discovered: Vec<ClassId>,
    pub mode: String,
}

/// Task-level facts copied into the record.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMeta {
    pub task: usize,
    pub queries: usize,
    pub discovered: Vec<ClassId>,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    Scored {
        record: EvaluationRecord,
        /// Per-sample scores on the eval split, in split order.
        scores: Vec<f64>,
    },
    Skipped {
        task: usize,
        reason: String,
    },
}

/// Scores the labeled eval split; a sample is novel iff its label is in
/// `novel_classes`.
pub fn evaluate_task(
    scorer: &dyn NoveltyScorer,
    eval: &EmbeddingSet,
    novel_classes: &BTreeSet<ClassId>,
    meta: TaskMeta,
) -> Result<Evaluation> {
    let labels = eval
        .labels()
        .ok_or_else(|| Error::InvalidConfig("evaluation split must be labeled".into()))?;
    let is_novel: Vec<bool> = labels.iter().map(|c| novel_classes.contains(c)).collect();
    let n_new = is_novel.iter().filter(|&&y| y).count();
    let n_old = is_novel.len() - n_new;
    if n_new == 0 {
        return Ok(Evaluation::Skipped {
            task: meta.task,
            reason: "no novel samples in evaluation split".into(),
        });
    }
    if n_old == 0 {
        return Ok(Evaluation::Skipped {
            task: meta.task,
            reason: "no old samples in evaluation split".into(),
        });
    }
    let scores = scorer.score_test(eval)?.values;
    let auroc = auroc(&scores, &is_novel)?;
    Ok(Evaluation::Scored {
        record: EvaluationRecord {
            task: meta.task,
            auroc,
            n_old,
            n_new,
            queries: meta.queries,
            discovered: meta.discovered,
            mode: meta.mode,
        },
        scores,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mean_auroc: f64,
    pub per_task: Vec<(usize, f64)>,
    pub total_queries: usize,
}

pub fn aggregate(records: &[EvaluationRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no evaluation records"));
    }
    let mean_auroc = records.iter().map(|r| r.auroc).sum::<f64>() / records.len() as f64;
    Ok(Summary {
        mean_auroc,
        per_task: records.iter().map(|r| (r.task, r.auroc)).collect(),
        total_queries: records.iter().map(|r| r.queries).sum(),
    })
}

pub const RECORD_HEADER: [&str; 7] = ["task", "auroc", "n_old", "n_new", "queries", "discovered", "mode"];

fn join_ids(ids: &[ClassId]) -> String {
    ids.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

fn parse_ids(s: &str) -> Result<Vec<ClassId>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad class id {t:?} in discovered column")))
        })
        .collect()
}

pub fn write_records_csv<W: Write>(w: W, records: &[EvaluationRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_HEADER)?;
    for r in records {
        out.write_record([
            r.task.to_string(),
            r.auroc.to_string(),
            r.n_old.to_string(),
            r.n_new.to_string(),
            r.queries.to_string(),
            join_ids(&r.discovered),
            r.mode.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<EvaluationRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(Error::InvalidConfig(format!("unexpected results header {header:?}")));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::InvalidConfig(format!("bad count {s:?}")))
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        out.push(EvaluationRecord {
            task: num(&row[0])?,
            auroc: row[1]
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad auroc {:?}", &row[1])))?,
            n_old: num(&row[2])?,
            n_new: num(&row[3])?,
            queries: num(&row[4])?,
            discovered: parse_ids(&row[5])?,
            mode: row[6].to_string(),
        });
    }
    Ok(out)
}

/// One scored evaluation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub task: usize,
    pub mode: String,
    pub sample_id: u64,
    pub score: f64,
    pub is_novel: u8,
}

pub fn write_scores_csv<W: Write>(w: W, rows: &[ScoreRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record(["task", "mode", "sample_id", "score", "is_novel"])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(r: R) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Per-(mode, task) AUROC recomputed from a score dump, ordered by mode then
/// task.
pub fn recompute_from_scores(rows: &[ScoreRow]) -> Result<Vec<(String, usize, f64)>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("score dump has no rows"));
    }
    let mut groups: BTreeMap<(String, usize), (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry((r.mode.clone(), r.task)).or_default();
        g.0.push(r.score);
        g.1.push(r.is_novel != 0);
    }
    groups
        .into_iter()
        .map(|((mode, task), (s, y))| Ok((mode, task, auroc(&s, &y)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[1.0; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClassInput)));
        // one tie across classes: 3 wins + 1 half out of 4
        assert_eq!(auroc(&[0.1, 0.5, 0.5, 0.9], &[false, false, true, true]).unwrap(), 0.875);
    }

    #[test]
    fn trapezoid_handles_ties_like_midranks() {
        let s = [0.1, 0.5, 0.5, 0.9, 0.3];
        let y = [false, false, true, true, true];
        assert!((auroc(&s, &y).unwrap() - auroc_trapezoid(&s, &y).unwrap()).abs() < 1e-12);
    }

    fn rec(task: usize, auroc: f64) -> EvaluationRecord {
        EvaluationRecord {
            task,
            auroc,
            n_old: 4,
            n_new: 2,
            queries: 3,
            discovered: vec![4, 5],
            mode: "default".into(),
        }
    }

    #[test]
    fn aggregate_means() {
        assert!(matches!(aggregate(&[]), Err(Error::EmptyInput(_))));
        assert_eq!(aggregate(&[rec(1, 0.7)]).unwrap().mean_auroc, 0.7);
        let s = aggregate(&[rec(1, 0.8), rec(2, 1.0)]).unwrap();
        assert!((s.mean_auroc - 0.9).abs() < 1e-15);
        assert_eq!(s.total_queries, 6);
    }

    #[test]
    fn records_round_trip() {
        let recs = vec![rec(1, 0.8125), EvaluationRecord { discovered: vec![], ..rec(2, 1.0) }];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("task,auroc,n_old,n_new,queries,discovered,mode\n"));
        assert!(text.contains("4;5"));
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn recompute_groups_by_mode_and_task() {
        let mk = |task, mode: &str, id, score, y| ScoreRow {
            task,
            mode: mode.into(),
            sample_id: id,
            score,
            is_novel: y,
        };
        let rows = vec![
            mk(1, "a", 0, 0.1, 0),
            mk(1, "a", 1, 0.9, 1),
            mk(1, "b", 0, 0.9, 0),
            mk(1, "b", 1, 0.1, 1),
        ];
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &rows).unwrap();
        let back = read_scores_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        assert_eq!(
            recompute_from_scores(&back).unwrap(),
            vec![("a".into(), 1, 1.0), ("b".into(), 1, 0.0)]
        );
    }
}
