mod common;

use std::collections::BTreeSet;

use common::*;
use conclad::detector::NoveltyScorer;
use conclad::eval::{
    aggregate, auroc, auroc_trapezoid, evaluate_task, read_records_csv, read_scores_csv,
    recompute_from_scores, write_records_csv, write_scores_csv, Evaluation, EvaluationRecord,
    ScoreRow, TaskMeta,
};
use conclad::scoring::ScoreVector;
use conclad::{EmbeddingSet, Error};
use proptest::prelude::*;

/// Scores each row by its first coordinate.
struct FirstCoord;

impl NoveltyScorer for FirstCoord {
    fn score_test(&self, x: &EmbeddingSet) -> conclad::Result<ScoreVector> {
        Ok(ScoreVector {
            values: x.rows().map(|r| r[0] as f64).collect(),
            iteration: 0,
            sample_ids: x.ids().to_vec(),
        })
    }
}

fn record(task: usize, auroc: f64) -> EvaluationRecord {
    EvaluationRecord {
        task,
        auroc,
        n_old: 4,
        n_new: 2,
        queries: task,
        discovered: vec![task as i32, 7],
        mode: "default".into(),
    }
}

#[test]
fn six_sample_instance_matches_pair_count() {
    let s = [0.3, 0.9, 0.3, 0.1, 0.7, 0.3];
    let y = [true, false, false, true, true, false];
    assert_eq!(auroc(&s, &y).unwrap(), auroc_pairs(&s, &y));
    assert_eq!(auroc_pairs(&s, &y), 1.0 / 3.0);
}

#[test]
fn auroc_edge_cases() {
    assert_eq!(auroc(&[0.0, 1.0], &[false, true]).unwrap(), 1.0);
    assert_eq!(auroc(&[3.0; 5], &[true, false, true, false, false]).unwrap(), 0.5);
    assert!(matches!(auroc(&[1.0, 2.0], &[true, true]), Err(Error::SingleClassInput)));
    assert!(auroc(&[1.0], &[true, false]).is_err());
}

#[test]
fn evaluate_task_counts_and_skips() {
    let rows = [[0.1f32], [0.2], [0.9], [0.3], [0.8], [0.05]];
    let eval = EmbeddingSet::from_rows(&rows)
        .unwrap()
        .with_labels(vec![0, 0, 5, 1, 5, 1])
        .unwrap();
    let meta = |t| TaskMeta { task: t, queries: 3, discovered: vec![5], mode: "default".into() };
    match evaluate_task(&FirstCoord, &eval, &BTreeSet::from([5]), meta(1)).unwrap() {
        Evaluation::Scored { record, scores } => {
            assert_eq!((record.n_old, record.n_new), (4, 2));
            assert_eq!(record.auroc, 1.0);
            assert_eq!(scores.len(), 6);
        }
        other => panic!("unexpected {other:?}"),
    }
    match evaluate_task(&FirstCoord, &eval, &BTreeSet::from([9]), meta(2)).unwrap() {
        Evaluation::Skipped { task, reason } => {
            assert_eq!(task, 2);
            assert!(!reason.is_empty());
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn aggregate_examples() {
    let one = aggregate(&[record(1, 0.8)]).unwrap();
    assert_eq!(one.mean_auroc, 0.8);
    assert_eq!(one.per_task, vec![(1, 0.8)]);
    let two = aggregate(&[record(1, 0.8), record(2, 1.0)]).unwrap();
    assert!((two.mean_auroc - 0.9).abs() < 1e-15);
    assert_eq!(two.total_queries, 3);
    assert!(aggregate(&[]).is_err());
}

#[test]
fn exported_csv_recomputes_to_the_same_mean() {
    let records = vec![record(1, 0.75), record(2, 0.5), record(3, 0.9125)];
    let mut buf = Vec::new();
    write_records_csv(&mut buf, &records).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    // recompute as a spreadsheet would: split lines, average column two
    let col: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    assert_eq!(mean, aggregate(&records).unwrap().mean_auroc);
    assert_eq!(read_records_csv(&buf[..]).unwrap(), records);
    assert!(text.starts_with("task,auroc,n_old,n_new,queries,discovered,mode\n"));
}

#[test]
fn score_dump_round_trips_and_recomputes() {
    let mut rows = Vec::new();
    let mut r = rng(3);
    for task in 1..=2 {
        for id in 0..20u64 {
            let novel = id % 3 == 0;
            rows.push(ScoreRow {
                task,
                mode: "no_iters".into(),
                sample_id: id,
                score: gaussian(&mut r) + if novel { 1.0 } else { 0.0 },
                is_novel: novel as u8,
            });
        }
    }
    let mut buf = Vec::new();
    write_scores_csv(&mut buf, &rows).unwrap();
    let back = read_scores_csv(&buf[..]).unwrap();
    assert_eq!(back, rows);
    let recomputed = recompute_from_scores(&back).unwrap();
    assert_eq!(recomputed.len(), 2);
    for (mode, task, a) in recomputed {
        assert_eq!(mode, "no_iters");
        let (s, y): (Vec<f64>, Vec<bool>) = rows
            .iter()
            .filter(|r| r.task == task)
            .map(|r| (r.score, r.is_novel == 1))
            .unzip();
        assert_eq!(a, auroc_pairs(&s, &y));
    }
}

fn labeled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    // small integer grid to force ties
    prop::collection::vec((0i32..8, any::<bool>()), 2..50)
        .prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1))
        .prop_map(|v| v.into_iter().map(|(s, y)| (s as f64 * 0.5, y)).unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rank_auroc_equals_pair_oracle((s, y) in labeled_scores()) {
        let (twice, pairs) = auroc_pairs2(&s, &y);
        prop_assert_eq!(auroc(&s, &y).unwrap(), twice as f64 / (2 * pairs) as f64);
        prop_assert!((auroc_trapezoid(&s, &y).unwrap() - auroc_pairs(&s, &y)).abs() < 1e-12);
    }

    #[test]
    fn auroc_complement_for_distinct_scores(y in prop::collection::vec(any::<bool>(), 2..40), seed in any::<u64>()) {
        prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
        let mut r = rng(seed);
        let s: Vec<f64> = y.iter().map(|_| gaussian(&mut r)).collect();
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auroc(&s, &y).unwrap() + auroc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auroc_invariant_to_monotone_maps_and_order((s, y) in labeled_scores(), shift in -5.0f64..5.0, seed in any::<u64>()) {
        let base = auroc(&s, &y).unwrap();
        let mapped: Vec<f64> = s.iter().map(|v| (v + shift).exp() * 3.0 + v.powi(3)).collect();
        prop_assert_eq!(auroc(&mapped, &y).unwrap(), base);

        let mut order: Vec<usize> = (0..s.len()).collect();
        let mut r = rng(seed);
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut r);
        let ps: Vec<f64> = order.iter().map(|&i| s[i]).collect();
        let py: Vec<bool> = order.iter().map(|&i| y[i]).collect();
        prop_assert_eq!(auroc(&ps, &py).unwrap(), base);
        prop_assert!((0.0..=1.0).contains(&base));
    }
}
