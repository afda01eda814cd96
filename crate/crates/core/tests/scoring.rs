mod common;

use common::*;
use conclad::scoring::{score_dfm, score_initial, score_iter, SubspaceBank, DEFAULT_EPS};
use conclad::{ClassId, ClassSubspace, EmbeddingSet};
use proptest::prelude::*;

fn fitted(rows: &[Vec<f64>], class: ClassId, retention: f64) -> ClassSubspace {
    let set = EmbeddingSet::from_rows(&to_f32_rows(rows)).unwrap();
    ClassSubspace::fit(class, &set, retention).unwrap()
}

/// A class whose samples sit around `offset` along a random direction.
fn class_rows(r: &mut impl rand::Rng, n: usize, d: usize, offset: f64) -> Vec<Vec<f64>> {
    let dir = random_unit(r, d);
    random_matrix(r, n, d, 0.7)
        .into_iter()
        .map(|row| row.iter().zip(&dir).map(|(x, u)| x + offset * u).collect())
        .collect()
}

fn random_bank(r: &mut impl rand::Rng, classes: &[ClassId], d: usize) -> SubspaceBank {
    classes
        .iter()
        .map(|&c| fitted(&class_rows(r, 15, d, 6.0), c, 0.9))
        .collect()
}

fn f64_rows(x: &EmbeddingSet) -> Vec<Vec<f64>> {
    (0..x.n()).map(|i| x.row_f64(i)).collect()
}

fn oracle_fre(s: &ClassSubspace, u: &[f64]) -> f64 {
    let comps: Vec<Vec<f64>> = (0..s.k()).map(|j| s.component(j).to_vec()).collect();
    fre_oracle(s.mean(), &comps, u)
}

#[test]
fn score_initial_matches_double_loop() {
    let mut r = rng(21);
    let d = 7;
    let bank = random_bank(&mut r, &[3, 5, 9], d);
    let x = EmbeddingSet::from_rows(&to_f32_rows(&random_matrix(&mut r, 25, d, 2.0))).unwrap();
    let got = score_initial(&bank, &x).unwrap();
    assert_eq!(got.iteration, 0);
    assert_eq!(got.sample_ids, x.ids());
    for (v, u) in got.values.iter().zip(f64_rows(&x)) {
        let want = bank.iter().map(|s| oracle_fre(s, &u)).fold(f64::INFINITY, f64::min);
        assert!((v - want).abs() < 1e-9);
    }
}

#[test]
fn score_iter_matches_per_sample_oracle() {
    let mut r = rng(22);
    let d = 6;
    let old = random_bank(&mut r, &[0, 1], d);
    let novel = random_bank(&mut r, &[10, 11], d);
    let x = EmbeddingSet::from_rows(&to_f32_rows(&random_matrix(&mut r, 30, d, 2.0))).unwrap();
    let assign: Vec<ClassId> = (0..x.n()).map(|i| if i % 3 == 0 { 10 } else { 11 }).collect();
    let got = score_iter(&old, &novel, &assign, &x, DEFAULT_EPS, 2).unwrap();
    assert_eq!(got.iteration, 2);
    for ((v, u), m) in got.values.iter().zip(f64_rows(&x)).zip(&assign) {
        let num = old.iter().map(|s| oracle_fre(s, &u)).fold(f64::INFINITY, f64::min);
        let want = num / (oracle_fre(novel.get(*m).unwrap(), &u) + DEFAULT_EPS);
        assert!((v - want).abs() <= 1e-9 * want.abs().max(1.0));
    }
}

#[test]
fn score_iter_examples() {
    // old mean at (1,0), novel mean at (-1,0); origin is equidistant.
    let old: SubspaceBank = [ClassSubspace::from_parts(0, vec![1.0, 0.0], vec![]).unwrap()]
        .into_iter()
        .collect();
    let novel: SubspaceBank = [ClassSubspace::from_parts(7, vec![-1.0, 0.0], vec![]).unwrap()]
        .into_iter()
        .collect();
    let x = EmbeddingSet::from_rows(&[[0.0f32, 0.0]]).unwrap();
    let v = score_iter(&old, &novel, &[7], &x, 1e-12, 1).unwrap().values[0];
    assert!((v - 1.0).abs() < 1e-9);

    // inside the novel subspace, FRE 4 from the old one
    let novel: SubspaceBank = [ClassSubspace::from_parts(7, vec![5.0, 0.0], vec![]).unwrap()]
        .into_iter()
        .collect();
    let x = EmbeddingSet::from_rows(&[[5.0f32, 0.0]]).unwrap();
    let v = score_iter(&old, &novel, &[7], &x, 1e-12, 1).unwrap().values[0];
    assert!(v.is_finite());
    assert!((v - 4.0e12).abs() < 1.0);

    assert!(score_iter(&old, &novel, &[8], &x, 1e-12, 1).is_err());
    assert!(score_iter(&SubspaceBank::new(), &novel, &[7], &x, 1e-12, 1).is_err());
}

#[test]
fn score_dfm_matches_min_loop() {
    let mut r = rng(23);
    let d = 5;
    let tasks: Vec<ClassSubspace> = (0..3).map(|t| fitted(&class_rows(&mut r, 20, d, 5.0), t, 0.9)).collect();
    let x = EmbeddingSet::from_rows(&to_f32_rows(&random_matrix(&mut r, 20, d, 3.0))).unwrap();
    let got = score_dfm(&tasks, &x).unwrap();
    for (v, u) in got.values.iter().zip(f64_rows(&x)) {
        let want = tasks.iter().map(|s| oracle_fre(s, &u)).fold(f64::INFINITY, f64::min);
        assert!((v - want).abs() < 1e-9);
    }
    let one = score_dfm(&tasks[..1], &x).unwrap();
    assert_eq!(one.values, tasks[0].fre_batch(&x).unwrap());

    let at_mean: Vec<f32> = tasks[1].mean().iter().map(|&m| m as f32).collect();
    let at = EmbeddingSet::from_rows(&[at_mean]).unwrap();
    assert!(score_dfm(&tasks, &at).unwrap().values[0] < 1e-5);
    assert!(score_dfm(&[], &x).is_err());
}

#[test]
fn ratio_score_separates_constructed_samples() {
    // old class spans e1 at the origin, novel class spans e2 offset along e3.
    let d = 4;
    let old: SubspaceBank = [ClassSubspace::from_parts(0, vec![0.0; d], vec![1.0, 0.0, 0.0, 0.0]).unwrap()]
        .into_iter()
        .collect();
    let novel: SubspaceBank =
        [ClassSubspace::from_parts(5, vec![0.0, 0.0, 20.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]).unwrap()]
            .into_iter()
            .collect();
    let in_novel = [[0.0f32, 3.0, 20.0, 0.0], [0.0, -2.0, 20.0, 0.0]];
    let in_old = [[4.0f32, 0.0, 0.0, 0.0], [-7.0, 0.0, 0.0, 0.0]];
    let x = EmbeddingSet::from_rows(&[in_novel[0], in_novel[1], in_old[0], in_old[1]]).unwrap();
    let s = score_iter(&old, &novel, &[5; 4], &x, DEFAULT_EPS, 1).unwrap().values;
    assert!(s[0].min(s[1]) > s[2].max(s[3]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn initial_ranking_invariant_to_scale(seed in any::<u64>(), c in prop::sample::select(vec![0.25f32, 0.5, 2.0, 4.0])) {
        // Powers of two scale f32 data exactly.
        let mut r = rng(seed);
        let d = 5;
        let a: Vec<Vec<f64>> = class_rows(&mut r, 15, d, 4.0);
        let b: Vec<Vec<f64>> = class_rows(&mut r, 15, d, 4.0);
        let x = EmbeddingSet::from_rows(&to_f32_rows(&random_matrix(&mut r, 12, d, 3.0))).unwrap();
        let bank: SubspaceBank = [fitted(&a, 0, 0.9), fitted(&b, 1, 0.9)].into_iter().collect();
        let scale = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|v| (*v as f32 * c) as f64).collect()).collect()
        };
        let bank_c: SubspaceBank = [fitted(&scale(&a), 0, 0.9), fitted(&scale(&b), 1, 0.9)].into_iter().collect();
        let s = score_initial(&bank, &x).unwrap().values;
        let sc = score_initial(&bank_c, &x.scaled(c)).unwrap().values;
        for (u, v) in s.iter().zip(&sc) {
            prop_assert!((u * c as f64 - v).abs() <= 1e-6 * (1.0 + v.abs()));
        }
        let mut o1: Vec<usize> = (0..s.len()).collect();
        let mut o2 = o1.clone();
        o1.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
        o2.sort_by(|&i, &j| sc[i].total_cmp(&sc[j]));
        // near-ties may swap after rounding; compare only well-separated neighbours
        for w in o1.windows(2) {
            if s[w[1]] - s[w[0]] > 1e-6 * s[w[1]].abs().max(1.0) {
                let p0 = o2.iter().position(|&i| i == w[0]).unwrap();
                let p1 = o2.iter().position(|&i| i == w[1]).unwrap();
                prop_assert!(p0 < p1);
            }
        }
    }

    #[test]
    fn ratio_score_scale_invariant(seed in any::<u64>(), c in prop::sample::select(vec![0.5f32, 2.0, 8.0])) {
        let mut r = rng(seed);
        let d = 6;
        let o = class_rows(&mut r, 20, d, 5.0);
        let n = class_rows(&mut r, 20, d, 5.0);
        let x = EmbeddingSet::from_rows(&to_f32_rows(&random_matrix(&mut r, 10, d, 3.0))).unwrap();
        let scale = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|v| (*v as f32 * c) as f64).collect()).collect()
        };
        let old: SubspaceBank = [fitted(&o, 0, 0.8)].into_iter().collect();
        let nov: SubspaceBank = [fitted(&n, 1, 0.8)].into_iter().collect();
        let old_c: SubspaceBank = [fitted(&scale(&o), 0, 0.8)].into_iter().collect();
        let nov_c: SubspaceBank = [fitted(&scale(&n), 1, 0.8)].into_iter().collect();
        let s = score_iter(&old, &nov, &[1; 10], &x, DEFAULT_EPS, 1).unwrap().values;
        let sc = score_iter(&old_c, &nov_c, &[1; 10], &x.scaled(c), DEFAULT_EPS, 1).unwrap().values;
        for (u, v) in s.iter().zip(&sc) {
            prop_assert!((u - v).abs() <= 1e-6 * u.abs());
        }
    }

    #[test]
    fn initial_score_nonnegative_and_min(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bank = random_bank(&mut r, &[0, 1, 2], 4);
        let x = EmbeddingSet::from_rows(&to_f32_rows(&random_matrix(&mut r, 8, 4, 5.0))).unwrap();
        let s = score_initial(&bank, &x).unwrap();
        for (i, v) in s.values.iter().enumerate() {
            prop_assert!(*v >= 0.0 && v.is_finite());
            for sub in bank.iter() {
                prop_assert!(*v <= sub.fre_f32(x.row(i)).unwrap());
            }
        }
    }
}
