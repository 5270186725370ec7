mod common;

use common::{brute_pr_auc, rng};
use musanet::train::metrics::{pr_auc, precision_at_k, random_precision_at_k, top_k};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn pr_auc_matches_brute_force_on_random_vectors() {
    let mut r = rng(31);
    for trial in 0..1000 {
        let n = r.random_range(1..60);
        // coarse scores on odd trials so ties are common
        let scores: Vec<f64> = (0..n)
            .map(|_| if trial % 2 == 1 { r.random_range(0..5) as f64 } else { r.random::<f64>() })
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.3)).collect();
        labels[r.random_range(0..n)] = true;
        let fast = pr_auc(&scores, &labels).unwrap();
        assert!((fast - brute_pr_auc(&scores, &labels)).abs() < 1e-12, "trial {trial}");
    }
}

#[test]
fn pr_auc_hand_cases() {
    assert_eq!(pr_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
    // ranks 2 and 3 hold the positives: (1/2 + 2/3) / 2
    let ap = pr_auc(&[0.9, 0.5, 0.4], &[false, true, true]).unwrap();
    assert!((ap - 7.0 / 12.0).abs() < 1e-15);
    assert!(pr_auc(&[0.5, 0.5], &[false, false]).is_err());
    assert!(pr_auc(&[f64::NAN], &[true]).is_err());
    assert!(pr_auc(&[0.5], &[true, false]).is_err());
}

#[test]
fn top_k_breaks_ties_by_class_index() {
    assert_eq!(top_k(&[0.1, 0.7, 0.7, 0.3, 0.7], 3), vec![1, 2, 4]);
    assert_eq!(top_k(&[1.0, 2.0], 5), vec![1, 0]);
}

#[test]
fn precision_at_k_hand_cases() {
    let scores = vec![vec![0.9, 0.1, 0.8, 0.2], vec![0.1, 0.2, 0.3, 0.4]];
    let labels = vec![vec![0, 1], vec![0]];
    // row 0: top-2 = {0, 2}, one hit of min(2, 2); row 1: top-2 = {3, 2}, zero hits
    assert!((precision_at_k(&scores, &labels, 2).unwrap() - 0.25).abs() < 1e-15);
    // a single-label row is judged against min(k, |y|) = 1
    assert_eq!(precision_at_k(&[vec![0.0, 1.0, 0.5]], &[vec![1]], 3).unwrap(), 1.0);
    assert!(precision_at_k(&scores, &labels, 0).is_err());
    assert!(precision_at_k(&scores, &[vec![0], vec![]], 1).is_err());
}

#[test]
fn random_baseline_matches_monte_carlo() {
    let mut r = rng(32);
    let classes = 40;
    let labels: Vec<Vec<usize>> = (0..100)
        .map(|_| {
            let mut all: Vec<usize> = (0..classes).collect();
            all.shuffle(&mut r);
            let mut y = all[..r.random_range(1..12)].to_vec();
            y.sort_unstable();
            y
        })
        .collect();
    for k in [1, 5, 20] {
        let expected = random_precision_at_k(&labels, classes, k).unwrap();
        let trials = 400;
        let mut total = 0.0;
        for _ in 0..trials {
            let scores: Vec<Vec<f64>> = (0..labels.len())
                .map(|_| (0..classes).map(|_| r.random::<f64>()).collect())
                .collect();
            total += precision_at_k(&scores, &labels, k).unwrap();
        }
        let simulated = total / trials as f64;
        assert!((simulated - expected).abs() < 0.01, "k={k}: {simulated} vs {expected}");
    }
}

proptest! {
    #[test]
    fn pr_auc_is_in_unit_interval(
        pairs in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 1..80)
    ) {
        let (scores, mut labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        labels[0] = true;
        let ap = pr_auc(&scores, &labels).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
    }

    #[test]
    fn pr_auc_ignores_monotone_rescaling(
        pairs in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 1..80)
    ) {
        let (scores, mut labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        labels[0] = true;
        let shifted: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
        prop_assert_eq!(pr_auc(&scores, &labels).unwrap(), pr_auc(&shifted, &labels).unwrap());
    }

    #[test]
    fn precision_at_k_is_a_fraction(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 1..10),
        k in 1usize..10,
    ) {
        let labels: Vec<Vec<usize>> = (0..rows.len()).map(|i| vec![i % 8, (i * 3 + 1) % 8]).collect();
        let p = precision_at_k(&rows, &labels, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }
}
