use std::collections::BTreeSet;

use musanet::data::{
    batch_and_pad, build_examples, generate_synthetic, load_dataset, save_dataset, split_dataset, temporal_positions,
    CategoryMap, GeneratorConfig, LoadOptions, Task, Visit, PAPER_SPLIT,
};
use proptest::prelude::*;

fn small_config() -> GeneratorConfig {
    GeneratorConfig {
        num_patients: 400,
        ..Default::default()
    }
}

#[test]
fn default_cohort_matches_configured_means() {
    let config = GeneratorConfig::default();
    let cohort = generate_synthetic(&config, 1).unwrap();
    let ds = &cohort.dataset;
    assert_eq!(ds.len(), 7499);

    let visits: Vec<&Visit> = ds.journeys.iter().flat_map(|j| j.visits()).collect();
    let mean_visits = visits.len() as f64 / ds.len() as f64;
    assert!((2.4..=2.9).contains(&mean_visits), "mean visits {mean_visits}");
    assert!((mean_visits / config.mean_visits - 1.0).abs() < 0.1);

    let count = |prefix: char| {
        visits
            .iter()
            .flat_map(|v| v.codes())
            .filter(|&&c| ds.vocab.code(c).unwrap().starts_with(prefix))
            .count() as f64
            / visits.len() as f64
    };
    let (dx, px) = (count('D'), count('P'));
    assert!((dx / config.mean_diagnoses - 1.0).abs() < 0.1, "diagnoses per visit {dx}");
    assert!((px / config.mean_procedures - 1.0).abs() < 0.1, "procedures per visit {px}");

    let positives = ds.journeys.iter().filter(|j| j.readmission == Some(true)).count() as f64;
    let rate = positives / ds.len() as f64;
    assert!((0.05..0.5).contains(&rate), "readmission rate {rate}");
    assert_eq!(cohort.categories.num_categories(), config.num_categories());
}

#[test]
fn generate_save_load_round_trip() {
    let cohort = generate_synthetic(&small_config(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    save_dataset(&cohort.dataset, &path).unwrap();
    let loaded = load_dataset(&path, LoadOptions { min_count: 1 }).unwrap();
    assert_eq!(loaded, cohort.dataset);

    let cats = dir.path().join("categories.tsv");
    cohort.categories.save(&cats, &loaded.vocab).unwrap();
    assert_eq!(CategoryMap::load(&cats, &loaded.vocab).unwrap(), cohort.categories);
}

#[test]
fn generated_files_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = |name: &str| {
        let path = dir.path().join(name);
        save_dataset(&generate_synthetic(&small_config(), 9).unwrap().dataset, &path).unwrap();
        std::fs::read(path).unwrap()
    };
    assert_eq!(bytes("a.jsonl"), bytes("b.jsonl"));
}

#[test]
fn min_count_filter_is_a_fixed_point() {
    let cohort = generate_synthetic(&small_config(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    save_dataset(&cohort.dataset, &path).unwrap();
    let filtered = load_dataset(&path, LoadOptions::default()).unwrap();
    assert!(filtered.vocab.len() < cohort.dataset.vocab.len());
    let mut counts = vec![0usize; filtered.vocab.table_size()];
    for v in filtered.journeys.iter().flat_map(|j| j.visits()) {
        assert!(!v.codes().is_empty());
        for &c in v.codes() {
            counts[c as usize] += 1;
        }
    }
    assert!(counts[1..].iter().all(|&n| n >= 5));
    assert!(filtered.journeys.iter().all(|j| j.visits().len() >= 2));
}

#[test]
fn split_is_a_partition_by_patient() {
    let ds = generate_synthetic(&small_config(), 5).unwrap().dataset;
    let (train, valid, test) = split_dataset(&ds, PAPER_SPLIT, 11).unwrap();
    assert_eq!((train.len(), valid.len(), test.len()), (320, 40, 40));
    let ids = |d: &musanet::data::Dataset| d.journeys.iter().map(|j| j.patient_id.clone()).collect::<BTreeSet<_>>();
    let (a, b, c) = (ids(&train), ids(&valid), ids(&test));
    assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    let union: BTreeSet<_> = a.union(&b).chain(c.iter()).cloned().collect();
    assert_eq!(union, ids(&ds));
    let again = split_dataset(&ds, PAPER_SPLIT, 11).unwrap();
    assert_eq!(again.1, valid);
}

#[test]
fn diagnosis_targets_come_from_final_visit() {
    let cohort = generate_synthetic(&small_config(), 6).unwrap();
    let examples = build_examples(&cohort.dataset, Task::Diagnosis, Some(&cohort.categories)).unwrap();
    for (ex, j) in examples.iter().zip(&cohort.dataset.journeys) {
        assert_eq!(ex.visits.len(), j.visits().len() - 1);
        let last = j.visits().last().unwrap();
        let expected: BTreeSet<usize> = last.codes().iter().map(|&c| cohort.categories.category(c).unwrap()).collect();
        assert_eq!(ex.label, musanet::data::Label::Diagnosis(expected.into_iter().collect()));
    }
}

#[test]
fn batches_satisfy_mask_invariants() {
    let cohort = generate_synthetic(&small_config(), 7).unwrap();
    let examples = build_examples(&cohort.dataset, Task::Readmission, None).unwrap();
    let batch = batch_and_pad(&examples, 4, 8).unwrap();
    for (k, &m) in batch.code_mask.iter().enumerate() {
        if m {
            assert!(batch.code_indices[k] > 0);
            assert!(batch.visit_mask[k / batch.max_codes]);
        } else {
            assert_eq!(batch.code_indices[k], 0);
        }
    }
    for b in 0..batch.size {
        let row = &batch.visit_mask[b * 4..(b + 1) * 4];
        let n = batch.visit_count(b);
        assert!(row[..n].iter().all(|&m| m) && row[n..].iter().all(|&m| !m));
        assert_eq!(n, examples[b].visits.len().min(4));
    }
    assert!(batch.truncated_visits > 0 && batch.truncated_codes > 0);
}

proptest! {
    #[test]
    fn positions_ignore_a_global_shift(
        gaps in prop::collection::vec(0i64..400, 1..12),
        start in 0i64..1000,
        shift in 0i64..5000,
    ) {
        let days: Vec<i64> = gaps.iter().scan(start, |d, g| { *d += g; Some(*d) }).collect();
        let visits = |offset: i64| -> Vec<Visit> {
            days.iter().map(|d| Visit::new(vec![1], d + offset, None).unwrap()).collect()
        };
        let p = temporal_positions(&visits(0));
        prop_assert_eq!(p[0], 0);
        prop_assert_eq!(&p, &temporal_positions(&visits(shift)));
    }

    #[test]
    fn split_sizes_track_ratios(n in 1usize..200, seed in 0u64..1000) {
        let config = GeneratorConfig { num_patients: n, ..Default::default() };
        let ds = generate_synthetic(&config, seed).unwrap().dataset;
        let (a, b, c) = split_dataset(&ds, PAPER_SPLIT, seed).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), n);
        for (part, r) in [(a.len(), 0.8), (b.len(), 0.1), (c.len(), 0.1)] {
            prop_assert!((part as f64 - n as f64 * r).abs() <= 1.0);
        }
    }
}
