//! Seeded synthetic cohorts with learnable labels.
//!
//! Codes belong to latent condition clusters. Each patient carries one to
//! `max_clusters_per_patient` clusters and every visit draws its codes from
//! them, plus an optional acute cluster that tends to persist across short
//! gaps. A code's category is a fixed slice of its cluster, so diagnosis
//! targets are predictable from earlier visits. Readmission is drawn from a
//! logistic model on the presence of the chronic cluster and the length of
//! the last gap.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use super::io::{from_records, JourneyRecord, VisitRecord};
use super::{CategoryMap, Dataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub num_patients: usize,
    pub mean_visits: f64,
    pub min_visits: usize,
    pub max_visits: usize,
    pub num_clusters: usize,
    pub categories_per_cluster: usize,
    pub diagnosis_codes_per_cluster: usize,
    pub procedure_codes_per_cluster: usize,
    pub mean_diagnoses: f64,
    pub mean_procedures: f64,
    pub max_clusters_per_patient: usize,
    /// Probability that a visit carries an acute episode cluster.
    pub acute_rate: f64,
    /// Probability that an acute episode survives a gap of at most 30 days.
    pub acute_persistence: f64,
    pub gap_median_days: f64,
    pub gap_sigma: f64,
    pub mean_length_of_stay: f64,
    pub chronic_cluster: usize,
    pub readmission_intercept: f64,
    pub readmission_chronic_weight: f64,
    pub readmission_gap_weight: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_patients: 7499,
            mean_visits: 2.66,
            min_visits: 2,
            max_visits: 40,
            num_clusters: 20,
            categories_per_cluster: 5,
            diagnosis_codes_per_cluster: 60,
            procedure_codes_per_cluster: 15,
            mean_diagnoses: 13.0,
            mean_procedures: 4.0,
            max_clusters_per_patient: 3,
            acute_rate: 0.5,
            acute_persistence: 0.8,
            gap_median_days: 30.0,
            gap_sigma: 1.2,
            mean_length_of_stay: 4.0,
            chronic_cluster: 0,
            readmission_intercept: -2.5,
            readmission_chronic_weight: 2.5,
            readmission_gap_weight: 2.5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.num_patients == 0 || self.num_clusters == 0 || self.categories_per_cluster == 0 {
            return err("patient, cluster and category counts must be positive".into());
        }
        if self.min_visits < 2 || self.max_visits < self.min_visits {
            return err(format!(
                "visit bounds must satisfy 2 <= min ({}) <= max ({})",
                self.min_visits, self.max_visits
            ));
        }
        if !(self.mean_visits >= self.min_visits as f64 && self.mean_visits <= self.max_visits as f64) {
            return err(format!("mean_visits {} outside [min, max]", self.mean_visits));
        }
        if self.diagnosis_codes_per_cluster < self.categories_per_cluster {
            return err("each category needs at least one diagnosis code".into());
        }
        if !(self.mean_diagnoses >= 1.0) || !(self.mean_procedures >= 0.0) {
            return err("code means must be finite, diagnoses >= 1".into());
        }
        if self.mean_diagnoses > self.diagnosis_codes_per_cluster as f64 {
            return err(format!(
                "mean diagnoses per visit {} exceeds the {} diagnosis codes of a cluster",
                self.mean_diagnoses, self.diagnosis_codes_per_cluster
            ));
        }
        if self.mean_procedures > self.procedure_codes_per_cluster as f64 {
            return err(format!(
                "mean procedures per visit {} exceeds the {} procedure codes of a cluster",
                self.mean_procedures, self.procedure_codes_per_cluster
            ));
        }
        if self.max_clusters_per_patient == 0 || self.max_clusters_per_patient > self.num_clusters {
            return err("max_clusters_per_patient must be in 1..=num_clusters".into());
        }
        if self.chronic_cluster >= self.num_clusters {
            return err("chronic_cluster out of range".into());
        }
        for (name, p) in [("acute_rate", self.acute_rate), ("acute_persistence", self.acute_persistence)] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} must be a probability"));
            }
        }
        if !(self.gap_median_days > 0.0 && self.gap_sigma > 0.0 && self.mean_length_of_stay >= 0.0) {
            return err("gap and stay parameters must be positive".into());
        }
        Ok(())
    }

    pub fn num_categories(&self) -> usize {
        self.num_clusters * self.categories_per_cluster
    }
}

/// Output of [`generate_synthetic`].
#[derive(Clone, Debug)]
pub struct SyntheticCohort {
    pub dataset: Dataset,
    pub categories: CategoryMap,
}

fn diagnosis_code(cluster: usize, j: usize) -> String {
    format!("D{cluster:02}.{j:03}")
}

fn procedure_code(cluster: usize, j: usize) -> String {
    format!("P{cluster:02}.{j:03}")
}

/// Category of the `j`-th code of a cluster.
fn category_of(config: &GeneratorConfig, cluster: usize, j: usize) -> usize {
    cluster * config.categories_per_cluster + j % config.categories_per_cluster
}

struct ClusterSampler {
    diagnoses: WeightedIndex<f64>,
    procedures: Option<WeightedIndex<f64>>,
}

fn zipf_weights(n: usize) -> Vec<f64> {
    (0..n).map(|j| 1.0 / (1.0 + j as f64).powf(0.8)).collect()
}

/// Draws `count` distinct codes, each from a cluster chosen by `mix`.
fn draw_codes(
    rng: &mut ChaCha8Rng,
    count: usize,
    clusters: &[usize],
    mix: &WeightedIndex<f64>,
    pick: impl Fn(&mut ChaCha8Rng, usize) -> Option<String>,
    out: &mut BTreeSet<String>,
) {
    let target = out.len() + count;
    let mut attempts = 0;
    while out.len() < target && attempts < count * 50 {
        attempts += 1;
        let cluster = clusters[mix.sample(rng)];
        if let Some(code) = pick(rng, cluster) {
            out.insert(code);
        }
    }
}

/// Generates a cohort deterministically from `seed`.
///
/// No frequency filtering is applied; the vocabulary is every emitted code
/// in sorted order.
pub fn generate_synthetic(config: &GeneratorConfig, seed: u64) -> Result<SyntheticCohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let dx_weights = zipf_weights(config.diagnosis_codes_per_cluster);
    let px_weights = zipf_weights(config.procedure_codes_per_cluster);
    let samplers: Vec<ClusterSampler> = (0..config.num_clusters)
        .map(|_| {
            // per-cluster permutation so clusters differ in which codes are common
            let mut dx = dx_weights.clone();
            dx.shuffle(&mut rng);
            let mut px = px_weights.clone();
            px.shuffle(&mut rng);
            ClusterSampler {
                diagnoses: WeightedIndex::new(dx).expect("positive weights"),
                procedures: (!px.is_empty()).then(|| WeightedIndex::new(px).expect("positive weights")),
            }
        })
        .collect();

    let extra_visits = config.mean_visits - config.min_visits as f64;
    let geometric = Geometric::new(1.0 / (1.0 + extra_visits)).map_err(|e| Error::Config(e.to_string()))?;
    let gap = LogNormal::new(config.gap_median_days.ln(), config.gap_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let poisson = |mean: f64| Poisson::new(mean).ok();
    let dx_count = poisson(config.mean_diagnoses).ok_or_else(|| Error::Config("bad diagnosis mean".into()))?;
    let px_count = poisson(config.mean_procedures);
    let stay = poisson(config.mean_length_of_stay);

    let mut records = Vec::with_capacity(config.num_patients);
    for p in 0..config.num_patients {
        let n_clusters = rng.random_range(1..=config.max_clusters_per_patient);
        let clusters: Vec<usize> = (0..config.num_clusters).choose_multiple(&mut rng, n_clusters);
        let chronic = clusters.contains(&config.chronic_cluster);
        let cluster_mix: Vec<f64> = (0..n_clusters).map(|_| rng.random_range(0.5..1.5)).collect();
        let mix = WeightedIndex::new(&cluster_mix).expect("positive weights");

        let n_visits = (config.min_visits + geometric.sample(&mut rng) as usize).min(config.max_visits);
        let mut day: i64 = rng.random_range(0..3650);
        let mut acute: Option<usize> = None;
        let mut last_gap = f64::INFINITY;
        let mut visits = Vec::with_capacity(n_visits);
        for v in 0..n_visits {
            if v > 0 {
                let g = gap.sample(&mut rng).round().max(1.0);
                last_gap = g;
                day += g as i64;
                let persists = g <= 30.0 && rng.random_bool(config.acute_persistence);
                if !persists {
                    acute = None;
                }
            }
            if acute.is_none() && rng.random_bool(config.acute_rate) {
                acute = Some(rng.random_range(0..config.num_clusters));
            }

            let mut visit_clusters = clusters.clone();
            let mut weights = cluster_mix.clone();
            if let Some(a) = acute {
                visit_clusters.push(a);
                weights.push(cluster_mix.iter().sum::<f64>() / n_clusters as f64);
            }
            let visit_mix = if acute.is_some() {
                WeightedIndex::new(&weights).expect("positive weights")
            } else {
                mix.clone()
            };

            let mut codes = BTreeSet::new();
            let n_dx = (dx_count.sample(&mut rng) as usize).max(1);
            draw_codes(
                &mut rng,
                n_dx,
                &visit_clusters,
                &visit_mix,
                |r, c| Some(diagnosis_code(c, samplers[c].diagnoses.sample(r))),
                &mut codes,
            );
            if let Some(px) = &px_count {
                let n_px = px.sample(&mut rng) as usize;
                draw_codes(
                    &mut rng,
                    n_px,
                    &visit_clusters,
                    &visit_mix,
                    |r, c| samplers[c].procedures.as_ref().map(|s| procedure_code(c, s.sample(r))),
                    &mut codes,
                );
            }
            let los = stay.as_ref().map_or(0, |s| s.sample(&mut rng) as i64);
            visits.push(VisitRecord {
                codes: codes.into_iter().collect(),
                admission_day: day,
                discharge_day: Some(day + los),
                extra: BTreeMap::new(),
            });
            day += los;
        }

        let shortness = (-last_gap / config.gap_median_days).exp();
        let logit = config.readmission_intercept
            + config.readmission_chronic_weight * f64::from(u8::from(chronic))
            + config.readmission_gap_weight * shortness;
        let readmitted = rng.random_bool(crate::tensor::sigmoid(logit));
        records.push(JourneyRecord {
            patient_id: format!("P{p:06}"),
            visits,
            readmission: Some(u8::from(readmitted)),
            extra: BTreeMap::new(),
        });
    }

    let dataset = from_records(records, 1)?;
    let categories = CategoryMap::new(
        std::iter::once(None)
            .chain(dataset.vocab.codes().iter().map(|c| Some(category_from_code(config, c))))
            .collect(),
    );
    Ok(SyntheticCohort { dataset, categories })
}

fn category_from_code(config: &GeneratorConfig, code: &str) -> usize {
    let (cluster, j) = code[1..].split_once('.').expect("generated code format");
    category_of(config, cluster.parse().expect("cluster"), j.parse().expect("index"))
}
