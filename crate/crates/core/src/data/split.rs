use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Train/validation/test proportions used throughout.
pub const PAPER_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

/// Which partition of a split to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Seeded partition by patient. Sizes are `round(n * ratio)` for train and
/// validation, with the remainder going to test.
pub fn split_dataset(dataset: &Dataset, ratios: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let n_valid = ((n as f64 * ratios[1]).round() as usize).min(n - n_train);
    let take = |idx: &[usize]| Dataset {
        journeys: idx.iter().map(|&i| dataset.journeys[i].clone()).collect(),
        vocab: dataset.vocab.clone(),
    };
    Ok((
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_valid]),
        take(&order[n_train + n_valid..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PatientJourney, Visit, Vocabulary};

    fn dataset(n: usize) -> Dataset {
        let journeys = (0..n)
            .map(|i| {
                let v = |d| Visit::new(vec![1], d, None).unwrap();
                PatientJourney::new(format!("p{i}"), vec![v(0), v(1)], None).unwrap()
            })
            .collect();
        Dataset {
            journeys,
            vocab: Vocabulary::from_codes(["a"]).unwrap(),
        }
    }

    fn ids(d: &Dataset) -> Vec<String> {
        d.journeys.iter().map(|j| j.patient_id.clone()).collect()
    }

    #[test]
    fn ten_journeys_eight_one_one() {
        let (a, b, c) = split_dataset(&dataset(10), PAPER_SPLIT, 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
    }

    #[test]
    fn everything_in_train() {
        let (a, b, c) = split_dataset(&dataset(7), [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (7, 0, 0));
    }

    #[test]
    fn same_seed_same_partition() {
        let d = dataset(30);
        let (a1, _, c1) = split_dataset(&d, PAPER_SPLIT, 5).unwrap();
        let (a2, _, c2) = split_dataset(&d, PAPER_SPLIT, 5).unwrap();
        assert_eq!(ids(&a1), ids(&a2));
        assert_eq!(ids(&c1), ids(&c2));
    }

    #[test]
    fn bad_ratios_rejected() {
        assert!(split_dataset(&dataset(3), [0.5, 0.1, 0.1], 1).is_err());
        assert!(split_dataset(&dataset(3), [1.2, -0.1, -0.1], 1).is_err());
    }
}
