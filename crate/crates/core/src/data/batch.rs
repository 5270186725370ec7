use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{build_diagnosis_target, readmission_label, temporal_positions, CategoryMap, Dataset, Visit, PAD_INDEX};
use crate::error::{Error, Result};

/// Prediction task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    /// Binary readmission within 30 days, scored by PR-AUC.
    #[serde(rename = "readm")]
    Readmission,
    /// Categories of the next visit, scored by precision@k.
    #[serde(rename = "dx")]
    Diagnosis,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Readmission => "readm",
            Task::Diagnosis => "dx",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "readm" => Ok(Task::Readmission),
            "dx" => Ok(Task::Diagnosis),
            other => Err(Error::Config(format!("unknown task {other:?}, expected readm or dx"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Label {
    Readmission(bool),
    /// Sorted, duplicate-free category indices.
    Diagnosis(Vec<usize>),
}

/// Model input for one patient: the visits fed to the network and the target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub patient_id: String,
    pub visits: Vec<Visit>,
    pub label: Label,
}

/// Turns journeys into task examples.
///
/// Readmission uses every visit. Diagnosis feeds all visits but the last and
/// targets the categories of the last one.
pub fn build_examples(dataset: &Dataset, task: Task, categories: Option<&CategoryMap>) -> Result<Vec<Example>> {
    dataset
        .journeys
        .iter()
        .map(|j| {
            let (visits, label) = match task {
                Task::Readmission => (j.visits().to_vec(), Label::Readmission(readmission_label(j, 30)?)),
                Task::Diagnosis => {
                    let map = categories
                        .ok_or_else(|| Error::Config("diagnosis task needs a category map".into()))?;
                    let target = build_diagnosis_target(j, map).map_err(|e| match e {
                        Error::Data(msg) => Error::Data(format!("journey {}: {msg}", j.patient_id)),
                        other => other,
                    })?;
                    let inputs = j.visits()[..j.visits().len() - 1].to_vec();
                    (inputs, Label::Diagnosis(target.into_iter().collect()))
                }
            };
            Ok(Example {
                patient_id: j.patient_id.clone(),
                visits,
                label,
            })
        })
        .collect()
}

/// Padded integer view of a group of examples.
///
/// Layout is row-major: `code_indices[(b * max_visits + i) * max_codes + c]`.
/// Real visits occupy the leading positions of each row; padding trails.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub max_visits: usize,
    pub max_codes: usize,
    pub code_indices: Vec<u32>,
    pub code_mask: Vec<bool>,
    pub visit_mask: Vec<bool>,
    pub temporal_positions: Vec<u32>,
    pub labels: Vec<Label>,
    pub patient_ids: Vec<String>,
    /// Codes dropped because a visit had more than `max_codes`.
    pub truncated_codes: usize,
    /// Visits dropped because a journey had more than `max_visits`.
    pub truncated_visits: usize,
}

impl Batch {
    /// Number of real visits in row `b`.
    pub fn visit_count(&self, b: usize) -> usize {
        self.visit_mask[b * self.max_visits..(b + 1) * self.max_visits]
            .iter()
            .filter(|&&m| m)
            .count()
    }

    /// Real codes of visit `i` in row `b`.
    pub fn visit_codes(&self, b: usize, i: usize) -> impl Iterator<Item = u32> + '_ {
        let base = (b * self.max_visits + i) * self.max_codes;
        (base..base + self.max_codes)
            .filter(|&k| self.code_mask[k])
            .map(|k| self.code_indices[k])
    }

    pub fn positions(&self, b: usize) -> &[u32] {
        &self.temporal_positions[b * self.max_visits..b * self.max_visits + self.visit_count(b)]
    }
}

/// Pads examples to `max_visits × max_codes`.
///
/// Journeys longer than `max_visits` keep their most recent visits; visits
/// with more than `max_codes` codes keep the lowest indices. Temporal
/// positions are measured from the first kept visit.
pub fn batch_and_pad(examples: &[Example], max_visits: usize, max_codes: usize) -> Result<Batch> {
    if max_visits == 0 || max_codes == 0 {
        return Err(Error::Config("max_visits and max_codes must be positive".into()));
    }
    let n = examples.len();
    let mut batch = Batch {
        size: n,
        max_visits,
        max_codes,
        code_indices: vec![PAD_INDEX; n * max_visits * max_codes],
        code_mask: vec![false; n * max_visits * max_codes],
        visit_mask: vec![false; n * max_visits],
        temporal_positions: vec![0; n * max_visits],
        labels: Vec::with_capacity(n),
        patient_ids: Vec::with_capacity(n),
        truncated_codes: 0,
        truncated_visits: 0,
    };
    for (b, ex) in examples.iter().enumerate() {
        if ex.visits.is_empty() {
            return Err(Error::Data(format!("example {} has no visits", ex.patient_id)));
        }
        let skip = ex.visits.len().saturating_sub(max_visits);
        batch.truncated_visits += skip;
        let kept = &ex.visits[skip..];
        for (i, (visit, pos)) in kept.iter().zip(temporal_positions(kept)).enumerate() {
            let row = b * max_visits + i;
            batch.visit_mask[row] = true;
            batch.temporal_positions[row] = pos;
            let codes = visit.codes();
            batch.truncated_codes += codes.len().saturating_sub(max_codes);
            for (c, &code) in codes.iter().take(max_codes).enumerate() {
                batch.code_indices[row * max_codes + c] = code;
                batch.code_mask[row * max_codes + c] = true;
            }
        }
        batch.labels.push(ex.label.clone());
        batch.patient_ids.push(ex.patient_id.clone());
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(visits: &[(&[u32], i64)]) -> Example {
        Example {
            patient_id: "p".into(),
            visits: visits
                .iter()
                .map(|(c, d)| Visit::new(c.to_vec(), *d, None).unwrap())
                .collect(),
            label: Label::Readmission(false),
        }
    }

    #[test]
    fn visit_mask_pads_trailing() {
        let b = batch_and_pad(&[example(&[(&[1], 0), (&[2], 3)])], 4, 2).unwrap();
        assert_eq!(b.visit_mask, vec![true, true, false, false]);
        assert_eq!(b.visit_count(0), 2);
    }

    #[test]
    fn code_row_padding() {
        let b = batch_and_pad(&[example(&[(&[3, 9], 0), (&[1], 2)])], 2, 4).unwrap();
        assert_eq!(&b.code_indices[..4], &[3, 9, 0, 0]);
        assert_eq!(&b.code_mask[..4], &[true, true, false, false]);
    }

    #[test]
    fn keeps_most_recent_visits() {
        let visits: Vec<(&[u32], i64)> = vec![(&[1], 0), (&[2], 5), (&[3], 9), (&[4], 20), (&[5], 21), (&[6], 40)];
        let b = batch_and_pad(&[example(&visits)], 4, 1).unwrap();
        let kept: Vec<u32> = (0..4).flat_map(|i| b.visit_codes(0, i).collect::<Vec<_>>()).collect();
        assert_eq!(kept, vec![3, 4, 5, 6]);
        assert_eq!(b.positions(0), &[0, 11, 12, 31]);
        assert_eq!(b.truncated_visits, 2);
    }

    #[test]
    fn code_truncation_keeps_lowest_indices() {
        let b = batch_and_pad(&[example(&[(&[8, 2, 5], 0), (&[1], 1)])], 2, 2).unwrap();
        assert_eq!(b.visit_codes(0, 0).collect::<Vec<_>>(), vec![2, 5]);
        assert_eq!(b.truncated_codes, 1);
    }

    #[test]
    fn diagnosis_examples_hold_out_last_visit() {
        use crate::data::{PatientJourney, Vocabulary};
        let v = |c: u32, d| Visit::new(vec![c], d, None).unwrap();
        let ds = Dataset {
            journeys: vec![PatientJourney::new("p", vec![v(1, 0), v(2, 4), v(13, 9)], Some(true)).unwrap()],
            vocab: Vocabulary::from_codes((1..=13).map(|i| format!("c{i}"))).unwrap(),
        };
        let map = CategoryMap::from_fn(14, |c| (c / 10) as usize);
        let ex = build_examples(&ds, Task::Diagnosis, Some(&map)).unwrap();
        assert_eq!(ex[0].visits.len(), 2);
        assert_eq!(ex[0].label, Label::Diagnosis(vec![1]));
        let ex = build_examples(&ds, Task::Readmission, None).unwrap();
        assert_eq!(ex[0].visits.len(), 3);
        assert_eq!(ex[0].label, Label::Readmission(true));
        assert!(build_examples(&ds, Task::Diagnosis, None).is_err());
    }

    #[test]
    fn task_parsing() {
        assert_eq!("dx".parse::<Task>().unwrap(), Task::Diagnosis);
        assert!("x".parse::<Task>().is_err());
        assert_eq!(Task::Readmission.to_string(), "readm");
    }
}
