//! Medical codes, visits and patient journeys.

mod batch;
mod io;
mod split;
mod synth;

pub use batch::{batch_and_pad, build_examples, Batch, Example, Label, Task};
pub use io::{load_dataset, load_dataset_with_vocab, save_dataset, LoadOptions, DEFAULT_MIN_COUNT};
pub use split::{split_dataset, Split, PAPER_SPLIT};
pub use synth::{generate_synthetic, GeneratorConfig, SyntheticCohort};

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index reserved for padding in every batch and embedding table.
pub const PAD_INDEX: u32 = 0;

/// Bijection between code strings and dense indices `1..=len()`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    codes: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary in the given order; duplicates are rejected.
    pub fn from_codes<I, S>(codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::default();
        for code in codes {
            let code = code.into();
            if code.is_empty() {
                return Err(Error::Data("empty code string".into()));
            }
            if vocab.index.contains_key(&code) {
                return Err(Error::Data(format!("duplicate code {code:?} in vocabulary")));
            }
            vocab.codes.push(code.clone());
            vocab.index.insert(code, vocab.codes.len() as u32);
        }
        Ok(vocab)
    }

    /// Number of real codes, excluding padding.
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Rows needed by an embedding table: real codes plus the padding row.
    pub fn table_size(&self) -> usize {
        self.codes.len() + 1
    }

    pub fn index_of(&self, code: &str) -> Option<u32> {
        self.index.get(code).copied()
    }

    pub fn code(&self, index: u32) -> Option<&str> {
        (index as usize).checked_sub(1).and_then(|i| self.codes.get(i)).map(String::as_str)
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    /// Rebuilds the reverse index after deserialization.
    pub fn reindex(mut self) -> Result<Self> {
        let codes = std::mem::take(&mut self.codes);
        Self::from_codes(codes)
    }

    /// One code per line; line `n` (1-based) holds index `n`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for c in &self.codes {
            text.push_str(c);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_codes(text.lines().filter(|l| !l.is_empty()).map(str::to_owned))
    }
}

/// One hospital stay.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Visit {
    codes: Vec<u32>,
    pub admission_day: i64,
    pub discharge_day: Option<i64>,
}

impl Visit {
    /// Codes are deduplicated and kept in ascending order.
    pub fn new(mut codes: Vec<u32>, admission_day: i64, discharge_day: Option<i64>) -> Result<Self> {
        codes.sort_unstable();
        codes.dedup();
        if codes.is_empty() {
            return Err(Error::Data("visit without codes".into()));
        }
        if codes[0] == PAD_INDEX {
            return Err(Error::Data("padding index used as a code".into()));
        }
        if admission_day < 0 {
            return Err(Error::Data(format!("negative admission day {admission_day}")));
        }
        if let Some(d) = discharge_day {
            if d < admission_day {
                return Err(Error::Data(format!(
                    "discharge day {d} precedes admission day {admission_day}"
                )));
            }
        }
        Ok(Visit {
            codes,
            admission_day,
            discharge_day,
        })
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }
}

/// A time-ordered sequence of visits for one patient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatientJourney {
    pub patient_id: String,
    visits: Vec<Visit>,
    /// Explicit readmission label, when the source provides one.
    pub readmission: Option<bool>,
}

impl PatientJourney {
    pub fn new(patient_id: impl Into<String>, visits: Vec<Visit>, readmission: Option<bool>) -> Result<Self> {
        let patient_id = patient_id.into();
        if visits.len() < 2 {
            return Err(Error::Data(format!(
                "journey {patient_id} has {} visit(s), need at least 2",
                visits.len()
            )));
        }
        if visits.windows(2).any(|w| w[1].admission_day < w[0].admission_day) {
            return Err(Error::Data(format!("journey {patient_id} is not time-ordered")));
        }
        Ok(PatientJourney {
            patient_id,
            visits,
            readmission,
        })
    }

    pub fn visits(&self) -> &[Visit] {
        &self.visits
    }
}

/// Journeys together with the vocabulary their code indices refer to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub journeys: Vec<PatientJourney>,
    pub vocab: Vocabulary,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.journeys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.journeys.is_empty()
    }
}

/// Day offsets of each visit from the first one.
pub fn temporal_positions(visits: &[Visit]) -> Vec<u32> {
    let Some(first) = visits.first() else {
        return Vec::new();
    };
    visits
        .iter()
        .map(|v| (v.admission_day - first.admission_day).unsigned_abs() as u32)
        .collect()
}

/// Explicit label when present, else whether any admission falls within
/// `window_days` after the previous visit's discharge.
pub fn readmission_label(journey: &PatientJourney, window_days: i64) -> Result<bool> {
    if let Some(label) = journey.readmission {
        return Ok(label);
    }
    let mut hit = false;
    for pair in journey.visits.windows(2) {
        let discharge = pair[0].discharge_day.ok_or_else(|| {
            Error::Data(format!(
                "journey {} has neither a readmission label nor discharge days",
                journey.patient_id
            ))
        })?;
        let gap = pair[1].admission_day - discharge;
        hit |= (0..=window_days).contains(&gap);
    }
    Ok(hit)
}

/// Code index to category index, used to build diagnosis targets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap {
    by_index: Vec<Option<usize>>,
    num_categories: usize,
}

impl CategoryMap {
    /// `by_index[i]` is the category of code index `i`; entry 0 is ignored.
    pub fn new(by_index: Vec<Option<usize>>) -> Self {
        let num_categories = by_index.iter().flatten().max().map_or(0, |m| m + 1);
        CategoryMap {
            by_index,
            num_categories,
        }
    }

    pub fn from_fn(table_size: usize, f: impl Fn(u32) -> usize) -> Self {
        Self::new((0..table_size as u32).map(|i| (i != PAD_INDEX).then(|| f(i))).collect())
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn category(&self, code: u32) -> Option<usize> {
        self.by_index.get(code as usize).copied().flatten()
    }

    /// Reads `code<TAB>category` lines, resolving codes through `vocab`.
    /// Codes absent from the vocabulary are skipped.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut by_index = vec![None; vocab.table_size()];
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: msg.to_owned(),
            };
            let (code, cat) = line.split_once('\t').ok_or_else(|| parse_err("expected code<TAB>category"))?;
            let cat: usize = cat.trim().parse().map_err(|_| parse_err("category is not an integer"))?;
            if let Some(i) = vocab.index_of(code) {
                by_index[i as usize] = Some(cat);
            }
        }
        Ok(Self::new(by_index))
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let mut text = String::new();
        for (i, cat) in self.by_index.iter().enumerate() {
            if let (Some(cat), Some(code)) = (cat, vocab.code(i as u32)) {
                text.push_str(&format!("{code}\t{cat}\n"));
            }
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Categories of the final visit's codes.
pub fn build_diagnosis_target(journey: &PatientJourney, categories: &CategoryMap) -> Result<BTreeSet<usize>> {
    let last = journey
        .visits
        .last()
        .ok_or_else(|| Error::Data(format!("journey {} has no visits", journey.patient_id)))?;
    last.codes
        .iter()
        .map(|&c| {
            categories
                .category(c)
                .ok_or_else(|| Error::Data(format!("code index {c} has no category")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn visit(codes: &[u32], day: i64) -> Visit {
        Visit::new(codes.to_vec(), day, None).unwrap()
    }

    fn journey(days: &[i64]) -> PatientJourney {
        PatientJourney::new("p", days.iter().map(|&d| visit(&[1], d)).collect(), None).unwrap()
    }

    #[test]
    fn vocabulary_reserves_zero() {
        let v = Vocabulary::from_codes(["a", "b"]).unwrap();
        assert_eq!(v.index_of("a"), Some(1));
        assert_eq!(v.code(2), Some("b"));
        assert_eq!(v.code(0), None);
        assert_eq!(v.table_size(), 3);
        assert!(Vocabulary::from_codes(["a", "a"]).is_err());
    }

    #[test]
    fn visit_validation() {
        assert_eq!(visit(&[3, 1, 3], 0).codes(), &[1, 3]);
        assert!(Visit::new(vec![], 0, None).is_err());
        assert!(Visit::new(vec![0], 0, None).is_err());
        assert!(Visit::new(vec![1], -1, None).is_err());
        assert!(Visit::new(vec![1], 5, Some(4)).is_err());
    }

    #[test]
    fn journey_needs_two_ordered_visits() {
        assert!(PatientJourney::new("p", vec![visit(&[1], 0)], None).is_err());
        assert!(PatientJourney::new("p", vec![visit(&[1], 5), visit(&[1], 2)], None).is_err());
    }

    #[test]
    fn positions_same_day() {
        assert_eq!(temporal_positions(journey(&[10, 10, 40]).visits()), vec![0, 0, 30]);
    }

    #[test]
    fn positions_subtraction() {
        assert_eq!(temporal_positions(journey(&[5, 12, 100]).visits()), vec![0, 7, 95]);
    }

    #[test]
    fn positions_single_visit() {
        assert_eq!(temporal_positions(&[visit(&[1], 7)]), vec![0]);
    }

    fn with_discharge(discharge: i64, next: i64) -> PatientJourney {
        PatientJourney::new(
            "p",
            vec![
                Visit::new(vec![1], 90, Some(discharge)).unwrap(),
                Visit::new(vec![1], next, Some(next + 2)).unwrap(),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn readmission_within_window() {
        assert!(readmission_label(&with_discharge(100, 120), 30).unwrap());
        assert!(!readmission_label(&with_discharge(100, 200), 30).unwrap());
    }

    #[test]
    fn readmission_explicit_passthrough() {
        let mut j = with_discharge(100, 200);
        j.readmission = Some(true);
        assert!(readmission_label(&j, 30).unwrap());
        let mut j = journey(&[0, 1]);
        assert!(readmission_label(&j, 30).is_err());
        j.readmission = Some(false);
        assert!(!readmission_label(&j, 30).unwrap());
    }

    fn dx_journey(last: &[u32]) -> PatientJourney {
        PatientJourney::new("p", vec![visit(&[1], 0), visit(last, 3)], None).unwrap()
    }

    #[test]
    fn diagnosis_target_shared_category() {
        let map = CategoryMap::from_fn(100, |c| (c / 10) as usize);
        let t = build_diagnosis_target(&dx_journey(&[12, 13]), &map).unwrap();
        assert_eq!(t.into_iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn diagnosis_target_two_categories() {
        let map = CategoryMap::from_fn(100, |c| (c / 10) as usize);
        let t = build_diagnosis_target(&dx_journey(&[5, 95]), &map).unwrap();
        assert_eq!(t.into_iter().collect::<Vec<_>>(), vec![0, 9]);
    }

    #[test]
    fn diagnosis_target_unmapped_code_is_named() {
        let map = CategoryMap::from_fn(50, |c| (c / 10) as usize);
        let err = build_diagnosis_target(&dx_journey(&[5, 95]), &map).unwrap_err();
        assert!(err.to_string().contains("95"), "{err}");
    }
}
