//! JSONL journey files.
//!
//! One object per line:
//! `{"patient_id": "...", "visits": [{"codes": [...], "admission_day": 0, "discharge_day": 3}], "readmission": 0}`.
//! `discharge_day` and `readmission` are optional. Unknown fields are logged
//! and ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, PatientJourney, Visit, Vocabulary};
use crate::error::{Error, Result};

/// Codes seen fewer times than this across the corpus are dropped on load.
pub const DEFAULT_MIN_COUNT: usize = 5;

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    pub min_count: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct VisitRecord {
    pub codes: Vec<String>,
    pub admission_day: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discharge_day: Option<i64>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct JourneyRecord {
    pub patient_id: String,
    pub visits: Vec<VisitRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readmission: Option<u8>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

fn read_records(path: &Path) -> Result<Vec<JourneyRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut warned = BTreeSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg,
        };
        let rec: JourneyRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(r) = rec.readmission {
            if r > 1 {
                return Err(parse_err(format!("readmission must be 0 or 1, got {r}")));
            }
        }
        for v in &rec.visits {
            if v.admission_day < 0 {
                return Err(parse_err(format!("negative admission_day {}", v.admission_day)));
            }
            if v.discharge_day.is_some_and(|d| d < v.admission_day) {
                return Err(parse_err("discharge_day precedes admission_day".into()));
            }
        }
        let unknown = rec
            .extra
            .keys()
            .chain(rec.visits.iter().flat_map(|v| v.extra.keys()));
        for key in unknown {
            if warned.insert(key.clone()) {
                log::warn!("{}:{}: ignoring unknown field {key:?}", path.display(), n + 1);
            }
        }
        records.push(rec);
    }
    Ok(records)
}

/// Reads journeys, drops codes rarer than `min_count`, then drops visits
/// left empty and journeys left with fewer than two visits. The filters are
/// repeated until nothing changes, so loading a saved dataset is idempotent.
pub fn load_dataset(path: &Path, options: LoadOptions) -> Result<Dataset> {
    from_records(read_records(path)?, options.min_count)
}

/// Like [`load_dataset`] but maps codes through a fixed vocabulary; unknown
/// codes are dropped instead of frequency-filtered.
pub fn load_dataset_with_vocab(path: &Path, vocab: &Vocabulary) -> Result<Dataset> {
    let records = read_records(path)?;
    let mut unknown = 0usize;
    let mut journeys = Vec::new();
    for rec in records {
        let mut visits = Vec::new();
        for v in rec.visits {
            let codes: Vec<u32> = v
                .codes
                .iter()
                .filter_map(|c| {
                    let idx = vocab.index_of(c);
                    unknown += idx.is_none() as usize;
                    idx
                })
                .collect();
            if !codes.is_empty() {
                visits.push(Visit::new(codes, v.admission_day, v.discharge_day)?);
            }
        }
        if let Some(j) = make_journey(rec.patient_id, visits, rec.readmission)? {
            journeys.push(j);
        }
    }
    if unknown > 0 {
        log::warn!("{}: dropped {unknown} code occurrences absent from the vocabulary", path.display());
    }
    Ok(Dataset {
        journeys,
        vocab: vocab.clone(),
    })
}

fn make_journey(id: String, mut visits: Vec<Visit>, label: Option<u8>) -> Result<Option<PatientJourney>> {
    if visits.len() < 2 {
        return Ok(None);
    }
    visits.sort_by_key(|v| v.admission_day);
    PatientJourney::new(id, visits, label.map(|l| l == 1)).map(Some)
}

pub(crate) fn from_records(mut records: Vec<JourneyRecord>, min_count: usize) -> Result<Dataset> {
    loop {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for v in records.iter().flat_map(|r| &r.visits) {
            let unique: BTreeSet<&str> = v.codes.iter().map(String::as_str).collect();
            for c in unique {
                *counts.entry(c).or_default() += 1;
            }
        }
        let rare: BTreeSet<String> = counts
            .into_iter()
            .filter(|&(_, n)| n < min_count)
            .map(|(c, _)| c.to_owned())
            .collect();
        let before: usize = records.iter().map(|r| r.visits.len()).sum::<usize>() + records.len();
        for r in &mut records {
            for v in &mut r.visits {
                v.codes.retain(|c| !rare.contains(c));
            }
            r.visits.retain(|v| !v.codes.is_empty());
        }
        records.retain(|r| r.visits.len() >= 2);
        let after: usize = records.iter().map(|r| r.visits.len()).sum::<usize>() + records.len();
        if rare.is_empty() && before == after {
            break;
        }
    }

    let all: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| &r.visits)
        .flat_map(|v| &v.codes)
        .map(String::as_str)
        .collect();
    let vocab = Vocabulary::from_codes(all)?;
    let mut journeys = Vec::with_capacity(records.len());
    for rec in records {
        let visits = rec
            .visits
            .into_iter()
            .map(|v| {
                let codes = v.codes.iter().filter_map(|c| vocab.index_of(c)).collect();
                Visit::new(codes, v.admission_day, v.discharge_day)
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(j) = make_journey(rec.patient_id, visits, rec.readmission)? {
            journeys.push(j);
        }
    }
    Ok(Dataset { journeys, vocab })
}

/// Writes one JSON object per line, codes in ascending index order.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for j in &dataset.journeys {
        let rec = JourneyRecord {
            patient_id: j.patient_id.clone(),
            visits: j
                .visits()
                .iter()
                .map(|v| VisitRecord {
                    codes: v
                        .codes()
                        .iter()
                        .map(|&c| dataset.vocab.code(c).unwrap_or_default().to_owned())
                        .collect(),
                    admission_day: v.admission_day,
                    discharge_day: v.discharge_day,
                    extra: BTreeMap::new(),
                })
                .collect(),
            readmission: j.readmission.map(u8::from),
            extra: BTreeMap::new(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
