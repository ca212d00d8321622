//! Panel discrete-choice datasets: in-memory model, CSV ingestion and
//! by-person train/validation splitting.
//!
//! The CSV format is long: one row per alternative per task, with the
//! columns `person_id, task_id, alt_id, chosen` (0/1), an optional
//! `available` (0/1, default 1) and one column per attribute.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::RandomStream;

pub const PERSON_COLUMN: &str = "person_id";
pub const TASK_COLUMN: &str = "task_id";
pub const ALT_COLUMN: &str = "alt_id";
pub const CHOSEN_COLUMN: &str = "chosen";
pub const AVAILABLE_COLUMN: &str = "available";

/// One choice situation: a set of alternatives described by attribute rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceTask {
    pub task_id: String,
    pub alt_ids: Vec<String>,
    /// Row-major `alternatives × attributes`.
    pub attributes: Vec<f64>,
    pub available: Vec<bool>,
    pub chosen: usize,
}

impl ChoiceTask {
    pub fn n_alternatives(&self) -> usize {
        self.alt_ids.len()
    }

    pub fn row(&self, alt: usize, n_attributes: usize) -> &[f64] {
        &self.attributes[alt * n_attributes..(alt + 1) * n_attributes]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PersonRecord {
    pub person_id: String,
    pub tasks: Vec<ChoiceTask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceDataset {
    pub persons: Vec<PersonRecord>,
    pub attribute_names: Vec<String>,
    pub alternative_labels: Option<Vec<String>>,
}

/// A single invariant violation found by [`ChoiceDataset::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub person: String,
    pub task: Option<String>,
    pub message: String,
}

impl ChoiceDataset {
    /// Builds a dataset, failing with an integrity error on the first
    /// invariant violation.
    pub fn new(
        persons: Vec<PersonRecord>,
        attribute_names: Vec<String>,
        alternative_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let ds = Self {
            persons,
            attribute_names,
            alternative_labels,
        };
        if let Some(v) = ds.validate().into_iter().next() {
            return Err(Error::Integrity {
                person: v.person,
                task: v.task.unwrap_or_default(),
                reason: v.message,
            });
        }
        Ok(ds)
    }

    pub fn n_persons(&self) -> usize {
        self.persons.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.persons.iter().map(|p| p.tasks.len()).sum()
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attribute_names
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    }

    /// Iterates `(person index, task)` over every task in the panel.
    pub fn tasks(&self) -> impl Iterator<Item = (usize, &ChoiceTask)> {
        self.persons
            .iter()
            .enumerate()
            .flat_map(|(n, p)| p.tasks.iter().map(move |t| (n, t)))
    }

    /// Reports every invariant violation; an empty report means the dataset
    /// is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let width = self.n_attributes();
        let mut out = Vec::new();
        for p in &self.persons {
            if p.tasks.is_empty() {
                out.push(Violation {
                    person: p.person_id.clone(),
                    task: None,
                    message: "person has no choice tasks".into(),
                });
            }
            for t in &p.tasks {
                let mut push = |message: String| {
                    out.push(Violation {
                        person: p.person_id.clone(),
                        task: Some(t.task_id.clone()),
                        message,
                    })
                };
                let j = t.alt_ids.len();
                if j < 2 {
                    push(format!("task has {j} alternative(s), at least 2 required"));
                }
                if t.available.len() != j {
                    push(format!(
                        "availability mask has length {}, expected {j}",
                        t.available.len()
                    ));
                }
                if t.attributes.len() != j * width {
                    push(format!(
                        "attribute rows have width {}, expected {width}",
                        if j == 0 { 0 } else { t.attributes.len() / j }
                    ));
                } else if t.attributes.iter().any(|v| !v.is_finite()) {
                    push("non-finite attribute value".into());
                }
                if t.chosen >= j {
                    push(format!("chosen index {} out of range for {j} alternatives", t.chosen));
                } else if t.available.get(t.chosen) == Some(&false) {
                    push(format!("chosen alternative {} is unavailable", t.alt_ids[t.chosen]));
                }
            }
        }
        out
    }
}

/// Column mapping for [`load_csv`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub person: String,
    pub task: String,
    pub alternative: String,
    pub chosen: String,
    pub available: Option<String>,
    pub attributes: Vec<String>,
}

impl CsvSchema {
    /// Standard column names with the given attribute columns.
    pub fn standard(attributes: Vec<String>) -> Self {
        Self {
            person: PERSON_COLUMN.into(),
            task: TASK_COLUMN.into(),
            alternative: ALT_COLUMN.into(),
            chosen: CHOSEN_COLUMN.into(),
            available: Some(AVAILABLE_COLUMN.into()),
            attributes,
        }
    }

    /// Standard key columns; every other header becomes an attribute.
    pub fn infer(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let keys = [
            PERSON_COLUMN,
            TASK_COLUMN,
            ALT_COLUMN,
            CHOSEN_COLUMN,
            AVAILABLE_COLUMN,
        ];
        let attributes = reader
            .headers()?
            .iter()
            .filter(|h| !keys.contains(h))
            .map(str::to_string)
            .collect();
        Ok(Self::standard(attributes))
    }
}

fn parse_flag(raw: &str, column: &str, person: &str, task: &str) -> Result<bool> {
    match raw.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::Integrity {
            person: person.into(),
            task: task.into(),
            reason: format!("column `{column}` must be 0 or 1, got `{other}`"),
        }),
    }
}

/// Reads a long-format choice CSV.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ChoiceDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    };
    let person_col = col(&schema.person)?;
    let task_col = col(&schema.task)?;
    let alt_col = col(&schema.alternative)?;
    let chosen_col = col(&schema.chosen)?;
    let available_col = schema
        .available
        .as_deref()
        .and_then(|name| headers.iter().position(|h| h == name));
    let attr_cols = schema
        .attributes
        .iter()
        .map(|a| col(a))
        .collect::<Result<Vec<_>>>()?;

    struct Pending {
        task_id: String,
        alt_ids: Vec<String>,
        attributes: Vec<f64>,
        available: Vec<bool>,
        chosen: Vec<usize>,
    }
    let mut persons: Vec<(String, Vec<Pending>)> = Vec::new();
    let mut person_index: HashMap<String, usize> = HashMap::new();
    let mut task_index: HashMap<(usize, String), usize> = HashMap::new();

    for record in reader.records() {
        let record = record?;
        let person = record[person_col].to_string();
        let task = record[task_col].to_string();
        let p = *person_index.entry(person.clone()).or_insert_with(|| {
            persons.push((person.clone(), Vec::new()));
            persons.len() - 1
        });
        let t = *task_index.entry((p, task.clone())).or_insert_with(|| {
            persons[p].1.push(Pending {
                task_id: task.clone(),
                alt_ids: Vec::new(),
                attributes: Vec::new(),
                available: Vec::new(),
                chosen: Vec::new(),
            });
            persons[p].1.len() - 1
        });
        let pending = &mut persons[p].1[t];
        if parse_flag(&record[chosen_col], &schema.chosen, &person, &task)? {
            pending.chosen.push(pending.alt_ids.len());
        }
        let available = match available_col {
            Some(c) => parse_flag(&record[c], AVAILABLE_COLUMN, &person, &task)?,
            None => true,
        };
        pending.available.push(available);
        pending.alt_ids.push(record[alt_col].to_string());
        for (&c, name) in attr_cols.iter().zip(&schema.attributes) {
            let raw = record[c].trim();
            let v: f64 = raw.parse().map_err(|_| Error::Integrity {
                person: person.clone(),
                task: task.clone(),
                reason: format!("attribute `{name}` is not a number: `{raw}`"),
            })?;
            pending.attributes.push(v);
        }
    }

    let mut out = Vec::with_capacity(persons.len());
    for (person_id, tasks) in persons {
        let mut built = Vec::with_capacity(tasks.len());
        for t in tasks {
            if t.chosen.len() != 1 {
                return Err(Error::Integrity {
                    person: person_id,
                    task: t.task_id,
                    reason: format!("expected exactly one chosen row, found {}", t.chosen.len()),
                });
            }
            built.push(ChoiceTask {
                task_id: t.task_id,
                alt_ids: t.alt_ids,
                attributes: t.attributes,
                available: t.available,
                chosen: t.chosen[0],
            });
        }
        out.push(PersonRecord {
            person_id,
            tasks: built,
        });
    }
    let labels = common_alternative_labels(&out);
    ChoiceDataset::new(out, schema.attributes.clone(), labels)
}

fn common_alternative_labels(persons: &[PersonRecord]) -> Option<Vec<String>> {
    let mut tasks = persons.iter().flat_map(|p| &p.tasks);
    let first = tasks.next()?.alt_ids.clone();
    tasks.all(|t| t.alt_ids == first).then_some(first)
}

/// Serializes a dataset in the long CSV format (standard column names).
pub fn to_csv_string(ds: &ChoiceDataset) -> String {
    let width = ds.n_attributes();
    let mut out = String::new();
    out.push_str("person_id,task_id,alt_id,chosen,available");
    for a in &ds.attribute_names {
        out.push(',');
        out.push_str(a);
    }
    out.push('\n');
    for p in &ds.persons {
        for t in &p.tasks {
            for j in 0..t.n_alternatives() {
                let _ = write!(
                    out,
                    "{},{},{},{},{}",
                    p.person_id,
                    t.task_id,
                    t.alt_ids[j],
                    u8::from(j == t.chosen),
                    u8::from(t.available[j])
                );
                for v in t.row(j, width) {
                    // shortest representation that round-trips exactly
                    let _ = write!(out, ",{v:?}");
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn write_csv(ds: &ChoiceDataset, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), to_csv_string(ds).as_bytes())
}

/// By-person train/validation split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    #[serde(default = "default_validation_tasks")]
    pub validation_tasks_per_person: usize,
    pub seed: u64,
}

fn default_validation_tasks() -> usize {
    1
}

/// Splits persons into disjoint training and validation sets.
///
/// The training set holds `floor(train_fraction · N)` persons with all of
/// their tasks. Every remaining person contributes exactly
/// `validation_tasks_per_person` randomly chosen tasks; their other tasks
/// are dropped from both samples.
pub fn split_train_validation(
    ds: &ChoiceDataset,
    spec: &SplitSpec,
) -> Result<(ChoiceDataset, ChoiceDataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if spec.validation_tasks_per_person == 0 {
        return Err(Error::Config("validation_tasks_per_person must be positive".into()));
    }
    let n = ds.n_persons();
    // tolerance absorbs representation error in fractions like 1207/1507
    let n_train = (spec.train_fraction * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 {
        return Err(Error::Config(format!(
            "train_fraction {} leaves no training persons out of {n}",
            spec.train_fraction
        )));
    }
    if n_train >= n {
        return Err(Error::Config(format!(
            "train_fraction {} leaves no validation persons out of {n}",
            spec.train_fraction
        )));
    }
    let mut rng = RandomStream::new(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut train_idx = order[..n_train].to_vec();
    let mut valid_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    valid_idx.sort_unstable();

    let train = train_idx.iter().map(|&i| ds.persons[i].clone()).collect();
    let mut validation = Vec::with_capacity(valid_idx.len());
    for &i in &valid_idx {
        let person = &ds.persons[i];
        let k = spec.validation_tasks_per_person;
        if person.tasks.len() < k {
            return Err(Error::Config(format!(
                "person `{}` has {} tasks but {k} validation tasks were requested",
                person.person_id,
                person.tasks.len()
            )));
        }
        let mut picks: Vec<usize> = (0..person.tasks.len()).collect();
        rng.shuffle(&mut picks);
        let mut picks = picks[..k].to_vec();
        picks.sort_unstable();
        validation.push(PersonRecord {
            person_id: person.person_id.clone(),
            tasks: picks.iter().map(|&t| person.tasks[t].clone()).collect(),
        });
    }
    Ok((
        ChoiceDataset::new(train, ds.attribute_names.clone(), ds.alternative_labels.clone())?,
        ChoiceDataset::new(
            validation,
            ds.attribute_names.clone(),
            ds.alternative_labels.clone(),
        )?,
    ))
}
