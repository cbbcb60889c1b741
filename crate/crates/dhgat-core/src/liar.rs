//! News statement records: the six-way truthfulness scale, attribute
//! normalization, and tab-separated record parsing.
//!
//! Labels are ordinal; index distance is meaningful and feeds the
//! expected-label error term of the loss.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const CLASS_COUNT: usize = 6;

/// Class names in ordinal order, least to most truthful.
pub const LABEL_NAMES: [&str; CLASS_COUNT] =
    ["pants-fire", "false", "barely-true", "half-true", "mostly-true", "true"];

pub fn label_from_name(name: &str) -> Result<u8> {
    LABEL_NAMES
        .iter()
        .position(|&l| l == name)
        .map(|i| i as u8)
        .ok_or_else(|| Error::UnknownLabel(String::from(name)))
}

pub fn label_name(label: u8) -> &'static str {
    LABEL_NAMES[label as usize]
}

/// Lowercases, trims, and collapses internal whitespace runs to one space.
pub fn normalize_attribute(s: &str) -> String {
    let lower: String = s.chars().flat_map(char::to_lowercase).collect();
    let mut out = String::with_capacity(lower.len());
    for part in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(part);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewsRecord {
    pub id: String,
    pub label: u8,
    pub statement: String,
    /// Normalized, deduplicated, sorted.
    pub subjects: Vec<String>,
    pub speaker: String,
    pub job_title: String,
    pub state: String,
    pub party: String,
    /// Historical counts: barely-true, false, half-true, mostly-true,
    /// pants-fire. Carried through but not used for graph construction.
    pub credit_counts: [u32; 5],
    pub context: String,
}

const FIELD_COUNT: usize = 14;

/// Parses one 14-field tab-separated line. `row` is 1-based for messages.
pub fn parse_record(line: &str, row: usize) -> Result<NewsRecord> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != FIELD_COUNT {
        return Err(Error::Dimension { row, expected: FIELD_COUNT, got: fields.len() });
    }
    let label = label_from_name(&normalize_attribute(fields[1])).map_err(|e| match e {
        Error::UnknownLabel(l) => Error::Parse {
            row,
            message: alloc::format!("unknown label {l:?}"),
        },
        other => other,
    })?;
    let mut subjects: Vec<String> = fields[3]
        .split(',')
        .map(normalize_attribute)
        .filter(|s| !s.is_empty())
        .collect();
    subjects.sort();
    subjects.dedup();

    let mut credit_counts = [0u32; 5];
    for (slot, &raw) in credit_counts.iter_mut().zip(&fields[8..13]) {
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        *slot = t.parse::<u32>().map_err(|_| Error::Parse {
            row,
            message: alloc::format!("credit count {t:?} is not a non-negative integer"),
        })?;
    }

    Ok(NewsRecord {
        id: String::from(fields[0].trim()),
        label,
        statement: String::from(fields[2].trim()),
        subjects,
        speaker: normalize_attribute(fields[4]),
        job_title: normalize_attribute(fields[5]),
        state: normalize_attribute(fields[6]),
        party: normalize_attribute(fields[7]),
        credit_counts,
        context: normalize_attribute(fields[13]),
    })
}

/// Single-valued attributes that define relations between statements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attr {
    Speaker,
    Context,
    Subject,
    Party,
    JobTitle,
    State,
}

impl Attr {
    pub const ALL: [Attr; 6] =
        [Attr::Speaker, Attr::Context, Attr::Subject, Attr::Party, Attr::JobTitle, Attr::State];

    pub fn name(self) -> &'static str {
        match self {
            Attr::Speaker => "speaker",
            Attr::Context => "context",
            Attr::Subject => "subject",
            Attr::Party => "party",
            Attr::JobTitle => "job-title",
            Attr::State => "state",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<NewsRecord>,
}

impl Dataset {
    pub fn new(records: Vec<NewsRecord>) -> Self {
        Dataset { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> [usize; CLASS_COUNT] {
        let mut counts = [0usize; CLASS_COUNT];
        for r in &self.records {
            counts[r.label as usize] += 1;
        }
        counts
    }

    /// Per-node attribute values; empty values mean "no edges here".
    /// Subjects may carry several values per node, the rest at most one.
    pub fn attribute_values(&self, attr: Attr) -> Vec<Vec<String>> {
        self.records
            .iter()
            .map(|r| match attr {
                Attr::Subject => r.subjects.clone(),
                Attr::Speaker => single(&r.speaker),
                Attr::Context => single(&r.context),
                Attr::Party => single(&r.party),
                Attr::JobTitle => single(&r.job_title),
                Attr::State => single(&r.state),
            })
            .collect()
    }

    pub fn distinct_speakers(&self) -> usize {
        let mut speakers: Vec<&str> = self
            .records
            .iter()
            .map(|r| r.speaker.as_str())
            .filter(|s| !s.is_empty())
            .collect();
        speakers.sort_unstable();
        speakers.dedup();
        speakers.len()
    }
}

fn single(v: &str) -> Vec<String> {
    if v.is_empty() {
        Vec::new()
    } else {
        alloc::vec![String::from(v)]
    }
}
