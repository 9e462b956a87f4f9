use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRIPLE_CSV_HEADER: [&str; 8] = [
    "subject",
    "predicate",
    "object",
    "source_chunk_id",
    "status",
    "precision",
    "completeness",
    "relevance",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    #[default]
    Pending,
    Approved,
    Rejected,
}

impl ReviewStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewStatus::Pending => "pending",
            ReviewStatus::Approved => "approved",
            ReviewStatus::Rejected => "rejected",
        }
    }
}

impl fmt::Display for ReviewStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReviewStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pending" => Ok(ReviewStatus::Pending),
            "approved" => Ok(ReviewStatus::Approved),
            "rejected" => Ok(ReviewStatus::Rejected),
            other => Err(format!(
                "unknown status `{other}` (expected pending, approved or rejected)"
            )),
        }
    }
}

/// Expert review judgements. `None` means not yet assessed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ReviewFlags {
    pub precision: Option<bool>,
    pub completeness: Option<bool>,
    pub relevance: Option<bool>,
}

impl ReviewFlags {
    pub fn all(value: bool) -> Self {
        Self {
            precision: Some(value),
            completeness: Some(value),
            relevance: Some(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub source_chunk_id: String,
    pub status: ReviewStatus,
    #[serde(default)]
    pub flags: ReviewFlags,
}

impl Triple {
    /// A pending triple with trimmed fields; fails if any field is blank.
    pub fn new(
        subject: &str,
        predicate: &str,
        object: &str,
        source_chunk_id: &str,
    ) -> std::result::Result<Self, String> {
        let (s, p, o) = (subject.trim(), predicate.trim(), object.trim());
        for (name, value) in [("subject", s), ("predicate", p), ("object", o)] {
            if value.is_empty() {
                return Err(format!("{name} is empty"));
            }
        }
        Ok(Self {
            subject: s.to_string(),
            predicate: p.to_string(),
            object: o.to_string(),
            source_chunk_id: source_chunk_id.trim().to_string(),
            status: ReviewStatus::Pending,
            flags: ReviewFlags::default(),
        })
    }

    pub fn with_status(mut self, status: ReviewStatus) -> Self {
        self.status = status;
        self
    }

    fn same_statement(&self, other: &Triple) -> bool {
        self.subject == other.subject
            && self.predicate == other.predicate
            && self.object == other.object
            && self.source_chunk_id == other.source_chunk_id
    }
}

fn flag_to_str(flag: Option<bool>) -> &'static str {
    match flag {
        None => "",
        Some(true) => "true",
        Some(false) => "false",
    }
}

fn parse_flag(name: &str, raw: &str) -> std::result::Result<Option<bool>, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "true" | "yes" | "y" | "1" => Ok(Some(true)),
        "false" | "no" | "n" | "0" => Ok(Some(false)),
        other => Err(format!("{name} flag `{other}` is not a boolean")),
    }
}

pub fn export_triples_csv(triples: &[Triple]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(TRIPLE_CSV_HEADER)?;
    for t in triples {
        writer.write_record([
            t.subject.as_str(),
            t.predicate.as_str(),
            t.object.as_str(),
            t.source_chunk_id.as_str(),
            t.status.as_str(),
            flag_to_str(t.flags.precision),
            flag_to_str(t.flags.completeness),
            flag_to_str(t.flags.relevance),
        ])?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub triples: Vec<Triple>,
    pub errors: Vec<RowError>,
}

/// Parses triple CSV. Bad rows are reported with their line number and
/// skipped; only a bad header fails the whole import.
pub fn import_triples_csv(bytes: &[u8]) -> Result<ImportReport> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(bytes);
    let header = reader.headers()?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != TRIPLE_CSV_HEADER {
        return Err(Error::InvalidRequest(format!(
            "triple CSV header must be `{}`, got `{}`",
            TRIPLE_CSV_HEADER.join(","),
            got.join(",")
        )));
    }
    let mut report = ImportReport::default();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(line, |p| p.line());
                match triple_from_record(&record) {
                    Ok(t) => report.triples.push(t),
                    Err(message) => report.errors.push(RowError { line, message }),
                }
            }
            Err(e) => {
                let line = e.position().map_or(line, |p| p.line());
                report.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                if !matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) {
                    break;
                }
            }
        }
    }
    Ok(report)
}

fn triple_from_record(record: &csv::StringRecord) -> std::result::Result<Triple, String> {
    if record.len() != TRIPLE_CSV_HEADER.len() {
        return Err(format!(
            "expected {} columns, found {}",
            TRIPLE_CSV_HEADER.len(),
            record.len()
        ));
    }
    let mut triple = Triple::new(&record[0], &record[1], &record[2], &record[3])?;
    triple.status = record[4].parse()?;
    triple.flags = ReviewFlags {
        precision: parse_flag("precision", &record[5])?,
        completeness: parse_flag("completeness", &record[6])?,
        relevance: parse_flag("relevance", &record[7])?,
    };
    Ok(triple)
}

/// The review workflow's triple list. A triple's id is its position in the
/// list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleStore {
    triples: Vec<Triple>,
}

impl TripleStore {
    pub fn new(triples: Vec<Triple>) -> Self {
        Self { triples }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Triple> {
        self.triples.get(id)
    }

    pub fn count(&self, status: ReviewStatus) -> usize {
        self.triples.iter().filter(|t| t.status == status).count()
    }

    /// Records a review decision. Only pending triples may change status;
    /// repeating the current decision just updates the flags.
    pub fn set_review_status(
        &mut self,
        id: usize,
        status: ReviewStatus,
        flags: ReviewFlags,
    ) -> Result<&Triple> {
        let triple = self.triples.get_mut(id).ok_or(Error::TripleNotFound(id))?;
        let allowed = status != ReviewStatus::Pending
            && (triple.status == ReviewStatus::Pending || triple.status == status);
        if !allowed {
            return Err(Error::InvalidTransition {
                id,
                from: triple.status.as_str(),
                to: status.as_str(),
            });
        }
        triple.status = status;
        triple.flags = flags;
        Ok(triple)
    }

    /// Replaces the pending triples extracted from `chunk_id` with `fresh`.
    /// Reviewed triples stay, and fresh duplicates of them are dropped.
    pub fn replace_pending_for_chunk(&mut self, chunk_id: &str, fresh: Vec<Triple>) {
        self.triples
            .retain(|t| !(t.source_chunk_id == chunk_id && t.status == ReviewStatus::Pending));
        for t in fresh {
            let reviewed_dup = self
                .triples
                .iter()
                .any(|r| r.status != ReviewStatus::Pending && r.same_statement(&t));
            if !reviewed_dup {
                self.triples.push(t);
            }
        }
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<RowError>)> {
        if !path.exists() {
            return Ok((Self::default(), Vec::new()));
        }
        let report = import_triples_csv(&fs::read(path)?)?;
        Ok((Self::new(report.triples), report.errors))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, export_triples_csv(&self.triples)?)?;
        Ok(())
    }
}
