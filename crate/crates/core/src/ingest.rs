//! Loading raw notes and tracking how many survive each pipeline stage.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One raw procedure note as exported from the EHR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub note_id: String,
    #[serde(default)]
    pub patient_id: String,
    #[serde(default)]
    pub timestamp: Option<String>,
    #[serde(rename = "text")]
    pub raw_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    /// Guess from the file extension; anything other than `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown input format {other:?}"))),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::Jsonl => "jsonl",
            InputFormat::Csv => "csv",
        })
    }
}

/// Stage at which a note left the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropStage {
    NoImpression,
    EmptyAfterPreprocess,
    EmptyAfterVectorize,
}

impl DropStage {
    pub fn as_str(self) -> &'static str {
        match self {
            DropStage::NoImpression => "no_impression",
            DropStage::EmptyAfterPreprocess => "empty_after_preprocess",
            DropStage::EmptyAfterVectorize => "empty_after_vectorize",
        }
    }
}

/// Note-count funnel: loaded, carrying an impression, non-empty after preprocessing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_notes: usize,
    pub notes_with_impression: usize,
    pub notes_nonempty_after_preprocess: usize,
    pub dropped_note_ids: Vec<(String, DropStage)>,
}

impl CorpusStats {
    pub fn new(total_notes: usize) -> Self {
        CorpusStats {
            total_notes,
            ..Default::default()
        }
    }

    pub fn record_drop(&mut self, note_id: impl Into<String>, stage: DropStage) {
        self.dropped_note_ids.push((note_id.into(), stage));
    }

    pub fn drops_at(&self, stage: DropStage) -> usize {
        self.dropped_note_ids.iter().filter(|(_, s)| *s == stage).count()
    }

    /// Checks monotonicity and that every dropped id is listed exactly once.
    pub fn is_consistent(&self) -> bool {
        let mut seen = HashSet::new();
        let unique = self.dropped_note_ids.iter().all(|(id, _)| seen.insert(id.as_str()));
        unique
            && self.total_notes >= self.notes_with_impression
            && self.notes_with_impression >= self.notes_nonempty_after_preprocess
            && self.total_notes - self.notes_with_impression == self.drops_at(DropStage::NoImpression)
            && self.notes_with_impression - self.notes_nonempty_after_preprocess
                == self.drops_at(DropStage::EmptyAfterPreprocess)
    }
}

/// Render the three funnel counts with per-stage drop counts.
///
/// ```
/// use notemine::ingest::{funnel_report, CorpusStats};
///
/// let stats = CorpusStats {
///     total_notes: 12000,
///     notes_with_impression: 5000,
///     notes_nonempty_after_preprocess: 4800,
///     dropped_note_ids: Vec::new(),
/// };
/// let text = funnel_report(&stats);
/// assert!(text.contains("notes loaded                 12000"));
/// assert!(text.contains("with IMPRESSION section       5000  (dropped 7000: no_impression)"));
/// assert!(text.contains("non-empty after preprocess    4800  (dropped 200: empty_after_preprocess)"));
/// ```
pub fn funnel_report(stats: &CorpusStats) -> String {
    let no_imp = stats.total_notes.saturating_sub(stats.notes_with_impression);
    let emptied = stats
        .notes_with_impression
        .saturating_sub(stats.notes_nonempty_after_preprocess);
    let mut out = String::new();
    let _ = writeln!(out, "notes loaded                 {:>5}", stats.total_notes);
    let _ = writeln!(
        out,
        "with IMPRESSION section      {:>5}  (dropped {}: {})",
        stats.notes_with_impression,
        no_imp,
        DropStage::NoImpression.as_str()
    );
    let _ = writeln!(
        out,
        "non-empty after preprocess   {:>5}  (dropped {}: {})",
        stats.notes_nonempty_after_preprocess,
        emptied,
        DropStage::EmptyAfterPreprocess.as_str()
    );
    let pruned = stats.drops_at(DropStage::EmptyAfterVectorize);
    if pruned > 0 {
        let _ = writeln!(
            out,
            "removed after vectorizing    {:>5}  ({})",
            pruned,
            DropStage::EmptyAfterVectorize.as_str()
        );
    }
    out
}

/// Load notes in file order. Duplicate ids, missing fields and empty text are errors.
pub fn load_corpus(path: &Path, format: InputFormat) -> Result<Vec<ClinicalNote>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let notes = match format {
        InputFormat::Jsonl => read_jsonl(path, BufReader::new(file))?,
        InputFormat::Csv => read_csv(path, file)?,
    };
    Ok(notes)
}

fn check_note(path: &Path, line: usize, note: &ClinicalNote, seen: &mut HashSet<String>) -> Result<()> {
    if note.note_id.is_empty() {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: "empty note_id".into(),
        });
    }
    if note.raw_text.is_empty() {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("note {:?} has empty text", note.note_id),
        });
    }
    if !seen.insert(note.note_id.clone()) {
        return Err(Error::DuplicateNote {
            note_id: note.note_id.clone(),
            line,
        });
    }
    Ok(())
}

fn read_jsonl(path: &Path, reader: impl BufRead) -> Result<Vec<ClinicalNote>> {
    let mut notes = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let note: ClinicalNote = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        check_note(path, lineno, &note, &mut seen)?;
        notes.push(note);
    }
    Ok(notes)
}

fn read_csv(path: &Path, file: File) -> Result<Vec<ClinicalNote>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut notes = Vec::new();
    let mut seen = HashSet::new();
    let malformed = |line: usize, e: csv::Error| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(|e| malformed(1, e))?.clone();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line() as usize;
        if !rdr.read_record(&mut record).map_err(|e| malformed(line, e))? {
            break;
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(line);
        let row: CsvRow = record.deserialize(Some(&headers)).map_err(|e| malformed(line, e))?;
        let note = ClinicalNote {
            note_id: row.note_id,
            patient_id: row.patient_id.unwrap_or_default(),
            timestamp: row.timestamp.filter(|t| !t.is_empty()),
            raw_text: row.text,
        };
        check_note(path, line, &note, &mut seen)?;
        notes.push(note);
    }
    Ok(notes)
}

#[derive(Deserialize)]
struct CsvRow {
    note_id: String,
    #[serde(default)]
    patient_id: Option<String>,
    #[serde(default)]
    timestamp: Option<String>,
    text: String,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl_items<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const SAMPLE_NOTE: &str = "EXAM: Chest one view frontal 24.: sob\nFINDINGS: Compared to the examination of August 20 significant interval resolution of previously noted increased pulmonary vascular markings associated with pulmonary edema. There are no new infiltrates. Residual linear density left base could be from the skull atelectasis.\nIMPRESSION: Interval resolution of the findings of pulmonary edema with no new infiltrates.";

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_records_in_order() {
        let f = write_tmp(
            r#"{"note_id":"a","patient_id":"p1","timestamp":null,"text":"one"}
{"note_id":"b","patient_id":"p1","timestamp":"2020-01-01T00:00:00","text":"two"}
{"note_id":"c","patient_id":"p2","timestamp":null,"text":"three"}
"#,
            ".jsonl",
        );
        let notes = load_corpus(f.path(), InputFormat::Jsonl).unwrap();
        assert_eq!(notes.len(), 3);
        let ids: Vec<_> = notes.iter().map(|n| n.note_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(notes[1].timestamp.as_deref(), Some("2020-01-01T00:00:00"));
        assert_eq!(CorpusStats::new(notes.len()).total_notes, 3);
    }

    #[test]
    fn example_note_round_trips_byte_identically() {
        let rec = ClinicalNote {
            note_id: "n1".into(),
            patient_id: "p".into(),
            timestamp: None,
            raw_text: SAMPLE_NOTE.into(),
        };
        let f = tempfile::Builder::new().suffix(".jsonl").tempfile().unwrap();
        write_jsonl(f.path(), &[rec]).unwrap();
        let notes = load_corpus(f.path(), InputFormat::Jsonl).unwrap();
        assert_eq!(notes[0].raw_text.as_bytes(), SAMPLE_NOTE.as_bytes());
    }

    #[test]
    fn missing_note_id_names_the_line() {
        let f = write_tmp(
            "{\"note_id\":\"a\",\"text\":\"x\"}\n{\"patient_id\":\"p\",\"text\":\"y\"}\n",
            ".jsonl",
        );
        let err = load_corpus(f.path(), InputFormat::Jsonl).unwrap_err();
        match err {
            Error::Malformed { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("note_id"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_tmp(
            "{\"note_id\":\"a\",\"text\":\"x\"}\n{\"note_id\":\"a\",\"text\":\"y\"}\n",
            ".jsonl",
        );
        assert!(matches!(
            load_corpus(f.path(), InputFormat::Jsonl),
            Err(Error::DuplicateNote { line: 2, .. })
        ));
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let err = load_corpus(Path::new("/nonexistent/notes.jsonl"), InputFormat::Jsonl).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn csv_with_quoted_multiline_text() {
        let f = write_tmp(
            "note_id,patient_id,timestamp,text\nn1,p1,,\"EXAM: x\nIMPRESSION: Mild, \"\"stable\"\" edema.\"\nn2,p2,2021-03-04,plain\n",
            ".csv",
        );
        assert_eq!(InputFormat::from_path(f.path()), InputFormat::Csv);
        let notes = load_corpus(f.path(), InputFormat::Csv).unwrap();
        assert_eq!(notes.len(), 2);
        assert_eq!(notes[0].raw_text, "EXAM: x\nIMPRESSION: Mild, \"stable\" edema.");
        assert_eq!(notes[0].timestamp, None);
        assert_eq!(notes[1].timestamp.as_deref(), Some("2021-03-04"));
    }

    #[test]
    fn csv_missing_column_is_malformed() {
        let f = write_tmp("note_id,patient_id\nn1,p1\n", ".csv");
        assert!(matches!(
            load_corpus(f.path(), InputFormat::Csv),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn funnel_with_no_drops_shows_equal_counts() {
        let stats = CorpusStats {
            total_notes: 42,
            notes_with_impression: 42,
            notes_nonempty_after_preprocess: 42,
            dropped_note_ids: vec![],
        };
        let text = funnel_report(&stats);
        assert_eq!(text.matches("   42").count(), 3);
        assert!(text.contains("dropped 0: no_impression"));
        assert!(stats.is_consistent());
    }
}
