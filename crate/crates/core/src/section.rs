//! Section parsing (EXAM / FINDINGS / IMPRESSION), sentence splitting and
//! token normalization.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ClinicalNote;

const ENGLISH_STOPWORDS: &str = include_str!("../data/english_stopwords.txt");
const CLINICAL_GENERIC: &str = include_str!("../data/clinical_generic.txt");

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SectionLabel {
    Exam,
    Findings,
    Impression,
    Custom(String),
    Other,
}

impl SectionLabel {
    fn from_matched(text: &str) -> Self {
        match text.to_ascii_uppercase().as_str() {
            "EXAM" => SectionLabel::Exam,
            "FINDINGS" => SectionLabel::Findings,
            "IMPRESSION" => SectionLabel::Impression,
            other => SectionLabel::Custom(other.to_string()),
        }
    }
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SectionLabel::Exam => f.write_str("EXAM"),
            SectionLabel::Findings => f.write_str("FINDINGS"),
            SectionLabel::Impression => f.write_str("IMPRESSION"),
            SectionLabel::Custom(s) => f.write_str(s),
            SectionLabel::Other => f.write_str("OTHER"),
        }
    }
}

/// Byte range into the note's raw text plus the extracted (trimmed) string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedNote {
    pub note_id: String,
    pub sections: BTreeMap<SectionLabel, Span>,
}

impl ParsedNote {
    pub fn impression(&self) -> &str {
        self.sections
            .get(&SectionLabel::Impression)
            .map(|s| s.text.as_str())
            .unwrap_or("")
    }
}

/// Recognizes section labels. A label counts when it is followed by a colon
/// (at line start or after whitespace), or when it stands alone on its line.
#[derive(Debug, Clone)]
pub struct Sectioner {
    pattern: Regex,
}

impl Default for Sectioner {
    fn default() -> Self {
        Sectioner::new(&[]).expect("default labels compile")
    }
}

impl Sectioner {
    pub fn new(extra_labels: &[String]) -> Result<Self> {
        let mut labels: Vec<String> = ["EXAM", "FINDINGS", "IMPRESSION"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for l in extra_labels {
            let l = l.trim();
            if l.is_empty() {
                continue;
            }
            if !l.chars().all(|c| c.is_alphanumeric() || c == ' ' || c == '_') {
                return Err(Error::InvalidArgument(format!("section label {l:?}")));
            }
            labels.push(l.to_ascii_uppercase());
        }
        // Longer labels first so "CLINICAL HISTORY" wins over "HISTORY".
        labels.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        labels.dedup();
        let alt = labels.iter().map(|l| regex::escape(l)).collect::<Vec<_>>().join("|");
        let pattern = Regex::new(&format!(
            r"(?im)(?:^|\s)(?P<a>{alt})[ \t]*:|^[ \t]*(?P<b>{alt})[ \t]*\r?$"
        ))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Sectioner { pattern })
    }

    /// Split a note into labelled spans. Text before the first label is OTHER.
    pub fn parse(&self, note_id: &str, raw: &str) -> ParsedNote {
        // (label, label start, content start)
        let mut marks: Vec<(SectionLabel, usize, usize)> = Vec::new();
        for caps in self.pattern.captures_iter(raw) {
            let Some(m) = caps.name("a").or_else(|| caps.name("b")) else {
                continue;
            };
            let whole = caps.get(0).expect("group 0");
            marks.push((SectionLabel::from_matched(m.as_str()), m.start(), whole.end()));
        }
        let mut sections = BTreeMap::new();
        let first_label = marks.first().map(|m| m.1).unwrap_or(raw.len());
        if let Some(span) = trimmed_span(raw, 0, first_label) {
            sections.insert(SectionLabel::Other, span);
        }
        for (i, (label, _, content_start)) in marks.iter().enumerate() {
            let end = marks.get(i + 1).map(|m| m.1).unwrap_or(raw.len());
            if let Some(span) = trimmed_span(raw, *content_start, end) {
                sections.entry(label.clone()).or_insert(span);
            }
        }
        ParsedNote {
            note_id: note_id.to_string(),
            sections,
        }
    }

    /// Returns the parsed note only when it carries a non-empty IMPRESSION.
    pub fn extract_impression(&self, note: &ClinicalNote) -> Option<ParsedNote> {
        let parsed = self.parse(&note.note_id, &note.raw_text);
        parsed
            .sections
            .contains_key(&SectionLabel::Impression)
            .then_some(parsed)
    }
}

fn trimmed_span(raw: &str, start: usize, end: usize) -> Option<Span> {
    let slice = &raw[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        return None;
    }
    let s = start + lead;
    Some(Span {
        start: s,
        end: s + trimmed.len(),
        text: trimmed.to_string(),
    })
}

/// Split impression text into sentences on `. ! ? ;` and newlines.
///
/// A period between two digits is part of a decimal number. A run of digits
/// directly followed by a period at the start of an item is a list marker and
/// is discarded. Fragments without any alphanumeric character are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<String>| {
        let s = cur.trim();
        if s.chars().any(char::is_alphanumeric) {
            out.push(s.to_string());
        }
        cur.clear();
    };
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '.' => {
                let prev_digit = i > 0 && chars[i - 1].is_ascii_digit();
                let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
                if prev_digit && next_digit {
                    cur.push(c);
                } else if prev_digit && cur.trim().chars().all(|ch| ch.is_ascii_digit()) {
                    // "2." opening a numbered item
                    cur.clear();
                } else {
                    flush(&mut cur, &mut out);
                }
            }
            '!' | '?' | ';' | '\n' | '\r' => flush(&mut cur, &mut out),
            _ => cur.push(c),
        }
    }
    flush(&mut cur, &mut out);
    out
}

/// Set of tokens removed during normalization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stoplist {
    words: HashSet<String>,
}

impl Stoplist {
    /// Standard English stop words plus the generic EHR vocabulary.
    pub fn bundled() -> Self {
        let mut s = Self::parse(ENGLISH_STOPWORDS);
        s.words.extend(Self::parse(CLINICAL_GENERIC).words);
        s
    }

    /// English function words only.
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn clinical_generic() -> Self {
        Self::parse(CLINICAL_GENERIC)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// One token per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Stoplist { words }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn extend(&mut self, other: &Stoplist) {
        self.words.extend(other.words.iter().cloned());
    }

    /// Sorted, one per line.
    pub fn to_text(&self) -> String {
        let mut w: Vec<_> = self.words.iter().map(String::as_str).collect();
        w.sort_unstable();
        let mut s = w.join("\n");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct Normalizer {
    pub stoplist: Stoplist,
    pub split_hyphens: bool,
    pub stem: bool,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            stoplist: Stoplist::bundled(),
            split_hyphens: false,
            stem: false,
        }
    }
}

impl Normalizer {
    pub fn new(stoplist: Stoplist) -> Self {
        Normalizer {
            stoplist,
            ..Default::default()
        }
    }

    /// Lowercase, strip digits and punctuation (underscores survive), drop
    /// emptied tokens, optionally stem. Does not consult the stoplist.
    pub fn clean(&self, tokens: &[impl AsRef<str>]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let mut piece = String::new();
            for c in tok.as_ref().chars() {
                if c.is_alphabetic() || c == '_' {
                    // some capitals lower to a letter plus a combining mark
                    piece.extend(c.to_lowercase().filter(|l| l.is_alphabetic() || *l == '_'));
                } else if self.split_hyphens && matches!(c, '-' | '/' | '\u{2010}'..='\u{2014}') {
                    self.push_piece(&mut piece, &mut out);
                }
            }
            self.push_piece(&mut piece, &mut out);
        }
        out
    }

    fn push_piece(&self, piece: &mut String, out: &mut Vec<String>) {
        let t = piece.trim_matches('_');
        if t.chars().any(char::is_alphabetic) {
            let t = if self.stem { s_stem(t) } else { t.to_string() };
            out.push(t);
        }
        piece.clear();
    }

    pub fn remove_stopwords(&self, tokens: Vec<String>) -> Vec<String> {
        tokens.into_iter().filter(|t| !self.stoplist.contains(t)).collect()
    }

    /// `clean` followed by stoplist removal.
    pub fn normalize(&self, tokens: &[impl AsRef<str>]) -> Vec<String> {
        self.remove_stopwords(self.clean(tokens))
    }

    /// Whitespace-split then `clean` each sentence; empty sentences vanish.
    pub fn clean_sentences(&self, sentences: &[String]) -> Vec<Vec<String>> {
        sentences
            .iter()
            .map(|s| self.clean(&s.split_whitespace().collect::<Vec<_>>()))
            .filter(|s| !s.is_empty())
            .collect()
    }
}

/// Plural-stripping stemmer: -ies → -y, -es → -e, -s → "" with the usual
/// exceptions (-aies/-eies, -aes/-ees/-oes, -us/-ss).
pub fn s_stem(word: &str) -> String {
    let n = word.len();
    if n > 3 && word.ends_with("ies") && !word.ends_with("eies") && !word.ends_with("aies") {
        return format!("{}y", &word[..n - 3]);
    }
    if n > 3
        && word.ends_with("es")
        && !word.ends_with("aes")
        && !word.ends_with("ees")
        && !word.ends_with("oes")
    {
        return word[..n - 1].to_string();
    }
    if n > 2 && word.ends_with('s') && !word.ends_with("us") && !word.ends_with("ss") {
        return word[..n - 1].to_string();
    }
    word.to_string()
}

/// Normalized token sequence for one note, grouped by sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub note_id: String,
    pub sentences: Vec<Vec<String>>,
}

impl TokenizedDoc {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.iter().all(Vec::is_empty)
    }

    /// Drop empty sentences in place.
    pub fn compact(&mut self) {
        self.sentences.retain(|s| !s.is_empty());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE_NOTE: &str = "EXAM: Chest one view frontal 24.: sob\nFINDINGS: Compared to the examination of August 20 significant interval resolution of previously noted increased pulmonary vascular markings associated with pulmonary edema. There are no new infiltrates. Residual linear density left base could be from the skull atelectasis.\nIMPRESSION: Interval resolution of the findings of pulmonary edema with no new infiltrates.";

    fn note(text: &str) -> ClinicalNote {
        ClinicalNote {
            note_id: "n".into(),
            patient_id: String::new(),
            timestamp: None,
            raw_text: text.into(),
        }
    }

    #[test]
    fn extracts_example_impression() {
        let parsed = Sectioner::default().extract_impression(&note(SAMPLE_NOTE)).unwrap();
        assert_eq!(
            parsed.impression(),
            "Interval resolution of the findings of pulmonary edema with no new infiltrates."
        );
        assert_eq!(
            parsed.sections[&SectionLabel::Exam].text,
            "Chest one view frontal 24.: sob"
        );
        assert!(parsed.sections[&SectionLabel::Findings].text.starts_with("Compared to"));
    }

    #[test]
    fn no_impression_label_gives_none() {
        let n = note("EXAM: CT head\nFINDINGS: Normal study.");
        assert!(Sectioner::default().extract_impression(&n).is_none());
    }

    #[test]
    fn trailing_whitespace_excluded_from_span() {
        // "EXAM: x\n" is 8 bytes; "IMPRESSION:" 11 more; one space; then the text.
        let raw = "EXAM: x\nIMPRESSION: Mild edema.  \n\t \n";
        let p = Sectioner::default().parse("n", raw);
        let span = &p.sections[&SectionLabel::Impression];
        assert_eq!((span.start, span.end), (20, 31));
        assert_eq!(&raw[span.start..span.end], "Mild edema.");
    }

    #[test]
    fn label_is_case_insensitive_and_colon_optional_on_own_line() {
        let p = Sectioner::default().parse("n", "exam: x\nImpression\nSmall effusion.");
        assert_eq!(p.impression(), "Small effusion.");
        let p = Sectioner::default().parse("n", "Findings: a. impression: b");
        assert_eq!(p.impression(), "b");
    }

    #[test]
    fn word_in_prose_is_not_a_label() {
        let p = Sectioner::default().parse("n", "FINDINGS: my impression is edema");
        assert!(!p.sections.contains_key(&SectionLabel::Impression));
    }

    #[test]
    fn leading_text_goes_to_other_and_spans_do_not_overlap() {
        let raw = "Clinical data here\nEXAM: x ray\nFINDINGS: ok\nIMPRESSION: done";
        let p = Sectioner::default().parse("n", raw);
        assert_eq!(p.sections[&SectionLabel::Other].text, "Clinical data here");
        let mut spans: Vec<_> = p.sections.values().map(|s| (s.start, s.end)).collect();
        spans.sort();
        for w in spans.windows(2) {
            assert!(w[0].1 <= w[1].0);
        }
    }

    #[test]
    fn custom_labels_end_impression() {
        let s = Sectioner::new(&["Recommendation".to_string()]).unwrap();
        let p = s.parse("n", "IMPRESSION: edema\nRECOMMENDATION: follow up");
        assert_eq!(p.impression(), "edema");
        assert_eq!(
            p.sections[&SectionLabel::Custom("RECOMMENDATION".into())].text,
            "follow up"
        );
    }

    #[test]
    fn numbered_list_splits_into_items() {
        let s = split_sentences(
            "1. Findings suspicious for a proximal, partial small bowel obstruction. 2. Moderate right pleural effusion.",
        );
        assert_eq!(
            s,
            [
                "Findings suspicious for a proximal, partial small bowel obstruction",
                "Moderate right pleural effusion"
            ]
        );
    }

    #[test]
    fn decimals_are_not_boundaries() {
        let s = split_sentences("Pulmonary artery is mildly enlarged measuring 3.4 cm in diameter.");
        assert_eq!(s, ["Pulmonary artery is mildly enlarged measuring 3.4 cm in diameter"]);
    }

    #[test]
    fn other_delimiters() {
        let s = split_sentences("Edema; effusion! Pneumonia?\nAtelectasis");
        assert_eq!(s, ["Edema", "effusion", "Pneumonia", "Atelectasis"]);
    }

    #[test]
    fn hyphens_deleted_by_default_split_on_request() {
        let n = Normalizer::new(Stoplist::empty());
        assert_eq!(
            n.normalize(&["Mild-to-moderate", "atherosclerotic", "calcifications"]),
            ["mildtomoderate", "atherosclerotic", "calcifications"]
        );
        let n = Normalizer {
            split_hyphens: true,
            ..Normalizer::new(Stoplist::empty())
        };
        assert_eq!(n.normalize(&["Mild-to-moderate"]), ["mild", "to", "moderate"]);
    }

    #[test]
    fn stoplist_removes_generic_words() {
        let n = Normalizer::default();
        assert_eq!(n.normalize(&["IMPRESSION:", "Interval"]), ["interval"]);
    }

    #[test]
    fn digits_and_punctuation_vanish() {
        let n = Normalizer::default();
        assert!(n.normalize(&["2021", "..."]).is_empty());
    }

    #[test]
    fn underscores_survive() {
        let n = Normalizer::default();
        assert_eq!(n.normalize(&["no_focal_consolidation", "_"]), ["no_focal_consolidation"]);
    }

    #[test]
    fn bundled_stoplist_has_generic_list() {
        let s = Stoplist::bundled();
        for w in ["personalname", "radiologist", "sign", "the", "no"] {
            assert!(s.contains(w), "{w}");
        }
        assert_eq!(Stoplist::clinical_generic().len(), 29);
    }

    #[test]
    fn stemmer_strips_plurals() {
        assert_eq!(s_stem("effusions"), "effusion");
        assert_eq!(s_stem("arteries"), "artery");
        assert_eq!(s_stem("calcifications"), "calcification");
        assert_eq!(s_stem("diseases"), "disease");
        assert_eq!(s_stem("mass"), "mass");
        assert_eq!(s_stem("hilus"), "hilus");
    }
}
