//! Table renderers and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discriminate::FeatureRanking;
use crate::error::{Error, Result};
use crate::lda::{TopicAssignment, TopicKeywords, TopicModel};

pub const DEFAULT_REPRESENTATIVE_THRESHOLD: f64 = 0.80;

/// Integer counts → percentages with one decimal that sum to exactly 100.0
/// (largest remainder; ties go to the lower index).
pub fn shares_one_decimal(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0.0; counts.len()];
    }
    let exact: Vec<f64> = counts.iter().map(|&c| 1000.0 * c as f64 / n as f64).collect();
    let mut tenths: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let short = 1000 - tenths.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(short as usize) {
        tenths[i] += 1;
    }
    tenths.iter().map(|&t| t as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeNote {
    pub note_id: String,
    pub contribution: f64,
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    /// 1-based.
    pub topic: usize,
    pub label: Option<String>,
    pub notes: usize,
    pub share: f64,
    pub keywords: Vec<String>,
    pub representatives: Vec<RepresentativeNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub threshold: f64,
    pub rows: Vec<Table1Row>,
}

/// Inputs for the theme table; all from one fitted model.
pub struct Table1Input<'a> {
    pub model: &'a TopicModel,
    pub assignments: &'a [TopicAssignment],
    pub keywords: &'a [TopicKeywords],
    pub labels: Option<&'a [String]>,
    /// Impression text by note id, for representative excerpts.
    pub texts: Option<&'a BTreeMap<String, String>>,
    pub threshold: f64,
    pub max_representatives: usize,
}

pub fn table1(input: &Table1Input<'_>) -> Table1 {
    let k = input.model.num_topics();
    let mut counts = vec![0usize; k];
    for a in input.assignments {
        counts[a.dominant_topic] += 1;
    }
    let shares = shares_one_decimal(&counts);
    let reps = crate::lda::representative_notes(input.assignments, k, input.threshold);
    let contribution: BTreeMap<&str, f64> = input
        .assignments
        .iter()
        .map(|a| (a.note_id.as_str(), a.contribution))
        .collect();
    let rows = (0..k)
        .map(|t| Table1Row {
            topic: t + 1,
            label: input.labels.and_then(|l| l.get(t)).cloned(),
            notes: counts[t],
            share: shares[t],
            keywords: input
                .keywords
                .get(t)
                .map(|kw| kw.unique.iter().map(|&id| input.model.term(id).to_string()).collect())
                .unwrap_or_default(),
            representatives: reps[t]
                .iter()
                .take(input.max_representatives)
                .map(|id| RepresentativeNote {
                    note_id: id.clone(),
                    contribution: contribution[id.as_str()],
                    text: input.texts.and_then(|m| m.get(id)).cloned(),
                })
                .collect(),
        })
        .collect();
    Table1 {
        threshold: input.threshold,
        rows,
    }
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

impl Table1 {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Topic | Theme | % of notes | Unique keywords | Representative notes |\n");
        s.push_str("|---|---|---:|---|---|\n");
        for r in &self.rows {
            let reps: Vec<String> = r
                .representatives
                .iter()
                .map(|n| match &n.text {
                    Some(t) => format!("{} ({:.2}): {}", n.note_id, n.contribution, md_escape(t)),
                    None => format!("{} ({:.2})", n.note_id, n.contribution),
                })
                .collect();
            let _ = writeln!(
                s,
                "| {} | {} | {:.1} | {} | {} |",
                r.topic,
                md_escape(r.label.as_deref().unwrap_or("")),
                r.share,
                r.keywords.join(", "),
                reps.join("<br>")
            );
        }
        let _ = writeln!(
            s,
            "\nRepresentative notes have a dominant-topic contribution of at least {:.2}.",
            self.threshold
        );
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["topic", "label", "notes", "share", "keywords", "representatives"])
            .map_err(io)?;
        for r in &self.rows {
            let reps: Vec<&str> = r.representatives.iter().map(|n| n.note_id.as_str()).collect();
            w.write_record([
                r.topic.to_string(),
                r.label.clone().unwrap_or_default(),
                r.notes.to_string(),
                format!("{:.1}", r.share),
                r.keywords.join(" "),
                reps.join(" "),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn topic_headers(k: usize, labels: Option<&[String]>) -> Vec<String> {
    (0..k)
        .map(|t| match labels.and_then(|l| l.get(t)) {
            Some(l) if !l.is_empty() => l.clone(),
            _ => format!("topic_{}", t + 1),
        })
        .collect()
}

fn footnote(alpha: f64) -> String {
    format!("All listed terms are significant at the {alpha} level. The largest count in each row is marked.")
}

/// Markdown: one row per term, largest per-row count in bold.
pub fn table2_markdown(ranking: &FeatureRanking, labels: Option<&[String]>) -> String {
    let heads = topic_headers(ranking.k, labels);
    let mut s = format!("| Term | {} |\n", heads.iter().map(|h| md_escape(h)).collect::<Vec<_>>().join(" | "));
    let _ = writeln!(s, "|---|{}", "---:|".repeat(ranking.k));
    for f in &ranking.features {
        let max = f.max_topic();
        let cells: Vec<String> = f
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| if i == max { format!("**{c}**") } else { c.to_string() })
            .collect();
        let _ = writeln!(
            s,
            "| {} (χ²({}) = {:.1}, p = {:.3e}) | {} |",
            md_escape(&f.term),
            f.dof,
            f.chi2,
            f.p_value,
            cells.join(" | ")
        );
    }
    let _ = writeln!(s, "\n{}", footnote(ranking.alpha_level));
    s
}

/// Tab-separated: term, chi2, dof, p, then K counts with '*' on the row maximum.
pub fn table2_tsv(ranking: &FeatureRanking, labels: Option<&[String]>) -> String {
    let heads = topic_headers(ranking.k, labels);
    let mut s = format!("term\tchi2\tdof\tp\t{}\n", heads.join("\t"));
    for f in &ranking.features {
        let max = f.max_topic();
        let cells: Vec<String> = f
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| if i == max { format!("{c}*") } else { c.to_string() })
            .collect();
        let _ = writeln!(s, "{}\t{:.4}\t{}\t{:.6e}\t{}", f.term, f.chi2, f.dof, f.p_value, cells.join("\t"));
    }
    let _ = writeln!(s, "# {}", footnote(ranking.alpha_level));
    s
}

/// CSV with an explicit `max_topic` column (1-based).
pub fn table2_csv(ranking: &FeatureRanking, labels: Option<&[String]>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
    let mut header = vec!["term".to_string(), "chi2".into(), "dof".into(), "p".into()];
    header.extend(topic_headers(ranking.k, labels));
    header.push("max_topic".into());
    w.write_record(&header).map_err(io)?;
    for f in &ranking.features {
        let mut rec = vec![
            f.term.clone(),
            format!("{:.4}", f.chi2),
            f.dof.to_string(),
            format!("{:.6e}", f.p_value),
        ];
        rec.extend(f.counts.iter().map(u64::to_string));
        rec.push((f.max_topic() + 1).to_string());
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One label per line; blank lines keep their position.
pub fn load_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.trim().to_string()).collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    crate::lda::hex(Sha256::digest(bytes).as_slice())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// What a rerun needs: the config text, every seed, and output hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(config: String) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    /// Hash every regular file in `dir` (relative names, sorted), skipping `skip`.
    pub fn hash_dir(&mut self, dir: &Path, prefix: &str, skip: &[&str]) -> Result<()> {
        let mut names: Vec<String> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| !skip.contains(&n.as_str()))
            .collect();
        names.sort();
        for n in names {
            let h = sha256_file(&dir.join(&n))?;
            self.artifacts.insert(format!("{prefix}{n}"), h);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discriminate::{RankMode, RankedFeature};

    #[test]
    fn shares_sum_to_hundred() {
        for counts in [vec![1, 1, 1], vec![1, 2, 3, 4, 5, 6, 7], vec![5], vec![0, 3], vec![1225, 1314, 984, 1403, 1422]] {
            let s = shares_one_decimal(&counts);
            let tenths: i64 = s.iter().map(|x| (x * 10.0).round() as i64).sum();
            assert_eq!(tenths, 1000, "{counts:?} → {s:?}");
        }
        assert_eq!(shares_one_decimal(&[1, 1, 1]), vec![33.4, 33.3, 33.3]);
        assert_eq!(shares_one_decimal(&[7]), vec![100.0]);
    }

    fn ranking() -> FeatureRanking {
        FeatureRanking {
            k: 5,
            alpha_level: 0.01,
            mode: RankMode::Marginal,
            totals: vec![100; 5],
            features: vec![RankedFeature {
                term: "no_significant".into(),
                term_id: 0,
                chi2: 194.5,
                dof: 4,
                p_value: 1e-40,
                counts: vec![19, 10, 66, 8, 17],
                entry_step: None,
            }],
        }
    }

    #[test]
    fn table2_flags_row_maximum() {
        let tsv = table2_tsv(&ranking(), None);
        let row = tsv.lines().nth(1).unwrap();
        assert!(row.starts_with("no_significant\t194.5000\t4\t"));
        assert!(row.ends_with("19\t10\t66*\t8\t17"));
        let md = table2_markdown(&ranking(), None);
        assert!(md.contains("no_significant (χ²(4) = 194.5"));
        assert!(md.contains("| **66** |"));
        let csv = table2_csv(&ranking(), None).unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with(",3"));
    }

    #[test]
    fn empty_table2_keeps_header_and_footnote() {
        let mut r = ranking();
        r.features.clear();
        let tsv = table2_tsv(&r, None);
        assert_eq!(tsv.lines().count(), 2);
        assert!(tsv.starts_with("term\tchi2\tdof\tp\ttopic_1"));
        assert!(tsv.contains("0.01 level"));
        assert!(table2_markdown(&r, None).contains("0.01 level"));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
