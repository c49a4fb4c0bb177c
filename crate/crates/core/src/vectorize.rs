//! Collocation fusion, vocabulary construction and TF-IDF weighting.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::section::TokenizedDoc;

pub type TermId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhraseParams {
    pub min_count: u64,
    pub threshold: f64,
    pub passes: usize,
}

impl Default for PhraseParams {
    fn default() -> Self {
        PhraseParams {
            min_count: 5,
            threshold: 10.0,
            passes: 1,
        }
    }
}

/// Score of an adjacent pair: `(count(ab) - min_count) * n_tokens / (count(a) * count(b))`.
pub fn phrase_score(pair: u64, a: u64, b: u64, min_count: u64, n_tokens: u64) -> f64 {
    (pair as f64 - min_count as f64) * n_tokens as f64 / (a as f64 * b as f64)
}

/// Greedy left-to-right bigram fusion, repeated `params.passes` times.
/// Pairs never cross sentence boundaries.
pub fn detect_phrases(docs: &[TokenizedDoc], params: &PhraseParams) -> Vec<TokenizedDoc> {
    let mut docs = docs.to_vec();
    for _ in 0..params.passes {
        docs = phrase_pass(&docs, params);
    }
    docs
}

fn phrase_pass(docs: &[TokenizedDoc], params: &PhraseParams) -> Vec<TokenizedDoc> {
    let mut unigrams: HashMap<&str, u64> = HashMap::new();
    let mut bigrams: HashMap<(&str, &str), u64> = HashMap::new();
    let mut n_tokens = 0u64;
    for doc in docs {
        for sent in &doc.sentences {
            for t in sent {
                *unigrams.entry(t.as_str()).or_default() += 1;
                n_tokens += 1;
            }
            for w in sent.windows(2) {
                *bigrams.entry((w[0].as_str(), w[1].as_str())).or_default() += 1;
            }
        }
    }
    let accept = |a: &str, b: &str| -> bool {
        let Some(&pair) = bigrams.get(&(a, b)) else {
            return false;
        };
        pair >= params.min_count
            && phrase_score(pair, unigrams[a], unigrams[b], params.min_count, n_tokens)
                >= params.threshold
    };
    docs.iter()
        .map(|doc| TokenizedDoc {
            note_id: doc.note_id.clone(),
            sentences: doc
                .sentences
                .iter()
                .map(|sent| {
                    let mut out = Vec::with_capacity(sent.len());
                    let mut i = 0;
                    while i < sent.len() {
                        if i + 1 < sent.len() && accept(&sent[i], &sent[i + 1]) {
                            out.push(format!("{}_{}", sent[i], sent[i + 1]));
                            i += 2;
                        } else {
                            out.push(sent[i].clone());
                            i += 1;
                        }
                    }
                    out
                })
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    index: HashMap<String, TermId>,
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, df: Vec<u32>) -> Result<Self> {
        if terms.len() != df.len() {
            return Err(Error::InvalidArgument("terms/df length mismatch".into()));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as TermId).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate term {t:?}")));
            }
        }
        Ok(Vocabulary { terms, df, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<TermId> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.terms[id as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, id: TermId) -> u32 {
        self.df[id as usize]
    }

    /// TSV: id, term, df.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (i, (t, d)) in self.terms.iter().zip(&self.df).enumerate() {
            let _ = writeln!(s, "{i}\t{t}\t{d}");
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut df = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Malformed {
                path: "vocab.tsv".into(),
                line: line_no + 1,
                message: format!("expected id<TAB>term<TAB>df, got {line:?}"),
            };
            let mut cols = line.split('\t');
            let id: usize = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            let term = cols.next().ok_or_else(bad)?;
            let d: u32 = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            if id != terms.len() {
                return Err(bad());
            }
            terms.push(term.to_string());
            df.push(d);
        }
        Self::from_parts(terms, df)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseDoc {
    pub note_id: String,
    /// (term, count), term ids strictly increasing, counts > 0.
    pub counts: Vec<(TermId, u32)>,
    /// (term, weight), present once TF-IDF has been applied.
    pub weights: Option<Vec<(TermId, f64)>>,
}

impl SparseDoc {
    pub fn len(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn contains(&self, term: TermId) -> bool {
        self.counts.binary_search_by_key(&term, |&(t, _)| t).is_ok()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseCorpus {
    pub docs: Vec<SparseDoc>,
}

impl SparseCorpus {
    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    /// "note_id<TAB>termid:count,..." one line per document.
    pub fn counts_to_text(&self) -> String {
        let mut s = String::new();
        for d in &self.docs {
            s.push_str(&d.note_id);
            s.push('\t');
            for (i, (t, c)) in d.counts.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{t}:{c}");
            }
            s.push('\n');
        }
        s
    }

    /// Parallel file to `counts_to_text` holding the TF-IDF weights.
    pub fn weights_to_text(&self) -> String {
        let mut s = String::new();
        for d in &self.docs {
            s.push_str(&d.note_id);
            s.push('\t');
            for (i, (t, w)) in d.weights.iter().flatten().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{t}:{w:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(counts: &str, weights: Option<&str>) -> Result<Self> {
        let mut docs = Vec::new();
        for (i, line) in counts.lines().enumerate() {
            let (id, pairs) = parse_line(line, i)?;
            let counts = pairs
                .into_iter()
                .map(|(t, v)| {
                    v.parse::<u32>()
                        .map(|c| (t, c))
                        .map_err(|_| malformed(i, "count is not an integer"))
                })
                .collect::<Result<Vec<_>>>()?;
            docs.push(SparseDoc {
                note_id: id,
                counts,
                weights: None,
            });
        }
        if let Some(weights) = weights {
            let lines: Vec<&str> = weights.lines().collect();
            if lines.len() != docs.len() {
                return Err(malformed(lines.len(), "tfidf file has a different number of documents"));
            }
            for (i, (line, doc)) in lines.iter().zip(docs.iter_mut()).enumerate() {
                let (id, pairs) = parse_line(line, i)?;
                if id != doc.note_id {
                    return Err(malformed(i, "tfidf note_id does not match counts"));
                }
                doc.weights = Some(
                    pairs
                        .into_iter()
                        .map(|(t, v)| {
                            v.parse::<f64>()
                                .map(|w| (t, w))
                                .map_err(|_| malformed(i, "weight is not a number"))
                        })
                        .collect::<Result<Vec<_>>>()?,
                );
            }
        }
        Ok(SparseCorpus { docs })
    }
}

fn malformed(line: usize, msg: &str) -> Error {
    Error::Malformed {
        path: "corpus".into(),
        line: line + 1,
        message: msg.into(),
    }
}

fn parse_line(line: &str, i: usize) -> Result<(String, Vec<(TermId, &str)>)> {
    let (id, rest) = line
        .split_once('\t')
        .ok_or_else(|| malformed(i, "missing tab after note_id"))?;
    let mut pairs = Vec::new();
    for item in rest.split(',').filter(|s| !s.is_empty()) {
        let (t, v) = item
            .split_once(':')
            .ok_or_else(|| malformed(i, "expected termid:value"))?;
        let t: TermId = t.parse().map_err(|_| malformed(i, "bad term id"))?;
        pairs.push((t, v));
    }
    Ok((id.to_string(), pairs))
}

/// Assign ids in first-occurrence order and count term frequencies.
pub fn build_vocabulary(docs: &[TokenizedDoc]) -> Result<(Vocabulary, SparseCorpus)> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut index: HashMap<String, TermId> = HashMap::new();
    let mut terms: Vec<String> = Vec::new();
    let mut df: Vec<u32> = Vec::new();
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut counts: HashMap<TermId, u32> = HashMap::new();
        for tok in doc.tokens() {
            let id = match index.get(tok) {
                Some(&id) => id,
                None => {
                    let id = terms.len() as TermId;
                    index.insert(tok.to_string(), id);
                    terms.push(tok.to_string());
                    df.push(0);
                    id
                }
            };
            *counts.entry(id).or_default() += 1;
        }
        let mut counts: Vec<(TermId, u32)> = counts.into_iter().collect();
        counts.sort_unstable();
        for &(t, _) in &counts {
            df[t as usize] += 1;
        }
        out.push(SparseDoc {
            note_id: doc.note_id.clone(),
            counts,
            weights: None,
        });
    }
    Ok((Vocabulary { terms, df, index }, SparseCorpus { docs: out }))
}

/// Keep terms with `min_df <= df <= max_df_ratio * N`; ids are reassigned
/// densely in their original order. Documents may become empty.
pub fn prune_vocabulary(
    vocab: &Vocabulary,
    corpus: &SparseCorpus,
    min_df: u32,
    max_df_ratio: f64,
) -> (Vocabulary, SparseCorpus) {
    let n = corpus.num_docs() as f64;
    let mut remap = vec![None; vocab.len()];
    let mut terms = Vec::new();
    let mut df = Vec::new();
    for (i, t) in vocab.terms.iter().enumerate() {
        let d = vocab.df[i];
        if d >= min_df && (d as f64) <= max_df_ratio * n {
            remap[i] = Some(terms.len() as TermId);
            terms.push(t.clone());
            df.push(d);
        }
    }
    let docs = corpus
        .docs
        .iter()
        .map(|d| SparseDoc {
            note_id: d.note_id.clone(),
            counts: d
                .counts
                .iter()
                .filter_map(|&(t, c)| remap[t as usize].map(|nt| (nt, c)))
                .collect(),
            weights: None,
        })
        .collect();
    let vocab = Vocabulary::from_parts(terms, df).expect("pruned terms stay unique");
    (vocab, SparseCorpus { docs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfKind {
    /// log2(N / df)
    Log2,
    /// ln(N / df)
    Ln,
    /// ln((1 + N) / (1 + df)) + 1
    SmoothLn,
}

impl FromStr for IdfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log2" => Ok(IdfKind::Log2),
            "ln" => Ok(IdfKind::Ln),
            "smooth_ln" | "smooth" => Ok(IdfKind::SmoothLn),
            other => Err(Error::InvalidArgument(format!("unknown idf variant {other:?}"))),
        }
    }
}

impl fmt::Display for IdfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdfKind::Log2 => "log2",
            IdfKind::Ln => "ln",
            IdfKind::SmoothLn => "smooth_ln",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfVariant {
    pub idf: IdfKind,
    pub normalize: bool,
}

impl Default for TfidfVariant {
    fn default() -> Self {
        TfidfVariant {
            idf: IdfKind::Log2,
            normalize: true,
        }
    }
}

impl TfidfVariant {
    pub fn idf(&self, n_docs: usize, df: u32) -> f64 {
        let n = n_docs as f64;
        let d = df as f64;
        match self.idf {
            IdfKind::Log2 => (n / d).log2(),
            IdfKind::Ln => (n / d).ln(),
            IdfKind::SmoothLn => ((1.0 + n) / (1.0 + d)).ln() + 1.0,
        }
    }
}

/// `count * idf`, zero weights dropped, optionally L2-normalized per document.
pub fn tfidf(corpus: &SparseCorpus, vocab: &Vocabulary, variant: TfidfVariant) -> SparseCorpus {
    let n = corpus.num_docs();
    let idf: Vec<f64> = (0..vocab.len() as TermId)
        .map(|t| variant.idf(n, vocab.df(t)))
        .collect();
    let docs = corpus
        .docs
        .iter()
        .map(|d| {
            let mut w: Vec<(TermId, f64)> = d
                .counts
                .iter()
                .map(|&(t, c)| (t, c as f64 * idf[t as usize]))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            if variant.normalize {
                let norm = w.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (_, x) in &mut w {
                        *x /= norm;
                    }
                }
            }
            SparseDoc {
                note_id: d.note_id.clone(),
                counts: d.counts.clone(),
                weights: Some(w),
            }
        })
        .collect();
    SparseCorpus { docs }
}

pub fn write_vocab_and_corpus(dir: &Path, vocab: &Vocabulary, corpus: &SparseCorpus) -> Result<()> {
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("vocab.tsv", vocab.to_tsv())?;
    write("corpus.counts", corpus.counts_to_text())?;
    write("corpus.tfidf", corpus.weights_to_text())
}

pub fn read_vocab_and_corpus(dir: &Path) -> Result<(Vocabulary, SparseCorpus)> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    };
    let vocab = Vocabulary::from_tsv(&read("vocab.tsv")?)?;
    let counts = read("corpus.counts")?;
    let weights = read("corpus.tfidf").ok();
    let corpus = SparseCorpus::from_text(&counts, weights.as_deref())?;
    Ok((vocab, corpus))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, sents: &[&str]) -> TokenizedDoc {
        TokenizedDoc {
            note_id: id.into(),
            sentences: sents
                .iter()
                .map(|s| s.split_whitespace().map(String::from).collect())
                .collect(),
        }
    }

    fn abc() -> Vec<TokenizedDoc> {
        vec![doc("d1", &["a b"]), doc("d2", &["a c"]), doc("d3", &["a"])]
    }

    #[test]
    fn df_counts() {
        let (v, c) = build_vocabulary(&abc()).unwrap();
        assert_eq!(v.terms(), ["a", "b", "c"]);
        assert_eq!((v.df(0), v.df(1), v.df(2)), (3, 1, 1));
        assert_eq!(c.docs[1].counts, [(0, 1), (2, 1)]);
    }

    #[test]
    fn duplicate_tokens_count_twice_once_in_df() {
        let (v, c) = build_vocabulary(&[doc("d", &["x y x"])]).unwrap();
        assert_eq!(c.docs[0].counts, [(0, 2), (1, 1)]);
        assert_eq!(v.df(0), 1);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(matches!(build_vocabulary(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn hand_corpus_tfidf() {
        let (v, c) = build_vocabulary(&abc()).unwrap();
        let w = tfidf(&c, &v, TfidfVariant::default());
        assert_eq!(w.docs[0].weights.as_deref().unwrap(), [(1, 1.0)]);
        assert_eq!(w.docs[1].weights.as_deref().unwrap(), [(2, 1.0)]);
        assert!(w.docs[2].weights.as_deref().unwrap().is_empty());
    }

    #[test]
    fn unnormalized_log2_weights() {
        let (v, c) = build_vocabulary(&abc()).unwrap();
        let w = tfidf(
            &c,
            &v,
            TfidfVariant {
                idf: IdfKind::Log2,
                normalize: false,
            },
        );
        let (t, x) = w.docs[1].weights.as_ref().unwrap()[0];
        assert_eq!(t, 2);
        assert!((x - 3f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn single_doc_has_empty_weights() {
        let (v, c) = build_vocabulary(&[doc("d", &["a b c"])]).unwrap();
        let w = tfidf(&c, &v, TfidfVariant::default());
        assert!(w.docs[0].weights.as_ref().unwrap().is_empty());
    }

    #[test]
    fn smooth_idf_keeps_everything() {
        let (v, c) = build_vocabulary(&abc()).unwrap();
        let w = tfidf(
            &c,
            &v,
            TfidfVariant {
                idf: IdfKind::SmoothLn,
                normalize: true,
            },
        );
        assert_eq!(w.docs[0].weights.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn phrase_min_count_disables_fusion() {
        let docs = vec![doc("d", &["pleural effusion pleural effusion"])];
        let p = PhraseParams {
            min_count: 10,
            threshold: 0.0,
            passes: 1,
        };
        assert_eq!(detect_phrases(&docs, &p), docs);
    }

    #[test]
    fn single_pair_with_huge_threshold_unchanged() {
        let docs = vec![doc("d", &["a b c"])];
        let p = PhraseParams {
            min_count: 1,
            threshold: 1e12,
            passes: 1,
        };
        assert_eq!(detect_phrases(&docs, &p), docs);
    }

    #[test]
    fn pairs_do_not_cross_sentences() {
        let docs: Vec<_> = (0..20).map(|i| doc(&i.to_string(), &["x a", "b y"])).collect();
        let p = PhraseParams {
            min_count: 1,
            threshold: 0.5,
            passes: 1,
        };
        let out = detect_phrases(&docs, &p);
        assert!(out.iter().flat_map(|d| d.tokens()).all(|t| t != "a_b"));
        assert!(out[0].tokens().any(|t| t == "x_a"));
    }

    #[test]
    fn files_round_trip() {
        let (v, c) = build_vocabulary(&abc()).unwrap();
        let w = tfidf(&c, &v, TfidfVariant::default());
        let dir = tempfile::tempdir().unwrap();
        write_vocab_and_corpus(dir.path(), &v, &w).unwrap();
        let (v2, c2) = read_vocab_and_corpus(dir.path()).unwrap();
        assert_eq!(v2, v);
        assert_eq!(c2, w);
    }

    #[test]
    fn pruning_reindexes() {
        let (v, c) = build_vocabulary(&abc()).unwrap();
        let (v2, c2) = prune_vocabulary(&v, &c, 1, 0.9);
        assert_eq!(v2.terms(), ["b", "c"]);
        assert_eq!(c2.docs[1].counts, [(1, 1)]);
        assert!(c2.docs[2].counts.is_empty());
    }
}
