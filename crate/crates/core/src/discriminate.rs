//! Chi-square ranking of terms by how unevenly they spread over topics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lda::TopicAssignment;
use crate::vectorize::{SparseCorpus, TermId, Vocabulary};

/// Upper tail of the chi-square distribution, P(X ≥ x).
///
/// Even degrees of freedom use the finite Poisson sum; odd ones go through
/// the regularized upper incomplete gamma function.
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    if x <= 0.0 {
        return 1.0;
    }
    let p = if dof.is_multiple_of(2) {
        chi2_sf_even(x, dof)
    } else {
        statrs::function::gamma::checked_gamma_ur(dof as f64 / 2.0, x / 2.0).unwrap_or(0.0)
    };
    p.clamp(0.0, 1.0)
}

/// exp(−x/2) · Σ_{i < dof/2} (x/2)^i / i!
pub fn chi2_sf_even(x: f64, dof: usize) -> f64 {
    debug_assert!(dof.is_multiple_of(2) && dof > 0);
    let h = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..dof / 2 {
        term *= h / i as f64;
        sum += term;
    }
    (-h).exp() * sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson statistic for the 2×K presence/absence table.
///
/// `present[k]` notes of topic k contain the term out of `totals[k]`.
/// Topics with no notes are dropped and the degrees of freedom reduced.
pub fn chi_square(present: &[u64], totals: &[u64]) -> Result<ChiSquare> {
    if present.len() != totals.len() {
        return Err(Error::InvalidArgument("present and totals differ in length".into()));
    }
    if let Some(k) = (0..present.len()).find(|&k| present[k] > totals[k]) {
        return Err(Error::InvalidArgument(format!(
            "topic {k}: present count {} exceeds total {}",
            present[k], totals[k]
        )));
    }
    let cols: Vec<(f64, f64)> = present
        .iter()
        .zip(totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&p, &t)| (p as f64, t as f64))
        .collect();
    if cols.len() < present.len() {
        log::warn!("chi_square: dropped {} empty topic column(s)", present.len() - cols.len());
    }
    if cols.is_empty() {
        return Err(Error::InvalidArgument("contingency table has no notes".into()));
    }
    let dof = cols.len() - 1;
    let n: f64 = cols.iter().map(|c| c.1).sum();
    let row_present: f64 = cols.iter().map(|c| c.0).sum();
    let row_absent = n - row_present;
    if row_present == 0.0 || row_absent == 0.0 || dof == 0 {
        return Ok(ChiSquare { chi2: 0.0, dof, p_value: 1.0 });
    }
    let mut chi2 = 0.0;
    for &(p, t) in &cols {
        let e1 = row_present * t / n;
        let e0 = row_absent * t / n;
        let a = t - p;
        chi2 += (p - e1) * (p - e1) / e1 + (a - e0) * (a - e0) / e0;
    }
    let p_value = chi2_sf(chi2, dof).max(f64::MIN_POSITIVE);
    Ok(ChiSquare { chi2, dof, p_value })
}

/// Presence tallies of every term per dominant topic.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceTable {
    pub k: usize,
    /// Notes per dominant topic.
    pub totals: Vec<u64>,
    /// `counts[term][topic]`.
    pub counts: Vec<Vec<u64>>,
}

impl PresenceTable {
    pub fn build(corpus: &SparseCorpus, vocab_size: usize, assignments: &[TopicAssignment], k: usize) -> Result<Self> {
        let topics = align_topics(corpus, assignments, k)?;
        let mut totals = vec![0u64; k];
        let mut counts = vec![vec![0u64; k]; vocab_size];
        for (doc, &z) in corpus.docs.iter().zip(&topics) {
            totals[z] += 1;
            for &(t, c) in &doc.counts {
                if c > 0 {
                    let row = counts
                        .get_mut(t as usize)
                        .ok_or_else(|| Error::UnknownTerm(format!("term id {t}")))?;
                    row[z] += 1;
                }
            }
        }
        Ok(PresenceTable { k, totals, counts })
    }

    pub fn presence(&self, term: TermId) -> Result<&[u64]> {
        self.counts
            .get(term as usize)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownTerm(format!("term id {term}")))
    }
}

/// Dominant topic per corpus document, matched by note id and position.
fn align_topics(corpus: &SparseCorpus, assignments: &[TopicAssignment], k: usize) -> Result<Vec<usize>> {
    if assignments.len() != corpus.docs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} assignments for {} documents",
            assignments.len(),
            corpus.docs.len()
        )));
    }
    corpus
        .docs
        .iter()
        .zip(assignments)
        .map(|(d, a)| {
            if d.note_id != a.note_id {
                Err(Error::InvalidArgument(format!(
                    "assignment for {} does not match document {}",
                    a.note_id, d.note_id
                )))
            } else if a.dominant_topic >= k {
                Err(Error::InvalidArgument(format!("topic {} out of range", a.dominant_topic)))
            } else {
                Ok(a.dominant_topic)
            }
        })
        .collect()
}

/// Counts of documents per dominant topic containing `term`.
pub fn presence_counts(
    corpus: &SparseCorpus,
    vocab: &Vocabulary,
    assignments: &[TopicAssignment],
    k: usize,
    term: &str,
) -> Result<Vec<u64>> {
    let id = vocab.id(term).ok_or_else(|| Error::UnknownTerm(term.to_string()))?;
    let topics = align_topics(corpus, assignments, k)?;
    let mut out = vec![0u64; k];
    for (doc, &z) in corpus.docs.iter().zip(&topics) {
        if doc.contains(id) {
            out[z] += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    #[default]
    Marginal,
    Greedy,
}

impl std::str::FromStr for RankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "marginal" => Ok(RankMode::Marginal),
            "greedy" | "forward" => Ok(RankMode::Greedy),
            other => Err(Error::InvalidArgument(format!("unknown ranking mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub term: String,
    pub term_id: TermId,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub counts: Vec<u64>,
    /// Position at which greedy selection picked the term (1-based).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_step: Option<usize>,
}

impl RankedFeature {
    /// Topic holding the most notes with the term (lowest id on ties).
    pub fn max_topic(&self) -> usize {
        argmax_u64(&self.counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub k: usize,
    pub alpha_level: f64,
    pub mode: RankMode,
    pub totals: Vec<u64>,
    pub features: Vec<RankedFeature>,
}

fn argmax_u64(v: &[u64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn by_chi2_then_id(a: &RankedFeature, b: &RankedFeature) -> std::cmp::Ordering {
    b.chi2.total_cmp(&a.chi2).then(a.term_id.cmp(&b.term_id))
}

/// Rank every vocabulary term by χ², keep the significant ones, return the top `top_n`.
pub fn rank_features(
    corpus: &SparseCorpus,
    vocab: &Vocabulary,
    assignments: &[TopicAssignment],
    k: usize,
    alpha_level: f64,
    top_n: usize,
    mode: RankMode,
) -> Result<FeatureRanking> {
    if !(0.0..=1.0).contains(&alpha_level) {
        return Err(Error::InvalidArgument(format!("significance level {alpha_level} outside [0, 1]")));
    }
    let table = PresenceTable::build(corpus, vocab.len(), assignments, k)?;
    let scored: Vec<RankedFeature> = table
        .counts
        .par_iter()
        .enumerate()
        .map(|(t, counts)| {
            let cs = chi_square(counts, &table.totals)?;
            Ok(RankedFeature {
                term: vocab.term(t as TermId).to_string(),
                term_id: t as TermId,
                chi2: cs.chi2,
                dof: cs.dof,
                p_value: cs.p_value,
                counts: counts.clone(),
                entry_step: None,
            })
        })
        .collect::<Result<_>>()?;
    let mut significant: Vec<RankedFeature> = scored.into_iter().filter(|f| f.p_value < alpha_level).collect();
    significant.sort_by(by_chi2_then_id);

    let features = match mode {
        RankMode::Marginal => {
            significant.truncate(top_n);
            significant
        }
        RankMode::Greedy => greedy(corpus, &table, assignments, significant, top_n)?,
    };
    Ok(FeatureRanking {
        k,
        alpha_level,
        mode,
        totals: table.totals,
        features,
    })
}

/// Forward selection: each step takes the candidate with the highest χ²
/// computed only over notes that no selected term covers yet.
fn greedy(
    corpus: &SparseCorpus,
    table: &PresenceTable,
    assignments: &[TopicAssignment],
    candidates: Vec<RankedFeature>,
    top_n: usize,
) -> Result<Vec<RankedFeature>> {
    let topics = align_topics(corpus, assignments, table.k)?;
    let mut explained = vec![false; corpus.docs.len()];
    let mut pool = candidates;
    let mut chosen = Vec::new();
    while chosen.len() < top_n && !pool.is_empty() {
        let mut present = vec![vec![0u64; table.k]; pool.len()];
        let mut totals = vec![0u64; table.k];
        let slot: std::collections::HashMap<TermId, usize> =
            pool.iter().enumerate().map(|(i, f)| (f.term_id, i)).collect();
        for (d, doc) in corpus.docs.iter().enumerate() {
            if explained[d] {
                continue;
            }
            totals[topics[d]] += 1;
            for &(t, _) in &doc.counts {
                if let Some(&i) = slot.get(&t) {
                    present[i][topics[d]] += 1;
                }
            }
        }
        if totals.iter().all(|&t| t == 0) {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in present.iter().enumerate() {
            let c = chi_square(p, &totals)?.chi2;
            match best {
                Some((_, b)) if c <= b => {}
                _ => best = Some((i, c)),
            }
        }
        let (i, c) = best.expect("pool non-empty");
        if c <= 0.0 {
            break;
        }
        let mut f = pool.remove(i);
        f.entry_step = Some(chosen.len() + 1);
        for (d, doc) in corpus.docs.iter().enumerate() {
            if doc.contains(f.term_id) {
                explained[d] = true;
            }
        }
        chosen.push(f);
    }
    chosen.sort_by(by_chi2_then_id);
    Ok(chosen)
}

/// Topic whose notes most often contain the ranked features (lowest id on ties).
pub fn topic_of_interest(ranking: &FeatureRanking) -> Result<usize> {
    if ranking.features.is_empty() {
        return Err(Error::InvalidArgument("empty ranking".into()));
    }
    Ok(topic_of_interest_counts(ranking.features.iter().map(|f| f.counts.as_slice()), ranking.k))
}

pub fn topic_of_interest_counts<'a>(rows: impl IntoIterator<Item = &'a [u64]>, k: usize) -> usize {
    let mut score = vec![0u64; k];
    for row in rows {
        for (s, &c) in score.iter_mut().zip(row) {
            *s += c;
        }
    }
    argmax_u64(&score)
}
