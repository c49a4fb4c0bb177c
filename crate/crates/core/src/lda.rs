//! Latent Dirichlet Allocation fitted by collapsed Gibbs sampling.
//!
//! Every document owns a generator seeded from `(seed, hash(note_id))`, so a
//! fit is a pure function of the token streams and the configuration. Two
//! sweep schedules are available:
//!
//! * `Sequential` visits documents in input order and updates the global
//!   topic-word table after every token (the exact collapsed sampler).
//! * `Snapshot` samples every document against the topic-word table frozen at
//!   the start of the sweep plus that document's own changes, then merges.
//!   Documents are independent within a sweep, so they run in parallel and the
//!   result does not depend on document order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vectorize::{SparseCorpus, TermId, TfidfVariant, Vocabulary};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Counts,
    ScaledTfidf,
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" => Ok(WeightMode::Counts),
            "scaled_tfidf" | "tfidf" => Ok(WeightMode::ScaledTfidf),
            other => Err(Error::InvalidArgument(format!("unknown weight mode {other:?}"))),
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::Counts => "counts",
            WeightMode::ScaledTfidf => "scaled_tfidf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    Sequential,
    Snapshot,
}

impl FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(SamplerMode::Sequential),
            "snapshot" | "parallel" => Ok(SamplerMode::Snapshot),
            other => Err(Error::InvalidArgument(format!("unknown sampler {other:?}"))),
        }
    }
}

/// Symmetric document-topic prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPrior {
    /// 1 / K
    InverseK,
    /// 50 / K
    FiftyOverK,
    Fixed(f64),
}

impl AlphaPrior {
    pub fn value(self, k: usize) -> f64 {
        match self {
            AlphaPrior::InverseK => 1.0 / k as f64,
            AlphaPrior::FiftyOverK => 50.0 / k as f64,
            AlphaPrior::Fixed(a) => a,
        }
    }
}

impl FromStr for AlphaPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1/k" => Ok(AlphaPrior::InverseK),
            "50/k" => Ok(AlphaPrior::FiftyOverK),
            other => other
                .parse::<f64>()
                .map(AlphaPrior::Fixed)
                .map_err(|_| Error::InvalidArgument(format!("alpha {other:?}"))),
        }
    }
}

impl fmt::Display for AlphaPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaPrior::InverseK => f.write_str("1/k"),
            AlphaPrior::FiftyOverK => f.write_str("50/k"),
            AlphaPrior::Fixed(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: AlphaPrior,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Average every `thin`-th sweep after burn-in.
    pub thin: usize,
    pub seed: u64,
    pub weight_mode: WeightMode,
    pub tfidf_scale: f64,
    pub sampler: SamplerMode,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            k: 5,
            alpha: AlphaPrior::InverseK,
            beta: 0.01,
            iterations: 1000,
            burn_in: 500,
            thin: 10,
            seed: 42,
            weight_mode: WeightMode::ScaledTfidf,
            tfidf_scale: 20.0,
            sampler: SamplerMode::Sequential,
        }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        let alpha = self.alpha.value(self.k);
        if !(alpha > 0.0 && alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be > 0");
        }
        if self.burn_in > self.iterations {
            return bad("burn_in must not exceed iterations");
        }
        if self.thin == 0 {
            return bad("thin must be >= 1");
        }
        if !(self.tfidf_scale > 0.0) {
            return bad("tfidf_scale must be > 0");
        }
        Ok(())
    }
}

/// One document as a sequence of term ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocStream {
    pub note_id: String,
    pub tokens: Vec<TermId>,
}

/// Turn sparse vectors into integer token streams, ascending term id.
///
/// `Counts` repeats each term `count` times. `ScaledTfidf` repeats each term
/// with a nonzero weight `max(1, round(weight * scale))` times.
pub fn prepare_tokens(corpus: &SparseCorpus, mode: WeightMode, scale: f64) -> Result<Vec<DocStream>> {
    corpus
        .docs
        .iter()
        .map(|d| {
            let mut tokens = Vec::new();
            match mode {
                WeightMode::Counts => {
                    for &(t, c) in &d.counts {
                        tokens.extend(std::iter::repeat_n(t, c as usize));
                    }
                }
                WeightMode::ScaledTfidf => {
                    let weights = d.weights.as_ref().ok_or_else(|| {
                        Error::InvalidArgument(format!("document {} has no tfidf weights", d.note_id))
                    })?;
                    for &(t, w) in weights {
                        let n = (w * scale).round().max(1.0) as usize;
                        tokens.extend(std::iter::repeat_n(t, n));
                    }
                }
            }
            if tokens.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "document {} is empty after token preparation",
                    d.note_id
                )));
            }
            Ok(DocStream {
                note_id: d.note_id.clone(),
                tokens,
            })
        })
        .collect()
}

/// 64-bit FNV-1a.
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn doc_seed(seed: u64, note_id: &str) -> u64 {
    splitmix64(seed ^ splitmix64(stable_hash(note_id)))
}

struct DocState {
    z: Vec<u32>,
    ndk: Vec<u32>,
    rng: ChaCha8Rng,
}

/// Count tables visible to a sweep observer.
pub struct SweepView<'a> {
    pub sweep: usize,
    pub k: usize,
    pub vocab_size: usize,
    doc_lens: Vec<usize>,
    ndk: Vec<&'a [u32]>,
    /// Word-major: `nkw[w * k + t]`.
    nkw: &'a [u32],
    nk: &'a [u64],
}

impl SweepView<'_> {
    pub fn doc_topic(&self, d: usize, k: usize) -> u32 {
        self.ndk[d][k]
    }

    pub fn topic_word(&self, k: usize, w: usize) -> u32 {
        self.nkw[w * self.k + k]
    }

    pub fn topic_total(&self, k: usize) -> u64 {
        self.nk[k]
    }

    /// Σ_k n_dk = |d| for all d; Σ_d n_dk = Σ_w n_kw = n_k for all k.
    pub fn conservation_holds(&self) -> bool {
        let docs_ok = self
            .ndk
            .iter()
            .zip(&self.doc_lens)
            .all(|(row, &len)| row.iter().map(|&c| c as usize).sum::<usize>() == len);
        let topics_ok = (0..self.k).all(|k| {
            let from_docs: u64 = self.ndk.iter().map(|row| row[k] as u64).sum();
            let from_words: u64 = (0..self.vocab_size).map(|w| self.nkw[w * self.k + k] as u64).sum();
            from_docs == from_words && from_words == self.nk[k]
        });
        docs_ok && topics_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub format_version: u32,
    pub config: LdaConfig,
    pub tfidf: Option<TfidfVariant>,
    pub vocab_hash: String,
    pub terms: Vec<String>,
    pub note_ids: Vec<String>,
    /// K × V
    pub phi: Vec<Vec<f64>>,
    /// D × K
    pub theta: Vec<Vec<f64>>,
    pub doc_topic_counts: Vec<Vec<u32>>,
    /// K × V
    pub topic_word_counts: Vec<Vec<u32>>,
    pub topic_counts: Vec<u64>,
    pub samples: usize,
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.phi.len()
    }

    pub fn num_docs(&self) -> usize {
        self.theta.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    /// Attach the vocabulary (terms and hash) the model was fitted against.
    pub fn with_vocabulary(mut self, vocab: &Vocabulary, tfidf: Option<TfidfVariant>) -> Self {
        self.terms = vocab.terms().to_vec();
        self.vocab_hash = vocab_hash(vocab);
        self.tfidf = tfidf;
        self
    }

    pub fn term(&self, id: TermId) -> &str {
        self.terms.get(id as usize).map_or("", String::as_str)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TopicModel = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn vocab_hash(vocab: &Vocabulary) -> String {
    hex(&Sha256::digest(vocab.to_tsv().as_bytes()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn fit(streams: &[DocStream], vocab_size: usize, config: &LdaConfig) -> Result<TopicModel> {
    fit_observed(streams, vocab_size, config, |_| {})
}

/// Like [`fit`], calling `observer` after every sweep.
pub fn fit_observed(
    streams: &[DocStream],
    vocab_size: usize,
    config: &LdaConfig,
    mut observer: impl FnMut(&SweepView<'_>),
) -> Result<TopicModel> {
    config.validate()?;
    if streams.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if vocab_size == 0 {
        return Err(Error::InvalidArgument("vocabulary is empty".into()));
    }
    let k = config.k;
    let v = vocab_size;
    let alpha = config.alpha.value(k);
    let beta = config.beta;
    let total_tokens: usize = streams.iter().map(|s| s.tokens.len()).sum();
    for s in streams {
        if s.tokens.is_empty() {
            return Err(Error::InvalidArgument(format!("document {} is empty", s.note_id)));
        }
        if let Some(&bad) = s.tokens.iter().find(|&&t| t as usize >= v) {
            return Err(Error::InvalidArgument(format!(
                "term id {bad} out of range for vocabulary of {v}"
            )));
        }
    }
    if k > total_tokens {
        log::warn!("K = {k} exceeds the number of tokens ({total_tokens})");
    }

    let mut docs: Vec<DocState> = streams
        .iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(doc_seed(config.seed, &s.note_id));
            let z: Vec<u32> = s.tokens.iter().map(|_| rng.gen_range(0..k as u32)).collect();
            let mut ndk = vec![0u32; k];
            for &t in &z {
                ndk[t as usize] += 1;
            }
            DocState { z, ndk, rng }
        })
        .collect();
    let mut nkw = vec![0u32; v * k];
    let mut nk = vec![0u64; k];
    rebuild_topic_word(streams, &docs, k, &mut nkw, &mut nk);

    let d_count = streams.len();
    let mut phi_sum = vec![0.0f64; k * v];
    let mut theta_sum = vec![0.0f64; d_count * k];
    let mut samples = 0usize;
    let vbeta = v as f64 * beta;
    let doc_lens: Vec<usize> = streams.iter().map(|s| s.tokens.len()).collect();

    for sweep in 1..=config.iterations {
        match config.sampler {
            SamplerMode::Sequential => {
                let mut p = vec![0.0f64; k];
                for (s, d) in streams.iter().zip(docs.iter_mut()) {
                    for (i, &w) in s.tokens.iter().enumerate() {
                        let w = w as usize;
                        let old = d.z[i] as usize;
                        d.ndk[old] -= 1;
                        nkw[w * k + old] -= 1;
                        nk[old] -= 1;
                        let row = &nkw[w * k..w * k + k];
                        let mut total = 0.0;
                        for t in 0..k {
                            total += (d.ndk[t] as f64 + alpha) * (row[t] as f64 + beta)
                                / (nk[t] as f64 + vbeta);
                            p[t] = total;
                        }
                        let new = draw(&p, total, &mut d.rng);
                        d.z[i] = new as u32;
                        d.ndk[new] += 1;
                        nkw[w * k + new] += 1;
                        nk[new] += 1;
                    }
                }
            }
            SamplerMode::Snapshot => {
                let snap_kw = &nkw;
                let snap_k = &nk;
                docs.par_iter_mut().zip(streams.par_iter()).for_each(|(d, s)| {
                    snapshot_doc_sweep(d, &s.tokens, snap_kw, snap_k, k, alpha, beta, vbeta);
                });
                rebuild_topic_word(streams, &docs, k, &mut nkw, &mut nk);
            }
        }

        let view = SweepView {
            sweep,
            k,
            vocab_size: v,
            doc_lens: doc_lens.clone(),
            ndk: docs.iter().map(|d| d.ndk.as_slice()).collect(),
            nkw: &nkw,
            nk: &nk,
        };
        observer(&view);

        if sweep > config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thin) {
            accumulate(&docs, &nkw, &nk, k, v, alpha, beta, &mut phi_sum, &mut theta_sum);
            samples += 1;
        }
    }
    if samples == 0 {
        accumulate(&docs, &nkw, &nk, k, v, alpha, beta, &mut phi_sum, &mut theta_sum);
        samples = 1;
    }

    let n = samples as f64;
    let phi: Vec<Vec<f64>> = phi_sum.chunks(v).map(|r| normalize_avg(r, n)).collect();
    let theta: Vec<Vec<f64>> = theta_sum.chunks(k).map(|r| normalize_avg(r, n)).collect();
    let mut topic_word_counts = vec![vec![0u32; v]; k];
    for w in 0..v {
        for t in 0..k {
            topic_word_counts[t][w] = nkw[w * k + t];
        }
    }
    Ok(TopicModel {
        format_version: MODEL_FORMAT_VERSION,
        config: *config,
        tfidf: None,
        vocab_hash: String::new(),
        terms: Vec::new(),
        note_ids: streams.iter().map(|s| s.note_id.clone()).collect(),
        phi,
        theta,
        doc_topic_counts: docs.iter().map(|d| d.ndk.clone()).collect(),
        topic_word_counts,
        topic_counts: nk,
        samples,
    })
}

fn normalize_avg(row: &[f64], n: f64) -> Vec<f64> {
    let avg: Vec<f64> = row.iter().map(|x| x / n).collect();
    let s: f64 = avg.iter().sum();
    if (s - 1.0).abs() < 1e-15 {
        avg
    } else {
        avg.iter().map(|x| x / s).collect()
    }
}

fn draw(cumulative: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let u = rng.gen::<f64>() * total;
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

#[allow(clippy::too_many_arguments)]
fn snapshot_doc_sweep(
    d: &mut DocState,
    tokens: &[TermId],
    snap_kw: &[u32],
    snap_k: &[u64],
    k: usize,
    alpha: f64,
    beta: f64,
    vbeta: f64,
) {
    // Local corrections to the frozen tables, keyed by word.
    let mut delta_kw: std::collections::HashMap<u32, Vec<i64>> = std::collections::HashMap::new();
    let mut delta_k = vec![0i64; k];
    let mut p = vec![0.0f64; k];
    for (i, &w) in tokens.iter().enumerate() {
        let old = d.z[i] as usize;
        d.ndk[old] -= 1;
        let dw = delta_kw.entry(w).or_insert_with(|| vec![0; k]);
        dw[old] -= 1;
        delta_k[old] -= 1;
        let base = w as usize * k;
        let mut total = 0.0;
        for t in 0..k {
            let cw = snap_kw[base + t] as i64 + dw[t];
            let ck = snap_k[t] as i64 + delta_k[t];
            total += (d.ndk[t] as f64 + alpha) * (cw as f64 + beta) / (ck as f64 + vbeta);
            p[t] = total;
        }
        let new = draw(&p, total, &mut d.rng);
        d.z[i] = new as u32;
        d.ndk[new] += 1;
        dw[new] += 1;
        delta_k[new] += 1;
    }
}

fn rebuild_topic_word(streams: &[DocStream], docs: &[DocState], k: usize, nkw: &mut [u32], nk: &mut [u64]) {
    nkw.iter_mut().for_each(|c| *c = 0);
    nk.iter_mut().for_each(|c| *c = 0);
    for (s, d) in streams.iter().zip(docs) {
        for (&w, &t) in s.tokens.iter().zip(&d.z) {
            nkw[w as usize * k + t as usize] += 1;
            nk[t as usize] += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn accumulate(
    docs: &[DocState],
    nkw: &[u32],
    nk: &[u64],
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    phi_sum: &mut [f64],
    theta_sum: &mut [f64],
) {
    let vbeta = v as f64 * beta;
    for t in 0..k {
        let denom = nk[t] as f64 + vbeta;
        for w in 0..v {
            phi_sum[t * v + w] += (nkw[w * k + t] as f64 + beta) / denom;
        }
    }
    let kalpha = k as f64 * alpha;
    for (d, doc) in docs.iter().enumerate() {
        let len: u32 = doc.ndk.iter().sum();
        let denom = len as f64 + kalpha;
        for t in 0..k {
            theta_sum[d * k + t] += (doc.ndk[t] as f64 + alpha) / denom;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub note_id: String,
    pub dominant_topic: usize,
    pub contribution: f64,
}

/// Argmax of each theta row; ties go to the lowest topic id.
pub fn dominant_topics(model: &TopicModel) -> Vec<TopicAssignment> {
    model
        .theta
        .iter()
        .zip(&model.note_ids)
        .map(|(row, id)| {
            let (best, &p) = row
                .iter()
                .enumerate()
                .fold((0, &row[0]), |acc, (i, x)| if *x > *acc.1 { (i, x) } else { acc });
            TopicAssignment {
                note_id: id.clone(),
                dominant_topic: best,
                contribution: p,
            }
        })
        .collect()
}

/// Percentage of documents per dominant topic.
pub fn topic_shares(assignments: &[TopicAssignment], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    for a in assignments {
        counts[a.dominant_topic] += 1;
    }
    let n = assignments.len().max(1) as f64;
    counts.iter().map(|&c| 100.0 * c as f64 / n).collect()
}

/// Per topic, notes whose contribution is at least `threshold` (inclusive),
/// by contribution descending then note id.
pub fn representative_notes(assignments: &[TopicAssignment], k: usize, threshold: f64) -> Vec<Vec<String>> {
    let mut per: Vec<Vec<&TopicAssignment>> = vec![Vec::new(); k];
    for a in assignments.iter().filter(|a| a.contribution >= threshold) {
        per[a.dominant_topic].push(a);
    }
    per.into_iter()
        .map(|mut v| {
            v.sort_by(|a, b| {
                b.contribution
                    .total_cmp(&a.contribution)
                    .then_with(|| a.note_id.cmp(&b.note_id))
            });
            v.into_iter().map(|a| a.note_id.clone()).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicKeywords {
    pub topic: usize,
    /// Top terms by descending phi (ties → lower term id).
    pub top: Vec<TermId>,
    /// Terms of `top` that appear in no other topic's top list.
    pub unique: Vec<TermId>,
}

pub fn top_keywords(model: &TopicModel, n: usize) -> Vec<TopicKeywords> {
    let tops: Vec<Vec<TermId>> = model.phi.iter().map(|row| top_n_terms(row, n)).collect();
    tops.iter()
        .enumerate()
        .map(|(k, top)| {
            let unique = top
                .iter()
                .copied()
                .filter(|t| {
                    tops.iter()
                        .enumerate()
                        .all(|(j, other)| j == k || !other.contains(t))
                })
                .collect();
            TopicKeywords {
                topic: k,
                top: top.clone(),
                unique,
            }
        })
        .collect()
}

pub fn top_n_terms(row: &[f64], n: usize) -> Vec<TermId> {
    let mut ids: Vec<TermId> = (0..row.len() as TermId).collect();
    ids.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
    ids.truncate(n);
    ids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn streams(docs: &[&[u32]]) -> Vec<DocStream> {
        docs.iter()
            .enumerate()
            .map(|(i, t)| DocStream {
                note_id: format!("d{i}"),
                tokens: t.to_vec(),
            })
            .collect()
    }

    fn quick(k: usize) -> LdaConfig {
        LdaConfig {
            k,
            iterations: 40,
            burn_in: 20,
            thin: 5,
            ..Default::default()
        }
    }

    #[test]
    fn prepare_counts() {
        let corpus = SparseCorpus {
            docs: vec![crate::vectorize::SparseDoc {
                note_id: "d".into(),
                counts: vec![(0, 2), (1, 1)],
                weights: Some(vec![(0, 0.02), (2, 1.0)]),
            }],
        };
        let s = prepare_tokens(&corpus, WeightMode::Counts, 10.0).unwrap();
        assert_eq!(s[0].tokens, [0, 0, 1]);
        let s = prepare_tokens(&corpus, WeightMode::ScaledTfidf, 10.0).unwrap();
        // 0.02 * 10 rounds to 0, floored at 1; 1.0 * 10 = 10
        let mut expect = vec![0];
        expect.extend(std::iter::repeat_n(2, 10));
        assert_eq!(s[0].tokens, expect);
    }

    #[test]
    fn empty_weight_vector_is_rejected() {
        let corpus = SparseCorpus {
            docs: vec![crate::vectorize::SparseDoc {
                note_id: "d".into(),
                counts: vec![(0, 1)],
                weights: Some(vec![]),
            }],
        };
        assert!(prepare_tokens(&corpus, WeightMode::ScaledTfidf, 20.0).is_err());
    }

    #[test]
    fn single_topic_theta_is_exactly_one() {
        let s = streams(&[&[0, 1, 1], &[2], &[0, 2, 2, 2]]);
        let m = fit(&s, 3, &quick(1)).unwrap();
        for row in &m.theta {
            assert_eq!(row, &[1.0]);
        }
        // smoothed unigram distribution
        let counts = [2.0, 2.0, 4.0];
        for w in 0..3 {
            let expect = (counts[w] + 0.01) / (8.0 + 3.0 * 0.01);
            assert!((m.phi[0][w] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_model() {
        let s = streams(&[&[0, 1, 2, 3], &[3, 4, 5], &[0, 0, 5, 1], &[2, 2, 4]]);
        let a = fit(&s, 6, &quick(3)).unwrap();
        let b = fit(&s, 6, &quick(3)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = fit(&s, 6, &LdaConfig { seed: 7, ..quick(3) }).unwrap();
        assert_ne!(a.doc_topic_counts, c.doc_topic_counts);
    }

    #[test]
    fn conservation_after_every_sweep() {
        let s = streams(&[&[0, 1, 2, 3], &[3, 4, 5], &[0, 0, 5, 1], &[2, 2, 4]]);
        for sampler in [SamplerMode::Sequential, SamplerMode::Snapshot] {
            let mut sweeps = 0;
            fit_observed(&s, 6, &LdaConfig { sampler, ..quick(3) }, |view| {
                assert!(view.conservation_holds(), "sweep {}", view.sweep);
                sweeps += 1;
            })
            .unwrap();
            assert_eq!(sweeps, 40);
        }
    }

    #[test]
    fn invalid_configs() {
        let s = streams(&[&[0]]);
        assert!(fit(&s, 1, &LdaConfig { k: 0, ..quick(1) }).is_err());
        assert!(fit(&s, 1, &LdaConfig { beta: 0.0, ..quick(1) }).is_err());
        assert!(fit(&s, 1, &LdaConfig { burn_in: 100, ..quick(1) }).is_err());
        assert!(fit(&s, 0, &quick(1)).is_err());
        assert!(fit(&streams(&[&[5]]), 2, &quick(1)).is_err());
    }

    #[test]
    fn more_topics_than_tokens_still_fits() {
        let m = fit(&streams(&[&[0]]), 1, &quick(4)).unwrap();
        assert_eq!(m.num_topics(), 4);
    }

    fn model_with_theta(theta: Vec<Vec<f64>>) -> TopicModel {
        let k = theta[0].len();
        TopicModel {
            format_version: MODEL_FORMAT_VERSION,
            config: quick(k),
            tfidf: None,
            vocab_hash: String::new(),
            terms: vec![],
            note_ids: (0..theta.len()).map(|i| format!("n{i}")).collect(),
            phi: vec![vec![1.0]; k],
            theta,
            doc_topic_counts: vec![],
            topic_word_counts: vec![],
            topic_counts: vec![],
            samples: 1,
        }
    }

    #[test]
    fn tie_goes_to_lowest_topic() {
        let a = dominant_topics(&model_with_theta(vec![vec![0.5, 0.5]]));
        assert_eq!(a[0].dominant_topic, 0);
        assert_eq!(a[0].contribution, 0.5);
    }

    #[test]
    fn representative_threshold_is_inclusive() {
        let m = model_with_theta(vec![
            vec![0.80, 0.20],
            vec![0.799, 0.201],
            vec![0.1, 0.9],
            vec![0.85, 0.15],
        ]);
        let reps = representative_notes(&dominant_topics(&m), 2, 0.80);
        assert_eq!(reps[0], ["n3", "n0"]);
        assert_eq!(reps[1], ["n2"]);
    }

    #[test]
    fn shares_sum_to_hundred() {
        let m = model_with_theta(vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4]]);
        let s = topic_shares(&dominant_topics(&m), 2);
        assert!((s.iter().sum::<f64>() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn unique_keywords() {
        let mut m = model_with_theta(vec![vec![1.0]]);
        m.phi = vec![vec![0.4, 0.3, 0.2, 0.1]];
        let kw = top_keywords(&m, 10);
        assert_eq!(kw[0].top, [0, 1, 2, 3]);
        assert_eq!(kw[0].unique, kw[0].top);

        m.phi = vec![vec![0.25; 4], vec![0.25; 4]];
        let kw = top_keywords(&m, 2);
        assert_eq!(kw[0].top, [0, 1]);
        assert!(kw[0].unique.is_empty() && kw[1].unique.is_empty());
    }

    #[test]
    fn model_json_round_trip() {
        let s = streams(&[&[0, 1], &[1, 2]]);
        let m = fit(&s, 3, &quick(2)).unwrap();
        let back = TopicModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn alpha_parsing() {
        assert_eq!("1/K".parse::<AlphaPrior>().unwrap(), AlphaPrior::InverseK);
        assert_eq!("50/k".parse::<AlphaPrior>().unwrap().value(5), 10.0);
        assert_eq!("0.3".parse::<AlphaPrior>().unwrap(), AlphaPrior::Fixed(0.3));
    }
}
