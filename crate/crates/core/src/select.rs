//! Topic coherence (UMass, NPMI) and the sweep over candidate topic counts.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lda::{fit, top_n_terms, DocStream, LdaConfig, TopicModel};
use crate::vectorize::{SparseCorpus, TermId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceMeasure {
    Umass,
    Npmi,
}

impl FromStr for CoherenceMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "umass" | "u_mass" => Ok(CoherenceMeasure::Umass),
            "npmi" | "c_npmi" => Ok(CoherenceMeasure::Npmi),
            other => Err(Error::InvalidArgument(format!("unknown coherence measure {other:?}"))),
        }
    }
}

impl fmt::Display for CoherenceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoherenceMeasure::Umass => "umass",
            CoherenceMeasure::Npmi => "npmi",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceScores {
    pub per_topic: Vec<f64>,
    pub mean: f64,
}

impl CoherenceScores {
    fn from_topics(per_topic: Vec<f64>) -> Self {
        let mean = if per_topic.is_empty() {
            0.0
        } else {
            per_topic.iter().sum::<f64>() / per_topic.len() as f64
        };
        CoherenceScores { per_topic, mean }
    }
}

/// Sorted document indices per term, restricted to `terms`.
fn postings(corpus: &SparseCorpus, terms: &BTreeSet<TermId>) -> HashMap<TermId, Vec<u32>> {
    let mut out: HashMap<TermId, Vec<u32>> = terms.iter().map(|&t| (t, Vec::new())).collect();
    for (d, doc) in corpus.docs.iter().enumerate() {
        for &(t, _) in &doc.counts {
            if let Some(list) = out.get_mut(&t) {
                list.push(d as u32);
            }
        }
    }
    out
}

fn intersect_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// One UMass pair term: ln((D(w, w') + 1) / D(w')), with w' the higher-ranked word.
pub fn umass_pair(co_docs: usize, higher_df: usize) -> f64 {
    ((co_docs as f64 + 1.0) / higher_df as f64).ln()
}

/// UMass coherence over ranked top-term lists using document co-occurrence.
pub fn umass_for_terms(corpus: &SparseCorpus, topics: &[Vec<TermId>]) -> CoherenceScores {
    let all: BTreeSet<TermId> = topics.iter().flatten().copied().collect();
    let post = postings(corpus, &all);
    let per_topic = topics
        .iter()
        .map(|top| {
            let mut c = 0.0;
            for m in 1..top.len() {
                for l in 0..m {
                    let hi = &post[&top[l]];
                    let lo = &post[&top[m]];
                    if hi.is_empty() {
                        continue;
                    }
                    c += umass_pair(intersect_len(lo, hi), hi.len());
                }
            }
            c
        })
        .collect();
    CoherenceScores::from_topics(per_topic)
}

pub fn umass_coherence(model: &TopicModel, corpus: &SparseCorpus, top_n: usize) -> CoherenceScores {
    let topics: Vec<Vec<TermId>> = model.phi.iter().map(|r| top_n_terms(r, top_n)).collect();
    umass_for_terms(corpus, &topics)
}

/// NPMI from window probabilities; −1 for pairs that never co-occur.
pub fn npmi(p_i: f64, p_j: f64, p_ij: f64) -> f64 {
    if p_ij <= 0.0 {
        return -1.0;
    }
    if p_ij >= 1.0 {
        return 1.0;
    }
    ((p_ij / (p_i * p_j)).ln() / -p_ij.ln()).clamp(-1.0, 1.0)
}

/// Window presence counts for a set of terms over ordered documents.
pub struct WindowCounts {
    pub windows: u64,
    pub single: HashMap<TermId, u64>,
    pub pair: HashMap<(TermId, TermId), u64>,
}

/// Slide a window of `window` tokens over each document (a document shorter
/// than the window contributes one window) and count term presence.
pub fn window_counts(docs: &[Vec<TermId>], terms: &BTreeSet<TermId>, window: usize) -> WindowCounts {
    let window = window.max(1);
    let mut wc = WindowCounts {
        windows: 0,
        single: HashMap::new(),
        pair: HashMap::new(),
    };
    let record = |present: &BTreeSet<TermId>, wc: &mut WindowCounts| {
        wc.windows += 1;
        let p: Vec<TermId> = present.iter().copied().collect();
        for (i, &a) in p.iter().enumerate() {
            *wc.single.entry(a).or_default() += 1;
            for &b in &p[i + 1..] {
                *wc.pair.entry((a, b)).or_default() += 1;
            }
        }
    };
    for doc in docs {
        if doc.len() <= window {
            let present: BTreeSet<TermId> = doc.iter().copied().filter(|t| terms.contains(t)).collect();
            record(&present, &mut wc);
            continue;
        }
        let mut counts: HashMap<TermId, u32> = HashMap::new();
        let mut present = BTreeSet::new();
        for &t in &doc[..window] {
            if terms.contains(&t) {
                *counts.entry(t).or_default() += 1;
                present.insert(t);
            }
        }
        record(&present, &mut wc);
        for start in 1..=doc.len() - window {
            let out = doc[start - 1];
            if terms.contains(&out) {
                let c = counts.get_mut(&out).expect("tracked");
                *c -= 1;
                if *c == 0 {
                    present.remove(&out);
                }
            }
            let inc = doc[start + window - 1];
            if terms.contains(&inc) {
                *counts.entry(inc).or_default() += 1;
                present.insert(inc);
            }
            record(&present, &mut wc);
        }
    }
    wc
}

pub fn npmi_for_terms(docs: &[Vec<TermId>], topics: &[Vec<TermId>], window: usize) -> CoherenceScores {
    let all: BTreeSet<TermId> = topics.iter().flatten().copied().collect();
    let wc = window_counts(docs, &all, window);
    let n = wc.windows.max(1) as f64;
    let p = |t: TermId| *wc.single.get(&t).unwrap_or(&0) as f64 / n;
    let per_topic = topics
        .iter()
        .map(|top| {
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for m in 1..top.len() {
                for l in 0..m {
                    let (a, b) = (top[l].min(top[m]), top[l].max(top[m]));
                    let pij = *wc.pair.get(&(a, b)).unwrap_or(&0) as f64 / n;
                    sum += npmi(p(a), p(b), pij);
                    pairs += 1;
                }
            }
            if pairs == 0 {
                0.0
            } else {
                sum / pairs as f64
            }
        })
        .collect();
    CoherenceScores::from_topics(per_topic)
}

pub fn npmi_coherence(model: &TopicModel, docs: &[Vec<TermId>], top_n: usize, window: usize) -> CoherenceScores {
    let topics: Vec<Vec<TermId>> = model.phi.iter().map(|r| top_n_terms(r, top_n)).collect();
    npmi_for_terms(docs, &topics, window)
}

/// Inputs shared by every fit in a sweep.
pub struct SweepInput<'a> {
    pub streams: &'a [DocStream],
    pub vocab_size: usize,
    /// Count corpus, for UMass.
    pub corpus: &'a SparseCorpus,
    /// Ordered term sequences, for NPMI.
    pub sequences: &'a [Vec<TermId>],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub measure: CoherenceMeasure,
    pub top_n: usize,
    pub window: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            measure: CoherenceMeasure::Umass,
            top_n: 10,
            window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub k: usize,
    pub seed: u64,
    pub coherence: Option<f64>,
    pub per_topic: Vec<f64>,
    pub model_path: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub measure: CoherenceMeasure,
    pub top_n: usize,
    pub records: Vec<SweepRecord>,
    pub selected_k: usize,
}

impl SweepResult {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("k\tcoherence\tseed\n");
        for r in &self.records {
            match r.coherence {
                Some(c) => {
                    let _ = writeln!(s, "{}\t{:.6}\t{}", r.k, c, r.seed);
                }
                None => {
                    let _ = writeln!(s, "{}\tNA\t{}", r.k, r.seed);
                }
            }
        }
        s
    }

    /// Line plot of coherence against K.
    pub fn to_svg(&self) -> String {
        let pts: Vec<(usize, f64)> = self
            .records
            .iter()
            .filter_map(|r| r.coherence.map(|c| (r.k, c)))
            .collect();
        let (w, h, pad) = (480.0, 320.0, 48.0);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        );
        if pts.is_empty() {
            svg.push_str("</svg>\n");
            return svg;
        }
        let kmin = pts.iter().map(|p| p.0).min().unwrap() as f64;
        let kmax = pts.iter().map(|p| p.0).max().unwrap() as f64;
        let cmin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let cmax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let kspan = if kmax > kmin { kmax - kmin } else { 1.0 };
        let cspan = if cmax > cmin { cmax - cmin } else { 1.0 };
        let x = |k: f64| pad + (k - kmin) / kspan * (w - 2.0 * pad);
        let y = |c: f64| h - pad - (c - cmin) / cspan * (h - 2.0 * pad);
        let _ = writeln!(
            svg,
            "<line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
             <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{0}\" stroke=\"black\"/>",
            h - pad,
            w - pad
        );
        let poly: Vec<String> = pts.iter().map(|&(k, c)| format!("{:.2},{:.2}", x(k as f64), y(c))).collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>",
            poly.join(" ")
        );
        for &(k, c) in &pts {
            let fill = if k == self.selected_k { "crimson" } else { "steelblue" };
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{fill}\"/>\n\
                 <text x=\"{:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{k}</text>",
                x(k as f64),
                y(c),
                x(k as f64),
                h - pad + 16.0
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">number of topics</text>\n\
             <text x=\"14\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{} coherence</text>\n\
             <text x=\"{pad}\" y=\"{}\" font-size=\"10\">{:.3}</text>\n\
             <text x=\"{pad}\" y=\"{}\" font-size=\"10\">{:.3}</text>",
            w / 2.0,
            h - 8.0,
            h / 2.0,
            h / 2.0,
            self.measure,
            pad - 6.0,
            cmax,
            h - pad - 4.0,
            cmin
        );
        svg.push_str("</svg>\n");
        svg
    }
}

/// argmax over successful records; ties go to the smaller K.
pub fn select_k(records: &[SweepRecord]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in records {
        if let Some(c) = r.coherence {
            match best {
                Some((_, b)) if c <= b => {}
                _ => best = Some((r.k, c)),
            }
        }
    }
    best.map(|b| b.0)
}

/// Fit one model per K (seed = base seed + K), score each, pick the best.
/// Returns the result together with the fitted models, in grid order.
pub fn sweep(
    input: &SweepInput<'_>,
    k_grid: &[usize],
    base: &LdaConfig,
    settings: &SweepSettings,
) -> Result<(SweepResult, Vec<Option<TopicModel>>)> {
    if k_grid.is_empty() {
        return Err(Error::InvalidArgument("empty K grid".into()));
    }
    if k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("K grid must be strictly increasing".into()));
    }
    let fitted: Vec<(SweepRecord, Option<TopicModel>)> = k_grid
        .par_iter()
        .map(|&k| {
            let seed = base.seed.wrapping_add(k as u64);
            let cfg = LdaConfig { k, seed, ..*base };
            match fit(input.streams, input.vocab_size, &cfg) {
                Ok(model) => {
                    let scores = match settings.measure {
                        CoherenceMeasure::Umass => umass_coherence(&model, input.corpus, settings.top_n),
                        CoherenceMeasure::Npmi => {
                            npmi_coherence(&model, input.sequences, settings.top_n, settings.window)
                        }
                    };
                    (
                        SweepRecord {
                            k,
                            seed,
                            coherence: Some(scores.mean),
                            per_topic: scores.per_topic,
                            model_path: None,
                            error: None,
                        },
                        Some(model),
                    )
                }
                Err(e) => {
                    log::warn!("sweep: K = {k} failed: {e}");
                    (
                        SweepRecord {
                            k,
                            seed,
                            coherence: None,
                            per_topic: vec![],
                            model_path: None,
                            error: Some(e.to_string()),
                        },
                        None,
                    )
                }
            }
        })
        .collect();
    let (records, models): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let selected_k = select_k(&records)
        .ok_or_else(|| Error::InvalidArgument("every K in the grid failed to fit".into()))?;
    Ok((
        SweepResult {
            measure: settings.measure,
            top_n: settings.top_n,
            records,
            selected_k,
        },
        models,
    ))
}
