//! Synthetic note corpora with known topics, negations and funnel counts.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_jsonl, ClinicalNote};
use crate::negation::TriggerLexicon;
use crate::section::Stoplist;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub k_true: usize,
    pub docs_per_topic: usize,
    /// Distinct topic words, shared ones included.
    pub vocab_size: usize,
    /// Words every topic may emit; ignored when `disjoint` is set.
    pub shared_words: usize,
    /// Probability mass each topic gives to the shared words.
    pub shared_mass: f64,
    pub disjoint: bool,
    /// Zipf exponent of word frequencies inside a topic block.
    pub zipf_exponent: f64,
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    pub missing_impression_rate: f64,
    /// Share of notes whose impression holds only stop words and digits.
    pub stopword_note_rate: f64,
    /// Share of eligible notes given one "No a b." sentence.
    pub negation_rate: f64,
    /// Share of each topic's eligible notes carrying that topic's planted term.
    pub planted_rate: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            k_true: 5,
            docs_per_topic: 400,
            vocab_size: 200,
            shared_words: 10,
            shared_mass: 0.05,
            disjoint: false,
            zipf_exponent: 1.0,
            doc_len_min: 8,
            doc_len_max: 16,
            missing_impression_rate: 0.0,
            stopword_note_rate: 0.0,
            negation_rate: 0.0,
            planted_rate: 0.0,
            seed: 7,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.k_true == 0 || self.docs_per_topic == 0 {
            return bad("k_true and docs_per_topic must be positive".into());
        }
        for (name, r) in [
            ("shared_mass", self.shared_mass),
            ("missing_impression_rate", self.missing_impression_rate),
            ("stopword_note_rate", self.stopword_note_rate),
            ("negation_rate", self.negation_rate),
            ("planted_rate", self.planted_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} = {r} outside [0, 1]"));
            }
        }
        if self.missing_impression_rate + self.stopword_note_rate > 1.0 {
            return bad("missing_impression_rate + stopword_note_rate exceeds 1".into());
        }
        let shared = self.effective_shared();
        if self.vocab_size < shared + 2 * self.k_true {
            return bad(format!("vocab_size {} too small for {} topics", self.vocab_size, self.k_true));
        }
        if self.doc_len_min < 2 || self.doc_len_max < self.doc_len_min {
            return bad("document length range must satisfy 2 <= min <= max".into());
        }
        if !(self.zipf_exponent >= 0.0) {
            return bad("zipf_exponent must be non-negative".into());
        }
        Ok(())
    }

    fn effective_shared(&self) -> usize {
        if self.disjoint {
            0
        } else {
            self.shared_words
        }
    }

    pub fn num_notes(&self) -> usize {
        self.k_true * self.docs_per_topic
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteTruth {
    pub note_id: String,
    pub topic: usize,
    pub has_impression: bool,
    pub stopword_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedNegation {
    pub note_id: String,
    pub sentence: String,
    pub fused_token: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedFunnel {
    pub total_notes: usize,
    pub notes_with_impression: usize,
    pub notes_nonempty_after_preprocess: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: GeneratorSpec,
    /// Topic words followed by the shared words; columns of `phi`.
    pub vocabulary: Vec<String>,
    pub topic_blocks: Vec<Vec<String>>,
    pub shared: Vec<String>,
    pub phi: Vec<Vec<f64>>,
    pub notes: Vec<NoteTruth>,
    pub negations: Vec<PlantedNegation>,
    pub planted_terms: Vec<String>,
    /// `planted_presence[term][topic]`: notes of each true topic containing the planted term.
    pub planted_presence: Vec<Vec<u64>>,
    pub funnel: ExpectedFunnel,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Pronounceable words that collide with no stop word or trigger word.
fn make_words(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut banned: HashSet<String> = TriggerLexicon::default().words();
    let stop = Stoplist::bundled();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        }
        if stop.contains(&w) || banned.contains(&w) || !seen.insert(w.clone()) {
            continue;
        }
        banned.insert(w.clone());
        out.push(w);
    }
    out
}

const STOPWORD_IMPRESSIONS: &[&str] = &[
    "1. Stable chest. 2. See final report.",
    "No change. Stable.",
    "See the final report for this.",
    "Stable chest, 2 view.",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Render words as sentences using only stop-word filler.
fn render(words: &[String], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let left = words.len() - i;
        let take = if left <= 3 { left } else { rng.gen_range(2..=3) };
        let w = &words[i..i + take];
        let s = match (take, rng.gen_range(0..4)) {
            (1, _) => format!("{}.", capitalize(&w[0])),
            (2, 0) => format!("There is {} and {}.", w[0], w[1]),
            (2, 1) => format!("{} with {}.", capitalize(&w[0]), w[1]),
            (2, _) => format!("{} {}.", capitalize(&w[0]), w[1]),
            (_, 0) => format!("{}, {} and {}.", capitalize(&w[0]), w[1], w[2]),
            (_, 1) => format!("{} {} in the {}.", capitalize(&w[0]), w[1], w[2]),
            (_, _) => format!("There is {} {} with {}.", w[0], w[1], w[2]),
        };
        out.push(s);
        i += take;
    }
    out
}

fn pick(n: usize, rate: f64, pool: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let want = ((rate * n as f64).round() as usize).min(pool.len());
    let mut chosen: Vec<usize> = index::sample(rng, pool.len(), want).into_iter().map(|i| pool[i]).collect();
    chosen.sort_unstable();
    chosen
}

/// Build the corpus and its ground truth. Same spec, same bytes.
pub fn generate(spec: &GeneratorSpec) -> Result<(Vec<ClinicalNote>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.k_true;
    let n_shared = spec.effective_shared();
    let n_block = spec.vocab_size - n_shared;

    let words = make_words(spec.vocab_size + k, &mut rng);
    let mut blocks = Vec::with_capacity(k);
    let mut at = 0;
    for t in 0..k {
        let size = n_block / k + usize::from(t < n_block % k);
        blocks.push(words[at..at + size].to_vec());
        at += size;
    }
    let shared: Vec<String> = words[at..at + n_shared].to_vec();
    let planted_terms: Vec<String> = if spec.planted_rate > 0.0 {
        words[spec.vocab_size..spec.vocab_size + k].to_vec()
    } else {
        Vec::new()
    };
    let vocabulary: Vec<String> = words[..spec.vocab_size].to_vec();

    let shared_mass = if n_shared == 0 { 0.0 } else { spec.shared_mass };
    let mut phi = vec![vec![0.0; spec.vocab_size]; k];
    let mut offset = 0;
    for (t, block) in blocks.iter().enumerate() {
        let z: Vec<f64> = (0..block.len()).map(|r| 1.0 / ((r + 1) as f64).powf(spec.zipf_exponent)).collect();
        let zsum: f64 = z.iter().sum();
        for (r, w) in z.iter().enumerate() {
            phi[t][offset + r] = (1.0 - shared_mass) * w / zsum;
        }
        for s in 0..n_shared {
            phi[t][n_block + s] = shared_mass / n_shared as f64;
        }
        offset += block.len();
    }
    let samplers: Vec<WeightedIndex<f64>> = phi
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(|e| Error::InvalidArgument(e.to_string())))
        .collect::<Result<_>>()?;

    let n = spec.num_notes();
    let mut topics: Vec<usize> = (0..n).map(|i| i % k).collect();
    topics.shuffle(&mut rng);

    let all: Vec<usize> = (0..n).collect();
    let missing: HashSet<usize> = pick(n, spec.missing_impression_rate, &all, &mut rng).into_iter().collect();
    let with_imp: Vec<usize> = all.iter().copied().filter(|i| !missing.contains(i)).collect();
    let stop_notes: HashSet<usize> = pick(n, spec.stopword_note_rate, &with_imp, &mut rng).into_iter().collect();
    let eligible: Vec<usize> = with_imp.iter().copied().filter(|i| !stop_notes.contains(i)).collect();
    let negated: HashSet<usize> =
        pick(eligible.len(), spec.negation_rate, &eligible, &mut rng).into_iter().collect();
    let mut planted: HashSet<usize> = HashSet::new();
    let mut planted_presence = vec![vec![0u64; k]; planted_terms.len()];
    if !planted_terms.is_empty() {
        for t in 0..k {
            let pool: Vec<usize> = eligible.iter().copied().filter(|&i| topics[i] == t).collect();
            let chosen = pick(pool.len(), spec.planted_rate, &pool, &mut rng);
            planted_presence[t][t] = chosen.len() as u64;
            planted.extend(chosen);
        }
    }

    let mut notes = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    let mut negations = Vec::new();
    for (i, &t) in topics.iter().enumerate() {
        let note_id = format!("synth-{:05}", i + 1);
        let len = rng.gen_range(spec.doc_len_min..=spec.doc_len_max);
        let body: Vec<String> = (0..len).map(|_| vocabulary[samplers[t].sample(&mut rng)].clone()).collect();
        let findings_len = rng.gen_range(spec.doc_len_min..=spec.doc_len_max);
        let findings: Vec<String> =
            (0..findings_len).map(|_| vocabulary[samplers[t].sample(&mut rng)].clone()).collect();
        let mut text = format!("EXAM: Chest radiograph, {} views.\nFINDINGS: {}\n", rng.gen_range(1..=3), render(&findings, &mut rng).join(" "));
        let stopword_only = stop_notes.contains(&i);
        if !missing.contains(&i) {
            let mut sentences = if stopword_only {
                vec![STOPWORD_IMPRESSIONS[rng.gen_range(0..STOPWORD_IMPRESSIONS.len())].to_string()]
            } else {
                render(&body, &mut rng)
            };
            if planted.contains(&i) {
                let at = rng.gen_range(0..=sentences.len());
                sentences.insert(at, format!("{}.", capitalize(&planted_terms[t])));
            }
            if negated.contains(&i) {
                let a = &body[rng.gen_range(0..body.len())];
                let b = &body[rng.gen_range(0..body.len())];
                let sentence = format!("No {a} {b}.");
                let at = rng.gen_range(0..=sentences.len());
                sentences.insert(at, sentence.clone());
                negations.push(PlantedNegation {
                    note_id: note_id.clone(),
                    sentence,
                    fused_token: format!("no_{a}_{b}"),
                });
            }
            text.push_str("IMPRESSION: ");
            text.push_str(&sentences.join(" "));
            text.push('\n');
        }
        notes.push(ClinicalNote {
            note_id: note_id.clone(),
            patient_id: format!("p{:04}", i / 3 + 1),
            timestamp: None,
            raw_text: text,
        });
        truths.push(NoteTruth {
            note_id,
            topic: t,
            has_impression: !missing.contains(&i),
            stopword_only,
        });
    }

    let funnel = ExpectedFunnel {
        total_notes: n,
        notes_with_impression: with_imp.len(),
        notes_nonempty_after_preprocess: eligible.len(),
    };
    let truth = GroundTruth {
        spec: spec.clone(),
        vocabulary,
        topic_blocks: blocks,
        shared,
        phi,
        notes: truths,
        negations,
        planted_terms,
        planted_presence,
        funnel,
    };
    Ok((notes, truth))
}

/// Write `notes.jsonl` and `ground_truth.json` into `dir`.
pub fn write_corpus(dir: &Path, notes: &[ClinicalNote], truth: &GroundTruth) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join("notes.jsonl"), notes)?;
    let gt = dir.join("ground_truth.json");
    fs::write(&gt, serde_json::to_string_pretty(truth)? + "\n").map_err(|e| Error::io(&gt, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::section::Sectioner;

    fn small() -> GeneratorSpec {
        GeneratorSpec {
            docs_per_topic: 20,
            missing_impression_rate: 0.2,
            stopword_note_rate: 0.05,
            negation_rate: 0.3,
            planted_rate: 0.5,
            ..GeneratorSpec::default()
        }
    }

    #[test]
    fn exact_impression_count() {
        let spec = GeneratorSpec {
            k_true: 5,
            docs_per_topic: 20,
            missing_impression_rate: 0.2,
            ..GeneratorSpec::default()
        };
        let (notes, truth) = generate(&spec).unwrap();
        let s = Sectioner::default();
        let labelled = notes.iter().filter(|n| s.extract_impression(n).is_some()).count();
        assert_eq!(labelled, 80);
        assert_eq!(truth.funnel.notes_with_impression, 80);
    }

    #[test]
    fn disjoint_supports() {
        let spec = GeneratorSpec {
            disjoint: true,
            docs_per_topic: 5,
            ..GeneratorSpec::default()
        };
        let (_, truth) = generate(&spec).unwrap();
        for a in 0..5 {
            for b in a + 1..5 {
                assert!(truth.phi[a].iter().zip(&truth.phi[b]).all(|(x, y)| *x == 0.0 || *y == 0.0));
            }
            assert!((truth.phi[a].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let (a, ta) = generate(&small()).unwrap();
        let (b, tb) = generate(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&ta).unwrap(), serde_json::to_string(&tb).unwrap());
    }

    #[test]
    fn negation_count_follows_rate() {
        let (_, t) = generate(&small()).unwrap();
        let eligible = t.funnel.notes_nonempty_after_preprocess as f64;
        assert!((t.negations.len() as f64 - 0.3 * eligible).abs() <= 1.0);
        assert!(t.negations.iter().all(|n| n.fused_token.starts_with("no_")));
    }

    #[test]
    fn words_avoid_stopwords() {
        let (_, t) = generate(&small()).unwrap();
        let stop = Stoplist::bundled();
        assert!(t.vocabulary.iter().chain(&t.planted_terms).all(|w| !stop.contains(w)));
    }

    #[test]
    fn rejects_bad_rates() {
        let spec = GeneratorSpec {
            negation_rate: 1.5,
            ..GeneratorSpec::default()
        };
        assert!(generate(&spec).is_err());
    }
}
