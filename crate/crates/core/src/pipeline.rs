//! Stage runner. Every stage reads its inputs from artifacts in a work
//! directory and writes its outputs beside them, so any stage can be rerun
//! on its own.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::discriminate::{rank_features, topic_of_interest, FeatureRanking};
use crate::error::{Error, Result};
use crate::ingest::{funnel_report, load_corpus, read_jsonl_items, write_jsonl, ClinicalNote, CorpusStats, DropStage, InputFormat};
use crate::lda::{dominant_topics, fit, prepare_tokens, top_keywords, TopicAssignment, TopicModel, WeightMode};
use crate::negation::{NegationDetector, NegationSpan, TriggerLexicon};
use crate::report::{self, Manifest, Table1Input};
use crate::section::{split_sentences, Normalizer, Sectioner, Stoplist, TokenizedDoc};
use crate::select::{sweep, SweepInput, SweepResult};
use crate::vectorize::{
    build_vocabulary, detect_phrases, prune_vocabulary, read_vocab_and_corpus, tfidf, write_vocab_and_corpus,
    SparseCorpus, TermId, Vocabulary,
};

pub const NOTES: &str = "notes.jsonl";
pub const IMPRESSIONS: &str = "impressions.jsonl";
pub const CLEANED: &str = "cleaned.jsonl";
pub const DOCS: &str = "docs.jsonl";
pub const NEGATIONS: &str = "negations.jsonl";
pub const PHRASED: &str = "phrased.jsonl";
pub const VOCAB: &str = "vocab.tsv";
pub const COUNTS: &str = "corpus.counts";
pub const TFIDF: &str = "corpus.tfidf";
pub const STATS: &str = "stats.json";
pub const SWEEP_DIR: &str = "sweep";
pub const SWEEP_JSON: &str = "sweep.json";
pub const MODEL: &str = "model.json";
pub const ASSIGNMENTS: &str = "assignments.jsonl";
pub const RANKING: &str = "ranking.json";
pub const REPORT_DIR: &str = "report";
pub const STAGES: &str = "stages.json";
/// Stop list staged by a standalone `preprocess --stoplist` for `negate`.
pub const STOPLIST: &str = "stoplist.txt";

pub const STAGE_NAMES: [&str; 9] = [
    "ingest",
    "preprocess",
    "negate",
    "phrases",
    "vectorize",
    "sweep",
    "fit",
    "discriminate",
    "report",
];

/// Cap rayon's global pool with `NOTEMINE_THREADS` when it is set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("NOTEMINE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("NOTEMINE_THREADS={v:?} is not a positive integer")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Impression {
    pub note_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteNegations {
    pub note_id: String,
    pub spans: Vec<NegationSpan>,
}

/// Active stop list: the configured file (or the bundled list) plus extras.
pub fn build_stoplist(cfg: &PipelineConfig) -> Result<Stoplist> {
    let mut stop = match &cfg.preprocess.stoplist {
        Some(p) => Stoplist::load(p)?,
        None => Stoplist::bundled(),
    };
    if let Some(p) = &cfg.preprocess.extra_stopwords {
        stop.extend(&Stoplist::load(p)?);
    }
    Ok(stop)
}

pub fn build_detector(cfg: &PipelineConfig) -> Result<NegationDetector> {
    let lexicon = match &cfg.negation.lexicon {
        Some(p) => TriggerLexicon::load(p)?,
        None => TriggerLexicon::default(),
    };
    Ok(NegationDetector::new(lexicon, cfg.negation.window))
}

pub fn stage_ingest(cfg: &PipelineConfig, out: &Path) -> Result<usize> {
    let input = cfg
        .input
        .path
        .as_deref()
        .ok_or_else(|| Error::Config("no input path configured".into()))?;
    let format = cfg.input.format.unwrap_or_else(|| InputFormat::from_path(input));
    let notes = load_corpus(input, format)?;
    write_jsonl(&out.join(NOTES), &notes)?;
    Ok(notes.len())
}

pub fn stage_preprocess(cfg: &PipelineConfig, dir: &Path) -> Result<usize> {
    let notes: Vec<ClinicalNote> = read_jsonl_items(&dir.join(NOTES))?;
    let sectioner = Sectioner::new(&cfg.preprocess.section_labels)?;
    let cleaner = Normalizer {
        stoplist: Stoplist::empty(),
        split_hyphens: cfg.preprocess.split_hyphens,
        stem: cfg.preprocess.stem,
    };
    let mut impressions = Vec::new();
    let mut cleaned = Vec::new();
    for note in &notes {
        let Some(parsed) = sectioner.extract_impression(note) else {
            continue;
        };
        let text = parsed.impression().to_string();
        cleaned.push(TokenizedDoc {
            note_id: note.note_id.clone(),
            sentences: cleaner.clean_sentences(&split_sentences(&text)),
        });
        impressions.push(Impression {
            note_id: note.note_id.clone(),
            text,
        });
    }
    write_jsonl(&dir.join(IMPRESSIONS), &impressions)?;
    write_jsonl(&dir.join(CLEANED), &cleaned)?;
    Ok(cleaned.len())
}

/// Negation fusion, then stop-word removal; notes left empty are dropped.
pub fn stage_negate(cfg: &PipelineConfig, dir: &Path) -> Result<usize> {
    let docs: Vec<TokenizedDoc> = read_jsonl_items(&dir.join(CLEANED))?;
    let stoplist = match (&cfg.preprocess.stoplist, dir.join(STOPLIST)) {
        (None, staged) if staged.exists() => {
            let mut s = Stoplist::load(&staged)?;
            if let Some(p) = &cfg.preprocess.extra_stopwords {
                s.extend(&Stoplist::load(p)?);
            }
            s
        }
        _ => build_stoplist(cfg)?,
    };
    let stop = Normalizer::new(stoplist);
    let detector = if cfg.negation.enabled {
        Some(build_detector(cfg)?)
    } else {
        None
    };
    let mut kept = Vec::new();
    let mut negations = Vec::new();
    for doc in docs {
        let mut spans = Vec::new();
        let mut sentences = Vec::with_capacity(doc.sentences.len());
        for (si, s) in doc.sentences.iter().enumerate() {
            let fused = match &detector {
                Some(d) => {
                    let (toks, sp) = d.detect(si, s);
                    spans.extend(sp);
                    toks
                }
                None => s.clone(),
            };
            sentences.push(stop.remove_stopwords(fused));
        }
        let mut out = TokenizedDoc {
            note_id: doc.note_id,
            sentences,
        };
        out.compact();
        if !spans.is_empty() {
            negations.push(NoteNegations {
                note_id: out.note_id.clone(),
                spans,
            });
        }
        if !out.is_empty() {
            kept.push(out);
        }
    }
    write_jsonl(&dir.join(DOCS), &kept)?;
    write_jsonl(&dir.join(NEGATIONS), &negations)?;
    Ok(kept.len())
}

pub fn stage_phrases(cfg: &PipelineConfig, dir: &Path) -> Result<usize> {
    let docs: Vec<TokenizedDoc> = read_jsonl_items(&dir.join(DOCS))?;
    let phrased = if cfg.phrases.enabled {
        detect_phrases(&docs, &cfg.phrases.params)
    } else {
        docs
    };
    write_jsonl(&dir.join(PHRASED), &phrased)?;
    Ok(phrased.len())
}

/// Build, prune and weight the vocabulary. Documents that end up with nothing
/// to model are removed and the vocabulary rebuilt until none remain.
pub fn stage_vectorize(cfg: &PipelineConfig, dir: &Path) -> Result<usize> {
    let mut docs: Vec<TokenizedDoc> = read_jsonl_items(&dir.join(PHRASED))?;
    loop {
        let (vocab, counts) = build_vocabulary(&docs)?;
        let (vocab, counts) = prune_vocabulary(&vocab, &counts, cfg.tfidf.min_df, cfg.tfidf.max_df_ratio);
        let weighted = tfidf(&counts, &vocab, cfg.tfidf.variant);
        let empty: HashSet<&str> = weighted
            .docs
            .iter()
            .filter(|d| {
                d.counts.is_empty()
                    || (cfg.lda.weight_mode == WeightMode::ScaledTfidf && d.weights.as_ref().is_none_or(Vec::is_empty))
            })
            .map(|d| d.note_id.as_str())
            .collect();
        if empty.is_empty() {
            write_vocab_and_corpus(dir, &vocab, &weighted)?;
            return Ok(weighted.docs.len());
        }
        if empty.len() == docs.len() {
            return Err(Error::EmptyCorpus);
        }
        let empty: HashSet<String> = empty.into_iter().map(String::from).collect();
        docs.retain(|d| !empty.contains(&d.note_id));
    }
}

/// Funnel counts derived from whichever stage artifacts exist.
pub fn corpus_stats(dir: &Path) -> Result<CorpusStats> {
    let ids = |name: &str| -> Result<Option<Vec<String>>> {
        let p = dir.join(name);
        if !p.exists() {
            return Ok(None);
        }
        #[derive(Deserialize)]
        struct Id {
            note_id: String,
        }
        Ok(Some(read_jsonl_items::<Id>(&p)?.into_iter().map(|i| i.note_id).collect()))
    };
    let notes = ids(NOTES)?.unwrap_or_default();
    let mut stats = CorpusStats::new(notes.len());
    let drop_missing = |from: &[String], to: &[String], stage: DropStage, stats: &mut CorpusStats| {
        let keep: HashSet<&str> = to.iter().map(String::as_str).collect();
        for id in from.iter().filter(|id| !keep.contains(id.as_str())) {
            stats.record_drop(id.clone(), stage);
        }
    };
    let Some(imp) = ids(IMPRESSIONS)? else {
        return Ok(stats);
    };
    stats.notes_with_impression = imp.len();
    drop_missing(&notes, &imp, DropStage::NoImpression, &mut stats);
    let Some(docs) = ids(DOCS)? else {
        return Ok(stats);
    };
    stats.notes_nonempty_after_preprocess = docs.len();
    drop_missing(&imp, &docs, DropStage::EmptyAfterPreprocess, &mut stats);
    let counts = dir.join(COUNTS);
    if counts.exists() {
        let corpus = SparseCorpus::from_text(&read_text(&counts)?, None)?;
        let ids: Vec<String> = corpus.docs.into_iter().map(|d| d.note_id).collect();
        drop_missing(&docs, &ids, DropStage::EmptyAfterVectorize, &mut stats);
    }
    Ok(stats)
}

fn write_stats(dir: &Path) -> Result<CorpusStats> {
    let stats = corpus_stats(dir)?;
    write_json(&dir.join(STATS), &stats)?;
    Ok(stats)
}

fn load_corpus_dir(cfg: &PipelineConfig, dir: &Path) -> Result<(Vocabulary, SparseCorpus, Vec<crate::lda::DocStream>)> {
    let (vocab, corpus) = read_vocab_and_corpus(dir)?;
    let streams = prepare_tokens(&corpus, cfg.lda.weight_mode, cfg.lda.tfidf_scale)?;
    Ok((vocab, corpus, streams))
}

/// Ordered term ids per corpus document, for window-based coherence.
fn sequences(dir: &Path, vocab: &Vocabulary, corpus: &SparseCorpus) -> Result<Vec<Vec<TermId>>> {
    let docs: Vec<TokenizedDoc> = read_jsonl_items(&dir.join(PHRASED))?;
    let by_id: BTreeMap<&str, &TokenizedDoc> = docs.iter().map(|d| (d.note_id.as_str(), d)).collect();
    Ok(corpus
        .docs
        .iter()
        .map(|d| {
            by_id
                .get(d.note_id.as_str())
                .map(|t| t.tokens().filter_map(|w| vocab.id(w)).collect())
                .unwrap_or_default()
        })
        .collect())
}

pub fn stage_sweep(cfg: &PipelineConfig, dir: &Path) -> Result<SweepResult> {
    let (vocab, corpus, streams) = load_corpus_dir(cfg, dir)?;
    let seqs = match cfg.sweep.settings.measure {
        crate::select::CoherenceMeasure::Npmi => sequences(dir, &vocab, &corpus)?,
        crate::select::CoherenceMeasure::Umass => Vec::new(),
    };
    let input = SweepInput {
        streams: &streams,
        vocab_size: vocab.len(),
        corpus: &corpus,
        sequences: &seqs,
    };
    let (mut result, models) = sweep(&input, &cfg.sweep.grid, &cfg.lda, &cfg.sweep.settings)?;
    let sdir = dir.join(SWEEP_DIR);
    fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
    for (rec, model) in result.records.iter_mut().zip(models) {
        if let Some(m) = model {
            let name = format!("model_k{}.json", rec.k);
            m.with_vocabulary(&vocab, tfidf_of(cfg)).save(&sdir.join(&name))?;
            rec.model_path = Some(format!("{SWEEP_DIR}/{name}"));
        }
    }
    write_json(&sdir.join(SWEEP_JSON), &result)?;
    write_text(&sdir.join("coherence.tsv"), &result.to_tsv())?;
    write_text(&sdir.join("coherence.svg"), &result.to_svg())?;
    Ok(result)
}

fn tfidf_of(cfg: &PipelineConfig) -> Option<crate::vectorize::TfidfVariant> {
    (cfg.lda.weight_mode == WeightMode::ScaledTfidf).then_some(cfg.tfidf.variant)
}

/// With a sweep, adopt the model fitted at the selected K; otherwise fit at `[lda] k`.
pub fn stage_fit(cfg: &PipelineConfig, dir: &Path) -> Result<TopicModel> {
    let model = if cfg.sweep.enabled {
        let result: SweepResult = read_json(&dir.join(SWEEP_DIR).join(SWEEP_JSON))?;
        let rec = result
            .records
            .iter()
            .find(|r| r.k == result.selected_k)
            .and_then(|r| r.model_path.clone())
            .ok_or_else(|| Error::Model("sweep has no model for the selected K".into()))?;
        TopicModel::load(&dir.join(rec))?
    } else {
        let (vocab, _, streams) = load_corpus_dir(cfg, dir)?;
        fit(&streams, vocab.len(), &cfg.lda)?.with_vocabulary(&vocab, tfidf_of(cfg))
    };
    model.save(&dir.join(MODEL))?;
    write_jsonl(&dir.join(ASSIGNMENTS), &dominant_topics(&model))?;
    Ok(model)
}

pub fn stage_discriminate(cfg: &PipelineConfig, dir: &Path, model_path: &Path) -> Result<FeatureRanking> {
    let model = TopicModel::load(model_path)?;
    let (vocab, corpus) = read_vocab_and_corpus(dir)?;
    if model.vocab_hash != crate::lda::vocab_hash(&vocab) {
        return Err(Error::Model("model was fitted on a different vocabulary".into()));
    }
    let assignments = dominant_topics(&model);
    let ranking = rank_features(
        &corpus,
        &vocab,
        &assignments,
        model.num_topics(),
        cfg.discriminate.alpha_level,
        cfg.discriminate.top_n,
        cfg.discriminate.mode,
    )?;
    write_json(&dir.join(RANKING), &ranking)?;
    write_text(&dir.join("table2.tsv"), &report::table2_tsv(&ranking, None))?;
    Ok(ranking)
}

/// Optional artifacts the report can draw on, all from one run.
#[derive(Debug, Clone, Default)]
pub struct ReportSources {
    pub ranking: Option<PathBuf>,
    pub sweep: Option<PathBuf>,
    pub stats_dir: Option<PathBuf>,
    pub impressions: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl ReportSources {
    /// Everything the run wrote into `dir`.
    pub fn from_dir(dir: &Path, labels: Option<PathBuf>) -> Self {
        let some = |p: PathBuf| p.exists().then_some(p);
        ReportSources {
            ranking: some(dir.join(RANKING)),
            sweep: some(dir.join(SWEEP_DIR).join(SWEEP_JSON)),
            stats_dir: Some(dir.to_path_buf()),
            impressions: some(dir.join(IMPRESSIONS)),
            labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub num_topics: usize,
    pub selected_k: Option<usize>,
    /// 1-based, as printed in the tables.
    pub topic_of_interest: Option<usize>,
    pub funnel: CorpusStats,
}

pub fn stage_report(cfg: &PipelineConfig, model_path: &Path, src: &ReportSources, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let model = TopicModel::load(model_path)?;
    let assignments: Vec<TopicAssignment> = dominant_topics(&model);
    let labels = match &src.labels {
        Some(p) => Some(report::load_labels(p)?),
        None => None,
    };
    let texts: Option<BTreeMap<String, String>> = match &src.impressions {
        Some(p) => Some(
            read_jsonl_items::<Impression>(p)?
                .into_iter()
                .map(|i| (i.note_id, i.text))
                .collect(),
        ),
        None => None,
    };
    let keywords = top_keywords(&model, cfg.report.keywords);
    let t1 = report::table1(&Table1Input {
        model: &model,
        assignments: &assignments,
        keywords: &keywords,
        labels: labels.as_deref(),
        texts: texts.as_ref(),
        threshold: cfg.report.threshold,
        max_representatives: cfg.report.representatives,
    });
    write_text(&out.join("table1.md"), &t1.to_markdown())?;
    write_text(&out.join("table1.csv"), &t1.to_csv()?)?;
    write_json(&out.join("table1.json"), &t1)?;

    let mut topic = None;
    if let Some(p) = &src.ranking {
        let ranking: FeatureRanking = read_json(p)?;
        write_text(&out.join("table2.md"), &report::table2_markdown(&ranking, labels.as_deref()))?;
        write_text(&out.join("table2.csv"), &report::table2_csv(&ranking, labels.as_deref())?)?;
        write_text(&out.join("table2.tsv"), &report::table2_tsv(&ranking, labels.as_deref()))?;
        topic = topic_of_interest(&ranking).ok().map(|t| t + 1);
    }
    let mut selected_k = None;
    if let Some(p) = &src.sweep {
        let result: SweepResult = read_json(p)?;
        write_text(&out.join("coherence.tsv"), &result.to_tsv())?;
        write_text(&out.join("coherence.svg"), &result.to_svg())?;
        selected_k = Some(result.selected_k);
    }
    let funnel = match &src.stats_dir {
        Some(d) => corpus_stats(d)?,
        None => CorpusStats::default(),
    };
    if src.stats_dir.is_some() {
        write_text(&out.join("funnel.txt"), &funnel_report(&funnel))?;
    }
    let summary = RunSummary {
        num_topics: model.num_topics(),
        selected_k,
        topic_of_interest: topic,
        funnel,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct StageRecord {
    key: String,
    outputs: BTreeMap<String, String>,
}

type StageBook = BTreeMap<String, StageRecord>;

fn hash_optional(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => report::sha256_file(p),
        None => Ok("-".into()),
    }
}

fn hash_inputs(dir: &Path, names: &[&str]) -> Result<String> {
    let mut s = String::new();
    for n in names {
        let p = dir.join(n);
        let h = if p.exists() { report::sha256_file(&p)? } else { "-".into() };
        let _ = writeln!(s, "{n} {h}");
    }
    Ok(s)
}

/// Identity of a stage run: its settings plus the hashes of what it reads.
fn stage_key(cfg: &PipelineConfig, dir: &Path, stage: &str) -> Result<String> {
    let mut k = format!("{stage}\n");
    match stage {
        "ingest" => {
            let _ = writeln!(k, "{:?}", cfg.input);
            k.push_str(&hash_optional(cfg.input.path.as_deref())?);
        }
        "preprocess" => {
            let p = &cfg.preprocess;
            let _ = writeln!(k, "{:?} {} {}", p.section_labels, p.split_hyphens, p.stem);
            k.push_str(&hash_inputs(dir, &[NOTES])?);
        }
        "negate" => {
            let _ = writeln!(k, "{:?}", cfg.negation);
            k.push_str(&hash_optional(cfg.preprocess.stoplist.as_deref())?);
            k.push_str(&hash_optional(cfg.preprocess.extra_stopwords.as_deref())?);
            k.push_str(&hash_optional(cfg.negation.lexicon.as_deref())?);
            k.push_str(&hash_inputs(dir, &[CLEANED, STOPLIST])?);
        }
        "phrases" => {
            let _ = writeln!(k, "{:?}", cfg.phrases);
            k.push_str(&hash_inputs(dir, &[DOCS])?);
        }
        "vectorize" => {
            let _ = writeln!(k, "{:?} {:?}", cfg.tfidf, cfg.lda.weight_mode);
            k.push_str(&hash_inputs(dir, &[PHRASED])?);
        }
        "sweep" | "fit" => {
            let _ = writeln!(k, "{:?} {:?}", cfg.lda, cfg.sweep);
            k.push_str(&hash_inputs(dir, &[VOCAB, COUNTS, TFIDF, PHRASED])?);
            if stage == "fit" && cfg.sweep.enabled {
                k.push_str(&hash_inputs(&dir.join(SWEEP_DIR), &[SWEEP_JSON])?);
            }
        }
        "discriminate" => {
            let _ = writeln!(k, "{:?}", cfg.discriminate);
            k.push_str(&hash_inputs(dir, &[MODEL, VOCAB, COUNTS])?);
        }
        "report" => {
            let _ = writeln!(k, "{:?}", cfg.report);
            k.push_str(&hash_optional(cfg.report.labels.as_deref())?);
            k.push_str(&hash_inputs(dir, &[MODEL, RANKING, IMPRESSIONS, NOTES, DOCS, COUNTS])?);
            k.push_str(&hash_inputs(&dir.join(SWEEP_DIR), &[SWEEP_JSON])?);
        }
        _ => unreachable!("unknown stage {stage}"),
    }
    Ok(report::sha256_hex(k.as_bytes()))
}

fn stage_outputs(cfg: &PipelineConfig, dir: &Path, stage: &str) -> Result<Vec<PathBuf>> {
    let files: Vec<PathBuf> = match stage {
        "ingest" => vec![dir.join(NOTES)],
        "preprocess" => vec![dir.join(IMPRESSIONS), dir.join(CLEANED)],
        "negate" => vec![dir.join(DOCS), dir.join(NEGATIONS)],
        "phrases" => vec![dir.join(PHRASED)],
        "vectorize" => vec![dir.join(VOCAB), dir.join(COUNTS), dir.join(TFIDF)],
        "sweep" => {
            let sdir = dir.join(SWEEP_DIR);
            let mut v = vec![sdir.join(SWEEP_JSON), sdir.join("coherence.tsv"), sdir.join("coherence.svg")];
            v.extend(cfg.sweep.grid.iter().map(|k| sdir.join(format!("model_k{k}.json"))));
            v.into_iter().filter(|p| p.exists()).collect()
        }
        "fit" => vec![dir.join(MODEL), dir.join(ASSIGNMENTS)],
        "discriminate" => vec![dir.join(RANKING), dir.join("table2.tsv")],
        "report" => {
            let rdir = dir.join(REPORT_DIR);
            let mut v: Vec<PathBuf> = fs::read_dir(&rdir)
                .map_err(|e| Error::io(&rdir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "manifest.json"))
                .collect();
            v.sort();
            v
        }
        _ => unreachable!(),
    };
    Ok(files)
}

fn rel(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn outputs_match(dir: &Path, rec: &StageRecord) -> bool {
    !rec.outputs.is_empty()
        && rec
            .outputs
            .iter()
            .all(|(name, h)| report::sha256_file(&dir.join(name)).ok().as_deref() == Some(h.as_str()))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub executed: Vec<&'static str>,
    pub skipped: Vec<&'static str>,
}

/// Run every stage in order. Failures carry the stage name.
pub fn run(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let book_path = dir.join(STAGES);
    let mut book: StageBook = if opts.resume && book_path.exists() {
        read_json(&book_path).unwrap_or_default()
    } else {
        StageBook::new()
    };
    let mut executed = Vec::new();
    let mut skipped = Vec::new();
    let mut summary = None;
    let mut upstream_ran = false;

    for stage in STAGE_NAMES {
        if stage == "sweep" && !cfg.sweep.enabled {
            continue;
        }
        let key = stage_key(cfg, &dir, stage).map_err(|e| e.in_stage(stage))?;
        let can_skip = opts.resume
            && !upstream_ran
            && stage != "report"
            && book.get(stage).is_some_and(|r| r.key == key && outputs_match(&dir, r));
        if can_skip {
            log::info!("{stage}: up to date, skipped");
            skipped.push(stage);
            continue;
        }
        log::info!("{stage}: running");
        let result: Result<()> = (|| {
            match stage {
                "ingest" => {
                    stage_ingest(cfg, &dir)?;
                }
                "preprocess" => {
                    stage_preprocess(cfg, &dir)?;
                }
                "negate" => {
                    if stage_negate(cfg, &dir)? == 0 {
                        return Err(Error::EmptyCorpus);
                    }
                }
                "phrases" => {
                    stage_phrases(cfg, &dir)?;
                }
                "vectorize" => {
                    stage_vectorize(cfg, &dir)?;
                    write_stats(&dir)?;
                }
                "sweep" => {
                    stage_sweep(cfg, &dir)?;
                }
                "fit" => {
                    stage_fit(cfg, &dir)?;
                }
                "discriminate" => {
                    stage_discriminate(cfg, &dir, &dir.join(MODEL))?;
                }
                "report" => {
                    let src = ReportSources::from_dir(&dir, cfg.report.labels.clone());
                    summary = Some(stage_report(cfg, &dir.join(MODEL), &src, &dir.join(REPORT_DIR))?);
                }
                _ => unreachable!(),
            }
            Ok(())
        })();
        result.map_err(|e| e.in_stage(stage))?;
        upstream_ran = true;
        executed.push(stage);
        let outputs = stage_outputs(cfg, &dir, stage)
            .and_then(|files| {
                files
                    .iter()
                    .map(|p| Ok((rel(&dir, p), report::sha256_file(p)?)))
                    .collect::<Result<BTreeMap<_, _>>>()
            })
            .map_err(|e| e.in_stage(stage))?;
        book.insert(stage.to_string(), StageRecord { key, outputs });
        write_json(&book_path, &book).map_err(|e| e.in_stage(stage))?;
    }

    write_manifest(cfg, &dir).map_err(|e| e.in_stage("report"))?;
    Ok(RunOutcome {
        summary: summary.expect("report stage always runs"),
        executed,
        skipped,
    })
}

fn write_manifest(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let mut m = Manifest::new(cfg.source.clone());
    m.seeds.insert("lda".into(), cfg.lda.seed);
    if cfg.sweep.enabled {
        for &k in &cfg.sweep.grid {
            m.seeds.insert(format!("sweep.k{k}"), cfg.lda.seed.wrapping_add(k as u64));
        }
    }
    let inputs = [
        ("input", cfg.input.path.as_deref()),
        ("stoplist", cfg.preprocess.stoplist.as_deref()),
        ("extra_stopwords", cfg.preprocess.extra_stopwords.as_deref()),
        ("lexicon", cfg.negation.lexicon.as_deref()),
        ("labels", cfg.report.labels.as_deref()),
    ];
    for (name, p) in inputs {
        if let Some(p) = p {
            m.inputs.insert(name.into(), report::sha256_file(p)?);
        }
    }
    m.hash_dir(dir, "", &[STAGES])?;
    let sdir = dir.join(SWEEP_DIR);
    if sdir.is_dir() {
        m.hash_dir(&sdir, "sweep/", &[])?;
    }
    m.hash_dir(&dir.join(REPORT_DIR), "report/", &["manifest.json"])?;
    write_text(&dir.join(REPORT_DIR).join("manifest.json"), &m.to_json()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_input_names_ingest() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::parse(
            "[input]\npath = does_not_exist.jsonl\n",
            tmp.path(),
        )
        .unwrap();
        let err = run(&cfg, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "ingest", .. }), "{err}");
        assert!(err.to_string().contains("ingest"));
    }

    #[test]
    fn threads_env_is_validated() {
        // parsing only; the global pool may already exist
        std::env::set_var("NOTEMINE_THREADS", "zero");
        assert!(configure_threads().is_err());
        std::env::remove_var("NOTEMINE_THREADS");
        assert!(configure_threads().is_ok());
    }
}
