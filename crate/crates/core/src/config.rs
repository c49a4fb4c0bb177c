//! Sectioned `key = value` pipeline configuration.
//!
//! ```text
//! [input]
//! path = notes.jsonl
//!
//! [lda]
//! seed = 42
//! ```
//!
//! `#` and `;` start comments. Relative paths resolve against the directory
//! holding the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discriminate::RankMode;
use crate::error::{Error, Result};
use crate::ingest::InputFormat;
use crate::lda::{AlphaPrior, LdaConfig, SamplerMode, WeightMode};
use crate::negation::DEFAULT_WINDOW;
use crate::select::{CoherenceMeasure, SweepSettings};
use crate::vectorize::{IdfKind, PhraseParams, TfidfVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<InputFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Replaces the bundled stop list when set.
    pub stoplist: Option<PathBuf>,
    /// Added on top of whichever stop list is active.
    pub extra_stopwords: Option<PathBuf>,
    pub section_labels: Vec<String>,
    pub split_hyphens: bool,
    pub stem: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegationConfig {
    pub enabled: bool,
    pub lexicon: Option<PathBuf>,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseConfig {
    pub enabled: bool,
    pub params: PhraseParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub variant: TfidfVariant,
    pub min_df: u32,
    pub max_df_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub enabled: bool,
    pub grid: Vec<usize>,
    pub settings: SweepSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminateConfig {
    pub alpha_level: f64,
    pub top_n: usize,
    pub mode: RankMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub labels: Option<PathBuf>,
    pub threshold: f64,
    pub representatives: usize,
    pub keywords: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub preprocess: PreprocessConfig,
    pub negation: NegationConfig,
    pub phrases: PhraseConfig,
    pub tfidf: TfidfConfig,
    pub lda: LdaConfig,
    pub sweep: SweepConfig,
    pub discriminate: DiscriminateConfig,
    pub report: ReportConfig,
    pub output_dir: PathBuf,
    /// Config text as read, for the manifest.
    #[serde(skip)]
    pub source: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: InputConfig { path: None, format: None },
            preprocess: PreprocessConfig {
                stoplist: None,
                extra_stopwords: None,
                section_labels: Vec::new(),
                split_hyphens: false,
                stem: false,
            },
            negation: NegationConfig {
                enabled: true,
                lexicon: None,
                window: DEFAULT_WINDOW,
            },
            phrases: PhraseConfig {
                enabled: true,
                params: PhraseParams::default(),
            },
            tfidf: TfidfConfig {
                variant: TfidfVariant::default(),
                min_df: 1,
                max_df_ratio: 1.0,
            },
            lda: LdaConfig::default(),
            sweep: SweepConfig {
                enabled: true,
                grid: (2..=10).collect(),
                settings: SweepSettings::default(),
            },
            discriminate: DiscriminateConfig {
                alpha_level: 0.01,
                top_n: 20,
                mode: RankMode::Marginal,
            },
            report: ReportConfig {
                labels: None,
                threshold: 0.80,
                representatives: 2,
                keywords: 10,
            },
            output_dir: PathBuf::from("out"),
            source: String::new(),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn parse_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

/// "2..10", "2..10..2" or "2, 3, 5".
pub fn parse_grid(v: &str) -> Option<Vec<usize>> {
    if let Some((a, rest)) = v.split_once("..") {
        let (b, step) = match rest.split_once("..") {
            Some((b, s)) => (b, s.trim().parse().ok()?),
            None => (rest, 1usize),
        };
        let (a, b): (usize, usize) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        if step == 0 || a > b {
            return None;
        }
        return Some((a..=b).step_by(step).collect());
    }
    parse_list(v).iter().map(|s| s.parse().ok()).collect()
}

fn strip_comment(line: &str) -> &str {
    let t = line.trim();
    if t.starts_with('#') || t.starts_with(';') {
        return "";
    }
    match t.find(" #") {
        Some(i) => t[..i].trim_end(),
        None => t,
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig {
            source: text.to_string(),
            ..Default::default()
        };
        let mut section = String::new();
        let mut kmin: Option<usize> = None;
        let mut kmax: Option<usize> = None;
        let mut output_set = false;
        for (no, raw) in text.lines().enumerate() {
            let line_no = no + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_ascii_lowercase();
                if !SECTIONS.contains(&section.as_str()) {
                    return Err(Error::Config(format!("line {line_no}: unknown section [{name}]")));
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {line_no}: expected key = value")));
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            let bad = || Error::Config(format!("line {line_no}: invalid value {value:?} for [{section}] {key}"));
            let path = || base_dir.join(value);
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| bad())?
                };
            }
            macro_rules! boolean {
                () => {
                    parse_bool(value).ok_or_else(bad)?
                };
            }
            match (section.as_str(), key.as_str()) {
                ("input", "path") => cfg.input.path = Some(path()),
                ("input", "format") => cfg.input.format = Some(InputFormat::from_str(value).map_err(|_| bad())?),
                ("preprocess", "stoplist") => cfg.preprocess.stoplist = Some(path()),
                ("preprocess", "extra_stopwords") => cfg.preprocess.extra_stopwords = Some(path()),
                ("preprocess", "section_labels") => cfg.preprocess.section_labels = parse_list(value),
                ("preprocess", "split_hyphens") => cfg.preprocess.split_hyphens = boolean!(),
                ("preprocess", "stem") => cfg.preprocess.stem = boolean!(),
                ("negation", "enabled") => cfg.negation.enabled = boolean!(),
                ("negation", "lexicon") => cfg.negation.lexicon = Some(path()),
                ("negation", "window") => cfg.negation.window = num!(),
                ("phrases", "enabled") => cfg.phrases.enabled = boolean!(),
                ("phrases", "min_count") => cfg.phrases.params.min_count = num!(),
                ("phrases", "threshold") => cfg.phrases.params.threshold = num!(),
                ("phrases", "passes") => cfg.phrases.params.passes = num!(),
                ("tfidf", "idf") => cfg.tfidf.variant.idf = IdfKind::from_str(value).map_err(|_| bad())?,
                ("tfidf", "normalize") => cfg.tfidf.variant.normalize = boolean!(),
                ("tfidf", "min_df") => cfg.tfidf.min_df = num!(),
                ("tfidf", "max_df_ratio") => cfg.tfidf.max_df_ratio = num!(),
                ("lda", "k") => cfg.lda.k = num!(),
                ("lda", "alpha") => cfg.lda.alpha = AlphaPrior::from_str(value).map_err(|_| bad())?,
                ("lda", "beta") => cfg.lda.beta = num!(),
                ("lda", "iterations") => cfg.lda.iterations = num!(),
                ("lda", "burn_in") => cfg.lda.burn_in = num!(),
                ("lda", "thin") => cfg.lda.thin = num!(),
                ("lda", "seed") => cfg.lda.seed = num!(),
                ("lda", "weight_mode") => cfg.lda.weight_mode = WeightMode::from_str(value).map_err(|_| bad())?,
                ("lda", "tfidf_scale") => cfg.lda.tfidf_scale = num!(),
                ("lda", "sampler") => cfg.lda.sampler = SamplerMode::from_str(value).map_err(|_| bad())?,
                ("sweep", "enabled") => cfg.sweep.enabled = boolean!(),
                ("sweep", "kmin") => kmin = Some(num!()),
                ("sweep", "kmax") => kmax = Some(num!()),
                ("sweep", "grid") => cfg.sweep.grid = parse_grid(value).ok_or_else(bad)?,
                ("sweep", "measure") => {
                    cfg.sweep.settings.measure = CoherenceMeasure::from_str(value).map_err(|_| bad())?
                }
                ("sweep", "top_n") => cfg.sweep.settings.top_n = num!(),
                ("sweep", "window") => cfg.sweep.settings.window = num!(),
                ("discriminate", "alpha") | ("discriminate", "alpha_level") => {
                    cfg.discriminate.alpha_level = num!()
                }
                ("discriminate", "top_n") => cfg.discriminate.top_n = num!(),
                ("discriminate", "mode") => cfg.discriminate.mode = RankMode::from_str(value).map_err(|_| bad())?,
                ("report", "labels") => cfg.report.labels = Some(path()),
                ("report", "threshold") => cfg.report.threshold = num!(),
                ("report", "representatives") => cfg.report.representatives = num!(),
                ("report", "keywords") => cfg.report.keywords = num!(),
                ("output", "dir") => {
                    cfg.output_dir = path();
                    output_set = true;
                }
                ("", _) => return Err(Error::Config(format!("line {line_no}: key {key:?} outside any section"))),
                _ => return Err(Error::Config(format!("line {line_no}: unknown key [{section}] {key}"))),
            }
        }
        if kmin.is_some() || kmax.is_some() {
            let lo = kmin.unwrap_or(2);
            let hi = kmax.unwrap_or(10);
            if lo > hi {
                return Err(Error::Config(format!("sweep kmin {lo} exceeds kmax {hi}")));
            }
            cfg.sweep.grid = (lo..=hi).collect();
        }
        if !output_set {
            cfg.output_dir = base_dir.join("out");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parameter checks that do not touch the file system.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.negation.window == 0 {
            return bad("negation window must be positive");
        }
        if !(self.tfidf.max_df_ratio > 0.0 && self.tfidf.max_df_ratio <= 1.0) {
            return bad("max_df_ratio must be in (0, 1]");
        }
        if self.sweep.enabled {
            if self.sweep.grid.is_empty() || self.sweep.grid.contains(&0) {
                return bad("sweep grid must be non-empty with positive K");
            }
            if self.sweep.grid.windows(2).any(|w| w[0] >= w[1]) {
                return bad("sweep grid must be strictly increasing");
            }
        }
        if !(0.0..=1.0).contains(&self.discriminate.alpha_level) {
            return bad("significance level must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.report.threshold) {
            return bad("representative threshold must be in [0, 1]");
        }
        let mut lda = self.lda;
        if self.sweep.enabled {
            lda.k = self.sweep.grid.first().copied().unwrap_or(1);
        }
        lda.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

const SECTIONS: &[&str] = &[
    "input",
    "preprocess",
    "negation",
    "phrases",
    "tfidf",
    "lda",
    "sweep",
    "discriminate",
    "report",
    "output",
];
