//! NegEx-style negation detection with phrase fusion.
//!
//! A negated phrase is rewritten as a single token: `no acute cardiopulmonary
//! process` becomes `no_acute_cardiopulmonary_process`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::section::Stoplist;

const BUNDLED_LEXICON: &str = include_str!("../data/negex_triggers.txt");

/// Triggers that are dropped once their scope is fused.
const BARE_NEGATORS: &[&str] = &["no", "without"];

pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriggerKind {
    Pre,
    Post,
    Pseudo,
    Termination,
}

impl TriggerKind {
    const ALL: [TriggerKind; 4] = [
        TriggerKind::Pre,
        TriggerKind::Post,
        TriggerKind::Pseudo,
        TriggerKind::Termination,
    ];

    fn header(self) -> &'static str {
        match self {
            TriggerKind::Pre => "[PRE]",
            TriggerKind::Post => "[POST]",
            TriggerKind::Pseudo => "[PSEUDO]",
            TriggerKind::Termination => "[TERM]",
        }
    }

    fn from_header(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.header().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerLexicon {
    pub pre_negation: Vec<Vec<String>>,
    pub post_negation: Vec<Vec<String>>,
    pub pseudo_negation: Vec<Vec<String>>,
    pub termination: Vec<Vec<String>>,
}

impl Default for TriggerLexicon {
    fn default() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is valid")
    }
}

impl TriggerLexicon {
    pub fn bundled_text() -> &'static str {
        BUNDLED_LEXICON
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parse the `[PRE]` / `[POST]` / `[PSEUDO]` / `[TERM]` format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lists: [Vec<Vec<String>>; 4] = Default::default();
        let mut current: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') || line.ends_with(':') {
                let kind = TriggerKind::from_header(line).ok_or_else(|| {
                    Error::Lexicon(format!("line {}: unknown category {line:?}", idx + 1))
                })?;
                current = Some(TriggerKind::ALL.iter().position(|k| *k == kind).unwrap());
                continue;
            }
            let Some(slot) = current else {
                return Err(Error::Lexicon(format!(
                    "line {}: phrase {line:?} before any category header",
                    idx + 1
                )));
            };
            let phrase: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
            if !lists[slot].contains(&phrase) {
                lists[slot].push(phrase);
            }
        }
        for (kind, list) in TriggerKind::ALL.iter().zip(&lists) {
            if list.is_empty() {
                return Err(Error::Lexicon(format!("category {} is empty", kind.header())));
            }
        }
        let [pre_negation, post_negation, pseudo_negation, termination] = lists;
        Ok(TriggerLexicon {
            pre_negation,
            post_negation,
            pseudo_negation,
            termination,
        })
    }

    pub fn category(&self, kind: TriggerKind) -> &[Vec<String>] {
        match kind {
            TriggerKind::Pre => &self.pre_negation,
            TriggerKind::Post => &self.post_negation,
            TriggerKind::Pseudo => &self.pseudo_negation,
            TriggerKind::Termination => &self.termination,
        }
    }

    /// Canonical text form: categories in fixed order, phrases in stored order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, kind) in TriggerKind::ALL.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "{}", kind.header());
            for p in self.category(*kind) {
                let _ = writeln!(out, "{}", p.join(" "));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Every word occurring in any trigger phrase.
    pub fn words(&self) -> HashSet<String> {
        TriggerKind::ALL
            .iter()
            .flat_map(|k| self.category(*k))
            .flatten()
            .cloned()
            .collect()
    }

    fn longest_match(&self, kind: TriggerKind, tokens: &[String], at: usize) -> usize {
        self.category(kind)
            .iter()
            .filter(|p| {
                at + p.len() <= tokens.len() && p.iter().zip(&tokens[at..]).all(|(a, b)| a == b)
            })
            .map(Vec::len)
            .max()
            .unwrap_or(0)
    }
}

/// A fused negation found in one sentence. Ranges index the input tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegationSpan {
    pub sentence: usize,
    pub trigger: (usize, usize),
    pub scope: (usize, usize),
    pub fused_token: String,
}

#[derive(Debug, Clone)]
pub struct NegationDetector {
    pub lexicon: TriggerLexicon,
    pub window: usize,
    /// Function words trimmed from either edge of a scope before fusion.
    pub edge_stopwords: Stoplist,
}

impl Default for NegationDetector {
    fn default() -> Self {
        NegationDetector::new(TriggerLexicon::default(), DEFAULT_WINDOW)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Plain,
    Barrier,
}

impl NegationDetector {
    pub fn new(lexicon: TriggerLexicon, window: usize) -> Self {
        NegationDetector {
            lexicon,
            window,
            edge_stopwords: Stoplist::english(),
        }
    }

    pub fn detect_and_fuse(&self, sentence: &[String]) -> Vec<String> {
        self.detect(0, sentence).0
    }

    /// Returns the rewritten sentence together with the spans that were fused.
    ///
    /// Scanning is left to right. At each position pseudo triggers are tried
    /// first, then pre and post triggers (longest match wins; a pseudo match
    /// at least as long suppresses the others). A pre trigger scopes forward up
    /// to the window, stopping at a termination term or any other trigger; a
    /// post trigger scopes backward over untouched tokens the same way.
    pub fn detect(&self, sentence_idx: usize, tokens: &[String]) -> (Vec<String>, Vec<NegationSpan>) {
        let n = tokens.len();
        let mut out: Vec<(String, Slot, usize)> = Vec::with_capacity(n);
        let mut spans = Vec::new();
        let mut i = 0;
        while i < n {
            let pseudo = self.lexicon.longest_match(TriggerKind::Pseudo, tokens, i);
            let pre = self.lexicon.longest_match(TriggerKind::Pre, tokens, i);
            let post = self.lexicon.longest_match(TriggerKind::Post, tokens, i);
            let term = self.lexicon.longest_match(TriggerKind::Termination, tokens, i);

            if pseudo > 0 && pseudo >= pre.max(post) {
                for t in &tokens[i..i + pseudo] {
                    out.push((t.clone(), Slot::Barrier, i));
                }
                i += pseudo;
                continue;
            }

            if pre > 0 && pre >= post {
                let scope_start = i + pre;
                let mut scope_end = scope_start;
                while scope_end < n
                    && scope_end - scope_start < self.window
                    && !self.is_trigger_at(tokens, scope_end)
                {
                    scope_end += 1;
                }
                let (s, e) = self.trim_edges(tokens, scope_start, scope_end);
                if s == e {
                    for t in &tokens[i..scope_start] {
                        out.push((t.clone(), Slot::Barrier, i));
                    }
                    i = scope_start;
                    continue;
                }
                let bare = pre == 1 && BARE_NEGATORS.contains(&tokens[i].as_str());
                if !bare {
                    for t in &tokens[i..scope_start] {
                        out.push((t.clone(), Slot::Barrier, i));
                    }
                }
                // leading function words between trigger and concept pass through
                for t in &tokens[scope_start..s] {
                    out.push((t.clone(), Slot::Barrier, i));
                }
                let fused = fuse(&tokens[s..e]);
                out.push((fused.clone(), Slot::Barrier, s));
                spans.push(NegationSpan {
                    sentence: sentence_idx,
                    trigger: (i, scope_start),
                    scope: (s, e),
                    fused_token: fused,
                });
                i = e;
                continue;
            }

            if post > 0 {
                // untouched tokens directly before the trigger, within the window
                let mut take = 0;
                while take < out.len() && take < self.window {
                    let (_, slot, _) = &out[out.len() - 1 - take];
                    if *slot != Slot::Plain {
                        break;
                    }
                    take += 1;
                }
                let start_in = i - take;
                let (s, e) = self.trim_edges(tokens, start_in, i);
                if s < e {
                    out.truncate(out.len() - (i - s));
                    let fused = fuse(&tokens[s..e]);
                    out.push((fused.clone(), Slot::Barrier, s));
                    for t in &tokens[e..i] {
                        out.push((t.clone(), Slot::Barrier, e));
                    }
                    spans.push(NegationSpan {
                        sentence: sentence_idx,
                        trigger: (i, i + post),
                        scope: (s, e),
                        fused_token: fused,
                    });
                }
                for t in &tokens[i..i + post] {
                    out.push((t.clone(), Slot::Barrier, i));
                }
                i += post;
                continue;
            }

            if term > 0 {
                for t in &tokens[i..i + term] {
                    out.push((t.clone(), Slot::Barrier, i));
                }
                i += term;
                continue;
            }

            out.push((tokens[i].clone(), Slot::Plain, i));
            i += 1;
        }
        (out.into_iter().map(|(t, _, _)| t).collect(), spans)
    }

    fn is_trigger_at(&self, tokens: &[String], at: usize) -> bool {
        TriggerKind::ALL
            .iter()
            .any(|k| self.lexicon.longest_match(*k, tokens, at) > 0)
    }

    fn trim_edges(&self, tokens: &[String], mut s: usize, mut e: usize) -> (usize, usize) {
        while s < e && self.edge_stopwords.contains(&tokens[s]) {
            s += 1;
        }
        while e > s && self.edge_stopwords.contains(&tokens[e - 1]) {
            e -= 1;
        }
        (s, e)
    }
}

fn fuse(scope: &[String]) -> String {
    let mut s = String::from("no");
    for t in scope {
        s.push('_');
        s.push_str(t);
    }
    s
}

/// Convenience: split on whitespace and lowercase, then fuse.
pub fn negate_text(detector: &NegationDetector, sentence: &str) -> Vec<String> {
    let tokens: Vec<String> = sentence.split_whitespace().map(str::to_lowercase).collect();
    detector.detect_and_fuse(&tokens)
}
