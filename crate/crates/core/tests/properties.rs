use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use notemine::discriminate::{chi2_sf, chi2_sf_even, chi_square};
use notemine::lda::{fit, DocStream, LdaConfig, SamplerMode, WeightMode};
use notemine::negation::{NegationDetector, TriggerKind, TriggerLexicon};
use notemine::section::{Normalizer, TokenizedDoc};
use notemine::select::npmi_for_terms;
use notemine::vectorize::{build_vocabulary, tfidf, IdfKind, TfidfVariant};

const WORDS: &[&str] = &[
    "no", "not", "without", "denies", "negative", "for", "change", "significant", "but", "however", "which",
    "ruled", "out", "unlikely", "seen", "edema", "effusion", "pleural", "focal", "consolidation", "mild", "the",
    "of", "acute", "process", "interval", "increase", "further", "gram", "resolved",
];

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(WORDS), 0..24).prop_map(|v| v.into_iter().map(String::from).collect())
}

fn docs(max_docs: usize) -> impl Strategy<Value = Vec<TokenizedDoc>> {
    prop::collection::vec(prop::collection::vec("[a-h]", 1..12), 1..max_docs).prop_map(|ds| {
        ds.into_iter()
            .enumerate()
            .map(|(i, toks)| TokenizedDoc {
                note_id: format!("n{i:03}"),
                sentences: vec![toks],
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn clean_is_idempotent_and_strips_symbols(tokens in prop::collection::vec("\\PC{0,12}", 0..10)) {
        let n = Normalizer::default();
        let once = n.clean(&tokens);
        prop_assert_eq!(n.clean(&once), once.clone());
        let twice = n.normalize(&n.normalize(&tokens));
        prop_assert_eq!(twice, n.normalize(&tokens));
        for t in &once {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(|c| c.is_alphabetic() || c == '_'), "{:?}", t);
            prop_assert!(!t.starts_with('_') && !t.ends_with('_'));
        }
    }

    #[test]
    fn negation_never_grows_and_fuses_cleanly(tokens in sentence(), window in 1usize..8) {
        let lexicon = TriggerLexicon::default();
        let terms: BTreeSet<String> = lexicon
            .category(TriggerKind::Termination)
            .iter()
            .filter(|p| p.len() == 1)
            .map(|p| p[0].clone())
            .collect();
        let det = NegationDetector::new(lexicon, window);
        let out = det.detect_and_fuse(&tokens);
        prop_assert!(out.len() <= tokens.len());
        prop_assert_eq!(&out, &det.detect_and_fuse(&tokens));
        let (again, spans) = det.detect(0, &tokens);
        prop_assert_eq!(&again, &out);
        for s in &spans {
            prop_assert!(s.fused_token.starts_with("no_"));
            prop_assert!(s.scope.1 - s.scope.0 <= window);
            prop_assert!(s.trigger.1 <= s.scope.0 || s.scope.1 <= s.trigger.0);
            for part in s.fused_token["no_".len()..].split('_') {
                prop_assert!(!terms.contains(part), "{} holds {}", s.fused_token, part);
            }
        }
        let fused: Vec<&String> = out.iter().filter(|t| t.contains('_')).collect();
        prop_assert_eq!(fused.len(), spans.len());
    }

    #[test]
    fn tfidf_vectors_have_unit_norm(ds in docs(30), idf in prop::sample::select(vec![IdfKind::Log2, IdfKind::Ln, IdfKind::SmoothLn])) {
        let (vocab, counts) = build_vocabulary(&ds).unwrap();
        let weighted = tfidf(&counts, &vocab, TfidfVariant { idf, normalize: true });
        for d in &weighted.docs {
            let w = d.weights.as_ref().unwrap();
            prop_assert!(w.iter().all(|&(_, x)| x > 0.0));
            prop_assert!(w.windows(2).all(|p| p[0].0 < p[1].0));
            if !w.is_empty() {
                let norm = w.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() <= 1e-9, "norm {}", norm);
            }
        }
        // corpus frequency is the sum of per-document counts
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for d in &ds {
            for t in d.tokens() {
                *freq.entry(t).or_default() += 1;
            }
        }
        for (t, f) in freq {
            let id = vocab.id(t).unwrap();
            let total: u64 = counts.docs.iter().flat_map(|d| &d.counts).filter(|c| c.0 == id).map(|c| c.1 as u64).sum();
            prop_assert_eq!(total, f);
        }
    }

    #[test]
    fn chi_square_scales_and_ignores_column_order(
        cells in prop::collection::vec((0u64..40, 1u64..60), 2..7),
        c in 1u64..6,
        rot in 0usize..7,
    ) {
        let present: Vec<u64> = cells.iter().map(|&(p, extra)| p.min(p + extra)).collect();
        let totals: Vec<u64> = cells.iter().map(|&(p, extra)| p + extra).collect();
        let base = chi_square(&present, &totals).unwrap();
        let scaled = chi_square(
            &present.iter().map(|x| x * c).collect::<Vec<_>>(),
            &totals.iter().map(|x| x * c).collect::<Vec<_>>(),
        )
        .unwrap();
        prop_assert!((scaled.chi2 - c as f64 * base.chi2).abs() <= 1e-9 * scaled.chi2.max(1.0));
        prop_assert_eq!(scaled.dof, base.dof);

        let r = rot % present.len();
        let mut p2 = present.clone();
        let mut t2 = totals.clone();
        p2.rotate_left(r);
        t2.rotate_left(r);
        let rotated = chi_square(&p2, &t2).unwrap();
        prop_assert!((rotated.chi2 - base.chi2).abs() <= 1e-9 * base.chi2.max(1.0));
        prop_assert!(base.chi2 >= 0.0 && base.p_value > 0.0 && base.p_value <= 1.0);
    }

    #[test]
    fn chi2_tail_is_monotone(a in 0.0f64..80.0, b in 0.0f64..80.0, dof in 1usize..12) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(chi2_sf(lo, dof) >= chi2_sf(hi, dof));
        prop_assert_eq!(chi2_sf(0.0, dof), 1.0);
    }

    #[test]
    fn even_dof_closed_form_matches_gamma(x in 0.0f64..120.0, half in 1usize..10) {
        let dof = 2 * half;
        let gamma = statrs::function::gamma::gamma_ur(half as f64, x / 2.0);
        let closed = chi2_sf_even(x, dof);
        prop_assert!((closed - gamma).abs() <= 1e-12, "x={} dof={} {} vs {}", x, dof, closed, gamma);
    }

    #[test]
    fn npmi_unchanged_when_corpus_is_duplicated(
        seqs in prop::collection::vec(prop::collection::vec(0u32..8, 1..15), 1..12),
        window in 2usize..6,
    ) {
        let topics = vec![vec![0, 1, 2], vec![3, 4, 5, 6]];
        let once = npmi_for_terms(&seqs, &topics, window);
        let doubled: Vec<Vec<u32>> = seqs.iter().chain(&seqs).cloned().collect();
        let twice = npmi_for_terms(&doubled, &topics, window);
        for (a, b) in once.per_topic.iter().zip(&twice.per_topic) {
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(a));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn snapshot_sampler_ignores_document_order(
        seqs in prop::collection::vec(prop::collection::vec(0u32..10, 1..20), 2..15),
        rot in 1usize..15,
        k in 1usize..5,
    ) {
        let streams: Vec<DocStream> = seqs
            .iter()
            .enumerate()
            .map(|(i, t)| DocStream { note_id: format!("n{i}"), tokens: t.clone() })
            .collect();
        let mut shuffled = streams.clone();
        shuffled.rotate_left(rot % streams.len());
        let config = LdaConfig {
            k,
            iterations: 30,
            burn_in: 10,
            thin: 5,
            weight_mode: WeightMode::Counts,
            sampler: SamplerMode::Snapshot,
            ..Default::default()
        };
        let a = fit(&streams, 10, &config).unwrap();
        let b = fit(&shuffled, 10, &config).unwrap();
        prop_assert_eq!(&a.phi, &b.phi);
        prop_assert_eq!(&a.topic_counts, &b.topic_counts);
        let theta_b: BTreeMap<&String, &Vec<f64>> = b.note_ids.iter().zip(&b.theta).collect();
        for (id, row) in a.note_ids.iter().zip(&a.theta) {
            prop_assert_eq!(row, theta_b[id]);
        }
    }

    #[test]
    fn funnel_only_shrinks(
        missing in 0.0f64..0.5,
        stop in 0.0f64..0.3,
        neg in 0.0f64..0.5,
        seed in 0u64..1000,
    ) {
        let spec = notemine::synth::GeneratorSpec {
            k_true: 3,
            docs_per_topic: 20,
            vocab_size: 45,
            missing_impression_rate: missing,
            stopword_note_rate: stop,
            negation_rate: neg,
            seed,
            ..Default::default()
        };
        let (notes, truth) = notemine::synth::generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        notemine::synth::write_corpus(&dir.path().join("corpus"), &notes, &truth).unwrap();
        let cfg = notemine::PipelineConfig::parse(
            "[input]\npath = corpus/notes.jsonl\n[sweep]\nenabled = false\n",
            dir.path(),
        )
        .unwrap();
        let out = dir.path().join("out");
        std::fs::create_dir_all(&out).unwrap();
        notemine::pipeline::stage_ingest(&cfg, &out).unwrap();
        notemine::pipeline::stage_preprocess(&cfg, &out).unwrap();
        let kept = notemine::pipeline::stage_negate(&cfg, &out).unwrap();
        let mut after_vectorize = 0;
        if kept > 0 {
            notemine::pipeline::stage_phrases(&cfg, &out).unwrap();
            after_vectorize = notemine::pipeline::stage_vectorize(&cfg, &out).unwrap();
        }
        let s = notemine::pipeline::corpus_stats(&out).unwrap();
        prop_assert!(s.total_notes >= s.notes_with_impression);
        prop_assert!(s.notes_with_impression >= s.notes_nonempty_after_preprocess);
        prop_assert!(s.notes_nonempty_after_preprocess >= after_vectorize);
        prop_assert_eq!(
            s.total_notes,
            s.notes_with_impression + s.dropped_note_ids.iter().filter(|d| d.1 == notemine::ingest::DropStage::NoImpression).count()
        );
        prop_assert_eq!(
            (s.total_notes, s.notes_with_impression, s.notes_nonempty_after_preprocess),
            (truth.funnel.total_notes, truth.funnel.notes_with_impression, truth.funnel.notes_nonempty_after_preprocess)
        );
    }
}
