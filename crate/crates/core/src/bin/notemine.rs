use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use notemine::discriminate::RankMode;
use notemine::ingest::{funnel_report, InputFormat};
use notemine::lda::{AlphaPrior, SamplerMode, WeightMode};
use notemine::negation::negate_text;
use notemine::pipeline::{self, ReportSources, RunOptions};
use notemine::select::CoherenceMeasure;
use notemine::synth::{generate, write_corpus, GeneratorSpec};
use notemine::vectorize::IdfKind;
use notemine::{Error, PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "notemine", version, about = "Theme mining over clinical note impressions")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config supplying defaults for this stage.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Work directory holding the artifacts of earlier stages.
    #[arg(long, default_value = "out")]
    dir: PathBuf,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(p) => PipelineConfig::load(p),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load JSONL or CSV notes into the work directory.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Option<InputFormat>,
        #[command(flatten)]
        common: Common,
    },
    /// Extract impressions, split sentences and clean tokens.
    Preprocess {
        /// Stop list applied by the following `negate` run.
        #[arg(long)]
        stoplist: Option<PathBuf>,
        #[arg(long)]
        stem: bool,
        #[arg(long)]
        split_hyphens: bool,
        /// Additional section label (repeatable).
        #[arg(long = "section-label")]
        section_labels: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Fuse negated phrases, then drop stop words.
    Negate {
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stoplist: Option<PathBuf>,
        /// Rewrite one sentence and print the tokens instead of processing a corpus.
        #[arg(long)]
        text: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Detect phrases and build the vocabulary and TF-IDF corpus.
    Vectorize {
        #[arg(long)]
        no_phrases: bool,
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        idf: Option<IdfKind>,
        #[arg(long)]
        min_df: Option<u32>,
        #[arg(long)]
        max_df_ratio: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit one LDA model.
    Fit {
        /// Topic count; without it the sweep's selection is adopted when present.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        lda: LdaArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model per K and pick the most coherent.
    Sweep {
        #[arg(long)]
        kmin: Option<usize>,
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long)]
        measure: Option<CoherenceMeasure>,
        #[arg(long)]
        top_n: Option<usize>,
        #[command(flatten)]
        lda: LdaArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Rank discriminative terms by chi-square.
    Discriminate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long)]
        mode: Option<RankMode>,
        #[command(flatten)]
        common: Common,
    },
    /// Render tables from a fitted model and the artifacts beside it.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with ground truth.
    Synth {
        /// JSON generator spec; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage from one config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Skip stages whose inputs and outputs are unchanged.
        #[arg(long)]
        resume: bool,
    },
}

#[derive(Args)]
struct LdaArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    alpha: Option<AlphaPrior>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    weight_mode: Option<WeightMode>,
    #[arg(long)]
    sampler: Option<SamplerMode>,
}

impl LdaArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let l = &mut cfg.lda;
        if let Some(v) = self.seed {
            l.seed = v;
        }
        if let Some(v) = self.iterations {
            l.iterations = v;
            l.burn_in = l.burn_in.min(v);
        }
        if let Some(v) = self.burn_in {
            l.burn_in = v;
        }
        if let Some(v) = self.alpha {
            l.alpha = v;
        }
        if let Some(v) = self.beta {
            l.beta = v;
        }
        if let Some(v) = self.weight_mode {
            l.weight_mode = v;
        }
        if let Some(v) = self.sampler {
            l.sampler = v;
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest { input, format, common } => {
            let mut cfg = common.load()?;
            cfg.input.path = Some(input);
            cfg.input.format = format.or(cfg.input.format);
            ensure_dir(&common.dir)?;
            let n = pipeline::stage_ingest(&cfg, &common.dir).map_err(|e| e.in_stage("ingest"))?;
            println!("loaded {n} notes");
        }
        Command::Preprocess {
            stoplist,
            stem,
            split_hyphens,
            section_labels,
            common,
        } => {
            let mut cfg = common.load()?;
            cfg.preprocess.stem |= stem;
            cfg.preprocess.split_hyphens |= split_hyphens;
            cfg.preprocess.section_labels.extend(section_labels);
            if let Some(p) = stoplist.or(cfg.preprocess.stoplist.clone()) {
                let dst = common.dir.join(pipeline::STOPLIST);
                fs::copy(&p, &dst).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            }
            let n = pipeline::stage_preprocess(&cfg, &common.dir).map_err(|e| e.in_stage("preprocess"))?;
            print!("{}", funnel_report(&pipeline::corpus_stats(&common.dir)?));
            log::info!("{n} notes carry an impression");
        }
        Command::Negate {
            lexicon,
            window,
            stoplist,
            text,
            common,
        } => {
            let mut cfg = common.load()?;
            if lexicon.is_some() {
                cfg.negation.lexicon = lexicon;
            }
            if let Some(w) = window {
                cfg.negation.window = w;
            }
            if stoplist.is_some() {
                cfg.preprocess.stoplist = stoplist;
            }
            if let Some(t) = text {
                let detector = pipeline::build_detector(&cfg)?;
                println!("{}", negate_text(&detector, &t).join(" "));
                return Ok(());
            }
            pipeline::stage_negate(&cfg, &common.dir).map_err(|e| e.in_stage("negate"))?;
            print!("{}", funnel_report(&pipeline::corpus_stats(&common.dir)?));
        }
        Command::Vectorize {
            no_phrases,
            min_count,
            threshold,
            idf,
            min_df,
            max_df_ratio,
            common,
        } => {
            let mut cfg = common.load()?;
            cfg.phrases.enabled &= !no_phrases;
            if let Some(v) = min_count {
                cfg.phrases.params.min_count = v;
            }
            if let Some(v) = threshold {
                cfg.phrases.params.threshold = v;
            }
            if let Some(v) = idf {
                cfg.tfidf.variant.idf = v;
            }
            if let Some(v) = min_df {
                cfg.tfidf.min_df = v;
            }
            if let Some(v) = max_df_ratio {
                cfg.tfidf.max_df_ratio = v;
            }
            pipeline::stage_phrases(&cfg, &common.dir).map_err(|e| e.in_stage("phrases"))?;
            let n = pipeline::stage_vectorize(&cfg, &common.dir).map_err(|e| e.in_stage("vectorize"))?;
            println!("{n} documents vectorized");
        }
        Command::Fit { k, lda, common } => {
            let mut cfg = common.load()?;
            lda.apply(&mut cfg);
            match k {
                Some(k) => {
                    cfg.lda.k = k;
                    cfg.sweep.enabled = false;
                }
                None => {
                    cfg.sweep.enabled = common.dir.join(pipeline::SWEEP_DIR).join(pipeline::SWEEP_JSON).exists();
                }
            }
            let model = pipeline::stage_fit(&cfg, &common.dir).map_err(|e| e.in_stage("fit"))?;
            println!(
                "fitted K = {} over {} documents and {} terms",
                model.num_topics(),
                model.num_docs(),
                model.vocab_size()
            );
        }
        Command::Sweep {
            kmin,
            kmax,
            measure,
            top_n,
            lda,
            common,
        } => {
            let mut cfg = common.load()?;
            lda.apply(&mut cfg);
            let lo = kmin.unwrap_or(*cfg.sweep.grid.first().unwrap_or(&2));
            let hi = kmax.unwrap_or(*cfg.sweep.grid.last().unwrap_or(&10));
            if lo == 0 || lo > hi {
                return Err(Error::InvalidArgument(format!("K range {lo}..{hi}")));
            }
            cfg.sweep.grid = (lo..=hi).collect();
            if let Some(m) = measure {
                cfg.sweep.settings.measure = m;
            }
            if let Some(n) = top_n {
                cfg.sweep.settings.top_n = n;
            }
            let result = pipeline::stage_sweep(&cfg, &common.dir).map_err(|e| e.in_stage("sweep"))?;
            print!("{}", result.to_tsv());
            println!("selected_k\t{}", result.selected_k);
        }
        Command::Discriminate {
            model,
            alpha,
            top_n,
            mode,
            common,
        } => {
            let mut cfg = common.load()?;
            if let Some(a) = alpha {
                cfg.discriminate.alpha_level = a;
            }
            if let Some(n) = top_n {
                cfg.discriminate.top_n = n;
            }
            if let Some(m) = mode {
                cfg.discriminate.mode = m;
            }
            let model = model.unwrap_or_else(|| common.dir.join(pipeline::MODEL));
            let ranking =
                pipeline::stage_discriminate(&cfg, &common.dir, &model).map_err(|e| e.in_stage("discriminate"))?;
            print!("{}", notemine::report::table2_tsv(&ranking, None));
        }
        Command::Report {
            model,
            out,
            labels,
            config,
        } => {
            let cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            let dir = model.parent().map(Path::to_path_buf).unwrap_or_default();
            let src = ReportSources::from_dir(&dir, labels.or(cfg.report.labels.clone()));
            let summary = pipeline::stage_report(&cfg, &model, &src, &out).map_err(|e| e.in_stage("report"))?;
            if let Some(t) = summary.topic_of_interest {
                println!("topic of interest: {t}");
            }
            println!("report written to {}", out.display());
        }
        Command::Synth { spec, out } => {
            let spec = match spec {
                Some(p) => GeneratorSpec::load(&p)?,
                None => GeneratorSpec::default(),
            };
            let (notes, truth) = generate(&spec)?;
            write_corpus(&out, &notes, &truth)?;
            println!("{} notes written to {}", notes.len(), out.display());
        }
        Command::Run { config, resume } => {
            let cfg = PipelineConfig::load(&config)?;
            let outcome = pipeline::run(&cfg, &RunOptions { resume })?;
            if !outcome.skipped.is_empty() {
                println!("skipped (up to date): {}", outcome.skipped.join(", "));
            }
            print!("{}", funnel_report(&outcome.summary.funnel));
            println!("topics: {}", outcome.summary.num_topics);
            if let Some(t) = outcome.summary.topic_of_interest {
                println!("topic of interest: {t}");
            }
            println!("artifacts in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = pipeline::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
