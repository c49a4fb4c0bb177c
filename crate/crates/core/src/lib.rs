//! Theme mining over radiology note impressions: sectioning, negation
//! fusion, TF-IDF, LDA topic modelling, coherence-based selection of the
//! topic count and chi-square ranking of discriminative words.

pub mod config;
pub mod discriminate;
pub mod error;
pub mod ingest;
pub mod lda;
pub mod negation;
pub mod pipeline;
pub mod report;
pub mod section;
pub mod select;
pub mod synth;
pub mod vectorize;

pub use config::PipelineConfig;
pub use error::{Error, Result};
